#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "psychic/error.hpp"
#include "psychic/uri.hpp"

namespace psychic {

/// One DBLP-QuAD question/SPARQL pair. Only `id` and `question` are always
/// present; everything else is absent (not empty) for question-only files.
struct QuadRecord {
    std::string id;
    std::string question;
    std::optional<std::string> paraphrased_question;
    std::optional<std::string> query;
    std::optional<std::string> query_type;
    std::optional<std::string> template_id;
    std::optional<std::vector<std::string>> entities;
    std::optional<std::vector<std::string>> relations;
    std::optional<bool> temporal;
    std::optional<bool> held_out;

    [[nodiscard]] bool fully_populated() const noexcept {
        return paraphrased_question && query && query_type && template_id && entities && relations &&
               temporal && held_out;
    }

    friend bool operator==(const QuadRecord&, const QuadRecord&) = default;
};

enum class LoadMode { full, questions_only };

enum class Phrasing { question, paraphrase };

/// One model input: either the question or the paraphrase of a record.
/// `source` points into the record vector passed to expand_paraphrases and
/// must not outlive it.
struct QAInstance {
    std::string instance_id;
    std::string question;
    Phrasing phrasing = Phrasing::question;
    const QuadRecord* source = nullptr;
};

inline constexpr std::string_view kQuestionSuffix = "#q";
inline constexpr std::string_view kParaphraseSuffix = "#p";

/// Record id of an instance id produced by expand_paraphrases.
[[nodiscard]] inline std::string record_id_of(std::string_view instance_id) {
    if (instance_id.ends_with(kQuestionSuffix) || instance_id.ends_with(kParaphraseSuffix))
        instance_id.remove_suffix(2);
    return std::string(instance_id);
}

struct SplitManifest {
    std::size_t train = 0;
    std::size_t valid = 0;
    std::size_t test = 0;

    static constexpr SplitManifest canonical() { return {7000, 1000, 2000}; }

    /// Human-readable notes for every split whose size differs from the
    /// DBLP-QuAD release. Non-canonical sizes are allowed.
    [[nodiscard]] std::vector<std::string> warnings() const {
        std::vector<std::string> out;
        constexpr auto ref = canonical();
        auto check = [&](const char* name, std::size_t got, std::size_t want) {
            if (got != want)
                out.push_back(std::string(name) + " split has " + std::to_string(got) +
                              " records; canonical DBLP-QuAD has " + std::to_string(want));
        };
        check("train", train, ref.train);
        check("valid", valid, ref.valid);
        check("test", test, ref.test);
        return out;
    }
};

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline std::string record_location(std::size_t index, const nlohmann::json& obj) {
    std::string loc = "record " + std::to_string(index);
    if (obj.is_object()) {
        auto it = obj.find("id");
        if (it != obj.end() && it->is_string()) loc += " (id " + it->get<std::string>() + ")";
    }
    return loc;
}

// Accepts a plain string or the DBLP-QuAD wrapper object
// ({"string": ...} for questions, {"sparql": ...} for queries).
inline std::optional<std::string> text_field(const nlohmann::json& obj, const char* key,
                                             const char* wrapper_key, const std::string& loc) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_object()) {
        auto inner = it->find(wrapper_key);
        if (inner != it->end() && inner->is_string()) return inner->get<std::string>();
    }
    throw MalformedRecord(loc, key, "expected a string");
}

inline std::optional<bool> bool_field(const nlohmann::json& obj, const char* key, const std::string& loc) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (it->is_boolean()) return it->get<bool>();
    if (it->is_string()) {
        auto s = it->get<std::string>();
        if (s == "true") return true;
        if (s == "false") return false;
    }
    throw MalformedRecord(loc, key, "expected a boolean");
}

inline std::optional<std::vector<std::string>> uri_list_field(const nlohmann::json& obj, const char* key,
                                                              const std::string& id, const std::string& loc) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_array()) throw MalformedRecord(loc, key, "expected an array of strings");
    std::vector<std::string> out;
    out.reserve(it->size());
    for (const auto& v : *it) {
        if (!v.is_string()) throw MalformedRecord(loc, key, "expected an array of strings");
        auto s = v.get<std::string>();
        if (!is_entity_uri(s)) {
            if (std::string_view(key) == "entities") throw InvalidEntityUri(id, s);
            throw MalformedRecord(loc, key, "invalid URI '" + s + "'");
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace detail

/// Parses one record object. `index` only feeds error locations.
[[nodiscard]] inline QuadRecord parse_quad_record(const nlohmann::json& obj, LoadMode mode, std::size_t index = 0) {
    const auto loc = detail::record_location(index, obj);
    if (!obj.is_object()) throw MalformedRecord(loc, "<record>", "expected an object");

    QuadRecord r;
    auto id_it = obj.find("id");
    if (id_it == obj.end() || id_it->is_null()) throw MalformedRecord(loc, "id", "missing");
    if (id_it->is_string())
        r.id = id_it->get<std::string>();
    else if (id_it->is_number_integer())
        r.id = std::to_string(id_it->get<long long>());
    else
        throw MalformedRecord(loc, "id", "expected a string");
    if (r.id.empty()) throw MalformedRecord(loc, "id", "empty");

    auto question = detail::text_field(obj, "question", "string", loc);
    if (!question) throw MalformedRecord(loc, "question", "missing");
    r.question = std::move(*question);
    r.paraphrased_question = detail::text_field(obj, "paraphrased_question", "string", loc);
    r.query = detail::text_field(obj, "query", "sparql", loc);
    r.query_type = detail::text_field(obj, "query_type", "string", loc);
    r.template_id = detail::text_field(obj, "template_id", "string", loc);
    r.entities = detail::uri_list_field(obj, "entities", r.id, loc);
    r.relations = detail::uri_list_field(obj, "relations", r.id, loc);
    r.temporal = detail::bool_field(obj, "temporal", loc);
    r.held_out = detail::bool_field(obj, "held_out", loc);

    if (mode == LoadMode::full) {
        auto require = [&](bool present, const char* field) {
            if (!present) throw MalformedRecord(loc, field, "missing");
        };
        require(r.paraphrased_question.has_value(), "paraphrased_question");
        require(r.query.has_value(), "query");
        require(r.query_type.has_value(), "query_type");
        require(r.template_id.has_value(), "template_id");
        require(r.entities.has_value(), "entities");
        require(r.relations.has_value(), "relations");
        require(r.temporal.has_value(), "temporal");
        require(r.held_out.has_value(), "held_out");
    }
    if (r.query && r.query->empty()) throw MalformedRecord(loc, "query", "empty");
    return r;
}

/// Parses a document holding either a top-level record array or an object
/// with a `questions` array.
[[nodiscard]] inline std::vector<QuadRecord> parse_quad_records(const nlohmann::json& doc, LoadMode mode) {
    const nlohmann::json* items = &doc;
    if (doc.is_object()) {
        auto it = doc.find("questions");
        if (it == doc.end()) throw MalformedRecord("document", "questions", "missing");
        items = &*it;
    }
    if (!items->is_array()) throw MalformedRecord("document", "questions", "expected an array");

    std::vector<QuadRecord> out;
    out.reserve(items->size());
    std::unordered_set<std::string> seen;
    std::size_t index = 0;
    for (const auto& obj : *items) {
        auto rec = parse_quad_record(obj, mode, index++);
        if (!seen.insert(rec.id).second) throw DuplicateId(rec.id);
        out.push_back(std::move(rec));
    }
    return out;
}

[[nodiscard]] inline std::vector<QuadRecord> load_quad_records(const std::string& path, LoadMode mode) {
    std::ifstream in(path);
    if (!in) throw MalformedRecord(path, "<file>", "cannot open");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedRecord(path + " offset " + std::to_string(e.byte), "<document>", "invalid JSON");
    }
    return parse_quad_records(doc, mode);
}

/// Canonical serialization: plain strings, keys in dataset field order,
/// absent fields omitted.
[[nodiscard]] inline nlohmann::ordered_json to_json(const QuadRecord& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["question"] = r.question;
    if (r.paraphrased_question) j["paraphrased_question"] = *r.paraphrased_question;
    if (r.query) j["query"] = *r.query;
    if (r.query_type) j["query_type"] = *r.query_type;
    if (r.template_id) j["template_id"] = *r.template_id;
    if (r.entities) j["entities"] = *r.entities;
    if (r.relations) j["relations"] = *r.relations;
    if (r.temporal) j["temporal"] = *r.temporal;
    if (r.held_out) j["held_out"] = *r.held_out;
    return j;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const std::vector<QuadRecord>& records) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : records) arr.push_back(to_json(r));
    return arr;
}

/// Doubles the records into question and paraphrase instances, in record
/// order. Identical phrasings are kept as two instances.
[[nodiscard]] inline std::vector<QAInstance> expand_paraphrases(const std::vector<QuadRecord>& records) {
    std::vector<QAInstance> out;
    out.reserve(records.size() * 2);
    for (const auto& r : records) {
        if (!r.paraphrased_question) throw MissingParaphrase(r.id);
        out.push_back({r.id + std::string(kQuestionSuffix), r.question, Phrasing::question, &r});
        out.push_back({r.id + std::string(kParaphraseSuffix), *r.paraphrased_question, Phrasing::paraphrase, &r});
    }
    return out;
}

} // namespace psychic
