#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "psychic/dataset.hpp"
#include "psychic/error.hpp"
#include "psychic/sanitizer.hpp"
#include "psychic/sparql_client.hpp"

namespace psychic {

struct SetScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    friend bool operator==(const SetScore&, const SetScore&) = default;
};

/// Set precision/recall/F1. Two empty sets are a perfect match; one empty
/// side scores zero.
[[nodiscard]] inline SetScore score_question(const std::set<std::string>& predicted, const std::set<std::string>& gold) {
    if (predicted.empty() && gold.empty()) return {1.0, 1.0, 1.0};
    std::size_t hits = 0;
    for (const auto& p : predicted) hits += gold.count(p);
    const double p = predicted.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(predicted.size());
    const double r = gold.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(gold.size());
    const double f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    return {p, r, f1};
}

enum class Task { qa, el };

[[nodiscard]] inline std::string_view to_string(Task t) noexcept { return t == Task::qa ? "qa" : "el"; }

struct QuestionScore {
    std::string instance_id;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Task task = Task::qa;
};

struct EvalCounts {
    std::size_t answered = 0;
    std::size_t degraded = 0;
    std::size_t total = 0;

    friend bool operator==(const EvalCounts&, const EvalCounts&) = default;
};

struct EvalReport {
    std::vector<QuestionScore> per_question;
    double f1_qa = 0.0; // percent, truncated to 2 decimals
    double f1_el = 0.0;
    EvalCounts counts;
};

/// What the pipeline produced for one instance.
struct InstancePrediction {
    std::string instance_id;
    /// Absent when the query was invalid, refused or failed to execute.
    std::optional<AnswerSet> answer;
    std::vector<std::string> entities;
    bool query_degraded = false;
    bool entities_degraded = false;
};

/// Gold side of one record: the gold answer set and entity URIs.
struct GoldRecord {
    AnswerSet answers;
    std::vector<std::string> entities;
};

using GoldIndex = std::unordered_map<std::string, GoldRecord>;

/// Percentage with two decimals, truncated (not rounded).
[[nodiscard]] inline double truncate_percent(double mean) {
    return std::floor(mean * 10000.0 + 1e-6) / 100.0;
}

[[nodiscard]] inline std::string format_percent(double pct) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05.2f", pct);
    return buf;
}

namespace detail {

inline std::set<std::string> canonical_entity_set(const std::vector<std::string>& entities) {
    std::set<std::string> out;
    for (const auto& e : entities)
        for (auto& u : sanitize_entities(e)) out.insert(std::move(u));
    return out;
}

} // namespace detail

/// Macro-averaged QA and EL scores. Instances join to gold through their
/// record id; degraded tasks score zero.
[[nodiscard]] inline EvalReport evaluate_run(const std::vector<InstancePrediction>& predictions, const GoldIndex& gold) {
    EvalReport report;
    double qa_sum = 0.0, el_sum = 0.0;
    for (const auto& pred : predictions) {
        auto it = gold.find(record_id_of(pred.instance_id));
        if (it == gold.end()) throw JoinError(pred.instance_id);
        const auto& g = it->second;

        SetScore qa{};
        if (pred.answer && !pred.query_degraded) qa = score_question(pred.answer->comparable(), g.answers.comparable());
        SetScore el{};
        if (!pred.entities_degraded)
            el = score_question(detail::canonical_entity_set(pred.entities), detail::canonical_entity_set(g.entities));

        report.per_question.push_back({pred.instance_id, qa.precision, qa.recall, qa.f1, Task::qa});
        report.per_question.push_back({pred.instance_id, el.precision, el.recall, el.f1, Task::el});
        qa_sum += qa.f1;
        el_sum += el.f1;
        if (pred.answer) ++report.counts.answered;
        if (pred.query_degraded || pred.entities_degraded) ++report.counts.degraded;
        ++report.counts.total;
    }
    if (!predictions.empty()) {
        const auto n = static_cast<double>(predictions.size());
        report.f1_qa = truncate_percent(qa_sum / n);
        report.f1_el = truncate_percent(el_sum / n);
    }
    return report;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["f1_qa"] = r.f1_qa;
    j["f1_el"] = r.f1_el;
    j["counts"] = {{"answered", r.counts.answered}, {"degraded", r.counts.degraded}, {"total", r.counts.total}};
    auto rows = nlohmann::ordered_json::array();
    for (const auto& q : r.per_question)
        rows.push_back({{"instance_id", q.instance_id},
                        {"task", to_string(q.task)},
                        {"precision", q.precision},
                        {"recall", q.recall},
                        {"f1", q.f1}});
    j["per_question"] = std::move(rows);
    return j;
}

[[nodiscard]] inline std::string to_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "instance_id,task,precision,recall,f1\n";
    for (const auto& q : r.per_question)
        out << q.instance_id << ',' << to_string(q.task) << ',' << q.precision << ',' << q.recall << ',' << q.f1
            << '\n';
    return out.str();
}

[[nodiscard]] inline std::string summary_table(const EvalReport& r) {
    std::ostringstream out;
    out << "+-------+--------+--------+\n"
        << "| Phase | F1-QA  | F1-EL  |\n"
        << "+-------+--------+--------+\n";
    char line[64];
    std::snprintf(line, sizeof line, "| run   | %6s | %6s |\n", format_percent(r.f1_qa).c_str(),
                  format_percent(r.f1_el).c_str());
    out << line << "+-------+--------+--------+\n"
        << "answered " << r.counts.answered << " / degraded " << r.counts.degraded << " / total "
        << r.counts.total << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Gold answers
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a of the query text, as 16 lowercase hex digits.
[[nodiscard]] inline std::string query_hash(std::string_view query) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : query) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Gold answer sets keyed by query hash, persisted as JSONL
/// {"query_hash", "kind", "values", "truth"}.
class GoldAnswerCache {
public:
    [[nodiscard]] std::optional<AnswerSet> find(std::string_view query) const {
        auto it = entries_.find(query_hash(query));
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void put(std::string_view query, AnswerSet answers) { entries_[query_hash(query)] = std::move(answers); }

    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

    static GoldAnswerCache load(const std::string& path) {
        GoldAnswerCache cache;
        std::ifstream in(path);
        if (!in) return cache;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (detail::trim(line).empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("query_hash"))
                throw ResultParseError(path + " line " + std::to_string(n));
            cache.entries_[j["query_hash"].get<std::string>()] = answer_set_from_json(j);
        }
        return cache;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        for (const auto& [hash, a] : entries_) {
            nlohmann::ordered_json j;
            j["query_hash"] = hash;
            auto answer = to_json(a);
            for (auto& [k, v] : answer.items()) j[k] = v;
            out << j.dump() << '\n';
        }
    }

private:
    std::map<std::string, AnswerSet> entries_;
};

/// Gold answers for every record with a query: from the cache first, then
/// from the endpoint (results are added to the cache). Throws
/// MissingGoldAnswers when neither source can answer.
[[nodiscard]] inline GoldIndex resolve_gold(const std::vector<QuadRecord>& records, SparqlClient* client,
                                            GoldAnswerCache* cache) {
    GoldIndex index;
    for (const auto& r : records) {
        if (!r.query || !r.entities) throw MissingGoldAnswers(r.id);
        std::optional<AnswerSet> answers;
        if (cache) answers = cache->find(*r.query);
        if (!answers && client) {
            try {
                answers = client->execute(*r.query);
            } catch (const Error& e) {
                throw MissingGoldAnswers(r.id + " (" + e.what() + ")");
            }
            if (cache) cache->put(*r.query, *answers);
        }
        if (!answers) throw MissingGoldAnswers(r.id);
        index.emplace(r.id, GoldRecord{std::move(*answers), *r.entities});
    }
    return index;
}

} // namespace psychic
