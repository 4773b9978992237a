#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psychic/dataset.hpp"
#include "psychic/error.hpp"
#include "psychic/uri.hpp"

namespace psychic {

enum class Phase { dev, final };

[[nodiscard]] inline std::string_view to_string(Phase p) noexcept { return p == Phase::dev ? "dev" : "final"; }

/// `[CLS] c1 [SEP] c2 ... [SEP] cN` as fed to the extractive model.
struct ContextString {
    std::string text;
    Phase phase = Phase::dev;
    std::size_t chunk_count = 0;
};

/// `query [SEP] entities`, the span the model is trained to extract.
struct TargetString {
    std::string text;
};

/// One entity-linker result. Only `uri` enters the context.
struct EntityCandidate {
    std::string uri;
    std::optional<double> score;
    std::optional<std::string> label;
};

inline constexpr std::string_view kChunkSeparator = " [SEP] ";
inline constexpr std::string_view kContextPrefix = "[CLS] ";

/// Space-joined URIs; the empty list serializes to "".
[[nodiscard]] inline std::string serialize_entities(std::span<const std::string> entities) {
    std::string out;
    for (const auto& e : entities) {
        if (!is_entity_uri(e)) throw InvalidEntityUri({}, e);
        if (!out.empty()) out.push_back(' ');
        out += e;
    }
    return out;
}

namespace detail {

inline const std::string& require_field(const std::optional<std::string>& v, const char* name) {
    if (!v) throw IncompleteRecord(name);
    if (contains_reserved_token(*v)) throw ReservedToken(name, "in text");
    return *v;
}

inline const std::vector<std::string>& require_entities(const QuadRecord& r) {
    if (!r.entities) throw IncompleteRecord("entities");
    return *r.entities;
}

inline std::string join_chunks(std::span<const std::string_view> chunks) {
    std::string out(kContextPrefix);
    bool first = true;
    for (auto c : chunks) {
        if (!first) out += kChunkSeparator;
        out += c;
        first = false;
    }
    return out;
}

} // namespace detail

[[nodiscard]] inline ContextString build_dev_context(const QuadRecord& record) {
    const auto& query_type = detail::require_field(record.query_type, "query_type");
    const auto& template_id = detail::require_field(record.template_id, "template_id");
    const auto& query = detail::require_field(record.query, "query");
    const auto entities = serialize_entities(detail::require_entities(record));
    const std::string_view chunks[] = {query_type, template_id, query, entities};
    return {detail::join_chunks(chunks), Phase::dev, 4};
}

[[nodiscard]] inline ContextString build_final_context(std::span<const EntityCandidate> candidates) {
    if (candidates.empty()) throw NoCandidates();
    std::vector<std::string_view> chunks;
    chunks.reserve(candidates.size());
    for (const auto& c : candidates) {
        if (!is_entity_uri(c.uri)) throw InvalidEntityUri({}, c.uri);
        chunks.push_back(c.uri);
    }
    return {detail::join_chunks(chunks), Phase::final, candidates.size()};
}

[[nodiscard]] inline TargetString build_target(const QuadRecord& record) {
    const auto& query = detail::require_field(record.query, "query");
    return {query + std::string(kChunkSeparator) + serialize_entities(detail::require_entities(record))};
}

/// Inverse of the context builders: drops the `[CLS] ` prefix and splits on
/// ` [SEP] `.
[[nodiscard]] inline std::vector<std::string> split_context(std::string_view context) {
    if (context.starts_with(kContextPrefix)) context.remove_prefix(kContextPrefix.size());
    else if (context == kClsToken) context = {};
    std::vector<std::string> out;
    for (;;) {
        auto pos = context.find(kChunkSeparator);
        if (pos == std::string_view::npos) break;
        out.emplace_back(context.substr(0, pos));
        context.remove_prefix(pos + kChunkSeparator.size());
    }
    out.emplace_back(context);
    return out;
}

} // namespace psychic
