#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "psychic/error.hpp"
#include "psychic/query_validator.hpp"
#include "psychic/uri.hpp"

namespace psychic {

// ---------------------------------------------------------------------------
// Schema vocabulary
// ---------------------------------------------------------------------------

/// Case-sensitive schema local names used to undo lowercasing inside URIs.
class SchemaVocabulary {
public:
    SchemaVocabulary() = default;

    SchemaVocabulary(std::initializer_list<std::string_view> terms) {
        for (auto t : terms) add(t);
    }

    /// Throws ConfigError when `term` collides case-insensitively with a
    /// different term already present.
    void add(std::string_view term) {
        std::string canonical(term);
        auto key = detail::to_lower(canonical);
        auto [it, inserted] = lowercase_index_.emplace(key, canonical);
        if (!inserted && it->second != canonical)
            throw ConfigError("vocabulary terms '" + it->second + "' and '" + canonical +
                              "' collide when lowercased");
        terms_.insert(std::move(canonical));
    }

    [[nodiscard]] const std::set<std::string>& terms() const noexcept { return terms_; }

    [[nodiscard]] const std::unordered_map<std::string, std::string>& lowercase_index() const noexcept {
        return lowercase_index_;
    }

    /// Exact lookup against the lowercased keys; canonical or unknown
    /// spellings miss.
    [[nodiscard]] std::optional<std::string> restore(std::string_view lowered) const {
        auto it = lowercase_index_.find(std::string(lowered));
        if (it == lowercase_index_.end()) return std::nullopt;
        return it->second;
    }

    /// One term per line; `#` starts a comment.
    static SchemaVocabulary parse(std::string_view text) {
        SchemaVocabulary v;
        while (!text.empty()) {
            auto eol = text.find('\n');
            auto line = text.substr(0, eol);
            text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
            if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (!line.empty()) v.add(line);
        }
        return v;
    }

    static SchemaVocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open vocabulary file " + path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse(text);
    }

    /// DBLP RDF schema property and class names.
    static const SchemaVocabulary& dblp_default() {
        static const SchemaVocabulary v{
            "authoredBy",  "title",       "yearOfPublication", "publishedIn", "numberOfCreators",
            "primaryAffiliation", "orcid", "wikidata",         "webpage",     "doi",
            "bibtexType",  "createdBy",   "Person",            "Publication", "Inproceedings",
            "Article",
        };
        return v;
    }

private:
    std::set<std::string> terms_;
    std::unordered_map<std::string, std::string> lowercase_index_;
};

// ---------------------------------------------------------------------------
// Output splitting
// ---------------------------------------------------------------------------

struct SplitOutput {
    std::string query_chunk;
    std::string entity_chunk;
    /// False when no `[SEP]` was found; the instance is then degraded and the
    /// whole string is taken as the query chunk.
    bool has_separator = true;
};

[[nodiscard]] inline SplitOutput split_output(std::string_view raw) {
    SplitOutput out;
    std::string_view query = raw;
    std::string_view entities;
    if (auto pos = raw.find(kSepToken); pos != std::string_view::npos) {
        query = raw.substr(0, pos);
        entities = raw.substr(pos + kSepToken.size());
    } else {
        out.has_separator = false;
    }
    query = detail::trim(query);
    if (query.starts_with(kClsToken)) query = detail::trim(query.substr(kClsToken.size()));
    out.query_chunk = std::string(query);
    out.entity_chunk = std::string(detail::trim(entities));
    return out;
}

// ---------------------------------------------------------------------------
// Query repair
// ---------------------------------------------------------------------------

inline constexpr std::string_view kRepairUri = "R1";
inline constexpr std::string_view kRepairVariable = "R2";
inline constexpr std::string_view kRepairCase = "R3";
inline constexpr std::string_view kRepairSpacing = "R4";
inline constexpr std::string_view kRepairWhitespace = "R5";

/// Non-fatal problem found while repairing; positions are byte offsets into
/// the input chunk.
struct RepairDiagnostic {
    std::string kind;
    std::size_t position = 0;
};

struct QueryRepair {
    std::string query;
    std::vector<std::string> repairs;
    std::vector<RepairDiagnostic> diagnostics;
};

namespace detail {

// Protected regions (URIs, quoted literals) are replaced by this byte in the
// working string so spacing rules cannot reach into them.
inline constexpr char kMask = '\x01';

enum class PieceKind { plain, uri, literal };

struct Piece {
    PieceKind kind;
    std::string text;
    std::size_t offset; // into the original chunk
};

[[nodiscard]] inline bool is_ident_char(char c) noexcept {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || u >= 0x80;
}

// Splits out double-quoted literals (backslash escapes honoured). An
// unterminated quote stays plain text.
inline std::vector<Piece> split_literals(std::string_view s) {
    std::vector<Piece> out;
    std::size_t plain_start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '"') continue;
        std::size_t j = i + 1;
        while (j < s.size() && s[j] != '"') j += (s[j] == '\\') ? 2 : 1;
        if (j >= s.size()) break;
        if (i > plain_start) out.push_back({PieceKind::plain, std::string(s.substr(plain_start, i - plain_start)), plain_start});
        out.push_back({PieceKind::literal, std::string(s.substr(i, j - i + 1)), i});
        plain_start = j + 1;
        i = j;
    }
    if (plain_start < s.size()) out.push_back({PieceKind::plain, std::string(s.substr(plain_start)), plain_start});
    return out;
}

// `<` opens a URI when followed (spaces allowed) by a scheme and a colon;
// anything else is a comparison operator.
[[nodiscard]] inline bool opens_uri(std::string_view s, std::size_t lt) noexcept {
    std::size_t i = lt + 1;
    while (i < s.size() && is_space(s[i])) ++i;
    if (i >= s.size() || !std::isalpha(static_cast<unsigned char>(s[i]))) return false;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        if (!std::isalnum(c) && c != '+' && c != '.' && c != '-') break;
        ++i;
    }
    while (i < s.size() && is_space(s[i])) ++i;
    return i < s.size() && s[i] == ':';
}

// R1 on one plain piece. Returns the refined pieces.
inline std::vector<Piece> reassemble_uris(const Piece& plain, bool& fired, std::vector<RepairDiagnostic>& diags) {
    std::vector<Piece> out;
    const std::string_view s = plain.text;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '<' || !opens_uri(s, i)) continue;
        auto gt = s.find('>', i + 1);
        if (gt == std::string_view::npos) {
            diags.push_back({"UnbalancedAngleBrackets", plain.offset + i});
            break;
        }
        if (i > start) out.push_back({PieceKind::plain, std::string(s.substr(start, i - start)), plain.offset + start});
        auto raw = s.substr(i, gt - i + 1);
        auto compact = strip_whitespace(raw);
        if (compact.size() != raw.size()) fired = true;
        out.push_back({PieceKind::uri, std::move(compact), plain.offset + i});
        start = gt + 1;
        i = gt;
    }
    if (start < s.size()) out.push_back({PieceKind::plain, std::string(s.substr(start)), plain.offset + start});
    return out;
}

// R3: restore the casing of a URI's fragment (or, lacking one, its last
// path segment) from the vocabulary.
inline std::string restore_uri_case(const std::string& uri, const SchemaVocabulary& vocab) {
    if (uri.size() < 2) return uri;
    const std::size_t end = uri.size() - 1; // the closing '>'
    std::size_t begin;
    if (auto hash = uri.find('#'); hash != std::string::npos) {
        begin = hash + 1;
    } else {
        auto slash = uri.rfind('/', end);
        if (slash == std::string::npos) return uri;
        begin = slash + 1;
    }
    if (begin >= end) return uri;
    auto hit = vocab.restore(std::string_view(uri).substr(begin, end - begin));
    if (!hit) return uri;
    return uri.substr(0, begin) + *hit + uri.substr(end);
}

// R2: `? name` -> `?name`, `word?name` -> `word ?name`. A variable directly
// after `(` stays glued to it.
inline std::string repair_variables(std::string_view m) {
    std::string out;
    out.reserve(m.size() + 8);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] != '?') {
            out.push_back(m[i]);
            continue;
        }
        std::size_t k = i + 1;
        while (k < m.size() && is_space(m[k])) ++k;
        if (k >= m.size() || !is_ident_char(m[k]) || m[k] == kMask) {
            out.push_back('?');
            continue;
        }
        if (!out.empty() && !is_space(out.back()) && out.back() != '(') out.push_back(' ');
        out.push_back('?');
        i = k - 1;
    }
    return out;
}

[[nodiscard]] inline bool is_function_keyword(std::string_view word) {
    static constexpr std::array<std::string_view, 30> kFunctions = {
        "count",  "sum",      "min",       "max",      "avg",       "sample",     "group_concat", "filter",
        "desc",   "asc",      "year",      "month",    "day",       "now",        "str",          "lcase",
        "ucase",  "contains", "strstarts", "strends",  "regex",     "bound",      "lang",         "langmatches",
        "datatype", "isiri",  "isuri",     "isliteral", "concat",   "strlen",
    };
    auto lowered = to_lower(word);
    return std::find(kFunctions.begin(), kFunctions.end(), lowered) != kFunctions.end();
}

inline void trim_trailing_space(std::string& s) {
    while (!s.empty() && is_space(s.back())) s.pop_back();
}

// R4: punctuation spacing. Braces and operators get a space on each side,
// parentheses hug their contents, function names hug their `(`, a bare `.`
// between non-digits is a triple separator.
inline std::string normalize_spacing(std::string_view m) {
    std::string out;
    out.reserve(m.size() + 16);
    auto spaced = [&](std::string_view op) {
        trim_trailing_space(out);
        if (!out.empty()) out.push_back(' ');
        out += op;
        out.push_back(' ');
    };
    auto next_non_space = [&](std::size_t from) {
        while (from < m.size() && is_space(m[from])) ++from;
        return from;
    };
    for (std::size_t i = 0; i < m.size(); ++i) {
        char c = m[i];
        switch (c) {
        case '{':
        case '}':
            spaced(std::string_view(&m[i], 1));
            break;
        case '(': {
            // function name hugging: strip spaces back to an identifier that
            // names a function and is not a variable
            std::size_t end = out.size();
            while (end > 0 && is_space(out[end - 1])) --end;
            std::size_t begin = end;
            while (begin > 0 && is_ident_char(out[begin - 1]) && out[begin - 1] != kMask) --begin;
            if (begin < end && (begin == 0 || (out[begin - 1] != '?' && out[begin - 1] != '$')) &&
                is_function_keyword(std::string_view(out).substr(begin, end - begin)))
                out.resize(end);
            out.push_back('(');
            i = next_non_space(i + 1) - 1;
            break;
        }
        case ')':
            trim_trailing_space(out);
            out.push_back(')');
            break;
        case '.': {
            bool prev_digit = !out.empty() && std::isdigit(static_cast<unsigned char>(out.back()));
            bool next_digit = i + 1 < m.size() && std::isdigit(static_cast<unsigned char>(m[i + 1]));
            if (prev_digit && next_digit)
                out.push_back('.');
            else
                spaced(".");
            break;
        }
        case ',':
            trim_trailing_space(out);
            out += ", ";
            break;
        case '!': {
            auto k = next_non_space(i + 1);
            if (k < m.size() && m[k] == '=') {
                spaced("!=");
                i = k;
            } else {
                out.push_back('!');
            }
            break;
        }
        case '<':
        case '>': {
            auto k = next_non_space(i + 1);
            if (k < m.size() && m[k] == '=') {
                spaced(c == '<' ? "<=" : ">=");
                i = k;
            } else {
                spaced(std::string_view(&m[i], 1));
            }
            break;
        }
        case '=':
            spaced("=");
            break;
        case '&':
        case '|': {
            auto k = next_non_space(i + 1);
            if (k < m.size() && m[k] == c) {
                spaced(c == '&' ? "&&" : "||");
                i = k;
            } else {
                out.push_back(c);
            }
            break;
        }
        case '^': {
            auto k = next_non_space(i + 1);
            if (k < m.size() && m[k] == '^') {
                trim_trailing_space(out);
                out += "^^";
                i = next_non_space(k + 1) - 1;
            } else {
                out.push_back(c);
            }
            break;
        }
        default:
            out.push_back(c);
        }
    }
    return out;
}

inline std::string collapse_whitespace(std::string_view m) {
    std::string out;
    out.reserve(m.size());
    for (char c : m) {
        if (is_space(c)) {
            if (!out.empty() && out.back() != ' ') out.push_back(' ');
        } else {
            out.push_back(c);
        }
    }
    trim_trailing_space(out);
    return out;
}

} // namespace detail

/// Repairs a damaged query chunk with the fixed rule sequence
/// R1 URI reassembly, R2 variable repair, R3 case restoration, R4 punctuation
/// spacing, R5 whitespace collapse. Never throws; the text inside quoted
/// literals is left untouched.
[[nodiscard]] inline QueryRepair sanitize_query(std::string_view chunk,
                                                const SchemaVocabulary& vocab = SchemaVocabulary::dblp_default()) {
    QueryRepair result;
    std::string input;
    input.reserve(chunk.size());
    for (char c : chunk)
        if (c != detail::kMask) input.push_back(c);

    std::vector<detail::Piece> pieces;
    bool r1 = false;
    for (auto& p : detail::split_literals(input)) {
        if (p.kind != detail::PieceKind::plain) {
            pieces.push_back(std::move(p));
            continue;
        }
        for (auto& q : detail::reassemble_uris(p, r1, result.diagnostics)) pieces.push_back(std::move(q));
    }
    if (r1) result.repairs.emplace_back(kRepairUri);

    std::string masked;
    std::vector<std::string> protected_text;
    for (const auto& p : pieces) {
        if (p.kind == detail::PieceKind::plain) {
            masked += p.text;
        } else {
            masked.push_back(detail::kMask);
            protected_text.push_back(p.text);
        }
    }

    auto step = [&](std::string next, std::string_view id) {
        if (next != masked) result.repairs.emplace_back(id);
        masked = std::move(next);
    };

    step(detail::repair_variables(masked), kRepairVariable);

    bool r3 = false;
    {
        std::size_t k = 0;
        for (const auto& p : pieces) {
            if (p.kind == detail::PieceKind::plain) continue;
            if (p.kind == detail::PieceKind::uri) {
                auto restored = detail::restore_uri_case(protected_text[k], vocab);
                if (restored != protected_text[k]) {
                    protected_text[k] = std::move(restored);
                    r3 = true;
                }
            }
            ++k;
        }
    }
    if (r3) result.repairs.emplace_back(kRepairCase);

    // R4 can leave runs of spaces that R5 removes, so both are judged on
    // collapsed text
    auto collapsed = detail::collapse_whitespace(masked);
    auto spaced = detail::collapse_whitespace(detail::normalize_spacing(masked));
    if (spaced != collapsed) result.repairs.emplace_back(kRepairSpacing);
    if (collapsed != masked) result.repairs.emplace_back(kRepairWhitespace);
    masked = std::move(spaced);

    std::size_t k = 0;
    result.query.reserve(masked.size() + 64);
    for (char c : masked) {
        if (c == detail::kMask)
            result.query += protected_text[k++];
        else
            result.query.push_back(c);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Entity repair
// ---------------------------------------------------------------------------

inline constexpr std::string_view kRepairEntityUri = "E-uri";
inline constexpr std::string_view kRepairEntityList = "E-list";
inline constexpr std::string_view kRepairEntitySeparator = "E-sep";
inline constexpr std::string_view kRepairEntityDrop = "E-drop";

struct EntityRepair {
    std::vector<std::string> entities;
    std::vector<std::string> repairs;
};

/// Extracts entity URIs from a damaged chunk: list-literal punctuation and
/// stray `[SEP]` tokens are discarded, each `<...>` region is compacted and
/// kept when it matches the entity-URI pattern. Everything else is dropped.
[[nodiscard]] inline EntityRepair sanitize_entities_detailed(std::string_view chunk) {
    EntityRepair result;
    bool list_punct = false, uri_fixed = false, sep = false, dropped = false;

    std::string s(chunk);
    for (auto token : {kSepToken, kClsToken, std::string_view("[sep]"), std::string_view("[cls]")}) {
        for (auto pos = s.find(token); pos != std::string::npos; pos = s.find(token, pos)) {
            s.replace(pos, token.size(), " ");
            sep = true;
        }
    }

    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (detail::is_space(c)) {
            ++i;
        } else if (c == '[' || c == ']' || c == '\'' || c == '"' || c == ',') {
            list_punct = true;
            ++i;
        } else if (c == '<') {
            auto gt = s.find('>', i + 1);
            if (gt == std::string::npos) {
                dropped = true;
                break;
            }
            auto raw = std::string_view(s).substr(i, gt - i + 1);
            auto compact = detail::strip_whitespace(raw);
            if (is_entity_uri(compact)) {
                if (compact.size() != raw.size()) uri_fixed = true;
                result.entities.push_back(std::move(compact));
            } else {
                dropped = true;
            }
            i = gt + 1;
        } else {
            // junk outside any URI: skip to the next separator-ish character
            dropped = true;
            while (i < s.size() && !detail::is_space(s[i]) && s[i] != '<' && s[i] != ',' && s[i] != ']' &&
                   s[i] != '\'' && s[i] != '"')
                ++i;
        }
    }
    if (uri_fixed) result.repairs.emplace_back(kRepairEntityUri);
    if (list_punct) result.repairs.emplace_back(kRepairEntityList);
    if (sep) result.repairs.emplace_back(kRepairEntitySeparator);
    if (dropped) result.repairs.emplace_back(kRepairEntityDrop);
    return result;
}

[[nodiscard]] inline std::vector<std::string> sanitize_entities(std::string_view chunk) {
    return sanitize_entities_detailed(chunk).entities;
}

// ---------------------------------------------------------------------------
// Whole-output sanitization
// ---------------------------------------------------------------------------

/// Repaired query and entity list for one model output.
struct SanitizedPrediction {
    std::string query;
    std::vector<std::string> entities;
    std::vector<std::string> repairs_applied;
    bool valid_query = false;
    bool valid_entities = false;
    bool has_separator = true;
};

/// Split, repair both chunks and validate. `valid_entities` is false when
/// any fragment of the entity chunk had to be dropped.
[[nodiscard]] inline SanitizedPrediction sanitize_prediction(std::string_view raw,
                                                             const SchemaVocabulary& vocab = SchemaVocabulary::dblp_default()) {
    auto split = split_output(raw);
    auto q = sanitize_query(split.query_chunk, vocab);
    auto e = sanitize_entities_detailed(split.entity_chunk);

    SanitizedPrediction out;
    out.query = std::move(q.query);
    out.entities = std::move(e.entities);
    out.repairs_applied = std::move(q.repairs);
    for (const auto& d : q.diagnostics) out.repairs_applied.push_back(d.kind);
    out.repairs_applied.insert(out.repairs_applied.end(), e.repairs.begin(), e.repairs.end());
    out.has_separator = split.has_separator;
    out.valid_query = validate_query(out.query);
    out.valid_entities = split.has_separator &&
                         std::find(e.repairs.begin(), e.repairs.end(), kRepairEntityDrop) == e.repairs.end();
    return out;
}

} // namespace psychic
