#pragma once

#include <cctype>
#include <string>
#include <string_view>

namespace psychic {

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";

/// The single entity/relation URI pattern shared by the loader, the grounding
/// rules and the sanitizer: `<` scheme `://` body `>` where the body is
/// non-empty and carries no whitespace or angle brackets.
[[nodiscard]] inline bool is_entity_uri(std::string_view s) noexcept {
    if (s.size() < 2 || s.front() != '<' || s.back() != '>') return false;
    std::string_view inner = s.substr(1, s.size() - 2);
    auto scheme_end = inner.find("://");
    if (scheme_end == std::string_view::npos || scheme_end == 0) return false;
    if (!std::isalpha(static_cast<unsigned char>(inner[0]))) return false;
    for (std::size_t i = 1; i < scheme_end; ++i) {
        auto c = static_cast<unsigned char>(inner[i]);
        if (!std::isalnum(c) && c != '+' && c != '.' && c != '-') return false;
    }
    std::string_view body = inner.substr(scheme_end + 3);
    if (body.empty()) return false;
    for (char ch : body) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || c == '<' || c == '>') return false;
    }
    return true;
}

[[nodiscard]] inline bool contains_reserved_token(std::string_view s) noexcept {
    return s.find(kClsToken) != std::string_view::npos || s.find(kSepToken) != std::string_view::npos;
}

namespace detail {

[[nodiscard]] inline bool is_space(char c) noexcept {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

[[nodiscard]] inline std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

[[nodiscard]] inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

[[nodiscard]] inline std::string strip_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s)
        if (!is_space(c)) out.push_back(c);
    return out;
}

} // namespace detail
} // namespace psychic
