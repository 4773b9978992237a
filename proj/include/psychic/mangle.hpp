#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "psychic/uri.hpp"

namespace psychic {

namespace detail {

[[nodiscard]] inline bool is_ascii_punct(char c) noexcept {
    auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u) != 0;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
    std::string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    for (;;) {
        auto hit = s.find(from, pos);
        if (hit == std::string::npos) break;
        out.append(s, pos, hit - pos);
        out += to;
        pos = hit + from.size();
    }
    out.append(s, pos, std::string::npos);
    s = std::move(out);
}

} // namespace detail

/// Models the damage an uncased wordpiece model does to a span on its way
/// back to text: lowercase, split every ASCII punctuation character into its
/// own token, join tokens with single spaces, then apply the usual
/// detokenizer clean-up (no space before `.` `?` `!` `,`, apostrophes
/// re-glued). `[SEP]` and `[CLS]` survive as atomic tokens.
///
/// On a typical canonical query this reproduces the known damaged
/// form byte for byte, e.g. `distinct ?answer` -> `distinct? answer`,
/// `dblp.org` -> `dblp. org`, `{ ?answer` -> `{? answer`.
[[nodiscard]] inline std::string simulate_mangle(std::string_view canonical) {
    std::vector<std::string> tokens;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) tokens.push_back(std::exchange(word, {}));
    };
    for (std::size_t i = 0; i < canonical.size();) {
        auto rest = canonical.substr(i);
        if (rest.starts_with(kSepToken) || rest.starts_with(kClsToken)) {
            flush();
            tokens.emplace_back(rest.substr(0, kSepToken.size()));
            i += kSepToken.size();
            continue;
        }
        char c = canonical[i++];
        if (detail::is_space(c)) {
            flush();
        } else if (detail::is_ascii_punct(c)) {
            flush();
            tokens.emplace_back(1, c);
        } else {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    flush();

    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    static constexpr std::pair<std::string_view, std::string_view> kCleanup[] = {
        {" .", "."},     {" ?", "?"},     {" !", "!"},     {" ,", ","},     {" ' ", "'"},
        {" n't", "n't"}, {" 'm", "'m"}, {" 's", "'s"}, {" 've", "'ve"}, {" 're", "'re"},
    };
    for (auto [from, to] : kCleanup) detail::replace_all(out, from, to);
    return out;
}

} // namespace psychic
