#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psychic/uri.hpp"

namespace psychic {

/// Outcome of checking a query against the template grammar. On failure
/// `position` is the byte offset of the first token that could not be
/// consumed.
struct QueryValidation {
    bool ok = false;
    std::size_t position = 0;
    std::string message;

    explicit operator bool() const noexcept { return ok; }
};

namespace grammar {

enum class Tok { var, iri, string, number, name, punct, end };

struct Token {
    Tok kind;
    std::string text; // lowercased for names
    std::size_t pos;
};

inline bool iri_char(char c) noexcept {
    auto u = static_cast<unsigned char>(c);
    if (u <= 0x20) return false;
    switch (c) {
    case '<': case '>': case '"': case '{': case '}': case '|': case '^': case '`': case '\\':
        return false;
    default:
        return true;
    }
}

inline bool name_char(char c) noexcept {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || u >= 0x80;
}

inline std::optional<std::vector<Token>> lex(std::string_view s, std::size_t& error_pos) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (detail::is_space(c)) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if ((c == '?' || c == '$') && i + 1 < s.size() && name_char(s[i + 1])) {
            ++i;
            while (i < s.size() && name_char(s[i])) ++i;
            out.push_back({Tok::var, std::string(s.substr(start, i - start)), start});
            continue;
        }
        if (c == '<') {
            std::size_t j = i + 1;
            while (j < s.size() && iri_char(s[j])) ++j;
            if (j < s.size() && s[j] == '>' && j > i + 1) {
                out.push_back({Tok::iri, std::string(s.substr(i, j - i + 1)), start});
                i = j + 1;
                continue;
            }
        }
        if (c == '"') {
            std::size_t j = i + 1;
            while (j < s.size() && s[j] != '"') j += (s[j] == '\\') ? 2 : 1;
            if (j >= s.size()) {
                error_pos = start;
                return std::nullopt;
            }
            i = j + 1;
            if (i < s.size() && s[i] == '@') {
                ++i;
                while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '-')) ++i;
            } else if (s.substr(i).starts_with("^^")) {
                i += 2;
                std::size_t j2 = i + 1;
                if (i >= s.size() || s[i] != '<') {
                    error_pos = i;
                    return std::nullopt;
                }
                while (j2 < s.size() && iri_char(s[j2])) ++j2;
                if (j2 >= s.size() || s[j2] != '>') {
                    error_pos = i;
                    return std::nullopt;
                }
                i = j2 + 1;
            }
            out.push_back({Tok::string, std::string(s.substr(start, i - start)), start});
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (i + 1 < s.size() && s[i] == '.' && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
                ++i;
                while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            }
            out.push_back({Tok::number, std::string(s.substr(start, i - start)), start});
            continue;
        }
        if (name_char(c)) {
            while (i < s.size() && name_char(s[i])) ++i;
            out.push_back({Tok::name, detail::to_lower(s.substr(start, i - start)), start});
            continue;
        }
        static constexpr std::string_view kTwoChar[] = {"!=", "<=", ">=", "&&", "||"};
        bool matched = false;
        for (auto op : kTwoChar) {
            if (s.substr(i).starts_with(op)) {
                out.push_back({Tok::punct, std::string(op), start});
                i += 2;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        static constexpr std::string_view kOneChar = "{}().,;*=<>!+-/";
        if (kOneChar.find(c) != std::string_view::npos) {
            out.push_back({Tok::punct, std::string(1, c), start});
            ++i;
            continue;
        }
        error_pos = start;
        return std::nullopt;
    }
    out.push_back({Tok::end, {}, s.size()});
    return out;
}

struct ParseError {
    std::size_t pos;
    std::string message;
};

// Recursive descent over:
//   query    := select | ask
//   select   := SELECT (DISTINCT|REDUCED)? (proj+ | '*') where modifiers
//   ask      := ASK where
//   where    := WHERE? group
//   group    := '{' (triple '.'? | FILTER constraint | group (UNION group)* | OPTIONAL group)+ '}'
//   triple   := term term term
//   modifiers:= (GROUP BY key+)? (HAVING constraint)? (ORDER BY cond+)? (LIMIT n | OFFSET n)*
class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : t_(std::move(tokens)) {}

    void query() {
        if (keyword("select"))
            select();
        else if (keyword("ask"))
            where_clause();
        else
            fail("expected SELECT or ASK");
        if (peek().kind != Tok::end) fail("trailing input");
    }

private:
    std::vector<Token> t_;
    std::size_t i_ = 0;

    const Token& peek(std::size_t ahead = 0) const {
        return t_[std::min(i_ + ahead, t_.size() - 1)];
    }

    [[noreturn]] void fail(std::string message) const { throw ParseError{peek().pos, std::move(message)}; }

    bool is_keyword(std::string_view kw, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::name && peek(ahead).text == kw;
    }
    bool keyword(std::string_view kw) {
        if (!is_keyword(kw)) return false;
        ++i_;
        return true;
    }
    void expect_keyword(std::string_view kw) {
        if (!keyword(kw)) fail("expected " + std::string(kw));
    }
    bool is_punct(std::string_view p) const { return peek().kind == Tok::punct && peek().text == p; }
    bool punct(std::string_view p) {
        if (!is_punct(p)) return false;
        ++i_;
        return true;
    }
    void expect_punct(std::string_view p) {
        if (!punct(p)) fail("expected '" + std::string(p) + "'");
    }
    bool is_var() const { return peek().kind == Tok::var; }

    void select() {
        if (!keyword("distinct")) keyword("reduced");
        if (!punct("*")) {
            std::size_t n = 0;
            for (;;) {
                if (is_var()) {
                    ++i_;
                } else if (is_punct("(")) {
                    ++i_;
                    expression();
                    expect_keyword("as");
                    if (!is_var()) fail("expected variable after AS");
                    ++i_;
                    expect_punct(")");
                } else {
                    break;
                }
                ++n;
            }
            if (n == 0) fail("expected projection");
        }
        where_clause();
        modifiers();
    }

    void where_clause() {
        keyword("where");
        group();
    }

    void group() {
        expect_punct("{");
        std::size_t elements = 0;
        bool need_separator = false;
        while (!is_punct("}")) {
            if (peek().kind == Tok::end) fail("unclosed '{'");
            if (keyword("filter")) {
                constraint();
                need_separator = false;
            } else if (keyword("optional")) {
                group();
                need_separator = false;
            } else if (is_punct("{")) {
                group();
                while (keyword("union")) group();
                need_separator = false;
            } else {
                if (need_separator) fail("expected '.' between triples");
                triple();
                need_separator = true;
            }
            ++elements;
            if (punct(".")) need_separator = false;
        }
        ++i_;
        if (elements == 0) fail("empty group");
    }

    bool term() {
        const auto& tk = peek();
        switch (tk.kind) {
        case Tok::var: case Tok::iri: case Tok::string: case Tok::number:
            ++i_;
            return true;
        case Tok::name:
            if (tk.text == "a" || tk.text == "true" || tk.text == "false") {
                ++i_;
                return true;
            }
            return false;
        default:
            return false;
        }
    }

    void triple() {
        for (int k = 0; k < 3; ++k)
            if (!term()) fail("expected triple term");
    }

    void constraint() {
        if (is_punct("(")) {
            ++i_;
            expression();
            expect_punct(")");
        } else if (peek().kind == Tok::name && peek(1).kind == Tok::punct && peek(1).text == "(") {
            call();
        } else {
            fail("expected filter constraint");
        }
    }

    void call() {
        ++i_; // function name
        expect_punct("(");
        if (punct(")")) return;
        keyword("distinct");
        if (!punct("*")) {
            expression();
            while (punct(",")) expression();
        }
        expect_punct(")");
    }

    void expression() {
        and_expr();
        while (punct("||")) and_expr();
    }
    void and_expr() {
        relational();
        while (punct("&&")) relational();
    }
    void relational() {
        additive();
        for (auto op : {"=", "!=", "<", ">", "<=", ">="}) {
            if (punct(op)) {
                additive();
                return;
            }
        }
    }
    void additive() {
        multiplicative();
        while (punct("+") || punct("-")) multiplicative();
    }
    void multiplicative() {
        unary();
        while (punct("*") || punct("/")) unary();
    }
    void unary() {
        if (punct("!") || punct("-") || punct("+")) {
            unary();
            return;
        }
        primary();
    }
    void primary() {
        if (punct("(")) {
            expression();
            expect_punct(")");
            return;
        }
        if (peek().kind == Tok::name && peek(1).kind == Tok::punct && peek(1).text == "(") {
            call();
            return;
        }
        if (peek().kind == Tok::name && peek().text != "true" && peek().text != "false") fail("unexpected name");
        if (!term()) fail("expected expression");
    }

    void modifiers() {
        if (keyword("group")) {
            expect_keyword("by");
            std::size_t n = 0;
            while (is_var() || is_punct("(")) {
                if (is_var())
                    ++i_;
                else
                    primary();
                ++n;
            }
            if (n == 0) fail("expected GROUP BY key");
        }
        if (keyword("having")) constraint();
        if (keyword("order")) {
            expect_keyword("by");
            std::size_t n = 0;
            for (;;) {
                if (is_keyword("asc") || is_keyword("desc")) {
                    ++i_;
                    expect_punct("(");
                    expression();
                    expect_punct(")");
                } else if (is_var()) {
                    ++i_;
                } else if (peek().kind == Tok::name && peek(1).kind == Tok::punct && peek(1).text == "(") {
                    call();
                } else {
                    break;
                }
                ++n;
            }
            if (n == 0) fail("expected ORDER BY condition");
        }
        for (;;) {
            if (keyword("limit") || keyword("offset")) {
                if (peek().kind != Tok::number || peek().text.find('.') != std::string::npos)
                    fail("expected integer");
                ++i_;
            } else {
                break;
            }
        }
    }
};

} // namespace grammar

/// Checks `query` against the template grammar and reports the first
/// failure position.
[[nodiscard]] inline QueryValidation validate_query_detailed(std::string_view query) {
    std::size_t lex_error = 0;
    auto tokens = grammar::lex(query, lex_error);
    if (!tokens) return {false, lex_error, "unrecognized character"};
    try {
        grammar::Parser(std::move(*tokens)).query();
    } catch (const grammar::ParseError& e) {
        return {false, e.pos, e.message};
    }
    return {true, 0, {}};
}

/// True iff `query` parses under the template grammar. Keywords are
/// case-insensitive.
[[nodiscard]] inline bool validate_query(std::string_view query) { return validate_query_detailed(query).ok; }

} // namespace psychic
