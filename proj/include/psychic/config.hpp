#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"

#include "psychic/dataset.hpp"
#include "psychic/error.hpp"
#include "psychic/grounding.hpp"
#include "psychic/model_backend.hpp"
#include "psychic/sparql_client.hpp"

namespace psychic {

/// Environment variable that overrides the SPARQL endpoint URL.
inline constexpr const char* kEndpointEnvVar = "PSYCHIC_SPARQL_ENDPOINT";

enum class ElProviderKind { none, file };

struct RunConfig {
    Phase phase = Phase::dev;
    std::string dataset_path;
    /// Defaults to full for dev and questions_only for final.
    std::optional<LoadMode> dataset_mode;
    BackendConfig backend;
    std::optional<EndpointConfig> endpoint;
    std::optional<std::string> vocab_path;
    std::string output_dir = "runs";
    std::uint64_t seed = 42; // unused by the current deterministic backends
    ElProviderKind el_provider = ElProviderKind::none;
    std::optional<std::string> candidates_path;
    std::optional<std::string> gold_cache_path;
    std::size_t workers = 4;
    /// Fixed run directory name; a timestamp is used when absent.
    std::optional<std::string> run_id;

    [[nodiscard]] LoadMode effective_mode() const {
        return dataset_mode.value_or(phase == Phase::dev ? LoadMode::full : LoadMode::questions_only);
    }

    void validate() const {
        if (dataset_path.empty()) throw ConfigError("dataset path is required");
        if (phase == Phase::dev && effective_mode() != LoadMode::full)
            throw ConfigError("dev phase requires full-mode records");
        if (phase == Phase::final && (el_provider != ElProviderKind::file || !candidates_path))
            throw ConfigError("final phase requires an entity-linker candidates file");
        if (output_dir.empty()) throw ConfigError("output directory is required");
        if (workers == 0) throw ConfigError("workers must be >= 1");
        backend.validate();
        if (endpoint) endpoint->validate();
    }
};

namespace detail {

[[noreturn]] inline void toml_error(std::size_t line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

inline nlohmann::json toml_value(std::string_view v, std::size_t line) {
    v = trim(v);
    if (v.empty()) toml_error(line, "missing value");
    if (v.front() == '"') {
        std::string out;
        std::size_t i = 1;
        for (; i < v.size() && v[i] != '"'; ++i) {
            if (v[i] == '\\' && i + 1 < v.size()) {
                char e = v[++i];
                switch (e) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                default: toml_error(line, "unsupported escape");
                }
            } else {
                out.push_back(v[i]);
            }
        }
        if (i >= v.size()) toml_error(line, "unterminated string");
        auto rest = trim(v.substr(i + 1));
        if (!rest.empty() && rest.front() != '#') toml_error(line, "trailing characters after string");
        return out;
    }
    if (v.front() == '\'') {
        auto end = v.find('\'', 1);
        if (end == std::string_view::npos) toml_error(line, "unterminated string");
        return std::string(v.substr(1, end - 1));
    }
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = trim(v.substr(0, hash));
    if (v == "true") return true;
    if (v == "false") return false;
    std::string s(v);
    std::erase(s, '_');
    char* end = nullptr;
    if (s.find_first_of(".eE") == std::string::npos) {
        long long n = std::strtoll(s.c_str(), &end, 10);
        if (end && *end == '\0' && !s.empty()) return n;
    } else {
        double d = std::strtod(s.c_str(), &end);
        if (end && *end == '\0' && !s.empty()) return d;
    }
    toml_error(line, "unsupported value '" + std::string(v) + "'");
}

} // namespace detail

/// Reads the TOML subset used for run configs: `[table]` / `[a.b]` headers,
/// `key = value` with strings, integers, floats and booleans, `#` comments.
[[nodiscard]] inline nlohmann::json parse_toml_subset(std::string_view text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') {
            auto close = line.find(']');
            if (close == std::string_view::npos) detail::toml_error(line_no, "unterminated table header");
            table = &root;
            auto path = line.substr(1, close - 1);
            while (!path.empty()) {
                auto dot = path.find('.');
                auto key = std::string(detail::trim(path.substr(0, dot)));
                if (key.empty()) detail::toml_error(line_no, "empty table name");
                auto& next = (*table)[key];
                if (next.is_null()) next = nlohmann::json::object();
                if (!next.is_object()) detail::toml_error(line_no, "'" + key + "' is not a table");
                table = &next;
                path = dot == std::string_view::npos ? std::string_view{} : path.substr(dot + 1);
            }
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos) detail::toml_error(line_no, "expected key = value");
        auto key = std::string(detail::trim(line.substr(0, eq)));
        if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
        if (key.empty()) detail::toml_error(line_no, "empty key");
        (*table)[key] = detail::toml_value(line.substr(eq + 1), line_no);
    }
    return root;
}

namespace detail {

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    if (p.empty() || base.empty()) return p;
    std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

template <class T>
std::optional<T> opt(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

inline LoadMode parse_load_mode(std::string_view s) {
    if (s == "full") return LoadMode::full;
    if (s == "questions_only") return LoadMode::questions_only;
    throw ConfigError("unknown dataset mode '" + std::string(s) + "'");
}

} // namespace detail

[[nodiscard]] inline Phase parse_phase(std::string_view s) {
    if (s == "dev") return Phase::dev;
    if (s == "final") return Phase::final;
    throw ConfigError("unknown phase '" + std::string(s) + "'");
}

/// Builds a RunConfig from its JSON form. Relative paths are resolved
/// against `base_dir`.
[[nodiscard]] inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    using detail::opt;
    if (!j.is_object()) throw ConfigError("config must be an object");
    RunConfig c;
    if (auto v = opt<std::string>(j, "phase")) c.phase = parse_phase(*v);
    if (auto v = opt<std::string>(j, "dataset")) c.dataset_path = detail::resolve_path(*v, base_dir);
    if (auto v = opt<std::string>(j, "dataset_mode")) c.dataset_mode = detail::parse_load_mode(*v);
    if (auto v = opt<std::string>(j, "vocab")) c.vocab_path = detail::resolve_path(*v, base_dir);
    if (auto v = opt<std::string>(j, "output_dir")) c.output_dir = detail::resolve_path(*v, base_dir);
    if (auto v = opt<std::uint64_t>(j, "seed")) c.seed = *v;
    if (auto v = opt<std::size_t>(j, "workers")) c.workers = *v;
    if (auto v = opt<std::string>(j, "gold_cache")) c.gold_cache_path = detail::resolve_path(*v, base_dir);
    if (auto v = opt<std::string>(j, "run_id")) c.run_id = *v;

    if (auto b = j.find("backend"); b != j.end()) {
        if (auto v = opt<std::string>(*b, "kind")) c.backend.kind = parse_backend_kind(*v);
        c.backend.endpoint = opt<std::string>(*b, "endpoint");
        if (auto v = opt<long long>(*b, "timeout_ms")) c.backend.timeout = std::chrono::milliseconds(*v);
        if (auto v = opt<int>(*b, "max_retries")) c.backend.max_retries = *v;
        if (auto v = opt<long long>(*b, "backoff_ms")) c.backend.backoff_base = std::chrono::milliseconds(*v);
        if (auto v = opt<std::ptrdiff_t>(*b, "max_in_flight")) c.backend.max_in_flight = *v;
    }
    if (auto e = j.find("endpoint"); e != j.end() && !e->is_null()) {
        EndpointConfig ec;
        if (auto v = opt<std::string>(*e, "url")) ec.url = *v;
        if (auto v = opt<long long>(*e, "timeout_ms")) ec.timeout = std::chrono::milliseconds(*v);
        if (auto v = opt<int>(*e, "max_retries")) ec.max_retries = *v;
        if (auto v = opt<double>(*e, "rate_limit")) ec.rate_limit = *v;
        if (auto v = opt<long long>(*e, "backoff_ms")) ec.backoff_base = std::chrono::milliseconds(*v);
        c.endpoint = ec;
    }
    if (auto el = j.find("el_provider"); el != j.end() && !el->is_null()) {
        auto kind = opt<std::string>(*el, "kind").value_or("none");
        if (kind == "file")
            c.el_provider = ElProviderKind::file;
        else if (kind != "none")
            throw ConfigError("unknown el_provider kind '" + kind + "'");
        if (auto v = opt<std::string>(*el, "candidates")) c.candidates_path = detail::resolve_path(*v, base_dir);
    }
    return c;
}

/// Applies the endpoint environment override, if set.
inline void apply_environment(RunConfig& c) {
    if (const char* url = std::getenv(kEndpointEnvVar); url && *url) {
        if (!c.endpoint) c.endpoint = EndpointConfig{};
        c.endpoint->url = url;
    }
}

/// Loads a `.json` or `.toml` run config.
[[nodiscard]] inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    nlohmann::json j;
    if (path.ends_with(".toml")) {
        j = parse_toml_subset(text);
    } else {
        j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
    }
    auto c = run_config_from_json(j, std::filesystem::path(path).parent_path());
    apply_environment(c);
    return c;
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["phase"] = to_string(c.phase);
    j["dataset"] = c.dataset_path;
    j["dataset_mode"] = c.effective_mode() == LoadMode::full ? "full" : "questions_only";
    j["vocab"] = c.vocab_path ? nlohmann::ordered_json(*c.vocab_path) : nlohmann::ordered_json(nullptr);
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["backend"] = {{"kind", to_string(c.backend.kind)},
                    {"endpoint", c.backend.endpoint ? nlohmann::ordered_json(*c.backend.endpoint) : nullptr},
                    {"timeout_ms", c.backend.timeout.count()},
                    {"max_retries", c.backend.max_retries},
                    {"max_in_flight", c.backend.max_in_flight}};
    if (c.endpoint)
        j["endpoint"] = {{"url", c.endpoint->url},
                         {"timeout_ms", c.endpoint->timeout.count()},
                         {"max_retries", c.endpoint->max_retries},
                         {"rate_limit", c.endpoint->rate_limit}};
    else
        j["endpoint"] = nullptr;
    j["el_provider"] = {{"kind", c.el_provider == ElProviderKind::file ? "file" : "none"},
                        {"candidates", c.candidates_path ? nlohmann::ordered_json(*c.candidates_path) : nullptr}};
    j["gold_cache"] = c.gold_cache_path ? nlohmann::ordered_json(*c.gold_cache_path) : nlohmann::ordered_json(nullptr);
    return j;
}

} // namespace psychic
