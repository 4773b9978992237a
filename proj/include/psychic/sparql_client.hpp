#pragma once

#include <atomic>
#include <chrono>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "psychic/error.hpp"
#include "psychic/http_util.hpp"
#include "psychic/query_validator.hpp"

namespace psychic {

/// Joins the values of one result row when more than one variable is
/// projected.
inline constexpr char kUnitSeparator = '\x1f';

/// Normalized result of a query: a set of row strings, or a boolean for ASK.
struct AnswerSet {
    enum class Kind { bindings, boolean };

    Kind kind = Kind::bindings;
    std::set<std::string> values;
    std::optional<bool> truth;

    static AnswerSet from_bool(bool b) { return {Kind::boolean, {}, b}; }
    static AnswerSet from_values(std::set<std::string> v) { return {Kind::bindings, std::move(v), std::nullopt}; }

    /// The set scored by evaluation; booleans become {"true"} / {"false"}.
    [[nodiscard]] std::set<std::string> comparable() const {
        if (kind == Kind::boolean) return {truth.value_or(false) ? "true" : "false"};
        return values;
    }

    friend bool operator==(const AnswerSet&, const AnswerSet&) = default;
};

[[nodiscard]] inline std::string_view to_string(AnswerSet::Kind k) noexcept {
    return k == AnswerSet::Kind::boolean ? "boolean" : "bindings";
}

[[nodiscard]] inline nlohmann::ordered_json to_json(const AnswerSet& a) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(a.kind);
    j["values"] = a.values;
    j["truth"] = a.truth ? nlohmann::ordered_json(*a.truth) : nlohmann::ordered_json(nullptr);
    return j;
}

[[nodiscard]] inline AnswerSet answer_set_from_json(const nlohmann::json& j) {
    AnswerSet a;
    auto kind = j.value("kind", std::string("bindings"));
    if (kind == "boolean") {
        if (!j.contains("truth") || !j["truth"].is_boolean()) throw ResultParseError("boolean answer without truth");
        return AnswerSet::from_bool(j["truth"].get<bool>());
    }
    if (kind != "bindings") throw ResultParseError("unknown answer kind '" + kind + "'");
    if (j.contains("values")) {
        if (!j["values"].is_array()) throw ResultParseError("values must be an array");
        for (const auto& v : j["values"]) a.values.insert(v.get<std::string>());
    }
    return a;
}

namespace detail {

inline std::string rdf_term_text(const nlohmann::json& term) {
    if (!term.is_object() || !term.contains("value") || !term["value"].is_string())
        throw ResultParseError("binding term without string value");
    auto value = term["value"].get<std::string>();
    auto type = term.value("type", std::string("literal"));
    if (type == "uri") return "<" + value + ">";
    if (type == "bnode") return "_:" + value;
    return value;
}

} // namespace detail

/// Parses the SPARQL 1.1 JSON results format. URIs come back as `<uri>`,
/// literals as their lexical form (no datatype or language tag).
[[nodiscard]] inline AnswerSet parse_sparql_results(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ResultParseError("top level is not an object");
    if (auto b = doc.find("boolean"); b != doc.end()) {
        if (!b->is_boolean()) throw ResultParseError("'boolean' is not a boolean");
        return AnswerSet::from_bool(b->get<bool>());
    }
    auto results = doc.find("results");
    if (results == doc.end() || !results->is_object() || !results->contains("bindings") ||
        !(*results)["bindings"].is_array())
        throw ResultParseError("missing results.bindings");

    std::vector<std::string> vars;
    if (auto head = doc.find("head"); head != doc.end() && head->is_object() && head->contains("vars")) {
        for (const auto& v : (*head)["vars"]) vars.push_back(v.get<std::string>());
    }

    AnswerSet out;
    for (const auto& row : (*results)["bindings"]) {
        if (!row.is_object()) throw ResultParseError("binding row is not an object");
        std::vector<std::string> order = vars;
        if (order.empty())
            for (const auto& [k, _] : row.items()) order.push_back(k);
        std::string joined;
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (i > 0) joined.push_back(kUnitSeparator);
            if (auto t = row.find(order[i]); t != row.end()) joined += detail::rdf_term_text(*t);
        }
        out.values.insert(std::move(joined));
    }
    return out;
}

[[nodiscard]] inline AnswerSet parse_sparql_results_text(std::string_view body) {
    auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw ResultParseError("invalid JSON: " + excerpt(body));
    return parse_sparql_results(doc);
}

struct EndpointConfig {
    std::string url;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    /// Requests per second; <= 0 disables the limiter.
    double rate_limit = 4.0;
    std::chrono::milliseconds backoff_base{250};

    void validate() const {
        (void)parse_url(url);
        if (max_retries < 0) throw ConfigError("endpoint max_retries must be >= 0");
    }
};

/// Spaces request start times at least 1/rate apart across all threads.
class RateLimiter {
public:
    explicit RateLimiter(double per_second)
        : interval_(per_second > 0 ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                         std::chrono::duration<double>(1.0 / per_second))
                                   : std::chrono::steady_clock::duration::zero()) {}

    void acquire() {
        if (interval_ == std::chrono::steady_clock::duration::zero()) return;
        std::chrono::steady_clock::time_point slot;
        {
            std::lock_guard lock(mutex_);
            auto now = std::chrono::steady_clock::now();
            slot = std::max(now, next_);
            next_ = slot + interval_;
        }
        std::this_thread::sleep_until(slot);
    }

private:
    std::chrono::steady_clock::duration interval_;
    std::mutex mutex_;
    std::chrono::steady_clock::time_point next_{};
};

/// SPARQL 1.1 Protocol client. Short queries go out as GET, long ones as a
/// form-encoded POST. Safe to share between threads.
class SparqlClient {
public:
    static constexpr std::size_t kMaxGetQueryBytes = 1500;

    explicit SparqlClient(EndpointConfig config)
        : config_(std::move(config)), url_(parse_url(config_.url)), limiter_(config_.rate_limit) {
        config_.validate();
    }

    /// Refuses (without any network traffic) queries that fail validation.
    /// Retries transport errors and 5xx responses up to max_retries times.
    [[nodiscard]] AnswerSet execute(std::string_view query) {
        if (!validate_query(query)) throw InvalidQueryRefused();

        const std::string encoded = httplib::detail::encode_query_param(std::string(query));
        const bool use_get = encoded.size() < kMaxGetQueryBytes;
        const httplib::Headers headers = {{"Accept", "application/sparql-results+json"}};

        std::string last_error;
        bool timed_out = false;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(backoff_delay(config_.backoff_base, attempt));
            limiter_.acquire();
            requests_.fetch_add(1, std::memory_order_relaxed);
            auto client = make_http_client(url_, config_.timeout);
            const auto sent = std::chrono::steady_clock::now();
            auto res = use_get ? client->Get(url_.path + (url_.path.find('?') == std::string::npos ? "?" : "&") +
                                                 "query=" + encoded,
                                             headers)
                               : client->Post(url_.path, headers, "query=" + encoded,
                                              "application/x-www-form-urlencoded");
            if (!res) {
                timed_out = is_timeout(res.error(), std::chrono::steady_clock::now() - sent, config_.timeout);
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                timed_out = false;
                last_error = excerpt(res->body);
                if (attempt == config_.max_retries) throw EndpointError(res->status, last_error);
                continue;
            }
            if (res->status != 200) throw EndpointError(res->status, excerpt(res->body));
            return parse_sparql_results_text(res->body);
        }
        if (timed_out) throw Timeout("SPARQL endpoint " + config_.url);
        throw EndpointError(0, last_error);
    }

    /// Total HTTP requests issued, retries included.
    [[nodiscard]] std::size_t requests_sent() const noexcept { return requests_.load(); }

    [[nodiscard]] const EndpointConfig& config() const noexcept { return config_; }

private:
    EndpointConfig config_;
    ParsedUrl url_;
    RateLimiter limiter_;
    std::atomic<std::size_t> requests_{0};
};

} // namespace psychic
