#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>

#include "httplib.h"
#include "json.hpp"

#include "psychic/error.hpp"
#include "psychic/grounding.hpp"
#include "psychic/http_util.hpp"
#include "psychic/mangle.hpp"

namespace psychic {

struct RawModelOutput {
    std::string text;
    std::string backend_id;
    std::chrono::milliseconds latency{0};
};

enum class BackendKind { oracle, oracle_mangled, remote };

[[nodiscard]] inline std::string_view to_string(BackendKind k) noexcept {
    switch (k) {
    case BackendKind::oracle: return "oracle";
    case BackendKind::oracle_mangled: return "oracle_mangled";
    case BackendKind::remote: return "remote";
    }
    return "?";
}

[[nodiscard]] inline BackendKind parse_backend_kind(std::string_view s) {
    if (s == "oracle") return BackendKind::oracle;
    if (s == "oracle_mangled") return BackendKind::oracle_mangled;
    if (s == "remote") return BackendKind::remote;
    throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

struct BackendConfig {
    BackendKind kind = BackendKind::oracle;
    std::optional<std::string> endpoint;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{250};
    std::ptrdiff_t max_in_flight = 8;

    void validate() const {
        if (kind == BackendKind::remote && (!endpoint || endpoint->empty()))
            throw ConfigError("remote backend requires an endpoint");
        if (max_retries < 0) throw ConfigError("backend max_retries must be >= 0");
        if (max_in_flight < 1) throw ConfigError("backend max_in_flight must be >= 1");
    }
};

/// Instance id -> training target, supplied by the orchestrator.
using OracleTargets = std::unordered_map<std::string, TargetString>;

class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    /// Answer span for one grounded instance. Implementations are safe to
    /// call concurrently.
    virtual RawModelOutput predict(const std::string& instance_id, std::string_view question,
                                   const ContextString& context) = 0;
};

/// Returns the registered target, optionally damaged by simulate_mangle.
class OracleBackend final : public ModelBackend {
public:
    OracleBackend(OracleTargets targets, bool mangle)
        : targets_(std::move(targets)), mangle_(mangle) {}

    RawModelOutput predict(const std::string& instance_id, std::string_view,
                           const ContextString&) override {
        auto it = targets_.find(instance_id);
        if (it == targets_.end()) throw MissingOracleTarget(instance_id);
        if (mangle_) return {simulate_mangle(it->second.text), "oracle_mangled", {}};
        return {it->second.text, "oracle", {}};
    }

private:
    const OracleTargets targets_;
    const bool mangle_;
};

/// Client for the model service: POST {endpoint}/predict with
/// {"question", "context"}, expects {"answer", "score"}.
class RemoteBackend final : public ModelBackend {
public:
    explicit RemoteBackend(BackendConfig config)
        : config_(std::move(config)), url_(parse_url(config_.endpoint.value_or(""))),
          in_flight_(config_.max_in_flight) {
        if (url_.path.ends_with('/')) url_.path.pop_back();
        url_.path += "/predict";
    }

    RawModelOutput predict(const std::string&, std::string_view question, const ContextString& context) override {
        const auto body = nlohmann::json{{"question", question}, {"context", context.text}}.dump();
        const auto started = std::chrono::steady_clock::now();

        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{in_flight_};

        std::string last_error;
        bool timed_out = false;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(backoff_delay(config_.backoff_base, attempt));
            auto client = make_http_client(url_, config_.timeout);
            const auto sent = std::chrono::steady_clock::now();
            auto res = client->Post(url_.path, body, "application/json");
            if (!res) {
                timed_out = is_timeout(res.error(), std::chrono::steady_clock::now() - sent, config_.timeout);
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                timed_out = false;
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw BackendUnavailable(*config_.endpoint, "status " + std::to_string(res->status));
            auto j = nlohmann::json::parse(res->body, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("answer") || !j["answer"].is_string())
                throw BackendUnavailable(*config_.endpoint, "malformed response: " + excerpt(res->body));
            auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);
            return {j["answer"].get<std::string>(), "remote", latency};
        }
        if (timed_out) throw Timeout("model backend " + *config_.endpoint);
        throw BackendUnavailable(*config_.endpoint, last_error);
    }

private:
    BackendConfig config_;
    ParsedUrl url_;
    std::counting_semaphore<> in_flight_;
};

[[nodiscard]] inline std::unique_ptr<ModelBackend> make_backend(const BackendConfig& config, OracleTargets targets = {}) {
    config.validate();
    switch (config.kind) {
    case BackendKind::oracle:
        return std::make_unique<OracleBackend>(std::move(targets), false);
    case BackendKind::oracle_mangled:
        return std::make_unique<OracleBackend>(std::move(targets), true);
    case BackendKind::remote:
        return std::make_unique<RemoteBackend>(config);
    }
    throw ConfigError("unknown backend kind");
}

} // namespace psychic
