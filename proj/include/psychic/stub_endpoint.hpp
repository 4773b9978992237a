#pragma once

#include <atomic>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "psychic/error.hpp"
#include "psychic/uri.hpp"

namespace psychic {

/// Lookup key for canned answers: whitespace collapsed and everything
/// outside URIs and quoted literals lowercased, so keyword case and spacing
/// do not matter but URI spelling does.
[[nodiscard]] inline std::string canonical_query_key(std::string_view q) {
    std::string out;
    out.reserve(q.size());
    bool pending_space = false;
    for (std::size_t i = 0; i < q.size();) {
        char c = q[i];
        if (detail::is_space(c)) {
            pending_space = !out.empty();
            ++i;
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        if (c == '<' || c == '"') {
            char close = c == '<' ? '>' : '"';
            auto end = q.find(close, i + 1);
            if (end != std::string_view::npos &&
                (c == '"' || q.substr(i, end - i).find_first_of(" \t\r\n") == std::string_view::npos)) {
                out.append(q.substr(i, end - i + 1));
                i = end + 1;
                continue;
            }
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        ++i;
    }
    return out;
}

/// Local SPARQL 1.1 Protocol endpoint answering from canned JSON result
/// documents. Unknown SELECT queries get an empty result, unknown ASK
/// queries `false`. Failure injection: the next N requests can be forced to
/// return a given status.
class StubSparqlEndpoint {
public:
    StubSparqlEndpoint() { install_routes(); }

    explicit StubSparqlEndpoint(const std::string& canned_file) : StubSparqlEndpoint() { load(canned_file); }

    ~StubSparqlEndpoint() { stop(); }

    StubSparqlEndpoint(const StubSparqlEndpoint&) = delete;
    StubSparqlEndpoint& operator=(const StubSparqlEndpoint&) = delete;

    /// Canned file: JSON array of {"query": string, "response": results-json}.
    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open canned answers " + path);
        auto doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded() || !doc.is_array()) throw ConfigError("canned answers must be a JSON array: " + path);
        for (const auto& item : doc) add(item.at("query").get<std::string>(), item.at("response"));
    }

    void add(std::string_view query, const nlohmann::json& response) {
        std::lock_guard lock(mutex_);
        canned_[canonical_query_key(query)] = response.dump();
    }

    /// Next `count` requests answer with `status` and a short error body.
    void fail_next(int status, int count) {
        std::lock_guard lock(mutex_);
        forced_status_ = status;
        forced_remaining_ = count;
    }

    /// Binds to an ephemeral port on localhost and serves in the background.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (port_ <= 0) throw ConfigError("stub endpoint cannot bind " + host);
        host_ = host;
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    /// Blocks serving requests (CLI use).
    void serve(const std::string& host, int port) {
        host_ = host;
        port_ = port;
        if (!server_.listen(host, port)) throw ConfigError("stub endpoint cannot listen on port " + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    [[nodiscard]] std::string url() const { return "http://" + host_ + ":" + std::to_string(port_) + "/sparql"; }

    [[nodiscard]] std::size_t request_count() const noexcept { return requests_.load(); }

    [[nodiscard]] std::vector<std::string> received_queries() const {
        std::lock_guard lock(mutex_);
        return received_;
    }

    [[nodiscard]] std::vector<std::string> received_methods() const {
        std::lock_guard lock(mutex_);
        return methods_;
    }

private:
    void install_routes() {
        auto handler = [this](const httplib::Request& req, httplib::Response& res) {
            requests_.fetch_add(1);
            std::string query = req.get_param_value("query");
            std::string body;
            int forced = 0;
            {
                std::lock_guard lock(mutex_);
                received_.push_back(query);
                methods_.push_back(req.method);
                if (forced_remaining_ > 0) {
                    --forced_remaining_;
                    forced = forced_status_;
                } else if (auto it = canned_.find(canonical_query_key(query)); it != canned_.end()) {
                    body = it->second;
                }
            }
            if (forced != 0) {
                res.status = forced;
                res.set_content("injected failure", "text/plain");
                return;
            }
            if (query.empty()) {
                res.status = 400;
                res.set_content("missing query parameter", "text/plain");
                return;
            }
            if (body.empty()) {
                auto key = canonical_query_key(query);
                body = key.starts_with("ask") ? R"({"head":{},"boolean":false})"
                                              : R"({"head":{"vars":[]},"results":{"bindings":[]}})";
            }
            res.set_content(body, "application/sparql-results+json");
        };
        server_.Get("/sparql", handler);
        server_.Post("/sparql", handler);
    }

    httplib::Server server_;
    std::thread thread_;
    std::string host_ = "127.0.0.1";
    int port_ = 0;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::string> canned_;
    std::vector<std::string> received_;
    std::vector<std::string> methods_;
    int forced_status_ = 0;
    int forced_remaining_ = 0;
    std::atomic<std::size_t> requests_{0};
};

} // namespace psychic
