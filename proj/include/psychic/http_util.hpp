#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "httplib.h"

#include "psychic/error.hpp"

namespace psychic {

/// An absolute http(s) URL split into the part httplib wants for the client
/// (`scheme://host:port`) and the request path.
struct ParsedUrl {
    std::string origin;
    std::string path;
};

[[nodiscard]] inline ParsedUrl parse_url(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ConfigError("URL is not absolute: " + std::string(url));
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme: " + std::string(url));
    auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    out.origin = std::string(url.substr(0, path_start));
    out.path = path_start == std::string_view::npos ? "/" : std::string(url.substr(path_start));
    if (out.origin.size() <= scheme_end + 3) throw ConfigError("URL has no host: " + std::string(url));
    return out;
}

[[nodiscard]] inline std::unique_ptr<httplib::Client> make_http_client(const ParsedUrl& url,
                                                                       std::chrono::milliseconds timeout) {
    auto client = std::make_unique<httplib::Client>(url.origin);
    if (!client->is_valid()) throw ConfigError("cannot create HTTP client for " + url.origin);
    client->set_connection_timeout(timeout);
    client->set_read_timeout(timeout);
    client->set_write_timeout(timeout);
    return client;
}

/// httplib reports an expired read timeout as a plain read error, so the
/// elapsed time decides.
[[nodiscard]] inline bool is_timeout(httplib::Error error, std::chrono::steady_clock::duration elapsed,
                                     std::chrono::milliseconds timeout) noexcept {
    if (error == httplib::Error::ConnectionTimeout) return true;
    return (error == httplib::Error::Read || error == httplib::Error::Write) && elapsed >= timeout;
}

/// Exponential backoff delay before retry number `attempt` (1-based).
[[nodiscard]] inline std::chrono::milliseconds backoff_delay(std::chrono::milliseconds base, int attempt) {
    auto factor = std::int64_t{1} << std::min(attempt - 1, 16);
    return base * factor;
}

[[nodiscard]] inline std::string excerpt(std::string_view body, std::size_t limit = 200) {
    if (body.size() <= limit) return std::string(body);
    return std::string(body.substr(0, limit)) + "...";
}

} // namespace psychic
