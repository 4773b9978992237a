#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace psychic {

/// Base of every exception raised by the library. `kind()` is a stable
/// machine-readable tag used in stage artifacts and CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

// dataset

class MalformedRecord : public Error {
public:
    MalformedRecord(std::string location, std::string field, const std::string& detail = {})
        : Error("MalformedRecord", "malformed record at " + location + ": field '" + field + "'" +
                                       (detail.empty() ? "" : " (" + detail + ")")),
          location_(std::move(location)), field_(std::move(field)) {}

    [[nodiscard]] const std::string& location() const noexcept { return location_; }
    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string location_;
    std::string field_;
};

class DuplicateId : public Error {
public:
    explicit DuplicateId(const std::string& id) : Error("DuplicateId", "duplicate record id '" + id + "'") {}
};

class InvalidEntityUri : public Error {
public:
    InvalidEntityUri(const std::string& id, const std::string& value)
        : Error("InvalidEntityUri",
                (id.empty() ? std::string{} : "record '" + id + "': ") + "invalid entity URI '" + value + "'") {}
};

class MissingParaphrase : public Error {
public:
    explicit MissingParaphrase(const std::string& id)
        : Error("MissingParaphrase", "record '" + id + "' has no paraphrased_question") {}
};

// grounding

class IncompleteRecord : public Error {
public:
    explicit IncompleteRecord(std::string field)
        : Error("IncompleteRecord", "record is missing field '" + field + "'"), field_(std::move(field)) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class NoCandidates : public Error {
public:
    NoCandidates() : Error("NoCandidates", "no entity-linker candidates to ground") {}
};

class ReservedToken : public Error {
public:
    ReservedToken(const std::string& field, const std::string& token)
        : Error("ReservedToken", "field '" + field + "' contains reserved token " + token) {}
};

// model backend

class BackendUnavailable : public Error {
public:
    BackendUnavailable(const std::string& endpoint, const std::string& detail)
        : Error("BackendUnavailable", "backend " + endpoint + " unavailable: " + detail) {}
};

class MissingOracleTarget : public Error {
public:
    explicit MissingOracleTarget(const std::string& instance)
        : Error("MissingOracleTarget", "no oracle target registered for '" + instance + "'") {}
};

class Timeout : public Error {
public:
    explicit Timeout(const std::string& what) : Error("Timeout", what + " timed out") {}
};

// sparql client

class InvalidQueryRefused : public Error {
public:
    InvalidQueryRefused() : Error("InvalidQueryRefused", "query does not validate; refusing to execute") {}
};

class EndpointError : public Error {
public:
    EndpointError(int status, const std::string& excerpt)
        : Error("EndpointError", "endpoint returned status " + std::to_string(status) + ": " + excerpt),
          status_(status) {}

    [[nodiscard]] int status() const noexcept { return status_; }

private:
    int status_;
};

class ResultParseError : public Error {
public:
    explicit ResultParseError(const std::string& detail)
        : Error("ResultParseError", "cannot parse SPARQL results: " + detail) {}
};

// evaluation

class JoinError : public Error {
public:
    explicit JoinError(const std::string& instance_id)
        : Error("JoinError", "prediction '" + instance_id + "' has no matching gold record") {}
};

class MissingGoldAnswers : public Error {
public:
    explicit MissingGoldAnswers(const std::string& record_id)
        : Error("MissingGoldAnswers", "no gold answers available for record '" + record_id + "'") {}
};

// orchestrator

class MalformedCandidate : public Error {
public:
    MalformedCandidate(std::size_t line, const std::string& detail)
        : Error("MalformedCandidate", "candidates line " + std::to_string(line) + ": " + detail), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& detail) : Error("ConfigError", detail) {}
};

} // namespace psychic
