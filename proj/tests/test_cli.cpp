#include <sys/wait.h>

#include <cstdlib>

#include "catch_amalgamated.hpp"

#include "psychic/config.hpp"
#include "psychic/stub_endpoint.hpp"
#include "support/fixtures.hpp"

using psychic_test::fixture;
using psychic_test::line_count;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const psychic_test::TempDir& tmp, const std::string& args) {
    auto out = tmp.file("stdout.txt");
    auto err = tmp.file("stderr.txt");
    std::string cmd = std::string("'") + PSYCHIC_CLI_PATH + "' " + args + " >'" + out + "' 2>'" + err + "'";
    int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = psychic_test::read_file(out);
    r.err = psychic_test::read_file(err);
    return r;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

std::string write_config(const psychic_test::TempDir& tmp, const std::string& endpoint_url,
                         const std::string& extra = "") {
    return tmp.write("run.json", R"({"dataset": ")" + fixture("small_records.json") + R"(", "output_dir": ")" +
                                     tmp.file("out") + R"(", "endpoint": {"url": ")" + endpoint_url +
                                     R"(", "rate_limit": 0, "max_retries": 0, "backoff_ms": 1})" + extra + "}");
}

struct EnvUnset {
    EnvUnset() { unsetenv(psychic::kEndpointEnvVar); }
    ~EnvUnset() { unsetenv(psychic::kEndpointEnvVar); }
};

} // namespace

TEST_CASE("cli usage errors exit with 1", "[cli]") {
    EnvUnset env;
    psychic_test::TempDir tmp;
    CHECK(run_cli(tmp, "").code == 1);
    CHECK(run_cli(tmp, "frobnicate").code == 1);
    CHECK(run_cli(tmp, "--phase test run").code == 1);
    CHECK(run_cli(tmp, "--config " + q(tmp.file("missing.toml")) + " run").code == 1);
    CHECK(run_cli(tmp, "--output-dir " + q(tmp.file("o")) + " run").code == 1);
    CHECK(run_cli(tmp, "sanitize --out x.jsonl").code == 1);
    CHECK(run_cli(tmp, "--help").code == 0);
}

TEST_CASE("cli run scores a dev run against the stub", "[cli]") {
    EnvUnset env;
    psychic_test::TempDir tmp;
    psychic::StubSparqlEndpoint stub(fixture("stub_answers.json"));
    stub.start();
    auto cfg = write_config(tmp, stub.url());
    auto r = run_cli(tmp, "--config " + q(cfg) + " run --run-id cli");
    INFO(r.err);
    CHECK(r.code == 0);
    CHECK(r.out.find("| run   | 100.00 | 100.00 |") != std::string::npos);
    CHECK(line_count(tmp.path() / "out" / "cli" / "sanitized.jsonl") == 40);
    CHECK(std::filesystem::exists(tmp.path() / "out" / "cli" / "report.json"));
}

TEST_CASE("cli final phase requires candidates", "[cli]") {
    EnvUnset env;
    psychic_test::TempDir tmp;
    auto base = "--output-dir " + q(tmp.file("o")) + " --phase final run --dataset " + q(fixture("small_questions.json"));
    CHECK(run_cli(tmp, base).code == 1);
    auto ok = run_cli(tmp, base + " --candidates " + q(fixture("el_candidates.jsonl")));
    CHECK(ok.code == 0);
    CHECK(ok.out.find("evaluation skipped") != std::string::npos);
    CHECK(run_cli(tmp, base + " --candidates " + q(tmp.write("bad.jsonl", "nope\n"))).code == 2);
}

TEST_CASE("cli environment variable overrides the configured endpoint", "[cli]") {
    EnvUnset env;
    psychic_test::TempDir tmp;
    psychic::StubSparqlEndpoint stub(fixture("stub_answers.json"));
    stub.start();
    auto cfg = write_config(tmp, "http://127.0.0.1:1/sparql");
    setenv(psychic::kEndpointEnvVar, stub.url().c_str(), 1);
    auto r = run_cli(tmp, "--config " + q(cfg) + " run");
    INFO(r.err);
    CHECK(r.code == 0);
    CHECK(stub.request_count() > 0);
    CHECK(r.out.find("100.00") != std::string::npos);
}

TEST_CASE("cli stages chain through files", "[cli]") {
    EnvUnset env;
    psychic_test::TempDir tmp;
    psychic::StubSparqlEndpoint stub(fixture("stub_answers.json"));
    stub.start();
    auto cfg = "--config " + q(write_config(tmp, stub.url())) + " ";
    auto out = [&](const char* name) { return tmp.file(std::string("out/") + name); };

    auto ingest = run_cli(tmp, cfg + "ingest");
    INFO(ingest.err);
    REQUIRE(ingest.code == 0);
    CHECK(line_count(out("instances.jsonl")) == 40);

    REQUIRE(run_cli(tmp, cfg + "ground").code == 0);
    CHECK(line_count(out("grounded.jsonl")) == 40);

    REQUIRE(run_cli(tmp, cfg + "predict --backend oracle_mangled --in " + q(out("grounded.jsonl"))).code == 0);
    CHECK(line_count(out("raw.jsonl")) == 40);

    auto sanitized = tmp.file("s.jsonl");
    REQUIRE(run_cli(tmp, cfg + "sanitize --in " + q(out("raw.jsonl")) + " --out " + q(sanitized) + " --vocab " +
                             q(psychic_test::data_file("dblp_schema_vocab.txt")))
                .code == 0);
    CHECK(line_count(sanitized) == 40);

    REQUIRE(run_cli(tmp, cfg + "execute --in " + q(sanitized)).code == 0);
    CHECK(line_count(out("answers.jsonl")) == 40);

    auto eval = run_cli(tmp, cfg + "evaluate --sanitized " + q(sanitized) + " --answers " + q(out("answers.jsonl")));
    INFO(eval.err);
    CHECK(eval.code == 0);
    CHECK(eval.out.find("| run   | 100.00 | 100.00 |") != std::string::npos);
    CHECK(std::filesystem::exists(out("report.json")));
}

TEST_CASE("cli run-level failures exit with 2", "[cli]") {
    EnvUnset env;
    psychic_test::TempDir tmp;
    auto cfg = write_config(tmp, "http://127.0.0.1:1/sparql",
                            R"(, "backend": {"kind": "remote", "endpoint": "http://127.0.0.1:1", "max_retries": 0})");
    auto grounded = tmp.write("g.jsonl", R"({"instance_id": "A#q", "question": "q", "context": "[CLS] <a://b>", "phase": "final", "chunk_count": 1})"
                                         "\n");
    auto r = run_cli(tmp, "--config " + q(cfg) + " predict --in " + q(grounded));
    CHECK(r.code == 2);
    CHECK(line_count(tmp.file("out/raw.jsonl")) == 1);

    CHECK(run_cli(tmp, "sanitize --in " + q(tmp.write("raw.jsonl", "{oops\n"))).code == 2);
    CHECK(run_cli(tmp, "execute --in " + q(tmp.file("none.jsonl")) + " --endpoint ftp://x").code == 1);
}
