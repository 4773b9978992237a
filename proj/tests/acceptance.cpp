// Acceptance checks for the question-answering pipeline. Prints one
// PASS/FAIL line per criterion and exits non-zero when any criterion fails.

#include <chrono>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "psychic/psychic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/query_gen.hpp"

using namespace psychic;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void expect(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// The reference damaged pair and its canonical form.
Outcome reference_example() {
    Outcome o;
    const std::string damaged_query = "select distinct? answer where {? answer < https : / / dblp. org / rdf / schema # "
                                      "authoredby > < https : / / dblp. org / pid / 00 / 2941 > }";
    const std::string canonical_query = "select distinct ?answer where { ?answer "
                                        "<https://dblp.org/rdf/schema#authoredBy> <https://dblp.org/pid/00/2941> }";
    const std::string damaged_entities = "['< https : / / dblp. org / pid / 00 / 2941 >']";

    auto t0 = Clock::now();
    auto q = sanitize_query(damaged_query);
    auto e = sanitize_entities(damaged_entities);
    double elapsed = seconds_since(t0);
    o.expect(q.query == canonical_query, "query restored as '" + q.query + "'");
    o.expect(e == std::vector<std::string>{"<https://dblp.org/pid/00/2941>"}, "entity list not restored");
    o.expect(simulate_mangle(canonical_query) == damaged_query, "mangle does not reproduce the damaged query");
    auto whole = sanitize_prediction(damaged_query + " [SEP] " + damaged_entities);
    o.expect(whole.query == canonical_query && whole.valid_query && whole.valid_entities,
             "combined output not restored");
    o.expect(elapsed < 0.001, "took " + std::to_string(elapsed * 1000.0) + " ms");
    return o;
}

Outcome dev_oracle_run() {
    Outcome o;
    psychic_test::TempDir tmp;
    StubSparqlEndpoint stub(psychic_test::fixture("stub_answers.json"));
    stub.start();

    RunConfig cfg;
    cfg.dataset_path = psychic_test::fixture("dev_records.json");
    cfg.output_dir = tmp.file("runs");
    EndpointConfig endpoint{stub.url()};
    endpoint.rate_limit = 0;
    cfg.endpoint = endpoint;

    auto t0 = Clock::now();
    auto art = run_pipeline(cfg);
    double elapsed = seconds_since(t0);
    auto records = load_quad_records(cfg.dataset_path, LoadMode::full);
    o.expect(records.size() >= 200, "only " + std::to_string(records.size()) + " records");
    o.expect(art.report.has_value(), "no report produced");
    if (art.report) {
        o.expect(format_percent(art.report->f1_qa) == "100.00", "F1-QA " + format_percent(art.report->f1_qa));
        o.expect(format_percent(art.report->f1_el) == "100.00", "F1-EL " + format_percent(art.report->f1_el));
    }
    o.expect(elapsed < 30.0, "took " + std::to_string(elapsed) + " s");
    if (o.pass) o.detail = std::to_string(records.size()) + " records in " + std::to_string(elapsed) + " s";
    return o;
}

Outcome damage_roundtrip() {
    Outcome o;
    psychic_test::QueryGenerator gen(20240101);
    auto t0 = Clock::now();
    for (int i = 0; i < 1000 && o.pass; ++i) {
        auto q = gen.query();
        auto repaired = sanitize_query(simulate_mangle(q)).query;
        o.expect(repaired == q, "query " + std::to_string(i) + " restored as '" + repaired + "'");
        o.expect(validate_query(repaired), "query " + std::to_string(i) + " does not validate");
    }
    for (int i = 0; i < 1000 && o.pass; ++i) {
        auto ents = gen.entity_list();
        o.expect(sanitize_entities(simulate_mangle(serialize_entities(ents))) == ents,
                 "entity list " + std::to_string(i) + " not restored");
    }
    double elapsed = seconds_since(t0);
    o.expect(elapsed < 10.0, "took " + std::to_string(elapsed) + " s");
    return o;
}

Outcome f1_oracle() {
    Outcome o;
    std::mt19937_64 rng(8128);
    for (int i = 0; i < 500 && o.pass; ++i) {
        auto pred = psychic_test::random_symbol_set(rng);
        auto gold = psychic_test::random_symbol_set(rng);
        auto got = score_question(pred, gold);
        auto want = psychic_test::brute_force_f1(pred, gold);
        o.expect(got.precision == want.precision && got.recall == want.recall && got.f1 == want.f1,
                 "pair " + std::to_string(i) + " disagrees with the reference");
    }
    o.expect(score_question({"a", "b", "c"}, {"a", "d"}).f1 > 0.4 - 1e-12 &&
                 score_question({"a", "b", "c"}, {"a", "d"}).f1 < 0.4 + 1e-12,
             "worked example is not 0.4");
    return o;
}

Outcome protocol_conformance() {
    using nlohmann::json;
    Outcome o;
    const std::string select = "select distinct ?answer where { ?answer <https://dblp.org/rdf/schema#authoredBy> "
                               "<https://dblp.org/pid/00/2941> }";
    const std::string ask = "ask { <https://dblp.org/rec/conf/x/y> <https://dblp.org/rdf/schema#authoredBy> "
                            "<https://dblp.org/pid/00/2941> }";
    StubSparqlEndpoint stub;
    stub.add(select, json::parse(R"({"head":{"vars":["answer"]},"results":{"bindings":[
        {"answer":{"type":"uri","value":"https://dblp.org/rec/a"}},
        {"answer":{"type":"uri","value":"https://dblp.org/rec/b"}},
        {"answer":{"type":"uri","value":"https://dblp.org/rec/a"}}]}})"));
    stub.add(ask, json::parse(R"({"head":{},"boolean":true})"));
    stub.start();

    EndpointConfig cfg{stub.url()};
    cfg.rate_limit = 0;
    cfg.max_retries = 2;
    cfg.backoff_base = std::chrono::milliseconds(1);
    SparqlClient client(cfg);

    auto rows = client.execute(select);
    o.expect(rows.values == std::set<std::string>{"<https://dblp.org/rec/a>", "<https://dblp.org/rec/b>"},
             "bindings not deduplicated into a set");
    auto truth = client.execute(ask);
    o.expect(truth.kind == AnswerSet::Kind::boolean && truth.truth == true, "boolean result not parsed");

    auto before = stub.request_count();
    bool refused = false;
    try {
        (void)client.execute("select ?x where { ?x");
    } catch (const InvalidQueryRefused&) {
        refused = true;
    }
    o.expect(refused && stub.request_count() == before, "invalid query was sent or not refused");

    before = stub.request_count();
    stub.fail_next(503, 100);
    bool failed = false;
    try {
        (void)client.execute(ask);
    } catch (const EndpointError&) {
        failed = true;
    }
    auto attempts = stub.request_count() - before;
    o.expect(failed && attempts == 1 + static_cast<std::size_t>(cfg.max_retries),
             "5xx made " + std::to_string(attempts) + " attempts");

    before = stub.request_count();
    stub.fail_next(400, 100);
    failed = false;
    try {
        (void)client.execute(ask);
    } catch (const EndpointError&) {
        failed = true;
    }
    o.expect(failed && stub.request_count() - before == 1, "4xx was retried");
    stub.fail_next(400, 0);
    return o;
}

Outcome determinism() {
    Outcome o;
    psychic_test::TempDir tmp;
    StubSparqlEndpoint stub(psychic_test::fixture("stub_answers.json"));
    stub.start();
    RunConfig cfg;
    cfg.dataset_path = psychic_test::fixture("small_records.json");
    cfg.output_dir = tmp.file("runs");
    cfg.backend.kind = BackendKind::oracle_mangled;
    EndpointConfig endpoint{stub.url()};
    endpoint.rate_limit = 0;
    cfg.endpoint = endpoint;

    auto a = run_pipeline(cfg);
    auto b = run_pipeline(cfg);
    o.expect(psychic_test::read_file(a.sanitized_file) == psychic_test::read_file(b.sanitized_file),
             "sanitized.jsonl differs between runs");
    o.expect(a.report_file && b.report_file &&
                 psychic_test::read_file(*a.report_file) == psychic_test::read_file(*b.report_file),
             "report.json differs between runs");
    for (const auto* art : {&a, &b}) {
        auto n = art->instance_count;
        for (const auto& f : {art->grounded_file, art->raw_file, art->sanitized_file, art->answers_file})
            o.expect(psychic_test::line_count(f) == n, f.filename().string() + " has a different line count");
    }
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 reference damaged pair restores exactly", reference_example},
        {"2 dev oracle run over >=200 records scores 100.00/100.00 in <30s", dev_oracle_run},
        {"3 1000 queries and 1000 entity lists survive damage and repair in <10s", damage_roundtrip},
        {"4 F1 matches the brute-force reference on 500 random pairs", f1_oracle},
        {"5 SPARQL protocol conformance against the stub endpoint", protocol_conformance},
        {"6 identical runs give byte-identical artifacts and equal stage counts", determinism},
    };

    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name;
        if (!o.detail.empty()) std::cout << "  (" << o.detail << ")";
        std::cout << '\n';
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
