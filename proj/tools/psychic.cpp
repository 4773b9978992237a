// Command-line front end: one subcommand per pipeline stage plus `run` for
// the whole pipeline and `serve-stub` for a local canned SPARQL endpoint.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 run-level failure.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "psychic/psychic.hpp"

namespace fs = std::filesystem;
using namespace psychic;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRun = 2;

struct GlobalOptions {
    std::string config;
    std::string output_dir;
    std::string phase;
};

RunConfig base_config(const GlobalOptions& g) {
    RunConfig c;
    if (!g.config.empty()) {
        c = load_run_config(g.config);
    } else {
        apply_environment(c);
    }
    if (!g.output_dir.empty()) c.output_dir = g.output_dir;
    if (!g.phase.empty()) c.phase = parse_phase(g.phase);
    return c;
}

std::string output_path(const RunConfig& c, const std::string& explicit_path, const char* name) {
    if (!explicit_path.empty()) return explicit_path;
    fs::create_directories(c.output_dir);
    return (fs::path(c.output_dir) / name).string();
}

std::optional<LoadMode> parse_mode(const std::string& s) {
    if (s.empty()) return std::nullopt;
    if (s == "full") return LoadMode::full;
    if (s == "questions_only") return LoadMode::questions_only;
    throw ConfigError("unknown dataset mode '" + s + "'");
}

void require_dataset(const RunConfig& c) {
    if (c.dataset_path.empty()) throw ConfigError("a dataset is required (--dataset or config)");
}

std::unique_ptr<SparqlClient> make_client(const RunConfig& c) {
    if (!c.endpoint) return nullptr;
    return std::make_unique<SparqlClient>(*c.endpoint);
}

void set_endpoint(RunConfig& c, const std::string& url) {
    if (url.empty()) return;
    if (!c.endpoint) c.endpoint = EndpointConfig{};
    c.endpoint->url = url;
    // PSYCHIC_SPARQL_ENDPOINT overrides flags and files
    apply_environment(c);
}

std::size_t count_errors(const auto& items) {
    std::size_t n = 0;
    for (const auto& i : items) n += i.error ? 1 : 0;
    return n;
}

StubSparqlEndpoint* g_stub = nullptr;

extern "C" void stop_stub(int) {
    if (g_stub) g_stub->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neuro-symbolic question answering over the DBLP scholarly knowledge graph"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "Run configuration (.toml or .json)");
    app.add_option("--output-dir", g.output_dir, "Directory for stage outputs");
    app.add_option("--phase", g.phase, "dev or final")->check(CLI::IsMember({"dev", "final"}));

    std::string dataset, mode, candidates, in, out, vocab, backend, model_url, endpoint, sanitized_in, answers_in,
        gold_cache, run_id, canned, host = "127.0.0.1";
    int port = 8890;
    std::size_t workers = 0;
    std::optional<double> rate_limit;

    auto* ingest = app.add_subcommand("ingest", "Load and validate a dataset, write one line per instance");
    ingest->add_option("--dataset", dataset, "Dataset JSON file");
    ingest->add_option("--mode", mode, "full or questions_only");
    ingest->add_option("--out", out, "Output JSONL (default <output-dir>/instances.jsonl)");

    auto* ground = app.add_subcommand("ground", "Build model contexts for every instance");
    ground->add_option("--dataset", dataset, "Dataset JSON file");
    ground->add_option("--mode", mode, "full or questions_only");
    ground->add_option("--candidates", candidates, "Entity-linker candidates JSONL (final phase)");
    ground->add_option("--out", out, "Output JSONL (default <output-dir>/grounded.jsonl)");

    auto* predict = app.add_subcommand("predict", "Run the model backend over grounded instances");
    predict->add_option("--in", in, "grounded.jsonl")->required();
    predict->add_option("--out", out, "Output JSONL (default <output-dir>/raw.jsonl)");
    predict->add_option("--backend", backend, "oracle, oracle_mangled or remote");
    predict->add_option("--model-url", model_url, "Base URL of the model service");
    predict->add_option("--workers", workers, "Concurrent requests");

    auto* sanitize = app.add_subcommand("sanitize", "Repair raw model outputs into queries and entity lists");
    sanitize->add_option("--in", in, "raw.jsonl")->required();
    sanitize->add_option("--out", out, "Output JSONL (default <output-dir>/sanitized.jsonl)");
    sanitize->add_option("--vocab", vocab, "Schema vocabulary file");

    auto* execute = app.add_subcommand("execute", "Execute sanitized queries against the SPARQL endpoint");
    execute->add_option("--in", in, "sanitized.jsonl")->required();
    execute->add_option("--out", out, "Output JSONL (default <output-dir>/answers.jsonl)");
    execute->add_option("--endpoint", endpoint, "SPARQL endpoint URL");
    execute->add_option("--workers", workers, "Concurrent requests");
    execute->add_option("--rate-limit", rate_limit, "Endpoint requests per second (0 disables)");

    auto* evaluate = app.add_subcommand("evaluate", "Score executed answers against gold data");
    evaluate->add_option("--dataset", dataset, "Full-mode dataset with gold queries");
    evaluate->add_option("--sanitized", sanitized_in, "sanitized.jsonl")->required();
    evaluate->add_option("--answers", answers_in, "answers.jsonl")->required();
    evaluate->add_option("--endpoint", endpoint, "SPARQL endpoint URL for gold answers");
    evaluate->add_option("--gold-cache", gold_cache, "Gold answer cache JSONL");
    evaluate->add_option("--rate-limit", rate_limit, "Endpoint requests per second (0 disables)");

    auto* run = app.add_subcommand("run", "Run every stage and write a run directory");
    run->add_option("--dataset", dataset, "Dataset JSON file");
    run->add_option("--candidates", candidates, "Entity-linker candidates JSONL");
    run->add_option("--backend", backend, "oracle, oracle_mangled or remote");
    run->add_option("--endpoint", endpoint, "SPARQL endpoint URL");
    run->add_option("--run-id", run_id, "Fixed run directory name");
    run->add_option("--rate-limit", rate_limit, "Endpoint requests per second (0 disables)");

    auto* serve = app.add_subcommand("serve-stub", "Serve canned SPARQL answers until interrupted");
    serve->add_option("--canned", canned, "JSON array of {query, response}")->required();
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        RunConfig cfg = base_config(g);
        if (!dataset.empty()) cfg.dataset_path = fs::absolute(dataset).string();
        if (auto m = parse_mode(mode)) cfg.dataset_mode = m;
        if (!candidates.empty()) {
            cfg.el_provider = ElProviderKind::file;
            cfg.candidates_path = candidates;
        }
        if (!backend.empty()) cfg.backend.kind = parse_backend_kind(backend);
        if (!model_url.empty()) cfg.backend.endpoint = model_url;
        if (!vocab.empty()) cfg.vocab_path = vocab;
        if (!gold_cache.empty()) cfg.gold_cache_path = gold_cache;
        if (!run_id.empty()) cfg.run_id = run_id;
        if (workers > 0) cfg.workers = workers;
        set_endpoint(cfg, endpoint);
        if (rate_limit && cfg.endpoint) cfg.endpoint->rate_limit = *rate_limit;

        if (*ingest) {
            require_dataset(cfg);
            auto records = load_quad_records(cfg.dataset_path, cfg.effective_mode());
            auto instances = expand_paraphrases(records);
            auto path = output_path(cfg, out, "instances.jsonl");
            std::ofstream o(path, std::ios::binary);
            for (const auto& inst : instances) {
                nlohmann::ordered_json j;
                j["instance_id"] = inst.instance_id;
                j["record_id"] = inst.source->id;
                j["phrasing"] = inst.phrasing == Phrasing::question ? "question" : "paraphrase";
                j["question"] = inst.question;
                o << j.dump() << '\n';
            }
            std::cout << records.size() << " records, " << instances.size() << " instances -> " << path << '\n';
            return kExitOk;
        }

        if (*ground) {
            require_dataset(cfg);
            if (cfg.phase == Phase::final && !cfg.candidates_path)
                throw ConfigError("final phase requires --candidates");
            auto records = load_quad_records(cfg.dataset_path, cfg.effective_mode());
            auto instances = expand_paraphrases(records);
            CandidateMap cands;
            if (cfg.candidates_path) cands = load_el_candidates(*cfg.candidates_path);
            auto grounded = ground_instances(cfg.phase, instances, cfg.phase == Phase::final ? &cands : nullptr);
            auto path = output_path(cfg, out, "grounded.jsonl");
            write_jsonl(path, grounded);
            std::cout << grounded.size() << " grounded, " << count_errors(grounded) << " failed -> " << path << '\n';
            return kExitOk;
        }

        if (*predict) {
            auto grounded = read_jsonl<GroundedInstance>(in, grounded_from_json);
            auto model = make_backend(cfg.backend, oracle_targets(grounded));
            auto raw = predict_all(*model, grounded, cfg.workers);
            auto path = output_path(cfg, out, "raw.jsonl");
            write_jsonl(path, raw);
            auto failed = count_errors(raw);
            std::cout << raw.size() << " predictions, " << failed << " failed -> " << path << '\n';
            return failed == raw.size() && !raw.empty() ? kExitRun : kExitOk;
        }

        if (*sanitize) {
            auto vocabulary = cfg.vocab_path ? SchemaVocabulary::load(*cfg.vocab_path) : SchemaVocabulary::dblp_default();
            auto raw = read_jsonl<RawRecord>(in, raw_from_json);
            auto result = sanitize_all(raw, vocabulary);
            auto path = output_path(cfg, out, "sanitized.jsonl");
            write_jsonl(path, result);
            std::size_t degraded = 0;
            for (const auto& s : result) degraded += s.degraded ? 1 : 0;
            std::cout << result.size() << " sanitized, " << degraded << " degraded -> " << path << '\n';
            return kExitOk;
        }

        if (*execute) {
            if (!cfg.endpoint) throw ConfigError("no SPARQL endpoint (--endpoint, config or " + std::string(kEndpointEnvVar) + ")");
            auto client = make_client(cfg);
            auto sanitized = read_jsonl<SanitizedRecord>(in, sanitized_from_json);
            auto executed = execute_all(client.get(), sanitized, cfg.workers);
            auto path = output_path(cfg, out, "answers.jsonl");
            write_jsonl(path, executed);
            std::cout << executed.size() << " executed, " << count_errors(executed) << " failed, "
                      << client->requests_sent() << " requests to " << client->config().url << " -> " << path << '\n';
            return kExitOk;
        }

        if (*evaluate) {
            require_dataset(cfg);
            auto records = load_quad_records(cfg.dataset_path, LoadMode::full);
            auto client = make_client(cfg);
            std::optional<GoldAnswerCache> cache;
            if (cfg.gold_cache_path) cache = GoldAnswerCache::load(*cfg.gold_cache_path);
            auto gold = resolve_gold(records, client.get(), cache ? &*cache : nullptr);
            if (cache) cache->save(*cfg.gold_cache_path);
            auto sanitized = read_jsonl<SanitizedRecord>(sanitized_in, sanitized_from_json);
            auto executed = read_jsonl<ExecutedRecord>(answers_in, executed_from_json);
            auto report = evaluate_run(to_predictions(sanitized, executed), gold);
            std::ofstream(output_path(cfg, "", "report.json")) << to_json(report).dump(2) << '\n';
            std::ofstream(output_path(cfg, "", "scores.csv")) << to_csv(report);
            std::cout << summary_table(report);
            return kExitOk;
        }

        if (*run) {
            auto art = run_pipeline(cfg, &std::cerr);
            std::cout << "run " << art.run_id << ": " << art.instance_count << " instances, " << art.degraded_count
                      << " degraded -> " << art.directory.string() << '\n';
            if (!art.unknown_candidate_ids.empty())
                std::cout << art.unknown_candidate_ids.size() << " candidate ids matched no instance\n";
            if (art.report) std::cout << summary_table(*art.report);
            else if (art.evaluation_note) std::cout << *art.evaluation_note << '\n';
            return kExitOk;
        }

        if (*serve) {
            StubSparqlEndpoint stub(canned);
            g_stub = &stub;
            std::signal(SIGINT, stop_stub);
            std::signal(SIGTERM, stop_stub);
            std::cout << "serving canned answers on http://" << host << ":" << port << "/sparql" << std::endl;
            stub.serve(host, port);
            g_stub = nullptr;
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << e.kind() << ": " << e.what() << '\n';
        return kExitRun;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRun;
    }
    return kExitOk;
}
