#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "psychic/config.hpp"
#include "psychic/dataset.hpp"
#include "psychic/error.hpp"
#include "psychic/evaluation.hpp"
#include "psychic/grounding.hpp"
#include "psychic/model_backend.hpp"
#include "psychic/sanitizer.hpp"
#include "psychic/sparql_client.hpp"

namespace psychic {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Entity-linker candidates
// ---------------------------------------------------------------------------

using CandidateMap = std::unordered_map<std::string, std::vector<EntityCandidate>>;

/// JSONL of {"instance_id", "candidates": [{"uri", "score"?, "label"?}]}.
/// Candidate order is kept as given.
[[nodiscard]] inline CandidateMap parse_el_candidates(std::istream& in) {
    CandidateMap out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (detail::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw MalformedCandidate(n, "not a JSON object");
        auto id = j.find("instance_id");
        if (id == j.end() || !id->is_string()) throw MalformedCandidate(n, "missing instance_id");
        auto cands = j.find("candidates");
        if (cands == j.end() || !cands->is_array()) throw MalformedCandidate(n, "missing candidates array");
        std::vector<EntityCandidate> list;
        for (const auto& c : *cands) {
            if (!c.is_object() || !c.contains("uri") || !c["uri"].is_string())
                throw MalformedCandidate(n, "candidate without uri");
            EntityCandidate ec;
            ec.uri = c["uri"].get<std::string>();
            if (!is_entity_uri(ec.uri)) throw MalformedCandidate(n, "invalid entity URI '" + ec.uri + "'");
            if (auto s = c.find("score"); s != c.end() && !s->is_null()) {
                if (!s->is_number()) throw MalformedCandidate(n, "score is not a number");
                ec.score = s->get<double>();
            }
            if (auto l = c.find("label"); l != c.end() && l->is_string()) ec.label = l->get<std::string>();
            list.push_back(std::move(ec));
        }
        if (!out.emplace(id->get<std::string>(), std::move(list)).second)
            throw MalformedCandidate(n, "duplicate instance_id '" + id->get<std::string>() + "'");
    }
    return out;
}

[[nodiscard]] inline CandidateMap load_el_candidates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open candidates file " + path);
    return parse_el_candidates(in);
}

// ---------------------------------------------------------------------------
// Stage records
// ---------------------------------------------------------------------------

struct GroundedInstance {
    std::string instance_id;
    std::string question;
    ContextString context;
    std::optional<TargetString> target;
    std::optional<std::string> error;
};

struct RawRecord {
    std::string instance_id;
    RawModelOutput output;
    std::optional<std::string> error;
};

struct SanitizedRecord {
    std::string instance_id;
    SanitizedPrediction prediction;
    bool degraded = false;
    std::optional<std::string> error;
};

struct ExecutedRecord {
    std::string instance_id;
    std::optional<AnswerSet> answer;
    std::optional<std::string> error;
};

namespace detail {

inline json opt_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

inline std::string error_text(const std::exception& e) {
    if (auto* pe = dynamic_cast<const Error*>(&e)) return pe->kind() + ": " + pe->what();
    return e.what();
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. `fn` must not throw.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
}

} // namespace detail

[[nodiscard]] inline json to_json(const GroundedInstance& g) {
    json j;
    j["instance_id"] = g.instance_id;
    j["question"] = g.question;
    j["context"] = g.context.text;
    j["phase"] = to_string(g.context.phase);
    j["chunk_count"] = g.context.chunk_count;
    j["target"] = g.target ? json(g.target->text) : json(nullptr);
    j["error"] = detail::opt_json(g.error);
    return j;
}

[[nodiscard]] inline GroundedInstance grounded_from_json(const nlohmann::json& j) {
    GroundedInstance g;
    g.instance_id = j.at("instance_id").get<std::string>();
    g.question = j.value("question", std::string{});
    g.context.text = j.value("context", std::string{});
    g.context.phase = j.value("phase", std::string("dev")) == "final" ? Phase::final : Phase::dev;
    g.context.chunk_count = j.value("chunk_count", std::size_t{0});
    if (auto t = detail::opt_string(j, "target")) g.target = TargetString{*t};
    g.error = detail::opt_string(j, "error");
    return g;
}

[[nodiscard]] inline json to_json(const RawRecord& r) {
    json j;
    j["instance_id"] = r.instance_id;
    j["text"] = r.output.text;
    j["backend_id"] = r.output.backend_id;
    j["latency_ms"] = r.output.latency.count();
    j["error"] = detail::opt_json(r.error);
    return j;
}

[[nodiscard]] inline RawRecord raw_from_json(const nlohmann::json& j) {
    RawRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.output.text = j.value("text", std::string{});
    r.output.backend_id = j.value("backend_id", std::string{});
    r.output.latency = std::chrono::milliseconds(j.value("latency_ms", 0LL));
    r.error = detail::opt_string(j, "error");
    return r;
}

[[nodiscard]] inline json to_json(const SanitizedRecord& s) {
    json j;
    j["instance_id"] = s.instance_id;
    j["query"] = s.prediction.query;
    j["entities"] = s.prediction.entities;
    j["repairs"] = s.prediction.repairs_applied;
    j["valid_query"] = s.prediction.valid_query;
    j["valid_entities"] = s.prediction.valid_entities;
    j["has_separator"] = s.prediction.has_separator;
    j["degraded"] = s.degraded;
    j["error"] = detail::opt_json(s.error);
    return j;
}

[[nodiscard]] inline SanitizedRecord sanitized_from_json(const nlohmann::json& j) {
    SanitizedRecord s;
    s.instance_id = j.at("instance_id").get<std::string>();
    s.prediction.query = j.value("query", std::string{});
    s.prediction.entities = j.value("entities", std::vector<std::string>{});
    s.prediction.repairs_applied = j.value("repairs", std::vector<std::string>{});
    s.prediction.valid_query = j.value("valid_query", false);
    s.prediction.valid_entities = j.value("valid_entities", false);
    s.prediction.has_separator = j.value("has_separator", false);
    s.degraded = j.value("degraded", true);
    s.error = detail::opt_string(j, "error");
    return s;
}

[[nodiscard]] inline json to_json(const ExecutedRecord& e) {
    json j;
    j["instance_id"] = e.instance_id;
    if (e.answer) {
        auto answer = to_json(*e.answer);
        for (auto& [k, v] : answer.items()) j[k] = v;
    } else {
        j["kind"] = nullptr;
        j["values"] = json::array();
        j["truth"] = nullptr;
    }
    j["error"] = detail::opt_json(e.error);
    return j;
}

[[nodiscard]] inline ExecutedRecord executed_from_json(const nlohmann::json& j) {
    ExecutedRecord e;
    e.instance_id = j.at("instance_id").get<std::string>();
    if (j.contains("kind") && !j["kind"].is_null()) e.answer = answer_set_from_json(j);
    e.error = detail::opt_string(j, "error");
    return e;
}

template <class T>
void write_jsonl(const std::string& path, const std::vector<T>& items) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    for (const auto& item : items) out << to_json(item).dump() << '\n';
}

template <class T, class F>
std::vector<T> read_jsonl(const std::string& path, F&& parse) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::vector<T> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (detail::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ResultParseError(path + " line " + std::to_string(n) + " is not JSON");
        try {
            out.push_back(parse(j));
        } catch (const nlohmann::json::exception& e) {
            throw ResultParseError(path + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Grounds every instance. Failures are recorded per instance, never thrown.
/// Final phase looks candidates up by instance id, then by record id.
[[nodiscard]] inline std::vector<GroundedInstance> ground_instances(Phase phase, const std::vector<QAInstance>& instances,
                                                                    const CandidateMap* candidates) {
    std::vector<GroundedInstance> out;
    out.reserve(instances.size());
    static const std::vector<EntityCandidate> kNone;
    for (const auto& inst : instances) {
        GroundedInstance g{inst.instance_id, inst.question, {{}, phase, 0}, std::nullopt, std::nullopt};
        const QuadRecord& rec = *inst.source;
        try {
            if (phase == Phase::dev) {
                g.context = build_dev_context(rec);
            } else {
                const std::vector<EntityCandidate>* list = &kNone;
                if (candidates) {
                    if (auto it = candidates->find(inst.instance_id); it != candidates->end())
                        list = &it->second;
                    else if (auto it2 = candidates->find(rec.id); it2 != candidates->end())
                        list = &it2->second;
                }
                g.context = build_final_context(*list);
            }
            if (rec.query && rec.entities) g.target = build_target(rec);
        } catch (const Error& e) {
            g.error = detail::error_text(e);
        }
        out.push_back(std::move(g));
    }
    return out;
}

[[nodiscard]] inline std::vector<RawRecord> predict_all(ModelBackend& backend, const std::vector<GroundedInstance>& grounded,
                                                        std::size_t workers) {
    std::vector<RawRecord> out(grounded.size());
    detail::parallel_for(grounded.size(), workers, [&](std::size_t i) {
        const auto& g = grounded[i];
        auto& r = out[i];
        r.instance_id = g.instance_id;
        if (g.error) {
            r.error = "not grounded: " + *g.error;
            return;
        }
        try {
            r.output = backend.predict(g.instance_id, g.question, g.context);
        } catch (const std::exception& e) {
            r.error = detail::error_text(e);
        }
    });
    return out;
}

/// Oracle targets for every grounded instance that carries one.
[[nodiscard]] inline OracleTargets oracle_targets(const std::vector<GroundedInstance>& grounded) {
    OracleTargets targets;
    for (const auto& g : grounded)
        if (g.target) targets.emplace(g.instance_id, *g.target);
    return targets;
}

[[nodiscard]] inline std::vector<SanitizedRecord> sanitize_all(const std::vector<RawRecord>& raw,
                                                               const SchemaVocabulary& vocab) {
    std::vector<SanitizedRecord> out;
    out.reserve(raw.size());
    for (const auto& r : raw) {
        SanitizedRecord s;
        s.instance_id = r.instance_id;
        if (r.error) {
            s.prediction.has_separator = false;
            s.degraded = true;
            s.error = r.error;
        } else {
            s.prediction = sanitize_prediction(r.output.text, vocab);
            s.degraded = !s.prediction.has_separator || !s.prediction.valid_query;
            if (!s.prediction.has_separator) s.error = "MissingSeparator";
            else if (!s.prediction.valid_query) s.error = "InvalidQuery";
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Executes every valid query. Without a client every record carries an
/// error instead of an answer.
[[nodiscard]] inline std::vector<ExecutedRecord> execute_all(SparqlClient* client, const std::vector<SanitizedRecord>& sanitized,
                                                             std::size_t workers) {
    std::vector<ExecutedRecord> out(sanitized.size());
    detail::parallel_for(sanitized.size(), workers, [&](std::size_t i) {
        const auto& s = sanitized[i];
        auto& e = out[i];
        e.instance_id = s.instance_id;
        if (!s.prediction.valid_query) {
            e.error = "not executed: " + s.error.value_or("InvalidQuery");
            return;
        }
        if (!client) {
            e.error = "not executed: no SPARQL endpoint configured";
            return;
        }
        try {
            e.answer = client->execute(s.prediction.query);
        } catch (const std::exception& ex) {
            e.error = detail::error_text(ex);
        }
    });
    return out;
}

[[nodiscard]] inline std::vector<InstancePrediction> to_predictions(const std::vector<SanitizedRecord>& sanitized,
                                                                    const std::vector<ExecutedRecord>& executed) {
    std::unordered_map<std::string, const ExecutedRecord*> by_id;
    for (const auto& e : executed) by_id.emplace(e.instance_id, &e);
    std::vector<InstancePrediction> out;
    out.reserve(sanitized.size());
    for (const auto& s : sanitized) {
        InstancePrediction p;
        p.instance_id = s.instance_id;
        p.entities = s.prediction.entities;
        p.query_degraded = !s.prediction.valid_query;
        p.entities_degraded = !s.prediction.has_separator;
        if (auto it = by_id.find(s.instance_id); it != by_id.end() && it->second->answer)
            p.answer = it->second->answer;
        else
            p.query_degraded = true;
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

struct RunArtifact {
    std::string run_id;
    std::filesystem::path directory;
    std::filesystem::path config_file;
    std::filesystem::path grounded_file;
    std::filesystem::path raw_file;
    std::filesystem::path sanitized_file;
    std::filesystem::path answers_file;
    std::optional<std::filesystem::path> report_file;
    std::optional<std::filesystem::path> scores_file;
    std::size_t instance_count = 0;
    std::size_t degraded_count = 0;
    std::vector<std::string> unknown_candidate_ids;
    std::optional<EvalReport> report;
    std::optional<std::string> evaluation_note;
};

namespace detail {

inline std::string timestamp_run_id() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "run-%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

inline std::filesystem::path fresh_run_dir(const std::filesystem::path& root, std::string& run_id) {
    auto dir = root / run_id;
    for (int k = 2; std::filesystem::exists(dir); ++k) dir = root / (run_id + "-" + std::to_string(k));
    run_id = dir.filename().string();
    return dir;
}

} // namespace detail

/// Runs ingest, ground, predict, sanitize, execute and (when gold data is
/// available) evaluate, writing one JSONL file per stage. Instance-level
/// failures are recorded in the stage files; configuration problems throw
/// ConfigError before any stage runs.
[[nodiscard]] inline RunArtifact run_pipeline(const RunConfig& config, std::ostream* log = nullptr) {
    config.validate();
    auto vocab = config.vocab_path ? SchemaVocabulary::load(*config.vocab_path) : SchemaVocabulary::dblp_default();
    CandidateMap candidates;
    if (config.el_provider == ElProviderKind::file && config.candidates_path)
        candidates = load_el_candidates(*config.candidates_path);
    std::unique_ptr<SparqlClient> client;
    if (config.endpoint) client = std::make_unique<SparqlClient>(*config.endpoint);
    std::optional<GoldAnswerCache> cache;
    if (config.gold_cache_path) cache = GoldAnswerCache::load(*config.gold_cache_path);

    RunArtifact art;
    art.run_id = config.run_id.value_or(detail::timestamp_run_id());
    art.directory = config.run_id ? std::filesystem::path(config.output_dir) / art.run_id
                                  : detail::fresh_run_dir(config.output_dir, art.run_id);
    std::filesystem::create_directories(art.directory);
    auto file = [&](const char* name) { return art.directory / name; };
    art.config_file = file("config.json");
    art.grounded_file = file("grounded.jsonl");
    art.raw_file = file("raw.jsonl");
    art.sanitized_file = file("sanitized.jsonl");
    art.answers_file = file("answers.jsonl");
    {
        std::ofstream out(art.config_file);
        out << to_json(config).dump(2) << '\n';
    }

    auto note = [&](const std::string& msg) {
        if (log) *log << "[" << art.run_id << "] " << msg << '\n';
    };

    // ingest
    const auto records = load_quad_records(config.dataset_path, config.effective_mode());
    const auto instances = expand_paraphrases(records);
    art.instance_count = instances.size();
    note("ingested " + std::to_string(records.size()) + " records, " + std::to_string(instances.size()) + " instances");

    if (config.phase == Phase::final) {
        std::set<std::string> known;
        for (const auto& inst : instances) {
            known.insert(inst.instance_id);
            known.insert(inst.source->id);
        }
        for (const auto& [id, _] : candidates)
            if (!known.count(id)) art.unknown_candidate_ids.push_back(id);
        std::sort(art.unknown_candidate_ids.begin(), art.unknown_candidate_ids.end());
    }

    // ground
    const auto grounded = ground_instances(config.phase, instances, config.phase == Phase::final ? &candidates : nullptr);
    write_jsonl(art.grounded_file.string(), grounded);

    // predict
    auto backend = make_backend(config.backend, oracle_targets(grounded));
    const auto raw = predict_all(*backend, grounded, config.workers);
    write_jsonl(art.raw_file.string(), raw);

    // sanitize
    const auto sanitized = sanitize_all(raw, vocab);
    write_jsonl(art.sanitized_file.string(), sanitized);
    for (const auto& s : sanitized) art.degraded_count += s.degraded ? 1 : 0;
    note("sanitized " + std::to_string(sanitized.size()) + " outputs, " + std::to_string(art.degraded_count) +
         " degraded");

    // execute
    const auto executed = execute_all(client.get(), sanitized, config.workers);
    write_jsonl(art.answers_file.string(), executed);

    // evaluate
    const bool has_gold = std::all_of(records.begin(), records.end(),
                                      [](const QuadRecord& r) { return r.query && r.entities; });
    if (!has_gold) {
        art.evaluation_note = "records carry no gold queries; evaluation skipped";
    } else if (!client && !cache) {
        art.evaluation_note = "no endpoint or gold cache; evaluation skipped";
    } else {
        auto gold = resolve_gold(records, client.get(), cache ? &*cache : nullptr);
        if (cache && config.gold_cache_path) cache->save(*config.gold_cache_path);
        art.report = evaluate_run(to_predictions(sanitized, executed), gold);
        art.report_file = file("report.json");
        art.scores_file = file("scores.csv");
        std::ofstream(*art.report_file) << to_json(*art.report).dump(2) << '\n';
        std::ofstream(*art.scores_file) << to_csv(*art.report);
        note("F1-QA " + format_percent(art.report->f1_qa) + "  F1-EL " + format_percent(art.report->f1_el));
    }
    if (art.evaluation_note) note(*art.evaluation_note);

    json manifest;
    manifest["run_id"] = art.run_id;
    manifest["phase"] = to_string(config.phase);
    manifest["instances"] = art.instance_count;
    manifest["degraded"] = art.degraded_count;
    manifest["files"] = {{"config", "config.json"},
                         {"grounded", "grounded.jsonl"},
                         {"raw", "raw.jsonl"},
                         {"sanitized", "sanitized.jsonl"},
                         {"answers", "answers.jsonl"},
                         {"report", art.report_file ? json("report.json") : json(nullptr)},
                         {"scores", art.scores_file ? json("scores.csv") : json(nullptr)}};
    manifest["unknown_candidate_ids"] = art.unknown_candidate_ids;
    manifest["evaluation_note"] = detail::opt_json(art.evaluation_note);
    std::ofstream(file("manifest.json")) << manifest.dump(2) << '\n';
    return art;
}

} // namespace psychic
