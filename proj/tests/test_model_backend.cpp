#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>
#include <vector>

#include "catch_amalgamated.hpp"

#include "psychic/model_backend.hpp"
#include "support/http_server.hpp"

using namespace psychic;
using namespace std::chrono_literals;

namespace {

const ContextString kContext{"[CLS] <https://dblp.org/pid/00/2941>", Phase::final, 1};

BackendConfig remote_config(const std::string& url) {
    BackendConfig c;
    c.kind = BackendKind::remote;
    c.endpoint = url;
    c.timeout = 2000ms;
    c.backoff_base = 1ms;
    return c;
}

} // namespace

TEST_CASE("oracle returns the registered target verbatim", "[model-backend]") {
    OracleTargets targets{{"R1#q", {"Q [SEP] E"}}};
    auto backend = make_backend(BackendConfig{}, targets);
    auto out = backend->predict("R1#q", "question", kContext);
    CHECK(out.text == "Q [SEP] E");
    CHECK(out.backend_id == "oracle");
    CHECK_THROWS_AS(backend->predict("R2#q", "question", kContext), MissingOracleTarget);
}

TEST_CASE("mangled oracle damages the target", "[model-backend]") {
    BackendConfig cfg;
    cfg.kind = BackendKind::oracle_mangled;
    OracleTargets targets{{"R1#q",
                           {"select distinct ?answer where { ?answer <https://dblp.org/rdf/schema#authoredBy> "
                            "<https://dblp.org/pid/00/2941> }"}}};
    auto out = make_backend(cfg, targets)->predict("R1#q", "q", kContext);
    CHECK(out.text == "select distinct? answer where {? answer < https : / / dblp. org / rdf / schema # authoredby > "
                      "< https : / / dblp. org / pid / 00 / 2941 > }");
    CHECK(out.backend_id == "oracle_mangled");
}

TEST_CASE("backend kinds parse and validate", "[model-backend]") {
    CHECK(parse_backend_kind("oracle") == BackendKind::oracle);
    CHECK(parse_backend_kind("oracle_mangled") == BackendKind::oracle_mangled);
    CHECK(parse_backend_kind("remote") == BackendKind::remote);
    CHECK_THROWS_AS(parse_backend_kind("gpt"), ConfigError);

    BackendConfig remote;
    remote.kind = BackendKind::remote;
    CHECK_THROWS_AS(remote.validate(), ConfigError);
    remote.endpoint = "ftp://host/model";
    CHECK_THROWS_AS(make_backend(remote), ConfigError);
    remote.endpoint = "http://localhost:1";
    remote.max_in_flight = 0;
    CHECK_THROWS_AS(remote.validate(), ConfigError);
}

TEST_CASE("remote backend speaks the predict wire contract", "[model-backend]") {
    psychic_test::LocalServer srv;
    std::mutex mu;
    std::vector<nlohmann::json> bodies;
    std::vector<std::string> content_types;
    srv.server.Post("/model/predict", [&](const httplib::Request& req, httplib::Response& res) {
        {
            std::lock_guard lock(mu);
            bodies.push_back(nlohmann::json::parse(req.body));
            content_types.push_back(req.get_header_value("Content-Type"));
        }
        res.set_content(R"({"answer": "X", "score": 0.5})", "application/json");
    });
    srv.start();

    auto backend = make_backend(remote_config(srv.base_url() + "/model/"));
    auto out = backend->predict("R1#q", "Who wrote it?", kContext);
    CHECK(out.text == "X");
    CHECK(out.backend_id == "remote");
    CHECK(out.latency >= 0ms);
    REQUIRE(bodies.size() == 1);
    CHECK(bodies[0] == nlohmann::json{{"question", "Who wrote it?"}, {"context", kContext.text}});
    CHECK(content_types[0] == "application/json");
}

TEST_CASE("remote backend retries server errors, not client errors", "[model-backend]") {
    psychic_test::LocalServer srv;
    std::atomic<int> calls{0};
    std::atomic<int> fail_first{0};
    std::atomic<int> status{500};
    srv.server.Post("/predict", [&](const httplib::Request&, httplib::Response& res) {
        if (calls.fetch_add(1) < fail_first.load()) {
            res.status = status.load();
            return;
        }
        res.set_content(R"({"answer": "ok", "score": 1.0})", "application/json");
    });
    srv.start();
    auto cfg = remote_config(srv.base_url());
    cfg.max_retries = 2;
    RemoteBackend backend(cfg);

    fail_first = 2;
    CHECK(backend.predict("a", "q", kContext).text == "ok");
    CHECK(calls == 3);

    calls = 0;
    fail_first = 100;
    CHECK_THROWS_AS(backend.predict("a", "q", kContext), BackendUnavailable);
    CHECK(calls == 3);

    calls = 0;
    status = 404;
    CHECK_THROWS_AS(backend.predict("a", "q", kContext), BackendUnavailable);
    CHECK(calls == 1);
}

TEST_CASE("remote backend rejects responses without an answer string", "[model-backend]") {
    psychic_test::LocalServer srv;
    srv.server.Post("/predict", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"score": 1.0})", "application/json");
    });
    srv.start();
    RemoteBackend backend(remote_config(srv.base_url()));
    CHECK_THROWS_AS(backend.predict("a", "q", kContext), BackendUnavailable);
}

TEST_CASE("remote backend reports unreachable and slow services", "[model-backend]") {
    int dead_port;
    {
        psychic_test::LocalServer probe;
        probe.start();
        dead_port = std::stoi(probe.base_url().substr(probe.base_url().rfind(':') + 1));
    }
    auto cfg = remote_config("http://127.0.0.1:" + std::to_string(dead_port));
    cfg.max_retries = 1;
    CHECK_THROWS_AS(RemoteBackend(cfg).predict("a", "q", kContext), BackendUnavailable);

    psychic_test::LocalServer slow;
    slow.server.Post("/predict", [&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(400ms);
        res.set_content(R"({"answer": "late"})", "application/json");
    });
    slow.start();
    auto slow_cfg = remote_config(slow.base_url());
    slow_cfg.timeout = 100ms;
    slow_cfg.max_retries = 0;
    CHECK_THROWS_AS(RemoteBackend(slow_cfg).predict("a", "q", kContext), Timeout);
}

TEST_CASE("remote backend bounds in-flight requests", "[model-backend]") {
    psychic_test::LocalServer srv;
    std::atomic<int> current{0}, peak{0};
    srv.server.Post("/predict", [&](const httplib::Request&, httplib::Response& res) {
        int now = current.fetch_add(1) + 1;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(30ms);
        current.fetch_sub(1);
        res.set_content(R"({"answer": "x", "score": 0})", "application/json");
    });
    srv.start();
    auto cfg = remote_config(srv.base_url());
    cfg.max_in_flight = 2;
    RemoteBackend backend(cfg);

    std::vector<std::jthread> callers;
    std::atomic<int> ok{0};
    for (int i = 0; i < 6; ++i)
        callers.emplace_back([&] {
            if (backend.predict("a", "q", kContext).text == "x") ok.fetch_add(1);
        });
    callers.clear();
    CHECK(ok == 6);
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}
