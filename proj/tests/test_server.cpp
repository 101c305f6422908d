#include "doctest.h"

#include <filesystem>
#include <thread>

#include "cape/errors.hpp"
#include "cape/server.hpp"

#include "httplib.h"

using namespace cape;

namespace {

SessionConfig human_config(int rounds) {
    SessionConfig c;
    c.seed = 21;
    c.rounds = rounds;
    c.particles = 100;
    c.screen_k = 20;
    c.allow_requery = false;
    c.truth.d = 4;
    c.truth.edge_prob = 0.5;
    c.oracle.kind = "human";
    return c;
}

std::shared_ptr<Oracle> short_wait_oracle() {
    return std::make_shared<HumanOracle>(std::make_shared<HumanChannel>(), std::chrono::milliseconds(50));
}

json get(httplib::Client& cli, const std::string& path, int expected = 200) {
    auto res = cli.Get(path);
    REQUIRE(res);
    CHECK(res->status == expected);
    CHECK(res->get_header_value("Content-Type") == "application/json");
    return json::parse(res->body);
}

std::pair<int, json> post_answer(httplib::Client& cli, const std::string& body) {
    auto res = cli.Post("/api/answer", body, "application/json");
    REQUIRE(res);
    return {res->status, json::parse(res->body)};
}

json wait_for_pending(httplib::Client& cli) {
    for (int k = 0; k < 400; ++k) {
        const json q = get(cli, "/api/query");
        if (q["pending"] == true) return q;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    FAIL("no query became pending");
    return {};
}

std::string answer_body(const json& q, int label) {
    return json{{"pair", q["pair"]}, {"label", label}}.dump();
}

}  // namespace

TEST_SUITE("server") {
TEST_CASE("bind address parsing") {
    ServeOptions o;
    parse_bind("0.0.0.0:9000", o);
    CHECK(o.host == "0.0.0.0");
    CHECK(o.port == 9000);
    parse_bind(":0", o);
    CHECK(o.host == "0.0.0.0");
    CHECK(o.port == 0);
    parse_bind("localhost", o);
    CHECK(o.host == "localhost");
    CHECK_THROWS_AS(parse_bind("host:port", o), ConfigError);
    CHECK_THROWS_AS(parse_bind("host:70000", o), ConfigError);
}

TEST_CASE("human session over HTTP") {
    Session session(human_config(3), {}, short_wait_oracle());
    ServeOptions opts;
    opts.port = 0;
    opts.answer_wait = std::chrono::milliseconds(10000);
    SessionServer server(session, opts);
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);

    const json info = get(cli, "/api/session");
    CHECK(info["round"] == 0);
    CHECK(info["rounds"] == 3);
    CHECK(info["policy"] == "EIG");
    CHECK(info["d"] == 4);
    CHECK(info["names"].size() == 4);
    CHECK(info["oracle"] == "human");

    const json q1 = wait_for_pending(cli);
    CHECK(q1["query_round"] == 1);
    CHECK(q1["pair_names"].size() == 2);
    double total = 0.0;
    for (const auto& p : q1["predictive"]) total += p.get<double>();
    CHECK(total == doctest::Approx(1.0));
    const std::size_t qi = q1["pair"][0], qj = q1["pair"][1];

    SUBCASE("malformed and conflicting answers leave the state unchanged") {
        CHECK(post_answer(cli, "not json").first == 400);
        CHECK(post_answer(cli, R"({"pair": [0], "label": 1})").first == 400);
        CHECK(post_answer(cli, R"({"pair": [0, 9], "label": 1})").first == 400);
        CHECK(post_answer(cli, json{{"pair", {qi, qj}}, {"label", 1.5}}.dump()).first == 400);
        CHECK(post_answer(cli, json{{"pair", {qi, qj}}, {"label", 3}}.dump()).first == 400);
        const auto [status, body] = post_answer(cli, json{{"pair", {qj, qi}}, {"label", 1}}.dump());
        CHECK(status == 409);
        CHECK(body.contains("error"));
        CHECK(get(cli, "/api/session")["round"] == 0);
        CHECK(get(cli, "/api/history")["history"].empty());
    }

    SUBCASE("answers advance the session to the end") {
        const json m0 = get(cli, "/api/marginals");
        const auto [status, body] = post_answer(cli, answer_body(q1, 1));
        CHECK(status == 200);
        CHECK(body["accepted"] == true);
        CHECK(body["round"] == 1);
        const json q2 = wait_for_pending(cli);
        CHECK(q2["query_round"] == 2);
        CHECK(q2["pair"] != q1["pair"]);
        // the answered pair is no longer pending
        CHECK(post_answer(cli, answer_body(q1, 1)).first == 409);
        const json m1 = get(cli, "/api/marginals");
        CHECK(m1["marginals"][qi][qi].is_null());
        CHECK(m1["marginals"] != m0["marginals"]);
        CHECK(post_answer(cli, answer_body(q2, 2)).first == 200);
        const json q3 = wait_for_pending(cli);
        const auto [s3, b3] = post_answer(cli, answer_body(q3, 0));
        CHECK(s3 == 200);
        CHECK(b3["finished"] == true);
        CHECK(get(cli, "/api/session")["finished"] == true);
        const json hist = get(cli, "/api/history");
        REQUIRE(hist["history"].size() == 3);
        CHECK(hist["history"][0]["label"] == 1);
        const json metrics = get(cli, "/api/metrics");
        CHECK(metrics["series"].size() == 3);
        CHECK(metrics["initial"].contains("entropy"));
        CHECK(get(cli, "/api/query")["pending"] == false);
        CHECK(post_answer(cli, answer_body(q3, 0)).first == 409);
    }

    const json missing = get(cli, "/api/nothing", 404);
    CHECK(missing.contains("error"));
    server.stop();
}

TEST_CASE("answers are refused when the session has no human oracle") {
    auto cfg = human_config(2);
    cfg.oracle.kind = "simulated";
    Session session(cfg);
    ServeOptions opts;
    opts.port = 0;
    SessionServer server(session, opts);
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);
    for (int k = 0; k < 200 && !server.loop_done(); ++k) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    CHECK(server.loop_done());
    CHECK(post_answer(cli, R"({"pair": [0, 1], "label": 1})").first == 409);
    CHECK(get(cli, "/api/session")["finished"] == true);
    server.stop();
}

TEST_CASE("stopping the server writes a checkpoint") {
    const auto dir = std::filesystem::temp_directory_path() / "cape_server_ckpt";
    std::filesystem::remove_all(dir);
    auto cfg = human_config(5);
    cfg.output.dir = dir.string();
    Session session(cfg, {}, short_wait_oracle());
    ServeOptions opts;
    opts.port = 0;
    SessionServer server(session, opts);
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);
    const json q = wait_for_pending(cli);
    CHECK(post_answer(cli, answer_body(q, 2)).first == 200);
    server.stop();
    const json cp = read_json_file(dir / "checkpoint.json");
    CHECK(cp["round"] == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("static UI assets are served when present") {
    const auto dir = std::filesystem::temp_directory_path() / "cape_server_ui";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_text_atomic(dir / "index.html", "<html>cape</html>");
    auto cfg = human_config(1);
    Session session(cfg, {}, short_wait_oracle());
    ServeOptions opts;
    opts.port = 0;
    opts.ui_dir = dir;
    SessionServer server(session, opts);
    httplib::Client cli("127.0.0.1", server.start());
    auto res = cli.Get("/index.html");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "<html>cape</html>");
    CHECK(get(cli, "/api/session")["d"] == 4);
    server.stop();
    std::filesystem::remove_all(dir);
}
}
