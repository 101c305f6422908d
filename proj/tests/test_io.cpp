#include "doctest.h"

#include <filesystem>

#include "cape/errors.hpp"
#include "cape/io.hpp"

using namespace cape;

TEST_SUITE("io") {
TEST_CASE("numeric CSV with any of the supported delimiters") {
    for (const std::string text : {"a,b\n1,2\n3,4.5\n", "a\tb\n1\t2\n3\t4.5\n", "a;b\r\n1;2\r\n3;4.5\r\n"}) {
        const auto t = parse_numeric_csv(text);
        CHECK(t.names == std::vector<std::string>{"a", "b"});
        REQUIRE(t.values.rows() == 2);
        CHECK(t.values(1, 1) == 4.5);
    }
    CHECK_THROWS_AS(parse_numeric_csv("a,b\n1,x\n"), ConfigError);
    CHECK_THROWS_AS(parse_numeric_csv("a,b\n1\n"), ConfigError);
    CHECK_THROWS_AS(parse_numeric_csv(""), ConfigError);
}

TEST_CASE("interventional CSV groups rows by perturbation") {
    const std::string text =
        "g0,g1,perturbation,g2\n"
        "1,2,control,3\n"
        "4,5,g1,6\n"
        "7,8,non-targeting,9\n"
        "1,1,g1,1\n"
        "0,0,ghost,0\n";
    const auto d = parse_interventional_csv(text);
    CHECK(d.names == std::vector<std::string>{"g0", "g1", "g2"});
    CHECK(d.control.rows() == 2);
    CHECK(d.control(1, 2) == 9.0);
    REQUIRE(d.groups.size() == 1);
    CHECK(d.groups[0].target == 1);
    CHECK(d.groups[0].samples.rows() == 2);
    CHECK(d.unknown_targets == std::vector<std::string>{"ghost"});
    CHECK_THROWS_AS(parse_interventional_csv("a,b\n1,2\n"), ConfigError);
}

TEST_CASE("top-variance selection keeps column order") {
    Eigen::MatrixXd x(3, 4);
    x << 0, 10, 1, 5,  //
        0, -10, 2, 0,  //
        0, 0, 3, -5;
    CHECK(top_variance_columns(x, 2) == std::vector<std::size_t>{1, 3});
    CHECK(top_variance_columns(x, 10).size() == 4);
    const auto sub = select_columns(x, {3, 1});
    CHECK(sub(0, 0) == 5.0);
    CHECK(sub(1, 1) == -10.0);
}

TEST_CASE("column selection re-indexes intervention targets") {
    InterventionalData d;
    d.names = {"a", "b", "c"};
    d.control = Eigen::MatrixXd::Zero(2, 3);
    d.groups.push_back({0, Eigen::MatrixXd::Zero(2, 3)});
    d.groups.push_back({2, Eigen::MatrixXd::Ones(2, 3)});
    const auto s = select_columns(d, {1, 2});
    CHECK(s.names == std::vector<std::string>{"b", "c"});
    REQUIRE(s.groups.size() == 1);
    CHECK(s.groups[0].target == 1);
}

TEST_CASE("graph JSON round-trips bit-exactly") {
    const auto w = WeightedDag::from_edges(3, {{0, 1, 0.1 + 0.2}, {2, 1, -1.0 / 3.0}}, {"x", "y", "z"});
    const auto back = graph_from_json(json::parse(graph_to_json(w).dump()));
    CHECK(back == w);
    CHECK_THROWS_AS(graph_from_json(json::parse(R"({"d": 2, "edges": [[0, 1, 1.0], [1, 0, 1.0]]})")), ContractError);
    CHECK_THROWS_AS(graph_from_json(json::parse(R"({"d": 2, "edges": [[0, 1]]})")), ConfigError);
    CHECK_THROWS_AS(graph_from_json(json::parse(R"({"edges": []})")), ConfigError);
}

TEST_CASE("adjacency JSON allows cycles") {
    const auto a = adjacency_from_rows({{0, 1}, {1, 0}});
    const auto back = adjacency_from_json(json::parse(adjacency_to_json(a, {"p", "q"}).dump()));
    CHECK(back == a);
    CHECK_THROWS_AS(adjacency_from_json(json::parse(R"({"d": 2, "edges": [[0, 0, 1]]})")), ConfigError);
}

TEST_CASE("snapshot and record round trips") {
    const ParticleSet p({WeightedDag::from_edges(2, {{0, 1, 0.7}}), WeightedDag(2)}, {0.25, 0.75}, {-1.5, -0.25});
    const auto back = snapshot_from_json(json::parse(snapshot_to_json(p).dump()));
    REQUIRE(back.size() == 2);
    CHECK(back.particle(0) == p.particle(0));
    CHECK(back.weight(1) == 0.75);
    CHECK(back.log_prior()[0] == -1.5);

    QueryRecord r{7, 2, 0, Label::reverse, "EIG", 0.125, -0.5};
    const auto rb = record_from_json(json::parse(record_to_json(r).dump()));
    CHECK(rb.round == 7);
    CHECK(rb.i == 2);
    CHECK(rb.label == Label::reverse);
    CHECK(rb.policy == "EIG");
    CHECK(rb.eig == 0.125);
    CHECK(rb.frozen_feature == -0.5);
    CHECK_THROWS_AS(record_from_json(json::parse(R"({"round": 1})")), ConfigError);
}

TEST_CASE("atomic write leaves no partial file") {
    const auto dir = std::filesystem::temp_directory_path() / "cape_io_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_text_atomic(dir / "f.txt", "hello\n");
    CHECK(read_text_file(dir / "f.txt") == "hello\n");
    CHECK_FALSE(std::filesystem::exists(dir / "f.txt.partial"));
    CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), ConfigError);
    std::filesystem::remove_all(dir);
}
}
