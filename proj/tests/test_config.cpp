#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "qasa/config.hpp"

using namespace qasa;

TEST_CASE("empty json yields the documented desk-scale defaults") {
    const auto cfg = experiment_config_from_json(nlohmann::json::object());
    REQUIRE(cfg.model.variant == Variant::Qasa);
    REQUIRE(cfg.model.L == 32);
    REQUIRE(cfg.model.d == 64);
    REQUIRE(cfg.model.N == 3);
    REQUIRE(cfg.model.n == 4);
    REQUIRE(cfg.train.lr == 1e-4);
    REQUIRE(cfg.train.weight_decay == 0.01);
    REQUIRE(cfg.train.epochs == 45);
    REQUIRE(cfg.train.scheduler == SchedulerKind::Cosine);
    REQUIRE(cfg.data.task == Task::DampedOscillator);
    REQUIRE(cfg.data.length == 832);
    REQUIRE(cfg.window == 32);
}

TEST_CASE("config round trip is lossless") {
    ExperimentConfig cfg;
    cfg.model = desk_config(Variant::QasaClassical);
    cfg.model.seed = 123;
    cfg.train.epochs = 7;
    cfg.train.scheduler = SchedulerKind::Plateau;
    cfg.data.task = Task::Arma;
    cfg.data.params["ar1"] = 0.5;
    cfg.out_dir = "runs/x";

    const auto j1 = experiment_config_to_json(cfg);
    const auto cfg2 = experiment_config_from_json(j1);
    const auto j2 = experiment_config_to_json(cfg2);
    REQUIRE(j1.dump() == j2.dump());
    REQUIRE(cfg2.model.variant == Variant::QasaClassical);
    REQUIRE(cfg2.data.params.at("ar1") == 0.5);
    REQUIRE(cfg2.train.scheduler == SchedulerKind::Plateau);
}

TEST_CASE("unknown fields are rejected by name") {
    nlohmann::json j;
    j["train"]["learning_rate"] = 1e-3;
    REQUIRE_THROWS_MATCHES(experiment_config_from_json(j), ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("learning_rate")));
    nlohmann::json j2;
    j2["bogus_section"] = 1;
    REQUIRE_THROWS_MATCHES(experiment_config_from_json(j2), ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("bogus_section")));
}

TEST_CASE("window and model length must agree") {
    nlohmann::json j;
    j["data"]["window"] = 16;
    REQUIRE_THROWS_MATCHES(experiment_config_from_json(j), ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("model.L")));
    j["model"]["L"] = 16;
    const auto cfg = experiment_config_from_json(j);
    REQUIRE(cfg.window == 16);
}

TEST_CASE("config file loading reports bad json") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "qasa_config_test";
    fs::create_directories(dir);
    const auto good = (dir / "good.json").string();
    {
        std::ofstream out(good);
        out << R"({"model": {"variant": "transformer", "L": 16}, "data": {"window": 16}})";
    }
    const auto cfg = load_experiment_config(good);
    REQUIRE(cfg.model.variant == Variant::Transformer);
    REQUIRE(cfg.model.L == 16);

    const auto bad = (dir / "bad.json").string();
    {
        std::ofstream out(bad);
        out << "{not json";
    }
    REQUIRE_THROWS_AS(load_experiment_config(bad), ConfigError);
    REQUIRE_THROWS_AS(load_experiment_config((dir / "missing.json").string()),
                      ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("build_datasets windows and standardizes per config") {
    ExperimentConfig cfg;
    cfg.model.L = 8;
    cfg.window = 8;
    cfg.data.length = 108;  // 100 windows
    const auto split = build_datasets(cfg);
    REQUIRE(split.train.count() == 80);
    REQUIRE(split.val.count() == 20);
    REQUIRE(split.train.window == 8);
}
