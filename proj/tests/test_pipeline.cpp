#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dygrag/pipeline.hpp"

using namespace dygrag;
namespace fs = std::filesystem;

namespace {

// a pipeline config small enough for unit-test turnaround
Config tiny_config(const std::string& outdir) {
    Config cfg = Config::defaults();
    cfg.set("data.communities", "2");
    cfg.set("data.members", "4");
    cfg.set("data.steps", "6");
    cfg.set("data.overlap", "1.0");
    cfg.set("data.target_set_size", "4");
    cfg.set("backbone.preset", "desk");
    cfg.set("backbone.layers", "1");
    cfg.set("backbone.heads", "2");
    cfg.set("backbone.hidden_dim", "16");
    cfg.set("backbone.max_len", "96");
    cfg.set("backbone.epochs", "4");
    cfg.set("retriever.epochs", "2");
    cfg.set("retriever.batch", "8");
    cfg.set("fusion.epochs", "2");
    cfg.set("fusion.k", "3");
    cfg.set("pipeline.seeds", "1");
    cfg.set("pipeline.outdir", outdir);
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config round-trips through serialization") {
    Config cfg = Config::defaults();
    cfg.set("retriever.lambda", "0.25");
    const auto dir = fs::temp_directory_path() / "dygrag_cfg";
    fs::create_directories(dir);
    const auto path = (dir / "c.ini").string();
    cfg.save(path);
    Config back = Config::from_file(path);
    CHECK(back.values() == cfg.values());
    fs::remove_all(dir);
}

TEST_CASE("config hash tracks only meaningful fields") {
    Config a = Config::defaults();
    Config b = Config::defaults();
    const std::vector<std::string> keys = {"retriever.lambda", "retriever.tau"};
    CHECK(a.hash_of(keys) == b.hash_of(keys));
    b.set("retriever.lambda", "0.9");
    CHECK(a.hash_of(keys) != b.hash_of(keys));
    b.set("retriever.lambda", a.get("retriever.lambda"));
    b.set("fusion.k", "9");  // outside the subset
    CHECK(a.hash_of(keys) == b.hash_of(keys));
}

TEST_CASE("config rejects malformed keys and missing lookups") {
    Config cfg = Config::defaults();
    CHECK_THROWS_AS(cfg.set("nodots", "1"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.get("no.such"), std::invalid_argument);
    CHECK(cfg.get_or("no.such", "fallback") == "fallback");
}

TEST_CASE("running a stage before its prerequisites is an error") {
    const auto dir = fs::temp_directory_path() / "dygrag_pipe_order";
    fs::remove_all(dir);
    Config cfg = tiny_config(dir.string());
    CHECK_THROWS_WITH_AS(run_stage(cfg, "retrieve"), doctest::Contains("preprocess"),
                         std::runtime_error);
    run_stage(cfg, "preprocess");
    run_stage(cfg, "pretrain");
    run_stage(cfg, "annotate");
    CHECK_THROWS_WITH_AS(run_stage(cfg, "retrieve"), doctest::Contains("train-retriever"),
                         std::runtime_error);
    CHECK_THROWS_AS(run_stage(cfg, "bogus"), std::invalid_argument);
    fs::remove_all(dir);
}

TEST_CASE("full tiny pipeline runs, caches and reports deterministically") {
    const auto dir = fs::temp_directory_path() / "dygrag_pipe_full";
    fs::remove_all(dir);
    Config cfg = tiny_config(dir.string());

    const std::string report = run_all(cfg);
    CHECK(fs::exists(report));
    const std::string first = slurp(report);
    CHECK(first.find("recall@k") != std::string::npos);

    // re-running is a cached no-op with identical bytes
    auto again = run_stage(cfg, "preprocess");
    CHECK(again.front().cached);
    const std::string report2 = run_all(cfg);
    CHECK(slurp(report2) == first);

    // a semantic change re-runs and lands in a fresh artifact directory
    Config changed = cfg;
    changed.set("fusion.k", "2");
    CHECK(stage_dir(changed, "retrieve", 1) != stage_dir(cfg, "retrieve", 1));
    fs::remove_all(dir);
}

TEST_CASE("degenerate matrix equals the single run") {
    const auto dir = fs::temp_directory_path() / "dygrag_pipe_matrix";
    fs::remove_all(dir);
    Config cfg = tiny_config(dir.string());
    cfg.set("fusion.k", "7");

    const std::string matrix_path = run_matrix(cfg, {"K"});
    const std::string table = slurp(matrix_path);
    // exactly five K rows plus the header
    std::size_t rows = 0;
    for (std::size_t pos = table.find("K="); pos != std::string::npos;
         pos = table.find("K=", pos + 1)) {
        ++rows;
    }
    CHECK(rows == 5);

    // the K=7 row matches the standalone run's aggregated report
    const std::string single = run_all(cfg);  // cached stages make this cheap
    std::ifstream kv(fs::path(single).parent_path() / "final_report.kv");
    std::string line, recall;
    while (std::getline(kv, line)) {
        if (line.rfind("recall@k=", 0) == 0) recall = line.substr(9);
    }
    REQUIRE(!recall.empty());
    CHECK(table.find("K=7\t" + recall) != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("report on an empty artifact set says so") {
    const auto dir = fs::temp_directory_path() / "dygrag_pipe_empty";
    fs::remove_all(dir);
    Config cfg = tiny_config(dir.string());
    const std::string path = emit_report(cfg);
    CHECK(slurp(path).find("nothing to report") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("environment overrides map DYGRAG_SECTION__KEY onto section.key") {
    Config cfg = Config::defaults();
    setenv("DYGRAG_FUSION__K", "9", 1);
    cfg.apply_env_overrides();
    unsetenv("DYGRAG_FUSION__K");
    CHECK(cfg.get("fusion.k") == "9");
}
