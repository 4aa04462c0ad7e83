#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "presspose/cli.hpp"
#include "presspose/common.hpp"

using namespace presspose;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("presspose_cli_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

struct CliResult {
    int code = 0;
    std::string out, err;
};

CliResult cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliResult r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Tiny but complete run configuration, written to disk for --config.
std::string write_micro_config(const TempDir& dir, uint64_t seed = 3) {
    json cfg = {
        {"model",
         {{"grid_w", 16},
          {"grid_h", 16},
          {"frames_t", 4},
          {"spatial_crop", 4},
          {"temporal_crop", 2},
          {"embed_dim", 8},
          {"encoder_depth", 1},
          {"num_heads", 2},
          {"ffn_ratio", 2},
          {"decoder_depth", 1},
          {"decoder_dim", 8},
          {"decoder_heads", 2},
          {"num_joints", 14},
          {"head_channels", 8},
          {"strict_geometry", false}}},
        {"train",
         {{"pretrain_epochs", 1},
          {"warmup_epochs", 1},
          {"finetune_epochs", 1},
          {"batch_size", 4},
          {"rng_seed", seed}}},
        {"synth",
         {{"num_sequences", 5}, {"frames", 8}, {"grid_w", 16}, {"grid_h", 16}}}};
    fs::path p = dir.path / "cfg.json";
    std::ofstream f(p);
    f << cfg.dump(2);
    return p.string();
}

}  // namespace

TEST_CASE("usage and help behave like a unix tool") {
    CliResult r = cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("Subcommands") != std::string::npos);

    r = cli({});
    CHECK(r.code == 1);

    r = cli({"gen-data", "--out", "/tmp/unused", "--nope"});
    CHECK(r.code == 1);
    CHECK(r.err.find("--nope") != std::string::npos);

    r = cli({"train", "--stage", "bogus"});
    CHECK(r.code == 1);
}

TEST_CASE("validate reports config state through the exit code") {
    TempDir dir("validate");
    std::string cfg = write_micro_config(dir);

    CliResult r = cli({"validate", "--config", cfg});
    CHECK(r.code == 0);
    CHECK(r.out == "config ok\n");

    r = cli({"validate", "--config", cfg, "--json"});
    CHECK(r.code == 0);
    json j = json::parse(r.out);
    CHECK(j["ok"] == true);
    CHECK(j["issues"].empty());

    SUBCASE("invariant violations exit 1 and are itemized") {
        json bad = json::parse(read_file(cfg));
        bad["model"]["embed_dim"] = 9;  // not divisible by num_heads
        fs::path p = dir.path / "bad.json";
        std::ofstream(p) << bad.dump();
        r = cli({"validate", "--config", p.string(), "--json"});
        CHECK(r.code == 1);
        j = json::parse(r.out);
        CHECK(j["ok"] == false);
        CHECK(!j["issues"].empty());
        CHECK(j["issues"][0].contains("field"));
    }
    SUBCASE("unknown config keys exit 1") {
        fs::path p = dir.path / "unk.json";
        std::ofstream(p) << R"({"model": {"grid_width": 16}})";
        r = cli({"validate", "--config", p.string()});
        CHECK(r.code == 1);
        CHECK(r.err.find("grid_width") != std::string::npos);
    }
    SUBCASE("missing config file exits 2") {
        r = cli({"validate", "--config", (dir.path / "nope.json").string()});
        CHECK(r.code == 2);
        CHECK(r.err.find("nope.json") != std::string::npos);
    }
}

TEST_CASE("gen-data is deterministic in the seed") {
    TempDir dir("gendata");
    CliResult a = cli({"gen-data", "--out", (dir.path / "a").string(), "--seed",
                       "7", "--json"});
    CliResult b = cli({"gen-data", "--out", (dir.path / "b").string(), "--seed",
                       "7"});
    CliResult c = cli({"gen-data", "--out", (dir.path / "c").string(), "--seed",
                       "8"});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    REQUIRE(c.code == 0);

    json ja = json::parse(a.out);
    CHECK(ja["seed"] == 7);
    CHECK(ja["sequences"] == 20);
    CHECK(int(ja["train"]) + int(ja["test"]) == 20);

    bool saw_file = false;
    for (const auto& entry : fs::directory_iterator(dir.path / "a")) {
        fs::path name = entry.path().filename();
        saw_file = true;
        CHECK(read_file(dir.path / "a" / name) == read_file(dir.path / "b" / name));
    }
    CHECK(saw_file);
    // a different seed must change at least one sequence file
    bool any_diff = false;
    for (const auto& entry : fs::directory_iterator(dir.path / "a")) {
        fs::path name = entry.path().filename();
        if (name == "manifest.json") continue;
        any_diff |= read_file(dir.path / "a" / name) != read_file(dir.path / "c" / name);
    }
    CHECK(any_diff);
}

TEST_CASE("stats prints percentile bands and can persist them") {
    TempDir dir("stats");
    std::string cfg = write_micro_config(dir);
    REQUIRE(cli({"gen-data", "--config", cfg, "--out", (dir.path / "ds").string()})
                .code == 0);
    std::string manifest = (dir.path / "ds" / "manifest.json").string();

    CliResult r = cli({"stats", "--manifest", manifest, "--json", "--out",
                       (dir.path / "statsout").string()});
    REQUIRE(r.code == 0);
    json j = json::parse(r.out);
    REQUIRE(j["limbs"].size() == 13);
    for (const json& limb : j["limbs"]) {
        CHECK(double(limb["lower"]) <= double(limb["upper"]));
        CHECK(limb.contains("from"));
    }
    CHECK(fs::exists(dir.path / "statsout" / "limb_stats.json"));

    // plain-text mode lists one limb per line
    r = cli({"stats", "--manifest", manifest});
    REQUIRE(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 13);
}

TEST_CASE("pipeline subcommands chain through a run directory") {
    TempDir dir("pipeline");
    std::string cfg = write_micro_config(dir);
    REQUIRE(cli({"gen-data", "--config", cfg, "--out", (dir.path / "ds").string()})
                .code == 0);
    std::string manifest = (dir.path / "ds" / "manifest.json").string();
    std::string run = (dir.path / "run").string();

    SUBCASE("train before pretrain is an actionable error") {
        CliResult r = cli({"train", "--config", cfg, "--manifest", manifest,
                           "--out", run});
        CHECK(r.code == 2);
        CHECK(r.err.find("--from-scratch") != std::string::npos);
    }

    SUBCASE("pretrain, train, eval, export-preds") {
        CliResult r = cli({"pretrain", "--config", cfg, "--manifest", manifest,
                           "--out", run, "--json"});
        REQUIRE(r.code == 0);
        json j = json::parse(r.out);
        CHECK(j["run_id"] == "seed-3");
        CHECK(j["stages"][0]["epochs_run"] == 1);
        CHECK(fs::exists(fs::path(run) / "pretrain" / "epoch_1.ckpt"));

        // a second identical call resumes past the completed stage
        r = cli({"pretrain", "--config", cfg, "--manifest", manifest, "--out",
                 run, "--json"});
        REQUIRE(r.code == 0);
        j = json::parse(r.out);
        CHECK(j["stages"][0]["epochs_run"] == 0);
        CHECK(j["stages"][0]["resumed_at"] == 1);

        // eval before any supervised stage has nothing to load
        r = cli({"eval", "--config", cfg, "--manifest", manifest, "--out", run});
        CHECK(r.code == 2);

        r = cli({"train", "--config", cfg, "--manifest", manifest, "--out", run,
                 "--json"});
        REQUIRE(r.code == 0);
        j = json::parse(r.out);
        REQUIRE(j["stages"].size() == 2);
        CHECK(j["stages"][0]["stage"] == "warmup");
        CHECK(j["stages"][1]["stage"] == "finetune");
        CHECK(fs::exists(fs::path(run) / "warmup" / "epoch_1.ckpt"));
        CHECK(fs::exists(fs::path(run) / "finetune" / "epoch_1.ckpt"));

        // report.csv accumulated all three stages under one run id
        std::string report = read_file(fs::path(run) / "report.csv");
        CHECK(report.find("seed-3,pretrain,1,train") != std::string::npos);
        CHECK(report.find("seed-3,warmup,1,train") != std::string::npos);
        CHECK(report.find("seed-3,warmup,1,test") != std::string::npos);
        CHECK(report.find("seed-3,finetune,1,test") != std::string::npos);

        r = cli({"eval", "--config", cfg, "--manifest", manifest, "--out", run,
                 "--json"});
        REQUIRE(r.code == 0);
        j = json::parse(r.out);
        CHECK(std::string(j["checkpoint"]).find("finetune") != std::string::npos);
        CHECK(j["windows"] == 2);  // one 8-frame test sequence, T=4
        CHECK(j["skipped_sequences"] == 0);
        CHECK(double(j["mpjpe_cm"]) > 0.0);
        CHECK(j["sequences"].size() == 1);

        // eval twice gives byte-identical output (idempotent, read-only)
        CliResult r2 = cli({"eval", "--config", cfg, "--manifest", manifest,
                            "--out", run, "--json"});
        CHECK(r2.out == r.out);

        r = cli({"export-preds", "--config", cfg, "--manifest", manifest,
                 "--out", run, "--json"});
        REQUIRE(r.code == 0);
        j = json::parse(r.out);
        CHECK(j["rows"] == 2 * 4 * 14);  // windows x frames x joints
        std::string csv = read_file(fs::path(run) / "predictions.csv");
        CHECK(csv.rfind("sequence_id,frame,joint,x,y,z\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 4 * 14);
    }

    SUBCASE("from-scratch bypasses the pretrain checkpoint") {
        CliResult r = cli({"train", "--config", cfg, "--manifest", manifest,
                           "--out", run, "--from-scratch", "--json"});
        REQUIRE(r.code == 0);
        json j = json::parse(r.out);
        CHECK(j["stages"].size() == 2);
        CHECK(fs::exists(fs::path(run) / "finetune" / "epoch_1.ckpt"));
    }

    SUBCASE("stage selection runs a single stage") {
        REQUIRE(cli({"train", "--config", cfg, "--manifest", manifest, "--out",
                     run, "--from-scratch", "--stage", "warmup", "--json"})
                    .code == 0);
        CHECK(fs::exists(fs::path(run) / "warmup" / "epoch_1.ckpt"));
        CHECK(!fs::exists(fs::path(run) / "finetune"));

        // finetune alone picks up the stored warmup parameters
        CliResult r = cli({"train", "--config", cfg, "--manifest", manifest,
                           "--out", run, "--from-scratch", "--stage", "finetune",
                           "--json"});
        REQUIRE(r.code == 0);
        json j = json::parse(r.out);
        REQUIRE(j["stages"].size() == 1);
        CHECK(j["stages"][0]["stage"] == "finetune");
    }

    SUBCASE("a held lock turns into exit 2") {
        fs::create_directories(run);
        std::ofstream(fs::path(run) / ".lock") << "held\n";
        CliResult r = cli({"pretrain", "--config", cfg, "--manifest", manifest,
                           "--out", run});
        CHECK(r.code == 2);
        CHECK(r.err.find("locked") != std::string::npos);
    }

    SUBCASE("the seed flag overrides the config seed") {
        CliResult r = cli({"pretrain", "--config", cfg, "--manifest", manifest,
                           "--out", run, "--seed", "99", "--json"});
        REQUIRE(r.code == 0);
        CHECK(json::parse(r.out)["run_id"] == "seed-99");
        std::string report = read_file(fs::path(run) / "report.csv");
        CHECK(report.find("seed-99,pretrain,1,train") != std::string::npos);
    }
}

TEST_CASE("worker thread cap comes from the environment") {
    ::unsetenv("TPL_NUM_THREADS");
    CHECK(worker_thread_cap() == 1);

    ::setenv("TPL_NUM_THREADS", "1", 1);
    CHECK(worker_thread_cap() == 1);

    ::setenv("TPL_NUM_THREADS", "0", 1);
    CHECK_THROWS_AS(worker_thread_cap(), Error);

    ::setenv("TPL_NUM_THREADS", "zippy", 1);
    // a bad value fails any subcommand with a validation exit
    CliResult r = cli({"validate", "--config", "/nonexistent.json"});
    CHECK(r.code == 1);
    CHECK(r.err.find("TPL_NUM_THREADS") != std::string::npos);

    ::unsetenv("TPL_NUM_THREADS");
}
