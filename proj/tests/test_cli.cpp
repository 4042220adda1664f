#include "bdt/cli/cli.hpp"
#include "bdt/common/image_io.hpp"
#include "bdt/common/json_util.hpp"
#include "bdt/data/loaders.hpp"

// c10's logging shim defines a glog-style CHECK; doctest owns the name here.
#undef CHECK
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bdt;

namespace {

fs::path workspace() {
    static fs::path dir = [] {
        auto d = fs::temp_directory_path() / "bdt-cli-test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

fs::path out_dir() { return workspace() / "out"; }

// Small-but-complete pipeline config: enough data that every stage has work
// to do (calibration needs >= 50 benign samples) while staying quick.
std::string config_path() {
    static std::string path = [] {
        json cfg{
            {"dataset", {{"train_count", 256}, {"test_count", 128}}},
            {"model", {{"epochs", 2}}},
            {"vae",
             {{"epochs", 2}, {"train_fraction", 0.3}, {"test_fraction", 0.25}}},
            {"elimination", {{"epochs", 1}, {"clean_fraction", 0.3}}},
            {"dropout", {{"ratios", json::array({0.0, 0.5})}}},
        };
        auto p = workspace() / "config.json";
        save_json_file(p.string(), cfg);
        return p.string();
    }();
    return path;
}

CliOptions base_options(const std::string& command) {
    CliOptions opt;
    opt.command = command;
    opt.config_path = config_path();
    opt.output_dir = out_dir().string();
    opt.seed = 0;
    return opt;
}

// Newest report for a command, by the millisecond stamp in the filename.
json latest_report(const std::string& command) {
    const fs::path dir = out_dir() / "reports";
    REQUIRE(fs::exists(dir));
    std::string best_key;
    fs::path best;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        const auto prefix = command + "-s";
        if (name.rfind(prefix, 0) != 0) continue;
        auto key = name.substr(prefix.size());
        key.resize(key.size() - 5); // drop ".json"
        // zero-pad for lexicographic comparison of "<seed>-<ms>[-n]"
        key = std::string(32 - std::min<size_t>(32, key.size()), '0') + key;
        if (key >= best_key) {
            best_key = key;
            best = entry.path();
        }
    }
    REQUIRE(!best.empty());
    return load_json_file(best.string());
}

std::string first_artifact(const json& report) {
    REQUIRE(report.at("artifacts").is_array());
    REQUIRE(!report.at("artifacts").empty());
    return report.at("artifacts").at(0).get<std::string>();
}

// Paths produced by earlier phases, consumed by later ones.
std::string g_clean_model;
std::string g_backdoor_model;
std::string g_vae_ckpt;
std::string g_detector_ckpt;

} // namespace

TEST_CASE("config: defaults, overrides, and field-level validation") {
    CliOptions opt;
    opt.command = "evaluate";
    auto cfg = effective_config(opt);
    CHECK(cfg == default_pipeline_config());

    opt.seed = 7;
    opt.output_dir = "elsewhere";
    cfg = effective_config(opt);
    CHECK(cfg.at("seed").get<int64_t>() == 7);
    CHECK(cfg.at("output_dir").get<std::string>() == "elsewhere");

    auto bad1 = workspace() / "bad-unknown.json";
    save_json_file(bad1.string(), json{{"trigger", {{"blend_lamda", 0.3}}}});
    CliOptions bad_opt;
    bad_opt.command = "evaluate";
    bad_opt.config_path = bad1.string();
    CHECK_THROWS_WITH_AS(effective_config(bad_opt),
                         doctest::Contains("trigger.blend_lamda"),
                         std::exception);

    auto bad2 = workspace() / "bad-type.json";
    save_json_file(bad2.string(), json{{"dataset", {{"image_size", "big"}}}});
    bad_opt.config_path = bad2.string();
    try {
        effective_config(bad_opt);
        FAIL("expected a type violation");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dataset.image_size") != std::string::npos);
        CHECK(msg.find("integer") != std::string::npos);
    }
}

TEST_CASE("config hash: seed-invariant, content-sensitive") {
    auto a = base_options("evaluate");
    auto b = base_options("evaluate");
    b.seed = 11;
    CHECK(pipeline_config_hash(effective_config(a)) ==
          pipeline_config_hash(effective_config(b)));

    auto changed = effective_config(a);
    changed["trigger"]["blend_lambda"] = 0.31;
    CHECK(pipeline_config_hash(changed) !=
          pipeline_config_hash(effective_config(a)));
}

TEST_CASE("train-clean: trains, reports, caches, and honors --force") {
    REQUIRE(run_command(base_options("train-clean")) == 0);
    auto report = latest_report("train-clean");
    CHECK(report.at("cached").get<bool>() == false);
    const double acc = report.at("metrics").at("acc").get<double>();
    CHECK(acc > 0.0);
    CHECK(acc <= 1.0);
    g_clean_model = first_artifact(report);
    CHECK(fs::exists(g_clean_model));
    CHECK(fs::exists(g_clean_model + ".json"));

    REQUIRE(run_command(base_options("train-clean")) == 0);
    CHECK(latest_report("train-clean").at("cached").get<bool>() == true);

    auto forced = base_options("train-clean");
    forced.force = true;
    REQUIRE(run_command(forced) == 0);
    CHECK(latest_report("train-clean").at("cached").get<bool>() == false);
}

TEST_CASE("train-backdoor: poisons and reports attack metrics") {
    REQUIRE(run_command(base_options("train-backdoor")) == 0);
    auto report = latest_report("train-backdoor");
    CHECK(report.at("metrics").at("family").get<std::string>() == "badnets");
    CHECK(report.at("metrics").at("acc").get<double>() > 0.0);
    CHECK(report.at("metrics").at("asr").get<double>() >= 0.0);
    g_backdoor_model = first_artifact(report);
    CHECK(fs::exists(g_backdoor_model));
}

TEST_CASE("evaluate: needs a model, reports ACC and per-family ASR") {
    CHECK(run_command(base_options("evaluate")) != 0); // no --model

    auto opt = base_options("evaluate");
    opt.model_path = g_backdoor_model;
    REQUIRE(run_command(opt) == 0);
    auto metrics = latest_report("evaluate").at("metrics");
    CHECK(metrics.at("acc").get<double>() > 0.0);
    CHECK(metrics.at("asr").contains("badnets"));
}

TEST_CASE("train-vae and calibrate produce a usable detector") {
    auto opt = base_options("train-vae");
    opt.model_path = g_clean_model;
    REQUIRE(run_command(opt) == 0);
    auto vae_report = latest_report("train-vae");
    g_vae_ckpt = first_artifact(vae_report);
    CHECK(fs::exists(g_vae_ckpt));
    CHECK(vae_report.at("metrics").at("final_benign_mse").get<double>() >= 0.0);

    auto cal = base_options("calibrate");
    cal.model_path = g_clean_model;
    cal.detector_path = g_vae_ckpt;
    REQUIRE(run_command(cal) == 0);
    auto cal_report = latest_report("calibrate");
    CHECK(cal_report.at("metrics").at("tau").get<double>() >= 0.0);
    CHECK(cal_report.at("metrics").at("n2").get<int64_t>() >= 50);
    g_detector_ckpt = first_artifact(cal_report);
    CHECK(fs::exists(g_detector_ckpt));
}

TEST_CASE("detect: uncalibrated detector is refused; verdicts are JSONL") {
    auto images_dir = workspace() / "probe-images";
    fs::create_directories(images_dir);
    auto probes = make_synth10(19, 4);
    for (int64_t i = 0; i < 4; ++i) {
        write_ppm((images_dir / ("img" + std::to_string(i) + ".ppm")).string(),
                  probes.images[i]);
    }

    auto uncal = base_options("detect");
    uncal.model_path = g_clean_model;
    uncal.detector_path = g_vae_ckpt; // never calibrated
    uncal.images_dir = images_dir.string();
    CHECK(run_command(uncal) != 0);

    auto opt = base_options("detect");
    opt.model_path = g_clean_model;
    opt.detector_path = g_detector_ckpt;
    opt.images_dir = images_dir.string();
    REQUIRE(run_command(opt) == 0);
    auto report = latest_report("detect");
    CHECK(report.at("metrics").at("count").get<int64_t>() == 4);
    CHECK(report.at("metrics").at("flagged").get<int64_t>() >= 0);
    const auto verdict_path = first_artifact(report);
    CHECK(fs::exists(verdict_path));

    std::ifstream in(verdict_path);
    std::string line;
    int64_t lines = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto parsed = json::parse(line);
        CHECK(parsed.contains("file"));
        CHECK(parsed.contains("verdict"));
        CHECK(parsed.contains("dis"));
        CHECK(parsed.contains("label0"));
        ++lines;
    }
    CHECK(lines == 4);
}

TEST_CASE("eliminate: repairs into a new checkpoint with epoch curves") {
    auto opt = base_options("eliminate");
    opt.model_path = g_backdoor_model;
    REQUIRE(run_command(opt) == 0);
    auto report = latest_report("eliminate");
    auto metrics = report.at("metrics");
    CHECK(metrics.at("reference_hash_constant").get<bool>() == true);
    CHECK(metrics.at("acc_initial").get<double>() > 0.0);
    CHECK(metrics.at("epoch_acc").size() == 1); // one elimination epoch
    CHECK(fs::exists(first_artifact(report)));
}

TEST_CASE("dropout-study: one row per configured ratio") {
    auto opt = base_options("dropout-study");
    opt.model_path = g_backdoor_model;
    REQUIRE(run_command(opt) == 0);
    auto metrics = latest_report("dropout-study").at("metrics");
    REQUIRE(metrics.at("ratios").size() == 2);
    CHECK(metrics.at("acc").size() == 2);
    CHECK(metrics.at("asr").size() == 2);
    CHECK(metrics.at("ratios").at(0).get<double>() == 0.0);
}

TEST_CASE("consistency-study: probes with a foreign trigger, renders grids") {
    auto opt = base_options("consistency-study");
    opt.model_path = g_backdoor_model;
    REQUIRE(run_command(opt) == 0);
    auto report = latest_report("consistency-study");
    auto metrics = report.at("metrics");
    CHECK(metrics.at("own_asr").get<double>() >= 0.0);
    CHECK(metrics.at("cross_asr").get<double>() >= 0.0);
    REQUIRE(report.at("artifacts").size() >= 3);
    for (const auto& artifact : report.at("artifacts")) {
        CHECK(fs::exists(artifact.get<std::string>()));
    }
}

TEST_CASE("report: aggregates same-config runs, refuses mixed configs") {
    REQUIRE(run_command(base_options("report")) == 0);
    auto summary = latest_report("report");
    auto by_command = summary.at("metrics").at("by_command");
    CHECK(by_command.contains("train-clean"));
    CHECK(by_command.contains("train-backdoor"));
    CHECK(by_command.contains("eliminate"));

    // A run under a different config into the same output dir poisons the
    // aggregation; report must refuse rather than mix experiments.
    json other{{"dataset", {{"train_count", 256}, {"test_count", 128}}},
               {"model", {{"epochs", 2}}},
               {"trigger", {{"blend_lambda", 0.31}}}};
    auto other_path = workspace() / "config-other.json";
    save_json_file(other_path.string(), other);
    auto opt = base_options("evaluate");
    opt.config_path = other_path.string();
    opt.model_path = g_backdoor_model;
    REQUIRE(run_command(opt) == 0);
    CHECK(run_command(base_options("report")) != 0);
}

TEST_CASE("unknown command fails cleanly") {
    auto opt = base_options("defragment");
    CHECK(run_command(opt) != 0);
}
