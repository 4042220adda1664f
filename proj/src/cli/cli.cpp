#include "bdt/cli/cli.hpp"

#include "bdt/attack/train.hpp"
#include "bdt/be/eliminate.hpp"
#include "bdt/bid/detector.hpp"
#include "bdt/common/image_io.hpp"
#include "bdt/common/serialize.hpp"
#include "bdt/data/loaders.hpp"
#include "bdt/metrics/metrics.hpp"
#include "bdt/vae/vae.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace bdt {

const std::vector<std::string> kCliCommands = {
    "train-backdoor", "train-clean",   "train-vae",
    "calibrate",      "detect",        "eliminate",
    "evaluate",       "dropout-study", "consistency-study",
    "report"};

namespace {

void merge_into(json& base, const json& overlay, const std::string& prefix,
                std::vector<std::string>& unknown) {
    for (const auto& [key, value] : overlay.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) {
            unknown.push_back(path);
            continue;
        }
        if (base[key].is_object() && value.is_object()) {
            merge_into(base[key], value, path, unknown);
        } else {
            base[key] = value;
        }
    }
}

std::vector<FieldSpec> config_schema() {
    return {
        {"dataset.name", "string"},
        {"dataset.image_size", "integer"},
        {"dataset.data_dir", "string"},
        {"dataset.train_count", "integer"},
        {"dataset.test_count", "integer"},
        {"model.pointcut", "string"},
        {"model.feature_gain", "number"},
        {"model.epochs", "integer"},
        {"model.batch_size", "integer"},
        {"model.learning_rate", "number"},
        {"model.weight_decay", "number"},
        {"model.optimizer", "string"},
        {"model.cosine_schedule", "boolean"},
        {"trigger.family", "string"},
        {"trigger.target_label", "integer"},
        {"trigger.poison_ratio", "number"},
        {"trigger.blend_lambda", "number"},
        {"trigger.jitter_low", "number"},
        {"trigger.jitter_high", "number"},
        {"trigger.max_rotation_deg", "number"},
        {"trigger.max_translation", "number"},
        {"trigger.epsilon", "number"},
        {"trigger.advdoor_steps", "integer"},
        {"trigger.warp_grid_size", "integer"},
        {"trigger.warp_strength", "number"},
        {"vae.alpha", "number"},
        {"vae.epochs", "integer"},
        {"vae.batch_size", "integer"},
        {"vae.learning_rate", "number"},
        {"vae.train_fraction", "number"},
        {"vae.test_fraction", "number"},
        {"detection.confidence_p", "number"},
        {"elimination.beta", "number"},
        {"elimination.epochs", "integer"},
        {"elimination.batch_size", "integer"},
        {"elimination.learning_rate", "number"},
        {"elimination.clean_fraction", "number"},
        {"consistency.probe_family", "string"},
        {"dropout.ratios", "array"},
        {"seed", "integer"},
        {"output_dir", "string"},
    };
}

struct CommandContext {
    CliOptions opt;
    json cfg;
    std::string hash;
    int64_t seed = 0;
    fs::path ckpt_dir, reports_dir, figs_dir;
};

std::string timestamp_iso() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

CommandContext make_context(const CliOptions& opt) {
    CommandContext ctx;
    ctx.opt = opt;
    ctx.cfg = effective_config(opt);
    ctx.hash = pipeline_config_hash(ctx.cfg);
    ctx.seed = ctx.cfg.at("seed").get<int64_t>();
    const fs::path out = ctx.cfg.at("output_dir").get<std::string>();
    ctx.ckpt_dir = out / "ckpt";
    ctx.reports_dir = out / "reports";
    ctx.figs_dir = out / "figs";
    fs::create_directories(ctx.ckpt_dir);
    fs::create_directories(ctx.reports_dir);
    fs::create_directories(ctx.figs_dir);
    return ctx;
}

json make_provenance(const CommandContext& ctx, const std::string& command) {
    return json{{"config_hash", ctx.hash},
                {"seed", ctx.seed},
                {"command", command},
                {"created", timestamp_iso()}};
}

void write_report(const CommandContext& ctx, const std::string& command,
                  const json& metrics, const std::vector<std::string>& artifacts,
                  bool cached) {
    const json report{{"command", command},
                      {"config", ctx.cfg},
                      {"config_hash", ctx.hash},
                      {"seed", ctx.seed},
                      {"timestamp", timestamp_iso()},
                      {"metrics", metrics},
                      {"artifacts", artifacts},
                      {"cached", cached}};
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    fs::path path;
    for (int suffix = 0;; ++suffix) {
        std::string name = command + "-s" + std::to_string(ctx.seed) + "-" +
                           std::to_string(ms) +
                           (suffix ? "-" + std::to_string(suffix) : "") +
                           ".json";
        path = ctx.reports_dir / name;
        if (!fs::exists(path)) break;
    }
    save_json_file(path.string(), report);
    std::cout << report.dump(2) << "\n";
}

bool cache_hit(const CommandContext& ctx, const std::string& path) {
    if (ctx.opt.force || !fs::exists(path) || !fs::exists(path + ".json")) {
        return false;
    }
    try {
        const json manifest = load_json_file(path + ".json");
        const auto& prov = manifest.at("provenance");
        return prov.at("config_hash").get<std::string>() == ctx.hash &&
               prov.at("seed").get<int64_t>() == ctx.seed;
    } catch (const std::exception&) {
        return false;
    }
}

std::string hash8(const CommandContext& ctx) { return ctx.hash.substr(0, 8); }

DatasetSplit load_split(const CommandContext& ctx) {
    const auto& d = ctx.cfg.at("dataset");
    auto split = load_dataset(
        d.at("name").get<std::string>(), d.at("image_size").get<int64_t>(),
        ctx.seed, d.at("data_dir").get<std::string>(),
        d.at("train_count").get<int64_t>(), d.at("test_count").get<int64_t>());
    split.vae_train_fraction = ctx.cfg.at("vae").at("train_fraction").get<double>();
    split.vae_test_fraction = ctx.cfg.at("vae").at("test_fraction").get<double>();
    return split;
}

CleanSubsets subsets_for(const CommandContext& ctx, const DatasetSplit& split) {
    return draw_clean_subsets(
        split.train.size(), split.vae_train_fraction, split.vae_test_fraction,
        ctx.cfg.at("elimination").at("clean_fraction").get<double>(), ctx.seed);
}

TrainConfig train_config_from(const CommandContext& ctx) {
    const auto& m = ctx.cfg.at("model");
    TrainConfig tc;
    tc.epochs = m.at("epochs").get<int64_t>();
    tc.batch_size = m.at("batch_size").get<int64_t>();
    tc.learning_rate = m.at("learning_rate").get<double>();
    tc.weight_decay = m.at("weight_decay").get<double>();
    tc.optimizer_id = m.at("optimizer").get<std::string>();
    tc.cosine_schedule = m.at("cosine_schedule").get<bool>();
    tc.seed = ctx.seed;
    tc.image_size = ctx.cfg.at("dataset").at("image_size").get<int64_t>();
    tc.feature_gain = m.at("feature_gain").get<double>();
    return tc;
}

TriggerSpec trigger_from_config(const CommandContext& ctx,
                                const std::string& family_override = "") {
    const auto& t = ctx.cfg.at("trigger");
    TriggerSpec spec;
    spec.family = trigger_family_from_string(
        family_override.empty() ? t.at("family").get<std::string>()
                                : family_override);
    spec.target_label = t.at("target_label").get<int64_t>();
    spec.poison_ratio = t.at("poison_ratio").get<double>();
    spec.seed = ctx.seed;
    spec.params.blend_lambda = t.at("blend_lambda").get<double>();
    spec.params.jitter_low = t.at("jitter_low").get<double>();
    spec.params.jitter_high = t.at("jitter_high").get<double>();
    spec.params.max_rotation_deg = t.at("max_rotation_deg").get<double>();
    spec.params.max_translation = t.at("max_translation").get<double>();
    spec.params.epsilon = t.at("epsilon").get<double>();
    spec.params.warp_grid_size = t.at("warp_grid_size").get<int64_t>();
    spec.params.warp_strength = t.at("warp_strength").get<double>();
    return spec;
}

std::string model_stem(const std::string& model_path) {
    return fs::path(model_path).stem().string();
}

std::string require_model_path(const CommandContext& ctx) {
    if (ctx.opt.model_path.empty()) {
        throw std::runtime_error(ctx.opt.command +
                                 ": --model <checkpoint> is required");
    }
    return ctx.opt.model_path;
}

std::string require_detector_path(const CommandContext& ctx) {
    if (ctx.opt.detector_path.empty()) {
        throw std::runtime_error(ctx.opt.command +
                                 ": --detector <checkpoint> is required");
    }
    return ctx.opt.detector_path;
}

// Trains (or reuses) the clean classifier for this config+seed.
std::pair<PointcutModel, std::string> ensure_clean_model(
    const CommandContext& ctx, const DatasetSplit& split, bool* cached) {
    const std::string path =
        (ctx.ckpt_dir / ("clean-" + hash8(ctx) + "-s" +
                         std::to_string(ctx.seed) + ".pt"))
            .string();
    if (cache_hit(ctx, path)) {
        if (cached != nullptr) *cached = true;
        return {load_classifier_checkpoint(path), path};
    }
    if (cached != nullptr) *cached = false;
    auto result = train_classifier(split.train, train_config_from(ctx));
    save_classifier_checkpoint(path, result.model,
                               make_provenance(ctx, "train-clean"));
    return {std::move(result.model), path};
}

int cmd_train_clean(const CommandContext& ctx) {
    auto split = load_split(ctx);
    bool cached = false;
    auto [model, path] = ensure_clean_model(ctx, split, &cached);
    const json metrics{{"acc", accuracy(model, split.test)}};
    write_report(ctx, "train-clean", metrics, {path}, cached);
    return 0;
}

int cmd_train_backdoor(const CommandContext& ctx) {
    auto split = load_split(ctx);
    auto spec = trigger_from_config(ctx);
    const std::string path =
        (ctx.ckpt_dir / ("backdoor-" + to_string(spec.family) + "-" +
                         hash8(ctx) + "-s" + std::to_string(ctx.seed) + ".pt"))
            .string();

    bool cached = cache_hit(ctx, path);
    json metrics;
    if (cached) {
        auto model = load_classifier_checkpoint(path);
        auto stored = load_trigger_spec(path);
        metrics = {{"acc", accuracy(model, split.test)},
                   {"asr", attack_success(model, split.test, *stored)}};
    } else {
        if (spec.family == TriggerFamily::advdoor) {
            auto [surrogate, surrogate_path] =
                ensure_clean_model(ctx, split, nullptr);
            spec.params.perturbation = make_advdoor_trigger(
                surrogate, split, spec.target_label, spec.params.epsilon,
                ctx.cfg.at("trigger").at("advdoor_steps").get<int64_t>(),
                ctx.seed);
        }
        auto poisoned = poison_dataset(split, spec);
        auto result = train_classifier(poisoned.samples, train_config_from(ctx));
        save_classifier_checkpoint(path, result.model,
                                   make_provenance(ctx, "train-backdoor"),
                                   &spec);
        metrics = {{"acc", accuracy(result.model, split.test)},
                   {"asr", attack_success(result.model, split.test, spec)},
                   {"poisoned_count", poisoned.poisoned_indices.numel()},
                   {"loss_warning", result.loss_warning}};
    }
    metrics["family"] = to_string(spec.family);
    write_report(ctx, "train-backdoor", metrics, {path}, cached);
    return 0;
}

int cmd_train_vae(const CommandContext& ctx) {
    const auto model_path = require_model_path(ctx);
    auto model = load_classifier_checkpoint(model_path);
    const std::string path =
        (ctx.ckpt_dir / ("vae-for-" + model_stem(model_path) + ".pt")).string();

    bool cached = cache_hit(ctx, path);
    json metrics;
    if (cached) {
        auto loaded = load_vae_checkpoint(path);
        metrics = {{"latent_dim", loaded.state.latent_dim},
                   {"alpha", loaded.state.alpha}};
    } else {
        auto split = load_split(ctx);
        auto subsets = subsets_for(ctx, split);
        auto vae_data = split.train.index(subsets.vae_train);
        const auto& layout = model.grid_layout();
        auto state =
            build_vae(layout.height, layout.width, 0,
                      ctx.cfg.at("vae").at("alpha").get<double>());
        VaeTrainConfig vc;
        vc.epochs = ctx.cfg.at("vae").at("epochs").get<int64_t>();
        vc.batch_size = ctx.cfg.at("vae").at("batch_size").get<int64_t>();
        vc.learning_rate = ctx.cfg.at("vae").at("learning_rate").get<double>();
        vc.seed = ctx.seed;
        auto log = train_vae(model, vae_data, state, vc);
        json prov = make_provenance(ctx, "train-vae");
        prov["model"] = model_path;
        save_vae_checkpoint(path, state, prov);
        metrics = {{"latent_dim", state.latent_dim},
                   {"alpha", state.alpha},
                   {"train_samples", vae_data.size()},
                   {"final_benign_mse", log.final_benign_mse}};
    }
    write_report(ctx, "train-vae", metrics, {path}, cached);
    return 0;
}

int cmd_calibrate(const CommandContext& ctx) {
    const auto model_path = require_model_path(ctx);
    const auto vae_path = require_detector_path(ctx);
    auto model = load_classifier_checkpoint(model_path);
    auto loaded = load_vae_checkpoint(vae_path);
    const std::string path =
        (ctx.ckpt_dir / ("detector-for-" + model_stem(model_path) + ".pt"))
            .string();

    bool cached = cache_hit(ctx, path);
    double tau = 0, p = 0;
    int64_t n2 = 0;
    if (cached) {
        auto det = load_vae_checkpoint(path);
        tau = det.tau;
        p = det.confidence_p;
    } else {
        auto split = load_split(ctx);
        auto subsets = subsets_for(ctx, split);
        auto calib = split.train.images.index_select(0, subsets.vae_test);
        n2 = calib.size(0);
        p = ctx.cfg.at("detection").at("confidence_p").get<double>();
        DetectorState detector{loaded.state, &model, p, -1};
        detector = calibrate_on_images(std::move(detector), calib, p);
        tau = detector.tau;
        json prov = make_provenance(ctx, "calibrate");
        prov["model"] = model_path;
        prov["vae"] = vae_path;
        save_vae_checkpoint(path, detector.vae, prov, tau, p);
    }
    write_report(ctx, "calibrate",
                 {{"tau", tau}, {"confidence_p", p}, {"n2", n2}}, {path},
                 cached);
    return 0;
}

int cmd_detect(const CommandContext& ctx) {
    const auto model_path = require_model_path(ctx);
    const auto det_path = require_detector_path(ctx);
    if (ctx.opt.images_dir.empty()) {
        throw std::runtime_error("detect: --images <dir> is required");
    }
    auto model = load_classifier_checkpoint(model_path);
    auto loaded = load_vae_checkpoint(det_path);
    if (loaded.tau < 0) {
        throw std::runtime_error(
            "detect: detector checkpoint is uncalibrated; run calibrate "
            "first");
    }
    DetectorState detector{loaded.state, &model, loaded.confidence_p,
                           loaded.tau};

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(ctx.opt.images_dir)) {
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw std::runtime_error("detect: no .ppm/.pgm files under " +
                                 ctx.opt.images_dir);
    }

    int64_t flagged = 0;
    std::vector<json> lines;
    for (const auto& file : files) {
        auto image = read_image(file.string());
        if (image.size(0) == 1) {
            image = image.repeat({3, 1, 1});
        }
        TORCH_CHECK(image.size(1) == model.input_size() &&
                        image.size(2) == model.input_size(),
                    "detect: ", file.string(), " is ", image.size(1), "x",
                    image.size(2), ", expected ", model.input_size(), "x",
                    model.input_size());
        const auto d = detect(detector, image);
        const bool is_backdoor = d.verdict == Verdict::backdoor;
        flagged += is_backdoor ? 1 : 0;
        json line{{"file", file.filename().string()},
                  {"label0", d.label0},
                  {"label1", d.label1},
                  {"dis", d.dis},
                  {"verdict", is_backdoor ? "backdoor" : "benign"}};
        std::cout << line.dump() << "\n";
        lines.push_back(std::move(line));
    }

    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    const auto verdict_path =
        ctx.reports_dir / ("detect-verdicts-" + std::to_string(ms) + ".jsonl");
    {
        std::ofstream out(verdict_path);
        for (const auto& line : lines) out << line.dump() << "\n";
    }
    write_report(ctx, "detect",
                 {{"count", int64_t(files.size())}, {"flagged", flagged}},
                 {verdict_path.string()}, false);
    return 0;
}

int cmd_eliminate(const CommandContext& ctx) {
    const auto model_path = require_model_path(ctx);
    auto model = load_classifier_checkpoint(model_path);
    auto spec = load_trigger_spec(model_path);
    const std::string path =
        (ctx.ckpt_dir / ("repaired-" + model_stem(model_path) + ".pt"))
            .string();
    auto split = load_split(ctx);

    bool cached = cache_hit(ctx, path);
    json metrics;
    if (cached) {
        auto repaired = load_classifier_checkpoint(path);
        metrics = {{"acc", accuracy(repaired, split.test)}};
        if (spec) {
            metrics["asr"] = attack_success(repaired, split.test, *spec);
        }
    } else {
        auto subsets = subsets_for(ctx, split);
        auto clean = split.train.index(subsets.elimination);
        const auto& e = ctx.cfg.at("elimination");
        EliminationConfig ec;
        ec.beta = e.at("beta").get<double>();
        ec.epochs = e.at("epochs").get<int64_t>();
        ec.batch_size = e.at("batch_size").get<int64_t>();
        ec.learning_rate = e.at("learning_rate").get<double>();
        ec.clean_fraction = e.at("clean_fraction").get<double>();
        ec.seed = ctx.seed;

        metrics["acc_initial"] = accuracy(model, split.test);
        if (spec) {
            metrics["asr_initial"] = attack_success(model, split.test, *spec);
        }
        auto result = eliminate(model, clean, ec, &split.test,
                                spec ? &*spec : nullptr);
        save_classifier_checkpoint(path, result.model,
                                   make_provenance(ctx, "eliminate"),
                                   spec ? &*spec : nullptr);
        metrics["acc"] = result.epoch_acc.empty() ? accuracy(result.model, split.test)
                                                  : result.epoch_acc.back();
        if (spec && !result.epoch_asr.empty()) {
            metrics["asr"] = result.epoch_asr.back();
        }
        metrics["epoch_acc"] = result.epoch_acc;
        metrics["epoch_asr"] = result.epoch_asr;
        metrics["reference_hash_constant"] =
            result.reference_hash_before == result.reference_hash_after;
        metrics["clean_samples"] = clean.size();
    }
    write_report(ctx, "eliminate", metrics, {path}, cached);
    return 0;
}

int cmd_evaluate(const CommandContext& ctx) {
    const auto model_path = require_model_path(ctx);
    auto model = load_classifier_checkpoint(model_path);
    auto spec = load_trigger_spec(model_path);
    auto split = load_split(ctx);

    json metrics{{"acc", accuracy(model, split.test)}};
    if (spec) {
        metrics["asr"] = {
            {to_string(spec->family), attack_success(model, split.test, *spec)}};
    }
    if (!ctx.opt.detector_path.empty()) {
        auto loaded = load_vae_checkpoint(ctx.opt.detector_path);
        if (loaded.tau < 0) {
            throw std::runtime_error(
                "evaluate: detector checkpoint is uncalibrated");
        }
        DetectorState detector{loaded.state, &model, loaded.confidence_p,
                               loaded.tau};
        auto benign = detect_batch(detector, split.test.images);
        auto benign_scores = scores_for_auroc(detector, split.test.images);
        const double flag_rate =
            ((benign.label0 != benign.label1) & (benign.dis > loaded.tau))
                .to(torch::kFloat64)
                .mean()
                .item<double>();
        metrics["benign_flag_rate"] = flag_rate;
        if (spec) {
            auto keep =
                torch::nonzero(split.test.labels != spec->target_label)
                    .squeeze(1);
            auto triggered = apply_trigger_images(
                split.test.images.index_select(0, keep), *spec);
            auto trigger_scores = scores_for_auroc(detector, triggered);
            std::vector<double> sb(benign_scores.data_ptr<double>(),
                                   benign_scores.data_ptr<double>() +
                                       benign_scores.numel());
            std::vector<double> st(trigger_scores.data_ptr<double>(),
                                   trigger_scores.data_ptr<double>() +
                                       trigger_scores.numel());
            metrics["auroc"] = {{to_string(spec->family), auroc(sb, st)}};
        }
    }
    write_report(ctx, "evaluate", metrics, {}, false);
    return 0;
}

int cmd_dropout_study(const CommandContext& ctx) {
    const auto model_path = require_model_path(ctx);
    auto model = load_classifier_checkpoint(model_path);
    auto spec = load_trigger_spec(model_path);
    if (!spec) {
        throw std::runtime_error(
            "dropout-study: --model must be a backdoored checkpoint (no "
            "trigger recorded in its manifest)");
    }
    auto split = load_split(ctx);
    std::vector<double> ratios, accs, asrs;
    for (const auto& r : ctx.cfg.at("dropout").at("ratios")) {
        const double ratio = r.get<double>();
        auto [acc, asr] =
            feature_dropout_eval(model, ratio, split.test, ctx.seed, &*spec);
        ratios.push_back(ratio);
        accs.push_back(acc);
        asrs.push_back(asr);
    }
    write_report(ctx, "dropout-study",
                 {{"ratios", ratios}, {"acc", accs}, {"asr", asrs}}, {},
                 false);
    return 0;
}

int cmd_consistency_study(const CommandContext& ctx) {
    const auto model_path = require_model_path(ctx);
    auto model = load_classifier_checkpoint(model_path);
    auto spec_a = load_trigger_spec(model_path);
    if (!spec_a) {
        throw std::runtime_error(
            "consistency-study: --model must be a backdoored checkpoint");
    }
    const auto probe =
        ctx.cfg.at("consistency").at("probe_family").get<std::string>();
    if (trigger_family_from_string(probe) == TriggerFamily::advdoor) {
        throw std::runtime_error(
            "consistency-study: advdoor probes need a crafted perturbation; "
            "probe with another family");
    }
    auto spec_b = trigger_from_config(ctx, probe);
    spec_b.target_label = spec_a->target_label;
    auto split = load_split(ctx);

    auto report = consistency_study(model, *spec_a, spec_b, split.test);
    const std::string stem = "consistency-" + model_stem(model_path) + "-vs-" +
                             probe;
    std::vector<std::string> figs;
    const std::pair<const char*, torch::Tensor> grids[] = {
        {"benign", report.grid_benign},
        {"own", report.grid_own},
        {"cross", report.grid_cross}};
    for (const auto& [tag, grid] : grids) {
        const auto fig =
            (ctx.figs_dir / (stem + "-" + tag + ".pgm")).string();
        write_pgm(fig, grayscale_render(grid));
        figs.push_back(fig);
    }
    write_report(ctx, "consistency-study",
                 {{"own_family", to_string(spec_a->family)},
                  {"probe_family", probe},
                  {"own_asr", report.own_asr},
                  {"cross_asr", report.cross_asr},
                  {"l1_benign_own", report.l1_benign_own},
                  {"l1_benign_cross", report.l1_benign_cross}},
                 figs, false);
    return 0;
}

int cmd_report(const CommandContext& ctx) {
    std::vector<json> entries;
    std::string common_hash;
    for (const auto& entry : fs::directory_iterator(ctx.reports_dir)) {
        if (!entry.is_regular_file() ||
            entry.path().extension() != ".json") {
            continue;
        }
        json r;
        try {
            r = load_json_file(entry.path().string());
        } catch (const std::exception&) {
            continue; // not a report
        }
        if (!r.contains("command") || !r.contains("config_hash") ||
            r.at("command") == "report") {
            continue;
        }
        const auto h = r.at("config_hash").get<std::string>();
        if (common_hash.empty()) {
            common_hash = h;
        } else if (h != common_hash) {
            throw std::runtime_error(
                "report: refusing to aggregate mismatched config hashes (" +
                common_hash.substr(0, 8) + " vs " + h.substr(0, 8) + ")");
        }
        entries.push_back(std::move(r));
    }
    if (entries.empty()) {
        throw std::runtime_error("report: no reports under " +
                                 ctx.reports_dir.string());
    }
    std::sort(entries.begin(), entries.end(), [](const json& a, const json& b) {
        return a.at("timestamp").get<std::string>() <
               b.at("timestamp").get<std::string>();
    });
    json by_command = json::object();
    for (const auto& r : entries) {
        const auto cmd = r.at("command").get<std::string>();
        by_command[cmd].push_back({{"seed", r.at("seed")},
                                   {"timestamp", r.at("timestamp")},
                                   {"metrics", r.at("metrics")},
                                   {"cached", r.value("cached", false)}});
    }
    write_report(ctx, "report",
                 {{"aggregated", int64_t(entries.size())},
                  {"by_command", by_command}},
                 {}, false);
    return 0;
}

} // namespace

json default_pipeline_config() {
    return json{
        {"dataset",
         {{"name", "synth10"},
          {"image_size", 32},
          {"data_dir", "data"},
          {"train_count", 0},
          {"test_count", 0}}},
        {"model",
         {{"pointcut", "stage3"},
          {"feature_gain", 20.0},
          {"epochs", 30},
          {"batch_size", 64},
          {"learning_rate", 2e-3},
          {"weight_decay", 0.01},
          {"optimizer", "adamw"},
          {"cosine_schedule", true}}},
        {"trigger",
         {{"family", "badnets"},
          {"target_label", 0},
          {"poison_ratio", 0.10},
          {"blend_lambda", 0.2},
          {"jitter_low", 0.7},
          {"jitter_high", 1.3},
          {"max_rotation_deg", 10.0},
          {"max_translation", 0.10},
          {"epsilon", 8.0 / 255.0},
          {"advdoor_steps", 40},
          {"warp_grid_size", 4},
          {"warp_strength", 6.0}}},
        {"vae",
         {{"alpha", 0.5},
          {"epochs", 80},
          {"batch_size", 64},
          {"learning_rate", 5e-3},
          {"train_fraction", 0.15},
          {"test_fraction", 0.05}}},
        {"detection", {{"confidence_p", 0.95}}},
        {"elimination",
         {{"beta", 35.0},
          {"epochs", 15},
          {"batch_size", 64},
          {"learning_rate", 2e-4},
          {"clean_fraction", 0.15}}},
        {"consistency", {{"probe_family", "blend"}}},
        {"dropout", {{"ratios", json::array({0.0, 0.3, 0.5, 0.7, 0.9})}}},
        {"seed", 0},
        {"output_dir", "out"},
    };
}

json effective_config(const CliOptions& options) {
    json cfg = default_pipeline_config();
    if (!options.config_path.empty()) {
        const json user = load_json_file(options.config_path);
        if (!user.is_object()) {
            throw std::runtime_error("config: top level must be a JSON object");
        }
        std::vector<std::string> unknown;
        merge_into(cfg, user, "", unknown);
        if (!unknown.empty()) {
            std::string msg = "config: unknown field(s):";
            for (const auto& u : unknown) msg += " " + u;
            throw std::runtime_error(msg);
        }
    }
    if (options.seed >= 0) {
        cfg["seed"] = options.seed;
    }
    if (!options.output_dir.empty()) {
        cfg["output_dir"] = options.output_dir;
    }
    const auto violations = validate_fields(cfg, config_schema());
    if (!violations.empty()) {
        std::string msg = "config: schema violation(s):";
        for (const auto& v : violations) msg += "\n  " + v;
        throw std::runtime_error(msg);
    }
    return cfg;
}

std::string pipeline_config_hash(json effective) {
    effective.erase("seed");
    return config_hash(effective);
}

int run_command(const CliOptions& options) {
    try {
        if (std::find(kCliCommands.begin(), kCliCommands.end(),
                      options.command) == kCliCommands.end()) {
            throw std::runtime_error("unknown command '" + options.command +
                                     "'");
        }
        const auto ctx = make_context(options);
        if (options.command == "train-clean") return cmd_train_clean(ctx);
        if (options.command == "train-backdoor") return cmd_train_backdoor(ctx);
        if (options.command == "train-vae") return cmd_train_vae(ctx);
        if (options.command == "calibrate") return cmd_calibrate(ctx);
        if (options.command == "detect") return cmd_detect(ctx);
        if (options.command == "eliminate") return cmd_eliminate(ctx);
        if (options.command == "evaluate") return cmd_evaluate(ctx);
        if (options.command == "dropout-study") return cmd_dropout_study(ctx);
        if (options.command == "consistency-study")
            return cmd_consistency_study(ctx);
        return cmd_report(ctx);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace bdt
