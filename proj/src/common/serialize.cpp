#include "bdt/common/serialize.hpp"

#include <torch/serialize.h>

#include <filesystem>

namespace bdt {

namespace {

std::string manifest_path(const std::string& path) { return path + ".json"; }

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error(std::string("missing checkpoint ") + what +
                                 ": " + path);
    }
}

} // namespace

json trigger_to_json(const TriggerSpec& spec) {
    return json{{"family", to_string(spec.family)},
                {"target_label", spec.target_label},
                {"poison_ratio", spec.poison_ratio},
                {"seed", spec.seed},
                {"params",
                 {{"blend_lambda", spec.params.blend_lambda},
                  {"jitter_low", spec.params.jitter_low},
                  {"jitter_high", spec.params.jitter_high},
                  {"max_rotation_deg", spec.params.max_rotation_deg},
                  {"max_translation", spec.params.max_translation},
                  {"epsilon", spec.params.epsilon},
                  {"warp_grid_size", spec.params.warp_grid_size},
                  {"warp_strength", spec.params.warp_strength}}}};
}

TriggerSpec trigger_from_json(const json& j) {
    TriggerSpec spec;
    spec.family = trigger_family_from_string(j.at("family").get<std::string>());
    spec.target_label = j.at("target_label").get<int64_t>();
    spec.poison_ratio = j.at("poison_ratio").get<double>();
    spec.seed = j.at("seed").get<int64_t>();
    const auto& p = j.at("params");
    spec.params.blend_lambda = p.at("blend_lambda").get<double>();
    spec.params.jitter_low = p.at("jitter_low").get<double>();
    spec.params.jitter_high = p.at("jitter_high").get<double>();
    spec.params.max_rotation_deg = p.at("max_rotation_deg").get<double>();
    spec.params.max_translation = p.at("max_translation").get<double>();
    spec.params.epsilon = p.at("epsilon").get<double>();
    spec.params.warp_grid_size = p.at("warp_grid_size").get<int64_t>();
    spec.params.warp_strength = p.at("warp_strength").get<double>();
    return spec;
}

void save_classifier_checkpoint(const std::string& path,
                                const PointcutModel& model, json provenance,
                                const TriggerSpec* trigger) {
    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive weights;
    model.net()->save(weights);
    archive.write("weights", weights);
    if (trigger != nullptr && trigger->params.perturbation.defined()) {
        archive.write("trigger_perturbation", trigger->params.perturbation);
    }
    archive.save_to(path);

    json manifest{
        {"kind", "classifier"},
        {"num_classes", model.net()->head->options.out_features()},
        {"feature_gain", model.net()->gain.item<double>()},
        {"pointcut", model.pointcut_id()},
        {"input_size", model.input_size()},
        {"weights_sha256", weights_sha256(*model.net())},
        {"provenance", std::move(provenance)},
    };
    if (trigger != nullptr) {
        manifest["trigger"] = trigger_to_json(*trigger);
    }
    save_json_file(manifest_path(path), manifest);
}

PointcutModel load_classifier_checkpoint(const std::string& path) {
    require_file(path, "weights");
    const json manifest = read_manifest(path);
    if (manifest.value("kind", "") != "classifier") {
        throw std::runtime_error("load_classifier_checkpoint: " + path +
                                 " is not a classifier checkpoint");
    }
    DeskClassifier net(manifest.at("num_classes").get<int64_t>(),
                       manifest.at("feature_gain").get<double>());
    torch::serialize::InputArchive archive;
    archive.load_from(path);
    torch::serialize::InputArchive weights;
    archive.read("weights", weights);
    net->load(weights);
    net->eval();

    const auto expected = manifest.at("weights_sha256").get<std::string>();
    const auto actual = weights_sha256(*net);
    if (actual != expected) {
        throw std::runtime_error(
            "load_classifier_checkpoint: weights hash mismatch for " + path);
    }
    return split_model(net, manifest.at("pointcut").get<std::string>(),
                       manifest.at("input_size").get<int64_t>());
}

std::optional<TriggerSpec> load_trigger_spec(const std::string& path) {
    const json manifest = read_manifest(path);
    if (!manifest.contains("trigger")) {
        return std::nullopt;
    }
    auto spec = trigger_from_json(manifest.at("trigger"));
    if (spec.family == TriggerFamily::advdoor) {
        torch::serialize::InputArchive archive;
        archive.load_from(path);
        torch::Tensor delta;
        archive.read("trigger_perturbation", delta);
        spec.params.perturbation = delta;
    }
    return spec;
}

void save_vae_checkpoint(const std::string& path, const VaeState& state,
                         json provenance, double tau, double confidence_p) {
    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive weights;
    state.vae->save(weights);
    archive.write("weights", weights);
    archive.save_to(path);

    const json manifest{
        {"kind", "vae"},
        {"grid_h", state.grid_h},
        {"grid_w", state.grid_w},
        {"latent_dim", state.latent_dim},
        {"alpha", state.alpha},
        {"tau", tau},
        {"confidence_p", confidence_p},
        {"weights_sha256", weights_sha256(*state.vae)},
        {"provenance", std::move(provenance)},
    };
    save_json_file(manifest_path(path), manifest);
}

LoadedVae load_vae_checkpoint(const std::string& path) {
    require_file(path, "weights");
    const json manifest = read_manifest(path);
    if (manifest.value("kind", "") != "vae") {
        throw std::runtime_error("load_vae_checkpoint: " + path +
                                 " is not a VAE checkpoint");
    }
    LoadedVae loaded;
    loaded.state = build_vae(manifest.at("grid_h").get<int64_t>(),
                             manifest.at("grid_w").get<int64_t>(),
                             manifest.at("latent_dim").get<int64_t>(),
                             manifest.at("alpha").get<double>());
    torch::serialize::InputArchive archive;
    archive.load_from(path);
    torch::serialize::InputArchive weights;
    archive.read("weights", weights);
    loaded.state.vae->load(weights);
    loaded.state.vae->eval();

    const auto expected = manifest.at("weights_sha256").get<std::string>();
    if (weights_sha256(*loaded.state.vae) != expected) {
        throw std::runtime_error("load_vae_checkpoint: weights hash mismatch for " +
                                 path);
    }
    loaded.tau = manifest.at("tau").get<double>();
    loaded.confidence_p = manifest.at("confidence_p").get<double>();
    return loaded;
}

json read_manifest(const std::string& path) {
    require_file(manifest_path(path), "manifest");
    return load_json_file(manifest_path(path));
}

} // namespace bdt
