#pragma once

#include "bdt/common/json_util.hpp"
#include "bdt/model/pointcut.hpp"
#include "bdt/triggers/triggers.hpp"
#include "bdt/vae/vae.hpp"

#include <optional>
#include <string>

namespace bdt {

// Checkpoints are a libtorch archive at <path> plus a manifest at
// <path>.json. The manifest carries the architecture metadata needed to
// rebuild the module, a SHA-256 of the weights (verified on load), and
// whatever provenance the caller passes (config hash, seed, command).

json trigger_to_json(const TriggerSpec& spec);
TriggerSpec trigger_from_json(const json& j);

// `trigger`, when given, records the implanted backdoor in the manifest; an
// advdoor perturbation tensor rides along inside the archive.
void save_classifier_checkpoint(const std::string& path,
                                const PointcutModel& model, json provenance,
                                const TriggerSpec* trigger = nullptr);
PointcutModel load_classifier_checkpoint(const std::string& path);
std::optional<TriggerSpec> load_trigger_spec(const std::string& path);

// The detector rides with the VAE: tau < 0 marks an uncalibrated checkpoint.
void save_vae_checkpoint(const std::string& path, const VaeState& state,
                         json provenance, double tau = -1,
                         double confidence_p = 0.95);
struct LoadedVae {
    VaeState state;
    double tau = -1;
    double confidence_p = 0.95;
};
LoadedVae load_vae_checkpoint(const std::string& path);

// Manifest of either checkpoint kind (throws when absent).
json read_manifest(const std::string& path);

} // namespace bdt
