#pragma once

#include "bdt/data/dataset.hpp"

#include <optional>
#include <string>

namespace bdt {

enum class TriggerFamily { badnets, blend, physical, advdoor, wanet };

TriggerFamily trigger_family_from_string(const std::string& s);
std::string to_string(TriggerFamily family);

// Family-specific parameters; unused fields are ignored by other families.
struct TriggerParams {
    // blend
    double blend_lambda = 0.15;
    // physical
    double jitter_low = 0.7;
    double jitter_high = 1.3;
    double max_rotation_deg = 10.0;
    double max_translation = 0.10;
    // advdoor
    double epsilon = 8.0 / 255.0;
    torch::Tensor perturbation; // precomputed delta, (3,H,W), |delta| <= epsilon
    // wanet
    int64_t warp_grid_size = 4; // k
    double warp_strength = 0.5; // s
};

struct TriggerSpec {
    TriggerFamily family = TriggerFamily::badnets;
    int64_t target_label = 0;
    double poison_ratio = 0.10;
    TriggerParams params;
    int64_t seed = 0;
};

struct PoisonedDataset {
    Dataset samples;
    torch::Tensor poison_flags;    // (N) bool
    torch::Tensor poisoned_indices; // manifest: indices into the source train set
    TriggerSpec spec;
};

// Applies the trigger to a batch of images (N,3,H,W) without touching labels;
// the labeled-sample overload also rewrites the label to target_label.
torch::Tensor apply_trigger_images(const torch::Tensor& images,
                                   const TriggerSpec& spec);
LabeledSample apply_trigger(const LabeledSample& sample, const TriggerSpec& spec);

// Poisons floor(poison_ratio * N) seeded-chosen train samples in place of the
// originals; the manifest records which indices were replaced.
PoisonedDataset poison_dataset(const DatasetSplit& split, const TriggerSpec& spec);

// The fixed 3x3 badnets patch (3 channels, per-channel binary pattern).
torch::Tensor badnets_patch();

// Seeded Gaussian-noise blend image for a given size, clamped to [0,1].
torch::Tensor blend_noise_image(int64_t seed, int64_t image_size);

// WaNet warping field: k x k random offsets, normalized by their mean
// magnitude, upsampled (bicubic) to the image size and added to the identity
// sampling grid with strength s. Returns a (1,H,W,2) grid_sample grid.
torch::Tensor wanet_warp_grid(int64_t seed, int64_t image_size,
                              int64_t grid_size, double strength);

} // namespace bdt
