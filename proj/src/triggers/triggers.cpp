#include "bdt/triggers/triggers.hpp"

#include <cmath>
#include <stdexcept>

namespace F = torch::nn::functional;

namespace bdt {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_params(const TriggerSpec& spec, int64_t image_size) {
    switch (spec.family) {
        case TriggerFamily::badnets:
            TORCH_CHECK(image_size >= 3,
                        "apply_trigger: badnets patch exceeds image bounds");
            break;
        case TriggerFamily::blend:
            TORCH_CHECK(spec.params.blend_lambda >= 0 &&
                            spec.params.blend_lambda < 1,
                        "apply_trigger: blend lambda must lie in [0,1)");
            break;
        case TriggerFamily::advdoor:
            TORCH_CHECK(spec.params.epsilon >= 0,
                        "apply_trigger: advdoor epsilon must be >= 0");
            break;
        case TriggerFamily::wanet:
            TORCH_CHECK(spec.params.warp_grid_size >= 2 &&
                            spec.params.warp_grid_size <= image_size,
                        "apply_trigger: warp grid larger than image");
            break;
        case TriggerFamily::physical:
            TORCH_CHECK(spec.params.jitter_low > 0 &&
                            spec.params.jitter_high >= spec.params.jitter_low,
                        "apply_trigger: bad physical jitter range");
            break;
    }
}

torch::Tensor apply_physical(const torch::Tensor& images,
                             const TriggerSpec& spec) {
    const int64_t n = images.size(0);
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(spec.seed));
    const auto& p = spec.params;
    const double span = p.jitter_high - p.jitter_low;

    auto brightness =
        (torch::rand({n, 1, 1, 1}, gen) * span + p.jitter_low);
    auto contrast = (torch::rand({n, 1, 1, 1}, gen) * span + p.jitter_low);
    auto angles = (torch::rand({n}, gen) * 2 - 1) * p.max_rotation_deg *
                  (kPi / 180.0);
    auto shifts = (torch::rand({n, 2}, gen) * 2 - 1) * p.max_translation;

    auto mean = images.mean({2, 3}, /*keepdim=*/true);
    auto jittered = ((images - mean) * contrast + mean) * brightness;

    // Rotation + translation as one affine grid per sample.
    auto cos = angles.cos();
    auto sin = angles.sin();
    auto theta = torch::zeros({n, 2, 3});
    theta.select(1, 0).select(1, 0).copy_(cos);
    theta.select(1, 0).select(1, 1).copy_(-sin);
    theta.select(1, 0).select(1, 2).copy_(shifts.select(1, 0) * 2);
    theta.select(1, 1).select(1, 0).copy_(sin);
    theta.select(1, 1).select(1, 1).copy_(cos);
    theta.select(1, 1).select(1, 2).copy_(shifts.select(1, 1) * 2);

    auto grid = F::affine_grid(theta, images.sizes().vec(),
                               /*align_corners=*/false);
    auto warped = F::grid_sample(
        jittered, grid,
        F::GridSampleFuncOptions()
            .mode(torch::kBilinear)
            .padding_mode(torch::kReflection)
            .align_corners(false));
    return warped.clamp(0, 1);
}

} // namespace

TriggerFamily trigger_family_from_string(const std::string& s) {
    if (s == "badnets") return TriggerFamily::badnets;
    if (s == "blend") return TriggerFamily::blend;
    if (s == "physical") return TriggerFamily::physical;
    if (s == "advdoor") return TriggerFamily::advdoor;
    if (s == "wanet") return TriggerFamily::wanet;
    throw std::runtime_error("unknown trigger family '" + s + "'");
}

std::string to_string(TriggerFamily family) {
    switch (family) {
        case TriggerFamily::badnets: return "badnets";
        case TriggerFamily::blend: return "blend";
        case TriggerFamily::physical: return "physical";
        case TriggerFamily::advdoor: return "advdoor";
        case TriggerFamily::wanet: return "wanet";
    }
    return "unknown";
}

torch::Tensor badnets_patch() {
    // Per-channel-distinct 3x3 pattern; high-contrast in every channel so the
    // patch stays salient regardless of the underlying image colors.
    auto r = torch::tensor({{1.f, 0.f, 1.f}, {0.f, 1.f, 0.f}, {1.f, 0.f, 1.f}});
    auto g = torch::tensor({{0.f, 1.f, 0.f}, {1.f, 0.f, 1.f}, {0.f, 1.f, 0.f}});
    auto b = torch::tensor({{1.f, 1.f, 0.f}, {0.f, 0.f, 1.f}, {1.f, 0.f, 0.f}});
    return torch::stack({r, g, b});
}

torch::Tensor blend_noise_image(int64_t seed, int64_t image_size) {
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(seed));
    return (0.5 + 0.25 * torch::randn({3, image_size, image_size}, gen))
        .clamp(0, 1);
}

torch::Tensor wanet_warp_grid(int64_t seed, int64_t image_size,
                              int64_t grid_size, double strength) {
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(seed));
    auto offsets = torch::rand({1, 2, grid_size, grid_size}, gen) * 2 - 1;
    offsets = offsets / offsets.abs().mean();
    auto field = F::interpolate(offsets,
                                F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{image_size,
                                                               image_size})
                                    .mode(torch::kBicubic)
                                    .align_corners(true))
                     .permute({0, 2, 3, 1});
    auto lin = torch::linspace(-1, 1, image_size);
    auto mesh = torch::meshgrid({lin, lin}, "ij");
    auto identity = torch::stack({mesh[1], mesh[0]}, 2).unsqueeze(0);
    return (identity + strength * field / double(image_size)).clamp(-1, 1);
}

torch::Tensor apply_trigger_images(const torch::Tensor& images,
                                   const TriggerSpec& spec) {
    TORCH_CHECK(images.dim() == 4 && images.size(1) == 3,
                "apply_trigger: expected (N,3,H,W) images");
    const int64_t size = images.size(2);
    check_params(spec, size);

    switch (spec.family) {
        case TriggerFamily::badnets: {
            auto out = images.clone();
            out.index_put_({torch::indexing::Slice(), torch::indexing::Slice(),
                            torch::indexing::Slice(size - 3, size),
                            torch::indexing::Slice(size - 3, size)},
                           badnets_patch());
            return out;
        }
        case TriggerFamily::blend: {
            const double lam = spec.params.blend_lambda;
            auto noise = blend_noise_image(spec.seed, size);
            return ((1 - lam) * images + lam * noise).clamp(0, 1);
        }
        case TriggerFamily::physical:
            return apply_physical(images, spec);
        case TriggerFamily::advdoor: {
            TORCH_CHECK(spec.params.perturbation.defined(),
                        "apply_trigger: advdoor requires a precomputed "
                        "perturbation (make_advdoor_trigger)");
            TORCH_CHECK(
                spec.params.perturbation.abs().max().item<double>() <=
                    spec.params.epsilon + 1e-6,
                "apply_trigger: perturbation violates the epsilon bound");
            return (images + spec.params.perturbation.unsqueeze(0)).clamp(0, 1);
        }
        case TriggerFamily::wanet: {
            auto grid = wanet_warp_grid(spec.seed, size,
                                        spec.params.warp_grid_size,
                                        spec.params.warp_strength);
            auto warped = F::grid_sample(
                images, grid.expand({images.size(0), -1, -1, -1}),
                F::GridSampleFuncOptions()
                    .mode(torch::kBilinear)
                    .padding_mode(torch::kReflection)
                    .align_corners(true));
            return warped.clamp(0, 1);
        }
    }
    throw std::runtime_error("apply_trigger: unreachable");
}

LabeledSample apply_trigger(const LabeledSample& sample,
                            const TriggerSpec& spec) {
    auto out = apply_trigger_images(sample.image.unsqueeze(0), spec);
    return {out.squeeze(0), spec.target_label};
}

PoisonedDataset poison_dataset(const DatasetSplit& split,
                               const TriggerSpec& spec) {
    const int64_t n = split.train.size();
    TORCH_CHECK(n > 0, "poison_dataset: empty split");
    const int64_t count = int64_t(spec.poison_ratio * double(n));
    TORCH_CHECK(count >= 1, "poison_dataset: poison_ratio yields zero samples");

    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(spec.seed));
    auto indices = torch::randperm(n, gen, torch::kInt64).narrow(0, 0, count);

    PoisonedDataset out;
    out.samples = {split.train.images.clone(), split.train.labels.clone(),
                   split.train.num_classes};
    out.poison_flags = torch::zeros({n}, torch::kBool);
    out.poisoned_indices = indices;
    out.spec = spec;

    auto triggered =
        apply_trigger_images(out.samples.images.index_select(0, indices), spec);
    out.samples.images.index_copy_(0, indices, triggered);
    out.samples.labels.index_fill_(0, indices, spec.target_label);
    out.poison_flags.index_fill_(0, indices, true);
    return out;
}

} // namespace bdt
