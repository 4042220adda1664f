#include "bdt/bid/detector.hpp"

#include <algorithm>
#include <cmath>

namespace bdt {

namespace {

// One M1 pass, two M2 passes; labels from raw and reconstructed features.
BatchDetection run_detection(const DetectorState& detector,
                             const torch::Tensor& images) {
    TORCH_CHECK(detector.model != nullptr, "detect: no model attached");
    torch::NoGradGuard no_grad;
    auto& model = *detector.model;
    auto& vae = const_cast<DetectorState&>(detector).vae;

    auto batched = images.dim() == 3 ? images.unsqueeze(0) : images;
    auto feature_map = model.extract_features(batched); // single M1 pass
    auto grid = feature_map.grid;

    auto [mu, ln_sigma] = vae.vae->encode(grid);
    auto recon = vae.vae->decode(mu); // eps = 0 => z = mu exactly
    (void)ln_sigma;

    auto res = (grid - recon).abs().flatten(1);
    auto dis = (std::get<0>(res.max(1)) - std::get<0>(res.min(1)))
                   .to(torch::kFloat64);

    auto label0 = model.m2(model.dereshape(grid)).argmax(1);
    auto label1 = model.m2(model.dereshape(recon)).argmax(1);
    return {dis, label0, label1};
}

} // namespace

double reconstruction_distance(VaeState& vae, const torch::Tensor& grid) {
    torch::NoGradGuard no_grad;
    auto batched = grid.dim() == 3 ? grid.unsqueeze(0) : grid;
    TORCH_CHECK(batched.size(2) == vae.grid_h && batched.size(3) == vae.grid_w,
                "reconstruction_distance: grid shape mismatch");
    auto [mu, ln_sigma] = vae.vae->encode(batched);
    auto recon = vae.vae->decode(mu);
    (void)ln_sigma;
    auto res = (batched - recon).abs().flatten(1);
    return (std::get<0>(res.max(1)) - std::get<0>(res.min(1)))
        .item<double>();
}

BatchDetection detect_batch(const DetectorState& detector,
                            const torch::Tensor& images) {
    return run_detection(detector, images);
}

DetectorState calibrate(DetectorState detector,
                        const std::vector<double>& benign_distances,
                        double p) {
    TORCH_CHECK(benign_distances.size() >= 50,
                "calibrate: need at least 50 benign samples, got ",
                benign_distances.size());
    TORCH_CHECK(p > 0 && p < 1, "calibrate: p must lie in (0,1)");
    auto sorted = benign_distances;
    std::sort(sorted.begin(), sorted.end());
    const auto n = int64_t(sorted.size());
    const int64_t rank = int64_t(std::ceil(p * double(n))); // 1-based
    detector.tau = sorted[size_t(rank - 1)];
    detector.confidence_p = p;
    return detector;
}

DetectorState calibrate_on_images(DetectorState detector,
                                  const torch::Tensor& benign_images,
                                  double p) {
    auto batch = run_detection(detector, benign_images);
    std::vector<double> distances(size_t(batch.dis.size(0)));
    for (int64_t i = 0; i < batch.dis.size(0); ++i) {
        distances[size_t(i)] = batch.dis[i].item<double>();
    }
    return calibrate(std::move(detector), distances, p);
}

Detection detect(const DetectorState& detector, const torch::Tensor& image) {
    TORCH_CHECK(detector.calibrated(), "detect: detector is not calibrated");
    auto batch = run_detection(detector, image);
    Detection d;
    d.label0 = batch.label0[0].item<int64_t>();
    d.label1 = batch.label1[0].item<int64_t>();
    d.dis = batch.dis[0].item<double>();
    d.verdict = (d.label0 != d.label1 && d.dis > detector.tau)
                    ? Verdict::backdoor
                    : Verdict::benign;
    return d;
}

double score_for_auroc(const DetectorState& detector,
                       const torch::Tensor& image) {
    auto batch = run_detection(detector, image);
    const bool differ =
        batch.label0[0].item<int64_t>() != batch.label1[0].item<int64_t>();
    return differ ? batch.dis[0].item<double>() : 0.0;
}

torch::Tensor scores_for_auroc(const DetectorState& detector,
                               const torch::Tensor& images) {
    auto batch = run_detection(detector, images);
    return torch::where(batch.label0 != batch.label1, batch.dis,
                        torch::zeros_like(batch.dis));
}

} // namespace bdt
