#pragma once

#include "bdt/model/pointcut.hpp"
#include "bdt/vae/vae.hpp"

namespace bdt {

enum class Verdict { benign, backdoor };

struct Detection {
    int64_t label0 = 0; // M2 on the raw middle features
    int64_t label1 = 0; // M2 on the VAE-reconstructed features
    double dis = 0;     // max|res| - min|res|
    Verdict verdict = Verdict::benign;
};

// Calibrated detector: immutable after calibrate(); detect() is reentrant.
struct DetectorState {
    VaeState vae;
    const PointcutModel* model = nullptr; // gray-box handle (labels + features only)
    double confidence_p = 0.95;
    double tau = -1; // uncalibrated until >= 0
    bool calibrated() const { return tau >= 0; }
};

// dis = max(|res|) - min(|res|) with res = grid - VAE(grid); the VAE runs
// with the reparameterization noise forced to zero so verdicts reproduce.
double reconstruction_distance(VaeState& vae, const torch::Tensor& grid);

// Batched helper: distances, label0, label1 for a batch of images.
struct BatchDetection {
    torch::Tensor dis;    // (N) double
    torch::Tensor label0; // (N) int64
    torch::Tensor label1; // (N) int64
};
BatchDetection detect_batch(const DetectorState& detector,
                            const torch::Tensor& images);

// tau = the ceil(p * N2)-th smallest benign distance (order statistic, no
// interpolation), computed over the N2 held-out benign calibration samples.
DetectorState calibrate(DetectorState detector,
                        const std::vector<double>& benign_distances, double p);
DetectorState calibrate_on_images(DetectorState detector,
                                  const torch::Tensor& benign_images, double p);

Detection detect(const DetectorState& detector, const torch::Tensor& image);

// dis when the two labels disagree, else 0 (the score the ROC runs over).
double score_for_auroc(const DetectorState& detector,
                       const torch::Tensor& image);
torch::Tensor scores_for_auroc(const DetectorState& detector,
                               const torch::Tensor& images);

} // namespace bdt
