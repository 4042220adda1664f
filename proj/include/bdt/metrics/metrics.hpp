#pragma once

#include "bdt/data/dataset.hpp"
#include "bdt/model/pointcut.hpp"
#include "bdt/triggers/triggers.hpp"

#include <string>
#include <vector>

namespace bdt {

// Top-1 accuracy on benign samples; exact count ratio.
double accuracy(const PointcutModel& model, const Dataset& test,
                int64_t batch_size = 256);

// Fraction of triggered samples predicted as the target label, computed over
// test samples whose true label differs from the target.
double attack_success(const PointcutModel& model, const Dataset& test,
                      const TriggerSpec& spec, int64_t batch_size = 256);

// Rank-based AUROC with tie correction: the probability that a random
// backdoor score exceeds a random benign score, ties counting one half.
double auroc(const std::vector<double>& scores_benign,
             const std::vector<double>& scores_backdoor);

// Cross-trigger activation study: probe a model backdoored with spec_a using
// spec_b triggers. Grids are the first probe sample's feature maps; the L1
// statistics average per-sample mean absolute grid differences over the probe
// set.
struct ConsistencyReport {
    double own_asr = 0;
    double cross_asr = 0;
    double l1_benign_own = 0;   // |grid(x) - grid(x^own)|
    double l1_benign_cross = 0; // |grid(x) - grid(x^cross)|
    torch::Tensor grid_benign;  // (1,H,W)
    torch::Tensor grid_own;
    torch::Tensor grid_cross;
};

ConsistencyReport consistency_study(const PointcutModel& model_a,
                                    const TriggerSpec& spec_a,
                                    const TriggerSpec& spec_b,
                                    const Dataset& test,
                                    int64_t probe_count = 100);

// Min-max scales a single-channel grid to [0,1] for grayscale rendering.
torch::Tensor grayscale_render(const torch::Tensor& grid);

} // namespace bdt
