#pragma once

#include "bdt/data/dataset.hpp"
#include "bdt/model/pointcut.hpp"
#include "bdt/triggers/triggers.hpp"

#include <string>
#include <vector>

namespace bdt {

struct EliminationConfig {
    double beta = 35.0; // trade-off weight, valid range (0, 100]
    int64_t epochs = 15;
    int64_t batch_size = 64;
    double learning_rate = 2e-4; // full-scale recipe uses 5e-5
    double clean_fraction = 0.15;
    double epsilon_norm = 1e-8;
    int64_t seed = 0;
};

// Frozen copy of the backdoored model whose M1 supplies reference features.
// The weights hash is pinned at freeze time so immutability is checkable.
struct ReferenceModel {
    PointcutModel model;
    std::string weights_hash;
};

ReferenceModel freeze_reference(const PointcutModel& model);

// Per-sample min-max normalization over the whole feature block:
// (Max(v) - v) / (Max(v) - Min(v) + epsilon_norm), elementwise in [0,1].
torch::Tensor minmax_normalize(const torch::Tensor& features,
                               double epsilon_norm = 1e-8);

// Negated mean squared difference of the normalized feature blocks; lies in
// [-1, 0] with 0 at identical features. More negative = further apart.
torch::Tensor feature_distance_loss(const torch::Tensor& m_b,
                                    const torch::Tensor& m_ref,
                                    double epsilon_norm = 1e-8);

// Cross-entropy task loss plus beta * feature_distance_loss(M1(x), M1ref(x)).
// Gradients flow only into `model`; the reference pass runs without grad.
torch::Tensor elimination_loss(const PointcutModel& model,
                               const ReferenceModel& ref,
                               const torch::Tensor& images,
                               const torch::Tensor& labels, double beta,
                               double epsilon_norm = 1e-8);

struct EliminationResult {
    PointcutModel model;
    std::vector<double> epoch_acc; // filled when an eval set is provided
    std::vector<double> epoch_asr; // filled when an eval trigger is provided
    std::string reference_hash_before;
    std::string reference_hash_after;
};

// Epoch/batch fine-tuning of the model on clean samples under the combined
// loss, pushing middle features away from the frozen reference while the task
// loss preserves benign behavior. Per-epoch ACC (and ASR when `eval_trigger`
// is given) are recorded against `eval_set`.
EliminationResult eliminate(const PointcutModel& model,
                            const Dataset& clean_samples,
                            const EliminationConfig& config,
                            const Dataset* eval_set = nullptr,
                            const TriggerSpec* eval_trigger = nullptr);

} // namespace bdt
