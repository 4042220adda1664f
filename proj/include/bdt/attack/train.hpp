#pragma once

#include "bdt/data/dataset.hpp"
#include "bdt/model/pointcut.hpp"
#include "bdt/triggers/triggers.hpp"

#include <functional>
#include <optional>
#include <string>

namespace bdt {

struct TrainConfig {
    int64_t epochs = 30;
    int64_t batch_size = 64;
    double learning_rate = 2e-3;
    double weight_decay = 0.01;
    std::string optimizer_id = "adamw";
    bool cosine_schedule = true;
    int64_t seed = 0;
    int64_t image_size = 32;
    double feature_gain = 20.0;
};

struct TrainResult {
    PointcutModel model;
    std::vector<double> epoch_losses; // running mean per epoch
    bool loss_warning = false;        // smoothed loss increased epoch-to-epoch
};

// Standard supervised training (clean or poisoned data both arrive as a
// Dataset); AdamW + optional cosine-annealed learning rate, per-sample
// flip augmentation. Deterministic for a fixed config.
TrainResult train_classifier(const Dataset& data, const TrainConfig& config);

// Picks the AdvDoor trigger: a universal targeted perturbation delta with
// ||delta||_inf <= epsilon maximizing mean target-class log-probability over
// a seeded sample batch via iterative sign-gradient ascent.
torch::Tensor make_advdoor_trigger(const PointcutModel& clean_model,
                                   const DatasetSplit& split,
                                   int64_t target_label, double epsilon,
                                   int64_t steps, int64_t seed);

} // namespace bdt
