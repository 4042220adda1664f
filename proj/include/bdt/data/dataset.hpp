#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace bdt {

// A batch of labeled images: images are (N,3,H,W) float32 in [0,1], labels
// are (N) int64 class indices in [0, num_classes).
struct Dataset {
    torch::Tensor images;
    torch::Tensor labels;
    int64_t num_classes = 10;

    int64_t size() const { return images.size(0); }
    Dataset index(const torch::Tensor& idx) const {
        return {images.index_select(0, idx), labels.index_select(0, idx),
                num_classes};
    }
};

struct DatasetSplit {
    Dataset train;
    Dataset test;
    double vae_train_fraction = 0.15;
    double vae_test_fraction = 0.05;
};

// Deterministic disjoint index pools drawn from one seeded shuffle of the
// clean training set: VAE-train (N_1), VAE-test / calibration (N_2), and the
// elimination subset. Keeping them disjoint is the default policy; callers
// that want the paper-ambiguous overlap can slice their own indices.
struct CleanSubsets {
    torch::Tensor vae_train;   // N_1 indices
    torch::Tensor vae_test;    // N_2 indices
    torch::Tensor elimination; // elimination-subset indices
};

CleanSubsets draw_clean_subsets(int64_t train_size, double vae_train_fraction,
                                double vae_test_fraction,
                                double elimination_fraction, int64_t seed);

// One labeled image: (3,H,W) float32 in [0,1] + class index.
struct LabeledSample {
    torch::Tensor image;
    int64_t label = 0;
};

// Horizontal flip with probability 0.33, then vertical flip with probability
// 0.33; labels untouched. Batched variant used inside training loops.
torch::Tensor augment_images(const torch::Tensor& images, torch::Generator& gen);

// Per-sample variant of the same augmentation, deterministic in `seed`.
LabeledSample augment(const LabeledSample& sample, int64_t seed);

} // namespace bdt
