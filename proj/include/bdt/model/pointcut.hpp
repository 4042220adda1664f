#pragma once

#include "bdt/data/dataset.hpp"
#include "bdt/model/classifier.hpp"
#include "bdt/triggers/triggers.hpp"

#include <array>
#include <atomic>
#include <memory>
#include <string>

namespace bdt {

// Middle features reshaped to a single-channel grid. Channels are tiled
// row-major into a grid_rows x grid_cols arrangement of h_f x w_f cells; the
// row/col split is chosen so the grid's aspect ratio H/W comes as close to 4
// (the shape used at full scale, 256x64) as channel divisibility allows,
// preferring the flatter layout on ties.
struct GridLayout {
    int64_t grid_rows = 0; // channel tiles per column
    int64_t grid_cols = 0; // channel tiles per row
    int64_t height = 0;    // grid_rows * h_f
    int64_t width = 0;     // grid_cols * w_f
};
GridLayout choose_grid_layout(int64_t channels, int64_t h_f, int64_t w_f);

// (B,c,h,w) -> (B,1,H,W) and back; exact inverses (bit-identical round trip).
torch::Tensor reshape_to_grid(const torch::Tensor& features,
                              const GridLayout& layout);
torch::Tensor dereshape_from_grid(const torch::Tensor& grid, int64_t channels,
                                  int64_t h_f, int64_t w_f,
                                  const GridLayout& layout);

struct FeatureMap {
    torch::Tensor grid; // (B,1,H,W)
    std::array<int64_t, 3> source_shape{}; // (c, h_f, w_f)
    GridLayout layout;
};

// A classifier split at a named boundary into front (M1) and rear (M2).
// M1 invocations are counted so the single-inference property of detection
// is checkable; the count is diagnostic, not part of the model function.
class PointcutModel {
public:
    PointcutModel(DeskClassifier net, std::string pointcut_id,
                  int64_t input_size);

    torch::Tensor m1(const torch::Tensor& images) const;
    torch::Tensor m2(const torch::Tensor& features) const;
    torch::Tensor forward(const torch::Tensor& images) const;

    FeatureMap extract_features(const torch::Tensor& images) const;
    torch::Tensor dereshape(const torch::Tensor& grid) const;

    const std::array<int64_t, 3>& feature_shape() const {
        return feature_shape_;
    }
    const GridLayout& grid_layout() const { return layout_; }
    const std::string& pointcut_id() const { return pointcut_id_; }
    int64_t input_size() const { return input_size_; }

    int64_t m1_pass_count() const { return m1_passes_->load(); }
    void reset_m1_pass_count() const { m1_passes_->store(0); }

    DeskClassifier& net() { return net_; }
    // Module holders share ownership; a copy lets const callers run inference.
    DeskClassifier net() const { return net_; }
    void set_train(bool train) { net_->train(train); }

    // Deep copy (weights cloned; pass counter starts at zero).
    PointcutModel clone() const;

private:
    DeskClassifier net_;
    std::string pointcut_id_;
    int64_t input_size_;
    std::array<int64_t, 3> feature_shape_{};
    GridLayout layout_;
    // Shared across shallow copies of the same underlying module (module
    // holders have pointer semantics anyway); clone() starts a fresh counter.
    std::shared_ptr<std::atomic<int64_t>> m1_passes_ =
        std::make_shared<std::atomic<int64_t>>(0);
};

// Validates the boundary name and verifies M2(M1(x)) == classifier(x) on a
// probe batch at elementwise tolerance 1e-5.
PointcutModel split_model(DeskClassifier classifier,
                          const std::string& pointcut_id, int64_t input_size);

// Zeroes a seeded random fraction of middle-feature elements per sample
// before M2; reports (ACC, ASR). ASR uses `spec` when provided; otherwise
// returned ASR is -1.
std::pair<double, double> feature_dropout_eval(const PointcutModel& model,
                                               double ratio,
                                               const Dataset& eval_set,
                                               int64_t seed,
                                               const TriggerSpec* spec = nullptr);

// SHA-256 over all parameters and buffers (name-sorted, raw bytes); the
// frozen-reference immutability check compares these.
std::string weights_sha256(const torch::nn::Module& module);

} // namespace bdt
