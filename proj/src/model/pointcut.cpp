#include "bdt/model/pointcut.hpp"

#include "bdt/common/sha256.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace bdt {

GridLayout choose_grid_layout(int64_t channels, int64_t h_f, int64_t w_f) {
    constexpr double target_aspect = 4.0;
    GridLayout best;
    double best_score = std::numeric_limits<double>::infinity();
    for (int64_t rows = 1; rows <= channels; ++rows) {
        if (channels % rows != 0) {
            continue;
        }
        const int64_t cols = channels / rows;
        const double aspect =
            double(rows * h_f) / double(cols * w_f);
        const double score = std::abs(aspect - target_aspect);
        // Strict '<' keeps the flatter (smaller-aspect) layout on ties since
        // rows are scanned in increasing order.
        if (score < best_score) {
            best_score = score;
            best = {rows, cols, rows * h_f, cols * w_f};
        }
    }
    return best;
}

torch::Tensor reshape_to_grid(const torch::Tensor& features,
                              const GridLayout& layout) {
    const int64_t b = features.size(0);
    const int64_t h = features.size(2);
    const int64_t w = features.size(3);
    return features.view({b, layout.grid_rows, layout.grid_cols, h, w})
        .permute({0, 1, 3, 2, 4})
        .reshape({b, 1, layout.height, layout.width});
}

torch::Tensor dereshape_from_grid(const torch::Tensor& grid, int64_t channels,
                                  int64_t h_f, int64_t w_f,
                                  const GridLayout& layout) {
    const int64_t b = grid.size(0);
    return grid.view({b, layout.grid_rows, h_f, layout.grid_cols, w_f})
        .permute({0, 1, 3, 2, 4})
        .reshape({b, channels, h_f, w_f});
}

PointcutModel::PointcutModel(DeskClassifier net, std::string pointcut_id,
                             int64_t input_size)
    : net_(std::move(net)),
      pointcut_id_(std::move(pointcut_id)),
      input_size_(input_size) {
    torch::NoGradGuard no_grad;
    const bool was_training = net_->is_training();
    net_->eval();
    auto probe = torch::zeros({1, 3, input_size_, input_size_},
                              net_->parameters().front().options());
    auto f = net_->front(probe);
    feature_shape_ = {f.size(1), f.size(2), f.size(3)};
    layout_ = choose_grid_layout(feature_shape_[0], feature_shape_[1],
                                 feature_shape_[2]);
    net_->train(was_training);
}

torch::Tensor PointcutModel::m1(const torch::Tensor& images) const {
    m1_passes_->fetch_add(1);
    DeskClassifier net = net_;
    return net->front(images);
}

torch::Tensor PointcutModel::m2(const torch::Tensor& features) const {
    DeskClassifier net = net_;
    return net->rear(features);
}

torch::Tensor PointcutModel::forward(const torch::Tensor& images) const {
    return m2(m1(images));
}

FeatureMap PointcutModel::extract_features(const torch::Tensor& images) const {
    torch::NoGradGuard no_grad;
    auto batched = images.dim() == 3 ? images.unsqueeze(0) : images;
    auto f = m1(batched);
    return {reshape_to_grid(f, layout_), feature_shape_, layout_};
}

torch::Tensor PointcutModel::dereshape(const torch::Tensor& grid) const {
    return dereshape_from_grid(grid, feature_shape_[0], feature_shape_[1],
                               feature_shape_[2], layout_);
}

PointcutModel PointcutModel::clone() const {
    torch::NoGradGuard no_grad;
    DeskClassifier copy(net_->head->options.out_features(),
                        net_->gain.item<double>());
    copy->to(net_->parameters().front().scalar_type());
    auto src = net_->named_parameters(true);
    auto dst = copy->named_parameters(true);
    for (const auto& item : src) {
        dst[item.key()].copy_(item.value());
    }
    auto src_buf = net_->named_buffers(true);
    auto dst_buf = copy->named_buffers(true);
    for (const auto& item : src_buf) {
        dst_buf[item.key()].copy_(item.value());
    }
    copy->train(net_->is_training());
    return PointcutModel(std::move(copy), pointcut_id_, input_size_);
}

PointcutModel split_model(DeskClassifier classifier,
                          const std::string& pointcut_id, int64_t input_size) {
    TORCH_CHECK(pointcut_id == "stage3",
                "split_model: unknown pointcut boundary '", pointcut_id,
                "' (desk classifier exposes 'stage3')");
    PointcutModel model(std::move(classifier), pointcut_id, input_size);

    // Split/compose equivalence on a probe batch.
    torch::NoGradGuard no_grad;
    const bool was_training = model.net()->is_training();
    model.net()->eval();
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(0);
    auto probe = torch::rand({64, 3, input_size, input_size}, gen);
    auto direct = model.net()->forward(probe);
    auto composed = model.m2(model.m1(probe));
    const double deviation = (direct - composed).abs().max().item<double>();
    TORCH_CHECK(deviation <= 1e-5,
                "split_model: composition deviates from the unsplit "
                "classifier by ",
                deviation);
    model.net()->train(was_training);
    model.reset_m1_pass_count();
    return model;
}

std::pair<double, double> feature_dropout_eval(const PointcutModel& model,
                                               double ratio,
                                               const Dataset& eval_set,
                                               int64_t seed,
                                               const TriggerSpec* spec) {
    TORCH_CHECK(ratio >= 0 && ratio < 1,
                "feature_dropout_eval: ratio must lie in [0,1)");
    torch::NoGradGuard no_grad;
    const bool was_training = model.net()->is_training();
    model.net()->eval();

    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(seed));
    const int64_t batch = 256;

    auto run = [&](const torch::Tensor& images) {
        std::vector<torch::Tensor> preds;
        for (int64_t i = 0; i < images.size(0); i += batch) {
            auto chunk = images.narrow(0, i, std::min(batch, images.size(0) - i));
            auto f = model.m1(chunk);
            if (ratio > 0) {
                // Standard inverted-dropout scaling keeps the expected
                // activation magnitude seen by M2 unchanged.
                auto keep = (torch::rand(f.sizes(), gen) >= ratio)
                                .to(torch::kFloat32);
                f = f * keep / (1.0 - ratio);
            }
            preds.push_back(model.m2(f).argmax(1));
        }
        return torch::cat(preds);
    };

    auto clean_pred = run(eval_set.images);
    const double acc =
        clean_pred.eq(eval_set.labels).to(torch::kFloat32).mean().item<double>();

    double asr = -1.0;
    if (spec != nullptr) {
        auto keep = eval_set.labels != spec->target_label;
        auto kept = eval_set.index(keep.nonzero().squeeze(1));
        auto triggered = apply_trigger_images(kept.images, *spec);
        auto pred = run(triggered);
        asr = pred.eq(spec->target_label).to(torch::kFloat32).mean().item<double>();
    }
    model.net()->train(was_training);
    return {acc, asr};
}

std::string weights_sha256(const torch::nn::Module& module) {
    std::map<std::string, torch::Tensor> named;
    for (const auto& item : module.named_parameters(true)) {
        named[item.key()] = item.value();
    }
    for (const auto& item : module.named_buffers(true)) {
        named[item.key()] = item.value();
    }
    Sha256 hasher;
    for (const auto& [name, tensor] : named) {
        hasher.update(name.data(), name.size());
        auto flat = tensor.detach().to(torch::kFloat64).contiguous();
        hasher.update(flat.data_ptr<double>(),
                      std::size_t(flat.numel()) * sizeof(double));
    }
    return hasher.hex_digest();
}

} // namespace bdt
