#include "bdt/attack/train.hpp"

#include <cmath>

namespace bdt {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TrainResult train_classifier(const Dataset& data, const TrainConfig& config) {
    TORCH_CHECK(data.size() > 0, "train_classifier: empty dataset");
    TORCH_CHECK(config.batch_size >= 1 && config.learning_rate > 0,
                "train_classifier: invalid config");
    TORCH_CHECK(config.optimizer_id == "adamw",
                "train_classifier: unsupported optimizer '",
                config.optimizer_id, "'");

    torch::manual_seed(static_cast<uint64_t>(config.seed) * 9973 + 17);
    DeskClassifier net(data.num_classes, config.feature_gain);
    torch::optim::AdamW optimizer(
        net->parameters(), torch::optim::AdamWOptions(config.learning_rate)
                               .weight_decay(config.weight_decay));
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(config.seed));

    TrainResult result{PointcutModel(net, "stage3", config.image_size), {}, false};
    net->train();
    const int64_t n = data.size();

    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.cosine_schedule) {
            const double lr = config.learning_rate * 0.5 *
                              (1.0 + std::cos(kPi * double(epoch) /
                                              double(config.epochs)));
            for (auto& group : optimizer.param_groups()) {
                static_cast<torch::optim::AdamWOptions&>(group.options())
                    .lr(lr);
            }
        }
        auto perm = torch::randperm(n, gen, torch::kInt64);
        double epoch_loss = 0;
        int64_t batches = 0;
        for (int64_t i = 0; i < n; i += config.batch_size) {
            auto idx = perm.narrow(0, i, std::min(config.batch_size, n - i));
            auto images = augment_images(data.images.index_select(0, idx), gen);
            auto labels = data.labels.index_select(0, idx);
            auto loss = torch::nn::functional::cross_entropy(
                net->forward(images), labels);
            TORCH_CHECK(torch::isfinite(loss).item<bool>(),
                        "train_classifier: loss diverged (non-finite) at "
                        "epoch ",
                        epoch);
            optimizer.zero_grad();
            loss.backward();
            optimizer.step();
            epoch_loss += loss.item<double>();
            ++batches;
        }
        result.epoch_losses.push_back(epoch_loss / double(batches));
    }
    net->eval();

    // Warn (not fail) when the 5-epoch smoothed loss ever rises.
    const auto& losses = result.epoch_losses;
    auto smooth = [&](int64_t end) {
        const int64_t lo = std::max<int64_t>(0, end - 5);
        double s = 0;
        for (int64_t i = lo; i < end; ++i) s += losses[size_t(i)];
        return s / double(end - lo);
    };
    for (int64_t e = 6; e <= int64_t(losses.size()); ++e) {
        if (smooth(e) > smooth(e - 1) + 1e-9) {
            result.loss_warning = true;
            break;
        }
    }
    result.model = split_model(net, "stage3", config.image_size);
    return result;
}

torch::Tensor make_advdoor_trigger(const PointcutModel& clean_model,
                                   const DatasetSplit& split,
                                   int64_t target_label, double epsilon,
                                   int64_t steps, int64_t seed) {
    TORCH_CHECK(epsilon >= 0, "make_advdoor_trigger: epsilon must be >= 0");
    const int64_t size = clean_model.input_size();
    if (epsilon == 0) {
        return torch::zeros({3, size, size});
    }
    const bool was_training = clean_model.net()->is_training();
    clean_model.net()->eval();

    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(seed));
    const int64_t batch = std::min<int64_t>(256, split.train.size());
    auto idx = torch::randperm(split.train.size(), gen, torch::kInt64)
                   .narrow(0, 0, batch);
    auto images = split.train.images.index_select(0, idx);
    auto target = torch::full({batch}, target_label, torch::kInt64);

    auto delta = torch::zeros({1, 3, size, size}, torch::requires_grad());
    const double step_size = 2.5 * epsilon / double(steps);
    for (int64_t it = 0; it < steps; ++it) {
        auto logits = clean_model.net()->forward((images + delta).clamp(0, 1));
        auto loss = torch::nn::functional::cross_entropy(logits, target);
        loss.backward();
        {
            torch::NoGradGuard no_grad;
            delta -= step_size * delta.grad().sign();
            delta.clamp_(-epsilon, epsilon);
            delta.grad().zero_();
        }
    }
    clean_model.net()->train(was_training);
    return delta.detach().squeeze(0);
}

} // namespace bdt
