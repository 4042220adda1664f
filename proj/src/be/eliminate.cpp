#include "bdt/be/eliminate.hpp"

#include "bdt/metrics/metrics.hpp"

#include <algorithm>

namespace bdt {

ReferenceModel freeze_reference(const PointcutModel& model) {
    ReferenceModel ref{model.clone(), ""};
    for (auto& p : ref.model.net()->parameters()) {
        p.set_requires_grad(false);
    }
    ref.model.net()->eval();
    ref.weights_hash = weights_sha256(*ref.model.net());
    return ref;
}

torch::Tensor minmax_normalize(const torch::Tensor& features,
                               double epsilon_norm) {
    auto flat = features.flatten(1);
    auto max = std::get<0>(flat.max(1)).unsqueeze(1);
    auto min = std::get<0>(flat.min(1)).unsqueeze(1);
    return ((max - flat) / (max - min + epsilon_norm)).view_as(features);
}

torch::Tensor feature_distance_loss(const torch::Tensor& m_b,
                                    const torch::Tensor& m_ref,
                                    double epsilon_norm) {
    TORCH_CHECK(m_b.sizes() == m_ref.sizes(),
                "feature_distance_loss: shape mismatch");
    auto diff = minmax_normalize(m_b, epsilon_norm) -
                minmax_normalize(m_ref, epsilon_norm);
    return -diff.square().mean();
}

torch::Tensor elimination_loss(const PointcutModel& model,
                               const ReferenceModel& ref,
                               const torch::Tensor& images,
                               const torch::Tensor& labels, double beta,
                               double epsilon_norm) {
    auto features = model.m1(images);
    auto logits = model.m2(features);
    torch::Tensor ref_features;
    {
        torch::NoGradGuard no_grad;
        ref_features = ref.model.m1(images);
    }
    auto task = torch::nn::functional::cross_entropy(logits, labels);
    auto dis = feature_distance_loss(features, ref_features, epsilon_norm);
    auto total = task + beta * dis;
    TORCH_CHECK(torch::isfinite(total).item<bool>(),
                "elimination_loss: non-finite loss");
    return total;
}

EliminationResult eliminate(const PointcutModel& model,
                            const Dataset& clean_samples,
                            const EliminationConfig& config,
                            const Dataset* eval_set,
                            const TriggerSpec* eval_trigger) {
    TORCH_CHECK(clean_samples.size() > 0, "eliminate: empty clean set");
    TORCH_CHECK(config.beta > 0 && config.beta <= 100,
                "eliminate: beta must lie in (0,100]");

    auto ref = freeze_reference(model);
    EliminationResult result{model.clone(), {}, {}, ref.weights_hash, ""};

    torch::optim::AdamW optimizer(
        result.model.net()->parameters(),
        torch::optim::AdamWOptions(config.learning_rate));
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(config.seed) * 7919 + 3);
    const int64_t n = clean_samples.size();

    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        result.model.set_train(true);
        auto perm = torch::randperm(n, gen, torch::kInt64);
        for (int64_t i = 0; i < n; i += config.batch_size) {
            auto idx = perm.narrow(0, i, std::min(config.batch_size, n - i));
            auto loss = elimination_loss(
                result.model, ref, clean_samples.images.index_select(0, idx),
                clean_samples.labels.index_select(0, idx), config.beta,
                config.epsilon_norm);
            optimizer.zero_grad();
            loss.backward();
            optimizer.step();
        }
        result.model.set_train(false);
        if (eval_set != nullptr) {
            result.epoch_acc.push_back(accuracy(result.model, *eval_set));
            if (eval_trigger != nullptr) {
                result.epoch_asr.push_back(
                    attack_success(result.model, *eval_set, *eval_trigger));
            }
        }
    }
    result.model.set_train(false);
    result.reference_hash_after = weights_sha256(*ref.model.net());
    return result;
}

} // namespace bdt
