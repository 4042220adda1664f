#include "bdt/metrics/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace bdt {

double accuracy(const PointcutModel& model, const Dataset& test,
                int64_t batch_size) {
    TORCH_CHECK(test.size() > 0, "accuracy: empty test set");
    torch::NoGradGuard no_grad;
    int64_t correct = 0;
    for (int64_t i = 0; i < test.size(); i += batch_size) {
        auto n = std::min(batch_size, test.size() - i);
        auto pred = model.forward(test.images.narrow(0, i, n)).argmax(1);
        correct += (pred == test.labels.narrow(0, i, n)).sum().item<int64_t>();
    }
    return double(correct) / double(test.size());
}

double attack_success(const PointcutModel& model, const Dataset& test,
                      const TriggerSpec& spec, int64_t batch_size) {
    auto keep = torch::nonzero(test.labels != spec.target_label).squeeze(1);
    TORCH_CHECK(keep.numel() > 0,
                "attack_success: every sample carries the target label");
    auto retained = test.index(keep);
    torch::NoGradGuard no_grad;
    int64_t hits = 0;
    for (int64_t i = 0; i < retained.size(); i += batch_size) {
        auto n = std::min(batch_size, retained.size() - i);
        auto triggered =
            apply_trigger_images(retained.images.narrow(0, i, n), spec);
        auto pred = model.forward(triggered).argmax(1);
        hits += (pred == spec.target_label).sum().item<int64_t>();
    }
    return double(hits) / double(retained.size());
}

double auroc(const std::vector<double>& scores_benign,
             const std::vector<double>& scores_backdoor) {
    TORCH_CHECK(!scores_benign.empty() && !scores_backdoor.empty(),
                "auroc: both score sets must be nonempty");
    const auto nb = scores_benign.size();
    const auto nt = scores_backdoor.size();
    struct Entry {
        double score;
        bool backdoor;
    };
    std::vector<Entry> all;
    all.reserve(nb + nt);
    for (double s : scores_benign) all.push_back({s, false});
    for (double s : scores_backdoor) all.push_back({s, true});
    std::sort(all.begin(), all.end(),
              [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // Average ranks within tie groups, then the Mann-Whitney U statistic.
    double rank_sum_backdoor = 0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double avg_rank = (double(i + 1) + double(j)) / 2.0; // 1-based
        for (size_t k = i; k < j; ++k) {
            if (all[k].backdoor) rank_sum_backdoor += avg_rank;
        }
        i = j;
    }
    const double u =
        rank_sum_backdoor - double(nt) * (double(nt) + 1.0) / 2.0;
    return u / (double(nt) * double(nb));
}

torch::Tensor grayscale_render(const torch::Tensor& grid) {
    auto g = grid.detach().to(torch::kFloat32);
    auto lo = g.min();
    auto hi = g.max();
    return (g - lo) / (hi - lo + 1e-12);
}

ConsistencyReport consistency_study(const PointcutModel& model_a,
                                    const TriggerSpec& spec_a,
                                    const TriggerSpec& spec_b,
                                    const Dataset& test,
                                    int64_t probe_count) {
    TORCH_CHECK(spec_a.family != spec_b.family,
                "consistency_study: probe trigger must be a different family");
    torch::NoGradGuard no_grad;

    ConsistencyReport report;
    report.own_asr = attack_success(model_a, test, spec_a);
    report.cross_asr = attack_success(model_a, test, spec_b);

    auto n = std::min(probe_count, test.size());
    auto probe = test.images.narrow(0, 0, n);
    auto grid_b = model_a.extract_features(probe).grid;
    auto grid_o =
        model_a.extract_features(apply_trigger_images(probe, spec_a)).grid;
    auto grid_c =
        model_a.extract_features(apply_trigger_images(probe, spec_b)).grid;

    report.l1_benign_own =
        (grid_b - grid_o).abs().flatten(1).mean(1).mean().item<double>();
    report.l1_benign_cross =
        (grid_b - grid_c).abs().flatten(1).mean(1).mean().item<double>();
    report.grid_benign = grid_b[0].clone();
    report.grid_own = grid_o[0].clone();
    report.grid_cross = grid_c[0].clone();
    return report;
}

} // namespace bdt
