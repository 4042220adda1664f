#include "bdt/attack/train.hpp"
#include "bdt/data/loaders.hpp"
#include "bdt/triggers/triggers.hpp"

// c10's logging shim defines a glog-style CHECK; doctest owns the name here.
#undef CHECK
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace bdt;

namespace {

TriggerSpec make_spec(TriggerFamily family, int64_t seed = 0) {
    TriggerSpec spec;
    spec.family = family;
    spec.target_label = 0;
    spec.seed = seed;
    return spec;
}

} // namespace

TEST_CASE("badnets overwrites exactly nine pixels bottom-right") {
    auto images = torch::full({2, 3, 32, 32}, 0.5);
    auto spec = make_spec(TriggerFamily::badnets);
    auto out = apply_trigger_images(images, spec);

    auto differs = (out != images).any(1); // (N,H,W)
    CHECK(differs[0].sum().item<int64_t>() == 9);
    CHECK(torch::equal(
        out.index({0, torch::indexing::Slice(),
                   torch::indexing::Slice(29, 32),
                   torch::indexing::Slice(29, 32)}),
        badnets_patch()));
    // everything outside the patch untouched
    CHECK(differs.index({torch::indexing::Slice(), torch::indexing::Slice(0, 29),
                         torch::indexing::Slice()})
              .sum()
              .item<int64_t>() == 0);

    auto tiny = torch::rand({1, 3, 2, 2});
    CHECK_THROWS(apply_trigger_images(tiny, spec));
}

TEST_CASE("blend follows the convex formula and the degenerate case") {
    auto images = torch::rand({3, 3, 16, 16});
    auto spec = make_spec(TriggerFamily::blend, 5);
    spec.params.blend_lambda = 0.3;
    auto out = apply_trigger_images(images, spec);

    auto noise = blend_noise_image(5, 16);
    auto expected = (0.7 * images + 0.3 * noise).clamp(0, 1);
    CHECK((out - expected).abs().max().item<double>() < 1e-7);

    spec.params.blend_lambda = 0.0;
    auto same = apply_trigger(LabeledSample{images[0], 4}, spec);
    CHECK(torch::equal(same.image, images[0]));
    CHECK(same.label == 0); // label rewritten to target

    spec.params.blend_lambda = 1.0;
    CHECK_THROWS(apply_trigger_images(images, spec));
}

TEST_CASE("blend noise image is seeded gaussian around mid-gray") {
    auto a = blend_noise_image(9, 32);
    auto b = blend_noise_image(9, 32);
    CHECK(torch::equal(a, b));
    CHECK(a.min().item<double>() >= 0.0);
    CHECK(a.max().item<double>() <= 1.0);
    CHECK(a.mean().item<double>() == doctest::Approx(0.5).epsilon(0.05));
    CHECK_FALSE(torch::equal(a, blend_noise_image(10, 32)));
}

TEST_CASE("physical jitter is seeded, bounded, and shape-preserving") {
    auto images = torch::rand({4, 3, 32, 32});
    auto spec = make_spec(TriggerFamily::physical, 2);
    auto out1 = apply_trigger_images(images, spec);
    auto out2 = apply_trigger_images(images, spec);
    CHECK(torch::equal(out1, out2));
    CHECK(out1.sizes() == images.sizes());
    CHECK(out1.min().item<double>() >= 0.0);
    CHECK(out1.max().item<double>() <= 1.0);
    CHECK_FALSE(torch::equal(out1, images));

    spec.seed = 3;
    CHECK_FALSE(torch::equal(apply_trigger_images(images, spec), out1));

    spec.params.jitter_low = -0.1;
    CHECK_THROWS(apply_trigger_images(images, spec));
}

TEST_CASE("wanet warps a constant image into itself") {
    auto flat = torch::full({1, 3, 32, 32}, 0.42);
    auto spec = make_spec(TriggerFamily::wanet, 1);
    spec.params.warp_grid_size = 4;
    spec.params.warp_strength = 0.5;
    auto out = apply_trigger_images(flat, spec);
    CHECK((out - flat).abs().max().item<double>() < 1e-6);

    // a textured image does move
    auto textured = torch::rand({1, 3, 32, 32});
    auto warped = apply_trigger_images(textured, spec);
    CHECK((warped - textured).abs().max().item<double>() > 1e-3);

    spec.params.warp_grid_size = 64;
    CHECK_THROWS(apply_trigger_images(textured, spec));
}

TEST_CASE("wanet warp grid stays in sampling range and is seed-stable") {
    auto grid = wanet_warp_grid(4, 32, 4, 6.0);
    CHECK(grid.sizes() == torch::IntArrayRef({1, 32, 32, 2}));
    CHECK(grid.min().item<double>() >= -1.0);
    CHECK(grid.max().item<double>() <= 1.0);
    CHECK(torch::equal(grid, wanet_warp_grid(4, 32, 4, 6.0)));

    // strength 0 is the identity grid
    auto identity = wanet_warp_grid(4, 32, 4, 0.0);
    auto lin = torch::linspace(-1, 1, 32);
    auto mesh = torch::meshgrid({lin, lin}, "ij");
    auto expect = torch::stack({mesh[1], mesh[0]}, 2).unsqueeze(0);
    CHECK((identity - expect).abs().max().item<double>() < 1e-7);
}

TEST_CASE("advdoor requires a bounded precomputed perturbation") {
    auto images = torch::rand({2, 3, 16, 16});
    auto spec = make_spec(TriggerFamily::advdoor);
    spec.params.epsilon = 8.0 / 255.0;
    CHECK_THROWS(apply_trigger_images(images, spec)); // no perturbation

    spec.params.perturbation =
        torch::full({3, 16, 16}, spec.params.epsilon);
    auto out = apply_trigger_images(images, spec);
    CHECK((out - images).abs().max().item<double>() <=
          spec.params.epsilon + 1e-6);

    spec.params.perturbation = torch::full({3, 16, 16}, 0.5);
    CHECK_THROWS(apply_trigger_images(images, spec)); // bound violated
}

TEST_CASE("poison_dataset flags floor(ratio*N) samples reproducibly") {
    DatasetSplit split;
    split.train = make_synth10(1, 203, 32);
    split.test = make_synth10(2, 16, 32);

    auto spec = make_spec(TriggerFamily::badnets, 8);
    spec.poison_ratio = 0.10;
    auto poisoned = poison_dataset(split, spec);

    const int64_t flagged = poisoned.poison_flags.sum().item<int64_t>();
    CHECK(flagged == 20); // floor(0.10 * 203)
    CHECK(std::abs(double(flagged) - 0.10 * 203) <= 1.0);
    CHECK(poisoned.poisoned_indices.numel() == flagged);

    // every flagged sample wears the target label; others keep theirs
    auto flags = poisoned.poison_flags;
    CHECK((poisoned.samples.labels.masked_select(flags) == 0).all().item<bool>());
    auto kept = poisoned.samples.labels.masked_select(~flags);
    CHECK(torch::equal(kept, split.train.labels.masked_select(~flags)));

    auto again = poison_dataset(split, spec);
    CHECK(torch::equal(again.poisoned_indices, poisoned.poisoned_indices));
    CHECK(torch::equal(again.samples.images, poisoned.samples.images));

    spec.poison_ratio = 1.0;
    auto all = poison_dataset(split, spec);
    CHECK(all.poison_flags.all().item<bool>());
    CHECK((all.samples.labels == 0).all().item<bool>());

    spec.poison_ratio = 0.001;
    CHECK_THROWS(poison_dataset(split, spec)); // zero samples
}

TEST_CASE("poisoned images stay in range and keep dimensions") {
    DatasetSplit split;
    split.train = make_synth10(3, 64, 32);
    for (auto family :
         {TriggerFamily::badnets, TriggerFamily::blend, TriggerFamily::physical,
          TriggerFamily::wanet}) {
        auto spec = make_spec(family, 4);
        spec.poison_ratio = 0.5;
        auto p = poison_dataset(split, spec);
        CHECK(p.samples.images.sizes() == split.train.images.sizes());
        CHECK(p.samples.images.min().item<double>() >= 0.0);
        CHECK(p.samples.images.max().item<double>() <= 1.0);
    }
}

TEST_CASE("advdoor crafting: zero bound, projection, and probability gain") {
    auto split = load_dataset("synth10", 32, 5, "unused", 512, 200);

    TrainConfig tc;
    tc.epochs = 4;
    tc.seed = 5;
    auto trained = train_classifier(split.train, tc);

    auto zero = make_advdoor_trigger(trained.model, split, 0, 0.0, 5, 1);
    CHECK(zero.abs().max().item<double>() == 0.0);

    const double eps = 8.0 / 255.0;
    auto delta = make_advdoor_trigger(trained.model, split, 0, eps, 40, 1);
    CHECK(delta.sizes() == torch::IntArrayRef({3, 32, 32}));
    CHECK(delta.abs().max().item<double>() <= eps + 1e-6);

    torch::NoGradGuard no_grad;
    auto probs = [&](const torch::Tensor& x) {
        return torch::softmax(trained.model.forward(x), 1)
            .select(1, 0)
            .mean()
            .item<double>();
    };
    const auto clean = split.test.images;
    CHECK(probs((clean + delta).clamp(0, 1)) > probs(clean));
}
