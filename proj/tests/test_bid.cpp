#include "bdt/bid/detector.hpp"
#include "bdt/data/loaders.hpp"

// c10's logging shim defines a glog-style CHECK; doctest owns the name here.
#undef CHECK
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace bdt;

namespace {

struct Fixture {
    PointcutModel model;
    DetectorState detector;

    Fixture() : model(make_model()) {
        detector.vae = build_vae(model.grid_layout().height,
                                 model.grid_layout().width);
        detector.model = &model;
    }

    static PointcutModel make_model() {
        torch::manual_seed(17);
        DeskClassifier net;
        return split_model(net, "stage3", 32);
    }
};

} // namespace

TEST_CASE("reconstruction distance: max minus min of absolute residual") {
    // Feed a grid and a VAE stub? No — drive the real formula through a known
    // residual: dis(grid) - dis(grid) == 0 is trivial; instead verify against
    // a recomputation from the VAE's own deterministic reconstruction.
    Fixture fx;
    torch::manual_seed(23);
    auto grid = torch::randn({1, 1, 64, 32});
    const double dis = reconstruction_distance(fx.detector.vae, grid);

    auto mu = fx.detector.vae.vae->encode(grid).first;
    auto recon = fx.detector.vae.vae->decode(mu);
    auto res = (grid - recon).abs();
    const double want =
        res.max().item<double>() - res.min().item<double>();
    CHECK(dis == doctest::Approx(want).epsilon(1e-9));
    CHECK(dis >= 0.0);
}

TEST_CASE("reconstruction distance: rejects wrong grid shape") {
    Fixture fx;
    CHECK_THROWS(reconstruction_distance(fx.detector.vae,
                                         torch::zeros({1, 1, 8, 8})));
}

TEST_CASE("calibrate: order-statistic oracle on 1..100") {
    // Distances 1..100 shuffled; tau at p=0.95 is the ceil(0.95*100)=95th
    // smallest, i.e. 95.
    std::vector<double> dists;
    for (int i = 1; i <= 100; ++i) dists.push_back(static_cast<double>(i));
    std::mt19937 rng(3);
    std::shuffle(dists.begin(), dists.end(), rng);

    Fixture fx;
    auto cal = calibrate(fx.detector, dists, 0.95);
    CHECK(cal.tau == doctest::Approx(95.0).epsilon(1e-12));
    CHECK(cal.confidence_p == 0.95);
    CHECK(cal.calibrated());

    // Non-integral rank: p=0.9 over 55 samples -> ceil(49.5) = 50th smallest.
    std::vector<double> d55;
    for (int i = 1; i <= 55; ++i) d55.push_back(i * 0.5);
    auto cal55 = calibrate(fx.detector, d55, 0.9);
    CHECK(cal55.tau == doctest::Approx(50 * 0.5).epsilon(1e-12));
}

TEST_CASE("calibrate: input validation") {
    Fixture fx;
    std::vector<double> few(49, 1.0);
    CHECK_THROWS(calibrate(fx.detector, few, 0.95)); // needs >= 50 samples
    std::vector<double> enough(50, 1.0);
    CHECK_THROWS(calibrate(fx.detector, enough, 0.0));
    CHECK_THROWS(calibrate(fx.detector, enough, 1.0));
    CHECK_NOTHROW(calibrate(fx.detector, enough, 0.95));
}

TEST_CASE("detect: requires calibration") {
    Fixture fx;
    auto image = torch::rand({3, 32, 32});
    CHECK_THROWS(detect(fx.detector, image));
}

TEST_CASE("detect: verdict is the conjunction of label flip and threshold") {
    Fixture fx;
    auto bench = make_synth10(29, 64);
    auto cal = calibrate_on_images(fx.detector, bench.images, 0.95);
    REQUIRE(cal.calibrated());

    torch::manual_seed(31);
    auto probe = torch::rand({3, 32, 32});
    auto det = detect(cal, probe);
    const bool flip = det.label0 != det.label1;
    const bool over = det.dis > cal.tau;
    CHECK((det.verdict == Verdict::backdoor) == (flip && over));

    // Monotonicity in tau: raising the threshold above dis forces benign.
    auto strict = cal;
    strict.tau = det.dis + 1.0;
    auto det2 = detect(strict, probe);
    CHECK(det2.verdict == Verdict::benign);
    CHECK(det2.label0 == det.label0);
    CHECK(det2.label1 == det.label1);
    CHECK(det2.dis == doctest::Approx(det.dis).epsilon(1e-12));

    // And lowering it below dis flags exactly the label-flip cases.
    auto lax = cal;
    lax.tau = std::max(0.0, det.dis - 1e-6);
    if (lax.tau < det.dis) {
        auto det3 = detect(lax, probe);
        CHECK((det3.verdict == Verdict::backdoor) == flip);
    }
}

TEST_CASE("detect: exactly one front pass per call") {
    Fixture fx;
    auto bench = make_synth10(29, 64);
    auto cal = calibrate_on_images(fx.detector, bench.images, 0.95);
    auto probe = torch::rand({3, 32, 32});
    fx.model.reset_m1_pass_count();
    (void)detect(cal, probe);
    CHECK(fx.model.m1_pass_count() == 1);
    (void)detect(cal, probe);
    (void)detect(cal, probe);
    CHECK(fx.model.m1_pass_count() == 3);
}

TEST_CASE("detect: verdicts reproduce across calls") {
    Fixture fx;
    auto bench = make_synth10(29, 64);
    auto cal = calibrate_on_images(fx.detector, bench.images, 0.95);
    auto probe = torch::rand({3, 32, 32});
    auto a = detect(cal, probe);
    auto b = detect(cal, probe);
    CHECK(a.label0 == b.label0);
    CHECK(a.label1 == b.label1);
    CHECK(a.dis == b.dis);
    CHECK((a.verdict == b.verdict));
}

TEST_CASE("detect_batch agrees with per-image detect") {
    Fixture fx;
    auto bench = make_synth10(29, 64);
    auto cal = calibrate_on_images(fx.detector, bench.images, 0.95);
    auto images = make_synth10(37, 8).images;
    auto batch = detect_batch(cal, images);
    REQUIRE(batch.dis.size(0) == 8);
    for (int64_t i = 0; i < 8; ++i) {
        auto one = detect(cal, images[i]);
        CHECK(batch.label0[i].item<int64_t>() == one.label0);
        CHECK(batch.label1[i].item<int64_t>() == one.label1);
        CHECK(batch.dis[i].item<double>() ==
              doctest::Approx(one.dis).epsilon(1e-6));
    }
}

TEST_CASE("auroc score: distance when labels flip, zero otherwise") {
    Fixture fx;
    auto bench = make_synth10(29, 64);
    auto cal = calibrate_on_images(fx.detector, bench.images, 0.95);
    auto images = make_synth10(41, 16).images;
    auto batch = detect_batch(cal, images);
    auto scores = scores_for_auroc(cal, images);
    REQUIRE(scores.size(0) == 16);
    for (int64_t i = 0; i < 16; ++i) {
        const bool flip =
            batch.label0[i].item<int64_t>() != batch.label1[i].item<int64_t>();
        const double want = flip ? batch.dis[i].item<double>() : 0.0;
        CHECK(scores[i].item<double>() == doctest::Approx(want).epsilon(1e-9));
        CHECK(score_for_auroc(cal, images[i]) ==
              doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("calibration threshold bounds the benign flag rate") {
    // By construction at most (1-p) of the calibration distances exceed tau.
    Fixture fx;
    auto bench = make_synth10(29, 80);
    auto cal = calibrate_on_images(fx.detector, bench.images, 0.9);
    auto batch = detect_batch(cal, bench.images);
    const double over =
        (batch.dis > cal.tau).to(torch::kFloat32).mean().item<double>();
    CHECK(over <= 0.1 + 1e-9);
}
