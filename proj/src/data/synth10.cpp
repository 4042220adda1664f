#include "bdt/data/loaders.hpp"

#include <cmath>

namespace bdt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// One glyph mask on rotated/translated/scaled coordinates. Class signal is
// pure geometry; color, pose, and background vary freely.
torch::Tensor glyph_mask(int64_t cls, const torch::Tensor& xr,
                         const torch::Tensor& yr) {
    auto r = (xr * xr + yr * yr).sqrt();
    switch (cls) {
        case 0: // disk
            return r < 0.55;
        case 1: // ring
            return (r - 0.52).abs() < 0.14;
        case 2: // cross
            return ((xr.abs() < 0.16) | (yr.abs() < 0.16)) & (r < 0.75);
        case 3: { // square outline
            auto box = torch::maximum(xr.abs(), yr.abs());
            return (box - 0.5).abs() < 0.12;
        }
        case 4: // triangle
            return (yr > -0.45) & (yr < 1.6 * xr + 0.45) & (yr < -1.6 * xr + 0.45);
        case 5: // horizontal stripes
            return ((yr * 9.0).sin() > 0.2) & (r < 0.7);
        case 6: // vertical stripes
            return ((xr * 9.0).sin() > 0.2) & (r < 0.7);
        case 7: // checkerboard
            return ((xr * 7.0).sin() * (yr * 7.0).sin() > 0.1) & (r < 0.75);
        case 8: // X
            return (((xr - yr).abs() < 0.2) | ((xr + yr).abs() < 0.2)) & (r < 0.8);
        default: // dot lattice
            return ((xr * 11.0).sin() > 0.4) & ((yr * 11.0).sin() > 0.4) & (r < 0.8);
    }
}

} // namespace

Dataset make_synth10(int64_t seed, int64_t count, int64_t image_size) {
    TORCH_CHECK(image_size >= 16, "make_synth10: image_size must be >= 16");
    torch::NoGradGuard no_grad;
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(seed));

    auto labels = torch::randint(0, 10, {count}, gen, torch::kInt64);
    auto lin = torch::linspace(-1, 1, image_size);
    auto grids = torch::meshgrid({lin, lin}, "ij");
    auto yy = grids[0];
    auto xx = grids[1];

    auto images = torch::empty({count, 3, image_size, image_size});
    for (int64_t i = 0; i < count; ++i) {
        const int64_t cls = labels[i].item<int64_t>();
        auto pos = torch::rand({2}, gen) * 0.7 - 0.35;
        const double cx = pos[0].item<double>();
        const double cy = pos[1].item<double>();
        const double scale = 0.55 + 0.45 * torch::rand({1}, gen).item<double>();
        const double theta =
            (torch::rand({1}, gen).item<double>() * 2 - 1) * kPi / 5;

        auto xr = ((xx - cx) * std::cos(theta) + (yy - cy) * std::sin(theta)) / scale;
        auto yr = (-(xx - cx) * std::sin(theta) + (yy - cy) * std::cos(theta)) / scale;
        auto mask = glyph_mask(cls, xr, yr);

        auto fg = torch::rand({3}, gen);
        auto bg = torch::rand({3}, gen);
        while ((fg - bg).abs().max().item<double>() < 0.35) {
            bg = torch::rand({3}, gen);
        }
        const double grad_dir =
            torch::rand({1}, gen).item<double>() * 2 * kPi;
        auto grad =
            0.15 * (xx * std::cos(grad_dir) + yy * std::sin(grad_dir));

        auto img = bg.view({3, 1, 1}) + grad.unsqueeze(0);
        img = torch::where(mask.unsqueeze(0),
                           fg.view({3, 1, 1}).expand({3, image_size, image_size}),
                           img);
        img = img + 0.06 * torch::randn({3, image_size, image_size}, gen);
        images[i] = img.clamp(0, 1);
    }
    return {images.to(torch::kFloat32), labels, 10};
}

} // namespace bdt
