#include "bdt/vae/vae.hpp"

#include <cmath>

namespace F = torch::nn::functional;

namespace bdt {

namespace {
constexpr double kPi = 3.14159265358979323846;

std::vector<int64_t> ln_shape(int64_t c, int64_t h, int64_t w) {
    return {c, h, w};
}
} // namespace

VaeEncoderStageImpl::VaeEncoderStageImpl(int64_t cin, int64_t cout, int64_t h,
                                         int64_t w) {
    conv1 = register_module(
        "conv1", torch::nn::Conv2d(
                     torch::nn::Conv2dOptions(cin, cout, 3).stride(1).padding(1)));
    conv2 = register_module(
        "conv2", torch::nn::Conv2d(
                     torch::nn::Conv2dOptions(cout, cout, 3).stride(2).padding(1)));
    norm = register_module(
        "norm", torch::nn::LayerNorm(
                    torch::nn::LayerNormOptions(ln_shape(cout, h / 2, w / 2))));
    skip = register_module(
        "skip",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(cin, cout, 1).stride(1)));
}

torch::Tensor VaeEncoderStageImpl::forward(const torch::Tensor& x) {
    auto h = conv2(torch::relu(conv1(x)));
    h = norm(h);
    auto s = skip(F::max_pool2d(x, F::MaxPool2dFuncOptions(2)));
    return torch::relu(h + s);
}

VaeDecoderStageImpl::VaeDecoderStageImpl(int64_t cin, int64_t cout, int64_t h,
                                         int64_t w, bool final_stage_)
    : final_stage(final_stage_) {
    norm1 = register_module(
        "norm1",
        torch::nn::LayerNorm(torch::nn::LayerNormOptions(ln_shape(cin, h, w))));
    tconv1 = register_module(
        "tconv1", torch::nn::ConvTranspose2d(
                      torch::nn::ConvTranspose2dOptions(cin, cin, 3)
                          .stride(1)
                          .padding(1)));
    norm2 = register_module(
        "norm2",
        torch::nn::LayerNorm(torch::nn::LayerNormOptions(ln_shape(cin, h, w))));
    tconv2 = register_module(
        "tconv2", torch::nn::ConvTranspose2d(
                      torch::nn::ConvTranspose2dOptions(cin, cout, 3)
                          .stride(2)
                          .padding(1)
                          .output_padding(1)));
    skip = register_module(
        "skip",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(cin, cout, 1).stride(1)));
}

torch::Tensor VaeDecoderStageImpl::forward(const torch::Tensor& x) {
    auto h = norm2(torch::relu(tconv1(norm1(x))));
    h = tconv2(h);
    auto upsampled = F::interpolate(
        x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2})
               .mode(torch::kNearest));
    auto out = h + skip(upsampled);
    return final_stage ? out : torch::relu(out);
}

int64_t flat_size_for(int64_t grid_h, int64_t grid_w) {
    const int64_t h3 = (grid_h / 4 - 5) / 2 + 1;
    const int64_t w3 = (grid_w / 4 - 5) / 2 + 1;
    return 32 * h3 * w3;
}

FeatureVaeImpl::FeatureVaeImpl(int64_t grid_h_, int64_t grid_w_,
                               int64_t latent_dim_)
    : grid_h(grid_h_), grid_w(grid_w_), latent_dim(latent_dim_) {
    TORCH_CHECK(grid_h % 4 == 0 && grid_w % 4 == 0 && grid_h / 4 >= 5 &&
                    grid_w / 4 >= 5,
                "FeatureVae: grid ", grid_h, "x", grid_w,
                " incompatible with three stride-2 stages (5x5 valid conv "
                "needs both sides >= 20)");
    const int64_t h3 = (grid_h / 4 - 5) / 2 + 1;
    const int64_t w3 = (grid_w / 4 - 5) / 2 + 1;
    flat_size = 32 * h3 * w3;
    // Output padding that makes dec1 exactly invert enc3's valid conv; 0 or 1
    // per dimension depending on the parity of grid/4.
    const int64_t op_h = grid_h / 4 - ((h3 - 1) * 2 + 5);
    const int64_t op_w = grid_w / 4 - ((w3 - 1) * 2 + 5);

    enc1 = register_module("enc1", VaeEncoderStage(1, 8, grid_h, grid_w));
    enc2 = register_module("enc2",
                           VaeEncoderStage(8, 16, grid_h / 2, grid_w / 2));
    enc3 = register_module(
        "enc3", torch::nn::Conv2d(
                    torch::nn::Conv2dOptions(16, 32, 5).stride(2).padding(0)));
    enc3_norm = register_module(
        "enc3_norm",
        torch::nn::LayerNorm(torch::nn::LayerNormOptions(ln_shape(32, h3, w3))));
    fc_mean = register_module("fc_mean", torch::nn::Linear(flat_size, latent_dim));
    fc_lnsigma =
        register_module("fc_lnsigma", torch::nn::Linear(flat_size, latent_dim));
    fc_back = register_module("fc_back", torch::nn::Linear(latent_dim, flat_size));
    dec_norm = register_module(
        "dec_norm",
        torch::nn::LayerNorm(torch::nn::LayerNormOptions(ln_shape(32, h3, w3))));
    dec1 = register_module(
        "dec1", torch::nn::ConvTranspose2d(
                    torch::nn::ConvTranspose2dOptions(32, 16, 5)
                        .stride(2)
                        .padding(0)
                        .output_padding({op_h, op_w})));
    dec2 = register_module("dec2",
                           VaeDecoderStage(16, 8, grid_h / 4, grid_w / 4, false));
    dec3 = register_module("dec3",
                           VaeDecoderStage(8, 1, grid_h / 2, grid_w / 2, true));
}

std::pair<torch::Tensor, torch::Tensor> FeatureVaeImpl::encode(
    const torch::Tensor& grid) {
    auto h = enc2(enc1(grid));
    h = enc3_norm(enc3(h)).flatten(1);
    return {fc_mean(h), fc_lnsigma(h)};
}

torch::Tensor FeatureVaeImpl::decode(const torch::Tensor& z) {
    const int64_t h3 = (grid_h / 4 - 5) / 2 + 1;
    const int64_t w3 = (grid_w / 4 - 5) / 2 + 1;
    auto h = fc_back(z).view({-1, 32, h3, w3});
    h = torch::relu(dec1(dec_norm(h)));
    return dec3(dec2(h));
}

std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> FeatureVaeImpl::forward(
    const torch::Tensor& grid, const std::optional<torch::Tensor>& eps) {
    auto [mu, ln_sigma] = encode(grid);
    auto noise = eps.has_value() ? *eps : torch::randn_like(mu);
    auto z = mu + torch::exp(ln_sigma) * noise;
    return {decode(z), mu, ln_sigma};
}

VaeState build_vae(int64_t grid_h, int64_t grid_w, int64_t latent_dim,
                   double alpha) {
    if (latent_dim <= 0) {
        const int64_t flat = flat_size_for(grid_h, grid_w);
        latent_dim = flat >= 512 ? 64 : std::max<int64_t>(16, flat / 8);
    }
    VaeState state;
    state.vae = FeatureVae(grid_h, grid_w, latent_dim);
    state.grid_h = grid_h;
    state.grid_w = grid_w;
    state.latent_dim = latent_dim;
    state.alpha = alpha;
    return state;
}

std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> vae_loss_terms(
    const torch::Tensor& reconstruction, const torch::Tensor& grid,
    const torch::Tensor& mu, const torch::Tensor& ln_sigma, double alpha) {
    auto mse = (reconstruction - grid).pow(2).flatten(1).mean(1);
    auto sigma_sq = torch::exp(2.0 * ln_sigma);
    // mu^2 + sigma^2 - log(sigma^2) - 1, summed over latent dimensions; the
    // 1/2 factor of the analytic KL is deliberately absent (alpha absorbs it).
    auto kl = (mu.pow(2) + sigma_sq - 2.0 * ln_sigma - 1.0).sum(1);
    auto total = (mse + alpha * kl).mean();
    TORCH_CHECK(torch::isfinite(total).item<bool>(),
                "vae_loss: non-finite loss");
    return {total, mse.mean(), kl.mean()};
}

torch::Tensor vae_loss(VaeState& state, const torch::Tensor& grids) {
    auto [recon, mu, ln_sigma] = state.vae->forward(grids);
    auto [total, mse, kl] = vae_loss_terms(recon, grids, mu, ln_sigma,
                                           state.alpha);
    (void)mse;
    (void)kl;
    return total;
}

VaeTrainLog train_vae(const PointcutModel& model, const Dataset& clean_samples,
                      VaeState& state, const VaeTrainConfig& config) {
    TORCH_CHECK(clean_samples.size() > 0, "train_vae: empty sample set");
    VaeTrainLog log;
    if (config.epochs == 0) {
        return log;
    }

    // Grids are extracted once (eval-mode features are deterministic).
    auto features = model.extract_features(clean_samples.images);
    auto grids = features.grid;
    const int64_t n = grids.size(0);
    const int64_t held_out = std::max<int64_t>(1, n / 10);

    auto& vae = state.vae;
    vae->train();
    torch::optim::AdamW optimizer(vae->parameters(),
                                  torch::optim::AdamWOptions(config.learning_rate));
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(config.seed));

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
        double total_epoch = 0;
        int64_t batches = 0;
        for (int64_t i = 0; i < n; i += config.batch_size) {
            auto idx = perm.narrow(0, i, std::min(config.batch_size, n - i));
            auto batch = grids.index_select(0, idx);
            auto loss = vae_loss(state, batch);
            optimizer.zero_grad();
            loss.backward();
            optimizer.step();
            total_epoch += loss.item<double>();
            ++batches;
        }
        log.epoch_total.push_back(total_epoch / double(batches));
    }
    vae->eval();

    {
        torch::NoGradGuard no_grad;
        auto sample = grids.narrow(0, 0, held_out);
        auto [mu, ln_sigma] = vae->encode(sample);
        auto recon = vae->decode(mu);
        log.final_benign_mse =
            (recon - sample).pow(2).mean().item<double>();
        (void)ln_sigma;
    }
    return log;
}

} // namespace bdt
