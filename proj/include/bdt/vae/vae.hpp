#pragma once

#include "bdt/model/pointcut.hpp"

#include <tuple>

namespace bdt {

// Three-stage residual encoder/decoder over a single-channel feature grid,
// channel widths 8/16/32. Encoder stages: conv3x3 s1 -> ReLU -> conv3x3 s2 ->
// LayerNorm, summed with a MaxPool2 + 1x1-conv skip, ReLU. Stage 3 is a 5x5
// stride-2 valid convolution + LayerNorm, flattened into parallel FC heads
// for mu and ln(sigma). Decoder mirrors with transposed convs and
// nearest-upsample + 1x1-conv skips; the final stage sums without ReLU so
// reconstructions can go negative like their inputs.
struct VaeEncoderStageImpl : torch::nn::Module {
    VaeEncoderStageImpl(int64_t cin, int64_t cout, int64_t h, int64_t w);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
    torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(VaeEncoderStage);

struct VaeDecoderStageImpl : torch::nn::Module {
    VaeDecoderStageImpl(int64_t cin, int64_t cout, int64_t h, int64_t w,
                        bool final_stage);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::ConvTranspose2d tconv1{nullptr}, tconv2{nullptr};
    torch::nn::Conv2d skip{nullptr};
    bool final_stage = false;
};
TORCH_MODULE(VaeDecoderStage);

struct FeatureVaeImpl : torch::nn::Module {
    FeatureVaeImpl(int64_t grid_h, int64_t grid_w, int64_t latent_dim);

    std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& grid);
    torch::Tensor decode(const torch::Tensor& z);
    // Returns (reconstruction, mu, ln_sigma); eps, when defined, replaces the
    // N(0,1) draw of the reparameterization (zero => deterministic pass).
    std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> forward(
        const torch::Tensor& grid, const std::optional<torch::Tensor>& eps = {});

    int64_t grid_h = 0, grid_w = 0, latent_dim = 0, flat_size = 0;
    VaeEncoderStage enc1{nullptr}, enc2{nullptr};
    torch::nn::Conv2d enc3{nullptr};
    torch::nn::LayerNorm enc3_norm{nullptr}, dec_norm{nullptr};
    torch::nn::Linear fc_mean{nullptr}, fc_lnsigma{nullptr}, fc_back{nullptr};
    torch::nn::ConvTranspose2d dec1{nullptr};
    VaeDecoderStage dec2{nullptr}, dec3{nullptr};
};
TORCH_MODULE(FeatureVae);

struct VaeState {
    FeatureVae vae{nullptr};
    int64_t grid_h = 0;
    int64_t grid_w = 0;
    int64_t latent_dim = 0;
    double alpha = 0.5;
};

// Latent sizing: 64 unless the flattened encoder size drops below 512, in
// which case latent = max(16, flat/8) to keep a sensible bottleneck at desk
// scale. Pass latent_dim > 0 to override.
VaeState build_vae(int64_t grid_h, int64_t grid_w, int64_t latent_dim = 0,
                   double alpha = 0.5);

// Flattened size after the three encoder stages for a given grid (shape
// propagation; the architecture table's printed value for 1x256x64 does not
// factor, see flat_size_for(256,64) == 5760).
int64_t flat_size_for(int64_t grid_h, int64_t grid_w);

// MSE (mean over grid elements) + alpha * sum_j(mu_j^2 + sigma_j^2 -
// log(sigma_j^2) - 1), averaged over the batch. Returns (total, mse, kl).
std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> vae_loss_terms(
    const torch::Tensor& reconstruction, const torch::Tensor& grid,
    const torch::Tensor& mu, const torch::Tensor& ln_sigma, double alpha);

// Stochastic-pass loss on a batch of grids (training objective).
torch::Tensor vae_loss(VaeState& state, const torch::Tensor& grids);

struct VaeTrainConfig {
    int64_t epochs = 80;
    int64_t batch_size = 64;
    double learning_rate = 5e-3;
    bool cosine_schedule = true;
    int64_t seed = 0;
};

struct VaeTrainLog {
    std::vector<double> epoch_total;
    double final_benign_mse = 0; // held-out benign reconstruction MSE
};

// Trains the VAE on middle-feature grids of benign samples (the N_1 subset).
VaeTrainLog train_vae(const PointcutModel& model, const Dataset& clean_samples,
                      VaeState& state, const VaeTrainConfig& config);

} // namespace bdt
