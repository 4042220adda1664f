#pragma once

#include <torch/torch.h>

namespace bdt {

// conv3x3-BN-ReLU-conv3x3-BN with a 1x1-BN projection skip; stride applies to
// the first conv and the skip.
struct ResidualBlockImpl : torch::nn::Module {
    ResidualBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::BatchNorm2d norm1{nullptr}, norm2{nullptr};
    torch::nn::Sequential skip{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Reduced residual classifier for 32x32 inputs: stem + 4 stages of widths
// 32/64/128/256 (stride 2 each), global average pool, linear head.
//
// The stage-3 output — the middle representation the rest of the toolkit
// consumes — is multiplied by a fixed scalar gain. Stage 4 opens with a
// BatchNorm'd convolution, so the gain is a pure reparameterization of the
// network function; it only sets the absolute scale of the exposed features,
// which otherwise sits near unit variance for a freshly trained model.
struct DeskClassifierImpl : torch::nn::Module {
    explicit DeskClassifierImpl(int64_t num_classes = 10,
                                double feature_gain = 20.0);

    torch::Tensor front(const torch::Tensor& x);   // input -> middle features
    torch::Tensor rear(const torch::Tensor& features); // middle features -> logits
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Sequential stem{nullptr};
    ResidualBlock stage1{nullptr}, stage2{nullptr}, stage3{nullptr},
        stage4{nullptr};
    torch::nn::Linear head{nullptr};
    torch::Tensor gain;
};
TORCH_MODULE(DeskClassifier);

} // namespace bdt
