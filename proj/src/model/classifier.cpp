#include "bdt/model/classifier.hpp"

namespace bdt {

ResidualBlockImpl::ResidualBlockImpl(int64_t in_channels, int64_t out_channels,
                                     int64_t stride) {
    conv1 = register_module(
        "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels,
                                                            out_channels, 3)
                                       .stride(stride)
                                       .padding(1)
                                       .bias(false)));
    norm1 = register_module("norm1", torch::nn::BatchNorm2d(out_channels));
    conv2 = register_module(
        "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_channels,
                                                            out_channels, 3)
                                       .stride(1)
                                       .padding(1)
                                       .bias(false)));
    norm2 = register_module("norm2", torch::nn::BatchNorm2d(out_channels));
    if (stride != 1 || in_channels != out_channels) {
        skip = register_module(
            "skip",
            torch::nn::Sequential(
                torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels,
                                                           out_channels, 1)
                                      .stride(stride)
                                      .bias(false)),
                torch::nn::BatchNorm2d(out_channels)));
    }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    auto identity = skip ? skip->forward(x) : x;
    auto h = torch::relu(norm1(conv1(x)));
    h = norm2(conv2(h));
    return torch::relu(h + identity);
}

DeskClassifierImpl::DeskClassifierImpl(int64_t num_classes,
                                       double feature_gain) {
    stem = register_module(
        "stem",
        torch::nn::Sequential(
            torch::nn::Conv2d(
                torch::nn::Conv2dOptions(3, 32, 3).stride(1).padding(1).bias(
                    false)),
            torch::nn::BatchNorm2d(32), torch::nn::ReLU()));
    stage1 = register_module("stage1", ResidualBlock(32, 32, 2));
    stage2 = register_module("stage2", ResidualBlock(32, 64, 2));
    stage3 = register_module("stage3", ResidualBlock(64, 128, 2));
    stage4 = register_module("stage4", ResidualBlock(128, 256, 2));
    head = register_module("head", torch::nn::Linear(256, num_classes));
    gain = register_buffer("gain", torch::tensor(feature_gain,
                                                 torch::kFloat32));
}

torch::Tensor DeskClassifierImpl::front(const torch::Tensor& x) {
    return stage3(stage2(stage1(stem->forward(x)))) * gain;
}

torch::Tensor DeskClassifierImpl::rear(const torch::Tensor& features) {
    auto h = stage4(features);
    return head(h.mean({2, 3}));
}

torch::Tensor DeskClassifierImpl::forward(const torch::Tensor& x) {
    return rear(front(x));
}

} // namespace bdt
