#pragma once

#include <torch/torch.h>

#include <string>

namespace bdt {

// Lossless-enough 8-bit image files for inputs and visualizations.
// Tensors are CHW float32 in [0,1]; 3 channels for PPM (P6), 1 for PGM (P5).

void write_ppm(const std::string& path, const torch::Tensor& image_chw);
torch::Tensor read_ppm(const std::string& path);

void write_pgm(const std::string& path, const torch::Tensor& image_1hw);
torch::Tensor read_pgm(const std::string& path);

// Dispatch on extension (.ppm / .pgm).
torch::Tensor read_image(const std::string& path);

} // namespace bdt
