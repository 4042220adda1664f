#pragma once

#include "bdt/data/dataset.hpp"

namespace bdt {

// Supported dataset ids:
//   "synth10"   — procedural 10-class glyph dataset, generated on the fly
//                (default desk-scale corpus; no files needed).
//   "cifar10"   — CIFAR-10 binary batches under <data_dir>/cifar10/raw/.
//   "mnist-rgb" — MNIST IDX files under <data_dir>/mnist-rgb/raw/, replicated
//                to 3 channels.
// Images are resized to image_size x image_size (nearest for upscale of the
// procedural set is moot: it renders natively at any size).
//
// File-backed datasets verify SHA-256 checksums against a pin file
// (<data_dir>/<id>/checksums.json); the pin file is created on first load so
// later loads detect corruption or substitution.
//
// train_count / test_count of 0 use the dataset defaults (synth10: 4096/1024;
// file datasets: full size); nonzero values size the procedural set or
// truncate a file-backed one after the seeded shuffle.
DatasetSplit load_dataset(const std::string& name, int64_t image_size,
                          int64_t seed, const std::string& data_dir = "data",
                          int64_t train_count = 0, int64_t test_count = 0);

// Procedural generator backing "synth10" (exposed for tests and tools).
Dataset make_synth10(int64_t seed, int64_t count, int64_t image_size = 32);

} // namespace bdt
