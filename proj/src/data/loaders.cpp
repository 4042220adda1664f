#include "bdt/data/loaders.hpp"

#include "bdt/common/json_util.hpp"
#include "bdt/common/sha256.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace fs = std::filesystem;

namespace bdt {

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_dataset: cannot open " + path);
    }
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

// Verifies file checksums against <dataset_dir>/checksums.json, creating the
// pin file on first load so subsequent loads detect silent data changes.
void pin_or_verify_checksums(const fs::path& dataset_dir,
                             const std::vector<std::string>& files) {
    const fs::path pin_path = dataset_dir / "checksums.json";
    json current = json::object();
    for (const auto& name : files) {
        current[name] = sha256_file_hex((dataset_dir / "raw" / name).string());
    }
    if (fs::exists(pin_path)) {
        const json pinned = load_json_file(pin_path.string());
        for (const auto& name : files) {
            if (!pinned.contains(name) || pinned[name] != current[name]) {
                throw std::runtime_error(
                    "load_dataset: checksum mismatch for " + name +
                    " (pinned in " + pin_path.string() + ")");
            }
        }
    } else {
        save_json_file(pin_path.string(), current);
    }
}

torch::Tensor resize_images(const torch::Tensor& images, int64_t size) {
    if (images.size(2) == size && images.size(3) == size) {
        return images;
    }
    namespace F = torch::nn::functional;
    return F::interpolate(images, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{size, size})
                                      .mode(torch::kBilinear)
                                      .align_corners(false))
        .clamp(0, 1);
}

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

// MNIST IDX pair (images magic 2051, labels magic 2049), replicated to RGB.
Dataset load_idx_pair(const fs::path& raw, const std::string& image_file,
                      const std::string& label_file) {
    const auto ibytes = read_file_bytes((raw / image_file).string());
    const auto lbytes = read_file_bytes((raw / label_file).string());
    if (ibytes.size() < 16 || read_be32(ibytes.data()) != 2051) {
        throw std::runtime_error("load_dataset: bad IDX image magic in " +
                                 image_file);
    }
    if (lbytes.size() < 8 || read_be32(lbytes.data()) != 2049) {
        throw std::runtime_error("load_dataset: bad IDX label magic in " +
                                 label_file);
    }
    const int64_t n = read_be32(ibytes.data() + 4);
    const int64_t rows = read_be32(ibytes.data() + 8);
    const int64_t cols = read_be32(ibytes.data() + 12);
    if (int64_t(ibytes.size()) != 16 + n * rows * cols ||
        int64_t(lbytes.size()) != 8 + n) {
        throw std::runtime_error("load_dataset: truncated IDX files");
    }
    auto images = torch::from_blob(const_cast<std::uint8_t*>(ibytes.data() + 16),
                                   {n, 1, rows, cols}, torch::kUInt8)
                      .clone()
                      .to(torch::kFloat32) /
                  255.0f;
    images = images.repeat({1, 3, 1, 1});
    auto labels = torch::from_blob(const_cast<std::uint8_t*>(lbytes.data() + 8),
                                   {n}, torch::kUInt8)
                      .clone()
                      .to(torch::kInt64);
    return {images, labels, 10};
}

// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes.
Dataset load_cifar_files(const fs::path& raw,
                         const std::vector<std::string>& files) {
    std::vector<torch::Tensor> image_parts;
    std::vector<torch::Tensor> label_parts;
    for (const auto& name : files) {
        const auto bytes = read_file_bytes((raw / name).string());
        constexpr int64_t record = 1 + 3 * 32 * 32;
        if (bytes.empty() || bytes.size() % record != 0) {
            throw std::runtime_error("load_dataset: bad CIFAR batch size in " +
                                     name);
        }
        const int64_t n = int64_t(bytes.size()) / record;
        auto raw_t = torch::from_blob(const_cast<std::uint8_t*>(bytes.data()),
                                      {n, record}, torch::kUInt8)
                         .clone();
        label_parts.push_back(raw_t.narrow(1, 0, 1).squeeze(1).to(torch::kInt64));
        image_parts.push_back(raw_t.narrow(1, 1, record - 1)
                                  .reshape({n, 3, 32, 32})
                                  .to(torch::kFloat32) /
                              255.0f);
    }
    return {torch::cat(image_parts), torch::cat(label_parts), 10};
}

} // namespace

CleanSubsets draw_clean_subsets(int64_t train_size, double vae_train_fraction,
                                double vae_test_fraction,
                                double elimination_fraction, int64_t seed) {
    TORCH_CHECK(vae_train_fraction > 0 && vae_test_fraction > 0,
                "draw_clean_subsets: fractions must be positive");
    TORCH_CHECK(vae_train_fraction + vae_test_fraction +
                        elimination_fraction <= 1.0 + 1e-12,
                "draw_clean_subsets: fractions exceed the clean pool");
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(seed));
    auto perm = torch::randperm(train_size, gen, torch::kInt64);
    const int64_t n1 = int64_t(vae_train_fraction * double(train_size));
    const int64_t n2 = int64_t(vae_test_fraction * double(train_size));
    const int64_t ne = int64_t(elimination_fraction * double(train_size));
    return {perm.narrow(0, 0, n1), perm.narrow(0, n1, n2),
            perm.narrow(0, n1 + n2, ne)};
}

torch::Tensor augment_images(const torch::Tensor& images,
                             torch::Generator& gen) {
    const int64_t n = images.size(0);
    auto hflip = torch::rand({n}, gen) < 0.33;
    auto vflip = torch::rand({n}, gen) < 0.33;
    auto out = images.clone();
    out.index_put_({hflip}, out.index({hflip}).flip({-1}));
    out.index_put_({vflip}, out.index({vflip}).flip({-2}));
    return out;
}

LabeledSample augment(const LabeledSample& sample, int64_t seed) {
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(seed));
    auto batched = sample.image.unsqueeze(0);
    return {augment_images(batched, gen).squeeze(0), sample.label};
}

DatasetSplit load_dataset(const std::string& name, int64_t image_size,
                          int64_t seed, const std::string& data_dir,
                          int64_t train_count, int64_t test_count) {
    TORCH_CHECK(image_size >= 16, "load_dataset: image_size must be >= 16");
    TORCH_CHECK(train_count >= 0 && test_count >= 0,
                "load_dataset: negative sample count");
    DatasetSplit split;
    if (name == "synth10") {
        // Seeded procedural rendering; train and test use disjoint seed
        // streams so the two sets never share a sample.
        split.train = make_synth10(seed * 2 + 1,
                                   train_count > 0 ? train_count : 4096,
                                   image_size);
        split.test = make_synth10(seed * 2 + 2,
                                  test_count > 0 ? test_count : 1024,
                                  image_size);
        return split;
    }

    const fs::path dataset_dir = fs::path(data_dir) / name;
    if (name == "cifar10") {
        const std::vector<std::string> train_files = {
            "data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
            "data_batch_4.bin", "data_batch_5.bin"};
        const std::vector<std::string> test_files = {"test_batch.bin"};
        auto all = train_files;
        all.insert(all.end(), test_files.begin(), test_files.end());
        pin_or_verify_checksums(dataset_dir, all);
        split.train = load_cifar_files(dataset_dir / "raw", train_files);
        split.test = load_cifar_files(dataset_dir / "raw", test_files);
    } else if (name == "mnist-rgb") {
        const std::vector<std::string> files = {
            "train-images-idx3-ubyte", "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
        pin_or_verify_checksums(dataset_dir, files);
        split.train = load_idx_pair(dataset_dir / "raw", files[0], files[1]);
        split.test = load_idx_pair(dataset_dir / "raw", files[2], files[3]);
    } else {
        throw std::runtime_error("load_dataset: unknown dataset id '" + name +
                                 "'");
    }
    split.train.images = resize_images(split.train.images, image_size);
    split.test.images = resize_images(split.test.images, image_size);

    // A seeded shuffle fixes sample order so downstream subset draws are
    // reproducible for a given (name, image_size, seed).
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(
        static_cast<uint64_t>(seed));
    auto perm = torch::randperm(split.train.size(), gen, torch::kInt64);
    split.train = split.train.index(perm);
    if (train_count > 0 && train_count < split.train.size()) {
        split.train = split.train.index(
            torch::arange(train_count, torch::kInt64));
    }
    if (test_count > 0 && test_count < split.test.size()) {
        split.test =
            split.test.index(torch::arange(test_count, torch::kInt64));
    }
    return split;
}

} // namespace bdt
