#include "bdt/data/loaders.hpp"

// c10's logging shim defines a glog-style CHECK; doctest owns the name here.
#undef CHECK
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>

using namespace bdt;
namespace fs = std::filesystem;

namespace {

fs::path fixture_root() {
    auto root = fs::temp_directory_path() / "bdt_data_fixtures";
    fs::create_directories(root);
    return root;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
}

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(std::uint8_t(x >> 24));
    v.push_back(std::uint8_t(x >> 16));
    v.push_back(std::uint8_t(x >> 8));
    v.push_back(std::uint8_t(x));
}

// Four 8x8 grayscale images with labels 0..3 in IDX format.
void make_mnist_fixture(const fs::path& dir) {
    fs::create_directories(dir / "raw");
    for (const auto prefix : {"train", "t10k"}) {
        std::vector<std::uint8_t> images;
        push_be32(images, 2051);
        push_be32(images, 4);
        push_be32(images, 8);
        push_be32(images, 8);
        for (int i = 0; i < 4 * 64; ++i) {
            images.push_back(std::uint8_t((i * 7 + 13) % 256));
        }
        std::vector<std::uint8_t> labels;
        push_be32(labels, 2049);
        push_be32(labels, 4);
        for (std::uint8_t l = 0; l < 4; ++l) labels.push_back(l);
        write_bytes(dir / "raw" / (std::string(prefix) + "-images-idx3-ubyte"),
                    images);
        write_bytes(dir / "raw" / (std::string(prefix) + "-labels-idx1-ubyte"),
                    labels);
    }
}

// Two records per batch file: 1 label byte + 3072 pixel bytes.
void make_cifar_fixture(const fs::path& dir) {
    fs::create_directories(dir / "raw");
    const std::vector<std::string> names = {
        "data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
        "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"};
    int salt = 0;
    for (const auto& name : names) {
        std::vector<std::uint8_t> bytes;
        for (int rec = 0; rec < 2; ++rec) {
            bytes.push_back(std::uint8_t((salt + rec) % 10));
            for (int i = 0; i < 3072; ++i) {
                bytes.push_back(std::uint8_t((i + salt) % 256));
            }
        }
        write_bytes(dir / "raw" / name, bytes);
        ++salt;
    }
}

} // namespace

TEST_CASE("synth10 is deterministic, bounded, and class-complete") {
    auto a = make_synth10(42, 300, 32);
    auto b = make_synth10(42, 300, 32);
    CHECK(torch::equal(a.images, b.images));
    CHECK(torch::equal(a.labels, b.labels));

    CHECK(a.images.sizes() == torch::IntArrayRef({300, 3, 32, 32}));
    CHECK(a.images.min().item<double>() >= 0.0);
    CHECK(a.images.max().item<double>() <= 1.0);
    for (int64_t c = 0; c < 10; ++c) {
        CHECK((a.labels == c).sum().item<int64_t>() > 0);
    }

    auto c = make_synth10(43, 300, 32);
    CHECK_FALSE(torch::equal(a.images, c.images));
}

TEST_CASE("load_dataset synth10 honors default and custom counts") {
    auto split = load_dataset("synth10", 32, 0, "unused", 128, 64);
    CHECK(split.train.size() == 128);
    CHECK(split.test.size() == 64);

    // same seed -> same data; train/test streams disjoint by construction
    auto again = load_dataset("synth10", 32, 0, "unused", 128, 64);
    CHECK(torch::equal(split.train.images, again.train.images));
    CHECK_FALSE(torch::equal(split.train.images.narrow(0, 0, 64),
                             split.test.images));
    CHECK_THROWS(load_dataset("nope", 32, 0));
}

TEST_CASE("mnist-rgb loader replicates channels and pins checksums") {
    const auto root = fixture_root() / "mnist_case";
    fs::remove_all(root);
    make_mnist_fixture(root / "mnist-rgb");

    auto split = load_dataset("mnist-rgb", 16, 1, root.string());
    CHECK(split.train.size() == 4);
    CHECK(split.test.size() == 4);
    CHECK(split.train.images.sizes() == torch::IntArrayRef({4, 3, 16, 16}));
    // replicated grayscale: all three channels identical
    CHECK((split.train.images.select(1, 0) - split.train.images.select(1, 2))
              .abs()
              .max()
              .item<double>() == 0.0);
    CHECK(fs::exists(root / "mnist-rgb" / "checksums.json"));

    // corrupting a pinned file must fail the next load
    {
        std::ofstream out(root / "mnist-rgb" / "raw" / "t10k-labels-idx1-ubyte",
                          std::ios::binary | std::ios::app);
        out << 'x';
    }
    CHECK_THROWS_WITH_AS(load_dataset("mnist-rgb", 16, 1, root.string()),
                         doctest::Contains("checksum mismatch"),
                         std::runtime_error);
}

TEST_CASE("cifar10 loader parses records and truncation is detected") {
    const auto root = fixture_root() / "cifar_case";
    fs::remove_all(root);
    make_cifar_fixture(root / "cifar10");

    auto split = load_dataset("cifar10", 32, 3, root.string());
    CHECK(split.train.size() == 10);
    CHECK(split.test.size() == 2);
    CHECK(split.train.images.max().item<double>() <= 1.0);
    CHECK(split.train.labels.max().item<int64_t>() <= 9);

    // truncated file fails structurally even before the checksum pin
    fs::remove(root / "cifar10" / "checksums.json");
    auto path = root / "cifar10" / "raw" / "test_batch.bin";
    fs::resize_file(path, 100);
    CHECK_THROWS(load_dataset("cifar10", 32, 3, root.string()));
}

TEST_CASE("draw_clean_subsets yields disjoint deterministic pools") {
    auto a = draw_clean_subsets(1000, 0.15, 0.05, 0.15, 9);
    auto b = draw_clean_subsets(1000, 0.15, 0.05, 0.15, 9);
    CHECK(torch::equal(a.vae_train, b.vae_train));
    CHECK(torch::equal(a.elimination, b.elimination));

    CHECK(a.vae_train.numel() == 150);
    CHECK(a.vae_test.numel() == 50);
    CHECK(a.elimination.numel() == 150);

    auto all = torch::cat({a.vae_train, a.vae_test, a.elimination});
    CHECK(std::get<0>(torch::unique_dim(all, 0)).numel() == all.numel());
    CHECK_THROWS(draw_clean_subsets(100, 0.5, 0.4, 0.2, 0));
}

TEST_CASE("augmentation only flips: per-sample pixel multisets survive") {
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(7);
    auto images = torch::rand({40, 3, 8, 8});
    auto out = augment_images(images, gen);
    CHECK(out.sizes() == images.sizes());
    auto sorted_in = std::get<0>(images.flatten(1).sort(1));
    auto sorted_out = std::get<0>(out.flatten(1).sort(1));
    CHECK(torch::equal(sorted_in, sorted_out));

    // deterministic under the same generator state
    auto gen2 = torch::make_generator<torch::CPUGeneratorImpl>(7);
    auto out2 = augment_images(images, gen2);
    CHECK(torch::equal(out, out2));

    // some sample must flip and some must not at p = 0.33 each
    auto changed = (out != images).flatten(1).any(1);
    CHECK(changed.any().item<bool>());
    CHECK_FALSE(changed.all().item<bool>());

    LabeledSample s{images[0], 3};
    auto aug = augment(s, 11);
    CHECK(aug.label == 3);
    CHECK(torch::equal(std::get<0>(aug.image.flatten(0).sort(0)),
                       std::get<0>(s.image.flatten(0).sort(0))));
}
