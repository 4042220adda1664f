#include "bdt/common/image_io.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace bdt {

namespace {

void write_pnm(const std::string& path, const torch::Tensor& image,
               int64_t channels, const char* magic) {
    TORCH_CHECK(image.dim() == 3 && image.size(0) == channels,
                "write_pnm: expected ", channels, "xHxW tensor");
    auto img = image.detach().to(torch::kFloat32).clamp(0, 1).contiguous();
    const int64_t h = img.size(1);
    const int64_t w = img.size(2);
    auto bytes =
        (img * 255.0f).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("write_pnm: cannot open " + path);
    }
    out << magic << "\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data_ptr<std::uint8_t>()),
              std::streamsize(h * w * channels));
    if (!out) {
        throw std::runtime_error("write_pnm: short write to " + path);
    }
}

int next_token(std::istream& in) {
    // Skips whitespace and '#' comments per the PNM grammar.
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = 0;
    in >> value;
    return value;
}

torch::Tensor read_pnm(const std::string& path, int64_t channels,
                       const char* magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("read_pnm: cannot open " + path);
    }
    std::string header(2, '\0');
    in.read(header.data(), 2);
    if (header != magic) {
        throw std::runtime_error("read_pnm: " + path + " is not a " +
                                 std::string(magic) + " file");
    }
    const int w = next_token(in);
    const int h = next_token(in);
    const int maxval = next_token(in);
    if (w <= 0 || h <= 0 || maxval != 255) {
        throw std::runtime_error("read_pnm: unsupported header in " + path);
    }
    in.get(); // single whitespace before raster

    std::vector<std::uint8_t> raw(std::size_t(w) * h * channels);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size()) {
        throw std::runtime_error("read_pnm: truncated raster in " + path);
    }
    auto t = torch::from_blob(raw.data(), {h, w, channels}, torch::kUInt8)
                 .clone()
                 .permute({2, 0, 1})
                 .to(torch::kFloat32) /
             255.0f;
    return t.contiguous();
}

} // namespace

void write_ppm(const std::string& path, const torch::Tensor& image_chw) {
    write_pnm(path, image_chw, 3, "P6");
}

torch::Tensor read_ppm(const std::string& path) {
    return read_pnm(path, 3, "P6");
}

void write_pgm(const std::string& path, const torch::Tensor& image_1hw) {
    write_pnm(path, image_1hw, 1, "P5");
}

torch::Tensor read_pgm(const std::string& path) {
    return read_pnm(path, 1, "P5");
}

torch::Tensor read_image(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0) {
        return read_pgm(path);
    }
    return read_ppm(path);
}

} // namespace bdt
