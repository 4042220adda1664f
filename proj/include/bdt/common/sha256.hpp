#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace bdt {

// Incremental SHA-256 (FIPS 180-4). Used for config hashes, dataset
// checksums, and frozen-weight immutability checks.
class Sha256 {
public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, std::size_t len);
    // Finalizes and returns the digest as lowercase hex. The object must be
    // reset() before further use.
    std::string hex_digest();

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t state_[8];
    std::uint64_t bit_count_ = 0;
    std::uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file_hex(const std::string& path);

} // namespace bdt
