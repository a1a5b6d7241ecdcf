#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridagent {

using json = nlohmann::ordered_json;

// Run-length encoding of a binary mask over its flat row-major layout.
// Encoded as [start0, len0, start1, len1, ...] with runs of ones.
inline std::vector<int> rle_encode(const std::vector<uint8_t>& mask) {
    std::vector<int> runs;
    size_t i = 0;
    while (i < mask.size()) {
        if (mask[i]) {
            size_t start = i;
            while (i < mask.size() && mask[i]) ++i;
            runs.push_back(static_cast<int>(start));
            runs.push_back(static_cast<int>(i - start));
        } else {
            ++i;
        }
    }
    return runs;
}

inline std::vector<uint8_t> rle_decode(const std::vector<int>& runs, size_t size) {
    std::vector<uint8_t> mask(size, 0);
    for (size_t r = 0; r + 1 < runs.size(); r += 2) {
        int start = runs[r];
        int len = runs[r + 1];
        for (int k = 0; k < len; ++k) {
            size_t idx = static_cast<size_t>(start + k);
            if (idx >= size) throw std::runtime_error("rle_decode: run exceeds mask size");
            mask[idx] = 1;
        }
    }
    return mask;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline uint64_t file_hash(const std::filesystem::path& path);

}  // namespace gridagent

#include "gridagent/rng.hpp"

namespace gridagent {

inline uint64_t file_hash(const std::filesystem::path& path) {
    std::string bytes = read_file(path);
    return fnv1a64_bytes(bytes.data(), bytes.size());
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace gridagent
