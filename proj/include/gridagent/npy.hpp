#pragma once

// Minimal NPY (numpy array file) reader/writer for the dtypes this project
// stores: '|u1' observation stacks and '<f8' dense arrays.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridagent::npy {

inline std::string shape_tuple(const std::vector<int64_t>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (i + 1 < shape.size() || shape.size() == 1) s += ",";
        if (i + 1 < shape.size()) s += " ";
    }
    s += ")";
    return s;
}

inline void write_header(std::ofstream& out, const std::string& descr, const std::vector<int64_t>& shape) {
    std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + shape_tuple(shape) + ", }";
    size_t unpadded = 10 + dict.size() + 1;
    size_t padded = (unpadded + 63) / 64 * 64;
    dict.append(padded - unpadded, ' ');
    dict.push_back('\n');
    out.write("\x93NUMPY\x01\x00", 8);
    uint16_t hlen = static_cast<uint16_t>(dict.size());
    out.write(reinterpret_cast<const char*>(&hlen), 2);
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
}

template <typename T>
inline const char* dtype_descr();
template <>
inline const char* dtype_descr<uint8_t>() { return "|u1"; }
template <>
inline const char* dtype_descr<double>() { return "<f8"; }

template <typename T>
void save(const std::filesystem::path& path, const std::vector<T>& data, const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != static_cast<int64_t>(data.size())) throw std::runtime_error("npy::save: shape/data mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("npy::save: cannot open " + path.string());
    write_header(out, dtype_descr<T>(), shape);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!out) throw std::runtime_error("npy::save: write failed " + path.string());
}

template <typename T>
void load(const std::filesystem::path& path, std::vector<T>& data, std::vector<int64_t>& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("npy::load: cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw std::runtime_error("npy::load: bad magic");
    uint16_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 2);
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);
    if (header.find(dtype_descr<T>()) == std::string::npos) throw std::runtime_error("npy::load: dtype mismatch");
    if (header.find("'fortran_order': False") == std::string::npos)
        throw std::runtime_error("npy::load: fortran order unsupported");
    size_t lp = header.find('(');
    size_t rp = header.find(')', lp);
    if (lp == std::string::npos || rp == std::string::npos) throw std::runtime_error("npy::load: bad shape");
    shape.clear();
    std::string tup = header.substr(lp + 1, rp - lp - 1);
    size_t pos = 0;
    while (pos < tup.size()) {
        while (pos < tup.size() && (tup[pos] == ' ' || tup[pos] == ',')) ++pos;
        if (pos >= tup.size()) break;
        size_t end = pos;
        while (end < tup.size() && tup[end] != ',' && tup[end] != ' ') ++end;
        shape.push_back(std::stoll(tup.substr(pos, end - pos)));
        pos = end;
    }
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    data.resize(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!in) throw std::runtime_error("npy::load: truncated data");
}

}  // namespace gridagent::npy
