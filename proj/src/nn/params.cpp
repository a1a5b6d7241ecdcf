#include "gridagent/nn/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gridagent::nn {

Parameter& ParameterStore::create(const std::string& name, std::vector<int> shape, double init_bound,
                                  Rng& rng) {
    if (find(name)) throw std::logic_error("duplicate parameter: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor::zeros(shape);
    for (auto& v : p->value.data) v = rng.next_double(-init_bound, init_bound);
    p->grad = Tensor::zeros(shape);
    p->adam_m = Tensor::zeros(shape);
    p->adam_v = Tensor::zeros(std::move(shape));
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParameterStore::create_zeros(const std::string& name, std::vector<int> shape) {
    if (find(name)) throw std::logic_error("duplicate parameter: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor::zeros(shape);
    p->grad = Tensor::zeros(shape);
    p->adam_m = Tensor::zeros(shape);
    p->adam_v = Tensor::zeros(std::move(shape));
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

size_t ParameterStore::parameter_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p->value.data.size();
    return n;
}

void ParameterStore::zero_grads() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void ParameterStore::adam_step(double lr, double beta1, double beta2, double eps) {
    step_count_ += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
    for (auto& p : params_) {
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = p->grad.data[i];
            p->adam_m.data[i] = beta1 * p->adam_m.data[i] + (1.0 - beta1) * g;
            p->adam_v.data[i] = beta2 * p->adam_v.data[i] + (1.0 - beta2) * g * g;
            const double mhat = p->adam_m.data[i] / bc1;
            const double vhat = p->adam_v.data[i] / bc2;
            p->value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

bool ParameterStore::grads_finite() const {
    for (const auto& p : params_)
        for (double g : p->grad.data)
            if (!std::isfinite(g)) return false;
    return true;
}

uint64_t ParameterStore::value_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params_) {
        h = fnv1a64(p->name, h);
        h = fnv1a64_bytes(p->value.data.data(), p->value.data.size() * sizeof(double), h);
    }
    return h;
}

namespace {
constexpr char kMagic[8] = {'G', 'A', 'P', 'A', 'R', 'M', '0', '1'};
}

void ParameterStore::save(const std::filesystem::path& path, const json& extras) const {
    json header;
    header["extras"] = extras;
    header["step_count"] = step_count_;
    json arrays = json::array();
    for (const auto& p : params_) arrays.push_back({{"name", p->name}, {"shape", p->value.shape}});
    header["arrays"] = arrays;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, 8);
    uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& p : params_) {
        out.write(reinterpret_cast<const char*>(p->value.data.data()),
                  static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(p->adam_m.data.data()),
                  static_cast<std::streamsize>(p->adam_m.data.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(p->adam_v.data.data()),
                  static_cast<std::streamsize>(p->adam_v.data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

json ParameterStore::load(const std::filesystem::path& path, ParameterStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path.string());
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(hs);

    store.params_.clear();
    store.step_count_ = header["step_count"].get<int64_t>();
    for (const auto& a : header["arrays"]) {
        auto p = std::make_unique<Parameter>();
        p->name = a["name"].get<std::string>();
        std::vector<int> shape = a["shape"].get<std::vector<int>>();
        p->value = Tensor::zeros(shape);
        p->grad = Tensor::zeros(shape);
        p->adam_m = Tensor::zeros(shape);
        p->adam_v = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(p->value.data.data()),
                static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(p->adam_m.data.data()),
                static_cast<std::streamsize>(p->adam_m.data.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(p->adam_v.data.data()),
                static_cast<std::streamsize>(p->adam_v.data.size() * sizeof(double)));
        store.params_.push_back(std::move(p));
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    return header["extras"];
}

}  // namespace gridagent::nn
