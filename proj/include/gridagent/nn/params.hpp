#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gridagent/nn/tensor.hpp"
#include "gridagent/rng.hpp"
#include "gridagent/util.hpp"

namespace gridagent::nn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
};

// Owns all trainable arrays in registration order. Registration order is the
// serialization order, so identical construction code plus identical seeds
// yields byte-identical checkpoints.
class ParameterStore {
public:
    Parameter& create(const std::string& name, std::vector<int> shape, double init_bound, Rng& rng);
    Parameter& create_zeros(const std::string& name, std::vector<int> shape);

    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
    size_t parameter_count() const;

    void zero_grads();
    // In-place Adam with bias correction; increments the step counter.
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t n) { step_count_ = n; }

    bool grads_finite() const;
    uint64_t value_hash() const;

    // Checkpoint layout: magic, little-endian u64 header length, JSON header
    // (array index + caller extras), then raw doubles per array in order.
    void save(const std::filesystem::path& path, const json& extras) const;
    static json load(const std::filesystem::path& path, ParameterStore& store);  // returns extras

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    int64_t step_count_ = 0;
};

}  // namespace gridagent::nn
