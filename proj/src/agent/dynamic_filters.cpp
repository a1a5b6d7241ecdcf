#include "gridagent/agent/dynamic_filters.hpp"

#include <stdexcept>

namespace gridagent {

using nn::Graph;
using nn::Tensor;
using nn::Var;

DynamicFilterParams DynamicFilterParams::create(nn::ParameterStore& store, const std::string& prefix,
                                                int lang_dim, int n_filters, int features, int kernel,
                                                Rng& rng) {
    DynamicFilterParams p;
    p.n_filters = n_filters;
    p.features = features;
    p.kernel = kernel;
    for (int i = 0; i < n_filters; ++i)
        p.generators.push_back(nn::LinearParams::create(
            store, prefix + ".gen" + std::to_string(i), lang_dim, features * kernel * kernel, rng));
    return p;
}

DynamicFilterParams DynamicFilterParams::bind(nn::ParameterStore& store, const std::string& prefix,
                                              int n_filters, int features, int kernel) {
    DynamicFilterParams p;
    p.n_filters = n_filters;
    p.features = features;
    p.kernel = kernel;
    for (int i = 0; i < n_filters; ++i)
        p.generators.push_back(nn::LinearParams::bind(store, prefix + ".gen" + std::to_string(i)));
    return p;
}

Var generate_bank(Graph& g, const DynamicFilterParams& params, Var attended_language) {
    std::vector<Var> kernels;
    for (const auto& gen : params.generators) kernels.push_back(apply_linear(g, gen, attended_language));
    Var flat = g.concat(kernels);
    return g.reshape(flat, {params.n_filters, params.features, params.kernel, params.kernel});
}

Var apply_bank(Graph& g, Var visual, Var bank) {
    const Tensor& tb = g.value(bank);
    const Tensor& tv = g.value(visual);
    if (tb.dim(1) != tv.dim(0)) throw std::invalid_argument("apply_bank: channel mismatch");
    const int k = tb.dim(2);
    Var maps = g.conv2d(visual, bank, {}, 1, k / 2);  // (N_DF, h, w)
    return g.reshape(maps, {g.value(maps).numel()});
}

FilterBank generate_filters(const DynamicFilterParams& params, const Tensor& attended_language,
                            const std::string& stream, int step) {
    FilterBank bank;
    bank.stream = stream;
    bank.step = step;
    bank.kernels = Tensor::zeros({params.n_filters, params.features, params.kernel, params.kernel});
    const int per = params.features * params.kernel * params.kernel;
    for (int i = 0; i < params.n_filters; ++i) {
        const auto& gen = params.generators[i];
        nn::kernels::matvec(gen.W->value.data.data(), attended_language.data.data(),
                            gen.b ? gen.b->value.data.data() : nullptr,
                            bank.kernels.data.data() + static_cast<size_t>(i) * per, per,
                            attended_language.numel());
    }
    return bank;
}

Tensor apply_filters(const Tensor& visual, const FilterBank& bank) {
    const int F = visual.dim(0), H = visual.dim(1), W = visual.dim(2);
    if (bank.kernels.dim(1) != F) throw std::invalid_argument("apply_filters: channel mismatch");
    const int n = bank.kernels.dim(0);
    const int k = bank.kernels.dim(2);
    const int pad = k / 2;
    const int Ho = (H + 2 * pad - k) + 1;
    const int Wo = (W + 2 * pad - k) + 1;
    Tensor out = Tensor::zeros({n * Ho * Wo});
    nn::kernels::conv2d(visual.data.data(), bank.kernels.data.data(), nullptr, out.data.data(), F, H,
                        W, n, k, 1, pad, Ho, Wo);
    return out;
}

}  // namespace gridagent
