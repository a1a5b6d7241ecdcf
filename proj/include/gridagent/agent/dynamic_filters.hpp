#pragma once

// Language-guided dynamic filters: per-stream fully-connected generators map
// an attended language vector to a bank of convolution kernels, which are
// applied to the visual feature map and flattened for the decoder.

#include "gridagent/nn/modules.hpp"

namespace gridagent {

struct FilterBank {
    std::string stream;   // provenance: which stream generated it
    int step = -1;        // provenance: episode step of the language vector
    nn::Tensor kernels;   // (N_DF, F, k, k)
};

struct DynamicFilterParams {
    std::vector<nn::LinearParams> generators;  // one independent FC per filter
    int n_filters = 0;
    int features = 0;  // F, kernel input channels
    int kernel = 1;    // k

    static DynamicFilterParams create(nn::ParameterStore& store, const std::string& prefix,
                                      int lang_dim, int n_filters, int features, int kernel,
                                      Rng& rng);
    static DynamicFilterParams bind(nn::ParameterStore& store, const std::string& prefix,
                                    int n_filters, int features, int kernel);
};

// Graph path (differentiable): bank as a (N_DF, F, k, k) value.
nn::Var generate_bank(nn::Graph& g, const DynamicFilterParams& params, nn::Var attended_language);

// Convolves every kernel with v (F,h,w), concatenates the N_DF response maps
// and flattens to a vector of length N_DF*h*w.
nn::Var apply_bank(nn::Graph& g, nn::Var visual, nn::Var bank);

// Plain-tensor path used at inference logging and in tests; same kernels as
// the graph path.
FilterBank generate_filters(const DynamicFilterParams& params, const nn::Tensor& attended_language,
                            const std::string& stream, int step);
nn::Tensor apply_filters(const nn::Tensor& visual, const FilterBank& bank);

}  // namespace gridagent
