#pragma once

// Language encoding (bidirectional LSTM over token embeddings) with per-stream
// soft attention, the shared visual feature extractor, and the previous-action
// embedding table.

#include "gridagent/gridworld.hpp"
#include "gridagent/nn/modules.hpp"

namespace gridagent {

// Per-token features of one encoded sequence plus its padding mask.
struct TokenFeatures {
    nn::Var features;          // (T, 2L)
    std::vector<uint8_t> valid;  // attention never puts weight on invalid rows
};

struct AttendedLanguage {
    nn::Var vector;   // (2L)
    nn::Var weights;  // (T), nonnegative, sums to 1 over valid rows
};

struct LanguageEncoderParams {
    nn::Parameter* token_table = nullptr;  // (V, E)
    nn::LstmParams fwd;
    nn::LstmParams bwd;
    int embed_dim = 0;
    int hidden = 0;

    static LanguageEncoderParams create(nn::ParameterStore& store, const std::string& prefix,
                                        int vocab, int embed_dim, int hidden, Rng& rng);
    static LanguageEncoderParams bind(nn::ParameterStore& store, const std::string& prefix,
                                      int hidden);
};

// Throws on out-of-vocabulary ids. The valid mask is all-ones here; callers
// zeroing a language source flip rows off or zero the features.
TokenFeatures encode_language(nn::Graph& g, const LanguageEncoderParams& params,
                              const std::vector<int>& token_ids);

struct AttentionParams {
    nn::LinearParams query_proj;  // decoder hidden -> 2L

    static AttentionParams create(nn::ParameterStore& store, const std::string& prefix,
                                  int query_dim, int feature_dim, Rng& rng);
    static AttentionParams bind(nn::ParameterStore& store, const std::string& prefix);
};

// Dot-product attention: softmax((P q) . k_i) over valid tokens.
AttendedLanguage attend(nn::Graph& g, const AttentionParams& params, const TokenFeatures& tokens,
                        nn::Var query);

struct VisualEncoderParams {
    nn::Parameter* w1 = nullptr;
    nn::Parameter* b1 = nullptr;
    nn::Parameter* w2 = nullptr;
    nn::Parameter* b2 = nullptr;
    nn::Parameter* w3 = nullptr;
    nn::Parameter* b3 = nullptr;

    static VisualEncoderParams create(nn::ParameterStore& store, const std::string& prefix,
                                      int in_channels, int features, Rng& rng);
    static VisualEncoderParams bind(nn::ParameterStore& store, const std::string& prefix);
};

// Three 3x3 convolutions with stride schedule (2, 2, 1) and ReLU after each;
// 28x28 input gives a 7x7 feature map.
nn::Var encode_frame(nn::Graph& g, const VisualEncoderParams& params, const Observation& obs);

nn::Tensor observation_tensor(const Observation& obs);

struct ActionEmbeddingParams {
    nn::Parameter* table = nullptr;  // (kNumActions + 1, A): 13 actions + start sentinel

    static ActionEmbeddingParams create(nn::ParameterStore& store, const std::string& prefix, int dim,
                                        Rng& rng);
    static ActionEmbeddingParams bind(nn::ParameterStore& store, const std::string& prefix);
};

nn::Var embed_action(nn::Graph& g, const ActionEmbeddingParams& params, int action_row);

}  // namespace gridagent
