#include "gridagent/agent/encoders.hpp"

#include <algorithm>
#include <stdexcept>

namespace gridagent {

using nn::Graph;
using nn::Var;

LanguageEncoderParams LanguageEncoderParams::create(nn::ParameterStore& store,
                                                    const std::string& prefix, int vocab,
                                                    int embed_dim, int hidden, Rng& rng) {
    LanguageEncoderParams p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    p.token_table = &store.create(prefix + ".tokens", {vocab, embed_dim}, bound, rng);
    p.fwd = nn::LstmParams::create(store, prefix + ".fwd", embed_dim, hidden, rng);
    p.bwd = nn::LstmParams::create(store, prefix + ".bwd", embed_dim, hidden, rng);
    p.embed_dim = embed_dim;
    p.hidden = hidden;
    return p;
}

LanguageEncoderParams LanguageEncoderParams::bind(nn::ParameterStore& store,
                                                  const std::string& prefix, int hidden) {
    LanguageEncoderParams p;
    p.token_table = store.find(prefix + ".tokens");
    if (!p.token_table) throw std::runtime_error("missing parameter: " + prefix + ".tokens");
    p.fwd = nn::LstmParams::bind(store, prefix + ".fwd", hidden);
    p.bwd = nn::LstmParams::bind(store, prefix + ".bwd", hidden);
    p.embed_dim = p.token_table->value.dim(1);
    p.hidden = hidden;
    return p;
}

TokenFeatures encode_language(Graph& g, const LanguageEncoderParams& params,
                              const std::vector<int>& token_ids) {
    if (token_ids.empty()) throw std::invalid_argument("encode_language: empty sequence");
    const int V = params.token_table->value.dim(0);
    for (int id : token_ids)
        if (id < 0 || id >= V) throw std::invalid_argument("encode_language: id out of vocabulary");

    const int T = static_cast<int>(token_ids.size());
    std::vector<Var> embeds(T);
    for (int t = 0; t < T; ++t) embeds[t] = g.embedding_row(*params.token_table, token_ids[t]);

    std::vector<Var> fwd_h(T), bwd_h(T);
    nn::LstmState s = nn::lstm_init(g, params.hidden);
    for (int t = 0; t < T; ++t) {
        s = nn::lstm_step(g, params.fwd, embeds[t], s);
        fwd_h[t] = s.h;
    }
    s = nn::lstm_init(g, params.hidden);
    for (int t = T - 1; t >= 0; --t) {
        s = nn::lstm_step(g, params.bwd, embeds[t], s);
        bwd_h[t] = s.h;
    }

    std::vector<Var> rows(T);
    for (int t = 0; t < T; ++t) rows[t] = g.concat({fwd_h[t], bwd_h[t]});

    TokenFeatures out;
    out.features = g.stack_rows(rows);
    out.valid.assign(T, 1);
    return out;
}

AttentionParams AttentionParams::create(nn::ParameterStore& store, const std::string& prefix,
                                        int query_dim, int feature_dim, Rng& rng) {
    AttentionParams p;
    p.query_proj = nn::LinearParams::create(store, prefix + ".proj", query_dim, feature_dim, rng);
    return p;
}

AttentionParams AttentionParams::bind(nn::ParameterStore& store, const std::string& prefix) {
    AttentionParams p;
    p.query_proj = nn::LinearParams::bind(store, prefix + ".proj");
    return p;
}

AttendedLanguage attend(Graph& g, const AttentionParams& params, const TokenFeatures& tokens,
                        Var query) {
    Var proj = apply_linear(g, params.query_proj, query);
    Var scores = g.linear(tokens.features, proj);  // (T)
    Var weights = g.masked_softmax(scores, tokens.valid);
    AttendedLanguage out;
    out.weights = weights;
    out.vector = g.weighted_sum_rows(tokens.features, weights);
    return out;
}

VisualEncoderParams VisualEncoderParams::create(nn::ParameterStore& store, const std::string& prefix,
                                                int in_channels, int features, Rng& rng) {
    VisualEncoderParams p;
    auto conv = [&](const std::string& name, int cin, int cout) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * 9);
        return std::pair{&store.create(name + ".w", {cout, cin, 3, 3}, bound, rng),
                         &store.create(name + ".b", {cout}, bound, rng)};
    };
    const int mid = std::max(1, features / 2);
    auto [w1, b1] = conv(prefix + ".conv1", in_channels, mid);
    auto [w2, b2] = conv(prefix + ".conv2", mid, features);
    auto [w3, b3] = conv(prefix + ".conv3", features, features);
    p.w1 = w1;
    p.b1 = b1;
    p.w2 = w2;
    p.b2 = b2;
    p.w3 = w3;
    p.b3 = b3;
    return p;
}

VisualEncoderParams VisualEncoderParams::bind(nn::ParameterStore& store, const std::string& prefix) {
    VisualEncoderParams p;
    p.w1 = store.find(prefix + ".conv1.w");
    p.b1 = store.find(prefix + ".conv1.b");
    p.w2 = store.find(prefix + ".conv2.w");
    p.b2 = store.find(prefix + ".conv2.b");
    p.w3 = store.find(prefix + ".conv3.w");
    p.b3 = store.find(prefix + ".conv3.b");
    if (!p.w1 || !p.b1 || !p.w2 || !p.b2 || !p.w3 || !p.b3)
        throw std::runtime_error("missing parameter: " + prefix);
    return p;
}

nn::Tensor observation_tensor(const Observation& obs) {
    nn::Tensor t;
    t.shape = {obs.channels, obs.height, obs.width};
    t.data = obs.data;
    return t;
}

Var encode_frame(Graph& g, const VisualEncoderParams& params, const Observation& obs) {
    if (obs.channels != params.w1->value.dim(1))
        throw std::invalid_argument("encode_frame: channel count mismatch");
    Var x = g.input(observation_tensor(obs));
    x = g.relu(g.conv2d(x, g.use(*params.w1), g.use(*params.b1), 2, 1));
    x = g.relu(g.conv2d(x, g.use(*params.w2), g.use(*params.b2), 2, 1));
    x = g.relu(g.conv2d(x, g.use(*params.w3), g.use(*params.b3), 1, 1));
    return x;
}

ActionEmbeddingParams ActionEmbeddingParams::create(nn::ParameterStore& store,
                                                    const std::string& prefix, int dim, Rng& rng) {
    ActionEmbeddingParams p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    p.table = &store.create(prefix + ".table", {kNumActions + 1, dim}, bound, rng);
    return p;
}

ActionEmbeddingParams ActionEmbeddingParams::bind(nn::ParameterStore& store,
                                                  const std::string& prefix) {
    ActionEmbeddingParams p;
    p.table = store.find(prefix + ".table");
    if (!p.table) throw std::runtime_error("missing parameter: " + prefix + ".table");
    return p;
}

Var embed_action(Graph& g, const ActionEmbeddingParams& params, int action_row) {
    return g.embedding_row(*params.table, action_row);
}

}  // namespace gridagent
