#pragma once

#include <cmath>
#include <string>

#include "gridagent/nn/graph.hpp"

namespace gridagent::nn {

struct LinearParams {
    Parameter* W = nullptr;
    Parameter* b = nullptr;

    static LinearParams create(ParameterStore& store, const std::string& prefix, int in, int out,
                               Rng& rng, bool bias = true) {
        LinearParams p;
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        p.W = &store.create(prefix + ".W", {out, in}, bound, rng);
        if (bias) p.b = &store.create(prefix + ".b", {out}, bound, rng);
        return p;
    }

    static LinearParams bind(ParameterStore& store, const std::string& prefix, bool bias = true) {
        LinearParams p;
        p.W = store.find(prefix + ".W");
        p.b = bias ? store.find(prefix + ".b") : nullptr;
        if (!p.W || (bias && !p.b)) throw std::runtime_error("missing parameter: " + prefix);
        return p;
    }
};

inline Var apply_linear(Graph& g, const LinearParams& p, Var x) {
    return g.linear(g.use(*p.W), x, p.b ? g.use(*p.b) : Var{});
}

// Gate layout: [input, forget, cell, output], each `hidden` wide.
struct LstmParams {
    Parameter* W_ih = nullptr;  // (4H, in)
    Parameter* W_hh = nullptr;  // (4H, H)
    Parameter* bias = nullptr;  // (4H)
    int hidden = 0;

    static LstmParams create(ParameterStore& store, const std::string& prefix, int in, int hidden,
                             Rng& rng) {
        LstmParams p;
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
        p.W_ih = &store.create(prefix + ".W_ih", {4 * hidden, in}, bound, rng);
        p.W_hh = &store.create(prefix + ".W_hh", {4 * hidden, hidden}, bound, rng);
        p.bias = &store.create(prefix + ".bias", {4 * hidden}, bound, rng);
        p.hidden = hidden;
        return p;
    }

    static LstmParams bind(ParameterStore& store, const std::string& prefix, int hidden) {
        LstmParams p;
        p.W_ih = store.find(prefix + ".W_ih");
        p.W_hh = store.find(prefix + ".W_hh");
        p.bias = store.find(prefix + ".bias");
        p.hidden = hidden;
        if (!p.W_ih || !p.W_hh || !p.bias) throw std::runtime_error("missing parameter: " + prefix);
        return p;
    }
};

struct LstmState {
    Var h;
    Var c;
};

inline LstmState lstm_init(Graph& g, int hidden) {
    return {g.zeros({hidden}), g.zeros({hidden})};
}

inline LstmState lstm_step(Graph& g, const LstmParams& p, Var x, const LstmState& prev) {
    const int H = p.hidden;
    Var gates = g.add(g.linear(g.use(*p.W_ih), x, g.use(*p.bias)), g.linear(g.use(*p.W_hh), prev.h));
    Var i = g.sigmoid(g.slice(gates, 0, H));
    Var f = g.sigmoid(g.slice(gates, H, H));
    Var cand = g.tanh_(g.slice(gates, 2 * H, H));
    Var o = g.sigmoid(g.slice(gates, 3 * H, H));
    Var c = g.add(g.mul(f, prev.c), g.mul(i, cand));
    Var h = g.mul(o, g.tanh_(c));
    return {h, c};
}

}  // namespace gridagent::nn
