#include "gridagent/nn/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace gridagent::nn {

int Graph::push(Tensor value, std::function<void(Graph&)> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), false});
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::push(Tensor value, std::function<void(Graph&)> back, std::initializer_list<Var> parents) {
    bool needs = false;
    for (Var p : parents)
        if (p.valid() && nodes_[p.id].needs_grad) needs = true;
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), needs});
    return static_cast<int>(nodes_.size()) - 1;
}

Var Graph::input(Tensor v) { return {push(std::move(v), nullptr)}; }

Var Graph::use(Parameter& p) {
    for (const auto& [param, id] : param_nodes_)
        if (param == &p) return {id};
    int id = push(p.value, nullptr);
    nodes_[id].needs_grad = true;
    param_nodes_.emplace_back(&p, id);
    return {id};
}

Var Graph::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.data.size() != tb.data.size()) throw std::invalid_argument("add: size mismatch");
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    int ia = a.id, ib = b.id;
    return {push(std::move(out),
                 [ia, ib](Graph& g) {
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     if (g.needs_grad(ia)) {
                         Tensor& ga = g.g(ia);
                         for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
                     }
                     if (g.needs_grad(ib)) {
                         Tensor& gb = g.g(ib);
                         for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i];
                     }
                 },
                 {a, b})};
}

Var Graph::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.data.size() != tb.data.size()) throw std::invalid_argument("mul: size mismatch");
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    int ia = a.id, ib = b.id;
    return {push(std::move(out),
                 [ia, ib](Graph& g) {
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     const Tensor& va = g.nodes_[ia].value;
                     const Tensor& vb = g.nodes_[ib].value;
                     if (g.needs_grad(ia)) {
                         Tensor& ga = g.g(ia);
                         for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * vb.data[i];
                     }
                     if (g.needs_grad(ib)) {
                         Tensor& gb = g.g(ib);
                         for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i] * va.data[i];
                     }
                 },
                 {a, b})};
}

Var Graph::scale(Var a, double s) {
    Tensor out = value(a);
    for (auto& v : out.data) v *= s;
    int ia = a.id;
    return {push(std::move(out),
                 [ia, s](Graph& g) {
                     if (!g.needs_grad(ia)) return;
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     Tensor& ga = g.g(ia);
                     for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += s * go.data[i];
                 },
                 {a})};
}

Var Graph::concat(const std::vector<Var>& parts) {
    Tensor out;
    int total = 0;
    for (Var p : parts) total += value(p).numel();
    out.shape = {total};
    out.data.reserve(total);
    for (Var p : parts) {
        const Tensor& t = value(p);
        out.data.insert(out.data.end(), t.data.begin(), t.data.end());
    }
    std::vector<int> ids;
    bool needs = false;
    for (Var p : parts) {
        ids.push_back(p.id);
        needs = needs || nodes_[p.id].needs_grad;
    }
    int id = push(std::move(out), [ids](Graph& g) {
        const Tensor& go = g.nodes_[g.cur_].grad;
        size_t off = 0;
        for (int pid : ids) {
            const size_t n = g.nodes_[pid].value.data.size();
            if (g.needs_grad(pid)) {
                Tensor& gp = g.g(pid);
                for (size_t i = 0; i < n; ++i) gp.data[i] += go.data[off + i];
            }
            off += n;
        }
    });
    nodes_[id].needs_grad = needs;
    return {id};
}

Var Graph::slice(Var a, int offset, int len) {
    const Tensor& ta = value(a);
    Tensor out;
    out.shape = {len};
    out.data.assign(ta.data.begin() + offset, ta.data.begin() + offset + len);
    int ia = a.id;
    return {push(std::move(out),
                 [ia, offset, len](Graph& g) {
                     if (!g.needs_grad(ia)) return;
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     Tensor& ga = g.g(ia);
                     for (int i = 0; i < len; ++i) ga.data[offset + i] += go.data[i];
                 },
                 {a})};
}

Var Graph::reshape(Var a, std::vector<int> shape) {
    Tensor out = value(a);
    if (Tensor::count(shape) != out.numel()) throw std::invalid_argument("reshape: count mismatch");
    out.shape = std::move(shape);
    int ia = a.id;
    return {push(std::move(out),
                 [ia](Graph& g) {
                     if (!g.needs_grad(ia)) return;
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     Tensor& ga = g.g(ia);
                     for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
                 },
                 {a})};
}

Var Graph::sigmoid(Var a) {
    Tensor out = value(a);
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    int ia = a.id;
    return {push(std::move(out),
                 [ia](Graph& g) {
                     if (!g.needs_grad(ia)) return;
                     const int self = g.cur_;
                     const Tensor& go = g.nodes_[self].grad;
                     const Tensor& y = g.nodes_[self].value;
                     Tensor& ga = g.g(ia);
                     for (size_t i = 0; i < go.data.size(); ++i)
                         ga.data[i] += go.data[i] * y.data[i] * (1.0 - y.data[i]);
                 },
                 {a})};
}

Var Graph::tanh_(Var a) {
    Tensor out = value(a);
    for (auto& v : out.data) v = std::tanh(v);
    int ia = a.id;
    return {push(std::move(out),
                 [ia](Graph& g) {
                     if (!g.needs_grad(ia)) return;
                     const int self = g.cur_;
                     const Tensor& go = g.nodes_[self].grad;
                     const Tensor& y = g.nodes_[self].value;
                     Tensor& ga = g.g(ia);
                     for (size_t i = 0; i < go.data.size(); ++i)
                         ga.data[i] += go.data[i] * (1.0 - y.data[i] * y.data[i]);
                 },
                 {a})};
}

Var Graph::relu(Var a) {
    Tensor out = value(a);
    for (auto& v : out.data) v = v > 0 ? v : 0.0;
    int ia = a.id;
    return {push(std::move(out),
                 [ia](Graph& g) {
                     if (!g.needs_grad(ia)) return;
                     const int self = g.cur_;
                     const Tensor& go = g.nodes_[self].grad;
                     const Tensor& x = g.nodes_[ia].value;
                     Tensor& ga = g.g(ia);
                     for (size_t i = 0; i < go.data.size(); ++i)
                         if (x.data[i] > 0) ga.data[i] += go.data[i];
                 },
                 {a})};
}

Var Graph::dropout(Var a, double p, uint64_t key) {
    if (!training_ || p <= 0.0) return a;
    const Tensor& ta = value(a);
    std::vector<uint8_t> keep(ta.data.size());
    const double inv = 1.0 / (1.0 - p);
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double u = static_cast<double>(splitmix64(key + i) >> 11) * (1.0 / 9007199254740992.0);
        keep[i] = u >= p;
        out.data[i] = keep[i] ? out.data[i] * inv : 0.0;
    }
    int ia = a.id;
    return {push(std::move(out),
                 [ia, keep = std::move(keep), inv](Graph& g) {
                     if (!g.needs_grad(ia)) return;
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     Tensor& ga = g.g(ia);
                     for (size_t i = 0; i < go.data.size(); ++i)
                         if (keep[i]) ga.data[i] += go.data[i] * inv;
                 },
                 {a})};
}

Var Graph::linear(Var W, Var x, Var b) {
    const Tensor& tw = value(W);
    const Tensor& tx = value(x);
    if (tw.ndim() != 2 || tw.dim(1) != tx.numel()) throw std::invalid_argument("linear: shape mismatch");
    const int m = tw.dim(0), n = tw.dim(1);
    Tensor out = Tensor::zeros({m});
    kernels::matvec(tw.data.data(), tx.data.data(), b.valid() ? value(b).data.data() : nullptr,
                    out.data.data(), m, n);
    int iw = W.id, ix = x.id, ib = b.valid() ? b.id : -1;
    return {push(std::move(out),
                 [iw, ix, ib, m, n](Graph& g) {
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     if (g.needs_grad(ix))
                         kernels::matvec_bwd_x(g.nodes_[iw].value.data.data(), go.data.data(),
                                               g.g(ix).data.data(), m, n);
                     if (g.needs_grad(iw))
                         kernels::matvec_bwd_W(go.data.data(), g.nodes_[ix].value.data.data(),
                                               g.g(iw).data.data(),
                                               ib >= 0 && g.needs_grad(ib) ? g.g(ib).data.data()
                                                                           : nullptr,
                                               m, n);
                 },
                 {W, x, b})};
}

Var Graph::conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    if (tx.ndim() != 3 || tw.ndim() != 4 || tw.dim(1) != tx.dim(0))
        throw std::invalid_argument("conv2d: shape mismatch");
    const int C = tx.dim(0), H = tx.dim(1), W_ = tx.dim(2);
    const int O = tw.dim(0), k = tw.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W_ + 2 * pad - k) / stride + 1;
    Tensor out = Tensor::zeros({O, Ho, Wo});
    kernels::conv2d(tx.data.data(), tw.data.data(), b.valid() ? value(b).data.data() : nullptr,
                    out.data.data(), C, H, W_, O, k, stride, pad, Ho, Wo);
    int ix = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
    return {push(std::move(out),
                 [ix, iw, ib, C, H, W_, O, k, stride, pad, Ho, Wo](Graph& g) {
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     if (g.needs_grad(ix))
                         kernels::conv2d_bwd_input(g.nodes_[iw].value.data.data(), go.data.data(),
                                                   g.g(ix).data.data(), C, H, W_, O, k, stride, pad,
                                                   Ho, Wo);
                     if (g.needs_grad(iw))
                         kernels::conv2d_bwd_weight(g.nodes_[ix].value.data.data(), go.data.data(),
                                                    g.g(iw).data.data(),
                                                    ib >= 0 && g.needs_grad(ib)
                                                        ? g.g(ib).data.data()
                                                        : nullptr,
                                                    C, H, W_, O, k, stride, pad, Ho, Wo);
                 },
                 {x, w, b})};
}

Var Graph::conv_transpose2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    if (tx.ndim() != 3 || tw.ndim() != 4 || tw.dim(0) != tx.dim(0))
        throw std::invalid_argument("conv_transpose2d: shape mismatch");
    const int C = tx.dim(0), H = tx.dim(1), W_ = tx.dim(2);
    const int O = tw.dim(1), k = tw.dim(2);
    const int Ho = (H - 1) * stride - 2 * pad + k;
    const int Wo = (W_ - 1) * stride - 2 * pad + k;
    Tensor out = Tensor::zeros({O, Ho, Wo});
    kernels::conv_transpose2d(tx.data.data(), tw.data.data(),
                              b.valid() ? value(b).data.data() : nullptr, out.data.data(), C, H, W_,
                              O, k, stride, pad, Ho, Wo);
    int ix = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
    return {push(std::move(out),
                 [ix, iw, ib, C, H, W_, O, k, stride, pad, Ho, Wo](Graph& g) {
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     if (g.needs_grad(ix))
                         kernels::conv_transpose2d_bwd_input(g.nodes_[iw].value.data.data(),
                                                             go.data.data(), g.g(ix).data.data(), C,
                                                             H, W_, O, k, stride, pad, Ho, Wo);
                     if (g.needs_grad(iw))
                         kernels::conv_transpose2d_bwd_weight(g.nodes_[ix].value.data.data(),
                                                              go.data.data(), g.g(iw).data.data(),
                                                              ib >= 0 && g.needs_grad(ib)
                                                                  ? g.g(ib).data.data()
                                                                  : nullptr,
                                                              C, H, W_, O, k, stride, pad, Ho, Wo);
                 },
                 {x, w, b})};
}

Var Graph::embedding_row(Parameter& table, int row) {
    Var t = use(table);
    const Tensor& tt = value(t);
    if (tt.ndim() != 2 || row < 0 || row >= tt.dim(0))
        throw std::invalid_argument("embedding_row: row out of range");
    const int d = tt.dim(1);
    Tensor out;
    out.shape = {d};
    out.data.assign(tt.data.begin() + static_cast<size_t>(row) * d,
                    tt.data.begin() + static_cast<size_t>(row + 1) * d);
    int it = t.id;
    return {push(std::move(out),
                 [it, row, d](Graph& g) {
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     Tensor& gt = g.g(it);
                     for (int i = 0; i < d; ++i) gt.data[static_cast<size_t>(row) * d + i] += go.data[i];
                 },
                 {t})};
}

Var Graph::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
    const int d = value(rows[0]).numel();
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), d});
    for (size_t r = 0; r < rows.size(); ++r) {
        const Tensor& t = value(rows[r]);
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + r * d);
    }
    std::vector<int> ids;
    bool needs = false;
    for (Var r : rows) {
        ids.push_back(r.id);
        needs = needs || nodes_[r.id].needs_grad;
    }
    int id = push(std::move(out), [ids, d](Graph& g) {
        const Tensor& go = g.nodes_[g.cur_].grad;
        for (size_t r = 0; r < ids.size(); ++r) {
            if (!g.needs_grad(ids[r])) continue;
            Tensor& gr = g.g(ids[r]);
            for (int i = 0; i < d; ++i) gr.data[i] += go.data[r * d + i];
        }
    });
    nodes_[id].needs_grad = needs;
    return {id};
}

Var Graph::masked_softmax(Var scores, std::vector<uint8_t> valid) {
    const Tensor& ts = value(scores);
    if (valid.size() != ts.data.size()) throw std::invalid_argument("masked_softmax: mask size");
    double mx = -1e300;
    bool any = false;
    for (size_t i = 0; i < ts.data.size(); ++i)
        if (valid[i]) {
            mx = std::max(mx, ts.data[i]);
            any = true;
        }
    if (!any) throw std::invalid_argument("masked_softmax: no valid positions");
    Tensor out = Tensor::zeros(ts.shape);
    double z = 0;
    for (size_t i = 0; i < ts.data.size(); ++i)
        if (valid[i]) {
            out.data[i] = std::exp(ts.data[i] - mx);
            z += out.data[i];
        }
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= z;
    int is = scores.id;
    return {push(std::move(out),
                 [is, valid = std::move(valid)](Graph& g) {
                     if (!g.needs_grad(is)) return;
                     const int self = g.cur_;
                     const Tensor& go = g.nodes_[self].grad;
                     const Tensor& w = g.nodes_[self].value;
                     Tensor& gs = g.g(is);
                     double dot = 0;
                     for (size_t i = 0; i < w.data.size(); ++i) dot += go.data[i] * w.data[i];
                     for (size_t i = 0; i < w.data.size(); ++i)
                         if (valid[i]) gs.data[i] += w.data[i] * (go.data[i] - dot);
                 },
                 {scores})};
}

Var Graph::weighted_sum_rows(Var rows, Var weights) {
    const Tensor& tr = value(rows);
    const Tensor& tw = value(weights);
    if (tr.ndim() != 2 || tr.dim(0) != tw.numel())
        throw std::invalid_argument("weighted_sum_rows: shape mismatch");
    const int T = tr.dim(0), d = tr.dim(1);
    Tensor out = Tensor::zeros({d});
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < d; ++i) out.data[i] += tw.data[t] * tr.data[static_cast<size_t>(t) * d + i];
    int ir = rows.id, iw = weights.id;
    return {push(std::move(out),
                 [ir, iw, T, d](Graph& g) {
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     const Tensor& vr = g.nodes_[ir].value;
                     const Tensor& vw = g.nodes_[iw].value;
                     const bool want_r = g.needs_grad(ir);
                     const bool want_w = g.needs_grad(iw);
                     for (int t = 0; t < T; ++t) {
                         double acc = 0;
                         for (int i = 0; i < d; ++i) {
                             if (want_r)
                                 g.g(ir).data[static_cast<size_t>(t) * d + i] += vw.data[t] * go.data[i];
                             acc += vr.data[static_cast<size_t>(t) * d + i] * go.data[i];
                         }
                         if (want_w) g.g(iw).data[t] += acc;
                     }
                 },
                 {rows, weights})};
}

Var Graph::mean_pool_hw(Var x) {
    const Tensor& tx = value(x);
    if (tx.ndim() != 3) throw std::invalid_argument("mean_pool_hw: expects (C,H,W)");
    const int C = tx.dim(0), HW = tx.dim(1) * tx.dim(2);
    Tensor out = Tensor::zeros({C});
    for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (int i = 0; i < HW; ++i) acc += tx.data[static_cast<size_t>(c) * HW + i];
        out.data[c] = acc / HW;
    }
    int ix = x.id;
    return {push(std::move(out),
                 [ix, C, HW](Graph& g) {
                     if (!g.needs_grad(ix)) return;
                     const Tensor& go = g.nodes_[g.cur_].grad;
                     Tensor& gx = g.g(ix);
                     for (int c = 0; c < C; ++c)
                         for (int i = 0; i < HW; ++i)
                             gx.data[static_cast<size_t>(c) * HW + i] += go.data[c] / HW;
                 },
                 {x})};
}

Var Graph::cross_entropy_logits(Var logits, int label) {
    const Tensor& tl = value(logits);
    if (label < 0 || label >= tl.numel()) throw std::invalid_argument("cross_entropy: bad label");
    double mx = tl.data[0];
    for (double v : tl.data) mx = std::max(mx, v);
    double z = 0;
    for (double v : tl.data) z += std::exp(v - mx);
    Tensor out;
    out.shape = {1};
    out.data = {std::log(z) + mx - tl.data[label]};
    int il = logits.id;
    return {push(std::move(out),
                 [il, label, mx, z](Graph& g) {
                     if (!g.needs_grad(il)) return;
                     const double go = g.nodes_[g.cur_].grad.data[0];
                     const Tensor& vl = g.nodes_[il].value;
                     Tensor& gl = g.g(il);
                     for (size_t i = 0; i < vl.data.size(); ++i) {
                         const double soft = std::exp(vl.data[i] - mx) / z;
                         gl.data[i] += go * (soft - (static_cast<int>(i) == label ? 1.0 : 0.0));
                     }
                 },
                 {logits})};
}

Var Graph::bce_logits_mean(Var logits, Tensor targets) {
    const Tensor& tl = value(logits);
    if (tl.data.size() != targets.data.size())
        throw std::invalid_argument("bce_logits_mean: size mismatch");
    double total = 0;
    for (size_t i = 0; i < tl.data.size(); ++i) {
        const double zv = tl.data[i];
        total += std::max(zv, 0.0) - zv * targets.data[i] + std::log1p(std::exp(-std::abs(zv)));
    }
    const double n = static_cast<double>(tl.data.size());
    Tensor out;
    out.shape = {1};
    out.data = {total / n};
    int il = logits.id;
    return {push(std::move(out),
                 [il, targets = std::move(targets), n](Graph& g) {
                     if (!g.needs_grad(il)) return;
                     const double go = g.nodes_[g.cur_].grad.data[0];
                     const Tensor& vl = g.nodes_[il].value;
                     Tensor& gl = g.g(il);
                     for (size_t i = 0; i < vl.data.size(); ++i) {
                         const double s = 1.0 / (1.0 + std::exp(-vl.data[i]));
                         gl.data[i] += go * (s - targets.data[i]) / n;
                     }
                 },
                 {logits})};
}

Var Graph::sum(const std::vector<Var>& scalars) {
    double total = 0;
    for (Var s : scalars) total += value(s).data[0];
    Tensor out;
    out.shape = {1};
    out.data = {total};
    std::vector<int> ids;
    bool needs = false;
    for (Var s : scalars) {
        ids.push_back(s.id);
        needs = needs || nodes_[s.id].needs_grad;
    }
    int id = push(std::move(out), [ids](Graph& g) {
        const double go = g.nodes_[g.cur_].grad.data[0];
        for (int sid : ids)
            if (g.needs_grad(sid)) g.g(sid).data[0] += go;
    });
    nodes_[id].needs_grad = needs;
    return {id};
}

void Graph::backward(Var loss) {
    if (value(loss).numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    g(loss.id).data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.back || n.grad.data.empty() || !n.needs_grad) continue;
        cur_ = id;
        n.back(*this);
    }
}

void Graph::accumulate_param_grads(double scale) {
    for (const auto& [param, id] : param_nodes_) {
        const Tensor& src = nodes_[id].grad;
        if (src.data.empty()) continue;
        for (size_t i = 0; i < src.data.size(); ++i) param->grad.data[i] += scale * src.data[i];
    }
}

}  // namespace gridagent::nn
