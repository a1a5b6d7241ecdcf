#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "gridagent/nn/graph.hpp"
#include "gridagent/nn/kernels.hpp"
#include "gridagent/nn/modules.hpp"
#include "gridagent/nn/params.hpp"
#include "test_helpers.hpp"

using namespace gridagent;
using namespace gridagent::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.next_double(-scale, scale);
    return t;
}

// Central-difference check of d(loss)/d(param) for every parameter element.
// `loss_fn` must rebuild the graph from current parameter values.
void check_gradients(ParameterStore& store, const std::function<double()>& loss_fn,
                     const std::function<double()>& backward_fn, double tol = 1e-4,
                     double h = 1e-5) {
    store.zero_grads();
    backward_fn();
    for (const auto& p : store.all()) {
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            const double up = loss_fn();
            p->value.data[i] = saved - h;
            const double down = loss_fn();
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double analytic = p->grad.data[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            const double rel = std::abs(numeric - analytic) / denom;
            if (rel >= tol) {
                CAPTURE(p->name);
                CAPTURE(i);
                CAPTURE(numeric);
                CAPTURE(analytic);
            }
            REQUIRE(rel < tol);
        }
    }
}

}  // namespace

TEST_CASE("serial and openmp kernels agree bit-exactly") {
    Rng rng(1);
    const int C = 5, H = 9, W = 8, O = 7, k = 3, stride = 2, pad = 1;
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    Tensor in = random_tensor({C, H, W}, rng);
    Tensor w = random_tensor({O, C, k, k}, rng);
    Tensor b = random_tensor({O}, rng);
    Tensor gout = random_tensor({O, Ho, Wo}, rng);

    auto run = [&](auto&& fn, std::vector<int> shape, auto&&... args) {
        Tensor out = Tensor::zeros(shape);
        fn(args..., out.data.data());
        return out;
    };
    (void)run;

    // conv2d forward
    Tensor out_s = Tensor::zeros({O, Ho, Wo});
    Tensor out_p = Tensor::zeros({O, Ho, Wo});
    kernels::serial_ref::conv2d(in.data.data(), w.data.data(), b.data.data(), out_s.data.data(), C,
                                H, W, O, k, stride, pad, Ho, Wo);
    kernels::set_threads(4);
    kernels::omp_par::conv2d(in.data.data(), w.data.data(), b.data.data(), out_p.data.data(), C, H,
                             W, O, k, stride, pad, Ho, Wo);
    CHECK(out_s.data == out_p.data);

    // conv2d backward
    Tensor gin_s = Tensor::zeros({C, H, W}), gin_p = Tensor::zeros({C, H, W});
    kernels::serial_ref::conv2d_bwd_input(w.data.data(), gout.data.data(), gin_s.data.data(), C, H,
                                          W, O, k, stride, pad, Ho, Wo);
    kernels::omp_par::conv2d_bwd_input(w.data.data(), gout.data.data(), gin_p.data.data(), C, H, W,
                                       O, k, stride, pad, Ho, Wo);
    CHECK(gin_s.data == gin_p.data);

    Tensor gw_s = Tensor::zeros({O, C, k, k}), gw_p = Tensor::zeros({O, C, k, k});
    Tensor gb_s = Tensor::zeros({O}), gb_p = Tensor::zeros({O});
    kernels::serial_ref::conv2d_bwd_weight(in.data.data(), gout.data.data(), gw_s.data.data(),
                                           gb_s.data.data(), C, H, W, O, k, stride, pad, Ho, Wo);
    kernels::omp_par::conv2d_bwd_weight(in.data.data(), gout.data.data(), gw_p.data.data(),
                                        gb_p.data.data(), C, H, W, O, k, stride, pad, Ho, Wo);
    CHECK(gw_s.data == gw_p.data);
    CHECK(gb_s.data == gb_p.data);

    // matvec family
    const int m = 33, n = 21;
    Tensor W2 = random_tensor({m, n}, rng), x = random_tensor({n}, rng), bb = random_tensor({m}, rng);
    Tensor gy = random_tensor({m}, rng);
    Tensor y_s = Tensor::zeros({m}), y_p = Tensor::zeros({m});
    kernels::serial_ref::matvec(W2.data.data(), x.data.data(), bb.data.data(), y_s.data.data(), m, n);
    kernels::omp_par::matvec(W2.data.data(), x.data.data(), bb.data.data(), y_p.data.data(), m, n);
    CHECK(y_s.data == y_p.data);

    Tensor gx_s = Tensor::zeros({n}), gx_p = Tensor::zeros({n});
    kernels::serial_ref::matvec_bwd_x(W2.data.data(), gy.data.data(), gx_s.data.data(), m, n);
    kernels::omp_par::matvec_bwd_x(W2.data.data(), gy.data.data(), gx_p.data.data(), m, n);
    CHECK(gx_s.data == gx_p.data);

    Tensor gW_s = Tensor::zeros({m, n}), gW_p = Tensor::zeros({m, n});
    Tensor gbb_s = Tensor::zeros({m}), gbb_p = Tensor::zeros({m});
    kernels::serial_ref::matvec_bwd_W(gy.data.data(), x.data.data(), gW_s.data.data(),
                                      gbb_s.data.data(), m, n);
    kernels::omp_par::matvec_bwd_W(gy.data.data(), x.data.data(), gW_p.data.data(),
                                   gbb_p.data.data(), m, n);
    CHECK(gW_s.data == gW_p.data);
    CHECK(gbb_s.data == gbb_p.data);

    // transposed convolution family
    const int Ht = (H - 1) * stride - 2 * pad + k;
    const int Wt = (W - 1) * stride - 2 * pad + k;
    Tensor wt = random_tensor({C, O, k, k}, rng);
    Tensor gout_t = random_tensor({O, Ht, Wt}, rng);
    Tensor to_s = Tensor::zeros({O, Ht, Wt}), to_p = Tensor::zeros({O, Ht, Wt});
    kernels::serial_ref::conv_transpose2d(in.data.data(), wt.data.data(), b.data.data(),
                                          to_s.data.data(), C, H, W, O, k, stride, pad, Ht, Wt);
    kernels::omp_par::conv_transpose2d(in.data.data(), wt.data.data(), b.data.data(),
                                       to_p.data.data(), C, H, W, O, k, stride, pad, Ht, Wt);
    CHECK(to_s.data == to_p.data);

    Tensor tgin_s = Tensor::zeros({C, H, W}), tgin_p = Tensor::zeros({C, H, W});
    kernels::serial_ref::conv_transpose2d_bwd_input(wt.data.data(), gout_t.data.data(),
                                                    tgin_s.data.data(), C, H, W, O, k, stride, pad,
                                                    Ht, Wt);
    kernels::omp_par::conv_transpose2d_bwd_input(wt.data.data(), gout_t.data.data(),
                                                 tgin_p.data.data(), C, H, W, O, k, stride, pad, Ht,
                                                 Wt);
    CHECK(tgin_s.data == tgin_p.data);

    Tensor tgw_s = Tensor::zeros({C, O, k, k}), tgw_p = Tensor::zeros({C, O, k, k});
    Tensor tgb_s = Tensor::zeros({O}), tgb_p = Tensor::zeros({O});
    kernels::serial_ref::conv_transpose2d_bwd_weight(in.data.data(), gout_t.data.data(),
                                                     tgw_s.data.data(), tgb_s.data.data(), C, H, W,
                                                     O, k, stride, pad, Ht, Wt);
    kernels::omp_par::conv_transpose2d_bwd_weight(in.data.data(), gout_t.data.data(),
                                                  tgw_p.data.data(), tgb_p.data.data(), C, H, W, O,
                                                  k, stride, pad, Ht, Wt);
    CHECK(tgw_s.data == tgw_p.data);
    CHECK(tgb_s.data == tgb_p.data);

    kernels::set_threads(1);
}

TEST_CASE("dispatched kernels match the serial reference through the graph") {
    Rng rng(7);
    ParameterStore store;
    Parameter& W = store.create("W", {6, 5}, 0.5, rng);
    Parameter& x = store.create("x", {5}, 0.5, rng);

    auto run = [&]() {
        Graph g;
        Var y = g.linear(g.use(W), g.use(x));
        return g.value(y).data;
    };
    kernels::set_threads(1);
    auto serial = run();
    kernels::set_threads(3);
    auto parallel = run();
    kernels::set_threads(1);
    CHECK(serial == parallel);
}

TEST_CASE("gradient check: linear, activations, elementwise") {
    Rng rng(11);
    ParameterStore store;
    Parameter& W = store.create("W", {4, 3}, 0.8, rng);
    Parameter& b = store.create("b", {4}, 0.8, rng);
    Parameter& x = store.create("x", {3}, 0.8, rng);
    Parameter& y = store.create("y", {4}, 0.8, rng);
    Tensor targets = random_tensor({4}, rng, 0.5);
    for (auto& t : targets.data) t = t > 0 ? 1.0 : 0.0;

    auto build = [&](Graph& g) {
        Var out = g.linear(g.use(W), g.use(x), g.use(b));
        out = g.tanh_(out);
        out = g.mul(out, g.sigmoid(g.use(y)));
        out = g.add(out, g.relu(g.scale(g.use(y), 0.7)));
        return g.bce_logits_mean(out, targets);
    };
    auto loss = [&]() {
        Graph g;
        return g.value(build(g)).data[0];
    };
    auto backward = [&]() {
        Graph g;
        Var l = build(g);
        g.backward(l);
        g.accumulate_param_grads();
        return g.value(l).data[0];
    };
    check_gradients(store, loss, backward);
}

TEST_CASE("gradient check: conv2d and conv_transpose2d") {
    Rng rng(13);
    ParameterStore store;
    Parameter& img = store.create("img", {2, 6, 6}, 0.8, rng);
    Parameter& w = store.create("w", {3, 2, 3, 3}, 0.5, rng);
    Parameter& b = store.create("b", {3}, 0.5, rng);
    Parameter& wt = store.create("wt", {3, 2, 4, 4}, 0.5, rng);
    Parameter& bt = store.create("bt", {2}, 0.5, rng);
    Tensor targets = random_tensor({2 * 6 * 6}, rng, 0.5);
    for (auto& t : targets.data) t = t > 0 ? 1.0 : 0.0;

    auto build = [&](Graph& g) {
        Var h = g.relu(g.conv2d(g.use(img), g.use(w), g.use(b), 2, 1));  // (3,3,3)
        Var up = g.conv_transpose2d(h, g.use(wt), g.use(bt), 2, 1);      // (2,6,6)
        Var flat = g.reshape(up, {2 * 6 * 6});
        return g.bce_logits_mean(flat, targets);
    };
    auto loss = [&]() {
        Graph g;
        return g.value(build(g)).data[0];
    };
    auto backward = [&]() {
        Graph g;
        Var l = build(g);
        g.backward(l);
        g.accumulate_param_grads();
        return g.value(l).data[0];
    };
    check_gradients(store, loss, backward);
}

TEST_CASE("gradient check: attention composite and softmax") {
    Rng rng(17);
    ParameterStore store;
    Parameter& K = store.create("K", {5, 4}, 0.8, rng);
    Parameter& q = store.create("q", {4}, 0.8, rng);
    std::vector<uint8_t> valid = {1, 1, 0, 1, 1};  // one padded row
    Tensor targets = random_tensor({4}, rng, 0.5);
    for (auto& t : targets.data) t = t > 0 ? 1.0 : 0.0;

    auto build = [&](Graph& g) {
        Var scores = g.linear(g.use(K), g.use(q));
        Var wts = g.masked_softmax(scores, valid);
        Var ctx = g.weighted_sum_rows(g.use(K), wts);
        return g.bce_logits_mean(ctx, targets);
    };
    auto loss = [&]() {
        Graph g;
        return g.value(build(g)).data[0];
    };
    auto backward = [&]() {
        Graph g;
        Var l = build(g);
        g.backward(l);
        g.accumulate_param_grads();
        return g.value(l).data[0];
    };
    check_gradients(store, loss, backward);

    // padded rows receive exactly zero attention weight
    Graph g;
    Var scores = g.linear(g.use(K), g.use(q));
    Var wts = g.masked_softmax(scores, valid);
    CHECK(g.value(wts).data[2] == 0.0);
    double sum = 0;
    for (double v : g.value(wts).data) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("gradient check: unrolled lstm with embeddings and dropout") {
    Rng rng(19);
    ParameterStore store;
    LstmParams cell = LstmParams::create(store, "cell", 3, 4, rng);
    Parameter& table = store.create("table", {5, 3}, 0.8, rng);
    LinearParams head = LinearParams::create(store, "head", 4, 3, rng);
    const std::vector<int> rows = {1, 4, 2};

    auto build = [&](Graph& g) {
        LstmState s = lstm_init(g, 4);
        Var logits;
        for (size_t t = 0; t < rows.size(); ++t) {
            Var x = g.embedding_row(table, rows[t]);
            x = g.dropout(x, 0.25, 77 + t);
            s = lstm_step(g, cell, x, s);
            logits = apply_linear(g, head, s.h);
        }
        return g.cross_entropy_logits(logits, 1);
    };
    auto loss = [&]() {
        Graph g(true);
        return g.value(build(g)).data[0];
    };
    auto backward = [&]() {
        Graph g(true);
        Var l = build(g);
        g.backward(l);
        g.accumulate_param_grads();
        return g.value(l).data[0];
    };
    check_gradients(store, loss, backward);
}

TEST_CASE("gradient check: stack, slice, concat, mean pool, loss sum") {
    Rng rng(23);
    ParameterStore store;
    Parameter& a = store.create("a", {6}, 0.8, rng);
    Parameter& m = store.create("m", {2, 3, 3}, 0.8, rng);

    auto build = [&](Graph& g) {
        Var r1 = g.slice(g.use(a), 0, 3);
        Var r2 = g.slice(g.use(a), 3, 3);
        Var rows = g.stack_rows({r1, r2, g.mul(r1, r2)});
        Var flat = g.reshape(rows, {9});
        Var pooled = g.mean_pool_hw(g.use(m));  // (2)
        Var all = g.concat({flat, pooled});
        Var l1 = g.cross_entropy_logits(all, 4);
        Var l2 = g.cross_entropy_logits(pooled, 0);
        return g.sum({l1, g.scale(l2, 0.5)});
    };
    auto loss = [&]() {
        Graph g;
        return g.value(build(g)).data[0];
    };
    auto backward = [&]() {
        Graph g;
        Var l = build(g);
        g.backward(l);
        g.accumulate_param_grads();
        return g.value(l).data[0];
    };
    check_gradients(store, loss, backward);
}

TEST_CASE("adam is deterministic and checkpoints round-trip bit-exactly") {
    auto make = [](ParameterStore& store) {
        Rng rng(31);
        store.create("w", {4, 4}, 0.5, rng);
        store.create("b", {4}, 0.5, rng);
    };
    ParameterStore s1, s2;
    make(s1);
    make(s2);
    for (int step = 0; step < 3; ++step) {
        for (auto* s : {&s1, &s2}) {
            s->zero_grads();
            for (const auto& p : s->all())
                for (size_t i = 0; i < p->grad.data.size(); ++i)
                    p->grad.data[i] = 0.01 * static_cast<double>(i + step);
            s->adam_step(1e-3);
        }
    }
    CHECK(s1.value_hash() == s2.value_hash());
    CHECK(s1.step_count() == 3);

    gridagent::testing::TempDir dir("ckpt");
    json extras = {{"note", "roundtrip"}};
    s1.save(dir.path / "model.ckpt", extras);
    ParameterStore loaded;
    json back = ParameterStore::load(dir.path / "model.ckpt", loaded);
    CHECK(back["note"] == "roundtrip");
    CHECK(loaded.step_count() == 3);
    CHECK(loaded.value_hash() == s1.value_hash());
    for (const auto& p : s1.all()) {
        const Parameter* q = loaded.find(p->name);
        REQUIRE(q != nullptr);
        CHECK(q->value.data == p->value.data);
        CHECK(q->adam_m.data == p->adam_m.data);
        CHECK(q->adam_v.data == p->adam_v.data);
    }

    // resaving the loaded store produces identical bytes
    s1.save(dir.path / "a.ckpt", extras);
    loaded.save(dir.path / "b.ckpt", extras);
    CHECK(read_file(dir.path / "a.ckpt") == read_file(dir.path / "b.ckpt"));
}

TEST_CASE("divergence guard detects non-finite gradients") {
    Rng rng(37);
    ParameterStore store;
    Parameter& p = store.create("p", {2}, 0.5, rng);
    CHECK(store.grads_finite());
    p.grad.data[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(store.grads_finite());
}
