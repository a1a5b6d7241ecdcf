#pragma once

// Reverse-mode autodiff on a per-episode tape. Ops append nodes in creation
// order (a valid topological order); backward walks the tape in reverse.

#include <functional>
#include <vector>

#include "gridagent/nn/kernels.hpp"
#include "gridagent/nn/params.hpp"
#include "gridagent/nn/tensor.hpp"

namespace gridagent::nn {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Graph {
public:
    explicit Graph(bool training = false) : training_(training) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool training() const { return training_; }

    // leaves
    Var input(Tensor v);
    Var zeros(std::vector<int> shape) { return input(Tensor::zeros(std::move(shape))); }
    Var use(Parameter& p);  // memoized per graph

    // elementwise / shape
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var concat(const std::vector<Var>& parts);
    Var slice(Var a, int offset, int len);
    Var reshape(Var a, std::vector<int> shape);
    Var sigmoid(Var a);
    Var tanh_(Var a);
    Var relu(Var a);
    // inverted dropout; mask derived statelessly from `key` so call order
    // cannot perturb determinism. Identity when not training or p == 0.
    Var dropout(Var a, double p, uint64_t key);

    // dense
    Var linear(Var W, Var x, Var b = {});  // W (m,n), x (n) -> (m)
    Var conv2d(Var x, Var w, Var b, int stride, int pad);            // w (O,C,k,k)
    Var conv_transpose2d(Var x, Var w, Var b, int stride, int pad);  // w (C,O,k,k)
    Var embedding_row(Parameter& table, int row);

    // sequence / attention
    Var stack_rows(const std::vector<Var>& rows);              // T x D
    Var masked_softmax(Var scores, std::vector<uint8_t> valid);
    Var weighted_sum_rows(Var rows, Var weights);              // (T,D),(T) -> (D)
    Var mean_pool_hw(Var x);                                   // (C,H,W) -> (C)

    // losses
    Var cross_entropy_logits(Var logits, int label);
    Var bce_logits_mean(Var logits, Tensor targets);
    Var sum(const std::vector<Var>& scalars);

    void backward(Var loss);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

    // parameters touched by this graph, in first-use order
    const std::vector<std::pair<Parameter*, int>>& used_params() const { return param_nodes_; }
    // after backward: add this graph's parameter gradients into Parameter::grad
    void accumulate_param_grads(double scale = 1.0);

    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Graph&)> back;
        bool needs_grad = false;
    };

    int push(Tensor value, std::function<void(Graph&)> back);
    int push(Tensor value, std::function<void(Graph&)> back, std::initializer_list<Var> parents);
    bool needs_grad(int id) const { return nodes_[id].needs_grad; }
    Tensor& g(int id) {
        Node& n = nodes_[id];
        if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
        return n.grad;
    }

    std::vector<Node> nodes_;
    std::vector<std::pair<Parameter*, int>> param_nodes_;
    bool training_ = false;
    int cur_ = -1;  // node whose backward closure is running

    friend struct GraphTestPeer;
};

}  // namespace gridagent::nn
