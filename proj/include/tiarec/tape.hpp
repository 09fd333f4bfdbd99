#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tiarec/nn.hpp"

namespace tiarec::nn {

// Reverse-mode graph for the two training losses. Values live in one arena
// that is reused across reset() calls, so building a fresh graph per
// minibatch does not allocate once capacity has been reached.
//
// Nodes are created in topological order (arguments always precede users),
// and backward() walks them in reverse. Gradients of Param nodes are added
// into the owning Tensor's grad slot unless the node was registered with
// accumulate=false; gradients still flow *through* frozen parameters.
class Tape {
  public:
    using Id = std::int32_t;

    void reset();

    Id constant(std::span<const double> v);
    Id zeros(int n);
    // Registers a tensor; by default backward() writes into t.grad.
    Id param(Tensor& t, bool accumulate = true);

    Id affine(Id W, Id x, Id b);     // W*x + b (W matrix node, x/b vectors)
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id scale(Id a, double c);
    Id tanh_op(Id a);
    Id relu_op(Id a);
    Id logistic_op(Id a);
    Id dot(Id a, Id b);              // scalar
    Id concat(std::span<const Id> parts);
    Id stack(std::span<const Id> scalars);
    Id softmax(Id a);
    // sum_i weights[i] * items[i]; items are constant d-vectors.
    Id weighted_sum(Id weights, std::span<const std::span<const double>> items);
    // ||target - x||^2 as a scalar; target is constant.
    Id squared_distance(Id x, std::span<const double> target);
    Id mean(std::span<const Id> scalars);

    std::span<const double> value(Id id) const;
    double scalar(Id id) const;
    int node_count() const { return static_cast<int>(nodes_.size()); }

    // Root must be scalar. Zeroes the grad slot of every participating
    // accumulate-parameter first, so consecutive calls yield identical
    // gradients. Throws ConfigError if the tape is empty or root is not a
    // scalar node.
    void backward(Id root);

    // --- composite builders -------------------------------------------

    // Attention pool with differentiable weights/query; mirrors
    // nn::attention_pool arithmetic exactly.
    Id attention(std::span<const std::span<const double>> items, Id W, Id b, Id query, int dim);

    // MLP over "<prefix>W<i>"/"<prefix>b<i>" tensors of `params`; mirrors
    // nn::mlp_forward arithmetic exactly.
    Id mlp(const MLPSpec& spec, ParameterSet& params, Id input, const std::string& prefix,
           bool accumulate = true);

  private:
    enum class Op : std::uint8_t {
        Constant,
        Param,
        Affine,
        Add,
        Sub,
        Scale,
        Tanh,
        Relu,
        Logistic,
        Dot,
        Concat,
        Stack,
        Softmax,
        WeightedSum,
        SquaredDistance,
        Mean,
    };

    struct Node {
        Op op;
        Id a = -1, b = -1, c = -1;
        std::int32_t args_off = 0, args_len = 0;    // into args_
        std::int32_t items_off = 0, items_len = 0;  // into item_ptrs_
        std::int32_t val_off = 0;
        std::int32_t len = 0;
        Tensor* tensor = nullptr;
        bool accumulate = true;
        double aux = 0.0;
    };

    Id push(Node n, int len);
    std::span<double> val(Id id);
    std::span<double> grad(Id id);

    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> grads_;
    std::vector<Id> args_;
    std::vector<const double*> item_ptrs_;
    std::int32_t item_dim_ = 0;
};

}  // namespace tiarec::nn
