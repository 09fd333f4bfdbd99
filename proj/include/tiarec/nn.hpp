#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tiarec/rng.hpp"

namespace tiarec::nn {

using Vec = std::vector<double>;

// A named array with a gradient slot of the same shape. Matrices are
// row-major with shape {rows, cols}; vectors have shape {n}.
struct Tensor {
    std::vector<int> shape;
    Vec value;
    Vec grad;

    std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }
    int rows() const { return shape.at(0); }
    int cols() const { return shape.size() > 1 ? shape[1] : 1; }
};

// Ordered collection of named tensors. Insertion order is the checkpoint
// payload order, so it must be deterministic.
class ParameterSet {
  public:
    Tensor& add(const std::string& name, std::vector<int> shape);
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::size_t size() const { return entries_.size(); }
    std::pair<const std::string*, Tensor*> entry(std::size_t i);
    std::pair<const std::string*, const Tensor*> entry(std::size_t i) const;

    void zero_grads();
    std::int64_t value_count() const;

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class Activation { Tanh, Relu };
enum class OutputActivation { Identity, Logistic };

struct MLPSpec {
    std::vector<int> widths;  // input width first, output width last
    Activation hidden = Activation::Relu;
    OutputActivation output = OutputActivation::Identity;

    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
};

// Weight views for one attention pool. q == nullptr means the query is
// supplied externally at call time.
struct AttentionParams {
    const Tensor* W = nullptr;  // d x d
    const Tensor* b = nullptr;  // d
    const Tensor* q = nullptr;  // d, learned query (self-query variant only)
};

// Names used inside a ParameterSet: "<prefix>W0", "<prefix>b0", ... per
// layer. Glorot-uniform weights, zero biases.
void init_mlp(ParameterSet& params, const MLPSpec& spec, const std::string& prefix, Rng& rng);

// Names: "<prefix>W", "<prefix>b" and, when learned_query, "<prefix>q".
void init_attention(ParameterSet& params, int dim, const std::string& prefix, bool learned_query,
                    Rng& rng);

AttentionParams attention_view(const ParameterSet& params, const std::string& prefix);

// Softmax-weighted pooling: z = sum_i alpha_i * items[i] with
// alpha = softmax over query . tanh(W * items[i] + b). The learned query is
// used when params.q is set and `query` is empty. An empty item list pools
// to the zero vector. `weights_out`, when given, receives alpha.
Vec attention_pool(std::span<const std::span<const double>> items, const AttentionParams& params,
                   std::span<const double> query = {}, Vec* weights_out = nullptr);

// Plain affine+activation chain over the tensors "<prefix>W<i>"/"<prefix>b<i>".
Vec mlp_forward(const MLPSpec& spec, const ParameterSet& params, std::span<const double> input,
                const std::string& prefix = "mlp.");

// value <- value - lr * grad on every tensor, then grads are zeroed.
// Throws ConfigError when lr <= 0.
void sgd_step(ParameterSet& params, double lr);

// Optional adaptive-moment update, off by default in training configs.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Vec> m;  // one slot per tensor, lazily sized
    std::vector<Vec> v;
};

void adam_step(ParameterSet& params, AdamState& state, double lr);

// target <- tau * online + (1 - tau) * target, elementwise over paired
// tensors. Throws ConfigError on shape mismatch or tau outside [0, 1].
void soft_update(ParameterSet& target, const ParameterSet& online, double tau);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// 0 when either argument has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);
double logistic(double x);

}  // namespace tiarec::nn
