#include "tiarec/tape.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tiarec/errors.hpp"

namespace tiarec::nn {

void Tape::reset() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    args_.clear();
    item_ptrs_.clear();
}

Tape::Id Tape::push(Node n, int len) {
    n.val_off = static_cast<std::int32_t>(vals_.size());
    n.len = len;
    vals_.resize(vals_.size() + static_cast<std::size_t>(len), 0.0);
    nodes_.push_back(n);
    return static_cast<Id>(nodes_.size() - 1);
}

std::span<double> Tape::val(Id id) {
    Node& n = nodes_[id];
    return {vals_.data() + n.val_off, static_cast<std::size_t>(n.len)};
}

std::span<double> Tape::grad(Id id) {
    Node& n = nodes_[id];
    return {grads_.data() + n.val_off, static_cast<std::size_t>(n.len)};
}

std::span<const double> Tape::value(Id id) const {
    const Node& n = nodes_.at(id);
    return {vals_.data() + n.val_off, static_cast<std::size_t>(n.len)};
}

double Tape::scalar(Id id) const {
    const auto v = value(id);
    if (v.size() != 1) throw ConfigError("Tape::scalar: node is not scalar");
    return v[0];
}

Tape::Id Tape::constant(std::span<const double> v) {
    const Id id = push({Op::Constant}, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), val(id).begin());
    return id;
}

Tape::Id Tape::zeros(int n) { return push({Op::Constant}, n); }

Tape::Id Tape::param(Tensor& t, bool accumulate) {
    Node n{Op::Param};
    n.tensor = &t;
    n.accumulate = accumulate;
    const Id id = push(n, static_cast<int>(t.value.size()));
    std::copy(t.value.begin(), t.value.end(), val(id).begin());
    return id;
}

Tape::Id Tape::affine(Id W, Id x, Id b) {
    const Node& wn = nodes_.at(W);
    const Tensor* wt = wn.tensor;
    const int rows = wt ? wt->rows() : 0;
    if (!wt || wt->shape.size() != 2) throw ConfigError("Tape::affine: W must be a matrix param");
    const int cols = wt->cols();
    if (nodes_.at(x).len != cols || nodes_.at(b).len != rows) {
        throw ConfigError("Tape::affine: shape mismatch");
    }
    Node n{Op::Affine};
    n.a = W;
    n.b = x;
    n.c = b;
    const Id id = push(n, rows);
    const double* wv = vals_.data() + nodes_[W].val_off;
    const double* xv = vals_.data() + nodes_[x].val_off;
    const double* bv = vals_.data() + nodes_[b].val_off;
    auto out = val(id);
    for (int r = 0; r < rows; ++r) {
        double s = bv[r];
        const double* wrow = wv + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) s += wrow[c] * xv[c];
        out[r] = s;
    }
    return id;
}

Tape::Id Tape::add(Id a, Id b) {
    if (nodes_.at(a).len != nodes_.at(b).len) throw ConfigError("Tape::add: length mismatch");
    Node n{Op::Add};
    n.a = a;
    n.b = b;
    const Id id = push(n, nodes_[a].len);
    auto out = val(id);
    const double* av = vals_.data() + nodes_[a].val_off;
    const double* bv = vals_.data() + nodes_[b].val_off;
    for (int i = 0; i < nodes_[id].len; ++i) out[i] = av[i] + bv[i];
    return id;
}

Tape::Id Tape::sub(Id a, Id b) {
    if (nodes_.at(a).len != nodes_.at(b).len) throw ConfigError("Tape::sub: length mismatch");
    Node n{Op::Sub};
    n.a = a;
    n.b = b;
    const Id id = push(n, nodes_[a].len);
    auto out = val(id);
    const double* av = vals_.data() + nodes_[a].val_off;
    const double* bv = vals_.data() + nodes_[b].val_off;
    for (int i = 0; i < nodes_[id].len; ++i) out[i] = av[i] - bv[i];
    return id;
}

Tape::Id Tape::scale(Id a, double c) {
    Node n{Op::Scale};
    n.a = a;
    n.aux = c;
    const Id id = push(n, nodes_.at(a).len);
    auto out = val(id);
    const double* av = vals_.data() + nodes_[a].val_off;
    for (int i = 0; i < nodes_[id].len; ++i) out[i] = c * av[i];
    return id;
}

Tape::Id Tape::tanh_op(Id a) {
    Node n{Op::Tanh};
    n.a = a;
    const Id id = push(n, nodes_.at(a).len);
    auto out = val(id);
    const double* av = vals_.data() + nodes_[a].val_off;
    for (int i = 0; i < nodes_[id].len; ++i) out[i] = std::tanh(av[i]);
    return id;
}

Tape::Id Tape::relu_op(Id a) {
    Node n{Op::Relu};
    n.a = a;
    const Id id = push(n, nodes_.at(a).len);
    auto out = val(id);
    const double* av = vals_.data() + nodes_[a].val_off;
    for (int i = 0; i < nodes_[id].len; ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    return id;
}

Tape::Id Tape::logistic_op(Id a) {
    Node n{Op::Logistic};
    n.a = a;
    const Id id = push(n, nodes_.at(a).len);
    auto out = val(id);
    const double* av = vals_.data() + nodes_[a].val_off;
    for (int i = 0; i < nodes_[id].len; ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
    return id;
}

Tape::Id Tape::dot(Id a, Id b) {
    if (nodes_.at(a).len != nodes_.at(b).len) throw ConfigError("Tape::dot: length mismatch");
    Node n{Op::Dot};
    n.a = a;
    n.b = b;
    const Id id = push(n, 1);
    const double* av = vals_.data() + nodes_[a].val_off;
    const double* bv = vals_.data() + nodes_[b].val_off;
    double s = 0.0;
    for (int i = 0; i < nodes_[a].len; ++i) s += av[i] * bv[i];
    val(id)[0] = s;
    return id;
}

Tape::Id Tape::concat(std::span<const Id> parts) {
    Node n{Op::Concat};
    n.args_off = static_cast<std::int32_t>(args_.size());
    n.args_len = static_cast<std::int32_t>(parts.size());
    int total = 0;
    for (Id p : parts) {
        args_.push_back(p);
        total += nodes_.at(p).len;
    }
    const Id id = push(n, total);
    auto out = val(id);
    int off = 0;
    for (Id p : parts) {
        const double* pv = vals_.data() + nodes_[p].val_off;
        std::copy(pv, pv + nodes_[p].len, out.begin() + off);
        off += nodes_[p].len;
    }
    return id;
}

Tape::Id Tape::stack(std::span<const Id> scalars) {
    Node n{Op::Stack};
    n.args_off = static_cast<std::int32_t>(args_.size());
    n.args_len = static_cast<std::int32_t>(scalars.size());
    for (Id s : scalars) {
        if (nodes_.at(s).len != 1) throw ConfigError("Tape::stack: non-scalar argument");
        args_.push_back(s);
    }
    const Id id = push(n, static_cast<int>(scalars.size()));
    auto out = val(id);
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        out[i] = vals_[nodes_[scalars[i]].val_off];
    }
    return id;
}

Tape::Id Tape::softmax(Id a) {
    Node n{Op::Softmax};
    n.a = a;
    const Id id = push(n, nodes_.at(a).len);
    const double* av = vals_.data() + nodes_[a].val_off;
    auto out = val(id);
    const int len = nodes_[id].len;
    if (len == 0) return id;
    double mx = av[0];
    for (int i = 1; i < len; ++i) mx = std::max(mx, av[i]);
    double z = 0.0;
    for (int i = 0; i < len; ++i) {
        out[i] = std::exp(av[i] - mx);
        z += out[i];
    }
    for (int i = 0; i < len; ++i) out[i] /= z;
    return id;
}

Tape::Id Tape::weighted_sum(Id weights, std::span<const std::span<const double>> items) {
    if (items.empty()) throw ConfigError("Tape::weighted_sum: empty item list");
    if (nodes_.at(weights).len != static_cast<int>(items.size())) {
        throw ConfigError("Tape::weighted_sum: weight/item count mismatch");
    }
    const int d = static_cast<int>(items[0].size());
    Node n{Op::WeightedSum};
    n.a = weights;
    n.items_off = static_cast<std::int32_t>(item_ptrs_.size());
    n.items_len = static_cast<std::int32_t>(items.size());
    for (const auto& it : items) {
        if (static_cast<int>(it.size()) != d) throw ConfigError("Tape::weighted_sum: ragged items");
        item_ptrs_.push_back(it.data());
    }
    const Id id = push(n, d);
    auto out = val(id);
    const double* wv = vals_.data() + nodes_[weights].val_off;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const double* item = item_ptrs_[nodes_[id].items_off + i];
        for (int c = 0; c < d; ++c) out[c] += wv[i] * item[c];
    }
    return id;
}

Tape::Id Tape::squared_distance(Id x, std::span<const double> target) {
    if (nodes_.at(x).len != static_cast<int>(target.size())) {
        throw ConfigError("Tape::squared_distance: length mismatch");
    }
    const Id t = constant(target);
    Node n{Op::SquaredDistance};
    n.a = x;
    n.b = t;
    const Id id = push(n, 1);
    const double* xv = vals_.data() + nodes_[x].val_off;
    const double* tv = vals_.data() + nodes_[t].val_off;
    double s = 0.0;
    for (int i = 0; i < nodes_[x].len; ++i) {
        const double diff = tv[i] - xv[i];
        s += diff * diff;
    }
    val(id)[0] = s;
    return id;
}

Tape::Id Tape::mean(std::span<const Id> scalars) {
    if (scalars.empty()) throw ConfigError("Tape::mean: empty argument list");
    Node n{Op::Mean};
    n.args_off = static_cast<std::int32_t>(args_.size());
    n.args_len = static_cast<std::int32_t>(scalars.size());
    for (Id s : scalars) {
        if (nodes_.at(s).len != 1) throw ConfigError("Tape::mean: non-scalar argument");
        args_.push_back(s);
    }
    const Id id = push(n, 1);
    double s = 0.0;
    for (Id a : scalars) s += vals_[nodes_[a].val_off];
    val(id)[0] = s / static_cast<double>(scalars.size());
    return id;
}

void Tape::backward(Id root) {
    if (nodes_.empty()) throw ConfigError("Tape::backward: no forward pass recorded");
    if (root < 0 || root >= static_cast<Id>(nodes_.size())) {
        throw ConfigError("Tape::backward: invalid root");
    }
    if (nodes_[root].len != 1) throw ConfigError("Tape::backward: loss must be scalar");

    grads_.assign(vals_.size(), 0.0);
    // Replace semantics: zero every participating accumulate-tensor first,
    // so repeated backward calls give identical gradients.
    std::unordered_set<Tensor*> seen;
    for (const Node& n : nodes_) {
        if (n.op == Op::Param && n.accumulate && seen.insert(n.tensor).second) {
            std::fill(n.tensor->grad.begin(), n.tensor->grad.end(), 0.0);
        }
    }

    grads_[nodes_[root].val_off] = 1.0;

    for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
        const Node& n = nodes_[id];
        const double* g = grads_.data() + n.val_off;
        switch (n.op) {
            case Op::Constant:
                break;
            case Op::Param:
                if (n.accumulate) {
                    for (int i = 0; i < n.len; ++i) n.tensor->grad[i] += g[i];
                }
                break;
            case Op::Affine: {
                const Node& wn = nodes_[n.a];
                const int rows = n.len;
                const int cols = nodes_[n.b].len;
                const double* wv = vals_.data() + wn.val_off;
                const double* xv = vals_.data() + nodes_[n.b].val_off;
                double* wg = grads_.data() + wn.val_off;
                double* xg = grads_.data() + nodes_[n.b].val_off;
                double* bg = grads_.data() + nodes_[n.c].val_off;
                for (int r = 0; r < rows; ++r) {
                    const double gr = g[r];
                    if (gr == 0.0) continue;
                    bg[r] += gr;
                    const double* wrow = wv + static_cast<std::size_t>(r) * cols;
                    double* wgrow = wg + static_cast<std::size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) {
                        wgrow[c] += gr * xv[c];
                        xg[c] += gr * wrow[c];
                    }
                }
                break;
            }
            case Op::Add: {
                double* ag = grads_.data() + nodes_[n.a].val_off;
                double* bg = grads_.data() + nodes_[n.b].val_off;
                for (int i = 0; i < n.len; ++i) {
                    ag[i] += g[i];
                    bg[i] += g[i];
                }
                break;
            }
            case Op::Sub: {
                double* ag = grads_.data() + nodes_[n.a].val_off;
                double* bg = grads_.data() + nodes_[n.b].val_off;
                for (int i = 0; i < n.len; ++i) {
                    ag[i] += g[i];
                    bg[i] -= g[i];
                }
                break;
            }
            case Op::Scale: {
                double* ag = grads_.data() + nodes_[n.a].val_off;
                for (int i = 0; i < n.len; ++i) ag[i] += n.aux * g[i];
                break;
            }
            case Op::Tanh: {
                const double* yv = vals_.data() + n.val_off;
                double* ag = grads_.data() + nodes_[n.a].val_off;
                for (int i = 0; i < n.len; ++i) ag[i] += (1.0 - yv[i] * yv[i]) * g[i];
                break;
            }
            case Op::Relu: {
                const double* xv = vals_.data() + nodes_[n.a].val_off;
                double* ag = grads_.data() + nodes_[n.a].val_off;
                for (int i = 0; i < n.len; ++i) {
                    if (xv[i] > 0.0) ag[i] += g[i];
                }
                break;
            }
            case Op::Logistic: {
                const double* yv = vals_.data() + n.val_off;
                double* ag = grads_.data() + nodes_[n.a].val_off;
                for (int i = 0; i < n.len; ++i) ag[i] += yv[i] * (1.0 - yv[i]) * g[i];
                break;
            }
            case Op::Dot: {
                const double g0 = g[0];
                const double* av = vals_.data() + nodes_[n.a].val_off;
                const double* bv = vals_.data() + nodes_[n.b].val_off;
                double* ag = grads_.data() + nodes_[n.a].val_off;
                double* bg = grads_.data() + nodes_[n.b].val_off;
                for (int i = 0; i < nodes_[n.a].len; ++i) {
                    ag[i] += g0 * bv[i];
                    bg[i] += g0 * av[i];
                }
                break;
            }
            case Op::Concat: {
                int off = 0;
                for (int k = 0; k < n.args_len; ++k) {
                    const Id p = args_[n.args_off + k];
                    double* pg = grads_.data() + nodes_[p].val_off;
                    for (int i = 0; i < nodes_[p].len; ++i) pg[i] += g[off + i];
                    off += nodes_[p].len;
                }
                break;
            }
            case Op::Stack: {
                for (int k = 0; k < n.args_len; ++k) {
                    const Id p = args_[n.args_off + k];
                    grads_[nodes_[p].val_off] += g[k];
                }
                break;
            }
            case Op::Softmax: {
                const double* yv = vals_.data() + n.val_off;
                double* ag = grads_.data() + nodes_[n.a].val_off;
                double gy = 0.0;
                for (int i = 0; i < n.len; ++i) gy += g[i] * yv[i];
                for (int i = 0; i < n.len; ++i) ag[i] += yv[i] * (g[i] - gy);
                break;
            }
            case Op::WeightedSum: {
                double* wg = grads_.data() + nodes_[n.a].val_off;
                for (int k = 0; k < n.items_len; ++k) {
                    const double* item = item_ptrs_[n.items_off + k];
                    double s = 0.0;
                    for (int c = 0; c < n.len; ++c) s += g[c] * item[c];
                    wg[k] += s;
                }
                break;
            }
            case Op::SquaredDistance: {
                const double g0 = g[0];
                const double* xv = vals_.data() + nodes_[n.a].val_off;
                const double* tv = vals_.data() + nodes_[n.b].val_off;
                double* ag = grads_.data() + nodes_[n.a].val_off;
                for (int i = 0; i < nodes_[n.a].len; ++i) {
                    ag[i] += 2.0 * (xv[i] - tv[i]) * g0;
                }
                break;
            }
            case Op::Mean: {
                const double share = g[0] / static_cast<double>(n.args_len);
                for (int k = 0; k < n.args_len; ++k) {
                    grads_[nodes_[args_[n.args_off + k]].val_off] += share;
                }
                break;
            }
        }
    }
}

Tape::Id Tape::attention(std::span<const std::span<const double>> items, Id W, Id b, Id query,
                         int dim) {
    if (items.empty()) return zeros(dim);
    std::vector<Id> scores;
    scores.reserve(items.size());
    for (const auto& item : items) {
        const Id h = tanh_op(affine(W, constant(item), b));
        scores.push_back(dot(query, h));
    }
    const Id alpha = softmax(stack(scores));
    return weighted_sum(alpha, items);
}

Tape::Id Tape::mlp(const MLPSpec& spec, ParameterSet& params, Id input, const std::string& prefix,
                   bool accumulate) {
    Id x = input;
    for (int l = 0; l < spec.layer_count(); ++l) {
        const Id W = param(params.at(prefix + "W" + std::to_string(l)), accumulate);
        const Id b = param(params.at(prefix + "b" + std::to_string(l)), accumulate);
        Id y = affine(W, x, b);
        const bool last = l == spec.layer_count() - 1;
        if (!last) {
            y = spec.hidden == Activation::Relu ? relu_op(y) : tanh_op(y);
        } else if (spec.output == OutputActivation::Logistic) {
            y = logistic_op(y);
        }
        x = y;
    }
    return x;
}

}  // namespace tiarec::nn
