#include "tiarec/nn.hpp"

#include <algorithm>
#include <cmath>

#include "tiarec/errors.hpp"

namespace tiarec::nn {

Tensor& ParameterSet::add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw ConfigError("ParameterSet: duplicate tensor '" + name + "'");
    std::int64_t n = 1;
    for (int s : shape) {
        if (s <= 0) throw ConfigError("ParameterSet: non-positive dimension in '" + name + "'");
        n *= s;
    }
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, Tensor{std::move(shape), Vec(n, 0.0), Vec(n, 0.0)});
    return entries_.back().second;
}

Tensor& ParameterSet::at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("ParameterSet: no tensor '" + std::string(name) + "'");
    return entries_[it->second].second;
}

const Tensor& ParameterSet::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("ParameterSet: no tensor '" + std::string(name) + "'");
    return entries_[it->second].second;
}

bool ParameterSet::contains(std::string_view name) const {
    return index_.count(std::string(name)) > 0;
}

std::pair<const std::string*, Tensor*> ParameterSet::entry(std::size_t i) {
    auto& [name, tensor] = entries_.at(i);
    return {&name, &tensor};
}

std::pair<const std::string*, const Tensor*> ParameterSet::entry(std::size_t i) const {
    const auto& [name, tensor] = entries_.at(i);
    return {&name, &tensor};
}

void ParameterSet::zero_grads() {
    for (auto& [name, t] : entries_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

std::int64_t ParameterSet::value_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void init_mlp(ParameterSet& params, const MLPSpec& spec, const std::string& prefix, Rng& rng) {
    if (spec.widths.size() < 2) throw ConfigError("MLPSpec: need at least one layer");
    for (int l = 0; l < spec.layer_count(); ++l) {
        const int fan_in = spec.widths[l];
        const int fan_out = spec.widths[l + 1];
        Tensor& W = params.add(prefix + "W" + std::to_string(l), {fan_out, fan_in});
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& w : W.value) w = rng.uniform(-bound, bound);
        params.add(prefix + "b" + std::to_string(l), {fan_out});
    }
}

void init_attention(ParameterSet& params, int dim, const std::string& prefix, bool learned_query,
                    Rng& rng) {
    Tensor& W = params.add(prefix + "W", {dim, dim});
    const double bound = std::sqrt(6.0 / static_cast<double>(dim + dim));
    for (double& w : W.value) w = rng.uniform(-bound, bound);
    params.add(prefix + "b", {dim});
    if (learned_query) {
        Tensor& q = params.add(prefix + "q", {dim});
        const double qbound = std::sqrt(6.0 / static_cast<double>(dim + 1));
        for (double& w : q.value) w = rng.uniform(-qbound, qbound);
    }
}

AttentionParams attention_view(const ParameterSet& params, const std::string& prefix) {
    AttentionParams view;
    view.W = &params.at(prefix + "W");
    view.b = &params.at(prefix + "b");
    view.q = params.contains(prefix + "q") ? &params.at(prefix + "q") : nullptr;
    return view;
}

Vec attention_pool(std::span<const std::span<const double>> items, const AttentionParams& params,
                   std::span<const double> query, Vec* weights_out) {
    const int d = params.W->rows();
    if (params.W->cols() != d) throw ConfigError("attention: W must be square");
    if (static_cast<int>(params.b->size()) != d) throw ConfigError("attention: bias length != d");

    std::span<const double> q;
    if (!query.empty()) {
        q = query;
    } else if (params.q != nullptr) {
        q = std::span<const double>(params.q->value);
    } else {
        throw ConfigError("attention: no query supplied and none learned");
    }
    if (static_cast<int>(q.size()) != d) throw ConfigError("attention: query length != d");

    if (weights_out) weights_out->clear();
    if (items.empty()) return Vec(d, 0.0);

    const double* W = params.W->value.data();
    const double* b = params.b->value.data();

    // score_i = q . tanh(W * item_i + b)
    std::vector<double> scores(items.size());
    Vec h(d);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        if (static_cast<int>(item.size()) != d) throw ConfigError("attention: item length != d");
        for (int r = 0; r < d; ++r) {
            double s = b[r];
            const double* wrow = W + static_cast<std::size_t>(r) * d;
            for (int c = 0; c < d; ++c) s += wrow[c] * item[c];
            h[r] = std::tanh(s);
        }
        scores[i] = dot(q, h);
    }

    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
    }
    Vec pooled(d, 0.0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const double alpha = scores[i] / z;
        if (weights_out) weights_out->push_back(alpha);
        const auto& item = items[i];
        for (int c = 0; c < d; ++c) pooled[c] += alpha * item[c];
    }
    return pooled;
}

namespace {

void apply_hidden(Activation act, Vec& v) {
    switch (act) {
        case Activation::Tanh:
            for (double& x : v) x = std::tanh(x);
            break;
        case Activation::Relu:
            for (double& x : v) x = x > 0.0 ? x : 0.0;
            break;
    }
}

}  // namespace

Vec mlp_forward(const MLPSpec& spec, const ParameterSet& params, std::span<const double> input,
                const std::string& prefix) {
    if (static_cast<int>(input.size()) != spec.input_dim()) {
        throw ConfigError("mlp_forward: input length " + std::to_string(input.size()) +
                          " != spec width " + std::to_string(spec.input_dim()));
    }
    Vec x(input.begin(), input.end());
    for (int l = 0; l < spec.layer_count(); ++l) {
        const Tensor& W = params.at(prefix + "W" + std::to_string(l));
        const Tensor& b = params.at(prefix + "b" + std::to_string(l));
        if (W.cols() != static_cast<int>(x.size())) {
            throw ConfigError("mlp_forward: shape mismatch at layer " + std::to_string(l));
        }
        Vec y(W.rows());
        for (int r = 0; r < W.rows(); ++r) {
            double s = b.value[r];
            const double* wrow = W.value.data() + static_cast<std::size_t>(r) * W.cols();
            for (int c = 0; c < W.cols(); ++c) s += wrow[c] * x[c];
            y[r] = s;
        }
        const bool last = l == spec.layer_count() - 1;
        if (!last) {
            apply_hidden(spec.hidden, y);
        } else if (spec.output == OutputActivation::Logistic) {
            for (double& v : y) v = logistic(v);
        }
        x = std::move(y);
    }
    return x;
}

void sgd_step(ParameterSet& params, double lr) {
    if (lr <= 0.0) throw ConfigError("sgd_step: lr must be positive");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor* t = params.entry(i).second;
        for (std::size_t j = 0; j < t->value.size(); ++j) t->value[j] -= lr * t->grad[j];
        std::fill(t->grad.begin(), t->grad.end(), 0.0);
    }
}

void adam_step(ParameterSet& params, AdamState& state, double lr) {
    if (lr <= 0.0) throw ConfigError("adam_step: lr must be positive");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto n = params.entry(i).second->value.size();
            state.m[i].assign(n, 0.0);
            state.v[i].assign(n, 0.0);
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor* t = params.entry(i).second;
        for (std::size_t j = 0; j < t->value.size(); ++j) {
            const double g = t->grad[j];
            state.m[i][j] = state.beta1 * state.m[i][j] + (1.0 - state.beta1) * g;
            state.v[i][j] = state.beta2 * state.v[i][j] + (1.0 - state.beta2) * g * g;
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            t->value[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        std::fill(t->grad.begin(), t->grad.end(), 0.0);
    }
}

void soft_update(ParameterSet& target, const ParameterSet& online, double tau) {
    if (tau < 0.0 || tau > 1.0) throw ConfigError("soft_update: tau must lie in [0, 1]");
    if (target.size() != online.size()) throw ConfigError("soft_update: parameter count mismatch");
    for (std::size_t i = 0; i < target.size(); ++i) {
        auto [tname, t] = target.entry(i);
        auto [oname, o] = online.entry(i);
        if (*tname != *oname || t->shape != o->shape) {
            throw ConfigError("soft_update: mismatched tensor '" + *tname + "'");
        }
        for (std::size_t j = 0; j < t->value.size(); ++j) {
            t->value[j] = tau * o->value[j] + (1.0 - tau) * t->value[j];
        }
    }
}

}  // namespace tiarec::nn
