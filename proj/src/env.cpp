#include "tiarec/env.hpp"

#include <algorithm>
#include <cmath>

#include "tiarec/errors.hpp"

namespace tiarec {

double recommender_reward(const PmfFactors& factors, std::int32_t user,
                          std::span<const std::int32_t> top_k) {
    if (top_k.empty()) throw ConfigError("recommender_reward: empty recommendation list");
    if (user < 0 || user >= factors.user_factors.count()) {
        throw DataError("recommender_reward: user index " + std::to_string(user) +
                        " outside factor table");
    }
    const auto u = factors.user_factors.row(user);
    double sum = 0.0;
    for (std::int32_t item : top_k) {
        if (item < 0 || item >= factors.item_factors.count()) {
            throw DataError("recommender_reward: item index " + std::to_string(item) +
                            " outside factor table");
        }
        sum += nn::logistic(nn::dot(u, factors.item_factors.row(item)));
    }
    return sum / static_cast<double>(top_k.size());
}

double classifier_reward(const EpisodeState& state, std::span<const double> action,
                         bool classified_atypical, const VectorTable& emb, bool clamp) {
    const auto& relevant = classified_atypical ? state.atypical : state.normal;
    double r;
    if (relevant.empty()) {
        // Undefined mean over an empty set; neutral value keeps the first
        // classification reward-identical for either action.
        r = 0.5;
    } else {
        double mean_cos = 0.0;
        for (std::int32_t item : relevant) {
            if (item < 0 || item >= emb.count()) {
                throw DataError("classifier_reward: item index " + std::to_string(item) +
                                " outside embedding table");
            }
            mean_cos += nn::cosine(emb.row(item), action);
        }
        mean_cos /= static_cast<double>(relevant.size());
        r = classified_atypical ? 1.0 - mean_cos : mean_cos;
    }
    if (clamp) r = std::clamp(r, 0.0, 1.0);
    return r;
}

double total_reward(double r_rec, double r_cls, double alpha) {
    if (alpha < 0.0) throw ConfigError("total_reward: alpha must be >= 0");
    return r_rec + alpha * r_cls;
}

EpisodeState apply_classification(const EpisodeState& state, std::int32_t item,
                                  bool classified_atypical) {
    EpisodeState next = state;
    next.all.push_back(item);
    if (classified_atypical) {
        next.atypical.push_back(item);
    } else {
        next.normal.push_back(item);
    }
    return next;
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
    if (capacity <= 0) throw ConfigError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    entries_.push_back(std::move(t));
    while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

std::vector<const Transition*> ReplayBuffer::sample(int batch_size, Rng& rng) const {
    if (batch_size <= 0) throw ConfigError("ReplayBuffer::sample: batch size must be positive");
    if (batch_size > size()) {
        throw ConfigError("ReplayBuffer::sample: batch " + std::to_string(batch_size) +
                          " exceeds stored " + std::to_string(size()));
    }
    // Partial Fisher-Yates: the first batch_size slots end up a uniform
    // draw without replacement.
    std::vector<std::int32_t> idx(entries_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int32_t>(i);
    std::vector<const Transition*> out;
    out.reserve(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        const std::size_t j = i + rng.index(idx.size() - i);
        std::swap(idx[i], idx[j]);
        out.push_back(&entries_[idx[i]]);
    }
    return out;
}

}  // namespace tiarec
