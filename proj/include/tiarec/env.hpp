#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "tiarec/agents.hpp"
#include "tiarec/pretrain.hpp"
#include "tiarec/rng.hpp"

namespace tiarec {

// One step of experience. The classifier probability and the sampled
// outcome are stored alongside the canonical (s, a, r, s') tuple because
// the critic loss needs them.
struct Transition {
    EpisodeState before;
    EpisodeState after;
    std::int32_t item = -1;   // recommended item (a_r)
    double a_c = 0.5;         // classifier probability
    bool atypical = false;    // sampled classification outcome
    double reward = 0.0;      // fused immediate reward r_t
};

// Mean interaction probability over the recommended list:
// (1/k) sum logistic(u . v). Factors must be aligned to the vocabularies
// (user/item indices address rows directly).
double recommender_reward(const PmfFactors& factors, std::int32_t user,
                          std::span<const std::int32_t> top_k);

// Reward for one classification decision, measured against the pre-update
// state: 1 - mean cosine to N when classified atypical, mean cosine to M
// when classified normal. An empty relevant set scores a neutral 0.5.
// Clamped to [0, 1] unless `clamp` is false.
double classifier_reward(const EpisodeState& state, std::span<const double> action,
                         bool classified_atypical, const VectorTable& emb, bool clamp = true);

// r = r_rec + alpha * r_cls. Throws ConfigError when alpha < 0.
double total_reward(double r_rec, double r_cls, double alpha);

// Returns a new state with `item` appended to O and to exactly one of M/N.
// The input state is not modified.
EpisodeState apply_classification(const EpisodeState& state, std::int32_t item,
                                  bool classified_atypical);

// Bounded FIFO store of transitions; eviction is strictly oldest-first.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(int capacity);

    void push(Transition t);
    // Uniform sample without replacement. Throws ConfigError when fewer
    // than batch_size transitions are stored.
    std::vector<const Transition*> sample(int batch_size, Rng& rng) const;

    int size() const { return static_cast<int>(entries_.size()); }
    int capacity() const { return capacity_; }
    const Transition& at(int i) const { return entries_.at(i); }

  private:
    int capacity_;
    std::deque<Transition> entries_;
};

}  // namespace tiarec
