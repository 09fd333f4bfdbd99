#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiarec/agents.hpp"
#include "tiarec/corpus.hpp"
#include "tiarec/env.hpp"
#include "tiarec/pretrain.hpp"

namespace tiarec {

struct TrainConfig {
    double lr = 1e-3;            // lambda
    double gamma = 0.99;         // discount
    double tau = 0.01;           // target fusion coefficient
    double alpha = 0.1;          // classifier reward weight
    int buffer_capacity = 2000;
    int batch_size = 64;
    int reward_k = 10;           // |V_k| for the recommender reward
    int horizon_max = 50;        // episode length cap T_max
    double sigma_start = 0.1;    // exploration noise, annealed linearly to 0
    int epochs = 50;
    std::uint64_t seed = 0;
    bool classifier_enabled = true;       // false = ablated variant
    bool clamp_classifier_reward = true;
    bool warm_start = false;              // seed O_0 with logged history
    int warm_start_items = 5;
    bool use_adam = false;                // plain gradient descent by default

    // Throws ConfigError naming the offending field.
    void validate() const;
};

// Exploration noise for a given epoch under the linear schedule.
double exploration_sigma(const TrainConfig& cfg, int epoch);

struct EpochRecord {
    int epoch = 0;
    double average_q = 0.0;
    double mean_reward_rec = 0.0;
    double mean_reward_cls = 0.0;
    double critic_loss = 0.0;
    double agent_loss = 0.0;
    double wall_seconds = 0.0;  // reported separately; not part of the CSV
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
};

// Deterministic CSV (header epoch,average_q,mean_reward_rec,mean_reward_cls,
// critic_loss,agent_loss). Wall times go to a separate timing file so two
// identical seeded runs produce byte-identical logs.
void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log);
void write_timing_csv(const std::filesystem::path& path, const TrainLog& log);

// TD regression target r + gamma * Q'(s', a'_r + a'_c) computed with the
// target networks; no gradients flow through it. With the classifier
// disabled a'_c is fixed at 0.5.
double td_target(const Transition& t, const Networks& targets, double gamma,
                 const VectorTable& emb, bool classifier_enabled = true);

// Mean squared TD error over the batch. With with_grads, gradients are
// written into the critic MLP tensors only; the pooled state encodings
// enter as constants.
double critic_loss(std::span<const Transition* const> batch, Networks& nets,
                   const Networks& targets, double gamma, const VectorTable& emb,
                   bool with_grads, bool classifier_enabled = true);

// Mean over the batch of ||a_r - a_p||^2 - Q(s, a_p + a_c), with a_p and
// a_c recomputed differentiably (a_c is queried with a_p). Gradients reach
// the recommender and classifier tensors; critic parameters pass gradient
// through but are not accumulated. With the classifier disabled, a_c is a
// constant 0.5 and classifier tensors stay frozen.
double agent_loss(std::span<const Transition* const> batch, Networks& nets,
                  const VectorTable& emb, bool with_grads, bool classifier_enabled = true);

// (1/|U|) sum_u (1/T_u) sum_t q_t. Throws ConfigError on empty input.
double average_q(const std::map<std::int32_t, std::vector<double>>& per_user_estimates);

// Per-step observer for tests and progress reporting.
struct StepInfo {
    int epoch = 0;
    std::int32_t user = -1;
    int t = 0;
    int buffer_size = 0;
    bool updated = false;
};

struct TrainResult {
    Networks nets;
    Networks targets;
    TrainLog log;
};

using StepObserver = std::function<void(const StepInfo&)>;
using EpochObserver = std::function<void(int epoch, const Networks& nets, const Networks& targets,
                                         const TrainLog& log)>;

// Full training loop: per user per step, recommend, classify, reward, store
// the transition, then (once the buffer holds a batch) update the critic,
// the agents and finally the targets. Deterministic for a fixed config.
// `resume_from` restores networks and targets; the buffer always starts
// fresh. Throws ConfigError/DataError before touching any state when the
// config or artifacts are invalid, and NumericError if a loss or estimate
// turns non-finite.
TrainResult train(const DatasetSplit& data, const VectorTable& emb, const PmfFactors& factors,
                  const TrainConfig& cfg, const std::optional<Checkpoint>& resume_from = {},
                  const StepObserver& step_observer = {},
                  const EpochObserver& epoch_observer = {});

// Users eligible for training episodes (at least two train events), in
// vocabulary order.
std::vector<std::int32_t> trainable_users(const DatasetSplit& data);

}  // namespace tiarec
