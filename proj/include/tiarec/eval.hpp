#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiarec/agents.hpp"
#include "tiarec/corpus.hpp"
#include "tiarec/trainer.hpp"

namespace tiarec {

// Ranking produced for one test instance.
struct RankedList {
    std::int32_t target = -1;
    std::vector<std::int32_t> ranking;
    std::optional<int> rank;  // 1-based rank of target; nullopt when absent
};

struct MetricReport {
    std::vector<int> ks;
    std::map<int, double> hr;
    std::map<int, double> recall;
    std::map<int, double> ndcg;
    std::int64_t users = 0;
    std::int64_t instances = 0;
};

// Replays a logged history through the trained classifier, thresholding
// the atypical probability at 0.5 (no sampling, so evaluation states are
// reproducible). classifier == nullptr sends everything to M.
EpisodeState build_eval_state(std::int32_t user, std::span<const std::int32_t> history,
                              const ClassifierAgent* classifier, const VectorTable& emb);

// Ranks the whole catalog by cosine to the state's prototype. With
// exclude_seen, items already in O are dropped from the ranking.
RankedList rank_for_instance(const RecommenderAgent& agent, const EpisodeState& state,
                             const VectorTable& emb, bool exclude_seen, std::int32_t target);

// HR@k, Recall@k and NDCG@k over per-user ranked lists. A missing target
// counts as rank infinity. Throws ConfigError on an empty user set.
MetricReport compute_metrics(const std::map<std::int32_t, std::vector<RankedList>>& lists,
                             std::span<const int> ks);

struct EvalOptions {
    std::vector<int> ks = {5, 10, 20};
    bool exclude_seen = false;
    bool classifier_enabled = true;
};

// Teacher-forced evaluation: the state for test instance i is built from
// the user's true logged prefix (train + validation + earlier test events).
// Users without test instances or with an empty history are skipped.
MetricReport evaluate_model(const Networks& nets, const DatasetSplit& data,
                            const VectorTable& emb, const EvalOptions& options = {});

// Replaces windows of five consecutive test interactions (the count per
// user is round(noise_level * N_u / 5), placed uniformly without overlap)
// with items drawn from one rare category per window (dataset frequency
// below rare_threshold * mean). Train and validation are untouched.
// Deterministic per seed. Throws DataError when no rare category exists.
DatasetSplit inject_robustness_noise(const DatasetSplit& split, double noise_level,
                                     std::uint64_t seed, double rare_threshold = 0.2);

struct AblationResult {
    MetricReport tiarec;
    MetricReport tiarec_c;
};

// Trains the full model and the classifier-free variant (alpha forced to 0,
// classifier frozen and every interaction routed to M) on the same data and
// seed, then evaluates both on the same k grid.
AblationResult run_ablation(const DatasetSplit& data, const VectorTable& emb,
                            const PmfFactors& factors, const TrainConfig& cfg,
                            const EvalOptions& options = {});

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, MetricReport>>& reports);
std::string metrics_to_json(const MetricReport& report);

}  // namespace tiarec
