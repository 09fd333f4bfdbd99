#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiarec/nn.hpp"
#include "tiarec/rng.hpp"
#include "tiarec/table.hpp"

namespace tiarec {

// One user's rollout state: the full interaction list O, partitioned into
// normal (M) and atypical (N) interactions. Entries are item vocabulary
// indices; duplicates are allowed (the lists are ordered multisets).
struct EpisodeState {
    std::int32_t user = -1;
    std::vector<std::int32_t> all;       // O
    std::vector<std::int32_t> normal;    // M
    std::vector<std::int32_t> atypical;  // N

    bool operator==(const EpisodeState&) const = default;
};

// O must equal M union N as multisets; checked in debug builds after every
// state update and directly by tests.
bool state_partition_ok(const EpisodeState& state);

// Policy mapping the full interaction set O to a prototype item embedding:
// learned-query attention pool followed by an MLP d -> 2d -> d.
struct RecommenderAgent {
    int dim = 0;
    nn::MLPSpec mlp;
    nn::ParameterSet params;  // attn.W, attn.b, attn.q, mlp.W0, mlp.b0, ...
};

// Auxiliary policy scoring how likely the recommended interaction is
// atypical: two externally-queried attention pools (over N and M) feeding
// an MLP 2d -> 2d -> 1 with logistic output.
struct ClassifierAgent {
    int dim = 0;
    nn::MLPSpec mlp;
    nn::ParameterSet params;  // attn_n.W, attn_n.b, attn_m.W, attn_m.b, mlp.*
};

// State-action value head: MLP (4d+1) -> 2d -> 1 over the concatenation of
// the action (item embedding plus classifier probability) with the three
// pooled state embeddings. The pools reuse the agents' attention weights.
struct Critic {
    int dim = 0;
    nn::MLPSpec mlp;
    nn::ParameterSet params;  // mlp.W0, mlp.b0, ...
};

RecommenderAgent make_recommender_agent(int dim, Rng& rng);
ClassifierAgent make_classifier_agent(int dim, Rng& rng);
Critic make_critic(int dim, Rng& rng);

// The three online networks (or their target copies).
struct Networks {
    RecommenderAgent recommender;
    ClassifierAgent classifier;
    Critic critic;

    int dim() const { return recommender.dim; }
};

Networks make_networks(int dim, std::uint64_t seed);

std::vector<std::span<const double>> gather_rows(const VectorTable& emb,
                                                 std::span<const std::int32_t> items);

// Prototype item embedding for the current state. Empty states pool to the
// zero vector, so this is defined at t = 0.
nn::Vec recommender_forward(const RecommenderAgent& agent, const EpisodeState& state,
                            const VectorTable& emb);

// Probability that the interaction described by `query` (an item embedding:
// the recommended action during rollout, the prototype during the agent
// loss pass) is atypical given the current M/N sets.
double classifier_forward(const ClassifierAgent& agent, const EpisodeState& state,
                          std::span<const double> query, const VectorTable& emb);

// Expected cumulative return estimate for (state, action, a_c). The N/M
// pools use the action vector as query; the O pool uses the recommender's
// learned query.
double critic_forward(const Networks& nets, const EpisodeState& state,
                      std::span<const double> action, double a_c, const VectorTable& emb);

// Nearest catalog item to the prototype by cosine similarity, ties broken
// by vocabulary order. With exploration_sigma > 0, zero-mean Gaussian noise
// is added to the prototype before the lookup. A zero prototype falls back
// to a dot-product argmax and logs a warning once per process.
struct ActionChoice {
    std::int32_t item = -1;
    nn::Vec embedding;  // the chosen item's embedding (a_r)
};
ActionChoice select_action(std::span<const double> prototype, const VectorTable& emb,
                           double exploration_sigma, Rng& rng);

// First k items by descending cosine to the prototype, vocabulary-order
// tie-break, optionally excluding a set of items. Throws ConfigError when
// fewer than k items remain.
std::vector<std::int32_t> top_k_items(std::span<const double> prototype, const VectorTable& emb,
                                      int k, std::span<const std::int32_t> exclude = {});

// Unified checkpoint: `<stem>.json` manifest (format_version, dim, tensor
// names and shapes) plus `<stem>.bin` float32 payload in manifest order.
// Holds the online networks and their target copies.
void save_checkpoint(const std::filesystem::path& stem, const Networks& nets,
                     const Networks& targets);
struct Checkpoint {
    Networks nets;
    Networks targets;
};
Checkpoint load_checkpoint(const std::filesystem::path& stem);

}  // namespace tiarec
