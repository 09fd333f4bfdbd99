#pragma once

#include <cstdint>
#include <string>

#include "tiarec/corpus.hpp"
#include "tiarec/table.hpp"

namespace tiarec {

struct SkipGramConfig {
    int dim = 64;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double lr = 0.025;
    std::uint64_t seed = 0;
};

// Skip-gram with negative sampling over the training sequences: an item is
// a word, one user's train portion is a sentence. Negative draws follow the
// unigram^0.75 distribution. Returns one vector per vocabulary item, keyed
// in vocabulary order. Deterministic for a fixed seed.
// Throws ConfigError when the vocabulary is smaller than negatives + 1 or a
// parameter is out of range.
VectorTable pretrain_item_embeddings(const DatasetSplit& data, const SkipGramConfig& config);

struct PmfConfig {
    int dim = 64;
    int negatives_per_positive = 4;
    int epochs = 20;
    double lr = 0.05;
    double reg = 0.01;
    std::uint64_t seed = 0;
};

struct PmfFactors {
    int dim = 0;
    VectorTable user_factors;
    VectorTable item_factors;
};

// Logistic matrix factorization with uniform random negative sampling and
// L2 regularization, fit on the training portion only so the reward
// simulator never sees validation or test interactions. Every vocabulary
// user and item receives a factor. Deterministic for a fixed seed.
PmfFactors fit_pmf(const DatasetSplit& data, const PmfConfig& config);

// logistic(u . v). Throws DataError on an unknown id.
double pmf_probability(const PmfFactors& factors, const std::string& user_id,
                       const std::string& item_id);

// Logistic loss of the factors on the training positives plus a fixed set
// of seeded random negatives; used to watch the objective across epochs.
double pmf_holdout_loss(const PmfFactors& factors, const DatasetSplit& data,
                        int negatives_per_positive, std::uint64_t seed);

void save_pmf(const std::filesystem::path& dir, const PmfFactors& factors);
PmfFactors load_pmf(const std::filesystem::path& dir);

}  // namespace tiarec
