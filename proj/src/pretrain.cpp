#include "tiarec/pretrain.hpp"

#include <algorithm>
#include <set>
#include <cmath>

#include "tiarec/errors.hpp"
#include "tiarec/nn.hpp"
#include "tiarec/rng.hpp"

namespace tiarec {

namespace {

// Cumulative unigram^0.75 distribution over item counts, sampled by binary
// search on a uniform draw.
struct NegativeSampler {
    std::vector<double> cdf;

    explicit NegativeSampler(const std::vector<std::int64_t>& counts) {
        cdf.resize(counts.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            acc += std::pow(static_cast<double>(counts[i]), 0.75);
            cdf[i] = acc;
        }
        if (acc <= 0.0) throw DataError("negative sampler: no observed items");
        for (double& c : cdf) c /= acc;
    }

    std::int32_t draw(Rng& rng) const {
        const double u = rng.uniform();
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        return static_cast<std::int32_t>(std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1));
    }
};

std::vector<std::vector<std::int32_t>> training_sentences(const DatasetSplit& data) {
    std::vector<std::vector<std::int32_t>> sentences;
    sentences.reserve(data.train.size());
    for (const auto& [user, seq] : data.train) {
        std::vector<std::int32_t> items;
        items.reserve(seq.events.size());
        for (const Interaction& ev : seq.events) items.push_back(ev.item);
        sentences.push_back(std::move(items));
    }
    return sentences;
}

}  // namespace

VectorTable pretrain_item_embeddings(const DatasetSplit& data, const SkipGramConfig& config) {
    if (config.dim < 2) throw ConfigError("embed.dim must be >= 2");
    if (config.window < 1) throw ConfigError("embed.window must be >= 1");
    if (config.negatives < 1) throw ConfigError("embed.negatives must be >= 1");
    if (config.epochs < 0) throw ConfigError("embed.epochs must be >= 0");
    if (config.lr <= 0.0) throw ConfigError("embed.lr must be positive");
    const std::int32_t vocab = data.items.size();
    if (vocab < config.negatives + 1) {
        throw ConfigError("embed.negatives + 1 exceeds the item vocabulary size");
    }

    const int d = config.dim;
    Rng rng = derive_rng(config.seed, "pretrain.skipgram");

    VectorTable table(d, data.items.ids());
    const double init_bound = 0.5 / static_cast<double>(d);
    for (double& v : table.values()) v = rng.uniform(-init_bound, init_bound);
    std::vector<double> context(static_cast<std::size_t>(vocab) * d, 0.0);

    const auto sentences = training_sentences(data);
    std::vector<std::int64_t> counts(vocab, 0);
    for (const auto& s : sentences) {
        for (std::int32_t item : s) ++counts[item];
    }
    const NegativeSampler sampler(counts);

    std::vector<double> accum(d);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& sentence : sentences) {
            const int len = static_cast<int>(sentence.size());
            for (int i = 0; i < len; ++i) {
                const std::int32_t center = sentence[i];
                double* in = table.row(center).data();
                const int lo = std::max(0, i - config.window);
                const int hi = std::min(len - 1, i + config.window);
                for (int j = lo; j <= hi; ++j) {
                    if (j == i) continue;
                    const std::int32_t positive = sentence[j];
                    std::fill(accum.begin(), accum.end(), 0.0);
                    for (int k = 0; k <= config.negatives; ++k) {
                        std::int32_t target;
                        double label;
                        if (k == 0) {
                            target = positive;
                            label = 1.0;
                        } else {
                            target = sampler.draw(rng);
                            if (target == positive) continue;
                            label = 0.0;
                        }
                        double* out = context.data() + static_cast<std::size_t>(target) * d;
                        double f = 0.0;
                        for (int c = 0; c < d; ++c) f += in[c] * out[c];
                        const double g = (label - nn::logistic(f)) * config.lr;
                        for (int c = 0; c < d; ++c) {
                            accum[c] += g * out[c];
                            out[c] += g * in[c];
                        }
                    }
                    for (int c = 0; c < d; ++c) in[c] += accum[c];
                }
            }
        }
    }
    return table;
}

double pmf_holdout_loss(const PmfFactors& factors, const DatasetSplit& data,
                        int negatives_per_positive, std::uint64_t seed) {
    Rng rng = derive_rng(seed, "pretrain.pmf_eval");
    const std::int32_t vocab = data.items.size();
    std::vector<std::set<std::int32_t>> seen(data.users.size());
    for (const auto& [user, seq] : data.train) {
        for (const Interaction& ev : seq.events) seen[ev.user].insert(ev.item);
    }
    double loss = 0.0;
    for (const auto& [user, seq] : data.train) {
        for (const Interaction& ev : seq.events) {
            const auto u = factors.user_factors.row(ev.user);
            const double p = nn::logistic(nn::dot(u, factors.item_factors.row(ev.item)));
            loss -= std::log(std::max(p, 1e-12));
            for (int k = 0; k < negatives_per_positive; ++k) {
                const auto neg = static_cast<std::int32_t>(rng.index(vocab));
                if (seen[ev.user].count(neg)) continue;  // same rule as training
                const double pn = nn::logistic(nn::dot(u, factors.item_factors.row(neg)));
                loss -= std::log(std::max(1.0 - pn, 1e-12));
            }
        }
    }
    return loss;
}

PmfFactors fit_pmf(const DatasetSplit& data, const PmfConfig& config) {
    if (config.dim < 2) throw ConfigError("pmf.dim must be >= 2");
    if (config.negatives_per_positive < 1) throw ConfigError("pmf.negatives must be >= 1");
    if (config.epochs < 0) throw ConfigError("pmf.epochs must be >= 0");
    if (config.lr <= 0.0) throw ConfigError("pmf.lr must be positive");
    if (config.reg < 0.0) throw ConfigError("pmf.reg must be >= 0");

    const int d = config.dim;
    Rng rng = derive_rng(config.seed, "pretrain.pmf");

    PmfFactors factors;
    factors.dim = d;
    factors.user_factors = VectorTable(d, data.users.ids());
    factors.item_factors = VectorTable(d, data.items.ids());
    const double init_bound = 0.5 / static_cast<double>(d);
    for (double& v : factors.user_factors.values()) v = rng.uniform(-init_bound, init_bound);
    for (double& v : factors.item_factors.values()) v = rng.uniform(-init_bound, init_bound);

    // Positives: every training event. Seen-item sets gate the negative
    // draws: a sampled negative the user actually interacted with is
    // skipped rather than pushed down.
    std::vector<std::pair<std::int32_t, std::int32_t>> positives;
    std::vector<std::set<std::int32_t>> seen(data.users.size());
    for (const auto& [user, seq] : data.train) {
        for (const Interaction& ev : seq.events) {
            positives.emplace_back(ev.user, ev.item);
            seen[ev.user].insert(ev.item);
        }
    }
    if (positives.empty()) throw DataError("fit_pmf: no training events");
    const std::int32_t vocab = data.items.size();

    std::vector<double> u_old(d);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& [user, item] : positives) {
            double* u = factors.user_factors.row(user).data();
            double* v = factors.item_factors.row(item).data();
            std::copy(u, u + d, u_old.begin());

            double f = 0.0;
            for (int c = 0; c < d; ++c) f += u[c] * v[c];
            const double coef = nn::logistic(f) - 1.0;
            for (int c = 0; c < d; ++c) {
                u[c] -= config.lr * (coef * v[c] + config.reg * u[c]);
                v[c] -= config.lr * (coef * u_old[c] + config.reg * v[c]);
            }
            for (int k = 0; k < config.negatives_per_positive; ++k) {
                const auto neg = static_cast<std::int32_t>(rng.index(vocab));
                if (seen[user].count(neg)) continue;  // collides with an observed positive
                double* vn = factors.item_factors.row(neg).data();
                std::copy(u, u + d, u_old.begin());
                double fn = 0.0;
                for (int c = 0; c < d; ++c) fn += u[c] * vn[c];
                const double cn = nn::logistic(fn);
                for (int c = 0; c < d; ++c) {
                    u[c] -= config.lr * cn * vn[c];
                    vn[c] -= config.lr * (cn * u_old[c] + config.reg * vn[c]);
                }
            }
        }
    }
    return factors;
}

double pmf_probability(const PmfFactors& factors, const std::string& user_id,
                       const std::string& item_id) {
    const auto u = factors.user_factors.row_of(user_id);
    const auto v = factors.item_factors.row_of(item_id);
    return nn::logistic(nn::dot(u, v));
}

void save_pmf(const std::filesystem::path& dir, const PmfFactors& factors) {
    std::filesystem::create_directories(dir);
    save_table(dir / "pmf_users", factors.user_factors);
    save_table(dir / "pmf_items", factors.item_factors);
}

PmfFactors load_pmf(const std::filesystem::path& dir) {
    PmfFactors factors;
    factors.user_factors = load_table(dir / "pmf_users");
    factors.item_factors = load_table(dir / "pmf_items");
    if (factors.user_factors.dim() != factors.item_factors.dim()) {
        throw DataError("PMF factor tables disagree on dim");
    }
    factors.dim = factors.user_factors.dim();
    return factors;
}

}  // namespace tiarec
