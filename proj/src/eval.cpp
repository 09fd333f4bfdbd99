#include "tiarec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "tiarec/errors.hpp"

namespace tiarec {

EpisodeState build_eval_state(std::int32_t user, std::span<const std::int32_t> history,
                              const ClassifierAgent* classifier, const VectorTable& emb) {
    EpisodeState state;
    state.user = user;
    for (std::int32_t item : history) {
        bool atypical = false;
        if (classifier != nullptr) {
            const double a_c = classifier_forward(*classifier, state, emb.row(item), emb);
            atypical = a_c > 0.5;  // deterministic threshold, no sampling
        }
        state = apply_classification(state, item, atypical);
    }
    return state;
}

RankedList rank_for_instance(const RecommenderAgent& agent, const EpisodeState& state,
                             const VectorTable& emb, bool exclude_seen, std::int32_t target) {
    const nn::Vec proto = recommender_forward(agent, state, emb);
    std::span<const std::int32_t> exclude;
    if (exclude_seen) exclude = state.all;
    const int available =
        exclude_seen
            ? static_cast<int>(emb.count()) -
                  static_cast<int>(std::set<std::int32_t>(state.all.begin(), state.all.end()).size())
            : static_cast<int>(emb.count());

    RankedList out;
    out.target = target;
    out.ranking = top_k_items(proto, emb, available, exclude);
    for (std::size_t i = 0; i < out.ranking.size(); ++i) {
        if (out.ranking[i] == target) {
            out.rank = static_cast<int>(i) + 1;
            break;
        }
    }
    return out;
}

MetricReport compute_metrics(const std::map<std::int32_t, std::vector<RankedList>>& lists,
                             std::span<const int> ks) {
    if (lists.empty()) throw ConfigError("compute_metrics: empty user set");
    for (const auto& [user, instances] : lists) {
        if (instances.empty()) {
            throw ConfigError("compute_metrics: user " + std::to_string(user) +
                              " has no test instances");
        }
    }

    MetricReport report;
    report.ks.assign(ks.begin(), ks.end());
    report.users = static_cast<std::int64_t>(lists.size());
    for (const auto& [user, instances] : lists) {
        report.instances += static_cast<std::int64_t>(instances.size());
    }

    for (int k : ks) {
        double hr = 0.0;
        double recall = 0.0;
        double ndcg = 0.0;
        for (const auto& [user, instances] : lists) {
            const double n_u = static_cast<double>(instances.size());
            std::int64_t hits = 0;
            double gain = 0.0;
            for (const RankedList& inst : instances) {
                if (inst.rank && *inst.rank <= k) {
                    ++hits;
                    gain += 1.0 / std::log2(1.0 + static_cast<double>(*inst.rank));
                }
            }
            hr += hits >= 1 ? 1.0 : 0.0;
            recall += static_cast<double>(hits) / n_u;
            ndcg += gain / n_u;
        }
        const double users = static_cast<double>(lists.size());
        report.hr[k] = hr / users;
        report.recall[k] = recall / users;
        report.ndcg[k] = ndcg / users;
    }
    return report;
}

MetricReport evaluate_model(const Networks& nets, const DatasetSplit& data,
                            const VectorTable& emb, const EvalOptions& options) {
    const ClassifierAgent* classifier =
        options.classifier_enabled ? &nets.classifier : nullptr;

    std::map<std::int32_t, std::vector<RankedList>> lists;
    for (const auto& [user, test_seq] : data.test) {
        // Logged prefix: train + validation events, then earlier test events
        // as instances advance (teacher forcing).
        std::vector<std::int32_t> prefix;
        for (const SequenceMap* portion : {&data.train, &data.validation}) {
            auto it = portion->find(user);
            if (it == portion->end()) continue;
            for (const Interaction& ev : it->second.events) prefix.push_back(ev.item);
        }
        if (prefix.empty()) continue;  // skipped: no history to build a state from

        std::vector<RankedList> instances;
        instances.reserve(test_seq.events.size());
        for (const Interaction& ev : test_seq.events) {
            const EpisodeState state = build_eval_state(user, prefix, classifier, emb);
            instances.push_back(
                rank_for_instance(nets.recommender, state, emb, options.exclude_seen, ev.item));
            prefix.push_back(ev.item);
        }
        lists.emplace(user, std::move(instances));
    }
    if (lists.empty()) throw DataError("evaluate_model: no evaluable users");
    return compute_metrics(lists, options.ks);
}

namespace {

// Categories whose whole-dataset event frequency is below
// rare_threshold * mean, with the items carrying them.
std::vector<std::pair<std::string, std::vector<std::int32_t>>> rare_categories(
    const DatasetSplit& split, double rare_threshold) {
    std::map<std::string, std::int64_t> counts;
    auto tally = [&](const SequenceMap& portion) {
        for (const auto& [user, seq] : portion) {
            for (const Interaction& ev : seq.events) {
                auto it = split.category_of_item.find(ev.item);
                if (it != split.category_of_item.end()) ++counts[it->second];
            }
        }
    };
    tally(split.train);
    tally(split.validation);
    tally(split.test);
    if (counts.empty()) throw DataError("robustness noise: dataset has no categorized events");

    double total = 0.0;
    for (const auto& [cat, n] : counts) total += static_cast<double>(n);
    const double cutoff = rare_threshold * total / static_cast<double>(counts.size());

    std::vector<std::pair<std::string, std::vector<std::int32_t>>> rare;
    for (const auto& [cat, n] : counts) {
        if (static_cast<double>(n) < cutoff) rare.emplace_back(cat, std::vector<std::int32_t>{});
    }
    if (rare.empty()) {
        std::string msg = "robustness noise: no category has frequency below " +
                          std::to_string(cutoff) + " (counts:";
        for (const auto& [cat, n] : counts) msg += " " + cat + "=" + std::to_string(n);
        throw DataError(msg + ")");
    }
    for (auto& [cat, items] : rare) {
        for (std::int32_t i = 0; i < split.items.size(); ++i) {
            auto it = split.category_of_item.find(i);
            if (it != split.category_of_item.end() && it->second == cat) items.push_back(i);
        }
        if (items.empty()) throw DataError("robustness noise: category " + cat + " has no items");
    }
    return rare;
}

}  // namespace

DatasetSplit inject_robustness_noise(const DatasetSplit& split, double noise_level,
                                     std::uint64_t seed, double rare_threshold) {
    if (noise_level <= 0.0 || noise_level > 1.0) {
        throw ConfigError("robustness noise level must lie in (0, 1]");
    }
    const auto rare = rare_categories(split, rare_threshold);
    Rng rng = derive_rng(seed, "eval.noise");

    constexpr int kWindow = 5;
    DatasetSplit out = split;
    for (auto& [user, seq] : out.test) {
        const int n = static_cast<int>(seq.events.size());
        const int windows =
            static_cast<int>(std::llround(noise_level * static_cast<double>(n) / kWindow));
        if (windows == 0) continue;

        // Non-overlapping starts, drawn uniformly; a window may truncate at
        // the sequence end.
        std::vector<char> used(n, 0);
        std::vector<int> starts;
        int placed = 0;
        int attempts = 0;
        while (placed < windows && attempts < 64 * windows) {
            ++attempts;
            const int start = static_cast<int>(rng.index(n));
            const int end = std::min(start + kWindow, n);
            bool free = true;
            for (int i = start; i < end; ++i) {
                if (used[i]) {
                    free = false;
                    break;
                }
            }
            if (!free) continue;
            for (int i = start; i < end; ++i) used[i] = 1;
            starts.push_back(start);
            ++placed;
        }

        for (int start : starts) {
            const auto& [cat, items] = rare[rng.index(rare.size())];
            const int end = std::min(start + kWindow, n);
            for (int i = start; i < end; ++i) {
                seq.events[i].item = items[rng.index(items.size())];
            }
        }
    }
    return out;
}

AblationResult run_ablation(const DatasetSplit& data, const VectorTable& emb,
                            const PmfFactors& factors, const TrainConfig& cfg,
                            const EvalOptions& options) {
    AblationResult result;

    const TrainResult full = train(data, emb, factors, cfg);
    EvalOptions full_opts = options;
    full_opts.classifier_enabled = true;
    result.tiarec = evaluate_model(full.nets, data, emb, full_opts);

    TrainConfig ablated_cfg = cfg;
    ablated_cfg.alpha = 0.0;
    ablated_cfg.classifier_enabled = false;
    const TrainResult ablated = train(data, emb, factors, ablated_cfg);
    EvalOptions ablated_opts = options;
    ablated_opts.classifier_enabled = false;
    result.tiarec_c = evaluate_model(ablated.nets, data, emb, ablated_opts);

    return result;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, MetricReport>>& reports) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "model,k,hr,recall,ndcg\n";
    char buf[48];
    for (const auto& [model, report] : reports) {
        for (int k : report.ks) {
            out << model << ',' << k;
            for (double v : {report.hr.at(k), report.recall.at(k), report.ndcg.at(k)}) {
                std::snprintf(buf, sizeof(buf), "%.12g", v);
                out << ',' << buf;
            }
            out << '\n';
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
}

std::string metrics_to_json(const MetricReport& report) {
    nlohmann::ordered_json j;
    j["users"] = report.users;
    j["instances"] = report.instances;
    j["ks"] = report.ks;
    nlohmann::ordered_json hr, recall, ndcg;
    for (int k : report.ks) {
        const std::string key = std::to_string(k);
        hr[key] = report.hr.at(k);
        recall[key] = report.recall.at(k);
        ndcg[key] = report.ndcg.at(k);
    }
    j["hr"] = hr;
    j["recall"] = recall;
    j["ndcg"] = ndcg;
    return j.dump(2);
}

}  // namespace tiarec
