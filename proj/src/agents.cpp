#include "tiarec/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>

#include <json.hpp>

#include "tiarec/errors.hpp"

namespace tiarec {

bool state_partition_ok(const EpisodeState& state) {
    if (state.all.size() != state.normal.size() + state.atypical.size()) return false;
    std::map<std::int32_t, std::int64_t> counts;
    for (std::int32_t i : state.all) ++counts[i];
    for (std::int32_t i : state.normal) --counts[i];
    for (std::int32_t i : state.atypical) --counts[i];
    for (const auto& [item, c] : counts) {
        if (c != 0) return false;
    }
    return true;
}

RecommenderAgent make_recommender_agent(int dim, Rng& rng) {
    if (dim < 2) throw ConfigError("recommender: dim must be >= 2");
    RecommenderAgent agent;
    agent.dim = dim;
    agent.mlp = {{dim, 2 * dim, dim}, nn::Activation::Relu, nn::OutputActivation::Identity};
    nn::init_attention(agent.params, dim, "attn.", /*learned_query=*/true, rng);
    nn::init_mlp(agent.params, agent.mlp, "mlp.", rng);
    return agent;
}

ClassifierAgent make_classifier_agent(int dim, Rng& rng) {
    if (dim < 2) throw ConfigError("classifier: dim must be >= 2");
    ClassifierAgent agent;
    agent.dim = dim;
    agent.mlp = {{2 * dim, 2 * dim, 1}, nn::Activation::Relu, nn::OutputActivation::Logistic};
    nn::init_attention(agent.params, dim, "attn_n.", /*learned_query=*/false, rng);
    nn::init_attention(agent.params, dim, "attn_m.", /*learned_query=*/false, rng);
    nn::init_mlp(agent.params, agent.mlp, "mlp.", rng);
    return agent;
}

Critic make_critic(int dim, Rng& rng) {
    if (dim < 2) throw ConfigError("critic: dim must be >= 2");
    Critic critic;
    critic.dim = dim;
    critic.mlp = {{4 * dim + 1, 2 * dim, 1}, nn::Activation::Relu, nn::OutputActivation::Identity};
    nn::init_mlp(critic.params, critic.mlp, "mlp.", rng);
    return critic;
}

Networks make_networks(int dim, std::uint64_t seed) {
    Networks nets;
    Rng r = derive_rng(seed, "init.recommender");
    nets.recommender = make_recommender_agent(dim, r);
    Rng c = derive_rng(seed, "init.classifier");
    nets.classifier = make_classifier_agent(dim, c);
    Rng q = derive_rng(seed, "init.critic");
    nets.critic = make_critic(dim, q);
    return nets;
}

std::vector<std::span<const double>> gather_rows(const VectorTable& emb,
                                                 std::span<const std::int32_t> items) {
    std::vector<std::span<const double>> rows;
    rows.reserve(items.size());
    for (std::int32_t i : items) {
        if (i < 0 || i >= emb.count()) {
            throw DataError("item index " + std::to_string(i) + " outside embedding table");
        }
        rows.push_back(emb.row(i));
    }
    return rows;
}

nn::Vec recommender_forward(const RecommenderAgent& agent, const EpisodeState& state,
                            const VectorTable& emb) {
    const auto items = gather_rows(emb, state.all);
    const auto view = nn::attention_view(agent.params, "attn.");
    const nn::Vec pooled = nn::attention_pool(items, view);
    return nn::mlp_forward(agent.mlp, agent.params, pooled);
}

double classifier_forward(const ClassifierAgent& agent, const EpisodeState& state,
                          std::span<const double> query, const VectorTable& emb) {
    if (static_cast<int>(query.size()) != agent.dim) {
        throw ConfigError("classifier_forward: query length != d");
    }
    const auto n_items = gather_rows(emb, state.atypical);
    const auto m_items = gather_rows(emb, state.normal);
    const nn::Vec zn = nn::attention_pool(n_items, nn::attention_view(agent.params, "attn_n."), query);
    const nn::Vec zm = nn::attention_pool(m_items, nn::attention_view(agent.params, "attn_m."), query);
    nn::Vec input;
    input.reserve(zn.size() + zm.size());
    input.insert(input.end(), zn.begin(), zn.end());
    input.insert(input.end(), zm.begin(), zm.end());
    return nn::mlp_forward(agent.mlp, agent.params, input)[0];
}

double critic_forward(const Networks& nets, const EpisodeState& state,
                      std::span<const double> action, double a_c, const VectorTable& emb) {
    const int d = nets.dim();
    if (static_cast<int>(action.size()) != d) throw ConfigError("critic_forward: action length != d");
    if (a_c < 0.0 || a_c > 1.0) throw ConfigError("critic_forward: a_c outside [0, 1]");

    const auto o_items = gather_rows(emb, state.all);
    const auto n_items = gather_rows(emb, state.atypical);
    const auto m_items = gather_rows(emb, state.normal);

    const nn::Vec zo =
        nn::attention_pool(o_items, nn::attention_view(nets.recommender.params, "attn."));
    const nn::Vec zn =
        nn::attention_pool(n_items, nn::attention_view(nets.classifier.params, "attn_n."), action);
    const nn::Vec zm =
        nn::attention_pool(m_items, nn::attention_view(nets.classifier.params, "attn_m."), action);

    nn::Vec input;
    input.reserve(4 * d + 1);
    input.insert(input.end(), action.begin(), action.end());
    input.push_back(a_c);
    input.insert(input.end(), zo.begin(), zo.end());
    input.insert(input.end(), zn.begin(), zn.end());
    input.insert(input.end(), zm.begin(), zm.end());
    return nn::mlp_forward(nets.critic.mlp, nets.critic.params, input)[0];
}

namespace {

std::int32_t argmax_by(const VectorTable& emb,
                       const std::function<double(std::span<const double>)>& score) {
    std::int32_t best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::int32_t i = 0; i < emb.count(); ++i) {
        const double s = score(emb.row(i));
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

}  // namespace

ActionChoice select_action(std::span<const double> prototype, const VectorTable& emb,
                           double exploration_sigma, Rng& rng) {
    if (emb.count() == 0) throw DataError("select_action: empty embedding table");
    nn::Vec probe(prototype.begin(), prototype.end());
    if (exploration_sigma > 0.0) {
        for (double& v : probe) v += exploration_sigma * rng.normal();
    }

    std::int32_t best;
    if (nn::norm(probe) == 0.0) {
        static bool warned = false;
        if (!warned) {
            warned = true;
            std::cerr << "warning: zero prototype, falling back to dot-product argmax\n";
        }
        best = argmax_by(emb, [&](std::span<const double> v) { return nn::dot(probe, v); });
    } else {
        best = argmax_by(emb, [&](std::span<const double> v) { return nn::cosine(probe, v); });
    }
    const auto row = emb.row(best);
    return {best, nn::Vec(row.begin(), row.end())};
}

std::vector<std::int32_t> top_k_items(std::span<const double> prototype, const VectorTable& emb,
                                      int k, std::span<const std::int32_t> exclude) {
    if (k < 1) throw ConfigError("top_k_items: k must be >= 1");
    std::vector<char> skip(emb.count(), 0);
    for (std::int32_t e : exclude) {
        if (e >= 0 && e < emb.count()) skip[e] = 1;
    }

    const bool zero_proto = nn::norm(prototype) == 0.0;
    std::vector<std::pair<double, std::int32_t>> scored;
    scored.reserve(emb.count());
    for (std::int32_t i = 0; i < emb.count(); ++i) {
        if (skip[i]) continue;
        const double s =
            zero_proto ? nn::dot(prototype, emb.row(i)) : nn::cosine(prototype, emb.row(i));
        scored.emplace_back(s, i);
    }
    if (static_cast<int>(scored.size()) < k) {
        throw ConfigError("top_k_items: k = " + std::to_string(k) + " exceeds " +
                          std::to_string(scored.size()) + " available items");
    }
    auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;  // vocabulary-order tie-break
    };
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);
    std::vector<std::int32_t> out(k);
    for (int i = 0; i < k; ++i) out[i] = scored[i].second;
    return out;
}

namespace {

constexpr int kCheckpointVersion = 1;

std::vector<std::pair<std::string, nn::ParameterSet*>> network_sets(Networks& nets,
                                                                    Networks& targets) {
    return {
        {"recommender.", &nets.recommender.params},
        {"classifier.", &nets.classifier.params},
        {"critic.", &nets.critic.params},
        {"target.recommender.", &targets.recommender.params},
        {"target.classifier.", &targets.classifier.params},
        {"target.critic.", &targets.critic.params},
    };
}

std::vector<std::pair<std::string, const nn::ParameterSet*>> network_sets(
    const Networks& nets, const Networks& targets) {
    return {
        {"recommender.", &nets.recommender.params},
        {"classifier.", &nets.classifier.params},
        {"critic.", &nets.critic.params},
        {"target.recommender.", &targets.recommender.params},
        {"target.classifier.", &targets.classifier.params},
        {"target.critic.", &targets.critic.params},
    };
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const Networks& nets,
                     const Networks& targets) {
    const auto sets = network_sets(nets, targets);

    nlohmann::ordered_json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["dim"] = nets.dim();
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    std::vector<double> payload;
    for (const auto& [prefix, set] : sets) {
        for (std::size_t i = 0; i < set->size(); ++i) {
            auto [name, t] = set->entry(i);
            nlohmann::ordered_json entry;
            entry["name"] = prefix + *name;
            entry["shape"] = t->shape;
            tensors.push_back(entry);
            payload.insert(payload.end(), t->value.begin(), t->value.end());
        }
    }
    manifest["tensors"] = tensors;

    std::filesystem::path json_path = stem;
    json_path += ".json";
    std::ofstream out(json_path);
    if (!out) throw DataError("cannot open for writing: " + json_path.string());
    out << manifest.dump(2) << '\n';

    std::filesystem::path bin_path = stem;
    bin_path += ".bin";
    write_f32_payload(bin_path, payload);
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
    std::filesystem::path json_path = stem;
    json_path += ".json";
    std::ifstream in(json_path);
    if (!in) throw DataError("cannot open: " + json_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad checkpoint manifest " + json_path.string() + ": " + e.what());
    }
    if (manifest.value("format_version", 0) != kCheckpointVersion) {
        throw DataError("unsupported checkpoint format_version in " + json_path.string());
    }
    const int dim = manifest.at("dim").get<int>();

    Checkpoint ckpt;
    ckpt.nets = make_networks(dim, 0);
    ckpt.targets = make_networks(dim, 0);
    auto sets = network_sets(ckpt.nets, ckpt.targets);

    std::int64_t total = 0;
    std::vector<std::pair<nn::Tensor*, std::vector<int>>> order;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string full = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int>>();
        nn::Tensor* found = nullptr;
        for (auto& [prefix, set] : sets) {
            if (full.rfind(prefix, 0) == 0) {
                const std::string local = full.substr(prefix.size());
                if (set->contains(local)) {
                    found = &set->at(local);
                    break;
                }
            }
        }
        if (!found) throw DataError("checkpoint tensor '" + full + "' does not match any network");
        if (found->shape != shape) throw DataError("checkpoint shape mismatch for '" + full + "'");
        order.emplace_back(found, shape);
        total += found->size();
    }

    std::filesystem::path bin_path = stem;
    bin_path += ".bin";
    const auto payload = read_f32_payload(bin_path, static_cast<std::size_t>(total));
    std::size_t off = 0;
    for (auto& [tensor, shape] : order) {
        std::copy(payload.begin() + off, payload.begin() + off + tensor->value.size(),
                  tensor->value.begin());
        off += tensor->value.size();
    }
    return ckpt;
}

}  // namespace tiarec
