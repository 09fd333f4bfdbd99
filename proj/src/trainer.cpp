#include "tiarec/trainer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tiarec/errors.hpp"
#include "tiarec/tape.hpp"

namespace tiarec {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("train.gamma must lie in (0, 1]");
    if (tau < 0.0 || tau > 1.0) throw ConfigError("train.tau must lie in [0, 1]");
    if (alpha < 0.0) throw ConfigError("train.alpha must be >= 0");
    if (buffer_capacity <= 0) throw ConfigError("train.buffer must be positive");
    if (batch_size <= 0) throw ConfigError("train.batch must be positive");
    if (batch_size > buffer_capacity) throw ConfigError("train.batch exceeds train.buffer");
    if (reward_k <= 0) throw ConfigError("train.k must be positive");
    if (horizon_max <= 0) throw ConfigError("train.horizon must be positive");
    if (sigma_start < 0.0) throw ConfigError("train.sigma must be >= 0");
    if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (warm_start_items < 0) throw ConfigError("train.warm_start_items must be >= 0");
}

double exploration_sigma(const TrainConfig& cfg, int epoch) {
    if (cfg.epochs <= 1) return cfg.sigma_start;
    const double progress = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    return cfg.sigma_start * (1.0 - progress);
}

namespace {

void append_csv_double(std::string& line, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    line += buf;
}

}  // namespace

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "epoch,average_q,mean_reward_rec,mean_reward_cls,critic_loss,agent_loss\n";
    for (const EpochRecord& r : log.epochs) {
        std::string line = std::to_string(r.epoch);
        for (double v : {r.average_q, r.mean_reward_rec, r.mean_reward_cls, r.critic_loss,
                         r.agent_loss}) {
            line += ',';
            append_csv_double(line, v);
        }
        out << line << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

void write_timing_csv(const std::filesystem::path& path, const TrainLog& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "epoch,wall_seconds\n";
    for (const EpochRecord& r : log.epochs) {
        std::string line = std::to_string(r.epoch);
        line += ',';
        append_csv_double(line, r.wall_seconds);
        out << line << '\n';
    }
}

double td_target(const Transition& t, const Networks& targets, double gamma,
                 const VectorTable& emb, bool classifier_enabled) {
    // Next action from the target recommender: prototype -> nearest item.
    const nn::Vec proto = recommender_forward(targets.recommender, t.after, emb);
    Rng no_noise(0);
    const ActionChoice next = select_action(proto, emb, 0.0, no_noise);
    const double a_c_next =
        classifier_enabled ? classifier_forward(targets.classifier, t.after, next.embedding, emb)
                           : 0.5;
    const double q_next = critic_forward(targets, t.after, next.embedding, a_c_next, emb);
    return t.reward + gamma * q_next;
}

double critic_loss(std::span<const Transition* const> batch, Networks& nets,
                   const Networks& targets, double gamma, const VectorTable& emb, bool with_grads,
                   bool classifier_enabled) {
    if (batch.empty()) throw ConfigError("critic_loss: empty batch");
    const int d = nets.dim();

    nn::Tape tape;
    std::vector<nn::Tape::Id> per_sample;
    per_sample.reserve(batch.size());
    nn::Vec input(4 * d + 1);

    for (const Transition* t : batch) {
        const double target_q = td_target(*t, targets, gamma, emb, classifier_enabled);

        // Pooled state encodings enter as constants: the critic loss trains
        // the value head only, the encoders belong to the agents' loss.
        const auto action = emb.row(t->item);
        const nn::Vec zo = nn::attention_pool(gather_rows(emb, t->before.all),
                                              nn::attention_view(nets.recommender.params, "attn."));
        const nn::Vec zn =
            nn::attention_pool(gather_rows(emb, t->before.atypical),
                               nn::attention_view(nets.classifier.params, "attn_n."), action);
        const nn::Vec zm =
            nn::attention_pool(gather_rows(emb, t->before.normal),
                               nn::attention_view(nets.classifier.params, "attn_m."), action);

        std::copy(action.begin(), action.end(), input.begin());
        input[d] = t->a_c;
        std::copy(zo.begin(), zo.end(), input.begin() + d + 1);
        std::copy(zn.begin(), zn.end(), input.begin() + 2 * d + 1);
        std::copy(zm.begin(), zm.end(), input.begin() + 3 * d + 1);

        const auto q_hat = tape.mlp(nets.critic.mlp, nets.critic.params, tape.constant(input),
                                    "mlp.", /*accumulate=*/with_grads);
        const double target_arr[1] = {target_q};
        per_sample.push_back(tape.squared_distance(q_hat, target_arr));
    }
    const auto loss = tape.mean(per_sample);
    const double value = tape.scalar(loss);
    if (!std::isfinite(value)) throw NumericError("critic loss is not finite");
    if (with_grads) tape.backward(loss);
    return value;
}

double agent_loss(std::span<const Transition* const> batch, Networks& nets,
                  const VectorTable& emb, bool with_grads, bool classifier_enabled) {
    if (batch.empty()) throw ConfigError("agent_loss: empty batch");
    const int d = nets.dim();

    nn::Tape tape;
    nn::ParameterSet& rp = nets.recommender.params;
    nn::ParameterSet& cp = nets.classifier.params;

    std::vector<nn::Tape::Id> per_sample;
    per_sample.reserve(batch.size());

    for (const Transition* t : batch) {
        const bool acc = with_grads;
        const auto o_items = gather_rows(emb, t->before.all);
        const auto n_items = gather_rows(emb, t->before.atypical);
        const auto m_items = gather_rows(emb, t->before.normal);

        // Prototype: learned-query pool over O, then the recommender MLP.
        const auto w_o = tape.param(rp.at("attn.W"), acc);
        const auto b_o = tape.param(rp.at("attn.b"), acc);
        const auto q_o = tape.param(rp.at("attn.q"), acc);
        const auto zo = tape.attention(o_items, w_o, b_o, q_o, d);
        const auto proto = tape.mlp(nets.recommender.mlp, rp, zo, "mlp.", acc);

        // Classifier probability, queried with the prototype so both loss
        // terms stay differentiable in the recommender parameters.
        const bool acc_cls = acc && classifier_enabled;
        const auto w_n = tape.param(cp.at("attn_n.W"), acc_cls);
        const auto b_n = tape.param(cp.at("attn_n.b"), acc_cls);
        const auto zn = tape.attention(n_items, w_n, b_n, proto, d);
        const auto w_m = tape.param(cp.at("attn_m.W"), acc_cls);
        const auto b_m = tape.param(cp.at("attn_m.b"), acc_cls);
        const auto zm = tape.attention(m_items, w_m, b_m, proto, d);

        nn::Tape::Id a_c;
        if (classifier_enabled) {
            const std::array<nn::Tape::Id, 2> cls_in{zn, zm};
            a_c = tape.mlp(nets.classifier.mlp, cp, tape.concat(cls_in), "mlp.", acc_cls);
        } else {
            const double half[1] = {0.5};
            a_c = tape.constant(half);
        }

        // Critic value of (s, a_p + a_c); its parameters pass gradient
        // through but are not updated here.
        const std::array<nn::Tape::Id, 5> critic_in{proto, a_c, zo, zn, zm};
        const auto q_hat = tape.mlp(nets.critic.mlp, nets.critic.params, tape.concat(critic_in),
                                    "mlp.", /*accumulate=*/false);

        const auto dist = tape.squared_distance(proto, emb.row(t->item));
        per_sample.push_back(tape.sub(dist, q_hat));
    }
    const auto loss = tape.mean(per_sample);
    const double value = tape.scalar(loss);
    if (!std::isfinite(value)) throw NumericError("agent loss is not finite");
    if (with_grads) tape.backward(loss);
    return value;
}

double average_q(const std::map<std::int32_t, std::vector<double>>& per_user_estimates) {
    if (per_user_estimates.empty()) throw ConfigError("average_q: no users");
    double total = 0.0;
    std::int64_t users = 0;
    for (const auto& [user, qs] : per_user_estimates) {
        if (qs.empty()) continue;
        double s = 0.0;
        for (double q : qs) s += q;
        total += s / static_cast<double>(qs.size());
        ++users;
    }
    if (users == 0) throw ConfigError("average_q: no estimates");
    return total / static_cast<double>(users);
}

std::vector<std::int32_t> trainable_users(const DatasetSplit& data) {
    std::vector<std::int32_t> users;
    for (const auto& [user, seq] : data.train) {
        if (seq.events.size() >= 2) users.push_back(user);
    }
    return users;
}

TrainResult train(const DatasetSplit& data, const VectorTable& emb, const PmfFactors& factors,
                  const TrainConfig& cfg, const std::optional<Checkpoint>& resume_from,
                  const StepObserver& step_observer, const EpochObserver& epoch_observer) {
    cfg.validate();
    const int d = emb.dim();
    if (emb.count() != data.items.size()) {
        throw DataError("embedding table has " + std::to_string(emb.count()) +
                        " rows for a vocabulary of " + std::to_string(data.items.size()));
    }
    if (factors.user_factors.count() != data.users.size() ||
        factors.item_factors.count() != data.items.size()) {
        throw DataError("PMF factors do not cover the vocabularies");
    }
    if (resume_from && resume_from->nets.dim() != d) {
        throw ConfigError("resume checkpoint dim " + std::to_string(resume_from->nets.dim()) +
                          " != embedding dim " + std::to_string(d));
    }
    const std::vector<std::int32_t> users = trainable_users(data);
    if (users.empty()) throw DataError("no trainable users (need >= 2 train events)");

    TrainResult result;
    if (resume_from) {
        result.nets = resume_from->nets;
        result.targets = resume_from->targets;
    } else {
        result.nets = make_networks(d, cfg.seed);
        result.targets = result.nets;  // targets start as exact copies
    }
    Networks& nets = result.nets;
    Networks& targets = result.targets;

    ReplayBuffer buffer(cfg.buffer_capacity);
    Rng episode_rng = derive_rng(cfg.seed, "trainer.episode");
    Rng sample_rng = derive_rng(cfg.seed, "trainer.sample");

    nn::AdamState adam_critic, adam_rec, adam_cls;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double sigma = exploration_sigma(cfg, epoch);

        std::map<std::int32_t, std::vector<double>> q_by_user;
        double sum_r_rec = 0.0;
        double sum_r_cls = 0.0;
        std::int64_t steps = 0;
        double sum_critic_loss = 0.0;
        double sum_agent_loss = 0.0;
        std::int64_t updates = 0;

        for (std::int32_t user : users) {
            const auto& train_events = data.train.at(user).events;
            EpisodeState state;
            state.user = user;

            if (cfg.warm_start) {
                // Seed O_0 with the first few logged items, routed through
                // the classifier like any other interaction.
                const int w =
                    std::min<int>(cfg.warm_start_items, static_cast<int>(train_events.size()));
                for (int i = 0; i < w; ++i) {
                    const std::int32_t item = train_events[i].item;
                    bool atypical = false;
                    if (cfg.classifier_enabled) {
                        const double a_c =
                            classifier_forward(nets.classifier, state, emb.row(item), emb);
                        atypical = episode_rng.bernoulli(a_c);
                    }
                    state = apply_classification(state, item, atypical);
                }
            }

            const int horizon =
                std::min<int>(static_cast<int>(train_events.size()), cfg.horizon_max);
            auto& user_q = q_by_user[user];
            user_q.reserve(horizon);

            for (int t = 0; t < horizon; ++t) {
                const nn::Vec proto = recommender_forward(nets.recommender, state, emb);
                nn::Vec probe = proto;
                if (sigma > 0.0) {
                    for (double& v : probe) v += sigma * episode_rng.normal();
                }
                const auto top_k = top_k_items(probe, emb, std::min<int>(cfg.reward_k,
                                                                         emb.count()));
                const std::int32_t item = top_k.front();
                const auto action = emb.row(item);

                const double r_rec = recommender_reward(factors, user, top_k);
                const double a_c =
                    cfg.classifier_enabled
                        ? classifier_forward(nets.classifier, state, action, emb)
                        : 0.5;
                const double q_hat = critic_forward(nets, state, action, a_c, emb);
                if (!std::isfinite(q_hat)) throw NumericError("critic estimate is not finite");
                user_q.push_back(q_hat);

                const bool atypical =
                    cfg.classifier_enabled ? episode_rng.bernoulli(a_c) : false;
                const double r_cls = classifier_reward(state, action, atypical, emb,
                                                       cfg.clamp_classifier_reward);
                const double reward = total_reward(r_rec, r_cls, cfg.alpha);
                sum_r_rec += r_rec;
                sum_r_cls += r_cls;
                ++steps;

                Transition tr;
                tr.before = state;
                tr.after = apply_classification(state, item, atypical);
                tr.item = item;
                tr.a_c = a_c;
                tr.atypical = atypical;
                tr.reward = reward;
                state = tr.after;
                buffer.push(std::move(tr));

                bool updated = false;
                if (buffer.size() >= cfg.batch_size) {
                    const auto batch = buffer.sample(cfg.batch_size, sample_rng);
                    // Update order: critic first, then both agents against
                    // the fresh critic, then the targets.
                    sum_critic_loss += critic_loss(batch, nets, targets, cfg.gamma, emb,
                                                   /*with_grads=*/true, cfg.classifier_enabled);
                    if (cfg.use_adam) {
                        nn::adam_step(nets.critic.params, adam_critic, cfg.lr);
                    } else {
                        nn::sgd_step(nets.critic.params, cfg.lr);
                    }

                    sum_agent_loss += agent_loss(batch, nets, emb, /*with_grads=*/true,
                                                 cfg.classifier_enabled);
                    if (cfg.use_adam) {
                        nn::adam_step(nets.recommender.params, adam_rec, cfg.lr);
                        if (cfg.classifier_enabled) {
                            nn::adam_step(nets.classifier.params, adam_cls, cfg.lr);
                        }
                    } else {
                        nn::sgd_step(nets.recommender.params, cfg.lr);
                        if (cfg.classifier_enabled) {
                            nn::sgd_step(nets.classifier.params, cfg.lr);
                        }
                    }

                    nn::soft_update(targets.critic.params, nets.critic.params, cfg.tau);
                    nn::soft_update(targets.recommender.params, nets.recommender.params, cfg.tau);
                    nn::soft_update(targets.classifier.params, nets.classifier.params, cfg.tau);
                    ++updates;
                    updated = true;
                }
                if (step_observer) {
                    step_observer({epoch, user, t, buffer.size(), updated});
                }
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.average_q = average_q(q_by_user);
        rec.mean_reward_rec = steps > 0 ? sum_r_rec / static_cast<double>(steps) : 0.0;
        rec.mean_reward_cls = steps > 0 ? sum_r_cls / static_cast<double>(steps) : 0.0;
        rec.critic_loss = updates > 0 ? sum_critic_loss / static_cast<double>(updates) : 0.0;
        rec.agent_loss = updates > 0 ? sum_agent_loss / static_cast<double>(updates) : 0.0;
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.epochs.push_back(rec);
        if (epoch_observer) epoch_observer(epoch, nets, targets, result.log);
    }
    return result;
}

}  // namespace tiarec
