#include "tiarec/gradcheck.hpp"

#include <chrono>
#include <cmath>

#include "tiarec/agents.hpp"
#include "tiarec/env.hpp"
#include "tiarec/errors.hpp"
#include "tiarec/trainer.hpp"

namespace tiarec {

GradCheckResult check_gradients(nn::ParameterSet& params,
                                const std::function<double()>& loss_value, double h) {
    GradCheckResult result;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto [name, tensor] = params.entry(i);
        for (std::size_t j = 0; j < tensor->value.size(); ++j) {
            const double analytic = tensor->grad[j];
            const double saved = tensor->value[j];
            tensor->value[j] = saved + h;
            const double plus = loss_value();
            tensor->value[j] = saved - h;
            const double minus = loss_value();
            tensor->value[j] = saved;
            const double fd = (plus - minus) / (2.0 * h);
            const double scale = std::max({1.0, std::abs(analytic), std::abs(fd)});
            const double rel = std::abs(analytic - fd) / scale;
            ++result.coordinates;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_tensor = *name;
                result.worst_index = static_cast<std::int64_t>(j);
            }
        }
    }
    return result;
}

namespace {

GradCheckResult merge(const GradCheckResult& a, const GradCheckResult& b) {
    GradCheckResult out = a.max_rel_error >= b.max_rel_error ? a : b;
    out.coordinates = a.coordinates + b.coordinates;
    return out;
}

}  // namespace

GradSuiteReport run_gradient_suite(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const int d = 4;
    const int vocab = 3;

    Rng rng = derive_rng(seed, "gradcheck");
    std::vector<std::string> keys;
    for (int i = 0; i < vocab; ++i) keys.push_back("item" + std::to_string(i));
    VectorTable emb(d, keys);
    for (double& v : emb.values()) v = rng.uniform(-1.0, 1.0);

    // Random parameters throughout, biases included: the production zero
    // bias init would park every ReLU exactly on its kink for empty states,
    // where central differences are meaningless.
    Networks nets = make_networks(d, seed);
    Networks targets = make_networks(d, seed + 1);
    for (Networks* n : {&nets, &targets}) {
        for (nn::ParameterSet* set :
             {&n->recommender.params, &n->classifier.params, &n->critic.params}) {
            for (std::size_t i = 0; i < set->size(); ++i) {
                for (double& v : set->entry(i).second->value) v = rng.uniform(-0.6, 0.6);
            }
        }
    }

    // A handful of transitions covering empty, singleton and mixed states.
    std::vector<Transition> transitions;
    auto random_item = [&] { return static_cast<std::int32_t>(rng.index(vocab)); };
    for (int i = 0; i < 4; ++i) {
        EpisodeState before;
        before.user = 0;
        const int history = i;  // 0..3 prior interactions
        for (int j = 0; j < history; ++j) {
            before = apply_classification(before, random_item(), rng.bernoulli(0.5));
        }
        Transition t;
        t.before = before;
        t.item = random_item();
        t.a_c = rng.uniform(0.05, 0.95);
        t.atypical = rng.bernoulli(0.5);
        t.reward = rng.uniform(0.0, 1.5);
        t.after = apply_classification(before, t.item, t.atypical);
        transitions.push_back(std::move(t));
    }
    std::vector<const Transition*> batch;
    for (const auto& t : transitions) batch.push_back(&t);

    GradSuiteReport report;
    const double gamma = 0.99;

    critic_loss(batch, nets, targets, gamma, emb, /*with_grads=*/true);
    report.critic = check_gradients(nets.critic.params, [&] {
        return critic_loss(batch, nets, targets, gamma, emb, /*with_grads=*/false);
    });

    agent_loss(batch, nets, emb, /*with_grads=*/true);
    auto agent_value = [&] { return agent_loss(batch, nets, emb, /*with_grads=*/false); };
    const auto rec = check_gradients(nets.recommender.params, agent_value);
    const auto cls = check_gradients(nets.classifier.params, agent_value);
    report.agents = merge(rec, cls);

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace tiarec
