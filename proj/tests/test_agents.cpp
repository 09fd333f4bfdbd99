#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "tiarec/agents.hpp"
#include "tiarec/env.hpp"
#include "tiarec/errors.hpp"

using namespace tiarec;
using nn::Vec;

namespace {

EpisodeState random_state(Rng& rng, int vocab, int max_len) {
    EpisodeState state;
    state.user = 0;
    const int n = static_cast<int>(rng.index(max_len + 1));
    for (int i = 0; i < n; ++i) {
        state = apply_classification(state, static_cast<std::int32_t>(rng.index(vocab)),
                                     rng.bernoulli(0.5));
    }
    return state;
}

void zero_final_layer(nn::ParameterSet& params) {
    // Last layer of the fixed two-layer MLPs.
    std::fill(params.at("mlp.W1").value.begin(), params.at("mlp.W1").value.end(), 0.0);
    std::fill(params.at("mlp.b1").value.begin(), params.at("mlp.b1").value.end(), 0.0);
}

}  // namespace

TEST_CASE("episode state partition checker") {
    EpisodeState ok;
    ok.all = {1, 2, 1};
    ok.normal = {1, 1};
    ok.atypical = {2};
    CHECK(state_partition_ok(ok));

    EpisodeState dup = ok;
    dup.atypical = {2, 2};
    CHECK_FALSE(state_partition_ok(dup));

    EpisodeState wrong = ok;
    wrong.normal = {1, 3};
    CHECK_FALSE(state_partition_ok(wrong));

    CHECK(state_partition_ok(EpisodeState{}));
}

TEST_CASE("recommender_forward: empty state equals the MLP at the zero vector") {
    Rng rng(1);
    RecommenderAgent agent = make_recommender_agent(4, rng);
    const VectorTable emb = testsupport::random_table(4, 6, rng);
    EpisodeState empty;
    const Vec got = recommender_forward(agent, empty, emb);
    const Vec want = nn::mlp_forward(agent.mlp, agent.params, Vec(4, 0.0));
    CHECK(got == want);
}

TEST_CASE("recommender_forward: singleton state equals the MLP at that item") {
    Rng rng(2);
    RecommenderAgent agent = make_recommender_agent(5, rng);
    const VectorTable emb = testsupport::random_table(5, 6, rng);
    EpisodeState state;
    state.all = {3};
    state.normal = {3};
    const Vec got = recommender_forward(agent, state, emb);
    const auto row = emb.row(3);
    const Vec want = nn::mlp_forward(agent.mlp, agent.params, Vec(row.begin(), row.end()));
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("recommender_forward: random states match the composed oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const int d = 3 + static_cast<int>(rng.index(4));
        RecommenderAgent agent = make_recommender_agent(d, rng);
        const VectorTable emb = testsupport::random_table(d, 8, rng);
        const EpisodeState state = random_state(rng, 8, 6);

        std::vector<std::vector<double>> items;
        for (std::int32_t i : state.all) {
            const auto row = emb.row(i);
            items.emplace_back(row.begin(), row.end());
        }
        const Vec z = oracle::attention(items, agent.params.at("attn.W").value,
                                        agent.params.at("attn.b").value,
                                        agent.params.at("attn.q").value);
        const Vec want =
            oracle::mlp(oracle::layers_of(agent.mlp, agent.params), z, true, false);
        const Vec got = recommender_forward(agent, state, emb);
        for (int i = 0; i < d; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
    }
}

TEST_CASE("recommender_forward: unknown item index raises") {
    Rng rng(4);
    RecommenderAgent agent = make_recommender_agent(4, rng);
    const VectorTable emb = testsupport::random_table(4, 3, rng);
    EpisodeState state;
    state.all = {7};
    state.normal = {7};
    CHECK_THROWS_AS(recommender_forward(agent, state, emb), DataError);
}

TEST_CASE("select_action: cosine argmax picks the aligned axis") {
    VectorTable emb(2, {"e1", "e2"});
    emb.row(0)[0] = 1.0;
    emb.row(1)[1] = 1.0;
    Rng rng(5);
    const Vec proto{0.9, 0.1};
    const ActionChoice choice = select_action(proto, emb, 0.0, rng);
    CHECK(choice.item == 0);
    CHECK(choice.embedding == Vec{1.0, 0.0});
}

TEST_CASE("select_action: an exact catalog vector selects that item") {
    Rng rng(6);
    const VectorTable emb = testsupport::random_table(4, 10, rng);
    for (std::int32_t i = 0; i < emb.count(); ++i) {
        const auto row = emb.row(i);
        const Vec proto(row.begin(), row.end());
        const ActionChoice choice = select_action(proto, emb, 0.0, rng);
        CHECK(choice.item == i);
    }
}

TEST_CASE("select_action: matches the exhaustive cosine scan on 100 random items") {
    Rng rng(7);
    const VectorTable emb = testsupport::random_table(6, 100, rng);
    for (int trial = 0; trial < 60; ++trial) {
        Vec proto(6);
        for (double& v : proto) v = rng.uniform(-2.0, 2.0);

        std::int32_t best = -1;
        double best_cos = -2.0;
        for (std::int32_t i = 0; i < emb.count(); ++i) {
            const double c = oracle::cosine(proto, emb.row(i));
            if (c > best_cos) {
                best_cos = c;
                best = i;
            }
        }
        const ActionChoice choice = select_action(proto, emb, 0.0, rng);
        CHECK(choice.item == best);
    }
}

TEST_CASE("select_action: scale invariance and the zero-prototype fallback") {
    Rng rng(8);
    const VectorTable emb = testsupport::random_table(5, 20, rng);
    for (int trial = 0; trial < 40; ++trial) {
        Vec proto(5);
        for (double& v : proto) v = rng.uniform(-1.0, 1.0);
        const std::int32_t base = select_action(proto, emb, 0.0, rng).item;
        for (double c : {0.001, 0.5, 7.0, 1234.0}) {
            Vec scaled = proto;
            for (double& v : scaled) v *= c;
            CHECK(select_action(scaled, emb, 0.0, rng).item == base);
        }
    }
    // Zero prototype: all dot products tie at zero, vocabulary order wins.
    const Vec zero(5, 0.0);
    CHECK(select_action(zero, emb, 0.0, rng).item == 0);
}

TEST_CASE("select_action: exploration noise is deterministic per seed") {
    Rng rng_a(99);
    Rng rng_b(99);
    VectorTable emb(3, {"a", "b", "c"});
    Rng fill(1);
    for (double& v : emb.values()) v = fill.uniform(-1.0, 1.0);
    const Vec proto{0.2, -0.4, 0.9};
    for (int i = 0; i < 10; ++i) {
        CHECK(select_action(proto, emb, 0.5, rng_a).item ==
              select_action(proto, emb, 0.5, rng_b).item);
    }
}

TEST_CASE("top_k_items: full ranking is a permutation; k=1 agrees with select_action") {
    Rng rng(9);
    const VectorTable emb = testsupport::random_table(4, 12, rng);
    Vec proto(4);
    for (double& v : proto) v = rng.uniform(-1.0, 1.0);

    const auto full = top_k_items(proto, emb, 12);
    std::vector<std::int32_t> sorted = full;
    std::sort(sorted.begin(), sorted.end());
    for (std::int32_t i = 0; i < 12; ++i) CHECK(sorted[i] == i);

    CHECK(top_k_items(proto, emb, 1)[0] == select_action(proto, emb, 0.0, rng).item);
}

TEST_CASE("top_k_items: matches a full-sort oracle on 50 random items") {
    Rng rng(10);
    const VectorTable emb = testsupport::random_table(5, 50, rng);
    for (int trial = 0; trial < 40; ++trial) {
        Vec proto(5);
        for (double& v : proto) v = rng.uniform(-1.5, 1.5);

        std::vector<std::pair<double, std::int32_t>> scored;
        for (std::int32_t i = 0; i < 50; ++i) scored.emplace_back(oracle::cosine(proto, emb.row(i)), i);
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        const auto got = top_k_items(proto, emb, 5);
        for (int i = 0; i < 5; ++i) CHECK(got[i] == scored[i].second);
    }
}

TEST_CASE("top_k_items: exclusion and bounds") {
    Rng rng(11);
    const VectorTable emb = testsupport::random_table(3, 6, rng);
    Vec proto{1.0, 0.0, 0.0};
    const auto all = top_k_items(proto, emb, 6);
    const std::vector<std::int32_t> exclude{all[0], all[1]};
    const auto rest = top_k_items(proto, emb, 4, exclude);
    for (std::int32_t e : exclude) {
        CHECK(std::find(rest.begin(), rest.end(), e) == rest.end());
    }
    CHECK(rest[0] == all[2]);
    CHECK_THROWS_AS(top_k_items(proto, emb, 5, exclude), ConfigError);
    CHECK_THROWS_AS(top_k_items(proto, emb, 0), ConfigError);
    CHECK_THROWS_AS(top_k_items(proto, emb, 7), ConfigError);
}

TEST_CASE("classifier_forward: zero final layer pins the probability at one half") {
    Rng rng(12);
    ClassifierAgent agent = make_classifier_agent(4, rng);
    zero_final_layer(agent.params);
    const VectorTable emb = testsupport::random_table(4, 8, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const EpisodeState state = random_state(rng, 8, 6);
        Vec query(4);
        for (double& v : query) v = rng.uniform(-1.0, 1.0);
        CHECK(classifier_forward(agent, state, query, emb) == 0.5);
    }
}

TEST_CASE("classifier_forward: empty sets give a state-independent value") {
    Rng rng(13);
    ClassifierAgent agent = make_classifier_agent(3, rng);
    const VectorTable emb = testsupport::random_table(3, 5, rng);
    EpisodeState empty;
    const Vec query{0.5, -0.5, 1.0};
    const double a = classifier_forward(agent, empty, query, emb);
    const Vec query2{-2.0, 0.25, 0.0};
    const double b = classifier_forward(agent, empty, query2, emb);
    // Both pools are zero vectors regardless of the query.
    CHECK(a == b);
    const double want = nn::mlp_forward(agent.mlp, agent.params, Vec(6, 0.0))[0];
    CHECK(a == want);
}

TEST_CASE("classifier_forward: matches the composed oracle and stays in [0,1]") {
    Rng rng(14);
    for (int trial = 0; trial < 60; ++trial) {
        const int d = 3 + static_cast<int>(rng.index(3));
        ClassifierAgent agent = make_classifier_agent(d, rng);
        const VectorTable emb = testsupport::random_table(d, 9, rng);
        const EpisodeState state = random_state(rng, 9, 7);
        Vec query(d);
        for (double& v : query) v = rng.uniform(-2.0, 2.0);

        auto rows_copy = [&](const std::vector<std::int32_t>& idx) {
            std::vector<std::vector<double>> out;
            for (std::int32_t i : idx) {
                const auto row = emb.row(i);
                out.emplace_back(row.begin(), row.end());
            }
            return out;
        };
        const Vec zn = oracle::attention(rows_copy(state.atypical),
                                         agent.params.at("attn_n.W").value,
                                         agent.params.at("attn_n.b").value, query);
        const Vec zm = oracle::attention(rows_copy(state.normal),
                                         agent.params.at("attn_m.W").value,
                                         agent.params.at("attn_m.b").value, query);
        Vec joint = zn;
        joint.insert(joint.end(), zm.begin(), zm.end());
        const double want =
            oracle::mlp(oracle::layers_of(agent.mlp, agent.params), joint, true, true)[0];

        const double got = classifier_forward(agent, state, query, emb);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("critic_forward: zero output layer gives zero, forwards are deterministic") {
    Rng rng(15);
    Networks nets = make_networks(4, 77);
    zero_final_layer(nets.critic.params);
    const VectorTable emb = testsupport::random_table(4, 8, rng);
    const EpisodeState state = random_state(rng, 8, 5);
    const auto action_row = emb.row(2);
    const Vec action(action_row.begin(), action_row.end());
    CHECK(critic_forward(nets, state, action, 0.7, emb) == 0.0);

    Networks nets2 = make_networks(4, 78);
    const double a = critic_forward(nets2, state, action, 0.7, emb);
    const double b = critic_forward(nets2, state, action, 0.7, emb);
    CHECK(a == b);
}

TEST_CASE("critic_forward: matches the composed pooling + MLP oracle") {
    Rng rng(16);
    for (int trial = 0; trial < 60; ++trial) {
        const int d = 3 + static_cast<int>(rng.index(3));
        Networks nets = make_networks(d, 1000 + trial);
        const VectorTable emb = testsupport::random_table(d, 9, rng);
        const EpisodeState state = random_state(rng, 9, 7);
        Vec action(d);
        for (double& v : action) v = rng.uniform(-1.5, 1.5);
        const double a_c = rng.uniform(0.0, 1.0);

        auto rows_copy = [&](const std::vector<std::int32_t>& idx) {
            std::vector<std::vector<double>> out;
            for (std::int32_t i : idx) {
                const auto row = emb.row(i);
                out.emplace_back(row.begin(), row.end());
            }
            return out;
        };
        const auto& rp = nets.recommender.params;
        const auto& cp = nets.classifier.params;
        const Vec zo = oracle::attention(rows_copy(state.all), rp.at("attn.W").value,
                                         rp.at("attn.b").value, rp.at("attn.q").value);
        const Vec zn = oracle::attention(rows_copy(state.atypical), cp.at("attn_n.W").value,
                                         cp.at("attn_n.b").value, action);
        const Vec zm = oracle::attention(rows_copy(state.normal), cp.at("attn_m.W").value,
                                         cp.at("attn_m.b").value, action);
        Vec input = action;
        input.push_back(a_c);
        input.insert(input.end(), zo.begin(), zo.end());
        input.insert(input.end(), zn.begin(), zn.end());
        input.insert(input.end(), zm.begin(), zm.end());
        const double want =
            oracle::mlp(oracle::layers_of(nets.critic.mlp, nets.critic.params), input, true,
                        false)[0];
        const double got = critic_forward(nets, state, action, a_c, emb);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("critic_forward: rejects malformed inputs") {
    Rng rng(17);
    Networks nets = make_networks(3, 5);
    const VectorTable emb = testsupport::random_table(3, 4, rng);
    EpisodeState state;
    CHECK_THROWS_AS(critic_forward(nets, state, Vec{1.0, 2.0}, 0.5, emb), ConfigError);
    CHECK_THROWS_AS(critic_forward(nets, state, Vec{1.0, 2.0, 3.0}, 1.5, emb), ConfigError);
}

TEST_CASE("checkpoint: round-trip restores every tensor, bytes are stable") {
    testsupport::TempDir dir("ckpt");
    Networks nets = make_networks(5, 11);
    Networks targets = make_networks(5, 12);
    save_checkpoint(dir.path() / "ck", nets, targets);
    const Checkpoint loaded = load_checkpoint(dir.path() / "ck");

    // Same values modulo the float32 payload quantization.
    for (std::size_t i = 0; i < nets.recommender.params.size(); ++i) {
        auto [name, t] = nets.recommender.params.entry(i);
        const nn::Tensor& l = loaded.nets.recommender.params.at(*name);
        REQUIRE(l.shape == t->shape);
        for (std::size_t j = 0; j < t->value.size(); ++j) {
            CHECK(l.value[j] == doctest::Approx(t->value[j]).epsilon(1e-6));
        }
    }
    // Re-saving the quantized checkpoint reproduces the payload bit for bit.
    save_checkpoint(dir.path() / "ck2", loaded.nets, loaded.targets);
    CHECK(testsupport::read_file(dir.path() / "ck.json") ==
          testsupport::read_file(dir.path() / "ck2.json"));
    CHECK(testsupport::read_file(dir.path() / "ck.bin") ==
          testsupport::read_file(dir.path() / "ck2.bin"));

    CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing"), DataError);
}
