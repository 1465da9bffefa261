#include "grad_check.hpp"
#include "pld/sac/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pld;
using pld::testing::random_matrix;
using pld::testing::relative_error;

namespace {

SacConfig small_sac(int width = 16) {
    SacConfig c;
    c.hidden_width = width;
    return c;
}

// Sets the output layer of an actor/critic to constant outputs.
void set_constant_output(const std::vector<Parameter*>& params, const RowVector& bias) {
    params[params.size() - 2]->value.setZero();
    params.back()->value = bias;
}

// Central differences of f with respect to every entry of every parameter.
template <class F>
double param_grad_error(const std::vector<Parameter*>& params, F f) {
    double worst = 0.0;
    for (Parameter* p : params) {
        Matrix numeric(p->value.rows(), p->value.cols());
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const double keep = p->value.data()[i];
            p->value.data()[i] = keep + 1e-5;
            const double up = f();
            p->value.data()[i] = keep - 1e-5;
            const double down = f();
            p->value.data()[i] = keep;
            numeric.data()[i] = (up - down) / 2e-5;
        }
        worst = std::max(worst, relative_error(p->grad, numeric));
    }
    return worst;
}

}  // namespace

TEST(Policy, SoftmaxProperties) {
    const Matrix uniform = softmax(Matrix::Constant(1, 5, 3.0));
    for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(uniform(0, k), 0.2);
    Rng rng(1);
    const Matrix logits = random_matrix(10, 5, rng, -20, 20);
    const Matrix p = softmax(logits);
    const Matrix lp = log_softmax(logits);
    for (int i = 0; i < 10; ++i) {
        EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
        for (int k = 0; k < 5; ++k) EXPECT_NEAR(lp(i, k), std::log(p(i, k)), 1e-9);
    }
}

TEST(Policy, SamplingFollowsProbabilities) {
    RowVector p(5);
    p << 0.1, 0.0, 0.6, 0.3, 0.0;
    Rng rng(2);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 20000; ++i) ++counts[static_cast<std::size_t>(action_index(sample_categorical(p, rng)))];
    EXPECT_EQ(counts[1], 0);
    EXPECT_EQ(counts[4], 0);
    EXPECT_NEAR(counts[2] / 20000.0, 0.6, 0.02);
    EXPECT_NEAR(counts[0] / 20000.0, 0.1, 0.02);
}

TEST(CriticTarget, DoneAndZeroDiscountGiveReward) {
    Rng rng(3);
    SacConfig cfg = small_sac();
    SacAgent agent(4, cfg, rng);
    const Matrix zn = random_matrix(3, 4, rng);
    const Vector r = (Vector(3) << 1, -1, 0.5).finished();
    EXPECT_EQ(agent.critic_target(r, zn, Vector::Ones(3)), r);
    cfg.gamma = 0.0;
    SacAgent myopic(4, cfg, rng);
    EXPECT_EQ(myopic.critic_target(r, zn, Vector::Zero(3)), r);
}

TEST(CriticTarget, HandComputedUniformPolicy) {
    Rng rng(4);
    SacConfig cfg = small_sac();
    cfg.gamma = 0.9;
    cfg.alpha = 0.5;
    SacAgent agent(4, cfg, rng);
    set_constant_output(agent.actor_parameters(), RowVector::Zero(5));
    std::vector<Parameter*> targets = agent.target_parameters();
    const std::size_t half = targets.size() / 2;
    const std::vector<Parameter*> t1(targets.begin(), targets.begin() + static_cast<long>(half));
    const std::vector<Parameter*> t2(targets.begin() + static_cast<long>(half), targets.end());
    set_constant_output(t1, (RowVector(5) << 1, 2, 3, 4, 5).finished());
    set_constant_output(t2, (RowVector(5) << 2, 1, 3, 0, 6).finished());
    // min = (1, 1, 3, 0, 5); sum 0.2 * (min - 0.5 ln 0.2)
    const double soft_v = 0.2 * (1 + 1 + 3 + 0 + 5) - 0.5 * std::log(0.2);
    const Vector y = agent.critic_target(Vector::Constant(2, -1.0), random_matrix(2, 4, rng), Vector::Zero(2));
    EXPECT_NEAR(y(0), -1.0 + 0.9 * soft_v, 1e-12);
    EXPECT_NEAR(y(1), -1.0 + 0.9 * soft_v, 1e-12);
}

TEST(CriticLoss, ZeroWhenCriticsMatchTargets) {
    Rng rng(5);
    SacAgent agent(3, small_sac(), rng);
    std::vector<Parameter*> critics = agent.critic_parameters();
    const std::size_t half = critics.size() / 2;
    set_constant_output({critics.begin(), critics.begin() + static_cast<long>(half)}, RowVector::Constant(5, 2.5));
    set_constant_output({critics.begin() + static_cast<long>(half), critics.end()}, RowVector::Constant(5, 2.5));
    Tape t;
    const std::vector<Action> acts{Action::up, Action::stay, Action::left};
    EXPECT_NEAR(agent.critic_loss(t, t.constant(random_matrix(3, 3, rng)), acts, Vector::Constant(3, 2.5)).scalar(), 0.0,
                1e-20);
}

TEST(SacLosses, GradientsAgainstFiniteDifferences) {
    Rng rng(6);
    for (int trial = 0; trial < 3; ++trial) {
        SacAgent agent(4, small_sac(8), rng);
        const Matrix z = random_matrix(5, 4, rng);
        const std::vector<Action> acts{Action::up, Action::down, Action::left, Action::right, Action::stay};
        const Vector y = random_matrix(5, 1, rng, -3, 3);

        // With respect to the latent input.
        EXPECT_LT(pld::testing::grad_check([&](Tape& t, const std::vector<Var>& v) { return agent.critic_loss(t, v[0], acts, y); },
                                           {z}),
                  1e-3);

        // With respect to critic and actor parameters.
        std::vector<Parameter*> critic = agent.critic_parameters();
        zero_grads(critic);
        {
            Tape t;
            t.backward(agent.critic_loss(t, t.constant(z), acts, y));
        }
        EXPECT_LT(param_grad_error(critic,
                                   [&] {
                                       Tape t;
                                       return agent.critic_loss(t, t.constant(z), acts, y).scalar();
                                   }),
                  1e-3);
        std::vector<Parameter*> actor = agent.actor_parameters();
        zero_grads(actor);
        {
            Tape t;
            t.backward(agent.actor_loss(t, t.constant(z)));
        }
        EXPECT_LT(param_grad_error(actor,
                                   [&] {
                                       Tape t;
                                       return agent.actor_loss(t, t.constant(z)).scalar();
                                   }),
                  1e-3);
    }
}

TEST(SacLosses, ActorAndCriticGradientsStaySeparate) {
    Rng rng(7);
    SacAgent agent(4, small_sac(), rng);
    const Matrix z = random_matrix(6, 4, rng);
    const std::vector<Action> acts(6, Action::up);
    zero_grads(agent.critic_parameters());
    zero_grads(agent.actor_parameters());
    {
        Tape t;
        t.backward(agent.actor_loss(t, t.constant(z)));
    }
    for (Parameter* p : agent.critic_parameters()) EXPECT_TRUE(p->grad.isZero(0.0)) << p->name;
    {
        Tape t;
        zero_grads(agent.actor_parameters());
        t.backward(agent.critic_loss(t, t.constant(z), acts, Vector::Ones(6)));
    }
    for (Parameter* p : agent.actor_parameters()) EXPECT_TRUE(p->grad.isZero(0.0)) << p->name;
}

TEST(SacLosses, GreedyPolicyMinimisesActorLossWithoutEntropy) {
    // Linear critics on one-hot states: Q(s0) prefers UP, Q(s1) prefers LEFT.
    Rng rng(8);
    SacConfig cfg = small_sac();
    cfg.alpha = 0.0;
    cfg.hidden_layers = 0;
    SacAgent agent(2, cfg, rng);
    std::vector<Parameter*> critics = agent.critic_parameters();
    Matrix w = Matrix::Zero(2, 5);
    w(0, action_index(Action::up)) = 1.0;
    w(1, action_index(Action::left)) = 1.0;
    for (std::size_t i = 0; i < critics.size(); i += 2) {
        critics[i]->value = w;
        critics[i + 1]->value.setZero();
    }
    const Matrix states = Matrix::Identity(2, 2);
    std::vector<Parameter*> actor = agent.actor_parameters();
    AdamState st;
    for (int i = 0; i < 400; ++i) {
        zero_grads(actor);
        Tape t;
        t.backward(agent.actor_loss(t, t.constant(states)));
        adam_step(actor, st, AdamConfig{.lr = 0.05});
    }
    const Matrix p = agent.action_probs(states);
    EXPECT_GT(p(0, action_index(Action::up)), 0.97);
    EXPECT_GT(p(1, action_index(Action::left)), 0.97);
    Tape t;
    EXPECT_NEAR(agent.actor_loss(t, t.constant(states)).scalar(), -1.0, 0.03);
}

TEST(SoftUpdate, Cases) {
    Parameter src("s", Matrix::Constant(1, 1, 1.0));
    Parameter dst("d", Matrix::Constant(1, 1, 0.0));
    soft_update({&dst}, {&src}, 0.1);
    EXPECT_DOUBLE_EQ(dst.value(0, 0), 0.1);
    soft_update({&dst}, {&src}, 0.0);
    EXPECT_DOUBLE_EQ(dst.value(0, 0), 0.1);
    soft_update({&dst}, {&src}, 1.0);
    EXPECT_DOUBLE_EQ(dst.value(0, 0), 1.0);
    Parameter wrong("w", Matrix::Zero(2, 1));
    EXPECT_THROW(soft_update({&wrong}, {&src}, 0.5), ShapeError);
}

TEST(SacAgent, TargetsMoveOnlyBySoftUpdate) {
    Rng rng(9);
    SacAgent agent(3, small_sac(), rng);
    std::vector<Matrix> before;
    for (Parameter* p : agent.target_parameters()) before.push_back(p->value);
    // Acting and evaluating leave targets untouched.
    agent.action_probs(random_matrix(4, 3, rng));
    agent.critic_target(Vector::Zero(4), random_matrix(4, 3, rng), Vector::Zero(4));
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(agent.target_parameters()[i]->value, before[i]);

    const std::vector<Action> acts(4, Action::down);
    agent.update(random_matrix(4, 3, rng), acts, Vector::Ones(4), random_matrix(4, 3, rng), Vector::Zero(4));
    const std::vector<Parameter*> targets = agent.target_parameters();
    const std::vector<Parameter*> sources = agent.critic_parameters();
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const Matrix expected = 0.1 * sources[i]->value + 0.9 * before[i];
        EXPECT_LT((targets[i]->value - expected).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(SacAgent, ThroughUpdateTrainsEncoder) {
    Rng rng(10);
    SacAgent agent(4, small_sac(), rng);
    Mlp encoder({6, 8, 4}, Activation::identity, rng, "enc");
    const Matrix before = encoder.layers()[0].weight.value;
    AdamState st;
    const std::vector<Action> acts(5, Action::up);
    agent.update_through(encoder, st, random_matrix(5, 6, rng), acts, Vector::Ones(5), random_matrix(5, 6, rng),
                         Vector::Zero(5));
    EXPECT_NE(encoder.layers()[0].weight.value, before);
}

TEST(Replay, CapacityAndSampling) {
    ReplayBuffer buf(10);
    for (int i = 0; i < 25; ++i)
        buf.add({Vector::Constant(2, i), Action::up, static_cast<double>(i), Vector::Constant(2, i + 1), false, 0, i});
    EXPECT_EQ(buf.size(), 10u);
    for (std::size_t i = 0; i < buf.size(); ++i) EXPECT_GE(buf.at(i).reward, 15.0);
    Rng rng(1);
    std::vector<int> counts(10, 0);
    for (std::size_t i : buf.sample_indices(50000, rng)) ++counts[i];
    for (int c : counts) EXPECT_NEAR(c / 50000.0, 0.1, 0.01);
    const SampledBatch b = buf.sample(7, rng);
    EXPECT_EQ(b.transitions.size(), 7);
    for (Eigen::Index i = 0; i < 7; ++i) EXPECT_EQ(b.transitions.next_obs(i, 0), b.transitions.obs(i, 0) + 1);
    EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
    ReplayBuffer empty(3);
    EXPECT_THROW(empty.sample(1, rng), std::logic_error);
}

TEST(Replay, SequencesStartAtEpisodeBoundaries) {
    ReplayBuffer buf(100);
    for (int ep = 0; ep < 3; ++ep)
        for (int t = 0; t < 5; ++t)
            buf.add({Vector::Constant(1, ep * 10 + t), action_from_index(t % 5), -1.0, Vector::Constant(1, ep * 10 + t + 1),
                     false, ep, t});
    Rng rng(2);
    const SequenceBatch s = buf.sample_sequences(6, 5, rng);
    ASSERT_EQ(s.obs.size(), 6u);
    for (Eigen::Index j = 0; j < 6; ++j) {
        EXPECT_EQ(static_cast<int>(s.obs[0](j, 0)) % 10, 0);
        for (int k = 0; k < 5; ++k) EXPECT_EQ(s.obs[static_cast<std::size_t>(k + 1)](j, 0), s.obs[static_cast<std::size_t>(k)](j, 0) + 1);
    }
    EXPECT_THROW(buf.sample_sequences(1, 6, rng), std::logic_error);
}

TEST(PolicyExperiment, CountsBoundsAndDeterminism) {
    PolicyExperimentConfig cfg;
    cfg.episodes = 4;
    cfg.episode_length = 40;
    cfg.parsimony.hidden_width = 16;
    cfg.sac.hidden_width = 16;
    cfg.sac.policy_steps = 3;
    cfg.dynamics_steps = 2;
    cfg.dynamics_batch = 16;
    cfg.sac.batch_size = 20;
    const Env env = build_env(EnvKind::gridworld, 0, 5);
    const double bound = 40 - 2.0 * env.shortest_path(env.start(), env.goal());
    for (PolicyModelKind k : {PolicyModelKind::parsimony, PolicyModelKind::vae, PolicyModelKind::baseline}) {
        cfg.model = k;
        cfg.vae.hidden_width = 16;
        const std::vector<EpisodeRecord> a = run_policy_experiment(cfg, 3);
        const std::vector<EpisodeRecord> b = run_policy_experiment(cfg, 3);
        ASSERT_EQ(a.size(), 4u);
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].episode, static_cast<int>(i));
            EXPECT_LE(a[i].episode_return, bound);
            EXPECT_EQ(a[i].episode_return, b[i].episode_return);
            EXPECT_EQ(a[i].critic_loss, b[i].critic_loss);
            EXPECT_EQ(a[i].dyn_loss_total, b[i].dyn_loss_total);
        }
        if (k == PolicyModelKind::baseline) {
            EXPECT_EQ(a.back().dyn_loss_total, 0.0);
        }
        if (k != PolicyModelKind::parsimony) {
            EXPECT_EQ(a.back().dyn_loss_parsimony, 0.0);
        }
    }
    EXPECT_THROW(parse_policy_model("rnn"), std::invalid_argument);
    EXPECT_EQ(default_policy_episodes(EnvKind::four_rooms), 500);
    EXPECT_EQ(default_sac_batch(EnvKind::four_rooms), 350);
}
