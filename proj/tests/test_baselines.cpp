#include "grad_check.hpp"
#include "pld/baselines.hpp"

#include <gtest/gtest.h>

using namespace pld;
using pld::testing::random_matrix;

namespace {

BaselineConfig small(int width = 32) {
    BaselineConfig c;
    c.hidden_width = width;
    c.recurrent_width = 16;
    return c;
}

TransitionBatch walk_batch(const Env& env, int count, Rng& rng) {
    std::uniform_int_distribution<int> cell(0, env.num_cells() - 1);
    std::uniform_int_distribution<int> act(0, kNumActions - 1);
    TransitionBatch b;
    b.obs.resize(count, env.observation_size());
    b.next_obs.resize(count, env.observation_size());
    for (int i = 0; i < count; ++i) {
        const GridPos p = env.cell_pos(cell(rng));
        const Action a = action_from_index(act(rng));
        b.obs.row(i) = env.observe(p).transpose();
        b.next_obs.row(i) = env.observe(env.move(p, a)).transpose();
        b.actions.push_back(a);
    }
    return b;
}

SequenceBatch walk_sequences(const Env& env, int sequences, int steps, Rng& rng) {
    std::uniform_int_distribution<int> cell(0, env.num_cells() - 1);
    std::uniform_int_distribution<int> act(0, kNumActions - 1);
    SequenceBatch s;
    for (int k = 0; k <= steps; ++k) s.obs.emplace_back(sequences, env.observation_size());
    s.actions.assign(static_cast<std::size_t>(steps), std::vector<Action>(static_cast<std::size_t>(sequences)));
    for (int j = 0; j < sequences; ++j) {
        GridPos p = env.cell_pos(cell(rng));
        for (int k = 0; k <= steps; ++k) {
            s.obs[static_cast<std::size_t>(k)].row(j) = env.observe(p).transpose();
            if (k == steps) break;
            const Action a = action_from_index(act(rng));
            s.actions[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = a;
            p = env.move(p, a);
        }
    }
    return s;
}

template <class M, class Parts>
Parts eval(M& m, const TransitionBatch& b, std::uint64_t noise_seed) {
    Tape t;
    Rng noise(noise_seed);
    Parts parts;
    m.loss(t, b, noise, parts);
    return parts;
}

bool mentions_codes(const std::vector<Parameter*>& params) {
    for (const Parameter* p : params)
        if (p->name.find("posterior") != std::string::npos || p->name.find("prior") != std::string::npos) return true;
    return false;
}

}  // namespace

TEST(Vae, ComponentsAndBetaZero) {
    Rng rng(1);
    Env env = build_env(EnvKind::gridworld, 0, 20);
    BaselineConfig cfg = small();
    VaeModel m(env.observation_size(), cfg, rng);
    const TransitionBatch b = walk_batch(env, 16, rng);
    const VaeLoss parts = eval<VaeModel, VaeLoss>(m, b, 3);
    EXPECT_NEAR(parts.reconstruction + parts.kl + parts.transition, parts.total, 1e-12);
    m.set_beta(0.0);
    const VaeLoss zero = eval<VaeModel, VaeLoss>(m, b, 3);
    EXPECT_EQ(zero.kl, 0.0);
    EXPECT_NEAR(zero.total, zero.reconstruction + zero.transition, 1e-12);
    EXPECT_EQ(zero.reconstruction, parts.reconstruction);
}

TEST(Vae, KlTermMatchesClosedForm) {
    Rng rng(2);
    BaselineConfig cfg = small();
    cfg.beta = 0.7;
    VaeModel m(6, cfg, rng);
    TransitionBatch b;
    b.obs = random_matrix(4, 6, rng);
    b.next_obs = random_matrix(4, 6, rng);
    b.actions = {Action::up, Action::down, Action::left, Action::stay};
    const Matrix out = m.encoder().predict(b.obs);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (int k = 0; k < 15; ++k) {
            const double mu = out(i, k);
            const double sig = ops::softplus(out(i, 15 + k)) + kSigmaFloor;
            expected += 0.5 * (sig * sig + mu * mu - 1.0 - 2.0 * std::log(sig));
        }
    }
    expected = 0.7 * expected / 4.0;
    EXPECT_NEAR((eval<VaeModel, VaeLoss>(m, b, 0).kl), expected, 1e-10);
}

TEST(Vae, MemorisesASmallBatch) {
    Rng rng(3);
    BaselineConfig cfg = small(64);
    cfg.beta = 0.0;
    VaeModel m(8, cfg, rng);
    TransitionBatch b;
    b.obs = random_matrix(4, 8, rng);
    b.next_obs = b.obs;
    b.actions.assign(4, Action::stay);
    Rng noise(1);
    const double before = eval<VaeModel, VaeLoss>(m, b, 0).reconstruction;
    for (int i = 0; i < 1500; ++i) m.train_step(b, noise);
    const double after = eval<VaeModel, VaeLoss>(m, b, 0).reconstruction;
    EXPECT_LT(after, 0.02 * before);
    EXPECT_LT(after, 0.05);
}

TEST(Vae, HasNoCodeNetworks) {
    Rng rng(4);
    VaeModel m(5, small(), rng);
    EXPECT_FALSE(mentions_codes(m.parameters()));
}

TEST(Rnn, SingleTransitionEqualsOneStepPrediction) {
    Rng rng(5);
    Env env = build_env(EnvKind::torus, 0, 12);
    RnnModel m(env.observation_size(), small(), rng);
    const SequenceBatch s = walk_sequences(env, 6, 1, rng);
    Tape t;
    RnnLoss parts;
    m.loss(t, s, parts);
    Matrix hidden = m.initial_hidden(6);
    const Matrix z0 = m.encode(s.obs[0]);
    const Matrix pred = m.step(z0, s.actions[0], hidden);
    const double expected = (pred - m.encode(s.obs[1])).rowwise().squaredNorm().mean();
    EXPECT_NEAR(parts.transition, expected, 1e-10);
    EXPECT_NEAR(parts.transition + parts.contrastive, parts.total, 1e-12);
}

TEST(Rnn, ShortSequencesRejected) {
    Rng rng(6);
    RnnModel m(4, small(), rng);
    SequenceBatch s;
    s.obs.push_back(Matrix::Zero(2, 4));
    Tape t;
    RnnLoss parts;
    EXPECT_THROW(m.loss(t, s, parts), ShapeError);
}

TEST(Rnn, ResetMakesFirstPredictionHistoryFree) {
    Rng rng(7);
    RnnModel m(5, small(), rng);
    const Matrix z = random_matrix(1, 15, rng);
    const std::vector<Action> a{Action::left};
    Matrix fresh = m.initial_hidden(1);
    const Matrix first = m.step(z, a, fresh);

    Matrix used = m.initial_hidden(1);
    for (int i = 0; i < 5; ++i) m.step(random_matrix(1, 15, rng), a, used);
    used = m.initial_hidden(1);  // episode boundary
    EXPECT_EQ(m.step(z, a, used), first);
}

TEST(Rnn, TrainingReducesLoss) {
    Rng rng(8);
    Env env = build_env(EnvKind::torus, 0, 20);
    RnnModel m(env.observation_size(), small(48), rng);
    const SequenceBatch s = walk_sequences(env, 8, 10, rng);
    auto total = [&] {
        Tape t;
        RnnLoss p;
        return m.loss(t, s, p).scalar();
    };
    const double before = total();
    for (int i = 0; i < 150; ++i) m.train_step(s);
    EXPECT_LT(total(), before);
    EXPECT_FALSE(mentions_codes(m.parameters()));
}

TEST(Ssm, MatchesStochasticStateLossByConstruction) {
    Rng rng(9);
    Env env = build_env(EnvKind::gridworld, 0, 20);
    SsmModel m(env.observation_size(), small(), rng);
    const TransitionBatch b = walk_batch(env, 12, rng);
    const SsmLoss parts = eval<SsmModel, SsmLoss>(m, b, 2);
    EXPECT_NEAR(parts.contrastive + parts.kl, parts.total, 1e-12);
    EXPECT_GT(parts.kl, 0.0);
}

TEST(Ssm, BetaDoublingDoublesKl) {
    Rng rng(10);
    Env env = build_env(EnvKind::gridworld, 0, 20);
    BaselineConfig cfg = small();
    cfg.beta = 0.5;
    SsmModel m(env.observation_size(), cfg, rng);
    const TransitionBatch b = walk_batch(env, 12, rng);
    const SsmLoss a = eval<SsmModel, SsmLoss>(m, b, 4);
    m.set_beta(1.0);
    const SsmLoss c = eval<SsmModel, SsmLoss>(m, b, 4);
    EXPECT_NEAR(c.kl, 2.0 * a.kl, 1e-12);
    EXPECT_EQ(c.contrastive, a.contrastive);
}

TEST(Ssm, TrainingSmoke) {
    Rng rng(11);
    Env env = build_env(EnvKind::gridworld, 1, 20);
    SsmModel m(env.observation_size(), small(48), rng);
    const TransitionBatch b = walk_batch(env, 200, rng);
    const double before = eval<SsmModel, SsmLoss>(m, b, 5).total;
    Rng noise(2);
    for (int i = 0; i < 150; ++i) m.train_step(b, noise);
    EXPECT_LT((eval<SsmModel, SsmLoss>(m, b, 5).total), before);
    EXPECT_FALSE(mentions_codes(m.parameters()));
    const Matrix z = m.encode(b.obs.topRows(3));
    EXPECT_EQ(m.predict_next(z, std::vector<Action>(3, Action::up)).rows(), 3);
}

TEST(Baselines, ShareLatentAndEncoderSizes) {
    Rng rng(12);
    BaselineConfig cfg;
    cfg.hidden_width = 40;
    VaeModel v(7, cfg, rng);
    RnnModel r(7, cfg, rng);
    SsmModel s(7, cfg, rng);
    EXPECT_EQ(v.encode(Matrix::Zero(1, 7)).cols(), 15);
    EXPECT_EQ(r.encode(Matrix::Zero(1, 7)).cols(), 15);
    EXPECT_EQ(s.encode(Matrix::Zero(1, 7)).cols(), 15);
    EXPECT_EQ(r.recurrent_width(), 200);
    EXPECT_EQ(v.encoder().layers().front().out_features(), 40);
}
