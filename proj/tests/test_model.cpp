#include "grad_check.hpp"
#include "pld/model.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pld;
using pld::testing::grad_check;
using pld::testing::random_matrix;

namespace {

ParsimonyConfig small_config(int width = 32) {
    ParsimonyConfig cfg;
    cfg.hidden_width = width;
    return cfg;
}

// Random-walk transitions from uniformly drawn cells.
TransitionBatch random_transitions(const Env& env, int count, Rng& rng) {
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

TransitionBatch subsample(const TransitionBatch& src, int count, Rng& rng) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(src.size()) - 1);
    TransitionBatch b;
    b.obs.resize(count, src.obs.cols());
    b.next_obs.resize(count, src.obs.cols());
    for (int i = 0; i < count; ++i) {
        const int k = pick(rng);
        b.obs.row(i) = src.obs.row(k);
        b.next_obs.row(i) = src.next_obs.row(k);
        b.actions.push_back(src.actions[static_cast<std::size_t>(k)]);
    }
    return b;
}

double loss_value(ParsimonyModel& m, const TransitionBatch& b, std::uint64_t noise_seed = 0) {
    Tape t;
    Rng noise(noise_seed);
    LossBreakdown parts;
    return m.loss(t, b, noise, parts).scalar();
}

// Direct pair loop, independent of the tape implementation.
double contrastive_oracle(const Matrix& s, const Matrix& z, double tau_s, double tau_z) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.rows(); ++j) {
            double l = std::exp(-tau_s * (s.row(i) - s.row(j)).norm());
            l = std::min(std::max(l, 1e-6), 1.0 - 1e-6);
            const double k = std::exp(-tau_z * (z.row(i) - z.row(j)).norm());
            total += k * std::log(l) + (1.0 - k) * std::log(1.0 - l);
        }
    }
    return -total / static_cast<double>(s.rows() * s.rows());
}

}  // namespace

TEST(Transform, HeadWidths) {
    EXPECT_EQ(transform_head_width(TransformFamily::rotation, 15), 105);
    EXPECT_EQ(transform_head_width(TransformFamily::translation, 15), 15);
    EXPECT_EQ(transform_head_width(TransformFamily::affine, 15), 120);
    EXPECT_THROW(parse_family("shear"), std::invalid_argument);
}

TEST(Transform, ApplyCases) {
    Rng rng(1);
    const Vector z = random_matrix(15, 1, rng);
    Transform id{TransformFamily::affine, Matrix::Identity(15, 15), Vector::Zero(15)};
    EXPECT_EQ(apply_transform(id, z), z);
    const Vector v = random_matrix(15, 1, rng);
    Transform tr{TransformFamily::translation, Matrix::Identity(15, 15), v};
    EXPECT_EQ(apply_transform(tr, z), z + v);
    EXPECT_THROW(apply_transform(id, Vector::Zero(3)), ShapeError);
}

TEST(Transform, RotationPreservesNormsAndAffinePreservesDistances) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const RowVector rot_head = random_matrix(1, 105, rng, -2, 2);
        const Transform r = transform_from_head(rot_head, TransformFamily::rotation, 15);
        EXPECT_LT((r.rotation.transpose() * r.rotation - Matrix::Identity(15, 15)).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_TRUE(r.translation.isZero(0.0));
        const Vector a = random_matrix(15, 1, rng), b = random_matrix(15, 1, rng);
        EXPECT_NEAR(r.apply(a).norm(), a.norm(), 1e-6);

        const Transform af = transform_from_head(random_matrix(1, 120, rng, -2, 2), TransformFamily::affine, 15);
        EXPECT_NEAR((af.apply(a) - af.apply(b)).norm(), (a - b).norm(), 1e-6);

        const Transform tr = transform_from_head(random_matrix(1, 15, rng), TransformFamily::translation, 15);
        EXPECT_TRUE(tr.rotation.isIdentity(0.0));
    }
}

TEST(Transform, TapedApplicationMatchesAndDifferentiates) {
    Rng rng(3);
    for (TransformFamily f : {TransformFamily::rotation, TransformFamily::translation, TransformFamily::affine}) {
        const int d = 4;
        const Matrix head = random_matrix(3, transform_head_width(f, d), rng);
        const Matrix z = random_matrix(3, d, rng);
        Tape t;
        const Matrix out = apply_transform_rows(t.constant(head), t.constant(z), f).value();
        for (int i = 0; i < 3; ++i) {
            const Vector expected = transform_from_head(head.row(i), f, d).apply(z.row(i).transpose());
            EXPECT_LT((out.row(i).transpose() - expected).norm(), 1e-12);
        }
        const Matrix w = random_matrix(3, d, rng);
        EXPECT_LT(grad_check([&](Tape&, const std::vector<Var>& v) {
                      return ops::sum(ops::mul(apply_transform_rows(v[0], v[1], f), v[0].tape()->constant(w)));
                  },
                             {head, z}),
                  1e-3);
    }
}

TEST(TransitionLossDet, Values) {
    Tape t;
    Matrix a = Matrix::Zero(2, 3);
    Matrix b = a;
    b(1, 0) = 1.0;
    const Matrix l = transition_loss_det(t.constant(a), t.constant(b)).value();
    EXPECT_DOUBLE_EQ(l(0, 0), 1.0);
    EXPECT_NEAR(l(1, 0), 1.0 + std::exp(-1.0), 1e-15);
    EXPECT_NEAR(l(1, 0), 1.3679, 1e-4);
    const Matrix m = transition_loss_det(t.constant(a), t.constant(b), true).value();
    EXPECT_EQ(m(0, 0), 0.0);
    EXPECT_EQ(m(1, 0), 1.0);
}

TEST(TransitionLossDet, Gradient) {
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix a = random_matrix(4, 15, rng), b = random_matrix(4, 15, rng);
        EXPECT_LT(grad_check([](Tape&, const std::vector<Var>& v) { return ops::mean(transition_loss_det(v[0], v[1])); },
                             {a, b}),
                  1e-3);
    }
}

TEST(Contrastive, MatchesPairOracle) {
    Rng rng(5);
    const Matrix s = random_matrix(6, 4, rng, -0.01, 0.01);  // close states so l is not clamped everywhere
    const Matrix z = random_matrix(6, 3, rng, -5, 5);
    Tape t;
    EXPECT_NEAR(contrastive_loss(s, t.constant(z), 100.0, 0.1).scalar(), contrastive_oracle(s, z, 100.0, 0.1), 1e-12);
}

TEST(Contrastive, TwoPointHandEvaluation) {
    Tape t;
    // Identical states and identical latents: every pair contributes -log(1 - eps).
    Matrix s = Matrix::Zero(2, 3);
    Matrix z = Matrix::Zero(2, 2);
    const double matched = contrastive_loss(s, t.constant(z), 100.0, 0.1).scalar();
    EXPECT_NEAR(matched, -std::log(1.0 - 1e-6), 1e-12);
    EXPECT_LT(matched, 1e-5);

    // Distinct states, far-apart latents: tiny loss.
    s(1, 0) = 1.0;
    z(1, 0) = 500.0;
    const double apart = contrastive_loss(s, t.constant(z), 100.0, 0.1).scalar();
    EXPECT_LT(apart, 1e-5);

    // Distinct states mapped to the same latent: off-diagonal pairs pay -log(eps).
    z(1, 0) = 0.0;
    const double collapsed = contrastive_loss(s, t.constant(z), 100.0, 0.1).scalar();
    EXPECT_NEAR(collapsed, 0.5 * (-std::log(1e-6)) + 0.5 * (-std::log(1.0 - 1e-6)), 1e-9);
    EXPECT_GT(collapsed, 6.0);
}

TEST(Contrastive, GradientAndErrors) {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix s = random_matrix(5, 4, rng, -0.01, 0.01);
        const Matrix z = random_matrix(5, 3, rng, -3, 3);
        EXPECT_LT(grad_check([&](Tape&, const std::vector<Var>& v) { return contrastive_loss(s, v[0], 100.0, 0.1); }, {z}),
                  1e-3);
    }
    Tape t;
    EXPECT_THROW(contrastive_loss(Matrix::Zero(1, 3), t.constant(Matrix::Zero(1, 2)), 1, 1), ShapeError);
}

TEST(StochasticLoss, TransitionTermIsClosedFormKl) {
    Tape t;
    Matrix mu_n(1, 2), sig_n(1, 2), mu_p(1, 2), sig_p(1, 2);
    mu_n << 1.0, -0.5;
    sig_n << 2.0, 0.5;
    mu_p << 0.0, 0.25;
    sig_p << 1.0, 0.75;
    double expected = 0.0;
    for (int i = 0; i < 2; ++i)
        expected += std::log(sig_p(0, i) / sig_n(0, i)) +
                    (sig_n(0, i) * sig_n(0, i) + std::pow(mu_n(0, i) - mu_p(0, i), 2)) / (2 * sig_p(0, i) * sig_p(0, i)) -
                    0.5;
    const double got =
        transition_loss_stoch(t.constant(mu_n), t.constant(sig_n), t.constant(mu_p), t.constant(sig_p)).scalar();
    EXPECT_NEAR(got, expected, 1e-12);
    EXPECT_NEAR(transition_loss_stoch(t.constant(mu_n), t.constant(sig_n), t.constant(mu_n), t.constant(sig_n)).scalar(),
                0.0, 1e-15);
}

TEST(StochasticLoss, Gradients) {
    Rng rng(7);
    const Matrix mq = random_matrix(3, 4, rng), mp = random_matrix(3, 4, rng);
    const Matrix sq = random_matrix(3, 4, rng, 0.3, 2), sp = random_matrix(3, 4, rng, 0.3, 2);
    EXPECT_LT(grad_check([](Tape&, const std::vector<Var>& v) { return ops::mean(transition_loss_stoch(v[0], v[1], v[2], v[3])); },
                         {mq, sq, mp, sp}),
              1e-3);
    const Matrix s = random_matrix(3, 5, rng, -0.01, 0.01);
    const Matrix z = random_matrix(3, 4, rng);
    EXPECT_LT(grad_check([&](Tape&, const std::vector<Var>& v) {
                  return stochastic_state_loss(s, v[0], v[1], v[2], v[3], v[4], 0.7, 100.0, 0.1);
              },
                         {z, mq, sq, mp, sp}),
              1e-3);
}

TEST(StochasticLoss, BetaScalesKlLinearly) {
    Rng rng(8);
    const Matrix s = random_matrix(3, 5, rng), z = random_matrix(3, 4, rng);
    const Matrix mq = random_matrix(3, 4, rng), mp = random_matrix(3, 4, rng);
    const Matrix sq = random_matrix(3, 4, rng, 0.3, 2), sp = random_matrix(3, 4, rng, 0.3, 2);
    Tape t;
    double con1 = 0, kl1 = 0, con2 = 0, kl2 = 0;
    stochastic_state_loss(s, t.constant(z), t.constant(mq), t.constant(sq), t.constant(mp), t.constant(sp), 0.5, 100, 0.1,
                          &con1, &kl1);
    stochastic_state_loss(s, t.constant(z), t.constant(mq), t.constant(sq), t.constant(mp), t.constant(sp), 1.0, 100, 0.1,
                          &con2, &kl2);
    EXPECT_DOUBLE_EQ(con1, con2);
    EXPECT_NEAR(kl2, 2.0 * kl1, 1e-14);
    double con0 = 0, kl0 = 0;
    stochastic_state_loss(s, t.constant(z), t.constant(mq), t.constant(sq), t.constant(mq), t.constant(sq), 1.0, 100, 0.1,
                          &con0, &kl0);
    EXPECT_NEAR(kl0, 0.0, 1e-15);
}

TEST(ParsimonyModel, EncodeIsDeterministicWithLatentWidth) {
    Rng rng(9);
    Env env = build_env(EnvKind::gridworld, 0, 50);
    ParsimonyModel m(env.observation_size(), small_config(), rng);
    const Vector z1 = m.encode(env.observe({2, 3}));
    const Vector z2 = m.encode(env.observe({2, 3}));
    EXPECT_EQ(z1, z2);
    EXPECT_EQ(z1.size(), 15);
    EXPECT_THROW(m.encode(Vector(Vector::Zero(7))), ShapeError);
}

TEST(ParsimonyModel, StochasticEncoding) {
    Rng rng(10);
    ParsimonyConfig cfg = small_config();
    cfg.variant = ModelVariant::stochastic;
    ParsimonyModel m(12, cfg, rng);
    const Vector s = random_matrix(12, 1, rng);
    const GaussianParams g = m.encode_gaussian(s);
    EXPECT_EQ(g.mean, m.encode(s));
    EXPECT_TRUE((g.stddev.array() > 0).all());
    EXPECT_EQ(reparam_sample(g, Vector::Zero(15)), g.mean);
}

TEST(ParsimonyModel, CodesAndPriors) {
    Rng rng(11);
    ParsimonyModel m(20, small_config(), rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector z = random_matrix(15, 1, rng, -3, 3);
        for (Action a : kAllActions) {
            const TransitionCode c = m.posterior_code(z, a);
            EXPECT_TRUE((c.posterior.array() > 0.0).all() && (c.posterior.array() < 1.0).all());
            EXPECT_TRUE(((c.h.array() == 0.0) || (c.h.array() == 1.0)).all());
            EXPECT_EQ(c.h, straight_through_round(c.posterior));
            EXPECT_EQ(c.prior, m.prior_code(a));  // independent of z
        }
    }
    for (Action a : kAllActions) {
        EXPECT_LT((m.prior_code(a).array() - 0.5).abs().maxCoeff(), 0.2);
    }
}

TEST(ParsimonyModel, StraightThroughReachesPosteriorParameters) {
    // The gradient of sum(w * round(p)) w.r.t. posterior parameters equals the
    // finite-difference gradient of the surrogate sum(w * p).
    Rng rng(12);
    ParsimonyModel m(6, small_config(8), rng);
    const Matrix z = random_matrix(3, 15, rng);
    const std::vector<Action> acts{Action::left, Action::up, Action::stay};
    const Matrix w = random_matrix(3, 15, rng);

    std::vector<Parameter*> params = m.posterior_parameters();
    zero_grads(params);
    Tape t;
    Var p = m.posterior_probs(t, t.constant(z), t.constant(one_hot_rows(acts)));
    t.backward(ops::sum(ops::mul(ops::straight_through_round(p), t.constant(w))));
    double checked = 0.0;
    for (Parameter* param : params) {
        Matrix numeric(param->value.rows(), param->value.cols());
        for (Eigen::Index i = 0; i < param->value.size(); ++i) {
            const double keep = param->value.data()[i];
            param->value.data()[i] = keep + 1e-5;
            const double up = m.posterior_probs(z, acts).cwiseProduct(w).sum();
            param->value.data()[i] = keep - 1e-5;
            const double down = m.posterior_probs(z, acts).cwiseProduct(w).sum();
            param->value.data()[i] = keep;
            numeric.data()[i] = (up - down) / 2e-5;
        }
        EXPECT_LT(pld::testing::relative_error(param->grad, numeric), 1e-3) << param->name;
        checked += param->grad.norm();
    }
    EXPECT_GT(checked, 0.0);
}

TEST(ParsimonyModel, DecodedTransformsRespectFamily) {
    Rng rng(13);
    for (TransformFamily f : {TransformFamily::rotation, TransformFamily::translation, TransformFamily::affine}) {
        ParsimonyConfig cfg = small_config();
        cfg.family = f;
        ParsimonyModel m(10, cfg, rng);
        const Transform t = m.decode_transform(Vector::Ones(15), Action::right);
        EXPECT_LT((t.rotation.transpose() * t.rotation - Matrix::Identity(15, 15)).cwiseAbs().maxCoeff(), 1e-6);
        if (f == TransformFamily::translation) {
            EXPECT_TRUE(t.rotation.isIdentity(0.0));
        }
        if (f == TransformFamily::rotation) {
            EXPECT_TRUE(t.translation.isZero(0.0));
        }
    }
}

TEST(ParsimonyModel, RolloutMatchesSingleSteps) {
    Rng rng(14);
    ParsimonyModel m(10, small_config(), rng);
    const Vector z0 = random_matrix(15, 1, rng);
    const std::vector<Action> acts{Action::up, Action::up, Action::left, Action::stay};
    const std::vector<Vector> traj = m.rollout(z0, acts);
    ASSERT_EQ(traj.size(), acts.size());
    const std::vector<Action> first{acts[0]};
    EXPECT_EQ(traj[0], m.rollout(z0, first)[0]);
    Vector z = z0;
    for (std::size_t k = 0; k < acts.size(); ++k) {
        const TransitionCode c = m.posterior_code(z, acts[k]);
        z = m.decode_transform(c.h, acts[k]).apply(z);
        EXPECT_LT((z - traj[k]).norm(), 1e-12);
    }
    EXPECT_EQ(m.rollout(z0, acts)[3], traj[3]);
}

TEST(ParsimonyModel, LossBookkeeping) {
    Rng rng(15);
    Env env = build_env(EnvKind::gridworld, 0, 50);
    ParsimonyModel m(env.observation_size(), small_config(), rng);
    const TransitionBatch b = random_transitions(env, 32, rng);
    Tape t;
    Rng noise(0);
    LossBreakdown parts;
    const double total = m.loss(t, b, noise, parts).scalar();
    EXPECT_EQ(total, parts.total);
    EXPECT_NEAR(parts.transition + parts.parsimony + parts.contrastive, parts.total, 1e-12);
    EXPECT_GT(parts.parsimony, 0.0);

    m.set_beta(0.0);
    Tape t2;
    LossBreakdown zero;
    m.loss(t2, b, noise, zero);
    EXPECT_EQ(zero.parsimony, 0.0);
    EXPECT_NEAR(zero.total, zero.transition + zero.contrastive, 1e-12);
}

TEST(ParsimonyModel, BetaZeroIgnoresPrior) {
    Rng rng(16);
    ParsimonyConfig cfg = small_config();
    cfg.beta = 0.0;
    Env env = build_env(EnvKind::torus, 0, 20);
    ParsimonyModel m(env.observation_size(), cfg, rng);
    const TransitionBatch b = random_transitions(env, 16, rng);
    const double before = loss_value(m, b);
    for (Parameter* p : m.prior_parameters()) p->value.array() += 0.3;
    EXPECT_EQ(loss_value(m, b), before);
}

TEST(ParsimonyModel, BadBatchThrows) {
    Rng rng(17);
    ParsimonyModel m(10, small_config(), rng);
    TransitionBatch b;
    b.obs = Matrix::Zero(3, 10);
    b.next_obs = Matrix::Zero(2, 10);
    b.actions = {Action::up, Action::up, Action::up};
    Tape t;
    LossBreakdown parts;
    EXPECT_THROW(m.loss(t, b, rng, parts), ShapeError);
    EXPECT_THROW(ParsimonyModel(10, [] { ParsimonyConfig c; c.beta = -1; return c; }(), rng), std::invalid_argument);
}

TEST(ParsimonyModel, TrainingReducesLossOnFixedBuffer) {
    Rng rng(18);
    Env env = build_env(EnvKind::gridworld, 1, 50);
    ParsimonyModel m(env.observation_size(), small_config(64), rng);
    const TransitionBatch buffer = random_transitions(env, 500, rng);
    const double before = loss_value(m, buffer);
    Rng sample(3), noise(4);
    for (int step = 0; step < 200; ++step) m.train_step(subsample(buffer, 128, sample), noise);
    const double after = loss_value(m, buffer);
    EXPECT_LT(after, before);
}

TEST(ParsimonyModel, StochasticTrainingReducesLoss) {
    Rng rng(19);
    ParsimonyConfig cfg = small_config(64);
    cfg.variant = ModelVariant::stochastic;
    Env env = build_env(EnvKind::gridworld, 1, 50);
    ParsimonyModel m(env.observation_size(), cfg, rng);
    const TransitionBatch buffer = random_transitions(env, 500, rng);
    const double before = loss_value(m, buffer, 7);
    Rng sample(3), noise(4);
    for (int step = 0; step < 200; ++step) m.train_step(subsample(buffer, 128, sample), noise);
    EXPECT_LT(loss_value(m, buffer, 7), before);
}

TEST(ParsimonyModel, ZeroLearningRateKeepsParameters) {
    Rng rng(20);
    ParsimonyConfig cfg = small_config();
    cfg.learning_rate = 0.0;
    Env env = build_env(EnvKind::gridworld, 0, 10);
    ParsimonyModel m(env.observation_size(), cfg, rng);
    std::vector<Matrix> before;
    for (Parameter* p : m.parameters()) before.push_back(p->value);
    Rng noise(0);
    m.train_step(random_transitions(env, 16, rng), noise);
    const std::vector<Parameter*> after = m.parameters();
    for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i]->value, before[i]);
}

TEST(ParsimonyModel, LongRunStaysFiniteAndIsDeterministic) {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        ParsimonyModel m(8, small_config(16), rng);
        Rng data(seed + 1), noise(seed + 2);
        std::vector<double> trace;
        for (int step = 0; step < 1000; ++step) {
            TransitionBatch b;
            b.obs = random_matrix(16, 8, data, -3, 3);
            b.next_obs = random_matrix(16, 8, data, -3, 3);
            for (int i = 0; i < 16; ++i) b.actions.push_back(action_from_index(i % kNumActions));
            const LossBreakdown parts = m.train_step(b, noise);
            EXPECT_TRUE(std::isfinite(parts.total));
            trace.push_back(parts.total);
        }
        std::vector<Matrix> params;
        for (Parameter* p : m.parameters()) params.push_back(p->value);
        return std::make_pair(trace, params);
    };
    const auto a = run(5);
    const auto b = run(5);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}
