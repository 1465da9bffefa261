#pragma once
// Cross-entropy-method planning over discrete action sequences, scored by
// latent occupancy of the goal.

#include "pld/diffmath.hpp"
#include "pld/envs.hpp"
#include "pld/sac/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace pld {

struct CemConfig {
    int horizon = 15;
    int iterations = 10;
    int samples = 1000;
    int elites = 200;

    void validate() const {
        if (horizon < 1 || iterations < 1 || samples < 1 || elites < 1)
            throw std::invalid_argument("cem: counts must be >= 1");
        if (elites > samples) throw std::invalid_argument("cem: elites must not exceed samples");
    }
};

/// G = sum_t exp(-||z_t - z_goal||), one trajectory per call; rows are z_1..z_H.
inline double trajectory_return(const Matrix& trajectory, const RowVector& goal) {
    if (trajectory.rows() < 1) throw ShapeError("trajectory_return: empty trajectory");
    if (trajectory.cols() != goal.size()) throw ShapeError("trajectory_return: dimension mismatch");
    double g = 0.0;
    for (Eigen::Index t = 0; t < trajectory.rows(); ++t) g += std::exp(-(trajectory.row(t) - goal).norm());
    return g;
}

/// Exploration rate for task n of `total` (1-based).
inline double exploration_epsilon(int n, int total, double power = 2.8) {
    if (total < 1 || n < 1 || n > total) throw std::invalid_argument("epsilon: task index out of range");
    if (!(power > 0.0)) throw std::invalid_argument("epsilon: power must be > 0");
    return 1.0 - std::pow(static_cast<double>(n - 1) / total, power);
}

/// Indices of the k highest scores; ties keep the lower index first.
inline std::vector<int> elite_indices(const std::vector<double>& scores, int k) {
    if (k < 0 || k > static_cast<int>(scores.size())) throw std::invalid_argument("elite_indices: bad k");
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

/// A latent world model as the planner sees it.
class LatentDynamics {
public:
    virtual ~LatentDynamics() = default;
    virtual int latent_dim() const = 0;
    virtual RowVector encode_state(const Env& env, GridPos p) const = 0;
    /// plan[t][j] is candidate j's action at step t; returns z_{t+1} for every
    /// candidate (J x d) at each step.
    virtual std::vector<Matrix> rollout(const RowVector& z0, const std::vector<std::vector<Action>>& plan) const = 0;
    /// Episode boundary and executed-step hooks for models with a filter state.
    virtual void begin_episode() {}
    virtual void observe_transition(const RowVector&, Action) {}
    /// Gradient steps on the buffer; mean loss (0 when nothing is learned).
    virtual double train(const ReplayBuffer&, int /*steps*/, int /*batch*/, Rng& /*replay*/, Rng& /*noise*/) { return 0.0; }
    virtual std::vector<Parameter*> parameters() { return {}; }
};

struct CemResult {
    Action action = Action::stay;
    double best_return = 0.0;
    std::vector<Action> best_sequence;
};

/// Returns the first action of the best sequence of the final iteration.
inline CemResult cem_plan(const LatentDynamics& dynamics, const RowVector& z0, const RowVector& goal,
                          const CemConfig& cfg, Rng& rng) {
    cfg.validate();
    if (z0.size() != dynamics.latent_dim() || goal.size() != dynamics.latent_dim())
        throw ShapeError("cem_plan: latent dimension mismatch");
    const int h = cfg.horizon, j = cfg.samples;
    // Candidate j's logits for step t are columns t*A .. t*A+A-1 of row j.
    RowVector mean = RowVector::Zero(h * kNumActions);
    std::vector<std::vector<Action>> plan(static_cast<std::size_t>(h), std::vector<Action>(static_cast<std::size_t>(j)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    CemResult result;
    for (int it = 0; it < cfg.iterations; ++it) {
        Matrix logits = standard_normal(j, h * kNumActions, rng);
        logits.rowwise() += mean;
        for (int c = 0; c < j; ++c) {
            for (int t = 0; t < h; ++t) {
                const auto w = logits.row(c).segment(t * kNumActions, kNumActions);
                const RowVector p = (w.array() - w.maxCoeff()).exp().matrix();
                const double u = unit(rng) * p.sum();
                double acc = 0.0;
                int a = kNumActions - 1;
                for (int k = 0; k < kNumActions; ++k) {
                    acc += p(k);
                    if (u < acc) {
                        a = k;
                        break;
                    }
                }
                plan[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)] = action_from_index(a);
            }
        }
        const std::vector<Matrix> traj = dynamics.rollout(z0, plan);
        std::vector<double> scores(static_cast<std::size_t>(j), 0.0);
        for (const Matrix& zt : traj) {
            const Vector occ = (-((zt.rowwise() - goal).rowwise().norm()).array()).exp().matrix();
            for (int c = 0; c < j; ++c) scores[static_cast<std::size_t>(c)] += occ(c);
        }
        const std::vector<int> elite = elite_indices(scores, cfg.elites);
        mean.setZero();
        for (int e : elite) mean += logits.row(e);
        mean /= static_cast<double>(elite.size());
        if (it + 1 == cfg.iterations) {
            const int best = elite.front();
            result.best_return = scores[static_cast<std::size_t>(best)];
            for (int t = 0; t < h; ++t)
                result.best_sequence.push_back(plan[static_cast<std::size_t>(t)][static_cast<std::size_t>(best)]);
            result.action = result.best_sequence.front();
        }
    }
    return result;
}

/// Latent = true (x, y) coordinates, transitions = the environment's rules.
class OracleDynamics : public LatentDynamics {
public:
    explicit OracleDynamics(Env env) : env_(std::move(env)) {}

    int latent_dim() const override { return 2; }

    RowVector encode_state(const Env&, GridPos p) const override { return coords(p); }

    std::vector<Matrix> rollout(const RowVector& z0, const std::vector<std::vector<Action>>& plan) const override {
        std::vector<Matrix> out;
        if (plan.empty()) return out;
        const GridPos p0{static_cast<int>(std::lround(z0(0))), static_cast<int>(std::lround(z0(1)))};
        std::vector<GridPos> pos(plan.front().size(), p0);
        for (const std::vector<Action>& step : plan) {
            if (step.size() != pos.size()) throw ShapeError("oracle rollout: ragged plan");
            Matrix z(static_cast<Eigen::Index>(pos.size()), 2);
            for (std::size_t c = 0; c < pos.size(); ++c) {
                pos[c] = env_.move(pos[c], step[c]);
                z.row(static_cast<Eigen::Index>(c)) = coords(pos[c]);
            }
            out.push_back(std::move(z));
        }
        return out;
    }

private:
    static RowVector coords(GridPos p) { return (RowVector(2) << p.x, p.y).finished(); }

    Env env_;
};

}  // namespace pld
