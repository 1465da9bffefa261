#pragma once
// Planning experiments: a sequence of start/goal tasks, each an episode of
// replanned CEM actions mixed with random ones, followed by model training.

#include "pld/baselines.hpp"
#include "pld/model/parsimony.hpp"
#include "pld/planner/cem.hpp"
#include "pld/seeding.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>

namespace pld {

enum class PlanningModelKind { parsimony, rnn, ssm, oracle };

inline std::string_view planning_model_name(PlanningModelKind k) {
    switch (k) {
        case PlanningModelKind::parsimony: return "parsimony";
        case PlanningModelKind::rnn: return "rnn";
        case PlanningModelKind::ssm: return "ssm";
        case PlanningModelKind::oracle: return "oracle";
    }
    return "?";
}

inline PlanningModelKind parse_planning_model(std::string_view s) {
    if (s == "parsimony") return PlanningModelKind::parsimony;
    if (s == "rnn") return PlanningModelKind::rnn;
    if (s == "ssm") return PlanningModelKind::ssm;
    if (s == "oracle") return PlanningModelKind::oracle;
    throw std::invalid_argument("model '" + std::string(s) + "' is not available for planning");
}

namespace detail {

inline TransitionBatch sample_transitions(const ReplayBuffer& buffer, int batch, Rng& rng) {
    return buffer.sample(static_cast<std::size_t>(batch), rng).transitions;
}

}  // namespace detail

/// Rollouts use rounded posterior codes; decoded transforms are cached per
/// (code, action) until the next training step.
class ParsimonyDynamics : public LatentDynamics {
public:
    ParsimonyDynamics(int obs_size, const ParsimonyConfig& cfg, Rng& init) : model_(obs_size, cfg, init) {
        if (cfg.code_dim > 60) throw std::invalid_argument("parsimony dynamics: code_dim too large for the cache key");
    }

    int latent_dim() const override { return model_.latent_dim(); }

    RowVector encode_state(const Env& env, GridPos p) const override {
        return model_.encode(Matrix(env.observe(p).transpose())).row(0);
    }

    Matrix step(const Matrix& z, std::span<const Action> actions) const {
        const Matrix probs = model_.posterior_probs(z, actions);
        std::vector<std::uint64_t> keys(actions.size());
        std::vector<std::uint64_t> missing;
        std::vector<Eigen::Index> missing_rows;
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            std::uint64_t key = 0;
            for (Eigen::Index k = 0; k < probs.cols(); ++k) key = (key << 1) | (probs(i, k) >= 0.5 ? 1u : 0u);
            key = key * kNumActions + static_cast<std::uint64_t>(action_index(actions[static_cast<std::size_t>(i)]));
            keys[static_cast<std::size_t>(i)] = key;
            if (!cache_.contains(key) && std::find(missing.begin(), missing.end(), key) == missing.end()) {
                missing.push_back(key);
                missing_rows.push_back(i);
            }
        }
        if (!missing.empty()) {
            Matrix h(static_cast<Eigen::Index>(missing.size()), probs.cols());
            std::vector<Action> acts;
            for (std::size_t m = 0; m < missing.size(); ++m) {
                h.row(static_cast<Eigen::Index>(m)) = (probs.row(missing_rows[m]).array() >= 0.5).cast<double>().matrix();
                acts.push_back(actions[static_cast<std::size_t>(missing_rows[m])]);
            }
            const Matrix heads = model_.decoder_heads(h, acts);
            for (std::size_t m = 0; m < missing.size(); ++m)
                cache_.emplace(missing[m], transform_from_head(heads.row(static_cast<Eigen::Index>(m)), model_.config().family,
                                                               model_.latent_dim()));
        }
        Matrix out(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const Transform& t = cache_.at(keys[static_cast<std::size_t>(i)]);
            out.row(i).noalias() = z.row(i) * t.rotation.transpose();
            out.row(i) += t.translation.transpose();
        }
        require_finite(out, "parsimony rollout");
        return out;
    }

    std::vector<Matrix> rollout(const RowVector& z0, const std::vector<std::vector<Action>>& plan) const override {
        std::vector<Matrix> out;
        if (plan.empty()) return out;
        Matrix z = z0.replicate(static_cast<Eigen::Index>(plan.front().size()), 1);
        for (const std::vector<Action>& acts : plan) {
            z = step(z, acts);
            out.push_back(z);
        }
        return out;
    }

    double train(const ReplayBuffer& buffer, int steps, int batch, Rng& replay, Rng& noise) override {
        if (buffer.size() < 2 || steps <= 0) return 0.0;
        cache_.clear();
        double total = 0.0;
        for (int i = 0; i < steps; ++i)
            total += model_.train_step(detail::sample_transitions(buffer, batch, replay), noise).total / steps;
        return total;
    }

    std::vector<Parameter*> parameters() override { return model_.parameters(); }

    ParsimonyModel& model() { return model_; }
    const ParsimonyModel& model() const { return model_; }
    std::size_t cache_size() const { return cache_.size(); }

private:
    ParsimonyModel model_;
    mutable std::unordered_map<std::uint64_t, Transform> cache_;
};

/// The recurrent state filters the executed history of the current episode;
/// candidate rollouts branch from it.
class RnnDynamics : public LatentDynamics {
public:
    RnnDynamics(int obs_size, const BaselineConfig& cfg, int sequence_length, Rng& init)
        : model_(obs_size, cfg, init), sequence_length_(sequence_length), hidden_(model_.initial_hidden(1)) {
        if (sequence_length < 1) throw std::invalid_argument("rnn dynamics: sequence length must be >= 1");
    }

    int latent_dim() const override { return model_.config().latent_dim; }

    RowVector encode_state(const Env& env, GridPos p) const override {
        return model_.encode(Matrix(env.observe(p).transpose())).row(0);
    }

    std::vector<Matrix> rollout(const RowVector& z0, const std::vector<std::vector<Action>>& plan) const override {
        std::vector<Matrix> out;
        if (plan.empty()) return out;
        const auto j = static_cast<Eigen::Index>(plan.front().size());
        Matrix hidden = hidden_.replicate(j, 1);
        Matrix z = z0.replicate(j, 1);
        for (const std::vector<Action>& acts : plan) {
            z = model_.step(z, acts, hidden);
            out.push_back(z);
        }
        return out;
    }

    void begin_episode() override { hidden_ = model_.initial_hidden(1); }

    void observe_transition(const RowVector& z, Action a) override {
        const Action one[] = {a};
        model_.step(Matrix(z), one, hidden_);
    }

    /// Each step trains on batch / sequence_length sequences of that length.
    double train(const ReplayBuffer& buffer, int steps, int batch, Rng& replay, Rng&) override {
        if (buffer.empty() || steps <= 0) return 0.0;
        const int count = std::max(1, batch / sequence_length_);
        double total = 0.0;
        for (int i = 0; i < steps; ++i)
            total += model_.train_step(buffer.sample_sequences(static_cast<std::size_t>(count), sequence_length_, replay)).total /
                     steps;
        return total;
    }

    std::vector<Parameter*> parameters() override { return model_.parameters(); }

    RnnModel& model() { return model_; }

private:
    RnnModel model_;
    int sequence_length_;
    Matrix hidden_;
};

/// Rollouts follow the predicted means.
class SsmDynamics : public LatentDynamics {
public:
    SsmDynamics(int obs_size, const BaselineConfig& cfg, Rng& init) : model_(obs_size, cfg, init) {}

    int latent_dim() const override { return model_.config().latent_dim; }

    RowVector encode_state(const Env& env, GridPos p) const override {
        return model_.encode(Matrix(env.observe(p).transpose())).row(0);
    }

    std::vector<Matrix> rollout(const RowVector& z0, const std::vector<std::vector<Action>>& plan) const override {
        std::vector<Matrix> out;
        if (plan.empty()) return out;
        Matrix z = z0.replicate(static_cast<Eigen::Index>(plan.front().size()), 1);
        for (const std::vector<Action>& acts : plan) {
            z = model_.predict_next(z, acts);
            out.push_back(z);
        }
        return out;
    }

    double train(const ReplayBuffer& buffer, int steps, int batch, Rng& replay, Rng& noise) override {
        if (buffer.size() < 2 || steps <= 0) return 0.0;
        double total = 0.0;
        for (int i = 0; i < steps; ++i)
            total += model_.train_step(detail::sample_transitions(buffer, batch, replay), noise).total / steps;
        return total;
    }

    std::vector<Parameter*> parameters() override { return model_.parameters(); }

private:
    SsmModel model_;
};

struct PlanningExperimentConfig {
    EnvKind env = EnvKind::torus;
    int obs_dim = 50;
    EnvLayout layout;
    PlanningModelKind model = PlanningModelKind::parsimony;
    int tasks = 30;
    int steps_per_task = 50;
    int dynamics_steps = 50;
    int dynamics_batch = 128;
    int rnn_sequence_length = 8;
    double epsilon_power = 2.8;
    /// Overrides the schedule for every task when set.
    std::optional<double> fixed_epsilon;
    std::size_t replay_capacity = 100000;
    CemConfig cem;
    ParsimonyConfig parsimony;
    BaselineConfig baseline;

    void validate() const {
        if (tasks < 1 || steps_per_task < 1 || dynamics_steps < 0 || dynamics_batch < 2 || rnn_sequence_length < 1)
            throw std::invalid_argument("planning experiment: invalid counts");
        if (fixed_epsilon && !(*fixed_epsilon >= 0.0 && *fixed_epsilon <= 1.0))
            throw std::invalid_argument("planning experiment: epsilon must lie in [0, 1]");
        cem.validate();
    }
};

struct TaskRecord {
    int task = 0;  // 1-based
    double score = 0.0;
    double epsilon = 0.0;
    int bfs_distance = 0;
    bool solved = false;
    int planned_steps = 0;
    /// Mean exp-distance return of the chosen plans; NaN when no step was planned.
    double latent_return = std::numeric_limits<double>::quiet_NaN();
    double dyn_loss = 0.0;
};

inline std::unique_ptr<LatentDynamics> make_planning_dynamics(const PlanningExperimentConfig& cfg, const Env& env,
                                                              Rng& init) {
    switch (cfg.model) {
        case PlanningModelKind::parsimony:
            return std::make_unique<ParsimonyDynamics>(env.observation_size(), cfg.parsimony, init);
        case PlanningModelKind::rnn:
            return std::make_unique<RnnDynamics>(env.observation_size(), cfg.baseline, cfg.rnn_sequence_length, init);
        case PlanningModelKind::ssm: return std::make_unique<SsmDynamics>(env.observation_size(), cfg.baseline, init);
        case PlanningModelKind::oracle: return std::make_unique<OracleDynamics>(env);
    }
    throw std::invalid_argument("unknown planning model");
}

/// One seeded run. `dynamics_out`, when given, receives the trained model.
inline std::vector<TaskRecord> run_planning_experiment(const PlanningExperimentConfig& cfg, std::uint64_t seed,
                                                       const std::function<void(const TaskRecord&)>& on_task = {},
                                                       std::unique_ptr<LatentDynamics>* dynamics_out = nullptr) {
    cfg.validate();
    const SeedStreams streams(seed);
    const Env env = build_env(cfg.env, streams.seed("env"), cfg.obs_dim, cfg.layout);
    Rng init = streams.stream("init");
    std::unique_ptr<LatentDynamics> dyn = make_planning_dynamics(cfg, env, init);
    ReplayBuffer buffer(cfg.replay_capacity);
    Rng task_rng = streams.stream("tasks");
    Rng explore_rng = streams.stream("explore");
    Rng cem_rng = streams.stream("cem");
    Rng replay_rng = streams.stream("replay");
    Rng noise_rng = streams.stream("noise");
    std::uniform_int_distribution<int> cell(0, env.num_cells() - 1);
    std::uniform_int_distribution<int> random_action(0, kNumActions - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<TaskRecord> records;
    for (int n = 1; n <= cfg.tasks; ++n) {
        const GridPos start = env.cell_pos(cell(task_rng));
        GridPos goal = start;
        while (goal == start) goal = env.cell_pos(cell(task_rng));

        TaskRecord rec;
        rec.task = n;
        rec.epsilon = cfg.fixed_epsilon ? *cfg.fixed_epsilon : exploration_epsilon(n, cfg.tasks, cfg.epsilon_power);
        rec.bfs_distance = env.shortest_path(start, goal);
        dyn->begin_episode();
        const RowVector z_goal = dyn->encode_state(env, goal);
        double latent_sum = 0.0;
        GridPos pos = start;
        for (int t = 0; t < cfg.steps_per_task; ++t) {
            const RowVector z = dyn->encode_state(env, pos);
            Action a;
            if (unit(explore_rng) < rec.epsilon) {
                a = action_from_index(random_action(explore_rng));
            } else {
                const CemResult plan = cem_plan(*dyn, z, z_goal, cfg.cem, cem_rng);
                a = plan.action;
                latent_sum += plan.best_return;
                ++rec.planned_steps;
            }
            const GridPos next = env.move(pos, a);
            const double r = env.reward(pos, goal);
            buffer.add({env.observe(pos), a, r, env.observe(next), false, n - 1, t});
            rec.score += r;
            dyn->observe_transition(z, a);
            pos = next;
        }
        rec.solved = pos == goal;
        if (rec.planned_steps > 0) rec.latent_return = latent_sum / rec.planned_steps;
        rec.dyn_loss = dyn->train(buffer, cfg.dynamics_steps, cfg.dynamics_batch, replay_rng, noise_rng);
        records.push_back(rec);
        if (on_task) on_task(rec);
    }
    if (dynamics_out) *dynamics_out = std::move(dyn);
    return records;
}

}  // namespace pld
