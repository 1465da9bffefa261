#pragma once
// Policy learning: each episode the agent acts from the encoded state for a
// fixed number of steps, then the representation model takes its gradient
// steps on the replay buffer, then the actor and critics take theirs.

#include "pld/baselines.hpp"
#include "pld/envs.hpp"
#include "pld/model/parsimony.hpp"
#include "pld/sac/agent.hpp"
#include "pld/sac/replay.hpp"
#include "pld/seeding.hpp"

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace pld {

enum class PolicyModelKind { parsimony, vae, baseline };

inline std::string_view policy_model_name(PolicyModelKind k) {
    switch (k) {
        case PolicyModelKind::parsimony: return "parsimony";
        case PolicyModelKind::vae: return "vae";
        case PolicyModelKind::baseline: return "baseline";
    }
    return "?";
}

inline PolicyModelKind parse_policy_model(std::string_view s) {
    if (s == "parsimony") return PolicyModelKind::parsimony;
    if (s == "vae") return PolicyModelKind::vae;
    if (s == "baseline") return PolicyModelKind::baseline;
    throw std::invalid_argument("model '" + std::string(s) + "' is not available for policy learning");
}

inline int default_policy_episodes(EnvKind k) {
    switch (k) {
        case EnvKind::gridworld: return 200;
        case EnvKind::four_rooms: return 500;
        case EnvKind::torus: return 250;
    }
    return 200;
}

inline int default_sac_batch(EnvKind k) { return k == EnvKind::four_rooms ? 350 : 150; }

struct DynamicsStats {
    double total = 0.0;
    double parsimony = 0.0;
};

/// What the agent sees the world through.
class Representation {
public:
    virtual ~Representation() = default;
    virtual Matrix encode(const Matrix& obs) const = 0;
    virtual int latent_dim() const = 0;
    /// Runs `steps` updates of the model's own objective; means of the losses.
    virtual DynamicsStats train(const ReplayBuffer& buffer, int steps, int batch, Rng& replay_rng, Rng& noise_rng) = 0;
    /// Encoder that the actor and critic losses should also train, if any.
    virtual Mlp* shared_encoder() = 0;
    virtual std::vector<Parameter*> parameters() = 0;
};

class ParsimonyRepresentation : public Representation {
public:
    ParsimonyRepresentation(int obs_size, const ParsimonyConfig& cfg, Rng& init) : model_(obs_size, cfg, init) {}

    Matrix encode(const Matrix& obs) const override { return model_.encode(obs); }
    int latent_dim() const override { return model_.latent_dim(); }

    DynamicsStats train(const ReplayBuffer& buffer, int steps, int batch, Rng& replay_rng, Rng& noise_rng) override {
        DynamicsStats s;
        if (buffer.size() < 2 || steps <= 0) return s;
        for (int i = 0; i < steps; ++i) {
            const LossBreakdown parts =
                model_.train_step(buffer.sample(static_cast<std::size_t>(batch), replay_rng).transitions, noise_rng);
            s.total += parts.total / steps;
            s.parsimony += parts.parsimony / steps;
        }
        return s;
    }

    Mlp* shared_encoder() override { return &model_.encoder(); }
    std::vector<Parameter*> parameters() override { return model_.parameters(); }

    ParsimonyModel& model() { return model_; }

private:
    ParsimonyModel model_;
};

class VaeRepresentation : public Representation {
public:
    VaeRepresentation(int obs_size, const BaselineConfig& cfg, Rng& init) : model_(obs_size, cfg, init) {}

    Matrix encode(const Matrix& obs) const override { return model_.encode(obs); }
    int latent_dim() const override { return model_.config().latent_dim; }

    DynamicsStats train(const ReplayBuffer& buffer, int steps, int batch, Rng& replay_rng, Rng& noise_rng) override {
        DynamicsStats s;
        if (buffer.empty() || steps <= 0) return s;
        for (int i = 0; i < steps; ++i)
            s.total += model_.train_step(buffer.sample(static_cast<std::size_t>(batch), replay_rng).transitions, noise_rng).total /
                       steps;
        return s;
    }

    Mlp* shared_encoder() override { return &model_.encoder(); }
    std::vector<Parameter*> parameters() override { return model_.parameters(); }

private:
    VaeModel model_;
};

/// Encoder with no objective of its own; trained only through the agent.
class BaselineRepresentation : public Representation {
public:
    BaselineRepresentation(int obs_size, int latent_dim, int width, int layers, Rng& init)
        : encoder_(mlp_sizes(obs_size, width, layers, latent_dim), Activation::identity, init, "baseline.encoder") {}

    Matrix encode(const Matrix& obs) const override { return encoder_.predict(obs); }
    int latent_dim() const override { return encoder_.out_features(); }
    DynamicsStats train(const ReplayBuffer&, int, int, Rng&, Rng&) override { return {}; }
    Mlp* shared_encoder() override { return &encoder_; }
    std::vector<Parameter*> parameters() override { return encoder_.parameters(); }

private:
    Mlp encoder_;
};

struct PolicyExperimentConfig {
    EnvKind env = EnvKind::gridworld;
    int obs_dim = 50;
    EnvLayout layout;
    PolicyModelKind model = PolicyModelKind::parsimony;
    int episodes = 200;
    int episode_length = 250;
    int dynamics_steps = 15;
    int dynamics_batch = 128;
    std::size_t replay_capacity = 100000;
    /// When false the agent's losses also train the representation encoder.
    /// The baseline condition always trains through its encoder.
    bool detach_latents = true;
    ParsimonyConfig parsimony;
    BaselineConfig vae;
    SacConfig sac;
};

struct EpisodeRecord {
    int episode = 0;
    double episode_return = 0.0;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double dyn_loss_total = 0.0;
    double dyn_loss_parsimony = 0.0;
};

inline std::unique_ptr<Representation> make_representation(const PolicyExperimentConfig& cfg, int obs_size, Rng& init) {
    switch (cfg.model) {
        case PolicyModelKind::parsimony: return std::make_unique<ParsimonyRepresentation>(obs_size, cfg.parsimony, init);
        case PolicyModelKind::vae: return std::make_unique<VaeRepresentation>(obs_size, cfg.vae, init);
        case PolicyModelKind::baseline:
            return std::make_unique<BaselineRepresentation>(obs_size, cfg.parsimony.latent_dim, cfg.parsimony.hidden_width,
                                                            cfg.parsimony.hidden_layers, init);
    }
    throw std::invalid_argument("unknown policy model");
}

/// The trained networks of a finished run.
struct PolicyModels {
    std::unique_ptr<Representation> representation;
    SacAgent agent;

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out = representation->parameters();
        append(out, agent.actor_parameters());
        append(out, agent.critic_parameters());
        append(out, agent.target_parameters());
        return out;
    }
};

/// One seeded run. `on_episode` (optional) sees each record as it is produced;
/// `models_out` (optional) receives the trained networks.
inline std::vector<EpisodeRecord> run_policy_experiment(const PolicyExperimentConfig& cfg, std::uint64_t seed,
                                                        const std::function<void(const EpisodeRecord&)>& on_episode = {},
                                                        PolicyModels* models_out = nullptr) {
    if (cfg.episodes < 0 || cfg.episode_length < 1 || cfg.dynamics_steps < 0 || cfg.dynamics_batch < 2)
        throw std::invalid_argument("policy experiment: invalid counts");
    const SeedStreams streams(seed);
    const Env env = build_env(cfg.env, streams.seed("env"), cfg.obs_dim, cfg.layout);
    Rng init = streams.stream("init");
    std::unique_ptr<Representation> rep = make_representation(cfg, env.observation_size(), init);
    SacAgent agent(rep->latent_dim(), cfg.sac, init);
    ReplayBuffer buffer(cfg.replay_capacity);
    Rng action_rng = streams.stream("action");
    Rng replay_rng = streams.stream("replay");
    Rng noise_rng = streams.stream("noise");
    AdamState shared_state;
    const bool through = cfg.model == PolicyModelKind::baseline || !cfg.detach_latents;

    std::vector<EpisodeRecord> records;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        // The policy is fixed within an episode, so act from a per-cell table.
        const Matrix probs = agent.action_probs(rep->encode(env.observation_table()));
        EpisodeRecord rec;
        rec.episode = ep;
        GridPos pos = env.start();
        for (int t = 0; t < cfg.episode_length; ++t) {
            const Action a = sample_categorical(probs.row(env.cell_index(pos)), action_rng);
            const StepResult r = env.step(pos, a);
            buffer.add({env.observe(pos), a, r.reward, r.observation, false, ep, t});
            rec.episode_return += r.reward;
            pos = r.next;
        }

        const DynamicsStats dyn = rep->train(buffer, cfg.dynamics_steps, cfg.dynamics_batch, replay_rng, noise_rng);
        rec.dyn_loss_total = dyn.total;
        rec.dyn_loss_parsimony = dyn.parsimony;

        const int m = cfg.sac.policy_steps;
        for (int k = 0; k < m; ++k) {
            const SampledBatch b = buffer.sample(static_cast<std::size_t>(cfg.sac.batch_size), replay_rng);
            SacLosses l;
            if (through) {
                l = agent.update_through(*rep->shared_encoder(), shared_state, b.transitions.obs, b.transitions.actions,
                                         b.rewards, b.transitions.next_obs, b.done);
            } else {
                l = agent.update(rep->encode(b.transitions.obs), b.transitions.actions, b.rewards,
                                 rep->encode(b.transitions.next_obs), b.done);
            }
            rec.actor_loss += l.actor / m;
            rec.critic_loss += l.critic / m;
        }
        records.push_back(rec);
        if (on_episode) on_episode(rec);
    }
    if (models_out) {
        models_out->representation = std::move(rep);
        models_out->agent = std::move(agent);
    }
    return records;
}

}  // namespace pld
