#pragma once
// Discrete-action soft actor-critic on latent states: a categorical actor,
// two critics with per-action outputs and two soft-updated target critics.

#include "pld/diffmath.hpp"
#include "pld/envs.hpp"
#include "pld/diffmath/net.hpp"

#include <random>
#include <span>
#include <vector>

namespace pld {

struct SacConfig {
    double alpha = 0.5;
    double tau = 0.1;
    double gamma = 0.99;
    double learning_rate = 1e-4;
    int hidden_width = 800;
    int hidden_layers = 2;
    int policy_steps = 15;
    int batch_size = 150;

    void validate() const {
        if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("sac: tau must lie in (0, 1]");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("sac: gamma must lie in [0, 1)");
        if (!(alpha >= 0.0)) throw std::invalid_argument("sac: alpha must be >= 0");
        if (hidden_width < 1 || hidden_layers < 0 || policy_steps < 0 || batch_size < 1)
            throw std::invalid_argument("sac: non-positive size");
    }
};

/// Row-wise softmax of logits.
inline Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const RowVector e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp().matrix();
        out.row(i) = e / e.sum();
    }
    return out;
}

inline Matrix log_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        out.row(i) = logits.row(i).array() - lse;
    }
    return out;
}

/// Inverse-CDF draw from one probability row.
inline Action sample_categorical(const RowVector& probs, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
        acc += probs(k);
        if (x < acc) return action_from_index(static_cast<int>(k));
    }
    return action_from_index(static_cast<int>(probs.size()) - 1);
}

/// target <- tau * source + (1 - tau) * target, parameter by parameter.
inline void soft_update(const std::vector<Parameter*>& targets, const std::vector<Parameter*>& sources, double tau) {
    if (targets.size() != sources.size()) throw ShapeError("soft_update: parameter lists differ");
    for (std::size_t i = 0; i < targets.size(); ++i) {
        require_same_shape(targets[i]->value, sources[i]->value, "soft_update");
        targets[i]->value = tau * sources[i]->value + (1.0 - tau) * targets[i]->value;
    }
}

struct SacLosses {
    double actor = 0.0;
    double critic = 0.0;
};

class SacAgent {
public:
    SacAgent() = default;

    SacAgent(int latent_dim, const SacConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const std::vector<int> sizes = mlp_sizes(latent_dim, cfg_.hidden_width, cfg_.hidden_layers, kNumActions);
        actor_ = Mlp(sizes, Activation::identity, rng, "actor");
        q1_ = Mlp(sizes, Activation::identity, rng, "critic1");
        q2_ = Mlp(sizes, Activation::identity, rng, "critic2");
        q1_target_ = Mlp(sizes, Activation::identity, rng, "critic1_target");
        q2_target_ = Mlp(sizes, Activation::identity, rng, "critic2_target");
        copy_values(target_parameters(), critic_parameters());
    }

    const SacConfig& config() const { return cfg_; }
    int latent_dim() const { return actor_.in_features(); }

    Matrix action_probs(const Matrix& z) const { return softmax(actor_.predict(z)); }

    Action act(const Vector& z, Rng& rng) const { return sample_categorical(action_probs(z.transpose()).row(0), rng); }

    /// y = r + gamma (1 - done) sum_a pi(a|z') [min(Q1', Q2')(z', a) - alpha log pi(a|z')]
    Vector critic_target(const Vector& rewards, const Matrix& z_next, const Vector& done) const {
        if (rewards.size() != z_next.rows() || done.size() != z_next.rows()) throw ShapeError("critic_target: batch sizes");
        const Matrix logits = actor_.predict(z_next);
        const Matrix p = softmax(logits);
        const Matrix logp = log_softmax(logits);
        const Matrix q = q1_target_.predict(z_next).cwiseMin(q2_target_.predict(z_next));
        const Vector soft_v = (p.array() * (q.array() - cfg_.alpha * logp.array())).rowwise().sum();
        return rewards.array() + cfg_.gamma * (1.0 - done.array()) * soft_v.array();
    }

    /// Sum over both source critics of the mean squared error against y.
    Var critic_loss(Tape& t, Var z, std::span<const Action> actions, const Vector& y) {
        using namespace ops;
        if (static_cast<Eigen::Index>(actions.size()) != z.rows() || y.size() != z.rows())
            throw ShapeError("critic_loss: batch sizes");
        std::vector<int> idx;
        for (Action a : actions) idx.push_back(action_index(a));
        Var target = t.constant(y);
        Var e1 = sub(gather_cols(q1_.forward(t, z), idx), target);
        Var e2 = sub(gather_cols(q2_.forward(t, z), idx), target);
        return add(mean(square(e1)), mean(square(e2)));
    }

    /// mean_b sum_a pi(a|z) [alpha log pi(a|z) - min(Q1, Q2)(z, a)] with the
    /// critics held fixed.
    Var actor_loss(Tape& t, Var z) {
        using namespace ops;
        const Matrix q = q1_.predict(z.value()).cwiseMin(q2_.predict(z.value()));
        Var logits = actor_.forward(t, z);
        Var p = softmax_rows(logits);
        Var inner = sub(scale(log_softmax_rows(logits), cfg_.alpha), t.constant(q));
        return mean(row_sum(mul(p, inner)));
    }

    /// One gradient step of actor and critics on detached latents, followed by
    /// the target update.
    SacLosses update(const Matrix& z, std::span<const Action> actions, const Vector& rewards, const Matrix& z_next,
                     const Vector& done) {
        Tape t;
        return finish_update(t, t.constant(z), actions, critic_target(rewards, z_next, done), {}, nullptr);
    }

    /// Same, but z (the first latent_dim() encoder outputs) is computed on the
    /// tape so both losses also train the encoder. Targets use the current
    /// encoder's next latents, detached.
    SacLosses update_through(Mlp& encoder, AdamState& encoder_state, const Matrix& obs, std::span<const Action> actions,
                             const Vector& rewards, const Matrix& next_obs, const Vector& done) {
        Tape t;
        zero_grads(encoder.parameters());
        Var z = ops::slice_cols(encoder.forward(t, t.constant(obs)), 0, latent_dim());
        const Matrix z_next = encoder.predict(next_obs).leftCols(latent_dim());
        return finish_update(t, z, actions, critic_target(rewards, z_next, done), encoder.parameters(), &encoder_state);
    }

    std::vector<Parameter*> actor_parameters() { return actor_.parameters(); }
    std::vector<Parameter*> critic_parameters() {
        std::vector<Parameter*> out = q1_.parameters();
        append(out, q2_.parameters());
        return out;
    }
    std::vector<Parameter*> target_parameters() {
        std::vector<Parameter*> out = q1_target_.parameters();
        append(out, q2_target_.parameters());
        return out;
    }

    Matrix q_values(const Matrix& z) const { return q1_.predict(z).cwiseMin(q2_.predict(z)); }

private:
    SacLosses finish_update(Tape& t, Var z, std::span<const Action> actions, const Vector& y,
                            const std::vector<Parameter*>& encoder_params, AdamState* encoder_state) {
        using namespace ops;
        std::vector<Parameter*> critic = critic_parameters();
        std::vector<Parameter*> actor = actor_parameters();
        zero_grads(critic);
        zero_grads(actor);
        Var lc = critic_loss(t, z, actions, y);
        Var la = actor_loss(t, z);
        // y and the actor's Q values are constants, so each loss reaches only
        // its own network (plus the shared encoder, if any).
        t.backward(add(lc, la));
        const AdamConfig opt{.lr = cfg_.learning_rate};
        adam_step(critic, critic_state_, opt);
        adam_step(actor, actor_state_, opt);
        if (encoder_state) adam_step(encoder_params, *encoder_state, opt);
        soft_update(target_parameters(), critic_parameters(), cfg_.tau);
        return {la.scalar(), lc.scalar()};
    }

    SacConfig cfg_;
    Mlp actor_;
    Mlp q1_, q2_;
    Mlp q1_target_, q2_target_;
    AdamState actor_state_;
    AdamState critic_state_;
};

}  // namespace pld
