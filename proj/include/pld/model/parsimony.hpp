#pragma once
// Parsimonious latent dynamics: an encoder z = f(s), a transition code
// h ~ q(h | z, a) rounded straight-through, an action-only prior p(h | a) and a
// decoder mapping (h, a) to an affine latent transform. The KL between the
// posterior and the prior code distributions is the parsimony penalty.
//
// The stochastic variant encodes (mu, sigma) and additionally predicts the
// spread of the next latent from (mu, a); see loss().

#include "pld/diffmath.hpp"
#include "pld/envs.hpp"
#include "pld/model/losses.hpp"
#include "pld/model/transform.hpp"

#include <array>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pld {

enum class ModelVariant { deterministic, stochastic };

inline std::string_view variant_name(ModelVariant v) {
    return v == ModelVariant::deterministic ? "deterministic" : "stochastic";
}

inline ModelVariant parse_variant(std::string_view s) {
    if (s == "deterministic") return ModelVariant::deterministic;
    if (s == "stochastic") return ModelVariant::stochastic;
    throw std::invalid_argument("unknown model variant '" + std::string(s) + "'");
}

struct ParsimonyConfig {
    int latent_dim = 15;
    int code_dim = 15;
    int hidden_width = 1200;
    int hidden_layers = 2;
    double beta = 0.5;
    TransformFamily family = TransformFamily::affine;
    ModelVariant variant = ModelVariant::deterministic;
    double tau_s = 100.0;
    double tau_z = 0.1;
    bool mse_only = false;
    double learning_rate = 1e-3;

    void validate() const {
        if (latent_dim < 2 || code_dim < 1 || hidden_width < 1 || hidden_layers < 0)
            throw std::invalid_argument("parsimony model: non-positive size");
        if (!(beta >= 0.0)) throw std::invalid_argument("parsimony model: beta must be >= 0");
        if (!(tau_s > 0.0) || !(tau_z > 0.0)) throw std::invalid_argument("parsimony model: tau_s and tau_z must be > 0");
        if (!(learning_rate >= 0.0)) throw std::invalid_argument("parsimony model: negative learning rate");
    }
};

struct TransitionCode {
    Vector h;
    Vector posterior;
    Vector prior;
};

class ParsimonyModel {
public:
    ParsimonyModel() = default;

    ParsimonyModel(int obs_size, const ParsimonyConfig& cfg, Rng& rng) : cfg_(cfg), obs_size_(obs_size) {
        cfg_.validate();
        if (obs_size < 1) throw std::invalid_argument("parsimony model: obs_size must be >= 1");
        const int d = cfg_.latent_dim, n = cfg_.code_dim, w = cfg_.hidden_width, l = cfg_.hidden_layers;
        const bool stoch = stochastic();
        encoder_ = Mlp(mlp_sizes(obs_size, w, l, stoch ? 2 * d : d), Activation::identity, rng, "encoder");
        posterior_ = Mlp(mlp_sizes(d + kNumActions, w, l, stoch ? n + d : n), Activation::identity, rng, "posterior");
        prior_ = Mlp(mlp_sizes(kNumActions, w, l, n), Activation::sigmoid, rng, "prior");
        decoder_ = Mlp(mlp_sizes(n + kNumActions, w, l, transform_head_width(cfg_.family, d)), Activation::identity, rng,
                       "decoder");
    }

    const ParsimonyConfig& config() const { return cfg_; }
    int obs_size() const { return obs_size_; }
    int latent_dim() const { return cfg_.latent_dim; }
    int code_dim() const { return cfg_.code_dim; }
    bool stochastic() const { return cfg_.variant == ModelVariant::stochastic; }

    void set_beta(double beta) {
        if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
        cfg_.beta = beta;
    }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

    /// Latent states (means for the stochastic variant), one row per observation.
    Matrix encode(const Matrix& obs) const {
        check_obs(obs);
        Matrix out = encoder_.predict(obs);
        return out.leftCols(cfg_.latent_dim);
    }

    Vector encode(const Vector& s) const { return encode(Matrix(s.transpose())).row(0).transpose(); }

    GaussianParams encode_gaussian(const Vector& s) const {
        if (!stochastic()) throw std::logic_error("encode_gaussian: deterministic model");
        check_obs(Matrix(s.transpose()));
        const Matrix out = encoder_.predict(s.transpose());
        const int d = cfg_.latent_dim;
        Vector sigma = out.row(0).segment(d, d).transpose().unaryExpr([](double x) { return ops::softplus(x) + kSigmaFloor; });
        return {out.row(0).head(d).transpose(), sigma};
    }

    /// Posterior Bernoulli probabilities, one row per (z, a).
    Matrix posterior_probs(const Matrix& z, std::span<const Action> actions) const {
        check_latents(z, actions);
        Matrix in(z.rows(), z.cols() + kNumActions);
        in << z, one_hot_rows(actions);
        Matrix out = posterior_.predict(in).leftCols(cfg_.code_dim);
        activate_inplace(out, Activation::sigmoid);
        return out;
    }

    /// Taped posterior probabilities; acts holds one-hot rows.
    Var posterior_probs(Tape& t, Var z, Var acts) {
        return ops::sigmoid(ops::slice_cols(posterior_.forward(t, ops::concat_cols(z, acts)), 0, cfg_.code_dim));
    }

    Vector prior_code(Action a) const {
        return prior_.predict(one_hot(a).transpose()).row(0).transpose();
    }

    TransitionCode posterior_code(const Vector& z, Action a) const {
        const Action acts[] = {a};
        TransitionCode c;
        c.posterior = posterior_probs(z.transpose(), acts).row(0).transpose();
        c.h = straight_through_round(c.posterior);
        c.prior = prior_code(a);
        return c;
    }

    /// Raw decoder rows for (h, a) pairs.
    Matrix decoder_heads(const Matrix& h, std::span<const Action> actions) const {
        if (h.cols() != cfg_.code_dim || h.rows() != static_cast<Eigen::Index>(actions.size()))
            throw ShapeError("decoder_heads: code shape mismatch");
        Matrix in(h.rows(), h.cols() + kNumActions);
        in << h, one_hot_rows(actions);
        return decoder_.predict(in);
    }

    Transform decode_transform(const Vector& h, Action a) const {
        const Action acts[] = {a};
        return transform_from_head(decoder_heads(h.transpose(), acts).row(0), cfg_.family, cfg_.latent_dim);
    }

    /// One step of deterministic prediction for a batch: rounded posterior code,
    /// decoded transform, z' = R z + v.
    Matrix predict_next(const Matrix& z, std::span<const Action> actions) const {
        const Matrix p = posterior_probs(z, actions);
        const Matrix h = (p.array() >= 0.5).cast<double>().matrix();
        const Matrix heads = decoder_heads(h, actions);
        Matrix out(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const Transform t = transform_from_head(heads.row(i), cfg_.family, cfg_.latent_dim);
            out.row(i) = t.apply(z.row(i).transpose()).transpose();
        }
        require_finite(out, "predict_next");
        return out;
    }

    /// z_1..z_H from z0 under the given actions.
    std::vector<Vector> rollout(const Vector& z0, std::span<const Action> actions) const {
        std::vector<Vector> out;
        Matrix z = z0.transpose();
        for (Action a : actions) {
            const Action one[] = {a};
            z = predict_next(z, one);
            out.push_back(z.row(0).transpose());
        }
        return out;
    }

    /// Builds the training objective on `tape`. The breakdown satisfies
    /// total = transition + parsimony + contrastive; noise is drawn only by the
    /// stochastic variant.
    Var loss(Tape& t, const TransitionBatch& batch, Rng& noise_rng, LossBreakdown& parts) {
        using namespace ops;
        batch.validate();
        check_obs(batch.obs);
        const Eigen::Index b = batch.size();
        const int d = cfg_.latent_dim, n = cfg_.code_dim;
        Matrix stacked(2 * b, obs_size_);
        stacked << batch.obs, batch.next_obs;
        Var enc = encoder_.forward(t, t.constant(std::move(stacked)));
        Var acts = t.constant(one_hot_rows(batch.actions));

        Var z = slice_cols(slice_rows(enc, 0, b), 0, d);
        Var z_next = slice_cols(slice_rows(enc, b, b), 0, d);
        Var post = posterior_.forward(t, concat_cols(z, acts));
        Var p_q = sigmoid(slice_cols(post, 0, n));  // same as posterior_probs(t, z, acts)
        Var h = straight_through_round(p_q);
        Var z_pred = apply_transform_rows(decoder_.forward(t, concat_cols(h, acts)), z, cfg_.family);

        Var transition;
        Var contrastive;
        if (!stochastic()) {
            transition = mean(transition_loss_det(z_pred, z_next, cfg_.mse_only));
            contrastive = contrastive_loss(batch.obs, z, cfg_.tau_s, cfg_.tau_z);
        } else {
            Var sig = softplus(slice_cols(slice_rows(enc, 0, b), d, d), kSigmaFloor);
            Var sig_next = softplus(slice_cols(slice_rows(enc, b, b), d, d), kSigmaFloor);
            Var sig_pred = softplus(slice_cols(post, n, d), kSigmaFloor);
            transition = mean(transition_loss_stoch(z_next, sig_next, z_pred, sig_pred));
            contrastive = contrastive_loss(batch.obs, reparam_sample(z, sig, standard_normal(b, d, noise_rng)),
                                           cfg_.tau_s, cfg_.tau_z);
        }

        Var total = add(transition, contrastive);
        parts.parsimony = 0.0;
        if (cfg_.beta > 0.0) {
            // Prior rows for the five actions, picked per sample by the one-hot matrix.
            Var table = prior_.forward(t, t.constant(Matrix::Identity(kNumActions, kNumActions)));
            Var p_p = matmul(acts, table);
            Var parsimony = scale(mean(bernoulli_kl(p_q, p_p)), cfg_.beta);
            parts.parsimony = parsimony.scalar();
            total = add(total, parsimony);
        }
        parts.transition = transition.scalar();
        parts.contrastive = contrastive.scalar();
        parts.total = total.scalar();
        return total;
    }

    /// One Adam update of every network against loss().
    LossBreakdown train_step(const TransitionBatch& batch, Rng& noise_rng) {
        const std::vector<Parameter*> params = parameters();
        zero_grads(params);
        Tape t;
        LossBreakdown parts;
        t.backward(loss(t, batch, noise_rng, parts));
        adam_step(params, adam_, AdamConfig{.lr = cfg_.learning_rate});
        return parts;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out = encoder_.parameters();
        append(out, posterior_.parameters());
        append(out, prior_.parameters());
        append(out, decoder_.parameters());
        return out;
    }

    std::vector<Parameter*> encoder_parameters() { return encoder_.parameters(); }
    std::vector<Parameter*> posterior_parameters() { return posterior_.parameters(); }
    std::vector<Parameter*> prior_parameters() { return prior_.parameters(); }
    std::vector<Parameter*> decoder_parameters() { return decoder_.parameters(); }

    const Mlp& encoder() const { return encoder_; }
    Mlp& encoder() { return encoder_; }

private:
    void check_obs(const Matrix& obs) const {
        if (obs.cols() != obs_size_) throw ShapeError("parsimony model: observation width mismatch");
    }

    void check_latents(const Matrix& z, std::span<const Action> actions) const {
        if (z.cols() != cfg_.latent_dim || z.rows() != static_cast<Eigen::Index>(actions.size()))
            throw ShapeError("parsimony model: latent batch shape mismatch");
    }

    ParsimonyConfig cfg_;
    int obs_size_ = 0;
    Mlp encoder_;
    Mlp posterior_;
    Mlp prior_;
    Mlp decoder_;
    AdamState adam_;
};

/// Number of distinct rounded posterior codes each action receives over the
/// given latent states.
inline std::array<int, kNumActions> distinct_codes_per_action(const ParsimonyModel& m, const Matrix& z) {
    std::array<int, kNumActions> out{};
    for (Action a : kAllActions) {
        const std::vector<Action> acts(static_cast<std::size_t>(z.rows()), a);
        const Matrix p = m.posterior_probs(z, acts);
        std::set<std::vector<bool>> codes;
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            std::vector<bool> h(static_cast<std::size_t>(p.cols()));
            for (Eigen::Index k = 0; k < p.cols(); ++k) h[static_cast<std::size_t>(k)] = p(i, k) >= 0.5;
            codes.insert(std::move(h));
        }
        out[static_cast<std::size_t>(action_index(a))] = static_cast<int>(codes.size());
    }
    return out;
}

}  // namespace pld
