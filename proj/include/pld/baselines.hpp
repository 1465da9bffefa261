#pragma once
// Comparison models. All share the encoder widths and latent size of the
// parsimony model and predict the next latent with an affine transform, but
// none of them uses a transition code.
//
//   VaeModel  Gaussian encoder, observation decoder, KL to N(0, I), transition
//             head from (mu, a); the policy consumes mu.
//   RnnModel  deterministic encoder feeding a gated recurrent cell on (z, a);
//             the transform is read from the recurrent state.
//   SsmModel  Gaussian encoder, transition head from (mu, a) predicting the
//             transform and the spread of the next latent.

#include "pld/diffmath.hpp"
#include "pld/envs.hpp"
#include "pld/model/losses.hpp"
#include "pld/model/parsimony.hpp"
#include "pld/model/transform.hpp"

#include <span>
#include <vector>

namespace pld {

namespace detail {

inline Matrix with_actions(const Matrix& z, std::span<const Action> actions) {
    if (z.rows() != static_cast<Eigen::Index>(actions.size())) throw ShapeError("latent/action count mismatch");
    Matrix in(z.rows(), z.cols() + kNumActions);
    in << z, one_hot_rows(actions);
    return in;
}

// Applies one transform head row per latent row.
inline Matrix apply_heads(const Matrix& heads, const Matrix& z, TransformFamily f) {
    const int d = static_cast<int>(z.cols());
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        out.row(i) = transform_from_head(heads.row(i).head(transform_head_width(f, d)), f, d).apply(z.row(i).transpose()).transpose();
    require_finite(out, "apply_heads");
    return out;
}

}  // namespace detail

struct BaselineConfig {
    int latent_dim = 15;
    int hidden_width = 1200;
    int hidden_layers = 2;
    int recurrent_width = 200;
    double beta = 1.0;
    double tau_s = 100.0;
    double tau_z = 0.1;
    double learning_rate = 1e-3;
    TransformFamily family = TransformFamily::affine;

    void validate() const {
        if (latent_dim < 2 || hidden_width < 1 || hidden_layers < 0 || recurrent_width < 1)
            throw std::invalid_argument("baseline model: non-positive size");
        if (!(beta >= 0.0)) throw std::invalid_argument("baseline model: beta must be >= 0");
        if (!(tau_s > 0.0) || !(tau_z > 0.0)) throw std::invalid_argument("baseline model: tau must be > 0");
    }
};

struct VaeLoss {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double transition = 0.0;
};

class VaeModel {
public:
    VaeModel() = default;

    VaeModel(int obs_size, const BaselineConfig& cfg, Rng& rng) : cfg_(cfg), obs_size_(obs_size) {
        cfg_.validate();
        const int d = cfg_.latent_dim, w = cfg_.hidden_width, l = cfg_.hidden_layers;
        encoder_ = Mlp(mlp_sizes(obs_size, w, l, 2 * d), Activation::identity, rng, "vae.encoder");
        decoder_ = Mlp(mlp_sizes(d, w, l, obs_size), Activation::identity, rng, "vae.decoder");
        transition_ = Mlp(mlp_sizes(d + kNumActions, w, l, transform_head_width(cfg_.family, d)), Activation::identity,
                          rng, "vae.transition");
    }

    const BaselineConfig& config() const { return cfg_; }
    void set_beta(double beta) { cfg_.beta = beta; }

    /// Posterior means.
    Matrix encode(const Matrix& obs) const {
        if (obs.cols() != obs_size_) throw ShapeError("vae: observation width mismatch");
        return encoder_.predict(obs).leftCols(cfg_.latent_dim);
    }

    Matrix reconstruct(const Matrix& z) const { return decoder_.predict(z); }

    Matrix predict_next(const Matrix& z, std::span<const Action> actions) const {
        return detail::apply_heads(transition_.predict(detail::with_actions(z, actions)), z, cfg_.family);
    }

    /// reconstruction (squared error of a reparameterised sample, summed over
    /// observation entries) + beta * KL[q(z|s) || N(0, I)] + squared error of
    /// the transformed mean against the next mean; all averaged over the batch.
    Var loss(Tape& t, const TransitionBatch& batch, Rng& noise_rng, VaeLoss& parts) {
        using namespace ops;
        batch.validate();
        if (batch.obs.cols() != obs_size_) throw ShapeError("vae: observation width mismatch");
        const Eigen::Index b = batch.size();
        const int d = cfg_.latent_dim;
        Matrix stacked(2 * b, obs_size_);
        stacked << batch.obs, batch.next_obs;
        Var enc = encoder_.forward(t, t.constant(std::move(stacked)));
        Var mu_all = slice_cols(enc, 0, d);
        Var sig_all = softplus(slice_cols(enc, d, d), kSigmaFloor);
        Var mu = slice_rows(mu_all, 0, b);
        Var sig = slice_rows(sig_all, 0, b);

        Var sample = reparam_sample(mu, sig, standard_normal(b, d, noise_rng));
        Var recon = mean(row_sum(square(sub(decoder_.forward(t, sample), t.constant(batch.obs)))));
        Var kl = scale(mean(diag_gaussian_kl(mu, sig, t.constant(Matrix::Zero(b, d)), t.constant(Matrix::Ones(b, d)))),
                       cfg_.beta);
        Var acts = t.constant(one_hot_rows(batch.actions));
        Var pred = apply_transform_rows(transition_.forward(t, concat_cols(mu, acts)), mu, cfg_.family);
        Var trans = mean(row_sum(square(sub(pred, slice_rows(mu_all, b, b)))));

        Var total = add(add(recon, kl), trans);
        parts = {total.scalar(), recon.scalar(), kl.scalar(), trans.scalar()};
        return total;
    }

    Mlp& encoder() { return encoder_; }

    VaeLoss train_step(const TransitionBatch& batch, Rng& noise_rng) {
        const std::vector<Parameter*> params = parameters();
        zero_grads(params);
        Tape t;
        VaeLoss parts;
        t.backward(loss(t, batch, noise_rng, parts));
        adam_step(params, adam_, AdamConfig{.lr = cfg_.learning_rate});
        return parts;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out = encoder_.parameters();
        append(out, decoder_.parameters());
        append(out, transition_.parameters());
        return out;
    }

private:
    BaselineConfig cfg_;
    int obs_size_ = 0;
    Mlp encoder_;
    Mlp decoder_;
    Mlp transition_;
    AdamState adam_;
};

/// Contiguous sequences in time-major layout: obs[t] holds one row per
/// sequence, actions[t] the actions taken between obs[t] and obs[t + 1].
struct SequenceBatch {
    std::vector<Matrix> obs;
    std::vector<std::vector<Action>> actions;

    int steps() const { return static_cast<int>(actions.size()); }
    Eigen::Index sequences() const { return obs.empty() ? 0 : obs.front().rows(); }

    void validate() const {
        if (obs.size() < 2) throw ShapeError("SequenceBatch: sequences must hold at least two observations");
        if (actions.size() + 1 != obs.size()) throw ShapeError("SequenceBatch: need one action per transition");
        for (const Matrix& o : obs)
            if (o.rows() != obs.front().rows() || o.cols() != obs.front().cols())
                throw ShapeError("SequenceBatch: ragged observations");
        for (const auto& a : actions)
            if (static_cast<Eigen::Index>(a.size()) != sequences()) throw ShapeError("SequenceBatch: ragged actions");
    }
};

struct RnnLoss {
    double total = 0.0;
    double transition = 0.0;
    double contrastive = 0.0;
};

class RnnModel {
public:
    RnnModel() = default;

    RnnModel(int obs_size, const BaselineConfig& cfg, Rng& rng) : cfg_(cfg), obs_size_(obs_size) {
        cfg_.validate();
        const int d = cfg_.latent_dim, w = cfg_.hidden_width, l = cfg_.hidden_layers;
        encoder_ = Mlp(mlp_sizes(obs_size, w, l, d), Activation::identity, rng, "rnn.encoder");
        cell_ = GruCell(d + kNumActions, cfg_.recurrent_width, rng, "rnn.cell");
        head_ = Mlp(mlp_sizes(cfg_.recurrent_width, w, l, transform_head_width(cfg_.family, d)), Activation::identity, rng,
                    "rnn.head");
    }

    const BaselineConfig& config() const { return cfg_; }
    int recurrent_width() const { return cfg_.recurrent_width; }

    Matrix encode(const Matrix& obs) const {
        if (obs.cols() != obs_size_) throw ShapeError("rnn: observation width mismatch");
        return encoder_.predict(obs);
    }

    /// Recurrent state at an episode start.
    Matrix initial_hidden(Eigen::Index rows) const { return Matrix::Zero(rows, cfg_.recurrent_width); }

    /// Consumes (z, a), advances `hidden` in place and returns the predicted next latent.
    Matrix step(const Matrix& z, std::span<const Action> actions, Matrix& hidden) const {
        if (hidden.rows() != z.rows() || hidden.cols() != cfg_.recurrent_width) throw ShapeError("rnn: hidden shape");
        hidden = cell_.predict(detail::with_actions(z, actions), hidden);
        return detail::apply_heads(head_.predict(hidden), z, cfg_.family);
    }

    /// Mean squared next-latent error along each sequence from a zero state,
    /// plus the contrastive term over every encoded observation in the batch.
    Var loss(Tape& t, const SequenceBatch& batch, RnnLoss& parts) {
        using namespace ops;
        batch.validate();
        const Eigen::Index s = batch.sequences();
        const int steps = batch.steps();
        Matrix stacked(s * (steps + 1), obs_size_);
        for (int k = 0; k <= steps; ++k) stacked.middleRows(k * s, s) = batch.obs[static_cast<std::size_t>(k)];
        if (stacked.cols() != obs_size_) throw ShapeError("rnn: observation width mismatch");
        Var z_all = encoder_.forward(t, t.constant(stacked));

        Var h = t.constant(initial_hidden(s));
        Var err_sum;
        for (int k = 0; k < steps; ++k) {
            Var z = slice_rows(z_all, k * s, s);
            Var acts = t.constant(one_hot_rows(batch.actions[static_cast<std::size_t>(k)]));
            h = cell_.forward(t, concat_cols(z, acts), h);
            Var pred = apply_transform_rows(head_.forward(t, h), z, cfg_.family);
            Var err = sum(square(sub(pred, slice_rows(z_all, (k + 1) * s, s))));
            err_sum = err_sum.valid() ? add(err_sum, err) : err;
        }
        Var trans = scale(err_sum, 1.0 / static_cast<double>(s * steps));
        Var con = contrastive_loss(stacked, z_all, cfg_.tau_s, cfg_.tau_z);
        Var total = add(trans, con);
        parts = {total.scalar(), trans.scalar(), con.scalar()};
        return total;
    }

    RnnLoss train_step(const SequenceBatch& batch) {
        const std::vector<Parameter*> params = parameters();
        zero_grads(params);
        Tape t;
        RnnLoss parts;
        t.backward(loss(t, batch, parts));
        adam_step(params, adam_, AdamConfig{.lr = cfg_.learning_rate});
        return parts;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out = encoder_.parameters();
        append(out, cell_.parameters());
        append(out, head_.parameters());
        return out;
    }

private:
    BaselineConfig cfg_;
    int obs_size_ = 0;
    Mlp encoder_;
    GruCell cell_;
    Mlp head_;
    AdamState adam_;
};

struct SsmLoss {
    double total = 0.0;
    double contrastive = 0.0;
    double kl = 0.0;
};

class SsmModel {
public:
    SsmModel() = default;

    SsmModel(int obs_size, const BaselineConfig& cfg, Rng& rng) : cfg_(cfg), obs_size_(obs_size) {
        cfg_.validate();
        const int d = cfg_.latent_dim, w = cfg_.hidden_width, l = cfg_.hidden_layers;
        encoder_ = Mlp(mlp_sizes(obs_size, w, l, 2 * d), Activation::identity, rng, "ssm.encoder");
        transition_ = Mlp(mlp_sizes(d + kNumActions, w, l, transform_head_width(cfg_.family, d) + d),
                          Activation::identity, rng, "ssm.transition");
    }

    const BaselineConfig& config() const { return cfg_; }
    void set_beta(double beta) { cfg_.beta = beta; }

    Matrix encode(const Matrix& obs) const {
        if (obs.cols() != obs_size_) throw ShapeError("ssm: observation width mismatch");
        return encoder_.predict(obs).leftCols(cfg_.latent_dim);
    }

    /// Mean of the predicted next latent.
    Matrix predict_next(const Matrix& z, std::span<const Action> actions) const {
        return detail::apply_heads(transition_.predict(detail::with_actions(z, actions)), z, cfg_.family);
    }

    /// contrastive(sampled z_t) + beta * KL[N(mu', sigma') || N(T mu, sigma~)].
    Var loss(Tape& t, const TransitionBatch& batch, Rng& noise_rng, SsmLoss& parts) {
        using namespace ops;
        batch.validate();
        if (batch.obs.cols() != obs_size_) throw ShapeError("ssm: observation width mismatch");
        const Eigen::Index b = batch.size();
        const int d = cfg_.latent_dim;
        const int head = transform_head_width(cfg_.family, d);
        Matrix stacked(2 * b, obs_size_);
        stacked << batch.obs, batch.next_obs;
        Var enc = encoder_.forward(t, t.constant(std::move(stacked)));
        Var mu = slice_cols(slice_rows(enc, 0, b), 0, d);
        Var sig = softplus(slice_cols(slice_rows(enc, 0, b), d, d), kSigmaFloor);
        Var mu_next = slice_cols(slice_rows(enc, b, b), 0, d);
        Var sig_next = softplus(slice_cols(slice_rows(enc, b, b), d, d), kSigmaFloor);

        Var out = transition_.forward(t, concat_cols(mu, t.constant(one_hot_rows(batch.actions))));
        Var mu_pred = apply_transform_rows(slice_cols(out, 0, head), mu, cfg_.family);
        Var sig_pred = softplus(slice_cols(out, head, d), kSigmaFloor);

        Var z_sample = reparam_sample(mu, sig, standard_normal(b, d, noise_rng));
        Var total = stochastic_state_loss(batch.obs, z_sample, mu_next, sig_next, mu_pred, sig_pred, cfg_.beta, cfg_.tau_s,
                                          cfg_.tau_z, &parts.contrastive, &parts.kl);
        parts.total = total.scalar();
        return total;
    }

    SsmLoss train_step(const TransitionBatch& batch, Rng& noise_rng) {
        const std::vector<Parameter*> params = parameters();
        zero_grads(params);
        Tape t;
        SsmLoss parts;
        t.backward(loss(t, batch, noise_rng, parts));
        adam_step(params, adam_, AdamConfig{.lr = cfg_.learning_rate});
        return parts;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out = encoder_.parameters();
        append(out, transition_.parameters());
        return out;
    }

private:
    BaselineConfig cfg_;
    int obs_size_ = 0;
    Mlp encoder_;
    Mlp transition_;
    AdamState adam_;
};

}  // namespace pld
