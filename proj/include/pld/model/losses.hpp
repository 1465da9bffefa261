#pragma once
// Training objectives shared by the parsimony model and the comparison models.

#include "pld/diffmath.hpp"
#include "pld/envs.hpp"

#include <vector>

namespace pld {

/// (s, a, s') triples, one per row.
struct TransitionBatch {
    Matrix obs;
    std::vector<Action> actions;
    Matrix next_obs;

    Eigen::Index size() const { return obs.rows(); }

    void validate() const {
        if (obs.rows() != next_obs.rows() || obs.cols() != next_obs.cols() ||
            static_cast<Eigen::Index>(actions.size()) != obs.rows())
            throw ShapeError("TransitionBatch: inconsistent dimensions");
        if (obs.rows() == 0) throw ShapeError("TransitionBatch: empty batch");
    }
};

/// Loss components as reported per training step. `total` is the sum of the
/// other three (each already weighted).
struct LossBreakdown {
    double total = 0.0;
    double transition = 0.0;
    double parsimony = 0.0;
    double contrastive = 0.0;
};

/// ||e||^2 + exp(-||e||) per row, e = z_pred - z_next; squared term only when
/// mse_only is set. (B x d) -> (B x 1).
inline Var transition_loss_det(Var z_pred, Var z_next, bool mse_only = false) {
    using namespace ops;
    Var err = sub(z_pred, z_next);
    Var sq = row_sum(square(err));
    if (mse_only) return sq;
    return add(sq, exp(scale(row_norm(err), -1.0)));
}

/// Cross entropy between latent similarities k = exp(-tau_z ||z - z'||) and
/// state targets l = exp(-tau_s ||s - s'||), over all ordered pairs of the batch:
///   -(1/N) sum [k log l + (1 - k) log(1 - l)],  N = B^2.
/// l is clamped into [eps, 1 - eps]; only k depends on the encoder.
inline Var contrastive_loss(const Matrix& states, Var z, double tau_s, double tau_z) {
    using namespace ops;
    const Eigen::Index b = states.rows();
    if (b < 2) throw ShapeError("contrastive_loss: batch must hold at least two states");
    if (z.rows() != b) throw ShapeError("contrastive_loss: states and latents differ in count");
    Matrix slope(b, b);
    double offset = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
        for (Eigen::Index i = 0; i < b; ++i) {
            const double dist = (states.row(i) - states.row(j)).norm();
            const double l = std::clamp(std::exp(-tau_s * dist), kProbClamp, 1.0 - kProbClamp);
            const double log_l = std::log(l);
            const double log_1ml = std::log1p(-l);
            slope(i, j) = log_l - log_1ml;
            offset += log_1ml;
        }
    }
    Var k = exp(scale(pairwise_distances(z), -tau_z));
    Var linear = sum(mul(k, z.tape()->constant(std::move(slope))));
    const double n = static_cast<double>(b * b);
    return scale(add_scalar(linear, offset), -1.0 / n);
}

/// KL[N(mu_next, sig_next) || N(mu_pred, sig_pred)] per row: the encoded next
/// state against the transition model's prediction.
inline Var transition_loss_stoch(Var mu_next, Var sig_next, Var mu_pred, Var sig_pred) {
    return diag_gaussian_kl(mu_next, sig_next, mu_pred, sig_pred);
}

/// Contrastive term on sampled latents plus beta * KL[q(z|s) || p(z | z_prev, a_prev)].
/// Returns the total and writes the two components.
inline Var stochastic_state_loss(const Matrix& states, Var z_sample, Var mu_q, Var sig_q, Var mu_prior,
                                 Var sig_prior, double beta, double tau_s, double tau_z, double* contrastive_out = nullptr,
                                 double* kl_out = nullptr) {
    using namespace ops;
    Var con = contrastive_loss(states, z_sample, tau_s, tau_z);
    Var kl = scale(mean(diag_gaussian_kl(mu_q, sig_q, mu_prior, sig_prior)), beta);
    if (contrastive_out) *contrastive_out = con.scalar();
    if (kl_out) *kl_out = kl.scalar();
    return add(con, kl);
}

}  // namespace pld
