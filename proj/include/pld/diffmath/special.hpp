#pragma once
// Special operations: skew-symmetric parameterisation, the matrix exponential
// (scaling and squaring over a truncated Taylor series), straight-through
// rounding, Bernoulli/Gaussian KL divergences and the reparameterised sample.

#include "pld/diffmath/ops.hpp"
#include "pld/diffmath/tape.hpp"

#include <cmath>
#include <memory>
#include <span>
#include <vector>

namespace pld {

/// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-6;

/// Floor added to softplus standard deviations.
inline constexpr double kSigmaFloor = 1e-4;

inline constexpr int skew_param_count(int n) { return n * (n - 1) / 2; }

/// Upper triangle filled row-major from params, lower triangle negated.
inline Matrix skew_from_params(std::span<const double> params, int n) {
    if (n < 1) throw ShapeError("skew_from_params: dimension must be positive");
    if (static_cast<int>(params.size()) != skew_param_count(n)) {
        throw ShapeError("skew_from_params: expected " + std::to_string(skew_param_count(n)) + " parameters, got " +
                         std::to_string(params.size()));
    }
    Matrix s = Matrix::Zero(n, n);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            s(i, j) = params[k];
            s(j, i) = -params[k];
            ++k;
        }
    }
    return s;
}

/// Inverse of skew_from_params' linear map, applied to a gradient: dL/dparams
/// from dL/dS.
inline void skew_params_grad(const Matrix& grad_s, std::span<double> out) {
    const Eigen::Index n = grad_s.rows();
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) out[k++] += grad_s(i, j) - grad_s(j, i);
}

/// Intermediates of one matrix exponential, kept so the gradient can be pushed
/// back through the same elementary steps.
struct MatrixExpTrace {
    int squarings = 0;
    std::vector<Matrix> powers;   // A^k / k!, k = 0..m, with A = S / 2^squarings
    std::vector<Matrix> squares;  // X_0 = Taylor sum, X_{i+1} = X_i^2
    const Matrix& result() const { return squares.back(); }
};

inline MatrixExpTrace matrix_exp_traced(const Matrix& s) {
    if (s.rows() != s.cols()) throw ShapeError("matrix_exp: input must be square");
    const Eigen::Index n = s.rows();
    MatrixExpTrace tr;
    double norm1 = s.cwiseAbs().colwise().sum().maxCoeff();
    Matrix a = s;
    while (norm1 >= 0.5) {
        a *= 0.5;
        norm1 *= 0.5;
        ++tr.squarings;
    }
    Matrix term = Matrix::Identity(n, n);
    Matrix total = term;
    tr.powers.push_back(term);
    for (int k = 1; k < 64; ++k) {
        term = term * a / static_cast<double>(k);
        tr.powers.push_back(term);
        total += term;
        if (term.cwiseAbs().maxCoeff() < 1e-14) break;
    }
    tr.squares.reserve(static_cast<std::size_t>(tr.squarings) + 1);
    tr.squares.push_back(std::move(total));
    for (int i = 0; i < tr.squarings; ++i) tr.squares.push_back(tr.squares.back() * tr.squares.back());
    require_finite(tr.result(), "matrix_exp");
    return tr;
}

inline Matrix matrix_exp(const Matrix& s) { return matrix_exp_traced(s).result(); }

/// dL/dS given dL/dexp(S), by reversing the squarings and the Taylor recursion.
inline Matrix matrix_exp_backward(const MatrixExpTrace& tr, const Matrix& grad_result) {
    Matrix g = grad_result;
    for (int i = tr.squarings; i > 0; --i) {
        const Matrix& x = tr.squares[static_cast<std::size_t>(i - 1)];
        g = g * x.transpose() + x.transpose() * g;
    }
    // Taylor sum T = sum_k P_k with P_k = P_{k-1} A / k.
    const std::size_t m = tr.powers.size() - 1;
    const Eigen::Index n = g.rows();
    Matrix grad_a = Matrix::Zero(n, n);
    if (m >= 1) {
        // A is recovered from the first power: P_1 = A.
        const Matrix& a = tr.powers[1];
        Matrix g_power = g;  // dL/dP_m
        for (std::size_t k = m; k >= 1; --k) {
            const double inv_k = 1.0 / static_cast<double>(k);
            grad_a.noalias() += tr.powers[k - 1].transpose() * g_power * inv_k;
            g_power = g + g_power * a.transpose() * inv_k;  // dL/dP_{k-1}
        }
    }
    return grad_a / std::ldexp(1.0, tr.squarings);
}

/// Per-row Bernoulli KL(q || p) after clamping both: (B x n) -> (B x 1).
inline Var bernoulli_kl(Var q, Var p) {
    using namespace ops;
    require_same_shape(q.value(), p.value(), "bernoulli_kl");
    Var qc = clamp(q, kProbClamp, 1.0 - kProbClamp);
    Var pc = clamp(p, kProbClamp, 1.0 - kProbClamp);
    Var q1 = one_minus(qc);
    Var p1 = one_minus(pc);
    Var pos = mul(qc, sub(log(qc), log(pc)));
    Var neg = mul(q1, sub(log(q1), log(p1)));
    return row_sum(add(pos, neg));
}

/// Per-row KL(N(mu_q, sig_q) || N(mu_p, sig_p)) for diagonal Gaussians given
/// as standard deviations: (B x d) -> (B x 1).
inline Var diag_gaussian_kl(Var mu_q, Var sig_q, Var mu_p, Var sig_p) {
    using namespace ops;
    require_same_shape(mu_q.value(), mu_p.value(), "diag_gaussian_kl");
    require_same_shape(sig_q.value(), sig_p.value(), "diag_gaussian_kl");
    require_same_shape(mu_q.value(), sig_q.value(), "diag_gaussian_kl");
    if ((sig_q.value().array() <= 0).any() || (sig_p.value().array() <= 0).any())
        throw NumericError("diag_gaussian_kl: standard deviations must be positive");
    // Written in ratios so that equal arguments give exactly zero.
    Var ratio = div(sig_q, sig_p);
    Var shift = div(sub(mu_q, mu_p), sig_p);
    Var quad = scale(add(square(ratio), square(shift)), 0.5);
    return row_sum(add_scalar(sub(quad, log(ratio)), -0.5));
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

/// mu + sigma * noise.
inline Var reparam_sample(Var mu, Var sigma, const Matrix& noise) {
    using namespace ops;
    require_same_shape(mu.value(), noise, "reparam_sample");
    Var eps = mu.tape()->constant(noise);
    return add(mu, mul(sigma, eps));
}

/// Applies a rotation built from per-row skew parameters to each row of z:
/// out_b = exp(skew(params_b)) z_b. params: (B x d(d-1)/2), z: (B x d).
inline Var rotate_rows(Var params, Var z) {
    Tape& t = *z.tape();
    const Eigen::Index b = z.rows();
    const int d = static_cast<int>(z.cols());
    if (params.rows() != b || params.cols() != skew_param_count(d))
        throw ShapeError("rotate_rows: parameter block must be B x d(d-1)/2");
    auto traces = std::make_shared<std::vector<MatrixExpTrace>>();
    traces->reserve(static_cast<std::size_t>(b));
    Matrix out(b, d);
    const Matrix& pv = params.value();
    const Matrix& zv = z.value();
    std::vector<double> row(static_cast<std::size_t>(pv.cols()));
    for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index k = 0; k < pv.cols(); ++k) row[static_cast<std::size_t>(k)] = pv(i, k);
        traces->push_back(matrix_exp_traced(skew_from_params(row, d)));
        out.row(i) = (traces->back().result() * zv.row(i).transpose()).transpose();
    }
    const int ip = params.id(), iz = z.id();
    return t.record(std::move(out), params.requires_grad() || z.requires_grad(),
                    [ip, iz, traces](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        const Matrix& zs = tp.value(iz);
                        const bool want_p = tp.requires_grad(ip);
                        const bool want_z = tp.requires_grad(iz);
                        for (Eigen::Index i = 0; i < g.rows(); ++i) {
                            const MatrixExpTrace& tr = (*traces)[static_cast<std::size_t>(i)];
                            if (want_z) tp.grad(iz).row(i) += (tr.result().transpose() * g.row(i).transpose()).transpose();
                            if (want_p) {
                                const Matrix grad_r = g.row(i).transpose() * zs.row(i);
                                const Matrix grad_s = matrix_exp_backward(tr, grad_r);
                                Matrix& gp = tp.grad(ip);
                                std::vector<double> acc(static_cast<std::size_t>(gp.cols()), 0.0);
                                skew_params_grad(grad_s, acc);
                                for (Eigen::Index k = 0; k < gp.cols(); ++k) gp(i, k) += acc[static_cast<std::size_t>(k)];
                            }
                        }
                    },
                    "rotate_rows");
}

// Plain-value conveniences over the tape implementations.

inline double bernoulli_kl(const Vector& q, const Vector& p) {
    if (q.size() != p.size()) throw ShapeError("bernoulli_kl: length mismatch");
    Tape t;
    return bernoulli_kl(t.constant(q.transpose()), t.constant(p.transpose())).scalar();
}

struct GaussianParams {
    Vector mean;
    Vector stddev;
};

inline double diag_gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
    if (q.mean.size() != p.mean.size() || q.stddev.size() != p.stddev.size() || q.mean.size() != q.stddev.size())
        throw ShapeError("diag_gaussian_kl: dimension mismatch");
    Tape t;
    return diag_gaussian_kl(t.constant(q.mean.transpose()), t.constant(q.stddev.transpose()),
                            t.constant(p.mean.transpose()), t.constant(p.stddev.transpose()))
        .scalar();
}

inline Vector reparam_sample(const GaussianParams& g, const Vector& noise) {
    if (noise.size() != g.mean.size()) throw ShapeError("reparam_sample: noise dimension");
    return g.mean + g.stddev.cwiseProduct(noise);
}

inline Vector straight_through_round(const Vector& p) { return (p.array() >= 0.5).cast<double>().matrix(); }

}  // namespace pld
