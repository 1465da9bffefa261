#pragma once
// Differentiable primitives. Every op computes its value eagerly, then
// registers a closure that maps the output gradient onto its inputs.
// Closures look values up through the tape by id because node storage may
// move while the graph grows.

#include "pld/diffmath/tape.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace pld::ops {

namespace detail {

inline Tape& tape_of(Var a) {
    if (!a.valid()) throw std::logic_error("operation on an unbound Var");
    return *a.tape();
}

inline Tape& tape_of(Var a, Var b) {
    if (a.tape() != b.tape()) throw std::logic_error("operands live on different tapes");
    return tape_of(a);
}

// Elementwise op y = f(x) with dy/dx given as a function of (x, y).
template <class F, class DF>
Var unary(Var a, F f, DF df, const char* name) {
    Tape& t = tape_of(a);
    Matrix out = a.value().unaryExpr(f);
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia, df](Tape& tp, int self) {
                        const Matrix& x = tp.value(ia);
                        const Matrix& y = tp.value(self);
                        const Matrix& g = tp.grad(self);
                        Matrix& gx = tp.grad(ia);
                        for (Eigen::Index j = 0; j < x.cols(); ++j)
                            for (Eigen::Index i = 0; i < x.rows(); ++i) gx(i, j) += g(i, j) * df(x(i, j), y(i, j));
                    },
                    name);
}

}  // namespace detail

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline Var matmul(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix out = a.value() * b.value();
    const int ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ia)) tp.grad(ia).noalias() += g * tp.value(ib).transpose();
                        if (tp.requires_grad(ib)) tp.grad(ib).noalias() += tp.value(ia).transpose() * g;
                    },
                    "matmul");
}

inline Var add(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    require_same_shape(a.value(), b.value(), "add");
    Matrix out = a.value() + b.value();
    const int ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ia)) tp.grad(ia) += g;
                        if (tp.requires_grad(ib)) tp.grad(ib) += g;
                    },
                    "add");
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    require_same_shape(a.value(), b.value(), "sub");
    Matrix out = a.value() - b.value();
    const int ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ia)) tp.grad(ia) += g;
                        if (tp.requires_grad(ib)) tp.grad(ib) -= g;
                    },
                    "sub");
}

/// Hadamard product.
inline Var mul(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    require_same_shape(a.value(), b.value(), "mul");
    Matrix out = a.value().cwiseProduct(b.value());
    const int ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ia)) tp.grad(ia) += g.cwiseProduct(tp.value(ib));
                        if (tp.requires_grad(ib)) tp.grad(ib) += g.cwiseProduct(tp.value(ia));
                    },
                    "mul");
}

/// Elementwise quotient a / b.
inline Var div(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    require_same_shape(a.value(), b.value(), "div");
    if ((b.value().array() == 0.0).any()) throw NumericError("division by zero");
    Matrix out = a.value().cwiseQuotient(b.value());
    const int ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        const Matrix& bv = tp.value(ib);
                        if (tp.requires_grad(ia)) tp.grad(ia) += g.cwiseQuotient(bv);
                        if (tp.requires_grad(ib))
                            tp.grad(ib) -= g.cwiseProduct(tp.value(self)).cwiseQuotient(bv);
                    },
                    "div");
}

inline Var scale(Var a, double s) {
    Tape& t = detail::tape_of(a);
    Matrix out = a.value() * s;
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia, s](Tape& tp, int self) { tp.grad(ia) += tp.grad(self) * s; }, "scale");
}

inline Var add_scalar(Var a, double s) {
    Tape& t = detail::tape_of(a);
    Matrix out = a.value().array() + s;
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia](Tape& tp, int self) { tp.grad(ia) += tp.grad(self); }, "add_scalar");
}

/// 1 - a
inline Var one_minus(Var a) { return add_scalar(scale(a, -1.0), 1.0); }

/// (B x n) + (1 x n), the row broadcast over every sample.
inline Var add_row(Var a, Var row) {
    Tape& t = detail::tape_of(a, row);
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
    Matrix out = a.value().rowwise() + row.value().row(0);
    const int ia = a.id(), ir = row.id();
    return t.record(std::move(out), a.requires_grad() || row.requires_grad(),
                    [ia, ir](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ia)) tp.grad(ia) += g;
                        if (tp.requires_grad(ir)) tp.grad(ir) += g.colwise().sum();
                    },
                    "add_row");
}

/// (B x n) scaled row-wise by a (B x 1) column.
inline Var mul_col(Var a, Var col) {
    Tape& t = detail::tape_of(a, col);
    if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("mul_col: scale must be rows x 1");
    Matrix out = a.value().array().colwise() * col.value().col(0).array();
    const int ia = a.id(), ic = col.id();
    return t.record(std::move(out), a.requires_grad() || col.requires_grad(),
                    [ia, ic](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ia))
                            tp.grad(ia).array() += g.array().colwise() * tp.value(ic).col(0).array();
                        if (tp.requires_grad(ic)) tp.grad(ic) += g.cwiseProduct(tp.value(ia)).rowwise().sum();
                    },
                    "mul_col");
}

inline Var relu(Var a) {
    return detail::unary(
        a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; }, "relu");
}

inline Var sigmoid(Var a) {
    return detail::unary(
        a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Var tanh(Var a) {
    return detail::unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

/// softplus(x) + floor; the floor keeps standard deviations strictly positive.
inline Var softplus(Var a, double floor = 0.0) {
    return detail::unary(
        a, [floor](double x) { return softplus(x) + floor; }, [](double x, double) { return sigmoid(x); },
        "softplus");
}

inline Var exp(Var a) {
    return detail::unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

inline Var log(Var a) {
    if ((a.value().array() <= 0.0).any()) throw NumericError("log of a non-positive value");
    return detail::unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

inline Var reciprocal(Var a) {
    if ((a.value().array() == 0.0).any()) throw NumericError("reciprocal of zero");
    return detail::unary(
        a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; }, "reciprocal");
}

inline Var square(Var a) {
    return detail::unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

/// Clamp into [lo, hi]; gradient passes only where the input was inside.
inline Var clamp(Var a, double lo, double hi) {
    return detail::unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; }, "clamp");
}

/// Forward: 1 where p >= 0.5, else 0. Backward: identity.
inline Var straight_through_round(Var p) {
    Tape& t = detail::tape_of(p);
    Matrix out = (p.value().array() >= 0.5).cast<double>().matrix();
    const int ip = p.id();
    return t.record(std::move(out), p.requires_grad(),
                    [ip](Tape& tp, int self) { tp.grad(ip) += tp.grad(self); }, "straight_through_round");
}

inline Var sum(Var a) {
    Tape& t = detail::tape_of(a);
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia](Tape& tp, int self) { tp.grad(ia).array() += tp.grad(self)(0, 0); }, "sum");
}

inline Var mean(Var a) {
    if (a.value().size() == 0) throw ShapeError("mean of an empty matrix");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Per-row sum: (B x n) -> (B x 1).
inline Var row_sum(Var a) {
    Tape& t = detail::tape_of(a);
    Matrix out = a.value().rowwise().sum();
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia](Tape& tp, int self) {
                        tp.grad(ia).array().colwise() += tp.grad(self).col(0).array();
                    },
                    "row_sum");
}

inline Var concat_cols(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
    const Eigen::Index na = a.cols(), nb = b.cols();
    Matrix out(a.rows(), na + nb);
    out << a.value(), b.value();
    const int ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib, na, nb](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ia)) tp.grad(ia) += g.leftCols(na);
                        if (tp.requires_grad(ib)) tp.grad(ib) += g.rightCols(nb);
                    },
                    "concat_cols");
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    Tape& t = detail::tape_of(a);
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
    Matrix out = a.value().middleCols(start, count);
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia, start, count](Tape& tp, int self) {
                        tp.grad(ia).middleCols(start, count) += tp.grad(self);
                    },
                    "slice_cols");
}

inline Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    Tape& t = detail::tape_of(a);
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
    Matrix out = a.value().middleRows(start, count);
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia, start, count](Tape& tp, int self) {
                        tp.grad(ia).middleRows(start, count) += tp.grad(self);
                    },
                    "slice_rows");
}

inline Var concat_rows(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    if (a.cols() != b.cols()) throw ShapeError("concat_rows: column counts differ");
    const Eigen::Index na = a.rows(), nb = b.rows();
    Matrix out(na + nb, a.cols());
    out << a.value(), b.value();
    const int ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib, na, nb](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ia)) tp.grad(ia) += g.topRows(na);
                        if (tp.requires_grad(ib)) tp.grad(ib) += g.bottomRows(nb);
                    },
                    "concat_rows");
}

/// Euclidean norm of each row, (B x n) -> (B x 1). Zero rows get a zero subgradient.
inline Var row_norm(Var a) {
    Tape& t = detail::tape_of(a);
    Matrix out = a.value().rowwise().norm();
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia](Tape& tp, int self) {
                        const Matrix& x = tp.value(ia);
                        const Matrix& n = tp.value(self);
                        const Matrix& g = tp.grad(self);
                        Matrix& gx = tp.grad(ia);
                        for (Eigen::Index i = 0; i < x.rows(); ++i) {
                            if (n(i, 0) > 0.0) gx.row(i) += (g(i, 0) / n(i, 0)) * x.row(i);
                        }
                    },
                    "row_norm");
}

/// All ordered pairwise row distances, (B x n) -> (B x B). Coincident rows get a
/// zero subgradient.
inline Var pairwise_distances(Var a) {
    Tape& t = detail::tape_of(a);
    const Matrix& x = a.value();
    const Eigen::Index b = x.rows();
    Matrix out(b, b);
    for (Eigen::Index j = 0; j < b; ++j)
        for (Eigen::Index i = 0; i < b; ++i) out(i, j) = (x.row(i) - x.row(j)).norm();
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia](Tape& tp, int self) {
                        const Matrix& xs = tp.value(ia);
                        const Matrix& d = tp.value(self);
                        const Matrix& g = tp.grad(self);
                        Matrix& gx = tp.grad(ia);
                        const Eigen::Index n = xs.rows();
                        for (Eigen::Index i = 0; i < n; ++i) {
                            for (Eigen::Index j = 0; j < n; ++j) {
                                if (d(i, j) <= 0.0) continue;
                                const double w = (g(i, j) + g(j, i)) / d(i, j);
                                gx.row(i) += w * (xs.row(i) - xs.row(j));
                            }
                        }
                    },
                    "pairwise_distances");
}

/// Row-wise softmax.
inline Var softmax_rows(Var a) {
    Tape& t = detail::tape_of(a);
    Matrix out = a.value();
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double m = out.row(i).maxCoeff();
        out.row(i) = (out.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia](Tape& tp, int self) {
                        const Matrix& y = tp.value(self);
                        const Matrix& g = tp.grad(self);
                        Matrix& gx = tp.grad(ia);
                        for (Eigen::Index i = 0; i < y.rows(); ++i) {
                            const double dot = g.row(i).dot(y.row(i));
                            gx.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
                        }
                    },
                    "softmax_rows");
}

/// Row-wise log-softmax.
inline Var log_softmax_rows(Var a) {
    Tape& t = detail::tape_of(a);
    Matrix out = a.value();
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double m = out.row(i).maxCoeff();
        const double lse = m + std::log((out.row(i).array() - m).exp().sum());
        out.row(i).array() -= lse;
    }
    const int ia = a.id();
    return t.record(std::move(out), a.requires_grad(),
                    [ia](Tape& tp, int self) {
                        const Matrix& y = tp.value(self);
                        const Matrix& g = tp.grad(self);
                        Matrix& gx = tp.grad(ia);
                        for (Eigen::Index i = 0; i < y.rows(); ++i) {
                            const double gs = g.row(i).sum();
                            gx.row(i).array() += g.row(i).array() - y.row(i).array().exp() * gs;
                        }
                    },
                    "log_softmax_rows");
}

/// Picks one column per row: out(i) = a(i, index[i]).
inline Var gather_cols(Var a, std::span<const int> index) {
    Tape& t = detail::tape_of(a);
    if (static_cast<Eigen::Index>(index.size()) != a.rows()) throw ShapeError("gather_cols: index size");
    Matrix out(a.rows(), 1);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const int c = index[static_cast<std::size_t>(i)];
        if (c < 0 || c >= a.cols()) throw ShapeError("gather_cols: column out of range");
        out(i, 0) = a.value()(i, c);
    }
    const int ia = a.id();
    std::vector<int> idx(index.begin(), index.end());
    return t.record(std::move(out), a.requires_grad(),
                    [ia, idx = std::move(idx)](Tape& tp, int self) {
                        const Matrix& g = tp.grad(self);
                        Matrix& gx = tp.grad(ia);
                        for (std::size_t i = 0; i < idx.size(); ++i)
                            gx(static_cast<Eigen::Index>(i), idx[i]) += g(static_cast<Eigen::Index>(i), 0);
                    },
                    "gather_cols");
}

/// Elementwise minimum; ties send the gradient to the first operand.
inline Var minimum(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    require_same_shape(a.value(), b.value(), "minimum");
    Matrix out = a.value().cwiseMin(b.value());
    const int ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape& tp, int self) {
                        const Matrix& av = tp.value(ia);
                        const Matrix& bv = tp.value(ib);
                        const Matrix& g = tp.grad(self);
                        const Matrix first = (av.array() <= bv.array()).cast<double>().matrix();
                        if (tp.requires_grad(ia)) tp.grad(ia) += g.cwiseProduct(first);
                        if (tp.requires_grad(ib)) tp.grad(ib) += g - g.cwiseProduct(first);
                    },
                    "minimum");
}

/// A constant copy of a's value: gradients stop here.
inline Var detach(Var a) { return detail::tape_of(a).constant(a.value()); }

}  // namespace pld::ops
