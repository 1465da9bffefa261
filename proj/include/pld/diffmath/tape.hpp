#pragma once
// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every value produced while a loss is being built, together
// with a closure that pushes the node's gradient back to its parents. Rows are
// batch samples throughout the library, so most nodes are (batch x features).

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pld {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Raised whenever a NaN or Inf appears; the harness maps it to exit code 2.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require_finite(const Matrix& m, const char* where) {
    if (!m.allFinite()) {
        throw NumericError(std::string("non-finite value produced by ") + where);
    }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* where) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(where) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

/// A named trainable array with its accumulated gradient.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const;
    bool requires_grad() const;
    int id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    // Receives the tape and the id of the node whose gradient is being propagated.
    using Backward = std::function<void(Tape&, int)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix v) { return push(std::move(v), false, nullptr, {}); }

    // A leaf whose gradient is kept after backward(); used for inputs under test.
    Var variable(Matrix v) { return push(std::move(v), true, nullptr, {}); }

    Var parameter(Parameter& p) {
        if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
            return Var(this, it->second);
        }
        Var v = push(Matrix{}, true, &p, {});
        param_nodes_.emplace(&p, v.id_);
        return v;
    }

    /// Records an op output. `needs_grad` should be true iff any parent needs it.
    Var record(Matrix value, bool needs_grad, Backward back, const char* op_name) {
        require_finite(value, op_name);
        return push(std::move(value), needs_grad, nullptr, needs_grad ? std::move(back) : Backward{});
    }

    const Matrix& value(int id) const {
        const Node& n = nodes_.at(static_cast<std::size_t>(id));
        return n.param ? n.param->value : n.value;
    }
    bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).needs_grad; }

    /// Gradient buffer of a node, allocated as zeros on first touch.
    Matrix& grad(int id) {
        Node& n = nodes_.at(static_cast<std::size_t>(id));
        if (n.grad.size() == 0) {
            const Matrix& v = n.param ? n.param->value : n.value;
            n.grad = Matrix::Zero(v.rows(), v.cols());
        }
        return n.grad;
    }

    bool has_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).grad.size() != 0; }

    /// Gradient of the last backward() w.r.t. v (zeros if v did not influence the loss).
    Matrix gradient(Var v) {
        const Node& n = nodes_.at(static_cast<std::size_t>(v.id_));
        if (n.grad.size() == 0) return Matrix::Zero(v.rows(), v.cols());
        return n.grad;
    }

    /// Runs reverse accumulation from a 1x1 node and adds parameter gradients
    /// into Parameter::grad.
    void backward(Var loss, double seed = 1.0) {
        if (loss.tape_ != this) throw std::logic_error("backward: variable from another tape");
        const Matrix& lv = value(loss.id_);
        if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be 1x1");
        grad(loss.id_)(0, 0) += seed;
        for (int i = loss.id_; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.needs_grad || n.grad.size() == 0) continue;
            if (n.back) n.back(*this, i);  // closures only touch grads, never push nodes
        }
        for (auto& [param, id] : param_nodes_) {
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.size() != 0) param->grad += n.grad;
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    // Parameter nodes read the parameter's storage directly instead of copying.
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        Parameter* param = nullptr;
        Backward back;
    };

    Var push(Matrix v, bool needs_grad, Parameter* p, Backward back) {
        nodes_.push_back(Node{std::move(v), Matrix{}, needs_grad, p, std::move(back)});
        return Var(this, static_cast<int>(nodes_.size() - 1));
    }

    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }
inline double Var::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) throw ShapeError("scalar(): node is not 1x1");
    return v(0, 0);
}

}  // namespace pld
