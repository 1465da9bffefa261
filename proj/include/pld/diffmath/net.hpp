#pragma once
// Small feedforward and recurrent networks. Each has a taped forward pass for
// training and a tape-free predict() for inference-heavy loops (planning,
// acting), which must agree exactly with the taped value.

#include "pld/diffmath/ops.hpp"
#include "pld/diffmath/tape.hpp"

#include <random>
#include <string>
#include <vector>

namespace pld {

enum class Activation { identity, relu, sigmoid, softplus, tanh };

inline Var activate(Var x, Activation act) {
    switch (act) {
        case Activation::identity: return x;
        case Activation::relu: return ops::relu(x);
        case Activation::sigmoid: return ops::sigmoid(x);
        case Activation::softplus: return ops::softplus(x);
        case Activation::tanh: return ops::tanh(x);
    }
    return x;
}

inline void activate_inplace(Matrix& x, Activation act) {
    switch (act) {
        case Activation::identity: break;
        case Activation::relu: x = x.cwiseMax(0.0); break;
        case Activation::sigmoid: x = x.unaryExpr([](double v) { return ops::sigmoid(v); }); break;
        case Activation::softplus: x = x.unaryExpr([](double v) { return ops::softplus(v); }); break;
        case Activation::tanh: x = x.array().tanh().matrix(); break;
    }
}

// Uniform in +-1/sqrt(fan_in) for both weights and biases.
inline Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
}

/// y = x W + b, with x given as (batch x in).
struct Linear {
    Parameter weight;
    Parameter bias;

    Linear() = default;
    Linear(int in, int out, Rng& rng, const std::string& name)
        : weight(name + ".w", fan_in_uniform(in, out, in, rng)), bias(name + ".b", fan_in_uniform(1, out, in, rng)) {}

    int in_features() const { return static_cast<int>(weight.value.rows()); }
    int out_features() const { return static_cast<int>(weight.value.cols()); }

    Var forward(Tape& t, Var x) { return ops::add_row(ops::matmul(x, t.parameter(weight)), t.parameter(bias)); }

    Matrix predict(const Matrix& x) const {
        Matrix y = x * weight.value;
        y.rowwise() += bias.value.row(0);
        return y;
    }
};

/// {in, width x layers, out}
inline std::vector<int> mlp_sizes(int in, int width, int layers, int out) {
    std::vector<int> s{in};
    for (int i = 0; i < layers; ++i) s.push_back(width);
    s.push_back(out);
    return s;
}

/// Rectified-linear hidden layers with a configurable output activation.
class Mlp {
public:
    Mlp() = default;

    /// sizes = {in, hidden..., out}.
    Mlp(const std::vector<int>& sizes, Activation output, Rng& rng, const std::string& name) : output_(output) {
        if (sizes.size() < 2) throw ShapeError("Mlp needs at least input and output sizes");
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
            if (sizes[i] < 1 || sizes[i + 1] < 1) throw ShapeError("Mlp layer sizes must be positive");
            layers_.emplace_back(sizes[i], sizes[i + 1], rng, name + ".l" + std::to_string(i));
        }
    }

    int in_features() const { return layers_.front().in_features(); }
    int out_features() const { return layers_.back().out_features(); }
    Activation output_activation() const { return output_; }

    Var forward(Tape& t, Var x) {
        if (x.cols() != in_features()) throw ShapeError("Mlp::forward: input width mismatch");
        Var h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = layers_[i].forward(t, h);
            h = activate(h, i + 1 < layers_.size() ? Activation::relu : output_);
        }
        return h;
    }

    Matrix predict(const Matrix& x) const {
        if (x.cols() != in_features()) throw ShapeError("Mlp::predict: input width mismatch");
        Matrix h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = layers_[i].predict(h);
            activate_inplace(h, i + 1 < layers_.size() ? Activation::relu : output_);
        }
        require_finite(h, "Mlp::predict");
        return h;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (auto& l : layers_) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
        return out;
    }

    std::vector<const Parameter*> parameters() const {
        std::vector<const Parameter*> out;
        for (const auto& l : layers_) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
        return out;
    }

    std::vector<Linear>& layers() { return layers_; }
    const std::vector<Linear>& layers() const { return layers_; }

private:
    std::vector<Linear> layers_;
    Activation output_ = Activation::identity;
};

/// Gated recurrent cell: h' = (1 - u) * n + u * h, with
/// r = sigma(x Wr + h Ur + br), u = sigma(x Wu + h Uu + bu), n = tanh(x Wn + (r*h) Un + bn).
class GruCell {
public:
    GruCell() = default;
    GruCell(int input, int hidden, Rng& rng, const std::string& name)
        : reset_x_(input, hidden, rng, name + ".r.x"),
          reset_h_(hidden, hidden, rng, name + ".r.h"),
          update_x_(input, hidden, rng, name + ".u.x"),
          update_h_(hidden, hidden, rng, name + ".u.h"),
          cand_x_(input, hidden, rng, name + ".n.x"),
          cand_h_(hidden, hidden, rng, name + ".n.h") {}

    int input_size() const { return reset_x_.in_features(); }
    int hidden_size() const { return reset_h_.in_features(); }

    Var forward(Tape& t, Var x, Var h) {
        using namespace ops;
        Var r = sigmoid(add(reset_x_.forward(t, x), reset_h_.forward(t, h)));
        Var u = sigmoid(add(update_x_.forward(t, x), update_h_.forward(t, h)));
        Var n = tanh(add(cand_x_.forward(t, x), cand_h_.forward(t, mul(r, h))));
        return add(mul(one_minus(u), n), mul(u, h));
    }

    Matrix predict(const Matrix& x, const Matrix& h) const {
        auto sig = [](double v) { return ops::sigmoid(v); };
        const Matrix r = (reset_x_.predict(x) + reset_h_.predict(h)).unaryExpr(sig);
        const Matrix u = (update_x_.predict(x) + update_h_.predict(h)).unaryExpr(sig);
        const Matrix n = (cand_x_.predict(x) + cand_h_.predict(r.cwiseProduct(h))).array().tanh().matrix();
        Matrix out = (1.0 - u.array()) * n.array() + u.array() * h.array();
        require_finite(out, "GruCell::predict");
        return out;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (Linear* l : {&reset_x_, &reset_h_, &update_x_, &update_h_, &cand_x_, &cand_h_}) {
            out.push_back(&l->weight);
            out.push_back(&l->bias);
        }
        return out;
    }

private:
    Linear reset_x_, reset_h_, update_x_, update_h_, cand_x_, cand_h_;
};

inline void zero_grads(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

/// Copies values between equally shaped parameter lists (names are kept).
inline void copy_values(const std::vector<Parameter*>& dst, const std::vector<Parameter*>& src) {
    if (dst.size() != src.size()) throw ShapeError("copy_values: parameter lists differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        require_same_shape(dst[i]->value, src[i]->value, "copy_values");
        dst[i]->value = src[i]->value;
    }
}

inline void append(std::vector<Parameter*>& dst, const std::vector<Parameter*>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace pld
