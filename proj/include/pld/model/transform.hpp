#pragma once
// Affine latent transformations z' = R z + v. A decoder head emits, per row,
// [v (d) | skew parameters (d(d-1)/2)] for the affine family, only v for
// translations and only skew parameters for rotations.

#include "pld/diffmath.hpp"

#include <stdexcept>
#include <string>
#include <string_view>

namespace pld {

enum class TransformFamily { rotation, translation, affine };

inline std::string_view family_name(TransformFamily f) {
    switch (f) {
        case TransformFamily::rotation: return "rotation";
        case TransformFamily::translation: return "translation";
        case TransformFamily::affine: return "affine";
    }
    return "?";
}

inline TransformFamily parse_family(std::string_view s) {
    if (s == "rotation") return TransformFamily::rotation;
    if (s == "translation") return TransformFamily::translation;
    if (s == "affine") return TransformFamily::affine;
    throw std::invalid_argument("unknown transform family '" + std::string(s) + "'");
}

inline bool has_rotation(TransformFamily f) { return f != TransformFamily::translation; }
inline bool has_translation(TransformFamily f) { return f != TransformFamily::rotation; }

/// Width of the decoder output for latent dimension d.
inline int transform_head_width(TransformFamily f, int d) {
    return (has_translation(f) ? d : 0) + (has_rotation(f) ? skew_param_count(d) : 0);
}

struct Transform {
    TransformFamily family = TransformFamily::affine;
    Matrix rotation;
    Vector translation;

    Vector apply(const Vector& z) const {
        if (z.size() != rotation.cols()) throw ShapeError("apply_transform: dimension mismatch");
        return rotation * z + translation;
    }
};

inline Vector apply_transform(const Transform& t, const Vector& z) { return t.apply(z); }

/// Builds the transform encoded by one decoder output row.
inline Transform transform_from_head(const RowVector& head, TransformFamily f, int d) {
    if (head.size() != transform_head_width(f, d)) throw ShapeError("transform_from_head: width mismatch");
    Transform t;
    t.family = f;
    t.translation = Vector::Zero(d);
    t.rotation = Matrix::Identity(d, d);
    Eigen::Index offset = 0;
    if (has_translation(f)) {
        t.translation = head.segment(0, d).transpose();
        offset = d;
    }
    if (has_rotation(f)) {
        const Vector params = head.segment(offset, skew_param_count(d)).transpose();
        t.rotation = matrix_exp(skew_from_params({params.data(), static_cast<std::size_t>(params.size())}, d));
    }
    return t;
}

/// Differentiable z' = R z + v with R, v read from the decoder head rows.
inline Var apply_transform_rows(Var head, Var z, TransformFamily f) {
    using namespace ops;
    const int d = static_cast<int>(z.cols());
    if (head.rows() != z.rows() || head.cols() != transform_head_width(f, d))
        throw ShapeError("apply_transform_rows: head shape mismatch");
    Var out = z;
    Eigen::Index offset = has_translation(f) ? d : 0;
    if (has_rotation(f)) out = rotate_rows(slice_cols(head, offset, skew_param_count(d)), z);
    if (has_translation(f)) out = add(out, slice_cols(head, 0, d));
    return out;
}

}  // namespace pld
