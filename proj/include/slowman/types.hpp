#pragma once

#include <Eigen/Dense>

#include <functional>

namespace slowman {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;
using MatrixRef = Eigen::Ref<Matrix>;

/// Right-hand side evaluator: writes f(x, y, eps) or g(x, y, eps) into `out`.
/// `out` is pre-sized by the caller.
using RhsFn = std::function<void(ConstVectorRef x, ConstVectorRef y, double eps, VectorRef out)>;

/// Jacobian evaluator: writes a pre-sized block into `out`.
using JacobianFn = std::function<void(ConstVectorRef x, ConstVectorRef y, double eps, MatrixRef out)>;

/// Euclidean norm used for every tolerance and residual.
inline double norm(const ConstVectorRef& v) { return v.norm(); }

inline bool all_finite(const ConstVectorRef& v) { return v.allFinite(); }

}  // namespace slowman
