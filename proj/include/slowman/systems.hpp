#pragma once

// Explicit fast-slow systems
//
//     x' = f(x, y, eps),        x in R^{N_s}
//     eps y' = g(x, y, eps),    y in R^{N_f}
//
// together with a fixed-step flow map and reference slow manifolds y = h(x)
// used as validation oracles.

#include "slowman/types.hpp"

#include <complex>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace slowman {

/// Analytic Jacobians of a system. Any member may be empty, in which case
/// central finite differences are used for that block.
struct SystemJacobians {
    JacobianFn dx_g;   ///< N_f x N_s
    JacobianFn dy_g;   ///< N_f x N_f
    JacobianFn deps_g; ///< N_f x 1
    JacobianFn dx_f;   ///< N_s x N_s
    JacobianFn dy_f;   ///< N_s x N_f
};

enum class ManifoldKind { ExactClosedForm, MatrixPowerOracle, AsymptoticExpansion };

/// Axis-aligned box K in slow-variable space.
struct Box {
    Vector lower;
    Vector upper;
};

/// A known (or asymptotically known) slow manifold y = h(x).
struct ReferenceManifold {
    ManifoldKind kind = ManifoldKind::ExactClosedForm;
    /// h(x). For an asymptotic expansion this is the truncated sum of eps^i h_[i](x).
    std::function<Vector(const Vector& x)> graph;
    /// Expansion coefficients h_[0], h_[1], ... (may be empty).
    std::vector<std::function<Vector(const Vector& x)>> terms;
    /// Zero-derivative root h_m(x); only for kind == MatrixPowerOracle.
    std::function<Vector(const Vector& x, int m)> order_root;
    std::optional<Box> domain;
};

const char* to_string(ManifoldKind kind);

/// An explicit fast-slow ODE system. Immutable after construction; the
/// `with_*` members return modified copies.
class FastSlowSystem {
public:
    FastSlowSystem(std::string name, int n_slow, int n_fast, double epsilon, RhsFn f, RhsFn g);

    FastSlowSystem with_jacobians(SystemJacobians jac) const;
    /// Attach the generator A of a linear system z' = A z (N x N, eps already applied).
    FastSlowSystem with_linear_generator(Matrix generator) const;
    FastSlowSystem with_reference(ReferenceManifold ref) const;
    FastSlowSystem with_parameters(std::map<std::string, double> params) const;

    const std::string& name() const noexcept { return name_; }
    int n_slow() const noexcept { return n_slow_; }
    int n_fast() const noexcept { return n_fast_; }
    int dimension() const noexcept { return n_slow_ + n_fast_; }
    double epsilon() const noexcept { return epsilon_; }
    const std::map<std::string, double>& parameters() const noexcept { return params_; }

    void eval_f(ConstVectorRef x, ConstVectorRef y, double eps, VectorRef out) const;
    void eval_g(ConstVectorRef x, ConstVectorRef y, double eps, VectorRef out) const;
    Vector f(ConstVectorRef x, ConstVectorRef y) const;
    Vector g(ConstVectorRef x, ConstVectorRef y) const;
    Vector g_at(ConstVectorRef x, ConstVectorRef y, double eps) const;

    /// dz/dt = (f, g / eps) at z = (x, y).
    void vector_field(ConstVectorRef z, VectorRef out) const;
    /// G(z) = (eps f, g), the eps-scaled field.
    Vector scaled_field(ConstVectorRef z) const;

    Matrix dx_g(ConstVectorRef x, ConstVectorRef y, double eps) const;
    Matrix dy_g(ConstVectorRef x, ConstVectorRef y, double eps) const;
    Vector deps_g(ConstVectorRef x, ConstVectorRef y, double eps) const;
    Matrix dx_f(ConstVectorRef x, ConstVectorRef y, double eps) const;
    Matrix dy_f(ConstVectorRef x, ConstVectorRef y, double eps) const;

    bool has_analytic_jacobians() const noexcept;
    const std::optional<Matrix>& linear_generator() const noexcept { return generator_; }

    const std::vector<ReferenceManifold>& references() const noexcept { return references_; }
    /// First attached reference of the given kind, or nullptr.
    const ReferenceManifold* reference(ManifoldKind kind) const noexcept;

    Vector join(ConstVectorRef x, ConstVectorRef y) const;
    Vector slow_part(ConstVectorRef z) const { return z.head(n_slow_); }
    Vector fast_part(ConstVectorRef z) const { return z.tail(n_fast_); }

private:
    std::string name_;
    int n_slow_;
    int n_fast_;
    double epsilon_;
    RhsFn f_;
    RhsFn g_;
    SystemJacobians jac_;
    std::optional<Matrix> generator_;
    std::vector<ReferenceManifold> references_;
    std::map<std::string, double> params_;
};

enum class FlowScheme { Rk4 };

/// Fixed-step numerical flow phi(z; t) of a system.
class FlowMap {
public:
    /// step must satisfy 0 < step <= eps.
    FlowMap(FastSlowSystem system, double step, FlowScheme scheme = FlowScheme::Rk4);

    const FastSlowSystem& system() const noexcept { return system_; }
    double step() const noexcept { return step_; }
    FlowScheme scheme() const noexcept { return scheme_; }

private:
    FastSlowSystem system_;
    double step_;
    FlowScheme scheme_;
};

/// Default integrator step min(eps, h_hat) / 4.
FlowMap default_flow_map(const FastSlowSystem& system, double h_hat);

/// phi(z; t). Each call subdivides [0, t] into ceil(t / step) equal RK4 steps.
Vector flow(const FlowMap& fm, ConstVectorRef z, double t);

/// States phi(z; l * dt) for l = 0..count, integrating once through all nodes.
std::vector<Vector> flow_nodes(const FlowMap& fm, ConstVectorRef z, double dt, int count);

/// Scalar oracle system x' = a x, eps y' = -(y - c x).
FastSlowSystem linear_test(double a, double c, double epsilon);

/// Segel-Slemrod scaled Michaelis-Menten kinetics
///   s' = -s + (s + kappa - lambda) c,   eps c' = s - (s + kappa) c.
FastSlowSystem michaelis_menten(double kappa, double lambda, double epsilon);

/// Linear system with one slow variable x' = a x and a fast block with
/// prescribed eigenvalues (eps-normalized). Each eigenvalue with nonzero
/// imaginary part contributes a 2x2 rotation-scaling block (its conjugate is
/// implied); real ones contribute a 1x1 block. The critical manifold is
/// y = (1, ..., 1) x.
FastSlowSystem spectral_test(const std::vector<std::complex<double>>& eigenvalues, double a,
                             double epsilon);

/// Complex pair lambda_re (1 + i tan theta), optionally followed by extra real modes.
FastSlowSystem complex_pair_test(double theta, double lambda_re, double epsilon,
                                 const std::vector<double>& extra_real = {}, double a = 0.0);

/// Coefficients h_[0] (and h_[1] when order == 1) of the eps-expansion of the
/// slow manifold at x. h_[0] is found by damped Newton from `seed` (zeros if absent).
std::vector<Vector> expand_slow_manifold(const FastSlowSystem& system, int order, ConstVectorRef x,
                                         const std::optional<Vector>& seed = std::nullopt);

/// Point h_[0](x) on the critical manifold g(x, y, 0) = 0.
Vector critical_point(const FastSlowSystem& system, ConstVectorRef x,
                      const std::optional<Vector>& seed = std::nullopt);

/// g(x, h(x), eps) - eps Dh(x) f(x, h(x), eps), with Dh by central differences.
Vector invariance_residual(const FastSlowSystem& system,
                           const std::function<Vector(const Vector&)>& h, ConstVectorRef x);

/// Spectrum of (D_y g) at (x, y, eps_eval).
std::vector<std::complex<double>> fast_spectrum(const FastSlowSystem& system, ConstVectorRef x,
                                                ConstVectorRef y, double eps_eval = 0.0);

/// Throws DomainError unless every eigenvalue of (D_y g)_0 at (x, h_[0](x))
/// has strictly negative real part.
void check_normal_attractivity(const FastSlowSystem& system, ConstVectorRef x);

/// x solves J x = rhs; throws DegeneracyError when J is numerically singular.
Vector solve_checked(const Matrix& jacobian, const Vector& rhs, const char* what);

}  // namespace slowman
