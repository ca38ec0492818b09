#pragma once

// Functional iteration y <- F(y) = y - L(x0, y) that pulls a fast-variable
// guess onto the m-th zero-derivative manifold while the slow coordinate x0
// stays fixed.

#include "slowman/derivatives.hpp"
#include "slowman/errors.hpp"

#include <optional>
#include <vector>

namespace slowman {

enum class SeedPolicy { UserValue, CriticalManifold, PreviousOutput };

enum class Outcome { Converged, MaxIterations, Diverged };

const char* to_string(SeedPolicy p);
const char* to_string(Outcome o);

struct IterationConfig {
    int m = 0;
    DerivativeMode mode = DerivativeMode::analytic(1.0);
    /// TOL_m; eps^{m+1} when unset.
    std::optional<double> tol;
    int max_iters = 10000;
    SeedPolicy seed_policy = SeedPolicy::UserValue;
    /// Stop as diverged once a residual exceeds this multiple of the first one.
    double divergence_factor = 1e6;

    double resolved_tol(const FastSlowSystem& system) const;
    void validate(const FastSlowSystem& system) const;
};

struct IterationTrace {
    std::vector<Vector> iterates;  ///< y^(1) (seed), y^(2), ...
    std::vector<double> residuals; ///< ||y^(r+1) - y^(r)||
    Outcome outcome = Outcome::MaxIterations;
    bool converged = false;
    Vector output;                       ///< y#_m, the last iterate
    std::optional<double> error_bound;   ///< set for converged runs
    int iterations_used = 0;
    double tol = 0.0;
    Vector x0;                           ///< the fixed slow coordinate
    std::vector<int> subspace_dims;      ///< Newton-block size per step (RPM runs only)
};

/// Thrown when an iterate turns non-finite; carries the trace up to failure.
class IterationDivergence : public DivergenceError {
public:
    IterationDivergence(const std::string& what, std::size_t step, IterationTrace trace)
        : DivergenceError(what, step), trace_(std::move(trace)) {}
    const IterationTrace& trace() const noexcept { return trace_; }

private:
    IterationTrace trace_;
};

/// The map F (or F-hat) for a fixed x0.
class ZeroDerivativeMap {
public:
    ZeroDerivativeMap(const FastSlowSystem& system, const DerivativeMode& mode, int m, Vector x0,
                      std::optional<FlowMap> flow = std::nullopt);

    /// L(x0, y) (L_m or Lhat_m).
    Vector residual(const Vector& y) const;
    /// F(y) = y - L(x0, y).
    Vector apply(const Vector& y) const;
    /// D_y L by central differences.
    Matrix residual_jacobian(const Vector& y) const;
    /// D_y F by forward differences with the given relative step.
    Matrix map_jacobian(const Vector& y, const Vector& Fy, double rel_step) const;

    const FastSlowSystem& system() const noexcept { return *system_; }
    const Vector& x0() const noexcept { return x0_; }
    int m() const noexcept { return m_; }

private:
    const FastSlowSystem* system_;
    DerivativeMode mode_;
    int m_;
    Vector x0_;
    std::optional<FlowMap> flow_;
};

/// Flow map used for forward-difference mode when none is supplied:
/// step min(eps, Hhat) / 4.
FlowMap flow_for(const FastSlowSystem& system, const DerivativeMode& mode);

/// Runs F_m (analytic) or F-hat_m (forward-difference) from the seed.
IterationTrace project(const FastSlowSystem& system, const FlowMap& fm, const IterationConfig& cfg,
                       ConstVectorRef x0, ConstVectorRef y_seed);
/// Overload that builds the default flow map when needed.
IterationTrace project(const FastSlowSystem& system, const IterationConfig& cfg, ConstVectorRef x0,
                       ConstVectorRef y_seed);

/// ||(D_y L)^{-1}(x0, y#)||_2 * last residual.
double error_bound(const FastSlowSystem& system, const DerivativeMode& mode, int m,
                   const IterationTrace& trace, const std::optional<FlowMap>& fm = std::nullopt);

/// Runs m = 0..m_max, seeding each stage with the previous output and using
/// TOL_m = tol0 * eps^m (tol0 = eps by default). Stops after a stage that
/// diverges or fails to converge; that stage's trace is the last element.
std::vector<IterationTrace> project_cascade(const FastSlowSystem& system, const std::optional<FlowMap>& fm,
                                            const IterationConfig& base_cfg, ConstVectorRef x0,
                                            ConstVectorRef y_seed, int m_max,
                                            std::optional<double> tol0 = std::nullopt);

namespace detail {

/// Shared loop: y <- step(y) with the residual/termination rules of `project`.
template <class Step>
IterationTrace iterate(Step&& step, const Vector& seed, double tol, int max_iters, double divergence_factor);

}  // namespace detail
}  // namespace slowman

#include "slowman/detail/iterate.ipp"
