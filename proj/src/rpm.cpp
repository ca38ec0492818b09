#include "slowman/rpm.hpp"

#include "slowman/errors.hpp"
#include "slowman/log.hpp"

#include <lapacke.h>

#include <cmath>
#include <limits>
#include <sstream>

namespace slowman {
namespace {

// dgees takes a plain function pointer; the radius travels through a thread-local.
thread_local double t_select_radius = 0.0;

lapack_logical outside_radius(const double* re, const double* im) {
    return std::hypot(*re, *im) > t_select_radius ? 1 : 0;
}

}  // namespace

void RpmConfig::validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("RPM delta must lie in (0, 1)");
    if (!(jacobian_step > 0.0)) throw ValidationError("RPM jacobian_step must be positive");
    if (refresh_every < 1) throw ValidationError("RPM refresh_every must be >= 1");
    if (max_dim && *max_dim < 0) throw ValidationError("RPM max_dim must be non-negative");
}

Vector RpmState::project_p(const Vector& v) const {
    if (M == 0) return Vector::Zero(v.size());
    return basis * (basis.transpose() * v);
}

Vector RpmState::project_q(const Vector& v) const { return v - project_p(v); }

RpmState identify_subspace(const Matrix& DF, const RpmConfig& cfg) {
    cfg.validate();
    if (DF.rows() != DF.cols()) throw ValidationError("DF must be square");
    if (!DF.allFinite()) throw NumericalError("DF contains non-finite entries");
    const lapack_int n = static_cast<lapack_int>(DF.rows());

    Matrix T = DF;
    Matrix Z(n, n);
    Vector wr(n), wi(n);
    lapack_int sdim = 0;
    t_select_radius = 1.0 - cfg.delta;
    const lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'S', outside_radius, n, T.data(), n, &sdim,
                                          wr.data(), wi.data(), Z.data(), n);
    // info == n + 2: rounding changed a selection flag after reordering; sdim is still usable.
    if (info < 0 || (info > 0 && info != n + 2)) {
        std::ostringstream os;
        os << "real Schur decomposition failed (dgees info = " << info << ")";
        throw NumericalError(os.str());
    }

    int M = static_cast<int>(sdim);
    if (cfg.max_dim && M > *cfg.max_dim) {
        M = *cfg.max_dim;
        // Never split a 2x2 Schur block (conjugate pair).
        if (M > 0 && M < n && T(M, M - 1) != 0.0) --M;
    }

    RpmState state;
    state.M = M;
    state.basis = Z.leftCols(M);
    for (lapack_int i = 0; i < n; ++i) state.eigenvalues.emplace_back(wr(i), wi(i));
    if (M == n && n > 0) warn("RPM subspace covers all fast directions: iteration is pure Newton");
    return state;
}

IterationTrace rpm_iterate(const FastSlowSystem& system, const FlowMap& fm, const IterationConfig& cfg,
                           const RpmConfig& rpm_cfg, ConstVectorRef x0, ConstVectorRef y_seed) {
    cfg.validate(system);
    rpm_cfg.validate();
    if (x0.size() != system.n_slow()) throw ValidationError("x0 dimension mismatch");
    if (y_seed.size() != system.n_fast()) throw ValidationError("seed dimension mismatch");
    Vector seed = y_seed;
    if (cfg.seed_policy == SeedPolicy::CriticalManifold) seed = critical_point(system, x0, seed);
    if (cfg.seed_policy == SeedPolicy::PreviousOutput && cfg.m == 0)
        throw ValidationError("seed policy previous-m-output needs an m-1 result (m = 0 given)");

    std::optional<FlowMap> flow;
    if (!cfg.mode.is_analytic()) flow = fm;
    const ZeroDerivativeMap map(system, cfg.mode, cfg.m, x0, flow);
    const bool newton_enabled = !(rpm_cfg.max_dim && *rpm_cfg.max_dim == 0);

    const double singular_floor =
        100.0 * (std::numeric_limits<double>::epsilon() / rpm_cfg.jacobian_step + rpm_cfg.jacobian_step);

    RpmState state;
    auto step = [&](const Vector& y, int r, IterationTrace& trace) -> Vector {
        Vector Fy = map.apply(y);
        if (!newton_enabled) {
            trace.subspace_dims.push_back(0);
            return Fy;
        }
        Matrix reduced;
        if (r % rpm_cfg.refresh_every == 0) {
            const Matrix DF = map.map_jacobian(y, Fy, rpm_cfg.jacobian_step);
            if (!DF.allFinite()) return Vector::Constant(y.size(), std::numeric_limits<double>::quiet_NaN());
            state = identify_subspace(DF, rpm_cfg);
            reduced = state.basis.transpose() * DF * state.basis;
        } else if (state.M > 0) {
            // Directional derivatives along the basis: M extra map evaluations.
            const double h = rpm_cfg.jacobian_step * std::max(1.0, y.norm());
            Matrix DFZ(y.size(), state.M);
            for (int j = 0; j < state.M; ++j) DFZ.col(j) = (map.apply(y + h * state.basis.col(j)) - Fy) / h;
            reduced = state.basis.transpose() * DFZ;
        }
        trace.subspace_dims.push_back(state.M);
        if (state.M == 0) return Fy;

        const Matrix& Zb = state.basis;
        const Vector xi = Zb.transpose() * y;
        const Vector pf = Zb.transpose() * Fy;
        const Matrix K = Matrix::Identity(state.M, state.M) - reduced;
        // K is known only to the forward-difference accuracy of DF, so test against that, not sigma_max.
        Eigen::JacobiSVD<Matrix> svd(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (!(sv(sv.size() - 1) > singular_floor * std::max(1.0, sv(0))))
            throw NumericalError("I_M - P DF P is singular: 1 is in the spectrum of P DF P, RPM cannot converge");
        const Vector newton = svd.solve(Vector(pf - xi));
        return Zb * (xi + newton) + (Fy - Zb * pf);
    };

    IterationTrace trace;
    try {
        trace = detail::iterate(step, seed, cfg.resolved_tol(system), cfg.max_iters, cfg.divergence_factor);
    } catch (IterationDivergence& e) {
        IterationTrace t = e.trace();
        t.x0 = x0;
        throw IterationDivergence(e.what(), e.step(), std::move(t));
    }
    trace.x0 = x0;
    if (trace.converged) {
        try {
            trace.error_bound = error_bound(system, cfg.mode, cfg.m, trace, flow);
        } catch (const DegeneracyError&) {
            trace.error_bound.reset();
        }
    }
    return trace;
}

IterationTrace rpm_iterate(const FastSlowSystem& system, const IterationConfig& cfg, const RpmConfig& rpm_cfg,
                           ConstVectorRef x0, ConstVectorRef y_seed) {
    cfg.mode.validate_for(system);
    return rpm_iterate(system, flow_for(system, cfg.mode), cfg, rpm_cfg, x0, y_seed);
}

}  // namespace slowman
