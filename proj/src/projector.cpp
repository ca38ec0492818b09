#include "slowman/projector.hpp"

#include "slowman/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace slowman {
namespace {

constexpr double kMachEps = std::numeric_limits<double>::epsilon();

}  // namespace

const char* to_string(SeedPolicy p) {
    switch (p) {
        case SeedPolicy::UserValue: return "user-value";
        case SeedPolicy::CriticalManifold: return "critical-manifold";
        case SeedPolicy::PreviousOutput: return "previous-m-output";
    }
    return "unknown";
}

const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Converged: return "converged";
        case Outcome::MaxIterations: return "max-iterations";
        case Outcome::Diverged: return "diverged";
    }
    return "unknown";
}

double IterationConfig::resolved_tol(const FastSlowSystem& system) const {
    return tol ? *tol : std::pow(system.epsilon(), m + 1);
}

void IterationConfig::validate(const FastSlowSystem& system) const {
    if (m < 0) throw ValidationError("m must be non-negative");
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
    if (tol && !(std::isfinite(*tol) && *tol > 0.0)) throw ValidationError("tol must be positive");
    if (!(divergence_factor > 1.0)) throw ValidationError("divergence_factor must exceed 1");
    mode.validate_for(system);
}

// ---------------------------------------------------------------------------

ZeroDerivativeMap::ZeroDerivativeMap(const FastSlowSystem& system, const DerivativeMode& mode, int m, Vector x0,
                                     std::optional<FlowMap> flow)
    : system_(&system), mode_(mode), m_(m), x0_(std::move(x0)), flow_(std::move(flow)) {
    if (x0_.size() != system.n_slow()) throw ValidationError("x0 dimension mismatch");
    if (!mode_.is_analytic() && !flow_) flow_ = flow_for(system, mode_);
}

Vector ZeroDerivativeMap::residual(const Vector& y) const {
    const Vector z = system_->join(x0_, y);
    if (mode_.is_analytic()) return L_m(*system_, mode_, m_, z);
    return L_hat(*flow_, mode_, m_, z);
}

Vector ZeroDerivativeMap::apply(const Vector& y) const { return y - residual(y); }

Matrix ZeroDerivativeMap::residual_jacobian(const Vector& y) const {
    const int nf = static_cast<int>(y.size());
    const double h = std::cbrt(kMachEps) * std::max(1.0, y.norm());
    Matrix J(nf, nf);
    Vector yp = y, ym = y;
    for (int j = 0; j < nf; ++j) {
        yp(j) = y(j) + h;
        ym(j) = y(j) - h;
        J.col(j) = (residual(yp) - residual(ym)) / (2.0 * h);
        yp(j) = ym(j) = y(j);
    }
    return J;
}

Matrix ZeroDerivativeMap::map_jacobian(const Vector& y, const Vector& Fy, double rel_step) const {
    const int nf = static_cast<int>(y.size());
    const double h = rel_step * std::max(1.0, y.norm());
    Matrix J(nf, nf);
    Vector yp = y;
    for (int j = 0; j < nf; ++j) {
        yp(j) = y(j) + h;
        J.col(j) = (apply(yp) - Fy) / h;
        yp(j) = y(j);
    }
    return J;
}

FlowMap flow_for(const FastSlowSystem& system, const DerivativeMode& mode) {
    return default_flow_map(system, mode.H_hat());
}

// ---------------------------------------------------------------------------

namespace {

Vector resolve_seed(const FastSlowSystem& system, const IterationConfig& cfg, ConstVectorRef x0,
                    ConstVectorRef y_seed) {
    if (y_seed.size() != system.n_fast()) throw ValidationError("seed dimension mismatch");
    switch (cfg.seed_policy) {
        case SeedPolicy::UserValue: return y_seed;
        case SeedPolicy::CriticalManifold: return critical_point(system, x0, Vector(y_seed));
        case SeedPolicy::PreviousOutput:
            if (cfg.m == 0) throw ValidationError("seed policy previous-m-output needs an m-1 result (m = 0 given)");
            return y_seed;
    }
    return y_seed;
}

}  // namespace

IterationTrace project(const FastSlowSystem& system, const FlowMap& fm, const IterationConfig& cfg,
                       ConstVectorRef x0, ConstVectorRef y_seed) {
    cfg.validate(system);
    if (x0.size() != system.n_slow()) throw ValidationError("x0 dimension mismatch");
    const Vector seed = resolve_seed(system, cfg, x0, y_seed);
    std::optional<FlowMap> flow;
    if (!cfg.mode.is_analytic()) flow = fm;
    const ZeroDerivativeMap map(system, cfg.mode, cfg.m, x0, flow);
    const double tol = cfg.resolved_tol(system);

    IterationTrace trace;
    try {
        trace = detail::iterate([&](const Vector& y, int, IterationTrace&) { return map.apply(y); }, seed, tol,
                                cfg.max_iters, cfg.divergence_factor);
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

IterationTrace project(const FastSlowSystem& system, const IterationConfig& cfg, ConstVectorRef x0,
                       ConstVectorRef y_seed) {
    cfg.mode.validate_for(system);
    return project(system, flow_for(system, cfg.mode), cfg, x0, y_seed);
}

double error_bound(const FastSlowSystem& system, const DerivativeMode& mode, int m, const IterationTrace& trace,
                   const std::optional<FlowMap>& fm) {
    if (!trace.converged || trace.residuals.empty())
        throw ValidationError("error_bound needs a converged trace");
    const ZeroDerivativeMap map(system, mode, m, trace.x0, mode.is_analytic() ? std::nullopt : fm);
    const Matrix J = map.residual_jacobian(trace.output);
    Eigen::JacobiSVD<Matrix> svd(J);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    if (!(smin > 1e-13 * s(0)) || !std::isfinite(s(0)))
        throw DegeneracyError("D_y L is singular at the fixed point: normal hyperbolicity violated");
    return trace.residuals.back() / smin;
}

std::vector<IterationTrace> project_cascade(const FastSlowSystem& system, const std::optional<FlowMap>& fm,
                                            const IterationConfig& base_cfg, ConstVectorRef x0,
                                            ConstVectorRef y_seed, int m_max, std::optional<double> tol0) {
    if (m_max < 0) throw ValidationError("m_max must be non-negative");
    const double eps = system.epsilon();
    const double base_tol = tol0 ? *tol0 : (base_cfg.tol ? *base_cfg.tol : eps);
    if (!(base_tol > 0.0)) throw ValidationError("tol0 must be positive");
    const FlowMap flow = fm ? *fm : flow_for(system, base_cfg.mode);

    std::vector<IterationTrace> stages;
    Vector seed = y_seed;
    for (int m = 0; m <= m_max; ++m) {
        IterationConfig cfg = base_cfg;
        cfg.m = m;
        cfg.tol = base_tol * std::pow(eps, m);
        if (m > 0) cfg.seed_policy = SeedPolicy::PreviousOutput;
        try {
            stages.push_back(project(system, flow, cfg, x0, seed));
        } catch (const IterationDivergence& e) {
            stages.push_back(e.trace());
            break;
        }
        if (!stages.back().converged) break;
        seed = stages.back().output;
    }
    return stages;
}

}  // namespace slowman
