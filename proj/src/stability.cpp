#include "slowman/stability.hpp"

#include "slowman/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace slowman {
namespace {

constexpr double kPi = std::numbers::pi;

void require_hurwitz_angle(double theta) {
    if (!(theta > 0.5 * kPi && theta < 1.5 * kPi)) {
        std::ostringstream os;
        os << "angle " << theta << " outside (pi/2, 3pi/2): eigenvalue is not Hurwitz";
        throw DomainError(os.str());
    }
}

void require_order(int m) {
    if (m < 0) throw ValidationError("m must be non-negative");
}

}  // namespace

EigenMode EigenMode::from_lambda(std::complex<double> lambda) {
    if (!(lambda.real() < 0.0)) {
        std::ostringstream os;
        os << "eigenvalue " << lambda.real() << (lambda.imag() < 0 ? " - " : " + ") << std::abs(lambda.imag())
           << "i is not Hurwitz";
        throw DomainError(os.str());
    }
    EigenMode e;
    e.lambda_re = lambda.real();
    e.lambda_im = lambda.imag();
    e.modulus = std::abs(lambda);
    double a = std::atan2(lambda.imag(), lambda.real());
    if (a < 0) a += 2.0 * kPi;
    e.angle = a;
    return e;
}

EigenMode EigenMode::from_polar(double modulus, double angle) {
    if (!(modulus > 0.0)) throw DomainError("eigenvalue modulus must be positive");
    require_hurwitz_angle(angle);
    EigenMode e;
    e.modulus = modulus;
    e.angle = angle;
    e.lambda_re = modulus * std::cos(angle);
    e.lambda_im = modulus * std::sin(angle);
    return e;
}

std::complex<double> mu_scaled(int m, double s, double theta) {
    require_order(m);
    const int n = m + 1;
    return 1.0 - std::pow(s, n) * std::polar(1.0, n * (theta - kPi));
}

std::complex<double> mu(int m, double H, double epsilon, const EigenMode& mode) {
    if (!(H > 0.0)) throw ValidationError("H must be positive");
    return mu_scaled(m, mode.modulus * H / epsilon, mode.angle);
}

bool in_sector(int m, double theta) {
    require_order(m);
    require_hurwitz_angle(theta);
    const int n = m + 1;
    const double d = theta - kPi;
    const double half_width = kPi / (2.0 * n);
    for (int k = 0; k < n; ++k) {
        const double off = std::remainder(d - 2.0 * kPi * k / n, 2.0 * kPi);
        if (std::abs(off) < half_width) return true;
    }
    return false;
}

std::optional<double> h_max(int m, double epsilon, const EigenMode& mode) {
    if (!in_sector(m, mode.angle)) return std::nullopt;
    const int n = m + 1;
    const double c = std::cos(n * (mode.angle - kPi));
    return (epsilon / mode.modulus) * std::pow(2.0 * c, 1.0 / n);
}

std::complex<double> mu_hat(int m, double h_hat_ell, double theta, double eta) {
    require_order(m);
    if (!(h_hat_ell > 0.0)) throw ValidationError("scaled differencing step must be positive");
    if (!(eta > 0.0)) throw ValidationError("eta must be positive");
    if (std::abs(theta - 0.5 * kPi) < 1e-9 || std::abs(theta - 1.5 * kPi) < 1e-9)
        throw DomainError("theta too close to pi/2 or 3pi/2: tan(theta) is singular");
    require_hurwitz_angle(theta);
    const int n = m + 1;
    const std::complex<double> w = 1.0 - std::exp(-h_hat_ell * std::complex<double>(1.0, std::tan(theta)));
    return 1.0 - std::pow(eta, n) * std::pow(w, n);
}

double uniform_bound(int m, double eta) {
    require_order(m);
    if (!(eta > 0.0)) throw ValidationError("eta must be positive");
    const double r = std::pow(2.0, 1.0 / (m + 1));
    if (eta <= 1.0) return -std::log(r - 1.0);
    const double d = std::abs(r / eta - 1.0);
    if (d == 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(d);
}

double boundary_residual(int m, double h_hat_ell, double theta, double eta) {
    require_order(m);
    const int n = m + 1;
    const double t = std::tan(theta);
    const double en = std::pow(eta, n);
    const double s = h_hat_ell;
    // a_k = C(n,k) (-1)^k e^{-k s}, k = 1..n
    std::vector<double> a(n + 1);
    for (int k = 1; k <= n; ++k) a[k] = static_cast<double>(binomial(n, k)) * ((k % 2) ? -1.0 : 1.0) * std::exp(-k * s);

    double cross = 0.0, lin = 0.0, sq = 0.0;
    for (int j = 1; j <= n; ++j) {
        for (int k = 1; k < j; ++k) cross += a[j] * a[k] * std::cos((j - k) * s * t);
        lin += a[j] * std::cos(j * s * t);
        sq += a[j] * a[j];
    }
    const double total =
        2.0 * en * en * cross + 2.0 * en * (en - 1.0) * lin + en * en * sq + (en - 1.0) * (en - 1.0);
    return total - 1.0;
}

double boundary_residual_unit_eta(int m, double h_hat_ell, double theta) {
    require_order(m);
    const int n = m + 1;
    const double t = std::tan(theta);
    double cross = 0.0, sq = 0.0;
    for (int j = 1; j <= n; ++j) {
        const double cj = static_cast<double>(binomial(n, j));
        sq += cj * cj * std::exp(-2.0 * j * h_hat_ell);
        for (int k = 1; k < j; ++k) {
            const double sign = ((j + k) % 2) ? -1.0 : 1.0;
            cross += cj * static_cast<double>(binomial(n, k)) * sign * std::exp(-(j + k) * h_hat_ell) *
                     std::cos((j - k) * h_hat_ell * t);
        }
    }
    return 2.0 * cross + sq - 1.0;
}

void RasterSpec::validate() const {
    require_order(m);
    if (resolution < 1 || resolution > 4096) throw ValidationError("resolution must lie in [1, 4096]");
    if (!(theta_min >= 0.5 * kPi && theta_max <= 1.5 * kPi && theta_min < theta_max))
        throw ValidationError("theta range must be a nonempty subrange of [pi/2, 3pi/2]");
    if (!(step_min >= 0.0 && step_min < step_max && std::isfinite(step_max)))
        throw ValidationError("step range must satisfy 0 <= step_min < step_max");
    if (!(eta > 0.0 && std::isfinite(eta))) throw ValidationError("eta must be positive");
}

std::vector<RasterCell> raster_region(const RasterSpec& spec) {
    spec.validate();
    const int res = spec.resolution;
    const double dth = (spec.theta_max - spec.theta_min) / res;
    const double ds = (spec.step_max - spec.step_min) / res;
    std::vector<RasterCell> cells;
    cells.reserve(static_cast<std::size_t>(res) * res);
    for (int i = 0; i < res; ++i) {
        const double theta = spec.theta_min + (i + 0.5) * dth;
        for (int j = 0; j < res; ++j) {
            const double step = spec.step_min + (j + 0.5) * ds;
            double am;
            if (spec.mode == DerivativeVariant::AnalyticRecursive) {
                am = std::abs(mu_scaled(spec.m, step, theta));
            } else if (std::abs(theta - 0.5 * kPi) < 1e-9 || std::abs(theta - 1.5 * kPi) < 1e-9) {
                am = std::numeric_limits<double>::infinity();
            } else {
                am = std::abs(mu_hat(spec.m, step, theta, spec.eta));
            }
            cells.push_back({theta, step, am, am < 1.0});
        }
    }
    return cells;
}

std::vector<EigenMode> spectrum_at(const FastSlowSystem& system, ConstVectorRef x0, const std::optional<Vector>& seed) {
    const Vector y0 = critical_point(system, x0, seed);
    std::vector<EigenMode> modes;
    for (const auto& l : fast_spectrum(system, x0, y0, 0.0)) modes.push_back(EigenMode::from_lambda(l));
    return modes;
}

const char* to_string(Regime r) {
    switch (r) {
        case Regime::AnalyticSector: return "analytic-sector";
        case Regime::Unconditional: return "unconditional";
        case Regime::UniformBoundSufficient: return "uniform-bound-sufficient";
        case Regime::UnstableAbove: return "unstable-above";
    }
    return "unknown";
}

StabilityReport verdict(const FastSlowSystem& system, const IterationConfig& cfg,
                        const std::vector<EigenMode>& spectrum) {
    if (spectrum.empty()) throw ValidationError("spectrum must be nonempty");
    cfg.validate(system);
    const double eps = system.epsilon();
    const int m = cfg.m;
    const auto& mode = cfg.mode;

    StabilityReport rep;
    rep.m = m;
    rep.mode = mode.variant();
    rep.eta = mode.eta();
    rep.stable = true;
    bool all_real = true;
    bool all_in_sector = true;
    double min_hmax = std::numeric_limits<double>::infinity();

    for (const auto& em : spectrum) {
        if (!(em.lambda_re < 0.0)) throw DomainError("spectrum contains a non-Hurwitz eigenvalue");
        ModeRecord rec;
        rec.mode = em;
        rec.in_sector = in_sector(m, em.angle);
        rec.h_max = h_max(m, eps, em);
        rec.scaled_step = -em.lambda_re * mode.H() / eps;
        rec.scaled_step_hat = -em.lambda_re * mode.H_hat() / eps;
        if (mode.is_analytic())
            rec.multiplier = mu(m, mode.H(), eps, em);
        else
            rec.multiplier = mu_hat(m, rec.scaled_step_hat, em.angle, mode.eta());
        if (!(std::abs(rec.multiplier) < 1.0)) rep.stable = false;
        if (std::abs(em.lambda_im) > 1e-12 * em.modulus) all_real = false;
        if (rec.h_max)
            min_hmax = std::min(min_hmax, *rec.h_max);
        else
            all_in_sector = false;
        rep.modes.push_back(rec);
    }

    rep.uniform_bound = uniform_bound(m, rep.eta);
    if (mode.is_analytic()) {
        rep.regime = Regime::AnalyticSector;
        if (all_in_sector) rep.critical_step = min_hmax;
        return rep;
    }
    const double threshold = std::pow(2.0, 1.0 / (m + 1));
    if (rep.eta >= threshold) {
        rep.regime = Regime::UnstableAbove;
        rep.critical_step = rep.uniform_bound;
    } else if (rep.uniform_bound == 0.0 || all_real) {
        rep.regime = Regime::Unconditional;
    } else {
        rep.regime = Regime::UniformBoundSufficient;
        rep.critical_step = rep.uniform_bound;
    }
    return rep;
}

}  // namespace slowman
