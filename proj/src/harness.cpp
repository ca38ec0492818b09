#include "slowman/harness.hpp"

#include "slowman/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace slowman {
namespace {

struct SystemEntry {
    const char* id;
    std::vector<std::pair<std::string, double>> defaults;
    std::vector<std::string> optional_keys;
};

const std::vector<SystemEntry>& registry() {
    static const std::vector<SystemEntry> entries = {
        {"linear", {{"a", 1.0}, {"c", 1.0}}, {}},
        {"mm", {{"kappa", 1.0}, {"lambda", 0.5}}, {}},
        {"pair", {{"theta", 0.7 * std::numbers::pi}, {"lambda_re", -1.0}, {"a", 0.0}}, {"extra_real"}},
    };
    return entries;
}

const SystemEntry& lookup(const std::string& id) {
    for (const auto& e : registry())
        if (id == e.id) return e;
    throw ValidationError("unknown system id '" + id + "' (expected linear, mm or pair)");
}

// Runs body(i) for i in [0, count) on up to sweep_threads() workers. The first
// exception is rethrown after all workers finish.
template <class Body>
void parallel_for(int count, Body&& body) {
    const int workers = std::max(1, std::min(sweep_threads(), count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

const ReferenceManifold& exact_reference(const FastSlowSystem& sys) {
    if (const auto* r = sys.reference(ManifoldKind::ExactClosedForm)) return *r;
    if (const auto* r = sys.reference(ManifoldKind::MatrixPowerOracle); r && r->graph) return *r;
    throw ValidationError("system '" + sys.name() + "' has no exact reference manifold");
}

DerivativeMode with_step(const DerivativeMode& tmpl, double step) {
    if (tmpl.is_analytic()) return DerivativeMode::analytic(step);
    return DerivativeMode::forward_difference(step, tmpl.eta());
}

}  // namespace

FastSlowSystem make_system(const std::string& id, const std::map<std::string, double>& params, double epsilon) {
    const SystemEntry& entry = lookup(id);
    std::map<std::string, double> p;
    for (const auto& [k, v] : entry.defaults) p[k] = v;
    for (const auto& [k, v] : params) {
        const bool known = p.count(k) ||
                           std::find(entry.optional_keys.begin(), entry.optional_keys.end(), k) != entry.optional_keys.end();
        if (!known) throw ValidationError("parameter '" + k + "' is not valid for system '" + id + "'");
        if (!std::isfinite(v)) throw ValidationError("parameter '" + k + "' must be finite");
        p[k] = v;
    }
    if (id == "linear") return linear_test(p["a"], p["c"], epsilon);
    if (id == "mm") {
        if (!(p["kappa"] > 0.0 && p["lambda"] > 0.0)) throw ValidationError("kappa and lambda must be positive");
        return michaelis_menten(p["kappa"], p["lambda"], epsilon);
    }
    std::vector<double> extra;
    if (auto it = p.find("extra_real"); it != p.end()) extra.push_back(it->second);
    return complex_pair_test(p["theta"], p["lambda_re"], epsilon, extra, p["a"]);
}

std::vector<std::string> system_parameter_keys(const std::string& id) {
    const SystemEntry& entry = lookup(id);
    std::vector<std::string> keys;
    for (const auto& [k, v] : entry.defaults) keys.push_back(k);
    keys.insert(keys.end(), entry.optional_keys.begin(), entry.optional_keys.end());
    return keys;
}

std::map<std::string, double> system_defaults(const std::string& id) {
    const SystemEntry& entry = lookup(id);
    return {entry.defaults.begin(), entry.defaults.end()};
}

int sweep_threads() {
    if (const char* env = std::getenv("SLOWMAN_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min<long>(v, 1024));
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// ---------------------------------------------------------------------------

void SweepSpec::validate() const {
    if (epsilons.size() < 3) throw ValidationError("a sweep needs at least 3 epsilon values");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (!(epsilons[i] > 0.0 && epsilons[i] <= 0.5)) throw ValidationError("epsilon values must lie in (0, 0.5]");
        if (i > 0 && !(epsilons[i] < epsilons[i - 1])) throw ValidationError("epsilon values must strictly decrease");
    }
    if (m_values.empty()) throw ValidationError("m_values must be nonempty");
    for (int m : m_values)
        if (m < 0) throw ValidationError("m must be non-negative");
    if (!(H_over_eps > 0.0 && Hhat_over_eps > 0.0 && eta > 0.0)) throw ValidationError("step ratios must be positive");
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
    lookup(system_id);
}

DerivativeMode SweepSpec::derivative_mode(double epsilon) const {
    if (mode == DerivativeVariant::AnalyticRecursive) return DerivativeMode::analytic(H_over_eps * epsilon);
    return DerivativeMode::forward_difference(Hhat_over_eps * epsilon, eta);
}

OrderFit order_of_accuracy(const SweepSpec& spec, int m) {
    spec.validate();
    if (m < 0) throw ValidationError("m must be non-negative");
    const int count = static_cast<int>(spec.epsilons.size());
    std::vector<double> errors(count, 0.0), scales(count, 1.0);
    std::vector<char> ok(count, 0);

    parallel_for(count, [&](int i) {
        const double eps = spec.epsilons[i];
        const FastSlowSystem sys = make_system(spec.system_id, spec.params, eps);
        const ReferenceManifold& ref = exact_reference(sys);
        IterationConfig cfg;
        cfg.m = m;
        cfg.mode = spec.derivative_mode(eps);
        cfg.tol = std::pow(eps, m + 2);
        cfg.max_iters = spec.max_iters;
        Vector seed;
        if (spec.seed) {
            seed = *spec.seed;
        } else {
            seed = critical_point(sys, spec.x0);
        }
        try {
            const IterationTrace tr = project(sys, cfg, spec.x0, seed);
            if (!tr.converged) return;
            const Vector h = ref.graph(spec.x0);
            errors[i] = (tr.output - h).norm();
            scales[i] = std::max(1.0, h.norm());
            ok[i] = 1;
        } catch (const DivergenceError&) {
        }
    });

    OrderFit fit;
    bool at_floor = true;
    for (int i = 0; i < count; ++i) {
        if (!ok[i]) {
            fit.excluded.push_back(spec.epsilons[i]);
            continue;
        }
        fit.epsilons.push_back(spec.epsilons[i]);
        fit.errors.push_back(errors[i]);
        if (errors[i] > 64.0 * std::numeric_limits<double>::epsilon() * scales[i]) at_floor = false;
    }
    if (fit.epsilons.size() < 3) {
        std::ostringstream os;
        os << "only " << fit.epsilons.size() << " converged points; a slope fit needs 3";
        throw FitError(os.str());
    }
    if (at_floor) {
        fit.skipped = true;
        fit.slope = fit.intercept = fit.r_squared = std::numeric_limits<double>::quiet_NaN();
        return fit;
    }

    const std::size_t n = fit.epsilons.size();
    double sx = 0, sy = 0;
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(fit.errors[i] > 0.0)) throw FitError("zero error at an isolated point; cannot fit in log-log");
        lx[i] = std::log(fit.epsilons[i]);
        ly[i] = std::log(fit.errors[i]);
        sx += lx[i];
        sy += ly[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
        ssr += r * r;
    }
    fit.r_squared = syy > 0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------

bool classify_stable(const FastSlowSystem& system, const FlowMap* fm, const IterationConfig& cfg, ConstVectorRef x0,
                     ConstVectorRef y_seed) {
    try {
        const IterationTrace tr = fm ? project(system, *fm, cfg, x0, y_seed) : project(system, cfg, x0, y_seed);
        if (tr.converged) return true;
        if (tr.outcome == Outcome::Diverged) return false;
        return tr.residuals.back() < tr.residuals.front();
    } catch (const DivergenceError&) {
        return false;
    }
}

ThresholdResult empirical_threshold(const FastSlowSystem& system, const IterationConfig& tmpl, ConstVectorRef x0,
                                    ConstVectorRef y_seed, double step_lo, double step_hi) {
    if (!(step_lo > 0.0 && step_lo < step_hi)) throw ValidationError("step range must satisfy 0 < lo < hi");
    ThresholdResult res;
    auto stable_at = [&](double step) {
        IterationConfig cfg = tmpl;
        cfg.mode = with_step(tmpl.mode, step);
        ++res.evaluations;
        return classify_stable(system, nullptr, cfg, x0, y_seed);
    };
    const bool lo_stable = stable_at(step_lo);
    const bool hi_stable = stable_at(step_hi);
    if (!lo_stable || hi_stable) {
        std::ostringstream os;
        os << "no stability transition in [" << step_lo << ", " << step_hi << "]: lower end "
           << (lo_stable ? "stable" : "unstable") << ", upper end " << (hi_stable ? "stable" : "unstable");
        throw BracketError(os.str());
    }
    double lo = step_lo, hi = step_hi;
    while (hi - lo > 1e-3 * 0.5 * (hi + lo)) {
        const double mid = 0.5 * (lo + hi);
        if (stable_at(mid))
            lo = mid;
        else
            hi = mid;
    }
    res.lower = lo;
    res.upper = hi;
    res.threshold = 0.5 * (lo + hi);
    return res;
}

// ---------------------------------------------------------------------------

void RegionSpec::validate() const {
    constexpr double pi = std::numbers::pi;
    if (!(epsilon > 0.0 && epsilon <= 0.5)) throw ValidationError("epsilon must lie in (0, 0.5]");
    if (!(lambda_re < 0.0)) throw ValidationError("lambda_re must be negative");
    if (!(theta_min > 0.5 * pi && theta_max < 1.5 * pi && theta_min < theta_max))
        throw ValidationError("theta range must be a nonempty subrange of (pi/2, 3pi/2)");
    if (!(step_min >= 0.0 && step_min < step_max)) throw ValidationError("step range must satisfy 0 <= min < max");
    if (iterations < 2) throw ValidationError("iterations must be >= 2");
    if (!(band >= 0.0)) throw ValidationError("band must be non-negative");
}

RegionComparison compare_regions(const RegionSpec& spec, int m, double eta, int resolution) {
    spec.validate();
    if (m < 0) throw ValidationError("m must be non-negative");
    if (!(eta > 0.0)) throw ValidationError("eta must be positive");
    if (resolution < 1 || resolution > 4096) throw ValidationError("resolution must lie in [1, 4096]");

    const double eps = spec.epsilon;
    const double dth = (spec.theta_max - spec.theta_min) / resolution;
    const double ds = (spec.step_max - spec.step_min) / resolution;
    RegionComparison out;
    out.cells.resize(static_cast<std::size_t>(resolution) * resolution);

    parallel_for(resolution, [&](int i) {
        const double theta = spec.theta_min + (i + 0.5) * dth;
        const FastSlowSystem sys = complex_pair_test(theta, spec.lambda_re, eps);
        const double modulus = std::abs(spec.lambda_re / std::cos(theta));
        const Vector x0 = Vector::Ones(1);
        Vector seed = critical_point(sys, x0);
        seed(0) += 0.1;
        seed(1) -= 0.05;
        for (int j = 0; j < resolution; ++j) {
            const double step = spec.step_min + (j + 0.5) * ds;
            const double h_hat = step * eps / -spec.lambda_re;
            // Integrator step resolves |lambda| h / eps = 0.1 and divides Hhat exactly.
            const int sub = static_cast<int>(std::ceil(h_hat / (0.1 * eps / modulus)));
            const FlowMap fm(sys, h_hat / sub);
            IterationConfig cfg;
            cfg.m = m;
            cfg.mode = DerivativeMode::forward_difference(h_hat, eta);
            cfg.tol = 1e-14;
            cfg.max_iters = spec.iterations;
            RegionCell cell;
            cell.theta = theta;
            cell.step = step;
            cell.abs_mu = std::abs(mu_hat(m, step, theta, eta));
            cell.predicted_stable = cell.abs_mu < 1.0;
            cell.excluded = std::abs(cell.abs_mu - 1.0) < spec.band;
            cell.observed_stable = classify_stable(sys, &fm, cfg, x0, seed);
            out.cells[static_cast<std::size_t>(i) * resolution + j] = cell;
        }
    });

    for (const auto& c : out.cells) {
        if (c.excluded) {
            ++out.excluded;
            continue;
        }
        ++out.compared;
        if (c.predicted_stable != c.observed_stable) ++out.mismatched;
    }
    out.mismatch = out.compared ? static_cast<double>(out.mismatched) / out.compared : 0.0;
    return out;
}

}  // namespace slowman
