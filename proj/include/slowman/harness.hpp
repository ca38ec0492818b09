#pragma once

// Experiment engine: order-of-accuracy fits over eps, bisection of the
// empirical stability threshold, and raster comparison between observed
// convergence and the predicted multipliers.

#include "slowman/stability.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace slowman {

/// Builds a registered system: "linear" (a, c), "mm" (kappa, lambda),
/// "pair" (theta, lambda_re, a, extra_real). Missing keys take defaults;
/// unknown keys are a ValidationError.
FastSlowSystem make_system(const std::string& id, const std::map<std::string, double>& params, double epsilon);

/// Parameter keys accepted by `make_system` for an id.
std::vector<std::string> system_parameter_keys(const std::string& id);

/// Default parameter values of a registered system (optional keys omitted).
std::map<std::string, double> system_defaults(const std::string& id);

/// Worker count for sweeps: SLOWMAN_THREADS when set (>= 1), hardware
/// concurrency otherwise.
int sweep_threads();

struct SweepSpec {
    std::string system_id = "linear";
    std::map<std::string, double> params;
    std::vector<double> epsilons{1e-2, 5e-3, 2e-3, 1e-3}; ///< strictly decreasing
    std::vector<int> m_values{0};
    Vector x0 = Vector::Ones(1);
    std::optional<Vector> seed;                            ///< critical manifold when absent
    DerivativeVariant mode = DerivativeVariant::AnalyticRecursive;
    double H_over_eps = 1.0;
    double Hhat_over_eps = 1.0;
    double eta = 1.0;
    int max_iters = 10000;

    void validate() const;
    DerivativeMode derivative_mode(double epsilon) const;
};

struct OrderFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<double> epsilons;          ///< points used in the fit
    std::vector<double> errors;            ///< ||y#_m - h(x0)|| per used point
    std::vector<double> excluded;          ///< eps values whose run did not converge
    bool skipped = false;                  ///< errors at the rounding floor, no fit made
};

/// Runs project at tol = eps^{m+2} for each eps and fits log(error) against log(eps).
OrderFit order_of_accuracy(const SweepSpec& spec, int m);

struct ThresholdResult {
    double threshold = 0.0;
    double lower = 0.0; ///< last step classified stable
    double upper = 0.0; ///< last step classified unstable
    int evaluations = 0;
};

/// Stable/unstable classification of a single run: converged, or ran out of
/// iterations without diverging and with the last residual below the first.
bool classify_stable(const FastSlowSystem& system, const FlowMap* fm, const IterationConfig& cfg,
                     ConstVectorRef x0, ConstVectorRef y_seed);

/// Bisects the varied step (H in analytic mode, Hhat in differenced mode with
/// eta kept) between step_lo (stable) and step_hi (unstable) to relative width 1e-3.
ThresholdResult empirical_threshold(const FastSlowSystem& system, const IterationConfig& tmpl, ConstVectorRef x0,
                                    ConstVectorRef y_seed, double step_lo, double step_hi);

struct RegionSpec {
    double epsilon = 1e-3;
    double lambda_re = -1.0;
    double theta_min = 0.6 * 3.14159265358979323846;
    double theta_max = 1.4 * 3.14159265358979323846;
    double step_min = 0.05; ///< Hl range, cell centers inside (step_min, step_max]
    double step_max = 3.0;
    int iterations = 30;
    double band = 0.02;     ///< cells with ||mu^| - 1| below this are not compared

    void validate() const;
};

struct RegionCell {
    double theta;
    double step;
    double abs_mu;
    bool predicted_stable;
    bool observed_stable;
    bool excluded;
};

struct RegionComparison {
    double mismatch = 0.0; ///< mismatched / compared
    int compared = 0;
    int mismatched = 0;
    int excluded = 0;
    std::vector<RegionCell> cells;
};

/// Differenced mode only: a short iteration per cell on a complex-pair system
/// with the cell's angle, compared against |mu^| < 1.
RegionComparison compare_regions(const RegionSpec& spec, int m, double eta, int resolution);

}  // namespace slowman
