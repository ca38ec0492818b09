#pragma once

// Closed-form stability of the functional iterations.
//
// Eigenvalues lambda of (D_y g)_0 are written lambda = |lambda| e^{i theta},
// theta in (pi/2, 3pi/2). With n = m + 1 the iteration multipliers are
//
//   analytic:      mu    = 1 - (|lambda| H / eps)^n e^{i n (theta - pi)}
//   differenced:   mu^   = 1 - eta^n (1 - e^{-Hl (1 + i tan theta)})^n,
//                  Hl    = -Re(lambda) Hhat / eps.

#include "slowman/projector.hpp"

#include <complex>
#include <optional>
#include <vector>

namespace slowman {

/// One eigenvalue of (D_y g)_0 in modulus/angle form.
struct EigenMode {
    double lambda_re = -1.0;
    double lambda_im = 0.0;
    double modulus = 1.0;
    double angle = 3.14159265358979323846; ///< radians, in (pi/2, 3pi/2)

    /// Throws DomainError unless Re(lambda) < 0.
    static EigenMode from_lambda(std::complex<double> lambda);
    /// Throws DomainError unless angle lies in (pi/2, 3pi/2).
    static EigenMode from_polar(double modulus, double angle);

    std::complex<double> lambda() const { return {lambda_re, lambda_im}; }
};

/// Analytic multiplier as a function of the scaled step s = |lambda| H / eps.
std::complex<double> mu_scaled(int m, double s, double theta);
std::complex<double> mu(int m, double H, double epsilon, const EigenMode& mode);

/// theta in S_m, i.e. cos((m+1)(theta - pi)) > 0. Open intervals: boundary angles are outside.
bool in_sector(int m, double theta);

/// (eps / |lambda|) [2 cos((m+1)(theta - pi))]^{1/(m+1)} inside S_m, nothing outside.
std::optional<double> h_max(int m, double epsilon, const EigenMode& mode);

/// Differenced multiplier; throws DomainError for theta within 1e-9 of pi/2 or 3pi/2.
std::complex<double> mu_hat(int m, double h_hat_ell, double theta, double eta);

/// Hs(1) = -ln(2^{1/(m+1)} - 1) for eta <= 1, -ln|2^{1/(m+1)}/eta - 1| for eta > 1
/// (+infinity at eta = 2^{1/(m+1)}).
double uniform_bound(int m, double eta);

/// |mu^|^2 - 1 through the expanded trigonometric double sum (general eta).
double boundary_residual(int m, double h_hat_ell, double theta, double eta);
/// The eta = 1 form, where every term carrying eta^{m+1} - 1 is absent.
double boundary_residual_unit_eta(int m, double h_hat_ell, double theta);

struct RasterCell {
    double theta;
    double step;
    double abs_mu;
    bool stable;
};

struct RasterSpec {
    int m = 1;
    DerivativeVariant mode = DerivativeVariant::ForwardDifference;
    double eta = 1.0;
    double theta_min = 0.5 * 3.14159265358979323846;
    double theta_max = 1.5 * 3.14159265358979323846;
    double step_min = 0.0;
    double step_max = 3.0;
    int resolution = 64; ///< cells per axis, at most 4096

    void validate() const;
};

/// |mu| (analytic, step = |lambda| H / eps) or |mu^| (differenced, step = Hl)
/// at cell centers. Rows are ordered theta-major.
std::vector<RasterCell> raster_region(const RasterSpec& spec);

/// Spectrum of (D_y g) at (x0, h_[0](x0), 0).
std::vector<EigenMode> spectrum_at(const FastSlowSystem& system, ConstVectorRef x0,
                                   const std::optional<Vector>& seed = std::nullopt);

enum class Regime {
    AnalyticSector,          ///< stable iff every angle is in S_m and H < min h_max
    Unconditional,           ///< differenced, stable for every Hhat
    UniformBoundSufficient,  ///< differenced, stable whenever every Hl exceeds the bound
    UnstableAbove,           ///< differenced, eta > 2^{1/(m+1)}: unstable once Hl exceeds the bound
};

const char* to_string(Regime r);

struct ModeRecord {
    EigenMode mode;
    std::complex<double> multiplier;
    bool in_sector = false;
    std::optional<double> h_max;
    double scaled_step = 0.0;     ///< H_l = -Re(lambda) H / eps
    double scaled_step_hat = 0.0; ///< Hl = -Re(lambda) Hhat / eps
};

struct StabilityReport {
    int m = 0;
    DerivativeVariant mode = DerivativeVariant::AnalyticRecursive;
    double eta = 1.0;
    std::vector<ModeRecord> modes;
    bool stable = false;
    double uniform_bound = 0.0;
    Regime regime = Regime::AnalyticSector;
    /// Analytic: largest stable H (min h_max), none when some angle is outside S_m.
    /// Differenced: the uniform bound on Hl when it is finite and relevant.
    std::optional<double> critical_step;
};

StabilityReport verdict(const FastSlowSystem& system, const IterationConfig& cfg,
                        const std::vector<EigenMode>& spectrum);

}  // namespace slowman
