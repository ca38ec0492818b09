#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's numerical routines.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <random>

namespace oracle {

/// exp(M) by scaling and squaring with a 30-term Taylor core.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& M) {
    const double nrm = M.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    if (nrm > 0.25) s = static_cast<int>(std::ceil(std::log2(nrm / 0.25)));
    const Eigen::MatrixXd X = M / std::ldexp(1.0, s);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(M.rows(), M.cols());
    Eigen::MatrixXd sum = term;
    for (int k = 1; k <= 30; ++k) {
        term = term * X / static_cast<double>(k);
        sum += term;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

/// Generator of x' = a x, eps y' = c x - y.
inline Eigen::Matrix2d linear_generator(double a, double c, double eps) {
    Eigen::Matrix2d A;
    A << a, 0.0, c / eps, -1.0 / eps;
    return A;
}

/// Closed form of A^n for the lower-triangular 2x2 generator.
inline Eigen::Matrix2d linear_power(double a, double c, double eps, int n) {
    const double b = c / eps, d = -1.0 / eps;
    Eigen::Matrix2d P;
    P << std::pow(a, n), 0.0, b * (std::pow(a, n) - std::pow(d, n)) / (a - d), std::pow(d, n);
    return P;
}

/// Root y of e2^T A^{m+1} (x0, y) = 0: y = c x0 (1 - r^n) / (1 - r), r = -eps a.
inline double linear_root(double a, double c, double eps, int m, double x0) {
    const int n = m + 1;
    const double r = -eps * a;
    if (r == 1.0) return c * x0 * n;
    return c * x0 * (1.0 - std::pow(r, n)) / (1.0 - r);
}

/// Exact slow manifold c x / (1 + eps a).
inline double linear_manifold(double a, double c, double eps, double x) { return c * x / (1.0 + eps * a); }

/// Michaelis-Menten expansion terms h0 = s/(s+k), h1 = k lam s / (s+k)^4.
inline double mm_h0(double s, double kappa) { return s / (s + kappa); }
inline double mm_h1(double s, double kappa, double lam) { return kappa * lam * s / std::pow(s + kappa, 4); }

/// |mu^|^2 by direct complex arithmetic.
inline double mu_hat_abs2(int m, double s, double theta, double eta) {
    const int n = m + 1;
    const std::complex<double> w = 1.0 - std::exp(-s * std::complex<double>(1.0, std::tan(theta)));
    std::complex<double> wn = 1.0;
    for (int k = 0; k < n; ++k) wn *= w;
    return std::norm(1.0 - std::pow(eta, n) * wn);
}

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

}  // namespace oracle
