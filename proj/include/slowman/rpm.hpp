#pragma once

// Recursive Projection Method: Newton iteration on the invariant subspace of
// DF that belongs to multipliers outside B(0; 1 - delta), plain functional
// iteration on its orthogonal complement.

#include "slowman/projector.hpp"

#include <complex>
#include <optional>
#include <vector>

namespace slowman {

struct RpmConfig {
    double delta = 0.2;          ///< multipliers with |mu| > 1 - delta go to the Newton block
    double jacobian_step = 1e-7; ///< relative forward-difference step for DF
    int refresh_every = 5;       ///< re-identify the subspace every k iterations
    /// Upper bound on the Newton-block size M (N_f when unset). 0 disables Newton.
    std::optional<int> max_dim;

    void validate() const;
};

/// Orthonormal basis of the selected invariant subspace P.
struct RpmState {
    Matrix basis;                                    ///< N_f x M, orthonormal columns
    int M = 0;
    std::vector<std::complex<double>> eigenvalues;   ///< spectrum of DF, selected ones first

    /// P v = Z Z^T v.
    Vector project_p(const Vector& v) const;
    /// Q v = v - P v.
    Vector project_q(const Vector& v) const;
};

/// Ordered real Schur decomposition of DF; M counts |mu| > 1 - delta
/// (conjugate pairs kept together).
RpmState identify_subspace(const Matrix& DF, const RpmConfig& cfg);

/// RPM-stabilized iteration; same stopping rule and trace layout as `project`.
IterationTrace rpm_iterate(const FastSlowSystem& system, const FlowMap& fm, const IterationConfig& cfg,
                           const RpmConfig& rpm_cfg, ConstVectorRef x0, ConstVectorRef y_seed);
IterationTrace rpm_iterate(const FastSlowSystem& system, const IterationConfig& cfg, const RpmConfig& rpm_cfg,
                           ConstVectorRef x0, ConstVectorRef y_seed);

}  // namespace slowman
