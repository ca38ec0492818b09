#pragma once

// Scaled time derivatives of the fast variables.
//
//   L_m(z)     = (-H)^{m+1} d^{m+1}y/dt^{m+1}(z)     (analytic-recursive)
//   Lhat_m(z)  = (-eta)^{m+1} Delta^{m+1} y(z)        (forward-difference)
//
// with Delta^{m+1} the forward difference of the flow at spacing Hhat = H / eta.

#include "slowman/systems.hpp"

#include <cstdint>

namespace slowman {

enum class DerivativeVariant { AnalyticRecursive, ForwardDifference };

const char* to_string(DerivativeVariant v);

/// How the (m+1)-st derivative is obtained. H is the iterative step; Hhat the
/// differencing step. eta = H / Hhat is derived, never stored.
class DerivativeMode {
public:
    static DerivativeMode analytic(double H);
    static DerivativeMode forward_difference(double h_hat, double eta = 1.0);

    DerivativeVariant variant() const noexcept { return variant_; }
    double H() const noexcept { return H_; }
    double H_hat() const noexcept { return H_hat_; }
    double eta() const noexcept { return H_ / H_hat_; }
    bool is_analytic() const noexcept { return variant_ == DerivativeVariant::AnalyticRecursive; }

    /// Enforces the O(eps) step rule against a concrete system
    /// (analytic: H <= 10 eps).
    void validate_for(const FastSlowSystem& system) const;

private:
    DerivativeMode(DerivativeVariant v, double H, double h_hat) : variant_(v), H_(H), H_hat_(h_hat) {}

    DerivativeVariant variant_;
    double H_;
    double H_hat_;
};

/// Default cap on m for nested differencing.
inline constexpr int kDefaultMaxOrder = 4;

/// Binomial coefficient C(n, k), exact in 64-bit integers (n <= 60).
std::int64_t binomial(int n, int k);

/// L_m(z). Uses exact powers of the linear generator when the system has one,
/// nested central differences of L_{k+1} = -(H/eps) (D_z L_k) G otherwise.
Vector L_m(const FastSlowSystem& system, const DerivativeMode& mode, int m, ConstVectorRef z,
           int max_order = kDefaultMaxOrder);

/// Same quantity, always by nested central differences (ignores any linear generator).
Vector L_m_nested(const FastSlowSystem& system, const DerivativeMode& mode, int m, ConstVectorRef z,
                  int max_order = kDefaultMaxOrder);

/// Delta^{m+1} y(z) = sum_l (-1)^{m+1-l} C(m+1, l) phi^y(z; l Hhat).
Vector delta_forward(const FlowMap& fm, const DerivativeMode& mode, int m, ConstVectorRef z);

/// (-eta)^{m+1} Delta^{m+1} y(z).
Vector L_hat(const FlowMap& fm, const DerivativeMode& mode, int m, ConstVectorRef z);

/// || L_m(z) - (-H/eps)^{m+1} [(D_y g)_0(z)]^m g_0(z) || / || L_m(z) ||.
double leading_order_check(const FastSlowSystem& system, const DerivativeMode& mode, int m,
                           ConstVectorRef z);

}  // namespace slowman
