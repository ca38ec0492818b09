#include "slowman/derivatives.hpp"

#include "slowman/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace slowman {
namespace {

constexpr double kMachEps = std::numeric_limits<double>::epsilon();

void check_order(int m, int max_order) {
    if (m < 0) throw ValidationError("derivative order m must be non-negative");
    if (m > max_order) {
        std::ostringstream os;
        os << "nested differencing of order m = " << m << " exceeds m_max = " << max_order
           << "; round-off dominates, use the forward-difference mode instead";
        throw PrecisionError(os.str());
    }
}

Vector nested(const FastSlowSystem& sys, double scale, int k, const Vector& z, double step) {
    const int ns = sys.n_slow();
    const int nf = sys.n_fast();
    if (k == 0) {
        Vector out(nf);
        sys.eval_g(z.head(ns), z.tail(nf), sys.epsilon(), out);
        return -scale * out;
    }
    const Vector G = sys.scaled_field(z);
    const double gn = G.norm();
    if (gn == 0.0) return Vector::Zero(nf);
    const Vector d = G / gn;
    const Vector plus = nested(sys, scale, k - 1, z + step * d, step);
    const Vector minus = nested(sys, scale, k - 1, z - step * d, step);
    return -scale * gn * (plus - minus) / (2.0 * step);
}

}  // namespace

const char* to_string(DerivativeVariant v) {
    return v == DerivativeVariant::AnalyticRecursive ? "analytic" : "differenced";
}

DerivativeMode DerivativeMode::analytic(double H) {
    if (!(std::isfinite(H) && H > 0.0)) throw ValidationError("iterative step H must be positive");
    return DerivativeMode(DerivativeVariant::AnalyticRecursive, H, H);
}

DerivativeMode DerivativeMode::forward_difference(double h_hat, double eta) {
    if (!(std::isfinite(h_hat) && h_hat > 0.0)) throw ValidationError("differencing step Hhat must be positive");
    if (!(std::isfinite(eta) && eta > 0.0)) throw ValidationError("eta must be positive");
    return DerivativeMode(DerivativeVariant::ForwardDifference, eta * h_hat, h_hat);
}

void DerivativeMode::validate_for(const FastSlowSystem& system) const {
    if (is_analytic() && H_ > 10.0 * system.epsilon() * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "iterative step H = " << H_ << " exceeds 10 eps = " << 10.0 * system.epsilon();
        throw ValidationError(os.str());
    }
}

std::int64_t binomial(int n, int k) {
    if (n < 0 || n > 60) throw ValidationError("binomial: n out of range");
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::int64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;  // exact: r * (n-k+i) divisible by i
    return r;
}

Vector L_m(const FastSlowSystem& system, const DerivativeMode& mode, int m, ConstVectorRef z, int max_order) {
    if (m < 0) throw ValidationError("derivative order m must be non-negative");
    if (z.size() != system.dimension()) throw ValidationError("state dimension mismatch");
    if (const auto& A = system.linear_generator()) {
        // (-H A)^{m+1} z, fast rows.
        Vector v = z;
        for (int k = 0; k <= m; ++k) {
            Vector w = (*A) * v;
            v = -mode.H() * w;
        }
        return v.tail(system.n_fast());
    }
    return L_m_nested(system, mode, m, z, max_order);
}

Vector L_m_nested(const FastSlowSystem& system, const DerivativeMode& mode, int m, ConstVectorRef z,
                  int max_order) {
    check_order(m, max_order);
    if (z.size() != system.dimension()) throw ValidationError("state dimension mismatch");
    const Vector zv = z;
    // One step for every nesting level: balances O(s^2) truncation against the
    // O(u / s^m) round-off of an m-fold nested stencil.
    const double step = std::pow(kMachEps, 1.0 / (m + 2)) * std::max(1.0, zv.norm());
    return nested(system, mode.H() / system.epsilon(), m, zv, step);
}

Vector delta_forward(const FlowMap& fm, const DerivativeMode& mode, int m, ConstVectorRef z) {
    if (m < 0) throw ValidationError("derivative order m must be non-negative");
    const auto& sys = fm.system();
    const int n = m + 1;
    const auto nodes = flow_nodes(fm, z, mode.H_hat(), n);
    Vector acc = Vector::Zero(sys.n_fast());
    for (int l = 0; l <= n; ++l) {
        const double sign = ((n - l) % 2 == 0) ? 1.0 : -1.0;
        acc += (sign * static_cast<double>(binomial(n, l))) * nodes[static_cast<std::size_t>(l)].tail(sys.n_fast());
    }
    return acc;
}

Vector L_hat(const FlowMap& fm, const DerivativeMode& mode, int m, ConstVectorRef z) {
    const double factor = std::pow(-mode.eta(), m + 1);
    return factor * delta_forward(fm, mode, m, z);
}

double leading_order_check(const FastSlowSystem& system, const DerivativeMode& mode, int m, ConstVectorRef z) {
    const int ns = system.n_slow();
    const int nf = system.n_fast();
    const Vector x = z.head(ns);
    const Vector y = z.tail(nf);
    const Matrix J0 = system.dy_g(x, y, 0.0);
    Vector v = system.g_at(x, y, 0.0);
    for (int k = 0; k < m; ++k) v = J0 * v;
    const Vector lead = std::pow(-mode.H() / system.epsilon(), m + 1) * v;
    const Vector L = L_m(system, mode, m, z);
    const double diff = (L - lead).norm();
    const double ln = L.norm();
    if (ln == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / ln;
}

}  // namespace slowman
