#include "slowman/systems.hpp"

#include "slowman/errors.hpp"
#include "slowman/log.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace slowman {
namespace {

constexpr double kMachEps = std::numeric_limits<double>::epsilon();

double fd_step(double scale) { return std::max(1e-6, std::sqrt(kMachEps) * scale); }

void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError(message);
}

}  // namespace

const char* to_string(ManifoldKind kind) {
    switch (kind) {
        case ManifoldKind::ExactClosedForm: return "exact-closed-form";
        case ManifoldKind::MatrixPowerOracle: return "matrix-power-oracle";
        case ManifoldKind::AsymptoticExpansion: return "asymptotic-expansion";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// FastSlowSystem

FastSlowSystem::FastSlowSystem(std::string name, int n_slow, int n_fast, double epsilon, RhsFn f,
                               RhsFn g)
    : name_(std::move(name)),
      n_slow_(n_slow),
      n_fast_(n_fast),
      epsilon_(epsilon),
      f_(std::move(f)),
      g_(std::move(g)) {
    require(n_slow_ > 0 && n_fast_ > 0, "system dimensions must be positive");
    require(std::isfinite(epsilon_) && epsilon_ > 0.0, "epsilon must be positive");
    require(epsilon_ <= 0.5, "epsilon must be <= 0.5 (timescale ratio, eps << 1)");
    require(static_cast<bool>(f_) && static_cast<bool>(g_), "f and g evaluators are required");
    if (epsilon_ > 0.1) {
        std::ostringstream os;
        os << "epsilon = " << epsilon_ << " is large; asymptotic estimates may not apply";
        warn(os.str());
    }
}

FastSlowSystem FastSlowSystem::with_jacobians(SystemJacobians jac) const {
    FastSlowSystem copy = *this;
    copy.jac_ = std::move(jac);
    return copy;
}

FastSlowSystem FastSlowSystem::with_linear_generator(Matrix generator) const {
    require(generator.rows() == dimension() && generator.cols() == dimension(),
            "linear generator must be N x N");
    FastSlowSystem copy = *this;
    copy.generator_ = std::move(generator);
    return copy;
}

FastSlowSystem FastSlowSystem::with_reference(ReferenceManifold ref) const {
    require(static_cast<bool>(ref.graph) || static_cast<bool>(ref.order_root),
            "reference manifold needs a graph or an order-root oracle");
    FastSlowSystem copy = *this;
    copy.references_.push_back(std::move(ref));
    return copy;
}

FastSlowSystem FastSlowSystem::with_parameters(std::map<std::string, double> params) const {
    FastSlowSystem copy = *this;
    copy.params_ = std::move(params);
    return copy;
}

void FastSlowSystem::eval_f(ConstVectorRef x, ConstVectorRef y, double eps, VectorRef out) const {
    f_(x, y, eps, out);
}

void FastSlowSystem::eval_g(ConstVectorRef x, ConstVectorRef y, double eps, VectorRef out) const {
    g_(x, y, eps, out);
}

Vector FastSlowSystem::f(ConstVectorRef x, ConstVectorRef y) const {
    Vector out(n_slow_);
    f_(x, y, epsilon_, out);
    return out;
}

Vector FastSlowSystem::g(ConstVectorRef x, ConstVectorRef y) const { return g_at(x, y, epsilon_); }

Vector FastSlowSystem::g_at(ConstVectorRef x, ConstVectorRef y, double eps) const {
    Vector out(n_fast_);
    g_(x, y, eps, out);
    return out;
}

void FastSlowSystem::vector_field(ConstVectorRef z, VectorRef out) const {
    auto x = z.head(n_slow_);
    auto y = z.tail(n_fast_);
    f_(x, y, epsilon_, out.head(n_slow_));
    g_(x, y, epsilon_, out.tail(n_fast_));
    out.tail(n_fast_) /= epsilon_;
}

Vector FastSlowSystem::scaled_field(ConstVectorRef z) const {
    Vector out(dimension());
    auto x = z.head(n_slow_);
    auto y = z.tail(n_fast_);
    f_(x, y, epsilon_, out.head(n_slow_));
    out.head(n_slow_) *= epsilon_;
    g_(x, y, epsilon_, out.tail(n_fast_));
    return out;
}

Matrix FastSlowSystem::dx_g(ConstVectorRef x, ConstVectorRef y, double eps) const {
    Matrix out(n_fast_, n_slow_);
    if (jac_.dx_g) {
        jac_.dx_g(x, y, eps, out);
        return out;
    }
    const double h = fd_step(join(x, y).norm());
    Vector xp = x, xm = x;
    for (int j = 0; j < n_slow_; ++j) {
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        out.col(j) = (g_at(xp, y, eps) - g_at(xm, y, eps)) / (2.0 * h);
        xp(j) = xm(j) = x(j);
    }
    return out;
}

Matrix FastSlowSystem::dy_g(ConstVectorRef x, ConstVectorRef y, double eps) const {
    Matrix out(n_fast_, n_fast_);
    if (jac_.dy_g) {
        jac_.dy_g(x, y, eps, out);
        return out;
    }
    const double h = fd_step(join(x, y).norm());
    Vector yp = y, ym = y;
    for (int j = 0; j < n_fast_; ++j) {
        yp(j) = y(j) + h;
        ym(j) = y(j) - h;
        out.col(j) = (g_at(x, yp, eps) - g_at(x, ym, eps)) / (2.0 * h);
        yp(j) = ym(j) = y(j);
    }
    return out;
}

Vector FastSlowSystem::deps_g(ConstVectorRef x, ConstVectorRef y, double eps) const {
    if (jac_.deps_g) {
        Matrix out(n_fast_, 1);
        jac_.deps_g(x, y, eps, out);
        return out.col(0);
    }
    // One-sided second-order stencil: eps may sit at 0 where g is not defined below.
    const double h = fd_step(join(x, y).norm());
    return (-3.0 * g_at(x, y, eps) + 4.0 * g_at(x, y, eps + h) - g_at(x, y, eps + 2.0 * h)) /
           (2.0 * h);
}

Matrix FastSlowSystem::dx_f(ConstVectorRef x, ConstVectorRef y, double eps) const {
    Matrix out(n_slow_, n_slow_);
    if (jac_.dx_f) {
        jac_.dx_f(x, y, eps, out);
        return out;
    }
    const double h = fd_step(join(x, y).norm());
    Vector xp = x, xm = x, fp(n_slow_), fm(n_slow_);
    for (int j = 0; j < n_slow_; ++j) {
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        f_(xp, y, eps, fp);
        f_(xm, y, eps, fm);
        out.col(j) = (fp - fm) / (2.0 * h);
        xp(j) = xm(j) = x(j);
    }
    return out;
}

Matrix FastSlowSystem::dy_f(ConstVectorRef x, ConstVectorRef y, double eps) const {
    Matrix out(n_slow_, n_fast_);
    if (jac_.dy_f) {
        jac_.dy_f(x, y, eps, out);
        return out;
    }
    const double h = fd_step(join(x, y).norm());
    Vector yp = y, ym = y, fp(n_slow_), fm(n_slow_);
    for (int j = 0; j < n_fast_; ++j) {
        yp(j) = y(j) + h;
        ym(j) = y(j) - h;
        f_(x, yp, eps, fp);
        f_(x, ym, eps, fm);
        out.col(j) = (fp - fm) / (2.0 * h);
        yp(j) = ym(j) = y(j);
    }
    return out;
}

bool FastSlowSystem::has_analytic_jacobians() const noexcept {
    return jac_.dx_g && jac_.dy_g && jac_.deps_g && jac_.dx_f && jac_.dy_f;
}

const ReferenceManifold* FastSlowSystem::reference(ManifoldKind kind) const noexcept {
    for (const auto& r : references_)
        if (r.kind == kind) return &r;
    return nullptr;
}

Vector FastSlowSystem::join(ConstVectorRef x, ConstVectorRef y) const {
    Vector z(dimension());
    z << x, y;
    return z;
}

// ---------------------------------------------------------------------------
// Flow map

FlowMap::FlowMap(FastSlowSystem system, double step, FlowScheme scheme)
    : system_(std::move(system)), step_(step), scheme_(scheme) {
    require(std::isfinite(step_) && step_ > 0.0, "integration step must be positive");
    require(step_ <= system_.epsilon() * (1.0 + 1e-12),
            "integration step must be O(eps): step <= eps");
}

FlowMap default_flow_map(const FastSlowSystem& system, double h_hat) {
    return FlowMap(system, std::min(system.epsilon(), h_hat) / 4.0);
}

namespace {

struct Rk4Workspace {
    explicit Rk4Workspace(int n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}
    Vector k1, k2, k3, k4, tmp;
};

// Advances z in place by `steps` RK4 steps of size h; `counter` is the global step index.
void rk4_advance(const FastSlowSystem& sys, Vector& z, double h, long steps, Rk4Workspace& w,
                 long& counter) {
    for (long s = 0; s < steps; ++s) {
        sys.vector_field(z, w.k1);
        w.tmp = z + 0.5 * h * w.k1;
        sys.vector_field(w.tmp, w.k2);
        w.tmp = z + 0.5 * h * w.k2;
        sys.vector_field(w.tmp, w.k3);
        w.tmp = z + h * w.k3;
        sys.vector_field(w.tmp, w.k4);
        z += (h / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
        ++counter;
        if (!z.allFinite()) {
            std::ostringstream os;
            os << "flow diverged: non-finite state at integration step " << counter;
            throw DivergenceError(os.str(), static_cast<std::size_t>(counter));
        }
    }
}

long substeps(double t, double step) {
    // Round down values that are integer multiples up to rounding noise.
    const double ratio = t / step;
    const double nearest = std::round(ratio);
    if (nearest >= 1.0 && std::abs(ratio - nearest) <= 1e-9 * nearest) return static_cast<long>(nearest);
    return std::max(1L, static_cast<long>(std::ceil(ratio)));
}

}  // namespace

Vector flow(const FlowMap& fm, ConstVectorRef z, double t) {
    require(std::isfinite(t) && t >= 0.0, "flow time must be non-negative");
    require(z.size() == fm.system().dimension(), "state dimension mismatch");
    Vector state = z;
    if (t == 0.0) return state;
    const long n = substeps(t, fm.step());
    Rk4Workspace w(static_cast<int>(state.size()));
    long counter = 0;
    rk4_advance(fm.system(), state, t / static_cast<double>(n), n, w, counter);
    return state;
}

std::vector<Vector> flow_nodes(const FlowMap& fm, ConstVectorRef z, double dt, int count) {
    require(std::isfinite(dt) && dt > 0.0, "node spacing must be positive");
    require(count >= 0, "node count must be non-negative");
    require(z.size() == fm.system().dimension(), "state dimension mismatch");
    std::vector<Vector> nodes;
    nodes.reserve(static_cast<std::size_t>(count) + 1);
    Vector state = z;
    nodes.push_back(state);
    const long n = substeps(dt, fm.step());
    const double h = dt / static_cast<double>(n);
    Rk4Workspace w(static_cast<int>(state.size()));
    long counter = 0;
    for (int l = 1; l <= count; ++l) {
        rk4_advance(fm.system(), state, h, n, w, counter);
        nodes.push_back(state);
    }
    return nodes;
}

// ---------------------------------------------------------------------------
// Linear algebra helper

Vector solve_checked(const Matrix& jacobian, const Vector& rhs, const char* what) {
    Eigen::JacobiSVD<Matrix> svd(jacobian, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    const double smin = s.size() ? s(s.size() - 1) : 0.0;
    if (!(smax > 0.0) || !(smin > 1e-13 * smax) || !std::isfinite(smax)) {
        std::ostringstream os;
        os << what << " is singular (sigma_min = " << smin << ", sigma_max = " << smax << ")";
        throw DegeneracyError(os.str());
    }
    return svd.solve(rhs);
}

// ---------------------------------------------------------------------------
// Built-in systems

FastSlowSystem linear_test(double a, double c, double epsilon) {
    require(std::isfinite(a) && std::isfinite(c), "linear_test parameters must be finite");
    require(std::isfinite(epsilon) && epsilon > 0.0 && epsilon <= 0.5, "epsilon must lie in (0, 0.5]");
    const double denom = 1.0 + epsilon * a;
    require(std::abs(denom) > 1e-12, "degenerate manifold: 1 + eps * a = 0");

    RhsFn f = [a](ConstVectorRef x, ConstVectorRef, double, VectorRef out) { out(0) = a * x(0); };
    RhsFn g = [c](ConstVectorRef x, ConstVectorRef y, double, VectorRef out) {
        out(0) = c * x(0) - y(0);
    };
    SystemJacobians jac;
    jac.dx_g = [c](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out(0, 0) = c; };
    jac.dy_g = [](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out(0, 0) = -1.0; };
    jac.deps_g = [](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out(0, 0) = 0.0; };
    jac.dx_f = [a](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out(0, 0) = a; };
    jac.dy_f = [](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out(0, 0) = 0.0; };

    Matrix A(2, 2);
    A << a, 0.0, c / epsilon, -1.0 / epsilon;

    ReferenceManifold exact;
    exact.kind = ManifoldKind::ExactClosedForm;
    exact.graph = [c, denom](const Vector& x) {
        Vector y(1);
        y(0) = c * x(0) / denom;
        return y;
    };
    exact.terms = {
        [c](const Vector& x) { return Vector::Constant(1, c * x(0)); },
        [a, c](const Vector& x) { return Vector::Constant(1, -a * c * x(0)); },
    };

    ReferenceManifold roots;
    roots.kind = ManifoldKind::MatrixPowerOracle;
    roots.order_root = [A](const Vector& x, int m) {
        Matrix P = Matrix::Identity(2, 2);
        for (int k = 0; k <= m; ++k) P = A * P;
        Vector y(1);
        y(0) = -P(1, 0) * x(0) / P(1, 1);
        return y;
    };

    return FastSlowSystem("linear", 1, 1, epsilon, std::move(f), std::move(g))
        .with_jacobians(std::move(jac))
        .with_linear_generator(A)
        .with_reference(std::move(exact))
        .with_reference(std::move(roots))
        .with_parameters({{"a", a}, {"c", c}, {"eps", epsilon}});
}

FastSlowSystem michaelis_menten(double kappa, double lambda, double epsilon) {
    require(std::isfinite(kappa) && kappa > 0.0, "kappa must be positive");
    require(std::isfinite(lambda) && lambda > 0.0, "lambda must be positive");
    require(std::isfinite(epsilon) && epsilon > 0.0, "epsilon must be positive");

    RhsFn f = [kappa, lambda](ConstVectorRef x, ConstVectorRef y, double, VectorRef out) {
        out(0) = -x(0) + (x(0) + kappa - lambda) * y(0);
    };
    RhsFn g = [kappa](ConstVectorRef x, ConstVectorRef y, double, VectorRef out) {
        out(0) = x(0) - (x(0) + kappa) * y(0);
    };
    SystemJacobians jac;
    jac.dx_g = [](ConstVectorRef, ConstVectorRef y, double, MatrixRef out) { out(0, 0) = 1.0 - y(0); };
    jac.dy_g = [kappa](ConstVectorRef x, ConstVectorRef, double, MatrixRef out) {
        out(0, 0) = -(x(0) + kappa);
    };
    jac.deps_g = [](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out(0, 0) = 0.0; };
    jac.dx_f = [](ConstVectorRef, ConstVectorRef y, double, MatrixRef out) { out(0, 0) = -1.0 + y(0); };
    jac.dy_f = [kappa, lambda](ConstVectorRef x, ConstVectorRef, double, MatrixRef out) {
        out(0, 0) = x(0) + kappa - lambda;
    };

    const FastSlowSystem base =
        FastSlowSystem("mm", 1, 1, epsilon, std::move(f), std::move(g))
            .with_jacobians(std::move(jac))
            .with_parameters({{"kappa", kappa}, {"lambda", lambda}, {"eps", epsilon}});

    ReferenceManifold expansion;
    expansion.kind = ManifoldKind::AsymptoticExpansion;
    expansion.terms = {
        [base](const Vector& x) { return expand_slow_manifold(base, 0, x)[0]; },
        [base](const Vector& x) { return expand_slow_manifold(base, 1, x)[1]; },
    };
    expansion.graph = [base](const Vector& x) {
        const auto terms = expand_slow_manifold(base, 1, x);
        return Vector(terms[0] + base.epsilon() * terms[1]);
    };
    return base.with_reference(std::move(expansion));
}

FastSlowSystem spectral_test(const std::vector<std::complex<double>>& eigenvalues, double a,
                             double epsilon) {
    require(!eigenvalues.empty(), "spectral_test needs at least one eigenvalue");
    require(std::isfinite(a), "slow rate must be finite");
    require(std::isfinite(epsilon) && epsilon > 0.0 && epsilon <= 0.5, "epsilon must lie in (0, 0.5]");

    int nf = 0;
    for (const auto& lam : eigenvalues) {
        if (!(lam.real() < 0.0) || !std::isfinite(lam.imag()))
            throw DomainError("spectral_test eigenvalues must have strictly negative real part");
        nf += lam.imag() != 0.0 ? 2 : 1;
    }
    Matrix B = Matrix::Zero(nf, nf);
    int k = 0;
    for (const auto& lam : eigenvalues) {
        if (lam.imag() != 0.0) {
            B(k, k) = lam.real();
            B(k, k + 1) = -lam.imag();
            B(k + 1, k) = lam.imag();
            B(k + 1, k + 1) = lam.real();
            k += 2;
        } else {
            B(k, k) = lam.real();
            k += 1;
        }
    }
    // g = B (y - 1 x): critical manifold y = 1 x.
    const Vector coupling = -B * Vector::Ones(nf);

    RhsFn f = [a](ConstVectorRef x, ConstVectorRef, double, VectorRef out) { out(0) = a * x(0); };
    RhsFn g = [B, coupling](ConstVectorRef x, ConstVectorRef y, double, VectorRef out) {
        out.noalias() = B * y;
        out += coupling * x(0);
    };
    SystemJacobians jac;
    jac.dx_g = [coupling](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out.col(0) = coupling; };
    jac.dy_g = [B](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out = B; };
    jac.deps_g = [](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out.setZero(); };
    jac.dx_f = [a](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out(0, 0) = a; };
    jac.dy_f = [](ConstVectorRef, ConstVectorRef, double, MatrixRef out) { out.setZero(); };

    const int n = nf + 1;
    Matrix A = Matrix::Zero(n, n);
    A(0, 0) = a;
    A.block(1, 0, nf, 1) = coupling / epsilon;
    A.block(1, 1, nf, nf) = B / epsilon;

    // Invariance: B K + coupling - eps a K = 0 for y = K x.
    const Matrix shifted = B - epsilon * a * Matrix::Identity(nf, nf);
    const Vector K = solve_checked(shifted, Vector(-coupling), "B - eps a I");

    ReferenceManifold exact;
    exact.kind = ManifoldKind::ExactClosedForm;
    exact.graph = [K](const Vector& x) { return Vector(K * x(0)); };
    exact.terms = {[nf](const Vector& x) { return Vector(Vector::Ones(nf) * x(0)); }};

    ReferenceManifold roots;
    roots.kind = ManifoldKind::MatrixPowerOracle;
    roots.order_root = [A, nf](const Vector& x, int m) {
        Matrix P = Matrix::Identity(A.rows(), A.cols());
        for (int j = 0; j <= m; ++j) P = A * P;
        const Matrix Q = P.block(1, 1, nf, nf);
        const Vector rhs = -P.block(1, 0, nf, 1) * x(0);
        return solve_checked(Q, rhs, "fast block of A^(m+1)");
    };

    std::map<std::string, double> params{{"a", a}, {"eps", epsilon}};
    return FastSlowSystem("spectral", 1, nf, epsilon, std::move(f), std::move(g))
        .with_jacobians(std::move(jac))
        .with_linear_generator(A)
        .with_reference(std::move(exact))
        .with_reference(std::move(roots))
        .with_parameters(std::move(params));
}

FastSlowSystem complex_pair_test(double theta, double lambda_re, double epsilon,
                                 const std::vector<double>& extra_real, double a) {
    require(std::isfinite(theta), "theta must be finite");
    require(lambda_re < 0.0, "lambda_re must be negative");
    const double half_pi = 0.5 * M_PI;
    if (!(theta > half_pi && theta < 3.0 * half_pi))
        throw DomainError("theta must lie in (pi/2, 3pi/2)");
    std::vector<std::complex<double>> lams;
    const double im = lambda_re * std::tan(theta);
    // Round-off at theta = pi leaves a ~1e-16 imaginary part; treat it as a real pair.
    if (std::abs(im) <= 1e-12 * std::abs(lambda_re)) {
        lams = {{lambda_re, 0.0}, {lambda_re, 0.0}};
    } else {
        lams = {{lambda_re, im}};
    }
    for (double r : extra_real) lams.emplace_back(r, 0.0);
    auto params = std::map<std::string, double>{
        {"theta", theta}, {"lambda_re", lambda_re}, {"a", a}, {"eps", epsilon}};
    if (!extra_real.empty()) params["extra_real"] = extra_real.front();
    return spectral_test(lams, a, epsilon).with_parameters(std::move(params));
}

// ---------------------------------------------------------------------------
// Slow-manifold expansion

Vector critical_point(const FastSlowSystem& system, ConstVectorRef x, const std::optional<Vector>& seed) {
    const int nf = system.n_fast();
    Vector y = seed ? *seed : Vector::Zero(nf);
    require(y.size() == nf, "seed dimension mismatch");
    Vector r = system.g_at(x, y, 0.0);
    double rnorm = r.norm();
    for (int it = 0; it < 50; ++it) {
        if (rnorm <= 1e-14 * std::max(1.0, y.norm())) return y;
        const Matrix J = system.dy_g(x, y, 0.0);
        const Vector dy = solve_checked(J, Vector(-r), "(D_y g)_0");
        double alpha = 1.0;
        Vector trial = y + dy;
        Vector rt = system.g_at(x, trial, 0.0);
        for (int halving = 0; halving < 20 && !(rt.norm() < rnorm); ++halving) {
            alpha *= 0.5;
            trial = y + alpha * dy;
            rt = system.g_at(x, trial, 0.0);
        }
        const double step = (trial - y).norm();
        y = trial;
        r = rt;
        rnorm = r.norm();
        if (step <= 4.0 * kMachEps * std::max(1.0, y.norm())) return y;
    }
    if (rnorm <= 1e-10 * std::max(1.0, y.norm())) return y;
    throw RootFindError("Newton iteration for h_[0] did not converge in 50 steps");
}

std::vector<Vector> expand_slow_manifold(const FastSlowSystem& system, int order, ConstVectorRef x,
                                         const std::optional<Vector>& seed) {
    require(order == 0 || order == 1, "expansion order must be 0 or 1");
    require(x.size() == system.n_slow(), "slow dimension mismatch");
    std::vector<Vector> terms;
    terms.push_back(critical_point(system, x, seed));
    if (order == 0) return terms;

    const Vector& h0 = terms[0];
    const Matrix dyg = system.dy_g(x, h0, 0.0);
    const Matrix dxg = system.dx_g(x, h0, 0.0);
    // Dh_[0] = -(D_y g)_0^{-1} (D_x g)_0 by implicit differentiation of g(x, h_[0](x), 0) = 0.
    Matrix dh0(system.n_fast(), system.n_slow());
    for (int j = 0; j < system.n_slow(); ++j)
        dh0.col(j) = solve_checked(dyg, Vector(-dxg.col(j)), "(D_y g)_0");
    Vector f0(system.n_slow());
    system.eval_f(x, h0, 0.0, f0);
    const Vector rhs = dh0 * f0 - system.deps_g(x, h0, 0.0);
    terms.push_back(solve_checked(dyg, rhs, "(D_y g)_0"));
    return terms;
}

Vector invariance_residual(const FastSlowSystem& system, const std::function<Vector(const Vector&)>& h,
                           ConstVectorRef x) {
    const int ns = system.n_slow();
    const Vector xv = x;
    const Vector hx = h(xv);
    Matrix dh(system.n_fast(), ns);
    const double step = 1e-5 * std::max(1.0, xv.norm());
    for (int j = 0; j < ns; ++j) {
        Vector xp = xv, xm = xv;
        xp(j) += step;
        xm(j) -= step;
        dh.col(j) = (h(xp) - h(xm)) / (2.0 * step);
    }
    return system.g(xv, hx) - system.epsilon() * dh * system.f(xv, hx);
}

std::vector<std::complex<double>> fast_spectrum(const FastSlowSystem& system, ConstVectorRef x,
                                                ConstVectorRef y, double eps_eval) {
    const Matrix J = system.dy_g(x, y, eps_eval);
    Eigen::EigenSolver<Matrix> es(J, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed on D_y g");
    std::vector<std::complex<double>> out;
    for (int i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()(i));
    return out;
}

void check_normal_attractivity(const FastSlowSystem& system, ConstVectorRef x) {
    const Vector h0 = critical_point(system, x);
    for (const auto& lam : fast_spectrum(system, x, h0, 0.0)) {
        if (!(lam.real() < 0.0)) {
            std::ostringstream os;
            os << "(D_y g)_0 has eigenvalue " << lam.real() << (lam.imag() >= 0 ? "+" : "") << lam.imag()
               << "i with non-negative real part: slow manifold is not normally attracting";
            throw DomainError(os.str());
        }
    }
}

}  // namespace slowman
