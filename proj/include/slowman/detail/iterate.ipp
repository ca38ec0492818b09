#pragma once

#include <sstream>
#include <utility>

namespace slowman::detail {

template <class Step>
IterationTrace iterate(Step&& step, const Vector& seed, double tol, int max_iters, double divergence_factor) {
    IterationTrace trace;
    trace.tol = tol;
    trace.iterates.push_back(seed);
    Vector y = seed;
    for (int r = 0; r < max_iters; ++r) {
        Vector next = step(y, r, trace);
        if (!next.allFinite()) {
            trace.output = y;
            trace.outcome = Outcome::Diverged;
            trace.iterations_used = static_cast<int>(trace.residuals.size());
            std::ostringstream os;
            os << "iterate " << r + 2 << " is non-finite";
            throw IterationDivergence(os.str(), static_cast<std::size_t>(r + 1), std::move(trace));
        }
        const double res = (next - y).norm();
        trace.iterates.push_back(next);
        trace.residuals.push_back(res);
        y = std::move(next);
        if (res < tol) {
            trace.outcome = Outcome::Converged;
            trace.converged = true;
            break;
        }
        if (res > divergence_factor * trace.residuals.front()) {
            trace.outcome = Outcome::Diverged;
            break;
        }
    }
    trace.output = y;
    trace.iterations_used = static_cast<int>(trace.residuals.size());
    return trace;
}

}  // namespace slowman::detail
