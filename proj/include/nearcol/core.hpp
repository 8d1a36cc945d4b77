#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "nearcol/errors.hpp"

namespace nearcol {

inline constexpr double pi = 3.141592653589793238462643383279502884;

/// Mass ratio, rotating-frame energy and the derived regularization constants.
/// Immutable after construction; build through make_context.
struct EnergyContext {
    double mu;  // mass ratio, in [0, 1/2]
    double h;   // energy level of the rotating-frame Hamiltonian
    double g;   // shifted energy g = h + (1-mu)(1 + (1-mu)/2), positive
    double xi;  // Levi-Civita scale xi = (2g)^(-1/2)
};

/// Builds an EnergyContext, deriving g and xi from (mu, h).
inline EnergyContext make_context(double mu, double h) {
    if (!(mu >= 0.0 && mu <= 0.5))
        throw InvalidParameter("make_context: mu must lie in [0, 1/2], got " + std::to_string(mu));
    if (!std::isfinite(h))
        throw InvalidParameter("make_context: h must be finite");
    const double g = h + (1.0 - mu) * (1.0 + (1.0 - mu) / 2.0);
    if (!(g > 0.0))
        throw NonPositiveShiftedEnergy("make_context: g = h + (1-mu)(1+(1-mu)/2) = " +
                                       std::to_string(g) + " is not positive");
    return EnergyContext{mu, h, g, 1.0 / std::sqrt(2.0 * g)};
}

/// Integrator and solver tolerances. All positive; max_steps >= 1.
struct Tolerances {
    double abs_tol = 1e-12;
    double rel_tol = 1e-12;
    double event_tol = 1e-12;
    double root_tol = 1e-10;
    std::int64_t max_steps = 10'000'000;
};

inline void validate(const Tolerances& tol) {
    if (!(tol.abs_tol > 0 && tol.rel_tol > 0 && tol.event_tol > 0 && tol.root_tol > 0))
        throw InvalidParameter("Tolerances: all tolerances must be strictly positive");
    if (tol.max_steps < 1)
        throw InvalidParameter("Tolerances: max_steps must be >= 1");
}

/// Thread count resolution: explicit request > NEARCOL_THREADS > hardware.
inline unsigned resolve_thread_count(unsigned requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("NEARCOL_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/// Runs fn(i) for i in [0, n). Work is split into fixed-size chunks pulled by
/// a shared counter, so per-index outputs are identical for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned threads = 0) {
    const unsigned nt = std::min<std::size_t>(resolve_thread_count(threads), n ? n : 1);
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    constexpr std::size_t grain = 4;
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::vector<std::exception_ptr> errors(nt);
    for (unsigned t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (;;) {
                    const std::size_t begin = next.fetch_add(grain);
                    if (begin >= n) return;
                    const std::size_t end = std::min(begin + grain, n);
                    for (std::size_t i = begin; i < end; ++i) fn(i);
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Neumaier-compensated sum in index order; deterministic reduction.
inline double fixed_order_sum(const std::vector<double>& values) {
    double sum = 0.0, comp = 0.0;
    for (double v : values) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            comp += (sum - t) + v;
        else
            comp += (v - t) + sum;
        sum = t;
    }
    return sum + comp;
}

} // namespace nearcol
