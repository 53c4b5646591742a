#ifndef IRSSIM_SEARCH_HPP
#define IRSSIM_SEARCH_HPP

#include <array>
#include <limits>

#include "irssim/common.hpp"

namespace irssim {

template <int N>
struct AscentResult {
    std::array<double, N> x{};
    double value = -std::numeric_limits<double>::infinity();
    int iterations = 0;
};

// Backtracking gradient ascent on a smooth objective. The step along the
// normalized gradient halves until the objective improves and regrows on
// success, so the iterate never leaves the basin it was seeded in. The
// objective may return -inf to mark infeasible points.
template <int N, class F, class G>
AscentResult<N> gradient_ascent(F&& objective, G&& gradient, std::array<double, N> x0,
                                double initial_step, int max_iters) {
    AscentResult<N> res;
    res.x = x0;
    res.value = objective(res.x);
    double step = initial_step;
    constexpr double kMinStep = 1e-15;

    for (int iter = 0; iter < max_iters; ++iter) {
        res.iterations = iter + 1;
        std::array<double, N> g = gradient(res.x);
        double norm = 0.0;
        for (double gi : g) norm += gi * gi;
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm)) break;

        bool improved = false;
        while (step >= kMinStep) {
            std::array<double, N> xt = res.x;
            for (int i = 0; i < N; ++i) xt[i] += step * g[i] / norm;
            double ft = objective(xt);
            if (ft > res.value) {
                res.x = xt;
                res.value = ft;
                step = std::min(2.0 * step, initial_step);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) break;
    }
    return res;
}

template <int N, class F>
AscentResult<N> gradient_ascent_numeric(F&& objective, std::array<double, N> x0,
                                        double initial_step, int max_iters,
                                        double diff_step = 1e-6) {
    auto grad = [&](const std::array<double, N>& x) {
        std::array<double, N> g{};
        for (int i = 0; i < N; ++i) {
            std::array<double, N> hi = x, lo = x;
            hi[i] += diff_step;
            lo[i] -= diff_step;
            g[i] = (objective(hi) - objective(lo)) / (2.0 * diff_step);
        }
        return g;
    };
    return gradient_ascent<N>(objective, grad, x0, initial_step, max_iters);
}

}  // namespace irssim

#endif
