#ifndef IRSSIM_BEAMFORM_HPP
#define IRSSIM_BEAMFORM_HPP

#include <optional>
#include <random>

#include "irssim/channel.hpp"

namespace irssim {

struct ReflectionPattern {
    cvec coefficients;  // unit modulus, one entry per panel element
};

struct AoSettings {
    int max_sweeps = 500;
    double rel_tolerance = 1e-8;
    int n_random_restarts = 8;
    std::uint64_t restart_seed = 1;
    bool use_svd_start = true;                 // phase-align to the dominant right singular vector
    std::vector<cvec> initial_candidates;      // extra deterministic starts (e.g. warm starts)
};

struct AoResult {
    ReflectionPattern pattern;
    double objective = 0.0;
    std::vector<double> sweep_objectives;  // trace of the winning restart, non-decreasing
};

namespace detail {

inline double quadratic_objective(const cmat& a, const cvec* c, const cvec& nu) {
    cvec r = a * nu;
    if (c) r += *c;
    return r.squaredNorm();
}

// Coordinate ascent from one start. Each element update is the exact
// unconstrained-phase maximizer, so the objective cannot decrease.
inline void ao_single_start(const cmat& a, const cmat& b, const cvec* g, const cvec* c, cvec& nu,
                            const AoSettings& s, std::vector<double>& trace) {
    const Eigen::Index m = a.cols();
    trace.clear();
    double prev = quadratic_objective(a, c, nu);
    trace.push_back(prev);
    for (int sweep = 0; sweep < s.max_sweeps; ++sweep) {
        cvec t = b * nu;
        for (Eigen::Index i = 0; i < m; ++i) {
            cplx w = t(i) - b(i, i) * nu(i);
            if (g) w += (*g)(i);
            double mag = std::abs(w);
            if (mag == 0.0) continue;  // objective flat in this element's phase
            cplx updated = w / mag;
            t += b.col(i) * (updated - nu(i));
            nu(i) = updated;
        }
        double cur = quadratic_objective(a, c, nu);
        trace.push_back(cur);
        if (cur - prev <= s.rel_tolerance * std::max(std::abs(prev), 1e-300)) { prev = cur; break; }
        prev = cur;
    }
}

}  // namespace detail

// Maximizes ||A nu + c||^2 over unit-modulus nu by per-element coordinate
// ascent with multiple starts: caller-provided candidates first, then the
// dominant-singular-vector phase alignment, then seeded random phases.
inline AoResult ao_maximize_quadratic(const cmat& a, const cvec* affine, const AoSettings& s = {}) {
    const Eigen::Index m = a.cols();
    if (m < 1) throw std::invalid_argument("ao_maximize_quadratic: empty matrix");
    if (affine && affine->size() != a.rows())
        throw std::invalid_argument("ao_maximize_quadratic: affine term dimension mismatch");

    cmat b = a.adjoint() * a;
    cvec g;
    const cvec* gp = nullptr;
    if (affine) {
        g = a.adjoint() * (*affine);
        gp = &g;
    }

    std::vector<cvec> starts;
    for (const auto& cand : s.initial_candidates) {
        if (cand.size() != m) throw std::invalid_argument("ao_maximize_quadratic: bad candidate size");
        cvec nu(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            double mag = std::abs(cand(i));
            nu(i) = mag > 0.0 ? cand(i) / mag : cplx(1.0, 0.0);
        }
        starts.push_back(std::move(nu));
    }
    if (s.use_svd_start) {
        Eigen::SelfAdjointEigenSolver<cmat> eig(b);
        cvec v = eig.eigenvectors().col(m - 1);  // eigenvalues sorted ascending
        cvec nu(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            double mag = std::abs(v(i));
            nu(i) = mag > 1e-300 ? v(i) / mag : cplx(1.0, 0.0);
        }
        starts.push_back(std::move(nu));
    }
    std::mt19937_64 rng(s.restart_seed);
    std::uniform_real_distribution<double> unif(-kPi, kPi);
    for (int r = 0; r < s.n_random_restarts; ++r) {
        cvec nu(m);
        for (Eigen::Index i = 0; i < m; ++i) nu(i) = std::polar(1.0, unif(rng));
        starts.push_back(std::move(nu));
    }
    if (starts.empty()) starts.push_back(cvec::Ones(m));

    AoResult best;
    best.objective = -1.0;
    std::vector<double> trace;
    for (auto& nu : starts) {
        detail::ao_single_start(a, b, gp, affine, nu, s, trace);
        double obj = trace.back();
        if (obj > best.objective) {
            best.objective = obj;
            best.pattern.coefficients = nu;
            best.sweep_objectives = trace;
        }
    }
    return best;
}

// Service-independent pattern from the scaled static channel estimate.
// Invariant to complex scaling of g_hat: only phases of B enter the updates.
inline ReflectionPattern initial_beamforming(const cmat& g_hat, const AoSettings& s = {}) {
    return ao_maximize_quadratic(g_hat, nullptr, s).pattern;
}

// Per-block reflection: the static pattern steered to the block's user angles.
inline ReflectionPattern realtime_reflection(const ReflectionPattern& nu_bar, const AnglePair& angles,
                                             const UpaGeometry& geom) {
    if (nu_bar.coefficients.size() != geom.size())
        throw std::invalid_argument("realtime_reflection: pattern does not match panel");
    cvec u = upa_steering(angles, geom);
    ReflectionPattern out;
    out.coefficients = u.conjugate().cwiseProduct(nu_bar.coefficients);
    return out;
}

inline double effective_gain(const cmat& q_cascaded, const cvec& nu, const cvec& d) {
    return effective_channel(q_cascaded, nu, d).squaredNorm();
}

// Rate after the per-block training overhead and the capacity gap.
inline double achievable_rate(double gamma, double noise_power, int overhead_symbols,
                              int symbols_per_block, double gap_db) {
    if (symbols_per_block < 1) throw std::invalid_argument("achievable_rate: empty block");
    if (overhead_symbols < 0 || overhead_symbols > symbols_per_block)
        throw std::invalid_argument("achievable_rate: overhead exceeds block");
    if (gamma < 0.0) throw std::invalid_argument("achievable_rate: negative gain");
    if (noise_power <= 0.0) throw std::invalid_argument("achievable_rate: noise power must be positive");
    double fraction = 1.0 - static_cast<double>(overhead_symbols) / symbols_per_block;
    double snr = gamma / (noise_power * db_to_linear(gap_db));
    return fraction * std::log2(1.0 + snr);
}

}  // namespace irssim

#endif
