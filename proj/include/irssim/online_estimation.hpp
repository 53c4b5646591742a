#ifndef IRSSIM_ONLINE_ESTIMATION_HPP
#define IRSSIM_ONLINE_ESTIMATION_HPP

#include <random>

#include "irssim/geometry.hpp"
#include "irssim/search.hpp"

namespace irssim {

struct TrainingReflections {
    cmat v_matrix;  // tau x m, one reflection vector per row
};

// Per-slot training patterns: uniformly spaced DFT rows composed on the
// current service reflection, so slot 0 is the service beam itself and the
// stack keeps full rank for the joint angle/gain/offset fit.
inline TrainingReflections online_training_reflections(int tau, int m, const cvec& base) {
    if (tau < 4) throw std::invalid_argument("online_training_reflections: need at least 4 slots");
    if (base.size() != m) throw std::invalid_argument("online_training_reflections: base size mismatch");
    TrainingReflections t;
    t.v_matrix.resize(tau, m);
    for (int i = 0; i < tau; ++i) {
        int row = static_cast<int>((static_cast<long>(i) * m) / tau) % m;
        for (int c = 0; c < m; ++c)
            t.v_matrix(i, c) = std::polar(1.0, -2.0 * kPi * row * c / m) * base(c);
    }
    return t;
}

inline cvec simulate_user_pilots(const cvec& b1_bar, const AnglePair& angles, cplx abar, cplx d_c,
                                 const cmat& v_matrix, double noise_power, std::uint64_t seed,
                                 const UpaGeometry& geom) {
    if (v_matrix.cols() != b1_bar.size() || v_matrix.cols() != geom.size())
        throw std::invalid_argument("simulate_user_pilots: dimension mismatch");
    if (noise_power < 0.0) throw std::invalid_argument("simulate_user_pilots: negative noise power");
    cvec u = upa_steering(angles, geom);
    cvec y = abar * (v_matrix * b1_bar.cwiseProduct(u));
    y.array() += d_c;
    if (noise_power > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power / 2.0));
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += cplx(gauss(rng), gauss(rng));
    }
    return y;
}

struct BlockAngleEstimate {
    AnglePair angles;
    cplx a_hat = 0.0;
    cplx d_c_hat = 0.0;
    double objective = 0.0;
    bool low_confidence = false;
};

struct SearchSettings {
    int grid_size = 64;
    int max_refine_iters = 200;
    double diff_step = 1e-6;
    double confidence_threshold = 0.1;  // on the normalized squared coherence
};

namespace detail {

// eta(angles) = P V diag(b1_bar) u(angles) with P the mean-removal projector.
// The projector annihilates the common direct-link offset, leaving a pure
// angle/gain model; the fit maximizes |eta^H y_c|^2 / ||eta||^2.
struct OnlineObjective {
    cmat t_centered;  // P V diag(b1_bar)
    cvec y_centered;
    UpaGeometry geom;

    double ratio(const cvec& eta) const {
        double den = eta.squaredNorm();
        if (den <= 1e-300) return -std::numeric_limits<double>::infinity();
        return std::norm(eta.dot(y_centered)) / den;  // Eigen dot conjugates the left side
    }

    double value(const std::array<double, 2>& x) const {
        cvec u = upa_steering({x[0], x[1]}, geom);
        return ratio(t_centered * u);
    }
};

}  // namespace detail

inline BlockAngleEstimate estimate_block_angles(const cvec& y, const TrainingReflections& training,
                                                const cvec& b1_bar, const UpaGeometry& geom,
                                                const SearchSettings& s = {}) {
    const Eigen::Index tau = training.v_matrix.rows();
    if (tau < 4) throw std::invalid_argument("estimate_block_angles: need at least 4 pilot slots");
    if (y.size() != tau || training.v_matrix.cols() != geom.size() || b1_bar.size() != geom.size())
        throw std::invalid_argument("estimate_block_angles: dimension mismatch");

    cmat t = training.v_matrix * b1_bar.asDiagonal();
    detail::OnlineObjective obj;
    obj.geom = geom;
    obj.t_centered = t.rowwise() - t.colwise().mean();
    obj.y_centered = y.array() - y.mean();

    // Coarse scan over the feasible disk, Kronecker-factored per psi column.
    const double lim = 2.0 * geom.spacing_ratio;
    const int gs = s.grid_size;
    double best_val = -std::numeric_limits<double>::infinity();
    std::array<double, 2> best_x{0.0, 0.0};
    cmat d(tau, geom.m_x);
    for (int jp = 0; jp < gs; ++jp) {
        double psi = -lim + (2.0 * lim * jp + lim) / gs;
        d.setZero();
        for (int p = 0; p < geom.m_x; ++p)
            for (int q = 0; q < geom.m_y; ++q)
                d.col(p) += std::polar(1.0, kPi * psi * q) * obj.t_centered.col(p * geom.m_y + q);
        for (int jv = 0; jv < gs; ++jv) {
            double vt = -lim + (2.0 * lim * jv + lim) / gs;
            if (vt * vt + psi * psi > lim * lim) continue;
            cvec eta = cvec::Zero(tau);
            for (int p = 0; p < geom.m_x; ++p) eta += std::polar(1.0, kPi * vt * p) * d.col(p);
            double val = obj.ratio(eta);
            if (val > best_val) {
                best_val = val;
                best_x = {vt, psi};
            }
        }
    }

    auto res = gradient_ascent_numeric<2>([&](const auto& x) { return obj.value(x); }, best_x,
                                          lim / gs, s.max_refine_iters, s.diff_step);

    BlockAngleEstimate est;
    est.angles = {res.x[0], res.x[1]};
    est.objective = res.value;

    cvec u = upa_steering(est.angles, geom);
    cvec eta = obj.t_centered * u;
    double den = eta.squaredNorm();
    double y_energy = obj.y_centered.squaredNorm();
    est.a_hat = den > 1e-300 ? eta.dot(obj.y_centered) / den : cplx(0.0, 0.0);
    est.d_c_hat = (y - est.a_hat * (t * u)).mean();
    est.low_confidence =
        y_energy <= 1e-300 || den <= 1e-300 || res.value / y_energy < s.confidence_threshold;
    return est;
}

struct CoverageRegion {
    double d_irs = 4.0;
    double spacing_ratio = 0.5;
};

// Along-road coordinate implied by a panel angle estimate and the lane
// distance prior. Runs to +/-inf as the direction approaches the panel plane.
inline double implied_x_from_angles(const AnglePair& a, double z_hint, double spacing_ratio) {
    double lim = 2.0 * spacing_ratio;
    double rest = lim * lim - a.vartheta * a.vartheta - a.psi * a.psi;
    if (rest <= 0.0) {
        if (a.vartheta == 0.0) return -std::numeric_limits<double>::infinity();
        return a.vartheta > 0.0 ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
    }
    return z_hint * a.vartheta / std::sqrt(rest);
}

// True once the implied position has reached the panel's service region,
// which starts half an inter-panel spacing before the panel (closed boundary).
inline bool coverage_check(const AnglePair& angles, double z_hint, const CoverageRegion& region) {
    return implied_x_from_angles(angles, z_hint, region.spacing_ratio) >= -0.5 * region.d_irs;
}

struct AngleTrack {
    struct Entry {
        int block = 0;
        AnglePair angles;
        cplx a_hat = 0.0;
        cplx d_c_hat = 0.0;
        bool low_confidence = false;
    };
    std::vector<Entry> entries;
    int n0 = 30;  // number of most recent blocks retained for the fit

    void push(const Entry& e) {
        entries.push_back(e);
        if (n0 > 0 && static_cast<int>(entries.size()) > n0)
            entries.erase(entries.begin(), entries.end() - n0);
    }
};

// Straight-lane constant-speed motion fitted from the tracked angles. The
// angle sequence only determines the geometry up to a common scale (similar
// triangles), so the fit is resolved against the configured lane distance
// prior when one is provided; predicted angles do not depend on that choice.
struct TrajectoryEstimate {
    double x_ini = 0.0;  // along-road position at the first fitted block
    double y_ini = 0.0;
    double z_ini = 0.0;
    double v = 0.0;
    double block_duration = 0.0;
    int n0 = 0;           // fitted block count
    int last_offset = 0;  // newest tracked block, in block counts past the first fitted one
};

struct TrajectorySearchSettings {
    int grid_size = 64;
    double x_min = -8.0;
    double x_max = 0.0;
    double v_min = 1.0;
    double v_max = 70.0;
    int max_refine_iters = 200;
    double diff_step = 1e-6;
    double z_prior = 0.0;  // > 0 fixes the similarity scale
};

inline TrajectoryEstimate fit_trajectory(const AngleTrack& track, const UpaGeometry& geom,
                                         double block_duration,
                                         const TrajectorySearchSettings& s = {}) {
    if (block_duration <= 0.0) throw std::invalid_argument("fit_trajectory: bad block duration");
    const int used = std::min<int>(track.n0, static_cast<int>(track.entries.size()));
    if (used < 3) throw estimation_failure("fit_trajectory: need at least 3 tracked blocks");
    const int first = static_cast<int>(track.entries.size()) - used;

    const double lim = 2.0 * geom.spacing_ratio;
    std::vector<double> ratio;   // z / x at each retained block
    std::vector<double> tanphi;  // y / x at each retained block
    std::vector<int> offset;     // block distance from the first retained entry
    const int first_block = track.entries[first].block;
    for (int i = 0; i < used; ++i) {
        const AngleTrack::Entry& e = track.entries[first + i];
        const AnglePair& a = e.angles;
        if (a.vartheta == 0.0) continue;  // panel-normal crossing carries no along-road ratio
        double rest = std::max(0.0, lim * lim - a.vartheta * a.vartheta - a.psi * a.psi);
        ratio.push_back(std::sqrt(rest) / a.vartheta);
        tanphi.push_back(a.psi / a.vartheta);
        offset.push_back(e.block - first_block);
    }
    const int n = static_cast<int>(ratio.size());
    if (n < 3) throw estimation_failure("fit_trajectory: too few usable blocks");

    double mean_r = 0.0, var_r = 0.0;
    for (double r : ratio) mean_r += r;
    mean_r /= n;
    for (double r : ratio) var_r += (r - mean_r) * (r - mean_r);
    if (var_r / n <= 1e-20 * mean_r * mean_r)
        throw estimation_failure("fit_trajectory: stationary angles, motion unidentifiable");

    // Least-squares in (x_ini, v): project the per-block inverse positions
    // onto the observed ratios. Optimized in box-normalized coordinates.
    auto objective = [&](const std::array<double, 2>& c) {
        double x0 = s.x_min + c[0] * (s.x_max - s.x_min);
        double v = s.v_min + c[1] * (s.v_max - s.v_min);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i) {
            double pos = x0 + offset[i] * v * block_duration;
            if (std::abs(pos) < 1e-9) return -std::numeric_limits<double>::infinity();
            double e = 1.0 / pos;
            num += e * ratio[i];
            den += e * e;
        }
        return num * num / den;
    };

    const int gs = s.grid_size;
    std::array<double, 2> best{0.5, 0.5};
    double best_val = -std::numeric_limits<double>::infinity();
    for (int ix = 0; ix < gs; ++ix)
        for (int iv = 0; iv < gs; ++iv) {
            std::array<double, 2> c{(ix + 0.5) / gs, (iv + 0.5) / gs};
            double val = objective(c);
            if (val > best_val) {
                best_val = val;
                best = c;
            }
        }
    if (!std::isfinite(best_val))
        throw estimation_failure("fit_trajectory: no feasible trajectory in the search box");
    auto res = gradient_ascent_numeric<2>(objective, best, 0.5 / gs, s.max_refine_iters, s.diff_step);

    TrajectoryEstimate traj;
    traj.block_duration = block_duration;
    traj.n0 = used;
    traj.last_offset = track.entries.back().block - first_block;
    double x0 = s.x_min + res.x[0] * (s.x_max - s.x_min);
    traj.v = s.v_min + res.x[1] * (s.v_max - s.v_min);
    traj.x_ini = x0;

    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
        double e = 1.0 / (x0 + offset[i] * traj.v * block_duration);
        num += e * ratio[i];
        den += e * e;
    }
    traj.z_ini = num / den;
    if (traj.z_ini <= 0.0) throw estimation_failure("fit_trajectory: inconsistent lane side");
    if (s.z_prior > 0.0) {
        double scale = s.z_prior / traj.z_ini;
        traj.x_ini *= scale;
        traj.v *= scale;
        traj.z_ini = s.z_prior;
    }
    double y_acc = 0.0;
    for (int i = 0; i < n; ++i)
        y_acc += tanphi[i] * (traj.x_ini + offset[i] * traj.v * block_duration);
    traj.y_ini = y_acc / n;
    return traj;
}

// Angles n blocks past the newest fitted block (n = 0 is that block itself).
inline AnglePair predict_angles(const TrajectoryEstimate& traj, int n, const UpaGeometry& geom) {
    double x = traj.x_ini + (n + traj.last_offset) * traj.v * traj.block_duration;
    return angles_from_position(x, traj.y_ini, traj.z_ini, geom.spacing_ratio);
}

}  // namespace irssim

#endif
