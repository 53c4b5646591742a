#ifndef IRSSIM_CHANNEL_HPP
#define IRSSIM_CHANNEL_HPP

#include <random>

#include "irssim/geometry.hpp"

namespace irssim {

struct PathParams {
    cplx gain;
    double bs_phase = 0.0;  // ULA array phase at the receiver
    AnglePair irs_angles;   // UPA array phases at the panel
};

struct MultipathChannel {
    std::vector<PathParams> paths;
    int n_b = 1;
    UpaGeometry geom;
};

struct LosChannel {
    cplx gain;
    AnglePair angles;
    UpaGeometry geom;
};

// Sum over paths of gain * e(bs_phase) * u(irs_angles)^T, one rank-1 term per path.
inline cmat assemble_multipath(const MultipathChannel& ch) {
    if (ch.paths.empty()) throw std::invalid_argument("assemble_multipath: no paths");
    if (ch.n_b < 1) throw std::invalid_argument("assemble_multipath: n_b must be >= 1");
    cmat g = cmat::Zero(ch.n_b, ch.geom.size());
    for (const auto& p : ch.paths) {
        cvec e = ula_steering(p.bs_phase, ch.n_b);
        cvec u = upa_steering(p.irs_angles, ch.geom);
        g.noalias() += p.gain * e * u.transpose();
    }
    return g;
}

inline cvec assemble_los(const LosChannel& ch) {
    return ch.gain * upa_steering(ch.angles, ch.geom);
}

// Q = G diag(q).
inline cmat cascade(const cmat& g, const cvec& q) {
    if (g.cols() != q.size()) throw std::invalid_argument("cascade: dimension mismatch");
    return g * q.asDiagonal();
}

inline void require_unit_modulus(const cvec& nu, const char* what) {
    for (Eigen::Index m = 0; m < nu.size(); ++m)
        if (std::abs(std::abs(nu(m)) - 1.0) > 1e-9)
            throw std::invalid_argument(std::string(what) + ": reflection coefficients must be unit modulus");
}

inline cvec effective_channel(const cmat& q_cascaded, const cvec& nu, const cvec& d) {
    if (q_cascaded.cols() != nu.size() || q_cascaded.rows() != d.size())
        throw std::invalid_argument("effective_channel: dimension mismatch");
    require_unit_modulus(nu, "effective_channel");
    return q_cascaded * nu + d;
}

// Linear power gain at distance d meters; reference gain beta0 at 1 m.
// Distances below 1 m are clamped to keep the model bounded.
inline double path_loss(double distance_m, double exponent, double beta0_db, bool* clamped = nullptr) {
    if (clamped) *clamped = false;
    if (distance_m < 1.0) {
        distance_m = 1.0;
        if (clamped) *clamped = true;
    }
    return db_to_linear(beta0_db) * std::pow(distance_m, -exponent);
}

// Sum-of-sinusoids fading generator. Scatterer angles are a randomly rotated
// uniform comb, so the ensemble lag correlation is variance * J0(2 pi fmax k Tb)
// and each sequence stays evaluable at any block index without storage.
struct JakesGenerator {
    double variance = 1.0;
    std::vector<double> omega;  // per-scatterer angular Doppler, rad per block
    std::vector<double> phase;

    cplx at(long block) const {
        cplx acc = 0.0;
        for (std::size_t k = 0; k < omega.size(); ++k)
            acc += std::polar(1.0, omega[k] * static_cast<double>(block) + phase[k]);
        return std::sqrt(variance / static_cast<double>(omega.size())) * acc;
    }
};

inline JakesGenerator make_jakes_generator(std::uint64_t seed, double max_doppler,
                                           double block_duration, double variance,
                                           int n_scatterers = 64) {
    if (variance < 0.0) throw std::invalid_argument("make_jakes_generator: negative variance");
    if (n_scatterers < 1) throw std::invalid_argument("make_jakes_generator: need scatterers");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    JakesGenerator gen;
    gen.variance = variance;
    gen.omega.resize(n_scatterers);
    gen.phase.resize(n_scatterers);
    double rot = unif(rng);
    for (int k = 0; k < n_scatterers; ++k) {
        double alpha = 2.0 * kPi * (k + rot) / n_scatterers;
        gen.omega[k] = 2.0 * kPi * max_doppler * std::cos(alpha) * block_duration;
        gen.phase[k] = 2.0 * kPi * unif(rng);
    }
    return gen;
}

struct FadingProcess {
    std::vector<cplx> sequence;
    double max_doppler = 0.0;
    double block_duration = 0.0;
    double variance = 1.0;
};

// dims independent sequences sharing one base seed.
inline std::vector<FadingProcess> jakes_process(std::uint64_t seed, int n_blocks, double max_doppler,
                                                double block_duration, double variance, int dims) {
    if (n_blocks < 0 || dims < 1) throw std::invalid_argument("jakes_process: bad dimensions");
    std::vector<FadingProcess> out(dims);
    for (int d = 0; d < dims; ++d) {
        JakesGenerator gen = make_jakes_generator(derive_seed(seed, d), max_doppler, block_duration, variance);
        out[d].max_doppler = max_doppler;
        out[d].block_duration = block_duration;
        out[d].variance = variance;
        out[d].sequence.resize(n_blocks);
        for (int n = 0; n < n_blocks; ++n) out[d].sequence[n] = gen.at(n);
    }
    return out;
}

inline Vec3 element_position(const UpaGeometry& geom, double wavelength, int p, int q) {
    double d = geom.spacing_ratio * wavelength;
    return {(p - 0.5 * (geom.m_x - 1)) * d, (q - 0.5 * (geom.m_y - 1)) * d, 0.0};
}

// Spherical-wave LoS vector for a source close to the panel: per-element
// exact distance sets both the phase and the 1/r amplitude roll-off.
// For sources far from the panel it converges to gain * upa_steering(...).
inline cvec near_field_los(const Vec3& source, const UpaGeometry& geom, double wavelength,
                           double beta0_db) {
    if (wavelength <= 0.0) throw std::invalid_argument("near_field_los: wavelength must be positive");
    double amp0 = std::sqrt(db_to_linear(beta0_db));
    cvec b(geom.size());
    for (int p = 0; p < geom.m_x; ++p)
        for (int q = 0; q < geom.m_y; ++q) {
            double r = distance(source, element_position(geom, wavelength, p, q));
            if (r < 1e-9) throw std::invalid_argument("near_field_los: source on the panel");
            b(p * geom.m_y + q) = (amp0 / r) * std::polar(1.0, -2.0 * kPi * r / wavelength);
        }
    return b;
}

// Far-field LoS from a source position: plane-wave phases with a single
// common gain anchored at the source-to-center distance.
inline LosChannel far_field_los(const Vec3& source, const UpaGeometry& geom, double wavelength,
                                double beta0_db) {
    double r = source.norm();
    if (r == 0.0) throw std::invalid_argument("far_field_los: zero-norm position");
    LosChannel ch;
    ch.geom = geom;
    ch.angles = angles_from_position(source, geom.spacing_ratio);
    ch.gain = (std::sqrt(db_to_linear(beta0_db)) / r) * std::polar(1.0, -2.0 * kPi * r / wavelength);
    return ch;
}

// L-path draw with per-path complex Gaussian gains rescaled so the summed
// path power equals total_power exactly. Angles are uniform over their
// principal ranges; min_separation (same units as array phases) optionally
// enforces pairwise separation on every coordinate via rejection.
inline MultipathChannel make_random_multipath(std::uint64_t seed, int n_paths, int n_b,
                                              const UpaGeometry& geom, double total_power,
                                              double min_separation = 0.0) {
    if (n_paths < 1) throw std::invalid_argument("make_random_multipath: need paths");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double lim = 2.0 * geom.spacing_ratio;

    MultipathChannel ch;
    ch.n_b = n_b;
    ch.geom = geom;
    for (int l = 0; l < n_paths; ++l) {
        PathParams p;
        for (int attempt = 0;; ++attempt) {
            p.bs_phase = unif(rng);
            // uniform over the feasible disk by rejection
            double vt, ps;
            do {
                vt = lim * unif(rng);
                ps = lim * unif(rng);
            } while (vt * vt + ps * ps > lim * lim);
            p.irs_angles = {vt, ps};
            bool ok = true;
            for (const auto& prev : ch.paths) {
                bool close = std::abs(wrap_array_phase(prev.bs_phase - p.bs_phase)) < min_separation &&
                             std::abs(wrap_array_phase(prev.irs_angles.vartheta - p.irs_angles.vartheta)) < min_separation &&
                             std::abs(wrap_array_phase(prev.irs_angles.psi - p.irs_angles.psi)) < min_separation;
                if (close) { ok = false; break; }
            }
            if (ok || attempt > 10000) break;
        }
        p.gain = cplx(gauss(rng), gauss(rng));
        ch.paths.push_back(p);
    }
    double raw = 0.0;
    for (const auto& p : ch.paths) raw += std::norm(p.gain);
    double scale = std::sqrt(total_power / raw);
    for (auto& p : ch.paths) p.gain *= scale;
    return ch;
}

}  // namespace irssim

#endif
