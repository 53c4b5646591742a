#ifndef IRSSIM_SIM_ENGINE_HPP
#define IRSSIM_SIM_ENGINE_HPP

#include <atomic>
#include <thread>

#include "irssim/beamform.hpp"
#include "irssim/offline_estimation.hpp"
#include "irssim/online_estimation.hpp"
#include "irssim/scenario.hpp"

namespace irssim {

// Seed streams hung off the per-run seed. Every random consumer draws from
// its own stream, so no scheme's randomness shifts when another is added or
// removed and all schemes see the same channel realization.
namespace seed_stream {
constexpr std::uint64_t multipath = 1;
constexpr std::uint64_t direct_offset = 3;
constexpr std::uint64_t offline_c0 = 4;
constexpr std::uint64_t offline_c2 = 5;
constexpr std::uint64_t offline_c1 = 6;
constexpr std::uint64_t online_pilots = 7;
constexpr std::uint64_t ao_restarts = 8;
constexpr std::uint64_t direct_base = 200;  // plus receive antenna index
}  // namespace seed_stream

// One drive-by: static panel-to-receiver channel, controller responses, and
// the fading generators, all addressable at any block index.
struct ChannelRealization {
    ScenarioConfig cfg;
    std::uint64_t seed = 0;
    cmat g;
    cvec b0, b1, b2;
    std::vector<JakesGenerator> direct_fading;  // unit variance, scaled per block
    JakesGenerator offset_fading;
    double vartheta_dot_nominal = 0.0;  // first controller's panel x-phase

    Vec3 user_position(int t) const { return cfg.user_position(t); }

    AnglePair true_angles(int t) const {
        return angles_from_position(user_position(t), cfg.spacing_ratio);
    }

    cplx a_los(int t) const {
        double r = user_position(t).norm();
        double beta = path_loss(r, cfg.pl_exp_user_irs, cfg.beta0_db);
        return std::sqrt(beta) * std::polar(1.0, -2.0 * kPi * r / cfg.wavelength());
    }

    cvec q(int t) const { return a_los(t) * upa_steering(true_angles(t), cfg.geometry()); }

    cmat q_cascade(int t) const { return cascade(g, q(t)); }

    cvec d(int t) const {
        cvec out = cvec::Zero(cfg.n_b);
        if (cfg.disable_direct) return out;
        double amp = std::sqrt(
            path_loss(distance(user_position(t), cfg.bs_position), cfg.pl_exp_user_bs, cfg.beta0_db));
        for (int i = 0; i < cfg.n_b; ++i) out(i) = amp * direct_fading[i].at(t);
        return out;
    }

    cplx d_c(int t) const {
        double amp = std::sqrt(
            path_loss(distance(user_position(t), cfg.c1_position), cfg.pl_exp_user_c1, cfg.beta0_db));
        return amp * offset_fading.at(t);
    }
};

inline ChannelRealization make_realization(const ScenarioConfig& cfg, std::uint64_t run_seed) {
    cfg.validate();
    ChannelRealization re;
    re.cfg = cfg;
    re.seed = run_seed;
    UpaGeometry geom = cfg.geometry();
    double pl_g = path_loss(cfg.bs_position.norm(), cfg.pl_exp_irs_bs, cfg.beta0_db);
    MultipathChannel mp = make_random_multipath(derive_seed(run_seed, seed_stream::multipath),
                                                cfg.n_paths, cfg.n_b, geom, pl_g, 0.25);
    re.g = assemble_multipath(mp);
    re.b1 = near_field_los(cfg.c1_position, geom, cfg.wavelength(), cfg.beta0_db);
    re.b0 = assemble_los(far_field_los(cfg.c0_position(), geom, cfg.wavelength(), cfg.beta0_db));
    re.b2 = assemble_los(far_field_los(cfg.c2_position(), geom, cfg.wavelength(), cfg.beta0_db));
    re.vartheta_dot_nominal = angles_from_position(cfg.c0_position(), cfg.spacing_ratio).vartheta;
    double fm = cfg.max_doppler();
    double tb = cfg.block_duration_eff();
    for (int i = 0; i < cfg.n_b; ++i)
        re.direct_fading.push_back(
            make_jakes_generator(derive_seed(run_seed, seed_stream::direct_base + i), fm, tb, 1.0));
    re.offset_fading = make_jakes_generator(derive_seed(run_seed, seed_stream::direct_offset), fm, tb, 1.0);
    return re;
}

struct RunSummary {
    std::vector<double> rate_per_block;  // service window only
    std::vector<double> gamma_per_block;
    double mean_rate = 0.0;
    double mean_gamma = 0.0;
    double angle_rmse = std::numeric_limits<double>::quiet_NaN();
    bool degraded = false;
    bool forced_trigger = false;
    int trigger_block = 0;  // service index at the trajectory fit, <= 0 if early or absent
};

namespace detail {

inline double block_gamma(const ChannelRealization& re, int t, const cvec* nu) {
    cvec d = re.d(t);
    if (re.cfg.disable_irs || !nu) return d.squaredNorm();
    return effective_gain(re.q_cascade(t), *nu, d);
}

inline void finalize_summary(RunSummary& s, double noise, int s_slots, double gap_db,
                             const std::vector<int>& overhead) {
    const int n = static_cast<int>(s.gamma_per_block.size());
    s.rate_per_block.resize(n);
    double rate_acc = 0.0, gamma_acc = 0.0;
    for (int i = 0; i < n; ++i) {
        int oh = std::min(overhead[i], s_slots);
        s.rate_per_block[i] = achievable_rate(s.gamma_per_block[i], noise, oh, s_slots, gap_db);
        rate_acc += s.rate_per_block[i];
        gamma_acc += s.gamma_per_block[i];
    }
    s.mean_rate = n > 0 ? rate_acc / n : 0.0;
    s.mean_gamma = n > 0 ? gamma_acc / n : 0.0;
}

inline double angle_error_sq(const AnglePair& a, const AnglePair& b) {
    double dv = wrap_array_phase(a.vartheta - b.vartheta);
    double dp = wrap_array_phase(a.psi - b.psi);
    return dv * dv + dp * dp;
}

}  // namespace detail

struct OfflineResult {
    cmat g_bar;
    cvec b1_bar;
    bool degraded = false;
};

// Two controller sounding passes estimate the static cascade up to a common
// scale; the serving controller's pass then yields its own composition.
// Failures degrade to the single-controller estimate rather than aborting.
inline OfflineResult run_offline_stage(const ChannelRealization& re) {
    const ScenarioConfig& cfg = re.cfg;
    OfflineResult out;
    if (cfg.perfect_offline) {
        out.g_bar = re.g;
        out.b1_bar = re.b1;
        return out;
    }
    UpaGeometry geom = cfg.geometry();
    cmat v = dft_training_matrix(cfg.m());
    double noise = cfg.controller_noise_power();
    PilotBatch batch0 = simulate_controller_pilots(re.g, re.b0, v, noise,
                                                   derive_seed(re.seed, seed_stream::offline_c0));
    PilotBatch batch2 = simulate_controller_pilots(re.g, re.b2, v, noise,
                                                   derive_seed(re.seed, seed_stream::offline_c2));
    PilotBatch batch1 = simulate_controller_pilots(re.g, re.b1, v, noise,
                                                   derive_seed(re.seed, seed_stream::offline_c1));

    CascadedPathEstimate c0 = estimate_cascaded_paths(decascade(batch0), geom, cfg.n_b, cfg.n_paths);
    CascadedPathEstimate c2 = estimate_cascaded_paths(decascade(batch2), geom, cfg.n_b, cfg.n_paths);
    std::vector<PathParams> combined;
    try {
        if (c0.degenerate || c2.degenerate)
            throw estimation_failure("run_offline_stage: degenerate sounding pass");
        combined = symmetric_combine(c0, c2, re.vartheta_dot_nominal);
    } catch (const estimation_failure&) {
        out.degraded = true;  // fall back to the single-controller view
        combined = c0.paths;
        for (auto& p : combined)
            p.irs_angles.vartheta = wrap_array_phase(p.irs_angles.vartheta - re.vartheta_dot_nominal);
    }
    out.g_bar = reconstruct_scaled_g(combined, cfg.n_b, geom);
    out.b1_bar = reconstruct_scaled_b1(estimate_r1(batch1), out.g_bar);
    if (out.g_bar.norm() == 0.0 || !out.g_bar.allFinite()) {
        out.degraded = true;
        out.g_bar = cmat::Ones(cfg.n_b, cfg.m());
    }
    if (out.b1_bar.norm() == 0.0 || !out.b1_bar.allFinite()) {
        out.degraded = true;
        out.b1_bar = cvec::Ones(cfg.m());
    }
    return out;
}

// The full proposed pipeline: off-line sounding, per-block angle tracking
// with tau pilot slots, coverage-triggered trajectory fit, then pilot-free
// prediction for the rest of the pass. Never reads the feedback delay.
inline RunSummary run_proposed(const ChannelRealization& re) {
    const ScenarioConfig& cfg = re.cfg;
    RunSummary out;
    const int t_n0 = cfg.t_service_start();
    const int n_blocks = cfg.n_service_blocks();
    const int s_slots = cfg.s_slots();
    const double noise = cfg.noise_power();

    if (cfg.disable_irs) {  // nothing to steer; pilots still occupy their slots
        std::vector<int> overhead(n_blocks, cfg.tau);
        for (int n = 1; n <= n_blocks; ++n)
            out.gamma_per_block.push_back(detail::block_gamma(re, t_n0 + n, nullptr));
        detail::finalize_summary(out, noise, s_slots, cfg.gap_db, overhead);
        return out;
    }

    UpaGeometry geom = cfg.geometry();
    OfflineResult off = run_offline_stage(re);
    out.degraded = off.degraded;

    AoSettings ao;
    ao.restart_seed = derive_seed(re.seed, seed_stream::ao_restarts);
    cvec nu_bar = initial_beamforming(off.g_bar, ao).coefficients;

    SearchSettings track_settings;
    TrajectorySearchSettings fit_settings;
    fit_settings.x_min = -2.0 * cfg.d_irs;
    fit_settings.x_max = 0.0;
    fit_settings.z_prior = cfg.user_z;
    CoverageRegion region{cfg.d_irs, cfg.spacing_ratio};

    AngleTrack track;
    track.n0 = cfg.n0;
    AnglePair current_est{0.0, 0.0};
    bool have_est = false;
    bool predicting = false;
    bool fit_done = false;
    TrajectoryEstimate traj;
    int t_fit = 0;
    const int t_forced = t_n0 + std::max(1, n_blocks / 4);
    const std::uint64_t pilot_base = derive_seed(re.seed, seed_stream::online_pilots);

    // The user's uplink pilots occupy tau slots of every block whether or not
    // the controller still reads them, so the overhead factor is constant.
    std::vector<int> overhead(n_blocks, cfg.tau);
    double err_acc = 0.0;
    int err_count = 0;

    for (int t = 0; t <= t_n0 + n_blocks; ++t) {
        AnglePair data_angles = current_est;
        if (predicting) {
            data_angles = predict_angles(traj, t - t_fit, geom);
        } else {
            ReflectionPattern service =
                have_est ? realtime_reflection({nu_bar}, current_est, geom) : ReflectionPattern{nu_bar};
            TrainingReflections train =
                online_training_reflections(cfg.tau, cfg.m(), service.coefficients);
            cvec y = simulate_user_pilots(re.b1, re.true_angles(t), re.a_los(t), re.d_c(t),
                                          train.v_matrix, noise, derive_seed(pilot_base, t), geom);
            BlockAngleEstimate est =
                estimate_block_angles(y, train, off.b1_bar, geom, track_settings);
            if (!est.low_confidence) {
                current_est = est.angles;
                have_est = true;
                track.push({t, est.angles, est.a_hat, est.d_c_hat, false});
            }
            data_angles = current_est;

            bool covered = have_est && coverage_check(current_est, cfg.user_z, region);
            if ((covered || t >= t_forced) && !fit_done) {
                try {
                    traj = fit_trajectory(track, geom, cfg.block_duration_eff(), fit_settings);
                    predicting = true;
                    fit_done = true;
                    t_fit = t;
                    out.trigger_block = t - t_n0;
                    out.forced_trigger = !covered;
                } catch (const estimation_failure&) {
                    if (t >= t_forced) out.degraded = true;  // keep tracking instead
                }
            }
        }

        int n = t - t_n0;
        if (n >= 1 && n <= n_blocks) {
            cvec nu = realtime_reflection({nu_bar}, data_angles, geom).coefficients;
            out.gamma_per_block.push_back(detail::block_gamma(re, t, &nu));
            err_acc += detail::angle_error_sq(data_angles, re.true_angles(t));
            ++err_count;
        }
    }

    detail::finalize_summary(out, noise, s_slots, cfg.gap_db, overhead);
    if (err_count > 0) out.angle_rmse = std::sqrt(err_acc / (2.0 * err_count));
    return out;
}

// Genie bound: per-block reflection optimized against the true channel.
// Warm starts keep the per-block solve cheap; the steered static design and
// the previous block's solution are always offered as candidates.
inline RunSummary run_upper_bound(const ChannelRealization& re) {
    const ScenarioConfig& cfg = re.cfg;
    RunSummary out;
    const int t_n0 = cfg.t_service_start();
    const int n_blocks = cfg.n_service_blocks();
    const int oh = cfg.upper_bound_zero_overhead ? 0 : cfg.tau;
    std::vector<int> overhead(n_blocks, oh);

    if (cfg.disable_irs) {
        for (int n = 1; n <= n_blocks; ++n)
            out.gamma_per_block.push_back(detail::block_gamma(re, t_n0 + n, nullptr));
        detail::finalize_summary(out, cfg.noise_power(), cfg.s_slots(), cfg.gap_db, overhead);
        return out;
    }

    UpaGeometry geom = cfg.geometry();
    AoSettings base;
    base.restart_seed = derive_seed(re.seed, seed_stream::ao_restarts);
    cvec nu_static = initial_beamforming(re.g, base).coefficients;

    cvec prev;
    for (int n = 1; n <= n_blocks; ++n) {
        int t = t_n0 + n;
        cmat q = re.q_cascade(t);
        cvec d = re.d(t);
        AoSettings s;
        s.restart_seed = base.restart_seed;
        s.use_svd_start = n == 1;
        s.n_random_restarts = n == 1 ? 2 : 0;
        s.initial_candidates.push_back(
            realtime_reflection({nu_static}, re.true_angles(t), geom).coefficients);
        if (prev.size() > 0) s.initial_candidates.push_back(prev);
        AoResult res = ao_maximize_quadratic(q, &d, s);
        prev = res.pattern.coefficients;
        out.gamma_per_block.push_back(res.objective);
    }
    detail::finalize_summary(out, cfg.noise_power(), cfg.s_slots(), cfg.gap_db, overhead);
    return out;
}

// Re-estimation benchmarks: the cascaded channel is re-acquired while the
// user is served, so every block pays an estimation overhead and the design
// trails the channel by the feedback delay.
enum class CascadedVariant {
    first_block_full,  // full element sounding once, refresh afterwards
    offline_g          // static part known, per-block refresh only
};

inline int benchmark_overhead(CascadedVariant variant, int n, int m, int n_b) {
    int refresh = 1 + (m + n_b - 1) / n_b;
    if (variant == CascadedVariant::first_block_full && n == 1) return m + 1;
    return refresh;
}

inline std::vector<RunSummary> run_benchmark_cascaded_deltas(const ChannelRealization& re,
                                                             CascadedVariant variant,
                                                             const std::vector<int>& deltas) {
    const ScenarioConfig& cfg = re.cfg;
    const int t_n0 = cfg.t_service_start();
    const int n_blocks = cfg.n_service_blocks();
    UpaGeometry geom = cfg.geometry();

    std::vector<cvec> designs(n_blocks + 1);
    if (!cfg.disable_irs) {
        AoSettings base;
        base.restart_seed = derive_seed(re.seed, seed_stream::ao_restarts);
        cvec nu_static = initial_beamforming(re.g, base).coefficients;
        cvec prev;
        for (int n = 1; n <= n_blocks; ++n) {
            int t = t_n0 + n;
            cmat q = re.q_cascade(t);
            cvec d = re.d(t);
            AoSettings s;
            s.restart_seed = base.restart_seed;
            s.use_svd_start = n == 1;
            s.n_random_restarts = n == 1 ? 2 : 0;
            s.initial_candidates.push_back(
                realtime_reflection({nu_static}, re.true_angles(t), geom).coefficients);
            if (prev.size() > 0) s.initial_candidates.push_back(prev);
            prev = ao_maximize_quadratic(q, &d, s).pattern.coefficients;
            designs[n] = prev;
        }
    }

    std::vector<RunSummary> out(deltas.size());
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        if (deltas[k] < 0) throw std::invalid_argument("run_benchmark_cascaded_deltas: negative delay");
        std::vector<int> overhead;
        for (int n = 1; n <= n_blocks; ++n) {
            int t = t_n0 + n;
            double gamma;
            if (cfg.disable_irs) {
                gamma = detail::block_gamma(re, t, nullptr);
            } else {
                const cvec& nu = designs[std::max(1, n - deltas[k])];
                gamma = detail::block_gamma(re, t, &nu);
            }
            out[k].gamma_per_block.push_back(gamma);
            overhead.push_back(benchmark_overhead(variant, n, cfg.m(), cfg.n_b));
        }
        detail::finalize_summary(out[k], cfg.noise_power(), cfg.s_slots(), cfg.gap_db, overhead);
    }
    return out;
}

inline RunSummary run_benchmark_cascaded(const ChannelRealization& re, CascadedVariant variant,
                                         int delta) {
    return run_benchmark_cascaded_deltas(re, variant, {delta}).front();
}

inline RunSummary run_no_irs(const ChannelRealization& re) {
    const ScenarioConfig& cfg = re.cfg;
    RunSummary out;
    const int t_n0 = cfg.t_service_start();
    const int n_blocks = cfg.n_service_blocks();
    std::vector<int> overhead(n_blocks, cfg.tau);  // pilots occupy their slots here too
    for (int n = 1; n <= n_blocks; ++n)
        out.gamma_per_block.push_back(re.d(t_n0 + n).squaredNorm());
    detail::finalize_summary(out, cfg.noise_power(), cfg.s_slots(), cfg.gap_db, overhead);
    return out;
}

enum class Scheme { proposed, upper_bound, benchmark_first_block_full, benchmark_offline_g, no_irs };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::proposed: return "proposed";
        case Scheme::upper_bound: return "upper_bound";
        case Scheme::benchmark_first_block_full: return "benchmark_first_block_full";
        case Scheme::benchmark_offline_g: return "benchmark_offline_g";
        case Scheme::no_irs: return "no_irs";
    }
    return "unknown";
}

struct MonteCarloCell {
    Scheme scheme = Scheme::proposed;
    int delta = 0;
    double mean_rate = 0.0;
    double std_rate = 0.0;
    double mean_gamma = 0.0;  // linear
    double angle_rmse = std::numeric_limits<double>::quiet_NaN();
    int degraded_runs = 0;
    int forced_triggers = 0;
    std::vector<double> run_mean_rates;
    std::vector<double> mean_rate_per_block;
};

struct MonteCarloResult {
    std::vector<MonteCarloCell> cells;
    int n_runs = 0;
};

// Runs are independent and preallocated per slot, so the result is
// byte-identical for any worker count.
inline MonteCarloResult monte_carlo(const ScenarioConfig& cfg, int n_runs,
                                    const std::vector<Scheme>& schemes, int n_workers = 1,
                                    std::vector<int> deltas = {}) {
    cfg.validate();
    if (n_runs < 1) throw std::invalid_argument("monte_carlo: need at least one run");
    if (deltas.empty()) deltas.push_back(cfg.feedback_delay_blocks);

    struct CellKey {
        Scheme scheme;
        int delta;
    };
    std::vector<CellKey> keys;
    for (Scheme s : schemes) {
        bool is_benchmark =
            s == Scheme::benchmark_first_block_full || s == Scheme::benchmark_offline_g;
        if (is_benchmark)
            for (int d : deltas) keys.push_back({s, d});
        else
            keys.push_back({s, 0});
    }

    std::vector<std::vector<RunSummary>> slots(n_runs);
    auto compute_run = [&](int r) {
        ChannelRealization re = make_realization(cfg, derive_seed(cfg.seed, r));
        std::vector<RunSummary> row;
        for (Scheme s : schemes) {
            switch (s) {
                case Scheme::proposed:
                    row.push_back(run_proposed(re));
                    break;
                case Scheme::upper_bound:
                    row.push_back(run_upper_bound(re));
                    break;
                case Scheme::benchmark_first_block_full: {
                    auto per_delta =
                        run_benchmark_cascaded_deltas(re, CascadedVariant::first_block_full, deltas);
                    for (auto& s2 : per_delta) row.push_back(std::move(s2));
                    break;
                }
                case Scheme::benchmark_offline_g: {
                    auto per_delta =
                        run_benchmark_cascaded_deltas(re, CascadedVariant::offline_g, deltas);
                    for (auto& s2 : per_delta) row.push_back(std::move(s2));
                    break;
                }
                case Scheme::no_irs:
                    row.push_back(run_no_irs(re));
                    break;
            }
        }
        slots[r] = std::move(row);
    };

    if (n_workers <= 1) {
        for (int r = 0; r < n_runs; ++r) compute_run(r);
    } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (int r = next.fetch_add(1); r < n_runs; r = next.fetch_add(1)) compute_run(r);
        };
        std::vector<std::thread> pool;
        int count = std::min(n_workers, n_runs);
        pool.reserve(count);
        for (int w = 0; w < count; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    MonteCarloResult result;
    result.n_runs = n_runs;
    for (std::size_t c = 0; c < keys.size(); ++c) {
        MonteCarloCell cell;
        cell.scheme = keys[c].scheme;
        cell.delta = keys[c].delta;
        double rate_acc = 0.0, gamma_acc = 0.0, err_sq_acc = 0.0;
        int err_runs = 0;
        for (int r = 0; r < n_runs; ++r) {
            const RunSummary& s = slots[r][c];
            cell.run_mean_rates.push_back(s.mean_rate);
            rate_acc += s.mean_rate;
            gamma_acc += s.mean_gamma;
            if (!std::isnan(s.angle_rmse)) {
                err_sq_acc += s.angle_rmse * s.angle_rmse;
                ++err_runs;
            }
            if (s.degraded) ++cell.degraded_runs;
            if (s.forced_trigger) ++cell.forced_triggers;
            if (cell.mean_rate_per_block.empty())
                cell.mean_rate_per_block.assign(s.rate_per_block.size(), 0.0);
            for (std::size_t i = 0; i < s.rate_per_block.size(); ++i)
                cell.mean_rate_per_block[i] += s.rate_per_block[i] / n_runs;
        }
        cell.mean_rate = rate_acc / n_runs;
        cell.mean_gamma = gamma_acc / n_runs;
        if (err_runs > 0) cell.angle_rmse = std::sqrt(err_sq_acc / err_runs);
        double var = 0.0;
        for (double r : cell.run_mean_rates) var += (r - cell.mean_rate) * (r - cell.mean_rate);
        cell.std_rate = n_runs > 1 ? std::sqrt(var / (n_runs - 1)) : 0.0;
        result.cells.push_back(std::move(cell));
    }
    return result;
}

}  // namespace irssim

#endif
