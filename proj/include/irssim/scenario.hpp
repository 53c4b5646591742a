#ifndef IRSSIM_SCENARIO_HPP
#define IRSSIM_SCENARIO_HPP

#include "irssim/geometry.hpp"

namespace irssim {

// Full description of one deployment: panel, endpoints, link budget, motion.
// Distances in meters, powers in dBm, durations in seconds. The panel is
// centered at the origin with the road along x and the lane at z = user_z.
struct ScenarioConfig {
    double carrier_frequency = 5.9e9;
    double bandwidth = 1e6;
    double vehicle_speed = 50.0;
    double block_duration = 1e-4;  // 0 selects one tenth of the coherence time
    int n_b = 16;
    int m_x = 8;
    int m_y = 8;
    double spacing_ratio = 0.5;
    double d_irs = 4.0;  // panel-to-panel spacing along the road
    int tau = 10;
    int n0 = 30;
    double transmit_power_dbm = 12.0;
    double controller_power_dbm = 12.0;
    double noise_dbm = -70.0;
    double gap_db = 9.0;
    double beta0_db = -30.0;  // reference loss at 1 m
    double pl_exp_irs_bs = 2.1;
    double pl_exp_user_bs = 2.5;
    double pl_exp_user_irs = 2.0;
    double pl_exp_user_c1 = 2.5;
    Vec3 bs_position{8.0, 5.0, 12.0};
    Vec3 c1_position{0.0, 0.3, 0.3};
    double controller_cross_distance = 3.5;
    double user_y = 0.6;
    double user_z = 2.0;
    double user_start_x = std::numeric_limits<double>::quiet_NaN();  // NaN selects auto
    int n_paths = 3;
    std::uint64_t seed = 1;
    int feedback_delay_blocks = 0;
    bool perfect_offline = false;
    bool upper_bound_zero_overhead = false;
    bool disable_irs = false;
    bool disable_direct = false;

    UpaGeometry geometry() const { return {m_x, m_y, spacing_ratio}; }
    int m() const { return m_x * m_y; }
    double wavelength() const { return kSpeedOfLight / carrier_frequency; }
    double max_doppler() const { return vehicle_speed * carrier_frequency / kSpeedOfLight; }

    double block_duration_eff() const {
        return block_duration > 0.0 ? block_duration : 1.0 / (10.0 * max_doppler());
    }

    // Symbols per block; tau of them are pilots while tracking.
    int s_slots() const {
        return static_cast<int>(std::floor(block_duration_eff() * bandwidth + 1e-9));
    }

    int n_service_blocks() const {
        return static_cast<int>(std::ceil(d_irs / (vehicle_speed * block_duration_eff()) - 1e-9));
    }

    // Noise powers are normalized by the corresponding transmit power so the
    // channel gains can be used directly as receive SNR numerators.
    double noise_power() const { return db_to_linear(noise_dbm - transmit_power_dbm); }
    double controller_noise_power() const { return db_to_linear(noise_dbm - controller_power_dbm); }

    Vec3 c0_position() const { return {0.5 * d_irs, 0.0, controller_cross_distance}; }
    Vec3 c2_position() const { return {-0.5 * d_irs, 0.0, controller_cross_distance}; }

    double user_start_x_eff() const {
        if (!std::isnan(user_start_x)) return user_start_x;
        return -0.5 * d_irs - (n0 + 10) * vehicle_speed * block_duration_eff();
    }

    Vec3 user_position(int t) const {
        return {user_start_x_eff() + t * vehicle_speed * block_duration_eff(), user_y, user_z};
    }

    // First block whose true position lies inside this panel's service region.
    int t_service_start() const {
        double xs = user_start_x_eff();
        double step = vehicle_speed * block_duration_eff();
        double t = (-0.5 * d_irs - xs) / step;
        return std::max(0, static_cast<int>(std::ceil(t - 1e-9)));
    }

    void validate() const {
        auto fail = [](const std::string& what) { throw config_error(what); };
        if (!(carrier_frequency > 0.0)) fail("carrier_frequency must be positive");
        if (!(bandwidth > 0.0)) fail("bandwidth must be positive");
        if (!(vehicle_speed > 0.0)) fail("vehicle_speed must be positive");
        if (block_duration < 0.0) fail("block_duration must be nonnegative");
        if (n_b < 1) fail("n_b must be at least 1");
        if (m_x < 1 || m_y < 1) fail("panel dimensions must be at least 1");
        if (!(spacing_ratio > 0.0)) fail("spacing_ratio must be positive");
        if (!(d_irs > 0.0)) fail("d_irs must be positive");
        if (tau < 4) fail("tau must be at least 4");
        if (tau > s_slots()) fail("tau cannot exceed the symbols per block");
        if (n0 < 3) fail("n0 must be at least 3");
        if (s_slots() < 1) fail("block too short for the configured bandwidth");
        if (gap_db < 0.0) fail("gap_db must be nonnegative");
        if (!(user_z > 0.0)) fail("user_z must be positive");
        if (n_paths < 1) fail("n_paths must be at least 1");
        if (feedback_delay_blocks < 0) fail("feedback_delay_blocks must be nonnegative");
    }
};

}  // namespace irssim

#endif
