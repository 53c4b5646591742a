#ifndef IRSSIM_GEOMETRY_HPP
#define IRSSIM_GEOMETRY_HPP

#include "irssim/common.hpp"

namespace irssim {

// Rectangular panel in the x-y plane of its own frame, element index m = p*m_y + q
// with p along x and q along y. spacing_ratio is element spacing over wavelength.
struct UpaGeometry {
    int m_x = 1;
    int m_y = 1;
    double spacing_ratio = 0.5;

    int size() const { return m_x * m_y; }
};

// Normalized array phases (vartheta, psi). For physical directions they satisfy
// vartheta^2 + psi^2 <= (2*spacing_ratio)^2; the steering vector itself is
// 2-periodic in each coordinate, so cascaded sums may leave that disk.
struct AnglePair {
    double vartheta = 0.0;
    double psi = 0.0;
};

// Wraps an array phase to the principal interval [-1, 1).
inline double wrap_array_phase(double v) {
    double w = std::fmod(v + 1.0, 2.0);
    if (w < 0.0) w += 2.0;
    return w - 1.0;
}

inline cvec ula_steering(double phase, int count) {
    if (count < 1) throw std::invalid_argument("ula_steering: count must be >= 1");
    cvec e(count);
    for (int n = 0; n < count; ++n) e(n) = std::polar(1.0, kPi * phase * n);
    return e;
}

inline cvec upa_steering(const AnglePair& a, const UpaGeometry& geom) {
    if (geom.m_x < 1 || geom.m_y < 1)
        throw std::invalid_argument("upa_steering: panel dimensions must be >= 1");
    cvec u(geom.size());
    for (int p = 0; p < geom.m_x; ++p)
        for (int q = 0; q < geom.m_y; ++q)
            u(p * geom.m_y + q) = std::polar(1.0, kPi * (a.vartheta * p + a.psi * q));
    return u;
}

// theta is elevation measured from the panel plane, phi azimuth in that plane.
inline AnglePair angles_from_elevation_azimuth(double theta, double phi, double spacing_ratio) {
    double c = 2.0 * spacing_ratio * std::cos(theta);
    return {c * std::cos(phi), c * std::sin(phi)};
}

// Position is relative to the panel center, z normal to the panel.
inline AnglePair angles_from_position(double x, double y, double z, double spacing_ratio) {
    double r = std::sqrt(x * x + y * y + z * z);
    if (r == 0.0) throw std::invalid_argument("angles_from_position: zero-norm position");
    return {2.0 * spacing_ratio * x / r, 2.0 * spacing_ratio * y / r};
}

inline AnglePair angles_from_position(const Vec3& pos, double spacing_ratio) {
    return angles_from_position(pos.x, pos.y, pos.z, spacing_ratio);
}

}  // namespace irssim

#endif
