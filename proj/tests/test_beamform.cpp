#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "irssim/beamform.hpp"
#include "irssim/channel.hpp"

using namespace irssim;

namespace {

cmat random_matrix(std::mt19937_64& rng, int r, int c) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    cmat m(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) m(i, j) = cplx(gauss(rng), gauss(rng));
    return m;
}

void require_unit(const cvec& nu) {
    for (Eigen::Index i = 0; i < nu.size(); ++i)
        REQUIRE(std::abs(std::abs(nu(i)) - 1.0) < 1e-12);
}

// A pure quadratic objective cannot see a global phase, so maximizers are
// only comparable after rotating one onto the other.
cvec phase_align(const cvec& v, const cvec& ref) {
    cplx ip = (v.adjoint() * ref)(0);
    if (std::abs(ip) == 0.0) return v;
    return v * (ip / std::abs(ip));
}

}  // namespace

TEST_CASE("ao sweeps never decrease the objective") {
    std::mt19937_64 rng(31);
    for (int k = 0; k < 20; ++k) {
        cmat a = random_matrix(rng, 4, 8);
        cvec d = random_matrix(rng, 4, 1);
        AoResult res = ao_maximize_quadratic(a, k % 2 ? &d : nullptr);
        require_unit(res.pattern.coefficients);
        REQUIRE(res.sweep_objectives.size() >= 1);
        for (std::size_t i = 1; i < res.sweep_objectives.size(); ++i)
            REQUIRE(res.sweep_objectives[i] >= res.sweep_objectives[i - 1] - 1e-12);
        REQUIRE(res.objective ==
                Catch::Approx((a * res.pattern.coefficients +
                               (k % 2 ? d : cvec::Zero(4).eval()))
                                  .squaredNorm())
                    .epsilon(1e-12));
    }
}

TEST_CASE("rank-1 inputs reach the closed-form optimum") {
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        int n_b = 6, m = 12;
        cplx gain(unif(rng), unif(rng));
        cvec e = ula_steering(unif(rng), n_b);
        cvec u = upa_steering({unif(rng), unif(rng)}, {4, 3, 0.5});
        cmat a = gain * e * u.transpose();
        double optimum = std::norm(gain) * n_b * m * m;
        AoResult res = ao_maximize_quadratic(a, nullptr);
        REQUIRE(res.objective == Catch::Approx(optimum).epsilon(1e-9));
    }

    // K=1 row vector: perfect phase alignment squares the element count
    cvec u = upa_steering({0.4, -0.1}, {3, 3, 0.5});
    cmat row = u.transpose();
    REQUIRE(ao_maximize_quadratic(row, nullptr).objective == Catch::Approx(81.0).epsilon(1e-9));

    cmat scalar(1, 1);
    scalar(0, 0) = cplx(0.3, -0.4);
    REQUIRE(ao_maximize_quadratic(scalar, nullptr).objective == Catch::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("ao beats the exhaustive 16-level lattice within 2 percent") {
    std::mt19937_64 rng(33);
    cmat a = random_matrix(rng, 2, 6);
    AoResult res = ao_maximize_quadratic(a, nullptr);

    // every 16-level quantized pattern, evaluated by depth-first partial sums
    double best = 0.0;
    std::array<cplx, 16> levels;
    for (int i = 0; i < 16; ++i) levels[i] = std::polar(1.0, 2.0 * kPi * i / 16.0);
    std::array<Eigen::Vector2cd, 7> partial;
    partial[0].setZero();
    auto descend = [&](auto&& self, int depth) -> void {
        if (depth == 6) {
            best = std::max(best, partial[6].squaredNorm());
            return;
        }
        for (int i = 0; i < 16; ++i) {
            partial[depth + 1] = partial[depth] + a.col(depth) * levels[i];
            self(self, depth + 1);
        }
    };
    descend(descend, 0);
    REQUIRE(res.objective >= 0.98 * best);
}

TEST_CASE("argmax is invariant to complex scaling of the matrix") {
    std::mt19937_64 rng(34);
    cmat a = random_matrix(rng, 5, 10);
    cplx c = 3.7 * std::polar(1.0, kPi / 5.0);
    AoSettings s;
    s.restart_seed = 77;
    AoResult base = ao_maximize_quadratic(a, nullptr, s);
    AoResult scaled = ao_maximize_quadratic(c * a, nullptr, s);
    cvec aligned = phase_align(scaled.pattern.coefficients, base.pattern.coefficients);
    REQUIRE((base.pattern.coefficients - aligned).norm() < 1e-9);
    REQUIRE(scaled.objective == Catch::Approx(std::norm(c) * base.objective).epsilon(1e-9));
}

TEST_CASE("a zero direct term reduces the affine problem to the quadratic one") {
    std::mt19937_64 rng(35);
    cmat a = random_matrix(rng, 4, 7);
    cvec zero = cvec::Zero(4);
    AoSettings s;
    s.restart_seed = 5;
    AoResult with = ao_maximize_quadratic(a, &zero, s);
    AoResult without = ao_maximize_quadratic(a, nullptr, s);
    REQUIRE((with.pattern.coefficients - without.pattern.coefficients).norm() == 0.0);
    REQUIRE(with.objective == without.objective);
}

TEST_CASE("initial_beamforming stays within 1 percent of a 50-restart envelope") {
    UpaGeometry geom{8, 8, 0.5};
    MultipathChannel ch = make_random_multipath(91, 3, 16, geom, 1.0, 0.0);
    cmat g = assemble_multipath(ch);

    AoSettings defaults;
    double base = (g * initial_beamforming(g, defaults).coefficients).squaredNorm();

    AoSettings wide;
    wide.n_random_restarts = 50;
    wide.use_svd_start = false;
    wide.restart_seed = 123;
    double envelope = (g * initial_beamforming(g, wide).coefficients).squaredNorm();
    REQUIRE(base >= 0.99 * envelope);
}

TEST_CASE("initial_beamforming ignores the unknown scale of the estimate") {
    std::mt19937_64 rng(36);
    cmat g = random_matrix(rng, 4, 9);
    AoSettings s;
    s.restart_seed = 9;
    cvec a = initial_beamforming(g, s).coefficients;
    cvec b = initial_beamforming(cplx(0.0, 2.5) * g, s).coefficients;
    REQUIRE((a - phase_align(b, a)).norm() < 1e-9);
    REQUIRE((g * a).squaredNorm() == Catch::Approx((g * b).squaredNorm()).epsilon(1e-12));
}

TEST_CASE("realtime_reflection composes the steering conjugate") {
    UpaGeometry geom{4, 4, 0.5};
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    cvec nu_bar(16);
    for (int i = 0; i < 16; ++i) nu_bar(i) = std::polar(1.0, kPi * unif(rng));

    cvec same = realtime_reflection({nu_bar}, {0.0, 0.0}, geom).coefficients;
    REQUIRE((same - nu_bar).norm() < 1e-12);

    AnglePair ang{0.6, -0.3};
    cvec from_ones = realtime_reflection({cvec::Ones(16)}, ang, geom).coefficients;
    REQUIRE((from_ones - upa_steering(ang, geom).conjugate()).norm() < 1e-12);

    cvec composed = realtime_reflection({nu_bar}, ang, geom).coefficients;
    require_unit(composed);
    REQUIRE_THROWS_AS(realtime_reflection({cvec::Ones(9)}, ang, geom), std::invalid_argument);
}

TEST_CASE("steered reflections make the cascade gain angle-independent") {
    // ||Q nu||^2 with Q = G diag(a u(ang)) and nu = conj(u) . nu_bar collapses
    // to |a|^2 ||G nu_bar||^2 for every angle
    UpaGeometry geom{4, 4, 0.5};
    std::mt19937_64 rng(38);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    cmat g = random_matrix(rng, 6, 16);
    cvec nu_bar(16);
    for (int i = 0; i < 16; ++i) nu_bar(i) = std::polar(1.0, kPi * unif(rng));
    double fixed = (g * nu_bar).squaredNorm();
    for (int k = 0; k < 50; ++k) {
        AnglePair ang{0.7 * unif(rng), 0.7 * unif(rng)};
        cplx a(unif(rng), unif(rng));
        cmat q = cascade(g, a * upa_steering(ang, geom));
        cvec nu = realtime_reflection({nu_bar}, ang, geom).coefficients;
        REQUIRE((q * nu).squaredNorm() ==
                Catch::Approx(std::norm(a) * fixed).epsilon(1e-9));
    }
}

TEST_CASE("effective_gain is the squared effective channel norm") {
    std::mt19937_64 rng(39);
    cmat q = random_matrix(rng, 5, 8);
    cvec d = random_matrix(rng, 5, 1);
    cvec nu(8);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int i = 0; i < 8; ++i) nu(i) = std::polar(1.0, kPi * unif(rng));

    REQUIRE(effective_gain(cmat::Zero(5, 8), nu, cvec::Zero(5)) == 0.0);
    REQUIRE(effective_gain(cmat::Zero(5, 8), nu, d) == Catch::Approx(d.squaredNorm()));
    REQUIRE(effective_gain(q, nu, d) ==
            Catch::Approx(effective_channel(q, nu, d).squaredNorm()));
}

TEST_CASE("achievable_rate applies the overhead fraction and the gap") {
    REQUIRE(achievable_rate(0.0, 1.0, 10, 100, 9.0) == 0.0);
    REQUIRE(achievable_rate(5.0, 1.0, 100, 100, 9.0) == 0.0);
    REQUIRE(achievable_rate(1000.0, 1.0, 10, 100, 9.0) ==
            Catch::Approx(0.9 * std::log2(1.0 + 1000.0 / std::pow(10.0, 0.9))).epsilon(1e-12));
    REQUIRE(achievable_rate(1000.0, 1.0, 10, 100, 9.0) == Catch::Approx(6.29).margin(0.005));

    REQUIRE_THROWS_AS(achievable_rate(1.0, 1.0, 101, 100, 9.0), std::invalid_argument);
    REQUIRE_THROWS_AS(achievable_rate(-1.0, 1.0, 0, 100, 9.0), std::invalid_argument);
    REQUIRE_THROWS_AS(achievable_rate(1.0, 0.0, 0, 100, 9.0), std::invalid_argument);
}
