#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "irssim/channel.hpp"

using namespace irssim;

TEST_CASE("assemble_multipath matches the elementwise sum") {
    UpaGeometry geom{3, 2, 0.5};

    MultipathChannel one;
    one.n_b = 4;
    one.geom = geom;
    one.paths.push_back({cplx(1.0, 0.0), 0.0, {0.0, 0.0}});
    cmat g = assemble_multipath(one);
    REQUIRE(g.rows() == 4);
    REQUIRE(g.cols() == 6);
    REQUIRE((g - cmat::Ones(4, 6)).norm() < 1e-12);

    MultipathChannel cancel = one;
    cancel.paths.push_back({cplx(-1.0, 0.0), 0.0, {0.0, 0.0}});
    REQUIRE(assemble_multipath(cancel).norm() < 1e-12);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    MultipathChannel ch;
    ch.n_b = 4;
    ch.geom = geom;
    for (int l = 0; l < 3; ++l)
        ch.paths.push_back({cplx(unif(rng), unif(rng)), unif(rng), {unif(rng), unif(rng)}});
    g = assemble_multipath(ch);
    for (int n = 0; n < 4; ++n)
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 2; ++q) {
                cplx acc = 0.0;
                for (const auto& path : ch.paths)
                    acc += path.gain * std::polar(1.0, kPi * path.bs_phase * n) *
                           std::polar(1.0, kPi * (path.irs_angles.vartheta * p +
                                                  path.irs_angles.psi * q));
                REQUIRE(std::abs(g(n, p * 2 + q) - acc) < 1e-12);
            }

    MultipathChannel empty;
    empty.n_b = 2;
    empty.geom = geom;
    REQUIRE_THROWS_AS(assemble_multipath(empty), std::invalid_argument);
}

TEST_CASE("single-path channels have rank one") {
    UpaGeometry geom{4, 4, 0.5};
    MultipathChannel ch;
    ch.n_b = 8;
    ch.geom = geom;
    ch.paths.push_back({cplx(0.3, -1.1), 0.41, {0.2, -0.7}});
    Eigen::JacobiSVD<cmat> svd(assemble_multipath(ch));
    REQUIRE(svd.singularValues()(0) > 1e-10);
    for (Eigen::Index i = 1; i < svd.singularValues().size(); ++i)
        REQUIRE(svd.singularValues()(i) < 1e-10 * svd.singularValues()(0));
}

TEST_CASE("assemble_los scales the steering vector") {
    UpaGeometry g21{2, 1, 0.5};
    LosChannel ch{cplx(0.0, 2.0), {1.0, 0.0}, g21};
    cvec b = assemble_los(ch);
    REQUIRE(std::abs(b(0) - cplx(0.0, 2.0)) < 1e-12);
    REQUIRE(std::abs(b(1) - cplx(0.0, -2.0)) < 1e-12);

    LosChannel flat{cplx(1.0, 0.0), {0.0, 0.0}, {3, 3, 0.5}};
    REQUIRE((assemble_los(flat) - cvec::Ones(9)).norm() < 1e-12);
}

TEST_CASE("cascade and effective_channel evaluate the reflected link") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    auto rand_mat = [&](int r, int c) {
        cmat m(r, c);
        for (int j = 0; j < c; ++j)
            for (int i = 0; i < r; ++i) m(i, j) = cplx(unif(rng), unif(rng));
        return m;
    };

    cmat g = rand_mat(4, 6);
    REQUIRE((cascade(g, cvec::Ones(6)) - g).norm() < 1e-12);

    cvec q = cvec::Zero(6);
    q(2) = cplx(0.5, 0.5);
    cmat c = cascade(g, q);
    REQUIRE(c.col(2).norm() > 0.0);
    c.col(2).setZero();
    REQUIRE(c.norm() < 1e-12);

    // the diagonal commutes between the channel and the reflection
    for (int k = 0; k < 50; ++k) {
        cmat gg = rand_mat(3, 5);
        cvec qq = rand_mat(5, 1);
        cvec nu(5);
        for (int i = 0; i < 5; ++i) nu(i) = std::polar(1.0, kPi * unif(rng));
        cvec lhs = cascade(gg, qq) * nu;
        cvec rhs = gg * nu.asDiagonal() * qq;
        REQUIRE((lhs - rhs).norm() < 1e-12 * std::max(1.0, rhs.norm()));
    }

    REQUIRE_THROWS_AS(cascade(g, cvec::Ones(5)), std::invalid_argument);

    cvec d = rand_mat(4, 1);
    cvec nu(6);
    for (int i = 0; i < 6; ++i) nu(i) = std::polar(1.0, kPi * unif(rng));
    REQUIRE((effective_channel(cmat::Zero(4, 6), nu, d) - d).norm() < 1e-12);
    cvec h = effective_channel(cascade(g, q), nu, d);
    REQUIRE((h - (cascade(g, q) * nu + d)).norm() < 1e-12);

    cvec bad = nu;
    bad(0) *= 1.5;
    REQUIRE_THROWS_AS(effective_channel(cascade(g, q), bad, d), std::invalid_argument);
}

TEST_CASE("path_loss follows the log-distance law") {
    REQUIRE(path_loss(1.0, 2.0, -30.0) == Catch::Approx(1e-3).epsilon(1e-12));
    REQUIRE(path_loss(1.0, 3.7, -30.0) == Catch::Approx(1e-3).epsilon(1e-12));
    REQUIRE(path_loss(10.0, 2.0, -30.0) == Catch::Approx(1e-5).epsilon(1e-12));
    REQUIRE(path_loss(7.3, 2.5, -30.0) ==
            Catch::Approx(1e-3 * std::pow(7.3, -2.5)).epsilon(1e-12));

    bool clamped = false;
    REQUIRE(path_loss(0.4, 2.0, -30.0, &clamped) == Catch::Approx(1e-3).epsilon(1e-12));
    REQUIRE(clamped);
    path_loss(1.4, 2.0, -30.0, &clamped);
    REQUIRE_FALSE(clamped);

    double prev = path_loss(1.0, 2.0, -30.0);
    for (double d = 2.0; d < 40.0; d += 1.7) {
        double cur = path_loss(d, 2.0, -30.0);
        REQUIRE(cur < prev);
        REQUIRE(path_loss(d, 2.5, -30.0) < cur);
        prev = cur;
    }
}

TEST_CASE("jakes generators are deterministic and frozen at zero Doppler") {
    JakesGenerator a = make_jakes_generator(42, 983.0, 1e-4, 1.0);
    JakesGenerator b = make_jakes_generator(42, 983.0, 1e-4, 1.0);
    for (int n = 0; n < 50; ++n) REQUIRE(a.at(n) == b.at(n));

    JakesGenerator c = make_jakes_generator(43, 983.0, 1e-4, 1.0);
    bool all_equal = true;
    for (int n = 0; n < 50; ++n) all_equal = all_equal && a.at(n) == c.at(n);
    REQUIRE_FALSE(all_equal);

    JakesGenerator still = make_jakes_generator(42, 0.0, 1e-4, 1.0);
    for (int n = 1; n < 20; ++n) REQUIRE(std::abs(still.at(n) - still.at(0)) < 1e-12);
}

TEST_CASE("jakes ensemble statistics track the Bessel autocorrelation") {
    const double fmax = 983.0, tb = 1e-4;
    const int n_real = 4000, window = 32;
    double p_acc = 0.0;
    cplx r1_acc = 0.0, r3_acc = 0.0;
    for (int r = 0; r < n_real; ++r) {
        JakesGenerator gen = make_jakes_generator(1000 + r, fmax, tb, 1.0);
        std::vector<cplx> h(window + 3);
        for (int n = 0; n < window + 3; ++n) h[n] = gen.at(n);
        for (int n = 0; n < window; ++n) {
            p_acc += std::norm(h[n]);
            r1_acc += h[n + 1] * std::conj(h[n]);
            r3_acc += h[n + 3] * std::conj(h[n]);
        }
    }
    double count = static_cast<double>(n_real) * window;
    double j1 = std::cyl_bessel_j(0, 2.0 * kPi * fmax * tb);
    double j3 = std::cyl_bessel_j(0, 2.0 * kPi * fmax * 3.0 * tb);
    REQUIRE(p_acc / count == Catch::Approx(1.0).margin(0.03));
    REQUIRE((r1_acc / count).real() == Catch::Approx(j1).margin(0.03));
    REQUIRE((r3_acc / count).real() == Catch::Approx(j3).margin(0.03));
}

TEST_CASE("jakes sequences from different seeds are uncorrelated") {
    const int n = 10000;
    JakesGenerator a = make_jakes_generator(2, 983.0, 1e-4, 1.0);
    JakesGenerator b = make_jakes_generator(3, 983.0, 1e-4, 1.0);
    cplx cross = 0.0;
    double pa = 0.0, pb = 0.0;
    for (int k = 0; k < n; ++k) {
        cplx ha = a.at(k), hb = b.at(k);
        cross += ha * std::conj(hb);
        pa += std::norm(ha);
        pb += std::norm(hb);
    }
    REQUIRE(std::abs(cross) / std::sqrt(pa * pb) < 0.05);
}

TEST_CASE("jakes_process emits independent deterministic dimensions") {
    auto procs = jakes_process(9, 100, 983.0, 1e-4, 2.0, 3);
    REQUIRE(procs.size() == 3);
    for (const auto& p : procs) REQUIRE(p.sequence.size() == 100);
    auto again = jakes_process(9, 100, 983.0, 1e-4, 2.0, 3);
    for (int d = 0; d < 3; ++d)
        for (int n = 0; n < 100; ++n) REQUIRE(procs[d].sequence[n] == again[d].sequence[n]);
    REQUIRE(procs[0].sequence[0] != procs[1].sequence[0]);
}

TEST_CASE("near_field_los converges to the far-field model at distance") {
    UpaGeometry geom{8, 8, 0.5};
    double lambda = kSpeedOfLight / 5.9e9;
    Vec3 src{120.0, 35.0, 80.0};
    cvec nf = near_field_los(src, geom, lambda, -30.0);
    cvec ff = assemble_los(far_field_los(src, geom, lambda, -30.0));
    double align = std::abs(nf.dot(ff)) / (nf.norm() * ff.norm());
    REQUIRE(align > 0.999);
    REQUIRE(nf.norm() == Catch::Approx(ff.norm()).epsilon(0.01));

    // close to the panel the element-wise ranges genuinely differ; the
    // amplitude spread is exactly the range spread
    Vec3 src_close{0.0, 0.3, 0.3};
    cvec close = near_field_los(src_close, geom, lambda, -30.0);
    double r_min = 1e300, r_max = 0.0;
    for (int p = 0; p < geom.m_x; ++p)
        for (int q = 0; q < geom.m_y; ++q) {
            double r = distance(src_close, element_position(geom, lambda, p, q));
            r_min = std::min(r_min, r);
            r_max = std::max(r_max, r);
        }
    double spread = close.cwiseAbs().maxCoeff() / close.cwiseAbs().minCoeff();
    REQUIRE(spread == Catch::Approx(r_max / r_min).epsilon(1e-9));
    REQUIRE(spread > 1.3);

    // the panel has no element at its center, so probe an exact element site
    REQUIRE_THROWS_AS(near_field_los(element_position(geom, lambda, 0, 0), geom, lambda, -30.0),
                      std::invalid_argument);
}

TEST_CASE("make_random_multipath normalizes power and separates paths") {
    UpaGeometry geom{8, 8, 0.5};
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        MultipathChannel ch = make_random_multipath(seed, 3, 16, geom, 2.5e-4, 0.3);
        REQUIRE(ch.paths.size() == 3);
        double total = 0.0;
        for (const auto& p : ch.paths) total += std::norm(p.gain);
        REQUIRE(total == Catch::Approx(2.5e-4).epsilon(1e-12));
        double lim = 2.0 * geom.spacing_ratio;
        for (std::size_t i = 0; i < ch.paths.size(); ++i) {
            const auto& a = ch.paths[i].irs_angles;
            REQUIRE(a.vartheta * a.vartheta + a.psi * a.psi <= lim * lim + 1e-12);
            for (std::size_t j = 0; j < i; ++j) {
                const auto& b = ch.paths[j].irs_angles;
                bool all_close =
                    std::abs(wrap_array_phase(ch.paths[i].bs_phase - ch.paths[j].bs_phase)) < 0.3 &&
                    std::abs(wrap_array_phase(a.vartheta - b.vartheta)) < 0.3 &&
                    std::abs(wrap_array_phase(a.psi - b.psi)) < 0.3;
                REQUIRE_FALSE(all_close);
            }
        }
    }
}
