#include <gtest/gtest.h>

#include <random>

#include "kraichnan/spectra.hpp"
#include "oracles.hpp"

using namespace kraichnan;

namespace {

ModelSpec spec(Family f, int d, double alpha, int J) {
    ModelSpec s;
    s.family = f, s.d = d, s.alpha = alpha, s.J = J, s.J_Z = J;
    return s;
}

NoiseCoefficients no_noise(int d) {
    ModelSpec s;
    s.family = Family::custom;
    s.d = d;
    return build_custom(s);
}

std::shared_ptr<const Lattice> lattice(int d, int N) { return std::make_shared<const Lattice>(d, N); }

std::vector<double> spike(const Lattice& L, std::vector<int> k, double v = 1.0) {
    std::vector<double> a(L.size(), 0.0);
    a[std::size_t(L.find(k))] = v;
    return a;
}

}  // namespace

TEST(Sigma, Examples) {
    Lattice L(2, 6);
    std::vector<double> a(L.size());
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u;
    for (auto& x : a) x = u(rng);
    EXPECT_NEAR(sigma_norm_sq(L, a, SigmaWeight::power_log(0, 0)), compensated_sum(a), 1e-14);
    auto s = spike(L, {3, 4});
    auto half = SigmaWeight::power_log(0.5, 0);
    EXPECT_NEAR(sigma_norm_sq(L, s, half), 5.0, 1e-14);
    auto w = SigmaWeight::power_log(0.5, 4);
    for (double r : {1.0, 2.0, 7.5}) EXPECT_GT(w(r), 0.0);
    EXPECT_THROW(SigmaWeight::power_log(1.5, 0), std::invalid_argument);
    EXPECT_THROW(SigmaWeight::power_log(0.5, -1), std::invalid_argument);
    auto c = build(spec(Family::isotropic, 2, 0.5, 8));
    auto tab = SigmaWeight::tabulated(StructureFunction(c, {}), 4);
    StructureFunction S(c, {});
    EXPECT_NEAR(tab(2.0), S(8.0) / (std::log(2.0) + 1), 1e-15);
    EXPECT_GT(tab(1.0), 0.0);
}

TEST(Sigma, RegularizationIntegralIsFinite) {
    auto c = build(spec(Family::isotropic, 2, 0.5, 8));
    auto g = assemble(c, lattice(2, 16), 1e-3);
    auto a0 = spike(g.lattice(), {1, 0});
    std::vector<double> t{1.0};
    auto tr = integrate(g, a0, t);
    for (double m : {4.0, 6.0}) {
        const double C = sigma_norm_sq(g.lattice(), tr.integrals[0], SigmaWeight::power_log(0.5, m)) / compensated_sum(a0);
        EXPECT_GT(C, 0.0);
        EXPECT_TRUE(std::isfinite(C));
    }
    EXPECT_LT(sigma_norm_sq(g.lattice(), tr.integrals[0], SigmaWeight::power_log(0.5, 6)),
              sigma_norm_sq(g.lattice(), tr.integrals[0], SigmaWeight::power_log(0.5, 4)));
}

TEST(DecayFit, Examples) {
    std::vector<double> t{0, 1, 2, 3, 4}, v, w;
    for (double x : t) v.push_back(std::exp(-2 * x)), w.push_back(3 * std::exp(-0.5 * x));
    auto f = fit_decay_rate(t, v);
    EXPECT_NEAR(f.rate, 2.0, 1e-9);
    EXPECT_NEAR(f.prefactor, 1.0, 1e-9);
    EXPECT_LT(f.residual, 1e-12);
    auto h = fit_decay_rate(t, w);
    EXPECT_NEAR(h.rate, 0.5, 1e-12);
    EXPECT_NEAR(h.prefactor, 3.0, 1e-12);
    std::vector<double> t4{0, 1, 2, 3}, v4{1, 1, 1, 1};
    EXPECT_THROW(fit_decay_rate(t4, v4), std::invalid_argument);
    v[2] = 0;
    EXPECT_THROW(fit_decay_rate(t, v), std::invalid_argument);
    v[2] = -1;
    EXPECT_THROW(fit_decay_rate(t, v), std::invalid_argument);
}

TEST(Invariant, HeatOnlySpike) {
    const double kappa = 0.01;
    auto g = assemble(no_noise(2), lattice(2, 5), kappa);
    for (std::vector<int> k0 : {std::vector<int>{1, 0}, std::vector<int>{2, 3}}) {
        auto f = spike(g.lattice(), k0);
        auto inv = invariant_spectrum(g, f);
        const double want = 1.0 / (8 * oracle::pi * oracle::pi * kappa * double(norm_sq(k0)));
        EXPECT_NEAR(inv.x[std::size_t(g.lattice().find(k0))], want, 1e-12 * want);
    }
    EXPECT_THROW(invariant_spectrum(assemble(no_noise(2), lattice(2, 3), 0.0), std::vector<double>(12, 1.0)),
                 std::invalid_argument);
}

TEST(Invariant, MatchesDenseOracleAndQuadrature) {
    for (auto f : {Family::isotropic, Family::shear}) {
        auto c = build(spec(f, 2, 0.5, 2));
        auto L = lattice(2, 2);
        const double kappa = 0.05;
        auto g = assemble(c, L, kappa);
        oracle::Dense D(oracle::dense_generator(c, *L, kappa));
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u;
        std::vector<double> F(L->size());
        for (auto& x : F) x = u(rng);
        auto inv = invariant_spectrum(g, F);
        auto q = invariant_spectrum_quadrature(g, F);
        Eigen::VectorXd ref = D.integral_inf(Eigen::Map<const Eigen::VectorXd>(F.data(), Eigen::Index(F.size())));
        for (std::size_t k = 0; k < L->size(); ++k) {
            EXPECT_NEAR(inv.x[k], ref[Eigen::Index(k)], 1e-8);
            EXPECT_NEAR(q.x[k], ref[Eigen::Index(k)], 1e-8);
        }
        EXPECT_LT(q.tail_bound, 1e-10);
    }
}

TEST(Invariant, StationaryBalance) {
    auto c = build(spec(Family::isotropic, 2, 0.5, 6));
    auto g = assemble(c, lattice(2, 16), 1e-2);
    auto F = spike(g.lattice(), {1, 0});
    F[std::size_t(g.lattice().find(std::vector<int>{-1, 0}))] = 1;
    auto inv = invariant_spectrum(g, F);
    EXPECT_NEAR(inv.heat + inv.outflow, inv.input, 1e-10 * inv.input);
    EXPECT_GT(inv.outflow, 0.0);
    EXPECT_LT(inv.residual, 1e-11);
    for (double x : inv.x) EXPECT_GE(x, -1e-14);
}

TEST(Invariant, DisjointSupportAdditivity) {
    auto c = build(spec(Family::isotropic, 2, 0.5, 4));
    auto g = assemble(c, lattice(2, 12), 1e-2);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u;
    std::vector<double> F1(g.size(), 0.0), F2(g.size(), 0.0), F(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) (k % 2 ? F1 : F2)[k] = u(rng) * (g.lattice().norm(k) < 4);
    for (std::size_t k = 0; k < g.size(); ++k) F[k] = F1[k] + F2[k];
    auto x = invariant_spectrum(g, F).x, x1 = invariant_spectrum(g, F1).x, x2 = invariant_spectrum(g, F2).x;
    double mx = 0;
    for (double v : x) mx = std::max(mx, v);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(x[k], x1[k] + x2[k], 1e-10 * mx);
}

TEST(Annulus, SumsAndSlopes) {
    Lattice L(2, 8);
    std::vector<double> one(L.size(), 1.0);
    EXPECT_DOUBLE_EQ(annulus_sum(L, one, 1, 2), 12.0);
    EXPECT_EQ(annulus_sum(L, one, 4.5, 4.8), 0.0);

    const double alpha = 0.5;
    Lattice B(2, 256);
    std::vector<double> law(B.size());
    for (std::size_t k = 0; k < B.size(); ++k) law[k] = std::pow(B.norm(k), -2.0 - 2.0 * (1 - alpha));
    double lo = 1e300, hi = 0;
    for (double inv_r : {4.0, 8.0, 16.0, 32.0, 64.0}) {
        double brute = 0;
        for (int a = -256; a <= 256; ++a)
            for (int b = -256; b <= 256; ++b) {
                const double q = std::sqrt(double(a * a + b * b));
                if (q >= inv_r / 2 && q <= 2 * inv_r) brute += std::pow(q, -3.0);
            }
        const double s = annulus_sum(B, law, inv_r / 2, 2 * inv_r);
        EXPECT_NEAR(s, brute, 1e-12 * brute);
        const double ratio = s / std::pow(1 / inv_r, 2 * (1 - alpha));
        lo = std::min(lo, ratio), hi = std::max(hi, ratio);
    }
    EXPECT_GT(lo, 0.0);
    EXPECT_LT(hi / lo, 1.2);

    std::vector<double> K{8, 12, 16, 24, 32, 48, 64};
    auto fit = fit_shell_slope(B, law, K);
    EXPECT_NEAR(-fit.slope, 2 * (1 - alpha), 0.05);
    EXPECT_EQ(fit.sums.size(), K.size());
}

TEST(Annulus, ReportFlagsAndFittedConstant) {
    const double alpha = 0.5, kappa = 1e-2;
    Lattice L(2, 64);
    std::vector<double> x(L.size());
    for (std::size_t k = 0; k < L.size(); ++k) x[k] = std::pow(L.norm(k), -3.0);
    std::vector<double> r{0.005, 0.05, 0.1, 0.2};
    auto rep = annulus_report(L, x, alpha, kappa, 1.0, r, {2.0, std::nullopt}, 0.5);
    EXPECT_DOUBLE_EQ(rep.m, 8.0);
    ASSERT_EQ(rep.rows.size(), 4u);
    EXPECT_TRUE(rep.rows[0].outside_range);
    EXPECT_FALSE(rep.rows[2].outside_range);
    EXPECT_TRUE(rep.rows[0].escapes_truncation);
    for (const auto& row : rep.rows) {
        EXPECT_LE(row.k_lo, row.k_hi);
        EXPECT_NEAR(row.sum, annulus_sum(L, x, row.k_lo, row.k_hi), 1e-14);
        if (std::isfinite(row.fitted_C) && row.fitted_C > 1) {
            auto again = annulus_report(L, x, alpha, kappa, 1.0, std::vector<double>{row.r}, {row.fitted_C, 8.0}, 0.5);
            EXPECT_TRUE(again.rows[0].lower_ok && again.rows[0].upper_ok);
            auto below = annulus_report(L, x, alpha, kappa, 1.0, std::vector<double>{row.r}, {row.fitted_C * 0.999, 8.0}, 0.5);
            EXPECT_FALSE(below.rows[0].lower_ok && below.rows[0].upper_ok);
        }
    }
    EXPECT_THROW(annulus_report(L, x, alpha, kappa, 1.0, std::vector<double>{1.5}), std::invalid_argument);
}

TEST(Covariance, ProjectorSumTraceAndPsd) {
    for (int d : {2, 3}) {
        auto c = build(spec(Family::isotropic, d, 0.5, 3));
        std::vector<double> zero(d, 0.0);
        auto D0 = covariance(c, zero);
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(d, d);
        double w2 = 0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            Eigen::VectorXd k(d);
            for (int a = 0; a < d; ++a) k[a] = c.mode(i)[a];
            P += c.w[i] * c.w[i] * (Eigen::MatrixXd::Identity(d, d) - k * k.transpose() / k.squaredNorm());
            w2 += c.w[i] * c.w[i];
        }
        EXPECT_LT((D0 - P).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_NEAR(D0.trace(), (d - 1) * w2, 1e-14);
        std::mt19937_64 rng(d);
        std::uniform_real_distribution<double> u;
        for (int t = 0; t < 200; ++t) {
            std::vector<double> x(d);
            for (auto& v : x) v = u(rng);
            auto Dx = covariance(c, x);
            EXPECT_LT((Dx - Dx.transpose()).cwiseAbs().maxCoeff(), 1e-15);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D0 - Dx);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-14);
        }
    }
}

TEST(Covariance, HolderEstimateHasModerateFittedConstant) {
    for (double alpha : {0.25, 0.5, 0.75}) {
        auto c = build(spec(Family::isotropic, 2, alpha, 24));
        std::vector<double> zero{0, 0};
        auto D0 = covariance(c, zero);
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        double best = 0;
        for (int t = 0; t < 1000; ++t) {
            std::vector<double> x{u(rng), u(rng)};
            const double r = std::hypot(x[0], x[1]);
            const double lhs = (D0 - covariance(c, x)).norm();
            best = std::max(best, lhs / (std::pow(r, 2 * alpha) * c.regularity_sum));
        }
        EXPECT_GT(best, 0.0);
        EXPECT_LT(best, 50.0) << alpha;
    }
}

TEST(Covariance, GeneratorIsBasisFree) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> u(-6, 6);
    for (int t = 0; t < 3000; ++t) {
        const int d = 2 + t % 2;
        std::vector<int> j(d), k(d);
        do {
            for (auto& x : j) x = u(rng);
        } while (norm_sq(j) == 0);
        for (auto& x : k) x = u(rng);
        for (double rot : {0.0, 0.7, 2.5}) {
            double s = 0;
            for (const auto& e : perp_basis(j, rot)) {
                double ke = 0;
                for (int a = 0; a < d; ++a) ke += k[a] * e[a];
                s += ke * ke;
            }
            ASSERT_NEAR(s, proj_norm_sq(j, k), 1e-11 * std::max(1.0, double(norm_sq(k))));
        }
    }
}

TEST(Correlation, Examples) {
    Lattice L(2, 3);
    std::vector<double> a(L.size(), 0.0);
    a[std::size_t(L.find(std::vector<int>{1, 0}))] = 1;
    a[std::size_t(L.find(std::vector<int>{-1, 0}))] = 1;
    std::vector<double> pts{0, 0, 0.1, 0.3, 0.25, 0.9, 0.7, 0.2};
    auto g = correlation_function(L, a, pts);
    for (std::size_t p = 0; p < 4; ++p) EXPECT_NEAR(g.values[p], 2 * std::cos(2 * oracle::pi * pts[2 * p]), 1e-14);
    EXPECT_FALSE(g.warning);
    a[std::size_t(L.find(std::vector<int>{2, 1}))] = 0.5;
    auto h = correlation_function(L, a, pts);
    EXPECT_TRUE(h.warning);
    EXPECT_NEAR(h.values[0], compensated_sum(a), 1e-14);
}

TEST(Correlation, FollowsTheRealSpaceEquation) {
    // finite-difference time derivative of g against 2 kappa Lap g + (D(0) - D(x)) : Hess g
    const double kappa = 3e-3;
    auto c = build(spec(Family::isotropic, 2, 0.5, 3));
    auto L = lattice(2, 9);
    auto g = assemble(c, L, kappa);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> a0(L->size(), 0.0);
    for (std::size_t k = 0; k < L->size(); ++k)
        if (L->norm(k) <= 6 && a0[k] == 0) a0[k] = a0[L->neg(k)] = u(rng) * std::exp(-L->norm2(k) / 8.0);
    const double h = 1e-5;
    std::vector<double> ts{h, 2 * h};
    IntegrateOptions o;
    o.tol = 1e-14;
    auto tr = integrate(g, a0, ts, o);
    const int n = 64;
    std::vector<double> pts;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) pts.push_back(double(i) / n), pts.push_back(double(j) / n);
    auto g0 = correlation_function(*L, a0, pts).values;
    auto g1 = correlation_function(*L, tr.values[0], pts).values;
    auto g2 = correlation_function(*L, tr.values[1], pts).values;
    std::vector<double> zero{0, 0};
    const auto D0 = covariance(c, zero);
    double err = 0, scale = 0;
    for (std::size_t p = 0; p < pts.size() / 2; ++p) {
        const double dt = (-3 * g0[p] + 4 * g1[p] - g2[p]) / (2 * h);
        Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
        for (std::size_t k = 0; k < L->size(); ++k) {
            if (a0[k] == 0) continue;
            auto s = L->site(k);
            const double ph = std::cos(2 * oracle::pi * (s[0] * pts[2 * p] + s[1] * pts[2 * p + 1]));
            for (int x = 0; x < 2; ++x)
                for (int y = 0; y < 2; ++y) H(x, y) -= 4 * oracle::pi * oracle::pi * s[x] * s[y] * a0[k] * ph;
        }
        const auto Dx = covariance(c, std::vector<double>{pts[2 * p], pts[2 * p + 1]});
        const double rhs = 2 * kappa * H.trace() + ((D0 - Dx).array() * H.array()).sum();
        err = std::max(err, std::abs(dt - rhs));
        scale = std::max(scale, std::abs(rhs));
    }
    EXPECT_LT(err / scale, 1e-3);
}
