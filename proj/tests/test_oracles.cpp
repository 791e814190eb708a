#include <gtest/gtest.h>

#include "nuhops/oracles.hpp"

using namespace nuhops;

namespace {

std::vector<double> grid(double t_end, double dt) {
    std::vector<double> t;
    for (std::size_t k = 0; double(k) * dt <= t_end + 1e-12; ++k) t.push_back(double(k) * dt);
    return t;
}

}  // namespace

TEST(DephasingOracle, ExponentMatchesQuadrature) {
    const ExpTerm term{0.25, cplx(1.0, 1.0)};
    for (double t : {0.0, 0.3, 2.0, 7.5}) {
        // F(t) = int_0^t ds int_0^s du alpha(s - u) = int_0^t (t - tau) alpha(tau) dtau
        const std::size_t n = 20000;
        const double h = t / double(n);
        cplx s = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            const double tau = double(k) * h;
            const double w = (k == 0 || k == n) ? 0.5 : 1.0;
            s += w * (t - tau) * term.G * std::exp(-term.W * tau);
        }
        s *= h;
        EXPECT_NEAR(std::abs(dephasing_exponent(term, t) - s), 0.0, 1e-7) << t;
    }
}

TEST(DephasingOracle, PopulationsFixedCoherencesDecay) {
    const CVec psi = spin_coherent(6, 1.2, 0.3);
    BcfSpec bcf;
    bcf.terms = {pseudo_mode(0.5, 1.0, 1.0)};
    Eigen::Map<const Eigen::VectorXcd> v(psi.data(), 7);
    const Eigen::MatrixXcd rho0 = v * v.adjoint();
    EXPECT_LT((dephasing_analytic(rho0, 0.0, bcf, 1.0) - rho0).norm(), 1e-15);
    double last = 1.0;
    for (double t : {0.5, 2.0, 8.0}) {
        const Eigen::MatrixXcd r = dephasing_analytic(rho0, t, bcf, 1.0);
        for (int k = 0; k < 7; ++k) EXPECT_NEAR(std::abs(r(k, k) - rho0(k, k)), 0.0, 1e-15);
        const double purity = (r * r).trace().real();
        EXPECT_LT(purity, last);
        last = purity;
        EXPECT_LT((r - r.adjoint()).norm(), 1e-14);
    }
    const Series s = dephasing_series(psi, {0.0, 1.0, 5.0}, bcf, 1.0);
    EXPECT_NEAR(s.value[s.column("Sz")][2].real(), 3.0 * std::cos(1.2), 1e-12);
}

TEST(LindbladOracle, FreeCavityDecay) {
    // no spin-cavity coupling: <a>(t) = y0 exp(-(kappa + i w_c) t)
    const LindbladModel lm{2, SpinOp::Sz(1.0), SpinOp::Sz(), 0.0, 1.3, 0.4};
    const int F = 25;
    const LindbladOracle o(lm, F);
    const cplx y0(1.2, 0.5);
    const Eigen::MatrixXcd rho0 = o.product(CVec{0.0, 0.0, 1.0}, fock_coherent(F, y0));
    LindbladOptions opt;
    opt.fock_dim = F;
    opt.dt = 1e-3;
    opt.check_positivity = true;
    const auto t = grid(3.0, 0.5);
    const LindbladResult r = lindblad_evolve(lm, rho0, t, opt);
    const std::size_t ca = r.series.column("a"), cn = r.series.column("ada");
    for (std::size_t k = 0; k < t.size(); ++k) {
        const cplx expect = y0 * std::exp(-cplx(0.4, 1.3) * t[k]);
        EXPECT_NEAR(std::abs(r.series.value[ca][k] - expect), 0.0, 1e-8) << t[k];
        EXPECT_NEAR(r.series.value[cn][k].real(), std::norm(expect), 1e-8);
    }
    EXPECT_LT(r.max_trace_error, 1e-12);
    EXPECT_GT(r.min_eigenvalue, -1e-10);
}

TEST(LindbladOracle, ReproducesExactDephasing) {
    // a damped mode coupled through Sz reproduces the Lorentzian decoherence exactly
    const ModelSpec m = make_dephasing_model(3, 1.0, 0.5, 1.0, 1.0, -M_PI / 4, 0.0);
    LindbladOptions opt;
    opt.fock_dim = 16;
    opt.dt = 2e-3;
    const auto t = grid(6.0, 0.25);
    const LindbladResult r = lindblad_evolve(lindblad_model(m), lindblad_initial(m, opt.fock_dim), t, opt);
    const Series ref = dephasing_series(m.initial_system, t, m.bcf, 1.0);
    CompareOptions co;
    co.abs_tol = 1e-7;
    co.only = {"Sx", "Sy", "Sz"};
    const CompareReport rep = compare(r.series, ref, co);
    for (const auto& e : rep.entries) EXPECT_TRUE(e.pass) << e.name << " " << e.max_dev;
}

TEST(LindbladOracle, DickeParitySuppressesOddCumulants) {
    // H and L commute with exp(i pi (Sz + s + a^dag a)); odd cavity moments stay zero from |s,s>|0>
    const ModelSpec m = make_dicke_model(4, 1.0, 1.129, 2.5, 0.5);
    LindbladOptions opt;
    opt.fock_dim = 16;
    const LindbladResult r = lindblad_evolve(lindblad_model(m), lindblad_initial(m, opt.fock_dim), grid(4.0, 0.5), opt);
    for (const char* n : {"a", "aaa", "adaa", "C3"})
        for (const auto& v : r.series.value[r.series.column(n)]) EXPECT_LT(std::abs(v), 1e-12) << n;
    // the cavity does get populated and the spin decays
    const auto& ada = r.series.value[r.series.column("ada")];
    EXPECT_GT(ada.back().real(), 1e-3);
    const auto& sz = r.series.value[r.series.column("Sz")];
    EXPECT_LT(sz.back().real(), 2.0);
}

TEST(LindbladOracle, LeakageIsReported) {
    const ModelSpec m = make_dicke_model(4, 1.0, 1.129, 2.5, 0.5);
    LindbladOptions opt;
    opt.fock_dim = 3;
    EXPECT_THROW(lindblad_evolve(lindblad_model(m), lindblad_initial(m, 3), grid(4.0, 0.5), opt), Error);
}

TEST(LindbladOracle, RejectsUnsupportedModels) {
    ModelSpec m = make_dicke_model(2, 1.0, 1.0, 2.5, 0.5);
    m.bcf.terms.push_back(m.bcf.terms[0]);
    EXPECT_THROW(lindblad_model(m), Error);
}

TEST(Compare, SigmaAndToleranceRules) {
    Series a, b;
    a.t = b.t = {0.0, 1.0, 2.0};
    const std::size_t ka = a.add_column("x"), kb = b.add_column("x");
    a.value[ka] = {1.0, 2.0, 3.0};
    b.value[kb] = {1.0, 2.05, 3.0};
    a.stderr_[ka] = {0.0, 0.02, 0.01};
    // deterministic b; 0.05 / 0.02 = 2.5 sigma
    CompareReport rep = compare(a, b);
    EXPECT_TRUE(rep.pass);
    EXPECT_NEAR(rep.entries[0].max_sigma_ratio, 2.5, 1e-9);
    EXPECT_DOUBLE_EQ(rep.entries[0].worst_t, 1.0);
    CompareOptions tight;
    tight.k_sigma = 2.0;
    rep = compare(a, b, tight);
    EXPECT_FALSE(rep.pass);
    EXPECT_EQ(rep.entries[0].failures, 1u);
    tight.skip_times = {1};
    EXPECT_TRUE(compare(a, b, tight).pass);

    Series c = b;
    c.t[2] = 2.5;
    EXPECT_THROW(compare(a, c), Error);
    CompareOptions missing;
    missing.only = {"y"};
    EXPECT_THROW(compare(a, b, missing), Error);
}
