#include <gtest/gtest.h>

#include "nuhops/oracles.hpp"

using namespace nuhops;

namespace {

Eigen::MatrixXcd pure(const Eigen::VectorXcd& v) { return v * v.adjoint() / v.squaredNorm(); }

}  // namespace

TEST(Cumulants, CoherentStateHasNone) {
    const auto m = moments_from_density(pure(fock_coherent(40, cplx(1.1, -0.4))));
    EXPECT_NEAR(std::abs(m.a - cplx(1.1, -0.4)), 0.0, 1e-12);
    EXPECT_NEAR(c3(m), 0.0, 1e-10);
}

TEST(Cumulants, NumberStateOne) {
    const auto m = moments_from_density(pure(fock_number(5, 1)));
    EXPECT_NEAR(m.ada.real(), 1.0, 1e-15);
    EXPECT_NEAR(c3(m), 0.0, 1e-15);
}

TEST(Cumulants, VacuumOneSuperposition) {
    // (|0> + |1>)/sqrt 2: <a> = 1/2, <a^dag a> = 1/2, all higher moments vanish,
    // so kappa(a,a,a) = 2 (1/2)^3 = 1/4 and kappa(a^dag,a,a) = -1/4 - 1/4 + 1/4 = -1/4
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
    v(0) = v(1) = 1.0;
    const auto m = moments_from_density(pure(v));
    const auto [k1, k2] = third_cumulants(m);
    EXPECT_NEAR(std::abs(k1 - 0.25), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(k2 + 0.25), 0.0, 1e-15);
    EXPECT_NEAR(c3(m), 0.5, 1e-15);
}

TEST(Husimi, VacuumGaussianAndNormalization) {
    const Eigen::MatrixXcd vac = pure(fock_number(10, 0));
    for (cplx b : {cplx(0.0), cplx(1.0, 0.5), cplx(-2.0, 1.0)})
        EXPECT_NEAR(husimi_q(vac, b), std::exp(-std::norm(b)) / M_PI, 1e-15);
    const Eigen::MatrixXcd coh = pure(fock_coherent(30, cplx(1.0, -1.0)));
    const Grid2D g = square_grid(121, 6.0);
    const auto q = husimi_q_aux(coh, g);
    const double h = g.x[1] - g.x[0];
    double total = 0.0;
    for (double v : q) total += v * h * h;
    EXPECT_NEAR(total, 1.0, 1e-6);
    // x fastest: maximum at (re, im) = (1, -1)
    const auto k = std::size_t(std::max_element(q.begin(), q.end()) - q.begin());
    EXPECT_NEAR(g.x[k % g.x.size()], 1.0, h);
    EXPECT_NEAR(g.y[k / g.x.size()], -1.0, h);
}

TEST(SpinQFunction, NormalizedAndPeaked) {
    const int two_s = 8;
    const double th = 1.0, ph = 2.0;
    const CVec psi = spin_coherent(two_s, th, ph);
    const Grid2D g = sphere_grid(240, 181);
    const auto q = spin_q_pure(psi, g);
    const double dphi = g.x[1] - g.x[0], dth = g.y[1] - g.y[0];
    double total = 0.0;
    for (std::size_t t = 0; t < g.y.size(); ++t)
        for (std::size_t p = 0; p < g.x.size(); ++p) total += q[t * g.x.size() + p] * std::sin(g.y[t]) * dphi * dth;
    EXPECT_NEAR(total, 1.0, 1e-3);
    const auto k = std::size_t(std::max_element(q.begin(), q.end()) - q.begin());
    EXPECT_NEAR(g.x[k % g.x.size()], ph, dphi);
    EXPECT_NEAR(g.y[k / g.x.size()], th, dth);
    EXPECT_NEAR(q[k], (two_s + 1) / (4.0 * M_PI), 1e-3);

    Eigen::Map<const Eigen::VectorXcd> v(psi.data(), Eigen::Index(psi.size()));
    const auto qm = spin_q(pure(v), g);
    for (std::size_t i = 0; i < q.size(); i += 97) EXPECT_NEAR(q[i], qm[i], 1e-12);
}

TEST(AuxOccupation, WeightedLevelAverage) {
    TrajectoryState st;
    st.phi = HopsState(SpinSector::full(1), FockLadder{{3}});
    st.phi.at(0, 0) = 1.0;     // n = 0, weight 1
    st.phi.at(1, 2) = 1.0;     // n = 2, weight 1
    st.phi.at(0, 1) = std::sqrt(2.0);   // n = 1, weight 2
    EXPECT_NEAR(aux_occupation(st, 0), (0.0 + 2.0 + 2.0) / 4.0, 1e-15);
    EXPECT_THROW(aux_occupation(st, 1), Error);
}

TEST(CavityMoments, HopsCoherentLadder) {
    // HOPS representation of a coherent cavity: psi^(k) = y^k / sqrt(k!) psi^(0)
    ModelSpec m = make_dephasing_model(1, 1.0, 0.5, 1.0, 1.0, 0.0, 0.0);
    const cplx y(0.6, 0.2);
    TrajectoryState st;
    st.mu = {0.0};
    st.phi = HopsState(SpinSector::full(1), FockLadder{{30}});
    cplx c = 1.0;
    for (std::size_t k = 0; k < 30; ++k) {
        if (k > 0) c *= y / std::sqrt(double(k));
        st.phi.at(1, k) = c;
    }
    EXPECT_NEAR(std::abs(cavity_moment(st, m, Mode::hops, 0, 1) - y), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(cavity_moment(st, m, Mode::hops, 0, 3) - y * y * y), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(cavity_moment(st, m, Mode::hops, 1, 2) - std::conj(y) * y * y), 0.0, 1e-12);
}

TEST(Layout, ColumnsAndRequests) {
    const ModelSpec m = make_dicke_model(4, 1.0, 1.0, 2.5, 0.5);
    ObservableRequest rq;
    rq.c3 = true;
    rq.rho_sys = true;
    rq.stride = 5;
    const ObservableLayout lay(m, Mode::nuhops, rq);
    const auto& n = lay.names();
    ASSERT_GE(n.size(), 8u);
    EXPECT_EQ(n[0], "Sx");
    EXPECT_EQ(n[2], "Sz");
    EXPECT_TRUE(lay.has_c3());
    ASSERT_TRUE(lay.moment_column());
    EXPECT_EQ(n[*lay.moment_column()], "a");
    EXPECT_EQ(n.back(), "rho_4_4");

    ObservableRequest zero;
    zero.stride = 0;
    EXPECT_THROW(ObservableLayout(m, Mode::nuhops, zero), ConfigError);

    ModelSpec two = m;
    two.bcf.terms.push_back(two.bcf.terms[0]);
    ObservableRequest cav;
    cav.cavity_moments = true;
    EXPECT_THROW(ObservableLayout(two, Mode::nuhops, cav), ConfigError);
}

TEST(Layout, EvaluateMatchesDirectExpectations) {
    const ModelSpec m = make_dephasing_model(3, 1.0, 0.5, 1.0, 1.0, 1.1, 0.4);
    ObservableRequest rq;
    rq.aux_occupation = true;
    const ObservableLayout lay(m, Mode::nuhops, rq);
    PropagatorConfig pc;
    pc.adaptive = false;
    pc.fock_dims = {4};
    const TrajectoryState st = Propagator(m, pc).initial();
    std::vector<cplx> row(lay.columns());
    lay.evaluate(st, row.data());
    const double s = 1.5;
    EXPECT_NEAR(row[0].real(), s * std::sin(1.1) * std::cos(0.4), 1e-12);
    EXPECT_NEAR(row[1].real(), s * std::sin(1.1) * std::sin(0.4), 1e-12);
    EXPECT_NEAR(row[2].real(), s * std::cos(1.1), 1e-12);
}
