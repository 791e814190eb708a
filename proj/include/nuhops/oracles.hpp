#pragma once

// Reference solutions: a dense Lindblad integrator for spin (x) damped cavity,
// the closed-form dephasing solution, and a series comparison harness.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "nuhops/observables.hpp"

namespace nuhops {

// Time series with named complex columns and optional standard errors
// (NaN marks a deterministic value).
struct Series {
    std::vector<double> t;
    std::vector<std::string> names;
    std::vector<std::vector<cplx>> value;     // [column][time]
    std::vector<std::vector<double>> stderr_; // [column][time]

    std::size_t column(const std::string& name) const {
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == name) return k;
        throw Error("series: no column named '" + name + "'");
    }
    bool has(const std::string& name) const {
        for (const auto& n : names)
            if (n == name) return true;
        return false;
    }
    std::size_t add_column(const std::string& name) {
        names.push_back(name);
        value.emplace_back(t.size(), cplx{0.0});
        stderr_.emplace_back(t.size(), std::numeric_limits<double>::quiet_NaN());
        return names.size() - 1;
    }
};

// H = H_sys + w_c a^dag a + lambda (L a^dag + L^dag a), dissipator
// kappa (2 a rho a^dag - {a^dag a, rho}).
struct LindbladModel {
    int two_s = 1;
    SpinOp h_sys;
    SpinOp l_op;
    double lambda = 0.0;
    double omega_c = 0.0;
    double kappa = 0.0;
};

inline LindbladModel lindblad_model(const ModelSpec& model) {
    if (model.bcf.size() != 1 || model.bcf.terms[0].G.imag() != 0.0 || model.bcf.terms[0].G.real() < 0.0)
        throw Error("lindblad oracle: needs a single bcf term with real non-negative G");
    if (model.thermal) throw Error("lindblad oracle: zero-temperature reservoirs only");
    const auto& t = model.bcf.terms[0];
    return {model.two_s, model.h_sys, model.l_op, std::sqrt(t.G.real()), t.W.imag(), t.W.real()};
}

struct LindbladOptions {
    int fock_dim = 20;
    double dt = 2e-3;
    double leak_tol = 1e-8;
    bool keep_states = false;      // store rho_tot at each output time
    bool check_positivity = false; // min eigenvalue audit at each output time
    bool spin_density = false;     // add rho_i_j columns
};

struct LindbladResult {
    Series series;
    std::vector<Eigen::MatrixXcd> states;
    std::vector<Eigen::MatrixXcd> spin_states;
    std::vector<Eigen::MatrixXcd> cavity_states;
    double max_top_population = 0.0;
    double min_eigenvalue = 0.0;
    double max_trace_error = 0.0;
};

// Joint basis index k * F + n for spin index k (ascending m) and Fock level n.
class LindbladOracle {
public:
    using Sparse = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

    LindbladOracle(LindbladModel m, int fock_dim) : m_(std::move(m)), F_(fock_dim) {
        if (F_ < 2) throw Error("lindblad oracle: fock_dim must be >= 2");
        if (!(m_.kappa >= 0.0)) throw Error("lindblad oracle: kappa must be >= 0");
        S_ = m_.two_s + 1;
        D_ = S_ * F_;
        const SpinSector sec = SpinSector::full(m_.two_s);
        const Eigen::MatrixXcd h = m_.h_sys.dense(sec), l = m_.l_op.dense(sec);
        std::vector<Eigen::Triplet<cplx>> kt, at;
        const auto idx = [&](int k, int n) { return k * F_ + n; };
        for (int k = 0; k < S_; ++k) {
            for (int n = 0; n < F_; ++n) {
                at.emplace_back(idx(k, n), idx(k, n + 1 < F_ ? n + 1 : n), n + 1 < F_ ? std::sqrt(double(n + 1)) : 0.0);
                // K = -i H - kappa n
                kt.emplace_back(idx(k, n), idx(k, n), -I * m_.omega_c * double(n) - m_.kappa * double(n));
                for (int k2 = std::max(0, k - 1); k2 <= std::min(S_ - 1, k + 1); ++k2) {
                    if (h(k, k2) != 0.0) kt.emplace_back(idx(k, n), idx(k2, n), -I * h(k, k2));
                    // lambda L a^dag : (k,n) <- (k2, n-1)
                    if (n > 0 && l(k, k2) != 0.0)
                        kt.emplace_back(idx(k, n), idx(k2, n - 1), -I * m_.lambda * l(k, k2) * std::sqrt(double(n)));
                    // lambda L^dag a : (k,n) <- (k2, n+1)
                    const cplx ld = std::conj(l(k2, k));
                    if (n + 1 < F_ && ld != 0.0)
                        kt.emplace_back(idx(k, n), idx(k2, n + 1), -I * m_.lambda * ld * std::sqrt(double(n + 1)));
                }
            }
        }
        K_.resize(D_, D_);
        K_.setFromTriplets(kt.begin(), kt.end());
        A_.resize(D_, D_);
        A_.setFromTriplets(at.begin(), at.end());
        A_.prune(cplx{0.0});
    }

    int fock_dim() const { return F_; }
    int dim() const { return D_; }

    Eigen::MatrixXcd rhs(const Eigen::MatrixXcd& rho) const {
        Eigen::MatrixXcd x = K_ * rho;
        Eigen::MatrixXcd out = x + x.adjoint();
        if (m_.kappa > 0.0) {
            const Eigen::MatrixXcd y = A_ * rho;                 // a rho
            out += 2.0 * m_.kappa * (A_ * y.adjoint()).adjoint(); // a rho a^dag
        }
        return out;
    }

    void step(Eigen::MatrixXcd& rho, double dt) const {
        const Eigen::MatrixXcd k1 = rhs(rho);
        const Eigen::MatrixXcd k2 = rhs(rho + 0.5 * dt * k1);
        const Eigen::MatrixXcd k3 = rhs(rho + 0.5 * dt * k2);
        const Eigen::MatrixXcd k4 = rhs(rho + dt * k3);
        rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        rho = 0.5 * (rho + rho.adjoint()).eval();
    }

    Eigen::MatrixXcd product(const CVec& psi_spin, const Eigen::VectorXcd& cav) const {
        if (psi_spin.size() != std::size_t(S_) || cav.size() != F_)
            throw Error("lindblad oracle: initial state dimensions do not match");
        Eigen::VectorXcd v(D_);
        double n2 = 0.0;
        for (const auto& c : psi_spin) n2 += std::norm(c);
        for (int k = 0; k < S_; ++k)
            for (int n = 0; n < F_; ++n) v(k * F_ + n) = psi_spin[std::size_t(k)] * cav(n);
        v /= std::sqrt(n2) * cav.norm();
        return v * v.adjoint();
    }

    Eigen::MatrixXcd spin_reduced(const Eigen::MatrixXcd& rho) const {
        Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(S_, S_);
        for (int k = 0; k < S_; ++k)
            for (int k2 = 0; k2 < S_; ++k2)
                for (int n = 0; n < F_; ++n) r(k, k2) += rho(k * F_ + n, k2 * F_ + n);
        return r;
    }

    Eigen::MatrixXcd cavity_reduced(const Eigen::MatrixXcd& rho) const {
        Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(F_, F_);
        for (int k = 0; k < S_; ++k)
            for (int n = 0; n < F_; ++n)
                for (int n2 = 0; n2 < F_; ++n2) r(n, n2) += rho(k * F_ + n, k * F_ + n2);
        return r;
    }

private:
    LindbladModel m_;
    int F_, S_, D_;
    Sparse K_, A_;
};

inline Eigen::VectorXcd fock_coherent(int fock_dim, cplx y) {
    Eigen::VectorXcd v(fock_dim);
    cplx p = std::exp(-0.5 * std::norm(y));
    for (int n = 0; n < fock_dim; ++n) {
        if (n > 0) p *= y / std::sqrt(double(n));
        v(n) = p;
    }
    return v;
}

inline Eigen::VectorXcd fock_number(int fock_dim, int n0) {
    if (n0 < 0 || n0 >= fock_dim) throw Error("fock_number: level outside the ladder");
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(fock_dim);
    v(n0) = 1.0;
    return v;
}

// Spin/cavity reductions of one joint state appended at time index ti.
inline void append_lindblad_row(Series& s, std::size_t ti, const LindbladOracle& o, const Eigen::MatrixXcd& rho,
                                int two_s, bool spin_density) {
    const SpinSector sec = SpinSector::full(two_s);
    const Eigen::MatrixXcd rs = o.spin_reduced(rho);
    const Eigen::MatrixXcd rc = o.cavity_reduced(rho);
    const auto ev = [&](const SpinOp& op) { return (rs * op.dense(sec)).trace(); };
    const CavityMoments mom = moments_from_density(rc);
    auto put = [&](const std::string& name, cplx v) {
        const std::size_t c = s.has(name) ? s.column(name) : s.add_column(name);
        s.value[c][ti] = v;
    };
    put("Sx", ev(SpinOp::Sx()).real());
    put("Sy", ev(SpinOp::Sy()).real());
    put("Sz", ev(SpinOp::Sz()).real());
    put("a", mom.a);
    put("aa", mom.aa);
    put("aaa", mom.aaa);
    put("ada", mom.ada.real());
    put("adaa", mom.adaa);
    put("C3", c3(mom));
    put("trace", rho.trace());
    if (spin_density)
        for (int r = 0; r <= two_s; ++r)
            for (int c = 0; c <= two_s; ++c) put("rho_" + std::to_string(r) + "_" + std::to_string(c), rs(r, c));
}

// Integrates from rho0 (joint basis) and records at every t in t_grid
// (ascending, first entry the start time).
inline LindbladResult lindblad_evolve(const LindbladModel& model, const Eigen::MatrixXcd& rho0,
                                      const std::vector<double>& t_grid, const LindbladOptions& opt) {
    if (t_grid.empty()) throw Error("lindblad_evolve: empty time grid");
    LindbladOracle o(model, opt.fock_dim);
    if (rho0.rows() != o.dim() || rho0.cols() != o.dim()) throw Error("lindblad_evolve: rho0 has wrong dimension");
    LindbladResult res;
    res.series.t = t_grid;
    Eigen::MatrixXcd rho = rho0;
    const int F = opt.fock_dim, S = model.two_s + 1;
    res.min_eigenvalue = std::numeric_limits<double>::infinity();
    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
        if (ti > 0) {
            const double span = t_grid[ti] - t_grid[ti - 1];
            if (!(span >= 0.0)) throw Error("lindblad_evolve: time grid must be ascending");
            const auto n = std::size_t(std::ceil(span / opt.dt - 1e-9));
            for (std::size_t k = 0; k < n; ++k) o.step(rho, span / double(n));
        }
        if (!rho.allFinite()) throw NumericalError("lindblad_evolve: non-finite density matrix");
        double top = 0.0;
        for (int k = 0; k < S; ++k) top += rho(k * F + F - 1, k * F + F - 1).real();
        res.max_top_population = std::max(res.max_top_population, top);
        if (top > opt.leak_tol)
            throw Error("lindblad_evolve: Fock leakage, top-level population " + std::to_string(top) + " at t = " +
                        std::to_string(t_grid[ti]) + " exceeds " + std::to_string(opt.leak_tol));
        res.max_trace_error = std::max(res.max_trace_error, std::abs(rho.trace() - 1.0));
        if (opt.check_positivity) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
            res.min_eigenvalue = std::min(res.min_eigenvalue, es.eigenvalues()(0));
        }
        append_lindblad_row(res.series, ti, o, rho, model.two_s, opt.spin_density);
        if (opt.keep_states) res.states.push_back(rho);
        res.spin_states.push_back(o.spin_reduced(rho));
        res.cavity_states.push_back(o.cavity_reduced(rho));
    }
    return res;
}

// Joint initial state of a model: its spin vector with the cavity in the
// vacuum, or in |y0> when the model carries a coherent amplitude.
inline Eigen::MatrixXcd lindblad_initial(const ModelSpec& model, int fock_dim) {
    LindbladOracle o(lindblad_model(model), fock_dim);
    const Eigen::VectorXcd cav = model.y0 ? fock_coherent(fock_dim, *model.y0) : fock_number(fock_dim, 0);
    return o.product(model.initial_system, cav);
}

// Decoherence exponent F(t) = int_0^t int_0^t' alpha(t' - t'') for one term.
inline cplx dephasing_exponent(const ExpTerm& term, double t) {
    const cplx W = term.W;
    return term.G * (t / W + (std::exp(-W * t) - 1.0) / (W * W));
}

// Exact reduced spin state of the dephasing model (H = w_a Sz, L = Sz).
inline Eigen::MatrixXcd dephasing_analytic(const Eigen::MatrixXcd& rho0, double t, const BcfSpec& bcf,
                                           double omega_a) {
    if (bcf.size() != 1) throw Error("dephasing_analytic: single exponential term required");
    const int d = int(rho0.rows());
    const double s = 0.5 * (d - 1);
    const cplx F = dephasing_exponent(bcf.terms[0], t);
    Eigen::MatrixXcd out(d, d);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            const double m = -s + r, mp = -s + c;
            const double dm = m - mp;
            out(r, c) = rho0(r, c) * std::exp(-I * omega_a * dm * t - dm * dm * F.real() - I * (m * m - mp * mp) * F.imag());
        }
    }
    return out;
}

inline Series dephasing_series(const CVec& psi0, const std::vector<double>& t_grid, const BcfSpec& bcf,
                               double omega_a) {
    Eigen::Map<const Eigen::VectorXcd> v(psi0.data(), Eigen::Index(psi0.size()));
    const Eigen::MatrixXcd rho0 = v * v.adjoint() / v.squaredNorm();
    const SpinSector sec = SpinSector::full(int(psi0.size()) - 1);
    Series s;
    s.t = t_grid;
    const std::size_t cx = s.add_column("Sx"), cy = s.add_column("Sy"), cz = s.add_column("Sz");
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        const Eigen::MatrixXcd r = dephasing_analytic(rho0, t_grid[k], bcf, omega_a);
        s.value[cx][k] = (r * SpinOp::Sx().dense(sec)).trace().real();
        s.value[cy][k] = (r * SpinOp::Sy().dense(sec)).trace().real();
        s.value[cz][k] = (r * SpinOp::Sz().dense(sec)).trace().real();
    }
    return s;
}

struct CompareEntry {
    std::string name;
    double max_dev = 0.0;
    double max_sigma_ratio = 0.0;   // deviation / combined standard error
    double worst_t = 0.0;
    std::size_t failures = 0;
    bool pass = true;
};

struct CompareReport {
    std::vector<CompareEntry> entries;
    bool pass = true;
};

struct CompareOptions {
    double k_sigma = 3.0;
    double abs_tol = 1e-10;          // used when both sides are deterministic or as a floor
    std::vector<std::string> only;   // restrict to these columns (empty: all shared)
    std::vector<std::size_t> skip_times;
};

// Deviation at each time passes if below k_sigma * sqrt(se_a^2 + se_b^2) or
// below abs_tol.
inline CompareReport compare(const Series& a, const Series& b, const CompareOptions& opt = {}) {
    if (a.t.size() != b.t.size()) throw Error("compare: time grids differ in length");
    for (std::size_t k = 0; k < a.t.size(); ++k)
        if (std::abs(a.t[k] - b.t[k]) > 1e-9 * std::max(1.0, std::abs(a.t[k])))
            throw Error("compare: time grids differ at index " + std::to_string(k));
    std::vector<std::string> cols = opt.only;
    if (cols.empty())
        for (const auto& n : a.names)
            if (b.has(n)) cols.push_back(n);
    if (cols.empty()) throw Error("compare: no shared columns");
    CompareReport rep;
    for (const auto& name : cols) {
        const std::size_t ca = a.column(name), cb = b.column(name);
        CompareEntry e;
        e.name = name;
        for (std::size_t k = 0; k < a.t.size(); ++k) {
            if (std::find(opt.skip_times.begin(), opt.skip_times.end(), k) != opt.skip_times.end()) continue;
            const double dev = std::abs(a.value[ca][k] - b.value[cb][k]);
            double var = 0.0;
            for (double se : {a.stderr_[ca][k], b.stderr_[cb][k]})
                if (std::isfinite(se)) var += se * se;
            const double sigma = std::sqrt(var);
            const double ratio = sigma > 0.0 ? dev / sigma : (dev > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            const bool ok = dev <= opt.abs_tol || (sigma > 0.0 && dev < opt.k_sigma * sigma);
            if (!ok) ++e.failures;
            if (dev > e.max_dev) {
                e.max_dev = dev;
                e.worst_t = a.t[k];
            }
            if (dev > opt.abs_tol) e.max_sigma_ratio = std::max(e.max_sigma_ratio, ratio);
        }
        e.pass = e.failures == 0;
        rep.pass = rep.pass && e.pass;
        rep.entries.push_back(e);
    }
    return rep;
}

}  // namespace nuhops
