#pragma once

// Per-trajectory observables and the derived ensemble quantities.
//
// Cavity moments use the auxiliary ladder as a stand-in for the cavity: with
// B = i g a and the shifted hierarchy, a acts on |Phi> as A = b + c with
// c = -i mu / sqrt(G) (c = 0 for the unshifted hierarchy).  The trajectory
// contribution to <a^dag^m a^n> is <phi_m|phi_n> / <psi0|psi0> where
// phi_k = <0_b| A^k |Phi>.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>

#include "nuhops/propagator.hpp"

namespace nuhops {

// Normalized zeroth slice as a full-basis density matrix.
inline Eigen::MatrixXcd trajectory_weight_state(const TrajectoryState& st) {
    const CVec psi = embed_full(st.phi.sector, zeroth_component(st.phi));
    Eigen::Map<const Eigen::VectorXcd> v(psi.data(), Eigen::Index(psi.size()));
    const double n2 = v.squaredNorm();
    if (!(n2 > 0.0)) throw DegenerateTrajectory("trajectory_weight_state: zero zeroth slice");
    return v * v.adjoint() / n2;
}

inline double aux_occupation(const TrajectoryState& st, std::size_t j) {
    const HopsState& phi = st.phi;
    if (j >= phi.ladder.terms()) throw Error("aux_occupation: term index out of range");
    const std::size_t A = phi.aux_dim(), stride = phi.ladder.stride(j), d = std::size_t(phi.ladder.dims[j]);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) {
        const double w = std::norm(phi.amp[k]);
        den += w;
        num += double(((k % A) / stride) % d) * w;
    }
    return den > 0.0 ? num / den : 0.0;
}

// Shift constant c of A = b + c for the current trajectory state.
inline cplx cavity_offset(const TrajectoryState& st, const ModelSpec& model, Mode mode) {
    if (model.terms() != 1) throw Error("cavity moments require a single bcf term");
    if (mode == Mode::hops) return 0.0;
    if (model.bcf.terms[0].G == 0.0) throw Error("cavity moments need a nonzero coupling in nuhops mode");
    return -I * st.mu[0] / std::sqrt(model.bcf.terms[0].G);
}

// phi_k = <0| (b + c)^k |Phi>, k = 0..kmax, each a window-sized system vector.
inline std::vector<CVec> cavity_vectors(const TrajectoryState& st, const ModelSpec& model, Mode mode,
                                        int kmax) {
    const HopsState& phi = st.phi;
    const cplx c = cavity_offset(st, model, mode);
    const int D = phi.sector.dim();
    const int d = phi.ladder.dims[0];
    // <0| b^j |Phi> = sqrt(j!) psi^(j)
    std::vector<CVec> bj(std::size_t(kmax + 1), CVec(std::size_t(D)));
    double fact = 1.0;
    for (int j = 0; j <= kmax; ++j) {
        if (j > 0) fact *= j;
        if (j >= d) continue;
        const double sf = std::sqrt(fact);
        for (int i = 0; i < D; ++i) bj[std::size_t(j)][std::size_t(i)] = sf * phi.at(std::size_t(i), std::size_t(j));
    }
    std::vector<CVec> out(std::size_t(kmax + 1), CVec(std::size_t(D)));
    for (int k = 0; k <= kmax; ++k) {
        double binom = 1.0;
        for (int j = 0; j <= k; ++j) {
            if (j > 0) binom = binom * (k - j + 1) / j;
            const cplx coef = binom * std::pow(c, k - j);
            for (int i = 0; i < D; ++i) out[std::size_t(k)][std::size_t(i)] += coef * bj[std::size_t(j)][std::size_t(i)];
        }
    }
    return out;
}

// Trajectory contribution to <(a^dag)^m a^n>.
inline cplx cavity_moment(const TrajectoryState& st, const ModelSpec& model, Mode mode, int m, int n) {
    if (m < 0 || n < 0) throw Error("cavity_moment: negative order");
    const auto phi = cavity_vectors(st, model, mode, std::max(m, n));
    double n0 = 0.0;
    for (const auto& v : phi[0]) n0 += std::norm(v);
    if (!(n0 > 0.0)) throw DegenerateTrajectory("cavity_moment: zero zeroth slice");
    cplx s = 0.0;
    for (std::size_t i = 0; i < phi[0].size(); ++i) s += std::conj(phi[std::size_t(m)][i]) * phi[std::size_t(n)][i];
    return s / n0;
}

// Moments needed for C3, as ensemble means.
struct CavityMoments {
    cplx a{0.0}, aa{0.0}, aaa{0.0}, ada{0.0}, adaa{0.0};
};

// Standard joint third cumulant of three (not necessarily commuting) operators
// given the ordered moments.
inline cplx kappa3(cplx m123, cplx m12, cplx m13, cplx m23, cplx m1, cplx m2, cplx m3) {
    return m123 - m12 * m3 - m13 * m2 - m23 * m1 + 2.0 * m1 * m2 * m3;
}

// (kappa3(a,a,a), kappa3(a^dag,a,a))
inline std::pair<cplx, cplx> third_cumulants(const CavityMoments& m) {
    const cplx ad = std::conj(m.a);
    return {kappa3(m.aaa, m.aa, m.aa, m.aa, m.a, m.a, m.a), kappa3(m.adaa, m.ada, m.ada, m.aa, ad, m.a, m.a)};
}

inline double c3(const CavityMoments& m) {
    const auto [k_aaa, k_daa] = third_cumulants(m);
    return std::abs(k_aaa) + std::abs(k_daa);
}

// Moments of a cavity density matrix in the Fock basis, for oracles and tests.
inline CavityMoments moments_from_density(const Eigen::MatrixXcd& rho) {
    const Eigen::Index d = rho.rows();
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(d, d);
    for (Eigen::Index n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(double(n));
    const Eigen::MatrixXcd ad = a.adjoint();
    auto ev = [&](const Eigen::MatrixXcd& op) { return (rho * op).trace(); };
    CavityMoments m;
    m.a = ev(a);
    m.aa = ev(a * a);
    m.aaa = ev(a * a * a);
    m.ada = ev(ad * a);
    m.adaa = ev(ad * a * a);
    return m;
}

// Husimi function of a Fock-basis density matrix, Q = <beta|rho|beta>/pi.
inline double husimi_q(const Eigen::MatrixXcd& rho, cplx beta) {
    const Eigen::Index d = rho.rows();
    Eigen::VectorXcd c(d);
    const double pref = std::exp(-0.5 * std::norm(beta));
    cplx p = pref;
    for (Eigen::Index n = 0; n < d; ++n) {
        if (n > 0) p *= beta / std::sqrt(double(n));
        c(n) = p;  // <n|beta>
    }
    return (c.adjoint() * rho * c)(0, 0).real() / M_PI;
}

struct Grid2D {
    std::vector<double> x;  // first coordinate (re beta, or phi)
    std::vector<double> y;  // second coordinate (im beta, or theta)
};

inline Grid2D square_grid(int n, double radius) {
    if (n < 2 || !(radius > 0.0)) throw Error("square_grid: need n >= 2 and radius > 0");
    Grid2D g;
    for (int k = 0; k < n; ++k) {
        const double v = -radius + 2.0 * radius * k / (n - 1);
        g.x.push_back(v);
        g.y.push_back(v);
    }
    return g;
}

inline double default_husimi_radius(double mean_n) { return 1.5 * (std::sqrt(std::max(mean_n, 0.0)) + 3.0); }

// Field values ordered with x fastest.
inline std::vector<double> husimi_q_aux(const Eigen::MatrixXcd& rho_aux, const Grid2D& grid) {
    std::vector<double> out;
    out.reserve(grid.x.size() * grid.y.size());
    for (double y : grid.y)
        for (double x : grid.x) out.push_back(husimi_q(rho_aux, cplx(x, y)));
    return out;
}

inline std::vector<double> husimi_q_aux(const TrajectoryState& st, const Grid2D& grid) {
    return husimi_q_aux(partial_trace_system(st.phi), grid);
}

// Product grid with phi in [0, 2 pi) (n_phi points) and theta in [0, pi]
// (n_theta points, endpoints included).
inline Grid2D sphere_grid(int n_phi = 121, int n_theta = 61) {
    if (n_phi < 1 || n_theta < 2) throw Error("sphere_grid: need n_phi >= 1 and n_theta >= 2");
    Grid2D g;
    for (int k = 0; k < n_phi; ++k) g.x.push_back(2.0 * M_PI * k / n_phi);
    for (int k = 0; k < n_theta; ++k) g.y.push_back(M_PI * k / (n_theta - 1));
    return g;
}

// Spin-Q evaluator.  The phi dependence of |theta, phi> is a pure phase per m,
// so only one coherent state per theta is stored.
class SpinQ {
public:
    SpinQ(int two_s, Grid2D grid) : two_s_(two_s), grid_(std::move(grid)) {
        for (double th : grid_.y) base_.push_back(spin_coherent(two_s, th, 0.0));
    }

    const Grid2D& grid() const { return grid_; }

    // <theta,phi|s,m> phases: spin_coherent(theta, phi)_m = e^{-i phi (m - s)} spin_coherent(theta, 0)_m
    std::vector<double> pure(std::span<const cplx> psi_full) const {
        check(psi_full.size());
        double n2 = 0.0;
        for (const auto& c : psi_full) n2 += std::norm(c);
        if (!(n2 > 0.0)) throw Error("spin_q: zero state");
        const double pref = (two_s_ + 1) / (4.0 * M_PI) / n2;
        std::vector<double> out;
        out.reserve(grid_.x.size() * grid_.y.size());
        const int d = two_s_ + 1;
        CVec w(static_cast<std::size_t>(d));
        for (std::size_t t = 0; t < grid_.y.size(); ++t) {
            for (int k = 0; k < d; ++k) w[std::size_t(k)] = std::conj(base_[t][std::size_t(k)]) * psi_full[std::size_t(k)];
            for (double ph : grid_.x) {
                // conj of e^{-i phi (m - s)}, with m - s = k - 2s
                const cplx step = std::exp(I * ph);
                cplx p = std::exp(-I * ph * double(two_s_));
                cplx acc = 0.0;
                for (int k = 0; k < d; ++k) {
                    acc += p * w[std::size_t(k)];
                    p *= step;
                }
                out.push_back(pref * std::norm(acc));
            }
        }
        return out;
    }

    std::vector<double> mixed(const Eigen::MatrixXcd& rho) const {
        check(std::size_t(rho.rows()));
        const int d = two_s_ + 1;
        const double pref = (two_s_ + 1) / (4.0 * M_PI);
        std::vector<double> out;
        for (std::size_t t = 0; t < grid_.y.size(); ++t) {
            for (double ph : grid_.x) {
                Eigen::VectorXcd v(d);
                for (int k = 0; k < d; ++k)
                    v(k) = base_[t][std::size_t(k)] * std::exp(-I * ph * (double(k) - double(two_s_)));
                out.push_back(pref * (v.adjoint() * rho * v)(0, 0).real());
            }
        }
        return out;
    }

private:
    void check(std::size_t n) const {
        if (n != std::size_t(two_s_ + 1)) throw Error("spin_q: state dimension does not match 2s+1");
    }

    int two_s_;
    Grid2D grid_;
    std::vector<CVec> base_;
};

inline std::vector<double> spin_q(const Eigen::MatrixXcd& rho, const Grid2D& grid) {
    const int two_s = int(rho.rows()) - 1;
    return SpinQ(two_s, grid).mixed(rho);
}

inline std::vector<double> spin_q_pure(std::span<const cplx> psi_full, const Grid2D& grid) {
    const int two_s = int(psi_full.size()) - 1;
    return SpinQ(two_s, grid).pure(psi_full);
}

// What to record for every trajectory.  Scalars are sampled every `stride`
// steps; fields once, at the record time closest to field_time.
struct ObservableRequest {
    bool spin_xyz = true;
    bool rho_sys = false;
    bool aux_occupation = false;
    bool cavity_moments = false;
    bool c3 = false;
    std::size_t stride = 1;
    struct Field {
        int nx = 0, ny = 0;
        double radius = 0.0;        // husimi only; 0 selects the default
        double time = 0.0;
    };
    std::optional<Field> spinq;
    std::optional<Field> husimi;
};

inline const std::vector<std::string>& moment_names() {
    static const std::vector<std::string> n{"a", "aa", "aaa", "ada", "adaa"};
    return n;
}

// Column layout of one record row plus the field block.
class ObservableLayout {
public:
    ObservableLayout(const ModelSpec& model, Mode mode, ObservableRequest req)
        : model_(model), mode_(mode), req_(std::move(req)) {
        if (req_.stride == 0) throw ConfigError("observables.stride: must be positive");
        if (req_.c3) req_.cavity_moments = true;
        if (req_.cavity_moments && model.terms() != 1)
            throw ConfigError("observables.cavity_moments: requires a single bcf term");
        if (req_.spin_xyz)
            for (const char* n : {"Sx", "Sy", "Sz"}) names_.emplace_back(n);
        if (req_.aux_occupation)
            for (std::size_t j = 0; j < model.terms(); ++j) names_.push_back("n_aux_" + std::to_string(j));
        if (req_.cavity_moments) {
            moment_col_ = names_.size();
            for (const auto& n : moment_names()) names_.push_back(n);
        }
        if (req_.rho_sys) {
            rho_col_ = names_.size();
            const int d = model.two_s + 1;
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) names_.push_back("rho_" + std::to_string(r) + "_" + std::to_string(c));
        }
        if (req_.spinq) {
            const auto& f = *req_.spinq;
            spinq_.emplace(model.two_s, sphere_grid(f.nx > 0 ? f.nx : 121, f.ny > 0 ? f.ny : 61));
        }
        if (req_.husimi) {
            if (model.terms() != 1) throw ConfigError("observables.husimi: requires a single bcf term");
            const auto& f = *req_.husimi;
            const int n = f.nx > 0 ? f.nx : 81;
            husimi_grid_ = square_grid(n, f.radius > 0.0 ? f.radius : default_husimi_radius(0.0));
        }
    }

    const ObservableRequest& request() const { return req_; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t columns() const { return names_.size(); }
    std::optional<std::size_t> moment_column() const { return moment_col_; }
    bool has_c3() const { return req_.c3; }

    std::size_t spinq_size() const { return spinq_ ? spinq_->grid().x.size() * spinq_->grid().y.size() : 0; }
    std::size_t husimi_size() const { return husimi_grid_ ? husimi_grid_->x.size() * husimi_grid_->y.size() : 0; }
    std::size_t field_size() const { return spinq_size() + husimi_size(); }
    const std::optional<SpinQ>& spinq() const { return spinq_; }
    const std::optional<Grid2D>& husimi_grid() const { return husimi_grid_; }

    void evaluate(const TrajectoryState& st, cplx* out) const {
        const CVec psi = zeroth_component(st.phi);
        double n0 = 0.0;
        for (const auto& c : psi) n0 += std::norm(c);
        if (!(n0 > 0.0)) throw DegenerateTrajectory("observables: zero zeroth slice");
        std::size_t k = 0;
        if (req_.spin_xyz) {
            out[k++] = SpinOp::Sx().sandwich(st.phi.sector, psi).real() / n0;
            out[k++] = SpinOp::Sy().sandwich(st.phi.sector, psi).real() / n0;
            out[k++] = SpinOp::Sz().sandwich(st.phi.sector, psi).real() / n0;
        }
        if (req_.aux_occupation)
            for (std::size_t j = 0; j < model_.terms(); ++j) out[k++] = aux_occupation(st, j);
        if (req_.cavity_moments) {
            const auto phi = cavity_vectors(st, model_, mode_, 3);
            const auto dot = [&](int m, int n) {
                cplx s = 0.0;
                for (std::size_t i = 0; i < psi.size(); ++i) s += std::conj(phi[std::size_t(m)][i]) * phi[std::size_t(n)][i];
                return s / n0;
            };
            out[k++] = dot(0, 1);
            out[k++] = dot(0, 2);
            out[k++] = dot(0, 3);
            out[k++] = dot(1, 1);
            out[k++] = dot(1, 2);
        }
        if (req_.rho_sys) {
            const CVec full = embed_full(st.phi.sector, psi);
            for (const auto& r : full)
                for (const auto& c : full) out[k++] = r * std::conj(c) / n0;
        }
    }

    void evaluate_fields(const TrajectoryState& st, cplx* out) const {
        std::size_t k = 0;
        if (spinq_) {
            const CVec full = embed_full(st.phi.sector, zeroth_component(st.phi));
            for (double v : spinq_->pure(full)) out[k++] = v;
        }
        if (husimi_grid_)
            for (double v : husimi_q_aux(st, *husimi_grid_)) out[k++] = v;
    }

private:
    ModelSpec model_;
    Mode mode_;
    ObservableRequest req_;
    std::vector<std::string> names_;
    std::optional<std::size_t> moment_col_;
    std::optional<std::size_t> rho_col_;
    std::optional<SpinQ> spinq_;
    std::optional<Grid2D> husimi_grid_;
};

}  // namespace nuhops
