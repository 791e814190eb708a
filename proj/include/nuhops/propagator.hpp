#pragma once

// Single-trajectory integration of the shifted hierarchy (nuHOPS) and of the
// unshifted baseline (HOPS) with the Girsanov-shifted drive.
//
// For every exponential term j the hierarchy carries one auxiliary oscillator
// b_j.  With drive zbar = conj(z_t), thermal potential xi and zeroth-slice
// expectation l = <L>_0 the generator is
//
//   -i H + cL L + cLd L^dag
//     + sum_j [ -W_j n_j - i sqrt(G_j) (L - s l) b_j^dag - i sqrt(G_j) (L^dag - l*) b_j ]
//
// nuhops: cL = zbar + sum mu_j^* - i xi^*, cLd = -sum mu_j - i xi, s = 1,
//         mu_j' = -W_j mu_j + G_j l
// hops:   cL = zbar + sum sig_j - i xi^*,  cLd = -i xi,            s = 0,
//         sig_j' = -W_j^* sig_j + G_j^* l^*

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "nuhops/bcf.hpp"
#include "nuhops/hilbert.hpp"
#include "nuhops/noise.hpp"

namespace nuhops {

enum class Mode { nuhops, hops };

inline const char* to_string(Mode m) { return m == Mode::nuhops ? "nuhops" : "hops"; }

struct ModelSpec {
    int two_s = 1;
    SpinOp h_sys;
    SpinOp l_op;
    BcfSpec bcf;
    std::optional<BcfSpec> thermal;
    CVec initial_system;            // full 2s+1 vector, ascending m
    std::optional<cplx> y0;         // coherent initial cavity amplitude

    std::size_t terms() const { return bcf.size(); }

    void validate(bool require_damping = true) const {
        if (two_s < 0) throw ConfigError("model.n: spin length must be non-negative");
        if (!h_sys.is_hermitian(1e-12)) throw ConfigError("model: system Hamiltonian is not Hermitian");
        bcf.validate(require_damping);
        if (bcf.size() > 4) throw ConfigError("bcf.terms: at most 4 exponential terms are supported");
        if (thermal) thermal->validate();
        if (initial_system.size() != std::size_t(two_s + 1))
            throw ConfigError("model.initial: system vector must have 2s+1 entries");
        double n2 = 0.0;
        for (const auto& c : initial_system) n2 += std::norm(c);
        if (!(n2 > 0.0) || !std::isfinite(n2)) throw ConfigError("model.initial: zero or non-finite state");
        if (y0 && bcf.size() != 1) throw ConfigError("model.y0: a coherent cavity requires a single bcf term");
    }
};

// Dephasing spin: H = w_a Sz, L = Sz, alpha = g^2 exp(-(kappa + i w_c) tau).
inline ModelSpec make_dephasing_model(int two_s, double omega_a, double g, double omega_c, double kappa,
                                      double theta, double phi) {
    ModelSpec m;
    m.two_s = two_s;
    m.h_sys = SpinOp::Sz(omega_a);
    m.l_op = SpinOp::Sz();
    m.bcf.terms = {pseudo_mode(g, omega_c, kappa)};
    m.initial_system = spin_coherent(two_s, theta, phi);
    return m;
}

// Open Dicke model: H = w_a Sz, L = Sx, coupling g/sqrt(N) absorbed into G.
inline ModelSpec make_dicke_model(int n, double omega_a, double g, double omega_c, double kappa) {
    ModelSpec m;
    m.two_s = n;
    m.h_sys = SpinOp::Sz(omega_a);
    m.l_op = SpinOp::Sx();
    m.bcf.terms = {pseudo_mode(g / std::sqrt(double(n)), omega_c, kappa)};
    m.initial_system.assign(std::size_t(n + 1), cplx{0.0});
    m.initial_system.back() = 1.0;
    return m;
}

struct PropagatorConfig {
    double dt = 1e-3;
    Mode mode = Mode::nuhops;
    bool adaptive = true;
    double eps_up = 1e-12;
    double eps_low = 1e-16;
    int max_window = 0;             // 0: no cap beyond 2s+1
    int max_fock = 512;
    std::vector<int> fock_dims;     // fixed dims, or starting dims when adaptive
    bool renormalize = true;
    bool energy_frame = false;      // remove Re<H_sys>_0 as a global phase

    void validate(std::size_t terms) const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("propagator.dt: must be positive");
        if (!(eps_low > 0.0 && eps_low < eps_up && eps_up < 1.0))
            throw ConfigError("propagator: require 0 < eps_low < eps_up < 1");
        if (max_fock < 2) throw ConfigError("propagator.max_fock: must be >= 2");
        if (max_window < 0) throw ConfigError("propagator.max_window: must be >= 0");
        if (!fock_dims.empty() && fock_dims.size() != terms)
            throw ConfigError("propagator.fock_dims: one entry per bcf term is required");
        for (int d : fock_dims)
            if (d < 1 || d > max_fock) throw ConfigError("propagator.fock_dims: entries must be in [1, max_fock]");
        if (!adaptive && fock_dims.empty())
            throw ConfigError("propagator.fock_dims: required when adaptive is off");
    }
};

// 1e-3 over the fastest bare rate of the model: the largest |W_j| or a bound on ||H_sys||.
inline double default_dt(const ModelSpec& m) {
    const double s = 0.5 * m.two_s;
    const SpinOp& h = m.h_sys;
    double rate = std::abs(h.c_id) + s * std::abs(h.c_z) + (s + 0.5) * (std::abs(h.c_plus) + std::abs(h.c_minus));
    for (const auto& t : m.bcf.terms) rate = std::max(rate, std::abs(t.W));
    if (m.thermal)
        for (const auto& t : m.thermal->terms) rate = std::max(rate, std::abs(t.W));
    return 1e-3 / std::max(rate, 1.0);
}

struct TrajectoryState {
    HopsState phi;
    std::vector<cplx> mu;           // nuhops: mu_j; hops: Girsanov shift sigma_j
    double t = 0.0;
    std::size_t step = 0;
    std::size_t window_events = 0;
    std::size_t fock_events = 0;
    int max_fock_seen = 0;
    int max_window_seen = 0;
};

struct PmReport {
    double m = 0.0;
    double norm2 = 0.0;
    cplx label{0.0};
    bool negligible = false;        // norm2 below 1e-30, label meaningless
};

namespace detail {

inline int coherent_fock_dim(cplx y, double tail, int cap) {
    // smallest d with sum_{n >= d} e^{-|y|^2}|y|^{2n}/n! below tail
    const double x = std::norm(y);
    double term = std::exp(-x), cum = term;
    for (int d = 1; d <= cap; ++d) {
        if (1.0 - cum < tail) return std::max(d, 2);
        term *= x / d;
        cum += term;
    }
    throw TruncationCapError("initial coherent cavity needs more than max_fock levels");
}

}  // namespace detail

inline TrajectoryState initial_state(const ModelSpec& model, const PropagatorConfig& cfg) {
    model.validate(false);
    cfg.validate(model.terms());
    const std::size_t K = model.terms();
    const int two_s = model.two_s;
    CVec psi = model.initial_system;
    double n2 = 0.0;
    for (const auto& c : psi) n2 += std::norm(c);
    for (auto& c : psi) c /= std::sqrt(n2);

    SpinSector sec = SpinSector::full(two_s);
    if (cfg.adaptive) {
        int lo = 0, hi = two_s;
        while (lo < hi && std::norm(psi[std::size_t(lo)]) <= cfg.eps_low) ++lo;
        while (hi > lo && std::norm(psi[std::size_t(hi)]) <= cfg.eps_low) --hi;
        sec.lo2 = -two_s + 2 * lo;
        sec.hi2 = -two_s + 2 * hi;
    }
    if (cfg.max_window > 0 && sec.dim() > cfg.max_window)
        throw TruncationCapError("truncation cap exceeded: initial spin window larger than max_window");

    FockLadder lad;
    lad.dims = cfg.fock_dims.empty() ? std::vector<int>(K, 2) : cfg.fock_dims;

    TrajectoryState st;
    st.mu.assign(K, cplx{0.0});
    cplx y_hops = 0.0;
    if (model.y0) {
        const cplx mu0 = I * std::sqrt(model.bcf.terms[0].G) * *model.y0;
        if (cfg.mode == Mode::nuhops) {
            st.mu[0] = mu0;
        } else {
            st.mu[0] = std::conj(mu0);
            y_hops = *model.y0;
            if (cfg.adaptive)
                lad.dims[0] = std::max(lad.dims[0], detail::coherent_fock_dim(y_hops, cfg.eps_low, cfg.max_fock));
        }
    }

    CVec win(std::size_t(sec.dim()));
    const std::size_t off = std::size_t((sec.lo2 + two_s) / 2);
    for (std::size_t i = 0; i < win.size(); ++i) win[i] = psi[off + i];
    st.phi = HopsState::product_vacuum(sec, lad, win);
    if (y_hops != 0.0) {
        // unnormalized coherent ladder sum_k y^k / sqrt(k!) |k>, zeroth slice unchanged
        const std::size_t stride = lad.stride(0);
        const int d = lad.dims[0];
        for (int i = 0; i < sec.dim(); ++i) {
            cplx c = st.phi.at(std::size_t(i), 0);
            for (int k = 1; k < d; ++k) {
                c *= y_hops / std::sqrt(double(k));
                st.phi.at(std::size_t(i), std::size_t(k) * stride) = c;
            }
        }
    }
    st.max_window_seen = sec.dim();
    st.max_fock_seen = *std::max_element(lad.dims.begin(), lad.dims.end());
    return st;
}

class Propagator {
public:
    Propagator(ModelSpec model, PropagatorConfig cfg) : model_(std::move(model)), cfg_(std::move(cfg)) {
        model_.validate(false);
        cfg_.validate(model_.terms());
        l_dag_ = model_.l_op.adjoint();
        l_herm_ = model_.l_op.is_hermitian(0.0);
        for (const auto& t : model_.bcf.terms) sqrt_g_.push_back(std::sqrt(t.G));
    }

    const ModelSpec& model() const { return model_; }
    const PropagatorConfig& config() const { return cfg_; }

    TrajectoryState initial() const {
        TrajectoryState st = initial_state(model_, cfg_);
        // the first step must not clip flux out of a boundary slice that already carries weight
        adapt(st);
        return st;
    }

    // <L>_0 from the zeroth slice; throws on a degenerate trajectory.
    cplx zeroth_expectation(const HopsState& shape, const cplx* amp, const SpinOp& op) const {
        const int D = shape.sector.dim();
        const std::size_t A = shape.aux_dim();
        psi0_.resize(std::size_t(D));
        double n0 = 0.0;
        for (int i = 0; i < D; ++i) {
            psi0_[std::size_t(i)] = amp[std::size_t(i) * A];
            n0 += std::norm(psi0_[std::size_t(i)]);
        }
        if (!(n0 >= 1e-30)) throw DegenerateTrajectory("zeroth hierarchy slice has vanishing norm");
        return op.sandwich(shape.sector, psi0_) / n0;
    }

    // Right-hand side on a state with the basis of `shape`.
    void rhs(const HopsState& shape, const cplx* amp, const std::vector<cplx>& mu, cplx drive, cplx xi,
             cplx* damp, std::vector<cplx>& dmu) const {
        const SpinSector& sec = shape.sector;
        const FockLadder& lad = shape.ladder;
        const std::size_t A = shape.aux_dim();
        const std::size_t total = std::size_t(sec.dim()) * A;
        const cplx l = zeroth_expectation(shape, amp, model_.l_op);
        double e = 0.0;
        if (cfg_.energy_frame) e = model_.h_sys.sandwich(sec, psi0_).real() / norm2(psi0_);

        cplx sum_mu = 0.0;
        for (const auto& m : mu) sum_mu += m;
        const bool nu = cfg_.mode == Mode::nuhops;
        const cplx cL = drive + (nu ? std::conj(sum_mu) : sum_mu) - I * std::conj(xi);
        const cplx cLd = (nu ? -sum_mu : cplx{0.0}) - I * xi;

        std::fill(damp, damp + total, cplx{0.0});
        SpinOp gen = model_.h_sys * (-I) + SpinOp::identity(I * e);
        if (l_herm_) {
            gen = gen + model_.l_op * (cL + cLd);
        } else {
            gen = gen + model_.l_op * cL + l_dag_ * cLd;
        }
        gen.apply_add(sec, A, amp, damp);

        lx_.assign(total, cplx{0.0});
        model_.l_op.apply_add(sec, A, amp, lx_.data());
        const cplx* ly = lx_.data();
        if (!l_herm_) {
            ly_.assign(total, cplx{0.0});
            l_dag_.apply_add(sec, A, amp, ly_.data());
            ly = ly_.data();
        }
        const cplx l_up = nu ? l : cplx{0.0};
        const cplx l_dn = std::conj(l);

        for (std::size_t j = 0; j < lad.terms(); ++j) {
            const cplx W = model_.bcf.terms[j].W;
            const cplx cg = -I * sqrt_g_[j];
            const std::size_t stride = lad.stride(j);
            const std::size_t d = std::size_t(lad.dims[j]);
            const std::size_t outer = total / (stride * d);
            ensure_sqrt(d);
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t n = 0; n < d; ++n) {
                    const std::size_t base = (o * d + n) * stride;
                    const cplx wn = -W * double(n);
                    const cplx up = n + 1 < d ? cg * sqrt_n_[n + 1] : cplx{0.0};
                    const cplx dn = n > 0 ? cg * sqrt_n_[n] : cplx{0.0};
                    for (std::size_t r = 0; r < stride; ++r) {
                        const std::size_t k = base + r;
                        const cplx x = amp[k];
                        if (n > 0) damp[k] += wn * x;
                        if (n + 1 < d) damp[k + stride] += up * (lx_[k] - l_up * x);
                        if (n > 0) damp[k - stride] += dn * (ly[k] - l_dn * x);
                    }
                }
            }
        }

        dmu.resize(mu.size());
        for (std::size_t j = 0; j < mu.size(); ++j) {
            const auto& t = model_.bcf.terms[j];
            dmu[j] = nu ? -t.W * mu[j] + t.G * l : -std::conj(t.W) * mu[j] + std::conj(t.G) * std::conj(l);
        }
    }

    // One classical RK4 step using noise samples 2n, 2n+1, 2n+2.
    void step(TrajectoryState& st, const NoisePath& noise, const NoisePath* thermal) const {
        const std::size_t k0 = 2 * st.step;
        if (k0 + 2 >= noise.z.size())
            throw Error("step: noise path does not cover the requested step");
        if (thermal && k0 + 2 >= thermal->z.size())
            throw Error("step: thermal path does not cover the requested step");
        const double dt = cfg_.dt;
        const cplx d0 = noise.drive(k0), d1 = noise.drive(k0 + 1), d2 = noise.drive(k0 + 2);
        const cplx x0 = thermal ? thermal->z[k0] : 0.0, x1 = thermal ? thermal->z[k0 + 1] : 0.0,
                   x2 = thermal ? thermal->z[k0 + 2] : 0.0;

        const std::size_t n = st.phi.size();
        const std::size_t K = st.mu.size();
        for (auto* v : {&k1_, &k2_, &k3_, &k4_, &tmp_}) v->resize(n);
        std::vector<cplx> m1, m2, m3, m4, mt(K);

        rhs(st.phi, st.phi.amp.data(), st.mu, d0, x0, k1_.data(), m1);
        axpy(st.phi.amp, k1_, 0.5 * dt, tmp_);
        for (std::size_t j = 0; j < K; ++j) mt[j] = st.mu[j] + 0.5 * dt * m1[j];
        rhs(st.phi, tmp_.data(), mt, d1, x1, k2_.data(), m2);
        axpy(st.phi.amp, k2_, 0.5 * dt, tmp_);
        for (std::size_t j = 0; j < K; ++j) mt[j] = st.mu[j] + 0.5 * dt * m2[j];
        rhs(st.phi, tmp_.data(), mt, d1, x1, k3_.data(), m3);
        axpy(st.phi.amp, k3_, dt, tmp_);
        for (std::size_t j = 0; j < K; ++j) mt[j] = st.mu[j] + dt * m3[j];
        rhs(st.phi, tmp_.data(), mt, d2, x2, k4_.data(), m4);

        const double c = dt / 6.0;
        bool finite = true;
        for (std::size_t i = 0; i < n; ++i) {
            auto& a = st.phi.amp[i];
            a += c * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
            finite = finite && std::isfinite(a.real()) && std::isfinite(a.imag());
        }
        for (std::size_t j = 0; j < K; ++j) {
            st.mu[j] += c * (m1[j] + 2.0 * m2[j] + 2.0 * m3[j] + m4[j]);
            finite = finite && std::isfinite(st.mu[j].real()) && std::isfinite(st.mu[j].imag());
        }
        if (!finite)
            throw NumericalError("step: non-finite amplitudes at t = " + std::to_string(st.t + dt));
        const double n0 = st.phi.zeroth_norm2();
        if (!(n0 >= 1e-30)) throw DegenerateTrajectory("zeroth hierarchy slice has vanishing norm");
        if (cfg_.renormalize) {
            const double inv = 1.0 / std::sqrt(n0);
            for (auto& a : st.phi.amp) a *= inv;
        }
        st.t += dt;
        ++st.step;
    }

    // Grow or shrink the spin window and the Fock cutoffs by at most one unit
    // per side and term.
    void adapt(TrajectoryState& st) const {
        if (!cfg_.adaptive) return;
        HopsState& phi = st.phi;
        const SpinSector sec = phi.sector;
        const double total = phi.norm2();
        if (!(total > 0.0)) throw DegenerateTrajectory("adapt: zero state");
        const int D = sec.dim();
        std::vector<double> sn(static_cast<std::size_t>(D));
        for (int i = 0; i < D; ++i) sn[std::size_t(i)] = phi.slice_norm2(std::size_t(i)) / total;

        SpinSector ns = sec;
        const bool lo_phys = sec.lo2 == -sec.two_s, hi_phys = sec.hi2 == sec.two_s;
        if (sn.front() > cfg_.eps_up && !lo_phys) ns.lo2 -= 2;
        else if (D > 2 && sn[0] < cfg_.eps_low && sn[1] < cfg_.eps_low) ns.lo2 += 2;
        if (sn.back() > cfg_.eps_up && !hi_phys) ns.hi2 += 2;
        else if (ns.dim() > 2 && sn[std::size_t(D - 1)] < cfg_.eps_low && sn[std::size_t(D - 2)] < cfg_.eps_low)
            ns.hi2 -= 2;
        if (cfg_.max_window > 0 && ns.dim() > cfg_.max_window)
            throw TruncationCapError("truncation cap exceeded: spin window would exceed max_window = " +
                                     std::to_string(cfg_.max_window));

        FockLadder nl = phi.ladder;
        const std::size_t A = phi.aux_dim();
        for (std::size_t j = 0; j < nl.terms(); ++j) {
            const std::size_t stride = phi.ladder.stride(j);
            const std::size_t d = std::size_t(phi.ladder.dims[j]);
            double worst_top = 0.0, worst_two = 0.0;
            for (int i = 0; i < D; ++i) {
                if (sn[std::size_t(i)] <= cfg_.eps_low) continue;
                const auto sl = phi.slice(std::size_t(i));
                double top = 0.0, next = 0.0, s = 0.0;
                for (std::size_t a = 0; a < A; ++a) {
                    const double w = std::norm(sl[a]);
                    s += w;
                    const std::size_t nj = (a / stride) % d;
                    if (nj + 1 == d) top += w;
                    else if (nj + 2 == d) next += w;
                }
                worst_top = std::max(worst_top, top / s);
                worst_two = std::max(worst_two, (top + next) / s);
            }
            if (worst_top > cfg_.eps_up) {
                if (nl.dims[j] >= cfg_.max_fock)
                    throw TruncationCapError("truncation cap exceeded: Fock ladder of term " + std::to_string(j) +
                                             " would exceed max_fock = " + std::to_string(cfg_.max_fock));
                ++nl.dims[j];
            } else if (worst_two < cfg_.eps_low && nl.dims[j] > 2) {
                --nl.dims[j];
            }
        }

        if (ns == sec && nl == phi.ladder) return;
        if (!(ns == sec)) ++st.window_events;
        if (!(nl == phi.ladder)) ++st.fock_events;
        st.phi = rebase(phi, ns, nl);
        st.max_window_seen = std::max(st.max_window_seen, ns.dim());
        for (int d : nl.dims) st.max_fock_seen = std::max(st.max_fock_seen, d);
    }

    void advance(TrajectoryState& st, const NoisePath& noise, const NoisePath* thermal) const {
        step(st, noise, thermal);
        adapt(st);
    }

private:
    static double norm2(const CVec& v) {
        double s = 0.0;
        for (const auto& c : v) s += std::norm(c);
        return s;
    }
    static void axpy(const CVec& y, const CVec& k, double h, CVec& out) {
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + h * k[i];
    }
    void ensure_sqrt(std::size_t d) const {
        while (sqrt_n_.size() <= d) sqrt_n_.push_back(std::sqrt(double(sqrt_n_.size())));
    }

    ModelSpec model_;
    PropagatorConfig cfg_;
    SpinOp l_dag_;
    bool l_herm_ = true;
    std::vector<cplx> sqrt_g_;
    // scratch, one propagator per worker
    mutable CVec psi0_, lx_, ly_, k1_, k2_, k3_, k4_, tmp_;
    mutable std::vector<double> sqrt_n_;
};

// Free-function forms of the propagator operations.

struct RhsResult {
    HopsState dphi;
    std::vector<cplx> dmu;
};

inline RhsResult rhs(const TrajectoryState& st, const ModelSpec& model, const PropagatorConfig& cfg, cplx drive,
                     cplx xi = 0.0) {
    Propagator p(model, cfg);
    RhsResult r{HopsState(st.phi.sector, st.phi.ladder), {}};
    p.rhs(st.phi, st.phi.amp.data(), st.mu, drive, xi, r.dphi.amp.data(), r.dmu);
    return r;
}

inline TrajectoryState step_rk4(TrajectoryState st, const NoisePath& noise, const NoisePath* thermal,
                                const ModelSpec& model, const PropagatorConfig& cfg) {
    Propagator(model, cfg).step(st, noise, thermal);
    return st;
}

inline TrajectoryState adapt_basis(TrajectoryState st, const ModelSpec& model, const PropagatorConfig& cfg) {
    Propagator(model, cfg).adapt(st);
    return st;
}

// Per-m norms and coherent labels <p_m|b|p_m>/<p_m|p_m> of a single-term state.
inline std::vector<PmReport> diagnose_pm(const TrajectoryState& st) {
    const HopsState& phi = st.phi;
    if (phi.ladder.terms() != 1) throw Error("diagnose_pm: single-term hierarchy required");
    const std::size_t d = std::size_t(phi.ladder.dims[0]);
    std::vector<PmReport> out;
    for (int i = 0; i < phi.sector.dim(); ++i) {
        const auto sl = phi.slice(std::size_t(i));
        PmReport r;
        r.m = phi.sector.m(i);
        cplx b = 0.0;
        for (std::size_t n = 0; n < d; ++n) {
            r.norm2 += std::norm(sl[n]);
            if (n > 0) b += std::conj(sl[n - 1]) * std::sqrt(double(n)) * sl[n];
        }
        r.negligible = r.norm2 < 1e-30;
        r.label = r.negligible ? cplx{0.0} : b / r.norm2;
        out.push_back(r);
    }
    return out;
}

using TrajectoryObserver = std::function<void(const TrajectoryState&)>;

// Integrates n_steps from the initial state, calling `observe` at step 0 and
// after every `stride` steps.
inline TrajectoryState run_trajectory(const Propagator& prop, const NoisePath& noise, const NoisePath* thermal,
                                      std::size_t n_steps, std::size_t stride, const TrajectoryObserver& observe,
                                      std::optional<TrajectoryState> start = std::nullopt) {
    if (stride == 0) throw Error("run_trajectory: stride must be positive");
    TrajectoryState st = start ? std::move(*start) : prop.initial();
    if (observe && st.step % stride == 0) observe(st);
    while (st.step < n_steps) {
        prop.advance(st, noise, thermal);
        if (observe && st.step % stride == 0) observe(st);
    }
    return st;
}

inline TrajectoryState run_trajectory(const ModelSpec& model, const PropagatorConfig& cfg, const NoisePath& noise,
                                      const NoisePath* thermal, std::size_t n_steps, std::size_t stride,
                                      const TrajectoryObserver& observe) {
    return run_trajectory(Propagator(model, cfg), noise, thermal, n_steps, stride, observe);
}

}  // namespace nuhops
