#pragma once

// Dense HOPS state tensors over (collective-spin window) x (Fock ladders).
//
// Layout is row-major with the spin index slowest: amplitude (i, a) lives at
// i * aux_dim + a, where i indexes the S^z window and a is the flattened
// multi-index over the auxiliary Fock ladders (term 0 slowest).  All m values
// are stored doubled so half-integer spins never appear as floating keys.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>

#include "nuhops/core.hpp"

namespace nuhops {

struct SpinSector {
    int two_s = 0;
    int lo2 = 0;  // 2 * m_min of the active window
    int hi2 = 0;  // 2 * m_max of the active window

    static SpinSector full(int two_s) { return SpinSector{two_s, -two_s, two_s}; }

    int dim() const { return (hi2 - lo2) / 2 + 1; }
    double s() const { return 0.5 * two_s; }
    double m(int idx) const { return 0.5 * (lo2 + 2 * idx); }
    int m2(int idx) const { return lo2 + 2 * idx; }
    bool contains(int m2v) const { return m2v >= lo2 && m2v <= hi2; }
    int index_of(int m2v) const { return (m2v - lo2) / 2; }
    bool is_full() const { return lo2 == -two_s && hi2 == two_s; }

    void validate() const {
        if (two_s < 0) throw Error("spin sector: two_s must be non-negative");
        if (lo2 > hi2) throw Error("spin sector: empty window");
        if (lo2 < -two_s || hi2 > two_s) throw Error("spin sector: window exceeds physical range");
        if (((lo2 + two_s) % 2) != 0 || ((hi2 + two_s) % 2) != 0)
            throw Error("spin sector: window bounds have wrong parity");
    }

    friend bool operator==(const SpinSector&, const SpinSector&) = default;
};

// S+ |s,m> = c |s,m+1>, all arguments doubled.
inline double splus_coef(int two_s, int m2) {
    const double v = 0.25 * (double(two_s) * (two_s + 2) - double(m2) * (m2 + 2));
    return v > 0.0 ? std::sqrt(v) : 0.0;
}

// S- |s,m> = c |s,m-1>.
inline double sminus_coef(int two_s, int m2) {
    const double v = 0.25 * (double(two_s) * (two_s + 2) - double(m2) * (m2 - 2));
    return v > 0.0 ? std::sqrt(v) : 0.0;
}

struct FockLadder {
    std::vector<int> dims;

    std::size_t terms() const { return dims.size(); }
    std::size_t total() const {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               [](std::size_t a, int d) { return a * std::size_t(d); });
    }
    // Distance in the flattened aux index between n_j and n_j + 1.
    std::size_t stride(std::size_t j) const {
        std::size_t s = 1;
        for (std::size_t k = j + 1; k < dims.size(); ++k) s *= std::size_t(dims[k]);
        return s;
    }
    void validate() const {
        for (int d : dims)
            if (d < 1) throw Error("fock ladder: every dimension must be >= 1");
    }

    friend bool operator==(const FockLadder&, const FockLadder&) = default;
};

struct HopsState {
    SpinSector sector;
    FockLadder ladder;
    CVec amp;

    HopsState() = default;
    HopsState(SpinSector sec, FockLadder lad)
        : sector(sec), ladder(std::move(lad)), amp(std::size_t(sector.dim()) * ladder.total()) {
        sector.validate();
        ladder.validate();
    }

    std::size_t aux_dim() const { return ladder.total(); }
    std::size_t size() const { return amp.size(); }
    cplx& at(std::size_t i, std::size_t a) { return amp[i * aux_dim() + a]; }
    const cplx& at(std::size_t i, std::size_t a) const { return amp[i * aux_dim() + a]; }

    std::span<cplx> slice(std::size_t i) { return {amp.data() + i * aux_dim(), aux_dim()}; }
    std::span<const cplx> slice(std::size_t i) const {
        return {amp.data() + i * aux_dim(), aux_dim()};
    }

    double norm2() const {
        double s = 0.0;
        for (const auto& c : amp) s += std::norm(c);
        return s;
    }
    double slice_norm2(std::size_t i) const {
        double s = 0.0;
        for (const auto& c : slice(i)) s += std::norm(c);
        return s;
    }
    double zeroth_norm2() const {
        double s = 0.0;
        for (int i = 0; i < sector.dim(); ++i) s += std::norm(at(std::size_t(i), 0));
        return s;
    }

    // Product state psi (window-sized) with every auxiliary oscillator in |0>.
    static HopsState product_vacuum(SpinSector sec, FockLadder lad, std::span<const cplx> psi) {
        HopsState st(sec, std::move(lad));
        if (psi.size() != std::size_t(sec.dim()))
            throw Error("product_vacuum: system vector does not match window");
        for (std::size_t i = 0; i < psi.size(); ++i) st.at(i, 0) = psi[i];
        return st;
    }
};

// Copy into a new basis. Overlapping amplitudes are kept, the rest is zero.
inline HopsState rebase(const HopsState& src, SpinSector sec, FockLadder lad) {
    if (lad.terms() != src.ladder.terms()) throw Error("rebase: term count mismatch");
    HopsState dst(sec, std::move(lad));
    const std::size_t k = dst.ladder.terms();
    std::vector<int> n(k, 0);
    const std::size_t src_aux = src.aux_dim();
    for (int i = 0; i < src.sector.dim(); ++i) {
        const int m2v = src.sector.m2(i);
        if (!sec.contains(m2v)) continue;
        const std::size_t di = std::size_t(sec.index_of(m2v));
        std::fill(n.begin(), n.end(), 0);
        for (std::size_t a = 0; a < src_aux; ++a) {
            bool inside = true;
            std::size_t da = 0;
            for (std::size_t j = 0; j < k; ++j) {
                if (n[j] >= dst.ladder.dims[j]) inside = false;
                da = da * std::size_t(dst.ladder.dims[j]) + std::size_t(n[j]);
            }
            if (inside) dst.at(di, da) = src.at(std::size_t(i), a);
            for (std::size_t j = k; j-- > 0;) {
                if (++n[j] < src.ladder.dims[j]) break;
                n[j] = 0;
            }
        }
    }
    return dst;
}

// Banded collective-spin operator  c_id + c_z S^z + c_plus S^+ + c_minus S^-.
struct SpinOp {
    cplx c_id{0.0};
    cplx c_z{0.0};
    cplx c_plus{0.0};
    cplx c_minus{0.0};

    static SpinOp identity(cplx c = 1.0) { return {c, 0.0, 0.0, 0.0}; }
    static SpinOp Sz(cplx c = 1.0) { return {0.0, c, 0.0, 0.0}; }
    static SpinOp Splus(cplx c = 1.0) { return {0.0, 0.0, c, 0.0}; }
    static SpinOp Sminus(cplx c = 1.0) { return {0.0, 0.0, 0.0, c}; }
    static SpinOp Sx(cplx c = 1.0) { return {0.0, 0.0, 0.5 * c, 0.5 * c}; }
    static SpinOp Sy(cplx c = 1.0) { return {0.0, 0.0, -0.5 * I * c, 0.5 * I * c}; }

    SpinOp adjoint() const { return {std::conj(c_id), std::conj(c_z), std::conj(c_minus), std::conj(c_plus)}; }
    bool is_hermitian(double tol = 1e-15) const {
        const SpinOp d = adjoint();
        return std::abs(d.c_id - c_id) <= tol && std::abs(d.c_z - c_z) <= tol &&
               std::abs(d.c_plus - c_plus) <= tol && std::abs(d.c_minus - c_minus) <= tol;
    }
    bool is_zero() const { return c_id == 0.0 && c_z == 0.0 && c_plus == 0.0 && c_minus == 0.0; }
    bool is_diagonal() const { return c_plus == 0.0 && c_minus == 0.0; }

    SpinOp operator+(const SpinOp& o) const {
        return {c_id + o.c_id, c_z + o.c_z, c_plus + o.c_plus, c_minus + o.c_minus};
    }
    SpinOp operator*(cplx s) const { return {s * c_id, s * c_z, s * c_plus, s * c_minus}; }

    // Matrix element <m_row| op |m_col> (doubled m values).
    cplx element(int two_s, int row2, int col2) const {
        if (row2 == col2) return c_id + c_z * (0.5 * col2);
        if (row2 == col2 + 2) return c_plus * splus_coef(two_s, col2);
        if (row2 == col2 - 2) return c_minus * sminus_coef(two_s, col2);
        return 0.0;
    }

    Eigen::MatrixXcd dense(const SpinSector& sec) const {
        const int d = sec.dim();
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = std::max(0, r - 1); c <= std::min(d - 1, r + 1); ++c)
                out(r, c) = element(sec.two_s, sec.m2(r), sec.m2(c));
        return out;
    }

    // out[i, :] += scale * (op in)[i, :] for tensors laid out as (window, inner).
    // Amplitudes that would leave the window are dropped.
    void apply_add(const SpinSector& sec, std::size_t inner, const cplx* in, cplx* out,
                   cplx scale = 1.0) const {
        const int d = sec.dim();
        for (int i = 0; i < d; ++i) {
            cplx* o = out + std::size_t(i) * inner;
            const cplx diag = scale * (c_id + c_z * sec.m(i));
            const cplx* x = in + std::size_t(i) * inner;
            if (diag != 0.0)
                for (std::size_t a = 0; a < inner; ++a) o[a] += diag * x[a];
            if (c_plus != 0.0 && i > 0) {
                const cplx c = scale * c_plus * splus_coef(sec.two_s, sec.m2(i - 1));
                const cplx* xl = in + std::size_t(i - 1) * inner;
                for (std::size_t a = 0; a < inner; ++a) o[a] += c * xl[a];
            }
            if (c_minus != 0.0 && i + 1 < d) {
                const cplx c = scale * c_minus * sminus_coef(sec.two_s, sec.m2(i + 1));
                const cplx* xu = in + std::size_t(i + 1) * inner;
                for (std::size_t a = 0; a < inner; ++a) o[a] += c * xu[a];
            }
        }
    }

    CVec apply(const SpinSector& sec, std::span<const cplx> psi) const {
        CVec out(psi.size());
        apply_add(sec, 1, psi.data(), out.data());
        return out;
    }

    // <psi| op |psi> over the window, unnormalized.
    cplx sandwich(const SpinSector& sec, std::span<const cplx> psi) const {
        const CVec v = apply(sec, psi);
        cplx s = 0.0;
        for (std::size_t i = 0; i < psi.size(); ++i) s += std::conj(psi[i]) * v[i];
        return s;
    }
};

enum class SpinOpKind { Sz, Splus, Sminus, Sx, Sy };
enum class FockOpKind { b, bdag, number };

inline SpinOp spin_op(SpinOpKind which) {
    switch (which) {
        case SpinOpKind::Sz: return SpinOp::Sz();
        case SpinOpKind::Splus: return SpinOp::Splus();
        case SpinOpKind::Sminus: return SpinOp::Sminus();
        case SpinOpKind::Sx: return SpinOp::Sx();
        case SpinOpKind::Sy: return SpinOp::Sy();
    }
    throw Error("apply_spin_op: unknown operator");
}

inline HopsState apply_spin_op(const HopsState& st, SpinOpKind which) {
    if (st.sector.dim() < 1) throw Error("apply_spin_op: empty window");
    HopsState out(st.sector, st.ladder);
    spin_op(which).apply_add(st.sector, st.aux_dim(), st.amp.data(), out.amp.data());
    return out;
}

inline HopsState apply_fock_op(const HopsState& st, std::size_t j, FockOpKind which) {
    if (j >= st.ladder.terms()) throw Error("apply_fock_op: term index out of range");
    HopsState out(st.sector, st.ladder);
    const std::size_t stride = st.ladder.stride(j);
    const std::size_t d = std::size_t(st.ladder.dims[j]);
    const std::size_t outer = st.size() / (stride * d);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t n = 0; n < d; ++n) {
            const std::size_t base = (o * d + n) * stride;
            for (std::size_t r = 0; r < stride; ++r) {
                const cplx x = st.amp[base + r];
                switch (which) {
                    case FockOpKind::number: out.amp[base + r] = double(n) * x; break;
                    case FockOpKind::b:
                        if (n > 0) out.amp[base - stride + r] = std::sqrt(double(n)) * x;
                        break;
                    case FockOpKind::bdag:
                        if (n + 1 < d) out.amp[base + stride + r] = std::sqrt(double(n + 1)) * x;
                        break;
                }
            }
        }
    }
    return out;
}

// Slice with every n_j = 0, one amplitude per window entry.
inline CVec zeroth_component(const HopsState& st) {
    CVec out(std::size_t(st.sector.dim()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = st.at(i, 0);
    return out;
}

// Window-sized vector embedded into the full 2s+1 basis (ascending m).
inline CVec embed_full(const SpinSector& sec, std::span<const cplx> psi) {
    CVec out(std::size_t(sec.two_s + 1));
    const std::size_t off = std::size_t((sec.lo2 + sec.two_s) / 2);
    for (std::size_t i = 0; i < psi.size(); ++i) out[off + i] = psi[i];
    return out;
}

inline Eigen::MatrixXcd partial_trace_system(const HopsState& st) {
    const std::size_t A = st.aux_dim();
    Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> phi(
        st.amp.data(), st.sector.dim(), Eigen::Index(A));
    Eigen::MatrixXcd rho = phi.transpose() * phi.conjugate();
    const double tr = rho.trace().real();
    if (!(tr > 0.0)) throw Error("partial_trace_system: zero-norm state");
    rho /= tr;
    // exact Hermiticity
    Eigen::MatrixXcd herm = 0.5 * (rho + rho.adjoint());
    return herm;
}

namespace detail {

// Eigendecomposition of S^x for one spin length; shared across threads.
struct SxEigen {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

inline std::shared_ptr<const SxEigen> sx_eigen(int two_s) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const SxEigen>> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(two_s);
    if (it != cache.end()) return it->second;
    const int d = two_s + 1;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd sub(std::max(d - 1, 0));
    for (int i = 0; i + 1 < d; ++i) sub(i) = 0.5 * splus_coef(two_s, -two_s + 2 * i);
    auto e = std::make_shared<SxEigen>();
    if (d == 1) {
        e->values = Eigen::VectorXd::Zero(1);
        e->vectors = Eigen::MatrixXd::Identity(1, 1);
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
        e->values = es.eigenvalues();
        e->vectors = es.eigenvectors();
    }
    cache.emplace(two_s, e);
    return e;
}

}  // namespace detail

// Spin coherent state exp((theta e^{i phi} S- - theta e^{-i phi} S+)/2)|s,s>,
// as a full (2s+1)-vector in ascending m.  The generator equals
// e^{-i phi Sz}(-i theta Sy)e^{i phi Sz}, and Sy = U Sx U^dag with
// U = exp(-i pi/2 Sz), so only the real tridiagonal S^x is diagonalized.
inline CVec spin_coherent(int two_s, double theta, double phi) {
    if (two_s < 0) throw Error("spin_coherent: negative spin");
    const auto eig = detail::sx_eigen(two_s);
    const int d = two_s + 1;
    const double s = 0.5 * two_s;
    // U^dag e^{i phi Sz} |s,s> = e^{i (pi/2 + phi) s} |s,s>
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(d);
    v(d - 1) = 1.0;
    Eigen::VectorXcd coeff = eig->vectors.transpose().cast<cplx>() * v;
    for (int k = 0; k < d; ++k) coeff(k) *= std::exp(-I * theta * eig->values(k));
    Eigen::VectorXcd w = eig->vectors.cast<cplx>() * coeff;
    const cplx global = std::exp(I * (0.5 * M_PI + phi) * s);
    CVec out(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        const double m = -s + k;
        // U then e^{-i phi Sz}
        out[std::size_t(k)] = global * std::exp(-I * (0.5 * M_PI + phi) * m) * w(k);
    }
    double n2 = 0.0;
    for (const auto& c : out) n2 += std::norm(c);
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& c : out) c *= inv;
    return out;
}

}  // namespace nuhops
