#pragma once

// Stationary complex Gaussian driving processes z_t with
//   E[z_t conj(z_s)] = alpha(t - s),  E[z_t z_s] = 0,
// sampled on a half-step grid (spacing h = dt/2) so a fixed-step RK4 stepper
// reads exact samples at t, t + dt/2 and t + dt.  The propagator is driven by
// conj(z_t).

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>

#include "nuhops/bcf.hpp"
#include "nuhops/rng.hpp"

namespace nuhops {

struct NoisePath {
    double h = 0.0;                    // grid spacing, dt/2
    CVec z;                            // z at t_k = k h, k = 0 .. 2 n_steps
    std::vector<CVec> components;      // per-term paths when generated term-wise
    std::uint64_t seed = 0;            // stream key, informational

    std::size_t n_steps() const { return z.empty() ? 0 : (z.size() - 1) / 2; }
    double dt() const { return 2.0 * h; }
    cplx drive(std::size_t k) const { return std::conj(z[k]); }
};

inline NoisePath zero_path(double dt, std::size_t n_steps) {
    NoisePath p;
    p.h = 0.5 * dt;
    p.z.assign(2 * n_steps + 1, cplx{0.0});
    return p;
}

// Deterministic test drive: z = before for t <= t_switch, after beyond.
inline NoisePath designed_step_path(double dt, std::size_t n_steps, double t_switch, cplx before,
                                    cplx after) {
    NoisePath p = zero_path(dt, n_steps);
    for (std::size_t k = 0; k < p.z.size(); ++k) p.z[k] = (double(k) * p.h <= t_switch + 1e-12) ? before : after;
    return p;
}

namespace detail {

inline void check_grid(double dt, std::size_t n_steps) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("noise: dt must be positive");
    if (n_steps == 0) throw Error("noise: n_steps must be positive");
}

// Unit-variance exact OU recursion y_{k+1} = e^{-W h} y_k + eta_k.
template <class Rng>
CVec unit_ou(cplx W, double h, std::size_t n, Rng& rng) {
    ComplexNormal normal;
    CVec y(n);
    const cplx decay = std::exp(-W * h);
    const double innov = std::sqrt(-std::expm1(-2.0 * W.real() * h));
    y[0] = normal(rng);
    for (std::size_t k = 1; k < n; ++k) y[k] = decay * y[k - 1] + innov * normal(rng);
    return y;
}

inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace detail

template <class Rng>
NoisePath generate_ou_path(const ExpTerm& term, double dt, std::size_t n_steps, Rng& rng) {
    detail::check_grid(dt, n_steps);
    if (term.G.imag() != 0.0 || !(term.G.real() > 0.0))
        throw Error("generate_ou_path: G must be real and positive (use generate_spectral_path)");
    if (!(term.W.real() > 0.0)) throw Error("generate_ou_path: Re(W) must be > 0");
    NoisePath p;
    p.h = 0.5 * dt;
    p.z = detail::unit_ou(term.W, p.h, 2 * n_steps + 1, rng);
    const double amp = std::sqrt(term.G.real());
    for (auto& v : p.z) v *= amp;
    return p;
}

// Circulant-embedding generator for arbitrary exponential sums.  The embedded
// spectrum must be non-negative up to 1e-10 of its maximum; small negative
// values are clipped.
template <class Rng>
NoisePath generate_spectral_path(const BcfSpec& spec, double dt, std::size_t n_steps, Rng& rng) {
    detail::check_grid(dt, n_steps);
    NoisePath p;
    p.h = 0.5 * dt;
    const std::size_t n = 2 * n_steps + 1;
    bool all_zero = true;
    for (const auto& t : spec.terms) all_zero = all_zero && t.G == 0.0;
    if (spec.empty() || all_zero) {
        p.z.assign(n, cplx{0.0});
        return p;
    }
    for (const auto& t : spec.terms)
        if (!(t.W.real() > 0.0)) throw Error("generate_spectral_path: Re(W) must be > 0");

    const double corr_len = 40.0 / spec.min_decay();
    const std::size_t need = std::max<std::size_t>(2 * n, 2 * std::size_t(std::ceil(corr_len / p.h)) + 2);
    const std::size_t M = std::bit_ceil(need);

    fftw_complex* buf = fftw_alloc_complex(M);
    fftw_plan fwd, bwd;
    {
        std::lock_guard lock(detail::fftw_plan_mutex());
        fwd = fftw_plan_dft_1d(int(M), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_1d(int(M), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    auto cleanup = [&] {
        std::lock_guard lock(detail::fftw_plan_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
        fftw_free(buf);
    };

    for (std::size_t k = 0; k < M; ++k) {
        cplx c;
        if (k < M / 2) c = alpha(spec, double(k) * p.h);
        else if (k == M / 2) c = alpha(spec, double(k) * p.h).real();
        else c = std::conj(alpha(spec, double(M - k) * p.h));
        buf[k][0] = c.real();
        buf[k][1] = c.imag();
    }
    fftw_execute(fwd);
    std::vector<double> lambda(M);
    double lmax = 0.0, lmin = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
        lambda[k] = buf[k][0];
        lmax = std::max(lmax, lambda[k]);
        lmin = std::min(lmin, lambda[k]);
    }
    if (lmin < -1e-10 * lmax) {
        cleanup();
        throw Error("generate_spectral_path: spectrum significantly negative (" + std::to_string(lmin) +
                    " vs max " + std::to_string(lmax) + "); not a valid bath correlation function");
    }
    ComplexNormal normal;
    for (std::size_t k = 0; k < M; ++k) {
        const double amp = std::sqrt(std::max(lambda[k], 0.0) / double(M));
        const cplx x = amp * normal(rng);
        buf[k][0] = x.real();
        buf[k][1] = x.imag();
    }
    fftw_execute(bwd);
    p.z.resize(n);
    for (std::size_t k = 0; k < n; ++k) p.z[k] = cplx(buf[k][0], buf[k][1]);
    cleanup();
    return p;
}

// Dispatch: independent exact OU paths for real-positive terms, circulant
// embedding otherwise.
template <class Rng>
NoisePath generate_path(const BcfSpec& spec, double dt, std::size_t n_steps, Rng& rng) {
    const bool ou = !spec.empty() && std::all_of(spec.terms.begin(), spec.terms.end(), [](const ExpTerm& t) {
        return t.G.imag() == 0.0 && t.G.real() > 0.0;
    });
    if (!ou) return generate_spectral_path(spec, dt, n_steps, rng);
    NoisePath total = zero_path(dt, n_steps);
    for (const auto& t : spec.terms) {
        NoisePath c = generate_ou_path(t, dt, n_steps, rng);
        for (std::size_t k = 0; k < total.z.size(); ++k) total.z[k] += c.z[k];
        total.components.push_back(std::move(c.z));
    }
    if (total.components.size() == 1) total.components.clear();
    return total;
}

// Finite-temperature potential xi(t); same contract as the spectral generator.
template <class Rng>
NoisePath generate_thermal_path(const BcfSpec& thermal_terms, double dt, std::size_t n_steps, Rng& rng) {
    return generate_spectral_path(thermal_terms, dt, n_steps, rng);
}

struct CovarianceReport {
    double max_abs_dev = 0.0;        // covariance |emp - alpha|
    double max_pseudo_dev = 0.0;     // |E[z_t z_0]|
    double mc_error = 0.0;           // largest MC standard error used
    double max_sigma_ratio = 0.0;    // largest deviation / standard error
    std::vector<std::size_t> lags;
    std::vector<cplx> empirical;
    std::vector<cplx> target;
    bool pass = false;
};

// Compares E[z_{r+l} conj(z_r)] with alpha(l h) and E[z_{r+l} z_r] with 0 on
// ten lags; pass iff every deviation is below n_sigma MC standard errors.
inline CovarianceReport verify_covariance(std::span<const NoisePath> paths, const BcfSpec& spec,
                                          double n_sigma = 5.0, std::size_t ref = 0) {
    if (paths.size() < 100) throw Error("verify_covariance: at least 100 paths are required");
    const double h = paths[0].h;
    const std::size_t len = paths[0].z.size();
    for (const auto& p : paths)
        if (p.z.size() != len || p.h != h) throw Error("verify_covariance: paths on different grids");
    if (ref >= len) throw Error("verify_covariance: reference index outside the path");
    const std::size_t avail = len - 1 - ref;
    const double kmin = spec.empty() ? 1.0 : spec.min_decay();
    const std::size_t span_lag = std::max<std::size_t>(
        9, std::min<std::size_t>(avail, std::size_t(std::ceil(3.0 / (kmin * h)))));
    if (avail < 9) throw Error("verify_covariance: paths too short for ten lags");

    CovarianceReport rep;
    const double M = double(paths.size());
    for (std::size_t i = 0; i < 10; ++i) {
        const std::size_t lag = std::min(avail, (i * span_lag) / 9);
        cplx mean = 0.0, pmean = 0.0;
        for (const auto& p : paths) {
            mean += p.z[ref + lag] * std::conj(p.z[ref]);
            pmean += p.z[ref + lag] * p.z[ref];
        }
        mean /= M;
        pmean /= M;
        double var = 0.0, pvar = 0.0;
        for (const auto& p : paths) {
            var += std::norm(p.z[ref + lag] * std::conj(p.z[ref]) - mean);
            pvar += std::norm(p.z[ref + lag] * p.z[ref] - pmean);
        }
        const double se = std::sqrt(var / (M - 1.0) / M);
        const double pse = std::sqrt(pvar / (M - 1.0) / M);
        const cplx target = alpha(spec, double(lag) * h);
        const double dev = std::abs(mean - target);
        const double pdev = std::abs(pmean);
        rep.lags.push_back(lag);
        rep.empirical.push_back(mean);
        rep.target.push_back(target);
        rep.max_abs_dev = std::max(rep.max_abs_dev, dev);
        rep.max_pseudo_dev = std::max(rep.max_pseudo_dev, pdev);
        rep.mc_error = std::max({rep.mc_error, se, pse});
        const auto ratio = [](double d, double s) {
            return s > 0.0 ? d / s : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        };
        rep.max_sigma_ratio = std::max({rep.max_sigma_ratio, ratio(dev, se), ratio(pdev, pse)});
    }
    rep.pass = rep.max_sigma_ratio < n_sigma;
    return rep;
}

// Binary path file: 64-byte header {"NUHZPATH", f64 h, u64 length, u64 seed,
// 32 reserved bytes} followed by little-endian complex64 (f32 re, f32 im).
namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
    auto u = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::big) std::reverse(u.begin(), u.end());
    os.write(reinterpret_cast<const char*>(u.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> u{};
    if (!is.read(reinterpret_cast<char*>(u.data()), sizeof(T))) throw Error("unexpected end of file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(u.begin(), u.end());
    return std::bit_cast<T>(u);
}

}  // namespace detail

inline constexpr char kPathMagic[8] = {'N', 'U', 'H', 'Z', 'P', 'A', 'T', 'H'};

inline void write_path(const std::filesystem::path& file, const NoisePath& p) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw Error("write_path: cannot open " + file.string());
    os.write(kPathMagic, 8);
    detail::put_le<double>(os, p.h);
    detail::put_le<std::uint64_t>(os, p.z.size());
    detail::put_le<std::uint64_t>(os, p.seed);
    const char zeros[32] = {};
    os.write(zeros, 32);
    for (const auto& v : p.z) {
        detail::put_le<float>(os, float(v.real()));
        detail::put_le<float>(os, float(v.imag()));
    }
    if (!os) throw Error("write_path: write failed for " + file.string());
}

inline NoisePath read_path(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw Error("read_path: cannot open " + file.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kPathMagic, 8) != 0)
        throw Error("read_path: bad magic in " + file.string());
    NoisePath p;
    p.h = detail::get_le<double>(is);
    const auto len = detail::get_le<std::uint64_t>(is);
    p.seed = detail::get_le<std::uint64_t>(is);
    is.ignore(32);
    if (!(p.h > 0.0) || len == 0 || len % 2 == 0) throw Error("read_path: invalid header in " + file.string());
    p.z.resize(len);
    for (auto& v : p.z) {
        const float re = detail::get_le<float>(is);
        const float im = detail::get_le<float>(is);
        v = cplx(re, im);
    }
    return p;
}

}  // namespace nuhops
