#pragma once

// Bath correlation functions as finite exponential sums
//   alpha(tau) = sum_j G_j exp(-W_j tau),   tau >= 0,
// with the Hermitian extension alpha(-tau) = conj(alpha(tau)).

#include <algorithm>
#include <cmath>
#include <limits>

#include "nuhops/core.hpp"

namespace nuhops {

struct ExpTerm {
    cplx G{0.0};  // amplitude, frequency^2
    cplx W{1.0};  // complex decay rate, Re(W) > 0

    friend bool operator==(const ExpTerm&, const ExpTerm&) = default;
};

struct BcfSpec {
    std::vector<ExpTerm> terms;

    std::size_t size() const { return terms.size(); }
    bool empty() const { return terms.empty(); }

    cplx total_amplitude() const {
        cplx s = 0.0;
        for (const auto& t : terms) s += t.G;
        return s;
    }

    double min_decay() const {
        double k = std::numeric_limits<double>::infinity();
        for (const auto& t : terms) k = std::min(k, t.W.real());
        return k;
    }

    // alpha(0) is a variance only when sum G_j is real.
    bool imaginary_variance_flag() const {
        const cplx s = total_amplitude();
        return std::abs(s.imag()) > 1e-10 * std::abs(s.real());
    }

    bool single_real_positive() const {
        return terms.size() == 1 && terms[0].G.imag() == 0.0 && terms[0].G.real() > 0.0;
    }

    // Undamped terms (Re W = 0) are meaningful for deterministic drives only;
    // noise generation and run configs require damping.
    void validate(bool require_damping = true) const {
        if (terms.empty()) throw ConfigError("bcf: at least one exponential term is required");
        for (std::size_t j = 0; j < terms.size(); ++j) {
            const auto& t = terms[j];
            if (!std::isfinite(t.G.real()) || !std::isfinite(t.G.imag()) || !std::isfinite(t.W.real()) ||
                !std::isfinite(t.W.imag()))
                throw ConfigError("bcf.terms[" + std::to_string(j) + "]: non-finite parameter");
            if (require_damping ? !(t.W.real() > 0.0) : !(t.W.real() >= 0.0))
                throw ConfigError("bcf.terms[" + std::to_string(j) + "].w_re: Re(W) must be " +
                                  (require_damping ? "> 0" : ">= 0"));
        }
        // G = 0 (an uncoupled reservoir) is allowed for reference runs
        if (!(total_amplitude().real() >= 0.0))
            throw ConfigError("bcf.terms: sum of Re(G) must be >= 0");
    }
};

inline cplx alpha(const BcfSpec& spec, double tau) {
    const double a = std::abs(tau);
    cplx s = 0.0;
    for (const auto& t : spec.terms) s += t.G * std::exp(-t.W * a);
    return tau < 0.0 ? std::conj(s) : s;
}

// Damped cavity mode: g^2 exp(-i omega_c tau - kappa tau).
inline ExpTerm pseudo_mode(double g, double omega_c, double kappa) {
    if (!(kappa > 0.0)) throw ConfigError("pseudo_mode: kappa must be > 0");
    return ExpTerm{cplx(g * g, 0.0), cplx(kappa, omega_c)};
}

// S(omega) = int alpha(tau) e^{i omega tau} dtau = sum_j 2 Re[G_j / (W_j - i omega)].
inline double spectrum(const BcfSpec& spec, double omega) {
    double s = 0.0;
    for (const auto& t : spec.terms) s += 2.0 * (t.G / (t.W - I * omega)).real();
    return s;
}

inline BcfSpec scaled(const BcfSpec& spec, double c) {
    BcfSpec out = spec;
    for (auto& t : out.terms) t.G *= c;
    return out;
}

}  // namespace nuhops
