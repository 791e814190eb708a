#pragma once

// JSON run configuration.  Every field is read through a path-tracking
// reader, so a bad value is reported as e.g. "propagator.eps_up: ...".
// Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nuhops/ensemble.hpp"
#include "nuhops/oracles.hpp"

namespace nuhops {

using json = nlohmann::json;

enum class Coupling { sz, sx };

// Multiplier turning the model's g into the amplitude G of the bath
// correlation: L = Sz carries g directly, L = Sx carries g / sqrt(N).
inline double coupling_scale(Coupling c, int n) { return c == Coupling::sz ? 1.0 : 1.0 / double(n); }

struct DesignedStep {
    double t_switch = 10.0;
    cplx before{0.5};
    cplx after{-0.5};
};

struct RunConfig {
    json raw;                       // parsed document, seed override applied
    std::string source;             // file name, informational
    Coupling coupling = Coupling::sz;
    double omega_a = 1.0, omega_c = 1.0, kappa = 1.0, g = 0.0;
    ModelSpec model;
    PropagatorConfig propagator;
    double t_end = 1.0;
    EnsembleConfig ensemble;
    ObservableRequest observables;
    std::optional<DesignedStep> designed_step;
    LindbladOptions oracle;
    std::filesystem::path out_dir = "out";

    std::uint64_t model_hash() const;
};

namespace detail {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError((path_.empty() ? "<root>" : path_) + ": " + what); }
    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError(sub(key) + ": " + what);
    }

    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    const json& raw(const std::string& key) const {
        seen_.insert(key);
        if (!j_.contains(key)) fail(key, "required field is missing");
        return j_.at(key);
    }

    Reader child(const std::string& key) const { return Reader(raw(key), sub(key)); }

    double num(const std::string& key) const {
        const json& v = raw(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(key, "must be finite");
        return x;
    }
    double num(const std::string& key, double dflt) const { return has(key) ? num(key) : dflt; }

    std::int64_t integer(const std::string& key) const {
        const json& v = raw(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        return v.get<std::int64_t>();
    }
    std::int64_t integer(const std::string& key, std::int64_t dflt) const { return has(key) ? integer(key) : dflt; }

    std::uint64_t unsigned_int(const std::string& key, std::uint64_t dflt) const {
        if (!has(key)) return dflt;
        const json& v = raw(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            fail(key, "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool dflt) const {
        if (!has(key)) return dflt;
        const json& v = raw(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }

    std::string str(const std::string& key, const std::string& dflt) const {
        if (!has(key)) return dflt;
        const json& v = raw(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    // [re, im] pair or a plain real number
    cplx complex(const std::string& key) const {
        const json& v = raw(key);
        if (v.is_number()) return {num(key), 0.0};
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            fail(key, "expected a number or [re, im]");
        const cplx c{v[0].get<double>(), v[1].get<double>()};
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) fail(key, "must be finite");
        return c;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(it.key(), "unknown field");
    }

    const json& value() const { return j_; }
    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    mutable std::set<std::string> seen_;
};

inline BcfSpec read_terms(const Reader& r, const std::string& key) {
    const json& arr = r.raw(key);
    if (!arr.is_array() || arr.empty()) r.fail(key, "expected a non-empty array of terms");
    BcfSpec spec;
    for (std::size_t k = 0; k < arr.size(); ++k) {
        Reader t(arr[k], r.sub(key) + "[" + std::to_string(k) + "]");
        ExpTerm e{cplx(t.num("g_re"), t.num("g_im", 0.0)), cplx(t.num("w_re"), t.num("w_im", 0.0))};
        if (!(e.W.real() > 0.0)) t.fail("w_re", "Re(W) must be > 0");
        t.finish();
        spec.terms.push_back(e);
    }
    return spec;
}

inline void positive(const Reader& r, const std::string& key, double v) {
    if (!(v > 0.0)) r.fail(key, "must be > 0");
}

inline ObservableRequest::Field read_field(const Reader& r, int nx, int ny) {
    ObservableRequest::Field f;
    f.nx = int(r.integer("nx", nx));
    f.ny = int(r.integer("ny", ny));
    if (f.nx < 2 || f.ny < 2) r.fail("nx", "grids need at least 2 points per axis");
    f.radius = r.num("radius", 0.0);
    if (f.radius < 0.0) r.fail("radius", "must be >= 0");
    f.time = r.num("time");
    r.finish();
    return f;
}

}  // namespace detail

inline RunConfig parse_config(const json& doc, const std::string& source = "") {
    using detail::Reader;
    RunConfig rc;
    rc.raw = doc;
    rc.source = source;
    const Reader root(doc, "");

    // model
    const Reader m = root.child("model");
    const std::string coupling = m.str("coupling", "sz");
    if (coupling == "sz") rc.coupling = Coupling::sz;
    else if (coupling == "sx") rc.coupling = Coupling::sx;
    else m.fail("coupling", "expected \"sz\" or \"sx\"");
    const std::int64_t n = m.integer("n");
    if (n < 1 || n > 100000) m.fail("n", "must be in [1, 100000]");
    rc.omega_a = m.num("omega_a");
    rc.model.two_s = int(n);
    rc.model.h_sys = SpinOp::Sz(rc.omega_a);
    rc.model.l_op = rc.coupling == Coupling::sz ? SpinOp::Sz() : SpinOp::Sx();

    if (m.has("initial")) {
        const Reader in = m.child("initial");
        if (in.has("vector")) {
            const json& v = in.raw("vector");
            if (!v.is_array() || v.size() != std::size_t(n + 1))
                in.fail("vector", "expected " + std::to_string(n + 1) + " amplitudes (ascending m)");
            for (std::size_t k = 0; k < v.size(); ++k) {
                const json& e = v[k];
                if (e.is_number()) rc.model.initial_system.emplace_back(e.get<double>(), 0.0);
                else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number())
                    rc.model.initial_system.emplace_back(e[0].get<double>(), e[1].get<double>());
                else in.fail("vector", "entry " + std::to_string(k) + " must be a number or [re, im]");
            }
        } else if (in.has("state")) {
            const std::string s = in.str("state", "");
            rc.model.initial_system.assign(std::size_t(n + 1), cplx{0.0});
            if (s == "excited") rc.model.initial_system.back() = 1.0;
            else if (s == "ground") rc.model.initial_system.front() = 1.0;
            else in.fail("state", "expected \"excited\" or \"ground\"");
        } else {
            rc.model.initial_system = spin_coherent(int(n), in.num("theta"), in.num("phi", 0.0));
        }
        in.finish();
    } else {
        rc.model.initial_system.assign(std::size_t(n + 1), cplx{0.0});
        rc.model.initial_system.back() = 1.0;
    }
    if (m.has("y0")) rc.model.y0 = m.complex("y0");

    if (root.has("bcf")) {
        const Reader b = root.child("bcf");
        if (b.has("terms") == b.has("pseudo_mode")) b.fail("give exactly one of \"terms\" or \"pseudo_mode\"");
        if (b.has("terms")) {
            rc.model.bcf = detail::read_terms(b, "terms");
        } else {
            const Reader p = b.child("pseudo_mode");
            rc.g = p.num("g");
            rc.omega_c = p.num("omega_c");
            rc.kappa = p.num("kappa");
            detail::positive(p, "kappa", rc.kappa);
            p.finish();
            rc.model.bcf.terms = {pseudo_mode(rc.g * std::sqrt(coupling_scale(rc.coupling, int(n))), rc.omega_c, rc.kappa)};
        }
        b.finish();
        if (m.has("g")) m.fail("g", "set g inside bcf.pseudo_mode when a bcf block is present");
    } else {
        rc.g = m.num("g");
        rc.omega_c = m.num("omega_c");
        rc.kappa = m.num("kappa");
        detail::positive(m, "kappa", rc.kappa);
        rc.model.bcf.terms = {pseudo_mode(rc.g * std::sqrt(coupling_scale(rc.coupling, int(n))), rc.omega_c, rc.kappa)};
    }
    if (m.has("thermal")) {
        const Reader th = m.child("thermal");
        rc.model.thermal = detail::read_terms(th, "terms");
        th.finish();
    }
    m.finish();

    // propagator
    const Reader p = root.child("propagator");
    auto& pc = rc.propagator;
    pc.dt = p.has("dt") ? p.num("dt") : default_dt(rc.model);
    detail::positive(p, "dt", pc.dt);
    rc.t_end = p.num("t_end");
    detail::positive(p, "t_end", rc.t_end);
    const std::string mode = p.str("mode", "nuhops");
    if (mode == "nuhops") pc.mode = Mode::nuhops;
    else if (mode == "hops") pc.mode = Mode::hops;
    else p.fail("mode", "expected \"nuhops\" or \"hops\"");
    pc.adaptive = p.boolean("adaptive", pc.adaptive);
    pc.eps_up = p.num("eps_up", pc.eps_up);
    pc.eps_low = p.num("eps_low", pc.eps_low);
    if (!(pc.eps_up > 0.0 && pc.eps_up < 1.0)) p.fail("eps_up", "must lie in (0, 1)");
    if (!(pc.eps_low > 0.0 && pc.eps_low < pc.eps_up)) p.fail("eps_low", "must lie in (0, eps_up)");
    pc.max_window = int(p.integer("max_window", pc.max_window));
    pc.max_fock = int(p.integer("max_fock", pc.max_fock));
    if (pc.max_fock < 2) p.fail("max_fock", "must be >= 2");
    if (p.has("fock_dims")) {
        const json& fd = p.raw("fock_dims");
        if (fd.is_number_integer()) pc.fock_dims.assign(rc.model.terms(), fd.get<int>());
        else if (fd.is_array()) {
            for (const auto& e : fd) {
                if (!e.is_number_integer()) p.fail("fock_dims", "entries must be integers");
                pc.fock_dims.push_back(e.get<int>());
            }
        } else p.fail("fock_dims", "expected an integer or an array of integers");
    }
    pc.renormalize = p.boolean("renormalize", pc.renormalize);
    pc.energy_frame = p.boolean("energy_frame", pc.energy_frame);
    p.finish();

    // ensemble
    if (root.has("ensemble")) {
        const Reader e = root.child("ensemble");
        rc.ensemble.trajectories = e.unsigned_int("trajectories", rc.ensemble.trajectories);
        if (rc.ensemble.trajectories == 0) e.fail("trajectories", "must be >= 1");
        rc.ensemble.master_seed = e.unsigned_int("master_seed", rc.ensemble.master_seed);
        rc.ensemble.workers = unsigned(e.unsigned_int("workers", 1));
        rc.ensemble.checkpoint_every = e.unsigned_int("checkpoint_every", 0);
        rc.ensemble.checkpoint_path = e.str("checkpoint", "");
        rc.ensemble.max_attempts = unsigned(e.unsigned_int("max_attempts", rc.ensemble.max_attempts));
        if (rc.ensemble.max_attempts == 0) e.fail("max_attempts", "must be >= 1");
        e.finish();
    }
    rc.ensemble.t_end = rc.t_end;

    // observables
    auto& rq = rc.observables;
    if (root.has("observables")) {
        const Reader o = root.child("observables");
        rq.spin_xyz = o.boolean("spin_xyz", rq.spin_xyz);
        rq.rho_sys = o.boolean("rho_sys", rq.rho_sys);
        rq.aux_occupation = o.boolean("aux_occupation", rq.aux_occupation);
        rq.cavity_moments = o.boolean("cavity_moments", rq.cavity_moments);
        rq.c3 = o.boolean("c3", rq.c3);
        if (o.has("spinq")) rq.spinq = detail::read_field(o.child("spinq"), 121, 61);
        if (o.has("husimi")) rq.husimi = detail::read_field(o.child("husimi"), 81, 81);
        o.finish();
    }
    if ((rq.cavity_moments || rq.c3 || rq.husimi) && rc.model.terms() != 1)
        root.fail("observables", "cavity observables need a single bcf term");

    // noise
    if (root.has("noise")) {
        const Reader nz = root.child("noise");
        if (nz.has("designed_step")) {
            const Reader d = nz.child("designed_step");
            DesignedStep s;
            s.t_switch = d.num("t_switch", s.t_switch);
            s.before = d.has("before") ? d.complex("before") : s.before;
            s.after = d.has("after") ? d.complex("after") : s.after;
            d.finish();
            rc.designed_step = s;
        }
        nz.finish();
    }

    // oracle
    if (root.has("oracle")) {
        const Reader o = root.child("oracle");
        rc.oracle.fock_dim = int(o.integer("fock_dim", rc.oracle.fock_dim));
        if (rc.oracle.fock_dim < 2) o.fail("fock_dim", "must be >= 2");
        rc.oracle.dt = o.num("dt", rc.oracle.dt);
        detail::positive(o, "dt", rc.oracle.dt);
        rc.oracle.leak_tol = o.num("leak_tol", rc.oracle.leak_tol);
        o.finish();
    }

    // output
    std::size_t stride = 0;
    if (root.has("output")) {
        const Reader o = root.child("output");
        rc.out_dir = o.str("directory", rc.out_dir.string());
        if (o.has("stride")) {
            const std::int64_t s = o.integer("stride");
            if (s < 1) o.fail("stride", "must be >= 1");
            stride = std::size_t(s);
        } else if (o.has("record_every")) {
            const double h = o.num("record_every");
            detail::positive(o, "record_every", h);
            stride = std::size_t(std::max<long long>(1, std::llround(h / pc.dt)));
        }
        o.finish();
    }
    rq.stride = stride > 0 ? stride : std::max<std::size_t>(1, std::size_t(std::llround(0.1 / pc.dt)));
    root.finish();

    // cross-field checks reported against their owning block
    const double steps = rc.t_end / pc.dt;
    if (std::abs(steps - std::round(steps)) > 1e-6 * std::max(1.0, steps))
        throw ConfigError("propagator.t_end: must be a multiple of propagator.dt");
    rc.model.validate();
    pc.validate(rc.model.terms());
    return rc;
}

inline RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file.string() + ": cannot open config file");
    json doc;
    try {
        doc = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
    return parse_config(doc, file.string());
}

// FNV-1a over the canonical (key-sorted, compact) JSON of every block that
// affects the numbers.  Worker count, checkpoint and output settings are
// excluded; the seed is checked separately by the checkpoint.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t RunConfig::model_hash() const {
    json j = raw;
    if (j.contains("ensemble")) {
        auto& e = j["ensemble"];
        for (const char* k : {"workers", "checkpoint", "checkpoint_every", "master_seed"}) e.erase(k);
        if (e.empty()) j.erase("ensemble");
    }
    j.erase("output");
    j.erase("oracle");
    // record stride does change the accumulator layout
    j["_stride"] = observables.stride;
    return fnv1a(j.dump());
}

inline NoiseSource noise_source(const RunConfig& rc) {
    NoiseSource ns;
    if (rc.designed_step) {
        ns.kind = NoiseSource::Kind::fixed;
        const auto steps = std::size_t(std::llround(rc.t_end / rc.propagator.dt));
        ns.fixed = designed_step_path(rc.propagator.dt, steps, rc.designed_step->t_switch, rc.designed_step->before,
                                      rc.designed_step->after);
    }
    return ns;
}

}  // namespace nuhops
