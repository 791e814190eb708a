// nuhops command-line driver.
//
//   nuhops run         --config c.json [--out dir] [--workers n] [--seed s] [--resume]
//   nuhops oracle      --config c.json [--out dir]
//   nuhops compare     a.csv b.csv [--sigma k] [--only col ...]
//   nuhops noise-check --config c.json [-M n] [--sigma k] [--dump path.bin]
//   nuhops diag        --config c.json [--traj i] [--inject path.bin] [--out dir]
//
// Exit codes: 0 ok, 1 configuration or input error, 2 runtime failure,
// 3 truncation cap exceeded, 4 a comparison or statistical check failed.

#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "nuhops/nuhops.hpp"

namespace fs = std::filesystem;
using namespace nuhops;

namespace {

enum Exit { ok = 0, config_error = 1, runtime_error = 2, cap_error = 3, check_failed = 4 };

struct Common {
    std::string config;
    std::string out;
    unsigned workers = 0;
    std::optional<std::uint64_t> seed;
    bool resume = false;
};

RunConfig load(const Common& c) {
    RunConfig rc = load_config(c.config);
    if (c.seed) {
        rc.ensemble.master_seed = *c.seed;
        rc.raw["ensemble"]["master_seed"] = *c.seed;
    }
    if (c.workers > 0) rc.ensemble.workers = c.workers;
    if (!c.out.empty()) rc.out_dir = c.out;
    if (c.resume) {
        if (rc.ensemble.checkpoint_path.empty()) throw ConfigError("--resume: ensemble.checkpoint is not set");
        rc.ensemble.resume = true;
    }
    rc.ensemble.model_hash = rc.model_hash();
    return rc;
}

void log_line(const std::string& s) { std::cerr << "[nuhops] " << s << '\n'; }

int cmd_run(const Common& c) {
    const RunConfig rc = load(c);
    const auto t0 = std::chrono::steady_clock::now();
    EnsembleRunner runner(rc.model, rc.propagator, rc.observables, noise_source(rc));
    log_line("run: " + std::to_string(rc.ensemble.trajectories) + " trajectories, " +
             std::to_string(runner.n_steps(rc.t_end)) + " steps, " + std::to_string(rc.ensemble.workers) + " workers");
    const EnsembleResult res = runner.run(rc.ensemble, log_line);
    const Series s = ensemble_series(res, runner.layout());
    write_series_csv(rc.out_dir / "observables.csv", s);
    const auto& layout = runner.layout();
    if (layout.field_size() > 0) {
        const auto field = ensemble_field(res, layout);
        const double tf = res.times[res.field_record];
        std::size_t off = 0;
        if (layout.spinq()) {
            const std::vector<double> f(field.begin(), field.begin() + std::ptrdiff_t(layout.spinq_size()));
            write_field_csv(rc.out_dir / "spinq.csv", layout.spinq()->grid(), f, "spinq", tf);
            off = layout.spinq_size();
        }
        if (layout.husimi_grid()) {
            const std::vector<double> f(field.begin() + std::ptrdiff_t(off), field.end());
            write_field_csv(rc.out_dir / "husimi.csv", *layout.husimi_grid(), f, "husimi", tf);
        }
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(rc.out_dir / "manifest.json", make_manifest(rc, "run", &res, wall));
    log_line("wrote " + (rc.out_dir / "observables.csv").string() + " (" + std::to_string(res.failures.size()) +
             " failed trajectories)");
    return res.failures.empty() ? ok : runtime_error;
}

int cmd_oracle(const Common& c) {
    const RunConfig rc = load(c);
    const auto t0 = std::chrono::steady_clock::now();
    const EnsembleRunner runner(rc.model, rc.propagator, rc.observables);
    const auto times = runner.record_times(rc.t_end);
    LindbladOptions opt = rc.oracle;
    opt.spin_density = rc.observables.rho_sys;
    opt.check_positivity = true;
    const LindbladResult lr = lindblad_evolve(lindblad_model(rc.model), lindblad_initial(rc.model, opt.fock_dim), times, opt);
    write_series_csv(rc.out_dir / "oracle.csv", lr.series);
    nlohmann::json extra = {{"fock_dim", opt.fock_dim},
                            {"dt", opt.dt},
                            {"max_top_population", lr.max_top_population},
                            {"max_trace_error", lr.max_trace_error},
                            {"min_eigenvalue", lr.min_eigenvalue}};
    if (rc.coupling == Coupling::sz && !rc.model.y0) {
        write_series_csv(rc.out_dir / "analytic.csv",
                         dephasing_series(rc.model.initial_system, times, rc.model.bcf, rc.omega_a));
        extra["analytic"] = "analytic.csv";
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto man = make_manifest(rc, "oracle", nullptr, wall);
    man["oracle"] = extra;
    write_json(rc.out_dir / "manifest.json", man);
    log_line("wrote " + (rc.out_dir / "oracle.csv").string());
    return ok;
}

int cmd_compare(const std::string& a, const std::string& b, double sigma, const std::vector<std::string>& only) {
    const Series sa = read_series_csv(a), sb = read_series_csv(b);
    CompareOptions opt;
    opt.k_sigma = sigma;
    opt.only = only;
    CompareReport rep;
    try {
        rep = compare(sa, sb, opt);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    std::printf("%-12s %14s %10s %10s %8s  %s\n", "column", "max_dev", "max_sigma", "worst_t", "fails", "result");
    for (const auto& e : rep.entries)
        std::printf("%-12s %14.6e %10.3f %10.4f %8zu  %s\n", e.name.c_str(), e.max_dev, e.max_sigma_ratio, e.worst_t,
                    e.failures, e.pass ? "PASS" : "FAIL");
    std::printf("%s\n", rep.pass ? "PASS" : "FAIL");
    return rep.pass ? ok : check_failed;
}

int cmd_noise_check(const Common& c, std::size_t M, double sigma, const std::string& dump) {
    const RunConfig rc = load(c);
    const auto steps = std::size_t(std::llround(rc.t_end / rc.propagator.dt));
    const EnsembleRunner runner(rc.model, rc.propagator, rc.observables);
    std::vector<NoisePath> paths;
    paths.reserve(M);
    for (std::size_t i = 0; i < M; ++i) paths.push_back(runner.noise_for(rc.ensemble.master_seed, i, 0, steps));
    if (!dump.empty()) write_path(dump, paths.front());
    const CovarianceReport rep = verify_covariance(paths, rc.model.bcf, sigma);
    std::printf("lag_t,emp_re,emp_im,target_re,target_im\n");
    for (std::size_t k = 0; k < rep.lags.size(); ++k)
        std::printf("%.6g,%.6g,%.6g,%.6g,%.6g\n", double(rep.lags[k]) * paths[0].h, rep.empirical[k].real(),
                    rep.empirical[k].imag(), rep.target[k].real(), rep.target[k].imag());
    std::printf("max_abs_dev %.4e  max_pseudo_dev %.4e  mc_error %.4e  max_sigma_ratio %.3f  %s\n", rep.max_abs_dev,
                rep.max_pseudo_dev, rep.mc_error, rep.max_sigma_ratio, rep.pass ? "PASS" : "FAIL");
    return rep.pass ? ok : check_failed;
}

int cmd_diag(const Common& c, std::uint64_t traj, const std::string& inject) {
    const RunConfig rc = load(c);
    if (rc.model.terms() != 1) throw ConfigError("diag: per-m diagnostics need a single bcf term");
    EnsembleRunner runner(rc.model, rc.propagator, rc.observables, noise_source(rc));
    const std::size_t steps = runner.n_steps(rc.t_end);
    NoisePath noise;
    if (!inject.empty()) {
        noise = read_path(inject);
        if (std::abs(noise.dt() - rc.propagator.dt) > 1e-12 * rc.propagator.dt)
            throw ConfigError("--inject: path spacing does not match propagator.dt");
        if (noise.n_steps() < steps) throw ConfigError("--inject: path is shorter than t_end");
    } else {
        noise = runner.noise_for(rc.ensemble.master_seed, traj, 0, steps);
    }
    const auto thermal = runner.thermal_for(rc.ensemble.master_seed, traj, 0, steps);
    const Propagator prop(rc.model, rc.propagator);
    std::vector<DiagRow> rows;
    auto out = runner.run_one(prop, noise, thermal ? &*thermal : nullptr, rc.t_end, [&](const TrajectoryState& st) {
        for (const auto& r : diagnose_pm(st)) rows.push_back({st.t, r});
    });
    write_diag_csv(rc.out_dir / "diag.csv", rows);

    Series s;
    s.t = runner.record_times(rc.t_end);
    const auto& names = runner.layout().names();
    for (std::size_t col = 0; col < names.size(); ++col) {
        const std::size_t k = s.add_column(names[col]);
        for (std::size_t r = 0; r < s.t.size(); ++r) s.value[k][r] = out.row[r * names.size() + col];
    }
    write_series_csv(rc.out_dir / "trajectory.csv", s);
    auto man = make_manifest(rc, "diag", nullptr, 0.0);
    man["trajectory"] = traj;
    man["inject"] = inject;
    man["max_fock_seen"] = out.final_state.max_fock_seen;
    man["max_window_seen"] = out.final_state.max_window_seen;
    write_json(rc.out_dir / "manifest.json", man);
    log_line("wrote " + (rc.out_dir / "diag.csv").string());
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nuHOPS trajectory engine"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub, bool ensemble_flags) {
        sub->add_option("--config", common.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output directory (overrides output.directory)");
        if (ensemble_flags) {
            sub->add_option("--workers", common.workers, "worker threads (overrides ensemble.workers)");
            sub->add_option("--seed", common.seed, "master seed (overrides ensemble.master_seed)");
        }
    };

    auto* run = app.add_subcommand("run", "run a trajectory ensemble");
    add_common(run, true);
    run->add_flag("--resume", common.resume, "continue from ensemble.checkpoint if it exists");

    auto* oracle = app.add_subcommand("oracle", "Lindblad reference for the configured model");
    add_common(oracle, false);

    std::string file_a, file_b;
    double sigma = 3.0;
    std::vector<std::string> only;
    auto* cmp = app.add_subcommand("compare", "compare two observables files");
    cmp->add_option("file_a", file_a)->required();
    cmp->add_option("file_b", file_b)->required();
    cmp->add_option("--sigma", sigma, "tolerance in combined standard errors")->check(CLI::PositiveNumber);
    cmp->add_option("--only", only, "restrict to these columns");

    std::size_t M = 10000;
    std::string dump;
    auto* nc = app.add_subcommand("noise-check", "verify the noise covariance");
    add_common(nc, true);
    nc->add_option("-M", M, "number of paths")->check(CLI::Range(std::size_t(100), std::size_t(10000000)));
    nc->add_option("--sigma", sigma, "tolerance in standard errors")->check(CLI::PositiveNumber);
    nc->add_option("--dump", dump, "write the first path in the binary path format");

    std::uint64_t traj = 0;
    std::string inject;
    auto* diag = app.add_subcommand("diag", "per-m norms and coherent labels of one trajectory");
    add_common(diag, true);
    diag->add_option("--traj", traj, "trajectory index");
    diag->add_option("--inject", inject, "drive from a binary noise path file")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : config_error;
    }

    try {
        if (*run) return cmd_run(common);
        if (*oracle) return cmd_oracle(common);
        if (*cmp) return cmd_compare(file_a, file_b, sigma, only);
        if (*nc) return cmd_noise_check(common, M, sigma, dump);
        if (*diag) return cmd_diag(common, traj, inject);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const TruncationCapError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cap_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return runtime_error;
    }
    return ok;
}
