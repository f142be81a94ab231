// Command-line entry point: design, scan, simulate, estimate, fit, drift and
// demo subcommands over file-based inputs and outputs.
#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>

#include "ionsep/cli.hpp"

namespace {

ionsep::ProjectConfig resolve_config(const std::string& path) {
    if (path.empty()) return ionsep::ProjectConfig{};
    return ionsep::load_config(path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-ion separation toolkit for segmented linear traps"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    int threads = 1;
    app.add_option("--config", config_path, "configuration file (defaults compiled in)");
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--seed", seed, "RNG seed recorded in the manifest");
    app.add_option("--threads", threads, "worker threads for scans");

    // design
    auto* design = app.add_subcommand("design", "build and export the separation waveform");
    ionsep::DesignOverrides dov;
    double duration_us = 0, du_o_mv = 0, du_c_cp_mv = 0, range_v = 0;
    auto* d1 = design->add_option("--duration-us", duration_us, "emitted ramp duration");
    auto* d2 = design->add_option("--du-o-mv", du_o_mv, "tilt compensation differential");
    auto* d3 = design->add_option("--du-c-cp-mv", du_c_cp_mv, "CP offset on segment C");
    auto* d4 = design->add_option("--range-v", range_v, "AWG output range override");

    // scan
    auto* scan_cmd = app.add_subcommand("scan", "sweep T, dU_O or dU_C_cp and classify outcomes");
    ionsep::ScanArgs sargs;
    double fit_lo = 0, fit_hi = 0;
    scan_cmd->add_option("--axis", sargs.axis, "T | dU_O | dU_C_cp")->required();
    scan_cmd->add_option("--from", sargs.from, "grid start (us for T, mV otherwise)")->required();
    scan_cmd->add_option("--to", sargs.to, "grid end")->required();
    scan_cmd->add_option("--points", sargs.points, "grid size")->required();
    auto* f1 = scan_cmd->add_option("--fit-from", fit_lo, "exponential-fit subrange start");
    auto* f2 = scan_cmd->add_option("--fit-to", fit_hi, "exponential-fit subrange end");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "run one separation end to end");
    ionsep::SimulateArgs simargs;
    std::string wf_csv, wf_json;
    double s_duration_us = 0, s_du_o_mv = 0, s_du_c_cp_mv = 0;
    auto* s1 = sim_cmd->add_option("--duration-us", s_duration_us, "emitted ramp duration");
    auto* s2 = sim_cmd->add_option("--du-o-mv", s_du_o_mv, "tilt compensation differential");
    auto* s3 = sim_cmd->add_option("--du-c-cp-mv", s_du_c_cp_mv, "CP offset on segment C");
    auto* s4 = sim_cmd->add_option("--waveform", wf_csv, "imported waveform CSV");
    auto* s5 = sim_cmd->add_option("--waveform-json", wf_json, "imported waveform sidecar");
    sim_cmd->add_option("--dump-stride", simargs.dump_stride, "trajectory decimation");

    // estimate
    auto* est_cmd = app.add_subcommand("estimate", "Bayesian motional-state estimate from Rabi data");
    ionsep::EstimateArgs eargs;
    est_cmd->add_option("--data", eargs.dataset, "dataset CSV (dn,t_us,successes,shots)")
        ->required();
    est_cmd->add_option("--thin", eargs.thin, "emit every k-th retained sample");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "calibration fits from measurement CSVs");
    ionsep::FitArgs fargs;
    std::string update_cfg;
    fit_cmd->add_option("--kind", fargs.kind, "alpha | beta | heating | charging")->required();
    fit_cmd->add_option("--input", fargs.input, "measurement CSV")->required();
    auto* u1 = fit_cmd->add_option("--update-config", update_cfg, "write a config with the fit");
    fit_cmd->add_option("--on-from", fargs.laser_on_from, "laser-on start, minutes (charging)");
    fit_cmd->add_option("--on-to", fargs.laser_on_to, "laser-on end, minutes (charging)");

    // drift
    auto* drift_cmd = app.add_subcommand("drift", "charging traces, servo runs, tilt window");
    ionsep::DriftArgs dargs;
    drift_cmd->add_option("--mode", dargs.mode, "charging | servo | window");
    drift_cmd->add_option("--on-from", dargs.on_from, "laser-on start, minutes");
    drift_cmd->add_option("--on-to", dargs.on_to, "laser-on end, minutes");
    drift_cmd->add_option("--t-max", dargs.t_max, "trace span, minutes");
    drift_cmd->add_option("--points", dargs.points, "trace samples");
    drift_cmd->add_option("--offset-mv", dargs.initial_offset_mv, "initial tilt offset (servo)");
    drift_cmd->add_option("--updates", dargs.updates, "servo updates");
    drift_cmd->add_option("--span-mv", dargs.window_span_mv, "window search half-span");
    drift_cmd->add_option("--grid", dargs.window_grid, "window search grid points");
    drift_cmd->add_option("--slow-t-us", dargs.slow_duration_us, "slow design duration");

    // demo
    app.add_subcommand("demo", "design, simulate and report the default separation");

    CLI11_PARSE(app, argc, argv);

    try {
        ionsep::RunContext ctx;
        ctx.config = resolve_config(config_path);
        ctx.out_dir = out_dir;
        ctx.seed = seed;
        ctx.threads = threads;
        if (!config_path.empty()) ctx.inputs.push_back(config_path);

        if (design->parsed()) {
            if (*d1) dov.duration_us = duration_us;
            if (*d2) dov.du_o_mv = du_o_mv;
            if (*d3) dov.du_c_cp_mv = du_c_cp_mv;
            if (*d4) dov.range_v = range_v;
            return ionsep::cmd_design(ctx, dov);
        }
        if (scan_cmd->parsed()) {
            if (*f1 && *f2) sargs.fit_range = std::make_pair(fit_lo, fit_hi);
            return ionsep::cmd_scan(ctx, sargs);
        }
        if (sim_cmd->parsed()) {
            if (*s1) simargs.overrides.duration_us = s_duration_us;
            if (*s2) simargs.overrides.du_o_mv = s_du_o_mv;
            if (*s3) simargs.overrides.du_c_cp_mv = s_du_c_cp_mv;
            if (*s4) simargs.waveform_csv = wf_csv;
            if (*s5) simargs.waveform_sidecar = wf_json;
            return ionsep::cmd_simulate(ctx, simargs);
        }
        if (est_cmd->parsed()) return ionsep::cmd_estimate(ctx, eargs);
        if (fit_cmd->parsed()) {
            if (*u1) fargs.update_config = update_cfg;
            return ionsep::cmd_fit(ctx, fargs);
        }
        if (drift_cmd->parsed()) return ionsep::cmd_drift(ctx, dargs);
        return ionsep::cmd_demo(ctx);
    } catch (const ionsep::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const ionsep::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
