// Subcommand implementations behind the command-line tool. Every run writes a
// manifest with the resolved config hash and seed so outputs can be
// reproduced byte for byte.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ionsep/config.hpp"
#include "ionsep/version.hpp"

namespace ionsep {

using Json = nlohmann::ordered_json;

struct RunContext {
    ProjectConfig config;
    std::filesystem::path out_dir = ".";
    std::uint64_t seed = 1;
    int threads = 1;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    std::filesystem::path out(const std::string& name) {
        outputs.push_back(name);
        return out_dir / name;
    }

    void write_manifest(const std::string& subcommand) {
        Json m;
        m["subcommand"] = subcommand;
        m["config_hash"] = config_hash(config);
        m["seed"] = seed;
        m["inputs"] = inputs;
        m["outputs"] = outputs;
        m["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
        m["version"] = kVersion;
        write_text_file(out_dir / "manifest.json", m.dump(2) + "\n");
    }
};

namespace cli_detail {

inline Json summary_json(const ParamSummary& s) {
    return Json{{"mean", s.mean}, {"sd", s.sd}, {"ci68_lo", s.ci_lo}, {"ci68_hi", s.ci_hi}};
}

inline Json outcome_json(const SeparationOutcome& o) {
    return Json{{"classification", to_string(o.classification)},
                {"n_coh_1", o.n_coh_1},
                {"n_coh_2", o.n_coh_2},
                {"well_1_m", o.well_1},
                {"well_2_m", o.well_2}};
}

inline std::string waveform_csv(const Waveform& w) {
    std::ostringstream os;
    os << "t_s,U_C_V,U_S_V,U_O_V,dU_O_V\n";
    for (std::size_t k = 0; k < w.size(); ++k) {
        os << fmt_double(static_cast<double>(k) * w.dt) << "," << fmt_double(w.u_c[k]) << ","
           << fmt_double(w.u_s[k]) << "," << fmt_double(w.u_o[k]) << "," << fmt_double(w.du_o[k])
           << "\n";
    }
    return os.str();
}

inline Json waveform_sidecar(const Waveform& w, const RampMesh& mesh) {
    Json anchors = Json::array();
    for (const auto& a : mesh.anchors)
        anchors.push_back(Json{{"alpha", a.alpha}, {"u_s", a.u_s}, {"u_o", a.u_o}});
    return Json{{"dt_s", w.dt},
                {"samples", w.size()},
                {"cp_index", w.cp_index},
                {"reduced_accuracy_past_cp", w.reduced_accuracy_past_cp},
                {"trajectory",
                 Json{{"d_initial_m", w.trajectory.d_initial},
                      {"d_final_m", w.trajectory.d_final},
                      {"total_time_s", w.trajectory.total_time},
                      {"truncate_head", w.trajectory.truncate_head},
                      {"truncate_tail", w.trajectory.truncate_tail}}},
                {"ramp",
                 Json{{"du_c_cp_V", w.config.du_c_cp},
                      {"du_o_V", w.config.du_o},
                      {"sample_rate", w.config.sample_rate}}},
                {"mesh", anchors}};
}

/// Waveform import in the export format; the sidecar restores annotations.
inline Waveform read_waveform_csv(const std::filesystem::path& csv,
                                  const std::optional<std::filesystem::path>& sidecar,
                                  const SegmentBasis& basis) {
    CsvTable tbl = read_csv(csv);
    int ct = tbl.column("t_s"), cc = tbl.column("U_C_V"), cs = tbl.column("U_S_V"),
        co = tbl.column("U_O_V"), cd = tbl.column("dU_O_V");
    if (tbl.rows.size() < 2) throw IoError(csv.string() + ": need >= 2 samples");
    Waveform w;
    for (std::size_t i = 0; i < tbl.rows.size(); ++i) {
        int ln = tbl.line_numbers[i];
        w.u_c.push_back(parse_double(tbl.rows[i][cc], ln));
        w.u_s.push_back(parse_double(tbl.rows[i][cs], ln));
        w.u_o.push_back(parse_double(tbl.rows[i][co], ln));
        w.du_o.push_back(parse_double(tbl.rows[i][cd], ln));
    }
    double t0 = parse_double(tbl.rows[0][ct], tbl.line_numbers[0]);
    double t1 = parse_double(tbl.rows[1][ct], tbl.line_numbers[1]);
    w.dt = t1 - t0;
    if (!(w.dt > 0.0)) throw IoError(csv.string() + ": non-increasing time column");
    if (sidecar) {
        Json j = Json::parse(read_text_file(*sidecar));
        w.cp_index = j.at("cp_index").get<std::size_t>();
    } else {
        // nearest alpha = 0 crossing from the voltages
        double best = 1e300;
        for (std::size_t k = 0; k < w.size(); ++k) {
            double a = coefficients_from_voltages(basis, w.sample(k)).alpha;
            if (std::fabs(a) < best) {
                best = std::fabs(a);
                w.cp_index = k;
            }
        }
    }
    return w;
}

} // namespace cli_detail

struct DesignOverrides {
    std::optional<double> duration_us;
    std::optional<double> du_o_mv;
    std::optional<double> du_c_cp_mv;
    std::optional<double> range_v;
};

inline void apply_overrides(ProjectConfig& cfg, const DesignOverrides& o) {
    if (o.duration_us) cfg.ramp_duration = *o.duration_us * 1e-6;
    if (o.du_o_mv) cfg.tilt_compensation = *o.du_o_mv * 1e-3;
    if (o.du_c_cp_mv) cfg.cp_offset = *o.du_c_cp_mv * 1e-3;
    if (o.range_v) cfg.awg_range = *o.range_v;
}

/// design: build, quantize and export the separation waveform plus a filtered
/// preview trace.
inline int cmd_design(RunContext& ctx, const DesignOverrides& overrides) {
    apply_overrides(ctx.config, overrides);
    SeparationSetup setup = ctx.config.separation_setup();

    TrajectorySpec spec = make_trajectory(setup);
    EquilibriumOptions opt{setup.sim.validity_radius, 1e-25, 120};
    double d_end = distance_at(spec, spec.effective_duration());
    RampMesh mesh = build_separation_mesh(setup.basis, setup.constants, setup.mesh_spec, d_end, opt);
    Waveform designed = build_waveform(spec, mesh, setup.ramp, setup.basis, setup.constants, opt);
    Waveform emitted = quantize(designed, setup.awg);

    write_text_file(ctx.out("waveform.csv"), cli_detail::waveform_csv(emitted));
    write_text_file(ctx.out("waveform.json"),
                    cli_detail::waveform_sidecar(emitted, mesh).dump(2) + "\n");

    ContinuousVoltage cv = apply_filter(emitted, setup.filter, setup.oversample, setup.tail_hold);
    std::ostringstream os;
    os << "t_s,U_C_V,U_S_V,U_O_V,dU_O_V\n";
    double dt_preview = emitted.dt; // one row per AWG sample
    for (double t = 0.0; t <= cv.duration(); t += dt_preview) {
        VoltageSet v = cv.at(t);
        os << fmt_double(t) << "," << fmt_double(v.u_c) << "," << fmt_double(v.u_s) << ","
           << fmt_double(v.u_o) << "," << fmt_double(v.du_o) << "\n";
    }
    write_text_file(ctx.out("waveform_filtered.csv"), os.str());
    ctx.write_manifest("design");
    return 0;
}

struct ScanArgs {
    std::string axis = "dU_O"; // T | dU_O | dU_C_cp
    double from = 0.0, to = 0.0;
    int points = 0;
    std::optional<std::pair<double, double>> fit_range;
};

inline int cmd_scan(RunContext& ctx, const ScanArgs& args) {
    if (args.points < 1) throw UsageError("scan: need at least one grid point");
    ScanAxis axis;
    double unit = 1.0;
    if (args.axis == "T") {
        axis = ScanAxis::Duration;
        unit = 1e-6; // CLI values in us
    } else if (args.axis == "dU_O") {
        axis = ScanAxis::TiltVoltage;
        unit = 1e-3; // mV
    } else if (args.axis == "dU_C_cp") {
        axis = ScanAxis::CpOffset;
        unit = 1e-3;
    } else {
        throw UsageError("scan: axis must be one of T, dU_O, dU_C_cp");
    }
    std::vector<double> grid(static_cast<std::size_t>(args.points));
    for (int i = 0; i < args.points; ++i)
        grid[static_cast<std::size_t>(i)] =
            unit * (args.from + (args.to - args.from) * (args.points == 1 ? 0.0 : static_cast<double>(i) / (args.points - 1)));
    std::optional<std::pair<double, double>> fit_range;
    if (args.fit_range)
        fit_range = std::make_pair(args.fit_range->first * unit, args.fit_range->second * unit);

    SeparationSetup setup = ctx.config.separation_setup();
    ScanResult res = scan(axis, grid, setup, ctx.config.heating(), fit_range, ctx.threads);

    std::ostringstream os;
    os << "value,classification,n_coh_1,n_coh_2,n_thermal,n_tot,error\n";
    for (const auto& pt : res.points) {
        os << fmt_double(pt.value) << ",";
        if (pt.outcome) {
            double ntot = 0.5 * (pt.outcome->n_coh_1 + pt.outcome->n_coh_2) + pt.n_thermal;
            os << to_string(pt.outcome->classification) << "," << fmt_double(pt.outcome->n_coh_1)
               << "," << fmt_double(pt.outcome->n_coh_2) << "," << fmt_double(pt.n_thermal) << ","
               << fmt_double(ntot) << ",";
        } else {
            os << "failed,,,,,";
        }
        // commas inside error messages would break the row format
        std::string err = pt.error;
        for (char& ch : err)
            if (ch == ',' || ch == '\n') ch = ';';
        os << err << "\n";
    }
    write_text_file(ctx.out("scan.csv"), os.str());

    Json fit;
    fit["axis"] = to_string(res.axis);
    fit["points"] = res.points.size();
    if (res.fit) {
        fit["exp_fit"] = Json{{"amplitude", res.fit->amplitude},
                              {"tau_s", res.fit->tau},
                              {"r_squared", res.fit->r_squared}};
    }
    write_text_file(ctx.out("scan_fit.json"), fit.dump(2) + "\n");
    ctx.write_manifest("scan");
    return 0;
}

struct SimulateArgs {
    DesignOverrides overrides;
    std::optional<std::string> waveform_csv;
    std::optional<std::string> waveform_sidecar;
    int dump_stride = 100;
};

inline int cmd_simulate(RunContext& ctx, const SimulateArgs& args) {
    apply_overrides(ctx.config, args.overrides);
    SeparationSetup setup = ctx.config.separation_setup();

    SeparationRun run;
    if (args.waveform_csv) {
        ctx.inputs.push_back(*args.waveform_csv);
        std::optional<std::filesystem::path> sidecar;
        if (args.waveform_sidecar) sidecar = *args.waveform_sidecar;
        Waveform w = cli_detail::read_waveform_csv(*args.waveform_csv, sidecar, setup.basis);
        run.waveform = w;
        ContinuousVoltage cv = setup.filter_output
                                   ? apply_filter(w, setup.filter, setup.oversample, setup.tail_hold)
                                   : ContinuousVoltage::zero_order_hold(w, setup.tail_hold);
        EquilibriumOptions opt{setup.sim.validity_radius, 1e-25, 120};
        AxialPotential p0 = coefficients_from_voltages(setup.basis, cv.at(0.0));
        auto eq0 = equilibrium_two_ion(p0, setup.constants, opt);
        run.trajectory = integrate(cv, setup.basis, {eq0.x1, eq0.x2, 0.0, 0.0, 0.0}, setup.sim,
                                   setup.constants, 4);
        run.final_potential = coefficients_from_voltages(setup.basis, cv.final_voltages());
        run.outcome = extract_excitation(run.trajectory, run.final_potential, setup.sim,
                                         setup.constants);
    } else {
        run = run_separation(setup);
    }

    double n_thermal = thermal_quanta(run.waveform, setup.basis, setup.constants,
                                      ctx.config.heating(),
                                      {setup.sim.validity_radius, 1e-25, 120});
    Json out;
    out["outcome"] = cli_detail::outcome_json(run.outcome);
    out["n_thermal"] = n_thermal;
    out["n_tot_1"] = run.outcome.n_coh_1 + n_thermal;
    out["n_tot_2"] = run.outcome.n_coh_2 + n_thermal;
    write_text_file(ctx.out("outcome.json"), out.dump(2) + "\n");

    std::ostringstream os;
    os << "t_s,x1_m,x2_m,v1_mps,v2_mps\n";
    for (std::size_t k = 0; k < run.trajectory.size();
         k += static_cast<std::size_t>(args.dump_stride)) {
        const auto& s = run.trajectory[k];
        os << fmt_double(s.time) << "," << fmt_double(s.x1) << "," << fmt_double(s.x2) << ","
           << fmt_double(s.v1) << "," << fmt_double(s.v2) << "\n";
    }
    write_text_file(ctx.out("trajectory.csv"), os.str());
    ctx.write_manifest("simulate");
    return 0;
}

inline RabiDataset read_rabi_csv(const std::filesystem::path& path) {
    CsvTable tbl = read_csv(path);
    int cdn = tbl.column("dn"), ct = tbl.column("t_us"), cs = tbl.column("successes"),
        cn = tbl.column("shots");
    RabiDataset data;
    for (std::size_t i = 0; i < tbl.rows.size(); ++i) {
        int ln = tbl.line_numbers[i];
        RabiRecord r;
        r.dn = static_cast<int>(parse_int(tbl.rows[i][cdn], ln));
        r.t = parse_double(tbl.rows[i][ct], ln) * 1e-6;
        r.successes = parse_int(tbl.rows[i][cs], ln);
        r.shots = parse_int(tbl.rows[i][cn], ln);
        data.records.push_back(r);
    }
    data.validate();
    return data;
}

inline std::string rabi_csv(const RabiDataset& data) {
    std::ostringstream os;
    os << "dn,t_us,successes,shots\n";
    for (const auto& r : data.records)
        os << r.dn << "," << fmt_double(r.t * 1e6) << "," << r.successes << "," << r.shots << "\n";
    return os.str();
}

inline Json posterior_json(const Posterior& post, int thin = 0) {
    Json out;
    out["n_th"] = cli_detail::summary_json(post.n_th);
    out["n_coh"] = cli_detail::summary_json(post.n_coh);
    out["omega_rad_s"] = cli_detail::summary_json(post.omega);
    out["acceptance_rate"] = post.acceptance_rate;
    out["flags"] = post.flags;
    out["retained_samples"] = post.samples.size();
    if (thin > 0) {
        Json samples = Json::array();
        for (std::size_t i = 0; i < post.samples.size(); i += static_cast<std::size_t>(thin))
            samples.push_back(
                Json{post.samples[i][0], post.samples[i][1], post.samples[i][2]});
        out["thinned_samples"] = samples;
    }
    return out;
}

struct EstimateArgs {
    std::string dataset;
    int thin = 0;
};

inline int cmd_estimate(RunContext& ctx, const EstimateArgs& args) {
    ctx.inputs.push_back(args.dataset);
    RabiDataset data = read_rabi_csv(args.dataset);
    Posterior post = run_mcmc(data, ctx.config.priors(), ctx.config.mcmc(ctx.seed),
                              ctx.config.rabi_model());
    write_text_file(ctx.out("posterior.json"), posterior_json(post, args.thin).dump(2) + "\n");
    ctx.write_manifest("estimate");
    return 0;
}

struct FitArgs {
    std::string kind; // alpha | beta | heating | charging
    std::string input;
    std::optional<std::string> update_config;
    // charging schedule (minutes)
    double laser_on_from = 0.0;
    double laser_on_to = 0.0;
};

inline int cmd_fit(RunContext& ctx, const FitArgs& args) {
    ctx.inputs.push_back(args.input);
    Json out;
    ProjectConfig updated = ctx.config;

    if (args.kind == "alpha") {
        CsvTable tbl = read_csv(args.input);
        int cseg = tbl.column("segment"), cv = tbl.column("voltage_V"),
            cf = tbl.column("omega_2pi_MHz"), cs = tbl.column("sigma_2pi_kHz");
        std::map<char, FrequencyScan> scans;
        for (std::size_t i = 0; i < tbl.rows.size(); ++i) {
            int ln = tbl.line_numbers[i];
            char seg = tbl.rows[i][cseg].empty() ? '?' : tbl.rows[i][cseg][0];
            auto& scan = scans[seg];
            scan.segment = segment_from_letter(seg);
            scan.points.push_back({parse_double(tbl.rows[i][cv], ln),
                                   kTwoPi * 1e6 * parse_double(tbl.rows[i][cf], ln),
                                   kTwoPi * 1e3 * parse_double(tbl.rows[i][cs], ln)});
        }
        std::vector<FrequencyScan> list;
        for (auto& [seg, scan] : scans) list.push_back(scan);
        AlphaFit fit = fit_alpha(list, ctx.config.constants());
        out["alpha_c"] = Json{{"value", fit.alpha_c.value}, {"sigma", fit.alpha_c.sigma}};
        out["alpha_s"] = Json{{"value", fit.alpha_s.value}, {"sigma", fit.alpha_s.sigma}};
        out["alpha_o"] = Json{{"value", fit.alpha_o.value}, {"sigma", fit.alpha_o.sigma}};
        out["alpha_prime"] = Json{{"value", fit.alpha_prime.value}, {"sigma", fit.alpha_prime.sigma}};
        out["rss"] = fit.rss;
        out["dof"] = fit.dof;
        updated.alpha_c = fit.alpha_c.value;
        updated.alpha_s = fit.alpha_s.value;
        updated.alpha_o = fit.alpha_o.value;
        updated.alpha_prime = fit.alpha_prime.value;
        updated.sigma_alpha_c = fit.alpha_c.sigma;
        updated.sigma_alpha_s = fit.alpha_s.sigma;
        updated.sigma_alpha_o = fit.alpha_o.sigma;
        updated.sigma_alpha_prime = fit.alpha_prime.sigma;
    } else if (args.kind == "beta") {
        CsvTable tbl = read_csv(args.input);
        int cc = tbl.column("U_C"), cs = tbl.column("U_S"), co = tbl.column("U_O"),
            cd = tbl.column("d_um"), ce = tbl.column("sigma_um");
        std::vector<DistanceScanPoint> scan;
        for (std::size_t i = 0; i < tbl.rows.size(); ++i) {
            int ln = tbl.line_numbers[i];
            DistanceScanPoint pt;
            pt.voltages = {parse_double(tbl.rows[i][cc], ln), parse_double(tbl.rows[i][cs], ln),
                           parse_double(tbl.rows[i][co], ln), 0.0, 0.0};
            pt.distance = parse_double(tbl.rows[i][cd], ln) * 1e-6;
            pt.sigma = parse_double(tbl.rows[i][ce], ln) * 1e-6;
            scan.push_back(pt);
        }
        BetaFit fit = fit_beta(scan, ctx.config.basis(), ctx.config.constants());
        out["beta_c"] = Json{{"value", fit.beta_c.value}, {"sigma", fit.beta_c.sigma}};
        out["beta_s"] = Json{{"value", fit.beta_s.value}, {"sigma", fit.beta_s.sigma}};
        out["beta_prime"] = Json{{"value", fit.beta_prime.value}, {"sigma", fit.beta_prime.sigma}};
        out["rss"] = fit.rss;
        out["dof"] = fit.dof;
        updated.beta_c = fit.beta_c.value;
        updated.beta_s = fit.beta_s.value;
        updated.beta_prime = fit.beta_prime.value;
        updated.sigma_beta_c = fit.beta_c.sigma;
        updated.sigma_beta_s = fit.beta_s.sigma;
        updated.sigma_beta_prime = fit.beta_prime.sigma;
    } else if (args.kind == "heating") {
        CsvTable tbl = read_csv(args.input);
        int cf = tbl.column("omega_2pi_MHz"), cr = tbl.column("rate_per_ms");
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < tbl.rows.size(); ++i) {
            int ln = tbl.line_numbers[i];
            pts.emplace_back(kTwoPi * 1e6 * parse_double(tbl.rows[i][cf], ln),
                             parse_double(tbl.rows[i][cr], ln));
        }
        HeatingModel fit = fit_heating_power_law(pts);
        out["prefactor_per_ms"] = Json{{"value", fit.prefactor}, {"sigma", fit.sigma_prefactor}};
        out["exponent"] = Json{{"value", fit.exponent}, {"sigma", fit.sigma_exponent}};
        updated.heating_prefactor = fit.prefactor;
        updated.heating_exponent = fit.exponent;
    } else if (args.kind == "charging") {
        CsvTable tbl = read_csv(args.input);
        int ct = tbl.column("t_min"), cu = tbl.column("U_mV");
        std::vector<double> times, u;
        for (std::size_t i = 0; i < tbl.rows.size(); ++i) {
            int ln = tbl.line_numbers[i];
            times.push_back(parse_double(tbl.rows[i][ct], ln));
            u.push_back(parse_double(tbl.rows[i][cu], ln));
        }
        LaserSchedule sched{{{args.laser_on_from, args.laser_on_to}}};
        if (!(args.laser_on_to > args.laser_on_from))
            throw UsageError("fit charging: give the laser-on interval via --on-from/--on-to");
        ChargingFit fit = fit_charging(times, u, sched, u.empty() ? 0.0 : u.front());
        out["k_prime_mv_min"] = Json{{"value", fit.params.k_prime}, {"sigma", fit.sigma_k_prime}};
        out["delta_per_min"] = Json{{"value", fit.params.delta}, {"sigma", fit.sigma_delta}};
        out["kappa_dis_per_min"] =
            Json{{"value", fit.params.kappa_dis}, {"sigma", fit.sigma_kappa_dis}};
        out["rss"] = fit.rss;
        out["dof"] = fit.dof;
        updated.charging_k_prime = fit.params.k_prime;
        updated.charging_delta = fit.params.delta;
        updated.charging_kappa_dis = fit.params.kappa_dis;
    } else {
        throw UsageError("fit: kind must be one of alpha, beta, heating, charging");
    }

    write_text_file(ctx.out("fit.json"), out.dump(2) + "\n");
    if (args.update_config) {
        write_text_file(*args.update_config, serialize_config(updated));
        ctx.outputs.push_back(*args.update_config);
    }
    ctx.write_manifest("fit");
    return 0;
}

struct DriftArgs {
    std::string mode = "charging"; // charging | servo | window
    double on_from = 0.0, on_to = 10.0; // minutes
    double t_max = 30.0;                // minutes
    int points = 121;
    double initial_offset_mv = 10.0;
    int updates = 40;
    double window_span_mv = 40.0; // window search span, +/- around zero
    int window_grid = 9;
    double slow_duration_us = 400.0;
};

inline int cmd_drift(RunContext& ctx, const DriftArgs& args) {
    if (args.mode == "charging") {
        LaserSchedule sched{{{args.on_from, args.on_to}}};
        std::vector<double> times(static_cast<std::size_t>(args.points));
        for (int i = 0; i < args.points; ++i)
            times[static_cast<std::size_t>(i)] =
                args.t_max * static_cast<double>(i) / (args.points - 1);
        auto trace = simulate_charging(ctx.config.charging(), sched, 0.0, times);
        std::ostringstream os;
        os << "t_min,U_mV\n";
        for (std::size_t i = 0; i < times.size(); ++i)
            os << fmt_double(times[i]) << "," << fmt_double(trace[i]) << "\n";
        write_text_file(ctx.out("charging.csv"), os.str());
    } else if (args.mode == "servo") {
        LaserSchedule sched; // no drift during calibration by default
        ServoTrace trace = simulate_servo(args.initial_offset_mv, ctx.config.charging(), sched,
                                          ctx.config.servo(ctx.seed), args.updates);
        std::ostringstream os;
        os << "step,error_mV,applied_mV\n";
        for (std::size_t i = 0; i < trace.steps.size(); ++i)
            os << i << "," << fmt_double(trace.steps[i].error_mv) << ","
               << fmt_double(trace.steps[i].applied_mv) << "\n";
        write_text_file(ctx.out("servo.csv"), os.str());
        Json j;
        j["settled_after_updates"] = trace.settled_after;
        j["steady_state_error_mv"] = trace.steady_state_error_mv;
        write_text_file(ctx.out("servo.json"), j.dump(2) + "\n");
    } else if (args.mode == "window") {
        SeparationSetup setup = ctx.config.separation_setup();
        setup.emitted_duration = args.slow_duration_us * 1e-6;
        auto classify = [&](double du_o) {
            SeparationSetup s = setup;
            s.ramp.du_o = du_o;
            return run_separation(s).outcome.classification;
        };
        double span = args.window_span_mv * 1e-3;
        TiltWindow w = find_tilt_window(classify, -span, span, args.window_grid,
                                        ctx.config.awg_resolution, ctx.config.gamma_o);
        Json j;
        j["lower_V"] = w.lower;
        j["upper_V"] = w.upper;
        j["center_V"] = w.center;
        j["half_width_V"] = w.half_width;
        j["gamma_crit_V_per_m"] = w.gamma_crit;
        j["critical_force_N"] = ctx.config.constants().charge * w.gamma_crit;
        write_text_file(ctx.out("window.json"), j.dump(2) + "\n");
    } else {
        throw UsageError("drift: mode must be one of charging, servo, window");
    }
    ctx.write_manifest("drift");
    return 0;
}

/// demo: design the default ramp, run it through the hardware model and the
/// integrator, and report the oscillatory, thermal and total excitation.
inline int cmd_demo(RunContext& ctx) {
    SeparationSetup setup = ctx.config.separation_setup();
    SeparationRun run = run_separation(setup);
    double n_thermal = thermal_quanta(run.waveform, setup.basis, setup.constants,
                                      ctx.config.heating(),
                                      {setup.sim.validity_radius, 1e-25, 120});
    auto trace = design_trace(run.waveform, setup.basis, setup.constants,
                              {setup.sim.validity_radius, 1e-25, 120});
    std::size_t am = 0;
    for (std::size_t k = 1; k < trace.size(); ++k)
        if (trace[k].omega < trace[am].omega) am = k;

    Json out;
    out["duration_us"] = run.waveform.duration() * 1e6;
    out["samples"] = run.waveform.size();
    out["cp_index"] = run.waveform.cp_index;
    out["omega_cp_kHz"] = trace[run.waveform.cp_index].omega / kTwoPi / 1e3;
    out["omega_min_kHz"] = trace[am].omega / kTwoPi / 1e3;
    out["outcome"] = cli_detail::outcome_json(run.outcome);
    out["n_thermal"] = n_thermal;
    out["n_tot_1"] = run.outcome.n_coh_1 + n_thermal;
    out["n_tot_2"] = run.outcome.n_coh_2 + n_thermal;
    write_text_file(ctx.out("demo.json"), out.dump(2) + "\n");
    ctx.write_manifest("demo");
    return 0;
}

} // namespace ionsep
