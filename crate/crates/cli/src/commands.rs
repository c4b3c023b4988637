//! The four subcommands, as library calls returning structured outcomes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use consensus_core::analysis::{
    default_psi, fit_exponential_rate_auto, gain_convergence, input_sup, lyapunov_bound, ms_curves,
    pathwise_consensus_ratios, time_to_threshold, GainConvergence, InputSup, LyapunovBound, MsCurves, RateFit,
    DEFAULT_GAIN_REL_TOL,
};
use consensus_core::graph::{
    decompose_leader_follower, has_spanning_tree, spectral_diagnostics, strongly_connected_components,
};
use consensus_core::protocol::{topology_check, validate, Severity, ValidationReport};
use consensus_core::riccati::{solve_sare, RiccatiSolution, SareOptions};
use consensus_core::sim::{format_f64, run_ensemble, run_ensemble_with_threads, SimConfig, Trajectory};
use nalgebra::DMatrix;

use crate::config::{override_scalar, parse_config, ExperimentConfig};
use crate::output::{
    FileEntry, GainSection, Manifest, OutputDir, RunSection, SolverSection, ValidationSection, SEED_SCHEME,
};
use crate::plot::line_plot;
use crate::CliError;

/// Tail fraction used for the gain plateau test.
pub const GAIN_TAIL_FRACTION: f64 = 0.2;
/// Standard-error multiplier in the Lyapunov bound check.
pub const LYAPUNOV_SE_MULTIPLIER: f64 = 4.0;
/// Sweep comparison: time for `E|theta|^2` to fall below this fraction of its initial value.
pub const SWEEP_THRESHOLD_FRACTION: f64 = 1e-2;

fn matrix_text(m: &DMatrix<f64>) -> String {
    m.row_iter()
        .map(|r| format!("  [{}]", r.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(", ")))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `sare`: solve and report `P`, `K`, `Gamma`.
pub fn sare_report(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let model = cfg.system_model()?;
    let sol = solve_sare(&model, &SareOptions::default())?;
    let mut out = String::new();
    writeln!(out, "P =\n{}", matrix_text(&sol.p)).unwrap();
    writeln!(out, "K =\n{}", matrix_text(&sol.k)).unwrap();
    writeln!(out, "Gamma =\n{}", matrix_text(&sol.gamma)).unwrap();
    writeln!(out, "residual = {}", format_f64(sol.residual)).unwrap();
    writeln!(out, "iterations = {}", sol.iterations).unwrap();
    writeln!(out, "lambda_max(P) = {}", format_f64(sol.lambda_max_p)).unwrap();
    writeln!(out, "delta = 1/lambda_max(P) = {}", format_f64(sol.decay_rate())).unwrap();
    if let Some(p) = cfg.reference_p() {
        let reference = RiccatiSolution::from_p(&model, p)?;
        writeln!(out, "reference P residual = {}", format_f64(reference.residual)).unwrap();
        writeln!(out, "reference K =\n{}", matrix_text(&reference.k)).unwrap();
        writeln!(out, "reference Gamma =\n{}", matrix_text(&reference.gamma)).unwrap();
    }
    Ok(out)
}

fn one_based(v: &[usize]) -> String {
    format!("{{{}}}", v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(", "))
}

fn vector_text(v: impl Iterator<Item = f64>) -> String {
    format!("[{}]", v.map(format_f64).collect::<Vec<_>>().join(", "))
}

/// `graph-check`: topology report and exit code (0 or 3).
pub fn graph_report(cfg: &ExperimentConfig) -> Result<(String, i32), CliError> {
    let g = cfg.digraph()?;
    let variant = cfg.variant()?;
    let mut out = String::new();
    writeln!(out, "agents = {}", g.n_nodes()).unwrap();
    writeln!(out, "undirected = {}", g.is_undirected()).unwrap();
    let tree = has_spanning_tree(&g);
    writeln!(out, "spanning tree = {tree}").unwrap();
    let sccs: Vec<String> = strongly_connected_components(&g).iter().map(|c| one_based(c)).collect();
    writeln!(out, "strongly connected components = {}", sccs.join(" ")).unwrap();
    match decompose_leader_follower(&g) {
        Ok(d) => {
            writeln!(out, "leaders = {} (M = {})", one_based(&d.leader_indices), d.leaders()).unwrap();
            writeln!(out, "followers = {}", one_based(&d.follower_indices)).unwrap();
            writeln!(out, "r = {}", vector_text(d.r.iter().copied())).unwrap();
            writeln!(out, "s = {}", vector_text(d.s.iter().copied())).unwrap();
        }
        Err(e) => writeln!(out, "leader/follower decomposition unavailable: {e}").unwrap(),
    }
    let diag = spectral_diagnostics(&g);
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), format_f64);
    writeln!(out, "lambda_2(L) = {}", opt(diag.lambda2_undirected)).unwrap();
    writeln!(out, "lambda_2(R L11 + L11^T R) = {}", opt(diag.lambda2_l11_tilde)).unwrap();
    writeln!(out, "lambda_1(S L22 + L22^T S) = {}", opt(diag.lambda1_l22_tilde)).unwrap();
    writeln!(out, "sigma_max(S L21) = {}", opt(diag.sigma_max_sl21)).unwrap();
    let checks = topology_check(variant, &g);
    let ok = checks.iter().all(|c| c.passed || c.severity == Severity::Warning);
    for c in &checks {
        writeln!(out, "[{}] {}: {}", if c.passed { "pass" } else if ok { "warn" } else { "FAIL" }, c.name, c.detail)
            .unwrap();
    }
    writeln!(out, "{variant} topology requirement {}", if ok { "holds" } else { "fails" }).unwrap();
    Ok((out, if ok { 0 } else { 3 }))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub force: bool,
    pub emit_plots: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub solution: RiccatiSolution,
    pub validation: ValidationReport,
    pub overridden: bool,
    pub x0: Vec<f64>,
    pub ensemble: Vec<Trajectory>,
    pub blown_up: Vec<u64>,
    pub curves: Option<MsCurves>,
    pub rate_fit: Option<RateFit>,
    pub rate_fit_error: Option<String>,
    pub lyapunov: Option<LyapunovBound>,
    /// Per path, per agent.
    pub gains: Vec<Vec<GainConvergence>>,
    pub inputs: Vec<Vec<InputSup>>,
    pub files: Vec<FileEntry>,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.blown_up.is_empty() {
            0
        } else {
            4
        }
    }
}

fn validation_text(report: &ValidationReport, overridden: bool) -> String {
    let mut text = report.to_string();
    text.push_str(if report.passed() {
        "result: passed\n"
    } else if overridden {
        "result: FAILED, overridden with --force\n"
    } else {
        "result: FAILED\n"
    });
    text
}

/// `run`: simulate the ensemble, analyse it and write every artifact.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let clock = Instant::now();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let model = cfg.system_model()?;
    let graph = cfg.digraph()?;
    let spec = cfg.protocol_spec()?;
    let solution = solve_sare(&model, &SareOptions::default())?;
    let reference = cfg.reference_p().map(|p| RiccatiSolution::from_p(&model, p)).transpose()?;

    let validation = validate(&spec, &solution, &graph);
    let overridden = !validation.passed();
    if overridden && !opts.force {
        let text = validation.to_string();
        return Err(if validation.topology_failed() { CliError::Topology(text) } else { CliError::Validation(text) });
    }

    let x0 = cfg.initial_state()?;
    let sim = SimConfig {
        model,
        graph: graph.clone(),
        spec: spec.clone(),
        solution: solution.clone(),
        step: cfg.simulation.h,
        horizon: cfg.simulation.T,
        output_stride: cfg.simulation.output_stride,
        master_seed: cfg.simulation.master_seed,
        x0: x0.clone(),
        blowup_threshold: cfg.simulation.blowup_threshold,
        open_loop: cfg.simulation.open_loop,
    };
    sim.check()?;
    let paths = cfg.simulation.M;
    let ensemble = match opts.threads {
        Some(k) => run_ensemble_with_threads(&sim, paths, k)?,
        None => run_ensemble(&sim, paths)?,
    };
    let blown_up: Vec<u64> = ensemble.iter().filter(|t| t.terminated_early()).map(|t| t.path_index).collect();

    let mut dir = OutputDir::create(out)?;
    if cfg.emits("trajectories") {
        for traj in &ensemble[..cfg.output.trajectories] {
            dir.write(&format!("trajectory_path{}.csv", traj.path_index), &traj.to_csv())?;
        }
    }
    if cfg.emits("validation") {
        dir.write("validation.txt", &validation_text(&validation, overridden))?;
    }

    let mut outcome_curves = None;
    let mut rate_fit = None;
    let mut rate_fit_error = None;
    let mut lyapunov = None;
    let gains: Vec<_> =
        ensemble.iter().map(|t| gain_convergence(t, GAIN_TAIL_FRACTION, DEFAULT_GAIN_REL_TOL)).collect();
    let inputs: Vec<_> = ensemble.iter().map(input_sup).collect();

    if blown_up.is_empty() {
        let curves = ms_curves(&ensemble, 0).expect("complete paths share one grid");
        if cfg.emits("ms_curves") {
            dir.write("ms_curves.csv", &curves.to_csv())?;
            dir.write("consensus.csv", &consensus_csv(&curves))?;
            dir.write("paths.csv", &paths_csv(&ensemble))?;
        }
        match fit_exponential_rate_auto(&curves.times, &curves.theta_ms, solution.decay_rate()) {
            Ok(fit) => {
                if cfg.emits("rate_fit") {
                    dir.write("rate_fit.txt", &fit.to_text())?;
                    dir.write("rate_fit.csv", &format!("{}\n{}\n", RateFit::CSV_HEADER, fit.csv_row()))?;
                }
                rate_fit = Some(fit);
            }
            Err(e) => {
                if cfg.emits("rate_fit") {
                    dir.write("rate_fit.txt", &format!("fit failed: {e}\n"))?;
                }
                rate_fit_error = Some(e.to_string());
            }
        }
        if graph.is_undirected() {
            let lap = graph.laplacian();
            if let Ok(psi) = default_psi(&lap) {
                let bound = lyapunov_bound(&ensemble, &solution.p, &lap, &psi, spec.gamma, LYAPUNOV_SE_MULTIPLIER)
                    .expect("validated ensemble");
                if cfg.emits("lyapunov") {
                    dir.write("lyapunov.csv", &bound.to_csv())?;
                }
                lyapunov = Some(bound);
            }
        }
        if opts.emit_plots {
            let mut series: Vec<(String, Vec<f64>)> = curves
                .compared_agents
                .iter()
                .zip(&curves.pair_ms)
                .map(|(i, c)| (format!("E|x{}-x1|^2", i + 1), c.clone()))
                .collect();
            series.push(("E|theta|^2".into(), curves.theta_ms.clone()));
            dir.write("ms_curves.svg", &line_plot("mean-square errors", &curves.times, &series, true))?;
        }
        outcome_curves = Some(curves);
    } else {
        let mut text = String::from("path,reason,step,time,max_abs_state\n");
        for t in &ensemble {
            if let Some(end) = &t.termination {
                writeln!(
                    text,
                    "{},{:?},{},{},{}",
                    t.path_index,
                    end.reason,
                    end.step,
                    format_f64(end.time),
                    format_f64(end.max_abs_state)
                )
                .unwrap();
            }
        }
        dir.write("blowups.csv", &text)?;
    }
    if cfg.emits("gains") {
        dir.write("gains.csv", &gains_csv(&gains))?;
    }
    if cfg.emits("inputs") {
        dir.write("inputs.csv", &inputs_csv(&inputs))?;
    }
    if opts.emit_plots && !ensemble[0].is_empty() {
        let t0 = &ensemble[0];
        let series: Vec<(String, Vec<f64>)> =
            (0..t0.agents).map(|i| (format!("c{}", i + 1), t0.gains.iter().map(|g| g[i]).collect())).collect();
        dir.write("gains_path0.svg", &line_plot("adaptive gains, path 0", &t0.times, &series, false))?;
    }

    let manifest = Manifest {
        run: RunSection {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            status: if blown_up.is_empty() { "ok".into() } else { "blowup".into() },
            master_seed: cfg.simulation.master_seed,
            seed_scheme: SEED_SCHEME.into(),
            paths,
            threads: opts.threads,
            blown_up_paths: blown_up.clone(),
            started_unix_seconds: started,
            wall_clock_seconds: clock.elapsed().as_secs_f64(),
        },
        sare: SolverSection {
            gains: GainSection::from_solution(&solution),
            iterations: solution.iterations,
            delta: solution.decay_rate(),
        },
        reference_p: reference.as_ref().map(GainSection::from_solution),
        validation: ValidationSection::new(&validation, overridden),
        files: dir.files().to_vec(),
        config: cfg.clone(),
    };
    dir.write("manifest.toml", &manifest.to_toml())?;

    Ok(RunOutcome {
        out_dir: out.to_path_buf(),
        solution,
        validation,
        overridden,
        x0,
        blown_up,
        curves: outcome_curves,
        rate_fit,
        rate_fit_error,
        lyapunov,
        gains,
        inputs,
        files: manifest.files.clone(),
        manifest,
        ensemble,
    })
}

fn consensus_csv(curves: &MsCurves) -> String {
    let mut out = String::from("t,max_pair_ms,ms_theta,se_theta\n");
    for k in 0..curves.times.len() {
        writeln!(
            out,
            "{},{},{},{}",
            format_f64(curves.times[k]),
            format_f64(curves.max_pair_ms[k]),
            format_f64(curves.theta_ms[k]),
            format_f64(curves.theta_se[k])
        )
        .unwrap();
    }
    out
}

fn paths_csv(ensemble: &[Trajectory]) -> String {
    let mut out = String::from("path,max_pair_ratio\n");
    for (t, ratio) in ensemble.iter().zip(pathwise_consensus_ratios(ensemble)) {
        writeln!(out, "{},{}", t.path_index, format_f64(ratio)).unwrap();
    }
    out
}

fn gains_csv(gains: &[Vec<GainConvergence>]) -> String {
    let mut out = String::from("path,agent,c_final,tail_increment,plateau\n");
    for (p, per_agent) in gains.iter().enumerate() {
        for (i, g) in per_agent.iter().enumerate() {
            writeln!(out, "{p},{},{},{},{}", i + 1, format_f64(g.c_final), format_f64(g.tail_increment), g.plateau)
                .unwrap();
        }
    }
    out
}

fn inputs_csv(inputs: &[Vec<InputSup>]) -> String {
    let mut out = String::from("path,agent,sup,argmax_time\n");
    for (p, per_agent) in inputs.iter().enumerate() {
        for (i, s) in per_agent.iter().enumerate() {
            writeln!(out, "{p},{},{},{}", i + 1, format_f64(s.sup), format_f64(s.argmax_time)).unwrap();
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub value: String,
    pub dir: PathBuf,
    pub exit_code: i32,
    pub time_to_threshold: Option<f64>,
    pub delta_hat: Option<f64>,
    pub error: Option<String>,
}

/// Directory name for one sweep value.
pub fn sweep_dir_name(key: &str, value: &str) -> String {
    format!("{key}={value}").chars().map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' }).collect()
}

/// `sweep`: one run per value of `key`, plus `sweep_comparison.csv`.
pub fn run_sweep(
    config_text: &str,
    key: &str,
    values: &[String],
    out: &Path,
    opts: &RunOptions,
    keep_going: bool,
) -> Result<Vec<SweepEntry>, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    parse_config(config_text)?;
    for v in values {
        parse_config(&override_scalar(config_text, key, v)?)?;
    }

    let mut entries = Vec::new();
    for value in values {
        let dir = out.join(sweep_dir_name(key, value));
        let result = override_scalar(config_text, key, value)
            .and_then(|text| parse_config(&text))
            .map_err(CliError::from)
            .and_then(|cfg| run_experiment(&cfg, &dir, opts));
        let entry = match result {
            Ok(run) => SweepEntry {
                value: value.clone(),
                dir,
                exit_code: run.exit_code(),
                time_to_threshold: run
                    .curves
                    .as_ref()
                    .and_then(|c| time_to_threshold(&c.times, &c.theta_ms, SWEEP_THRESHOLD_FRACTION)),
                delta_hat: run.rate_fit.as_ref().map(|f| f.delta_hat),
                error: (run.exit_code() != 0).then(|| format!("{} path(s) blew up", run.blown_up.len())),
            },
            Err(e) => SweepEntry {
                value: value.clone(),
                dir,
                exit_code: e.exit_code(),
                time_to_threshold: None,
                delta_hat: None,
                error: Some(e.to_string()),
            },
        };
        let failed = entry.exit_code != 0;
        entries.push(entry);
        if failed && !keep_going {
            break;
        }
    }

    let mut csv = String::from("key,value,exit_code,time_to_threshold,delta_hat\n");
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    for e in &entries {
        writeln!(csv, "{key},{},{},{},{}", e.value, e.exit_code, opt(e.time_to_threshold), opt(e.delta_hat)).unwrap();
    }
    let mut dir = OutputDir::create(out)?;
    dir.write("sweep_comparison.csv", &csv)?;
    Ok(entries)
}
