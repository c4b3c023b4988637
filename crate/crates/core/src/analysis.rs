//! Ensemble statistics: disagreement, mean-square curves, exponential rate
//! fits, the Lyapunov functional, gain plateaus and input bounds.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::{fiedler_value, Laplacian};
use crate::sim::{format_f64, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("trajectory {path} does not share the sampling grid of the ensemble")]
    InconsistentGrids { path: u64 },
    #[error("curve value {value} at t = {time} is not positive; shrink the fit window")]
    NonpositiveData { time: f64, value: f64 },
    #[error("fit window [{lo}, {hi}] holds {points} samples, need at least 2")]
    WindowTooSmall { lo: f64, hi: f64, points: usize },
    #[error("Lyapunov monitor needs a symmetric Laplacian")]
    AsymmetricLaplacian,
    #[error("graph is disconnected, lambda_2 = 0")]
    DisconnectedGraph,
    #[error("psi must be positive and have one entry per agent")]
    InvalidPsi,
    #[error("reference agent {0} out of range")]
    BadReferenceAgent(usize),
}

/// `theta = ((I_N - 11^T / N) kron I_n) x`.
pub fn disagreement(x: &[f64], state_dim: usize) -> Vec<f64> {
    let agents = x.len() / state_dim;
    let mut mean = vec![0.0; state_dim];
    for xi in x.chunks_exact(state_dim) {
        for (m, v) in mean.iter_mut().zip(xi) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= agents as f64);
    x.chunks_exact(state_dim).flat_map(|xi| xi.iter().zip(&mean).map(|(v, m)| v - m)).collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `max_{i,j} ||x_i - x_j||`.
pub fn max_pair_distance(x: &[f64], state_dim: usize) -> f64 {
    let blocks: Vec<&[f64]> = x.chunks_exact(state_dim).collect();
    let mut best = 0.0f64;
    for i in 0..blocks.len() {
        for j in i + 1..blocks.len() {
            best = best.max(squared_distance(blocks[i], blocks[j]));
        }
    }
    best.sqrt()
}

/// Sample mean and its standard error (`sd / sqrt(M)`, unbiased `sd`).
fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let m = values.clone().count();
    let mean = values.clone().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

fn check_grids(ensemble: &[Trajectory]) -> Result<&Trajectory, AnalysisError> {
    let first = ensemble.first().ok_or(AnalysisError::EmptyEnsemble)?;
    for t in ensemble {
        if t.times != first.times || t.agents != first.agents || t.state_dim != first.state_dim {
            return Err(AnalysisError::InconsistentGrids { path: t.path_index });
        }
    }
    Ok(first)
}

/// Mean-square curves of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MsCurves {
    pub times: Vec<f64>,
    pub reference_agent: usize,
    /// Agents compared against the reference, in index order.
    pub compared_agents: Vec<usize>,
    /// `pair_ms[p][k]` estimates `E||x_i - x_ref||^2` for `i = compared_agents[p]`.
    pub pair_ms: Vec<Vec<f64>>,
    pub pair_se: Vec<Vec<f64>>,
    /// `E|theta|^2`.
    pub theta_ms: Vec<f64>,
    pub theta_se: Vec<f64>,
    /// `max_{i<j} E||x_i - x_j||^2` over all pairs.
    pub max_pair_ms: Vec<f64>,
    pub paths: usize,
}

impl MsCurves {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend(self.compared_agents.iter().map(|i| format!("ms_err_{}", i + 1)));
        cols.push("ms_theta".into());
        cols.extend(self.compared_agents.iter().map(|i| format!("se_{}", i + 1)));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for k in 0..self.times.len() {
            let mut row = vec![format_f64(self.times[k])];
            row.extend(self.pair_ms.iter().map(|c| format_f64(c[k])));
            row.push(format_f64(self.theta_ms[k]));
            row.extend(self.pair_se.iter().map(|c| format_f64(c[k])));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn ms_curves(ensemble: &[Trajectory], reference_agent: usize) -> Result<MsCurves, AnalysisError> {
    let first = check_grids(ensemble)?;
    let (agents, n) = (first.agents, first.state_dim);
    if reference_agent >= agents {
        return Err(AnalysisError::BadReferenceAgent(reference_agent));
    }
    let compared: Vec<usize> = (0..agents).filter(|&i| i != reference_agent).collect();
    let samples = first.times.len();
    let mut pair_ms = vec![Vec::with_capacity(samples); compared.len()];
    let mut pair_se = vec![Vec::with_capacity(samples); compared.len()];
    let mut theta_ms = Vec::with_capacity(samples);
    let mut theta_se = Vec::with_capacity(samples);
    let mut max_pair_ms = Vec::with_capacity(samples);

    for k in 0..samples {
        for (p, &i) in compared.iter().enumerate() {
            let (m, se) = mean_and_se(
                ensemble.iter().map(|t| squared_distance(t.agent_state(k, i), t.agent_state(k, reference_agent))),
            );
            pair_ms[p].push(m);
            pair_se[p].push(se);
        }
        let (m, se) = mean_and_se(ensemble.iter().map(|t| {
            let theta = disagreement(&t.states[k], n);
            theta.iter().map(|v| v * v).sum::<f64>()
        }));
        theta_ms.push(m);
        theta_se.push(se);
        let mut worst = 0.0f64;
        for i in 0..agents {
            for j in i + 1..agents {
                let mean = ensemble.iter().map(|t| squared_distance(t.agent_state(k, i), t.agent_state(k, j))).sum::<f64>()
                    / ensemble.len() as f64;
                worst = worst.max(mean);
            }
        }
        max_pair_ms.push(worst);
    }
    Ok(MsCurves {
        times: first.times.clone(),
        reference_agent,
        compared_agents: compared,
        pair_ms,
        pair_se,
        theta_ms,
        theta_se,
        max_pair_ms,
        paths: ensemble.len(),
    })
}

/// Per-path ratio `max_pair_distance(x(T)) / max_pair_distance(x(0))`.
pub fn pathwise_consensus_ratios(ensemble: &[Trajectory]) -> Vec<f64> {
    ensemble
        .iter()
        .map(|t| {
            let start = max_pair_distance(&t.states[0], t.state_dim);
            let end = max_pair_distance(t.states.last().expect("trajectory has samples"), t.state_dim);
            end / start
        })
        .collect()
}

/// First sampled time at which `curve` drops below `fraction * curve[0]`.
pub fn time_to_threshold(times: &[f64], curve: &[f64], fraction: f64) -> Option<f64> {
    let target = fraction * curve.first()?;
    times.iter().zip(curve).find(|(_, v)| **v < target).map(|(t, _)| *t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub delta_hat: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
    pub theory_delta: f64,
}

impl RateFit {
    pub const CSV_HEADER: &'static str = "delta_hat,t_lo,t_hi,r_squared,points,theory_delta";

    pub fn csv_row(&self) -> String {
        [self.delta_hat, self.window.0, self.window.1, self.r_squared]
            .iter()
            .map(|v| format_f64(*v))
            .chain([self.points.to_string(), format_f64(self.theory_delta)])
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_text(&self) -> String {
        format!(
            "delta_hat = {}\nwindow = [{}, {}]\nr_squared = {}\npoints = {}\ntheory_delta = {}\n",
            format_f64(self.delta_hat),
            format_f64(self.window.0),
            format_f64(self.window.1),
            format_f64(self.r_squared),
            self.points,
            format_f64(self.theory_delta)
        )
    }
}

/// Least-squares line through `(t, ln curve)` for `t` in `[lo, hi]`;
/// `delta_hat` is minus its slope.
pub fn fit_exponential_rate(
    times: &[f64],
    curve: &[f64],
    window: (f64, f64),
    theory_delta: f64,
) -> Result<RateFit, AnalysisError> {
    let (lo, hi) = window;
    let mut pts = Vec::new();
    for (&t, &v) in times.iter().zip(curve) {
        if t < lo || t > hi {
            continue;
        }
        if !(v > 0.0) {
            return Err(AnalysisError::NonpositiveData { time: t, value: v });
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 2 {
        return Err(AnalysisError::WindowTooSmall { lo, hi, points: pts.len() });
    }
    if pts.iter().all(|p| p.1 == pts[0].1) {
        return Ok(RateFit { delta_hat: 0.0, intercept: pts[0].1, window, r_squared: 1.0, points: pts.len(), theory_delta });
    }
    let m = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - t_mean) * (p.1 - y_mean)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - y_mean).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit { delta_hat: -slope, intercept, window, r_squared, points: pts.len(), theory_delta })
}

/// Fit on `[0.2 T, 0.8 T]`, with the upper end pulled in before the first
/// nonpositive value.
pub fn fit_exponential_rate_auto(times: &[f64], curve: &[f64], theory_delta: f64) -> Result<RateFit, AnalysisError> {
    let horizon = *times.last().ok_or(AnalysisError::WindowTooSmall { lo: 0.0, hi: 0.0, points: 0 })?;
    let lo = 0.2 * horizon;
    let mut hi = 0.8 * horizon;
    if let Some(k) = times.iter().zip(curve).position(|(&t, &v)| t >= lo && t <= hi && !(v > 0.0)) {
        hi = times[k.saturating_sub(1)];
    }
    fit_exponential_rate(times, curve, (lo, hi), theory_delta)
}

/// Lyapunov functional along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    /// `V3 = theta^T (L kron P) theta + sum_i e^{-gamma t} (c_i - psi_i)^2`.
    pub v3: Vec<f64>,
    /// `theta^T (L kron P) theta`.
    pub v3_check: Vec<f64>,
    /// `e^{delta t} * v3_check`.
    pub weighted: Vec<f64>,
    pub delta: f64,
}

/// Default `psi_i = 1 / lambda_2 + 1`.
pub fn default_psi(lap: &Laplacian) -> Result<Vec<f64>, AnalysisError> {
    let lambda2 = fiedler_value(lap).ok_or(AnalysisError::AsymmetricLaplacian)?;
    if !(lambda2 > 1e-12) {
        return Err(AnalysisError::DisconnectedGraph);
    }
    Ok(vec![1.0 / lambda2 + 1.0; lap.n_nodes()])
}

/// `theta^T (L kron P) theta`.
pub fn graph_quadratic_form(lap: &DMatrix<f64>, p: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let n = p.nrows();
    let agents = lap.nrows();
    let mut acc = 0.0;
    for i in 0..agents {
        for j in 0..agents {
            let l = lap[(i, j)];
            if l == 0.0 {
                continue;
            }
            let (ti, tj) = (&theta[i * n..(i + 1) * n], &theta[j * n..(j + 1) * n]);
            let mut q = 0.0;
            for r in 0..n {
                for c in 0..n {
                    q += ti[r] * p[(r, c)] * tj[c];
                }
            }
            acc += l * q;
        }
    }
    acc
}

/// `V3` at one instant.
pub fn lyapunov_value(
    lap: &DMatrix<f64>,
    p: &DMatrix<f64>,
    psi: &[f64],
    gamma: f64,
    t: f64,
    theta: &[f64],
    c: &[f64],
) -> (f64, f64) {
    let check = graph_quadratic_form(lap, p, theta);
    let decay = (-gamma * t).exp();
    let gains: f64 = c.iter().zip(psi).map(|(ci, pi)| decay * (ci - pi) * (ci - pi)).sum();
    (check + gains, check)
}

pub fn lyapunov_monitor(
    traj: &Trajectory,
    p: &DMatrix<f64>,
    lap: &Laplacian,
    psi: &[f64],
    gamma: f64,
) -> Result<LyapunovSeries, AnalysisError> {
    if !lap.is_symmetric() {
        return Err(AnalysisError::AsymmetricLaplacian);
    }
    if psi.len() != traj.agents || psi.iter().any(|&v| !(v > 0.0)) {
        return Err(AnalysisError::InvalidPsi);
    }
    let delta = 1.0 / p.symmetric_eigenvalues().max();
    let mut series = LyapunovSeries {
        times: traj.times.clone(),
        v3: Vec::with_capacity(traj.len()),
        v3_check: Vec::with_capacity(traj.len()),
        weighted: Vec::with_capacity(traj.len()),
        delta,
    };
    for k in 0..traj.len() {
        let t = traj.times[k];
        let theta = disagreement(&traj.states[k], traj.state_dim);
        let (v3, check) = lyapunov_value(lap.matrix(), p, psi, gamma, t, &theta, &traj.gains[k]);
        series.v3.push(v3);
        series.v3_check.push(check);
        series.weighted.push((delta * t).exp() * check);
    }
    Ok(series)
}

/// Ensemble check of `E[e^{delta t} V3_check(t)] <= V3(0) + k * SE`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovBound {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// Ensemble mean of `V3` at `t = 0`.
    pub v3_initial: f64,
    pub se_multiplier: f64,
    /// `min_t (v3_initial + k * se - mean)`; nonnegative iff the bound holds.
    pub worst_margin: f64,
    pub worst_time: f64,
}

impl LyapunovBound {
    pub fn holds(&self) -> bool {
        self.worst_margin >= 0.0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean_weighted_v3_check,se,bound\n");
        for k in 0..self.times.len() {
            let bound = self.v3_initial + self.se_multiplier * self.se[k];
            out.push_str(&format!(
                "{},{},{},{}\n",
                format_f64(self.times[k]),
                format_f64(self.mean[k]),
                format_f64(self.se[k]),
                format_f64(bound)
            ));
        }
        out
    }
}

pub fn lyapunov_bound(
    ensemble: &[Trajectory],
    p: &DMatrix<f64>,
    lap: &Laplacian,
    psi: &[f64],
    gamma: f64,
    se_multiplier: f64,
) -> Result<LyapunovBound, AnalysisError> {
    let first = check_grids(ensemble)?;
    let series = ensemble
        .iter()
        .map(|t| lyapunov_monitor(t, p, lap, psi, gamma))
        .collect::<Result<Vec<_>, _>>()?;
    let v3_initial = series.iter().map(|s| s.v3[0]).sum::<f64>() / series.len() as f64;
    let mut bound = LyapunovBound {
        times: first.times.clone(),
        mean: Vec::new(),
        se: Vec::new(),
        v3_initial,
        se_multiplier,
        worst_margin: f64::INFINITY,
        worst_time: 0.0,
    };
    for k in 0..first.times.len() {
        let (m, se) = mean_and_se(series.iter().map(|s| s.weighted[k]));
        let margin = v3_initial + se_multiplier * se - m;
        if margin < bound.worst_margin {
            bound.worst_margin = margin;
            bound.worst_time = first.times[k];
        }
        bound.mean.push(m);
        bound.se.push(se);
    }
    Ok(bound)
}

pub const DEFAULT_GAIN_REL_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainConvergence {
    pub c_final: f64,
    pub tail_increment: f64,
    pub plateau: bool,
}

/// Plateau test `c_i(T) - c_i(T (1 - tail)) <= rel_tol * c_i(T)`, using the
/// first sample at or after `T (1 - tail)`.
pub fn gain_convergence(traj: &Trajectory, tail_fraction: f64, rel_tol: f64) -> Vec<GainConvergence> {
    let horizon = *traj.times.last().expect("trajectory has samples");
    let start = horizon * (1.0 - tail_fraction);
    let k0 = traj.times.iter().position(|&t| t >= start - 1e-12 * horizon.abs()).unwrap_or(traj.len() - 1);
    let last = traj.gains.last().expect("trajectory has samples");
    last.iter()
        .zip(&traj.gains[k0])
        .map(|(&c_final, &c_start)| {
            let tail_increment = c_final - c_start;
            GainConvergence { c_final, tail_increment, plateau: tail_increment <= rel_tol * c_final }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSup {
    pub sup: f64,
    pub argmax_time: f64,
    pub argmax_index: usize,
}

/// Per-agent `max_k ||u_i(t_k)||`, first maximizer on ties.
pub fn input_sup(traj: &Trajectory) -> Vec<InputSup> {
    (0..traj.agents)
        .map(|i| {
            let mut best = InputSup { sup: 0.0, argmax_time: traj.times[0], argmax_index: 0 };
            for k in 0..traj.inputs.len() {
                let norm = traj.agent_input(k, i).iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > best.sup {
                    best = InputSup { sup: norm, argmax_time: traj.times[k], argmax_index: k };
                }
            }
            best
        })
        .collect()
}
