//! Euler-Maruyama integration of the closed loop.
//!
//! One step advances every agent with the same scalar Brownian increment:
//!
//! ```text
//! x_i' = x_i + h (A x_i + B u_i) + C x_i dW
//! c_i' = c_i + h e^{gamma t} xi_i^T Gamma xi_i
//! ```
//!
//! with `u_i` and the gain rate evaluated at the left endpoint.
//!
//! Noise streams: the master seed is expanded by splitmix64 into a 256-bit
//! ChaCha8 key and path `k` reads stream `k` of that key, so each path is a
//! pure function of `(master_seed, k)`. Stream `u64::MAX` is reserved for
//! sampling initial states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::WeightedDigraph;
use crate::protocol::{apply_gain, input_scale, quadratic_form, ProtocolError, ProtocolSpec};
use crate::riccati::{RiccatiSolution, SystemModel};

pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e9;
pub const INITIAL_STATE_STREAM: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("path {path}: {source}")]
    Path {
        path: u64,
        #[source]
        source: Box<SimError>,
    },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: SystemModel,
    pub graph: WeightedDigraph,
    pub spec: ProtocolSpec,
    pub solution: RiccatiSolution,
    pub step: f64,
    pub horizon: f64,
    pub output_stride: usize,
    pub master_seed: u64,
    /// Stacked `N * n` initial state.
    pub x0: Vec<f64>,
    pub blowup_threshold: f64,
    /// Forces `u = 0`; the gains still integrate.
    pub open_loop: bool,
}

impl SimConfig {
    /// Number of integration steps, once the config is known to be valid.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::ConfigInvalid(m));
        if !(self.step > 0.0 && self.step <= self.horizon && self.horizon.is_finite()) {
            return bad(format!("need 0 < h <= T, got h = {}, T = {}", self.step, self.horizon));
        }
        if self.output_stride < 1 {
            return bad("output_stride must be >= 1".into());
        }
        if !(self.blowup_threshold > 0.0) {
            return bad(format!("blowup_threshold must be positive, got {}", self.blowup_threshold));
        }
        let steps = self.steps();
        if ((steps as f64) * self.step - self.horizon).abs() > 1e-9 * self.horizon {
            return bad(format!("T / h = {} is not an integer", self.horizon / self.step));
        }
        if !steps.is_multiple_of(self.output_stride) {
            return bad(format!("{steps} steps is not a multiple of output_stride {}", self.output_stride));
        }
        let (n_agents, n, m) = (self.graph.n_nodes(), self.model.state_dim(), self.model.input_dim());
        if self.model.agents() != n_agents {
            return bad(format!("model has {} agents, graph has {n_agents}", self.model.agents()));
        }
        if self.x0.len() != n_agents * n {
            return bad(format!("x0 has length {}, expected {}", self.x0.len(), n_agents * n));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0 must be finite".into());
        }
        if self.spec.c0.len() != n_agents {
            return bad(format!("c0 has length {}, expected {n_agents}", self.spec.c0.len()));
        }
        if self.spec.c0.iter().any(|&c| !(c > 0.0)) {
            return bad("initial gains must be positive".into());
        }
        let sol = &self.solution;
        if sol.p.shape() != (n, n) || sol.k.shape() != (m, n) || sol.gamma.shape() != (n, n) {
            return bad("Riccati solution does not match the model dimensions".into());
        }
        Ok(())
    }
}

/// Per-path ChaCha8 generator.
pub fn path_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = master_seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `len` values uniformly from `[lo, hi)` on the reserved stream.
pub fn sample_initial_state(master_seed: u64, lo: f64, hi: f64, len: usize) -> Vec<f64> {
    let mut rng = path_rng(master_seed, INITIAL_STATE_STREAM);
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

/// Closed-loop vector field of one configuration.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    model: &'a SystemModel,
    graph: &'a WeightedDigraph,
    spec: &'a ProtocolSpec,
    sol: &'a RiccatiSolution,
    open_loop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: Vec<f64>,
    pub gains: Vec<f64>,
    /// Input applied during the step, i.e. evaluated at the left endpoint.
    pub input: Vec<f64>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(cfg: &'a SimConfig) -> Self {
        Self {
            model: &cfg.model,
            graph: &cfg.graph,
            spec: &cfg.spec,
            sol: &cfg.solution,
            open_loop: cfg.open_loop,
        }
    }

    pub fn from_parts(
        model: &'a SystemModel,
        graph: &'a WeightedDigraph,
        spec: &'a ProtocolSpec,
        sol: &'a RiccatiSolution,
        open_loop: bool,
    ) -> Self {
        Self { model, graph, spec, sol, open_loop }
    }

    fn neighborhood_error_into(&self, x: &[f64], xi: &mut [f64]) {
        let n = self.model.state_dim();
        xi.fill(0.0);
        for i in 0..self.graph.n_nodes() {
            for (j, w) in self.graph.in_neighbors(i) {
                for k in 0..n {
                    xi[i * n + k] += w * (x[i * n + k] - x[j * n + k]);
                }
            }
        }
    }

    fn input_into(&self, xi: &[f64], c: &[f64], u: &mut [f64]) -> Result<(), ProtocolError> {
        let (n, m) = (self.model.state_dim(), self.model.input_dim());
        if self.open_loop {
            u.fill(0.0);
            return Ok(());
        }
        for (i, &ci) in c.iter().enumerate() {
            if !(ci > 0.0) {
                return Err(ProtocolError::NonpositiveGain(ci));
            }
            let xi_i = &xi[i * n..(i + 1) * n];
            let scale = input_scale(self.spec, quadratic_form(&self.sol.p, xi_i), ci);
            apply_gain(&self.sol.k, scale, xi_i, &mut u[i * m..(i + 1) * m]);
        }
        Ok(())
    }

    /// Stacked input at `(x, c)`.
    pub fn input(&self, x: &[f64], c: &[f64]) -> Result<Vec<f64>, ProtocolError> {
        let mut xi = vec![0.0; x.len()];
        let mut u = vec![0.0; c.len() * self.model.input_dim()];
        self.neighborhood_error_into(x, &mut xi);
        self.input_into(&xi, c, &mut u)?;
        Ok(u)
    }

    /// Advances `(x, c)` in place and leaves the applied input in `u`.
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &self,
        x: &mut [f64],
        c: &mut [f64],
        t: f64,
        h: f64,
        dw: f64,
        xi: &mut [f64],
        u: &mut [f64],
        next: &mut [f64],
    ) -> Result<(), ProtocolError> {
        let (n, m) = (self.model.state_dim(), self.model.input_dim());
        let (a, b, cm) = (self.model.a(), self.model.b(), self.model.c());
        self.neighborhood_error_into(x, xi);
        self.input_into(xi, c, u)?;
        for i in 0..c.len() {
            let xs = &x[i * n..(i + 1) * n];
            let us = &u[i * m..(i + 1) * m];
            for r in 0..n {
                let mut drift = 0.0;
                let mut diffusion = 0.0;
                for k in 0..n {
                    drift += a[(r, k)] * xs[k];
                    diffusion += cm[(r, k)] * xs[k];
                }
                for k in 0..m {
                    drift += b[(r, k)] * us[k];
                }
                next[i * n + r] = xs[r] + h * drift + diffusion * dw;
            }
        }
        let growth = (self.spec.gamma * t).exp();
        for (i, ci) in c.iter_mut().enumerate() {
            *ci += h * growth * quadratic_form(&self.sol.gamma, &xi[i * n..(i + 1) * n]);
        }
        x.copy_from_slice(next);
        Ok(())
    }

    /// One Euler-Maruyama step from `(x, c)` at time `t`.
    pub fn em_step(&self, x: &[f64], c: &[f64], t: f64, h: f64, dw: f64) -> Result<StepOutput, ProtocolError> {
        let mut state = x.to_vec();
        let mut gains = c.to_vec();
        let mut xi = vec![0.0; x.len()];
        let mut input = vec![0.0; c.len() * self.model.input_dim()];
        let mut next = vec![0.0; x.len()];
        self.advance(&mut state, &mut gains, t, h, dw, &mut xi, &mut input, &mut next)?;
        Ok(StepOutput { state, gains, input })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    /// Some state component exceeded the blow-up threshold.
    Blowup,
    /// Some state component became NaN or infinite.
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Termination {
    pub reason: TerminationReason,
    pub step: usize,
    pub time: f64,
    /// Largest `|x|` component at termination.
    pub max_abs_state: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path_index: u64,
    pub agents: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub gains: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub termination: Option<Termination>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn terminated_early(&self) -> bool {
        self.termination.is_some()
    }

    /// State of agent `i` at sample `k`.
    pub fn agent_state(&self, k: usize, i: usize) -> &[f64] {
        &self.states[k][i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn agent_input(&self, k: usize, i: usize) -> &[f64] {
        &self.inputs[k][i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for i in 1..=self.agents {
            for k in 1..=self.state_dim {
                cols.push(format!("x_{i}_{k}"));
            }
        }
        for i in 1..=self.agents {
            cols.push(format!("c_{i}"));
        }
        for i in 1..=self.agents {
            for k in 1..=self.input_dim {
                cols.push(format!("u_{i}_{k}"));
            }
        }
        cols.join(",")
    }

    /// CSV text with 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for k in 0..self.len() {
            let row = std::iter::once(&self.times[k])
                .chain(&self.states[k])
                .chain(&self.gains[k])
                .chain(&self.inputs[k])
                .map(|v| format_f64(*v))
                .collect::<Vec<_>>();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Integrates path `path_index` of `cfg`.
pub fn simulate_path(cfg: &SimConfig, path_index: u64) -> Result<Trajectory, SimError> {
    cfg.check()?;
    integrate(cfg, path_index)
}

fn integrate(cfg: &SimConfig, path_index: u64) -> Result<Trajectory, SimError> {
    let field = ClosedLoop::new(cfg);
    let (n_agents, n, m) = (cfg.graph.n_nodes(), cfg.model.state_dim(), cfg.model.input_dim());
    let steps = cfg.steps();
    let h = cfg.step;
    let sqrt_h = h.sqrt();
    let mut rng = path_rng(cfg.master_seed, path_index);

    let samples = steps / cfg.output_stride + 1;
    let mut traj = Trajectory {
        path_index,
        agents: n_agents,
        state_dim: n,
        input_dim: m,
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples),
        gains: Vec::with_capacity(samples),
        inputs: Vec::with_capacity(samples),
        termination: None,
    };

    let mut x = cfg.x0.clone();
    let mut c = cfg.spec.c0.clone();
    let mut xi = vec![0.0; x.len()];
    let mut u = vec![0.0; n_agents * m];
    let mut next = vec![0.0; x.len()];

    for step in 0..steps {
        let t = step as f64 * h;
        let dw = sqrt_h * rng.sample::<f64, _>(StandardNormal);
        let record = step % cfg.output_stride == 0;
        if record {
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.gains.push(c.clone());
        }
        field.advance(&mut x, &mut c, t, h, dw, &mut xi, &mut u, &mut next)?;
        if record {
            traj.inputs.push(u.clone());
        }
        let max_abs = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let reason = if x.iter().any(|v| !v.is_finite()) {
            Some(TerminationReason::NonFinite)
        } else if max_abs > cfg.blowup_threshold {
            Some(TerminationReason::Blowup)
        } else {
            None
        };
        if let Some(reason) = reason {
            traj.termination = Some(Termination { reason, step: step + 1, time: (step + 1) as f64 * h, max_abs_state: max_abs });
            return Ok(traj);
        }
    }

    traj.times.push(steps as f64 * h);
    traj.inputs.push(field.input(&x, &c)?);
    traj.states.push(x);
    traj.gains.push(c);
    Ok(traj)
}

/// Paths `0..paths`, collected in path order on the current rayon pool.
pub fn run_ensemble(cfg: &SimConfig, paths: usize) -> Result<Vec<Trajectory>, SimError> {
    if paths == 0 {
        return Err(SimError::ConfigInvalid("ensemble needs at least one path".into()));
    }
    cfg.check()?;
    (0..paths as u64)
        .into_par_iter()
        .map(|k| integrate(cfg, k).map_err(|e| SimError::Path { path: k, source: Box::new(e) }))
        .collect()
}

/// [`run_ensemble`] on a dedicated pool of `threads` workers.
pub fn run_ensemble_with_threads(cfg: &SimConfig, paths: usize, threads: usize) -> Result<Vec<Trajectory>, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::ConfigInvalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_ensemble(cfg, paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use crate::protocol::ProtocolVariant;
    use crate::riccati::{solve_sare, SareOptions};

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn scalar_config(a: f64, b: f64, c: f64, agents: usize, adjacency: &[f64], x0: Vec<f64>) -> SimConfig {
        let model = SystemModel::new(matrix(1, 1, &[a]), matrix(1, 1, &[b]), matrix(1, 1, &[c]), agents).unwrap();
        let solution = RiccatiSolution::from_p(&model, matrix(1, 1, &[1.0])).unwrap();
        SimConfig {
            graph: WeightedDigraph::from_row_major(agents, adjacency).unwrap(),
            spec: ProtocolSpec {
                variant: ProtocolVariant::UndirectedStatic,
                k1: 1.0,
                k2: 1.0,
                mu: 2.0,
                gamma: 0.0,
                c0: vec![1.0; agents],
            },
            model,
            solution,
            step: 0.1,
            horizon: 1.0,
            output_stride: 1,
            master_seed: 7,
            x0,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            open_loop: false,
        }
    }

    fn pair(a: f64, c: f64, x0: Vec<f64>) -> SimConfig {
        scalar_config(a, 1.0, c, 2, &[0., 1., 1., 0.], x0)
    }

    #[test]
    fn explicit_euler_step() {
        let mut cfg = pair(-1.0, 0.0, vec![1.0, 1.0]);
        cfg.open_loop = true;
        let out = ClosedLoop::new(&cfg).em_step(&[1.0, 1.0], &[1.0, 1.0], 0.0, 0.1, 0.0).unwrap();
        assert!((out.state[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn pure_diffusion_step() {
        let mut cfg = pair(0.0, 1.0, vec![1.0, 1.0]);
        cfg.open_loop = true;
        let out = ClosedLoop::new(&cfg).em_step(&[1.0, 1.0], &[1.0, 1.0], 0.0, 0.1, 0.2).unwrap();
        assert!((out.state[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn two_agent_hand_step() {
        let cfg = pair(0.0, 0.0, vec![1.0, 0.0]);
        // P = 1, B = 1 gives K = -1 and Gamma = 1.
        assert_eq!(cfg.solution.k[(0, 0)], -1.0);
        let out = ClosedLoop::new(&cfg).em_step(&[1.0, 0.0], &[1.0, 1.0], 0.0, 0.1, 0.0).unwrap();
        assert_eq!(out.input, vec![-1.0, 1.0]);
        assert!((out.state[0] - 0.9).abs() < 1e-15 && (out.state[1] - 0.1).abs() < 1e-15);
        assert!((out.gains[0] - 1.1).abs() < 1e-15 && (out.gains[1] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn consensus_is_invariant_without_noise() {
        let mut cfg = scalar_config(-0.3, 1.0, 0.0, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.], vec![2.0; 3]);
        cfg.step = 0.01;
        let traj = simulate_path(&cfg, 0).unwrap();
        for (k, &t) in traj.times.iter().enumerate() {
            let expected = 2.0 * (1.0 - 0.3 * 0.01f64).powi((t / 0.01).round() as i32);
            for &v in &traj.states[k] {
                assert!((v - expected).abs() < 1e-13);
            }
            assert_eq!(traj.gains[k], vec![1.0; 3]);
        }
    }

    #[test]
    fn same_path_is_bit_identical() {
        let mut cfg = pair(0.1, 0.5, vec![1.0, -1.0]);
        cfg.step = 0.01;
        assert_eq!(simulate_path(&cfg, 3).unwrap(), simulate_path(&cfg, 3).unwrap());
        assert_ne!(simulate_path(&cfg, 3).unwrap(), simulate_path(&cfg, 4).unwrap());
    }

    #[test]
    fn unstable_open_loop_blows_up() {
        let mut cfg = pair(10.0, 0.0, vec![1.0, 1.0]);
        cfg.open_loop = true;
        cfg.step = 1e-3;
        cfg.horizon = 2.0;
        cfg.blowup_threshold = 1e3;
        let traj = simulate_path(&cfg, 0).unwrap();
        let end = traj.termination.expect("must terminate");
        assert_eq!(end.reason, TerminationReason::Blowup);
        assert!(end.time < 2.0 && (end.time - 0.69).abs() < 0.05, "blow-up at {}", end.time);
    }

    #[test]
    fn samples_follow_the_stride() {
        let mut cfg = pair(0.0, 0.3, vec![1.0, 0.0]);
        cfg.step = 0.01;
        cfg.output_stride = 10;
        let traj = simulate_path(&cfg, 0).unwrap();
        assert_eq!(traj.len(), 11);
        for (k, t) in traj.times.iter().enumerate() {
            assert_eq!(*t, (k * 10) as f64 * 0.01);
        }
        assert_eq!(traj.inputs.len(), traj.len());
        for w in traj.gains.windows(2) {
            assert!(w[1].iter().zip(&w[0]).all(|(b, a)| b >= a));
        }
    }

    #[test]
    fn config_checks() {
        let base = pair(0.0, 0.0, vec![1.0, 0.0]);
        let mut cfg = base.clone();
        cfg.step = 0.0;
        assert!(cfg.check().is_err());
        let mut cfg = base.clone();
        cfg.step = 0.3;
        assert!(cfg.check().is_err(), "T/h not integral");
        let mut cfg = base.clone();
        cfg.output_stride = 3;
        assert!(cfg.check().is_err(), "10 steps, stride 3");
        let mut cfg = base.clone();
        cfg.output_stride = 0;
        assert!(cfg.check().is_err());
        let mut cfg = base.clone();
        cfg.blowup_threshold = 0.0;
        assert!(cfg.check().is_err());
        let mut cfg = base.clone();
        cfg.x0 = vec![1.0];
        assert!(cfg.check().is_err());
        assert!(base.check().is_ok());
    }

    #[test]
    fn ensemble_of_one_matches_single_path() {
        let mut cfg = pair(0.0, 0.5, vec![1.0, -1.0]);
        cfg.step = 0.01;
        let ens = run_ensemble(&cfg, 1).unwrap();
        assert_eq!(ens, vec![simulate_path(&cfg, 0).unwrap()]);
        assert!(run_ensemble(&cfg, 0).is_err());
    }

    #[test]
    fn ensemble_independent_of_threads() {
        let mut cfg = pair(0.0, 0.5, vec![1.0, -1.0]);
        cfg.step = 0.01;
        let serial = run_ensemble_with_threads(&cfg, 8, 1).unwrap();
        let parallel = run_ensemble_with_threads(&cfg, 8, 4).unwrap();
        assert_eq!(serial, parallel);
        let reversed: Vec<_> = (0..8u64).rev().map(|k| simulate_path(&cfg, k).unwrap()).collect();
        assert!(serial.iter().zip(reversed.iter().rev()).all(|(a, b)| a == b));
    }

    #[test]
    fn noiseless_ensemble_paths_coincide() {
        let mut cfg = pair(0.2, 0.0, vec![1.0, -1.0]);
        cfg.step = 0.01;
        let ens = run_ensemble(&cfg, 10).unwrap();
        for t in &ens[1..] {
            assert_eq!(t.states, ens[0].states);
            assert_eq!(t.gains, ens[0].gains);
        }
    }

    #[test]
    fn initial_state_sampler_is_seeded() {
        let a = sample_initial_state(5, -2.0, 2.0, 12);
        assert_eq!(a, sample_initial_state(5, -2.0, 2.0, 12));
        assert_ne!(a, sample_initial_state(6, -2.0, 2.0, 12));
        assert!(a.iter().all(|v| (-2.0..2.0).contains(v)));
    }

    #[test]
    fn reference_model_directed_step_runs() {
        let model = SystemModel::new(
            matrix(2, 2, &[-0.5, 0.1, 0.0, -20.0]),
            matrix(2, 1, &[0.0, 1.0]),
            matrix(2, 2, &[0.0, 0.0, 0.0, 6.5]),
            3,
        )
        .unwrap();
        let solution = solve_sare(&model, &SareOptions::default()).unwrap();
        let cfg = SimConfig {
            graph: WeightedDigraph::from_row_major(3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]).unwrap(),
            spec: ProtocolSpec {
                variant: ProtocolVariant::DirectedMuOne,
                k1: 1.0,
                k2: 1.0,
                mu: 1.0,
                gamma: 0.0,
                c0: vec![1.0; 3],
            },
            model,
            solution,
            step: 1e-3,
            horizon: 1.0,
            output_stride: 10,
            master_seed: 1,
            x0: vec![1.0, 0.5, -1.0, 0.0, 0.3, -0.2],
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            open_loop: false,
        };
        let traj = simulate_path(&cfg, 0).unwrap();
        assert!(!traj.terminated_early());
        assert_eq!(traj.len(), 101);
    }
}
