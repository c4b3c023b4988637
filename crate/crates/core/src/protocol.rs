//! Adaptive consensus protocols.
//!
//! Every variant computes, for agent `i`,
//!
//! ```text
//! u_i    = scale_i * K xi_i
//! dc_i/dt = e^{gamma t} xi_i^T Gamma xi_i
//! ```
//!
//! and differs only in the scalar `scale_i`, which depends on the local
//! quantities `c_i` and `sigma_i = xi_i^T P xi_i`:
//!
//! | variant              | scale_i                          |
//! |----------------------|----------------------------------|
//! | `UnifiedDirected`    | `c_i * k1 (k2 + sigma_i/c_i)^mu` |
//! | `UnifiedDirectedAlt` | `c_i * k1 (k2 + sigma_i)^mu`     |
//! | `DirectedMuOne`      | `k1 (k2 c_i + sigma_i)`          |
//! | `UndirectedStatic`   | `c_i`                            |
//! | `UndirectedExp`      | `c_i`                            |

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::{fiedler_value, has_spanning_tree, WeightedDigraph};
use crate::riccati::RiccatiSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("adaptive gain must be positive, got {0}")]
    NonpositiveGain(f64),
    #[error("unknown protocol variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolVariant {
    UnifiedDirected,
    UnifiedDirectedAlt,
    DirectedMuOne,
    UndirectedStatic,
    UndirectedExp,
}

impl ProtocolVariant {
    pub const ALL: [ProtocolVariant; 5] = [
        Self::UnifiedDirected,
        Self::UnifiedDirectedAlt,
        Self::DirectedMuOne,
        Self::UndirectedStatic,
        Self::UndirectedExp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::UnifiedDirected => "UnifiedDirected",
            Self::UnifiedDirectedAlt => "UnifiedDirectedAlt",
            Self::DirectedMuOne => "DirectedMuOne",
            Self::UndirectedStatic => "UndirectedStatic",
            Self::UndirectedExp => "UndirectedExp",
        }
    }

    /// Directed variants only need a spanning tree; undirected ones need a
    /// connected symmetric graph.
    pub fn is_directed(self) -> bool {
        matches!(self, Self::UnifiedDirected | Self::UnifiedDirectedAlt | Self::DirectedMuOne)
    }
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolVariant {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ProtocolError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub variant: ProtocolVariant,
    pub k1: f64,
    pub k2: f64,
    pub mu: f64,
    pub gamma: f64,
    /// Initial adaptive gains, one per agent.
    pub c0: Vec<f64>,
}

/// Per-agent quantities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentControlState {
    pub xi: Vec<f64>,
    pub sigma: f64,
    pub aux_gain: f64,
    pub c: f64,
    pub u: Vec<f64>,
}

/// Stacked neighborhood errors `xi_i = sum_j a_ij (x_i - x_j)`.
pub fn neighborhood_error(g: &WeightedDigraph, x: &[f64], state_dim: usize) -> Result<Vec<f64>, ProtocolError> {
    let n_agents = g.n_nodes();
    if x.len() != n_agents * state_dim {
        return Err(ProtocolError::DimensionMismatch(format!(
            "state has length {}, expected {n_agents} agents x {state_dim}",
            x.len()
        )));
    }
    let mut xi = vec![0.0; x.len()];
    for i in 0..n_agents {
        let xi_i = &mut xi[i * state_dim..(i + 1) * state_dim];
        for (j, w) in g.in_neighbors(i) {
            for k in 0..state_dim {
                xi_i[k] += w * (x[i * state_dim + k] - x[j * state_dim + k]);
            }
        }
    }
    Ok(xi)
}

/// `v^T M v` for a square `M` matching `v`.
pub fn quadratic_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for r in 0..n {
        let mut row = 0.0;
        for c in 0..n {
            row += m[(r, c)] * v[c];
        }
        acc += v[r] * row;
    }
    acc
}

/// `sigma_i = xi_i^T P xi_i`.
pub fn sigma_form(xi_i: &[f64], p: &DMatrix<f64>) -> f64 {
    quadratic_form(p, xi_i)
}

/// Auxiliary gain `Sigma_i`. For `DirectedMuOne` this is the equivalent
/// `k1 (k2 + sigma/c)` and is only used for logging.
pub fn aux_gain(spec: &ProtocolSpec, sigma: f64, c: f64) -> Result<f64, ProtocolError> {
    if !(c > 0.0) {
        return Err(ProtocolError::NonpositiveGain(c));
    }
    Ok(match spec.variant {
        ProtocolVariant::UnifiedDirected => spec.k1 * (spec.k2 + sigma / c).powf(spec.mu),
        ProtocolVariant::UnifiedDirectedAlt => spec.k1 * (spec.k2 + sigma).powf(spec.mu),
        ProtocolVariant::DirectedMuOne => spec.k1 * (spec.k2 + sigma / c),
        ProtocolVariant::UndirectedStatic | ProtocolVariant::UndirectedExp => 1.0,
    })
}

/// Scalar multiplying `K xi_i` in agent `i`'s input.
pub fn input_scale(spec: &ProtocolSpec, sigma: f64, c: f64) -> f64 {
    match spec.variant {
        ProtocolVariant::UnifiedDirected => c * spec.k1 * (spec.k2 + sigma / c).powf(spec.mu),
        ProtocolVariant::UnifiedDirectedAlt => c * spec.k1 * (spec.k2 + sigma).powf(spec.mu),
        ProtocolVariant::DirectedMuOne => spec.k1 * (spec.k2 * c + sigma),
        ProtocolVariant::UndirectedStatic | ProtocolVariant::UndirectedExp => c,
    }
}

/// Writes `scale * K xi_i` into `out`.
pub(crate) fn apply_gain(k: &DMatrix<f64>, scale: f64, xi_i: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, x) in xi_i.iter().enumerate() {
            acc += k[(r, c)] * x;
        }
        *o = scale * acc;
    }
}

/// Full control state of agent `i` given its local error and gain.
pub fn agent_state(
    spec: &ProtocolSpec,
    xi_i: &[f64],
    c: f64,
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<AgentControlState, ProtocolError> {
    let sigma = sigma_form(xi_i, p);
    let aux = aux_gain(spec, sigma, c)?;
    let mut u = vec![0.0; k.nrows()];
    apply_gain(k, input_scale(spec, sigma, c), xi_i, &mut u);
    Ok(AgentControlState { xi: xi_i.to_vec(), sigma, aux_gain: aux, c, u })
}

/// Stacked inputs for all agents. Each block uses only that agent's `xi_i`
/// and `c_i`.
pub fn control_input(
    spec: &ProtocolSpec,
    xi: &[f64],
    c: &[f64],
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<Vec<f64>, ProtocolError> {
    let (m, n) = k.shape();
    if p.shape() != (n, n) {
        return Err(ProtocolError::DimensionMismatch(format!("P must be {n}x{n} to match K")));
    }
    if xi.len() != c.len() * n {
        return Err(ProtocolError::DimensionMismatch(format!(
            "xi has length {}, expected {} agents x {n}",
            xi.len(),
            c.len()
        )));
    }
    let mut u = vec![0.0; c.len() * m];
    for (i, &ci) in c.iter().enumerate() {
        let xi_i = &xi[i * n..(i + 1) * n];
        let scale = input_scale(spec, sigma_form(xi_i, p), ci);
        apply_gain(k, scale, xi_i, &mut u[i * m..(i + 1) * m]);
    }
    Ok(u)
}

/// `dc_i/dt = e^{gamma t} xi_i^T Gamma xi_i` for every agent.
pub fn gain_rate(spec: &ProtocolSpec, xi: &[f64], gamma_matrix: &DMatrix<f64>, t: f64) -> Vec<f64> {
    let n = gamma_matrix.nrows();
    let growth = (spec.gamma * t).exp();
    xi.chunks_exact(n).map(|xi_i| growth * quadratic_form(gamma_matrix, xi_i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Blocks a simulation unless explicitly overridden.
    Hard,
    /// Reported only.
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub severity: Severity,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, severity: Severity, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), severity, passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn hard_failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed && c.severity == Severity::Hard)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed && c.severity == Severity::Warning)
    }

    pub fn passed(&self) -> bool {
        self.hard_failures().next().is_none()
    }

    /// True when a hard failure concerns the communication graph.
    pub fn topology_failed(&self) -> bool {
        self.hard_failures().any(|c| c.name == TOPOLOGY)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match (c.passed, c.severity) {
                (true, _) => "pass",
                (false, Severity::Hard) => "FAIL",
                (false, Severity::Warning) => "warn",
            };
            writeln!(f, "[{status}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

const TOPOLOGY: &str = "topology";

/// Whether `g` has the structure the variant's convergence argument needs.
pub fn topology_check(variant: ProtocolVariant, g: &WeightedDigraph) -> Vec<Check> {
    let mut checks = Vec::new();
    if variant.is_directed() {
        let tree = has_spanning_tree(g);
        checks.push(Check::new(
            TOPOLOGY,
            Severity::Hard,
            tree,
            if tree { "graph contains a directed spanning tree" } else { "directed variant requires a spanning tree" },
        ));
        if g.is_undirected() {
            checks.push(Check::new(
                "topology class",
                Severity::Warning,
                false,
                "directed variant on undirected graph (valid, an undirected variant is available)",
            ));
        }
    } else if !g.is_undirected() {
        checks.push(Check::new(TOPOLOGY, Severity::Hard, false, "undirected variant on directed graph"));
    } else {
        let lambda2 = fiedler_value(&g.laplacian()).unwrap_or(0.0);
        let connected = has_spanning_tree(g);
        checks.push(Check::new(
            TOPOLOGY,
            Severity::Hard,
            connected,
            if connected {
                format!("undirected graph is connected (lambda2 = {lambda2:.6})")
            } else {
                "undirected variant requires a connected graph".to_string()
            },
        ));
    }
    checks
}

/// Checks every hypothesis of the variant's convergence result.
pub fn validate(spec: &ProtocolSpec, sol: &RiccatiSolution, g: &WeightedDigraph) -> ValidationReport {
    use ProtocolVariant::*;
    let mut checks = Vec::new();
    let n = g.n_nodes();

    let count_ok = spec.c0.len() == n;
    checks.push(Check::new(
        "agent count",
        Severity::Hard,
        count_ok,
        format!("{} initial gains for {n} agents", spec.c0.len()),
    ));
    let c0_min = spec.c0.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check::new("initial gains", Severity::Hard, c0_min > 0.0, "c_i(0) > 0 required"));
    checks.extend(topology_check(spec.variant, g));

    let zero_gamma = |checks: &mut Vec<Check>| {
        checks.push(Check::new(
            "gamma",
            Severity::Hard,
            spec.gamma == 0.0,
            format!("gamma = 0 required, got {}", spec.gamma),
        ));
    };
    match spec.variant {
        UnifiedDirected | UnifiedDirectedAlt => {
            checks.push(Check::new("mu", Severity::Hard, spec.mu > 1.0, format!("μ > 1 required, got {}", spec.mu)));
            checks.push(Check::new("k1", Severity::Hard, spec.k1 >= 1.0, format!("k1 >= 1 required, got {}", spec.k1)));
            checks.push(Check::new("k2", Severity::Hard, spec.k2 >= 1.0, format!("k2 >= 1 required, got {}", spec.k2)));
            checks.push(Check::new(
                "initial gains >= 1",
                Severity::Hard,
                c0_min >= 1.0,
                format!("c_i(0) >= 1 required, smallest is {c0_min}"),
            ));
            let floor = spec.k1 * spec.k2.powf(spec.mu);
            checks.push(Check::new(
                "initial auxiliary gain",
                Severity::Warning,
                floor >= 1.0,
                format!("Sigma_i(0) >= k1 k2^mu = {floor}"),
            ));
            zero_gamma(&mut checks);
        }
        DirectedMuOne => {
            checks.push(Check::new("k1", Severity::Hard, spec.k1 > 0.0, format!("k1 > 0 required, got {}", spec.k1)));
            checks.push(Check::new("k2", Severity::Hard, spec.k2 > 0.0, format!("k2 > 0 required, got {}", spec.k2)));
            zero_gamma(&mut checks);
        }
        UndirectedStatic => zero_gamma(&mut checks),
        UndirectedExp => {
            let lo = 1.0 / sol.lambda_max_p;
            let hi = 1.5 / sol.lambda_max_p;
            checks.push(Check::new(
                "gamma window",
                Severity::Hard,
                lo <= spec.gamma && spec.gamma < hi,
                format!("need {lo:.6} <= gamma < {hi:.6} (lambda_max(P) = {:.6}), got {}", sol.lambda_max_p, spec.gamma),
            ));
        }
    }
    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::SystemModel;

    fn spec(variant: ProtocolVariant) -> ProtocolSpec {
        ProtocolSpec { variant, k1: 1.0, k2: 1.0, mu: 2.0, gamma: 0.0, c0: vec![1.0; 3] }
    }

    fn three_cycle() -> WeightedDigraph {
        WeightedDigraph::from_row_major(3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]).unwrap()
    }

    #[test]
    fn neighborhood_error_examples() {
        let g = three_cycle();
        assert_eq!(neighborhood_error(&g, &[4., 4., 4.], 1).unwrap(), vec![0., 0., 0.]);
        assert_eq!(neighborhood_error(&g, &[1., 2., 3.], 1).unwrap(), vec![-1., -1., 2.]);
        let pair = WeightedDigraph::from_row_major(2, &[0., 1., 1., 0.]).unwrap();
        assert_eq!(neighborhood_error(&pair, &[1., 0.], 1).unwrap(), vec![1., -1.]);
        assert!(matches!(neighborhood_error(&g, &[1., 2.], 1), Err(ProtocolError::DimensionMismatch(_))));
    }

    #[test]
    fn sigma_examples() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0047, 0.0047, 0.9046]);
        assert_eq!(sigma_form(&[0., 0.], &p), 0.0);
        assert_eq!(sigma_form(&[0., 1.], &DMatrix::identity(2, 2)), 1.0);
        assert_eq!(sigma_form(&[1., 0.], &p), 1.0);
    }

    #[test]
    fn aux_gain_examples() {
        let s = spec(ProtocolVariant::UnifiedDirected);
        assert_eq!(aux_gain(&s, 1.0, 1.0).unwrap(), 4.0);
        assert_eq!(aux_gain(&s, 0.0, 3.0).unwrap(), s.k1 * s.k2.powf(s.mu));
        let s = ProtocolSpec { k1: 2.0, k2: 1.0, mu: 3.0, ..spec(ProtocolVariant::UnifiedDirected) };
        assert_eq!(aux_gain(&s, 1.0, 2.0).unwrap(), 6.75);
        assert_eq!(aux_gain(&s, 1.0, 0.0), Err(ProtocolError::NonpositiveGain(0.0)));
        assert_eq!(aux_gain(&spec(ProtocolVariant::UndirectedExp), 5.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn control_input_examples() {
        let k = DMatrix::from_element(1, 1, -1.0);
        let p = DMatrix::from_element(1, 1, 1.0);
        for v in ProtocolVariant::ALL {
            let u = control_input(&spec(v), &[0., 0., 0.], &[1., 2., 3.], &k, &p).unwrap();
            assert_eq!(u, vec![0., 0., 0.]);
        }
        let u = control_input(&spec(ProtocolVariant::UndirectedStatic), &[3.0], &[2.0], &k, &p).unwrap();
        assert_eq!(u, vec![-6.0]);
        let u = control_input(&spec(ProtocolVariant::DirectedMuOne), &[2.0], &[1.0], &k, &p).unwrap();
        assert_eq!(u, vec![-10.0]);
    }

    #[test]
    fn gain_rate_examples() {
        let s = spec(ProtocolVariant::UndirectedStatic);
        assert_eq!(gain_rate(&s, &[0., 0.], &DMatrix::identity(2, 2), 3.0), vec![0.0]);
        assert_eq!(gain_rate(&s, &[1., 1.], &DMatrix::identity(2, 2), 3.0), vec![2.0]);
        let s = ProtocolSpec { gamma: 2f64.ln(), ..spec(ProtocolVariant::UndirectedExp) };
        let rate = gain_rate(&s, &[1.0], &DMatrix::from_element(1, 1, 1.0), 1.0);
        assert!((rate[0] - 2.0).abs() < 1e-15);
    }

    fn paper_printed_solution() -> RiccatiSolution {
        let model = SystemModel::new(
            DMatrix::from_row_slice(2, 2, &[-0.5, 0.1, 0.0, -20.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 6.5]),
            3,
        )
        .unwrap();
        RiccatiSolution::from_p(&model, DMatrix::from_row_slice(2, 2, &[1.0, 0.0047, 0.0047, 0.9046])).unwrap()
    }

    #[test]
    fn gamma_window_passes_at_one() {
        let sol = paper_printed_solution();
        assert!((sol.lambda_max_p - 1.0002).abs() < 1e-4);
        let k3 = WeightedDigraph::from_row_major(3, &[0., 1., 1., 1., 0., 1., 1., 1., 0.]).unwrap();
        let s = ProtocolSpec { gamma: 1.0, ..spec(ProtocolVariant::UndirectedExp) };
        let report = validate(&s, &sol, &k3);
        assert!(report.passed(), "{report}");
        let s = ProtocolSpec { gamma: 1.6, ..s };
        assert!(!validate(&s, &sol, &k3).passed());
    }

    #[test]
    fn mu_of_one_fails_unified_directed() {
        let s = ProtocolSpec { mu: 1.0, ..spec(ProtocolVariant::UnifiedDirected) };
        let report = validate(&s, &paper_printed_solution(), &three_cycle());
        let failed: Vec<_> = report.hard_failures().map(|c| c.detail.clone()).collect();
        assert_eq!(failed.len(), 1);
        assert!(failed[0].starts_with("μ > 1 required"));
        assert!(!report.topology_failed());
    }

    #[test]
    fn undirected_variant_on_directed_graph_fails() {
        let report = validate(&spec(ProtocolVariant::UndirectedStatic), &paper_printed_solution(), &three_cycle());
        assert!(report.topology_failed());
        assert!(report.hard_failures().any(|c| c.detail == "undirected variant on directed graph"));
    }

    #[test]
    fn directed_variant_on_undirected_graph_only_warns() {
        let k3 = WeightedDigraph::from_row_major(3, &[0., 1., 1., 1., 0., 1., 1., 1., 0.]).unwrap();
        let report = validate(&spec(ProtocolVariant::DirectedMuOne), &paper_printed_solution(), &k3);
        assert!(report.passed());
        assert_eq!(report.warnings().count(), 1);
    }

    #[test]
    fn disconnected_undirected_graph_fails() {
        let g = WeightedDigraph::from_row_major(3, &[0., 1., 0., 1., 0., 0., 0., 0., 0.]).unwrap();
        let report = validate(&spec(ProtocolVariant::UndirectedStatic), &paper_printed_solution(), &g);
        assert!(report.topology_failed());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in ProtocolVariant::ALL {
            assert_eq!(v.name().parse::<ProtocolVariant>().unwrap(), v);
        }
        assert!("Bogus".parse::<ProtocolVariant>().is_err());
    }
}
