//! Stochastic algebraic Riccati equation
//!
//! ```text
//! F(P) = A^T P + P A - P B B^T P + C^T P C + I = 0
//! ```
//!
//! solved by Newton's method. Linearizing `F` at `P_k` gives the generalized
//! Lyapunov equation
//!
//! ```text
//! A_k^T D + D A_k + C^T D C = -F(P_k),   A_k = A - B B^T P_k
//! ```
//!
//! for the update `D`. The inner equation is solved densely through
//! `vec(M^T X + X M + C^T X C) = (I (x) M^T + M^T (x) I + C^T (x) C^T) vec(X)`,
//! which is exact to machine precision for the small state dimensions the
//! agent models use.
//!
//! Newton converges to the stabilizing solution when started from a mean-square
//! stabilizing seed (one for which the Kronecker operator above is Hurwitz), so
//! the solver ranks candidate seeds by that property before iterating.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("invalid system model: {0}")]
    InvalidModel(String),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("matrix dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no positive definite solution found after {iterations} Newton steps (best residual {residual:e}); the system does not appear mean-square stabilizable")]
    NotStabilizable { iterations: usize, residual: f64 },
    #[error("Newton iteration produced non-finite values at step {iteration}")]
    DivergedIteration { iteration: usize },
}

/// Agent dynamics `dx = (A x + B u) dt + C x dw`, shared by `agents` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    agents: usize,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, agents: usize) -> Result<Self, RiccatiError> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(RiccatiError::InvalidModel(format!("A must be square and nonempty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(RiccatiError::InvalidModel(format!("B must be {n}xm with m >= 1, got {}x{}", b.nrows(), b.ncols())));
        }
        if c.shape() != (n, n) {
            return Err(RiccatiError::InvalidModel(format!("C must be {n}x{n}, got {}x{}", c.nrows(), c.ncols())));
        }
        if agents < 2 {
            return Err(RiccatiError::InvalidModel(format!("need at least two agents, got {agents}")));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(RiccatiError::InvalidModel("non-finite matrix entry".into()));
        }
        Ok(Self { a, b, c, agents })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Solution of the SARE together with the protocol gains it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    /// `K = -B^T P`
    pub k: DMatrix<f64>,
    /// `Gamma = P B B^T P = K^T K`
    pub gamma: DMatrix<f64>,
    pub residual: f64,
    pub lambda_max_p: f64,
    pub iterations: usize,
    /// Residual before each Newton update and after the last one.
    pub residual_history: Vec<f64>,
}

impl RiccatiSolution {
    /// Wraps an externally supplied `P` (for example a published value)
    /// without solving anything; `residual` records how far it is from a root.
    pub fn from_p(model: &SystemModel, p: DMatrix<f64>) -> Result<Self, RiccatiError> {
        let n = model.state_dim();
        if p.shape() != (n, n) {
            return Err(RiccatiError::DimensionMismatch(format!("P must be {n}x{n}")));
        }
        let residual = sare_residual(model, &p);
        let (k, gamma) = feedback_gains(&p, model.b());
        let lambda_max_p = eigen_extremes(&p).1;
        Ok(Self { p, k, gamma, residual, lambda_max_p, iterations: 0, residual_history: vec![residual] })
    }

    /// Exponential rate `1 / lambda_max(P)`.
    pub fn decay_rate(&self) -> f64 {
        1.0 / self.lambda_max_p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SareOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub warm_start: Option<DMatrix<f64>>,
}

impl Default for SareOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, warm_start: None }
    }
}

/// `A^T P + P A - P B B^T P + C^T P C + I`.
pub fn sare_residual_matrix(model: &SystemModel, p: &DMatrix<f64>) -> DMatrix<f64> {
    residual_matrix(model.a(), model.b(), model.c(), p)
}

/// Frobenius norm of the SARE residual at `p`.
pub fn sare_residual(model: &SystemModel, p: &DMatrix<f64>) -> f64 {
    sare_residual_matrix(model, p).norm()
}

fn residual_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let pb = p * b;
    a.transpose() * p + p * a - &pb * pb.transpose() + c.transpose() * p * c + DMatrix::identity(n, n)
}

/// `K = -B^T P` and `Gamma = K^T K`.
pub fn feedback_gains(p: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = -(b.transpose() * p);
    let gamma = k.transpose() * &k;
    (k, gamma)
}

/// `X -> M^T X + X M + C^T X C` as an `n^2 x n^2` matrix acting on
/// column-major `vec(X)`.
fn lyapunov_operator(m: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eye = DMatrix::identity(n, n);
    let mt = m.transpose();
    let ct = c.transpose();
    eye.kronecker(&mt) + mt.kronecker(&eye) + ct.kronecker(&ct)
}

/// Spectral abscissa of the closed-loop generalized Lyapunov operator at `p`;
/// negative means `p` is mean-square stabilizing.
fn stabilization_margin(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let closed = a - b * b.transpose() * p;
    lyapunov_operator(&closed, c)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn eigen_extremes(p: &DMatrix<f64>) -> (f64, f64) {
    let sym = (p + p.transpose()) * 0.5;
    let values = sym.symmetric_eigenvalues();
    (values.min(), values.max())
}

enum NewtonOutcome {
    Converged { p: DMatrix<f64>, iterations: usize, history: Vec<f64> },
    Stalled { iterations: usize, residual: f64 },
    Diverged { iteration: usize },
}

fn newton(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    seed: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> NewtonOutcome {
    let n = a.nrows();
    let bbt = b * b.transpose();
    let mut p = (seed + seed.transpose()) * 0.5;
    let mut history = Vec::new();
    for iteration in 0..=max_iter {
        let f = residual_matrix(a, b, c, &p);
        let r = f.norm();
        if !r.is_finite() {
            return NewtonOutcome::Diverged { iteration };
        }
        history.push(r);
        if r <= tol {
            return NewtonOutcome::Converged { p, iterations: iteration, history };
        }
        if iteration == max_iter {
            return NewtonOutcome::Stalled { iterations: iteration, residual: r };
        }
        let closed = a - &bbt * &p;
        let rhs = -DVector::from_column_slice(f.as_slice());
        let Some(step) = lyapunov_operator(&closed, c).lu().solve(&rhs) else {
            return NewtonOutcome::Stalled { iterations: iteration, residual: r };
        };
        p += DMatrix::from_column_slice(n, n, step.as_slice());
        p = (&p + p.transpose()) * 0.5;
    }
    unreachable!("loop returns on its last iteration")
}

const SEED_SCALES: [f64; 6] = [1.0, 10.0, 1e2, 1e3, 1e4, 1e5];

/// Stabilizing solution of the deterministic ARE (`C = 0`), when one is found.
fn deterministic_seed(model: &SystemModel, tol: f64, max_iter: usize) -> Option<DMatrix<f64>> {
    let n = model.state_dim();
    let zero_c = DMatrix::zeros(n, n);
    let candidates = std::iter::once(0.0).chain(SEED_SCALES);
    for scale in candidates {
        let seed = DMatrix::identity(n, n) * scale;
        if stabilization_margin(model.a(), model.b(), &zero_c, &seed) >= 0.0 {
            continue;
        }
        if let NewtonOutcome::Converged { p, .. } = newton(model.a(), model.b(), &zero_c, &seed, tol, max_iter) {
            if eigen_extremes(&p).0 > 0.0 {
                return Some(p);
            }
        }
    }
    None
}

/// Solves the SARE by Newton's method.
///
/// Seeds are tried in order: the warm start, the deterministic ARE solution,
/// then scaled identities. Mean-square stabilizing seeds are tried before
/// the others; the first run that reaches `tol` with a positive definite
/// `P` wins.
pub fn solve_sare(model: &SystemModel, opts: &SareOptions) -> Result<RiccatiSolution, RiccatiError> {
    if !(opts.tol > 0.0) {
        return Err(RiccatiError::InvalidTolerance(opts.tol));
    }
    let n = model.state_dim();
    let mut seeds = Vec::new();
    if let Some(w) = &opts.warm_start {
        if w.shape() != (n, n) {
            return Err(RiccatiError::DimensionMismatch(format!("warm start must be {n}x{n}")));
        }
        seeds.push(w.clone());
    }
    if let Some(p) = deterministic_seed(model, opts.tol, opts.max_iter) {
        seeds.push(p);
    }
    seeds.extend(SEED_SCALES.iter().map(|&s| DMatrix::identity(n, n) * s));
    // stable sort keeps the preference order within each class
    seeds.sort_by_key(|seed| stabilization_margin(model.a(), model.b(), model.c(), seed) >= 0.0);

    let mut best: Option<(usize, f64)> = None;
    let mut diverged = None;
    for seed in &seeds {
        match newton(model.a(), model.b(), model.c(), seed, opts.tol, opts.max_iter) {
            NewtonOutcome::Converged { p, iterations, history } => {
                let (min_eig, max_eig) = eigen_extremes(&p);
                if min_eig > 0.0 {
                    let (k, gamma) = feedback_gains(&p, model.b());
                    let residual = *history.last().expect("history is never empty");
                    return Ok(RiccatiSolution {
                        p,
                        k,
                        gamma,
                        residual,
                        lambda_max_p: max_eig,
                        iterations,
                        residual_history: history,
                    });
                }
                let residual = *history.last().unwrap_or(&f64::INFINITY);
                if best.is_none_or(|(_, r)| residual < r) {
                    best = Some((iterations, residual));
                }
            }
            NewtonOutcome::Stalled { iterations, residual } => {
                if best.is_none_or(|(_, r)| residual < r) {
                    best = Some((iterations, residual));
                }
            }
            NewtonOutcome::Diverged { iteration } => diverged = diverged.or(Some(iteration)),
        }
    }
    match (best, diverged) {
        (None, Some(iteration)) => Err(RiccatiError::DivergedIteration { iteration }),
        (Some((iterations, residual)), _) => Err(RiccatiError::NotStabilizable { iterations, residual }),
        (None, None) => Err(RiccatiError::NotStabilizable { iterations: 0, residual: f64::INFINITY }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, c: f64) -> SystemModel {
        SystemModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            2,
        )
        .unwrap()
    }

    fn reference_model() -> SystemModel {
        SystemModel::new(
            DMatrix::from_row_slice(2, 2, &[-0.5, 0.1, 0.0, -20.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 6.5]),
            6,
        )
        .unwrap()
    }

    #[test]
    fn scalar_identity_case() {
        let sol = solve_sare(&scalar(0.0, 1.0, 0.0), &SareOptions::default()).unwrap();
        assert!((sol.p[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_golden_ratio_case() {
        let sol = solve_sare(&scalar(-1.0, 1.0, 1.0), &SareOptions::default()).unwrap();
        let expected = (5f64.sqrt() - 1.0) / 2.0;
        assert!((sol.p[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn reference_model_converges() {
        let model = reference_model();
        let sol = solve_sare(&model, &SareOptions::default()).unwrap();
        assert!(sol.residual <= 1e-10);
        assert!(sare_residual(&model, &sol.p) <= 1e-8);
        assert!((&sol.p - sol.p.transpose()).amax() <= 1e-12);
        assert!(eigen_extremes(&sol.p).0 > 0.0);
    }

    #[test]
    fn residual_examples() {
        let m = scalar(0.0, 1.0, 0.0);
        assert_eq!(sare_residual(&m, &DMatrix::from_element(1, 1, 1.0)), 0.0);
        assert_eq!(sare_residual(&m, &DMatrix::from_element(1, 1, 2.0)), 3.0);
        let printed = DMatrix::from_row_slice(2, 2, &[1.0, 0.0047, 0.0047, 0.9046]);
        let f = sare_residual_matrix(&reference_model(), &printed);
        assert!((f[(1, 1)] - 2.2179888).abs() < 1e-6);
        assert!((sare_residual(&reference_model(), &printed) - 2.218).abs() < 1e-3);
    }

    #[test]
    fn gains_examples() {
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (k, g) = feedback_gains(&DMatrix::identity(2, 2), &b);
        assert_eq!(k, DMatrix::from_row_slice(1, 2, &[0.0, -1.0]));
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));

        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let (k, g) = feedback_gains(&p, &DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
        assert_eq!(k, DMatrix::from_row_slice(1, 2, &[-2.0, -3.0]));
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[4.0, 6.0, 6.0, 9.0]));
    }

    #[test]
    fn unstabilizable_model_is_reported() {
        let model = SystemModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            2,
        )
        .unwrap();
        let err = solve_sare(&model, &SareOptions::default()).unwrap_err();
        assert!(matches!(err, RiccatiError::NotStabilizable { .. }), "{err:?}");
    }

    #[test]
    fn warm_start_at_the_root_needs_no_iterations() {
        let model = reference_model();
        let sol = solve_sare(&model, &SareOptions::default()).unwrap();
        let again = solve_sare(&model, &SareOptions { warm_start: Some(sol.p.clone()), ..Default::default() }).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn model_dimension_checks() {
        let err = SystemModel::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), DMatrix::zeros(2, 2), 3);
        assert!(matches!(err, Err(RiccatiError::InvalidModel(_))));
        let err = SystemModel::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), 1);
        assert!(matches!(err, Err(RiccatiError::InvalidModel(_))));
    }
}
