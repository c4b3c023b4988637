//! Weighted communication graphs and the Laplacian machinery used by the
//! consensus protocols.
//!
//! Arc convention: `a[i][j] > 0` means agent `i` reads agent `j`'s state, so
//! information flows along the arc `j -> i`. Spanning trees, strongly
//! connected components and the leader set are all defined on that
//! information-flow digraph. Under this convention the relabeled Laplacian of
//! a graph with a spanning tree is block lower-triangular:
//!
//! ```text
//!         leaders  followers
//! L  =  [ L11      0   ]   leaders
//!       [ L21      L22 ]   followers
//! ```
//!
//! `L11` is the Laplacian of the strongly connected root component and `L22`
//! is a nonsingular M-matrix. The positive vectors `r` (left null vector of
//! `L11`, normalized to sum 1) and `s = (L22^T)^{-1} 1` give the diagonal
//! scalings that symmetrize both blocks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

/// Largest admissible 2-norm condition number of the follower block.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("adjacency must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("graph must have at least one node")]
    Empty,
    #[error("negative weight a[{row}][{col}] = {value}")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("nonzero diagonal weight a[{index}][{index}] = {value}")]
    NonzeroDiagonal { index: usize, value: f64 },
    #[error("non-finite weight at a[{row}][{col}]")]
    NonFinite { row: usize, col: usize },
    #[error("graph has no directed spanning tree ({roots} root components)")]
    NoSpanningTree { roots: usize },
    #[error("leader block is not strongly connected: {0}")]
    NotStronglyConnected(String),
    #[error("follower block is numerically singular (condition estimate {0:e})")]
    SingularBlock(f64),
}

/// A weighted digraph given by its nonnegative adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    adjacency: DMatrix<f64>,
}

impl WeightedDigraph {
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..rows {
            for j in 0..cols {
                let value = adjacency[(i, j)];
                if !value.is_finite() {
                    return Err(GraphError::NonFinite { row: i, col: j });
                }
                if value < 0.0 {
                    return Err(GraphError::NegativeWeight { row: i, col: j, value });
                }
                if i == j && value != 0.0 {
                    return Err(GraphError::NonzeroDiagonal { index: i, value });
                }
            }
        }
        Ok(Self { adjacency })
    }

    /// Builds a graph from a row-major list of `n * n` weights.
    pub fn from_row_major(n: usize, weights: &[f64]) -> Result<Self, GraphError> {
        if weights.len() != n * n {
            return Err(GraphError::NotSquare { rows: n, cols: weights.len() / n.max(1) });
        }
        Self::new(DMatrix::from_row_slice(n, n, weights))
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// True when the adjacency matrix is exactly symmetric.
    pub fn is_undirected(&self) -> bool {
        self.adjacency == self.adjacency.transpose()
    }

    /// Neighbors whose state agent `i` reads, with their weights.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_nodes())
            .map(move |j| (j, self.adjacency[(i, j)]))
            .filter(|&(_, w)| w > 0.0)
    }

    pub fn laplacian(&self) -> Laplacian {
        let n = self.n_nodes();
        let mut matrix = -self.adjacency.clone();
        for i in 0..n {
            matrix[(i, i)] = self.adjacency.row(i).sum();
        }
        Laplacian { matrix }
    }
}

/// Graph Laplacian `L = D - A` with `D` the weighted in-degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix == self.matrix.transpose()
    }

    /// Numerical rank with the workspace-wide relative cutoff.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.matrix)
    }
}

/// Validates an adjacency matrix and returns its Laplacian.
pub fn build_laplacian(adjacency: &DMatrix<f64>) -> Result<Laplacian, GraphError> {
    Ok(WeightedDigraph::new(adjacency.clone())?.laplacian())
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Strongly connected components of the information-flow digraph
/// (`j -> i` whenever `a[i][j] > 0`), each sorted ascending, in the reverse
/// topological order Tarjan's algorithm emits them.
pub fn strongly_connected_components(g: &WeightedDigraph) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = g.n_nodes();
    let successors: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&i| g.weight(i, j) > 0.0).collect())
        .collect();

    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::with_capacity(n);
    let mut components = Vec::new();
    let mut next_index = 0;
    // explicit call stack of (node, position in its successor list)
    let mut frames: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        frames.push((root, 0));

        while let Some(top) = frames.len().checked_sub(1) {
            let (v, pos) = frames[top];
            if let Some(&w) = successors[v].get(pos) {
                frames[top].1 += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                component.sort_unstable();
                components.push(component);
            }
        }
    }
    components
}

/// Components of the condensation with no incoming information arc.
pub fn root_components(g: &WeightedDigraph) -> Vec<Vec<usize>> {
    let components = strongly_connected_components(g);
    let n = g.n_nodes();
    let mut owner = vec![0usize; n];
    for (k, comp) in components.iter().enumerate() {
        for &v in comp {
            owner[v] = k;
        }
    }
    let mut has_incoming = vec![false; components.len()];
    for i in 0..n {
        for (j, _) in g.in_neighbors(i) {
            if owner[i] != owner[j] {
                has_incoming[owner[i]] = true;
            }
        }
    }
    let mut roots: Vec<Vec<usize>> = components
        .into_iter()
        .zip(has_incoming)
        .filter(|(_, incoming)| !incoming)
        .map(|(comp, _)| comp)
        .collect();
    roots.sort();
    roots
}

/// True iff some node reaches every other node along information arcs,
/// i.e. the condensation has a unique source.
pub fn has_spanning_tree(g: &WeightedDigraph) -> bool {
    root_components(g).len() == 1
}

/// Leader/follower relabeling of a graph with a spanning tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderFollowerDecomposition {
    pub leader_indices: Vec<usize>,
    pub follower_indices: Vec<usize>,
    /// `permutation[k]` is the original index of relabeled node `k`.
    pub permutation: Vec<usize>,
    pub l11: DMatrix<f64>,
    pub l21: DMatrix<f64>,
    pub l22: DMatrix<f64>,
    pub r: DVector<f64>,
    pub s: DVector<f64>,
}

impl LeaderFollowerDecomposition {
    pub fn leaders(&self) -> usize {
        self.leader_indices.len()
    }

    pub fn followers(&self) -> usize {
        self.follower_indices.len()
    }

    /// Relabeled Laplacian `[[L11, 0], [L21, L22]]`.
    pub fn permuted_laplacian(&self) -> DMatrix<f64> {
        let m = self.leaders();
        let n = m + self.followers();
        let mut out = DMatrix::zeros(n, n);
        out.view_mut((0, 0), (m, m)).copy_from(&self.l11);
        out.view_mut((m, 0), (n - m, m)).copy_from(&self.l21);
        out.view_mut((m, m), (n - m, n - m)).copy_from(&self.l22);
        out
    }

    /// Undoes the relabeling, giving the Laplacian in original node order.
    pub fn unpermuted_laplacian(&self) -> DMatrix<f64> {
        let permuted = self.permuted_laplacian();
        let n = permuted.nrows();
        let mut out = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                out[(self.permutation[a], self.permutation[b])] = permuted[(a, b)];
            }
        }
        out
    }

    /// `R L11 + L11^T R` with `R = diag(r)`.
    pub fn l11_tilde(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_diagonal(&self.r) * &self.l11;
        &scaled + scaled.transpose()
    }

    /// `S L22 + L22^T S` with `S = diag(s)`.
    pub fn l22_tilde(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_diagonal(&self.s) * &self.l22;
        &scaled + scaled.transpose()
    }
}

pub fn decompose_leader_follower(g: &WeightedDigraph) -> Result<LeaderFollowerDecomposition, GraphError> {
    let roots = root_components(g);
    if roots.len() != 1 {
        return Err(GraphError::NoSpanningTree { roots: roots.len() });
    }
    let leader_indices = roots.into_iter().next().unwrap_or_default();
    let follower_indices: Vec<usize> =
        (0..g.n_nodes()).filter(|v| !leader_indices.contains(v)).collect();
    let permutation: Vec<usize> = leader_indices.iter().chain(&follower_indices).copied().collect();

    let lap = g.laplacian();
    let l = lap.matrix();
    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| l[(rows[a], cols[b])])
    };
    let l11 = block(&leader_indices, &leader_indices);
    let l21 = block(&follower_indices, &leader_indices);
    let l22 = block(&follower_indices, &follower_indices);
    debug_assert!(block(&leader_indices, &follower_indices).iter().all(|&v| v == 0.0));

    let r = leader_left_vector(&l11)?;
    let s = follower_scaling(&l22)?;
    Ok(LeaderFollowerDecomposition { leader_indices, follower_indices, permutation, l11, l21, l22, r, s })
}

/// Positive left null vector of a strongly connected Laplacian block,
/// normalized so its entries sum to one.
pub fn leader_left_vector(l11: &DMatrix<f64>) -> Result<DVector<f64>, GraphError> {
    let m = l11.nrows();
    if m != l11.ncols() {
        return Err(GraphError::NotSquare { rows: m, cols: l11.ncols() });
    }
    if m == 0 {
        return Err(GraphError::Empty);
    }
    if m == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let svd = l11.transpose().svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let null_dim = sv.iter().filter(|&&s| s <= RANK_TOL * smax).count();
    if null_dim != 1 {
        return Err(GraphError::NotStronglyConnected(format!("null space has dimension {null_dim}")));
    }
    let (idx, _) = sv.argmin();
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut r: DVector<f64> = v_t.row(idx).transpose();
    if r.sum() < 0.0 {
        r.neg_mut();
    }
    let floor = RANK_TOL * r.amax();
    if r.iter().any(|&x| x <= floor) {
        return Err(GraphError::NotStronglyConnected("null vector has nonpositive entries".into()));
    }
    let total = r.sum();
    Ok(r / total)
}

/// Solves `L22^T s = 1` for the follower scaling vector.
pub fn follower_scaling(l22: &DMatrix<f64>) -> Result<DVector<f64>, GraphError> {
    let k = l22.nrows();
    if k != l22.ncols() {
        return Err(GraphError::NotSquare { rows: k, cols: l22.ncols() });
    }
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let sv = l22.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(GraphError::SingularBlock(cond));
    }
    let s = l22
        .transpose()
        .lu()
        .solve(&DVector::from_element(k, 1.0))
        .ok_or(GraphError::SingularBlock(cond))?;
    if s.iter().any(|&x| !(x > 0.0)) {
        return Err(GraphError::SingularBlock(cond));
    }
    Ok(s)
}

/// Spectral quantities entering the consensus convergence arguments.
/// Entries are `None` when the graph lacks the corresponding structure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectralDiagnostics {
    /// Fiedler value of a symmetric Laplacian.
    pub lambda2_undirected: Option<f64>,
    /// Second-smallest eigenvalue of `R L11 + L11^T R` (needs two leaders).
    pub lambda2_l11_tilde: Option<f64>,
    /// Smallest eigenvalue of `S L22 + L22^T S` (needs a follower).
    pub lambda1_l22_tilde: Option<f64>,
    /// Largest singular value of `S L21`.
    pub sigma_max_sl21: Option<f64>,
}

pub fn sorted_symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Second-smallest Laplacian eigenvalue; `None` unless symmetric with N >= 2.
pub fn fiedler_value(lap: &Laplacian) -> Option<f64> {
    if lap.n_nodes() < 2 || !lap.is_symmetric() {
        return None;
    }
    sorted_symmetric_eigenvalues(lap.matrix()).get(1).copied()
}

pub fn directed_spectrum(d: &LeaderFollowerDecomposition) -> SpectralDiagnostics {
    let lambda2_l11_tilde = if d.leaders() >= 2 {
        sorted_symmetric_eigenvalues(&d.l11_tilde()).get(1).copied()
    } else {
        None
    };
    let (lambda1_l22_tilde, sigma_max_sl21) = if d.followers() > 0 {
        let sl21 = DMatrix::from_diagonal(&d.s) * &d.l21;
        (
            sorted_symmetric_eigenvalues(&d.l22_tilde()).first().copied(),
            Some(sl21.singular_values().max()),
        )
    } else {
        (None, None)
    };
    SpectralDiagnostics { lambda2_undirected: None, lambda2_l11_tilde, lambda1_l22_tilde, sigma_max_sl21 }
}

/// Everything that applies to `g`: the Fiedler value when the graph is
/// undirected, the block spectra when it has a spanning tree.
pub fn spectral_diagnostics(g: &WeightedDigraph) -> SpectralDiagnostics {
    let mut out = match decompose_leader_follower(g) {
        Ok(d) => directed_spectrum(&d),
        Err(_) => SpectralDiagnostics::default(),
    };
    out.lambda2_undirected = fiedler_value(&g.laplacian());
    out
}
