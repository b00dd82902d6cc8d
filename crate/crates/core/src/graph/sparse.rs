//! Block-sparse Cholesky factorization of the normal equations.
//!
//! Every free vertex is one 3×3 block (landmarks carry a decoupled dummy
//! third parameter). The fill-reducing ordering is an exact minimum-degree
//! elimination on the block adjacency graph, which also yields the symbolic
//! pattern of the factor.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};

/// Symbolic structure: elimination order and the lower-triangular block
/// pattern of the factor, in elimination positions.
#[derive(Debug, Clone)]
pub(crate) struct Symbolic {
    /// `position[node]` = elimination step of the node.
    pub position: Vec<usize>,
    /// `node_at[k]` = node eliminated at step `k`.
    pub node_at: Vec<usize>,
    /// Row positions (all `> k`) of the off-diagonal blocks of column `k`,
    /// sorted ascending.
    pub pattern: Vec<Vec<usize>>,
}

impl Symbolic {
    /// `edges` are unordered node pairs; duplicates and self-loops are ignored.
    pub fn analyze(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
        let mut position = vec![usize::MAX; n];
        let mut node_at = Vec::with_capacity(n);
        let mut node_pattern: Vec<Vec<usize>> = vec![Vec::new(); n];

        while let Some((_, v)) = queue.pop_first() {
            position[v] = node_at.len();
            node_at.push(v);
            let neighbors: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
            for &u in &neighbors {
                queue.remove(&(adj[u].len(), u));
                adj[u].remove(&v);
                for &w in &neighbors {
                    if w != u {
                        adj[u].insert(w);
                    }
                }
                queue.insert((adj[u].len(), u));
            }
            node_pattern[v] = neighbors;
        }

        let pattern = node_at
            .iter()
            .map(|&v| {
                let mut rows: Vec<usize> = node_pattern[v].iter().map(|&u| position[u]).collect();
                rows.sort_unstable();
                rows
            })
            .collect();
        Self {
            position,
            node_at,
            pattern,
        }
    }

    pub fn len(&self) -> usize {
        self.node_at.len()
    }

    /// Slot of block `(row, col)` inside column `col`, both in positions.
    fn slot(&self, row: usize, col: usize) -> usize {
        self.pattern[col]
            .binary_search(&row)
            .expect("block outside the symbolic pattern")
    }
}

/// Symmetric block matrix stored as its lower triangle on a symbolic pattern.
#[derive(Debug, Clone)]
pub(crate) struct BlockMatrix<'a> {
    symbolic: &'a Symbolic,
    diag: Vec<Matrix3<f64>>,
    lower: Vec<Vec<Matrix3<f64>>>,
}

/// Failure to factor: the block (as node index) whose pivot was not PD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NotPositiveDefinite(pub usize);

impl<'a> BlockMatrix<'a> {
    pub fn zeros(symbolic: &'a Symbolic) -> Self {
        Self {
            symbolic,
            diag: vec![Matrix3::zeros(); symbolic.len()],
            lower: symbolic
                .pattern
                .iter()
                .map(|p| vec![Matrix3::zeros(); p.len()])
                .collect(),
        }
    }

    /// Adds `m` to block `(a, b)` (node indices) and its transpose to `(b, a)`.
    pub fn add_block(&mut self, a: usize, b: usize, m: &Matrix3<f64>) {
        let (pa, pb) = (self.symbolic.position[a], self.symbolic.position[b]);
        if pa == pb {
            self.diag[pa] += m;
        } else if pa > pb {
            let s = self.symbolic.slot(pa, pb);
            self.lower[pb][s] += m;
        } else {
            let s = self.symbolic.slot(pb, pa);
            self.lower[pa][s] += m.transpose();
        }
    }

    pub fn add_diag(&mut self, node: usize, m: &Matrix3<f64>) {
        self.diag[self.symbolic.position[node]] += m;
    }

    /// Right-looking block Cholesky of `self + damping·I`.
    pub fn factor(&self, damping: f64) -> Result<Factor<'a>, NotPositiveDefinite> {
        let sym = self.symbolic;
        let mut diag = self.diag.clone();
        let mut lower = self.lower.clone();
        let damp = Matrix3::identity() * damping;
        for k in 0..sym.len() {
            let chol = (diag[k] + damp)
                .cholesky()
                .ok_or(NotPositiveDefinite(sym.node_at[k]))?;
            let l_kk = chol.l();
            // L_ik = A_ik L_kkᵀ⁻¹, solved as L_kk L_ikᵀ = A_ikᵀ
            for block in lower[k].iter_mut() {
                let xt = l_kk
                    .solve_lower_triangular(&block.transpose())
                    .ok_or(NotPositiveDefinite(sym.node_at[k]))?;
                *block = xt.transpose();
            }
            diag[k] = l_kk;
            let rows = &sym.pattern[k];
            let col = lower[k].clone();
            for (jj, &j) in rows.iter().enumerate() {
                let l_jk_t = col[jj].transpose();
                diag[j] -= col[jj] * l_jk_t;
                for ii in (jj + 1)..rows.len() {
                    let i = rows[ii];
                    let s = sym.slot(i, j);
                    lower[j][s] -= col[ii] * l_jk_t;
                }
            }
        }
        Ok(Factor {
            symbolic: sym,
            diag,
            lower,
        })
    }

    /// `self · x` for vectors indexed by node.
    #[cfg(test)]
    pub fn multiply(&self, x: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let sym = self.symbolic;
        let mut y = vec![Vector3::zeros(); x.len()];
        for k in 0..sym.len() {
            let nk = sym.node_at[k];
            y[nk] += self.diag[k] * x[nk];
            for (s, &i) in sym.pattern[k].iter().enumerate() {
                let ni = sym.node_at[i];
                y[ni] += self.lower[k][s] * x[nk];
                y[nk] += self.lower[k][s].transpose() * x[ni];
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Factor<'a> {
    symbolic: &'a Symbolic,
    diag: Vec<Matrix3<f64>>,
    lower: Vec<Vec<Matrix3<f64>>>,
}

impl Factor<'_> {
    /// Solves `(A + damping·I) x = b`, vectors indexed by node.
    pub fn solve(&self, b: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let sym = self.symbolic;
        let n = sym.len();
        let mut y: Vec<Vector3<f64>> = sym.node_at.iter().map(|&v| b[v]).collect();
        for k in 0..n {
            let yk = self.diag[k]
                .solve_lower_triangular(&y[k])
                .expect("factor diagonal is nonsingular");
            y[k] = yk;
            for (s, &i) in sym.pattern[k].iter().enumerate() {
                y[i] -= self.lower[k][s] * yk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = y[k];
            for (s, &i) in sym.pattern[k].iter().enumerate() {
                acc -= self.lower[k][s].transpose() * y[i];
            }
            y[k] = self.diag[k]
                .tr_solve_lower_triangular(&acc)
                .expect("factor diagonal is nonsingular");
        }
        let mut x = vec![Vector3::zeros(); n];
        for (k, &v) in sym.node_at.iter().enumerate() {
            x[v] = y[k];
        }
        x
    }
}
