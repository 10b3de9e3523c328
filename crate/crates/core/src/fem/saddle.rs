//! The Taylor-Hood saddle-point system
//!
//! ```text
//! [ K    -B^T   0 ] [u]   [F]
//! [-B     0     m ] [p] = [g]
//! [ 0     m^T   0 ] [l]   [0]
//! ```
//!
//! restricted to velocity dofs off the no-slip boundary. `K = diag(Ks, Ks)` is
//! supplied per factorization as a scalar block on the space's pattern; `B`,
//! `m = (1, chi_k)` and the sparsity structure are fixed, so the symbolic LU
//! is computed once and reused for every numeric factorization.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::Mat;

use super::sparse::SparseOperator;
use super::space::TaylorHoodSpace;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

pub struct SaddleSystem {
    n_scalar: usize,
    free_index: Vec<usize>,
    free_nodes: Vec<usize>,
    n_pr: usize,
    size: usize,
    symbolic: SymbolicSparseColMat<usize>,
    symbolic_lu: SymbolicLu<usize>,
    template: Vec<f64>,
    k_positions: [Vec<usize>; 2],
}

/// Numeric factorization of one saddle-point matrix, reusable for any number of
/// right-hand sides.
pub struct SaddleFactorization {
    lu: Lu<usize, f64>,
    step: Option<usize>,
}

impl SaddleSystem {
    pub fn new(space: &TaylorHoodSpace, divergence: &SparseOperator, pressure_mean: &[f64]) -> Result<Self> {
        let ns = space.n_scalar();
        let n_pr = space.n_pr();
        let mut free_index = vec![NONE; ns];
        let mut free_nodes = Vec::new();
        for (node, &d) in space.dirichlet_nodes().iter().enumerate() {
            if !d {
                free_index[node] = free_nodes.len();
                free_nodes.push(node);
            }
        }
        let nf = free_nodes.len();
        let vel = |c: usize, node: usize| -> usize {
            match free_index[node] {
                NONE => NONE,
                f => c * nf + f,
            }
        };
        let size = 2 * nf + n_pr + 1;
        let lambda = 2 * nf + n_pr;

        // Column-wise B: for each free velocity unknown, the (pressure row, value) pairs.
        let mut b_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 2 * nf];
        for k in 0..n_pr {
            for (dof, v) in divergence.row(k) {
                let j = vel(dof / ns, dof % ns);
                if j != NONE {
                    b_cols[j].push((k, v));
                }
            }
        }
        let mut b_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_pr];
        for (j, col) in b_cols.iter().enumerate() {
            for &(k, v) in col {
                b_rows[k].push((j, v));
            }
        }

        let pattern = space.pattern();
        let mut col_ptr = Vec::with_capacity(size + 1);
        let mut row_idx = Vec::new();
        let mut template = Vec::new();
        col_ptr.push(0);
        for c in 0..2 {
            for &node in &free_nodes {
                for k in pattern.row_ptr[node]..pattern.row_ptr[node + 1] {
                    let r = vel(c, pattern.col_idx[k]);
                    if r != NONE {
                        row_idx.push(r);
                        template.push(0.0);
                    }
                }
                for &(k, v) in &b_cols[vel(c, node)] {
                    row_idx.push(2 * nf + k);
                    template.push(-v);
                }
                col_ptr.push(row_idx.len());
            }
        }
        for (k, row) in b_rows.iter().enumerate() {
            for &(j, v) in row {
                row_idx.push(j);
                template.push(-v);
            }
            row_idx.push(lambda);
            template.push(pressure_mean[k]);
            col_ptr.push(row_idx.len());
        }
        for (k, &m) in pressure_mean.iter().enumerate() {
            row_idx.push(2 * nf + k);
            template.push(m);
        }
        col_ptr.push(row_idx.len());

        // Position of every scalar-pattern entry (row b, col a) inside the CSC values.
        let mut k_positions = [vec![NONE; pattern.nnz()], vec![NONE; pattern.nnz()]];
        for (c, positions) in k_positions.iter_mut().enumerate() {
            for b in 0..ns {
                let rb = vel(c, b);
                if rb == NONE {
                    continue;
                }
                for k in pattern.row_ptr[b]..pattern.row_ptr[b + 1] {
                    let ca = vel(c, pattern.col_idx[k]);
                    if ca == NONE {
                        continue;
                    }
                    let col = &row_idx[col_ptr[ca]..col_ptr[ca + 1]];
                    let off = col.binary_search(&rb).expect("velocity block entry present");
                    positions[k] = col_ptr[ca] + off;
                }
            }
        }

        let symbolic = SymbolicSparseColMat::new_checked(size, size, col_ptr, None, row_idx);
        let symbolic_lu = SymbolicLu::try_new(symbolic.as_ref())
            .map_err(|e| Error::Solver { step: None, message: format!("symbolic factorization: {e:?}") })?;

        Ok(Self { n_scalar: ns, free_index, free_nodes, n_pr, size, symbolic, symbolic_lu, template, k_positions })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_free_nodes(&self) -> usize {
        self.free_nodes.len()
    }

    /// Factorizes the system whose velocity block is `diag(Ks, Ks)`.
    pub fn factorize(&self, scalar_block: &[f64], step: Option<usize>) -> Result<SaddleFactorization> {
        assert_eq!(scalar_block.len(), self.k_positions[0].len());
        let mut values = self.template.clone();
        for positions in &self.k_positions {
            for (&p, &v) in positions.iter().zip(scalar_block) {
                if p != NONE {
                    values[p] = v;
                }
            }
        }
        let mat = SparseColMatRef::new(self.symbolic.as_ref(), &values);
        let lu = Lu::try_new_with_symbolic(self.symbolic_lu.clone(), mat)
            .map_err(|e| Error::Solver { step, message: format!("numeric factorization: {e:?}") })?;
        Ok(SaddleFactorization { lu, step })
    }

    /// Solves for `(u, p)` given the full-length momentum right-hand side
    /// (Dirichlet rows are ignored, the returned velocity is zero there) and an
    /// optional continuity right-hand side.
    pub fn solve(
        &self,
        fact: &SaddleFactorization,
        momentum: &[f64],
        continuity: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let ns = self.n_scalar;
        let nf = self.free_nodes.len();
        assert_eq!(momentum.len(), 2 * ns);
        let mut rhs = Mat::<f64>::zeros(self.size, 1);
        for c in 0..2 {
            for (f, &node) in self.free_nodes.iter().enumerate() {
                rhs[(c * nf + f, 0)] = momentum[c * ns + node];
            }
        }
        if let Some(g) = continuity {
            for k in 0..self.n_pr {
                rhs[(2 * nf + k, 0)] = g[k];
            }
        }
        fact.lu.solve_in_place(rhs.as_mut());

        let mut u = vec![0.0; 2 * ns];
        for c in 0..2 {
            for (f, &node) in self.free_nodes.iter().enumerate() {
                u[c * ns + node] = rhs[(c * nf + f, 0)];
            }
        }
        let p: Vec<f64> = (0..self.n_pr).map(|k| rhs[(2 * nf + k, 0)]).collect();
        if u.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(match fact.step {
                Some(step) => Error::NonFinite { step },
                None => Error::Solver { step: None, message: "singular saddle-point matrix".into() },
            });
        }
        Ok((u, p))
    }

    /// True if scalar node `i` carries velocity unknowns.
    pub fn is_free(&self, node: usize) -> bool {
        self.free_index[node] != NONE
    }
}
