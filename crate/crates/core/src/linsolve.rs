//! Sparse iterative solvers (Jacobi-preconditioned CG, with zero-mean and
//! Dirichlet variants) and the closed-form per-node 3x3 cross-product solve
//! used by the fixed-point sweep.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fem::{LumpedWeights, SparseOperator};

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_iter: 20_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rel_tol <= 0.0 || self.abs_tol <= 0.0 || self.max_iter < 1 {
            return Err(Error::invalid("solver tolerances must be positive, max_iter >= 1"));
        }
        Ok(())
    }
}

/// Anything that acts like a symmetric positive (semi-)definite matrix.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        SparseOperator::diagonal(self)
    }
}

/// Restriction of a sparse operator to a subset of rows/columns, with the
/// complement treated as zero. Used for the interior block of Dirichlet
/// problems.
struct RestrictedOperator<'a> {
    full: &'a SparseOperator,
    kept: &'a [usize],
    /// global index -> local index, -1 when dropped
    local: Vec<isize>,
}

impl<'a> RestrictedOperator<'a> {
    fn new(full: &'a SparseOperator, kept: &'a [usize]) -> Self {
        let mut local = vec![-1isize; full.n()];
        for (li, &gi) in kept.iter().enumerate() {
            local[gi] = li as isize;
        }
        RestrictedOperator { full, kept, local }
    }
}

impl LinearOperator for RestrictedOperator<'_> {
    fn dim(&self) -> usize {
        self.kept.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (li, &gi) in self.kept.iter().enumerate() {
            let mut acc = 0.0;
            for (gj, v) in self.full.row(gi) {
                let lj = self.local[gj];
                if lj >= 0 {
                    acc += v * x[lj as usize];
                }
            }
            y[li] = acc;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let full_diag = self.full.diagonal();
        self.kept.iter().map(|&g| full_diag[g]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients. `post_residual` is applied to
/// the residual after every update; the zero-mean variant uses it to keep
/// iterates out of the constant kernel. `x0` seeds the iteration, which
/// pays off when consecutive right-hand sides vary slowly.
fn cg_inner<O: LinearOperator>(
    op: &O,
    b: &[f64],
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
    mut post_residual: impl FnMut(&mut [f64]),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = op.dim();
    assert_eq!(b.len(), n);
    let norm_b = norm(b);
    let target = (cfg.rel_tol * norm_b).max(cfg.abs_tol);
    let mut x = match x0 {
        Some(seed) if seed.len() == n && seed.iter().all(|v| v.is_finite()) => seed.to_vec(),
        _ => vec![0.0; n],
    };
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }

    let inv_diag: Vec<f64> = op
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = b.to_vec();
    if x.iter().any(|&v| v != 0.0) {
        let mut ax = vec![0.0; n];
        op.apply(&x, &mut ax);
        for i in 0..n {
            r[i] -= ax[i];
        }
    }
    post_residual(&mut r);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();

    for _ in 0..cfg.max_iter {
        let res = norm(&r);
        history.push(res);
        if res <= target {
            return Ok(x);
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                iterations: history.len(),
                residual: res,
                history,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        post_residual(&mut r);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&r);
    if res <= target {
        return Ok(x);
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        residual: res,
        history,
    })
}

/// CG for a symmetric positive definite system.
pub fn cg_solve(a: &SparseOperator, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    cg_inner(a, b, cfg, None, |_| {})
}

/// [`cg_solve`] seeded with an initial guess.
pub fn cg_solve_warm(
    a: &SparseOperator,
    b: &[f64],
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
) -> Result<Vec<f64>> {
    cg_inner(a, b, cfg, x0, |_| {})
}

/// CG for the singular pure-Neumann stiffness system. The right-hand side
/// is projected onto the compatible subspace (Euclidean-orthogonal to
/// constants, the kernel of the symmetric operator) and the returned
/// solution is normalized to zero weighted mean, i.e. zero integral.
pub fn cg_zero_mean(
    stiffness: &SparseOperator,
    b: &[f64],
    w: &LumpedWeights,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    cg_zero_mean_warm(stiffness, b, w, cfg, None)
}

/// [`cg_zero_mean`] seeded with an initial guess.
pub fn cg_zero_mean_warm(
    stiffness: &SparseOperator,
    b: &[f64],
    w: &LumpedWeights,
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = stiffness.n();
    assert_eq!(b.len(), n);
    let mean = b.iter().sum::<f64>() / n as f64;
    let b_proj: Vec<f64> = b.iter().map(|bi| bi - mean).collect();
    let mut x = cg_inner(stiffness, &b_proj, cfg, x0, |r| {
        let m = r.iter().sum::<f64>() / r.len() as f64;
        for ri in r.iter_mut() {
            *ri -= m;
        }
    })?;
    let volume = w.domain_volume();
    let weighted_mean: f64 = x.iter().zip(w.beta()).map(|(xi, bi)| xi * bi).sum::<f64>() / volume;
    for xi in &mut x {
        *xi -= weighted_mean;
    }
    Ok(x)
}

/// Solve the stiffness system with prescribed boundary values: boundary
/// columns are eliminated to the right-hand side and CG runs on the
/// interior block. Boundary values are reproduced exactly.
pub fn dirichlet_solve(
    stiffness: &SparseOperator,
    boundary_values: &[(usize, f64)],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    dirichlet_solve_warm(stiffness, boundary_values, cfg, None)
}

/// [`dirichlet_solve`] seeded with an initial guess for the full vector
/// (only the interior entries of the seed are used).
pub fn dirichlet_solve_warm(
    stiffness: &SparseOperator,
    boundary_values: &[(usize, f64)],
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = stiffness.n();
    if boundary_values.is_empty() {
        return Err(Error::invalid("dirichlet_solve needs at least one boundary node"));
    }
    let mut fixed = vec![false; n];
    let mut x = vec![0.0; n];
    for &(i, g) in boundary_values {
        assert!(i < n, "boundary node out of range");
        fixed[i] = true;
        x[i] = g;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    if interior.is_empty() {
        return Ok(x);
    }

    // rhs_I = -(K x_B)_I
    let mut kx = vec![0.0; n];
    stiffness.matvec(&x, &mut kx);
    let rhs: Vec<f64> = interior.iter().map(|&i| -kx[i]).collect();

    let seed: Option<Vec<f64>> = x0.map(|full| interior.iter().map(|&i| full[i]).collect());
    let reduced = RestrictedOperator::new(stiffness, &interior);
    let xi = cg_inner(&reduced, &rhs, cfg, seed.as_deref(), |_| {})?;
    for (li, &gi) in interior.iter().enumerate() {
        x[gi] = xi[li];
    }
    Ok(x)
}

/// Closed-form solution of `c*eta + eta x a = b` for `c > 0`. The system
/// matrix `c*I - [a]x` has determinant `c*(c^2 + |a|^2) > 0`, so the
/// solution is unique.
#[inline]
pub fn solve_node_cross(c: f64, a: Vector3<f64>, b: Vector3<f64>) -> Vector3<f64> {
    debug_assert!(c > 0.0);
    let a_dot_b = a.dot(&b);
    let denom = c * (c * c + a.norm_squared());
    (c * c * b + c * a.cross(&b) + a_dot_b * a) / denom
}
