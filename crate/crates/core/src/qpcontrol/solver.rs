//! Dense dual active-set solver for `min ½|z|² + gᵀz  s.t.  A z ≤ b`.
//!
//! The method starts at the unconstrained minimizer `z = -g` and adds the most
//! violated constraint at each outer step. Within a step, the primal and dual
//! iterates move along `(P n, -r)` where `P` projects onto the complement of
//! the active normals, dropping active rows whose multiplier would turn
//! negative. Every iterate is optimal for the active subproblem, so the outer
//! loop can add each row at most a finite number of times. A violated row that
//! cannot be reached by any admissible step proves infeasibility.

use nalgebra::{DMatrix, DVector};

/// Violation tolerance relative to `1 + |b_i| + |z|` (rows have unit norm).
const FEAS_TOL: f64 = 1e-12;
/// Below this norm a projected normal counts as linearly dependent.
const DEP_TOL: f64 = 1e-9;
/// Final check on every row, including the active ones.
const ACCEPT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub(crate) struct RawSolution {
    pub z: DVector<f64>,
    /// One multiplier per row; zero for inactive rows.
    pub lambda: Vec<f64>,
    pub outcome: Outcome,
}

fn row(a: &DMatrix<f64>, i: usize) -> DVector<f64> {
    a.row(i).transpose()
}

/// `r = (Nᵀ N)⁻¹ Nᵀ n` for the active normals `N` (columns `-a_j`), and `P n = n - N r`.
fn project(a: &DMatrix<f64>, active: &[usize], n: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    if active.is_empty() {
        return (n.clone(), DVector::zeros(0));
    }
    let big_n = DMatrix::from_fn(n.len(), active.len(), |r, c| -a[(active[c], r)]);
    let gram = big_n.tr_mul(&big_n);
    let rhs = big_n.tr_mul(n);
    let r = gram
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(active.len()));
    let dir = n - &big_n * &r;
    (dir, r)
}

/// Re-solves the equality-constrained problem on the active set in one shot,
/// removing drift accumulated by the incremental updates. Returns `None` if
/// the refined point is worse than the incremental one.
fn refine(a: &DMatrix<f64>, b: &DVector<f64>, g: &DVector<f64>, active: &[usize]) -> Option<(DVector<f64>, Vec<f64>)> {
    if active.is_empty() {
        return Some((-g.clone(), Vec::new()));
    }
    let a_s = DMatrix::from_fn(active.len(), g.len(), |r, c| a[(active[r], c)]);
    let b_s = DVector::from_fn(active.len(), |r, _| b[active[r]]);
    let gram = &a_s * a_s.transpose();
    let lambda = gram.lu().solve(&(-&b_s - &a_s * g))?;
    if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return None;
    }
    let z = -g - a_s.transpose() * &lambda;
    Some((z, lambda.iter().copied().collect()))
}

/// Normalizes every row to unit length, solves, and maps the multipliers back.
/// Zero rows are either trivially satisfied or prove infeasibility.
pub(crate) fn solve(a: &DMatrix<f64>, b: &DVector<f64>, g: &DVector<f64>) -> RawSolution {
    let norms: Vec<f64> = (0..a.nrows()).map(|i| a.row(i).norm()).collect();
    let keep: Vec<usize> = (0..a.nrows()).filter(|&i| norms[i] > 0.0).collect();
    let trivially_infeasible = (0..a.nrows()).any(|i| norms[i] == 0.0 && b[i] < 0.0);
    let a_n = DMatrix::from_fn(keep.len(), a.ncols(), |r, c| a[(keep[r], c)] / norms[keep[r]]);
    let b_n = DVector::from_fn(keep.len(), |r, _| b[keep[r]] / norms[keep[r]]);
    let inner = solve_normalized(&a_n, &b_n, g);
    let mut lambda = vec![0.0; a.nrows()];
    for (r, &i) in keep.iter().enumerate() {
        lambda[i] = inner.lambda[r] / norms[i];
    }
    let outcome = if trivially_infeasible { Outcome::Infeasible } else { inner.outcome };
    RawSolution { z: inner.z, lambda, outcome }
}

fn solve_normalized(a: &DMatrix<f64>, b: &DVector<f64>, g: &DVector<f64>) -> RawSolution {
    let rows = a.nrows();
    let dim = g.len();
    let mut z = -g.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_outer = 20 * (rows + dim) + 50;

    let finish = |z: DVector<f64>, active: &[usize], u: &[f64], outcome| {
        let mut lambda = vec![0.0; rows];
        for (&i, &ui) in active.iter().zip(u) {
            lambda[i] = ui.max(0.0);
        }
        RawSolution { z, lambda, outcome }
    };

    for _ in 0..max_outer {
        // most violated row, in the scaled sense
        let mut worst: Option<(usize, f64)> = None;
        for i in (0..rows).filter(|i| !active.contains(i)) {
            let slack = b[i] - row(a, i).dot(&z);
            let scaled = slack / (1.0 + b[i].abs() + z.norm());
            if scaled < -FEAS_TOL && worst.is_none_or(|(_, w)| scaled < w) {
                worst = Some((i, scaled));
            }
        }
        let Some((p, _)) = worst else {
            if let Some((z_ref, u_ref)) = refine(a, b, g, &active) {
                z = z_ref;
                u = u_ref;
            }
            let scale = 1.0 + z.norm();
            let consistent = (0..rows).all(|i| b[i] - row(a, i).dot(&z) >= -ACCEPT_TOL * (scale + b[i].abs()));
            let outcome = if consistent { Outcome::Optimal } else { Outcome::Infeasible };
            return finish(z, &active, &u, outcome);
        };

        // dual step in the "≥" convention: normal n_p = -a_p
        let n_p = -row(a, p);
        let mut u_p = 0.0;
        loop {
            let (dir, r) = project(a, &active, &n_p);
            let violation = b[p] - row(a, p).dot(&z);
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, (&rj, &uj)) in r.iter().zip(&u).enumerate() {
                if rj > 0.0 {
                    let t = uj / rj;
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let curvature = dir.dot(&n_p);
            let t2 = if dir.norm() > DEP_TOL * (1.0 + n_p.norm()) && curvature > 0.0 {
                (-violation / curvature).max(0.0)
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return finish(z, &active, &u, Outcome::Infeasible);
            }
            if t2.is_finite() {
                z += &dir * t;
            }
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            u_p += t;
            if t2 <= t1 {
                active.push(p);
                u.push(u_p);
                break;
            }
            let j = drop.expect("partial step has a blocking row");
            active.remove(j);
            u.remove(j);
        }
    }
    finish(z, &active, &u, Outcome::Infeasible)
}
