// Conjugate residual iteration on the 7-point Dirichlet Laplacian.
//
// Unknowns are the interior nodes; boundary nodes are pinned to zero and never
// touched. The system is scaled by h^2 (stencil 6x - sum of neighbours), which
// leaves relative residuals unchanged. Conjugate residual is the member of the
// conjugate gradient family that minimizes ||r||_2 over the Krylov space, so
// every step's residual is no larger than the previous one.

use rayon::prelude::*;
use serde::Serialize;

use super::{PoissonError, Result, ScalarField, VoxelGrid};

/// Consecutive residual increases that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 50;

const REDUCE_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final `||rhs - laplacian(chi)|| / ||rhs||` over interior nodes, recomputed from the solution.
    pub relative_residual: f64,
    pub converged: bool,
    /// Relative residual after each iteration, starting with the initial guess.
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// Solves `laplacian(chi) = rhs` with `chi = 0` on the grid boundary.
pub fn solve(rhs: &ScalarField, tolerance: f64, max_iters: usize) -> Result<(ScalarField, SolveReport)> {
    if !(tolerance > 0.0) {
        return Err(PoissonError::Params(format!("cg_tolerance must be positive, got {tolerance}")));
    }
    let grid = *rhs.grid();
    let h2 = grid.cell_size() * grid.cell_size();

    // A x = b with A = -h^2 laplacian, b = -h^2 rhs, restricted to the interior.
    let mut b: Vec<f64> = rhs.values().iter().map(|&v| -h2 * v).collect();
    zero_boundary(&grid, &mut b);
    let b_norm = dot(&b, &b).sqrt();

    let mut x = vec![0.0; b.len()];
    if b_norm == 0.0 {
        let report = SolveReport { iterations: 0, relative_residual: 0.0, converged: true, history: vec![0.0] };
        return Ok((ScalarField::from_raw(grid, x), report));
    }

    let mut history = vec![1.0];
    let mut rising = 0usize;
    let mut iterations = 0;
    let mut r = b.clone();
    let mut ar = vec![0.0; b.len()];
    let mut true_residual;

    // The recurrence residual can drift from b - Ax; when it claims convergence
    // but the true residual disagrees, restart from the true residual.
    loop {
        apply(&grid, &r, &mut ar);
        let mut p = r.clone();
        let mut ap = ar.clone();
        let mut r_ar = dot(&r, &ar);

        while iterations < max_iters && *history.last().unwrap() > tolerance {
            let ap_ap = dot(&ap, &ap);
            if !(ap_ap > 0.0) || !(r_ar > 0.0) {
                return Err(diverged(iterations, &history));
            }
            // Exact line minimizer of ||r - alpha A p||.
            let alpha = dot(&r, &ap) / ap_ap;
            x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.par_iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
            apply(&grid, &r, &mut ar);
            let r_ar_next = dot(&r, &ar);
            let beta = r_ar_next / r_ar;
            p.par_iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
            ap.par_iter_mut().zip(&ar).for_each(|(ap, ar)| *ap = ar + beta * *ap);
            r_ar = r_ar_next;
            iterations += 1;

            let rel = dot(&r, &r).sqrt() / b_norm;
            if !rel.is_finite() {
                return Err(diverged(iterations, &history));
            }
            rising = if rel > *history.last().unwrap() { rising + 1 } else { 0 };
            history.push(rel);
            if rising >= DIVERGENCE_WINDOW {
                return Err(diverged(iterations, &history));
            }
        }

        apply(&grid, &x, &mut ar);
        r.par_iter_mut().zip(&b).zip(&ar).for_each(|((r, b), ax)| *r = b - ax);
        true_residual = dot(&r, &r).sqrt() / b_norm;
        if true_residual <= tolerance || iterations >= max_iters {
            break;
        }
        log::debug!("poisson solve: restarting at iteration {iterations}, true residual {true_residual:.3e}");
        *history.last_mut().unwrap() = true_residual;
    }

    let report = SolveReport {
        iterations,
        relative_residual: true_residual,
        converged: true_residual <= tolerance,
        history,
    };
    log::debug!(
        "poisson solve: {} iterations, relative residual {:.3e}",
        report.iterations,
        report.relative_residual
    );
    Ok((ScalarField::from_raw(grid, x), report))
}

fn diverged(iterations: usize, history: &[f64]) -> PoissonError {
    PoissonError::Diverged {
        iterations,
        residual: history.last().copied().unwrap_or(f64::NAN),
        initial_residual: history.first().copied().unwrap_or(f64::NAN),
    }
}

fn zero_boundary(grid: &VoxelGrid, v: &mut [f64]) {
    let n = grid.nodes_per_axis();
    for (idx, val) in v.iter_mut().enumerate() {
        let [i, j, k] = grid.coords(idx);
        if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
            *val = 0.0;
        }
    }
}

/// `out = 6 x - sum(neighbours)` on interior nodes, zero on the boundary.
fn apply(grid: &VoxelGrid, x: &[f64], out: &mut [f64]) {
    let n = grid.nodes_per_axis();
    let plane = n * n;
    out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        if k == 0 || k == n - 1 {
            slab.fill(0.0);
            return;
        }
        for j in 0..n {
            for i in 0..n {
                let local = i + n * j;
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    slab[local] = 0.0;
                    continue;
                }
                let c = k * plane + local;
                slab[local] = 6.0 * x[c]
                    - x[c - 1]
                    - x[c + 1]
                    - x[c - n]
                    - x[c + n]
                    - x[c - plane]
                    - x[c + plane];
            }
        }
    });
}

/// Dot product with a fixed reduction tree, so results do not depend on thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partials: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// Discrete Laplacian (7-point, `1/h^2`) of `f` on interior nodes; boundary nodes get 0.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let h2 = grid.cell_size() * grid.cell_size();
    let mut out = vec![0.0; f.values().len()];
    apply(&grid, f.values(), &mut out);
    out.iter_mut().for_each(|v| *v /= -h2);
    ScalarField::from_raw(grid, out)
}
