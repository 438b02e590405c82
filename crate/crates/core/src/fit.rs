//! Small-problem Levenberg-Marquardt used by the spectral, histogram, and
//! binding-curve fits. All callers have at most four parameters and at most
//! a few thousand points, so a dense normal-equation solve is plenty; no
//! linear-algebra dependency is worth it at this size.

use crate::error::{Error, Result};

pub struct FitProblem<'a, F>
where
    F: Fn(&[f64], f64) -> f64,
{
    pub model: F,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    /// Per-point weights (1/sigma^2); uniform when absent.
    pub weights: Option<&'a [f64]>,
    pub init: &'a [f64],
    /// Box constraints; steps are projected back inside.
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub max_iter: usize,
    /// Relative cost-decrease threshold that counts as converged.
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    /// Weighted residual sum of squares at `params`.
    pub cost: f64,
}

pub fn levenberg_marquardt<F>(problem: &FitProblem<'_, F>) -> Result<FitOutcome>
where
    F: Fn(&[f64], f64) -> f64,
{
    let n = problem.xs.len();
    let p = problem.init.len();
    assert_eq!(problem.ys.len(), n);
    assert_eq!(problem.lower.len(), p);
    assert_eq!(problem.upper.len(), p);
    if n < p {
        return Err(Error::Degenerate(format!(
            "{n} points cannot constrain {p} parameters"
        )));
    }

    let weight = |i: usize| problem.weights.map_or(1.0, |w| w[i]);
    let cost_of = |params: &[f64]| -> f64 {
        problem
            .xs
            .iter()
            .zip(problem.ys)
            .enumerate()
            .map(|(i, (&x, &y))| {
                let r = y - (problem.model)(params, x);
                weight(i) * r * r
            })
            .sum()
    };

    let mut params: Vec<f64> = problem
        .init
        .iter()
        .zip(problem.lower.iter().zip(problem.upper))
        .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
        .collect();
    let mut cost = cost_of(&params);
    let mut lambda = 1e-3;

    for _ in 0..problem.max_iter {
        // Central-difference Jacobian, step scaled to the parameter span so
        // parameters of wildly different magnitude (Hz vs molar) behave.
        let mut jac = vec![vec![0.0; p]; n];
        for j in 0..p {
            let span = (problem.upper[j] - problem.lower[j]).abs();
            let h = (1e-6 * params[j].abs())
                .max(1e-9 * span)
                .max(1e-12);
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[j] = (params[j] + h).min(problem.upper[j]);
            minus[j] = (params[j] - h).max(problem.lower[j]);
            let denom = plus[j] - minus[j];
            if denom == 0.0 {
                continue;
            }
            for (i, &x) in problem.xs.iter().enumerate() {
                jac[i][j] =
                    ((problem.model)(&plus, x) - (problem.model)(&minus, x)) / denom;
            }
        }

        // Normal equations JtWJ and JtW r.
        let mut a = vec![vec![0.0; p]; p];
        let mut g = vec![0.0; p];
        for (i, &x) in problem.xs.iter().enumerate() {
            let w = weight(i);
            let r = problem.ys[i] - (problem.model)(&params, x);
            for j in 0..p {
                g[j] += w * jac[i][j] * r;
                for k in j..p {
                    a[j][k] += w * jac[i][j] * jac[i][k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                a[j][k] = a[k][j];
            }
        }

        // Try damped steps, inflating lambda until one reduces the cost.
        let mut accepted = false;
        for _ in 0..24 {
            let mut damped = a.clone();
            for (j, row) in damped.iter_mut().enumerate() {
                row[j] += lambda * a[j][j].max(1e-30);
            }
            let Some(delta) = solve(damped, g.clone()) else {
                lambda *= 8.0;
                continue;
            };
            let trial: Vec<f64> = params
                .iter()
                .zip(&delta)
                .zip(problem.lower.iter().zip(problem.upper))
                .map(|((&v, &d), (&lo, &hi))| (v + d).clamp(lo, hi))
                .collect();
            let trial_cost = cost_of(&trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let rel_drop = (cost - trial_cost) / cost.max(1e-300);
                let step = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                params = trial;
                cost = trial_cost;
                lambda = (lambda / 4.0).max(1e-12);
                accepted = true;
                if rel_drop < problem.tol || step < 1e-14 {
                    return Ok(FitOutcome { params, cost });
                }
                break;
            }
            lambda *= 8.0;
        }
        if !accepted {
            // Damping saturated: stuck at a (local) minimum.
            return Ok(FitOutcome { params, cost });
        }
    }

    Err(Error::NonConvergence {
        iterations: problem.max_iter,
        residual: cost.sqrt(),
        best: params,
    })
}

/// Gaussian elimination with partial pivoting. Returns None when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exponential_decay() {
        let truth = [2.5, 0.7];
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| truth[0] * (-truth[1] * x).exp()).collect();
        let out = levenberg_marquardt(&FitProblem {
            model: |p, x| p[0] * (-p[1] * x).exp(),
            xs: &xs,
            ys: &ys,
            weights: None,
            init: &[1.0, 0.2],
            lower: &[0.0, 0.0],
            upper: &[100.0, 100.0],
            max_iter: 200,
            tol: 1e-12,
        })
        .unwrap();
        assert!((out.params[0] - truth[0]).abs() < 1e-6);
        assert!((out.params[1] - truth[1]).abs() < 1e-6);
    }

    #[test]
    fn bounds_are_respected() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 5.0 * x).collect();
        let out = levenberg_marquardt(&FitProblem {
            model: |p, x| p[0] * x,
            xs: &xs,
            ys: &ys,
            weights: None,
            init: &[1.0],
            lower: &[0.0],
            upper: &[3.0], // truth (5.0) sits outside the box
            max_iter: 100,
            tol: 1e-12,
        })
        .unwrap();
        assert!(out.params[0] <= 3.0 + 1e-12);
        assert!((out.params[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn singular_system_is_rejected() {
        assert!(solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }
}
