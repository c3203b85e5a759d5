//! Damped Newton minimizer with Levenberg regularisation and Armijo
//! backtracking, plus the finite-difference Hessian helper.

use nalgebra::{DMatrix, DVector};

pub(crate) struct NewtonOptions {
    /// Stop when the gradient infinity norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

pub(crate) struct NewtonOutcome {
    pub x: Vec<f64>,
    pub grad_norm: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Symmetrised central-difference Jacobian of `grad`.
pub(crate) fn fd_hessian(x: &[f64], grad: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let gp = grad(&xp);
        xp[j] = x[j] - step;
        let gm = grad(&xp);
        xp[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Solves `(H + τI) d = −g` with the smallest τ from a geometric ladder
/// that makes the matrix positive definite.
fn regularised_step(h: &DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let rhs = -DVector::from_column_slice(g);
    let scale = h.diagonal().amax().max(1e-12);
    let mut tau = 0.0;
    for _ in 0..40 {
        let m = h + DMatrix::identity(n, n) * tau;
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&rhs);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d.iter().copied().collect());
            }
        }
        tau = if tau == 0.0 { 1e-10 * scale } else { tau * 10.0 };
    }
    None
}

pub(crate) fn minimize(
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    hess: impl Fn(&[f64]) -> DMatrix<f64>,
    x0: Vec<f64>,
    opts: &NewtonOptions,
) -> NewtonOutcome {
    let mut x = x0;
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut gn = inf_norm(&g);
    let mut iterations = 0;
    while gn > opts.grad_tol && iterations < opts.max_iter {
        iterations += 1;
        let h = hess(&x);
        let Some(d) = regularised_step(&h, &g) else { break };
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let d = if slope < 0.0 { d } else { g.iter().map(|v| -v).collect() };
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let ft = f(&xt);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((xt, ft));
                break;
            }
            alpha *= 0.5;
        }
        // Near the optimum the decrease drops below rounding of f; accept a
        // full step that still reduces the gradient.
        let (xn, fnew) = match accepted {
            Some(a) => a,
            None => {
                let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
                let ft = f(&xt);
                if ft.is_finite() && inf_norm(&grad(&xt)) < gn {
                    (xt, ft)
                } else {
                    break;
                }
            }
        };
        x = xn;
        fx = fnew;
        g = grad(&x);
        gn = inf_norm(&g);
    }
    NewtonOutcome {
        x,
        grad_norm: gn,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = |x: &[f64]| {
            vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]
        };
        let out = minimize(
            f,
            g,
            |x: &[f64]| fd_hessian(x, g),
            vec![-1.2, 1.0],
            &NewtonOptions {
                grad_tol: 1e-10,
                max_iter: 100,
            },
        );
        assert!(out.grad_norm <= 1e-10);
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8);
    }
}
