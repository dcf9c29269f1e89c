//! Derivative-free and quasi-Newton minimization.
//!
//! Three routines cover every optimization need in this crate:
//!
//! * [`minimize_brent`] — one-dimensional minimization on a bracket by
//!   golden-section steps with successive parabolic interpolation, for
//!   single-parameter likelihoods;
//! * [`minimize_bfgs`] — quasi-Newton minimization with a numerically
//!   differenced gradient and a backtracking Armijo line search;
//! * [`minimize_nelder_mead`] — simplex descent used to polish BFGS
//!   iterates when the objective is noisy near the optimum.
//!
//! Objectives are plain `FnMut(&[f64]) -> f64` closures.  Non-finite
//! objective values are treated as `+inf`, so callers may simply return
//! `f64::INFINITY` (or let a NaN escape) outside the feasible region and
//! the search routines will back away from it.

use nalgebra::DMatrix;

/// Outcome of a scalar minimization.
#[derive(Debug, Clone, Copy)]
pub struct BrentResult {
    /// Abscissa of the best point found.
    pub x: f64,
    /// Objective value at `x`.
    pub value: f64,
    /// Number of objective evaluations consumed.
    pub evaluations: usize,
    /// Whether the interval shrank below tolerance before the iteration cap.
    pub converged: bool,
}

/// Outcome of a multivariate minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    /// Best iterate found.
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub value: f64,
    /// Sup-norm of the numerical gradient at `x`.
    pub gradient_norm: f64,
    /// Iterations performed.
    pub iterations: usize,
    /// Whether the convergence test passed before the iteration cap.
    pub converged: bool,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1; // 2 - phi
const SQRT_EPS: f64 = 1.490_116_119_384_765_6e-8;

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimizes `f` over the bracket `[a, b]` by Brent's method.
///
/// The routine maintains a golden-section fallback, so it converges even
/// when the parabolic model is useless; `tol` is the absolute abscissa
/// tolerance (values below `sqrt(eps) * |x|` are not meaningful for a
/// quadratic minimum).
pub fn minimize_brent<F>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> BrentResult
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    let mut evaluations = 0usize;
    let mut eval = |x: f64, n: &mut usize| {
        *n += 1;
        finite_or_inf(f(x))
    };

    let mut x = lo + GOLDEN * (hi - lo);
    let mut w = x;
    let mut v = x;
    let mut fx = eval(x, &mut evaluations);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for iter in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let tol1 = SQRT_EPS * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (hi - lo) {
            return BrentResult {
                x,
                value: fx,
                evaluations,
                converged: true,
            };
        }
        let mut use_golden = true;
        if e.abs() > tol1 && fx.is_finite() {
            // fit a parabola through (v, fv), (w, fw), (x, fx)
            let r = (x - w) * (fx - fv);
            let q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            let mut q2 = 2.0 * (q - r);
            if q2 > 0.0 {
                p = -p;
            }
            q2 = q2.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q2 * e_old).abs() && p > q2 * (lo - x) && p < q2 * (hi - x) {
                d = p / q2;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = if mid > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < mid { hi - x } else { lo - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = eval(u, &mut evaluations);
        if fu <= fx {
            if u < x {
                hi = x;
            } else {
                lo = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
        let _ = iter;
    }
    BrentResult {
        x,
        value: fx,
        evaluations,
        converged: false,
    }
}

/// Central-difference gradient with per-coordinate steps scaled to the
/// iterate (`h_i = eps^{1/3} * max(1, |x_i|)`).
pub fn numerical_gradient<F>(mut f: F, x: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let h0 = f64::EPSILON.cbrt();
    let mut work = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = h0 * x[i].abs().max(1.0);
        work[i] = x[i] + h;
        let fp = finite_or_inf(f(&work));
        work[i] = x[i] - h;
        let fm = finite_or_inf(f(&work));
        work[i] = x[i];
        grad[i] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (2.0 * h)
        } else {
            f64::NAN
        };
    }
    grad
}

/// Central-difference Hessian with `eps^{1/4}`-scaled steps.
pub fn numerical_hessian<F>(mut f: F, x: &[f64]) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let h0 = f64::EPSILON.powf(0.25);
    let steps: Vec<f64> = x.iter().map(|xi| h0 * xi.abs().max(1.0)).collect();
    let mut work = x.to_vec();
    let eval = |w: &mut Vec<f64>, i: usize, si: f64, j: usize, sj: f64, f: &mut F| {
        w[i] += si;
        w[j] += sj;
        let v = finite_or_inf(f(w));
        w[i] = x[i];
        w[j] = x[j];
        v
    };
    let f0 = finite_or_inf(f(&work));
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = steps[i];
        let fp = eval(&mut work, i, hi, i, 0.0, &mut f);
        let fm = eval(&mut work, i, -hi, i, 0.0, &mut f);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let fpp = eval(&mut work, i, hi, j, hj, &mut f);
            let fpm = eval(&mut work, i, hi, j, -hj, &mut f);
            let fmp = eval(&mut work, i, -hi, j, hj, &mut f);
            let fmm = eval(&mut work, i, -hi, j, -hj, &mut f);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &g| m.max(g.abs()))
}

/// BFGS minimization with numerical gradients.
///
/// Converges when the gradient sup-norm drops below `grad_tol * max(1, |f|)`
/// or when the objective stalls to machine precision on three consecutive
/// iterations.  The inverse-Hessian approximation is reset to the identity
/// whenever the line search fails, which recovers descent after a region
/// where the numerical gradient was unreliable.
pub fn minimize_bfgs<F>(mut f: F, x0: &[f64], grad_tol: f64, max_iter: usize) -> MinimizeResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = finite_or_inf(f(&x));
    let mut grad = numerical_gradient(&mut f, &x);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut stalls = 0usize;
    let mut iterations = 0usize;

    for iter in 0..max_iter {
        iterations = iter + 1;
        let gnorm = sup_norm(&grad);
        if !gnorm.is_finite() {
            break;
        }
        if gnorm <= grad_tol * fx.abs().max(1.0) {
            return MinimizeResult {
                x,
                value: fx,
                gradient_norm: gnorm,
                iterations: iter,
                converged: true,
            };
        }
        let g = DMatrix::from_column_slice(n, 1, &grad);
        let dir = -(&h_inv * &g);
        let mut slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        let mut dir: Vec<f64> = dir.iter().copied().collect();
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            h_inv = DMatrix::identity(n, n);
            for (d, g) in dir.iter_mut().zip(&grad) {
                *d = -g;
            }
            slope = -grad.iter().map(|g| g * g).sum::<f64>();
            if slope == 0.0 {
                break;
            }
        }

        // backtracking Armijo search
        let mut step = 1.0f64;
        let mut accepted = None;
        let mut trial = vec![0.0; n];
        for _ in 0..60 {
            for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&dir) {
                *t = xi + step * di;
            }
            let ft = finite_or_inf(f(&trial));
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            // line search exhausted: reset curvature and stop if a plain
            // gradient step also fails
            if h_inv == DMatrix::identity(n, n) {
                break;
            }
            h_inv = DMatrix::identity(n, n);
            continue;
        };

        let grad_new = numerical_gradient(&mut f, &trial);
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * s_norm * y_norm && sy.is_finite() {
            let sm = DMatrix::from_column_slice(n, 1, &s);
            let ym = DMatrix::from_column_slice(n, 1, &y);
            let rho = 1.0 / sy;
            let identity = DMatrix::<f64>::identity(n, n);
            let left = &identity - rho * (&sm * ym.transpose());
            h_inv = &left * h_inv * left.transpose() + rho * (&sm * sm.transpose());
        }

        if (fx - f_new).abs() <= 1e-12 * fx.abs().max(1.0) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x = trial;
        fx = f_new;
        grad = grad_new;
        if stalls >= 3 {
            break;
        }
    }
    let gnorm = sup_norm(&grad);
    MinimizeResult {
        converged: gnorm.is_finite() && gnorm <= grad_tol * fx.abs().max(1.0),
        x,
        value: fx,
        gradient_norm: gnorm,
        iterations,
    }
}

/// Nelder–Mead simplex minimization.
///
/// `step` sets the initial simplex edge along each coordinate (scaled by
/// `max(1, |x_i|)`).  Convergence is declared when the simplex values agree
/// to `f_tol` in relative terms.
pub fn minimize_nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    step: f64,
    f_tol: f64,
    max_iter: usize,
) -> MinimizeResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step * x0[i].abs().max(1.0);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| finite_or_inf(f(v))).collect();
    let mut iterations = 0usize;
    let mut converged = false;

    for iter in 0..max_iter {
        iterations = iter + 1;
        // order the simplex by objective value
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        let spread = values[worst] - values[best];
        if spread.is_finite() && spread <= f_tol * (values[best].abs().max(1.0)) {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for &idx in order.iter().take(n) {
            for (c, v) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += v / n as f64;
            }
        }
        let point_at = |coef: f64, centroid: &[f64], worst: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflect = point_at(1.0, &centroid, &simplex[worst]);
        let f_reflect = finite_or_inf(f(&reflect));
        if f_reflect < values[best] {
            let expand = point_at(2.0, &centroid, &simplex[worst]);
            let f_expand = finite_or_inf(f(&expand));
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
            continue;
        }
        if f_reflect < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
            continue;
        }
        let contract = if f_reflect < values[worst] {
            point_at(0.5, &centroid, &simplex[worst])
        } else {
            point_at(-0.5, &centroid, &simplex[worst])
        };
        let f_contract = finite_or_inf(f(&contract));
        if f_contract < values[worst].min(f_reflect) {
            simplex[worst] = contract;
            values[worst] = f_contract;
            continue;
        }
        // shrink toward the best vertex
        let best_point = simplex[best].clone();
        for idx in 0..=n {
            if idx == best {
                continue;
            }
            for (v, b) in simplex[idx].iter_mut().zip(&best_point) {
                *v = b + 0.5 * (*v - b);
            }
            values[idx] = finite_or_inf(f(&simplex[idx]));
        }
    }

    let mut best = 0usize;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    let x = simplex.swap_remove(best);
    let gradient_norm = sup_norm(&numerical_gradient(&mut f, &x));
    MinimizeResult {
        x,
        value: values[best],
        gradient_norm,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_quartic_minimum() {
        // f(x) = (x - 2)^4 + 1 has a flat quartic minimum at x = 2
        let res = minimize_brent(|x| (x - 2.0).powi(4) + 1.0, 0.0, 5.0, 1e-10, 200);
        assert!(res.converged);
        assert!((res.x - 2.0).abs() < 1e-2, "x {}", res.x);
        assert!((res.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn brent_asymmetric_bracket() {
        let res = minimize_brent(|x| x * x + 3.0 * x, -10.0, 100.0, 1e-12, 200);
        assert!(res.converged);
        assert!((res.x + 1.5).abs() < 1e-7, "x {}", res.x);
    }

    #[test]
    fn brent_tolerates_infinite_plateau() {
        let res = minimize_brent(
            |x| {
                if x < 0.0 {
                    f64::INFINITY
                } else {
                    (x - 0.3).powi(2)
                }
            },
            -1.0,
            1.0,
            1e-10,
            300,
        );
        assert!((res.x - 0.3).abs() < 1e-6, "x {}", res.x);
    }

    #[test]
    fn gradient_matches_analytic() {
        let f = |x: &[f64]| x[0].powi(2) * x[1] + x[1].exp();
        let g = numerical_gradient(f, &[1.5, -0.5]);
        assert!((g[0] - 2.0 * 1.5 * -0.5).abs() < 1e-7);
        assert!((g[1] - (1.5f64.powi(2) + (-0.5f64).exp())).abs() < 1e-7);
    }

    #[test]
    fn hessian_matches_analytic() {
        // f = x^2 y + y^3: fxx = 2y, fxy = 2x, fyy = 6y
        let f = |x: &[f64]| x[0].powi(2) * x[1] + x[1].powi(3);
        let h = numerical_hessian(f, &[1.2, 0.7]);
        assert!((h[(0, 0)] - 1.4).abs() < 1e-4, "{}", h[(0, 0)]);
        assert!((h[(0, 1)] - 2.4).abs() < 1e-4, "{}", h[(0, 1)]);
        assert!((h[(1, 1)] - 4.2).abs() < 1e-4, "{}", h[(1, 1)]);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let rosen = |x: &[f64]| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            a * a + 100.0 * b * b
        };
        let res = minimize_bfgs(rosen, &[-1.2, 1.0], 1e-8, 500);
        assert!(res.converged, "gradient norm {}", res.gradient_norm);
        assert!((res.x[0] - 1.0).abs() < 1e-4, "x {:?}", res.x);
        assert!((res.x[1] - 1.0).abs() < 1e-4, "x {:?}", res.x);
    }

    #[test]
    fn bfgs_quadratic_exact() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 5.0;
        let res = minimize_bfgs(f, &[0.0, 0.0], 1e-9, 200);
        assert!(res.converged);
        assert!((res.x[0] - 3.0).abs() < 1e-5);
        assert!((res.x[1] + 1.0).abs() < 1e-5);
        assert!((res.value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn bfgs_respects_infeasible_region() {
        // objective infinite for x <= 0, minimum at x = 2
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                f64::INFINITY
            } else {
                (x[0].ln() - 2.0f64.ln()).powi(2)
            }
        };
        let res = minimize_bfgs(f, &[0.5], 1e-8, 200);
        assert!((res.x[0] - 2.0).abs() < 1e-4, "x {:?}", res.x);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let rosen = |x: &[f64]| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            a * a + 100.0 * b * b
        };
        let res = minimize_nelder_mead(rosen, &[-1.2, 1.0], 0.5, 1e-12, 2000);
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-3, "x {:?}", res.x);
        assert!((res.x[1] - 1.0).abs() < 1e-3, "x {:?}", res.x);
    }

    #[test]
    fn nelder_mead_handles_nan_objective() {
        // NaN outside the half-plane is mapped to +inf and avoided
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 1.0).powi(2) + x[1] * x[1]
            }
        };
        let res = minimize_nelder_mead(f, &[2.0, 2.0], 0.4, 1e-12, 2000);
        assert!((res.x[0] - 1.0).abs() < 1e-3);
        assert!(res.x[1].abs() < 1e-3);
    }
}
