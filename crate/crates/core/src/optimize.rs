//! Dense BFGS with backtracking line search.
//!
//! This is the workhorse behind the shooting solver: a plain inverse-BFGS
//! update, Armijo backtracking, and an optional box projection applied to
//! every trial point. Dimensions stay small (horizon times control
//! dimension), so the dense n-by-n inverse Hessian is cheap.

use crate::linalg::norm_inf;
use crate::scalar::Scalar;

pub struct BfgsOptions<T> {
    /// Terminate when the infinity norm of the (projected) gradient drops
    /// below this.
    pub grad_tol: T,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: T,
    /// Backtracking factor.
    pub backtrack: T,
}

impl<T: Scalar> Default for BfgsOptions<T> {
    fn default() -> Self {
        Self {
            grad_tol: T::of(1e-8),
            max_iter: 500,
            armijo: T::of(1e-4),
            backtrack: T::of(0.5),
        }
    }
}

pub struct BfgsResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Box bounds used for projection.
pub struct BoxBounds<'a, T> {
    pub lo: &'a [T],
    pub hi: &'a [T],
}

fn project<T: Scalar>(x: &mut [T], bounds: Option<&BoxBounds<'_, T>>) {
    if let Some(b) = bounds {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.max(b.lo[i]).min(b.hi[i]);
        }
    }
}

/// Gradient entries that point out of the feasible box are zeroed so that
/// active bounds do not block the termination test.
fn projected_gradient<T: Scalar>(x: &[T], g: &[T], bounds: Option<&BoxBounds<'_, T>>) -> Vec<T> {
    let mut pg = g.to_vec();
    if let Some(b) = bounds {
        for i in 0..x.len() {
            if (x[i] <= b.lo[i] && g[i] > T::zero()) || (x[i] >= b.hi[i] && g[i] < T::zero()) {
                pg[i] = T::zero();
            }
        }
    }
    pg
}

/// Minimize `f` starting from `x0`. `grad` must return the gradient at the
/// query point; it is only ever called at points that `f` accepted.
///
/// The returned point is the best one seen, so with a feasible `x0` the
/// result never has a larger objective value than `f(x0)`.
pub fn minimize<T, F, G>(
    mut f: F,
    mut grad: G,
    x0: Vec<T>,
    bounds: Option<BoxBounds<'_, T>>,
    opts: &BfgsOptions<T>,
) -> BfgsResult<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
    G: FnMut(&[T]) -> Vec<T>,
{
    let n = x0.len();
    let bounds = bounds.as_ref();

    let mut x = x0;
    project(&mut x, bounds);
    let mut fx = f(&x);
    let mut g = grad(&x);

    let mut best_x = x.clone();
    let mut best_f = fx;

    // Inverse Hessian approximation, row-major identity.
    let mut h = identity::<T>(n);
    let mut first_update = true;

    let mut iterations = 0;
    let mut grad_norm = norm_inf(&projected_gradient(&x, &g, bounds));

    while iterations < opts.max_iter && grad_norm > opts.grad_tol {
        // d = -H g
        let mut d = vec![T::zero(); n];
        for i in 0..n {
            let mut s = T::zero();
            for j in 0..n {
                s += h[i * n + j] * g[j];
            }
            d[i] = -s;
        }

        let mut gd = dot(&g, &d);
        if !(gd < T::zero()) {
            // Not a descent direction; fall back to steepest descent.
            h = identity(n);
            first_update = true;
            for i in 0..n {
                d[i] = -g[i];
            }
            gd = dot(&g, &d);
            if !(gd < T::zero()) {
                break; // gradient is exactly zero or non-finite
            }
        }

        // Backtracking Armijo search with a round-off allowance: near the
        // minimum the true decrease drops below the resolution of `f`.
        let f_slack = T::epsilon() * (T::one() + fx.abs());
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt = x.clone();
            for i in 0..n {
                xt[i] = x[i] + t * d[i];
            }
            project(&mut xt, bounds);
            let ft = f(&xt);
            if ft.is_finite() && ft <= fx + opts.armijo * t * gd + f_slack {
                accepted = Some((xt, ft));
                break;
            }
            t *= opts.backtrack;
        }

        let Some((x_new, f_new)) = accepted else {
            break; // stalled: no acceptable step length
        };

        let g_new = grad(&x_new);

        // BFGS update of the inverse Hessian.
        let s: Vec<T> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<T> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        let curvature_ok = sy > T::of(1e-12) * norm2(&s) * norm2(&y);
        if curvature_ok {
            if first_update {
                // Standard initial scaling before the first update.
                let yy = dot(&y, &y);
                if yy > T::zero() {
                    let scale = sy / yy;
                    for i in 0..n {
                        for j in 0..n {
                            h[i * n + j] = if i == j { scale } else { T::zero() };
                        }
                    }
                }
                first_update = false;
            }
            bfgs_update(&mut h, &s, &y, sy, n);
        } else {
            // Curvature condition failed: restart from identity.
            h = identity(n);
            first_update = true;
        }

        x = x_new;
        fx = f_new;
        g = g_new;
        if fx < best_f {
            best_f = fx;
            best_x = x.clone();
        }
        iterations += 1;
        grad_norm = norm_inf(&projected_gradient(&x, &g, bounds));
    }

    // Report the gradient at the best point if it differs from the last
    // iterate; the best point is what callers receive.
    if best_f < fx {
        let gb = grad(&best_x);
        grad_norm = norm_inf(&projected_gradient(&best_x, &gb, bounds));
    } else {
        best_x = x;
        best_f = fx;
    }

    let converged = grad_norm <= opts.grad_tol;
    BfgsResult {
        x: best_x,
        value: best_f,
        grad_norm,
        iterations,
        converged,
    }
}

fn identity<T: Scalar>(n: usize) -> Vec<T> {
    let mut h = vec![T::zero(); n * n];
    for i in 0..n {
        h[i * n + i] = T::one();
    }
    h
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    crate::linalg::dot(a, b)
}

fn norm2<T: Scalar>(a: &[T]) -> T {
    crate::linalg::norm2(a)
}

/// H <- (I - r s y') H (I - r y s') + r s s'   with r = 1/(y's)
fn bfgs_update<T: Scalar>(h: &mut [T], s: &[T], y: &[T], sy: T, n: usize) {
    let rho = T::one() / sy;
    // hy = H y, yhy = y' H y
    let mut hy = vec![T::zero(); n];
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            acc += h[i * n + j] * y[j];
        }
        hy[i] = acc;
    }
    let yhy = dot(y, &hy);
    let c = (T::one() + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += c * s[i] * s[j] - rho * (s[i] * hy[j] + hy[i] * s[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 2.0)];
        let r = minimize(f, g, vec![0.0, 0.0], None, &BfgsOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-7);
        assert!((r.x[1] + 2.0).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = |x: &[f64]| {
            vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]
        };
        let r = minimize(f, g, vec![-1.2, 1.0], None, &BfgsOptions::default());
        assert!(r.converged, "grad norm {}", r.grad_norm);
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!((r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_bounds() {
        // Unconstrained minimum at x = 3, box caps it at 2.
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 3.0)];
        let lo = [-2.0];
        let hi = [2.0];
        let r = minimize(
            f,
            g,
            vec![0.0],
            Some(BoxBounds { lo: &lo, hi: &hi }),
            &BfgsOptions::default(),
        );
        assert!(r.converged);
        assert_eq!(r.x[0], 2.0);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| x[0].powi(4) - x[0];
        let g = |x: &[f64]| vec![4.0 * x[0].powi(3) - 1.0];
        let start = vec![0.9];
        let f0 = f(&start);
        let r = minimize(f, g, start, None, &BfgsOptions::default());
        assert!(r.value <= f0);
    }
}
