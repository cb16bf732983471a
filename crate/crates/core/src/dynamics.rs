//! Control systems as sampled-data discretizations of continuous-time
//! vector fields with integral stage costs, plus the built-in benchmark
//! systems used throughout the crate.
//!
//! A [`ControlSystem`] is either *sampled* (a continuous vector field
//! integrated over one sampling period under zero-order hold, with the
//! running cost accumulated on the same grid) or *discrete*, where the
//! one-step map and stage cost are given directly (used by the linear
//! scalar test system, for which closed-form value functions exist).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{dist2, first_non_finite, norm2};
use crate::scalar::Scalar;

/// Continuous-time vector field: writes dx/dt for `(x, u)` into the output
/// slice.
pub type VectorField<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;

/// Discrete one-step map: writes `f(x, u)` into the output slice.
pub type DiscreteMap<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;

/// Discrete stage cost `l(x, u)`.
pub type DiscreteCost<T> = Arc<dyn Fn(&[T], &[T]) -> T + Send + Sync>;

/// Per-coordinate box on the control values.
#[derive(Clone, Debug)]
pub struct ControlBounds<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

enum Model<T> {
    /// Zero-order-hold sampling of a continuous vector field; the stage
    /// cost is the integral of squared deviation from the equilibrium pair
    /// (state weighted 1, control weighted `cost_weight`).
    Sampled {
        field: VectorField<T>,
        cost_weight: T,
        substeps: usize,
    },
    /// The discrete map *is* the model; no integration happens.
    Discrete {
        map: DiscreteMap<T>,
        cost: DiscreteCost<T>,
    },
}

impl<T: Clone> Clone for Model<T> {
    fn clone(&self) -> Self {
        match self {
            Model::Sampled {
                field,
                cost_weight,
                substeps,
            } => Model::Sampled {
                field: field.clone(),
                cost_weight: cost_weight.clone(),
                substeps: *substeps,
            },
            Model::Discrete { map, cost } => Model::Discrete {
                map: map.clone(),
                cost: cost.clone(),
            },
        }
    }
}

/// Immutable bundle of dynamics, stage cost, bounds and equilibrium.
/// Values are safe to share across concurrent simulations; every operation
/// is a pure function of its inputs.
#[derive(Clone)]
pub struct ControlSystem<T> {
    state_dim: usize,
    control_dim: usize,
    model: Model<T>,
    sampling_period: T,
    control_bounds: Option<ControlBounds<T>>,
    x_star: Vec<T>,
    u_star: Vec<T>,
}

impl<T: Scalar> fmt::Debug for ControlSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("sampling_period", &self.sampling_period)
            .field("equilibrium_state", &self.x_star)
            .finish()
    }
}

/// Tolerance for the equilibrium property `f(x*, u*) = 0` checked at
/// construction.
const EQUILIBRIUM_TOL: f64 = 1e-10;

impl<T: Scalar> ControlSystem<T> {
    /// Sampled-data system: vector field integrated with classical RK4
    /// (10 substeps per sampling period unless changed via
    /// [`with_substeps`](Self::with_substeps)), stage cost
    /// `int_0^T ||phi(t) - x*||^2 + lambda ||u - u*||^2 dt` accumulated on
    /// the same grid.
    pub fn sampled(
        field: VectorField<T>,
        state_dim: usize,
        control_dim: usize,
        sampling_period: T,
        x_star: Vec<T>,
        u_star: Vec<T>,
        cost_weight: T,
    ) -> Result<Self> {
        if !(sampling_period > T::zero()) {
            return Err(Error::InvalidInput {
                what: "sampling_period",
                reason: "must be positive".into(),
            });
        }
        if cost_weight < T::zero() {
            return Err(Error::InvalidInput {
                what: "cost_weight",
                reason: "must be nonnegative".into(),
            });
        }
        let sys = Self {
            state_dim,
            control_dim,
            model: Model::Sampled {
                field,
                cost_weight,
                substeps: 10,
            },
            sampling_period,
            control_bounds: None,
            x_star,
            u_star,
        };
        sys.check_equilibrium()?;
        Ok(sys)
    }

    /// Discrete-time system given by its one-step map and stage cost.
    pub fn discrete(
        map: DiscreteMap<T>,
        cost: DiscreteCost<T>,
        state_dim: usize,
        control_dim: usize,
        x_star: Vec<T>,
        u_star: Vec<T>,
    ) -> Result<Self> {
        let sys = Self {
            state_dim,
            control_dim,
            model: Model::Discrete { map, cost },
            sampling_period: T::one(),
            control_bounds: None,
            x_star,
            u_star,
        };
        sys.check_equilibrium()?;
        Ok(sys)
    }

    /// Attach per-coordinate control bounds. The equilibrium control must
    /// lie inside the box.
    pub fn with_bounds(mut self, lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != self.control_dim || hi.len() != self.control_dim {
            return Err(Error::DimensionMismatch {
                what: "control bounds",
                expected: self.control_dim,
                got: lo.len().max(hi.len()),
            });
        }
        for i in 0..self.control_dim {
            if !(lo[i] <= self.u_star[i] && self.u_star[i] <= hi[i]) {
                return Err(Error::InvalidInput {
                    what: "control bounds",
                    reason: format!("equilibrium control coordinate {i} outside [lo, hi]"),
                });
            }
        }
        self.control_bounds = Some(ControlBounds { lo, hi });
        Ok(self)
    }

    /// Change the number of RK4 substeps per sampling period (sampled
    /// systems only; ignored for discrete ones).
    pub fn with_substeps(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput {
                what: "substeps",
                reason: "must be at least 1".into(),
            });
        }
        if let Model::Sampled { substeps, .. } = &mut self.model {
            *substeps = n;
        }
        Ok(self)
    }

    fn check_equilibrium(&self) -> Result<()> {
        if self.x_star.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "equilibrium state",
                expected: self.state_dim,
                got: self.x_star.len(),
            });
        }
        if self.u_star.len() != self.control_dim {
            return Err(Error::DimensionMismatch {
                what: "equilibrium control",
                expected: self.control_dim,
                got: self.u_star.len(),
            });
        }
        let tol = T::of(EQUILIBRIUM_TOL);
        match &self.model {
            Model::Sampled { field, .. } => {
                let mut dx = vec![T::zero(); self.state_dim];
                field(&self.x_star, &self.u_star, &mut dx);
                if norm2(&dx) > tol {
                    return Err(Error::InvalidInput {
                        what: "equilibrium",
                        reason: format!("vector field at (x*, u*) has norm {}", norm2(&dx)),
                    });
                }
            }
            Model::Discrete { map, cost } => {
                let mut next = vec![T::zero(); self.state_dim];
                map(&self.x_star, &self.u_star, &mut next);
                let drift = dist2(&next, &self.x_star).sqrt();
                if drift > tol {
                    return Err(Error::InvalidInput {
                        what: "equilibrium",
                        reason: format!("discrete map moves x* by {drift}"),
                    });
                }
                let c = cost(&self.x_star, &self.u_star);
                if c.abs() > T::of(1e-12) {
                    return Err(Error::InvalidInput {
                        what: "equilibrium",
                        reason: format!("stage cost at (x*, u*) is {c}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn sampling_period(&self) -> T {
        self.sampling_period
    }

    pub fn equilibrium_state(&self) -> &[T] {
        &self.x_star
    }

    pub fn equilibrium_control(&self) -> &[T] {
        &self.u_star
    }

    pub fn control_bounds(&self) -> Option<&ControlBounds<T>> {
        self.control_bounds.as_ref()
    }

    pub fn substeps(&self) -> usize {
        match &self.model {
            Model::Sampled { substeps, .. } => *substeps,
            Model::Discrete { .. } => 1,
        }
    }

    fn check_inputs(&self, x: &[T], u: &[T]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        if u.len() != self.control_dim {
            return Err(Error::DimensionMismatch {
                what: "control",
                expected: self.control_dim,
                got: u.len(),
            });
        }
        if let Some(i) = first_non_finite(x) {
            return Err(Error::Divergence {
                stage: 0,
                coordinate: i,
            });
        }
        if let Some(b) = &self.control_bounds {
            let eps = T::of(1e-12);
            for i in 0..self.control_dim {
                if u[i] < b.lo[i] - eps || u[i] > b.hi[i] + eps {
                    return Err(Error::InvalidInput {
                        what: "control",
                        reason: format!("coordinate {i} outside bounds"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Successor state under zero-order hold over one sampling period.
    pub fn step(&self, x: &[T], u: &[T]) -> Result<Vec<T>> {
        self.check_inputs(x, u)?;
        let (next, _) = self.propagate(x, u);
        if let Some(i) = first_non_finite(&next) {
            return Err(Error::Divergence {
                stage: 0,
                coordinate: i,
            });
        }
        Ok(next)
    }

    /// Stage cost incurred over one sampling period.
    pub fn stage_cost(&self, x: &[T], u: &[T]) -> Result<T> {
        self.check_inputs(x, u)?;
        let (next, cost) = self.propagate(x, u);
        if let Some(i) = first_non_finite(&next) {
            return Err(Error::Divergence {
                stage: 0,
                coordinate: i,
            });
        }
        Ok(cost)
    }

    /// One step and its stage cost from a single integration pass. The
    /// state result is bit-identical to [`step`](Self::step): the cost is
    /// an extra quadrature coordinate that never feeds back into the
    /// dynamics.
    pub fn step_and_cost(&self, x: &[T], u: &[T]) -> Result<(Vec<T>, T)> {
        self.check_inputs(x, u)?;
        let (next, cost) = self.propagate(x, u);
        if let Some(i) = first_non_finite(&next) {
            return Err(Error::Divergence {
                stage: 0,
                coordinate: i,
            });
        }
        Ok((next, cost))
    }

    /// Unchecked propagation used by the shooting solver, which probes
    /// slightly outside the control box when differencing.
    pub(crate) fn propagate(&self, x: &[T], u: &[T]) -> (Vec<T>, T) {
        match &self.model {
            Model::Discrete { map, cost } => {
                let mut next = vec![T::zero(); self.state_dim];
                map(x, u, &mut next);
                (next, cost(x, u))
            }
            Model::Sampled {
                field,
                cost_weight,
                substeps,
            } => self.rk4(field, *cost_weight, *substeps, x, u),
        }
    }

    /// Classical RK4 over the sampling period, integrating the running
    /// cost alongside the state on the same grid.
    fn rk4(
        &self,
        field: &VectorField<T>,
        lambda: T,
        substeps: usize,
        x0: &[T],
        u: &[T],
    ) -> (Vec<T>, T) {
        let n = self.state_dim;
        let h = self.sampling_period / T::from_usize(substeps).unwrap();
        let half = h * T::of(0.5);
        let sixth = h / T::of(6.0);
        let two = T::of(2.0);

        // Control deviation term of the integrand is constant in t.
        let u_dev = lambda * dist2(u, &self.u_star);
        let integrand = |x: &[T]| dist2(x, &self.x_star) + u_dev;

        let mut x = x0.to_vec();
        let mut cost = T::zero();

        let mut k1 = vec![T::zero(); n];
        let mut k2 = vec![T::zero(); n];
        let mut k3 = vec![T::zero(); n];
        let mut k4 = vec![T::zero(); n];
        let mut xs = vec![T::zero(); n];

        for _ in 0..substeps {
            field(&x, u, &mut k1);
            let c1 = integrand(&x);

            for i in 0..n {
                xs[i] = x[i] + half * k1[i];
            }
            field(&xs, u, &mut k2);
            let c2 = integrand(&xs);

            for i in 0..n {
                xs[i] = x[i] + half * k2[i];
            }
            field(&xs, u, &mut k3);
            let c3 = integrand(&xs);

            for i in 0..n {
                xs[i] = x[i] + h * k3[i];
            }
            field(&xs, u, &mut k4);
            let c4 = integrand(&xs);

            for i in 0..n {
                x[i] = x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
            }
            cost += sixth * (c1 + two * c2 + two * c3 + c4);
        }
        (x, cost)
    }
}

/// Parameters of the synchronous generator benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncGenParams<T> {
    pub b1: T,
    pub b2: T,
    pub b3: T,
    pub b4: T,
    pub p: T,
    pub e: T,
}

impl<T: Scalar> Default for SyncGenParams<T> {
    fn default() -> Self {
        Self {
            b1: T::of(34.29),
            b2: T::of(0.0),
            b3: T::of(0.149),
            b4: T::of(0.3341),
            p: T::of(28.22),
            e: T::of(0.2405),
        }
    }
}

impl<T: Scalar> SyncGenParams<T> {
    fn field(&self) -> VectorField<T> {
        let &Self {
            b1,
            b2,
            b3,
            b4,
            p,
            e,
        } = self;
        Arc::new(move |x: &[T], u: &[T], dx: &mut [T]| {
            dx[0] = x[1];
            dx[1] = -b1 * x[2] * x[0].sin() - b2 * x[1] + p;
            dx[2] = b3 * x[0].cos() - b4 * x[2] + e + u[0];
        })
    }
}

/// Newton refinement of the generator equilibrium with `u = 0`, seeded at
/// the nominal operating point `(1.12, 0, 0.914)`. Returns `(x*, u*)` with
/// `||f(x*, 0)|| <= 1e-12`.
pub fn equilibrium_of<T: Scalar>(params: &SyncGenParams<T>) -> Result<(Vec<T>, Vec<T>)> {
    let field = params.field();
    let u = vec![T::zero(); 1];
    let seed = vec![T::of(1.12), T::zero(), T::of(0.914)];
    let x = newton_root(
        |x: &[T], out: &mut [T]| field(x, &u, out),
        seed,
        T::of(1e-12),
        50,
    )?;
    Ok((x, u))
}

/// Damped-free Newton iteration for a square root-finding problem, with a
/// finite-difference Jacobian. Converges when the residual 2-norm drops
/// below `tol`.
fn newton_root<T: Scalar>(
    f: impl Fn(&[T], &mut [T]),
    mut x: Vec<T>,
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = x.len();
    let mut r = vec![T::zero(); n];
    let mut r_pert = vec![T::zero(); n];

    for _ in 0..max_iter {
        f(&x, &mut r);
        let res = norm2(&r);
        if res <= tol {
            return Ok(x);
        }
        // Finite-difference Jacobian, column by column.
        let mut jac = vec![T::zero(); n * n];
        for j in 0..n {
            let h = T::of(1e-7) * T::one().max(x[j].abs());
            let saved = x[j];
            x[j] = saved + h;
            f(&x, &mut r_pert);
            x[j] = saved;
            for i in 0..n {
                jac[i * n + j] = (r_pert[i] - r[i]) / h;
            }
        }
        let mut rhs: Vec<T> = r.iter().map(|&v| -v).collect();
        solve_dense(&mut jac, &mut rhs, n).ok_or(Error::NonConvergence {
            iterations: max_iter,
            residual: res.to_f64().unwrap_or(f64::NAN),
        })?;
        for i in 0..n {
            x[i] += rhs[i];
        }
    }

    f(&x, &mut r);
    let res = norm2(&r);
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            iterations: max_iter,
            residual: res.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Gaussian elimination with partial pivoting; solves in place, returns
/// `None` on a (numerically) singular matrix.
fn solve_dense<T: Scalar>(a: &mut [T], b: &mut [T], n: usize) -> Option<()> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < T::of(1e-300) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / d;
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= factor * v;
            }
            let bc = b[col];
            b[row] -= factor * bc;
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Some(())
}

/// The synchronous generator benchmark: sampling period 0.1, control
/// weight 1e-6, equilibrium refined by Newton so that the stage cost
/// vanishes at `(x*, u*)` to machine precision. No control bounds.
pub fn sync_generator<T: Scalar>(params: &SyncGenParams<T>) -> Result<ControlSystem<T>> {
    sync_generator_with(params, T::of(0.1), T::of(1e-6))
}

/// The generator benchmark with a custom sampling period and control
/// weight.
pub fn sync_generator_with<T: Scalar>(
    params: &SyncGenParams<T>,
    sampling_period: T,
    cost_weight: T,
) -> Result<ControlSystem<T>> {
    let (x_star, u_star) = equilibrium_of(params)?;
    ControlSystem::sampled(
        params.field(),
        3,
        1,
        sampling_period,
        x_star,
        u_star,
        cost_weight,
    )
}

/// Scalar linear-quadratic test system: `x+ = a x + b u` with stage cost
/// `q x^2 + r u^2`. The discrete map is the model; nothing is integrated.
/// Finite-horizon value functions have a closed form, which makes this the
/// oracle system for solver validation.
pub fn make_linear_scalar<T: Scalar>(a: T, b: T, q: T, r: T) -> Result<ControlSystem<T>> {
    if b == T::zero() {
        return Err(Error::InvalidInput {
            what: "b",
            reason: "must be nonzero (uncontrollable otherwise)".into(),
        });
    }
    if !(q > T::zero()) || !(r > T::zero()) {
        return Err(Error::InvalidInput {
            what: "q, r",
            reason: "cost weights must be positive".into(),
        });
    }
    let map: DiscreteMap<T> = Arc::new(move |x: &[T], u: &[T], out: &mut [T]| {
        out[0] = a * x[0] + b * u[0];
    });
    let cost: DiscreteCost<T> = Arc::new(move |x: &[T], u: &[T]| q * x[0] * x[0] + r * u[0] * u[0]);
    ControlSystem::discrete(map, cost, 1, 1, vec![T::zero()], vec![T::zero()])
}
