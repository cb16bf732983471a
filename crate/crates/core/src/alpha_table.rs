//! A priori suboptimality degrees for exponentially controllable systems.
//!
//! If stage costs along some control decay like `C * sigma^n` times the
//! minimal initial stage cost, a closed-form worst-case degree
//! `alpha_{N,m}` exists for the receding-horizon scheme that applies `m`
//! of `N` planned controls. These tables answer design-time questions:
//! how short can the prediction horizon be for a given performance bound,
//! and how many controls should be applied per optimization.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Controllability envelope parameters: overshoot `C >= 1`, decay rate
/// `sigma` in `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpoControllability<T> {
    c: T,
    sigma: T,
}

impl<T: Scalar> ExpoControllability<T> {
    pub fn new(c: T, sigma: T) -> Result<Self> {
        if !(c >= T::one()) {
            return Err(Error::InvalidInput {
                what: "C",
                reason: format!("must be at least 1, got {c}"),
            });
        }
        if !(sigma > T::zero() && sigma < T::one()) {
            return Err(Error::InvalidInput {
                what: "sigma",
                reason: format!("must lie in (0, 1), got {sigma}"),
            });
        }
        Ok(Self { c, sigma })
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }
}

/// Partial sums of the controllability envelope:
/// `gamma_i = C (1 - sigma^i) / (1 - sigma)`, nondecreasing in `i` with
/// `gamma_1 = C` and limit `C / (1 - sigma)`.
pub fn gamma<T: Scalar>(i: usize, ec: &ExpoControllability<T>) -> T {
    debug_assert!(i >= 1);
    ec.c * (T::one() - ec.sigma.powi(i as i32)) / (T::one() - ec.sigma)
}

/// Products of `gamma_i` and `gamma_i - 1` over `lo..=hi`, as
/// `(ln prod gamma, ln prod (gamma - 1))`. Everything is positive on the
/// ranges used (`lo >= 2`, `C > 1`), so log space is safe; it is needed
/// because horizon scans go far past where the plain products overflow.
fn log_products<T: Scalar>(lo: usize, hi: usize, ec: &ExpoControllability<T>) -> (T, T) {
    let mut ln_g = T::zero();
    let mut ln_g1 = T::zero();
    for i in lo..=hi {
        let g = gamma(i, ec);
        ln_g += g.ln();
        ln_g1 += (g - T::one()).ln();
    }
    (ln_g, ln_g1)
}

/// `ln(prod gamma - prod (gamma - 1))` from the two log products.
fn ln_diff<T: Scalar>(ln_g: T, ln_g1: T) -> T {
    // prod(gamma - 1) < prod(gamma), so the ratio is in (0, 1).
    ln_g + (-(ln_g1 - ln_g).exp()).ln_1p()
}

/// Worst-case suboptimality degree `alpha_{N,m}` for prediction horizon
/// `N >= 2` and control horizon `m` in `[1, N-1]`:
///
/// ```text
/// alpha = 1 - prod_{i=m+1}^{N} (g_i - 1) * prod_{i=N-m+1}^{N} (g_i - 1)
///             / ( [prod_{i=m+1}^{N} g_i   - prod_{i=m+1}^{N} (g_i - 1)]
///               * [prod_{i=N-m+1}^{N} g_i - prod_{i=N-m+1}^{N} (g_i - 1)] )
/// ```
///
/// At most 1; may be negative for short horizons. `C = 1` is the
/// exactly-controllable edge where the bound degenerates; the degree is 1
/// there by convention (limit value).
pub fn alpha_nm<T: Scalar>(n: usize, m: usize, ec: &ExpoControllability<T>) -> Result<T> {
    if n < 2 {
        return Err(Error::InvalidInput {
            what: "N",
            reason: format!("must be at least 2, got {n}"),
        });
    }
    if m == 0 || m > n - 1 {
        return Err(Error::InvalidInput {
            what: "m",
            reason: format!("must lie in [1, {}], got {m}", n - 1),
        });
    }
    if ec.c == T::one() {
        return Ok(T::one());
    }
    let (ln_g_a, ln_g1_a) = log_products(m + 1, n, ec);
    let (ln_g_b, ln_g1_b) = log_products(n - m + 1, n, ec);
    let ln_ratio = ln_g1_a + ln_g1_b - ln_diff(ln_g_a, ln_g1_a) - ln_diff(ln_g_b, ln_g1_b);
    Ok(T::one() - ln_ratio.exp())
}

/// Control-horizon policy for the minimal-horizon search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HorizonPolicy {
    /// Evaluate `alpha_{N,m}` at a fixed `m` (classical receding horizon
    /// for `m = 1`).
    FixedM(usize),
    /// Evaluate at `m = floor(N/2)`, which maximizes `alpha_{N,m}` over `m`.
    HalfHorizon,
}

/// Scan cap for the minimal-horizon search.
pub const HORIZON_SCAN_CAP: usize = 1000;

/// Smallest prediction horizon `N >= 2` whose degree under `policy`
/// reaches `alpha_bar`.
pub fn min_horizon<T: Scalar>(
    alpha_bar: T,
    policy: HorizonPolicy,
    ec: &ExpoControllability<T>,
) -> Result<usize> {
    if !(alpha_bar > T::zero() && alpha_bar < T::one()) {
        return Err(Error::InvalidInput {
            what: "alpha_bar",
            reason: "must lie in (0, 1)".into(),
        });
    }
    for n in 2..=HORIZON_SCAN_CAP {
        let m = match policy {
            HorizonPolicy::FixedM(m) => {
                if m == 0 || m > n - 1 {
                    continue; // no valid control horizon at this N yet
                }
                m
            }
            HorizonPolicy::HalfHorizon => (n / 2).max(1),
        };
        if alpha_nm(n, m, ec)? >= alpha_bar {
            return Ok(n);
        }
    }
    Err(Error::HorizonNotFound {
        cap: HORIZON_SCAN_CAP,
    })
}
