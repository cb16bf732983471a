//! Small dense vector helpers. State dimensions in this crate are tiny
//! (the benchmark has three states and one control), so plain slices beat
//! a matrix library here.

use crate::scalar::Scalar;

pub fn norm_inf<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub fn norm2<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Squared Euclidean distance between `a` and `b`.
pub fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
}

/// Index of the first non-finite entry, if any.
pub fn first_non_finite<T: Scalar>(v: &[T]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms() {
        let v = [3.0f64, -4.0];
        assert_eq!(norm2(&v), 5.0);
        assert_eq!(norm_inf(&v), 4.0);
        assert_eq!(dist2(&v, &[0.0, 0.0]), 25.0);
    }

    #[test]
    fn finite_scan() {
        assert_eq!(first_non_finite(&[1.0f64, f64::NAN, 2.0]), Some(1));
        assert_eq!(first_non_finite(&[1.0f64, 2.0]), None);
    }
}
