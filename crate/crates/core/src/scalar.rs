//! Scalar abstraction shared by the numeric kernels.
//!
//! Distances, rank statistics, descriptive moments and the least-squares
//! solver are written against [`Scalar`] so they run on `f32` and `f64`
//! alike. Dataset storage and the learners are fixed to `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; constants in kernels go through here.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Total order for floats with NaN sorted last.
#[inline]
pub fn total_cmp<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or_else(|| match (a.is_nan(), b.is_nan()) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Greater,
        _ => std::cmp::Ordering::Less,
    })
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len())
}

/// Population standard deviation (divides by `n`).
pub fn pop_sd<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(xs.len());
    var.sqrt()
}

/// Sample standard deviation (divides by `n - 1`).
pub fn sample_sd<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(xs.len() - 1);
    var.sqrt()
}

/// Fractional ("average") ranks, 1-based, ascending.
pub fn fractional_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&values[a], &values[b]));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share the mean of ranks i+1..=j
        let avg = T::from_usize_lossy(i + 1 + j) / T::lit(2.0);
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_ranks_average_ties() {
        let r = fractional_ranks(&[0.6f64, 0.6, 0.5, 0.4]);
        assert_eq!(r, vec![3.5, 3.5, 2.0, 1.0]);
        let r32 = fractional_ranks(&[1.0f32, 1.0, 1.0]);
        assert_eq!(r32, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn moments() {
        assert_eq!(mean::<f64>(&[]), 0.0);
        assert!((pop_sd(&[1.0f64, 3.0]) - 1.0).abs() < 1e-15);
        assert!((sample_sd(&[1.0f64, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }
}
