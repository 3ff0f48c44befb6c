//! Matrix permanents.
//!
//! [`permanent_ryser`] is the production path: Ryser's inclusion-exclusion
//! formula visited in Gray-code order, so each subset differs from the
//! previous one by a single column and the row sums update in `O(n)`.
//! [`permanent_naive`] sums over all `n!` permutations and exists as an
//! independent check.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Largest order accepted by [`permanent_ryser`].
pub const MAX_RYSER_ORDER: usize = 30;
/// Largest order accepted by [`permanent_naive`].
pub const MAX_NAIVE_ORDER: usize = 8;

/// Scalars the permanent routines operate on.
pub trait PermScalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_finite(&self) -> bool;
}

impl PermScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl PermScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

fn check_square<T: PermScalar + nalgebra::Scalar>(a: &DMatrix<T>, cap: usize) -> Result<usize> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "permanent needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n == 0 {
        return Err(invalid("permanent of a 0x0 matrix is not supported"));
    }
    if n > cap {
        return Err(invalid(format!("matrix order {n} exceeds the cap of {cap}")));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(n)
}

/// Permanent of a square complex matrix by Gray-code Ryser.
pub fn permanent_ryser(a: &DMatrix<Complex64>) -> Result<Complex64> {
    ryser_checked(a)
}

/// Permanent of a square real matrix by Gray-code Ryser.
pub fn permanent_ryser_real(a: &DMatrix<f64>) -> Result<f64> {
    ryser_checked(a)
}

fn ryser_checked<T: PermScalar + nalgebra::Scalar>(a: &DMatrix<T>) -> Result<T> {
    let n = check_square(a, MAX_RYSER_ORDER)?;
    // nalgebra is column-major; the kernel wants row-major
    let rows: Vec<T> = a.transpose().as_slice().to_vec();
    let mut scratch = vec![T::zero(); n];
    Ok(ryser_row_major(&rows, n, &mut scratch))
}

/// Ryser kernel on a row-major `n x n` slice. `row_sums` is scratch of length `n`.
///
/// perm(A) = (-1)^n sum_{S ⊆ cols} (-1)^{|S|} prod_i sum_{j in S} a_ij
pub(crate) fn ryser_row_major<T: PermScalar>(a: &[T], n: usize, row_sums: &mut [T]) -> T {
    debug_assert_eq!(a.len(), n * n);
    debug_assert!((1..=MAX_RYSER_ORDER).contains(&n));
    row_sums[..n].fill(T::zero());
    let mut total = T::zero();
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let col = k.trailing_zeros() as usize;
        let bit = 1u64 << col;
        gray ^= bit;
        if gray & bit != 0 {
            for (i, s) in row_sums[..n].iter_mut().enumerate() {
                *s = *s + a[i * n + col];
            }
        } else {
            for (i, s) in row_sums[..n].iter_mut().enumerate() {
                *s = *s - a[i * n + col];
            }
        }
        let mut prod = row_sums[0];
        for &s in &row_sums[1..n] {
            prod = prod * s;
        }
        if gray.count_ones() % 2 == 1 {
            total = total - prod;
        } else {
            total = total + prod;
        }
    }
    if n % 2 == 1 {
        -total
    } else {
        total
    }
}

/// Permanent by direct expansion over all permutations; `n <= 8`.
pub fn permanent_naive(a: &DMatrix<Complex64>) -> Result<Complex64> {
    naive_checked(a)
}

/// Real-valued counterpart of [`permanent_naive`].
pub fn permanent_naive_real(a: &DMatrix<f64>) -> Result<f64> {
    naive_checked(a)
}

fn naive_checked<T: PermScalar + nalgebra::Scalar>(a: &DMatrix<T>) -> Result<T> {
    let n = check_square(a, MAX_NAIVE_ORDER)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut used = vec![false; n];
    Ok(expand(a, 0, &mut perm, &mut used))
}

fn expand<T: PermScalar + nalgebra::Scalar>(
    a: &DMatrix<T>,
    row: usize,
    perm: &mut [usize],
    used: &mut [bool],
) -> T {
    let n = a.nrows();
    if row == n {
        return (0..n).fold(T::one(), |acc, i| acc * a[(i, perm[i])]);
    }
    let mut sum = T::zero();
    for col in 0..n {
        if !used[col] {
            used[col] = true;
            perm[row] = col;
            sum = sum + expand(a, row + 1, perm, used);
            used[col] = false;
        }
    }
    sum
}
