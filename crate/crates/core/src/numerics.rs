//! Dense vectors and matrices, the elementwise nonlinearities of the LSTM,
//! a numerically stable softmax and a central-difference gradient checker.
//!
//! Everything here is generic over [`Scalar`], so the same kernels run in
//! `f32` for training and `f64` for gradient verification.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, Deref, DerefMut, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// Default half-width of the uniform weight initializer.
pub const INIT_RANGE: f64 = 0.08;

/// Real scalar type the model is generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    /// Name stored in checkpoint headers.
    const DTYPE: &'static str;
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector<S> {
    data: Vec<S>,
}

impl<S: Scalar> Vector<S> {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![S::zero(); len],
        }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        Vector { data }
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Vector {
            data: values.iter().map(|&x| S::of(x)).collect(),
        }
    }

    pub fn uniform<R: Rng>(len: usize, range: f64, rng: &mut R) -> Self {
        Vector {
            data: (0..len).map(|_| S::of(rng.gen_range(-range..=range))).collect(),
        }
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }
}

impl<S> Deref for Vector<S> {
    type Target = [S];

    fn deref(&self) -> &[S] {
        &self.data
    }
}

impl<S> DerefMut for Vector<S> {
    fn deref_mut(&mut self) -> &mut [S] {
        &mut self.data
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return dim_err(
                "Matrix::from_vec",
                format!("{} entries for a {rows}x{cols} matrix", data.len()),
            );
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return dim_err("Matrix::from_rows", "ragged rows");
            }
            data.extend(r.iter().map(|&x| S::of(x)));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Entries drawn uniformly from `[-range, range]`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, range: f64, rng: &mut R) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| S::of(rng.gen_range(-range..=range)))
                .collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `out += self · x`
    #[inline]
    pub fn gemv_acc(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · g`
    #[inline]
    pub fn gemv_t_acc(&self, g: &[S], out: &mut [S]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&gi, row) in g.iter().zip(self.data.chunks_exact(self.cols)) {
            if gi == S::zero() {
                continue;
            }
            axpy(gi, row, out);
        }
    }

    /// `self += g ⊗ x`
    #[inline]
    pub fn outer_acc(&mut self, g: &[S], x: &[S]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        let cols = self.cols;
        for (&gi, row) in g.iter().zip(self.data.chunks_exact_mut(cols)) {
            if gi == S::zero() {
                continue;
            }
            axpy(gi, x, row);
        }
    }

    /// Checked matrix-vector product.
    pub fn mul_vec(&self, x: &[S]) -> Result<Vector<S>> {
        if x.len() != self.cols {
            return dim_err(
                "mul_vec",
                format!("matrix {}x{} times vector of length {}", self.rows, self.cols, x.len()),
            );
        }
        let mut out = Vector::zeros(self.rows);
        self.gemv_acc(x, &mut out);
        Ok(out)
    }
}

impl<S> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;

    fn index(&self, (r, c): (usize, usize)) -> &S {
        &self.data[r * self.cols + c]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y += alpha · x`
#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `W·x + U·y`, the shared shape of every LSTM gate pre-activation.
pub fn affine<S: Scalar>(w: &Matrix<S>, x: &[S], u: &Matrix<S>, y: &[S]) -> Result<Vector<S>> {
    if w.cols != x.len() || u.cols != y.len() || w.rows != u.rows {
        return dim_err(
            "affine",
            format!(
                "W is {}x{}, x has {}, U is {}x{}, y has {}",
                w.rows,
                w.cols,
                x.len(),
                u.rows,
                u.cols,
                y.len()
            ),
        );
    }
    let mut out = Vector::zeros(w.rows);
    w.gemv_acc(x, &mut out);
    u.gemv_acc(y, &mut out);
    Ok(out)
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place<S: Scalar>(u: &mut [S]) {
    let max = u.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for x in u.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in u.iter_mut() {
        *x = *x / total;
    }
}

pub fn softmax<S: Scalar>(u: &[S]) -> Result<Vector<S>> {
    if u.is_empty() {
        return Err(Error::Empty("softmax"));
    }
    if !u.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let mut out = u.to_vec();
    softmax_in_place(&mut out);
    Ok(Vector::from_vec(out))
}

#[inline]
pub fn sigm<S: Scalar>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sigm,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Multiply,
    Add,
}

impl Unary {
    #[inline]
    pub fn eval<S: Scalar>(self, z: S) -> S {
        match self {
            Unary::Sigm => sigm(z),
            Unary::Tanh => z.tanh(),
        }
    }

    pub fn apply<S: Scalar>(self, v: &[S]) -> Vector<S> {
        Vector::from_vec(v.iter().map(|&z| self.eval(z)).collect())
    }
}

impl Binary {
    pub fn apply<S: Scalar>(self, a: &[S], b: &[S]) -> Result<Vector<S>> {
        if a.len() != b.len() {
            return dim_err(
                "elementwise",
                format!("operands of length {} and {}", a.len(), b.len()),
            );
        }
        let out = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| match self {
                Binary::Multiply => x * y,
                Binary::Add => x + y,
            })
            .collect();
        Ok(Vector::from_vec(out))
    }
}

/// Compares an analytic gradient against central differences of `f`.
///
/// Returns the largest per-coordinate relative error
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F>(mut f: F, theta: &[f64], analytic: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if theta.len() != analytic.len() {
        return dim_err(
            "grad_check",
            format!("{} parameters but {} gradient entries", theta.len(), analytic.len()),
        );
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut point = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        point[i] = theta[i] + eps;
        let plus = f(&point);
        point[i] = theta[i] - eps;
        let minus = f(&point);
        point[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_examples() {
        let id = Matrix::<f64>::identity(2);
        let zero = Matrix::<f64>::zeros(2, 2);
        let r = affine(&id, &[3.0, 4.0], &zero, &[9.0, 9.0]).unwrap();
        assert_eq!(r.as_slice(), &[3.0, 4.0]);

        let r = affine(&zero, &[1.5, -2.0], &zero, &[7.0, 8.0]).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 0.0]);

        let w = Matrix::<f64>::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let r = affine(&w, &[1.0, 1.0], &id, &[5.0, 6.0]).unwrap();
        assert_eq!(r.as_slice(), &[8.0, 13.0]);
    }

    #[test]
    fn affine_rejects_bad_shapes() {
        let w = Matrix::<f64>::zeros(2, 3);
        let u = Matrix::<f64>::zeros(2, 2);
        let err = affine(&w, &[1.0, 2.0], &u, &[1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("2x3"), "{err}");
        let u3 = Matrix::<f64>::zeros(3, 2);
        assert!(affine(&w, &[1.0, 2.0, 3.0], &u3, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&[0.0f64, 0.0]).unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
        for c in [-1e6, -3.0, 0.0, 42.0, 1e6] {
            let s = softmax(&[c; 4]).unwrap();
            for &p in s.iter() {
                assert!((p - 0.25f64).abs() < 1e-15);
            }
        }
        let s = softmax(&[1.0f64.ln(), 3.0f64.ln()]).unwrap();
        assert!((s[0] - 0.25).abs() < 1e-15);
        assert!((s[1] - 0.75).abs() < 1e-15);
        assert!(matches!(softmax::<f64>(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(Unary::Sigm.eval(0.0f64), 0.5);
        assert_eq!(Unary::Tanh.eval(0.0f64), 0.0);
        let p = Binary::Multiply.apply(&[2.0f64, 3.0], &[4.0, 5.0]).unwrap();
        assert_eq!(p.as_slice(), &[8.0, 15.0]);
        let s = Binary::Add.apply(&[2.0f64, 3.0], &[4.0, 5.0]).unwrap();
        assert_eq!(s.as_slice(), &[6.0, 8.0]);
        assert!(Binary::Add.apply(&[1.0f64], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn grad_check_quadratic_and_constant() {
        let theta = [0.3, -1.2, 2.5, 0.0];
        let analytic: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        let err = grad_check(|t| t.iter().map(|x| x * x).sum(), &theta, &analytic, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");

        let err = grad_check(|_| 7.0, &theta, &[0.0; 4], 1e-5).unwrap();
        assert_eq!(err, 0.0);

        let bad = grad_check(|_| f64::NAN, &theta, &[0.0; 4], 1e-5);
        assert!(matches!(bad, Err(Error::NonFinite(_))));
    }

    #[test]
    fn grad_check_nonlinearities_and_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let theta: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();

        // Σ sigm(θ_i)
        let analytic: Vec<f64> = theta.iter().map(|&t| sigm(t) * (1.0 - sigm(t))).collect();
        let err = grad_check(|t| t.iter().map(|&x| sigm(x)).sum(), &theta, &analytic, 1e-5).unwrap();
        assert!(err < 1e-6, "sigm {err}");

        // Σ tanh(θ_i)
        let analytic: Vec<f64> = theta.iter().map(|&t| 1.0 - t.tanh().powi(2)).collect();
        let err = grad_check(|t| t.iter().map(|x| x.tanh()).sum(), &theta, &analytic, 1e-5).unwrap();
        assert!(err < 1e-6, "tanh {err}");

        // log softmax(θ)[2]
        let p = softmax(&theta).unwrap();
        let analytic: Vec<f64> = (0..theta.len())
            .map(|i| if i == 2 { 1.0 - p[i] } else { -p[i] })
            .collect();
        let err = grad_check(|t| softmax(t).unwrap()[2].ln(), &theta, &analytic, 1e-5).unwrap();
        assert!(err < 1e-6, "softmax {err}");

        // c · (W x) with respect to x
        let w = Matrix::<f64>::uniform(3, 5, 1.0, &mut rng);
        let c = [0.5, -1.0, 2.0];
        let mut analytic = vec![0.0; 5];
        w.gemv_t_acc(&c, &mut analytic);
        let err = grad_check(|t| dot(&c, &w.mul_vec(t).unwrap()), &theta, &analytic, 1e-5).unwrap();
        assert!(err < 1e-6, "gemv {err}");

        // Σ (θ ⊙ θ) via the Binary kernel
        let analytic: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        let err = grad_check(
            |t| Binary::Multiply.apply(t, t).unwrap().sum(),
            &theta,
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "multiply {err}");
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            u in prop::collection::vec(-50.0f64..50.0, 1..12),
            c in -1e3f64..1e3,
        ) {
            let p = softmax(&u).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-6);
            let shifted: Vec<f64> = u.iter().map(|x| x + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(q.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn affine_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Matrix::<f64>::uniform(4, 3, 1.0, &mut rng);
            let zero = Matrix::<f64>::zeros(4, 1);
            let x = Vector::<f64>::uniform(3, 1.0, &mut rng);
            let y = Vector::<f64>::uniform(3, 1.0, &mut rng);
            let combo: Vec<f64> = x.iter().zip(y.iter()).map(|(p, q)| a * p + b * q).collect();
            let lhs = affine(&w, &combo, &zero, &[0.0]).unwrap();
            let fx = affine(&w, &x, &zero, &[0.0]).unwrap();
            let fy = affine(&w, &y, &zero, &[0.0]).unwrap();
            for i in 0..4 {
                prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
            }
        }
    }
}
