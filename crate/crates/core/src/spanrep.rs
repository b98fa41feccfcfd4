//! Orthonormal representation of the span of a tensor's 3-slices.
//!
//! Slices are vectorized in nalgebra's column-major order, so a basis vector
//! reshapes back into an `n1 × n2` matrix with [`Matrix::from_column_slice`].

use nalgebra::{DVector, DVectorView};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor3::Matrix;

/// Spectral gap that truncates the span regardless of the energy rule.
const GAP_RATIO: f64 = 0.1;

pub const DEFAULT_ENERGY_TOL: f64 = 1e-3;

/// Basis and singular spectrum of the vectorized slice stack.
#[derive(Debug, Clone)]
pub struct SpanRep {
    shape: (usize, usize),
    /// `n1·n2 × d`, orthonormal columns.
    basis: Matrix,
    /// Descending singular values belonging to the basis columns.
    spectrum: Vec<f64>,
    /// Every singular value of the slice stack, including discarded ones.
    full_spectrum: Vec<f64>,
}

impl SpanRep {
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn full_spectrum(&self) -> &[f64] {
        &self.full_spectrum
    }

    /// The `j`-th basis vector reshaped to a matrix.
    pub fn basis_matrix(&self, j: usize) -> Matrix {
        let (n1, n2) = self.shape;
        Matrix::from_column_slice(n1, n2, self.basis.column(j).as_slice())
    }

    fn check_shape(&self, m: &Matrix) -> Result<()> {
        if m.shape() != self.shape {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {:?}, span holds {:?} matrices",
                m.shape(),
                self.shape
            )));
        }
        Ok(())
    }

    /// Coordinates of `m` in the basis.
    pub fn coords(&self, m: &Matrix) -> Result<DVector<f64>> {
        self.check_shape(m)?;
        let flat = DVectorView::from_slice(m.as_slice(), m.len());
        Ok(self.basis.tr_mul(&flat))
    }

    /// The matrix with basis coordinates `c`.
    pub fn from_coords(&self, c: &DVector<f64>) -> Matrix {
        let (n1, n2) = self.shape;
        let flat = &self.basis * c;
        Matrix::from_vec(n1, n2, flat.data.into())
    }

    /// Orthogonal projection onto the span, without normalization.
    pub fn project_unnormalized(&self, m: &Matrix) -> Result<Matrix> {
        Ok(self.from_coords(&self.coords(m)?))
    }

    /// Orthogonal projection onto the span, scaled to unit Frobenius norm.
    ///
    /// Fails with [`Error::ZeroProjection`] when `m` is (numerically)
    /// orthogonal to the span.
    pub fn project(&self, m: &Matrix) -> Result<Matrix> {
        let c = self.coords(m)?;
        let norm = c.norm();
        if !(norm > 1e-12 * m.norm()) || !norm.is_finite() {
            return Err(Error::ZeroProjection);
        }
        Ok(self.from_coords(&(c / norm)))
    }

    /// Unnormalized basis coordinates, `N(0, spectrum_j²)` along basis vector
    /// `j` when `weighted`, standard normal otherwise.
    pub fn draw_coords<R: Rng + ?Sized>(&self, rng: &mut R, weighted: bool) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.spectrum.iter().map(|&s| {
                let z: f64 = rng.sample(StandardNormal);
                if weighted {
                    z * s
                } else {
                    z
                }
            }),
        )
    }

    /// Random unit-norm element of the span drawn through [`Self::draw_coords`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        for attempt in 0..100 {
            // zero spectra (a target dimension above the numerical rank) can
            // make the weighted draw vanish; fall back to unit weights
            let c = self.draw_coords(rng, attempt < 50);
            let norm = c.norm();
            if norm > 0.0 && norm.is_finite() {
                return self.from_coords(&(c / norm));
            }
        }
        self.basis_matrix(0)
    }
}

/// Left singular vectors and values of `m`.
///
/// The bidiagonal SVD can lose accuracy on rank-deficient tall matrices, so
/// both orientations are tried and the one that reconstructs `m` best wins.
fn left_singular(m: &Matrix) -> (Matrix, DVector<f64>) {
    let residual = |u: &Matrix, s: &DVector<f64>, vt: &Matrix| {
        (u * Matrix::from_diagonal(s) * vt - m).norm()
    };
    let direct = m.clone().svd(true, true);
    let (u1, vt1) = (direct.u.expect("u requested"), direct.v_t.expect("v_t requested"));
    let r1 = residual(&u1, &direct.singular_values, &vt1);
    let flipped = m.transpose().svd(true, true);
    let (u2t, v2) = (flipped.u.expect("u requested"), flipped.v_t.expect("v_t requested"));
    let u2 = v2.transpose();
    let r2 = residual(&u2, &flipped.singular_values, &u2t.transpose());
    if r2 < r1 {
        (u2, flipped.singular_values)
    } else {
        (u1, direct.singular_values)
    }
}

/// Builds the span representation of `slices`.
///
/// With `target_dim` the leading `target_dim` singular directions are kept.
/// Otherwise the dimension is the smallest `d` holding a `1 − energy_tol`
/// share of the squared spectrum, cut earlier at the first index where the
/// spectrum drops by more than a factor of ten.
pub fn build_span(slices: &[Matrix], target_dim: Option<usize>, energy_tol: f64) -> Result<SpanRep> {
    let first = slices.first().ok_or(Error::Empty("slice list"))?;
    let shape = first.shape();
    if shape.0 == 0 || shape.1 == 0 {
        return Err(Error::Empty("zero-sized slice"));
    }
    if let Some(k) = slices.iter().position(|s| s.shape() != shape) {
        return Err(Error::DimensionMismatch(format!(
            "slice {k} has shape {:?}, expected {shape:?}",
            slices[k].shape()
        )));
    }
    if !(energy_tol > 0.0 && energy_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy_tol must lie in (0, 1), got {energy_tol}"
        )));
    }
    let len = shape.0 * shape.1;
    let max_dim = slices.len().min(len);
    if let Some(t) = target_dim {
        if t == 0 || t > max_dim {
            return Err(Error::InvalidArgument(format!(
                "target dimension {t} outside 1..={max_dim}"
            )));
        }
    }

    let mut stack = Matrix::zeros(len, slices.len());
    for (k, s) in slices.iter().enumerate() {
        stack.column_mut(k).copy_from_slice(s.as_slice());
    }
    if stack.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroNorm);
    }

    let (u, sv) = left_singular(&stack);
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let full_spectrum: Vec<f64> = order.iter().map(|&i| sv[i]).collect();

    let d = match target_dim {
        Some(t) => t,
        None => select_dim(&full_spectrum[..max_dim], energy_tol),
    };

    let mut basis = Matrix::zeros(len, d);
    for (col, &src) in order.iter().take(d).enumerate() {
        basis.set_column(col, &u.column(src));
    }
    Ok(SpanRep {
        shape,
        basis,
        spectrum: full_spectrum[..d].to_vec(),
        full_spectrum,
    })
}

fn select_dim(spectrum: &[f64], energy_tol: f64) -> usize {
    let total: f64 = spectrum.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let mut d = spectrum.len();
    for (j, s) in spectrum.iter().enumerate() {
        acc += s * s;
        if acc >= (1.0 - energy_tol) * total {
            d = j + 1;
            break;
        }
    }
    if let Some(j) = (1..d).find(|&j| spectrum[j] < GAP_RATIO * spectrum[j - 1]) {
        d = j;
    }
    d.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn rank_one(u: &[f64], v: &[f64]) -> Matrix {
        Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    #[test]
    fn identical_rank_one_slices_give_one_dimension() {
        let m = rank_one(&[1.0, 2.0, -1.0], &[0.5, 1.0]);
        let slices = vec![m.clone(), m.scale(2.0), m.scale(-0.5)];
        let v = build_span(&slices, None, DEFAULT_ENERGY_TOL).unwrap();
        assert_eq!(v.dim(), 1);
        let b = v.basis_matrix(0);
        let target = m.normalize();
        let d = (&b - &target).norm().min((&b + &target).norm());
        assert!(d < 1e-12);
    }

    #[test]
    fn energy_rule_and_gap() {
        assert_eq!(select_dim(&[3.0, 2.0, 1.0], 1e-3), 3);
        assert_eq!(select_dim(&[3.0, 2.0, 1e-3, 1e-4], 1e-9), 2);
        assert_eq!(select_dim(&[1.0, 1e-5], 1e-3), 1);
        assert_eq!(select_dim(&[1.0, 0.95, 0.9, 0.85], 0.5), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_span(&[], None, 1e-3), Err(Error::Empty(_))));
        let a = Matrix::identity(2, 2);
        let b = Matrix::identity(2, 3);
        assert!(build_span(&[a.clone(), b], None, 1e-3).is_err());
        assert!(build_span(std::slice::from_ref(&a), Some(2), 1e-3).is_err());
        assert!(build_span(std::slice::from_ref(&a), None, 0.0).is_err());
        assert!(matches!(
            build_span(&[Matrix::zeros(2, 2)], None, 1e-3),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn project_fixed_point_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let slices: Vec<_> = (0..3).map(|_| random_matrix(&mut rng, 4, 5)).collect();
        let v = build_span(&slices, Some(3), 1e-3).unwrap();
        let inside = v.project(&slices[1]).unwrap();
        let again = v.project(&inside).unwrap();
        assert!((&again - &inside).norm() < 1e-12);

        // orthogonal complement direction
        let x = random_matrix(&mut rng, 4, 5);
        let ortho = &x - v.project_unnormalized(&x).unwrap();
        assert!(matches!(v.project(&ortho), Err(Error::ZeroProjection)));
        assert!(v.project(&Matrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn projector_is_idempotent_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let slices: Vec<_> = (0..6).map(|_| random_matrix(&mut rng, 5, 7)).collect();
        let v = build_span(&slices, Some(4), 1e-3).unwrap();
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 5, 7);
            let n = random_matrix(&mut rng, 5, 7);
            let pm = v.project_unnormalized(&m).unwrap();
            let ppm = v.project_unnormalized(&pm).unwrap();
            assert!((&ppm - &pm).norm() < 1e-12 * pm.norm().max(1.0));
            let pn = v.project_unnormalized(&n).unwrap();
            assert!((pm.dot(&n) - m.dot(&pn)).abs() < 1e-10);
            let once = v.project(&m).unwrap();
            let twice = v.project(&once).unwrap();
            assert!((&once - &twice).norm() < 1e-12);
        }
    }

    #[test]
    fn full_dimension_reproduces_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let slices: Vec<_> = (0..4).map(|_| random_matrix(&mut rng, 3, 4)).collect();
        let v = build_span(&slices, Some(4), 1e-3).unwrap();
        let gram = v.basis().tr_mul(v.basis());
        assert!((&gram - Matrix::identity(4, 4)).norm() < 1e-10);
        for s in &slices {
            let r = v.project_unnormalized(s).unwrap();
            assert!((&r - s).norm() < 1e-10);
        }
    }

    #[test]
    fn samples_lie_in_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let slices: Vec<_> = (0..5).map(|_| random_matrix(&mut rng, 4, 6)).collect();
        let v = build_span(&slices, Some(3), 1e-3).unwrap();
        for _ in 0..50 {
            let m = v.sample(&mut rng);
            assert!((m.norm() - 1.0).abs() < 1e-12);
            let p = v.project(&m).unwrap();
            assert!((&p - &m).norm() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_sample_is_basis() {
        let m = rank_one(&[1.0, 1.0], &[2.0, 0.0, 1.0]);
        let v = build_span(&[m.clone(), m.scale(3.0)], None, 1e-3).unwrap();
        let b = v.basis_matrix(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let s = v.sample(&mut rng);
            assert!((&s - &b).norm().min((&s + &b).norm()) < 1e-12);
        }
    }

    #[test]
    fn zero_spectrum_tail_still_samples() {
        let m = rank_one(&[1.0, 0.0], &[0.0, 1.0]);
        let v = build_span(&[m.clone(), m.scale(2.0)], Some(2), 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = v.sample(&mut rng);
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }
}
