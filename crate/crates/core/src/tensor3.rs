//! Dense degree-3 tensors.
//!
//! Values are stored slice by slice: the third index is outermost, then the
//! first, with the second index varying fastest. Entry `(i, j, k)` lives at
//! `(k * n1 + i) * n2 + j`, which is also the order of the `.t3` text format.
//! All indices in this API are zero-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// A dense real `n1 × n2 × n3` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    /// Wraps `data` laid out in slice order. Every entry must be finite.
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {dims:?}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dims {dims:?} (expected {expected})",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        assert!(dims.iter().all(|&n| n > 0), "zero-sized tensor");
        Self {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        let [n1, n2, n3] = dims;
        for k in 0..n3 {
            for i in 0..n1 {
                for j in 0..n2 {
                    t.data[(k * n1 + i) * n2 + j] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Stacks equally shaped matrices along the third mode.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices.first().ok_or(Error::Empty("slice list"))?;
        let (n1, n2) = first.shape();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::DimensionMismatch(format!(
                    "slice {k} has shape {:?}, expected {:?}",
                    s.shape(),
                    (n1, n2)
                )));
            }
            for i in 0..n1 {
                for j in 0..n2 {
                    data.push(s[(i, j)]);
                }
            }
        }
        Self::new([n1, n2, slices.len()], data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Raw values in slice order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[0] + i) * self.dims[1] + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// Entrywise sum; dimensions must agree.
    pub fn add(&self, other: &Tensor3) -> Result<Self> {
        check_same_dims(self, other)?;
        Ok(Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// The `k`-th 3-slice, the `n1 × n2` matrix with the third index fixed.
    pub fn slice3(&self, k: usize) -> Result<Matrix> {
        let [n1, n2, n3] = self.dims;
        if k >= n3 {
            return Err(Error::IndexOutOfRange {
                mode: 3,
                index: k,
                size: n3,
            });
        }
        let start = k * n1 * n2;
        Ok(Matrix::from_row_slice(
            n1,
            n2,
            &self.data[start..start + n1 * n2],
        ))
    }

    pub fn slices(&self) -> Vec<Matrix> {
        (0..self.dims[2])
            .map(|k| self.slice3(k).expect("index in range"))
            .collect()
    }

    /// Reorders modes: mode `m` of the result is mode `perm[m]` of `self`.
    ///
    /// `perm` is one-based, so `[3, 2, 1]` swaps the first and third modes.
    pub fn permute_modes(&self, perm: [usize; 3]) -> Result<Self> {
        let p = validate_perm(perm)?;
        let new_dims = [self.dims[p[0]], self.dims[p[1]], self.dims[p[2]]];
        let mut out = Self::zeros(new_dims);
        let mut src = [0usize; 3];
        for c in 0..new_dims[2] {
            for a in 0..new_dims[0] {
                for b in 0..new_dims[1] {
                    src[p[0]] = a;
                    src[p[1]] = b;
                    src[p[2]] = c;
                    out.set(a, b, c, self.get(src[0], src[1], src[2]));
                }
            }
        }
        Ok(out)
    }

    /// Mode-`mode` unfolding (one-based mode).
    ///
    /// Rows run over the chosen mode; columns run over the two remaining modes
    /// in ascending order with the later one varying fastest. The mode-3
    /// unfolding therefore has the row-major vectorized slices as its rows.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        let [n1, n2, n3] = self.dims;
        let m = match mode {
            1 => Matrix::from_fn(n1, n2 * n3, |i, c| self.get(i, c / n3, c % n3)),
            2 => Matrix::from_fn(n2, n1 * n3, |j, c| self.get(c / n3, j, c % n3)),
            3 => Matrix::from_fn(n3, n1 * n2, |k, c| self.get(c / n2, c % n2, k)),
            _ => return Err(Error::InvalidMode(mode)),
        };
        Ok(m)
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &Matrix, mode: usize, dims: [usize; 3]) -> Result<Self> {
        let [n1, n2, n3] = dims;
        let expected = match mode {
            1 => (n1, n2 * n3),
            2 => (n2, n1 * n3),
            3 => (n3, n1 * n2),
            _ => return Err(Error::InvalidMode(mode)),
        };
        if m.shape() != expected {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} unfolding of {dims:?} must be {expected:?}, got {:?}",
                m.shape()
            )));
        }
        Ok(match mode {
            1 => Self::from_fn(dims, |i, j, k| m[(i, j * n3 + k)]),
            2 => Self::from_fn(dims, |i, j, k| m[(j, i * n3 + k)]),
            _ => Self::from_fn(dims, |i, j, k| m[(k, i * n2 + j)]),
        })
    }
}

fn validate_perm(perm: [usize; 3]) -> Result<[usize; 3]> {
    let mut seen = [false; 3];
    let mut p = [0usize; 3];
    for (slot, &m) in perm.iter().enumerate() {
        if !(1..=3).contains(&m) || seen[m - 1] {
            return Err(Error::InvalidPermutation(perm));
        }
        seen[m - 1] = true;
        p[slot] = m - 1;
    }
    Ok(p)
}

fn check_same_dims(a: &Tensor3, b: &Tensor3) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    Ok(())
}

/// The rank-one tensor `u ⊗ v ⊗ w`.
pub fn outer3(u: &[f64], v: &[f64], w: &[f64]) -> Result<Tensor3> {
    if u.is_empty() || v.is_empty() || w.is_empty() {
        return Err(Error::Empty("outer product factor"));
    }
    Tensor3::new(
        [u.len(), v.len(), w.len()],
        w.iter()
            .flat_map(|&wk| u.iter().flat_map(move |&ui| v.iter().map(move |&vj| ui * vj * wk)))
            .collect(),
    )
}

/// `‖a − b‖_F / ‖a‖_F`.
pub fn rel_error(a: &Tensor3, b: &Tensor3) -> Result<f64> {
    check_same_dims(a, b)?;
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let diff = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// One rank-one term `weight · u ⊗ v ⊗ w` with unit-norm components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub weight: f64,
}

impl Factor {
    pub fn component(&self, mode: usize) -> &[f64] {
        match mode {
            1 => &self.u,
            2 => &self.v,
            3 => &self.w,
            _ => panic!("mode must be 1, 2 or 3"),
        }
    }
}

/// A CP decomposition: `rank` factors plus the relative fit error against the
/// tensor it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub rank: usize,
    pub factors: Vec<Factor>,
    pub rel_error: f64,
    /// Simultaneous-SVD form `A_k = U · diag(W[k]) · Vᵀ`, one row per slice,
    /// present when the mode-3 components were not computed independently.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_weights: Option<Vec<Vec<f64>>>,
}

impl Decomposition {
    pub fn empty() -> Self {
        Self {
            rank: 0,
            factors: Vec::new(),
            rel_error: 0.0,
            slice_weights: None,
        }
    }

    pub fn from_factors(factors: Vec<Factor>) -> Self {
        Self {
            rank: factors.len(),
            factors,
            rel_error: 0.0,
            slice_weights: None,
        }
    }

    /// Sets `rel_error` from the residual against `a`. A zero `a` is fitted
    /// exactly by the empty decomposition and gives 0.
    pub fn with_fit(mut self, a: &Tensor3) -> Result<Self> {
        let approx = reconstruct(&self, a.dims())?;
        self.rel_error = if a.frobenius_norm() == 0.0 {
            approx.frobenius_norm()
        } else {
            rel_error(a, &approx)?
        };
        Ok(self)
    }
}

/// Sum of `weight · u ⊗ v ⊗ w` over all factors.
pub fn reconstruct(d: &Decomposition, dims: [usize; 3]) -> Result<Tensor3> {
    let [n1, n2, n3] = dims;
    let mut out = Tensor3::zeros(dims);
    for (idx, f) in d.factors.iter().enumerate() {
        if f.u.len() != n1 || f.v.len() != n2 || f.w.len() != n3 {
            return Err(Error::DimensionMismatch(format!(
                "factor {idx} has lengths ({}, {}, {}), tensor is {dims:?}",
                f.u.len(),
                f.v.len(),
                f.w.len()
            )));
        }
        for k in 0..n3 {
            let wk = f.weight * f.w[k];
            for i in 0..n1 {
                let uiwk = f.u[i] * wk;
                let row = (k * n1 + i) * n2;
                for j in 0..n2 {
                    out.data[row + j] += uiwk * f.v[j];
                }
            }
        }
    }
    Ok(out)
}
