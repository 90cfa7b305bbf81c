//! In-memory n-order complex tensors and the local kernels run inside tasks.
//!
//! Elements are single-precision complex numbers stored row-major. The order
//! of a tensor is bounded only by memory; a tensor with no extents is a
//! scalar holding exactly one element.

use num_complex::{Complex32, Complex64};
use rand::Rng;
use thiserror::Error;

/// Element type of every tensor in the engine.
pub type C32 = Complex32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("data length {len} does not match extents {extents:?} (expected {expected})")]
    LengthMismatch {
        extents: Vec<usize>,
        len: usize,
        expected: usize,
    },
    #[error("extent of dimension {0} must be positive")]
    ZeroExtent(usize),
    #[error("dimension {dim} out of range for tensor of order {order}")]
    DimOutOfRange { dim: usize, order: usize },
    #[error("dimension {0} listed more than once in contraction axes")]
    DuplicateAxis(usize),
    #[error("contracted extents differ: a[{dim_a}] = {extent_a}, b[{dim_b}] = {extent_b}")]
    ExtentMismatch {
        dim_a: usize,
        dim_b: usize,
        extent_a: usize,
        extent_b: usize,
    },
    #[error("shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{0:?} is not a permutation of the tensor dimensions")]
    InvalidPermutation(Vec<usize>),
    #[error("basis value {value} out of range for extent {extent}")]
    ProjectOutOfRange { value: usize, extent: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    extents: Vec<usize>,
    data: Vec<C32>,
}

/// Row-major strides for `extents`.
pub fn strides(extents: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; extents.len()];
    for d in (0..extents.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * extents[d + 1];
    }
    strides
}

/// Advances a row-major multi-index. Returns false once it wraps around.
pub(crate) fn next_index(idx: &mut [usize], extents: &[usize]) -> bool {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < extents[d] {
            return true;
        }
        idx[d] = 0;
    }
    false
}

impl DenseTensor {
    pub fn new(extents: Vec<usize>, data: Vec<C32>) -> Result<Self, TensorError> {
        if let Some(d) = extents.iter().position(|&e| e == 0) {
            return Err(TensorError::ZeroExtent(d));
        }
        let expected: usize = extents.iter().product();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                extents,
                len: data.len(),
                expected,
            });
        }
        Ok(Self { extents, data })
    }

    pub fn zeros(extents: &[usize]) -> Self {
        assert!(extents.iter().all(|&e| e > 0), "extents must be positive");
        let len = extents.iter().product();
        Self {
            extents: extents.to_vec(),
            data: vec![C32::new(0.0, 0.0); len],
        }
    }

    pub fn scalar(value: C32) -> Self {
        Self {
            extents: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(extents: &[usize], mut f: impl FnMut(&[usize]) -> C32) -> Self {
        let mut out = Self::zeros(extents);
        let mut idx = vec![0; extents.len()];
        for slot in out.data.iter_mut() {
            *slot = f(&idx);
            next_index(&mut idx, extents);
        }
        out
    }

    /// Uniformly random real and imaginary parts in [-1, 1).
    pub fn random<R: Rng + ?Sized>(extents: &[usize], rng: &mut R) -> Self {
        Self::from_fn(extents, |_| {
            C32::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn order(&self) -> usize {
        self.extents.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C32> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order());
        idx.iter()
            .zip(&self.extents)
            .fold(0, |acc, (&i, &e)| acc * e + i)
    }

    pub fn get(&self, idx: &[usize]) -> C32 {
        self.data[self.offset(idx)]
    }

    /// Value of a scalar (order-0) tensor, or the first element otherwise.
    pub fn first(&self) -> C32 {
        self.data[0]
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f32::max)
    }

    /// Elementwise `self += x`.
    pub fn add_inplace(&mut self, x: &DenseTensor) -> Result<(), TensorError> {
        if self.extents != x.extents {
            return Err(TensorError::ShapeMismatch {
                lhs: self.extents.clone(),
                rhs: x.extents.clone(),
            });
        }
        for (acc, v) in self.data.iter_mut().zip(&x.data) {
            *acc += v;
        }
        Ok(())
    }

    /// Reorders dimensions so that `result.extents[d] == self.extents[perm[d]]`.
    pub fn transpose(&self, perm: &[usize]) -> Result<DenseTensor, TensorError> {
        let order = self.order();
        let mut seen = vec![false; order];
        if perm.len() != order {
            return Err(TensorError::InvalidPermutation(perm.to_vec()));
        }
        for &p in perm {
            if p >= order || seen[p] {
                return Err(TensorError::InvalidPermutation(perm.to_vec()));
            }
            seen[p] = true;
        }
        if perm.iter().enumerate().all(|(d, &p)| d == p) {
            return Ok(self.clone());
        }

        let extents: Vec<usize> = perm.iter().map(|&p| self.extents[p]).collect();
        let src_strides = strides(&self.extents);
        let step: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let mut data = Vec::with_capacity(self.len());
        let mut idx = vec![0; order];
        let mut src = 0usize;
        loop {
            data.push(self.data[src]);
            // odometer over the result, keeping the source offset in sync
            let mut d = order;
            loop {
                if d == 0 {
                    return Ok(DenseTensor { extents, data });
                }
                d -= 1;
                idx[d] += 1;
                src += step[d];
                if idx[d] < extents[d] {
                    break;
                }
                src -= step[d] * extents[d];
                idx[d] = 0;
            }
        }
    }

    /// Fixes dimension `dim` to basis value `value`, dropping that dimension.
    pub fn project(&self, dim: usize, value: usize) -> Result<DenseTensor, TensorError> {
        if dim >= self.order() {
            return Err(TensorError::DimOutOfRange {
                dim,
                order: self.order(),
            });
        }
        let extent = self.extents[dim];
        if value >= extent {
            return Err(TensorError::ProjectOutOfRange { value, extent });
        }
        let outer: usize = self.extents[..dim].iter().product();
        let inner: usize = self.extents[dim + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * extent + value) * inner;
            data.extend_from_slice(&self.data[start..start + inner]);
        }
        let mut extents = self.extents.clone();
        extents.remove(dim);
        Ok(DenseTensor { extents, data })
    }
}

/// Contracts `a` and `b` over the `(dim_a, dim_b)` pairs in `axes`.
///
/// The result carries the free dimensions of `a` followed by the free
/// dimensions of `b`, each in their original relative order.
pub fn tensordot(
    a: &DenseTensor,
    b: &DenseTensor,
    axes: &[(usize, usize)],
) -> Result<DenseTensor, TensorError> {
    tensordot_threads(a, b, axes, 1)
}

/// [`tensordot`] splitting output rows across up to `threads` OS threads.
pub fn tensordot_threads(
    a: &DenseTensor,
    b: &DenseTensor,
    axes: &[(usize, usize)],
    threads: usize,
) -> Result<DenseTensor, TensorError> {
    let mut used_a = vec![false; a.order()];
    let mut used_b = vec![false; b.order()];
    for &(da, db) in axes {
        if da >= a.order() {
            return Err(TensorError::DimOutOfRange {
                dim: da,
                order: a.order(),
            });
        }
        if db >= b.order() {
            return Err(TensorError::DimOutOfRange {
                dim: db,
                order: b.order(),
            });
        }
        if used_a[da] {
            return Err(TensorError::DuplicateAxis(da));
        }
        if used_b[db] {
            return Err(TensorError::DuplicateAxis(db));
        }
        used_a[da] = true;
        used_b[db] = true;
        if a.extents[da] != b.extents[db] {
            return Err(TensorError::ExtentMismatch {
                dim_a: da,
                dim_b: db,
                extent_a: a.extents[da],
                extent_b: b.extents[db],
            });
        }
    }

    let free_a: Vec<usize> = (0..a.order()).filter(|&d| !used_a[d]).collect();
    let free_b: Vec<usize> = (0..b.order()).filter(|&d| !used_b[d]).collect();
    let perm_a: Vec<usize> = free_a.iter().copied().chain(axes.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = axes.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();

    let rows: usize = free_a.iter().map(|&d| a.extents[d]).product();
    let cols: usize = free_b.iter().map(|&d| b.extents[d]).product();
    let inner: usize = axes.iter().map(|p| a.extents[p.0]).product();

    let at = a.transpose(&perm_a)?;
    let bt = b.transpose(&perm_b)?;
    let data = matmul(&at.data, &bt.data, rows, inner, cols, threads);

    let extents = free_a
        .iter()
        .map(|&d| a.extents[d])
        .chain(free_b.iter().map(|&d| b.extents[d]))
        .collect();
    Ok(DenseTensor { extents, data })
}

/// Row-major (rows x inner) * (inner x cols) with double-precision accumulation.
fn matmul(a: &[C32], b: &[C32], rows: usize, inner: usize, cols: usize, threads: usize) -> Vec<C32> {
    let b64: Vec<Complex64> = b.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect();
    let mut out = vec![C32::new(0.0, 0.0); rows * cols];
    if rows == 0 || cols == 0 {
        return out;
    }

    let kernel = |row0: usize, chunk: &mut [C32]| {
        let mut acc = vec![Complex64::new(0.0, 0.0); cols];
        for (r, out_row) in chunk.chunks_mut(cols).enumerate() {
            let i = row0 + r;
            acc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for k in 0..inner {
                let x = a[i * inner + k];
                let x = Complex64::new(x.re as f64, x.im as f64);
                let b_row = &b64[k * cols..(k + 1) * cols];
                for (z, y) in acc.iter_mut().zip(b_row) {
                    z.re += x.re * y.re - x.im * y.im;
                    z.im += x.re * y.im + x.im * y.re;
                }
            }
            for (o, z) in out_row.iter_mut().zip(&acc) {
                *o = C32::new(z.re as f32, z.im as f32);
            }
        }
    };

    let threads = threads.clamp(1, rows);
    if threads == 1 {
        kernel(0, &mut out);
    } else {
        let rows_per = rows.div_ceil(threads);
        std::thread::scope(|s| {
            for (t, chunk) in out.chunks_mut(rows_per * cols).enumerate() {
                let kernel = &kernel;
                s.spawn(move || kernel(t * rows_per, chunk));
            }
        });
    }
    out
}
