//! Dense row-major tensors and the handful of matrix kernels the score
//! network needs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense row-major array of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::config(format!(
                "shape {:?} expects {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Number of rows when viewed as a matrix (rank-2) or row set.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn hcat(parts: &[&Tensor<T>]) -> Result<Self> {
        let rows = parts
            .first()
            .ok_or_else(|| Error::config("hcat of zero tensors"))?
            .rows();
        let mut cols = 0;
        for p in parts {
            if p.shape.len() != 2 || p.rows() != rows {
                return Err(Error::config("hcat requires matrices with equal row counts"));
            }
            cols += p.cols();
        }
        let mut out = Tensor::zeros(&[rows, cols]);
        for i in 0..rows {
            let dst = out.row_mut(i);
            let mut at = 0;
            for p in parts {
                let src = p.row(i);
                dst[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        Ok(out)
    }
}

fn check_dims<T: Real>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::config(format!("{what} must be a matrix")));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

const PAR_WORK_THRESHOLD: usize = 1 << 16;

/// Rows of `a` handled together in [`gemm_nn`]; raises the flop/byte ratio
/// on the streamed rows of `b`.
const ROW_BLOCK: usize = 4;

/// `a [M,K] x b [K,N] -> [M,N]`.
pub fn gemm_nn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, ka) = check_dims(a, "gemm lhs")?;
    let (kb, n) = check_dims(b, "gemm rhs")?;
    if ka != kb {
        return Err(Error::config(format!(
            "gemm inner dims differ: {ka} vs {kb}"
        )));
    }
    let mut out = Tensor::zeros(&[m, n]);
    let body = |(blk, rows): (usize, &mut [T])| {
        let r0 = blk * ROW_BLOCK;
        let nrows = rows.len() / n;
        for k in 0..ka {
            let br = b.row(k);
            match nrows {
                ROW_BLOCK => {
                    let (a0, a1, a2, a3) = (
                        a.row(r0)[k],
                        a.row(r0 + 1)[k],
                        a.row(r0 + 2)[k],
                        a.row(r0 + 3)[k],
                    );
                    let (c01, c23) = rows.split_at_mut(2 * n);
                    let (c0, c1) = c01.split_at_mut(n);
                    let (c2, c3) = c23.split_at_mut(n);
                    for j in 0..n {
                        c0[j] = c0[j] + a0 * br[j];
                        c1[j] = c1[j] + a1 * br[j];
                        c2[j] = c2[j] + a2 * br[j];
                        c3[j] = c3[j] + a3 * br[j];
                    }
                }
                _ => {
                    for r in 0..nrows {
                        let aik = a.row(r0 + r)[k];
                        let row = &mut rows[r * n..(r + 1) * n];
                        for j in 0..n {
                            row[j] = row[j] + aik * br[j];
                        }
                    }
                }
            }
        }
    };
    if m * n * ka >= PAR_WORK_THRESHOLD {
        out.data
            .par_chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(body);
    } else {
        out.data
            .chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(body);
    }
    Ok(out)
}

/// Transpose of a matrix.
pub fn transpose<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(a.shape().len(), 2);
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..m {
        let row = a.row(i);
        for j in 0..n {
            out.data[j * m + i] = row[j];
        }
    }
    out
}

/// `a [M,K] x b^T` where `b` is stored `[N,K]` -> `[M,N]`.
pub fn gemm_nt<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, ka) = check_dims(a, "gemm lhs")?;
    let (n, kb) = check_dims(b, "gemm rhs")?;
    if ka != kb {
        return Err(Error::config(format!(
            "gemm inner dims differ: {ka} vs {kb}"
        )));
    }
    let mut out = Tensor::zeros(&[m, n]);
    let body = |(i, row): (usize, &mut [T])| {
        let ar = a.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            let br = b.row(j);
            let mut acc = T::zero();
            for k in 0..ka {
                acc = acc + ar[k] * br[k];
            }
            *o = acc;
        }
    };
    if m * n * ka >= PAR_WORK_THRESHOLD {
        out.data.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        out.data.chunks_mut(n).enumerate().for_each(body);
    }
    Ok(out)
}

/// `a^T x b` where `a` is stored `[K,M]`, `b` is `[K,N]` -> `[M,N]`.
pub fn gemm_tn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ka, m) = check_dims(a, "gemm lhs")?;
    let (kb, n) = check_dims(b, "gemm rhs")?;
    if ka != kb {
        return Err(Error::config(format!(
            "gemm inner dims differ: {ka} vs {kb}"
        )));
    }
    let mut out = Tensor::zeros(&[m, n]);
    let body = |(i, row): (usize, &mut [T])| {
        for k in 0..ka {
            let aki = a.data[k * m + i];
            let br = b.row(k);
            for j in 0..n {
                row[j] = row[j] + aki * br[j];
            }
        }
    };
    if m * n * ka >= PAR_WORK_THRESHOLD {
        out.data.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        out.data.chunks_mut(n).enumerate().for_each(body);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![1.0f64; 5]).is_err());
    }

    #[test]
    fn gemm_variants_agree_with_naive() {
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = gemm_nn(&a, &b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);

        // a x b == a x (b^T)^T
        let bt = t(&[2, 3], &[7.0, 9.0, 11.0, 8.0, 10.0, 12.0]);
        let c2 = gemm_nt(&a, &bt).unwrap();
        assert_eq!(c.data(), c2.data());

        // a x b == (a^T)^T x b
        let at = t(&[3, 2], &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let c3 = gemm_tn(&at, &b).unwrap();
        assert_eq!(c.data(), c3.data());
    }

    #[test]
    fn gemm_shape_mismatch_is_config_error() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 2], &[0.0; 4]);
        assert!(gemm_nn(&a, &b).is_err());
    }

    #[test]
    fn hcat_concatenates_columns() {
        let a = t(&[2, 1], &[1.0, 2.0]);
        let b = t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let c = Tensor::hcat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }
}
