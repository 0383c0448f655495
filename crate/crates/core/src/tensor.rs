//! Dense row-major `f64` buffers and the handful of kernels the model needs.
//!
//! Matrix products iterate rows independently with a fixed summation order, so
//! the value computed for a row never depends on which other rows share the
//! batch. Eval-mode scoring relies on that to be batch-composition invariant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Work (rows × inner) above which kernels fan out over rows with rayon.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension(format!("shape {shape:?} has a zero extent")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// A `rows × cols` matrix built from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::Dimension("empty row set".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            data,
        })
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing extent for matrices; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "add {:?} += {:?}",
                self.shape, other.shape
            )));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// `y[n] = W x[n] (+ b)` for `x: [N × in]`, `w: [out × in]`.
pub fn matmul_xwt(x: &Tensor, w: &Tensor, bias: Option<&[f64]>) -> Result<Tensor> {
    let (n, k) = (x.rows(), x.cols());
    let (out, k2) = (w.rows(), w.cols());
    if k != k2 {
        return Err(Error::Dimension(format!(
            "input width {k} vs weight width {k2}"
        )));
    }
    if let Some(b) = bias {
        if b.len() != out {
            return Err(Error::Dimension(format!("bias {} vs out {out}", b.len())));
        }
    }
    let mut y = Tensor::zeros(&[n, out]);
    let kernel = |(i, yr): (usize, &mut [f64])| {
        let xr = &x.data[i * k..(i + 1) * k];
        for (o, yo) in yr.iter_mut().enumerate() {
            let mut s = dot(xr, &w.data[o * k..(o + 1) * k]);
            if let Some(b) = bias {
                s += b[o];
            }
            *yo = s;
        }
    };
    if n * k * out >= PAR_THRESHOLD && n > 1 {
        y.data.par_chunks_mut(out).enumerate().for_each(kernel);
    } else {
        y.data.chunks_mut(out).enumerate().for_each(kernel);
    }
    Ok(y)
}

/// `dx[n] = Wᵀ dy[n]` for `dy: [N × out]`, `w: [out × in]`.
pub fn matmul_dy_w(dy: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (n, out) = (dy.rows(), dy.cols());
    if w.rows() != out {
        return Err(Error::Dimension(format!(
            "upstream width {out} vs weight rows {}",
            w.rows()
        )));
    }
    let k = w.cols();
    let mut dx = Tensor::zeros(&[n, k]);
    let kernel = |(i, dxr): (usize, &mut [f64])| {
        let g = &dy.data[i * out..(i + 1) * out];
        for (o, &go) in g.iter().enumerate() {
            if go != 0.0 {
                axpy(go, &w.data[o * k..(o + 1) * k], dxr);
            }
        }
    };
    if n * k * out >= PAR_THRESHOLD && n > 1 {
        dx.data.par_chunks_mut(k).enumerate().for_each(kernel);
    } else {
        dx.data.chunks_mut(k).enumerate().for_each(kernel);
    }
    Ok(dx)
}

/// `dw[o] += Σ_n dy[n][o] x[n]`, accumulated in row order `n = 0..N`.
pub fn accumulate_dyt_x(dy: &Tensor, x: &Tensor, dw: &mut Tensor) -> Result<()> {
    let (n, out) = (dy.rows(), dy.cols());
    let k = x.cols();
    if x.rows() != n || dw.rows() != out || dw.cols() != k {
        return Err(Error::Dimension(format!(
            "weight grad {:?} from dy {:?} and x {:?}",
            dw.shape, dy.shape, x.shape
        )));
    }
    let kernel = |(o, dwr): (usize, &mut [f64])| {
        for i in 0..n {
            let g = dy.data[i * out + o];
            if g != 0.0 {
                axpy(g, &x.data[i * k..(i + 1) * k], dwr);
            }
        }
    };
    if n * k * out >= PAR_THRESHOLD && out > 1 {
        dw.data.par_chunks_mut(k).enumerate().for_each(kernel);
    } else {
        dw.data.chunks_mut(k).enumerate().for_each(kernel);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_product() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::from_vec(&[2, 3], vec![0.0; 5]),
            Err(Error::Dimension(_))
        ));
        assert!(Tensor::from_vec(&[0], vec![]).is_err());
    }

    #[test]
    fn matmul_rows_are_batch_independent() {
        let w = Tensor::from_vec(&[3, 2], vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.5, 0.25]]).unwrap();
        let both = matmul_xwt(&x, &w, Some(&[0.0, 1.0, 2.0])).unwrap();
        let single = matmul_xwt(
            &Tensor::from_rows(&[vec![-1.5, 0.25]]).unwrap(),
            &w,
            Some(&[0.0, 1.0, 2.0]),
        )
        .unwrap();
        assert_eq!(both.row(1), single.row(0));
    }
}
