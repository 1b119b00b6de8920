use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::Matrix;

/// Kernel function with its hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `exp(-gamma * |a - b|^2)`
    Gaussian { gamma: f64 },
    /// `<a, b>`
    Linear,
}

impl KernelSpec {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian gamma must be positive, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }
}

pub fn kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(match *spec {
        KernelSpec::Gaussian { gamma } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-gamma * d2).exp()
        }
        KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
    })
}

/// Gram matrix between the rows of `x` (N×d) and the rows of `z` (M×d).
///
/// Squared distances use `|x|^2 + |z|^2 - 2<x, z>`, clamped at zero.
pub fn gram(spec: &KernelSpec, x: &Matrix, z: &Matrix) -> Result<Matrix> {
    check_dim(x.ncols(), z.ncols())?;
    spec.validate()?;
    let (n, m) = (x.nrows(), z.nrows());
    if n == 0 || m == 0 {
        return Ok(Matrix::zeros(n, m));
    }
    let mut g = x * z.transpose();
    if let KernelSpec::Gaussian { gamma } = *spec {
        let xn: Vec<f64> = x.row_iter().map(|r| r.norm_squared()).collect();
        let zn: Vec<f64> = z.row_iter().map(|r| r.norm_squared()).collect();
        // column-major storage: column j holds z_j against every x_i
        g.as_mut_slice()
            .par_chunks_mut(n)
            .zip(zn.par_iter())
            .for_each(|(col, &zj)| {
                for (v, &xi) in col.iter_mut().zip(&xn) {
                    let d2 = (xi + zj - 2.0 * *v).max(0.0);
                    *v = (-gamma * d2).exp();
                }
            });
    }
    Ok(g)
}

/// Symmetric Gram matrix of `x` with itself. The Gaussian diagonal is exactly 1.
pub fn gram_sym(spec: &KernelSpec, x: &Matrix) -> Result<Matrix> {
    let mut g = gram(spec, x, x)?;
    let n = g.nrows();
    for i in 0..n {
        if matches!(spec, KernelSpec::Gaussian { .. }) {
            g[(i, i)] = 1.0;
        }
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}
