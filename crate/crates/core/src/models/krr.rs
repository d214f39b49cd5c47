//! Kernel ridge regression with linear and RBF kernels.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::SparseVec;
use super::ModelError;
use crate::corpus::test_count;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &SparseVec, b: &SparseVec) -> f64 {
        match *self {
            Kernel::Linear => a.dot(b),
            Kernel::Rbf { gamma } => {
                let d2 = (a.norm_sq() + b.norm_sq() - 2.0 * a.dot(b)).max(0.0);
                (-gamma * d2).exp()
            }
        }
    }
}

/// `n` values spaced evenly in log10 between `lo` and `hi`, inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn alpha_grid() -> Vec<f64> {
    logspace(1e-3, 1e2, 6)
}

pub fn gamma_grid() -> Vec<f64> {
    logspace(1e-3, 10.0, 5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrConfig {
    pub kernel: Kernel,
    pub alpha: f64,
    /// Grid-search kernel, gamma and alpha on an inner validation split.
    pub tune: bool,
    /// Fit on `y - mean(y)` and add the mean back at prediction time.
    pub center: bool,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for KrrConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Rbf { gamma: 1.0 },
            alpha: 1.0,
            tune: false,
            center: true,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub kernel: Kernel,
    pub alpha: f64,
    pub intercept: f64,
    pub dual: Vec<f64>,
    pub train_x: Vec<SparseVec>,
}

impl KrrModel {
    pub fn predict_one(&self, x: &SparseVec) -> f64 {
        self.intercept
            + self
                .train_x
                .iter()
                .zip(&self.dual)
                .map(|(xi, c)| c * self.kernel.eval(xi, x))
                .sum::<f64>()
    }

    pub fn predict(&self, xs: &[SparseVec]) -> Vec<f64> {
        xs.iter().map(|x| self.predict_one(x)).collect()
    }
}

/// Gram matrix `K[i][j] = k(x_i, x_j)`.
pub fn gram(kernel: &Kernel, x: &[SparseVec]) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn fit_fixed(x: &[SparseVec], y: &[f64], kernel: Kernel, alpha: f64, center: bool) -> Result<KrrModel, ModelError> {
    let n = x.len();
    let intercept = if center { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let mut k = gram(&kernel, x);
    for i in 0..n {
        k[(i, i)] += alpha;
    }
    let chol = k.cholesky().ok_or(ModelError::Singular { alpha })?;
    let rhs = DVector::from_iterator(n, y.iter().map(|v| v - intercept));
    let c = chol.solve(&rhs);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Singular { alpha });
    }
    Ok(KrrModel {
        kernel,
        alpha,
        intercept,
        dual: c.iter().copied().collect(),
        train_x: x.to_vec(),
    })
}

/// Solves `(K + alpha I) c = y - intercept` by Cholesky factorization.
pub fn train_krr(x: &[SparseVec], y: &[f64], cfg: &KrrConfig) -> Result<KrrModel, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(ModelError::TooFew(x.len()));
    }
    if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
        return Err(ModelError::InvalidConfig(format!("alpha must be >= 0, got {}", cfg.alpha)));
    }
    let (kernel, alpha) = if cfg.tune { select(x, y, cfg)? } else { (cfg.kernel, cfg.alpha) };
    fit_fixed(x, y, kernel, alpha, cfg.center)
}

/// Candidate `(kernel, alpha)` pairs searched during tuning.
pub fn search_space() -> Vec<(Kernel, f64)> {
    let mut kernels = vec![Kernel::Linear];
    kernels.extend(gamma_grid().into_iter().map(|gamma| Kernel::Rbf { gamma }));
    kernels
        .into_iter()
        .flat_map(|k| alpha_grid().into_iter().map(move |a| (k, a)))
        .collect()
}

fn select(x: &[SparseVec], y: &[f64], cfg: &KrrConfig) -> Result<(Kernel, f64), ModelError> {
    let n_val = test_count(x.len(), cfg.validation_fraction);
    if n_val == 0 || x.len() - n_val < 2 {
        tracing::warn!(n = x.len(), "too few points to tune; using the configured kernel and alpha");
        return Ok((cfg.kernel, cfg.alpha));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let (val, train) = order.split_at(n_val);
    let tx: Vec<SparseVec> = train.iter().map(|&i| x[i].clone()).collect();
    let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let vx: Vec<SparseVec> = val.iter().map(|&i| x[i].clone()).collect();
    let vy: Vec<f64> = val.iter().map(|&i| y[i]).collect();
    let mut best: Option<(f64, Kernel, f64)> = None;
    for (kernel, alpha) in search_space() {
        let Ok(m) = fit_fixed(&tx, &ty, kernel, alpha, cfg.center) else {
            continue;
        };
        let mse = m
            .predict(&vx)
            .iter()
            .zip(&vy)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / vy.len() as f64;
        if best.is_none_or(|(b, _, _)| mse < b) {
            best = Some((mse, kernel, alpha));
        }
    }
    best.map(|(_, k, a)| (k, a))
        .ok_or(ModelError::Singular { alpha: 0.0 })
}
