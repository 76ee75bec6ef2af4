//! Exactly coupled sample paths on a shared fine grid.
//!
//! For each mode and fine cell `(t_{i-1}, t_i]` a [`FinePath`] stores the
//! Brownian increment `db_i` and the stochastic-convolution increment
//! `eta_i = int e^{lambda (t_i - s)} dW_k(s)`. The pair is jointly Gaussian,
//! so the exact mild solution, the splitting iterates for every coarse `n`
//! dividing `m` and the interpolated process `U^(n)` are all functions of the
//! same draws and their differences carry no reference-solution bias.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::rng::{Domain, StreamKey};
use crate::spectral::{GeneratorSpectrum, GridSpec, NoiseModel};
use crate::{Error, Result};

/// Covariance `[[delta, c], [c, v]]` of `(db, eta)` over one fine step with
/// `c = (e^{lambda delta} - 1)/lambda` and `v = (e^{2 lambda delta} - 1)/(2 lambda)`.
pub fn coupled_step_cov(lambda: f64, delta: f64) -> [[f64; 2]; 2] {
    let (c, v) = if lambda == 0.0 {
        (delta, delta)
    } else {
        let x = lambda * delta;
        (delta * x.exp_m1() / x, delta * (2.0 * x).exp_m1() / (2.0 * x))
    };
    [[delta, c], [c, v]]
}

/// `v - c^2/delta`, evaluated without cancellation.
fn schur_complement(lambda: f64, delta: f64) -> f64 {
    let x = lambda * delta;
    if x.abs() < 1.0 {
        delta * schur_series(x)
    } else {
        let [[_, c], [_, v]] = coupled_step_cov(lambda, delta);
        v - c * c / delta
    }
}

/// `(e^{2x}-1)/(2x) - ((e^x-1)/x)^2 = sum_k a_k x^k`,
/// `a_k = 2^k/(k+1)! - sum_{i+j=k} 1/((i+1)!(j+1)!)`; starts at `x^2/12`.
fn schur_series(x: f64) -> f64 {
    const TERMS: usize = 30;
    // inv[i] = 1/(i+1)!
    let mut inv = [0.0f64; TERMS + 1];
    inv[0] = 1.0;
    for i in 1..=TERMS {
        inv[i] = inv[i - 1] / (i + 1) as f64;
    }
    let mut sum = 0.0;
    let mut xp = x * x;
    let mut two_k = 4.0;
    for k in 2..TERMS {
        let conv: f64 = (0..=k).map(|i| inv[i] * inv[k - i]).sum();
        sum += (two_k * inv[k] - conv) * xp;
        xp *= x;
        two_k *= 2.0;
    }
    sum
}

/// Lower-triangular factor of [`coupled_step_cov`]: `db = sqrt(delta) z1`,
/// `eta = (c/sqrt(delta)) z1 + sqrt(schur) z2`.
#[derive(Debug, Clone, Copy)]
pub struct StepFactor {
    pub sd_increment: f64,
    pub loading: f64,
    pub sd_residual: f64,
}

impl StepFactor {
    pub fn new(lambda: f64, delta: f64) -> Self {
        let [[_, c], _] = coupled_step_cov(lambda, delta);
        let sd = delta.sqrt();
        let schur = if lambda == 0.0 {
            0.0
        } else {
            let s = schur_complement(lambda, delta);
            if s < 0.0 {
                log::warn!("negative Schur complement {s:e} for lambda={lambda}, delta={delta}; clamped");
                0.0
            } else {
                s
            }
        };
        Self {
            sd_increment: sd,
            loading: c / sd,
            sd_residual: schur.sqrt(),
        }
    }

    #[inline]
    pub fn apply(&self, z: (f64, f64)) -> (f64, f64) {
        let db = self.sd_increment * z.0;
        (db, self.loading * z.0 + self.sd_residual * z.1)
    }
}

/// Coupled increments for all modes of one sample path. Embedding weights are
/// already applied, so `increments[k]` are increments of the `k`-th
/// coordinate of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePath {
    pub key: StreamKey,
    pub horizon: f64,
    pub steps: usize,
    pub eigenvalues: Vec<f64>,
    /// `increments[k][i]` is the increment over fine cell `i + 1`.
    pub increments: Vec<Vec<f64>>,
    pub convolutions: Vec<Vec<f64>>,
}

impl FinePath {
    pub fn modes(&self) -> usize {
        self.increments.len()
    }

    pub fn fine_step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    fn refinement(&self, n: usize) -> Result<usize> {
        if n == 0 || self.steps % n != 0 {
            return Err(Error::constraint(
                "n divides m",
                format!("n = {n}, m = {}", self.steps),
            ));
        }
        Ok(self.steps / n)
    }

    /// Sums of the fine increments of mode `k` over the `n` coarse cells.
    pub fn coarse_increments(&self, k: usize, n: usize) -> Result<Vec<f64>> {
        let r = self.refinement(n)?;
        Ok(self.increments[k].chunks(r).map(|c| c.iter().sum()).collect())
    }

    const MAGIC: &'static [u8; 8] = b"SPLTFINE";

    /// Binary dump: magic, `u32` version, seed, sample, domain (`u64` each),
    /// horizon (`f64`), steps and modes (`u64`), then per mode the
    /// eigenvalue followed by `steps` increments and `steps` convolution
    /// increments, all little-endian.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&self.key.seed.to_le_bytes())?;
        w.write_all(&self.key.sample.to_le_bytes())?;
        w.write_all(&(self.key.domain as u64).to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&(self.steps as u64).to_le_bytes())?;
        w.write_all(&(self.modes() as u64).to_le_bytes())?;
        for k in 0..self.modes() {
            w.write_all(&self.eigenvalues[k].to_le_bytes())?;
            for x in self.increments[k].iter().chain(&self.convolutions[k]) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::invalid("not a fine-path dump"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 1 {
            return Err(Error::invalid("unsupported fine-path dump version"));
        }
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let sample = u64::from_le_bytes(next(&mut r)?);
        let domain = match u64::from_le_bytes(next(&mut r)?) {
            1 => Domain::FinePath,
            2 => Domain::Counterexample,
            3 => Domain::Diagnostics,
            d => return Err(Error::invalid(format!("unknown stream domain {d}"))),
        };
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let modes = u64::from_le_bytes(next(&mut r)?) as usize;
        let mut eigenvalues = Vec::with_capacity(modes);
        let mut increments = Vec::with_capacity(modes);
        let mut convolutions = Vec::with_capacity(modes);
        for _ in 0..modes {
            eigenvalues.push(f64::from_le_bytes(next(&mut r)?));
            let mut read_vec = || -> Result<Vec<f64>> {
                (0..steps)
                    .map(|_| Ok(f64::from_le_bytes(next(&mut r)?)))
                    .collect()
            };
            increments.push(read_vec()?);
            convolutions.push(read_vec()?);
        }
        Ok(Self {
            key: StreamKey::new(seed, sample, domain),
            horizon,
            steps,
            eigenvalues,
            increments,
            convolutions,
        })
    }
}

/// Draws a coupled fine path. Mode `k` uses ChaCha stream `k` and step `i`
/// uses word position `4 i`, so the result depends only on `(key, k, i)`.
pub fn sample_fine_path(
    spec: &GeneratorSpectrum,
    noise: &NoiseModel,
    grid: &GridSpec,
    key: StreamKey,
) -> FinePath {
    let m = grid.fine;
    let delta = grid.fine_step();
    let (increments, convolutions): (Vec<_>, Vec<_>) = spec
        .eigenvalues()
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let factor = StepFactor::new(lambda, delta);
            let iota = noise.iota(k);
            let mut stream = key.normals(k as u64, 0);
            let mut db = Vec::with_capacity(m);
            let mut eta = Vec::with_capacity(m);
            for _ in 0..m {
                let (b, e) = factor.apply(stream.next_pair());
                db.push(iota * b);
                eta.push(if lambda == 0.0 { iota * b } else { iota * e });
            }
            (db, eta)
        })
        .unzip();
    FinePath {
        key,
        horizon: grid.horizon,
        steps: m,
        eigenvalues: spec.eigenvalues().to_vec(),
        increments,
        convolutions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridTag {
    Fine { steps: usize },
    Coarse { steps: usize },
}

/// Solution coefficients per mode at the grid times `0, dt, ..., T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPath {
    pub grid: GridTag,
    pub horizon: f64,
    /// `values[k][i]` is mode `k` at grid index `i`; `values[k][0] = 0`.
    pub values: Vec<Vec<f64>>,
}

impl CoefficientPath {
    pub fn modes(&self) -> usize {
        self.values.len()
    }

    pub fn steps(&self) -> usize {
        match self.grid {
            GridTag::Fine { steps } | GridTag::Coarse { steps } => steps,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let s = self.steps();
        (0..=s).map(|i| i as f64 * self.horizon / s as f64).collect()
    }

    /// Coefficient vector at grid index `i`.
    pub fn state(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    /// Coefficient vectors at every grid index.
    pub fn states(&self) -> Vec<Vec<f64>> {
        (0..=self.steps()).map(|i| self.state(i)).collect()
    }

    /// `self - other`, mode by mode. Both paths must share a grid.
    pub fn difference(&self, other: &CoefficientPath) -> Result<CoefficientPath> {
        if self.grid != other.grid || self.modes() != other.modes() {
            return Err(Error::invalid("paths live on different grids"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(CoefficientPath {
            grid: self.grid,
            horizon: self.horizon,
            values,
        })
    }
}

/// Exact mild solution on the fine grid: `u_i = e^{lambda delta} u_{i-1} + eta_i`.
pub fn exact_path(path: &FinePath) -> CoefficientPath {
    let delta = path.fine_step();
    let values = path
        .eigenvalues
        .par_iter()
        .zip(&path.convolutions)
        .map(|(&lambda, eta)| {
            let decay = (lambda * delta).exp();
            let mut u = Vec::with_capacity(eta.len() + 1);
            let mut x = 0.0;
            u.push(x);
            for &e in eta {
                x = decay * x + e;
                u.push(x);
            }
            u
        })
        .collect();
    CoefficientPath {
        grid: GridTag::Fine { steps: path.steps },
        horizon: path.horizon,
        values,
    }
}

/// Splitting iterates `v_j = e^{lambda dt} (v_{j-1} + dB_j)` on the coarse grid.
pub fn splitting_path(path: &FinePath, n: usize) -> Result<CoefficientPath> {
    let r = path.refinement(n)?;
    let dt = path.horizon / n as f64;
    let values = path
        .eigenvalues
        .par_iter()
        .zip(&path.increments)
        .map(|(&lambda, db)| {
            let decay = (lambda * dt).exp();
            let mut v = Vec::with_capacity(n + 1);
            let mut x = 0.0;
            v.push(x);
            for block in db.chunks(r) {
                x = decay * (x + block.iter().sum::<f64>());
                v.push(x);
            }
            v
        })
        .collect();
    Ok(CoefficientPath {
        grid: GridTag::Coarse { steps: n },
        horizon: path.horizon,
        values,
    })
}

/// `U^(n)(i delta) = sum_{q<i} e^{lambda dt (floor(q/R) + 1)} db_{i-q}` on the
/// fine grid.
///
/// At fine index `i` the coarse lag cells are the coarse grid shifted by
/// `i mod R` fine steps, which gives the recursion
/// `X_i = e^{lambda dt} (X_{i-R} + W(t_i) - W(t_{i-R}))` with zero history;
/// total cost is `O(m)` per mode.
pub fn discretized_path(path: &FinePath, n: usize) -> Result<CoefficientPath> {
    let r = path.refinement(n)?;
    let dt = path.horizon / n as f64;
    let m = path.steps;
    let values = path
        .eigenvalues
        .par_iter()
        .zip(&path.increments)
        .map(|(&lambda, db)| {
            let decay = (lambda * dt).exp();
            let mut w = Vec::with_capacity(m + 1);
            let mut acc = 0.0;
            w.push(acc);
            for &x in db {
                acc += x;
                w.push(acc);
            }
            let mut out = vec![0.0; m + 1];
            for i in 1..=m {
                out[i] = if i < r {
                    decay * w[i]
                } else {
                    decay * (out[i - r] + (w[i] - w[i - r]))
                };
            }
            out
        })
        .collect();
    Ok(CoefficientPath {
        grid: GridTag::Fine { steps: m },
        horizon: path.horizon,
        values,
    })
}
