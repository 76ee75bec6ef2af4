//! Norms of states and paths, and Monte Carlo moment estimates.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::spectral::{GeneratorSpectrum, SpaceIndex};
use crate::sum::CompensatedSum;
use crate::{Error, Result};

/// `(sum_k (w - lambda_k)^{2 sigma} u_k^2)^{1/2}`.
pub fn sobolev_norm(u: &[f64], spec: &GeneratorSpectrum, sigma: f64) -> f64 {
    SpaceIndex(sigma).norm(u, spec)
}

/// Which index pairs enter a discrete Holder seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderPolicy {
    AllPairs,
    /// Pairs `(i, i + g)` with `g` a power of two.
    DyadicGaps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderSpec {
    pub exponent: f64,
    pub policy: HolderPolicy,
}

impl HolderSpec {
    pub fn new(exponent: f64, policy: HolderPolicy) -> Result<Self> {
        if !(0.0..1.0).contains(&exponent) {
            return Err(Error::invalid(format!(
                "Holder exponent must lie in [0, 1), got {exponent}"
            )));
        }
        Ok(Self { exponent, policy })
    }

    fn gaps(&self, len: usize) -> Vec<usize> {
        match self.policy {
            HolderPolicy::AllPairs => (1..len).collect(),
            HolderPolicy::DyadicGaps => std::iter::successors(Some(1usize), |g| Some(g * 2))
                .take_while(|&g| g < len)
                .collect(),
        }
    }
}

fn check_series(len: usize, times: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::invalid("Holder norm needs at least two points"));
    }
    if len != times {
        return Err(Error::invalid(format!(
            "{len} values but {times} time points"
        )));
    }
    Ok(())
}

/// `max over selected pairs i < j of norm(v_j - v_i) / (t_j - t_i)^gamma`.
pub fn holder_seminorm<F>(values: &[Vec<f64>], times: &[f64], spec: HolderSpec, norm: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_series(values.len(), times.len())?;
    let mut diff = vec![0.0; values[0].len()];
    let mut best = 0.0f64;
    for g in spec.gaps(values.len()) {
        for i in 0..values.len() - g {
            let (a, b) = (&values[i], &values[i + g]);
            for ((d, x), y) in diff.iter_mut().zip(a).zip(b) {
                *d = y - x;
            }
            let q = norm(&diff) / (times[i + g] - times[i]).powf(spec.exponent);
            best = best.max(q);
        }
    }
    Ok(best)
}

/// `sup_i norm(v_i) + holder_seminorm`.
pub fn c_gamma_norm<F>(values: &[Vec<f64>], times: &[f64], spec: HolderSpec, norm: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let semi = holder_seminorm(values, times, spec, &norm)?;
    let sup = values.iter().map(|v| norm(v)).fold(0.0, f64::max);
    Ok(sup + semi)
}

/// Holder norms of a mode-major path under the weighted Euclidean norm
/// `(sum_k weights_sq[k] u_k^2)^{1/2}`, without materialising states.
///
/// Returns `(sup, seminorm)`; with `sup_only` the seminorm is skipped and
/// reported as 0.
pub fn weighted_path_norms(
    values: &[Vec<f64>],
    weights_sq: &[f64],
    times: &[f64],
    spec: HolderSpec,
    sup_only: bool,
) -> Result<(f64, f64)> {
    let len = values.first().map_or(0, Vec::len);
    check_series(len, times.len())?;
    let mut acc = vec![0.0; len];
    for (v, &w) in values.iter().zip(weights_sq) {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x * x;
        }
    }
    let sup = acc.iter().fold(0.0f64, |s, &x| s.max(x)).sqrt();
    if sup_only {
        return Ok((sup, 0.0));
    }
    let mut best = 0.0f64;
    for g in spec.gaps(len) {
        let pairs = len - g;
        let acc = &mut acc[..pairs];
        acc.fill(0.0);
        for (v, &w) in values.iter().zip(weights_sq) {
            for (a, (x, y)) in acc.iter_mut().zip(v.iter().zip(&v[g..])) {
                let d = y - x;
                *a += w * d * d;
            }
        }
        for (i, &a) in acc.iter().enumerate() {
            best = best.max(a.sqrt() / (times[i + g] - times[i]).powf(spec.exponent));
        }
    }
    Ok((sup, best))
}

/// Evaluates `u(x_i) = sum_k u_k sqrt(2) sin(k pi x_i)` on `x_i = i/P`,
/// `i = 0..=P`, with one FFT of length `2P`. Modes `k >= P` are folded onto
/// their aliases on the grid, so the result is exact for any `K`.
pub struct SpatialGrid {
    points: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialGrid").field("points", &self.points).finish()
    }
}

impl SpatialGrid {
    pub fn new(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::invalid("spatial grid needs P >= 2"));
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * points);
        Ok(Self { points, fft })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.points).map(|i| i as f64 / self.points as f64).collect()
    }

    /// Field values at the `P + 1` nodes; `buf` is scratch of any size.
    pub fn field_into(&self, u: &[f64], buf: &mut Vec<Complex<f64>>, out: &mut Vec<f64>) {
        let p = self.points;
        let period = 2 * p;
        buf.clear();
        buf.resize(period, Complex::new(0.0, 0.0));
        for (idx, &c) in u.iter().enumerate() {
            let r = (idx + 1) % period;
            if r == 0 || r == p {
                continue;
            }
            if r < p {
                buf[r].re += c;
            } else {
                buf[period - r].re -= c;
            }
        }
        self.fft.process(buf);
        // forward FFT: y_i = sum_k c_k e^{-i pi k i / P}, so sin sums are -Im.
        out.clear();
        out.push(0.0);
        out.extend((1..p).map(|i| -std::f64::consts::SQRT_2 * buf[i].im));
        out.push(0.0);
    }

    pub fn field(&self, u: &[f64]) -> Vec<f64> {
        let mut buf = Vec::new();
        let mut out = Vec::new();
        self.field_into(u, &mut buf, &mut out);
        out
    }
}

/// Convenience wrapper around [`SpatialGrid::field`].
pub fn spatial_field(u: &[f64], points: usize) -> Result<Vec<f64>> {
    Ok(SpatialGrid::new(points)?.field(u))
}

/// `sup_i |v_i| + max over pairs |v_j - v_i| / |x_j - x_i|^{exponent}` on the
/// uniform grid `x_i = i/(len - 1)`.
pub fn space_holder_norm(values: &[f64], exponent: f64, policy: HolderPolicy) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("empty spatial grid"));
    }
    if !(0.0..1.0).contains(&exponent) {
        return Err(Error::invalid(format!(
            "space Holder exponent must lie in [0, 1), got {exponent}"
        )));
    }
    let sup = values.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if values.len() == 1 {
        return Ok(sup);
    }
    let h = 1.0 / (values.len() - 1) as f64;
    let spec = HolderSpec { exponent, policy };
    let mut best = 0.0f64;
    for g in spec.gaps(values.len()) {
        let scale = (g as f64 * h).powf(-exponent);
        let osc = values
            .iter()
            .zip(&values[g..])
            .fold(0.0f64, |s, (a, b)| s.max((b - a).abs()));
        best = best.max(osc * scale);
    }
    Ok(sup + best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub value: f64,
    pub std_error: f64,
    #[serde(rename = "M")]
    pub samples: usize,
}

impl MomentEstimate {
    /// Normal-approximation interval `value +- z std_error`, floored at 0.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        ((self.value - z * self.std_error).max(0.0), self.value + z * self.std_error)
    }
}

/// Sample mean and its standard error.
pub fn mean_and_se(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let n = samples.len() as f64;
    let mut s = CompensatedSum::default();
    samples.iter().for_each(|&x| s.add(x));
    let mean = s.value() / n;
    let mut ss = CompensatedSum::default();
    samples.iter().for_each(|&x| ss.add((x - mean) * (x - mean)));
    let var = ss.value() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// `(mean s^p)^{1/p}` with a delta-method standard error.
pub fn p_moment(samples: &[f64], p: f64) -> Result<MomentEstimate> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("moment order must be >= 1, got {p}")));
    }
    if samples.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::invalid("moment samples must be nonnegative"));
    }
    let powered: Vec<f64> = samples.iter().map(|s| s.powf(p)).collect();
    let (mean, se) = mean_and_se(&powered)?;
    if mean == 0.0 {
        return Ok(MomentEstimate {
            p,
            value: 0.0,
            std_error: 0.0,
            samples: samples.len(),
        });
    }
    let value = mean.powf(1.0 / p);
    Ok(MomentEstimate {
        p,
        value,
        std_error: value / (p * mean) * se,
        samples: samples.len(),
    })
}
