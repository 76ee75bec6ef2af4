//! Diagonal model: generator spectrum, semigroup factors, fractional-space
//! weights, noise embedding and time grids.
//!
//! Every operator in the model is diagonal in a fixed orthonormal basis
//! `(e_k)`, so the generator `A` is represented by its eigenvalues
//! `lambda_k < w` and the fractional space `E_sigma` by the weights
//! `(w - lambda_k)^sigma`. Negative `sigma` gives extrapolation spaces on the
//! same coefficient sequence.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::sum::compensated;
use crate::{Error, Result};

/// How the eigenvalues were produced. Only the Dirichlet Laplacian carries a
/// closed-form power law, which is what the tail estimates rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumKind {
    /// `lambda_k = -pi^2 k^2` on `(0, 1)` with eigenfunctions `sqrt(2) sin(k pi x)`.
    DirichletLaplacian,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpectrum {
    eigenvalues: Vec<f64>,
    shift: f64,
    kind: SpectrumKind,
}

impl GeneratorSpectrum {
    /// Arbitrary diagonal generator. Requires `lambda_k < shift` for every mode.
    pub fn new(eigenvalues: Vec<f64>, shift: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectrum needs at least one mode"));
        }
        if !shift.is_finite() || shift < 0.0 {
            return Err(Error::invalid(format!("shift must be finite and >= 0, got {shift}")));
        }
        if let Some((k, l)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, l)| !l.is_finite() || **l >= shift)
        {
            return Err(Error::constraint(
                "lambda_k < w",
                format!("mode {} has eigenvalue {l} with shift {shift}", k + 1),
            ));
        }
        Ok(Self {
            eigenvalues,
            shift,
            kind: SpectrumKind::Custom,
        })
    }

    pub fn dirichlet(modes: usize) -> Result<Self> {
        dirichlet_spectrum(modes)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    /// First `modes` modes of the spectrum.
    pub fn truncated(&self, modes: usize) -> Result<Self> {
        if modes == 0 || modes > self.len() {
            return Err(Error::invalid(format!(
                "cannot truncate {} modes to {modes}",
                self.len()
            )));
        }
        Ok(Self {
            eigenvalues: self.eigenvalues[..modes].to_vec(),
            shift: self.shift,
            kind: self.kind,
        })
    }

    /// `(w - lambda_k)^sigma` for every mode.
    pub fn weights(&self, sigma: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|&l| (self.shift - l).powf(sigma))
            .collect()
    }
}

/// Dirichlet Laplacian on `(0, 1)` truncated to `modes` modes.
pub fn dirichlet_spectrum(modes: usize) -> Result<GeneratorSpectrum> {
    if modes == 0 {
        return Err(Error::invalid("Dirichlet spectrum needs K >= 1"));
    }
    let eigenvalues = (1..=modes)
        .map(|k| {
            let k = k as f64;
            -PI * PI * k * k
        })
        .collect();
    Ok(GeneratorSpectrum {
        eigenvalues,
        shift: 0.0,
        kind: SpectrumKind::DirichletLaplacian,
    })
}

/// Eigenfunction `sqrt(2) sin(k pi x)` of the Dirichlet Laplacian (1-based `k`).
pub fn dirichlet_eigenfunction(k: usize, x: f64) -> f64 {
    std::f64::consts::SQRT_2 * (k as f64 * PI * x).sin()
}

/// Scalar factor `e^{lambda t}` of `S(t)` on one mode.
pub fn semigroup_factor(lambda: f64, t: f64) -> f64 {
    (lambda * t).exp()
}

/// Scalar factor of the staircase `S^(n)(t) = S((T/n) ceil(n t / T))`.
///
/// The cell `I_0 = {0}` maps to the identity.
pub fn discretized_semigroup_factor(lambda: f64, t: f64, n: usize, horizon: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("coarse step count must be >= 1"));
    }
    if !(t >= 0.0) || t > horizon * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("time {t} outside [0, {horizon}]")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let cell = ceil_cell(t * n as f64 / horizon);
    Ok(semigroup_factor(lambda, horizon / n as f64 * cell as f64))
}

/// `ceil(x)` for a cell index computed in floating point: values within a few
/// ulps of an integer snap to it, so grid times land in their own cell.
pub(crate) fn ceil_cell(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Number of whole cells of width `T/n` in `(0, t]` and the remaining length.
pub(crate) fn split_cells(t: f64, n: usize, horizon: f64) -> (usize, f64) {
    let dt = horizon / n as f64;
    let x = t / dt;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        (r as usize, 0.0)
    } else {
        let full = x.floor() as usize;
        (full, (t - full as f64 * dt).max(0.0))
    }
}

/// `(w - lambda)^sigma`.
pub fn fractional_weight(lambda: f64, shift: f64, sigma: f64) -> Result<f64> {
    let gap = shift - lambda;
    if !(gap > 0.0) {
        return Err(Error::constraint(
            "w - lambda > 0",
            format!("w = {shift}, lambda = {lambda}"),
        ));
    }
    Ok(gap.powf(sigma))
}

/// Sobolev-type exponent of a fractional space `E_sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceIndex(pub f64);

impl SpaceIndex {
    /// `(sum_k (w - lambda_k)^{2 sigma} u_k^2)^{1/2}`.
    pub fn norm(&self, u: &[f64], spec: &GeneratorSpectrum) -> f64 {
        let shift = spec.shift();
        compensated(
            u.iter()
                .zip(spec.eigenvalues())
                .map(|(&x, &l)| (shift - l).powf(2.0 * self.0) * x * x),
        )
        .sqrt()
    }
}

/// Per-mode weights of the embedding `i: H -> E_beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    Uniform(f64),
    PerMode(Vec<f64>),
}

impl Default for Embedding {
    fn default() -> Self {
        Embedding::Uniform(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub embedding: Embedding,
    /// Space index of the ambient space `E`.
    pub ambient: SpaceIndex,
    /// `W` is a Brownian motion in `E_beta`.
    pub smoothness: f64,
}

impl NoiseModel {
    pub fn new(embedding: Embedding, ambient: f64, smoothness: f64) -> Result<Self> {
        if !(smoothness >= 0.0) {
            return Err(Error::invalid(format!("beta must be >= 0, got {smoothness}")));
        }
        match &embedding {
            Embedding::Uniform(c) if !(*c >= 0.0) => {
                return Err(Error::invalid("embedding weights must be nonnegative"))
            }
            Embedding::PerMode(v) if v.iter().any(|c| !(*c >= 0.0)) => {
                return Err(Error::invalid("embedding weights must be nonnegative"))
            }
            _ => {}
        }
        Ok(Self {
            embedding,
            ambient: SpaceIndex(ambient),
            smoothness,
        })
    }

    /// Space-time white noise for the heat equation: `iota = 1`, `E = E_{sigma_E}`.
    pub fn white(ambient: f64) -> Self {
        Self {
            embedding: Embedding::Uniform(1.0),
            ambient: SpaceIndex(ambient),
            smoothness: 0.0,
        }
    }

    /// Embedding weight of mode `k` (0-based). Per-mode lists shorter than the
    /// spectrum are zero-extended.
    pub fn iota(&self, k: usize) -> f64 {
        match &self.embedding {
            Embedding::Uniform(c) => *c,
            Embedding::PerMode(v) => v.get(k).copied().unwrap_or(0.0),
        }
    }

    pub(crate) fn uniform_weight(&self) -> Option<f64> {
        match self.embedding {
            Embedding::Uniform(c) => Some(c),
            Embedding::PerMode(_) => None,
        }
    }
}

/// Truncation tail of a mode sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// Upper bound on the omitted modes `k > K`.
    Bound(f64),
    /// The untruncated series diverges; `exponent` is its power in `k`.
    Divergent { exponent: f64 },
    /// No closed-form weight model; the truncation level is the user's call.
    Unknown,
}

impl Tail {
    pub fn bound(&self) -> Option<f64> {
        match self {
            Tail::Bound(b) => Some(*b),
            _ => None,
        }
    }
}

/// Integral-comparison tail of `sum_{k > K} c^2 (pi^2 k^2)^{a}` for the
/// Dirichlet power law. Terms are decreasing in `k`, so the tail is bounded by
/// `c^2 pi^{2a} K^{2a+1} / (-2a-1)`.
pub(crate) fn power_law_tail(
    spec: &GeneratorSpectrum,
    noise: &NoiseModel,
    half_power: f64,
    modes: usize,
    scale: f64,
) -> Tail {
    let (SpectrumKind::DirichletLaplacian, Some(c)) = (spec.kind(), noise.uniform_weight()) else {
        return Tail::Unknown;
    };
    let exponent = 2.0 * half_power;
    if exponent >= -1.0 {
        return Tail::Divergent { exponent };
    }
    let k = modes as f64;
    Tail::Bound(scale * c * c * PI.powf(exponent) * k.powf(exponent + 1.0) / (-exponent - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub finite: bool,
    pub partial_sum: f64,
    pub tail: Tail,
}

/// Checks `||i||^2_{gamma(H, E_beta)} = sum_k iota_k^2 (w - lambda_k)^{2(sigma_E + beta)}`
/// over the first `modes` modes and estimates the remainder.
pub fn check_noise_admissible(
    spec: &GeneratorSpectrum,
    noise: &NoiseModel,
    modes: usize,
) -> Result<Admissibility> {
    if modes == 0 || modes > spec.len() {
        return Err(Error::invalid(format!(
            "truncation {modes} outside 1..={}",
            spec.len()
        )));
    }
    let s = noise.ambient.0 + noise.smoothness;
    let w = spec.shift();
    let partial_sum = compensated((0..modes).map(|k| {
        let iota = noise.iota(k);
        iota * iota * (w - spec.eigenvalue(k)).powf(2.0 * s)
    }));
    // (pi^2 k^2)^{2s} = pi^{4s} k^{4s}: power 2s in units of k^2.
    let tail = power_law_tail(spec, noise, 2.0 * s, modes, 1.0);
    Ok(Admissibility {
        finite: !matches!(tail, Tail::Divergent { .. }),
        partial_sum,
        tail,
    })
}

/// Uniform time grid with `fine` steps refining `coarse` steps on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub coarse: usize,
    pub fine: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, coarse: usize, fine: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("final time must be > 0, got {horizon}")));
        }
        if coarse == 0 || fine == 0 {
            return Err(Error::invalid("step counts must be >= 1"));
        }
        if fine % coarse != 0 {
            return Err(Error::constraint(
                "n divides m",
                format!("n = {coarse}, m = {fine}"),
            ));
        }
        Ok(Self {
            horizon,
            coarse,
            fine,
        })
    }

    pub fn refinement(&self) -> usize {
        self.fine / self.coarse
    }

    pub fn fine_step(&self) -> f64 {
        self.horizon / self.fine as f64
    }

    pub fn coarse_step(&self) -> f64 {
        self.horizon / self.coarse as f64
    }

    pub fn coarse_time(&self, j: usize) -> f64 {
        j as f64 * self.horizon / self.coarse as f64
    }

    pub fn fine_time(&self, i: usize) -> f64 {
        i as f64 * self.horizon / self.fine as f64
    }

    pub fn fine_times(&self) -> Vec<f64> {
        (0..=self.fine).map(|i| self.fine_time(i)).collect()
    }
}
