//! Convergence-rate experiments: admissible exponents, deterministic
//! mean-square sweeps, Monte Carlo pathwise sweeps and log-log fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gamma::{error_gamma_norm_sq, weighted_modes};
use crate::norms::{p_moment, space_holder_norm, weighted_path_norms, HolderPolicy, HolderSpec, SpatialGrid};
use crate::path::{discretized_path, exact_path, sample_fine_path};
use crate::rng::{Domain, StreamKey};
use crate::spectral::{GeneratorSpectrum, GridSpec, NoiseModel, SpectrumKind};
use crate::{Error, Result};

/// Normal quantile used for all reported confidence intervals.
pub const Z_CI: f64 = 1.96;

/// Supremum of the rates `theta` with `theta + gamma < 1` and
/// `(alpha - beta + theta)^+ + gamma < 1/2`.
pub fn theta_max(alpha: f64, beta: f64, gamma: f64) -> Result<f64> {
    if alpha < 0.0 || beta < 0.0 || gamma < 0.0 {
        return Err(Error::invalid("alpha, beta and gamma must be >= 0"));
    }
    if gamma >= 0.5 {
        return Err(Error::constraint(
            "(α−β+θ)⁺+γ<1/2",
            format!("gamma = {gamma} leaves no room for theta"),
        ));
    }
    let theta = (1.0 - gamma).min(0.5 - gamma - (alpha - beta));
    if theta <= 0.0 {
        return Err(Error::constraint(
            "(α−β+θ)⁺+γ<1/2",
            format!("alpha - beta + gamma = {} >= 1/2", alpha - beta + gamma),
        ));
    }
    Ok(theta)
}

/// Rate ceiling `1/4 - gamma - delta` for the heat equation in
/// `C^gamma([0,T]; C_0^{2 delta}[0,1])`.
pub fn heat_theta_max(gamma: f64, delta_space: f64) -> Result<f64> {
    check_heat(gamma, delta_space, 0.0)?;
    Ok(0.25 - gamma - delta_space)
}

fn check_heat(gamma: f64, delta_space: f64, theta: f64) -> Result<()> {
    if gamma < 0.0 || delta_space < 0.0 || theta < 0.0 {
        return Err(Error::invalid("gamma, delta and theta must be >= 0"));
    }
    if gamma + delta_space + theta >= 0.25 {
        return Err(Error::constraint(
            "γ+δ+θ<1/4",
            format!("gamma + delta + theta = {}", gamma + delta_space + theta),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted `theta` in `err ~ n^{-theta}`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `log err - fitted`, in input order.
    pub residuals: Vec<f64>,
}

/// Least squares for `log err = -slope log n + intercept`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(n, e)| !(n > 0.0) || !(e > 0.0)) {
        return Err(Error::invalid("rate fit needs positive n and error"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct n"));
    }
    let b = sxy / sxx;
    let intercept = my - b * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + b * x)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(RateFit {
        slope: -b,
        intercept,
        r2,
        residuals,
    })
}

/// How the error path is measured at each time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ErrorNorm {
    /// The spectral norm of `E_{sigma_E + alpha}`.
    Spectral,
    /// The reconstructed field in `C_0^{2 delta}[0,1]` on `points + 1` nodes;
    /// `delta_space = 0` is the sup-norm.
    Spatial { points: usize, delta_space: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub spec: GeneratorSpectrum,
    pub noise: NoiseModel,
    pub horizon: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    pub n_grid: Vec<usize>,
    pub fine: usize,
    pub samples: usize,
    pub seed: u64,
    pub norm: ErrorNorm,
    pub policy: HolderPolicy,
    /// Measure only `sup_t ||e(t)||`, dropping the time-Holder seminorm.
    pub sup_only: bool,
}

impl SweepConfig {
    /// Largest admissible rate for the configured error norm.
    pub fn theta_max(&self) -> Result<f64> {
        match self.norm {
            ErrorNorm::Spectral => theta_max(self.alpha, self.noise.smoothness, self.gamma),
            ErrorNorm::Spatial { delta_space, .. } => heat_theta_max(self.gamma, delta_space),
        }
    }

    fn validate(&self, pathwise: bool) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("T must be > 0"));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::invalid("n grid must be nonempty with n >= 1"));
        }
        if pathwise {
            for &n in &self.n_grid {
                GridSpec::new(self.horizon, n, self.fine)?;
            }
            if self.samples == 0 {
                return Err(Error::invalid("M must be >= 1"));
            }
            HolderSpec::new(self.gamma, self.policy)?;
            if !(self.p >= 1.0) {
                return Err(Error::invalid("p must be >= 1"));
            }
        }
        if let ErrorNorm::Spatial { points, delta_space } = self.norm {
            if self.spec.kind() != SpectrumKind::DirichletLaplacian {
                return Err(Error::invalid("spatial norms need the Dirichlet spectrum"));
            }
            if points < 2 {
                return Err(Error::invalid("spatial grid needs P >= 2"));
            }
            if !(0.0..0.5).contains(&delta_space) {
                return Err(Error::invalid("delta_space must lie in [0, 1/2)"));
            }
        }
        weighted_modes(&self.spec, &self.noise, self.alpha)?;
        self.theta_max()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound_theta1: f64,
    pub bound_theta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub theta_max: f64,
    /// Envelope rates `theta_max / 2` and `0.9 theta_max`.
    pub thetas: [f64; 2],
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    /// Attaches `C_i n^{-theta_i}` envelopes with `C_i` matched at the first row.
    fn new(theta_max: f64, points: Vec<(usize, f64, f64, f64)>) -> Self {
        let thetas = [0.5 * theta_max, 0.9 * theta_max];
        let (n0, e0) = points.first().map_or((1, 0.0), |p| (p.0, p.1));
        let env = |theta: f64, n: usize| e0 * (n0 as f64 / n as f64).powf(theta);
        let rows = points
            .into_iter()
            .map(|(n, error, ci_low, ci_high)| ErrorRow {
                n,
                error,
                ci_low,
                ci_high,
                bound_theta1: env(thetas[0], n),
                bound_theta2: env(thetas[1], n),
            })
            .collect();
        Self {
            theta_max,
            thetas,
            rows,
        }
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.n as f64, r.error)).collect()
    }

    pub fn fit(&self) -> Result<RateFit> {
        fit_loglog(&self.points())
    }
}

/// Root-mean-square final-time errors `||R_{Phi^(n)} - R_Phi||_gamma` from the
/// closed forms; no randomness.
pub fn ms_error_sweep(cfg: &SweepConfig) -> Result<ErrorTable> {
    cfg.validate(false)?;
    let theta = theta_max(cfg.alpha, cfg.noise.smoothness, 0.0)?;
    let points = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let e = error_gamma_norm_sq(&cfg.spec, &cfg.noise, n, cfg.horizon, cfg.horizon, cfg.alpha)?
                .norm();
            Ok((n, e, e, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorTable::new(theta, points))
}

struct Evaluator<'a> {
    cfg: &'a SweepConfig,
    weights_sq: Vec<f64>,
    times: Vec<f64>,
    holder: HolderSpec,
    spatial: Option<SpatialGrid>,
}

impl<'a> Evaluator<'a> {
    fn new(cfg: &'a SweepConfig) -> Result<Self> {
        let nu = cfg.noise.ambient.0 + cfg.alpha;
        let w = cfg.spec.shift();
        let weights_sq = cfg
            .spec
            .eigenvalues()
            .iter()
            .map(|l| (w - l).powf(2.0 * nu))
            .collect();
        let spatial = match cfg.norm {
            ErrorNorm::Spectral => None,
            ErrorNorm::Spatial { points, .. } => Some(SpatialGrid::new(points)?),
        };
        let grid = GridSpec::new(cfg.horizon, 1, cfg.fine)?;
        Ok(Self {
            cfg,
            weights_sq,
            times: grid.fine_times(),
            holder: HolderSpec::new(cfg.gamma, cfg.policy)?,
            spatial,
        })
    }

    /// Error norm of each `n` on one shared fine path.
    fn sample(&self, key: StreamKey) -> Result<Vec<f64>> {
        let cfg = self.cfg;
        let grid = GridSpec::new(cfg.horizon, 1, cfg.fine)?;
        let path = sample_fine_path(&cfg.spec, &cfg.noise, &grid, key);
        let exact = exact_path(&path);
        cfg.n_grid
            .iter()
            .map(|&n| {
                let mut diff = discretized_path(&path, n)?;
                for (d, e) in diff.values.iter_mut().zip(&exact.values) {
                    for (x, y) in d.iter_mut().zip(e) {
                        *x -= y;
                    }
                }
                self.path_norm(&diff.values)
            })
            .collect()
    }

    fn path_norm(&self, values: &[Vec<f64>]) -> Result<f64> {
        let Some(grid) = &self.spatial else {
            let (sup, semi) =
                weighted_path_norms(values, &self.weights_sq, &self.times, self.holder, self.cfg.sup_only)?;
            return Ok(sup + semi);
        };
        let ErrorNorm::Spatial { delta_space, .. } = self.cfg.norm else {
            unreachable!("spatial grid implies spatial norm")
        };
        let space_norm = |f: &[f64]| -> f64 {
            if delta_space == 0.0 {
                f.iter().fold(0.0f64, |s, x| s.max(x.abs()))
            } else {
                space_holder_norm(f, 2.0 * delta_space, self.cfg.policy).unwrap_or(f64::NAN)
            }
        };
        let steps = self.times.len();
        let mut state = vec![0.0; values.len()];
        let mut buf = Vec::new();
        let mut field = Vec::new();
        let mut fields = Vec::with_capacity(if self.cfg.sup_only { 0 } else { steps });
        let mut sup = 0.0f64;
        for i in 0..steps {
            for (s, v) in state.iter_mut().zip(values) {
                *s = v[i];
            }
            grid.field_into(&state, &mut buf, &mut field);
            sup = sup.max(space_norm(&field));
            if !self.cfg.sup_only {
                fields.push(field.clone());
            }
        }
        if self.cfg.sup_only {
            return Ok(sup);
        }
        let semi = crate::norms::holder_seminorm(&fields, &self.times, self.holder, space_norm)?;
        Ok(sup + semi)
    }
}

/// Per-sample error norms for every `n`, in `(sample, n)` order.
fn sample_matrix(cfg: &SweepConfig, seed: u64, samples: usize) -> Result<Vec<Vec<f64>>> {
    let eval = Evaluator::new(cfg)?;
    (0..samples as u64)
        .into_par_iter()
        .map(|s| eval.sample(StreamKey::new(seed, s, Domain::FinePath)))
        .collect()
}

/// `(E ||U^(n) - U||^p)^{1/p}` over `M` shared paths with delta-method CIs.
pub fn pathwise_error_sweep(cfg: &SweepConfig) -> Result<ErrorTable> {
    cfg.validate(true)?;
    let theta = cfg.theta_max()?;
    let matrix = sample_matrix(cfg, cfg.seed, cfg.samples)?;
    let points = cfg
        .n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let col: Vec<f64> = matrix.iter().map(|row| row[j]).collect();
            if col.len() == 1 {
                return Ok((n, col[0], col[0], col[0]));
            }
            let m = p_moment(&col, cfg.p)?;
            let (lo, hi) = m.interval(Z_CI);
            Ok((n, m.value, lo, hi))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorTable::new(theta, points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsRateStat {
    pub seed: u64,
    pub theta: f64,
    /// `sup_n n^theta ||U^(n) - U||` on one path.
    pub statistic: f64,
    /// `n^theta ||U^(n) - U||` per grid point.
    pub scaled: Vec<f64>,
}

/// Single-path statistic for the almost-sure rate: bounded in `n` for every
/// `theta < theta_max`.
pub fn as_rate_check(cfg: &SweepConfig, theta: f64, seed: u64) -> Result<AsRateStat> {
    cfg.validate(true)?;
    let tmax = cfg.theta_max()?;
    if !(theta >= 0.0 && theta < tmax) {
        return Err(Error::constraint(
            "θ<θ_max",
            format!("theta = {theta}, theta_max = {tmax}"),
        ));
    }
    let errors = sample_matrix(cfg, seed, 1)?.remove(0);
    let scaled: Vec<f64> = cfg
        .n_grid
        .iter()
        .zip(&errors)
        .map(|(&n, e)| (n as f64).powf(theta) * e)
        .collect();
    Ok(AsRateStat {
        seed,
        theta,
        statistic: scaled.iter().fold(0.0, |s: f64, &x| s.max(x)),
        scaled,
    })
}

/// Pathwise sweep for the stochastic heat equation with the spatial error norm.
pub fn heat_demo(cfg: &SweepConfig, theta_test: Option<f64>) -> Result<(ErrorTable, RateFit)> {
    let ErrorNorm::Spatial { delta_space, .. } = cfg.norm else {
        return Err(Error::invalid("heat demo needs a spatial error norm"));
    };
    check_heat(cfg.gamma, delta_space, theta_test.unwrap_or(0.0))?;
    if !(cfg.noise.ambient.0 + cfg.noise.smoothness < -0.25) {
        return Err(Error::constraint(
            "σ_E+β<−1/4",
            format!("sigma_E + beta = {}", cfg.noise.ambient.0 + cfg.noise.smoothness),
        ));
    }
    let table = pathwise_error_sweep(cfg)?;
    let fit = table.fit()?;
    Ok((table, fit))
}
