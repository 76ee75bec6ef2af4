//! Closed-form gamma-radonifying norms for the diagonal stochastic
//! convolution operators.
//!
//! For a diagonal integrand `Phi(s) = S(s) i` the squared norm of `R_Phi` in
//! `gamma(L^2(0,t;H), E_nu)` is a weighted sum over modes of scalar `L^2`
//! integrals, and by the Ito isometry it is also the second moment of the
//! corresponding stochastic integral. Each function below returns the
//! weighted sum together with the truncation tail.
//!
//! Integrals are taken in the lag variable `r = t - s`. Lag cells are
//! `(0, dt], (dt, 2 dt], ...` with a possibly partial last cell; on lag cell
//! `j` the staircase kernel equals `e^{lambda t_j}` with `t_j = j dt`.

use crate::quad;
use crate::spectral::{power_law_tail, split_cells, GeneratorSpectrum, NoiseModel, Tail};
use crate::sum::CompensatedSum;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GammaNormResult {
    /// Squared gamma-norm over the retained modes.
    pub value_sq: f64,
    /// Bound on the contribution of the omitted modes.
    pub tail: Tail,
    /// Weighted contribution of each mode, ascending `k`.
    pub per_mode: Vec<f64>,
}

impl GammaNormResult {
    pub fn norm(&self) -> f64 {
        self.value_sq.sqrt()
    }
}

/// `J(lambda, t) = int_0^t e^{2 lambda r} dr`.
pub fn convolution_variance(lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        return t;
    }
    let x = 2.0 * lambda * t;
    // expm1(x)/x is accurate down to |x| ~ 1e-300, so the lambda -> 0 limit
    // needs no separate series here.
    t * x.exp_m1() / x
}

/// `sum_{i<count} e^{y i}`.
fn geometric(y: f64, count: usize) -> f64 {
    if count == 0 {
        return 0.0;
    }
    if y == 0.0 {
        return count as f64;
    }
    (y * count as f64).exp_m1() / y.exp_m1()
}

/// `int_0^h (e^{lambda d} - e^{lambda x})^2 dx` with `d >= h`.
pub(crate) fn staircase_defect(lambda: f64, h: f64, d: f64) -> f64 {
    if lambda == 0.0 || h == 0.0 {
        return 0.0;
    }
    if (lambda * d).abs() <= 1.0 {
        // The three-term closed form cancels to O(lambda^2 h^3) here; the
        // factored integrand is smooth and entire on [0, h].
        quad::gl20_integrate(
            |x| {
                let e = (lambda * (d - x)).exp_m1();
                (2.0 * lambda * x).exp() * e * e
            },
            0.0,
            h,
        )
    } else {
        let a = (lambda * d).exp();
        a * a * h - 2.0 * a * (lambda * h).exp_m1() / lambda
            + (2.0 * lambda * h).exp_m1() / (2.0 * lambda)
    }
}

/// `E|U_k(t)|^2` for one unit-weight mode of the exact solution.
pub fn exact_mode_sq(lambda: f64, t: f64) -> f64 {
    convolution_variance(lambda, t)
}

/// `E|U^(n)_k(t)|^2` for one unit-weight mode: `sum_cells |cell| e^{2 lambda t_j}`.
pub fn discretized_mode_sq(lambda: f64, n: usize, horizon: f64, t: f64) -> f64 {
    let dt = horizon / n as f64;
    let (full, rest) = split_cells(t, n, horizon);
    let whole = dt * (2.0 * lambda * dt).exp() * geometric(2.0 * lambda * dt, full);
    let partial = rest * (2.0 * lambda * (full + 1) as f64 * dt).exp();
    whole + partial
}

/// `E|U^(n)_k(t) - U_k(t)|^2` for one unit-weight mode:
/// `sum_cells int_cell (e^{lambda t_j} - e^{lambda r})^2 dr`.
pub fn error_mode_sq(lambda: f64, n: usize, horizon: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let dt = horizon / n as f64;
    let (full, rest) = split_cells(t, n, horizon);
    // Cell j = ((j-1) dt, j dt] contributes e^{2 lambda (j-1) dt} F(dt).
    let whole = staircase_defect(lambda, dt, dt) * geometric(2.0 * lambda * dt, full);
    let partial = if rest > 0.0 {
        (2.0 * lambda * full as f64 * dt).exp() * staircase_defect(lambda, rest, dt)
    } else {
        0.0
    };
    whole + partial
}

/// Cross moment `E[U^(n)_k(t) U_k(t)] = sum_cells e^{lambda t_j} int_cell e^{lambda r} dr`.
pub fn cross_mode(lambda: f64, n: usize, horizon: f64, t: f64) -> f64 {
    let dt = horizon / n as f64;
    let (full, rest) = split_cells(t, n, horizon);
    let seg = |a: f64, b: f64| {
        if lambda == 0.0 {
            b - a
        } else {
            (lambda * a).exp() * (lambda * (b - a)).exp_m1() / lambda
        }
    };
    let mut acc = CompensatedSum::default();
    for j in 1..=full {
        let (a, b) = ((j - 1) as f64 * dt, j as f64 * dt);
        acc.add((lambda * b).exp() * seg(a, b));
    }
    if rest > 0.0 {
        let a = full as f64 * dt;
        acc.add((lambda * (full + 1) as f64 * dt).exp() * seg(a, a + rest));
    }
    acc.value()
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(t > 0.0) || t > horizon * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("time {t} outside (0, {horizon}]")));
    }
    Ok(())
}

/// Squared weights `iota_k^2 (w - lambda_k)^{2 nu}` with `nu = sigma_E + alpha`,
/// plus the tail of the weighted sum against the `1 / (2|lambda_k|)` envelope
/// shared by all three second moments.
pub(crate) fn weighted_modes(
    spec: &GeneratorSpectrum,
    noise: &NoiseModel,
    alpha: f64,
) -> Result<(Vec<f64>, Tail)> {
    let nu = noise.ambient.0 + alpha;
    let w = spec.shift();
    let weights = (0..spec.len())
        .map(|k| {
            let iota = noise.iota(k);
            iota * iota * (w - spec.eigenvalue(k)).powf(2.0 * nu)
        })
        .collect();
    // (pi^2 k^2)^{2 nu} / (2 pi^2 k^2): power 2 nu - 1 in units of k^2.
    let tail = power_law_tail(spec, noise, 2.0 * nu - 1.0, spec.len(), 0.5);
    if let Tail::Divergent { exponent } = tail {
        return Err(Error::Inadmissible { exponent });
    }
    Ok((weights, tail))
}

fn assemble(weights: Vec<f64>, tail: Tail, mode: impl Fn(usize) -> f64) -> GammaNormResult {
    let mut acc = CompensatedSum::default();
    let per_mode: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(k, &wk)| {
            let c = wk * mode(k);
            acc.add(c);
            c
        })
        .collect();
    GammaNormResult {
        value_sq: acc.value(),
        tail,
        per_mode,
    }
}

/// `||R_Phi||^2` on `L^2(0,t;H)` into `E_{sigma_E + alpha}`, i.e. `E||U(t)||^2`.
pub fn exact_gamma_norm_sq(
    spec: &GeneratorSpectrum,
    noise: &NoiseModel,
    t: f64,
    alpha: f64,
) -> Result<GammaNormResult> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("time {t} must be > 0")));
    }
    let (weights, tail) = weighted_modes(spec, noise, alpha)?;
    Ok(assemble(weights, tail, |k| exact_mode_sq(spec.eigenvalue(k), t)))
}

/// `||R_{Phi^(n)}||^2`, i.e. `E||U^(n)(t)||^2`.
pub fn discretized_gamma_norm_sq(
    spec: &GeneratorSpectrum,
    noise: &NoiseModel,
    n: usize,
    horizon: f64,
    t: f64,
    alpha: f64,
) -> Result<GammaNormResult> {
    check_steps(n)?;
    check_time(t, horizon)?;
    let (weights, tail) = weighted_modes(spec, noise, alpha)?;
    Ok(assemble(weights, tail, |k| {
        discretized_mode_sq(spec.eigenvalue(k), n, horizon, t)
    }))
}

/// `||R_{Phi^(n)} - R_Phi||^2`, i.e. `E||U^(n)(t) - U(t)||^2`.
pub fn error_gamma_norm_sq(
    spec: &GeneratorSpectrum,
    noise: &NoiseModel,
    n: usize,
    horizon: f64,
    t: f64,
    alpha: f64,
) -> Result<GammaNormResult> {
    check_steps(n)?;
    check_time(t, horizon)?;
    let (weights, tail) = weighted_modes(spec, noise, alpha)?;
    Ok(assemble(weights, tail, |k| {
        error_mode_sq(spec.eigenvalue(k), n, horizon, t)
    }))
}

fn check_steps(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("coarse step count must be >= 1"));
    }
    Ok(())
}

/// Both sides of the derivative bound for `R_Phi` on `L^2(a, b; H)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C1Bound {
    /// `||R_Phi||_{gamma(L^2(a,b;H), E)}`.
    pub lhs: f64,
    /// `(b-a)^{1/2} ||Phi(b)||_gamma + int_a^b (s-a)^{1/2} ||Phi'(s)||_gamma ds`.
    pub rhs: f64,
}

/// Evaluates `||R_Phi||` and its derivative-based upper bound for
/// `Phi(s) = S(s) i` measured in `E_{sigma_E + alpha}`.
pub fn c1_bound_check(
    spec: &GeneratorSpectrum,
    noise: &NoiseModel,
    a: f64,
    b: f64,
    alpha: f64,
) -> Result<C1Bound> {
    if !(a >= 0.0 && b > a) {
        return Err(Error::invalid(format!("need 0 <= a < b, got ({a}, {b})")));
    }
    let nu = noise.ambient.0 + alpha;
    let w = spec.shift();
    let weights: Vec<f64> = (0..spec.len())
        .map(|k| {
            let iota = noise.iota(k);
            iota * iota * (w - spec.eigenvalue(k)).powf(2.0 * nu)
        })
        .collect();
    let lambdas = spec.eigenvalues();

    let mut lhs = CompensatedSum::default();
    for (&wk, &l) in weights.iter().zip(lambdas) {
        lhs.add(wk * (2.0 * l * a).exp() * convolution_variance(l, b - a));
    }
    let phi_norm = |s: f64| -> f64 {
        weights
            .iter()
            .zip(lambdas)
            .map(|(&wk, &l)| wk * (2.0 * l * s).exp())
            .sum::<f64>()
            .sqrt()
    };
    let dphi_norm = |s: f64| -> f64 {
        weights
            .iter()
            .zip(lambdas)
            .map(|(&wk, &l)| wk * l * l * (2.0 * l * s).exp())
            .sum::<f64>()
            .sqrt()
    };
    // s = a + x^2 removes the square-root endpoint behaviour.
    let integral = quad::integrate(
        |x| 2.0 * x * x * dphi_norm(a + x * x),
        0.0,
        (b - a).sqrt(),
        1e-300,
        1e-13,
    )?;
    Ok(C1Bound {
        lhs: lhs.value().sqrt(),
        rhs: (b - a).sqrt() * phi_norm(b) + integral,
    })
}

/// Square-integrable scalar multiplier `g` on `(0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarProfile {
    /// `g = values[i]` on `(breaks[i], breaks[i+1]]`.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
    /// `g(t) = e^{rate t}` on `(0, horizon]`.
    Exponential { rate: f64, horizon: f64 },
}

impl ScalarProfile {
    pub fn l2_norm_sq(&self) -> f64 {
        match self {
            ScalarProfile::PiecewiseConstant { breaks, values } => breaks
                .windows(2)
                .zip(values)
                .map(|(w, v)| (w[1] - w[0]) * v * v)
                .sum(),
            ScalarProfile::Exponential { rate, horizon } => {
                if *rate == 0.0 {
                    *horizon
                } else {
                    (2.0 * rate * horizon).exp_m1() / (2.0 * rate)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let ScalarProfile::PiecewiseConstant { breaks, values } = self {
            if breaks.len() != values.len() + 1 || breaks.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::invalid("piecewise profile needs sorted breaks, one more than values"));
            }
        }
        Ok(())
    }
}

/// `(lhs_sq, rhs_sq)` for `t -> g(t) R` with `R` diagonal with singular values
/// `r`: the left side goes through per-mode cell sums, the right side is
/// `||g||^2_{L^2} ||R||^2_gamma`.
pub fn scalar_multiplier_identity(g: &ScalarProfile, r: &[f64]) -> Result<(f64, f64)> {
    g.validate()?;
    let mut lhs = CompensatedSum::default();
    for &rk in r {
        let mode = match g {
            ScalarProfile::PiecewiseConstant { breaks, values } => {
                let mut cells = CompensatedSum::default();
                for (w, v) in breaks.windows(2).zip(values) {
                    let c = v * rk;
                    cells.add((w[1] - w[0]) * c * c);
                }
                cells.value()
            }
            ScalarProfile::Exponential { rate, horizon } => {
                rk * rk * convolution_variance(*rate, *horizon)
            }
        };
        lhs.add(mode);
    }
    let r_norm_sq: f64 = r.iter().map(|x| x * x).sum();
    Ok((lhs.value(), g.l2_norm_sq() * r_norm_sq))
}
