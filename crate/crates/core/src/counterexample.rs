//! A translation-semigroup example on `L^q(R; l^p)` where the exact
//! stochastic convolution exists but the splitting scheme diverges.
//!
//! The profile `f` puts weight `2^{-rk/p}` on coordinate `2^{k-1} + j` over
//! the interval `I_{k,j} = ((2j+1) 2^{-k}, (2j+1) 2^{-k} + 2^{-uk}]`. The
//! scheme with `N` steps produces the field
//! `F(s) = sum_{i=1}^N f(i/N + s) dw_i`, which for `(q, p, u, r)` above the
//! threshold has unbounded `E||F||^p_{L^q(R; l^p)}` as `N -> infinity`.
//!
//! Each coordinate of `F` is a sum of consecutive increments and is piecewise
//! constant in `s`. [`FieldLayout`] writes `s = l/N + tau` and precomputes,
//! for each `tau`-piece, which increments enter every coordinate, so the
//! `s`-integral is evaluated exactly rather than by quadrature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::norms::mean_and_se;
use crate::rng::{Domain, StreamKey};
use crate::sum::CompensatedSum;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicProfile {
    pub p: f64,
    pub u: f64,
    pub r: f64,
    pub k_max: u32,
}

impl DyadicProfile {
    pub fn new(p: f64, u: f64, r: f64, k_max: u32) -> Result<Self> {
        if !(1.0..2.0).contains(&p) {
            return Err(Error::constraint("1≤p<2", format!("p = {p}")));
        }
        if !(u > 2.0 / p) {
            return Err(Error::constraint("u>2/p", format!("u = {u}, p = {p}")));
        }
        if !(r > 0.0 && r < 1.0 - p / 2.0) {
            return Err(Error::constraint("0<r<1−p/2", format!("r = {r}, p = {p}")));
        }
        if !(1..=60).contains(&k_max) {
            return Err(Error::invalid(format!("k_max must lie in 1..=60, got {k_max}")));
        }
        Ok(Self { p, u, r, k_max })
    }

    pub fn width(&self, k: u32) -> f64 {
        (-self.u * k as f64).exp2()
    }

    pub fn coefficient(&self, k: u32) -> f64 {
        (-self.r * k as f64 / self.p).exp2()
    }
}

/// Sorted `(index, value)` pairs of a finitely supported `l^p` element.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub entries: Vec<(u64, f64)>,
}

impl SparseVec {
    pub fn lp_pow(&self, p: f64) -> f64 {
        self.entries.iter().map(|(_, v)| v.abs().powf(p)).sum()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lp_pow(p).powf(1.0 / p)
    }

    /// `self += c x`, keeping indices sorted and distinct.
    pub fn axpy(&mut self, c: f64, x: &SparseVec) {
        let mut out = Vec::with_capacity(self.entries.len() + x.entries.len());
        let (mut a, mut b) = (self.entries.iter().peekable(), x.entries.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(i, v)), Some(&&(j, w))) => {
                    if i == j {
                        out.push((i, v + c * w));
                        a.next();
                        b.next();
                    } else if i < j {
                        out.push((i, v));
                        a.next();
                    } else {
                        out.push((j, c * w));
                        b.next();
                    }
                }
                (Some(&&e), None) => {
                    out.push(e);
                    a.next();
                }
                (None, Some(&&(j, w))) => {
                    out.push((j, c * w));
                    b.next();
                }
                (None, None) => break,
            }
        }
        self.entries = out;
    }
}

/// `f(t)` truncated at level `k_max`.
pub fn eval_profile(t: f64, prof: &DyadicProfile) -> SparseVec {
    let mut entries = Vec::new();
    if !(t > 0.0 && t < 1.0) {
        return SparseVec { entries };
    }
    for k in 1..=prof.k_max {
        let scale = (k as f64).exp2();
        let x = t * scale;
        // 2j + 1 <= x < 2j + 3
        let j = ((x - 1.0) / 2.0).floor();
        if j < 0.0 || j >= scale / 2.0 {
            continue;
        }
        let left = (2.0 * j + 1.0) / scale;
        if t > left && t - left <= prof.width(k) {
            entries.push(((1u64 << (k - 1)) + j as u64, prof.coefficient(k)));
        }
    }
    SparseVec { entries }
}

/// `E|g|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)` for a standard normal `g`.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    (p / 2.0).exp2() * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralMoment {
    /// Sum over levels `k <= k_max`.
    pub truncated: f64,
    /// Contribution of levels `k > k_max`; exact, since the terms are geometric.
    pub tail: f64,
}

impl IntegralMoment {
    pub fn total(&self) -> f64 {
        self.truncated + self.tail
    }
}

/// `E||int_0^1 f dw||^p_{l^p} = sum_k 2^{k(1 - r - up/2) - 1} E|g|^p`.
pub fn exact_integral_moment(prof: &DyadicProfile) -> IntegralMoment {
    let m = gaussian_abs_moment(prof.p);
    let ratio = (1.0 - prof.r - prof.u * prof.p / 2.0).exp2();
    let truncated = (1..=prof.k_max)
        .map(|k| 0.5 * m * ratio.powi(k as i32))
        .sum();
    let tail = 0.5 * m * ratio.powi(prof.k_max as i32 + 1) / (1.0 - ratio);
    IntegralMoment { truncated, tail }
}

/// `sum_{i=1}^N f(i/N + s) dw_i` for each `s`, by direct accumulation.
pub fn simulate_discretized_field(increments: &[f64], s_grid: &[f64], prof: &DyadicProfile) -> Vec<SparseVec> {
    let n = increments.len() as f64;
    s_grid
        .iter()
        .map(|&s| {
            let mut acc = SparseVec::default();
            for (i, &dw) in increments.iter().enumerate() {
                if dw != 0.0 {
                    acc.axpy(dw, &eval_profile((i + 1) as f64 / n + s, prof));
                }
            }
            acc
        })
        .collect()
}

/// Trapezoidal `(int ||F(s)||_{l^p}^q ds)^{1/q}` over a sorted grid.
pub fn lq_lp_norm(field: &[SparseVec], s_grid: &[f64], p: f64, q: f64) -> Result<f64> {
    if field.is_empty() || field.len() != s_grid.len() {
        return Err(Error::invalid("field and s grid must be nonempty and aligned"));
    }
    let vals: Vec<f64> = field.iter().map(|v| v.lp_norm(p).powf(q)).collect();
    let mut acc = CompensatedSum::default();
    for i in 1..vals.len() {
        acc.add(0.5 * (s_grid[i] - s_grid[i - 1]) * (vals[i] + vals[i - 1]));
    }
    Ok(acc.value().powf(1.0 / q))
}

/// Uniform grid with `2^log2_points` cells on `[-1, 1]`, merged with a
/// geometric refinement (ratio `2^{1/16}`) after every shift `l/N`: at
/// `s = l/N + tau` with `0 < tau <= window` all levels `k <= n` are active at
/// once, and these windows dominate the `L^q` integral.
pub fn s_grid(log2_points: u32, steps: usize, window: f64) -> Vec<f64> {
    let cells = 1usize << log2_points;
    let h = 1.0 / steps as f64;
    let mut offsets = vec![0.0, window];
    let mut x = window * 2f64.powi(-12);
    while x < h {
        offsets.push(x);
        if x < window {
            offsets.push(2.0 * window - x);
        }
        x *= 2f64.powf(1.0 / 16.0);
    }
    let mut g: Vec<f64> = (0..=cells).map(|i| -1.0 + 2.0 * i as f64 / cells as f64).collect();
    let n = steps as i64;
    for l in -n..n {
        g.extend(offsets.iter().map(|o| l as f64 * h + o));
    }
    g.retain(|s| (-1.0..=1.0).contains(s));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// `2^{-un-1} 2^{n(1-r-p/2) q/p} (E|g|^p)^{q/p}`.
pub fn lower_bound(n: u32, p: f64, u: f64, r: f64, q: f64) -> f64 {
    let n = n as f64;
    (-u * n - 1.0).exp2() * (n * (1.0 - r - p / 2.0) * q / p).exp2() * gaussian_abs_moment(p).powf(q / p)
}

/// `up / (1 - r - p/2)`.
pub fn divergence_threshold(p: f64, u: f64, r: f64) -> Result<f64> {
    let d = 1.0 - r - p / 2.0;
    if !(d > 0.0) {
        return Err(Error::constraint("r<1−p/2", format!("1 - r - p/2 = {d}")));
    }
    Ok(u * p / d)
}

/// Coordinates `c = a/N + phi` of one level sharing the offset `phi < 1/N`.
#[derive(Debug, Clone)]
struct Class {
    phi: f64,
    width: f64,
    coef: f64,
    starts: Vec<i64>,
}

/// Increments `i = a - l + d`, `d in [d_lo, d_hi]`, enter coordinate `a` of
/// `class` at `s = l/N + tau` for every `tau` in the piece.
#[derive(Debug, Clone, Copy)]
struct Active {
    class: usize,
    d_lo: i64,
    d_hi: i64,
}

#[derive(Debug, Clone)]
struct Piece {
    len: f64,
    in_window: bool,
    active: Vec<Active>,
}

/// Exact `s`-integration of the discretized field for `N = 2^n` steps.
#[derive(Debug, Clone)]
pub struct FieldLayout {
    steps: usize,
    p: f64,
    q: f64,
    classes: Vec<Class>,
    pieces: Vec<Piece>,
}

/// Per-path summary from [`FieldLayout::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathIntegrals {
    /// `int_R ||F(s)||_{l^p}^q ds`.
    pub lq_pow: f64,
    /// `||F(s)||^p_{l^p}` on each `(0, 2^{-un}]` piece.
    pub window_lp_pow: Vec<f64>,
}

impl FieldLayout {
    pub fn new(n: u32, prof: &DyadicProfile, q: f64) -> Result<Self> {
        if n == 0 || n > 20 {
            return Err(Error::invalid(format!("n must lie in 1..=20, got {n}")));
        }
        let steps = 1usize << n;
        let h = 1.0 / steps as f64;
        let mut classes = Vec::new();
        for k in 1..=prof.k_max {
            let (width, coef) = (prof.width(k), prof.coefficient(k));
            if k <= n {
                let stride = 1i64 << (n - k);
                let starts = (0..1i64 << (k - 1)).map(|j| (2 * j + 1) * stride).collect();
                classes.push(Class { phi: 0.0, width, coef, starts });
            } else {
                // (2j+1)/2^k = b/N + rho/2^k with rho odd, rho < 2^{k-n}
                let sub = 1u64 << (k - n);
                for rho in (1..sub).step_by(2) {
                    classes.push(Class {
                        phi: rho as f64 / (k as f64).exp2(),
                        width,
                        coef,
                        starts: (0..steps as i64).collect(),
                    });
                }
            }
        }
        let window = (-prof.u * n as f64).exp2();
        let mut breaks = vec![0.0, h, window.min(h)];
        for c in &classes {
            breaks.push(c.phi);
            breaks.push((c.phi + c.width) % h);
        }
        breaks.retain(|&b| (0.0..=h).contains(&b));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let nf = steps as f64;
        let pieces = breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let active = classes
                    .iter()
                    .enumerate()
                    .filter_map(|(idx, c)| {
                        let d_lo = (nf * (c.phi - mid)).floor() as i64 + 1;
                        let d_hi = (nf * (c.phi + c.width - mid)).floor() as i64;
                        (d_hi >= d_lo).then_some(Active { class: idx, d_lo, d_hi })
                    })
                    .collect();
                Piece {
                    len: w[1] - w[0],
                    in_window: w[1] <= window,
                    active,
                }
            })
            .collect();
        Ok(Self {
            steps,
            p: prof.p,
            q,
            classes,
            pieces,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn window_pieces(&self) -> impl Iterator<Item = &Piece> {
        self.pieces.iter().filter(|pc| pc.in_window)
    }

    /// Clipped increment range `[lo, hi]` of coordinate `a` at shift index `l`.
    #[inline]
    fn range(&self, a: i64, l: i64, act: &Active) -> Option<(usize, usize)> {
        let lo = (a - l + act.d_lo).max(1);
        let hi = (a - l + act.d_hi).min(self.steps as i64);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    /// `int ||F||^q ds` and the window values for one path of `N` increments.
    pub fn evaluate(&self, increments: &[f64]) -> Result<PathIntegrals> {
        let n = self.steps;
        if increments.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} increments, got {}",
                increments.len()
            )));
        }
        let mut cum = Vec::with_capacity(n + 1);
        let mut w = 0.0;
        cum.push(w);
        for &x in increments {
            w += x;
            cum.push(w);
        }
        let ni = n as i64;
        let p = self.p;
        let unit = p == 1.0;
        let mut acc = vec![0.0; 2 * n];
        let mut lq = CompensatedSum::default();
        let mut window = Vec::new();
        for pc in &self.pieces {
            if pc.active.is_empty() {
                if pc.in_window {
                    window.push(0.0);
                }
                continue;
            }
            acc.fill(0.0);
            for act in &pc.active {
                let c = &self.classes[act.class];
                let cp = c.coef.powf(p);
                for &a in &c.starts {
                    // nonempty range needs a - l + d_hi >= 1 and a - l + d_lo <= N
                    let l_min = (a + act.d_lo - ni).max(-ni);
                    let l_max = (a + act.d_hi - 1).min(ni - 1);
                    for l in l_min..=l_max {
                        let lo = (a - l + act.d_lo).max(1) as usize;
                        let hi = (a - l + act.d_hi).min(ni) as usize;
                        let d = cum[hi] - cum[lo - 1];
                        acc[(l + ni) as usize] += cp * if unit { d.abs() } else { d.abs().powf(p) };
                    }
                }
            }
            let qp = self.q / p;
            let mut s = 0.0;
            for &v in &acc {
                if v > 0.0 {
                    s += v.powf(qp);
                }
            }
            lq.add(pc.len * s);
            if pc.in_window {
                window.push(acc[n]);
            }
        }
        Ok(PathIntegrals {
            lq_pow: lq.value(),
            window_lp_pow: window,
        })
    }

    /// `E||F(s)||^p_{l^p}` on each window piece: every coordinate is a
    /// centred Gaussian with variance `coef^2 (#increments) / N`.
    pub fn window_expectations(&self) -> Vec<f64> {
        let m = gaussian_abs_moment(self.p);
        let n = self.steps as f64;
        self.window_pieces()
            .map(|pc| {
                pc.active
                    .iter()
                    .map(|act| {
                        let c = &self.classes[act.class];
                        c.starts
                            .iter()
                            .filter_map(|&a| self.range(a, 0, act))
                            .map(|(lo, hi)| {
                                c.coef.powf(self.p) * (((hi - lo + 1) as f64) / n).powf(self.p / 2.0) * m
                            })
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    pub fn window_lengths(&self) -> Vec<f64> {
        self.window_pieces().map(|pc| pc.len).collect()
    }

    /// `int_0^{2^{-un}} (E||F(s)||^p)^{q/p} ds`, exactly.
    pub fn exact_window_quantity(&self) -> f64 {
        let qp = self.q / self.p;
        self.window_expectations()
            .iter()
            .zip(self.window_lengths())
            .map(|(e, len)| len * e.powf(qp))
            .sum()
    }
}

/// How the `s`-integral of each path is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SIntegration {
    Exact,
    /// Trapezoid rule on [`s_grid`] with `2^log2_points` uniform cells.
    Trapezoid { log2_points: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceConfig {
    pub p: f64,
    pub u: f64,
    pub r: f64,
    pub q: f64,
    pub n_list: Vec<u32>,
    pub samples: usize,
    pub seed: u64,
    /// Levels simulated beyond `n`.
    pub extra_levels: u32,
    pub integration: SIntegration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub n: u32,
    pub mc_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub subwindow_quantity: f64,
    pub subwindow_se: f64,
    pub subwindow_exact: f64,
    pub lower_bound: f64,
    pub exact_moment: f64,
}

/// Increments of `w` over the `2^n_max` finest cells of `(0, 1]` for one path.
fn finest_increments(key: StreamKey, n_max: u32) -> Vec<f64> {
    let cells = 1usize << n_max;
    let sd = (1.0 / cells as f64).sqrt();
    let mut stream = key.normals(0, 0);
    let mut out = Vec::with_capacity(cells + 1);
    while out.len() < cells {
        let (a, b) = stream.next_pair();
        out.push(sd * a);
        out.push(sd * b);
    }
    out.truncate(cells);
    out
}

fn block_sums(x: &[f64], blocks: usize) -> Vec<f64> {
    x.chunks(x.len() / blocks).map(|c| c.iter().sum()).collect()
}

/// Monte Carlo table of `E||int S^(2^n) f dw||^p_{L^q(R; l^p)}` against the
/// window quantity and its lower bound. All `n` share the same Brownian path.
pub fn mc_divergence_estimate(cfg: &DivergenceConfig) -> Result<Vec<DivergenceRow>> {
    if cfg.samples < 2 {
        return Err(Error::invalid("M must be >= 2"));
    }
    if cfg.n_list.is_empty() {
        return Err(Error::invalid("n list must be nonempty"));
    }
    if !(cfg.q >= cfg.p) {
        return Err(Error::constraint("q≥p", format!("q = {}, p = {}", cfg.q, cfg.p)));
    }
    divergence_threshold(cfg.p, cfg.u, cfg.r)?;
    let n_max = *cfg.n_list.iter().max().expect("nonempty");
    let limit = exact_integral_moment(&DyadicProfile::new(cfg.p, cfg.u, cfg.r, 1)?).total();
    let paths: Vec<Vec<f64>> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|s| finest_increments(StreamKey::new(cfg.seed, s, Domain::Counterexample), n_max))
        .collect();
    cfg.n_list
        .iter()
        .map(|&n| {
            let prof = DyadicProfile::new(cfg.p, cfg.u, cfg.r, n + cfg.extra_levels)?;
            let layout = FieldLayout::new(n, &prof, cfg.q)?;
            let window = (-cfg.u * n as f64).exp2();
            let per_path: Vec<PathIntegrals> = paths
                .par_iter()
                .map(|inc| {
                    let dw = block_sums(inc, layout.steps());
                    let mut out = layout.evaluate(&dw)?;
                    if let SIntegration::Trapezoid { log2_points } = cfg.integration {
                        let grid = s_grid(log2_points, layout.steps(), window);
                        let field = simulate_discretized_field(&dw, &grid, &prof);
                        out.lq_pow = lq_lp_norm(&field, &grid, cfg.p, cfg.q)?.powf(cfg.q);
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            let norms_p: Vec<f64> = per_path.iter().map(|x| x.lq_pow.powf(cfg.p / cfg.q)).collect();
            let (mc, se) = mean_and_se(&norms_p)?;

            // window quantity: sum_pieces len (mean A)^{q/p}, delta-method SE
            let qp = cfg.q / cfg.p;
            let lens = layout.window_lengths();
            let means: Vec<f64> = (0..lens.len())
                .map(|j| per_path.iter().map(|x| x.window_lp_pow[j]).sum::<f64>() / cfg.samples as f64)
                .collect();
            let sub: f64 = lens.iter().zip(&means).map(|(l, m)| l * m.powf(qp)).sum();
            let grad: Vec<f64> = lens
                .iter()
                .zip(&means)
                .map(|(l, m)| l * qp * m.powf(qp - 1.0))
                .collect();
            let lin: Vec<f64> = per_path
                .iter()
                .map(|x| x.window_lp_pow.iter().zip(&grad).map(|(a, g)| a * g).sum())
                .collect();
            let (_, sub_se) = mean_and_se(&lin)?;
            Ok(DivergenceRow {
                n,
                mc_estimate: mc,
                ci_low: mc - crate::rates::Z_CI * se,
                ci_high: mc + crate::rates::Z_CI * se,
                subwindow_quantity: sub,
                subwindow_se: sub_se,
                subwindow_exact: layout.exact_window_quantity(),
                lower_bound: lower_bound(n, cfg.p, cfg.u, cfg.r, cfg.q),
                exact_moment: limit,
            })
        })
        .collect()
}
