//! Acceptance criteria. Each test prints one `criterion NN: PASS/FAIL` line.

mod common;

use common::{report, simpson, Draws};
use rayon::prelude::*;
use splitflow::config::{Experiment, ExperimentConfig};
use splitflow::counterexample::mc_divergence_estimate;
use splitflow::gamma::*;
use splitflow::path::{coupled_step_cov, discretized_path, exact_path, sample_fine_path, splitting_path};
use splitflow::rates::{as_rate_check, heat_demo, ms_error_sweep, pathwise_error_sweep, Z_CI};
use splitflow::rng::{Domain, StreamKey};
use splitflow::spectral::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_01_mean_square_rate() {
    let mut cfg = ExperimentConfig::defaults(Experiment::MsSweep);
    assert_eq!((cfg.model.modes, cfg.grid.n_list.first(), cfg.grid.n_list.last()), (4096, Some(&4), Some(&1024)));
    let s0 = ms_error_sweep(&cfg.sweep().unwrap()).unwrap().fit().unwrap().slope;
    cfg.norm.alpha = 0.25;
    let s1 = ms_error_sweep(&cfg.sweep().unwrap()).unwrap().fit().unwrap().slope;
    let pass = (0.45..=0.55).contains(&s0) && (0.20..=0.30).contains(&s1);
    report(1, pass, &format!("slope(alpha=0) = {s0:.4} in [0.45, 0.55], slope(alpha=0.25) = {s1:.4} in [0.20, 0.30]"));
    assert!(pass);
}

#[test]
fn criterion_02_ito_isometry() {
    let spec = dirichlet_spectrum(256).unwrap();
    let noise = NoiseModel::white(-0.3);
    let grid = GridSpec::new(1.0, 1, 256).unwrap();
    let alpha = 0.0;
    let weights = spec.weights(2.0 * (noise.ambient.0 + alpha));
    let samples = 2000u64;
    let ns = [8usize, 64];
    let per_sample: Vec<[f64; 2]> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let path = sample_fine_path(&spec, &noise, &grid, StreamKey::new(20, s, Domain::FinePath));
            let u = exact_path(&path);
            ns.map(|n| {
                let d = discretized_path(&path, n).unwrap();
                (0..spec.len()).map(|k| weights[k] * (d.values[k][256] - u.values[k][256]).powi(2)).sum()
            })
        })
        .collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for (j, &n) in ns.iter().enumerate() {
        let x: Vec<f64> = per_sample.iter().map(|r| r[j]).collect();
        let (mean, se) = splitflow::norms::mean_and_se(&x).unwrap();
        let want = error_gamma_norm_sq(&spec, &noise, n, 1.0, 1.0, alpha).unwrap().value_sq;
        let z = (mean - want).abs() / se;
        pass &= z <= 3.0;
        detail.push(format!("n={n}: MC {mean:.5e} vs {want:.5e} ({z:.2} SE)"));
    }
    report(2, pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_03_coupling_identity() {
    let mut d = Draws::new(33);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let modes = d.int(1, 12);
        let mut eigs: Vec<f64> = (0..modes).map(|_| -(10f64).powf(d.uniform(-2.0, 4.0))).collect();
        if case % 5 == 0 {
            eigs[0] = 0.0;
        }
        let spec = GeneratorSpectrum::new(eigs, 1.0).unwrap();
        let noise = NoiseModel::white(0.0);
        let n = d.int(1, 32);
        let r = d.int(1, 16);
        let grid = GridSpec::new(d.uniform(0.1, 3.0), n, n * r).unwrap();
        let path = sample_fine_path(&spec, &noise, &grid, StreamKey::new(case, 0, Domain::Diagnostics));
        let fine = discretized_path(&path, n).unwrap();
        let coarse = splitting_path(&path, n).unwrap();
        for k in 0..modes {
            for j in 0..=n {
                let (a, b) = (fine.values[k][j * r], coarse.values[k][j]);
                let scale = b.abs().max(path.increments[k].iter().map(|x| x.abs()).fold(0.0, f64::max));
                if scale > 0.0 {
                    worst = worst.max((a - b).abs() / scale);
                }
            }
        }
    }
    let pass = worst <= 1e-10;
    report(3, pass, &format!("max relative deviation {worst:.2e} over 100 configurations (tol 1e-10)"));
    assert!(pass);
}

#[test]
fn criterion_04_coupling_covariance() {
    let draws = 100_000usize;
    let spec = GeneratorSpectrum::new(vec![0.0, -1.0, -100.0], 1.0).unwrap();
    let noise = NoiseModel::white(0.0);
    let mut pass = true;
    let mut worst = 0.0f64;
    for delta in [1e-3, 0.1] {
        let grid = GridSpec::new(delta * draws as f64, 1, draws).unwrap();
        let path = sample_fine_path(&spec, &noise, &grid, StreamKey::new(44, 0, Domain::Diagnostics));
        for k in 0..3 {
            let cov = coupled_step_cov(spec.eigenvalue(k), delta);
            let cols = [&path.increments[k], &path.convolutions[k]];
            for a in 0..2 {
                for b in 0..2 {
                    let est = (0..draws).map(|i| cols[a][i] * cols[b][i]).sum::<f64>() / draws as f64;
                    // Var(XY) = s_aa s_bb + s_ab^2 for centred Gaussians
                    let se = ((cov[a][a] * cov[b][b] + cov[a][b] * cov[a][b]) / draws as f64).sqrt();
                    let z = (est - cov[a][b]).abs() / se;
                    worst = worst.max(z);
                    pass &= z <= 4.0;
                }
            }
        }
    }
    report(4, pass, &format!("max deviation {worst:.2} SE over lambda in {{0, -1, -100}}, delta in {{1e-3, 0.1}} (tol 4 SE)"));
    assert!(pass);
}

#[test]
fn criterion_05_holder_rate() {
    let cfg = ExperimentConfig::defaults(Experiment::PathSweep);
    let sweep = cfg.sweep().unwrap();
    assert_eq!((sweep.spec.len(), sweep.fine, sweep.samples, sweep.gamma), (512, 1024, 200, 0.1));
    let table = pathwise_error_sweep(&sweep).unwrap();
    let slope = table.fit().unwrap().slope;
    let pass = (0.30..=0.60).contains(&slope);
    report(5, pass, &format!("slope {slope:.4} in [0.30, 0.60], theta_max {:.2}", table.theta_max));
    assert!(pass);
}

#[test]
fn criterion_06_heat_spatial_rate() {
    let cfg = ExperimentConfig::defaults(Experiment::HeatDemo);
    let (table, fit) = heat_demo(&cfg.sweep().unwrap(), None).unwrap();
    let pass = (0.15..=0.35).contains(&fit.slope);
    report(6, pass, &format!("slope {:.4} in [0.15, 0.35], theta_max {:.2}", fit.slope, table.theta_max));
    assert!(pass);
}

#[test]
fn criterion_07_almost_sure_stability() {
    let cfg = ExperimentConfig::defaults(Experiment::HeatDemo).sweep().unwrap();
    let theta = 0.8 * cfg.theta_max().unwrap();
    let stats: Vec<_> = (0..10u64).map(|seed| as_rate_check(&cfg, theta, 100 + seed).unwrap()).collect();
    let values: Vec<f64> = stats.iter().map(|s| s.statistic).collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let growing = stats.iter().filter(|s| s.scaled.windows(2).all(|w| w[1] > w[0])).count();
    let pass = lo > 0.0 && hi.is_finite() && hi / lo < 3.0 && growing == 0;
    report(7, pass, &format!("max/min statistic {:.3} (< 3), {growing} of 10 seeds strictly increasing in n", hi / lo));
    assert!(pass);
}

#[test]
fn criterion_08_scalar_multiplier_identity() {
    let mut d = Draws::new(88);
    let mut worst = 0.0f64;
    let mut oracle = 0.0f64;
    for case in 0..100 {
        let r: Vec<f64> = (0..d.int(1, 20)).map(|_| d.uniform(-5.0, 5.0)).collect();
        let rn: f64 = r.iter().map(|x| x * x).sum();
        let g = if case % 2 == 0 {
            let cells = d.int(1, 10);
            let mut breaks = vec![0.0];
            for _ in 0..cells {
                breaks.push(breaks.last().unwrap() + d.uniform(0.01, 1.0));
            }
            let values: Vec<f64> = (0..cells).map(|_| d.uniform(-3.0, 3.0)).collect();
            ScalarProfile::PiecewiseConstant { breaks, values }
        } else {
            ScalarProfile::Exponential { rate: d.uniform(-20.0, 2.0), horizon: d.uniform(0.1, 2.0) }
        };
        let (lhs, rhs) = scalar_multiplier_identity(&g, &r).unwrap();
        worst = worst.max(rel(lhs, rhs));
        let direct = match &g {
            ScalarProfile::PiecewiseConstant { breaks, values } => {
                breaks.windows(2).zip(values).map(|(w, v)| (w[1] - w[0]) * v * v).sum::<f64>()
            }
            ScalarProfile::Exponential { rate, horizon } => {
                simpson(&|t: f64| (2.0 * rate * t).exp(), 0.0, *horizon, 1e-15)
            }
        };
        oracle = oracle.max(rel(rhs, direct * rn));
    }
    let pass = worst <= 1e-12 && oracle <= 1e-10;
    report(8, pass, &format!("max relative gap {worst:.2e} (tol 1e-12), vs quadrature oracle {oracle:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_09_derivative_bound() {
    let mut d = Draws::new(99);
    let mut violations = 0;
    for _ in 0..200 {
        let modes = d.int(1, 8);
        let eigs: Vec<f64> = (0..modes).map(|_| -d.uniform(1e-3, 100.0)).collect();
        let spec = GeneratorSpectrum::new(eigs, 0.0).unwrap();
        let sigma_e = d.uniform(-0.5, 0.0);
        let alpha = d.uniform(0.0, 0.5 + sigma_e - 1e-3);
        let weights: Vec<f64> = (0..modes).map(|_| d.uniform(0.1, 2.0)).collect();
        let noise = NoiseModel::new(Embedding::PerMode(weights), sigma_e, 0.0).unwrap();
        let a = d.uniform(0.0, 0.9);
        let b = d.uniform(a + 1e-3, 1.0);
        let c = c1_bound_check(&spec, &noise, a, b, alpha).unwrap();
        if !(c.lhs <= c.rhs) {
            violations += 1;
        }
    }
    let spec = GeneratorSpectrum::new(vec![-1.0], 0.0).unwrap();
    let noise = NoiseModel::new(Embedding::Uniform(1.0), 0.0, 0.0).unwrap();
    let c = c1_bound_check(&spec, &noise, 0.0, 1.0, 0.0).unwrap();
    let lhs = simpson(&|s: f64| (-2.0 * s).exp(), 0.0, 1.0, 1e-15).sqrt();
    let rhs = (-1.0f64).exp() + simpson(&|x: f64| 2.0 * x * x * (-x * x).exp(), 0.0, 1.0, 1e-15);
    let instance = rel(c.lhs, lhs) < 1e-10 && rel(c.rhs, rhs) < 1e-10 && c.lhs <= c.rhs;
    let pass = violations == 0 && instance;
    report(
        9,
        pass,
        &format!("{violations} of 200 violations; lambda=-1 instance lhs {:.7} <= rhs {:.4}", c.lhs, c.rhs),
    );
    assert!(pass);
}

#[test]
fn criterion_10_divergence() {
    let cfg = ExperimentConfig::defaults(Experiment::Counterexample);
    let c = &cfg.counterexample;
    assert_eq!((c.p, c.u, c.r, c.q, cfg.mc.samples), (1.0, 3.0, 0.25, 16.0, 400));
    let rows = mc_divergence_estimate(&cfg.divergence().unwrap()).unwrap();
    let increasing = rows.windows(2).all(|w| w[1].mc_estimate > w[0].mc_estimate);
    let above = rows.iter().all(|r| r.subwindow_quantity + Z_CI * r.subwindow_se >= r.lower_bound);
    let m0 = rows[0].exact_moment;
    let flat = m0.is_finite() && rows.iter().all(|r| rel(r.exact_moment, m0) <= 1e-12);
    let pass = rows.len() == 5 && increasing && above && flat;
    let est: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.mc_estimate)).collect();
    report(
        10,
        pass,
        &format!("estimates n=4..8 [{}], sub-window >= bound: {above}, exact moment {m0:.4}", est.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_11_zero_mode_exactness() {
    let mut d = Draws::new(111);
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let modes = d.int(2, 10);
        let eigs: Vec<f64> = (0..modes).map(|k| if k % 3 == 0 { 0.0 } else { -d.uniform(0.1, 500.0) }).collect();
        let spec = GeneratorSpectrum::new(eigs.clone(), 1.0).unwrap();
        let noise = NoiseModel::new(Embedding::Uniform(d.uniform(0.5, 2.0)), d.uniform(-0.5, 0.0), 0.0).unwrap();
        let n = d.int(1, 16);
        let r = d.int(1, 8);
        let horizon = d.uniform(0.2, 2.0);
        let e = error_gamma_norm_sq(&spec, &noise, n, horizon, d.uniform(0.01, 1.0) * horizon, 0.0).unwrap();
        let grid = GridSpec::new(horizon, n, n * r).unwrap();
        let path = sample_fine_path(&spec, &noise, &grid, StreamKey::new(case, 0, Domain::Diagnostics));
        let diff = discretized_path(&path, n).unwrap().difference(&exact_path(&path)).unwrap();
        for k in (0..modes).filter(|&k| eigs[k] == 0.0) {
            worst = worst.max(e.per_mode[k].abs());
            worst = worst.max(diff.values[k].iter().fold(0.0, |s: f64, x| s.max(x.abs())));
        }
    }
    let pass = worst <= 1e-14;
    report(11, pass, &format!("max zero-mode error {worst:.2e} (tol 1e-14)"));
    assert!(pass);
}
