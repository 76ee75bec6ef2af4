//! Monte Carlo checks of the random components against known moments.

mod common;

use splitflow::config::{Experiment, ExperimentConfig};
use splitflow::counterexample::*;
use splitflow::gamma::error_gamma_norm_sq;
use splitflow::norms::{p_moment, HolderPolicy};
use splitflow::path::{discretized_path, exact_path, sample_fine_path};
use splitflow::rates::{pathwise_error_sweep, ErrorNorm, SweepConfig};
use splitflow::rng::{rng_stream, Domain, StreamKey};
use splitflow::spectral::*;

fn stats(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn normal_stream_moments() {
    let key = StreamKey::new(2024, 0, Domain::Diagnostics);
    let mut s = key.normals(3, 0);
    let draws: Vec<f64> = (0..500_000).flat_map(|_| {
        let (a, b) = s.next_pair();
        [a, b]
    }).collect();
    let n = draws.len() as f64;
    let (mean, var) = stats(&draws);
    assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "var {var}");
    let kurt = draws.iter().map(|x| x.powi(4)).sum::<f64>() / n;
    assert!((kurt - 3.0).abs() < 4.0 * (96.0 / n).sqrt(), "fourth moment {kurt}");
}

#[test]
fn addressed_draws_are_uncorrelated_across_steps_and_modes() {
    let key = StreamKey::new(7, 1, Domain::Diagnostics);
    let steps = 100_000u64;
    let a: Vec<f64> = (0..steps).map(|i| rng_stream(key, 0, i).0).collect();
    let b: Vec<f64> = (0..steps).map(|i| rng_stream(key, 1, i).0).collect();
    let lim = 4.0 / (steps as f64).sqrt();
    let corr = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / x.len() as f64;
    assert!(corr(&a[1..], &a[..a.len() - 1]).abs() < lim);
    assert!(corr(&a, &b).abs() < lim);
    // addressing matches sequential reads
    let mut seq = key.normals(0, 0);
    for &x in a.iter().take(100) {
        assert_eq!(seq.next_pair().0, x);
    }
}

#[test]
fn second_moment_of_standard_normal() {
    let key = StreamKey::new(1, 0, Domain::Diagnostics);
    let mut s = key.normals(0, 0);
    let x: Vec<f64> = (0..100_000).map(|_| s.next_pair().0.abs()).collect();
    let m = p_moment(&x, 2.0).unwrap();
    assert!((m.value - 1.0).abs() <= 4.0 * m.std_error, "{m:?}");
    let m1 = p_moment(&x, 1.0).unwrap();
    let want = (2.0 / std::f64::consts::PI).sqrt();
    assert!((m1.value - want).abs() <= 4.0 * m1.std_error, "{m1:?}");
}

/// `int_0^1 f dw` by exact summation over a dyadic grid fine enough to
/// resolve every interval of the truncated profile.
fn stochastic_integral_lp(prof: &DyadicProfile, log2_cells: u32, key: StreamKey) -> f64 {
    let cells = 1usize << log2_cells;
    let h = 1.0 / cells as f64;
    let mut stream = key.normals(0, 0);
    let mut acc = SparseVec::default();
    for i in 0..cells {
        let dw = stream.next_pair().0 * h.sqrt();
        acc.axpy(dw, &eval_profile((i as f64 + 0.5) * h, prof));
    }
    acc.lp_pow(prof.p)
}

#[test]
fn integral_moment_matches_simulation() {
    for (k_max, expect) in [(1u32, Some(0.2372)), (4, None)] {
        let prof = DyadicProfile::new(1.0, 3.0, 0.25, k_max).unwrap();
        // widths 2^{-uk} must be resolved by the grid
        let log2 = 3 * k_max + 1;
        let x: Vec<f64> = (0..20_000)
            .map(|s| stochastic_integral_lp(&prof, log2, StreamKey::new(9, s, Domain::Counterexample)))
            .collect();
        let (mean, var) = stats(&x);
        let se = (var / x.len() as f64).sqrt();
        let exact = exact_integral_moment(&prof).truncated;
        if let Some(v) = expect {
            assert!((exact - v).abs() < 1e-4);
        }
        assert!((mean - exact).abs() <= 4.0 * se, "k_max {k_max}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn discretized_field_second_moment() {
    let prof = DyadicProfile::new(1.0, 3.0, 0.25, 6).unwrap();
    let steps = 16usize;
    let grid = [-0.3, 0.0, 0.01, 0.2, 0.51];
    let expected: Vec<f64> = grid
        .iter()
        .map(|&s| {
            (1..=steps)
                .map(|i| eval_profile(i as f64 / steps as f64 + s, &prof).lp_pow(2.0) / steps as f64)
                .sum()
        })
        .collect();
    let samples = 20_000u64;
    let mut sq = vec![Vec::new(); grid.len()];
    for s in 0..samples {
        let mut st = StreamKey::new(4, s, Domain::Counterexample).normals(0, 0);
        let inc: Vec<f64> = (0..steps).map(|_| st.next_pair().0 / (steps as f64).sqrt()).collect();
        for (j, f) in simulate_discretized_field(&inc, &grid, &prof).iter().enumerate() {
            sq[j].push(f.lp_pow(2.0));
        }
    }
    for (j, want) in expected.iter().enumerate() {
        let (mean, var) = stats(&sq[j]);
        let se = (var / samples as f64).sqrt();
        assert!((mean - want).abs() <= 4.0 * se + 1e-15, "s {}: {mean} vs {want}", grid[j]);
    }
}

#[test]
fn s_integration_self_converges_on_default_config() {
    let cfg = ExperimentConfig::defaults(Experiment::Counterexample).counterexample;
    let n = 5u32;
    let steps = 1usize << n;
    let prof = DyadicProfile::new(cfg.p, cfg.u, cfg.r, n + cfg.extra_levels).unwrap();
    let window = prof.width(n);
    let g12 = s_grid(12, steps, window);
    let g13 = s_grid(13, steps, window);
    for s in 0..4u64 {
        let mut st = StreamKey::new(17, s, Domain::Counterexample).normals(0, 0);
        let inc: Vec<f64> = (0..steps).map(|_| st.next_pair().0 / (steps as f64).sqrt()).collect();
        let a = lq_lp_norm(&simulate_discretized_field(&inc, &g12, &prof), &g12, cfg.p, cfg.q).unwrap();
        let b = lq_lp_norm(&simulate_discretized_field(&inc, &g13, &prof), &g13, cfg.p, cfg.q).unwrap();
        assert!((a - b).abs() < 0.01 * b, "sample {s}: {a} vs {b}");
        let exact = FieldLayout::new(n, &prof, cfg.q).unwrap().evaluate(&inc).unwrap().lq_pow.powf(1.0 / cfg.q);
        assert!((b - exact).abs() < 0.01 * exact, "sample {s}: {b} vs exact {exact}");
    }
}

#[test]
fn coupled_increments_match_covariance_per_mode() {
    let spec = GeneratorSpectrum::new(vec![-0.5, -30.0, -2000.0], 0.0).unwrap();
    let noise = NoiseModel::new(Embedding::Uniform(1.0), 0.0, 0.0).unwrap();
    let grid = GridSpec::new(1.0, 1, 50_000).unwrap();
    let path = sample_fine_path(&spec, &noise, &grid, StreamKey::new(3, 0, Domain::Diagnostics));
    let delta = grid.fine_step();
    let m = grid.fine as f64;
    for k in 0..spec.len() {
        let [[d, c], [_, v]] = splitflow::path::coupled_step_cov(spec.eigenvalue(k), delta);
        let (b, e) = (&path.increments[k], &path.convolutions[k]);
        // Gaussian product moments give the standard errors.
        for (f, want, var) in [
            (&(|i: usize| b[i] * b[i]) as &dyn Fn(usize) -> f64, d, 2.0 * d * d),
            (&|i: usize| e[i] * e[i], v, 2.0 * v * v),
            (&|i: usize| b[i] * e[i], c, d * v + c * c),
        ] {
            let est = (0..grid.fine).map(f).sum::<f64>() / m;
            assert!((est - want).abs() <= 3.0 * (var / m).sqrt(), "mode {k}: {est} vs {want}");
        }
    }
    // distinct modes are independent
    let cross = (0..grid.fine).map(|i| path.increments[0][i] * path.increments[1][i]).sum::<f64>() / m;
    assert!(cross.abs() <= 4.0 * delta / m.sqrt());
}

fn small_sweep(samples: usize) -> SweepConfig {
    SweepConfig {
        spec: dirichlet_spectrum(64).unwrap(),
        noise: NoiseModel::white(-0.3),
        horizon: 1.0,
        alpha: 0.0,
        gamma: 0.1,
        p: 2.0,
        n_grid: vec![4, 8, 16],
        fine: 128,
        samples,
        seed: 31,
        norm: ErrorNorm::Spectral,
        policy: HolderPolicy::DyadicGaps,
        sup_only: false,
    }
}

#[test]
fn gaussian_norm_moments_stay_comparable() {
    let spec = dirichlet_spectrum(64).unwrap();
    let noise = NoiseModel::white(-0.3);
    let grid = GridSpec::new(1.0, 1, 64).unwrap();
    let weights = spec.weights(-0.6);
    let norms: Vec<f64> = (0..2000u64)
        .map(|s| {
            let path = sample_fine_path(&spec, &noise, &grid, StreamKey::new(5, s, Domain::FinePath));
            let u = exact_path(&path);
            let d = discretized_path(&path, 8).unwrap();
            (0..spec.len())
                .map(|k| weights[k] * (d.values[k][64] - u.values[k][64]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let m2 = p_moment(&norms, 2.0).unwrap().value;
    for p in [1.0, 2.0, 4.0] {
        let ratio = p_moment(&norms, p).unwrap().value / m2;
        assert!((0.5..=3.0).contains(&ratio), "p {p}: ratio {ratio}");
    }
    for table in [pathwise_error_sweep(&small_sweep(400)).unwrap()] {
        for row in &table.rows {
            assert!(row.ci_low <= row.error && row.error <= row.ci_high);
        }
    }
}

#[test]
fn final_time_error_matches_isometry_on_small_model() {
    let spec = dirichlet_spectrum(32).unwrap();
    let noise = NoiseModel::white(-0.3);
    let grid = GridSpec::new(1.0, 1, 64).unwrap();
    let weights = spec.weights(-0.6);
    for n in [2usize, 16] {
        let sq: Vec<f64> = (0..3000u64)
            .map(|s| {
                let path = sample_fine_path(&spec, &noise, &grid, StreamKey::new(6, s, Domain::FinePath));
                let u = exact_path(&path);
                let d = discretized_path(&path, n).unwrap();
                (0..spec.len()).map(|k| weights[k] * (d.values[k][64] - u.values[k][64]).powi(2)).sum()
            })
            .collect();
        let (mean, var) = stats(&sq);
        let se = (var / sq.len() as f64).sqrt();
        let want = error_gamma_norm_sq(&spec, &noise, n, 1.0, 1.0, 0.0).unwrap().value_sq;
        assert!((mean - want).abs() <= 3.0 * se, "n {n}: {mean} vs {want}");
    }
}

#[test]
fn confidence_width_follows_square_root_law() {
    let narrow = pathwise_error_sweep(&small_sweep(1600)).unwrap();
    let wide = pathwise_error_sweep(&small_sweep(400)).unwrap();
    for (a, b) in wide.rows.iter().zip(&narrow.rows) {
        let ratio = (a.ci_high - a.ci_low) / (b.ci_high - b.ci_low);
        assert!((1.6..=2.5).contains(&ratio), "n {}: width ratio {ratio}", a.n);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let spec = dirichlet_spectrum(40).unwrap();
            let grid = GridSpec::new(1.0, 1, 256).unwrap();
            let path = sample_fine_path(&spec, &NoiseModel::white(-0.3), &grid, StreamKey::new(1, 2, Domain::FinePath));
            let table = pathwise_error_sweep(&small_sweep(24)).unwrap();
            (path, table)
        })
    };
    let (p1, t1) = run(1);
    let (p4, t4) = run(4);
    assert_eq!(p1, p4);
    assert_eq!(t1, t4);
}
