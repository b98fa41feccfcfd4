use arofac2::clustering::{cluster_components, mean_shift};
use arofac2::parafac::parafac_als_traced;
use arofac2::pipeline::{arofac2_detailed, fit_weights};
use arofac2::synthgen::{generate, modal_rank};
use arofac2::{
    arofac2, gen_synthetic, match_components, noise_sweep, outer3, parafac_als, AlsConfig, Arofac2Config,
    NoiseScale, SynthSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn rank_one_tensor_any_seed() {
    let (u, v, w) = (unit(vec![1.0, -2.0, 0.5]), unit(vec![0.3, 1.0, 1.0, -1.0]), unit(vec![2.0, 1.0, 1.0, 0.0, -1.0]));
    let a = outer3(&u, &v, &w).unwrap().scaled(-1.5);
    for seed in [0, 1, 17] {
        let d = arofac2(&a, &Arofac2Config::default(), seed).unwrap();
        assert_eq!(d.rank, 1);
        assert!(d.rel_error < 1e-10);
        let f = &d.factors[0];
        for (got, want) in [(&f.u, &u), (&f.v, &v), (&f.w, &w)] {
            let c: f64 = got.iter().zip(want).map(|(x, y)| x * y).sum();
            assert!(c.abs() > 1.0 - 1e-10);
        }
    }
}

#[test]
fn noiseless_rank_three_links_true_factors() {
    for seed in 0..3 {
        let (a, truth) = gen_synthetic(&SynthSpec::new([8, 9, 10], 3, 0.0, seed)).unwrap();
        let out = arofac2_detailed(&a, &Arofac2Config::default(), seed).unwrap();
        let d = &out.decomposition;
        assert_eq!(d.rank, 3, "seed {seed}");
        let m = match_components(d, &truth).unwrap();
        assert!(m.min_matched_corr > 0.999);
        // every mode agrees on the match, so the linkage paired the right clusters
        for per_mode in &m.per_mode {
            for &(e, t) in &m.permutation {
                assert!(per_mode[e][t] > 0.999);
            }
        }
        assert!(out.diagnostics.rejected_links.is_empty());
    }
}

#[test]
fn noiseless_weights_fit_exactly() {
    let (a, truth) = gen_synthetic(&SynthSpec::new([20, 25, 30], 5, 0.0, 6)).unwrap();
    let triples: Vec<_> = truth.factors.iter().map(|f| (f.u.clone(), f.v.clone(), f.w.clone())).collect();
    let c = fit_weights(&a, &triples).unwrap();
    for (ci, f) in c.iter().zip(&truth.factors) {
        assert!((ci - f.weight).abs() < 1e-8 * f.weight.abs());
    }
    let mut d = truth.decomposition();
    for (f, ci) in d.factors.iter_mut().zip(&c) {
        f.weight = *ci;
    }
    assert!(d.with_fit(&a).unwrap().rel_error < 1e-8);
}

#[test]
fn without_mode3_gives_slice_weights() {
    let (a, truth) = gen_synthetic(&SynthSpec::new([10, 11, 12], 3, 0.0, 2)).unwrap();
    let cfg = Arofac2Config {
        compute_mode3: false,
        ..Arofac2Config::default()
    };
    let d = arofac2(&a, &cfg, 0).unwrap();
    assert_eq!(d.rank, 3);
    assert!(d.rel_error < 1e-8);
    let sw = d.slice_weights.as_ref().unwrap();
    assert_eq!((sw.len(), sw[0].len()), (12, 3));
    assert!(match_components(&d, &truth).unwrap().min_matched_corr > 0.999);
}

#[test]
fn als_noiseless_rank_five() {
    for seed in 0..5 {
        let (a, truth) = gen_synthetic(&SynthSpec::new([20, 25, 30], 5, 0.0, seed)).unwrap();
        let (d, trace) = parafac_als_traced(&a, &AlsConfig::new(5)).unwrap();
        assert!(d.rel_error < 1e-6, "seed {seed}: {}", d.rel_error);
        assert!(trace.sweeps > 1);
        assert!(match_components(&d, &truth).unwrap().min_matched_corr > 0.999);
    }
}

#[test]
fn als_loss_never_increases() {
    for seed in 0..10 {
        let (a, _) = gen_synthetic(&SynthSpec::new([6, 7, 8], 3, 0.2, seed)).unwrap();
        let cfg = AlsConfig {
            n_inits: 1,
            init_seed: seed,
            ..AlsConfig::new(4)
        };
        let (_, trace) = parafac_als_traced(&a, &cfg).unwrap();
        for w in trace.losses.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn als_is_deterministic() {
    let (a, _) = gen_synthetic(&SynthSpec::new([6, 7, 8], 2, 0.1, 3)).unwrap();
    let cfg = AlsConfig::new(2);
    assert_eq!(parafac_als(&a, &cfg).unwrap(), parafac_als(&a, &cfg).unwrap());
}

fn noisy_cluster(rng: &mut ChaCha8Rng, center: &[f64], n: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| unit(center.iter().map(|c| c + spread * rng.sample::<f64, _>(StandardNormal)).collect()))
        .collect()
}

#[test]
fn two_orthogonal_clusters_found() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pts = noisy_cluster(&mut rng, &[1.0, 0.0, 0.0], 50, 0.02);
    pts.extend(noisy_cluster(&mut rng, &[0.0, 1.0, 0.0], 50, 0.02));
    let res = mean_shift(&pts, 0.2, 1e-3).unwrap();
    assert_eq!(res.count, 2);
    for c in &res.centers {
        let members: Vec<&Vec<f64>> = pts.iter().filter(|p| p.iter().zip(c).map(|(x, y)| x * y).sum::<f64>() > 0.5).collect();
        let mean = unit((0..3).map(|i| members.iter().map(|p| p[i]).sum()).collect());
        let d: f64 = mean.iter().zip(c).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(d < 0.01);
    }
}

#[test]
fn clustering_ignores_order_and_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pts = Vec::new();
    for axis in 0..4 {
        let mut c = vec![0.1; 4];
        c[axis] = 1.0;
        pts.extend(noisy_cluster(&mut rng, &c, 30, 0.01));
    }
    let base = cluster_components(&pts, 0.02, 0.0).unwrap();
    let mut shuffled: Vec<Vec<f64>> = pts.iter().rev().cloned().collect();
    for (i, p) in shuffled.iter_mut().enumerate() {
        if i % 3 == 0 {
            p.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let other = cluster_components(&shuffled, 0.02, 0.0).unwrap();
    assert_eq!(base.count, 4);
    assert_eq!(other.count, 4);
    for c in &base.centers {
        let best = other
            .centers
            .iter()
            .map(|o| o.iter().zip(c).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-9);
    }
}

#[test]
fn noiseless_unfoldings_have_rank_r() {
    for r in [1, 3, 5] {
        let (a, _) = gen_synthetic(&SynthSpec::new([8, 9, 10], r, 0.0, 40 + r as u64)).unwrap();
        for mode in 1..=3 {
            let rank = a.unfold(mode).unwrap().singular_values().iter().filter(|&&s| s > 1e-8).count();
            assert_eq!(rank, r);
        }
    }
}

#[test]
fn noise_variance_matches_level() {
    for (scale, eps, var) in [(NoiseScale::StdDev, 0.3, 0.09), (NoiseScale::Variance, 0.3, 0.3)] {
        let spec = SynthSpec {
            noise: scale,
            ..SynthSpec::new([50, 50, 50], 3, eps, 12)
        };
        let syn = generate(&spec).unwrap();
        let n = syn.noise.as_slice().len() as f64;
        let mean = syn.noise.as_slice().iter().sum::<f64>() / n;
        let emp = syn.noise.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((emp - var).abs() < 0.05 * var, "{scale:?}: {emp} vs {var}");
        let rebuilt = syn.clean.add(&syn.noise).unwrap();
        assert_eq!(rebuilt, syn.tensor);
    }
}

#[test]
fn noiseless_sweep_rows_find_rank() {
    let base = SynthSpec::new([8, 9, 10], 3, 0.0, 0);
    let rows = noise_sweep(&base, &[0.0], 4, &Arofac2Config::default()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.detected_rank == Some(3)));
    assert_eq!(modal_rank(&rows, 0.0), Some(3));
}
