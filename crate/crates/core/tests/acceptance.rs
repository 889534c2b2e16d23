//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one pass/fail line (visible with `--nocapture`).
//!
//! Run with `cargo test -p declab-core --test acceptance -- --nocapture`.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use declab_core::caps::{curve_rescale, parabolic_rescale, partition_hypersurface};
use declab_core::decoupling::{
    decoupling_ratio, fit_exponent, predicted_lp_exponent, sharp_example_surface,
    DecouplingFlavor, OuterNorm, RatioMeasurement, RatioOptions,
};
use declab_core::energy::{
    energy_bruteforce, energy_hashed, moment_curve_lattice, moment_integral_torus,
    vinogradov_energy,
};
use declab_core::evolution::{
    strichartz_norm, subspace_initial_data, sweep_sampling, ModeSet, TorusSpec,
};
use declab_core::geometry::{
    section_curvatures, transversality_volume, Hyperplane, ModelCurve, Signature,
};
use declab_core::numerology::{self, q, BootstrapVerdict, Rational};
use declab_core::sums::{eval_exp_sum_with, Atom, Backend, FrequencySet, GridSpec};

fn report(id: u32, what: &str, pass: bool, elapsed: Duration, detail: String) -> bool {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id} ({what}, {elapsed:.2?}): {detail}");
    pass
}

#[test]
fn criterion_01_exact_energy_identity() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0u32;
    let mut ok = true;
    while checked < 200 {
        let dim = rng.gen_range(1..=3usize);
        let k = rng.gen_range(1..=3u32);
        let size = rng.gen_range(1..=12usize);
        let atoms: Vec<Vec<i64>> = (0..size)
            .map(|_| (0..dim).map(|_| rng.gen_range(-9..=9)).collect())
            .collect();
        let brute = energy_bruteforce(&atoms, k).unwrap();
        let hashed = energy_hashed(&atoms, k).unwrap();
        let moment = moment_integral_torus(&atoms, k).unwrap();
        if brute != hashed || brute != moment {
            ok = false;
            eprintln!("mismatch on {atoms:?} k={k}: {brute} {hashed} {moment}");
        }
        checked += 1;
    }
    let parabola = moment_curve_lattice(3, 2).unwrap();
    ok &= energy_bruteforce(&parabola, 2).unwrap() == 15;
    ok &= energy_hashed(&parabola, 2).unwrap() == 15;
    ok &= moment_integral_torus(&parabola, 2).unwrap() == 15;

    let elapsed = t0.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    assert!(report(
        1,
        "exact energy identity",
        ok,
        elapsed,
        format!("200 random integer sets + parabola value 15, all three routes equal"),
    ));
}

#[test]
fn criterion_02_vinogradov_growth() {
    let t0 = Instant::now();
    let mut series = Vec::new();
    for count in [8u64, 16, 32, 64, 128] {
        let value = vinogradov_energy(count, 2, 3).unwrap();
        series.push((count as f64, value as f64));
    }
    let fit = fit_exponent(&series).unwrap();
    let elapsed = t0.elapsed();
    let ok = (3.0..=3.4).contains(&fit.slope) && elapsed < Duration::from_secs(60);
    assert!(report(
        2,
        "Vinogradov growth",
        ok,
        elapsed,
        format!("fitted exponent {:.4} in [3.0, 3.4]", fit.slope),
    ));
}

fn strichartz_sweep(entries: &[f64]) -> Vec<(f64, f64)> {
    let signature = Signature::new(entries.to_vec()).unwrap();
    let mut series = Vec::new();
    for n in [8i64, 16, 32, 64, 128] {
        let spec = TorusSpec::new(signature.clone(), n).unwrap();
        // Diagonal-line data; for the hyperbolic signature this is exactly
        // the flat-subspace data.
        let data = if signature.hyperbolic_index() >= 1 {
            subspace_initial_data(&spec).unwrap()
        } else {
            ModeSet::new(
                (-n..=n).map(|k| (vec![k, k], Complex64::new(1.0, 0.0))).collect(),
            )
            .unwrap()
        };
        let sampling = sweep_sampling(&spec, &data, 4.0, 1.0, 4200);
        let m = strichartz_norm(&spec, &data, 4.0, 1.0, sampling).unwrap();
        series.push((n as f64, m.ratio));
    }
    series
}

#[test]
fn criterion_03_strichartz_sharp_example() {
    let t0 = Instant::now();
    let fit = fit_exponent(&strichartz_sweep(&[1.0, -1.0])).unwrap();
    let predicted =
        declab_core::evolution::predicted_strichartz_exponent(3, 4.0, &Signature::new(vec![1.0, -1.0]).unwrap())
            .unwrap();
    let elapsed = t0.elapsed();
    let ok = (fit.slope - predicted).abs() <= 0.05
        && (predicted - 0.25).abs() < 1e-12
        && elapsed < Duration::from_secs(300);
    assert!(report(
        3,
        "Strichartz sharp example",
        ok,
        elapsed,
        format!("fitted exponent {:.4} vs predicted 0.25 +/- 0.05", fit.slope),
    ));
}

#[test]
fn criterion_04_elliptic_contrast() {
    let t0 = Instant::now();
    let fit = fit_exponent(&strichartz_sweep(&[1.0, 1.0])).unwrap();
    let elapsed = t0.elapsed();
    let ok = fit.slope <= 0.08 && elapsed < Duration::from_secs(300);
    assert!(report(
        4,
        "elliptic contrast",
        ok,
        elapsed,
        format!("fitted exponent {:.4} <= 0.08 (predicted 0)", fit.slope),
    ));
}

/// Shared parabola sweep for criteria 5 and 6: the l^2 measurement carries
/// the cap norms, from which the l^p aggregate is recomputed exactly.
struct DecoupleSweep {
    deltas: Vec<f64>,
    measurements: Vec<RatioMeasurement>,
    elapsed: Duration,
}

fn parabola_sweep() -> &'static DecoupleSweep {
    static SWEEP: OnceLock<DecoupleSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let t0 = Instant::now();
        let s = Signature::new(vec![1.0]).unwrap();
        let deltas: Vec<f64> = (1..=5).map(|k| 4f64.powi(-k)).collect();
        let measurements = deltas
            .iter()
            .map(|&delta| {
                let set = sharp_example_surface(&s, delta, 1.0).unwrap();
                let partition = partition_hypersurface(&s, delta).unwrap();
                let radius = 1.0 / delta;
                let samples = (2.0 * radius / 0.25) as usize;
                let grid = GridSpec::ball(vec![0.0, 0.0], radius, samples).unwrap();
                decoupling_ratio(
                    &set,
                    &partition,
                    6.0,
                    DecouplingFlavor::linear_l2(),
                    &grid,
                    RatioOptions::default(),
                )
                .unwrap()
            })
            .collect();
        DecoupleSweep { deltas, measurements, elapsed: t0.elapsed() }
    })
}

#[test]
fn criterion_05_l2_ratio_near_boundedness() {
    let sweep = parabola_sweep();
    let series: Vec<(f64, f64)> = sweep
        .deltas
        .iter()
        .zip(&sweep.measurements)
        .map(|(d, m)| (*d, m.ratio))
        .collect();
    let fit = fit_exponent(&series).unwrap();
    let ok = (-0.15..=0.05).contains(&fit.slope)
        && sweep.elapsed < Duration::from_secs(600);
    assert!(report(
        5,
        "l2 ratio near-boundedness",
        ok,
        sweep.elapsed,
        format!("fitted exponent {:.4} in [-0.15, 0.05] (predicted 0)", fit.slope),
    ));
}

#[test]
fn criterion_06_lp_prediction_direction() {
    let sweep = parabola_sweep();
    let p = 6.0;
    let mut trivial_ok = true;
    let series: Vec<(f64, f64)> = sweep
        .deltas
        .iter()
        .zip(&sweep.measurements)
        .map(|(d, m)| {
            let lp_ratio = m.ratio_with_outer(OuterNorm::Lp, p);
            let caps = m.cap_norms.len() as f64;
            if lp_ratio > caps.powf(1.0 - 2.0 / p) * 1.05 {
                trivial_ok = false;
            }
            (*d, lp_ratio)
        })
        .collect();
    let fit = fit_exponent(&series).unwrap();
    let predicted = predicted_lp_exponent(2, p).unwrap();
    let ok = trivial_ok && fit.slope >= predicted - 0.12;
    assert!(report(
        6,
        "lp prediction direction",
        ok,
        sweep.elapsed,
        format!(
            "fitted exponent {:.4} >= {:.4}; trivial bound {}",
            fit.slope,
            predicted - 0.12,
            if trivial_ok { "holds everywhere" } else { "violated" }
        ),
    ));
}

#[test]
fn criterion_07_geometry_exactness() {
    let t0 = Instant::now();
    let mut ok = true;

    // Flat-line triple: exactly zero volume.
    let h = Signature::new(vec![1.0, -1.0]).unwrap();
    let normals: Vec<Vec<f64>> = [0.1, 0.25, 0.4]
        .iter()
        .map(|&t| h.unit_normal(&[t, t]).unwrap())
        .collect();
    ok &= transversality_volume(&normals).unwrap() == 0.0;

    // Flat diagonal section: [0] to 1e-10.
    let plane = Hyperplane::new(vec![1.0, -1.0], 0.0).unwrap();
    let curvatures = section_curvatures(&h, &plane, &[0.2, 0.2]).unwrap();
    ok &= curvatures.len() == 1 && curvatures[0].abs() <= 1e-10;

    // 100 random hyperplane sections in dimensions 3..5: at most one small
    // principal curvature each.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut trials = 0;
    while trials < 100 {
        let n = *[3usize, 4, 5].choose(&mut rng).unwrap();
        let entries: Vec<f64> =
            (0..n - 1).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let s = Signature::new(entries).unwrap();
        let normal: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if normal.iter().map(|x| x * x).sum::<f64>() < 1e-3 {
            continue;
        }
        let anchor: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let plane = {
            let p = Hyperplane::new(normal, 0.0).unwrap();
            let off: f64 = p.normal().iter().zip(&anchor).map(|(a, b)| a * b).sum();
            Hyperplane::new(p.normal().to_vec(), off).unwrap()
        };
        let c = match section_curvatures(&s, &plane, &anchor) {
            Ok(c) => c,
            Err(_) => continue,
        };
        if c.iter().filter(|v| v.abs() < 0.05).count() > 1 {
            ok = false;
        }
        trials += 1;
    }

    let elapsed = t0.elapsed();
    assert!(report(
        7,
        "geometry exactness",
        ok,
        elapsed,
        "flat triple volume exactly 0, flat section [0], at most one small curvature".into(),
    ));
}

#[test]
fn criterion_08_rescaling_exactness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4096);
    let mut ok = true;

    // Parabolic rescaling: surface preservation to 1e-12 on 1000 points.
    let s = Signature::new(vec![1.0, -1.0]).unwrap();
    let center = [0.125, -0.25];
    let sigma = 0.25;
    let map = parabolic_rescale(&s, &center, sigma).unwrap();
    for _ in 0..1000 {
        let base = [
            (center[0] + rng.gen_range(-0.5..0.5) * sigma).clamp(-0.5, 0.5),
            (center[1] + rng.gen_range(-0.5..0.5) * sigma).clamp(-0.5, 0.5),
        ];
        let image = map.apply(&s.lift(&base).unwrap());
        let residual = (image[2] - s.quadratic(&image[..2])).abs();
        if residual > 1e-12 {
            ok = false;
        }
    }

    // Curve rescaling: arc-to-unit reparametrization to 1e-12 on 1000 points.
    let dim = 3usize;
    let delta = 2f64.powi(-12);
    let root = delta.powf(0.25);
    let a = 0.375;
    let cmap = curve_rescale(a, delta, dim).unwrap();
    let curve = ModelCurve::moment(dim);
    for _ in 0..1000 {
        let s_par: f64 = rng.gen_range(0.0..1.0);
        let image = cmap.apply(&curve.point(a + s_par * root).unwrap());
        let target = curve.point(s_par).unwrap();
        let residual = image
            .iter()
            .zip(&target)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if residual > 1e-12 {
            ok = false;
        }
    }

    let elapsed = t0.elapsed();
    assert!(report(
        8,
        "rescaling exactness",
        ok,
        elapsed,
        "curve and parabolic rescaling identities hold to 1e-12 on 1000 random points each".into(),
    ));
}

#[test]
fn criterion_09_numerology() {
    let t0 = Instant::now();
    let mut ok = true;

    // Explicit constants, exact rational equalities.
    ok &= numerology::critical_index_signed(3, 0).unwrap() == Rational::from_integer(4);
    ok &= numerology::critical_index_signed(3, 1).unwrap() == Rational::from_integer(6);
    ok &= numerology::critical_index_signed(5, 2).unwrap() == Rational::from_integer(4);
    let c = numerology::iteration_constants(3, Rational::from_integer(6)).unwrap();
    ok &= c.xi == q(1, 4) && c.eta == q(1, 16);
    let c = numerology::iteration_constants(2, Rational::from_integer(8)).unwrap();
    ok &= c.xi == q(1, 3) && c.eta == q(1, 24);
    ok &= numerology::interpolation_weight(2, Rational::from_integer(6)).unwrap() == q(1, 2);
    ok &= numerology::growth_exponent_bound(2, Rational::from_integer(10)).unwrap() == q(1, 6);
    ok &= numerology::growth_exponent_bound(3, Rational::from_integer(12)).unwrap() == q(1, 18);
    ok &= numerology::no_decoupling_threshold(3, Rational::from_integer(1)).unwrap()
        == (1, Rational::from_integer(6));
    ok &= numerology::no_decoupling_threshold(3, q(1, 3)).unwrap()
        == (3, Rational::from_integer(12));
    ok &= numerology::no_decoupling_threshold(3, q(1, 2)).unwrap()
        == (2, Rational::from_integer(10));

    // gamma bound vanishes at p = 4n - 2 for n <= 10.
    for n in 2..=10u32 {
        ok &= numerology::growth_exponent_bound(n, Rational::from_integer(4 * n as i64 - 2))
            .unwrap()
            == Rational::from_integer(0);
    }

    // Branch continuity at the signed critical index.
    for n in 3..=8u32 {
        for d in 0..n - 1 {
            let crit = numerology::critical_index_signed(n, d).unwrap();
            ok &= numerology::l2_branch_elliptic(n, crit)
                == numerology::l2_branch_subspace(d, crit);
        }
    }

    // psi recursion vs closed form to 1e-12.
    for (n, p, gamma) in [(3u32, 6i64, 0.0), (3, 6, 0.4), (4, 5, 0.2), (2, 8, 0.7)] {
        let params =
            numerology::BootstrapParams::new(n, Rational::from_integer(p), gamma).unwrap();
        for s in [1u32, 10, 30, 60] {
            let a = numerology::psi_recursive(&params, s);
            let b = numerology::psi_closed_form(&params, s);
            if (a - b).abs() > 1e-12 {
                ok = false;
            }
        }
    }

    // Bootstrap contradiction across the full grid, s0 = 60, eps = 1e-8.
    for n in 3..=6u32 {
        let crit = numerology::critical_index(n).unwrap();
        for p in [crit + q(1, 2), crit + q(1, 1), crit + q(2, 1), crit + q(4, 1), crit * q(2, 1)] {
            for alpha in [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5] {
                let v = numerology::bootstrap_consistency(n, p, alpha, 60, 1e-8).unwrap();
                if v.verdict != BootstrapVerdict::Contradiction {
                    eprintln!("no contradiction at n={n} p={p} alpha={alpha}: {v:?}");
                    ok = false;
                }
            }
        }
    }

    let elapsed = t0.elapsed();
    assert!(report(
        9,
        "numerology",
        ok,
        elapsed,
        "exact constants, recursion agreement, vanishing bound, bootstrap contradictions".into(),
    ));
}

#[test]
fn criterion_10_backend_equivalence() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut ok = true;

    for trial in 0..25 {
        let dim = 1 + trial % 3;
        let q_lat = [1.0, 0.5, 0.25][trial % 3];
        let m = match dim {
            1 => 256,
            2 => 128,
            _ => 32,
        };
        let count = 1 + rng.gen_range(0..1000 / dim);
        let atoms: Vec<Atom> = (0..count)
            .map(|_| {
                Atom::new(
                    (0..dim).map(|_| q_lat * rng.gen_range(-8..=8) as f64).collect(),
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        let set = FrequencySet::with_lattice(atoms, q_lat).unwrap();
        let grid =
            GridSpec::cell(vec![0.0; dim], vec![1.0 / q_lat; dim], vec![m; dim]).unwrap();
        let direct = eval_exp_sum_with(&set, &grid, Backend::Direct).unwrap();
        let fast = eval_exp_sum_with(&set, &grid, Backend::LatticeFft).unwrap();
        let scale = direct
            .samples
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(1e-30);
        for (a, b) in direct.samples.iter().zip(&fast.samples) {
            if (a - b).norm() > 1e-9 * scale {
                ok = false;
            }
        }
    }

    // Determinism across worker counts: byte-identical samples.
    let atoms: Vec<Atom> = (0..200)
        .map(|_| {
            Atom::new(
                vec![rng.gen_range(-6..=6) as f64, rng.gen_range(-6..=6) as f64],
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    let set = FrequencySet::new(atoms).unwrap();
    let grid = GridSpec::unit_cell(2, 64).unwrap();
    let runs: Vec<Vec<Complex64>> = [1usize, 2, 4]
        .iter()
        .map(|k| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(*k)
                .build()
                .unwrap()
                .install(|| eval_exp_sum_with(&set, &grid, Backend::Direct).unwrap().samples)
        })
        .collect();
    for r in &runs[1..] {
        if r.iter().zip(&runs[0]).any(|(a, b)| a != b) {
            ok = false;
        }
    }

    let elapsed = t0.elapsed();
    assert!(report(
        10,
        "backend equivalence",
        ok,
        elapsed,
        "direct vs lattice-FFT <= 1e-9 relative; samples bit-identical across 1/2/4 workers".into(),
    ));
}
