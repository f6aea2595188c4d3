use std::sync::Arc;

use ldpspline::adaptive::{lepski_select, variance_proxy, LepskiConfig};
use ldpspline::harness::densities::TestDensity;
use ldpspline::privacy::{clean_release, plan_spline_noise, plan_wavelet_noise, release, MechanismKind};
use ldpspline::quadrature::{uniform_breaks, GaussLegendre};
use ldpspline::splines::{l2_project, BSplineBasis};
use ldpspline::wavelets::{base_level, MultiresolutionLadder, WaveletCoefficients};
use ldpspline::{wavelet_estimate, DensityEstimate, FunctionalSpec, ReferenceDensity, ReleaseBundle};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const TAU: f64 = std::f64::consts::TAU;

fn exact_bundle(ladder: &Arc<MultiresolutionLadder>, f: impl Fn(f64) -> f64) -> ReleaseBundle {
    let plan = plan_wavelet_noise(ladder, 1.0, 2.0).unwrap().without_noise();
    let mut b = release(&[0.5], &plan, 0, false).unwrap();
    let WaveletCoefficients { levels, .. } = ladder.analyze(f, ladder.j_max()).unwrap();
    b.levels = levels;
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity_derivative_vanishes(d in 1usize..=4, j in 0u32..=8, u in 0.01f64..0.99) {
        let b = BSplineBasis::new(j, d).unwrap();
        let x = (b.cell_of(u) as f64 + u) * b.cell_width();
        let x = x.min(1.0 - 1e-9);
        let s: f64 = b.local(x, 1).ders[1][..=d].iter().sum();
        prop_assert!(s.abs() <= 1e-8 * b.cells() as f64);
    }

    #[test]
    fn wavelet_nonzero_counts(d in 1usize..=4, x in 0.0f64..=1.0) {
        let ladder = MultiresolutionLadder::new(d, base_level(d) + 3).unwrap();
        let mut buf = Vec::new();
        ladder.eval_level(ladder.first_level(), x, 0, &mut buf);
        prop_assert!(buf.iter().filter(|(_, v)| *v != 0.0).count() <= d + 1);
        for j in ladder.j0()..=ladder.j_max() {
            ladder.eval_level(j, x, 0, &mut buf);
            prop_assert!(buf.iter().filter(|(_, v)| *v != 0.0).count() <= 3 * d + 1);
        }
    }

    #[test]
    fn larger_budget_means_smaller_scales(d in 1usize..=4, a1 in 0.1f64..4.0, bump in 0.01f64..2.0) {
        let a2 = a1 + bump;
        let ladder = Arc::new(MultiresolutionLadder::new(d, base_level(d) + 2).unwrap());
        let p1 = plan_wavelet_noise(&ladder, a1, 2.0).unwrap();
        let p2 = plan_wavelet_noise(&ladder, a2, 2.0).unwrap();
        prop_assert!(p1.scales().iter().zip(p2.scales()).all(|(s1, s2)| s2 < s1));
        let basis = Arc::new(BSplineBasis::new(4, d).unwrap());
        let q1 = plan_spline_noise(&basis, a1).unwrap();
        let q2 = plan_spline_noise(&basis, a2).unwrap();
        prop_assert!(q2.scales()[0] < q1.scales()[0]);
    }

    #[test]
    fn bundle_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 11), n in 1u64..1_000_000, alpha in 0.01f64..10.0) {
        let basis = Arc::new(BSplineBasis::new(3, 3).unwrap());
        let plan = plan_spline_noise(&basis, alpha).unwrap();
        let mut b = release(&[0.5], &plan, 0, false).unwrap();
        b.levels = vec![vals];
        b.n = n;
        let text = b.to_json().unwrap();
        let back = ReleaseBundle::from_json(&text).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }
}

#[test]
fn wavelet_sup_norms_scale_like_half_power() {
    for d in 1..=4 {
        let j0 = base_level(d);
        let ladder = MultiresolutionLadder::new(d, j0 + 4).unwrap();
        let r: Vec<f64> = (j0..=j0 + 4).map(|j| ladder.level_sup(j) / (j as f64 / 2.0).exp2()).collect();
        let (lo, hi) = r.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi / lo <= 1.1, "d={d}: {r:?}");
    }
}

#[test]
fn dual_derivative_bound_is_stable() {
    let d = 3;
    let j0 = base_level(d);
    let ladder = MultiresolutionLadder::new(d, j0 + 3).unwrap();
    for s in 0..=1usize {
        let mut cs = Vec::new();
        for j in j0..=j0 + 3 {
            let (lo, hi) = ladder.index_range(j);
            let mut worst = 0.0f64;
            for t in 0..=400 {
                let x = (t as f64 + 0.31) / 401.5;
                let sum: f64 = (lo..=hi).map(|k| ladder.dual_value(j, k, x, s + 1).unwrap().powi(2)).sum();
                worst = worst.max(sum);
            }
            cs.push(worst / (j as f64 * (2 * s + 3) as f64).exp2());
        }
        let (lo, hi) = cs.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi / lo <= 2.0, "s={s}: {cs:?}");
    }
}

#[test]
fn sanitized_means_are_unbiased() {
    let f = TestDensity::parse("sine-mix").unwrap();
    let samples = f.sample(100_000, &mut ChaCha20Rng::seed_from_u64(8));
    let basis = Arc::new(BSplineBasis::new(3, 3).unwrap());
    let plan = plan_spline_noise(&basis, 1.0).unwrap();
    let noisy = release(&samples, &plan, 99, true).unwrap();
    let clean = clean_release(&samples, &plan).unwrap();
    let records = noisy.records.as_ref().unwrap();
    let n = records.len() as f64;
    for (k, (m, c)) in noisy.levels[0].iter().zip(&clean.levels[0]).enumerate() {
        let var = records.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((m - c).abs() <= 3.0 * (var / n).sqrt(), "coordinate {k}: {m} vs {c}");
    }
}

#[test]
fn estimate_is_linear_in_the_bundle() {
    let f = TestDensity::parse("poly-density").unwrap();
    let samples = f.sample(3000, &mut ChaCha20Rng::seed_from_u64(3));
    let ladder = Arc::new(MultiresolutionLadder::new(3, 4).unwrap());
    let plan = plan_wavelet_noise(&ladder, 1.0, 2.0).unwrap();
    let b1 = release(&samples, &plan, 1, false).unwrap();
    let b2 = release(&samples, &plan, 2, false).unwrap();
    let mut mid = b1.clone();
    for (m, (x, y)) in mid.levels.iter_mut().zip(b1.levels.iter().zip(&b2.levels)) {
        *m = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
    }
    let e1 = wavelet_estimate(&b1, &ladder, 4).unwrap();
    let e2 = wavelet_estimate(&b2, &ladder, 4).unwrap();
    let em = wavelet_estimate(&mid, &ladder, 4).unwrap();
    for t in 0..=200 {
        let x = t as f64 / 200.0;
        let want = 0.5 * (e1.value(x, 0).unwrap() + e2.value(x, 0).unwrap());
        assert!((em.value(x, 0).unwrap() - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }
}

#[test]
fn exact_coefficients_give_the_orthogonal_projection() {
    let f = |x: f64| 1.0 + 0.5 * (TAU * x).sin();
    let ladder = Arc::new(MultiresolutionLadder::new(3, 5).unwrap());
    let bundle = exact_bundle(&ladder, f);
    for jn in ladder.first_level()..=ladder.j_max() {
        let est = wavelet_estimate(&bundle, &ladder, jn).unwrap();
        let proj = l2_project(f, &Arc::new(BSplineBasis::new(jn + 1, 3).unwrap()), 16).unwrap();
        for t in 0..=500 {
            let x = t as f64 / 500.0;
            assert!((est.value(x, 0).unwrap() - proj.value(x, 0).unwrap()).abs() <= 1e-7, "jn={jn} x={x}");
        }
    }
}

#[test]
fn pointwise_variance_follows_the_level_proxy() {
    let d = 3;
    let alpha = 1.0;
    let f = TestDensity::parse("sine-mix").unwrap();
    let ladder = Arc::new(MultiresolutionLadder::new(d, base_level(d) + 3).unwrap());
    let plan = plan_wavelet_noise(&ladder, alpha, 2.0).unwrap();
    let gl = GaussLegendre::new(12);
    let mut ratios = Vec::new();
    // the base level carries its own noise calibration, so the sweep starts at the first detail level
    for jn in ladder.j0()..=ladder.j_max() {
        let mut buf = Vec::new();
        let weights: Vec<Vec<f64>> = (ladder.first_level()..=jn)
            .map(|j| {
                ladder.eval_level(j, 0.5, 0, &mut buf);
                let mut v = vec![0.0; ladder.level_dim(j)];
                for &(p, val) in &buf {
                    v[p] = val;
                }
                ladder.solve_gram(j, &v)
            })
            .collect();
        let noise: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, w)| 2.0 * plan.scales()[i].powi(2) * w.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let kernel = |y: f64| {
            let mut b = Vec::new();
            let mut s = 0.0;
            for (i, j) in (ladder.first_level()..=jn).enumerate() {
                ladder.eval_level(j, y, 0, &mut b);
                s += b.iter().map(|&(p, v)| weights[i][p] * v).sum::<f64>();
            }
            s
        };
        let breaks = uniform_breaks(1 << (jn + 2));
        let m1 = gl.integrate_cells(&breaks, |y| kernel(y) * f.value(y));
        let m2 = gl.integrate_cells(&breaks, |y| kernel(y).powi(2) * f.value(y));
        for n in [1u64 << 10, 1 << 13, 1 << 16] {
            let var = (noise + m2 - m1 * m1) / n as f64;
            ratios.push(var / variance_proxy(n, alpha, 2.0, jn, 0) * jn as f64);
        }
    }
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(hi / lo <= 3.0, "{ratios:?}");
}

#[test]
fn lepski_trace_replays() {
    let f = TestDensity::parse("sine-mix").unwrap();
    let n = 1u64 << 14;
    let samples = f.sample(n as usize, &mut ChaCha20Rng::seed_from_u64(21));
    let ladder = Arc::new(MultiresolutionLadder::new(3, 3).unwrap());
    let plan = plan_wavelet_noise(&ladder, 4.0, 2.0).unwrap();
    let bundle = release(&samples, &plan, 5, false).unwrap();
    for tau in [1.0, 1e4, 1e8, 1e12] {
        let cfg = LepskiConfig { tau, ..LepskiConfig::default() };
        let (j, trace) = lepski_select(&bundle, &ladder, n, 4.0, &cfg).unwrap();
        for c in &trace.comparisons {
            assert_eq!(c.threshold, tau * variance_proxy(n, 4.0, 2.0, c.l, c.s));
        }
        let top = *trace.candidates.last().unwrap();
        assert!(j == top || trace.admissible(j));
        for &lower in trace.candidates.iter().filter(|&&c| c < j) {
            assert!(!trace.admissible(lower));
        }
    }
}

fn sine_derivs(x: f64, q: usize) -> f64 {
    let w = TAU;
    let s = match q % 4 {
        0 => (w * x).sin(),
        1 => (w * x).cos(),
        2 => -(w * x).sin(),
        _ => -(w * x).cos(),
    };
    (if q == 0 { 1.0 } else { 0.0 }) + 0.5 * w.powi(q as i32) * s
}

fn bump_derivs(x: f64, q: usize) -> f64 {
    // cos(2 pi x) has zero mean on [0, 1]
    let w = TAU;
    let c = match q % 4 {
        0 => (w * x).cos(),
        1 => -(w * x).sin(),
        2 => -(w * x).cos(),
        _ => (w * x).sin(),
    };
    w.powi(q as i32) * c
}

#[test]
fn first_order_expansion_remainder_is_quadratic() {
    let specs = [
        FunctionalSpec::parse("point:r=1,x0=0.3").unwrap(),
        FunctionalSpec::parse("power:m=0,q=2").unwrap(),
        FunctionalSpec::parse("power:m=1,q=2").unwrap(),
        FunctionalSpec::affinity(ReferenceDensity::new("uniform", |_| 1.0)),
        FunctionalSpec::parse("entropy").unwrap(),
        FunctionalSpec::parse("fisher").unwrap(),
    ];
    let cells = 256;
    for spec in &specs {
        let base = spec.evaluate_function(&sine_derivs, cells).unwrap().value;
        let m = spec.needed_order();
        let mut ratios = Vec::new();
        for eta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let g = move |x: f64, q: usize| sine_derivs(x, q) + eta * bump_derivs(x, q);
            let h = move |x: f64, q: usize| eta * bump_derivs(x, q);
            let value = spec.evaluate_function(&g, cells).unwrap().value;
            let linear = spec.derivative_apply(&sine_derivs, &h, cells);
            let norm2: f64 = (0..=m).map(|q| 0.5 * (eta * TAU.powi(q as i32)).powi(2)).sum();
            ratios.push((value - base - linear).abs() / norm2);
        }
        let bound = 4.0 * ratios[0] + 1e-3;
        assert!(ratios.iter().all(|r| *r <= bound), "{}: {ratios:?}", spec.id());
    }
}

#[test]
fn floor_is_inert_above_twice_its_level() {
    let ladder = Arc::new(MultiresolutionLadder::new(3, 5).unwrap());
    let est: DensityEstimate = wavelet_estimate(&exact_bundle(&ladder, |x| sine_derivs(x, 0)), &ladder, 5).unwrap();
    let g = ReferenceDensity::new("uniform", |_| 1.0);
    for spec in [FunctionalSpec::entropy(), FunctionalSpec::fisher(), FunctionalSpec::affinity(g)] {
        let a = spec.clone().with_floor(1e-6).evaluate(&est).unwrap();
        let b = spec.with_floor(5e-7).evaluate(&est).unwrap();
        assert_eq!(a, b);
        assert!(!a.floor_active);
    }
}

#[test]
fn plug_in_converges_with_exact_coefficients() {
    let truth = TestDensity::parse("sine-mix").unwrap();
    let ladder = Arc::new(MultiresolutionLadder::new(3, 6).unwrap());
    let bundle = exact_bundle(&ladder, |x| truth.value(x));
    let specs = [
        FunctionalSpec::parse("point:r=1,x0=0.3").unwrap(),
        FunctionalSpec::parse("power:m=0,q=2").unwrap(),
        FunctionalSpec::affinity(ReferenceDensity::new("uniform", |_| 1.0)),
        FunctionalSpec::parse("entropy").unwrap(),
        FunctionalSpec::parse("fisher").unwrap(),
    ];
    for spec in &specs {
        let oracle = truth.oracle(spec).unwrap();
        let errs: Vec<f64> = (3..=6)
            .map(|j| (spec.evaluate(&wavelet_estimate(&bundle, &ladder, j).unwrap()).unwrap().value - oracle).abs())
            .collect();
        assert!(errs[3] <= errs[0] / 8.0 || errs[3] <= 1e-10, "{}: {errs:?}", spec.id());
    }
    assert_eq!(bundle.mechanism, MechanismKind::Wavelet);
}
