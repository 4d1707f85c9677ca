use fraccolloc::colloc::{CollocationScheme, PointFamily};
use fraccolloc::eigen::eigenvalues;
use fraccolloc::spectral::{build_m, char_coeffs, gen_vandermonde_det, pencil_det};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smallest_singular_value(m: &DMatrix<f64>, lambda: Complex64) -> f64 {
    let n = m.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(m[(i, j)], 0.0) - if i == j { lambda } else { Complex64::new(0.0, 0.0) }
    });
    shifted.singular_values().min()
}

/// Pairs every value of `a` with its nearest unused value of `b` and returns
/// the largest distance.
fn match_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

#[test]
fn residual_contract_and_reference_agreement() {
    for family in PointFamily::ALL_BUILTIN {
        for m in 0..=12 {
            let Ok(s) = CollocationScheme::new(family, m) else { continue };
            if s.is_reduced() && m == 0 {
                continue;
            }
            for alpha in [0.1, 0.5, 0.9, 1.0] {
                let mm = build_m(&s, alpha).unwrap().m;
                let eigs = eigenvalues(&mm).unwrap();
                assert_eq!(eigs.len(), mm.nrows());
                let norm = mm.norm();
                for &lam in &eigs {
                    let r = smallest_singular_value(&mm, lam) / norm;
                    assert!(r <= 1e-10, "{family} m={m} α={alpha}: residual {r:e} at {lam}");
                }
                if m <= 8 {
                    let reference: Vec<Complex64> = mm.complex_eigenvalues().iter().copied().collect();
                    let scale = eigs.iter().map(|z| z.norm()).fold(1.0, f64::max);
                    let d = match_distance(&eigs, &reference);
                    assert!(d <= 1e-6 * scale, "{family} m={m} α={alpha}: reference mismatch {d:e}");
                }
            }
        }
    }
}

fn companion_roots(a: &[f64]) -> Vec<Complex64> {
    // p(λ) = Σ (−1)^j a_j λ^j, normalised by its leading coefficient
    let n = a.len() - 1;
    let sgn = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
    let lead = sgn(n) * a[n];
    let mut c = DMatrix::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -sgn(i) * a[i] / lead;
    }
    c.complex_eigenvalues().iter().copied().collect()
}

#[test]
fn characteristic_roots_match_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..60 {
        let m = trial % 6;
        let mut theta: Vec<f64> = (0..=m).map(|_| rng.random_range(0.05..1.0)).collect();
        theta.sort_by(f64::total_cmp);
        if theta.windows(2).any(|p| p[1] - p[0] < 0.03) {
            continue;
        }
        let s = CollocationScheme::custom(theta.clone()).unwrap();
        for alpha in [0.1, 0.5, 0.9] {
            let a = char_coeffs(&s, alpha).unwrap();
            let roots = companion_roots(&a);
            let eigs = eigenvalues(&build_m(&s, alpha).unwrap().m).unwrap();
            let scale = eigs.iter().map(|z| z.norm()).fold(1.0, f64::max);
            let d = match_distance(&eigs, &roots);
            assert!(d <= 1e-8 * scale, "θ={theta:?} α={alpha}: {d:e}");
            let direct = pencil_det(&s, alpha, -1.0).unwrap();
            let sum: f64 = a.iter().sum();
            assert!((direct - sum).abs() <= 1e-8 * sum.abs());
        }
    }
}

#[test]
fn generalised_vandermonde_positivity_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(1..=7);
        let mut theta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64)).map(|t| 1.0 - t).collect();
        let mut beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..8.0)).collect();
        theta.sort_by(f64::total_cmp);
        beta.sort_by(f64::total_cmp);
        // keep the instances resolvable in double precision
        if theta.windows(2).any(|p| p[1] - p[0] < 0.02) || beta.windows(2).any(|p| p[1] - p[0] < 0.05) {
            continue;
        }
        let d = gen_vandermonde_det(&theta, &beta).unwrap_or_else(|e| panic!("θ={theta:?} β={beta:?}: {e}"));
        assert!(d > 0.0);
        checked += 1;
    }
}

proptest! {
    #[test]
    fn repeated_exponent_gives_zero(
        theta in proptest::collection::btree_set(1u32..1000, 3),
        b in 0.0f64..5.0,
    ) {
        let th: Vec<f64> = theta.into_iter().map(|k| k as f64 / 1000.0).collect();
        prop_assert_eq!(gen_vandermonde_det(&th, &[0.0, b + 0.5, b + 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn reduced_spectrum_size(m in 1usize..=8, alpha in 0.01f64..1.0) {
        let s = CollocationScheme::new(PointFamily::GaussLobatto, m).unwrap();
        let e = eigenvalues(&build_m(&s, alpha).unwrap().m).unwrap();
        prop_assert_eq!(e.len(), m);
    }
}
