use fraccolloc::colloc::{frac_coefficients, PolyBlock};
use fraccolloc::field::{PiecewisePolyField, Piece};
use fraccolloc::frac::HistoryKernel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Local σ-coefficients of t^j on [a, a+τ]: (a + τσ)^j = Σ_q binom(j,q) a^{j-q} τ^q σ^q.
fn monomial_on_interval(j: usize, m: usize, a: f64, tau: f64) -> PolyBlock {
    let mut c = DMatrix::zeros(m + 1, 1);
    let mut binom = 1.0;
    for q in 0..=j {
        c[(q, 0)] = binom * a.powi((j - q) as i32) * tau.powi(q as i32);
        binom = binom * (j - q) as f64 / (q + 1) as f64;
    }
    PolyBlock(c)
}

#[test]
fn monomials_integrate_exactly_across_random_partitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for &alpha in &[0.2, 0.5, 0.9] {
        let m = 8;
        let kernel = HistoryKernel::new(alpha, m).unwrap();
        for _trial in 0..20 {
            let t_end: f64 = rng.random_range(0.1..2.0);
            let mut cuts = [rng.random_range(0.0..1.0f64), rng.random_range(0.0..1.0f64)];
            cuts.sort_by(f64::total_cmp);
            let b = [0.0, cuts[0].max(1e-3) * t_end, cuts[1].max(cuts[0] + 1e-3) * t_end, t_end];
            for j in 0..=8 {
                let mut field = PiecewisePolyField::new(1);
                for i in 0..3 {
                    let tau = b[i + 1] - b[i];
                    field.push_until(b[i + 1], Piece::Poly(monomial_on_interval(j, m, b[i], tau)));
                }
                let c = frac_coefficients(alpha, j)[j];
                let mut pts: Vec<f64> = (1..=10).map(|i| (t_end * i as f64 / 10.0).min(t_end)).collect();
                pts.extend([b[1] * (1.0 + 1e-9), b[2] * (1.0 + 1e-6), b[2] + 1e-3 * (b[3] - b[2])]);
                for &t in &pts {
                    let got = kernel.frac_int_eval(&field, t).unwrap()[0];
                    let want = c * t.powf(j as f64 + alpha);
                    let rel = ((got - want) / want).abs();
                    worst = worst.max(rel);
                    assert!(rel <= 1e-11, "α={alpha} j={j} t={t} breaks={b:?}: rel {rel:e}");
                }
            }
        }
    }
    eprintln!("worst relative error {worst:e}");
}
