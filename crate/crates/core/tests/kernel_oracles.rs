use std::f64::consts::PI;

use num_complex::Complex64;
use stickypair::model::ModelParams;
use stickypair::numerics::{laplace_invert, laplace_invert_complex, LaplaceInversionSpec, QuadratureSpec};
use stickypair::oracle::{numeric_g, OraclePairKernel, PairKernel, TimeQuadrature, TruncatedGenerator};
use stickypair::simulator::{occupation_laplace, simulate_pairs, PairState};
use stickypair::transforms::{
    g_kernel, g_kernel_assembled, local_time_laplace, local_time_laplace_complex, pi_leftright, TransformQuery,
};

#[test]
fn free_kernel_at_origin() {
    let g = g_kernel(&TransformQuery::new(0, 0, 0.0, 1.0, 0.0)).unwrap();
    assert!((g.re - 0.447_213_595_499_958).abs() < 1e-14);
    assert_eq!(g.im, 0.0);
}

#[test]
fn rate_rescaled_kernel_matches_oracle() {
    // α = 2.5 is the α = 1 kernel at λ/α, divided by α
    let params = ModelParams::new(2.5, 0.65, 1.3).unwrap();
    let gen = TruncatedGenerator::new(params, 50, 200).unwrap();
    let tq = TimeQuadrature::default();
    for (w, wp, k, l) in [(0, 2, 0.4, 1.5), (3, 1, -1.2, 2.5), (2, 2, 2.8, 4.0)] {
        let exact = g_kernel(&TransformQuery::new(w, wp, k, l, 0.0).with_model(&params)).unwrap();
        let numeric = numeric_g(w, wp, k, l, &gen, &tq).unwrap();
        assert!((exact - numeric).norm() < 1e-9, "({w},{wp},{k},{l}): {exact} vs {numeric}");
    }
}

#[test]
fn assembled_route_near_the_zero_of_nu() {
    // ν vanishes at κ = π/2 when p = 1/2; both routes must stay finite and agree nearby
    for k in [PI / 2.0 - 1e-3, PI / 2.0 + 1e-3] {
        for theta in [0.0, 2.0] {
            let q = TransformQuery::new(2, 3, k, 0.8, theta);
            let a = g_kernel(&q).unwrap();
            let b = g_kernel_assembled(&q).unwrap();
            assert!((a - b).norm() < 1e-9 * (1.0 + a.norm()), "{a} vs {b}");
        }
    }
}

#[test]
fn local_time_against_distance_chain() {
    let spec = LaplaceInversionSpec::default();
    for theta in [0.0, 1.0, 4.0] {
        let gen = TruncatedGenerator::distance_only(ModelParams::symmetric(theta).unwrap(), 80).unwrap();
        for w in [0u64, 2] {
            let init = gen.point_mass(0, w).unwrap();
            for t in [0.7, 1.5] {
                let oracle = gen.propagate(&init, t).unwrap().probs[0];
                let gs = laplace_invert(|s| local_time_laplace(w, theta, s).unwrap(), t, &spec).unwrap();
                let euler =
                    laplace_invert_complex(|s| local_time_laplace_complex(w, theta, s), t, &LaplaceInversionSpec::fourier_series())
                        .unwrap();
                assert!((gs.value - oracle).abs() < 1e-4, "GS θ={theta} w={w} t={t}");
                assert!((euler.value - oracle).abs() < 1e-7, "Euler θ={theta} w={w} t={t}");
            }
        }
    }
}

#[test]
fn local_time_against_monte_carlo() {
    let params = ModelParams::symmetric(1.0).unwrap();
    let est = occupation_laplace(&params, 2, &[0.3, 1.0], 60_000, 41).unwrap();
    for (e, l) in est.iter().zip([0.3, 1.0]) {
        let exact = local_time_laplace(2, 1.0, l).unwrap();
        assert!(e.z_score(exact).abs() < 4.0, "λ={l}: {} ± {} vs {exact}", e.mean, e.se);
    }
}

#[test]
fn leftright_transform_against_oracle_pair_law() {
    // ∫e^{−λt} P(X_t = x′, Y_t = y′) dt from the oracle pair law on a time grid
    let params = ModelParams::new(1.0, 0.5, 1.0).unwrap();
    let kernel = OraclePairKernel::new(params);
    let lambda = 2.0;
    let (x, y, xp, yp) = (0, 2, 0, 1);
    // Gauss–Legendre would do too; composite Simpson on [0, 12] is plenty at λ = 2
    let n = 480;
    let h = 12.0 / n as f64;
    let mut integral = 0.0;
    for i in 0..=n {
        let t = i as f64 * h;
        let law = kernel.pair_distribution(x, y, t).unwrap();
        let f = (-lambda * t).exp() * law.get(&(xp, yp)).copied().unwrap_or(0.0);
        let wgt = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        integral += wgt * f;
    }
    integral *= h / 3.0;
    let exact = pi_leftright(x, y, xp, yp, lambda, &params, &QuadratureSpec::default()).unwrap();
    assert!((integral - exact).abs() < 1e-6, "{integral} vs {exact}");
}

#[test]
fn simulated_distance_law_matches_oracle() {
    let params = ModelParams::new(1.0, 0.4, 2.0).unwrap();
    let t = 1.2;
    let trajs = simulate_pairs(&params, PairState { u: 0, w: 1 }, t, 12, 40_000).unwrap();
    let gen = TruncatedGenerator::new(params, 40, 40).unwrap();
    let law = gen.propagate(&gen.point_mass(0, 1).unwrap(), t).unwrap();
    let n = trajs.len() as f64;
    for k in 0..4u64 {
        let p_oracle: f64 = law.probs.iter().enumerate().filter(|(i, _)| gen.state(*i).1 == k).map(|(_, p)| p).sum();
        let hits = trajs.iter().filter(|tr| tr.state_at(t).w == k).count() as f64;
        let se = (p_oracle * (1.0 - p_oracle) / n).sqrt();
        assert!((hits / n - p_oracle).abs() < 4.0 * se, "w′={k}: {} vs {p_oracle}", hits / n);
    }
}

#[test]
fn complex_local_time_continues_the_real_one() {
    let v = local_time_laplace_complex(1, 2.0, Complex64::new(0.9, 0.0));
    assert!((v.re - local_time_laplace(1, 2.0, 0.9).unwrap()).abs() < 1e-15);
    assert_eq!(v.im, 0.0);
}
