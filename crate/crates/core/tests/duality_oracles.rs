use stickypair::duality::{xi_general, xi_homogeneous_laplace, CovarianceQuery, MomentProfile, SiteMap};
use stickypair::model::{ModelParams, PresetKind, ProcessPreset};
use stickypair::oracle::{OraclePairKernel, PairKernel, TimeQuadrature, TruncatedGenerator};
use stickypair::simulator::{jackknife_se, occupation_laplace, simulate_field_stream, stream_rng, InitialLaw, LatticeField};

/// ∫e^{−λt} P(w(t) = 0 | w(0) = d) dt from the truncated distance chain.
fn meeting_laplace(theta: f64, d: u64, lambda: f64) -> f64 {
    let gen = TruncatedGenerator::distance_only(ModelParams::symmetric(theta).unwrap(), 400).unwrap();
    gen.laplace(&gen.point_mass(0, d).unwrap(), &[lambda], &TimeQuadrature::default()).unwrap()[0].probs[0]
}

#[test]
fn homogeneous_laplace_example_three_ways() {
    // θ = 1, ρ = 1, χ = 0, |x − y| = 1, λ = 1
    let profile = MomentProfile::homogeneous(1.0, 0.0).unwrap();
    let q = CovarianceQuery { x: 0, y: 1, lambda: 1.0, theta: 1.0, profile: profile.clone() };
    let closed = xi_homogeneous_laplace(&q).unwrap();
    assert!(closed < 0.0);

    // here Ξ(t) = −P_1(w(t) = 0)
    let numeric = -meeting_laplace(1.0, 1, 1.0);
    assert!((numeric - closed).abs() < 1e-8, "{numeric} vs {closed}");

    let kernel = OraclePairKernel::new(ModelParams::symmetric(1.0).unwrap());
    let gen = TruncatedGenerator::distance_only(ModelParams::symmetric(1.0).unwrap(), 200).unwrap();
    for t in [0.4, 2.5] {
        let meet = gen.propagate(&gen.point_mass(0, 1).unwrap(), t).unwrap().probs[0];
        assert!((xi_general(t, 0, 1, &profile, &kernel).unwrap() + meet).abs() < 1e-12);
    }

    let mc = occupation_laplace(&ModelParams::symmetric(1.0).unwrap(), 1, &[1.0], 80_000, 5).unwrap()[0];
    assert!(((-mc.mean) - closed).abs() < 4.0 * mc.se, "{} ± {} vs {closed}", -mc.mean, mc.se);
}

#[test]
fn printed_root_power_does_not_match_the_oracle() {
    // the covariance decays like ζ^{|x−y|}; a √2 in the exponent would not reproduce the oracle
    let profile = MomentProfile::homogeneous(1.0, 0.0).unwrap();
    let (lambda, d) = (0.8f64, 3i64);
    let numeric = -meeting_laplace(1.0, d as u64, lambda);
    let closed = xi_homogeneous_laplace(&CovarianceQuery { x: 0, y: d, lambda, theta: 1.0, profile }).unwrap();
    assert!((numeric - closed).abs() < 1e-8, "{numeric} vs {closed}");
    let zeta = 1.0 + lambda / 2.0 - (lambda + lambda * lambda / 4.0).sqrt();
    let root_two = closed * zeta.powf((2f64.sqrt() - 1.0) * d as f64);
    assert!((numeric - root_two).abs() > 1e-3);
}

#[test]
fn step_profile_matches_field_simulation() {
    // SIP(1) at unit rate: θ = 1, single-particle jump rate 1/2 each way
    let params = ModelParams::new(1.0, 0.5, 1.0).unwrap();
    let preset = ProcessPreset::new(PresetKind::Sip { k: 1.0 }, Some(1.0)).unwrap();
    let (rho_left, rho_right, split, sites) = (0.5, 2.0, 8i64, 16usize);
    let profile = MomentProfile::new(
        SiteMap::Step { split, left: rho_left, right: rho_right },
        SiteMap::Step { split, left: rho_left * rho_left, right: rho_right * rho_right },
    )
    .unwrap();
    let kernel = OraclePairKernel::new(params);
    let t = 0.5;
    let pairs = [(7i64, 8i64), (7, 7), (8, 8), (6, 8)];
    let mean_at = |x: i64| -> f64 {
        kernel.single_distribution(x, t).unwrap().iter().map(|(&z, &p)| p * profile.rho.at(z)).sum()
    };

    let runs = 150_000u64;
    let mut samples: Vec<Vec<f64>> = pairs.iter().map(|_| Vec::with_capacity(runs as usize)).collect();
    let means: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (mean_at(x), mean_at(y))).collect();
    for run in 0..runs {
        let mut rng = stream_rng(31, 500_000 + run);
        let field = LatticeField::product(
            preset,
            sites,
            |x| InitialLaw::Poisson { rho: if (x as i64) < split { rho_left } else { rho_right } },
            &mut rng,
        )
        .unwrap();
        let eta = simulate_field_stream(&field, t, 31, run, &[t]).unwrap().snapshots.remove(0).1;
        for (k, &(x, y)) in pairs.iter().enumerate() {
            let (mx, my) = means[k];
            samples[k].push((eta[x as usize] as f64 - mx) * (eta[y as usize] as f64 - my));
        }
    }
    for (k, &(x, y)) in pairs.iter().enumerate() {
        let exact = xi_general(t, x, y, &profile, &kernel).unwrap();
        let mean = samples[k].iter().sum::<f64>() / runs as f64;
        let se = jackknife_se(&samples[k]);
        assert!((mean - exact).abs() < 4.0 * se, "({x},{y}): {mean} ± {se} vs {exact}");
    }
}

#[test]
fn general_formula_reduces_to_homogeneous_meeting_term() {
    let theta = 0.5;
    let kernel = OraclePairKernel::new(ModelParams::symmetric(theta).unwrap());
    let (rho, chi) = (1.4, 0.3);
    let profile = MomentProfile::homogeneous(rho, chi).unwrap();
    let t = 0.9;
    let law = kernel.pair_distribution(-1, 1, t).unwrap();
    let meet: f64 = law.iter().filter(|((a, b), _)| a == b).map(|(_, p)| p).sum();
    let xi = xi_general(t, -1, 1, &profile, &kernel).unwrap();
    assert!((xi - meet * (chi / (1.0 + theta) - rho * rho)).abs() < 1e-12);
}
