use levy_passage::first_passage::{closed_form_transform, pk_series_transform, scale_formula_passage, DEFAULT_K_MAX};
use levy_passage::last_passage::{last_passage_cdf, Escape};
use levy_passage::lundberg::solve_lundberg;
use levy_passage::maintenance::{KernelChain, PolicyKernels, PolicySpec};
use levy_passage::penalty::PenaltySpec;
use levy_passage::scale::{scale_auto, ScaleGrid};
use levy_passage::{ModelKind, ModelSpec};

const PH: &str = r#"{"kind": "perturbed_compound_poisson_ph", "mu": 0.0, "sigma": 1.0, "lambda": 1.0,
 "alpha_vec": [0.6, 0.4], "T": [[-3.0, 1.0], [0.5, -1.5]]}"#;

#[test]
fn json_model_through_every_passage_route() {
    let m = ModelSpec::from_json(PH).unwrap();
    assert_eq!(m.kind(), ModelKind::PerturbedCompoundPoissonPh);
    let back = ModelSpec::from_json(&m.to_json().to_string()).unwrap();
    assert_eq!(back, m);

    let delta = 0.7;
    let root = solve_lundberg(&m, delta).unwrap();
    assert!((m.phi(root.rho) - delta).abs() < 1e-12);

    let grid = ScaleGrid::for_threshold(1.5).unwrap();
    let sc = scale_auto(&m, delta, grid).unwrap();
    assert!((sc.rho() - root.rho).abs() < 1e-10);
    let pk = pk_series_transform(&m, delta, &PenaltySpec::One, grid, DEFAULT_K_MAX).unwrap();
    let via_scale = scale_formula_passage(&sc).unwrap();
    for b in [0.5, 1.0, 1.5] {
        let closed = closed_form_transform(&m, delta, b).unwrap();
        assert!((pk.at(b).unwrap() - closed).abs() < 1e-3);
        assert!((via_scale.at(b).unwrap() - closed).abs() < 1e-3);
    }
}

#[test]
fn last_passage_cdf_is_a_distribution_function() {
    let m = ModelSpec::perturbed_gamma(0.2, 0.5, 1.0, 1.0).unwrap();
    let e = Escape::new(&m).unwrap();
    let vals: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|&t| last_passage_cdf(&m, &e, 1.0, t).unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn policy_from_json_drives_the_chain() {
    let p = PolicySpec::from_json(r#"{"b": 2.0, "m": {"family": "constant", "c": 1.0}, "d": {"family": "affine", "theta": 0.7, "d0": 0.0}}"#).unwrap();
    let m = ModelSpec::brownian(1.0, 1.0).unwrap();
    let chain = KernelChain::with_points(PolicyKernels::new(&m, p).unwrap(), 128).unwrap();
    let law = chain.joint_law_i_states(40).unwrap();
    let total: f64 = law.iter().map(|l| l.p_i).sum();
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}
