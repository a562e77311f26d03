use dcglasso::metrics::degrees_of_freedom;
use dcglasso::overlap::expand_duplicates;
use dcglasso::simgen::{
    gen_equicorrelated, gen_overlap_scenario, gen_scenario, overlap_chain, sample_sd, ScenarioSpec, SnrMode,
};
use dcglasso::validate_structure;
use nalgebra::DVector;

#[test]
fn scenario_one_shape() {
    let (d, t) = gen_scenario(&ScenarioSpec::preset(1, 200, 7).unwrap()).unwrap();
    assert_eq!((d.n(), d.p()), (200, 300));
    // groups are numbered from 1 in the scenario definition
    assert_eq!(t.active_groups, (0..100).filter(|g| (g + 1) % 10 == 0).collect::<Vec<_>>());
    assert_eq!(degrees_of_freedom(&t.beta_true), 30);
}

#[test]
fn scenario_two_has_five_active_groups() {
    let (_, t) = gen_scenario(&ScenarioSpec::preset(2, 100, 1).unwrap()).unwrap();
    assert_eq!(t.active_groups, vec![19, 39, 59, 79, 99]);
}

#[test]
fn scenario_five_truth_has_300_nonzeros() {
    let (d, t) = gen_scenario(&ScenarioSpec::preset(5, 50, 3).unwrap()).unwrap();
    assert_eq!(d.p(), 3000);
    assert_eq!(t.active_groups.len(), 100);
    assert_eq!(degrees_of_freedom(&t.beta_true), 300);
}

#[test]
fn active_counts_are_floor_q_over_s() {
    for (id, q, s) in [(1u8, 100, 10), (2, 100, 20), (3, 1000, 10), (4, 1000, 20), (5, 1000, 10), (6, 1000, 20)] {
        let spec = ScenarioSpec::preset(id, 10, 0).unwrap();
        assert_eq!(spec.p(), 3 * q);
        assert_eq!(spec.active_groups().len(), q / s);
    }
    assert!(ScenarioSpec::preset(7, 10, 0).is_err());
}

#[test]
fn truth_has_the_group_pattern() {
    let (_, t) = gen_scenario(&ScenarioSpec::preset(1, 100, 9).unwrap()).unwrap();
    for &g in &t.active_groups {
        let b = &t.beta_true[3 * g..3 * g + 3];
        assert_eq!(b, &[2.0 / 3.0 * t.t[g], -t.t[g], 1.0 / 3.0 * t.t[g]]);
    }
    for g in (0..100).filter(|g| (g + 1) % 10 != 0) {
        assert!(t.beta_true[3 * g..3 * g + 3].iter().all(|b| *b == 0.0));
    }
}

#[test]
fn same_seed_same_data() {
    let spec = ScenarioSpec::preset(2, 150, 42).unwrap();
    let (a, ta) = gen_scenario(&spec).unwrap();
    let (b, tb) = gen_scenario(&spec).unwrap();
    assert_eq!(a.x(), b.x());
    assert_eq!(a.y(), b.y());
    assert_eq!(ta, tb);
    let (c, _) = gen_scenario(&ScenarioSpec::preset(2, 150, 43).unwrap()).unwrap();
    assert_ne!(a.y(), c.y());
}

#[test]
fn response_is_signal_plus_scaled_noise() {
    let (d, t) = gen_scenario(&ScenarioSpec::preset(1, 300, 5).unwrap()).unwrap();
    let signal = d.x() * DVector::from_column_slice(&t.beta_true);
    for i in 0..d.n() {
        let recovered = d.y()[i] - t.noise_scale * t.noise[i];
        assert!((recovered - signal[i]).abs() <= 1e-10 * (1.0 + signal[i].abs()));
    }
    // independent recomputation of the noise scale
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let var = signal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((t.noise_scale - var.sqrt() / 3.0).abs() <= 1e-12 * t.noise_scale);
}

#[test]
fn variance_ratio_mode_scales_by_sqrt_snr() {
    let mut spec = ScenarioSpec::preset(1, 100, 5).unwrap();
    let (d, a) = gen_scenario(&spec).unwrap();
    spec.snr_mode = SnrMode::VarianceRatio;
    let (_, b) = gen_scenario(&spec).unwrap();
    let signal = d.x() * DVector::from_column_slice(&a.beta_true);
    let sd = sample_sd(signal.as_slice());
    assert!((b.noise_scale - sd / 3f64.sqrt()).abs() <= 1e-12 * sd);
}

#[test]
fn higher_power_columns_have_unit_norm() {
    let (d, _) = gen_scenario(&ScenarioSpec::preset(1, 80, 2).unwrap()).unwrap();
    for g in 0..100 {
        for j in [3 * g + 1, 3 * g + 2] {
            let norm = d.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn equicorrelated_moments() {
    let n = 100_000;
    let z = gen_equicorrelated(n, 3, 0.5, 11).unwrap();
    let col = |j: usize| z.column(j).iter().copied().collect::<Vec<f64>>();
    let (a, b) = (col(0), col(1));
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n as f64 - 1.0);
    let (sa, sb) = (sample_sd(&a), sample_sd(&b));
    assert!((cov / (sa * sb) - 0.5).abs() < 0.02);
    assert!((sa * sa - 1.0).abs() < 0.02);
    let w = gen_equicorrelated(n, 2, 0.0, 12).unwrap();
    let (c, d) = (w.column(0), w.column(1));
    let corr = c.dot(&d) / (c.norm() * d.norm());
    assert!(corr.abs() < 0.02);
    assert!(gen_equicorrelated(10, 2, 1.0, 0).is_err());
}

#[test]
fn overlap_chain_counts() {
    let s = overlap_chain(1000).unwrap();
    assert_eq!(s.num_groups(), 199);
    assert_eq!(s.group(1), &(5..15).collect::<Vec<_>>()[..]);
    let (exp, map) = expand_duplicates(&gen_overlap_scenario(1000, 20, 1).unwrap().0).unwrap();
    assert_eq!(map.expanded_p, 10 * 199);
    assert_eq!(exp.p(), 1990);
    assert!(overlap_chain(1003).is_err());
    assert!(overlap_chain(5).is_err());
}

#[test]
fn overlap_truth_is_a_union_of_groups() {
    let mut total = 0usize;
    let reps = 200;
    for seed in 0..reps {
        let (d, t) = gen_overlap_scenario(1000, 10, seed).unwrap();
        let s = d.structure();
        let features = t.true_features();
        assert_eq!(features, s.features_of(&t.active_groups));
        let recon = validate_structure(s.groups().to_vec(), 1000, true).unwrap();
        assert_eq!(&recon, s);
        total += t.active_groups.len();
    }
    // Binomial(199, 0.1): mean 19.9, sd of the average over 200 draws ~0.3
    let mean = total as f64 / reps as f64;
    assert!((mean - 19.9).abs() < 1.5, "mean active groups {mean}");
}

#[test]
fn overlap_generator_is_deterministic() {
    let (a, ta) = gen_overlap_scenario(100, 30, 5).unwrap();
    let (b, tb) = gen_overlap_scenario(100, 30, 5).unwrap();
    assert_eq!(a.x(), b.x());
    assert_eq!(a.y(), b.y());
    assert_eq!(ta, tb);
}
