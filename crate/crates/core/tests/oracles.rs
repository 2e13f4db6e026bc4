//! Independent oracles for the numerical pieces.

use qcga::error_model::{
    critical_random_error, critical_systematic_error, normal_cdf, single_value_power_oracle, AssayParams,
    CriticalErrors,
};
use qcga::library::parse_procedure;
use qcga::rng::{inverse_normal_cdf, StreamKey};
use qcga::rules::{ControlLayout, Procedure, Rule, RuleKind};
use qcga::simulator::{simulate_condition, ErrorCondition, SimulationPlan};
use qcga::stats::{replicate_plan, sign_test};

/// Φ(x) by composite Simpson integration of the density from 0.
fn phi_by_quadrature(x: f64) -> f64 {
    let steps = 4000;
    let h = x / steps as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(0.0) + pdf(x);
    for i in 1..steps {
        acc += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + acc * h / 3.0
}

#[test]
fn quantile_matches_quadrature() {
    for i in 1..200 {
        let p = i as f64 / 200.0;
        let x = inverse_normal_cdf(p);
        assert!((phi_by_quadrature(x) - p).abs() < 1e-10, "p={p}");
    }
    for p in [1e-6, 1e-4, 0.001, 0.999, 0.9999] {
        let x = inverse_normal_cdf(p);
        assert!((phi_by_quadrature(x) - p).abs() < 1e-10 * p.max(1e-3), "p={p}");
    }
}

#[test]
fn cdf_inverts_quantile_on_grid() {
    for i in 1..=1000 {
        let u = (i as f64 - 0.5) / 1000.0;
        assert!((normal_cdf(inverse_normal_cdf(u)) - u).abs() < 1e-6);
    }
}

fn choose(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn sign_test_matches_binomial_enumeration() {
    for n in 1..=25u64 {
        let total = (1u64 << n) as f64;
        for s in 0..=n {
            let lower: u64 = (0..=s).map(|k| choose(n, k)).sum();
            let upper: u64 = (s..=n).map(|k| choose(n, k)).sum();
            let expected = (2.0 * lower.min(upper) as f64 / total).min(1.0);
            let a = vec![0.0; n as usize + 2];
            let mut b: Vec<f64> = (0..n).map(|i| if i < s { 1.0 } else { -1.0 }).collect();
            b.extend([0.0, 0.0]);
            let t = sign_test(&a, &b).unwrap();
            assert_eq!((t.below, t.above, t.ties), (s as usize, (n - s) as usize, 2));
            assert!((t.p_value - expected).abs() < 1e-12 * expected.max(1e-3), "n={n} s={s}");
            assert_eq!(t.p_value, sign_test(&b, &a).unwrap().p_value);
        }
    }
}

#[test]
fn simulated_single_value_rule_tracks_oracle() {
    let crit = CriticalErrors::from_assay(&AssayParams::default()).unwrap();
    let plan = SimulationPlan { measurements_per_level: 20_000, ..Default::default() };
    let cases = [
        (2.4, ErrorCondition::InControl, 0.0, 1.0),
        (2.4, ErrorCondition::SystematicError(crit.delta_se), crit.delta_se, 1.0),
        (3.0, ErrorCondition::RandomError(crit.k_re), 0.0, crit.k_re),
    ];
    for (limit, condition, shift, k) in cases {
        let p = Procedure::single(Rule::new(RuleKind::SingleValue, 1, limit).unwrap());
        let sim = simulate_condition(&p, &plan, condition).unwrap();
        let exact = single_value_power_oracle(limit, 2, shift, k);
        let se = (exact * (1.0 - exact) / 20_000.0).sqrt();
        assert!((sim - exact).abs() < 4.0 * se, "{limit} {condition:?}: {sim} vs {exact}");
    }
}

#[test]
fn oracle_monotonicity() {
    for i in 0..30 {
        let x = i as f64 * 0.2;
        assert!(single_value_power_oracle(2.5, 2, x + 0.1, 1.0) >= single_value_power_oracle(2.5, 2, x, 1.0));
        assert!(
            single_value_power_oracle(2.5, 2, 0.0, 1.0 + x + 0.1) >= single_value_power_oracle(2.5, 2, 0.0, 1.0 + x)
        );
        assert!(single_value_power_oracle(x + 0.1, 2, 1.0, 1.0) <= single_value_power_oracle(x, 2, 1.0, 1.0));
    }
}

#[test]
fn critical_errors_fall_as_tea_grows() {
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..10 {
        let p = AssayParams { tea: 3.0 + 0.25 * i as f64, ..Default::default() };
        let cur = (critical_systematic_error(&p).unwrap(), critical_random_error(&p).unwrap());
        if let Some(prev) = prev {
            assert!(cur.0 > prev.0 && cur.1 > prev.1, "critical errors in SD units grow with tea");
        }
        prev = Some(cur);
    }
}

#[test]
fn builtin_library_simulates_at_both_level_counts() {
    let crit = CriticalErrors::from_assay(&AssayParams::default()).unwrap();
    let plan = SimulationPlan { measurements_per_level: 100, ..Default::default() };
    for entry in qcga::library::builtin_library() {
        for levels in [1, 2] {
            let p = entry.procedure.clone().with_control(ControlLayout::new(levels, 1).unwrap());
            qcga::simulator::estimate_performance(&p, &plan, &crit).unwrap();
        }
    }
}

#[test]
fn replicates_are_paired_across_procedures() {
    let crit = CriticalErrors::from_assay(&AssayParams::default()).unwrap();
    let template = SimulationPlan { measurements_per_level: 300, ..Default::default() };
    let a = parse_procedure("1_2.4s").unwrap();
    let procs = vec![("a".to_string(), a.clone()), ("b".to_string(), a.clone())];
    let result = qcga::stats::compare_procedures(&procs, &template, &crit, 5, 7).unwrap();
    assert_eq!(result.procedures[0].replicates, result.procedures[1].replicates);
    assert!(result.procedures[1].vs_top.unwrap().ties_only);
    assert_eq!(result.procedures[0].name, "a");
    for r in 0..5 {
        let plan = replicate_plan(&template, 7, r);
        assert_eq!(plan.stream, StreamKey::new(7, r as u64));
        let single = qcga::simulator::estimate_performance(&a, &plan, &crit).unwrap();
        assert_eq!(single, result.procedures[0].replicates[r]);
    }
}
