use proptest::prelude::*;

use qcga::error_model::{AssayParams, CriticalErrors};
use qcga::ga::{crowding_generation, Evaluator, GaParams};
use qcga::genome::{decode, encode, hamming_distance, Genome, GenomeLayout};
use qcga::library::parse_procedure;
use qcga::objective::ObjectiveConfig;
use qcga::rules::{ControlLayout, Operator, OperatorKind, Procedure, Rule, RuleKind, MAX_PRIORITY};
use qcga::simulator::{
    simulate_condition, simulate_condition_observed, ErrorCondition, HistoryPolicy, SimObserver, SimulationPlan,
};
use qcga::stats::sign_test;

fn layout_strategy() -> impl Strategy<Value = GenomeLayout> {
    (1usize..=4, any::<bool>(), any::<bool>(), 1u8..=2, 1u8..=4).prop_map(|(q, ol, op, levels, per_level)| {
        GenomeLayout { max_rules: q, optimize_levels: ol, optimize_per_level: op, levels, per_level }
    })
}

fn genome_for(layout: GenomeLayout) -> impl Strategy<Value = (GenomeLayout, Genome)> {
    proptest::collection::vec(any::<bool>(), layout.len()).prop_map(move |bits| (layout, Genome::from_bits(bits)))
}

fn rule_strategy() -> impl Strategy<Value = Rule> {
    (0usize..4, 0u8..4, 0u32..64).prop_map(|(k, n, code)| {
        let kind = RuleKind::ALL[k];
        Rule::new(kind, (n + 1).max(kind.min_n()), code as f64 / 10.0).unwrap()
    })
}

fn operator_strategy() -> impl Strategy<Value = Operator> {
    (any::<bool>(), 0..=MAX_PRIORITY)
        .prop_map(|(and, p)| Operator { kind: if and { OperatorKind::And } else { OperatorKind::Or }, priority: p })
}

fn procedure_strategy(max_rules: usize) -> impl Strategy<Value = Procedure> {
    (1..=max_rules)
        .prop_flat_map(|k| {
            (proptest::collection::vec(rule_strategy(), k), proptest::collection::vec(operator_strategy(), k - 1))
        })
        .prop_map(|(rules, ops)| Procedure::new(rules, ops).unwrap())
}

#[derive(Default)]
struct ResetWatch {
    next_run_start: Option<usize>,
    index: usize,
    violations: usize,
}

impl SimObserver for ResetWatch {
    fn evaluated(&mut self, _run: usize, index: usize, oldest: Option<usize>, _result: bool) {
        if let (Some(start), Some(oldest)) = (self.next_run_start, oldest) {
            if oldest < start {
                self.violations += 1;
            }
        }
        self.index = index;
    }

    fn run_finished(&mut self, _run: usize, rejected: bool) {
        if rejected {
            self.next_run_start = Some(self.index + 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decoding_is_total((layout, genome) in layout_strategy().prop_flat_map(genome_for)) {
        let p = decode(&genome, &layout).unwrap();
        prop_assert!(p.rules().len() <= layout.max_rules);
        prop_assert_eq!(p.operators().len(), p.rules().len().saturating_sub(1));
        let again = encode(&p, &layout).unwrap();
        prop_assert_eq!(decode(&again, &layout).unwrap(), p);
    }

    #[test]
    fn encode_decode_encode_is_idempotent(p in procedure_strategy(3), levels in 1u8..=2) {
        let layout = GenomeLayout::default();
        let p = p.with_control(ControlLayout::new(levels, 1).unwrap());
        let g = encode(&p, &layout).unwrap();
        let back = decode(&g, &layout).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(encode(&back, &layout).unwrap(), g);
    }

    #[test]
    fn notation_parses_to_equivalent_procedure(p in procedure_strategy(4)) {
        let parsed = parse_procedure(&p.notation()).unwrap();
        prop_assert_eq!(parsed.rules(), p.rules());
        let vars = p.rules().len();
        prop_assert_eq!(parsed.expr().unwrap().truth_table(vars), p.expr().unwrap().truth_table(vars));
        prop_assert_eq!(parsed.notation(), p.notation());
    }

    #[test]
    fn sign_test_is_symmetric(pairs in proptest::collection::vec((0u8..4, 0u8..4), 1..30)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let (x, y) = (sign_test(&a, &b).unwrap(), sign_test(&b, &a).unwrap());
        prop_assert_eq!(x.p_value, y.p_value);
        prop_assert!(x.p_value > 0.0 && x.p_value <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn older_history_does_not_change_a_rule(
        r in rule_strategy(),
        prefix in proptest::collection::vec(-5.0f64..5.0, 0..6),
        window in proptest::collection::vec(-5.0f64..5.0, 4),
    ) {
        let mut long = prefix.clone();
        long.extend(&window);
        prop_assert_eq!(r.evaluate(&long), r.evaluate(&window));
    }

    #[test]
    fn or_rejects_at_least_as_often_as_and(a in rule_strategy(), b in rule_strategy(), seed in 1u64..1000) {
        let plan = SimulationPlan {
            measurements_per_level: 300,
            history: HistoryPolicy::Keep,
            stream: qcga::rng::StreamKey::new(seed, 0),
            ..Default::default()
        };
        let or = Procedure::new(vec![a, b], vec![Operator::or(0)]).unwrap();
        let and = Procedure::new(vec![a, b], vec![Operator::and(0)]).unwrap();
        for c in [ErrorCondition::InControl, ErrorCondition::SystematicError(2.0)] {
            prop_assert!(simulate_condition(&or, &plan, c).unwrap() >= simulate_condition(&and, &plan, c).unwrap());
        }
    }

    #[test]
    fn reset_hides_measurements_before_a_rejection(p in procedure_strategy(3), seed in 1u64..1000) {
        let plan = SimulationPlan {
            measurements_per_level: 200,
            history: HistoryPolicy::Reset,
            stream: qcga::rng::StreamKey::new(seed, 0),
            ..Default::default()
        };
        let mut watch = ResetWatch::default();
        simulate_condition_observed(&p, &plan, ErrorCondition::SystematicError(1.5), &mut watch).unwrap();
        prop_assert_eq!(watch.violations, 0);
    }

    #[test]
    fn crowding_keeps_best_and_replaces_legally(seed in 0u64..1000) {
        let critical = CriticalErrors::from_assay(&AssayParams::default()).unwrap();
        let plan = SimulationPlan { measurements_per_level: 100, ..Default::default() };
        let layout = GenomeLayout::default();
        let mut ev = Evaluator::new(layout, plan.clone(), critical, ObjectiveConfig::default()).unwrap();
        let params = GaParams { population: 12, seed, mutation_schedule: vec![(0, 0.05)], ..Default::default() };
        let mut rng = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let genomes: Vec<Genome> = (0..12)
            .map(|_| Genome::from_bits((0..layout.len()).map(|_| {
                rng ^= rng << 13; rng ^= rng >> 7; rng ^= rng << 17;
                rng & 1 == 1
            }).collect()))
            .collect();
        let mut pop = ev.evaluate(&genomes, &[plan.stream; 12]).unwrap();
        for generation in 1..=3 {
            let before = pop.iter().map(|i| i.fitness).fold(f64::INFINITY, f64::min);
            let (next, events) = crowding_generation(&pop, &params, generation, &mut ev).unwrap();
            for e in &events {
                prop_assert!(e.child_fitness < e.parent_fitness
                    || (e.child_fitness == e.parent_fitness && e.child_operators < e.parent_operators));
                prop_assert!(e.matched_distance <= e.alternative_distance);
            }
            let after = next.iter().map(|i| i.fitness).fold(f64::INFINITY, f64::min);
            prop_assert!(after <= before);
            for (old, new) in pop.iter().zip(&next) {
                prop_assert!(old == new || new.beats(old));
                prop_assert!(hamming_distance(&old.genome, &new.genome).is_ok());
            }
            pop = next;
        }
    }
}
