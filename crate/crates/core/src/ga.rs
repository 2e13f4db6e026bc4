//! Deterministic-crowding genetic algorithm over genomes, minimizing
//! [`fitness_f`].
//!
//! Randomness for the search itself (initial population, shuffling,
//! crossover, mutation) comes from ChaCha8 seeded with [`GaParams::seed`];
//! every generation and every pair gets its own ChaCha stream, so pairs can
//! be processed in parallel with results identical to a sequential run.
//! Simulation randomness comes from the plan's stream key and is shared by
//! all evaluations under [`EvaluationSeeding::Common`].

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error_model::{AssayParams, CriticalErrors};
use crate::genome::{decode, hamming_distance, Genome, GenomeLayout};
use crate::objective::{comparison_f1, fitness_f, ObjectiveConfig};
use crate::rng::StreamKey;
use crate::rules::{ControlLayout, Procedure};
use crate::simulator::{estimate_performance, PerformanceEstimate, SimulationPlan};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverKind {
    #[default]
    SinglePoint,
    TwoPoint,
}

/// Which simulated series an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationSeeding {
    /// Every evaluation of the whole search uses the plan's stream.
    #[default]
    Common,
    /// Generation `g` uses the plan's stream id offset by `g`; parents keep
    /// the fitness they were scored with.
    PerGeneration,
    /// Every child evaluation draws a fresh seed from the search generator.
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaParams {
    pub population: usize,
    pub p_crossover: f64,
    /// `(from_generation, p_mutation)` pairs; a rate applies from its
    /// generation until the next entry. Rate 0 before the first entry.
    pub mutation_schedule: Vec<(usize, f64)>,
    pub generations: usize,
    pub crossover: CrossoverKind,
    pub seed: u64,
    pub evaluation: EvaluationSeeding,
    /// Number of distinct best procedures kept in the report.
    pub keep_best: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 600,
            p_crossover: 1.0,
            mutation_schedule: vec![(0, 0.0), (50, 0.0005)],
            generations: 100,
            crossover: CrossoverKind::SinglePoint,
            seed: 1,
            evaluation: EvaluationSeeding::Common,
            keep_best: 10,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || !self.population.is_multiple_of(2) {
            return Err(Error::invalid(format!("ga.population must be even and positive, got {}", self.population)));
        }
        if !(0.0..=1.0).contains(&self.p_crossover) {
            return Err(Error::invalid(format!("ga.p_crossover must be in [0, 1], got {}", self.p_crossover)));
        }
        for w in self.mutation_schedule.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::invalid("ga.mutation_schedule generations must be strictly increasing"));
            }
        }
        if let Some(&(_, p)) = self.mutation_schedule.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!("ga.mutation_schedule rate must be in [0, 1], got {p}")));
        }
        Ok(())
    }

    /// Mutation rate of crowding step `step` (0-based; step `t` produces
    /// generation `t + 1`).
    pub fn mutation_rate(&self, step: usize) -> f64 {
        self.mutation_schedule.iter().take_while(|(from, _)| *from <= step).last().map_or(0.0, |&(_, p)| p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub procedure: Procedure,
    pub fitness: f64,
    pub estimate: PerformanceEstimate,
    pub operator_count: usize,
}

impl Individual {
    /// Lower fitness wins; on equal fitness fewer operators win.
    pub fn beats(&self, other: &Individual) -> bool {
        self.fitness < other.fitness || (self.fitness == other.fitness && self.operator_count < other.operator_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacementEvent {
    pub generation: usize,
    pub pair: usize,
    pub parent_fitness: f64,
    pub child_fitness: f64,
    pub parent_operators: usize,
    pub child_operators: usize,
    /// Total parent-child Hamming distance of the chosen matching and of the
    /// other one.
    pub matched_distance: usize,
    pub alternative_distance: usize,
}

/// Scores genomes, sharing one evaluation among genomes that decode to the
/// same procedure on the same simulated series.
pub struct Evaluator {
    layout: GenomeLayout,
    plan: SimulationPlan,
    critical: CriticalErrors,
    objective: ObjectiveConfig,
    cache: HashMap<(String, Option<ControlLayout>, StreamKey), PerformanceEstimate>,
    evaluations: usize,
}

impl Evaluator {
    pub fn new(
        layout: GenomeLayout,
        plan: SimulationPlan,
        critical: CriticalErrors,
        objective: ObjectiveConfig,
    ) -> Result<Self> {
        layout.validate()?;
        plan.validate()?;
        objective.validate()?;
        Ok(Self { layout, plan, critical, objective, cache: HashMap::new(), evaluations: 0 })
    }

    pub fn layout(&self) -> &GenomeLayout {
        &self.layout
    }

    /// Simulations actually run (cache misses).
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Scores `genomes[i]` on stream `keys[i]`.
    pub fn evaluate(&mut self, genomes: &[Genome], keys: &[StreamKey]) -> Result<Vec<Individual>> {
        debug_assert_eq!(genomes.len(), keys.len());
        let procedures = genomes.iter().map(|g| decode(g, &self.layout)).collect::<Result<Vec<_>>>()?;
        let cache_keys: Vec<_> = procedures.iter().zip(keys).map(|(p, k)| (p.notation(), p.control, *k)).collect();

        let mut pending = HashSet::new();
        let missing: Vec<usize> = (0..cache_keys.len())
            .filter(|&i| !self.cache.contains_key(&cache_keys[i]) && pending.insert(&cache_keys[i]))
            .collect();
        let fresh = missing
            .par_iter()
            .map(|&i| estimate_performance(&procedures[i], &self.plan.with_stream(keys[i]), &self.critical))
            .collect::<Result<Vec<_>>>()?;
        self.evaluations += fresh.len();
        for (&i, est) in missing.iter().zip(fresh) {
            self.cache.insert(cache_keys[i].clone(), est);
        }

        Ok(genomes
            .iter()
            .zip(procedures)
            .zip(&cache_keys)
            .map(|((genome, procedure), key)| {
                let estimate = self.cache[key];
                Individual {
                    genome: genome.clone(),
                    fitness: fitness_f(&estimate, &self.objective),
                    estimate,
                    operator_count: procedure.operator_count(),
                    procedure,
                }
            })
            .collect())
    }

    fn generation_key(&self, seeding: EvaluationSeeding, generation: usize) -> StreamKey {
        match seeding {
            EvaluationSeeding::PerGeneration => {
                StreamKey::new(self.plan.stream.seed, self.plan.stream.stream_id + generation as u64)
            }
            _ => self.plan.stream,
        }
    }

    fn fresh_key(&self, rng: &mut ChaCha8Rng) -> StreamKey {
        let m = self.plan.lcg.modulus;
        loop {
            let seed = rng.random_range(1..m);
            if gcd(seed, m) == 1 {
                return StreamKey::new(seed, 0);
            }
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Scores a population on one common stream derived from
/// `generation_seed`, so identical genomes get identical fitness.
pub fn evaluate_population(
    genomes: &[Genome],
    layout: &GenomeLayout,
    plan: &SimulationPlan,
    critical: &CriticalErrors,
    cfg: &ObjectiveConfig,
    generation_seed: StreamKey,
) -> Result<Vec<Individual>> {
    let mut evaluator = Evaluator::new(*layout, plan.with_stream(generation_seed), *critical, *cfg)?;
    evaluator.evaluate(genomes, &vec![generation_seed; genomes.len()])
}

const INITIAL_STREAM: u64 = u64::MAX;
const SHUFFLE_PAIR: u64 = u32::MAX as u64;

/// ChaCha stream for generation `generation`, pair `pair`.
fn search_rng(seed: u64, generation: usize, pair: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | pair);
    rng
}

fn crossover(a: &mut Genome, b: &mut Genome, kind: CrossoverKind, rng: &mut ChaCha8Rng) {
    let len = a.len();
    let (from, to) = match kind {
        CrossoverKind::SinglePoint if len >= 2 => (rng.random_range(1..len), len),
        CrossoverKind::TwoPoint if len >= 3 => {
            let x = rng.random_range(1..len);
            let mut y = rng.random_range(1..len - 1);
            if y >= x {
                y += 1;
            }
            (x.min(y), x.max(y))
        }
        _ => return,
    };
    a.bits_mut()[from..to].swap_with_slice(&mut b.bits_mut()[from..to]);
}

fn mutate(g: &mut Genome, rate: f64, rng: &mut ChaCha8Rng) {
    if rate <= 0.0 {
        return;
    }
    for bit in g.bits_mut() {
        if rng.random_bool(rate) {
            *bit = !*bit;
        }
    }
}

/// One crowding step producing generation `generation` (≥ 1) from the
/// current population.
pub fn crowding_generation(
    population: &[Individual],
    params: &GaParams,
    generation: usize,
    evaluator: &mut Evaluator,
) -> Result<(Vec<Individual>, Vec<ReplacementEvent>)> {
    if !population.len().is_multiple_of(2) {
        return Err(Error::invalid("population size must be even"));
    }
    let rate = params.mutation_rate(generation.saturating_sub(1));
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.shuffle(&mut search_rng(params.seed, generation, SHUFFLE_PAIR));

    let broods: Vec<([Genome; 2], [StreamKey; 2])> = order
        .par_chunks(2)
        .enumerate()
        .map(|(pair, idx)| {
            let mut rng = search_rng(params.seed, generation, pair as u64);
            let mut c1 = population[idx[0]].genome.clone();
            let mut c2 = population[idx[1]].genome.clone();
            if params.p_crossover > 0.0 && rng.random_bool(params.p_crossover) {
                crossover(&mut c1, &mut c2, params.crossover, &mut rng);
            }
            mutate(&mut c1, rate, &mut rng);
            mutate(&mut c2, rate, &mut rng);
            let keys = match params.evaluation {
                EvaluationSeeding::Fresh => [evaluator.fresh_key(&mut rng), evaluator.fresh_key(&mut rng)],
                seeding => [evaluator.generation_key(seeding, generation); 2],
            };
            ([c1, c2], keys)
        })
        .collect();

    let (genomes, keys): (Vec<Genome>, Vec<StreamKey>) =
        broods.into_iter().flat_map(|(g, k)| g.into_iter().zip(k)).unzip();
    let children = evaluator.evaluate(&genomes, &keys)?;

    let mut next = population.to_vec();
    let mut events = Vec::new();
    for (pair, (idx, kids)) in order.chunks(2).zip(children.chunks(2)).enumerate() {
        let (p1, p2) = (&population[idx[0]], &population[idx[1]]);
        let straight = hamming_distance(&p1.genome, &kids[0].genome)? + hamming_distance(&p2.genome, &kids[1].genome)?;
        let crossed = hamming_distance(&p1.genome, &kids[1].genome)? + hamming_distance(&p2.genome, &kids[0].genome)?;
        let (matched, matched_distance, alternative_distance) = if crossed < straight {
            ([(0, 1), (1, 0)], crossed, straight)
        } else {
            ([(0, 0), (1, 1)], straight, crossed)
        };
        for (parent_slot, child_slot) in matched {
            let parent = &population[idx[parent_slot]];
            let child = &kids[child_slot];
            if child.beats(parent) {
                events.push(ReplacementEvent {
                    generation,
                    pair,
                    parent_fitness: parent.fitness,
                    child_fitness: child.fitness,
                    parent_operators: parent.operator_count,
                    child_operators: child.operator_count,
                    matched_distance,
                    alternative_distance,
                });
                next[idx[parent_slot]] = child.clone();
            }
        }
    }
    Ok((next, events))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub notation: String,
    pub levels: u8,
    pub per_level: u8,
    pub fitness: f64,
    pub f1: f64,
    pub p_re: f64,
    pub p_se: f64,
    pub p_fr: f64,
    pub genome_hex: String,
    pub replacements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestProcedure {
    pub notation: String,
    pub levels: u8,
    pub per_level: u8,
    pub genome_hex: String,
    pub fitness: f64,
    pub f1: f64,
    pub operator_count: usize,
    pub estimate: PerformanceEstimate,
    /// First generation it was seen as a generation best or in the final
    /// population.
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub layout: GenomeLayout,
    pub plan: SimulationPlan,
    pub assay: AssayParams,
    pub objective: ObjectiveConfig,
    pub params: GaParams,
    pub critical: CriticalErrors,
    pub genome_bits: usize,
    pub evaluations: usize,
    pub generations: Vec<GenerationLog>,
    pub best: Vec<BestProcedure>,
    #[serde(skip)]
    pub replacement_events: Vec<ReplacementEvent>,
}

/// Best individual: lowest fitness, then fewest operators, then first.
fn best_of(population: &[Individual]) -> &Individual {
    population.iter().fold(&population[0], |best, ind| if ind.beats(best) { ind } else { best })
}

fn control_of(ind: &Individual, plan: &SimulationPlan) -> ControlLayout {
    ind.procedure.control.unwrap_or(plan.control)
}

fn log_entry(generation: usize, best: &Individual, plan: &SimulationPlan, replacements: usize) -> GenerationLog {
    let control = control_of(best, plan);
    GenerationLog {
        generation,
        notation: best.procedure.notation(),
        levels: control.levels,
        per_level: control.per_level,
        fitness: best.fitness,
        f1: comparison_f1(&best.estimate),
        p_re: best.estimate.p_re,
        p_se: best.estimate.p_se,
        p_fr: best.estimate.p_fr,
        genome_hex: best.genome.to_hex(),
        replacements,
    }
}

pub fn run_design(
    layout: &GenomeLayout,
    plan: &SimulationPlan,
    assay: &AssayParams,
    cfg: &ObjectiveConfig,
    params: &GaParams,
) -> Result<DesignReport> {
    params.validate()?;
    let critical = CriticalErrors::from_assay(assay)?;
    let mut evaluator = Evaluator::new(*layout, plan.clone(), critical, *cfg)?;
    let len = layout.len();

    let mut rng = search_rng(params.seed, 0, INITIAL_STREAM);
    let genomes: Vec<Genome> =
        (0..params.population).map(|_| Genome::from_bits((0..len).map(|_| rng.random()).collect())).collect();
    let keys: Vec<StreamKey> = match params.evaluation {
        EvaluationSeeding::Fresh => genomes.iter().map(|_| evaluator.fresh_key(&mut rng)).collect(),
        seeding => vec![evaluator.generation_key(seeding, 0); genomes.len()],
    };
    let mut population = evaluator.evaluate(&genomes, &keys)?;

    let mut logs = vec![log_entry(0, best_of(&population), plan, 0)];
    let mut candidates: Vec<(usize, Individual)> = vec![(0, best_of(&population).clone())];
    let mut replacement_events = Vec::new();
    for generation in 1..=params.generations {
        let (next, events) = crowding_generation(&population, params, generation, &mut evaluator)?;
        population = next;
        let best = best_of(&population);
        logs.push(log_entry(generation, best, plan, events.len()));
        candidates.push((generation, best.clone()));
        replacement_events.extend(events);
    }
    candidates.extend(population.iter().map(|ind| (params.generations, ind.clone())));

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&candidates[a].1, &candidates[b].1);
        x.fitness.total_cmp(&y.fitness).then(x.operator_count.cmp(&y.operator_count)).then(a.cmp(&b))
    });
    let mut best: Vec<BestProcedure> = Vec::new();
    for i in order {
        let (generation, ind) = &candidates[i];
        let control = control_of(ind, plan);
        let notation = ind.procedure.notation();
        if best.iter().any(|b| b.notation == notation && (b.levels, b.per_level) == (control.levels, control.per_level))
        {
            continue;
        }
        if best.len() == params.keep_best {
            break;
        }
        best.push(BestProcedure {
            notation,
            levels: control.levels,
            per_level: control.per_level,
            genome_hex: ind.genome.to_hex(),
            fitness: ind.fitness,
            f1: comparison_f1(&ind.estimate),
            operator_count: ind.operator_count,
            estimate: ind.estimate,
            generation: *generation,
        });
    }

    Ok(DesignReport {
        layout: *layout,
        plan: plan.clone(),
        assay: *assay,
        objective: *cfg,
        params: params.clone(),
        critical,
        genome_bits: len,
        evaluations: evaluator.evaluations(),
        generations: logs,
        best,
        replacement_events,
    })
}
