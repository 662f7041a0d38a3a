//! Scoring learned models: schema error rate against a reference domain and
//! change-prediction F-scores on test traces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::combination::FScore;
use crate::encoding::{placeholder, schematize, FluentIndex};
use crate::learner::{train_classifiers, ActionClassifiers};
use crate::pddl::{ActionSchema, Domain, GroundAtom, Literal, Problem};
use crate::perceptron::{KernelSpec, TrainConfig};
use crate::simulator::{generate_trace, GroundAction, ObservationModel, ObservedState, SimError, Trace, TraceConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ActionError {
    pub name: String,
    pub e_pre: usize,
    pub e_eff: usize,
    pub t: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub actions: Vec<ActionError>,
    pub mean: f64,
}

impl ErrorReport {
    pub fn to_tsv(&self) -> String {
        let mut s = "action\te_pre\te_eff\tT\terror\n".to_string();
        for a in &self.actions {
            writeln!(s, "{}\t{}\t{}\t{}\t{:.4}", a.name, a.e_pre, a.e_eff, a.t, a.error).unwrap();
        }
        writeln!(s, "ALL\t\t\t\t{:.4}", self.mean).unwrap();
        s
    }
}

/// Rewrites variables to `?x1 .. ?xn` by parameter position.
fn positional(schema: &ActionSchema, lits: &BTreeSet<Literal>) -> BTreeSet<Literal> {
    lits.iter()
        .map(|l| Literal {
            args: l
                .args
                .iter()
                .map(|a| schema.param_position(a).map_or_else(|| a.clone(), placeholder))
                .collect(),
            ..l.clone()
        })
        .collect()
}

fn sym_diff(a: &BTreeSet<Literal>, b: &BTreeSet<Literal>) -> usize {
    a.symmetric_difference(b).count()
}

/// Extra plus missing literals per action over twice the number of possible
/// fluents, averaged over all action names in either domain. Parameters are
/// matched by position. An action missing on either side, or with a
/// different arity, scores 1.
pub fn error_rate(learned: &Domain, truth: &Domain) -> ErrorReport {
    let names: BTreeSet<&str> = learned
        .actions
        .iter()
        .chain(&truth.actions)
        .map(|a| a.name.as_str())
        .collect();
    let actions: Vec<ActionError> = names
        .into_iter()
        .map(|name| {
            let t = truth
                .action(name)
                .map_or(0, |a| FluentIndex::build(truth, a).len());
            match (learned.action(name), truth.action(name)) {
                (Some(l), Some(r)) if l.arity() == r.arity() => {
                    let e_pre = sym_diff(&positional(l, &l.pre), &positional(r, &r.pre));
                    let e_eff = sym_diff(&positional(l, &l.eff), &positional(r, &r.eff));
                    let error = if t == 0 {
                        if e_pre + e_eff == 0 { 0.0 } else { 1.0 }
                    } else {
                        (e_pre + e_eff) as f64 / (2 * t) as f64
                    };
                    ActionError { name: name.to_string(), e_pre, e_eff, t, error }
                }
                _ => ActionError {
                    name: name.to_string(),
                    e_pre: t,
                    e_eff: t,
                    t,
                    error: 1.0,
                },
            }
        })
        .collect();
    let mean = if actions.is_empty() {
        0.0
    } else {
        actions.iter().map(|a| a.error).sum::<f64>() / actions.len() as f64
    };
    ErrorReport { actions, mean }
}

/// Something that predicts which atoms an action changes.
pub trait ChangePredictor {
    fn predict_changes(&self, prior: &ObservedState, action: &GroundAction) -> BTreeSet<GroundAtom>;
}

/// Explicit schemas: if every precondition literal is consistent with the
/// prior, the effects not already true are predicted; otherwise nothing.
pub struct RulePredictor<'a>(pub &'a Domain);

fn bind(schema: &ActionSchema, lit: &Literal, args: &[String]) -> Option<(GroundAtom, bool)> {
    let objs = lit
        .args
        .iter()
        .map(|v| schema.param_position(v).map(|i| args[i].as_str()))
        .collect::<Option<Vec<_>>>()?;
    Some((GroundAtom::new(lit.predicate.clone(), &objs), lit.positive))
}

/// Grounded effect changes of `action` under `domain` given `prior`.
pub fn predict_with_rules(
    domain: &Domain,
    prior: &ObservedState,
    action: &GroundAction,
) -> BTreeSet<GroundAtom> {
    let Some(schema) = domain.action(&action.name) else {
        return BTreeSet::new();
    };
    if schema.arity() != action.args.len() {
        return BTreeSet::new();
    }
    let holds = schema.pre.iter().all(|l| match bind(schema, l, &action.args) {
        Some((atom, v)) => prior.get(&atom) != Some(!v),
        None => false,
    });
    if !holds {
        return BTreeSet::new();
    }
    schema
        .eff
        .iter()
        .filter_map(|l| bind(schema, l, &action.args))
        .filter(|(atom, v)| prior.get(atom) != Some(*v))
        .map(|(atom, _)| atom)
        .collect()
}

impl ChangePredictor for RulePredictor<'_> {
    fn predict_changes(&self, prior: &ObservedState, action: &GroundAction) -> BTreeSet<GroundAtom> {
        predict_with_rules(self.0, prior, action)
    }
}

/// Implicit models: bit `i` is predicted to change iff its classifier says so.
pub struct ClassifierPredictor<'a> {
    pub actions: &'a BTreeMap<String, ActionClassifiers>,
    /// Use the newest hypothesis alone instead of the vote.
    pub last_only: bool,
}

impl ChangePredictor for ClassifierPredictor<'_> {
    fn predict_changes(&self, prior: &ObservedState, action: &GroundAction) -> BTreeSet<GroundAtom> {
        let Some(c) = self.actions.get(&action.name) else {
            return BTreeSet::new();
        };
        let Ok(x) = schematize(prior, action, &c.index) else {
            return BTreeSet::new();
        };
        c.models
            .iter()
            .filter(|(_, m)| if self.last_only { m.predict_last(&x) } else { m.predict(&x) })
            .map(|(&b, _)| c.index.fluent(b).ground(&action.args))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn score(&self) -> FScore {
        FScore::from_counts(self.tp, self.tp + self.fp, self.tp + self.fn_)
    }

    fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub total: Counts,
    pub per_action: BTreeMap<String, Counts>,
}

impl PredictionReport {
    /// Micro-averaged over all steps and atoms.
    pub fn micro(&self) -> FScore {
        self.total.score()
    }

    /// Mean of per-action F-scores.
    pub fn macro_f(&self) -> f64 {
        if self.per_action.is_empty() {
            return 0.0;
        }
        self.per_action.values().map(|c| c.score().f).sum::<f64>() / self.per_action.len() as f64
    }

    pub fn to_tsv(&self) -> String {
        let mut s = "action\ttp\tfp\tfn\tprecision\trecall\tf\n".to_string();
        let mut row = |name: &str, c: &Counts| {
            let f = c.score();
            writeln!(
                s,
                "{name}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                c.tp, c.fp, c.fn_, f.precision, f.recall, f.f
            )
            .unwrap();
        };
        for (name, c) in &self.per_action {
            row(name, c);
        }
        row("ALL", &self.total);
        s
    }
}

/// Atoms observed with different values before and after the step.
pub fn actual_changes(prior: &ObservedState, succ: &ObservedState) -> BTreeSet<GroundAtom> {
    prior
        .iter()
        .filter(|(a, v)| succ.get(a) == Some(!v))
        .map(|(a, _)| a.clone())
        .collect()
}

/// Compares predicted and actual changed atoms on every step of `test`.
pub fn prediction_fscore(predictor: &(dyn ChangePredictor + Sync), test: &Trace) -> PredictionReport {
    let per_step: Vec<(&str, Counts)> = test
        .steps
        .par_iter()
        .map(|s| {
            let predicted = predictor.predict_changes(&s.prior, &s.action);
            let actual = actual_changes(&s.prior, &s.succ);
            let tp = predicted.intersection(&actual).count();
            (
                s.action.name.as_str(),
                Counts {
                    tp,
                    fp: predicted.len() - tp,
                    fn_: actual.len() - tp,
                },
            )
        })
        .collect();
    let mut total = Counts::default();
    let mut per_action: BTreeMap<String, Counts> = BTreeMap::new();
    for (name, c) in per_step {
        total.add(c);
        per_action.entry(name.to_string()).or_default().add(c);
    }
    PredictionReport { total, per_action }
}

/// Perceptron variants compared on identical data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Unvoted perceptron without a kernel: the last linear hypothesis.
    Standard,
    Voted(KernelSpec),
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Standard => "standard".into(),
            Variant::Voted(k) => format!("voted-{k}"),
        }
    }

    /// Standard, voted linear, voted DNF, voted 2-, 3- and 5-DNF.
    pub fn all() -> Vec<Variant> {
        let mut v = vec![
            Variant::Standard,
            Variant::Voted(KernelSpec::Linear),
            Variant::Voted(KernelSpec::Dnf),
        ];
        v.extend([2, 3, 5].map(|k| Variant::Voted(KernelSpec::KDnf(k))));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub train_steps: usize,
    pub test_steps: usize,
    pub episode_len: usize,
    pub success_ratio: f64,
    pub noise: Vec<f64>,
    pub observability: Vec<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub variant: Variant,
    pub noise: f64,
    pub observability: f64,
    pub seed: u64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub variant: Variant,
    pub noise: f64,
    pub observability: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Training and test traces for one grid cell. The test trace is noiseless,
/// fully observed and shared by every cell with the same seed.
pub fn cell_traces(
    domain: &Domain,
    train: &[Problem],
    test: &[Problem],
    grid: &GridConfig,
    seed: u64,
    noise: f64,
    observability: f64,
) -> Result<(Trace, Trace), SimError> {
    let tag = format!("grid/{noise}/{observability}");
    let train_trace = generate_trace(
        domain,
        train,
        &TraceConfig {
            n_steps: grid.train_steps,
            success_ratio: grid.success_ratio,
            episode_len: grid.episode_len,
            observation: ObservationModel {
                observability,
                noise_prob: noise,
                rng_seed: crate::rng::substream(seed, &format!("{tag}/observe")),
            },
            seed: crate::rng::substream(seed, &format!("{tag}/train")),
        },
    )?;
    let test_trace = generate_trace(
        domain,
        test,
        &TraceConfig {
            n_steps: grid.test_steps,
            success_ratio: grid.success_ratio,
            episode_len: grid.episode_len,
            observation: ObservationModel::perfect(),
            seed: crate::rng::substream(seed, "grid/test"),
        },
    )?;
    Ok((train_trace, test_trace))
}

/// Micro F of implicit models for every (variant, noise, observability,
/// seed) on noiseless, fully observed test traces.
pub fn kernel_comparison(
    domain: &Domain,
    train: &[Problem],
    test: &[Problem],
    grid: &GridConfig,
) -> Result<Vec<GridRow>, SimError> {
    let mut cells = Vec::new();
    for &seed in &grid.seeds {
        for &noise in &grid.noise {
            for &obs in &grid.observability {
                cells.push((seed, noise, obs));
            }
        }
    }
    let rows: Result<Vec<Vec<GridRow>>, SimError> = cells
        .par_iter()
        .map(|&(seed, noise, obs)| {
            let (train_trace, test_trace) = cell_traces(domain, train, test, grid, seed, noise, obs)?;
            let train_cfg = TrainConfig {
                epochs: grid.epochs,
                shuffle_seed: None,
            };
            // the standard perceptron is the last hypothesis of the linear run
            let mut trained: BTreeMap<KernelSpec, BTreeMap<String, ActionClassifiers>> = BTreeMap::new();
            let rows = grid
                .variants
                .iter()
                .map(|&variant| {
                    let key = match variant {
                        Variant::Standard => KernelSpec::Linear,
                        Variant::Voted(k) => k,
                    };
                    let models = trained
                        .entry(key)
                        .or_insert_with(|| train_classifiers(domain, &train_trace, key, train_cfg));
                    score(variant, models, &test_trace, noise, obs, seed)
                })
                .collect();
            Ok(rows)
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

fn score(
    variant: Variant,
    models: &BTreeMap<String, ActionClassifiers>,
    test: &Trace,
    noise: f64,
    observability: f64,
    seed: u64,
) -> GridRow {
    let p = ClassifierPredictor {
        actions: models,
        last_only: variant == Variant::Standard,
    };
    GridRow {
        variant,
        noise,
        observability,
        seed,
        f: prediction_fscore(&p, test).micro().f,
    }
}

/// Mean and standard error over seeds per (variant, noise, observability).
pub fn summarize(rows: &[GridRow]) -> Vec<GridSummary> {
    let mut groups: BTreeMap<(Variant, u64, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.variant, r.noise.to_bits(), r.observability.to_bits()))
            .or_default()
            .push(r.f);
    }
    groups
        .into_iter()
        .map(|((variant, n, o), fs)| {
            let k = fs.len() as f64;
            let mean = fs.iter().sum::<f64>() / k;
            let var = if fs.len() > 1 {
                fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            GridSummary {
                variant,
                noise: f64::from_bits(n),
                observability: f64::from_bits(o),
                mean,
                stderr: (var / k).sqrt(),
                n: fs.len(),
            }
        })
        .collect()
}

pub fn grid_rows_tsv(rows: &[GridRow]) -> String {
    let mut s = "variant\tnoise\tobservability\tseed\tf\n".to_string();
    for r in rows {
        writeln!(s, "{}\t{}\t{}\t{}\t{:.6}", r.variant.label(), r.noise, r.observability, r.seed, r.f).unwrap();
    }
    s
}

pub fn grid_summary_tsv(summary: &[GridSummary]) -> String {
    let mut s = "variant\tnoise\tobservability\tn\tmean_f\tstderr\n".to_string();
    for g in summary {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
            g.variant.label(),
            g.noise,
            g.observability,
            g.n,
            g.mean,
            g.stderr
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;
    use crate::pddl::{parse_domain, parse_problem};
    use crate::simulator::Simulator;

    fn bw() -> Domain {
        parse_domain(domains::BLOCKSWORLD).unwrap()
    }

    #[test]
    fn identical_domains_score_zero() {
        let d = bw();
        let r = error_rate(&d, &d);
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.actions.len(), 4);
    }

    #[test]
    fn one_missing_literal_over_ten_fluents() {
        let src = "(define (domain t) (:predicates (p0) (p1) (p2) (p3) (p4) (p5) (p6) (p7) (p8) (p9))
            (:action a :parameters () :precondition (and (p0) (p1)) :effect (p2)))";
        let truth = parse_domain(src).unwrap();
        let mut learned = truth.clone();
        learned.actions[0].pre.remove(&Literal::new("p1", &[], true));
        let r = error_rate(&learned, &truth);
        assert_eq!(r.actions[0].t, 10);
        assert!((r.mean - 0.05).abs() < 1e-12);
        // symmetric in its counts
        let back = error_rate(&truth, &learned);
        assert_eq!(back.actions[0].e_pre, r.actions[0].e_pre);
    }

    #[test]
    fn renamed_params_align_by_position() {
        let truth = bw();
        let mut learned = truth.clone();
        for a in &mut learned.actions {
            let names: Vec<String> = a.params.iter().map(|p| p.name.clone()).collect();
            let rename = |l: &Literal| Literal {
                args: l.args.iter().map(|x| placeholder(names.iter().position(|n| n == x).unwrap())).collect(),
                ..l.clone()
            };
            a.pre = a.pre.iter().map(rename).collect();
            a.eff = a.eff.iter().map(rename).collect();
            for (i, p) in a.params.iter_mut().enumerate() {
                p.name = placeholder(i);
            }
        }
        assert_eq!(error_rate(&learned, &truth).mean, 0.0);
    }

    #[test]
    fn missing_or_misshapen_action_scores_one() {
        let truth = bw();
        let mut learned = truth.clone();
        learned.actions.retain(|a| a.name != "stack");
        learned.actions.iter_mut().find(|a| a.name == "pickup").unwrap().params.clear();
        let r = error_rate(&learned, &truth);
        let by: BTreeMap<_, _> = r.actions.iter().map(|a| (a.name.as_str(), a.error)).collect();
        assert_eq!(by["stack"], 1.0);
        assert_eq!(by["pickup"], 1.0);
        assert_eq!(by["unstack"], 0.0);
        assert!((r.mean - 0.5).abs() < 1e-12);
    }

    fn two_block_sim_state() -> (Domain, Problem) {
        let d = bw();
        let p = parse_problem(
            "(define (problem two) (:domain blocksworld) (:objects b1 b2)
               (:init (holding b1) (clear b2) (ontable b2)))",
            &d,
        )
        .unwrap();
        (d, p)
    }

    #[test]
    fn rule_prediction_on_stack() {
        let (d, p) = two_block_sim_state();
        let sim = Simulator::new(&d, &p).unwrap();
        let prior = ObservedState::full(&sim.initial_state(), sim.universe());
        let stack = GroundAction::new("stack", &["b1", "b2"]);
        let got: Vec<String> = predict_with_rules(&d, &prior, &stack).iter().map(|a| a.to_string()).collect();
        assert_eq!(got, ["(armempty)", "(clear b1)", "(clear b2)", "(holding b1)", "(on b1 b2)"]);
        assert!(predict_with_rules(&d, &prior, &GroundAction::new("pickup", &["b2"])).is_empty());

        let free = parse_domain(
            "(define (domain blocksworld) (:predicates (armempty) (clear ?x) (ontable ?x) (holding ?x) (on ?x ?y))
               (:action stack :parameters (?a ?b) :precondition () :effect (on ?a ?b)))",
        )
        .unwrap();
        let empty = ObservedState::new();
        assert_eq!(predict_with_rules(&free, &empty, &stack).len(), 1);
    }

    #[test]
    fn perfect_and_silent_predictors() {
        let d = bw();
        let p = parse_problem(domains::BLOCKSWORLD_TRAIN, &d).unwrap();
        let t = generate_trace(
            &d,
            &[p],
            &TraceConfig {
                n_steps: 600,
                success_ratio: 0.5,
                episode_len: 200,
                observation: ObservationModel::perfect(),
                seed: 2,
            },
        )
        .unwrap();
        let perfect = prediction_fscore(&RulePredictor(&d), &t);
        assert_eq!(perfect.micro().f, 1.0);
        assert_eq!(perfect.macro_f(), 1.0);
        let mut silent = d.clone();
        silent.actions.clear();
        assert_eq!(prediction_fscore(&RulePredictor(&silent), &t).micro().f, 0.0);
    }

    #[test]
    fn summary_statistics() {
        let v = Variant::Standard;
        let rows: Vec<GridRow> = [0.5, 0.7, 0.9]
            .iter()
            .enumerate()
            .map(|(i, &f)| GridRow { variant: v, noise: 0.05, observability: 0.25, seed: i as u64, f })
            .collect();
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert!((s[0].mean - 0.7).abs() < 1e-12);
        assert!((s[0].stderr - (0.04f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
