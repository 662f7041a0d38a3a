//! End-to-end learning: encode, train, extract, combine, emit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use crate::combination::{to_strips, CombineConfig, Combiner, StripsRuleDraft};
use crate::encoding::{encode_trace, EncodedExample, FluentIndex, TritVector};
use crate::extraction::{extract_from_model, format_rules, ExtractConfig, PerEffectRule, WeightOracle};
use crate::pddl::{ActionSchema, Domain, TypedParam};
use crate::perceptron::{labelled, KernelSpec, TrainConfig, VotedModel};
use crate::rng::substream;
use crate::simulator::Trace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub kernel: KernelSpec,
    pub train: TrainConfig,
    pub extract: ExtractConfig,
    pub combine: CombineConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            kernel: KernelSpec::KDnf(3),
            train: TrainConfig::default(),
            extract: ExtractConfig::default(),
            combine: CombineConfig::default(),
        }
    }
}

/// The trained classifiers of one action with the data they saw.
#[derive(Debug, Clone)]
pub struct ActionClassifiers {
    pub index: FluentIndex,
    pub examples: Vec<EncodedExample>,
    /// Keyed by effect bit; bits with no observed change label have none.
    pub models: BTreeMap<usize, VotedModel>,
}

impl ActionClassifiers {
    pub fn training_set(&self, bit: usize) -> Vec<(TritVector, bool)> {
        labelled(self.examples.iter().map(|x| (&x.prior, &x.diff)), bit)
    }
}

/// Trains one classifier per (action, effect bit) in parallel. Actions
/// without examples are left out.
pub fn train_classifiers(
    domain: &Domain,
    trace: &Trace,
    kernel: KernelSpec,
    train: TrainConfig,
) -> BTreeMap<String, ActionClassifiers> {
    let data: BTreeMap<String, _> = encode_trace(domain, trace)
        .into_iter()
        .filter(|(name, d)| {
            if d.examples.is_empty() {
                warn!("action {name} never observed; no model learned");
            }
            !d.examples.is_empty()
        })
        .collect();
    let jobs: Vec<(&str, usize)> = data
        .iter()
        .flat_map(|(name, d)| (0..d.index.len()).map(move |b| (name.as_str(), b)))
        .collect();
    let trained: Vec<((String, usize), Option<VotedModel>)> = jobs
        .par_iter()
        .map(|&(name, bit)| {
            let examples = labelled(data[name].examples.iter().map(|x| (&x.prior, &x.diff)), bit);
            let cfg = TrainConfig {
                shuffle_seed: train
                    .shuffle_seed
                    .map(|s| substream(s, &format!("classifier/{name}/{bit}"))),
                ..train
            };
            let model = VotedModel::train(&examples, kernel, cfg, name, bit).ok();
            ((name.to_string(), bit), model)
        })
        .collect();
    let mut out: BTreeMap<String, ActionClassifiers> = data
        .into_iter()
        .map(|(name, d)| {
            (
                name,
                ActionClassifiers {
                    index: d.index,
                    examples: d.examples,
                    models: BTreeMap::new(),
                },
            )
        })
        .collect();
    for ((name, bit), model) in trained {
        if let Some(m) = model {
            out.get_mut(&name).unwrap().models.insert(bit, m);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ActionResult {
    pub classifiers: ActionClassifiers,
    pub rules: Vec<PerEffectRule>,
    pub draft: Option<StripsRuleDraft>,
    pub schema: ActionSchema,
}

#[derive(Debug, Clone)]
pub struct LearnOutput {
    pub actions: BTreeMap<String, ActionResult>,
    /// The learned domain: the input signature with learned actions only.
    pub domain: Domain,
}

impl LearnOutput {
    /// Per-effect rules of every action, grouped by effect fluent.
    pub fn rules_text(&self) -> String {
        let mut s = String::new();
        for (name, a) in &self.actions {
            writeln!(s, "; {name}").unwrap();
            s.push_str(&format_rules(&a.classifiers.index, &a.rules));
            s.push('\n');
        }
        s
    }

    /// Combination trace and final F-scores per action.
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        for (name, a) in &self.actions {
            writeln!(
                s,
                "== {name}: {} examples, {} classifiers, {} rules",
                a.classifiers.examples.len(),
                a.classifiers.models.len(),
                a.rules.len()
            )
            .unwrap();
            match &a.draft {
                None => writeln!(s, "no rules; empty schema").unwrap(),
                Some(d) => {
                    for l in &d.log {
                        writeln!(s, "{l}").unwrap();
                    }
                    let locks: Vec<String> = d.locks.iter().map(|b| b.to_string()).collect();
                    writeln!(s, "locks: {}", locks.join(" ")).unwrap();
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Full pipeline over one trace.
pub fn learn(domain: &Domain, trace: &Trace, cfg: &LearnConfig) -> LearnOutput {
    let classifiers = train_classifiers(domain, trace, cfg.kernel, cfg.train);
    learn_from_classifiers(domain, classifiers, cfg)
}

/// Extraction, combination and schema conversion from trained classifiers.
pub fn learn_from_classifiers(
    domain: &Domain,
    classifiers: BTreeMap<String, ActionClassifiers>,
    cfg: &LearnConfig,
) -> LearnOutput {
    let results: Vec<(String, ActionResult)> = classifiers
        .into_par_iter()
        .map(|(name, c)| {
            let rules: Vec<PerEffectRule> = c
                .models
                .par_iter()
                .flat_map_iter(|(&bit, m)| extract_from_model(m, &c.training_set(bit), cfg.extract))
                .collect();
            let combiner = Combiner {
                oracles: c
                    .models
                    .iter()
                    .map(|(&b, m)| (b, m as &dyn WeightOracle))
                    .collect(),
                training: &c.examples,
                config: cfg.combine,
            };
            let draft = combiner.combine(&rules);
            let signature = domain.action(&name).expect("encoded from this domain");
            let schema = match &draft {
                Some(d) => to_strips(d, &c.index, signature, &c.examples),
                None => empty_schema(signature),
            };
            (
                name,
                ActionResult {
                    classifiers: c,
                    rules,
                    draft,
                    schema,
                },
            )
        })
        .collect();
    let mut learned = domain.clone();
    learned.actions = results.iter().map(|(_, r)| r.schema.clone()).collect();
    LearnOutput {
        actions: results.into_iter().collect(),
        domain: learned,
    }
}

fn empty_schema(signature: &ActionSchema) -> ActionSchema {
    ActionSchema {
        name: signature.name.clone(),
        params: signature
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| TypedParam::new(crate::encoding::placeholder(i), p.ty.clone()))
            .collect(),
        pre: Default::default(),
        eff: Default::default(),
    }
}
