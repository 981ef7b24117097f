//! Tracking metrics.
//!
//! Predictions are aligned to gold turns by `(dialogue_id, turn_index)`; every
//! gold turn needs exactly one prediction, and predictions for turns without
//! gold are ignored. States compare as slot→value maps after the shared
//! normalization, absent meaning "none" on both sides.
//!
//! Each aligned turn is reduced to a sparse tally (work proportional to the
//! slots present in either state, not to the schema) in parallel, and the
//! tallies are folded sequentially in gold order.

mod report;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialogue, DialogueState, Schema, NONE_VALUE};
use crate::tracker::TurnPrediction;

pub use report::{
    evaluate, slot_breakdown, slot_breakdown_csv, EvalOptions, MetricsReport, OracleGateReport,
    ReportCounts, SlotBreakdown,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no prediction for dialogue `{dialogue_id}` turn {turn_index}")]
    MissingPrediction {
        dialogue_id: String,
        turn_index: usize,
    },
    #[error("more than one prediction for dialogue `{dialogue_id}` turn {turn_index}")]
    DuplicatePrediction {
        dialogue_id: String,
        turn_index: usize,
    },
    #[error("gold corpus has no turns")]
    NoGoldTurns,
    #[error("gold corpus has no active slot instances")]
    NoActiveSlots,
    #[error("domain `{0}` is not in the schema")]
    UnknownDomain(String),
    #[error("prediction for dialogue `{dialogue_id}` turn {turn_index} lacks extractive-pass diagnostics")]
    MissingDiagnostics {
        dialogue_id: String,
        turn_index: usize,
    },
}

/// An exact ratio. `value()` of an empty fraction is NaN.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub numerator: usize,
    pub denominator: usize,
}

impl Fraction {
    pub fn new(numerator: usize, denominator: usize) -> Self {
        Fraction {
            numerator,
            denominator,
        }
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    pub fn is_empty(&self) -> bool {
        self.denominator == 0
    }

    /// Compares with `n/d` by cross-multiplication.
    pub fn equals(&self, n: usize, d: usize) -> bool {
        self.numerator * d == n * self.denominator
    }
}

impl std::fmt::Display for Fraction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// A gold turn and its prediction.
#[derive(Debug, Clone, Copy)]
pub struct AlignedTurn<'a> {
    pub dialogue_id: &'a str,
    pub turn_index: usize,
    pub gold: &'a DialogueState,
    pub prediction: &'a TurnPrediction,
}

pub fn align<'a>(
    predictions: &'a [TurnPrediction],
    golds: &'a [Dialogue],
) -> Result<Vec<AlignedTurn<'a>>, EvalError> {
    let mut index: HashMap<(&str, usize), &TurnPrediction> =
        HashMap::with_capacity(predictions.len());
    for p in predictions {
        if index
            .insert((p.dialogue_id.as_str(), p.turn_index), p)
            .is_some()
        {
            return Err(EvalError::DuplicatePrediction {
                dialogue_id: p.dialogue_id.clone(),
                turn_index: p.turn_index,
            });
        }
    }
    let mut out = Vec::new();
    for d in golds {
        for (&turn_index, gold) in &d.gold_states {
            let prediction = index.get(&(d.id.as_str(), turn_index)).ok_or_else(|| {
                EvalError::MissingPrediction {
                    dialogue_id: d.id.clone(),
                    turn_index,
                }
            })?;
            out.push(AlignedTurn {
                dialogue_id: &d.id,
                turn_index,
                gold,
                prediction,
            });
        }
    }
    Ok(out)
}

/// Error class of one (turn, slot) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    FalsePositiveGate,
    FalseNegativeGate,
    ValueError,
}

pub fn classify(gold: Option<&str>, predicted: Option<&str>) -> Option<ErrorKind> {
    match (gold, predicted) {
        (None, None) => None,
        (None, Some(_)) => Some(ErrorKind::FalsePositiveGate),
        (Some(_), None) => Some(ErrorKind::FalseNegativeGate),
        (Some(g), Some(p)) if g == p => None,
        (Some(_), Some(_)) => Some(ErrorKind::ValueError),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub false_positive_gate: usize,
    pub false_negative_gate: usize,
    pub value_error: usize,
}

impl ErrorCounts {
    pub fn total(&self) -> usize {
        self.false_positive_gate + self.false_negative_gate + self.value_error
    }

    pub fn gate_errors(&self) -> usize {
        self.false_positive_gate + self.false_negative_gate
    }

    fn add(&mut self, kind: ErrorKind) {
        match kind {
            ErrorKind::FalsePositiveGate => self.false_positive_gate += 1,
            ErrorKind::FalseNegativeGate => self.false_negative_gate += 1,
            ErrorKind::ValueError => self.value_error += 1,
        }
    }

    fn merge(&mut self, other: &ErrorCounts) {
        self.false_positive_gate += other.false_positive_gate;
        self.false_negative_gate += other.false_negative_gate;
        self.value_error += other.value_error;
    }
}

/// Error shares. With no errors the fractions are zero and `no_errors` is set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub false_positive_gate: f64,
    pub false_negative_gate: f64,
    pub value_error: f64,
    pub counts: ErrorCounts,
    pub no_errors: bool,
}

impl Taxonomy {
    pub fn from_counts(counts: ErrorCounts) -> Self {
        let total = counts.total();
        if total == 0 {
            return Taxonomy {
                counts,
                no_errors: true,
                ..Default::default()
            };
        }
        let t = total as f64;
        Taxonomy {
            false_positive_gate: counts.false_positive_gate as f64 / t,
            false_negative_gate: counts.false_negative_gate as f64 / t,
            value_error: counts.value_error as f64 / t,
            counts,
            no_errors: false,
        }
    }
}

/// Per-turn reduction of an aligned pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TurnTally {
    pub joint_correct: bool,
    pub gold_active: usize,
    pub active_correct: usize,
    /// Schema slots whose predicted activeness differs from gold.
    pub gate_mismatches: usize,
    pub errors: ErrorCounts,
}

/// Tallies one turn. `in_schema` decides which slots count for gate accuracy.
pub fn tally_turn(
    gold: &DialogueState,
    predicted: &DialogueState,
    in_schema: &dyn Fn(&str) -> bool,
) -> TurnTally {
    let mut t = TurnTally {
        gold_active: gold.len(),
        ..Default::default()
    };
    for (slot, g) in gold.iter() {
        let p = predicted.get(slot);
        if p == Some(g) {
            t.active_correct += 1;
        }
        if let Some(kind) = classify(Some(g), p) {
            t.errors.add(kind);
        }
        if p.is_none() && in_schema(slot) {
            t.gate_mismatches += 1;
        }
    }
    for (slot, _) in predicted.iter() {
        if !gold.contains(slot) {
            t.errors.add(ErrorKind::FalsePositiveGate);
            if in_schema(slot) {
                t.gate_mismatches += 1;
            }
        }
    }
    t.joint_correct = t.errors.total() == 0;
    t
}

pub(crate) fn tallies(turns: &[AlignedTurn<'_>], schema: Option<&Schema>) -> Vec<TurnTally> {
    let in_schema = |slot: &str| schema.is_none_or(|s| s.contains(slot));
    turns
        .par_iter()
        .map(|a| tally_turn(a.gold, &a.prediction.state, &in_schema))
        .collect()
}

/// Turn-level and slot-level totals over a set of aligned turns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Totals {
    pub turns: usize,
    pub joint_correct: usize,
    pub gold_active: usize,
    pub active_correct: usize,
    /// Sum of per-turn active accuracy over turns with gold-active slots.
    pub macro_sum: f64,
    pub macro_turns: usize,
    pub gate_mismatches: usize,
    pub errors: ErrorCounts,
}

impl Totals {
    pub fn fold(tallies: &[TurnTally]) -> Self {
        let mut t = Totals::default();
        for x in tallies {
            t.turns += 1;
            t.joint_correct += x.joint_correct as usize;
            t.gold_active += x.gold_active;
            t.active_correct += x.active_correct;
            if x.gold_active > 0 {
                t.macro_sum += x.active_correct as f64 / x.gold_active as f64;
                t.macro_turns += 1;
            }
            t.gate_mismatches += x.gate_mismatches;
            t.errors.merge(&x.errors);
        }
        t
    }

    pub fn jga(&self) -> Result<Fraction, EvalError> {
        if self.turns == 0 {
            return Err(EvalError::NoGoldTurns);
        }
        Ok(Fraction::new(self.joint_correct, self.turns))
    }

    pub fn aga(&self) -> Result<Fraction, EvalError> {
        if self.gold_active == 0 {
            return Err(EvalError::NoActiveSlots);
        }
        Ok(Fraction::new(self.active_correct, self.gold_active))
    }

    pub fn aga_macro(&self) -> Result<f64, EvalError> {
        if self.macro_turns == 0 {
            return Err(EvalError::NoActiveSlots);
        }
        Ok(self.macro_sum / self.macro_turns as f64)
    }

    pub fn sga(&self, schema_len: usize) -> Result<Fraction, EvalError> {
        if self.turns == 0 {
            return Err(EvalError::NoGoldTurns);
        }
        let pairs = self.turns * schema_len;
        Ok(Fraction::new(pairs - self.gate_mismatches, pairs))
    }
}

fn totals(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
    schema: Option<&Schema>,
) -> Result<Totals, EvalError> {
    let aligned = align(predictions, golds)?;
    Ok(Totals::fold(&tallies(&aligned, schema)))
}

/// Fraction of gold turns whose predicted state equals the gold state.
pub fn joint_goal_accuracy(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
) -> Result<Fraction, EvalError> {
    totals(predictions, golds, None)?.jga()
}

/// Micro-average over gold-active (turn, slot) pairs of exact value matches.
pub fn average_goal_accuracy(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
) -> Result<Fraction, EvalError> {
    totals(predictions, golds, None)?.aga()
}

/// Mean over turns with gold-active slots of the per-turn active accuracy.
pub fn average_goal_accuracy_macro(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
) -> Result<f64, EvalError> {
    totals(predictions, golds, None)?.aga_macro()
}

/// Over all (turn, schema slot) pairs: gold activeness equals predicted.
pub fn slot_gate_accuracy(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
    schema: &Schema,
) -> Result<Fraction, EvalError> {
    totals(predictions, golds, Some(schema))?.sga(schema.len())
}

pub fn error_taxonomy(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
) -> Result<Taxonomy, EvalError> {
    Ok(Taxonomy::from_counts(
        totals(predictions, golds, None)?.errors,
    ))
}

/// Which turns count toward a domain's score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTurnSelection {
    /// Every gold turn of every dialogue whose gold ever assigns a domain slot.
    #[default]
    TouchingDialogues,
    /// Only gold turns whose own state assigns a domain slot.
    ActiveTurns,
}

fn in_domain<'s>(schema: &'s Schema, domain: &'s str) -> impl Fn(&str) -> bool + 's {
    move |slot: &str| schema.domain_of(slot) == Some(domain)
}

/// JGA with gold and predicted states restricted to the domain's slots.
/// `None` when no turn is selected.
pub fn per_domain_jga(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
    schema: &Schema,
    domain: &str,
    selection: DomainTurnSelection,
) -> Result<Option<Fraction>, EvalError> {
    if !schema.has_domain(domain) {
        return Err(EvalError::UnknownDomain(domain.to_string()));
    }
    let aligned = align(predictions, golds)?;
    Ok(domain_jga(&aligned, golds, schema, domain, selection))
}

pub(crate) fn domain_jga(
    aligned: &[AlignedTurn<'_>],
    golds: &[Dialogue],
    schema: &Schema,
    domain: &str,
    selection: DomainTurnSelection,
) -> Option<Fraction> {
    let keep = in_domain(schema, domain);
    let touching: std::collections::HashSet<&str> = golds
        .iter()
        .filter(|d| d.gold_states.values().any(|s| s.slot_ids().any(&keep)))
        .map(|d| d.id.as_str())
        .collect();
    let (correct, total) = aligned
        .par_iter()
        .filter(|a| match selection {
            DomainTurnSelection::TouchingDialogues => touching.contains(a.dialogue_id),
            DomainTurnSelection::ActiveTurns => a.gold.slot_ids().any(&keep),
        })
        .map(|a| {
            let g = a.gold.restricted(&keep);
            let p = a.prediction.state.restricted(&keep);
            ((g == p) as usize, 1usize)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    (total > 0).then(|| Fraction::new(correct, total))
}

/// State rebuilt with the gold gate: every gold-active slot takes the
/// prediction's value (final state, else the multi-choice answer, else the
/// extractive answer), all other slots are dropped.
pub fn gold_gated_state(gold: &DialogueState, prediction: &TurnPrediction) -> DialogueState {
    let mut state = DialogueState::new();
    for slot in gold.slot_ids() {
        let value = prediction
            .state
            .get(slot)
            .or_else(|| answered(&prediction.pass2_values, slot))
            .or_else(|| answered(&prediction.raw_values, slot));
        if let Some(v) = value {
            state.insert(slot.to_string(), v);
        }
    }
    state
}

fn answered<'m>(values: &'m BTreeMap<String, String>, slot: &str) -> Option<&'m str> {
    values
        .get(slot)
        .map(String::as_str)
        .filter(|v| !v.is_empty() && *v != NONE_VALUE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RescoredAccuracy {
    pub jga: Fraction,
    pub aga: Fraction,
}

/// JGA and AGA after replacing every predicted gate with the gold gate.
pub fn oracle_gate_rescore(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
) -> Result<RescoredAccuracy, EvalError> {
    let aligned = align(predictions, golds)?;
    rescore(&aligned)
}

pub(crate) fn rescore(aligned: &[AlignedTurn<'_>]) -> Result<RescoredAccuracy, EvalError> {
    if let Some(a) = aligned.iter().find(|a| !a.prediction.has_diagnostics()) {
        return Err(EvalError::MissingDiagnostics {
            dialogue_id: a.dialogue_id.to_string(),
            turn_index: a.turn_index,
        });
    }
    let all = |_: &str| true;
    let tallies: Vec<TurnTally> = aligned
        .par_iter()
        .map(|a| tally_turn(a.gold, &gold_gated_state(a.gold, a.prediction), &all))
        .collect();
    let t = Totals::fold(&tallies);
    Ok(RescoredAccuracy {
        jga: t.jga()?,
        aga: t.aga()?,
    })
}
