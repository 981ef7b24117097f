use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    align, domain_jga, rescore, tallies, DomainTurnSelection, EvalError, Fraction, Taxonomy, Totals,
};
use crate::corpus::{Dialogue, Schema};
use crate::tracker::TurnPrediction;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Report AGA as the per-turn (macro) average instead of the micro average.
    pub aga_macro: bool,
    /// Domains to score separately.
    pub per_domain: Vec<String>,
    pub domain_selection: DomainTurnSelection,
    /// Add the oracle-gate rescoring block (needs diagnostics).
    pub oracle_gate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGateReport {
    pub jga: f64,
    pub aga: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub dialogues: usize,
    pub turns: usize,
    /// (turn, schema slot) pairs scored for gate accuracy.
    pub slots_evaluated: usize,
    pub gold_active_slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub jga: f64,
    /// Null when the gold corpus has no active slots.
    pub aga: Option<f64>,
    pub aga_mode: String,
    pub sga: f64,
    /// Null for a domain no selected turn touches.
    pub per_domain_jga: BTreeMap<String, Option<f64>>,
    pub per_domain_selection: DomainTurnSelection,
    pub error_taxonomy: Taxonomy,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle_gate: Option<OracleGateReport>,
    pub counts: ReportCounts,
    /// Exact numerator/denominator of the headline ratios.
    pub exact: BTreeMap<String, Fraction>,
}

pub fn evaluate(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
    schema: &Schema,
    options: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    for d in &options.per_domain {
        if !schema.has_domain(d) {
            return Err(EvalError::UnknownDomain(d.clone()));
        }
    }
    let aligned = align(predictions, golds)?;
    let totals = Totals::fold(&tallies(&aligned, Some(schema)));
    let jga = totals.jga()?;
    let sga = totals.sga(schema.len())?;
    let mut exact = BTreeMap::from([("jga".to_string(), jga), ("sga".to_string(), sga)]);
    let aga = match totals.aga() {
        Ok(f) => {
            exact.insert("aga".into(), f);
            Some(if options.aga_macro {
                totals.aga_macro()?
            } else {
                f.value()
            })
        }
        Err(EvalError::NoActiveSlots) => None,
        Err(e) => return Err(e),
    };

    let mut per_domain_jga = BTreeMap::new();
    for d in &options.per_domain {
        let f = domain_jga(&aligned, golds, schema, d, options.domain_selection);
        if let Some(f) = f {
            exact.insert(format!("jga[{d}]"), f);
        }
        per_domain_jga.insert(d.clone(), f.map(|f| f.value()));
    }

    let oracle_gate = if options.oracle_gate {
        let r = rescore(&aligned)?;
        exact.insert("oracle_gate_jga".into(), r.jga);
        exact.insert("oracle_gate_aga".into(), r.aga);
        Some(OracleGateReport {
            jga: r.jga.value(),
            aga: r.aga.value(),
        })
    } else {
        None
    };

    Ok(MetricsReport {
        jga: jga.value(),
        aga,
        aga_mode: if options.aga_macro { "macro" } else { "micro" }.to_string(),
        sga: sga.value(),
        per_domain_jga,
        per_domain_selection: options.domain_selection,
        error_taxonomy: Taxonomy::from_counts(totals.errors),
        oracle_gate,
        counts: ReportCounts {
            dialogues: golds.len(),
            turns: totals.turns,
            slots_evaluated: totals.turns * schema.len(),
            gold_active_slots: totals.gold_active,
        },
        exact,
    })
}

/// Per-slot counts over all aligned turns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotBreakdown {
    pub slot_id: String,
    pub gold_active: usize,
    pub predicted_active: usize,
    pub correct: usize,
    pub false_positive_gate: usize,
    pub false_negative_gate: usize,
    pub value_error: usize,
    pub gate_correct: usize,
    pub turns: usize,
}

pub fn slot_breakdown(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
    schema: &Schema,
) -> Result<Vec<SlotBreakdown>, EvalError> {
    let aligned = align(predictions, golds)?;
    let mut rows: Vec<SlotBreakdown> = schema
        .slots()
        .iter()
        .map(|s| SlotBreakdown {
            slot_id: s.slot_id.clone(),
            turns: aligned.len(),
            gate_correct: aligned.len(),
            ..Default::default()
        })
        .collect();
    let position: BTreeMap<&str, usize> = schema
        .slots()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.slot_id.as_str(), i))
        .collect();
    for a in &aligned {
        for (slot, g) in a.gold.iter() {
            let Some(&i) = position.get(slot) else {
                continue;
            };
            let row = &mut rows[i];
            row.gold_active += 1;
            match a.prediction.state.get(slot) {
                Some(p) if p == g => row.correct += 1,
                Some(_) => row.value_error += 1,
                None => {
                    row.false_negative_gate += 1;
                    row.gate_correct -= 1;
                }
            }
        }
        for (slot, _) in a.prediction.state.iter() {
            let Some(&i) = position.get(slot) else {
                continue;
            };
            let row = &mut rows[i];
            row.predicted_active += 1;
            if !a.gold.contains(slot) {
                row.false_positive_gate += 1;
                row.gate_correct -= 1;
            }
        }
    }
    Ok(rows)
}

/// CSV with one row per schema slot.
pub fn slot_breakdown_csv(
    predictions: &[TurnPrediction],
    golds: &[Dialogue],
    schema: &Schema,
) -> Result<String, EvalError> {
    let mut out = String::from(
        "slot_id,turns,gold_active,predicted_active,correct,false_positive_gate,false_negative_gate,value_error,gate_correct\n",
    );
    for r in slot_breakdown(predictions, golds, schema)? {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.slot_id,
            r.turns,
            r.gold_active,
            r.predicted_active,
            r.correct,
            r.false_positive_gate,
            r.false_negative_gate,
            r.value_error,
            r.gate_correct
        ));
    }
    Ok(out)
}
