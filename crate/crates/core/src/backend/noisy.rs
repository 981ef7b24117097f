//! A synthetic answerer that corrupts gold answers at controlled rates.
//!
//! Every (dialogue, turn, slot) cell draws its noise once from its own seeded
//! substream, so the extractive and multi-choice queries of a cell see the same
//! decision and results do not depend on batching or worker count.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::oracle::input_hash;
use super::{AnswerRequest, AnswerResponse, Backend, BackendError};
use crate::corpus::{Dialogue, SlotDescriptor, NONE_VALUE};
use crate::prompt::{build_slot_query, PromptConfig};
use crate::rng::{below, digest64, substream, unit_f64};

const RNG_PURPOSE: &str = "noisy-backend";
const SPURIOUS_VALUE: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Probability that a gold-none cell is answered with a spurious value.
    pub false_positive_rate: f64,
    /// Probability that a gold-active cell is answered "none".
    pub false_negative_rate: f64,
    /// Probability that a surviving gold-active cell gets a wrong value.
    pub value_error_rate: f64,
    /// When set, misses only hit categorical slots and only on the
    /// multi-choice pass: the extractive answer keeps the gold value, so every
    /// injected error is a pure gate error.
    pub recoverable_misses: bool,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            false_positive_rate: 0.0,
            false_negative_rate: 0.0,
            value_error_rate: 0.0,
            recoverable_misses: false,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// Gate noise shaped by the unanswerable-question rate `alpha` a model was
    /// trained with: little negative training over-activates gates, heavy
    /// negative training suppresses them. `gate_noise` scales both rates.
    pub fn for_alpha(alpha: f64, gate_noise: f64, seed: u64) -> Self {
        NoiseConfig {
            false_positive_rate: (gate_noise * (1.0 - alpha)).clamp(0.0, 1.0),
            false_negative_rate: (gate_noise * alpha).clamp(0.0, 1.0),
            value_error_rate: 0.0,
            recoverable_misses: false,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    gold: Option<String>,
    slot: usize,
    multi_choice: bool,
    key: u64,
}

pub struct NoisyBackend {
    slots: Vec<SlotDescriptor>,
    cells: HashMap<String, Cell>,
    noise: NoiseConfig,
}

impl NoisyBackend {
    pub fn from_gold(
        dialogues: &[Dialogue],
        slots: &[SlotDescriptor],
        prompt: &PromptConfig,
        noise: NoiseConfig,
    ) -> Self {
        let mut cells = HashMap::new();
        for dialogue in dialogues {
            for (&idx, gold) in &dialogue.gold_states {
                let history = &dialogue.turns[..=idx];
                for (si, slot) in slots.iter().enumerate() {
                    let key =
                        digest64(&format!("{}\u{1f}{idx}\u{1f}{}", dialogue.id, slot.slot_id));
                    let passes: &[bool] = if slot.is_categorical() {
                        &[true, false]
                    } else {
                        &[true]
                    };
                    for &force_extractive in passes {
                        let query = build_slot_query(slot, history, force_extractive, prompt)
                            .expect("history ends at a gold turn and is nonempty");
                        cells
                            .entry(input_hash(&query.text))
                            .or_insert_with(|| Cell {
                                gold: gold.get(&slot.slot_id).map(str::to_string),
                                slot: si,
                                multi_choice: !force_extractive,
                                key,
                            });
                    }
                }
            }
        }
        NoisyBackend {
            slots: slots.to_vec(),
            cells,
            noise,
        }
    }

    fn answer_cell(&self, cell: &Cell) -> String {
        let n = &self.noise;
        let slot = &self.slots[cell.slot];
        let mut rng = substream(n.seed, RNG_PURPOSE, cell.key);
        let u_fp = unit_f64(&mut rng);
        let u_fn = unit_f64(&mut rng);
        let u_val = unit_f64(&mut rng);
        let pick = rng_pick(&mut rng, slot.value_candidates.len());
        match &cell.gold {
            None if u_fp < n.false_positive_rate => match pick {
                Some(i) => slot.value_candidates[i].clone(),
                None => SPURIOUS_VALUE.to_string(),
            },
            None => NONE_VALUE.to_string(),
            Some(gold)
                if u_fn < n.false_negative_rate
                    && !(n.recoverable_misses && !slot.is_categorical()) =>
            {
                if n.recoverable_misses && !cell.multi_choice {
                    gold.clone()
                } else {
                    NONE_VALUE.to_string()
                }
            }
            Some(gold) if u_val < n.value_error_rate => wrong_value(gold, slot, pick),
            Some(gold) => gold.clone(),
        }
    }
}

fn rng_pick(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Option<usize> {
    (n > 0).then(|| below(rng, n))
}

fn wrong_value(gold: &str, slot: &SlotDescriptor, pick: Option<usize>) -> String {
    let others: Vec<&String> = slot
        .value_candidates
        .iter()
        .filter(|c| *c != gold)
        .collect();
    if slot.is_categorical() && !others.is_empty() {
        others[pick.unwrap_or(0) % others.len()].clone()
    } else {
        format!("{gold} {SPURIOUS_VALUE}")
    }
}

impl Backend for NoisyBackend {
    fn answer(&self, requests: &[AnswerRequest]) -> Result<Vec<AnswerResponse>, BackendError> {
        Ok(requests
            .iter()
            .map(|r| AnswerResponse {
                id: r.id.clone(),
                output_text: match self.cells.get(&input_hash(&r.input_text)) {
                    Some(cell) => self.answer_cell(cell),
                    None => NONE_VALUE.to_string(),
                },
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::answer_batch;
    use crate::corpus::{DialogueState, DialogueTurn, SlotKind};

    fn setup() -> (Vec<Dialogue>, Vec<SlotDescriptor>) {
        let slots = vec![
            SlotDescriptor::new(
                "hotel",
                "area",
                SlotKind::Categorical,
                &["east", "west", "north"],
            ),
            SlotDescriptor::new("hotel", "name", SlotKind::NonCategorical, &[]),
        ];
        let mut gold = DialogueState::new();
        gold.insert("hotel-area", "east");
        let d = Dialogue {
            id: "d".into(),
            turns: vec![DialogueTurn::user("a hotel in the east please")],
            gold_states: [(0, gold)].into_iter().collect(),
        };
        (vec![d], slots)
    }

    fn ask(b: &NoisyBackend, slots: &[SlotDescriptor], d: &Dialogue) -> Vec<String> {
        let cfg = PromptConfig::default();
        let mut reqs = Vec::new();
        for s in slots {
            reqs.push(build_slot_query(s, &d.turns, true, &cfg).unwrap().text);
            if s.is_categorical() {
                reqs.push(build_slot_query(s, &d.turns, false, &cfg).unwrap().text);
            }
        }
        let reqs: Vec<_> = reqs
            .into_iter()
            .enumerate()
            .map(|(i, t)| AnswerRequest::new(i.to_string(), t))
            .collect();
        answer_batch(&reqs, b)
            .unwrap()
            .into_iter()
            .map(|r| r.output_text)
            .collect()
    }

    #[test]
    fn zero_noise_is_gold() {
        let (ds, slots) = setup();
        let b = NoisyBackend::from_gold(
            &ds,
            &slots,
            &PromptConfig::default(),
            NoiseConfig::default(),
        );
        assert_eq!(ask(&b, &slots, &ds[0]), ["east", "east", "none"]);
    }

    #[test]
    fn full_noise() {
        let (ds, slots) = setup();
        let noise = NoiseConfig {
            false_positive_rate: 1.0,
            false_negative_rate: 1.0,
            ..Default::default()
        };
        let b = NoisyBackend::from_gold(&ds, &slots, &PromptConfig::default(), noise);
        assert_eq!(ask(&b, &slots, &ds[0]), ["none", "none", "unknown"]);
        let recoverable = NoiseConfig {
            recoverable_misses: true,
            ..noise
        };
        let b = NoisyBackend::from_gold(&ds, &slots, &PromptConfig::default(), recoverable);
        assert_eq!(ask(&b, &slots, &ds[0]), ["east", "none", "unknown"]);
        let (mut ds, slots) = setup();
        ds[0]
            .gold_states
            .get_mut(&0)
            .unwrap()
            .insert("hotel-name", "the lodge");
        let b = NoisyBackend::from_gold(&ds, &slots, &PromptConfig::default(), recoverable);
        assert_eq!(ask(&b, &slots, &ds[0]), ["east", "none", "the lodge"]);
    }

    #[test]
    fn value_errors_stay_in_candidates() {
        let (ds, slots) = setup();
        for seed in 0..20 {
            let noise = NoiseConfig {
                value_error_rate: 1.0,
                seed,
                ..Default::default()
            };
            let b = NoisyBackend::from_gold(&ds, &slots, &PromptConfig::default(), noise);
            let out = ask(&b, &slots, &ds[0]);
            assert_eq!(out[0], out[1]);
            assert!(out[0] == "west" || out[0] == "north");
        }
    }

    #[test]
    fn alpha_shapes_rates() {
        let n = NoiseConfig::for_alpha(0.3, 0.5, 1);
        assert!((n.false_positive_rate - 0.35).abs() < 1e-12);
        assert!((n.false_negative_rate - 0.15).abs() < 1e-12);
    }
}
