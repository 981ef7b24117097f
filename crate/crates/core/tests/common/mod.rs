//! Shared helpers for the integration tests: fixture paths, brute-force
//! reference metrics and seeded corpus fuzzers.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use qadst::corpus::{self, DialogueFormat, DialogueLoadOptions};
use qadst::rng::{below, substream, unit_f64};
use qadst::tracker::TurnPrediction;
use qadst::{
    Dialogue, DialogueState, DialogueTurn, QaExample, QaKind, Schema, SlotDescriptor, SlotKind,
};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn shipped_schema_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/multiwoz_schema.json")
}

/// The mini MultiWOZ corpus with the shipped schema (number slots free-text).
pub fn multiwoz_mini() -> (Schema, Vec<Dialogue>) {
    let schema = corpus::load_schema(&shipped_schema_path(), true).expect("shipped schema");
    let loaded = corpus::load_dialogue_dataset(
        &fixture("multiwoz_mini/dialogues.json"),
        &schema,
        DialogueFormat::MultiWozJson,
        DialogueLoadOptions::default(),
    )
    .expect("fixture corpus");
    assert!(loaded.rejected.is_empty(), "{:?}", loaded.rejected);
    (schema, loaded.records)
}

pub fn ledger() -> (Schema, Vec<Dialogue>, Vec<TurnPrediction>) {
    let schema = corpus::load_schema(&fixture("ledger/schema.json"), false).unwrap();
    let golds: Vec<Dialogue> = corpus::jsonl::read(&fixture("ledger/gold.jsonl")).unwrap();
    let preds: Vec<TurnPrediction> =
        corpus::jsonl::read(&fixture("ledger/predictions.jsonl")).unwrap();
    (schema, golds, preds)
}

// ---------------------------------------------------------------------------
// Brute-force reference metrics. Every metric walks (turn, slot) pairs
// directly and finds predictions by linear scan.

pub fn find_prediction<'a>(
    preds: &'a [TurnPrediction],
    id: &str,
    turn: usize,
) -> &'a TurnPrediction {
    let hits: Vec<&TurnPrediction> = preds
        .iter()
        .filter(|p| p.dialogue_id == id && p.turn_index == turn)
        .collect();
    assert_eq!(hits.len(), 1, "prediction lookup for {id} turn {turn}");
    hits[0]
}

fn value<'a>(s: &'a DialogueState, slot: &str) -> Option<&'a str> {
    s.iter().find(|(k, _)| *k == slot).map(|(_, v)| v)
}

fn slot_union(a: &DialogueState, b: &DialogueState) -> BTreeSet<String> {
    a.slot_ids()
        .chain(b.slot_ids())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reference {
    pub jga: (usize, usize),
    pub aga: (usize, usize),
    pub aga_macro: Option<f64>,
    pub sga: (usize, usize),
    pub false_positive: usize,
    pub false_negative: usize,
    pub value_error: usize,
    /// Keyed by domain: (touching-dialogue selection, active-turn selection).
    pub per_domain: BTreeMap<String, (Option<(usize, usize)>, Option<(usize, usize)>)>,
    pub rescored_jga: (usize, usize),
    pub rescored_aga: (usize, usize),
}

fn states_equal_on(g: &DialogueState, p: &DialogueState, slots: &[&str]) -> bool {
    slots.iter().all(|s| value(g, s) == value(p, s))
}

/// Gold gate with predicted values, following the documented value order.
pub fn reference_gold_gated(gold: &DialogueState, p: &TurnPrediction) -> DialogueState {
    let mut out = DialogueState::new();
    for (slot, _) in gold.iter() {
        let usable = |m: &BTreeMap<String, String>| {
            m.get(slot)
                .filter(|v| !v.is_empty() && v.as_str() != "none")
                .cloned()
        };
        let v = value(&p.state, slot)
            .map(str::to_string)
            .or_else(|| usable(&p.pass2_values))
            .or_else(|| usable(&p.raw_values));
        if let Some(v) = v {
            out.insert(slot, &v);
        }
    }
    out
}

pub fn reference_metrics(
    golds: &[Dialogue],
    preds: &[TurnPrediction],
    schema: &Schema,
) -> Reference {
    let mut r = Reference::default();
    let mut macro_parts = Vec::new();
    for d in golds {
        for (&t, g) in &d.gold_states {
            let p = find_prediction(preds, &d.id, t);
            let slots = slot_union(g, &p.state);

            let mut all_equal = true;
            for s in &slots {
                let (gv, pv) = (value(g, s), value(&p.state, s));
                match (gv, pv) {
                    (None, Some(_)) => r.false_positive += 1,
                    (Some(_), None) => r.false_negative += 1,
                    (Some(a), Some(b)) if a != b => r.value_error += 1,
                    _ => {}
                }
                all_equal &= gv == pv;
            }
            r.jga.1 += 1;
            r.jga.0 += all_equal as usize;

            let mut turn_active = 0;
            let mut turn_correct = 0;
            for (s, gv) in g.iter() {
                turn_active += 1;
                if value(&p.state, s) == Some(gv) {
                    turn_correct += 1;
                }
            }
            r.aga.0 += turn_correct;
            r.aga.1 += turn_active;
            if turn_active > 0 {
                macro_parts.push(turn_correct as f64 / turn_active as f64);
            }

            for slot in schema.slots() {
                r.sga.1 += 1;
                if g.contains(&slot.slot_id) == p.state.contains(&slot.slot_id) {
                    r.sga.0 += 1;
                }
            }

            let gated = reference_gold_gated(g, p);
            let mut rescored_equal = true;
            for s in slot_union(g, &gated) {
                rescored_equal &= value(g, &s) == value(&gated, &s);
            }
            r.rescored_jga.1 += 1;
            r.rescored_jga.0 += rescored_equal as usize;
            r.rescored_aga.1 += g.len();
            r.rescored_aga.0 += g
                .iter()
                .filter(|(s, v)| value(&gated, s) == Some(v))
                .count();
        }
    }
    if !macro_parts.is_empty() {
        r.aga_macro = Some(macro_parts.iter().sum::<f64>() / macro_parts.len() as f64);
    }

    for domain in schema.domains() {
        let slots: Vec<&str> = schema
            .slots()
            .iter()
            .filter(|s| s.domain == domain)
            .map(|s| s.slot_id.as_str())
            .collect();
        let mut touching = (0, 0);
        let mut active = (0, 0);
        for d in golds {
            let touches = d
                .gold_states
                .values()
                .any(|g| slots.iter().any(|s| g.contains(s)));
            for (&t, g) in &d.gold_states {
                let p = find_prediction(preds, &d.id, t);
                let ok = states_equal_on(g, &p.state, &slots) as usize;
                if touches {
                    touching.0 += ok;
                    touching.1 += 1;
                }
                if slots.iter().any(|s| g.contains(s)) {
                    active.0 += ok;
                    active.1 += 1;
                }
            }
        }
        let opt = |x: (usize, usize)| (x.1 > 0).then_some(x);
        r.per_domain
            .insert(domain.to_string(), (opt(touching), opt(active)));
    }
    r
}

// ---------------------------------------------------------------------------
// Seeded fuzzers.

const DOMAINS: [&str; 3] = ["hotel", "taxi", "train"];
const COLOURS: [&str; 4] = ["red", "green", "blue", "grey"];
const WORDS: [&str; 5] = ["alpha", "beta two", "gamma", "delta house", "echo"];

pub struct FuzzCorpus {
    pub schema: Schema,
    pub golds: Vec<Dialogue>,
    pub predictions: Vec<TurnPrediction>,
}

fn chance(rng: &mut ChaCha8Rng, p: f64) -> bool {
    unit_f64(rng) < p
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[below(rng, xs.len())]
}

pub fn fuzz_schema(rng: &mut ChaCha8Rng, max_slots: usize) -> Schema {
    let n_domains = 1 + below(rng, DOMAINS.len());
    let n_slots = 1 + below(rng, max_slots);
    let slots = (0..n_slots)
        .map(|i| {
            let domain = DOMAINS[i % n_domains];
            let name = format!("s{i}");
            if chance(rng, 0.5) {
                SlotDescriptor::new(domain, &name, SlotKind::Categorical, &COLOURS)
            } else {
                SlotDescriptor::new(domain, &name, SlotKind::NonCategorical, &[])
            }
        })
        .collect();
    Schema::new(slots).unwrap()
}

fn slot_value(rng: &mut ChaCha8Rng, slot: &SlotDescriptor) -> String {
    if slot.is_categorical() {
        pick(rng, &COLOURS).to_string()
    } else {
        pick(rng, &WORDS).to_string()
    }
}

/// Dialogues with unique utterances, alternating user and system turns, and a
/// gold state at every user turn.
pub fn fuzz_dialogues(
    rng: &mut ChaCha8Rng,
    schema: &Schema,
    tag: u64,
    max_dialogues: usize,
) -> Vec<Dialogue> {
    let n = 1 + below(rng, max_dialogues);
    (0..n)
        .map(|di| {
            let id = format!("F{tag}-{di}");
            let user_turns = 1 + below(rng, 4);
            let mut turns = Vec::new();
            let mut gold_states = BTreeMap::new();
            for u in 0..user_turns {
                if u > 0 {
                    turns.push(DialogueTurn::system(format!("reply {u} in {id}")));
                }
                turns.push(DialogueTurn::user(format!("request {u} in {id}")));
                let mut state = DialogueState::new();
                for slot in schema.slots() {
                    if chance(rng, 0.4) {
                        let v = slot_value(rng, slot);
                        state.insert(slot.slot_id.clone(), &v);
                    }
                }
                gold_states.insert(turns.len() - 1, state);
            }
            Dialogue {
                id,
                turns,
                gold_states,
            }
        })
        .collect()
}

/// Predictions with gate errors, value errors, out-of-schema slots and random
/// extractive/multi-choice diagnostics, in shuffled order.
pub fn fuzz_predictions(
    rng: &mut ChaCha8Rng,
    schema: &Schema,
    golds: &[Dialogue],
) -> Vec<TurnPrediction> {
    let mut out = Vec::new();
    for d in golds {
        for (&t, g) in &d.gold_states {
            let mut state = DialogueState::new();
            let mut raw = BTreeMap::new();
            let mut pass2 = BTreeMap::new();
            for slot in schema.slots() {
                let id = &slot.slot_id;
                let gv = g.get(id).map(str::to_string);
                let pv = match &gv {
                    Some(v) if chance(rng, 0.75) => Some(v.clone()),
                    Some(_) if chance(rng, 0.5) => None,
                    Some(_) => Some(slot_value(rng, slot)),
                    None if chance(rng, 0.15) => Some(slot_value(rng, slot)),
                    None => None,
                };
                if let Some(v) = &pv {
                    state.insert(id.clone(), v);
                }
                let extractive = match (&pv, &gv) {
                    (Some(v), _) => v.clone(),
                    (None, Some(v)) if chance(rng, 0.5) => v.clone(),
                    _ => "none".to_string(),
                };
                if slot.is_categorical() && extractive != "none" {
                    let mc = match &pv {
                        Some(v) => v.clone(),
                        None if chance(rng, 0.5) => "none".to_string(),
                        None => slot_value(rng, slot),
                    };
                    pass2.insert(id.clone(), mc);
                }
                raw.insert(id.clone(), extractive);
            }
            if chance(rng, 0.05) {
                state.insert("misc-extra", "stray");
            }
            let gate = schema
                .slots()
                .iter()
                .map(|s| (s.slot_id.clone(), state.contains(&s.slot_id)))
                .collect();
            out.push(TurnPrediction {
                dialogue_id: d.id.clone(),
                turn_index: t,
                state,
                gate,
                raw_values: raw,
                pass2_values: pass2,
            });
        }
    }
    if chance(rng, 0.3) {
        out.push(TurnPrediction {
            dialogue_id: "not-in-gold".into(),
            turn_index: 0,
            state: DialogueState::new(),
            gate: BTreeMap::new(),
            raw_values: BTreeMap::from([("x".to_string(), "none".to_string())]),
            pass2_values: BTreeMap::new(),
        });
    }
    shuffle(rng, &mut out);
    out
}

pub fn shuffle<T>(rng: &mut ChaCha8Rng, xs: &mut [T]) {
    for i in (1..xs.len()).rev() {
        xs.swap(i, below(rng, i + 1));
    }
}

pub fn fuzz_corpus(seed: u64, index: u64) -> FuzzCorpus {
    let mut rng = substream(seed, "fuzz-corpus", index);
    let schema = fuzz_schema(&mut rng, 8);
    let golds = fuzz_dialogues(&mut rng, &schema, index, 10);
    let predictions = fuzz_predictions(&mut rng, &schema, &golds);
    FuzzCorpus {
        schema,
        golds,
        predictions,
    }
}

// ---------------------------------------------------------------------------
// Synthetic extractive sources for synthesis checks. Years repeat within a
// passage, abbreviations sit mid-sentence, and some answers live in the first
// sentence, so truncation meets its awkward cases often.

const NAMES: [&str; 6] = ["Tom", "Dr. Ana Ruiz", "Zoë", "Mr. Oduya", "Li Wei", "Sam"];
const PLACES: [&str; 5] = ["Paris", "the U.S. coast", "Kraków", "Lagos", "a small town"];

/// Shape of [`synthetic_qa_sources`] passages.
#[derive(Debug, Clone, Copy)]
pub struct SourceShape {
    /// Share of answers placed in the first sentence (never truncatable).
    pub first_sentence_share: f64,
    /// Number of distinct years; small spans repeat the answer earlier.
    pub year_span: usize,
}

/// Close to reading-comprehension data: most answers sit past the opening
/// sentence and years rarely repeat.
pub const TYPICAL: SourceShape = SourceShape {
    first_sentence_share: 0.10,
    year_span: 70,
};

/// Dense year collisions and many first-sentence answers.
pub const ADVERSARIAL: SourceShape = SourceShape {
    first_sentence_share: 0.15,
    year_span: 12,
};

pub fn synthetic_qa_sources(n: usize, seed: u64, shape: SourceShape) -> Vec<QaExample> {
    (0..n)
        .map(|i| {
            let mut rng = substream(seed, "qa-source", i as u64);
            let sentences = 2 + below(&mut rng, 4);
            let mut context = String::new();
            let mut years = Vec::new();
            for s in 0..sentences {
                let year = 1950 + below(&mut rng, shape.year_span);
                let name = pick(&mut rng, &NAMES);
                let place = pick(&mut rng, &PLACES);
                let sentence = match below(&mut rng, 4) {
                    0 => format!("{name} moved to {place} in {year}."),
                    1 => format!("In {year}, {name} ({i}) opened an office near {place}!"),
                    2 => format!("Was {place} chosen in {year}?"),
                    _ => format!("Records from {year} mention {name} and item {i}-{s}."),
                };
                if !context.is_empty() {
                    context.push(' ');
                }
                let start = context.chars().count() + sentence.find(&year.to_string()).unwrap();
                context.push_str(&sentence);
                years.push((year, start));
            }
            let k = if !chance(&mut rng, shape.first_sentence_share) {
                1 + below(&mut rng, sentences - 1)
            } else {
                0
            };
            let (year, start) = years[k];
            let answer = year.to_string();
            QaExample {
                id: format!("q{seed}-{i}"),
                kind: QaKind::Extractive,
                question: format!("In which year did event {i} happen?"),
                context,
                choices: Vec::new(),
                answer_char_span: Some((start, start + answer.chars().count())),
                answer,
                source: "synthetic".into(),
            }
        })
        .collect()
}
