//! Seeded synthetic corpora with the same shape as real reranking data:
//! a source fact pool, a gold subset with some novel facts, and candidate
//! pools produced by corrupting the gold set.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateEntry, ExampleRecord, Facts};
use crate::factmodel::{EntityLabel, RelationFlag, Triplet, TripletSet};
use crate::linearizer::linearize;
use crate::metrics::{radgraph_score, ObservationVector, OBSERVATION_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid synthesis config: {0}")]
pub struct SynthError(String);

/// Per-triplet corruption probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Corruption {
    pub drop: f64,
    pub insert_from_source: f64,
    pub flip_label: f64,
    pub flip_flag: f64,
}

impl Default for Corruption {
    fn default() -> Self {
        Self {
            drop: 0.3,
            insert_from_source: 0.1,
            flip_label: 0.1,
            flip_flag: 0.1,
        }
    }
}

impl Corruption {
    pub const NONE: Corruption = Corruption {
        drop: 0.0,
        insert_from_source: 0.0,
        flip_label: 0.0,
        flip_flag: 0.0,
    };

    fn rates(&self) -> [(&'static str, f64); 4] {
        [
            ("drop", self.drop),
            ("insert_from_source", self.insert_from_source),
            ("flip_label", self.flip_label),
            ("flip_flag", self.flip_flag),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeepProbabilities {
    #[serde(rename = "ANAT-DP")]
    pub anat_dp: f64,
    #[serde(rename = "OBS-DP")]
    pub obs_dp: f64,
    #[serde(rename = "OBS-U")]
    pub obs_u: f64,
    #[serde(rename = "OBS-DA")]
    pub obs_da: f64,
}

impl Default for KeepProbabilities {
    fn default() -> Self {
        Self {
            anat_dp: 0.35,
            obs_dp: 0.5,
            obs_u: 0.5,
            obs_da: 0.6,
        }
    }
}

impl KeepProbabilities {
    fn get(&self, label: EntityLabel) -> f64 {
        match label {
            EntityLabel::AnatDp => self.anat_dp,
            EntityLabel::ObsDp => self.obs_dp,
            EntityLabel::ObsU => self.obs_u,
            EntityLabel::ObsDa => self.obs_da,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub examples: usize,
    /// Inclusive range of source triplets per example.
    pub entities_per_source: (usize, usize),
    pub gold_keep_prob: KeepProbabilities,
    /// Chance, per source triplet, of adding a gold fact absent from the source.
    pub novel_rate: f64,
    pub candidates_per_example: usize,
    pub corruption: Corruption,
    /// Standard deviation of the noise added to true scores before the
    /// first-stage sort.
    pub first_stage_noise: f64,
    /// Channel used to fake a generated target sequence; `None` omits it.
    pub prediction: Option<Corruption>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            examples: 100,
            entities_per_source: (6, 14),
            gold_keep_prob: KeepProbabilities::default(),
            novel_rate: 0.1,
            candidates_per_example: 10,
            corruption: Corruption::default(),
            first_stage_noise: 0.5,
            prediction: Some(Corruption {
                drop: 0.15,
                insert_from_source: 0.05,
                flip_label: 0.05,
                flip_flag: 0.05,
            }),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError(m));
        if self.examples == 0 {
            return err("examples must be >= 1".into());
        }
        if self.candidates_per_example == 0 {
            return err("candidates_per_example must be >= 1".into());
        }
        let (lo, hi) = self.entities_per_source;
        if lo == 0 || lo > hi {
            return err(format!("entities_per_source ({lo}, {hi}) must satisfy 1 <= lo <= hi"));
        }
        if hi > vocabulary_size() {
            return err(format!("entities_per_source upper bound exceeds the {} vocabulary entries", vocabulary_size()));
        }
        if !(self.first_stage_noise >= 0.0 && self.first_stage_noise.is_finite()) {
            return err("first_stage_noise must be a finite value >= 0".into());
        }
        let mut probs = vec![("novel_rate", self.novel_rate)];
        for l in EntityLabel::ALL {
            probs.push((l.as_str(), self.gold_keep_prob.get(l)));
        }
        probs.extend(self.corruption.rates());
        if let Some(p) = &self.prediction {
            probs.extend(p.rates());
        }
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} = {p} is not a probability"));
            }
        }
        Ok(())
    }
}

const ANATOMY: &[&str] = &[
    "lungs", "lung", "pleural", "cardiomediastinal", "hilar", "contours", "base", "right", "left",
    "pulmonary", "vasculature", "rib", "heart", "mediastinum", "trachea", "diaphragm",
    "costophrenic", "apex", "chest", "aorta",
];
const PRESENT: &[&str] = &[
    "opacity", "edema", "cardiomegaly", "atelectasis", "consolidation", "tube", "catheter", "wires",
    "sternotomy", "fracture", "enlarged", "mild", "moderate", "stable", "unchanged", "clear",
    "expanded", "nodule", "lesion", "pneumonia",
];
const UNCERTAIN: &[&str] = &[
    "pneumonia", "aspiration", "effusion", "hemorrhage", "infection", "atelectasis", "consolidation",
    "edema",
];
const ABSENT: &[&str] = &[
    "effusion", "pneumothorax", "consolidation", "acute", "process", "edema", "fracture",
    "displaced", "focal", "abnormality",
];

fn words(label: EntityLabel) -> &'static [&'static str] {
    match label {
        EntityLabel::AnatDp => ANATOMY,
        EntityLabel::ObsDp => PRESENT,
        EntityLabel::ObsU => UNCERTAIN,
        EntityLabel::ObsDa => ABSENT,
    }
}

fn vocabulary() -> Vec<(&'static str, EntityLabel)> {
    EntityLabel::ALL
        .into_iter()
        .flat_map(|l| words(l).iter().map(move |w| (*w, l)))
        .collect()
}

fn vocabulary_size() -> usize {
    EntityLabel::ALL.iter().map(|l| words(*l).len()).sum()
}

fn triplet(entity: &str, label: EntityLabel, flag: RelationFlag) -> Triplet {
    Triplet::new(entity, label, flag).expect("vocabulary entries are valid entities")
}

/// Observation slot an entity word maps to, if any.
fn observation_slot(entity: &str) -> Option<usize> {
    Some(match entity {
        "cardiomegaly" => 1,
        "opacity" => 2,
        "nodule" | "lesion" => 3,
        "edema" => 4,
        "consolidation" => 5,
        "pneumonia" | "infection" | "aspiration" => 6,
        "atelectasis" => 7,
        "pneumothorax" => 8,
        "effusion" => 9,
        "fracture" => 11,
        "tube" | "catheter" | "wires" | "sternotomy" => 12,
        _ => return None,
    })
}

/// Observation vector implied by a set: present or uncertain observations
/// mark their slot, and "No Finding" is set when nothing else is.
pub fn observations_of(set: &TripletSet) -> ObservationVector {
    let mut bits = [false; OBSERVATION_COUNT];
    for t in set.iter() {
        if matches!(t.label(), EntityLabel::ObsDp | EntityLabel::ObsU) {
            if let Some(slot) = observation_slot(t.entity()) {
                bits[slot] = true;
            }
        }
    }
    if !bits.iter().any(|&b| b) {
        bits[OBSERVATION_COUNT - 1] = true;
    }
    ObservationVector::new(bits)
}

/// Deterministic text for a triplet set, three facts per sentence.
pub fn render_text(set: &TripletSet) -> String {
    if set.is_empty() {
        return "Unremarkable.".to_string();
    }
    let phrases: Vec<String> = set
        .iter()
        .map(|t| match t.label() {
            EntityLabel::ObsDa => format!("no {}", t.entity()),
            EntityLabel::ObsU => format!("possible {}", t.entity()),
            _ => t.entity().to_string(),
        })
        .collect();
    phrases
        .chunks(3)
        .map(|c| {
            let s = c.join(" ");
            let mut chars = s.chars();
            let first = chars.next().map(|c| c.to_uppercase().collect::<String>()).unwrap_or_default();
            format!("{first}{}.", chars.as_str())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn corrupt(gold: &TripletSet, source: &TripletSet, ch: &Corruption, rng: &mut ChaCha8Rng) -> TripletSet {
    let mut out = TripletSet::new();
    for t in gold.iter() {
        if rng.random_bool(ch.drop) {
            continue;
        }
        let mut t = t.clone();
        if rng.random_bool(ch.flip_label) {
            let others: Vec<EntityLabel> = EntityLabel::ALL.into_iter().filter(|&l| l != t.label()).collect();
            t = t.with_label(*others.choose(rng).expect("three other labels"));
        }
        if rng.random_bool(ch.flip_flag) {
            t = t.with_flag(t.flag().toggled());
        }
        out.insert(t);
    }
    for t in source.iter() {
        if !gold.contains(t) && rng.random_bool(ch.insert_from_source) {
            out.insert(t.clone());
        }
    }
    out
}

fn sample_source(config: &SynthConfig, vocab: &[(&'static str, EntityLabel)], rng: &mut ChaCha8Rng) -> TripletSet {
    let (lo, hi) = config.entities_per_source;
    let n = rng.random_range(lo..=hi);
    vocab
        .choose_multiple(rng, n)
        .map(|(w, l)| triplet(w, *l, RelationFlag::from_related(rng.random_bool(0.6))))
        .collect()
}

fn sample_gold(config: &SynthConfig, source: &TripletSet, vocab: &[(&'static str, EntityLabel)], rng: &mut ChaCha8Rng) -> TripletSet {
    let mut gold = TripletSet::new();
    for t in source.iter() {
        if rng.random_bool(config.gold_keep_prob.get(t.label())) {
            gold.insert(t.clone());
        }
        if rng.random_bool(config.novel_rate) {
            let (w, l) = vocab.choose(rng).expect("vocabulary is non-empty");
            let novel = triplet(w, *l, RelationFlag::from_related(rng.random_bool(0.6)));
            if !source.contains(&novel) {
                gold.insert(novel);
            }
        }
    }
    if gold.is_empty() {
        gold.insert(source.iter().next().expect("source has >= 1 triplet").clone());
    }
    gold
}

/// Generates a corpus. The output is a pure function of `config`.
pub fn synthesize(config: &SynthConfig) -> Result<Vec<ExampleRecord>, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab = vocabulary();
    let noise = Normal::new(0.0, config.first_stage_noise).map_err(|e| SynthError(e.to_string()))?;

    let mut records = Vec::with_capacity(config.examples);
    for i in 0..config.examples {
        let source = sample_source(config, &vocab, &mut rng);
        let gold = sample_gold(config, &source, &vocab, &mut rng);

        let mut pool: Vec<(f64, usize, TripletSet, f64)> = (0..config.candidates_per_example)
            .map(|k| {
                let set = corrupt(&gold, &source, &config.corruption, &mut rng);
                let truth = radgraph_score(&set, &gold).value();
                let key = if config.first_stage_noise > 0.0 {
                    truth + noise.sample(&mut rng)
                } else {
                    truth
                };
                (key, k, set, truth)
            })
            .collect();
        pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let predicted_sequence = config
            .prediction
            .as_ref()
            .map(|ch| linearize(&corrupt(&gold, &source, ch, &mut rng)));

        let candidates = pool
            .into_iter()
            .enumerate()
            .map(|(rank, (_, _, set, truth))| CandidateEntry {
                id: Some(format!("c{}", rank + 1)),
                text: render_text(&set),
                observations: Some(observations_of(&set)),
                true_score: Some(truth),
                facts: Facts::Triplets(set),
            })
            .collect();

        records.push(ExampleRecord {
            id: format!("synth-{i:06}"),
            findings: render_text(&source),
            impression: render_text(&gold),
            gold_observations: Some(observations_of(&gold)),
            pred_observations: None,
            findings_facts: Some(Facts::Triplets(source)),
            impression_facts: Some(Facts::Triplets(gold)),
            candidates,
            predicted_sequence,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_corpus, recompute_true_score, write_corpus, LoadFilters};

    fn small() -> SynthConfig {
        SynthConfig {
            seed: 7,
            examples: 25,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synthesize(&small()).unwrap();
        let b = synthesize(&small()).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_corpus(&mut ba, &a).unwrap();
        write_corpus(&mut bb, &b).unwrap();
        assert_eq!(ba, bb);
        let c = synthesize(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_channel_copies_gold() {
        let cfg = SynthConfig {
            corruption: Corruption::NONE,
            first_stage_noise: 0.0,
            ..small()
        };
        for r in synthesize(&cfg).unwrap() {
            let gold = r.gold_triplets().unwrap();
            for c in &r.candidates {
                assert_eq!(c.facts.triplets(), gold);
                assert_eq!(c.true_score, Some(1.0));
            }
        }
    }

    #[test]
    fn shape_and_stored_scores() {
        let cfg = small();
        let recs = synthesize(&cfg).unwrap();
        assert_eq!(recs.len(), 25);
        for r in &recs {
            assert_eq!(r.candidates.len(), 10);
            let src = r.source_triplets().unwrap();
            assert!((6..=14).contains(&src.len()));
            assert!(!r.gold_triplets().unwrap().is_empty());
            for (i, c) in r.candidates.iter().enumerate() {
                let again = recompute_true_score(r, i).unwrap().value();
                assert_eq!(c.true_score, Some(again));
            }
        }
        // survives the loader, including stored-score validation
        let mut buf = Vec::new();
        write_corpus(&mut buf, &recs).unwrap();
        assert_eq!(read_corpus(buf.as_slice(), LoadFilters::default()).unwrap(), recs);
    }

    #[test]
    fn invalid_configs() {
        assert!(synthesize(&SynthConfig { examples: 0, ..small() }).is_err());
        assert!(synthesize(&SynthConfig { candidates_per_example: 0, ..small() }).is_err());
        assert!(synthesize(&SynthConfig { entities_per_source: (5, 2), ..small() }).is_err());
        assert!(synthesize(&SynthConfig { first_stage_noise: -1.0, ..small() }).is_err());
        let mut c = small();
        c.corruption.drop = 1.5;
        assert!(synthesize(&c).is_err());
    }

    #[test]
    fn rendering_and_observations() {
        let set: TripletSet = vec![
            triplet("effusion", EntityLabel::ObsDa, RelationFlag::Rel),
            triplet("edema", EntityLabel::ObsU, RelationFlag::Na),
            triplet("lungs", EntityLabel::AnatDp, RelationFlag::Na),
            triplet("tube", EntityLabel::ObsDp, RelationFlag::Rel),
        ]
        .into();
        assert_eq!(render_text(&set), "No effusion possible edema lungs. Tube.");
        let bits = *observations_of(&set).bits();
        assert!(bits[4] && bits[12] && !bits[9] && !bits[13]);
        assert!(observations_of(&TripletSet::new()).bits()[13]);
    }
}
