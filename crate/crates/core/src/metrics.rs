//! Triplet-set RadGraph score, RadMRR, ROUGE-1/2/L and observation-vector F1.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factmodel::TripletSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
    #[error("ranking for example {example} is not a permutation of its {candidates} candidates")]
    BadRanking { example: usize, candidates: usize },
    #[error("cannot align {pred} predicted with {gold} gold observation vectors")]
    Alignment { pred: usize, gold: usize },
    #[error("observation vector must have 14 entries in {{0,1}}, got {0:?}")]
    BadObservationVector(Vec<i64>),
}

/// A ratio in [0, 1]; rendered as a percentage with two decimals.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(f64);

impl Score {
    pub const ZERO: Score = Score(0.0);
    pub const ONE: Score = Score(1.0);

    /// Panics if `value` is outside [0, 1] or NaN.
    pub fn new(value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "score {value} outside [0, 1]");
        Score(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn percent(self) -> f64 {
        self.0 * 100.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.percent())
    }
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Precision and recall of `candidate` against `reference`.
/// An empty side has precision (or recall) 1 only when the other side is
/// empty too.
pub fn radgraph_precision_recall(candidate: &TripletSet, reference: &TripletSet) -> (f64, f64) {
    let common = candidate.intersection_len(reference) as f64;
    let ratio = |den: usize| {
        if den > 0 {
            common / den as f64
        } else if candidate.is_empty() && reference.is_empty() {
            1.0
        } else {
            0.0
        }
    };
    (ratio(candidate.len()), ratio(reference.len()))
}

/// `2 |A ∩ B| / (|A| + |B|)`, with two empty sets scoring 1.
pub fn radgraph_score(candidate: &TripletSet, reference: &TripletSet) -> Score {
    let total = candidate.len() + reference.len();
    if total == 0 {
        return Score::ONE;
    }
    Score((2 * candidate.intersection_len(reference)) as f64 / total as f64)
}

/// Scores within this distance of the maximum count as tied for best.
const TIE_EPSILON: f64 = 1e-12;

/// Reciprocal of the best-placed position (1-based) among the candidates
/// whose true score is maximal. `order` lists candidate indices best first.
pub fn reciprocal_rank(true_scores: &[f64], order: &[usize]) -> Option<f64> {
    if true_scores.is_empty() || order.len() != true_scores.len() {
        return None;
    }
    let mut seen = vec![false; true_scores.len()];
    for &i in order {
        if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
            return None;
        }
    }
    let best = true_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    order
        .iter()
        .position(|&i| true_scores[i] >= best - TIE_EPSILON)
        .map(|pos| 1.0 / (pos + 1) as f64)
}

/// One example's input to RadMRR.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedExample {
    pub true_scores: Vec<f64>,
    pub order: Vec<usize>,
}

/// Mean over examples of the reciprocal rank of the optimal candidate.
pub fn radmrr<'a, I>(examples: I) -> Result<Score, MetricError>
where
    I: IntoIterator<Item = &'a RankedExample>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (example, ex) in examples.into_iter().enumerate() {
        total += reciprocal_rank(&ex.true_scores, &ex.order).ok_or(MetricError::BadRanking {
            example,
            candidates: ex.true_scores.len(),
        })?;
        count += 1;
    }
    if count == 0 {
        return Err(MetricError::Undefined("RadMRR over zero examples"));
    }
    Ok(Score((total / count as f64).min(1.0)))
}

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn rouge_tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_insert(0) += 1;
    }
    counts
}

fn overlap_f1(overlap: usize, cand_total: usize, ref_total: usize) -> Score {
    match (cand_total, ref_total) {
        (0, 0) => Score::ONE,
        (0, _) | (_, 0) => Score::ZERO,
        _ => Score((2 * overlap) as f64 / (cand_total + ref_total) as f64),
    }
}

/// ROUGE-N F1 with clipped n-gram counts.
pub fn rouge_n<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T], n: usize) -> Score {
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| refs.get(g).map_or(0, |&r| c.min(r)))
        .sum();
    overlap_f1(
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

pub fn lcs_len<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T]) -> Score {
    overlap_f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// ROUGE-1/2/L F1 between two texts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

pub fn rouge_all(candidate: &str, reference: &str) -> RougeScores {
    let c = rouge_tokenize(candidate);
    let r = rouge_tokenize(reference);
    RougeScores {
        rouge1: rouge_n(&c, &r, 1).value(),
        rouge2: rouge_n(&c, &r, 2).value(),
        rouge_l: rouge_l(&c, &r).value(),
    }
}

pub const OBSERVATION_COUNT: usize = 14;

/// Slot order of an observation vector.
pub const OBSERVATIONS: [&str; OBSERVATION_COUNT] = [
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
    "No Finding",
];

/// 14 binary observation indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct ObservationVector([bool; OBSERVATION_COUNT]);

impl ObservationVector {
    pub fn new(bits: [bool; OBSERVATION_COUNT]) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool; OBSERVATION_COUNT] {
        &self.0
    }
}

impl TryFrom<Vec<i64>> for ObservationVector {
    type Error = MetricError;

    fn try_from(v: Vec<i64>) -> Result<Self, Self::Error> {
        if v.len() != OBSERVATION_COUNT || v.iter().any(|&x| x != 0 && x != 1) {
            return Err(MetricError::BadObservationVector(v));
        }
        let mut bits = [false; OBSERVATION_COUNT];
        for (b, x) in bits.iter_mut().zip(&v) {
            *b = *x == 1;
        }
        Ok(Self(bits))
    }
}

impl From<ObservationVector> for Vec<i64> {
    fn from(v: ObservationVector) -> Self {
        v.0.iter().map(|&b| b as i64).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingMode {
    /// Pool TP/FP/FN over all slots and examples.
    #[default]
    Micro,
    /// Mean of per-observation F1.
    Macro,
    /// Mean of per-example F1.
    Example,
}

impl AveragingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AveragingMode::Micro => "micro",
            AveragingMode::Macro => "macro",
            AveragingMode::Example => "example",
        }
    }
}

impl FromStr for AveragingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "micro" => Ok(AveragingMode::Micro),
            "macro" => Ok(AveragingMode::Macro),
            "example" => Ok(AveragingMode::Example),
            other => Err(format!("unknown averaging mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn add(&mut self, pred: bool, gold: bool) {
        match (pred, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    fn f1(self) -> f64 {
        f1_from_counts(self.tp, self.fp, self.fn_)
    }
}

/// F1 between aligned predicted and gold observation vectors. Slots or
/// examples with neither predicted nor gold positives score 1.
pub fn observation_f1(
    pred: &[ObservationVector],
    gold: &[ObservationVector],
    mode: AveragingMode,
) -> Result<Score, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::Alignment {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricError::Undefined("observation F1 over zero examples"));
    }
    let pairs = pred.iter().zip(gold);
    let value = match mode {
        AveragingMode::Micro => {
            let mut c = Counts::default();
            for (p, g) in pairs {
                for (a, b) in p.0.iter().zip(&g.0) {
                    c.add(*a, *b);
                }
            }
            c.f1()
        }
        AveragingMode::Macro => {
            let mut per_slot = [Counts::default(); OBSERVATION_COUNT];
            for (p, g) in pairs {
                for (slot, c) in per_slot.iter_mut().enumerate() {
                    c.add(p.0[slot], g.0[slot]);
                }
            }
            per_slot.iter().map(|c| c.f1()).sum::<f64>() / OBSERVATION_COUNT as f64
        }
        AveragingMode::Example => {
            let sum: f64 = pairs
                .map(|(p, g)| {
                    let mut c = Counts::default();
                    for (a, b) in p.0.iter().zip(&g.0) {
                        c.add(*a, *b);
                    }
                    c.f1()
                })
                .sum();
            sum / pred.len() as f64
        }
    };
    Ok(Score(value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factmodel::EntityLabel::{self, *};
    use crate::factmodel::RelationFlag::{self, *};
    use crate::factmodel::Triplet;
    use proptest::prelude::*;

    fn set(items: &[(&str, EntityLabel, RelationFlag)]) -> TripletSet {
        items.iter().map(|(e, l, f)| Triplet::new(e, *l, *f).unwrap()).collect()
    }

    fn gold() -> TripletSet {
        set(&[
            ("acute", ObsDa, Rel),
            ("cardiopulmonary", AnatDp, Na),
            ("process", ObsDa, Rel),
        ])
    }

    fn toks(s: &str) -> Vec<String> {
        rouge_tokenize(s)
    }

    #[test]
    fn radgraph_examples() {
        assert_eq!(radgraph_score(&gold(), &gold()), Score::ONE);
        let intrathoracic = set(&[
            ("acute", ObsDa, Rel),
            ("intrathoracic", AnatDp, Na),
            ("process", ObsDa, Rel),
        ]);
        let s = radgraph_score(&intrathoracic, &gold()).value();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{}", radgraph_score(&intrathoracic, &gold())), "66.67");
        let other = set(&[("unremarkable", ObsDp, Rel)]);
        assert_eq!(radgraph_score(&other, &gold()), Score::ZERO);
        assert_eq!(radgraph_score(&TripletSet::new(), &TripletSet::new()), Score::ONE);
        assert_eq!(radgraph_score(&TripletSet::new(), &gold()), Score::ZERO);
    }

    #[test]
    fn flag_and_label_are_part_of_identity() {
        let flipped = set(&[
            ("acute", ObsDa, Na),
            ("cardiopulmonary", AnatDp, Na),
            ("process", ObsDp, Rel),
        ]);
        let s = radgraph_score(&flipped, &gold()).value();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn precision_recall_examples() {
        assert_eq!(radgraph_precision_recall(&gold(), &gold()), (1.0, 1.0));
        let a = set(&[("a", ObsDp, Rel), ("b", ObsDp, Rel)]);
        let b = set(&[("a", ObsDp, Rel), ("b", ObsDp, Rel), ("c", ObsDp, Rel), ("d", ObsDp, Na)]);
        assert_eq!(radgraph_precision_recall(&a, &b), (1.0, 0.5));
        assert_eq!(radgraph_precision_recall(&a, &gold()), (0.0, 0.0));
        let e = TripletSet::new();
        assert_eq!(radgraph_precision_recall(&e, &e), (1.0, 1.0));
        assert_eq!(radgraph_precision_recall(&e, &a), (0.0, 0.0));
    }

    #[test]
    fn reciprocal_rank_examples() {
        // optimum (index 0) placed third
        assert_eq!(reciprocal_rank(&[0.9, 0.2, 0.1], &[1, 2, 0]), Some(1.0 / 3.0));
        assert_eq!(reciprocal_rank(&[0.9, 0.2, 0.1], &[0, 1, 2]), Some(1.0));
        // ties: best placed of the tied optima counts
        assert_eq!(reciprocal_rank(&[1.0, 1.0, 0.5], &[2, 1, 0]), Some(0.5));
        assert_eq!(reciprocal_rank(&[1.0, 0.5], &[0, 0]), None);
        assert_eq!(reciprocal_rank(&[1.0, 0.5], &[0]), None);
        assert_eq!(reciprocal_rank(&[], &[]), None);
    }

    #[test]
    fn radmrr_uniform_random_expectation() {
        // Brute force: average 1/rank over every placement of a unique optimum.
        let n = 10;
        let scores: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let examples: Vec<RankedExample> = (0..n)
            .map(|pos| {
                let mut order: Vec<usize> = (1..n).collect();
                order.insert(pos, 0);
                RankedExample { true_scores: scores.clone(), order }
            })
            .collect();
        let v = radmrr(&examples).unwrap().value();
        let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum::<f64>() / n as f64;
        assert!((v - harmonic).abs() < 1e-12);
        assert!((v - 0.29290).abs() < 1e-5);
    }

    #[test]
    fn radmrr_errors() {
        assert_eq!(
            radmrr(&Vec::<RankedExample>::new()),
            Err(MetricError::Undefined("RadMRR over zero examples"))
        );
        let bad = [RankedExample { true_scores: vec![1.0], order: vec![3] }];
        assert!(matches!(radmrr(&bad), Err(MetricError::BadRanking { example: 0, .. })));
    }

    #[test]
    fn rouge_examples() {
        let a = toks("no acute process");
        let b = toks("no acute cardiopulmonary process");
        assert!((rouge_n(&a, &b, 1).value() - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(rouge_n(&a, &a, 1), Score::ONE);
        assert_eq!(rouge_n(&a, &a, 2), Score::ONE);
        assert_eq!(rouge_n(&toks("x y"), &toks("p q"), 1), Score::ZERO);
        let c = toks("a b c d");
        let d = toks("a c b d");
        assert_eq!(lcs_len(&c, &d), 3);
        assert!((rouge_l(&c, &d).value() - 0.75).abs() < 1e-12);
        assert_eq!(rouge_l(&c, &c), Score::ONE);
        assert_eq!(rouge_l(&c, &toks("")), Score::ZERO);
        assert_eq!(rouge_l(&toks(""), &toks("")), Score::ONE);
    }

    #[test]
    fn rouge_clips_repeated_ngrams() {
        let a = toks("the the the");
        let b = toks("the cat");
        // overlap 1, P = 1/3, R = 1/2
        assert!((rouge_n(&a, &b, 1).value() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn rouge2_on_single_tokens() {
        assert_eq!(rouge_n(&toks("edema"), &toks("edema"), 2), Score::ONE);
        assert_eq!(rouge_n(&toks("edema"), &toks("mild edema"), 2), Score::ZERO);
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(rouge_tokenize("No acute, cardio-pulmonary PROCESS."), ["no", "acute", "cardio", "pulmonary", "process"]);
        assert!(rouge_tokenize(" .. ").is_empty());
    }

    fn ov(ones: &[usize]) -> ObservationVector {
        let mut bits = [false; OBSERVATION_COUNT];
        for &i in ones {
            bits[i] = true;
        }
        ObservationVector::new(bits)
    }

    #[test]
    fn observation_f1_examples() {
        let v = [ov(&[1, 4]), ov(&[13])];
        for mode in [AveragingMode::Micro, AveragingMode::Macro, AveragingMode::Example] {
            assert_eq!(observation_f1(&v, &v, mode).unwrap(), Score::ONE);
        }
        assert_eq!(
            observation_f1(&[ov(&[])], &[ov(&[2])], AveragingMode::Micro).unwrap(),
            Score::ZERO
        );
        // pooled: TP 3, FP 1, FN 2
        let pred = [ov(&[0, 1, 5]), ov(&[2])];
        let gold = [ov(&[0, 1, 6]), ov(&[2, 7])];
        let s = observation_f1(&pred, &gold, AveragingMode::Micro).unwrap().value();
        assert!((s - 6.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn observation_f1_macro_and_example() {
        // slot 0: TP 1; slot 1: FP 1; the other 12 slots untouched -> 1.0
        let pred = [ov(&[0, 1])];
        let gold = [ov(&[0])];
        let m = observation_f1(&pred, &gold, AveragingMode::Macro).unwrap().value();
        assert!((m - 13.0 / 14.0).abs() < 1e-12);
        let e = observation_f1(&pred, &gold, AveragingMode::Example).unwrap().value();
        assert!((e - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn observation_errors() {
        assert_eq!(
            observation_f1(&[ov(&[])], &[], AveragingMode::Micro),
            Err(MetricError::Alignment { pred: 1, gold: 0 })
        );
        assert!(ObservationVector::try_from(vec![0; 13]).is_err());
        assert!(ObservationVector::try_from(vec![2; 14]).is_err());
        let v: Vec<i64> = ov(&[3]).into();
        assert_eq!(ObservationVector::try_from(v).unwrap(), ov(&[3]));
    }

    fn arb_set() -> impl Strategy<Value = TripletSet> {
        prop::collection::vec(
            (
                prop::sample::select(vec!["lung", "effusion", "edema", "base", "tube"]),
                prop::sample::select(EntityLabel::ALL.to_vec()),
                prop::bool::ANY,
            ),
            0..8,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(e, l, r)| Triplet::new(e, l, RelationFlag::from_related(r)).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn radgraph_properties(a in arb_set(), b in arb_set()) {
            let ab = radgraph_score(&a, &b).value();
            prop_assert_eq!(ab, radgraph_score(&b, &a).value());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(radgraph_score(&a, &a), Score::ONE);
            let (p, r) = radgraph_precision_recall(&a, &b);
            let hm = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            prop_assert!((hm - ab).abs() < 1e-12);
        }

        #[test]
        fn shared_triplet_never_hurts(a in arb_set(), b in arb_set()) {
            let extra = Triplet::new("novel shared", EntityLabel::ObsU, RelationFlag::Rel).unwrap();
            let mut a2 = a.clone();
            let mut b2 = b.clone();
            a2.insert(extra.clone());
            b2.insert(extra);
            prop_assert!(radgraph_score(&a2, &b2).value() >= radgraph_score(&a, &b).value() - 1e-12);
        }

        #[test]
        fn sorted_ranking_has_unit_rr(scores in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
            prop_assert_eq!(reciprocal_rank(&scores, &order), Some(1.0));
        }

        #[test]
        fn rouge_bounds(a in "[a-c ]{0,20}", b in "[a-c ]{0,20}") {
            let r = rouge_all(&a, &b);
            for v in [r.rouge1, r.rouge2, r.rouge_l] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(r.rouge1, rouge_all(&b, &a).rouge1);
        }
    }
}
