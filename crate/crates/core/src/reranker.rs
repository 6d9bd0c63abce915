//! Candidate ranking under the four strategies, top-1 selection, and
//! corpus-level evaluation of a strategy.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ExampleRecord;
use crate::factmodel::TripletSet;
use crate::genclient::{ProviderError, TargetProvider};
use crate::metrics::{
    observation_f1, radgraph_score, radmrr, rouge_all, AveragingMode, ObservationVector,
    RankedExample, Score,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankError {
    #[error("empty candidate pool")]
    EmptyPool,
    #[error("candidate {id:?}: source_rank {rank} is zero or repeated")]
    BadSourceRank { id: String, rank: usize },
    #[error("strategy {strategy} needs {needs}")]
    MissingReference { strategy: Strategy, needs: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub text: String,
    /// 1-based position in first-stage (log-probability) order.
    pub source_rank: usize,
    pub triplets: TripletSet,
    /// Score against the gold facts, when gold is known.
    pub true_score: Option<Score>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Keep first-stage order.
    FirstStage,
    /// Score against the gold facts.
    Oracle,
    /// Score against the source (findings) facts.
    Source,
    /// Score against predicted target facts.
    Fact,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::FirstStage,
        Strategy::Oracle,
        Strategy::Source,
        Strategy::Fact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FirstStage => "first-stage",
            Strategy::Oracle => "oracle",
            Strategy::Source => "source",
            Strategy::Fact => "fact",
        }
    }

    fn needs(self) -> Option<&'static str> {
        match self {
            Strategy::FirstStage => None,
            Strategy::Oracle => Some("gold triplets"),
            Strategy::Source => Some("source triplets"),
            Strategy::Fact => Some("a predicted target set"),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected first-stage|oracle|source|fact)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub id: String,
    pub source_rank: usize,
    pub score: f64,
}

/// A pool ordered best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingOutcome {
    pub strategy: Strategy,
    pub ranked: Vec<RankedCandidate>,
}

impl RankingOutcome {
    pub fn order(&self) -> impl Iterator<Item = &str> + '_ {
        self.ranked.iter().map(|c| c.id.as_str())
    }
}

/// Position-1 candidate id.
pub fn select_top(outcome: &RankingOutcome) -> &str {
    &outcome.ranked[0].id
}

/// Orders the pool by strategy score, descending, breaking ties by
/// first-stage rank. The result does not depend on the input order of the
/// pool.
pub fn rank(
    pool: &[Candidate],
    strategy: Strategy,
    reference: Option<&TripletSet>,
) -> Result<RankingOutcome, RankError> {
    if pool.is_empty() {
        return Err(RankError::EmptyPool);
    }
    let mut ranks = std::collections::HashSet::with_capacity(pool.len());
    for c in pool {
        if c.source_rank == 0 || !ranks.insert(c.source_rank) {
            return Err(RankError::BadSourceRank {
                id: c.id.clone(),
                rank: c.source_rank,
            });
        }
    }
    let reference = match (strategy.needs(), reference) {
        (None, _) => None,
        (Some(_), Some(r)) => Some(r),
        (Some(needs), None) => return Err(RankError::MissingReference { strategy, needs }),
    };

    let mut ranked: Vec<RankedCandidate> = pool
        .iter()
        .map(|c| RankedCandidate {
            id: c.id.clone(),
            source_rank: c.source_rank,
            score: match reference {
                None => 1.0 / c.source_rank as f64,
                Some(r) => radgraph_score(&c.triplets, r).value(),
            },
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.source_rank.cmp(&b.source_rank))
    });
    Ok(RankingOutcome { strategy, ranked })
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no gold triplets to compute true scores")]
    MissingGold,
    #[error("strategy fact needs a target provider")]
    MissingProvider,
}

/// Reference set a strategy scores candidates against, for one record.
pub fn reference_for(
    record: &ExampleRecord,
    strategy: Strategy,
    provider: Option<&dyn TargetProvider>,
) -> Result<Option<TripletSet>, EvalError> {
    Ok(match strategy {
        Strategy::FirstStage => None,
        Strategy::Oracle => record.gold_triplets(),
        Strategy::Source => record.source_triplets(),
        Strategy::Fact => {
            let provider = provider.ok_or(EvalError::MissingProvider)?;
            Some(provider.predict_target(record)?.triplets)
        }
    })
}

/// Ranks one record's pool under `strategy`.
pub fn rank_record(
    record: &ExampleRecord,
    strategy: Strategy,
    provider: Option<&dyn TargetProvider>,
) -> Result<(Vec<Candidate>, RankingOutcome), EvalError> {
    let pool = record.candidate_pool();
    let reference = reference_for(record, strategy, provider)?;
    let outcome = rank(&pool, strategy, reference.as_ref())?;
    Ok((pool, outcome))
}

/// Per-record evaluation, before aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordEvaluation {
    pub id: String,
    pub outcome: RankingOutcome,
    pub ranked: RankedExample,
    pub selected_true_score: f64,
    pub rouge: crate::metrics::RougeScores,
    pub observations: Option<(ObservationVector, ObservationVector)>,
}

pub fn evaluate_record(
    record: &ExampleRecord,
    strategy: Strategy,
    provider: Option<&dyn TargetProvider>,
) -> Result<RecordEvaluation, EvalError> {
    let (pool, outcome) = rank_record(record, strategy, provider)?;
    let true_scores: Vec<f64> = pool
        .iter()
        .map(|c| c.true_score.map(Score::value).ok_or(EvalError::MissingGold))
        .collect::<Result<_, _>>()?;
    // pools from records carry source_rank = index + 1
    let order: Vec<usize> = outcome.ranked.iter().map(|c| c.source_rank - 1).collect();
    let top = order[0];
    let selected_obs = record.candidates[top].observations.or(record.pred_observations);
    Ok(RecordEvaluation {
        id: record.id.clone(),
        selected_true_score: true_scores[top],
        rouge: rouge_all(&pool[top].text, &record.impression),
        observations: selected_obs.zip(record.gold_observations),
        ranked: RankedExample { true_scores, order },
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRecord {
    pub id: String,
    pub error: String,
}

/// Corpus-level metrics of one strategy. All scores are ratios in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub strategy: Strategy,
    pub evaluated: usize,
    pub radmrr: Option<f64>,
    pub radgraph: Option<f64>,
    pub rouge1: Option<f64>,
    pub rouge2: Option<f64>,
    pub rouge_l: Option<f64>,
    pub observation_f1: Option<f64>,
    pub observation_mode: AveragingMode,
    pub failed: Vec<FailedRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub observation_mode: AveragingMode,
    /// 0 uses the global rayon pool.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            observation_mode: AveragingMode::Micro,
            workers: 0,
        }
    }
}

/// Runs `f` on every record in parallel, returning results in input order.
pub fn map_records<T, F>(records: &[ExampleRecord], workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&ExampleRecord) -> T + Sync + Send,
{
    if workers == 0 {
        return records.par_iter().map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| records.par_iter().map(&f).collect())
}

/// Evaluates a strategy across the corpus. Per-record failures are
/// collected in the report; aggregation runs in input order.
pub fn evaluate_strategy(
    records: &[ExampleRecord],
    strategy: Strategy,
    provider: Option<&dyn TargetProvider>,
    options: EvalOptions,
) -> Result<(EvaluationReport, Vec<RecordEvaluation>), EvalError> {
    if strategy == Strategy::Fact && provider.is_none() {
        return Err(EvalError::MissingProvider);
    }
    let results = map_records(records, options.workers, |r| evaluate_record(r, strategy, provider));

    let mut evals = Vec::with_capacity(records.len());
    let mut failed = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(e) => evals.push(e),
            Err(e) => failed.push(FailedRecord {
                id: record.id.clone(),
                error: e.to_string(),
            }),
        }
    }

    let n = evals.len();
    let mean = |f: &dyn Fn(&RecordEvaluation) -> f64| {
        (n > 0).then(|| evals.iter().map(f).sum::<f64>() / n as f64)
    };
    let obs: Option<(Vec<_>, Vec<_>)> = if n > 0 && evals.iter().all(|e| e.observations.is_some()) {
        Some(evals.iter().filter_map(|e| e.observations).unzip())
    } else {
        None
    };
    let report = EvaluationReport {
        strategy,
        evaluated: n,
        radmrr: radmrr(evals.iter().map(|e| &e.ranked)).ok().map(Score::value),
        radgraph: mean(&|e| e.selected_true_score),
        rouge1: mean(&|e| e.rouge.rouge1),
        rouge2: mean(&|e| e.rouge.rouge2),
        rouge_l: mean(&|e| e.rouge.rouge_l),
        observation_f1: obs
            .and_then(|(p, g)| observation_f1(&p, &g, options.observation_mode).ok())
            .map(Score::value),
        observation_mode: options.observation_mode,
        failed,
    };
    Ok((report, evals))
}
