//! Example records: JSON Lines persistence, validation, and dataset
//! statistics. Seeded synthetic corpora live in [`synth`].

pub mod synth;

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factmodel::{reduce_graph, FactGraph, TripletSet};
use crate::metrics::{radgraph_score, rouge_tokenize, ObservationVector, Score};
use crate::reranker::Candidate;

/// Stored true scores must match recomputation within this tolerance.
const STORED_SCORE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

/// Facts supplied either as a full graph or as an already reduced set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Facts {
    Graph(FactGraph),
    Triplets(TripletSet),
}

impl Facts {
    pub fn triplets(&self) -> TripletSet {
        match self {
            Facts::Graph(g) => reduce_graph(g),
            Facts::Triplets(t) => t.clone(),
        }
    }

    fn graph(&self) -> Option<&FactGraph> {
        match self {
            Facts::Graph(g) => Some(g),
            Facts::Triplets(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    pub id: Option<String>,
    pub text: String,
    pub facts: Facts,
    /// True RadGraph score against the gold facts, when precomputed.
    pub true_score: Option<f64>,
    /// Observation labels of this candidate, when available.
    pub observations: Option<ObservationVector>,
}

/// One report: findings, gold impression, their facts and a candidate pool
/// in first-stage order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRecord {
    pub id: String,
    pub findings: String,
    pub impression: String,
    pub findings_facts: Option<Facts>,
    pub impression_facts: Option<Facts>,
    pub candidates: Vec<CandidateEntry>,
    pub predicted_sequence: Option<String>,
    pub gold_observations: Option<ObservationVector>,
    pub pred_observations: Option<ObservationVector>,
}

impl ExampleRecord {
    pub fn source_triplets(&self) -> Option<TripletSet> {
        self.findings_facts.as_ref().map(Facts::triplets)
    }

    pub fn gold_triplets(&self) -> Option<TripletSet> {
        self.impression_facts.as_ref().map(Facts::triplets)
    }

    /// Candidates with source ranks 1..=n and, when gold facts are known,
    /// their true scores.
    pub fn candidate_pool(&self) -> Vec<Candidate> {
        let gold = self.gold_triplets();
        self.candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let triplets = c.facts.triplets();
                let true_score = gold.as_ref().map(|g| radgraph_score(&triplets, g));
                Candidate {
                    id: c.id.clone().unwrap_or_else(|| format!("c{}", i + 1)),
                    text: c.text.clone(),
                    source_rank: i + 1,
                    triplets,
                    true_score,
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        let gold = self.gold_triplets();
        let mut ids = HashSet::new();
        for (i, c) in self.candidates.iter().enumerate() {
            if let Some(id) = &c.id {
                if !ids.insert(id.as_str()) {
                    return Err(format!("duplicate candidate id {id:?}"));
                }
            }
            if let Some(stored) = c.true_score {
                if !(0.0..=1.0).contains(&stored) {
                    return Err(format!("candidate {}: true_score {stored} outside [0, 1]", i + 1));
                }
                if let Some(g) = &gold {
                    let actual = radgraph_score(&c.facts.triplets(), g).value();
                    if (actual - stored).abs() > STORED_SCORE_TOLERANCE {
                        return Err(format!(
                            "candidate {}: stored true_score {stored} but gold facts give {actual}",
                            i + 1
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn graphs(&self) -> impl Iterator<Item = (&'static str, &FactGraph)> + '_ {
        let top = [
            ("findings_graph", self.findings_facts.as_ref()),
            ("impression_graph", self.impression_facts.as_ref()),
        ];
        top.into_iter()
            .filter_map(|(n, f)| f.and_then(Facts::graph).map(|g| (n, g)))
            .chain(self.candidates.iter().filter_map(|c| c.facts.graph().map(|g| ("candidate graph", g))))
    }
}

// Wire shapes. Field names are the external corpus schema.

#[derive(Serialize, Deserialize)]
struct RecordWire {
    id: String,
    #[serde(default)]
    findings: String,
    #[serde(default)]
    impression: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    findings_graph: Option<FactGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    findings_triplets: Option<TripletSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    impression_graph: Option<FactGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    impression_triplets: Option<TripletSet>,
    #[serde(default)]
    candidates: Vec<CandidateWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicted_sequence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_observations: Option<ObservationVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pred_observations: Option<ObservationVector>,
}

#[derive(Serialize, Deserialize)]
struct CandidateWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triplets: Option<TripletSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<FactGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observations: Option<ObservationVector>,
}

fn facts_from(
    graph: Option<FactGraph>,
    triplets: Option<TripletSet>,
    what: &str,
) -> Result<Option<Facts>, String> {
    match (graph, triplets) {
        (Some(_), Some(_)) => Err(format!("{what}: give either a graph or triplets, not both")),
        (Some(g), None) => Ok(Some(Facts::Graph(g))),
        (None, Some(t)) => Ok(Some(Facts::Triplets(t))),
        (None, None) => Ok(None),
    }
}

fn split_facts(f: Option<Facts>) -> (Option<FactGraph>, Option<TripletSet>) {
    match f {
        Some(Facts::Graph(g)) => (Some(g), None),
        Some(Facts::Triplets(t)) => (None, Some(t)),
        None => (None, None),
    }
}

impl TryFrom<RecordWire> for ExampleRecord {
    type Error = String;

    fn try_from(w: RecordWire) -> Result<Self, String> {
        let candidates = w
            .candidates
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let facts = facts_from(c.graph, c.triplets, &format!("candidate {}", i + 1))?
                    .ok_or_else(|| format!("candidate {}: missing \"triplets\" or \"graph\"", i + 1))?;
                Ok(CandidateEntry {
                    id: c.id,
                    text: c.text,
                    facts,
                    true_score: c.true_score,
                    observations: c.observations,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(ExampleRecord {
            findings_facts: facts_from(w.findings_graph, w.findings_triplets, "findings")?,
            impression_facts: facts_from(w.impression_graph, w.impression_triplets, "impression")?,
            id: w.id,
            findings: w.findings,
            impression: w.impression,
            candidates,
            predicted_sequence: w.predicted_sequence,
            gold_observations: w.gold_observations,
            pred_observations: w.pred_observations,
        })
    }
}

impl From<&ExampleRecord> for RecordWire {
    fn from(r: &ExampleRecord) -> Self {
        let (findings_graph, findings_triplets) = split_facts(r.findings_facts.clone());
        let (impression_graph, impression_triplets) = split_facts(r.impression_facts.clone());
        RecordWire {
            id: r.id.clone(),
            findings: r.findings.clone(),
            impression: r.impression.clone(),
            findings_graph,
            findings_triplets,
            impression_graph,
            impression_triplets,
            candidates: r
                .candidates
                .iter()
                .map(|c| {
                    let (graph, triplets) = split_facts(Some(c.facts.clone()));
                    CandidateWire {
                        id: c.id.clone(),
                        text: c.text.clone(),
                        triplets,
                        graph,
                        true_score: c.true_score,
                        observations: c.observations,
                    }
                })
                .collect(),
            predicted_sequence: r.predicted_sequence.clone(),
            gold_observations: r.gold_observations,
            pred_observations: r.pred_observations,
        }
    }
}

/// Parses one JSON line into a validated record.
pub fn parse_record(line: &str) -> Result<ExampleRecord, String> {
    let wire: RecordWire = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let record = ExampleRecord::try_from(wire)?;
    record.validate()?;
    Ok(record)
}

pub fn record_to_json(record: &ExampleRecord) -> String {
    serde_json::to_string(&RecordWire::from(record)).expect("record serializes")
}

/// Optional dataset-preparation filters; none are applied by default.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadFilters {
    pub min_findings_words: Option<usize>,
    pub min_impression_words: Option<usize>,
}

impl LoadFilters {
    fn keeps(&self, r: &ExampleRecord) -> bool {
        let long_enough =
            |text: &str, min: Option<usize>| min.is_none_or(|m| rouge_tokenize(text).len() >= m);
        long_enough(&r.findings, self.min_findings_words)
            && long_enough(&r.impression, self.min_impression_words)
    }
}

pub fn read_corpus<R: BufRead>(reader: R, filters: LoadFilters) -> Result<Vec<ExampleRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Invalid {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line).map_err(|message| CorpusError::Invalid { line: line_no, message })?;
        if !ids.insert(record.id.clone()) {
            return Err(CorpusError::Invalid {
                line: line_no,
                message: format!("duplicate id {:?}", record.id),
            });
        }
        for (what, g) in record.graphs() {
            for w in g.compatibility_warnings() {
                log::warn!("line {line_no}: record {}: {what}: {w}", record.id);
            }
        }
        if filters.keeps(&record) {
            records.push(record);
        }
    }
    Ok(records)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<ExampleRecord>, CorpusError> {
    load_corpus_with(path, LoadFilters::default())
}

pub fn load_corpus_with(path: impl AsRef<Path>, filters: LoadFilters) -> Result<Vec<ExampleRecord>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(BufReader::new(file), filters)
}

pub fn write_corpus<W: Write>(mut writer: W, records: &[ExampleRecord]) -> io::Result<()> {
    for r in records {
        writeln!(writer, "{}", record_to_json(r))?;
    }
    writer.flush()
}

pub fn save_corpus(path: impl AsRef<Path>, records: &[ExampleRecord]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_corpus(BufWriter::new(file), records).map_err(io_err)
}

/// Dataset statistics. Averages are `None` for an empty corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub avg_findings_words: Option<f64>,
    pub avg_findings_sentences: Option<f64>,
    pub avg_impression_words: Option<f64>,
    pub avg_impression_sentences: Option<f64>,
}

/// Sentences are runs of text between `.`, `?` or `!` that contain at least
/// one word.
pub fn sentence_count(text: &str) -> usize {
    text.split(['.', '?', '!'])
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .count()
}

pub fn corpus_stats(records: &[ExampleRecord]) -> CorpusStats {
    let n = records.len();
    let avg = |f: &dyn Fn(&ExampleRecord) -> usize| {
        (n > 0).then(|| records.iter().map(f).sum::<usize>() as f64 / n as f64)
    };
    CorpusStats {
        count: n,
        avg_findings_words: avg(&|r| rouge_tokenize(&r.findings).len()),
        avg_findings_sentences: avg(&|r| sentence_count(&r.findings)),
        avg_impression_words: avg(&|r| rouge_tokenize(&r.impression).len()),
        avg_impression_sentences: avg(&|r| sentence_count(&r.impression)),
    }
}

/// True score of the candidate at `index`, recomputed from stored facts.
pub fn recompute_true_score(record: &ExampleRecord, index: usize) -> Option<Score> {
    let gold = record.gold_triplets()?;
    record
        .candidates
        .get(index)
        .map(|c| radgraph_score(&c.facts.triplets(), &gold))
}
