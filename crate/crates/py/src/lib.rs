//! Python bindings. Triplets cross the boundary as `(entity, label, flag)`
//! tuples; reports come back as plain dicts.

use std::time::Duration;

use fact_rerank::corpus::synth::{synthesize, SynthConfig};
use fact_rerank::corpus::{load_corpus, save_corpus, ExampleRecord};
use fact_rerank::factmodel::{self, EntityLabel, RelationFlag, Triplet, TripletSet};
use fact_rerank::genclient::{build_provider, ProviderKind, ProviderOptions, TargetProvider};
use fact_rerank::linearizer::{self, ParseMode};
use fact_rerank::metrics::{self, AveragingMode, ObservationVector, RankedExample, OBSERVATION_COUNT};
use fact_rerank::reranker::{evaluate_strategy, rank_record, EvalOptions, Strategy};
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;

type TripletTuple = (String, String, String);
type Rejection = (String, String);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_arg<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(value_err)
}

fn to_triplet((entity, label, flag): &TripletTuple) -> PyResult<Triplet> {
    let label: EntityLabel = parse_arg(label)?;
    let flag: RelationFlag = parse_arg(flag)?;
    Triplet::new(entity, label, flag).map_err(value_err)
}

fn to_set(items: &[TripletTuple]) -> PyResult<TripletSet> {
    items.iter().map(to_triplet).collect()
}

fn to_tuples(set: &TripletSet) -> Vec<TripletTuple> {
    set.iter()
        .map(|t| (t.entity().to_string(), t.label().as_str().to_string(), t.flag().as_str().to_string()))
        .collect()
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

/// Set of fact triplets with order-insensitive equality.
#[pyclass(name = "TripletSet", module = "fact_rerank", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyTripletSet {
    inner: TripletSet,
}

#[pymethods]
impl PyTripletSet {
    #[new]
    #[pyo3(signature = (triplets = Vec::new()))]
    fn new(triplets: Vec<TripletTuple>) -> PyResult<Self> {
        Ok(Self { inner: to_set(&triplets)? })
    }

    /// Parses a generated sequence, keeping only well-formed segments.
    #[staticmethod]
    #[pyo3(signature = (sequence, mode = "strict"))]
    fn from_sequence(sequence: &str, mode: &str) -> PyResult<Self> {
        let mode: ParseMode = parse_arg(mode)?;
        Ok(Self { inner: linearizer::parse(sequence, mode).accepted })
    }

    fn triplets(&self) -> Vec<TripletTuple> {
        to_tuples(&self.inner)
    }

    fn linearize(&self) -> String {
        linearizer::linearize(&self.inner)
    }

    /// RadGraph F1 against `other`.
    fn score(&self, other: PyRef<'_, Self>) -> f64 {
        metrics::radgraph_score(&self.inner, &other.inner).value()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, item: TripletTuple) -> PyResult<bool> {
        Ok(self.inner.contains(&to_triplet(&item)?))
    }

    fn __repr__(&self) -> String {
        format!("TripletSet({})", self.linearize())
    }
}

/// Lowercases and collapses whitespace; rejects empty entities.
#[pyfunction]
fn normalize_entity(raw: &str) -> PyResult<String> {
    factmodel::normalize_entity(raw).map_err(value_err)
}

#[pyfunction]
fn linearize(triplets: Vec<TripletTuple>) -> PyResult<String> {
    Ok(linearizer::linearize(&to_set(&triplets)?))
}

/// Returns `(accepted triplets, [(segment, reason), ...])`.
#[pyfunction]
#[pyo3(signature = (sequence, mode = "strict"))]
fn parse(sequence: &str, mode: &str) -> PyResult<(Vec<TripletTuple>, Vec<Rejection>)> {
    let report = linearizer::parse(sequence, parse_arg(mode)?);
    let rejected = report
        .rejected
        .iter()
        .map(|r| (r.segment.clone(), r.reason.as_str().to_string()))
        .collect();
    Ok((to_tuples(&report.accepted), rejected))
}

#[pyfunction]
fn radgraph_score(candidate: Vec<TripletTuple>, reference: Vec<TripletTuple>) -> PyResult<f64> {
    Ok(metrics::radgraph_score(&to_set(&candidate)?, &to_set(&reference)?).value())
}

/// Returns `(rouge1, rouge2, rouge_l)` F1 ratios.
#[pyfunction]
fn rouge(candidate: &str, reference: &str) -> (f64, f64, f64) {
    let r = metrics::rouge_all(candidate, reference);
    (r.rouge1, r.rouge2, r.rouge_l)
}

/// Mean reciprocal rank of the best candidate over `(true_scores, order)`
/// pairs, where `order` lists candidate indices best first.
#[pyfunction]
fn radmrr(examples: Vec<(Vec<f64>, Vec<usize>)>) -> PyResult<f64> {
    let examples: Vec<RankedExample> = examples
        .into_iter()
        .map(|(true_scores, order)| RankedExample { true_scores, order })
        .collect();
    metrics::radmrr(&examples).map(|s| s.value()).map_err(value_err)
}

fn observation_vector(bits: &[bool]) -> PyResult<ObservationVector> {
    let bits: [bool; OBSERVATION_COUNT] = bits
        .try_into()
        .map_err(|_| value_err(format!("observation vectors need {OBSERVATION_COUNT} entries, got {}", bits.len())))?;
    Ok(ObservationVector::new(bits))
}

#[pyfunction]
#[pyo3(signature = (pred, gold, mode = "micro"))]
fn observation_f1(pred: Vec<Vec<bool>>, gold: Vec<Vec<bool>>, mode: &str) -> PyResult<f64> {
    let pred: Vec<_> = pred.iter().map(|v| observation_vector(v)).collect::<PyResult<_>>()?;
    let gold: Vec<_> = gold.iter().map(|v| observation_vector(v)).collect::<PyResult<_>>()?;
    let mode: AveragingMode = parse_arg(mode)?;
    metrics::observation_f1(&pred, &gold, mode).map(|s| s.value()).map_err(value_err)
}

/// Loaded or synthesized records.
#[pyclass(name = "Corpus", module = "fact_rerank")]
struct PyCorpus {
    records: Vec<ExampleRecord>,
}

fn provider(
    name: Option<&str>,
    parse_mode: &str,
    endpoint: Option<String>,
    allow_oracle_leak: bool,
    max_in_flight: usize,
    timeout_secs: u64,
) -> PyResult<Option<Box<dyn TargetProvider>>> {
    let Some(name) = name else { return Ok(None) };
    let kind: ProviderKind = parse_arg(name)?;
    let options = ProviderOptions {
        mode: parse_arg(parse_mode)?,
        endpoint,
        allow_oracle_leak,
        max_in_flight,
        timeout: Duration::from_secs(timeout_secs),
        ..ProviderOptions::default()
    };
    build_provider(kind, &options).map(Some).map_err(value_err)
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { records: load_corpus(path).map_err(value_err)? })
    }

    /// Seeded synthetic corpus; `config` is a JSON object of overrides.
    #[staticmethod]
    #[pyo3(signature = (seed = 0, examples = 100, config = None))]
    fn synthesize(seed: u64, examples: usize, config: Option<&str>) -> PyResult<Self> {
        let mut cfg: SynthConfig = match config {
            Some(text) => serde_json::from_str(text).map_err(value_err)?,
            None => SynthConfig::default(),
        };
        cfg.seed = seed;
        cfg.examples = examples;
        Ok(Self { records: synthesize(&cfg).map_err(value_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_corpus(path, &self.records).map_err(value_err)
    }

    fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }

    fn source(&self, index: usize) -> PyResult<Option<PyTripletSet>> {
        Ok(self.record(index)?.source_triplets().map(|inner| PyTripletSet { inner }))
    }

    fn gold(&self, index: usize) -> PyResult<Option<PyTripletSet>> {
        Ok(self.record(index)?.gold_triplets().map(|inner| PyTripletSet { inner }))
    }

    /// Candidate ids of one record, best first.
    #[pyo3(signature = (index, strategy, provider = None, parse_mode = "strict", endpoint = None,
                        allow_oracle_leak = false, max_in_flight = 4, timeout_secs = 30))]
    #[allow(clippy::too_many_arguments)]
    fn rank(
        &self,
        index: usize,
        strategy: &str,
        provider: Option<&str>,
        parse_mode: &str,
        endpoint: Option<String>,
        allow_oracle_leak: bool,
        max_in_flight: usize,
        timeout_secs: u64,
    ) -> PyResult<Vec<String>> {
        let strategy: Strategy = parse_arg(strategy)?;
        let p = self::provider(provider, parse_mode, endpoint, allow_oracle_leak, max_in_flight, timeout_secs)?;
        let (_, outcome) = rank_record(self.record(index)?, strategy, p.as_deref()).map_err(value_err)?;
        Ok(outcome.order().map(str::to_string).collect())
    }

    /// Corpus-level report as a dict of ratios.
    #[pyo3(signature = (strategy, provider = None, parse_mode = "strict", endpoint = None,
                        allow_oracle_leak = false, observation_mode = "micro", workers = 0,
                        max_in_flight = 4, timeout_secs = 30))]
    #[allow(clippy::too_many_arguments)]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        strategy: &str,
        provider: Option<&str>,
        parse_mode: &str,
        endpoint: Option<String>,
        allow_oracle_leak: bool,
        observation_mode: &str,
        workers: usize,
        max_in_flight: usize,
        timeout_secs: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let strategy: Strategy = parse_arg(strategy)?;
        let p = self::provider(provider, parse_mode, endpoint, allow_oracle_leak, max_in_flight, timeout_secs)?;
        let options = EvalOptions {
            observation_mode: parse_arg(observation_mode)?,
            workers,
        };
        let records = &self.records;
        let (report, _) = py
            .detach(|| evaluate_strategy(records, strategy, p.as_deref(), options))
            .map_err(value_err)?;
        let mut v = serde_json::to_value(&report).map_err(value_err)?;
        v["unit"] = serde_json::json!("ratio");
        json_to_py(py, &v)
    }
}

impl PyCorpus {
    fn record(&self, index: usize) -> PyResult<&ExampleRecord> {
        self.records
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("record {index} out of range ({})", self.records.len())))
    }
}

#[pymodule]
fn fact_rerank_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTripletSet>()?;
    m.add_class::<PyCorpus>()?;
    m.add_function(wrap_pyfunction!(normalize_entity, m)?)?;
    m.add_function(wrap_pyfunction!(linearize, m)?)?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(radgraph_score, m)?)?;
    m.add_function(wrap_pyfunction!(rouge, m)?)?;
    m.add_function(wrap_pyfunction!(radmrr, m)?)?;
    m.add_function(wrap_pyfunction!(observation_f1, m)?)?;
    Ok(())
}
