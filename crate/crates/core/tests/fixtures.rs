mod common;

use common::*;
use fact_rerank::corpus::{parse_record, record_to_json, Facts};
use fact_rerank::factmodel::reduce_graph;
use fact_rerank::genclient::{CopySource, FileBacked, TargetProvider};
use fact_rerank::linearizer::{linearize, parse, ParseMode};
use fact_rerank::metrics::{radgraph_score, reciprocal_rank};
use fact_rerank::reranker::{evaluate_record, rank_record, Strategy};

fn row_ids_by(key: impl Fn(&Row) -> usize) -> Vec<String> {
    let mut rows: Vec<(usize, &Row)> = ROWS.iter().enumerate().collect();
    rows.sort_by_key(|(_, r)| key(r));
    rows.into_iter().map(|(i, _)| format!("row{}", i + 1)).collect()
}

#[test]
fn printed_candidate_scores() {
    let gold = gold_one();
    for (i, row) in ROWS.iter().enumerate() {
        if i == 5 {
            // extraction for this row is not stated
            continue;
        }
        let s = radgraph_score(&(row.triplets)(), &gold).percent();
        assert!((s - row.printed_score).abs() < 0.01, "row {}: {s}", i + 1);
    }
}

#[test]
fn oracle_reproduces_oracle_column() {
    let (_, outcome) = rank_record(&ranking_record(), Strategy::Oracle, None).unwrap();
    let got: Vec<&str> = outcome.order().collect();
    assert_eq!(got, row_ids_by(|r| r.oracle_rank));
}

#[test]
fn first_stage_reproduces_beam_column() {
    let (_, outcome) = rank_record(&ranking_record(), Strategy::FirstStage, None).unwrap();
    let got: Vec<&str> = outcome.order().collect();
    assert_eq!(got, row_ids_by(|r| r.beam_rank));
}

#[test]
fn beam_order_places_an_optimum_second() {
    let e = evaluate_record(&ranking_record(), Strategy::FirstStage, None).unwrap();
    assert_eq!(reciprocal_rank(&e.ranked.true_scores, &e.ranked.order), Some(0.5));
    assert_eq!(e.selected_true_score, 0.0);
}

#[test]
fn correct_generated_sequence_ranks_like_oracle() {
    let record = ranking_record();
    let provider = FileBacked { mode: ParseMode::Strict };
    let (_, fact) = rank_record(&record, Strategy::Fact, Some(&provider)).unwrap();
    let (_, oracle) = rank_record(&record, Strategy::Oracle, None).unwrap();
    assert_eq!(fact.order().collect::<Vec<_>>(), oracle.order().collect::<Vec<_>>());
}

#[test]
fn broken_generated_sequence_falls_back_to_first_stage_order() {
    let mut record = ranking_record();
    record.predicted_sequence = Some("<s>[ [ [REL]</s>".into());
    let provider = FileBacked { mode: ParseMode::Strict };
    let (_, fact) = rank_record(&record, Strategy::Fact, Some(&provider)).unwrap();
    // empty target: every nonempty candidate scores 0 and ties keep beam order
    assert_eq!(fact.order().collect::<Vec<_>>(), row_ids_by(|r| r.beam_rank));
}

#[test]
fn second_prediction_parses_to_its_normalized_set() {
    let report = parse(PRED_TWO_PRINTED, ParseMode::Strict);
    assert!(report.rejected.is_empty());
    assert_eq!(report.accepted, pred_two());
    let expected = PRED_TWO_PRINTED.replace("Hazy", "hazy").replace("Mild", "mild");
    assert_eq!(linearize(&pred_two()), expected);
}

#[test]
fn second_prediction_against_full_gold() {
    // 11 shared of 11 and 14
    assert_eq!(radgraph_score(&pred_two(), &gold_two()).value(), 22.0 / 25.0);
}

#[test]
fn copy_source_on_second_findings_graph() {
    let graph = source_two_graph();
    let reduced = reduce_graph(&graph);
    assert_eq!(reduced.len(), 30);
    assert_eq!(reduced, source_two_reduced());

    let mut record = ranking_record();
    record.findings_facts = Some(Facts::Graph(graph));
    let prediction = CopySource.predict_target(&record).unwrap();
    assert_eq!(prediction.triplets, source_two_reduced());
}

#[test]
fn ranking_record_survives_serialization() {
    let record = ranking_record();
    assert_eq!(parse_record(&record_to_json(&record)).unwrap(), record);
}
