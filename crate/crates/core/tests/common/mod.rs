#![allow(dead_code)]

use fact_rerank::corpus::{CandidateEntry, ExampleRecord, Facts};
use fact_rerank::factmodel::{Edge, EntityLabel, EntityNode, FactGraph, RelationFlag, RelationType, Triplet, TripletSet};

use EntityLabel::{AnatDp, ObsDa, ObsDp, ObsU};
use RelationFlag::{Na, Rel};

pub fn t(entity: &str, label: EntityLabel, flag: RelationFlag) -> Triplet {
    Triplet::new(entity, label, flag).unwrap()
}

pub fn set(items: &[(&str, EntityLabel, RelationFlag)]) -> TripletSet {
    items.iter().map(|&(e, l, f)| t(e, l, f)).collect()
}

/// Gold impression of the first report: "No evidence of acute
/// cardiopulmonary process."
pub fn gold_one() -> TripletSet {
    set(&[
        ("acute", ObsDa, Rel),
        ("cardiopulmonary", AnatDp, Na),
        ("process", ObsDa, Rel),
    ])
}

pub const GOLD_ONE_SEQ: &str =
    "<s>acute [OBS-DA] [REL] [ENT] cardiopulmonary [ANAT-DP] [NA] [ENT] process [OBS-DA] [REL]</s>";

/// Printed generated sequence of the second report, as it appears.
pub const PRED_TWO_PRINTED: &str = "<s>Hazy [OBS-DP] [REL] [ENT] opacity [OBS-DP] [REL] [ENT] right [ANAT-DP] [REL] [ENT] \
lung [ANAT-DP] [NA] [ENT] aspiration [OBS-U] [NA] [ENT] pleural [ANAT-DP] [NA] [ENT] effusion [OBS-U] [REL] [ENT] \
hemorrhage [OBS-U] [NA] [ENT] Mild [OBS-DP] [REL] [ENT] pulmonary [ANAT-DP] [NA] [ENT] edema [OBS-DP] [REL]</s>";

/// Gold impression items 1 and 2 of the second report; the printed
/// sequence covers exactly these.
pub fn pred_two() -> TripletSet {
    set(&[
        ("hazy", ObsDp, Rel),
        ("opacity", ObsDp, Rel),
        ("right", AnatDp, Rel),
        ("lung", AnatDp, Na),
        ("aspiration", ObsU, Na),
        ("pleural", AnatDp, Na),
        ("effusion", ObsU, Rel),
        ("hemorrhage", ObsU, Na),
        ("mild", ObsDp, Rel),
        ("pulmonary", AnatDp, Na),
        ("edema", ObsDp, Rel),
    ])
}

/// Full gold impression of the second report (items 1 to 3).
pub fn gold_two() -> TripletSet {
    let mut s = pred_two();
    s.extend([
        t("displaced", ObsDa, Rel),
        t("rib", AnatDp, Na),
        t("fractures", ObsDa, Rel),
    ]);
    s
}

/// Annotated findings of the second report, in text order.
pub const SOURCE_TWO: [(&str, EntityLabel, RelationFlag); 33] = [
    ("hazy", ObsDp, Rel),
    ("opacity", ObsDp, Rel),
    ("right", AnatDp, Rel),
    ("lung", AnatDp, Na),
    ("aspiration", ObsU, Na),
    ("pleural", AnatDp, Na),
    ("effusion", ObsU, Rel),
    ("hemorrhage", ObsU, Na),
    ("Retrocardiac", AnatDp, Na),
    ("opacity", ObsDp, Rel),
    ("left", AnatDp, Rel),
    ("base", AnatDp, Na),
    ("unchanged", ObsDp, Rel),
    ("Moderate", ObsDp, Rel),
    ("cardiomegaly", ObsDp, Na),
    ("stable", ObsDp, Rel),
    ("Slight", ObsDp, Rel),
    ("prominence", ObsDp, Rel),
    ("pulmonary", AnatDp, Rel),
    ("vasculature", AnatDp, Na),
    ("cephalization", ObsDp, Na),
    ("enlarged", ObsDp, Rel),
    ("pulmonary", AnatDp, Rel),
    ("arteries", AnatDp, Na),
    ("mild", ObsDp, Rel),
    ("pulmonary", AnatDp, Na),
    ("edema", ObsDp, Rel),
    ("Tracheostomy", ObsDp, Rel),
    ("tube", ObsDp, Na),
    ("in place", ObsDp, Rel),
    ("displaced", ObsDa, Rel),
    ("rib", AnatDp, Na),
    ("fractures", ObsDa, Rel),
];

/// Findings graph of the second report. Related nodes are chained to each
/// other so that no unrelated node gains an edge.
pub fn source_two_graph() -> FactGraph {
    let nodes: Vec<EntityNode> = SOURCE_TWO
        .iter()
        .enumerate()
        .map(|(i, &(s, l, _))| EntityNode::new(s, l, Some(i as u32)).unwrap())
        .collect();
    let related: Vec<usize> = (0..SOURCE_TWO.len()).filter(|&i| SOURCE_TWO[i].2 == Rel).collect();
    let edges = related
        .windows(2)
        .map(|w| Edge {
            src: w[0],
            dst: w[1],
            kind: RelationType::Modify,
        })
        .collect();
    FactGraph::new(nodes, edges).unwrap()
}

/// Hand-reduced findings of the second report: 33 annotations, "opacity"
/// twice and "pulmonary" three times (related in two of them).
pub fn source_two_reduced() -> TripletSet {
    set(&[
        ("hazy", ObsDp, Rel),
        ("opacity", ObsDp, Rel),
        ("right", AnatDp, Rel),
        ("lung", AnatDp, Na),
        ("aspiration", ObsU, Na),
        ("pleural", AnatDp, Na),
        ("effusion", ObsU, Rel),
        ("hemorrhage", ObsU, Na),
        ("retrocardiac", AnatDp, Na),
        ("left", AnatDp, Rel),
        ("base", AnatDp, Na),
        ("unchanged", ObsDp, Rel),
        ("moderate", ObsDp, Rel),
        ("cardiomegaly", ObsDp, Na),
        ("stable", ObsDp, Rel),
        ("slight", ObsDp, Rel),
        ("prominence", ObsDp, Rel),
        ("pulmonary", AnatDp, Rel),
        ("vasculature", AnatDp, Na),
        ("cephalization", ObsDp, Na),
        ("enlarged", ObsDp, Rel),
        ("arteries", AnatDp, Na),
        ("mild", ObsDp, Rel),
        ("edema", ObsDp, Rel),
        ("tracheostomy", ObsDp, Rel),
        ("tube", ObsDp, Na),
        ("in place", ObsDp, Rel),
        ("displaced", ObsDa, Rel),
        ("rib", AnatDp, Na),
        ("fractures", ObsDa, Rel),
    ])
}

/// One row of the ten-candidate ranking example.
pub struct Row {
    pub text: &'static str,
    pub printed_score: f64,
    pub oracle_rank: usize,
    pub beam_rank: usize,
    pub triplets: fn() -> TripletSet,
}

fn intrathoracic() -> TripletSet {
    set(&[
        ("acute", ObsDa, Rel),
        ("intrathoracic", AnatDp, Na),
        ("process", ObsDa, Rel),
    ])
}

fn abnormality() -> TripletSet {
    set(&[
        ("acute", ObsDa, Rel),
        ("cardiopulmonary", AnatDp, Na),
        ("abnormality", ObsDa, Rel),
    ])
}

fn acute_process() -> TripletSet {
    set(&[("acute", ObsDa, Na), ("process", ObsDa, Rel)])
}

fn unremarkable_radiographic() -> TripletSet {
    set(&[
        ("unremarkable", ObsDp, Rel),
        ("chest", AnatDp, Rel),
        ("radiographic examination", ObsDp, Na),
    ])
}

fn normal_radiographic() -> TripletSet {
    set(&[
        ("normal", ObsDp, Rel),
        ("chest", AnatDp, Rel),
        ("radiographic examination", ObsDp, Na),
    ])
}

fn unremarkable_xray() -> TripletSet {
    set(&[("unremarkable", ObsDp, Rel), ("chest x-ray", AnatDp, Rel)])
}

fn unremarkable_exam() -> TripletSet {
    set(&[("unremarkable", ObsDp, Rel), ("chest", AnatDp, Rel), ("examination", ObsDp, Na)])
}

/// Rows in the printed order. The 40.0 row uses a plausible extraction
/// rather than a stated one.
pub const ROWS: [Row; 10] = [
    Row { text: "No evidence of acute cardiopulmonary process.", printed_score: 100.0, oracle_rank: 1, beam_rank: 2, triplets: gold_one },
    Row { text: "No acute cardiopulmonary process.", printed_score: 100.0, oracle_rank: 2, beam_rank: 4, triplets: gold_one },
    Row { text: "No evidence of acute intrathoracic process.", printed_score: 66.67, oracle_rank: 3, beam_rank: 3, triplets: intrathoracic },
    Row { text: "No acute intrathoracic process.", printed_score: 66.67, oracle_rank: 4, beam_rank: 5, triplets: intrathoracic },
    Row { text: "No evidence of acute cardiopulmonary abnormality.", printed_score: 66.67, oracle_rank: 5, beam_rank: 7, triplets: abnormality },
    Row { text: "No evidence of acute process.", printed_score: 40.0, oracle_rank: 6, beam_rank: 9, triplets: acute_process },
    Row { text: "Unremarkable chest radiographic examination.", printed_score: 0.0, oracle_rank: 7, beam_rank: 1, triplets: unremarkable_radiographic },
    Row { text: "Normal chest radiographic examination.", printed_score: 0.0, oracle_rank: 8, beam_rank: 6, triplets: normal_radiographic },
    Row { text: "Unremarkable chest x-ray.", printed_score: 0.0, oracle_rank: 9, beam_rank: 8, triplets: unremarkable_xray },
    Row { text: "Unremarkable chest examination.", printed_score: 0.0, oracle_rank: 10, beam_rank: 10, triplets: unremarkable_exam },
];

/// First report as a corpus record: candidates in beam order with ids
/// "row1".."row10" naming the printed rows.
pub fn ranking_record() -> ExampleRecord {
    let mut rows: Vec<(usize, &Row)> = ROWS.iter().enumerate().collect();
    rows.sort_by_key(|(_, r)| r.beam_rank);
    ExampleRecord {
        id: "ranking-example".into(),
        findings: "The lungs are well expanded and clear. Cardiomediastinal and hilar contours are unremarkable. \
There is no pleural effusion or pneumothorax."
            .into(),
        impression: "No evidence of acute cardiopulmonary process.".into(),
        findings_facts: Some(Facts::Triplets(set(&[
            ("lungs", AnatDp, Na),
            ("well", ObsDp, Rel),
            ("expanded", ObsDp, Rel),
            ("clear", ObsDp, Rel),
            ("cardiomediastinal", AnatDp, Na),
            ("hilar", AnatDp, Na),
            ("contours", AnatDp, Rel),
            ("unremarkable", ObsDp, Rel),
            ("pleural", AnatDp, Na),
            ("effusion", ObsDa, Rel),
            ("pneumothorax", ObsDa, Na),
        ]))),
        impression_facts: Some(Facts::Triplets(gold_one())),
        candidates: rows
            .into_iter()
            .map(|(i, r)| CandidateEntry {
                id: Some(format!("row{}", i + 1)),
                text: r.text.into(),
                facts: Facts::Triplets((r.triplets)()),
                true_score: None,
                observations: None,
            })
            .collect(),
        predicted_sequence: Some(GOLD_ONE_SEQ.into()),
        gold_observations: None,
        pred_observations: None,
    }
}
