//! Token-sequence form of a triplet set, and the parser that reads generated
//! sequences back while filtering corrupted triplets.
//!
//! Format: `<s>` + triplets joined by ` [ENT] ` + `</s>`, where each triplet
//! is `entity [LABEL] [FLAG]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::factmodel::{EntityLabel, RelationFlag, Triplet, TripletSet};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const SEPARATOR: &str = "[ENT]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecialToken {
    Bos,
    Eos,
    Ent,
    Label(EntityLabel),
    Flag(RelationFlag),
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 9] = [
        SpecialToken::Bos,
        SpecialToken::Eos,
        SpecialToken::Ent,
        SpecialToken::Label(EntityLabel::AnatDp),
        SpecialToken::Label(EntityLabel::ObsDp),
        SpecialToken::Label(EntityLabel::ObsU),
        SpecialToken::Label(EntityLabel::ObsDa),
        SpecialToken::Flag(RelationFlag::Rel),
        SpecialToken::Flag(RelationFlag::Na),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpecialToken::Bos => BOS,
            SpecialToken::Eos => EOS,
            SpecialToken::Ent => SEPARATOR,
            SpecialToken::Label(EntityLabel::AnatDp) => "[ANAT-DP]",
            SpecialToken::Label(EntityLabel::ObsDp) => "[OBS-DP]",
            SpecialToken::Label(EntityLabel::ObsU) => "[OBS-U]",
            SpecialToken::Label(EntityLabel::ObsDa) => "[OBS-DA]",
            SpecialToken::Flag(RelationFlag::Rel) => "[REL]",
            SpecialToken::Flag(RelationFlag::Na) => "[NA]",
        }
    }

    pub fn lookup(token: &str) -> Option<SpecialToken> {
        SpecialToken::ALL.into_iter().find(|t| t.as_str() == token)
    }
}

impl fmt::Display for SpecialToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Exactly three tokens per triplet.
    #[default]
    Strict,
    /// Multi-token entities allowed before the label and flag tokens.
    Lenient,
}

impl FromStr for ParseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ParseMode::Strict),
            "lenient" => Ok(ParseMode::Lenient),
            other => Err(format!("unknown parse mode {other:?} (expected strict|lenient)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    BadArity,
    BadLabelToken,
    BadFlagToken,
    EmptyEntity,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadArity => "bad-arity",
            RejectReason::BadLabelToken => "bad-label-token",
            RejectReason::BadFlagToken => "bad-flag-token",
            RejectReason::EmptyEntity => "empty-entity",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedSegment {
    pub segment: String,
    pub reason: RejectReason,
}

/// Outcome of parsing one generated sequence.
///
/// `segments == accepted_segments + rejected.len()`; accepted segments that
/// repeat an earlier triplet are counted in `duplicates`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub accepted: TripletSet,
    pub rejected: Vec<RejectedSegment>,
    pub segments: usize,
    pub duplicates: usize,
}

impl ParseReport {
    pub fn accepted_segments(&self) -> usize {
        self.segments - self.rejected.len()
    }
}

pub fn linearize(set: &TripletSet) -> String {
    let body = set
        .iter()
        .map(|t| {
            format!(
                "{} {} {}",
                t.entity(),
                SpecialToken::Label(t.label()),
                SpecialToken::Flag(t.flag())
            )
        })
        .collect::<Vec<_>>()
        .join(" [ENT] ");
    format!("{BOS}{body}{EOS}")
}

fn strip_wrappers(seq: &str) -> &str {
    let s = seq.trim();
    let s = s.strip_prefix(BOS).unwrap_or(s);
    s.strip_suffix(EOS).unwrap_or(s)
}

fn label_token(token: &str) -> Option<EntityLabel> {
    match SpecialToken::lookup(token) {
        Some(SpecialToken::Label(l)) => Some(l),
        _ => None,
    }
}

fn flag_token(token: &str) -> Option<RelationFlag> {
    match SpecialToken::lookup(token) {
        Some(SpecialToken::Flag(f)) => Some(f),
        _ => None,
    }
}

fn parse_segment(tokens: &[&str], mode: ParseMode) -> Result<Triplet, RejectReason> {
    if tokens.is_empty() {
        return Err(RejectReason::EmptyEntity);
    }
    let n = tokens.len();
    match mode {
        ParseMode::Strict if n != 3 => return Err(RejectReason::BadArity),
        ParseMode::Lenient if n < 2 => return Err(RejectReason::BadArity),
        _ => {}
    }
    let entity = &tokens[..n - 2];
    if mode == ParseMode::Strict && SpecialToken::lookup(entity[0]).is_some() {
        return Err(RejectReason::EmptyEntity);
    }
    let label = label_token(tokens[n - 2]).ok_or(RejectReason::BadLabelToken)?;
    let flag = flag_token(tokens[n - 1]).ok_or(RejectReason::BadFlagToken)?;
    if entity.is_empty() {
        return Err(RejectReason::EmptyEntity);
    }
    if entity.iter().any(|t| SpecialToken::lookup(t).is_some()) {
        return Err(RejectReason::BadArity);
    }
    Triplet::new(&entity.join(" "), label, flag).map_err(|_| RejectReason::EmptyEntity)
}

/// Parses a generated sequence. Never fails: corrupted segments are reported
/// and dropped.
pub fn parse(seq: &str, mode: ParseMode) -> ParseReport {
    let body = strip_wrappers(seq);
    let mut report = ParseReport::default();
    if body.trim().is_empty() {
        return report;
    }
    for segment in body.split(SEPARATOR) {
        report.segments += 1;
        let tokens: Vec<&str> = segment.split_whitespace().collect();
        match parse_segment(&tokens, mode) {
            Ok(triplet) => {
                if !report.accepted.insert(triplet) {
                    report.duplicates += 1;
                }
            }
            Err(reason) => report.rejected.push(RejectedSegment {
                segment: segment.trim().to_string(),
                reason,
            }),
        }
    }
    report
}
