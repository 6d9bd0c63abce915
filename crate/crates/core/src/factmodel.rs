//! RadGraph-schema fact types and the reduction from a fact graph to the
//! triplet set that every scorer works on.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FactError {
    #[error("invalid entity surface {0:?}")]
    InvalidEntity(String),
    #[error("unknown entity label {0:?}")]
    UnknownLabel(String),
    #[error("unknown relation type {0:?}")]
    UnknownRelation(String),
    #[error("unknown relation flag {0:?}")]
    UnknownFlag(String),
    #[error("edge {index}: endpoint {endpoint} out of range for {nodes} nodes")]
    EdgeOutOfRange {
        index: usize,
        endpoint: usize,
        nodes: usize,
    },
    #[error("edge {index}: self-edge on node {node}")]
    SelfEdge { index: usize, node: usize },
    #[error("edge {index}: duplicate of edge {first}")]
    DuplicateEdge { index: usize, first: usize },
}

/// Entity category in the RadGraph schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityLabel {
    #[serde(rename = "ANAT-DP")]
    AnatDp,
    #[serde(rename = "OBS-DP")]
    ObsDp,
    #[serde(rename = "OBS-U")]
    ObsU,
    #[serde(rename = "OBS-DA")]
    ObsDa,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 4] = [
        EntityLabel::AnatDp,
        EntityLabel::ObsDp,
        EntityLabel::ObsU,
        EntityLabel::ObsDa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::AnatDp => "ANAT-DP",
            EntityLabel::ObsDp => "OBS-DP",
            EntityLabel::ObsU => "OBS-U",
            EntityLabel::ObsDa => "OBS-DA",
        }
    }

    pub fn is_observation(self) -> bool {
        !matches!(self, EntityLabel::AnatDp)
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityLabel {
    type Err = FactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| FactError::UnknownLabel(s.to_string()))
    }
}

/// Edge type between two entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationType {
    #[serde(rename = "Suggestive_Of")]
    SuggestiveOf,
    #[serde(rename = "Located_At")]
    LocatedAt,
    #[serde(rename = "Modify")]
    Modify,
}

impl RelationType {
    pub const ALL: [RelationType; 3] = [
        RelationType::SuggestiveOf,
        RelationType::LocatedAt,
        RelationType::Modify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::SuggestiveOf => "Suggestive_Of",
            RelationType::LocatedAt => "Located_At",
            RelationType::Modify => "Modify",
        }
    }

    /// Whether `src -> dst` matches the label pairing the schema describes
    /// for this relation. Mismatches are tolerated and only reported.
    pub fn fits(self, src: EntityLabel, dst: EntityLabel) -> bool {
        match self {
            RelationType::SuggestiveOf => src.is_observation() && dst.is_observation(),
            RelationType::LocatedAt => src.is_observation() && !dst.is_observation(),
            RelationType::Modify => !src.is_observation() && !dst.is_observation(),
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = FactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationType::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| FactError::UnknownRelation(s.to_string()))
    }
}

/// Whether an entity takes part in at least one relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationFlag {
    #[serde(rename = "REL")]
    Rel,
    #[serde(rename = "NA")]
    Na,
}

impl RelationFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationFlag::Rel => "REL",
            RelationFlag::Na => "NA",
        }
    }

    pub fn from_related(related: bool) -> Self {
        if related {
            RelationFlag::Rel
        } else {
            RelationFlag::Na
        }
    }

    pub fn toggled(self) -> Self {
        match self {
            RelationFlag::Rel => RelationFlag::Na,
            RelationFlag::Na => RelationFlag::Rel,
        }
    }
}

impl fmt::Display for RelationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationFlag {
    type Err = FactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "REL" => Ok(RelationFlag::Rel),
            "NA" => Ok(RelationFlag::Na),
            _ => Err(FactError::UnknownFlag(s.to_string())),
        }
    }
}

/// Canonical form used for entity equality: lowercased, trimmed, and with
/// internal whitespace runs collapsed to a single space.
pub fn normalize_entity(raw: &str) -> Result<String, FactError> {
    let normalized = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    if normalized.is_empty() {
        return Err(FactError::InvalidEntity(raw.to_string()));
    }
    Ok(normalized)
}

/// Sequence markers that may never appear inside an entity surface.
const RESERVED_SUBSTRINGS: [&str; 3] = ["<s>", "</s>", "[ENT]"];

fn is_reserved_token(token: &str) -> bool {
    matches!(
        token,
        "[ENT]" | "[ANAT-DP]" | "[OBS-DP]" | "[OBS-U]" | "[OBS-DA]" | "[REL]" | "[NA]"
    )
}

/// One entity occurrence in a fact graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawNode")]
pub struct EntityNode {
    surface: String,
    label: EntityLabel,
    #[serde(skip_serializing_if = "Option::is_none")]
    position: Option<u32>,
}

#[derive(Deserialize)]
struct RawNode {
    surface: String,
    label: EntityLabel,
    #[serde(default)]
    position: Option<u32>,
}

impl TryFrom<RawNode> for EntityNode {
    type Error = FactError;

    fn try_from(raw: RawNode) -> Result<Self, Self::Error> {
        EntityNode::new(&raw.surface, raw.label, raw.position)
    }
}

impl EntityNode {
    pub fn new(surface: &str, label: EntityLabel, position: Option<u32>) -> Result<Self, FactError> {
        let surface = surface.split_whitespace().collect::<Vec<_>>().join(" ");
        if surface.is_empty() {
            return Err(FactError::InvalidEntity(surface));
        }
        Ok(Self {
            surface,
            label,
            position,
        })
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn label(&self) -> EntityLabel {
        self.label
    }

    pub fn position(&self) -> Option<u32> {
        self.position
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    #[serde(rename = "type")]
    pub kind: RelationType,
}

/// Entities plus typed relations extracted from one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct FactGraph {
    nodes: Vec<EntityNode>,
    edges: Vec<Edge>,
}

#[derive(Deserialize)]
struct RawGraph {
    #[serde(default)]
    nodes: Vec<EntityNode>,
    #[serde(default)]
    edges: Vec<Edge>,
}

impl TryFrom<RawGraph> for FactGraph {
    type Error = FactError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        FactGraph::new(raw.nodes, raw.edges)
    }
}

impl FactGraph {
    pub fn new(nodes: Vec<EntityNode>, edges: Vec<Edge>) -> Result<Self, FactError> {
        let mut seen: HashMap<Edge, usize> = HashMap::with_capacity(edges.len());
        for (index, edge) in edges.iter().enumerate() {
            for endpoint in [edge.src, edge.dst] {
                if endpoint >= nodes.len() {
                    return Err(FactError::EdgeOutOfRange {
                        index,
                        endpoint,
                        nodes: nodes.len(),
                    });
                }
            }
            if edge.src == edge.dst {
                return Err(FactError::SelfEdge {
                    index,
                    node: edge.src,
                });
            }
            if let Some(&first) = seen.get(edge) {
                return Err(FactError::DuplicateEdge { index, first });
            }
            seen.insert(*edge, index);
        }
        Ok(Self { nodes, edges })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[EntityNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges whose label pairing departs from the schema description.
    pub fn compatibility_warnings(&self) -> Vec<String> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.kind.fits(self.nodes[e.src].label, self.nodes[e.dst].label))
            .map(|(i, e)| {
                format!(
                    "edge {i}: {} between {} and {}",
                    e.kind, self.nodes[e.src].label, self.nodes[e.dst].label
                )
            })
            .collect()
    }
}

/// Reduced fact unit: normalized entity, its label, and the relation flag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawTriplet")]
pub struct Triplet {
    entity: String,
    label: EntityLabel,
    flag: RelationFlag,
}

#[derive(Deserialize)]
struct RawTriplet {
    entity: String,
    label: EntityLabel,
    flag: RelationFlag,
}

impl TryFrom<RawTriplet> for Triplet {
    type Error = FactError;

    fn try_from(raw: RawTriplet) -> Result<Self, Self::Error> {
        Triplet::new(&raw.entity, raw.label, raw.flag)
    }
}

impl Triplet {
    /// Builds a triplet, normalizing the entity. Entities containing
    /// sequence markers or special tokens are rejected.
    pub fn new(entity: &str, label: EntityLabel, flag: RelationFlag) -> Result<Self, FactError> {
        if entity.split_whitespace().any(is_reserved_token)
            || RESERVED_SUBSTRINGS.iter().any(|r| entity.contains(r))
        {
            return Err(FactError::InvalidEntity(entity.to_string()));
        }
        Ok(Self {
            entity: normalize_entity(entity)?,
            label,
            flag,
        })
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn label(&self) -> EntityLabel {
        self.label
    }

    pub fn flag(&self) -> RelationFlag {
        self.flag
    }

    pub fn with_label(&self, label: EntityLabel) -> Self {
        Self {
            label,
            ..self.clone()
        }
    }

    pub fn with_flag(&self, flag: RelationFlag) -> Self {
        Self {
            flag,
            ..self.clone()
        }
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.entity, self.label, self.flag)
    }
}

/// Deduplicated triplets that remember first-appearance order.
///
/// Equality is set equality; the order is metadata used by linearization.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Triplet>", into = "Vec<Triplet>")]
pub struct TripletSet {
    members: IndexSet<Triplet>,
}

impl TripletSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a triplet; returns false if it was already present.
    pub fn insert(&mut self, triplet: Triplet) -> bool {
        self.members.insert(triplet)
    }

    pub fn contains(&self, triplet: &Triplet) -> bool {
        self.members.contains(triplet)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in first-appearance order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Triplet> + '_ {
        self.members.iter()
    }

    pub fn intersection_len(&self, other: &TripletSet) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().filter(|t| large.contains(t)).count()
    }

    pub fn is_subset(&self, other: &TripletSet) -> bool {
        self.members.is_subset(&other.members)
    }
}

impl PartialEq for TripletSet {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
    }
}

impl Eq for TripletSet {}

impl FromIterator<Triplet> for TripletSet {
    fn from_iter<I: IntoIterator<Item = Triplet>>(iter: I) -> Self {
        Self {
            members: iter.into_iter().collect(),
        }
    }
}

impl Extend<Triplet> for TripletSet {
    fn extend<I: IntoIterator<Item = Triplet>>(&mut self, iter: I) {
        self.members.extend(iter);
    }
}

impl From<Vec<Triplet>> for TripletSet {
    fn from(v: Vec<Triplet>) -> Self {
        v.into_iter().collect()
    }
}

impl From<TripletSet> for Vec<Triplet> {
    fn from(s: TripletSet) -> Self {
        s.members.into_iter().collect()
    }
}

impl<'a> IntoIterator for &'a TripletSet {
    type Item = &'a Triplet;
    type IntoIter = indexmap::set::Iter<'a, Triplet>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

/// Reduces a fact graph to one triplet per distinct (normalized surface,
/// label). A triplet is flagged REL when any of its occurrences touches an
/// edge, in either direction.
///
/// Order follows node positions when every node carries one, otherwise the
/// node list order.
pub fn reduce_graph(graph: &FactGraph) -> TripletSet {
    let nodes = graph.nodes();
    let mut related = vec![false; nodes.len()];
    for edge in graph.edges() {
        related[edge.src] = true;
        related[edge.dst] = true;
    }

    let mut visit: Vec<usize> = (0..nodes.len()).collect();
    if nodes.iter().all(|n| n.position.is_some()) {
        visit.sort_by_key(|&i| nodes[i].position);
    }

    // (entity, label) -> related, kept in first-appearance order
    let mut grouped: indexmap::IndexMap<(String, EntityLabel), bool> = indexmap::IndexMap::new();
    for i in visit {
        let node = &nodes[i];
        // EntityNode surfaces are non-empty, so normalization cannot fail.
        let key = (
            normalize_entity(&node.surface).expect("node surface is non-empty"),
            node.label,
        );
        *grouped.entry(key).or_insert(false) |= related[i];
    }

    grouped
        .into_iter()
        .map(|((entity, label), rel)| Triplet {
            entity,
            label,
            flag: RelationFlag::from_related(rel),
        })
        .collect()
}
