//! Three-node causal structures, the two question kinds asked about them, and
//! ground-truth label derivation.
//!
//! Roles are symbolic (`X`, `Y`, `Z`); event phrases are bound only when text
//! is rendered, so everything here is independent of any triple corpus.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CausalError {
    #[error("query for {query} dataset evaluated against a {structure} structure")]
    KindMismatch {
        structure: DatasetKind,
        query: DatasetKind,
    },
    #[error("invalid edge set: {0}")]
    InvalidEdges(String),
    #[error("invalid event triple {id:?}: {reason}")]
    InvalidTriple { id: String, reason: String },
    #[error("unknown {what} {value:?}")]
    Unknown { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    X,
    Y,
    Z,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::X => "X",
            Role::Y => "Y",
            Role::Z => "Z",
        })
    }
}

/// Directed edge `from → to` between two roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: Role,
    pub to: Role,
}

impl Edge {
    pub const fn new(from: Role, to: Role) -> Self {
        Self { from, to }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}→{}", self.from, self.to)
    }
}

/// Acyclic set of at most two directed edges without self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct EdgeSet(BTreeSet<Edge>);

impl EdgeSet {
    pub fn new(edges: impl IntoIterator<Item = Edge>) -> Result<Self, CausalError> {
        let set: BTreeSet<Edge> = edges.into_iter().collect();
        if set.len() > 2 {
            return Err(CausalError::InvalidEdges(format!(
                "{} edges, at most 2 allowed",
                set.len()
            )));
        }
        if let Some(e) = set.iter().find(|e| e.from == e.to) {
            return Err(CausalError::InvalidEdges(format!("self-loop {e}")));
        }
        // With two edges over three nodes a cycle can only be a 2-cycle.
        for e in &set {
            if set.contains(&Edge::new(e.to, e.from)) {
                return Err(CausalError::InvalidEdges(format!("cycle through {e}")));
            }
        }
        Ok(Self(set))
    }

    pub fn contains(&self, edge: &Edge) -> bool {
        self.0.contains(edge)
    }

    pub fn is_superset(&self, other: &EdgeSet) -> bool {
        self.0.is_superset(&other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Confounder,
    Chain,
    Collider,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [Self::Confounder, Self::Chain, Self::Collider];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Confounder => "confounder",
            Self::Chain => "chain",
            Self::Collider => "collider",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = CausalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CausalError::Unknown {
                what: "dataset kind",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Base,
    Opposite,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Self::Base, Self::Opposite];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::Opposite => "opposite",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = CausalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Self::Base),
            "opposite" => Ok(Self::Opposite),
            _ => Err(CausalError::Unknown {
                what: "polarity",
                value: s.to_string(),
            }),
        }
    }
}

/// One of the six causal graphs: a dataset kind under a polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StructureSpec {
    pub dataset_kind: DatasetKind,
    pub polarity: Polarity,
}

impl StructureSpec {
    pub const fn new(dataset_kind: DatasetKind, polarity: Polarity) -> Self {
        Self {
            dataset_kind,
            polarity,
        }
    }

    /// All six structures, dataset-major.
    pub fn all() -> impl Iterator<Item = StructureSpec> {
        DatasetKind::ALL
            .into_iter()
            .flat_map(|d| Polarity::ALL.into_iter().map(move |p| Self::new(d, p)))
    }
}

impl fmt::Display for StructureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.dataset_kind, self.polarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    /// Direct-effect question over a single edge.
    Q1,
    /// Structural question over a two-edge conjunction.
    Q2,
}

impl QueryKind {
    pub const ALL: [QueryKind; 2] = [Self::Q1, Self::Q2];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Q1 => "Q1",
            Self::Q2 => "Q2",
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalQuery {
    pub dataset_kind: DatasetKind,
    pub query_kind: QueryKind,
    pub asserted: EdgeSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Yes,
    No,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Yes => "Yes",
            Self::No => "No",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Yes => Self::No,
            Self::No => Self::Yes,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Three event phrases bound to the roles `X`, `Y`, `Z`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventTriple {
    pub id: String,
    pub x: String,
    pub y: String,
    pub z: String,
}

impl EventTriple {
    pub fn new(
        id: impl Into<String>,
        x: impl Into<String>,
        y: impl Into<String>,
        z: impl Into<String>,
    ) -> Result<Self, CausalError> {
        let t = Self {
            id: id.into(),
            x: x.into(),
            y: y.into(),
            z: z.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), CausalError> {
        let fail = |reason: &str| {
            Err(CausalError::InvalidTriple {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.id.trim().is_empty() {
            return fail("empty id");
        }
        for (role, phrase) in self.phrases() {
            if phrase.trim().is_empty() {
                return fail(&format!("empty {role} phrase"));
            }
        }
        if self.x == self.y || self.x == self.z || self.y == self.z {
            return fail("event phrases must be pairwise distinct");
        }
        Ok(())
    }

    pub fn phrase(&self, role: Role) -> &str {
        match role {
            Role::X => &self.x,
            Role::Y => &self.y,
            Role::Z => &self.z,
        }
    }

    pub fn phrases(&self) -> [(Role, &str); 3] {
        [(Role::X, &self.x), (Role::Y, &self.y), (Role::Z, &self.z)]
    }
}

use Role::{X, Y, Z};

fn edges(list: &[(Role, Role)]) -> EdgeSet {
    EdgeSet::new(list.iter().map(|&(a, b)| Edge::new(a, b))).expect("canonical edge sets are valid")
}

/// Canonical edge set of each of the six structures.
pub fn edges_for(structure: StructureSpec) -> EdgeSet {
    use DatasetKind::*;
    use Polarity::*;
    match (structure.dataset_kind, structure.polarity) {
        (Confounder, Base) => edges(&[(Z, X), (Z, Y)]),
        (Confounder, Opposite) => edges(&[(X, Y)]),
        (Chain, Base) => edges(&[(X, Y), (Y, Z)]),
        (Chain, Opposite) => edges(&[(X, Z)]),
        (Collider, Base) => edges(&[(X, Z), (Y, Z)]),
        (Collider, Opposite) => edges(&[(X, Y)]),
    }
}

/// The edges asserted by each question kind of a dataset.
pub fn query_for(dataset_kind: DatasetKind, query_kind: QueryKind) -> CausalQuery {
    use DatasetKind::*;
    use QueryKind::*;
    let asserted = match (dataset_kind, query_kind) {
        (Confounder, Q1) => edges(&[(X, Y)]),
        (Chain, Q1) => edges(&[(X, Z)]),
        (Collider, Q1) => edges(&[(X, Y)]),
        (Confounder, Q2) => edges(&[(Z, X), (Z, Y)]),
        (Chain, Q2) => edges(&[(X, Y), (Y, Z)]),
        (Collider, Q2) => edges(&[(X, Z), (Y, Z)]),
    };
    CausalQuery {
        dataset_kind,
        query_kind,
        asserted,
    }
}

/// `Yes` iff every asserted edge is a direct edge of the structure's graph.
pub fn derive_label(structure: StructureSpec, query: &CausalQuery) -> Result<Label, CausalError> {
    if structure.dataset_kind != query.dataset_kind {
        return Err(CausalError::KindMismatch {
            structure: structure.dataset_kind,
            query: query.dataset_kind,
        });
    }
    Ok(label_for_edges(&edges_for(structure), &query.asserted))
}

/// Label as a function of the graph's edges alone.
pub fn label_for_edges(graph: &EdgeSet, asserted: &EdgeSet) -> Label {
    if graph.is_superset(asserted) {
        Label::Yes
    } else {
        Label::No
    }
}

/// Convenience: label of `query_kind` under `structure`.
pub fn label_of(structure: StructureSpec, query_kind: QueryKind) -> Label {
    derive_label(structure, &query_for(structure.dataset_kind, query_kind))
        .expect("query built for the same dataset kind")
}
