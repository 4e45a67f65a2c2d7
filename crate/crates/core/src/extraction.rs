//! Neighbour-search extraction of elementary statements and their rendering
//! as yes/no questions for a vision-language oracle.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AmrGraph, AmrNode, NodeId, PosTag};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractionError {
    #[error("{kind} statement has the wrong slots filled (y: {has_y}, z: {has_z})")]
    SlotMismatch {
        kind: StatementKind,
        has_y: bool,
        has_z: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StatementKind {
    Object,
    SpatialTemporal,
    Activity,
    Relationship,
    Attribute,
}

impl StatementKind {
    /// Whether the kind uses the (y, z) slots.
    pub fn slot_shape(self) -> (bool, bool) {
        match self {
            StatementKind::Object | StatementKind::SpatialTemporal => (false, false),
            StatementKind::Activity | StatementKind::Attribute => (true, false),
            StatementKind::Relationship => (true, true),
        }
    }
}

impl fmt::Display for StatementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            StatementKind::Object => "Object",
            StatementKind::SpatialTemporal => "SpatialTemporal",
            StatementKind::Activity => "Activity",
            StatementKind::Relationship => "Relationship",
            StatementKind::Attribute => "Attribute",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementaryStatement {
    pub kind: StatementKind,
    pub x: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<String>,
    pub source_nodes: Vec<NodeId>,
}

impl ElementaryStatement {
    pub fn object(n: &AmrNode) -> Self {
        Self::single(StatementKind::Object, n)
    }

    pub fn spatial_temporal(n: &AmrNode) -> Self {
        Self::single(StatementKind::SpatialTemporal, n)
    }

    pub fn activity(subject: &AmrNode, verb: &AmrNode) -> Self {
        Self {
            kind: StatementKind::Activity,
            x: subject.surface.clone(),
            y: Some(verb.surface.clone()),
            z: None,
            source_nodes: vec![subject.id, verb.id],
        }
    }

    pub fn relationship(subject: &AmrNode, predicate: &AmrNode, object: &AmrNode) -> Self {
        Self {
            kind: StatementKind::Relationship,
            x: subject.surface.clone(),
            y: Some(predicate.surface.clone()),
            z: Some(object.surface.clone()),
            source_nodes: vec![subject.id, predicate.id, object.id],
        }
    }

    pub fn attribute(holder: &AmrNode, adjective: &AmrNode) -> Self {
        Self {
            kind: StatementKind::Attribute,
            x: holder.surface.clone(),
            y: Some(adjective.surface.clone()),
            z: None,
            source_nodes: vec![holder.id, adjective.id],
        }
    }

    fn single(kind: StatementKind, n: &AmrNode) -> Self {
        Self {
            kind,
            x: n.surface.clone(),
            y: None,
            z: None,
            source_nodes: vec![n.id],
        }
    }

    /// Filled slot surfaces in x, y, z order.
    pub fn slots(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.x.as_str())
            .chain(self.y.as_deref())
            .chain(self.z.as_deref())
    }

    /// Identity used for de-duplication: kind plus slot surfaces.
    fn identity(&self) -> (StatementKind, &str, Option<&str>, Option<&str>) {
        (self.kind, &self.x, self.y.as_deref(), self.z.as_deref())
    }

    fn check_slots(&self) -> Result<(), ExtractionError> {
        let shape = (self.y.is_some(), self.z.is_some());
        if shape == self.kind.slot_shape() {
            Ok(())
        } else {
            Err(ExtractionError::SlotMismatch {
                kind: self.kind,
                has_y: shape.0,
                has_z: shape.1,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub statement: ElementaryStatement,
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// A verb whose noun/named-entity neighbourhood is neither 1 nor 2 nodes.
    VerbArity(usize),
    /// A pronoun whose noun/named-entity neighbourhood is not exactly 2 nodes.
    PronounArity(usize),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::VerbArity(n) => write!(f, "verb with {n} nominal neighbours"),
            SkipReason::PronounArity(n) => write!(f, "pronoun with {n} nominal neighbours"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedNode {
    pub node: NodeId,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub statements: Vec<ElementaryStatement>,
    pub skipped: Vec<SkippedNode>,
}

pub fn extract_statements(g: &AmrGraph) -> Vec<ElementaryStatement> {
    extract_with_log(g).statements
}

/// Runs extraction and also reports verb/pronoun nodes that produced nothing.
/// Each skip is logged at debug level on the `decontext::extraction` target.
pub fn extract_with_log(g: &AmrGraph) -> Extraction {
    let mut out = Extraction::default();
    let mut seen = HashSet::new();
    let mut push = |s: ElementaryStatement, out: &mut Extraction| {
        let key = s.identity();
        let key = (key.0, key.1.to_owned(), key.2.map(str::to_owned), key.3.map(str::to_owned));
        if seen.insert(key) {
            out.statements.push(s);
        }
    };

    for node in g.nodes() {
        let neighbours = || {
            g.neighbor_iter(node.id)
                .expect("node ids come from the graph itself")
        };
        match node.pos {
            PosTag::Noun | PosTag::NamedEntity => {
                let head = if node.ne.is_spatial_temporal() {
                    ElementaryStatement::spatial_temporal(node)
                } else {
                    ElementaryStatement::object(node)
                };
                push(head, &mut out);
                for adj in neighbours().filter(|n| n.pos == PosTag::Adjective) {
                    push(ElementaryStatement::attribute(node, adj), &mut out);
                }
            }
            PosTag::Verb | PosTag::Pronoun => {
                let nominal: Vec<&AmrNode> = neighbours().filter(|n| n.pos.is_nominal()).collect();
                let statement = match (node.pos, nominal.as_slice()) {
                    (PosTag::Verb, [subject]) => Some(ElementaryStatement::activity(subject, node)),
                    (_, [subject, object]) => {
                        Some(ElementaryStatement::relationship(subject, node, object))
                    }
                    _ => None,
                };
                match statement {
                    Some(s) => push(s, &mut out),
                    None => {
                        let reason = if node.pos == PosTag::Verb {
                            SkipReason::VerbArity(nominal.len())
                        } else {
                            SkipReason::PronounArity(nominal.len())
                        };
                        log::debug!(target: "decontext::extraction", "skip node {}: {}", node.id, reason);
                        out.skipped.push(SkippedNode {
                            node: node.id,
                            reason,
                        });
                    }
                }
            }
            PosTag::Adjective | PosTag::Other => {}
        }
    }
    out
}

/// Renders a statement with its fixed interrogative template.
pub fn render_text(s: &ElementaryStatement) -> Result<String, ExtractionError> {
    s.check_slots()?;
    let y = s.y.as_deref().unwrap_or_default();
    let z = s.z.as_deref().unwrap_or_default();
    Ok(match s.kind {
        StatementKind::Object => format!("Is the photo about {}?", s.x),
        StatementKind::SpatialTemporal => format!("Is the photo taken in {}?", s.x),
        StatementKind::Activity => format!("Is the photo about {} {}?", s.x, y),
        StatementKind::Relationship => format!("Is the photo about {} {} {}?", s.x, y, z),
        StatementKind::Attribute => format!("In the photo, is {} {}?", s.x, y),
    })
}

pub fn render_query(s: ElementaryStatement, index: usize) -> Result<Query, ExtractionError> {
    let text = render_text(&s)?;
    Ok(Query {
        statement: s,
        text,
        index,
    })
}

pub fn extract_queries(g: &AmrGraph) -> Vec<Query> {
    extract_statements(g)
        .into_iter()
        .enumerate()
        .map(|(i, s)| render_query(s, i).expect("extractor emits well-formed statements"))
        .collect()
}
