//! POS/NE-annotated AMR graphs of captions.
//!
//! Graphs arrive as JSON documents produced by an upstream AMR parser plus
//! NER tagger (or written by hand in fixtures). [`AmrGraph`] is immutable
//! once built: nodes are held in ascending-id order, edges in ascending
//! `(src, dst, relation)` order, and an undirected adjacency index is
//! derived at construction time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("malformed graph document: {0}")]
    MalformedDocument(String),
    #[error("edge {src} -> {dst} references unknown node {missing}")]
    DanglingEdge {
        src: NodeId,
        dst: NodeId,
        missing: NodeId,
    },
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("node {0} has an empty surface")]
    EmptySurface(NodeId),
    #[error("node {id}: NE type {ne:?} is only allowed on Noun or NamedEntity nodes, found {pos:?}")]
    NeOnNonNominal { id: NodeId, pos: PosTag, ne: NeType },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {src} -> {dst} ({relation:?})")]
    DuplicateEdge {
        src: NodeId,
        dst: NodeId,
        relation: String,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosTag {
    Noun,
    NamedEntity,
    Verb,
    Pronoun,
    Adjective,
    Other,
}

impl PosTag {
    /// Nouns and named entities fill the X/Z slots of statements.
    pub fn is_nominal(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::NamedEntity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NeType {
    Person,
    Organization,
    Location,
    Time,
    None,
}

impl NeType {
    pub fn is_spatial_temporal(self) -> bool {
        matches!(self, NeType::Location | NeType::Time)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmrNode {
    pub id: NodeId,
    pub surface: String,
    pub pos: PosTag,
    pub ne: NeType,
}

impl AmrNode {
    pub fn new(id: NodeId, surface: impl Into<String>, pos: PosTag, ne: NeType) -> Self {
        Self {
            id,
            surface: surface.into(),
            pos,
            ne,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmrEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: String,
}

impl AmrEdge {
    pub fn new(src: NodeId, dst: NodeId, relation: impl Into<String>) -> Self {
        Self {
            src,
            dst,
            relation: relation.into(),
        }
    }
}

/// Serialized form of a graph, as exchanged on disk and over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub caption: String,
    pub nodes: Vec<AmrNode>,
    pub edges: Vec<AmrEdge>,
}

/// A validated caption graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphDocument", into = "GraphDocument")]
pub struct AmrGraph {
    caption: String,
    nodes: Vec<AmrNode>,
    edges: Vec<AmrEdge>,
    // node id -> positions in `nodes` of its undirected neighbours, ascending id
    adjacency: BTreeMap<NodeId, Vec<usize>>,
}

impl AmrGraph {
    /// Validates and canonicalises a document.
    pub fn from_document(doc: GraphDocument) -> Result<Self, GraphError> {
        let GraphDocument {
            caption,
            mut nodes,
            mut edges,
        } = doc;

        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(GraphError::DuplicateNodeId(pair[0].id));
            }
        }
        for node in &nodes {
            if node.surface.trim().is_empty() {
                return Err(GraphError::EmptySurface(node.id));
            }
            if node.ne != NeType::None && !node.pos.is_nominal() {
                return Err(GraphError::NeOnNonNominal {
                    id: node.id,
                    pos: node.pos,
                    ne: node.ne,
                });
            }
        }

        let position: BTreeMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();

        edges.sort();
        for pair in edges.windows(2) {
            if pair[0] == pair[1] {
                return Err(GraphError::DuplicateEdge {
                    src: pair[0].src,
                    dst: pair[0].dst,
                    relation: pair[0].relation.clone(),
                });
            }
        }

        let mut neighbour_sets: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for edge in &edges {
            for endpoint in [edge.src, edge.dst] {
                if !position.contains_key(&endpoint) {
                    return Err(GraphError::DanglingEdge {
                        src: edge.src,
                        dst: edge.dst,
                        missing: endpoint,
                    });
                }
            }
            if edge.src == edge.dst {
                return Err(GraphError::SelfLoop(edge.src));
            }
            neighbour_sets.entry(edge.src).or_default().insert(edge.dst);
            neighbour_sets.entry(edge.dst).or_default().insert(edge.src);
        }

        let adjacency = neighbour_sets
            .into_iter()
            .map(|(id, set)| (id, set.iter().map(|n| position[n]).collect()))
            .collect();

        Ok(Self {
            caption,
            nodes,
            edges,
            adjacency,
        })
    }

    pub fn empty(caption: impl Into<String>) -> Self {
        Self {
            caption: caption.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
            adjacency: BTreeMap::new(),
        }
    }

    pub fn caption(&self) -> &str {
        &self.caption
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> &[AmrNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[AmrEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&AmrNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    /// Every node sharing an edge with `id` in either direction, once each,
    /// in ascending id order.
    pub fn neighbors(&self, id: NodeId) -> Result<Vec<&AmrNode>, GraphError> {
        Ok(self.neighbor_iter(id)?.collect())
    }

    pub(crate) fn neighbor_iter(
        &self,
        id: NodeId,
    ) -> Result<impl Iterator<Item = &AmrNode> + '_, GraphError> {
        if self.node(id).is_none() {
            return Err(GraphError::UnknownNode(id));
        }
        let slots = self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        Ok(slots.iter().map(move |&i| &self.nodes[i]))
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            caption: self.caption.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        }
    }
}

impl TryFrom<GraphDocument> for AmrGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDocument) -> Result<Self, Self::Error> {
        AmrGraph::from_document(doc)
    }
}

impl From<AmrGraph> for GraphDocument {
    fn from(g: AmrGraph) -> Self {
        GraphDocument {
            caption: g.caption,
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

/// Parses a JSON graph document.
pub fn parse_graph(json: &str) -> Result<AmrGraph, GraphError> {
    let doc: GraphDocument =
        serde_json::from_str(json).map_err(|e| GraphError::MalformedDocument(e.to_string()))?;
    AmrGraph::from_document(doc)
}

pub fn serialize_graph(g: &AmrGraph) -> String {
    serde_json::to_string(&g.to_document()).expect("graph documents always serialize")
}
