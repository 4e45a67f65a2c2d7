//! Shared generators and independent reference implementations.
#![allow(dead_code)]

use decontext_core::graph::{AmrEdge, AmrNode, GraphDocument, NeType, NodeId, PosTag};
use decontext_core::metrics::LabeledPrediction;
use decontext_core::{ElementaryStatement, PairLabel, StatementKind};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const POS: [PosTag; 6] = [
    PosTag::Noun,
    PosTag::NamedEntity,
    PosTag::Verb,
    PosTag::Pronoun,
    PosTag::Adjective,
    PosTag::Other,
];
const NE: [NeType; 5] = [
    NeType::Person,
    NeType::Organization,
    NeType::Location,
    NeType::Time,
    NeType::None,
];
// Small pool so duplicate statements actually occur.
const WORDS: [&str; 8] = ["dog", "park", "run", "brown", "Paris", "he", "see", "winter"];

/// A random valid document with up to `max_nodes` nodes, non-contiguous ids
/// and edges listed in random order and direction.
pub fn random_document(rng: &mut ChaCha8Rng, max_nodes: usize) -> GraphDocument {
    let n = rng.gen_range(0..=max_nodes);
    let mut ids: Vec<NodeId> = (0..(3 * n) as NodeId).collect();
    ids.shuffle(rng);
    ids.truncate(n);

    let nodes: Vec<AmrNode> = ids
        .iter()
        .map(|&id| {
            let pos = *POS.choose(rng).unwrap();
            let ne = if matches!(pos, PosTag::Noun | PosTag::NamedEntity) {
                *NE.choose(rng).unwrap()
            } else {
                NeType::None
            };
            AmrNode::new(id, *WORDS.choose(rng).unwrap(), pos, ne)
        })
        .collect();

    let mut edges = Vec::new();
    if n >= 2 {
        let density: f64 = rng.gen_range(0.0..0.3);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(density) {
                    let (a, b) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
                    edges.push(AmrEdge::new(ids[a], ids[b], ":rel"));
                    // Occasionally the reverse direction too, with its own relation.
                    if rng.gen_bool(0.1) {
                        edges.push(AmrEdge::new(ids[b], ids[a], ":inv"));
                    }
                }
            }
        }
    }
    edges.shuffle(rng);
    GraphDocument {
        caption: "random".into(),
        nodes,
        edges,
    }
}

/// Neighbours of `id` found by scanning every edge, ascending id, no repeats.
pub fn scan_neighbors(doc: &GraphDocument, id: NodeId) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = doc
        .edges
        .iter()
        .filter_map(|e| {
            if e.src == id {
                Some(e.dst)
            } else if e.dst == id {
                Some(e.src)
            } else {
                None
            }
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub type Tuple = (StatementKind, String, Option<String>, Option<String>, Vec<NodeId>);

pub fn as_tuple(s: &ElementaryStatement) -> Tuple {
    (s.kind, s.x.clone(), s.y.clone(), s.z.clone(), s.source_nodes.clone())
}

/// Straight transcription of the five rules over the raw document.
pub fn brute_force_statements(doc: &GraphDocument) -> Vec<Tuple> {
    let mut nodes = doc.nodes.clone();
    nodes.sort_by_key(|n| n.id);
    let find = |id: NodeId| nodes.iter().find(|n| n.id == id).unwrap();
    let nominal = |n: &AmrNode| n.pos == PosTag::Noun || n.pos == PosTag::NamedEntity;

    let mut out: Vec<Tuple> = Vec::new();
    let mut emit = |t: Tuple| {
        if !out.iter().any(|o| o.0 == t.0 && o.1 == t.1 && o.2 == t.2 && o.3 == t.3) {
            out.push(t);
        }
    };
    for n in &nodes {
        let nbrs: Vec<&AmrNode> = scan_neighbors(doc, n.id).into_iter().map(find).collect();
        if nominal(n) {
            let kind = if n.ne == NeType::Time || n.ne == NeType::Location {
                StatementKind::SpatialTemporal
            } else {
                StatementKind::Object
            };
            emit((kind, n.surface.clone(), None, None, vec![n.id]));
            for a in nbrs.iter().filter(|a| a.pos == PosTag::Adjective) {
                emit((
                    StatementKind::Attribute,
                    n.surface.clone(),
                    Some(a.surface.clone()),
                    None,
                    vec![n.id, a.id],
                ));
            }
        }
        let l: Vec<&&AmrNode> = nbrs.iter().filter(|m| nominal(m)).collect();
        if n.pos == PosTag::Verb && l.len() == 1 {
            emit((
                StatementKind::Activity,
                l[0].surface.clone(),
                Some(n.surface.clone()),
                None,
                vec![l[0].id, n.id],
            ));
        }
        if (n.pos == PosTag::Verb || n.pos == PosTag::Pronoun) && l.len() == 2 {
            emit((
                StatementKind::Relationship,
                l[0].surface.clone(),
                Some(n.surface.clone()),
                Some(l[1].surface.clone()),
                vec![l[0].id, n.id, l[1].id],
            ));
        }
    }
    out
}

/// Random labelled scores with deliberate ties.
pub fn random_predictions(rng: &mut ChaCha8Rng) -> Vec<LabeledPrediction> {
    let n = rng.gen_range(2..60);
    let mut preds: Vec<LabeledPrediction> = (0..n)
        .map(|_| {
            let truth = if rng.gen_bool(0.5) { PairLabel::Real } else { PairLabel::Fake };
            let score = (rng.gen_range(0..11) as f64) / 10.0;
            let predicted = if rng.gen_bool(0.5) { PairLabel::Real } else { PairLabel::Fake };
            LabeledPrediction {
                true_label: truth,
                predicted_label: predicted,
                score,
            }
        })
        .collect();
    // Both classes present.
    preds[0].true_label = PairLabel::Real;
    preds[1].true_label = PairLabel::Fake;
    preds
}

pub fn brute_accuracy(p: &[LabeledPrediction]) -> f64 {
    p.iter().filter(|x| x.true_label == x.predicted_label).count() as f64 / p.len() as f64
}

pub fn brute_far_frr(p: &[LabeledPrediction]) -> (f64, f64) {
    let fakes: Vec<_> = p.iter().filter(|x| x.true_label == PairLabel::Fake).collect();
    let reals: Vec<_> = p.iter().filter(|x| x.true_label == PairLabel::Real).collect();
    let far = fakes.iter().filter(|x| x.predicted_label == PairLabel::Real).count() as f64 / fakes.len() as f64;
    let frr = reals.iter().filter(|x| x.predicted_label == PairLabel::Fake).count() as f64 / reals.len() as f64;
    (far, frr)
}

/// Pairwise definition: P(score_real > score_fake) + P(tie) / 2.
pub fn brute_auc(p: &[LabeledPrediction]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for r in p.iter().filter(|x| x.true_label == PairLabel::Real) {
        for f in p.iter().filter(|x| x.true_label == PairLabel::Fake) {
            pairs += 1.0;
            if r.score > f.score {
                wins += 1.0;
            } else if r.score == f.score {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
