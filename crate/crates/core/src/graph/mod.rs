//! Per-(case, configuration) knowledge graph: exact-match entity merge, edge
//! resolution, structural statistics and export.

mod graphml;
mod tabular;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use graphml::{export_graphml, import_graphml, read_graphml, write_graphml};
pub use tabular::{CsvWriter, TabularRegistry, TabularWriter};

use crate::entity::{EntityType, NodeType};
use crate::error::{Error, Result};
use crate::extraction::{RawEntityRecord, RawRelationshipRecord};
use crate::runner::ConfigId;

/// Merge key: normalized name plus type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey {
    pub name: String,
    pub node_type: NodeType,
}

impl NodeKey {
    pub fn new(name: impl Into<String>, node_type: impl Into<NodeType>) -> Self {
        NodeKey {
            name: name.into(),
            node_type: node_type.into(),
        }
    }

    /// `NAME::TYPE`
    pub fn id(&self) -> String {
        format!("{}::{}", self.name, self.node_type.tag())
    }

    pub fn parse_id(id: &str) -> Option<NodeKey> {
        let (name, tag) = id.rsplit_once("::")?;
        Some(NodeKey::new(name, NodeType::parse(tag)?))
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.name, self.node_type.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub chunk_id: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub key: NodeKey,
    pub display_name: String,
    /// In (chunk_id, arrival) order. Empty for placeholders.
    pub mentions: Vec<Mention>,
    pub degree: usize,
}

impl EntityNode {
    pub fn id(&self) -> String {
        self.key.id()
    }

    pub fn normalized_name(&self) -> &str {
        &self.key.name
    }

    pub fn node_type(&self) -> NodeType {
        self.key.node_type
    }

    pub fn is_placeholder(&self) -> bool {
        self.key.node_type.is_placeholder()
    }

    pub fn mention_chunks(&self) -> Vec<usize> {
        self.mentions.iter().map(|m| m.chunk_id).collect()
    }

    pub fn descriptions(&self) -> Vec<&str> {
        self.mentions.iter().map(|m| m.description.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipEdge {
    pub source: NodeKey,
    pub target: NodeKey,
    pub description: String,
    pub strength: Option<f64>,
    pub chunk_id: usize,
}

impl RelationshipEdge {
    fn sort_key(&self) -> (&NodeKey, &NodeKey, usize, &str, u64) {
        (
            &self.source,
            &self.target,
            self.chunk_id,
            &self.description,
            self.strength.map_or(0, f64::to_bits),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub chunk_count: usize,
    pub warning_count: usize,
    pub self_loops_dropped: usize,
    pub empty_names_dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    pub case_id: String,
    pub config_id: ConfigId,
    pub nodes: BTreeMap<NodeKey, EntityNode>,
    /// Directed as extracted; sorted by (source, target, chunk, description).
    pub edges: Vec<RelationshipEdge>,
    pub metadata: BuildMetadata,
}

impl KnowledgeGraph {
    pub fn node(&self, key: &NodeKey) -> Option<&EntityNode> {
        self.nodes.get(key)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Entity and relationship records that rebuild this graph.
    pub fn to_records(&self) -> (Vec<RawEntityRecord>, Vec<RawRelationshipRecord>) {
        let mut entities = Vec::new();
        for n in self.nodes.values() {
            if let NodeType::Entity(t) = n.key.node_type {
                for m in &n.mentions {
                    entities.push(RawEntityRecord::new(&n.display_name, t, &m.description, m.chunk_id));
                }
            }
        }
        let rels = self
            .edges
            .iter()
            .map(|e| {
                RawRelationshipRecord::new(
                    &self.nodes[&e.source].display_name,
                    &self.nodes[&e.target].display_name,
                    &e.description,
                    e.strength,
                    e.chunk_id,
                )
            })
            .collect();
        (entities, rels)
    }

    fn recompute_degrees(&mut self) {
        for n in self.nodes.values_mut() {
            n.degree = 0;
        }
        for e in &self.edges {
            for k in [&e.source, &e.target] {
                if let Some(n) = self.nodes.get_mut(k) {
                    n.degree += 1;
                }
            }
        }
    }
}

/// Merges entity records on (normalized name, type) and attaches
/// relationships. Endpoints resolve to a node with the exact normalized name,
/// taking the lowest type in canonical order when several exist; otherwise an
/// UNTYPED placeholder is created. Self-loops and empty names are dropped and
/// counted.
pub fn build_graph(
    entities: &[RawEntityRecord],
    relationships: &[RawRelationshipRecord],
    case_id: &str,
    config_id: ConfigId,
) -> KnowledgeGraph {
    let mut meta = BuildMetadata::default();

    let mut ents: Vec<&RawEntityRecord> = entities.iter().collect();
    ents.sort_by_key(|e| e.chunk_id);
    let mut nodes: BTreeMap<NodeKey, EntityNode> = BTreeMap::new();
    // earliest chunk that named each node, for choosing a display name
    let mut first_chunk: BTreeMap<NodeKey, usize> = BTreeMap::new();
    for e in ents {
        if e.normalized_name.is_empty() {
            meta.empty_names_dropped += 1;
            continue;
        }
        let key = NodeKey::new(e.normalized_name.clone(), e.entity_type);
        let node = nodes.entry(key.clone()).or_insert_with(|| EntityNode {
            key: key.clone(),
            display_name: e.name.clone(),
            mentions: Vec::new(),
            degree: 0,
        });
        if first_chunk.get(&key).is_none_or(|&c| c == e.chunk_id) && e.name < node.display_name {
            node.display_name = e.name.clone();
        }
        first_chunk.entry(key).or_insert(e.chunk_id);
        node.mentions.push(Mention {
            chunk_id: e.chunk_id,
            description: e.description.clone(),
        });
    }

    let mut by_name: BTreeMap<String, EntityType> = BTreeMap::new();
    for k in nodes.keys() {
        if let NodeType::Entity(t) = k.node_type {
            by_name
                .entry(k.name.clone())
                .and_modify(|cur| *cur = (*cur).min(t))
                .or_insert(t);
        }
    }

    let mut rels: Vec<&RawRelationshipRecord> = relationships.iter().collect();
    rels.sort_by_key(|r| r.chunk_id);
    let mut placeholder_first: BTreeMap<NodeKey, usize> = BTreeMap::new();
    let mut edges = Vec::new();
    for r in rels {
        if r.source_normalized.is_empty() || r.target_normalized.is_empty() {
            meta.empty_names_dropped += 1;
            continue;
        }
        if r.source_normalized == r.target_normalized {
            meta.self_loops_dropped += 1;
            continue;
        }
        let mut resolve = |name: &str, display: &str| -> NodeKey {
            if let Some(t) = by_name.get(name) {
                return NodeKey::new(name, *t);
            }
            let key = NodeKey::new(name, NodeType::Untyped);
            let node = nodes.entry(key.clone()).or_insert_with(|| EntityNode {
                key: key.clone(),
                display_name: display.to_string(),
                mentions: Vec::new(),
                degree: 0,
            });
            if placeholder_first.get(&key).is_none_or(|&c| c == r.chunk_id) && display < node.display_name.as_str() {
                node.display_name = display.to_string();
            }
            placeholder_first.entry(key.clone()).or_insert(r.chunk_id);
            key
        };
        let source = resolve(&r.source_normalized, &r.source_name);
        let target = resolve(&r.target_normalized, &r.target_name);
        edges.push(RelationshipEdge {
            source,
            target,
            description: r.description.clone(),
            strength: r.strength,
            chunk_id: r.chunk_id,
        });
    }
    for n in nodes.values_mut() {
        n.mentions
            .sort_by(|a, b| (a.chunk_id, &a.description).cmp(&(b.chunk_id, &b.description)));
    }
    edges.sort_by(|a, b| {
        a.sort_key()
            .partial_cmp(&b.sort_key())
            .expect("edge keys are totally ordered")
    });
    meta.chunk_count = entities
        .iter()
        .map(|e| e.chunk_id)
        .chain(relationships.iter().map(|r| r.chunk_id))
        .collect::<BTreeSet<_>>()
        .len();

    let mut g = KnowledgeGraph {
        case_id: case_id.to_string(),
        config_id,
        nodes,
        edges,
        metadata: meta,
    };
    g.recompute_degrees();
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub relationship_count: usize,
    /// relationship_count / node_count at full precision.
    pub rn_ratio: f64,
    pub isolated_node_count: usize,
    /// Unordered endpoint pairs, parallel edges counted once.
    pub distinct_pair_count: usize,
    pub placeholder_count: usize,
}

pub fn graph_stats(g: &KnowledgeGraph) -> Result<GraphStats> {
    if g.nodes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let pairs: BTreeSet<(&NodeKey, &NodeKey)> = g
        .edges
        .iter()
        .map(|e| {
            if e.source <= e.target {
                (&e.source, &e.target)
            } else {
                (&e.target, &e.source)
            }
        })
        .collect();
    Ok(GraphStats {
        node_count: g.nodes.len(),
        relationship_count: g.edges.len(),
        rn_ratio: g.edges.len() as f64 / g.nodes.len() as f64,
        isolated_node_count: g.nodes.values().filter(|n| n.degree == 0).count(),
        distinct_pair_count: pairs.len(),
        placeholder_count: g.nodes.values().filter(|n| n.is_placeholder()).count(),
    })
}
