//! Duplicate-node clustering: fuzzy links within a type, connected
//! components, then expert overrides.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::overrides::{Directive, Overrides};
use super::similarity::partial_ratio;
use crate::entity::NodeType;
use crate::error::{Error, Result};
use crate::graph::{EntityNode, KnowledgeGraph, NodeKey};

pub const DEFAULT_THRESHOLD: f64 = 75.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub node_type: NodeType,
    /// Sorted node ids, at least two.
    pub members: Vec<String>,
    pub representative: String,
}

impl DuplicateCluster {
    pub fn duplicates(&self) -> usize {
        self.members.len() - 1
    }
}

/// Σ(|C| − 1)
pub fn duplicate_count(clusters: &[DuplicateCluster]) -> usize {
    clusters.iter().map(DuplicateCluster::duplicates).sum()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the threshold graph within each type, as sets of
/// node keys (singletons included).
pub fn similarity_components(g: &KnowledgeGraph, threshold: f64) -> Vec<BTreeSet<NodeKey>> {
    let mut by_type: BTreeMap<NodeType, Vec<&NodeKey>> = BTreeMap::new();
    for k in g.nodes.keys() {
        by_type.entry(k.node_type).or_default().push(k);
    }
    let mut out = Vec::new();
    for keys in by_type.values() {
        let n = keys.len();
        let links: Vec<(usize, usize)> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                (i + 1..n)
                    .filter(move |&j| partial_ratio(&keys[i].name, &keys[j].name) >= threshold)
                    .map(move |j| (i, j))
            })
            .collect();
        let mut uf = UnionFind::new(n);
        for (i, j) in links {
            uf.union(i, j);
        }
        let mut comps: BTreeMap<usize, BTreeSet<NodeKey>> = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            comps.entry(uf.find(i)).or_default().insert((*k).clone());
        }
        out.extend(comps.into_values());
    }
    out
}

/// Most mentions, then longest display name, then smallest id.
fn representative(nodes: &[&EntityNode]) -> String {
    nodes
        .iter()
        .min_by(|a, b| {
            b.mentions
                .len()
                .cmp(&a.mentions.len())
                .then(b.display_name.chars().count().cmp(&a.display_name.chars().count()))
                .then(a.id().cmp(&b.id()))
        })
        .map(|n| n.id())
        .expect("cluster has members")
}

/// Clusters duplicate nodes: pairs of one type scoring at least `threshold`
/// are linked, components with two or more members become clusters, and the
/// override directives are applied in order.
pub fn cluster_duplicates(
    g: &KnowledgeGraph,
    threshold: f64,
    overrides: &Overrides,
) -> Result<Vec<DuplicateCluster>> {
    if !(threshold > 0.0 && threshold <= 100.0) {
        return Err(Error::InvalidConfig(format!("threshold {threshold} outside (0, 100]")));
    }
    overrides.check_ids(g)?;

    let mut groups = similarity_components(g, threshold);
    let mut index: BTreeMap<NodeKey, usize> = BTreeMap::new();
    for (i, grp) in groups.iter().enumerate() {
        for k in grp {
            index.insert(k.clone(), i);
        }
    }
    let key = |id: &str| NodeKey::parse_id(id).expect("ids checked above");
    for d in &overrides.directives {
        match d {
            Directive::Merge(ids) => {
                let keys: Vec<NodeKey> = ids.iter().map(|id| key(id)).collect();
                if keys.iter().any(|k| k.node_type != keys[0].node_type) {
                    return Err(Error::InvalidConfig(format!(
                        "override merges across entity types: {}",
                        ids.join(", ")
                    )));
                }
                let target = index[&keys[0]];
                for k in &keys[1..] {
                    let from = index[k];
                    if from != target {
                        let moved = std::mem::take(&mut groups[from]);
                        for m in &moved {
                            index.insert(m.clone(), target);
                        }
                        groups[target].extend(moved);
                    }
                }
            }
            Directive::Split(id) => {
                let k = key(id);
                let from = index[&k];
                if groups[from].len() > 1 {
                    groups[from].remove(&k);
                    index.insert(k.clone(), groups.len());
                    groups.push(BTreeSet::from([k]));
                }
            }
            Directive::Noisy(_) | Directive::Clean(_) => {}
        }
    }

    let mut clusters: Vec<DuplicateCluster> = groups
        .into_iter()
        .filter(|grp| grp.len() >= 2)
        .map(|grp| {
            let nodes: Vec<&EntityNode> = grp.iter().map(|k| &g.nodes[k]).collect();
            let mut members: Vec<String> = grp.iter().map(NodeKey::id).collect();
            members.sort();
            DuplicateCluster {
                node_type: grp.first().expect("non-empty").node_type,
                representative: representative(&nodes),
                members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| (a.node_type, &a.members).cmp(&(b.node_type, &b.members)));
    Ok(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityType::{self, *};
    use crate::extraction::RawEntityRecord;
    use crate::graph::build_graph;
    use crate::runner::ConfigId;

    fn graph(names: &[(&str, EntityType)]) -> KnowledgeGraph {
        let recs: Vec<_> = names.iter().map(|(n, t)| RawEntityRecord::new(n, *t, "", 0)).collect();
        build_graph(&recs, &[], "c", ConfigId::Corekg)
    }

    #[test]
    fn substring_chain_forms_one_cluster() {
        let g = graph(&[("STONE", Person), ("DEFENDANT STONE", Person), ("RICHARD STONE", Person)]);
        let c = cluster_duplicates(&g, 75.0, &Overrides::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members.len(), 3);
        assert_eq!(duplicate_count(&c), 2);
        assert_eq!(c[0].representative, "DEFENDANT STONE::PERSON");
    }

    #[test]
    fn types_never_mix() {
        let g = graph(&[("STONE", Person), ("STONE", Location)]);
        assert!(cluster_duplicates(&g, 75.0, &Overrides::default()).unwrap().is_empty());
    }

    #[test]
    fn overrides_merge_and_split() {
        let g = graph(&[("STONE", Person), ("RICHARD STONE", Person), ("ANN LEE", Person), ("BOB", Person)]);
        let o = Overrides::parse("merge ANN LEE::PERSON BOB::PERSON\nsplit STONE::PERSON\n").unwrap();
        let c = cluster_duplicates(&g, 75.0, &o).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members, ["ANN LEE::PERSON", "BOB::PERSON"]);
        let o = Overrides::parse("merge ANN LEE::PERSON STONE::PERSON").unwrap();
        let c = cluster_duplicates(&g, 75.0, &o).unwrap();
        assert_eq!(duplicate_count(&c), 2);
    }

    #[test]
    fn unknown_override_ids_listed() {
        let g = graph(&[("STONE", Person)]);
        let o = Overrides::parse("split GHOST::PERSON\nnoisy STONE::LOCATION").unwrap();
        match cluster_duplicates(&g, 75.0, &o) {
            Err(Error::UnknownOverrideIds(ids)) => assert_eq!(ids, ["GHOST::PERSON", "STONE::LOCATION"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_threshold() {
        let g = graph(&[("STONE", Person)]);
        assert!(cluster_duplicates(&g, 0.0, &Overrides::default()).is_err());
        assert!(cluster_duplicates(&g, 100.5, &Overrides::default()).is_err());
    }
}
