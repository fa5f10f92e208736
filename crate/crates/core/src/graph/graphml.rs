//! GraphML 1.0 export and import. Output is a pure function of the graph:
//! nodes sorted by id, edges in graph order, no timestamps.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{BuildMetadata, EntityNode, KnowledgeGraph, Mention, NodeKey, RelationshipEdge};
use crate::error::{Error, IoContext, Result};

const NODE_KEYS: [&str; 6] = ["label", "type", "description", "degree", "mention_chunks", "mention_count"];
const EDGE_KEYS: [&str; 3] = ["description", "strength", "chunk_id"];
const GRAPH_KEYS: [&str; 6] = [
    "case_id",
    "config_id",
    "chunk_count",
    "warning_count",
    "self_loops_dropped",
    "empty_names_dropped",
];

fn key_type(name: &str) -> &'static str {
    match name {
        "degree" | "mention_count" | "chunk_id" | "chunk_count" | "warning_count"
        | "self_loops_dropped" | "empty_names_dropped" => "int",
        "strength" => "double",
        _ => "string",
    }
}

fn data(out: &mut String, indent: &str, key: &str, value: &str) {
    let _ = writeln!(out, "{indent}<data key=\"{key}\">{}</data>", escape(value));
}

/// Serializes `g` to a GraphML document.
pub fn write_graphml(g: &KnowledgeGraph) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(
        "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" \
         xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns \
         http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n",
    );
    for (scope, keys) in [("graph", &GRAPH_KEYS[..]), ("node", &NODE_KEYS[..]), ("edge", &EDGE_KEYS[..])] {
        for k in keys {
            let _ = writeln!(
                out,
                "  <key id=\"{scope}_{k}\" for=\"{scope}\" attr.name=\"{k}\" attr.type=\"{}\"/>",
                key_type(k)
            );
        }
    }
    let _ = writeln!(
        out,
        "  <graph id=\"{}\" edgedefault=\"directed\">",
        escape(format!("{}.{}", g.case_id, g.config_id).as_str())
    );
    let m = &g.metadata;
    for (k, v) in GRAPH_KEYS.iter().zip([
        g.case_id.clone(),
        g.config_id.to_string(),
        m.chunk_count.to_string(),
        m.warning_count.to_string(),
        m.self_loops_dropped.to_string(),
        m.empty_names_dropped.to_string(),
    ]) {
        data(&mut out, "    ", &format!("graph_{k}"), &v);
    }

    let mut nodes: Vec<(String, &EntityNode)> = g.nodes.values().map(|n| (n.id(), n)).collect();
    nodes.sort_by(|a, b| a.0.cmp(&b.0));
    for (id, n) in nodes {
        let _ = writeln!(out, "    <node id=\"{}\">", escape(id.as_str()));
        let chunks: Vec<String> = n.mentions.iter().map(|m| m.chunk_id.to_string()).collect();
        for (k, v) in NODE_KEYS.iter().zip([
            n.display_name.clone(),
            n.node_type().tag().to_string(),
            n.descriptions().join("\n"),
            n.degree.to_string(),
            chunks.join(","),
            n.mentions.len().to_string(),
        ]) {
            data(&mut out, "      ", &format!("node_{k}"), &v);
        }
        out.push_str("    </node>\n");
    }
    for (i, e) in g.edges.iter().enumerate() {
        let _ = writeln!(
            out,
            "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\">",
            escape(e.source.id().as_str()),
            escape(e.target.id().as_str())
        );
        data(&mut out, "      ", "edge_description", &e.description);
        if let Some(s) = e.strength {
            data(&mut out, "      ", "edge_strength", &s.to_string());
        }
        data(&mut out, "      ", "edge_chunk_id", &e.chunk_id.to_string());
        out.push_str("    </edge>\n");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

pub fn export_graphml(g: &KnowledgeGraph, path: &Path) -> Result<()> {
    fs::write(path, write_graphml(g)).at(path)
}

pub fn import_graphml(path: &Path) -> Result<KnowledgeGraph> {
    read_graphml(&fs::read_to_string(path).at(path)?)
}

#[derive(Default)]
struct Element {
    id: String,
    source: String,
    target: String,
    data: HashMap<String, String>,
}

fn attr(e: &BytesStart<'_>, name: &str) -> Result<String> {
    match e.try_get_attribute(name).map_err(|x| Error::GraphmlParse(x.to_string()))? {
        Some(a) => Ok(a
            .unescape_value()
            .map_err(|x| Error::GraphmlParse(x.to_string()))?
            .into_owned()),
        None => Ok(String::new()),
    }
}

/// Parses a document written by [`write_graphml`].
pub fn read_graphml(xml: &str) -> Result<KnowledgeGraph> {
    let bad = |m: String| Error::GraphmlParse(m);
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(false);

    let mut graph_data: HashMap<String, String> = HashMap::new();
    let mut nodes: Vec<Element> = Vec::new();
    let mut edges: Vec<Element> = Vec::new();
    let mut current: Option<(bool, Element)> = None;
    let mut data_key: Option<String> = None;
    let mut text = String::new();

    loop {
        match reader.read_event().map_err(|e| bad(e.to_string()))? {
            Event::Start(e) if e.name().as_ref() == b"data" => {
                data_key = Some(attr(&e, "key")?);
                text.clear();
            }
            Event::Empty(e) if e.name().as_ref() == b"data" => {
                let k = attr(&e, "key")?;
                match current.as_mut() {
                    Some((_, el)) => el.data.insert(k, String::new()),
                    None => graph_data.insert(k, String::new()),
                };
            }
            Event::Start(e) if e.name().as_ref() == b"node" => {
                current = Some((true, Element { id: attr(&e, "id")?, ..Default::default() }));
            }
            Event::Start(e) if e.name().as_ref() == b"edge" => {
                let el = Element {
                    id: attr(&e, "id")?,
                    source: attr(&e, "source")?,
                    target: attr(&e, "target")?,
                    data: HashMap::new(),
                };
                current = Some((false, el));
            }
            Event::Text(t) if data_key.is_some() => {
                text.push_str(&t.unescape().map_err(|e| bad(e.to_string()))?);
            }
            Event::CData(t) if data_key.is_some() => {
                text.push_str(&String::from_utf8_lossy(&t));
            }
            Event::End(e) => match e.name().as_ref() {
                b"data" => {
                    let k = data_key.take().unwrap_or_default();
                    let v = std::mem::take(&mut text);
                    match current.as_mut() {
                        Some((_, el)) => el.data.insert(k, v),
                        None => graph_data.insert(k, v),
                    };
                }
                b"node" | b"edge" => match current.take() {
                    Some((true, el)) => nodes.push(el),
                    Some((false, el)) => edges.push(el),
                    None => return Err(bad("unbalanced node/edge element".into())),
                },
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }

    let get = |m: &HashMap<String, String>, k: &str| m.get(k).cloned().unwrap_or_default();
    let int = |m: &HashMap<String, String>, k: &str| -> Result<usize> {
        match m.get(k) {
            None => Ok(0),
            Some(v) => v.trim().parse().map_err(|_| bad(format!("{k}: not an integer: {v:?}"))),
        }
    };

    let config_id = get(&graph_data, "graph_config_id").parse()?;
    let metadata = BuildMetadata {
        chunk_count: int(&graph_data, "graph_chunk_count")?,
        warning_count: int(&graph_data, "graph_warning_count")?,
        self_loops_dropped: int(&graph_data, "graph_self_loops_dropped")?,
        empty_names_dropped: int(&graph_data, "graph_empty_names_dropped")?,
    };

    let mut node_map = BTreeMap::new();
    for el in nodes {
        let key = NodeKey::parse_id(&el.id).ok_or_else(|| bad(format!("bad node id {:?}", el.id)))?;
        let chunks_s = get(&el.data, "node_mention_chunks");
        let chunks: Vec<usize> = if chunks_s.is_empty() {
            Vec::new()
        } else {
            chunks_s
                .split(',')
                .map(|c| c.trim().parse().map_err(|_| bad(format!("bad chunk list {chunks_s:?}"))))
                .collect::<Result<_>>()?
        };
        let desc = get(&el.data, "node_description");
        let mut descs = desc.split('\n');
        let mentions = chunks
            .into_iter()
            .map(|chunk_id| Mention {
                chunk_id,
                description: descs.next().unwrap_or_default().to_string(),
            })
            .collect();
        let node = EntityNode {
            key: key.clone(),
            display_name: get(&el.data, "node_label"),
            mentions,
            degree: int(&el.data, "node_degree")?,
        };
        if node_map.insert(key, node).is_some() {
            return Err(bad(format!("duplicate node {:?}", el.id)));
        }
    }

    let mut edge_list = Vec::new();
    for el in edges {
        let endpoint = |id: &str| -> Result<NodeKey> {
            let k = NodeKey::parse_id(id).ok_or_else(|| bad(format!("bad edge endpoint {id:?}")))?;
            if !node_map.contains_key(&k) {
                return Err(bad(format!("edge {} references unknown node {id:?}", el.id)));
            }
            Ok(k)
        };
        let strength = match el.data.get("edge_strength") {
            Some(s) => Some(s.trim().parse::<f64>().map_err(|_| bad(format!("bad strength {s:?}")))?),
            None => None,
        };
        edge_list.push(RelationshipEdge {
            source: endpoint(&el.source)?,
            target: endpoint(&el.target)?,
            description: get(&el.data, "edge_description"),
            strength,
            chunk_id: int(&el.data, "edge_chunk_id")?,
        });
    }

    Ok(KnowledgeGraph {
        case_id: get(&graph_data, "graph_case_id"),
        config_id,
        nodes: node_map,
        edges: edge_list,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityType;
    use crate::extraction::{RawEntityRecord, RawRelationshipRecord};
    use crate::graph::build_graph;
    use crate::runner::ConfigId;

    fn sample() -> KnowledgeGraph {
        build_graph(
            &[
                RawEntityRecord::new("Smith & Sons <Trucking>", EntityType::Organization, "a \"firm\"", 0),
                RawEntityRecord::new("Ann Lee", EntityType::Person, "driver", 0),
                RawEntityRecord::new("Ann Lee", EntityType::Person, "", 2),
            ],
            &[
                RawRelationshipRecord::new("Ann Lee", "Smith & Sons <Trucking>", "works for", Some(7.5), 0),
                RawRelationshipRecord::new("Ann Lee", "Laredo", "drove to", None, 2),
            ],
            "case 'A'",
            ConfigId::NoCoref,
        )
    }

    #[test]
    fn minimal_document() {
        let g = build_graph(
            &[RawEntityRecord::new("Stone", EntityType::Person, "d", 0)],
            &[],
            "c",
            ConfigId::Corekg,
        );
        let xml = write_graphml(&g);
        assert_eq!(xml.matches("<node ").count(), 1);
        assert_eq!(xml.matches("<edge ").count(), 0);
    }

    #[test]
    fn escaping() {
        let xml = write_graphml(&sample());
        assert!(xml.contains("Smith &amp; Sons &lt;Trucking&gt;"));
        assert!(!xml.contains("Smith & Sons"));
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let g = sample();
        let xml = write_graphml(&g);
        let back = read_graphml(&xml).unwrap();
        assert_eq!(back, g);
        assert_eq!(write_graphml(&back), xml);
    }

    #[test]
    fn dangling_edge_rejected() {
        let xml = write_graphml(&sample()).replace("target=\"LAREDO::UNTYPED\"", "target=\"NOWHERE::PERSON\"");
        assert!(matches!(read_graphml(&xml), Err(Error::GraphmlParse(_))));
    }
}
