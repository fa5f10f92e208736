//! Row-oriented twins of the graph: `<stem>.nodes.csv` and `<stem>.edges.csv`.
//!
//! CSV follows RFC 4180: comma separated, a field is wrapped in double quotes
//! only when it contains a comma, quote or line break, and embedded quotes are
//! doubled. A header row is always written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::KnowledgeGraph;
use crate::error::{Error, Result};

pub const NODE_COLUMNS: [&str; 5] = ["id", "label", "type", "degree", "mention_count"];
pub const EDGE_COLUMNS: [&str; 5] = ["source", "target", "description", "strength", "chunk_id"];

pub fn node_rows(g: &KnowledgeGraph) -> Vec<[String; 5]> {
    let mut rows: Vec<[String; 5]> = g
        .nodes
        .values()
        .map(|n| {
            [
                n.id(),
                n.display_name.clone(),
                n.node_type().tag().to_string(),
                n.degree.to_string(),
                n.mentions.len().to_string(),
            ]
        })
        .collect();
    rows.sort();
    rows
}

pub fn edge_rows(g: &KnowledgeGraph) -> Vec<[String; 5]> {
    g.edges
        .iter()
        .map(|e| {
            [
                e.source.id(),
                e.target.id(),
                e.description.clone(),
                e.strength.map(|s| s.to_string()).unwrap_or_default(),
                e.chunk_id.to_string(),
            ]
        })
        .collect()
}

/// A tabular export format.
pub trait TabularWriter: Send + Sync {
    fn name(&self) -> &str;
    /// Writes the node and edge tables under `dir`, returning the paths.
    fn write(&self, g: &KnowledgeGraph, dir: &Path, stem: &str) -> Result<Vec<PathBuf>>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CsvWriter;

impl CsvWriter {
    fn table(path: &Path, header: &[&str], rows: &[[String; 5]]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidConfig(format!("{}: {other:?}", path.display())),
    }
}

impl TabularWriter for CsvWriter {
    fn name(&self) -> &str {
        "csv"
    }

    fn write(&self, g: &KnowledgeGraph, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let nodes = dir.join(format!("{stem}.nodes.csv"));
        let edges = dir.join(format!("{stem}.edges.csv"));
        Self::table(&nodes, &NODE_COLUMNS, &node_rows(g))?;
        Self::table(&edges, &EDGE_COLUMNS, &edge_rows(g))?;
        Ok(vec![nodes, edges])
    }
}

/// Tabular writers selectable by name. Only `csv` ships; a columnar writer
/// can be registered behind the same row schema.
pub struct TabularRegistry {
    writers: BTreeMap<String, Arc<dyn TabularWriter>>,
}

impl TabularRegistry {
    pub fn empty() -> Self {
        TabularRegistry {
            writers: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(CsvWriter));
        r
    }

    pub fn register(&mut self, w: Arc<dyn TabularWriter>) {
        self.writers.insert(w.name().to_string(), w);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn TabularWriter>> {
        self.writers.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: "tabular writer",
            name: name.to_string(),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.writers.keys().map(String::as_str).collect()
    }
}

impl Default for TabularRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;
    use crate::entity::EntityType;
    use crate::extraction::{RawEntityRecord, RawRelationshipRecord};
    use crate::graph::build_graph;
    use crate::runner::ConfigId;

    #[test]
    fn row_counts_quoting_and_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_graph(
            &[
                RawEntityRecord::new("Smith, Jones", EntityType::Person, "", 0),
                RawEntityRecord::new("Laredo", EntityType::Location, "", 0),
            ],
            &[RawRelationshipRecord::new("Smith, Jones", "Laredo", "went \"south\"", Some(3.0), 0)],
            "c",
            ConfigId::Corekg,
        );
        let w = TabularRegistry::default().get("csv").unwrap();
        let paths = w.write(&g, dir.path(), "c.corekg").unwrap();
        let nodes = fs::read_to_string(&paths[0]).unwrap();
        let edges = fs::read_to_string(&paths[1]).unwrap();
        assert_eq!(nodes.lines().count(), 3);
        assert_eq!(edges.lines().count(), 2);
        assert!(nodes.contains("\"SMITH, JONES::PERSON\",\"Smith, Jones\""));
        assert!(edges.contains("\"went \"\"south\"\"\""));

        let lonely = build_graph(&[RawEntityRecord::new("A", EntityType::Person, "", 0)], &[], "c", ConfigId::Corekg);
        let paths = CsvWriter.write(&lonely, dir.path(), "lonely").unwrap();
        assert_eq!(fs::read_to_string(&paths[1]).unwrap(), "source,target,description,strength,chunk_id\n");
        assert!(TabularRegistry::default().get("parquet").is_err());
    }
}
