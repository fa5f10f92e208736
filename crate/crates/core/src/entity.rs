//! The closed set of entity types and name canonicalization shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Entity categories for smuggling-network graphs, declared in canonical
/// resolution/extraction order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    Person,
    Location,
    Routes,
    Organization,
    MeansOfTransportation,
    MeansOfCommunication,
    SmuggledItems,
}

impl EntityType {
    pub const ALL: [EntityType; 7] = [
        EntityType::Person,
        EntityType::Location,
        EntityType::Routes,
        EntityType::Organization,
        EntityType::MeansOfTransportation,
        EntityType::MeansOfCommunication,
        EntityType::SmuggledItems,
    ];

    /// Human-readable label used in prompts.
    pub fn label(self) -> &'static str {
        match self {
            EntityType::Person => "Person",
            EntityType::Location => "Location",
            EntityType::Routes => "Routes",
            EntityType::Organization => "Organization",
            EntityType::MeansOfTransportation => "Means of Transportation",
            EntityType::MeansOfCommunication => "Means of Communication",
            EntityType::SmuggledItems => "Smuggled Items",
        }
    }

    /// Upper-case tag used in extraction output and node ids.
    pub fn tag(self) -> &'static str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::Location => "LOCATION",
            EntityType::Routes => "ROUTES",
            EntityType::Organization => "ORGANIZATION",
            EntityType::MeansOfTransportation => "MEANS_OF_TRANSPORTATION",
            EntityType::MeansOfCommunication => "MEANS_OF_COMMUNICATION",
            EntityType::SmuggledItems => "SMUGGLED_ITEMS",
        }
    }

    /// Lower-case slug used in file names.
    pub fn slug(self) -> String {
        self.tag().to_ascii_lowercase()
    }

    /// Zero-based position in the canonical order.
    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// Lenient parse: accepts labels, tags, slugs and camel case, ignoring case,
    /// spaces, underscores and hyphens. "Route" is accepted for Routes.
    pub fn parse(s: &str) -> Option<EntityType> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_uppercase)
            .collect();
        let t = match key.as_str() {
            "PERSON" | "PERSONS" | "PEOPLE" => EntityType::Person,
            "LOCATION" | "LOCATIONS" => EntityType::Location,
            "ROUTES" | "ROUTE" => EntityType::Routes,
            "ORGANIZATION" | "ORGANIZATIONS" | "ORGANISATION" => EntityType::Organization,
            "MEANSOFTRANSPORTATION" => EntityType::MeansOfTransportation,
            "MEANSOFCOMMUNICATION" => EntityType::MeansOfCommunication,
            "SMUGGLEDITEMS" | "SMUGGLEDITEM" => EntityType::SmuggledItems,
            _ => return None,
        };
        Some(t)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::parse(s).ok_or_else(|| format!("unknown entity type {s:?}"))
    }
}

/// Type of a graph node: one of the seven entity types, or a placeholder for
/// relationship endpoints that were never extracted as entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Entity(EntityType),
    Untyped,
}

impl NodeType {
    pub fn tag(self) -> &'static str {
        match self {
            NodeType::Entity(t) => t.tag(),
            NodeType::Untyped => "UNTYPED",
        }
    }

    pub fn parse(s: &str) -> Option<NodeType> {
        if s.trim().eq_ignore_ascii_case("UNTYPED") {
            Some(NodeType::Untyped)
        } else {
            EntityType::parse(s).map(NodeType::Entity)
        }
    }

    pub fn is_placeholder(self) -> bool {
        matches!(self, NodeType::Untyped)
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl From<EntityType> for NodeType {
    fn from(t: EntityType) -> Self {
        NodeType::Entity(t)
    }
}

/// Trim, collapse internal whitespace, uppercase.
pub fn canonical_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for (i, word) in name.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_uppercase));
    }
    out
}

/// Trim and collapse whitespace, keeping case.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whole-word containment: `term`'s alphanumeric words occur contiguously in
/// `name`'s alphanumeric words. Both are compared after uppercasing.
pub fn contains_whole_words(name: &str, term: &str) -> bool {
    let words = |s: &str| -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| w.chars().flat_map(char::to_uppercase).collect())
            .collect()
    };
    let hay = words(name);
    let needle = words(term);
    if needle.is_empty() || needle.len() > hay.len() {
        return false;
    }
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}
