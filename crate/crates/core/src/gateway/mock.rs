//! Deterministic offline backends.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use super::{BackendKind, CompletionBackend, CompletionRequest, GatewayError, StageTag};
use crate::coref::wrap_resolved;
use crate::entity::{canonical_name, EntityType};
use crate::error::{Error, IoContext, Result};
use crate::extraction::{serialize_records, Delimiters, RawEntityRecord, RawRelationshipRecord};

/// Returns the document slot back unchanged: sentinel-wrapped for coref
/// passes, an empty record list for extraction.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoBackend;

impl CompletionBackend for EchoBackend {
    fn name(&self) -> &str {
        "echo"
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        Ok(match req.stage_tag {
            StageTag::Coref(_) => wrap_resolved(&req.input_text),
            _ => Delimiters::default().completion_marker,
        })
    }
}

/// Looks responses up by request digest.
#[derive(Debug, Default, Clone)]
pub struct ScriptedBackend {
    fixtures: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new(fixtures: HashMap<String, String>) -> Self {
        ScriptedBackend { fixtures }
    }

    /// Loads every `<digest>.txt` file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut fixtures = HashMap::new();
        for entry in fs::read_dir(dir).at(dir)? {
            let path = entry.at(dir)?.path();
            if path.extension().is_some_and(|e| e == "txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    fixtures.insert(stem.to_string(), fs::read_to_string(&path).at(&path)?);
                }
            }
        }
        Ok(ScriptedBackend { fixtures })
    }

    pub fn lookup(&self, req: &CompletionRequest) -> Option<&String> {
        self.fixtures.get(&req.digest())
    }
}

impl CompletionBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        self.lookup(req).cloned().ok_or_else(|| {
            GatewayError::Malformed(format!("no scripted response for request {}", req.digest()))
        })
    }
}

// ---------------------------------------------------------------------------
// Phrase scanning

/// Non-overlapping, case-insensitive, whole-word occurrences of `phrases` in
/// `text`, scanning left to right; at each position the longest phrase wins.
/// Returns byte ranges and the index of the matching phrase.
pub(crate) fn find_phrases(text: &str, phrases: &[String]) -> Vec<(Range<usize>, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let lower: Vec<char> = chars.iter().map(|&(_, c)| fold(c)).collect();
    let mut order: Vec<(usize, Vec<char>)> = phrases
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.chars().map(fold).collect::<Vec<_>>()))
        .filter(|(_, p)| !p.is_empty())
        .collect();
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));

    let byte_at = |ci: usize| chars.get(ci).map_or(text.len(), |&(b, _)| b);
    let mut hits = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let prev_alnum = i > 0 && chars[i - 1].1.is_alphanumeric();
        let found = order.iter().find(|(_, p)| {
            let end = i + p.len();
            if end > chars.len() || lower[i..end] != p[..] {
                return false;
            }
            let left_ok = !prev_alnum || !p[0].is_alphanumeric();
            let right_ok = end == chars.len()
                || !chars[end].1.is_alphanumeric()
                || !p[p.len() - 1].is_alphanumeric();
            left_ok && right_ok
        });
        match found {
            Some((idx, p)) => {
                hits.push((byte_at(i)..byte_at(i + p.len()), *idx));
                i += p.len();
            }
            None => i += 1,
        }
    }
    hits
}

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

// ---------------------------------------------------------------------------
// Alias-table coreference stand-in

/// Per-type surface form to canonical form mappings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasTable {
    entries: BTreeMap<EntityType, Vec<(String, String)>>,
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entity_type: EntityType, surface: &str, canonical: &str) {
        let list = self.entries.entry(entity_type).or_default();
        list.retain(|(s, _)| !s.eq_ignore_ascii_case(surface));
        list.push((surface.to_string(), canonical.to_string()));
    }

    pub fn with(mut self, entity_type: EntityType, surface: &str, canonical: &str) -> Self {
        self.insert(entity_type, surface, canonical);
        self
    }

    pub fn entries(&self, entity_type: EntityType) -> &[(String, String)] {
        self.entries.get(&entity_type).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(Vec::is_empty)
    }
}

/// Replaces every whole-word occurrence of the type's surface forms with their
/// canonical forms; everything else is copied byte for byte.
pub fn mock_alias_resolver(text: &str, table: &AliasTable, entity_type: EntityType) -> String {
    let entries = table.entries(entity_type);
    if entries.is_empty() {
        return text.to_string();
    }
    let surfaces: Vec<String> = entries.iter().map(|(s, _)| s.clone()).collect();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (range, idx) in find_phrases(text, &surfaces) {
        out.push_str(&text[last..range.start]);
        out.push_str(&entries[idx].1);
        last = range.end;
    }
    out.push_str(&text[last..]);
    out
}

// ---------------------------------------------------------------------------
// Rule-driven mock

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GazetteerEntry {
    pub entity_type: EntityType,
    pub name: String,
    /// Legal boilerplate the structured prompt's filter rules would drop.
    pub noise: bool,
}

/// Behaviour script for [`RuleMockBackend`].
///
/// ```text
/// # comment
/// alias  PERSON | the defendant | Richard Stone
/// entity PERSON | Richard Stone
/// entity ORGANIZATION | District Court | noise
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockRules {
    pub aliases: AliasTable,
    pub gazetteer: Vec<GazetteerEntry>,
}

impl MockRules {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = MockRules::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::InvalidConfig(format!("mock rules line {}: {m}", n + 1));
            let (kw, rest) = line.split_once(char::is_whitespace).ok_or_else(|| bad("missing fields"))?;
            let fields: Vec<&str> = rest.split('|').map(str::trim).collect();
            let ty = EntityType::parse(fields[0]).ok_or_else(|| bad("unknown entity type"))?;
            match (kw, fields.as_slice()) {
                ("alias", [_, surface, canonical]) if !surface.is_empty() && !canonical.is_empty() => {
                    rules.aliases.insert(ty, surface, canonical)
                }
                ("entity", [_, name]) if !name.is_empty() => rules.gazetteer.push(GazetteerEntry {
                    entity_type: ty,
                    name: name.to_string(),
                    noise: false,
                }),
                ("entity", [_, name, flag]) if !name.is_empty() && flag.eq_ignore_ascii_case("noise") => {
                    rules.gazetteer.push(GazetteerEntry {
                        entity_type: ty,
                        name: name.to_string(),
                        noise: true,
                    })
                }
                _ => return Err(bad("expected `alias TYPE | surface | canonical` or `entity TYPE | name [| noise]`")),
            }
        }
        Ok(rules)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).at(path)?)
    }
}

/// Simulates the model: coref passes apply the alias table for the pass's
/// type; extraction emits gazetteer hits in the default record format, with
/// relationships between consecutive entities of a sentence. Under the
/// structured prompt, noise-flagged entries are dropped and entities are
/// listed in canonical type order. Digest fixtures take precedence.
#[derive(Debug, Clone, Default)]
pub struct RuleMockBackend {
    rules: MockRules,
    fixtures: ScriptedBackend,
}

impl RuleMockBackend {
    pub fn new(rules: MockRules) -> Self {
        RuleMockBackend {
            rules,
            fixtures: ScriptedBackend::default(),
        }
    }

    pub fn with_fixtures(mut self, fixtures: ScriptedBackend) -> Self {
        self.fixtures = fixtures;
        self
    }

    fn extract(&self, text: &str, structured: bool) -> String {
        let entries: Vec<&GazetteerEntry> = self
            .rules
            .gazetteer
            .iter()
            .filter(|e| !(structured && e.noise))
            .collect();
        let names: Vec<String> = entries.iter().map(|e| e.name.clone()).collect();
        let hits = find_phrases(text, &names);

        let mut entities: Vec<RawEntityRecord> = Vec::new();
        let mut seen = HashSet::new();
        for (range, idx) in &hits {
            let surface = &text[range.clone()];
            let ty = entries[*idx].entity_type;
            if seen.insert((canonical_name(surface), ty)) {
                entities.push(RawEntityRecord::new(
                    surface,
                    ty,
                    &format!("{} named in the narrative", ty.label()),
                    0,
                ));
            }
        }
        if structured {
            entities.sort_by_key(|e| e.entity_type.ordinal());
        }

        let mut relationships = Vec::new();
        let mut linked = HashSet::new();
        let mut sentence_start = 0;
        for (i, c) in text.char_indices().chain(std::iter::once((text.len(), '.'))) {
            if !matches!(c, '.' | '!' | '?' | '\n') {
                continue;
            }
            let in_sentence: Vec<&str> = hits
                .iter()
                .filter(|(r, _)| r.start >= sentence_start && r.end <= i)
                .map(|(r, _)| &text[r.clone()])
                .collect();
            for pair in in_sentence.windows(2) {
                let (a, b) = (canonical_name(pair[0]), canonical_name(pair[1]));
                if a != b && linked.insert((a, b)) {
                    relationships.push(RawRelationshipRecord::new(
                        pair[0],
                        pair[1],
                        "mentioned together in one sentence",
                        Some(in_sentence.len() as f64),
                        0,
                    ));
                }
            }
            sentence_start = i + c.len_utf8();
        }
        serialize_records(&entities, &relationships, &Delimiters::default())
    }
}

impl CompletionBackend for RuleMockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        if let Some(text) = self.fixtures.lookup(req) {
            return Ok(text.clone());
        }
        Ok(match req.stage_tag {
            StageTag::Coref(t) => wrap_resolved(&mock_alias_resolver(&req.input_text, &self.rules.aliases, t)),
            StageTag::Extraction => self.extract(&req.input_text, true),
            StageTag::BaselineExtraction => self.extract(&req.input_text, false),
        })
    }
}
