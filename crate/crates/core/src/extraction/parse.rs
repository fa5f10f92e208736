//! Tuple-delimited record format: `("entity"<F>NAME<F>TYPE<F>DESC)<R>...<C>`.

use serde::{Deserialize, Serialize};

use crate::entity::{canonical_name, collapse_whitespace, EntityType};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delimiters {
    pub field_sep: String,
    pub record_sep: String,
    pub completion_marker: String,
}

impl Default for Delimiters {
    fn default() -> Self {
        Delimiters {
            field_sep: "<|>".to_string(),
            record_sep: "##".to_string(),
            completion_marker: "<|COMPLETE|>".to_string(),
        }
    }
}

impl Delimiters {
    /// Non-empty, pairwise distinct, and none contained in another.
    pub fn validate(&self) -> Result<()> {
        let all = [&self.field_sep, &self.record_sep, &self.completion_marker];
        if all.iter().any(|d| d.trim().is_empty()) {
            return Err(Error::InvalidConfig("delimiters must be non-empty".into()));
        }
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                if i != j && a.contains(b.as_str()) {
                    return Err(Error::InvalidConfig(format!(
                        "delimiter {a:?} overlaps {b:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEntityRecord {
    /// Display form: trimmed, internal whitespace collapsed, casing kept.
    pub name: String,
    pub normalized_name: String,
    pub entity_type: EntityType,
    pub description: String,
    pub chunk_id: usize,
}

impl RawEntityRecord {
    pub fn new(name: &str, entity_type: EntityType, description: &str, chunk_id: usize) -> Self {
        RawEntityRecord {
            name: collapse_whitespace(name),
            normalized_name: canonical_name(name),
            entity_type,
            description: collapse_whitespace(description),
            chunk_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRelationshipRecord {
    pub source_name: String,
    pub target_name: String,
    pub source_normalized: String,
    pub target_normalized: String,
    pub description: String,
    pub strength: Option<f64>,
    pub chunk_id: usize,
}

impl RawRelationshipRecord {
    pub fn new(
        source: &str,
        target: &str,
        description: &str,
        strength: Option<f64>,
        chunk_id: usize,
    ) -> Self {
        RawRelationshipRecord {
            source_name: collapse_whitespace(source),
            target_name: collapse_whitespace(target),
            source_normalized: canonical_name(source),
            target_normalized: canonical_name(target),
            description: collapse_whitespace(description),
            strength,
            chunk_id,
        }
    }
}

/// What to do with an entity whose type string is not one of the seven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TypeMode {
    #[default]
    Strict,
    Lenient(EntityType),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub entities: Vec<RawEntityRecord>,
    pub relationships: Vec<RawRelationshipRecord>,
    pub warnings: Vec<String>,
}

impl ParseOutcome {
    pub fn record_count(&self) -> usize {
        self.entities.len() + self.relationships.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RecordParser {
    pub delimiters: Delimiters,
    pub type_mode: TypeMode,
}

impl RecordParser {
    pub fn new(delimiters: Delimiters) -> Self {
        RecordParser {
            delimiters,
            type_mode: TypeMode::Strict,
        }
    }

    pub fn with_type_mode(mut self, mode: TypeMode) -> Self {
        self.type_mode = mode;
        self
    }

    /// Never fails; every problem becomes a warning.
    pub fn parse(&self, text: &str, chunk_id: usize) -> ParseOutcome {
        let d = &self.delimiters;
        let mut out = ParseOutcome::default();
        let body = match text.find(d.completion_marker.as_str()) {
            Some(i) => &text[..i],
            None => {
                out.warnings.push("no completion marker".to_string());
                text
            }
        };
        for (i, seg) in body.split(d.record_sep.as_str()).enumerate() {
            let seg = seg.trim();
            if seg.is_empty() {
                continue;
            }
            if let Err(w) = self.parse_record(seg, chunk_id, &mut out) {
                out.warnings.push(format!("record {i}: {w}"));
            }
        }
        out
    }

    fn parse_record(&self, seg: &str, chunk_id: usize, out: &mut ParseOutcome) -> Result<(), String> {
        let inner = seg
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .unwrap_or(seg);
        let fields: Vec<&str> = inner
            .split(self.delimiters.field_sep.as_str())
            .map(clean_field)
            .collect();
        let tag = fields[0].to_ascii_lowercase();
        match tag.as_str() {
            "entity" => {
                if fields.len() != 4 {
                    return Err(format!("entity record has {} fields, expected 4", fields.len()));
                }
                let name = fields[1];
                if name.is_empty() {
                    return Err("entity record with empty name".into());
                }
                let ty = match (EntityType::parse(fields[2]), self.type_mode) {
                    (Some(t), _) => t,
                    (None, TypeMode::Lenient(fallback)) => fallback,
                    (None, TypeMode::Strict) => {
                        return Err(format!("unknown entity type {:?}", fields[2]));
                    }
                };
                out.entities.push(RawEntityRecord::new(name, ty, fields[3], chunk_id));
            }
            "relationship" => {
                if !(4..=5).contains(&fields.len()) {
                    return Err(format!(
                        "relationship record has {} fields, expected 4 or 5",
                        fields.len()
                    ));
                }
                let (src, tgt) = (fields[1], fields[2]);
                if src.is_empty() || tgt.is_empty() {
                    return Err("relationship record with empty endpoint".into());
                }
                if canonical_name(src) == canonical_name(tgt) {
                    return Err(format!("self relationship on {src:?}"));
                }
                let strength = match fields.get(4) {
                    None | Some(&"") => None,
                    Some(s) => match s.parse::<f64>() {
                        Ok(v) if v.is_finite() => Some(v),
                        _ => return Err(format!("relationship strength {s:?} is not a number")),
                    },
                };
                out.relationships
                    .push(RawRelationshipRecord::new(src, tgt, fields[3], strength, chunk_id));
            }
            "" => return Err("record without a tag".into()),
            other => return Err(format!("unknown record tag {other:?}")),
        }
        Ok(())
    }
}

fn clean_field(f: &str) -> &str {
    let f = f.trim();
    f.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .map(str::trim)
        .unwrap_or(f)
}

/// Strict-mode parse with the given delimiters.
pub fn parse_records(text: &str, delimiters: &Delimiters, chunk_id: usize) -> ParseOutcome {
    RecordParser::new(delimiters.clone()).parse(text, chunk_id)
}

/// Entities first, then relationships, then the completion marker.
pub fn serialize_records(
    entities: &[RawEntityRecord],
    relationships: &[RawRelationshipRecord],
    d: &Delimiters,
) -> String {
    let f = &d.field_sep;
    let mut records: Vec<String> = entities
        .iter()
        .map(|e| {
            format!(
                "(\"entity\"{f}{}{f}{}{f}{})",
                e.name,
                e.entity_type.tag(),
                e.description
            )
        })
        .collect();
    records.extend(relationships.iter().map(|r| {
        let mut s = format!(
            "(\"relationship\"{f}{}{f}{}{f}{}",
            r.source_name, r.target_name, r.description
        );
        if let Some(v) = r.strength {
            s.push_str(&format!("{f}{v}"));
        }
        s.push(')');
        s
    }));
    let sep = format!("\n{}\n", d.record_sep);
    let mut out = records.join(&sep);
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str(&d.completion_marker);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d() -> Delimiters {
        Delimiters::default()
    }

    #[test]
    fn well_formed_fixture() {
        let text = "(\"entity\"<|>STONE<|>PERSON<|>driver of the vehicle)##(\"relationship\"<|>STONE<|>NISSAN MAXIMA<|>drove<|>8)<|COMPLETE|>";
        let p = parse_records(text, &d(), 2);
        assert_eq!(p.entities.len(), 1);
        assert_eq!(p.relationships.len(), 1);
        assert!(p.warnings.is_empty());
        assert_eq!(p.entities[0].entity_type, EntityType::Person);
        assert_eq!(p.entities[0].description, "driver of the vehicle");
        assert_eq!(p.entities[0].chunk_id, 2);
        assert_eq!(p.relationships[0].strength, Some(8.0));
        assert_eq!(p.relationships[0].target_normalized, "NISSAN MAXIMA");
    }

    #[test]
    fn one_malformed_of_three() {
        let text = "(\"entity\"<|>Ann Lee<|>PERSON<|>a)##(\"entity\"<|>Laredo<|>LOCATION)##(\"entity\"<|>Laredo<|>LOCATION<|>city)<|COMPLETE|>";
        let p = parse_records(text, &d(), 0);
        assert_eq!(p.entities.len(), 2);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn empty_input() {
        let p = parse_records("", &d(), 0);
        assert_eq!(p.record_count(), 0);
        assert_eq!(p.warnings, ["no completion marker"]);
    }

    #[test]
    fn unknown_tag_skipped() {
        let p = parse_records("(\"claim\"<|>X<|>Y<|>Z)<|COMPLETE|>", &d(), 0);
        assert_eq!(p.record_count(), 0);
        assert_eq!(p.warnings.len(), 1);
        assert!(p.warnings[0].contains("claim"));
    }

    #[test]
    fn unknown_type_strict_and_lenient() {
        let text = "(\"entity\"<|>Raid<|>EVENT<|>a raid)<|COMPLETE|>";
        let strict = parse_records(text, &d(), 0);
        assert!(strict.entities.is_empty());
        assert!(strict.warnings[0].contains("EVENT"));
        let lenient = RecordParser::new(d())
            .with_type_mode(TypeMode::Lenient(EntityType::Organization))
            .parse(text, 0);
        assert_eq!(lenient.entities[0].entity_type, EntityType::Organization);
        assert!(lenient.warnings.is_empty());
    }

    #[test]
    fn casing_and_whitespace() {
        let p = parse_records("( \"Entity\" <|>  Ann   lee <|> person <|> a\n  b )<|COMPLETE|>", &d(), 0);
        let e = &p.entities[0];
        assert_eq!(e.name, "Ann lee");
        assert_eq!(e.normalized_name, "ANN LEE");
        assert_eq!(e.description, "a b");
    }

    #[test]
    fn self_relationship_skipped() {
        let p = parse_records("(\"relationship\"<|>Stone<|>STONE <|>x)<|COMPLETE|>", &d(), 0);
        assert!(p.relationships.is_empty());
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn text_after_marker_ignored() {
        let p = parse_records("(\"entity\"<|>A<|>PERSON<|>x)<|COMPLETE|>(\"entity\"<|>B<|>PERSON<|>y)", &d(), 0);
        assert_eq!(p.entities.len(), 1);
    }

    #[test]
    fn serialize_round_trip() {
        let e = vec![RawEntityRecord::new("Ann Lee", EntityType::Person, "driver", 4)];
        let r = vec![
            RawRelationshipRecord::new("Ann Lee", "Laredo", "went to", Some(2.5), 4),
            RawRelationshipRecord::new("Ann Lee", "Bob", "knows", None, 4),
        ];
        let text = serialize_records(&e, &r, &d());
        let p = parse_records(&text, &d(), 4);
        assert!(p.warnings.is_empty(), "{:?}", p.warnings);
        assert_eq!(p.entities, e);
        assert_eq!(p.relationships, r);
        assert_eq!(serialize_records(&[], &[], &d()), "<|COMPLETE|>");
    }

    #[test]
    fn delimiter_validation() {
        assert!(d().validate().is_ok());
        let mut bad = d();
        bad.record_sep = "<|>".into();
        assert!(bad.validate().is_err());
        bad.record_sep = "".into();
        assert!(bad.validate().is_err());
    }
}
