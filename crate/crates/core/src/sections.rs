//! Section-structured text files: `## NAME` header lines followed by a body.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const DOCUMENT_PLACEHOLDER: &str = "{{DOCUMENT}}";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sections {
    map: BTreeMap<String, String>,
}

impl Sections {
    /// Text before the first header is ignored; `#`-prefixed lines that are not
    /// headers are kept as body text. Section names are upper-cased with spaces
    /// turned into underscores.
    pub fn parse(text: &str) -> Result<Sections> {
        let mut map = BTreeMap::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("## ") {
                let name = name.trim().to_ascii_uppercase().replace(' ', "_");
                if let Some((n, body)) = current.take() {
                    insert(&mut map, n, &body)?;
                }
                current = Some((name, Vec::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            }
        }
        if let Some((n, body)) = current.take() {
            insert(&mut map, n, &body)?;
        }
        Ok(Sections { map })
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.map.get(name).map(String::as_str)
    }

    pub fn text(&self, name: &str) -> String {
        self.get(name).unwrap_or_default().to_string()
    }

    /// Non-empty lines, with leading list bullets removed.
    pub fn items(&self, name: &str) -> Vec<String> {
        self.get(name)
            .unwrap_or_default()
            .lines()
            .map(|l| {
                let l = l.trim();
                l.strip_prefix("- ")
                    .or_else(|| l.strip_prefix("* "))
                    .unwrap_or(l)
                    .trim()
                    .to_string()
            })
            .filter(|l| !l.is_empty())
            .collect()
    }

    /// Blocks separated by `---` lines.
    pub fn blocks(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur: Vec<&str> = Vec::new();
        for line in self.get(name).unwrap_or_default().lines() {
            if line.trim() == "---" {
                push_block(&mut out, &cur);
                cur.clear();
            } else {
                cur.push(line);
            }
        }
        push_block(&mut out, &cur);
        out
    }
}

fn push_block(out: &mut Vec<String>, lines: &[&str]) {
    let b = lines.join("\n").trim().to_string();
    if !b.is_empty() {
        out.push(b);
    }
}

fn insert(map: &mut BTreeMap<String, String>, name: String, body: &[&str]) -> Result<()> {
    if map.contains_key(&name) {
        return Err(Error::TemplateInvalid(format!("section {name} appears twice")));
    }
    map.insert(name, body.join("\n").trim().to_string());
    Ok(())
}

/// Substitutes the document into a slot holding exactly one placeholder.
pub fn fill_slot(slot: &str, document: &str) -> Result<String> {
    match slot.matches(DOCUMENT_PLACEHOLDER).count() {
        1 => Ok(slot.replacen(DOCUMENT_PLACEHOLDER, document, 1)),
        0 => Err(Error::TemplateInvalid(format!("missing {DOCUMENT_PLACEHOLDER} placeholder"))),
        n => Err(Error::TemplateInvalid(format!("{n} {DOCUMENT_PLACEHOLDER} placeholders, expected one"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sections() {
        let s = Sections::parse("preamble\n## PERSONA\nYou are X.\n## rules\n- a\n* b\n\n## EXAMPLES\none\n---\ntwo\n").unwrap();
        assert_eq!(s.get("PERSONA"), Some("You are X."));
        assert_eq!(s.items("RULES"), vec!["a", "b"]);
        assert_eq!(s.blocks("EXAMPLES"), vec!["one", "two"]);
        assert_eq!(s.get("MISSING"), None);
    }

    #[test]
    fn duplicate_section_rejected() {
        assert!(Sections::parse("## A\nx\n## A\ny").is_err());
    }

    #[test]
    fn slot_requires_single_placeholder() {
        assert_eq!(fill_slot("<<{{DOCUMENT}}>>", "ABC").unwrap(), "<<ABC>>");
        assert!(fill_slot("nothing", "ABC").is_err());
        assert!(fill_slot("{{DOCUMENT}}{{DOCUMENT}}", "ABC").is_err());
        // a document containing the placeholder text is inserted verbatim
        assert_eq!(fill_slot("[{{DOCUMENT}}]", "{{DOCUMENT}}").unwrap(), "[{{DOCUMENT}}]");
    }
}
