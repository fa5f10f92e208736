//! Expert-review override file. One directive per line:
//!
//! ```text
//! # comment
//! merge SAN ANTONIO::LOCATION ANTONIO::LOCATION
//! split STONE::PERSON
//! noisy APPEAL PROCESS::ORGANIZATION
//! clean JURY STREET::LOCATION
//! ```
//!
//! Node ids contain spaces, so an id runs until its `::TYPE` suffix. Ids may
//! also be double-quoted. Directives apply in file order.

use std::fs;
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::graph::{KnowledgeGraph, NodeKey};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Merge(Vec<String>),
    Split(String),
    Noisy(String),
    Clean(String),
}

impl Directive {
    fn ids(&self) -> Vec<&str> {
        match self {
            Directive::Merge(ids) => ids.iter().map(String::as_str).collect(),
            Directive::Split(id) | Directive::Noisy(id) | Directive::Clean(id) => vec![id.as_str()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub directives: Vec<Directive>,
}

impl Overrides {
    pub fn parse(text: &str) -> Result<Self> {
        let mut directives = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::OverrideSyntax { line: n + 1, message };
            let (verb, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let ids = parse_ids(rest).map_err(err)?;
            let one = |ids: Vec<String>| -> Result<String> {
                match <[String; 1]>::try_from(ids) {
                    Ok([id]) => Ok(id),
                    Err(v) => Err(err(format!("{verb} takes one id, got {}", v.len()))),
                }
            };
            let d = match verb.to_ascii_lowercase().as_str() {
                "merge" if ids.len() >= 2 => Directive::Merge(ids),
                "merge" => return Err(err("merge needs at least two ids".into())),
                "split" => Directive::Split(one(ids)?),
                "noisy" => Directive::Noisy(one(ids)?),
                "clean" => Directive::Clean(one(ids)?),
                other => return Err(err(format!("unknown directive {other:?}"))),
            };
            directives.push(d);
        }
        Ok(Overrides { directives })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).at(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }

    /// Fails with every id that names no node of `g`.
    pub fn check_ids(&self, g: &KnowledgeGraph) -> Result<()> {
        let mut unknown: Vec<String> = self
            .directives
            .iter()
            .flat_map(Directive::ids)
            .filter(|id| NodeKey::parse_id(id).is_none_or(|k| !g.nodes.contains_key(&k)))
            .map(str::to_string)
            .collect();
        unknown.sort();
        unknown.dedup();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::UnknownOverrideIds(unknown))
        }
    }
}

fn parse_ids(rest: &str) -> Result<Vec<String>, String> {
    let mut ids = Vec::new();
    let mut rest = rest.trim();
    while !rest.is_empty() {
        if let Some(q) = rest.strip_prefix('"') {
            let end = q.find('"').ok_or("unterminated quoted id")?;
            ids.push(q[..end].to_string());
            rest = q[end + 1..].trim_start();
            continue;
        }
        let mut acc: Vec<&str> = Vec::new();
        let mut done = false;
        while let Some(tok) = rest.split_whitespace().next() {
            acc.push(tok);
            rest = rest[tok.len()..].trim_start();
            if NodeKey::parse_id(&acc.join(" ")).is_some() {
                done = true;
                break;
            }
        }
        if !done {
            return Err(format!("{:?} is not a NAME::TYPE id", acc.join(" ")));
        }
        ids.push(acc.join(" "));
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_spaced_and_quoted_ids() {
        let o = Overrides::parse(
            "# expert pass\nmerge SAN ANTONIO::LOCATION ANTONIO::LOCATION  # same city\nsplit \"STONE::PERSON\"\nnoisy APPEAL PROCESS::ORGANIZATION\nclean X::UNTYPED\n",
        )
        .unwrap();
        assert_eq!(
            o.directives,
            [
                Directive::Merge(vec!["SAN ANTONIO::LOCATION".into(), "ANTONIO::LOCATION".into()]),
                Directive::Split("STONE::PERSON".into()),
                Directive::Noisy("APPEAL PROCESS::ORGANIZATION".into()),
                Directive::Clean("X::UNTYPED".into()),
            ]
        );
    }

    #[test]
    fn syntax_errors_carry_line() {
        for bad in ["\nfrobnicate A::PERSON", "\nmerge A::PERSON", "\nsplit A B", "\nsplit A::PERSON B::PERSON"] {
            match Overrides::parse(bad) {
                Err(Error::OverrideSyntax { line, .. }) => assert_eq!(line, 2, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }
}
