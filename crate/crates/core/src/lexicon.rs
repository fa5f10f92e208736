//! Term lists matched against entity names by whole-word containment.

use std::fs;
use std::path::Path;

use crate::entity::{canonical_name, contains_whole_words};
use crate::error::{IoContext, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    terms: Vec<String>,
}

impl Lexicon {
    /// One term per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        let mut terms: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(canonical_name)
            .collect();
        terms.sort();
        terms.dedup();
        Lexicon { terms }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path).at(path)?))
    }

    pub fn from_terms<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Self {
        Self::parse(&terms.into_iter().map(|t| t.as_ref().to_string()).collect::<Vec<_>>().join("\n"))
    }

    /// Legal-boilerplate terms used for noise scoring.
    pub fn default_noise() -> Self {
        Self::parse(include_str!("../assets/lexicon/noise.txt"))
    }

    /// Government-entity terms used by the optional extraction post-filter.
    pub fn default_government() -> Self {
        Self::parse(include_str!("../assets/lexicon/government.txt"))
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The first term contained in `name` as whole words.
    pub fn matching_term(&self, name: &str) -> Option<&str> {
        self.terms
            .iter()
            .find(|t| contains_whole_words(name, t))
            .map(String::as_str)
    }

    pub fn matches(&self, name: &str) -> bool {
        self.matching_term(name).is_some()
    }
}
