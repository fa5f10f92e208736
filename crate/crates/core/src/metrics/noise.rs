use std::collections::BTreeSet;

use super::overrides::{Directive, Overrides};
use crate::error::Result;
use crate::graph::KnowledgeGraph;
use crate::lexicon::Lexicon;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseScore {
    /// Sorted node ids.
    pub noisy_ids: Vec<String>,
}

impl NoiseScore {
    pub fn noisy_count(&self) -> usize {
        self.noisy_ids.len()
    }
}

/// A node is noisy when its normalized name contains a lexicon term as whole
/// words. `noisy` and `clean` directives then add or remove ids, later lines
/// winning.
pub fn score_noise(g: &KnowledgeGraph, lexicon: &Lexicon, overrides: &Overrides) -> Result<NoiseScore> {
    overrides.check_ids(g)?;
    let mut noisy: BTreeSet<String> = g
        .nodes
        .values()
        .filter(|n| lexicon.matches(n.normalized_name()))
        .map(|n| n.id())
        .collect();
    for d in &overrides.directives {
        match d {
            Directive::Noisy(id) => {
                noisy.insert(id.clone());
            }
            Directive::Clean(id) => {
                noisy.remove(id);
            }
            Directive::Merge(_) | Directive::Split(_) => {}
        }
    }
    Ok(NoiseScore {
        noisy_ids: noisy.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityType::*;
    use crate::extraction::RawEntityRecord;
    use crate::graph::build_graph;
    use crate::runner::ConfigId;

    #[test]
    fn lexicon_and_overrides() {
        let recs = [
            RawEntityRecord::new("Court", Organization, "", 0),
            RawEntityRecord::new("Nissan Maxima", MeansOfTransportation, "", 0),
            RawEntityRecord::new("Appeal Process", Organization, "", 0),
            RawEntityRecord::new("Jury Street", Location, "", 0),
        ];
        let g = build_graph(&recs, &[], "c", ConfigId::Graphrag);
        let lex = Lexicon::default_noise();
        let s = score_noise(&g, &lex, &Overrides::default()).unwrap();
        assert_eq!(s.noisy_ids, ["APPEAL PROCESS::ORGANIZATION", "COURT::ORGANIZATION", "JURY STREET::LOCATION"]);
        let o = Overrides::parse("clean JURY STREET::LOCATION\nnoisy NISSAN MAXIMA::MEANS_OF_TRANSPORTATION").unwrap();
        let s = score_noise(&g, &lex, &o).unwrap();
        assert_eq!(s.noisy_count(), 3);
        assert!(!s.noisy_ids.contains(&"JURY STREET::LOCATION".to_string()));
    }
}
