use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Delimiters;
use crate::entity::EntityType;
use crate::error::{Error, IoContext, Result};
use crate::sections::{fill_slot, Sections, DOCUMENT_PLACEHOLDER};

pub const ORDER_HEADING: &str = "## EXTRACTION_ORDER";
pub const DEFINITIONS_HEADING: &str = "## TYPE_DEFINITIONS";
pub const FILTER_HEADING: &str = "## FILTER_RULES";

/// Headings that only a structured prompt may contain.
pub const STRUCTURED_HEADINGS: [&str; 3] = [ORDER_HEADING, DEFINITIONS_HEADING, FILTER_HEADING];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Structured,
    Baseline,
}

impl PromptVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Structured => "structured",
            PromptVariant::Baseline => "baseline",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "structured" => Ok(PromptVariant::Structured),
            "baseline" => Ok(PromptVariant::Baseline),
            other => Err(Error::InvalidConfig(format!("unknown prompt variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionPromptConfig {
    pub variant: PromptVariant,
    pub persona: String,
    pub task: String,
    pub context: String,
    pub extraction_order: Vec<EntityType>,
    pub type_definitions: BTreeMap<EntityType, String>,
    pub filter_rules: Vec<String>,
    pub few_shot_examples: Vec<String>,
    pub output_instructions: String,
    pub document_slot: String,
    pub delimiters: Delimiters,
}

impl ExtractionPromptConfig {
    /// Parses the `## VARIANT / PERSONA / TASK / CONTEXT / EXTRACTION_ORDER /
    /// TYPE_DEFINITIONS / FILTER_RULES / EXAMPLES / OUTPUT / DOCUMENT` format.
    /// `TYPE_DEFINITIONS` holds one `TYPE: text` line per type.
    pub fn parse(text: &str, delimiters: Delimiters) -> Result<Self> {
        let s = Sections::parse(text)?;
        let variant: PromptVariant = s.text("VARIANT").parse()?;
        let extraction_order = s
            .items("EXTRACTION_ORDER")
            .iter()
            .map(|l| {
                let l = l.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.').trim();
                EntityType::parse(l)
                    .ok_or_else(|| Error::TemplateInvalid(format!("unknown type {l:?} in EXTRACTION_ORDER")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut type_definitions = BTreeMap::new();
        for line in s.items("TYPE_DEFINITIONS") {
            let (name, def) = line
                .split_once(':')
                .ok_or_else(|| Error::TemplateInvalid(format!("type definition without ':' {line:?}")))?;
            let t = EntityType::parse(name)
                .ok_or_else(|| Error::TemplateInvalid(format!("unknown type {name:?} in TYPE_DEFINITIONS")))?;
            if type_definitions.insert(t, def.trim().to_string()).is_some() {
                return Err(Error::TemplateInvalid(format!("{t} defined twice")));
            }
        }
        let cfg = ExtractionPromptConfig {
            variant,
            persona: s.text("PERSONA"),
            task: s.text("TASK"),
            context: s.text("CONTEXT"),
            extraction_order,
            type_definitions,
            filter_rules: s.items("FILTER_RULES"),
            few_shot_examples: s.blocks("EXAMPLES"),
            output_instructions: s.text("OUTPUT"),
            document_slot: s.text("DOCUMENT"),
            delimiters,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, delimiters: Delimiters) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).at(path)?, delimiters)
            .map_err(|e| Error::TemplateInvalid(format!("{}: {e}", path.display())))
    }

    pub fn default_for(variant: PromptVariant) -> Self {
        let text = match variant {
            PromptVariant::Structured => include_str!("../../assets/extraction/structured.txt"),
            PromptVariant::Baseline => include_str!("../../assets/extraction/baseline.txt"),
        };
        let cfg = Self::parse(text, Delimiters::default()).expect("shipped extraction prompt is valid");
        assert_eq!(cfg.variant, variant);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::TemplateInvalid(format!("{} prompt: {m}", self.variant)));
        self.delimiters.validate()?;
        if self.task.trim().is_empty() {
            return bad("empty task".into());
        }
        if self.output_instructions.trim().is_empty() {
            return bad("empty output instructions".into());
        }
        match self.variant {
            PromptVariant::Structured => {
                if self.persona.trim().is_empty() {
                    return bad("empty persona".into());
                }
                if self.extraction_order != EntityType::ALL {
                    return bad("extraction order must list all seven types in canonical order".into());
                }
                if self.type_definitions.len() != EntityType::ALL.len() {
                    return bad("type definitions must cover all seven types".into());
                }
                if self.filter_rules.is_empty() {
                    return bad("filter rules are required".into());
                }
            }
            PromptVariant::Baseline => {
                if !self.extraction_order.is_empty()
                    || !self.type_definitions.is_empty()
                    || !self.filter_rules.is_empty()
                {
                    return bad("extraction order, type definitions and filter rules must be empty".into());
                }
            }
        }
        let free_text = [&self.persona, &self.task, &self.context, &self.output_instructions]
            .into_iter()
            .chain(self.few_shot_examples.iter())
            .chain(self.filter_rules.iter())
            .chain(self.type_definitions.values());
        for t in free_text {
            if t.contains(DOCUMENT_PLACEHOLDER) {
                return bad(format!("{DOCUMENT_PLACEHOLDER} may only appear in the DOCUMENT section"));
            }
            if let Some(h) = STRUCTURED_HEADINGS.iter().find(|h| t.contains(*h)) {
                return bad(format!("free text contains the reserved heading {h:?}"));
            }
        }
        fill_slot(&self.document_slot, "").map(|_| ())
    }

    fn substitute(&self, text: &str) -> String {
        let types: Vec<&str> = EntityType::ALL.iter().map(|t| t.tag()).collect();
        text.replace("{tuple_delimiter}", &self.delimiters.field_sep)
            .replace("{record_delimiter}", &self.delimiters.record_sep)
            .replace("{completion_delimiter}", &self.delimiters.completion_marker)
            .replace("{entity_types}", &types.join(", "))
    }

    /// Persona, task, context, then (structured only) order, definitions and
    /// filter rules, then output format, examples and the document slot.
    pub fn render(&self, document: &str) -> Result<String> {
        self.validate()?;
        let mut p = String::new();
        let mut section = |heading: &str, body: &str| {
            if !heading.is_empty() {
                p.push_str(heading);
                p.push('\n');
            }
            p.push_str(body.trim());
            p.push_str("\n\n");
        };
        if !self.persona.trim().is_empty() {
            section("", &self.substitute(&self.persona));
        }
        section("## TASK", &self.substitute(&self.task));
        if !self.context.trim().is_empty() {
            section("## CONTEXT", &self.substitute(&self.context));
        }
        if self.variant == PromptVariant::Structured {
            let order: Vec<String> = self
                .extraction_order
                .iter()
                .enumerate()
                .map(|(i, t)| format!("{}. {}", i + 1, t.tag()))
                .collect();
            section(ORDER_HEADING, &order.join("\n"));
            let defs: Vec<String> = EntityType::ALL
                .iter()
                .map(|t| format!("{}: {}", t.tag(), self.substitute(&self.type_definitions[t])))
                .collect();
            section(DEFINITIONS_HEADING, &defs.join("\n"));
            let rules: Vec<String> = self
                .filter_rules
                .iter()
                .map(|r| format!("- {}", self.substitute(r)))
                .collect();
            section(FILTER_HEADING, &rules.join("\n"));
        }
        section("## OUTPUT_FORMAT", &self.substitute(&self.output_instructions));
        if !self.few_shot_examples.is_empty() {
            let ex: Vec<String> = self
                .few_shot_examples
                .iter()
                .enumerate()
                .map(|(i, e)| format!("Example {}\n{}", i + 1, self.substitute(e)))
                .collect();
            section("## EXAMPLES", &ex.join("\n\n"));
        }
        let slot = fill_slot(&self.substitute(&self.document_slot), document)?;
        p.push_str(&slot);
        p.push('\n');
        Ok(p)
    }
}
