use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::entity::EntityType;
use crate::error::{Error, IoContext, Result};
use crate::sections::{fill_slot, Sections, DOCUMENT_PLACEHOLDER};

/// One per-type coreference prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorefPromptTemplate {
    pub entity_type: EntityType,
    pub persona: String,
    pub task_description: String,
    pub context_block: String,
    pub resolution_rules: Vec<String>,
    /// (input excerpt, resolved excerpt)
    pub few_shot_examples: Vec<(String, String)>,
    pub output_instructions: String,
    /// Framing around the document; holds the single `{{DOCUMENT}}` placeholder.
    pub document_slot: String,
}

impl CorefPromptTemplate {
    /// Parses the `## TYPE / PERSONA / TASK / CONTEXT / RULES / EXAMPLES /
    /// OUTPUT / DOCUMENT` file format. Examples are `---`-separated blocks of
    /// `INPUT:` followed by `OUTPUT:`.
    pub fn parse(text: &str) -> Result<Self> {
        let s = Sections::parse(text)?;
        let type_name = s.text("TYPE");
        let entity_type = EntityType::parse(&type_name)
            .ok_or_else(|| Error::TemplateInvalid(format!("unknown or missing TYPE {type_name:?}")))?;
        let few_shot_examples = s
            .blocks("EXAMPLES")
            .iter()
            .map(|b| parse_example(b))
            .collect::<Result<Vec<_>>>()?;
        let t = CorefPromptTemplate {
            entity_type,
            persona: s.text("PERSONA"),
            task_description: s.text("TASK"),
            context_block: s.text("CONTEXT"),
            resolution_rules: s.items("RULES"),
            few_shot_examples,
            output_instructions: s.text("OUTPUT"),
            document_slot: s.text("DOCUMENT"),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).at(path)?)
            .map_err(|e| Error::TemplateInvalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.entity_type;
        let missing = |what: &str| Err(Error::TemplateInvalid(format!("{t} template: empty {what}")));
        if self.persona.trim().is_empty() {
            return missing("persona");
        }
        if self.task_description.trim().is_empty() {
            return missing("task description");
        }
        if self.context_block.trim().is_empty() {
            return missing("context");
        }
        if self.resolution_rules.is_empty() {
            return missing("resolution rules");
        }
        if self.few_shot_examples.is_empty() {
            return missing("few-shot examples");
        }
        if self.output_instructions.trim().is_empty() {
            return missing("output instructions");
        }
        let outside = [
            &self.persona,
            &self.task_description,
            &self.context_block,
            &self.output_instructions,
        ]
        .into_iter()
        .chain(self.resolution_rules.iter())
        .chain(self.few_shot_examples.iter().flat_map(|(a, b)| [a, b]))
        .any(|s| s.contains(DOCUMENT_PLACEHOLDER));
        if outside {
            return Err(Error::TemplateInvalid(format!(
                "{t} template: {DOCUMENT_PLACEHOLDER} may only appear in the DOCUMENT section"
            )));
        }
        fill_slot(&self.document_slot, "").map(|_| ())
    }

    /// Persona, task, context, rules, examples, output instructions, then the
    /// document slot.
    pub fn render(&self, document: &str) -> Result<String> {
        self.validate()?;
        let mut p = String::new();
        p.push_str(self.persona.trim());
        p.push_str("\n\n## TASK\n");
        p.push_str(self.task_description.trim());
        p.push_str("\n\n## CONTEXT\n");
        p.push_str(self.context_block.trim());
        p.push_str("\n\n## RULES\n");
        for r in &self.resolution_rules {
            p.push_str("- ");
            p.push_str(r);
            p.push('\n');
        }
        p.push_str("\n## EXAMPLES\n");
        for (i, (input, resolved)) in self.few_shot_examples.iter().enumerate() {
            p.push_str(&format!("Example {}\nInput:\n{}\nResolved:\n{}\n\n", i + 1, input, resolved));
        }
        p.push_str("## OUTPUT\n");
        p.push_str(self.output_instructions.trim());
        p.push_str("\n\n");
        p.push_str(&fill_slot(&self.document_slot, document)?);
        p.push('\n');
        Ok(p)
    }
}

fn parse_example(block: &str) -> Result<(String, String)> {
    let bad = || Error::TemplateInvalid(format!("example block needs INPUT: and OUTPUT: parts: {block:?}"));
    let rest = block.trim().strip_prefix("INPUT:").ok_or_else(bad)?;
    let (input, output) = rest.split_once("OUTPUT:").ok_or_else(bad)?;
    let (input, output) = (input.trim(), output.trim());
    if input.is_empty() || output.is_empty() {
        return Err(bad());
    }
    Ok((input.to_string(), output.to_string()))
}

/// Renders a coref prompt for a given template and document.
pub fn render_prompt(template: &CorefPromptTemplate, document: &str) -> Result<String> {
    template.render(document)
}

const DEFAULT_TEMPLATES: [(EntityType, &str); 7] = [
    (EntityType::Person, include_str!("../../assets/coref/person.txt")),
    (EntityType::Location, include_str!("../../assets/coref/location.txt")),
    (EntityType::Routes, include_str!("../../assets/coref/routes.txt")),
    (EntityType::Organization, include_str!("../../assets/coref/organization.txt")),
    (EntityType::MeansOfTransportation, include_str!("../../assets/coref/means_of_transportation.txt")),
    (EntityType::MeansOfCommunication, include_str!("../../assets/coref/means_of_communication.txt")),
    (EntityType::SmuggledItems, include_str!("../../assets/coref/smuggled_items.txt")),
];

/// One template per entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorefTemplates {
    by_type: BTreeMap<EntityType, CorefPromptTemplate>,
}

impl CorefTemplates {
    /// The shipped templates.
    pub fn defaults() -> Self {
        let by_type = DEFAULT_TEMPLATES
            .iter()
            .map(|(t, text)| {
                let tpl = CorefPromptTemplate::parse(text).expect("shipped coref template is valid");
                assert_eq!(tpl.entity_type, *t);
                (*t, tpl)
            })
            .collect();
        CorefTemplates { by_type }
    }

    /// Builds a set from templates in any order; all seven types are required.
    pub fn from_templates(templates: impl IntoIterator<Item = CorefPromptTemplate>) -> Result<Self> {
        let mut by_type = BTreeMap::new();
        for t in templates {
            if by_type.insert(t.entity_type, t).is_some() {
                return Err(Error::TemplateInvalid("two templates for one entity type".into()));
            }
        }
        let missing: Vec<_> = EntityType::ALL
            .iter()
            .filter(|t| !by_type.contains_key(t))
            .map(|t| t.label())
            .collect();
        if !missing.is_empty() {
            return Err(Error::TemplateInvalid(format!("missing coref templates: {}", missing.join(", "))));
        }
        Ok(CorefTemplates { by_type })
    }

    /// Loads `<slug>.txt` for each type from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let templates = EntityType::ALL
            .iter()
            .map(|t| CorefPromptTemplate::load(&dir.join(format!("{}.txt", t.slug()))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_templates(templates)
    }

    pub fn get(&self, t: EntityType) -> &CorefPromptTemplate {
        &self.by_type[&t]
    }

    /// Templates in canonical order, whatever the insertion order was.
    pub fn in_order(&self) -> impl Iterator<Item = &CorefPromptTemplate> {
        EntityType::ALL.iter().map(move |t| &self.by_type[t])
    }
}

impl Default for CorefTemplates {
    fn default() -> Self {
        Self::defaults()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tpl() -> CorefPromptTemplate {
        CorefTemplates::defaults().get(EntityType::Person).clone()
    }

    #[test]
    fn shipped_templates_are_valid() {
        let set = CorefTemplates::defaults();
        let order: Vec<_> = set.in_order().map(|t| t.entity_type).collect();
        assert_eq!(order, EntityType::ALL);
        for t in set.in_order() {
            assert!(!t.few_shot_examples.is_empty());
        }
    }

    #[test]
    fn render_contains_document_once() {
        let p = render_prompt(&tpl(), "ABC").unwrap();
        assert_eq!(p.matches("ABC").count(), 1);
        assert!(!p.contains(DOCUMENT_PLACEHOLDER));
    }

    #[test]
    fn render_component_order() {
        let t = tpl();
        let p = t.render("DOCTEXT").unwrap();
        let pos = |s: &str| p.find(s).unwrap();
        assert!(pos(&t.persona) < pos("## TASK"));
        assert!(pos("## TASK") < pos("## CONTEXT"));
        assert!(pos("## CONTEXT") < pos("## RULES"));
        assert!(pos("## RULES") < pos("## EXAMPLES"));
        assert!(pos("## EXAMPLES") < pos("## OUTPUT"));
        assert!(pos("## OUTPUT") < pos("DOCTEXT"));
    }

    #[test]
    fn render_is_deterministic() {
        let t = tpl();
        assert_eq!(t.render("x y z").unwrap(), t.render("x y z").unwrap());
    }

    #[test]
    fn missing_placeholder_is_invalid() {
        let mut t = tpl();
        t.document_slot = "no slot here".into();
        assert!(matches!(t.render("ABC"), Err(Error::TemplateInvalid(_))));
    }

    #[test]
    fn empty_component_is_invalid() {
        let mut t = tpl();
        t.few_shot_examples.clear();
        assert!(t.validate().is_err());
        let mut t = tpl();
        t.persona = " ".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn placeholder_outside_slot_is_invalid() {
        let mut t = tpl();
        t.context_block.push_str(" {{DOCUMENT}}");
        assert!(t.validate().is_err());
    }

    #[test]
    fn set_requires_all_types() {
        let one = vec![tpl()];
        assert!(CorefTemplates::from_templates(one).is_err());
        let mut rev: Vec<_> = CorefTemplates::defaults().in_order().cloned().collect();
        rev.reverse();
        let set = CorefTemplates::from_templates(rev).unwrap();
        assert_eq!(set.in_order().next().unwrap().entity_type, EntityType::Person);
    }
}
