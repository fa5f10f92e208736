//! Type-aware sequential coreference resolution.
//!
//! Seven passes run in canonical [`EntityType`] order. Each pass sends the
//! current working document with one type's prompt and takes the model's
//! rewrite as the input of the next pass.

mod template;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::entity::EntityType;
use crate::error::{Error, IoContext, Result};
use crate::gateway::{CompletionRequest, Gateway, StageTag, DEFAULT_MODEL};
use crate::ingest::{Tokenizer, WhitespaceTokenizer};
use crate::util::text_digest;

pub use template::{render_prompt, CorefPromptTemplate, CorefTemplates};

pub const RESOLVED_BEGIN: &str = "<<<RESOLVED_TEXT>>>";
pub const RESOLVED_END: &str = "<<<END_RESOLVED_TEXT>>>";

/// Wraps a rewritten document in the sentinel lines the prompts ask for.
pub fn wrap_resolved(text: &str) -> String {
    format!("{RESOLVED_BEGIN}\n{text}\n{RESOLVED_END}")
}

/// Takes the span between the sentinel lines. Without sentinels the whole
/// response is returned and `false` signals the fallback.
pub fn extract_resolved(response: &str) -> (String, bool) {
    let Some(b) = response.find(RESOLVED_BEGIN) else {
        return (response.to_string(), false);
    };
    let after = &response[b + RESOLVED_BEGIN.len()..];
    let after = after.strip_prefix("\r\n").or_else(|| after.strip_prefix('\n')).unwrap_or(after);
    let Some(e) = after.rfind(RESOLVED_END) else {
        return (response.to_string(), false);
    };
    let body = &after[..e];
    let body = body.strip_suffix("\r\n").or_else(|| body.strip_suffix('\n')).unwrap_or(body);
    (body.to_string(), true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PassFailurePolicy {
    /// Keep the pass input and continue with a warning.
    #[default]
    KeepPrevious,
    /// Abort the document.
    FailRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorefSettings {
    pub failure_policy: PassFailurePolicy,
    /// Documents above this many tokens are resolved in paragraph segments.
    pub context_budget: usize,
    pub model: String,
    pub max_output: u32,
    /// Where `<case_id>.pass<k>.<type>.txt` files go, if anywhere.
    pub persist_dir: Option<PathBuf>,
}

impl Default for CorefSettings {
    fn default() -> Self {
        CorefSettings {
            failure_policy: PassFailurePolicy::KeepPrevious,
            context_budget: 6000,
            model: DEFAULT_MODEL.to_string(),
            max_output: 8192,
            persist_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRecord {
    pub entity_type: EntityType,
    pub input_digest: String,
    pub output_digest: String,
    pub output_path: Option<PathBuf>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorefTrace {
    pub case_id: String,
    pub per_pass: Vec<PassRecord>,
}

impl CorefTrace {
    /// Every pass consumes the previous pass's output.
    pub fn chain_is_intact(&self) -> bool {
        self.per_pass
            .windows(2)
            .all(|w| w[1].input_digest == w[0].output_digest)
    }

    pub fn warning_count(&self) -> usize {
        self.per_pass.iter().map(|p| p.warnings.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassOutcome {
    pub text: String,
    pub warnings: Vec<String>,
}

/// A contiguous piece of the document plus the whitespace that follows it.
struct Segment<'a> {
    body: &'a str,
    trailing: &'a str,
}

/// Splits at blank-line paragraph breaks, packing paragraphs greedily into
/// segments of at most `budget` tokens. Concatenating body+trailing of every
/// segment reproduces the text.
fn segments(text: &str, budget: usize) -> Vec<Segment<'_>> {
    let tok = WhitespaceTokenizer;
    if tok.tokenize(text).len() <= budget {
        return vec![split_trailing(text)];
    }
    // paragraph boundaries: byte offsets just after a blank-line run
    let mut cuts = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            let mut j = i + 1;
            let mut newlines = 1;
            while j < bytes.len() && (bytes[j] as char).is_ascii_whitespace() {
                if bytes[j] == b'\n' {
                    newlines += 1;
                }
                j += 1;
            }
            if newlines >= 2 && j < bytes.len() {
                cuts.push(j);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    let count = |r: std::ops::Range<usize>| tok.tokenize(&text[r]).len();
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev = 0;
    for cut in cuts.into_iter().chain(std::iter::once(text.len())) {
        if prev > start && count(start..cut) > budget {
            out.push(split_trailing(&text[start..prev]));
            start = prev;
        }
        prev = cut;
    }
    if start < text.len() {
        out.push(split_trailing(&text[start..]));
    }
    out
}

fn split_trailing(s: &str) -> Segment<'_> {
    let body = s.trim_end();
    Segment {
        body,
        trailing: &s[body.len()..],
    }
}

/// One coreference pass for one entity type.
pub fn resolve_type(
    text: &str,
    entity_type: EntityType,
    template: &CorefPromptTemplate,
    gateway: &Gateway,
    settings: &CorefSettings,
) -> Result<PassOutcome> {
    if template.entity_type != entity_type {
        return Err(Error::TemplateInvalid(format!(
            "{} template supplied for the {entity_type} pass",
            template.entity_type
        )));
    }
    let mut warnings = Vec::new();
    let segs = segments(text, settings.context_budget);
    if segs.len() > 1 {
        warnings.push(format!(
            "document exceeds the {}-token coref budget; resolved in {} segments",
            settings.context_budget,
            segs.len()
        ));
    }
    let mut out = String::with_capacity(text.len());
    for seg in &segs {
        if seg.body.is_empty() {
            out.push_str(seg.trailing);
            continue;
        }
        let prompt = template.render(seg.body)?;
        let req = CompletionRequest::new(prompt, StageTag::Coref(entity_type))
            .with_model(settings.model.clone())
            .with_input(seg.body)
            .with_terminator(RESOLVED_END);
        let req = CompletionRequest {
            max_output: settings.max_output,
            ..req
        };
        let resp = gateway.complete(&req)?;
        let (resolved, framed) = extract_resolved(&resp.text);
        if !framed {
            warnings.push(format!("{entity_type} pass: response lacks sentinel lines; using whole response"));
        }
        if resolved.trim().is_empty() {
            let reason = "model returned an empty document".to_string();
            match settings.failure_policy {
                PassFailurePolicy::FailRun => {
                    return Err(Error::PassFailure {
                        entity_type: entity_type.label().to_string(),
                        reason,
                    })
                }
                PassFailurePolicy::KeepPrevious => {
                    warnings.push(format!("{entity_type} pass: {reason}; keeping previous text"));
                    out.push_str(seg.body);
                }
            }
        } else {
            if resolved.chars().count() * 2 < seg.body.chars().count() {
                warnings.push(format!(
                    "{entity_type} pass: output is less than half the input length"
                ));
            }
            out.push_str(&resolved);
        }
        out.push_str(seg.trailing);
    }
    Ok(PassOutcome { text: out, warnings })
}

/// All seven passes in canonical order; intermediate texts are persisted when
/// `settings.persist_dir` is set.
pub fn resolve_document(
    case_id: &str,
    text: &str,
    templates: &CorefTemplates,
    gateway: &Gateway,
    settings: &CorefSettings,
) -> Result<(String, CorefTrace)> {
    if let Some(dir) = &settings.persist_dir {
        fs::create_dir_all(dir).at(dir)?;
    }
    let mut current = text.to_string();
    let mut trace = CorefTrace {
        case_id: case_id.to_string(),
        per_pass: Vec::with_capacity(EntityType::ALL.len()),
    };
    for (k, template) in templates.in_order().enumerate() {
        let t = template.entity_type;
        let input_digest = text_digest(&current);
        let outcome = resolve_type(&current, t, template, gateway, settings)?;
        for w in &outcome.warnings {
            log::warn!("{case_id}: {w}");
        }
        let output_path = match &settings.persist_dir {
            Some(dir) => Some(persist_pass(dir, case_id, k + 1, t, &outcome.text)?),
            None => None,
        };
        trace.per_pass.push(PassRecord {
            entity_type: t,
            input_digest,
            output_digest: text_digest(&outcome.text),
            output_path,
            warnings: outcome.warnings,
        });
        current = outcome.text;
    }
    Ok((current, trace))
}

pub fn pass_file_name(case_id: &str, k: usize, t: EntityType) -> String {
    format!("{case_id}.pass{k}.{}.txt", t.slug())
}

fn persist_pass(dir: &Path, case_id: &str, k: usize, t: EntityType, text: &str) -> Result<PathBuf> {
    let path = dir.join(pass_file_name(case_id, k, t));
    fs::write(&path, text).at(&path)?;
    Ok(path)
}
