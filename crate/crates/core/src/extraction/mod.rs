//! Chunk-level entity and relationship extraction.

mod parse;
mod prompt;

pub use parse::{
    parse_records, serialize_records, Delimiters, ParseOutcome, RawEntityRecord,
    RawRelationshipRecord, RecordParser, TypeMode,
};
pub use prompt::{
    ExtractionPromptConfig, PromptVariant, DEFINITIONS_HEADING, FILTER_HEADING, ORDER_HEADING,
    STRUCTURED_HEADINGS,
};

use crate::error::Result;
use crate::gateway::{CompletionRequest, CompletionResponse, Gateway, StageTag, DEFAULT_MODEL};
use crate::ingest::Chunk;
use crate::lexicon::Lexicon;

#[derive(Debug, Clone)]
pub struct ExtractionSettings {
    pub model: String,
    pub max_output: u32,
    pub type_mode: TypeMode,
}

impl Default for ExtractionSettings {
    fn default() -> Self {
        ExtractionSettings {
            model: DEFAULT_MODEL.to_string(),
            max_output: 4096,
            type_mode: TypeMode::Strict,
        }
    }
}

/// Everything produced for one chunk, kept for audit.
#[derive(Debug, Clone)]
pub struct ChunkExtraction {
    pub chunk_id: usize,
    pub prompt: String,
    pub response: CompletionResponse,
    pub outcome: ParseOutcome,
}

impl ChunkExtraction {
    /// True when the response produced no usable record.
    pub fn is_empty(&self) -> bool {
        self.outcome.record_count() == 0
    }
}

pub fn stage_for(variant: PromptVariant) -> StageTag {
    match variant {
        PromptVariant::Structured => StageTag::Extraction,
        PromptVariant::Baseline => StageTag::BaselineExtraction,
    }
}

/// Renders the prompt for `chunk`, sends it, and parses the reply. Only
/// gateway and template errors are returned; parse problems become warnings.
pub fn extract_chunk(
    chunk: &Chunk,
    config: &ExtractionPromptConfig,
    gateway: &Gateway,
    settings: &ExtractionSettings,
) -> Result<ChunkExtraction> {
    let prompt = config.render(&chunk.text)?;
    let mut req = CompletionRequest::new(prompt.clone(), stage_for(config.variant))
        .with_model(settings.model.clone())
        .with_input(chunk.text.clone())
        .with_terminator(config.delimiters.completion_marker.clone());
    req.max_output = settings.max_output;
    let response = gateway.complete(&req)?;
    let mut outcome = RecordParser::new(config.delimiters.clone())
        .with_type_mode(settings.type_mode)
        .parse(&response.text, chunk.chunk_id);
    if outcome.record_count() == 0 {
        outcome
            .warnings
            .push(format!("chunk {}: extraction produced no records", chunk.chunk_id));
    }
    Ok(ChunkExtraction {
        chunk_id: chunk.chunk_id,
        prompt,
        response,
        outcome,
    })
}

/// Drops entities whose name contains a lexicon term as whole words. Identity
/// when `enabled` is false.
pub fn post_filter_entities(
    entities: Vec<RawEntityRecord>,
    lexicon: &Lexicon,
    enabled: bool,
) -> Vec<RawEntityRecord> {
    if !enabled {
        return entities;
    }
    entities.into_iter().filter(|e| !lexicon.matches(&e.name)).collect()
}
