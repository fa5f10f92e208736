//! Corpus loading, Opinion-section isolation and overlapping token chunking.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 300;
pub const DEFAULT_OVERLAP: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub case_id: String,
    pub raw_text: String,
    pub opinion_text: String,
    pub word_count: usize,
    /// Source file, when loaded from disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CaseDocument {
    /// A document whose text is already the Opinion section.
    pub fn pre_extracted(case_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        CaseDocument {
            case_id: case_id.into(),
            word_count: count_words(&text),
            opinion_text: text.clone(),
            raw_text: text,
            source: None,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: usize,
    /// Half-open token range into the source text.
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub case_id: String,
}

impl Chunk {
    pub fn token_span(&self) -> Range<usize> {
        self.start..self.end
    }
}

pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

// ---------------------------------------------------------------------------
// Tokenizers

/// Splits text into tokens, reported as byte ranges into the input.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn tokenize(&self, text: &str) -> Vec<Range<usize>>;
}

/// Maximal runs of non-whitespace characters.
#[derive(Debug, Default, Clone, Copy)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn tokenize(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    spans.push(s..i);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push(s..text.len());
        }
        spans
    }
}

type TokenizerFactory = Box<dyn Fn() -> Arc<dyn Tokenizer> + Send + Sync>;

/// Tokenizers selectable by name from configuration.
pub struct TokenizerRegistry {
    factories: BTreeMap<String, TokenizerFactory>,
}

impl TokenizerRegistry {
    pub fn empty() -> Self {
        TokenizerRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("whitespace", || Arc::new(WhitespaceTokenizer));
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Arc<dyn Tokenizer> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Tokenizer>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "tokenizer",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

impl Default for TokenizerRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

// ---------------------------------------------------------------------------
// Chunking

/// Token ranges for `n` tokens with the given window and overlap.
pub fn chunk_spans(n: usize, chunk_size: usize, overlap: usize) -> Result<Vec<Range<usize>>> {
    if chunk_size == 0 || chunk_size <= overlap {
        return Err(Error::InvalidConfig(format!(
            "chunk size ({chunk_size}) must be at least 1 and larger than overlap ({overlap})"
        )));
    }
    let stride = chunk_size - overlap;
    let mut spans = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + chunk_size).min(n);
        spans.push(start..end);
        if end == n {
            break;
        }
        start += stride;
    }
    Ok(spans)
}

/// Chunks `text` with the default whitespace tokenizer.
pub fn chunk_text(text: &str, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>> {
    chunk_with(&WhitespaceTokenizer, "", text, chunk_size, overlap)
}

/// Chunks `text`; each chunk's text is the source slice from its first token's
/// start to its last token's end, so inner whitespace is kept verbatim.
pub fn chunk_with(
    tokenizer: &dyn Tokenizer,
    case_id: &str,
    text: &str,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<Chunk>> {
    let tokens = tokenizer.tokenize(text);
    let spans = chunk_spans(tokens.len(), chunk_size, overlap)?;
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(chunk_id, span)| Chunk {
            chunk_id,
            text: text[tokens[span.start].start..tokens[span.end - 1].end].to_string(),
            start: span.start,
            end: span.end,
            case_id: case_id.to_string(),
        })
        .collect())
}

/// Writes chunks as JSON lines: {case_id, chunk_id, start, end, text}.
pub fn write_chunk_dump(chunks: &[Chunk], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for c in chunks {
        serde_json::to_writer(&mut out, c)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).at(path)?;
    f.write_all(&out).at(path)
}

pub fn read_chunk_dump(path: &Path) -> Result<Vec<Chunk>> {
    let text = fs::read_to_string(path).at(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

// ---------------------------------------------------------------------------
// Opinion extraction

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionMarkers {
    /// Headings that open the Opinion section.
    pub start_headings: Vec<String>,
    /// Headings that close it.
    pub end_headings: Vec<String>,
}

impl Default for SectionMarkers {
    fn default() -> Self {
        SectionMarkers {
            start_headings: ["Opinion", "OPINION", "Memorandum Opinion"]
                .map(String::from)
                .to_vec(),
            end_headings: [
                "Footnotes",
                "Dissent",
                "Dissenting Opinion",
                "Concurrence",
                "Concurring Opinion",
                "Appendix",
                "Notes",
                "End of Document",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

fn is_heading(line: &str, headings: &[String]) -> bool {
    let l = line.trim().trim_end_matches(':').trim();
    !l.is_empty() && headings.iter().any(|h| h.trim().eq_ignore_ascii_case(l))
}

/// Restricts `opinion_text` to the Opinion section. Without a start heading the
/// raw text passes through and a warning is recorded.
pub fn extract_opinion(mut doc: CaseDocument, markers: &SectionMarkers) -> CaseDocument {
    let raw = doc.raw_text.as_str();
    let mut offset = 0;
    let mut body_start = None;
    let mut body_end = raw.len();
    for line in raw.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        match body_start {
            None if is_heading(line, &markers.start_headings) => body_start = Some(offset),
            Some(_) if is_heading(line, &markers.end_headings) => {
                body_end = line_start;
                break;
            }
            _ => {}
        }
    }
    match body_start {
        Some(s) => {
            let span = &raw[s..body_end];
            let trimmed = span.trim();
            doc.opinion_text = trimmed.to_string();
            if trimmed.is_empty() {
                doc.warnings
                    .push("opinion heading found but section is empty".to_string());
            }
        }
        None => {
            doc.opinion_text = doc.raw_text.clone();
            doc.warnings.push(format!(
                "no opinion heading found in case {}; using full text",
                doc.case_id
            ));
        }
    }
    doc.word_count = count_words(&doc.opinion_text);
    doc
}

// ---------------------------------------------------------------------------
// Corpus loading

#[derive(Debug, Default)]
pub struct CorpusLoad {
    pub documents: Vec<CaseDocument>,
    /// Files that could not be loaded, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

/// Reads a manifest of `filename = case_id` (or tab-separated) lines.
pub fn read_manifest(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).at(path)?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once('\t'))
            .ok_or_else(|| {
                Error::InvalidConfig(format!("manifest line {}: expected filename = case_id", i + 1))
            })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "manifest line {}: empty filename or case id",
                i + 1
            )));
        }
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

/// Loads every `*.txt` file in `dir` (sorted by name) as one raw case document.
/// Opinion extraction is a separate step.
pub fn load_corpus(dir: &Path, manifest: Option<&Path>) -> Result<CorpusLoad> {
    let ids = match manifest {
        Some(m) => read_manifest(m)?,
        None => HashMap::new(),
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "txt")
                && !p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    files.sort();

    let mut load = CorpusLoad::default();
    let mut seen = HashSet::new();
    for path in files {
        let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = path.file_stem().and_then(|n| n.to_str()).unwrap_or_default();
        let case_id = ids.get(file_name).cloned().unwrap_or_else(|| stem.to_string());
        if case_id.is_empty() {
            load.failures.push((path, "empty case id".to_string()));
            continue;
        }
        if !seen.insert(case_id.clone()) {
            load.failures
                .push((path, format!("duplicate case id {case_id:?}")));
            continue;
        }
        match fs::read(&path).map(String::from_utf8) {
            Ok(Ok(raw)) => {
                let word_count = count_words(&raw);
                load.documents.push(CaseDocument {
                    case_id,
                    opinion_text: raw.clone(),
                    raw_text: raw,
                    word_count,
                    source: Some(path),
                    warnings: Vec::new(),
                });
            }
            Ok(Err(e)) => load.failures.push((path, format!("not valid UTF-8: {e}"))),
            Err(e) => load.failures.push((path, e.to_string())),
        }
    }
    if load.documents.is_empty() && load.failures.is_empty() {
        return Err(Error::CorpusEmpty(dir.to_path_buf()));
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn stride_arithmetic() {
        let spans = chunk_spans(600, 300, 50).unwrap();
        assert_eq!(spans, vec![0..300, 250..550, 500..600]);
        assert_eq!(chunk_spans(100, 300, 50).unwrap(), vec![0..100]);
        assert_eq!(chunk_spans(300, 300, 50).unwrap(), vec![0..300]);
        assert!(chunk_spans(0, 300, 50).unwrap().is_empty());
    }

    #[test]
    fn invalid_chunk_config() {
        assert!(matches!(chunk_spans(10, 50, 50), Err(Error::InvalidConfig(_))));
        assert!(matches!(chunk_spans(10, 0, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn chunk_text_keeps_token_boundaries() {
        let text = words(600);
        let chunks = chunk_text(&text, 300, 50).unwrap();
        assert_eq!(chunks.len(), 3);
        assert!(chunks[1].text.starts_with("w250 "));
        assert!(chunks[1].text.ends_with(" w549"));
        assert_eq!(chunks[2].text.split_whitespace().count(), 100);
    }

    #[test]
    fn whitespace_tokenizer_handles_unicode() {
        let t = WhitespaceTokenizer.tokenize("  São  Paulo\tI-35\n");
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn registry_lookup() {
        let r = TokenizerRegistry::default();
        assert_eq!(r.get("whitespace").unwrap().name(), "whitespace");
        assert!(matches!(r.get("bpe"), Err(Error::UnknownStrategy { .. })));
    }

    #[test]
    fn opinion_between_headings() {
        let doc = CaseDocument::pre_extracted("c", "Header stuff\nOpinion\nThe body.\nMore body.\nFootnotes\n1. note\n");
        let d = extract_opinion(doc, &SectionMarkers::default());
        assert_eq!(d.opinion_text, "The body.\nMore body.");
        assert!(d.raw_text.contains(&d.opinion_text));
        assert!(d.warnings.is_empty());
        assert_eq!(d.word_count, 4);
    }

    #[test]
    fn opinion_missing_passes_through() {
        let doc = CaseDocument::pre_extracted("c", "Just a narrative with an opinion inline.");
        let d = extract_opinion(doc, &SectionMarkers::default());
        assert_eq!(d.opinion_text, d.raw_text);
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn opinion_first_heading_wins() {
        let doc = CaseDocument::pre_extracted("c", "OPINION\nfirst\nOpinion\nsecond\n");
        let d = extract_opinion(doc, &SectionMarkers::default());
        assert_eq!(d.opinion_text, "first\nOpinion\nsecond");
    }

    #[test]
    fn corpus_naming_and_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_corpus(dir.path(), None), Err(Error::CorpusEmpty(_))));
        fs::write(dir.path().join("case02.txt"), "b b").unwrap();
        fs::write(dir.path().join("case01.txt"), "a").unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let load = load_corpus(dir.path(), None).unwrap();
        let ids: Vec<_> = load.documents.iter().map(|d| d.case_id.as_str()).collect();
        assert_eq!(ids, ["case01", "case02"]);
        assert_eq!(load.documents[1].word_count, 2);
    }

    #[test]
    fn corpus_manifest_and_bad_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "x").unwrap();
        fs::write(dir.path().join("b.txt"), [0xff, 0xfe]).unwrap();
        let manifest = dir.path().join("ids.map");
        fs::write(&manifest, "# ids\na.txt = smith_v_us\n").unwrap();
        let load = load_corpus(dir.path(), Some(&manifest)).unwrap();
        assert_eq!(load.documents[0].case_id, "smith_v_us");
        assert_eq!(load.failures.len(), 1);
    }

    #[test]
    fn chunk_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("chunks.jsonl");
        let chunks = chunk_with(&WhitespaceTokenizer, "c1", &words(40), 16, 4).unwrap();
        write_chunk_dump(&chunks, &p).unwrap();
        assert_eq!(read_chunk_dump(&p).unwrap(), chunks);
    }
}
