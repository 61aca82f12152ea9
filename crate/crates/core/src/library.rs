//! The disassembly library: instruction -> primitive sequence exemplars with
//! hashed character n-gram embeddings and exact cosine retrieval.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::LibraryError;
use crate::model::PrimitiveSequence;

pub const LIBRARY_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Embedding parameters, stored in the library header and checked on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedHeader {
    pub dim: usize,
    pub hash: String,
    pub ngram: usize,
}

/// Maps instruction text to a fixed-length vector. Implementations must be
/// deterministic.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
    fn header(&self) -> EmbedHeader;
}

/// Hashed character n-gram term-frequency embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramEmbedder {
    pub dim: usize,
    pub ngram: usize,
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        Self { dim: 512, ngram: 3 }
    }
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize_instruction(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Embedder for NgramEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let norm = normalize_instruction(text);
        if norm.is_empty() || self.dim == 0 || self.ngram == 0 {
            return v;
        }
        let padded: Vec<char> = format!(" {norm} ").chars().collect();
        let mut counts: HashMap<usize, u32> = HashMap::new();
        let mut buf = String::new();
        for gram in padded.windows(self.ngram) {
            buf.clear();
            buf.extend(gram);
            let bucket = (fnv1a64(buf.as_bytes()) % self.dim as u64) as usize;
            *counts.entry(bucket).or_default() += 1;
        }
        for (bucket, count) in counts {
            v[bucket] = 1.0 + libm::log(count as f64);
        }
        let len = libm::sqrt(v.iter().map(|x| x * x).sum());
        if len > 0.0 {
            v.iter_mut().for_each(|x| *x /= len);
        }
        v
    }

    fn header(&self) -> EmbedHeader {
        EmbedHeader {
            dim: self.dim,
            hash: "fnv1a64".into(),
            ngram: self.ngram,
        }
    }
}

/// Embedding with the default 512-bucket character 3-gram embedder.
pub fn embed_instruction(text: &str) -> Vec<f64> {
    NgramEmbedder::default().embed(text)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Stable identifier of an instruction.
pub fn entry_id(instruction: &str) -> String {
    format!("{:016x}", fnv1a64(instruction.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisassemblyEntry {
    pub entry_id: String,
    pub instruction: String,
    pub sequence: PrimitiveSequence,
    pub embedding: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    entry_id: String,
    instruction: String,
    sequence: Vec<String>,
    embedding: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    version: u32,
    embed: EmbedHeader,
    entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    header: EmbedHeader,
    entries: Vec<DisassemblyEntry>,
}

impl Library {
    /// Embeds `pairs`; a repeated instruction keeps its first position and
    /// its last sequence.
    pub fn build<I, S>(pairs: I, embedder: &dyn Embedder) -> Self
    where
        I: IntoIterator<Item = (S, PrimitiveSequence)>,
        S: Into<String>,
    {
        let mut entries: Vec<DisassemblyEntry> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (instruction, sequence) in pairs {
            let instruction = instruction.into();
            if let Some(&i) = index.get(&instruction) {
                entries[i].sequence = sequence;
                continue;
            }
            index.insert(instruction.clone(), entries.len());
            entries.push(DisassemblyEntry {
                entry_id: entry_id(&instruction),
                embedding: embedder.embed(&instruction),
                instruction,
                sequence,
            });
        }
        Self {
            header: embedder.header(),
            entries,
        }
    }

    pub fn header(&self) -> &EmbedHeader {
        &self.header
    }

    pub fn entries(&self) -> &[DisassemblyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top-`k` entries by cosine similarity to `query`. Equal scores rank an
    /// entry whose normalized text equals the query first, then by entry id.
    /// Entries below `min_similarity` are withheld when it is set.
    pub fn retrieve_topk(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
        min_similarity: Option<f64>,
    ) -> Vec<(&DisassemblyEntry, f64)> {
        let q = embedder.embed(query);
        let mut scored: Vec<(&DisassemblyEntry, f64)> = self
            .entries
            .iter()
            .map(|e| (e, cosine(&q, &e.embedding)))
            .filter(|(_, s)| min_similarity.is_none_or(|m| *s >= m))
            .collect();
        let norm = normalize_instruction(query);
        let inexact = |e: &DisassemblyEntry| normalize_instruction(&e.instruction) != norm;
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| inexact(a.0).cmp(&inexact(b.0)))
                .then_with(|| a.0.entry_id.cmp(&b.0.entry_id))
        });
        scored.truncate(k);
        scored
    }

    pub fn to_json(&self) -> String {
        let file = LibraryFile {
            version: LIBRARY_VERSION,
            embed: self.header.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| EntryRecord {
                    entry_id: e.entry_id.clone(),
                    instruction: e.instruction.clone(),
                    sequence: e.sequence.labels(),
                    embedding: e.embedding.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("library serializes")
    }

    /// Parses a library file and checks it was built by `embedder`.
    pub fn from_json(json: &str, embedder: &dyn Embedder) -> Result<Self, LibraryError> {
        let file: LibraryFile = serde_json::from_str(json)?;
        if file.version != LIBRARY_VERSION {
            return Err(LibraryError::HeaderMismatch(format!(
                "version {} (expected {LIBRARY_VERSION})",
                file.version
            )));
        }
        let expected = embedder.header();
        if file.embed != expected {
            return Err(LibraryError::HeaderMismatch(format!(
                "file has {:?}, embedder has {:?}",
                file.embed, expected
            )));
        }
        let entries = file
            .entries
            .into_iter()
            .map(|r| {
                if r.embedding.len() != expected.dim {
                    return Err(LibraryError::HeaderMismatch(format!(
                        "entry {} has {} dimensions",
                        r.entry_id,
                        r.embedding.len()
                    )));
                }
                Ok(DisassemblyEntry {
                    sequence: PrimitiveSequence::parse(&r.sequence)?,
                    entry_id: r.entry_id,
                    instruction: r.instruction,
                    embedding: r.embedding,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            header: file.embed,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), LibraryError> {
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_json().as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path, embedder: &dyn Embedder) -> Result<Self, LibraryError> {
        Self::from_json(&fs::read_to_string(path)?, embedder)
    }
}

/// Builds a library with the default embedder and writes it to `path`.
pub fn build_library<I, S>(pairs: I, path: &Path) -> Result<Library, LibraryError>
where
    I: IntoIterator<Item = (S, PrimitiveSequence)>,
    S: Into<String>,
{
    let lib = Library::build(pairs, &NgramEmbedder::default());
    lib.save(path)?;
    Ok(lib)
}
