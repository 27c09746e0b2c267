//! Feature providers and the table builder.
//!
//! Gap-size features 57–59 are always computed here; 56 uses the lexicon
//! when one is configured. Every other non-placement feature comes from the
//! configured providers, first match wins.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::features::lexical::{is_function_word, syllable_boundaries, syllable_count, Lexicon};
use crate::features::schema::*;
use crate::features::table::{load_features, FeatureRow, FeatureTable};

/// Document-level statistics shared by all gaps of one passage.
#[derive(Debug, Clone)]
pub struct DocumentStats {
    pub word_counts: HashMap<String, usize>,
    pub total_words: usize,
    pub avg_sentence_length: f64,
    pub avg_word_chars: f64,
    pub avg_word_syllables: f64,
    pub type_token_ratio: f64,
}

impl DocumentStats {
    pub fn new(instance: &Instance) -> Self {
        let doc = &instance.document;
        let words: Vec<&str> = doc.tokens.iter().filter(|t| t.is_word).map(|t| t.surface.as_str()).collect();
        let mut word_counts = HashMap::new();
        for w in &words {
            *word_counts.entry(w.to_lowercase()).or_insert(0) += 1;
        }
        let total = words.len().max(1) as f64;
        Self {
            total_words: words.len(),
            avg_sentence_length: words.len() as f64 / doc.sentences.len().max(1) as f64,
            avg_word_chars: words.iter().map(|w| w.chars().count()).sum::<usize>() as f64 / total,
            avg_word_syllables: words.iter().map(|w| syllable_count(w)).sum::<usize>() as f64 / total,
            type_token_ratio: word_counts.len() as f64 / total,
            word_counts,
        }
    }

    pub fn count(&self, word: &str) -> usize {
        self.word_counts.get(&word.to_lowercase()).copied().unwrap_or(0)
    }
}

pub struct GapContext<'a> {
    pub instance: &'a Instance,
    pub doc: &'a DocumentStats,
    pub candidate: usize,
    pub size: usize,
    pub hint: &'a str,
    pub solution: &'a str,
}

pub trait FeatureProvider: Send + Sync {
    fn id(&self) -> &str;

    /// Value of feature `k` for the gap, or `None` if not covered.
    fn value(&self, ctx: &GapContext<'_>, k: usize) -> Option<f64>;
}

/// Resource-free stand-ins for text statistics and the two language-model
/// features. Not faithful to the original resources: k=49 is a unigram
/// frequency proxy raised to the removed fraction of the word, k=50 is 0.5.
#[derive(Debug, Clone, Default)]
pub struct SurrogateProvider;

impl SurrogateProvider {
    pub const COVERED: [usize; 10] = [0, 1, 2, 17, 36, 43, 49, 50, 55, 60];

    pub fn frequency_proxy(word: &str, count: usize) -> f64 {
        let len = word.chars().count() as f64;
        let base = if is_function_word(word) { 0.6 } else { 0.5 * (-0.3 * (len - 2.0)).exp() };
        (base * (count.max(1) as f64).sqrt()).min(0.95)
    }
}

impl FeatureProvider for SurrogateProvider {
    fn id(&self) -> &str {
        "surrogate"
    }

    fn value(&self, ctx: &GapContext<'_>, k: usize) -> Option<f64> {
        let cand = ctx.instance.candidate(ctx.candidate);
        let word = cand.surface.as_str();
        let v = match k {
            0 => ctx.doc.avg_sentence_length,
            1 => ctx.doc.avg_word_chars,
            2 => ctx.doc.avg_word_syllables,
            17 => is_function_word(word) as u8 as f64,
            36 => (ctx.doc.count(word) > 1) as u8 as f64,
            43 => ctx.doc.type_token_ratio,
            BERT_PROBABILITY => {
                let freq = Self::frequency_proxy(word, ctx.doc.count(word));
                freq.powf(ctx.size as f64 / cand.word_length as f64)
            }
            BERT_ENTROPY => 0.5,
            55 => cand.token_index as f64,
            60 => syllable_count(word) as f64,
            _ => return None,
        };
        Some(v)
    }
}

/// Values read from a feature file, keyed by `(candidate, size)`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedProvider {
    id: String,
    rows: HashMap<(usize, usize), [Option<f64>; NUM_FEATURES]>,
}

impl PrecomputedProvider {
    pub fn from_rows(id: impl Into<String>, rows: &[FeatureRow]) -> Self {
        Self { id: id.into(), rows: rows.iter().map(|r| ((r.candidate, r.size), r.values)).collect() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_rows(format!("file:{}", path.display()), &load_features(path)?))
    }
}

impl FeatureProvider for PrecomputedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn value(&self, ctx: &GapContext<'_>, k: usize) -> Option<f64> {
        self.rows.get(&(ctx.candidate, ctx.size)).and_then(|r| r[k])
    }
}

#[derive(Clone, Default)]
pub struct FeatureConfig {
    pub schema: FeatureSchema,
    pub providers: Vec<Arc<dyn FeatureProvider>>,
    pub lexicon: Option<Lexicon>,
    /// Error on uncovered features instead of defaulting them to 0.
    pub strict: bool,
}

impl FeatureConfig {
    pub fn surrogate() -> Self {
        Self { providers: vec![Arc::new(SurrogateProvider)], ..Default::default() }
    }
}

impl std::fmt::Debug for FeatureConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureConfig")
            .field("providers", &self.providers.iter().map(|p| p.id().to_string()).collect::<Vec<_>>())
            .field("lexicon", &self.lexicon.as_ref().map(Lexicon::len))
            .field("strict", &self.strict)
            .finish()
    }
}

/// A feature that was defaulted to 0 in lenient mode, with its cell count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingFeatureWarning {
    pub k: usize,
    pub cells: usize,
}

#[derive(Debug, Clone)]
pub struct FeatureExtraction {
    pub table: FeatureTable,
    pub warnings: Vec<MissingFeatureWarning>,
}

impl FeatureExtraction {
    pub fn defaulted_cells(&self) -> usize {
        self.warnings.iter().map(|w| w.cells).sum()
    }
}

/// Build the static and size feature table for every `(i, j)` of `instance`.
pub fn compute_features(instance: &Instance, config: &FeatureConfig) -> Result<FeatureExtraction> {
    if instance.candidates.is_empty() {
        return Err(Error::NotEnoughCandidates { need: 1, have: 0 });
    }
    let stats = DocumentStats::new(instance);
    let placement = config.schema.indices_of(Dependency::PlacementDependent);
    let mut missing: BTreeMap<usize, usize> = BTreeMap::new();
    let mut rows = Vec::with_capacity(instance.n());
    for (i, cand) in instance.candidates.candidates.iter().enumerate() {
        let boundaries = syllable_boundaries(&cand.surface);
        let mut per_size = Vec::with_capacity(cand.word_length - 1);
        for size in cand.sizes() {
            let (hint, solution) = cand.split(size);
            let ctx = GapContext { instance, doc: &stats, candidate: i, size, hint: &hint, solution: &solution };
            let mut row = [0.0; NUM_FEATURES];
            for (k, slot) in row.iter_mut().enumerate() {
                if placement.contains(&k) {
                    continue;
                }
                let value = match k {
                    REFERENTIAL_TH => Some((hint.to_lowercase() == "th") as u8 as f64),
                    SYLLABLE_BREAK => Some(boundaries.contains(&(cand.word_length - size)) as u8 as f64),
                    GAP_LENGTH => Some(size as f64),
                    COMPOUND_BREAK if config.lexicon.is_some() => {
                        let lex = config.lexicon.as_ref().unwrap();
                        Some((lex.contains(&hint) && lex.contains(&solution)) as u8 as f64)
                    }
                    _ => config.providers.iter().find_map(|p| p.value(&ctx, k)),
                };
                match value {
                    Some(v) => *slot = v,
                    None if config.strict => return Err(Error::MissingFeature { k, candidate: i, size }),
                    None => *missing.entry(k).or_insert(0) += 1,
                }
            }
            per_size.push(row);
        }
        rows.push(per_size);
    }
    let warnings: Vec<_> = missing.into_iter().map(|(k, cells)| MissingFeatureWarning { k, cells }).collect();
    if !warnings.is_empty() {
        log::info!(
            "{} features defaulted to 0 over {} cells",
            warnings.len(),
            warnings.iter().map(|w| w.cells).sum::<usize>()
        );
    }
    Ok(FeatureExtraction { table: FeatureTable::from_raw(config.schema.clone(), rows)?, warnings })
}
