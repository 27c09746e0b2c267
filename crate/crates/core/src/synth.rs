//! Synthetic material for tests, benchmarks and simulation: random passages,
//! random tree ensembles, a hidden difficulty function used to label gaps,
//! and five fixed 40-candidate passages.

use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{CandidatePolicy, Instance};
use crate::error::{Error, Result};
use crate::features::{
    assemble_vector, compute_features, FeatureConfig, FeatureSchema, FeatureTable, FeatureVector, PlacementContext,
    PlacementFeature, BERT_PROBABILITY, GAP_LENGTH, NUM_FEATURES,
};
use crate::model::{train_gbrt, Node, TrainConfig, Tree, TreeEnsemble};

/// Five short passages with exactly 40 candidates each under the default
/// candidate policy.
pub const FIXTURE_PASSAGES: [&str; 5] = [
    include_str!("../fixtures/passage_1.txt"),
    include_str!("../fixtures/passage_2.txt"),
    include_str!("../fixtures/passage_3.txt"),
    include_str!("../fixtures/passage_4.txt"),
    include_str!("../fixtures/passage_5.txt"),
];

const WORDS: &[&str] = &[
    "at", "be", "by", "do", "go", "he", "if", "in", "is", "it", "me", "my", "no", "of", "on", "or", "so", "to", "up",
    "us", "we", "and", "are", "big", "but", "can", "cat", "day", "dog", "far", "few", "for", "fun", "had", "has",
    "her", "him", "his", "hot", "how", "its", "law", "let", "man", "new", "not", "now", "old", "one", "our", "out",
    "own", "red", "run", "sat", "saw", "sea", "she", "sun", "the", "too", "two", "was", "way", "who", "why", "yes",
    "yet", "you", "also", "back", "bird", "blue", "boat", "book", "city", "cold", "dark", "door", "each", "even",
    "face", "farm", "fire", "fish", "food", "from", "girl", "good", "hand", "have", "here", "hill", "home", "idea",
    "into", "just", "kind", "lake", "land", "last", "life", "like", "long", "look", "made", "make", "many", "more",
    "most", "much", "name", "near", "next", "only", "open", "over", "part", "road", "room", "said", "same", "ship",
    "side", "some", "song", "star", "such", "take", "than", "that", "them", "then", "they", "this", "time", "tree",
    "very", "wall", "warm", "water", "when", "wind", "with", "word", "work", "year", "about", "after", "again",
    "bread", "child", "could", "early", "earth", "every", "field", "first", "found", "green", "happy", "heart",
    "house", "large", "learn", "light", "might", "money", "music", "never", "night", "often", "other", "paper",
    "place", "plant", "river", "small", "sound", "still", "story", "table", "their", "there", "these", "thing",
    "think", "three", "under", "until", "voice", "watch", "where", "which", "while", "white", "world", "would",
    "write", "young", "animal", "answer", "before", "behind", "better", "bridge", "change", "letter", "little",
    "market", "mother", "number", "people", "person", "should", "simple", "spring", "street", "summer", "though",
    "toward", "travel", "winter", "against", "another", "because", "between", "brought", "country", "evening",
    "example", "through", "village", "without", "children", "question", "together", "language", "mountain",
    "sentence", "remember", "somebody", "different", "important", "beautiful", "yesterday", "knowledge",
    "following", "sometimes", "understand", "everything", "government", "literature",
];

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// A passage with `candidates` candidate words (all at most `max_len`
/// characters) spread over interior sentences of 2 to 6 words, framed by a
/// fixed first and last sentence. About one word in five repeats an
/// earlier one.
pub fn random_passage<R: Rng>(rng: &mut R, candidates: usize, max_len: usize) -> String {
    let pool: Vec<&str> = WORDS.iter().copied().filter(|w| w.len() <= max_len.max(2)).collect();
    let mut used: Vec<&str> = Vec::new();
    let mut out = String::from("We begin here.");
    let mut left = candidates;
    while left > 0 {
        let k = rng.random_range(2..=6usize).min(left);
        let words: Vec<&str> = (0..k)
            .map(|_| {
                let w = if !used.is_empty() && rng.random_bool(0.2) {
                    *used.choose(rng).expect("non-empty")
                } else {
                    *pool.choose(rng).expect("non-empty pool")
                };
                used.push(w);
                w
            })
            .collect();
        out.push(' ');
        out.push_str(&capitalize(words[0]));
        for w in &words[1..] {
            out.push(' ');
            out.push_str(w);
        }
        out.push('.');
        left -= k;
    }
    out.push_str(" That is all.");
    out
}

fn random_tree<R: Rng>(rng: &mut R, depth: usize, schema: &FeatureSchema) -> Tree {
    fn grow<R: Rng>(rng: &mut R, nodes: &mut Vec<Node>, depth: usize, schema: &FeatureSchema) -> usize {
        let at = nodes.len();
        if depth == 0 || rng.random_bool(0.2) {
            nodes.push(Node::Leaf { value: rng.random_range(-0.3..0.3) });
            return at;
        }
        let (feature, threshold) = match rng.random_range(0..6) {
            0 => (schema.placement.index(PlacementFeature::OccursAsGap), 0.5),
            1 => (schema.placement.index(PlacementFeature::GapsInSentence), rng.random_range(0.0..4.0)),
            2 => (schema.placement.index(PlacementFeature::PrecedingGaps), rng.random_range(0.0..4.0)),
            3 => (schema.placement.index(PlacementFeature::PrecedingGapsInSentence), rng.random_range(0.0..3.0)),
            4 => (GAP_LENGTH, rng.random_range(1..5) as f64 + 0.5),
            _ => (BERT_PROBABILITY, rng.random_range(0.0..1.0)),
        };
        nodes.push(Node::Leaf { value: 0.0 });
        let left = grow(rng, nodes, depth - 1, schema);
        let right = grow(rng, nodes, depth - 1, schema);
        nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, depth, schema);
    Tree { nodes }
}

/// Random ensemble over placement features, gap length and the language
/// model probability.
pub fn random_ensemble<R: Rng>(rng: &mut R, trees: usize, depth: usize) -> TreeEnsemble {
    let schema = FeatureSchema::default();
    let base = rng.random_range(0.2..0.8);
    let shrinkage = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
    let trees = (0..trees.max(1)).map(|_| random_tree(rng, depth, &schema)).collect();
    TreeEnsemble::new(base, shrinkage, trees).expect("random trees are well formed")
}

/// Ground-truth error rate of a gap used to label synthetic data: a
/// logistic function of predictability, gap length and gap crowding.
pub fn hidden_difficulty(x: &[f64; NUM_FEATURES]) -> f64 {
    let p = FeatureSchema::default().placement;
    let z = -6.5 + 8.5 * (1.0 - x[BERT_PROBABILITY]) + 0.8 * x[GAP_LENGTH] - 1.0 * x[17]
        + 0.3 * x[p.index(PlacementFeature::OccursAsGap)]
        + 0.12 * x[p.index(PlacementFeature::GapsInSentence)]
        + 0.02 * x[p.index(PlacementFeature::PrecedingGaps)];
    1.0 / (1.0 + (-z).exp())
}

/// Features from the built-in surrogate providers.
pub fn surrogate_table(instance: &Instance) -> Result<FeatureTable> {
    Ok(compute_features(instance, &FeatureConfig::surrogate())?.table)
}

pub fn fixture_instance(k: usize) -> Result<(Arc<Instance>, Arc<FeatureTable>)> {
    let text = FIXTURE_PASSAGES.get(k).ok_or(Error::IndexOutOfRange { index: k, len: FIXTURE_PASSAGES.len() })?;
    let inst = Instance::from_text(text, &CandidatePolicy::default())?;
    let table = surrogate_table(&inst)?;
    Ok((Arc::new(inst), Arc::new(table)))
}

/// Rows sampled from random passages under random placements, labelled by
/// [`hidden_difficulty`] plus Gaussian noise (clamped to `[0, 1]`).
pub fn training_data(seed: u64, passages: usize, noise: f64) -> Result<(Vec<FeatureVector>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for _ in 0..passages {
        let n = rng.random_range(20..=50);
        let text = random_passage(&mut rng, n, 12);
        let inst = Instance::from_text(&text, &CandidatePolicy::default())?;
        let table = surrogate_table(&inst)?;
        let ctx = PlacementContext::new(&inst);
        for _ in 0..3 {
            let m = rng.random_range(1..=inst.n());
            let mut idx: Vec<usize> = (0..inst.n()).collect();
            idx.shuffle(&mut rng);
            let mut b = vec![false; inst.n()];
            for &i in &idx[..m] {
                b[i] = true;
            }
            for i in (0..inst.n()).filter(|&i| b[i]) {
                let j = rng.random_range(1..inst.candidate(i).word_length);
                let x = assemble_vector(&table, &ctx, i, j, &b)?;
                let y = (hidden_difficulty(&x.0) + normal.sample(&mut rng)).clamp(0.0, 1.0);
                xs.push(x);
                ys.push(y);
            }
        }
    }
    Ok((xs, ys))
}

/// The reference 50-tree, depth-4 model trained on noise-free synthetic
/// labels.
pub fn fixture_model() -> Result<TreeEnsemble> {
    let (x, y) = training_data(7, 60, 0.0)?;
    train_gbrt(&x, &y, &TrainConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_forty_candidates() {
        for text in FIXTURE_PASSAGES {
            let inst = Instance::from_text(text, &CandidatePolicy::default()).unwrap();
            assert_eq!(inst.n(), 40);
            assert_eq!(inst.document.sentences.len(), 7);
        }
    }

    #[test]
    fn random_passage_has_requested_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 6, 12, 40] {
            let text = random_passage(&mut rng, n, 6);
            let inst = Instance::from_text(&text, &CandidatePolicy::default()).unwrap();
            assert_eq!(inst.n(), n, "{text}");
            assert!(inst.candidates.candidates.iter().all(|c| c.word_length <= 6));
        }
    }
}
