use std::ops::Range;

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::features::schema::PlacementFeature;

/// `v[i][h] = 1` iff candidates `i != h` have equal surfaces, ignoring case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SameWordMatrix {
    n: usize,
    partners: Vec<Vec<usize>>,
}

impl SameWordMatrix {
    pub fn new(instance: &Instance) -> Self {
        let lowered: Vec<String> = instance.candidates.candidates.iter().map(|c| c.surface.to_lowercase()).collect();
        let n = lowered.len();
        let partners = (0..n).map(|i| (0..n).filter(|&h| h != i && lowered[h] == lowered[i]).collect()).collect();
        Self { n, partners }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, h: usize) -> bool {
        self.partners[i].binary_search(&h).is_ok()
    }

    pub fn partners(&self, i: usize) -> &[usize] {
        &self.partners[i]
    }
}

/// Placement feature values for one candidate under a given selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlacementFeatures {
    pub occurs_as_gap: u32,
    pub gaps_in_sentence: u32,
    pub preceding_gaps: u32,
    pub preceding_gaps_in_sentence: u32,
}

impl PlacementFeatures {
    pub fn get(&self, f: PlacementFeature) -> u32 {
        match f {
            PlacementFeature::OccursAsGap => self.occurs_as_gap,
            PlacementFeature::GapsInSentence => self.gaps_in_sentence,
            PlacementFeature::PrecedingGaps => self.preceding_gaps,
            PlacementFeature::PrecedingGapsInSentence => self.preceding_gaps_in_sentence,
        }
    }

    pub fn as_array(&self) -> [u32; 4] {
        PlacementFeature::ALL.map(|f| self.get(f))
    }
}

/// Sentence membership and same-word structure needed for placement features.
#[derive(Debug, Clone)]
pub struct PlacementContext {
    pub same_word: SameWordMatrix,
    sentence_of: Vec<Range<usize>>,
}

impl PlacementContext {
    pub fn new(instance: &Instance) -> Self {
        let n = instance.n();
        let sentence_of = (0..n).map(|i| instance.candidates.sentence_members(i)).collect();
        Self { same_word: SameWordMatrix::new(instance), sentence_of }
    }

    pub fn n(&self) -> usize {
        self.sentence_of.len()
    }

    /// Candidate indices in the sentence containing candidate `i`.
    pub fn sentence(&self, i: usize) -> Range<usize> {
        self.sentence_of[i].clone()
    }

    /// Counts for candidate `i` given the selection `b`. The sentence count
    /// includes `b[i]` itself; same-word occurrence never does.
    pub fn features(&self, b: &[bool], i: usize) -> Result<PlacementFeatures> {
        let n = self.n();
        if b.len() != n {
            return Err(Error::LengthMismatch { left: b.len(), right: n });
        }
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let sent = self.sentence(i);
        let count = |r: Range<usize>| b[r].iter().filter(|&&x| x).count() as u32;
        Ok(PlacementFeatures {
            occurs_as_gap: self.same_word.partners(i).iter().any(|&h| b[h]) as u32,
            gaps_in_sentence: count(sent.clone()),
            preceding_gaps: count(0..i),
            preceding_gaps_in_sentence: count(sent.start..i),
        })
    }

    /// Domain of each placement feature when candidate `i` is considered
    /// with at most `m` gaps in total; used for linking bounds.
    pub fn domain(&self, i: usize, m: usize) -> [(u32, u32); 4] {
        let sent = self.sentence(i);
        let og_hi = !self.same_word.partners(i).is_empty() as u32;
        PlacementFeature::ALL.map(|f| match f {
            PlacementFeature::OccursAsGap => (0, og_hi),
            PlacementFeature::GapsInSentence => (0, sent.len().min(m) as u32),
            PlacementFeature::PrecedingGaps => (0, i.min(m) as u32),
            PlacementFeature::PrecedingGapsInSentence => (0, (i - sent.start).min(m) as u32),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CandidatePolicy, Instance};

    fn ctx(text: &str) -> PlacementContext {
        PlacementContext::new(&Instance::from_text(text, &CandidatePolicy::default()).unwrap())
    }

    #[test]
    fn empty_selection_gives_zeros() {
        let c = ctx("Start here. The cat and the dog. End here.");
        let b = vec![false; c.n()];
        for i in 0..c.n() {
            assert_eq!(c.features(&b, i).unwrap(), PlacementFeatures::default());
        }
    }

    #[test]
    fn hand_recount() {
        // candidates: the(0) cat(1) the(2), all one sentence
        let c = ctx("Start here. The cat the. End here.");
        assert_eq!(c.n(), 3);
        let f = c.features(&[true, false, true], 2).unwrap();
        assert_eq!(
            f,
            PlacementFeatures { occurs_as_gap: 1, gaps_in_sentence: 2, preceding_gaps: 1, preceding_gaps_in_sentence: 1 }
        );
    }

    #[test]
    fn same_word_is_case_insensitive_and_irreflexive() {
        let c = ctx("Start here. The cat saw the cat. End here.");
        let v = &c.same_word;
        assert!(v.get(0, 3) && v.get(3, 0));
        assert!(v.get(1, 4));
        for i in 0..v.n() {
            assert!(!v.get(i, i));
        }
    }

    #[test]
    fn bad_lengths_rejected() {
        let c = ctx("Start here. The cat sat. End here.");
        assert!(c.features(&[true], 0).is_err());
        assert!(matches!(c.features(&[true, false, false], 7), Err(Error::IndexOutOfRange { .. })));
    }
}
