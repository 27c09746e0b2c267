use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 61;

/// Feature names by index.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "AvgSentenceLength",
    "AvgWordLengthInCharacters",
    "AvgWordLengthInSyllables",
    "BigramSolutionRank",
    "COPCognate_Exists",
    "GapIsADJ",
    "GapIsADV",
    "GapIsART",
    "GapIsCONJ",
    "GapIsNN",
    "GapIsNP",
    "GapIsPP",
    "GapIsPR",
    "GapIsV",
    "IsAcademicWord",
    "IsCompound",
    "IsDerivedAdjective",
    "IsFunctionWord",
    "IsInflectedAdjective",
    "IsInflectedNoun",
    "IsInflectedVerb",
    "IsLemma",
    "IsWordWithLatinRoot",
    "LanguageModelProbability",
    "LanguageModelProbabilityOfPrefix",
    "LanguageModelProbabilityOfSolution",
    "LeftBigramLogProbability",
    "LeftTrigramLogProbability",
    "LmRankOfSolution",
    "MaxStringSimWithCandidate",
    "NrOfBigramCandidates",
    "NrOfCandidates",
    "NrOfTrigramCandidates",
    "NrOfUbySenses",
    "NrOfUnigramCandidates",
    "NumberOfChunksPerSentence",
    "OccursAsText",
    "PhoneticScore",
    "PhoneticSimilarity",
    "RightBigramLogProbability",
    "RightTrigramLogProbability",
    "TrigramLogProbability",
    "TrigramSolutionRank",
    "TypeTokenRatio",
    "Uby_XDiceScore",
    "UnigramLogProbability",
    "UnigramSolutionRank",
    "VerbVariation",
    "posProbability",
    "BertWordPredictionProbability",
    "BertTop50Entropy",
    "NumberOfGapsInCoverSentence",
    "NumberOfPrecedingGaps",
    "NumberOfPrecedingGapsInCoverSentence",
    "OccursAsGap",
    "PositionOfGap",
    "IsCompoundBreak",
    "IsReferentialGap",
    "IsSyllableBreak",
    "LengthOfSolutionInCharacters",
    "LengthOfSolutionInSyllables",
];

/// Features whose value depends on the gap size.
pub const SIZE_DEPENDENT: [usize; 6] = [49, 50, 56, 57, 58, 59];

pub const BERT_PROBABILITY: usize = 49;
pub const BERT_ENTROPY: usize = 50;
pub const COMPOUND_BREAK: usize = 56;
pub const REFERENTIAL_TH: usize = 57;
pub const SYLLABLE_BREAK: usize = 58;
pub const GAP_LENGTH: usize = 59;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dependency {
    Static,
    SizeDependent,
    PlacementDependent,
}

/// The four placement-dependent features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlacementFeature {
    OccursAsGap,
    GapsInSentence,
    PrecedingGaps,
    PrecedingGapsInSentence,
}

impl PlacementFeature {
    pub const ALL: [PlacementFeature; 4] = [
        PlacementFeature::OccursAsGap,
        PlacementFeature::GapsInSentence,
        PlacementFeature::PrecedingGaps,
        PlacementFeature::PrecedingGapsInSentence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlacementFeature::OccursAsGap => "OccursAsGap",
            PlacementFeature::GapsInSentence => "NumberOfGapsInCoverSentence",
            PlacementFeature::PrecedingGaps => "NumberOfPrecedingGaps",
            PlacementFeature::PrecedingGapsInSentence => "NumberOfPrecedingGapsInCoverSentence",
        }
    }

    /// Short tag used in model variable names.
    pub fn short(self) -> &'static str {
        match self {
            PlacementFeature::OccursAsGap => "og",
            PlacementFeature::GapsInSentence => "gis",
            PlacementFeature::PrecedingGaps => "prec",
            PlacementFeature::PrecedingGapsInSentence => "pis",
        }
    }

    pub fn slot(self) -> usize {
        self as usize
    }
}

/// Binds each placement feature to a vector index. The default follows the
/// feature table naming (51 = gaps in cover sentence, 54 = occurs as gap).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementIndexMap {
    pub indices: [usize; 4],
}

impl Default for PlacementIndexMap {
    fn default() -> Self {
        // order matches PlacementFeature::ALL
        Self { indices: [54, 51, 52, 53] }
    }
}

impl PlacementIndexMap {
    pub fn index(&self, f: PlacementFeature) -> usize {
        self.indices[f.slot()]
    }

    pub fn feature_at(&self, k: usize) -> Option<PlacementFeature> {
        PlacementFeature::ALL.into_iter().find(|&f| self.index(f) == k)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = self.indices;
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("placement feature indices must be distinct".into()));
        }
        if seen.iter().any(|&k| k >= NUM_FEATURES || SIZE_DEPENDENT.contains(&k)) {
            return Err(Error::InvalidConfig("placement feature index collides with a size feature".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub placement: PlacementIndexMap,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self { placement: PlacementIndexMap::default() }
    }
}

impl FeatureSchema {
    pub fn new(placement: PlacementIndexMap) -> Result<Self> {
        placement.validate()?;
        Ok(Self { placement })
    }

    pub fn dimension(&self) -> usize {
        NUM_FEATURES
    }

    pub fn name(&self, k: usize) -> &'static str {
        FEATURE_NAMES[k]
    }

    pub fn dependency(&self, k: usize) -> Dependency {
        if self.placement.feature_at(k).is_some() {
            Dependency::PlacementDependent
        } else if SIZE_DEPENDENT.contains(&k) {
            Dependency::SizeDependent
        } else {
            Dependency::Static
        }
    }

    pub fn indices_of(&self, dep: Dependency) -> Vec<usize> {
        (0..NUM_FEATURES).filter(|&k| self.dependency(k) == dep).collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    }
}
