//! The 61-dimensional gap feature vector, split into static, size-dependent
//! and placement-dependent parts.

mod lexical;
mod placement;
mod providers;
mod schema;
mod table;

pub use lexical::{is_function_word, syllable_boundaries, syllable_count, Lexicon};
pub use placement::{PlacementContext, PlacementFeatures, SameWordMatrix};
pub use providers::{
    compute_features, DocumentStats, FeatureConfig, FeatureExtraction, FeatureProvider, GapContext,
    MissingFeatureWarning, PrecomputedProvider, SurrogateProvider,
};
pub use schema::*;
pub use table::{
    load_features, read_feature_rows, save_features, write_feature_rows, FeatureRow, FeatureTable, FeatureVector,
    SizeFeatureMatrix,
};

use crate::error::{Error, Result};

/// Write placement feature values into their schema slots.
pub fn set_placement(schema: &FeatureSchema, x: &mut [f64; NUM_FEATURES], f: &PlacementFeatures) {
    for pf in PlacementFeature::ALL {
        x[schema.placement.index(pf)] = f64::from(f.get(pf));
    }
}

/// Full feature vector of gap `(i, j)` under selection `b`.
pub fn assemble_vector(
    table: &FeatureTable,
    ctx: &PlacementContext,
    i: usize,
    size: usize,
    b: &[bool],
) -> Result<FeatureVector> {
    if i >= table.n() {
        return Err(Error::IndexOutOfRange { index: i, len: table.n() });
    }
    if size < 1 || size > table.sizes(i) {
        return Err(Error::InvariantViolation(format!("gap size {size} outside 1..={}", table.sizes(i))));
    }
    let mut x = *table.row(i, size);
    let pf = ctx.features(b, i)?;
    set_placement(&table.schema, &mut x, &pf);
    Ok(FeatureVector(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CandidatePolicy, Instance};

    #[test]
    fn own_gap_counts_in_sentence_total() {
        let inst = Instance::from_text("Start here. The cat slept well. End here.", &CandidatePolicy::default()).unwrap();
        let table = compute_features(&inst, &FeatureConfig::surrogate()).unwrap().table;
        let ctx = PlacementContext::new(&inst);
        let mut b = vec![false; inst.n()];
        b[1] = true;
        let x = assemble_vector(&table, &ctx, 1, 1, &b).unwrap();
        assert_eq!(x[51], 1.0);
        assert_eq!(x[52], 0.0);
        assert_eq!(x[53], 0.0);
        assert_eq!(x[54], 0.0);
    }

    #[test]
    fn sizes_differ_only_in_size_features() {
        let inst = Instance::from_text("Start here. Yesterday it rained. End here.", &CandidatePolicy::default()).unwrap();
        let table = compute_features(&inst, &FeatureConfig::surrogate()).unwrap().table;
        let ctx = PlacementContext::new(&inst);
        let b = vec![true, false, true];
        let a = assemble_vector(&table, &ctx, 0, 1, &b).unwrap();
        let c = assemble_vector(&table, &ctx, 0, 2, &b).unwrap();
        for k in 0..NUM_FEATURES {
            if a[k] != c[k] {
                assert!(SIZE_DEPENDENT.contains(&k), "k={k} changed with size");
            }
        }
        assert!(assemble_vector(&table, &ctx, 0, 0, &b).is_err());
        assert!(assemble_vector(&table, &ctx, 0, 9, &b).is_err());
    }
}
