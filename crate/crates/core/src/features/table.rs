use std::path::Path;

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::features::schema::{FeatureSchema, NUM_FEATURES, SIZE_DEPENDENT};

/// One gap's full feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Size-dependent feature values of one candidate: row `j-1` holds the
/// values of the size features (in `SIZE_DEPENDENT` order) at gap size `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeFeatureMatrix {
    pub rows: Vec<[f64; SIZE_DEPENDENT.len()]>,
}

impl SizeFeatureMatrix {
    pub fn row(&self, size: usize) -> &[f64; SIZE_DEPENDENT.len()] {
        &self.rows[size - 1]
    }
}

/// Precomputed static and size features for every (candidate, size) pair.
/// Placement-dependent slots are kept at zero and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema: FeatureSchema,
    rows: Vec<Vec<[f64; NUM_FEATURES]>>,
}

impl FeatureTable {
    pub(crate) fn from_raw(schema: FeatureSchema, rows: Vec<Vec<[f64; NUM_FEATURES]>>) -> Result<Self> {
        for (i, cand) in rows.iter().enumerate() {
            for (jm1, row) in cand.iter().enumerate() {
                if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvariantViolation(format!(
                        "non-finite feature k={k} for candidate {i}, size {}",
                        jm1 + 1
                    )));
                }
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn sizes(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    /// Raw row for `(i, j)`; placement slots are zero.
    pub fn row(&self, i: usize, size: usize) -> &[f64; NUM_FEATURES] {
        &self.rows[i][size - 1]
    }

    /// `c_{i,j,k}` for a static feature `k`.
    pub fn static_value(&self, i: usize, size: usize, k: usize) -> f64 {
        self.rows[i][size - 1][k]
    }

    pub fn size_matrix(&self, i: usize) -> SizeFeatureMatrix {
        SizeFeatureMatrix { rows: self.rows[i].iter().map(|r| SIZE_DEPENDENT.map(|k| r[k])).collect() }
    }

    pub fn to_rows(&self) -> Vec<FeatureRow> {
        let placement = self.schema.indices_of(crate::features::Dependency::PlacementDependent);
        let mut out = Vec::new();
        for (i, cand) in self.rows.iter().enumerate() {
            for (jm1, row) in cand.iter().enumerate() {
                let mut values = row.map(Some);
                for &k in &placement {
                    values[k] = None;
                }
                out.push(FeatureRow { candidate: i, size: jm1 + 1, values });
            }
        }
        out
    }

    /// Rebuild a table for `instance` from file rows. Every non-placement
    /// cell of every `(i, j)` must be present.
    pub fn from_rows(instance: &Instance, schema: FeatureSchema, rows: &[FeatureRow]) -> Result<Self> {
        let placement = schema.indices_of(crate::features::Dependency::PlacementDependent);
        let mut table: Vec<Vec<Option<[f64; NUM_FEATURES]>>> =
            instance.candidates.candidates.iter().map(|c| vec![None; c.word_length - 1]).collect();
        for (r, row) in rows.iter().enumerate() {
            let slot = table
                .get_mut(row.candidate)
                .and_then(|c| c.get_mut(row.size.wrapping_sub(1)))
                .ok_or_else(|| Error::Format {
                    row: r + 2,
                    column: 1,
                    message: format!("no gap ({}, {}) in this instance", row.candidate, row.size),
                })?;
            let mut full = [0.0; NUM_FEATURES];
            for k in 0..NUM_FEATURES {
                if placement.contains(&k) {
                    continue;
                }
                full[k] = row.values[k].ok_or(Error::MissingFeature { k, candidate: row.candidate, size: row.size })?;
            }
            *slot = Some(full);
        }
        let mut out = Vec::with_capacity(table.len());
        for (i, cand) in table.into_iter().enumerate() {
            let mut rows_i = Vec::with_capacity(cand.len());
            for (jm1, cell) in cand.into_iter().enumerate() {
                rows_i.push(cell.ok_or(Error::MissingFeature { k: 0, candidate: i, size: jm1 + 1 })?);
            }
            out.push(rows_i);
        }
        Self::from_raw(schema, out)
    }
}

/// One line of a feature file; `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub candidate: usize,
    pub size: usize,
    pub values: [Option<f64>; NUM_FEATURES],
}

fn header() -> Vec<String> {
    let mut h = vec!["candidate".to_string(), "size".to_string()];
    h.extend((0..NUM_FEATURES).map(|k| format!("k{k}")));
    h
}

pub fn write_feature_rows<W: std::io::Write>(writer: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let to_err = |e: csv::Error| Error::Format { row: 0, column: 0, message: e.to_string() };
    w.write_record(header()).map_err(to_err)?;
    for row in rows {
        let mut rec = vec![row.candidate.to_string(), row.size.to_string()];
        rec.extend(row.values.iter().map(|v| v.map_or_else(String::new, |x| x.to_string())));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Format { row: 0, column: 0, message: e.to_string() })?;
    Ok(())
}

pub fn read_feature_rows<R: std::io::Read>(reader: R) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let expected = header();
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 1;
        let rec = rec.map_err(|e| Error::Format { row: line, column: 0, message: e.to_string() })?;
        if rec.len() != expected.len() {
            return Err(Error::Format {
                row: line,
                column: rec.len().min(expected.len()) + 1,
                message: format!("expected {} columns, found {}", expected.len(), rec.len()),
            });
        }
        if r == 0 {
            if let Some(c) = rec.iter().zip(&expected).position(|(a, b)| a.trim() != b) {
                return Err(Error::Format { row: 1, column: c + 1, message: format!("bad header cell '{}'", &rec[c]) });
            }
            continue;
        }
        let int = |c: usize| -> Result<usize> {
            rec[c].trim().parse().map_err(|_| Error::Format {
                row: line,
                column: c + 1,
                message: format!("expected integer, found '{}'", &rec[c]),
            })
        };
        let mut values = [None; NUM_FEATURES];
        for (k, slot) in values.iter_mut().enumerate() {
            let cell = rec[k + 2].trim();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Format {
                row: line,
                column: k + 3,
                message: format!("expected number, found '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format { row: line, column: k + 3, message: "non-finite value".into() });
            }
            *slot = Some(v);
        }
        out.push(FeatureRow { candidate: int(0)?, size: int(1)?, values });
    }
    Ok(out)
}

pub fn save_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_rows(std::io::BufWriter::new(file), rows)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_rows(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_rows_write_header_only() {
        let mut buf = Vec::new();
        write_feature_rows(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("candidate,size,k0,k1,"));
        assert!(text.trim_end().ends_with("k60"));
        assert!(read_feature_rows(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn wrong_column_count_is_located() {
        let mut text = header().join(",");
        text.push_str("\n0,1,0.5\n");
        match read_feature_rows(text.as_bytes()) {
            Err(Error::Format { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_number_is_located() {
        let mut cells = vec!["0".to_string(), "1".to_string()];
        cells.extend((0..NUM_FEATURES).map(|k| if k == 3 { "abc".into() } else { "1".into() }));
        let text = format!("{}\n{}\n", header().join(","), cells.join(","));
        match read_feature_rows(text.as_bytes()) {
            Err(Error::Format { row, column, .. }) => assert_eq!((row, column), (2, 6)),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
