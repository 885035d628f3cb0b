//! Discrete datasets: rows of small categorical values, stored row-major as
//! bytes. The text format is one comma-separated arity line followed by one
//! comma-separated row per line; blank lines and `#` comments are skipped.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::Var;

/// Largest representable arity: cell values are bytes.
pub const MAX_ARITY: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    arities: Vec<usize>,
    cells: Vec<u8>,
    num_rows: usize,
}

impl Dataset {
    pub fn new(arities: Vec<usize>, rows: Vec<Vec<u8>>) -> Result<Dataset> {
        if arities.is_empty() {
            return Err(Error::Data("dataset needs at least one variable".into()));
        }
        for (i, &a) in arities.iter().enumerate() {
            if !(2..=MAX_ARITY).contains(&a) {
                return Err(Error::Data(format!(
                    "variable {i} has arity {a}; supported range is 2..={MAX_ARITY}"
                )));
            }
        }
        let n = arities.len();
        let mut cells = Vec::with_capacity(rows.len() * n);
        let num_rows = rows.len();
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Data(format!(
                    "row {r} has {} values, expected {n}",
                    row.len()
                )));
            }
            for (v, &cell) in row.iter().enumerate() {
                if cell as usize >= arities[v] {
                    return Err(Error::Data(format!(
                        "row {r}: value {cell} out of range for variable {v} (arity {})",
                        arities[v]
                    )));
                }
            }
            cells.extend_from_slice(&row);
        }
        Ok(Dataset {
            arities,
            cells,
            num_rows,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_vars(&self) -> usize {
        self.arities.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn arity(&self, var: Var) -> usize {
        self.arities[var]
    }

    pub fn value(&self, row: usize, var: Var) -> u8 {
        self.cells[row * self.num_vars() + var]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        let n = self.num_vars();
        &self.cells[row * n..(row + 1) * n]
    }

    /// Per-value counts of one column.
    pub fn column_counts(&self, var: Var) -> Vec<u64> {
        let mut counts = vec![0u64; self.arity(var)];
        for r in 0..self.num_rows {
            counts[self.value(r, var) as usize] += 1;
        }
        counts
    }

    /// Fraction of non-zero cells; a quick sparsity readout for mostly-zero
    /// binary data.
    pub fn density(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().filter(|&&c| c != 0).count() as f64 / self.cells.len() as f64
    }

    pub fn parse(text: &str) -> Result<Dataset> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (header_no, header) = lines
            .next()
            .ok_or_else(|| Error::Data("empty dataset file".into()))?;
        let arities: Vec<usize> = header
            .split(',')
            .map(|s| {
                s.trim().parse::<usize>().map_err(|_| Error::DataAt {
                    line: header_no,
                    msg: format!("bad arity `{}`", s.trim()),
                })
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (no, line) in lines {
            let row: Vec<u8> = line
                .split(',')
                .map(|s| {
                    s.trim().parse::<u16>().ok().and_then(|v| {
                        if v < MAX_ARITY as u16 {
                            Some(v as u8)
                        } else {
                            None
                        }
                    })
                    .ok_or_else(|| Error::DataAt {
                        line: no,
                        msg: format!("bad value `{}`", s.trim()),
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != arities.len() {
                return Err(Error::DataAt {
                    line: no,
                    msg: format!("{} values, expected {}", row.len(), arities.len()),
                });
            }
            rows.push(row);
        }
        Dataset::new(arities, rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        Dataset::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(
            &self
                .arities
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
        for r in 0..self.num_rows {
            let row = self
                .row(r)
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Deterministic shuffled split into (first, second) with the first part
    /// holding `fraction` of the rows (rounded down, at least one row in each
    /// part when possible).
    pub fn split_rows(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!(
                "split fraction {fraction} outside [0, 1]"
            )));
        }
        let mut order: Vec<usize> = (0..self.num_rows).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut cut = (self.num_rows as f64 * fraction).floor() as usize;
        if self.num_rows >= 2 {
            cut = cut.clamp(1, self.num_rows - 1);
        }
        let take = |ids: &[usize]| -> Dataset {
            let mut cells = Vec::with_capacity(ids.len() * self.num_vars());
            for &r in ids {
                cells.extend_from_slice(self.row(r));
            }
            Dataset {
                arities: self.arities.clone(),
                cells,
                num_rows: ids.len(),
            }
        };
        Ok((take(&order[..cut]), take(&order[cut..])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let text = "2,3\n0,2\n1,0\n\n# comment\n1,1\n";
        let d = Dataset::parse(text).unwrap();
        assert_eq!(d.num_rows(), 3);
        assert_eq!(d.num_vars(), 2);
        assert_eq!(d.value(0, 1), 2);
        assert_eq!(d.row(2), &[1, 1]);
        let reloaded = Dataset::parse(&d.to_text()).unwrap();
        assert_eq!(reloaded, d);
    }

    #[test]
    fn rejects_out_of_range_values_and_bad_arities() {
        assert!(Dataset::parse("2,2\n0,2\n").is_err()); // value 2 under arity 2
        assert!(Dataset::parse("1,2\n0,0\n").is_err()); // arity below 2
        assert!(Dataset::parse("2,2\n0\n").is_err()); // short row
        assert!(Dataset::parse("2,2\n0,x\n").is_err());
        assert!(Dataset::parse("").is_err());
        assert!(Dataset::new(vec![300], vec![]).is_err()); // arity over 256
    }

    #[test]
    fn column_counts_and_density() {
        let d = Dataset::parse("2,2\n0,1\n1,1\n0,0\n").unwrap();
        assert_eq!(d.column_counts(0), vec![2, 1]);
        assert_eq!(d.column_counts(1), vec![1, 2]);
        assert_eq!(d.density(), 0.5);
    }

    #[test]
    fn split_is_deterministic_and_partitions_rows() {
        let rows: Vec<Vec<u8>> = (0..20).map(|i| vec![(i % 2) as u8, (i % 3 != 0) as u8]).collect();
        let d = Dataset::new(vec![2, 2], rows).unwrap();
        let (a1, b1) = d.split_rows(0.9, 7).unwrap();
        let (a2, b2) = d.split_rows(0.9, 7).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(a1.num_rows() + b1.num_rows(), 20);
        assert_eq!(a1.num_rows(), 18);
        // Every original row appears exactly once across the two parts.
        let mut seen: Vec<Vec<u8>> = (0..a1.num_rows())
            .map(|r| a1.row(r).to_vec())
            .chain((0..b1.num_rows()).map(|r| b1.row(r).to_vec()))
            .collect();
        let mut original: Vec<Vec<u8>> = (0..20).map(|r| d.row(r).to_vec()).collect();
        seen.sort();
        original.sort();
        assert_eq!(seen, original);
    }
}
