//! In-memory tabular data: one sensitive categorical variable (original
//! levels, perturbed levels, or both) plus named numeric columns. Levels are
//! integer-coded 0..K-1. Estimating functions read only the numeric columns —
//! the sensitive variable enters estimation through weights — so the original
//! column can be absent entirely on the data-user side.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    values: Vec<f64>,
}

impl Column {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    levels: usize,
    n: Option<usize>,
    original: Option<Vec<usize>>,
    perturbed: Option<Vec<usize>>,
    columns: Vec<Column>,
}

impl Dataset {
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidConfig {
                context: format!("sensitive variable needs at least 2 levels, got {levels}"),
            });
        }
        Ok(Self {
            levels,
            n: None,
            original: None,
            perturbed: None,
            columns: Vec::new(),
        })
    }

    /// Number of records; 0 until any column or level vector has been added.
    pub fn n(&self) -> usize {
        self.n.unwrap_or(0)
    }

    /// Number of levels K of the sensitive variable.
    pub fn levels(&self) -> usize {
        self.levels
    }

    fn fix_len(&mut self, len: usize, what: &str) -> Result<()> {
        match self.n {
            None => {
                self.n = Some(len);
                Ok(())
            }
            Some(n) if n == len => Ok(()),
            Some(n) => Err(Error::DimensionMismatch {
                context: format!("{what} has {len} records, dataset has {n}"),
            }),
        }
    }

    fn check_levels(&self, v: &[usize]) -> Result<()> {
        for (record, &level) in v.iter().enumerate() {
            if level >= self.levels {
                return Err(Error::LevelOutOfRange {
                    record,
                    level,
                    levels: self.levels,
                });
            }
        }
        Ok(())
    }

    /// Add a named numeric column. Values must be finite and names unique.
    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if self.column_index(name).is_some() {
            return Err(Error::InvalidConfig {
                context: format!("duplicate column name '{name}'"),
            });
        }
        for (row, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("column '{name}', record {row}"),
                });
            }
        }
        self.fix_len(values.len(), name)?;
        self.columns.push(Column {
            name: name.to_string(),
            values,
        });
        Ok(())
    }

    /// Attach the original (pre-perturbation) sensitive levels.
    pub fn set_original_levels(&mut self, levels: Vec<usize>) -> Result<()> {
        self.check_levels(&levels)?;
        self.fix_len(levels.len(), "original levels")?;
        self.original = Some(levels);
        Ok(())
    }

    /// Attach the released (post-perturbation) sensitive levels.
    pub fn set_perturbed_levels(&mut self, levels: Vec<usize>) -> Result<()> {
        self.check_levels(&levels)?;
        self.fix_len(levels.len(), "perturbed levels")?;
        self.perturbed = Some(levels);
        Ok(())
    }

    pub fn original_levels(&self) -> Option<&[usize]> {
        self.original.as_deref()
    }

    pub fn perturbed_levels(&self) -> Option<&[usize]> {
        self.perturbed.as_deref()
    }

    /// Original levels or an error explaining what is missing.
    pub fn require_original(&self) -> Result<&[usize]> {
        self.original.as_deref().ok_or_else(|| Error::InvalidConfig {
            context: "dataset has no original sensitive levels".to_string(),
        })
    }

    /// Perturbed levels or an error explaining what is missing.
    pub fn require_perturbed(&self) -> Result<&[usize]> {
        self.perturbed.as_deref().ok_or_else(|| Error::InvalidConfig {
            context: "dataset has no perturbed sensitive levels".to_string(),
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize> {
        self.column_index(name).ok_or_else(|| Error::MissingColumn {
            name: name.to_string(),
        })
    }

    #[inline]
    pub fn column_values(&self, index: usize) -> &[f64] {
        &self.columns[index].values
    }

    /// Values of a named column.
    pub fn values(&self, name: &str) -> Result<&[f64]> {
        Ok(self.column_values(self.require_column(name)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_reads_back() {
        let mut d = Dataset::new(2).unwrap();
        d.push_column("x", vec![1.0, 2.0, 3.0]).unwrap();
        d.set_original_levels(vec![0, 1, 0]).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.levels(), 2);
        assert_eq!(d.column_values(d.require_column("x").unwrap()), &[1.0, 2.0, 3.0]);
        assert_eq!(d.original_levels().unwrap(), &[0, 1, 0]);
        assert!(d.perturbed_levels().is_none());
        assert!(d.require_perturbed().is_err());
    }

    #[test]
    fn rejects_inconsistent_lengths() {
        let mut d = Dataset::new(2).unwrap();
        d.push_column("x", vec![1.0, 2.0]).unwrap();
        let err = d.set_original_levels(vec![0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = d.push_column("y", vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn rejects_out_of_range_levels() {
        let mut d = Dataset::new(2).unwrap();
        let err = d.set_original_levels(vec![0, 2]).unwrap_err();
        match err {
            Error::LevelOutOfRange { record, level, levels } => {
                assert_eq!((record, level, levels), (1, 2, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_values_and_duplicates() {
        let mut d = Dataset::new(2).unwrap();
        assert!(matches!(
            d.push_column("x", vec![1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        d.push_column("x", vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            d.push_column("x", vec![3.0, 4.0]),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn rejects_single_level() {
        assert!(matches!(Dataset::new(1), Err(Error::InvalidConfig { .. })));
    }
}
