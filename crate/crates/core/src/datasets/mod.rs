//! Labelled collections of series: synthetic generators, the task
//! assembler, and the TSV reader/writer.

pub mod generators;
pub mod tsv;

pub use generators::*;
pub use tsv::{load_tsv, load_tsv_with_labels, write_tsv};

use crate::error::{Error, Result};
use crate::signature::TimeSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub items: Vec<(TimeSeries, usize)>,
    /// Original label token for each class index.
    pub label_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset whose labels are `0..class_count` named by their
    /// index.
    pub fn new(name: impl Into<String>, items: Vec<(TimeSeries, usize)>, class_count: usize) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            items,
            label_names: (0..class_count).map(|c| c.to_string()).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items.first().map_or(0, |(x, _)| x.dim())
    }

    pub fn n_points(&self) -> usize {
        self.items.first().map_or(0, |(x, _)| x.len())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, y)| *y).collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count()];
        for (_, y) in &self.items {
            sizes[*y] += 1;
        }
        sizes
    }

    /// Shared dimension, labels in range, and every class populated.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (i, (x, y)) in self.items.iter().enumerate() {
            if x.dim() != d {
                return Err(Error::shape(format!(
                    "item {i} has dimension {}, dataset has {d}",
                    x.dim()
                )));
            }
            if *y >= self.class_count() {
                return Err(Error::invalid(format!(
                    "item {i} has label {y} outside 0..{}",
                    self.class_count()
                )));
            }
        }
        if let Some(c) = self.class_sizes().iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("class {c} has no items")));
        }
        Ok(())
    }

    /// Sub-dataset with the given item indices (class names kept).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            label_names: self.label_names.clone(),
        }
    }

    /// Same items with every series passed through `f`.
    pub fn map_series<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&TimeSeries) -> Result<TimeSeries> + Sync,
    {
        use rayon::prelude::*;
        let items = self
            .items
            .par_iter()
            .map(|(x, y)| Ok((f(x)?, *y)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: self.name.clone(),
            items,
            label_names: self.label_names.clone(),
        })
    }

    /// Concatenates datasets sharing class names.
    pub fn concat(name: impl Into<String>, parts: &[Dataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        if parts.iter().any(|p| p.label_names != first.label_names) {
            return Err(Error::invalid("datasets have different class sets"));
        }
        Ok(Self {
            name: name.into(),
            items: parts.iter().flat_map(|p| p.items.iter().cloned()).collect(),
            label_names: first.label_names.clone(),
        })
    }
}
