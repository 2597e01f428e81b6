//! Dense parameter vectors with an optional contiguous block partition.
//!
//! Blocks stand in for filters or layers: filter-scaled noise and LARS both
//! operate block by block.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    blocks: Vec<Range<usize>>,
}

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self::from_vec(vec![0.0; dim])
    }

    /// Wraps `values` with a single block covering every entry.
    pub fn from_vec(values: Vec<f64>) -> Self {
        #[allow(clippy::single_range_in_vec_init)]
        let blocks = vec![0..values.len()];
        Self { values, blocks }
    }

    /// Builds a vector with an explicit partition. Blocks must be ordered,
    /// disjoint, non-empty and cover `[0, len)` exactly.
    pub fn with_blocks(values: Vec<f64>, blocks: Vec<Range<usize>>) -> Result<Self> {
        validate_partition(&blocks, values.len())?;
        Ok(Self { values, blocks })
    }

    /// Zero vector sharing `self`'s partition.
    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            blocks: self.blocks.clone(),
        }
    }

    /// Replaces the values, keeping the partition.
    pub fn like(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            blocks: self.blocks.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &[f64] {
        &self.values[self.blocks[j].clone()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) {
        axpy(&mut self.values, alpha, &other.values);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Squared euclidean distance.
    pub fn dist2(&self, other: &ParamVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        self.like(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    /// Bitwise equality of the values, distinguishing signed zeros and NaN payloads.
    pub fn bit_eq(&self, other: &ParamVector) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn validate_partition(blocks: &[Range<usize>], len: usize) -> Result<()> {
    if blocks.is_empty() {
        if len == 0 {
            return Ok(());
        }
        return Err(Error::config("blocks", "partition is empty"));
    }
    let mut cursor = 0;
    for (j, b) in blocks.iter().enumerate() {
        if b.start != cursor {
            return Err(Error::config(
                "blocks",
                format!("block {j} starts at {} but previous ended at {cursor}", b.start),
            ));
        }
        if b.end <= b.start {
            return Err(Error::config("blocks", format!("block {j} is empty")));
        }
        cursor = b.end;
    }
    if cursor != len {
        return Err(Error::config(
            "blocks",
            format!("partition covers [0, {cursor}) but vector has length {len}"),
        ));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}
