//! Shuffled mini-batches. One epoch visits every example exactly once; the
//! shuffle order is a pure function of (seed, epoch).

use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone)]
pub struct BatchIterator {
    batch_size: usize,
    seed: u64,
}

impl BatchIterator {
    pub fn new(batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        Ok(Self { batch_size, seed })
    }

    /// Batches of one epoch. The final batch may be short.
    pub fn epoch<'d>(&self, dataset: &'d LabeledDataset, epoch: u64) -> Batches<'d> {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut rng = seeds::rng(seeds::derive_indexed(self.seed, "epoch", &[epoch]));
        order.shuffle(&mut rng);
        Batches {
            dataset,
            order,
            cursor: 0,
            batch_size: self.batch_size,
        }
    }
}

pub struct Batches<'d> {
    dataset: &'d LabeledDataset,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl Iterator for Batches<'_> {
    /// Flattened images `[b, input_dim]` and their labels.
    type Item = (Tensor, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.dataset.gather(&self.order[self.cursor..end]);
        self.cursor = end;
        Some(batch)
    }
}
