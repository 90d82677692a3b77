use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

/// A stored stream example.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub input: Array1<f64>,
    pub label: usize,
}

/// Fixed-capacity reservoir sample of everything offered so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    seen: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of items offered so far.
    pub fn seen_count(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    /// Algorithm R: fill until full, then keep the new item with probability
    /// `m / (seen + 1)` in a uniformly chosen slot. Returns the slot written,
    /// if any.
    pub fn offer<R: Rng + ?Sized>(&mut self, item: T, rng: &mut R) -> Option<usize> {
        let slot = if self.items.len() < self.capacity {
            self.items.push(item);
            Some(self.items.len() - 1)
        } else if self.capacity == 0 {
            None
        } else {
            let j = rng.random_range(0..=self.seen);
            if j < self.capacity as u64 {
                self.items[j as usize] = item;
                Some(j as usize)
            } else {
                None
            }
        };
        self.seen += 1;
        slot
    }

    /// `count` indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..count).map(|_| rng.random_range(0..self.items.len())).collect()
    }
}

impl ReplayBuffer<Exemplar> {
    /// Stored inputs as rows, with their labels.
    pub fn to_arrays(&self) -> Result<(Array2<f64>, Vec<usize>)> {
        let Some(first) = self.items.first() else {
            return Err(Error::InvalidInput("buffer is empty".into()));
        };
        let dim = first.input.len();
        let mut flat = Vec::with_capacity(self.items.len() * dim);
        for e in &self.items {
            flat.extend(e.input.iter().copied());
        }
        let inputs = Array2::from_shape_vec((self.items.len(), dim), flat)
            .map_err(|e| Error::InvalidInput(format!("ragged buffer: {e}")))?;
        Ok((inputs, self.items.iter().map(|e| e.label).collect()))
    }
}
