//! FIFO memory of detached source features and their labels.

use crate::error::{Error, Result};
use crate::nn::{norm, Mlp, Tensor2};

/// One stored source sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankEntry<'a> {
    pub feature: &'a [f64],
    pub label: usize,
    pub norm: f64,
}

/// Fixed-capacity ring of `(feature, label)` pairs, oldest first.
///
/// Features are copied on insertion, so later parameter updates never
/// reach stored entries.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    capacity: usize,
    dim: Option<usize>,
    features: Vec<f64>,
    labels: Vec<usize>,
    norms: Vec<f64>,
    // physical slot of the oldest entry
    head: usize,
    len: usize,
    inserted: u64,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "memory bank capacity must be at least 1".into(),
            ));
        }
        Ok(Self {
            capacity,
            dim: None,
            features: Vec::new(),
            labels: Vec::new(),
            norms: Vec::new(),
            head: 0,
            len: 0,
            inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Total number of entries ever enqueued.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// True iff the bank holds at least `min_entries` entries.
    pub fn ready(&self, min_entries: usize) -> bool {
        self.len >= min_entries
    }

    #[inline]
    fn slot(&self, i: usize) -> usize {
        (self.head + i) % self.capacity
    }

    /// Entry at logical position `i` (0 = oldest).
    pub fn get(&self, i: usize) -> BankEntry<'_> {
        assert!(i < self.len, "bank index {i} out of range {}", self.len);
        let s = self.slot(i);
        let d = self.dim.unwrap_or(0);
        BankEntry {
            feature: &self.features[s * d..(s + 1) * d],
            label: self.labels[s],
            norm: self.norms[s],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = BankEntry<'_>> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn labels(&self) -> Vec<usize> {
        self.iter().map(|e| e.label).collect()
    }

    /// Appends a batch newest-last, evicting the oldest overflow entries.
    pub fn enqueue_batch(&mut self, features: &Tensor2, labels: &[usize]) -> Result<()> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "MemoryBank::enqueue_batch labels",
                features.rows(),
                labels.len(),
            ));
        }
        let d = features.cols();
        match self.dim {
            Some(dim) if dim != d => {
                return Err(Error::shape("MemoryBank::enqueue_batch width", dim, d));
            }
            Some(_) => {}
            None => {
                if d == 0 {
                    return Err(Error::Config("zero-width features".into()));
                }
                self.dim = Some(d);
                self.features = vec![0.0; self.capacity * d];
                self.labels = vec![0; self.capacity];
                self.norms = vec![0.0; self.capacity];
            }
        }
        if !features.is_finite() {
            return Err(Error::Numerical {
                iteration: None,
                detail: "non-finite feature offered to memory bank".into(),
            });
        }
        for (row, &label) in features.iter_rows().zip(labels) {
            let s = if self.len < self.capacity {
                self.len += 1;
                self.slot(self.len - 1)
            } else {
                let s = self.head;
                self.head = (self.head + 1) % self.capacity;
                s
            };
            self.features[s * d..(s + 1) * d].copy_from_slice(row);
            self.labels[s] = label;
            self.norms[s] = norm(row);
            self.inserted += 1;
        }
        Ok(())
    }

    /// Stored features as a matrix, oldest row first.
    pub fn feature_matrix(&self) -> Tensor2 {
        let d = self.dim.unwrap_or(0);
        let mut data = Vec::with_capacity(self.len * d);
        for e in self.iter() {
            data.extend_from_slice(e.feature);
        }
        Tensor2::from_vec(self.len, d, data).expect("consistent bank storage")
    }
}

/// `θ_F ← (1 − μ)·θ_E + μ·θ_F`, elementwise.
pub fn momentum_update(momentum: &mut Mlp, encoder: &Mlp, mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Config(format!("momentum {mu} outside [0, 1]")));
    }
    if !momentum.same_shape(encoder) {
        return Err(Error::shape(
            "momentum_update",
            "identically shaped encoders",
            "different layer shapes",
        ));
    }
    for (f, e) in momentum.params_mut().into_iter().zip(encoder.params()) {
        for (fv, &ev) in f.iter_mut().zip(e) {
            *fv = if mu == 0.0 {
                ev
            } else if mu == 1.0 {
                *fv
            } else {
                (1.0 - mu) * ev + mu * *fv
            };
        }
    }
    Ok(())
}
