use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub step: u64,
    pub value: f64,
    pub path: Option<PathBuf>,
}

/// The `top_k` best dev evaluations seen so far, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointLedger {
    capacity: usize,
    entries: Vec<LedgerEntry>,
    last_improvement_step: u64,
}

/// Outcome of offering an evaluation to the ledger.
#[derive(Debug, Clone, PartialEq)]
pub enum Offer {
    Rejected,
    /// Inserted at `position`; `evicted` is the entry pushed out, if any.
    Inserted {
        position: usize,
        evicted: Option<LedgerEntry>,
    },
}

impl CheckpointLedger {
    pub fn new(capacity: usize) -> Self {
        CheckpointLedger {
            capacity: capacity.max(1),
            entries: Vec::new(),
            last_improvement_step: 0,
        }
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn best(&self) -> Option<&LedgerEntry> {
        self.entries.first()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn last_improvement_step(&self) -> u64 {
        self.last_improvement_step
    }

    /// Inserts the evaluation if it ranks among the best `capacity`.
    /// Equal values rank after the ones already present.
    pub fn offer(&mut self, step: u64, value: f64, path: Option<PathBuf>) -> Offer {
        if !value.is_finite() {
            return Offer::Rejected;
        }
        let position = self.entries.partition_point(|e| e.value >= value);
        if position >= self.capacity {
            return Offer::Rejected;
        }
        self.entries.insert(position, LedgerEntry { step, value, path });
        let evicted = (self.entries.len() > self.capacity).then(|| self.entries.pop().unwrap());
        self.last_improvement_step = step;
        Offer::Inserted { position, evicted }
    }

    pub fn set_path(&mut self, position: usize, path: PathBuf) {
        self.entries[position].path = Some(path);
    }
}
