//! Access accounting for the train/test partition of one repeat.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Protocol stage that touched dataset rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Learned extractor parts (autoencoder, EST kernel).
    ExtractorFit,
    /// Applying an already fitted extractor.
    Featurize,
    GridSearch,
    Refit,
    Test,
}

impl Stage {
    /// Stages whose output depends on the rows they see.
    pub fn is_fitting(self) -> bool {
        matches!(self, Stage::ExtractorFit | Stage::GridSearch | Stage::Refit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub repeat: usize,
    pub attempt: usize,
    pub stage: Stage,
    pub indices: Vec<usize>,
}

/// Receives every row access the protocol makes.
pub trait AccessObserver: Sync {
    fn observe(&self, access: &Access);
}

/// Observer that keeps everything.
#[derive(Debug, Default)]
pub struct AccessLog {
    entries: Mutex<Vec<Access>>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Entries ordered by repeat, attempt and arrival.
    pub fn entries(&self) -> Vec<Access> {
        let mut v = self.entries.lock().expect("access log poisoned").clone();
        v.sort_by_key(|a| (a.repeat, a.attempt));
        v
    }
}

impl AccessObserver for AccessLog {
    fn observe(&self, access: &Access) {
        self.entries.lock().expect("access log poisoned").push(access.clone());
    }
}

fn seal(test: &[usize]) -> [u8; 32] {
    let mut h = Sha256::new();
    for i in test {
        h.update((*i as u64).to_le_bytes());
    }
    h.finalize().into()
}

/// One repeat's split. Fitting stages may only name training rows; the
/// test rows are sealed by hash until [`Partition::open_test`].
pub(crate) struct Partition<'a> {
    repeat: usize,
    attempt: usize,
    train: Vec<usize>,
    test: Vec<usize>,
    sealed: [u8; 32],
    observer: Option<&'a dyn AccessObserver>,
}

impl<'a> Partition<'a> {
    pub fn new(
        repeat: usize,
        attempt: usize,
        train: Vec<usize>,
        test: Vec<usize>,
        observer: Option<&'a dyn AccessObserver>,
    ) -> Self {
        let sealed = seal(&test);
        Partition {
            repeat,
            attempt,
            train,
            test,
            sealed,
            observer,
        }
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    fn report(&self, stage: Stage, indices: &[usize]) {
        if let Some(o) = self.observer {
            o.observe(&Access {
                repeat: self.repeat,
                attempt: self.attempt,
                stage,
                indices: indices.to_vec(),
            });
        }
    }

    /// Records a pre-test access and rejects any test row.
    pub fn touch(&self, stage: Stage, indices: &[usize]) -> Result<()> {
        debug_assert!(stage != Stage::Test);
        self.report(stage, indices);
        if let Some(i) = indices.iter().find(|i| self.test.binary_search(i).is_ok()) {
            return Err(Error::Protocol(format!(
                "test row {i} reached {stage:?} in repeat {}",
                self.repeat
            )));
        }
        Ok(())
    }

    /// Verifies the seal and hands out the test rows.
    pub fn open_test(&self) -> Result<&[usize]> {
        if seal(&self.test) != self.sealed {
            return Err(Error::Protocol(format!("test partition of repeat {} changed", self.repeat)));
        }
        self.report(Stage::Test, &self.test);
        Ok(&self.test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_rows_rejected_before_opening() {
        let log = AccessLog::new();
        let p = Partition::new(0, 0, vec![0, 2], vec![1, 3], Some(&log));
        assert!(p.touch(Stage::Refit, &[0, 2]).is_ok());
        assert!(matches!(p.touch(Stage::GridSearch, &[0, 3]), Err(Error::Protocol(_))));
        assert_eq!(p.open_test().unwrap(), &[1, 3]);
        let stages: Vec<Stage> = log.entries().iter().map(|a| a.stage).collect();
        assert_eq!(stages, [Stage::Refit, Stage::GridSearch, Stage::Test]);
    }
}
