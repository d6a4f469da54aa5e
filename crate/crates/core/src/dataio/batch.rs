use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{filter_condition, ConditionSpec, StudyRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Conditions (raw labels, one channel) and target frames, both `[n, 1, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub conditions: Tensor,
    pub images: Tensor,
    pub ids: Vec<String>,
}

/// Position of a [`BatchIterator`]; enough to resume it exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCursor {
    pub epoch: u64,
    pub batch: usize,
}

/// Endless stream of shuffled batches. Each epoch is a fresh seeded
/// permutation; a trailing partial batch is dropped.
#[derive(Clone, Debug)]
pub struct BatchIterator {
    ids: Vec<String>,
    conditions: Vec<Vec<f32>>,
    images: Vec<Vec<f32>>,
    height: usize,
    width: usize,
    batch_size: usize,
    seed: u64,
    cursor: BatchCursor,
    order: Vec<usize>,
}

pub fn batch_iterator(
    records: &[StudyRecord],
    spec: &ConditionSpec,
    batch_size: usize,
    seed: u64,
) -> Result<BatchIterator> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    if records.len() < batch_size {
        return Err(Error::InvalidConfig(format!(
            "batch size {batch_size} exceeds the {} available studies",
            records.len()
        )));
    }
    let (width, height) = (first.image.width(), first.image.height());
    if let Some(odd) = records
        .iter()
        .find(|r| r.image.width() != width || r.image.height() != height)
    {
        return Err(Error::InvalidDimensions(format!(
            "study {} is {}x{}, expected {width}x{height}",
            odd.patient_id,
            odd.image.width(),
            odd.image.height()
        )));
    }
    let mut it = BatchIterator {
        ids: records.iter().map(|r| r.patient_id.clone()).collect(),
        conditions: records
            .iter()
            .map(|r| filter_condition(&r.mask, spec).to_condition())
            .collect(),
        images: records.iter().map(|r| r.image.pixels().to_vec()).collect(),
        height,
        width,
        batch_size,
        seed,
        cursor: BatchCursor::default(),
        order: Vec::new(),
    };
    it.order = it.epoch_order(0);
    Ok(it)
}

impl BatchIterator {
    fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..self.ids.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.ids.len() / self.batch_size
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn cursor(&self) -> BatchCursor {
        self.cursor
    }

    /// Moves to `cursor`, as if that many batches had been drawn.
    pub fn seek(&mut self, cursor: BatchCursor) {
        if cursor.epoch != self.cursor.epoch {
            self.order = self.epoch_order(cursor.epoch);
        }
        self.cursor = cursor;
    }

    pub fn next_batch(&mut self) -> Batch {
        if self.cursor.batch >= self.batches_per_epoch() {
            self.seek(BatchCursor {
                epoch: self.cursor.epoch + 1,
                batch: 0,
            });
        }
        let start = self.cursor.batch * self.batch_size;
        let picks = &self.order[start..start + self.batch_size];
        let conditions: Vec<&[f32]> = picks.iter().map(|&i| self.conditions[i].as_slice()).collect();
        let images: Vec<&[f32]> = picks.iter().map(|&i| self.images[i].as_slice()).collect();
        let batch = Batch {
            conditions: Tensor::from_planes(self.height, self.width, &conditions).expect("uniform plane sizes"),
            images: Tensor::from_planes(self.height, self.width, &images).expect("uniform plane sizes"),
            ids: picks.iter().map(|&i| self.ids[i].clone()).collect(),
        };
        self.cursor.batch += 1;
        batch
    }
}

impl Iterator for BatchIterator {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        Some(self.next_batch())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::dataio::{make_synthetic_fixture, EchoFrame, ExperimentName, LabelMap};

    fn records(n: usize) -> Vec<StudyRecord> {
        (0..n)
            .map(|i| {
                StudyRecord::new(
                    format!("p{i:03}"),
                    EchoFrame::new(2, 2, vec![i as f32 / n as f32; 4]).unwrap(),
                    LabelMap::new(2, 2, vec![0, 1, 2, 3]).unwrap(),
                )
                .unwrap()
            })
            .collect()
    }

    fn spec() -> ConditionSpec {
        ConditionSpec::new(ExperimentName::E)
    }

    #[test]
    fn drops_partial_batch() {
        let mut it = batch_iterator(&records(428), &spec(), 8, 1).unwrap();
        assert_eq!(it.batches_per_epoch(), 428 / 8);
        let mut seen = BTreeSet::new();
        for _ in 0..53 {
            let b = it.next_batch();
            assert_eq!(b.ids.len(), 8);
            seen.extend(b.ids);
        }
        assert_eq!(seen.len(), 53 * 8);
        assert_eq!(it.cursor(), BatchCursor { epoch: 0, batch: 53 });
        it.next_batch();
        assert_eq!(it.cursor(), BatchCursor { epoch: 1, batch: 1 });
    }

    #[test]
    fn single_item_batches() {
        let mut it = batch_iterator(&records(3), &spec(), 1, 0).unwrap();
        for b in it.by_ref().take(7) {
            assert_eq!(b.conditions.shape(), [1, 1, 2, 2]);
            assert_eq!(b.images.batch(), 1);
        }
    }

    #[test]
    fn same_seed_same_order() {
        let a: Vec<_> = batch_iterator(&records(20), &spec(), 4, 9).unwrap().take(12).map(|b| b.ids).collect();
        let b: Vec<_> = batch_iterator(&records(20), &spec(), 4, 9).unwrap().take(12).map(|b| b.ids).collect();
        let c: Vec<_> = batch_iterator(&records(20), &spec(), 4, 10).unwrap().take(12).map(|b| b.ids).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn seek_resumes_exactly() {
        let mut straight = batch_iterator(&records(10), &spec(), 3, 5).unwrap();
        let drawn: Vec<_> = straight.by_ref().take(7).collect();
        let mut resumed = batch_iterator(&records(10), &spec(), 3, 5).unwrap();
        resumed.seek(BatchCursor { epoch: 2, batch: 1 });
        assert_eq!(straight.cursor(), resumed.cursor());
        assert_eq!(straight.next_batch(), resumed.next_batch());
        assert_eq!(drawn.len(), 7);
    }

    #[test]
    fn conditions_are_filtered_raw_labels() {
        let recs = make_synthetic_fixture(2, 1, 32).unwrap();
        let mut it = batch_iterator(&recs, &ConditionSpec::new(ExperimentName::C), 2, 0).unwrap();
        let b = it.next_batch();
        let values: BTreeSet<u32> = b.conditions.data().iter().map(|&v| v as u32).collect();
        assert_eq!(values.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(batch_iterator(&[], &spec(), 8, 0), Err(Error::EmptyDataset)));
        assert!(batch_iterator(&records(2), &spec(), 0, 0).is_err());
    }
}
