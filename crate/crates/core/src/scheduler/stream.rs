use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::generators::derive_seed;
use crate::corpus::TaskInstance;
use crate::error::{Error, Result};

/// Endless, reshuffled-per-epoch view of one task's instances.
///
/// The state is a single position counter, so a stream is reconstructed
/// exactly from `(instances, seed, position)`.
#[derive(Debug, Clone)]
pub struct DataStream {
    task_id: u16,
    instances: Vec<TaskInstance>,
    seed: u64,
    position: u64,
    epoch: u64,
    order: Vec<usize>,
}

impl DataStream {
    pub fn new(task_id: u16, instances: Vec<TaskInstance>, seed: u64) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::NoData(task_id));
        }
        let mut s = DataStream {
            task_id,
            instances,
            seed,
            position: 0,
            epoch: 0,
            order: Vec::new(),
        };
        s.shuffle(0);
        Ok(s)
    }

    fn shuffle(&mut self, epoch: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[self.task_id as u64, epoch]));
        self.order = (0..self.instances.len()).collect();
        self.order.shuffle(&mut rng);
        self.epoch = epoch;
    }

    pub fn task_id(&self) -> u16 {
        self.task_id
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn seek(&mut self, position: u64) {
        self.position = position;
    }

    pub fn next_instance(&mut self) -> &TaskInstance {
        let n = self.instances.len() as u64;
        let epoch = self.position / n;
        if epoch != self.epoch {
            self.shuffle(epoch);
        }
        let idx = self.order[(self.position % n) as usize];
        self.position += 1;
        &self.instances[idx]
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<TaskInstance> {
        (0..size).map(|_| self.next_instance().clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(n: u32) -> DataStream {
        let insts = (0..n)
            .map(|i| {
                let mut t = TaskInstance::from_segments(4, &[&[10 + i]]);
                t.sentence_label = Some(i);
                t
            })
            .collect();
        DataStream::new(4, insts, 9).unwrap()
    }

    #[test]
    fn wraps_with_reshuffle() {
        let mut s = stream(5);
        let labels: Vec<u32> = (0..15).map(|_| s.next_instance().sentence_label.unwrap()).collect();
        for epoch in labels.chunks(5) {
            let mut e = epoch.to_vec();
            e.sort();
            assert_eq!(e, [0, 1, 2, 3, 4]);
        }
        assert_ne!(labels[..5], labels[5..10]);
    }

    #[test]
    fn seek_reproduces_sequence() {
        let mut a = stream(7);
        let first: Vec<_> = (0..20).map(|_| a.next_instance().clone()).collect();
        let mut b = stream(7);
        b.seek(12);
        for inst in &first[12..] {
            assert_eq!(b.next_instance(), inst);
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(DataStream::new(2, vec![], 0), Err(Error::NoData(2))));
    }
}
