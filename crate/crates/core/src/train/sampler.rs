use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

/// One draw of the balanced sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub step: usize,
    pub defective: bool,
    /// Index into the defective or the non-defective list.
    pub index: usize,
}

/// Endless stream alternating a defective sample (even steps, counting
/// from 0) and a non-defective one (odd steps). Each class is visited in a
/// fresh random order per cycle, without replacement.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    rng: ChaCha8Rng,
    step: usize,
    orders: [Vec<usize>; 2],
    cursors: [usize; 2],
}

impl BalancedSampler {
    pub fn new(positives: usize, negatives: usize, seed: u64) -> Result<Self, TrainError> {
        if positives == 0 {
            return Err(TrainError::EmptyClass("defective"));
        }
        if negatives == 0 {
            return Err(TrainError::EmptyClass("non-defective"));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            orders: [(0..positives).collect(), (0..negatives).collect()],
            cursors: [positives, negatives],
        })
    }
}

impl Iterator for BalancedSampler {
    type Item = Draw;

    fn next(&mut self) -> Option<Draw> {
        let class = self.step % 2;
        if self.cursors[class] == self.orders[class].len() {
            self.orders[class].shuffle(&mut self.rng);
            self.cursors[class] = 0;
        }
        let index = self.orders[class][self.cursors[class]];
        self.cursors[class] += 1;
        let draw = Draw {
            step: self.step,
            defective: class == 0,
            index,
        };
        self.step += 1;
        Some(draw)
    }
}

/// Epochs in the sense of "every defective image seen once": each epoch
/// takes `2·P` steps because only every other step draws a defective sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochAccounting {
    pub positives: usize,
    pub steps: usize,
}

impl EpochAccounting {
    pub fn epochs(&self) -> f64 {
        self.steps as f64 / (2 * self.positives) as f64
    }

    pub fn whole_epochs(&self) -> usize {
        self.steps / (2 * self.positives)
    }

    /// Steps needed for `epochs` full epochs.
    pub fn steps_for(positives: usize, epochs: usize) -> usize {
        2 * positives * epochs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternates_from_defective() {
        let labels: Vec<bool> = BalancedSampler::new(3, 5, 0)
            .unwrap()
            .take(6)
            .map(|d| d.defective)
            .collect();
        assert_eq!(labels, [true, false, true, false, true, false]);
    }

    #[test]
    fn cycle_covers_every_positive() {
        let draws: Vec<Draw> = BalancedSampler::new(33, 200, 4).unwrap().take(66).collect();
        let mut seen: Vec<usize> = draws.iter().filter(|d| d.defective).map(|d| d.index).collect();
        seen.sort();
        assert_eq!(seen, (0..33).collect::<Vec<_>>());
    }

    #[test]
    fn paper_epoch_count() {
        let e = EpochAccounting {
            positives: 33,
            steps: 6600,
        };
        assert_eq!(e.epochs(), 100.0);
        assert_eq!(e.whole_epochs(), 100);
        assert_eq!(EpochAccounting::steps_for(33, 100), 6600);
    }

    #[test]
    fn empty_class_rejected() {
        assert!(matches!(
            BalancedSampler::new(0, 3, 0),
            Err(TrainError::EmptyClass("defective"))
        ));
        assert!(matches!(
            BalancedSampler::new(3, 0, 0),
            Err(TrainError::EmptyClass("non-defective"))
        ));
    }
}
