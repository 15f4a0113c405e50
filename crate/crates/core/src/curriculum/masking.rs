use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Batch, BatchRow, ModelError, Sequence};
use crate::rng::{self, Stream};
use crate::tokenizer::{MASK_ID, NUM_SPECIALS};

use super::CurriculumError;

/// Token selection rate and the treatment split of selected tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingConfig {
    pub mask_rate: f64,
    pub p_mask: f64,
    pub p_random: f64,
    pub p_keep: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            mask_rate: 0.15,
            p_mask: 0.8,
            p_random: 0.1,
            p_keep: 0.1,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let rates = [self.mask_rate, self.p_mask, self.p_random, self.p_keep];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(CurriculumError::Config("masking rates must lie in [0, 1]".into()));
        }
        if (self.p_mask + self.p_random + self.p_keep - 1.0).abs() > 1e-9 {
            return Err(CurriculumError::Config("mask/random/keep split must sum to 1".into()));
        }
        Ok(())
    }
}

/// Counts of what masking did to a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskStats {
    pub eligible: usize,
    pub selected: usize,
    pub masked: usize,
    pub randomized: usize,
    pub kept: usize,
    /// Nothing was selected, so the batch has no prediction targets.
    pub no_predictions: bool,
}

impl MaskStats {
    pub fn merge(&mut self, other: &MaskStats) {
        self.eligible += other.eligible;
        self.selected += other.selected;
        self.masked += other.masked;
        self.randomized += other.randomized;
        self.kept += other.kept;
        self.no_predictions = self.selected == 0;
    }
}

/// Masks one sequence. Specials (including PAD) are never selected.
pub fn mask_sequence<R: Rng>(
    seq: &Sequence,
    cfg: &MaskingConfig,
    vocab_size: usize,
    rng: &mut R,
) -> (BatchRow, MaskStats) {
    let mut out = seq.clone();
    let mut predict = Vec::new();
    let mut targets = Vec::new();
    let mut stats = MaskStats::default();
    let random_ok = vocab_size > NUM_SPECIALS;
    for (c, &id) in seq.ids.iter().enumerate() {
        if (id as usize) < NUM_SPECIALS {
            continue;
        }
        stats.eligible += 1;
        if rng.random::<f64>() >= cfg.mask_rate {
            continue;
        }
        stats.selected += 1;
        predict.push(c);
        targets.push(id);
        let u = rng.random::<f64>();
        if u < cfg.p_mask {
            out.ids[c] = MASK_ID;
            stats.masked += 1;
        } else if u < cfg.p_mask + cfg.p_random && random_ok {
            out.ids[c] = rng.random_range(NUM_SPECIALS as u32..vocab_size as u32);
            stats.randomized += 1;
        } else {
            stats.kept += 1;
        }
    }
    stats.no_predictions = stats.selected == 0;
    (BatchRow::new(out, predict, targets), stats)
}

/// Masks every sequence with a stream keyed on `key` and the row index.
pub fn mask_batch(
    seqs: &[Sequence],
    cfg: &MaskingConfig,
    vocab_size: usize,
    key: u64,
) -> Result<(Batch, MaskStats), ModelError> {
    let mut stats = MaskStats::default();
    let mut rows = Vec::with_capacity(seqs.len());
    for (r, seq) in seqs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(rng::key(key, Stream::Mask, &[r as u64]));
        let (row, s) = mask_sequence(seq, cfg, vocab_size, &mut rng);
        stats.merge(&s);
        rows.push(row);
    }
    stats.no_predictions = stats.selected == 0;
    Ok((Batch::new(rows)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::L1_LANG;
    use crate::tokenizer::{BOS_ID, EOS_ID};

    fn seq() -> Sequence {
        Sequence::single(&[7, 8, 9, 10], L1_LANG, 64).0
    }

    #[test]
    fn zero_rate_flags_empty() {
        let cfg = MaskingConfig {
            mask_rate: 0.0,
            ..MaskingConfig::default()
        };
        let (batch, stats) = mask_batch(&[seq()], &cfg, 20, 1).unwrap();
        assert!(stats.no_predictions);
        assert_eq!(batch.num_predictions(), 0);
    }

    #[test]
    fn full_rate_masks_everything_but_specials() {
        let cfg = MaskingConfig {
            mask_rate: 1.0,
            p_mask: 1.0,
            p_random: 0.0,
            p_keep: 0.0,
        };
        let (batch, stats) = mask_batch(&[seq()], &cfg, 20, 1).unwrap();
        let row = &batch.rows[0];
        assert_eq!(row.seq.ids, vec![BOS_ID, MASK_ID, MASK_ID, MASK_ID, MASK_ID, EOS_ID]);
        assert_eq!(row.predict, vec![1, 2, 3, 4]);
        assert_eq!(row.targets, vec![7, 8, 9, 10]);
        assert_eq!(stats.masked, 4);
    }

    #[test]
    fn split_must_sum_to_one() {
        let cfg = MaskingConfig {
            p_keep: 0.5,
            ..MaskingConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(MaskingConfig::default().validate().is_ok());
    }
}
