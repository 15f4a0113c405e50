use serde::{Deserialize, Serialize};

use crate::tokenizer::{BOS_ID, EOS_ID, PAD_ID};

use super::ModelError;

pub const L1_LANG: u32 = 0;
pub const L2_LANG: u32 = 1;

/// One model input: token ids with their position and language ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sequence {
    pub ids: Vec<u32>,
    pub positions: Vec<u32>,
    pub langs: Vec<u32>,
}

impl Sequence {
    /// `[BOS] ids [EOS]` in one language, truncated to `max_len` units.
    /// The flag reports whether truncation happened.
    pub fn single(ids: &[u32], lang: u32, max_len: usize) -> (Self, bool) {
        let mut seq = Self::default();
        let truncated = seq.push_segment(ids, lang, max_len);
        (seq, truncated)
    }

    /// Two segments back to back; positions restart at the second one.
    pub fn pair(first: &[u32], first_lang: u32, second: &[u32], second_lang: u32, max_len: usize) -> (Self, bool) {
        let mut seq = Self::default();
        let a = seq.push_segment(first, first_lang, max_len);
        let b = seq.push_segment(second, second_lang, max_len);
        (seq, a || b)
    }

    fn push_segment(&mut self, ids: &[u32], lang: u32, max_len: usize) -> bool {
        let room = max_len.saturating_sub(2);
        let body = &ids[..ids.len().min(room)];
        let units = std::iter::once(BOS_ID).chain(body.iter().copied()).chain(std::iter::once(EOS_ID));
        for (p, id) in units.enumerate() {
            self.ids.push(id);
            self.positions.push(p as u32);
            self.langs.push(lang);
        }
        body.len() < ids.len()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of segments, counted by positions that restart at zero.
    pub fn segments(&self) -> usize {
        self.positions.iter().filter(|&&p| p == 0).count()
    }
}

/// One padded row of a [`Batch`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRow {
    pub seq: Sequence,
    /// Columns to predict, strictly increasing.
    pub predict: Vec<usize>,
    /// Original ids at the predicted columns.
    pub targets: Vec<u32>,
}

impl BatchRow {
    pub fn new(seq: Sequence, predict: Vec<usize>, targets: Vec<u32>) -> Self {
        Self { seq, predict, targets }
    }

    /// Columns that hold real tokens.
    pub fn attended(&self) -> Vec<usize> {
        (0..self.seq.len()).filter(|&c| self.seq.ids[c] != PAD_ID).collect()
    }
}

/// Rows padded with PAD to a common width.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Batch {
    pub rows: Vec<BatchRow>,
}

impl Batch {
    pub fn new(mut rows: Vec<BatchRow>) -> Result<Self, ModelError> {
        let width = rows.iter().map(|r| r.seq.len()).max().unwrap_or(0);
        for row in &mut rows {
            while row.seq.len() < width {
                row.seq.ids.push(PAD_ID);
                row.seq.positions.push(0);
                row.seq.langs.push(0);
            }
        }
        let batch = Self { rows };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (r, row) in self.rows.iter().enumerate() {
            let s = &row.seq;
            if s.positions.len() != s.ids.len() || s.langs.len() != s.ids.len() {
                return Err(ModelError::Batch(format!("row {r}: id/position/language lengths differ")));
            }
            if row.targets.len() != row.predict.len() {
                return Err(ModelError::Batch(format!("row {r}: one target per predicted column required")));
            }
            if row.predict.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ModelError::Batch(format!("row {r}: predicted columns must increase")));
            }
            if let Some(&c) = row.predict.iter().find(|&&c| c >= s.len() || s.ids[c] == PAD_ID) {
                return Err(ModelError::Batch(format!("row {r}: column {c} is padding or out of range")));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.rows.first().map(|r| r.seq.len()).unwrap_or(0)
    }

    pub fn num_predictions(&self) -> usize {
        self.rows.iter().map(|r| r.predict.len()).sum()
    }

    pub fn targets(&self) -> Vec<u32> {
        self.rows.iter().flat_map(|r| r.targets.iter().copied()).collect()
    }

    /// Non-pad tokens in the batch.
    pub fn tokens(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.seq.ids.iter().filter(|&&i| i != PAD_ID).count())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_resets_positions() {
        let (s, cut) = Sequence::pair(&[10, 11], L1_LANG, &[12], L2_LANG, 256);
        assert!(!cut);
        assert_eq!(s.ids, vec![BOS_ID, 10, 11, EOS_ID, BOS_ID, 12, EOS_ID]);
        assert_eq!(s.positions, vec![0, 1, 2, 3, 0, 1, 2]);
        assert_eq!(s.langs, vec![0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(s.segments(), 2);
    }

    #[test]
    fn truncation_keeps_markers() {
        let (s, cut) = Sequence::single(&[9; 10], L2_LANG, 5);
        assert!(cut);
        assert_eq!(s.ids, vec![BOS_ID, 9, 9, 9, EOS_ID]);
    }

    #[test]
    fn padding_and_validation() {
        let (a, _) = Sequence::single(&[7, 8, 9], 0, 64);
        let (b, _) = Sequence::single(&[7], 0, 64);
        let batch = Batch::new(vec![BatchRow::new(a, vec![1], vec![7]), BatchRow::new(b, vec![1], vec![7])]).unwrap();
        assert_eq!(batch.width(), 5);
        assert_eq!(batch.rows[1].attended(), vec![0, 1, 2]);
        assert_eq!(batch.tokens(), 8);
        let (c, _) = Sequence::single(&[7], 0, 64);
        assert!(Batch::new(vec![BatchRow::new(c, vec![3], vec![7])]).is_err());
    }
}
