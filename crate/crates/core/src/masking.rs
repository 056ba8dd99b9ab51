//! Boolean attention masks derived from (adjusted) policies.
//!
//! `true` means attention is permitted. Masks are stored row-major with the
//! query position as the row. The encoder and decoder self-attention masks are
//! both causal, which makes the encoder state of source position `j` a function
//! of `x_1..x_j` only: one forward pass over the full source then serves every
//! target step's prefix.

use std::fmt::Write as _;

use crate::curriculum::AdjustedPolicy;
use crate::error::{Error, Result};

/// Dense boolean matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BoolMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// 0-based access.
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn count_row(&self, r: usize) -> usize {
        self.row(r).iter().filter(|&&b| b).count()
    }

    /// Causal mask over `len` real positions inside a `padded` square; padded
    /// rows and columns stay false.
    pub fn causal(len: usize, padded: usize) -> Self {
        let mut m = Self::new(padded, padded);
        for r in 0..len {
            for c in 0..=r {
                m.set(r, c, true);
            }
        }
        m
    }

    /// Debug text form: one line per row, `1`/`0` per column.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for &b in self.row(r) {
                out.push(if b { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

/// All masks needed for one sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    pub src_len: usize,
    pub tgt_len: usize,
    /// Target steps x source positions.
    pub cross: BoolMatrix,
    pub enc_self: BoolMatrix,
    pub dec_self: BoolMatrix,
    /// `true` marks a padding source position.
    pub src_pad: Vec<bool>,
    /// `true` marks a padding target position.
    pub tgt_pad: Vec<bool>,
}

impl MaskSet {
    pub fn padded_src(&self) -> usize {
        self.cross.cols()
    }

    pub fn padded_tgt(&self) -> usize {
        self.cross.rows()
    }

    /// Cross-attention mask in the debug text format.
    pub fn cross_text(&self) -> String {
        self.cross.to_text()
    }

    /// Mask where target step `i` reads the first `reads[i]` source positions.
    pub fn from_prefix_reads(reads: &[usize], src_len: usize) -> Result<Self> {
        let tgt_len = reads.len();
        let mut cross = BoolMatrix::new(tgt_len, src_len);
        for (r, &g) in reads.iter().enumerate() {
            if g > src_len {
                return Err(Error::Shape(format!(
                    "step {} reads {g} of {src_len} source tokens",
                    r + 1
                )));
            }
            for c in 0..g {
                cross.set(r, c, true);
            }
        }
        Ok(Self {
            src_len,
            tgt_len,
            cross,
            enc_self: BoolMatrix::causal(src_len, src_len),
            dec_self: BoolMatrix::causal(tgt_len, tgt_len),
            src_pad: vec![false; src_len],
            tgt_pad: vec![false; tgt_len],
        })
    }
}

/// Builds the mask set for one pair, padded to `pad_to = (source, target)`.
pub fn build_masks(
    adjusted: &AdjustedPolicy,
    src_len: usize,
    tgt_len: usize,
    pad_to: (usize, usize),
) -> Result<MaskSet> {
    if adjusted.src_len() != src_len || adjusted.tgt_len() != tgt_len {
        return Err(Error::Shape(format!(
            "policy covers {}x{} but lengths are {tgt_len}x{src_len}",
            adjusted.tgt_len(),
            adjusted.src_len()
        )));
    }
    let (src_pad_len, tgt_pad_len) = pad_to;
    if src_pad_len < src_len || tgt_pad_len < tgt_len {
        return Err(Error::Shape(format!(
            "cannot pad {tgt_len}x{src_len} down to {tgt_pad_len}x{src_pad_len}"
        )));
    }
    let mut cross = BoolMatrix::new(tgt_pad_len, src_pad_len);
    for step in 1..=tgt_len {
        for pos in adjusted.readable(step) {
            cross.set(step - 1, pos - 1, true);
        }
    }
    Ok(MaskSet {
        src_len,
        tgt_len,
        cross,
        enc_self: BoolMatrix::causal(src_len, src_pad_len),
        dec_self: BoolMatrix::causal(tgt_len, tgt_pad_len),
        src_pad: (0..src_pad_len).map(|j| j >= src_len).collect(),
        tgt_pad: (0..tgt_pad_len).map(|i| i >= tgt_len).collect(),
    })
}

/// Masks of a batch, all sharing one padded shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchMasks {
    pub src_pad_len: usize,
    pub tgt_pad_len: usize,
    pub sets: Vec<MaskSet>,
}

impl BatchMasks {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Stacks per-sentence masks padded to `(source, target)` lengths.
pub fn batch_masks(sets: Vec<MaskSet>, pad_to: (usize, usize)) -> Result<BatchMasks> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("cannot batch zero mask sets".into()));
    }
    for (i, s) in sets.iter().enumerate() {
        if (s.padded_src(), s.padded_tgt()) != pad_to
            || s.enc_self.rows() != pad_to.0
            || s.dec_self.rows() != pad_to.1
        {
            return Err(Error::Shape(format!(
                "mask set {i} is padded to {}x{}, batch expects {}x{}",
                s.padded_tgt(),
                s.padded_src(),
                pad_to.1,
                pad_to.0
            )));
        }
    }
    Ok(BatchMasks {
        src_pad_len: pad_to.0,
        tgt_pad_len: pad_to.1,
        sets,
    })
}

/// Renders a batch in the debug text format, sentences separated by a blank line.
pub fn batch_text(batch: &BatchMasks) -> String {
    let mut out = String::new();
    for (i, s) in batch.sets.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{}", s.cross_text());
    }
    out
}
