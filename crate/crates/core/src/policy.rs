//! Translation policies as read-count vectors.
//!
//! A policy assigns to every target step `i` (1-based) the number of source
//! tokens `g_i` that may be read before emitting target token `i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-target-step readable source counts for one sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyVector {
    reads: Vec<usize>,
    src_len: usize,
}

/// The first broken invariant of a [`PolicyVector`]. Steps are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyViolation {
    pub step: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    BelowOne,
    ExceedsSource,
    Decreasing,
}

impl fmt::Display for PolicyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::BelowOne => "reads fewer than one source token",
            ViolationKind::ExceedsSource => "reads past the end of the source",
            ViolationKind::Decreasing => "read count decreases",
        };
        write!(f, "violation at i={}: {}", self.step, what)
    }
}

impl From<PolicyViolation> for Error {
    fn from(v: PolicyViolation) -> Self {
        Error::PolicyViolation {
            step: v.step,
            reason: v.to_string(),
        }
    }
}

impl PolicyVector {
    /// Builds a validated policy.
    pub fn new(reads: Vec<usize>, src_len: usize) -> Result<Self> {
        let p = Self::from_raw(reads, src_len);
        validate_policy(&p)?;
        Ok(p)
    }

    /// Builds a policy without checking its invariants; see [`validate_policy`].
    pub fn from_raw(reads: Vec<usize>, src_len: usize) -> Self {
        Self { reads, src_len }
    }

    pub fn reads(&self) -> &[usize] {
        &self.reads
    }

    pub fn src_len(&self) -> usize {
        self.src_len
    }

    pub fn tgt_len(&self) -> usize {
        self.reads.len()
    }

    /// `g_i` for 1-based step `i`.
    pub fn at(&self, step: usize) -> usize {
        self.reads[step - 1]
    }
}

impl fmt::Display for PolicyVector {
    /// Trace-file form: `J=<src_len>` followed by the read counts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J={}", self.src_len)?;
        for g in &self.reads {
            write!(f, " {g}")?;
        }
        Ok(())
    }
}

impl FromStr for PolicyVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let head = parts
            .next()
            .ok_or_else(|| Error::Data("empty policy line".into()))?;
        let src_len = head
            .strip_prefix("J=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| {
                Error::Data(format!("policy line must start with J=<int>, got {head:?}"))
            })?;
        let reads = parts
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Data(format!("bad read count {t:?} in policy line")))
            })
            .collect::<Result<Vec<usize>>>()?;
        Ok(Self::from_raw(reads, src_len))
    }
}

/// Checks `1 <= g_i <= J` and monotonicity, naming the first offending step.
pub fn validate_policy(p: &PolicyVector) -> Result<(), PolicyViolation> {
    let mut prev = 0;
    for (idx, &g) in p.reads.iter().enumerate() {
        let step = idx + 1;
        let kind = if g < 1 {
            Some(ViolationKind::BelowOne)
        } else if g > p.src_len {
            Some(ViolationKind::ExceedsSource)
        } else if g < prev {
            Some(ViolationKind::Decreasing)
        } else {
            None
        };
        if let Some(kind) = kind {
            return Err(PolicyViolation { step, kind });
        }
        prev = g;
    }
    Ok(())
}

fn require_positive(name: &str, v: usize) -> Result<()> {
    if v < 1 {
        return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
    }
    Ok(())
}

/// Wait-k: read `k` tokens, then alternate one write per read,
/// `g_i = min(k + i - 1, J)`.
pub fn wait_k_policy(k: usize, tgt_len: usize, src_len: usize) -> Result<PolicyVector> {
    require_positive("k", k)?;
    require_positive("target length", tgt_len)?;
    require_positive("source length", src_len)?;
    let reads = (1..=tgt_len).map(|i| (k + i - 1).min(src_len)).collect();
    Ok(PolicyVector::from_raw(reads, src_len))
}

/// Candidate read counts of the hidden Markov transformer: `N` events per
/// target step, `events[i][n] = min(L + (i-1) + (n-1), J)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HmtLattice {
    events: Vec<Vec<usize>>,
    initial_reads: usize,
    src_len: usize,
}

impl HmtLattice {
    pub fn events(&self) -> &[Vec<usize>] {
        &self.events
    }

    pub fn initial_reads(&self) -> usize {
        self.initial_reads
    }

    pub fn events_per_step(&self) -> usize {
        self.events.first().map_or(0, Vec::len)
    }

    pub fn src_len(&self) -> usize {
        self.src_len
    }

    /// The policy obtained by always taking event `n` (1-based).
    pub fn column(&self, n: usize) -> PolicyVector {
        PolicyVector::from_raw(
            self.events.iter().map(|row| row[n - 1]).collect(),
            self.src_len,
        )
    }

    /// The policy obtained by asking `selector` for an event at every step.
    pub fn select(&self, selector: &dyn EventSelector) -> PolicyVector {
        let reads = self
            .events
            .iter()
            .enumerate()
            .map(|(i, row)| row[selector.select(i + 1, row) - 1])
            .collect();
        PolicyVector::from_raw(reads, self.src_len)
    }
}

pub fn hmt_lattice(
    initial_reads: usize,
    events_per_step: usize,
    tgt_len: usize,
    src_len: usize,
) -> Result<HmtLattice> {
    require_positive("L", initial_reads)?;
    require_positive("N", events_per_step)?;
    require_positive("target length", tgt_len)?;
    require_positive("source length", src_len)?;
    let events = (1..=tgt_len)
        .map(|i| {
            (1..=events_per_step)
                .map(|n| (initial_reads + (i - 1) + (n - 1)).min(src_len))
                .collect()
        })
        .collect();
    Ok(HmtLattice {
        events,
        initial_reads,
        src_len,
    })
}

/// Chooses one of the `N` HMT events at a target step. Returns a 1-based event index.
pub trait EventSelector: Send + Sync {
    fn select(&self, step: usize, events: &[usize]) -> usize;
}

/// Always takes the same event (the first one by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedEvent(pub usize);

impl Default for FixedEvent {
    fn default() -> Self {
        FixedEvent(1)
    }
}

impl EventSelector for FixedEvent {
    fn select(&self, _step: usize, events: &[usize]) -> usize {
        self.0.clamp(1, events.len())
    }
}

/// A policy that can produce `g_i` for any step on demand, used both to build
/// training masks and to drive streaming decoding.
pub trait ReadSchedule: Send + Sync {
    /// Read count before writing 1-based target step `step`, not yet clipped to `src_len`.
    fn reads_before(&self, step: usize, src_len: usize) -> usize;

    /// Dense policy vector for a pair of known lengths (clipped to the source).
    fn vector(&self, tgt_len: usize, src_len: usize) -> PolicyVector {
        let reads = (1..=tgt_len)
            .map(|i| self.reads_before(i, src_len).clamp(1, src_len))
            .collect();
        PolicyVector::from_raw(reads, src_len)
    }
}

/// Serializable description of a policy family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Wait-k with the given `k`.
    WaitK { k: usize },
    /// Full-sentence (sequence-to-sequence) translation.
    Full,
    /// HMT event lattice with a fixed event choice (`event` is 1-based).
    Hmt {
        l: usize,
        n: usize,
        #[serde(default = "default_event")]
        event: usize,
    },
}

fn default_event() -> usize {
    1
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicySpec::WaitK { k } => require_positive("k", k),
            PolicySpec::Full => Ok(()),
            PolicySpec::Hmt { l, n, event } => {
                require_positive("L", l)?;
                require_positive("N", n)?;
                if event < 1 || event > n {
                    return Err(Error::InvalidArgument(format!(
                        "HMT event {event} outside 1..={n}"
                    )));
                }
                Ok(())
            }
        }
    }
}

impl ReadSchedule for PolicySpec {
    fn reads_before(&self, step: usize, src_len: usize) -> usize {
        match *self {
            PolicySpec::WaitK { k } => k + step - 1,
            PolicySpec::Full => src_len,
            PolicySpec::Hmt { l, event, .. } => l + (step - 1) + (event - 1),
        }
    }
}

impl ReadSchedule for PolicyVector {
    /// Steps past the end of the vector read the whole source.
    fn reads_before(&self, step: usize, src_len: usize) -> usize {
        self.reads.get(step - 1).copied().unwrap_or(src_len)
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PolicySpec::WaitK { k } => write!(f, "wait-{k}"),
            PolicySpec::Full => write!(f, "full"),
            PolicySpec::Hmt { l, n, event } => write!(f, "hmt(L={l},N={n},event={event})"),
        }
    }
}
