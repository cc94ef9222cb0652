//! Segment-based detection metrics and clip-level scene scores.
//!
//! Detection is scored per (event, segment) cell: a segment defaults to one
//! feature frame, and [`segment_reduce`] coarsens a roll by OR-ing counts
//! within fixed-width segment blocks for compatibility with toolkits that
//! score on longer segments. Counts pool across clips (micro-averaging) by
//! plain addition of [`MetricCounts`].

use crate::error::{Error, Result};

/// Binary activity matrix: one row per event class, one column per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRoll {
    events: usize,
    frames: usize,
    active: Vec<bool>,
}

impl EventRoll {
    pub fn zeros(events: usize, frames: usize) -> Self {
        EventRoll { events, frames, active: vec![false; events * frames] }
    }

    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let events = rows.len();
        let frames = rows.first().map_or(0, |r| r.len());
        let mut roll = EventRoll::zeros(events, frames);
        for (m, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), frames, "ragged roll rows");
            for (t, &v) in row.iter().enumerate() {
                roll.set(m, t, v != 0);
            }
        }
        roll
    }

    #[inline]
    pub fn events(&self) -> usize {
        self.events
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn get(&self, event: usize, frame: usize) -> bool {
        self.active[event * self.frames + frame]
    }

    #[inline]
    pub fn set(&mut self, event: usize, frame: usize, value: bool) {
        self.active[event * self.frames + frame] = value;
    }

    #[inline]
    pub fn row(&self, event: usize) -> &[bool] {
        &self.active[event * self.frames..(event + 1) * self.frames]
    }

    pub fn count_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Pooled true/false positive/negative totals plus the per-frame tallies
/// that feed the error-rate decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MetricCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// False positives per frame.
    pub fp_k: Vec<u64>,
    /// False negatives per frame.
    pub fn_k: Vec<u64>,
    /// Reference actives per frame.
    pub n_k: Vec<u64>,
}

impl MetricCounts {
    pub fn new(frames: usize) -> Self {
        MetricCounts { tp: 0, fp: 0, fn_: 0, fp_k: vec![0; frames], fn_k: vec![0; frames], n_k: vec![0; frames] }
    }

    /// Pool another clip's counts into this one. Frame tallies are
    /// concatenated, so pooled error rates keep their per-frame structure.
    pub fn merge(&mut self, other: &MetricCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.fp_k.extend_from_slice(&other.fp_k);
        self.fn_k.extend_from_slice(&other.fn_k);
        self.n_k.extend_from_slice(&other.n_k);
    }
}

/// Classify every (event, frame) cell of a prediction against the reference.
pub fn frame_counts(reference: &EventRoll, prediction: &EventRoll) -> Result<MetricCounts> {
    if reference.events != prediction.events || reference.frames != prediction.frames {
        return Err(Error::shape(
            "frame_counts",
            format!("{}x{}", reference.events, reference.frames),
            format!("{}x{}", prediction.events, prediction.frames),
        ));
    }
    let mut counts = MetricCounts::new(reference.frames);
    for m in 0..reference.events {
        let ref_row = reference.row(m);
        let pred_row = prediction.row(m);
        for t in 0..reference.frames {
            match (ref_row[t], pred_row[t]) {
                (true, true) => {
                    counts.tp += 1;
                    counts.n_k[t] += 1;
                }
                (true, false) => {
                    counts.fn_ += 1;
                    counts.fn_k[t] += 1;
                    counts.n_k[t] += 1;
                }
                (false, true) => {
                    counts.fp += 1;
                    counts.fp_k[t] += 1;
                }
                (false, false) => {}
            }
        }
    }
    Ok(counts)
}

/// Counts restricted to a single event row, one entry per class.
pub fn per_event_counts(reference: &EventRoll, prediction: &EventRoll) -> Result<Vec<MetricCounts>> {
    if reference.events != prediction.events || reference.frames != prediction.frames {
        return Err(Error::shape(
            "per_event_counts",
            format!("{}x{}", reference.events, reference.frames),
            format!("{}x{}", prediction.events, prediction.frames),
        ));
    }
    (0..reference.events)
        .map(|m| {
            let ref_row = single_row(reference, m);
            let pred_row = single_row(prediction, m);
            frame_counts(&ref_row, &pred_row)
        })
        .collect()
}

fn single_row(roll: &EventRoll, event: usize) -> EventRoll {
    let mut out = EventRoll::zeros(1, roll.frames);
    for t in 0..roll.frames {
        out.set(0, t, roll.get(event, t));
    }
    out
}

/// Precision, recall, F-score. Any 0/0 is scored 0 by convention.
pub fn precision_recall_f(counts: &MetricCounts) -> (f64, f64, f64) {
    let p = ratio(counts.tp, counts.tp + counts.fp);
    let r = ratio(counts.tp, counts.tp + counts.fn_);
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Error rate outcome. The rate is undefined when errors exist but the
/// reference contains no active cells (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorRate {
    Defined(f64),
    Undefined,
}

impl ErrorRate {
    pub fn as_f64(self) -> f64 {
        match self {
            ErrorRate::Defined(v) => v,
            ErrorRate::Undefined => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for ErrorRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErrorRate::Defined(v) => write!(f, "{v}"),
            ErrorRate::Undefined => write!(f, "undefined"),
        }
    }
}

/// Segment error rate: per frame, substitutions pair up false negatives with
/// false positives, the remainders count as deletions or insertions, and the
/// totals are divided by the number of reference actives.
pub fn error_rate(counts: &MetricCounts) -> ErrorRate {
    let mut subs = 0u64;
    let mut dels = 0u64;
    let mut ins = 0u64;
    for k in 0..counts.n_k.len() {
        let fn_k = counts.fn_k[k];
        let fp_k = counts.fp_k[k];
        subs += fn_k.min(fp_k);
        dels += fn_k.saturating_sub(fp_k);
        ins += fp_k.saturating_sub(fn_k);
    }
    let errors = subs + dels + ins;
    let total: u64 = counts.n_k.iter().sum();
    if total == 0 {
        if errors == 0 {
            ErrorRate::Defined(0.0)
        } else {
            ErrorRate::Undefined
        }
    } else {
        ErrorRate::Defined(errors as f64 / total as f64)
    }
}

/// OR-reduce a roll into segments of `segment_frames` frames (the last
/// segment may be shorter). `segment_frames == 1` is the identity.
pub fn segment_reduce(roll: &EventRoll, segment_frames: usize) -> EventRoll {
    assert!(segment_frames >= 1, "segment width must be positive");
    if segment_frames == 1 {
        return roll.clone();
    }
    let segments = roll.frames.div_ceil(segment_frames);
    let mut out = EventRoll::zeros(roll.events, segments);
    for m in 0..roll.events {
        for t in 0..roll.frames {
            if roll.get(m, t) {
                out.set(m, t / segment_frames, true);
            }
        }
    }
    out
}

/// Clip-level scene scores: micro-averaged F over pooled clip counts plus a
/// one-vs-rest F per class. For single-label classification the micro F
/// equals plain accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneScore {
    pub micro_f: f64,
    pub per_class_f: Vec<f64>,
}

pub fn scene_f(reference: &[usize], prediction: &[usize], n_classes: usize) -> Result<SceneScore> {
    if reference.is_empty() {
        return Err(Error::EmptyInput("scene_f reference"));
    }
    if reference.len() != prediction.len() {
        return Err(Error::shape("scene_f", reference.len().to_string(), prediction.len().to_string()));
    }
    let mut tp = vec![0u64; n_classes];
    let mut fp = vec![0u64; n_classes];
    let mut fn_ = vec![0u64; n_classes];
    for (&r, &p) in reference.iter().zip(prediction) {
        if r >= n_classes || p >= n_classes {
            return Err(Error::Corpus(format!("scene index out of range: ref {r}, pred {p}, classes {n_classes}")));
        }
        if r == p {
            tp[r] += 1;
        } else {
            fn_[r] += 1;
            fp[p] += 1;
        }
    }
    let pooled = MetricCounts {
        tp: tp.iter().sum(),
        fp: fp.iter().sum(),
        fn_: fn_.iter().sum(),
        ..MetricCounts::default()
    };
    let (_, _, micro_f) = precision_recall_f(&pooled);
    let per_class_f = (0..n_classes)
        .map(|c| {
            let counts = MetricCounts { tp: tp[c], fp: fp[c], fn_: fn_[c], ..MetricCounts::default() };
            precision_recall_f(&counts).2
        })
        .collect();
    Ok(SceneScore { micro_f, per_class_f })
}
