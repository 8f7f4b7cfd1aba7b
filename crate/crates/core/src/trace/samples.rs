use serde::{Deserialize, Serialize};

use super::{ThroughputTrace, FEATURE_COUNT};
use crate::error::{Error, Result};

/// Supervised windows cut from one or more traces.
///
/// Sample `k` was cut at trace index `indices[k]`: its history covers the
/// `history` steps before that index and its label is the mean throughput of
/// the `horizon` steps starting at it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleSet {
    pub history: usize,
    pub horizon: usize,
    /// Row-major `history x FEATURE_COUNT` feature matrices.
    pub x_windows: Vec<Vec<f64>>,
    /// Throughput over the same `history` steps.
    pub y_windows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub indices: Vec<usize>,
    /// Stats the set was normalized with, if any.
    pub norm_stats: Option<NormStats>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Model input sequence for sample `k`: one row per step, features then throughput.
    pub fn sequence(&self, k: usize) -> Vec<f64> {
        let mut seq = Vec::with_capacity(self.history * (FEATURE_COUNT + 1));
        for t in 0..self.history {
            seq.extend_from_slice(&self.x_windows[k][t * FEATURE_COUNT..(t + 1) * FEATURE_COUNT]);
            seq.push(self.y_windows[k][t]);
        }
        seq
    }

    /// Append another set cut with the same geometry.
    pub fn extend(&mut self, other: SampleSet) -> Result<()> {
        if self.is_empty() && self.history == 0 {
            *self = other;
            return Ok(());
        }
        if other.history != self.history || other.horizon != self.horizon {
            return Err(Error::Dimension {
                expected: format!("H={} W={}", self.history, self.horizon),
                actual: format!("H={} W={}", other.history, other.horizon),
            });
        }
        if other.norm_stats != self.norm_stats {
            return Err(Error::Invalid("cannot merge sample sets normalized with different stats".into()));
        }
        self.x_windows.extend(other.x_windows);
        self.y_windows.extend(other.y_windows);
        self.labels.extend(other.labels);
        self.indices.extend(other.indices);
        Ok(())
    }

    /// Contiguous sub-range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> SampleSet {
        SampleSet {
            history: self.history,
            horizon: self.horizon,
            x_windows: self.x_windows[start..end].to_vec(),
            y_windows: self.y_windows[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            indices: self.indices[start..end].to_vec(),
            norm_stats: self.norm_stats.clone(),
        }
    }

    /// Split into consecutive chunks with the given fractions (the last chunk takes the remainder).
    pub fn split(&self, fractions: &[f64]) -> Vec<SampleSet> {
        let n = self.len();
        let mut out = Vec::with_capacity(fractions.len());
        let mut start = 0;
        let mut acc = 0.0;
        for (k, f) in fractions.iter().enumerate() {
            acc += f;
            let end = if k + 1 == fractions.len() { n } else { ((acc * n as f64).round() as usize).min(n) };
            out.push(self.slice(start, end.max(start)));
            start = end.max(start);
        }
        out
    }
}

/// Min/max of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
}

impl ColumnStats {
    pub fn normalize(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }

    fn observe(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }
}

/// Per-column stats: the seven features followed by throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub columns: Vec<ColumnStats>,
}

impl NormStats {
    pub fn throughput(&self) -> &ColumnStats {
        &self.columns[FEATURE_COUNT]
    }

    /// Normalize a raw set with these stats.
    pub fn apply(&self, samples: &SampleSet) -> SampleSet {
        let feat = &self.columns[..FEATURE_COUNT];
        let thr = self.throughput();
        SampleSet {
            history: samples.history,
            horizon: samples.horizon,
            x_windows: samples
                .x_windows
                .iter()
                .map(|w| w.iter().enumerate().map(|(j, v)| feat[j % FEATURE_COUNT].normalize(*v)).collect())
                .collect(),
            y_windows: samples.y_windows.iter().map(|w| w.iter().map(|v| thr.normalize(*v)).collect()).collect(),
            labels: samples.labels.iter().map(|v| thr.normalize(*v)).collect(),
            indices: samples.indices.clone(),
            norm_stats: Some(self.clone()),
        }
    }

    /// Normalize one raw model row (features then throughput) in place.
    pub fn normalize_row(&self, row: &mut [f64]) {
        for (v, c) in row.iter_mut().zip(&self.columns) {
            *v = c.normalize(*v);
        }
    }
}

/// Mean of the `horizon` throughput values starting at index `i`.
pub fn avg_future_throughput(trace: &ThroughputTrace, i: usize, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::Invalid("future window must be >= 1 step".into()));
    }
    let end = i.checked_add(horizon).filter(|&e| e <= trace.len()).ok_or(Error::OutOfBounds {
        index: i.saturating_add(horizon).saturating_sub(1),
        len: trace.len(),
    })?;
    Ok(trace.throughput[i..end].iter().sum::<f64>() / horizon as f64)
}

/// Cut every `(history, horizon)` window out of a trace, in increasing index order.
/// A trace shorter than `history + horizon` yields an empty set.
pub fn create_samples(trace: &ThroughputTrace, history: usize, horizon: usize) -> Result<SampleSet> {
    if history == 0 || horizon == 0 {
        return Err(Error::Invalid(format!("H and W must be >= 1 (got H={history}, W={horizon})")));
    }
    let mut set = SampleSet { history, horizon, ..Default::default() };
    if trace.len() < history + horizon {
        return Ok(set);
    }
    let rows: Vec<[f64; FEATURE_COUNT]> = trace.features.iter().map(|f| f.to_array()).collect();
    for i in history..=trace.len() - horizon {
        let mut xw = Vec::with_capacity(history * FEATURE_COUNT);
        for row in &rows[i - history..i] {
            xw.extend_from_slice(row);
        }
        set.x_windows.push(xw);
        set.y_windows.push(trace.throughput[i - history..i].to_vec());
        set.labels.push(avg_future_throughput(trace, i, horizon)?);
        set.indices.push(i);
    }
    Ok(set)
}

/// Min-max normalize every column over the whole set, returning the stats used.
pub fn minmax_normalize(samples: &SampleSet) -> Result<(SampleSet, NormStats)> {
    if samples.is_empty() {
        return Err(Error::Invalid("cannot normalize an empty sample set".into()));
    }
    let mut columns = vec![ColumnStats { min: f64::INFINITY, max: f64::NEG_INFINITY }; FEATURE_COUNT + 1];
    for w in &samples.x_windows {
        for (j, v) in w.iter().enumerate() {
            columns[j % FEATURE_COUNT].observe(*v);
        }
    }
    for w in &samples.y_windows {
        for v in w {
            columns[FEATURE_COUNT].observe(*v);
        }
    }
    for v in &samples.labels {
        columns[FEATURE_COUNT].observe(*v);
    }
    let stats = NormStats { columns };
    Ok((stats.apply(samples), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::flat_trace;
    use proptest::prelude::*;

    #[test]
    fn constant_trace_single_sample() {
        let t = flat_trace(&[4.0; 5], 1.0);
        let s = create_samples(&t, 3, 2).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.labels[0], 4.0);
        assert_eq!(s.y_windows[0], vec![4.0; 3]);
    }

    #[test]
    fn hand_enumerated_windows() {
        let t = flat_trace(&[1.0, 2.0, 3.0, 4.0, 5.0], 1.0);
        let s = create_samples(&t, 2, 2).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.y_windows[0], vec![1.0, 2.0]);
        assert_eq!(s.labels[0], 3.5);
        assert_eq!(s.y_windows[1], vec![2.0, 3.0]);
        assert_eq!(s.labels[1], 4.5);
        assert_eq!(s.indices, vec![2, 3]);
    }

    #[test]
    fn too_short_is_empty() {
        let t = flat_trace(&[1.0, 2.0, 3.0], 1.0);
        assert!(create_samples(&t, 2, 2).unwrap().is_empty());
    }

    #[test]
    fn future_average_cases() {
        let t = flat_trace(&[2.0, 4.0], 1.0);
        assert_eq!(avg_future_throughput(&t, 0, 2).unwrap(), 3.0);
        assert_eq!(avg_future_throughput(&t, 1, 1).unwrap(), 4.0);
        assert!(matches!(avg_future_throughput(&t, 1, 2), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn column_normalization() {
        let c = ColumnStats { min: 0.0, max: 10.0 };
        assert_eq!([0.0, 5.0, 10.0].map(|v| c.normalize(v)), [0.0, 0.5, 1.0]);
        let flat = ColumnStats { min: 3.0, max: 3.0 };
        assert_eq!(flat.normalize(3.0), 0.0);
    }

    #[test]
    fn normalized_set_is_in_unit_range() {
        let t = flat_trace(&[1.0, 9.0, 3.0, 7.0, 5.0, 2.0, 8.0], 1.0);
        let s = create_samples(&t, 2, 2).unwrap();
        let (n, stats) = minmax_normalize(&s).unwrap();
        assert_eq!(stats.throughput().min, 1.0);
        assert!(n.y_windows.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        // constant feature columns collapse to zero
        assert!(n.x_windows.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(n.norm_stats.as_ref(), Some(&stats));
    }

    #[test]
    fn empty_set_cannot_be_normalized() {
        assert!(minmax_normalize(&SampleSet::default()).is_err());
    }

    fn random_trace(values: Vec<f64>) -> ThroughputTrace {
        flat_trace(&values, 1.0)
    }

    proptest! {
        #[test]
        fn sample_count_and_labels(values in prop::collection::vec(0.0f64..100.0, 1..40), h in 1usize..6, w in 1usize..6) {
            let t = random_trace(values.clone());
            let s = create_samples(&t, h, w).unwrap();
            prop_assert_eq!(s.len(), (values.len() + 1).saturating_sub(h + w));
            for (k, &i) in s.indices.iter().enumerate() {
                // direct summation oracle
                let mut acc = 0.0;
                for j in i..i + w { acc += values[j]; }
                prop_assert!((s.labels[k] - acc / w as f64).abs() <= 1e-12 * (1.0 + acc.abs()));
                prop_assert_eq!(s.labels[k], avg_future_throughput(&t, i, w).unwrap());
            }
        }

        #[test]
        fn normalization_round_trip(col in prop::collection::vec(-1e3f64..1e3, 2..50)) {
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi > lo);
            let c = ColumnStats { min: lo, max: hi };
            for v in &col {
                prop_assert!((c.denormalize(c.normalize(*v)) - v).abs() <= 1e-9 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn normalization_is_monotone(a in -1e3f64..1e3, b in -1e3f64..1e3, lo in -2e3f64..0.0, span in 0.0f64..4e3) {
            let c = ColumnStats { min: lo, max: lo + span };
            if a < b {
                prop_assert!(c.normalize(a) <= c.normalize(b));
            }
        }
    }
}
