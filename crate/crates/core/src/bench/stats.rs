use std::collections::BTreeMap;

use super::BenchSample;

/// Quantile by linear interpolation between order statistics: position
/// `(n - 1) * p` in the sorted sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<BenchSample>,
    pub removed: Vec<BenchSample>,
    /// `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]` of the last pass; `None` when the
    /// sample was too small to filter.
    pub fences: Option<(f64, f64)>,
}

fn fences(ys: &[f64]) -> (f64, f64) {
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    (q1 - 1.5 * iqr, q3 + 1.5 * iqr)
}

/// Drops samples whose `y_ms` falls outside the Tukey fences. Fewer than
/// four samples pass through unchanged.
pub fn iqr_filter(samples: &[BenchSample]) -> FilterOutcome {
    if samples.len() < 4 {
        log::warn!(
            "IQR filter needs at least 4 samples, got {}; passing through",
            samples.len()
        );
        return FilterOutcome {
            kept: samples.to_vec(),
            removed: Vec::new(),
            fences: None,
        };
    }
    let ys: Vec<f64> = samples.iter().map(|s| s.y_ms).collect();
    let (lo, hi) = fences(&ys);
    let (kept, removed) = samples.iter().partition(|s| s.y_ms >= lo && s.y_ms <= hi);
    FilterOutcome {
        kept,
        removed,
        fences: Some((lo, hi)),
    }
}

/// Repeats [`iqr_filter`] until nothing more is removed, so the result is
/// a fixed point: filtering it again changes nothing.
pub fn iqr_filter_stable(samples: &[BenchSample]) -> FilterOutcome {
    let mut out = iqr_filter(samples);
    loop {
        let next = iqr_filter(&out.kept);
        if next.removed.is_empty() {
            out.fences = next.fences.or(out.fences);
            return out;
        }
        out.removed.extend(next.removed);
        out.kept = next.kept;
        out.fences = next.fences;
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Median `y_ms` per bin of `bin_width` in `x`, keyed by bin start.
pub fn binned_medians(samples: &[BenchSample], bin_width: f64) -> Vec<(f64, f64)> {
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for s in samples {
        bins.entry((s.x / bin_width).floor() as i64)
            .or_default()
            .push(s.y_ms);
    }
    bins.into_iter()
        .map(|(b, ys)| (b as f64 * bin_width, median(&ys)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::SampleKind;

    fn samples(ys: &[f64]) -> Vec<BenchSample> {
        ys.iter()
            .enumerate()
            .map(|(i, &y)| BenchSample {
                cycle: i as u64,
                x: i as f64,
                y_ms: y,
                kind: SampleKind::Rctp,
                hash_ops: 0,
            })
            .collect()
    }

    #[test]
    fn hand_computed_quartiles() {
        // Sorted {1,2,3,4,1000}: Q1 at position 1 = 2, Q3 at position 3 = 4,
        // fences [-1, 7].
        let out = iqr_filter(&samples(&[1.0, 2.0, 3.0, 4.0, 1000.0]));
        assert_eq!(out.fences, Some((-1.0, 7.0)));
        assert_eq!(out.removed.len(), 1);
        assert_eq!(out.removed[0].y_ms, 1000.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
    }

    #[test]
    fn degenerate_and_clean_inputs() {
        let flat = samples(&[5.0; 10]);
        assert_eq!(iqr_filter(&flat).kept, flat);
        let clean = samples(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(iqr_filter(&clean).kept, clean);
        let tiny = samples(&[1.0, 1e9]);
        assert_eq!(iqr_filter(&tiny).kept, tiny);
    }

    #[test]
    fn single_pass_is_not_always_idempotent() {
        // Removing 100 tightens the fences enough to expose 10.
        let s = samples(&[1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 10.0, 100.0]);
        let once = iqr_filter(&s).kept;
        let twice = iqr_filter(&once).kept;
        assert_ne!(once, twice);
        let stable = iqr_filter_stable(&s).kept;
        assert_eq!(iqr_filter_stable(&stable).kept, stable);
        assert_eq!(stable, twice);
    }

    #[test]
    fn spearman_on_monotone_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[1.0, 4.0, 9.0, 16.0, 25.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn bins() {
        let s = samples(&[1.0, 3.0, 2.0, 10.0, 20.0]);
        assert_eq!(binned_medians(&s, 3.0), vec![(0.0, 2.0), (3.0, 15.0)]);
    }
}
