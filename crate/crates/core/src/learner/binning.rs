//! Per-feature histogram bins.
//!
//! Cut points are placed between consecutive distinct training values. With at
//! most `max_bins` distinct values every value gets its own bin, so histogram
//! splits coincide with exhaustive threshold search.

use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBins {
    /// Ascending cut points; `bin(x) = #{c <= x}`.
    pub cuts: Vec<f64>,
}

impl FeatureBins {
    pub fn fit(values: &[f64], max_bins: usize) -> FeatureBins {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for &v in &sorted {
            match distinct.last_mut() {
                Some((last, count)) if *last == v => *count += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let mut cuts = Vec::new();
        if distinct.len() <= max_bins {
            for w in distinct.windows(2) {
                cuts.push(midpoint(w[0].0, w[1].0));
            }
        } else {
            let per_bin = sorted.len() as f64 / max_bins as f64;
            let mut seen = 0usize;
            let mut next_edge = per_bin;
            for w in distinct.windows(2) {
                seen += w[0].1;
                if seen as f64 >= next_edge && cuts.len() + 1 < max_bins {
                    cuts.push(midpoint(w[0].0, w[1].0));
                    while next_edge <= seen as f64 {
                        next_edge += per_bin;
                    }
                }
            }
        }
        FeatureBins { cuts }
    }

    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin(&self, x: f64) -> u16 {
        self.cuts.partition_point(|&c| c <= x) as u16
    }

    /// Raw-value threshold equivalent to "bin <= b goes left": `x < threshold`.
    pub fn threshold(&self, b: u16) -> f64 {
        self.cuts[b as usize]
    }
}

/// A value `m` with `a < m <= b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + 0.5 * (b - a);
    if m > a && m <= b {
        m
    } else {
        b
    }
}

/// Column-major binned copy of a feature matrix.
pub fn bin_matrix(x: &Matrix, bins: &[FeatureBins]) -> Vec<Vec<u16>> {
    (0..x.n_cols())
        .map(|j| (0..x.n_rows()).map(|i| bins[j].bin(x.get(i, j))).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_values_get_own_bins() {
        let b = FeatureBins::fit(&[3.0, 1.0, 2.0, 2.0], 8);
        assert_eq!(b.cuts, vec![1.5, 2.5]);
        assert_eq!((b.bin(1.0), b.bin(2.0), b.bin(3.0)), (0, 1, 2));
        assert!(1.0 < b.threshold(0) && 2.0 >= b.threshold(0));
    }

    #[test]
    fn respects_bin_budget() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let b = FeatureBins::fit(&xs, 16);
        assert!(b.n_bins() <= 16);
        assert!(b.n_bins() >= 14);
    }

    #[test]
    fn adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let bins = FeatureBins::fit(&[a, b], 4);
        assert_eq!((bins.bin(a), bins.bin(b)), (0, 1));
    }
}
