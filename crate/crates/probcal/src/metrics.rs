//! Calibration metrics and scoring rules.
//!
//! Two families live here. The cumulative metrics (ECCE-MAD and ECCE-R) are
//! built from the cumulative-difference curve and need no tuning parameter.
//! The binned metrics (ECE¹ and ECE²) depend on a [`BinningSpec`] and are the
//! ones whose rankings can move when the bin count changes; see the `synth`
//! module for a frozen demonstration. Brier score and logarithmic loss round
//! out the report as strictly proper scoring rules.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{CumulativeCurve, PredictionSet};
use crate::util::{ln1pexp, KahanSum};

/// How the unit interval is carved into bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinningScheme {
    /// `B` bins of width `1/B`; bin `b` covers `[b/B, (b+1)/B)`, the last bin
    /// closed at 1.
    EqualWidth,
    /// Bin edges at empirical score quantiles. Observations tied with an edge
    /// fall in the lower bin; duplicate edges are merged, so the effective
    /// number of bins may shrink under heavy score ties.
    EqualFrequency,
}

impl BinningScheme {
    fn as_str(self) -> &'static str {
        match self {
            BinningScheme::EqualWidth => "equal_width",
            BinningScheme::EqualFrequency => "equal_frequency",
        }
    }
}

/// A binning scheme together with its bin count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinningSpec {
    scheme: BinningScheme,
    bins: u32,
}

impl BinningSpec {
    /// Panics if `bins` is zero.
    pub fn new(scheme: BinningScheme, bins: u32) -> Self {
        assert!(bins >= 1, "bin count must be at least 1");
        Self { scheme, bins }
    }

    pub fn equal_width(bins: u32) -> Self {
        Self::new(BinningScheme::EqualWidth, bins)
    }

    pub fn equal_frequency(bins: u32) -> Self {
        Self::new(BinningScheme::EqualFrequency, bins)
    }

    pub fn scheme(&self) -> BinningScheme {
        self.scheme
    }

    pub fn bins(&self) -> u32 {
        self.bins
    }
}

impl fmt::Display for BinningSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.scheme.as_str(), self.bins)
    }
}

impl FromStr for BinningSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (scheme, bins) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `scheme:bins`, got `{s}`"))?;
        let scheme = match scheme {
            "equal_width" => BinningScheme::EqualWidth,
            "equal_frequency" => BinningScheme::EqualFrequency,
            other => return Err(format!("unknown binning scheme `{other}`")),
        };
        let bins: u32 = bins
            .parse()
            .map_err(|_| format!("invalid bin count `{bins}`"))?;
        if bins == 0 {
            return Err("bin count must be at least 1".to_string());
        }
        Ok(BinningSpec::new(scheme, bins))
    }
}

// String form so BinningSpec can key JSON maps.
impl Serialize for BinningSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BinningSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Norm applied to per-bin gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

/// Weight given to each nonempty bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// `n_b / n`: bins weighted by how many observations they hold.
    BinCount,
    /// Bin width over the total width of nonempty bins.
    BinWidth,
}

/// Maximum absolute deviation of the cumulative calibration error:
/// `max_{1<=k<=n} |C_k|`.
pub fn ecce_mad(curve: &CumulativeCurve) -> f64 {
    curve.values()[1..]
        .iter()
        .fold(0.0, |acc, &c| acc.max(c.abs()))
}

/// Range of the cumulative calibration error:
/// `max_{0<=k<=n} C_k - min_{0<=k<=n} C_k`, with `C_0 = 0` participating in
/// both extrema.
pub fn ecce_r(curve: &CumulativeCurve) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for &c in curve.values() {
        max = max.max(c);
        min = min.min(c);
    }
    max - min
}

/// Independent interval formulation of [`ecce_r`]: the maximum over all
/// contiguous index intervals of `|sum_{j in I} (s_j - y_j)| / n`, by
/// exhaustive O(n²) enumeration.
///
/// This exists as a second algebraic route for cross-checking `ecce_r`; the
/// two must agree to within 1e-12. Sorts internally when handed an unsorted
/// set.
pub fn ecce_r_interval_oracle(ps: &PredictionSet) -> f64 {
    let sorted;
    let ps = if ps.is_canonical() {
        ps
    } else {
        sorted = ps.canonical_sort();
        &sorted
    };
    let diffs: Vec<f64> = ps
        .scores()
        .iter()
        .zip(ps.labels())
        .map(|(&s, &y)| s - f64::from(y))
        .collect();
    let mut best = 0.0f64;
    for i in 0..diffs.len() {
        let mut run = 0.0;
        for &d in &diffs[i..] {
            run += d;
            best = best.max(run.abs());
        }
    }
    best / diffs.len() as f64
}

/// Binned calibration error under the given spec, norm, and weighting.
///
/// With per-bin mean label `ȳ_b`, mean score `s̄_b`, and count `n_b`:
/// L1/BinCount is `Σ_b (n_b/n) |ȳ_b − s̄_b|` and L2/BinCount is the square
/// root of the count-weighted mean of squared gaps. Empty bins contribute
/// nothing; BinWidth weights renormalize over the nonempty bins.
pub fn ece(ps: &PredictionSet, spec: BinningSpec, norm: Norm, weighting: Weighting) -> f64 {
    let bins = assign_bins(ps.scores(), spec);
    let b = bins.edges.len() - 1;
    let mut count = vec![0usize; b];
    let mut sum_scores = vec![0.0f64; b];
    let mut sum_labels = vec![0.0f64; b];
    for ((&s, &y), &idx) in ps.scores().iter().zip(ps.labels()).zip(&bins.index) {
        count[idx] += 1;
        sum_scores[idx] += s;
        sum_labels[idx] += f64::from(y);
    }

    let n = ps.len() as f64;
    let weights: Vec<f64> = match weighting {
        Weighting::BinCount => count.iter().map(|&c| c as f64 / n).collect(),
        Weighting::BinWidth => {
            let widths: Vec<f64> = (0..b)
                .map(|i| {
                    if count[i] == 0 {
                        0.0
                    } else {
                        bins.edges[i + 1] - bins.edges[i]
                    }
                })
                .collect();
            let total: f64 = widths.iter().sum();
            if total > 0.0 {
                widths.iter().map(|&w| w / total).collect()
            } else {
                // All mass sits in zero-width bins (e.g. a constant score
                // column); fall back to count weights.
                count.iter().map(|&c| c as f64 / n).collect()
            }
        }
    };

    let mut acc = KahanSum::new();
    for i in 0..b {
        if count[i] == 0 {
            continue;
        }
        let gap = (sum_labels[i] - sum_scores[i]) / count[i] as f64;
        match norm {
            Norm::L1 => acc.add(weights[i] * gap.abs()),
            Norm::L2 => acc.add(weights[i] * gap * gap),
        }
    }
    match norm {
        Norm::L1 => acc.value(),
        Norm::L2 => acc.value().sqrt(),
    }
}

struct BinAssignment {
    /// Bin edges including 0 and 1; bin `i` spans `edges[i]..edges[i+1]`.
    edges: Vec<f64>,
    /// Bin index per observation.
    index: Vec<usize>,
}

fn assign_bins(scores: &[f64], spec: BinningSpec) -> BinAssignment {
    match spec.scheme {
        BinningScheme::EqualWidth => {
            let b = spec.bins as usize;
            let edges: Vec<f64> = (0..=b).map(|k| k as f64 / b as f64).collect();
            let interior = &edges[1..b];
            let index = scores
                .iter()
                .map(|&s| interior.partition_point(|&e| e <= s))
                .collect();
            BinAssignment { edges, index }
        }
        BinningScheme::EqualFrequency => {
            let n = scores.len();
            let b = spec.bins as usize;
            let mut sorted = scores.to_vec();
            sorted.sort_unstable_by(f64::total_cmp);
            // Interior edges at the empirical quantiles k/B (lower-bin ties),
            // deduplicated so no bin is an empty slice of the score axis.
            let mut interior: Vec<f64> = Vec::with_capacity(b.saturating_sub(1));
            for k in 1..b {
                let rank = (k * n).div_ceil(b);
                let edge = sorted[rank - 1];
                if interior.last() != Some(&edge) {
                    interior.push(edge);
                }
            }
            let index = scores
                .iter()
                .map(|&s| interior.partition_point(|&e| e < s))
                .collect();
            let mut edges = Vec::with_capacity(interior.len() + 2);
            edges.push(0.0);
            edges.extend(&interior);
            edges.push(1.0);
            BinAssignment { edges, index }
        }
    }
}

/// Mean squared error of the forecasts: `(1/n) Σ (s_k − y_k)²`.
pub fn brier_score(ps: &PredictionSet) -> f64 {
    let mut acc = KahanSum::new();
    for (&s, &y) in ps.scores().iter().zip(ps.labels()) {
        let d = s - f64::from(y);
        acc.add(d * d);
    }
    acc.value() / ps.len() as f64
}

/// Mean negative log-likelihood of the outcomes under the forecasts, in
/// nats. Returns `+inf` exactly when some observation puts probability zero
/// on the outcome that occurred.
pub fn log_loss(ps: &PredictionSet) -> f64 {
    let mut acc = KahanSum::new();
    for (&s, &y) in ps.scores().iter().zip(ps.labels()) {
        let p = if y == 1 { s } else { 1.0 - s };
        if p <= 0.0 {
            return f64::INFINITY;
        }
        acc.add(-p.ln());
    }
    acc.value() / ps.len() as f64
}

/// All metrics for one evaluation of a prediction set.
///
/// The binned entries use the conventional count weighting: `ece1` is the
/// L1/BinCount error and `ece2` the L2/BinCount (root-mean-square) error per
/// binning. Finer control over weighting is available through [`ece`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ecce_mad: f64,
    pub ecce_r: f64,
    pub ece1: BTreeMap<BinningSpec, f64>,
    pub ece2: BTreeMap<BinningSpec, f64>,
    pub brier: f64,
    #[serde(with = "crate::util::inf_float")]
    pub log_loss: f64,
    pub n: usize,
}

impl MetricReport {
    /// Computes every metric, sorting canonically first when needed.
    pub fn compute(ps: &PredictionSet, binnings: &[BinningSpec]) -> MetricReport {
        let sorted;
        let ps = if ps.is_canonical() {
            ps
        } else {
            sorted = ps.canonical_sort();
            &sorted
        };
        let curve = ps.cumulative_curve().expect("sorted by construction");
        let mut ece1 = BTreeMap::new();
        let mut ece2 = BTreeMap::new();
        for &spec in binnings {
            ece1.insert(spec, ece(ps, spec, Norm::L1, Weighting::BinCount));
            ece2.insert(spec, ece(ps, spec, Norm::L2, Weighting::BinCount));
        }
        MetricReport {
            ecce_mad: ecce_mad(&curve),
            ecce_r: ecce_r(&curve),
            ece1,
            ece2,
            brier: brier_score(ps),
            log_loss: log_loss(ps),
            n: ps.len(),
        }
    }
}

/// Mean Brier score of the constant forecast `q` against `n1` positive
/// outcomes out of `n`. Exact aggregation of the per-draw terms.
pub fn mean_brier_of_constant(q: f64, n1: usize, n: usize) -> f64 {
    let n1 = n1 as f64;
    let n0 = n as f64 - n1;
    (n0 * q * q + n1 * (1.0 - q) * (1.0 - q)) / n as f64
}

/// Mean logarithmic score of the constant forecast `q`, as above.
pub fn mean_log_of_constant(q: f64, n1: usize, n: usize) -> f64 {
    let n1 = n1 as f64;
    let n0 = n as f64 - n1;
    let z = crate::util::logit(q);
    // -[y ln q + (1-y) ln(1-q)] = ln(1+e^z) - y z
    (n0 * ln1pexp(z) + n1 * (ln1pexp(z) - z)) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PredictionSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ps(scores: &[f64], labels: &[u8]) -> PredictionSet {
        PredictionSet::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    fn worked_example() -> PredictionSet {
        ps(&[0.1, 0.4, 0.6, 0.9], &[0, 1, 0, 1])
    }

    #[test]
    fn ecce_mad_examples() {
        let curve = worked_example().cumulative_curve().unwrap();
        assert!((ecce_mad(&curve) - 0.125).abs() <= 1e-15);

        let zero = ps(&[0.0, 1.0], &[0, 1]).cumulative_curve().unwrap();
        assert_eq!(ecce_mad(&zero), 0.0);

        let single = ps(&[0.5], &[1]).cumulative_curve().unwrap();
        assert_eq!(ecce_mad(&single), 0.5);
    }

    #[test]
    fn ecce_r_examples() {
        let curve = worked_example().cumulative_curve().unwrap();
        assert!((ecce_r(&curve) - 0.15).abs() <= 1e-15);

        let zero = ps(&[0.0, 1.0], &[0, 1]).cumulative_curve().unwrap();
        assert_eq!(ecce_r(&zero), 0.0);

        // C_0 = 0 participates: a single positive step gives range 0.5.
        let single = ps(&[0.5], &[1]).cumulative_curve().unwrap();
        assert_eq!(ecce_r(&single), 0.5);
    }

    #[test]
    fn interval_oracle_examples() {
        assert!((ecce_r_interval_oracle(&worked_example()) - 0.15).abs() <= 1e-15);
        assert_eq!(ecce_r_interval_oracle(&ps(&[0.0, 1.0], &[0, 1])), 0.0);
        assert_eq!(ecce_r_interval_oracle(&ps(&[0.5], &[1])), 0.5);
    }

    fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> PredictionSet {
        let n = rng.random_range(1..=max_n);
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
        PredictionSet::new(scores, labels).unwrap()
    }

    #[test]
    fn ecce_r_agrees_with_interval_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 200);
            let sorted = inst.canonical_sort();
            let via_curve = ecce_r(&sorted.cumulative_curve().unwrap());
            let via_oracle = ecce_r_interval_oracle(&sorted);
            assert!(
                (via_curve - via_oracle).abs() < 1e-12,
                "curve {via_curve} vs oracle {via_oracle}"
            );
        }
    }

    #[test]
    fn mad_and_range_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 300).canonical_sort();
            let curve = inst.cumulative_curve().unwrap();
            let mad = ecce_mad(&curve);
            let r = ecce_r(&curve);
            assert!(mad <= r + 1e-15);
            assert!(r <= 2.0 * mad + 1e-15);
        }
    }

    #[test]
    fn ece_hand_example() {
        let inst = ps(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        let spec = BinningSpec::equal_width(2);
        let got = ece(&inst, spec, Norm::L1, Weighting::BinCount);
        assert!((got - 0.15).abs() <= 1e-15, "got {got}");
    }

    #[test]
    fn ece_exact_forecasts_zero_for_every_spec() {
        let inst = ps(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1]);
        for bins in 1..=30 {
            for scheme in [BinningScheme::EqualWidth, BinningScheme::EqualFrequency] {
                for norm in [Norm::L1, Norm::L2] {
                    for w in [Weighting::BinCount, Weighting::BinWidth] {
                        let v = ece(&inst, BinningSpec::new(scheme, bins), norm, w);
                        assert!(v.abs() <= 1e-15, "{scheme:?} {bins} {norm:?} {w:?}: {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn ece_single_bin_is_mean_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 100);
            let expected = (inst.label_mean() - inst.score_mean()).abs();
            for scheme in [BinningScheme::EqualWidth, BinningScheme::EqualFrequency] {
                let got = ece(
                    &inst,
                    BinningSpec::new(scheme, 1),
                    Norm::L1,
                    Weighting::BinCount,
                );
                assert!((got - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ece_equal_width_boundary_membership() {
        // Scores exactly on an interior edge belong to the upper bin; 1.0
        // stays in the last bin.
        let inst = ps(&[0.5, 1.0], &[1, 1]);
        let got = ece(&inst, BinningSpec::equal_width(2), Norm::L1, Weighting::BinCount);
        // Both land in bin [0.5, 1]: gap |1 - 0.75| = 0.25.
        assert!((got - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn ece_equal_frequency_balances_counts() {
        // Distinct scores: every nonempty bin holds floor(n/B)..ceil(n/B).
        let n = 17;
        let scores: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let labels = vec![0u8; n];
        let inst = PredictionSet::new(scores.clone(), labels).unwrap();
        for b in [2u32, 3, 5, 7] {
            let bins = assign_bins(inst.scores(), BinningSpec::equal_frequency(b));
            let mut counts = vec![0usize; bins.edges.len() - 1];
            for &i in &bins.index {
                counts[i] += 1;
            }
            let lo = n / b as usize;
            let hi = n.div_ceil(b as usize);
            for &c in counts.iter().filter(|&&c| c > 0) {
                assert!(c >= lo && c <= hi, "B={b}: count {c} outside [{lo},{hi}]");
            }
        }
    }

    #[test]
    fn ece_equal_frequency_merges_tied_edges() {
        // Heavy ties: most quantile edges coincide; ECE must stay finite and
        // the tied run must land in a single bin.
        let inst = ps(&[0.5; 9], &[0, 0, 0, 0, 0, 1, 1, 1, 1]);
        let got = ece(
            &inst,
            BinningSpec::equal_frequency(4),
            Norm::L1,
            Weighting::BinCount,
        );
        let expected = (4.0 / 9.0f64 - 0.5).abs();
        assert!((got - expected).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn ece_bin_width_weighting_renormalizes() {
        // Two populated equal-width bins out of four: each gets weight 1/2
        // under width weighting regardless of counts.
        let inst = ps(&[0.1, 0.1, 0.1, 0.9], &[1, 1, 1, 0]);
        let got = ece(
            &inst,
            BinningSpec::equal_width(4),
            Norm::L1,
            Weighting::BinWidth,
        );
        let expected = 0.5 * (1.0 - 0.1) + 0.5 * (0.9 - 0.0);
        assert!((got - expected).abs() <= 1e-15, "got {got}");
    }

    #[test]
    fn brier_examples() {
        assert!((brier_score(&ps(&[0.5], &[1])) - 0.25).abs() <= 1e-15);
        assert_eq!(brier_score(&ps(&[0.0, 1.0], &[0, 1])), 0.0);
        assert!((brier_score(&worked_example()) - 0.185).abs() <= 1e-15);
    }

    #[test]
    fn log_loss_examples() {
        let uniform = ps(&[0.5, 0.5], &[0, 1]);
        assert!((log_loss(&uniform) - std::f64::consts::LN_2).abs() < 1e-12);

        assert_eq!(log_loss(&ps(&[0.0], &[1])), f64::INFINITY);
        assert_eq!(log_loss(&ps(&[1.0], &[0])), f64::INFINITY);
        // Probability zero on the event that did not occur costs nothing.
        assert_eq!(log_loss(&ps(&[0.0, 1.0], &[0, 1])), 0.0);

        let single = ps(&[0.9], &[1]);
        assert!((log_loss(&single) - 0.10536051565782628).abs() < 1e-15);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let inst = random_instance(&mut rng, 150);
        let binnings = [BinningSpec::equal_width(10), BinningSpec::equal_frequency(7)];
        let report = MetricReport::compute(&inst, &binnings);

        // Reverse the observations and recompute.
        let scores: Vec<f64> = inst.scores().iter().rev().copied().collect();
        let labels: Vec<u8> = inst.labels().iter().rev().copied().collect();
        let reversed = PredictionSet::new(scores, labels).unwrap();
        let report_rev = MetricReport::compute(&reversed, &binnings);

        assert!((report.ecce_mad - report_rev.ecce_mad).abs() < 1e-15);
        assert!((report.ecce_r - report_rev.ecce_r).abs() < 1e-15);
        assert!((report.brier - report_rev.brier).abs() < 1e-15);
        for (a, b) in report.ece1.values().zip(report_rev.ece1.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn report_serializes_infinity_as_string() {
        let report = MetricReport::compute(&ps(&[0.0], &[1]), &[BinningSpec::equal_width(10)]);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"log_loss\":\"inf\""), "{json}");
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.log_loss, f64::INFINITY);
    }

    #[test]
    fn binning_spec_round_trips_as_text() {
        for spec in [BinningSpec::equal_width(10), BinningSpec::equal_frequency(25)] {
            let s = spec.to_string();
            let back: BinningSpec = s.parse().unwrap();
            assert_eq!(spec, back);
        }
        assert!("equal_width:0".parse::<BinningSpec>().is_err());
        assert!("nope:5".parse::<BinningSpec>().is_err());
    }
}
