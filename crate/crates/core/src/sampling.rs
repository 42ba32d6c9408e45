//! Sample-size planning, reproducible sampling and accuracy estimates.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("sample of {n} requested from a population of {population}")]
    SampleTooLarge { n: usize, population: usize },
}

/// Inverse of the standard normal CDF (Wichura's AS241, PPND16).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability must lie in (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, k| acc * x + k)
}

#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1_971.590_950_306_551_3,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_597,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_545,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_888,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

/// Two-sided standard-normal quantile for a confidence level.
pub fn z_for_confidence(confidence: f64) -> Result<f64, SamplingError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(SamplingError::InvalidParameter {
            name: "confidence",
            value: confidence,
        });
    }
    Ok(normal_quantile(0.5 + confidence / 2.0))
}

/// Infinite-population sample size `ceil(z^2 p (1-p) / E^2)`.
pub fn required_sample_size(confidence: f64, margin: f64, p: f64) -> Result<u64, SamplingError> {
    let z = z_for_confidence(confidence)?;
    if !(margin > 0.0 && margin < 1.0) {
        return Err(SamplingError::InvalidParameter {
            name: "margin",
            value: margin,
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(SamplingError::InvalidParameter { name: "p", value: p });
    }
    Ok((z * z * p * (1.0 - p) / (margin * margin)).ceil() as u64)
}

/// Finite-population correction `ceil(n0 / (1 + (n0 - 1) / N))`, computed in
/// integers as `ceil(n0 N / (N + n0 - 1))`.
pub fn apply_fpc(n0: u64, population: u64) -> u64 {
    assert!(n0 >= 1 && population >= 1, "n0 and N must be positive");
    let num = n0 as u128 * population as u128;
    let den = population as u128 + n0 as u128 - 1;
    num.div_ceil(den) as u64
}

/// Uniform sample of `n` ids without replacement, sorted.
pub fn draw_sample<T: Ord + Clone>(population: &[T], n: usize, seed: u64) -> Result<Vec<T>, SamplingError> {
    if n > population.len() {
        return Err(SamplingError::SampleTooLarge {
            n,
            population: population.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<T> = index::sample(&mut rng, population.len(), n)
        .into_iter()
        .map(|i| population[i].clone())
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    #[default]
    Wald,
    Wilson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub correct: u64,
    pub n: u64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub interval: IntervalKind,
}

/// Observed accuracy with a Wald interval clipped to [0, 1].
pub fn accuracy_estimate(correct: u64, n: u64, confidence: f64) -> Result<AccuracyEstimate, SamplingError> {
    accuracy_estimate_with(correct, n, confidence, IntervalKind::Wald)
}

pub fn accuracy_estimate_with(
    correct: u64,
    n: u64,
    confidence: f64,
    kind: IntervalKind,
) -> Result<AccuracyEstimate, SamplingError> {
    if n == 0 || correct > n {
        return Err(SamplingError::InvalidParameter {
            name: "correct",
            value: correct as f64,
        });
    }
    let z = z_for_confidence(confidence)?;
    let nf = n as f64;
    let p = correct as f64 / nf;
    let (lo, hi) = match kind {
        IntervalKind::Wald => {
            let h = z * (p * (1.0 - p) / nf).sqrt();
            (p - h, p + h)
        }
        IntervalKind::Wilson => {
            let z2 = z * z;
            let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
            let h = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
            (centre - h, centre + h)
        }
    };
    Ok(AccuracyEstimate {
        correct,
        n,
        point: p,
        lower: lo.clamp(0.0, 1.0),
        upper: hi.clamp(0.0, 1.0),
        interval: kind,
    })
}

/// A complete sampling plan, as written to `sampling_plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub confidence: f64,
    pub z: f64,
    pub error_margin: f64,
    pub p: f64,
    pub population: u64,
    pub n0: u64,
    pub n: u64,
    pub seed: u64,
    pub sample_ids: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estimate: Option<AccuracyEstimate>,
}

impl SamplingPlan {
    /// Sizes the sample for `population_ids` and draws it.
    pub fn build(
        confidence: f64,
        margin: f64,
        p: f64,
        population_ids: &[i64],
        seed: u64,
    ) -> Result<Self, SamplingError> {
        let big_n = population_ids.len() as u64;
        if big_n == 0 {
            return Err(SamplingError::InvalidParameter {
                name: "population",
                value: 0.0,
            });
        }
        let n0 = required_sample_size(confidence, margin, p)?;
        let n = apply_fpc(n0, big_n);
        let sample_ids = draw_sample(population_ids, n as usize, seed)?;
        Ok(Self {
            confidence,
            z: z_for_confidence(confidence)?,
            error_margin: margin,
            p,
            population: big_n,
            n0,
            n,
            seed,
            sample_ids,
            estimate: None,
        })
    }

    /// Attaches the accuracy estimate from per-item review outcomes. Outcomes
    /// for ids outside the sample are ignored.
    pub fn record_review(
        &mut self,
        outcomes: &[ReviewOutcome],
        kind: IntervalKind,
    ) -> Result<AccuracyEstimate, SamplingError> {
        let in_sample: Vec<&ReviewOutcome> = outcomes
            .iter()
            .filter(|o| self.sample_ids.binary_search(&o.item_id).is_ok())
            .collect();
        let correct = in_sample.iter().filter(|o| o.correct).count() as u64;
        let est = accuracy_estimate_with(correct, in_sample.len() as u64, self.confidence, kind)?;
        self.estimate = Some(est);
        Ok(est)
    }
}

/// One line of `review_results.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub item_id: i64,
    pub correct: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn quantile_matches_reference() {
        // Reference quantiles from Python's statistics.NormalDist.
        let table = [
            (1e-12, -7.034483825301132),
            (1e-6, -4.753424308822899),
            (0.001, -3.090232306167813),
            (0.025, -1.9599639845400538),
            (0.2, -0.8416212335729142),
            (0.6, 0.2533471031357998),
            (0.975, 1.9599639845400536),
            (0.995, 2.5758293035489),
        ];
        let statrs = Normal::new(0.0, 1.0).unwrap();
        for (p, z) in table {
            let ours = normal_quantile(p);
            assert!((ours - z).abs() < 1e-9, "p={p}");
            assert!((statrs.cdf(ours) - p).abs() < 1e-9, "p={p}");
        }
        assert!((z_for_confidence(0.95).unwrap() - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn sizes() {
        assert_eq!(required_sample_size(0.95, 0.03, 0.5).unwrap(), 1068);
        assert_eq!(required_sample_size(0.95, 0.05, 0.5).unwrap(), 385);
        assert_eq!(required_sample_size(0.95, 0.5, 0.5).unwrap(), 4);
        assert_eq!(apply_fpc(1068, 10962), 974);
        assert_eq!(apply_fpc(100, 100), 51);
        assert_eq!(apply_fpc(1068, u32::MAX as u64 * 1000), 1068);
        assert!(matches!(
            required_sample_size(0.95, 0.03, 0.0),
            Err(SamplingError::InvalidParameter { name: "p", .. })
        ));
        assert!(required_sample_size(0.95, 0.0, 0.5).is_err());
        assert!(required_sample_size(1.0, 0.03, 0.5).is_err());
    }

    #[test]
    fn sampling() {
        let pop: Vec<i64> = (0..10_000).collect();
        let a = draw_sample(&pop, 974, 7).unwrap();
        assert_eq!(a, draw_sample(&pop, 974, 7).unwrap());
        assert_ne!(a, draw_sample(&pop, 974, 8).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(draw_sample(&pop[..5], 5, 1).unwrap(), pop[..5]);
        assert!(matches!(
            draw_sample(&pop[..5], 6, 1),
            Err(SamplingError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn estimates() {
        let e = accuracy_estimate(956, 974, 0.95).unwrap();
        assert_eq!((e.point * 10_000.0).round() / 100.0, 98.15);
        assert!((e.lower - 0.9730).abs() < 1e-4 && (e.upper - 0.9900).abs() < 1e-4);
        let z = accuracy_estimate(0, 10, 0.95).unwrap();
        assert_eq!((z.point, z.lower, z.upper), (0.0, 0.0, 0.0));
        let w = accuracy_estimate_with(0, 10, 0.95, IntervalKind::Wilson).unwrap();
        assert!(w.lower.abs() < 1e-12);
        assert!((w.upper - 0.2775327998628892).abs() < 1e-9);
    }

    #[test]
    fn plan_and_review() {
        let ids: Vec<i64> = (1..=10_962).collect();
        let mut plan = SamplingPlan::build(0.95, 0.03, 0.5, &ids, 42).unwrap();
        assert_eq!((plan.n0, plan.n, plan.sample_ids.len()), (1068, 974, 974));
        let outcomes: Vec<ReviewOutcome> = plan
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| ReviewOutcome {
                item_id: id,
                correct: i >= 18,
            })
            .chain([ReviewOutcome {
                item_id: -1,
                correct: false,
            }])
            .collect();
        let est = plan.record_review(&outcomes, IntervalKind::Wald).unwrap();
        assert_eq!((est.correct, est.n), (956, 974));
    }

    proptest! {
        #[test]
        fn size_monotone(c1 in 0.5f64..0.99, dc in 0.001f64..0.009, e1 in 0.01f64..0.2, de in 0.001f64..0.05, p in 0.01f64..0.99) {
            let base = required_sample_size(c1, e1, p).unwrap();
            prop_assert!(required_sample_size(c1 + dc, e1, p).unwrap() >= base);
            prop_assert!(required_sample_size(c1, e1 + de, p).unwrap() <= base);
            prop_assert!(required_sample_size(c1, e1, 0.5).unwrap() >= base);
        }

        #[test]
        fn fpc_bounded(n0 in 1u64..100_000, big_n in 1u64..100_000) {
            let n = apply_fpc(n0, big_n);
            prop_assert!(n <= n0.min(big_n));
            prop_assert!(n >= 1);
        }

        #[test]
        fn sample_distinct_members(len in 1usize..500, frac in 0.0f64..=1.0, seed: u64) {
            let pop: Vec<i64> = (0..len as i64).map(|i| i * 3).collect();
            let n = (len as f64 * frac) as usize;
            let s = draw_sample(&pop, n, seed).unwrap();
            prop_assert_eq!(s.len(), n);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.iter().all(|x| pop.binary_search(x).is_ok()));
        }

        #[test]
        fn width_shrinks_with_root_n(p in 0.05f64..0.95, n in 10u64..10_000) {
            let w = |n: u64| {
                let c = (p * n as f64).round() as u64;
                let e = accuracy_estimate(c * 4, n * 4, 0.95).unwrap();
                let e1 = accuracy_estimate(c, n, 0.95).unwrap();
                (e.upper - e.lower, e1.upper - e1.lower, e.lower > 0.0 && e.upper < 1.0 && e1.lower > 0.0 && e1.upper < 1.0)
            };
            let (w4, w1, interior) = w(n);
            if interior {
                prop_assert!((w1 / w4 - 2.0).abs() < 1e-9);
            }
        }
    }
}
