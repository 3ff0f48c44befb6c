//! Two-sample chi-squared testing of coarse-grained counts.

use serde::{Deserialize, Serialize};

use crate::coarsegrain::CoarseCounts;
use crate::error::{invalid, Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let s = (std::f64::consts::PI * x).sin();
        return (std::f64::consts::PI / s).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-17;
const GAMMA_MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// Lower regularized incomplete gamma `P(a, x)` by its power series.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..GAMMA_MAX_ITER {
        term *= x / (a + n as f64);
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Upper regularized incomplete gamma `Q(a, x)` by Lentz's continued fraction.
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper regularized incomplete gamma `Q(a, x) = Gamma(a, x) / Gamma(a)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Lower regularized incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

/// Upper-tail probability of the chi-squared law, `Q(df/2, x/2)`.
///
/// Values below the smallest positive double underflow to 0; see
/// [`TestReport::p_underflow`].
pub fn chi2_sf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(invalid("chi-squared degrees of freedom must be positive"));
    }
    if !(x >= 0.0) {
        return Err(invalid(format!("chi-squared statistic must be nonnegative, got {x}")));
    }
    Ok(chi2_sf_real(x, f64::from(df)))
}

/// [`chi2_sf`] for a real-valued number of degrees of freedom.
pub fn chi2_sf_real(x: f64, df: f64) -> f64 {
    gamma_q(0.5 * df, 0.5 * x).clamp(0.0, 1.0)
}

pub fn chi2_cdf_real(x: f64, df: f64) -> f64 {
    gamma_p(0.5 * df, 0.5 * x).clamp(0.0, 1.0)
}

/// Chi-squared density.
pub fn chi2_pdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return if df == 2.0 { 0.5 } else { 0.0 };
    }
    let k = 0.5 * df;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Statistic `c` with `chi2_sf(c, df) = alpha`, found by bisection.
pub fn chi2_cutoff(alpha: f64, df: u32) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut hi = f64::from(df.max(1));
    while chi2_sf(hi, df)? > alpha {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_sf(mid, df)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Value and degrees of freedom of a two-sample chi-squared statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chi2Stat {
    pub chi2: f64,
    pub df: u32,
}

/// Two-sample chi-squared statistic over the bins of a shared partition:
///
/// `sum_b (sqrt(N2/N1) O1_b - sqrt(N1/N2) O2_b)^2 / (O1_b + O2_b)`
///
/// Bins empty in both samples contribute nothing but still count towards
/// `df = N_B - 1`.
pub fn chi2_two_sample(c1: &CoarseCounts, c2: &CoarseCounts) -> Result<Chi2Stat> {
    if c1.partition_id() != c2.partition_id() || c1.len() != c2.len() {
        return Err(Error::PartitionMismatch);
    }
    let (n1, n2) = (c1.total(), c2.total());
    if n1 == 0 || n2 == 0 {
        return Err(invalid("both samples must be nonempty"));
    }
    if c1.len() < 2 {
        return Err(invalid("a chi-squared test needs at least two bins"));
    }
    let k1 = (n2 as f64 / n1 as f64).sqrt();
    let k2 = (n1 as f64 / n2 as f64).sqrt();
    let chi2 = c1
        .masses()
        .iter()
        .zip(c2.masses())
        .filter(|(&a, &b)| a + b > 0)
        .map(|(&a, &b)| {
            let diff = k1 * a as f64 - k2 * b as f64;
            diff * diff / (a + b) as f64
        })
        .sum();
    Ok(Chi2Stat {
        chi2,
        df: (c1.len() - 1) as u32,
    })
}

/// Outcome of one certification comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub chi2: f64,
    pub df: u32,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
    pub n_b: usize,
    pub sample1: String,
    pub sample2: String,
    /// The true p-value is below the smallest positive double and `p_value` reads 0.
    #[serde(default)]
    pub p_underflow: bool,
}

/// Pass iff the p-value strictly exceeds `alpha`.
pub fn verdict(chi2: f64, df: u32, alpha: f64) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let p = chi2_sf(chi2, df)?;
    let underflow = p < f64::MIN_POSITIVE;
    let p_value = if underflow { 0.0 } else { p };
    Ok(TestReport {
        chi2,
        df,
        p_value,
        alpha,
        pass: p_value > alpha,
        n_b: df as usize + 1,
        sample1: String::new(),
        sample2: String::new(),
        p_underflow: underflow,
    })
}

/// Runs the two-sample test and attaches sample identifiers.
pub fn certify(
    c1: &CoarseCounts,
    c2: &CoarseCounts,
    alpha: f64,
    sample1: impl Into<String>,
    sample2: impl Into<String>,
) -> Result<TestReport> {
    let stat = chi2_two_sample(c1, c2)?;
    let mut report = verdict(stat.chi2, stat.df, alpha)?;
    report.sample1 = sample1.into();
    report.sample2 = sample2.into();
    Ok(report)
}

/// Pass rate and p-value moments over many comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub runs: usize,
    /// Percentage of passing comparisons.
    pub pass_rate: f64,
    pub p_mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub p_std: f64,
}

pub fn campaign_summary(reports: &[TestReport]) -> Result<CampaignSummary> {
    if reports.is_empty() {
        return Err(invalid("cannot summarize an empty campaign"));
    }
    let passes = reports.iter().filter(|r| r.pass).count() as f64;
    let (mean, std) = mean_std(reports.iter().map(|r| r.p_value));
    Ok(CampaignSummary {
        runs: reports.len(),
        pass_rate: 100.0 * passes / reports.len() as f64,
        p_mean: mean,
        p_std: std,
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic `d` from `n` samples, with the
/// Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarsegrain::CoarseDistribution;

    fn counts(v: &[u64]) -> CoarseCounts {
        CoarseDistribution::new(1, v.to_vec())
    }

    /// Chi-squared tail by composite Gauss-Legendre quadrature, independent
    /// of the incomplete-gamma code: with `t = s^2` the unnormalized density
    /// becomes `2 s^(df-1) exp(-s^2/2)`, smooth on `[0, inf)`, and the tail
    /// is the ratio of its integral over `[sqrt(x), inf)` to the full one.
    fn sf_by_quadrature(x: f64, df: f64) -> f64 {
        const NODES: [f64; 4] = [
            0.183_434_642_495_649_8,
            0.525_532_409_916_329,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        const WEIGHTS: [f64; 4] = [
            0.362_683_783_378_362,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_5,
            0.101_228_536_290_376_3,
        ];
        // log-scaled integrand keeps large df finite
        let peak = (df - 1.0).max(0.0).sqrt();
        let log_at = |s: f64| (df - 1.0) * s.ln() - 0.5 * s * s;
        let log_peak = if peak > 0.0 { log_at(peak) } else { 0.0 };
        let f = |s: f64| {
            if s <= 0.0 {
                if df == 1.0 { 2.0 * (-log_peak).exp() } else { 0.0 }
            } else {
                2.0 * (log_at(s) - log_peak).exp()
            }
        };
        let integrate = |a: f64, b: f64| {
            let panels = 20_000;
            let h = (b - a) / panels as f64;
            let mut total = 0.0;
            for p in 0..panels {
                let mid = a + (p as f64 + 0.5) * h;
                for (&t, &w) in NODES.iter().zip(&WEIGHTS) {
                    total += w * (f(mid + 0.5 * h * t) + f(mid - 0.5 * h * t));
                }
            }
            total * 0.5 * h
        };
        let top = peak + 40.0;
        let tail = integrate(x.sqrt(), top);
        let full = integrate(0.0, x.sqrt()) + tail;
        tail / full
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        let fact10: f64 = (1..=10).map(f64::from).product();
        assert!((ln_gamma(11.0) - fact10.ln()).abs() < 1e-12);
    }

    #[test]
    fn sf_closed_forms() {
        assert_eq!(chi2_sf(0.0, 5).unwrap(), 1.0);
        let p = chi2_sf(2.0 * std::f64::consts::LN_2, 2).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
        for x in [0.1, 1.0, 3.0, 10.0, 40.0] {
            assert!((chi2_sf(x, 2).unwrap() - (-x / 2.0).exp()).abs() < 1e-14);
        }
        assert!(chi2_sf(1.0, 0).is_err());
        assert!(chi2_sf(-1.0, 3).is_err());
    }

    #[test]
    fn sf_matches_high_precision_reference() {
        // Q(19.5, 31.215) from a 50-digit evaluation
        let reference = 0.009_995_837_687_157_065;
        let p = chi2_sf(62.43, 39).unwrap();
        assert!((p - reference).abs() < 1e-12, "{p}");
        let quad = sf_by_quadrature(62.43, 39.0);
        assert!((p - quad).abs() < 1e-10, "{p} vs {quad}");
    }

    #[test]
    fn sf_matches_quadrature_across_range() {
        for df in [1u32, 3, 10, 25, 39, 69] {
            for x in [0.5, 5.0, 20.0, 45.0, 90.0] {
                let p = chi2_sf(x, df).unwrap();
                let q = sf_by_quadrature(x, f64::from(df));
                assert!((p - q).abs() < 1e-10, "df={df} x={x}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn sf_is_monotone_and_bounded() {
        let mut last = 1.0;
        for i in 1..400 {
            let p = chi2_sf(i as f64 * 0.5, 39).unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert!(p <= last);
            if last < 1.0 - 1e-12 && p > 1e-300 {
                assert!(p < last);
            }
            last = p;
        }
    }

    #[test]
    fn sf_underflows_to_zero() {
        let report = verdict(1e5, 39, 0.01).unwrap();
        assert_eq!(report.p_value, 0.0);
        assert!(report.p_underflow);
        assert!(!report.pass);
    }

    #[test]
    fn cutoff_at_one_percent() {
        // scipy.stats.chi2.isf(0.01, 40)
        let c = chi2_cutoff(0.01, 40).unwrap();
        assert!((c - 63.690_739_751_564_46).abs() < 1e-8, "{c}");
        assert!((chi2_sf(c, 40).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn two_sample_examples() {
        let a = counts(&[5, 7, 0, 3]);
        let s = chi2_two_sample(&a, &a).unwrap();
        assert_eq!(s.chi2, 0.0);
        assert_eq!(s.df, 3);
        let s = chi2_two_sample(&counts(&[10, 0]), &counts(&[0, 10])).unwrap();
        assert_eq!(s.chi2, 20.0);
        assert_eq!(s.df, 1);
        let other = CoarseDistribution::new(2, vec![1u64, 2]);
        assert!(matches!(
            chi2_two_sample(&counts(&[1, 2]), &other),
            Err(Error::PartitionMismatch)
        ));
        assert!(chi2_two_sample(&counts(&[0, 0]), &counts(&[1, 1])).is_err());
    }

    #[test]
    fn unequal_totals_reduce_correctly() {
        // doubling one sample leaves a perfectly proportional pair at zero
        let s = chi2_two_sample(&counts(&[4, 6, 10]), &counts(&[8, 12, 20])).unwrap();
        assert!(s.chi2.abs() < 1e-12);
        let x = counts(&[3, 9, 1]);
        let y = counts(&[6, 2, 5]);
        assert_eq!(
            chi2_two_sample(&x, &y).unwrap().chi2,
            chi2_two_sample(&y, &x).unwrap().chi2
        );
    }

    #[test]
    fn verdict_boundaries() {
        assert!(verdict(0.0, 10, 0.99).unwrap().pass);
        // p exactly alpha fails
        let x = 2.0 * 2.0f64.ln();
        let p = chi2_sf(x, 2).unwrap();
        assert!(!verdict(x, 2, p).unwrap().pass);
        assert!(verdict(1.0, 2, 0.0).is_err());
        assert!(verdict(1.0, 2, 1.0).is_err());
    }

    #[test]
    fn summary() {
        let mk = |p: f64| verdict(0.0, 3, 0.01).map(|mut r| {
            r.p_value = p;
            r.pass = p > 0.01;
            r
        }).unwrap();
        let all: Vec<_> = [0.2, 0.5, 0.9].iter().map(|&p| mk(p)).collect();
        let s = campaign_summary(&all).unwrap();
        assert_eq!(s.pass_rate, 100.0);
        assert!((s.p_mean - 0.533_333_333_333_333_3).abs() < 1e-12);
        assert!(campaign_summary(&[]).is_err());
        let mixed = vec![mk(0.001), mk(0.5)];
        assert_eq!(campaign_summary(&mixed).unwrap().pass_rate, 50.0);
    }

    #[test]
    fn ks_detects_and_accepts() {
        let uniform: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&uniform, |x| x);
        assert!(d <= 0.0005 + 1e-12);
        assert!(ks_p_value(d, 1000) > 0.99);
        let skewed: Vec<f64> = uniform.iter().map(|x| x * x).collect();
        let d = ks_statistic(&skewed, |x| x);
        assert!(ks_p_value(d, 1000) < 1e-6);
    }
}
