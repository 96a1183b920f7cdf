//! Statistical primitives shared by the analysis modules: exact binomial and
//! Beta-Binomial tails, Pearson correlation with Fisher-transform intervals,
//! binned aggregation, and a few clustering/regression helpers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::scalar::compensated_sum;
use crate::{Error, Real, Result};

/// Upper tail `P(Y >= k)` of a discrete distribution on `0..=n`, given the
/// successive pmf ratios `pmf(y + 1) / pmf(y)` for `y < n`.
///
/// The pmf is reconstructed up to a constant by multiplying ratios outward
/// from its maximum and normalized by the total mass, so the absolute error
/// stays near machine precision and small tails keep their relative
/// accuracy until they underflow.
///
/// For a log-concave pmf (non-increasing ratios) the mode is found by
/// bisection and terms are only generated while they matter: below `CUT`
/// times the modal term for the normalizer, and below `CUT` times the
/// first tail term for the tail itself. Otherwise every term is built.
fn tail_from_ratios<T: Real>(k: u64, n: u64, log_concave: bool, ratio: impl Fn(u64) -> T) -> T {
    if k == 0 {
        return T::one();
    }
    if k > n {
        return T::zero();
    }
    let (w, bottom) = if log_concave {
        concave_weights(k, n, &ratio)
    } else {
        (all_weights(n, &ratio), 0)
    };
    let top = bottom + w.len() as u64 - 1;
    if k <= bottom {
        return T::one();
    }
    if k > top {
        return T::zero();
    }
    let split = (k - bottom) as usize;
    // Accumulate from the outside in so the smallest terms go first.
    let upper = compensated_sum(w[split..].iter().rev().copied());
    let lower = compensated_sum(w[..split].iter().copied());
    let t = upper / (upper + lower);
    if t > T::one() {
        T::one()
    } else {
        t
    }
}

const CUT: f64 = 1e-40;

/// Relative weights on `bottom..=bottom + len - 1`, always covering `k`.
fn concave_weights<T: Real>(k: u64, n: u64, ratio: &impl Fn(u64) -> T) -> (Vec<T>, u64) {
    let (mut lo, mut hi) = (0u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ratio(mid) > T::one() {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let mode = lo;
    let cut = T::c(CUT);

    let mut down = Vec::new();
    let mut w = T::one();
    let mut y = mode;
    while y > 0 {
        w = w / ratio(y - 1);
        if w < cut && y - 1 < k {
            break;
        }
        down.push(w);
        y -= 1;
    }
    let bottom = y;

    let mut up = Vec::new();
    let mut w = T::one();
    let mut anchor = if k <= mode { T::one() } else { T::zero() };
    let mut y = mode;
    while y < n {
        w = w * ratio(y);
        y += 1;
        if y == k {
            anchor = w;
        }
        if y > k && (w == T::zero() || w < cut * anchor) {
            break;
        }
        up.push(w);
    }

    let mut out = Vec::with_capacity(down.len() + 1 + up.len());
    out.extend(down.into_iter().rev());
    out.push(T::one());
    out.extend(up);
    (out, bottom)
}

fn all_weights<T: Real>(n: u64, ratio: &impl Fn(u64) -> T) -> Vec<T> {
    let len = n as usize + 1;
    let ratios: Vec<T> = (0..n).map(ratio).collect();
    let mut mode = 0usize;
    let mut best = T::zero();
    let mut acc = T::zero();
    for (y, r) in ratios.iter().enumerate() {
        acc = acc + r.ln();
        if acc > best {
            best = acc;
            mode = y + 1;
        }
    }
    let mut w = vec![T::zero(); len];
    w[mode] = T::one();
    for y in mode..(len - 1) {
        w[y + 1] = w[y] * ratios[y];
    }
    for y in (0..mode).rev() {
        w[y] = w[y + 1] / ratios[y];
    }
    w
}

/// Exact `P(Y >= k)` for `Y ~ Binomial(n, p)`.
pub fn binomial_tail<T: Real>(k: u64, n: u64, p: T) -> Result<T> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::invalid(format!("binomial p must lie in [0, 1], got {p}")));
    }
    if k > n + 1 {
        return Err(Error::invalid(format!("tail index {k} exceeds n + 1 = {}", n + 1)));
    }
    if k == 0 {
        return Ok(T::one());
    }
    if p == T::zero() {
        return Ok(T::zero());
    }
    if p == T::one() {
        return Ok(if k <= n { T::one() } else { T::zero() });
    }
    let odds = p / (T::one() - p);
    let nf = T::c(n as f64);
    Ok(tail_from_ratios(k, n, true, |y| {
        let yf = T::c(y as f64);
        (nf - yf) / (yf + T::one()) * odds
    }))
}

/// `P(Y <= k)` for `Y ~ Binomial(n, p)`.
pub fn binomial_lower_cdf<T: Real>(k: u64, n: u64, p: T) -> Result<T> {
    if k >= n {
        binomial_tail(0, n, p)?;
        return Ok(T::one());
    }
    binomial_tail(k + 1, n, p).map(|t| T::one() - t)
}

/// `P(Y >= k)` for `Y ~ BetaBinomial(n, alpha, beta)`.
pub fn beta_binomial_tail<T: Real>(k: u64, n: u64, alpha: T, beta: T) -> Result<T> {
    if !(alpha > T::zero() && beta > T::zero()) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::invalid(format!(
            "beta-binomial shape parameters must be positive and finite, got ({alpha}, {beta})"
        )));
    }
    if k > n + 1 {
        return Err(Error::invalid(format!("tail index {k} exceeds n + 1 = {}", n + 1)));
    }
    let nf = T::c(n as f64);
    // Log-concave when both shape parameters are at least one.
    let log_concave = alpha >= T::one() && beta >= T::one();
    Ok(tail_from_ratios(k, n, log_concave, |y| {
        let yf = T::c(y as f64);
        (nf - yf) * (yf + alpha) / ((yf + T::one()) * (nf - yf - T::one() + beta))
    }))
}

/// Standard normal quantile, Wichura's AS241 (PPND16). Relative accuracy is
/// about 1e-16 over the open unit interval.
pub fn normal_quantile<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::invalid(format!("normal quantile needs p in (0, 1), got {p}")));
    }
    let pf = p.to_f64_lossy();
    Ok(T::c(ppnd16(pf)))
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

// Published coefficients, kept digit for digit.
#[allow(clippy::excessive_precision)]
fn ppnd16(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_6,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_4e3,
        1.373_169_376_550_946_1e4,
        4.592_195_393_154_987_1e4,
        6.726_577_092_700_870_1e4,
        3.343_057_558_358_812_8e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_1e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_6e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_854_5e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_6,
        4.630_337_846_156_545_3,
        5.769_497_221_460_691_4,
        3.647_848_324_763_204_6,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506_1e-1,
        2.272_384_498_926_918_5e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_8,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_7e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_8,
        5.463_784_911_164_114_4,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_9e-1,
        2.653_218_952_657_612_3e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_4e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_132_6e-4,
        1.846_318_317_510_054_7e-5,
        1.421_511_758_316_445_9e-7,
        2.044_263_103_389_939_8e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn mean<T: Real>(xs: &[T]) -> T {
    compensated_sum(xs.iter().copied()) / T::from_count(xs.len())
}

/// Product-moment correlation coefficient.
pub fn pearson_r<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let mx = mean(x);
    let my = mean(y);
    let sxy = compensated_sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|&a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|&b| (b - my) * (b - my)));
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Confidence interval for a correlation via the Fisher z-transform.
pub fn fisher_interval<T: Real>(r: T, n: usize, level: T) -> Result<(T, T)> {
    if !(r.abs() < T::one()) {
        return Err(Error::invalid(format!("fisher interval needs |r| < 1, got {r}")));
    }
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::invalid(format!("confidence level must be in (0, 1), got {level}")));
    }
    let z = r.atanh();
    let crit = normal_quantile((T::one() + level) / T::c(2.0))?;
    let hw = crit / T::c((n - 3) as f64).sqrt();
    Ok(((z - hw).tanh(), (z + hw).tanh()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CorrelationResult<T: Real> {
    pub r: T,
    pub n: usize,
    pub ci_low: T,
    pub ci_high: T,
    pub level: T,
}

impl<T: Real> CorrelationResult<T> {
    pub fn compute(x: &[T], y: &[T], level: T) -> Result<Self> {
        let r = pearson_r(x, y)?;
        let (ci_low, ci_high) = fisher_interval(r, x.len(), level)?;
        Ok(CorrelationResult {
            r,
            n: x.len(),
            ci_low,
            ci_high,
            level,
        })
    }

    pub fn excludes_zero(&self) -> bool {
        self.ci_low > T::zero() || self.ci_high < T::zero()
    }
}

/// Writes labelled correlation rows as CSV.
pub fn write_correlations_csv<T: Real, W: Write>(
    out: W,
    rows: &[(String, String, CorrelationResult<T>)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["measure", "group", "r", "n", "ci_low", "ci_high", "level"])?;
    for (measure, group, c) in rows {
        w.write_record([
            measure.clone(),
            group.clone(),
            c.r.to_string(),
            c.n.to_string(),
            c.ci_low.to_string(),
            c.ci_high.to_string(),
            c.level.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    EqualCount,
    EqualWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Bin<T: Real> {
    pub key_low: T,
    pub key_high: T,
    pub count: usize,
    pub mean_key: T,
    /// NaN for an empty equal-width bin.
    pub mean_value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BinnedSeries<T: Real> {
    pub mode: BinMode,
    pub bins: Vec<Bin<T>>,
}

impl<T: Real> BinnedSeries<T> {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin", "key_low", "key_high", "count", "mean_key", "mean_value"])?;
        for (i, b) in self.bins.iter().enumerate() {
            w.write_record([
                i.to_string(),
                b.key_low.to_string(),
                b.key_high.to_string(),
                b.count.to_string(),
                b.mean_key.to_string(),
                b.mean_value.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn make_bin<T: Real>(members: &[usize], keys: &[T], values: &[T], lo: T, hi: T) -> Bin<T> {
    let count = members.len();
    let (mean_key, mean_value) = if count == 0 {
        (T::nan(), T::nan())
    } else {
        let c = T::from_count(count);
        (
            compensated_sum(members.iter().map(|&i| keys[i])) / c,
            compensated_sum(members.iter().map(|&i| values[i])) / c,
        )
    };
    Bin {
        key_low: lo,
        key_high: hi,
        count,
        mean_key,
        mean_value,
    }
}

/// Groups samples by key into `bins` bins and averages `values` per bin.
pub fn bin_and_aggregate<T: Real>(
    keys: &[T],
    values: &[T],
    bins: usize,
    mode: BinMode,
) -> Result<BinnedSeries<T>> {
    if keys.len() != values.len() {
        return Err(Error::invalid("keys and values differ in length"));
    }
    if bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    if keys.len() < bins {
        return Err(Error::TooFewSamples {
            needed: bins,
            got: keys.len(),
        });
    }
    if keys.iter().any(|k| k.is_nan()) {
        return Err(Error::invalid("NaN key"));
    }
    let n = keys.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps input order among tied keys.
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).expect("keys are not NaN"));

    let out = match mode {
        BinMode::EqualCount => {
            let base = n / bins;
            let extra = n % bins;
            let mut start = 0;
            (0..bins)
                .map(|b| {
                    let size = base + usize::from(b < extra);
                    let members = &order[start..start + size];
                    start += size;
                    let lo = keys[members[0]];
                    let hi = keys[members[size - 1]];
                    make_bin(members, keys, values, lo, hi)
                })
                .collect()
        }
        BinMode::EqualWidth => {
            let lo = keys[order[0]];
            let hi = keys[order[n - 1]];
            let width = (hi - lo) / T::from_count(bins);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
            for &i in &order {
                let b = if width > T::zero() {
                    ((keys[i] - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1)
                } else {
                    0
                };
                members[b].push(i);
            }
            members
                .iter()
                .enumerate()
                .map(|(b, m)| {
                    let blo = lo + width * T::from_count(b);
                    let bhi = if b + 1 == bins { hi } else { lo + width * T::from_count(b + 1) };
                    make_bin(m, keys, values, blo, bhi)
                })
                .collect()
        }
    };
    Ok(BinnedSeries { mode, bins: out })
}

/// Ordinary least squares fit `y = slope * x + intercept`.
pub fn least_squares<T: Real>(x: &[T], y: &[T]) -> Result<(T, T)> {
    if x.len() != y.len() {
        return Err(Error::invalid("series lengths differ"));
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: x.len(),
        });
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx = compensated_sum(x.iter().map(|&a| (a - mx) * (a - mx)));
    if sxx <= T::zero() {
        return Err(Error::ZeroVariance);
    }
    let sxy = compensated_sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("labelings differ in length"));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&i, &j) in a.iter().zip(b) {
        table[i * kb + j] += 1;
        rows[i] += 1;
        cols[j] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&x| c2(x)).sum();
    let sa: f64 = rows.iter().map(|&x| c2(x)).sum();
    let sb: f64 = cols.iter().map(|&x| c2(x)).sum();
    let expected = sa * sb / c2(n as u64);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
