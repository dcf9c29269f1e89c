//! Small numeric helpers shared across modules: compensated summation,
//! log-domain reductions, seed derivation, rank statistics, and a
//! Kolmogorov-Smirnov check for uniformity.

/// Neumaier-compensated accumulator. Used wherever a sum mixes terms of very
/// different magnitude or opposite sign and plain `+=` would lose digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    correction: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        // skip the compensation step when the running sum is no longer
        // finite: inf - inf would poison the correction with NaN, whereas
        // saturating at the signed infinity is the honest answer
        if t.is_finite() {
            if self.sum.abs() >= x.abs() {
                self.correction += (self.sum - t) + x;
            } else {
                self.correction += (x - t) + self.sum;
            }
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.correction
    }
}

/// Sum a slice with compensation.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.total()
}

/// log(sum(exp(x_i))) without overflow; returns -inf for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// SplitMix64 step; used to derive independent child seeds from a master
/// seed so parallel and serial execution see identical random streams.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sample Kendall rank correlation (tau-b) via Knight's O(n log n)
/// merge-sort inversion count. Handles ties in either argument.
pub fn sample_kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "paired samples must have equal length");
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap()
            .then(y[a].partial_cmp(&y[b]).unwrap())
    });

    let tot = n as i128 * (n as i128 - 1) / 2;
    let mut xtie: i128 = 0;
    let mut ntie: i128 = 0;
    {
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && x[idx[j]] == x[idx[i]] {
                j += 1;
            }
            let run = (j - i) as i128;
            xtie += run * (run - 1) / 2;
            // joint ties inside the x-tie run
            let mut k = i;
            while k < j {
                let mut m = k + 1;
                while m < j && y[idx[m]] == y[idx[k]] {
                    m += 1;
                }
                let jr = (m - k) as i128;
                ntie += jr * (jr - 1) / 2;
                k = m;
            }
            i = j;
        }
    }

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut ytie: i128 = 0;
    {
        let mut sorted = ys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            let run = (j - i) as i128;
            ytie += run * (run - 1) / 2;
            i = j;
        }
    }

    let swaps = count_inversions(&mut ys) as i128;
    let con_minus_dis = tot - xtie - ytie + ntie - 2 * swaps;
    let denom = ((tot - xtie) as f64) * ((tot - ytie) as f64);
    if denom <= 0.0 {
        return 0.0;
    }
    con_minus_dis as f64 / denom.sqrt()
}

/// Merge-sort inversion counter; sorts in place, returns the swap count.
fn count_inversions(xs: &mut [f64]) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mut buf = vec![0.0; n];
    merge_count(xs, &mut buf)
}

fn merge_count(xs: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = xs.split_at_mut(mid);
    let mut inv = merge_count(left, &mut buf[..mid]) + merge_count(right, &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buf[k] = left[i];
            i += 1;
        } else {
            buf[k] = right[j];
            j += 1;
            inv += (left.len() - i) as u64;
        }
        k += 1;
    }
    while i < left.len() {
        buf[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        buf[k] = right[j];
        j += 1;
        k += 1;
    }
    xs.copy_from_slice(&buf[..n]);
    inv
}

/// One-sample Kolmogorov-Smirnov statistic against Uniform(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &u) in s.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - u;
        let lo = u - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic Kolmogorov-Smirnov p-value with the small-sample correction
/// of the effective sample size.
pub fn ks_p_value(statistic: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form of the Kolmogorov CDF; the alternating tail
        // series needs ~1/lambda terms here, while four of these suffice
        // for machine accuracy.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = ((2.0 * std::f64::consts::PI).sqrt() / lambda)
            * (y + y.powi(9) + y.powi(25) + y.powi(49));
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        p += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// Lower empirical quantile of a sorted sample: smallest order statistic
/// whose empirical CDF reaches `p`.
pub fn empirical_quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample skewness (third standardized moment, biased version).
pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Sample excess kurtosis (fourth standardized moment minus 3, biased
/// version); zero for Gaussian data.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Sample autocorrelation at the given lag (denominator is the full-sample
/// second moment, the usual positive-definite estimator).
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    if lag >= xs.len() {
        return 0.0;
    }
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = xs.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
    num / denom
}
