//! Special functions backing the generator derivatives: Stirling numbers,
//! polylogarithms of negative integer order, the order-1 Debye function, and
//! the coefficient tables of the derivative polynomials used by the Gumbel
//! and Joe families.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::util::log_sum_exp;

/// Signed Stirling number of the first kind s(n, k):
/// x(x-1)...(x-n+1) = sum_k s(n, k) x^k.
pub fn stirling_first(n: usize, k: usize) -> Result<i64> {
    if k > n {
        return Ok(0);
    }
    // row-by-row recurrence s(n, k) = s(n-1, k-1) - (n-1) s(n-1, k)
    let mut row: Vec<i64> = vec![0; n + 1];
    row[0] = 1;
    for m in 1..=n {
        let prev = row.clone();
        row[0] = 0;
        for j in 1..=m {
            let carry = prev[j]
                .checked_mul(m as i64 - 1)
                .ok_or(Error::Overflow("stirling_first"))?;
            row[j] = prev[j - 1]
                .checked_sub(carry)
                .ok_or(Error::Overflow("stirling_first"))?;
        }
        for j in (m + 1)..=n {
            row[j] = 0;
        }
    }
    Ok(row[k])
}

/// Stirling number of the second kind S(n, k): partitions of an n-set into
/// k non-empty blocks.
pub fn stirling_second(n: usize, k: usize) -> Result<i64> {
    if k > n {
        return Ok(0);
    }
    if n == 0 {
        return Ok(1); // S(0,0)
    }
    let mut row: Vec<i64> = vec![0; n + 1];
    row[0] = 1;
    for m in 1..=n {
        let prev = row.clone();
        row[0] = 0;
        for j in 1..=m {
            let grow = prev[j]
                .checked_mul(j as i64)
                .ok_or(Error::Overflow("stirling_second"))?;
            row[j] = grow
                .checked_add(prev[j - 1])
                .ok_or(Error::Overflow("stirling_second"))?;
        }
        for j in (m + 1)..=n {
            row[j] = 0;
        }
    }
    Ok(row[k])
}

/// Maximum supported polylogarithm order; keeps the Stirling coefficients
/// exactly representable.
const MAX_POLYLOG_ORDER: usize = 24;

/// Log-coefficients ln((k-1)! S(n+1, k)) for the rational closed form of
/// Li_{-n}; cached per order.
fn polylog_log_coeffs(n: usize) -> Result<Arc<Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return Ok(hit.clone());
    }
    if n > MAX_POLYLOG_ORDER {
        return Err(Error::parameter(format!(
            "polylog order {n} exceeds supported maximum {MAX_POLYLOG_ORDER}"
        )));
    }
    let mut ln_fact = 0.0;
    let mut coeffs = Vec::with_capacity(n + 1);
    for k in 1..=(n + 1) {
        if k > 1 {
            ln_fact += ((k - 1) as f64).ln();
        }
        let s2 = stirling_second(n + 1, k)? as f64;
        coeffs.push(ln_fact + s2.ln());
    }
    let arc = Arc::new(coeffs);
    cache.lock().unwrap().insert(n, arc.clone());
    Ok(arc)
}

/// Polylogarithm of negative integer order, Li_{-n}(z) for |z| < 1, via the
/// rational closed form
/// Li_{-n}(z) = sum_{k=1}^{n+1} (k-1)! S(n+1, k) (z/(1-z))^k.
pub fn polylog_negint(n: usize, z: f64) -> Result<f64> {
    if !(z > -1.0 && z < 1.0) {
        return Err(Error::domain(format!(
            "polylog_negint requires z in (-1, 1), got {z}"
        )));
    }
    if n > MAX_POLYLOG_ORDER {
        return Err(Error::parameter(format!(
            "polylog order {n} exceeds supported maximum {MAX_POLYLOG_ORDER}"
        )));
    }
    let w = z / (1.0 - z);
    let mut sum = 0.0;
    let mut wk = 1.0;
    let mut fact = 1.0;
    for k in 1..=(n + 1) {
        if k > 1 {
            fact *= (k - 1) as f64;
        }
        wk *= w;
        sum += fact * stirling_second(n + 1, k)? as f64 * wk;
    }
    if !sum.is_finite() {
        return Err(Error::Overflow("polylog_negint"));
    }
    Ok(sum)
}

/// ln Li_{-n}(z) for z in (0, 1), taking ln(z/(1-z)) directly so callers can
/// form the ratio in whatever stable way their parametrisation allows.
pub(crate) fn log_polylog_negint(n: usize, ln_w: f64) -> Result<f64> {
    let coeffs = polylog_log_coeffs(n)?;
    let terms: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(idx, &c)| c + (idx as f64 + 1.0) * ln_w)
        .collect();
    Ok(log_sum_exp(&terms))
}

// Bernoulli numbers B_2, B_4, ..., B_16 for the small-argument expansion of
// the Debye integrand.
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Debye function of order one, D_1(x) = (1/x) * int_0^x t/(e^t - 1) dt.
///
/// Small arguments use the Bernoulli series of the integrand; large
/// arguments use the complementary exponential series against pi^2/6. Both
/// branches agree to ~1e-12 at the switch point.
pub fn debye1(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("debye1 requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < 1.5 {
        // D_1(x) = 1 - x/4 + sum_n B_{2n} x^{2n} / ((2n+1) (2n)!)
        let mut sum = 1.0 - x / 4.0;
        let x2 = x * x;
        let mut x_pow = 1.0;
        let mut fact = 1.0; // (2n)!
        for (i, b) in BERNOULLI_EVEN.iter().enumerate() {
            let n = i + 1;
            x_pow *= x2;
            fact *= ((2 * n - 1) * (2 * n)) as f64;
            sum += b * x_pow / ((2 * n + 1) as f64 * fact);
        }
        Ok(sum)
    } else {
        // int_x^inf t/(e^t-1) dt = sum_k e^{-kx} (x/k + 1/k^2)
        let mut tail = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            let term = (-kf * x).exp() * (x / kf + 1.0 / (kf * kf));
            tail += term;
            if term < 1e-18 * (1.0 + tail) {
                break;
            }
        }
        Ok((std::f64::consts::PI.powi(2) / 6.0 - tail) / x)
    }
}

/// Coefficient table of a family of derivative polynomials: `ln[i][j]` holds
/// the log of the j-th coefficient of P_{i+1}, with -inf marking an
/// exactly-zero coefficient. All coefficients of both supported families are
/// non-negative, so logs capture them fully. `offset` is the exponent of the
/// first stored coefficient (Gumbel rows start at x^1, Joe rows at x^0).
pub(crate) struct PolyTable {
    ln: Vec<Vec<f64>>,
    offset: usize,
}

impl PolyTable {
    /// Evaluate ln P_k(x) given ln x, for 1-based k.
    pub fn log_eval(&self, k: usize, ln_x: f64) -> f64 {
        let row = &self.ln[k - 1];
        let terms: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(j, &c)| c + (j + self.offset) as f64 * ln_x)
            .collect();
        log_sum_exp(&terms)
    }
}

type TableKey = (u64, usize, u8);

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<PolyTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<PolyTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Raw Gumbel derivative-polynomial coefficient a^G_{i,k}(theta), the
/// coefficient of x^k in P^G_i. Requires theta >= 1 and 1 <= k <= i.
pub fn gumbel_poly_coeff(i: usize, k: usize, theta: f64) -> Result<f64> {
    if !(theta >= 1.0) {
        return Err(Error::parameter(format!(
            "gumbel polynomial requires theta >= 1, got {theta}"
        )));
    }
    if i == 0 || k == 0 || k > i {
        return Err(Error::parameter(format!(
            "gumbel coefficient indices out of range: i={i}, k={k}"
        )));
    }
    // a^G_{ik} = (-1)^{i-k} sum_{l=k}^{i} theta^{-l} s(i, l) S(l, k)
    let mut sum = 0.0;
    let mut theta_pow = theta.powi(-(k as i32));
    for l in k..=i {
        if l > k {
            theta_pow /= theta;
        }
        sum += theta_pow * stirling_first(i, l)? as f64 * stirling_second(l, k)? as f64;
    }
    let sign = if (i - k) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * sum)
}

/// Raw Joe derivative-polynomial coefficient a^J_{i,k}(theta), the
/// coefficient of x^{k-1} in P^J_i: S(i, k) * prod_{m=1}^{k-1} (m - 1/theta).
pub fn joe_poly_coeff(i: usize, k: usize, theta: f64) -> Result<f64> {
    if !(theta >= 1.0) {
        return Err(Error::parameter(format!(
            "joe polynomial requires theta >= 1, got {theta}"
        )));
    }
    if i == 0 || k == 0 || k > i {
        return Err(Error::parameter(format!(
            "joe coefficient indices out of range: i={i}, k={k}"
        )));
    }
    let alpha = theta.recip();
    let mut prod = 1.0;
    for m in 1..k {
        prod *= m as f64 - alpha;
    }
    Ok(stirling_second(i, k)? as f64 * prod)
}

/// Cached log-coefficient table for the Gumbel polynomials P^G_1..P^G_kmax.
pub(crate) fn gumbel_table(theta: f64, kmax: usize) -> Result<Arc<PolyTable>> {
    let key = (theta.to_bits(), kmax, 0u8);
    if let Some(hit) = table_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let mut rows = Vec::with_capacity(kmax);
    for i in 1..=kmax {
        let mut raw = Vec::with_capacity(i);
        for k in 1..=i {
            raw.push(gumbel_poly_coeff(i, k, theta)?);
        }
        rows.push(log_row(raw, "gumbel polynomial coefficients")?);
    }
    let arc = Arc::new(PolyTable {
        ln: rows,
        offset: 1,
    });
    table_cache().lock().unwrap().insert(key, arc.clone());
    Ok(arc)
}

/// Cached log-coefficient table for the Joe polynomials P^J_1..P^J_kmax.
pub(crate) fn joe_table(theta: f64, kmax: usize) -> Result<Arc<PolyTable>> {
    let key = (theta.to_bits(), kmax, 1u8);
    if let Some(hit) = table_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let mut rows = Vec::with_capacity(kmax);
    for i in 1..=kmax {
        let mut raw = Vec::with_capacity(i);
        for k in 1..=i {
            raw.push(joe_poly_coeff(i, k, theta)?);
        }
        rows.push(log_row(raw, "joe polynomial coefficients")?);
    }
    let arc = Arc::new(PolyTable {
        ln: rows,
        offset: 0,
    });
    table_cache().lock().unwrap().insert(key, arc.clone());
    Ok(arc)
}

/// Convert a row of theoretically non-negative coefficients to logs,
/// tolerating tiny negative round-off and rejecting anything else.
fn log_row(raw: Vec<f64>, what: &'static str) -> Result<Vec<f64>> {
    let max_abs = raw.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    let mut out = Vec::with_capacity(raw.len());
    for c in raw {
        if c > 0.0 {
            if !c.is_finite() {
                return Err(Error::Overflow(what));
            }
            out.push(c.ln());
        } else if c >= -1e-9 * max_abs {
            out.push(f64::NEG_INFINITY);
        } else {
            return Err(Error::Overflow(what));
        }
    }
    Ok(out)
}
