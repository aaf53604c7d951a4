//! Segmented prime sieving and empirical statistics of strongly additive
//! functions over n ≤ x.

use serde::{Deserialize, Serialize};

use crate::additive::AdditiveFunction;
use crate::error::{Error, Result};
use crate::special::KahanSum;

/// Default segment length, in integers, for all streaming passes.
pub const DEFAULT_SEGMENT: usize = 1 << 22;

/// Mean, variance and second-moment prime sums at threshold x.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimeStats {
    pub x: u64,
    pub pi_x: u64,
    /// μ(f;x) = Σ_{p≤x} f(p)/p
    pub mu: f64,
    /// σ²(f;x) = Σ_{p≤x} (f(p)²/p)(1−1/p)
    pub sigma2: f64,
    /// B²(f;x) = Σ_{p≤x} f(p)²/p
    #[serde(rename = "B2")]
    pub b2: f64,
    pub loglog_x: f64,
}

impl PrimeStats {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn b(&self) -> f64 {
        self.b2.sqrt()
    }
}

/// Which scale normalizes the tail thresholds μ + Δ·norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Normalization {
    Sigma,
    B,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailRow {
    pub delta: f64,
    pub count: u64,
    #[serde(rename = "D")]
    pub d: f64,
}

/// Empirical tail table: one row per Δ with count = #{n ≤ x : f(n) ≥ μ + Δ·norm}
/// and D = count/⌊x⌋.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailTable {
    pub x: u64,
    pub normalization: Normalization,
    pub rows: Vec<TailRow>,
}

fn simple_sieve(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut comp = vec![false; n + 1];
    let mut primes = Vec::new();
    for i in 2..=n {
        if !comp[i] {
            primes.push(i as u64);
            let mut j = i * i;
            while j <= n {
                comp[j] = true;
                j += i;
            }
        }
    }
    primes
}

/// Visit every prime ≤ x in ascending order using a segmented sieve.
pub fn for_each_prime(x: u64, segment: usize, mut visit: impl FnMut(u64)) -> Result<()> {
    if x < 2 {
        return Err(Error::Domain(format!(
            "prime sieve requires x >= 2, got {x}"
        )));
    }
    let root = (x as f64).sqrt() as u64 + 1;
    let base = simple_sieve(root);
    let seg = segment.max(64) as u64;
    let mut lo = 2u64;
    let mut marked = vec![false; seg as usize];
    while lo <= x {
        let hi = (lo + seg - 1).min(x);
        let len = (hi - lo + 1) as usize;
        marked[..len].iter_mut().for_each(|m| *m = false);
        for &p in &base {
            if p * p > hi {
                break;
            }
            let mut start = p * p;
            if start < lo {
                start = lo.div_ceil(p) * p;
            }
            let mut m = start;
            while m <= hi {
                marked[(m - lo) as usize] = true;
                m += p;
            }
        }
        for (i, &m) in marked[..len].iter().enumerate() {
            if !m {
                visit(lo + i as u64);
            }
        }
        lo = hi + 1;
    }
    Ok(())
}

/// The primes ≤ x, ascending.
pub fn sieve_primes(x: u64) -> Result<Vec<u64>> {
    let mut primes = Vec::new();
    for_each_prime(x, DEFAULT_SEGMENT, |p| primes.push(p))?;
    Ok(primes)
}

/// Prime-side sums μ, σ², B² at threshold x, accumulated in ascending-p order
/// with compensated summation.
pub fn prime_stats(f: &AdditiveFunction, x: u64) -> Result<PrimeStats> {
    prime_stats_seg(f, x, DEFAULT_SEGMENT)
}

pub fn prime_stats_seg(f: &AdditiveFunction, x: u64, segment: usize) -> Result<PrimeStats> {
    if x < 3 {
        return Err(Error::Domain(format!(
            "prime_stats requires x >= 3, got {x}"
        )));
    }
    let mut pi_x = 0u64;
    let mut mu = KahanSum::new();
    let mut sigma2 = KahanSum::new();
    let mut b2 = KahanSum::new();
    let mut err: Option<Error> = None;
    for_each_prime(x, segment, |p| {
        if err.is_some() {
            return;
        }
        match f.eval_prime(p) {
            Ok(v) => {
                let pf = p as f64;
                pi_x += 1;
                mu.add(v / pf);
                let w = v * v / pf;
                b2.add(w);
                sigma2.add(w * (1.0 - 1.0 / pf));
            }
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(PrimeStats {
        x,
        pi_x,
        mu: mu.value(),
        sigma2: sigma2.value(),
        b2: b2.value(),
        loglog_x: (x as f64).ln().ln(),
    })
}

/// Stream f(n;y) = Σ_{p|n, p≤y} f(p) for n = 1..x in ascending order.
/// With y = x this is the plain value stream f(n).
pub fn for_each_additive_value(
    f: &AdditiveFunction,
    x: u64,
    y: u64,
    segment: usize,
    mut visit: impl FnMut(u64, f64),
) -> Result<()> {
    if x < 1 {
        return Err(Error::Domain(format!(
            "additive_values requires x >= 1, got {x}"
        )));
    }
    if y > x {
        return Err(Error::Domain(format!(
            "truncation level y={y} exceeds x={x}"
        )));
    }
    let root = (x as f64).sqrt() as u64 + 1;
    let base: Vec<(u64, f64)> = {
        let ps = simple_sieve(root.min(y));
        let mut out = Vec::with_capacity(ps.len());
        for p in ps {
            out.push((p, f.eval_prime(p)?));
        }
        out
    };
    let seg = segment.max(64) as u64;
    let mut lo = 1u64;
    let mut vals = vec![0.0f64; seg as usize];
    let mut rem = vec![0u64; seg as usize];
    while lo <= x {
        let hi = (lo + seg - 1).min(x);
        let len = (hi - lo + 1) as usize;
        for i in 0..len {
            vals[i] = 0.0;
            rem[i] = lo + i as u64;
        }
        for &(p, fp) in &base {
            let mut m = lo.div_ceil(p) * p;
            while m <= hi {
                let i = (m - lo) as usize;
                vals[i] += fp;
                while rem[i].is_multiple_of(p) {
                    rem[i] /= p;
                }
                m += p;
            }
        }
        for i in 0..len {
            let mut v = vals[i];
            // Leftover factor is a single prime > √x.
            if rem[i] > 1 && rem[i] <= y {
                v += f.eval_prime(rem[i])?;
            }
            visit(lo + i as u64, v);
        }
        lo = hi + 1;
    }
    Ok(())
}

fn tail_from_stream(
    f: &AdditiveFunction,
    x: u64,
    y: u64,
    deltas: &[f64],
    normalization: Normalization,
    segment: usize,
) -> Result<TailTable> {
    if deltas.is_empty() {
        return Err(Error::Domain("delta grid must be nonempty".into()));
    }
    if deltas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "delta grid must be strictly ascending".into(),
        ));
    }
    let stats = prime_stats_seg(f, y, segment)?;
    let norm = match normalization {
        Normalization::Sigma => stats.sigma(),
        Normalization::B => stats.b(),
    };
    if !(norm > 0.0) {
        return Err(Error::Domain(format!(
            "degenerate function: normalization scale is {norm}"
        )));
    }
    let thresholds: Vec<f64> = deltas.iter().map(|d| stats.mu + d * norm).collect();
    // hist[k] = #values whose largest satisfied threshold index is k-1
    // (k = 0: below every threshold).
    let mut hist = vec![0u64; thresholds.len() + 1];
    for_each_additive_value(f, x, y, segment, |_, v| {
        let k = thresholds.partition_point(|&t| t <= v);
        hist[k] += 1;
    })?;
    let denom = x as f64;
    let mut rows = Vec::with_capacity(deltas.len());
    let mut suffix = 0u64;
    let mut counts = vec![0u64; thresholds.len()];
    for i in (0..thresholds.len()).rev() {
        suffix += hist[i + 1];
        counts[i] = suffix;
    }
    for (i, &d) in deltas.iter().enumerate() {
        rows.push(TailRow {
            delta: d,
            count: counts[i],
            d: counts[i] as f64 / denom,
        });
    }
    Ok(TailTable {
        x,
        normalization,
        rows,
    })
}

/// Empirical tail 𝒟_f(x;Δ) (normalization σ) or 𝒟_f^×(x;Δ) (normalization B):
/// rows of #{n ≤ x : f(n) ≥ μ(f;x) + Δ·norm} / ⌊x⌋ over the Δ grid.
pub fn empirical_tail(
    f: &AdditiveFunction,
    x: u64,
    deltas: &[f64],
    normalization: Normalization,
) -> Result<TailTable> {
    tail_from_stream(f, x, x, deltas, normalization, DEFAULT_SEGMENT)
}

/// Tail of the truncated function f(n;y), normalized by the prime stats at y.
pub fn truncated_tail(
    f: &AdditiveFunction,
    x: u64,
    y: u64,
    deltas: &[f64],
    normalization: Normalization,
) -> Result<TailTable> {
    if y < 2 || y > x {
        return Err(Error::Domain(format!("need 2 <= y <= x, got y={y}, x={x}")));
    }
    tail_from_stream(f, x, y, deltas, normalization, DEFAULT_SEGMENT)
}

/// Empirical prime-value CDF F(x;t) = #{p ≤ x : f(p) ≤ t}/π(x) and the
/// weighted CDF K_f(x;t) = (1/B²) Σ_{p≤x, f(p)≤t} f(p)²/p, evaluated
/// right-continuously at each grid point.
pub fn prime_cdf(f: &AdditiveFunction, x: u64, t_grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x < 3 {
        return Err(Error::Domain(format!("prime_cdf requires x >= 3, got {x}")));
    }
    let mut counts = vec![0u64; t_grid.len()];
    let mut weights = vec![KahanSum::new(); t_grid.len()];
    let mut pi_x = 0u64;
    let mut b2 = KahanSum::new();
    let mut err: Option<Error> = None;
    for_each_prime(x, DEFAULT_SEGMENT, |p| {
        if err.is_some() {
            return;
        }
        match f.eval_prime(p) {
            Ok(v) => {
                pi_x += 1;
                let w = v * v / p as f64;
                b2.add(w);
                // first grid index with t >= v: contributes to that point onward
                let k = t_grid.partition_point(|&t| t < v);
                if k < t_grid.len() {
                    counts[k] += 1;
                    weights[k].add(w);
                }
            }
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let mut fs = Vec::with_capacity(t_grid.len());
    let mut ks = Vec::with_capacity(t_grid.len());
    let mut c = 0u64;
    let mut w = 0.0;
    for i in 0..t_grid.len() {
        c += counts[i];
        w += weights[i].value();
        fs.push(c as f64 / pi_x as f64);
        ks.push(if b2.value() > 0.0 {
            w / b2.value()
        } else {
            0.0
        });
    }
    Ok((fs, ks))
}

/// Brute-force mean value (1/⌊x⌋) Σ_{n≤x} e^{s·f(n)} with compensated
/// accumulation; errors out instead of overflowing.
pub fn mean_value_direct(f: &AdditiveFunction, x: u64, s: f64) -> Result<f64> {
    let mut acc = KahanSum::new();
    let mut overflow = false;
    for_each_additive_value(f, x, x, DEFAULT_SEGMENT, |_, v| {
        let e = s * v;
        if e > 700.0 {
            overflow = true;
        } else {
            acc.add(e.exp());
        }
    })?;
    if overflow {
        return Err(Error::Range(format!(
            "e^(s f(n)) overflows f64 for s={s}; reduce s or x"
        )));
    }
    Ok(acc.value() / x as f64)
}
