//! The Bernoulli random model Σ_p f(p)X_p with P(X_p = 1) = 1/p, its exact
//! and Monte-Carlo tails, the 𝔤/𝔥 lattice split, and the Poisson / Lévy
//! comparison tails.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::additive::AdditiveFunction;
use crate::error::{Error, Result};
use crate::psi::PsiDistribution;
use crate::sieve::for_each_prime;
use crate::special::{ln_gamma, normal_tail_ln, KahanSum};

/// Hard cap on Σ(k_p + 1) lattice states in the exact DP.
pub const DP_STATE_LIMIT: u64 = 100_000_000;

/// Independent Bernoulli summands (p, f(p)) for p ≤ x.
#[derive(Debug, Clone)]
pub struct BernoulliEnsemble {
    primes: Vec<u64>,
    weights: Vec<f64>,
}

impl BernoulliEnsemble {
    pub fn from_function(f: &AdditiveFunction, x: u64) -> Result<Self> {
        let mut primes = Vec::new();
        let mut weights = Vec::new();
        let mut bad: Option<Error> = None;
        for_each_prime(x, 1 << 20, |p| {
            if bad.is_some() {
                return;
            }
            match f.eval_prime(p) {
                Ok(w) => {
                    primes.push(p);
                    weights.push(w);
                }
                Err(e) => bad = Some(e),
            }
        })?;
        if let Some(e) = bad {
            return Err(e);
        }
        Self::from_parts(primes, weights)
    }

    pub fn from_parts(primes: Vec<u64>, weights: Vec<f64>) -> Result<Self> {
        if primes.len() != weights.len() {
            return Err(Error::Config("primes/weights length mismatch".into()));
        }
        for (&p, &w) in primes.iter().zip(&weights) {
            if p < 2 {
                return Err(Error::Domain(format!(
                    "success probability 1/{p} not in (0, 1/2]"
                )));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Domain(format!(
                    "weight at prime {p} must be finite and >= 0"
                )));
            }
        }
        Ok(Self { primes, weights })
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// Mean Σ f(p)/p.
    pub fn mu(&self) -> f64 {
        let mut s = KahanSum::new();
        for (&p, &w) in self.primes.iter().zip(&self.weights) {
            s.add(w / p as f64);
        }
        s.value()
    }

    /// Variance Σ (f(p)²/p)(1 − 1/p).
    pub fn sigma2(&self) -> f64 {
        let mut s = KahanSum::new();
        for (&p, &w) in self.primes.iter().zip(&self.weights) {
            let ip = 1.0 / p as f64;
            s.add(w * w * ip * (1.0 - ip));
        }
        s.value()
    }

    /// B² = Σ f(p)²/p.
    pub fn b2(&self) -> f64 {
        let mut s = KahanSum::new();
        for (&p, &w) in self.primes.iter().zip(&self.weights) {
            s.add(w * w / p as f64);
        }
        s.value()
    }
}

/// E exp(s·Σ f(p)X_p) = ∏ (1 − 1/p)(1 + e^{s f(p)}/(p−1)), in log space.
pub fn model_mgf_ln(ens: &BernoulliEnsemble, s: f64) -> Result<f64> {
    let mut acc = KahanSum::new();
    for (&p, &w) in ens.primes.iter().zip(&ens.weights) {
        let e = s * w;
        if e > 700.0 {
            return Err(Error::Range(format!(
                "MGF overflow: s·f(p) = {e} at p = {p} exceeds exp range"
            )));
        }
        let pm1 = (p - 1) as f64;
        acc.add((-1.0 / p as f64).ln_1p());
        acc.add((e.exp() / pm1).ln_1p());
    }
    Ok(acc.value())
}

pub fn model_mgf(ens: &BernoulliEnsemble, s: f64) -> Result<f64> {
    Ok(model_mgf_ln(ens, s)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimateMethod {
    Dp,
    Mc,
    Closed,
}

/// A tail probability with the bookkeeping needed to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailEstimate {
    pub value: f64,
    pub method: EstimateMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remainder_bound: Option<f64>,
}

impl TailEstimate {
    pub fn closed(value: f64) -> Self {
        Self {
            value,
            method: EstimateMethod::Closed,
            stderr: None,
            samples: None,
            seed: None,
            grid_step: None,
            remainder_bound: None,
        }
    }
}

/// Exact tail P(Σ f(p)X_p ≥ t) by dynamic programming on the lattice qℤ.
///
/// Weights are snapped to the grid; the largest snapping error is reported in
/// `remainder_bound`. States at or above the threshold are folded into a
/// single top bucket, which leaves the answer exact while keeping the DP
/// array no larger than the threshold index.
pub fn exact_tail_dp(ens: &BernoulliEnsemble, t: f64, q: f64) -> Result<TailEstimate> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("grid step must be > 0, got {q}")));
    }
    let mut steps = Vec::with_capacity(ens.len());
    let mut snap_err = 0.0_f64;
    let mut total_states = 1u64;
    for (&p, &w) in ens.primes.iter().zip(&ens.weights) {
        let k = (w / q).round();
        if !(0.0..=2e9).contains(&k) {
            return Err(Error::Range(format!(
                "weight {w} at prime {p} needs {k} grid steps; grid too fine"
            )));
        }
        snap_err = snap_err.max((w - k * q).abs());
        total_states += k as u64;
        if total_states > DP_STATE_LIMIT {
            return Err(Error::Resource(format!(
                "DP state count exceeds {DP_STATE_LIMIT}; coarsen the grid or use Monte Carlo"
            )));
        }
        steps.push(k as usize);
    }
    // smallest lattice index whose value q·idx clears the threshold
    let tol = 1e-12 * t.abs().max(1.0);
    let idx = ((t - tol) / q).ceil().max(0.0) as u64;
    if idx == 0 {
        let mut est = TailEstimate::closed(1.0);
        est.method = EstimateMethod::Dp;
        est.grid_step = Some(q);
        est.remainder_bound = Some(snap_err);
        return Ok(est);
    }
    if idx > total_states {
        let mut est = TailEstimate::closed(0.0);
        est.method = EstimateMethod::Dp;
        est.grid_step = Some(q);
        est.remainder_bound = Some(snap_err);
        return Ok(est);
    }
    let cap = idx as usize; // dist[cap] = P(sum ≥ t), everything below is pointwise
    let mut dist = vec![0.0_f64; cap + 1];
    dist[0] = 1.0;
    for (&p, &k) in ens.primes.iter().zip(&steps) {
        if k == 0 {
            continue;
        }
        let qp = 1.0 / p as f64;
        let keep = 1.0 - qp;
        // top bucket absorbs everything pushed past the threshold
        let into_top: f64 = dist[cap.saturating_sub(k)..cap].iter().sum();
        dist[cap] += into_top * qp;
        for j in (1..cap).rev() {
            let lower = if j >= k { dist[j - k] * qp } else { 0.0 };
            dist[j] = dist[j] * keep + lower;
        }
        dist[0] *= keep;
    }
    let value = dist[cap];
    Ok(TailEstimate {
        value,
        method: EstimateMethod::Dp,
        stderr: None,
        samples: None,
        seed: None,
        grid_step: Some(q),
        remainder_bound: Some(snap_err),
    })
}

/// Full snapped distribution (index j ↦ P(sum = j·q)); for cross-checks on
/// small ensembles.
pub fn exact_dp_distribution(ens: &BernoulliEnsemble, q: f64) -> Result<Vec<f64>> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("grid step must be > 0, got {q}")));
    }
    let mut total = 0usize;
    let mut steps = Vec::with_capacity(ens.len());
    for &w in &ens.weights {
        let k = (w / q).round() as usize;
        total += k;
        if total as u64 > DP_STATE_LIMIT {
            return Err(Error::Resource("distribution too large".into()));
        }
        steps.push(k);
    }
    let mut dist = vec![0.0_f64; total + 1];
    dist[0] = 1.0;
    let mut used = 0usize;
    for (&p, &k) in ens.primes.iter().zip(&steps) {
        let qp = 1.0 / p as f64;
        let keep = 1.0 - qp;
        used += k;
        if k == 0 {
            continue;
        }
        for j in (0..=used).rev() {
            let lower = if j >= k { dist[j - k] * qp } else { 0.0 };
            dist[j] = dist[j] * keep + lower;
        }
    }
    Ok(dist)
}

// ---- counter-based RNG: every (seed, replicate, summand) triple maps to one
// uniform, so sharded runs are bit-reproducible regardless of scheduling ----

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn counter_u01(seed: u64, replicate: u64, index: u64) -> f64 {
    let a = mix64(seed ^ replicate.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let z = mix64(a ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    (z >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Monte-Carlo tail estimate with stderr = √(v(1−v)/n).
pub fn mc_tail(ens: &BernoulliEnsemble, t: f64, samples: u64, seed: u64) -> Result<TailEstimate> {
    if samples == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let mut hits = 0u64;
    for i in 0..samples {
        let mut sum = KahanSum::new();
        for (j, (&p, &w)) in ens.primes.iter().zip(&ens.weights).enumerate() {
            if counter_u01(seed, i, j as u64) * (p as f64) < 1.0 {
                sum.add(w);
            }
        }
        if sum.value() >= t {
            hits += 1;
        }
    }
    let v = hits as f64 / samples as f64;
    Ok(TailEstimate {
        value: v,
        method: EstimateMethod::Mc,
        stderr: Some((v * (1.0 - v) / samples as f64).sqrt()),
        samples: Some(samples),
        seed: Some(seed),
        grid_step: None,
        remainder_bound: None,
    })
}

/// Pick a DP grid step: the approximate real gcd of the distinct weights if
/// the ensemble is lattice-like, otherwise a fixed fine grid.
pub fn suggest_grid_step(ens: &BernoulliEnsemble) -> f64 {
    let mut distinct: Vec<f64> = Vec::new();
    for &w in &ens.weights {
        if w > 0.0 && !distinct.iter().any(|&d| (d - w).abs() < 1e-12) {
            distinct.push(w);
            if distinct.len() > 64 {
                return 1e-4;
            }
        }
    }
    let mut g = 0.0_f64;
    for &w in &distinct {
        let (mut a, mut b) = (g.max(w), g.min(w));
        while b > 1e-9 {
            let r = a % b;
            a = b;
            b = r;
        }
        g = a;
    }
    if g >= 1e-4 {
        g
    } else {
        1e-4
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TailMethod {
    Dp { q: f64 },
    Mc { samples: u64, seed: u64 },
}

/// P(Σ f(p)X_p ≥ μ + Δ·norm) for the chosen normalization scale.
pub fn centered_tail(
    ens: &BernoulliEnsemble,
    mu: f64,
    norm: f64,
    delta: f64,
    method: TailMethod,
) -> Result<TailEstimate> {
    if !(norm > 0.0) {
        return Err(Error::Domain(format!(
            "normalization must be > 0, got {norm}"
        )));
    }
    let t = mu + delta * norm;
    if t <= 0.0 {
        return Ok(TailEstimate::closed(1.0));
    }
    match method {
        TailMethod::Dp { q } => exact_tail_dp(ens, t, q),
        TailMethod::Mc { samples, seed } => mc_tail(ens, t, samples, seed),
    }
}

// ---- lattice split f = 𝔤 + 𝔥 ----

/// f split into its lattice part 𝔤 (values on the span lattice) and the
/// exceptional part 𝔥 supported on finitely many primes.
#[derive(Debug, Clone)]
pub struct GhSplit {
    pub g_part: AdditiveFunction,
    pub h_part: AdditiveFunction,
    /// primes where 𝔥 ≠ 0
    pub support: Vec<u64>,
    pub span: f64,
}

/// Split the prime values of f below x against the lattice span·ℤ: each f(p)
/// within tol of the lattice goes to 𝔤, the rest to 𝔥.
pub fn split_gh(f: &AdditiveFunction, x: u64, span: f64, tol: f64) -> Result<GhSplit> {
    if !(span > 0.0) {
        return Err(Error::Domain(format!(
            "lattice span must be > 0, got {span}"
        )));
    }
    let mut g = BTreeMap::new();
    let mut h = BTreeMap::new();
    let mut support = Vec::new();
    let mut bad: Option<Error> = None;
    for_each_prime(x, 1 << 20, |p| {
        if bad.is_some() {
            return;
        }
        match f.eval_prime(p) {
            Ok(w) => {
                let k = (w / span).round();
                if (w - k * span).abs() <= tol {
                    g.insert(p, k * span);
                    h.insert(p, 0.0);
                } else {
                    g.insert(p, 0.0);
                    h.insert(p, w);
                    support.push(p);
                }
            }
            Err(e) => bad = Some(e),
        }
    })?;
    if let Some(e) = bad {
        return Err(e);
    }
    Ok(GhSplit {
        g_part: AdditiveFunction::table_allowing_zeros(g)?.with_name(format!("{f}:g")),
        h_part: AdditiveFunction::table_allowing_zeros(h)?.with_name(format!("{f}:h")),
        support,
        span,
    })
}

/// The law of X(𝔥) = Σ_{p∈S} 𝔥(p)X_p: the weak limit of 𝔥 on S-smooth
/// integers weighted by 1/n. Finitely many atoms, built by enumerating the
/// 2^|S| radical supports (Σ_{rad-support T} 1/n = ∏_{p∈T} 1/(p−1)).
#[derive(Debug, Clone)]
pub struct XhLaw {
    /// (value, probability), ascending in value, merged within 1e-12
    pub atoms: Vec<(f64, f64)>,
}

impl XhLaw {
    pub fn new(support: &[(u64, f64)]) -> Result<Self> {
        if support.len() > 12 {
            return Err(Error::Resource(format!(
                "exceptional support has {} primes; the 2^|S| enumeration is capped at 12",
                support.len()
            )));
        }
        for &(p, h) in support {
            if p < 2 || !h.is_finite() {
                return Err(Error::Domain(format!("bad support entry ({p}, {h})")));
            }
        }
        let n = support.len();
        let base: f64 = support.iter().map(|&(p, _)| 1.0 - 1.0 / p as f64).product();
        let mut raw: Vec<(f64, f64)> = Vec::with_capacity(1 << n);
        for mask in 0u32..(1u32 << n) {
            let mut value = 0.0;
            let mut weight = base;
            for (i, &(p, h)) in support.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    value += h;
                    weight *= 1.0 / (p as f64 - 1.0);
                }
            }
            raw.push((value, weight));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for (v, w) in raw {
            match atoms.last_mut() {
                Some(last) if (v - last.0).abs() <= 1e-12 => last.1 += w,
                _ => atoms.push((v, w)),
            }
        }
        Ok(Self { atoms })
    }

    /// P(X(𝔥) ≤ t), threshold closed within 1e-12.
    pub fn cdf(&self, t: f64) -> f64 {
        let tol = 1e-12 * t.abs().max(1.0);
        self.atoms
            .iter()
            .filter(|&&(v, _)| v <= t + tol)
            .map(|&(_, w)| w)
            .sum()
    }

    /// P(X(𝔥) ≥ t), threshold closed within 1e-12.
    pub fn tail(&self, t: f64) -> f64 {
        let tol = 1e-12 * t.abs().max(1.0);
        self.atoms
            .iter()
            .filter(|&&(v, _)| v >= t - tol)
            .map(|&(_, w)| w)
            .sum()
    }

    pub fn max_value(&self) -> f64 {
        self.atoms.last().map(|&(v, _)| v).unwrap_or(0.0)
    }
}

/// P(X(𝔥) ≤ t) for the limit law of the exceptional part.
pub fn xh_law(support: &[(u64, f64)], t: f64) -> Result<f64> {
    Ok(XhLaw::new(support)?.cdf(t))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhFactor {
    pub value: f64,
    /// lower bound v/(e^v − 1) that the value must dominate
    pub lower_bound: f64,
}

/// 𝒫_𝔥(a; v) = v·Σ_{ℓ∈ℤ} e^{v(ℓ+{a})} P(X(𝔥) ≥ ℓ+{a}).
///
/// The terms with ℓ+{a} ≤ 0 have probability 1 and sum to a geometric closed
/// form; the rest is a finite sum since X(𝔥) is bounded.
pub fn p_h_factor(law: &XhLaw, a: f64, v: f64) -> Result<PhFactor> {
    if !(v > 0.0) || v > 8.0 {
        return Err(Error::Domain(format!(
            "p_h_factor needs 0 < v <= 8, got {v}"
        )));
    }
    let fa = a - a.floor(); // {a} ∈ [0, 1)
                            // geometric part: ℓ ≤ (fa == 0 ? 0 : −1), all probabilities equal 1
    let top = if fa == 0.0 { 0.0 } else { fa - 1.0 };
    let mut sum = (v * top).exp() / (-(-v).exp_m1()); // Σ_{ℓ≤ℓ₀} e^{v(ℓ+fa)}
    let start = if fa == 0.0 { 1i64 } else { 0 };
    let x_max = law.max_value();
    let mut l = start;
    loop {
        let point = l as f64 + fa;
        if point > x_max + 1e-12 {
            break;
        }
        let p = law.tail(point);
        if p > 0.0 {
            sum += (v * point).exp() * p;
        }
        l += 1;
    }
    let value = v * sum;
    Ok(PhFactor {
        value,
        lower_bound: v / v.exp_m1(),
    })
}

// ---- Poisson and Lévy comparison tails ----

/// P(N ≥ ⌈λ + Δ√λ⌉) for N ~ Poisson(λ). Direct summation up to λ = 10⁶,
/// regularized incomplete gamma beyond.
pub fn poisson_tail(lambda: f64, delta: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "Poisson mean must be finite and >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        // degenerate law at 0: any positive deviation is impossible
        return Ok(if delta > 0.0 { 0.0 } else { 1.0 });
    }
    let threshold = lambda + delta * lambda.sqrt();
    let k0 = threshold.ceil().max(0.0);
    if k0 == 0.0 {
        return Ok(1.0);
    }
    if lambda > 1e6 {
        // P(N ≥ k) = P(k, λ), the regularized lower incomplete gamma
        return Ok(statrs::function::gamma::gamma_lr(k0, lambda));
    }
    // direct summation from k0, scaled by the peak term so nothing underflows
    let ln_l = lambda.ln();
    let k_peak = lambda.floor().max(k0);
    let ln_peak = -lambda + k_peak * ln_l - ln_gamma(k_peak + 1.0);
    let mut acc = 0.0_f64;
    let mut k = k0;
    let mut ln_term = -lambda + k0 * ln_l - ln_gamma(k0 + 1.0);
    loop {
        acc += (ln_term - ln_peak).exp();
        ln_term += ln_l - (k + 1.0).ln();
        k += 1.0;
        if k > lambda && ln_term - ln_peak < (1e-20 * acc.max(1e-300)).ln() {
            break;
        }
        if k > lambda + 60.0 * lambda.sqrt() + 60.0 {
            break;
        }
    }
    Ok((acc * ln_peak.exp()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LevyMode {
    ExactPoisson,
    Saddle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevyTail {
    pub value: f64,
    pub log_value: f64,
    pub mode: LevyMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

fn psi_integral(psi: &PsiDistribution, z: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    // atoms exactly; continuous pieces by Simpson on each linear knot interval
    let mut acc = KahanSum::new();
    for atom in &psi.atoms {
        acc.add(atom.mass * f(atom.t, z));
    }
    for w in psi.cdf_knots.windows(2) {
        let (t0, f0) = (w[0][0], w[0][1]);
        let (t1, f1) = (w[1][0], w[1][1]);
        let mass = f1 - f0;
        if mass <= 0.0 || t1 <= t0 {
            continue;
        }
        let density = mass / (t1 - t0);
        let n = 64usize;
        let h = (t1 - t0) / n as f64;
        let mut s = f(t0, z) + f(t1, z);
        for i in 1..n {
            let t = t0 + i as f64 * h;
            s += f(t, z) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc.add(density * s * h / 3.0);
    }
    acc.value()
}

/// u(z) = ∫(e^{zt} − zt − 1)t⁻² dΨ(t), with the removable singularity at
/// zt → 0 handled by the Taylor form.
pub fn levy_exponent(psi: &PsiDistribution, z: f64) -> f64 {
    psi_integral(psi, z, |t, z| {
        let e = z * t;
        if e.abs() < 1e-5 {
            z * z / 2.0 * (1.0 + e / 3.0 + e * e / 12.0)
        } else {
            (e.exp_m1() - e) / (t * t)
        }
    })
}

/// u′(z) = ∫(e^{zt} − 1)t⁻¹ dΨ(t).
pub fn levy_exponent_d1(psi: &PsiDistribution, z: f64) -> f64 {
    psi_integral(psi, z, |t, z| {
        let e = z * t;
        if e.abs() < 1e-5 {
            z * (1.0 + e / 2.0 + e * e / 6.0)
        } else {
            e.exp_m1() / t
        }
    })
}

/// Tail P(Z ≥ ΔB) of the centered Lévy process Z with exponent B²u(z).
///
/// EXACT_POISSON requires Ψ = unit atom at 1 (then Z = N − B² for a Poisson N
/// of mean B²). SADDLE evaluates
/// exp(B²u(ρ) − ΔBρ + Δ²/2)·N(Δ) at the saddle B²u′(ρ) = ΔB.
pub fn levy_tail(psi: &PsiDistribution, b2: f64, delta: f64, mode: LevyMode) -> Result<LevyTail> {
    if !(b2 > 0.0) {
        return Err(Error::Domain(format!("B² must be > 0, got {b2}")));
    }
    match mode {
        LevyMode::ExactPoisson => {
            let is_unit_atom = psi.cdf_knots.is_empty()
                && psi.atoms.len() == 1
                && (psi.atoms[0].t - 1.0).abs() <= 1e-12;
            if !is_unit_atom {
                return Err(Error::Domain(
                    "EXACT_POISSON requires the unit-atom value distribution".into(),
                ));
            }
            let value = poisson_tail(b2, delta)?;
            Ok(LevyTail {
                value,
                log_value: value.ln(),
                mode,
                rho: None,
            })
        }
        LevyMode::Saddle => {
            if !(delta >= 0.0) {
                return Err(Error::Domain(format!(
                    "SADDLE mode needs delta >= 0, got {delta}"
                )));
            }
            let b = b2.sqrt();
            let target = delta / b;
            // Newton for u′(ρ) = Δ/B; u″ = Ψ̂ > 0 so the root is unique
            let mut rho = target;
            let mut ok = false;
            for _ in 0..100 {
                let g = levy_exponent_d1(psi, rho) - target;
                if g.abs() <= 1e-13 * target.max(1.0) {
                    ok = true;
                    break;
                }
                let dg = psi.laplace_real(rho, 0)?;
                rho -= g / dg;
                if rho < 0.0 {
                    rho = 0.0;
                }
            }
            if !ok {
                return Err(Error::Numeric(format!(
                    "Levy saddle iteration failed to converge at delta = {delta}"
                )));
            }
            let exponent = b2 * levy_exponent(psi, rho) - delta * b * rho + delta * delta / 2.0;
            let log_value = exponent + normal_tail_ln(delta);
            Ok(LevyTail {
                value: log_value.exp(),
                log_value,
                mode,
                rho: Some(rho),
            })
        }
    }
}

/// Solve Σ f(p)e^{ηf(p)}/p = μ + ΔB for η (the Maciulis tilt parameter).
pub fn eta_param(ens: &BernoulliEnsemble, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let b2 = ens.b2();
    if !(b2 > 0.0) {
        return Err(Error::Domain("degenerate ensemble: B² = 0".into()));
    }
    let target = ens.mu() + delta * b2.sqrt();
    let mut eta = delta / b2.sqrt();
    for _ in 0..200 {
        let mut g = KahanSum::new();
        let mut dg = KahanSum::new();
        for (&p, &w) in ens.primes.iter().zip(&ens.weights) {
            let e = (eta * w).exp() / p as f64;
            g.add(w * e);
            dg.add(w * w * e);
        }
        let resid = g.value() - target;
        if resid.abs() <= 1e-12 * target.abs().max(b2) {
            return Ok(eta);
        }
        eta -= resid / dg.value();
        if eta < 0.0 {
            eta = 0.0;
        }
    }
    Err(Error::Numeric(format!(
        "tilt parameter failed to converge at delta = {delta}"
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaciulisTail {
    pub value: f64,
    pub log_value: f64,
    pub eta: f64,
    pub exponent: f64,
}

/// exp(Σ(e^{ηf} − ηf − 1)/p − η Σ f(e^{ηf} − 1)/p)·e^{Δ²/2}·N(Δ) at the tilt
/// solving the mean equation.
pub fn maciulis_tail(ens: &BernoulliEnsemble, delta: f64) -> Result<MaciulisTail> {
    let eta = eta_param(ens, delta)?;
    let mut s1 = KahanSum::new();
    let mut s2 = KahanSum::new();
    for (&p, &w) in ens.primes.iter().zip(&ens.weights) {
        let e = eta * w;
        let ip = 1.0 / p as f64;
        s1.add((e.exp_m1() - e) * ip);
        s2.add(w * e.exp_m1() * ip);
    }
    let exponent = s1.value() - eta * s2.value();
    let log_value = exponent + delta * delta / 2.0 + normal_tail_ln(delta);
    Ok(MaciulisTail {
        value: log_value.exp(),
        log_value,
        eta,
        exponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psi::PsiDistribution;
    use crate::special::normal_tail;

    fn toy_ensemble() -> BernoulliEnsemble {
        // S = {2, 3}, f ≡ 1
        BernoulliEnsemble::from_parts(vec![2, 3], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn toy_tail_by_hand() {
        // P(sum ≥ 1) = 1 − (1/2)(2/3) = 2/3; P(sum ≥ 2) = (1/2)(1/3) = 1/6
        let ens = toy_ensemble();
        let t1 = exact_tail_dp(&ens, 1.0, 1.0).unwrap().value;
        let t2 = exact_tail_dp(&ens, 2.0, 1.0).unwrap().value;
        assert!((t1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((t2 - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(exact_tail_dp(&ens, 0.0, 1.0).unwrap().value, 1.0);
        assert_eq!(exact_tail_dp(&ens, 2.5, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn dp_matches_subset_enumeration() {
        // random-ish small ensemble: enumerate all 2^k outcomes exactly
        let primes = vec![2u64, 3, 5, 7, 11, 13, 17, 19];
        let weights = vec![0.5, 1.0, 0.25, 0.75, 1.5, 0.5, 1.0, 0.25];
        let ens = BernoulliEnsemble::from_parts(primes.clone(), weights.clone()).unwrap();
        for &t in &[0.3, 0.75, 1.0, 1.6, 2.5, 4.0] {
            let mut exact = 0.0;
            for mask in 0u32..(1 << primes.len()) {
                let mut v = 0.0;
                let mut w = 1.0;
                for i in 0..primes.len() {
                    let ip = 1.0 / primes[i] as f64;
                    if mask >> i & 1 == 1 {
                        v += weights[i];
                        w *= ip;
                    } else {
                        w *= 1.0 - ip;
                    }
                }
                if v >= t - 1e-12 {
                    exact += w;
                }
            }
            let dp = exact_tail_dp(&ens, t, 0.25).unwrap().value;
            assert!((dp - exact).abs() < 1e-12, "t={t}: {dp} vs {exact}");
        }
    }

    #[test]
    fn dp_threshold_is_closed() {
        // threshold exactly on an atom must include it
        let ens = BernoulliEnsemble::from_parts(vec![2], vec![0.7]).unwrap();
        let t = exact_tail_dp(&ens, 0.7, 0.1).unwrap().value;
        assert!((t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dp_snapping_error_reported() {
        let ens = BernoulliEnsemble::from_parts(vec![2], vec![0.7003]).unwrap();
        let est = exact_tail_dp(&ens, 0.5, 0.1).unwrap();
        assert!((est.remainder_bound.unwrap() - 0.0003).abs() < 1e-10);
    }

    #[test]
    fn mgf_matches_dp_distribution() {
        let ens = toy_ensemble();
        let dist = exact_dp_distribution(&ens, 1.0).unwrap();
        for &s in &[-0.5, 0.0, 0.3, 1.0] {
            let direct: f64 = dist
                .iter()
                .enumerate()
                .map(|(j, &w)| w * (s * j as f64).exp())
                .sum();
            let mgf = model_mgf(&ens, s).unwrap();
            assert!((mgf - direct).abs() < 1e-14, "s={s}");
        }
        assert!((model_mgf(&ens, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mgf_overflow_is_range_error() {
        let ens = toy_ensemble();
        assert!(matches!(model_mgf(&ens, 800.0), Err(Error::Range(_))));
    }

    #[test]
    fn mc_agrees_with_dp_within_stderr() {
        let ens = BernoulliEnsemble::from_function(&AdditiveFunction::omega(), 100).unwrap();
        let t = ens.mu() + ens.sigma2().sqrt();
        let dp = exact_tail_dp(&ens, t, 1.0).unwrap().value;
        let mc = mc_tail(&ens, t, 20_000, 12345).unwrap();
        let err = (mc.value - dp).abs();
        assert!(
            err < 4.0 * mc.stderr.unwrap(),
            "err={err} stderr={:?}",
            mc.stderr
        );
    }

    #[test]
    fn mc_is_reproducible_and_seed_sensitive() {
        let ens = toy_ensemble();
        let a = mc_tail(&ens, 1.0, 5000, 42).unwrap();
        let b = mc_tail(&ens, 1.0, 5000, 42).unwrap();
        let c = mc_tail(&ens, 1.0, 5000, 43).unwrap();
        assert_eq!(a.value, b.value);
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn centered_tail_small_case() {
        // x = 10: primes {2,3,5,7}, f = omega, Δ = 1 with σ from the model
        let ens = BernoulliEnsemble::from_function(&AdditiveFunction::omega(), 10).unwrap();
        let (mu, sigma) = (ens.mu(), ens.sigma2().sqrt());
        let est = centered_tail(&ens, mu, sigma, 1.0, TailMethod::Dp { q: 1.0 }).unwrap();
        // threshold = mu + sigma ≈ 1.176 + 0.855 ⇒ need ≥ 2 successes wait
        // recompute independently over the 16 outcomes
        let mut exact = 0.0;
        let t = mu + sigma;
        for mask in 0u32..16 {
            let mut v = 0.0;
            let mut w = 1.0;
            for (i, &p) in [2u64, 3, 5, 7].iter().enumerate() {
                let ip = 1.0 / p as f64;
                if mask >> i & 1 == 1 {
                    v += 1.0;
                    w *= ip;
                } else {
                    w *= 1.0 - ip;
                }
            }
            if v >= t - 1e-12 {
                exact += w;
            }
        }
        assert!((est.value - exact).abs() < 1e-12);
        // negative effective threshold ⇒ probability 1
        let one = centered_tail(&ens, mu, sigma, -10.0, TailMethod::Dp { q: 1.0 }).unwrap();
        assert_eq!(one.value, 1.0);
    }

    #[test]
    fn truncation_stability_union_bound() {
        // dropping primes in (y, y'] changes any tail by at most Σ 1/p over
        // the dropped primes
        let full = BernoulliEnsemble::from_function(&AdditiveFunction::omega(), 200).unwrap();
        let part = BernoulliEnsemble::from_function(&AdditiveFunction::omega(), 50).unwrap();
        let dropped: f64 = full
            .primes()
            .iter()
            .filter(|&&p| p > 50)
            .map(|&p| 1.0 / p as f64)
            .sum();
        for &t in &[1.0, 2.0, 3.0, 4.0] {
            let a = exact_tail_dp(&full, t, 1.0).unwrap().value;
            let b = exact_tail_dp(&part, t, 1.0).unwrap().value;
            assert!((a - b).abs() <= dropped + 1e-13, "t={t}");
        }
    }

    #[test]
    fn xh_law_small_cases() {
        // S = {2}, h(2) = 0.5: P(X ≤ 0.4) = 1/2, P(X ≤ 0.6) = 1
        assert!((xh_law(&[(2, 0.5)], 0.4).unwrap() - 0.5).abs() < 1e-15);
        assert!((xh_law(&[(2, 0.5)], 0.6).unwrap() - 1.0).abs() < 1e-15);
        // empty support: X ≡ 0
        assert_eq!(xh_law(&[], -0.1).unwrap(), 0.0);
        assert_eq!(xh_law(&[], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn xh_law_matches_smooth_number_sum() {
        // independent oracle: ∏(1−1/p)·Σ_{S-smooth n, h(n)≤t} 1/n summed far
        // enough that the truncation error is negligible
        let support = [(2u64, 0.3), (3u64, 0.8)];
        let law = XhLaw::new(&support).unwrap();
        for &t in &[0.1, 0.3, 0.8, 1.0, 1.2] {
            let mut s = 0.0;
            // n = 2^a 3^b; h(n) = 0.3·[a>0] + 0.8·[b>0]
            for a in 0..40u32 {
                for b in 0..25u32 {
                    let h = if a > 0 { 0.3 } else { 0.0 } + if b > 0 { 0.8 } else { 0.0 };
                    if h <= t + 1e-12 {
                        s += 1.0 / (2f64.powi(a as i32) * 3f64.powi(b as i32));
                    }
                }
            }
            let oracle = 0.5 * (2.0 / 3.0) * s;
            let got = law.cdf(t);
            assert!((got - oracle).abs() < 1e-10, "t={t}: {got} vs {oracle}");
        }
    }

    #[test]
    fn xh_law_support_cap() {
        let support: Vec<(u64, f64)> = [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41]
            .iter()
            .map(|&p| (p, 0.1))
            .collect();
        assert!(matches!(XhLaw::new(&support), Err(Error::Resource(_))));
    }

    #[test]
    fn p_h_closed_forms() {
        // h ≡ 0 (empty support): {a} = 0 gives v·e^v/(e^v−1), {a} > 0 gives
        // v·e^{v{a}}/(e^v−1)
        let law = XhLaw::new(&[]).unwrap();
        for &v in &[0.25, 1.0, 3.0] {
            let p0 = p_h_factor(&law, 2.0, v).unwrap().value;
            assert!((p0 - v * v.exp() / v.exp_m1()).abs() < 1e-12, "v={v}");
            let pa = p_h_factor(&law, 2.3, v).unwrap().value;
            assert!(
                (pa - v * (v * 0.3).exp() / v.exp_m1()).abs() < 1e-12,
                "v={v}"
            );
        }
    }

    #[test]
    fn p_h_periodic_and_bounded_below() {
        let law = XhLaw::new(&[(2, 0.4), (5, 0.9)]).unwrap();
        for &v in &[0.5, 1.5, 4.0] {
            for &a in &[0.0, 0.2, 0.77, 1.9] {
                let x = p_h_factor(&law, a, v).unwrap();
                let y = p_h_factor(&law, a + 3.0, v).unwrap();
                assert!((x.value - y.value).abs() < 1e-12);
                assert!(x.value >= x.lower_bound - 1e-12);
            }
        }
    }

    #[test]
    fn p_h_rejects_bad_v() {
        let law = XhLaw::new(&[]).unwrap();
        assert!(p_h_factor(&law, 0.0, 0.0).is_err());
        assert!(p_h_factor(&law, 0.0, 9.0).is_err());
    }

    #[test]
    fn split_gh_frac_function() {
        // values {αp} for α = 1/3 lie on the lattice (1/3)ℤ except nothing;
        // against span 1/3 everything is lattice
        let f = AdditiveFunction::frac_alpha(1, 3).unwrap();
        let s = split_gh(&f, 30, 1.0 / 3.0, 1e-9).unwrap();
        assert!(s.support.is_empty());
        // against span 1 the odd residues are exceptional
        let s1 = split_gh(&f, 30, 1.0, 1e-9).unwrap();
        assert!(!s1.support.is_empty());
        for &p in &s1.support {
            assert!(f.eval_prime(p).unwrap().fract().abs() > 1e-9);
        }
        // g + h = f on every prime
        for &p in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29] {
            let g = s1.g_part.eval_prime(p).unwrap();
            let h = s1.h_part.eval_prime(p).unwrap();
            assert!((g + h - f.eval_prime(p).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_tail_examples() {
        // λ = 4, Δ = 0: P(N ≥ 4) = 1 − e⁻⁴(1 + 4 + 8 + 32/3)
        let direct = 1.0 - (-4.0f64).exp() * (1.0 + 4.0 + 8.0 + 32.0 / 3.0);
        assert!((poisson_tail(4.0, 0.0).unwrap() - direct).abs() < 1e-12);
        assert_eq!(poisson_tail(0.0, 1.0).unwrap(), 0.0);
        assert!((poisson_tail(5.0, -100.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn poisson_direct_vs_incomplete_gamma() {
        for &lambda in &[2.0, 17.5, 400.0, 12345.0] {
            for &delta in &[-1.0, 0.0, 0.5, 2.0, 4.0] {
                let direct = poisson_tail(lambda, delta).unwrap();
                let k0 = (lambda + delta * lambda.sqrt()).ceil().max(0.0);
                let via_gamma = if k0 == 0.0 {
                    1.0
                } else {
                    statrs::function::gamma::gamma_lr(k0, lambda)
                };
                assert!(
                    (direct - via_gamma).abs() < 1e-10,
                    "λ={lambda} Δ={delta}: {direct} vs {via_gamma}"
                );
            }
        }
    }

    #[test]
    fn levy_exact_poisson_requires_unit_atom() {
        let psi = PsiDistribution::from_atoms(vec![(0.5, 1.0)]).unwrap();
        assert!(levy_tail(&psi, 4.0, 1.0, LevyMode::ExactPoisson).is_err());
    }

    #[test]
    fn levy_saddle_unit_atom_closed_form() {
        // ρ = log(1 + Δ/B) and the exponent has the Poisson Cramér form
        let psi = PsiDistribution::atom_at(1.0);
        let (b2, delta) = (25.0f64, 2.0f64);
        let b = b2.sqrt();
        let got = levy_tail(&psi, b2, delta, LevyMode::Saddle).unwrap();
        let rho = (1.0 + delta / b).ln();
        assert!((got.rho.unwrap() - rho).abs() < 1e-12);
        let exponent = b2 * (rho.exp() - rho - 1.0) - delta * b * rho + delta * delta / 2.0;
        let expect = exponent.exp() * normal_tail(delta);
        assert!((got.value - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn levy_saddle_delta_zero_is_half() {
        let psi = PsiDistribution::atom_at(1.0);
        let got = levy_tail(&psi, 10.0, 0.0, LevyMode::Saddle).unwrap();
        assert!((got.value - 0.5).abs() < 1e-14);
    }

    #[test]
    fn levy_saddle_close_to_exact_at_moderate_b2() {
        let psi = PsiDistribution::atom_at(1.0);
        for &delta in &[0.5, 1.0, 2.0] {
            let exact = levy_tail(&psi, 50.0, delta, LevyMode::ExactPoisson)
                .unwrap()
                .value;
            let saddle = levy_tail(&psi, 50.0, delta, LevyMode::Saddle)
                .unwrap()
                .value;
            let ratio = saddle / exact;
            assert!((0.85..=1.15).contains(&ratio), "Δ={delta}: ratio {ratio}");
        }
    }

    #[test]
    fn eta_closed_form_for_omega() {
        let ens = BernoulliEnsemble::from_function(&AdditiveFunction::omega(), 10_000).unwrap();
        let b = ens.b2().sqrt();
        for &delta in &[0.5, 1.0, 2.0] {
            let eta = eta_param(&ens, delta).unwrap();
            assert!((eta - (1.0 + delta / b).ln()).abs() < 1e-10, "Δ={delta}");
        }
        assert_eq!(eta_param(&ens, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn maciulis_small_delta_is_normal() {
        let ens = BernoulliEnsemble::from_function(&AdditiveFunction::omega(), 10_000).unwrap();
        let t = maciulis_tail(&ens, 1e-6).unwrap();
        assert!((t.value - 0.5).abs() < 1e-5);
    }

    #[test]
    fn counter_rng_is_uniformish() {
        let n = 100_000u64;
        let mut mean = 0.0;
        for i in 0..n {
            mean += counter_u01(7, i, 3);
        }
        mean /= n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }
}
