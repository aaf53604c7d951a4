//! Coefficient recursions λ_f(x;k) and Λ(Ψ;k), power-series reversion, the
//! series form of the model tail, and the B ↔ σ normalization transfer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BernoulliEnsemble;
use crate::psi::PsiDistribution;
use crate::special::{normal_tail, KahanSum};

pub const MAX_K: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CoefficientKind {
    LambdaF,
    LambdaPsi,
}

/// λ₀..λ_K with λ₀ = 0, λ₁ = 1 and an empirical growth bound
/// sup_k |λ_k|^{1/k}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub kind: CoefficientKind,
    #[serde(rename = "K")]
    pub k_max: usize,
    pub values: Vec<f64>,
    pub growth_estimate: f64,
}

impl CoefficientVector {
    fn new(kind: CoefficientKind, values: Vec<f64>) -> Self {
        let growth_estimate = values
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, &v)| v.abs().powf(1.0 / k as f64))
            .fold(0.0_f64, f64::max);
        Self {
            kind,
            k_max: values.len() - 1,
            values,
            growth_estimate,
        }
    }
}

// ---- dense truncated power-series helpers (index = degree) ----

/// c = a·b truncated at degree k_max.
pub fn series_mul(a: &[f64], b: &[f64], k_max: usize) -> Vec<f64> {
    let mut c = vec![0.0; k_max + 1];
    for (i, &ai) in a.iter().enumerate().take(k_max + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(k_max + 1 - i) {
            c[i + j] += ai * bj;
        }
    }
    c
}

/// a(b(z)) truncated at degree k_max; requires b(0) = 0.
pub fn series_compose(a: &[f64], b: &[f64], k_max: usize) -> Vec<f64> {
    assert!(
        b.first().copied().unwrap_or(0.0) == 0.0,
        "inner series must vanish at 0"
    );
    let mut out = vec![0.0; k_max + 1];
    out[0] = a.first().copied().unwrap_or(0.0);
    let mut pow = vec![0.0; k_max + 1];
    pow[0] = 1.0;
    for &ai in a.iter().skip(1).take(k_max) {
        pow = series_mul(&pow, b, k_max);
        if ai != 0.0 {
            for (o, &p) in out.iter_mut().zip(&pow) {
                *o += ai * p;
            }
        }
    }
    out
}

/// Compositional inverse of a series with zero constant term and unit linear
/// term: returns g with f(g(z)) = z through degree k_max.
pub fn series_revert(f: &[f64], k_max: usize) -> Result<Vec<f64>> {
    if f.first().copied().unwrap_or(0.0) != 0.0 {
        return Err(Error::Domain(
            "reversion requires zero constant term".into(),
        ));
    }
    let lin = f.get(1).copied().unwrap_or(0.0);
    if lin == 0.0 {
        return Err(Error::Domain(
            "reversion requires nonzero linear coefficient".into(),
        ));
    }
    // normalize to unit linear term: f(z) = lin·F(z), g(z) = G(z/lin)
    let fn_: Vec<f64> = f.iter().map(|&c| c / lin).collect();
    let mut g = vec![0.0; k_max + 1];
    if k_max >= 1 {
        g[1] = 1.0;
    }
    for n in 2..=k_max {
        // coefficient of z^n in F(g(z)) must vanish; with g_n unknown it enters
        // linearly through the F₁·g_n term.
        let comp = series_compose(&fn_, &g, n);
        g[n] = -comp[n];
    }
    // undo the normalization: g(z) = G(z/lin)/1 … F(g)=z/lin ⇒ f(g)=z needs g(z)=G(z/lin)
    let mut scale = 1.0;
    for gv in g.iter_mut().skip(1) {
        *gv /= scale * lin;
        scale *= lin;
    }
    Ok(g)
}

/// Classical reversion of u′ given by its coefficients (u′₀ = 0, u′₁ = 1 after
/// normalization): independent oracle path for the Λ recursions.
pub fn reversion_oracle(u_prime: &[f64], k_max: usize) -> Result<Vec<f64>> {
    series_revert(u_prime, k_max)
}

/// ℳ_f(x;ℓ) = B⁻² Σ_{p≤x} f(p)^{ℓ+2}/p for ℓ = 0..l_max; ℳ(0) = 1 exactly.
pub fn moment_sequence(ens: &BernoulliEnsemble, l_max: usize) -> Result<Vec<f64>> {
    if l_max > MAX_K {
        return Err(Error::Domain(format!(
            "moment order {l_max} exceeds {MAX_K}"
        )));
    }
    let b2 = ens.b2();
    if !(b2 > 0.0) {
        return Err(Error::Domain("degenerate ensemble: B² = 0".into()));
    }
    let mut out = Vec::with_capacity(l_max + 1);
    for l in 0..=l_max {
        if l == 0 {
            out.push(1.0);
            continue;
        }
        let mut acc = KahanSum::new();
        for (&p, &w) in ens.primes().iter().zip(ens.weights()) {
            acc.add(w.powi(l as i32 + 2) / p as f64);
        }
        out.push(acc.value() / b2);
    }
    Ok(out)
}

/// Shared recursion: λ_j = −Σ_{i=2..j} c_i Σ_{k₁+…+k_i=j} λ_{k₁}…λ_{k_i}
/// where c_i is (1/i!)·(B⁻²Σf^{i+1}/p) or (1/ℓ!)·∫t^{ℓ−1}dΨ.
fn lambda_recursion(coef: impl Fn(usize) -> f64, k_max: usize) -> Vec<f64> {
    let mut lam = vec![0.0; k_max + 1];
    if k_max >= 1 {
        lam[1] = 1.0;
    }
    // powers[i] holds the coefficients of (Σ λ_k z^k)^i, maintained truncated.
    for j in 2..=k_max {
        let mut total = 0.0;
        let mut pow = lam.clone(); // power 1
        for i in 2..=j {
            pow = series_mul(&pow, &lam, k_max);
            total += coef(i) * pow[j];
        }
        lam[j] = -total;
    }
    lam
}

/// Coefficients λ_f(x;k) of the large-deviation series for 𝒟_f^×.
pub fn lambda_f(ens: &BernoulliEnsemble, k_max: usize) -> Result<CoefficientVector> {
    if k_max > MAX_K {
        return Err(Error::Domain(format!("K={k_max} exceeds the cap {MAX_K}")));
    }
    let moments = moment_sequence(ens, k_max)?;
    let mut fact = vec![1.0; k_max + 2];
    for i in 1..fact.len() {
        fact[i] = fact[i - 1] * i as f64;
    }
    // B⁻²Σ f^{i+1}/p = ℳ(i−1)
    let lam = lambda_recursion(|i| moments[i - 1] / fact[i], k_max);
    Ok(CoefficientVector::new(CoefficientKind::LambdaF, lam))
}

/// Coefficients Λ(Ψ;k): the same recursion with prime sums replaced by the
/// moments ∫t^{ℓ−1}dΨ.
pub fn lambda_psi(psi: &PsiDistribution, k_max: usize) -> Result<CoefficientVector> {
    if k_max > MAX_K {
        return Err(Error::Domain(format!("K={k_max} exceeds the cap {MAX_K}")));
    }
    let mut fact = vec![1.0; k_max + 2];
    for i in 1..fact.len() {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut moments = Vec::with_capacity(k_max + 1);
    for l in 0..=k_max {
        moments.push(psi.moment(l as u32)?);
    }
    let lam = lambda_recursion(|i| moments[i - 1] / fact[i], k_max);
    Ok(CoefficientVector::new(CoefficientKind::LambdaPsi, lam))
}

/// Series tail exp(−(Δ³/B)·Σ_{k≤K} (λ_{k+2}/(k+3))(Δ/B)ᵏ) · N(Δ) together
/// with the geometric truncation bound on the dropped terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesTail {
    pub value: f64,
    pub exponent: f64,
    pub remainder_bound: f64,
}

pub fn series_tail(coeffs: &CoefficientVector, b: f64, delta: f64) -> Result<SeriesTail> {
    let c = coeffs.growth_estimate.max(1.0);
    let ratio = delta / b;
    if !(ratio >= 0.0) || ratio > 1.0 / (2.0 * c) {
        return Err(Error::Domain(format!(
            "delta/B = {ratio} outside the series radius 1/(2C) with C = {c}"
        )));
    }
    let k_top = coeffs.values.len().saturating_sub(3);
    let mut sum = 0.0;
    for k in (0..=k_top).rev() {
        sum = sum * ratio + coeffs.values[k + 2] / (k as f64 + 3.0);
    }
    let exponent = -(delta.powi(3) / b) * sum;
    // dropped terms bounded by the geometric tail of (C·Δ/B)^k
    let q = c * ratio;
    let remainder = (delta.powi(3) / b) * q.powi(k_top as i32 + 1) / (1.0 - q);
    Ok(SeriesTail {
        value: exponent.exp() * normal_tail(delta),
        exponent,
        remainder_bound: remainder,
    })
}

/// Inputs for comparing B-normalized and σ-normalized tails (the transfer of
/// Lemma-style rescaling): the exact count identity plus the two series
/// evaluations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferCheck {
    pub delta: f64,
    /// Δ·B/σ: the σ-normalized deviation that selects the same set of n.
    pub delta_sigma_equivalent: f64,
    pub series_b: f64,
    pub series_sigma: f64,
    pub ratio: f64,
}

/// Compare series_tail at scale B with the same tail re-expressed at scale σ.
/// The underlying counting sets are literally identical: f(n) ≥ μ + ΔB is
/// f(n) ≥ μ + (ΔB/σ)·σ.
pub fn transfer_check(
    coeffs: &CoefficientVector,
    b: f64,
    sigma: f64,
    delta: f64,
) -> Result<TransferCheck> {
    let delta_sigma = delta * b / sigma;
    let tb = series_tail(coeffs, b, delta)?;
    let ts = series_tail(coeffs, sigma, delta_sigma)?;
    Ok(TransferCheck {
        delta,
        delta_sigma_equivalent: delta_sigma,
        series_b: tb.value,
        series_sigma: ts.value,
        ratio: tb.value / ts.value,
    })
}
