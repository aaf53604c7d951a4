//! Saddle-point machinery: the tilt ω(z), the shape factor S, the Euler
//! product L, the centering constant c(f), and the assembled tail predictions.

use serde::{Deserialize, Serialize};

use crate::additive::AdditiveFunction;
use crate::error::{Error, Result};
use crate::psi::PsiDistribution;
use crate::series::{series_compose, series_revert};
use crate::sieve::for_each_prime;
use crate::special::{gamma, normal_tail_ln, KahanSum, EULER_GAMMA};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaSolve {
    pub z: f64,
    pub omega: f64,
    pub iterations: u32,
    /// |Ψ̂′(ω) − Ψ̂′(0) − z·Ψ̂″(0)| at the accepted root
    pub residual: f64,
}

/// Solve Ψ̂′(ω) = Ψ̂′(0) + z·Ψ̂″(0). The left side is strictly increasing and
/// convex, so a bracketed Newton iteration is globally safe.
pub fn solve_omega(psi: &PsiDistribution, z: f64) -> Result<OmegaSolve> {
    let d1_0 = psi.laplace_real(0.0, 1)?;
    let d2_0 = psi.laplace_real(0.0, 2)?;
    if !(d2_0 > 0.0) {
        return Err(Error::Domain(
            "degenerate value distribution: Ψ̂″(0) = 0".into(),
        ));
    }
    let target = d1_0 + z * d2_0;
    if !(target > 0.0) {
        return Err(Error::Domain(format!(
            "no tilt solves the saddle equation at z = {z}: target slope {target} <= 0"
        )));
    }
    if z == 0.0 {
        return Ok(OmegaSolve {
            z,
            omega: 0.0,
            iterations: 0,
            residual: 0.0,
        });
    }
    let tol = 1e-13 * d2_0.max(target.abs());
    // bracket the root
    let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
    if z > 0.0 {
        hi = 1.0;
        while psi.laplace_real(hi, 1)? < target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e4 {
                return Err(Error::Numeric(format!(
                    "tilt bracket exceeded 1e4 at z = {z}"
                )));
            }
        }
    } else {
        lo = -1.0;
        while psi.laplace_real(lo, 1)? > target {
            hi = lo;
            lo *= 2.0;
            if lo < -1e6 {
                return Err(Error::Numeric(format!(
                    "tilt bracket exceeded -1e6 at z = {z}"
                )));
            }
        }
    }
    let mut w = 0.5 * (lo + hi);
    for it in 0..200 {
        let g = psi.laplace_real(w, 1)? - target;
        if g.abs() <= tol {
            return Ok(OmegaSolve {
                z,
                omega: w,
                iterations: it,
                residual: g.abs(),
            });
        }
        if g > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let dg = psi.laplace_real(w, 2)?;
        let step = w - g / dg;
        w = if step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Numeric(format!(
        "tilt iteration failed to converge at z = {z}"
    )))
}

/// The saddle point v = ω(Δ/σ_Ψ) with the transform values needed downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub delta: f64,
    /// normalized deviation Δ/σ_Ψ
    pub z: f64,
    pub v: f64,
    pub sigma_psi: f64,
    pub loglog_x: f64,
    pub psi_hat: f64,
    pub psi_hat_d1: f64,
    pub psi_hat_d2: f64,
    pub iterations: u32,
    pub residual: f64,
}

pub fn v_param(psi: &PsiDistribution, x: f64, delta: f64) -> Result<SaddleSolution> {
    if !(x >= 16.0) {
        return Err(Error::Domain(format!(
            "x must be >= 16 so loglog x >= 1, got {x}"
        )));
    }
    let loglog_x = x.ln().ln();
    let d2_0 = psi.laplace_real(0.0, 2)?;
    let sigma_psi = (d2_0 * loglog_x).sqrt();
    let z = delta / sigma_psi;
    let sol = solve_omega(psi, z)?;
    Ok(SaddleSolution {
        delta,
        z,
        v: sol.omega,
        sigma_psi,
        loglog_x,
        psi_hat: psi.laplace_real(sol.omega, 0)?,
        psi_hat_d1: psi.laplace_real(sol.omega, 1)?,
        psi_hat_d2: psi.laplace_real(sol.omega, 2)?,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SFactor {
    pub log_value: f64,
    pub value: Option<f64>,
    pub saddle: SaddleSolution,
}

/// S(x;Δ) = (log x)^{Ψ̂(v)−1−vΨ̂′(v)} / (v·√(2π·Ψ̂″(v)·loglog x)), in log
/// space; `value` is populated when the exponential is representable.
pub fn s_formula(psi: &PsiDistribution, x: f64, delta: f64) -> Result<SFactor> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!(
            "S factor needs delta > 0, got {delta}"
        )));
    }
    let s = v_param(psi, x, delta)?;
    let a = s.psi_hat - 1.0 - s.v * s.psi_hat_d1;
    let log_value = a * x.ln().ln()
        - s.v.ln()
        - 0.5 * (2.0 * std::f64::consts::PI * s.psi_hat_d2 * s.loglog_x).ln();
    let value = if log_value.abs() < 700.0 {
        Some(log_value.exp())
    } else {
        None
    };
    Ok(SFactor {
        log_value,
        value,
        saddle: s,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LProduct {
    pub z: f64,
    pub p_limit: u64,
    pub log_value: f64,
    pub value: f64,
    /// crude Richardson estimate of the dropped log-tail (1/log p decay model)
    pub tail_estimate: f64,
}

/// L(f;z) = ∏_{p ≤ P} (1−1/p)^{Ψ̂(z)} (1 + e^{z f(p)}/(p−1)).
pub fn l_product(
    f: &AdditiveFunction,
    psi: &PsiDistribution,
    z: f64,
    p_limit: u64,
) -> Result<LProduct> {
    if p_limit < 100 {
        return Err(Error::Domain(format!(
            "prime cutoff {p_limit} too small for the product"
        )));
    }
    if z == 0.0 {
        // every factor is (1−1/p)·(1 + 1/(p−1)) = 1 identically
        return Ok(LProduct {
            z,
            p_limit,
            log_value: 0.0,
            value: 1.0,
            tail_estimate: 0.0,
        });
    }
    let psi_z = psi.laplace_real(z, 0)?;
    let mut acc = KahanSum::new();
    let mut half_sum = 0.0;
    let half = p_limit / 2;
    let mut bad: Option<Error> = None;
    for_each_prime(p_limit, 1 << 20, |p| {
        if bad.is_some() {
            return;
        }
        let w = match f.eval_prime(p) {
            Ok(w) => w,
            Err(e) => {
                bad = Some(e);
                return;
            }
        };
        let e = z * w;
        if e > 700.0 {
            bad = Some(Error::Range(format!("e^(z f(p)) overflows at p = {p}")));
            return;
        }
        if p > half && half_sum == 0.0 {
            half_sum = acc.value();
        }
        acc.add(psi_z * (-1.0 / p as f64).ln_1p());
        acc.add((e.exp() / (p as f64 - 1.0)).ln_1p());
    })?;
    if let Some(e) = bad {
        return Err(e);
    }
    let log_value = acc.value();
    // model the partial-sum error as C/log P and extrapolate from the halves
    let diff = log_value - half_sum;
    let tail_estimate = (diff * (half as f64).ln() / 2f64.ln()).abs();
    Ok(LProduct {
        z,
        p_limit,
        log_value,
        value: log_value.exp(),
        tail_estimate,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constants {
    /// c(f) ≈ μ(f;x) − Ψ̂′(0)·loglog x, read off at the largest grid point
    pub c: f64,
    /// spread of the estimates over the top half of the grid
    pub uncertainty: f64,
    pub estimates: Vec<(u64, f64)>,
}

/// Estimate the centering constant by one streaming pass over the primes with
/// snapshots at each grid point.
pub fn c_constant(f: &AdditiveFunction, psi: &PsiDistribution, grid: &[u64]) -> Result<Constants> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "grid must be nonempty and strictly ascending".into(),
        ));
    }
    if grid[0] < 16 {
        return Err(Error::Domain("grid points must be >= 16".into()));
    }
    let d1_0 = psi.laplace_real(0.0, 1)?;
    let x_max = *grid.last().unwrap();
    let mut mu = KahanSum::new();
    let mut estimates = Vec::with_capacity(grid.len());
    let mut next = 0usize;
    let mut bad: Option<Error> = None;
    for_each_prime(x_max, 1 << 22, |p| {
        if bad.is_some() {
            return;
        }
        while next < grid.len() && p > grid[next] {
            let x = grid[next] as f64;
            estimates.push((grid[next], mu.value() - d1_0 * x.ln().ln()));
            next += 1;
        }
        match f.eval_prime(p) {
            Ok(w) => mu.add(w / p as f64),
            Err(e) => bad = Some(e),
        }
    })?;
    if let Some(e) = bad {
        return Err(e);
    }
    while next < grid.len() {
        let x = grid[next] as f64;
        estimates.push((grid[next], mu.value() - d1_0 * x.ln().ln()));
        next += 1;
    }
    let top = &estimates[estimates.len() / 2..];
    let c = estimates.last().unwrap().1;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, e) in top {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    Ok(Constants {
        c,
        uncertainty: hi - lo,
        estimates,
    })
}

/// A(z) = e^{−γ(Ψ̂(ω(z))−1)} / Γ(Ψ̂(ω(z))), the Poisson-type correction.
pub fn a_factor(psi: &PsiDistribution, z: f64) -> Result<f64> {
    let w = solve_omega(psi, z)?.omega;
    let psi_hat = psi.laplace_real(w, 0)?;
    Ok((-EULER_GAMMA * (psi_hat - 1.0)).exp() / gamma(psi_hat))
}

/// Taylor coefficients a_0..a_K of ℰ(z) = Ψ̂(ω(z)) − 1 − ω(z)Ψ̂′(ω(z)), the
/// exponent of the shape factor as a function of the normalized deviation.
/// a_0 = a_1 = 0 and a_2 = −Ψ̂″(0)/2.
pub fn exponent_series(psi: &PsiDistribution, k_max: usize) -> Result<Vec<f64>> {
    if k_max > 32 {
        return Err(Error::Domain(format!("series order {k_max} exceeds 32")));
    }
    let mut fact = vec![1.0_f64; k_max + 2];
    for i in 1..fact.len() {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut m = Vec::with_capacity(k_max + 2);
    for k in 0..=(k_max as u32 + 1) {
        m.push(psi.moment(k)?);
    }
    if !(m[2] > 0.0) {
        return Err(Error::Domain(
            "degenerate value distribution: Ψ̂″(0) = 0".into(),
        ));
    }
    // z = φ(ω) with φ_k = m_{k+1}/(m₂ k!) ⇒ ω(z) = φ⁻¹(z)
    let mut phi = vec![0.0; k_max + 1];
    for k in 1..=k_max {
        phi[k] = m[k + 1] / (m[2] * fact[k]);
    }
    let omega = series_revert(&phi, k_max)?;
    // A(v) = Σ_k m_k (1−k) v^k / k!
    let mut a = vec![0.0; k_max + 1];
    for k in 2..=k_max {
        a[k] = m[k] * (1.0 - k as f64) / fact[k];
    }
    let mut out = series_compose(&a, &omega, k_max);
    out[0] = 0.0;
    if k_max >= 1 {
        out[1] = 0.0;
    }
    Ok(out)
}

/// ϱ(α) = ⌈(1+α)/(1−α)⌉, the number of matched moments needed for tail
/// equivalence down to deviations of size (loglog x)^α.
pub fn rho_alpha(alpha: f64) -> Result<u32> {
    if !(alpha > 1.0 / 3.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (1/3, 1), got {alpha}"
        )));
    }
    // nudge below the exact ratio so representable integer ratios do not get
    // bumped up by rounding (e.g. α = 0.6 ⇒ 4.000000000000001)
    Ok(((1.0 + alpha) / (1.0 - alpha) - 1e-9).ceil() as u32)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentEquivalence {
    pub equivalent: bool,
    /// highest moment compared, ϱ(α)
    pub order: u32,
    pub max_discrepancy: f64,
    pub first_failure: Option<u32>,
}

/// Compare moments 3..ϱ(α) of two value distributions with matching second
/// moments; matching through ϱ(α) makes their saddle tails agree at depth α.
pub fn moment_equivalence(
    a: &PsiDistribution,
    b: &PsiDistribution,
    alpha: f64,
    tol: f64,
) -> Result<MomentEquivalence> {
    let order = rho_alpha(alpha)?;
    let (m2a, m2b) = (a.second_moment(), b.second_moment());
    if (m2a - m2b).abs() > 1e-12 * m2a.abs().max(1.0) {
        return Err(Error::Domain(format!(
            "second moments must already match: {m2a} vs {m2b}"
        )));
    }
    let mut max_disc = 0.0_f64;
    let mut first_failure = None;
    for k in 3..=order {
        let (ma, mb) = (a.moment(k)?, b.moment(k)?);
        let disc = (ma - mb).abs() / ma.abs().max(1.0);
        max_disc = max_disc.max(disc);
        if disc > tol && first_failure.is_none() {
            first_failure = Some(k);
        }
    }
    Ok(MomentEquivalence {
        equivalent: first_failure.is_none(),
        order,
        max_discrepancy: max_disc,
        first_failure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Level {
    Normal,
    SOnly,
    Full,
}

/// Ingredients the full prediction needs beyond Ψ: the Euler product at the
/// saddle, the centering constant, and (lattice case) the periodic factor.
#[derive(Debug, Clone, Copy)]
pub struct FullInputs {
    pub l_value: f64,
    pub c: f64,
    pub p_h: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Factors {
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exp_minus_vc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inv_gamma: Option<f64>,
    #[serde(rename = "P_h", skip_serializing_if = "Option::is_none")]
    pub p_h: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailPrediction {
    pub delta: f64,
    pub v: f64,
    pub regime: String,
    pub log_prediction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<f64>,
    pub factors: Factors,
}

/// Assemble the tail prediction at the requested level:
/// NORMAL is the plain Gaussian tail, S_ONLY the shape factor alone, FULL the
/// shape factor times L·e^{−vc}/Γ(Ψ̂(v)) (times 𝒫_𝔥 in the lattice case).
pub fn tail_asymptotic(
    psi: &PsiDistribution,
    x: f64,
    delta: f64,
    level: Level,
    full: Option<&FullInputs>,
) -> Result<TailPrediction> {
    let loglog_x = if x >= 16.0 {
        x.ln().ln()
    } else {
        return Err(Error::Domain(format!("x must be >= 16, got {x}")));
    };
    let empty = Factors {
        l: None,
        exp_minus_vc: None,
        inv_gamma: None,
        p_h: None,
    };
    match level {
        Level::Normal => {
            let regime = if delta <= loglog_x.powf(1.0 / 6.0) {
                "NORMAL"
            } else {
                "EXTRAPOLATED"
            };
            let log_prediction = normal_tail_ln(delta);
            Ok(TailPrediction {
                delta,
                v: 0.0,
                regime: regime.into(),
                log_prediction,
                prediction: Some(log_prediction.exp()),
                factors: empty,
            })
        }
        Level::SOnly => {
            let s = s_formula(psi, x, delta)?;
            let regime = if delta <= 0.5 * s.saddle.sigma_psi {
                "SADDLE"
            } else {
                "EXTRAPOLATED"
            };
            Ok(TailPrediction {
                delta,
                v: s.saddle.v,
                regime: regime.into(),
                log_prediction: s.log_value,
                prediction: s.value,
                factors: empty,
            })
        }
        Level::Full => {
            let inputs = full.ok_or_else(|| {
                Error::Config("FULL level requires L, c and (lattice) P_h inputs".into())
            })?;
            let lattice = psi.lattice_detect(1e-9)?.is_lattice;
            if lattice && inputs.p_h.is_none() {
                return Err(Error::Config(
                    "lattice value distribution: FULL level requires the periodic factor".into(),
                ));
            }
            if !(inputs.l_value > 0.0) {
                return Err(Error::Domain(format!(
                    "Euler-product value must be > 0, got {}",
                    inputs.l_value
                )));
            }
            let s = s_formula(psi, x, delta)?;
            let v = s.saddle.v;
            let inv_gamma = 1.0 / gamma(s.saddle.psi_hat);
            let exp_minus_vc = (-v * inputs.c).exp();
            let mut log_prediction =
                s.log_value + inputs.l_value.ln() - v * inputs.c + inv_gamma.ln();
            if let Some(ph) = inputs.p_h {
                if !(ph > 0.0) {
                    return Err(Error::Domain(format!(
                        "periodic factor must be > 0, got {ph}"
                    )));
                }
                log_prediction += ph.ln();
            }
            let regime = if delta <= 0.5 * s.saddle.sigma_psi {
                "SADDLE"
            } else {
                "EXTRAPOLATED"
            };
            let prediction = if log_prediction.abs() < 700.0 {
                Some(log_prediction.exp())
            } else {
                None
            };
            Ok(TailPrediction {
                delta,
                v,
                regime: regime.into(),
                log_prediction,
                prediction,
                factors: Factors {
                    l: Some(inputs.l_value),
                    exp_minus_vc: Some(exp_minus_vc),
                    inv_gamma: Some(inv_gamma),
                    p_h: inputs.p_h,
                },
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiThreshold {
    /// actual counting threshold μ(f;x) + Δσ(f;x)
    pub xi: f64,
    /// model surrogate Ψ̂′(v)·loglog x + c
    pub surrogate: f64,
    pub difference: f64,
    pub v: f64,
}

/// Compare the empirical counting threshold with the saddle surrogate that
/// the asymptotic formula actually tracks.
pub fn xi_threshold(
    psi: &PsiDistribution,
    mu: f64,
    sigma: f64,
    x: f64,
    delta: f64,
    c: f64,
) -> Result<XiThreshold> {
    let s = v_param(psi, x, delta)?;
    let xi = mu + delta * sigma;
    let surrogate = s.psi_hat_d1 * s.loglog_x + c;
    Ok(XiThreshold {
        xi,
        surrogate,
        difference: xi - surrogate,
        v: s.v,
    })
}
