//! Scalar special functions and compensated summation used throughout the crate.

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.5772156649015329;

/// Kahan compensated accumulator. All prime sums are accumulated through this
/// in a fixed (ascending p) order so outputs are bit-stable.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

// Lanczos coefficients, g = 607/128, 15 terms.
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    3.399_464_998_481_189e-5,
    4.652_362_892_704_858e-5,
    -9.837_447_530_487_956e-5,
    1.580_887_032_249_125e-4,
    -2.102_644_417_241_048_8e-4,
    2.174_396_181_152_126_5e-4,
    -1.643_181_065_367_639e-4,
    8.441_822_398_385_275e-5,
    -2.619_083_840_158_140_8e-5,
    3.689_918_265_953_162_5e-6,
];

/// log Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut series = LANCZOS[0];
    for (k, &c) in LANCZOS.iter().enumerate().skip(1) {
        series += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + series.ln()
}

/// Γ(x), Lanczos for x ≥ 0.5 and reflection below.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        ln_gamma(x).exp()
    }
}

/// Upper tail of the standard normal: ∫_Δ^∞ e^{−u²/2} du / √(2π).
pub fn normal_tail(delta: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(delta / std::f64::consts::SQRT_2)
}

/// log of `normal_tail`, stable for large Δ (asymptotic continued fraction).
pub fn normal_tail_ln(delta: f64) -> f64 {
    if delta < 30.0 {
        return normal_tail(delta).ln();
    }
    // Mills ratio continued fraction: N(Δ) = φ(Δ)/Δ · (1 − 1/Δ² + 3/Δ⁴ − …)
    let d2 = delta * delta;
    let corr = 1.0 - 1.0 / d2 + 3.0 / (d2 * d2) - 15.0 / (d2 * d2 * d2);
    -0.5 * d2 - 0.5 * (2.0 * std::f64::consts::PI).ln() - delta.ln() + corr.ln()
}
