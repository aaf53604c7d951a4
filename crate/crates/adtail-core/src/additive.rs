//! Strongly additive functions, specified by their values on the primes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// The rule p ↦ f(p) defining a strongly additive function: f(pᵏ) = f(p) and
/// f(mn) = f(m) + f(n) for coprime m, n.
#[derive(Debug, Clone)]
pub enum Kind {
    /// f(p) = 1 for every prime, i.e. f = ω, the number of distinct prime factors.
    Omega,
    /// f(p) = {α·p}, the fractional part of α·p, with α = num/den a rational
    /// approximant of an irrational (den ≤ 2⁶²). Evaluated in 128-bit exact
    /// arithmetic so there is no drift at p ~ 10⁹.
    FracAlpha { num: u64, den: u64 },
    /// Table-backed values; evaluation outside the table is a configuration error.
    Table(BTreeMap<u64, f64>),
    /// c·f for a base function f and c > 0.
    Scaled {
        base: Box<AdditiveFunction>,
        factor: f64,
    },
}

#[derive(Debug, Clone)]
pub struct AdditiveFunction {
    kind: Kind,
    name: String,
}

impl fmt::Display for AdditiveFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl AdditiveFunction {
    pub fn omega() -> Self {
        Self {
            kind: Kind::Omega,
            name: "omega".into(),
        }
    }

    pub fn frac_alpha(num: u64, den: u64) -> Result<Self> {
        if den == 0 || den > 1u64 << 62 {
            return Err(Error::Domain(format!(
                "frac-alpha denominator must be in 1..=2^62, got {den}"
            )));
        }
        Ok(Self {
            kind: Kind::FracAlpha { num, den },
            name: format!("frac({num}/{den})"),
        })
    }

    /// Table with strictly positive values (class 𝒞 mode).
    pub fn table(values: BTreeMap<u64, f64>) -> Result<Self> {
        for (&p, &v) in &values {
            if !(v > 0.0) {
                return Err(Error::Domain(format!(
                    "table value for prime {p} must be > 0 in class-C mode, got {v}"
                )));
            }
        }
        Ok(Self {
            kind: Kind::Table(values),
            name: "table".into(),
        })
    }

    /// Table that may contain zeros; used for the 𝔤/𝔥 lattice split where one
    /// of the two parts vanishes on each prime.
    pub fn table_allowing_zeros(values: BTreeMap<u64, f64>) -> Result<Self> {
        for (&p, &v) in &values {
            if !(v >= 0.0) {
                return Err(Error::Domain(format!(
                    "table value for prime {p} must be >= 0, got {v}"
                )));
            }
        }
        Ok(Self {
            kind: Kind::Table(values),
            name: "table".into(),
        })
    }

    pub fn scaled(base: AdditiveFunction, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::Domain(format!(
                "scale factor must be > 0, got {factor}"
            )));
        }
        let name = format!("{factor}*{}", base.name);
        Ok(Self {
            kind: Kind::Scaled {
                base: Box::new(base),
                factor,
            },
            name,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// f(p) at a prime p.
    #[inline]
    pub fn eval_prime(&self, p: u64) -> Result<f64> {
        match &self.kind {
            Kind::Omega => Ok(1.0),
            Kind::FracAlpha { num, den } => {
                let r = ((*num as u128) * (p as u128) % (*den as u128)) as u64;
                Ok(r as f64 / *den as f64)
            }
            Kind::Table(map) => map.get(&p).copied().ok_or_else(|| {
                Error::Config(format!("table-backed function has no entry for prime {p}"))
            }),
            Kind::Scaled { base, factor } => Ok(factor * base.eval_prime(p)?),
        }
    }

    /// f(n) by trial factorization; intended for small n (tests, toy checks).
    pub fn eval_integer(&self, mut n: u64) -> Result<f64> {
        let mut total = 0.0;
        let mut p = 2u64;
        while p * p <= n {
            if n.is_multiple_of(p) {
                total += self.eval_prime(p)?;
                while n.is_multiple_of(p) {
                    n /= p;
                }
            }
            p += if p == 2 { 1 } else { 2 };
        }
        if n > 1 {
            total += self.eval_prime(n)?;
        }
        Ok(total)
    }

    /// Load a table function from the two-column `p<TAB>value` text format
    /// (ascending p, `#` comments).
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_table_str(&text)
    }

    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut last_p = 0u64;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (ps, vs) = match (parts.next(), parts.next()) {
                (Some(p), Some(v)) => (p.trim(), v.trim()),
                _ => {
                    return Err(Error::Config(format!(
                        "table line {}: expected `p<TAB>value`, got {line:?}",
                        lineno + 1
                    )))
                }
            };
            let p: u64 = ps.parse().map_err(|_| {
                Error::Config(format!("table line {}: bad prime {ps:?}", lineno + 1))
            })?;
            let v: f64 = vs.parse().map_err(|_| {
                Error::Config(format!("table line {}: bad value {vs:?}", lineno + 1))
            })?;
            if p <= last_p {
                return Err(Error::Config(format!(
                    "table line {}: primes must be strictly ascending ({p} after {last_p})",
                    lineno + 1
                )));
            }
            last_p = p;
            map.insert(p, v);
        }
        Self::table(map)
    }
}
