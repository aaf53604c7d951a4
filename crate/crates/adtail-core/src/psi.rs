//! The limiting distribution Ψ of prime values: atoms plus an optional
//! piecewise-linear continuous part, its Laplace transform Ψ̂ and moments,
//! and lattice detection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::additive::AdditiveFunction;
use crate::error::{Error, Result};
use crate::sieve;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub mass: f64,
}

/// How the distribution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Closed,
    Empirical,
    File,
}

/// A distribution on [0, ∞) of compact support: point masses plus an optional
/// piecewise-linear CDF for the continuous part. Total mass is 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiDistribution {
    pub atoms: Vec<Atom>,
    /// Knots (t, F(t)) of the cumulative continuous mass, nondecreasing in
    /// both coordinates; empty when the law is purely atomic.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cdf_knots: Vec<[f64; 2]>,
    #[serde(default = "default_provenance", skip_serializing)]
    pub provenance: Provenance,
}

fn default_provenance() -> Provenance {
    Provenance::File
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeReport {
    pub is_lattice: bool,
    /// Maximal span α with support ⊆ αℤ, when lattice.
    pub span: Option<f64>,
    /// A pair of support points with incommensurable ratio, when detectable.
    pub witness: Option<(f64, f64)>,
}

impl PsiDistribution {
    /// Single unit atom at t.
    pub fn atom_at(t: f64) -> Self {
        Self {
            atoms: vec![Atom { t, mass: 1.0 }],
            cdf_knots: Vec::new(),
            provenance: Provenance::Closed,
        }
        .validated()
        .expect("unit atom is always valid")
    }

    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self {
            atoms: atoms
                .into_iter()
                .map(|(t, mass)| Atom { t, mass })
                .collect(),
            cdf_knots: Vec::new(),
            provenance: Provenance::Closed,
        }
        .validated()
    }

    /// Purely continuous law with the given piecewise-linear CDF knots.
    pub fn from_cdf_knots(knots: Vec<[f64; 2]>) -> Result<Self> {
        Self {
            atoms: Vec::new(),
            cdf_knots: knots,
            provenance: Provenance::Closed,
        }
        .validated()
    }

    pub fn from_parts(atoms: Vec<(f64, f64)>, knots: Vec<[f64; 2]>) -> Result<Self> {
        Self {
            atoms: atoms
                .into_iter()
                .map(|(t, mass)| Atom { t, mass })
                .collect(),
            cdf_knots: knots,
            provenance: Provenance::Closed,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        let mut total = 0.0;
        let mut last_t = -1.0;
        for a in &self.atoms {
            if !(a.t >= 0.0) {
                return Err(Error::Domain(format!("atom position {} < 0", a.t)));
            }
            if !(a.mass > 0.0) {
                return Err(Error::Domain(format!("atom mass {} must be > 0", a.mass)));
            }
            if a.t <= last_t {
                return Err(Error::Domain(
                    "atoms must be sorted with distinct positions".into(),
                ));
            }
            last_t = a.t;
            total += a.mass;
        }
        if !self.cdf_knots.is_empty() {
            if self.cdf_knots.len() < 2 {
                return Err(Error::Domain("cdf_knots needs at least two knots".into()));
            }
            for w in self.cdf_knots.windows(2) {
                if w[1][0] <= w[0][0] || w[1][1] < w[0][1] {
                    return Err(Error::Domain("cdf_knots must be increasing".into()));
                }
            }
            if self.cdf_knots[0][0] < 0.0 {
                return Err(Error::Domain("continuous support must be >= 0".into()));
            }
            total += self.cdf_knots.last().unwrap()[1] - self.cdf_knots[0][1];
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Domain(format!("total mass {total} differs from 1")));
        }
        let m2 = self.moment_unchecked(2);
        if !(m2 > 0.0) {
            return Err(Error::Domain("second moment must be positive".into()));
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let psi: PsiDistribution =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad psi JSON: {e}")))?;
        psi.validated()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("psi serializes")
    }

    /// Largest support point.
    pub fn t_max(&self) -> f64 {
        let a = self.atoms.last().map(|a| a.t).unwrap_or(0.0);
        let c = self.cdf_knots.last().map(|k| k[0]).unwrap_or(0.0);
        a.max(c)
    }

    fn moment_unchecked(&self, k: u32) -> f64 {
        let mut m = 0.0;
        for a in &self.atoms {
            m += a.mass * a.t.powi(k as i32);
        }
        for w in self.cdf_knots.windows(2) {
            let (a, b) = (w[0][0], w[1][0]);
            let density = (w[1][1] - w[0][1]) / (b - a);
            m += density * (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k as f64 + 1.0);
        }
        m
    }

    /// ∫ tᵏ dΨ(t); exact for atoms, closed form per linear CDF piece.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k > 64 {
            return Err(Error::Domain(format!("moment order {k} exceeds 64")));
        }
        Ok(self.moment_unchecked(k))
    }

    pub fn mean(&self) -> f64 {
        self.moment_unchecked(1)
    }

    pub fn second_moment(&self) -> f64 {
        self.moment_unchecked(2)
    }

    /// Ψ̂(z), Ψ̂′(z) or Ψ̂″(z): ∫ tᵒʳᵈᵉʳ e^{zt} dΨ(t).
    pub fn laplace(&self, z: Complex64, order: u8) -> Result<Complex64> {
        assert!(order <= 2, "order must be 0, 1 or 2");
        if self.t_max() * z.re.abs() > 700.0 {
            return Err(Error::Range(format!(
                "e^(z t) overflows f64 at Re z = {}, t_max = {}",
                z.re,
                self.t_max()
            )));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.atoms {
            acc += a.mass * a.t.powi(order as i32) * (z * a.t).exp();
        }
        for w in self.cdf_knots.windows(2) {
            let (a, b) = (w[0][0], w[1][0]);
            let density = (w[1][1] - w[0][1]) / (b - a);
            if density > 0.0 {
                acc += density * simpson_exp(z, order, a, b);
            }
        }
        Ok(acc)
    }

    /// Real-axis Laplace transform; the common case for the saddle machinery.
    pub fn laplace_real(&self, z: f64, order: u8) -> Result<f64> {
        Ok(self.laplace(Complex64::new(z, 0.0), order)?.re)
    }

    /// Law of c·X: atom positions and knot abscissas scaled by c.
    /// Ψ(α·) in distribution-function notation is `scale_values(1/α)`.
    pub fn scale_values(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Domain(format!("scale must be > 0, got {c}")));
        }
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    t: c * a.t,
                    mass: a.mass,
                })
                .collect(),
            cdf_knots: self.cdf_knots.iter().map(|k| [c * k[0], k[1]]).collect(),
            provenance: self.provenance,
        }
        .validated()
    }

    /// Decide whether the support lies on αℤ for some maximal α > 0, by a
    /// tolerance-aware Euclidean gcd over the atom positions.
    pub fn lattice_detect(&self, tol: f64) -> Result<LatticeReport> {
        if !(tol > 0.0) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        if !self.cdf_knots.is_empty() {
            return Ok(LatticeReport {
                is_lattice: false,
                span: None,
                witness: None,
            });
        }
        let positions: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| a.t)
            .filter(|&t| t > tol)
            .collect();
        if positions.is_empty() {
            // mass concentrated at 0 fits every lattice; report span of 0-free support
            return Ok(LatticeReport {
                is_lattice: true,
                span: None,
                witness: None,
            });
        }
        let collapse = 1e3 * tol;
        let mut g = positions[0];
        for &t in &positions[1..] {
            match real_gcd(g, t, tol) {
                Some(d) if d > collapse => g = d,
                _ => {
                    return Ok(LatticeReport {
                        is_lattice: false,
                        span: None,
                        witness: Some((positions[0], t)),
                    })
                }
            }
        }
        // confirm every position sits within tol of g·Z
        for &t in &positions {
            let r = (t / g).round() * g;
            if (t - r).abs() > tol {
                return Ok(LatticeReport {
                    is_lattice: false,
                    span: None,
                    witness: Some((g, t)),
                });
            }
        }
        Ok(LatticeReport {
            is_lattice: true,
            span: Some(g),
            witness: None,
        })
    }
}

/// Euclidean gcd on positive reals with an absolute tolerance; None when the
/// iteration cap is reached.
fn real_gcd(mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    if a < b {
        std::mem::swap(&mut a, &mut b);
    }
    for _ in 0..64 {
        if b <= tol {
            return Some(a);
        }
        let r = a - (a / b).floor() * b;
        a = b;
        b = r;
    }
    None
}

/// Composite Simpson for ∫_a^b tᵒʳᵈᵉʳ e^{zt} dt; the node count grows with
/// |z|(b−a) so the rule stays far below the target accuracy.
fn simpson_exp(z: Complex64, order: u8, a: f64, b: f64) -> Complex64 {
    let len = b - a;
    let mut n = (2048.0 * (1.0 + z.norm() * len / 8.0)) as usize;
    n = n.clamp(2048, 200_000);
    if n % 2 == 1 {
        n += 1;
    }
    let h = len / n as f64;
    let f = |t: f64| Complex64::from(t.powi(order as i32)) * (z * t).exp();
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * (h / 3.0)
}

/// Empirical surrogate for Ψ from the multiset {f(p) : p ≤ x}: equal weights
/// 1/π(x), exact-tie clustering.
pub fn psi_from_prime_data(f: &AdditiveFunction, x: u64) -> Result<PsiDistribution> {
    if x < 1000 {
        return Err(Error::Domain(format!(
            "empirical psi requires x >= 1000, got {x}"
        )));
    }
    psi_from_prime_data_gap(f, x, 1e-9)
}

/// Same surrogate with an explicit clustering gap and no floor on x (handy
/// for hand-checkable toy thresholds).
pub fn psi_from_prime_data_gap(f: &AdditiveFunction, x: u64, gap: f64) -> Result<PsiDistribution> {
    let mut values = Vec::new();
    let mut err = None;
    sieve::for_each_prime(x, sieve::DEFAULT_SEGMENT, |p| {
        if err.is_some() {
            return;
        }
        match f.eval_prime(p) {
            Ok(v) => values.push(v),
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let mut atoms: Vec<Atom> = Vec::new();
    for v in values {
        match atoms.last_mut() {
            Some(last) if (v - last.t).abs() <= gap => last.mass += 1.0 / n,
            _ => atoms.push(Atom {
                t: v,
                mass: 1.0 / n,
            }),
        }
    }
    // renormalize away the accumulated 1/n rounding
    let total: f64 = atoms.iter().map(|a| a.mass).sum();
    for a in &mut atoms {
        a.mass /= total;
    }
    PsiDistribution {
        atoms,
        cdf_knots: Vec::new(),
        provenance: Provenance::Empirical,
    }
    .validated()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_atom_laplace_is_exponential() {
        let psi = PsiDistribution::atom_at(1.0);
        for z in [0.0, 0.5, 1.0, 3.0, -2.0] {
            assert!((psi.laplace_real(z, 0).unwrap() - z.exp()).abs() < 1e-14 * z.exp());
        }
        let alpha = 0.37;
        let psi = PsiDistribution::atom_at(alpha);
        assert!((psi.laplace_real(2.0, 0).unwrap() - (2.0 * alpha).exp()).abs() < 1e-14);
    }

    #[test]
    fn laplace_at_zero_gives_moments() {
        let psi = PsiDistribution::from_parts(
            vec![(0.5, 0.25), (2.0, 0.25)],
            vec![[0.0, 0.0], [1.0, 0.5]],
        )
        .unwrap();
        assert!((psi.laplace_real(0.0, 0).unwrap() - 1.0).abs() < 1e-14);
        assert!((psi.laplace_real(0.0, 1).unwrap() - psi.moment(1).unwrap()).abs() < 1e-14);
        assert!((psi.laplace_real(0.0, 2).unwrap() - psi.moment(2).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn moments_examples() {
        let psi = PsiDistribution::atom_at(1.0);
        for k in 0..10 {
            assert_eq!(psi.moment(k).unwrap(), 1.0);
        }
        let psi = PsiDistribution::from_atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        assert!((psi.moment(2).unwrap() - 2.5).abs() < 1e-15);
        let uni = PsiDistribution::from_cdf_knots(vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!((uni.moment(2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn laplace_derivative_consistency_quadratic_in_h() {
        let psi = PsiDistribution::from_atoms(vec![(0.7, 0.3), (1.9, 0.7)]).unwrap();
        let z = 0.8;
        let d1 = psi.laplace_real(z, 1).unwrap();
        let mut errs = Vec::new();
        for h in [1e-4, 1e-5] {
            let fd = (psi.laplace_real(z + h, 0).unwrap() - psi.laplace_real(z - h, 0).unwrap())
                / (2.0 * h);
            errs.push((fd - d1).abs());
        }
        assert!(errs[0] < 1e-7);
        // quadratic decay: shrinking h by 10 shrinks the error by ~100
        assert!(errs[1] < errs[0] / 20.0);
    }

    #[test]
    fn rescaling_identity() {
        // law of f/α has transform Ψ̂(z/α)
        let psi = PsiDistribution::from_atoms(vec![(1.0, 0.5), (2.5, 0.5)]).unwrap();
        let alpha = 1.7;
        let scaled = psi.scale_values(1.0 / alpha).unwrap();
        for i in 0..20 {
            let z = -2.0 + 0.3 * i as f64;
            let lhs = scaled.laplace_real(z, 0).unwrap();
            let rhs = psi.laplace_real(z / alpha, 0).unwrap();
            assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn laplace_overflow_is_range_error() {
        let psi = PsiDistribution::atom_at(2.0);
        assert!(matches!(psi.laplace_real(400.0, 0), Err(Error::Range(_))));
    }

    #[test]
    fn lattice_examples() {
        let psi = PsiDistribution::from_atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let r = psi.lattice_detect(1e-9).unwrap();
        assert!(r.is_lattice);
        assert!((r.span.unwrap() - 1.0).abs() < 1e-12);

        let psi = PsiDistribution::atom_at(0.5);
        let r = psi.lattice_detect(1e-9).unwrap();
        assert!(r.is_lattice);
        assert!((r.span.unwrap() - 0.5).abs() < 1e-12);

        let psi =
            PsiDistribution::from_atoms(vec![(1.0, 0.5), (std::f64::consts::SQRT_2, 0.5)]).unwrap();
        let r = psi.lattice_detect(1e-9).unwrap();
        assert!(!r.is_lattice);
        assert!(r.witness.is_some());
    }

    #[test]
    fn lattice_span_scales_exactly() {
        let psi = PsiDistribution::from_atoms(vec![(0.5, 0.25), (1.5, 0.75)]).unwrap();
        let base = psi.lattice_detect(1e-9).unwrap().span.unwrap();
        for c in [2.0, 0.25, 3.0] {
            let scaled = psi.scale_values(c).unwrap();
            let span = scaled.lattice_detect(1e-9).unwrap().span.unwrap();
            assert!((span - c * base).abs() < 1e-12 * c * base);
        }
    }

    #[test]
    fn continuous_part_is_never_lattice() {
        let psi = PsiDistribution::from_cdf_knots(vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!(!psi.lattice_detect(1e-9).unwrap().is_lattice);
    }

    #[test]
    fn empirical_psi_for_omega_is_unit_atom() {
        let psi = psi_from_prime_data(&AdditiveFunction::omega(), 2000).unwrap();
        assert_eq!(psi.atoms.len(), 1);
        assert_eq!(psi.atoms[0].t, 1.0);
        assert!((psi.atoms[0].mass - 1.0).abs() < 1e-12);
        assert_eq!(psi.provenance, Provenance::Empirical);
    }

    #[test]
    fn empirical_psi_from_small_table() {
        let f = AdditiveFunction::from_table_str("2\t0.5\n3\t1\n5\t1\n7\t1\n").unwrap();
        let psi = psi_from_prime_data_gap(&f, 10, 1e-9).unwrap();
        assert_eq!(psi.atoms.len(), 2);
        assert!((psi.atoms[0].t - 0.5).abs() < 1e-15 && (psi.atoms[0].mass - 0.25).abs() < 1e-12);
        assert!((psi.atoms[1].t - 1.0).abs() < 1e-15 && (psi.atoms[1].mass - 0.75).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let psi = PsiDistribution::from_atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let back = PsiDistribution::from_json(&psi.to_json()).unwrap();
        assert_eq!(back.atoms.len(), 2);
        assert!(PsiDistribution::from_json(r#"{"atoms":[{"t":1.0,"mass":0.9}]}"#).is_err());
    }

    #[test]
    fn bad_masses_rejected() {
        assert!(PsiDistribution::from_atoms(vec![(1.0, 0.5), (2.0, 0.6)]).is_err());
        assert!(PsiDistribution::from_atoms(vec![(-1.0, 1.0)]).is_err());
        assert!(PsiDistribution::from_atoms(vec![(0.0, 1.0)]).is_err()); // zero second moment
    }
}
