//! Property tests for the structural invariants of the core library.

use adtail_core::model::{self, BernoulliEnsemble, XhLaw};
use adtail_core::psi::PsiDistribution;
use adtail_core::series;
use adtail_core::sieve::{self, Normalization};
use proptest::prelude::*;

const SMALL_PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn ensemble_strategy() -> impl Strategy<Value = BernoulliEnsemble> {
    (2usize..=8, proptest::collection::vec(0.05f64..2.0, 8)).prop_map(|(n, ws)| {
        BernoulliEnsemble::from_parts(SMALL_PRIMES[..n].to_vec(), ws[..n].to_vec()).unwrap()
    })
}

fn atomic_psi_strategy() -> impl Strategy<Value = PsiDistribution> {
    proptest::collection::vec((0.1f64..2.0, 0.05f64..1.0), 1..=4).prop_map(|mut atoms| {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        for i in 1..atoms.len() {
            if atoms[i].0 <= atoms[i - 1].0 {
                atoms[i].0 = atoms[i - 1].0 + 0.05;
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        for a in &mut atoms {
            a.1 /= total;
        }
        PsiDistribution::from_atoms(atoms).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The DP tail is a probability and nonincreasing in the threshold.
    #[test]
    fn dp_tail_monotone(ens in ensemble_strategy(), t0 in 0.0f64..4.0, dt in 0.01f64..2.0) {
        let q = 1e-3;
        let a = model::exact_tail_dp(&ens, t0, q).unwrap().value;
        let b = model::exact_tail_dp(&ens, t0 + dt, q).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(b <= a + 1e-12);
    }

    /// The DP state distribution is a probability vector.
    #[test]
    fn dp_distribution_sums_to_one(ens in ensemble_strategy()) {
        let dist = model::exact_dp_distribution(&ens, 1e-3).unwrap();
        let total: f64 = dist.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(dist.iter().all(|&p| p >= 0.0));
    }

    /// B² − σ² = Σ f(p)²/p² ≥ 0 for every ensemble.
    #[test]
    fn variance_ordering(ens in ensemble_strategy()) {
        let direct: f64 = ens
            .primes()
            .iter()
            .zip(ens.weights())
            .map(|(&p, &w)| w * w / (p as f64 * p as f64))
            .sum();
        prop_assert!((ens.b2() - ens.sigma2() - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    /// The counter RNG is a deterministic map into [0, 1).
    #[test]
    fn rng_deterministic_unit_interval(seed in any::<u64>(), rep in any::<u64>(), idx in any::<u64>()) {
        let u = model::counter_u01(seed, rep, idx);
        prop_assert!((0.0..1.0).contains(&u));
        prop_assert_eq!(u, model::counter_u01(seed, rep, idx));
    }

    /// Moments scale as cᵏ under a scaling of the values, and the transform
    /// at 0 recovers the total mass.
    #[test]
    fn psi_scaling_and_mass(psi in atomic_psi_strategy(), c in 0.2f64..3.0) {
        prop_assert!((psi.laplace_real(0.0, 0).unwrap() - 1.0).abs() <= 1e-12);
        let scaled = psi.scale_values(c).unwrap();
        for k in 1..=4u32 {
            let want = c.powi(k as i32) * psi.moment(k).unwrap();
            let got = scaled.moment(k).unwrap();
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    /// The transform Ψ̂ is increasing and convex on the real axis.
    #[test]
    fn laplace_monotone_convex(psi in atomic_psi_strategy(), z in -2.0f64..2.0) {
        prop_assert!(psi.laplace_real(z, 1).unwrap() > 0.0);
        prop_assert!(psi.laplace_real(z, 2).unwrap() > 0.0);
    }

    /// Series coefficients start λ₁ = 1 and reversion inverts composition.
    #[test]
    fn series_reversion_inverts(psi in atomic_psi_strategy()) {
        let lam = series::lambda_psi(&psi, 10).unwrap();
        prop_assert!((lam.values[1] - 1.0).abs() <= 1e-14);
        // u′ composed with its reversion must be the identity series
        let mut uprime = vec![0.0f64; 11];
        let mut fact = 1.0;
        for (l, u) in uprime.iter_mut().enumerate().skip(1) {
            fact *= l as f64;
            *u = psi.moment(l as u32 - 1).unwrap() / fact;
        }
        let inv = series::series_revert(&uprime, 10).unwrap();
        let composed = series::series_compose(&uprime, &inv, 10);
        for (k, &c) in composed.iter().enumerate() {
            let want = if k == 1 { 1.0 } else { 0.0 };
            prop_assert!((c - want).abs() <= 1e-9, "k={} c={}", k, c);
        }
    }

    /// The Poisson comparison tail is a probability, nonincreasing in Δ.
    #[test]
    fn poisson_tail_monotone(lambda in 0.1f64..50.0, d0 in 0.0f64..3.0, dd in 0.1f64..2.0) {
        let a = model::poisson_tail(lambda, d0).unwrap();
        let b = model::poisson_tail(lambda, d0 + dd).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a + 1e-15);
    }

    /// The lattice correction factor is periodic in the phase and dominates
    /// its closed-form lower bound.
    #[test]
    fn lattice_factor_invariants(
        n in 1usize..=3,
        a in 0.0f64..1.0,
        shift in 1u32..=3,
        v in 0.1f64..6.0,
    ) {
        let support: Vec<(u64, f64)> =
            SMALL_PRIMES[..n].iter().map(|&p| (p, 1.0 + (p % 3) as f64)).collect();
        let law = XhLaw::new(&support).unwrap();
        let p0 = model::p_h_factor(&law, a, v).unwrap();
        let p1 = model::p_h_factor(&law, a + shift as f64, v).unwrap();
        prop_assert!((p0.value - p1.value).abs() <= 1e-12 * p0.value);
        prop_assert!(p0.value >= p0.lower_bound * (1.0 - 1e-12));
        prop_assert!((p0.lower_bound - v / v.exp_m1()).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Empirical tails are nonincreasing in Δ, and truncation at y = x is
    /// the identity.
    #[test]
    fn empirical_tail_monotone(x in 500u64..5000, norm in prop::bool::ANY) {
        let f = adtail_core::additive::AdditiveFunction::omega();
        let norm = if norm { Normalization::Sigma } else { Normalization::B };
        let deltas = [0.0, 0.5, 1.0, 1.5, 2.0];
        let table = sieve::empirical_tail(&f, x, &deltas, norm).unwrap();
        for w in table.rows.windows(2) {
            prop_assert!(w[1].d <= w[0].d);
        }
        let truncated = sieve::truncated_tail(&f, x, x, &deltas, norm).unwrap();
        for (a, b) in table.rows.iter().zip(&truncated.rows) {
            prop_assert_eq!(a.count, b.count);
        }
    }
}
