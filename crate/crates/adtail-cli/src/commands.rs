//! The six subcommands. Every command writes one JSON artifact (stdout or
//! `--out`); reruns with identical inputs are byte-identical.

use std::path::PathBuf;

use adtail_core::additive::AdditiveFunction;
use adtail_core::error::{Error, Result};
use adtail_core::model::{self, BernoulliEnsemble, TailEstimate, TailMethod, XhLaw};
use adtail_core::psi::PsiDistribution;
use adtail_core::saddle::{self, Constants, FullInputs, Level, TailPrediction};
use adtail_core::series;
use adtail_core::sieve::{self, Normalization, PrimeStats, TailTable};
use adtail_core::special::normal_tail;
use serde::Serialize;

use crate::config::{self, FileConfig, SCHEMA_VERSION};

/// Flags after merging with the config file; everything still optional so each
/// command can demand exactly what it needs.
#[derive(Debug, Clone, Default)]
pub struct Resolved {
    pub fn_spec: Option<String>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub deltas: Option<String>,
    pub psi: Option<String>,
    pub normalize: Option<String>,
    pub method: Option<String>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub grid_step: Option<f64>,
    pub level: Option<String>,
    pub k: Option<usize>,
    pub p_limit: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Resolved {
    pub fn merge(flags: Resolved, file: FileConfig) -> Self {
        Resolved {
            fn_spec: config::merge(flags.fn_spec, file.fn_spec),
            x: config::merge(flags.x, file.x),
            y: config::merge(flags.y, file.y),
            deltas: config::merge(flags.deltas, file.deltas),
            psi: config::merge(flags.psi, file.psi),
            normalize: config::merge(flags.normalize, file.normalize),
            method: config::merge(flags.method, file.method),
            samples: config::merge(flags.samples, file.samples),
            seed: config::merge(flags.seed, file.seed),
            grid_step: config::merge(flags.grid_step, file.grid_step),
            level: config::merge(flags.level, file.level),
            k: config::merge(flags.k, file.k),
            p_limit: config::merge(flags.p_limit, file.p_limit),
            out: config::merge(flags.out, file.out),
        }
    }

    fn function(&self) -> Result<AdditiveFunction> {
        let spec = self
            .fn_spec
            .as_deref()
            .ok_or_else(|| Error::Config("--fn is required for this command".into()))?;
        config::parse_function(spec)
    }

    fn x_int(&self) -> Result<u64> {
        let x = self
            .x
            .ok_or_else(|| Error::Config("--x is required for this command".into()))?;
        config::parse_x(x)
    }

    fn delta_grid(&self) -> Result<Vec<f64>> {
        let spec = self
            .deltas
            .as_deref()
            .ok_or_else(|| Error::Config("--deltas is required for this command".into()))?;
        config::parse_deltas(spec)
    }

    fn normalization(&self) -> Result<Normalization> {
        match self.normalize.as_deref() {
            Some(s) => config::parse_normalization(s),
            None => Ok(Normalization::Sigma),
        }
    }

    fn psi(&self, f: Option<&AdditiveFunction>, x: Option<u64>) -> Result<PsiDistribution> {
        match self.psi.as_deref() {
            Some(spec) => config::parse_psi(spec, f, x),
            // the unit atom is the right closed form for omega; anything else
            // must say where Ψ comes from
            None => match self.fn_spec.as_deref() {
                Some("omega") => Ok(PsiDistribution::atom_at(1.0)),
                _ => Err(Error::Config(
                    "--psi is required (atom:T, empirical, or a file path)".into(),
                )),
            },
        }
    }

    fn emit<T: Serialize>(&self, artifact: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(artifact)
            .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))?;
        text.push('\n');
        match &self.out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

#[derive(Serialize)]
struct SieveArtifact {
    schema_version: u32,
    command: &'static str,
    function: String,
    stats: PrimeStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    tail: Option<TailTable>,
}

pub fn cmd_sieve(r: &Resolved) -> Result<()> {
    let f = r.function()?;
    let x = r.x_int()?;
    let stats = sieve::prime_stats(&f, x)?;
    let tail = match &r.deltas {
        Some(_) => Some(sieve::empirical_tail(
            &f,
            x,
            &r.delta_grid()?,
            r.normalization()?,
        )?),
        None => None,
    };
    r.emit(&SieveArtifact {
        schema_version: SCHEMA_VERSION,
        command: "sieve",
        function: f.name().to_string(),
        stats,
        tail,
    })
}

#[derive(Serialize)]
struct TailArtifact {
    schema_version: u32,
    command: &'static str,
    function: String,
    y: u64,
    stats: PrimeStats,
    tail: TailTable,
}

/// Tail of the truncated function f(n;y).
pub fn cmd_tail(r: &Resolved) -> Result<()> {
    let f = r.function()?;
    let x = r.x_int()?;
    let y = match r.y {
        Some(y) => config::parse_x(y)?,
        None => x,
    };
    let deltas = r.delta_grid()?;
    let tail = sieve::truncated_tail(&f, x, y, &deltas, r.normalization()?)?;
    let stats = sieve::prime_stats(&f, y)?;
    r.emit(&TailArtifact {
        schema_version: SCHEMA_VERSION,
        command: "tail",
        function: f.name().to_string(),
        y,
        stats,
        tail,
    })
}

#[derive(Serialize)]
struct ModelRow {
    delta: f64,
    threshold: f64,
    estimate: TailEstimate,
}

#[derive(Serialize)]
struct ModelArtifact {
    schema_version: u32,
    command: &'static str,
    function: String,
    x: u64,
    mu: f64,
    norm: f64,
    rows: Vec<ModelRow>,
}

pub fn cmd_model(r: &Resolved) -> Result<()> {
    let f = r.function()?;
    let x = r.x_int()?;
    let deltas = r.delta_grid()?;
    let ens = BernoulliEnsemble::from_function(&f, x)?;
    let (mu, sigma2, b2) = (ens.mu(), ens.sigma2(), ens.b2());
    let norm = match r.normalization()? {
        Normalization::Sigma => sigma2.sqrt(),
        Normalization::B => b2.sqrt(),
    };
    let method = match r.method.as_deref().unwrap_or("dp") {
        "dp" => TailMethod::Dp {
            q: r.grid_step
                .unwrap_or_else(|| model::suggest_grid_step(&ens)),
        },
        "mc" => TailMethod::Mc {
            samples: r.samples.unwrap_or(100_000),
            seed: r.seed.unwrap_or(0),
        },
        other => {
            return Err(Error::Config(format!(
                "method must be dp or mc, got {other:?}"
            )))
        }
    };
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let estimate = model::centered_tail(&ens, mu, norm, delta, method)?;
        rows.push(ModelRow {
            delta,
            threshold: mu + delta * norm,
            estimate,
        });
    }
    r.emit(&ModelArtifact {
        schema_version: SCHEMA_VERSION,
        command: "model",
        function: f.name().to_string(),
        x,
        mu,
        norm,
        rows,
    })
}

/// Everything the FULL-level prediction needs that is priced per function and
/// x rather than per Δ.
struct FullContext {
    stats: PrimeStats,
    constants: Constants,
    p_limit: u64,
    /// (span, law of the exceptional part in span units) when Ψ is lattice
    lattice: Option<(f64, XhLaw)>,
}

fn exceptional_support(f: &AdditiveFunction, x: u64, span: f64) -> Result<Vec<(u64, f64)>> {
    let mut support = Vec::new();
    let mut bad: Option<Error> = None;
    sieve::for_each_prime(x, 1 << 20, |p| {
        if bad.is_some() {
            return;
        }
        match f.eval_prime(p) {
            Ok(w) => {
                let k = (w / span).round();
                if (w - k * span).abs() > 1e-9 {
                    support.push((p, w));
                }
            }
            Err(e) => bad = Some(e),
        }
    })?;
    if let Some(e) = bad {
        return Err(e);
    }
    Ok(support)
}

fn build_full_context(f: &AdditiveFunction, psi: &PsiDistribution, x: u64) -> Result<FullContext> {
    let stats = sieve::prime_stats(f, x)?;
    let p_limit = x.clamp(1000, 10_000_000);
    let grid: Vec<u64> = {
        let mut g = vec![x / 16, x / 4, x];
        g.retain(|&v| v >= 16);
        g.dedup();
        if g.is_empty() {
            g.push(x.max(16));
        }
        g
    };
    let constants = saddle::c_constant(f, psi, &grid)?;
    let report = psi.lattice_detect(1e-9)?;
    let lattice = if report.is_lattice {
        let span = report.span.ok_or_else(|| {
            Error::Numeric("lattice law without a span; cannot build the periodic factor".into())
        })?;
        let support = exceptional_support(f, x, span)?;
        let scaled: Vec<(u64, f64)> = support.iter().map(|&(p, w)| (p, w / span)).collect();
        Some((span, XhLaw::new(&scaled)?))
    } else {
        None
    };
    Ok(FullContext {
        stats,
        constants,
        p_limit,
        lattice,
    })
}

fn full_prediction(
    f: &AdditiveFunction,
    psi: &PsiDistribution,
    ctx: &FullContext,
    x: f64,
    delta: f64,
) -> Result<TailPrediction> {
    let v = saddle::v_param(psi, x, delta)?.v;
    let l = saddle::l_product(f, psi, v, ctx.p_limit)?;
    let p_h = match &ctx.lattice {
        Some((span, law)) => {
            let xi = ctx.stats.mu + delta * ctx.stats.sigma();
            Some(model::p_h_factor(law, xi / span, v * span)?.value)
        }
        None => None,
    };
    let inputs = FullInputs {
        l_value: l.value,
        c: ctx.constants.c,
        p_h,
    };
    saddle::tail_asymptotic(psi, x, delta, Level::Full, Some(&inputs))
}

#[derive(Serialize)]
struct AsymProvenance {
    p_limit: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_uncertainty: Option<f64>,
}

#[derive(Serialize)]
struct AsymArtifact {
    schema_version: u32,
    command: &'static str,
    x: u64,
    level: String,
    predictions: Vec<TailPrediction>,
    provenance: AsymProvenance,
}

pub fn cmd_asym(r: &Resolved) -> Result<()> {
    let x = r.x_int()?;
    let deltas = r.delta_grid()?;
    let level_str = r.level.as_deref().unwrap_or("s");
    let level = match level_str {
        "normal" => Level::Normal,
        "s" => Level::SOnly,
        "full" => Level::Full,
        other => {
            return Err(Error::Config(format!(
                "level must be normal, s or full, got {other:?}"
            )))
        }
    };
    let (f, psi, ctx) = match level {
        Level::Full => {
            let f = r.function()?;
            let psi = r.psi(Some(&f), Some(x))?;
            let ctx = build_full_context(&f, &psi, x)?;
            (Some(f), psi, Some(ctx))
        }
        _ => (None, r.psi(None, Some(x))?, None),
    };
    let mut predictions = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let p = match (&ctx, &f) {
            (Some(ctx), Some(f)) => full_prediction(f, &psi, ctx, x as f64, delta)?,
            _ => saddle::tail_asymptotic(&psi, x as f64, delta, level, None)?,
        };
        predictions.push(p);
    }
    r.emit(&AsymArtifact {
        schema_version: SCHEMA_VERSION,
        command: "asym",
        x,
        level: level_str.to_string(),
        predictions,
        provenance: AsymProvenance {
            p_limit: ctx.as_ref().map(|c| c.p_limit),
            c: ctx.as_ref().map(|c| c.constants.c),
            c_uncertainty: ctx.as_ref().map(|c| c.constants.uncertainty),
        },
    })
}

#[derive(Serialize)]
struct SeriesArtifact {
    schema_version: u32,
    command: &'static str,
    source: String,
    coefficients: series::CoefficientVector,
}

pub fn cmd_series(r: &Resolved) -> Result<()> {
    let k = r.k.unwrap_or(12);
    let (source, coefficients) = if r.fn_spec.is_some() {
        let f = r.function()?;
        let x = r.x_int()?;
        let ens = BernoulliEnsemble::from_function(&f, x)?;
        (format!("{}@{x}", f.name()), series::lambda_f(&ens, k)?)
    } else {
        let psi = r.psi(None, None)?;
        (
            r.psi.clone().unwrap_or_else(|| "psi".into()),
            series::lambda_psi(&psi, k)?,
        )
    };
    r.emit(&SeriesArtifact {
        schema_version: SCHEMA_VERSION,
        command: "series",
        source,
        coefficients,
    })
}

#[derive(Serialize)]
struct Ratio {
    numerator: f64,
    denominator: f64,
    ratio: f64,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Option<Self> {
        if den > 0.0 && num.is_finite() && den.is_finite() {
            Some(Self {
                numerator: num,
                denominator: den,
                ratio: num / den,
            })
        } else {
            None
        }
    }
}

#[derive(Serialize)]
struct CompareRatios {
    #[serde(skip_serializing_if = "Option::is_none")]
    d_over_model: Option<Ratio>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_over_a_model: Option<Ratio>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_over_poisson: Option<Ratio>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncated_d_over_model: Option<Ratio>,
}

#[derive(Serialize)]
struct CompareRow {
    delta: f64,
    empirical_count: u64,
    #[serde(rename = "D")]
    d: f64,
    truncated_count: u64,
    truncated_d: f64,
    model: TailEstimate,
    normal: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_prediction: Option<TailPrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    full_prediction: Option<TailPrediction>,
    poisson: f64,
    a_factor: f64,
    ratios: CompareRatios,
}

#[derive(Serialize)]
struct CompareProvenance {
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_step: Option<f64>,
    p_limit: u64,
    y: u64,
    c: f64,
    c_uncertainty: f64,
    psi_source: String,
}

#[derive(Serialize)]
struct CompareReport {
    schema_version: u32,
    command: &'static str,
    function: String,
    x: u64,
    normalize: Normalization,
    stats: PrimeStats,
    rows: Vec<CompareRow>,
    provenance: CompareProvenance,
}

/// One report tying all three sides together: empirical tail, Kubilius model,
/// and the asymptotic predictions, with the headline ratios.
pub fn cmd_compare(r: &Resolved) -> Result<()> {
    let f = r.function()?;
    let x = r.x_int()?;
    let deltas = r.delta_grid()?;
    let normalization = r.normalization()?;
    let psi = r.psi(Some(&f), Some(x))?;
    let psi_source = r.psi.clone().unwrap_or_else(|| "atom:1".into());

    let ctx = build_full_context(&f, &psi, x)?;
    let stats = ctx.stats.clone();
    let norm = match normalization {
        Normalization::Sigma => stats.sigma(),
        Normalization::B => stats.b(),
    };
    let empirical = sieve::empirical_tail(&f, x, &deltas, normalization)?;
    let y = match r.y {
        Some(y) => config::parse_x(y)?,
        None => (x as f64).sqrt() as u64,
    };
    let truncated = sieve::truncated_tail(&f, x, y, &deltas, normalization)?;

    let ens = BernoulliEnsemble::from_function(&f, x)?;
    let method = match r.method.as_deref().unwrap_or("dp") {
        "dp" => TailMethod::Dp {
            q: r.grid_step
                .unwrap_or_else(|| model::suggest_grid_step(&ens)),
        },
        "mc" => TailMethod::Mc {
            samples: r.samples.unwrap_or(100_000),
            seed: r.seed.unwrap_or(0),
        },
        other => {
            return Err(Error::Config(format!(
                "method must be dp or mc, got {other:?}"
            )))
        }
    };

    let sigma_psi2 = psi.laplace_real(0.0, 2)? * stats.loglog_x;
    let mut rows = Vec::with_capacity(deltas.len());
    for (i, &delta) in deltas.iter().enumerate() {
        let model_est = model::centered_tail(&ens, stats.mu, norm, delta, method)?;
        let s_prediction = if delta > 0.0 {
            Some(saddle::tail_asymptotic(
                &psi,
                x as f64,
                delta,
                Level::SOnly,
                None,
            )?)
        } else {
            None
        };
        let full = if delta > 0.0 {
            Some(full_prediction(&f, &psi, &ctx, x as f64, delta)?)
        } else {
            None
        };
        let poisson = model::poisson_tail(stats.sigma2, delta)?;
        let a = saddle::a_factor(&psi, delta / sigma_psi2.sqrt())?;
        let d = empirical.rows[i].d;
        let ratios = CompareRatios {
            d_over_model: Ratio::of(d, model_est.value),
            d_over_a_model: Ratio::of(d, a * model_est.value),
            d_over_poisson: Ratio::of(d, poisson),
            truncated_d_over_model: Ratio::of(truncated.rows[i].d, model_est.value),
        };
        rows.push(CompareRow {
            delta,
            empirical_count: empirical.rows[i].count,
            d,
            truncated_count: truncated.rows[i].count,
            truncated_d: truncated.rows[i].d,
            model: model_est,
            normal: normal_tail(delta),
            s_prediction,
            full_prediction: full,
            poisson,
            a_factor: a,
            ratios,
        });
    }
    let (prov_seed, prov_samples, prov_q) = match method {
        TailMethod::Dp { q } => (None, None, Some(q)),
        TailMethod::Mc { samples, seed } => (Some(seed), Some(samples), None),
    };
    r.emit(&CompareReport {
        schema_version: SCHEMA_VERSION,
        command: "compare",
        function: f.name().to_string(),
        x,
        normalize: normalization,
        stats,
        rows,
        provenance: CompareProvenance {
            method: match method {
                TailMethod::Dp { .. } => "DP".into(),
                TailMethod::Mc { .. } => "MC".into(),
            },
            seed: prov_seed,
            samples: prov_samples,
            grid_step: prov_q,
            p_limit: ctx.p_limit,
            y,
            c: ctx.constants.c,
            c_uncertainty: ctx.constants.uncertainty,
            psi_source,
        },
    })
}
