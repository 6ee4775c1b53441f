//! Monte Carlo risk experiments and log-log rate fits.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use starmm_core::estimator::PreparedEstimator;
use starmm_core::expfam::ExponentialFamily;
use starmm_core::geometry::EntropyOracle;
use std::sync::Arc;

use crate::config::{EntropyChoice, ExperimentSpec, Truth};
use crate::error::{Error, Result};
use crate::io;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Largest tolerated share of failed replicates.
const MAX_FAILURE_SHARE: f64 = 0.05;

pub const RISK_CSV_HEADER: &str = "n,replicates,mean_sq_err,std_err,mean_runtime_s";

/// One row of a risk curve. `replicates` counts successful replicates only.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub n: usize,
    pub replicates: usize,
    pub mean_sq_err: f64,
    pub std_err: f64,
    pub mean_runtime_s: f64,
}

/// OLS fit of `log risk` on `log n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_err: f64,
    /// 95% normal-approximation interval.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    /// Sorted by `n`.
    pub rows: Vec<RiskRow>,
    pub fit: Option<RateFit>,
    /// Why `fit` is absent.
    pub fit_note: Option<String>,
    pub predicted_slope: Option<f64>,
}

/// Per-`n` facts recorded in the metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionRun {
    pub n: usize,
    pub j_star: usize,
    pub steps: usize,
    pub depth: usize,
    pub kappa: f64,
    pub excluded: usize,
    pub first_error: Option<String>,
    pub build_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub curve: RiskCurve,
    pub runs: Vec<DimensionRun>,
    /// `RiskCurve` CSV text.
    pub csv: String,
    /// Sibling metadata text.
    pub metadata: String,
    pub input_hash: String,
}

/// Least squares on `(log n, log risk)`.
pub fn fit_rate(rows: &[RiskRow]) -> Result<RateFit> {
    const NEEDED: usize = 4;
    if rows.len() < NEEDED {
        return Err(Error::InsufficientRows {
            needed: NEEDED,
            got: rows.len(),
        });
    }
    if let Some(r) = rows.iter().find(|r| !(r.mean_sq_err > 0.0) || r.n == 0) {
        return Err(Error::config(format!(
            "risk must be positive to fit a rate, got {} at n={}",
            r.mean_sq_err, r.n
        )));
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_sq_err.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::config("rate fit needs at least two distinct n"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let std_err = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        std_err,
        lower: slope - Z95 * std_err,
        upper: slope + Z95 * std_err,
    })
}

pub fn risk_csv(rows: &[RiskRow]) -> String {
    let mut s = format!("{RISK_CSV_HEADER}\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.n, r.replicates, r.mean_sq_err, r.std_err, r.mean_runtime_s
        )
        .unwrap();
    }
    s
}

/// SHA-256 of a git-style blob header plus content.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start {threads} worker threads: {e}")))
}

struct TruthSource {
    rows: Vec<Vec<f64>>,
}

impl TruthSource {
    fn load(truth: &Truth) -> Result<(Self, Vec<u8>)> {
        match truth {
            Truth::Csv(path) => {
                let bytes = std::fs::read(path).map_err(|e| {
                    Error::config(format!("cannot read truth file {}: {e}", path.display()))
                })?;
                let text = String::from_utf8_lossy(&bytes);
                let rows = io::parse_ragged_rows(&text, &path.display().to_string())?;
                Ok((Self { rows }, bytes))
            }
            _ => Ok((Self { rows: Vec::new() }, Vec::new())),
        }
    }

    fn fixed(&self, truth: &Truth, n: usize) -> Result<Option<Vec<f64>>> {
        match truth {
            Truth::Random => Ok(None),
            Truth::Constant(v) => Ok(Some(vec![*v; n])),
            Truth::Csv(p) => self
                .rows
                .iter()
                .find(|r| r.len() == n)
                .cloned()
                .map(Some)
                .ok_or_else(|| Error::config(format!("{} has no row of length {n}", p.display()))),
        }
    }
}

/// Seeded replicate outcome: squared error and traversal seconds.
type Replicate = std::result::Result<(f64, f64), String>;

fn run_dimension(
    spec: &ExperimentSpec,
    truths: &TruthSource,
    n: usize,
) -> Result<(RiskRow, DimensionRun)> {
    let family = ExponentialFamily::new(spec.family, spec.m)?;
    let set = spec
        .set
        .build(n, spec.m, spec.estimator.budget, spec.seed)?;
    let analytic: Option<Arc<dyn EntropyOracle>> = match spec.entropy {
        EntropyChoice::Analytic => Some(spec.set.analytic_entropy(n, spec.m)),
        EntropyChoice::Estimated => None,
    };
    let t0 = Instant::now();
    let prepared = PreparedEstimator::new(&set, &family, &spec.estimator, analytic)?;
    let build_s = t0.elapsed().as_secs_f64();
    let fixed = truths.fixed(&spec.truth, n)?;
    if let Some(t) = &fixed {
        if !set.contains(t) {
            return Err(Error::config(format!(
                "truth of length {n} is not in the {} set",
                spec.set
            )));
        }
    }
    let outcomes: Vec<Replicate> = (0..spec.replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(i as u64));
            rng.set_stream(n as u64);
            let theta = match &fixed {
                Some(t) => t.clone(),
                None => spec
                    .set
                    .sample_truth(n, spec.m, &mut rng)
                    .map_err(|e| e.to_string())?,
            };
            let y = family.sample_vector(&theta, &mut rng);
            let t = Instant::now();
            let trace = prepared.estimate(&y).map_err(|e| e.to_string())?;
            let secs = if spec.timing {
                t.elapsed().as_secs_f64()
            } else {
                0.0
            };
            Ok((starmm_core::dist2(&trace.estimate, &theta), secs))
        })
        .collect();
    let ok: Vec<(f64, f64)> = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok().copied())
        .collect();
    let excluded = outcomes.len() - ok.len();
    if excluded as f64 > MAX_FAILURE_SHARE * outcomes.len() as f64 {
        return Err(Error::TooManyFailures {
            n,
            failed: excluded,
            total: outcomes.len(),
        });
    }
    let k = ok.len() as f64;
    let mean = ok.iter().map(|o| o.0).sum::<f64>() / k;
    let std_err = if ok.len() > 1 {
        let var = ok.iter().map(|o| (o.0 - mean) * (o.0 - mean)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    let row = RiskRow {
        n,
        replicates: ok.len(),
        mean_sq_err: mean,
        std_err,
        mean_runtime_s: ok.iter().map(|o| o.1).sum::<f64>() / k,
    };
    let run = DimensionRun {
        n,
        j_star: prepared.j_star(),
        steps: prepared.steps(),
        depth: prepared.tree().depth(),
        kappa: prepared.constants().kappa,
        excluded,
        first_error: outcomes.iter().find_map(|o| o.as_ref().err().cloned()),
        build_s: if spec.timing { build_s } else { 0.0 },
    };
    Ok((row, run))
}

/// Runs every `n` and replicate on a pool of `spec.threads` workers and, when
/// `spec.out` is set, writes `risk.csv` and `risk.csv.meta` there.
///
/// Replicate `i` draws its truth and data from ChaCha8 seeded with
/// `seed + i` on stream `n`; results are gathered by index, so the worker
/// count never changes the output.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let (truths, truth_bytes) = TruthSource::load(&spec.truth)?;
    let config_text = spec.to_key_values();
    let mut hashed = config_text.clone().into_bytes();
    hashed.extend_from_slice(&truth_bytes);
    let input_hash = content_hash(&hashed);

    let results: Vec<Result<(RiskRow, DimensionRun)>> = pool(spec.threads)?.install(|| {
        spec.ns
            .par_iter()
            .map(|&n| run_dimension(spec, &truths, n))
            .collect()
    });
    let (rows, runs): (Vec<RiskRow>, Vec<DimensionRun>) = results
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();

    let (fit, fit_note) = match fit_rate(&rows) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let curve = RiskCurve {
        rows,
        fit,
        fit_note,
        predicted_slope: spec.set.predicted_exponent(),
    };
    let csv = risk_csv(&curve.rows);
    let metadata = metadata(spec, &config_text, &input_hash, &curve, &runs);
    if let Some(dir) = &spec.out {
        io::write_text(&dir.join("risk.csv"), &csv)?;
        io::write_text(&dir.join("risk.csv.meta"), &metadata)?;
    }
    Ok(ExperimentOutput {
        curve,
        runs,
        csv,
        metadata,
        input_hash,
    })
}

fn metadata(
    spec: &ExperimentSpec,
    config_text: &str,
    input_hash: &str,
    curve: &RiskCurve,
    runs: &[DimensionRun],
) -> String {
    let mut s = String::from("# metadata for risk.csv; the config block below re-runs it\n");
    writeln!(s, "tool=starmm {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "input_hash=sha256:{input_hash}").unwrap();
    s += config_text;
    writeln!(s, "threads={}", spec.threads).unwrap();
    writeln!(s, "c_resolved={}", spec.estimator.c()).unwrap();
    if let Some(r) = runs.first() {
        writeln!(s, "kappa_resolved={}", r.kappa).unwrap();
    }
    writeln!(
        s,
        "replicate_seeds={}..={} (seed + index, ChaCha8 stream n)",
        spec.seed,
        spec.seed.wrapping_add(spec.replicates as u64 - 1)
    )
    .unwrap();
    writeln!(s, "cloud_seed={}", spec.seed).unwrap();
    writeln!(s, "tree_seed={}", spec.estimator.seed).unwrap();
    for r in runs {
        write!(
            s,
            "run n={} j_star={} steps={} depth={} excluded={}",
            r.n, r.j_star, r.steps, r.depth, r.excluded
        )
        .unwrap();
        if spec.timing {
            write!(s, " build_s={}", r.build_s).unwrap();
        }
        if let Some(e) = &r.first_error {
            write!(s, " first_error={e:?}").unwrap();
        }
        s.push('\n');
    }
    match (&curve.fit, &curve.fit_note) {
        (Some(f), _) => {
            writeln!(s, "fitted_slope={}", f.slope).unwrap();
            writeln!(s, "fitted_slope_ci95={},{}", f.lower, f.upper).unwrap();
        }
        (None, Some(note)) => writeln!(s, "fitted_slope=insufficient ({note})").unwrap(),
        (None, None) => {}
    }
    if let Some(p) = curve.predicted_slope {
        writeln!(s, "predicted_slope={p}").unwrap();
    }
    s += "loss=total squared error |theta_hat - theta|^2 (divide by n for per-coordinate)\n";
    s += "note=risk is averaged over the configured truths; the worst-case (minimax) risk is not estimated\n";
    s
}
