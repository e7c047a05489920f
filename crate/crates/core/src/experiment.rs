//! End-to-end runs: weight analysis, search, diagnostics, manifest and CSV
//! output.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nonlinearity::{check_hypotheses, ExtendedField, HypothesisReport, SampleGrid};
use crate::oscillation::count_zeros_diff;
use crate::periodic::{necessary_condition_residuals, search, shifted_distance, PeriodicOrbit, SearchReport};
use crate::spectral::{dirichlet_eigenvalue, verify_morse};
use crate::weights::{decompose_humps, mean_value, mu_sharp, SignedInterval, DEFAULT_SIGN_TOL};

pub const SCHEMA_VERSION: &str = "subharmonic-manifest/1";

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub period: f64,
    pub mu: f64,
    pub m: usize,
    pub intervals: Vec<SignedInterval>,
    pub mu_sharp: f64,
    /// `∫₀^{kT} q`.
    pub mean_value: f64,
    /// `mean_value < 0`, i.e. `μ > μ^#`.
    pub gate_ok: bool,
    /// First Dirichlet eigenvalue of `φ'' + λ a⁺ φ = 0` on each positive hump.
    pub lambda1_per_hump: Vec<Option<f64>>,
}

pub fn weight_report(cfg: &RunConfig) -> Result<WeightReport> {
    let w = cfg.weight_spec()?;
    let part = decompose_humps(&w, DEFAULT_SIGN_TOL)?;
    let mean = mean_value(&w, cfg.k as usize);
    let lambda1_per_hump = (1..=part.m())
        .into_par_iter()
        .map(|i| dirichlet_eigenvalue(&w, i).ok().and_then(finite))
        .collect();
    Ok(WeightReport {
        period: w.period,
        mu: w.mu,
        m: part.m(),
        intervals: part.intervals.clone(),
        mu_sharp: mu_sharp(&w)?,
        mean_value: mean,
        gate_ok: mean < 0.0,
        lambda1_per_hump,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    #[serde(flatten)]
    pub sampled: HypothesisReport,
    /// Top-decade `g(s)/s` exceeds every hump's `λ₁`.
    pub liminf_exceeds_lambda1: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitEntry {
    pub index: usize,
    pub k: u32,
    pub string: String,
    pub y0: [f64; 2],
    pub section: f64,
    pub residual: f64,
    pub iterations: usize,
    pub minimal: bool,
    pub class_id: usize,
    pub t_periodic: bool,
    pub max_per_hump: Vec<f64>,
    /// `|∫ q g(u)|` over one period.
    pub balance_residual: f64,
    /// `|k∫q + ∫(u'/g(u))² g'(u)|` over one period.
    pub energy_residual: f64,
    pub monodromy: [[f64; 2]; 2],
    pub monodromy_det: f64,
    /// `|det M − e^{−ckT}| / e^{−ckT}`.
    pub liouville_error: f64,
    /// `λ₀` of `v'' + ∂_s f(t, u(t)) v`; only for `T`-periodic orbits.
    pub lambda0: Option<f64>,
    pub lambda0_error: Option<String>,
    pub csv: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: usize,
    pub canonical: String,
    pub members: Vec<usize>,
    pub shifts: Vec<usize>,
    pub minimal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationEntry {
    pub orbit: usize,
    pub orbit_class: usize,
    pub reference: usize,
    pub reference_class: usize,
    pub zero_count: Option<usize>,
    pub j: Option<usize>,
    pub winding: Option<f64>,
    pub tangencies: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub k: u32,
    pub m: usize,
    pub r: Option<f64>,
    pub big_r: Option<f64>,
    pub seeds_tried: usize,
    pub newton_failures: usize,
    pub rejected: usize,
    pub truncation: Option<f64>,
    pub predicted_classes: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub config: RunConfig,
    pub nonlinearity: String,
    pub weight: WeightReport,
    pub hypotheses: Hypotheses,
    pub search: SearchSummary,
    pub orbits: Vec<OrbitEntry>,
    pub classes: Vec<ClassEntry>,
    pub oscillation: Vec<OscillationEntry>,
}

/// A finished run: the manifest plus the solved orbits it describes.
pub struct Experiment {
    pub manifest: Manifest,
    pub field: ExtendedField,
    pub orbits: Vec<PeriodicOrbit>,
}

fn is_t_periodic(o: &PeriodicOrbit, period: f64, tol: f64) -> bool {
    o.order_k == 1 || shifted_distance(o, o, period) < tol
}

fn orbit_entries(field: &ExtendedField, report: &SearchReport, tol: f64) -> Vec<OrbitEntry> {
    let period = field.weight.period;
    report
        .orbits
        .par_iter()
        .enumerate()
        .map(|(index, o)| {
            let (balance, energy) = necessary_condition_residuals(o, field);
            let expected = (-field.friction * o.period()).exp();
            let t_periodic = is_t_periodic(o, period, tol);
            let (lambda0, lambda0_error) = if t_periodic {
                match verify_morse(o, field) {
                    Ok((l, _)) => (finite(l), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            } else {
                (None, None)
            };
            OrbitEntry {
                index,
                k: o.order_k,
                string: o.string.to_string(),
                y0: o.y0,
                section: o.section,
                residual: o.residual,
                iterations: o.iterations,
                minimal: o.minimal,
                class_id: o.class_id,
                t_periodic,
                max_per_hump: o.max_per_hump.clone(),
                balance_residual: balance,
                energy_residual: energy,
                monodromy: o.monodromy.m,
                monodromy_det: o.monodromy.det,
                liouville_error: (o.monodromy.det - expected).abs() / expected,
                lambda0,
                lambda0_error,
                csv: None,
            }
        })
        .collect()
}

/// Pairs of distinct orbits against each `T`-periodic reference from another
/// class. With `k = 1` each unordered pair is reported once.
fn oscillation_entries(orbits: &[PeriodicOrbit], entries: &[OrbitEntry]) -> Vec<OscillationEntry> {
    let mut pairs = Vec::new();
    for (i, o) in entries.iter().enumerate() {
        for (j, r) in entries.iter().enumerate() {
            if i == j || !r.t_periodic || o.class_id == r.class_id {
                continue;
            }
            if o.t_periodic && j < i {
                continue;
            }
            pairs.push((i, j));
        }
    }
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let (o, r) = (&orbits[i], &orbits[j]);
            let mut e = OscillationEntry {
                orbit: i,
                orbit_class: o.class_id,
                reference: j,
                reference_class: r.class_id,
                zero_count: None,
                j: None,
                winding: None,
                tangencies: 0,
                error: None,
            };
            match count_zeros_diff(o, r) {
                Ok(rep) => {
                    e.zero_count = Some(rep.zero_count);
                    e.j = rep.j_index;
                    e.winding = finite(rep.winding_turns);
                    e.tangencies = rep.tangencies.len();
                }
                Err(err) => e.error = Some(err.to_string()),
            }
            e
        })
        .collect()
}

fn run(cfg: &RunConfig) -> Result<Experiment> {
    let weight = weight_report(cfg)?;
    let field = cfg.field()?;
    let sampled = check_hypotheses(&field.nonlinearity, SampleGrid::default());
    let lambdas: Option<Vec<f64>> = weight.lambda1_per_hump.iter().copied().collect();
    let liminf_exceeds_lambda1 = lambdas.map(|ls| ls.iter().all(|&l| sampled.liminf_ratio > l));
    let hypotheses = Hypotheses { sampled, liminf_exceeds_lambda1 };

    let report = search(&field, &cfg.search_options()?)?;
    let mut orbits = orbit_entries(&field, &report, cfg.dedup_tol);
    let oscillation = oscillation_entries(&report.orbits, &orbits);
    let classes = report
        .classes
        .iter()
        .map(|c| ClassEntry {
            id: c.id,
            canonical: c.canonical.to_string(),
            members: c.members.clone(),
            shifts: c.shifts.clone(),
            minimal: c.minimal,
        })
        .collect();
    for o in orbits.iter_mut() {
        o.csv = Some(csv_name(o));
    }
    let search = SearchSummary {
        k: report.k,
        m: report.m,
        r: finite(report.r),
        big_r: finite(report.big_r),
        seeds_tried: report.seeds_tried,
        newton_failures: report.newton_failures,
        rejected: report.rejected.len(),
        truncation: report.truncation,
        predicted_classes: predicted_classes(report.m, report.k),
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        config: cfg.clone(),
        nonlinearity: field.nonlinearity.kind().into(),
        weight,
        hypotheses,
        search,
        orbits,
        classes,
        oscillation,
    };
    Ok(Experiment { manifest, field, orbits: report.orbits })
}

/// Lower bound on the number of classes: `2^m − 1` nonzero letters for
/// `k = 1` (the zero letter is the trivial solution), `S_{2^m}(k)` beyond.
fn predicted_classes(m: usize, k: u32) -> String {
    let s = crate::combinatorics::predicted_subharmonic_count(m as u32, k as u64);
    if k == 1 {
        (s - 1u32).to_string()
    } else {
        s.to_string()
    }
}

fn csv_name(o: &OrbitEntry) -> String {
    let bits: String = o.string.chars().filter(|c| c.is_ascii_digit()).collect();
    format!("orbit_{:02}_{}.csv", o.index, bits)
}

/// Runs the whole pipeline; writes `manifest.json` and one CSV per orbit
/// when the config names an output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let exp = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(|| run(cfg))?
    } else {
        run(cfg)?
    };
    if let Some(dir) = &cfg.output_dir {
        exp.write(dir, cfg.csv_stride())?;
    }
    Ok(exp)
}

impl Experiment {
    pub fn write(&self, dir: &Path, stride: f64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (o, e) in self.orbits.iter().zip(&self.manifest.orbits) {
            if let Some(name) = &e.csv {
                export_csv(o, &dir.join(name), stride)?;
            }
        }
        write_manifest(&self.manifest, &dir.join("manifest.json"))?;
        Ok(())
    }
}

pub fn write_manifest(m: &Manifest, path: &Path) -> Result<PathBuf> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, m)?;
    std::io::Write::write_all(&mut f, b"\n")?;
    Ok(path.to_path_buf())
}

/// `t,u,up` samples over one period from the section time, every `stride`.
pub fn export_csv(orbit: &PeriodicOrbit, path: &Path, stride: f64) -> Result<()> {
    if !(stride > 0.0) || !stride.is_finite() {
        return Err(Error::BadParams(format!("CSV stride must be positive, got {stride}")));
    }
    let f = BufWriter::new(File::create(path)?);
    orbit.trajectory.write_csv(f, orbit.section, orbit.period(), stride, true)?;
    Ok(())
}
