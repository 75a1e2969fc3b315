//! Command-line surface: argument parsing, run manifests and reports.
//!
//! Every invocation is first turned into a [`RunManifest`] (command, input
//! paths, string options, seed, version). [`run`] executes a manifest,
//! writes its output files into the output directory and returns the report
//! that is printed on stdout and saved as `report.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cost;
use crate::error::{Error, Result};
use crate::io::{self, FragmentManifest, KernelEntry};
use crate::kem;
use crate::matrix::{fractional_power, DenseSymMatrix};
use crate::purification::{clinton_iterate, ObservableConstraint, Projector, PurificationOptions};
use crate::scattering::{self, Vec3, POSITION_UNITS, RECIPROCAL_UNITS};
use crate::subspace::{self, DecomposeOptions};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(
    name = "nrep",
    version,
    about = "N-representable density matrices: purification, fitting, fragment assembly"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Idempotency tolerance on tr((P² − P)²).
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol_idem: f64,
    /// Tolerance on every trace constraint.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol_constraint: f64,
    #[arg(long, global = true, default_value_t = 500)]
    pub max_iter: usize,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Purify a symmetric start matrix under a trace target and optional constraints.
    Purify {
        input: PathBuf,
        #[arg(long)]
        trace: f64,
        /// Extra constraint as MATRIX_FILE=TARGET; repeatable.
        #[arg(long = "constraint", value_name = "FILE=TARGET")]
        constraints: Vec<String>,
    },
    /// Fit a projector to structure-factor data.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        trace: f64,
        /// Start matrix; defaults to the scaled identity.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Assemble a whole-system start from kernel densities and purify it.
    Assemble {
        /// Fragment manifest (full_dim, singles, kernels).
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        trace: Option<f64>,
        #[arg(long)]
        overlap: Option<PathBuf>,
        /// Model Hamiltonian; with --occupations and no kernels listed in the
        /// manifest, toy kernels are generated from it.
        #[arg(long)]
        hamiltonian: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        occupations: Vec<usize>,
    },
    /// Decompose a projector into subspace kernel matrices.
    Decompose {
        #[arg(long)]
        projector: PathBuf,
        /// Fragment manifest; only full_dim and singles are used.
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long)]
        strict_idempotency: bool,
    },
    /// Fragment-method cost model.
    Cost {
        #[arg(long, value_enum, default_value_t = CostMode::Table)]
        mode: CostMode,
        #[arg(long, conflicts_with_all = ["plot", "mode"])]
        table: bool,
        #[arg(long, conflicts_with = "mode")]
        plot: bool,
        #[arg(long, value_delimiter = ',')]
        m: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long)]
        mu: Option<u64>,
        /// Significant figures in the table; 0 prints full precision.
        #[arg(long, default_value_t = 1)]
        significant: i32,
    },
    /// Evaluate the electron density of a projector on grid points.
    Density {
        #[arg(long)]
        projector: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        grid: PathBuf,
    },
    /// Generate synthetic structure factors from a reference projector.
    Synthesize {
        #[arg(long)]
        basis: PathBuf,
        /// Reference projector in the orthonormal basis; random when absent.
        #[arg(long)]
        projector: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long)]
        kvectors: Option<PathBuf>,
        /// Number of random scattering vectors when --kvectors is absent.
        #[arg(long, default_value_t = 20)]
        reflections: usize,
        #[arg(long, default_value_t = 1.0)]
        k_scale: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value = "basis")]
        label: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    Table,
    Plot,
    Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Purify,
    Fit,
    Assemble,
    Decompose,
    Cost,
    Density,
    Synthesize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: CommandKind,
    pub inputs: BTreeMap<String, PathBuf>,
    pub options: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: CommandKind) -> Self {
        Self {
            command,
            inputs: BTreeMap::new(),
            options: BTreeMap::new(),
            seed: 0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn input(mut self, key: &str, path: impl Into<PathBuf>) -> Self {
        self.inputs.insert(key.into(), path.into());
        self
    }

    pub fn option(mut self, key: &str, value: impl ToString) -> Self {
        self.options.insert(key.into(), value.to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn path(&self, key: &str) -> Result<&Path> {
        self.inputs
            .get(key)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::invalid(format!("missing input `{key}`")))
    }

    fn opt_path(&self, key: &str) -> Option<&Path> {
        self.inputs.get(key).map(PathBuf::as_path)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.options.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("option `{key}` has invalid value {v:?}"))),
        }
    }

    fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::invalid(format!("missing option `{key}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        match self.options.get(key) {
            None => Ok(Vec::new()),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim().parse().map_err(|_| {
                        Error::invalid(format!("option `{key}` has invalid item {t:?}"))
                    })
                })
                .collect(),
        }
    }

    pub fn purification_options(&self) -> Result<PurificationOptions> {
        let d = PurificationOptions::default();
        let opts = PurificationOptions {
            max_iterations: self.get_or("max_iter", d.max_iterations)?,
            idempotency_tolerance: self.get_or("tol_idem", d.idempotency_tolerance)?,
            constraint_tolerance: self.get_or("tol_constraint", d.constraint_tolerance)?,
            multiplier_regularization: d.multiplier_regularization,
        };
        opts.validate()?;
        Ok(opts)
    }
}

fn join(values: &[impl ToString]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl Cli {
    /// The manifest equivalent of this invocation, plus the output directory.
    pub fn into_manifest(self) -> (RunManifest, PathBuf, usize) {
        let g = self.global;
        let manifest = match self.command {
            CommandArgs::Purify {
                input,
                trace,
                constraints,
            } => {
                let mut m = RunManifest::new(CommandKind::Purify)
                    .input("start", input)
                    .option("trace", trace);
                for (i, c) in constraints.iter().enumerate() {
                    let (file, target) = c.rsplit_once('=').unwrap_or((c.as_str(), ""));
                    m = m
                        .input(&format!("constraint.{i}"), file)
                        .option(&format!("constraint.{i}.target"), target);
                }
                m
            }
            CommandArgs::Fit {
                dataset,
                basis,
                trace,
                init,
            } => {
                let mut m = RunManifest::new(CommandKind::Fit)
                    .input("dataset", dataset)
                    .input("basis", basis)
                    .option("trace", trace);
                if let Some(p) = init {
                    m = m.input("init", p);
                }
                m
            }
            CommandArgs::Assemble {
                manifest,
                trace,
                overlap,
                hamiltonian,
                occupations,
            } => {
                let mut m = RunManifest::new(CommandKind::Assemble).input("manifest", manifest);
                if let Some(t) = trace {
                    m = m.option("trace", t);
                }
                if let Some(p) = overlap {
                    m = m.input("overlap", p);
                }
                if let Some(p) = hamiltonian {
                    m = m.input("hamiltonian", p);
                }
                if !occupations.is_empty() {
                    m = m.option("occupations", join(&occupations));
                }
                m
            }
            CommandArgs::Decompose {
                projector,
                scheme,
                strict_idempotency,
            } => RunManifest::new(CommandKind::Decompose)
                .input("projector", projector)
                .input("scheme", scheme)
                .option("strict_idempotency", strict_idempotency),
            CommandArgs::Cost {
                mode,
                table,
                plot,
                m,
                alpha,
                mu,
                significant,
            } => {
                let mode = if table {
                    CostMode::Table
                } else if plot {
                    CostMode::Plot
                } else {
                    mode
                };
                let mut man = RunManifest::new(CommandKind::Cost)
                    .option(
                        "mode",
                        mode.to_possible_value()
                            .map(|v| v.get_name().to_string())
                            .unwrap_or_default(),
                    )
                    .option("significant", significant);
                if !m.is_empty() {
                    man = man.option("m", join(&m));
                }
                if !alpha.is_empty() {
                    man = man.option("alpha", join(&alpha));
                }
                if let Some(mu) = mu {
                    man = man.option("mu", mu);
                }
                man
            }
            CommandArgs::Density {
                projector,
                basis,
                grid,
            } => RunManifest::new(CommandKind::Density)
                .input("projector", projector)
                .input("basis", basis)
                .input("grid", grid),
            CommandArgs::Synthesize {
                basis,
                projector,
                rank,
                kvectors,
                reflections,
                k_scale,
                noise,
                label,
            } => {
                let mut m = RunManifest::new(CommandKind::Synthesize)
                    .input("basis", basis)
                    .option("noise", noise)
                    .option("label", label);
                match projector {
                    Some(p) => m = m.input("projector", p),
                    None => m = m.option("rank", rank),
                }
                match kvectors {
                    Some(p) => m = m.input("kvectors", p),
                    None => {
                        m = m
                            .option("reflections", reflections)
                            .option("k_scale", k_scale)
                    }
                }
                m
            }
        };
        let manifest = manifest
            .option("tol_idem", g.tol_idem)
            .option("tol_constraint", g.tol_constraint)
            .option("max_iter", g.max_iter)
            .seed(g.seed);
        (manifest, g.out_dir, g.workers)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// `ok`, or `partial` when some per-kernel solves failed.
    pub status: String,
    pub manifest: RunManifest,
    pub purification_options: PurificationOptions,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub results: Value,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Text for stdout: the report JSON, or CSV for cost tables.
    pub stdout: String,
    pub exit_code: i32,
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Outputs<'_> {
    fn matrix(&mut self, name: &str, m: &DenseSymMatrix) -> Result<()> {
        io::write_matrix(&self.dir.join(name), m)?;
        self.written.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|source| Error::Json {
            path: name.into(),
            source,
        })?;
        check_finite(&v, name)?;
        io::write_json(&self.dir.join(name), &v)?;
        self.written.push(name.into());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        io::write_text(&self.dir.join(name), text)?;
        self.written.push(name.into());
        Ok(())
    }
}

/// serde_json turns NaN and infinities into `null`; reports never contain
/// legitimate nulls, so any null means a non-finite number.
fn check_finite(v: &Value, path: &str) -> Result<()> {
    match v {
        Value::Null => Err(Error::invalid(format!("non-finite number at {path}"))),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .try_for_each(|(i, x)| check_finite(x, &format!("{path}[{i}]"))),
        Value::Object(o) => o
            .iter()
            .try_for_each(|(k, x)| check_finite(x, &format!("{path}.{k}"))),
        _ => Ok(()),
    }
}

/// Runs `manifest` on a pool of `workers` threads (0 = all cores).
pub fn run_with_workers(
    manifest: &RunManifest,
    out_dir: &Path,
    workers: usize,
) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run(manifest, out_dir))
}

pub fn run(manifest: &RunManifest, out_dir: &Path) -> Result<RunOutcome> {
    let opts = manifest.purification_options()?;
    let mut out = Outputs {
        dir: out_dir,
        written: Vec::new(),
    };
    let mut warnings = Vec::new();
    let mut stdout = None;
    let mut partial = false;
    let results = match manifest.command {
        CommandKind::Purify => run_purify(manifest, &opts, &mut out)?,
        CommandKind::Fit => run_fit(manifest, &opts, &mut out, &mut warnings)?,
        CommandKind::Assemble => run_assemble(manifest, &opts, &mut out, &mut warnings)?,
        CommandKind::Decompose => run_decompose(manifest, &opts, &mut out, &mut partial)?,
        CommandKind::Cost => run_cost(manifest, &mut out, &mut stdout)?,
        CommandKind::Density => run_density(manifest, &mut out)?,
        CommandKind::Synthesize => run_synthesize(manifest, &mut out)?,
    };
    check_finite(&results, "results")?;
    out.written.push(REPORT_FILE.into());
    let report = RunReport {
        status: if partial { "partial" } else { "ok" }.into(),
        manifest: manifest.clone(),
        purification_options: opts,
        outputs: out.written.clone(),
        warnings,
        results,
    };
    let text = io::to_json_pretty(&report)?;
    io::write_text(&out_dir.join(REPORT_FILE), &text)?;
    Ok(RunOutcome {
        report,
        stdout: stdout.unwrap_or(text),
        exit_code: if partial { 3 } else { 0 },
    })
}

/// Machine-readable error description for stderr.
pub fn error_json(err: &Error) -> String {
    let mut v = json!({
        "error": err.kind(),
        "message": err.to_string(),
        "exit_code": err.exit_code(),
    });
    match err {
        Error::NonConvergence {
            iterations,
            trajectory,
        } => {
            v["iterations"] = json!(iterations);
            v["trajectory"] = json!(trajectory
                .iter()
                .map(|(a, b)| [finite_or_string(*a), finite_or_string(*b)])
                .collect::<Vec<_>>());
        }
        Error::Parse { line, .. } => v["line"] = json!(line),
        _ => {}
    }
    v.to_string()
}

fn finite_or_string(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn projector_summary(p: &Projector) -> Value {
    json!({
        "trace_target": p.trace_target,
        "trace": p.matrix().trace(),
        "iterations": p.iterations_used,
        "residual_idempotency": p.residual_idempotency,
        "residual_constraints": p.residual_constraints,
        "trajectory": p.trajectory.iter().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
    })
}

fn run_purify(m: &RunManifest, opts: &PurificationOptions, out: &mut Outputs) -> Result<Value> {
    let start = io::read_matrix(m.path("start")?)?;
    let trace: f64 = m.require("trace")?;
    let mut constraints = Vec::new();
    for (key, path) in m.inputs.range("constraint.".to_string()..) {
        let Some(idx) = key.strip_prefix("constraint.") else {
            break;
        };
        let target: f64 = m.require(&format!("constraint.{idx}.target"))?;
        constraints.push(ObservableConstraint::new(
            io::read_matrix(path)?,
            target,
            key.clone(),
        ));
    }
    let projector = clinton_iterate(&start, trace, &constraints, opts)?;
    out.matrix("projector.dsm", projector.matrix())?;
    Ok(json!({ "projector": projector_summary(&projector) }))
}

fn run_fit(
    m: &RunManifest,
    opts: &PurificationOptions,
    out: &mut Outputs,
    warnings: &mut Vec<String>,
) -> Result<Value> {
    let dataset = io::read_dataset(m.path("dataset")?)?;
    let basis = io::read_basis(m.path("basis")?)?;
    let trace: f64 = m.require("trace")?;
    let init = m.opt_path("init").map(io::read_matrix).transpose()?;
    let fit = scattering::fit_projector(&dataset, &basis, trace, init.as_ref(), opts)?;
    warnings.extend(fit.warnings.iter().cloned());
    out.matrix("projector.dsm", fit.projector.matrix())?;
    let reflections: Vec<Value> = dataset
        .reflections
        .iter()
        .zip(&fit.calculated)
        .map(|(r, c)| {
            json!({
                "k": r.k,
                "observed": [r.f_re, r.f_im],
                "calculated": [c.re, c.im],
            })
        })
        .collect();
    Ok(json!({
        "r_factor": fit.r_factor,
        "constraint_count": fit.constraint_count,
        "free_parameters": fit.free_parameters,
        "projector": projector_summary(&fit.projector),
        "reflections": reflections,
    }))
}

fn run_assemble(
    m: &RunManifest,
    opts: &PurificationOptions,
    out: &mut Outputs,
    warnings: &mut Vec<String>,
) -> Result<Value> {
    let manifest_path = m.path("manifest")?;
    let fm: FragmentManifest = io::read_json(manifest_path)?;
    let scheme = fm.scheme()?;
    warnings.extend(scheme.warnings());
    let occupations: Vec<usize> = m.list("occupations")?;
    let h = m.opt_path("hamiltonian").map(io::read_matrix).transpose()?;

    let (doubles, singles) =
        match (&h, fm.kernels.is_empty()) {
            (Some(h), true) => kem::toy_kernels(&scheme, h, &occupations)?,
            (None, true) => return Err(Error::invalid(
                "manifest lists no kernels; give --hamiltonian and --occupations to generate them",
            )),
            (_, false) => {
                let base = manifest_path.parent().unwrap_or(Path::new(""));
                fm.load_kernels(&scheme, base)?
            }
        };
    let trace = match m.get::<f64>("trace")? {
        Some(t) => t,
        None if !occupations.is_empty() => occupations.iter().sum::<usize>() as f64,
        None => return Err(Error::invalid("give --trace or --occupations")),
    };

    let r_kem = kem::assemble_r_kem(&scheme, &doubles, &singles)?;
    let s = match m.opt_path("overlap") {
        Some(p) => io::read_matrix(p)?,
        None => DenseSymMatrix::identity(scheme.full_dim()),
    };
    let p0 = kem::lowdin_initial_iterant(&r_kem, &s)?;
    out.matrix("r_kem.dsm", &r_kem)?;
    out.matrix("p0.dsm", &p0)?;
    let projector = kem::purify_assembled(&p0, trace, opts)?;
    out.matrix("projector.dsm", projector.matrix())?;

    let mut results = json!({
        "kernels": {
            "doubles": doubles.iter().map(|k| k.kind.label()).collect::<Vec<_>>(),
            "singles": singles.iter().map(|k| k.kind.label()).collect::<Vec<_>>(),
        },
        "r_kem_trace": r_kem.trace(),
        "p0_trace": p0.trace(),
        "projector": projector_summary(&projector),
    });
    if let Some(h) = &h {
        let h_orth = fractional_power(&s, -0.5)?.sandwich(h);
        let e = kem::model_energy(projector.matrix(), &h_orth)?;
        let occ = trace.round();
        if (occ - trace).abs() > 1e-12 || occ < 0.0 {
            return Err(Error::invalid(format!(
                "trace target {trace} is not an occupation count"
            )));
        }
        let e_aufbau = kem::model_energy(&kem::aufbau_projector(&h_orth, occ as usize)?, &h_orth)?;
        results["energy"] = json!({
            "model": e,
            "aufbau": e_aufbau,
            "difference": e - e_aufbau,
        });
    }
    Ok(results)
}

fn run_decompose(
    m: &RunManifest,
    opts: &PurificationOptions,
    out: &mut Outputs,
    partial: &mut bool,
) -> Result<Value> {
    let p = io::read_matrix(m.path("projector")?)?;
    let fm: FragmentManifest = io::read_json(m.path("scheme")?)?;
    let scheme = fm.scheme()?;
    let dopts = DecomposeOptions {
        purification: *opts,
        strict_idempotency: m.get_or("strict_idempotency", false)?,
    };
    let results = subspace::decompose(&p, &scheme, &dopts)?;

    let mut entries = Vec::new();
    let mut diagnostics = Vec::new();
    let mut solved = Vec::new();
    for (kind, r) in scheme.kernels().into_iter().zip(results) {
        match r {
            Ok(k) => {
                let file = format!("kernels/{}.dsm", kind.label());
                out.matrix(&file, &k.matrix.submatrix(&k.indices))?;
                entries.push(KernelEntry::from_kind(kind, file.clone()));
                diagnostics.push(json!({
                    "kernel": kind.label(),
                    "status": "ok",
                    "matrix_file": file,
                    "diagnostics": serde_json::to_value(&k).map_err(|source| Error::Json {
                        path: "kernel".into(),
                        source,
                    })?,
                }));
                solved.push(k);
            }
            Err(e) => {
                *partial = true;
                log::warn!("kernel {} failed: {e}", kind.label());
                diagnostics.push(json!({
                    "kernel": kind.label(),
                    "status": "failed",
                    "error": e.kind(),
                    "message": e.to_string(),
                }));
            }
        }
    }
    out.json(
        "decomposition.json",
        &FragmentManifest {
            full_dim: scheme.full_dim(),
            singles: scheme.singles().to_vec(),
            kernels: entries,
        },
    )?;
    let mut results = json!({ "kernels": diagnostics });
    if !*partial {
        results["reassembly_residual"] =
            json!(subspace::reassembly_residual(&p, &solved, scheme.n())?);
    }
    Ok(results)
}

fn run_cost(m: &RunManifest, out: &mut Outputs, stdout: &mut Option<String>) -> Result<Value> {
    let mode = match m.options.get("mode").map(String::as_str) {
        None | Some("table") => CostMode::Table,
        Some("plot") => CostMode::Plot,
        Some("query") => CostMode::Query,
        Some(other) => return Err(Error::invalid(format!("unknown cost mode {other:?}"))),
    };
    let mut ms: Vec<u64> = m.list("m")?;
    let mut alphas: Vec<f64> = m.list("alpha")?;
    if ms.is_empty() && mode != CostMode::Query {
        ms = cost::TABLE_M.to_vec();
    }
    if alphas.is_empty() && mode != CostMode::Query {
        alphas = cost::TABLE_ALPHA.to_vec();
    }
    match mode {
        CostMode::Table | CostMode::Plot => {
            let table = cost::table_sweep(&ms, &alphas)?;
            let significant: i32 = m.get_or("significant", 1)?;
            let (name, csv) = if mode == CostMode::Table {
                (
                    "cost_table.csv",
                    table.to_csv((significant > 0).then_some(significant)),
                )
            } else {
                ("cost_plot.csv", table.to_plot_csv())
            };
            out.text(name, &csv)?;
            *stdout = Some(csv);
            Ok(json!({
                "m": table.m_values,
                "alpha": table.alpha_values,
                "relative_time": table.values,
            }))
        }
        CostMode::Query => {
            let (&[mm], &[alpha]) = (ms.as_slice(), alphas.as_slice()) else {
                return Err(Error::invalid(
                    "query mode needs exactly one --m and one --alpha",
                ));
            };
            let mut results = json!({
                "m": mm,
                "alpha": alpha,
                "relative_time": cost::relative_time(mm, alpha)?,
            });
            if let Some(mu) = m.get::<u64>("mu")? {
                let q = cost::CostQuery::new(mm, mu, alpha)?;
                results["mu"] = json!(mu);
                results["full_basis"] = json!(q.full_basis());
                results["direct_cost"] = json!(cost::absolute_cost(q.full_basis(), alpha)?);
                results["kem_cost"] = json!(cost::kem_absolute_cost(&q)?);
                results["ratio"] = json!(cost::relative_time_general(&q)?);
            }
            Ok(results)
        }
    }
}

fn run_density(m: &RunManifest, out: &mut Outputs) -> Result<Value> {
    let p = io::read_matrix(m.path("projector")?)?;
    let basis = io::read_basis(m.path("basis")?)?;
    let grid = io::read_vectors(m.path("grid")?, POSITION_UNITS)?;
    let s_inv_sqrt = fractional_power(&scattering::overlap_matrix(&basis), -0.5)?;
    let rho = scattering::density_on_grid(&p, &basis, &s_inv_sqrt, &grid)?;
    out.json(
        "density.json",
        &json!({ "units": POSITION_UNITS, "points": grid, "density": rho }),
    )?;
    Ok(json!({
        "points": grid.len(),
        "min": rho.iter().copied().fold(f64::INFINITY, f64::min),
        "max": rho.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }))
}

fn run_synthesize(m: &RunManifest, out: &mut Outputs) -> Result<Value> {
    let basis = io::read_basis(m.path("basis")?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let p_ref = match m.opt_path("projector") {
        Some(p) => io::read_matrix(p)?,
        None => random_projector(basis.len(), m.get_or("rank", 2)?, &mut rng)?,
    };
    let ks = match m.opt_path("kvectors") {
        Some(p) => io::read_vectors(p, RECIPROCAL_UNITS)?,
        None => random_kvectors(
            m.get_or("reflections", 20)?,
            m.get_or("k_scale", 1.0)?,
            &mut rng,
        )?,
    };
    let noise: f64 = m.get_or("noise", 0.0)?;
    let label: String = m.get_or("label", "basis".to_string())?;
    let dataset = scattering::synthesize_dataset(&p_ref, &basis, &label, &ks, noise, &mut rng)?;
    out.matrix("reference_projector.dsm", &p_ref)?;
    out.json("dataset.json", &dataset)?;
    Ok(json!({
        "reflections": dataset.reflections.len(),
        "noise_sigma": noise,
        "reference_trace": p_ref.trace(),
    }))
}

/// Projector onto the span of `rank` random Gaussian vectors.
pub fn random_projector<R: Rng + ?Sized>(
    dim: usize,
    rank: usize,
    rng: &mut R,
) -> Result<DenseSymMatrix> {
    if rank > dim {
        return Err(Error::invalid(format!(
            "rank {rank} exceeds dimension {dim}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let terms: Vec<(f64, &[f64])> = basis.iter().map(|v| (1.0, v.as_slice())).collect();
    Ok(DenseSymMatrix::from_weighted_outer(dim, &terms))
}

pub fn random_kvectors<R: Rng + ?Sized>(
    count: usize,
    scale: f64,
    rng: &mut R,
) -> Result<Vec<Vec3>> {
    let normal = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((0..count)
        .map(|_| [normal.sample(rng), normal.sample(rng), normal.sample(rng)])
        .collect())
}
