//! Command-line front end. Every artifact starts with a metadata header carrying the
//! full [`RunConfig`], so a header parses back into the run that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commutator::{self, ModulationProfile};
use crate::corrections::{self, DeltaPiQuadrature};
use crate::error::{Error, Result};
use crate::kernels::{self, Coordinate, KernelKind, MassParam};
use crate::massless_modes::{self, SQuadrature};
use crate::mathieu::{self, Family};
use crate::oracle::{self, Boundary, Prediction};

pub const TOOL: &str = "scalar-eh";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Worker-thread override read by the binary.
pub const THREADS_ENV: &str = "SCALAR_EH_THREADS";

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "scalar-eh", version, about = "Interval kernels and entanglement Hamiltonians of a free scalar")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Common {
    /// Dimensionless mass M = M_phys l.
    #[arg(long, default_value_t = 0.0)]
    pub mass: f64,
    /// Grid size N.
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Highest harmonic of series evaluations (module default when omitted).
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Spectral cutoff of s-integrals.
    #[arg(long)]
    pub s_max: Option<f64>,
    /// Nodes of s-integrals.
    #[arg(long)]
    pub s_nodes: Option<usize>,
    /// Pass threshold for cross-check reports.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Output format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "subcommand")]
pub enum Command {
    /// Characteristic values and cut log-derivatives of the Mathieu families.
    Mathieu {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        /// Mathieu parameter (defaults to M^2/4).
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
        #[arg(long, default_value_t = 4)]
        n_max: usize,
    },
    /// Reduced-density-matrix kernels on a Chebyshev grid.
    Kernels {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = KernelArg::Kc)]
        kind: KernelArg,
        #[arg(long, value_enum, default_value_t = CoordArg::Angular)]
        coordinate: CoordArg,
    },
    /// Massless kernels rebuilt from the analytic Williamson modes.
    Modes {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeKernel::P0)]
        kind: ModeKernel,
    },
    /// Entanglement-Hamiltonian weight and first-order mass correction.
    Eh {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
    },
    /// Cross-checks of the small-mass corrections.
    Corrections {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = CheckArg::Spectral)]
        check: CheckArg,
    },
    /// Commutator case table, leading-order brackets and the large-mass profile ratio.
    Commutator {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ProfileArg::Parabolic)]
        profile: ProfileArg,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        /// Mathieu parameters of the ratio trend.
        #[arg(long, value_delimiter = ',', default_values_t = vec![25.0, 100.0, 400.0])]
        qs: Vec<f64>,
        /// Extra CSV of the ratio trend.
        #[arg(long)]
        ratio_csv: Option<PathBuf>,
    },
    /// Lattice chain oracle compared with a continuum prediction.
    Oracle {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        #[arg(long, default_value_t = 512)]
        sites: usize,
        #[arg(long, default_value_t = 64)]
        interval: usize,
        /// M_phys l with l half the interval; 0 selects the regulated massless chain.
        #[arg(long, default_value_t = 0.0)]
        mass_times_length: f64,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long, value_enum, default_value_t = CompareArg::Massless)]
        compare: CompareArg,
        /// Working precision in bits (size-based default when omitted).
        #[arg(long)]
        precision: Option<u32>,
        /// CSV dump of the Hpi and Hphi matrices.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    CeEven,
    CeOdd,
    SeOdd,
    SeEven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Kc,
    Ks,
    Q0,
    Q0inv,
    P0,
    P0inv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordArg {
    Angular,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKernel {
    P0,
    P0inv,
    Q0inv,
    Q0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckArg {
    Spectral,
    Fourier,
    Perturbative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileArg {
    Parabolic,
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareArg {
    Massless,
    Triangle,
    SmallMass,
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Mathieu { common, .. }
            | Command::Kernels { common, .. }
            | Command::Modes { common, .. }
            | Command::Eh { common }
            | Command::Corrections { common, .. }
            | Command::Commutator { common, .. }
            | Command::Oracle { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Mathieu { .. } => "mathieu",
            Command::Kernels { .. } => "kernels",
            Command::Modes { .. } => "modes",
            Command::Eh { .. } => "eh",
            Command::Corrections { .. } => "corrections",
            Command::Commutator { .. } => "commutator",
            Command::Oracle { .. } => "oracle",
        }
    }
}

impl Common {
    pub fn format(&self) -> Format {
        self.format.unwrap_or_else(|| format_for(&self.out))
    }
}

fn format_for(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
        _ => Format::Csv,
    }
}

impl RunConfig {
    /// Tolerances in effect: module defaults overridden by `--tolerance`.
    pub fn tolerances(&self) -> Value {
        let t = self.command.common().tolerance;
        match &self.command {
            Command::Kernels { .. } => json!({ "series_settle": 1e-8 }),
            Command::Modes { .. } => json!({ "pass": t.unwrap_or(1e-5) }),
            Command::Corrections { check, .. } => match check {
                CheckArg::Fourier => json!({ "pass": t.unwrap_or(1e-8) }),
                CheckArg::Spectral => json!({ "pass": t.unwrap_or(1e-5) }),
                CheckArg::Perturbative => json!({ "pass": t.unwrap_or(1e-10), "degeneracy_window": corrections::DEGENERACY_WINDOW }),
            },
            Command::Commutator { .. } => json!({
                "precise_agreement": 1e-10,
                "precise_bits": commutator::PRECISE_BITS,
                "selector_product": t.unwrap_or(1e-12),
            }),
            Command::Oracle { .. } => json!({ "route_agreement": 1e-9, "epsilon_agreement": 1e-10 }),
            Command::Mathieu { .. } | Command::Eh { .. } => json!({}),
        }
    }

    pub fn metadata(&self) -> Value {
        json!({ "tool": TOOL, "version": VERSION, "config": self, "tolerances": self.tolerances() })
    }

    /// `#`-prefixed header lines of CSV artifacts.
    pub fn csv_header(&self) -> String {
        format!(
            "# {TOOL} {VERSION}\n# config: {}\n# tolerances: {}\n",
            serde_json::to_string(self).expect("config serializes"),
            self.tolerances()
        )
    }
}

/// Recovers the configuration from the header of a CSV or JSON artifact.
pub fn parse_header(text: &str) -> Result<RunConfig> {
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text)?;
        let cfg = v.pointer("/metadata/config").ok_or_else(|| Error::Invalid("no metadata.config in JSON artifact".into()))?;
        return Ok(serde_json::from_value(cfg.clone())?);
    }
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(cfg) = line.strip_prefix("# config: ") {
            return Ok(serde_json::from_str(cfg)?);
        }
    }
    Err(Error::Invalid("no config line in CSV header".into()))
}

struct Artifact {
    path: PathBuf,
    body: String,
}

fn json_artifact(cfg: &RunConfig, path: &Path, report: Value) -> Result<Artifact> {
    let doc = json!({ "metadata": cfg.metadata(), "report": report });
    Ok(Artifact { path: path.to_path_buf(), body: serde_json::to_string_pretty(&doc)? + "\n" })
}

fn csv_artifact(cfg: &RunConfig, path: &Path, body: String) -> Artifact {
    Artifact { path: path.to_path_buf(), body: cfg.csv_header() + &body }
}

fn artifact(cfg: &RunConfig, report: Value, csv: impl FnOnce() -> Result<String>) -> Result<Artifact> {
    let common = cfg.command.common();
    match common.format() {
        Format::Json => json_artifact(cfg, &common.out, report),
        Format::Csv => Ok(csv_artifact(cfg, &common.out, csv()?)),
    }
}

/// Runs the command and writes its artifacts. Nothing is left on disk when any step fails.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let artifacts = build(cfg)?;
    let mut written = Vec::new();
    for a in &artifacts {
        if let Err(e) = write_atomic(&a.path, &a.body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(a.path.clone());
    }
    Ok(written)
}

fn write_atomic(path: &Path, body: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let res = fs::write(&tmp, body).and_then(|_| fs::rename(&tmp, path));
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

fn family(f: FamilyArg) -> Family {
    match f {
        FamilyArg::CeEven => Family::CeEven,
        FamilyArg::CeOdd => Family::CeOdd,
        FamilyArg::SeOdd => Family::SeOdd,
        FamilyArg::SeEven => Family::SeEven,
    }
}

fn quadrature(common: &Common, default: SQuadrature) -> SQuadrature {
    SQuadrature { s_max: common.s_max.unwrap_or(default.s_max), nodes: common.s_nodes.unwrap_or(default.nodes) }
}

fn build(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let common = cfg.command.common();
    if common.grid == 0 {
        return Err(Error::Invalid("--grid must be positive".into()));
    }
    match &cfg.command {
        Command::Mathieu { q, family: fam, n_max, .. } => {
            let q = q.unwrap_or_else(|| MassParam { m: common.mass, q: common.mass * common.mass / 4.0 }.q);
            if !(q >= 0.0) || !q.is_finite() {
                return Err(Error::Domain(format!("q must be finite and >= 0, got {q}")));
            }
            let families: Vec<Family> = match fam {
                Some(f) => vec![family(*f)],
                None => vec![Family::CeEven, Family::CeOdd, Family::SeOdd, Family::SeEven],
            };
            let trunc = common.truncation.unwrap_or_else(|| kernels::default_truncation(q).min(60) + 2 * n_max);
            let mut rows = Vec::new();
            for f in families {
                for sol in mathieu::solve_characteristic(q, f, *n_max, trunc)? {
                    let ld = if q > 0.0 { Some(mathieu::log_derivative(&sol)?) } else { None };
                    rows.push(json!({
                        "family": f, "n": sol.index(), "order": sol.order, "q": q,
                        "char_value": sol.char_value, "log_derivative": ld,
                    }));
                }
            }
            let report = Value::Array(rows.clone());
            Ok(vec![artifact(cfg, report, || {
                let mut s = String::from("family, n, order, q, char_value, log_derivative\n");
                for r in &rows {
                    let ld = r["log_derivative"].as_f64().map_or("nan".into(), |v| format!("{v:.17e}"));
                    writeln!(
                        s,
                        "{}, {}, {}, {:.17e}, {:.17e}, {ld}",
                        r["family"].as_str().unwrap_or(""),
                        r["n"],
                        r["order"],
                        q,
                        r["char_value"].as_f64().unwrap_or(f64::NAN)
                    )
                    .unwrap();
                }
                Ok(s)
            })?])
        }
        Command::Kernels { kind, coordinate, .. } => {
            let grid = kernels::chebyshev_grid(common.grid);
            let mass = MassParam::new(common.mass)?;
            let massless = common.mass == 0.0;
            let k = match kind {
                KernelArg::Kc if massless => kernels::kernel_kc0(&grid)?,
                KernelArg::Ks if massless => kernels::kernel_ks0(&grid)?,
                KernelArg::Kc => kernels::kernel_kc(mass, &grid, common.truncation)?,
                KernelArg::Ks => kernels::kernel_ks(mass, &grid, common.truncation)?,
                other if !massless => {
                    return Err(Error::Invalid(format!("{other:?} is only available in closed form at --mass 0")));
                }
                KernelArg::Q0 => kernels::q0_closed(&grid)?,
                KernelArg::Q0inv => kernels::q0_inverse_closed(&grid)?,
                KernelArg::P0 => kernels::p0_closed(&grid)?,
                KernelArg::P0inv => kernels::p0_inverse_closed(&grid)?,
            };
            let k = match (coordinate, k.coordinate) {
                (CoordArg::Linear, Coordinate::Angular) => kernels::to_linear_coordinates(&k),
                _ => k,
            };
            let report = serde_json::to_value(&k)?;
            Ok(vec![artifact(cfg, report, || {
                let mut buf = Vec::new();
                k.write_csv(&mut buf)?;
                Ok(String::from_utf8(buf).expect("ascii csv"))
            })?])
        }
        Command::Modes { kind, .. } => {
            let kk = match kind {
                ModeKernel::P0 => KernelKind::P0,
                ModeKernel::P0inv => KernelKind::P0inv,
                ModeKernel::Q0inv => KernelKind::Q0inv,
                ModeKernel::Q0 => KernelKind::Q0,
            };
            let grid = kernels::chebyshev_grid(common.grid);
            let rep = massless_modes::reconstruction_report(kk, &grid, &quadrature(common, SQuadrature::default()))?;
            let tol = common.tolerance.unwrap_or(1e-5);
            let mut report = serde_json::to_value(&rep)?;
            report["pass"] = json!(rep.max_relative_deviation <= tol);
            Ok(vec![artifact(cfg, report, || {
                let mut buf = Vec::new();
                rep.write_csv(&mut buf)?;
                Ok(String::from_utf8(buf).expect("ascii csv"))
            })?])
        }
        Command::Eh { .. } => {
            let grid = kernels::chebyshev_grid(common.grid);
            let x: Vec<f64> = grid.iter().map(|v| v.cos()).collect();
            let weight: Vec<f64> = x.iter().map(|&x| massless_modes::eh_weight_massless(x)).collect();
            let params = if common.mass > 0.0 { Some(corrections::correction_params(common.mass)?) } else { None };
            let n = x.len();
            let mut delta = vec![0.0; n * n];
            if let Some(p) = &params {
                for i in 0..n {
                    for j in 0..n {
                        delta[i * n + j] = corrections::delta_eh_pi(x[i], x[j], p)?;
                    }
                }
            }
            let phi = params.as_ref().map(corrections::delta_eh_phi_terms);
            let report = json!({
                "mass": common.mass,
                "x": x, "weight": weight, "delta_eh_pi": delta,
                "delta_eh_phi": phi, "lambda": params.as_ref().map(|p| p.lambda),
                "warnings": params.as_ref().map(|p| p.warnings.clone()).unwrap_or_default(),
            });
            Ok(vec![artifact(cfg, report, || {
                let mut s = String::from("i, j, x_i, x_j, weight_i, delta_eh_pi\n");
                for i in 0..n {
                    for j in 0..n {
                        writeln!(s, "{i}, {j}, {:.17e}, {:.17e}, {:.17e}, {:.17e}", x[i], x[j], weight[i], delta[i * n + j]).unwrap();
                    }
                }
                Ok(s)
            })?])
        }
        Command::Corrections { check, .. } => {
            let report = match check {
                CheckArg::Fourier => {
                    let rep = corrections::delta_eh_phi_spectral_identity()?;
                    let tol = common.tolerance.unwrap_or(1e-8);
                    let mut v = serde_json::to_value(&rep)?;
                    v["pass"] = json!(rep.max_deviation <= tol);
                    v
                }
                CheckArg::Spectral => {
                    let params = corrections::correction_params(common.mass)?;
                    params.require_small_mass()?;
                    let grid = kernels::chebyshev_grid(common.grid.min(16));
                    let rep = corrections::delta_eh_pi_spectral_report(&grid, &params, DeltaPiQuadrature::default())?;
                    let tol = common.tolerance.unwrap_or(1e-5);
                    let mut v = serde_json::to_value(&rep)?;
                    v["pass"] = json!(rep.max_relative_deviation <= tol);
                    v["warnings"] = json!(params.warnings);
                    v
                }
                CheckArg::Perturbative => {
                    let params = corrections::correction_params(common.mass)?;
                    params.require_small_mass()?;
                    let sgrid = corrections::symmetric_s_grid(&quadrature(common, SQuadrature { s_max: 3.0, nodes: 160 }));
                    let modes = corrections::perturbation_modes(&sgrid, &params)?;
                    let grid = kernels::chebyshev_grid(common.grid.min(16));
                    let mut pairs = Vec::new();
                    let mut worst = 0.0f64;
                    for &u in &grid {
                        for &v in &grid {
                            let pert = modes.delta_eh_pi(u, v);
                            let direct = corrections::direct_box_sum(u, v, &sgrid, &params);
                            let dev = (pert - direct).abs() / direct.abs().max(f64::MIN_POSITIVE);
                            worst = worst.max(dev);
                            pairs.push(json!({ "u": u, "v": v, "perturbative": pert, "box_sum": direct, "deviation": dev }));
                        }
                    }
                    let tol = common.tolerance.unwrap_or(1e-10);
                    json!({
                        "M": common.mass, "lambda": params.lambda, "pairs": pairs,
                        "max_relative_deviation": worst, "pass": worst <= tol,
                        "warnings": params.warnings.iter().chain(&modes.warnings).collect::<Vec<_>>(),
                    })
                }
            };
            if common.format() == Format::Csv {
                return Err(Error::Invalid("corrections reports are JSON only".into()));
            }
            Ok(vec![json_artifact(cfg, &common.out, report)?])
        }
        Command::Commutator { profile, n_max, qs, ratio_csv, .. } => {
            let prof = match profile {
                ProfileArg::Parabolic => ModulationProfile::parabolic(),
                ProfileArg::Triangular => ModulationProfile::triangular(),
            };
            let table = commutator::case_table(&prof, *n_max);
            let leading: Vec<_> = (0..=*n_max)
                .flat_map(|a| (0..=*n_max).map(move |b| commutator::leading_order_bracket(a, b)))
                .collect();
            let mass = MassParam::new(common.mass)?;
            let mut elements = Vec::new();
            if common.mass == 0.0 {
                for m1 in 0..=*n_max {
                    for m2 in 1..=*n_max {
                        if (m1 + m2) % 2 == 1 {
                            let value = commutator::commutator_element(m1, m2, &ModulationProfile::parabolic(), mass)?;
                            elements.push(json!({ "m1": m1, "m2": m2, "profile": "parabolic", "value": value }));
                        }
                    }
                }
            }
            let trend = commutator::profile_ratio_trend(qs)?;
            let decreasing = trend.windows(2).all(|w| w[1].ratio < w[0].ratio);
            let report = json!({
                "profile": prof.name, "delta": prof.delta, "beta": prof.beta,
                "case_table": table, "leading_order": leading,
                "massless_elements": elements,
                "ratio_trend": trend, "ratio_decreasing": decreasing,
            });
            if common.format() == Format::Csv {
                return Err(Error::Invalid("the commutator case table is JSON only; use --ratio-csv for the trend".into()));
            }
            let mut out = vec![json_artifact(cfg, &common.out, report)?];
            if let Some(path) = ratio_csv {
                let mut s = String::from("q, parabolic, triangular, ratio\n");
                for p in &trend {
                    writeln!(s, "{:.17e}, {:.17e}, {:.17e}, {:.17e}", p.q, p.parabolic, p.triangular, p.ratio).unwrap();
                }
                out.push(csv_artifact(cfg, path, s));
            }
            Ok(out)
        }
        Command::Oracle { sites, interval, mass_times_length, spacing, compare, precision, dump, .. } => {
            if *interval > *sites || *interval < 2 * oracle::EDGE_SITES + 4 {
                return Err(Error::Invalid(format!("interval of {interval} sites does not fit a {sites}-site chain")));
            }
            let sites_held = oracle::centred_interval(*sites, *interval);
            let l = 0.5 * *interval as f64 * spacing;
            let eh_for = |ml: f64| -> Result<oracle::LatticeEH> {
                let chain = if ml == 0.0 {
                    oracle::build_regulated_chain(*sites, *spacing)?
                } else {
                    oracle::build_chain(*sites, *spacing, ml / l, Boundary::Periodic)?
                };
                let sub = oracle::reduce(&chain, &sites_held)?;
                let prec = precision.unwrap_or_else(|| oracle::default_precision(*interval));
                oracle::entanglement_hamiltonian_with_precision(&sub, prec)
            };
            let eh = eh_for(*mass_times_length)?;
            let reference;
            let prediction = match compare {
                CompareArg::Massless => Prediction::MasslessWeight,
                CompareArg::Triangle => Prediction::LargeMassTriangle,
                CompareArg::SmallMass => {
                    reference = eh_for(0.0)?;
                    Prediction::SmallMassDelta { massless: &reference }
                }
            };
            let records = oracle::compare_continuum(&eh, prediction)?;
            let report = json!({
                "comparisons": records,
                "pass": records.iter().all(|r| r.pass != Some(false)),
                "entropy": oracle::entanglement_entropy(&eh.modes),
                "max_epsilon": eh.modes.iter().map(|m| m.epsilon).fold(0.0, f64::max),
                "route_deviation": eh.route_deviation,
                "epsilon_deviation": eh.epsilon_deviation,
                "precision": eh.precision,
                "x": eh.x,
                "weight_profile": eh.weight_profile(),
                "diagonal_profile": eh.diagonal_profile(),
            });
            if common.format() == Format::Csv {
                return Err(Error::Invalid("oracle reports are JSON only; use --dump for matrices".into()));
            }
            let mut out = vec![json_artifact(cfg, &common.out, report)?];
            if let Some(path) = dump {
                let mut s = String::from("i, j, x_i, x_j, hpi, hphi\n");
                for i in 0..eh.n_int {
                    for j in 0..eh.n_int {
                        writeln!(s, "{i}, {j}, {:.17e}, {:.17e}, {:.17e}, {:.17e}", eh.x[i], eh.x[j], eh.hpi[(i, j)], eh.hphi[(i, j)]).unwrap();
                    }
                }
                out.push(csv_artifact(cfg, path, s));
            }
            Ok(out)
        }
    }
}

/// Exit status for a failed run: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("scalar-eh").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn csv_header_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("kc0.csv");
        let cfg = parse(&["kernels", "--mass", "0", "--grid", "8", "--out", out.to_str().unwrap()]);
        run(&cfg).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("# scalar-eh "));
        assert_eq!(parse_header(&text).unwrap(), cfg);
    }

    #[test]
    fn json_header_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("fourier.json");
        let cfg = parse(&["corrections", "--check", "fourier", "--tolerance", "1e-7", "--out", out.to_str().unwrap()]);
        run(&cfg).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(parse_header(&text).unwrap(), cfg);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["report"]["pass"], json!(true));
        assert_eq!(v["metadata"]["tolerances"]["pass"], json!(1e-7));
    }

    #[test]
    fn runs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        for p in [&a, &b] {
            run(&parse(&["kernels", "--mass", "0.3", "--grid", "6", "--kind", "ks", "--out", p.to_str().unwrap()])).unwrap();
        }
        let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
        // headers differ only in the output path
        let body = |t: &str| t.lines().filter(|l| !l.starts_with("# config")).collect::<Vec<_>>().join("\n");
        assert_eq!(body(&ta), body(&tb));
    }

    #[test]
    fn failures_leave_no_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bad.json");
        let cfg = parse(&["corrections", "--mass", "0.5", "--check", "spectral", "--out", out.to_str().unwrap()]);
        let err = run(&cfg).unwrap_err();
        assert_eq!(exit_code(&err), 1);
        assert!(!out.exists());
        let missing = dir.path().join("no/such/dir/x.csv");
        let cfg = parse(&["eh", "--grid", "4", "--out", missing.to_str().unwrap()]);
        assert!(run(&cfg).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::NonConvergence("x".into())), 2);
        assert_eq!(exit_code(&Error::Invalid("x".into())), 1);
    }

    #[test]
    fn format_inference() {
        assert_eq!(format_for(Path::new("r.JSON")), Format::Json);
        assert_eq!(format_for(Path::new("grid.csv")), Format::Csv);
        assert_eq!(format_for(Path::new("noext")), Format::Csv);
    }

    #[test]
    fn mathieu_table_at_zero_q() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("m.json");
        run(&parse(&["mathieu", "--q", "0", "--n-max", "2", "--family", "ce-even", "--out", out.to_str().unwrap()])).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        let rows = v["report"].as_array().unwrap();
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r["char_value"].as_f64().unwrap().round(), (4 * k * k) as f64);
        }
    }

    #[test]
    fn oracle_dump_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o.json");
        let dump = dir.path().join("h.csv");
        let cfg = parse(&[
            "oracle", "--sites", "128", "--interval", "16", "--compare", "massless",
            "--out", out.to_str().unwrap(), "--dump", dump.to_str().unwrap(),
        ]);
        assert_eq!(run(&cfg).unwrap().len(), 2);
        let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert!(v["report"]["comparisons"].as_array().unwrap().iter().any(|r| r["metric_name"] == "weight_parabola_correlation"));
        assert_eq!(parse_header(&fs::read_to_string(&dump).unwrap()).unwrap(), cfg);
    }
}
