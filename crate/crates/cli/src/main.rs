//! `dyadica`: norms, transforms, trace runs and checker suites from the command line.
//!
//! Every subcommand prints (or writes with `--out`) one JSON report holding the
//! tool version, the resolved configuration and the result. Exit status is 0 on
//! success, 2 when an input is refused and 1 on internal failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dyadica::ad::{empirical_norm, AdMatrix, DefExponents, Ensemble};
use dyadica::czo::{czk_check, intermediate_derivative_check, Kernel, ShellGeometry};
use dyadica::dyadic::{DyadicCube, LatticeWindow};
use dyadica::io;
use dyadica::molecules::{make_atom, validate_molecule, MoleculeCandidate, ValidationGrid};
use dyadica::params::{
    ad_region, cancellation_threshold, classical_equivalent, czo_conditions, derived_indices, molecule_param_sets,
    trace_threshold, wavelet_smoothness_required, MoleculeParams, SpaceParams,
};
use dyadica::seq::{seq_norm_averaged, seq_norm_plain, seq_norm_weighted, NormSpec};
use dyadica::trace::{hyperplane_grid, restrict_to_hyperplane, trace_coeffs, trace_norm_report, TracePair};
use dyadica::wavelets::{analyze, synthesize, wavelet_norm, FunctionSample, WaveletCoeffs, WaveletSystem};
use dyadica::weights::{
    ap_characteristic, ap_dimension_estimate, reducing_operator, QuadratureSpec, ReducingFamily, SharedWeight, WeightSpec,
};
use dyadica::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "dyadica", version, about = "Matrix-weighted sequence spaces, wavelets and kernel checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
struct Common {
    /// Space parameters, JSON `{"family": "B"|"F", "s", "tau", "p", "q"}` (q may be "inf").
    #[arg(long)]
    space: Option<PathBuf>,
    /// Matrix weight, JSON with a `kind` field.
    #[arg(long, alias = "weightW")]
    weight: Option<PathBuf>,
    /// Lattice window `j_min:j_max:lo..hi`, box in level-j_min units; per-axis bounds as `lo1,lo2..hi1,hi2`.
    #[arg(long)]
    window: Option<String>,
    /// Quadrature `points:depth` per cube.
    #[arg(long, default_value = "4:2")]
    quad: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// A_p-dimension of the weight.
    #[arg(long, default_value_t = 0.0)]
    d: f64,
    /// Ambient dimension when no weight or sample fixes it.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Derived indices and threshold tables for a parameter set.
    Params {
        #[command(flatten)]
        common: Common,
    },
    /// Sequence norm of a coefficient file, or wavelet norm of a sample file.
    Norm {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "sample")]
        coeffs: Option<PathBuf>,
        #[arg(long)]
        sample: Option<PathBuf>,
        #[arg(long, value_enum)]
        route: Option<Route>,
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// Sampling levels of the wavelets below the finest window level.
        #[arg(long, default_value_t = 6)]
        r0: u32,
    },
    /// Wavelet analysis of a sample file, or synthesis from coefficient files.
    Transform {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Direction::Analyze)]
        direction: Direction,
        /// Input sample (analyze) or grid template (synthesize).
        #[arg(long)]
        sample: PathBuf,
        /// Coefficient files `channel=path` (synthesize).
        #[arg(long = "coeffs")]
        coeffs: Vec<String>,
        /// Output prefix for channel CSV files (analyze) or the output sample path (synthesize).
        #[arg(long)]
        data_out: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long, default_value_t = 6)]
        r0: u32,
    },
    /// Trace of a sampled function on the hyperplane `x_n = 0`.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, alias = "source")]
        sample: PathBuf,
        #[arg(long, alias = "filter-order", default_value_t = 4)]
        order: usize,
        #[arg(long, default_value_t = 6)]
        r0: u32,
        /// Weight on the hyperplane, used for the target norm.
        #[arg(long = "weight-v", alias = "weightV")]
        weight_v: Option<PathBuf>,
        /// Where to write the traced sample.
        #[arg(long)]
        data_out: Option<PathBuf>,
    },
    /// Empirical norm growth of the model almost-diagonal matrix across window depths.
    Adprobe {
        #[command(flatten)]
        common: Common,
        /// Exponents `D,E,F`.
        #[arg(long = "def")]
        def: String,
        #[arg(long, default_value = "3,4,5")]
        depths: String,
        #[arg(long, default_value_t = 32)]
        random: usize,
        #[arg(long, default_value_t = 256)]
        deltas: usize,
        #[arg(long)]
        stacks: bool,
        /// Components when no weight is given.
        #[arg(long, default_value_t = 1)]
        m: usize,
    },
    /// Molecule conditions for a wavelet, an atom or a sampled function.
    Molcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MolKind::Wavelet)]
        kind: MolKind,
        /// Cube literal `j:k1,...,kn`.
        #[arg(long, default_value = "0:0")]
        cube: String,
        /// Molecule parameters `K,L,M,N`.
        #[arg(long)]
        params: String,
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// Wavelet channel.
        #[arg(long, default_value_t = 1)]
        lambda: u32,
        /// Atom support radius, vanishing moments and smoothness.
        #[arg(long, default_value = "1,1,2")]
        atom: String,
        #[arg(long)]
        sample: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        per_side: usize,
        #[arg(long, default_value_t = 8.0)]
        extent: f64,
    },
    /// Kernel conditions on dyadic shells.
    Czkcheck {
        #[command(flatten)]
        common: Common,
        /// hilbert, truncated, riesz-<i>.
        #[arg(long, default_value = "hilbert")]
        kernel: String,
        #[arg(long)]
        e: f64,
        #[arg(long)]
        f: f64,
        #[arg(long, default_value_t = 0)]
        sigma: u8,
        #[arg(long, default_value_t = -7)]
        min_exp: i32,
        #[arg(long, default_value_t = 7)]
        max_exp: i32,
        #[arg(long, default_value_t = 64)]
        directions: usize,
        /// Also bound the intermediate y-derivatives.
        #[arg(long)]
        intermediate: bool,
    },
    /// A_p characteristic, reducing operators and dimension estimate of a weight.
    Weights {
        #[command(flatten)]
        common: Common,
        /// Exponent p; taken from --space when absent.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, value_enum, default_value_t = WeightTask::All)]
        task: WeightTask,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Route {
    Plain,
    Weighted,
    Averaged,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Direction {
    Analyze,
    Synthesize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MolKind {
    Wavelet,
    Atom,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum WeightTask {
    All,
    Characteristic,
    Reducing,
    Dimension,
}

fn parse_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Parse(msg.into()).into()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| parse_err(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))).into())
}

fn list<T: std::str::FromStr>(s: &str, what: &str, len: Option<usize>) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let out = s
        .split(',')
        .enumerate()
        .map(|(i, x)| x.trim().parse::<T>().map_err(|e| parse_err(format!("{what}: entry {} `{x}`: {e}", i + 1))))
        .collect::<Result<Vec<T>>>()?;
    if let Some(k) = len {
        if out.len() != k {
            return Err(parse_err(format!("{what}: expected {k} comma-separated values, got {}", out.len())));
        }
    }
    Ok(out)
}

/// Inputs resolved from [`Common`].
struct Resolved {
    space: Option<SpaceParams>,
    weight: Option<SharedWeight>,
    quad: QuadratureSpec,
    dim: usize,
}

impl Resolved {
    fn new(c: &Common, fixed_dim: Option<usize>) -> Result<Self> {
        let space = c.space.as_deref().map(read_json::<SpaceParams>).transpose()?;
        let weight = match &c.weight {
            Some(path) => {
                let spec: WeightSpec = read_json(path)?;
                Some(spec.build(path.parent())?)
            }
            None => None,
        };
        let dim = fixed_dim.or(weight.as_ref().map(|w| w.n())).or(c.dim).unwrap_or(1);
        if let Some(w) = &weight {
            if w.n() != dim {
                return Err(Error::Dimension(format!("weight lives on R^{} but the input on R^{dim}", w.n())).into());
            }
        }
        Ok(Self { space, weight, quad: QuadratureSpec::parse(&c.quad)?, dim })
    }

    fn space(&self) -> Result<&SpaceParams> {
        self.space.as_ref().ok_or_else(|| Error::Precondition("--space is required".into()).into())
    }

    fn window(&self, c: &Common) -> Result<LatticeWindow> {
        let spec = c.window.as_deref().ok_or_else(|| Error::Precondition("--window is required".into()))?;
        Ok(LatticeWindow::parse(spec, self.dim)?)
    }

    fn norm_spec(&self, route: Option<Route>) -> Result<NormSpec> {
        let route = route.unwrap_or(if self.weight.is_some() { Route::Weighted } else { Route::Plain });
        let need = || self.weight.clone().ok_or_else(|| Error::Precondition("this route needs --weight".into()));
        Ok(match route {
            Route::Plain => NormSpec::Plain,
            Route::Weighted => NormSpec::Weighted { weight: need()?, quad: self.quad },
            Route::Averaged => NormSpec::Averaged { weight: need()?, quad: self.quad },
        })
    }

    fn config(&self, c: &Common) -> Value {
        json!({
            "space": self.space,
            "weight": self.weight.as_ref().map(|w| w.describe()),
            "window": c.window,
            "quad": self.quad.to_string(),
            "seed": c.seed,
            "d": c.d,
            "dim": self.dim,
        })
    }
}

fn route_name(spec: &NormSpec) -> &'static str {
    match spec {
        NormSpec::Plain => "plain",
        NormSpec::Weighted { .. } => "weighted",
        NormSpec::Averaged { .. } => "averaged",
    }
}

fn emit(common: &Common, command: &str, config: Value, result: Value) -> Result<()> {
    let report = json!({
        "tool": "dyadica",
        "version": VERSION,
        "command": command,
        "config": config,
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &common.out {
        Some(path) => fs::write(path, text).map_err(Error::from).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_params(c: &Common) -> Result<()> {
    let r = Resolved::new(c, None)?;
    let sp = r.space()?;
    let n = r.dim;
    let di = derived_indices(sp, n, c.d)?;
    let (synthesis, analysis) = molecule_param_sets(&di, n);
    let (p_cl, s_cl) = classical_equivalent(&di, n);
    let result = json!({
        "indices": di,
        "cancellation_threshold": cancellation_threshold(sp, n),
        "wavelet_smoothness": wavelet_smoothness_required(&di, n),
        "trace_threshold": trace_threshold(sp, n).ok(),
        "classical_equivalent": { "p": p_cl, "s": s_cl },
        "ad_region": ad_region(&di, n).to_string(),
        "synthesis_molecules": synthesis.to_string(),
        "analysis_molecules": analysis.to_string(),
        "czo_conditions": czo_conditions(&di, n, false).to_string(),
    });
    emit(c, "params", r.config(c), result)
}

fn cmd_norm(c: &Common, coeffs: Option<&Path>, sample: Option<&Path>, route: Option<Route>, order: usize, r0: u32) -> Result<()> {
    let sample = sample.map(io::read_sample_file).transpose()?;
    let r = Resolved::new(c, sample.as_ref().map(|s| s.n))?;
    let sp = r.space()?;
    let spec = r.norm_spec(route)?;
    let mut config = r.config(c);
    config["route"] = route_name(&spec).into();
    let result = match (coeffs, &sample) {
        (Some(path), None) => {
            let window = c.window.as_deref().map(|w| LatticeWindow::parse(w, r.dim)).transpose()?;
            let t = io::read_coeffs_file(path, r.dim, window.as_ref())?;
            config["coeffs"] = path.display().to_string().into();
            config["resolved_window"] = t.window.to_string().into();
            let rep = match &spec {
                NormSpec::Plain => seq_norm_plain(&t, sp)?,
                NormSpec::Weighted { weight, quad } => seq_norm_weighted(&t, weight.as_ref(), sp, quad)?,
                NormSpec::Averaged { weight, quad } => {
                    let fam = ReducingFamily::build(weight.as_ref(), sp.p, &t.window, quad)?;
                    seq_norm_averaged(&t, &fam, sp)?
                }
            };
            serde_json::to_value(rep)?
        }
        (None, Some(f)) => {
            let window = r.window(c)?;
            let sys = WaveletSystem::new(order, f.n, WaveletSystem::resolution_for(&window, r0))?;
            let prepared = spec.prepare(&window, sp.p)?;
            config["order"] = order.into();
            config["r0"] = r0.into();
            serde_json::to_value(wavelet_norm(f, &sys, &window, sp, prepared.route(), c.d)?)?
        }
        _ => return Err(Error::Precondition("give exactly one of --coeffs and --sample".into()).into()),
    };
    emit(c, "norm", config, result)
}

fn channel_path(prefix: &Path, lambda: u32) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!(".ch{lambda}.csv"));
    PathBuf::from(s)
}

fn cmd_transform(c: &Common, direction: Direction, sample: &Path, coeffs: &[String], data_out: &Path, order: usize, r0: u32) -> Result<()> {
    let grid = io::read_sample_file(sample)?;
    let r = Resolved::new(c, Some(grid.n))?;
    let mut config = r.config(c);
    config["direction"] = format!("{direction:?}").to_lowercase().into();
    config["order"] = order.into();
    config["r0"] = r0.into();
    let result = match direction {
        Direction::Analyze => {
            let window = r.window(c)?;
            let sys = WaveletSystem::new(order, grid.n, WaveletSystem::resolution_for(&window, r0))?;
            let coefs = analyze(&grid, &sys, &window, true)?;
            let mut files = Vec::new();
            for (lambda, field) in &coefs.channels {
                let path = channel_path(data_out, *lambda);
                io::write_coeffs(field, create(&path)?)?;
                files.push(json!({ "channel": lambda, "path": path.display().to_string(), "entries": field.len(), "l2_sq": field.l2_sq() }));
            }
            json!({ "files": files, "l2_sq": coefs.l2_sq(), "sample_energy": grid.energy() })
        }
        Direction::Synthesize => {
            if coeffs.is_empty() {
                return Err(Error::Precondition("synthesis needs at least one --coeffs channel=path".into()).into());
            }
            let given = c.window.as_deref().map(|w| LatticeWindow::parse(w, r.dim)).transpose()?;
            let mut fields = Vec::new();
            for item in coeffs {
                let (ch, path) = item.split_once('=').ok_or_else(|| parse_err(format!("--coeffs `{item}`: expected channel=path")))?;
                let lambda: u32 = ch.trim().parse().map_err(|e| parse_err(format!("--coeffs `{item}`: channel: {e}")))?;
                fields.push((lambda, io::read_coeffs_file(Path::new(path), r.dim, given.as_ref())?));
            }
            let window = match given {
                Some(w) => w,
                None => {
                    let cubes: Vec<DyadicCube> = fields.iter().flat_map(|(_, f)| f.iter().map(|(q, _)| q.clone())).collect();
                    io::covering_window(&cubes)?
                }
            };
            let m = fields[0].1.m;
            let mut coefs = WaveletCoeffs::new(window.clone(), m);
            for (lambda, f) in fields {
                if f.m != m {
                    return Err(Error::Dimension("coefficient files disagree on the number of components".into()).into());
                }
                *coefs.channel_mut(lambda) = f.rewindowed(window.clone());
            }
            let sys = WaveletSystem::new(order, grid.n, WaveletSystem::resolution_for(&window, r0))?;
            let template = if grid.m == m { grid } else { FunctionSample::zeros(m, grid.origin.clone(), grid.spacing, grid.extents.clone())? };
            let out = synthesize(&coefs, &sys, &template)?;
            io::write_sample(&out, create(data_out)?)?;
            config["resolved_window"] = window.to_string().into();
            json!({ "path": data_out.display().to_string(), "points": out.count(), "energy": out.energy(), "max_abs": out.max_abs() })
        }
    };
    emit(c, "transform", config, result)
}

fn cmd_trace(c: &Common, sample: &Path, order: usize, r0: u32, weight_v: Option<&Path>, data_out: Option<&Path>) -> Result<()> {
    let f = io::read_sample_file(sample)?;
    let r = Resolved::new(c, Some(f.n))?;
    let window = r.window(c)?;
    let pair = TracePair::new(order, f.n, WaveletSystem::resolution_for(&window, r0))?;
    let coefs = analyze(&f, &pair.source, &window, true)?;
    let tc = trace_coeffs(&pair, &coefs)?;
    let tr = synthesize(&tc, &pair.target, &hyperplane_grid(&f)?)?;
    let direct = restrict_to_hyperplane(&f)?;
    let mut result = json!({
        "k0": pair.k0,
        "target_window": tc.window.to_string(),
        "max_diff_to_restriction": tr.max_diff(&direct),
        "trace_energy": tr.energy(),
    });
    if let Some(sp) = &r.space {
        let spec = r.norm_spec(None)?;
        let target = match weight_v {
            Some(path) => {
                let v = read_json::<WeightSpec>(path)?.build(path.parent())?;
                if v.n() + 1 != f.n {
                    return Err(Error::Dimension(format!("--weight-v must live on R^{}", f.n - 1)).into());
                }
                NormSpec::Weighted { weight: v, quad: r.quad }
            }
            None => NormSpec::Plain,
        };
        let rep = trace_norm_report(&pair, std::slice::from_ref(&f), sp, &spec, &target, std::slice::from_ref(&window), c.d)?;
        result["norms"] = serde_json::to_value(rep)?;
    }
    if let Some(path) = data_out {
        io::write_sample(&tr, create(path)?)?;
        result["path"] = path.display().to_string().into();
    }
    let mut config = r.config(c);
    config["order"] = order.into();
    config["r0"] = r0.into();
    config["weight_v"] = weight_v.map(|p| p.display().to_string()).into();
    emit(c, "trace", config, result)
}

#[allow(clippy::too_many_arguments)]
fn cmd_adprobe(c: &Common, def: &str, depths: &str, random: usize, deltas: usize, stacks: bool, m: usize) -> Result<()> {
    let r = Resolved::new(c, None)?;
    let sp = r.space()?;
    let e3: Vec<f64> = list(def, "--def", Some(3))?;
    let def = DefExponents::new(e3[0], e3[1], e3[2]);
    let base = r.window(c)?;
    let windows = list::<i32>(depths, "--depths", None)?
        .into_iter()
        .map(|d| base.with_depth(d))
        .collect::<dyadica::Result<Vec<_>>>()?;
    let spec = r.norm_spec(None)?;
    let m = r.weight.as_ref().map_or(m, |w| w.m());
    let di = derived_indices(sp, r.dim, c.d)?;
    let ens = Ensemble { random, deltas, stacks, seed: c.seed };
    let rep = empirical_norm(&AdMatrix::bdef(def), sp, &spec, &windows, m, &ens, Some(&di))?;
    let mut config = r.config(c);
    config["def"] = json!([def.d, def.e, def.f]);
    config["ensemble"] = serde_json::to_value(ens)?;
    config["route"] = route_name(&spec).into();
    emit(c, "adprobe", config, serde_json::to_value(rep)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_molcheck(
    c: &Common,
    kind: MolKind,
    cube: &str,
    params: &str,
    order: usize,
    lambda: u32,
    atom: &str,
    sample: Option<&Path>,
    per_side: usize,
    extent: f64,
) -> Result<()> {
    let q: DyadicCube = cube.parse()?;
    let r = Resolved::new(c, Some(q.dim()))?;
    let k: Vec<f64> = list(params, "--params", Some(4))?;
    let mp = MoleculeParams::new(k[0], k[1], k[2], k[3]);
    let candidate: MoleculeCandidate = match kind {
        MolKind::Wavelet => {
            let sys = Arc::new(WaveletSystem::new(order, q.dim(), 12)?);
            if lambda == 0 || lambda >= 1 << q.dim() {
                return Err(Error::Precondition(format!("wavelet channel must lie in 1..{}", (1 << q.dim()) - 1)).into());
            }
            sys.theta_candidate(lambda, &q, 1.0)
        }
        MolKind::Atom => {
            let a: Vec<f64> = list(atom, "--atom", Some(3))?;
            make_atom(&q, a[0], a[1], a[2])?
        }
        MolKind::Sample => {
            let path = sample.ok_or_else(|| Error::Precondition("--kind sample needs --sample".into()))?;
            MoleculeCandidate::from_sample(q.clone(), Arc::new(io::read_sample_file(path)?), 0, order)?
        }
    };
    let grid = ValidationGrid { per_side, extent, ..Default::default() };
    let rep = validate_molecule(&candidate, &mp, &grid)?;
    let mut config = r.config(c);
    config["kind"] = format!("{kind:?}").to_lowercase().into();
    config["cube"] = q.to_string().into();
    config["grid"] = serde_json::to_value(grid)?;
    config["order"] = order.into();
    emit(c, "molcheck", config, serde_json::to_value(rep)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_czkcheck(c: &Common, kernel: &str, e: f64, f: f64, sigma: u8, min_exp: i32, max_exp: i32, directions: usize, intermediate: bool) -> Result<()> {
    let r = Resolved::new(c, None)?;
    let k = Kernel::plugin(kernel, r.dim)?;
    let geom = ShellGeometry { min_exp, max_exp, directions, seed: c.seed, ..Default::default() };
    let rep = czk_check(&k, e, f, sigma, &geom)?;
    let mut result = json!({ "conditions": rep });
    if intermediate {
        result["intermediate"] = serde_json::to_value(intermediate_derivative_check(&k, f, &geom)?)?;
    }
    let mut config = r.config(c);
    config["kernel"] = kernel.into();
    config["geometry"] = serde_json::to_value(&geom)?;
    emit(c, "czkcheck", config, result)
}

fn cmd_weights(c: &Common, p: Option<f64>, task: WeightTask) -> Result<()> {
    let r = Resolved::new(c, None)?;
    let w = r.weight.clone().ok_or_else(|| Error::Precondition("--weight is required".into()))?;
    let p = match (p, &r.space) {
        (Some(p), _) => p,
        (None, Some(sp)) => sp.p,
        (None, None) => return Err(Error::Precondition("give --p or --space".into()).into()),
    };
    if !(p > 0.0) {
        return Err(Error::Precondition(format!("p > 0 required, got {p}")).into());
    }
    let window = r.window(c)?;
    let mut result = json!({});
    let all = task == WeightTask::All;
    if all || task == WeightTask::Characteristic {
        result["characteristic"] = serde_json::to_value(ap_characteristic(w.as_ref(), p, &window, &r.quad)?)?;
    }
    if all || task == WeightTask::Reducing {
        let mut ops = Vec::new();
        for q in window.cubes() {
            let fit = reducing_operator(w.as_ref(), p, &q, &r.quad)?;
            let matrix: Vec<[f64; 2]> = fit.matrix.iter().map(|z| [z.re, z.im]).collect();
            ops.push(json!({ "cube": q, "fit": fit, "matrix_column_major": matrix }));
        }
        result["reducing"] = ops.into();
    }
    if all || task == WeightTask::Dimension {
        result["dimension"] = serde_json::to_value(ap_dimension_estimate(w.as_ref(), p, &window, &r.quad)?)?;
    }
    let mut config = r.config(c);
    config["p"] = p.into();
    emit(c, "weights", config, result)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Params { common } => cmd_params(common),
        Command::Norm { common, coeffs, sample, route, order, r0 } => {
            cmd_norm(common, coeffs.as_deref(), sample.as_deref(), *route, *order, *r0)
        }
        Command::Transform { common, direction, sample, coeffs, data_out, order, r0 } => {
            cmd_transform(common, *direction, sample, coeffs, data_out, *order, *r0)
        }
        Command::Trace { common, sample, order, r0, weight_v, data_out } => {
            cmd_trace(common, sample, *order, *r0, weight_v.as_deref(), data_out.as_deref())
        }
        Command::Adprobe { common, def, depths, random, deltas, stacks, m } => {
            cmd_adprobe(common, def, depths, *random, *deltas, *stacks, *m)
        }
        Command::Molcheck { common, kind, cube, params, order, lambda, atom, sample, per_side, extent } => {
            cmd_molcheck(common, *kind, cube, params, *order, *lambda, atom, sample.as_deref(), *per_side, *extent)
        }
        Command::Czkcheck { common, kernel, e, f, sigma, min_exp, max_exp, directions, intermediate } => {
            cmd_czkcheck(common, kernel, *e, *f, *sigma, *min_exp, *max_exp, *directions, *intermediate)
        }
        Command::Weights { common, p, task } => cmd_weights(common, *p, *task),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_refusal() => 2,
        Some(Error::Parse(_) | Error::Json(_) | Error::Io(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("DYADICA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // the global pool can only be set once; a second attempt is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("dyadica: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
