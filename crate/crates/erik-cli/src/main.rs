//! `erik`: solve single queries, run benchmark sweeps, dump joint lookup
//! tables and export filter traces.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use erik_core::catalog::CATALOG_IDS;
use erik_core::eval::{
    filter_dls_results, histograms, run_batch, summarize, write_histograms, write_results, write_summary, ypr_quat,
    SweepConfig,
};
use erik_core::filter::{run_trace, write_trace, FilterParams};
use erik_core::geom::Quat;
use erik_core::io::{resolve_skeleton, write_lalut, RunConfig};
use erik_core::metrics::error_breakdown;
use erik_core::skeleton::{Pose, Skeleton};
use erik_core::{IkSolver, SolverRegistry};

#[derive(Parser)]
#[command(name = "erik", version, about = "Orientation-and-posture inverse kinematics toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one target orientation for one posture.
    Solve(SolveArgs),
    /// Run a posture/orientation sweep and write result, summary and histogram CSVs.
    Eval(EvalArgs),
    /// Dump a joint's latitude/angle lookup tables as CSV.
    Lalut(LalutArgs),
    /// Run a set-point script through the output filter and write the tick CSV.
    FilterTrace(FilterArgs),
}

#[derive(Args)]
struct Common {
    /// Run-configuration TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Combined-error success threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Orientation and posture weights, as `o,p`.
    #[arg(long, value_parser = parse_pair)]
    weights: Option<(f64, f64)>,
    #[arg(long)]
    seed: Option<u64>,
    /// Read angle flags in degrees instead of radians.
    #[arg(long)]
    degrees: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// Catalog id (A to G) or skeleton TOML file.
    #[arg(long)]
    skeleton: String,
    #[arg(long, default_value = "erik")]
    solver: String,
    /// Comma-separated posture angles; zero when absent.
    #[arg(long, allow_hyphen_values = true)]
    posture: Option<String>,
    /// Target quaternion `w,x,y,z`.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "ypr")]
    target: Option<String>,
    /// Target as yaw, pitch, roll.
    #[arg(long, allow_hyphen_values = true)]
    ypr: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalArgs {
    /// Comma-separated catalog ids or skeleton files; `all` for A to G.
    #[arg(long, default_value = "all")]
    skeleton: String,
    #[arg(long, default_value = "erik")]
    solver: String,
    /// Angular step of the posture grid.
    #[arg(long)]
    posture_step: Option<f64>,
    /// Yaw, pitch and twist counts, as `h,v,t`.
    #[arg(long, value_parser = parse_counts)]
    orient_counts: Option<[usize; 3]>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Use the small preset sweep.
    #[arg(long)]
    desk_scale: bool,
    /// Keep only samples whose no-posture DLS counterpart reaches the target.
    #[arg(long)]
    filter_nopost: bool,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct LalutArgs {
    #[arg(long)]
    skeleton: String,
    #[arg(long)]
    joint: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    /// Set-point script: numbers separated by whitespace or commas, `#` comments.
    #[arg(long)]
    script: PathBuf,
    /// Filter parameter TOML file.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Starting position.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x0: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number `{t}`")))
        .collect()
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    match parse_list(s).map_err(|e| e.to_string())?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err("expected two comma-separated numbers".into()),
    }
}

fn parse_counts(s: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad count `{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated counts".to_string())
}

fn angle_scale(degrees: bool) -> f64 {
    if degrees {
        std::f64::consts::PI / 180.0
    } else {
        1.0
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("config file {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(t) = c.threshold {
        cfg.erik.weights.threshold = t;
    }
    if let Some((o, p)) = c.weights {
        cfg.erik.weights.orientation_weight = o;
        cfg.erik.weights.posture_weight = p;
    }
    if let Some(s) = c.seed {
        cfg.erik.seed = s;
        cfg.sweep.seed = s;
    }
    cfg.erik.validate()?;
    Ok(cfg)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_target(args: &SolveArgs) -> Result<Quat> {
    let scale = angle_scale(args.common.degrees);
    match (&args.target, &args.ypr) {
        (Some(t), _) => {
            let v = parse_list(t).context("target")?;
            let [w, x, y, z] = v[..] else {
                bail!("target needs four components w,x,y,z");
            };
            let q = Quat::new(w, x, y, z);
            if !q.is_finite() || q.norm() <= 1e-12 {
                bail!("target quaternion must be finite and non-zero");
            }
            Ok(q.normalized())
        }
        (None, Some(s)) => {
            let v = parse_list(s).context("ypr")?;
            let [y, p, r] = v[..] else {
                bail!("ypr needs three angles");
            };
            Ok(ypr_quat(y * scale, p * scale, r * scale))
        }
        (None, None) => Ok(Quat::IDENTITY),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let cfg = load_config(&args.common)?;
    let skel = resolve_skeleton(&args.skeleton).with_context(|| format!("skeleton {}", args.skeleton))?;
    let psi = match &args.posture {
        Some(s) => {
            let scale = angle_scale(args.common.degrees);
            let angles: Vec<f64> = parse_list(s).context("posture")?.into_iter().map(|a| a * scale).collect();
            Pose::from_angles(&skel, &angles).context("posture")?
        }
        None => Pose::zero(&skel),
    };
    let tau = parse_target(&args)?;
    let registry = SolverRegistry::with_defaults(&cfg);
    let solver = registry.get(args.solver.trim())?;
    let start = Instant::now();
    let out = solver.solve(&skel, tau, &psi)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let e = error_breakdown(&out.pose, tau, &psi, &skel, &cfg.erik.weights, solver.symmetric_endpoint())?;

    let mut w = io::stdout().lock();
    for (k, a) in out.pose.angles().iter().enumerate() {
        writeln!(w, "joint {k}: {a:.6}")?;
    }
    writeln!(w, "combined error:    {:.6}", e.combined)?;
    writeln!(w, "orientation error: {:.6}", e.orientation)?;
    writeln!(w, "posture error:     {:.6}", e.posture)?;
    writeln!(w, "iterations:        {}", out.iterations)?;
    writeln!(w, "time:              {elapsed:.3} ms")?;
    Ok(if e.combined <= cfg.erik.weights.threshold {
        ExitCode::SUCCESS
    } else {
        writeln!(w, "best effort: combined error above threshold {}", cfg.erik.weights.threshold)?;
        ExitCode::from(2)
    })
}

fn resolve_skeletons(list: &str) -> Result<Vec<Skeleton>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return CATALOG_IDS
            .iter()
            .map(|&c| Ok(resolve_skeleton(&c.to_string())?))
            .collect();
    }
    let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        bail!("empty skeleton list");
    }
    names
        .into_iter()
        .map(|n| resolve_skeleton(n).with_context(|| format!("skeleton {n}")))
        .collect()
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.common)?;
    if args.desk_scale {
        cfg.sweep = SweepConfig {
            seed: cfg.sweep.seed,
            ..SweepConfig::desk_scale()
        };
    }
    if let Some(s) = args.posture_step {
        cfg.sweep.posture_step = Some(s * angle_scale(args.common.degrees));
    }
    if let Some(c) = args.orient_counts {
        cfg.sweep.orientation_counts = c;
    }
    cfg.sweep.validate()?;
    let skeletons = resolve_skeletons(&args.skeleton)?;
    let registry = SolverRegistry::with_defaults(&cfg);
    let selected = registry.select(&args.solver)?;

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let paths = ["results.csv", "summary.csv", "histograms.csv"].map(|f| args.out.join(f));
    // Fail on an unwritable directory before the sweep runs.
    let mut files = Vec::new();
    for p in &paths {
        files.push(fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?);
    }

    let mut solvers: Vec<&dyn IkSolver> = selected.iter().map(|s| s.as_ref()).collect();
    let nopost = registry.get("dls100_nopost")?;
    let extra = args.filter_nopost && !solvers.iter().any(|s| s.name() == nopost.name());
    if extra {
        solvers.push(nopost.as_ref());
    }
    let mut results = run_batch(&skeletons, &solvers, &cfg.sweep, &cfg.erik.weights, args.threads)?;
    if args.filter_nopost {
        let reference: Vec<_> = results.iter().filter(|r| r.solver == nopost.name()).cloned().collect();
        if extra {
            results.retain(|r| r.solver != nopost.name());
        }
        let total = results.len();
        results = filter_dls_results(&results, &reference, cfg.erik.weights.threshold)?;
        eprintln!("no-posture filter kept {} of {total} samples", results.len());
    }

    let summary = summarize(&results);
    let [rf, sf, hf] = <[fs::File; 3]>::try_from(files).expect("three output files");
    write_results(&results, io::BufWriter::new(rf))?;
    write_summary(&summary, io::BufWriter::new(sf))?;
    write_histograms(&histograms(&results, 20), io::BufWriter::new(hf))?;
    write_summary(&summary, io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_lalut(args: LalutArgs) -> Result<ExitCode> {
    let skel = resolve_skeleton(&args.skeleton).with_context(|| format!("skeleton {}", args.skeleton))?;
    let Some(link) = skel.links.get(args.joint) else {
        bail!("joint index {} out of range (skeleton has {} joints)", args.joint, skel.n_dofs());
    };
    let header = format!("skeleton={} joint={}", skel.name, args.joint);
    write_lalut(&link.lalut, &header, open_out(args.out.as_deref())?)?;
    Ok(ExitCode::SUCCESS)
}

fn read_script(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            out.push(
                tok.parse::<f64>()
                    .with_context(|| format!("script line {}: bad set-point `{tok}`", n + 1))?,
            );
        }
    }
    Ok(out)
}

fn cmd_filter_trace(args: FilterArgs) -> Result<ExitCode> {
    let mut p = match &args.params {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            toml::from_str::<FilterParams>(&text).with_context(|| format!("filter parameters {}", path.display()))?
        }
        None => FilterParams::default(),
    };
    if let Some(s) = args.sigma {
        p.sigma = s;
    }
    if let Some(r) = args.rho {
        p.rho = r;
    }
    p.validate()?;
    let script = read_script(&args.script)?;
    let rows = run_trace(args.x0, &script, &p)?;
    write_trace(&rows, open_out(args.out.as_deref())?)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Lalut(a) => cmd_lalut(a),
        Command::FilterTrace(a) => cmd_filter_trace(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
