//! The `hillspec` command line.
//!
//! Every command reads its potential from a JSON document, writes CSV or
//! JSON, and prints a one-line summary on stderr. JSON reports carry the full
//! effective configuration. Exit status is 0 on success, 1 when the
//! computation itself fails (for instance an energy outside the spectrum)
//! and 2 for usage, input and output errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::floquet::{
    band_structure, discriminant, ids_derivative, ids_mass, lyapunov, verify_ids_bound,
    BandSettings, LemmaConstants, QuadSettings,
};
use crate::limitperiodic::{
    check_epsilons, check_tails, gordon_defect, hausdorff_upper_bound, hd0_sequence, Hd0Schedule,
    Hd0Settings,
};
use crate::potential::Potential;
use crate::propagator::PropagationSettings;
use crate::thinspec::{lambda_grid, prepare_cover, verify_thin, ThinSpecSettings};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "FLOQUET_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "hillspec",
    version,
    about = "Spectra of one-dimensional periodic Schrödinger operators"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
struct Global {
    /// Seed of the generator behind every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = PropagationSettings::default().rel_tol)]
    rel_tol: f64,
    #[arg(long, global = true, default_value_t = PropagationSettings::default().abs_tol)]
    abs_tol: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Discriminant D(E) on a uniform energy grid, as CSV.
    Disc(Scan),
    /// Bands of λV meeting [−R, R], as CSV.
    Bands(BandsArgs),
    /// Lyapunov exponent L(E) on a uniform energy grid, as CSV.
    Lyap(Scan),
    /// Density of states dk/dE at an energy inside a band.
    Ids(IdsArgs),
    /// Lebesgue measure of σ(H_{λV}) ∩ [−R, R].
    Measure(MeasureArgs),
    /// Thin-spectrum perturbation for one or more N.
    Thin(ThinArgs),
    /// Iterated thin-spectrum schedule.
    Hd0(Hd0Args),
    /// Sampled Gordon defect max |V(x) − V(x + T)| over |x| ≤ T.
    Gordon(GordonArgs),
    /// Hausdorff cover sum of a schedule level.
    Cover(CoverArgs),
    /// Density-of-states lower bound at given energies.
    VerifyIdsBound(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct Scan {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, allow_negative_numbers = true)]
    emin: f64,
    #[arg(long, allow_negative_numbers = true)]
    emax: f64,
    /// Number of grid points, endpoints included.
    #[arg(long)]
    n: usize,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum IdsMassMode {
    /// Quadrature of dk/dE over each band.
    Quad,
    /// 1/T for every band.
    Nominal,
}

#[derive(Debug, Clone, Args, Serialize)]
struct BandsArgs {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "R")]
    r: f64,
    #[arg(long, value_enum, default_value_t = IdsMassMode::Quad)]
    ids_mass: IdsMassMode,
    /// Quadrature nodes per band.
    #[arg(long, default_value_t = 64)]
    ids_nodes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct IdsArgs {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "E", allow_negative_numbers = true)]
    e: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct MeasureArgs {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "R")]
    r: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ThinArgs {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long = "R")]
    r: f64,
    #[arg(long = "Lambda")]
    big_lambda: f64,
    /// Period multiples N of the result; 0 picks the smallest admissible.
    #[arg(long = "N", required = true)]
    n: Vec<usize>,
    /// Couplings in [Λ⁻¹, Λ] at which the spectrum is measured.
    #[arg(long, default_value_t = 9)]
    lambda_grid: usize,
    /// Break-point spacing ε/2 instead of ε/9.
    #[arg(long)]
    desk: bool,
    /// Random solutions used to estimate C1 for the bound; 0 skips it.
    #[arg(long, default_value_t = 0)]
    c1_probes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct Hd0Args {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long)]
    epsilon0: f64,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Comma-separated N_n; missing or 0 entries pick the smallest admissible.
    #[arg(long = "N", value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct GordonArgs {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long)]
    period: f64,
    /// Grid points per unit length.
    #[arg(long, default_value_t = 64)]
    grid_density: usize,
    /// Compare with the level-n target n^{−period}.
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CoverArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    window_index: usize,
    /// Level whose bands form the cover; the deepest one when absent.
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    potential: PathBuf,
    #[arg(long = "E", required = true, allow_negative_numbers = true)]
    e: Vec<f64>,
    #[arg(long = "Q")]
    q: f64,
    #[arg(long = "R")]
    r: f64,
    /// Use this C1 instead of estimating it.
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long, default_value_t = 400)]
    c1_probes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match dispatch(&cli) {
        Ok(summary) => {
            eprintln!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("hillspec: {e}");
            exit_code(&e)
        }
    }
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a pool built by an earlier call in the same process stays in place
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::InvalidArgument(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn propagation(g: &Global) -> PropagationSettings {
    PropagationSettings {
        rel_tol: g.rel_tol,
        abs_tol: g.abs_tol,
        ..PropagationSettings::default()
    }
}

fn band_settings(g: &Global) -> BandSettings {
    BandSettings {
        propagation: propagation(g),
        ..BandSettings::default()
    }
}

fn quad_settings(g: &Global) -> QuadSettings {
    QuadSettings {
        propagation: propagation(g),
        ..QuadSettings::default()
    }
}

fn load_potential(path: &Path) -> Result<Potential> {
    Potential::from_json(&fs::read_to_string(path)?)
}

fn scaled(path: &Path, lambda: f64) -> Result<Potential> {
    load_potential(path)?.scale(lambda)
}

fn grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!(
            "bad energy grid [{lo}, {hi}] with {n} points"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

fn write_csv<R: Serialize>(out: Option<&Path>, header: &[&str], rows: &[R]) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<R: Serialize>(out: Option<&Path>, report: &R) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    match &cli.command {
        Command::Disc(a) => {
            let v = scaled(&a.potential, a.lambda)?;
            let prop = propagation(g);
            let rows = grid(a.emin, a.emax, a.n)?
                .into_iter()
                .map(|e| Ok((e, discriminant(&v, e, &prop)?)))
                .collect::<Result<Vec<_>>>()?;
            write_csv(a.out.as_deref(), &["E", "D"], &rows)?;
            Ok(format!("disc: {} rows", rows.len()))
        }
        Command::Lyap(a) => {
            let v = scaled(&a.potential, a.lambda)?;
            let prop = propagation(g);
            let rows = grid(a.emin, a.emax, a.n)?
                .into_iter()
                .map(|e| Ok((e, lyapunov(&v, e, &prop)?)))
                .collect::<Result<Vec<_>>>()?;
            write_csv(a.out.as_deref(), &["E", "L"], &rows)?;
            Ok(format!("lyap: {} rows", rows.len()))
        }
        Command::Bands(a) => {
            let v = scaled(&a.potential, a.lambda)?;
            let bs = band_structure(&v, a.r, &band_settings(g))?;
            let q = quad_settings(g);
            let rows = bs
                .bands
                .iter()
                .map(|b| {
                    let mass = match a.ids_mass {
                        IdsMassMode::Nominal => 1.0 / v.period(),
                        IdsMassMode::Quad => ids_mass(&v, b.lo, b.hi, a.ids_nodes, &q)?,
                    };
                    Ok((b.index, b.lo, b.hi, b.length(), mass))
                })
                .collect::<Result<Vec<_>>>()?;
            write_csv(
                a.out.as_deref(),
                &["index", "lo", "hi", "length", "ids_mass"],
                &rows,
            )?;
            Ok(format!(
                "bands: {} bands, measure {}",
                rows.len(),
                bs.measure()
            ))
        }
        Command::Ids(a) => {
            let v = scaled(&a.potential, a.lambda)?;
            let q = quad_settings(g);
            let d = ids_derivative(&v, a.e, &q)?;
            write_json(
                a.out.as_deref(),
                &json!({"config": {"global": g, "args": a, "quadrature": q}, "E": a.e, "dk_dE": d}),
            )?;
            Ok(format!("ids: dk/dE({}) = {d}", a.e))
        }
        Command::Measure(a) => {
            let v = scaled(&a.potential, a.lambda)?;
            let st = band_settings(g);
            let bs = band_structure(&v, a.r, &st)?;
            let m = bs.measure();
            write_json(
                a.out.as_deref(),
                &json!({"config": {"global": g, "args": a, "bands": st}, "measure": m, "band_structure": bs}),
            )?;
            Ok(format!("measure: {m}"))
        }
        Command::Thin(a) => thin(g, a),
        Command::Hd0(a) => hd0(g, a),
        Command::Gordon(a) => {
            let v = load_potential(&a.potential)?;
            if !(a.period > 0.0 && a.period.is_finite()) {
                return Err(Error::invalid(format!(
                    "period must be positive, got {}",
                    a.period
                )));
            }
            let mut rep = gordon_defect(&v, a.period, a.grid_density);
            if let Some(n) = a.level {
                rep = rep.against(n, a.period);
            }
            write_json(
                a.out.as_deref(),
                &json!({"config": {"global": g, "args": a}, "report": rep}),
            )?;
            Ok(format!(
                "gordon: defect {} at period {}",
                rep.defect, a.period
            ))
        }
        Command::Cover(a) => {
            let schedule: Hd0Schedule = serde_json::from_str(&fs::read_to_string(&a.schedule)?)?;
            let level = a.level.unwrap_or(schedule.completed());
            let st = band_settings(g);
            let cover =
                hausdorff_upper_bound(&schedule, level, a.alpha, a.lambda, a.window_index, &st)?;
            write_json(
                a.out.as_deref(),
                &json!({"config": {"global": g, "args": a, "level": level, "bands": st}, "cover": cover}),
            )?;
            Ok(format!(
                "cover: level {level}, {} intervals, sum {}",
                cover.intervals.len(),
                cover.sum
            ))
        }
        Command::VerifyIdsBound(a) => {
            let v = load_potential(&a.potential)?;
            let prop = propagation(g);
            let constants = match a.c1 {
                Some(c1) => LemmaConstants::new(a.q, a.r, c1)?,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
                    LemmaConstants::estimate(&v, a.q, a.r, a.c1_probes, &mut rng, &prop)?
                }
            };
            let q = quad_settings(g);
            let checks = a
                .e
                .iter()
                .map(|&e| Ok(json!({"E": e, "check": verify_ids_bound(&v, e, &constants, &q)?})))
                .collect::<Result<Vec<_>>>()?;
            let failed = checks
                .iter()
                .filter(|c| c["check"]["holds"] == false)
                .count();
            write_json(
                a.out.as_deref(),
                &json!({"config": {"global": g, "args": a, "quadrature": q}, "constants": constants, "checks": checks}),
            )?;
            if failed > 0 {
                return Err(Error::BoundViolated {
                    failed,
                    total: checks.len(),
                });
            }
            Ok(format!(
                "verify-ids-bound: holds at {} energies (C1 = {})",
                checks.len(),
                constants.c1
            ))
        }
    }
}

fn thin(g: &Global, a: &ThinArgs) -> Result<String> {
    let v = load_potential(&a.potential)?;
    let mut st = if a.desk {
        ThinSpecSettings::desk(a.epsilon)
    } else {
        ThinSpecSettings::default()
    };
    st.bands = band_settings(g);
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let constants = if a.c1_probes > 0 {
        let q = a.big_lambda * (v.sup_bound() + a.epsilon);
        Some(LemmaConstants::estimate(
            &v,
            q,
            a.r,
            a.c1_probes,
            &mut rng,
            &st.bands.propagation,
        )?)
    } else {
        None
    };
    let cover = prepare_cover(&v, a.epsilon, a.r, a.big_lambda, &st, &mut rng)?;
    let lambdas = lambda_grid(a.big_lambda, a.lambda_grid);
    let mut runs = Vec::with_capacity(a.n.len());
    let mut worst = Vec::with_capacity(a.n.len());
    for &n in &a.n {
        let n = if n == 0 { cover.min_n() } else { n };
        let plan = cover.assemble(n)?;
        let report = verify_thin(&plan, &lambdas, constants.as_ref(), 2, &st.bands)?;
        worst.push(format!("N={n}: {}", report.max_measure));
        runs.push(json!({
            "n": plan.n,
            "ntilde": plan.ntilde,
            "ttilde": plan.ttilde,
            "layout": plan.layout,
            "sup_deviation": plan.sup_deviation,
            "report": report,
            "potential": plan.result,
        }));
    }
    write_json(
        a.out.as_deref(),
        &json!({
            "config": {"global": g, "args": a, "settings": st},
            "constants": constants,
            "cover": cover,
            "runs": runs,
        }),
    )?;
    Ok(format!(
        "thin: N'={} l={} eta={}; max measure {}",
        cover.nprime,
        cover.ell(),
        cover.floor.eta,
        worst.join(", ")
    ))
}

fn hd0(g: &Global, a: &Hd0Args) -> Result<String> {
    let v = load_potential(&a.potential)?;
    let mut st = if a.desk {
        Hd0Settings::desk()
    } else {
        Hd0Settings::default()
    };
    st.bands = band_settings(g);
    st.thin.bands = band_settings(g);
    let mut ns = a.n.clone();
    ns.resize(a.depth.max(ns.len()), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let schedule = hd0_sequence(&v, a.epsilon0, a.depth, &ns, &st, &mut rng)?;
    let epsilons = check_epsilons(&schedule);
    let tails = check_tails(&schedule);
    let out = json!({
        "config": {"global": g, "args": a, "n_schedule": ns, "settings": st},
        "epsilon_checks": epsilons,
        "tail_checks": tails,
        "schedule": schedule,
    });
    match &a.out {
        // the schedule document itself, readable by `cover`
        Some(p) => {
            let mut doc = serde_json::to_value(&schedule)?;
            doc["config"] = out["config"].clone();
            doc["epsilon_checks"] = out["epsilon_checks"].clone();
            doc["tail_checks"] = out["tail_checks"].clone();
            write_json(Some(p), &doc)?;
        }
        None => write_json(None, &out)?,
    }
    let stop = schedule
        .stopped
        .as_deref()
        .map(|s| format!("; stopped: {s}"))
        .unwrap_or_default();
    Ok(format!(
        "hd0: {} of {} levels{stop}",
        schedule.completed(),
        schedule.depth
    ))
}
