//! The `kdarts` experiment harness.
//!
//! Every subcommand validates its parameters, computes all results in memory
//! and only then writes its output files, so a failed run leaves nothing
//! behind. Numbers are printed with 17 significant digits and every CSV
//! starts with a `#` line recording the invocation, seed and version.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::domain::BoxDomain;
use crate::estimator::{error_curve, CurveRow, DartKind, ErrorCurveConfig, FlatIntegrable, Sampler};
use crate::mps::{default_probes, fmt17, measure_quality, run_mps, DartMode, KdTree, MpsConfig, PointCloud};
use crate::pof::{budget_experiment, speedup_experiment, PofRow, SpeedupConfig, SurfaceKind};
use crate::rng::RngStream;
use crate::shapes::{ball_volume, make_ellipsoid, Sphere};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "kdarts", version, about = "Sampling experiments with k-dimensional darts")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed; every replication draws from a stream keyed by it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output path (default: standard output).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replications per cell.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Write `NA` instead of wall-clock columns, making output byte-reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Volume-estimation error curves for a ball or a squished, rotated ellipsoid.
    Volume(VolumeArgs),
    /// Relaxed maximal Poisson-disk sampling with point or line darts.
    Mps(MpsArgs),
    /// Probability-of-failure estimates and point/line speedups.
    Pof(PofArgs),
    /// Verify that a point-cloud file respects its disk radius.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectArg {
    Sphere,
    Ellipsoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Mc,
    Lhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DartArg {
    Point,
    Line,
}

#[derive(Debug, Args)]
#[command(after_help = "Ranges: `a:b` expands n by factors of 10 (1e2:1e4 = 100,1000,10000); lists use commas.")]
pub struct VolumeArgs {
    #[arg(long, value_enum, default_value_t = ObjectArg::Sphere)]
    pub object: ObjectArg,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// Ellipsoid squish factor.
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    /// Number of random Givens rotations of the ellipsoid.
    #[arg(long, default_value_t = 10)]
    pub rot: usize,
    /// Flat dimensions, e.g. `0,1,2` (default: 0 through d).
    #[arg(long)]
    pub k: Option<String>,
    /// Flat budgets, a list or a `a:b` decade range.
    #[arg(long, default_value = "1e2:1e5")]
    pub n: String,
    #[arg(long, value_enum, default_value_t = SamplerArg::Mc)]
    pub sampler: SamplerArg,
    /// Planar only: compare aligned lines (1a), random lines (1r) and orthogonal pairs (1o).
    #[arg(long)]
    pub unaligned: bool,
    /// Per-replication estimate/true ratios (default: next to `--out`).
    #[arg(long)]
    pub ratios: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MpsArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Disk radius.
    #[arg(long, default_value_t = 0.05)]
    pub rf: f64,
    /// Acceptable void fraction.
    #[arg(long = "V", default_value_t = 1e-3)]
    pub v: f64,
    #[arg(long, value_enum, default_value_t = DartArg::Line)]
    pub dart: DartArg,
    #[arg(long)]
    pub max_darts: Option<u64>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    /// Random probes for the coverage-radius estimate.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Point-cloud file (default: next to `--out`).
    #[arg(long)]
    pub cloud: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_help = "Ranges: `a:b` expands d by steps of 1 and n by factors of 10; lists use commas.")]
pub struct PofArgs {
    /// `parabola`, `cross`, or a comma list.
    #[arg(long, default_value = "parabola")]
    pub surface: String,
    #[arg(long, default_value = "2")]
    pub d: String,
    #[arg(long, default_value = "1e-5")]
    pub pf: String,
    /// Dart kinds for fixed budgets (`0` points, `1` lines).
    #[arg(long, default_value = "0,1")]
    pub k: String,
    /// Fixed flat budgets; without it budgets grow until `--target-rms` is met.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub target_rms: f64,
    #[arg(long, default_value_t = 1000)]
    pub n_start: usize,
    #[arg(long, default_value_t = 1 << 30)]
    pub n_max: usize,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub cloud: PathBuf,
}

/// Error caused by invalid parameters rather than a failed computation.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let invocation = invocation_line(&args);
    match execute(&cli, &invocation) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

fn invocation_line(args: &[OsString]) -> String {
    let mut parts = vec!["kdarts".to_string()];
    parts.extend(args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()));
    parts.join(" ")
}

fn execute(cli: &Cli, invocation: &str) -> anyhow::Result<()> {
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let header = format!("# {invocation} | seed={} | kdarts {VERSION}\n", cli.common.seed);
    let outputs = match &cli.command {
        Command::Volume(a) => cmd_volume(&cli.common, a, &header)?,
        Command::Mps(a) => cmd_mps(&cli.common, a, &header)?,
        Command::Pof(a) => cmd_pof(&cli.common, a, &header)?,
        Command::Check(a) => return cmd_check(a),
    };
    write_outputs(outputs)
}

/// A finished output and where it goes (`None` is standard output).
struct Output {
    path: Option<PathBuf>,
    contents: String,
}

fn write_outputs(outputs: Vec<Output>) -> anyhow::Result<()> {
    let mut written: Vec<PathBuf> = Vec::new();
    for o in &outputs {
        let res = match &o.path {
            Some(p) => fs::write(p, &o.contents)
                .with_context(|| format!("writing {}", p.display()))
                .map(|_| written.push(p.clone())),
            None => std::io::stdout()
                .write_all(o.contents.as_bytes())
                .context("writing to standard output"),
        };
        if let Err(e) = res {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            if let Some(p) = &o.path {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
    }
    Ok(())
}

/// `dir/name.csv` -> `dir/name.<tag>.csv`
fn sibling(out: &Path, tag: &str, ext: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn parse_count(s: &str) -> anyhow::Result<usize> {
    let v: f64 = s.trim().parse().map_err(|_| usage(format!("`{s}` is not a number")))?;
    if !(v >= 1.0 && v.fract() == 0.0 && v < 1e15) {
        return Err(usage(format!("`{s}` is not a positive integer")));
    }
    Ok(v as usize)
}

/// `a:b` as decades `a, 10a, ...` up to `b`, or a comma list.
pub fn parse_n_range(s: &str) -> anyhow::Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once(':') {
        let (a, b) = (parse_count(a)?, parse_count(b)?);
        if a > b {
            return Err(usage(format!("empty range `{s}`")));
        }
        let mut v = Vec::new();
        let mut n = a;
        while n <= b {
            v.push(n);
            n = n.checked_mul(10).ok_or_else(|| usage("range overflows"))?;
        }
        Ok(v)
    } else {
        s.split(',').map(parse_count).collect()
    }
}

/// `a:b` as `a, a+1, ..., b`, or a comma list.
pub fn parse_d_range(s: &str) -> anyhow::Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once(':') {
        let (a, b) = (parse_count(a)?, parse_count(b)?);
        if a > b {
            return Err(usage(format!("empty range `{s}`")));
        }
        Ok((a..=b).collect())
    } else {
        s.split(',').map(parse_count).collect()
    }
}

fn parse_list<T, F>(s: &str, what: &str, f: F) -> anyhow::Result<Vec<T>>
where
    F: Fn(&str) -> Option<T>,
{
    s.split(',')
        .map(|t| f(t.trim()).ok_or_else(|| usage(format!("invalid {what} `{t}`"))))
        .collect()
}

fn num(x: f64) -> String {
    if x.is_finite() {
        fmt17(x)
    } else {
        "NA".into()
    }
}

fn timing(x: f64, no_timing: bool) -> String {
    if no_timing {
        "NA".into()
    } else {
        num(x)
    }
}

fn kind_label(kind: DartKind, unaligned: bool) -> String {
    match kind {
        DartKind::Aligned(1) if unaligned => "1a".into(),
        DartKind::Aligned(k) => k.to_string(),
        DartKind::RandomLine => "1r".into(),
        DartKind::OrthogonalLines => "1o".into(),
    }
}

const ELLIPSOID_STREAM: u64 = 0xE11;

fn cmd_volume(common: &Common, a: &VolumeArgs, header: &str) -> anyhow::Result<Vec<Output>> {
    let reps = common.reps.unwrap_or(100);
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    if a.d == 0 {
        return Err(usage("--d must be at least 1"));
    }
    let n_list = parse_n_range(&a.n)?;
    let kinds: Vec<DartKind> = if a.unaligned {
        if a.d != 2 {
            return Err(usage("--unaligned requires --d 2"));
        }
        if a.sampler != SamplerArg::Mc {
            return Err(usage("--unaligned requires --sampler mc"));
        }
        vec![DartKind::Aligned(1), DartKind::RandomLine, DartKind::OrthogonalLines]
    } else {
        let ks = match &a.k {
            Some(s) => parse_list(s, "k", |t| t.parse::<usize>().ok())?,
            None => (0..=a.d).collect(),
        };
        if let Some(k) = ks.iter().find(|&&k| k > a.d) {
            return Err(usage(format!("k={k} exceeds d={}", a.d)));
        }
        ks.into_iter().map(DartKind::Aligned).collect()
    };

    let domain = BoxDomain::two_cube(a.d);
    let sphere;
    let ellipsoid;
    let (object, true_volume): (&dyn FlatIntegrable, f64) = match a.object {
        ObjectArg::Sphere => {
            sphere = Sphere::unit(a.d);
            (&sphere, ball_volume(a.d, 1.0))
        }
        ObjectArg::Ellipsoid => {
            if a.d < 2 {
                return Err(usage("the ellipsoid needs --d 2 or more"));
            }
            if !(a.s > 0.0 && a.s.is_finite()) {
                return Err(usage("--s must be positive"));
            }
            let mut rng = RngStream::keyed(common.seed, &[ELLIPSOID_STREAM]);
            ellipsoid = make_ellipsoid(a.d, a.s, a.rot, &mut rng)?;
            let v = ellipsoid.true_volume();
            (&ellipsoid, v)
        }
    };
    let cfg = ErrorCurveConfig {
        object,
        true_volume,
        domain,
        sampler: match a.sampler {
            SamplerArg::Mc => Sampler::Mc,
            SamplerArg::Lhs => Sampler::Lhs,
        },
        kinds,
        n_list,
        reps,
        seed: common.seed,
    };
    let rows = error_curve(&cfg)?;

    let mut csv = String::from(header);
    csv.push_str("k,n,rms_rel,mean_abs_rel,std_err,wall_s\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            kind_label(r.kind, a.unaligned),
            r.n,
            num(r.rms_rel),
            num(r.mean_abs_rel),
            num(r.std_err),
            timing(r.wall_s, common.no_timing)
        );
    }
    let mut outputs = vec![Output {
        path: common.out.clone(),
        contents: csv,
    }];
    let ratio_path = a.ratios.clone().or_else(|| common.out.as_deref().map(|o| sibling(o, "ratios", "csv")));
    if let Some(path) = ratio_path {
        outputs.push(Output {
            path: Some(path),
            contents: ratios_csv(header, &rows, true_volume, a.unaligned),
        });
    }
    Ok(outputs)
}

fn ratios_csv(header: &str, rows: &[CurveRow], true_volume: f64, unaligned: bool) -> String {
    let mut csv = String::from(header);
    csv.push_str("k,n,rep,ratio\n");
    for r in rows {
        for (rep, ratio) in r.ratios(true_volume).iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{}", kind_label(r.kind, unaligned), r.n, rep, num(*ratio));
        }
    }
    csv
}

fn cmd_mps(common: &Common, a: &MpsArgs, header: &str) -> anyhow::Result<Vec<Output>> {
    if common.reps.is_some_and(|r| r != 1) {
        return Err(usage("mps runs a single sampler; use separate seeds for replications"));
    }
    let mut cfg = MpsConfig::new(
        a.d,
        a.rf,
        a.v,
        match a.dart {
            DartArg::Point => DartMode::Point,
            DartArg::Line => DartMode::Line,
        },
    );
    cfg.max_darts = a.max_darts;
    if let Some(t) = a.time_budget {
        if !(t > 0.0 && t.is_finite()) {
            return Err(usage("--time-budget must be positive"));
        }
        cfg.time_budget = Some(Duration::from_secs_f64(t));
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let probes = a.probes.unwrap_or_else(|| default_probes(a.d));

    let mut rng = RngStream::keyed(common.seed, &[0x3A5]);
    let (cloud, stats) = run_mps(&cfg, &mut rng)?;
    let mut probe_rng = RngStream::keyed(common.seed, &[0x3A6]);
    let quality = if cloud.len() >= 2 && probes > 0 {
        Some(measure_quality(&cloud, probes, &mut probe_rng)?)
    } else {
        None
    };

    let mut csv = String::from(header);
    csv.push_str("event,wall_s,points,misses_consec\n");
    for &(t, n) in &stats.inserted_over_time {
        let _ = writeln!(csv, "insert,{},{},0", timing(t, common.no_timing), n);
    }
    let _ = writeln!(
        csv,
        "end,{},{},{}",
        timing(stats.elapsed_s, common.no_timing),
        cloud.len(),
        stats.consecutive_misses
    );
    let maximal = stats.consecutive_misses >= stats.required_misses;
    let mut kv = vec![
        ("darts", stats.darts.to_string()),
        ("hits", stats.hits.to_string()),
        ("misses", stats.misses.to_string()),
        ("required_misses", stats.required_misses.to_string()),
        ("stopped_by_miss_rule", maximal.to_string()),
        ("r_f", num(a.rf)),
        ("peak_memory_estimate_bytes", stats.peak_memory_estimate.to_string()),
        ("probes", probes.to_string()),
    ];
    match quality {
        Some(q) => {
            kv.push(("r_f_measured", num(q.r_f_measured)));
            kv.push(("r_c_estimate", num(q.r_c_estimate)));
            kv.push(("eps_r", num(q.aspect_ratio)));
        }
        None => {
            for k in ["r_f_measured", "r_c_estimate", "eps_r"] {
                kv.push((k, "NA".into()));
            }
        }
    }
    for (k, v) in kv {
        let _ = writeln!(csv, "# {k}={v}");
    }

    let mut outputs = vec![Output {
        path: common.out.clone(),
        contents: csv,
    }];
    let cloud_path = a.cloud.clone().or_else(|| common.out.as_deref().map(|o| sibling(o, "cloud", "txt")));
    if let Some(path) = cloud_path {
        let mut buf = Vec::new();
        cloud.write_to(&mut buf)?;
        outputs.push(Output {
            path: Some(path),
            contents: String::from_utf8(buf)?,
        });
    }
    Ok(outputs)
}

fn cmd_pof(common: &Common, a: &PofArgs, header: &str) -> anyhow::Result<Vec<Output>> {
    let reps = common.reps.unwrap_or(30);
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let surfaces = parse_list(&a.surface, "surface", |t| t.parse::<SurfaceKind>().ok())?;
    let dims = parse_d_range(&a.d)?;
    let pfs = parse_list(&a.pf, "pf", |t| t.parse::<f64>().ok().filter(|p| *p > 0.0 && *p < 0.5))?;
    let ks = parse_list(&a.k, "k", |t| t.parse::<usize>().ok().filter(|k| *k <= 1))?;
    if !(a.target_rms > 0.0) {
        return Err(usage("--target-rms must be positive"));
    }
    if a.n_start == 0 || a.n_start > a.n_max {
        return Err(usage("need 1 <= --n-start <= --n-max"));
    }

    let rows: Vec<PofRow> = match &a.n {
        Some(n) => {
            let ns = parse_n_range(n)?;
            budget_experiment(&surfaces, &dims, &pfs, &ks, &ns, reps, common.seed)
        }
        None => speedup_experiment(&SpeedupConfig {
            surfaces,
            dims,
            pfs,
            reps,
            target_rms: a.target_rms,
            n_start: a.n_start,
            n_max: a.n_max,
            seed: common.seed,
        }),
    }
    .map_err(|e| anyhow!("{e}"))?;

    let mut csv = String::from(header);
    csv.push_str("surface,d,pf,k,n,estimate,rms_rel,wall_s,speedup\n");
    for r in &rows {
        let speedup = match r.speedup {
            Some(s) if !common.no_timing => num(s),
            _ => "NA".into(),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.surface,
            r.d,
            num(r.pf),
            r.k,
            r.n,
            num(r.estimate),
            num(r.rms_rel),
            timing(r.wall_s, common.no_timing),
            speedup
        );
    }
    Ok(vec![Output {
        path: common.out.clone(),
        contents: csv,
    }])
}

fn cmd_check(a: &CheckArgs) -> anyhow::Result<()> {
    let file = fs::File::open(&a.cloud).with_context(|| format!("opening {}", a.cloud.display()))?;
    let cloud = PointCloud::read_from(std::io::BufReader::new(file))?;
    let outside = cloud.points().filter(|p| p.iter().any(|x| !(0.0..=1.0).contains(x))).count();
    let tree = KdTree::build(&cloud);
    let min_d2 = (0..cloud.len())
        .filter_map(|i| tree.nearest(&cloud, cloud.point(i), Some(i)).map(|(_, d2)| d2))
        .fold(f64::INFINITY, f64::min);
    let min_dist = min_d2.sqrt();
    println!(
        "points={} r_f={} min_distance={} outside_box={}",
        cloud.len(),
        num(cloud.r_f()),
        num(min_dist),
        outside
    );
    if outside > 0 {
        bail!("{outside} points lie outside the unit box");
    }
    if min_dist < cloud.r_f() {
        bail!("separation violated: {min_dist} < {}", cloud.r_f());
    }
    Ok(())
}
