//! Command-line surface behind the `puzzlemix` binary.
//!
//! Exit codes: 0 success, 1 failed validation, 2 bad arguments or
//! configuration, 3 I/O or format errors, 4 solver errors. Every output file
//! is written to a temporary sibling and renamed into place on success.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bench::{format_summary, run_benchmark, summarize, trial_seed, write_csv};
use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::mixer::{adversarial_mix, compare_methods, puzzle_mix, run_cycles, AdvConfig, Method, MixConfig};
use crate::saliency::{grad_l2_saliency, proxy_saliency, saliency_from_map};
use crate::synthetic::synthetic_pairs;
use crate::tensor_io::{load_image, read_pft, save_image, write_atomically, FloatTensor, ImageTensor};
use crate::validate::{run_validation, ValidateOptions};

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "puzzlemix", version, about = "Saliency-guided mixup of image pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mix two PNG images.
    Mix(MixArgs),
    /// Time masked transport against the exact assignment solver.
    BenchTransport(BenchArgs),
    /// Run the randomized property suites.
    Validate(ValidateArgs),
    /// Mixed-saliency mass and total variation across mixing weights.
    Metrics(MetricsArgs),
}

/// Mixing parameters shared by `mix` and `metrics`; unset flags fall back to
/// the `--config` file, then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// JSON file with any of the parameter names below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Number of mask steps between 0 and 1.
    #[arg(long)]
    pub m: Option<usize>,
    /// Grid side to draw from; repeat for several.
    #[arg(long = "grid")]
    pub grid: Vec<usize>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub no_transport: bool,
    /// Print where each parameter came from.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Saliency (H×W) or gradient (C×H×W) map for `--a`, as PFT.
    #[arg(long)]
    pub sal_a: Option<PathBuf>,
    #[arg(long)]
    pub sal_b: Option<PathBuf>,
    /// Loss gradient for `--a` (C×H×W PFT); with `--grad-b`, enables the
    /// adversarial transform.
    #[arg(long)]
    pub grad_a: Option<PathBuf>,
    #[arg(long)]
    pub grad_b: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed mixing weight instead of a Beta draw.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Center-crop both inputs so every grid side divides them.
    #[arg(long)]
    pub crop: bool,
    #[arg(long)]
    pub adv_epsilon: Option<f32>,
    #[arg(long)]
    pub adv_tau: Option<f32>,
    #[arg(long)]
    pub adv_p: Option<f64>,
    #[arg(long)]
    pub adv_seed: Option<u64>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Problem size (a perfect square); repeat for several.
    #[arg(long = "n", default_values_t = vec![4usize, 16, 64, 256])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write zeros in the time columns so the CSV depends only on the seed.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Directory of PNGs; files are paired in sorted order (1st with 2nd, ...).
    #[arg(long, conflicts_with = "synthetic")]
    pub dir: Option<PathBuf>,
    /// Use this many generated pairs instead of a directory.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Comma-separated mixing weights.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-pair CSV destination; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
}

/// Parameter file contents; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    pub m: Option<usize>,
    pub grid: Option<Vec<usize>>,
    pub cycles: Option<usize>,
    pub transport: Option<bool>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub adv_epsilon: Option<f32>,
    pub adv_tau: Option<f32>,
    pub adv_p: Option<f64>,
    pub adv_seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Picks flag, then file, then default, recording which one won.
struct Resolver<'a> {
    log: Vec<String>,
    file: &'a FileConfig,
}

impl Resolver<'_> {
    fn pick<T: Clone + std::fmt::Debug>(&mut self, name: &str, flag: Option<T>, file: Option<T>, default: T) -> T {
        let (v, src) = match (flag, file) {
            (Some(v), _) => (v, "flag"),
            (None, Some(v)) => (v, "config"),
            (None, None) => (default, "default"),
        };
        self.log.push(format!("{name} = {v:?} ({src})"));
        v
    }
}

fn resolve_mix_config(params: &ParamArgs, seed: Option<u64>, lambda: Option<f64>) -> Result<(MixConfig, FileConfig, Vec<String>)> {
    let file = match &params.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let d = MixConfig::default();
    let dp = EnergyParams::default();
    let mut r = Resolver {
        log: Vec::new(),
        file: &file,
    };
    let grid_flag = (!params.grid.is_empty()).then(|| params.grid.clone());
    let transport_flag = params.no_transport.then_some(false);
    let cfg = MixConfig {
        alpha: r.pick("alpha", params.alpha, r.file.alpha, d.alpha),
        params: EnergyParams {
            beta: r.pick("beta", params.beta, r.file.beta, dp.beta),
            gamma: r.pick("gamma", params.gamma, r.file.gamma, dp.gamma),
            eta: r.pick("eta", params.eta, r.file.eta, dp.eta),
            xi: r.pick("xi", params.xi, r.file.xi, dp.xi),
            m: r.pick("m", params.m, r.file.m, dp.m),
            lambda: dp.lambda,
        },
        grid_choices: r.pick("grid", grid_flag, r.file.grid.clone(), d.grid_choices.clone()),
        seed: r.pick("seed", seed, r.file.seed, d.seed),
        cycles: r.pick("cycles", params.cycles, r.file.cycles, d.cycles),
        transport_enabled: r.pick("transport", transport_flag, r.file.transport, d.transport_enabled),
        lambda: r.pick("lambda", lambda.map(Some), r.file.lambda.map(Some), None),
        max_sweeps: d.max_sweeps,
    };
    cfg.validate()?;
    let log = r.log;
    Ok((cfg, file, log))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Format(_) | Error::Shape(_) => EXIT_IO,
        Error::Config(_) | Error::Domain(_) => EXIT_USAGE,
        Error::Index { .. }
        | Error::NotAdjacent(..)
        | Error::TooLarge(_)
        | Error::SubmodularityViolation { .. }
        | Error::NotConverged => EXIT_SOLVER,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Mix(a) => cmd_mix(&a).map(|_| 0),
        Command::BenchTransport(a) => cmd_bench_transport(&a).map(|_| 0),
        Command::Validate(a) => cmd_validate(&a),
        Command::Metrics(a) => cmd_metrics(&a).map(|_| 0),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

fn crop_to(image: &ImageTensor, unit: usize) -> Result<ImageTensor> {
    let (h, w) = (image.height() / unit * unit, image.width() / unit * unit);
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "{}x{} image is smaller than one {unit}x{unit} block",
            image.height(),
            image.width()
        )));
    }
    image.center_crop(h, w)
}

fn map_or_proxy(path: Option<&Path>, image: &ImageTensor, label: &str) -> Result<FloatTensor> {
    match path {
        Some(p) => saliency_from_map(&read_pft(p)?),
        None => {
            eprintln!("warning: no saliency map for {label}; using Sobel edge saliency");
            Ok(proxy_saliency(image))
        }
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write_atomically(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
}

pub fn cmd_mix(args: &MixArgs) -> Result<()> {
    let (cfg, file, log) = resolve_mix_config(&args.params, args.seed, args.lambda)?;
    let mut a = load_image(&args.a)?;
    let mut b = load_image(&args.b)?;
    if args.crop {
        let unit = cfg.grid_choices.iter().copied().fold(1, lcm);
        a = crop_to(&a, unit)?;
        b = crop_to(&b, unit)?;
    }
    if !a.same_shape(&b) {
        return Err(Error::Shape(format!("inputs are {:?} and {:?}", a.shape(), b.shape())));
    }

    let adversarial = args.grad_a.is_some() || args.grad_b.is_some();
    let (mixed, meta) = if adversarial {
        let (Some(ga), Some(gb)) = (&args.grad_a, &args.grad_b) else {
            return Err(Error::Config("--grad-a and --grad-b must be given together".into()));
        };
        if cfg.cycles > 1 {
            return Err(Error::Config("the adversarial transform runs a single cycle".into()));
        }
        let d = AdvConfig::default();
        let mut r = Resolver {
            log: Vec::new(),
            file: &file,
        };
        let adv = AdvConfig {
            epsilon: r.pick("adv_epsilon", args.adv_epsilon, r.file.adv_epsilon, d.epsilon),
            tau: r.pick("adv_tau", args.adv_tau, r.file.adv_tau, d.tau),
            p: r.pick("adv_p", args.adv_p, r.file.adv_p, d.p),
            seed: r.pick("adv_seed", args.adv_seed, r.file.adv_seed, cfg.seed),
        };
        if args.params.verbose {
            log.iter().chain(&r.log).for_each(|l| eprintln!("{l}"));
        }
        let grads = [read_pft(ga)?, read_pft(gb)?];
        let sal = |p: &Option<PathBuf>, g: &FloatTensor| match p {
            Some(p) => saliency_from_map(&read_pft(p)?),
            None => grad_l2_saliency(g),
        };
        let s0 = sal(&args.sal_a, &grads[0])?;
        let s1 = sal(&args.sal_b, &grads[1])?;
        let (res, trace) = adversarial_mix(&a, &b, &grads[0], &grads[1], &s0, &s1, &cfg, &adv)?;
        let mut meta = res.metadata(&cfg);
        meta.adversarial = Some(trace.metadata(&adv));
        (res.mixed, meta)
    } else {
        if args.params.verbose {
            log.iter().for_each(|l| eprintln!("{l}"));
        }
        let s0 = map_or_proxy(args.sal_a.as_deref(), &a, "--a")?;
        let s1 = map_or_proxy(args.sal_b.as_deref(), &b, "--b")?;
        if cfg.cycles > 1 {
            let rep = run_cycles(&a, &b, &s0, &s1, &cfg)?;
            let meta = rep.metadata(&cfg);
            let mixed = rep.last().mixed.clone();
            (mixed, meta)
        } else {
            let res = puzzle_mix(&a, &b, &s0, &s1, &cfg)?;
            let meta = res.metadata(&cfg);
            (res.mixed, meta)
        }
    };

    save_image(&mixed, &args.out)?;
    if let Some(m) = &args.meta {
        write_json(&meta, m)?;
    }
    Ok(())
}

pub fn cmd_bench_transport(args: &BenchArgs) -> Result<()> {
    if args.trials == 0 {
        return Err(Error::Config("--trials must be >= 1".into()));
    }
    let rows = run_benchmark(&args.n, args.trials, args.seed)?;
    let summary = format_summary(&summarize(&rows));
    match &args.out {
        Some(path) => {
            write_atomically(path, |w| write_csv(&rows, !args.no_timing, w))?;
            print!("{summary}");
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(&rows, !args.no_timing, stdout.lock()).map_err(|e| Error::io(Path::new("<stdout>"), e))?;
            eprint!("{summary}");
        }
    }
    Ok(())
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let d = ValidateOptions::default();
    let opts = ValidateOptions {
        trials: args.trials.max(1),
        seed: args.seed,
        beta: args.beta.unwrap_or(d.beta),
        gamma: args.gamma.unwrap_or(d.gamma),
    };
    if !(opts.beta >= 0.0 && opts.gamma >= 0.0) {
        return Err(Error::Config("beta and gamma must be >= 0".into()));
    }
    let report = run_validation(&opts)?;
    print!("{report}");
    let ok = report.all_passed();
    println!("{}", if ok { "all properties hold" } else { "some properties failed" });
    Ok(if ok { 0 } else { EXIT_VALIDATION })
}

fn load_pairs(dir: &Path) -> Result<Vec<(String, ImageTensor, ImageTensor)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) {
            files.push(path);
        }
    }
    files.sort();
    if files.len() % 2 == 1 {
        eprintln!("warning: odd number of images; ignoring {}", files[files.len() - 1].display());
    }
    files
        .chunks_exact(2)
        .map(|p| {
            let name = format!(
                "{}+{}",
                p[0].file_name().unwrap_or_default().to_string_lossy(),
                p[1].file_name().unwrap_or_default().to_string_lossy()
            );
            Ok((name, load_image(&p[0])?, load_image(&p[1])?))
        })
        .collect()
}

pub const METRICS_HEADER: &str = "pair,lambda,method,mixed_saliency,total_variation";

pub fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let (cfg, _, log) = resolve_mix_config(&args.params, Some(args.seed), None)?;
    if args.params.verbose {
        log.iter().for_each(|l| eprintln!("{l}"));
    }
    if let Some(l) = args.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
    }
    let pairs: Vec<(String, ImageTensor, ImageTensor)> = match (&args.dir, args.synthetic) {
        (Some(dir), _) => load_pairs(dir)?,
        (None, Some(k)) => synthetic_pairs(args.seed, k)?
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| (format!("synthetic{i}"), a, b))
            .collect(),
        (None, None) => return Err(Error::Config("one of --dir or --synthetic is required".into())),
    };
    if pairs.is_empty() {
        return Err(Error::Config("no image pairs found".into()));
    }

    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    // sums[lambda][method] = (mass, tv)
    let mut sums = vec![[(0.0f64, 0.0f64); 3]; args.lambdas.len()];
    for (i, (name, a, b)) in pairs.iter().enumerate() {
        let (s0, s1) = (proxy_saliency(a), proxy_saliency(b));
        let pair_cfg = MixConfig {
            seed: trial_seed(cfg.seed, i, 0),
            ..cfg.clone()
        };
        for (li, &lambda) in args.lambdas.iter().enumerate() {
            for (k, mm) in compare_methods(a, b, &s0, &s1, lambda, &pair_cfg)?.iter().enumerate() {
                csv.push_str(&format!(
                    "{name},{lambda},{},{},{}\n",
                    mm.method.name(),
                    mm.metrics.mixed_saliency,
                    mm.metrics.total_variation
                ));
                sums[li][k].0 += mm.metrics.mixed_saliency;
                sums[li][k].1 += mm.metrics.total_variation;
            }
        }
    }

    let k = pairs.len() as f64;
    let mut summary = format!("{:>7}", "lambda");
    for m in Method::ALL {
        summary.push_str(&format!(" {:>14} {:>12}", format!("{} mass", m.name()), format!("{} tv", m.name())));
    }
    summary.push('\n');
    for (li, &lambda) in args.lambdas.iter().enumerate() {
        summary.push_str(&format!("{lambda:>7.2}"));
        for (mass, tv) in sums[li] {
            summary.push_str(&format!(" {:>14.6} {:>12.6}", mass / k, tv / k));
        }
        summary.push('\n');
    }

    match &args.out {
        Some(path) => {
            write_atomically(path, |w| w.write_all(csv.as_bytes()))?;
            print!("{summary}");
        }
        None => {
            print!("{csv}");
            eprint!("{summary}");
        }
    }
    Ok(())
}
