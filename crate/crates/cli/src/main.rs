//! `pansh-qa`: quality assessment of pansharpened imagery from the command line.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors.

mod num;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pansh_qa::alignment::{AlignOptions, AlignmentMode};
use pansh_qa::baselines::Method;
use pansh_qa::filtering::Interpolator;
use pansh_qa::fr_indexes::{evaluate_fr, FrConfig, PanDownscale};
use pansh_qa::harness::{
    index_correlation_matrix, misregistration_delta, run_fr_campaign, run_rr_campaign, save_tile,
    CampaignResult, OutlierPolicy, RrOptions,
};
use pansh_qa::raster::{load_raster_with_sidecar, save_raster, save_raster_with_sensor, validate_pair, Dtype};
use pansh_qa::ref_indexes::{ergas, q2n, sam, AngleUnit, DEFAULT_BLOCK};
use pansh_qa::report::names;
use pansh_qa::resampling::wald_downgrade;
use pansh_qa::synthetic::{fr_pair, SceneConfig};
use pansh_qa::{PanMsPair, Raster, SensorSpec};

use num::g6;

#[derive(Parser)]
#[command(name = "pansh-qa", version, about = "Quality indexes for pansharpened imagery")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full-resolution (no-reference) index suite.
    EvalFr(EvalFr),
    /// Reference indexes of a fused product against ground truth.
    EvalRr(EvalRr),
    /// Wald degradation of a PAN/MS pair; writes pan, ms and gt into DIR.
    Downgrade(Downgrade),
    /// Run a baseline pansharpening method.
    Baseline(BaselineCmd),
    /// Reduced-resolution campaign with index correlation matrix.
    CrossCheck(CrossCheck),
    /// Full-resolution campaign of the baselines over a dataset.
    FrCampaign(FrCampaign),
    /// Write a synthetic dataset of PAN/MS tiles.
    Synth(Synth),
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    pan: PathBuf,
    #[arg(long)]
    ms: PathBuf,
    /// wv2, wv3 or a JSON sensor file; defaults to the MS sidecar's sensor,
    /// then to default gains at the PAN/MS size ratio.
    #[arg(long)]
    sensor: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignArg {
    Mirror,
    Valid,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    HalfBand,
    Bicubic,
}

#[derive(Clone, Copy, ValueEnum)]
enum DownscaleArg {
    Mtf,
    Ideal,
}

#[derive(Args)]
struct EvalFr {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    fused: PathBuf,
    /// Local correlation window (default: the resolution ratio).
    #[arg(long)]
    sigma: Option<usize>,
    #[arg(long, default_value_t = 1)]
    p: u32,
    #[arg(long, default_value_t = 1)]
    q: u32,
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    block: usize,
    /// Write `ms - reprojection` as an f64 raster.
    #[arg(long, value_name = "PATH")]
    emit_error_map: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[arg(long, value_enum, default_value = "mirror")]
    align_mode: AlignArg,
    #[arg(long, value_enum, default_value = "half-band")]
    interpolator: InterpArg,
    #[arg(long, value_enum, default_value = "mtf")]
    pan_downscale: DownscaleArg,
}

#[derive(Args)]
struct EvalRr {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    fused: PathBuf,
    #[arg(long, default_value_t = 4)]
    ratio: usize,
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    block: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct Downgrade {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, num_args = 2, value_names = ["DR", "DC"])]
    misalign: Option<Vec<usize>>,
}

#[derive(Args)]
struct BaselineCmd {
    #[arg(long)]
    method: MethodArg,
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exp,
    Brovey,
    MtfGlp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exp => Method::Exp,
            MethodArg::Brovey => Method::Brovey,
            MethodArg::MtfGlp => Method::MtfGlp,
        }
    }
}

#[derive(Args)]
struct CrossCheck {
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, num_args = 2, value_names = ["DR", "DC"])]
    misalign: Option<Vec<usize>>,
    /// Leave the ground-truth pseudo-method out of the correlation matrix (the default).
    #[arg(long, conflicts_with = "include_gt")]
    exclude_gt: bool,
    /// Keep the ground-truth pseudo-method in the correlation matrix.
    #[arg(long)]
    include_gt: bool,
    /// Noise-corrupted ground-truth variants, as fractions of band std.
    #[arg(long, value_delimiter = ',', value_name = "L")]
    noise: Vec<f64>,
    /// Drop samples whose modified z-score exceeds this on any index.
    #[arg(long, value_name = "Z")]
    outlier_z: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "exp,brovey,mtf-glp")]
    methods: Vec<MethodArg>,
}

#[derive(Args)]
struct FrCampaign {
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "exp,brovey,mtf-glp")]
    methods: Vec<MethodArg>,
}

#[derive(Args)]
struct Synth {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    tiles: usize,
    #[arg(long, default_value_t = 256)]
    ms_size: usize,
    #[arg(long, default_value_t = 8)]
    bands: usize,
    #[arg(long, default_value_t = 4)]
    ratio: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Data(pansh_qa::Error),
}

impl From<pansh_qa::Error> for Failure {
    fn from(e: pansh_qa::Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::EvalFr(a) => eval_fr(a),
        Command::EvalRr(a) => eval_rr(a),
        Command::Downgrade(a) => downgrade(a),
        Command::Baseline(a) => baseline(a),
        Command::CrossCheck(a) => cross_check(a),
        Command::FrCampaign(a) => fr_campaign(a),
        Command::Synth(a) => synth(a),
    }
}

fn load_pair(a: &PairArgs) -> CliResult<PanMsPair> {
    let (pan, _) = load_raster_with_sidecar(&a.pan)?;
    let (ms, side) = load_raster_with_sidecar(&a.ms)?;
    let sensor = match a.sensor.as_deref() {
        Some(name @ ("wv2" | "wv3")) => SensorSpec::preset(name, ms.bands())?,
        Some(file) => {
            let path = Path::new(file);
            if !path.is_file() {
                return Err(Failure::Usage(format!(
                    "--sensor expects wv2, wv3 or a JSON file, got '{file}'"
                )));
            }
            let text = fs::read_to_string(path).map_err(|e| Failure::Data(io_error(path, e)))?;
            let s: SensorSpec = serde_json::from_str(&text).map_err(|e| {
                Failure::Data(pansh_qa::Error::Header {
                    path: path.to_path_buf(),
                    msg: e.to_string(),
                })
            })?;
            s.validate()?;
            s
        }
        None => match side.sensor {
            Some(s) => s,
            None if ms.rows() > 0 && pan.rows() % ms.rows() == 0 => {
                SensorSpec::with_default_gains("default", pan.rows() / ms.rows(), ms.bands())?
            }
            None => {
                return Err(Failure::Data(pansh_qa::Error::Geometry(format!(
                    "PAN rows {} not a multiple of MS rows {}",
                    pan.rows(),
                    ms.rows()
                ))))
            }
        },
    };
    Ok(validate_pair(pan, ms, sensor)?)
}

fn io_error(path: &Path, source: std::io::Error) -> pansh_qa::Error {
    pansh_qa::Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn misalign_arg(v: Option<Vec<usize>>) -> Option<(usize, usize)> {
    v.map(|v| (v[0], v[1]))
}

fn eval_fr(a: EvalFr) -> CliResult<String> {
    let pair = load_pair(&a.pair)?;
    let (fused, _) = load_raster_with_sidecar(&a.fused)?;
    let cfg = FrConfig {
        sigma: a.sigma,
        p: a.p,
        q: a.q,
        block: a.block,
        align: AlignOptions {
            mode: match a.align_mode {
                AlignArg::Mirror => AlignmentMode::MirrorFill,
                AlignArg::Valid => AlignmentMode::ValidRegion,
            },
            interpolator: match a.interpolator {
                InterpArg::HalfBand => Interpolator::HalfBand23,
                InterpArg::Bicubic => Interpolator::Bicubic,
            },
        },
        pan_downscale: match a.pan_downscale {
            DownscaleArg::Mtf => PanDownscale::Mtf,
            DownscaleArg::Ideal => PanDownscale::Ideal,
        },
    };
    let mut eval = evaluate_fr(&fused, &pair, &cfg)?;
    eval.report.tile = stem(&a.pair.pan);
    eval.report.method = stem(&a.fused);
    if let Some(path) = &a.emit_error_map {
        save_raster(&eval.error_map, path, Dtype::F64)?;
    }
    if a.json {
        return Ok(eval.report.to_json() + "\n");
    }
    let mut s = String::new();
    for name in names::FULL_RESOLUTION {
        let _ = writeln!(s, "{name:<18}{}", g6(eval.report.get(name).unwrap_or(f64::NAN)));
    }
    let shifts: Vec<String> = eval
        .report
        .diagnostics
        .shifts
        .iter()
        .map(|[r, c]| format!("({r},{c})"))
        .collect();
    let _ = writeln!(s, "{:<18}{}", "shifts", shifts.join(" "));
    if !eval.report.diagnostics.degenerate_bands.is_empty() {
        let _ = writeln!(s, "{:<18}{:?}", "degenerate bands", eval.report.diagnostics.degenerate_bands);
    }
    Ok(s)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn eval_rr(a: EvalRr) -> CliResult<String> {
    let (gt, _) = load_raster_with_sidecar(&a.gt)?;
    let (fused, _) = load_raster_with_sidecar(&a.fused)?;
    let scores = [
        (names::SAM, sam(&gt, &fused, AngleUnit::Degrees)?),
        (names::ERGAS, ergas(&gt, &fused, a.ratio)?),
        (names::Q2N, q2n(&gt, &fused, a.block)?),
    ];
    if a.json {
        let map: serde_json::Map<String, serde_json::Value> =
            scores.iter().map(|(k, v)| (k.to_string(), serde_json::json!(v))).collect();
        return Ok(serde_json::to_string_pretty(&map).expect("scores serialize") + "\n");
    }
    let mut s = String::new();
    for (k, v) in scores {
        let _ = writeln!(s, "{k:<8}{}", g6(v));
    }
    Ok(s)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(io_error(dir, e)))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Data(io_error(path, e)))
}

fn downgrade(a: Downgrade) -> CliResult<String> {
    let pair = load_pair(&a.pair)?;
    let (reduced, gt) = wald_downgrade(&pair, misalign_arg(a.misalign))?;
    create_dir(&a.out)?;
    save_tile(&a.out, &reduced, Dtype::F64)?;
    save_raster_with_sensor(&gt, &a.out.join("gt"), Dtype::F64, Some(reduced.sensor()))?;
    Ok(format!(
        "wrote {}: pan {}x{}, ms {}x{}x{}\n",
        a.out.display(),
        reduced.pan().rows(),
        reduced.pan().cols(),
        reduced.ms().rows(),
        reduced.ms().cols(),
        reduced.ms().bands()
    ))
}

fn baseline(a: BaselineCmd) -> CliResult<String> {
    let pair = load_pair(&a.pair)?;
    let method = Method::from(a.method);
    let fused: Raster = method.run(&pair)?;
    save_raster_with_sensor(&fused, &a.out, Dtype::F64, Some(pair.sensor()))?;
    Ok(format!("wrote {} ({method})\n", a.out.display()))
}

fn methods(list: &[MethodArg]) -> Vec<Method> {
    let mut v: Vec<Method> = list.iter().map(|&m| m.into()).collect();
    v.sort();
    v.dedup();
    v
}

fn cross_check(a: CrossCheck) -> CliResult<String> {
    if let Some(z) = a.outlier_z {
        if !(z > 0.0) {
            return Err(Failure::Usage(format!("--outlier-z must be positive, got {z}")));
        }
    }
    if let Some(l) = a.noise.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Failure::Usage(format!("noise levels must be positive, got {l}")));
    }
    let methods = methods(&a.methods);
    let opts = RrOptions {
        noise_levels: a.noise.clone(),
        ..RrOptions::default()
    };
    let policy = a.outlier_z.map_or(OutlierPolicy::None, OutlierPolicy::ModifiedZ);
    let exclude_gt = !a.include_gt;

    create_dir(&a.out)?;
    let aligned = run_rr_campaign(&a.dataset, &methods, &opts)?;
    warn(&aligned);
    aligned.write_csv(&a.out.join("campaign.csv"))?;
    let corr = index_correlation_matrix(&aligned, exclude_gt, policy)?;
    write_text(&a.out.join("correlation.csv"), &corr.to_csv())?;

    let mut s = String::new();
    let _ = writeln!(s, "samples           {}", corr.samples);
    if let Some(r) = corr.get(names::R_Q2N, names::Q2N) {
        let _ = writeln!(s, "corr(R-Q2n, Q2n)  {}", g6(r));
    }

    if let Some(shift) = misalign_arg(a.misalign) {
        let shifted = run_rr_campaign(
            &a.dataset,
            &methods,
            &RrOptions {
                misalign: Some(shift),
                ..opts
            },
        )?;
        shifted.write_csv(&a.out.join("campaign_misaligned.csv"))?;
        let corr = index_correlation_matrix(&shifted, exclude_gt, policy)?;
        write_text(&a.out.join("correlation_misaligned.csv"), &corr.to_csv())?;
        let delta = misregistration_delta(&aligned, &shifted)?;
        write_text(&a.out.join("delta.csv"), &delta.to_csv())?;
        for (method, index) in [("gt", names::D_LAMBDA_K), ("gt", names::D_LAMBDA_K_ALIGN)] {
            if let Some(d) = delta.get(method, index) {
                let _ = writeln!(s, "delta {method} {index:<18}{}", g6(d));
            }
        }
    }
    let _ = writeln!(s, "wrote {}", a.out.display());
    Ok(s)
}

fn warn(res: &CampaignResult) {
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
}

fn fr_campaign(a: FrCampaign) -> CliResult<String> {
    let res = run_fr_campaign(&a.dataset, &methods(&a.methods), &FrConfig::default())?;
    warn(&res);
    create_dir(&a.out)?;
    res.write_csv(&a.out.join("campaign.csv"))?;
    let mut avg = String::from("method,index,mean\n");
    let mut s = String::new();
    for ((m, i), v) in res.averages() {
        let _ = writeln!(avg, "{m},{i},{v:?}");
        let _ = writeln!(s, "{m:<10}{i:<18}{}", g6(v));
    }
    write_text(&a.out.join("averages.csv"), &avg)?;
    Ok(s)
}

fn synth(a: Synth) -> CliResult<String> {
    if a.tiles == 0 {
        return Err(Failure::Usage("--tiles must be at least 1".into()));
    }
    create_dir(&a.out)?;
    for k in 0..a.tiles {
        let seed = a.seed.wrapping_add(k as u64);
        let pair = fr_pair(&SceneConfig::new(a.ms_size, a.bands, a.ratio, seed))?;
        let dir = a.out.join(format!("tile{k:03}"));
        create_dir(&dir)?;
        save_tile(&dir, &pair, Dtype::F64)?;
    }
    Ok(format!("wrote {} tiles to {}\n", a.tiles, a.out.display()))
}
