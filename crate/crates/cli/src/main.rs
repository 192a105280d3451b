//! `rbp`: deterministic synthetic corpora, bounding-box displacement
//! fields, pose decoding, shape augmentation and pose evaluation.
//!
//! Exit codes: 0 on success, 2 on configuration or usage errors, 1 on
//! runtime errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use rbp_core::augment::{augment_a1, augment_a2, augment_linear, AugmentParams};
use rbp_core::bbox::{decode_vector_field, FieldFile};
use rbp_core::config::Config;
use rbp_core::io::{self, PlyFormat};
use rbp_core::pipeline::{
    evaluate_pairs, generate_corpus, instance_fields, write_corpus, CorpusSpec, PairsFile,
    PipelineReport, PoseFile,
};
use rbp_core::types::{Category, SymmetryKind, SymmetryTag};
use rbp_core::Error;

#[derive(Parser)]
#[command(name = "rbp", version, about = "9DoF bounding-box projection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Ply,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (manifest, point clouds, pose labels).
    Gen(GenArgs),
    /// Compute displacement, hypothesis and residual fields for a corpus.
    Encode(EncodeArgs),
    /// Recover a pose from a displacement field and its point cloud.
    Decode(DecodeArgs),
    /// Apply shape augmentation to a canonical point set.
    Augment(AugmentArgs),
    /// Evaluate prediction/ground-truth pose pairs into a metric report.
    Eval(EvalArgs),
    /// Export the sweep curves of a report as CSV files.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the corpus seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Point-cloud format: ply (default) or json.
    #[arg(long, value_enum, default_value = "ply")]
    format: Format,
}

#[derive(Args)]
struct EncodeArgs {
    /// Corpus directory produced by `gen`.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for the field files.
    #[arg(long)]
    out: PathBuf,
    /// TOML configuration file (prior mode, rotation noise).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Encode all six faces even for symmetric categories.
    #[arg(long)]
    ignore_symmetry: bool,
    /// Output format; fields are always JSON.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct DecodeArgs {
    /// Field file (`dvpb` or `dvpb_vectors` kind).
    #[arg(long)]
    field: PathBuf,
    /// Observed point cloud (.ply or .json).
    #[arg(long)]
    points: PathBuf,
    /// Output pose JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Output format; poses are always JSON.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    A1,
    A2,
    Linear,
}

#[derive(Args)]
struct AugmentArgs {
    /// Canonical point set (.ply or .json). A1/linear input.
    #[arg(long, conflicts_with = "instance")]
    points: Option<PathBuf>,
    /// Instance JSON from `gen`; required for a2 (labels and hinge).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Category driving the augmentation axis.
    #[arg(long)]
    category: Option<Category>,
    #[arg(long, value_enum)]
    method: Method,
    /// Sampling seed for the augmentation parameters.
    #[arg(long, default_value = "0")]
    seed: u64,
    /// TOML configuration file (augmentation ranges).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output point set path.
    #[arg(long)]
    out: PathBuf,
    /// Output format: ply (default) or json.
    #[arg(long, value_enum, default_value = "ply")]
    format: Format,
}

#[derive(Args)]
struct EvalArgs {
    /// Pose pairs JSON file.
    #[arg(long)]
    pairs: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML configuration file (IoU resolution, sweep grids).
    #[arg(long)]
    config: Option<PathBuf>,
    /// json writes report.json, csv writes metrics.csv; default writes both.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct ReportArgs {
    /// Metric report JSON (from `eval` or a pipeline run).
    #[arg(long)]
    report: PathBuf,
    /// Output directory for `sweep_*.csv` files.
    #[arg(long)]
    out: PathBuf,
    /// Output format; curves are always CSV.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::ConfigError { .. } | Error::UnknownCategory(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(args) => gen(args),
        Command::Encode(args) => encode(args),
        Command::Decode(args) => decode(args),
        Command::Augment(args) => augment(args),
        Command::Eval(args) => eval(args),
        Command::Report(args) => report(args),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, Error> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn reject_format(format: Format, allowed: &[Format], key: &str) -> Result<(), Error> {
    if allowed.contains(&format) {
        Ok(())
    } else {
        Err(Error::ConfigError {
            key: key.into(),
            message: "format not supported by this subcommand".into(),
        })
    }
}

fn write_points(path: &Path, points: &[Vector3<f64>], format: Format) -> Result<(), Error> {
    match format {
        Format::Ply => io::save_ply(path, points, PlyFormat::Ascii),
        Format::Json => {
            let file = io::PointSetFile::new(points);
            std::fs::write(path, serde_json::to_vec_pretty(&file).expect("serializable"))?;
            Ok(())
        }
        Format::Csv => unreachable!("rejected earlier"),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value).expect("serializable"))?;
    Ok(())
}

fn gen(args: GenArgs) -> Result<(), Error> {
    reject_format(args.format, &[Format::Ply, Format::Json], "gen.format")?;
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.corpus.seed = seed;
    }
    let spec = CorpusSpec::from_config(&config);
    let instances = generate_corpus(&spec)?;
    match args.format {
        Format::Ply => {
            write_corpus(&args.out, &spec, &instances, PlyFormat::Ascii)?;
        }
        Format::Json => {
            // JSON point sets next to the standard manifest layout.
            write_corpus(&args.out, &spec, &instances, PlyFormat::Ascii)?;
            for inst in &instances {
                let id = format!("{}_{:016x}", inst.category, inst.seed);
                let dir = args.out.join("instances").join(&id);
                write_points(&dir.join("observed.json"), &inst.observed, Format::Json)?;
                write_points(&dir.join("model.json"), &inst.canonical_model, Format::Json)?;
            }
        }
        Format::Csv => unreachable!(),
    }
    println!("wrote corpus with {} instances to {}", instances.len(), args.out.display());
    Ok(())
}

fn encode(args: EncodeArgs) -> Result<(), Error> {
    reject_format(args.format, &[Format::Json], "encode.format")?;
    let config = load_config(&args.config)?;
    let (manifest, loaded) = rbp_core::pipeline::load_corpus(&args.corpus)?;
    std::fs::create_dir_all(&args.out)?;
    for entry in &loaded {
        let mut inst = entry.to_instance();
        if args.ignore_symmetry {
            inst.sym = SymmetryTag::new(inst.category, SymmetryKind::None);
        }
        let mean = manifest
            .mean_sizes
            .get(&inst.category)
            .map(|s| Vector3::new(s[0], s[1], s[2]))
            .unwrap_or_else(|| *inst.pose.size());
        let (gt, hyp, sprv) = instance_fields(
            &inst,
            &mean,
            config.hypothesis.prior,
            config.hypothesis.rotation_noise_deg,
        )?;
        let dir = args.out.join(&entry.file.id);
        write_json(&dir.join("gt_dvpb.json"), &FieldFile::from(&gt))?;
        write_json(&dir.join("hyp_dvpb.json"), &FieldFile::from(&hyp))?;
        write_json(&dir.join("sprv.json"), &FieldFile::from(&sprv))?;
    }
    println!("encoded {} instances into {}", loaded.len(), args.out.display());
    Ok(())
}

fn decode(args: DecodeArgs) -> Result<(), Error> {
    reject_format(args.format, &[Format::Json], "decode.format")?;
    let field: FieldFile = serde_json::from_slice(&std::fs::read(&args.field)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", args.field.display())))?;
    let points = io::load_points(&args.points)?;
    let pose = decode_vector_field(&field.to_vector_field()?, &points)?;
    write_json(&args.out, &PoseFile::from(&pose))?;
    println!("decoded pose written to {}", args.out.display());
    Ok(())
}

fn augment(args: AugmentArgs) -> Result<(), Error> {
    reject_format(args.format, &[Format::Ply, Format::Json], "augment.format")?;
    let config = load_config(&args.config)?;

    let instance = match &args.instance {
        Some(path) => Some(
            serde_json::from_slice::<rbp_core::pipeline::InstanceFile>(&std::fs::read(path)?)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let category = match (args.category, &instance) {
        (Some(c), _) => c,
        (None, Some(file)) => file.category,
        (None, None) => {
            return Err(Error::ConfigError {
                key: "augment.category".into(),
                message: "pass --category or --instance".into(),
            });
        }
    };
    let points = match (&args.points, &args.instance) {
        (Some(path), _) => io::load_points(path)?,
        (None, Some(path)) => {
            let model = path
                .parent()
                .map(|d| d.join("model.ply"))
                .filter(|p| p.exists())
                .ok_or_else(|| Error::ConfigError {
                    key: "augment.points".into(),
                    message: "no model.ply next to the instance file; pass --points".into(),
                })?;
            io::load_ply(&model)?
        }
        (None, None) => {
            return Err(Error::ConfigError {
                key: "augment.points".into(),
                message: "pass --points or --instance".into(),
            });
        }
    };

    let params = AugmentParams::sample(category, &config.augment, args.seed);
    let out = match args.method {
        Method::A1 => augment_a1(&points, &params),
        Method::Linear => {
            let scales = Vector3::new(params.gamma, params.gamma_max, params.gamma);
            augment_linear(&points, &scales)
        }
        Method::A2 => {
            let file = instance.as_ref().ok_or_else(|| Error::ConfigError {
                key: "augment.instance".into(),
                message: "a2 needs --instance for the hinge and part labels".into(),
            })?;
            let labels = file.labels.as_ref().ok_or_else(|| {
                Error::UnlabeledPoints("instance file carries no part labels".into())
            })?;
            let hinge = file.hinge.as_ref().ok_or_else(|| {
                Error::UnlabeledPoints("instance file carries no hinge line".into())
            })?;
            augment_a2(
                &points,
                labels,
                hinge,
                params.hinge_angle,
                &Vector3::new(params.gamma, params.gamma, params.gamma),
            )?
        }
    };
    write_points(&args.out, &out, args.format)?;
    println!("augmented {} points to {}", out.len(), args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    if let Some(format) = args.format {
        reject_format(format, &[Format::Json, Format::Csv], "eval.format")?;
    }
    let config = load_config(&args.config)?;
    let pairs: PairsFile = serde_json::from_slice(&std::fs::read(&args.pairs)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", args.pairs.display())))?;
    let report = evaluate_pairs(&pairs, config.eval.iou_resolution, &config.eval.sweeps)?;
    std::fs::create_dir_all(&args.out)?;
    if args.format.is_none() || args.format == Some(Format::Json) {
        write_json(&args.out.join("report.json"), &report)?;
    }
    if args.format.is_none() || args.format == Some(Format::Csv) {
        std::fs::write(args.out.join("metrics.csv"), report.to_csv())?;
    }
    println!("evaluated {} pairs into {}", pairs.pairs.len(), args.out.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Error> {
    reject_format(args.format, &[Format::Csv], "report.format")?;
    let bytes = std::fs::read(&args.report)?;
    // Accept a bare metric report or a full pipeline report.
    let metrics = serde_json::from_slice::<rbp_core::metrics::MetricReport>(&bytes)
        .or_else(|_| {
            serde_json::from_slice::<PipelineReport>(&bytes).map(|r| r.metrics)
        })
        .map_err(|e| Error::Parse(format!("{}: {e}", args.report.display())))?;
    std::fs::create_dir_all(&args.out)?;
    for (name, curve) in &metrics.sweeps {
        std::fs::write(args.out.join(format!("sweep_{name}.csv")), curve.to_csv())?;
    }
    println!("wrote {} sweep curves to {}", metrics.sweeps.len(), args.out.display());
    Ok(())
}
