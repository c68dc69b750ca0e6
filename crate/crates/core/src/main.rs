use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trusted::io::{
    file_sha256, load_detector, read_bundle, read_scores, store_detector, write_bundle, write_report, write_scores,
    ScoreLine,
};
use trusted::metrics::mean_std;
use trusted::model::ClassSelection;
use trusted::synth::{generate, LayerNoise, SynthSpec};
use trusted::{evaluate, evaluate_detector, AggregationKind, Detector, DetectorConfig, EvalInput, EvalReport, ScoreKind};

#[derive(Debug, Parser)]
#[command(name = "trusted", version, about = "OOD detection with layer-averaged embeddings and IRW depth")]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, env = "TRUSTED_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a detector on a training bundle.
    Fit(FitArgs),
    /// Score a bundle with a fitted detector.
    Score(ScoreArgs),
    /// Compare in-distribution and OOD score files.
    Eval(EvalArgs),
    /// Write train / test_in / test_out bundles from a synthetic spec.
    Synth(SynthArgs),
    /// Synthesize, fit, score and evaluate every detector; print a table.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value_t = ScoreKind::Irw)]
    score: ScoreKind,
    /// Layer aggregation [default: pm]. Ignored by msp and energy.
    #[arg(long)]
    agg: Option<AggregationKind>,
    #[arg(long, default_value_t = 1000)]
    n_proj: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    shrinkage: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = ClassSelection::Predicted)]
    class_selection: ClassSelection,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    detector: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    in_scores: PathBuf,
    #[arg(long)]
    out_scores: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    tpr: f64,
}

#[derive(Debug, Clone, Args)]
struct SpecArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long, default_value_t = 6.0)]
    shift: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Number of final layers with Student-t noise instead of Gaussian.
    #[arg(long, default_value_t = 0)]
    heavy_layers: usize,
    /// Degrees of freedom of the Student-t layers.
    #[arg(long, default_value_t = 2.0)]
    dof: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl SpecArgs {
    fn spec(&self, seed: u64) -> Result<SynthSpec> {
        if self.heavy_layers > self.layers {
            bail!("--heavy-layers {} exceeds --layers {}", self.heavy_layers, self.layers);
        }
        let mut spec = SynthSpec::gaussian(
            self.classes,
            self.per_class,
            self.layers,
            self.dim,
            self.separation,
            self.shift,
            self.sigma,
            seed,
        );
        for noise in &mut spec.noise[self.layers - self.heavy_layers..] {
            *noise = LayerNoise::StudentT {
                scale: self.sigma,
                dof: self.dof,
            };
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Seeds `seed, seed+1, ...`; the table reports mean ± std.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 1000)]
    n_proj: usize,
    #[arg(long, default_value_t = 0.95)]
    tpr: f64,
    /// Smaller problem: 50 samples per class and 200 projections.
    #[arg(long)]
    quick: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the thread pool")?;
    match cli.command {
        Command::Fit(args) => fit(args),
        Command::Score(args) => score(args),
        Command::Eval(args) => eval(args),
        Command::Synth(args) => synth(args),
        Command::Run(args) => run(args),
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn ensure_distinct(out: &Path, inputs: &[&Path]) -> Result<()> {
    if let Some(input) = inputs.iter().find(|input| same_file(out, input)) {
        bail!("output {} would overwrite input {}", out.display(), input.display());
    }
    Ok(())
}

fn check_tpr(tpr: f64) -> Result<()> {
    if !(tpr > 0.0 && tpr <= 1.0) {
        bail!("--tpr must lie in (0, 1], got {tpr}");
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let config = DetectorConfig {
        score_kind: args.score,
        aggregation: args.agg.unwrap_or(AggregationKind::PowerMean),
        n_proj: args.n_proj,
        temperature: args.temperature,
        seed: args.seed,
        shrinkage: args.shrinkage,
        class_selection: args.class_selection,
    };
    config.validate()?;
    ensure_distinct(&args.out, &[&args.train])?;
    if let (Some(agg), false) = (args.agg, args.score.uses_banks()) {
        eprintln!("warning: --agg {agg} is ignored by --score {}, which reads logits", args.score);
    }

    let train = read_bundle(&args.train).with_context(|| format!("reading {}", args.train.display()))?;
    let det = Detector::fit(&train, &config).with_context(|| format!("fitting on {}", args.train.display()))?;
    store_detector(&det, &args.out).with_context(|| format!("writing {}", args.out.display()))?;

    println!(
        "fitted {} on {} samples ({} classes, dim {})",
        config.score_kind,
        train.n(),
        det.classes(),
        det.dim()
    );
    for (class, count) in det.class_counts().iter().enumerate() {
        println!("class {class}\t{count}");
    }
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    ensure_distinct(&args.out, &[&args.detector, &args.input])?;
    let det = load_detector(&args.detector).with_context(|| format!("reading {}", args.detector.display()))?;
    let input = read_bundle(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mismatch = || {
        format!(
            "detector {} does not fit input {}",
            args.detector.display(),
            args.input.display()
        )
    };
    let (_, labels) = det.prepare(&input).with_context(mismatch)?;
    let scores = det.score_batch(&input).with_context(mismatch)?;
    let lines: Vec<ScoreLine> = labels
        .labels()
        .iter()
        .zip(scores.as_slice())
        .map(|(&predicted, &score)| ScoreLine { predicted, score })
        .collect();
    write_scores(&lines, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("scored {} samples", lines.len());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    check_tpr(args.tpr)?;
    ensure_distinct(&args.report, &[&args.in_scores, &args.out_scores])?;
    let ins = read_scores(&args.in_scores)?;
    let outs = read_scores(&args.out_scores)?;
    let report = evaluate(&EvalInput::new(ins, outs)?, args.tpr)?;
    let in_sha = file_sha256(&args.in_scores)?;
    let out_sha = file_sha256(&args.out_scores)?;
    write_report(&report, &in_sha, &out_sha, &args.report).with_context(|| format!("writing {}", args.report.display()))?;

    let pct = |v: f64| format!("{:.2}", 100.0 * v);
    let fpr_label = format!("FPR@{:.0}", 100.0 * report.tpr_target);
    println!("{:<10}{}", "AUROC", pct(report.auroc));
    println!("{:<10}{}", "AUPR-IN", pct(report.aupr_in));
    println!("{:<10}{}", "AUPR-OUT", pct(report.aupr_out));
    println!("{:<10}{}", fpr_label, pct(report.fpr_at_tpr));
    println!("{:<10}{}", "Err", pct(report.err));
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = args.spec.spec(args.spec.seed)?;
    let splits = generate(&spec)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    for (name, bundle) in [
        ("train.emb1", &splits.train),
        ("test_in.emb1", &splits.test_in),
        ("test_out.emb1", &splits.test_out),
    ] {
        let path = args.out_dir.join(name);
        write_bundle(bundle, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("{}\t{} samples", path.display(), bundle.n());
    }
    Ok(())
}

/// Rows of the comparison table, the depth detector first.
fn methods() -> Vec<(ScoreKind, AggregationKind)> {
    let mut rows = Vec::new();
    for kind in [ScoreKind::Irw, ScoreKind::Mahalanobis] {
        for agg in AggregationKind::ALL {
            rows.push((kind, *agg));
        }
    }
    rows.push((ScoreKind::Msp, AggregationKind::Logits));
    rows.push((ScoreKind::Energy, AggregationKind::Logits));
    rows
}

fn run(mut args: RunArgs) -> Result<()> {
    check_tpr(args.tpr)?;
    if args.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    if args.quick {
        args.spec.per_class = args.spec.per_class.min(50);
        args.n_proj = args.n_proj.min(200);
    }
    let specs = (0..args.repeats as u64)
        .map(|r| args.spec.spec(args.spec.seed.wrapping_add(r)))
        .collect::<Result<Vec<_>>>()?;
    let rows = methods();
    for &(score_kind, aggregation) in &rows {
        DetectorConfig {
            score_kind,
            aggregation,
            n_proj: args.n_proj,
            ..DetectorConfig::default()
        }
        .validate()?;
    }

    let mut results: Vec<Vec<EvalReport>> = vec![Vec::new(); rows.len()];
    for spec in &specs {
        let splits = generate(spec)?;
        for (row, &(score_kind, aggregation)) in results.iter_mut().zip(&rows) {
            let config = DetectorConfig {
                score_kind,
                aggregation,
                n_proj: args.n_proj,
                ..DetectorConfig::default()
            };
            let report = evaluate_detector(&splits.train, &splits.test_in, &splits.test_out, &config, args.tpr)
                .with_context(|| format!("{score_kind}+{aggregation} on seed {}", spec.seed))?;
            row.push(report);
        }
    }

    let s = &args.spec;
    println!(
        "C={} n={} L={} d={} rho={} delta={} sigma={} heavy={} dof={} n_proj={} seeds={}..{}",
        s.classes,
        s.per_class,
        s.layers,
        s.dim,
        s.separation,
        s.shift,
        s.sigma,
        s.heavy_layers,
        s.dof,
        args.n_proj,
        s.seed,
        s.seed + args.repeats as u64 - 1
    );
    let fpr_label = format!("FPR@{:.0}", 100.0 * args.tpr);
    println!(
        "{:<20}{:>16}{:>16}{:>16}{:>16}{:>16}",
        "method", "AUROC", "AUPR-IN", "AUPR-OUT", fpr_label, "Err"
    );
    for ((score_kind, aggregation), reports) in rows.iter().zip(&results) {
        let name = if score_kind.uses_banks() {
            format!("{score_kind}+{aggregation}")
        } else {
            score_kind.to_string()
        };
        let cell = |f: fn(&EvalReport) -> f64| {
            let values: Vec<f64> = reports.iter().map(f).collect();
            let (mean, std) = mean_std(&values);
            if reports.len() > 1 {
                format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
            } else {
                format!("{:.2}", 100.0 * mean)
            }
        };
        println!(
            "{:<20}{:>16}{:>16}{:>16}{:>16}{:>16}",
            name,
            cell(|r| r.auroc),
            cell(|r| r.aupr_in),
            cell(|r| r.aupr_out),
            cell(|r| r.fpr_at_tpr),
            cell(|r| r.err)
        );
    }
    Ok(())
}
