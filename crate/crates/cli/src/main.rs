use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stancegen_core::annotation::{
    coarse_annotate, compute_agreement_report, flagged_entries, AnnotationQueue, AnnotationRecord,
    Dimension,
};
use stancegen_core::corpus::{
    build_corpus, corpus_stats, read_comments, read_corpus_dir, read_posts, write_corpus_dir,
    LexiconDetector,
};
use stancegen_core::eval::{build_report, evaluate, BackendConfig, Backends, EvalItem, ItemScores};
use stancegen_core::generation::{generate_batch, split_dataset, FinetuneConfig, GenerationRequest};
use stancegen_core::jsonl;
use stancegen_core::run::{
    run_end_to_end, AnnotationStage, FilterConfig, GeneratorSpec, RunConfig, ResponseRecord,
};
use stancegen_core::sdmg::model::fuse_features;
use stancegen_core::sdmg::{grad_check, FusionMode, GradCheckConfig, GradTarget, SdmgParams, TensorFile};
use stancegen_core::chat::RetryPolicy;
use stancegen_service::AppState;

#[derive(Parser)]
#[command(name = "stancegen", version, about = "Stance-conditioned multimodal comment generation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage from one config file and write a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the annotation queue over HTTP.
    Serve(ServeArgs),
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    #[command(subcommand)]
    Annotate(AnnotateCmd),
    #[command(subcommand)]
    Sdmg(SdmgCmd),
    #[command(subcommand)]
    Gen(GenCmd),
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    /// Run config supplying the port, queue log and media root.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Queue event log; created if missing.
    #[arg(long)]
    queue: Option<PathBuf>,
    #[arg(long)]
    media_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Filter raw posts and comments into a sample corpus.
    Build {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        comments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        min_words: usize,
        #[arg(long, default_value_t = 128)]
        max_words: usize,
        #[arg(long, default_value_t = 0.9)]
        lang_threshold: f64,
    },
    /// Per-author statistics of a labeled corpus directory.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnnotateCmd {
    /// Machine-label every sample and enqueue the disagreements.
    Coarse {
        #[arg(long)]
        corpus: PathBuf,
        /// TOML with `policy`, `labelers` and `retry`; defaults to the two lexical stubs.
        #[arg(long)]
        labelers: Option<PathBuf>,
        /// Defaults to `<corpus>/annotation`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement over human annotation records (JSONL) or a queue event log.
    Kappa {
        #[arg(long)]
        records: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Concat,
    Add,
}

impl From<ModeArg> for FusionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Concat => FusionMode::Concat,
            ModeArg::Add => FusionMode::Add,
        }
    }
}

#[derive(Subcommand)]
enum SdmgCmd {
    /// Attend over visual tokens with a text feature and fuse the result.
    Fuse {
        #[arg(long)]
        params: PathBuf,
        /// Tensor file with one tensor: a token (d_v) or tokens (M x d_v).
        #[arg(long)]
        visual: PathBuf,
        /// Tensor file with one d_t tensor.
        #[arg(long)]
        text: PathBuf,
        #[arg(long, value_enum, default_value = "concat")]
        mode: ModeArg,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// One of project_qkv, tsa_pooled, fuse_concat, fuse_add, prompt; all if omitted.
        #[arg(long)]
        target: Option<GradTarget>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Fail when any relative error exceeds this.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Subcommand)]
enum GenCmd {
    /// Post-disjoint train/test split of a labeled sample file or corpus directory.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long)]
        seed: u64,
        /// Defaults to `<corpus>/split`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a fine-tuning config with the given overrides.
    EmitConfig {
        #[arg(long)]
        lr: Option<String>,
        /// Extra `field=value` overrides.
        #[arg(long = "set", value_name = "FIELD=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send generation requests to a backend.
    Run {
        /// `echo`, `toy_prefix`, or a TOML file describing the backend.
        #[arg(long)]
        backend: String,
        #[arg(long)]
        requests: PathBuf,
        /// Responses JSONL; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        in_flight: usize,
        #[arg(long, default_value_t = 3)]
        attempts: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupBy {
    None,
    Target,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Score eval items with the configured backends.
    Run {
        #[arg(long)]
        items: PathBuf,
        /// Backend registry TOML; offline stubs if omitted.
        #[arg(long)]
        backends: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clamp_cosines: bool,
    },
    /// Render a table from per-item scores.
    Report {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_enum, default_value = "none")]
        group_by: GroupBy,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        clamp_cosines: bool,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn run(config: &Path) -> Result<()> {
    let (config, base) = RunConfig::read(config)?;
    let manifest = run_end_to_end(&config, &base)?;
    for stage in &manifest.stages {
        let counts: Vec<String> = stage.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:<18} {}", stage.stage.to_string(), counts.join(" "));
    }
    println!("manifest: {}", base.join(&config.paths.output).join("manifest.json").display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut port = 8080;
    let mut queue = None;
    let mut media = None;
    if let Some(path) = &args.config {
        let (config, base) = RunConfig::read(path)?;
        port = config.service.port;
        queue = Some(match &config.service.queue_log {
            Some(q) => base.join(q),
            None => base.join(&config.paths.output).join("annotation/queue.jsonl"),
        });
        media = config.service.media_root.as_ref().map(|m| base.join(m));
    }
    let port = args.port.unwrap_or(port);
    let queue = match args.queue.or(queue) {
        Some(q) => AnnotationQueue::open(&q).with_context(|| format!("opening {}", q.display()))?,
        None => {
            log::warn!("no queue log given; serving an in-memory queue");
            AnnotationQueue::new()
        }
    };
    let mut state = AppState::new(queue);
    if let Some(m) = args.media_root.or(media) {
        state = state.with_media_root(m);
    }
    tokio::runtime::Runtime::new()?.block_on(stancegen_service::serve(state, port))?;
    Ok(())
}

fn pipeline(cmd: PipelineCmd) -> Result<()> {
    match cmd {
        PipelineCmd::Build {
            posts,
            comments,
            out,
            min_words,
            max_words,
            lang_threshold,
        } => {
            let filters = FilterConfig {
                min_words,
                max_words,
                lang_threshold,
                ..FilterConfig::default()
            };
            let corpus = build_corpus(
                &read_posts(&posts)?,
                &read_comments(&comments)?,
                &filters.build_config(),
                Some(&LexiconDetector::default()),
            )?;
            write_corpus_dir(&corpus, &out)?;
            println!(
                "samples={} posts={} comments={} rejects={}",
                corpus.samples.len(),
                corpus.posts.len(),
                corpus.comments.len(),
                corpus.rejects.len()
            );
        }
        PipelineCmd::Stats { corpus } => print_json(&corpus_stats(&read_corpus_dir(&corpus)?)?)?,
    }
    Ok(())
}

fn annotate(cmd: AnnotateCmd) -> Result<()> {
    match cmd {
        AnnotateCmd::Coarse { corpus, labelers, out } => {
            let stage: AnnotationStage = match labelers {
                Some(p) => toml::from_str(&std::fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => AnnotationStage::default(),
            };
            let samples = read_corpus_dir(&corpus)?.samples;
            let run = coarse_annotate(&samples, &stage.build_labelers()?, stage.policy)?;
            let out = out.unwrap_or_else(|| corpus.join("annotation"));
            std::fs::create_dir_all(&out)?;
            jsonl::write(&out.join("coarse_labels.jsonl"), &run.outcomes)?;
            jsonl::write(&out.join("consensus.jsonl"), &run.consensus)?;
            let queue_path = out.join("queue.jsonl");
            let mut queue = AnnotationQueue::open(&queue_path)?;
            let mut added = 0;
            for e in flagged_entries(&samples, &run) {
                if queue.get(&e.sample_id).is_none() {
                    queue.enqueue(e)?;
                    added += 1;
                }
            }
            println!(
                "samples={} flagged={} unlabeled={} enqueued={added}",
                samples.len(),
                run.flagged().count(),
                run.unlabeled.len()
            );
        }
        AnnotateCmd::Kappa { records } => {
            let records: Vec<AnnotationRecord> = match jsonl::read(&records) {
                Ok(r) => r,
                Err(_) => AnnotationQueue::open(&records)?.records(),
            };
            print_json(&compute_agreement_report(&records, &[Dimension::Stance, Dimension::Topic])?)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FuseOutput {
    mode: FusionMode,
    fused: Vec<f64>,
    attention_weights: Vec<f64>,
}

fn sdmg(cmd: SdmgCmd) -> Result<()> {
    match cmd {
        SdmgCmd::Fuse { params, visual, text, mode } => {
            let params = SdmgParams::load(&params)?;
            let visual = TensorFile::read(&visual)?.sole()?;
            let tokens = match visual.ndim() {
                1 => visual.insert_axis(ndarray::Axis(0)),
                2 => visual,
                n => bail!("visual tensor must be 1- or 2-dimensional, got {n}"),
            }
            .into_dimensionality::<ndarray::Ix2>()?;
            let text = TensorFile::read(&text)?.sole()?;
            if text.ndim() != 1 {
                bail!("text tensor must be 1-dimensional");
            }
            let text = text.into_dimensionality::<ndarray::Ix1>()?;
            let (fused, attn) = fuse_features(tokens.view(), text.view(), &params.projection, mode.into())?;
            print_json(&FuseOutput {
                mode: fused.mode,
                fused: fused.values.to_vec(),
                attention_weights: attn.weights.to_vec(),
            })?;
        }
        SdmgCmd::Gradcheck {
            eps,
            target,
            seed,
            seeds,
            tolerance,
        } => {
            let targets = match target {
                Some(t) => vec![t],
                None => GradTarget::ALL.to_vec(),
            };
            let mut worst: f64 = 0.0;
            for t in targets {
                for s in seed..seed + seeds.max(1) {
                    let r = grad_check(t, GradCheckConfig::default(), s, eps)?;
                    println!(
                        "{:<12} seed={s:<4} checked={:<5} max_rel={:.3e} max_abs={:.3e} worst={}{}",
                        serde_json::to_value(t)?.as_str().unwrap_or_default(),
                        r.checked,
                        r.max_rel_error,
                        r.max_abs_error,
                        r.worst,
                        if r.saturated { " (saturated)" } else { "" }
                    );
                    worst = worst.max(r.max_rel_error);
                }
            }
            if worst > tolerance {
                bail!("max relative error {worst:.3e} exceeds {tolerance:.1e}");
            }
        }
    }
    Ok(())
}

fn generation(cmd: GenCmd) -> Result<()> {
    match cmd {
        GenCmd::Split { corpus, ratio, seed, out } => {
            let samples = if corpus.is_dir() {
                read_corpus_dir(&corpus)?.samples
            } else {
                jsonl::read(&corpus)?
            };
            let split = split_dataset(&samples, ratio, seed)?;
            for w in &split.warnings {
                log::warn!("{w}");
            }
            let out = out.unwrap_or_else(|| {
                if corpus.is_dir() {
                    corpus.join("split")
                } else {
                    corpus.with_extension("split")
                }
            });
            std::fs::create_dir_all(&out)?;
            jsonl::write(&out.join("train.jsonl"), &split.train)?;
            jsonl::write(&out.join("test.jsonl"), &split.test)?;
            println!(
                "train={} test={} train_posts={} test_posts={}",
                split.train.len(),
                split.test.len(),
                split.train_posts.len(),
                split.test_posts.len()
            );
        }
        GenCmd::EmitConfig { lr, set, out } => {
            let mut overrides = Vec::new();
            if let Some(lr) = &lr {
                overrides.push(("learning_rate", lr.as_str()));
            }
            for kv in &set {
                let Some((k, v)) = kv.split_once('=') else {
                    bail!("override `{kv}` is not FIELD=VALUE");
                };
                overrides.push((k.trim(), v));
            }
            let config = FinetuneConfig::with_overrides(overrides)?;
            match out {
                Some(p) => config.write(&p)?,
                None => print!("{}", config.to_toml()),
            }
        }
        GenCmd::Run {
            backend,
            requests,
            out,
            seed,
            in_flight,
            attempts,
        } => {
            let spec: GeneratorSpec = match backend.as_str() {
                "echo" => GeneratorSpec::Echo,
                "toy_prefix" => GeneratorSpec::ToyPrefix { mode: FusionMode::Concat },
                path => toml::from_str(
                    &std::fs::read_to_string(path).with_context(|| format!("unknown backend `{path}`"))?,
                )?,
            };
            let generator = spec.build(seed)?;
            let requests: Vec<GenerationRequest> = jsonl::read(&requests)?;
            let retry = RetryPolicy {
                attempts,
                ..RetryPolicy::default()
            };
            let results = generate_batch(&requests, generator.as_ref(), &retry, in_flight.max(1));
            let mut responses = Vec::new();
            let mut failed = 0;
            for (req, res) in requests.iter().zip(results) {
                match res {
                    Ok(r) => responses.push(ResponseRecord {
                        request_id: r.request_id,
                        sample_id: r.sample_id,
                        stance: r.stance,
                        backend: r.backend,
                        text: r.text,
                    }),
                    Err(e) => {
                        failed += 1;
                        log::error!("{}: {e}", req.request_id);
                    }
                }
            }
            match out {
                Some(p) => jsonl::write(&p, &responses)?,
                None => print!("{}", jsonl::to_string(&responses)),
            }
            if failed > 0 {
                bail!("{failed} of {} requests failed", requests.len());
            }
        }
    }
    Ok(())
}

fn eval(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Run {
            items,
            backends,
            out,
            clamp_cosines,
        } => {
            let (config, base) = match &backends {
                Some(p) => (
                    BackendConfig::from_toml(&std::fs::read_to_string(p)?)?,
                    p.parent().map(Path::to_path_buf).unwrap_or_default(),
                ),
                None => (BackendConfig::default(), PathBuf::from(".")),
            };
            let items: Vec<EvalItem> = jsonl::read(&items)?;
            let run = evaluate(&items, &Backends::from_config(&config, &base)?)?;
            std::fs::create_dir_all(&out)?;
            jsonl::write(&out.join("scores.jsonl"), &run.items)?;
            write_json(&out.join("summary.json"), &run.summary)?;
            let tagged = run.items.iter().all(|s| s.model.is_some() && s.modality.is_some());
            if tagged {
                let by_target = run.items.iter().all(|s| s.target.is_some());
                let report = build_report(&run.items, by_target, clamp_cosines)?;
                write_json(&out.join("report.json"), &report)?;
                std::fs::write(out.join("report.txt"), report.render_text())?;
                std::fs::write(out.join("report.csv"), report.render_csv())?;
            } else {
                log::warn!("items lack model or modality tags; no report table written");
            }
            print_json(&run.summary)?;
        }
        EvalCmd::Report {
            scores,
            group_by,
            format,
            clamp_cosines,
        } => {
            let scores: Vec<ItemScores> = jsonl::read(&scores)?;
            let report = build_report(&scores, matches!(group_by, GroupBy::Target), clamp_cosines)?;
            match format {
                Format::Text => print!("{}", report.render_text()),
                Format::Csv => print!("{}", report.render_csv()),
                Format::Json => print_json(&report)?,
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => run(&config),
        Command::Serve(args) => serve(args),
        Command::Pipeline(c) => pipeline(c),
        Command::Annotate(c) => annotate(c),
        Command::Sdmg(c) => sdmg(c),
        Command::Gen(c) => generation(c),
        Command::Eval(c) => eval(c),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
