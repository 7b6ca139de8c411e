//! One-config end-to-end run: corpus build, coarse annotation, split,
//! generation and evaluation, with a manifest of artifact hashes for replay.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    coarse_annotate, flagged_entries, AnnotationQueue, ConsensusPolicy, ConsensusStatus,
    LexicalStanceChat, MachineLabeler,
};
use crate::chat::{ChatClient, OpenAiCompatibleClient, OpenAiCompatibleConfig, RetryPolicy};
use crate::corpus::{
    build_corpus, corpus_stats, read_comments, read_posts, write_corpus_dir, BuildConfig, Corpus,
    LengthBounds, LexiconDetector, Sample,
};
use crate::digest::sha256_hex;
use crate::eval::{build_report, evaluate, BackendConfig, Backends, EvalItem, Modality};
use crate::generation::{
    generate_batch, instruction_dataset, split_dataset, ChatGenerator, EchoStub, FinetuneConfig,
    GenerationRequest, Generator, InstructionTemplates, ToyPrefixGenerator,
};
use crate::jsonl;
use crate::sdmg::{FusionMode, SdmgDims, SdmgModel};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    BuildCorpus,
    CoarseAnnotation,
    Split,
    Generate,
    Evaluate,
    Manifest,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Validate => "validate",
            Stage::BuildCorpus => "build_corpus",
            Stage::CoarseAnnotation => "coarse_annotation",
            Stage::Split => "split",
            Stage::Generate => "generate",
            Stage::Evaluate => "evaluate",
            Stage::Manifest => "manifest",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: Stage, message: String },
}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> RunError {
    move |e| RunError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPaths {
    pub posts: PathBuf,
    pub comments: PathBuf,
    pub output: PathBuf,
    /// Extra instruction templates (`*.txt`, id = file stem).
    #[serde(default)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_min_words")]
    pub min_words: usize,
    #[serde(default = "default_max_words")]
    pub max_words: usize,
    #[serde(default = "default_true")]
    pub filter_comments: bool,
    #[serde(default = "default_lang_threshold")]
    pub lang_threshold: f64,
    #[serde(default)]
    pub window_start: Option<DateTime<Utc>>,
    #[serde(default)]
    pub window_end: Option<DateTime<Utc>>,
}

fn default_min_words() -> usize {
    10
}
fn default_max_words() -> usize {
    128
}
fn default_true() -> bool {
    true
}
fn default_lang_threshold() -> f64 {
    0.9
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_words: default_min_words(),
            max_words: default_max_words(),
            filter_comments: true,
            lang_threshold: default_lang_threshold(),
            window_start: None,
            window_end: None,
        }
    }
}

impl FilterConfig {
    pub fn build_config(&self) -> BuildConfig {
        let bounds = LengthBounds {
            min_words: self.min_words,
            max_words: self.max_words,
        };
        BuildConfig {
            window: self.window_start.zip(self.window_end),
            post_bounds: Some(bounds),
            comment_bounds: self.filter_comments.then_some(bounds),
            lang_threshold: self.lang_threshold,
        }
    }
}

/// Every seed the run uses. All are required in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub sdmg: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelerSpec {
    LexicalStrict,
    LexicalLenient,
    OpenaiCompatible {
        id: String,
        #[serde(flatten)]
        config: OpenAiCompatibleConfig,
    },
}

impl LabelerSpec {
    pub fn build(&self, retry: RetryPolicy) -> Result<MachineLabeler, RunError> {
        let (id, client): (String, Arc<dyn ChatClient>) = match self {
            LabelerSpec::LexicalStrict => ("lexical-strict".into(), Arc::new(LexicalStanceChat::strict())),
            LabelerSpec::LexicalLenient => ("lexical-lenient".into(), Arc::new(LexicalStanceChat::lenient())),
            LabelerSpec::OpenaiCompatible { id, config } => (
                id.clone(),
                Arc::new(OpenAiCompatibleClient::new(config.clone()).map_err(|e| RunError::Config(e.to_string()))?),
            ),
        };
        Ok(MachineLabeler::new(id, client).with_retry(retry))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationStage {
    #[serde(default)]
    pub policy: ConsensusPolicy,
    #[serde(default = "default_labelers")]
    pub labelers: Vec<LabelerSpec>,
    #[serde(default = "default_retry")]
    pub retry: RetryPolicy,
}

fn default_labelers() -> Vec<LabelerSpec> {
    vec![LabelerSpec::LexicalStrict, LabelerSpec::LexicalLenient]
}

fn default_retry() -> RetryPolicy {
    RetryPolicy::immediate(1)
}

impl Default for AnnotationStage {
    fn default() -> Self {
        Self {
            policy: ConsensusPolicy::default(),
            labelers: default_labelers(),
            retry: default_retry(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Echo,
    ToyPrefix {
        #[serde(default)]
        mode: FusionMode,
    },
    OpenaiCompatible {
        id: String,
        #[serde(flatten)]
        config: OpenAiCompatibleConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationStage {
    #[serde(default = "default_backend")]
    pub backend: GeneratorSpec,
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default = "default_in_flight")]
    pub in_flight: usize,
    #[serde(default = "default_retry")]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub finetune: FinetuneConfig,
}

fn default_backend() -> GeneratorSpec {
    GeneratorSpec::Echo
}
fn default_template() -> String {
    crate::generation::instruction::DEFAULT_TEMPLATE.to_string()
}
fn default_in_flight() -> usize {
    4
}

impl Default for GenerationStage {
    fn default() -> Self {
        Self {
            backend: default_backend(),
            template: default_template(),
            in_flight: default_in_flight(),
            retry: default_retry(),
            finetune: FinetuneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalStage {
    #[serde(default)]
    pub backends: BackendConfig,
    #[serde(default)]
    pub clamp_cosines: bool,
}

impl Default for EvalStage {
    fn default() -> Self {
        Self {
            backends: BackendConfig::default(),
            clamp_cosines: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    /// Queue event log served by `stancegen serve`.
    #[serde(default)]
    pub queue_log: Option<PathBuf>,
    /// Directory served under `/media`.
    #[serde(default)]
    pub media_root: Option<PathBuf>,
}

fn default_port() -> u16 {
    8080
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: default_port(),
            queue_log: None,
            media_root: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: RunPaths,
    pub seeds: Seeds,
    #[serde(default)]
    pub filters: FilterConfig,
    #[serde(default)]
    pub annotation: AnnotationStage,
    #[serde(default)]
    pub generation: GenerationStage,
    #[serde(default)]
    pub eval: EvalStage,
    #[serde(default)]
    pub service: ServiceConfig,
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self, RunError> {
        toml::from_str(s).map_err(|e| RunError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn read(path: &Path) -> Result<(Self, PathBuf), RunError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((Self::from_toml(&s)?, base))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Hash of the config with the output location blanked, so the same run
    /// written to two places hashes equal.
    pub fn content_sha256(&self) -> String {
        let mut c = self.clone();
        c.paths.output = PathBuf::new();
        sha256_hex(c.to_toml().as_bytes())
    }

    /// Checks every referenced input and parameter without touching outputs.
    pub fn validate(&self, base: &Path) -> Result<(), RunError> {
        for (what, p) in [("posts", &self.paths.posts), ("comments", &self.paths.comments)] {
            let full = base.join(p);
            if !full.is_file() {
                return Err(RunError::Config(format!(
                    "{what} file `{}` does not exist",
                    p.display()
                )));
            }
        }
        if let Some(t) = &self.paths.templates {
            if !base.join(t).is_dir() {
                return Err(RunError::Config(format!(
                    "templates directory `{}` does not exist",
                    t.display()
                )));
            }
        }
        if self.filters.min_words > self.filters.max_words {
            return Err(RunError::Config("min_words exceeds max_words".into()));
        }
        if !(0.0..=1.0).contains(&self.filters.lang_threshold) {
            return Err(RunError::Config("lang_threshold must lie in [0, 1]".into()));
        }
        if self.filters.window_start.is_some() != self.filters.window_end.is_some() {
            return Err(RunError::Config("window_start and window_end go together".into()));
        }
        if self.annotation.labelers.len() < 2 {
            return Err(RunError::Config("at least two machine labelers are required".into()));
        }
        if self.generation.in_flight == 0 {
            return Err(RunError::Config("in_flight must be positive".into()));
        }
        self.generation
            .finetune
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub artifacts: Vec<Artifact>,
    pub counts: BTreeMap<String, usize>,
}

/// Everything needed to replay a run: config hash, seeds and the hash of every
/// artifact. Contains no timestamps or absolute paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub tool_version: String,
    pub config_sha256: String,
    pub input_sha256: BTreeMap<String, String>,
    pub seeds: Seeds,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    /// `(path, sha256)` for every artifact, in stage order.
    pub fn artifact_hashes(&self) -> Vec<(String, String)> {
        self.stages
            .iter()
            .flat_map(|s| s.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())))
            .collect()
    }
}

struct Writer<'a> {
    root: &'a Path,
    stage: Stage,
    artifacts: Vec<Artifact>,
}

impl<'a> Writer<'a> {
    fn new(root: &'a Path, stage: Stage) -> Self {
        Self {
            root,
            stage,
            artifacts: Vec::new(),
        }
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
        let full = self.root.join(rel);
        if let Some(dir) = full.parent() {
            std::fs::create_dir_all(dir).map_err(at(self.stage))?;
        }
        std::fs::write(&full, bytes).map_err(at(self.stage))?;
        self.record(rel, bytes);
        Ok(())
    }

    fn record(&mut self, rel: &str, bytes: &[u8]) {
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    fn record_file(&mut self, rel: &str) -> Result<(), RunError> {
        let bytes = std::fs::read(self.root.join(rel)).map_err(at(self.stage))?;
        self.record(rel, &bytes);
        Ok(())
    }

    fn jsonl<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<(), RunError> {
        let s = jsonl::to_string(rows);
        self.write(rel, s.as_bytes())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), RunError> {
        let s = serde_json::to_string_pretty(value).map_err(at(self.stage))? + "\n";
        self.write(rel, s.as_bytes())
    }

    fn finish(self, counts: &[(&str, usize)]) -> StageRecord {
        StageRecord {
            stage: self.stage,
            artifacts: self.artifacts,
            counts: counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

/// Generation response as persisted; latency is left out so reruns hash equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub request_id: String,
    pub sample_id: String,
    pub stance: crate::labels::StanceLabel,
    pub backend: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub request_id: String,
    pub error: String,
}

impl GeneratorSpec {
    /// The toy backend derives its model and decoder table from `sdmg_seed`.
    pub fn build(&self, sdmg_seed: u64) -> Result<Box<dyn Generator>, RunError> {
        Ok(match self {
            GeneratorSpec::Echo => Box::new(EchoStub),
            GeneratorSpec::ToyPrefix { mode } => Box::new(ToyPrefixGenerator::new(
                SdmgModel::toy(SdmgDims::default(), sdmg_seed, *mode),
                sdmg_seed,
            )),
            GeneratorSpec::OpenaiCompatible { id, config } => Box::new(ChatGenerator::new(
                id,
                Arc::new(OpenAiCompatibleClient::new(config.clone()).map_err(|e| RunError::Config(e.to_string()))?),
            )),
        })
    }
}

impl AnnotationStage {
    pub fn build_labelers(&self) -> Result<Vec<MachineLabeler>, RunError> {
        self.labelers.iter().map(|l| l.build(self.retry)).collect()
    }
}

/// Executes every stage and writes artifacts plus `manifest.json` under the
/// configured output directory.
pub fn run_end_to_end(config: &RunConfig, base: &Path) -> Result<RunManifest, RunError> {
    config.validate(base)?;
    let posts_path = base.join(&config.paths.posts);
    let comments_path = base.join(&config.paths.comments);
    let out = base.join(&config.paths.output);
    let mut templates = InstructionTemplates::default();
    if let Some(dir) = &config.paths.templates {
        templates
            .load_dir(&base.join(dir))
            .map_err(|e| RunError::Config(e.to_string()))?;
    }
    if !templates.ids().any(|t| t == config.generation.template) {
        return Err(RunError::Config(format!(
            "unknown instruction template `{}`",
            config.generation.template
        )));
    }
    let labelers = config.annotation.build_labelers()?;
    let generator = config.generation.backend.build(config.seeds.sdmg)?;
    let backends = Backends::from_config(&config.eval.backends, base)
        .map_err(|e| RunError::Config(e.to_string()))?;

    let mut input_sha256 = BTreeMap::new();
    for (k, p) in [("posts", &posts_path), ("comments", &comments_path)] {
        let bytes = std::fs::read(p).map_err(at(Stage::Validate))?;
        input_sha256.insert(k.to_string(), sha256_hex(&bytes));
    }
    let mut stages = Vec::new();

    // corpus
    let posts = read_posts(&posts_path).map_err(at(Stage::BuildCorpus))?;
    let comments = read_comments(&comments_path).map_err(at(Stage::BuildCorpus))?;
    let detector = LexiconDetector::default();
    let corpus = build_corpus(&posts, &comments, &config.filters.build_config(), Some(&detector))
        .map_err(at(Stage::BuildCorpus))?;
    let mut w = Writer::new(&out, Stage::BuildCorpus);
    write_corpus_dir(&corpus, &out.join("corpus")).map_err(at(Stage::BuildCorpus))?;
    for f in ["posts", "comments", "samples", "rejects"] {
        w.record_file(&format!("corpus/{f}.jsonl"))?;
    }
    if out.join("corpus/stats.json").exists() {
        w.record_file("corpus/stats.json")?;
    }
    stages.push(w.finish(&[
        ("posts", corpus.posts.len()),
        ("comments", corpus.comments.len()),
        ("samples", corpus.samples.len()),
        ("rejects", corpus.rejects.len()),
    ]));

    // coarse annotation
    let mut w = Writer::new(&out, Stage::CoarseAnnotation);
    let coarse = coarse_annotate(&corpus.samples, &labelers, config.annotation.policy)
        .map_err(at(Stage::CoarseAnnotation))?;
    let verdicts: BTreeMap<&str, _> = coarse
        .consensus
        .iter()
        .filter(|c| c.status == ConsensusStatus::Unanimous)
        .map(|c| (c.sample_id.as_str(), c))
        .collect();
    let labeled: Vec<Sample> = corpus
        .samples
        .iter()
        .filter_map(|s| {
            verdicts.get(s.sample_id.as_str()).map(|v| {
                let mut s = s.clone();
                s.stance = v.final_stance;
                s.topic = v.final_topic;
                s.comment.stance = v.final_stance;
                s
            })
        })
        .collect();
    let entries = flagged_entries(&corpus.samples, &coarse);
    let queue_path = out.join("annotation/queue.jsonl");
    std::fs::create_dir_all(out.join("annotation")).map_err(at(Stage::CoarseAnnotation))?;
    if queue_path.exists() {
        std::fs::remove_file(&queue_path).map_err(at(Stage::CoarseAnnotation))?;
    }
    {
        let mut queue = AnnotationQueue::open(&queue_path).map_err(at(Stage::CoarseAnnotation))?;
        for e in entries.iter().cloned() {
            queue.enqueue(e).map_err(at(Stage::CoarseAnnotation))?;
        }
    }
    w.jsonl("annotation/coarse_labels.jsonl", &coarse.outcomes)?;
    w.jsonl("annotation/consensus.jsonl", &coarse.consensus)?;
    w.record_file("annotation/queue.jsonl")?;
    w.jsonl("annotation/labeled_samples.jsonl", &labeled)?;
    let labeled_corpus = Corpus {
        samples: labeled.clone(),
        ..Corpus::default()
    };
    if !labeled.is_empty() {
        let stats = corpus_stats(&labeled_corpus).map_err(at(Stage::CoarseAnnotation))?;
        w.json("annotation/labeled_stats.json", &stats)?;
    }
    stages.push(w.finish(&[
        ("unanimous", labeled.len()),
        ("flagged", entries.len()),
        ("unlabeled", coarse.unlabeled.len()),
    ]));

    // split
    let mut w = Writer::new(&out, Stage::Split);
    let split = split_dataset(&labeled, config.generation.finetune.split_ratio, config.seeds.split)
        .map_err(at(Stage::Split))?;
    w.jsonl("split/train.jsonl", &split.train)?;
    w.jsonl("split/test.jsonl", &split.test)?;
    let train_records = instruction_dataset(&split.train, &templates, &config.generation.template)
        .map_err(at(Stage::Split))?;
    w.jsonl("split/instructions_train.jsonl", &train_records)?;
    let mut finetune = config.generation.finetune.clone();
    finetune.seed = config.seeds.split;
    w.write("split/finetune.toml", finetune.to_toml().as_bytes())?;
    stages.push(w.finish(&[
        ("train", split.train.len()),
        ("test", split.test.len()),
        ("train_posts", split.train_posts.len()),
        ("test_posts", split.test_posts.len()),
    ]));

    // generation over the held-out side
    let mut w = Writer::new(&out, Stage::Generate);
    let test_records = instruction_dataset(&split.test, &templates, &config.generation.template)
        .map_err(at(Stage::Generate))?;
    let requests: Vec<GenerationRequest> = split
        .test
        .iter()
        .zip(&test_records)
        .map(|(s, r)| GenerationRequest {
            request_id: format!("req-{}", s.sample_id),
            sample_id: s.sample_id.clone(),
            instruction: r.instruction.clone(),
            post_text: s.post_text.clone(),
            image: r.image_path.clone(),
            stance: r.stance,
            conditioning: matches!(config.generation.backend, GeneratorSpec::ToyPrefix { .. })
                .then(|| "sdmg-prefix".to_string()),
            backend: generator.id().to_string(),
        })
        .collect();
    let results = generate_batch(
        &requests,
        generator.as_ref(),
        &config.generation.retry,
        config.generation.in_flight,
    );
    let mut responses = Vec::new();
    let mut failures = Vec::new();
    for (req, res) in requests.iter().zip(results) {
        match res {
            Ok(r) => responses.push(ResponseRecord {
                request_id: r.request_id,
                sample_id: r.sample_id,
                stance: r.stance,
                backend: r.backend,
                text: r.text,
            }),
            Err(e) => failures.push(GenerationFailure {
                request_id: req.request_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    w.jsonl("generation/requests.jsonl", &requests)?;
    w.jsonl("generation/responses.jsonl", &responses)?;
    w.jsonl("generation/failures.jsonl", &failures)?;
    stages.push(w.finish(&[
        ("requests", requests.len()),
        ("responses", responses.len()),
        ("failures", failures.len()),
    ]));

    // evaluation
    let mut w = Writer::new(&out, Stage::Evaluate);
    let by_sample: BTreeMap<&str, &Sample> =
        split.test.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let items: Vec<EvalItem> = responses
        .iter()
        .map(|r| {
            let s = by_sample[r.sample_id.as_str()];
            EvalItem {
                sample_id: r.sample_id.clone(),
                model: Some(r.backend.clone()),
                modality: Some(Modality::MultiModal),
                target: Some(s.author),
                requested_stance: r.stance,
                generated: r.text.clone(),
                reference: s.comment.text.clone(),
                image: s.image.effective_image().unwrap_or_default().to_string(),
            }
        })
        .collect();
    w.jsonl("eval/items.jsonl", &items)?;
    if items.is_empty() {
        log::warn!("no generated responses to evaluate");
    } else {
        let run = evaluate(&items, &backends).map_err(at(Stage::Evaluate))?;
        let report = build_report(&run.items, true, config.eval.clamp_cosines).map_err(at(Stage::Evaluate))?;
        let overall = build_report(&run.items, false, config.eval.clamp_cosines).map_err(at(Stage::Evaluate))?;
        w.jsonl("eval/scores.jsonl", &run.items)?;
        w.json("eval/summary.json", &run.summary)?;
        w.json("eval/report.json", &report)?;
        w.write("eval/report.md", (overall.render_text() + "\n" + &report.render_text()).as_bytes())?;
        w.write("eval/report.csv", report.render_csv().as_bytes())?;
    }
    stages.push(w.finish(&[("items", items.len())]));

    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config.content_sha256(),
        input_sha256,
        seeds: config.seeds,
        stages,
    };
    let s = serde_json::to_string_pretty(&manifest).map_err(at(Stage::Manifest))? + "\n";
    std::fs::write(out.join("manifest.json"), s).map_err(at(Stage::Manifest))?;
    Ok(manifest)
}
