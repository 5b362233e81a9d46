//! The `xltag` command-line driver. Each subcommand runs one pipeline stage,
//! writes a [`RunManifest`] into its output directory first and removes its
//! outputs again if it fails.

pub mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::active::{simulate, Base, SimulationSetup, Strategy};
use crate::corpus::{
    map_tags, read_conll_file, read_plain, split_corpus, write_conll, ConllColumns, Provenance, RawCorpus,
    TagMapping, TaggedCorpus, SPLIT_SIZE,
};
use crate::embed::{
    cca_align, load_embeddings_file, write_embeddings, AlignmentFiles, BilingualLexicon, EmbeddingSpace,
};
use crate::error::{Error, Result};
use crate::synthetic::{LanguageConfig, SyntheticLanguage};
use crate::tagger::{Head, HeadVariant, TagSet, Tagger, TaggerConfig};
use crate::trainer::{generate_distant_data, term_weights, train, JointBatch, TrainConfig, TrainLog};

pub use manifest::{file_digest, OutputDir, RunManifest, MANIFEST_FILE};

pub const MODEL_FILE: &str = "model.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const DISTANT_FILE: &str = "distant.conll";
pub const TAG_COUNTS_FILE: &str = "tag_counts.tsv";
pub const CURVE_FILE: &str = "curve.tsv";
pub const EVAL_FILE: &str = "eval.txt";

/// Exit status for bad input or usage.
pub const EXIT_INPUT: i32 = 2;
/// Exit status for numerical failure during training.
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "xltag", version, about = "Low-resource POS tagging with distant and gold supervision")]
pub struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// File of `key=value` lines overriding model and training settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align two embedding spaces through a bilingual lexicon with CCA.
    Align(AlignArgs),
    /// Train the source-language tagger on tagged source text.
    TrainSource(TrainSourceArgs),
    /// Tag unlabelled target text with a source tagger.
    DistantTag(DistantTagArgs),
    /// Train the joint target tagger on distant and gold data.
    TrainJoint(TrainJointArgs),
    /// Simulate active learning against an oracle pool.
    ActiveLearn(ActiveLearnArgs),
    /// Report tagging accuracy of a model on a tagged corpus.
    Eval(EvalArgs),
    /// Write a synthetic language pair for trying out the pipeline.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Src,
    Tgt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TextFormat {
    Plain,
    Conll,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Distant,
    Gold,
}

/// Embeddings plus an optional alignment directory from `align`.
#[derive(Debug, Args)]
pub struct SpaceArgs {
    /// Word vectors in text format with a `count dim` header.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Alignment directory; vectors are projected into the shared space.
    #[arg(long)]
    pub alignment: Option<PathBuf>,
    /// Which projection of the alignment to apply.
    #[arg(long, value_enum)]
    pub side: Option<Side>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub src_emb: PathBuf,
    #[arg(long)]
    pub tgt_emb: PathBuf,
    /// `source<TAB>target` word pairs.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Shared dimension; defaults to the smaller embedding dimension.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainSourceArgs {
    /// Tagged source corpus (CoNLL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Development corpus; defaults to the last 20 sentences of `--corpus`.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Fine-to-universal tag mapping (TSV).
    #[arg(long)]
    pub tag_map: Option<PathBuf>,
    /// One tag per line; defaults to the 12 universal tags.
    #[arg(long)]
    pub tagset: Option<PathBuf>,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistantTagArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Unlabelled target text.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "plain")]
    pub format: TextFormat,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainJointArgs {
    /// Distant corpus from `distant-tag`.
    #[arg(long)]
    pub distant: Option<PathBuf>,
    /// Gold target corpus. Without `--dev` its first 20 sentences train and
    /// its last 20 are used for development.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Train on distant data alone when no gold labels are given.
    #[arg(long)]
    pub allow_no_gold: bool,
    #[arg(long)]
    pub tag_map: Option<PathBuf>,
    #[arg(long)]
    pub tagset: Option<PathBuf>,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ActiveLearnArgs {
    /// Fully tagged pool; its tags play the annotator.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Distant corpus, required for `--base joint`.
    #[arg(long)]
    pub distant: Option<PathBuf>,
    #[arg(long, default_value = "sumtype")]
    pub strategy: String,
    #[arg(long, value_enum, default_value = "joint")]
    pub base: BaseArg,
    /// Comma-separated budget checkpoints in labelled words.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 30, 100])]
    pub budgets: Vec<usize>,
    /// Number of runs, seeded `--seed`, `--seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long)]
    pub tag_map: Option<PathBuf>,
    #[arg(long)]
    pub tagset: Option<PathBuf>,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    Trad,
    Joint,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Tagged corpus (CoNLL).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub tag_map: Option<PathBuf>,
    /// Head to evaluate; defaults to gold if it was trained.
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Also write the report here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    pub num_tags: usize,
    #[arg(long, default_value_t = 12)]
    pub types_per_tag: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 300)]
    pub source_sentences: usize,
    #[arg(long, default_value_t = 500)]
    pub target_sentences: usize,
    #[arg(long, default_value_t = 60)]
    pub gold_sentences: usize,
    #[arg(long, default_value_t = 300)]
    pub test_sentences: usize,
    #[arg(long, default_value_t = 0)]
    pub pool_sentences: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Model and training settings a `--config` file may override.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub head_variant: HeadVariant,
    pub init_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TaggerConfig::new(1);
        RunConfig {
            train: TrainConfig::default(),
            hidden: t.hidden,
            mlp_hidden: t.mlp_hidden,
            head_variant: t.head_variant,
            init_scale: t.init_scale,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| Error::invalid(format!("{key}={value}: {e}"));
        match key {
            "hidden" => self.hidden = value.parse().map_err(|e| bad(&e))?,
            "mlp_hidden" => self.mlp_hidden = value.parse().map_err(|e| bad(&e))?,
            "head_variant" => self.head_variant = value.parse()?,
            "init_scale" => self.init_scale = value.parse().map_err(|e| bad(&e))?,
            "log_path" => {
                return Err(Error::invalid(
                    "log_path cannot be configured here; the log is written to the output directory",
                ))
            }
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected key=value".into(),
                });
            };
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.mlp_hidden == 0 {
            return Err(Error::invalid("hidden and mlp_hidden must be positive"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::invalid("init_scale must be a finite value >= 0"));
        }
        self.train.validate()
    }

    /// Every setting as text, for the manifest.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = self
            .train
            .to_text()
            .lines()
            .filter_map(|l| l.split_once('='))
            .filter(|(k, _)| *k != "log_path")
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        m.insert("hidden".into(), self.hidden.to_string());
        m.insert("mlp_hidden".into(), self.mlp_hidden.to_string());
        let variant = match self.head_variant {
            HeadVariant::Mlp => "mlp",
            HeadVariant::Linear => "linear",
        };
        m.insert("head_variant".into(), variant.into());
        m.insert("init_scale".into(), self.init_scale.to_string());
        m
    }

    pub fn tagger_config(&self, input_dim: usize) -> TaggerConfig {
        TaggerConfig {
            input_dim,
            hidden: self.hidden,
            mlp_hidden: self.mlp_hidden,
            head_variant: self.head_variant,
            init_scale: self.init_scale,
            seed: self.train.seed,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_DIVERGED
    } else {
        EXIT_INPUT
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    cfg.train.seed = cli.seed;
    let config_input = cli.config.clone();
    let with_config = |m: &mut RunManifest| -> Result<()> {
        if let Some(p) = &config_input {
            m.add_input(p)?;
        }
        Ok(())
    };

    match cli.command {
        Command::Align(a) => {
            let mut m = RunManifest::new("align", cli.seed);
            with_config(&mut m)?;
            cmd_align(&a, m)
        }
        Command::TrainSource(a) => {
            let mut m = RunManifest::new("train-source", cli.seed).with_config(cfg.to_map());
            with_config(&mut m)?;
            cmd_train_source(&a, &cfg, m)
        }
        Command::DistantTag(a) => {
            let mut m = RunManifest::new("distant-tag", cli.seed);
            with_config(&mut m)?;
            cmd_distant_tag(&a, m)
        }
        Command::TrainJoint(a) => {
            let mut m = RunManifest::new("train-joint", cli.seed).with_config(cfg.to_map());
            with_config(&mut m)?;
            cmd_train_joint(&a, &cfg, m)
        }
        Command::ActiveLearn(a) => {
            let mut m = RunManifest::new("active-learn", cli.seed).with_config(cfg.to_map());
            with_config(&mut m)?;
            cmd_active_learn(&a, &cfg, m)
        }
        Command::Eval(a) => cmd_eval(&a, RunManifest::new("eval", cli.seed)),
        Command::Synth(a) => cmd_synth(&a, RunManifest::new("synth", cli.seed)),
    }
}

fn add_space_inputs(m: &mut RunManifest, space: &SpaceArgs) -> Result<()> {
    m.add_input(&space.embeddings)?;
    if let Some(dir) = &space.alignment {
        m.add_input(&dir.join(AlignmentFiles::SRC))?;
        m.add_input(&dir.join(AlignmentFiles::TGT))?;
    }
    Ok(())
}

/// Space id of unaligned vectors, derived from the file contents.
pub fn raw_space_id(path: &Path) -> Result<String> {
    Ok(format!("raw-{}", &file_digest(path)?[..16]))
}

/// Loads embeddings, projected through the alignment when one is given.
/// Returns the space and the projection's output dimension.
pub fn load_space(args: &SpaceArgs, default_side: Side) -> Result<(EmbeddingSpace, Option<usize>)> {
    let (vocab, matrix) = load_embeddings_file(&args.embeddings)?;
    match &args.alignment {
        Some(dir) => {
            let (src, tgt, id) = AlignmentFiles::load(dir)?;
            let proj = match args.side.unwrap_or(default_side) {
                Side::Src => src,
                Side::Tgt => tgt,
            };
            if proj.input_dim() != matrix.dim() {
                return Err(Error::invalid(format!(
                    "{}: {}-dimensional vectors do not fit a projection from {} dimensions",
                    args.embeddings.display(),
                    matrix.dim(),
                    proj.input_dim()
                )));
            }
            let k = proj.output_dim();
            let space = EmbeddingSpace::new(vocab, matrix, "raw").project(&proj, id)?;
            Ok((space, Some(k)))
        }
        None => {
            let id = raw_space_id(&args.embeddings)?;
            Ok((EmbeddingSpace::new(vocab, matrix, id), None))
        }
    }
}

fn read_tagset(path: Option<&Path>) -> Result<TagSet> {
    match path {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
            TagSet::read(std::io::BufReader::new(f))
        }
        None => Ok(TagSet::universal()),
    }
}

/// Reads a CoNLL corpus and maps its tags into `tagset`, either through a
/// mapping file or by name.
pub fn read_tagged(path: &Path, tagset: &TagSet, tag_map: Option<&Path>) -> Result<TaggedCorpus> {
    let raw = read_conll_file(path, ConllColumns::default())?;
    let mapping = match tag_map {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
            TagMapping::read(std::io::BufReader::new(f))?
        }
        None => TagMapping::identity(tagset),
    };
    map_tags(&raw, &mapping, tagset).map_err(|e| match e {
        Error::UnmappedTags(_) | Error::UnknownTag(_) => {
            Error::TagsetMismatch(format!("{}: {e}", path.display()))
        }
        other => other,
    })
}

fn conll_bytes(corpus: &RawCorpus) -> Vec<u8> {
    let mut buf = Vec::new();
    write_conll(&mut buf, corpus, ConllColumns::default()).expect("write to vec");
    buf.push(b'\n');
    buf
}

fn model_bytes(model: &Tagger) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    model.save(&mut buf)?;
    Ok(buf)
}

fn fresh_model(cfg: &RunConfig, space: &EmbeddingSpace, k: Option<usize>, tagset: TagSet) -> Tagger {
    let mut model = Tagger::new(&cfg.tagger_config(space.dim()), tagset, space.space_id.clone());
    model.meta.projection_dim = k;
    model.meta.lowercase = space.lowercase;
    model
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    let mut t = cfg.train.clone();
    t.log_path = None;
    t
}

fn summarize(log: &TrainLog) -> String {
    format!(
        "best dev accuracy {:.1} at epoch {} of {}",
        log.best_dev_accuracy,
        log.best_epoch,
        log.records.len()
    )
}

fn cmd_align(a: &AlignArgs, mut m: RunManifest) -> Result<()> {
    m.add_input(&a.src_emb)?;
    m.add_input(&a.tgt_emb)?;
    m.add_input(&a.lexicon)?;
    if let Some(k) = a.k {
        m.config.insert("k".into(), k.to_string());
    }
    let (sv, sm) = load_embeddings_file(&a.src_emb)?;
    let (tv, tm) = load_embeddings_file(&a.tgt_emb)?;
    let lexicon = {
        let f = fs::File::open(&a.lexicon).map_err(|e| Error::io(&a.lexicon, e))?;
        BilingualLexicon::read(std::io::BufReader::new(f))?
    };
    let src = EmbeddingSpace::new(sv, sm, "src");
    let tgt = EmbeddingSpace::new(tv, tm, "tgt");

    let mut out = OutputDir::open(&a.out_dir, &m)?;
    let alignment = cca_align(&src, &tgt, &lexicon, a.k)?;
    out.claim(AlignmentFiles::SRC);
    out.claim(AlignmentFiles::TGT);
    out.claim(AlignmentFiles::REPORT);
    AlignmentFiles::save(out.root(), &alignment)?;

    println!("space {}", alignment.space_id());
    println!("pairs used {}", alignment.pairs_used);
    let corr: Vec<String> = alignment.correlations.iter().map(|c| format!("{c:.6}")).collect();
    println!("canonical correlations {}", corr.join(" "));
    out.commit();
    Ok(())
}

fn cmd_train_source(a: &TrainSourceArgs, cfg: &RunConfig, mut m: RunManifest) -> Result<()> {
    m.add_input(&a.corpus)?;
    for p in [&a.dev, &a.tag_map, &a.tagset].into_iter().flatten() {
        m.add_input(p)?;
    }
    add_space_inputs(&mut m, &a.space)?;

    let tagset = read_tagset(a.tagset.as_deref())?;
    let (space, k) = load_space(&a.space, Side::Src)?;
    let mut corpus = read_tagged(&a.corpus, &tagset, a.tag_map.as_deref())?;
    let dev = match &a.dev {
        Some(p) => read_tagged(p, &tagset, a.tag_map.as_deref())?,
        None => {
            if corpus.len() <= SPLIT_SIZE {
                return Err(Error::invalid(format!(
                    "{}: {} sentences leave nothing to train on after holding out {SPLIT_SIZE} for development; pass --dev",
                    a.corpus.display(),
                    corpus.len()
                )));
            }
            let held = corpus.sentences.split_off(corpus.len() - SPLIT_SIZE);
            TaggedCorpus::new(held, Provenance::Gold, tagset.clone())?
        }
    };
    let distant = corpus.with_provenance(Provenance::Distant);
    let no_gold = TaggedCorpus::empty(Provenance::Gold, tagset.clone());

    let mut out = OutputDir::open(&a.out_dir, &m)?;
    let model = fresh_model(cfg, &space, k, tagset);
    let (model, log) = train(model, &JointBatch::new(&distant, &no_gold), &dev, &space, &train_config(cfg))?;
    out.write(MODEL_FILE, model_bytes(&model)?)?;
    out.write(TRAIN_LOG_FILE, log.to_tsv())?;
    println!("{}", summarize(&log));
    out.commit();
    Ok(())
}

fn cmd_distant_tag(a: &DistantTagArgs, mut m: RunManifest) -> Result<()> {
    m.add_input(&a.model)?;
    m.add_input(&a.corpus)?;
    add_space_inputs(&mut m, &a.space)?;

    let model = Tagger::load_file(&a.model)?;
    let (space, _) = load_space(&a.space, Side::Tgt)?;
    let raw = match a.format {
        TextFormat::Conll => read_conll_file(&a.corpus, ConllColumns::default())?,
        TextFormat::Plain => {
            let f = fs::File::open(&a.corpus).map_err(|e| Error::io(&a.corpus, e))?;
            read_plain(std::io::BufReader::new(f))?
        }
    };
    let target = raw.unlabeled(model.tagset());

    let mut out = OutputDir::open(&a.out_dir, &m)?;
    let (distant, counts) = generate_distant_data(&model, &target, &space)?;
    out.write(DISTANT_FILE, conll_bytes(&distant.to_raw()))?;
    let mut report = String::from("tag\tcount\n");
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(report, "{}\t{c}", model.tagset().name(i));
    }
    out.write(TAG_COUNTS_FILE, report)?;
    println!("tagged {} sentences, {} tokens", distant.len(), distant.token_count());
    out.commit();
    Ok(())
}

fn cmd_train_joint(a: &TrainJointArgs, cfg: &RunConfig, mut m: RunManifest) -> Result<()> {
    for p in [&a.distant, &a.gold, &a.dev, &a.tag_map, &a.tagset].into_iter().flatten() {
        m.add_input(p)?;
    }
    add_space_inputs(&mut m, &a.space)?;
    m.config.insert("allow_no_gold".into(), a.allow_no_gold.to_string());

    let tagset = read_tagset(a.tagset.as_deref())?;
    let (space, k) = load_space(&a.space, Side::Tgt)?;
    let map = a.tag_map.as_deref();
    let (gold, dev) = match (&a.gold, &a.dev) {
        (Some(g), None) => {
            let all = read_tagged(g, &tagset, map)?;
            let (gold, dev, _) = split_corpus(&all)?;
            (gold, dev)
        }
        (Some(g), Some(d)) => (read_tagged(g, &tagset, map)?, read_tagged(d, &tagset, map)?),
        (None, Some(d)) => (TaggedCorpus::empty(Provenance::Gold, tagset.clone()), read_tagged(d, &tagset, map)?),
        (None, None) => return Err(Error::invalid("a development corpus is needed: pass --gold or --dev")),
    };
    if gold.labeled_count() == 0 && !a.allow_no_gold {
        return Err(Error::invalid(
            "no gold training labels; pass --allow-no-gold to train on distant data alone",
        ));
    }
    let distant = match &a.distant {
        Some(p) => read_tagged(p, &tagset, None)?.with_provenance(Provenance::Distant),
        None => TaggedCorpus::empty(Provenance::Distant, tagset.clone()),
    };
    let batch = JointBatch::new(&distant, &gold);
    let weights = term_weights(&batch, cfg.train.gamma_override)?;

    let mut out = OutputDir::open(&a.out_dir, &m)?;
    let model = fresh_model(cfg, &space, k, tagset);
    let (model, log) = train(model, &batch, &dev, &space, &train_config(cfg))?;
    out.write(MODEL_FILE, model_bytes(&model)?)?;
    out.write(TRAIN_LOG_FILE, log.to_tsv())?;
    println!(
        "{} distant and {} gold tokens, term weights {:.6} and {:.6}",
        batch.distant_tokens(),
        batch.gold_tokens(),
        weights.distant,
        weights.gold
    );
    println!("{}", summarize(&log));
    out.commit();
    Ok(())
}

fn cmd_active_learn(a: &ActiveLearnArgs, cfg: &RunConfig, mut m: RunManifest) -> Result<()> {
    for p in [Some(&a.pool), Some(&a.dev), Some(&a.test), a.distant.as_ref(), a.tag_map.as_ref(), a.tagset.as_ref()]
        .into_iter()
        .flatten()
    {
        m.add_input(p)?;
    }
    add_space_inputs(&mut m, &a.space)?;
    let strategy: Strategy = a.strategy.parse()?;
    let base = match a.base {
        BaseArg::Trad => Base::Trad,
        BaseArg::Joint => Base::Joint,
    };
    m.config.insert("strategy".into(), strategy.to_string());
    m.config.insert("base".into(), base.to_string());
    let budgets: Vec<String> = a.budgets.iter().map(usize::to_string).collect();
    m.config.insert("budgets".into(), budgets.join(","));
    m.config.insert("seeds".into(), a.seeds.to_string());
    if a.seeds == 0 {
        return Err(Error::invalid("--seeds must be at least 1"));
    }

    let tagset = read_tagset(a.tagset.as_deref())?;
    let (space, _) = load_space(&a.space, Side::Tgt)?;
    let map = a.tag_map.as_deref();
    let pool = read_tagged(&a.pool, &tagset, map)?;
    let dev = read_tagged(&a.dev, &tagset, map)?;
    let test = read_tagged(&a.test, &tagset, map)?;
    let distant = match &a.distant {
        Some(p) => Some(read_tagged(p, &tagset, None)?.with_provenance(Provenance::Distant)),
        None if base == Base::Joint => {
            return Err(Error::invalid("--base joint needs --distant"));
        }
        None => None,
    };

    let mut out = OutputDir::open(&a.out_dir, &m)?;
    let mut tsv = String::from("strategy\tbase\tseed\tbudget\taccuracy\n");
    let mut sums = vec![(0.0, 0usize); a.budgets.len()];
    let first = cfg.train.seed;
    for seed in first..first + a.seeds {
        let mut run_cfg = cfg.clone();
        run_cfg.train.seed = seed;
        let setup = SimulationSetup {
            pool: &pool,
            distant: distant.as_ref(),
            dev: &dev,
            test: &test,
            space: &space,
            tagger: run_cfg.tagger_config(space.dim()),
            train: train_config(&run_cfg),
        };
        let (curve, _) = simulate(strategy, base, &a.budgets, &setup, seed)?;
        tsv.push_str(&curve.to_tsv());
        for (i, p) in curve.points.iter().enumerate() {
            sums[i].0 += p.accuracy;
            sums[i].1 += 1;
        }
    }
    out.write(CURVE_FILE, tsv)?;
    for (b, (sum, n)) in a.budgets.iter().zip(&sums) {
        if *n > 0 {
            println!("budget {b}: mean accuracy {:.1} over {n} runs", sum / *n as f64);
        }
    }
    out.commit();
    Ok(())
}

/// Token accuracy and per-tag confusion counts.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub tagset: TagSet,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn new(tagset: TagSet) -> Self {
        let k = tagset.len();
        EvalReport {
            tagset,
            confusion: vec![vec![0; k]; k],
        }
    }

    pub fn add(&mut self, gold: usize, predicted: usize) {
        self.confusion[gold][predicted] += 1;
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            100.0 * self.correct() as f64 / total as f64
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy {:.1} ({}/{})", self.accuracy(), self.correct(), self.total());
        let _ = writeln!(s, "tag\tgold\tpredicted\tcorrect");
        let k = self.confusion.len();
        for i in 0..k {
            let gold: usize = self.confusion[i].iter().sum();
            let predicted: usize = (0..k).map(|g| self.confusion[g][i]).sum();
            if gold + predicted == 0 {
                continue;
            }
            let _ = writeln!(s, "{}\t{gold}\t{predicted}\t{}", self.tagset.name(i), self.confusion[i][i]);
        }
        let mut errors: Vec<(usize, usize, usize)> = (0..k)
            .flat_map(|g| (0..k).map(move |p| (g, p)))
            .filter(|(g, p)| g != p)
            .map(|(g, p)| (self.confusion[g][p], g, p))
            .filter(|e| e.0 > 0)
            .collect();
        errors.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        if !errors.is_empty() {
            let _ = writeln!(s, "confusions (gold -> predicted)");
            for (n, g, p) in errors.iter().take(10) {
                let _ = writeln!(s, "{}\t{}\t{n}", self.tagset.name(*g), self.tagset.name(*p));
            }
        }
        s
    }
}

/// Tags every sentence of `corpus` and counts the outcomes on labelled tokens.
pub fn evaluate_report(model: &Tagger, corpus: &TaggedCorpus, space: &EmbeddingSpace, head: Head) -> Result<EvalReport> {
    if &corpus.tagset != model.tagset() {
        return Err(Error::TagsetMismatch("corpus tagset differs from the model's".into()));
    }
    model.check_space(space)?;
    let mut report = EvalReport::new(model.tagset().clone());
    for s in corpus.sentences.iter().filter(|s| s.labeled_count() > 0) {
        let predicted = model.tag_tokens(space, &s.tokens, head)?;
        for (gold, p) in s.tags.iter().zip(predicted) {
            if let Some(g) = gold {
                report.add(*g, p);
            }
        }
    }
    Ok(report)
}

fn cmd_eval(a: &EvalArgs, mut m: RunManifest) -> Result<()> {
    m.add_input(&a.model)?;
    m.add_input(&a.corpus)?;
    if let Some(p) = &a.tag_map {
        m.add_input(p)?;
    }
    add_space_inputs(&mut m, &a.space)?;

    let model = Tagger::load_file(&a.model)?;
    let (space, _) = load_space(&a.space, Side::Tgt)?;
    let corpus = read_tagged(&a.corpus, model.tagset(), a.tag_map.as_deref())?;
    let head = match a.head {
        Some(HeadArg::Distant) => Head::Distant,
        Some(HeadArg::Gold) => Head::Gold,
        None => model.evaluation_head(),
    };
    let mut out = a.out_dir.as_deref().map(|d| OutputDir::open(d, &m)).transpose()?;
    let report = evaluate_report(&model, &corpus, &space, head)?.render();
    print!("{report}");
    if let Some(mut out) = out.take() {
        out.write(EVAL_FILE, &report)?;
        out.commit();
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, mut m: RunManifest) -> Result<()> {
    let lang_cfg = LanguageConfig {
        num_tags: a.num_tags,
        types_per_tag: a.types_per_tag,
        dim: a.dim,
        ..LanguageConfig::default()
    };
    for (k, v) in [
        ("num_tags", a.num_tags),
        ("types_per_tag", a.types_per_tag),
        ("dim", a.dim),
        ("source_sentences", a.source_sentences),
        ("target_sentences", a.target_sentences),
        ("gold_sentences", a.gold_sentences),
        ("test_sentences", a.test_sentences),
        ("pool_sentences", a.pool_sentences),
    ] {
        m.config.insert(k.into(), v.to_string());
    }
    let lang = SyntheticLanguage::generate(&lang_cfg, m.seed)?;
    let mut out = OutputDir::open(&a.out_dir, &m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);

    let emb = |space: &EmbeddingSpace| {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &space.vocab, &space.matrix).expect("write to vec");
        buf
    };
    out.write("src.emb", emb(&lang.source_space()))?;
    out.write("tgt.emb", emb(&lang.target_space()))?;
    let mut lex = String::new();
    for (s, t) in lang.lexicon().pairs() {
        let _ = writeln!(lex, "{s}\t{t}");
    }
    out.write("lexicon.tsv", lex)?;
    out.write("tagset.txt", lang.tagset.tags().join("\n") + "\n")?;

    let source = lang.source_corpus(a.source_sentences, &mut rng);
    out.write("source.conll", conll_bytes(&source.to_raw()))?;
    let target = lang.target_corpus(a.target_sentences, &mut rng);
    let plain: String = target.sentences.iter().map(|s| s.tokens.join(" ") + "\n").collect();
    out.write("target.txt", plain)?;
    let gold = lang.target_corpus(a.gold_sentences, &mut rng);
    out.write("gold.conll", conll_bytes(&gold.to_raw()))?;
    let test = lang.target_corpus(a.test_sentences, &mut rng);
    out.write("test.conll", conll_bytes(&test.to_raw()))?;
    if a.pool_sentences > 0 {
        let pool = lang.target_corpus(a.pool_sentences, &mut rng);
        out.write("pool.conll", conll_bytes(&pool.to_raw()))?;
    }
    println!("wrote a {}-tag synthetic language pair to {}", a.num_tags, a.out_dir.display());
    out.commit();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tagset() -> TagSet {
        TagSet::new(vec!["A".into(), "B".into(), "C".into()]).unwrap()
    }

    #[test]
    fn seven_of_ten_is_seventy() {
        let mut r = EvalReport::new(tagset());
        for _ in 0..7 {
            r.add(0, 0);
        }
        for _ in 0..3 {
            r.add(1, 2);
        }
        let text = r.render();
        assert!(text.starts_with("accuracy 70.0 (7/10)\n"), "{text}");
        assert!(text.contains("B\tC\t3"), "{text}");
    }

    #[test]
    fn uniform_guessing_over_twelve_tags_scores_near_one_twelfth() {
        use rand::{RngExt, SeedableRng};
        let mut mean = 0.0;
        for seed in 0..5 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut r = EvalReport::new(TagSet::universal());
            for i in 0..2000 {
                r.add(i % 12, rng.random_range(0..12));
            }
            mean += r.accuracy() / 5.0;
        }
        assert!((mean - 100.0 / 12.0).abs() < 2.0, "{mean}");
    }

    #[test]
    fn all_correct_is_hundred() {
        let mut r = EvalReport::new(tagset());
        for g in 0..3 {
            r.add(g, g);
        }
        assert!(r.render().starts_with("accuracy 100.0 (3/3)"));
        assert!(!r.render().contains("confusions"));
    }

    #[test]
    fn config_keys_cover_model_and_training() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nhidden=8\nhead_variant=linear\npatience=3\n").unwrap();
        assert_eq!(c.hidden, 8);
        assert_eq!(c.head_variant, HeadVariant::Linear);
        assert_eq!(c.train.patience, 3);
        let map = c.to_map();
        assert_eq!(map["head_variant"], "linear");
        assert_eq!(map["patience"], "3");
        assert!(!map.contains_key("log_path"));
    }

    #[test]
    fn config_rejects_unknown_and_log_path() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("bogus=1").is_err());
        assert!(c.apply_text("log_path=/tmp/x").is_err());
        assert!(matches!(c.apply_text("hidden"), Err(Error::Parse { line: 1, .. })));
        assert!(c.apply_text("hidden=0").is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(main_with_args(["xltag", "no-such-command"]), EXIT_INPUT);
        assert_eq!(main_with_args(["xltag", "align"]), EXIT_INPUT);
    }

    #[test]
    fn divergence_exits_with_three() {
        let e = Error::Divergence {
            epoch: 2,
            last_finite_loss: 1.5,
        };
        assert_eq!(exit_code(&e), EXIT_DIVERGED);
        assert_eq!(exit_code(&Error::PoolExhausted), EXIT_INPUT);
    }
}
