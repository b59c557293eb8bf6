//! The `edst` command-line tool.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edst_core::corpus::{split_corpus, Dialog};
use edst_core::eval::{evaluate, score};
use edst_core::features::LabelScheme;
use edst_core::nn::gradcheck::random_value_head_check;
use edst_core::state::{accumulate_turn, BeliefState, StateAssignment};
use edst_core::synthetic::{generate_synthetic, SyntheticSpec};
use edst_core::template::{extract_templates, template_predict};
use edst_core::tracker::{decode, track_turn, track_turn_asr, TrackerMode, TrackerModel, TurnBelief, DEFAULT_FILTERS};
use edst_core::train::{train, EpochRecord, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::formats::{
    corpus_to_string, dictionary_to_string, embeddings_to_string, load_corpus, load_dictionary, load_embeddings,
    load_ontology, metrics_json, ontology_to_string, parse_turn, read_text, save_corpus, state_json, write_text,
};
use crate::model_file::{load_model, save_model};
use crate::woz::{self, ConvertOptions};

pub const DEFAULT_SEED: u64 = 42;
/// Gradient check tolerance on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "edst", version, about = "Enriched dialog state tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a tracker and write a model file.
    Train(TrainArgs),
    /// Score a model on a labeled corpus.
    Eval(EvalArgs),
    /// Track turns read line by line from standard input.
    Track(TrackArgs),
    /// Split a corpus 3:1:1 into train.json, valid.json and test.json.
    Split(SplitArgs),
    /// Write a synthetic domain: ontology, corpus, embeddings and dictionary.
    GenSynthetic(GenArgs),
    /// Score the delexicalised template baseline.
    Baseline(BaselineArgs),
    /// Compare analytic and numerical gradients of a random value head.
    Gradcheck(GradcheckArgs),
    /// Import an external corpus into the canonical format.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Enriched3,
    Mention2,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Directory holding train.json, valid.json and test.json.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// A single corpus file.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_name = "FILE")]
    ontology: PathBuf,
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    #[arg(long, value_name = "FILE")]
    dict: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "enriched3")]
    mode: ModeArg,
    /// Train on turn-level labels without previous-belief input.
    #[arg(long, conflicts_with = "use_prev_belief")]
    turn_labels: bool,
    /// Feed the previous belief to every head (the default).
    #[arg(long)]
    use_prev_belief: bool,
    #[arg(long)]
    ablate_value_specific: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Model file to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FILTERS)]
    filters: usize,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    /// Marginalize over ASR hypotheses where present.
    #[arg(long)]
    asr: bool,
    /// Also write the metrics report here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    ontology: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 200)]
    dialogs: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Attach N-best lists to every turn.
    #[arg(long)]
    asr: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// Directory holding train.json, valid.json and test.json.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "FILE")]
    ontology: PathBuf,
    #[arg(long, value_name = "FILE")]
    dict: Option<PathBuf>,
    /// Use only this leading fraction of the training dialogs.
    #[arg(long, default_value_t = 1.0)]
    train_fraction: f64,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    embedding_dim: usize,
    #[arg(long, default_value_t = 4)]
    filters: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExternalFormat {
    Woz,
    Dstc2,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    format: ExternalFormat,
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    ontology: PathBuf,
    /// Drop labels and acts outside the ontology instead of failing.
    #[arg(long)]
    skip_unknown: bool,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Standard streams of one invocation.
pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub output: &'a mut dyn Write,
    pub errors: &'a mut dyn Write,
}

/// Runs the tool with the process's standard streams and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut output = std::io::stdout().lock();
    let mut errors = std::io::stderr().lock();
    run_with_io(argv, &mut Io { input: &mut input, output: &mut output, errors: &mut errors })
}

pub fn run_with_io<I, T>(argv: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { io.output.write_all(text.as_bytes()) } else { io.errors.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, io) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.errors, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, io: &mut Io<'_>) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a, io),
        Command::Eval(a) => cmd_eval(a, io),
        Command::Track(a) => cmd_track(a, io),
        Command::Split(a) => cmd_split(a),
        Command::GenSynthetic(a) => cmd_gen(a, io),
        Command::Baseline(a) => cmd_baseline(a, io),
        Command::Gradcheck(a) => cmd_gradcheck(a, io),
        Command::Convert(a) => cmd_convert(a, io),
    }
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn emit(io: &mut Io<'_>, value: &Value) -> Result<()> {
    writeln!(io.output, "{value}").map_err(out_err)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_part(dir: &Path, name: &str, ontology: &edst_core::state::Ontology) -> Result<Option<Vec<Dialog>>> {
    let path = dir.join(name);
    if path.exists() {
        load_corpus(&path, ontology).map(Some)
    } else {
        Ok(None)
    }
}

fn require_part(dir: &Path, name: &str, ontology: &edst_core::state::Ontology) -> Result<Vec<Dialog>> {
    load_part(dir, name, ontology)?
        .ok_or_else(|| Error::Usage(format!("{} does not contain {name}", dir.display())))
}

fn cmd_train(a: TrainArgs, io: &mut Io<'_>) -> Result<()> {
    let ontology = Arc::new(load_ontology(&a.ontology)?);
    let embeddings = Arc::new(load_embeddings(&a.embeddings)?);
    let dictionary = a.dict.as_deref().map(load_dictionary).transpose()?.map(Arc::new);
    let (train_set, valid_set) = match (&a.source.data, &a.source.corpus) {
        (Some(dir), _) => (require_part(dir, "train.json", &ontology)?, load_part(dir, "valid.json", &ontology)?.unwrap_or_default()),
        (None, Some(file)) => {
            let dialogs = load_corpus(file, &ontology)?;
            let (train, valid, _) = split_corpus(&dialogs, [3, 1, 1], a.seed)?;
            (train, valid)
        }
        (None, None) => unreachable!("clap requires a corpus source"),
    };
    let mode = TrackerMode {
        label_scheme: match a.mode {
            ModeArg::Enriched3 => LabelScheme::Enriched3,
            ModeArg::Mention2 => LabelScheme::Mention2,
        },
        use_prev_belief: !a.turn_labels,
        ablate_value_specific: a.ablate_value_specific,
    };
    let mut cfg = TrainConfig { seed: a.seed, ..TrainConfig::default() };
    cfg.max_epochs = a.max_epochs.unwrap_or(cfg.max_epochs);
    cfg.patience = a.patience.unwrap_or(cfg.patience);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let model = TrackerModel::new(mode, a.filters, ontology, embeddings, dictionary, &mut rng)?;
    let mut write_failure = None;
    let mut on_epoch = |r: &EpochRecord| {
        let line = json!({"head": r.head, "epoch": r.epoch, "train_loss": r.train_loss, "valid_loss": r.valid_loss});
        if let Err(e) = writeln!(io.output, "{line}") {
            write_failure.get_or_insert(e);
        }
    };
    let (model, log) = train(model, &train_set, &valid_set, &cfg, &mut on_epoch)?;
    if let Some(e) = write_failure {
        return Err(out_err(e));
    }
    save_model(&a.out, &model)?;
    for h in &log.heads {
        let _ = writeln!(
            io.errors,
            "{}: best epoch {} of {}, validation loss {:.6}",
            h.head, h.best_epoch, h.epochs, h.best_valid_loss
        );
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, io: &mut Io<'_>) -> Result<()> {
    let embeddings = Arc::new(load_embeddings(&a.embeddings)?);
    let model = load_model(&a.model, embeddings)?;
    let dialogs = match (&a.source.data, &a.source.corpus) {
        (Some(dir), _) => require_part(dir, "test.json", model.ontology())?,
        (None, Some(file)) => load_corpus(file, model.ontology())?,
        (None, None) => unreachable!("clap requires a corpus source"),
    };
    let metrics = evaluate(&model, &dialogs, a.asr)?;
    let report = metrics_json(&metrics);
    if let Some(out) = &a.out {
        write_text(out, &format!("{}\n", serde_json::to_string_pretty(&report).expect("metrics JSON")))?;
    }
    emit(io, &report)
}

/// Interactive tracker state: the belief fed to the next turn and the accumulated state.
pub struct TrackSession<'m> {
    model: &'m TrackerModel,
    belief: BeliefState,
    state: StateAssignment,
}

impl<'m> TrackSession<'m> {
    pub fn new(model: &'m TrackerModel) -> Self {
        let ontology = model.ontology();
        Self { model, belief: BeliefState::new(ontology), state: StateAssignment::empty(ontology) }
    }

    pub fn reset(&mut self) -> Value {
        *self = Self::new(self.model);
        self.report(&self.belief, &Map::new(), &self.state)
    }

    /// Processes one input line; on error the session is unchanged.
    pub fn line(&mut self, line: &str) -> Result<Value> {
        if line.trim() == "reset" {
            return Ok(self.reset());
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Format(format!("input line: {e}")))?;
        let turn = parse_turn(value, self.model.ontology())?;
        let input = turn.input();
        let prior = if self.model.mode().use_prev_belief { self.belief.clone() } else { BeliefState::new(self.model.ontology()) };
        let tb: TurnBelief = if input.asr.as_ref().is_some_and(|h| !h.is_empty()) {
            track_turn_asr(self.model, &input, &prior)?
        } else {
            track_turn(self.model, &input, &prior)?
        };
        let decoded = decode(self.model, &tb);
        let state = if self.model.mode().use_prev_belief {
            decoded
        } else {
            accumulate_turn(self.model.ontology(), &self.state, &decoded)
        };
        let requested: Map<String, Value> = tb.requested.iter().map(|(k, p)| (k.clone(), json!(p))).collect();
        let out = self.report(&tb.belief, &requested, &state);
        self.belief = tb.belief;
        self.state = state;
        Ok(out)
    }

    fn report(&self, belief: &BeliefState, requested: &Map<String, Value>, state: &StateAssignment) -> Value {
        let mut state_value = state_json(state);
        state_value["requested"] = json!(state.requested());
        json!({
            "belief": {"values": belief.value_dists(), "slots": belief.slot_conds()},
            "requested": requested,
            "state": state_value,
        })
    }
}

fn cmd_track(a: TrackArgs, io: &mut Io<'_>) -> Result<()> {
    let embeddings = Arc::new(load_embeddings(&a.embeddings)?);
    let model = load_model(&a.model, embeddings)?;
    let mut session = TrackSession::new(&model);
    let mut line = String::new();
    loop {
        line.clear();
        let n = io.input.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))?;
        if n == 0 {
            return Ok(());
        }
        if line.trim().is_empty() {
            continue;
        }
        let out = session.line(&line).unwrap_or_else(|e| json!({"error": e.to_string()}));
        emit(io, &out)?;
        io.output.flush().map_err(out_err)?;
    }
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let ontology = load_ontology(&a.ontology)?;
    let dialogs = load_corpus(&a.corpus, &ontology)?;
    let (train, valid, test) = split_corpus(&dialogs, [3, 1, 1], a.seed)?;
    ensure_dir(&a.out)?;
    save_corpus(&a.out.join("train.json"), &train)?;
    save_corpus(&a.out.join("valid.json"), &valid)?;
    save_corpus(&a.out.join("test.json"), &test)
}

fn cmd_gen(a: GenArgs, io: &mut Io<'_>) -> Result<()> {
    let spec = SyntheticSpec { asr: a.asr, ..SyntheticSpec::default() };
    let (world, dialogs) = generate_synthetic(spec, a.dialogs, a.seed)?;
    ensure_dir(&a.out)?;
    write_text(&a.out.join("ontology.json"), &ontology_to_string(&world.ontology))?;
    write_text(&a.out.join("corpus.json"), &corpus_to_string(&dialogs))?;
    write_text(&a.out.join("embeddings.txt"), &embeddings_to_string(&world.embeddings))?;
    write_text(&a.out.join("dict.json"), &dictionary_to_string(&world.dictionary))?;
    let turns: usize = dialogs.iter().map(|d| d.turns.len()).sum();
    writeln!(io.errors, "wrote {} dialogs ({turns} turns) to {}", dialogs.len(), a.out.display()).map_err(out_err)
}

fn cmd_baseline(a: BaselineArgs, io: &mut Io<'_>) -> Result<()> {
    if !(a.train_fraction > 0.0 && a.train_fraction <= 1.0) {
        return Err(Error::Usage("--train-fraction must lie in (0, 1]".into()));
    }
    let ontology = load_ontology(&a.ontology)?;
    let dict = a.dict.as_deref().map(load_dictionary).transpose()?;
    let train = require_part(&a.data, "train.json", &ontology)?;
    let valid = load_part(&a.data, "valid.json", &ontology)?.unwrap_or_default();
    let test = require_part(&a.data, "test.json", &ontology)?;
    let keep = ((train.len() as f64 * a.train_fraction).round() as usize).max(1);
    let mut source: Vec<Dialog> = train.into_iter().take(keep).collect();
    source.extend(valid);
    let set = extract_templates(&source, &ontology, dict.as_ref());
    let preds = template_predict(&set, &ontology, dict.as_ref(), &test);
    let metrics = score(&ontology, &test, &preds)?;
    let report = metrics_json(&metrics);
    if let Some(out) = &a.out {
        write_text(out, &format!("{}\n", serde_json::to_string_pretty(&report).expect("metrics JSON")))?;
    }
    let _ = writeln!(io.errors, "{} templates", set.templates.len());
    emit(io, &report)
}

fn cmd_gradcheck(a: GradcheckArgs, io: &mut Io<'_>) -> Result<()> {
    if a.embedding_dim == 0 || a.filters == 0 {
        return Err(Error::Usage("--embedding-dim and --filters must be positive".into()));
    }
    let report = random_value_head_check(a.seed, a.embedding_dim, a.filters)?;
    let groups: Map<String, Value> = report.groups.iter().map(|(n, e)| (n.clone(), json!(e))).collect();
    let passed = report.passes(GRADCHECK_TOLERANCE);
    emit(
        io,
        &json!({"seed": a.seed, "checked": report.checked, "max_error": report.max_error(), "passed": passed, "groups": groups}),
    )?;
    if passed {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "max relative gradient error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_error()
        )))
    }
}

fn cmd_convert(a: ConvertArgs, io: &mut Io<'_>) -> Result<()> {
    let ontology = load_ontology(&a.ontology)?;
    let text = read_text(&a.input)?;
    let (dialogs, report) = match a.format {
        ExternalFormat::Woz | ExternalFormat::Dstc2 => {
            woz::convert(&text, &ontology, ConvertOptions { skip_unknown: a.skip_unknown })?
        }
    };
    save_corpus(&a.out, &dialogs)?;
    writeln!(
        io.errors,
        "converted {} dialogs ({} turns); skipped {} labels and {} acts",
        report.dialogs, report.turns, report.skipped_labels, report.skipped_acts
    )
    .map_err(out_err)
}
