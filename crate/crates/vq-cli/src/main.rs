//! `vq` — dataset transformation, judging, and toy-training command line.
//!
//! Exit codes: 0 success, 1 data failure (bad samples, wrong lines),
//! 2 configuration or I/O failure. Flag values override config-file values,
//! which override built-in defaults.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use vq_core::config::Config;
use vq_core::dataset::{self, ManifestHeader, RenderMode};
use vq_core::grpo;
use vq_core::judge::{self, JudgeOptions, JudgeStage, JudgeVerdict};
use vq_core::render::{Context, FontLibrary, RenderOptions};
use vq_core::rollout::{self, StepConfig, ToyTask, ToyTrainConfig, TrainMode, UpdateOn};
use vq_core::seed;

#[derive(Parser)]
#[command(name = "vq", version, about = "Visualized-question dataset and RL toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transform a sample manifest into visual questions
    Render(RenderArgs),
    /// Judge model outputs against ground truth
    Judge(JudgeArgs),
    /// Train the two-channel toy policy and emit a trace
    #[command(name = "train-toy")]
    TrainToy(TrainToyArgs),
    /// Compute group-relative advantages for reward groups
    Advantage(AdvantageArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; flags take precedence over its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for all randomized choices
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RenderArgs {
    /// Input sample manifest (JSONL)
    manifest_in: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Probability that a sample becomes a visual question
    #[arg(long)]
    vq_ratio: Option<f64>,
    /// Disable style randomization (size 24, black, first Latin font)
    #[arg(long)]
    fixed_style: bool,
    /// Text-channel prompt used for visual questions
    #[arg(long)]
    prompt: Option<String>,
    /// Directory holding fonts and fonts.json
    #[arg(long)]
    fonts_dir: Option<PathBuf>,
    /// Where rendered PNGs are written
    #[arg(long)]
    out_dir: PathBuf,
    /// Where the output manifest is written
    #[arg(long)]
    manifest_out: PathBuf,
}

#[derive(Args)]
struct JudgeArgs {
    /// Input JSONL: {"id", "question", "answer", "output"}
    pairs_in: PathBuf,
    /// Output JSONL: {"id", "correct", "stage", "extracted", "detail"}
    verdicts_out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    /// Relative tolerance for numeric equivalence
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Send definite symbolic mismatches to the fallback judge too
    #[arg(long)]
    fallback_on_mismatch: bool,
    /// Chat-completions endpoint for the fallback judge
    #[arg(long)]
    judge_endpoint: Option<String>,
    /// Model name for the fallback judge
    #[arg(long)]
    judge_model: Option<String>,
}

#[derive(Args)]
struct TrainToyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// vq_only | standard_only | hybrid | mixed
    #[arg(long)]
    mode: String,
    #[arg(long)]
    steps: Option<usize>,
    /// Responses per group in vq_only / standard_only / mixed modes
    #[arg(long)]
    group_size: Option<usize>,
    /// Standard responses per hybrid group
    #[arg(long)]
    n1: Option<usize>,
    /// VQ responses per hybrid group
    #[arg(long)]
    n2: Option<usize>,
    /// Probability a mixed-mode group is all-VQ
    #[arg(long)]
    vq_ratio: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip_eps: Option<f64>,
    #[arg(long)]
    kl_beta: Option<f64>,
    #[arg(long)]
    guard_eps: Option<f64>,
    /// own | orig: context each response's update conditions on
    #[arg(long)]
    update_on: Option<String>,
}

#[derive(Args)]
struct AdvantageArgs {
    /// Input JSONL: {"group_id", "rewards"}
    rewards_in: PathBuf,
    /// Output JSONL: {"group_id", "advantages"}
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    guard_eps: Option<f64>,
}

const EXIT_DATA: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// A failure paired with the exit code it maps to.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DATA, message: message.into() }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
            Config::from_json(&text).map_err(|e| CliError::config(e.to_string()))
        }
    }
}

fn header(config: &Config) -> ManifestHeader {
    ManifestHeader {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_fingerprint: config.fingerprint(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Render(args) => cmd_render(args),
        Command::Judge(args) => cmd_judge(args),
        Command::TrainToy(args) => cmd_train_toy(args),
        Command::Advantage(args) => cmd_advantage(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_render(args: RenderArgs) -> Result<(), CliError> {
    let mut config = load_config(args.common.config.as_deref())?;
    if let Some(v) = args.vq_ratio {
        config.render.vq_ratio = v;
    }
    if args.fixed_style {
        config.render.fixed_style = true;
    }
    if let Some(p) = args.prompt {
        config.render.prompt = p;
    }
    if let Some(d) = args.fonts_dir {
        config.render.fonts_dir = d.to_string_lossy().into_owned();
    }
    if let Some(s) = args.common.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| CliError::config(e.to_string()))?;

    let samples = dataset::load_manifest(&args.manifest_in)
        .map_err(|e| CliError::config(format!("{}: {e}", args.manifest_in.display())))?;
    let library = FontLibrary::from_dir(Path::new(&config.render.fonts_dir))
        .map_err(|e| CliError::config(e.to_string()))?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", args.out_dir.display())))?;

    let opts = RenderOptions {
        prompt: config.render.prompt.clone(),
        fixed_style: config.render.fixed_style,
    };
    let outcomes =
        vq_core::render::transform_batch(&samples, config.render.vq_ratio, config.seed, &library, &opts)
            .map_err(|e| CliError::config(e.to_string()))?;

    let mut entries = Vec::new();
    let mut failures = 0usize;
    for outcome in outcomes {
        match outcome.result {
            Ok((context, entry)) => {
                if let Context::VisualQuestion { image, .. } = &context {
                    let path = args.out_dir.join(&entry.rendered_image);
                    image.save(&path).map_err(|e| {
                        CliError::config(format!("cannot write {}: {e}", path.display()))
                    })?;
                }
                entries.push(entry);
            }
            Err(e) => {
                failures += 1;
                eprintln!("sample \"{}\": {e}", outcome.sample_id);
            }
        }
    }

    dataset::write_manifest(&entries, &args.manifest_out, Some(&header(&config)))
        .map_err(|e| CliError::config(e.to_string()))?;
    eprintln!(
        "rendered {} of {} samples ({} vq, {} orig), {failures} failed",
        entries.len(),
        entries.len() + failures,
        entries.iter().filter(|e| e.mode == RenderMode::Vq).count(),
        entries.iter().filter(|e| e.mode == RenderMode::Orig).count(),
    );
    if failures > 0 {
        return Err(CliError::data(format!("{failures} sample(s) failed")));
    }
    Ok(())
}

#[derive(Deserialize)]
struct JudgePair {
    id: String,
    question: String,
    /// Ground-truth answer.
    answer: String,
    /// Model output text.
    output: String,
}

#[derive(Serialize)]
struct JudgeRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    verdict: &'a JudgeVerdict,
}

fn cmd_judge(args: JudgeArgs) -> Result<(), CliError> {
    let mut config = load_config(args.common.config.as_deref())?;
    if let Some(v) = args.rel_tol {
        config.judge.rel_tol = v;
    }
    if args.fallback_on_mismatch {
        config.judge.fallback_on_mismatch = true;
    }
    if let Some(v) = args.judge_endpoint {
        config.judge.endpoint = Some(v);
    }
    if let Some(v) = args.judge_model {
        config.judge.model = Some(v);
    }
    if let Some(s) = args.common.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| CliError::config(e.to_string()))?;

    let text = fs::read_to_string(&args.pairs_in)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", args.pairs_in.display())))?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: JudgePair = serde_json::from_str(line)
            .map_err(|e| CliError::data(format!("line {}: {e}", idx + 1)))?;
        pairs.push(pair);
    }

    let fallback: Option<judge::llm::LlmJudgeClient> =
        match (&config.judge.endpoint, &config.judge.model) {
            (Some(endpoint), Some(model)) => {
                let mut client = judge::llm::ClientConfig::new(endpoint.clone(), model.clone());
                client.timeout_s = config.judge.timeout_s;
                client.max_retries = config.judge.max_retries;
                client.concurrency = config.judge.concurrency;
                Some(judge::llm::LlmJudgeClient::new(client))
            }
            _ => None,
        };
    let opts = JudgeOptions {
        rel_tol: config.judge.rel_tol,
        fallback_on_mismatch: config.judge.fallback_on_mismatch,
    };

    // Fixed-size worker pool over a shared cursor; results land at their
    // input index so output order matches input order.
    let workers = config.judge.concurrency.max(1).min(pairs.len().max(1));
    let cursor = AtomicUsize::new(0);
    let verdicts: Mutex<Vec<Option<JudgeVerdict>>> = Mutex::new(vec![None; pairs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= pairs.len() {
                    break;
                }
                let pair = &pairs[i];
                let verdict = judge::hierarchical_judge(
                    &pair.question,
                    &pair.answer,
                    &pair.output,
                    &opts,
                    fallback.as_ref().map(|f| f as &dyn judge::FallbackJudge),
                );
                verdicts.lock().unwrap()[i] = Some(verdict);
            });
        }
    });
    let verdicts: Vec<JudgeVerdict> =
        verdicts.into_inner().unwrap().into_iter().map(|v| v.unwrap()).collect();

    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &header(&config)).expect("header serialization");
    out.push(b'\n');
    for (pair, verdict) in pairs.iter().zip(&verdicts) {
        serde_json::to_writer(&mut out, &JudgeRow { id: &pair.id, verdict }).expect("row");
        out.push(b'\n');
    }
    fs::write(&args.verdicts_out, out)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", args.verdicts_out.display())))?;

    let by_stage = |s: JudgeStage| verdicts.iter().filter(|v| v.stage == s).count();
    let accuracy = if verdicts.is_empty() {
        "n/a".to_string()
    } else {
        let correct = verdicts.iter().filter(|v| v.correct).count();
        format!("{:.4}", correct as f64 / verdicts.len() as f64)
    };
    eprintln!(
        "judged {} pair(s): symbolic {}, llm {}, failed {}; accuracy {accuracy}",
        verdicts.len(),
        by_stage(JudgeStage::Symbolic),
        by_stage(JudgeStage::Llm),
        by_stage(JudgeStage::Failed),
    );
    Ok(())
}

fn cmd_train_toy(args: TrainToyArgs) -> Result<(), CliError> {
    let mut config = load_config(args.common.config.as_deref())?;
    if let Some(v) = args.steps {
        config.rollout.steps = v;
    }
    if let Some(v) = args.group_size {
        config.grpo.group_size = v;
    }
    if let Some(v) = args.n1 {
        config.rollout.n1 = v;
    }
    if let Some(v) = args.n2 {
        config.rollout.n2 = v;
    }
    if let Some(v) = args.vq_ratio {
        config.render.vq_ratio = v;
    }
    if let Some(v) = args.temperature {
        config.rollout.temperature = v;
    }
    if let Some(v) = args.lr {
        config.rollout.lr = v;
    }
    if let Some(v) = args.clip_eps {
        config.grpo.clip_eps = v;
    }
    if let Some(v) = args.kl_beta {
        config.grpo.kl_beta = v;
    }
    if let Some(v) = args.guard_eps {
        config.grpo.guard_eps = v;
    }
    if let Some(s) = args.common.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| CliError::config(e.to_string()))?;

    let mode = match args.mode.as_str() {
        "vq_only" => TrainMode::VqOnly,
        "standard_only" => TrainMode::StandardOnly,
        "hybrid" => TrainMode::Hybrid { n1: config.rollout.n1, n2: config.rollout.n2 },
        "mixed" => TrainMode::MixedRatio(config.render.vq_ratio),
        other => {
            return Err(CliError::config(format!(
                "unknown --mode {other:?} (expected vq_only, standard_only, hybrid, or mixed)"
            )))
        }
    };
    let update_on = match args.update_on.as_deref() {
        None | Some("own") => UpdateOn::Own,
        Some("orig") => UpdateOn::Orig,
        Some(other) => {
            return Err(CliError::config(format!(
                "unknown --update-on {other:?} (expected own or orig)"
            )))
        }
    };

    let task = ToyTask::random(
        config.rollout.num_questions,
        config.rollout.num_actions,
        &mut seed::rng_for(config.seed, u64::MAX),
    );
    let train_cfg = ToyTrainConfig {
        group_size: config.grpo.group_size,
        temperature: config.rollout.temperature,
        shortcut_strength: 2.0,
        step: StepConfig {
            clip_eps: config.grpo.clip_eps,
            kl_beta: config.grpo.kl_beta,
            guard_eps: config.grpo.guard_eps,
            lr: config.rollout.lr,
            update_on,
        },
    };
    let result = rollout::train_toy(&task, mode, config.rollout.steps, config.seed, &train_cfg)
        .map_err(|e| CliError::config(e.to_string()))?;

    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut buf = Vec::new();
    serde_json::to_writer(&mut buf, &header(&config)).expect("header serialization");
    buf.push(b'\n');
    for row in &result.trace {
        serde_json::to_writer(&mut buf, row).expect("trace row");
        buf.push(b'\n');
    }
    lock.write_all(&buf)
        .map_err(|e| CliError::config(format!("cannot write trace: {e}")))?;

    let last = result.trace.last().expect("nonempty trace");
    eprintln!(
        "trained {} step(s): mean_reward {:.4}, eval_standard {:.4}, eval_vq {:.4}",
        last.step, last.mean_reward, last.eval_standard, last.eval_vq
    );
    Ok(())
}

#[derive(Deserialize)]
struct RewardGroup {
    group_id: String,
    rewards: Vec<f64>,
}

#[derive(Serialize)]
struct AdvantageRow<'a> {
    group_id: &'a str,
    advantages: &'a [f64],
}

fn cmd_advantage(args: AdvantageArgs) -> Result<(), CliError> {
    let mut config = load_config(args.common.config.as_deref())?;
    if let Some(v) = args.guard_eps {
        config.grpo.guard_eps = v;
    }
    if let Some(s) = args.common.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| CliError::config(e.to_string()))?;

    let text = fs::read_to_string(&args.rewards_in)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", args.rewards_in.display())))?;
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &header(&config)).expect("header serialization");
    out.push(b'\n');
    let mut groups = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let group: RewardGroup = serde_json::from_str(line)
            .map_err(|e| CliError::data(format!("line {}: {e}", idx + 1)))?;
        let advantages = grpo::group_advantages(&group.rewards, config.grpo.guard_eps)
            .map_err(|e| CliError::data(format!("line {}: {e}", idx + 1)))?;
        serde_json::to_writer(
            &mut out,
            &AdvantageRow { group_id: &group.group_id, advantages: &advantages },
        )
        .expect("row serialization");
        out.push(b'\n');
        groups += 1;
    }
    fs::write(&args.out, out)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", args.out.display())))?;
    eprintln!("computed advantages for {groups} group(s)");
    Ok(())
}
