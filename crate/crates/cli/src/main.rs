use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flexid::cag::{schedule_for_intent, GatingConfig};
use flexid::experiment::{evaluate, load_grid, load_run_config, EvalReport, RunConfig, SweepRunner};
use flexid::export::{report_csv, schedule_csv, summary_csv, trace_csv, write_text};
use flexid::harness::pipeline::{flexid_generate, PipelineOptions};
use flexid::harness::sampler::SamplerConfig;
use flexid::harness::{load_checkpoint, save_checkpoint, train};
use flexid::intent::{detect_intent, normalize_prompt, EditDictionary};
use flexid::metrics::{attr_adherence, id_similarity};
use flexid::vfa::ReferenceSpec;
use flexid::{Error, Result};

/// Identity-preserving generation with intent- and time-gated identity
/// streams, on a synthetic world.
#[derive(Parser)]
#[command(name = "flexid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a stack from a run configuration and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate one sample and write its per-step trace.
    Generate(GenerateArgs),
    /// Write the per-step gating schedule for a prompt.
    Schedule(ScheduleArgs),
    /// Run a grid of configurations and write the per-run report.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-configuration means and standard deviations.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Directory for trained checkpoints, reused across sweeps.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Evaluate one run configuration on an existing checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Validate a dictionary and report the intent of sample prompts.
    DictCheck {
        #[arg(long)]
        dict: Option<PathBuf>,
        prompts: Vec<String>,
    },
}

#[derive(Args)]
struct GatingArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha_base: f64,
    #[arg(long, default_value_t = 1.0)]
    w_base: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda_up: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda_down: f64,
}

impl GatingArgs {
    fn config(&self) -> GatingConfig {
        GatingConfig {
            alpha_base: self.alpha_base,
            w_base: self.w_base,
            lambda_up: self.lambda_up,
            lambda_down: self.lambda_down,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    prompt: String,
    /// Identity index, `held-out` or `novel:<seed>`.
    #[arg(long = "ref", default_value = "held-out")]
    reference: ReferenceSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_sip: bool,
    #[arg(long)]
    no_cag: bool,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    steps: usize,
    #[arg(long, default_value_t = 4.0)]
    guidance: f64,
    #[command(flatten)]
    gating: GatingArgs,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    prompt: String,
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gating: GatingArgs,
}

fn dictionary(path: &Option<PathBuf>) -> Result<EditDictionary> {
    match path {
        Some(p) => EditDictionary::load(p),
        None => Ok(EditDictionary::default_dictionary()),
    }
}

fn write_report(report: &EvalReport, out: &Path, summary: &Option<PathBuf>) -> Result<()> {
    write_text(out, &report_csv(report))?;
    if let Some(s) = summary {
        write_text(s, &summary_csv(report))?;
    }
    for a in &report.aggregates {
        let fmt = |s: Option<flexid::experiment::Stat>| s.map_or("-".to_string(), |s| format!("{:.4}", s.mean));
        println!(
            "{:>3} {:<24} runs {:>3} failed {:>3} id_sim {} attr_adherence {}",
            a.config_id,
            a.name,
            a.runs,
            a.failed,
            fmt(a.id_sim),
            fmt(a.attr_adherence)
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = load_run_config(&config)?;
            let stack = train(&cfg.world, &cfg.arch, &cfg.train)?;
            save_checkpoint(&stack, &out)?;
            println!(
                "trained {} steps, loss {:.6} -> {:.6}, config hash {}",
                stack.meta.steps,
                stack.meta.initial_loss.unwrap_or(f64::NAN),
                stack.meta.final_loss.unwrap_or(f64::NAN),
                stack.meta.config_hash
            );
        }
        Command::Generate(a) => {
            let stack = load_checkpoint(&a.ckpt)?;
            let dict = dictionary(&a.dict)?;
            let prompt = normalize_prompt(&a.prompt);
            let reference = stack.reference(a.reference)?;
            let opts = PipelineOptions {
                sip_enabled: !a.no_sip,
                cag_enabled: !a.no_cag,
                sampler: SamplerConfig { steps: a.steps, guidance: a.guidance, ..Default::default() },
            };
            let trace = flexid_generate(&stack, &reference, &prompt, &a.gating.config(), &dict, &opts, a.seed)?;
            write_text(&a.trace, &trace_csv(&trace))?;
            let id = id_similarity(&trace.final_sample, &reference.feature, stack.world.similarity_scale())?;
            print!("id_sim {id:.6}");
            if let Some(attr) = stack.world.attribute_for_prompt(&prompt) {
                let ad = attr_adherence(&trace.final_sample, &reference.feature, &stack.world.offsets[attr])?;
                print!(" attr_adherence {ad:.6}");
            }
            println!();
        }
        Command::Schedule(a) => {
            let dict = dictionary(&a.dict)?;
            let intent = detect_intent(&normalize_prompt(&a.prompt), &dict);
            let schedule = schedule_for_intent(&a.gating.config(), &intent, a.steps)?;
            write_text(&a.out, &schedule_csv(&schedule))?;
            println!("indicator {} over {} steps", intent.indicator, a.steps);
        }
        Command::Sweep { grid, out, summary, cache_dir } => {
            let configs = load_grid(&grid)?;
            let report = SweepRunner::new(cache_dir).run(&configs);
            write_report(&report, &out, &summary)?;
        }
        Command::Eval { ckpt, config, out, summary } => {
            let stack = load_checkpoint(&ckpt)?;
            let cfg: RunConfig = load_run_config(&config)?;
            if cfg.stack_hash() != stack.meta.config_hash {
                return Err(Error::Validation(format!(
                    "checkpoint was trained from config {} but the run config hashes to {}",
                    stack.meta.config_hash,
                    cfg.stack_hash()
                )));
            }
            let report = EvalReport::from_records(evaluate(&stack, &cfg, 0)?);
            write_report(&report, &out, &summary)?;
        }
        Command::DictCheck { dict, prompts } => {
            let d = dictionary(&dict)?;
            println!("{} entries", d.entries().len());
            for p in prompts {
                let intent = detect_intent(&normalize_prompt(&p), &d);
                let matched: Vec<String> =
                    intent.matches.iter().map(|m| format!("{} ({})", m.phrase, m.category)).collect();
                println!("{}\t{}\t{}", intent.indicator, p, matched.join(", "));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
