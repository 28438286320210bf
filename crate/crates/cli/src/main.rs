//! distillforge: synthesis pipelines, guided-decoding demos, and dataset
//! tooling behind one binary.
//!
//! Exit codes: 0 success, 1 run or validation failure, 2 usage/config error.

use clap::{Parser, Subcommand, ValueEnum};
use distillforge_core::config::RunConfig;
use distillforge_core::guidance::{
    decode_t2i_traced, decode_ti2i_traced, GuidanceParams, StepTrace,
};
use distillforge_core::jobs::plan_run;
use distillforge_core::manifest::{compute_stats, validate_manifest, StatsTargets};
use distillforge_core::orchestrator::{resume, run, RunError, RunReport};
use distillforge_core::rng::RngState;
use distillforge_core::taxonomy::EditTaxonomy;
use distillforge_core::tokens::{EmbeddingHandle, TokenRole, TokenSeq};
use distillforge_core::toy::ToyModel;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "distillforge",
    version,
    about = "Distillation-data synthesis pipelines and guided-sampling tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DemoMode {
    T2i,
    Ti2i,
}

#[derive(Subcommand)]
enum Command {
    /// Plan and run a synthesis job set against the configured backends.
    Synthesize {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Continue a previous run from its journal instead of starting fresh.
        #[arg(long)]
        resume: bool,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the config worker-pool size.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Decode image tokens with the toy backend and print the result.
    DecodeDemo {
        /// t2i: prompt conditioning only; ti2i: prompt + input image + embedding.
        #[arg(long, value_enum, default_value = "t2i")]
        mode: DemoMode,
        /// Guidance scale s.
        #[arg(long, default_value_t = 5.0)]
        s: f64,
        /// Input-image adherence scale s' (ti2i only).
        #[arg(long = "s-prime", default_value_t = 5.0)]
        s_prime: f64,
        /// Sampling temperature.
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Number of image tokens to generate.
        #[arg(long, default_value_t = 16)]
        n_tokens: usize,
        /// Sampling seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Toy-model table seed.
        #[arg(long, default_value_t = 7)]
        model_seed: u64,
        /// Toy vocabulary size.
        #[arg(long, default_value_t = 16)]
        vocab_size: usize,
        /// Print per-step branch logits and blends.
        #[arg(long)]
        trace: bool,
    },
    /// Summarize a manifest: counts, target distances, duplicates.
    Stats {
        manifest: PathBuf,
        /// Machine-readable JSON instead of the table.
        #[arg(long)]
        json: bool,
        /// Run config supplying target distributions.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Accepted for interface uniformity; stats consume no randomness.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a manifest; exits 0 only when no violations are found.
    Validate {
        manifest: PathBuf,
        /// Taxonomy file; defaults to the bundled taxonomy.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Machine-readable JSON violations.
        #[arg(long)]
        json: bool,
        /// Accepted for interface uniformity; validation consumes no randomness.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Synthesize {
            config,
            resume,
            seed,
            output_dir,
            parallelism,
        } => cmd_synthesize(&config, resume, seed, output_dir, parallelism),
        Command::DecodeDemo {
            mode,
            s,
            s_prime,
            temperature,
            n_tokens,
            seed,
            model_seed,
            vocab_size,
            trace,
        } => cmd_decode_demo(mode, s, s_prime, temperature, n_tokens, seed, model_seed, vocab_size, trace),
        Command::Stats {
            manifest,
            json,
            config,
            seed: _,
        } => cmd_stats(&manifest, json, config.as_deref()),
        Command::Validate {
            manifest,
            taxonomy,
            json,
            seed: _,
        } => cmd_validate(&manifest, taxonomy.as_deref(), json),
    }
}

fn config_error(err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(2)
}

fn run_error(err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(1)
}

fn cmd_synthesize(
    config_path: &std::path::Path,
    do_resume: bool,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    parallelism: Option<usize>,
) -> ExitCode {
    let mut config = match RunConfig::from_file(config_path) {
        Ok(c) => c,
        Err(err) => return config_error(err),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    if let Some(parallelism) = parallelism {
        config.parallelism = parallelism;
    }
    if let Err(err) = config.validate() {
        return config_error(err);
    }

    // Resource/plan assembly problems are configuration errors (exit 2);
    // failures after the run starts are run errors (exit 1).
    let prepared = (|| -> Result<_, anyhow::Error> {
        let vocabulary = config.load_vocabulary()?;
        let decay = config.decay()?;
        let taxonomy = config.load_taxonomy()?;
        let curated = config.prepare_curated_pool()?;
        let plan = plan_run(&config.plan_inputs(&vocabulary, &decay, &taxonomy, curated))?;
        let backends = config.build_backends()?;
        let opts = config.run_options()?;
        Ok((plan, backends, opts))
    })();
    let (plan, backends, opts) = match prepared {
        Ok(p) => p,
        Err(err) => return config_error(err),
    };

    let journal = config.journal_path();
    let manifest = config.manifest_path();
    let outcome = if do_resume {
        resume(&journal, &plan, &backends, &manifest, &opts)
    } else {
        run(&plan, &backends, &journal, &manifest, &opts)
    };
    let report: RunReport = match outcome {
        Ok(report) => report,
        Err(RunError::JournalExists(path)) => {
            return config_error(format!(
                "journal {} already exists; pass --resume to continue that run",
                path.display()
            ));
        }
        Err(err @ RunError::UnknownJobs(_)) => return config_error(err),
        Err(err) => return run_error(err),
    };

    print!("{}", report.render_table());
    let stats = compute_stats(&config.manifest_path(), &config.stats_targets);
    match stats {
        Ok(stats) => {
            print!("{}", stats.render_table());
            let stats_path = config.output_dir.join("stats.json");
            if let Ok(json) = serde_json::to_string_pretty(&stats) {
                let _ = std::fs::write(&stats_path, json + "\n");
                println!("stats written to {}", stats_path.display());
            }
        }
        Err(err) => eprintln!("warning: stats unavailable: {err}"),
    }
    if report.all_done() {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: {} job(s) failed; see journal for details", report.failed);
        ExitCode::from(1)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_decode_demo(
    mode: DemoMode,
    s: f64,
    s_prime: f64,
    temperature: f64,
    n_tokens: usize,
    seed: u64,
    model_seed: u64,
    vocab_size: usize,
    trace: bool,
) -> ExitCode {
    let params = GuidanceParams {
        s,
        s_prime,
        temperature,
    };
    if let Err(err) = params.validate() {
        return config_error(err);
    }
    if vocab_size < 6 {
        return config_error("vocab size must be at least 6 for the demo sequences");
    }
    let backend = ToyModel::new(vocab_size, 0, model_seed);
    let vocab = vocab_size as u32;
    let prompt = TokenSeq::new(vec![1, 2, 3], TokenRole::Prompt, 0, vocab)
        .expect("demo prompt fits any vocab >= 6");
    let mut rng = RngState::new(seed);

    let outcome = match mode {
        DemoMode::T2i => decode_t2i_traced(&backend, &prompt, &params, n_tokens, &mut rng, trace),
        DemoMode::Ti2i => {
            let input = TokenSeq::new(vec![4, 5], TokenRole::InputImage, 0, vocab)
                .expect("demo input image fits any vocab >= 6");
            decode_ti2i_traced(
                &backend,
                &prompt,
                &input,
                EmbeddingHandle(42),
                &params,
                n_tokens,
                &mut rng,
                trace,
            )
        }
    };
    let (tokens, traces) = match outcome {
        Ok(pair) => pair,
        Err(err) => return run_error(err),
    };

    println!(
        "mode={} s={} s_prime={} temperature={} n_tokens={} seed={} model_seed={}",
        match mode {
            DemoMode::T2i => "t2i",
            DemoMode::Ti2i => "ti2i",
        },
        s,
        s_prime,
        temperature,
        n_tokens,
        seed,
        model_seed,
    );
    print_token_grid(tokens.tokens());
    if trace {
        for step in &traces {
            print_trace(step);
        }
    }
    ExitCode::SUCCESS
}

fn print_token_grid(tokens: &[u32]) {
    let side = (tokens.len() as f64).sqrt() as usize;
    let width = if side * side == tokens.len() && side > 0 {
        side
    } else {
        tokens.len().max(1)
    };
    for row in tokens.chunks(width) {
        let cells: Vec<String> = row.iter().map(|t| format!("{t:>4}")).collect();
        println!("{}", cells.join(" "));
    }
}

fn print_trace(step: &StepTrace) {
    println!("step {}: chosen={}", step.step, step.chosen);
    println!("  l_c       = {:?}", step.l_c);
    if let Some(l_o) = &step.l_o {
        println!("  l_o       = {l_o:?}");
    }
    println!("  l_u       = {:?}", step.l_u);
    if let Some(l_c_prime) = &step.l_c_prime {
        println!("  l_c_prime = {l_c_prime:?}");
    }
    println!("  l_g       = {:?}", step.l_g);
}

fn cmd_stats(
    manifest: &std::path::Path,
    json: bool,
    config: Option<&std::path::Path>,
) -> ExitCode {
    let targets = match config {
        Some(path) => match RunConfig::from_file(path) {
            Ok(c) => c.stats_targets,
            Err(err) => return config_error(err),
        },
        None => StatsTargets::default(),
    };
    match compute_stats(manifest, &targets) {
        Ok(stats) => {
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&stats).expect("stats serialize")
                );
            } else {
                print!("{}", stats.render_table());
            }
            ExitCode::SUCCESS
        }
        Err(err) => run_error(err),
    }
}

fn cmd_validate(
    manifest: &std::path::Path,
    taxonomy: Option<&std::path::Path>,
    json: bool,
) -> ExitCode {
    let taxonomy = match taxonomy {
        Some(path) => match EditTaxonomy::load(path) {
            Ok(t) => t,
            Err(err) => return config_error(err),
        },
        None => EditTaxonomy::bundled(),
    };
    match validate_manifest(manifest, &taxonomy) {
        Ok(violations) if violations.is_empty() => {
            if json {
                println!("[]");
            } else {
                println!("manifest valid");
            }
            ExitCode::SUCCESS
        }
        Ok(violations) => {
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&violations).expect("violations serialize")
                );
            } else {
                for v in &violations {
                    match &v.record_id {
                        Some(id) => println!("line {} [{}]: {}", v.line, id, v.message),
                        None => println!("line {}: {}", v.line, v.message),
                    }
                }
            }
            ExitCode::from(1)
        }
        Err(err) => run_error(err),
    }
}
