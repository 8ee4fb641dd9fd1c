//! `tog`: retrieve a remembered grasp, align it onto a scene and pick the
//! best candidate grasp for the task.

mod commands;
mod config;
mod error;
mod ply;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tog_core::evaluation::Split;
use tog_core::retrieval::Exclusion;

use commands::{IngestArgs, PipelineInput};
use config::{AlignFlags, Settings, TransferFlags};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "tog",
    version,
    about = "Task-oriented grasp transfer from a memory of demonstrations"
)]
struct Cli {
    /// TOML file with [alignment] and [transfer] sections
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for stochastic baselines
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Only report errors on stderr
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    All,
    HeldOutObjects,
    HeldOutTasks,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::All => Split::All,
            SplitArg::HeldOutObjects => Split::HeldOutObjects,
            SplitArg::HeldOutTasks => Split::HeldOutTasks,
        }
    }
}

#[derive(Debug, clap::Args)]
struct ExcludeFlags {
    /// Skip memory instances of this object (repeatable)
    #[arg(long, value_name = "NAME")]
    exclude_object: Vec<String>,
    /// Skip memory instances for this task (repeatable)
    #[arg(long, value_name = "NAME")]
    exclude_task: Vec<String>,
}

impl ExcludeFlags {
    fn exclusion(&self) -> Exclusion {
        Exclusion {
            objects: self.exclude_object.clone(),
            tasks: self.exclude_task.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add demonstrations to a memory store
    Ingest {
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        /// JSON list of entries to ingest
        #[arg(long, value_name = "FILE", conflicts_with_all = ["cloud", "task_embedding", "object_name", "task", "grasp", "hand"])]
        fragment: Option<PathBuf>,
        /// Object feature cloud (FCLD)
        #[arg(long, value_name = "FILE")]
        cloud: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        task_embedding: Option<PathBuf>,
        #[arg(long, value_name = "NAME")]
        object_name: Option<String>,
        #[arg(long, value_name = "NAME")]
        task: Option<String>,
        /// Gripper pose JSON in the cloud's frame
        #[arg(long, value_name = "FILE", conflicts_with = "hand")]
        grasp: Option<PathBuf>,
        /// Hand segment clouds: thumb, index finger, middle finger, palm
        #[arg(long, num_args = 4, value_names = ["THUMB", "INDEX", "MIDDLE", "PALM"])]
        hand: Option<Vec<PathBuf>>,
    },
    /// Find the memory instance that best matches a scene and task
    Retrieve {
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        #[arg(long, value_name = "FILE")]
        scene_cloud: PathBuf,
        #[arg(long, value_name = "FILE")]
        task_embedding: PathBuf,
        #[command(flatten)]
        exclude: ExcludeFlags,
    },
    /// Register a memory cloud onto a scene cloud
    Align {
        #[arg(long, value_name = "FILE")]
        memory_cloud: PathBuf,
        #[arg(long, value_name = "FILE")]
        scene_cloud: PathBuf,
        /// Also write the transformed memory cloud (FCLD)
        #[arg(long, value_name = "FILE")]
        out_cloud: Option<PathBuf>,
        #[command(flatten)]
        align: AlignFlags,
    },
    /// Carry a memory grasp through an alignment and rank candidate grasps
    Transfer {
        #[arg(long, value_name = "FILE")]
        memory_grasp: PathBuf,
        /// Output of `tog align`
        #[arg(long, value_name = "FILE")]
        alignment: PathBuf,
        #[arg(long, value_name = "FILE")]
        candidates: PathBuf,
        #[command(flatten)]
        transfer: TransferFlags,
    },
    /// Average precision over a labeled scene set
    Eval {
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        /// Scene manifest JSON
        #[arg(long, value_name = "FILE")]
        scenes: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        /// Write the full report here and print a summary
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Draws of the random-score baseline
        #[arg(long, value_name = "N", default_value_t = 1000)]
        random_trials: usize,
        #[command(flatten)]
        align: AlignFlags,
        #[command(flatten)]
        transfer: TransferFlags,
    },
    /// Write a cloud as PLY coloured by its top three feature components
    VizExport {
        #[arg(long, value_name = "FILE")]
        cloud: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Further clouds to include in the PCA fit (repeatable)
        #[arg(long, value_name = "FILE")]
        fit_with: Vec<PathBuf>,
    },
    /// Retrieve, align, transfer and select for one scene or a scene manifest
    Pipeline {
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        #[arg(
            long,
            value_name = "FILE",
            required_unless_present = "scenes",
            conflicts_with = "scenes"
        )]
        scene_cloud: Option<PathBuf>,
        #[arg(long, value_name = "FILE", required_unless_present = "scenes")]
        task_embedding: Option<PathBuf>,
        #[arg(long, value_name = "FILE", required_unless_present = "scenes")]
        candidates: Option<PathBuf>,
        /// Task name of the scene
        #[arg(long, value_name = "NAME", default_value = "")]
        task: String,
        /// Scene manifest JSON; each entry needs a candidates file
        #[arg(long, value_name = "FILE")]
        scenes: Option<PathBuf>,
        /// Held-out split applied per manifest entry
        #[arg(long, value_enum, default_value = "all", requires = "scenes")]
        split: SplitArg,
        /// Include per-stage timings in the output (breaks byte-identical output)
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        exclude: ExcludeFlags,
        #[command(flatten)]
        align: AlignFlags,
        #[command(flatten)]
        transfer: TransferFlags,
    },
}

fn settings(cli: &Cli, align: &AlignFlags, transfer: &TransferFlags) -> Result<Settings, CliError> {
    Settings::resolve(cli.config.as_deref(), cli.seed, align, transfer)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let none = (AlignFlags::default(), TransferFlags::default());
    match &cli.command {
        Command::Ingest {
            store,
            fragment,
            cloud,
            task_embedding,
            object_name,
            task,
            grasp,
            hand,
        } => {
            settings(&cli, &none.0, &none.1)?;
            let hand = hand
                .as_ref()
                .map(|h| [h[0].clone(), h[1].clone(), h[2].clone(), h[3].clone()]);
            commands::run_ingest(IngestArgs {
                store: store.clone(),
                fragment: fragment.clone(),
                cloud: cloud.clone(),
                task_embedding: task_embedding.clone(),
                object_name: object_name.clone(),
                task: task.clone(),
                grasp: grasp.clone(),
                hand,
            })
        }
        Command::Retrieve {
            store,
            scene_cloud,
            task_embedding,
            exclude,
        } => {
            settings(&cli, &none.0, &none.1)?;
            commands::run_retrieve(store, scene_cloud, task_embedding, &exclude.exclusion())
        }
        Command::Align {
            memory_cloud,
            scene_cloud,
            out_cloud,
            align,
        } => commands::run_align(
            memory_cloud,
            scene_cloud,
            out_cloud.as_deref(),
            &settings(&cli, align, &none.1)?,
        ),
        Command::Transfer {
            memory_grasp,
            alignment,
            candidates,
            transfer,
        } => commands::run_transfer(memory_grasp, alignment, candidates, &settings(&cli, &none.0, transfer)?),
        Command::Eval {
            store,
            scenes,
            split,
            out,
            random_trials,
            align,
            transfer,
        } => commands::run_eval(
            store,
            scenes,
            (*split).into(),
            out.as_deref(),
            *random_trials,
            &settings(&cli, align, transfer)?,
        ),
        Command::VizExport { cloud, out, fit_with } => {
            settings(&cli, &none.0, &none.1)?;
            commands::run_viz_export(cloud, fit_with, out)
        }
        Command::Pipeline {
            store,
            scene_cloud,
            task_embedding,
            candidates,
            task,
            scenes,
            split,
            timings,
            exclude,
            align,
            transfer,
        } => {
            let s = settings(&cli, align, transfer)?;
            let input = match scenes {
                Some(scenes) => PipelineInput::Batch {
                    scenes: scenes.clone(),
                    split: (*split).into(),
                },
                None => PipelineInput::Single {
                    // presence is enforced by clap
                    scene_cloud: scene_cloud.clone().expect("scene cloud"),
                    task_embedding: task_embedding.clone().expect("task embedding"),
                    candidates: candidates.clone().expect("candidates"),
                    task: task.clone(),
                    exclusion: exclude.exclusion(),
                },
            };
            commands::run_pipeline(store, input, &s, *timings)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("TOG_LOG")
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
