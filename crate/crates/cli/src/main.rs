use std::path::{Path, PathBuf};

use anyhow::Context;
use chatcam_cli::{router, AppState, Config};
use chatcam_core::anchor::load_scene_dir;
use chatcam_core::camera::{CameraFrame, CameraPath, Trajectory};
use chatcam_core::dataset::{generate_dataset, load_jsonl, save_jsonl, TextTrajPair};
use chatcam_core::gpt::{finetune_translation, tokenize_pairs, train_stage1, CineGpt, SamplerParams, Vocab};
use chatcam_core::planner::{compose, evaluate, reconstruction_floor, run_pipeline, Models, PipelineContext, PipelineOptions, Plan, TOKENIZER_FILE};
use chatcam_core::tokenizer::{train_tokenizer, TokenizerModel};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "chatcam", version, about = "Camera trajectories from natural language")]
struct Cli {
    /// Root seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding tokenizer and generator checkpoints.
    #[arg(long, global = true, default_value = "models")]
    model_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Trajectory,
    CameraPath,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic text–trajectory corpus as JSON lines.
    GenData {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the trajectory tokenizer on a corpus.
    TrainTokenizer {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the generator (mixed pretraining, then translation finetuning).
    TrainGpt {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the full pipeline on a query and print the trajectory.
    Generate {
        prompt: String,
        #[arg(long)]
        scene_dir: Option<PathBuf>,
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, value_enum, default_value = "trajectory")]
        format: Format,
    },
    /// Compose trajectory files through anchor frames according to a plan file.
    Compose {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        trajectories: Vec<PathBuf>,
        /// JSON array of camera frames, one per anchor step.
        #[arg(long)]
        anchors: Option<PathBuf>,
    },
    /// Score generated trajectories against a held-out corpus.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        scene_dir: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    };
    match cli.command {
        Command::GenData { n, out } => {
            let pairs = generate_dataset(n, cli.seed, &config.training.dataset)?;
            save_jsonl(&pairs, &out)?;
            tracing::info!(n, path = %out.display(), "corpus written");
        }
        Command::TrainTokenizer { data } => {
            let pairs = load_jsonl(&data)?;
            let trajs: Vec<Trajectory> = pairs.into_iter().map(|p| p.traj).collect();
            let (model, log) = train_tokenizer(&trajs, config.training.tokenizer.clone(), cli.seed)?;
            if let Some(last) = log.epochs.last() {
                tracing::info!(epoch = last.epoch, loss = ?last.mean_loss, "tokenizer trained");
            }
            std::fs::create_dir_all(&cli.model_dir)?;
            model.save(&cli.model_dir.join(TOKENIZER_FILE))?;
        }
        Command::TrainGpt { data } => {
            let pairs = load_jsonl(&data)?;
            let tokenizer = TokenizerModel::load(&cli.model_dir.join(TOKENIZER_FILE))
                .context("train the tokenizer first")?;
            let gpt = train_gpt(&config, &tokenizer, &pairs, cli.seed)?;
            Models::new(tokenizer, gpt)?.save(&cli.model_dir)?;
        }
        Command::Generate { prompt, scene_dir, scene, format } => {
            let models = Models::load(&cli.model_dir)?;
            let scenes = match scene_dir.or(config.service.scene_dir.clone()) {
                Some(d) => load_scene_dir(&d)?,
                None => Vec::new(),
            };
            let scene = match &scene {
                Some(id) => Some(scenes.iter().find(|s| &s.id == id).with_context(|| format!("no scene {id:?}"))?),
                None => None,
            };
            let provider = config.service.embedding.provider()?;
            let ctx = PipelineContext { models: &models, scene, provider: Some(provider.as_ref()), planner: None };
            let opts = PipelineOptions {
                sampler: SamplerParams { seed: cli.seed, ..SamplerParams::greedy() },
                refine: Some(config.service.refine),
            };
            let out = run_pipeline(&prompt, ctx, &opts)?;
            for w in &out.warnings {
                tracing::warn!("{w}");
            }
            print_trajectory(&out.trajectory, format);
        }
        Command::Compose { plan, trajectories, anchors } => {
            let plan = Plan::from_json(&std::fs::read_to_string(&plan)?)?;
            let trajs = trajectories.iter().map(|p| read_trajectory(p)).collect::<anyhow::Result<Vec<_>>>()?;
            let anchors: Vec<CameraFrame> = match anchors {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => Vec::new(),
            };
            println!("{}", compose(&plan, &trajs, &anchors)?.trajectory.to_json());
        }
        Command::Eval { data, json } => {
            let models = Models::load(&cli.model_dir)?;
            let pairs = load_jsonl(&data)?;
            let sampler = SamplerParams { seed: cli.seed, ..SamplerParams::greedy() };
            let report = evaluate(&models, &pairs, &sampler)?;
            let floor = reconstruction_floor(&models.tokenizer, &pairs)?;
            if json {
                println!("{}", report.to_json());
            } else {
                println!("{}", report.table());
                println!("{}", floor.table());
            }
        }
        Command::Serve { listen, scene_dir } => {
            let mut service = config.service.clone();
            if let Some(d) = scene_dir {
                service.scene_dir = Some(d);
            }
            let addr = listen.unwrap_or_else(|| service.listen.clone());
            let state = AppState::from_config(&service, &cli.model_dir)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await?;
                tracing::info!(%addr, "listening");
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

fn train_gpt(config: &Config, tokenizer: &TokenizerModel, pairs: &[TextTrajPair], seed: u64) -> anyhow::Result<CineGpt> {
    let vocab = Vocab::closed(tokenizer.codebook_size());
    let tokenized = tokenize_pairs(&vocab, tokenizer, pairs)?;
    let gpt_config = config.training.gpt_profile.config(vocab.size());
    let mut gpt = CineGpt::new(vocab, gpt_config, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let log = train_stage1(&mut gpt.model, &tokenized, &config.training.stage1, seed.wrapping_add(1))?;
    tracing::info!(loss = log.losses.last().copied().unwrap_or(f64::NAN), "pretraining done");
    let log = finetune_translation(&mut gpt.model, &tokenized, &config.training.finetune, seed.wrapping_add(2))?;
    tracing::info!(loss = log.losses.last().copied().unwrap_or(f64::NAN), "finetuning done");
    Ok(gpt)
}

/// Accepts either trajectory JSON or a camera-path export.
fn read_trajectory(path: &Path) -> anyhow::Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    match Trajectory::from_json(&text) {
        Ok(t) => Ok(t),
        Err(_) => Ok(CameraPath::from_json(&text)?.to_trajectory()?),
    }
}

fn print_trajectory(traj: &Trajectory, format: Format) {
    match format {
        Format::Trajectory => println!("{}", traj.to_json()),
        Format::CameraPath => println!("{}", CameraPath::from_trajectory(traj).to_json()),
    }
}
