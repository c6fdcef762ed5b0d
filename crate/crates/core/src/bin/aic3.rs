use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use aic3::analysis::align::AicMode;
use aic3::analysis::study::{analyze, write_outputs, GranularityChoice};
use aic3::boost::{prepare_store, BoostConfig};
use aic3::design::{generate_design, read_manifests, Design};
use aic3::pipeline::{derived_seed, planted_truth, run_pipeline, verify_run, PipelineConfig, DESIGN_FILE, RESPONSES_FILE};
use aic3::raster::write_atomic;
use aic3::responses::{read_csv, write_csv};
use aic3::service::campaign::log_path;
use aic3::service::http::{serve, AppState};
use aic3::service::{Campaign, CampaignConfig};
use aic3::sim::{simulate_campaign, CampaignSim, GroundTruth, ReliabilityMix};
use aic3::stimulus::Protocol;
use aic3::{Error, Result};

#[derive(Parser)]
#[command(name = "aic3", version, about = "Boosted triplet-comparison studies and JND scale reconstruction")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline TOML file; its sections provide defaults for every subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Btc,
    Ptc,
    Both,
}

impl ProtocolArg {
    fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolArg::Btc => vec![Protocol::Btc],
            ProtocolArg::Ptc => vec![Protocol::Ptc],
            ProtocolArg::Both => Protocol::ALL.to_vec(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the stimulus store (plain, boosted and zoomed reference images).
    Prep {
        #[arg(long)]
        src_dir: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        factor: f64,
        #[arg(long)]
        no_zoom: bool,
        #[arg(long, default_value_t = 3)]
        taps: u32,
    },
    /// Generate a design manifest.
    Design {
        #[arg(long, value_enum, default_value = "both")]
        protocol: ProtocolArg,
        /// Manifest path; defaults to design.jsonl in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a campaign against planted ground truth.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        /// Ground truth JSON; a linear truth is planted when absent.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        workers: usize,
        #[arg(long, default_value_t = 1)]
        batches_per_worker: usize,
        #[arg(long, default_value_t = 0.0)]
        unreliable_fraction: f64,
        /// Response CSV path; defaults to responses.csv in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one protocol's campaign over HTTP.
    Serve {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_enum, default_value = "btc")]
        protocol: ProtocolArg,
        #[arg(long)]
        stimuli: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        max_assignments: Option<usize>,
    },
    /// Reconstruct, align and bootstrap scales from a response export.
    Analyze {
        #[arg(long, num_args = 1.., required = true)]
        design: Vec<PathBuf>,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        bootstrap: Option<usize>,
        /// auto, global, per_source, per_codec or per_pair.
        #[arg(long)]
        granularity: Option<GranularityChoice>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        residual_aic: bool,
    },
    /// Run the stages listed in the config file; `--verify` checks an earlier run.
    Pipeline {
        #[arg(long)]
        verify: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn load_designs(paths: &[PathBuf]) -> Result<Vec<Design>> {
    let mut designs = Vec::new();
    for p in paths {
        let f = fs::File::open(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        designs.extend(read_manifests(BufReader::new(f))?);
    }
    Ok(designs)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    let out = cfg.out_dir.clone();
    let seed = cfg.seed;

    match cli.command {
        Command::Prep {
            src_dir,
            factor,
            no_zoom,
            taps,
        } => {
            let boost = BoostConfig {
                amplification_factor: factor,
                zoom_enabled: !no_zoom,
                lanczos_taps: taps,
            };
            let stimuli = prepare_store(&src_dir, &out, &boost)?;
            println!("prepared {} stimuli in {}", stimuli.len(), out.display());
        }
        Command::Design { protocol, out: path } => {
            let mut dc = cfg.design.clone();
            dc.rng_seed = seed;
            let mut text = String::new();
            for p in protocol.protocols() {
                let d = generate_design(&dc, p)?;
                println!("{p}: {} questions in {} batches", d.len(), d.batches.len());
                text.push_str(&d.manifest_string()?);
            }
            let path = path.unwrap_or_else(|| out.join(DESIGN_FILE));
            fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
            write_atomic(&path, text.as_bytes())?;
            println!("wrote {}", path.display());
        }
        Command::Simulate {
            design,
            truth,
            workers,
            batches_per_worker,
            unreliable_fraction,
            out: path,
        } => {
            let designs = load_designs(&[design])?;
            let truth = match truth {
                Some(p) => serde_json::from_str::<GroundTruth>(&fs::read_to_string(&p)?)?,
                None => planted_truth(&designs, &cfg.simulate),
            };
            let mut rows = Vec::new();
            for d in &designs {
                let sim = CampaignSim {
                    batches_per_worker,
                    mix: ReliabilityMix {
                        unreliable_fraction,
                        unreliable: cfg.simulate.unreliable,
                    },
                    ..CampaignSim::new(workers, derived_seed(seed, d.protocol as u64 + 1))
                };
                rows.extend(simulate_campaign(d, &truth, &sim)?.rows);
            }
            let mut buf = Vec::new();
            write_csv(&mut buf, &rows)?;
            let path = path.unwrap_or_else(|| out.join(RESPONSES_FILE));
            fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
            write_atomic(&path, &buf)?;
            println!("wrote {} responses to {}", rows.len(), path.display());
        }
        Command::Serve {
            design,
            protocol,
            stimuli,
            addr,
            max_assignments,
        } => {
            let [p] = protocol.protocols()[..] else {
                return Err(usage("serve handles one protocol at a time"));
            };
            let design = load_designs(&[design])?
                .into_iter()
                .find(|d| d.protocol == p)
                .ok_or_else(|| usage(format!("manifest holds no {p} questions")))?;
            let mut cc = CampaignConfig::for_protocol(p);
            cc.seed = seed;
            if let Some(m) = max_assignments {
                cc.max_assignments = m;
            }
            fs::create_dir_all(&out)?;
            let campaign = Campaign::with_log(design, cc, &log_path(&out, p))?;
            let state = AppState {
                campaign: Arc::new(campaign),
                stimulus_root: stimuli,
            };
            tokio::runtime::Runtime::new()?.block_on(serve(addr, state))?;
        }
        Command::Analyze {
            design,
            responses,
            bootstrap,
            granularity,
            threshold,
            residual_aic,
        } => {
            let designs = load_designs(&design)?;
            let rows = read_csv(fs::File::open(&responses)?)?;
            let mut ac = cfg.analysis.clone();
            ac.seed = seed;
            if let Some(n) = bootstrap {
                ac.bootstrap_replicates = n;
            }
            if let Some(g) = granularity {
                ac.granularity = g;
            }
            if let Some(t) = threshold {
                ac.threshold = t;
            }
            if residual_aic {
                ac.aic_mode = AicMode::RegressionResidual;
            }
            let result = analyze(&designs, &rows, &ac)?;
            for path in write_outputs(&out, &result, None)? {
                println!("wrote {}", path.display());
            }
            if let Some(a) = &result.alignment {
                println!("alignment granularity: {}", a.granularity);
            }
        }
        Command::Pipeline { verify } => {
            if cli.config.is_none() {
                return Err(usage("pipeline needs --config"));
            }
            if verify {
                let bad = verify_run(&out)?;
                if bad.is_empty() {
                    println!("all outputs match {}", out.join(aic3::pipeline::MANIFEST_FILE).display());
                } else {
                    return Err(usage(format!("modified outputs: {}", bad.join(", "))));
                }
            } else {
                let r = run_pipeline(&cfg)?;
                println!("run {} wrote {} files; manifest {}", r.manifest.run_id, r.outputs.len(), r.manifest_path.display());
            }
        }
    }
    Ok(())
}
