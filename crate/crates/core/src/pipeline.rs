//! Declarative runs: prep → design → simulate → analyze from one TOML file,
//! with a run manifest hashing every input and output.
//!
//! ```toml
//! seed = 7
//! out_dir = "run"
//! stages = ["design", "simulate", "analyze"]
//!
//! [design]
//! n_batches = 10
//!
//! [simulate]
//! workers = { btc = 60, ptc = 60 }
//!
//! [analysis]
//! bootstrap_replicates = 1000
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::study::{analyze, write_outputs, AnalysisConfig};
use crate::boost::{prepare_store, BoostConfig};
use crate::design::{generate_design, read_manifests, Design, DesignConfig};
use crate::error::{Error, Result};
use crate::raster::write_atomic;
use crate::responses::{read_csv, write_csv, ResponseRow};
use crate::sim::{simulate_campaign, BoostGain, CampaignSim, GroundTruth, ObserverProfile, ReliabilityMix};
use crate::stimulus::Protocol;

pub const MANIFEST_FILE: &str = "run.json";
pub const DESIGN_FILE: &str = "design.jsonl";
pub const RESPONSES_FILE: &str = "responses.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const STIMULI_DIR: &str = "stimuli";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Prep,
    Design,
    Simulate,
    Analyze,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Prep => "prep",
            Stage::Design => "design",
            Stage::Simulate => "simulate",
            Stage::Analyze => "analyze",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepConfig {
    /// Decoded images as `<source>/<codec>/<level>.png`.
    pub src_dir: PathBuf,
    #[serde(default)]
    pub boost: BoostConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Ground truth file; when absent a linear truth is planted.
    pub truth: Option<PathBuf>,
    pub jnd_per_level: f64,
    pub gain: BoostGain,
    pub not_sure_band: f64,
    pub workers: BTreeMap<Protocol, usize>,
    pub batches_per_worker: usize,
    pub unreliable_fraction: f64,
    pub unreliable: ObserverProfile,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            truth: None,
            jnd_per_level: 0.25,
            gain: BoostGain { a: 2.0, b: 0.0 },
            not_sure_band: 0.2,
            workers: [(Protocol::Btc, 60), (Protocol::Ptc, 60)].into(),
            batches_per_worker: 1,
            unreliable_fraction: 0.0,
            unreliable: ObserverProfile::uniform(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub protocols: Vec<Protocol>,
    pub prep: Option<PrepConfig>,
    pub design: DesignConfig,
    /// Existing manifest, used when the design stage is not run.
    pub design_manifest: Option<PathBuf>,
    pub simulate: SimulateConfig,
    /// Existing response export, used when the simulate stage is not run.
    pub responses: Option<PathBuf>,
    pub analysis: AnalysisConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: PathBuf::from("run"),
            stages: vec![Stage::Design, Stage::Simulate, Stage::Analyze],
            protocols: Protocol::ALL.to_vec(),
            prep: None,
            design: DesignConfig::paper(),
            design_manifest: None,
            simulate: SimulateConfig::default(),
            responses: None,
            analysis: AnalysisConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parse a TOML config, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| stage_err("config", path, e.into()))?;
        let mut cfg: PipelineConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(prep) = self.prep.as_mut() {
            fix(&mut prep.src_dir);
        }
        if let Some(p) = self.design_manifest.as_mut() {
            fix(p);
        }
        if let Some(p) = self.simulate.truth.as_mut() {
            fix(p);
        }
        if let Some(p) = self.responses.as_mut() {
            fix(p);
        }
    }

    fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Check stage order and every referenced input before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("no stages requested"));
        }
        if self.stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("stages must be listed once each, in prep, design, simulate, analyze order"));
        }
        if self.protocols.is_empty() {
            return Err(Error::invalid("no protocols selected"));
        }
        let must_exist = |what: &str, p: &Path, dir: bool| -> Result<()> {
            let ok = if dir { p.is_dir() } else { p.is_file() };
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} {} does not exist", p.display())))
            }
        };
        if self.runs(Stage::Prep) {
            let prep = self.prep.as_ref().ok_or_else(|| Error::invalid("prep stage needs a [prep] section"))?;
            must_exist("prep source directory", &prep.src_dir, true)?;
            prep.boost.validate()?;
        }
        let needs_design = self.runs(Stage::Simulate) || self.runs(Stage::Analyze);
        if self.runs(Stage::Design) {
            self.design.validate()?;
        } else if needs_design {
            let p = self
                .design_manifest
                .as_ref()
                .ok_or_else(|| Error::invalid("design_manifest is required when the design stage is skipped"))?;
            must_exist("design manifest", p, false)?;
        }
        if self.runs(Stage::Simulate) {
            if let Some(t) = &self.simulate.truth {
                must_exist("ground truth", t, false)?;
            }
            for p in &self.protocols {
                if self.simulate.workers.get(p).copied().unwrap_or(0) == 0 {
                    return Err(Error::invalid(format!("no simulated workers for {p}")));
                }
            }
        }
        if self.runs(Stage::Analyze) {
            if !self.runs(Stage::Simulate) {
                let p = self
                    .responses
                    .as_ref()
                    .ok_or_else(|| Error::invalid("responses is required when the simulate stage is skipped"))?;
                must_exist("responses", p, false)?;
            }
            self.analysis.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory for outputs, as given for inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn stage_err(stage: &str, input: &Path, e: Error) -> Error {
    Error::Stage {
        stage: stage.to_string(),
        input: input.display().to_string(),
        source: Box::new(e),
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn digest_inputs(cfg: &PipelineConfig) -> Result<Vec<FileDigest>> {
    let mut files = Vec::new();
    if cfg.runs(Stage::Prep) {
        if let Some(prep) = &cfg.prep {
            collect_files(&prep.src_dir, &mut files)?;
        }
    }
    if !cfg.runs(Stage::Design) {
        files.extend(cfg.design_manifest.clone());
    }
    if cfg.runs(Stage::Simulate) {
        files.extend(cfg.simulate.truth.clone());
    } else if cfg.runs(Stage::Analyze) {
        files.extend(cfg.responses.clone());
    }
    files
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Identifier of a run: hash of the effective config and input digests.
pub fn run_id(cfg: &PipelineConfig, inputs: &[FileDigest]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg)?);
    for d in inputs {
        h.update(d.path.as_bytes());
        h.update(d.sha256.as_bytes());
    }
    Ok(hex::encode(&h.finalize()[..8]))
}

/// Seed of one protocol's simulation, derived from the run seed.
pub fn derived_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub outputs: Vec<PathBuf>,
}

/// Default ground truth of the simulate stage, covering every source and
/// codec named in `designs`.
pub fn planted_truth(designs: &[Design], sim: &SimulateConfig) -> GroundTruth {
    let mut sources = BTreeSet::new();
    let mut codecs = BTreeSet::new();
    for q in designs.iter().flat_map(Design::questions) {
        sources.insert(q.source_id.clone());
        for s in [&q.left, &q.right] {
            if s.level > 0 {
                codecs.insert(s.codec_id.clone());
            }
        }
    }
    let sources: Vec<String> = sources.into_iter().collect();
    let codecs: Vec<String> = codecs.into_iter().collect();
    GroundTruth::linear(&sources, &codecs, sim.jnd_per_level)
        .with_uniform_gain(sim.gain)
        .with_not_sure_band(sim.not_sure_band)
}

/// Run the configured stages in order. Outputs of a stage are written before
/// the next stage reads them back from disk.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    let inputs = digest_inputs(cfg)?;
    let id = run_id(cfg, &inputs)?;
    log::info!("run {id} into {}", out.display());
    let mut outputs: Vec<PathBuf> = Vec::new();

    if cfg.runs(Stage::Prep) {
        let prep = cfg.prep.as_ref().expect("validated");
        let stimuli_dir = out.join(STIMULI_DIR);
        prepare_store(&prep.src_dir, &stimuli_dir, &prep.boost).map_err(|e| stage_err("prep", &prep.src_dir, e))?;
        collect_files(&stimuli_dir, &mut outputs)?;
    }

    let design_path = if cfg.runs(Stage::Design) {
        let mut design_cfg = cfg.design.clone();
        design_cfg.rng_seed = cfg.seed;
        let mut text = String::new();
        for &p in &cfg.protocols {
            let d = generate_design(&design_cfg, p).map_err(|e| stage_err("design", Path::new("config"), e))?;
            text.push_str(&d.manifest_string()?);
        }
        let path = out.join(DESIGN_FILE);
        write_atomic(&path, text.as_bytes())?;
        outputs.push(path.clone());
        path
    } else {
        cfg.design_manifest.clone().expect("validated")
    };
    let load_designs = |stage: &str| -> Result<Vec<Design>> {
        let f = fs::File::open(&design_path).map_err(|e| stage_err(stage, &design_path, e.into()))?;
        let designs = read_manifests(BufReader::new(f)).map_err(|e| stage_err(stage, &design_path, e))?;
        Ok(designs.into_iter().filter(|d| cfg.protocols.contains(&d.protocol)).collect())
    };

    let responses_path = if cfg.runs(Stage::Simulate) {
        let designs = load_designs("simulate")?;
        let truth = match &cfg.simulate.truth {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| stage_err("simulate", p, e.into()))?;
                serde_json::from_str::<GroundTruth>(&text).map_err(|e| stage_err("simulate", p, e.into()))?
            }
            None => planted_truth(&designs, &cfg.simulate),
        };
        let truth_path = out.join(TRUTH_FILE);
        write_atomic(&truth_path, &serde_json::to_vec_pretty(&truth)?)?;
        outputs.push(truth_path);
        let mut rows: Vec<ResponseRow> = Vec::new();
        for d in &designs {
            let sim = CampaignSim {
                batches_per_worker: cfg.simulate.batches_per_worker,
                mix: ReliabilityMix {
                    unreliable_fraction: cfg.simulate.unreliable_fraction,
                    unreliable: cfg.simulate.unreliable,
                },
                ..CampaignSim::new(cfg.simulate.workers[&d.protocol], derived_seed(cfg.seed, d.protocol as u64 + 1))
            };
            let campaign = simulate_campaign(d, &truth, &sim).map_err(|e| stage_err("simulate", &design_path, e))?;
            rows.extend(campaign.rows);
        }
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows)?;
        let path = out.join(RESPONSES_FILE);
        write_atomic(&path, &buf)?;
        outputs.push(path.clone());
        Some(path)
    } else {
        cfg.responses.clone()
    };

    if cfg.runs(Stage::Analyze) {
        let designs = load_designs("analyze")?;
        let rpath = responses_path.expect("validated");
        let f = fs::File::open(&rpath).map_err(|e| stage_err("analyze", &rpath, e.into()))?;
        let rows = read_csv(f).map_err(|e| stage_err("analyze", &rpath, e))?;
        let mut acfg = cfg.analysis.clone();
        acfg.seed = cfg.seed;
        let result = analyze(&designs, &rows, &acfg).map_err(|e| stage_err("analyze", &rpath, e))?;
        outputs.extend(write_outputs(out, &result, Some(&id))?);
    }

    let digests = outputs
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: relative_to(p, out),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        run_id: id,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        stages: cfg.stages.clone(),
        config: cfg.clone(),
        inputs,
        outputs: digests,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&manifest_path, &json)?;
    Ok(PipelineResult {
        manifest,
        manifest_path,
        outputs,
    })
}

fn relative_to(p: &Path, base: &Path) -> String {
    let rel = p.strip_prefix(base).unwrap_or(p);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Output files whose content no longer matches the run manifest, or that
/// carry a different run id.
pub fn verify_run(out_dir: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(out_dir.join(MANIFEST_FILE))?)?;
    let mut bad = Vec::new();
    for d in &manifest.outputs {
        let path = out_dir.join(&d.path);
        match sha256_file(&path) {
            Ok(h) if h == d.sha256 => {}
            _ => {
                bad.push(d.path.clone());
                continue;
            }
        }
        if path.extension().is_some_and(|e| e == "json") && d.path != TRUTH_FILE {
            let v: serde_json::Value = serde_json::from_slice(&fs::read(&path)?)?;
            if v.get("run_id").and_then(|r| r.as_str()) != Some(manifest.run_id.as_str()) {
                bad.push(d.path.clone());
            }
        }
    }
    Ok(bad)
}
