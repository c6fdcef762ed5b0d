//! End-to-end analysis of a response export against its design.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::align::{fit_alignment, select_granularity, AicMode, AicSelection, AlignmentModel, Granularity, Quadratic};
use super::bias::{bias_report, BiasReport};
use super::bootstrap::{bootstrap_intervals, estimate, slot_values, BootstrapConfig, BootstrapDiagnostics, ScaleResult, ScaleSlot};
use super::counts::tally_responses;
use super::filter::{filter_batches, ReliabilityReport, DEFAULT_THRESHOLD};
use super::psychometric::{psychometric_curve, PsychometricCurve};
use super::thurstone::ReconstructOptions;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::raster::write_atomic;
use crate::responses::{QuestionIndex, ResponseRow};
use crate::stimulus::Protocol;

pub const SCALES_FILE: &str = "scales.csv";
pub const ALIGNMENT_FILE: &str = "alignment.json";
pub const REPORT_FILE: &str = "report.json";

/// `auto` (minimum AIC) or a fixed granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GranularityChoice {
    #[default]
    Auto,
    Fixed(Granularity),
}

impl FromStr for GranularityChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(GranularityChoice::Auto)
        } else {
            s.parse().map(GranularityChoice::Fixed)
        }
    }
}

impl TryFrom<String> for GranularityChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GranularityChoice> for String {
    fn from(g: GranularityChoice) -> String {
        g.to_string()
    }
}

impl fmt::Display for GranularityChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GranularityChoice::Auto => f.write_str("auto"),
            GranularityChoice::Fixed(g) => g.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub threshold: f64,
    pub bias_alpha: f64,
    pub epsilon: f64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub granularity: GranularityChoice,
    pub aic_mode: AicMode,
    /// Zero skips the bootstrap; intervals then collapse onto the estimate.
    pub bootstrap_replicates: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub max_failure_fraction: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            threshold: DEFAULT_THRESHOLD,
            bias_alpha: 0.05,
            epsilon: 1e-6,
            gradient_tolerance: 1e-7,
            max_iterations: 1000,
            granularity: GranularityChoice::Auto,
            aic_mode: AicMode::PlainLikelihood,
            bootstrap_replicates: 10_000,
            seed: 0,
            ci_level: 0.95,
            max_failure_fraction: 0.01,
        }
    }
}

impl AnalysisConfig {
    pub fn reconstruct_options(&self) -> ReconstructOptions {
        ReconstructOptions {
            epsilon: self.epsilon,
            gradient_tolerance: self.gradient_tolerance,
            max_iterations: self.max_iterations,
            start: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(0.0 < self.epsilon && self.epsilon < 0.5) {
            return Err(Error::invalid(format!("epsilon {} outside (0, 0.5)", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub granularity: Granularity,
    pub coefficients: BTreeMap<String, Quadratic>,
    pub rss: f64,
    pub aic: AicSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub responses: usize,
    pub kept_responses: usize,
    pub filter: ReliabilityReport,
    pub bias: BiasReport,
    pub psychometric: Vec<PsychometricCurve>,
    /// Free scale parameters per protocol.
    pub free_parameters: BTreeMap<Protocol, usize>,
    pub bootstrap: Option<BootstrapDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub scales: Vec<ScaleResult>,
    pub alignment: Option<AlignmentReport>,
    /// Every candidate fit, in `Granularity::ALL` order.
    pub candidates: Vec<AlignmentModel>,
    pub report: AnalysisReport,
}

impl AnalysisOutput {
    pub fn rows(&self, protocol: Protocol, aligned: bool) -> impl Iterator<Item = &ScaleResult> {
        self.scales.iter().filter(move |s| s.protocol == protocol && s.aligned == aligned)
    }
}

/// Filter, reconstruct, align and bootstrap.
pub fn analyze(designs: &[Design], rows: &[ResponseRow], config: &AnalysisConfig) -> Result<AnalysisOutput> {
    config.validate()?;
    let index = QuestionIndex::new(designs);
    let all = index.join(rows)?;
    if all.is_empty() {
        return Err(Error::analysis("no responses"));
    }
    let (kept, filter) = filter_batches(&all, config.threshold)?;
    let bias = bias_report(&all, &kept, config.bias_alpha);
    let mut protocols: Vec<Protocol> = kept.iter().map(|r| r.question.protocol).collect();
    protocols.sort();
    protocols.dedup();
    let psychometric = protocols.iter().map(|&p| psychometric_curve(&kept, p)).collect();

    let options = config.reconstruct_options();
    let tallies = tally_responses(&kept);
    let point = estimate(&tallies, &options, None)?;

    let (alignment, candidates) = match (point.protocol_jnd(Protocol::Btc), point.protocol_jnd(Protocol::Ptc)) {
        (Some(btc), Some(ptc)) => {
            let candidates = Granularity::ALL
                .iter()
                .map(|&g| fit_alignment(btc, ptc, g, None))
                .collect::<Result<Vec<_>>>()?;
            let aic = select_granularity(
                &candidates,
                btc,
                &point.counts[&Protocol::Ptc],
                point.free_parameters[&Protocol::Btc],
                config.aic_mode,
                config.epsilon,
            )?;
            let chosen = match config.granularity {
                GranularityChoice::Auto => aic.chosen,
                GranularityChoice::Fixed(g) => g,
            };
            let model = candidates.iter().find(|m| m.granularity == chosen).expect("all fitted").clone();
            (Some((model, aic)), candidates)
        }
        _ => (None, Vec::new()),
    };

    let mut slots = Vec::new();
    for (&protocol, scales) in &point.jnd {
        for key in scales.keys().filter(|k| !k.is_source()) {
            slots.push(ScaleSlot {
                key: key.clone(),
                protocol,
                aligned: false,
            });
            if protocol == Protocol::Btc && alignment.is_some() {
                slots.push(ScaleSlot {
                    key: key.clone(),
                    protocol,
                    aligned: true,
                });
            }
        }
    }
    slots.sort();
    let model = alignment.as_ref().map(|(m, _)| m);
    let values = slot_values(&slots, &point, model)?;

    let (bounds, diagnostics) = if config.bootstrap_replicates == 0 {
        (values.iter().map(|&v| (v, v)).collect::<Vec<_>>(), None)
    } else {
        let bc = BootstrapConfig {
            replicates: config.bootstrap_replicates,
            seed: config.seed,
            level: config.ci_level,
            max_failure_fraction: config.max_failure_fraction,
        };
        let iv = bootstrap_intervals(&tallies, &slots, &point, model.map(|m| m.granularity), &options, &bc)?;
        (iv.bounds, Some(iv.diagnostics))
    };

    let scales = slots
        .iter()
        .zip(values)
        .zip(bounds)
        .map(|((slot, v), (lo, hi))| ScaleResult {
            source_id: slot.key.source_id.clone(),
            codec_id: slot.key.codec_id.clone(),
            level: slot.key.level,
            protocol: slot.protocol,
            aligned: slot.aligned,
            scale_jnd: v,
            // percentile bounds may miss a skewed point estimate
            ci_low: lo.min(v),
            ci_high: hi.max(v),
        })
        .collect();

    let report = AnalysisReport {
        responses: all.len(),
        kept_responses: kept.len(),
        filter,
        bias,
        psychometric,
        free_parameters: point.free_parameters.clone(),
        bootstrap: diagnostics,
    };
    Ok(AnalysisOutput {
        scales,
        alignment: alignment.map(|(m, aic)| AlignmentReport {
            granularity: m.granularity,
            rss: m.fit.rss,
            coefficients: m.coefficients,
            aic,
        }),
        candidates,
        report,
    })
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    run_id: Option<&'a str>,
    #[serde(flatten)]
    body: &'a T,
}

pub fn scales_csv(scales: &[ScaleResult]) -> Result<Vec<u8>> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    for s in scales {
        wr.serialize(s)?;
    }
    wr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_scales_csv(path: &Path) -> Result<Vec<ScaleResult>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Write `scales.csv`, `alignment.json` (when both protocols were analysed)
/// and `report.json` into `dir`. JSON files carry `run_id` when given.
pub fn write_outputs(dir: &Path, output: &AnalysisOutput, run_id: Option<&str>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join(SCALES_FILE);
    write_atomic(&path, &scales_csv(&output.scales)?)?;
    written.push(path);
    if let Some(alignment) = &output.alignment {
        let path = dir.join(ALIGNMENT_FILE);
        let mut json = serde_json::to_vec_pretty(&Stamped { run_id, body: alignment })?;
        json.push(b'\n');
        write_atomic(&path, &json)?;
        written.push(path);
    }
    let path = dir.join(REPORT_FILE);
    let mut json = serde_json::to_vec_pretty(&Stamped {
        run_id,
        body: &output.report,
    })?;
    json.push(b'\n');
    write_atomic(&path, &json)?;
    written.push(path);
    Ok(written)
}
