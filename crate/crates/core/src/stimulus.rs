//! Stimulus identity, protocols and the on-disk stimulus store layout.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Codec id reserved for the uncompressed source image (level 0).
pub const SOURCE_CODEC: &str = "source";

/// Strongest distortion level.
pub const MAX_LEVEL: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Boosted triplet comparison: zoomed, amplified, flickered side by side.
    Btc,
    /// Plain triplet comparison: untouched images with an in-place toggle.
    Ptc,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Btc, Protocol::Ptc];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Btc => "btc",
            Protocol::Ptc => "ptc",
        }
    }

    /// Time a worker has to answer one question, in milliseconds.
    pub fn response_window_ms(self) -> u64 {
        let t = self.timing();
        t.display_window_ms + t.blank_window_ms
    }

    pub fn timing(self) -> PresentationTiming {
        match self {
            Protocol::Btc => PresentationTiming {
                protocol: self,
                flicker_period_ms: Some(100),
                display_window_ms: 8_000,
                blank_window_ms: 3_000,
                max_toggle_rate_hz: None,
                min_toggles: 0,
            },
            Protocol::Ptc => PresentationTiming {
                protocol: self,
                flicker_period_ms: None,
                display_window_ms: 30_000,
                blank_window_ms: 0,
                max_toggle_rate_hz: Some(2.0),
                min_toggles: 1,
            },
        }
    }

    /// Whether stimuli of this protocol are shown boosted.
    pub fn boosted(self) -> bool {
        matches!(self, Protocol::Btc)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "btc" => Ok(Protocol::Btc),
            "ptc" => Ok(Protocol::Ptc),
            other => Err(Error::invalid(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Presentation parameters handed to the browser client with every question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentationTiming {
    pub protocol: Protocol,
    /// Duration of one flicker phase (source or test image).
    pub flicker_period_ms: Option<u64>,
    pub display_window_ms: u64,
    pub blank_window_ms: u64,
    pub max_toggle_rate_hz: Option<f64>,
    pub min_toggles: u32,
}

/// Identity of a stimulus: which source, which codec, which distortion level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StimulusKey {
    pub source_id: String,
    pub codec_id: String,
    pub level: u8,
}

impl StimulusKey {
    pub fn new(source_id: impl Into<String>, codec_id: impl Into<String>, level: u8) -> Result<Self> {
        let key = StimulusKey {
            source_id: source_id.into(),
            codec_id: codec_id.into(),
            level,
        };
        key.validate()?;
        Ok(key)
    }

    /// The level-0 reference of a source.
    pub fn source(source_id: impl Into<String>) -> Self {
        StimulusKey {
            source_id: source_id.into(),
            codec_id: SOURCE_CODEC.to_string(),
            level: 0,
        }
    }

    /// Key for `codec` at `level`, mapping level 0 onto the shared source reference.
    pub fn at_level(source_id: &str, codec_id: &str, level: u8) -> Self {
        if level == 0 {
            StimulusKey::source(source_id)
        } else {
            StimulusKey {
                source_id: source_id.to_string(),
                codec_id: codec_id.to_string(),
                level,
            }
        }
    }

    pub fn is_source(&self) -> bool {
        self.level == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.level > MAX_LEVEL {
            return Err(Error::invalid(format!("level {} out of range 0..={MAX_LEVEL}", self.level)));
        }
        if (self.level == 0) != (self.codec_id == SOURCE_CODEC) {
            return Err(Error::invalid(format!(
                "level 0 must pair with codec `{SOURCE_CODEC}` (got {}/{})",
                self.codec_id, self.level
            )));
        }
        if self.source_id.is_empty() || self.codec_id.is_empty() {
            return Err(Error::invalid("empty source or codec id"));
        }
        Ok(())
    }
}

impl fmt::Display for StimulusKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.source_id, self.codec_id, self.level)
    }
}

/// One displayable image: a decoded, source or boosted version of a source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stimulus {
    pub source_id: String,
    pub codec_id: String,
    pub level: u8,
    /// Path of the image, relative to the stimulus store root when produced by the store.
    pub image_path: PathBuf,
    pub boosted: bool,
}

impl Stimulus {
    pub fn key(&self) -> StimulusKey {
        StimulusKey {
            source_id: self.source_id.clone(),
            codec_id: self.codec_id.clone(),
            level: self.level,
        }
    }

    pub fn from_key(key: &StimulusKey, image_path: impl Into<PathBuf>, boosted: bool) -> Self {
        Stimulus {
            source_id: key.source_id.clone(),
            codec_id: key.codec_id.clone(),
            level: key.level,
            image_path: image_path.into(),
            boosted,
        }
    }

    /// Stimulus as laid out in a store, with a store-relative path.
    pub fn in_store(key: &StimulusKey, protocol: Protocol) -> Self {
        let variant = if protocol.boosted() { Variant::Boosted } else { Variant::Plain };
        Stimulus::from_key(key, StimulusStore::relative_path(key, variant), protocol.boosted())
    }

    pub fn validate(&self) -> Result<()> {
        self.key().validate()
    }
}

/// File variants kept per stimulus in the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Boosted,
    ZoomedSource,
}

impl Variant {
    fn suffix(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Boosted => "boosted",
            Variant::ZoomedSource => "zoomed_src",
        }
    }
}

/// Directory tree `<root>/<source_id>/<codec_id>/<level>_{plain|boosted|zoomed_src}.png`.
#[derive(Debug, Clone)]
pub struct StimulusStore {
    root: PathBuf,
}

impl StimulusStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StimulusStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn relative_path(key: &StimulusKey, variant: Variant) -> PathBuf {
        PathBuf::from(&key.source_id)
            .join(&key.codec_id)
            .join(format!("{}_{}.png", key.level, variant.suffix()))
    }

    pub fn path(&self, key: &StimulusKey, variant: Variant) -> PathBuf {
        self.root.join(Self::relative_path(key, variant))
    }

    /// The zoomed reference shown in alternation with boosted stimuli.
    pub fn zoomed_source_relative(source_id: &str) -> PathBuf {
        Self::relative_path(&StimulusKey::source(source_id), Variant::ZoomedSource)
    }

    pub fn zoomed_source_path(&self, source_id: &str) -> PathBuf {
        self.root.join(Self::zoomed_source_relative(source_id))
    }

    /// Resolve a stimulus' image path against this store.
    pub fn resolve(&self, stimulus: &Stimulus) -> PathBuf {
        if stimulus.image_path.is_absolute() {
            stimulus.image_path.clone()
        } else {
            self.root.join(&stimulus.image_path)
        }
    }
}
