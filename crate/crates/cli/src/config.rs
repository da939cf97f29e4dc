//! Pipeline configuration: one JSON document, `schema: 1`, with a
//! mandatory global seed.

use std::path::{Path, PathBuf};

use lmface::analysis::DecoderKind;
use lmface::vae::{Architecture, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CONFIG_SCHEMA: u32 = 1;
pub const OUTPUT_ENV: &str = "LM_OUTPUT_DIR";
pub const DEFAULT_OUTPUT: &str = "lmface-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub corpus: CorpusSource,
    #[serde(default)]
    pub aam: AamSettings,
    #[serde(default)]
    pub sampling: SamplingSettings,
    #[serde(default)]
    pub vae: VaeSettings,
    #[serde(default = "all_experiments")]
    pub experiments: Vec<Experiment>,
    #[serde(default)]
    pub decode: DecodeSettings,
    #[serde(default)]
    pub traverse: TraverseSettings,
    #[serde(default)]
    pub replicate: ReplicateSettings,
}

/// Where the teacher's landmarked training faces come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSource {
    Procedural {
        n: usize,
        landmarks: usize,
        jitter: f64,
    },
    /// Every `NAME.png` or `NAME.pgm` with a sibling `NAME.pts`.
    Directory { path: PathBuf },
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Procedural {
            n: 200,
            landmarks: 30,
            jitter: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AamSettings {
    pub k_s: usize,
    pub k_a: usize,
    /// `[width, height]`.
    pub frame: [usize; 2],
}

impl Default for AamSettings {
    fn default() -> Self {
        Self {
            k_s: 5,
            k_a: 5,
            frame: [32, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSettings {
    pub n: usize,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self { n: 4000 }
    }
}

/// One student is trained per `(variant, d)` pair; the first pair is the
/// primary model used by the decode, separate and traverse experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSettings {
    pub variants: Vec<Variant>,
    pub dims: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub sigma: f64,
    pub filters: usize,
    pub hidden: usize,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for VaeSettings {
    fn default() -> Self {
        Self {
            variants: vec![Variant::Conv],
            dims: vec![20],
            batch_size: 64,
            epochs: 30,
            lr: 5e-4,
            sigma: std::f64::consts::FRAC_1_SQRT_2,
            filters: 16,
            hidden: 256,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Linearity,
    Decode,
    Separate,
    Traverse,
    Replicate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Linearity => "linearity",
            Experiment::Decode => "decode",
            Experiment::Separate => "separate",
            Experiment::Traverse => "traverse",
            Experiment::Replicate => "replicate",
        }
    }

    /// Whether the experiment reads a trained student.
    pub fn needs_student(self) -> bool {
        !matches!(self, Experiment::Replicate)
    }
}

fn all_experiments() -> Vec<Experiment> {
    vec![
        Experiment::Linearity,
        Experiment::Decode,
        Experiment::Separate,
        Experiment::Traverse,
        Experiment::Replicate,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSettings {
    pub n_test: usize,
    /// Figure layout: rows of `per_side` originals beside their
    /// reconstructions.
    pub rows: usize,
    pub per_side: usize,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            n_test: 500,
            rows: 4,
            per_side: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraverseSettings {
    pub steps: usize,
    pub dims_per_axis: usize,
}

impl Default for TraverseSettings {
    fn default() -> Self {
        Self {
            steps: 7,
            dims_per_axis: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateSettings {
    pub n_train: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub variant: Variant,
    pub filters: usize,
    pub hidden: usize,
    /// Also train the one-layer linear decoder as a baseline.
    pub linear_baseline: bool,
}

impl Default for ReplicateSettings {
    fn default() -> Self {
        Self {
            n_train: 4000,
            n_test: 500,
            epochs: 300,
            batch_size: 64,
            lr: 1e-3,
            momentum: 0.5,
            variant: Variant::Conv,
            filters: 16,
            hidden: 256,
            linear_baseline: true,
        }
    }
}

impl ReplicateSettings {
    pub fn to_config(
        &self,
        seed: u64,
        decoder: DecoderKind,
    ) -> lmface::analysis::ReplicationConfig {
        lmface::analysis::ReplicationConfig {
            n_train: self.n_train,
            n_test: self.n_test,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            momentum: self.momentum,
            seed,
            variant: self.variant,
            filters: self.filters,
            hidden: self.hidden,
            decoder,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl PipelineConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            seed,
            output_dir: None,
            corpus: CorpusSource::default(),
            aam: AamSettings::default(),
            sampling: SamplingSettings::default(),
            vae: VaeSettings::default(),
            experiments: all_experiments(),
            decode: DecodeSettings::default(),
            traverse: TraverseSettings::default(),
            replicate: ReplicateSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                invalid(format!("config file {} does not exist", path.display()))
            }
            _ => CliError::io(path, e),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn frame(&self) -> (usize, usize) {
        (self.aam.frame[0], self.aam.frame[1])
    }

    /// Every trained student, primary first.
    pub fn students(&self) -> Vec<(Variant, usize)> {
        let mut out = Vec::new();
        for &v in &self.vae.variants {
            for &d in &self.vae.dims {
                if !out.contains(&(v, d)) {
                    out.push((v, d));
                }
            }
        }
        out
    }

    pub fn primary_student(&self) -> Option<(Variant, usize)> {
        self.students().first().copied()
    }

    /// Resolves the output directory: explicit setting, then
    /// `LM_OUTPUT_DIR`, then `lmface-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| {
                std::env::var_os(OUTPUT_ENV)
                    .filter(|v| !v.is_empty())
                    .map(PathBuf::from)
            })
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
    }

    /// Hash of everything that influences results; the output directory
    /// is excluded.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        hex::encode(Sha256::digest(
            serde_json::to_vec(&c).expect("config serializes"),
        ))
    }

    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(invalid(format!(
                "unsupported config schema {}, expected {CONFIG_SCHEMA}",
                self.schema
            )));
        }
        match &self.corpus {
            CorpusSource::Procedural {
                n,
                landmarks,
                jitter,
            } => {
                if *n < 20 {
                    return Err(invalid("procedural corpus needs n >= 20"));
                }
                if *landmarks < 17 {
                    return Err(invalid("procedural faces need at least 17 landmarks"));
                }
                if !(jitter.is_finite() && *jitter >= 0.0) {
                    return Err(invalid("jitter must be finite and non-negative"));
                }
            }
            CorpusSource::Directory { path } => {
                if !path.is_dir() {
                    return Err(invalid(format!(
                        "landmark directory {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        let (w, h) = self.frame();
        if w < 8 || h < 8 {
            return Err(invalid(format!("frame {w}x{h} is too small")));
        }
        if self.aam.k_s == 0 || self.aam.k_a == 0 {
            return Err(invalid("k_s and k_a must be positive"));
        }
        let students = self.students();
        let needs_student = self.experiments.iter().any(|e| e.needs_student());
        if students.is_empty() && needs_student {
            return Err(invalid(
                "experiments need at least one VAE variant and latent dimension",
            ));
        }
        let v = &self.vae;
        if v.batch_size < 2 {
            return Err(invalid("VAE batch size must be at least 2"));
        }
        if self.sampling.n < v.batch_size {
            return Err(invalid(format!(
                "{} samples cannot fill a batch of {}",
                self.sampling.n, v.batch_size
            )));
        }
        if !(v.lr > 0.0 && v.lr.is_finite() && v.sigma > 0.0 && v.sigma.is_finite()) {
            return Err(invalid("VAE learning rate and sigma must be positive"));
        }
        for (variant, d) in &students {
            let arch = Architecture {
                variant: *variant,
                d: *d,
                frame: (w, h),
                filters: v.filters,
                hidden: v.hidden,
            };
            arch.generator_spec()
                .map_err(|e| invalid(format!("VAE {}: {e}", variant.label())))?;
        }
        let code_dim = self.aam.k_s + self.aam.k_a;
        if self.experiments.contains(&Experiment::Linearity) {
            let need = students
                .iter()
                .map(|s| s.1)
                .max()
                .unwrap_or(0)
                .max(code_dim)
                + 1;
            if self.sampling.n <= need {
                return Err(invalid(format!("linearity needs more than {need} samples")));
            }
        }
        if self.experiments.contains(&Experiment::Decode) && self.decode.n_test == 0 {
            return Err(invalid("decode.n_test must be positive"));
        }
        if self.experiments.contains(&Experiment::Traverse) {
            let t = &self.traverse;
            if t.steps.is_multiple_of(2) {
                return Err(invalid("traverse.steps must be odd"));
            }
            let d = self.primary_student().map(|s| s.1).unwrap_or(0);
            if t.dims_per_axis == 0 || 2 * t.dims_per_axis > d {
                return Err(invalid(format!(
                    "traversal needs 2 x {} distinct dimensions, the primary student has {d}",
                    t.dims_per_axis
                )));
            }
        }
        if self.experiments.contains(&Experiment::Replicate) {
            let r = &self.replicate;
            if r.n_train < 2 || r.n_test == 0 || r.batch_size < 2 {
                return Err(invalid(
                    "replicate needs n_train >= 2, n_test >= 1, batch_size >= 2",
                ));
            }
            if !(r.lr > 0.0 && r.lr.is_finite()) {
                return Err(invalid("replicate.lr must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(PipelineConfig::from_json(r#"{"schema": 1}"#).is_err());
        let c = PipelineConfig::from_json(r#"{"schema": 1, "seed": 3}"#).unwrap();
        assert_eq!(c, PipelineConfig::with_seed(3));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_fields_and_schemas_are_rejected() {
        assert!(PipelineConfig::from_json(r#"{"schema": 1, "seed": 3, "sede": 4}"#).is_err());
        let c = PipelineConfig::from_json(r#"{"schema": 2, "seed": 3}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = PipelineConfig::with_seed(1);
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.content_hash(), b.content_hash());
        b.seed = 2;
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn json_round_trip() {
        let mut c = PipelineConfig::with_seed(5);
        c.corpus = CorpusSource::Directory {
            path: "faces".into(),
        };
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn students_are_deduplicated_in_order() {
        let mut c = PipelineConfig::with_seed(0);
        c.vae.variants = vec![Variant::Fc, Variant::Conv, Variant::Fc];
        c.vae.dims = vec![20, 8];
        assert_eq!(
            c.students(),
            vec![
                (Variant::Fc, 20),
                (Variant::Fc, 8),
                (Variant::Conv, 20),
                (Variant::Conv, 8)
            ]
        );
    }

    #[test]
    fn conv_frame_must_be_a_power_of_two_multiple() {
        let mut c = PipelineConfig::with_seed(0);
        c.aam.frame = [48, 48];
        assert!(c.validate().is_err());
        c.vae.variants = vec![Variant::Fc];
        c.validate().unwrap();
    }
}
