//! Stage orchestration: fit-aam → sample → train-vae → experiments.
//!
//! Each stage declares its inputs and outputs up front. A stage is skipped
//! when the manifest holds a complete record with the same key and every
//! recorded output still matches its checksum. The key hashes the stage
//! name, its settings, its derived seed and the checksums of its inputs,
//! so changing anything upstream reruns everything downstream.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lmface::aam::{procedural_corpus, AamCode, AamModel, Corpus, LandmarkSet, ProceduralConfig};
use lmface::analysis::{
    codes_matrix, decode_test_set, decoding_tiles, fit_linearity, latent_traversal_grid,
    separate_shape_appearance, shuffled_null, split_codes, supervised_replication, synthesize_all,
    traversal_dims, DecoderKind, SeparationReport,
};
use lmface::figures::render_grid;
use lmface::numerics::{gaussian_vector, DenseMatrix};
use lmface::raster::GreyImage;
use lmface::seed::{derive_seed, substream};
use lmface::vae::{load_bundle, save_bundle, train_vae_observed, VaeConfig, VaeModel, Variant};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{CorpusSource, Experiment, PipelineConfig};
use crate::error::CliError;
use crate::manifest::{sha256_file, Artifact, RunManifest, StageRecord, StageStatus, Timings};
use crate::report::{
    export_report, DecodingDocument, Format, LinearityEntry, LinearityTable, ReplicationDocument,
    Report, SeparationDocument, TraversalDocument,
};

pub const CODES_SCHEMA: &str = "lmface.codes/1";

pub const AAM_FILE: &str = "aam/aam.json";
pub const CORPUS_FIGURE: &str = "aam/corpus.png";
pub const CODES_FILE: &str = "sample/codes.json";
pub const SAMPLE_FIGURE: &str = "sample/preview.png";
pub const LINEARITY_JSON: &str = "reports/linearity.json";
pub const LINEARITY_CSV: &str = "reports/linearity.csv";
pub const DECODING_JSON: &str = "reports/decoding.json";
pub const DECODING_FIGURE: &str = "figures/decoding.png";
pub const SEPARATION_JSON: &str = "reports/separation.json";
pub const SEPARATION_CSV: &str = "reports/separation.csv";
pub const TRAVERSAL_JSON: &str = "reports/traversal.json";
pub const TRAVERSAL_FIGURE: &str = "figures/traversal.png";
pub const REPLICATION_JSON: &str = "reports/replication.json";

const BUNDLE_FILES: [&str; 7] = [
    "config.json",
    "spec.json",
    "generator.lmnn",
    "encoder_trunk.lmnn",
    "encoder_mu.lmnn",
    "encoder_logvar.lmnn",
    "trace.csv",
];

/// Tiles in preview montages.
const PREVIEW: usize = 14;
const PREVIEW_COLS: usize = 7;

/// The sampled teacher codes every student is trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodesFile {
    pub schema: String,
    pub k_s: usize,
    pub k_a: usize,
    pub codes: Vec<AamCode>,
}

/// How far to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    FitAam,
    Sample,
    TrainVae,
    Analyze(Experiment),
    /// Every configured stage.
    All,
}

pub fn model_slug(variant: Variant, d: usize) -> String {
    let v = match variant {
        Variant::Conv => "conv",
        Variant::Fc => "fc",
    };
    format!("{v}-d{d}")
}

pub fn model_dir(variant: Variant, d: usize) -> String {
    format!("models/{}", model_slug(variant, d))
}

pub fn train_stage(variant: Variant, d: usize) -> String {
    format!("train-vae:{}", model_slug(variant, d))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub ran: Vec<String>,
    pub skipped: Vec<String>,
}

pub struct Pipeline {
    config: PipelineConfig,
    dir: PathBuf,
    manifest: RunManifest,
    timings: Timings,
    summary: RunSummary,
    /// Progress lines on stderr.
    pub verbose: bool,
}

struct StagePlan {
    name: String,
    settings: serde_json::Value,
    /// Relative to the output directory.
    inputs: Vec<String>,
    /// Files outside the output directory, under their configured paths.
    external: Vec<String>,
    outputs: Vec<String>,
}

fn ctx<T>(r: Result<T, CliError>) -> lmface::Result<T> {
    r.map_err(|e| lmface::Error::Contract(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> lmface::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> lmface::Error {
    lmface::Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_text(path: &Path) -> lmface::Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// `NAME.png` or `NAME.pgm` with a sibling `NAME.pts`, sorted by name.
pub fn directory_pairs(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    let mut pairs = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm")) {
            let pts = path.with_extension("pts");
            if pts.is_file() {
                pairs.push((path, pts));
            }
        }
    }
    pairs.sort();
    Ok(pairs)
}

fn load_directory(dir: &Path, frame: (usize, usize)) -> lmface::Result<Corpus> {
    let pairs = ctx(directory_pairs(dir))?;
    if pairs.is_empty() {
        return Err(lmface::Error::Data(format!(
            "{} holds no image with a matching .pts file",
            dir.display()
        )));
    }
    let mut images = Vec::with_capacity(pairs.len());
    let mut landmarks = Vec::with_capacity(pairs.len());
    for (img, pts) in &pairs {
        let image = lmface::io::load_image(img)?;
        if image.frame() != frame {
            return Err(lmface::Error::Data(format!(
                "{} is {}x{}, the configured frame is {}x{}",
                img.display(),
                image.width(),
                image.height(),
                frame.0,
                frame.1
            )));
        }
        images.push(image);
        landmarks.push(lmface::io::read_landmarks(pts)?);
    }
    Ok(Corpus { images, landmarks })
}

fn artifact(full: &Path, recorded: &str) -> Result<Artifact, CliError> {
    Ok(Artifact {
        path: recorded.to_string(),
        sha256: Some(sha256_file(full)?),
        provisional: false,
    })
}

/// Marks each landmark with a white pixel.
fn with_landmarks(img: &GreyImage, set: &LandmarkSet) -> GreyImage {
    let mut out = img.clone();
    for p in &set.points {
        let (c, r) = (p.x.round(), p.y.round());
        if c >= 0.0 && r >= 0.0 && (c as usize) < img.width() && (r as usize) < img.height() {
            out.set(r as usize, c as usize, 1.0);
        }
    }
    out
}

impl Pipeline {
    /// Validates the configuration, then creates the output directory.
    /// Nothing is written when validation fails.
    pub fn open(config: PipelineConfig) -> Result<Self, CliError> {
        config.validate()?;
        let dir = config.output_dir();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let mut manifest = RunManifest::read(&dir)
            .unwrap_or_else(|| RunManifest::new(config.content_hash(), config.seed));
        manifest.config_hash = config.content_hash();
        manifest.seed = config.seed;
        manifest.versions = crate::manifest::versions();
        Ok(Self {
            config,
            dir,
            manifest,
            timings: Timings::default(),
            summary: RunSummary::default(),
            verbose: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn run(&mut self, target: Target) -> Result<RunSummary, CliError> {
        self.summary = RunSummary::default();
        let result = self.run_inner(target);
        self.manifest.write(&self.dir)?;
        self.timings.write(&self.dir)?;
        result.map(|()| std::mem::take(&mut self.summary))
    }

    fn run_inner(&mut self, target: Target) -> Result<(), CliError> {
        self.fit_aam()?;
        if target == Target::FitAam || target == Target::Analyze(Experiment::Replicate) {
            if target != Target::FitAam {
                self.replicate()?;
            }
            return Ok(());
        }
        self.sample()?;
        if target == Target::Sample {
            return Ok(());
        }
        let students = match target {
            Target::Analyze(e) if e != Experiment::Linearity => {
                self.config.primary_student().into_iter().collect()
            }
            _ => self.config.students(),
        };
        for (v, d) in students {
            self.train(v, d)?;
        }
        let experiments = match target {
            Target::Analyze(e) => vec![e],
            Target::All => self.config.experiments.clone(),
            _ => vec![],
        };
        for e in experiments {
            match e {
                Experiment::Linearity => self.linearity()?,
                Experiment::Decode => self.decode()?,
                Experiment::Separate => self.separate()?,
                Experiment::Traverse => self.traverse()?,
                Experiment::Replicate => self.replicate()?,
            }
        }
        Ok(())
    }

    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }

    /// Runs `body` unless the stage is current.
    fn stage<F>(&mut self, plan: StagePlan, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&Path, u64) -> lmface::Result<()>,
    {
        let seed = derive_seed(self.config.seed, &plan.name);
        let inputs = plan
            .inputs
            .iter()
            .map(|p| artifact(&self.dir.join(p), p))
            .chain(plan.external.iter().map(|p| artifact(Path::new(p), p)))
            .collect::<Result<Vec<_>, _>>()?;
        let key = {
            let doc = json!({
                "stage": plan.name,
                "settings": plan.settings,
                "seed": seed,
                "inputs": inputs,
                "outputs": plan.outputs,
            });
            hex::encode(Sha256::digest(
                serde_json::to_vec(&doc).expect("key serializes"),
            ))
        };
        if let Some(rec) = self.manifest.stage(&plan.name) {
            if rec.is_current(&key, &self.dir) {
                self.log(&format!("[{}] up to date", plan.name));
                self.timings.stages.insert(plan.name.clone(), None);
                self.summary.skipped.push(plan.name);
                return Ok(());
            }
        }
        self.log(&format!("[{}] running", plan.name));
        let mut record = StageRecord {
            name: plan.name.clone(),
            key,
            status: StageStatus::Running,
            error: None,
            inputs,
            outputs: plan
                .outputs
                .iter()
                .map(|p| Artifact::provisional(p))
                .collect(),
        };
        self.manifest.upsert(record.clone());
        self.manifest.write(&self.dir)?;

        let started = Instant::now();
        let outcome = body(&self.dir, seed);
        let secs = started.elapsed().as_secs_f64();
        self.timings.stages.insert(plan.name.clone(), Some(secs));
        let outcome = outcome.and_then(|()| {
            for a in &mut record.outputs {
                let full = self.dir.join(&a.path);
                if !full.is_file() {
                    return Err(lmface::Error::Contract(format!(
                        "stage did not write its declared output {}",
                        a.path
                    )));
                }
                a.sha256 = Some(ctx(sha256_file(&full))?);
                a.provisional = false;
            }
            Ok(())
        });
        match outcome {
            Ok(()) => {
                record.status = StageStatus::Complete;
                self.manifest.upsert(record);
                self.manifest.write(&self.dir)?;
                self.log(&format!("[{}] complete in {secs:.1}s", plan.name));
                self.summary.ran.push(plan.name);
                Ok(())
            }
            Err(source) => {
                record.status = StageStatus::Failed;
                record.error = Some(source.to_string());
                for a in &mut record.outputs {
                    a.sha256 = None;
                    a.provisional = true;
                }
                self.manifest.upsert(record);
                self.manifest.write(&self.dir)?;
                Err(CliError::Stage {
                    stage: plan.name,
                    source,
                })
            }
        }
    }

    fn fit_aam(&mut self) -> Result<(), CliError> {
        let cfg = self.config.clone();
        let frame = cfg.frame();
        let inputs = match &cfg.corpus {
            CorpusSource::Procedural { .. } => vec![],
            CorpusSource::Directory { path } => directory_pairs(path)?
                .into_iter()
                .flat_map(|(a, b)| [a, b])
                .map(|p| p.display().to_string())
                .collect(),
        };
        let plan = StagePlan {
            name: "fit-aam".into(),
            settings: json!({ "corpus": cfg.corpus, "aam": cfg.aam }),
            inputs: vec![],
            external: inputs,
            outputs: vec![AAM_FILE.into(), CORPUS_FIGURE.into()],
        };
        self.stage(plan, |dir, seed| {
            let corpus = match &cfg.corpus {
                CorpusSource::Procedural {
                    n,
                    landmarks,
                    jitter,
                } => procedural_corpus(&ProceduralConfig {
                    n: *n,
                    landmarks: *landmarks,
                    width: frame.0,
                    height: frame.1,
                    seed,
                    jitter: *jitter,
                })?,
                CorpusSource::Directory { path } => load_directory(path, frame)?,
            };
            let model = AamModel::fit(&corpus.images, &corpus.landmarks, cfg.aam.k_s, cfg.aam.k_a)?;
            write_text(&dir.join(AAM_FILE), &model.to_json()?)?;
            let preview: Vec<GreyImage> = corpus
                .images
                .iter()
                .zip(&corpus.landmarks)
                .take(PREVIEW)
                .map(|(i, l)| with_landmarks(i, l))
                .collect();
            render_grid(&preview, PREVIEW_COLS, &dir.join(CORPUS_FIGURE))
        })
    }

    fn sample(&mut self) -> Result<(), CliError> {
        let n = self.config.sampling.n;
        let plan = StagePlan {
            name: "sample".into(),
            settings: json!({ "n": n }),
            inputs: vec![AAM_FILE.into()],
            external: vec![],
            outputs: vec![CODES_FILE.into(), SAMPLE_FIGURE.into()],
        };
        self.stage(plan, |dir, seed| {
            let aam = read_aam(dir)?;
            let mut rng = substream(seed, "codes");
            let codes = aam.sample_codes(n, &mut rng)?;
            let preview = synthesize_all(&aam, &codes[..codes.len().min(PREVIEW)])?;
            let file = CodesFile {
                schema: CODES_SCHEMA.into(),
                k_s: aam.k_s(),
                k_a: aam.k_a(),
                codes,
            };
            write_text(
                &dir.join(CODES_FILE),
                &(serde_json::to_string(&file)? + "\n"),
            )?;
            render_grid(&preview, PREVIEW_COLS, &dir.join(SAMPLE_FIGURE))
        })
    }

    fn vae_config(&self, variant: Variant, d: usize) -> VaeConfig {
        let v = &self.config.vae;
        VaeConfig {
            d,
            variant,
            batch_size: v.batch_size,
            epochs: v.epochs,
            lr: v.lr,
            sigma: v.sigma,
            seed: derive_seed(self.config.seed, &train_stage(variant, d)),
            filters: v.filters,
            hidden: v.hidden,
            beta1: v.beta1,
            beta2: v.beta2,
        }
    }

    fn train(&mut self, variant: Variant, d: usize) -> Result<(), CliError> {
        let config = self.vae_config(variant, d);
        let mdir = model_dir(variant, d);
        let mut outputs: Vec<String> = BUNDLE_FILES.iter().map(|f| format!("{mdir}/{f}")).collect();
        outputs.push(format!("{mdir}/samples.png"));
        let plan = StagePlan {
            name: train_stage(variant, d),
            settings: serde_json::to_value(&config).expect("config serializes"),
            inputs: vec![AAM_FILE.into(), CODES_FILE.into()],
            external: vec![],
            outputs,
        };
        let verbose = self.verbose;
        let label = plan.name.clone();
        self.stage(plan, |dir, seed| {
            let aam = read_aam(dir)?;
            let codes = read_codes(dir)?;
            let images = synthesize_all(&aam, &codes)?;
            let epochs = config.epochs;
            let model = train_vae_observed(&images, &config, |s| {
                if verbose {
                    eprintln!(
                        "[{label}] epoch {}/{epochs} loss {:.4} (recon {:.4}, kl {:.4})",
                        s.epoch + 1,
                        s.total,
                        s.recon,
                        s.kl
                    );
                }
            })?;
            let out = dir.join(&mdir);
            save_bundle(&model, &out)?;
            let mut rng = substream(seed, "samples");
            let rows: Vec<Vec<f64>> = (0..PREVIEW)
                .map(|_| gaussian_vector(&vec![1.0; d], &mut rng))
                .collect::<lmface::Result<_>>()?;
            let samples = model.generator.generate(&DenseMatrix::from_rows(&rows)?)?;
            render_grid(&samples, PREVIEW_COLS, &out.join("samples.png"))?;
            match &model.trace.diverged {
                Some(reason) => Err(lmface::Error::Diverged {
                    layer: None,
                    reason: reason.clone(),
                }),
                None => Ok(()),
            }
        })
    }

    fn student_inputs(&self, students: &[(Variant, usize)]) -> Vec<String> {
        let mut inputs = vec![AAM_FILE.to_string(), CODES_FILE.to_string()];
        for &(v, d) in students {
            let mdir = model_dir(v, d);
            inputs.extend(BUNDLE_FILES.iter().map(|f| format!("{mdir}/{f}")));
        }
        inputs
    }

    fn primary(&self) -> (Variant, usize) {
        self.config
            .primary_student()
            .expect("validated config has a student")
    }

    fn linearity(&mut self) -> Result<(), CliError> {
        let students = self.config.students();
        let plan = StagePlan {
            name: "linearity".into(),
            settings: json!({ "students": students }),
            inputs: self.student_inputs(&students),
            external: vec![],
            outputs: vec![LINEARITY_JSON.into(), LINEARITY_CSV.into()],
        };
        self.stage(plan, |dir, seed| {
            let teacher = Teacher::read(dir)?;
            let mut entries = Vec::new();
            for &(v, d) in &students {
                let model = load_bundle(&dir.join(model_dir(v, d)))?;
                let z_g = model.inference.encode(&teacher.images)?;
                let fit = fit_linearity(&teacher.z_aam, &z_g, Some(v))?;
                let mut rng = substream(seed, &format!("null/{}", model_slug(v, d)));
                let (null_r2_a, null_r2_b) = shuffled_null(&teacher.z_aam, &z_g, &mut rng)?;
                entries.push(LinearityEntry {
                    fit,
                    null_r2_a,
                    null_r2_b,
                });
            }
            let report = Report::Linearity(LinearityTable { students: entries });
            ctx(export_report(
                &report,
                Format::Json,
                &dir.join(LINEARITY_JSON),
            ))?;
            ctx(export_report(&report, Format::Csv, &dir.join(LINEARITY_CSV)))
        })
    }

    fn decode(&mut self) -> Result<(), CliError> {
        let (v, d) = self.primary();
        let settings = self.config.decode.clone();
        let plan = StagePlan {
            name: "decode".into(),
            settings: json!({ "decode": settings, "student": [v, d] }),
            inputs: self.student_inputs(&[(v, d)]),
            external: vec![],
            outputs: vec![DECODING_JSON.into(), DECODING_FIGURE.into()],
        };
        self.stage(plan, |dir, seed| {
            let teacher = Teacher::read(dir)?;
            let model = load_bundle(&dir.join(model_dir(v, d)))?;
            let z_g = model.inference.encode(&teacher.images)?;
            let b_star = fit_linearity(&teacher.z_aam, &z_g, Some(v))?.map_b;
            let decoding = decode_test_set(
                &teacher.aam,
                &model.inference,
                &b_star,
                settings.n_test,
                seed,
            )?;
            let (tiles, cols) = decoding_tiles(&decoding, settings.rows, settings.per_side);
            render_grid(&tiles, cols, &dir.join(DECODING_FIGURE))?;
            let doc = Report::Decoding(DecodingDocument {
                variant: v,
                d,
                decoding: decoding.report,
                figure: DECODING_FIGURE.into(),
            });
            ctx(export_report(&doc, Format::Json, &dir.join(DECODING_JSON)))
        })
    }

    fn separate(&mut self) -> Result<(), CliError> {
        let (v, d) = self.primary();
        let plan = StagePlan {
            name: "separate".into(),
            settings: json!({ "student": [v, d] }),
            inputs: self.student_inputs(&[(v, d)]),
            external: vec![],
            outputs: vec![SEPARATION_JSON.into(), SEPARATION_CSV.into()],
        };
        self.stage(plan, |dir, _seed| {
            let teacher = Teacher::read(dir)?;
            let model = load_bundle(&dir.join(model_dir(v, d)))?;
            let (separation, _) = teacher.separation(&model)?;
            let doc = Report::Separation(SeparationDocument {
                variant: v,
                d,
                separation,
            });
            ctx(export_report(
                &doc,
                Format::Json,
                &dir.join(SEPARATION_JSON),
            ))?;
            ctx(export_report(&doc, Format::Csv, &dir.join(SEPARATION_CSV)))
        })
    }

    fn traverse(&mut self) -> Result<(), CliError> {
        let (v, d) = self.primary();
        let settings = self.config.traverse.clone();
        let plan = StagePlan {
            name: "traverse".into(),
            settings: json!({ "traverse": settings, "student": [v, d] }),
            inputs: self.student_inputs(&[(v, d)]),
            external: vec![],
            outputs: vec![TRAVERSAL_JSON.into(), TRAVERSAL_FIGURE.into()],
        };
        self.stage(plan, |dir, _seed| {
            let teacher = Teacher::read(dir)?;
            let model = load_bundle(&dir.join(model_dir(v, d)))?;
            let (separation, z_g) = teacher.separation(&model)?;
            let (shape_dims, app_dims) = traversal_dims(&separation, settings.dims_per_axis);
            let sds = z_g.column_sds();
            let grid = latent_traversal_grid(
                &model.generator,
                &sds,
                &shape_dims,
                &app_dims,
                settings.steps,
            )?;
            render_grid(&grid.images, grid.steps, &dir.join(TRAVERSAL_FIGURE))?;
            let doc = Report::Traversal(TraversalDocument {
                variant: v,
                d,
                steps: grid.steps,
                offsets: grid.offsets,
                shape_dims,
                app_dims,
                sds,
                figure: TRAVERSAL_FIGURE.into(),
            });
            ctx(export_report(&doc, Format::Json, &dir.join(TRAVERSAL_JSON)))
        })
    }

    fn replicate(&mut self) -> Result<(), CliError> {
        let settings = self.config.replicate.clone();
        let plan = StagePlan {
            name: "replicate".into(),
            settings: serde_json::to_value(&settings).expect("settings serialize"),
            inputs: vec![AAM_FILE.into()],
            external: vec![],
            outputs: vec![REPLICATION_JSON.into()],
        };
        self.stage(plan, |dir, seed| {
            let aam = read_aam(dir)?;
            let (generator, _) =
                supervised_replication(&aam, &settings.to_config(seed, DecoderKind::Generator))?;
            let linear = if settings.linear_baseline {
                Some(
                    supervised_replication(&aam, &settings.to_config(seed, DecoderKind::Linear))?.0,
                )
            } else {
                None
            };
            let diverged = generator.diverged.clone();
            let doc = Report::Replication(ReplicationDocument { generator, linear });
            ctx(export_report(
                &doc,
                Format::Json,
                &dir.join(REPLICATION_JSON),
            ))?;
            match diverged {
                Some(reason) => Err(lmface::Error::Diverged {
                    layer: None,
                    reason,
                }),
                None => Ok(()),
            }
        })
    }
}

fn read_aam(dir: &Path) -> lmface::Result<AamModel> {
    AamModel::from_json(&read_text(&dir.join(AAM_FILE))?)
}

fn read_codes(dir: &Path) -> lmface::Result<Vec<AamCode>> {
    let file: CodesFile = serde_json::from_str(&read_text(&dir.join(CODES_FILE))?)?;
    if file.schema != CODES_SCHEMA {
        return Err(lmface::Error::Format(format!(
            "unsupported codes schema {:?}",
            file.schema
        )));
    }
    Ok(file.codes)
}

/// The teacher side of every experiment: the AAM, the sampled codes and
/// the faces synthesized from them.
struct Teacher {
    aam: AamModel,
    codes: Vec<AamCode>,
    z_aam: DenseMatrix,
    images: Vec<GreyImage>,
}

impl Teacher {
    fn read(dir: &Path) -> lmface::Result<Self> {
        let aam = read_aam(dir)?;
        let codes = read_codes(dir)?;
        let z_aam = codes_matrix(&codes)?;
        let images = synthesize_all(&aam, &codes)?;
        Ok(Self {
            aam,
            codes,
            z_aam,
            images,
        })
    }

    fn separation(&self, model: &VaeModel) -> lmface::Result<(SeparationReport, DenseMatrix)> {
        let z_g = model.inference.encode(&self.images)?;
        let (b_s, b_a) = split_codes(&self.codes)?;
        Ok((separate_shape_appearance(&z_g, &b_s, &b_a)?, z_g))
    }
}

/// Runs every configured stage and returns the final manifest.
pub fn run_pipeline(config: PipelineConfig) -> Result<RunManifest, CliError> {
    let mut p = Pipeline::open(config)?;
    p.run(Target::All)?;
    Ok(p.manifest)
}
