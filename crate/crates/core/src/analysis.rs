//! Teacher/student experiments: linearity between AAM codes and learned
//! codes, linear decoding of held-out faces, shape/appearance separation
//! of latent dimensions, latent traversals and supervised replication.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aam::{AamCode, AamModel};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Mode, Network, NetworkSpec, SgdMomentum, Tensor};
use crate::numerics::{ols_fit, r_squared, DenseMatrix, LinearMap};
use crate::raster::GreyImage;
use crate::seed::substream;
use crate::vae::{images_tensor, Architecture, GeneratorNet, InferenceNet, Variant};

/// Rows are codes.
pub fn codes_matrix(codes: &[AamCode]) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = codes.iter().map(AamCode::to_vec).collect();
    DenseMatrix::from_rows(&rows)
}

pub fn synthesize_all(aam: &AamModel, codes: &[AamCode]) -> Result<Vec<GreyImage>> {
    codes.iter().map(|c| Ok(aam.synthesize(c)?.image)).collect()
}

/// Mean absolute per-pixel difference.
pub fn pixel_l1(a: &GreyImage, b: &GreyImage) -> f64 {
    let n = a.pixels().len() as f64;
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n
}

/// Root-mean-square per-pixel difference.
pub fn pixel_l2(a: &GreyImage, b: &GreyImage) -> f64 {
    let n = a.pixels().len() as f64;
    (a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// R² of `Y ≈ A·X` fits in both directions between teacher and student codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub d: usize,
    pub variant: Option<Variant>,
    pub n: usize,
    /// `Z_G ≈ A·Z_AAM`.
    pub r2_a: f64,
    /// `Z_AAM ≈ B·Z_G`.
    pub r2_b: f64,
    pub map_a: LinearMap,
    pub map_b: LinearMap,
}

/// Fits `A: Z_AAM → Z_G` and `B: Z_G → Z_AAM` with intercepts.
pub fn fit_linearity(
    z_aam: &DenseMatrix,
    z_g: &DenseMatrix,
    variant: Option<Variant>,
) -> Result<LinearityReport> {
    let n = z_aam.rows();
    if z_g.rows() != n {
        return Err(Error::param("teacher and student codes differ in count"));
    }
    let need = z_aam.cols().max(z_g.cols()) + 1;
    if n <= need {
        return Err(Error::param(format!(
            "linearity fits need more than {need} samples, got {n}"
        )));
    }
    let map_a = ols_fit(z_aam, z_g, true)?;
    let map_b = ols_fit(z_g, z_aam, true)?;
    let r2_a = r_squared(z_g, &map_a.predict(z_aam)?)?;
    let r2_b = r_squared(z_aam, &map_b.predict(z_g)?)?;
    Ok(LinearityReport {
        d: z_g.cols(),
        variant,
        n,
        r2_a,
        r2_b,
        map_a,
        map_b,
    })
}

/// `(r2_a, r2_b)` after randomly re-pairing student rows with teacher rows.
pub fn shuffled_null<R: Rng + ?Sized>(
    z_aam: &DenseMatrix,
    z_g: &DenseMatrix,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let mut idx: Vec<usize> = (0..z_g.rows()).collect();
    idx.shuffle(rng);
    let rows: Vec<&[f64]> = idx.iter().map(|&i| z_g.row(i)).collect();
    let shuffled = DenseMatrix::from_rows(&rows)?;
    let r = fit_linearity(z_aam, &shuffled, None)?;
    Ok((r.r2_a, r.r2_b))
}

/// Anything that maps faces to latent codes.
pub trait Student {
    fn latent_dim(&self) -> usize;

    /// Codes for `faces`; `teacher` holds the AAM codes the faces were
    /// synthesized from, for students that are constructed from them.
    fn encode_faces(&self, faces: &[GreyImage], teacher: &DenseMatrix) -> Result<DenseMatrix>;
}

impl Student for InferenceNet {
    fn latent_dim(&self) -> usize {
        self.arch.d
    }

    fn encode_faces(&self, faces: &[GreyImage], _teacher: &DenseMatrix) -> Result<DenseMatrix> {
        self.encode(faces)
    }
}

/// The ideal student: `Z_G ≡ Z_AAM`.
#[derive(Debug, Clone, Copy)]
pub struct OracleStudent {
    pub dim: usize,
}

impl Student for OracleStudent {
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn encode_faces(&self, _faces: &[GreyImage], teacher: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(teacher.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingReport {
    pub n_test: usize,
    pub seed: u64,
    pub b_star: LinearMap,
    /// Mean absolute per-pixel error of each test face.
    pub l1: Vec<f64>,
    /// Root-mean-square per-pixel error of each test face.
    pub l2: Vec<f64>,
    pub mean_l1: f64,
}

#[derive(Debug, Clone)]
pub struct Decoding {
    pub report: DecodingReport,
    pub originals: Vec<GreyImage>,
    pub reconstructions: Vec<GreyImage>,
}

/// Samples fresh teacher codes, synthesizes faces, encodes them with the
/// student, predicts AAM codes through `b_star` and re-synthesizes.
pub fn decode_test_set<S: Student + ?Sized>(
    aam: &AamModel,
    student: &S,
    b_star: &LinearMap,
    n_test: usize,
    seed: u64,
) -> Result<Decoding> {
    if n_test == 0 {
        return Err(Error::param("n_test must be positive"));
    }
    if b_star.inputs() != student.latent_dim() || b_star.outputs() != aam.code_dim() {
        return Err(Error::param(format!(
            "decoder maps {} to {} dimensions; student has {}, teacher {}",
            b_star.inputs(),
            b_star.outputs(),
            student.latent_dim(),
            aam.code_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes = aam.sample_codes(n_test, &mut rng)?;
    let teacher = codes_matrix(&codes)?;
    let originals = synthesize_all(aam, &codes)?;
    let z_g = student.encode_faces(&originals, &teacher)?;
    let z_hat = b_star.predict(&z_g)?;
    let mut reconstructions = Vec::with_capacity(n_test);
    for i in 0..n_test {
        let code = AamCode::from_slice(z_hat.row(i), aam.k_s())?;
        reconstructions.push(aam.synthesize(&code)?.image);
    }
    let l1: Vec<f64> = originals
        .iter()
        .zip(&reconstructions)
        .map(|(a, b)| pixel_l1(a, b))
        .collect();
    let l2 = originals
        .iter()
        .zip(&reconstructions)
        .map(|(a, b)| pixel_l2(a, b))
        .collect();
    let mean_l1 = l1.iter().sum::<f64>() / n_test as f64;
    Ok(Decoding {
        report: DecodingReport {
            n_test,
            seed,
            b_star: b_star.clone(),
            l1,
            l2,
            mean_l1,
        },
        originals,
        reconstructions,
    })
}

/// Tiles for a decoding figure: each montage row holds `per_side`
/// originals followed by their reconstructions. Returns the tiles and the
/// column count.
pub fn decoding_tiles(
    decoding: &Decoding,
    rows: usize,
    per_side: usize,
) -> (Vec<GreyImage>, usize) {
    let per_side = per_side.clamp(1, decoding.originals.len().max(1));
    let rows = rows.min(decoding.originals.len() / per_side);
    let mut tiles = Vec::with_capacity(2 * rows * per_side);
    for r in 0..rows {
        let span = r * per_side..(r + 1) * per_side;
        tiles.extend(decoding.originals[span.clone()].iter().cloned());
        tiles.extend(decoding.reconstructions[span].iter().cloned());
    }
    (tiles, 2 * per_side)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub r2_shape: Vec<f64>,
    pub r2_app: Vec<f64>,
    /// Up to three dimensions, descending by `r2_shape`.
    pub top_shape: Vec<usize>,
    /// Up to three dimensions, descending by `r2_app`.
    pub top_app: Vec<usize>,
}

/// Per-column R² of `Y ≈ X·C + c`; a constant column scores 0.
fn columnwise_r2(x: &DenseMatrix, y: &DenseMatrix) -> Result<Vec<f64>> {
    let map = ols_fit(x, y, true)?;
    let pred = map.predict(x)?;
    let sds = y.column_sds();
    (0..y.cols())
        .map(|j| {
            if sds[j] == 0.0 {
                return Ok(0.0);
            }
            let yj = y.select_columns(&[j]);
            let pj = pred.select_columns(&[j]);
            r_squared(&yj, &pj)
        })
        .collect()
}

fn top_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Regresses every latent dimension on the shape code and, separately, on
/// the appearance code.
pub fn separate_shape_appearance(
    z_g: &DenseMatrix,
    b_s: &DenseMatrix,
    b_a: &DenseMatrix,
) -> Result<SeparationReport> {
    let n = z_g.rows();
    if b_s.rows() != n || b_a.rows() != n {
        return Err(Error::param("codes differ in count"));
    }
    let need = b_s.cols().max(b_a.cols()) + 1;
    if n <= need {
        return Err(Error::param(format!(
            "separation needs more than {need} samples, got {n}"
        )));
    }
    let r2_shape = columnwise_r2(b_s, z_g)?;
    let r2_app = columnwise_r2(b_a, z_g)?;
    Ok(SeparationReport {
        top_shape: top_indices(&r2_shape, 3),
        top_app: top_indices(&r2_app, 3),
        r2_shape,
        r2_app,
    })
}

/// Splits teacher codes into shape and appearance blocks.
pub fn split_codes(codes: &[AamCode]) -> Result<(DenseMatrix, DenseMatrix)> {
    let s: Vec<&[f64]> = codes.iter().map(|c| c.b_s.as_slice()).collect();
    let a: Vec<&[f64]> = codes.iter().map(|c| c.b_a.as_slice()).collect();
    Ok((DenseMatrix::from_rows(&s)?, DenseMatrix::from_rows(&a)?))
}

/// Shape dimensions for a traversal: the top shape dimensions, then the top
/// appearance dimensions not already taken.
pub fn traversal_dims(report: &SeparationReport, k: usize) -> (Vec<usize>, Vec<usize>) {
    let shape: Vec<usize> = top_indices(&report.r2_shape, k);
    let app: Vec<usize> = top_indices(&report.r2_app, report.r2_app.len())
        .into_iter()
        .filter(|j| !shape.contains(j))
        .take(k)
        .collect();
    (shape, app)
}

#[derive(Debug, Clone)]
pub struct TraversalGrid {
    pub steps: usize,
    pub shape_dims: Vec<usize>,
    pub app_dims: Vec<usize>,
    /// Offsets in sd units, shared by both axes.
    pub offsets: Vec<f64>,
    /// Row-major: rows vary appearance, columns vary shape.
    pub images: Vec<GreyImage>,
}

/// Decodes a `steps × steps` grid around the zero code. Columns sweep the
/// shape dimensions jointly from −3 to +3 sd, rows the appearance ones;
/// every other dimension stays 0.
pub fn latent_traversal_grid(
    gen: &GeneratorNet,
    sds: &[f64],
    shape_dims: &[usize],
    app_dims: &[usize],
    steps: usize,
) -> Result<TraversalGrid> {
    let d = gen.d();
    if sds.len() != d {
        return Err(Error::param(format!("need {d} sds, got {}", sds.len())));
    }
    if steps.is_multiple_of(2) {
        return Err(Error::param(format!("steps must be odd, got {steps}")));
    }
    if shape_dims.is_empty() || app_dims.is_empty() {
        return Err(Error::param("both axes need at least one dimension"));
    }
    if let Some(&j) = shape_dims.iter().chain(app_dims).find(|&&j| j >= d) {
        return Err(Error::param(format!(
            "dimension {j} out of range for d = {d}"
        )));
    }
    if shape_dims.iter().any(|j| app_dims.contains(j)) {
        return Err(Error::param("shape and appearance dimensions overlap"));
    }
    let offsets: Vec<f64> = if steps == 1 {
        vec![0.0]
    } else {
        (0..steps)
            .map(|i| -3.0 + 6.0 * i as f64 / (steps - 1) as f64)
            .collect()
    };
    let mut z = DenseMatrix::zeros(steps * steps, d);
    for (r, &oa) in offsets.iter().enumerate() {
        for (c, &os) in offsets.iter().enumerate() {
            let row = z.row_mut(r * steps + c);
            for &j in shape_dims {
                row[j] = os * sds[j];
            }
            for &j in app_dims {
                row[j] = oa * sds[j];
            }
        }
    }
    Ok(TraversalGrid {
        steps,
        shape_dims: shape_dims.to_vec(),
        app_dims: app_dims.to_vec(),
        offsets,
        images: gen.generate(&z)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    /// The VAE generator architecture.
    Generator,
    /// One fully connected layer, no nonlinearity.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub variant: Variant,
    pub filters: usize,
    pub hidden: usize,
    pub decoder: DecoderKind,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            n_train: 4000,
            n_test: 500,
            epochs: 300,
            batch_size: 64,
            lr: 1e-3,
            momentum: 0.5,
            seed: 0,
            variant: Variant::Conv,
            filters: 16,
            hidden: 256,
            decoder: DecoderKind::Generator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub n_train: usize,
    pub n_test: usize,
    pub decoder: DecoderKind,
    /// Mean per-pixel ℓ1 between generated and synthesized test faces;
    /// absent when training diverged.
    pub mean_l1: Option<f64>,
    pub train_l1: Option<f64>,
    /// Mean squared per-pixel error of each epoch.
    pub trace: Vec<f64>,
    pub diverged: Option<String>,
}

/// Trains a generator directly on `(Z_AAM, Y)` pairs with SGD and
/// momentum, minimizing the per-image sum of squared pixel errors
/// averaged over each mini-batch, then scores fresh pairs.
pub fn supervised_replication(
    aam: &AamModel,
    config: &ReplicationConfig,
) -> Result<(ReplicationReport, GeneratorNet)> {
    if config.n_train < 2 || config.n_test == 0 || config.batch_size < 2 {
        return Err(Error::param(
            "replication needs n_train ≥ 2, n_test ≥ 1 and batch size ≥ 2",
        ));
    }
    let train_codes = aam.sample_codes(
        config.n_train,
        &mut substream(config.seed, "replicate/train"),
    )?;
    let test_codes =
        aam.sample_codes(config.n_test, &mut substream(config.seed, "replicate/test"))?;
    let train_y = synthesize_all(aam, &train_codes)?;
    let test_y = synthesize_all(aam, &test_codes)?;
    let train_z = codes_matrix(&train_codes)?;
    let test_z = codes_matrix(&test_codes)?;

    let arch = Architecture {
        variant: config.variant,
        d: aam.code_dim(),
        frame: aam.frame,
        filters: config.filters,
        hidden: config.hidden,
    };
    let mut init = substream(config.seed, "replicate/init");
    let mut gen = match config.decoder {
        DecoderKind::Generator => GeneratorNet::<f32>::new(arch, &mut init)?,
        DecoderKind::Linear => {
            let (w, h) = aam.frame;
            let spec = NetworkSpec::new(vec![
                LayerSpec::Linear { out: w * h },
                LayerSpec::Reshape {
                    channels: 1,
                    height: h,
                    width: w,
                },
            ]);
            GeneratorNet::from_network(arch, Network::new(spec, (arch.d, 1, 1), &mut init)?)?
        }
    };
    let x_all = Tensor::<f32>::from_f64([config.n_train, arch.d, 1, 1], train_z.as_slice())?;
    let y_all = images_tensor::<f32>(&train_y, aam.frame)?;
    let mut opt = SgdMomentum::new(&gen.net, config.lr, config.momentum);
    let mut shuffle = substream(config.seed, "replicate/shuffle");
    let mut order: Vec<usize> = (0..config.n_train).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut diverged = None;
    let pixels = (aam.frame.0 * aam.frame.1) as f64;

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let (mut sse, mut seen) = (0.0f64, 0usize);
        for batch in order.chunks(config.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let x = x_all.gather(batch);
            let y = y_all.gather(batch);
            gen.net.zero_grad();
            let y_hat = match gen.net.forward(&x, Mode::Train) {
                Ok(t) => t,
                Err(Error::Diverged { reason, .. }) => {
                    diverged = Some(format!("epoch {epoch}: {reason}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let k = 2.0 / batch.len() as f32;
            let mut dy = Vec::with_capacity(y.data().len());
            for (&a, &b) in y.data().iter().zip(y_hat.data()) {
                let r = b - a;
                sse += (r as f64) * (r as f64);
                dy.push(k * r);
            }
            if !sse.is_finite() {
                diverged = Some(format!("epoch {epoch}: non-finite loss"));
                break 'epochs;
            }
            gen.net.backward(&Tensor::new(y_hat.shape(), dy)?)?;
            opt.step(&mut gen.net)?;
            seen += batch.len();
        }
        trace.push(sse / (seen as f64 * pixels));
    }

    let mean_l1 = |z: &DenseMatrix, y: &[GreyImage]| -> Result<f64> {
        let out = gen.generate(z)?;
        Ok(out.iter().zip(y).map(|(a, b)| pixel_l1(a, b)).sum::<f64>() / y.len() as f64)
    };
    let (test_l1, train_l1) = if diverged.is_some() {
        (None, None)
    } else {
        (
            Some(mean_l1(&test_z, &test_y)?),
            Some(mean_l1(&train_z, &train_y)?),
        )
    };
    Ok((
        ReplicationReport {
            n_train: config.n_train,
            n_test: config.n_test,
            decoder: config.decoder,
            mean_l1: test_l1,
            train_l1,
            trace,
            diverged,
        },
        gen,
    ))
}
