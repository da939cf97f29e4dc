//! Variational autoencoder over face images: a transposed-convolution (or
//! fully connected) generator, a mirrored inference network with μ and
//! log σ² heads, and a Gaussian-likelihood ELBO.

mod bundle;

pub use bundle::{load_bundle, read_trace_csv, save_bundle, write_trace_csv};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, LayerSpec, Mode, Network, NetworkSpec, Scalar, Shape, Tensor};
use crate::numerics::DenseMatrix;
use crate::raster::GreyImage;
use crate::seed::substream;

/// log σ² is clamped to `[-LOGVAR_LIMIT, LOGVAR_LIMIT]`.
pub const LOGVAR_LIMIT: f64 = 10.0;
const LEAK: f64 = 0.2;
const INFER_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Conv,
    Fc,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Conv => "Conv",
            Variant::Fc => "FC",
        }
    }
}

/// Network sizes. For the conv variant the frame must be square with side
/// `4·2^s`; the first generator layer has `filters·2^(s−1)` channels and
/// each later one halves it, ending in one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub variant: Variant,
    pub d: usize,
    /// `(width, height)`.
    pub frame: (usize, usize),
    pub filters: usize,
    pub hidden: usize,
}

impl Architecture {
    fn upsamplings(&self) -> Result<usize> {
        let (w, h) = self.frame;
        if h != w || h < 8 || h % 4 != 0 || !(h / 4).is_power_of_two() {
            return Err(Error::param(format!(
                "conv networks need a square frame of side 4·2^s (s ≥ 1), got {w}x{h}"
            )));
        }
        Ok((h / 4).trailing_zeros() as usize)
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::param("latent dimension must be at least 1"));
        }
        if self.frame.0 == 0 || self.frame.1 == 0 {
            return Err(Error::param("empty frame"));
        }
        match self.variant {
            Variant::Conv => {
                self.upsamplings()?;
                if self.filters == 0 {
                    return Err(Error::param("filters must be positive"));
                }
            }
            Variant::Fc => {
                if self.hidden == 0 {
                    return Err(Error::param("hidden width must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn generator_spec(&self) -> Result<NetworkSpec> {
        self.validate()?;
        let (w, h) = self.frame;
        let mut layers = Vec::new();
        match self.variant {
            Variant::Conv => {
                let s = self.upsamplings()?;
                layers.push(LayerSpec::ConvTranspose {
                    out: self.filters << (s - 1),
                    kernel: 4,
                    stride: 1,
                    padding: 0,
                });
                layers.push(LayerSpec::Relu);
                layers.push(LayerSpec::BatchNorm);
                for j in 0..s {
                    let last = j + 1 == s;
                    let out = if last { 1 } else { self.filters << (s - 2 - j) };
                    layers.push(LayerSpec::ConvTranspose {
                        out,
                        kernel: 4,
                        stride: 2,
                        padding: 1,
                    });
                    if !last {
                        layers.push(LayerSpec::Relu);
                        layers.push(LayerSpec::BatchNorm);
                    }
                }
                layers.push(LayerSpec::Tanh);
            }
            Variant::Fc => {
                for _ in 0..3 {
                    layers.push(LayerSpec::Linear { out: self.hidden });
                    layers.push(LayerSpec::Relu);
                    layers.push(LayerSpec::BatchNorm);
                }
                layers.push(LayerSpec::Linear { out: h * w });
                layers.push(LayerSpec::Tanh);
                layers.push(LayerSpec::Reshape {
                    channels: 1,
                    height: h,
                    width: w,
                });
            }
        }
        Ok(NetworkSpec::new(layers))
    }

    /// Shared encoder body; both heads read its flattened output.
    pub fn trunk_spec(&self) -> Result<NetworkSpec> {
        self.validate()?;
        let mut layers = Vec::new();
        match self.variant {
            Variant::Conv => {
                let s = self.upsamplings()?;
                for j in 0..s {
                    layers.push(LayerSpec::Conv {
                        out: self.filters << j,
                        kernel: 4,
                        stride: 2,
                        padding: 1,
                    });
                    layers.push(LayerSpec::LeakyRelu { slope: LEAK });
                    layers.push(LayerSpec::BatchNorm);
                }
            }
            Variant::Fc => {
                for _ in 0..3 {
                    layers.push(LayerSpec::Linear { out: self.hidden });
                    layers.push(LayerSpec::LeakyRelu { slope: LEAK });
                    layers.push(LayerSpec::BatchNorm);
                }
            }
        }
        Ok(NetworkSpec::new(layers))
    }

    pub fn head_spec(&self) -> NetworkSpec {
        NetworkSpec::new(vec![LayerSpec::Linear { out: self.d }])
    }

    fn image_shape(&self) -> Shape {
        (1, self.frame.1, self.frame.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub d: usize,
    pub variant: Variant,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Observation noise sd; `1/√2` makes the reconstruction term a plain
    /// sum of squared errors.
    pub sigma: f64,
    pub seed: u64,
    #[serde(default = "default_filters")]
    pub filters: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
}

fn default_filters() -> usize {
    64
}
fn default_hidden() -> usize {
    256
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            d: 20,
            variant: Variant::Conv,
            batch_size: 128,
            epochs: 100,
            lr: 2e-4,
            sigma: std::f64::consts::FRAC_1_SQRT_2,
            seed: 0,
            filters: default_filters(),
            hidden: default_hidden(),
            beta1: default_beta1(),
            beta2: default_beta2(),
        }
    }
}

impl VaeConfig {
    pub fn architecture(&self, frame: (usize, usize)) -> Architecture {
        Architecture {
            variant: self.variant,
            d: self.d,
            frame,
            filters: self.filters,
            hidden: self.hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::param("d must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::param(
                "batch size must be at least 2 for batch normalization",
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!(
                "observation sd must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Decoder `f_θ`: latent codes to images in (−1, 1).
#[derive(Debug, Clone)]
pub struct GeneratorNet<T = f32> {
    pub arch: Architecture,
    pub net: Network<T>,
}

/// Encoder with posterior mean and log-variance heads on a shared trunk.
#[derive(Debug, Clone)]
pub struct InferenceNet<T = f32> {
    pub arch: Architecture,
    pub trunk: Network<T>,
    pub mu: Network<T>,
    pub logvar: Network<T>,
}

impl<T: Scalar> PartialEq for GeneratorNet<T> {
    fn eq(&self, o: &Self) -> bool {
        self.arch == o.arch && self.net == o.net
    }
}

impl<T: Scalar> PartialEq for InferenceNet<T> {
    fn eq(&self, o: &Self) -> bool {
        self.arch == o.arch && self.trunk == o.trunk && self.mu == o.mu && self.logvar == o.logvar
    }
}

impl<T: Scalar> GeneratorNet<T> {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let net = Network::new(arch.generator_spec()?, (arch.d, 1, 1), rng)?;
        Ok(Self { arch, net })
    }

    /// A generator with a custom layer stack reading `(d, 1, 1)` codes and
    /// emitting `(1, h, w)` images.
    pub fn from_network(arch: Architecture, net: Network<T>) -> Result<Self> {
        if net.input_shape() != (arch.d, 1, 1) || net.output_shape() != arch.image_shape() {
            return Err(Error::param(format!(
                "network maps {:?} to {:?}, expected ({}, 1, 1) to {:?}",
                net.input_shape(),
                net.output_shape(),
                arch.d,
                arch.image_shape()
            )));
        }
        Ok(Self { arch, net })
    }

    pub fn d(&self) -> usize {
        self.arch.d
    }

    /// Eval-mode decoding of the rows of `z`.
    pub fn generate(&self, z: &DenseMatrix) -> Result<Vec<GreyImage>> {
        if z.cols() != self.arch.d {
            return Err(Error::param(format!(
                "generator expects {}-dimensional codes, got {}",
                self.arch.d,
                z.cols()
            )));
        }
        let (w, h) = self.arch.frame;
        let mut out = Vec::with_capacity(z.rows());
        let mut start = 0;
        while start < z.rows() {
            let end = (start + INFER_CHUNK).min(z.rows());
            let t = Tensor::<T>::from_f64(
                [end - start, self.arch.d, 1, 1],
                &z.as_slice()[start * z.cols()..end * z.cols()],
            )?;
            let y = self.net.infer(&t)?;
            for i in 0..y.batch() {
                let px = y.item(i).iter().map(|v| v.to_f64_lossy()).collect();
                out.push(GreyImage::new(w, h, px)?);
            }
            start = end;
        }
        Ok(out)
    }
}

impl<T: Scalar> InferenceNet<T> {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let trunk = Network::new(arch.trunk_spec()?, arch.image_shape(), rng)?;
        let body = trunk.output_shape();
        let mu = Network::new(arch.head_spec(), body, rng)?;
        let logvar = Network::new(arch.head_spec(), body, rng)?;
        Ok(Self {
            arch,
            trunk,
            mu,
            logvar,
        })
    }

    fn check_frame(&self, images: &[GreyImage]) -> Result<()> {
        let (w, h) = self.arch.frame;
        for img in images {
            if img.frame() != (w, h) {
                return Err(Error::param(format!(
                    "encoder expects {w}x{h} images, got {}x{}",
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(())
    }

    /// Posterior means and clamped log-variances in eval mode.
    pub fn posterior(&self, images: &[GreyImage]) -> Result<(DenseMatrix, DenseMatrix)> {
        self.check_frame(images)?;
        let d = self.arch.d;
        let mut mu = Vec::with_capacity(images.len() * d);
        let mut lv = Vec::with_capacity(images.len() * d);
        for chunk in images.chunks(INFER_CHUNK) {
            let x = images_tensor::<T>(chunk, self.arch.frame)?;
            let h = self.trunk.infer(&x)?;
            mu.extend(self.mu.infer(&h)?.to_f64());
            lv.extend(
                self.logvar
                    .infer(&h)?
                    .to_f64()
                    .into_iter()
                    .map(|v| v.clamp(-LOGVAR_LIMIT, LOGVAR_LIMIT)),
            );
        }
        Ok((
            DenseMatrix::new(images.len(), d, mu)?,
            DenseMatrix::new(images.len(), d, lv)?,
        ))
    }

    /// `Z_G`: the posterior mean of every image.
    pub fn encode(&self, images: &[GreyImage]) -> Result<DenseMatrix> {
        Ok(self.posterior(images)?.0)
    }

    pub fn cast<U: Scalar>(&self) -> InferenceNet<U> {
        InferenceNet {
            arch: self.arch,
            trunk: self.trunk.cast(),
            mu: self.mu.cast(),
            logvar: self.logvar.cast(),
        }
    }

    fn zero_grad(&mut self) {
        self.trunk.zero_grad();
        self.mu.zero_grad();
        self.logvar.zero_grad();
    }
}

pub fn encode(inf: &InferenceNet, images: &[GreyImage]) -> Result<DenseMatrix> {
    inf.encode(images)
}

pub fn generate(gen: &GeneratorNet, z: &DenseMatrix) -> Result<Vec<GreyImage>> {
    gen.generate(z)
}

pub(crate) fn images_tensor<T: Scalar>(
    images: &[GreyImage],
    (w, h): (usize, usize),
) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if img.frame() != (w, h) {
            return Err(Error::param(format!(
                "expected {w}x{h} images, got {}x{}",
                img.width(),
                img.height()
            )));
        }
        data.extend(img.pixels().iter().map(|&v| T::from_f64_lossy(v)));
    }
    Tensor::new([images.len(), 1, h, w], data)
}

/// `Σⱼ ½(μⱼ² + σⱼ² − 1 − log σⱼ²)`, with log σ² clamped first.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| {
            let lv = lv.clamp(-LOGVAR_LIMIT, LOGVAR_LIMIT);
            0.5 * (m * m + lv.exp() - 1.0 - lv)
        })
        .sum()
}

/// `z = μ + exp(log σ² / 2) ⊙ u` with `u ~ N(0, I)`.
pub fn reparameterize<R: Rng + ?Sized>(
    mu: &[f64],
    logvar: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() {
        return Err(Error::param("mean and log-variance differ in length"));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| {
            let u: f64 = rng.sample(StandardNormal);
            m + (0.5 * lv.clamp(-LOGVAR_LIMIT, LOGVAR_LIMIT)).exp() * u
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// Negative ELBO up to a constant, averaged over the batch rows.
pub fn elbo_loss(
    y: &DenseMatrix,
    y_hat: &DenseMatrix,
    mu: &DenseMatrix,
    logvar: &DenseMatrix,
    sigma: f64,
) -> Result<ElboTerms> {
    let n = y.rows();
    if y_hat.rows() != n
        || y_hat.cols() != y.cols()
        || mu.rows() != n
        || logvar.rows() != n
        || mu.cols() != logvar.cols()
    {
        return Err(Error::param("ELBO operands disagree in shape"));
    }
    if n == 0 {
        return Err(Error::param("empty batch"));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::param("observation sd must be positive"));
    }
    let sse: f64 = y
        .as_slice()
        .iter()
        .zip(y_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let recon = sse / (2.0 * sigma * sigma) / n as f64;
    let kl = (0..n)
        .map(|i| gaussian_kl(mu.row(i), logvar.row(i)))
        .sum::<f64>()
        / n as f64;
    Ok(ElboTerms {
        recon,
        kl,
        total: recon + kl,
    })
}

/// One forward/backward pass of the negative ELBO on a batch with fixed
/// noise `u` (`n × d`), accumulating gradients into every network.
pub fn elbo_step<T: Scalar>(
    gen: &mut GeneratorNet<T>,
    inf: &mut InferenceNet<T>,
    y: &Tensor<T>,
    u: &[T],
    sigma: f64,
) -> Result<ElboTerms> {
    let n = y.batch();
    let d = inf.arch.d;
    if u.len() != n * d {
        return Err(Error::param("noise has the wrong shape"));
    }
    let h = inf.trunk.forward(y, Mode::Train)?;
    let mu = inf.mu.forward(&h, Mode::Train)?;
    let lv_raw = inf.logvar.forward(&h, Mode::Train)?;
    let limit = T::from_f64_lossy(LOGVAR_LIMIT);
    let half = T::from_f64_lossy(0.5);
    let lv: Vec<T> = lv_raw
        .data()
        .iter()
        .map(|v| v.max(-limit).min(limit))
        .collect();
    let sd: Vec<T> = lv.iter().map(|v| (half * *v).exp()).collect();
    let z: Vec<T> = mu
        .data()
        .iter()
        .zip(&sd)
        .zip(u)
        .map(|((&m, &s), &e)| m + s * e)
        .collect();
    let y_hat = gen
        .net
        .forward(&Tensor::new([n, d, 1, 1], z)?, Mode::Train)?;

    let inv_n = 1.0 / n as f64;
    let s2 = sigma * sigma;
    let mut sse = 0.0f64;
    let mut dy = Vec::with_capacity(y.data().len());
    let k = T::from_f64_lossy(inv_n / s2);
    for (&a, &b) in y.data().iter().zip(y_hat.data()) {
        let r = b - a;
        let rf = r.to_f64_lossy();
        sse += rf * rf;
        dy.push(r * k);
    }
    let mut kl = 0.0f64;
    for (&m, &l) in mu.data().iter().zip(&lv) {
        let (m, l) = (m.to_f64_lossy(), l.to_f64_lossy());
        kl += 0.5 * (m * m + l.exp() - 1.0 - l);
    }
    let recon = sse / (2.0 * s2) * inv_n;
    let kl = kl * inv_n;
    if !(recon.is_finite() && kl.is_finite()) {
        return Err(Error::Diverged {
            layer: None,
            reason: format!("loss became non-finite (recon {recon}, kl {kl})"),
        });
    }

    let dz = gen.net.backward(&Tensor::new(y_hat.shape(), dy)?)?;
    let tn = T::from_f64_lossy(inv_n);
    let mut dmu = Vec::with_capacity(n * d);
    let mut dlv = Vec::with_capacity(n * d);
    for i in 0..n * d {
        let g = dz.data()[i];
        dmu.push(g + mu.data()[i] * tn);
        let raw = lv_raw.data()[i];
        if raw > -limit && raw < limit {
            dlv.push(g * u[i] * half * sd[i] + half * (sd[i] * sd[i] - T::one()) * tn);
        } else {
            dlv.push(T::zero());
        }
    }
    let dh_mu = inf.mu.backward(&Tensor::new(mu.shape(), dmu)?)?;
    let dh_lv = inf.logvar.backward(&Tensor::new(lv_raw.shape(), dlv)?)?;
    let dh: Vec<T> = dh_mu
        .data()
        .iter()
        .zip(dh_lv.data())
        .map(|(&a, &b)| a + b)
        .collect();
    inf.trunk.backward(&Tensor::new(h.shape(), dh)?)?;
    Ok(ElboTerms {
        recon,
        kl,
        total: recon + kl,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochStats>,
    /// Set when training stopped on a non-finite loss or activation.
    pub diverged: Option<String>,
}

impl TrainingTrace {
    pub fn totals(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.total).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub generator: GeneratorNet,
    pub inference: InferenceNet,
    pub trace: TrainingTrace,
}

pub fn train_vae(images: &[GreyImage], config: &VaeConfig) -> Result<VaeModel> {
    train_vae_observed(images, config, |_| {})
}

/// [`train_vae`] reporting each finished epoch to `observe`.
///
/// Mini-batches are reshuffled every epoch; a trailing batch of one image
/// is skipped because batch statistics are undefined for it. Divergence
/// stops training and is recorded in the trace rather than returned as an
/// error.
pub fn train_vae_observed<F: FnMut(&EpochStats)>(
    images: &[GreyImage],
    config: &VaeConfig,
    mut observe: F,
) -> Result<VaeModel> {
    config.validate()?;
    let first = images
        .first()
        .ok_or_else(|| Error::data("no training images"))?;
    let frame = first.frame();
    if images.len() < config.batch_size {
        return Err(Error::data(format!(
            "corpus of {} images is smaller than the batch size {}",
            images.len(),
            config.batch_size
        )));
    }
    if images
        .iter()
        .any(|i| i.pixels().iter().any(|v| !(-1.0..=1.0).contains(v)))
    {
        return Err(Error::data("training images must lie in [-1, 1]"));
    }
    let arch = config.architecture(frame);
    let mut gen = GeneratorNet::<f32>::new(arch, &mut substream(config.seed, "vae/generator"))?;
    let mut inf = InferenceNet::<f32>::new(arch, &mut substream(config.seed, "vae/inference"))?;
    let data = images_tensor::<f32>(images, frame)?;
    let adam = AdamConfig {
        lr: config.lr,
        beta1: config.beta1,
        beta2: config.beta2,
        ..Default::default()
    };
    let mut opt_gen = Adam::new(&gen.net, adam);
    let mut opt_trunk = Adam::new(&inf.trunk, adam);
    let mut opt_mu = Adam::new(&inf.mu, adam);
    let mut opt_lv = Adam::new(&inf.logvar, adam);
    let mut shuffle = substream(config.seed, "vae/shuffle");
    let mut noise = substream(config.seed, "vae/noise");
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut trace = TrainingTrace::default();

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let (mut recon, mut kl, mut seen) = (0.0, 0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let y = data.gather(batch);
            let u: Vec<f32> = (0..batch.len() * arch.d)
                .map(|_| noise.sample::<f32, _>(StandardNormal))
                .collect();
            gen.net.zero_grad();
            inf.zero_grad();
            let terms = match elbo_step(&mut gen, &mut inf, &y, &u, config.sigma) {
                Ok(t) => t,
                Err(Error::Diverged { layer, reason }) => {
                    trace.diverged = Some(match layer {
                        Some(l) => format!("epoch {epoch}, layer {l}: {reason}"),
                        None => format!("epoch {epoch}: {reason}"),
                    });
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            opt_gen.step(&mut gen.net)?;
            opt_trunk.step(&mut inf.trunk)?;
            opt_mu.step(&mut inf.mu)?;
            opt_lv.step(&mut inf.logvar)?;
            recon += terms.recon * batch.len() as f64;
            kl += terms.kl * batch.len() as f64;
            seen += batch.len();
        }
        let stats = EpochStats {
            epoch,
            recon: recon / seen as f64,
            kl: kl / seen as f64,
            total: (recon + kl) / seen as f64,
        };
        observe(&stats);
        trace.epochs.push(stats);
    }
    Ok(VaeModel {
        config: config.clone(),
        generator: gen,
        inference: inf,
        trace,
    })
}
