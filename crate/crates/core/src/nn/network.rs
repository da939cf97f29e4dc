use rand::Rng;
use rand_distr::StandardNormal;

use super::spec::{infer_shapes, LayerSpec, NetworkSpec, Shape};
use super::tensor::Tensor;
use super::{gemm, Scalar};
use crate::error::{Error, Result};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_SD: f64 = 0.02;
/// Running-statistics momentum of batch normalization.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; the network is a pure function.
    Eval,
}

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

/// Gradients are scratch space and take no part in equality.
impl<T: PartialEq> PartialEq for Param<T> {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name && self.shape == o.shape && self.value == o.value
    }
}

impl<T: Scalar> Param<T> {
    fn new(name: String, shape: Vec<usize>, value: Vec<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Self {
            name,
            shape,
            value,
            grad,
        }
    }

    fn gaussian<R: Rng + ?Sized>(name: String, shape: Vec<usize>, sd: f64, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let value = (0..len)
            .map(|_| {
                let u: f64 = rng.sample(StandardNormal);
                T::from_f64_lossy(sd * u)
            })
            .collect();
        Self::new(name, shape, value)
    }

    fn constant(name: String, len: usize, v: f64) -> Self {
        Self::new(name, vec![len], vec![T::from_f64_lossy(v); len])
    }

    fn cast<U: Scalar>(&self) -> Param<U> {
        Param {
            name: self.name.clone(),
            shape: self.shape.clone(),
            value: cast_vec(&self.value),
            grad: cast_vec(&self.grad),
        }
    }
}

fn cast_vec<T: Scalar, U: Scalar>(v: &[T]) -> Vec<U> {
    v.iter()
        .map(|x| U::from_f64_lossy(x.to_f64_lossy()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum LayerState<T> {
    /// Weight `[out][in]`.
    Linear {
        w: Param<T>,
        b: Param<T>,
    },
    /// Weight `[out][in·k·k]`.
    Conv {
        w: Param<T>,
        b: Param<T>,
    },
    /// Weight `[in][out·k·k]`.
    ConvTranspose {
        w: Param<T>,
        b: Param<T>,
    },
    BatchNorm {
        gamma: Param<T>,
        beta: Param<T>,
        running_mean: Vec<T>,
        running_var: Vec<T>,
    },
    Plain,
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Input(Vec<T>),
    Cols(Vec<T>),
    Output(Vec<T>),
    Norm { xhat: Vec<T>, inv_std: Vec<T> },
    Nothing,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    batch: usize,
    mode: Mode,
    layers: Vec<LayerCache<T>>,
}

/// Parameters, buffers and the last forward cache of one network.
///
/// Activations are kept channel-major internally (`[c][n][h][w]`), so a
/// whole batch of convolutions becomes a single matrix product.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    input: Shape,
    shapes: Vec<Shape>,
    layers: Vec<LayerState<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.input == other.input && self.layers == other.layers
    }
}

impl<T: Scalar> Network<T> {
    /// Builds a network with Gaussian(0, 0.02²) weights, zero biases and
    /// unit batch-norm scales.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, input: Shape, rng: &mut R) -> Result<Self> {
        let shapes = infer_shapes(&spec, input)?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut cur = input;
        for (i, layer) in spec.layers.iter().enumerate() {
            let (c, h, w) = cur;
            let state = match *layer {
                LayerSpec::Linear { out } => {
                    let fan_in = c * h * w;
                    LayerState::Linear {
                        w: Param::gaussian(
                            format!("{i}.linear.weight"),
                            vec![out, fan_in],
                            INIT_SD,
                            rng,
                        ),
                        b: Param::constant(format!("{i}.linear.bias"), out, 0.0),
                    }
                }
                LayerSpec::Conv { out, kernel, .. } => LayerState::Conv {
                    w: Param::gaussian(
                        format!("{i}.conv.weight"),
                        vec![out, c, kernel, kernel],
                        INIT_SD,
                        rng,
                    ),
                    b: Param::constant(format!("{i}.conv.bias"), out, 0.0),
                },
                LayerSpec::ConvTranspose { out, kernel, .. } => LayerState::ConvTranspose {
                    w: Param::gaussian(
                        format!("{i}.conv_transpose.weight"),
                        vec![c, out, kernel, kernel],
                        INIT_SD,
                        rng,
                    ),
                    b: Param::constant(format!("{i}.conv_transpose.bias"), out, 0.0),
                },
                LayerSpec::BatchNorm => LayerState::BatchNorm {
                    gamma: Param::constant(format!("{i}.batch_norm.scale"), c, 1.0),
                    beta: Param::constant(format!("{i}.batch_norm.offset"), c, 0.0),
                    running_mean: vec![T::zero(); c],
                    running_var: vec![T::one(); c],
                },
                _ => LayerState::Plain,
            };
            layers.push(state);
            cur = shapes[i];
        }
        Ok(Self {
            spec,
            input,
            shapes,
            layers,
            cache: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.shapes.last().copied().unwrap_or(self.input)
    }

    pub fn layer_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Trainable parameters in layer order.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for l in &self.layers {
            match l {
                LayerState::Linear { w, b }
                | LayerState::Conv { w, b }
                | LayerState::ConvTranspose { w, b } => {
                    v.push(w);
                    v.push(b);
                }
                LayerState::BatchNorm { gamma, beta, .. } => {
                    v.push(gamma);
                    v.push(beta);
                }
                LayerState::Plain => {}
            }
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for l in &mut self.layers {
            match l {
                LayerState::Linear { w, b }
                | LayerState::Conv { w, b }
                | LayerState::ConvTranspose { w, b } => {
                    v.push(w);
                    v.push(b);
                }
                LayerState::BatchNorm { gamma, beta, .. } => {
                    v.push(gamma);
                    v.push(beta);
                }
                LayerState::Plain => {}
            }
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn param_vector(&self) -> Vec<T> {
        self.params()
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect()
    }

    pub fn grad_vector(&self) -> Vec<T> {
        self.params()
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    pub fn set_param_vector(&mut self, v: &[T]) -> Result<()> {
        if v.len() != self.param_count() {
            return Err(Error::param(format!(
                "network has {} parameters, got {}",
                self.param_count(),
                v.len()
            )));
        }
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.value.len();
            p.value.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Every stored tensor (parameters and batch-norm running statistics)
    /// as `(name, shape, values)`, in serialization order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut v: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                LayerState::Linear { w, b }
                | LayerState::Conv { w, b }
                | LayerState::ConvTranspose { w, b } => {
                    v.push((w.name.clone(), w.shape.clone(), &w.value));
                    v.push((b.name.clone(), b.shape.clone(), &b.value));
                }
                LayerState::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    v.push((gamma.name.clone(), gamma.shape.clone(), &gamma.value));
                    v.push((beta.name.clone(), beta.shape.clone(), &beta.value));
                    v.push((
                        format!("{i}.batch_norm.running_mean"),
                        vec![running_mean.len()],
                        running_mean,
                    ));
                    v.push((
                        format!("{i}.batch_norm.running_var"),
                        vec![running_var.len()],
                        running_var,
                    ));
                }
                LayerState::Plain => {}
            }
        }
        v
    }

    /// Overwrites stored tensors in [`Network::tensors`] order.
    pub fn load_tensors(&mut self, values: &[Vec<T>]) -> Result<()> {
        let mut it = values.iter();
        let mut next = |dst: &mut Vec<T>, name: &str| -> Result<()> {
            let src = it
                .next()
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if src.len() != dst.len() {
                return Err(Error::Format(format!(
                    "tensor {name} has {} values, expected {}",
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
            Ok(())
        };
        for l in &mut self.layers {
            match l {
                LayerState::Linear { w, b }
                | LayerState::Conv { w, b }
                | LayerState::ConvTranspose { w, b } => {
                    next(&mut w.value, &w.name)?;
                    next(&mut b.value, &b.name)?;
                }
                LayerState::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    next(&mut gamma.value, &gamma.name)?;
                    next(&mut beta.value, &beta.name)?;
                    next(running_mean, "running_mean")?;
                    next(running_var, "running_var")?;
                    if running_var.iter().any(|v| *v < T::zero()) {
                        return Err(Error::Format("negative running variance".into()));
                    }
                }
                LayerState::Plain => {}
            }
        }
        if it.next().is_some() {
            return Err(Error::Format("more tensors than the spec declares".into()));
        }
        Ok(())
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerState::Linear { w, b } => LayerState::Linear {
                    w: w.cast(),
                    b: b.cast(),
                },
                LayerState::Conv { w, b } => LayerState::Conv {
                    w: w.cast(),
                    b: b.cast(),
                },
                LayerState::ConvTranspose { w, b } => LayerState::ConvTranspose {
                    w: w.cast(),
                    b: b.cast(),
                },
                LayerState::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => LayerState::BatchNorm {
                    gamma: gamma.cast(),
                    beta: beta.cast(),
                    running_mean: cast_vec(running_mean),
                    running_var: cast_vec(running_var),
                },
                LayerState::Plain => LayerState::Plain,
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            input: self.input,
            shapes: self.shapes.clone(),
            layers,
            cache: None,
        }
    }

    /// Sets a linear layer's weight to the identity and its bias to zero.
    pub fn set_linear_identity(&mut self, layer: usize) -> Result<()> {
        match self.layers.get_mut(layer) {
            Some(LayerState::Linear { w, b }) if w.shape[0] == w.shape[1] => {
                let n = w.shape[0];
                w.value.iter_mut().for_each(|v| *v = T::zero());
                for i in 0..n {
                    w.value[i * n + i] = T::one();
                }
                b.value.iter_mut().for_each(|v| *v = T::zero());
                Ok(())
            }
            _ => Err(Error::param(format!(
                "layer {layer} is not a square linear layer"
            ))),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [n, c, h, w] = x.shape();
        if (c, h, w) != self.input || n == 0 {
            return Err(Error::param(format!(
                "network expects items of shape {:?}, got batch {n} of {:?}",
                self.input,
                (c, h, w)
            )));
        }
        Ok(())
    }

    /// Forward pass that records what [`Network::backward`] needs. Train
    /// mode normalizes with batch statistics and updates running ones.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.cache = None;
        let (out, caches, stats) = self.run(x, mode, true)?;
        if mode == Mode::Train {
            let mom = T::from_f64_lossy(BN_MOMENTUM);
            let one = T::one();
            for (l, st) in self.layers.iter_mut().zip(stats) {
                if let (
                    LayerState::BatchNorm {
                        running_mean,
                        running_var,
                        ..
                    },
                    Some((mean, var)),
                ) = (l, st)
                {
                    for (r, m) in running_mean.iter_mut().zip(mean) {
                        *r = mom * *r + (one - mom) * m;
                    }
                    for (r, v) in running_var.iter_mut().zip(var) {
                        *r = mom * *r + (one - mom) * v;
                    }
                }
            }
        }
        self.cache = Some(Cache {
            batch: x.batch(),
            mode,
            layers: caches,
        });
        Ok(out)
    }

    /// Eval-mode forward pass without side effects.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        Ok(self.run(x, Mode::Eval, false)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn run(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        keep: bool,
    ) -> Result<(Tensor<T>, Vec<LayerCache<T>>, Vec<Option<(Vec<T>, Vec<T>)>>)> {
        let n = x.batch();
        let mut act = nchw_to_cnhw(x.data(), n, self.input);
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::with_capacity(self.layers.len());
        let mut shape = self.input;
        for (i, (spec, state)) in self.spec.layers.iter().zip(&self.layers).enumerate() {
            let out_shape = self.shapes[i];
            let mut stat = None;
            let (next, cache) = match (spec, state) {
                (LayerSpec::Linear { out }, LayerState::Linear { w, b }) => {
                    let xm = flatten_features(&act, n, shape);
                    let f = shape.0 * shape.1 * shape.2;
                    let mut y = vec![T::zero(); out * n];
                    for (o, row) in y.chunks_mut(n).enumerate() {
                        row.iter_mut().for_each(|v| *v = b.value[o]);
                    }
                    gemm(false, false, *out, n, f, &w.value, &xm, T::one(), &mut y);
                    (y, LayerCache::Input(xm))
                }
                (
                    LayerSpec::Conv {
                        out,
                        kernel,
                        stride,
                        padding,
                    },
                    LayerState::Conv { w, b },
                ) => {
                    let geo = Geometry::new(
                        shape.0,
                        n,
                        (shape.1, shape.2),
                        (out_shape.1, out_shape.2),
                        *kernel,
                        *stride,
                        *padding,
                    );
                    let cols = im2col(&act, &geo);
                    let ncols = n * out_shape.1 * out_shape.2;
                    let mut y = vec![T::zero(); out * ncols];
                    for (o, row) in y.chunks_mut(ncols).enumerate() {
                        row.iter_mut().for_each(|v| *v = b.value[o]);
                    }
                    gemm(
                        false,
                        false,
                        *out,
                        ncols,
                        geo.rows(),
                        &w.value,
                        &cols,
                        T::one(),
                        &mut y,
                    );
                    (y, LayerCache::Cols(cols))
                }
                (
                    LayerSpec::ConvTranspose {
                        out,
                        kernel,
                        stride,
                        padding,
                    },
                    LayerState::ConvTranspose { w, b },
                ) => {
                    // The adjoint of a convolution from the output frame to
                    // the input frame.
                    let geo = Geometry::new(
                        *out,
                        n,
                        (out_shape.1, out_shape.2),
                        (shape.1, shape.2),
                        *kernel,
                        *stride,
                        *padding,
                    );
                    let ncols = n * shape.1 * shape.2;
                    let mut cols = vec![T::zero(); geo.rows() * ncols];
                    gemm(
                        true,
                        false,
                        geo.rows(),
                        ncols,
                        shape.0,
                        &w.value,
                        &act,
                        T::zero(),
                        &mut cols,
                    );
                    let mut y = vec![T::zero(); out * n * out_shape.1 * out_shape.2];
                    col2im(&cols, &geo, &mut y);
                    let plane = n * out_shape.1 * out_shape.2;
                    for (o, row) in y.chunks_mut(plane).enumerate() {
                        row.iter_mut().for_each(|v| *v = *v + b.value[o]);
                    }
                    (y, LayerCache::Input(act))
                }
                (
                    LayerSpec::BatchNorm,
                    LayerState::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    },
                ) => {
                    let m = n * shape.1 * shape.2;
                    let eps = T::from_f64_lossy(BN_EPS);
                    let mut y = vec![T::zero(); act.len()];
                    let mut xhat = vec![T::zero(); act.len()];
                    let mut inv_std = vec![T::zero(); shape.0];
                    let mut means = vec![T::zero(); shape.0];
                    let mut vars = vec![T::zero(); shape.0];
                    let mf = T::from_usize(m).unwrap();
                    for c in 0..shape.0 {
                        let xs = &act[c * m..(c + 1) * m];
                        let (mean, var) = match mode {
                            Mode::Train => {
                                let mean = xs.iter().fold(T::zero(), |a, &v| a + v) / mf;
                                let var = xs
                                    .iter()
                                    .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                                    / mf;
                                means[c] = mean;
                                vars[c] = if m > 1 {
                                    var * mf / (mf - T::one())
                                } else {
                                    var
                                };
                                (mean, var)
                            }
                            Mode::Eval => (running_mean[c], running_var[c]),
                        };
                        let is = T::one() / (var + eps).sqrt();
                        inv_std[c] = is;
                        let (g, bt) = (gamma.value[c], beta.value[c]);
                        for j in 0..m {
                            let xh = (xs[j] - mean) * is;
                            xhat[c * m + j] = xh;
                            y[c * m + j] = g * xh + bt;
                        }
                    }
                    if mode == Mode::Train {
                        stat = Some((means, vars));
                    }
                    (y, LayerCache::Norm { xhat, inv_std })
                }
                (LayerSpec::Relu, _) => {
                    let y = act.iter().map(|&v| v.max(T::zero())).collect();
                    (y, LayerCache::Input(act))
                }
                (LayerSpec::LeakyRelu { slope }, _) => {
                    let s = T::from_f64_lossy(*slope);
                    let y = act
                        .iter()
                        .map(|&v| if v > T::zero() { v } else { s * v })
                        .collect();
                    (y, LayerCache::Input(act))
                }
                (LayerSpec::Tanh, _) => {
                    let y: Vec<T> = act.iter().map(|v| v.tanh()).collect();
                    (y.clone(), LayerCache::Output(y))
                }
                (LayerSpec::Reshape { .. }, _) => {
                    (reshape(&act, n, shape, out_shape), LayerCache::Nothing)
                }
                _ => {
                    return Err(Error::Contract(format!(
                        "layer {i} state does not match its spec"
                    )))
                }
            };
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    layer: Some(i),
                    reason: format!("non-finite activation after {}", spec.name()),
                });
            }
            caches.push(if keep { cache } else { LayerCache::Nothing });
            stats.push(stat);
            act = next;
            shape = out_shape;
        }
        let out = cnhw_to_nchw(&act, n, shape);
        Ok((
            Tensor::new([n, shape.0, shape.1, shape.2], out)?,
            caches,
            stats,
        ))
    }

    /// Back-propagates `grad_out` through the last forward pass, adding
    /// parameter gradients into each [`Param::grad`] and returning the
    /// gradient with respect to the input. Consumes the cache.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::Contract("backward called without a fresh forward pass".into())
        })?;
        let n = cache.batch;
        let out_shape = self.output_shape();
        if grad_out.shape() != [n, out_shape.0, out_shape.1, out_shape.2] {
            return Err(Error::Contract(format!(
                "output gradient has shape {:?}, forward produced {:?}",
                grad_out.shape(),
                [n, out_shape.0, out_shape.1, out_shape.2]
            )));
        }
        let mut g = nchw_to_cnhw(grad_out.data(), n, out_shape);
        for i in (0..self.layers.len()).rev() {
            let in_shape = if i == 0 {
                self.input
            } else {
                self.shapes[i - 1]
            };
            let o_shape = self.shapes[i];
            let spec = &self.spec.layers[i];
            let lc = &cache.layers[i];
            let state = &mut self.layers[i];
            g = match (spec, state, lc) {
                (LayerSpec::Linear { out }, LayerState::Linear { w, b }, LayerCache::Input(xm)) => {
                    let f = in_shape.0 * in_shape.1 * in_shape.2;
                    for (o, row) in g.chunks(n).enumerate() {
                        b.grad[o] = b.grad[o] + row.iter().fold(T::zero(), |a, &v| a + v);
                    }
                    gemm(false, true, *out, f, n, &g, xm, T::one(), &mut w.grad);
                    let mut dx = vec![T::zero(); f * n];
                    gemm(true, false, f, n, *out, &w.value, &g, T::zero(), &mut dx);
                    unflatten_features(&dx, n, in_shape)
                }
                (
                    LayerSpec::Conv {
                        out,
                        kernel,
                        stride,
                        padding,
                    },
                    LayerState::Conv { w, b },
                    LayerCache::Cols(cols),
                ) => {
                    let geo = Geometry::new(
                        in_shape.0,
                        n,
                        (in_shape.1, in_shape.2),
                        (o_shape.1, o_shape.2),
                        *kernel,
                        *stride,
                        *padding,
                    );
                    let ncols = n * o_shape.1 * o_shape.2;
                    for (o, row) in g.chunks(ncols).enumerate() {
                        b.grad[o] = b.grad[o] + row.iter().fold(T::zero(), |a, &v| a + v);
                    }
                    gemm(
                        false,
                        true,
                        *out,
                        geo.rows(),
                        ncols,
                        &g,
                        cols,
                        T::one(),
                        &mut w.grad,
                    );
                    let mut dcols = vec![T::zero(); geo.rows() * ncols];
                    gemm(
                        true,
                        false,
                        geo.rows(),
                        ncols,
                        *out,
                        &w.value,
                        &g,
                        T::zero(),
                        &mut dcols,
                    );
                    let mut dx = vec![T::zero(); in_shape.0 * n * in_shape.1 * in_shape.2];
                    col2im(&dcols, &geo, &mut dx);
                    dx
                }
                (
                    LayerSpec::ConvTranspose {
                        out,
                        kernel,
                        stride,
                        padding,
                    },
                    LayerState::ConvTranspose { w, b },
                    LayerCache::Input(x),
                ) => {
                    let geo = Geometry::new(
                        *out,
                        n,
                        (o_shape.1, o_shape.2),
                        (in_shape.1, in_shape.2),
                        *kernel,
                        *stride,
                        *padding,
                    );
                    let plane = n * o_shape.1 * o_shape.2;
                    for (o, row) in g.chunks(plane).enumerate() {
                        b.grad[o] = b.grad[o] + row.iter().fold(T::zero(), |a, &v| a + v);
                    }
                    let dcols = im2col(&g, &geo);
                    let ncols = n * in_shape.1 * in_shape.2;
                    // dW[in][out·k·k] += x[in][cols] · dcolsᵀ
                    gemm(
                        false,
                        true,
                        in_shape.0,
                        geo.rows(),
                        ncols,
                        x,
                        &dcols,
                        T::one(),
                        &mut w.grad,
                    );
                    let mut dx = vec![T::zero(); in_shape.0 * ncols];
                    gemm(
                        false,
                        false,
                        in_shape.0,
                        ncols,
                        geo.rows(),
                        &w.value,
                        &dcols,
                        T::zero(),
                        &mut dx,
                    );
                    dx
                }
                (
                    LayerSpec::BatchNorm,
                    LayerState::BatchNorm { gamma, beta, .. },
                    LayerCache::Norm { xhat, inv_std },
                ) => {
                    let m = n * in_shape.1 * in_shape.2;
                    let mf = T::from_usize(m).unwrap();
                    let mut dx = vec![T::zero(); g.len()];
                    for c in 0..in_shape.0 {
                        let dy = &g[c * m..(c + 1) * m];
                        let xh = &xhat[c * m..(c + 1) * m];
                        let sum_dy = dy.iter().fold(T::zero(), |a, &v| a + v);
                        let sum_dy_xh = dy.iter().zip(xh).fold(T::zero(), |a, (&d, &x)| a + d * x);
                        gamma.grad[c] = gamma.grad[c] + sum_dy_xh;
                        beta.grad[c] = beta.grad[c] + sum_dy;
                        let gi = gamma.value[c] * inv_std[c];
                        let out = &mut dx[c * m..(c + 1) * m];
                        match cache.mode {
                            Mode::Train => {
                                let k = gi / mf;
                                for j in 0..m {
                                    out[j] = k * (mf * dy[j] - sum_dy - xh[j] * sum_dy_xh);
                                }
                            }
                            Mode::Eval => {
                                for j in 0..m {
                                    out[j] = gi * dy[j];
                                }
                            }
                        }
                    }
                    dx
                }
                (LayerSpec::Relu, _, LayerCache::Input(x)) => g
                    .iter()
                    .zip(x)
                    .map(|(&d, &v)| if v > T::zero() { d } else { T::zero() })
                    .collect(),
                (LayerSpec::LeakyRelu { slope }, _, LayerCache::Input(x)) => {
                    let s = T::from_f64_lossy(*slope);
                    g.iter()
                        .zip(x)
                        .map(|(&d, &v)| if v > T::zero() { d } else { s * d })
                        .collect()
                }
                (LayerSpec::Tanh, _, LayerCache::Output(y)) => g
                    .iter()
                    .zip(y)
                    .map(|(&d, &t)| d * (T::one() - t * t))
                    .collect(),
                (LayerSpec::Reshape { .. }, _, LayerCache::Nothing) => {
                    reshape(&g, n, o_shape, in_shape)
                }
                _ => {
                    return Err(Error::Contract(format!(
                        "cache for layer {i} does not match its spec"
                    )))
                }
            };
        }
        let dx = cnhw_to_nchw(&g, n, self.input);
        Tensor::new([n, self.input.0, self.input.1, self.input.2], dx)
    }
}

fn nchw_to_cnhw<T: Copy>(x: &[T], n: usize, (c, h, w): Shape) -> Vec<T> {
    let hw = h * w;
    if c == 1 || n == 1 {
        return x.to_vec();
    }
    let mut out = Vec::with_capacity(x.len());
    for ci in 0..c {
        for ni in 0..n {
            let s = (ni * c + ci) * hw;
            out.extend_from_slice(&x[s..s + hw]);
        }
    }
    out
}

fn cnhw_to_nchw<T: Copy>(x: &[T], n: usize, (c, h, w): Shape) -> Vec<T> {
    let hw = h * w;
    if c == 1 || n == 1 {
        return x.to_vec();
    }
    let mut out = Vec::with_capacity(x.len());
    for ni in 0..n {
        for ci in 0..c {
            let s = (ci * n + ni) * hw;
            out.extend_from_slice(&x[s..s + hw]);
        }
    }
    out
}

/// `[c][n][hw]` → `[c·hw][n]` (per-item flat index `c·hw + p`).
fn flatten_features<T: Scalar>(act: &[T], n: usize, (c, h, w): Shape) -> Vec<T> {
    let hw = h * w;
    if hw == 1 {
        return act.to_vec();
    }
    let mut out = vec![T::zero(); act.len()];
    for ci in 0..c {
        for ni in 0..n {
            for p in 0..hw {
                out[(ci * hw + p) * n + ni] = act[(ci * n + ni) * hw + p];
            }
        }
    }
    out
}

fn unflatten_features<T: Scalar>(m: &[T], n: usize, (c, h, w): Shape) -> Vec<T> {
    let hw = h * w;
    if hw == 1 {
        return m.to_vec();
    }
    let mut out = vec![T::zero(); m.len()];
    for ci in 0..c {
        for ni in 0..n {
            for p in 0..hw {
                out[(ci * n + ni) * hw + p] = m[(ci * hw + p) * n + ni];
            }
        }
    }
    out
}

fn reshape<T: Scalar>(act: &[T], n: usize, from: Shape, to: Shape) -> Vec<T> {
    let (hw_a, hw_b) = (from.1 * from.2, to.1 * to.2);
    let mut out = vec![T::zero(); act.len()];
    for cb in 0..to.0 {
        for ni in 0..n {
            for pb in 0..hw_b {
                let f = cb * hw_b + pb;
                let (ca, pa) = (f / hw_a, f % hw_a);
                out[(cb * n + ni) * hw_b + pb] = act[(ca * n + ni) * hw_a + pa];
            }
        }
    }
    out
}

/// Index bookkeeping for a convolution from a `big` frame with `chan`
/// channels down to a `small` frame.
struct Geometry {
    chan: usize,
    n: usize,
    big: (usize, usize),
    small: (usize, usize),
    k: usize,
    s: usize,
    p: usize,
}

impl Geometry {
    fn new(
        chan: usize,
        n: usize,
        big: (usize, usize),
        small: (usize, usize),
        k: usize,
        s: usize,
        p: usize,
    ) -> Self {
        Self {
            chan,
            n,
            big,
            small,
            k,
            s,
            p,
        }
    }

    fn rows(&self) -> usize {
        self.chan * self.k * self.k
    }
}

/// `[chan][n][big]` → `[chan·k·k][n·small]` patch matrix.
fn im2col<T: Scalar>(x: &[T], g: &Geometry) -> Vec<T> {
    let (h, w) = g.big;
    let (ho, wo) = g.small;
    let ncols = g.n * ho * wo;
    let mut cols = vec![T::zero(); g.rows() * ncols];
    for ci in 0..g.chan {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for ni in 0..g.n {
                    let src = &x[(ci * g.n + ni) * h * w..(ci * g.n + ni + 1) * h * w];
                    for oy in 0..ho {
                        let iy = (oy * g.s + ki) as isize - g.p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                        let drow = &mut dst[(ni * ho + oy) * wo..(ni * ho + oy + 1) * wo];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * g.s + kj) as isize - g.p as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = srow[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch columns back, accumulating.
fn col2im<T: Scalar>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let (h, w) = g.big;
    let (ho, wo) = g.small;
    let ncols = g.n * ho * wo;
    for ci in 0..g.chan {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for ni in 0..g.n {
                    let dst = &mut x[(ci * g.n + ni) * h * w..(ci * g.n + ni + 1) * h * w];
                    for oy in 0..ho {
                        let iy = (oy * g.s + ki) as isize - g.p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        let srow = &src[(ni * ho + oy) * wo..(ni * ho + oy + 1) * wo];
                        for (ox, &v) in srow.iter().enumerate() {
                            let ix = (ox * g.s + kj) as isize - g.p as isize;
                            if ix >= 0 && ix < w as isize {
                                drow[ix as usize] = drow[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}
