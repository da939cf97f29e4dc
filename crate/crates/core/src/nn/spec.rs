use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-item shape `(channels, height, width)`.
pub type Shape = (usize, usize, usize);

/// One entry in a network's layer catalog.
///
/// Convolutions are cross-correlations (no kernel flip). `Linear` flattens
/// its input in `(channel, row, col)` order and emits `(out, 1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear {
        out: usize,
    },
    Conv {
        out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose {
        out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm,
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Reshape {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::ConvTranspose { .. } => "conv_transpose",
            LayerSpec::BatchNorm => "batch_norm",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    /// Output shape for one input item, or a reason the layer cannot accept it.
    pub fn output_shape(&self, (c, h, w): Shape) -> std::result::Result<Shape, String> {
        match *self {
            LayerSpec::Linear { out } => {
                if out == 0 {
                    return Err("linear layer needs at least one output".into());
                }
                Ok((out, 1, 1))
            }
            LayerSpec::Conv {
                out,
                kernel,
                stride,
                padding,
            } => {
                check_conv_params(out, kernel, stride)?;
                let ho = conv_out(h, kernel, stride, padding)?;
                let wo = conv_out(w, kernel, stride, padding)?;
                Ok((out, ho, wo))
            }
            LayerSpec::ConvTranspose {
                out,
                kernel,
                stride,
                padding,
            } => {
                check_conv_params(out, kernel, stride)?;
                let ho = deconv_out(h, kernel, stride, padding)?;
                let wo = deconv_out(w, kernel, stride, padding)?;
                Ok((out, ho, wo))
            }
            LayerSpec::BatchNorm | LayerSpec::Relu | LayerSpec::Tanh => Ok((c, h, w)),
            LayerSpec::LeakyRelu { slope } => {
                if !slope.is_finite() {
                    return Err("leak factor must be finite".into());
                }
                Ok((c, h, w))
            }
            LayerSpec::Reshape {
                channels,
                height,
                width,
            } => {
                if channels * height * width != c * h * w {
                    return Err(format!(
                        "cannot reshape {c}x{h}x{w} into {channels}x{height}x{width}"
                    ));
                }
                Ok((channels, height, width))
            }
        }
    }
}

fn check_conv_params(out: usize, kernel: usize, stride: usize) -> std::result::Result<(), String> {
    if out == 0 || kernel == 0 || stride == 0 {
        return Err("filters, kernel and stride must be positive".into());
    }
    Ok(())
}

/// `floor((in + 2p − k) / s) + 1`.
fn conv_out(n: usize, k: usize, s: usize, p: usize) -> std::result::Result<usize, String> {
    let padded = n + 2 * p;
    if padded < k {
        return Err(format!("kernel {k} larger than padded input {padded}"));
    }
    Ok((padded - k) / s + 1)
}

/// `(in − 1)·s − 2p + k`.
fn deconv_out(n: usize, k: usize, s: usize, p: usize) -> std::result::Result<usize, String> {
    let full = (n.saturating_sub(1)) * s + k;
    if n == 0 || full <= 2 * p {
        return Err(format!("padding {p} consumes the whole output"));
    }
    Ok(full - 2 * p)
}

/// An ordered layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Self { layers }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        Ok(infer_shapes(self, input)?.last().copied().unwrap_or(input))
    }
}

/// Output shape after every layer.
pub fn infer_shapes(spec: &NetworkSpec, input: Shape) -> Result<Vec<Shape>> {
    if input.0 == 0 || input.1 == 0 || input.2 == 0 {
        return Err(Error::Spec {
            layer: 0,
            reason: format!("empty input shape {input:?}"),
        });
    }
    let mut shapes = Vec::with_capacity(spec.layers.len());
    let mut cur = input;
    for (i, layer) in spec.layers.iter().enumerate() {
        cur = layer.output_shape(cur).map_err(|reason| Error::Spec {
            layer: i,
            reason: format!("{}: {reason}", layer.name()),
        })?;
        shapes.push(cur);
    }
    Ok(shapes)
}
