//! Dense MLP classifier: `(Linear → Act) × depth → Linear` head.
//!
//! The penultimate features `H` are the post-activation outputs of the last
//! hidden layer, i.e. the input to the classifier head.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{kaiming_normal, Matrix, RngState, Scalar};
use crate::special::{normal_cdf, normal_pdf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Gelu, Activation::Tanh];

    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Gelu => {
                let zf = z.as_f64();
                T::lit(zf * normal_cdf(zf))
            }
        }
    }

    #[inline]
    pub fn deriv<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            Activation::Gelu => {
                let zf = z.as_f64();
                T::lit(normal_cdf(zf) + zf * normal_pdf(zf))
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::arg(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    MseOneHot,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub num_classes: usize,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.depth == 0 || self.width == 0 {
            return Err(Error::arg(format!(
                "MLP needs input_dim, depth, width >= 1 (got {}, {}, {})",
                self.input_dim, self.depth, self.width
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::arg("MLP needs at least 2 classes"));
        }
        Ok(())
    }

    /// `(out, in)` shape of every layer, head last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        shapes.push((self.width, self.input_dim));
        shapes.extend(std::iter::repeat_n((self.width, self.width), self.depth - 1));
        shapes.push((self.num_classes, self.width));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    /// `out × in`.
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![T::zero(); self.bias.len()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    config: MlpConfig,
    layers: Vec<Layer<T>>,
}

/// Activations recorded during one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub input: Matrix<T>,
    /// Pre-activations of each hidden layer.
    pub pre: Vec<Matrix<T>>,
    /// Post-activations of each hidden layer; the last one is `H`.
    pub post: Vec<Matrix<T>>,
    pub logits: Matrix<T>,
}

impl<T> ForwardTrace<T> {
    /// Penultimate features `H` (N × width).
    pub fn features(&self) -> &Matrix<T> {
        self.post.last().expect("at least one hidden layer")
    }
}

/// Per-parameter gradients, shaped like the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Kaiming-normal weights (gain √2 for every activation), zero biases.
    /// Layers draw from `rng` in order, first hidden layer to head.
    pub fn build(config: MlpConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| {
                Ok(Layer {
                    weight: kaiming_normal(rng, inp, out)?,
                    bias: vec![T::zero(); out],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, layers })
    }

    pub fn from_layers(config: MlpConfig, layers: Vec<Layer<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::arg(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (l, &(o, i)) in layers.iter().zip(&shapes) {
            if l.weight.shape() != (o, i) || l.bias.len() != o {
                return Err(Error::Shape {
                    op: "from_layers",
                    left: l.weight.shape(),
                    right: (o, i),
                });
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Classifier head weights (K × width).
    pub fn head(&self) -> &Matrix<T> {
        &self.layers.last().expect("head layer").weight
    }

    pub fn last_hidden_mut(&mut self) -> &mut Layer<T> {
        let n = self.layers.len();
        &mut self.layers[n - 2]
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<ForwardTrace<T>> {
        if x.cols() != self.config.input_dim {
            return Err(Error::Shape {
                op: "forward",
                left: x.shape(),
                right: (x.rows(), self.config.input_dim),
            });
        }
        let act = self.config.activation;
        let (hidden, head) = self.layers.split_at(self.layers.len() - 1);
        let mut pre = Vec::with_capacity(hidden.len());
        let mut post: Vec<Matrix<T>> = Vec::with_capacity(hidden.len());
        for layer in hidden {
            let input = post.last().unwrap_or(x);
            let z = affine(input, layer)?;
            post.push(z.map(|v| act.apply(v)));
            pre.push(z);
        }
        let logits = affine(post.last().expect("hidden layer"), &head[0])?;
        Ok(ForwardTrace {
            input: x.clone(),
            pre,
            post,
            logits,
        })
    }

    /// Features only; drops the intermediate layers as it goes.
    pub fn features(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let trace = self.forward(x)?;
        let logits = trace.logits;
        let h = trace.post.into_iter().last().expect("hidden layer");
        Ok((h, logits))
    }

    /// Mean-over-batch loss and analytic gradients for every weight and bias.
    pub fn loss_and_grad(
        &self,
        trace: &ForwardTrace<T>,
        labels: &[usize],
        kind: LossKind,
    ) -> Result<(T, Gradients<T>)> {
        let (loss, mut delta) = loss_and_logit_grad(&trace.logits, labels, kind)?;
        let act = self.config.activation;
        let mut grads: Vec<Layer<T>> = self.layers.iter().map(Layer::zeros_like).collect();
        for li in (0..self.layers.len()).rev() {
            let input = if li == 0 { &trace.input } else { &trace.post[li - 1] };
            grads[li].weight = delta.matmul_tn(input)?;
            let bias = &mut grads[li].bias;
            for row in delta.row_iter() {
                for (b, &d) in bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if li > 0 {
                let mut back = delta.matmul(&self.layers[li].weight)?;
                let z = &trace.pre[li - 1];
                for (g, &zv) in back.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    *g *= act.deriv(zv);
                }
                delta = back;
            }
        }
        Ok((loss, Gradients { layers: grads }))
    }
}

fn affine<T: Scalar>(x: &Matrix<T>, layer: &Layer<T>) -> Result<Matrix<T>> {
    let mut z = x.matmul_nt(&layer.weight)?;
    for i in 0..z.rows() {
        for (v, &b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(z)
}

fn check_labels(labels: &[usize], n: usize, k: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::arg(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Label {
            label: bad,
            classes: k,
        });
    }
    Ok(())
}

/// Loss value only, plus the number of rows whose argmax matches the label.
pub fn loss_value<T: Scalar>(logits: &Matrix<T>, labels: &[usize], kind: LossKind) -> Result<(f64, usize)> {
    let (n, k) = logits.shape();
    check_labels(labels, n, k)?;
    let mut total = 0.0f64;
    let mut correct = 0;
    for (row, &y) in logits.row_iter().zip(labels) {
        let row: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        total += match kind {
            LossKind::CrossEntropy => log_sum_exp(&row) - row[y],
            LossKind::MseOneHot => {
                row.iter()
                    .enumerate()
                    .map(|(c, &z)| (z - onehot(c, y)).powi(2))
                    .sum::<f64>()
                    / k as f64
            }
        };
        if argmax(&row) == y {
            correct += 1;
        }
    }
    Ok((total / n as f64, correct))
}

/// Loss and `∂loss/∂logits`.
///
/// Cross-entropy: softmax + NLL averaged over the batch.
/// MSE: `(1/N) Σᵢ Σ_c (zᵢc − onehotᵢc)² / K`, no ½ factor.
pub fn loss_and_logit_grad<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[usize],
    kind: LossKind,
) -> Result<(T, Matrix<T>)> {
    let (n, k) = logits.shape();
    check_labels(labels, n, k)?;
    let nf = T::lit(n as f64);
    let mut grad = Matrix::zeros(n, k);
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let g = grad.row_mut(i);
        match kind {
            LossKind::CrossEntropy => {
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                let sum: T = row.iter().map(|&z| (z - m).exp()).sum();
                total += sum.ln() + m - row[y];
                for (c, (gv, &z)) in g.iter_mut().zip(row).enumerate() {
                    *gv = ((z - m).exp() / sum - T::lit(onehot(c, y))) / nf;
                }
            }
            LossKind::MseOneHot => {
                let kf = T::lit(k as f64);
                for (c, (gv, &z)) in g.iter_mut().zip(row).enumerate() {
                    let r = z - T::lit(onehot(c, y));
                    total += r * r / kf;
                    *gv = T::lit(2.0) * r / (nf * kf);
                }
            }
        }
    }
    Ok((total / nf, grad))
}

#[inline]
fn onehot(c: usize, y: usize) -> f64 {
    if c == y {
        1.0
    } else {
        0.0
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
