use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{
    conv3x3_backward, conv3x3_forward, dense_backward, dense_forward, dropout_train, maxpool2x2,
    maxpool2x2_backward, relu, relu_backward, softmax,
};
use crate::nn::{scc_loss, Tensor4};
use crate::scalar::Scalar;

pub const CLASS_COUNT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3x3 { filters: usize },
    MaxPool2x2,
    Relu,
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    Softmax,
}

/// Per-sample activation shape. Flat vectors are `1 x 1 x d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Shape { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_flat(&self) -> bool {
        self.h == 1 && self.w == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// The reference classifier for 32x32x3 inputs: three conv/relu/pool blocks,
    /// dropout, then a 128-unit hidden layer and a 2-way softmax head.
    pub fn reference() -> Self {
        Self::conv_stack(Shape::new(32, 32, 3), &[16, 32, 64], 0.2, 128)
    }

    /// `blocks.len()` Conv3x3+ReLU+MaxPool blocks, optional dropout, flatten,
    /// Dense(hidden)+ReLU, Dense(2), Softmax. `hidden == 0` drops the hidden layer.
    pub fn conv_stack(input: Shape, blocks: &[usize], dropout: f64, hidden: usize) -> Self {
        let mut layers = Vec::new();
        for &f in blocks {
            layers.push(LayerSpec::Conv3x3 { filters: f });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool2x2);
        }
        if dropout > 0.0 {
            layers.push(LayerSpec::Dropout { rate: dropout });
        }
        layers.push(LayerSpec::Flatten);
        if hidden > 0 {
            layers.push(LayerSpec::Dense { units: hidden });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Dense { units: CLASS_COUNT });
        layers.push(LayerSpec::Softmax);
        Architecture { input, layers }
    }

    /// Output shape of every layer, validating that the stack type-checks.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.is_empty() {
            return Err(Error::ShapeMismatch("empty input shape".into()));
        }
        let n = self.layers.len();
        if n < 2
            || self.layers[n - 1] != LayerSpec::Softmax
            || self.layers[n - 2] != (LayerSpec::Dense { units: CLASS_COUNT })
        {
            return Err(Error::ShapeMismatch(format!(
                "the stack must end with Dense({CLASS_COUNT}) then Softmax"
            )));
        }
        let mut s = self.input;
        let mut out = Vec::with_capacity(n);
        for (i, layer) in self.layers.iter().enumerate() {
            s = match *layer {
                LayerSpec::Conv3x3 { filters } if filters > 0 => Shape::new(s.h, s.w, filters),
                LayerSpec::MaxPool2x2
                    if s.h.is_multiple_of(2) && s.w.is_multiple_of(2) && !s.is_flat() =>
                {
                    Shape::new(s.h / 2, s.w / 2, s.c)
                }
                LayerSpec::Relu => s,
                LayerSpec::Dropout { rate } if (0.0..1.0).contains(&rate) => s,
                LayerSpec::Flatten => Shape::new(1, 1, s.len()),
                LayerSpec::Dense { units } if units > 0 && s.is_flat() => Shape::new(1, 1, units),
                LayerSpec::Softmax if s.is_flat() && i == n - 1 => s,
                other => {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {i} ({other:?}) cannot take input {}x{}x{}",
                        s.h, s.w, s.c
                    )))
                }
            };
            out.push(s);
        }
        Ok(out)
    }

    /// Input shape of every layer.
    pub fn input_shapes(&self) -> Result<Vec<Shape>> {
        let outs = self.shapes()?;
        let mut ins = vec![self.input];
        ins.extend_from_slice(&outs[..outs.len() - 1]);
        Ok(ins)
    }

    /// `(fan_in, weight_len, bias_len)` for parameterized layers.
    fn param_layout(&self) -> Result<Vec<Option<(usize, usize, usize)>>> {
        let ins = self.input_shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&ins)
            .map(|(l, s)| match *l {
                LayerSpec::Conv3x3 { filters } => Some((9 * s.c, 9 * s.c * filters, filters)),
                LayerSpec::Dense { units } => Some((s.len(), s.len() * units, units)),
                _ => None,
            })
            .collect())
    }

    /// Lengths of every parameter tensor in storage order.
    pub fn param_lengths(&self) -> Result<Vec<usize>> {
        Ok(self
            .param_layout()?
            .into_iter()
            .flatten()
            .flat_map(|(_, w, b)| [w, b])
            .collect())
    }
}

/// Forward-pass mode. Training mode draws dropout masks from the given RNG.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut dyn RngCore),
}

/// Layer stack plus parameters: for each conv/dense layer in order, its
/// weights then its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    arch: Architecture,
    params: Vec<Vec<T>>,
    /// Index of the weight tensor for each layer that has parameters.
    slots: Vec<Option<usize>>,
    seed: u64,
}

struct Trace<T> {
    inputs: Vec<Tensor4<T>>,
    pool_args: Vec<Option<Vec<usize>>>,
    dropout_scales: Vec<Option<Vec<T>>>,
}

pub struct LossAndGrads<T> {
    pub loss: T,
    pub probs: Vec<T>,
    pub grads: Vec<Vec<T>>,
}

fn slots_for(arch: &Architecture) -> Vec<Option<usize>> {
    let mut next = 0;
    arch.layers
        .iter()
        .map(|l| match l {
            LayerSpec::Conv3x3 { .. } | LayerSpec::Dense { .. } => {
                let s = next;
                next += 2;
                Some(s)
            }
            _ => None,
        })
        .collect()
}

impl<T: Scalar> Model<T> {
    /// He-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) drawn in
    /// storage order from a seeded stream; zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let layout = arch.param_layout()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (fan_in, wlen, blen) in layout.into_iter().flatten() {
            let limit = (6.0 / fan_in as f64).sqrt();
            let w = (0..wlen)
                .map(|_| {
                    let u: f64 = rng.random();
                    T::lit((2.0 * u - 1.0) * limit)
                })
                .collect();
            params.push(w);
            params.push(vec![T::zero(); blen]);
        }
        let slots = slots_for(&arch);
        Ok(Model {
            arch,
            params,
            slots,
            seed,
        })
    }

    /// Rebuilds a model from stored parameters, checking their lengths.
    pub fn from_parts(arch: Architecture, params: Vec<Vec<T>>, seed: u64) -> Result<Self> {
        let lens = arch.param_lengths()?;
        if lens.len() != params.len() || lens.iter().zip(&params).any(|(&n, p)| n != p.len()) {
            return Err(Error::ShapeMismatch(format!(
                "parameter lengths {:?} do not match architecture {:?}",
                params.iter().map(Vec::len).collect::<Vec<_>>(),
                lens
            )));
        }
        let slots = slots_for(&arch);
        Ok(Model {
            arch,
            params,
            slots,
            seed,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_shape(&self) -> Shape {
        self.arch.input
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Vec<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    /// Same architecture and seed with parameters converted to `U`.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            arch: self.arch.clone(),
            params: self
                .params
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan))
                        .collect()
                })
                .collect(),
            slots: self.slots.clone(),
            seed: self.seed,
        }
    }

    fn check_batch(&self, batch: &Tensor4<T>) -> Result<()> {
        let [_, h, w, c] = batch.dims();
        let s = self.arch.input;
        if (h, w, c) != (s.h, s.w, s.c) {
            return Err(Error::ShapeMismatch(format!(
                "batch samples are {h}x{w}x{c}, model expects {}x{}x{}",
                s.h, s.w, s.c
            )));
        }
        Ok(())
    }

    fn layer_params(&self, layer: usize) -> (&[T], &[T]) {
        let s = self.slots[layer].expect("parameterized layer");
        (&self.params[s], &self.params[s + 1])
    }

    fn run(
        &self,
        batch: &Tensor4<T>,
        mut mode: Mode<'_>,
        trace: bool,
    ) -> Result<(Vec<T>, Option<Trace<T>>)> {
        self.check_batch(batch)?;
        let n = batch.batch();
        let shapes = self.arch.shapes()?;
        let mut tr = trace.then(|| Trace {
            inputs: Vec::with_capacity(self.arch.layers.len()),
            pool_args: Vec::new(),
            dropout_scales: Vec::new(),
        });
        let mut x = batch.clone();
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let mut pool_arg = None;
            let mut drop_scale = None;
            let out = match *layer {
                LayerSpec::Conv3x3 { .. } => {
                    let (w, b) = self.layer_params(i);
                    conv3x3_forward(&x, w, b)?
                }
                LayerSpec::MaxPool2x2 => {
                    let (y, arg) = maxpool2x2(&x)?;
                    pool_arg = Some(arg);
                    y
                }
                LayerSpec::Relu => relu(&x),
                LayerSpec::Dropout { rate } => match &mut mode {
                    Mode::Infer => x.clone(),
                    Mode::Train(rng) => {
                        let (y, scale) = dropout_train(&x, rate, &mut **rng);
                        drop_scale = Some(scale);
                        y
                    }
                },
                LayerSpec::Flatten => x.clone().reshape([n, 1, 1, shapes[i].c])?,
                LayerSpec::Dense { units } => {
                    let (w, b) = self.layer_params(i);
                    Tensor4::new([n, 1, 1, units], dense_forward(x.data(), n, w, b)?)?
                }
                LayerSpec::Softmax => Tensor4::new(x.dims(), softmax(x.data(), shapes[i].c))?,
            };
            if let Some(tr) = tr.as_mut() {
                tr.inputs.push(std::mem::replace(&mut x, out));
                tr.pool_args.push(pool_arg);
                tr.dropout_scales.push(drop_scale);
            } else {
                x = out;
            }
        }
        Ok((x.into_data(), tr))
    }

    /// Class probabilities, `n x 2` row-major.
    pub fn forward(&self, batch: &Tensor4<T>, mode: Mode<'_>) -> Result<Vec<T>> {
        Ok(self.run(batch, mode, false)?.0)
    }

    /// Mean cross-entropy over the batch and its gradient for every parameter
    /// tensor (storage order). The softmax and loss are differentiated jointly.
    pub fn loss_and_grads(
        &self,
        batch: &Tensor4<T>,
        labels: &[usize],
        mode: Mode<'_>,
    ) -> Result<LossAndGrads<T>> {
        if labels.len() != batch.batch() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a batch of {}",
                labels.len(),
                batch.batch()
            )));
        }
        let (probs, tr) = self.run(batch, mode, true)?;
        let tr = tr.expect("trace requested");
        let lo = scc_loss(&probs, labels, CLASS_COUNT)?;
        let n = batch.batch();
        let mut grads: Vec<Vec<T>> = self
            .params
            .iter()
            .map(|p| vec![T::zero(); p.len()])
            .collect();
        let last = self.arch.layers.len() - 1;
        let mut g = Tensor4::new([n, 1, 1, CLASS_COUNT], lo.grad_logits)?;
        for i in (0..last).rev() {
            let x = &tr.inputs[i];
            g = match self.arch.layers[i] {
                LayerSpec::Conv3x3 { .. } => {
                    let (w, b) = self.layer_params(i);
                    let cg = conv3x3_backward(x, w, b, &g, i > 0)?;
                    let s = self.slots[i].expect("conv has params");
                    grads[s] = cg.grad_w;
                    grads[s + 1] = cg.grad_b;
                    match cg.grad_x {
                        Some(gx) => gx,
                        None => break,
                    }
                }
                LayerSpec::Dense { .. } => {
                    let (w, b) = self.layer_params(i);
                    let dg = dense_backward(x.data(), n, w, b, g.data())?;
                    let s = self.slots[i].expect("dense has params");
                    grads[s] = dg.grad_w;
                    grads[s + 1] = dg.grad_b;
                    Tensor4::new(x.dims(), dg.grad_x)?
                }
                LayerSpec::MaxPool2x2 => {
                    let arg = tr.pool_args[i].as_ref().expect("pool trace");
                    maxpool2x2_backward(x.dims(), arg, &g)?
                }
                LayerSpec::Relu => relu_backward(x, &g),
                LayerSpec::Dropout { .. } => match &tr.dropout_scales[i] {
                    Some(scale) => {
                        let d = g.data().iter().zip(scale).map(|(&a, &s)| a * s).collect();
                        Tensor4::new(g.dims(), d)?
                    }
                    None => g,
                },
                LayerSpec::Flatten => g.reshape(x.dims())?,
                LayerSpec::Softmax => unreachable!("softmax is only the final layer"),
            };
        }
        Ok(LossAndGrads {
            loss: lo.loss,
            probs,
            grads,
        })
    }
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows<T: Scalar>(probs: &[T], k: usize) -> Vec<usize> {
    probs
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn build_reference_model<T: Scalar>(seed: u64) -> Model<T> {
    Model::new(Architecture::reference(), seed).expect("reference architecture type-checks")
}
