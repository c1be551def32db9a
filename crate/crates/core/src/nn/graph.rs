//! Static layer graphs: construction, forward evaluation, and reverse-mode
//! gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom};
use super::params::{ParamId, ParameterSet};
use super::tensor::Tensor;
use crate::dirichlet::{squash_derivative, squash_to_concentration, ConcentrationVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Residual,
    DenseConnect,
    CompoundScaled,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::CompoundScaled, Family::DenseConnect, Family::Residual];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Residual => "residual",
            Family::DenseConnect => "dense-connect",
            Family::CompoundScaled => "compound-scaled",
        }
    }

    /// The canonical architecture each family stands for at paper scale.
    pub fn reference_name(self) -> &'static str {
        match self {
            Family::Residual => "ResNet50",
            Family::DenseConnect => "DenseNet121",
            Family::CompoundScaled => "EfficientNet B0",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(Family::Residual),
            "dense-connect" => Ok(Family::DenseConnect),
            "compound-scaled" => Ok(Family::CompoundScaled),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Paper,
    Tiny,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Tiny => "tiny",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "tiny" => Ok(Preset::Tiny),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Op {
    Input,
    Conv {
        weight: ParamId,
        bias: Option<ParamId>,
        k: usize,
        stride: usize,
        pad: usize,
        depthwise: bool,
    },
    BatchNorm {
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
    },
    Relu,
    Swish,
    Sigmoid,
    MaxPool {
        k: usize,
        stride: usize,
        pad: usize,
    },
    AvgPool {
        k: usize,
    },
    GlobalAvgPool,
    Add,
    Concat,
    /// `inputs[0] * inputs[1]` with the second broadcast over space.
    ChannelScale,
    Dropout,
    Dense {
        weight: ParamId,
        bias: ParamId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<usize>,
    /// Output `(channels, height, width)` per sample.
    pub shape: (usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Running batch-norm statistics, no dropout.
    Deterministic,
    /// Running batch-norm statistics, fresh dropout mask per call.
    McDropout,
    /// Batch statistics, dropout, and a tape for [`NetworkDescription::backward`].
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescription {
    pub family: Family,
    pub preset: Preset,
    pub dropout_rate: f64,
    pub seed: u64,
    pub input_side: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub concentration_range: (f64, f64),
    pub nodes: Vec<Node>,
    pub output: usize,
}

enum Aux<T> {
    None,
    Moments { mean: Vec<T>, var: Vec<T>, inv_std: Vec<T> },
    Mask(Vec<T>),
    ArgMax(Vec<u32>),
}

pub struct Tape<T> {
    acts: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
}

pub struct ForwardPass<T> {
    /// Pre-squash head outputs, one row per record.
    pub raw: Vec<Vec<T>>,
    pub concentrations: Vec<ConcentrationVector<T>>,
    tape: Option<Tape<T>>,
}

impl<T> ForwardPass<T> {
    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }
}

fn swish<T: Scalar>(x: T) -> T {
    x * kernels::sigmoid(x)
}

fn map<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::from_vec(x.n, x.c, x.h, x.w, x.data.iter().map(|&v| f(v)).collect())
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], idx: usize, g: Tensor<T>) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}

impl NetworkDescription {
    pub fn head_width(&self) -> usize {
        self.nodes[self.output].shape.0
    }

    fn inv_std<T: Scalar>(&self, var: &[T]) -> Vec<T> {
        let eps = T::from_f64_lossy(self.bn_eps);
        var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect()
    }

    fn conv_geom(&self, node: &Node, input: &Node, k: usize, stride: usize, pad: usize) -> ConvGeom {
        let (cin, h, w) = input.shape;
        ConvGeom::new(cin, h, w, node.shape.0, k, stride, pad)
    }

    /// Evaluate the network on a `n x 1 x side x side` batch.
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        params: &ParameterSet<T>,
        batch: &Tensor<T>,
        mode: ForwardMode,
        rng: &mut R,
    ) -> Result<ForwardPass<T>> {
        super::alloc::retain_freed_memory();
        let (c0, h0, w0) = self.nodes[0].shape;
        if batch.n == 0 || (batch.c, batch.h, batch.w) != (c0, h0, w0) {
            return Err(Error::Shape(format!(
                "batch {}x{}x{}x{} does not match network input {c0}x{h0}x{w0}",
                batch.n, batch.c, batch.h, batch.w
            )));
        }
        let training = mode == ForwardMode::Training;
        let dropout_active = mode != ForwardMode::Deterministic && self.dropout_rate > 0.0;

        let n_nodes = self.nodes.len();
        let mut last_use = vec![0usize; n_nodes];
        for (i, node) in self.nodes.iter().enumerate() {
            for &j in &node.inputs {
                last_use[j] = i;
            }
        }
        last_use[self.output] = n_nodes;

        let mut acts: Vec<Option<Tensor<T>>> = (0..n_nodes).map(|_| None).collect();
        let mut aux: Vec<Aux<T>> = (0..n_nodes).map(|_| Aux::None).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            let input = |k: usize| acts[node.inputs[k]].as_ref().expect("input computed");
            let (out, a) = match &node.op {
                Op::Input => (batch.clone(), Aux::None),
                Op::Conv {
                    weight,
                    bias,
                    k,
                    stride,
                    pad,
                    depthwise,
                } => {
                    let g = self.conv_geom(node, &self.nodes[node.inputs[0]], *k, *stride, *pad);
                    let b = bias.map(|b| params.data(b));
                    let y = if *depthwise {
                        kernels::depthwise_forward(input(0), &g, params.data(*weight), b)
                    } else {
                        kernels::conv_forward(input(0), &g, params.data(*weight), b)
                    };
                    (y, Aux::None)
                }
                Op::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    let x = input(0);
                    if training {
                        let (mean, var) = kernels::channel_moments(x);
                        let inv_std = self.inv_std(&var);
                        let y = kernels::affine_normalize(x, &mean, &inv_std, params.data(*gamma), params.data(*beta));
                        (y, Aux::Moments { mean, var, inv_std })
                    } else {
                        let inv_std = self.inv_std(params.data(*running_var));
                        let y = kernels::affine_normalize(
                            x,
                            params.data(*running_mean),
                            &inv_std,
                            params.data(*gamma),
                            params.data(*beta),
                        );
                        (y, Aux::None)
                    }
                }
                Op::Relu => (map(input(0), |v| v.max(T::zero())), Aux::None),
                Op::Swish => (map(input(0), swish), Aux::None),
                Op::Sigmoid => (map(input(0), kernels::sigmoid), Aux::None),
                Op::MaxPool { k, stride, pad } => {
                    let (y, arg) = kernels::maxpool_forward(input(0), *k, *stride, *pad);
                    (y, if training { Aux::ArgMax(arg) } else { Aux::None })
                }
                Op::AvgPool { k } => (kernels::avgpool_forward(input(0), *k), Aux::None),
                Op::GlobalAvgPool => {
                    let x = input(0);
                    let plane = x.plane();
                    let inv = T::one() / T::from_usize_lossy(plane);
                    let data = x
                        .data
                        .chunks_exact(plane)
                        .map(|p| p.iter().copied().sum::<T>() * inv)
                        .collect();
                    (Tensor::from_vec(x.n, x.c, 1, 1, data), Aux::None)
                }
                Op::Add => {
                    let mut y = input(0).clone();
                    y.add_assign(input(1));
                    (y, Aux::None)
                }
                Op::Concat => {
                    let parts: Vec<&Tensor<T>> = (0..node.inputs.len()).map(input).collect();
                    let c: usize = parts.iter().map(|p| p.c).sum();
                    let (n, h, w) = (parts[0].n, parts[0].h, parts[0].w);
                    let mut data = Vec::with_capacity(n * c * h * w);
                    for s in 0..n {
                        for p in &parts {
                            data.extend_from_slice(p.sample(s));
                        }
                    }
                    (Tensor::from_vec(n, c, h, w, data), Aux::None)
                }
                Op::ChannelScale => {
                    let (x, s) = (input(0), input(1));
                    let plane = x.plane();
                    let mut y = x.clone();
                    for (chunk, &sv) in y.data.chunks_exact_mut(plane).zip(&s.data) {
                        chunk.iter_mut().for_each(|v| *v *= sv);
                    }
                    (y, Aux::None)
                }
                Op::Dropout => {
                    let x = input(0);
                    if dropout_active {
                        let keep = T::one() / T::from_f64_lossy(1.0 - self.dropout_rate);
                        let mask: Vec<T> = (0..x.data.len())
                            .map(|_| {
                                if rng.random::<f64>() < self.dropout_rate {
                                    T::zero()
                                } else {
                                    keep
                                }
                            })
                            .collect();
                        let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                        (Tensor::from_vec(x.n, x.c, x.h, x.w, data), Aux::Mask(mask))
                    } else {
                        (x.clone(), Aux::None)
                    }
                }
                Op::Dense { weight, bias } => {
                    let x = input(0);
                    let (fin, fout) = (x.c, node.shape.0);
                    let mut y = Tensor::zeros(x.n, fout, 1, 1);
                    let b = params.data(*bias);
                    for row in y.data.chunks_exact_mut(fout) {
                        row.copy_from_slice(b);
                    }
                    // y (n x fout) += x (n x fin) * W^T (fin x fout)
                    T::gemm(
                        x.n,
                        fin,
                        fout,
                        T::one(),
                        &x.data,
                        fin as isize,
                        1,
                        params.data(*weight),
                        1,
                        fin as isize,
                        T::one(),
                        &mut y.data,
                        fout as isize,
                        1,
                    );
                    (y, Aux::None)
                }
            };
            acts[i] = Some(out);
            aux[i] = a;
            if !training {
                for &j in &node.inputs {
                    if last_use[j] == i {
                        acts[j] = None;
                    }
                }
            }
        }

        let head = acts[self.output].as_ref().expect("output computed");
        let width = head.c;
        let (lo, hi) = self.concentration_range;
        let (lo, hi) = (T::from_f64_lossy(lo), T::from_f64_lossy(hi));
        let raw: Vec<Vec<T>> = head.data.chunks_exact(width).map(<[T]>::to_vec).collect();
        let concentrations = raw
            .iter()
            .map(|r| ConcentrationVector::new(squash_to_concentration(r, lo, hi)?))
            .collect::<Result<Vec<_>>>()?;
        let tape = training.then(|| Tape {
            acts: acts
                .into_iter()
                .map(|a| a.expect("training keeps activations"))
                .collect(),
            aux,
        });
        Ok(ForwardPass {
            raw,
            concentrations,
            tape,
        })
    }

    /// Gradients of a loss with respect to every tensor in `params`, given the
    /// loss gradient with respect to each record's concentrations.
    /// Non-trainable tensors receive zeros.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParameterSet<T>,
        pass: &ForwardPass<T>,
        upstream: &[Vec<T>],
    ) -> Result<ParameterSet<T>> {
        let tape = pass.tape.as_ref().ok_or(Error::NoTrainingTape)?;
        let width = self.head_width();
        if upstream.len() != pass.raw.len() || upstream.iter().any(|u| u.len() != width) {
            return Err(Error::Shape(format!(
                "upstream gradient must be {} x {width}",
                pass.raw.len()
            )));
        }
        let (lo, hi) = self.concentration_range;
        let (lo, hi) = (T::from_f64_lossy(lo), T::from_f64_lossy(hi));
        let mut head = Tensor::zeros(pass.raw.len(), width, 1, 1);
        for (dst, (u, r)) in head.data.chunks_exact_mut(width).zip(upstream.iter().zip(&pass.raw)) {
            for ((d, &ui), &ri) in dst.iter_mut().zip(u).zip(r) {
                *d = ui * squash_derivative(ri, lo, hi);
            }
        }

        // Nodes downstream of a parameter; everything else needs no gradient.
        let mut requires = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let own = matches!(node.op, Op::Conv { .. } | Op::BatchNorm { .. } | Op::Dense { .. });
            requires[i] = own || node.inputs.iter().any(|&j| requires[j]);
        }

        let mut pgrads = params.zeros_like();
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[self.output] = Some(head);

        for (i, node) in self.nodes.iter().enumerate().rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !requires[i] {
                continue;
            }
            let x_of = |k: usize| &tape.acts[node.inputs[k]];
            match &node.op {
                Op::Input => {}
                Op::Conv {
                    weight,
                    bias,
                    k,
                    stride,
                    pad,
                    depthwise,
                } => {
                    let src = node.inputs[0];
                    let g = self.conv_geom(node, &self.nodes[src], *k, *stride, *pad);
                    let need_dx = requires[src];
                    let (dx, dw, db) = if *depthwise {
                        let (dx, dw, db) = kernels::depthwise_backward(x_of(0), &g, params.data(*weight), &dy);
                        (Some(dx), dw, db)
                    } else {
                        kernels::conv_backward(x_of(0), &g, params.data(*weight), &dy, need_dx)
                    };
                    add_into(&mut pgrads.get_mut(*weight).data, &dw);
                    if let Some(b) = bias {
                        add_into(&mut pgrads.get_mut(*b).data, &db);
                    }
                    if let (Some(dx), true) = (dx, need_dx) {
                        accumulate(&mut grads, src, dx);
                    }
                }
                Op::BatchNorm { gamma, beta, .. } => {
                    let Aux::Moments { mean, inv_std, .. } = &tape.aux[i] else {
                        unreachable!("training tape stores batch moments")
                    };
                    let (dx, dg, db) = kernels::batchnorm_backward(x_of(0), &dy, mean, inv_std, params.data(*gamma));
                    add_into(&mut pgrads.get_mut(*gamma).data, &dg);
                    add_into(&mut pgrads.get_mut(*beta).data, &db);
                    accumulate(&mut grads, node.inputs[0], dx);
                }
                Op::Relu => {
                    let x = x_of(0);
                    let data = dy
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(&d, &v)| if v > T::zero() { d } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, node.inputs[0], Tensor::from_vec(x.n, x.c, x.h, x.w, data));
                }
                Op::Swish => {
                    let x = x_of(0);
                    let data = dy
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(&d, &v)| {
                            let s = kernels::sigmoid(v);
                            d * (s + v * s * (T::one() - s))
                        })
                        .collect();
                    accumulate(&mut grads, node.inputs[0], Tensor::from_vec(x.n, x.c, x.h, x.w, data));
                }
                Op::Sigmoid => {
                    let y = &tape.acts[i];
                    let data = dy
                        .data
                        .iter()
                        .zip(&y.data)
                        .map(|(&d, &s)| d * s * (T::one() - s))
                        .collect();
                    accumulate(&mut grads, node.inputs[0], Tensor::from_vec(y.n, y.c, y.h, y.w, data));
                }
                Op::MaxPool { .. } => {
                    let Aux::ArgMax(arg) = &tape.aux[i] else {
                        unreachable!("training tape stores argmax")
                    };
                    accumulate(&mut grads, node.inputs[0], kernels::maxpool_backward(x_of(0), &dy, arg));
                }
                Op::AvgPool { k } => {
                    accumulate(&mut grads, node.inputs[0], kernels::avgpool_backward(x_of(0), &dy, *k));
                }
                Op::GlobalAvgPool => {
                    let x = x_of(0);
                    let plane = x.plane();
                    let inv = T::one() / T::from_usize_lossy(plane);
                    let mut dx = x.zeros_like();
                    for (chunk, &d) in dx.data.chunks_exact_mut(plane).zip(&dy.data) {
                        chunk.fill(d * inv);
                    }
                    accumulate(&mut grads, node.inputs[0], dx);
                }
                Op::Add => {
                    accumulate(&mut grads, node.inputs[0], dy.clone());
                    accumulate(&mut grads, node.inputs[1], dy);
                }
                Op::Concat => {
                    let mut offset = 0;
                    for &src in &node.inputs {
                        let x = &tape.acts[src];
                        let len = x.sample_len();
                        let mut part = x.zeros_like();
                        for s in 0..x.n {
                            part.sample_mut(s).copy_from_slice(&dy.sample(s)[offset..offset + len]);
                        }
                        offset += len;
                        accumulate(&mut grads, src, part);
                    }
                }
                Op::ChannelScale => {
                    let (x, s) = (x_of(0), x_of(1));
                    let plane = x.plane();
                    let mut dx = x.zeros_like();
                    let mut ds = s.zeros_like();
                    for (((dxc, xc), dyc), (&sv, dsv)) in dx
                        .data
                        .chunks_exact_mut(plane)
                        .zip(x.data.chunks_exact(plane))
                        .zip(dy.data.chunks_exact(plane))
                        .zip(s.data.iter().zip(ds.data.iter_mut()))
                    {
                        let mut acc = T::zero();
                        for ((o, &xv), &d) in dxc.iter_mut().zip(xc).zip(dyc) {
                            *o = d * sv;
                            acc += d * xv;
                        }
                        *dsv = acc;
                    }
                    accumulate(&mut grads, node.inputs[0], dx);
                    accumulate(&mut grads, node.inputs[1], ds);
                }
                Op::Dropout => {
                    let g = match &tape.aux[i] {
                        Aux::Mask(mask) => {
                            let data = dy.data.iter().zip(mask).map(|(&d, &m)| d * m).collect();
                            Tensor::from_vec(dy.n, dy.c, dy.h, dy.w, data)
                        }
                        _ => dy,
                    };
                    accumulate(&mut grads, node.inputs[0], g);
                }
                Op::Dense { weight, bias } => {
                    let x = x_of(0);
                    let (n, fin, fout) = (x.n, x.c, node.shape.0);
                    // dW (fout x fin) = dY^T (fout x n) * X (n x fin)
                    let dw = &mut pgrads.get_mut(*weight).data;
                    T::gemm(
                        fout,
                        n,
                        fin,
                        T::one(),
                        &dy.data,
                        1,
                        fout as isize,
                        &x.data,
                        fin as isize,
                        1,
                        T::one(),
                        dw,
                        fin as isize,
                        1,
                    );
                    let db = &mut pgrads.get_mut(*bias).data;
                    for row in dy.data.chunks_exact(fout) {
                        add_into(db, row);
                    }
                    // dX (n x fin) = dY (n x fout) * W (fout x fin)
                    let mut dx = x.zeros_like();
                    T::gemm(
                        n,
                        fout,
                        fin,
                        T::one(),
                        &dy.data,
                        fout as isize,
                        1,
                        params.data(*weight),
                        fin as isize,
                        1,
                        T::zero(),
                        &mut dx.data,
                        fin as isize,
                        1,
                    );
                    accumulate(&mut grads, node.inputs[0], dx);
                }
            }
        }
        Ok(pgrads)
    }

    /// Hash of every piecewise-linear branch a training pass took: the sign of
    /// each ReLU input and the winner of each max-pool window. Two passes with
    /// equal signatures evaluated the same smooth piece of the network.
    pub fn branch_signature<T: Scalar>(&self, pass: &ForwardPass<T>) -> Result<u64> {
        let tape = pass.tape.as_ref().ok_or(Error::NoTrainingTape)?;
        let mut h = crate::seed::fnv1a(b"branches");
        for (node, aux) in self.nodes.iter().zip(&tape.aux) {
            match (&node.op, aux) {
                (Op::Relu, _) => {
                    for chunk in tape.acts[node.inputs[0]].data.chunks(64) {
                        let bits = chunk
                            .iter()
                            .enumerate()
                            .fold(0u64, |b, (j, &v)| b | (u64::from(v > T::zero()) << j));
                        h = crate::seed::mix64(h ^ bits);
                    }
                }
                (Op::MaxPool { .. }, Aux::ArgMax(arg)) => {
                    for &a in arg {
                        h = crate::seed::mix64(h ^ u64::from(a));
                    }
                }
                _ => {}
            }
        }
        Ok(h)
    }

    /// Blend the batch moments recorded by a training pass into the running
    /// statistics: `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running_stats<T: Scalar>(&self, params: &mut ParameterSet<T>, pass: &ForwardPass<T>) -> Result<()> {
        let tape = pass.tape.as_ref().ok_or(Error::NoTrainingTape)?;
        let m = T::from_f64_lossy(self.bn_momentum);
        let keep = T::one() - m;
        for (node, aux) in self.nodes.iter().zip(&tape.aux) {
            if let (
                Op::BatchNorm {
                    running_mean,
                    running_var,
                    ..
                },
                Aux::Moments { mean, var, .. },
            ) = (&node.op, aux)
            {
                for (r, &b) in params.get_mut(*running_mean).data.iter_mut().zip(mean) {
                    *r = m * *r + keep * b;
                }
                for (r, &b) in params.get_mut(*running_var).data.iter_mut().zip(var) {
                    *r = m * *r + keep * b;
                }
            }
        }
        Ok(())
    }
}

/// Incremental graph construction with deterministic weight initialization.
pub(crate) struct Builder<'r, T, R: Rng> {
    pub nodes: Vec<Node>,
    pub params: ParameterSet<T>,
    rng: &'r mut R,
}

impl<'r, T: Scalar, R: Rng> Builder<'r, T, R> {
    pub fn new(rng: &'r mut R, side: usize) -> Self {
        Self {
            nodes: vec![Node {
                name: "input".into(),
                op: Op::Input,
                inputs: vec![],
                shape: (1, side, side),
            }],
            params: ParameterSet::default(),
            rng,
        }
    }

    pub fn shape(&self, x: usize) -> (usize, usize, usize) {
        self.nodes[x].shape
    }

    fn push(&mut self, name: &str, op: Op, inputs: Vec<usize>, shape: (usize, usize, usize)) -> usize {
        self.nodes.push(Node {
            name: name.to_string(),
            op,
            inputs,
            shape,
        });
        self.nodes.len() - 1
    }

    fn he_normal(&mut self, n: usize, fan_in: usize) -> Vec<T> {
        let std = (2.0 / fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("valid std");
        (0..n).map(|_| T::from_f64_lossy(dist.sample(self.rng))).collect()
    }

    /// `same`-style padding (`k / 2`), optional bias.
    pub fn conv(&mut self, name: &str, x: usize, cout: usize, k: usize, stride: usize, bias: bool) -> usize {
        let (cin, h, w) = self.shape(x);
        let pad = k / 2;
        let g = ConvGeom::new(cin, h, w, cout, k, stride, pad);
        let data = self.he_normal(cout * cin * k * k, cin * k * k);
        let weight = self
            .params
            .push(format!("{name}.weight"), vec![cout, cin, k, k], data, true);
        let bias = bias.then(|| {
            self.params
                .push(format!("{name}.bias"), vec![cout], vec![T::zero(); cout], true)
        });
        self.push(
            name,
            Op::Conv {
                weight,
                bias,
                k,
                stride,
                pad,
                depthwise: false,
            },
            vec![x],
            (cout, g.ho, g.wo),
        )
    }

    pub fn depthwise(&mut self, name: &str, x: usize, k: usize, stride: usize) -> usize {
        let (c, h, w) = self.shape(x);
        let pad = k / 2;
        let g = ConvGeom::new(c, h, w, c, k, stride, pad);
        let data = self.he_normal(c * k * k, k * k);
        let weight = self.params.push(format!("{name}.weight"), vec![c, 1, k, k], data, true);
        self.push(
            name,
            Op::Conv {
                weight,
                bias: None,
                k,
                stride,
                pad,
                depthwise: true,
            },
            vec![x],
            (c, g.ho, g.wo),
        )
    }

    pub fn bn(&mut self, name: &str, x: usize) -> usize {
        let shape = self.shape(x);
        let c = shape.0;
        let gamma = self
            .params
            .push(format!("{name}.gamma"), vec![c], vec![T::one(); c], true);
        let beta = self
            .params
            .push(format!("{name}.beta"), vec![c], vec![T::zero(); c], true);
        let running_mean = self
            .params
            .push(format!("{name}.running_mean"), vec![c], vec![T::zero(); c], false);
        let running_var = self
            .params
            .push(format!("{name}.running_var"), vec![c], vec![T::one(); c], false);
        self.push(
            name,
            Op::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            },
            vec![x],
            shape,
        )
    }

    pub fn relu(&mut self, x: usize) -> usize {
        let s = self.shape(x);
        let name = format!("{}.relu", self.nodes[x].name);
        self.push(&name, Op::Relu, vec![x], s)
    }

    pub fn swish(&mut self, x: usize) -> usize {
        let s = self.shape(x);
        let name = format!("{}.swish", self.nodes[x].name);
        self.push(&name, Op::Swish, vec![x], s)
    }

    pub fn sigmoid(&mut self, x: usize) -> usize {
        let s = self.shape(x);
        let name = format!("{}.sigmoid", self.nodes[x].name);
        self.push(&name, Op::Sigmoid, vec![x], s)
    }

    pub fn maxpool(&mut self, name: &str, x: usize, k: usize, stride: usize, pad: usize) -> usize {
        let (c, h, w) = self.shape(x);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        self.push(name, Op::MaxPool { k, stride, pad }, vec![x], (c, ho, wo))
    }

    pub fn avgpool(&mut self, name: &str, x: usize, k: usize) -> usize {
        let (c, h, w) = self.shape(x);
        self.push(name, Op::AvgPool { k }, vec![x], (c, h / k, w / k))
    }

    pub fn global_avg_pool(&mut self, name: &str, x: usize) -> usize {
        let (c, _, _) = self.shape(x);
        self.push(name, Op::GlobalAvgPool, vec![x], (c, 1, 1))
    }

    pub fn add(&mut self, name: &str, a: usize, b: usize) -> usize {
        let s = self.shape(a);
        assert_eq!(s, self.shape(b), "add operands must agree");
        self.push(name, Op::Add, vec![a, b], s)
    }

    pub fn concat(&mut self, name: &str, xs: Vec<usize>) -> usize {
        let (_, h, w) = self.shape(xs[0]);
        let c = xs
            .iter()
            .map(|&x| {
                let (c, hh, ww) = self.shape(x);
                assert_eq!((hh, ww), (h, w), "concat spatial sizes must agree");
                c
            })
            .sum();
        self.push(name, Op::Concat, xs, (c, h, w))
    }

    pub fn channel_scale(&mut self, name: &str, x: usize, s: usize) -> usize {
        let shape = self.shape(x);
        assert_eq!(self.shape(s), (shape.0, 1, 1));
        self.push(name, Op::ChannelScale, vec![x, s], shape)
    }

    pub fn dropout(&mut self, name: &str, x: usize) -> usize {
        let s = self.shape(x);
        self.push(name, Op::Dropout, vec![x], s)
    }

    /// Fully connected layer on a `c x 1 x 1` input, small-uniform init.
    pub fn dense(&mut self, name: &str, x: usize, fout: usize) -> usize {
        let (fin, h, w) = self.shape(x);
        assert_eq!((h, w), (1, 1), "dense expects pooled input");
        let limit = 0.1 / (fin as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
        let data = (0..fin * fout)
            .map(|_| T::from_f64_lossy(dist.sample(self.rng)))
            .collect();
        let weight = self.params.push(format!("{name}.weight"), vec![fout, fin], data, true);
        let bias = self
            .params
            .push(format!("{name}.bias"), vec![fout], vec![T::zero(); fout], true);
        self.push(name, Op::Dense { weight, bias }, vec![x], (fout, 1, 1))
    }
}
