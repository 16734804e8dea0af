//! Static computation graphs over the kernel set, with a tape-based
//! reverse pass.
//!
//! A [`Graph`] is an ordered list of nodes; every node only reads nodes that
//! precede it, so a single forward sweep evaluates it and a single reverse
//! sweep differentiates it. Parameters live in a [`ParamStore`] and are
//! referenced by id, which is how weight sharing is expressed.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{attention, attention_backward, attention_macs};
use super::conv::{conv2d, conv2d_backward, ConvSpec};
use super::norm::{
    batch_norm_eval, batch_norm_eval_backward, batch_norm_train, batch_norm_train_backward,
    update_running_stats, BatchNormCache, BN_EPS, BN_MOMENTUM,
};
use super::ops;
use super::params::{Grads, Init, ParamId, ParamKind, ParamStore};
use super::spec::KernelSpec;
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input {
        slot: usize,
    },
    Conv {
        spec: ConvSpec,
        weight: ParamId,
        bias: Option<ParamId>,
    },
    BatchNorm {
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
        momentum: f64,
        eps: f64,
    },
    Relu,
    Sigmoid,
    Softmax,
    /// Bilinear resize of input 0 to the spatial extent of input 1.
    ResizeLike,
    Resize {
        height: usize,
        width: usize,
    },
    AdaptiveAvgPool {
        height: usize,
        width: usize,
    },
    GlobalAvgPool,
    Linear {
        weight: ParamId,
        bias: Option<ParamId>,
    },
    Dropout {
        keep: f64,
    },
    Add,
    Concat,
    ConcatBatch,
    SliceBatch {
        index: usize,
        parts: usize,
    },
    ScaleChannels,
    Attention,
    /// `x + gamma * a` with a learnable scalar `gamma`.
    GatedResidual {
        gamma: ParamId,
    },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, dropout active.
    Train,
    /// Running statistics, dropout disabled.
    Eval,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    pub mode: Mode,
    /// Seeds the dropout masks of this evaluation.
    pub seed: u64,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        ForwardOptions {
            mode: Mode::Eval,
            seed: 0,
        }
    }

    pub fn train(seed: u64) -> Self {
        ForwardOptions {
            mode: Mode::Train,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    BatchNorm(BatchNormCache),
    Dropout(Tensor),
    Attention(Tensor),
}

/// All node values of one forward evaluation, kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct Tape {
    values: Vec<Tensor>,
    caches: Vec<Cache>,
    mode: Mode,
}

impl Tape {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Fold the batch statistics of a training-mode pass into the running
    /// statistics held in `store`.
    pub fn commit_running_stats(&self, graph: &Graph, store: &mut ParamStore) {
        for (node, cache) in graph.nodes.iter().zip(&self.caches) {
            if let (
                Op::BatchNorm {
                    running_mean,
                    running_var,
                    momentum,
                    ..
                },
                Cache::BatchNorm(c),
            ) = (&node.op, cache)
            {
                let mut mean = store.value(*running_mean).clone();
                let mut var = store.value(*running_var).clone();
                update_running_stats(&mut mean, &mut var, c, *momentum);
                *store.value_mut(*running_mean) = mean;
                *store.value_mut(*running_var) = var;
            }
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Backward {
    pub params: Grads,
    /// Gradient per input slot (present only if requested and reachable).
    pub inputs: Vec<Option<Tensor>>,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    n_inputs: usize,
    outputs: Vec<(String, NodeId)>,
    taps: BTreeMap<String, NodeId>,
}

fn acc(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) -> Result<()> {
    match &mut grads[id.0] {
        Some(a) => a.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

impl Graph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn input_count(&self) -> usize {
        self.n_inputs
    }

    pub fn outputs(&self) -> &[(String, NodeId)] {
        &self.outputs
    }

    pub fn output(&self, name: &str) -> Option<NodeId> {
        self.outputs.iter().find(|(n, _)| n == name).map(|&(_, id)| id)
    }

    /// Named intermediate node.
    pub fn tap(&self, name: &str) -> Option<NodeId> {
        self.taps.get(name).copied()
    }

    /// Parameters referenced by at least one node.
    pub fn referenced_params(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self
            .nodes
            .iter()
            .flat_map(|n| match n.op {
                Op::Conv { weight, bias, .. } | Op::Linear { weight, bias } => {
                    std::iter::once(weight).chain(bias).collect::<Vec<_>>()
                }
                Op::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    ..
                } => vec![gamma, beta, running_mean, running_var],
                Op::GatedResidual { gamma } => vec![gamma],
                _ => vec![],
            })
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    fn kernel_spec(&self, node: &Node, params: &ParamStore, shapes: &[Vec<usize>]) -> Option<KernelSpec> {
        Some(match &node.op {
            Op::Input { .. } => return None,
            Op::Conv { spec, .. } => KernelSpec::Conv(*spec),
            Op::BatchNorm { gamma, .. } => KernelSpec::BatchNorm {
                channels: params.value(*gamma).len(),
            },
            Op::Relu => KernelSpec::Relu,
            Op::Sigmoid => KernelSpec::Sigmoid,
            Op::Softmax => KernelSpec::Softmax,
            Op::ResizeLike => {
                let r = &shapes[node.inputs[1].0];
                KernelSpec::BilinearResize {
                    height: r[2],
                    width: r[3],
                }
            }
            Op::Resize { height, width } => KernelSpec::BilinearResize {
                height: *height,
                width: *width,
            },
            Op::AdaptiveAvgPool { height, width } => KernelSpec::AdaptiveAvgPool {
                height: *height,
                width: *width,
            },
            Op::GlobalAvgPool => KernelSpec::GlobalAvgPool,
            Op::Linear { weight, .. } => {
                let s = params.value(*weight).shape();
                KernelSpec::Linear {
                    in_features: s[1],
                    out_features: s[0],
                }
            }
            Op::Dropout { keep } => KernelSpec::Dropout { keep: *keep },
            Op::Add | Op::GatedResidual { .. } => KernelSpec::Add,
            Op::Concat => KernelSpec::Concat,
            Op::ConcatBatch => KernelSpec::ConcatBatch,
            Op::SliceBatch { index, parts } => KernelSpec::SliceBatch {
                index: *index,
                parts: *parts,
            },
            Op::ScaleChannels => KernelSpec::Hadamard,
            Op::Attention => KernelSpec::Attention,
        })
    }

    /// Shape of every node for the given input shapes, without evaluating.
    pub fn infer_shapes(&self, params: &ParamStore, inputs: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
        if inputs.len() != self.n_inputs {
            return Err(shape_err!("graph takes {} inputs, got {}", self.n_inputs, inputs.len()));
        }
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let shape = match (&node.op, self.kernel_spec(node, params, &shapes)) {
                (Op::Input { slot }, _) => Ok(inputs[*slot].clone()),
                (Op::ResizeLike, Some(spec)) => spec.output_shape(&[&shapes[node.inputs[0].0]]),
                (_, Some(spec)) => {
                    let ins: Vec<&[usize]> = node.inputs.iter().map(|i| &shapes[i.0][..]).collect();
                    spec.output_shape(&ins)
                }
                (_, None) => unreachable!("only inputs lack a kernel spec"),
            }
            .map_err(|e| shape_err!("node `{}`: {}", node.name, e))?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Multiply-accumulate count of one forward evaluation. Convolutions,
    /// dense layers and attention are counted; normalization, activations,
    /// pooling and resampling are not.
    pub fn macs(&self, params: &ParamStore, inputs: &[Vec<usize>]) -> Result<u64> {
        let shapes = self.infer_shapes(params, inputs)?;
        let mut total = 0u64;
        for (node, out) in self.nodes.iter().zip(&shapes) {
            total += match &node.op {
                Op::Conv { spec, .. } => out[0] as u64 * spec.macs(out[2], out[3]),
                Op::Linear { weight, .. } => out[0] as u64 * params.value(*weight).len() as u64,
                Op::Attention => {
                    let q = &shapes[node.inputs[0].0];
                    let k = &shapes[node.inputs[1].0];
                    let v = &shapes[node.inputs[2].0];
                    q[0] as u64 * attention_macs(q[1], v[1], q[2] * q[3], k[2] * k[3])
                }
                _ => 0,
            };
        }
        Ok(total)
    }

    pub fn forward(&self, params: &ParamStore, inputs: &[Tensor], opts: ForwardOptions) -> Result<Tape> {
        if inputs.len() != self.n_inputs {
            return Err(shape_err!("graph takes {} inputs, got {}", self.n_inputs, inputs.len()));
        }
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        let mut caches = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let x = |i: usize| &values[node.inputs[i].0];
            let mut cache = Cache::None;
            let out = match &node.op {
                Op::Input { slot } => Ok(inputs[*slot].clone()),
                Op::Conv { spec, weight, bias } => conv2d(
                    x(0),
                    params.value(*weight),
                    bias.map(|b| params.value(b)),
                    spec,
                ),
                Op::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    eps,
                    ..
                } => match opts.mode {
                    Mode::Train => batch_norm_train(x(0), params.value(*gamma), params.value(*beta), *eps)
                        .map(|(y, c)| {
                            cache = Cache::BatchNorm(c);
                            y
                        }),
                    Mode::Eval => batch_norm_eval(
                        x(0),
                        params.value(*gamma),
                        params.value(*beta),
                        params.value(*running_mean),
                        params.value(*running_var),
                        *eps,
                    ),
                },
                Op::Relu => Ok(ops::relu(x(0))),
                Op::Sigmoid => Ok(ops::sigmoid(x(0))),
                Op::Softmax => ops::softmax(x(0)),
                Op::ResizeLike => {
                    let r = x(1).shape();
                    if r.len() != 4 {
                        Err(shape_err!("resize reference must be rank 4, got {:?}", r))
                    } else {
                        ops::bilinear_resize(x(0), r[2], r[3])
                    }
                }
                Op::Resize { height, width } => ops::bilinear_resize(x(0), *height, *width),
                Op::AdaptiveAvgPool { height, width } => ops::adaptive_avg_pool(x(0), *height, *width),
                Op::GlobalAvgPool => ops::global_avg_pool(x(0)),
                Op::Linear { weight, bias } => {
                    ops::linear(x(0), params.value(*weight), bias.map(|b| params.value(b)))
                }
                Op::Dropout { keep } => match opts.mode {
                    Mode::Eval => Ok(x(0).clone()),
                    Mode::Train => {
                        let mut rng = ChaCha8Rng::seed_from_u64(
                            opts.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ idx as u64,
                        );
                        ops::dropout_mask(x(0).shape(), *keep, &mut rng).and_then(|m| {
                            let y = ops::mul(x(0), &m);
                            cache = Cache::Dropout(m);
                            y
                        })
                    }
                },
                Op::Add => ops::add(x(0), x(1)),
                Op::Concat => {
                    let parts: Vec<&Tensor> = node.inputs.iter().map(|i| &values[i.0]).collect();
                    ops::concat_channels(&parts)
                }
                Op::ConcatBatch => {
                    let parts: Vec<&Tensor> = node.inputs.iter().map(|i| &values[i.0]).collect();
                    ops::concat_batch(&parts)
                }
                Op::SliceBatch { index, parts } => ops::slice_batch(x(0), *index, *parts),
                Op::ScaleChannels => ops::scale_channels(x(0), x(1)),
                Op::Attention => attention(x(0), x(1), x(2)).map(|a| {
                    cache = Cache::Attention(a.weights);
                    a.output
                }),
                Op::GatedResidual { gamma } => {
                    super::attention::gated_residual(x(0), x(1), params.value(*gamma).data()[0])
                }
            }
            .map_err(|e| match e {
                Error::Shape(m) => shape_err!("node `{}`: {}", node.name, m),
                other => other,
            })?;
            values.push(out);
            caches.push(cache);
        }
        Ok(Tape {
            values,
            caches,
            mode: opts.mode,
        })
    }

    /// Reverse sweep from `seeds` (gradients of a scalar objective with
    /// respect to chosen nodes). Frozen parameters and buffers receive no
    /// gradient.
    pub fn backward(
        &self,
        params: &ParamStore,
        tape: &Tape,
        seeds: Vec<(NodeId, Tensor)>,
        input_grads: bool,
    ) -> Result<Backward> {
        let trainable = |id: ParamId| {
            let e = params.entry(id);
            e.kind == ParamKind::Trainable && !e.frozen
        };
        // Which nodes lead back to something that wants a gradient.
        let mut wants = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let own = match &node.op {
                Op::Input { .. } => input_grads,
                Op::Conv { weight, bias, .. } | Op::Linear { weight, bias } => {
                    trainable(*weight) || bias.is_some_and(trainable)
                }
                Op::BatchNorm { gamma, beta, .. } => trainable(*gamma) || trainable(*beta),
                Op::GatedResidual { gamma } => trainable(*gamma),
                _ => false,
            };
            let upstream = match node.op {
                Op::ResizeLike => wants[node.inputs[0].0],
                _ => node.inputs.iter().any(|p| wants[p.0]),
            };
            wants[i] = own || upstream;
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (id, g) in seeds {
            if g.shape() != self.values_shape(tape, id) {
                return Err(shape_err!(
                    "seed gradient {:?} for node `{}` expected {:?}",
                    g.shape(),
                    self.nodes[id.0].name,
                    self.values_shape(tape, id)
                ));
            }
            acc(&mut grads, id, g)?;
        }
        let mut pgrads = Grads::new(params.len());
        let mut in_grads = vec![None; self.n_inputs];

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !wants[i] {
                continue;
            }
            let node = &self.nodes[i];
            let x = |k: usize| &tape.values[node.inputs[k].0];
            let want = |k: usize| wants[node.inputs[k].0];
            let mut push_param = |id: ParamId, t: Tensor| -> Result<()> {
                if trainable(id) {
                    pgrads.accumulate(id, t)?;
                }
                Ok(())
            };
            match &node.op {
                Op::Input { slot } => in_grads[*slot] = Some(g),
                Op::Conv { spec, weight, bias } => {
                    let cg = conv2d_backward(x(0), params.value(*weight), bias.is_some(), &g, spec)?;
                    push_param(*weight, cg.weight)?;
                    if let (Some(b), Some(db)) = (bias, cg.bias) {
                        push_param(*b, db)?;
                    }
                    if want(0) {
                        acc(&mut grads, node.inputs[0], cg.input)?;
                    }
                }
                Op::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    eps,
                    ..
                } => {
                    let (dx, dg, db) = match &tape.caches[i] {
                        Cache::BatchNorm(c) => batch_norm_train_backward(&g, params.value(*gamma), c)?,
                        _ => batch_norm_eval_backward(
                            x(0),
                            &g,
                            params.value(*gamma),
                            params.value(*running_mean),
                            params.value(*running_var),
                            *eps,
                        )?,
                    };
                    push_param(*gamma, dg)?;
                    push_param(*beta, db)?;
                    if want(0) {
                        acc(&mut grads, node.inputs[0], dx)?;
                    }
                }
                Op::Relu => acc(&mut grads, node.inputs[0], ops::relu_backward(x(0), &g))?,
                Op::Sigmoid => acc(&mut grads, node.inputs[0], ops::sigmoid_backward(&tape.values[i], &g))?,
                Op::Softmax => acc(&mut grads, node.inputs[0], ops::softmax_backward(&tape.values[i], &g)?)?,
                Op::ResizeLike | Op::Resize { .. } => {
                    acc(&mut grads, node.inputs[0], ops::bilinear_resize_backward(x(0).shape(), &g)?)?
                }
                Op::AdaptiveAvgPool { .. } => {
                    acc(&mut grads, node.inputs[0], ops::adaptive_avg_pool_backward(x(0).shape(), &g)?)?
                }
                Op::GlobalAvgPool => {
                    acc(&mut grads, node.inputs[0], ops::global_avg_pool_backward(x(0).shape(), &g)?)?
                }
                Op::Linear { weight, bias } => {
                    let (dx, dw, db) = ops::linear_backward(x(0), params.value(*weight), bias.is_some(), &g)?;
                    push_param(*weight, dw)?;
                    if let (Some(b), Some(db)) = (bias, db) {
                        push_param(*b, db)?;
                    }
                    if want(0) {
                        acc(&mut grads, node.inputs[0], dx)?;
                    }
                }
                Op::Dropout { .. } => {
                    let dx = match &tape.caches[i] {
                        Cache::Dropout(m) => ops::mul(&g, m)?,
                        _ => g,
                    };
                    acc(&mut grads, node.inputs[0], dx)?;
                }
                Op::Add => {
                    if want(1) {
                        acc(&mut grads, node.inputs[1], g.clone())?;
                    }
                    if want(0) {
                        acc(&mut grads, node.inputs[0], g)?;
                    }
                }
                Op::Concat => {
                    let chans: Vec<usize> = node.inputs.iter().map(|p| tape.values[p.0].shape()[1]).collect();
                    for (k, part) in ops::split_channels(&g, &chans)?.into_iter().enumerate() {
                        if want(k) {
                            acc(&mut grads, node.inputs[k], part)?;
                        }
                    }
                }
                Op::ConcatBatch => {
                    let mut offset = 0;
                    for (k, p) in node.inputs.iter().enumerate() {
                        let len = tape.values[p.0].len();
                        if want(k) {
                            let part = Tensor::new(
                                tape.values[p.0].shape().to_vec(),
                                g.data()[offset..offset + len].to_vec(),
                            )?;
                            acc(&mut grads, *p, part)?;
                        }
                        offset += len;
                    }
                }
                Op::SliceBatch { index, parts } => {
                    let mut dx = Tensor::zeros(x(0).shape());
                    let per = dx.len() / parts;
                    dx.data_mut()[index * per..(index + 1) * per].copy_from_slice(g.data());
                    acc(&mut grads, node.inputs[0], dx)?;
                }
                Op::ScaleChannels => {
                    let (dx, dg) = ops::scale_channels_backward(x(0), x(1), &g)?;
                    if want(0) {
                        acc(&mut grads, node.inputs[0], dx)?;
                    }
                    if want(1) {
                        acc(&mut grads, node.inputs[1], dg)?;
                    }
                }
                Op::Attention => {
                    let Cache::Attention(w) = &tape.caches[i] else {
                        return Err(Error::Numeric(format!("attention `{}` has no cached weights", node.name)));
                    };
                    let (dq, dk, dv) = attention_backward(x(0), x(1), x(2), w, &g)?;
                    for (k, d) in [dq, dk, dv].into_iter().enumerate() {
                        if want(k) {
                            acc(&mut grads, node.inputs[k], d)?;
                        }
                    }
                }
                Op::GatedResidual { gamma } => {
                    let gv = params.value(*gamma).data()[0];
                    let dgamma: f64 = g.data().iter().zip(x(1).data()).map(|(a, b)| a * b).sum();
                    push_param(*gamma, Tensor::new(vec![1], vec![dgamma])?)?;
                    if want(1) {
                        let mut da = g.clone();
                        da.scale(gv);
                        acc(&mut grads, node.inputs[1], da)?;
                    }
                    if want(0) {
                        acc(&mut grads, node.inputs[0], g)?;
                    }
                }
            }
        }
        for (id, g) in pgrads.iter() {
            if !g.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter `{}`",
                    params.entry(id).name
                )));
            }
        }
        Ok(Backward {
            params: pgrads,
            inputs: in_grads,
        })
    }

    fn values_shape<'t>(&self, tape: &'t Tape, id: NodeId) -> &'t [usize] {
        tape.values[id.0].shape()
    }
}

/// Incremental construction of a [`Graph`] whose parameters are created (or
/// reused, by name) in a [`ParamStore`].
pub struct GraphBuilder<'s> {
    graph: Graph,
    store: &'s mut ParamStore,
    seed: u64,
}

impl<'s> GraphBuilder<'s> {
    pub fn new(store: &'s mut ParamStore, seed: u64) -> Self {
        GraphBuilder {
            graph: Graph::default(),
            store,
            seed,
        }
    }

    pub fn store(&mut self) -> &mut ParamStore {
        self.store
    }

    pub fn finish(self) -> Graph {
        self.graph
    }

    fn push(&mut self, name: impl Into<String>, op: Op, inputs: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.graph.nodes.len());
        self.graph.nodes.push(Node {
            name: name.into(),
            op,
            inputs,
        });
        id
    }

    fn param(&mut self, name: &str, shape: &[usize], init: Init, kind: ParamKind) -> Result<ParamId> {
        self.store.get_or_init(name, shape, init, kind, self.seed)
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        let slot = self.graph.n_inputs;
        self.graph.n_inputs += 1;
        self.push(name, Op::Input { slot }, vec![])
    }

    pub fn tap(&mut self, name: &str, id: NodeId) {
        self.graph.taps.insert(name.to_string(), id);
    }

    pub fn output(&mut self, name: &str, id: NodeId) {
        self.graph.outputs.push((name.to_string(), id));
    }

    pub fn conv(&mut self, name: &str, x: NodeId, spec: ConvSpec, bias: bool) -> Result<NodeId> {
        spec.validate()?;
        let shape = spec.weight_shape();
        let fan_in = shape[1] * shape[2] * shape[3];
        let weight = self.param(
            &format!("{name}.weight"),
            &shape,
            Init::KaimingUniform { fan_in },
            ParamKind::Trainable,
        )?;
        let bias = if bias {
            Some(self.param(
                &format!("{name}.bias"),
                &[spec.out_channels],
                Init::Constant(0.0),
                ParamKind::Trainable,
            )?)
        } else {
            None
        };
        Ok(self.push(name, Op::Conv { spec, weight, bias }, vec![x]))
    }

    pub fn batch_norm(&mut self, name: &str, x: NodeId, channels: usize) -> Result<NodeId> {
        let c = [channels];
        let gamma = self.param(&format!("{name}.gamma"), &c, Init::Constant(1.0), ParamKind::Trainable)?;
        let beta = self.param(&format!("{name}.beta"), &c, Init::Constant(0.0), ParamKind::Trainable)?;
        let running_mean = self.param(&format!("{name}.running_mean"), &c, Init::Constant(0.0), ParamKind::Buffer)?;
        let running_var = self.param(&format!("{name}.running_var"), &c, Init::Constant(1.0), ParamKind::Buffer)?;
        Ok(self.push(
            name,
            Op::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                momentum: BN_MOMENTUM,
                eps: BN_EPS,
            },
            vec![x],
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let name = format!("{}.relu", self.graph.nodes[x.0].name);
        self.push(name, Op::Relu, vec![x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let name = format!("{}.sigmoid", self.graph.nodes[x.0].name);
        self.push(name, Op::Sigmoid, vec![x])
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let name = format!("{}.softmax", self.graph.nodes[x.0].name);
        self.push(name, Op::Softmax, vec![x])
    }

    /// Convolution without bias followed by batch norm.
    pub fn conv_bn(&mut self, name: &str, x: NodeId, spec: ConvSpec) -> Result<NodeId> {
        let c = self.conv(name, x, spec, false)?;
        self.batch_norm(&format!("{name}.bn"), c, spec.out_channels)
    }

    pub fn conv_bn_relu(&mut self, name: &str, x: NodeId, spec: ConvSpec) -> Result<NodeId> {
        let b = self.conv_bn(name, x, spec)?;
        Ok(self.relu(b))
    }

    /// Depthwise 3x3 (BN, ReLU) then pointwise 1x1 (BN, ReLU).
    pub fn dsconv(&mut self, name: &str, x: NodeId, cin: usize, cout: usize, stride: usize) -> Result<NodeId> {
        let d = self.conv_bn_relu(&format!("{name}.dw"), x, ConvSpec::depthwise(cin, stride))?;
        self.conv_bn_relu(&format!("{name}.pw"), d, ConvSpec::pointwise(cin, cout))
    }

    /// Expand 1x1 (BN, ReLU), depthwise 3x3 (BN, ReLU), project 1x1 (BN);
    /// identity skip when the stride is 1 and the widths agree.
    pub fn inverted_residual(
        &mut self,
        name: &str,
        x: NodeId,
        cin: usize,
        cout: usize,
        expansion: usize,
        stride: usize,
    ) -> Result<NodeId> {
        if stride != 1 && stride != 2 {
            return Err(Error::InvalidArgument(format!(
                "inverted residual stride must be 1 or 2, got {stride}"
            )));
        }
        let hidden = cin * expansion;
        let e = self.conv_bn_relu(&format!("{name}.expand"), x, ConvSpec::pointwise(cin, hidden))?;
        let d = self.conv_bn_relu(&format!("{name}.dw"), e, ConvSpec::depthwise(hidden, stride))?;
        let p = self.conv_bn(&format!("{name}.project"), d, ConvSpec::pointwise(hidden, cout))?;
        if stride == 1 && cin == cout {
            Ok(self.add(&format!("{name}.skip"), x, p))
        } else {
            Ok(p)
        }
    }

    /// Pyramid pooling: per-scale adaptive pool, 1x1 conv to `C/4`, resize
    /// back, concatenate with the input and project to `C` channels.
    pub fn ppm(&mut self, name: &str, x: NodeId, channels: usize, scales: &[usize]) -> Result<NodeId> {
        let branch = channels / 4;
        let mut parts = vec![x];
        for &s in scales {
            let p = self.adaptive_avg_pool(&format!("{name}.pool{s}"), x, s);
            let c = self.conv_bn_relu(&format!("{name}.branch{s}"), p, ConvSpec::pointwise(channels, branch))?;
            parts.push(self.resize_like(&format!("{name}.up{s}"), c, x));
        }
        let cat = self.concat(&format!("{name}.cat"), &parts);
        let width = channels + branch * scales.len();
        self.conv_bn_relu(&format!("{name}.fuse"), cat, ConvSpec::pointwise(width, channels))
    }

    pub fn linear(&mut self, name: &str, x: NodeId, in_features: usize, out_features: usize) -> Result<NodeId> {
        let weight = self.param(
            &format!("{name}.weight"),
            &[out_features, in_features],
            Init::KaimingUniform { fan_in: in_features },
            ParamKind::Trainable,
        )?;
        let bias = self.param(&format!("{name}.bias"), &[out_features], Init::Constant(0.0), ParamKind::Trainable)?;
        Ok(self.push(
            name,
            Op::Linear {
                weight,
                bias: Some(bias),
            },
            vec![x],
        ))
    }

    pub fn resize_like(&mut self, name: &str, x: NodeId, reference: NodeId) -> NodeId {
        self.push(name, Op::ResizeLike, vec![x, reference])
    }

    pub fn resize(&mut self, name: &str, x: NodeId, height: usize, width: usize) -> NodeId {
        self.push(name, Op::Resize { height, width }, vec![x])
    }

    pub fn adaptive_avg_pool(&mut self, name: &str, x: NodeId, size: usize) -> NodeId {
        self.push(
            name,
            Op::AdaptiveAvgPool {
                height: size,
                width: size,
            },
            vec![x],
        )
    }

    pub fn global_avg_pool(&mut self, name: &str, x: NodeId) -> NodeId {
        self.push(name, Op::GlobalAvgPool, vec![x])
    }

    pub fn dropout(&mut self, name: &str, x: NodeId, keep: f64) -> NodeId {
        self.push(name, Op::Dropout { keep }, vec![x])
    }

    pub fn add(&mut self, name: &str, a: NodeId, b: NodeId) -> NodeId {
        self.push(name, Op::Add, vec![a, b])
    }

    pub fn concat(&mut self, name: &str, parts: &[NodeId]) -> NodeId {
        self.push(name, Op::Concat, parts.to_vec())
    }

    pub fn concat_batch(&mut self, name: &str, parts: &[NodeId]) -> NodeId {
        self.push(name, Op::ConcatBatch, parts.to_vec())
    }

    pub fn slice_batch(&mut self, name: &str, x: NodeId, index: usize, parts: usize) -> NodeId {
        self.push(name, Op::SliceBatch { index, parts }, vec![x])
    }

    pub fn scale_channels(&mut self, name: &str, x: NodeId, gates: NodeId) -> NodeId {
        self.push(name, Op::ScaleChannels, vec![x, gates])
    }

    pub fn attention(&mut self, name: &str, q: NodeId, k: NodeId, v: NodeId) -> NodeId {
        self.push(name, Op::Attention, vec![q, k, v])
    }

    /// `x + gamma * a` where `gamma` starts at zero.
    pub fn gated_residual(&mut self, name: &str, x: NodeId, a: NodeId) -> Result<NodeId> {
        let gamma = self.param(&format!("{name}.gamma"), &[1], Init::Constant(0.0), ParamKind::Trainable)?;
        Ok(self.push(name, Op::GatedResidual { gamma }, vec![x, a]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_parameters_accumulate_gradients() {
        let mut store = ParamStore::new();
        let mut b = GraphBuilder::new(&mut store, 1);
        let x = b.input("x");
        let y1 = b.linear("fc", x, 2, 2).unwrap();
        let y2 = b.linear("fc", x, 2, 2).unwrap();
        let s = b.add("sum", y1, y2);
        b.output("s", s);
        let g = b.finish();
        assert_eq!(store.len(), 2);
        let input = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let tape = g.forward(&store, &[input], ForwardOptions::eval()).unwrap();
        let back = g
            .backward(&store, &tape, vec![(s, Tensor::full(&[1, 2], 1.0))], false)
            .unwrap();
        let w = store.id("fc.weight").unwrap();
        assert_eq!(back.params.get(w).unwrap().data(), &[2.0, 4.0, 2.0, 4.0]);
    }

    #[test]
    fn frozen_parameter_gets_no_gradient() {
        let mut store = ParamStore::new();
        let mut b = GraphBuilder::new(&mut store, 1);
        let x = b.input("x");
        let y = b.linear("fc", x, 2, 1).unwrap();
        b.output("y", y);
        let g = b.finish();
        store.set_frozen("fc.weight", true).unwrap();
        let input = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let tape = g.forward(&store, &[input], ForwardOptions::eval()).unwrap();
        let back = g.backward(&store, &tape, vec![(y, Tensor::full(&[1, 1], 1.0))], false).unwrap();
        assert!(back.params.get(store.id("fc.weight").unwrap()).is_none());
        assert!(back.params.get(store.id("fc.bias").unwrap()).is_some());
    }
}
