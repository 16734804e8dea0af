use super::variant::{Modality, Variant};
use crate::error::{shape_err, Error, Result};
use crate::kernels::{
    ConvSpec, ForwardOptions, Grads, Graph, GraphBuilder, NodeId, ParamStore, Tape, Tensor, PPM_SCALES,
};

pub const NUM_CLASSES: usize = 3;
pub const LOW_CHANNELS: usize = 64;
pub const HIGH_CHANNELS: usize = 128;
pub const KEY_DIM: usize = HIGH_CHANNELS / 8;
pub const FUSION_REDUCTION: usize = 16;
pub const HEAD_HIDDEN: usize = 64;
pub const HEAD_KEEP: f64 = 0.7;
pub const EXPANSION: usize = 6;
/// Input extents must be multiples of this.
pub const INPUT_MULTIPLE: usize = 32;

/// Bottleneck stages of the global feature extractor:
/// `(out_channels, repeats, stride)`.
pub const STAGES: [(usize, usize, usize); 3] = [(64, 4, 2), (96, 3, 2), (128, 3, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Insert the gated self-attention blocks. Disabling them yields the
    /// graph the zero-initialized gates must reproduce.
    pub self_attention: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { self_attention: true }
    }
}

/// Per-pixel class scores for each present head and the class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `B x 3 x H x W` logits, indexed by [`Modality::index`].
    pub seg: [Option<Tensor>; 2],
    /// `B x 3` logits.
    pub class_logits: Option<Tensor>,
}

impl ForwardOutput {
    pub fn seg(&self, m: Modality) -> Option<&Tensor> {
        self.seg[m.index()].as_ref()
    }
}

fn encoder(b: &mut GraphBuilder, x: NodeId) -> Result<(NodeId, NodeId)> {
    let c = b.conv_bn_relu("enc.lds.conv", x, ConvSpec::new(1, 32, 3, 2))?;
    let d = b.dsconv("enc.lds.ds1", c, 32, 48, 2)?;
    let low = b.dsconv("enc.lds.ds2", d, 48, LOW_CHANNELS, 2)?;
    let mut h = low;
    let mut cin = LOW_CHANNELS;
    for (s, &(cout, repeats, stride)) in STAGES.iter().enumerate() {
        for r in 0..repeats {
            let st = if r == 0 { stride } else { 1 };
            h = b.inverted_residual(&format!("enc.gfe.stage{s}.block{r}"), h, cin, cout, EXPANSION, st)?;
            cin = cout;
        }
    }
    let high = b.ppm("enc.ppm", h, HIGH_CHANNELS, &PPM_SCALES)?;
    Ok((low, high))
}

/// `x + gamma * Attn(q(x), k(src), v(src))`; self-attention when `src == x`.
fn attention_block(b: &mut GraphBuilder, name: &str, x: NodeId, src: NodeId) -> Result<NodeId> {
    let q = b.conv(&format!("{name}.q"), x, ConvSpec::pointwise(HIGH_CHANNELS, KEY_DIM), true)?;
    let k = b.conv(&format!("{name}.k"), src, ConvSpec::pointwise(HIGH_CHANNELS, KEY_DIM), true)?;
    let v = b.conv(&format!("{name}.v"), src, ConvSpec::pointwise(HIGH_CHANNELS, HIGH_CHANNELS), true)?;
    let a = b.attention(&format!("{name}.attn"), q, k, v);
    b.gated_residual(name, x, a)
}

/// Channel-attention fusion (or plain concatenation when `gated` is off)
/// followed by a depthwise-separable 3x3 projection to 128 channels.
fn fusion(b: &mut GraphBuilder, first: NodeId, second: NodeId, gated: bool) -> Result<(NodeId, Option<NodeId>)> {
    let width = 2 * HIGH_CHANNELS;
    let cat = b.concat("fusion.cat", &[first, second]);
    let (scaled, gates) = if gated {
        let z = b.global_avg_pool("fusion.gap", cat);
        let h = b.linear("fusion.fc1", z, width, width / FUSION_REDUCTION)?;
        let h = b.relu(h);
        let g = b.linear("fusion.fc2", h, width / FUSION_REDUCTION, width)?;
        let g = b.sigmoid(g);
        (b.scale_channels("fusion.scale", cat, g), Some(g))
    } else {
        (cat, None)
    };
    let dw = b.conv("fusion.conv.dw", scaled, ConvSpec::depthwise(width, 1), false)?;
    let out = b.conv_bn_relu("fusion.conv.pw", dw, ConvSpec::pointwise(width, HIGH_CHANNELS))?;
    Ok((out, gates))
}

/// Feature fusion of low and refined high features, then the pixel
/// classifier, resized to the extent of `reference`.
fn decoder(b: &mut GraphBuilder, name: &str, low: NodeId, high: NodeId, reference: NodeId) -> Result<NodeId> {
    let up = b.resize_like(&format!("{name}.ffm.up"), high, low);
    let d = b.conv_bn_relu(&format!("{name}.ffm.dw"), up, ConvSpec::depthwise(HIGH_CHANNELS, 1))?;
    let hb = b.conv_bn(&format!("{name}.ffm.high"), d, ConvSpec::pointwise(HIGH_CHANNELS, HIGH_CHANNELS))?;
    let lb = b.conv_bn(&format!("{name}.ffm.low"), low, ConvSpec::pointwise(LOW_CHANNELS, HIGH_CHANNELS))?;
    let sum = b.add(&format!("{name}.ffm.add"), hb, lb);
    let f = b.relu(sum);
    let c = b.dsconv(&format!("{name}.cls.ds1"), f, HIGH_CHANNELS, HIGH_CHANNELS, 1)?;
    let c = b.dsconv(&format!("{name}.cls.ds2"), c, HIGH_CHANNELS, HIGH_CHANNELS, 1)?;
    let logits = b.conv(&format!("{name}.cls.out"), c, ConvSpec::pointwise(HIGH_CHANNELS, NUM_CLASSES), true)?;
    Ok(b.resize_like(&format!("{name}.resize"), logits, reference))
}

fn head(b: &mut GraphBuilder, fused: NodeId) -> Result<NodeId> {
    let z = b.global_avg_pool("head.gap", fused);
    let h = b.linear("head.fc1", z, HIGH_CHANNELS, HEAD_HIDDEN)?;
    let h = b.relu(h);
    let h = b.dropout("head.dropout", h, HEAD_KEEP);
    b.linear("head.fc2", h, HEAD_HIDDEN, NUM_CLASSES)
}

/// Stand-alone graphs for each component, sharing the network's parameters.
#[derive(Debug, Clone)]
struct Components {
    encoder: Graph,
    attention: [Option<Graph>; 2],
    fusion: Option<Graph>,
    decoder: [Option<Graph>; 2],
    head: Option<Graph>,
}

/// The assembled network: one graph over a named parameter store.
#[derive(Debug, Clone)]
pub struct FumeNet {
    variant: Variant,
    seed: u64,
    options: BuildOptions,
    store: ParamStore,
    graph: Graph,
    seg_out: [Option<NodeId>; 2],
    cls_out: Option<NodeId>,
    components: Components,
}

fn attn_name(m: Modality) -> String {
    format!("attn_{}", m.key())
}

fn dec_name(m: Modality) -> String {
    format!("dec_{}", m.key())
}

impl FumeNet {
    pub fn build(variant: Variant, seed: u64) -> Result<Self> {
        Self::build_with(variant, seed, BuildOptions::default())
    }

    pub fn build_with(variant: Variant, seed: u64, options: BuildOptions) -> Result<Self> {
        let mut store = ParamStore::new();
        let mods = variant.modalities();
        let mut b = GraphBuilder::new(&mut store, seed);
        let inputs: Vec<NodeId> = mods.iter().map(|m| b.input(m.key())).collect();

        let (low, high) = if inputs.len() == 2 {
            let x = b.concat_batch("streams", &inputs);
            let (l, h) = encoder(&mut b, x)?;
            let lows = [b.slice_batch("co2.low", l, 0, 2), b.slice_batch("ch4.low", l, 1, 2)];
            let highs = [b.slice_batch("co2.high", h, 0, 2), b.slice_batch("ch4.high", h, 1, 2)];
            (lows.to_vec(), highs.to_vec())
        } else {
            let (l, h) = encoder(&mut b, inputs[0])?;
            (vec![l], vec![h])
        };
        for (i, m) in mods.iter().enumerate() {
            b.tap(&format!("{}.low", m.key()), low[i]);
            b.tap(&format!("{}.high", m.key()), high[i]);
        }

        let mut refined = Vec::new();
        for (i, &m) in mods.iter().enumerate() {
            let r = if options.self_attention {
                attention_block(&mut b, &attn_name(m), high[i], high[i])?
            } else {
                high[i]
            };
            b.tap(&format!("{}.attended", m.key()), r);
            refined.push(r);
        }
        if variant == Variant::FullCrossModalAttn {
            let co2 = attention_block(&mut b, "cross_co2", refined[0], refined[1])?;
            let ch4 = attention_block(&mut b, "cross_ch4", refined[1], refined[0])?;
            refined = vec![co2, ch4];
        }

        let mut cls_out = None;
        if variant.has_classification() {
            let second = *refined.last().expect("at least one stream");
            let (fused, gates) = fusion(&mut b, refined[0], second, variant != Variant::SelfAttnOnly)?;
            b.tap("fused", fused);
            if let Some(g) = gates {
                b.tap("fusion.gates", g);
            }
            let logits = head(&mut b, fused)?;
            b.output("class_logits", logits);
            cls_out = Some(logits);
        }
        let mut seg_out = [None, None];
        if variant.has_segmentation() {
            for (i, &m) in mods.iter().enumerate() {
                let s = decoder(&mut b, &dec_name(m), low[i], refined[i], inputs[i])?;
                b.output(&format!("seg_{}", m.key()), s);
                seg_out[m.index()] = Some(s);
            }
        }
        let graph = b.finish();
        let components = Self::components(&mut store, variant, seed, options)?;
        Ok(FumeNet {
            variant,
            seed,
            options,
            store,
            graph,
            seg_out,
            cls_out,
            components,
        })
    }

    fn components(store: &mut ParamStore, variant: Variant, seed: u64, options: BuildOptions) -> Result<Components> {
        let before = store.len();
        let single = |store: &mut ParamStore, f: &dyn Fn(&mut GraphBuilder, NodeId) -> Result<NodeId>| -> Result<Graph> {
            let mut b = GraphBuilder::new(store, seed);
            let x = b.input("x");
            let y = f(&mut b, x)?;
            b.output("y", y);
            Ok(b.finish())
        };
        let encoder = {
            let mut b = GraphBuilder::new(store, seed);
            let x = b.input("x");
            let (l, h) = encoder(&mut b, x)?;
            b.output("low", l);
            b.output("high", h);
            b.finish()
        };
        let mut attention = [None, None];
        let mut decoders = [None, None];
        for &m in variant.modalities() {
            if options.self_attention {
                let name = attn_name(m);
                attention[m.index()] = Some(single(store, &|b, x| attention_block(b, &name, x, x))?);
            }
            if variant.has_segmentation() {
                let mut b = GraphBuilder::new(store, seed);
                let low = b.input("low");
                let high = b.input("high");
                let reference = b.input("reference");
                let y = decoder(&mut b, &dec_name(m), low, high, reference)?;
                b.output("y", y);
                decoders[m.index()] = Some(b.finish());
            }
        }
        let fusion_graph = if variant.has_classification() {
            let mut b = GraphBuilder::new(store, seed);
            let first = b.input("first");
            let second = b.input("second");
            let (fused, gates) = fusion(&mut b, first, second, variant != Variant::SelfAttnOnly)?;
            b.output("fused", fused);
            if let Some(g) = gates {
                b.output("gates", g);
            }
            Some(b.finish())
        } else {
            None
        };
        let head_graph = if variant.has_classification() {
            Some(single(store, &|b, x| head(b, x))?)
        } else {
            None
        };
        if store.len() != before {
            return Err(Error::InvalidArgument("component graphs introduced new parameters".into()));
        }
        Ok(Components {
            encoder,
            attention,
            fusion: fusion_graph,
            decoder: decoders,
            head: head_graph,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn options(&self) -> BuildOptions {
        self.options
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Trainable element count; the shared encoder is counted once.
    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    /// Multiply-accumulates of one forward on single `h x w` frames per
    /// consumed modality.
    pub fn macs(&self, height: usize, width: usize) -> Result<u64> {
        let shapes = vec![vec![1, 1, height, width]; self.variant.modalities().len()];
        self.graph.macs(&self.store, &shapes)
    }

    fn check_frame(x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != 1 || h == 0 || w == 0 || h % INPUT_MULTIPLE != 0 || w % INPUT_MULTIPLE != 0 {
            return Err(shape_err!(
                "frames must be N x 1 x H x W with H, W positive multiples of {INPUT_MULTIPLE}, got {:?}",
                x.shape()
            ));
        }
        Ok(())
    }

    fn graph_inputs(&self, co2: &Tensor, ch4: &Tensor) -> Result<Vec<Tensor>> {
        let mut inputs = Vec::new();
        for &m in self.variant.modalities() {
            let x = match m {
                Modality::Co2 => co2,
                Modality::Ch4 => ch4,
            };
            Self::check_frame(x)?;
            inputs.push(x.clone());
        }
        if self.variant.modalities().len() == 2 && co2.shape() != ch4.shape() {
            return Err(shape_err!("stream shapes differ: {:?} vs {:?}", co2.shape(), ch4.shape()));
        }
        Ok(inputs)
    }

    /// Run the graph on `N x 1 x H x W` batches of both streams (a stream the
    /// variant does not consume is ignored) and keep the tape.
    pub fn forward_tape(&self, co2: &Tensor, ch4: &Tensor, opts: ForwardOptions) -> Result<Tape> {
        let inputs = self.graph_inputs(co2, ch4)?;
        self.graph.forward(&self.store, &inputs, opts)
    }

    pub fn outputs(&self, tape: &Tape) -> ForwardOutput {
        ForwardOutput {
            seg: self.seg_out.map(|id| id.map(|id| tape.value(id).clone())),
            class_logits: self.cls_out.map(|id| tape.value(id).clone()),
        }
    }

    /// Eval-mode inference.
    pub fn forward(&self, co2: &Tensor, ch4: &Tensor) -> Result<ForwardOutput> {
        let tape = self.forward_tape(co2, ch4, ForwardOptions::eval())?;
        Ok(self.outputs(&tape))
    }

    /// Named intermediate value of a tape (`co2.low`, `ch4.attended`,
    /// `fused`, `fusion.gates`, ...).
    pub fn tap<'t>(&self, tape: &'t Tape, name: &str) -> Option<&'t Tensor> {
        self.graph.tap(name).map(|id| tape.value(id))
    }

    /// Fold the batch statistics of a train-mode tape into the running
    /// statistics.
    pub fn commit_running_stats(&mut self, tape: &Tape) {
        tape.commit_running_stats(&self.graph, &mut self.store);
    }

    /// Parameter gradients given gradients of the objective with respect to
    /// the outputs.
    pub fn backward(&self, tape: &Tape, seg_grads: [Option<Tensor>; 2], cls_grad: Option<Tensor>) -> Result<Grads> {
        let mut seeds = Vec::new();
        for (id, g) in self.seg_out.iter().zip(seg_grads) {
            if let (Some(id), Some(g)) = (id, g) {
                seeds.push((*id, g));
            }
        }
        if let (Some(id), Some(g)) = (self.cls_out, cls_grad) {
            seeds.push((id, g));
        }
        Ok(self.graph.backward(&self.store, tape, seeds, false)?.params)
    }

    /// Low (`64 x H/8 x W/8`) and high (`128 x H/32 x W/32`) features of a
    /// frame batch.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        Self::check_frame(x)?;
        let g = &self.components.encoder;
        let tape = g.forward(&self.store, &[x.clone()], ForwardOptions::eval())?;
        Ok((tape.value(g.outputs()[0].1).clone(), tape.value(g.outputs()[1].1).clone()))
    }

    fn run_single(&self, g: &Graph, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        let tape = g.forward(&self.store, inputs, ForwardOptions::eval())?;
        Ok(g.outputs().iter().map(|&(_, id)| tape.value(id).clone()).collect())
    }

    fn missing(&self, what: &str) -> Error {
        Error::InvalidArgument(format!("variant {} has no {what}", self.variant))
    }

    /// Gated self-attention of one stream's high features.
    pub fn self_attend(&self, m: Modality, high: &Tensor) -> Result<Tensor> {
        let g = self.components.attention[m.index()]
            .as_ref()
            .ok_or_else(|| self.missing(&format!("{} self-attention", m.key())))?;
        Ok(self.run_single(g, &[high.clone()])?.remove(0))
    }

    /// Fused features and, for gated fusion, the channel gates.
    pub fn fuse(&self, first: &Tensor, second: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let g = self.components.fusion.as_ref().ok_or_else(|| self.missing("fusion"))?;
        let mut out = self.run_single(g, &[first.clone(), second.clone()])?;
        let gates = (out.len() > 1).then(|| out.remove(1));
        Ok((out.remove(0), gates))
    }

    /// Segmentation logits at `height x width` from one stream's features.
    pub fn decode(&self, m: Modality, low: &Tensor, high: &Tensor, height: usize, width: usize) -> Result<Tensor> {
        let g = self.components.decoder[m.index()]
            .as_ref()
            .ok_or_else(|| self.missing(&format!("{} decoder", m.key())))?;
        let n = low.shape().first().copied().unwrap_or(0);
        let reference = Tensor::zeros(&[n, 1, height, width]);
        Ok(self.run_single(g, &[low.clone(), high.clone(), reference])?.remove(0))
    }

    /// Class logits of fused features (eval mode, so no dropout).
    pub fn classify(&self, fused: &Tensor) -> Result<Tensor> {
        let g = self.components.head.as_ref().ok_or_else(|| self.missing("classification head"))?;
        Ok(self.run_single(g, &[fused.clone()])?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_shapes_at_64() {
        let net = FumeNet::build(Variant::Fume, 0).unwrap();
        let (l, h) = net.encode(&Tensor::full(&[1, 1, 64, 64], 0.5)).unwrap();
        assert_eq!(l.shape(), &[1, 64, 8, 8]);
        assert_eq!(h.shape(), &[1, 128, 2, 2]);
        assert!(net.encode(&Tensor::zeros(&[1, 1, 48, 64])).is_err());
    }

    #[test]
    fn variant_parameter_ordering() {
        let count = |v| FumeNet::build(v, 0).unwrap().param_count();
        let (cls, seg, fume, full) = (
            count(Variant::ClassificationOnly),
            count(Variant::SegmentationOnly),
            count(Variant::Fume),
            count(Variant::FullCrossModalAttn),
        );
        assert!(cls < seg && seg < fume && fume < full, "{cls} {seg} {fume} {full}");
        assert!(count(Variant::Co2Only) < fume);
    }
}
