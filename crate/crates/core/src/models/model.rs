use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::TaskKind;
use crate::error::{Error, Result};
use crate::mine::FeatureSequence;
use crate::nn::{Affine, DenseMatrix, Parameters};
use crate::ssm::{BiMambaBlockParams, BlockCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Reconstruction,
    FrameClassification,
    DecoderSeq2seq,
}

impl HeadKind {
    pub fn task(self) -> TaskKind {
        match self {
            HeadKind::Reconstruction => TaskKind::Reconstruction,
            HeadKind::FrameClassification | HeadKind::DecoderSeq2seq => TaskKind::Classification,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Reconstruction => "reconstruction",
            HeadKind::FrameClassification => "frame_classification",
            HeadKind::DecoderSeq2seq => "decoder_seq2seq",
        }
    }
}

/// Shape of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub head: HeadKind,
    /// Input feature width `D`.
    pub input_dim: usize,
    /// Block width `D_model`.
    pub d_model: usize,
    /// SSM state size `N`.
    pub state_dim: usize,
    pub encoder_layers: usize,
    /// Blocks in the decoder stage; only used by `decoder_seq2seq`.
    pub decoder_layers: usize,
    /// Output classes; ignored by the reconstruction head.
    pub class_count: usize,
    /// Residual connection around every block.
    pub residual: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            head: HeadKind::Reconstruction,
            input_dim: 16,
            d_model: 12,
            state_dim: 8,
            encoder_layers: 6,
            decoder_layers: 2,
            class_count: 8,
            residual: false,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_layers < 2 {
            return Err(Error::Config(format!(
                "model.encoder_layers must be at least 2, got {}",
                self.encoder_layers
            )));
        }
        if self.input_dim == 0 || self.d_model == 0 || self.state_dim == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if self.head != HeadKind::Reconstruction && self.class_count < 2 {
            return Err(Error::Config("model.class_count must be at least 2".into()));
        }
        if self.head == HeadKind::DecoderSeq2seq && self.decoder_layers < 1 {
            return Err(Error::Config("decoder_seq2seq needs at least one decoder layer".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        match self.head {
            HeadKind::Reconstruction => self.input_dim,
            _ => self.class_count,
        }
    }

    fn decoder_depth(&self) -> usize {
        if self.head == HeadKind::DecoderSeq2seq {
            self.decoder_layers
        } else {
            0
        }
    }
}

/// Input projection followed by bidirectional blocks.
///
/// Representation 0 is the projection output; representation `i ≥ 1` is the
/// output of block `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderStack {
    pub input_projection: Affine,
    pub layers: Vec<BiMambaBlockParams>,
    /// Representation indices exposed for probing, ascending.
    pub tap_points: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct StackCache {
    pub reps: Vec<DenseMatrix>,
    blocks: Vec<BlockCache>,
}

fn run_blocks(layers: &[BiMambaBlockParams], first: DenseMatrix) -> Result<StackCache> {
    let mut reps = Vec::with_capacity(layers.len() + 1);
    let mut blocks = Vec::with_capacity(layers.len());
    reps.push(first);
    for (i, layer) in layers.iter().enumerate() {
        let (out, cache) = layer.forward_cached(reps.last().expect("non-empty")).map_err(|e| match e {
            Error::Numeric { context, detail, history } => Error::Numeric {
                context: format!("block {} ({context})", i + 1),
                detail,
                history,
            },
            other => other,
        })?;
        reps.push(out);
        blocks.push(cache);
    }
    Ok(StackCache { reps, blocks })
}

/// Backpropagates `g_top` through the blocks; returns the gradient at
/// representation 0.
fn backprop_blocks(
    layers: &[BiMambaBlockParams],
    cache: &StackCache,
    g_top: DenseMatrix,
    grads: &mut [BiMambaBlockParams],
) -> DenseMatrix {
    let mut g = g_top;
    for i in (0..layers.len()).rev() {
        g = layers[i].backward_pass(&cache.blocks[i], &g, &mut grads[i]);
    }
    g
}

impl EncoderStack {
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Self {
        let input_projection = Affine::init(spec.d_model, spec.input_dim, 1.0, rng);
        let layers = (0..spec.encoder_layers)
            .map(|_| BiMambaBlockParams::init(spec.d_model, spec.state_dim, spec.residual, rng))
            .collect();
        Self {
            input_projection,
            layers,
            tap_points: (0..=spec.encoder_layers).collect(),
        }
    }

    /// Blocks that pass their input through unchanged.
    pub fn identity(input_projection: Affine, layers: usize, state_dim: usize) -> Self {
        let width = input_projection.out_dim();
        Self {
            input_projection,
            layers: (0..layers).map(|_| BiMambaBlockParams::identity(width, state_dim)).collect(),
            tap_points: (0..=layers).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            input_projection: self.input_projection.zeros_like(),
            layers: self.layers.iter().map(BiMambaBlockParams::zeros_like).collect(),
            tap_points: self.tap_points.clone(),
        }
    }

    pub fn width(&self) -> usize {
        self.input_projection.out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::Config(format!(
                "encoder stacks need at least 2 layers, got {}",
                self.layers.len()
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if l.width() != self.width() {
                return Err(Error::dimension(format!("encoder layer {}", i + 1), self.width(), l.width()));
            }
        }
        if let Some(&bad) = self.tap_points.iter().find(|&&t| t > self.layers.len()) {
            return Err(Error::Config(format!(
                "tap point {bad} exceeds the {} encoder layers",
                self.layers.len()
            )));
        }
        if self.tap_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("tap points must be strictly ascending".into()));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, input: &DenseMatrix) -> Result<StackCache> {
        self.validate()?;
        self.input_projection.check("encoder input projection", input)?;
        run_blocks(&self.layers, self.input_projection.forward(input))
    }

    pub(crate) fn push_tensors<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        self.input_projection.push_tensors(out);
        self.layers.iter().for_each(|l| l.push_tensors(out));
    }

    pub(crate) fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.input_projection.push_tensors_mut(out);
        self.layers.iter_mut().for_each(|l| l.push_tensors_mut(out));
    }

    fn tensor_labels(&self, out: &mut Vec<String>) {
        out.push("encoder.input_projection.w".into());
        out.push("encoder.input_projection.b".into());
        for i in 0..self.layers.len() {
            for k in 0..BiMambaBlockParams::TENSOR_COUNT {
                out.push(format!("encoder.layer{}.{}", i + 1, BiMambaBlockParams::tensor_label(k)));
            }
        }
    }
}

/// Runs the stack on one input and returns its output and the tapped
/// representations, in `tap_points` order.
pub fn encoder_forward(stack: &EncoderStack, input: &FeatureSequence) -> Result<(FeatureSequence, Vec<FeatureSequence>)> {
    let cache = stack.forward_cached(input.values())?;
    let taps = stack
        .tap_points
        .iter()
        .map(|&t| FeatureSequence::new(cache.reps[t].clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = FeatureSequence::new(cache.reps.last().expect("non-empty").clone())?;
    Ok((out, taps))
}

/// Decoder stage of `decoder_seq2seq`: its input is the additive fusion
/// `W_e·enc_out + W_x·local + b` of the encoder output and the local features
/// (representation 0), followed by bidirectional blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderStage {
    pub encoder_fusion: Affine,
    pub local_fusion: Affine,
    pub layers: Vec<BiMambaBlockParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    pub kind: HeadKind,
    /// Maps the last representation to the prediction.
    pub output: Affine,
    pub decoder: Option<DecoderStage>,
}

impl TaskHead {
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Self {
        let m = spec.d_model;
        let decoder = (spec.head == HeadKind::DecoderSeq2seq).then(|| {
            let mut local_fusion = Affine::init(m, m, 1.0, rng);
            local_fusion.b.fill(0.0);
            DecoderStage {
                encoder_fusion: Affine::init(m, m, 1.0, rng),
                local_fusion,
                layers: (0..spec.decoder_layers)
                    .map(|_| BiMambaBlockParams::init(m, spec.state_dim, spec.residual, rng))
                    .collect(),
            }
        });
        Self {
            kind: spec.head,
            output: Affine::init(spec.output_dim(), m, 1.0, rng),
            decoder,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            output: self.output.zeros_like(),
            decoder: self.decoder.as_ref().map(|d| DecoderStage {
                encoder_fusion: d.encoder_fusion.zeros_like(),
                local_fusion: d.local_fusion.zeros_like(),
                layers: d.layers.iter().map(BiMambaBlockParams::zeros_like).collect(),
            }),
        }
    }

    fn push_tensors<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        self.output.push_tensors(out);
        if let Some(d) = &self.decoder {
            d.encoder_fusion.push_tensors(out);
            d.local_fusion.push_tensors(out);
            d.layers.iter().for_each(|l| l.push_tensors(out));
        }
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.output.push_tensors_mut(out);
        if let Some(d) = &mut self.decoder {
            d.encoder_fusion.push_tensors_mut(out);
            d.local_fusion.push_tensors_mut(out);
            d.layers.iter_mut().for_each(|l| l.push_tensors_mut(out));
        }
    }

    fn tensor_labels(&self, out: &mut Vec<String>) {
        out.push("head.output.w".into());
        out.push("head.output.b".into());
        if let Some(d) = &self.decoder {
            for name in ["encoder_fusion.w", "encoder_fusion.b", "local_fusion.w", "local_fusion.b"] {
                out.push(format!("head.decoder.{name}"));
            }
            for i in 0..d.layers.len() {
                for k in 0..BiMambaBlockParams::TENSOR_COUNT {
                    out.push(format!("head.decoder.layer{}.{}", i + 1, BiMambaBlockParams::tensor_label(k)));
                }
            }
        }
    }
}

/// Encoder plus task head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub encoder: EncoderStack,
    pub head: TaskHead,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ModelCache {
    encoder_input: DenseMatrix,
    encoder: StackCache,
    decoder: Option<(DenseMatrix, StackCache)>,
    head_input: DenseMatrix,
    /// Model output: reconstructed features or class logits.
    pub prediction: DenseMatrix,
}

impl ModelCache {
    /// Every representation in probe order: encoder representations
    /// `0..=n`, then the output of each decoder block.
    pub fn representations(&self) -> Vec<&DenseMatrix> {
        let mut out: Vec<&DenseMatrix> = self.encoder.reps.iter().collect();
        if let Some((_, dec)) = &self.decoder {
            out.extend(dec.reps.iter().skip(1));
        }
        out
    }
}

impl Model {
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let encoder = EncoderStack::init(spec, rng);
        let head = TaskHead::init(spec, rng);
        Ok(Self {
            spec: spec.clone(),
            encoder,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            encoder: self.encoder.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    /// Number of probe-able representations: the encoder's `n + 1` plus one
    /// per decoder block.
    pub fn depth(&self) -> usize {
        self.encoder.layers.len() + 1 + self.head.decoder.as_ref().map_or(0, |d| d.layers.len())
    }

    /// Representation indices probed by default: the encoder tap points and
    /// every decoder block.
    pub fn probe_taps(&self) -> Vec<usize> {
        let mut taps = self.encoder.tap_points.clone();
        taps.extend(self.encoder.layers.len() + 1..self.depth());
        taps
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.encoder.validate()?;
        if self.encoder.layers.len() != self.spec.encoder_layers
            || self.encoder.width() != self.spec.d_model
            || self.encoder.input_projection.in_dim() != self.spec.input_dim
        {
            return Err(Error::Config("encoder shape disagrees with the model spec".into()));
        }
        if self.head.kind != self.spec.head || self.head.decoder.is_some() != (self.spec.decoder_depth() > 0) {
            return Err(Error::Config("head kind disagrees with the model spec".into()));
        }
        if self.head.output.out_dim() != self.spec.output_dim() || self.head.output.in_dim() != self.spec.d_model {
            return Err(Error::dimension(
                "head output map",
                format!("{}×{}", self.spec.output_dim(), self.spec.d_model),
                format!("{}×{}", self.head.output.out_dim(), self.head.output.in_dim()),
            ));
        }
        if let Some(d) = &self.head.decoder {
            if d.layers.len() != self.spec.decoder_layers {
                return Err(Error::Config("decoder depth disagrees with the model spec".into()));
            }
            for l in &d.layers {
                l.validate()?;
            }
        }
        Ok(())
    }

    pub fn forward_cached(&self, input: &DenseMatrix) -> Result<ModelCache> {
        let encoder = self.encoder.forward_cached(input)?;
        let enc_out = encoder.reps.last().expect("non-empty");
        let (decoder, head_input) = match &self.head.decoder {
            Some(d) => {
                let mut fused = d.encoder_fusion.forward(enc_out);
                fused.add_assign(&d.local_fusion.forward(&encoder.reps[0]));
                let stack = run_blocks(&d.layers, fused.clone())?;
                let top = stack.reps.last().expect("non-empty").clone();
                (Some((fused, stack)), top)
            }
            None => (None, enc_out.clone()),
        };
        let prediction = self.head.output.forward(&head_input);
        if !prediction.is_finite() {
            return Err(Error::numeric("model forward", "non-finite prediction"));
        }
        Ok(ModelCache {
            encoder_input: input.clone(),
            encoder,
            decoder,
            head_input,
            prediction,
        })
    }

    pub fn predict(&self, input: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_cached(input)?.prediction)
    }

    /// Probe representations of one input, in [`ModelCache::representations`]
    /// order.
    pub fn representations(&self, input: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        Ok(self.forward_cached(input)?.representations().into_iter().cloned().collect())
    }

    /// Accumulates parameter gradients of a loss whose gradient with respect
    /// to the prediction is `g_pred`.
    pub fn backward(&self, cache: &ModelCache, g_pred: &DenseMatrix, grads: &mut Model) {
        let g_head = self.head.output.backward(&cache.head_input, g_pred, &mut grads.head.output);
        let mut g_local = None;
        let g_enc_out = match (&self.head.decoder, &cache.decoder) {
            (Some(d), Some((_, stack))) => {
                let gd = grads.head.decoder.as_mut().expect("mirrors the model");
                let g_fused = backprop_blocks(&d.layers, stack, g_head, &mut gd.layers);
                let enc_out = cache.encoder.reps.last().expect("non-empty");
                g_local = Some(d.local_fusion.backward(&cache.encoder.reps[0], &g_fused, &mut gd.local_fusion));
                d.encoder_fusion.backward(enc_out, &g_fused, &mut gd.encoder_fusion)
            }
            _ => g_head,
        };
        let mut g0 = backprop_blocks(&self.encoder.layers, &cache.encoder, g_enc_out, &mut grads.encoder.layers);
        if let Some(g) = g_local {
            g0.add_assign(&g);
        }
        // The raw input is not a parameter, so only the weight gradients matter.
        let input = &cache.encoder_input;
        self.encoder.input_projection.accumulate_param_grads(input, &g0, &mut grads.encoder.input_projection);
    }
}

impl Parameters for Model {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        self.encoder.push_tensors(&mut out);
        self.head.push_tensors(&mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.encoder.push_tensors_mut(&mut out);
        self.head.push_tensors_mut(&mut out);
        out
    }

    fn tensor_name(&self, index: usize) -> String {
        self.tensor_names().get(index).cloned().unwrap_or_else(|| format!("tensor[{index}]"))
    }
}

impl Model {
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.encoder.tensor_labels(&mut out);
        self.head.tensor_labels(&mut out);
        out
    }
}
