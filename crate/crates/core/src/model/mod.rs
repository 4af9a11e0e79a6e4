//! The full attention predictor: vision and semantic encoder paths, recurrent
//! fusion in one of three modes, and the map decoder. Also the objective, the
//! optimizer and the training loop.

mod adam;
mod loss;
mod train;

pub use adam::{Adam, AdamConfig};
pub use loss::{cc_loss, kl_loss, total_loss, LossTerms};
pub use train::{predict_clip, train, Batch, ClipIndex, StepRecord, TrainConfig, TrainSet, TRACE_HEADER};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::checkpoint::Entry;
use crate::nn::{ConvLstmCell, Decoder, EncoderPath, ForwardCtx, Init, Module, Param, STAGE_COUNT};
use crate::tensor::{Real, Tensor, Var};

/// Where the semantic stream joins the vision stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// No semantic stream.
    VisionOnly,
    /// Encoder features are modulated before a single recurrent cell.
    Early,
    /// Each stream has its own cell; final hidden states are modulated.
    Late,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::VisionOnly => "vision",
            FusionMode::Early => "early",
            FusionMode::Late => "late",
        }
    }

    pub fn uses_semantics(self) -> bool {
        self != FusionMode::VisionOnly
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vision" => Ok(FusionMode::VisionOnly),
            "early" => Ok(FusionMode::Early),
            "late" => Ok(FusionMode::Late),
            _ => Err(Error::config("mode", format!("{s:?} is not one of vision, early, late"))),
        }
    }
}

/// Architecture and initialization seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub mode: FusionMode,
    pub encoder_widths: [usize; STAGE_COUNT],
    pub hidden_channels: usize,
    pub decoder_widths: [usize; 2],
    pub seed: u64,
}

impl ModelConfig {
    /// Full-width plan: 64-128-256-512 encoders, 256 hidden, 128-64 decoder.
    pub fn full(mode: FusionMode, seed: u64) -> Self {
        ModelConfig { mode, encoder_widths: [64, 128, 256, 512], hidden_channels: 256, decoder_widths: [128, 64], seed }
    }

    /// Narrow plan for desk-scale training and gradient checks.
    pub fn narrow(mode: FusionMode, seed: u64) -> Self {
        ModelConfig { mode, encoder_widths: [4, 8, 12, 16], hidden_channels: 8, decoder_widths: [8, 8], seed }
    }

    /// Expected shapes for a batch of `n` clips of `t` frames at `r`x`r`.
    pub fn output_shapes(&self, n: usize, t: usize, r: usize) -> OutputShapes {
        let s = r / Decoder::<f32>::SCALE;
        OutputShapes {
            features: [n, t, self.encoder_widths[STAGE_COUNT - 1], s, s],
            fused: [n, self.hidden_channels, s, s],
            prediction: [n, 1, r, r],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutputShapes {
    pub features: [usize; 5],
    pub fused: [usize; 4],
    pub prediction: [usize; 4],
}

/// Clip tensors for one forward pass; the variant must match the mode.
#[derive(Clone, Copy, Debug)]
pub enum ModelInput<'a, R: Real> {
    /// `rgb`: `[N, 3, T, R, R]`.
    Vision { rgb: &'a Tensor<R> },
    /// Plus `semantic`: `[N, 1, T, R, R]`.
    Fused { rgb: &'a Tensor<R>, semantic: &'a Tensor<R> },
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput<R: Real> {
    /// Vision encoder output `[N, T, C, h, w]`.
    pub vision_features: Var<R>,
    pub semantic_features: Option<Var<R>>,
    /// Decoder input `[N, hidden, h, w]`.
    pub fused: Var<R>,
    /// `[N, 1, R, R]`.
    pub prediction: Var<R>,
}

/// `base * (1 + guide)`, elementwise.
pub fn semantic_modulation<R: Real>(base: &Var<R>, guide: &Var<R>) -> Result<Var<R>> {
    if base.shape() != guide.shape() {
        return Err(Error::shape(
            "semantic_modulation",
            format!("{:?} vs {:?}", base.shape(), guide.shape()),
        ));
    }
    base.hadamard(&guide.scalar_add(R::ONE))
}

#[derive(Clone, Debug)]
pub struct MsafNet<R> {
    config: ModelConfig,
    vision: EncoderPath<R>,
    semantic: Option<EncoderPath<R>>,
    cell_vision: Option<ConvLstmCell<R>>,
    cell_semantic: Option<ConvLstmCell<R>>,
    cell_fused: Option<ConvLstmCell<R>>,
    decoder: Decoder<R>,
}

impl<R: Real> MsafNet<R> {
    /// Each component draws from its own seed stream, so components shared
    /// between modes start from the same weights.
    pub fn new(config: ModelConfig) -> Self {
        let init = |k: u64| Init::new(config.seed.wrapping_mul(8).wrapping_add(k));
        let (widths, hidden) = (config.encoder_widths, config.hidden_channels);
        let feat = widths[STAGE_COUNT - 1];
        let mode = config.mode;
        MsafNet {
            config,
            vision: EncoderPath::new("vision", 3, widths, &mut init(1)),
            semantic: mode.uses_semantics().then(|| EncoderPath::new("semantic", 1, widths, &mut init(2))),
            cell_vision: (mode != FusionMode::Early)
                .then(|| ConvLstmCell::new("cell_vision", feat, hidden, &mut init(3))),
            cell_semantic: (mode == FusionMode::Late)
                .then(|| ConvLstmCell::new("cell_semantic", feat, hidden, &mut init(4))),
            cell_fused: (mode == FusionMode::Early)
                .then(|| ConvLstmCell::new("cell_fused", feat, hidden, &mut init(5))),
            decoder: Decoder::new("decoder", hidden, config.decoder_widths, &mut init(6)),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> FusionMode {
        self.config.mode
    }

    /// The recurrent cells present in this mode, by parameter prefix.
    pub fn cells_mut(&mut self) -> Vec<(&'static str, &mut ConvLstmCell<R>)> {
        let mut out = Vec::new();
        if let Some(c) = &mut self.cell_vision {
            out.push(("cell_vision", c));
        }
        if let Some(c) = &mut self.cell_semantic {
            out.push(("cell_semantic", c));
        }
        if let Some(c) = &mut self.cell_fused {
            out.push(("cell_fused", c));
        }
        out
    }

    /// Copies every parameter whose name exists in both models.
    pub fn copy_matching_from(&mut self, other: &MsafNet<R>) -> Result<usize> {
        let source: BTreeMap<&str, &Param<R>> = other.params().into_iter().map(|p| (p.name(), p)).collect();
        let mut copied = 0;
        for p in self.params_mut() {
            if let Some(src) = source.get(p.name()) {
                if src.value.shape() != p.value.shape() {
                    return Err(Error::shape("copy_matching_from", format!("{} differs in shape", p.name())));
                }
                p.value = src.value.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }

    fn check_clip(&self, what: &str, clip: &Tensor<R>, channels: usize) -> Result<()> {
        let s = clip.shape();
        if s.len() != 5 || s[1] != channels || s[3] != s[4] {
            return Err(Error::shape(
                "msafnet",
                format!("{what} clip must be [N,{channels},T,R,R], got {s:?}"),
            ));
        }
        Ok(())
    }

    pub fn forward_detailed(&self, ctx: &mut ForwardCtx<R>, input: ModelInput<'_, R>) -> Result<ForwardOutput<R>> {
        let (rgb, semantic) = match (self.mode(), input) {
            (FusionMode::VisionOnly, ModelInput::Vision { rgb }) => (rgb, None),
            (FusionMode::VisionOnly, ModelInput::Fused { .. }) => {
                return Err(Error::invalid("msafnet", "vision-only model does not take a semantic clip"))
            }
            (_, ModelInput::Fused { rgb, semantic }) => (rgb, Some(semantic)),
            (mode, ModelInput::Vision { .. }) => {
                return Err(Error::invalid("msafnet", format!("{} fusion needs a semantic clip", mode.as_str())))
            }
        };
        self.check_clip("rgb", rgb, 3)?;
        if let Some(sem) = semantic {
            self.check_clip("semantic", sem, 1)?;
            let (a, b) = (rgb.shape(), sem.shape());
            if (a[0], a[2], a[3]) != (b[0], b[2], b[3]) {
                return Err(Error::shape("msafnet", format!("rgb {a:?} and semantic {b:?} clips disagree")));
            }
        }
        let vision_features = self.vision.forward(ctx, &Var::constant(rgb.clone()))?;
        let semantic_features = match (semantic, &self.semantic) {
            (Some(sem), Some(path)) => Some(path.forward(ctx, &Var::constant(sem.clone()))?),
            _ => None,
        };
        let fused = match (self.mode(), &semantic_features) {
            (FusionMode::VisionOnly, _) => self.cell_vision.as_ref().expect("mode").unroll(ctx, &vision_features)?,
            (FusionMode::Early, Some(sf)) => {
                let modulated = semantic_modulation(&vision_features, sf)?;
                self.cell_fused.as_ref().expect("mode").unroll(ctx, &modulated)?
            }
            (FusionMode::Late, Some(sf)) => {
                let hv = self.cell_vision.as_ref().expect("mode").unroll(ctx, &vision_features)?;
                let hs = self.cell_semantic.as_ref().expect("mode").unroll(ctx, sf)?;
                semantic_modulation(&hv, &hs)?
            }
            _ => unreachable!("semantic features exist in fusion modes"),
        };
        let prediction = self.decoder.forward(ctx, &fused)?;
        Ok(ForwardOutput { vision_features, semantic_features, fused, prediction })
    }

    /// Attention map of the last frame of each clip, `[N, 1, R, R]`.
    pub fn forward(&self, ctx: &mut ForwardCtx<R>, input: ModelInput<'_, R>) -> Result<Var<R>> {
        Ok(self.forward_detailed(ctx, input)?.prediction)
    }

    /// Every parameter as single precision, in module order.
    pub fn to_entries(&self) -> Vec<Entry> {
        self.params().into_iter().map(|p| (p.name().to_string(), p.value.cast())).collect()
    }

    /// Rebuilds a model from checkpoint entries. The mode and widths are
    /// read off the entry names and shapes; every parameter must be present
    /// exactly once and nothing else.
    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let mut by_name: BTreeMap<&str, &Tensor<f32>> = BTreeMap::new();
        for (name, t) in entries {
            if by_name.insert(name.as_str(), t).is_some() {
                return Err(Error::invalid("checkpoint", format!("duplicate entry {name}")));
            }
        }
        let has_prefix = |p: &str| by_name.keys().any(|k| k.starts_with(p));
        let mode = match (has_prefix("cell_fused."), has_prefix("cell_semantic.")) {
            (true, false) => FusionMode::Early,
            (false, true) => FusionMode::Late,
            (false, false) => FusionMode::VisionOnly,
            (true, true) => return Err(Error::invalid("checkpoint", "both early and late fusion cells present")),
        };
        let out_channels = |name: &str| -> Result<usize> {
            by_name
                .get(name)
                .map(|t| t.shape()[0])
                .ok_or_else(|| Error::invalid("checkpoint", format!("missing entry {name}")))
        };
        let mut encoder_widths = [0; STAGE_COUNT];
        for (k, w) in encoder_widths.iter_mut().enumerate() {
            *w = out_channels(&format!("vision.stage{}.conv1.weight", k + 1))?;
        }
        let hidden_cell = if mode == FusionMode::Early { "cell_fused" } else { "cell_vision" };
        let config = ModelConfig {
            mode,
            encoder_widths,
            hidden_channels: out_channels(&format!("{hidden_cell}.input_gate.from_hidden.weight"))?,
            decoder_widths: [out_channels("decoder.conv1.weight")?, out_channels("decoder.conv2.weight")?],
            seed: 0,
        };
        let mut model = MsafNet::new(config);
        let mut expected = 0;
        for p in model.params_mut() {
            let t = by_name
                .get(p.name())
                .ok_or_else(|| Error::invalid("checkpoint", format!("missing entry {}", p.name())))?;
            if t.shape() != p.value.shape() {
                return Err(Error::shape(
                    "checkpoint",
                    format!("{}: stored {:?}, architecture needs {:?}", p.name(), t.shape(), p.value.shape()),
                ));
            }
            p.value = t.cast();
            expected += 1;
        }
        if expected != by_name.len() {
            let known: Vec<String> = model.params().iter().map(|p| p.name().to_string()).collect();
            let extra = by_name.keys().find(|k| !known.iter().any(|n| n == *k)).expect("count differs");
            return Err(Error::invalid("checkpoint", format!("unexpected entry {extra}")));
        }
        Ok(model)
    }
}

impl<R: Real> Module<R> for MsafNet<R> {
    fn params(&self) -> Vec<&Param<R>> {
        let mut out = self.vision.params();
        if let Some(s) = &self.semantic {
            out.extend(s.params());
        }
        for c in [&self.cell_vision, &self.cell_semantic, &self.cell_fused].into_iter().flatten() {
            out.extend(c.params());
        }
        out.extend(self.decoder.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<R>> {
        let mut out = self.vision.params_mut();
        if let Some(s) = &mut self.semantic {
            out.extend(s.params_mut());
        }
        for c in [&mut self.cell_vision, &mut self.cell_semantic, &mut self.cell_fused].into_iter().flatten() {
            out.extend(c.params_mut());
        }
        out.extend(self.decoder.params_mut());
        out
    }
}
