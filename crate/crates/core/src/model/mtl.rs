use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::nn::{
    Conv2d, DepthwiseConv2d, Dropout, InstanceNorm, LayerNorm, Linear, Mode, PatchEmbedding, TransformerBlock,
    TransposedConv2d,
};
use crate::rng::StreamKey;
use crate::tensor::Tensor;

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    GazeHead,
    Decoder,
    PupilHead,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [ParamGroup::Encoder, ParamGroup::GazeHead, ParamGroup::Decoder, ParamGroup::PupilHead];

    pub fn prefix(self) -> &'static str {
        match self {
            ParamGroup::Encoder => "encoder.",
            ParamGroup::GazeHead => "gaze_head.",
            ParamGroup::Decoder => "decoder.",
            ParamGroup::PupilHead => "pupil_head.",
        }
    }

    pub fn of(name: &str) -> Option<ParamGroup> {
        Self::ALL.into_iter().find(|g| name.starts_with(g.prefix()))
    }
}

/// Per-axis affine map between model units and millimetres for gaze outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Default for TargetScaler {
    fn default() -> Self {
        TargetScaler { mean: [0.0; 2], std: [1.0; 2] }
    }
}

impl TargetScaler {
    pub fn fit(targets: &[[f64; 2]]) -> Self {
        if targets.is_empty() {
            return Self::default();
        }
        let n = targets.len() as f64;
        let mut mean = [0.0; 2];
        for t in targets {
            mean[0] += t[0] / n;
            mean[1] += t[1] / n;
        }
        let mut std = [0.0; 2];
        for axis in 0..2 {
            let var = targets.iter().map(|t| (t[axis] - mean[axis]).powi(2)).sum::<f64>() / n;
            std[axis] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        TargetScaler { mean, std }
    }
}

/// Targets for one EEG window.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    /// `[1, C, T]`.
    pub eeg: &'a Tensor<T>,
    /// Gaze position in mm.
    pub gaze: [f64; 2],
    pub pupil: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Losses {
    pub main: f64,
    pub recon: Option<f64>,
    pub pupil: Option<f64>,
    /// `‖θ‖²` over the parameters that take part in the objective.
    pub l2: f64,
    pub total: f64,
}

/// Nodes produced by [`MtlModel::total_loss`] on a tape.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub total: Var,
    /// Per example, `[2]` in mm.
    pub gaze_pred: Vec<Var>,
    /// Per example, `[1, C, T]`.
    pub recon: Vec<Var>,
    /// Per example, `[1]`.
    pub pupil_pred: Vec<Var>,
    pub losses: Losses,
}

/// FC → dropout → FC regression head reading the CLS row.
#[derive(Debug, Clone)]
pub struct RegressionHead {
    pub fc1: Linear,
    pub dropout: Dropout,
    pub fc2: Linear,
}

impl RegressionHead {
    fn new<T: Element>(store: &mut ParamStore<T>, name: &str, dim: usize, hidden: usize, out: usize, p: f64, key: StreamKey) -> Result<Self> {
        Ok(RegressionHead {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, key)?,
            dropout: Dropout::new(p)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, out, key)?,
        })
    }

    fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, cls: Var, mode: Mode, key: StreamKey) -> Result<Var> {
        let h = self.fc1.forward(tape, store, cls)?;
        let h = self.dropout.forward(tape, h, mode, &mut key.rng())?;
        let y = self.fc2.forward(tape, store, h)?;
        let n = self.fc2.out_features;
        tape.reshape(y, &[n])
    }
}

/// Transposed conv → instance norm → ReLU.
#[derive(Debug, Clone)]
pub struct DeconvBlock {
    pub deconv: TransposedConv2d,
    pub norm: InstanceNorm,
}

impl DeconvBlock {
    fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.deconv.forward(tape, store, x)?;
        let h = self.norm.forward(tape, store, h)?;
        Ok(tape.relu(h))
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub spatial: DeconvBlock,
    pub temporal: DeconvBlock,
}

/// The multi-task model: shared representation module plus task heads.
#[derive(Debug, Clone)]
pub struct MtlModel<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub scaler: TargetScaler,
    pub stem: Conv2d,
    pub depthwise: DepthwiseConv2d,
    pub embedding: PatchEmbedding,
    pub blocks: Vec<TransformerBlock>,
    pub final_norm: LayerNorm,
    pub gaze_head: RegressionHead,
    pub decoder: Option<Decoder>,
    pub pupil_head: Option<RegressionHead>,
    groups: Vec<ParamGroup>,
}

impl<T: Element> MtlModel<T> {
    /// Builds and initializes a model. Every parameter draws from a stream
    /// named after itself, so sharing a seed gives identical encoder and
    /// gaze-head weights regardless of which auxiliary heads exist.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let key = StreamKey::new(seed).named("init");
        let mut store = ParamStore::new();
        let c = &config;
        let d = c.embed_dim;

        let stem = Conv2d::new(&mut store, "encoder.stem", 1, c.stem_filters, c.stem_geometry, key)?;
        let depthwise = DepthwiseConv2d::new(
            &mut store,
            "encoder.depthwise",
            c.stem_filters,
            c.depthwise_multiplier,
            c.depthwise_geometry,
            key,
        )?;
        let embedding = PatchEmbedding::new(&mut store, "encoder.embed", d, c.patch_grid, key)?;
        let blocks = (0..c.encoder_layers)
            .map(|i| {
                TransformerBlock::new(
                    &mut store,
                    &format!("encoder.blocks.{i}"),
                    d,
                    c.encoder_heads,
                    d * c.mlp_ratio,
                    c.norm_eps,
                    key,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(&mut store, "encoder.norm", d, c.norm_eps)?;
        let gaze_head = RegressionHead::new(&mut store, "gaze_head", d, c.pred_hidden, 2, c.dropout_p, key)?;

        let decoder = if c.variant.has_reconstruction() {
            let spatial = DeconvBlock {
                deconv: TransposedConv2d::new(&mut store, "decoder.spatial.deconv", d, c.stem_filters, c.stem_geometry, key)?,
                norm: InstanceNorm::new(&mut store, "decoder.spatial.norm", c.stem_filters, c.norm_eps, c.instance_norm_affine)?,
            };
            let temporal = DeconvBlock {
                deconv: TransposedConv2d::new(&mut store, "decoder.temporal.deconv", c.stem_filters, 1, c.depthwise_geometry, key)?,
                norm: InstanceNorm::new(&mut store, "decoder.temporal.norm", 1, c.norm_eps, c.instance_norm_affine)?,
            };
            Some(Decoder { spatial, temporal })
        } else {
            None
        };
        let pupil_head = if c.variant.has_pupil() {
            Some(RegressionHead::new(&mut store, "pupil_head", d, c.pred_hidden, 1, c.dropout_p, key)?)
        } else {
            None
        };

        let groups = store
            .iter()
            .map(|(_, p)| ParamGroup::of(&p.name).expect("every parameter carries a group prefix"))
            .collect();
        Ok(MtlModel {
            config,
            store,
            scaler: TargetScaler::default(),
            stem,
            depthwise,
            embedding,
            blocks,
            final_norm,
            gaze_head,
            decoder,
            pupil_head,
            groups,
        })
    }

    pub fn group_of(&self, id: crate::autodiff::ParamId) -> ParamGroup {
        self.groups[id.index()]
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Whether a group contributes to the objective under the current weights.
    pub fn group_active(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Encoder | ParamGroup::GazeHead => true,
            ParamGroup::Decoder => self.decoder.is_some() && self.config.alpha_recon > 0.0,
            ParamGroup::PupilHead => self.pupil_head.is_some() && self.config.alpha_pupil > 0.0,
        }
    }

    /// Same architecture and weights in another element type.
    pub fn cast<U: Element>(&self) -> MtlModel<U> {
        MtlModel {
            config: self.config.clone(),
            store: self.store.cast(),
            scaler: self.scaler,
            stem: self.stem.clone(),
            depthwise: self.depthwise.clone(),
            embedding: self.embedding.clone(),
            blocks: self.blocks.clone(),
            final_norm: self.final_norm.clone(),
            gaze_head: self.gaze_head.clone(),
            decoder: self.decoder.clone(),
            pupil_head: self.pupil_head.clone(),
            groups: self.groups.clone(),
        }
    }

    /// `[1, C, T]` EEG → `[(N+1), D]` encoder sequence (row 0 is CLS).
    pub fn representation_forward(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let expected = self.config.input_dims();
        if tape.value(x).dims() != expected {
            return Err(Error::geometry(
                "representation",
                format!("input dims {:?} do not match configured {:?}", tape.value(x).dims(), expected),
            ));
        }
        let s = &self.store;
        let (c, t) = (self.config.channels, self.config.timesteps);
        let x = tape.reshape(x, &[1, c, t])?;
        let h = self.stem.forward(tape, s, x)?;
        let h = self.depthwise.forward(tape, s, h)?;
        let mut seq = self.embedding.forward(tape, s, h)?;
        for block in &self.blocks {
            seq = block.forward(tape, s, seq)?;
        }
        self.final_norm.forward(tape, s, seq)
    }

    fn cls_row(&self, tape: &mut Tape<T>, seq: Var) -> Result<Var> {
        tape.slice_rows(seq, 0, 1)
    }

    /// Gaze estimate `[2]` in mm from the CLS row.
    pub fn predict_gaze(&self, tape: &mut Tape<T>, seq: Var, mode: Mode, key: StreamKey) -> Result<Var> {
        let cls = self.cls_row(tape, seq)?;
        let y = self.gaze_head.forward(tape, &self.store, cls, mode, key.named("gaze_head"))?;
        let std = tape.constant(Tensor::from_f64_slice(&[2], &self.scaler.std)?);
        let mean = tape.constant(Tensor::from_f64_slice(&[2], &self.scaler.mean)?);
        let y = tape.mul(y, std)?;
        tape.add(y, mean)
    }

    /// Pupil-size estimate `[1]` from the CLS row.
    pub fn predict_pupil(&self, tape: &mut Tape<T>, seq: Var, mode: Mode, key: StreamKey) -> Result<Var> {
        let head = self
            .pupil_head
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no pupil head".into()))?;
        let cls = self.cls_row(tape, seq)?;
        head.forward(tape, &self.store, cls, mode, key.named("pupil_head"))
    }

    /// Reconstruction `[1, C, T]` from the patch rows.
    pub fn reconstruct(&self, tape: &mut Tape<T>, seq: Var) -> Result<Var> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no reconstruction decoder".into()))?;
        let grid = tape.depatchify(seq, self.config.patch_grid)?;
        let h = dec.spatial.forward(tape, &self.store, grid)?;
        let h = dec.temporal.forward(tape, &self.store, h)?;
        tape.upsample_nearest(h, (self.config.channels, self.config.timesteps))
    }

    /// The weighted objective `main + α₁·recon + α₂·pupil + λ‖θ‖²` over a batch.
    ///
    /// Task losses are averaged over examples. A head whose weight is zero
    /// is still evaluated and reported but does not feed the total, so it
    /// receives no gradient; its parameters are also left out of the L2 term.
    /// Example `i` draws its dropout masks from `key.split(i)`.
    pub fn total_loss(&self, tape: &mut Tape<T>, batch: &[Example<'_, T>], mode: Mode, key: StreamKey) -> Result<ModelOutput> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("total_loss: empty batch".into()));
        }
        if self.pupil_head.is_some() && batch.iter().any(|e| e.pupil.is_none()) {
            return Err(Error::MissingTarget("pupil"));
        }
        let inv_n = T::one() / T::of_usize(batch.len());
        let mut gaze_pred = Vec::with_capacity(batch.len());
        let mut recon = Vec::new();
        let mut pupil_pred = Vec::new();
        let mut main_terms = Vec::with_capacity(batch.len());
        let mut recon_terms = Vec::new();
        let mut pupil_terms = Vec::new();

        for (i, ex) in batch.iter().enumerate() {
            let sample_key = key.split(i as u64);
            let x = tape.constant(ex.eeg.clone());
            let seq = self.representation_forward(tape, x)?;
            let g = self.predict_gaze(tape, seq, mode, sample_key)?;
            let target = tape.constant(Tensor::from_f64_slice(&[2], &ex.gaze)?);
            main_terms.push(tape.mse_loss(g, target)?);
            gaze_pred.push(g);
            if self.decoder.is_some() {
                let r = self.reconstruct(tape, seq)?;
                recon_terms.push(tape.mse_loss(r, x)?);
                recon.push(r);
            }
            if self.pupil_head.is_some() {
                let p = self.predict_pupil(tape, seq, mode, sample_key)?;
                let target = tape.constant(Tensor::from_f64_slice(&[1], &[ex.pupil.expect("checked above")])?);
                pupil_terms.push(tape.mse_loss(p, target)?);
                pupil_pred.push(p);
            }
        }

        let mean_of = |tape: &mut Tape<T>, terms: &[Var]| -> Result<Option<Var>> {
            if terms.is_empty() {
                return Ok(None);
            }
            let mut acc = terms[0];
            for &t in &terms[1..] {
                acc = tape.add(acc, t)?;
            }
            Ok(Some(tape.scale(acc, inv_n)))
        };
        let main = mean_of(tape, &main_terms)?.expect("batch is non-empty");
        let recon_loss = mean_of(tape, &recon_terms)?;
        let pupil_loss = mean_of(tape, &pupil_terms)?;

        let mut total = main;
        let c = &self.config;
        if let Some(r) = recon_loss.filter(|_| c.alpha_recon > 0.0) {
            let w = tape.scale(r, T::of_f64(c.alpha_recon));
            total = tape.add(total, w)?;
        }
        if let Some(p) = pupil_loss.filter(|_| c.alpha_pupil > 0.0) {
            let w = tape.scale(p, T::of_f64(c.alpha_pupil));
            total = tape.add(total, w)?;
        }
        let mut l2_value = T::zero();
        let mut squares = Vec::new();
        for (id, p) in self.store.iter() {
            if self.group_active(self.group_of(id)) {
                if c.l2_coeff > 0.0 {
                    let v = tape.param(&self.store, id);
                    squares.push(tape.sum_squares(v));
                } else {
                    l2_value += p.value.sum_squares();
                }
            }
        }
        if !squares.is_empty() {
            let mut acc = squares[0];
            for &s in &squares[1..] {
                acc = tape.add(acc, s)?;
            }
            l2_value = tape.value(acc).item();
            let w = tape.scale(acc, T::of_f64(c.l2_coeff));
            total = tape.add(total, w)?;
        }

        let value = |v: Var| tape.value(v).item().as_f64();
        let losses = Losses {
            main: value(main),
            recon: recon_loss.map(value),
            pupil: pupil_loss.map(value),
            l2: l2_value.as_f64(),
            total: value(total),
        };
        Ok(ModelOutput { total, gaze_pred, recon, pupil_pred, losses })
    }

    /// Eval-mode gaze predictions in mm.
    pub fn predict(&self, eeg: &Tensor<T>) -> Result<[f64; 2]> {
        let mut tape = Tape::inference();
        let x = tape.constant(eeg.clone());
        let seq = self.representation_forward(&mut tape, x)?;
        let g = self.predict_gaze(&mut tape, seq, Mode::Eval, StreamKey::new(0))?;
        let v = tape.value(g).data();
        Ok([v[0].as_f64(), v[1].as_f64()])
    }
}
