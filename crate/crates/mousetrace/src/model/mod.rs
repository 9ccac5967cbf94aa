//! The twin-encoder similarity model.
//!
//! One shared-weight embedding runs two branches over each `(256, 4)`
//! sample: a three-layer 1-D convolution stack (batch norm + ReLU per
//! layer, global average pooling at the end) and a stacked LSTM whose final
//! hidden state is kept. The branch outputs concatenate into the sample
//! embedding; a pair's two embeddings concatenate again and pass through a
//! three-layer feedforward head (ReLU + dropout between layers) ending in a
//! single similarity logit.
//!
//! Weight sharing is structural: both pair members go through the same
//! layer objects in one batch, so their batch-norm statistics are pooled
//! and their gradients accumulate into the same tensors.

mod adam;
pub mod check;
mod layers;
mod lstm;
mod real;
pub mod serial;

use std::time::Instant;

use ndarray::{concatenate, s, Array1, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use real::{sigmoid, Real};

use crate::eval::{roc_auc, ScoredSet};
use crate::pairs::Instance;
use crate::preprocess::Sample;
use crate::seed;
use crate::store::SampleStore;
use adam::Adam;
use layers::{
    bce_with_logits, gap_backward, gap_forward, BatchNorm1d, Conv1d, Dropout, Linear, Relu, Relu3,
};
use lstm::LstmLayer;

/// Logits are clamped here before the inference sigmoid so scores stay
/// strictly inside (0, 1) even in f32.
const LOGIT_CLAMP: f64 = 35.0;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("sample has {got} values, expected {rows}x{features}")]
    ShapeMismatch {
        rows: usize,
        features: usize,
        got: usize,
    },
    #[error("training and validation instance sets must be non-empty")]
    EmptyDataset,
    #[error("training loss became non-finite in epoch {epoch}; last finite epoch is {}", epoch.saturating_sub(1))]
    NonfiniteLoss { epoch: usize },
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("instance references missing data: {0}")]
    BadInstance(#[from] crate::store::StoreError),
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Architecture and training hyperparameters.
///
/// Layer counts follow the fixed design (three conv layers, two recurrent
/// layers, three head layers); widths, kernel, dropout, and batch size are
/// free and recorded in run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Rows per sample matrix.
    pub input_len: usize,
    /// Columns per row (dx, dy, dx/dt, dy/dt).
    pub input_features: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub recurrent_hidden: usize,
    pub recurrent_layers: usize,
    pub head_widths: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_len: 256,
            input_features: 4,
            conv_channels: vec![32, 64, 64],
            conv_kernel: 5,
            recurrent_hidden: 64,
            recurrent_layers: 2,
            head_widths: vec![256, 64],
            dropout: 0.3,
            learning_rate: 1e-5,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::BadConfig(msg.into()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.conv_kernel % 2 == 0 || self.conv_kernel == 0 {
            return bad("conv_kernel must be odd (same padding)");
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("conv_channels must be non-empty and positive");
        }
        if self.head_widths.contains(&0) {
            return bad("head_widths must be positive");
        }
        if self.recurrent_hidden == 0 || self.recurrent_layers == 0 {
            return bad("recurrent stack must have positive size");
        }
        if self.input_len == 0 || self.input_features == 0 || self.batch_size == 0 {
            return bad("input shape and batch size must be positive");
        }
        Ok(())
    }

    /// Length of one sample embedding: last conv width + recurrent hidden.
    pub fn embed_dim(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(0) + self.recurrent_hidden
    }
}

/// Anything that maps a sample pair to P(same user). The decision layers
/// (base selection, authentication, inconsistency) depend only on this, so
/// tests drive them with stub scorers.
pub trait PairScorer {
    fn score_pair(&self, a: &Sample, b: &Sample) -> Result<f64, ModelError>;

    /// Batched scoring; the default just loops, real models override with
    /// one forward pass per chunk.
    fn score_batch(&self, pairs: &[(&Sample, &Sample)]) -> Result<Vec<f64>, ModelError> {
        pairs.iter().map(|(a, b)| self.score_pair(a, b)).collect()
    }
}

struct ForwardShape {
    pair_batch: usize,
    time: usize,
}

/// The full network. `Model<f32>` is the production type (see
/// [`EmbeddingModel`]); `Model<f64>` exists for the gradient check.
pub struct Model<R: Real> {
    pub config: ModelConfig,
    convs: Vec<Conv1d<R>>,
    bns: Vec<BatchNorm1d<R>>,
    conv_relus: Vec<Relu3<R>>,
    lstms: Vec<LstmLayer<R>>,
    fcs: Vec<Linear<R>>,
    head_relus: Vec<Relu<R>>,
    head_drops: Vec<Dropout<R>>,
    fwd: Option<ForwardShape>,
}

/// The production model: 32-bit floats, matching the on-disk format.
pub type EmbeddingModel = Model<f32>;

impl<R: Real> Model<R> {
    /// Seeded initialization; identical seeds give identical weights.
    pub fn new(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &["model-init"]));
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut c_in = config.input_features;
        for &c_out in &config.conv_channels {
            convs.push(Conv1d::new(c_in, c_out, config.conv_kernel, &mut rng));
            bns.push(BatchNorm1d::new(c_out));
            c_in = c_out;
        }
        let mut lstms = Vec::new();
        let mut l_in = config.input_features;
        for _ in 0..config.recurrent_layers {
            lstms.push(LstmLayer::new(l_in, config.recurrent_hidden, &mut rng));
            l_in = config.recurrent_hidden;
        }
        let mut fcs = Vec::new();
        let mut d_in = 2 * config.embed_dim();
        for &w in &config.head_widths {
            fcs.push(Linear::new(d_in, w, &mut rng));
            d_in = w;
        }
        fcs.push(Linear::new(d_in, 1, &mut rng));
        let hidden_layers = config.head_widths.len();
        Ok(Self {
            config: config.clone(),
            conv_relus: vec![Relu3::default(); convs.len()],
            convs,
            bns,
            lstms,
            fcs,
            head_relus: vec![Relu::default(); hidden_layers],
            head_drops: vec![Dropout::new(config.dropout); hidden_layers],
            fwd: None,
        })
    }

    /// Visit every trainable tensor (value, grad) in the fixed documented
    /// order — the same order the serializer and optimizer use.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut [R], &mut [R])) {
        for (k, conv) in self.convs.iter_mut().enumerate() {
            conv.w.visit(&format!("conv{}.weight", k + 1), f);
            conv.b.visit(&format!("conv{}.bias", k + 1), f);
            self.bns[k].gamma.visit(&format!("bn{}.gamma", k + 1), f);
            self.bns[k].beta.visit(&format!("bn{}.beta", k + 1), f);
        }
        for (k, lstm) in self.lstms.iter_mut().enumerate() {
            lstm.w_ih.visit(&format!("lstm{}.w_ih", k + 1), f);
            lstm.w_hh.visit(&format!("lstm{}.w_hh", k + 1), f);
            lstm.b.visit(&format!("lstm{}.bias", k + 1), f);
        }
        for (k, fc) in self.fcs.iter_mut().enumerate() {
            fc.w.visit(&format!("fc{}.weight", k + 1), f);
            fc.b.visit(&format!("fc{}.bias", k + 1), f);
        }
    }

    /// Visit the non-trainable batch-norm running statistics, in order.
    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut [R])) {
        for (k, bn) in self.bns.iter_mut().enumerate() {
            f(
                &format!("bn{}.running_mean", k + 1),
                bn.running_mean.as_slice_mut().expect("standard layout"),
            );
            f(
                &format!("bn{}.running_var", k + 1),
                bn.running_var.as_slice_mut().expect("standard layout"),
            );
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, _, g| g.iter_mut().for_each(|v| *v = R::zero()));
    }

    fn check_sample(&self, sample: &Sample) -> Result<(), ModelError> {
        let expect = self.config.input_len * self.config.input_features;
        if sample.rows.len() != expect {
            return Err(ModelError::ShapeMismatch {
                rows: self.config.input_len,
                features: self.config.input_features,
                got: sample.rows.len(),
            });
        }
        Ok(())
    }

    /// Pack samples into the (batch, features, time) activation layout.
    fn batch_matrix(&self, samples: &[&Sample]) -> Result<Array3<R>, ModelError> {
        let (t, c) = (self.config.input_len, self.config.input_features);
        let mut x = Array3::<R>::zeros((samples.len(), c, t));
        for (bi, s) in samples.iter().enumerate() {
            self.check_sample(s)?;
            for ti in 0..t {
                for ci in 0..c {
                    x[[bi, ci, ti]] = R::from_f64(s.rows[ti * c + ci] as f64);
                }
            }
        }
        Ok(x)
    }

    /// Shared embedding, training mode: conv branch ‖ final LSTM state.
    fn embed_train(&mut self, x: &Array3<R>, update_running: bool) -> Array2<R> {
        let time = x.dim().2;
        let mut seq = x.clone();
        for k in 0..self.convs.len() {
            seq = self.convs[k].forward_t(&seq);
            seq = self.bns[k].forward_t(&seq, update_running);
            seq = self.conv_relus[k].forward_t(&seq);
        }
        let conv_out = gap_forward(&seq);
        let mut rec = x.clone();
        for lstm in &mut self.lstms {
            rec = lstm.forward_t(&rec);
        }
        let last = rec.slice(s![.., .., time - 1]).to_owned();
        concatenate(Axis(1), &[conv_out.view(), last.view()]).expect("row counts match")
    }

    fn embed_infer(&self, x: &Array3<R>) -> Array2<R> {
        let time = x.dim().2;
        let mut seq = x.clone();
        for k in 0..self.convs.len() {
            seq = self.convs[k].infer(&seq);
            seq = self.bns[k].infer(&seq);
            seq = self.conv_relus[k].infer(&seq);
        }
        let conv_out = gap_forward(&seq);
        let mut rec = x.clone();
        for lstm in &self.lstms {
            rec = lstm.infer(&rec);
        }
        let last = rec.slice(s![.., .., time - 1]).to_owned();
        concatenate(Axis(1), &[conv_out.view(), last.view()]).expect("row counts match")
    }

    /// Training forward pass over a pair batch; returns per-pair logits.
    /// Both sides run through the embedding as ONE batch of 2B, so batch
    /// statistics and weight updates are shared exactly.
    pub fn forward_train(
        &mut self,
        a: &Array3<R>,
        b: &Array3<R>,
        rng: &mut ChaCha8Rng,
        update_running: bool,
    ) -> Array1<R> {
        let pair_batch = a.dim().0;
        let time = a.dim().2;
        let stacked = concatenate(Axis(0), &[a.view(), b.view()]).expect("same shapes");
        let embed = self.embed_train(&stacked, update_running);
        let head_in = concatenate(
            Axis(1),
            &[
                embed.slice(s![..pair_batch, ..]),
                embed.slice(s![pair_batch.., ..]),
            ],
        )
        .expect("same row counts");
        let mut h = head_in;
        for k in 0..self.fcs.len() - 1 {
            h = self.fcs[k].forward_t(&h);
            h = self.head_relus[k].forward_t(&h);
            h = self.head_drops[k].forward_t(&h, rng);
        }
        let last = self.fcs.len() - 1;
        h = self.fcs[last].forward_t(&h);
        self.fwd = Some(ForwardShape { pair_batch, time });
        h.index_axis(Axis(1), 0).to_owned()
    }

    /// Backpropagate from per-pair logit gradients; parameter gradients
    /// accumulate into the visit_params tensors.
    pub fn backward_train(&mut self, dlogits: &Array1<R>) {
        let ForwardShape { pair_batch, time } = self.fwd.take().expect("backward after forward");
        let mut dh = dlogits
            .view()
            .into_shape((pair_batch, 1))
            .expect("column vector")
            .to_owned();
        let last = self.fcs.len() - 1;
        dh = self.fcs[last].backward(&dh);
        for k in (0..last).rev() {
            dh = self.head_drops[k].backward(&dh);
            dh = self.head_relus[k].backward(&dh);
            dh = self.fcs[k].backward(&dh);
        }
        // Un-concatenate: head input was embed(a) ‖ embed(b).
        let e = self.config.embed_dim();
        let mut d_embed = Array2::<R>::zeros((2 * pair_batch, e));
        d_embed
            .slice_mut(s![..pair_batch, ..])
            .assign(&dh.slice(s![.., ..e]));
        d_embed
            .slice_mut(s![pair_batch.., ..])
            .assign(&dh.slice(s![.., e..]));
        // Split the embedding into its conv and recurrent halves.
        let c_last = *self.config.conv_channels.last().expect("validated non-empty");
        let d_conv = d_embed.slice(s![.., ..c_last]).to_owned();
        let d_rec = d_embed.slice(s![.., c_last..]).to_owned();

        let mut d_seq = gap_backward(&d_conv, time);
        for k in (0..self.convs.len()).rev() {
            d_seq = self.conv_relus[k].backward(&d_seq);
            d_seq = self.bns[k].backward(&d_seq);
            match self.convs[k].backward(&d_seq, k > 0) {
                Some(dx) => d_seq = dx,
                None => break,
            }
        }

        let mut dh_seq = Array3::<R>::zeros((2 * pair_batch, self.config.recurrent_hidden, time));
        dh_seq.slice_mut(s![.., .., time - 1]).assign(&d_rec);
        for k in (0..self.lstms.len()).rev() {
            match self.lstms[k].backward(&dh_seq, k > 0) {
                Some(dx) => dh_seq = dx,
                None => break,
            }
        }
    }

    /// Inference logits for a pair batch (dropout off, running statistics).
    pub fn infer_logits(&self, a: &Array3<R>, b: &Array3<R>) -> Array1<R> {
        let pair_batch = a.dim().0;
        let stacked = concatenate(Axis(0), &[a.view(), b.view()]).expect("same shapes");
        let embed = self.embed_infer(&stacked);
        let head_in = concatenate(
            Axis(1),
            &[
                embed.slice(s![..pair_batch, ..]),
                embed.slice(s![pair_batch.., ..]),
            ],
        )
        .expect("same row counts");
        let mut h = head_in;
        for k in 0..self.fcs.len() - 1 {
            h = self.fcs[k].infer(&h);
            h = self.head_relus[k].infer(&h);
        }
        h = self.fcs[self.fcs.len() - 1].infer(&h);
        h.index_axis(Axis(1), 0).to_owned()
    }

    /// The sample embedding (conv branch ‖ recurrent branch), inference
    /// mode. Default config: 64 + 64 = 128 values.
    pub fn embed(&self, sample: &Sample) -> Result<Vec<R>, ModelError> {
        let x = self.batch_matrix(&[sample])?;
        Ok(self.embed_infer(&x).row(0).to_vec())
    }

    fn logit_to_score(z: R) -> f64 {
        let z = z.to_f64().clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        sigmoid(z)
    }
}

impl<R: Real> PairScorer for Model<R> {
    fn score_pair(&self, a: &Sample, b: &Sample) -> Result<f64, ModelError> {
        Ok(self.score_batch(&[(a, b)])?[0])
    }

    fn score_batch(&self, pairs: &[(&Sample, &Sample)]) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.config.batch_size.max(1)) {
            let a: Vec<&Sample> = chunk.iter().map(|(a, _)| *a).collect();
            let b: Vec<&Sample> = chunk.iter().map(|(_, b)| *b).collect();
            let logits = self.infer_logits(&self.batch_matrix(&a)?, &self.batch_matrix(&b)?);
            out.extend(logits.iter().map(|&z| Self::logit_to_score(z)));
        }
        Ok(out)
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Optimizer steps taken (batches processed).
    pub steps: u64,
}

struct ResolvedInstance {
    a: usize,
    b: usize,
    label: f64,
}

fn resolve(instances: &[Instance], store: &SampleStore) -> Result<Vec<ResolvedInstance>, ModelError> {
    instances
        .iter()
        .map(|inst| {
            let a_list = store.user_indices(&inst.a.user_id)?;
            let b_list = store.user_indices(&inst.b.user_id)?;
            let a = *a_list.get(inst.a.j).ok_or_else(|| {
                crate::store::StoreError::BadManifest(format!(
                    "instance references sample {} of user {:?} which has {}",
                    inst.a.j,
                    inst.a.user_id,
                    a_list.len()
                ))
            })?;
            let b = *b_list.get(inst.b.j).ok_or_else(|| {
                crate::store::StoreError::BadManifest(format!(
                    "instance references sample {} of user {:?} which has {}",
                    inst.b.j,
                    inst.b.user_id,
                    b_list.len()
                ))
            })?;
            Ok(ResolvedInstance {
                a,
                b,
                label: if inst.is_same() { 1.0 } else { 0.0 },
            })
        })
        .collect()
}

/// Mini-batch Adam training for exactly `config.epochs` epochs — no early
/// stopping, no schedule. Instances shuffle each epoch with a seeded
/// generator; reruns with one seed are bit-identical.
pub fn train<R: Real>(
    config: &ModelConfig,
    train_instances: &[Instance],
    val_instances: &[Instance],
    store: &SampleStore,
) -> Result<(Model<R>, TrainHistory), ModelError> {
    config.validate()?;
    if train_instances.is_empty() || val_instances.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let train_set = resolve(train_instances, store)?;
    let val_set = resolve(val_instances, store)?;
    let mut model = Model::<R>::new(config)?;
    let mut optimizer = Adam::<R>::new(config.learning_rate);
    let mut dropout_rng =
        ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &["train-dropout"]));
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(
            config.seed,
            &["train-shuffle", &epoch.to_string()],
        ));
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle_rng);

        let mut loss_sum = 0.0f64;
        for batch in order.chunks(config.batch_size) {
            let a: Vec<&Sample> = batch.iter().map(|&k| store.sample(train_set[k].a)).collect();
            let b: Vec<&Sample> = batch.iter().map(|&k| store.sample(train_set[k].b)).collect();
            let labels =
                Array1::from_iter(batch.iter().map(|&k| R::from_f64(train_set[k].label)));
            let xa = model.batch_matrix(&a)?;
            let xb = model.batch_matrix(&b)?;
            model.zero_grad();
            let logits = model.forward_train(&xa, &xb, &mut dropout_rng, true);
            let (loss, dlogits) = bce_with_logits(&logits, &labels);
            if !loss.is_finite() {
                return Err(ModelError::NonfiniteLoss { epoch });
            }
            model.backward_train(&dlogits);
            optimizer.begin_step();
            model.visit_params(&mut |_, v, g| optimizer.update(v, g));
            loss_sum += loss.to_f64() * batch.len() as f64;
        }

        let (val_loss, val_auc) = validate_epoch(&model, &val_set, store)?;
        history.epochs.push(EpochStats {
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_auc,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        history.steps = optimizer.steps();
    }
    Ok((model, history))
}

fn validate_epoch<R: Real>(
    model: &Model<R>,
    val_set: &[ResolvedInstance],
    store: &SampleStore,
) -> Result<(f64, f64), ModelError> {
    let mut loss_sum = 0.0f64;
    let mut scored = ScoredSet::default();
    for batch in val_set.chunks(model.config.batch_size) {
        let a: Vec<&Sample> = batch.iter().map(|inst| store.sample(inst.a)).collect();
        let b: Vec<&Sample> = batch.iter().map(|inst| store.sample(inst.b)).collect();
        let labels = Array1::from_iter(batch.iter().map(|inst| R::from_f64(inst.label)));
        let logits = model.infer_logits(&model.batch_matrix(&a)?, &model.batch_matrix(&b)?);
        let (loss, _) = bce_with_logits(&logits, &labels);
        loss_sum += loss.to_f64() * batch.len() as f64;
        for (inst, &z) in batch.iter().zip(logits.iter()) {
            scored.push(
                Model::<R>::logit_to_score(z),
                inst.label == 1.0,
                "val",
                "val",
            );
        }
    }
    let auc = roc_auc(&scored).unwrap_or(0.5);
    Ok((loss_sum / val_set.len() as f64, auc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::build_instances;
    use std::collections::BTreeMap;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_len: 16,
            input_features: 4,
            conv_channels: vec![4, 4, 4],
            conv_kernel: 3,
            recurrent_hidden: 4,
            recurrent_layers: 2,
            head_widths: vec![8, 4],
            dropout: 0.0,
            learning_rate: 0.01,
            epochs: 2,
            batch_size: 8,
            seed: 7,
            ..ModelConfig::default()
        }
    }

    /// Two synthetic "users" with opposite-signed feature patterns: a
    /// linearly separable pair task.
    fn toy_store(samples_per_user: usize, input_len: usize) -> SampleStore {
        let mut samples = Vec::new();
        for (user, sign) in [("a", 1.0f32), ("b", -1.0f32)] {
            for k in 0..samples_per_user {
                let mut rows = vec![0.0f32; input_len * 4];
                for (idx, v) in rows.iter_mut().enumerate() {
                    let wiggle = ((idx * 37 + k * 101) % 13) as f32 / 13.0 - 0.5;
                    *v = sign * (0.5 + 0.1 * wiggle);
                }
                samples.push(Sample {
                    user_id: user.into(),
                    session_id: 0,
                    segment_ids: vec![k as u32],
                    true_len: input_len,
                    effective_duration: 2.0,
                    rows,
                });
            }
        }
        SampleStore::from_samples(samples, "toy", input_len)
    }

    fn toy_sample(store: &SampleStore, user: &str, j: usize) -> Sample {
        store.user_sample(user, j).unwrap().clone()
    }

    #[test]
    fn default_embedding_has_128_values() {
        let config = ModelConfig {
            epochs: 1,
            ..ModelConfig::default()
        };
        assert_eq!(config.embed_dim(), 128);
        let model = Model::<f32>::new(&config).unwrap();
        let store = toy_store(1, 256);
        let embedding = model.embed(store.user_sample("a", 0).unwrap()).unwrap();
        assert_eq!(embedding.len(), 128);
        assert!(embedding.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn all_zero_input_embeds_finite() {
        let model = Model::<f32>::new(&tiny_config()).unwrap();
        let zero = Sample {
            user_id: "z".into(),
            session_id: 0,
            segment_ids: vec![],
            true_len: 0,
            effective_duration: 0.0,
            rows: vec![0.0; 16 * 4],
        };
        let e = model.embed(&zero).unwrap();
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identical_inputs_share_the_embedding() {
        let model = Model::<f64>::new(&tiny_config()).unwrap();
        let store = toy_store(2, 16);
        let s = toy_sample(&store, "a", 0);
        assert_eq!(model.embed(&s).unwrap(), model.embed(&s).unwrap());
    }

    #[test]
    fn score_is_deterministic_and_inside_unit_interval() {
        let model = Model::<f32>::new(&tiny_config()).unwrap();
        let store = toy_store(2, 16);
        let a = toy_sample(&store, "a", 0);
        let b = toy_sample(&store, "b", 1);
        let s1 = model.score_pair(&a, &b).unwrap();
        let s2 = model.score_pair(&a, &b).unwrap();
        assert_eq!(s1, s2);
        assert!(s1 > 0.0 && s1 < 1.0);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let model = Model::<f32>::new(&tiny_config()).unwrap();
        let bad = Sample {
            user_id: "x".into(),
            session_id: 0,
            segment_ids: vec![],
            true_len: 3,
            effective_duration: 0.1,
            rows: vec![0.0; 12],
        };
        assert!(matches!(
            model.score_pair(&bad, &bad),
            Err(ModelError::ShapeMismatch { got: 12, .. })
        ));
    }

    #[test]
    fn one_partial_batch_is_one_step() {
        let store = toy_store(10, 16);
        let counts = BTreeMap::from([("a".to_string(), 10), ("b".to_string(), 10)]);
        let instances = build_instances(&counts, 3).unwrap();
        let config = ModelConfig {
            epochs: 1,
            batch_size: 64,
            ..tiny_config()
        };
        let (_, history) =
            train::<f32>(&config, &instances[..10], &instances[10..14], &store).unwrap();
        assert_eq!(history.steps, 1);
        assert_eq!(history.epochs.len(), 1);
    }

    #[test]
    fn seeded_training_is_bitwise_reproducible() {
        let store = toy_store(8, 16);
        let counts = BTreeMap::from([("a".to_string(), 8), ("b".to_string(), 8)]);
        let instances = build_instances(&counts, 5).unwrap();
        let (train_i, val_i) = instances.split_at(12);
        let run = || {
            let (model, history) =
                train::<f32>(&tiny_config(), train_i, val_i, &store).unwrap();
            let a = store.user_sample("a", 0).unwrap();
            let b = store.user_sample("b", 0).unwrap();
            (
                history.epochs.last().unwrap().train_loss,
                model.score_pair(a, b).unwrap(),
            )
        };
        let (loss1, score1) = run();
        let (loss2, score2) = run();
        assert_eq!(loss1.to_bits(), loss2.to_bits());
        assert_eq!(score1.to_bits(), score2.to_bits());
    }

    #[test]
    fn separable_toy_task_halves_the_loss_in_50_epochs() {
        let store = toy_store(8, 16);
        let counts = BTreeMap::from([("a".to_string(), 8), ("b".to_string(), 8)]);
        let instances = build_instances(&counts, 5).unwrap();
        let (train_i, val_i) = instances.split_at(12);
        let config = ModelConfig {
            epochs: 50,
            batch_size: 4,
            learning_rate: 0.03,
            ..tiny_config()
        };
        let (_, history) = train::<f32>(&config, train_i, val_i, &store).unwrap();
        let first = history.epochs.first().unwrap().train_loss;
        let last = history.epochs.last().unwrap().train_loss;
        assert!(
            last < 0.5 * first,
            "loss {first} → {last} did not halve on a separable task"
        );
    }

    #[test]
    fn dropout_only_perturbs_training_mode() {
        let config = ModelConfig {
            dropout: 0.5,
            ..tiny_config()
        };
        let model = Model::<f32>::new(&config).unwrap();
        let store = toy_store(2, 16);
        let a = toy_sample(&store, "a", 0);
        let b = toy_sample(&store, "b", 1);
        assert_eq!(
            model.score_pair(&a, &b).unwrap(),
            model.score_pair(&a, &b).unwrap()
        );
    }

    #[test]
    fn empty_datasets_are_rejected() {
        let store = toy_store(4, 16);
        let counts = BTreeMap::from([("a".to_string(), 4), ("b".to_string(), 4)]);
        let instances = build_instances(&counts, 5).unwrap();
        assert!(matches!(
            train::<f32>(&tiny_config(), &[], &instances, &store),
            Err(ModelError::EmptyDataset)
        ));
        assert!(matches!(
            train::<f32>(&tiny_config(), &instances, &[], &store),
            Err(ModelError::EmptyDataset)
        ));
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut c = ModelConfig::default();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.conv_kernel = 4;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }
}
