//! Convolutional text classifier separating informational posts from
//! non-informational ones.
//!
//! Architecture: embedding, one valid 1-D convolution with ReLU, max-pooling
//! over time, a dropout-regularised fully connected layer and a two-way
//! softmax output.

use crate::corpus::{LabeledExample, TopCategory, Vocabulary, PAD};
use crate::nn::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::{Adam, Mat, ParamId, ParamStore, Tape, Var};
use crate::text::Tokenizer;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

const KIND: &str = "cnn-classifier";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub seq_len: usize,
    pub conv_kernels: usize,
    pub kernel_width: usize,
    pub fc_units: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            vocab_size: 5000,
            embed_dim: 64,
            seq_len: 600,
            conv_kernels: 256,
            kernel_width: 5,
            fc_units: 128,
            dropout: 0.5,
            learning_rate: 0.001,
            epochs: 10,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let sizes = [
            self.vocab_size,
            self.embed_dim,
            self.seq_len,
            self.conv_kernels,
            self.kernel_width,
            self.fc_units,
            self.epochs,
            self.batch_size,
        ];
        if sizes.contains(&0) {
            return Err(ClassifierError::InvalidConfig("sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ClassifierError::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(ClassifierError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.kernel_width > self.seq_len {
            return Err(ClassifierError::InvalidConfig("kernel wider than sequence".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no training examples")]
    Empty,
    #[error("training data contains only the {0:?} class")]
    SingleClass(TopCategory),
    #[error("vocabulary has {vocab} entries but the model is sized for {config}")]
    VocabMismatch { vocab: usize, config: usize },
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("{examples} examples cannot fill {k} stratified folds")]
    TooFewExamples { examples: usize, k: usize },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: TopCategory,
    /// Probability of `label`.
    pub probability: f64,
    pub p_informational: f64,
}

#[derive(Clone, Copy, Debug)]
struct Ids {
    embedding: ParamId,
    conv_w: ParamId,
    conv_b: ParamId,
    fc_w: ParamId,
    fc_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl Ids {
    /// Parameters are always registered in this order.
    fn sequential() -> Self {
        Self { embedding: 0, conv_w: 1, conv_b: 2, fc_w: 3, fc_b: 4, out_w: 5, out_b: 6 }
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierModel {
    config: ClassifierConfig,
    vocab: Vocabulary,
    tokenizer: Tokenizer,
    params: ParamStore,
    ids: Ids,
}

fn class_index(label: TopCategory) -> usize {
    match label {
        TopCategory::Informational => 0,
        TopCategory::NonInformational => 1,
    }
}

impl ClassifierModel {
    fn init(config: &ClassifierConfig, vocab: Vocabulary, tokenizer: Tokenizer, rng: &mut ChaCha8Rng) -> Self {
        let c = config;
        let mut params = ParamStore::new();
        params.add("embedding", Mat::uniform(c.vocab_size, c.embed_dim, 0.1, rng));
        params.add("conv_w", Mat::glorot(c.kernel_width * c.embed_dim, c.conv_kernels, rng));
        params.add("conv_b", Mat::zeros(1, c.conv_kernels));
        params.add("fc_w", Mat::glorot(c.conv_kernels, c.fc_units, rng));
        params.add("fc_b", Mat::zeros(1, c.fc_units));
        params.add("out_w", Mat::glorot(c.fc_units, 2, rng));
        params.add("out_b", Mat::zeros(1, 2));
        Self { config: config.clone(), vocab, tokenizer, params, ids: Ids::sequential() }
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn encode(&self, text: &str) -> (Vec<usize>, usize) {
        let tokens = self.tokenizer.tokenize(text);
        let ids = self.vocab.encode(&tokens, self.config.seq_len);
        let real = tokens.len().min(self.config.seq_len);
        (ids, real)
    }

    /// Convolution and max-pooling over time: `B x conv_kernels`.
    fn pooled(&self, tape: &mut Tape, batch: &[(Vec<usize>, usize)]) -> Var {
        let c = &self.config;
        let w = c.kernel_width;
        let windows = c.seq_len - w + 1;
        // Windows lying wholly in the PAD tail are identical, so each
        // example keeps its real-token windows plus one PAD representative.
        // It sits after the real windows, as in the full sequence, which
        // keeps max-pool tie-breaking unchanged.
        let mut rows_by_offset = vec![Vec::new(); w];
        let mut segments = Vec::with_capacity(batch.len());
        for (ids, real) in batch {
            let start = rows_by_offset[0].len();
            let touching = (*real).min(windows);
            for t in 0..touching {
                for (j, rows) in rows_by_offset.iter_mut().enumerate() {
                    rows.push(ids[t + j]);
                }
            }
            let mut len = touching;
            if *real < windows {
                for rows in rows_by_offset.iter_mut() {
                    rows.push(PAD);
                }
                len += 1;
            }
            segments.push((start, len));
        }
        let emb = tape.param(self.ids.embedding);
        let shifted: Vec<Var> = rows_by_offset.iter().map(|rows| tape.gather(emb, rows)).collect();
        let unfolded = tape.concat_cols(&shifted);
        let conv_w = tape.param(self.ids.conv_w);
        let conv_b = tape.param(self.ids.conv_b);
        let conv = tape.matmul(unfolded, conv_w);
        let conv = tape.add_bias(conv, conv_b);
        let conv = tape.relu(conv);
        tape.segment_max(conv, &segments)
    }

    /// Forward pass to `B x 2` logits. `dropout_rng` enables dropout.
    fn logits(&self, tape: &mut Tape, batch: &[(Vec<usize>, usize)], dropout_rng: Option<&mut ChaCha8Rng>) -> Var {
        let c = &self.config;
        let pooled = self.pooled(tape, batch);
        let fc_w = tape.param(self.ids.fc_w);
        let fc_b = tape.param(self.ids.fc_b);
        let mut hidden = tape.matmul(pooled, fc_w);
        hidden = tape.add_bias(hidden, fc_b);
        if let Some(rng) = dropout_rng {
            if c.dropout > 0.0 {
                let keep = 1.0 - c.dropout;
                let (rows, cols) = tape.value(hidden).shape();
                let mask = (0..rows * cols).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                hidden = tape.mul_const(hidden, Mat::from_vec(rows, cols, mask));
            }
        }
        hidden = tape.relu(hidden);
        let out_w = tape.param(self.ids.out_w);
        let out_b = tape.param(self.ids.out_b);
        let logits = tape.matmul(hidden, out_w);
        tape.add_bias(logits, out_b)
    }

    /// Probability of the informational class for each text.
    pub fn p_informational_batch(&self, texts: &[&str]) -> Vec<f64> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            let batch: Vec<_> = chunk.iter().map(|t| self.encode(t)).collect();
            let mut tape = Tape::new(&self.params);
            let logits = self.logits(&mut tape, &batch, None);
            let probs = tape.softmax(logits);
            let p = tape.value(probs);
            out.extend((0..p.rows()).map(|r| p.get(r, 0)));
        }
        out
    }

    pub fn predict(&self, text: &str) -> Prediction {
        let p_info = self.p_informational_batch(&[text])[0];
        // an exact tie goes to Informational, which keeps the bot silent
        if p_info >= 0.5 {
            Prediction { label: TopCategory::Informational, probability: p_info, p_informational: p_info }
        } else {
            Prediction { label: TopCategory::NonInformational, probability: 1.0 - p_info, p_informational: p_info }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: KIND.into(),
            meta: serde_json::json!({
                "config": self.config,
                "tokenizer": self.tokenizer,
                "vocab": self.vocab,
                "vocab_hash": self.vocab.hash(),
            }),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, ClassifierError> {
        ck.expect_kind(KIND)?;
        let field = |name: &str| ck.meta.get(name).cloned().ok_or_else(|| CheckpointError::Malformed(format!("missing {name}")));
        let parse = |e: serde_json::Error| CheckpointError::Malformed(e.to_string());
        let config: ClassifierConfig = serde_json::from_value(field("config")?).map_err(parse)?;
        let tokenizer: Tokenizer = serde_json::from_value(field("tokenizer")?).map_err(parse)?;
        let vocab: Vocabulary = serde_json::from_value(field("vocab")?).map_err(parse)?;
        let stored: String = serde_json::from_value(field("vocab_hash")?).map_err(parse)?;
        let computed = vocab.hash();
        if stored != computed {
            return Err(CheckpointError::VocabHashMismatch { stored, computed }.into());
        }
        let expected = [
            (config.vocab_size, config.embed_dim),
            (config.kernel_width * config.embed_dim, config.conv_kernels),
            (1, config.conv_kernels),
            (config.conv_kernels, config.fc_units),
            (1, config.fc_units),
            (config.fc_units, 2),
            (1, 2),
        ];
        let shapes: Vec<_> = ck.params.tensors().iter().map(Mat::shape).collect();
        if shapes != expected {
            return Err(CheckpointError::Malformed("parameter shapes do not match config".into()).into());
        }
        Ok(Self { config, vocab, tokenizer, params: ck.params, ids: Ids::sequential() })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

fn check_classes(examples: &[LabeledExample]) -> Result<(), ClassifierError> {
    let first = examples.first().ok_or(ClassifierError::Empty)?.label;
    if examples.iter().all(|e| e.label == first) {
        return Err(ClassifierError::SingleClass(first));
    }
    Ok(())
}

/// Trains with Adam on mini-batches reshuffled every epoch. Returns the model
/// and the mean training loss of each epoch.
pub fn train_classifier(
    examples: &[LabeledExample],
    vocab: &Vocabulary,
    tokenizer: Tokenizer,
    config: &ClassifierConfig,
) -> Result<(ClassifierModel, Vec<f64>), ClassifierError> {
    config.validate()?;
    check_classes(examples)?;
    if vocab.len() > config.vocab_size {
        return Err(ClassifierError::VocabMismatch { vocab: vocab.len(), config: config.vocab_size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ClassifierModel::init(config, vocab.clone(), tokenizer, &mut rng);
    let encoded: Vec<_> = examples.iter().map(|e| model.encode(&e.post_text)).collect();
    let targets: Vec<usize> = examples.iter().map(|e| class_index(e.label)).collect();
    let mut adam = Adam::new(&model.params, config.learning_rate);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| encoded[i].clone()).collect();
            let tgt: Vec<Option<usize>> = chunk.iter().map(|&i| Some(targets[i])).collect();
            let grads = {
                let mut tape = Tape::new(&model.params);
                let logits = model.logits(&mut tape, &batch, Some(&mut rng));
                let loss = tape.cross_entropy(logits, &tgt, chunk.len() as f64);
                total += tape.value(loss).get(0, 0) * chunk.len() as f64;
                tape.backward(loss)
            };
            adam.step(&mut model.params, &grads);
        }
        let mean = total / examples.len() as f64;
        log::debug!("classifier epoch {}: loss {mean:.5}", epoch + 1);
        history.push(mean);
    }
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub k: usize,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// F1 of each class over all held-out predictions, informational first.
    pub f1_informational: f64,
    pub f1_non_informational: f64,
}

impl CVReport {
    /// Unweighted mean of the two per-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        (self.f1_informational + self.f1_non_informational) / 2.0
    }
}

/// Stratified partition: each class is shuffled and dealt round-robin, so
/// every fold's class count is within one of the global share.
pub fn stratified_folds(labels: &[TopCategory], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [TopCategory::Informational, TopCategory::NonInformational] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

pub fn cross_validate(
    examples: &[LabeledExample],
    vocab: &Vocabulary,
    tokenizer: Tokenizer,
    config: &ClassifierConfig,
    k: usize,
) -> Result<CVReport, ClassifierError> {
    if k < 2 {
        return Err(ClassifierError::InvalidConfig("k must be at least 2".into()));
    }
    check_classes(examples)?;
    let labels: Vec<TopCategory> = examples.iter().map(|e| e.label).collect();
    let minority = [TopCategory::Informational, TopCategory::NonInformational]
        .iter()
        .map(|c| labels.iter().filter(|l| *l == c).count())
        .min()
        .unwrap_or(0);
    if minority < k {
        return Err(ClassifierError::TooFewExamples { examples: examples.len(), k });
    }
    let folds = stratified_folds(&labels, k, config.seed);
    let mut fold_accuracy = Vec::with_capacity(k);
    // confusion counts, indexed [truth][prediction]
    let mut confusion = [[0usize; 2]; 2];
    for (f, held) in folds.iter().enumerate() {
        let mut is_held = vec![false; examples.len()];
        held.iter().for_each(|&i| is_held[i] = true);
        let train: Vec<LabeledExample> = examples.iter().zip(&is_held).filter(|(_, h)| !**h).map(|(e, _)| e.clone()).collect();
        let fold_config = ClassifierConfig { seed: config.seed.wrapping_add(f as u64 + 1), ..config.clone() };
        let (model, _) = train_classifier(&train, vocab, tokenizer, &fold_config)?;
        let texts: Vec<&str> = held.iter().map(|&i| examples[i].post_text.as_str()).collect();
        let probs = model.p_informational_batch(&texts);
        let mut correct = 0;
        for (&i, p) in held.iter().zip(probs) {
            let predicted = if p >= 0.5 { 0 } else { 1 };
            let truth = class_index(examples[i].label);
            confusion[truth][predicted] += 1;
            correct += usize::from(predicted == truth);
        }
        let acc = correct as f64 / held.len() as f64;
        log::info!("fold {}/{k}: accuracy {acc:.4}", f + 1);
        fold_accuracy.push(acc);
    }
    let mean_accuracy = fold_accuracy.iter().sum::<f64>() / k as f64;
    Ok(CVReport {
        k,
        fold_accuracy,
        mean_accuracy,
        f1_informational: f1(confusion[0][0], confusion[1][0], confusion[0][1]),
        f1_non_informational: f1(confusion[1][1], confusion[0][1], confusion[1][0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ClassifierConfig {
        ClassifierConfig {
            vocab_size: 64,
            embed_dim: 8,
            seq_len: 20,
            conv_kernels: 6,
            kernel_width: 3,
            fc_units: 5,
            epochs: 2,
            batch_size: 4,
            ..Default::default()
        }
    }

    fn toy() -> (Vec<LabeledExample>, Vocabulary) {
        let ex = vec![
            LabeledExample { post_text: "why does my baby cry".into(), label: TopCategory::Informational },
            LabeledExample { post_text: "happy day with my baby".into(), label: TopCategory::NonInformational },
            LabeledExample { post_text: "why no sleep".into(), label: TopCategory::Informational },
            LabeledExample { post_text: "so tired today".into(), label: TopCategory::NonInformational },
        ];
        let tok = Tokenizer::default();
        let vocab = Vocabulary::build(ex.iter().map(|e| tok.tokenize(&e.post_text)), 64).unwrap();
        (ex, vocab)
    }

    /// Max-pooling over the deduplicated windows equals pooling over every
    /// window of the padded sequence.
    #[test]
    fn pad_window_dedup_is_exact() {
        let (ex, vocab) = toy();
        let (model, _) = train_classifier(&ex, &vocab, Tokenizer::default(), &small_config()).unwrap();
        let c = &model.config;
        for text in ["", "why", "why does my baby cry at night when the moon is out so bright and high up there"] {
            let (ids, _) = model.encode(text);
            let emb = model.params.get(model.ids.embedding);
            let cw = model.params.get(model.ids.conv_w);
            let cb = model.params.get(model.ids.conv_b);
            let mut pooled = vec![f64::NEG_INFINITY; c.conv_kernels];
            for t in 0..=c.seq_len - c.kernel_width {
                for (k, slot) in pooled.iter_mut().enumerate() {
                    let mut s = cb.get(0, k);
                    for j in 0..c.kernel_width {
                        for d in 0..c.embed_dim {
                            s += emb.get(ids[t + j], d) * cw.get(j * c.embed_dim + d, k);
                        }
                    }
                    *slot = slot.max(s.max(0.0));
                }
            }
            let mut tape = Tape::new(&model.params);
            let v = model.pooled(&mut tape, &[model.encode(text)]);
            for (a, b) in pooled.iter().zip(tape.value(v).data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probabilities_normalise_and_empty_text_works() {
        let (ex, vocab) = toy();
        let (model, hist) = train_classifier(&ex, &vocab, Tokenizer::default(), &small_config()).unwrap();
        assert_eq!(hist.len(), 2);
        let p = model.predict("");
        assert!((0.0..=1.0).contains(&p.p_informational));
        assert!(p.probability >= 0.5);
    }

    #[test]
    fn errors() {
        let (ex, vocab) = toy();
        let tok = Tokenizer::default();
        assert!(matches!(train_classifier(&[], &vocab, tok, &small_config()), Err(ClassifierError::Empty)));
        assert!(matches!(
            train_classifier(&ex[..1], &vocab, tok, &small_config()),
            Err(ClassifierError::SingleClass(TopCategory::Informational))
        ));
        let tiny = ClassifierConfig { vocab_size: 5, ..small_config() };
        assert!(matches!(train_classifier(&ex, &vocab, tok, &tiny), Err(ClassifierError::VocabMismatch { .. })));
        assert!(matches!(cross_validate(&ex, &vocab, tok, &small_config(), 5), Err(ClassifierError::TooFewExamples { .. })));
        assert!(cross_validate(&ex, &vocab, tok, &small_config(), 1).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (ex, vocab) = toy();
        let (model, _) = train_classifier(&ex, &vocab, Tokenizer::default(), &small_config()).unwrap();
        let back = ClassifierModel::from_checkpoint(Checkpoint::from_bytes(&model.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.predict("why cry"), model.predict("why cry"));

        let mut ck = model.to_checkpoint();
        ck.meta["vocab_hash"] = serde_json::json!("0000");
        assert!(matches!(
            ClassifierModel::from_checkpoint(ck),
            Err(ClassifierError::Checkpoint(CheckpointError::VocabHashMismatch { .. }))
        ));
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<TopCategory> =
            (0..103).map(|i| if i % 3 == 0 { TopCategory::Informational } else { TopCategory::NonInformational }).collect();
        let folds = stratified_folds(&labels, 5, 7);
        let info_total = labels.iter().filter(|l| **l == TopCategory::Informational).count() as f64;
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for f in &folds {
            let info = f.iter().filter(|&&i| labels[i] == TopCategory::Informational).count() as f64;
            let expected = info_total * f.len() as f64 / labels.len() as f64;
            assert!((info - expected).abs() <= 1.0 + 1e-9);
        }
    }
}
