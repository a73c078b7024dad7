use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::{
    encode, loss, loss_and_gradients, Encoded, EncodedBatch, Gradients, ModelConfig, ModelParams,
};
use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::SampleRng;

/// Adam with the usual defaults (β1 = 0.9, β2 = 0.999, ε = 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, _, t)| t.len()).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let grads = grads.tensors();
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[i].2;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// Mean cross-entropy over the training set before the first update.
    pub initial_loss: f64,
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

fn mean_loss(params: &ModelParams, tokens: &[Encoded], labels: &[usize]) -> Result<f64> {
    let chunk = params.config.batch_size.max(64);
    let mut total = 0.0;
    for (t, l) in tokens.chunks(chunk).zip(labels.chunks(chunk)) {
        let batch = EncodedBatch {
            tokens: t.to_vec(),
            labels: l.to_vec(),
        };
        total += loss(params, &batch)? * t.len() as f64;
    }
    Ok(total / tokens.len() as f64)
}

/// Trains from scratch on `(text, label)` pairs. Initialization and the
/// per-epoch shuffles derive from `config.init_seed`, so a fixed seed gives
/// bit-identical parameters.
pub fn train<S: AsRef<str>>(
    config: &ModelConfig,
    alphabet: &Alphabet,
    texts: &[S],
    labels: &[usize],
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainedModel> {
    config.validate()?;
    if texts.is_empty() || texts.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} texts and {} labels",
            texts.len(),
            labels.len()
        )));
    }
    if alphabet.len() != config.alphabet_size {
        return Err(Error::Shape(format!(
            "alphabet of {} characters for a model with {}",
            alphabet.len(),
            config.alphabet_size
        )));
    }
    let tokens: Vec<Encoded> = texts
        .iter()
        .map(|t| encode(t.as_ref(), alphabet, config.max_seq_len))
        .collect();
    let mut params = ModelParams::init(config)?;
    let initial_loss = mean_loss(&params, &tokens, labels)?;
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut rng = SampleRng::seed_from_u64(config.init_seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = EncodedBatch {
                tokens: idx.iter().map(|&i| tokens[i].clone()).collect(),
                labels: idx.iter().map(|&i| labels[i]).collect(),
            };
            let (loss, grads) = loss_and_gradients(&params, &batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            adam.step(&mut params, &grads);
            total += loss * idx.len() as f64;
        }
        let epoch_loss = total / tokens.len() as f64;
        if !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: order.len() / config.batch_size,
                loss: epoch_loss,
            });
        }
        on_epoch(epoch, epoch_loss);
        loss_trace.push(epoch_loss);
    }
    Ok(TrainedModel {
        params,
        initial_loss,
        loss_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(classes: usize) -> ModelConfig {
        ModelConfig {
            max_seq_len: 10,
            alphabet_size: 37,
            hidden_size: 12,
            num_layers: 2,
            dense_size: 24,
            num_classes: classes,
            batch_size: 8,
            learning_rate: 0.01,
            epochs: 30,
            init_seed: 3,
        }
    }

    fn toy_data() -> (Vec<&'static str>, Vec<usize>) {
        let texts = vec![
            "alpha", "alpah", "alph", "beta", "bteta", "betaa", "gamma", "gama", "gamna",
        ];
        let labels = vec![0, 0, 0, 1, 1, 1, 2, 2, 2];
        (texts, labels)
    }

    #[test]
    fn loss_decreases_on_toy_data() {
        let (texts, labels) = toy_data();
        let m = train(
            &small_config(3),
            &Alphabet::default(),
            &texts,
            &labels,
            |_, _| {},
        )
        .unwrap();
        let last = *m.loss_trace.last().unwrap();
        assert!(last < 0.2 * m.initial_loss, "{} -> {last}", m.initial_loss);
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let (texts, labels) = toy_data();
        let mut cfg = small_config(3);
        cfg.learning_rate = 0.0;
        cfg.epochs = 2;
        let m = train(&cfg, &Alphabet::default(), &texts, &labels, |_, _| {}).unwrap();
        assert_eq!(m.params, ModelParams::init(&cfg).unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let (texts, labels) = toy_data();
        let mut cfg = small_config(3);
        cfg.epochs = 3;
        let a = train(&cfg, &Alphabet::default(), &texts, &labels, |_, _| {}).unwrap();
        let b = train(&cfg, &Alphabet::default(), &texts, &labels, |_, _| {}).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trace, b.loss_trace);
        cfg.init_seed = 4;
        let c = train(&cfg, &Alphabet::default(), &texts, &labels, |_, _| {}).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn huge_learning_rate_reports_divergence_or_finishes_finite() {
        let (texts, labels) = toy_data();
        let mut cfg = small_config(3);
        cfg.learning_rate = 1e300;
        cfg.epochs = 3;
        match train(&cfg, &Alphabet::default(), &texts, &labels, |_, _| {}) {
            Err(Error::Divergence { .. }) => {}
            Ok(m) => assert!(m.params.is_finite()),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = small_config(3);
        let mut params = ModelParams::init(&cfg).unwrap();
        let before = params.clone();
        let mut grads = params.zeros_like();
        grads.out_b[0] = 0.5;
        grads.out_b[1] = -2.0;
        let mut adam = Adam::new(&params, 0.1);
        adam.step(&mut params, &grads);
        assert!((params.out_b[0] - (before.out_b[0] - 0.1)).abs() < 1e-6);
        assert!((params.out_b[1] - (before.out_b[1] + 0.1)).abs() < 1e-6);
        assert_eq!(params.out_b[2], before.out_b[2]);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let cfg = small_config(3);
        assert!(train(&cfg, &Alphabet::default(), &["a"], &[0, 1], |_, _| {}).is_err());
        let empty: [&str; 0] = [];
        assert!(train(&cfg, &Alphabet::default(), &empty, &[], |_, _| {}).is_err());
    }
}
