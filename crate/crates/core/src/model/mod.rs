//! Character-level LSTM classifier.
//!
//! One-hot characters pass through stacked LSTM layers; the top layer's full
//! hidden sequence is flattened into a dense ReLU layer (the string
//! embedding) followed by a softmax over catalog classes.

mod checkpoint;
mod train;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::SampleRng;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use train::{train, Adam, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub max_seq_len: usize,
    pub alphabet_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub dense_size: usize,
    pub num_classes: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_seed: u64,
}

impl ModelConfig {
    /// Reference architecture at marketplace scale.
    pub fn full_scale(num_classes: usize) -> Self {
        Self {
            max_seq_len: 69,
            alphabet_size: 37,
            hidden_size: 256,
            num_layers: 2,
            dense_size: 512,
            num_classes,
            batch_size: 128,
            learning_rate: 0.001,
            epochs: 50,
            init_seed: 0,
        }
    }

    /// Small architecture that trains on a single CPU core in seconds to
    /// minutes for a few hundred classes.
    pub fn desk(num_classes: usize) -> Self {
        Self {
            max_seq_len: 32,
            alphabet_size: 37,
            hidden_size: 64,
            num_layers: 2,
            dense_size: 128,
            num_classes,
            batch_size: 32,
            learning_rate: 0.002,
            epochs: 12,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("max_seq_len", self.max_seq_len),
            ("alphabet_size", self.alphabet_size),
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("dense_size", self.dense_size),
            ("num_classes", self.num_classes),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::ModelConfig(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::ModelConfig(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Weights of one LSTM layer; gate blocks are stacked in the order
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Vec<LstmLayer>,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

fn glorot(rows: usize, cols: usize, rng: &mut SampleRng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..=limit))
}

impl ModelParams {
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SampleRng::seed_from_u64(config.init_seed);
        let h = config.hidden_size;
        let layers = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { config.alphabet_size } else { h };
                let mut bias = Array1::zeros(4 * h);
                bias.slice_mut(s![h..2 * h]).fill(1.0);
                LstmLayer {
                    w_ih: glorot(4 * h, input, &mut rng),
                    w_hh: glorot(4 * h, h, &mut rng),
                    bias,
                }
            })
            .collect();
        let flat = config.max_seq_len * h;
        Ok(Self {
            config: config.clone(),
            layers,
            dense_w: glorot(config.dense_size, flat, &mut rng),
            dense_b: Array1::zeros(config.dense_size),
            out_w: glorot(config.num_classes, config.dense_size, &mut rng),
            out_b: Array1::zeros(config.num_classes),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Every tensor with its name and shape, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((
                format!("lstm{l}.w_ih"),
                layer.w_ih.shape().to_vec(),
                slice(layer.w_ih.as_slice()),
            ));
            out.push((
                format!("lstm{l}.w_hh"),
                layer.w_hh.shape().to_vec(),
                slice(layer.w_hh.as_slice()),
            ));
            out.push((
                format!("lstm{l}.bias"),
                layer.bias.shape().to_vec(),
                slice(layer.bias.as_slice()),
            ));
        }
        out.push((
            "dense.w".into(),
            self.dense_w.shape().to_vec(),
            slice(self.dense_w.as_slice()),
        ));
        out.push((
            "dense.b".into(),
            self.dense_b.shape().to_vec(),
            slice(self.dense_b.as_slice()),
        ));
        out.push((
            "out.w".into(),
            self.out_w.shape().to_vec(),
            slice(self.out_w.as_slice()),
        ));
        out.push((
            "out.b".into(),
            self.out_b.shape().to_vec(),
            slice(self.out_b.as_slice()),
        ));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.w_ih.as_slice_mut().expect("standard layout"));
            out.push(layer.w_hh.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.dense_w.as_slice_mut().expect("standard layout"));
        out.push(self.dense_b.as_slice_mut().expect("standard layout"));
        out.push(self.out_w.as_slice_mut().expect("standard layout"));
        out.push(self.out_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Checks tensor shapes against the config.
    pub fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let h = c.hidden_size;
        let bad = |what: &str| Err(Error::Shape(what.to_string()));
        if self.layers.len() != c.num_layers {
            return bad("layer count");
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { c.alphabet_size } else { h };
            if layer.w_ih.dim() != (4 * h, input)
                || layer.w_hh.dim() != (4 * h, h)
                || layer.bias.len() != 4 * h
            {
                return bad("lstm layer");
            }
        }
        if self.dense_w.dim() != (c.dense_size, c.max_seq_len * h)
            || self.dense_b.len() != c.dense_size
        {
            return bad("dense layer");
        }
        if self.out_w.dim() != (c.num_classes, c.dense_size) || self.out_b.len() != c.num_classes {
            return bad("output layer");
        }
        Ok(())
    }
}

fn slice(s: Option<&[f64]>) -> &[f64] {
    s.expect("standard layout")
}

/// Character indices of one string, right-padded with `None` to the model's
/// sequence length.
pub type Encoded = Vec<Option<usize>>;

/// One-hot positions of a canonical string; characters past `max_seq_len`
/// are dropped.
pub fn encode(text: &str, alphabet: &Alphabet, max_seq_len: usize) -> Encoded {
    let mut out: Encoded = text
        .chars()
        .take(max_seq_len)
        .map(|c| alphabet.index_of(c))
        .collect();
    out.resize(max_seq_len, None);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub tokens: Vec<Encoded>,
    pub labels: Vec<usize>,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Dense `(batch, seq, alphabet)` one-hot view.
    pub fn one_hot(&self, alphabet_size: usize) -> ndarray::Array3<f64> {
        let seq = self.tokens.first().map_or(0, Vec::len);
        let mut out = ndarray::Array3::zeros((self.len(), seq, alphabet_size));
        for (b, row) in self.tokens.iter().enumerate() {
            for (t, tok) in row.iter().enumerate() {
                if let Some(k) = tok {
                    out[[b, t, *k]] = 1.0;
                }
            }
        }
        out
    }

    /// `true` where a position holds a character.
    pub fn pad_mask(&self) -> Vec<Vec<bool>> {
        self.tokens
            .iter()
            .map(|r| r.iter().map(Option::is_some).collect())
            .collect()
    }

    fn check(&self, config: &ModelConfig) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        if !self.labels.is_empty() && self.labels.len() != self.tokens.len() {
            return Err(Error::Shape("label count differs from batch size".into()));
        }
        for row in &self.tokens {
            if row.len() != config.max_seq_len {
                return Err(Error::Shape(format!(
                    "sequence of length {} for max_seq_len {}",
                    row.len(),
                    config.max_seq_len
                )));
            }
            if row.iter().flatten().any(|&k| k >= config.alphabet_size) {
                return Err(Error::Shape("character index outside the alphabet".into()));
            }
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= config.num_classes) {
            return Err(Error::Shape(format!(
                "label {l} with {} classes",
                config.num_classes
            )));
        }
        Ok(())
    }
}

struct LayerCache {
    /// post-activation gates per step, `(batch, 4h)`
    gates: Vec<Array2<f64>>,
    cells: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    flat: Array2<f64>,
    dense_pre: Array2<f64>,
}

pub struct ForwardOutput {
    pub logits: Array2<f64>,
    pub embeddings: Array2<f64>,
}

/// `z += x · wᵀ`. The packed matrix product is slow for a handful of rows,
/// as when serving a single query, so those go through matrix-vector products.
fn add_mul_t(x: &ArrayView2<'_, f64>, w: &Array2<f64>, z: &mut Array2<f64>) {
    if x.nrows() <= 4 {
        for (xr, mut zr) in x.rows().into_iter().zip(z.rows_mut()) {
            zr += &w.dot(&xr);
        }
    } else {
        general_mat_mul(1.0, x, &w.t(), 1.0, z);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn run_lstm_layer(
    layer: &LstmLayer,
    h: usize,
    steps: usize,
    batch: usize,
    input: LayerInput<'_>,
) -> LayerCache {
    let mut gates_seq = Vec::with_capacity(steps);
    let mut cells = Vec::with_capacity(steps);
    let mut hidden = Vec::with_capacity(steps);
    let mut h_prev = Array2::<f64>::zeros((batch, h));
    let mut c_prev = Array2::<f64>::zeros((batch, h));
    for t in 0..steps {
        let mut z = Array2::<f64>::zeros((batch, 4 * h));
        for mut row in z.rows_mut() {
            row.assign(&layer.bias);
        }
        add_mul_t(&h_prev.view(), &layer.w_hh, &mut z);
        match input {
            LayerInput::Tokens(tokens) => {
                for (b, seq) in tokens.iter().enumerate() {
                    if let Some(k) = seq[t] {
                        z.row_mut(b).scaled_add(1.0, &layer.w_ih.column(k));
                    }
                }
            }
            LayerInput::Hidden(prev) => add_mul_t(&prev[t].view(), &layer.w_ih, &mut z),
        }
        let mut c = Array2::<f64>::zeros((batch, h));
        let mut hn = Array2::<f64>::zeros((batch, h));
        for b in 0..batch {
            let zr = z.row_mut(b).into_slice().expect("contiguous");
            let cp = c_prev.row(b);
            let cr = c.row_mut(b).into_slice().expect("contiguous");
            let hr = hn.row_mut(b).into_slice().expect("contiguous");
            for j in 0..h {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[h + j]);
                let g = zr[2 * h + j].tanh();
                let o = sigmoid(zr[3 * h + j]);
                zr[j] = i;
                zr[h + j] = f;
                zr[2 * h + j] = g;
                zr[3 * h + j] = o;
                let cell = f * cp[j] + i * g;
                cr[j] = cell;
                hr[j] = o * cell.tanh();
            }
        }
        gates_seq.push(z);
        h_prev = hn.clone();
        c_prev = c.clone();
        cells.push(c);
        hidden.push(hn);
    }
    LayerCache {
        gates: gates_seq,
        cells,
        hidden,
    }
}

#[derive(Clone, Copy)]
enum LayerInput<'a> {
    Tokens(&'a [Encoded]),
    Hidden(&'a [Array2<f64>]),
}

fn forward_cached(
    params: &ModelParams,
    batch: &EncodedBatch,
) -> Result<(ForwardOutput, ForwardCache)> {
    params.check_shapes()?;
    batch.check(&params.config)?;
    let c = &params.config;
    let (n, s, h) = (batch.len(), c.max_seq_len, c.hidden_size);
    let mut layers: Vec<LayerCache> = Vec::with_capacity(c.num_layers);
    for (l, layer) in params.layers.iter().enumerate() {
        let input = if l == 0 {
            LayerInput::Tokens(&batch.tokens)
        } else {
            LayerInput::Hidden(&layers[l - 1].hidden)
        };
        let cache = run_lstm_layer(layer, h, s, n, input);
        layers.push(cache);
    }
    let top = layers.last().expect("at least one layer");
    let mut flat = Array2::<f64>::zeros((n, s * h));
    for (t, ht) in top.hidden.iter().enumerate() {
        flat.slice_mut(s![.., t * h..(t + 1) * h]).assign(ht);
    }
    let mut dense_pre = Array2::<f64>::zeros((n, c.dense_size));
    for mut row in dense_pre.rows_mut() {
        row.assign(&params.dense_b);
    }
    add_mul_t(&flat.view(), &params.dense_w, &mut dense_pre);
    let embeddings = dense_pre.mapv(|v| v.max(0.0));
    let mut logits = Array2::<f64>::zeros((n, c.num_classes));
    for mut row in logits.rows_mut() {
        row.assign(&params.out_b);
    }
    add_mul_t(&embeddings.view(), &params.out_w, &mut logits);
    Ok((
        ForwardOutput { logits, embeddings },
        ForwardCache {
            layers,
            flat,
            dense_pre,
        },
    ))
}

/// Logits and embeddings (post-ReLU dense activations) for a batch.
pub fn forward(params: &ModelParams, batch: &EncodedBatch) -> Result<ForwardOutput> {
    forward_cached(params, batch).map(|(out, _)| out)
}

/// Row-wise softmax.
pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Mean cross-entropy of the batch and the gradient of every parameter,
/// back-propagated through all time steps and layers.
pub fn loss_and_gradients(params: &ModelParams, batch: &EncodedBatch) -> Result<(f64, Gradients)> {
    if batch.labels.len() != batch.len() {
        return Err(Error::Shape("batch has no labels".into()));
    }
    let (out, cache) = forward_cached(params, batch)?;
    let c = &params.config;
    let (n, s, h) = (batch.len(), c.max_seq_len, c.hidden_size);
    let mut grads = params.zeros_like();

    let mut dlogits = softmax(out.logits.view());
    let mut loss = 0.0;
    for (b, &label) in batch.labels.iter().enumerate() {
        loss -= dlogits[[b, label]].max(f64::MIN_POSITIVE).ln();
        dlogits[[b, label]] -= 1.0;
    }
    loss /= n as f64;
    dlogits /= n as f64;

    general_mat_mul(1.0, &dlogits.t(), &out.embeddings, 0.0, &mut grads.out_w);
    grads.out_b = dlogits.sum_axis(Axis(0));
    let mut d_dense = dlogits.dot(&params.out_w);
    ndarray::Zip::from(&mut d_dense)
        .and(&cache.dense_pre)
        .for_each(|d, &pre| {
            if pre <= 0.0 {
                *d = 0.0;
            }
        });
    general_mat_mul(1.0, &d_dense.t(), &cache.flat, 0.0, &mut grads.dense_w);
    grads.dense_b = d_dense.sum_axis(Axis(0));
    let d_flat = d_dense.dot(&params.dense_w);

    let mut d_hidden: Vec<Array2<f64>> = (0..s)
        .map(|t| d_flat.slice(s![.., t * h..(t + 1) * h]).to_owned())
        .collect();

    for l in (0..c.num_layers).rev() {
        let layer = &params.layers[l];
        let lc = &cache.layers[l];
        let grad = &mut grads.layers[l];
        let mut dh_next = Array2::<f64>::zeros((n, h));
        let mut dc_next = Array2::<f64>::zeros((n, h));
        let mut d_input: Vec<Array2<f64>> = Vec::new();
        if l > 0 {
            d_input = vec![Array2::zeros((n, h)); s];
        }
        let zeros = Array2::<f64>::zeros((n, h));
        let mut dz = Array2::<f64>::zeros((n, 4 * h));
        for t in (0..s).rev() {
            let gates = &lc.gates[t];
            let cell = &lc.cells[t];
            let c_prev = if t > 0 { &lc.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &lc.hidden[t - 1] } else { &zeros };
            for b in 0..n {
                let g = gates.row(b);
                let dhr = d_hidden[t].row(b);
                let dhn = dh_next.row(b);
                let dcn = dc_next.row_mut(b).into_slice().expect("contiguous");
                let dzr = dz.row_mut(b).into_slice().expect("contiguous");
                for j in 0..h {
                    let (ig, fg, gg, og) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let tc = cell[[b, j]].tanh();
                    let dh = dhr[j] + dhn[j];
                    let d_o = dh * tc;
                    let dc = dh * og * (1.0 - tc * tc) + dcn[j];
                    dzr[j] = dc * gg * ig * (1.0 - ig);
                    dzr[h + j] = dc * c_prev[[b, j]] * fg * (1.0 - fg);
                    dzr[2 * h + j] = dc * ig * (1.0 - gg * gg);
                    dzr[3 * h + j] = d_o * og * (1.0 - og);
                    dcn[j] = dc * fg;
                }
            }
            general_mat_mul(1.0, &dz.t(), h_prev, 1.0, &mut grad.w_hh);
            grad.bias += &dz.sum_axis(Axis(0));
            if l == 0 {
                for (b, seq) in batch.tokens.iter().enumerate() {
                    if let Some(k) = seq[t] {
                        grad.w_ih.column_mut(k).scaled_add(1.0, &dz.row(b));
                    }
                }
            } else {
                general_mat_mul(
                    1.0,
                    &dz.t(),
                    &cache.layers[l - 1].hidden[t],
                    1.0,
                    &mut grad.w_ih,
                );
                general_mat_mul(1.0, &dz, &layer.w_ih, 0.0, &mut d_input[t]);
            }
            general_mat_mul(1.0, &dz, &layer.w_hh, 0.0, &mut dh_next);
        }
        d_hidden = d_input;
    }
    Ok((loss, grads))
}

/// Mean cross-entropy without gradients.
pub fn loss(params: &ModelParams, batch: &EncodedBatch) -> Result<f64> {
    let out = forward(params, batch)?;
    let p = softmax(out.logits.view());
    let n = batch.len() as f64;
    Ok(batch
        .labels
        .iter()
        .enumerate()
        .map(|(b, &l)| -p[[b, l]].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / n)
}

/// Embedding of a canonical string.
pub fn embed(params: &ModelParams, alphabet: &Alphabet, text: &str) -> Result<Vec<f64>> {
    Ok(embed_batch(params, alphabet, &[text])?.row(0).to_vec())
}

const EMBED_CHUNK: usize = 64;

/// Embeddings of many strings, one row each. Rows are computed in fixed-size
/// chunks; every row depends only on its own string.
pub fn embed_batch<S: AsRef<str>>(
    params: &ModelParams,
    alphabet: &Alphabet,
    texts: &[S],
) -> Result<Array2<f64>> {
    if alphabet.len() != params.config.alphabet_size {
        return Err(Error::Shape(format!(
            "alphabet of {} characters for a model with {}",
            alphabet.len(),
            params.config.alphabet_size
        )));
    }
    let mut out = Array2::zeros((texts.len(), params.config.dense_size));
    for (chunk_idx, chunk) in texts.chunks(EMBED_CHUNK).enumerate() {
        let batch = EncodedBatch {
            tokens: chunk
                .iter()
                .map(|t| encode(t.as_ref(), alphabet, params.config.max_seq_len))
                .collect(),
            labels: Vec::new(),
        };
        let fwd = forward(params, &batch)?;
        let start = chunk_idx * EMBED_CHUNK;
        out.slice_mut(s![start..start + chunk.len(), ..])
            .assign(&fwd.embeddings);
    }
    Ok(out)
}
