//! The landscape network.
//!
//! Categorical fields are embedded and concatenated with the normalized
//! numeric fields into the 1-order vector `x1`. An optional 2-order
//! extractor produces `x2` from dedicated per-field interaction embeddings,
//! a halving rectifier MLP produces `xh` from `x1`, and a linear softmax head
//! over `[x1, x2, xh]` yields one probability per price bucket.

mod checkpoint;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, read_checkpoint_bytes, save_checkpoint,
    write_checkpoint_bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use crate::error::{Error, Result};
use crate::evalkit::Landscape;
use crate::features::{EncodedSample, FeatureSchema};
use crate::linalg::{axpy, dot, softmax, Matrix};
use crate::pricegrid::{BucketDistribution, PriceGrid};
use crate::trainer::{ParamSet, TrainableModel};

pub const MIN_LAYER_WIDTH: usize = 4;
pub const MIN_FIRST_ORDER_WIDTH: usize = 8;
const EMBEDDING_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    None,
    #[default]
    Fm,
    InnerProduct,
}

fn default_layers() -> usize {
    3
}

fn default_interaction_dim() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    #[serde(default)]
    pub interaction: InteractionKind,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_interaction_dim")]
    pub interaction_dim: usize,
    #[serde(default)]
    pub head_bias: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            interaction: InteractionKind::Fm,
            layers: default_layers(),
            interaction_dim: default_interaction_dim(),
            head_bias: false,
        }
    }
}

/// One fully connected layer; `bias` is a `1 × out` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// Every learnable tensor of the network. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub embeddings: Vec<Matrix>,
    pub interactions: Vec<Matrix>,
    pub layers: Vec<DenseLayer>,
    pub head_weight: Matrix,
    pub head_bias: Option<Matrix>,
}

pub type ParamGrads = Tensors;

impl Tensors {
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows, m.cols);
        Tensors {
            embeddings: self.embeddings.iter().map(z).collect(),
            interactions: self.interactions.iter().map(z).collect(),
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: z(&l.weight),
                    bias: z(&l.bias),
                })
                .collect(),
            head_weight: z(&self.head_weight),
            head_bias: self.head_bias.as_ref().map(z),
        }
    }

    /// Tensors with stable names, in checkpoint manifest order.
    pub fn named(&self, schema: &FeatureSchema) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (f, m) in schema.categorical.iter().zip(&self.embeddings) {
            out.push((format!("embedding.{}", f.name), m));
        }
        for (f, m) in schema.categorical.iter().zip(&self.interactions) {
            out.push((format!("interaction.{}", f.name), m));
        }
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("mlp.{i}.weight"), &l.weight));
            out.push((format!("mlp.{i}.bias"), &l.bias));
        }
        out.push(("head.weight".to_string(), &self.head_weight));
        if let Some(b) = &self.head_bias {
            out.push(("head.bias".to_string(), b));
        }
        out
    }

    fn matrices(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = Vec::new();
        out.extend(self.embeddings.iter());
        out.extend(self.interactions.iter());
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.head_weight);
        out.extend(self.head_bias.iter());
        out
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        out.extend(self.embeddings.iter_mut());
        out.extend(self.interactions.iter_mut());
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.head_weight);
        out.extend(self.head_bias.iter_mut());
        out
    }

    pub fn all_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.data.iter().all(|v| v.is_finite()))
    }
}

impl ParamSet for Tensors {
    fn slices(&self) -> Vec<&[f64]> {
        self.matrices().into_iter().map(|m| m.data.as_slice()).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.matrices_mut()
            .into_iter()
            .map(|m| m.data.as_mut_slice())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub schema: Arc<FeatureSchema>,
    pub grid: PriceGrid,
    pub net: NetConfig,
    pub tensors: Tensors,
}

/// Output widths of the MLP layers for a given `|x1|`.
pub fn mlp_widths(first_order: usize, layers: usize) -> Result<Vec<usize>> {
    if first_order < MIN_FIRST_ORDER_WIDTH {
        return Err(Error::config(format!(
            "1-order width {first_order} is below {MIN_FIRST_ORDER_WIDTH}"
        )));
    }
    let base = first_order - first_order % 2;
    Ok((1..=layers)
        .map(|i| (base >> i).max(MIN_LAYER_WIDTH))
        .collect())
}

/// Width of the 2-order vector.
pub fn interaction_width(kind: InteractionKind, fields: usize, dim: usize) -> usize {
    match kind {
        InteractionKind::None => 0,
        InteractionKind::Fm => dim,
        InteractionKind::InnerProduct => fields * fields.saturating_sub(1) / 2,
    }
}

pub fn init_params(
    schema: Arc<FeatureSchema>,
    grid: PriceGrid,
    net: NetConfig,
    seed: u64,
) -> Result<ModelParams> {
    let d1 = schema.first_order_width();
    let widths = mlp_widths(d1, net.layers)?;
    let n_fields = schema.categorical.len();
    if net.interaction != InteractionKind::None {
        if n_fields < 2 {
            return Err(Error::config("2-order interaction needs at least two categorical fields"));
        }
        if net.interaction_dim == 0 {
            return Err(Error::config("interaction dimension must be positive"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        Matrix::from_fn(rows, cols, |_, _| {
            rng.random_range(-EMBEDDING_INIT_RANGE..EMBEDDING_INIT_RANGE)
        })
    };
    let embeddings: Vec<Matrix> = schema
        .categorical
        .iter()
        .map(|f| uniform(f.vocab_size(), f.embedding_dim, &mut rng))
        .collect();
    let interactions: Vec<Matrix> = if net.interaction == InteractionKind::None {
        Vec::new()
    } else {
        schema
            .categorical
            .iter()
            .map(|f| uniform(f.vocab_size(), net.interaction_dim, &mut rng))
            .collect()
    };
    let normal = |rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng| {
        Matrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
    };
    let mut layers = Vec::with_capacity(widths.len());
    let mut fan_in = d1;
    for &w in &widths {
        layers.push(DenseLayer {
            weight: normal(w, fan_in, (2.0 / fan_in as f64).sqrt(), &mut rng),
            bias: Matrix::zeros(1, w),
        });
        fan_in = w;
    }
    let concat = d1 + interaction_width(net.interaction, n_fields, net.interaction_dim) + fan_in;
    let head_weight = normal(grid.n_buckets(), concat, (1.0 / concat as f64).sqrt(), &mut rng);
    let head_bias = net.head_bias.then(|| Matrix::zeros(1, grid.n_buckets()));
    Ok(ModelParams {
        schema,
        grid,
        net,
        tensors: Tensors {
            embeddings,
            interactions,
            layers,
            head_weight,
            head_bias,
        },
    })
}

/// 2-order feature interaction over per-field vectors of a common length.
pub fn interaction(vectors: &[&[f64]], kind: InteractionKind) -> Result<Vec<f64>> {
    if kind == InteractionKind::None {
        return Ok(Vec::new());
    }
    if vectors.len() < 2 {
        return Err(Error::logic("interaction needs at least two fields"));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::logic("interaction vectors differ in length"));
    }
    Ok(match kind {
        InteractionKind::Fm => {
            let mut sum = vec![0.0; dim];
            let mut sq = vec![0.0; dim];
            for v in vectors {
                for k in 0..dim {
                    sum[k] += v[k];
                    sq[k] += v[k] * v[k];
                }
            }
            sum.iter().zip(&sq).map(|(s, q)| 0.5 * (s * s - q)).collect()
        }
        InteractionKind::InnerProduct => {
            let mut out = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
            for i in 0..vectors.len() {
                for j in i + 1..vectors.len() {
                    out.push(dot(vectors[i], vectors[j]));
                }
            }
            out
        }
        InteractionKind::None => unreachable!(),
    })
}

/// Intermediate values of one forward pass, consumed by [`ModelParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub cat_indices: Vec<usize>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: BucketDistribution,
}

impl ForwardCache {
    pub fn hidden(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_finite(values: &[f64], location: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(location, "non-finite activation"))
    }
}

impl ModelParams {
    pub fn first_order_width(&self) -> usize {
        self.schema.first_order_width()
    }

    pub fn concat_width(&self) -> usize {
        self.tensors.head_weight.cols
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.slices().iter().map(|s| s.len()).sum()
    }

    fn check_sample(&self, sample: &EncodedSample) -> Result<()> {
        if sample.cat_indices.len() != self.schema.categorical.len()
            || sample.num_values.len() != self.schema.numeric.len()
        {
            return Err(Error::logic("sample does not match the model schema"));
        }
        for (idx, f) in sample.cat_indices.iter().zip(&self.schema.categorical) {
            if *idx >= f.vocab_size() {
                return Err(Error::logic(format!("index {idx} out of vocabulary for {}", f.name)));
            }
        }
        Ok(())
    }

    pub fn forward(&self, sample: &EncodedSample) -> Result<(BucketDistribution, ForwardCache)> {
        self.check_sample(sample)?;
        let t = &self.tensors;
        let mut x1 = Vec::with_capacity(self.first_order_width());
        for (table, &idx) in t.embeddings.iter().zip(&sample.cat_indices) {
            x1.extend_from_slice(table.row(idx));
        }
        x1.extend_from_slice(&sample.num_values);
        check_finite(&x1, "1-order features")?;

        let x2 = if t.interactions.is_empty() {
            Vec::new()
        } else {
            let rows: Vec<&[f64]> = t
                .interactions
                .iter()
                .zip(&sample.cat_indices)
                .map(|(table, &idx)| table.row(idx))
                .collect();
            interaction(&rows, self.net.interaction)?
        };

        let mut pre_activations = Vec::with_capacity(t.layers.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(t.layers.len());
        for (i, layer) in t.layers.iter().enumerate() {
            let input = activations.last().unwrap_or(&x1);
            let mut z = vec![0.0; layer.weight.rows];
            layer.weight.matvec_into(input, &mut z);
            axpy(1.0, &layer.bias.data, &mut z);
            check_finite(&z, &format!("mlp layer {i}"))?;
            let h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            pre_activations.push(z);
            activations.push(h);
        }

        let hidden = activations.last().map(Vec::as_slice).unwrap_or(&[]);
        let head = &t.head_weight;
        let mut logits = Vec::with_capacity(head.rows);
        let (n1, n2) = (x1.len(), x2.len());
        for r in 0..head.rows {
            let row = head.row(r);
            let mut o = dot(&row[..n1], &x1) + dot(&row[n1..n1 + n2], &x2) + dot(&row[n1 + n2..], hidden);
            if let Some(b) = &t.head_bias {
                o += b.data[r];
            }
            logits.push(o);
        }
        check_finite(&logits, "softmax head")?;
        let probs = BucketDistribution::from_softmax(softmax(&logits));
        let cache = ForwardCache {
            cat_indices: sample.cat_indices.clone(),
            x1,
            x2,
            pre_activations,
            activations,
            logits,
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    /// Exact gradients of `dl_dlogits · logits` with respect to every
    /// parameter.
    pub fn backward(&self, cache: &ForwardCache, dl_dlogits: &[f64]) -> Result<ParamGrads> {
        let mut grads = self.tensors.zeros_like();
        self.backward_into(cache, dl_dlogits, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale` times the gradients into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        dl_dlogits: &[f64],
        scale: f64,
        grads: &mut ParamGrads,
    ) -> Result<()> {
        let t = &self.tensors;
        if dl_dlogits.len() != t.head_weight.rows {
            return Err(Error::logic(format!(
                "gradient length {} does not match {} buckets",
                dl_dlogits.len(),
                t.head_weight.rows
            )));
        }
        if cache.x1.len() + cache.x2.len() + cache.hidden().len() != t.head_weight.cols {
            return Err(Error::logic("forward cache does not match these parameters"));
        }
        if dl_dlogits.iter().all(|g| *g == 0.0) {
            return Ok(());
        }
        let (n1, n2) = (cache.x1.len(), cache.x2.len());

        // head
        let mut d_concat = vec![0.0; t.head_weight.cols];
        for (r, &g) in dl_dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let gs = g * scale;
            let grow = grads.head_weight.row_mut(r);
            axpy(gs, &cache.x1, &mut grow[..n1]);
            axpy(gs, &cache.x2, &mut grow[n1..n1 + n2]);
            axpy(gs, cache.hidden(), &mut grow[n1 + n2..]);
            axpy(g, t.head_weight.row(r), &mut d_concat);
        }
        if let Some(gb) = &mut grads.head_bias {
            axpy(scale, dl_dlogits, &mut gb.data);
        }

        // MLP, last layer first
        let mut d_x1 = d_concat[..n1].to_vec();
        let mut d_h = d_concat[n1 + n2..].to_vec();
        for i in (0..t.layers.len()).rev() {
            let z = &cache.pre_activations[i];
            let d_z: Vec<f64> = d_h
                .iter()
                .zip(z)
                .map(|(d, zv)| if *zv > 0.0 { *d } else { 0.0 })
                .collect();
            let input = if i == 0 { &cache.x1 } else { &cache.activations[i - 1] };
            grads.layers[i].weight.add_outer(scale, &d_z, input);
            axpy(scale, &d_z, &mut grads.layers[i].bias.data);
            let mut d_in = vec![0.0; input.len()];
            t.layers[i].weight.matvec_t_add(&d_z, &mut d_in);
            d_h = d_in;
        }
        if !t.layers.is_empty() {
            axpy(1.0, &d_h, &mut d_x1);
        }

        // embeddings (numeric tail of x1 has no parameters)
        let mut offset = 0;
        for (f, &idx) in cache.cat_indices.iter().enumerate() {
            let dim = t.embeddings[f].cols;
            axpy(scale, &d_x1[offset..offset + dim], grads.embeddings[f].row_mut(idx));
            offset += dim;
        }

        // 2-order extractor
        if n2 > 0 {
            let d_x2 = &d_concat[n1..n1 + n2];
            let rows: Vec<&[f64]> = t
                .interactions
                .iter()
                .zip(&cache.cat_indices)
                .map(|(table, &idx)| table.row(idx))
                .collect();
            match self.net.interaction {
                InteractionKind::Fm => {
                    let dim = rows[0].len();
                    let mut sum = vec![0.0; dim];
                    for r in &rows {
                        axpy(1.0, r, &mut sum);
                    }
                    for (f, &idx) in cache.cat_indices.iter().enumerate() {
                        let g = grads.interactions[f].row_mut(idx);
                        for k in 0..dim {
                            g[k] += scale * d_x2[k] * (sum[k] - rows[f][k]);
                        }
                    }
                }
                InteractionKind::InnerProduct => {
                    let mut pair = 0;
                    for i in 0..rows.len() {
                        for j in i + 1..rows.len() {
                            let d = scale * d_x2[pair];
                            pair += 1;
                            if d == 0.0 {
                                continue;
                            }
                            axpy(d, rows[j], grads.interactions[i].row_mut(cache.cat_indices[i]));
                            axpy(d, rows[i], grads.interactions[j].row_mut(cache.cat_indices[j]));
                        }
                    }
                }
                InteractionKind::None => {}
            }
        }
        Ok(())
    }
}

impl Landscape for ModelParams {
    fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    fn distribution(&self, sample: &EncodedSample) -> Result<BucketDistribution> {
        self.forward(sample).map(|(p, _)| p)
    }
}

impl TrainableModel for ModelParams {
    type Params = Tensors;
    type Cache = ForwardCache;

    fn params(&self) -> &Tensors {
        &self.tensors
    }

    fn params_mut(&mut self) -> &mut Tensors {
        &mut self.tensors
    }

    fn zero_grads(&self) -> Tensors {
        self.tensors.zeros_like()
    }

    fn forward_cached(&self, sample: &EncodedSample) -> Result<(BucketDistribution, ForwardCache)> {
        self.forward(sample)
    }

    fn accumulate_grads(
        &self,
        cache: &ForwardCache,
        dl_dlogits: &[f64],
        scale: f64,
        grads: &mut Tensors,
    ) -> Result<()> {
        self.backward_into(cache, dl_dlogits, scale, grads)
    }
}
