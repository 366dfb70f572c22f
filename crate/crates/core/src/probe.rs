//! Linear pairwise ranking probe over pooled layer activations.
//!
//! Each input is reduced to one value per channel per layer (global average
//! pooling; flat layers pass through), optionally z-scored per dimension,
//! and scored by a single linear layer. Training minimizes the mean pairwise
//! logistic loss `ln(1 + exp(-s (f(a) - f(b))))` plus `l2 * |w|^2` with
//! mini-batch gradient descent. The backbone never appears here: its
//! activations are plain inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::ActivationSet;
use crate::rng::derive_named;
use crate::types::{LayerMeta, Spatial};

/// Lower bound applied to per-dimension standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Origin of one probe input dimension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimEntry {
    pub layer: String,
    pub block_id: u32,
    pub channel: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DimMap(pub Vec<DimEntry>);

impl DimMap {
    pub fn from_layers(layers: &[LayerMeta]) -> Self {
        let mut dims = Vec::with_capacity(layers.iter().map(|l| l.channels).sum());
        for l in layers {
            dims.extend((0..l.channels).map(|channel| DimEntry {
                layer: l.name.clone(),
                block_id: l.block_id,
                channel,
            }));
        }
        DimMap(dims)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Layer names in first-appearance order.
    pub fn layer_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for d in &self.0 {
            if names.last() != Some(&d.layer.as_str()) && !names.contains(&d.layer.as_str()) {
                names.push(&d.layer);
            }
        }
        names
    }

    /// Distinct block ids in order.
    pub fn blocks(&self) -> Vec<u32> {
        let mut blocks: Vec<u32> = self.0.iter().map(|d| d.block_id).collect();
        blocks.dedup();
        blocks.sort_unstable();
        blocks.dedup();
        blocks
    }

    /// Dimensions belonging to layers of `block_id`.
    pub fn restrict_to_block(&self, block_id: u32) -> Result<FeatureView> {
        let indices: Vec<usize> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, d)| d.block_id == block_id)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            return Err(Error::UnknownBlock(block_id));
        }
        let dim_map = DimMap(indices.iter().map(|&i| self.0[i].clone()).collect());
        Ok(FeatureView { indices, dim_map })
    }
}

/// A subset of probe dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureView {
    pub indices: Vec<usize>,
    pub dim_map: DimMap,
}

/// Concatenated pooled features of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeInput {
    pub values: Vec<f32>,
}

impl ProbeInput {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn select(&self, view: &FeatureView) -> ProbeInput {
        ProbeInput {
            values: view.indices.iter().map(|&i| self.values[i]).collect(),
        }
    }
}

/// Global-average-pools raw layers and concatenates all layers in order.
pub fn pool_activations(layers: &[LayerMeta], set: &ActivationSet) -> Result<ProbeInput> {
    if set.layers.len() != layers.len() {
        return Err(Error::DimensionMismatch {
            expected: layers.len(),
            actual: set.layers.len(),
        });
    }
    let mut values = Vec::with_capacity(layers.iter().map(|l| l.channels).sum());
    for (meta, data) in layers.iter().zip(&set.layers) {
        if data.len() != meta.stored_len() {
            return Err(Error::ShapeMismatch {
                sample: set.sample_id.clone(),
                layer: meta.name.clone(),
                expected: meta.stored_len(),
                actual: data.len(),
            });
        }
        match meta.spatial {
            Spatial::Pooled => values.extend_from_slice(data),
            Spatial::Raw { height, width } => {
                let area = height * width;
                values.extend(
                    data.chunks_exact(area)
                        .map(|ch| (ch.iter().map(|&v| v as f64).sum::<f64>() / area as f64) as f32),
                );
            }
        }
    }
    Ok(ProbeInput { values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub pair_id: String,
    pub source_id: String,
    pub a: ProbeInput,
    pub b: ProbeInput,
    /// True iff the first member has the larger augmentation value.
    pub label: bool,
}

impl LabeledPair {
    pub fn sign(&self) -> f64 {
        if self.label {
            1.0
        } else {
            -1.0
        }
    }
}

/// Pairs sharing one dimension layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub dim_map: DimMap,
    pub pairs: Vec<LabeledPair>,
}

impl PairDataset {
    pub fn new(dim_map: DimMap, pairs: Vec<LabeledPair>) -> Result<Self> {
        for p in &pairs {
            for x in [&p.a, &p.b] {
                if x.dim() != dim_map.len() {
                    return Err(Error::DimensionMismatch {
                        expected: dim_map.len(),
                        actual: x.dim(),
                    });
                }
            }
        }
        Ok(Self { dim_map, pairs })
    }

    pub fn dim(&self) -> usize {
        self.dim_map.len()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn restrict(&self, view: &FeatureView) -> PairDataset {
        PairDataset {
            dim_map: view.dim_map.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| LabeledPair {
                    pair_id: p.pair_id.clone(),
                    source_id: p.source_id.clone(),
                    a: p.a.select(view),
                    b: p.b.select(view),
                    label: p.label,
                })
                .collect(),
        }
    }

    /// Restricts to the dimensions of one block.
    pub fn restrict_to_block(&self, block_id: u32) -> Result<PairDataset> {
        Ok(self.restrict(&self.dim_map.restrict_to_block(block_id)?))
    }
}

/// Per-dimension mean and (population) standard deviation over both members
/// of every pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn from_pairs(data: &PairDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("no pairs to compute feature statistics".into()));
        }
        let d = data.dim();
        let n = (2 * data.len()) as f64;
        let mut mean = vec![0.0; d];
        for p in &data.pairs {
            for x in [&p.a, &p.b] {
                for (m, &v) in mean.iter_mut().zip(&x.values) {
                    *m += v as f64;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for p in &data.pairs {
            for x in [&p.a, &p.b] {
                for ((s, &v), m) in var.iter_mut().zip(&x.values).zip(&mean) {
                    let dv = v as f64 - m;
                    *s += dv * dv;
                }
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, std })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Pairs per gradient step.
    pub batch_size: usize,
    pub l2: f64,
    pub momentum: f64,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 256,
            l2: 1e-4,
            momentum: 0.0,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!(
                "l2 penalty must be non-negative, got {}",
                self.l2
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Trained scorer `f(x) = w . ((x - mu) / sigma) + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dim_map: DimMap,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp: Option<Stamp>,
}

/// Provenance written into pipeline artifacts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub experiment_seed: u64,
}

impl RankProbe {
    /// A probe with the given raw-space weights and no standardization.
    pub fn from_weights(weights: Vec<f64>, bias: f64, dim_map: DimMap) -> Self {
        let d = weights.len();
        Self {
            weights,
            bias,
            mu: vec![0.0; d],
            sigma: vec![1.0; d],
            dim_map,
            config: TrainConfig {
                standardize: false,
                ..Default::default()
            },
            stamp: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn standardized(&self) -> bool {
        self.config.standardize
    }

    /// Weight applied to each raw (unstandardized) feature.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.sigma).map(|(w, s)| w / s).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let probe: RankProbe = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let d = probe.weights.len();
        if probe.mu.len() != d || probe.sigma.len() != d || probe.dim_map.len() != d {
            return Err(Error::Bundle(format!(
                "{}: inconsistent probe dimensions",
                path.display()
            )));
        }
        Ok(probe)
    }
}

pub fn score(probe: &RankProbe, input: &ProbeInput) -> Result<f64> {
    if input.dim() != probe.dim() {
        return Err(Error::DimensionMismatch {
            expected: probe.dim(),
            actual: input.dim(),
        });
    }
    let mut acc = probe.bias;
    for (((&x, w), m), s) in input.values.iter().zip(&probe.weights).zip(&probe.mu).zip(&probe.sigma) {
        acc += w * (x as f64 - m) / s;
    }
    Ok(acc)
}

/// `ln(1 + exp(-m))` for signed margin `m`, evaluated as `max(-m, 0) + ln(1 + exp(-|m|))`.
pub fn softplus_neg(margin: f64) -> f64 {
    (-margin).max(0.0) + (-margin.abs()).exp().ln_1p()
}

/// `d/dm ln(1 + exp(-m)) = -1 / (1 + exp(m))`.
fn softplus_neg_grad(margin: f64) -> f64 {
    if margin >= 0.0 {
        let e = (-margin).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + margin.exp())
    }
}

/// Pairwise logistic rank loss; `label` is `sgn(v_a - v_b) > 0`.
pub fn pairwise_rank_loss(score_a: f64, score_b: f64, label: bool) -> f64 {
    let sign = if label { 1.0 } else { -1.0 };
    softplus_neg(sign * (score_a - score_b))
}

/// The regularized training objective over standardized pair differences.
pub struct Objective<'a> {
    data: &'a PairDataset,
    inv_sigma: Vec<f64>,
    l2: f64,
}

impl<'a> Objective<'a> {
    pub fn new(data: &'a PairDataset, sigma: &[f64], l2: f64) -> Self {
        Self {
            data,
            inv_sigma: sigma.iter().map(|s| 1.0 / s).collect(),
            l2,
        }
    }

    fn scaled(&self, weights: &[f64]) -> Vec<f64> {
        weights.iter().zip(&self.inv_sigma).map(|(w, s)| w * s).collect()
    }

    fn margin(scaled: &[f64], pair: &LabeledPair) -> f64 {
        let mut m = 0.0;
        for ((w, &a), &b) in scaled.iter().zip(&pair.a.values).zip(&pair.b.values) {
            m += w * (a as f64 - b as f64);
        }
        pair.sign() * m
    }

    fn penalty(&self, weights: &[f64]) -> f64 {
        self.l2 * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Mean rank loss over `indices` (all pairs when `None`), without the penalty.
    pub fn data_loss(&self, weights: &[f64], indices: Option<&[usize]>) -> f64 {
        let scaled = self.scaled(weights);
        let mut total = 0.0;
        let mut n = 0usize;
        let mut add = |p: &LabeledPair| {
            total += softplus_neg(Self::margin(&scaled, p));
            n += 1;
        };
        match indices {
            Some(ix) => ix.iter().for_each(|&i| add(&self.data.pairs[i])),
            None => self.data.pairs.iter().for_each(add),
        }
        total / n as f64
    }

    pub fn value(&self, weights: &[f64]) -> f64 {
        self.data_loss(weights, None) + self.penalty(weights)
    }

    /// Gradient of the objective restricted to `indices` (all pairs when `None`).
    pub fn gradient(&self, weights: &[f64], indices: Option<&[usize]>) -> Vec<f64> {
        let scaled = self.scaled(weights);
        let mut raw = vec![0.0; weights.len()];
        let mut n = 0usize;
        let mut add = |p: &LabeledPair| {
            let coef = p.sign() * softplus_neg_grad(Self::margin(&scaled, p));
            for ((g, &a), &b) in raw.iter_mut().zip(&p.a.values).zip(&p.b.values) {
                *g += coef * (a as f64 - b as f64);
            }
            n += 1;
        };
        match indices {
            Some(ix) => ix.iter().for_each(|&i| add(&self.data.pairs[i])),
            None => self.data.pairs.iter().for_each(add),
        }
        raw.iter()
            .zip(&self.inv_sigma)
            .zip(weights)
            .map(|((g, s), w)| g * s / n as f64 + 2.0 * self.l2 * w)
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Full-data objective (loss + penalty) after each epoch.
    pub epoch_objective: Vec<f64>,
    /// Mean rank loss after the final epoch, without the penalty.
    pub final_loss: f64,
    pub train_accuracy: f64,
}

pub fn train(data: &PairDataset, cfg: &TrainConfig) -> Result<(RankProbe, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one pair".into()));
    }
    let d = data.dim();
    let (mu, sigma) = if cfg.standardize {
        let stats = FeatureStats::from_pairs(data)?;
        let sigma = stats.std.iter().map(|s| s.max(SIGMA_FLOOR)).collect();
        (stats.mean, sigma)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let objective = Objective::new(data, &sigma, cfg.l2);
    let mut weights = vec![0.0; d];
    let mut velocity = vec![0.0; d];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = derive_named(cfg.seed, "probe-batch-order");
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let grad = objective.gradient(&weights, Some(batch));
            for ((w, v), g) in weights.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *w -= cfg.learning_rate * *v;
            }
        }
        let obj = objective.value(&weights);
        if !obj.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: obj,
                lr: cfg.learning_rate,
            });
        }
        log.epoch_objective.push(obj);
    }
    log.final_loss = objective.data_loss(&weights, None);
    let probe = RankProbe {
        weights,
        bias: 0.0,
        mu,
        sigma,
        dim_map: data.dim_map.clone(),
        config: cfg.clone(),
        stamp: None,
    };
    log.train_accuracy = evaluate(&probe, &data.pairs)?;
    Ok((probe, log))
}

/// Fraction of pairs ordered correctly; exact score ties count as wrong.
pub fn evaluate(probe: &RankProbe, pairs: &[LabeledPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on zero pairs".into()));
    }
    let mut correct = 0usize;
    for p in pairs {
        let (sa, sb) = (score(probe, &p.a)?, score(probe, &p.b)?);
        if (p.label && sa > sb) || (!p.label && sa < sb) {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LayerMeta;

    fn pair(a: Vec<f32>, b: Vec<f32>, label: bool) -> LabeledPair {
        LabeledPair {
            pair_id: String::new(),
            source_id: String::new(),
            a: ProbeInput::new(a),
            b: ProbeInput::new(b),
            label,
        }
    }

    #[test]
    fn loss_reference_values() {
        assert_eq!(pairwise_rank_loss(0.0, 0.0, true), std::f64::consts::LN_2);
        assert!((pairwise_rank_loss(2.0, 0.0, true) - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-15);
        assert!((pairwise_rank_loss(0.0, 2.0, true) - (1.0 + 2.0f64.exp()).ln()).abs() < 1e-15);
        assert!((pairwise_rank_loss(2.0, 0.0, true) - 0.126928).abs() < 1e-6);
        assert!((pairwise_rank_loss(0.0, 2.0, true) - 2.126928).abs() < 1e-6);
    }

    #[test]
    fn loss_is_stable_for_large_margins() {
        assert!(pairwise_rank_loss(1e4, 0.0, true) >= 0.0);
        assert!((pairwise_rank_loss(-1e4, 0.0, true) - 1e4).abs() < 1e-9);
        assert!(pairwise_rank_loss(800.0, 0.0, false).is_finite());
    }

    #[test]
    fn pooling_cases() {
        let layers = vec![
            LayerMeta::raw("r", 2, 0, 2, 2),
            LayerMeta::raw("one", 1, 0, 1, 1),
            LayerMeta::pooled("p", 2, 1),
        ];
        let set = ActivationSet {
            sample_id: "s".into(),
            layers: vec![vec![3.0, 3.0, 3.0, 3.0, 1.0, 2.0, 3.0, 6.0], vec![0.25], vec![7.0, 8.0]],
        };
        let pooled = pool_activations(&layers, &set).unwrap();
        assert_eq!(pooled.values, vec![3.0, 3.0, 0.25, 7.0, 8.0]);
        let bad = ActivationSet {
            sample_id: "s".into(),
            layers: vec![vec![0.0; 7], vec![0.0], vec![0.0; 2]],
        };
        assert!(matches!(
            pool_activations(&layers, &bad),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn score_cases() {
        let dm = DimMap::from_layers(&[LayerMeta::pooled("l", 3, 0)]);
        let zero = RankProbe::from_weights(vec![0.0; 3], 0.0, dm.clone());
        assert_eq!(score(&zero, &ProbeInput::new(vec![1.0, -2.0, 5.0])).unwrap(), 0.0);
        let e1 = RankProbe::from_weights(vec![0.0, 1.0, 0.0], 0.0, dm.clone());
        assert_eq!(score(&e1, &ProbeInput::new(vec![1.0, -2.5, 5.0])).unwrap(), -2.5);
        assert!(score(&e1, &ProbeInput::new(vec![1.0])).is_err());
    }

    #[test]
    fn zero_probe_scores_all_ties_wrong() {
        let dm = DimMap::from_layers(&[LayerMeta::pooled("l", 1, 0)]);
        let zero = RankProbe::from_weights(vec![0.0], 0.0, dm);
        let pairs = vec![pair(vec![1.0], vec![0.0], true), pair(vec![0.0], vec![1.0], false)];
        assert_eq!(evaluate(&zero, &pairs).unwrap(), 0.0);
    }

    #[test]
    fn bias_cancels_in_the_loss() {
        let dm = DimMap::from_layers(&[LayerMeta::pooled("l", 2, 0)]);
        let mut p = RankProbe::from_weights(vec![0.3, -1.2], 0.0, dm);
        let x = ProbeInput::new(vec![0.5, 0.1]);
        let y = ProbeInput::new(vec![-0.2, 0.7]);
        let l0 = pairwise_rank_loss(score(&p, &x).unwrap(), score(&p, &y).unwrap(), true);
        p.bias = 17.0;
        let l1 = pairwise_rank_loss(score(&p, &x).unwrap(), score(&p, &y).unwrap(), true);
        assert!((l0 - l1).abs() < 1e-12);
    }

    #[test]
    fn restrict_to_unknown_block() {
        let dm = DimMap::from_layers(&[LayerMeta::pooled("a", 2, 0), LayerMeta::pooled("b", 1, 3)]);
        assert!(matches!(dm.restrict_to_block(1), Err(Error::UnknownBlock(1))));
        let v = dm.restrict_to_block(3).unwrap();
        assert_eq!(v.indices, vec![2]);
        assert_eq!(dm.blocks(), vec![0, 3]);
    }

    #[test]
    fn divergence_is_reported() {
        let dm = DimMap::from_layers(&[LayerMeta::pooled("l", 1, 0)]);
        let data = PairDataset::new(dm, vec![pair(vec![1e30], vec![-1e30], true)]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 3,
            standardize: false,
            l2: 1.0,
            ..Default::default()
        };
        assert!(matches!(train(&data, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn probe_json_round_trip() {
        let dm = DimMap::from_layers(&[LayerMeta::pooled("l", 2, 4)]);
        let p = RankProbe::from_weights(vec![0.5, -0.25], 1.0, dm);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.json");
        p.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in [
            "\"weights\"",
            "\"bias\"",
            "\"mu\"",
            "\"sigma\"",
            "\"dim_map\"",
            "\"config\"",
        ] {
            assert!(text.contains(key), "{key}");
        }
        assert_eq!(RankProbe::load(&path).unwrap(), p);
    }
}
