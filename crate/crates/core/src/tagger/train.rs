use neural::{Adam, AdamConfig, NeuralError, ParamStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Head, TrainConfig};
use super::model::{layer_rng, Network};
use crate::exec::Exec;
use crate::featurizer::{NodeFeatures, Vocab};
use crate::prepare::{PrepParams, PreparedSite};
use crate::{Error, Result};

/// A trained tagger: network layout, weights, vocabulary and provenance.
#[derive(Clone, Debug)]
pub struct Model {
    pub network: Network,
    pub params: ParamStore<f32>,
    pub vocab: Vocab,
    pub attributes: Vec<String>,
    pub vertical: String,
    pub train_sites: Vec<String>,
}

impl Model {
    pub fn config(&self) -> &TrainConfig {
        &self.network.config
    }

    pub fn head(&self) -> Head {
        self.network.config.head
    }

    pub fn none_label(&self) -> usize {
        self.attributes.len()
    }

    /// Preprocessing parameters the model was trained with.
    pub fn prep_params(&self) -> PrepParams {
        prep_params(self.config())
    }
}

pub fn prep_params(c: &TrainConfig) -> PrepParams {
    PrepParams { k: c.k_ancestors, max_friends: c.max_friends, caps: c.caps(), buckets: c.buckets }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean of the batch losses.
    pub mean: f64,
    pub batches: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: Model,
    pub log: Vec<EpochLoss>,
}

pub type Example = (NodeFeatures, usize);

fn common_attributes(sites: &[PreparedSite]) -> Result<(Vec<String>, String)> {
    let first = sites.first().ok_or_else(|| Error::Argument("no training sites".into()))?;
    for s in sites {
        if s.attributes != first.attributes || s.vertical != first.vertical {
            return Err(Error::Schema(format!(
                "site `{}` ({}) does not share the attribute list of `{}` ({})",
                s.site_id, s.vertical, first.site_id, first.vertical
            )));
        }
    }
    Ok((first.attributes.clone(), first.vertical.clone()))
}

/// Labelled training examples, optionally dropping a share of none nodes.
pub fn examples(sites: &[PreparedSite], vocab: &Vocab, config: &TrainConfig) -> Vec<Example> {
    let mut rng = layer_rng(config.seed, "none_sampling");
    let mut out = Vec::new();
    for site in sites {
        let none = site.attributes.len();
        for page in &site.pages {
            for (tokens, &label) in page.tokens.iter().zip(&page.labels) {
                if label == none && config.none_keep_ratio < 1.0 && rng.random::<f64>() >= config.none_keep_ratio {
                    continue;
                }
                out.push((vocab.encode(tokens), label));
            }
        }
    }
    out
}

/// Minibatch Adam over `examples`. Per-example gradients may be computed in
/// parallel; they are merged in batch order so the result does not depend
/// on scheduling.
pub fn fit(
    net: &Network,
    params: &mut ParamStore<f32>,
    examples: &[Example],
    config: &TrainConfig,
    exec: Exec,
) -> Result<Vec<EpochLoss>> {
    if examples.is_empty() {
        return Err(Error::Argument("no training examples".into()));
    }
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() });
    let mut rng = layer_rng(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut batches = Vec::new();
        for chunk in order.chunks(config.batch) {
            let batch_seed: u64 = rng.random();
            let items: Vec<(u64, usize)> = chunk.iter().enumerate().map(|(j, &i)| (j as u64, i)).collect();
            let store = &*params;
            let results = exec.map(&items, |&(j, i)| {
                let mut r = ChaCha8Rng::seed_from_u64(batch_seed);
                r.set_stream(j);
                net.loss_and_grads(store, &examples[i].0, examples[i].1, &mut r)
            });
            let mut total = 0.0f64;
            let mut grads = neural::Grads::new();
            for r in results {
                let (loss, g) = r?;
                total += loss as f64;
                grads.merge(g);
            }
            let loss = total / chunk.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("loss {loss} in epoch {epoch}")));
            }
            grads.scale(1.0 / chunk.len() as f32);
            adam.step(params, &grads).map_err(|e| match e {
                NeuralError::NonFiniteGradient(name) => {
                    Error::Divergence(format!("non-finite gradient for `{name}` in epoch {epoch}"))
                }
                other => other.into(),
            })?;
            if let Some(name) = params.first_non_finite() {
                return Err(Error::Divergence(format!("parameter `{name}` became non-finite in epoch {epoch}")));
            }
            batches.push(loss);
        }
        let mean = batches.iter().sum::<f64>() / batches.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean:.5}");
        log.push(EpochLoss { epoch, mean, batches });
    }
    Ok(log)
}

/// Trains a fresh model on prepared seed sites of one vertical.
pub fn train(sites: &[PreparedSite], config: &TrainConfig, exec: Exec) -> Result<TrainOutput> {
    config.validate()?;
    let (attributes, vertical) = common_attributes(sites)?;
    let vocab = Vocab::from_trees(sites.iter().flat_map(|s| s.trees()), config.min_count)?;
    let data = examples(sites, &vocab, config);
    let network = Network::new(config, &vocab, attributes.len())?;
    let mut params = network.init(config.seed);
    let log = fit(&network, &mut params, &data, config, exec)?;
    let model = Model {
        network,
        params,
        vocab,
        attributes,
        vertical,
        train_sites: sites.iter().map(|s| s.site_id.clone()).collect(),
    };
    Ok(TrainOutput { model, log })
}

/// Continues training a cross-head model on another vertical. The encoder
/// and head weights and the vocabulary are kept; the attribute table is
/// re-initialised for the new attribute list and the optimizer starts
/// fresh. Training settings (epochs, batch, lr, seed, dropout, none
/// sampling) come from `config`; the architecture comes from `base`.
pub fn finetune(base: &Model, sites: &[PreparedSite], config: &TrainConfig, exec: Exec) -> Result<TrainOutput> {
    if base.head() != Head::Cross {
        return Err(Error::IncompatibleHead { found: base.head().to_string(), expected: Head::Cross.to_string() });
    }
    let (attributes, vertical) = common_attributes(sites)?;
    let mut cfg = base.config().clone();
    cfg.epochs = config.epochs;
    cfg.batch = config.batch;
    cfg.lr = config.lr;
    cfg.seed = config.seed;
    cfg.dropout = config.dropout;
    cfg.none_keep_ratio = config.none_keep_ratio;
    cfg.validate()?;
    let network = Network::new(&cfg, &base.vocab, attributes.len())?;
    let mut params = base.params.clone();
    network.init_attributes(&mut params, cfg.seed);
    network.check(&params)?;
    let data = examples(sites, &base.vocab, &cfg);
    let log = if cfg.epochs == 0 { Vec::new() } else { fit(&network, &mut params, &data, &cfg, exec)? };
    let model = Model {
        network,
        params,
        vocab: base.vocab.clone(),
        attributes,
        vertical,
        train_sites: sites.iter().map(|s| s.site_id.clone()).collect(),
    };
    Ok(TrainOutput { model, log })
}
