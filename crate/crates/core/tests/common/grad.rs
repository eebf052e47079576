use neural::gradcheck::{check_params, worst};
use neural::{Grads, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simpdom::featurizer::{NodeFeatures, TextIds};
use simpdom::tagger::{Head, Network, TrainConfig};
use simpdom::NodeId;

pub const EPS: f64 = 1e-5;
pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
pub const ATTRIBUTES: usize = 3;

/// Small but complete architecture; dropout off so the loss is a pure
/// function of the parameters.
pub fn tiny_config(head: Head) -> TrainConfig {
    TrainConfig {
        d_w: 4,
        d_c: 3,
        cnn_filters: 3,
        kernel: 2,
        lstm_hidden: 3,
        d_xpath_tag: 3,
        d_xpath: 4,
        d_leaf: 3,
        d_pos: 2,
        buckets: 3,
        mlp_hidden: 5,
        dropout: 0.0,
        head,
        ..TrainConfig::default()
    }
}

pub fn tiny_network(head: Head) -> Network {
    Network::with_sizes(&tiny_config(head), 9, 9, 7, ATTRIBUTES).unwrap()
}

fn text(words: &[u32]) -> TextIds {
    TextIds {
        words: words.to_vec(),
        chars: words.iter().map(|&w| vec![2 + w % 7, 2 + (w * 3) % 7, 2 + (w * 5) % 7]).collect(),
    }
}

/// Two nodes: one with a partner and friends, one with neither.
pub fn toy_batch() -> Vec<(NodeFeatures, usize)> {
    vec![
        (
            NodeFeatures {
                node_id: NodeId(4),
                node: text(&[2, 3]),
                partner: text(&[4]),
                friends: text(&[5, 6, 7]),
                xpath: vec![2, 3, 4],
                leaf_tag: 4,
                bucket: 2,
            },
            1,
        ),
        (
            NodeFeatures {
                node_id: NodeId(9),
                node: text(&[8, 2, 2]),
                partner: TextIds::default(),
                friends: TextIds::default(),
                xpath: vec![2, 5],
                leaf_tag: 5,
                bucket: 3,
            },
            ATTRIBUTES,
        ),
    ]
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(99)
}

pub fn batch_loss(net: &Network, store: &ParamStore<f64>, batch: &[(NodeFeatures, usize)]) -> f64 {
    batch.iter().map(|(f, y)| net.loss_and_grads(store, f, *y, &mut rng()).unwrap().0).sum::<f64>() / batch.len() as f64
}

pub fn batch_grads(net: &Network, store: &ParamStore<f64>, batch: &[(NodeFeatures, usize)]) -> Grads<f64> {
    let mut grads = Grads::new();
    for (f, y) in batch {
        grads.merge(net.loss_and_grads(store, f, *y, &mut rng()).unwrap().1);
    }
    grads.scale(1.0 / batch.len() as f64);
    grads
}

/// Worst relative error per layer (tensor name up to the first `.`).
pub fn layer_errors(head: Head, batch: &[(NodeFeatures, usize)], per_tensor: usize) -> Vec<(String, f64)> {
    let net = tiny_network(head);
    let mut store: ParamStore<f64> = net.init(7);
    let grads = batch_grads(&net, &store, batch);
    let checks = check_params(&mut store, &grads, EPS, per_tensor, &mut rng(), |s| batch_loss(&net, s, batch));
    let mut layers: Vec<String> = checks.iter().map(|c| layer(&c.tensor)).collect();
    layers.dedup();
    layers
        .into_iter()
        .map(|l| {
            let mine: Vec<_> = checks.iter().filter(|c| layer(&c.tensor) == l).cloned().collect();
            (l, worst(&mine).map_or(0.0, |c| c.rel_error))
        })
        .collect()
}

fn layer(tensor: &str) -> String {
    tensor.split('.').next().unwrap_or(tensor).to_string()
}

/// Every check of the suite: `(name, worst relative error, tolerance)`.
pub fn gradient_suite() -> Vec<(String, f64, f64)> {
    let batch = toy_batch();
    let mut out = Vec::new();
    for head in [Head::Intra, Head::Cross] {
        for (l, e) in layer_errors(head, &batch[..1], 12) {
            out.push((format!("{head}/{l}"), e, LAYER_TOLERANCE));
        }
        let all = layer_errors(head, &batch, 8);
        let e2e = all.iter().map(|x| x.1).fold(0.0, f64::max);
        out.push((format!("{head}/end-to-end"), e2e, END_TO_END_TOLERANCE));
    }
    out
}
