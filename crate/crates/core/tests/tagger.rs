mod common;

use common::grad::{self, gradient_suite, tiny_network, toy_batch};
use neural::ParamStore;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simpdom::featurizer::{NodeFeatures, TextIds};
use simpdom::tagger::{Head, Network, TrainConfig};

#[test]
fn gradients_match_finite_differences() {
    let suite = gradient_suite();
    let layers = suite.iter().filter(|s| s.0.starts_with("intra/")).count();
    // word, char, cnn, text lstm, xpath tag, xpath lstm, leaf, pos, attr, head, end-to-end
    assert_eq!(layers, 11, "{suite:?}");
    for (name, err, tol) in &suite {
        assert!(err < tol, "{name}: relative error {err:e} >= {tol:e}");
    }
}

#[test]
fn cosine_path_receives_gradient() {
    // attributes reach the intra head only through the partner cosine
    let net = tiny_network(Head::Intra);
    let store: ParamStore<f64> = net.init(7);
    let g = grad::batch_grads(&net, &store, &toy_batch()[..1]);
    let nonzero = (0..(grad::ATTRIBUTES + 1) * net.d_enc()).filter(|&i| g.value("attr_emb", i) != 0.0).count();
    assert!(nonzero > 0);
    // and not at all without a partner
    let g = grad::batch_grads(&net, &store, &toy_batch()[1..]);
    assert!((0..(grad::ATTRIBUTES + 1) * net.d_enc()).all(|i| g.value("attr_emb", i) == 0.0));
}

fn full_network(head: Head, m: usize) -> (Network, ParamStore<f64>) {
    let net = Network::with_sizes(&TrainConfig { head, ..TrainConfig::default() }, 40, 30, 12, m).unwrap();
    let store = net.init(3);
    (net, store)
}

fn toy_node(partner: &[u32]) -> NodeFeatures {
    let mut f = toy_batch().remove(0).0;
    f.partner = TextIds { words: partner.to_vec(), chars: partner.iter().map(|&w| vec![w % 20 + 2]).collect() };
    f
}

#[test]
fn node_encoding_has_documented_width() {
    let (net, store) = full_network(Head::Intra, 4);
    let e_n = net.encode_node(&store, &toy_node(&[7])).unwrap();
    assert_eq!(e_n.len(), 684);
    let cos = &e_n[680..];
    assert!(cos.iter().all(|c| (-1.0..=1.0).contains(c)));
    assert!(cos.iter().any(|&c| c != 0.0));
    let alone = net.encode_node(&store, &toy_node(&[])).unwrap();
    assert!(alone[680..].iter().all(|&c| c == 0.0));
    assert!(alone[200..400].iter().all(|&c| c == 0.0));
}

#[test]
fn identical_text_encodes_identically() {
    let (net, store) = full_network(Head::Intra, 2);
    let mut f = toy_node(&[]);
    f.partner = f.node.clone();
    let e_n = net.encode_node(&store, &f).unwrap();
    assert_eq!(&e_n[..200], &e_n[200..400]);
}

#[test]
fn ablation_ignores_partner_and_friends() {
    let config = TrainConfig { friend_circle: false, ..TrainConfig::default() };
    let net = Network::with_sizes(&config, 40, 30, 12, 3).unwrap();
    let store: ParamStore<f64> = net.init(3);
    let a = net.probabilities(&store, &toy_node(&[7])).unwrap();
    let mut other = toy_node(&[9, 10]);
    other.friends = TextIds::default();
    assert_eq!(a, net.probabilities(&store, &other).unwrap());
}

#[test]
fn dropout_is_off_at_inference() {
    let config = TrainConfig { dropout: 0.9, ..TrainConfig::default() };
    let net = Network::with_sizes(&config, 40, 30, 12, 3).unwrap();
    let store: ParamStore<f32> = net.init(3);
    let f = toy_node(&[7]);
    let a = net.probabilities(&store, &f).unwrap();
    let b = net.probabilities(&store, &f).unwrap();
    assert_eq!(a, b);
    let mut r1 = ChaCha8Rng::seed_from_u64(1);
    let mut r2 = ChaCha8Rng::seed_from_u64(2);
    let t1 = net.forward(&store, &f, true, &mut r1).unwrap().0;
    let t2 = net.forward(&store, &f, true, &mut r2).unwrap().0;
    assert_ne!(t1, t2);
}

#[test]
fn cross_head_is_symmetric_for_identical_attributes() {
    let (net, mut store) = full_network(Head::Cross, 1);
    let table = store.get_mut("attr_emb").unwrap();
    let row0 = table.row(0).to_vec();
    table.data_mut()[200..400].copy_from_slice(&row0);
    let p = net.probabilities(&store, &toy_node(&[7])).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12, "{p:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cross_head_scores_follow_attribute_rows(m in 1usize..5, seed in 0u64..1000, partner in prop::collection::vec(2u32..40, 0..4)) {
        let config = TrainConfig { head: Head::Cross, ..grad::tiny_config(Head::Cross) };
        let net = Network::with_sizes(&config, 40, 30, 12, m).unwrap();
        let mut store: ParamStore<f64> = net.init(seed);
        let f = toy_node(&partner);
        let p = net.probabilities(&store, &f).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        // permuting the attribute rows permutes the output the same way
        let d = net.d_enc();
        let table = store.get_mut("attr_emb").unwrap();
        let rows: Vec<Vec<f64>> = (0..=m).map(|i| table.row(i).to_vec()).collect();
        for i in 0..=m {
            table.data_mut()[i * d..(i + 1) * d].copy_from_slice(&rows[m - i]);
        }
        let q = net.probabilities(&store, &f).unwrap();
        for i in 0..=m {
            prop_assert!((p[i] - q[m - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn intra_probabilities_sum_to_one(m in 1usize..6, seed in 0u64..1000) {
        let net = Network::with_sizes(&grad::tiny_config(Head::Intra), 40, 30, 12, m).unwrap();
        let store: ParamStore<f64> = net.init(seed);
        let p = net.probabilities(&store, &toy_node(&[3])).unwrap();
        prop_assert_eq!(p.len(), m + 1);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
