use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::train::Model;
use crate::dom::{DomTree, NodeId};
use crate::featurizer::NodeTokens;
use crate::prepare::prepare_tree;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub node_id: NodeId,
    /// Attribute index, or `M` for none.
    pub label: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub predictions: Vec<Prediction>,
    /// At most one value per attribute.
    pub values: BTreeMap<String, String>,
}

/// Index of the largest probability; the first one wins ties.
pub fn argmax(probs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Per attribute, the text of the most probable node predicted as that
/// attribute; ties go to the earlier node in DFS order.
pub fn select_values(tree: &DomTree, predictions: &[Prediction], attributes: &[String]) -> BTreeMap<String, String> {
    let mut best: BTreeMap<usize, &Prediction> = BTreeMap::new();
    let pos = |id: NodeId| tree.nodes()[id.0].dfs_position;
    for p in predictions.iter().filter(|p| p.label < attributes.len()) {
        let better = match best.get(&p.label) {
            None => true,
            Some(cur) => {
                p.probability > cur.probability
                    || (p.probability == cur.probability && pos(p.node_id) < pos(cur.node_id))
            }
        };
        if better {
            best.insert(p.label, p);
        }
    }
    best.into_iter()
        .map(|(label, p)| (attributes[label].clone(), tree.nodes()[p.node_id.0].text.clone().unwrap_or_default()))
        .collect()
}

impl Model {
    pub fn predict_tokens(&self, tokens: &[NodeTokens]) -> Result<Vec<Prediction>> {
        tokens
            .iter()
            .map(|t| {
                let probs = self.network.probabilities(&self.params, &self.vocab.encode(t))?;
                let label = argmax(&probs);
                Ok(Prediction { node_id: t.node_id, label, probability: probs[label] as f64 })
            })
            .collect()
    }

    /// Scores the already prepared variable nodes of `tree`.
    pub fn extract_prepared(&self, tree: &DomTree, tokens: &[NodeTokens]) -> Result<Extraction> {
        let predictions = self.predict_tokens(tokens)?;
        let values = select_values(tree, &predictions, &self.attributes);
        Ok(Extraction { predictions, values })
    }

    /// Scores every variable node of a classified tree.
    pub fn extract_page(&self, tree: &DomTree) -> Result<Extraction> {
        let (_, tokens) = prepare_tree(tree, self.prep_params())?;
        self.extract_prepared(tree, &tokens)
    }
}
