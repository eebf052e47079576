use serde::{Deserialize, Serialize};

use crate::featurizer::{Caps, DEFAULT_BUCKETS, FRIENDS_WORD_CAP};
use crate::ingest::MAX_NODE_WORDS;
use crate::simplifier::{DEFAULT_K, DEFAULT_MAX_FRIENDS};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// One MLP over the node encoding with `M + 1` outputs.
    #[default]
    Intra,
    /// One shared scalar MLP per attribute embedding, jointly softmaxed.
    Cross,
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::Intra => "intra",
            Head::Cross => "cross",
        })
    }
}

/// Model and training hyperparameters. Missing keys take the defaults;
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub k_ancestors: usize,
    pub max_friends: usize,
    pub node_words: usize,
    pub friends_words: usize,
    pub min_count: usize,
    pub d_w: usize,
    pub d_c: usize,
    pub cnn_filters: usize,
    pub kernel: usize,
    pub lstm_hidden: usize,
    /// Input embedding size of XPath tags.
    pub d_xpath_tag: usize,
    /// Output size of the XPath BiLSTM (even).
    pub d_xpath: usize,
    pub d_leaf: usize,
    pub d_pos: usize,
    pub buckets: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub head: Head,
    /// Fraction of none-labelled training nodes kept, in (0, 1].
    pub none_keep_ratio: f64,
    /// When false, partner, friends and cosine features are zeroed.
    pub friend_circle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k_ancestors: DEFAULT_K,
            max_friends: DEFAULT_MAX_FRIENDS,
            node_words: MAX_NODE_WORDS,
            friends_words: FRIENDS_WORD_CAP,
            min_count: 1,
            d_w: 100,
            d_c: 100,
            cnn_filters: 50,
            kernel: 3,
            lstm_hidden: 100,
            d_xpath_tag: 30,
            d_xpath: 30,
            d_leaf: 30,
            d_pos: 20,
            buckets: DEFAULT_BUCKETS,
            mlp_hidden: 100,
            dropout: 0.3,
            lr: 1e-3,
            batch: 32,
            epochs: 15,
            seed: 0,
            head: Head::Intra,
            none_keep_ratio: 1.0,
            friend_circle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("k_ancestors", self.k_ancestors),
            ("max_friends", self.max_friends),
            ("node_words", self.node_words),
            ("friends_words", self.friends_words),
            ("d_w", self.d_w),
            ("d_c", self.d_c),
            ("cnn_filters", self.cnn_filters),
            ("kernel", self.kernel),
            ("lstm_hidden", self.lstm_hidden),
            ("d_xpath_tag", self.d_xpath_tag),
            ("d_xpath", self.d_xpath),
            ("d_leaf", self.d_leaf),
            ("d_pos", self.d_pos),
            ("buckets", self.buckets),
            ("mlp_hidden", self.mlp_hidden),
            ("batch", self.batch),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be positive")));
        }
        if !self.d_xpath.is_multiple_of(2) {
            return Err(Error::Config("`d_xpath` must be even (two LSTM directions)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("`dropout` {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("`lr` {} must be positive", self.lr)));
        }
        if !(self.none_keep_ratio > 0.0 && self.none_keep_ratio <= 1.0) {
            return Err(Error::Config(format!("`none_keep_ratio` {} outside (0, 1]", self.none_keep_ratio)));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn caps(&self) -> Caps {
        Caps { node_words: self.node_words, friends_words: self.friends_words }
    }

    pub fn d_enc(&self) -> usize {
        2 * self.lstm_hidden
    }

    /// Size of `[e_x; e_p; e_f; e_xpath; e_leaf; e_pos]`.
    pub fn base_dim(&self) -> usize {
        3 * self.d_enc() + self.d_xpath + self.d_leaf + self.d_pos
    }

    /// Architecture fields must agree for a checkpoint to be reused.
    pub fn same_architecture(&self, other: &Self) -> bool {
        let arch = |c: &Self| {
            (
                c.d_w,
                c.d_c,
                c.cnn_filters,
                c.kernel,
                c.lstm_hidden,
                c.d_xpath_tag,
                c.d_xpath,
                c.d_leaf,
                c.d_pos,
                c.buckets,
                c.mlp_hidden,
                c.head,
            )
        };
        arch(self) == arch(other)
    }
}
