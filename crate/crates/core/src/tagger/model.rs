//! The node encoder and both classification heads, with hand-written
//! backward passes.

use neural::{
    cosine, cosine_backward, cross_entropy, softmax, softmax_cross_entropy_grad, BiLstm, BiLstmCache, CharCnn,
    CharCnnCache, Embedding, Grads, Mlp, MlpCache, ParamStore, Real,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Head, TrainConfig};
use crate::featurizer::{NodeFeatures, TextIds, Vocab, PAD};
use crate::{Error, Result};

/// FNV-1a, used to derive a stable RNG stream per layer name.
pub(crate) fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Independent generator per layer so adding or resizing one layer never
/// shifts another layer's initial weights.
pub fn layer_rng(seed: u64, layer: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(layer));
    rng
}

#[derive(Clone, Debug)]
pub struct Network {
    pub config: TrainConfig,
    /// Number of real attributes `M`; label `M` is none.
    pub attributes: usize,
    pub word_emb: Embedding,
    pub char_emb: Embedding,
    pub char_cnn: CharCnn,
    pub text: BiLstm,
    pub tag_emb: Embedding,
    pub xpath: BiLstm,
    pub leaf_emb: Embedding,
    pub pos_emb: Embedding,
    pub attr_emb: Embedding,
    pub head: Mlp,
}

struct TextCache<T> {
    words: Vec<usize>,
    chars: Vec<(Vec<usize>, CharCnnCache<T>)>,
    lstm: BiLstmCache<T>,
}

enum HeadCache<T> {
    Intra(MlpCache<T>),
    Cross(Vec<MlpCache<T>>),
}

/// Everything the backward pass needs from one forward pass.
pub struct NodeCache<T> {
    x: Option<TextCache<T>>,
    p: Option<TextCache<T>>,
    f: Option<TextCache<T>>,
    e_p: Vec<T>,
    xpath_ids: Vec<usize>,
    xpath: BiLstmCache<T>,
    leaf: usize,
    pos_row: usize,
    head: HeadCache<T>,
}

fn ids(v: &[u32]) -> Vec<usize> {
    v.iter().map(|&i| i as usize).collect()
}

impl Network {
    pub fn new(config: &TrainConfig, vocab: &Vocab, attributes: usize) -> Result<Self> {
        Self::with_sizes(config, vocab.word_rows(), vocab.char_rows(), vocab.tag_rows(), attributes)
    }

    pub fn with_sizes(
        config: &TrainConfig,
        word_rows: usize,
        char_rows: usize,
        tag_rows: usize,
        attributes: usize,
    ) -> Result<Self> {
        config.validate()?;
        if attributes == 0 {
            return Err(Error::Config("at least one attribute is required".into()));
        }
        let c = config;
        let d_enc = c.d_enc();
        let (head_in, head_out, head_name) = match c.head {
            Head::Intra => (c.base_dim() + attributes, attributes + 1, "intra_mlp"),
            Head::Cross => (c.base_dim() + 1 + d_enc, 1, "cross_mlp"),
        };
        Ok(Self {
            config: c.clone(),
            attributes,
            word_emb: Embedding::new("word_emb", word_rows, c.d_w, true),
            char_emb: Embedding::new("char_emb", char_rows, c.d_c, true),
            char_cnn: CharCnn::new("char_cnn", c.d_c, c.cnn_filters, c.kernel),
            text: BiLstm::new("text_lstm", c.d_w + c.cnn_filters, c.lstm_hidden),
            tag_emb: Embedding::new("xpath_tag_emb", tag_rows, c.d_xpath_tag, true),
            xpath: BiLstm::new("xpath_lstm", c.d_xpath_tag, c.d_xpath / 2),
            leaf_emb: Embedding::new("leaf_emb", tag_rows, c.d_leaf, true),
            pos_emb: Embedding::new("pos_emb", c.buckets, c.d_pos, false),
            attr_emb: Embedding::new("attr_emb", attributes + 1, d_enc, false),
            head: Mlp::new(head_name, head_in, c.mlp_hidden, head_out, c.dropout),
        })
    }

    pub fn d_enc(&self) -> usize {
        self.config.d_enc()
    }

    /// Fresh parameters; each layer draws from its own seeded stream.
    pub fn init<T: Real>(&self, seed: u64) -> ParamStore<T> {
        let mut store = ParamStore::new();
        for e in [&self.word_emb, &self.char_emb, &self.tag_emb, &self.leaf_emb, &self.pos_emb, &self.attr_emb] {
            e.init(&mut store, &mut layer_rng(seed, &e.name));
        }
        self.char_cnn.init(&mut store, &mut layer_rng(seed, "char_cnn"));
        self.text.init(&mut store, &mut layer_rng(seed, "text_lstm"));
        self.xpath.init(&mut store, &mut layer_rng(seed, "xpath_lstm"));
        self.head.init(&mut store, &mut layer_rng(seed, &self.head.hidden.weight));
        store
    }

    /// Replaces the attribute table with a freshly initialised one.
    pub fn init_attributes<T: Real>(&self, store: &mut ParamStore<T>, seed: u64) {
        store.remove(&self.attr_emb.name);
        self.attr_emb.init(store, &mut layer_rng(seed, &self.attr_emb.name));
    }

    /// Name and shape of every parameter tensor, name-sorted.
    pub fn expected_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for e in [&self.word_emb, &self.char_emb, &self.tag_emb, &self.leaf_emb, &self.pos_emb, &self.attr_emb] {
            out.push((e.name.clone(), vec![e.rows, e.dim]));
        }
        let cnn = &self.char_cnn;
        out.push((cnn.weight.clone(), vec![cnn.filters, cnn.kernel * cnn.input]));
        out.push((cnn.bias.clone(), vec![cnn.filters]));
        for bi in [&self.text, &self.xpath] {
            for l in [&bi.forward, &bi.backward] {
                out.push((l.w_ih.clone(), vec![4 * l.hidden, l.input]));
                out.push((l.w_hh.clone(), vec![4 * l.hidden, l.hidden]));
                out.push((l.bias.clone(), vec![4 * l.hidden]));
            }
        }
        for lin in [&self.head.hidden, &self.head.output] {
            out.push((lin.weight.clone(), vec![lin.output, lin.input]));
            out.push((lin.bias.clone(), vec![lin.output]));
        }
        out.sort();
        out
    }

    /// Verifies that `store` holds exactly the expected tensors.
    pub fn check<T: Real>(&self, store: &ParamStore<T>) -> Result<()> {
        let expected = self.expected_shapes();
        if store.len() != expected.len() {
            return Err(Error::Config(format!("expected {} tensors, found {}", expected.len(), store.len())));
        }
        for (name, shape) in expected {
            let t = store.get(&name).map_err(|_| Error::Config(format!("missing tensor `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Config(format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(())
    }

    fn text_forward<T: Real>(&self, store: &ParamStore<T>, text: &TextIds) -> Result<(Vec<T>, Option<TextCache<T>>)> {
        if text.is_empty() {
            return Ok((vec![T::zero(); self.d_enc()], None));
        }
        let words = ids(&text.words);
        let width = self.config.d_w + self.config.cnn_filters;
        let mut seq = Vec::with_capacity(words.len() * width);
        let mut chars = Vec::with_capacity(words.len());
        for (k, &w) in words.iter().enumerate() {
            seq.extend(self.word_emb.forward(store, &[w])?);
            let mut c = ids(text.chars.get(k).map(Vec::as_slice).unwrap_or_default());
            if c.is_empty() {
                c.push(PAD as usize);
            }
            let (h, cache) = self.char_cnn.forward(store, &self.char_emb.forward(store, &c)?)?;
            seq.extend(h);
            chars.push((c, cache));
        }
        let (out, lstm) = self.text.run(store, &seq)?;
        Ok((out, Some(TextCache { words, chars, lstm })))
    }

    fn text_backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &TextCache<T>,
        dout: &[T],
        grads: &mut Grads<T>,
    ) -> Result<()> {
        let dseq = self.text.backprop(store, &cache.lstm, dout, grads)?;
        let d_w = self.config.d_w;
        let width = d_w + self.config.cnn_filters;
        for (k, (&w, (chars, cnn))) in cache.words.iter().zip(&cache.chars).enumerate() {
            let row = &dseq[k * width..(k + 1) * width];
            self.word_emb.backward(&[w], &row[..d_w], grads);
            let dchars = self.char_cnn.backward(store, cnn, &row[d_w..], grads)?;
            self.char_emb.backward(chars, &dchars, grads);
        }
        Ok(())
    }

    /// Text encoder output (`e_x`, `e_p` or `e_f`); zeros for empty text.
    pub fn encode_text<T: Real>(&self, store: &ParamStore<T>, text: &TextIds) -> Result<Vec<T>> {
        Ok(self.text_forward(store, text)?.0)
    }

    /// `[e_x; e_p; e_f; e_xpath; e_leaf; e_pos]` plus the partner encoding.
    #[allow(clippy::type_complexity)]
    fn base_forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        f: &NodeFeatures,
    ) -> Result<(Vec<T>, Vec<T>, [Option<TextCache<T>>; 3], Vec<usize>, BiLstmCache<T>, usize, usize)> {
        let c = &self.config;
        let (e_x, x) = self.text_forward(store, &f.node)?;
        let empty = TextIds::default();
        let (partner, friends) = if c.friend_circle { (&f.partner, &f.friends) } else { (&empty, &empty) };
        let (e_p, p) = self.text_forward(store, partner)?;
        let (e_f, fr) = self.text_forward(store, friends)?;
        let xpath_ids = ids(&f.xpath);
        if xpath_ids.is_empty() {
            return Err(Error::Argument(format!("node {} has an empty xpath", f.node_id)));
        }
        let (e_xpath, xpath) = self.xpath.run(store, &self.tag_emb.forward(store, &xpath_ids)?)?;
        let leaf = f.leaf_tag as usize;
        if f.bucket == 0 || f.bucket > c.buckets {
            return Err(Error::Config(format!("position bucket {} outside 1..={}", f.bucket, c.buckets)));
        }
        let pos_row = f.bucket - 1;
        let mut base = Vec::with_capacity(c.base_dim());
        base.extend_from_slice(&e_x);
        base.extend_from_slice(&e_p);
        base.extend_from_slice(&e_f);
        base.extend(e_xpath);
        base.extend(self.leaf_emb.forward(store, &[leaf])?);
        base.extend(self.pos_emb.forward(store, &[pos_row])?);
        Ok((base, e_p, [x, p, fr], xpath_ids, xpath, leaf, pos_row))
    }

    fn attr_row<'a, T: Real>(&self, store: &'a ParamStore<T>, i: usize) -> Result<&'a [T]> {
        let table = store.get(&self.attr_emb.name)?;
        if table.rows() != self.attributes + 1 {
            return Err(Error::Config(format!(
                "attribute table has {} rows, expected {}",
                table.rows(),
                self.attributes + 1
            )));
        }
        Ok(table.row(i))
    }

    /// Node encoding `e_n` as fed to the intra head: the base features
    /// followed by `cos(e_p, attr_i)` for the `M` real attributes.
    pub fn encode_node<T: Real>(&self, store: &ParamStore<T>, f: &NodeFeatures) -> Result<Vec<T>> {
        let (mut e_n, e_p, ..) = self.base_forward(store, f)?;
        for i in 0..self.attributes {
            let cos = if self.config.friend_circle { cosine(&e_p, self.attr_row(store, i)?)? } else { T::zero() };
            e_n.push(cos);
        }
        Ok(e_n)
    }

    /// Logits over `M + 1` labels.
    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<T>,
        f: &NodeFeatures,
        training: bool,
        rng: &mut R,
    ) -> Result<(Vec<T>, NodeCache<T>)> {
        let fc = self.config.friend_circle;
        let (base, e_p, [x, p, fr], xpath_ids, xpath, leaf, pos_row) = self.base_forward(store, f)?;
        let (logits, head) = match self.config.head {
            Head::Intra => {
                let mut input = base;
                for i in 0..self.attributes {
                    input.push(if fc { cosine(&e_p, self.attr_row(store, i)?)? } else { T::zero() });
                }
                let (y, cache) = self.head.forward(store, &input, training, rng)?;
                (y, HeadCache::Intra(cache))
            }
            Head::Cross => {
                let mut logits = Vec::with_capacity(self.attributes + 1);
                let mut caches = Vec::with_capacity(self.attributes + 1);
                for i in 0..=self.attributes {
                    let a = self.attr_row(store, i)?;
                    let mut input = base.clone();
                    input.push(if fc { cosine(&e_p, a)? } else { T::zero() });
                    input.extend_from_slice(a);
                    let (y, cache) = self.head.forward(store, &input, training, rng)?;
                    logits.push(y[0]);
                    caches.push(cache);
                }
                (logits, HeadCache::Cross(caches))
            }
        };
        Ok((logits, NodeCache { x, p, f: fr, e_p, xpath_ids, xpath, leaf, pos_row, head }))
    }

    /// Accumulates parameter gradients given `d loss / d logits`.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &NodeCache<T>,
        dlogits: &[T],
        grads: &mut Grads<T>,
    ) -> Result<()> {
        let c = &self.config;
        let fc = c.friend_circle;
        let base_dim = c.base_dim();
        let d_enc = self.d_enc();
        let mut d_base = vec![T::zero(); base_dim];
        let mut d_ep = vec![T::zero(); d_enc];
        let cos_grad = |i: usize, g: T, d_ep: &mut [T], extra: Option<&[T]>, grads: &mut Grads<T>| -> Result<()> {
            let a = self.attr_row(store, i)?;
            let mut da = match extra {
                Some(e) => e.to_vec(),
                None => vec![T::zero(); d_enc],
            };
            if fc {
                let (dp, dai) = cosine_backward(&cache.e_p, a, g)?;
                d_ep.iter_mut().zip(dp).for_each(|(x, y)| *x += y);
                da.iter_mut().zip(dai).for_each(|(x, y)| *x += y);
            }
            self.attr_emb.backward(&[i], &da, grads);
            Ok(())
        };
        match &cache.head {
            HeadCache::Intra(mlp) => {
                let d_in = self.head.backward(store, mlp, dlogits, grads)?;
                d_base.copy_from_slice(&d_in[..base_dim]);
                if fc {
                    for i in 0..self.attributes {
                        cos_grad(i, d_in[base_dim + i], &mut d_ep, None, grads)?;
                    }
                }
            }
            HeadCache::Cross(mlps) => {
                for (i, mlp) in mlps.iter().enumerate() {
                    let d_in = self.head.backward(store, mlp, &dlogits[i..i + 1], grads)?;
                    d_base.iter_mut().zip(&d_in[..base_dim]).for_each(|(x, &y)| *x += y);
                    cos_grad(i, d_in[base_dim], &mut d_ep, Some(&d_in[base_dim + 1..]), grads)?;
                }
            }
        }
        let (d_ex, rest) = d_base.split_at(d_enc);
        let (d_ep_base, rest) = rest.split_at(d_enc);
        let (d_ef, rest) = rest.split_at(d_enc);
        let (d_xpath, rest) = rest.split_at(c.d_xpath);
        let (d_leaf, d_pos) = rest.split_at(c.d_leaf);
        d_ep.iter_mut().zip(d_ep_base).for_each(|(x, &y)| *x += y);
        if let Some(x) = &cache.x {
            self.text_backward(store, x, d_ex, grads)?;
        }
        if let Some(p) = &cache.p {
            self.text_backward(store, p, &d_ep, grads)?;
        }
        if let Some(f) = &cache.f {
            self.text_backward(store, f, d_ef, grads)?;
        }
        let dseq = self.xpath.backprop(store, &cache.xpath, d_xpath, grads)?;
        self.tag_emb.backward(&cache.xpath_ids, &dseq, grads);
        self.leaf_emb.backward(&[cache.leaf], d_leaf, grads);
        self.pos_emb.backward(&[cache.pos_row], d_pos, grads);
        Ok(())
    }

    /// Cross-entropy loss of one labelled node and its parameter gradients.
    pub fn loss_and_grads<T: Real, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<T>,
        f: &NodeFeatures,
        label: usize,
        rng: &mut R,
    ) -> Result<(T, Grads<T>)> {
        if label > self.attributes {
            return Err(Error::Argument(format!("label {label} outside 0..={}", self.attributes)));
        }
        let (logits, cache) = self.forward(store, f, true, rng)?;
        let probs = softmax(&logits);
        let loss = cross_entropy(&probs, label);
        let mut grads = Grads::new();
        self.backward(store, &cache, &softmax_cross_entropy_grad(&probs, label), &mut grads)?;
        Ok((loss, grads))
    }

    /// Inference-mode label distribution.
    pub fn probabilities<T: Real>(&self, store: &ParamStore<T>, f: &NodeFeatures) -> Result<Vec<T>> {
        // dropout is off at inference, so the generator is never consulted
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(softmax(&self.forward(store, f, false, &mut rng)?.0))
    }

    pub fn logits<T: Real>(&self, store: &ParamStore<T>, f: &NodeFeatures) -> Result<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(store, f, false, &mut rng)?.0)
    }
}
