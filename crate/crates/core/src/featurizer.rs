//! Vocabularies and per-node feature assembly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dom::{DomTree, NodeId};
use crate::ingest::{truncate_words, SiteCorpus, MAX_NODE_WORDS};
use crate::simplifier::FriendCircle;
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const DEFAULT_BUCKETS: usize = 10;
pub const FRIENDS_WORD_CAP: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub node_words: usize,
    pub friends_words: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { node_words: MAX_NODE_WORDS, friends_words: FRIENDS_WORD_CAP }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reserved {
    pub pad: u32,
    pub unk: u32,
}

/// Word, character and tag vocabularies. Ids 0 and 1 are reserved for
/// padding and unknown tokens in all three maps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocab {
    pub reserved: Reserved,
    pub words: BTreeMap<String, u32>,
    pub chars: BTreeMap<String, u32>,
    pub tags: BTreeMap<String, u32>,
}

fn dense(tokens: BTreeSet<String>) -> BTreeMap<String, u32> {
    tokens.into_iter().zip(2u32..).collect()
}

fn kept(counts: BTreeMap<String, usize>, min_count: usize) -> BTreeSet<String> {
    counts.into_iter().filter(|(_, n)| *n >= min_count).map(|(t, _)| t).collect()
}

impl Vocab {
    /// Builds vocabularies from the text leaves and tags of training sites.
    /// Words are lowercased, characters come from the raw tokens. Tokens
    /// seen fewer than `min_count` times map to unknown.
    pub fn build(sites: &[SiteCorpus], min_count: usize) -> Result<Self> {
        Self::from_trees(sites.iter().flat_map(|s| s.pages.iter().map(|p| &p.tree)), min_count)
    }

    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a DomTree>, min_count: usize) -> Result<Self> {
        let mut any = false;
        let mut words: BTreeMap<String, usize> = BTreeMap::new();
        let mut chars: BTreeMap<String, usize> = BTreeMap::new();
        let mut tags: BTreeMap<String, usize> = BTreeMap::new();
        for tree in trees {
            any = true;
            for node in tree.nodes() {
                *tags.entry(node.tag.clone()).or_default() += 1;
                let Some(text) = &node.text else { continue };
                for w in truncate_words(text, MAX_NODE_WORDS).split(' ').filter(|w| !w.is_empty()) {
                    *words.entry(w.to_lowercase()).or_default() += 1;
                    for c in w.chars() {
                        *chars.entry(c.to_string()).or_default() += 1;
                    }
                }
            }
        }
        if !any {
            return Err(Error::Argument("cannot build vocabularies from an empty corpus".into()));
        }
        Ok(Vocab {
            reserved: Reserved { pad: PAD, unk: UNK },
            words: dense(kept(words, min_count)),
            chars: dense(kept(chars, min_count)),
            tags: dense(kept(tags, min_count)),
        })
    }

    /// Checks reserved ids and that each map is dense over `2..len+2`.
    pub fn validate(&self) -> Result<()> {
        if self.reserved != (Reserved { pad: PAD, unk: UNK }) {
            return Err(Error::Config(format!("vocab reserves {:?}, expected pad=0 unk=1", self.reserved)));
        }
        for (name, map) in [("words", &self.words), ("chars", &self.chars), ("tags", &self.tags)] {
            let ids: BTreeSet<u32> = map.values().copied().collect();
            let expected: BTreeSet<u32> = (2..map.len() as u32 + 2).collect();
            if ids != expected {
                return Err(Error::Config(format!("{name} ids are not dense from 2")));
            }
        }
        Ok(())
    }

    pub fn word_rows(&self) -> usize {
        self.words.len() + 2
    }

    pub fn char_rows(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn tag_rows(&self) -> usize {
        self.tags.len() + 2
    }

    pub fn word_id(&self, word: &str) -> u32 {
        self.words.get(&word.to_lowercase()).copied().unwrap_or(UNK)
    }

    pub fn char_id(&self, c: char) -> u32 {
        let mut buf = [0u8; 4];
        self.chars.get(&*c.encode_utf8(&mut buf)).copied().unwrap_or(UNK)
    }

    pub fn tag_id(&self, tag: &str) -> u32 {
        self.tags.get(tag).copied().unwrap_or(UNK)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: Vocab = serde_json::from_str(s)?;
        v.validate()?;
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn encode_text(&self, words: &[String]) -> TextIds {
        TextIds {
            words: words.iter().map(|w| self.word_id(w)).collect(),
            chars: words.iter().map(|w| w.chars().map(|c| self.char_id(c)).collect()).collect(),
        }
    }

    pub fn encode(&self, t: &NodeTokens) -> NodeFeatures {
        NodeFeatures {
            node_id: t.node_id,
            node: self.encode_text(&t.node),
            partner: self.encode_text(&t.partner),
            friends: self.encode_text(&t.friends),
            xpath: t.xpath.iter().map(|tag| self.tag_id(tag)).collect(),
            leaf_tag: self.tag_id(&t.leaf_tag),
            bucket: t.bucket,
        }
    }
}

/// Vocabulary-independent features of one variable node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTokens {
    pub node_id: NodeId,
    pub node: Vec<String>,
    pub partner: Vec<String>,
    pub friends: Vec<String>,
    pub xpath: Vec<String>,
    pub leaf_tag: String,
    pub bucket: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextIds {
    pub words: Vec<u32>,
    /// Character ids per word, parallel to `words`.
    pub chars: Vec<Vec<u32>>,
}

impl TextIds {
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFeatures {
    pub node_id: NodeId,
    pub node: TextIds,
    pub partner: TextIds,
    pub friends: TextIds,
    pub xpath: Vec<u32>,
    pub leaf_tag: u32,
    /// 1-based position bucket.
    pub bucket: usize,
}

/// `ceil(buckets * pos / max)` clamped to `1..=buckets`.
pub fn position_bucket(pos: usize, max: usize, buckets: usize) -> usize {
    if max == 0 || buckets == 0 {
        return 1;
    }
    ((buckets * pos).div_ceil(max)).clamp(1, buckets)
}

/// Position bucket of a text leaf, counting text leaves only.
pub fn node_bucket(tree: &DomTree, id: NodeId, buckets: usize) -> Result<usize> {
    let (pos, max) = tree.text_position(id).ok_or_else(|| Error::Argument(format!("node {id} is not a text leaf")))?;
    Ok(position_bucket(pos, max, buckets))
}

/// Tag of the element owning a text leaf.
pub fn leaf_tag(tree: &DomTree, id: NodeId) -> Result<&str> {
    let node = tree.node(id)?;
    if !node.is_text_leaf() {
        return Err(Error::Argument(format!("node {id} is not a text leaf")));
    }
    Ok(node.owner_tag(tree))
}

pub fn leaf_tag_id(tree: &DomTree, id: NodeId, vocab: &Vocab) -> Result<u32> {
    Ok(vocab.tag_id(leaf_tag(tree, id)?))
}

fn words(tree: &DomTree, id: NodeId, cap: usize) -> Vec<String> {
    tree.nodes()[id.0].text.as_deref().unwrap_or_default().split_whitespace().take(cap).map(String::from).collect()
}

/// Token-level features of a variable node given its (trimmed) circle.
pub fn node_tokens(tree: &DomTree, circle: &FriendCircle, caps: Caps, buckets: usize) -> Result<NodeTokens> {
    let id = circle.node_id;
    let mut friends = Vec::new();
    for &f in &circle.friends {
        friends.extend(words(tree, f, caps.node_words));
    }
    friends.truncate(caps.friends_words);
    Ok(NodeTokens {
        node_id: id,
        node: words(tree, id, caps.node_words),
        partner: circle.partner.map(|p| words(tree, p, caps.node_words)).unwrap_or_default(),
        friends,
        xpath: tree.tag_path(id)?.into_iter().map(String::from).collect(),
        leaf_tag: leaf_tag(tree, id)?.to_string(),
        bucket: node_bucket(tree, id, buckets)?,
    })
}

pub fn featurize(
    tree: &DomTree,
    circle: &FriendCircle,
    vocab: &Vocab,
    caps: Caps,
    buckets: usize,
) -> Result<NodeFeatures> {
    vocab.validate()?;
    Ok(vocab.encode(&node_tokens(tree, circle, caps, buckets)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Gold, SiteCorpus};
    use crate::simplifier::extract_circles;

    fn site(pages: &[&str]) -> SiteCorpus {
        let raw =
            pages.iter().enumerate().map(|(i, h)| (format!("p{i}"), h.as_bytes().to_vec(), Gold::new())).collect();
        SiteCorpus::build("v", "s", vec!["a".into()], raw).unwrap()
    }

    #[test]
    fn buckets() {
        assert_eq!(position_bucket(2, 4, 10), 5);
        assert_eq!(position_bucket(4, 4, 10), 10);
        assert_eq!(position_bucket(1, 1, 10), 10);
        assert_eq!(position_bucket(1, 100, 10), 1);
        let all: BTreeSet<usize> = (1..=37).map(|p| position_bucket(p, 37, 10)).collect();
        assert_eq!(all, (1..=10).collect());
    }

    #[test]
    fn min_count_and_unknowns() {
        let s = site(&["<p>by</p><p>By x</p>", "<p>by</p><p>y</p>"]);
        let v = Vocab::build(std::slice::from_ref(&s), 2).unwrap();
        assert_ne!(v.word_id("by"), UNK);
        assert_eq!(v.word_id("x"), UNK);
        assert_eq!(v.word_id("never"), UNK);
        assert_eq!(v.tag_id("blink"), UNK);
        v.validate().unwrap();
        assert_eq!(Vocab::build(&[s], 2).unwrap().to_json().unwrap(), v.to_json().unwrap());
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(Vocab::build(&[], 1).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let v = Vocab::build(&[site(&["<td>a b</td>"])], 1).unwrap();
        assert_eq!(Vocab::from_json(&v.to_json().unwrap()).unwrap(), v);
        let mut bad = v.clone();
        bad.reserved.unk = 5;
        assert!(matches!(Vocab::from_json(&bad.to_json().unwrap()), Err(Error::Config(_))));
        let mut gap = v.clone();
        gap.words.insert("zz".into(), 99);
        assert!(gap.validate().is_err());
    }

    #[test]
    fn friends_are_capped() {
        let row: Vec<String> = (0..15).map(|i| format!("w{i}")).collect();
        let mut html = String::from("<div><p>target</p>");
        for _ in 0..10 {
            html += &format!("<p>{}</p>", row.join(" "));
        }
        html += "</div>";
        let s = site(&[&html]);
        let tree = &s.pages[0].tree;
        let x = tree.find_xpath("/html[1]/div[1]/p[1]").unwrap();
        let c = &extract_circles(tree, 5).unwrap()[&x];
        assert_eq!(c.friends.len(), 10);
        let t = node_tokens(tree, c, Caps::default(), 10).unwrap();
        assert_eq!(t.friends.len(), 50);
        assert!(t.partner.is_empty());
        assert_eq!(t.node, vec!["target"]);
    }

    #[test]
    fn leaf_tags() {
        let s = site(&["<div><h1>T</h1>x<span>y</span></div>"]);
        let tree = &s.pages[0].tree;
        let v = Vocab::build(std::slice::from_ref(&s), 1).unwrap();
        let h1 = tree.find_xpath("/html[1]/div[1]/h1[1]").unwrap();
        assert_eq!(leaf_tag_id(tree, h1, &v).unwrap(), v.tag_id("h1"));
        let run = tree.find_xpath("/html[1]/div[1]/text()[1]").unwrap();
        assert_eq!(leaf_tag(tree, run).unwrap(), "div");
        assert!(leaf_tag(tree, tree.root()).is_err());
    }
}
