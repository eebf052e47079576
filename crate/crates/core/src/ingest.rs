//! Corpus loading: page parsing, variable/fixed node detection and gold
//! label alignment.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dom::{DomTree, NodeClass, NodeId};
use crate::exec::Exec;
pub use crate::html::{normalize_text, parse_html as parse_page};
use crate::{Error, Result};

/// Word cap applied to every node's text before encoding.
pub const MAX_NODE_WORDS: usize = 15;

/// Gold values per attribute name for one page.
pub type Gold = BTreeMap<String, Vec<String>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLabel {
    pub node_id: NodeId,
    /// Attribute index, or `M` (the attribute count) for none.
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub page_id: String,
    pub tree: DomTree,
    pub gold: Gold,
    /// One label per variable node, in DFS order.
    pub labels: Vec<NodeLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteCorpus {
    pub vertical: String,
    pub site_id: String,
    pub attributes: Vec<String>,
    /// Sorted by page id.
    pub pages: Vec<Page>,
}

impl SiteCorpus {
    pub fn none_label(&self) -> usize {
        self.attributes.len()
    }

    /// Parses, classifies and labels a site's raw pages.
    pub fn build(
        vertical: impl Into<String>,
        site_id: impl Into<String>,
        attributes: Vec<String>,
        mut raw: Vec<(String, Vec<u8>, Gold)>,
    ) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Schema("vertical has no attributes".into()));
        }
        raw.sort_by(|a, b| a.0.cmp(&b.0));
        let mut trees = raw.iter().map(|(id, html, _)| parse_page(html, id)).collect::<Result<Vec<_>>>()?;
        classify_variable_nodes(&mut trees)?;
        let pages = trees
            .into_iter()
            .zip(raw)
            .map(|(tree, (page_id, _, gold))| {
                let labels = align_gold_labels(&tree, &gold, &attributes)?;
                Ok(Page { page_id, tree, gold, labels })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { vertical: vertical.into(), site_id: site_id.into(), attributes, pages })
    }
}

/// Marks each text leaf fixed or variable. A leaf is fixed when its indexed
/// XPath carries a text leaf in at least two pages and the text is identical
/// in all of them.
pub fn classify_variable_nodes(pages: &mut [DomTree]) -> Result<()> {
    if pages.is_empty() {
        return Err(Error::Argument("cannot classify nodes of an empty page list".into()));
    }
    // xpath -> (pages seen, shared text if still constant)
    let mut seen: HashMap<String, (usize, Option<String>)> = HashMap::new();
    for tree in pages.iter() {
        for &id in tree.text_leaves() {
            let node = &tree.nodes()[id.0];
            let text = node.text.as_deref().unwrap_or_default();
            seen.entry(node.indexed_xpath.clone())
                .and_modify(|(n, shared)| {
                    *n += 1;
                    if shared.as_deref() != Some(text) {
                        *shared = None;
                    }
                })
                .or_insert_with(|| (1, Some(text.to_string())));
        }
    }
    for tree in pages.iter_mut() {
        let leaves = tree.text_leaves().to_vec();
        for id in leaves {
            let fixed = matches!(seen.get(&tree.nodes()[id.0].indexed_xpath), Some((n, Some(_))) if *n >= 2);
            tree.set_class(id, if fixed { NodeClass::Fixed } else { NodeClass::Variable });
        }
    }
    Ok(())
}

/// First `max_words` whitespace-delimited words, single-space joined.
pub fn truncate_words(text: &str, max_words: usize) -> String {
    text.split_whitespace().take(max_words).collect::<Vec<_>>().join(" ")
}

/// [`truncate_words`] at the default node cap of 15.
pub fn truncate_text(text: &str) -> String {
    truncate_words(text, MAX_NODE_WORDS)
}

/// Labels every variable node by exact match of its text against the
/// normalized gold values.
pub fn align_gold_labels(tree: &DomTree, gold: &Gold, attributes: &[String]) -> Result<Vec<NodeLabel>> {
    let mut values: HashMap<String, Vec<usize>> = HashMap::new();
    for (attr, vals) in gold {
        let idx = attributes
            .iter()
            .position(|a| a == attr)
            .ok_or_else(|| Error::Schema(format!("page `{}`: unknown attribute `{attr}`", tree.page_id())))?;
        for v in vals {
            let hits = values.entry(normalize_text(v)).or_default();
            if !hits.contains(&idx) {
                hits.push(idx);
            }
        }
    }
    let none = attributes.len();
    Ok(tree
        .variable_nodes()
        .map(|id| {
            let text = tree.nodes()[id.0].text.as_deref().unwrap_or_default();
            let label = match values.get(text) {
                Some(hits) => {
                    if hits.len() > 1 {
                        warn!(
                            "page `{}`: text {text:?} matches several attributes, using `{}`",
                            tree.page_id(),
                            attributes[*hits.iter().min().unwrap()]
                        );
                    }
                    *hits.iter().min().unwrap()
                }
                None => none,
            };
            NodeLabel { node_id: id, label }
        })
        .collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthLine {
    page: String,
    attributes: Gold,
}

pub fn read_attributes(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let attrs: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if attrs.is_empty() {
        return Err(Error::Format { path: path.into(), line: 1, msg: "no attributes listed".into() });
    }
    Ok(attrs)
}

pub fn read_ground_truth(path: &Path) -> Result<BTreeMap<String, Gold>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GroundTruthLine = serde_json::from_str(line).map_err(|e| Error::Format {
            path: path.into(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if out.insert(parsed.page.clone(), parsed.attributes).is_some() {
            return Err(Error::Format {
                path: path.into(),
                line: i + 1,
                msg: format!("duplicate page `{}`", parsed.page),
            });
        }
    }
    Ok(out)
}

fn sorted_dirs(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if entry.path().is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Site directory names of a vertical, sorted.
pub fn list_sites(root: &Path, vertical: &str) -> Result<Vec<String>> {
    Ok(sorted_dirs(&root.join(vertical))?.into_iter().map(|(name, _)| name).collect())
}

/// Raw inputs of one site: page bytes plus gold, sorted by page id.
pub fn read_site_raw(root: &Path, vertical: &str, site: &str) -> Result<Vec<(String, Vec<u8>, Gold)>> {
    let dir = root.join(vertical).join(site);
    let gt_path = dir.join("groundtruth.jsonl");
    let mut gold = read_ground_truth(&gt_path)?;
    let pages_dir = dir.join("pages");
    let mut raw = Vec::new();
    for entry in fs::read_dir(&pages_dir).map_err(|e| Error::io(&pages_dir, e))? {
        let path = entry.map_err(|e| Error::io(&pages_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("htm") {
            continue;
        }
        let page_id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let g = gold.remove(&page_id).unwrap_or_default();
        raw.push((page_id, bytes, g));
    }
    if let Some(page) = gold.keys().next() {
        return Err(Error::Format { path: gt_path, line: 0, msg: format!("ground truth for missing page `{page}`") });
    }
    raw.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(raw)
}

pub fn load_site(root: &Path, vertical: &str, site: &str, attributes: &[String]) -> Result<SiteCorpus> {
    SiteCorpus::build(vertical, site, attributes.to_vec(), read_site_raw(root, vertical, site)?)
}

/// Loads every site of one vertical, sorted by site id.
pub fn load_vertical(root: &Path, vertical: &str, exec: Exec) -> Result<Vec<SiteCorpus>> {
    let attributes = read_attributes(&root.join(vertical).join("attributes.txt"))?;
    let sites = list_sites(root, vertical)?;
    exec.try_map(&sites, |site| load_site(root, vertical, site, &attributes))
}

/// Loads all verticals under `root`, sorted by vertical then site.
pub fn load_corpus(root: &Path, exec: Exec) -> Result<Vec<SiteCorpus>> {
    let mut out = Vec::new();
    for (vertical, _) in sorted_dirs(root)? {
        out.extend(load_vertical(root, &vertical, exec)?);
    }
    Ok(out)
}
