//! Per-site preprocessing shared by training, evaluation and the on-disk
//! cache: friend circles and vocabulary-independent node tokens.

use serde::{Deserialize, Serialize};

use crate::dom::DomTree;
use crate::exec::Exec;
use crate::featurizer::{node_tokens, Caps, NodeTokens};
use crate::ingest::{Gold, SiteCorpus};
use crate::simplifier::{circles_for, FriendCircle};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepParams {
    pub k: usize,
    pub max_friends: usize,
    pub caps: Caps,
    pub buckets: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedPage {
    pub page_id: String,
    pub tree: DomTree,
    pub gold: Gold,
    /// Trimmed circles of the variable nodes, in DFS order.
    pub circles: Vec<FriendCircle>,
    /// Parallel to `circles`.
    pub tokens: Vec<NodeTokens>,
    /// Parallel to `circles`; `attributes.len()` means none.
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedSite {
    pub vertical: String,
    pub site_id: String,
    pub attributes: Vec<String>,
    pub pages: Vec<PreparedPage>,
}

impl PreparedSite {
    pub fn trees(&self) -> impl Iterator<Item = &DomTree> {
        self.pages.iter().map(|p| &p.tree)
    }
}

/// Circles and tokens for every variable node of one tree.
pub fn prepare_tree(tree: &DomTree, params: PrepParams) -> Result<(Vec<FriendCircle>, Vec<NodeTokens>)> {
    let circles: Vec<FriendCircle> = circles_for(tree, params.k, params.max_friends)?.into_values().collect();
    let tokens =
        circles.iter().map(|c| node_tokens(tree, c, params.caps, params.buckets)).collect::<Result<Vec<_>>>()?;
    Ok((circles, tokens))
}

pub fn prepare_site(site: &SiteCorpus, params: PrepParams) -> Result<PreparedSite> {
    let mut pages = Vec::with_capacity(site.pages.len());
    for page in &site.pages {
        let (circles, tokens) = prepare_tree(&page.tree, params)?;
        let labels = circles
            .iter()
            .map(|c| {
                page.labels.iter().find(|l| l.node_id == c.node_id).map(|l| l.label).ok_or_else(|| {
                    Error::Structure(format!("page `{}`: node {} has no label", page.page_id, c.node_id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        pages.push(PreparedPage {
            page_id: page.page_id.clone(),
            tree: page.tree.clone(),
            gold: page.gold.clone(),
            circles,
            tokens,
            labels,
        });
    }
    Ok(PreparedSite {
        vertical: site.vertical.clone(),
        site_id: site.site_id.clone(),
        attributes: site.attributes.clone(),
        pages,
    })
}

pub fn prepare_sites(sites: &[SiteCorpus], params: PrepParams, exec: Exec) -> Result<Vec<PreparedSite>> {
    exec.try_map(sites, |s| prepare_site(s, params))
}
