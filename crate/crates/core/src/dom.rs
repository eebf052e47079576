//! Filtered DOM trees: nodes, indexed XPaths, ancestor walks and DFS
//! positions.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tag used for text runs that sit between element siblings (mixed content).
pub const TEXT_TAG: &str = "text()";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeClass {
    /// Text leaf whose content changes across a site's pages.
    Variable,
    /// Text leaf that is constant across a site's pages.
    Fixed,
    NonText,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub tag: String,
    pub text: Option<String>,
    pub children: Vec<NodeId>,
    /// 1-based pre-order position.
    pub dfs_position: usize,
    pub indexed_xpath: String,
    pub class: NodeClass,
}

impl DomNode {
    pub fn is_text_leaf(&self) -> bool {
        self.text.is_some()
    }

    /// Tag of the element that owns this node's text: the node itself, or the
    /// parent element for a mixed-content `text()` run.
    pub fn owner_tag<'a>(&'a self, tree: &'a DomTree) -> &'a str {
        match (self.tag.as_str(), self.parent) {
            (TEXT_TAG, Some(p)) => &tree.nodes[p.0].tag,
            (tag, _) => tag,
        }
    }
}

/// One parsed page. Node ids are dense indices into `nodes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub struct DomTree {
    page_id: String,
    nodes: Vec<DomNode>,
    root: NodeId,
    text_leaves: Vec<NodeId>,
    xpaths: HashMap<String, NodeId>,
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    page_id: String,
    root: NodeId,
    nodes: Vec<DomNode>,
}

impl TryFrom<RawTree> for DomTree {
    type Error = Error;

    fn try_from(raw: RawTree) -> Result<Self> {
        DomTree::from_nodes(raw.page_id, raw.root, raw.nodes)
    }
}

impl From<DomTree> for RawTree {
    fn from(t: DomTree) -> Self {
        RawTree { page_id: t.page_id, root: t.root, nodes: t.nodes }
    }
}

impl DomTree {
    /// Validates externally supplied nodes: ids must be dense, parent/child
    /// links consistent and acyclic with a single root. DFS positions and
    /// indexed XPaths are recomputed; classes are kept but must agree with
    /// the presence of text.
    pub fn from_nodes(page_id: String, root: NodeId, mut nodes: Vec<DomNode>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0 != i {
                return Err(Error::Structure(format!("node at index {i} has id {}", n.id)));
            }
            for c in &n.children {
                let child = nodes.get(c.0).ok_or(Error::UnknownNode(c.0))?;
                if child.parent != Some(n.id) {
                    return Err(Error::Structure(format!("child {c} of {} does not point back", n.id)));
                }
            }
            if let Some(p) = n.parent {
                let parent = nodes.get(p.0).ok_or(Error::UnknownNode(p.0))?;
                if !parent.children.contains(&n.id) {
                    return Err(Error::Structure(format!("parent {p} does not list {}", n.id)));
                }
            }
            if n.text.is_some() != (n.class != NodeClass::NonText) {
                return Err(Error::Structure(format!(
                    "node {} has class {:?} inconsistent with its text",
                    n.id, n.class
                )));
            }
            if n.text.is_some() && !n.children.is_empty() {
                return Err(Error::Structure(format!("text node {} has children", n.id)));
            }
        }
        let roots: Vec<_> = nodes.iter().filter(|n| n.parent.is_none()).map(|n| n.id).collect();
        if roots != [root] {
            return Err(Error::Structure(format!("expected single root {root}, found {roots:?}")));
        }
        let order = dfs_order_of(&nodes, root)?;
        if order.len() != nodes.len() {
            return Err(Error::Structure(format!(
                "{} of {} nodes unreachable from the root",
                nodes.len() - order.len(),
                nodes.len()
            )));
        }
        assign_positions(&mut nodes, &order);
        assign_xpaths(&mut nodes, root);
        let text_leaves = order.iter().copied().filter(|id| nodes[id.0].text.is_some()).collect();
        let xpaths = nodes.iter().map(|n| (n.indexed_xpath.clone(), n.id)).collect();
        Ok(Self { page_id, nodes, root, text_leaves, xpaths })
    }

    pub fn page_id(&self) -> &str {
        &self.page_id
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&DomNode> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn nodes(&self) -> &[DomNode] {
        &self.nodes
    }

    /// Text leaves (variable and fixed) in DFS order.
    pub fn text_leaves(&self) -> &[NodeId] {
        &self.text_leaves
    }

    pub fn variable_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.text_leaves.iter().copied().filter(|id| self.nodes[id.0].class == NodeClass::Variable)
    }

    pub fn find_xpath(&self, xpath: &str) -> Option<NodeId> {
        self.xpaths.get(xpath).copied()
    }

    pub(crate) fn set_class(&mut self, id: NodeId, class: NodeClass) {
        self.nodes[id.0].class = class;
    }

    pub fn depth(&self, id: NodeId) -> Result<usize> {
        Ok(self.ancestors(id, usize::MAX)?.len())
    }

    /// Tags from the root down to `id` inclusive, without sibling indices.
    pub fn tag_path(&self, id: NodeId) -> Result<Vec<&str>> {
        let mut path: Vec<&str> =
            self.ancestors(id, usize::MAX)?.iter().map(|a| self.nodes[a.0].tag.as_str()).collect();
        path.reverse();
        path.push(&self.nodes[id.0].tag);
        Ok(path)
    }

    /// Up to `k` ancestors of `id`, nearest first. Never includes `id`.
    pub fn ancestors(&self, id: NodeId, k: usize) -> Result<Vec<NodeId>> {
        let mut out = Vec::new();
        let mut cur = self.node(id)?.parent;
        while let Some(p) = cur {
            if out.len() == k {
                break;
            }
            out.push(p);
            cur = self.nodes[p.0].parent;
        }
        Ok(out)
    }

    /// Pre-order traversal with children in document order.
    pub fn dfs_order(&self) -> Result<Vec<NodeId>> {
        dfs_order_of(&self.nodes, self.root)
    }

    /// 1-based rank of a text leaf among the page's text leaves in DFS
    /// order, plus the total number of text leaves.
    pub fn text_position(&self, id: NodeId) -> Option<(usize, usize)> {
        let pos = self.nodes.get(id.0)?.dfs_position;
        self.text_leaves
            .binary_search_by_key(&pos, |l| self.nodes[l.0].dfs_position)
            .ok()
            .map(|i| (i + 1, self.text_leaves.len()))
    }
}

fn dfs_order_of(nodes: &[DomNode], root: NodeId) -> Result<Vec<NodeId>> {
    let mut seen = vec![false; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        let node = nodes.get(id.0).ok_or(Error::UnknownNode(id.0))?;
        if std::mem::replace(&mut seen[id.0], true) {
            return Err(Error::Structure(format!("cycle or shared child at node {id}")));
        }
        order.push(id);
        stack.extend(node.children.iter().rev());
    }
    Ok(order)
}

fn assign_positions(nodes: &mut [DomNode], order: &[NodeId]) {
    for (i, id) in order.iter().enumerate() {
        nodes[id.0].dfs_position = i + 1;
    }
}

fn assign_xpaths(nodes: &mut [DomNode], root: NodeId) {
    nodes[root.0].indexed_xpath = format!("/{}[1]", nodes[root.0].tag);
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        let prefix = nodes[id.0].indexed_xpath.clone();
        let children = nodes[id.0].children.clone();
        let mut counts: HashMap<String, usize> = HashMap::new();
        for c in &children {
            let tag = nodes[c.0].tag.clone();
            let n = counts.entry(tag.clone()).or_insert(0);
            *n += 1;
            nodes[c.0].indexed_xpath = format!("{prefix}/{tag}[{n}]");
        }
        stack.extend(children);
    }
}

/// Incremental tree construction. Children are appended in document order;
/// `build` assigns DFS positions and XPaths. Text leaves start out
/// [`NodeClass::Variable`].
#[derive(Debug)]
pub struct TreeBuilder {
    page_id: String,
    nodes: Vec<DomNode>,
}

impl TreeBuilder {
    pub fn new(page_id: impl Into<String>, root_tag: &str) -> Self {
        let mut b = Self { page_id: page_id.into(), nodes: Vec::new() };
        b.push(None, root_tag, None);
        b
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    fn push(&mut self, parent: Option<NodeId>, tag: &str, text: Option<String>) -> NodeId {
        let id = NodeId(self.nodes.len());
        let class = if text.is_some() { NodeClass::Variable } else { NodeClass::NonText };
        self.nodes.push(DomNode {
            id,
            parent,
            tag: tag.to_ascii_lowercase(),
            text,
            children: Vec::new(),
            dfs_position: 0,
            indexed_xpath: String::new(),
            class,
        });
        if let Some(p) = parent {
            self.nodes[p.0].children.push(id);
        }
        id
    }

    pub fn element(&mut self, parent: NodeId, tag: &str) -> NodeId {
        self.push(Some(parent), tag, None)
    }

    pub fn text_leaf(&mut self, parent: NodeId, tag: &str, text: impl Into<String>) -> NodeId {
        self.push(Some(parent), tag, Some(text.into()))
    }

    pub fn build(self) -> Result<DomTree> {
        DomTree::from_nodes(self.page_id, NodeId(0), self.nodes)
    }
}
