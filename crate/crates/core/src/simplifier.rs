//! Friend circles: for every variable node, the partner (the only other text
//! leaf under its nearest informative ancestor) and the friends (text leaves
//! under any of its `k` closest ancestors).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dom::{DomTree, NodeClass, NodeId};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_FRIENDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendCircle {
    pub node_id: NodeId,
    pub partner: Option<NodeId>,
    /// Sorted by DFS position; never contains the node or its partner.
    pub friends: Vec<NodeId>,
}

/// Circles for all variable nodes, keyed by node id.
///
/// Every text leaf, fixed ones included, is indexed under each of its `k`
/// closest ancestors. For a variable node the ancestors are then walked
/// closest first; at each step the other leaves indexed there form `DESC`.
/// The first time `DESC` is non-empty it becomes the partner if it holds
/// exactly one node. Friends accumulate every `DESC`.
pub fn extract_circles(tree: &DomTree, k: usize) -> Result<BTreeMap<NodeId, FriendCircle>> {
    if k < 1 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let mut indexed: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for &leaf in tree.text_leaves() {
        for anc in tree.ancestors(leaf, k)? {
            indexed.entry(anc).or_default().push(leaf);
        }
    }
    let mut out = BTreeMap::new();
    for x in tree.variable_nodes() {
        let mut partner = None;
        let mut friends = BTreeSet::new();
        for anc in tree.ancestors(x, k)? {
            let desc: Vec<NodeId> = indexed[&anc].iter().copied().filter(|&l| l != x).collect();
            if desc.len() == 1 && partner.is_none() && friends.is_empty() {
                partner = Some(desc[0]);
            }
            friends.extend(desc);
        }
        if let Some(p) = partner {
            friends.remove(&p);
        }
        // leaves were indexed in DFS order, so id order is not position
        // order in general; sort explicitly
        let mut friends: Vec<NodeId> = friends.into_iter().collect();
        friends.sort_by_key(|f| tree.nodes()[f.0].dfs_position);
        out.insert(x, FriendCircle { node_id: x, partner, friends });
    }
    Ok(out)
}

/// Keeps the `max_friends` friends closest to the node in DFS position,
/// preferring the earlier one on ties.
pub fn trim_friends(circle: &FriendCircle, tree: &DomTree, max_friends: usize) -> FriendCircle {
    if circle.friends.len() <= max_friends {
        return circle.clone();
    }
    let pos = |id: NodeId| tree.nodes()[id.0].dfs_position;
    let x = pos(circle.node_id);
    let mut friends = circle.friends.clone();
    friends.sort_by_key(|&f| (pos(f).abs_diff(x), pos(f)));
    friends.truncate(max_friends);
    friends.sort_by_key(|&f| pos(f));
    FriendCircle { friends, ..circle.clone() }
}

/// Extracts and trims in one go.
pub fn circles_for(tree: &DomTree, k: usize, max_friends: usize) -> Result<BTreeMap<NodeId, FriendCircle>> {
    Ok(extract_circles(tree, k)?.into_iter().map(|(id, c)| (id, trim_friends(&c, tree, max_friends))).collect())
}

/// Whether the node at `id` is a fixed text node.
pub fn is_fixed(tree: &DomTree, id: NodeId) -> bool {
    tree.nodes().get(id.0).is_some_and(|n| n.class == NodeClass::Fixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::TreeBuilder;

    #[test]
    fn single_leaf() {
        let mut b = TreeBuilder::new("p", "html");
        let x = b.text_leaf(b.root(), "p", "only");
        let t = b.build().unwrap();
        let c = &extract_circles(&t, 5).unwrap()[&x];
        assert_eq!(c.partner, None);
        assert!(c.friends.is_empty());
    }

    #[test]
    fn two_leaves_partner_each_other() {
        let mut b = TreeBuilder::new("p", "html");
        let a = b.text_leaf(b.root(), "p", "a");
        let bb = b.text_leaf(b.root(), "p", "b");
        let t = b.build().unwrap();
        let cs = extract_circles(&t, 5).unwrap();
        assert_eq!(cs[&a].partner, Some(bb));
        assert_eq!(cs[&bb].partner, Some(a));
        assert!(cs[&a].friends.is_empty() && cs[&bb].friends.is_empty());
    }

    #[test]
    fn k_zero_rejected() {
        let t = TreeBuilder::new("p", "html").build().unwrap();
        assert!(matches!(extract_circles(&t, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn partner_needs_first_nonempty_step() {
        // x's parent holds x, y, z: no partner even though a wider ancestor
        // later contains more nodes
        let mut b = TreeBuilder::new("p", "html");
        let div = b.element(b.root(), "div");
        let x = b.text_leaf(div, "p", "x");
        b.text_leaf(div, "p", "y");
        b.text_leaf(div, "p", "z");
        let t = b.build().unwrap();
        let c = &extract_circles(&t, 5).unwrap()[&x];
        assert_eq!(c.partner, None);
        assert_eq!(c.friends.len(), 2);
    }

    fn row_tree(n: usize) -> (DomTree, NodeId) {
        let mut b = TreeBuilder::new("p", "html");
        let div = b.element(b.root(), "div");
        let mut ids = Vec::new();
        for i in 0..n {
            ids.push(b.text_leaf(div, "p", format!("t{i}")));
        }
        (b.build().unwrap(), ids[n / 2])
    }

    #[test]
    fn trim_keeps_nearest() {
        let (t, x) = row_tree(15);
        let c = &extract_circles(&t, 5).unwrap()[&x];
        assert_eq!(c.friends.len(), 14);
        let trimmed = trim_friends(c, &t, 10);
        let xp = t.nodes()[x.0].dfs_position;
        let dists: Vec<usize> = trimmed.friends.iter().map(|f| t.nodes()[f.0].dfs_position.abs_diff(xp)).collect();
        assert_eq!(trimmed.friends.len(), 10);
        assert!(dists.iter().all(|&d| d <= 5));
        assert!(trimmed.friends.windows(2).all(|w| t.nodes()[w[0].0].dfs_position < t.nodes()[w[1].0].dfs_position));
        let small = trim_friends(c, &t, 20);
        assert_eq!(&small, c);
    }

    #[test]
    fn trim_tie_prefers_smaller_position() {
        // x in the middle of 5 siblings: friends at distance 1,1,2,2; keep 3
        let (t, x) = row_tree(5);
        let c = &extract_circles(&t, 5).unwrap()[&x];
        let trimmed = trim_friends(c, &t, 3);
        let xp = t.nodes()[x.0].dfs_position;
        let pos: Vec<usize> = trimmed.friends.iter().map(|f| t.nodes()[f.0].dfs_position).collect();
        assert_eq!(pos, vec![xp - 2, xp - 1, xp + 1]);
    }
}
