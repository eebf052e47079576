#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simpdom::{DomNode, DomTree, NodeClass, NodeId};

/// Random tree with at most `max_nodes` nodes and `max_children` children
/// per node. Childless non-root nodes become text leaves with probability
/// 0.8; text leaves are variable with probability 0.7.
pub fn random_tree(seed: u64, max_nodes: usize, max_children: usize) -> DomTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_nodes);
    let tags = ["div", "td", "tr", "p", "span", "li"];
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    for i in 1..n {
        let open: Vec<usize> = (0..i).filter(|&p| children[p].len() < max_children).collect();
        let p = open[rng.random_range(0..open.len())];
        parent.push(Some(p));
        children.push(Vec::new());
        children[p].push(i);
    }
    let nodes = (0..n)
        .map(|i| {
            let leaf = i != 0 && children[i].is_empty() && rng.random_bool(0.8);
            let text = leaf.then(|| format!("t{i}"));
            let class = match (leaf, rng.random_bool(0.7)) {
                (false, _) => NodeClass::NonText,
                (true, true) => NodeClass::Variable,
                (true, false) => NodeClass::Fixed,
            };
            DomNode {
                id: NodeId(i),
                parent: parent[i].map(NodeId),
                tag: tags[rng.random_range(0..tags.len())].to_string(),
                text,
                children: children[i].iter().copied().map(NodeId).collect(),
                dfs_position: 0,
                indexed_xpath: String::new(),
                class,
            }
        })
        .collect();
    DomTree::from_nodes(format!("random-{seed}"), NodeId(0), nodes).unwrap()
}

fn root_path(tree: &DomTree, id: NodeId) -> Vec<NodeId> {
    let mut p = tree.ancestors(id, usize::MAX).unwrap();
    p.reverse();
    p.push(id);
    p
}

/// Brute-force circles from pairwise lowest common ancestors. A leaf `y` is
/// a friend of `x` when both are within `k` edges of their LCA. The partner
/// is the unique friend whose LCA with `x` is the closest one.
pub fn oracle_circles(tree: &DomTree, k: usize) -> BTreeMap<NodeId, (Option<NodeId>, Vec<NodeId>)> {
    let mut out = BTreeMap::new();
    for &x in tree.text_leaves() {
        if tree.nodes()[x.0].class != NodeClass::Variable {
            continue;
        }
        let px = root_path(tree, x);
        let mut close = Vec::new();
        for &y in tree.text_leaves() {
            if y == x {
                continue;
            }
            let py = root_path(tree, y);
            let common = px.iter().zip(&py).take_while(|(a, b)| a == b).count();
            let (dx, dy) = (px.len() - common, py.len() - common);
            if dx <= k && dy <= k {
                close.push((y, dx));
            }
        }
        let nearest = close.iter().map(|c| c.1).min();
        let at_nearest: Vec<NodeId> = close.iter().filter(|c| Some(c.1) == nearest).map(|c| c.0).collect();
        let partner = (at_nearest.len() == 1).then(|| at_nearest[0]);
        let mut friends: Vec<NodeId> = close.iter().map(|c| c.0).filter(|&y| Some(y) != partner).collect();
        friends.sort_by_key(|f| tree.nodes()[f.0].dfs_position);
        out.insert(x, (partner, friends));
    }
    out
}

pub fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

pub mod grad;
