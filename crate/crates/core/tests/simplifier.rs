mod common;

use std::collections::BTreeSet;

use common::{fixture, oracle_circles, random_tree};
use proptest::prelude::*;
use simpdom::ingest::parse_page;
use simpdom::simplifier::{extract_circles, trim_friends};
use simpdom::NodeClass;

#[test]
fn matches_lca_oracle_on_random_trees() {
    for seed in 0..1000 {
        let tree = random_tree(seed, 50, 6);
        for k in [1, 2, 5] {
            let got: Vec<_> =
                extract_circles(&tree, k).unwrap().into_iter().map(|(id, c)| (id, (c.partner, c.friends))).collect();
            let want: Vec<_> = oracle_circles(&tree, k).into_iter().collect();
            assert_eq!(got, want, "seed {seed}, k {k}");
        }
    }
}

#[test]
fn book_subtree_partner_and_friends() {
    let tree = parse_page(&fixture("book_subtree.htm"), "book").unwrap();
    let find = |text: &str| {
        tree.text_leaves().iter().copied().find(|&id| tree.nodes()[id.0].text.as_deref() == Some(text)).unwrap()
    };
    let author = find("J. K. Rowling");
    let circle = &extract_circles(&tree, 5).unwrap()[&author];
    assert_eq!(circle.partner, Some(find("by")));
    assert!(circle.friends.contains(&find("Harry Potter and the Sorcerer's Stone")));
}

proptest! {
    #[test]
    fn circle_invariants(seed in 0u64..10_000, k in 1usize..7) {
        let tree = random_tree(seed, 50, 6);
        let circles = extract_circles(&tree, k).unwrap();
        for (x, c) in &circles {
            prop_assert_eq!(*x, c.node_id);
            prop_assert!(!c.friends.contains(x));
            prop_assert_ne!(c.partner, Some(*x));
            if let Some(p) = c.partner {
                prop_assert!(!c.friends.contains(&p));
            }
            // every friend's LCA with x lies among x's k closest ancestors
            let ancs = tree.ancestors(*x, k).unwrap();
            for f in &c.friends {
                let fa: BTreeSet<_> = tree.ancestors(*f, usize::MAX).unwrap().into_iter().collect();
                prop_assert!(ancs.iter().any(|a| fa.contains(a)));
            }
            let pos: Vec<usize> = c.friends.iter().map(|f| tree.nodes()[f.0].dfs_position).collect();
            prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert_eq!(&circles, &extract_circles(&tree, k).unwrap());
    }

    #[test]
    fn friends_grow_with_k(seed in 0u64..10_000, a in 1usize..6, extra in 0usize..4) {
        let tree = random_tree(seed, 50, 6);
        let small = extract_circles(&tree, a).unwrap();
        let large = extract_circles(&tree, a + extra).unwrap();
        for (x, c) in &small {
            let with_partner = |c: &simpdom::simplifier::FriendCircle| {
                let mut s: BTreeSet<_> = c.friends.iter().copied().collect();
                s.extend(c.partner);
                s
            };
            prop_assert!(with_partner(c).is_subset(&with_partner(&large[x])));
        }
    }

    // With k at least the tree height the index reaches every leaf, and the
    // partner relation is symmetric among variable nodes.
    #[test]
    fn partners_symmetric_without_depth_cutoff(seed in 0u64..10_000) {
        let tree = random_tree(seed, 50, 6);
        let circles = extract_circles(&tree, 64).unwrap();
        for (x, c) in &circles {
            if let Some(p) = c.partner {
                if tree.nodes()[p.0].class == NodeClass::Variable {
                    prop_assert_eq!(circles[&p].partner, Some(*x));
                }
            }
        }
    }

    #[test]
    fn trimming_bounds(seed in 0u64..10_000, max in 1usize..12) {
        let tree = random_tree(seed, 50, 6);
        for c in extract_circles(&tree, 5).unwrap().values() {
            let t = trim_friends(c, &tree, max);
            prop_assert!(t.friends.len() <= max);
            prop_assert!(t.friends.iter().all(|f| c.friends.contains(f)));
            let x = tree.nodes()[c.node_id.0].dfs_position;
            let worst_kept = t.friends.iter().map(|f| tree.nodes()[f.0].dfs_position.abs_diff(x)).max();
            let dropped = c.friends.iter().filter(|f| !t.friends.contains(f));
            for f in dropped {
                prop_assert!(Some(tree.nodes()[f.0].dfs_position.abs_diff(x)) >= worst_kept);
            }
        }
    }
}
