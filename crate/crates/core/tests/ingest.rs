mod common;

use std::fs;

use common::fixture;
use proptest::prelude::*;
use simpdom::cache::{entry_path, load_or_build_site, load_prepared_vertical, CacheStatus};
use simpdom::featurizer::{leaf_tag, node_tokens, Caps, Vocab};
use simpdom::html::serialize;
use simpdom::ingest::{classify_variable_nodes, load_corpus, parse_page, read_attributes, read_ground_truth};
use simpdom::prepare::PrepParams;
use simpdom::simplifier::circles_for;
use simpdom::{synth, Error, Exec, NodeClass};

fn params() -> PrepParams {
    PrepParams { k: 5, max_friends: 10, caps: Caps { node_words: 15, friends_words: 50 }, buckets: 10 }
}

#[test]
fn loads_written_corpus() {
    let dir = tempfile::tempdir().unwrap();
    synth::book(3, 6).write(dir.path()).unwrap();
    synth::movie(4, 5).write(dir.path()).unwrap();
    let corpus = load_corpus(dir.path(), Exec::Parallel).unwrap();
    let ids: Vec<_> = corpus.iter().map(|s| (s.vertical.as_str(), s.site_id.as_str(), s.pages.len())).collect();
    assert_eq!(
        ids,
        vec![
            ("book", "book-list-shop", 6),
            ("book", "book-table-shop", 6),
            ("movie", "movie-list-shop", 5),
            ("movie", "movie-table-shop", 5)
        ]
    );
    assert_eq!(corpus, load_corpus(dir.path(), Exec::Sequential).unwrap());
    assert_eq!(
        read_attributes(&dir.path().join("movie/attributes.txt")).unwrap(),
        ["title", "director", "genre", "year"]
    );
}

#[test]
fn every_gold_value_is_aligned() {
    for site in synth::book(5, 8).build().unwrap() {
        for page in &site.pages {
            for attr in page.gold.keys() {
                let idx = site.attributes.iter().position(|a| a == attr).unwrap();
                assert_eq!(page.labels.iter().filter(|l| l.label == idx).count(), 1, "{} {attr}", page.page_id);
            }
        }
    }
}

#[test]
fn missing_ground_truth_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    synth::book(3, 2).write(dir.path()).unwrap();
    fs::remove_file(dir.path().join("book/book-list-shop/groundtruth.jsonl")).unwrap();
    assert!(matches!(load_corpus(dir.path(), Exec::Sequential), Err(Error::Io { .. })));
}

#[test]
fn malformed_ground_truth_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("groundtruth.jsonl");
    fs::write(&path, "{\"page\":\"a\",\"attributes\":{}}\n{\"page\":\"b\",\"attributes\":[}\n").unwrap();
    assert!(matches!(read_ground_truth(&path), Err(Error::Format { line: 2, .. })));
    fs::write(&path, "\n{\"page\":\"a\",\"attributes\":{},\"extra\":1}\n").unwrap();
    assert!(matches!(read_ground_truth(&path), Err(Error::Format { line: 2, .. })));
    fs::write(&path, "{\"page\":\"a\",\"attributes\":{\"t\":[\"x\"]}}\n").unwrap();
    assert_eq!(read_ground_truth(&path).unwrap()["a"]["t"], vec!["x"]);
}

#[test]
fn classification_ignores_page_order() {
    let site = &synth::movie(8, 6).build().unwrap()[1];
    let mut trees: Vec<_> = site.pages.iter().map(|p| p.tree.clone()).collect();
    trees.reverse();
    trees.rotate_left(2);
    classify_variable_nodes(&mut trees).unwrap();
    for tree in &trees {
        let original = site.pages.iter().find(|p| p.page_id == tree.page_id()).unwrap();
        assert_eq!(&original.tree, tree);
    }
    let fixed = |text: &str| {
        site.pages[0].tree.nodes().iter().any(|n| n.text.as_deref() == Some(text) && n.class == NodeClass::Fixed)
    };
    assert!(fixed("Movie details"));
}

#[test]
fn fixture_features_follow_the_leaf() {
    let mut trees = vec![parse_page(&fixture("book_subtree.htm"), "book").unwrap()];
    classify_variable_nodes(&mut trees).unwrap();
    let tree = &trees[0];
    let vocab = Vocab::from_trees(trees.iter(), 1).unwrap();
    let caps = Caps { node_words: 15, friends_words: 50 };
    let mut seen_author = false;
    for circle in circles_for(tree, 5, 10).unwrap().into_values() {
        let tokens = node_tokens(tree, &circle, caps, 10).unwrap();
        let features = vocab.encode(&tokens);
        assert_eq!(features.xpath.last(), Some(&features.leaf_tag));
        assert_eq!(tokens.leaf_tag, leaf_tag(tree, circle.node_id).unwrap());
        if tokens.node == ["J.", "K.", "Rowling"] {
            assert_eq!(tokens.partner, ["by"]);
            assert_eq!(tokens.xpath, ["html", "body", "div", "div", "div", "a"]);
            assert!(tokens.friends.starts_with(&["Harry".to_string()]));
            seen_author = true;
        }
    }
    assert!(seen_author);
}

#[test]
fn cache_hits_and_rebuilds() {
    let corpus = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    synth::book(3, 3).write(corpus.path()).unwrap();
    let first = load_prepared_vertical(Some(cache.path()), corpus.path(), "book", params(), Exec::Sequential).unwrap();
    assert!(first.iter().all(|s| s.1 == CacheStatus::Built));
    let entry = entry_path(cache.path(), "book", "book-list-shop");
    let bytes = fs::read(&entry).unwrap();
    let second = load_prepared_vertical(Some(cache.path()), corpus.path(), "book", params(), Exec::Parallel).unwrap();
    assert!(second.iter().all(|s| s.1 == CacheStatus::Hit));
    assert_eq!(fs::read(&entry).unwrap(), bytes);
    assert_eq!(first.iter().map(|s| &s.0).collect::<Vec<_>>(), second.iter().map(|s| &s.0).collect::<Vec<_>>());

    // stale format version
    let text = String::from_utf8(bytes.clone()).unwrap().replacen("\"version\":1", "\"version\":0", 1);
    fs::write(&entry, text).unwrap();
    let attrs = read_attributes(&corpus.path().join("book/attributes.txt")).unwrap();
    let (_, status) =
        load_or_build_site(cache.path(), corpus.path(), "book", "book-list-shop", &attrs, params()).unwrap();
    assert_eq!(status, CacheStatus::Built);
    assert_eq!(fs::read(&entry).unwrap(), bytes);

    // changed parameters and changed inputs
    let other = PrepParams { k: 2, ..params() };
    assert_eq!(
        load_or_build_site(cache.path(), corpus.path(), "book", "book-list-shop", &attrs, other).unwrap().1,
        CacheStatus::Built
    );
    let page = corpus.path().join("book/book-list-shop/pages/page-0000.htm");
    let html = fs::read_to_string(&page).unwrap().replace("Book details", "Book facts");
    fs::write(&page, html).unwrap();
    assert_eq!(
        load_or_build_site(cache.path(), corpus.path(), "book", "book-list-shop", &attrs, params()).unwrap().1,
        CacheStatus::Built
    );
}

fn html_fragment() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        "[a-zA-Z0-9 ]{0,12}",
        Just("&amp; x".to_string()),
        Just("<br>".to_string()),
        Just("<img src=x>".to_string()),
    ];
    leaf.prop_recursive(4, 40, 5, |inner| {
        let tag =
            prop_oneof![Just("div"), Just("span"), Just("b"), Just("td"), Just("li"), Just("p"), Just("em"), Just("a")];
        (tag, prop::collection::vec(inner, 0..5)).prop_map(|(t, kids)| format!("<{t}>{}</{t}>", kids.concat()))
    })
}

proptest! {
    #[test]
    fn parse_serialize_is_idempotent(body in html_fragment()) {
        let html = format!("<html><body>{body}</body></html>");
        let tree = parse_page(html.as_bytes(), "p").unwrap();
        let once = serialize(&tree);
        let again = parse_page(once.as_bytes(), "p").unwrap();
        prop_assert_eq!(&tree, &again);
        prop_assert_eq!(once, serialize(&again));
    }
}
