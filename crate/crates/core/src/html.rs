//! Lenient HTML reader that produces filtered [`DomTree`]s.
//!
//! The reader never rejects markup: unknown end tags are ignored, unclosed
//! elements are closed at end of input, and a handful of list/table tags are
//! implicitly closed the way browsers do. Script-like elements and comments
//! are dropped. Formatting tags (see [`FORMATTING_TAGS`]) are spliced out and
//! their text is merged into the nearest kept ancestor, so `<td>by</td>`,
//! `<td><strong>by</strong></td>` and `<td><b><i>by</i></b></td>` all
//! produce the same tree.

use crate::dom::{DomTree, NodeId, TreeBuilder, TEXT_TAG};
use crate::{Error, Result};

/// Version of the formatting-tag table below. Bump when the list changes;
/// cached preprocessed corpora key on it.
pub const FORMATTING_TABLE_VERSION: u32 = 1;

/// Inline formatting and style tags removed before tree construction.
pub const FORMATTING_TAGS: &[&str] = &[
    "b", "i", "em", "strong", "small", "mark", "sub", "sup", "ins", "del", "u", "s", "font", "center", "big", "tt",
    "abbr", "cite", "code", "kbd", "samp", "var",
];

/// Elements whose entire content is discarded.
const DROPPED_TAGS: &[&str] = &["script", "style", "noscript", "template"];

/// Elements whose content is plain text up to the matching end tag.
const RAW_TEXT_TAGS: &[&str] = &["title", "textarea"];

const VOID_TAGS: &[&str] =
    &["area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr"];

/// `(tag, tags it implicitly closes, boundary tags that stop the search)`
const IMPLICIT_CLOSE: &[(&str, &[&str], &[&str])] = &[
    ("li", &["li"], &["ul", "ol"]),
    ("td", &["td", "th"], &["tr", "table"]),
    ("th", &["td", "th"], &["tr", "table"]),
    ("tr", &["tr"], &["table", "tbody", "thead", "tfoot"]),
    ("dt", &["dt", "dd"], &["dl"]),
    ("dd", &["dt", "dd"], &["dl"]),
    ("option", &["option"], &["select"]),
];

pub fn is_formatting_tag(tag: &str) -> bool {
    FORMATTING_TAGS.contains(&tag)
}

/// Decodes character references and collapses whitespace runs to single
/// spaces, trimming both ends.
pub fn normalize_text(raw: &str) -> String {
    let decoded = html_escape::decode_html_entities(raw);
    let mut out = String::with_capacity(decoded.len());
    for word in decoded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug)]
enum Item {
    Elem(usize),
    Text(String),
}

#[derive(Debug)]
struct Elem {
    tag: String,
    items: Vec<Item>,
}

#[derive(Debug, Default)]
struct Arena {
    elems: Vec<Elem>,
    /// Top-level items (children of the implicit document).
    top: Vec<Item>,
}

impl Arena {
    fn items_mut(&mut self, parent: Option<usize>) -> &mut Vec<Item> {
        match parent {
            Some(p) => &mut self.elems[p].items,
            None => &mut self.top,
        }
    }

    fn add_text(&mut self, parent: Option<usize>, text: &str) {
        let items = self.items_mut(parent);
        if let Some(Item::Text(t)) = items.last_mut() {
            t.push_str(text);
        } else {
            items.push(Item::Text(text.to_string()));
        }
    }

    fn add_elem(&mut self, parent: Option<usize>, tag: String) -> usize {
        let idx = self.elems.len();
        self.elems.push(Elem { tag, items: Vec::new() });
        self.items_mut(parent).push(Item::Elem(idx));
        idx
    }
}

fn find_ci(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if needle.is_empty() || hay.len() < needle.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()].eq_ignore_ascii_case(needle))
}

fn find(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if hay.len() < needle.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| &hay[i..i + needle.len()] == needle)
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b':' | b'.')
}

/// Skips attributes up to the closing `>`; returns the index just past it and
/// whether the tag was self-closing.
fn skip_attributes(bytes: &[u8], mut pos: usize) -> (usize, bool) {
    let mut last_slash = false;
    while pos < bytes.len() {
        match bytes[pos] {
            b'>' => return (pos + 1, last_slash),
            q @ (b'"' | b'\'') => {
                pos = find(bytes, pos + 1, &[q]).map_or(bytes.len(), |e| e + 1);
                last_slash = false;
            }
            b'/' => {
                last_slash = true;
                pos += 1;
            }
            b if b.is_ascii_whitespace() => pos += 1,
            _ => {
                last_slash = false;
                pos += 1;
            }
        }
    }
    (pos, last_slash)
}

struct Reader<'a> {
    src: &'a str,
    arena: Arena,
    stack: Vec<usize>,
}

impl<'a> Reader<'a> {
    fn current(&self) -> Option<usize> {
        self.stack.last().copied()
    }

    fn open(&mut self, tag: String, self_closing: bool) {
        if let Some((_, closes, bounds)) = IMPLICIT_CLOSE.iter().find(|(t, _, _)| *t == tag) {
            let hit = self.stack.iter().rposition(|&e| {
                let t = self.arena.elems[e].tag.as_str();
                closes.contains(&t) || bounds.contains(&t)
            });
            if let Some(i) = hit {
                if closes.contains(&self.arena.elems[self.stack[i]].tag.as_str()) {
                    self.stack.truncate(i);
                }
            }
        }
        let void = self_closing || VOID_TAGS.contains(&tag.as_str());
        let idx = self.arena.add_elem(self.current(), tag);
        if !void {
            self.stack.push(idx);
        }
    }

    fn close(&mut self, tag: &str) {
        // html and body stay open so trailing content after them is kept
        if tag == "html" || tag == "body" {
            return;
        }
        if let Some(i) = self.stack.iter().rposition(|&e| self.arena.elems[e].tag == tag) {
            self.stack.truncate(i);
        }
    }

    fn run(mut self) -> Arena {
        let bytes = self.src.as_bytes();
        let mut pos = 0;
        while pos < bytes.len() {
            if bytes[pos] != b'<' {
                let end = find(bytes, pos, b"<").unwrap_or(bytes.len());
                let cur = self.current();
                self.arena.add_text(cur, &self.src[pos..end]);
                pos = end;
                continue;
            }
            let rest = &bytes[pos..];
            if rest.starts_with(b"<!--") {
                pos = find(bytes, pos + 4, b"-->").map_or(bytes.len(), |e| e + 3);
            } else if rest.len() > 1 && matches!(rest[1], b'!' | b'?') {
                pos = find(bytes, pos, b">").map_or(bytes.len(), |e| e + 1);
            } else if rest.len() > 1 && rest[1] == b'/' {
                let start = pos + 2;
                let mut end = start;
                while end < bytes.len() && is_name_byte(bytes[end]) {
                    end += 1;
                }
                let name = self.src[start..end].to_ascii_lowercase();
                pos = find(bytes, end, b">").map_or(bytes.len(), |e| e + 1);
                if !name.is_empty() {
                    self.close(&name);
                }
            } else if rest.len() > 1 && rest[1].is_ascii_alphabetic() {
                let start = pos + 1;
                let mut end = start;
                while end < bytes.len() && is_name_byte(bytes[end]) {
                    end += 1;
                }
                let name = self.src[start..end].to_ascii_lowercase();
                let (after, self_closing) = skip_attributes(bytes, end);
                pos = after;
                let dropped = DROPPED_TAGS.contains(&name.as_str());
                let raw = RAW_TEXT_TAGS.contains(&name.as_str());
                if (dropped || raw) && !self_closing {
                    let closing = format!("</{name}");
                    let content_end = find_ci(bytes, pos, closing.as_bytes()).unwrap_or(bytes.len());
                    if raw {
                        self.open(name.clone(), false);
                        let cur = self.current();
                        self.arena.add_text(cur, &self.src[pos..content_end]);
                        self.close(&name);
                    }
                    pos = find(bytes, content_end, b">").map_or(bytes.len(), |e| e + 1);
                } else if !dropped {
                    self.open(name, self_closing);
                }
            } else {
                let cur = self.current();
                self.arena.add_text(cur, "<");
                pos += 1;
            }
        }
        self.arena
    }
}

/// Child sequence of a kept element after splicing out formatting elements:
/// kept child elements interleaved with merged, normalized text runs.
enum Flat {
    Elem(usize),
    Text(String),
}

fn flatten(arena: &Arena, items: &[Item], out: &mut Vec<Flat>, pending: &mut Vec<String>) {
    for item in items {
        match item {
            Item::Text(t) => {
                let t = normalize_text(t);
                if !t.is_empty() {
                    pending.push(t);
                }
            }
            Item::Elem(e) if is_formatting_tag(&arena.elems[*e].tag) => {
                flatten(arena, &arena.elems[*e].items, out, pending);
            }
            Item::Elem(e) => {
                if !pending.is_empty() {
                    out.push(Flat::Text(pending.join(" ")));
                    pending.clear();
                }
                out.push(Flat::Elem(*e));
            }
        }
    }
}

fn flat_children(arena: &Arena, items: &[Item]) -> Vec<Flat> {
    let mut out = Vec::new();
    let mut pending = Vec::new();
    flatten(arena, items, &mut out, &mut pending);
    if !pending.is_empty() {
        out.push(Flat::Text(pending.join(" ")));
    }
    out
}

fn lower(arena: &Arena, children: Vec<Flat>, builder: &mut TreeBuilder, node: NodeId) {
    for child in children {
        match child {
            Flat::Text(t) => {
                builder.text_leaf(node, TEXT_TAG, t);
            }
            Flat::Elem(e) => {
                let elem = &arena.elems[e];
                let grand = flat_children(arena, &elem.items);
                match grand.as_slice() {
                    [Flat::Text(t)] => {
                        builder.text_leaf(node, &elem.tag, t.clone());
                    }
                    _ => {
                        let id = builder.element(node, &elem.tag);
                        lower(arena, grand, builder, id);
                    }
                }
            }
        }
    }
}

/// Parses one page. Fails only on input that is not UTF-8 or that contains
/// neither elements nor text.
pub fn parse_html(html: &[u8], page_id: &str) -> Result<DomTree> {
    let src = std::str::from_utf8(html).map_err(|e| Error::Parse {
        page: page_id.to_string(),
        offset: e.valid_up_to(),
        msg: "invalid UTF-8".to_string(),
    })?;
    let arena = Reader { src, arena: Arena::default(), stack: Vec::new() }.run();

    let top = flat_children(&arena, &arena.top);
    if top.is_empty() && arena.elems.is_empty() {
        return Err(Error::EmptyDocument(page_id.to_string()));
    }
    let html_root = match top.as_slice() {
        [Flat::Elem(e)] if arena.elems[*e].tag == "html" => Some(*e),
        _ => None,
    };
    let children = match html_root {
        Some(e) => flat_children(&arena, &arena.elems[e].items),
        None => top,
    };
    let mut builder = TreeBuilder::new(page_id, "html");
    let root = builder.root();
    lower(&arena, children, &mut builder, root);
    builder.build()
}

/// Writes a tree back out as HTML. Re-parsing the output yields the same
/// tree, which makes the filtering idempotent.
pub fn serialize(tree: &DomTree) -> String {
    let mut out = String::new();
    write_node(tree, tree.root(), &mut out);
    out
}

fn write_node(tree: &DomTree, id: NodeId, out: &mut String) {
    let node = &tree.nodes()[id.0];
    if node.tag == TEXT_TAG {
        out.push_str(&html_escape::encode_text(node.text.as_deref().unwrap_or_default()));
        return;
    }
    out.push('<');
    out.push_str(&node.tag);
    out.push('>');
    if VOID_TAGS.contains(&node.tag.as_str()) && node.children.is_empty() && node.text.is_none() {
        return;
    }
    if let Some(t) = &node.text {
        out.push_str(&html_escape::encode_text(t));
    }
    for &c in &node.children {
        write_node(tree, c, out);
    }
    out.push_str("</");
    out.push_str(&node.tag);
    out.push('>');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::NodeClass;

    fn texts(t: &DomTree) -> Vec<(String, String)> {
        t.text_leaves()
            .iter()
            .map(|&id| {
                let n = t.node(id).unwrap();
                (n.indexed_xpath.clone(), n.text.clone().unwrap())
            })
            .collect()
    }

    fn shape(t: &DomTree) -> Vec<(String, Option<String>)> {
        t.nodes().iter().map(|n| (n.indexed_xpath.clone(), n.text.clone())).collect()
    }

    #[test]
    fn formatting_tag_is_spliced() {
        let t = parse_html(b"<td><strong>by</strong></td>", "p").unwrap();
        assert_eq!(texts(&t), vec![("/html[1]/td[1]".to_string(), "by".to_string())]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn figure_four_variants_normalize_to_one_shape() {
        let base = parse_html(b"<html><body><div><p>by</p><p>J. K. Rowling</p></div></body></html>", "a").unwrap();
        for variant in [
            "<html><body><div><p><strong>by</strong></p><p><font>J. K. Rowling</font></p></div></body></html>",
            "<html><body><div><p><b><i>by</i></b></p><p><em>J. K.</em> <u>Rowling</u></p></div></body></html>",
            "<html><body><div><p>by</p><p>J. K. <small>Rowling</small></p></div></body></html>",
        ] {
            let t = parse_html(variant.as_bytes(), "a").unwrap();
            assert_eq!(shape(&t), shape(&base), "{variant}");
        }
    }

    #[test]
    fn empty_html_element_is_root_only() {
        let t = parse_html(b"<html></html>", "p").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.text_leaves().is_empty());
        assert_eq!(t.node(t.root()).unwrap().class, NodeClass::NonText);
    }

    #[test]
    fn table_fragment_keeps_structure() {
        let t = parse_html(b"<tr><td>A</td><td>B</td></tr>", "p").unwrap();
        assert_eq!(
            texts(&t),
            vec![
                ("/html[1]/tr[1]/td[1]".to_string(), "A".to_string()),
                ("/html[1]/tr[1]/td[2]".to_string(), "B".to_string())
            ]
        );
        let positions: Vec<usize> = t.dfs_order().unwrap().iter().map(|&i| t.node(i).unwrap().dfs_position).collect();
        assert_eq!(positions, vec![1, 2, 3, 4]);
    }

    #[test]
    fn scripts_styles_comments_dropped() {
        let html = b"<html><head><style>p{}</style><script>var x = '<td>no</td>';</script></head>\
                     <body><!-- hidden <b>x</b> --><p>kept</p></body></html>";
        let t = parse_html(html, "p").unwrap();
        assert_eq!(texts(&t).len(), 1);
        assert_eq!(texts(&t)[0].1, "kept");
    }

    #[test]
    fn mixed_content_becomes_text_runs() {
        let t = parse_html(b"<div>Price: <span>5</span> USD<br>extra</div>", "p").unwrap();
        let got = texts(&t);
        assert_eq!(got[0], ("/html[1]/div[1]/text()[1]".to_string(), "Price:".to_string()));
        assert_eq!(got[1], ("/html[1]/div[1]/span[1]".to_string(), "5".to_string()));
        assert_eq!(got[2], ("/html[1]/div[1]/text()[2]".to_string(), "USD".to_string()));
        assert_eq!(got[3], ("/html[1]/div[1]/text()[3]".to_string(), "extra".to_string()));
    }

    #[test]
    fn hoisted_fragments_join_with_single_space() {
        let t = parse_html(b"<td>ISBN:<b>978</b>  <i>0</i></td>", "p").unwrap();
        assert_eq!(texts(&t)[0].1, "ISBN: 978 0");
    }

    #[test]
    fn entities_and_whitespace() {
        let t = parse_html(b"<p>  Tom &amp;\n\t Jerry&nbsp;&lt;3 </p>", "p").unwrap();
        assert_eq!(texts(&t)[0].1, "Tom & Jerry <3");
    }

    #[test]
    fn lenient_on_broken_markup() {
        let t = parse_html(b"<ul><li>a<li>b</ul></div><p>c < d", "p").unwrap();
        let got: Vec<String> = texts(&t).into_iter().map(|(_, s)| s).collect();
        assert_eq!(got, ["a", "b", "c < d"]);
        assert!(t.find_xpath("/html[1]/ul[1]/li[2]").is_some());
    }

    #[test]
    fn tag_names_lowercased() {
        let t = parse_html(b"<HTML><BODY><TD>x</TD></BODY></HTML>", "p").unwrap();
        assert!(t.find_xpath("/html[1]/body[1]/td[1]").is_some());
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_html(b"", "p"), Err(Error::EmptyDocument(_))));
        assert!(matches!(parse_html(b"  <!-- c -->  ", "p"), Err(Error::EmptyDocument(_))));
        match parse_html(b"<p>ok\xff</p>", "p") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serialize_round_trips() {
        let html = b"<html><body><div>a <b>b</b><p>c &amp; d</p>e<br><img></div><table><tr><td>x</td></tr></table></body></html>";
        let t = parse_html(html, "p").unwrap();
        let again = parse_html(serialize(&t).as_bytes(), "p").unwrap();
        assert_eq!(shape(&again), shape(&t));
    }
}
