//! Seeded synthetic verticals for tests, benches and demos.
//!
//! Each vertical has two sites with different templates (a label/value
//! table and a label/link list). Every page lists its attribute rows next to
//! look-alike distractor rows (a series next to the title, an illustrator
//! next to the author, ...) in a per-page shuffled order, so a node's own
//! text, position and XPath cannot tell an attribute from its distractor;
//! the label next to it can.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{Gold, SiteCorpus};
use crate::{Error, Result};

const ADJECTIVES: &[&str] = &[
    "Silent", "Golden", "Hidden", "Broken", "Distant", "Crimson", "Frozen", "Secret", "Burning", "Lost", "Endless",
    "Hollow", "Quiet", "Wild", "Bright", "Final", "Ancient", "Little", "Restless", "Scarlet",
];
const NOUNS: &[&str] = &[
    "River", "Garden", "Kingdom", "Harbor", "Mountain", "Letter", "Forest", "Island", "Winter", "Promise", "Shadow",
    "Engine", "Tower", "Voyage", "Mirror", "Orchard", "Signal", "Lantern", "Valley", "Storm",
];
const FIRST: &[&str] = &[
    "Anna", "James", "Maria", "Oliver", "Sofia", "Henry", "Clara", "Lucas", "Nora", "Samuel", "Ines", "Victor", "Ruth",
    "Daniel", "Elena", "Marcus",
];
const LAST: &[&str] = &[
    "Hughes",
    "Moreau",
    "Okafor",
    "Lindqvist",
    "Tanaka",
    "Brennan",
    "Rossi",
    "Kowalski",
    "Ferreira",
    "Nakamura",
    "Adler",
    "Whitfield",
    "Castillo",
    "Novak",
    "Haddad",
    "Quinn",
];
const GENRES: &[&str] =
    &["Drama", "Comedy", "Thriller", "Documentary", "Western", "Romance", "Horror", "Animation", "Mystery", "Fantasy"];
const RATINGS: &[&str] = &["G", "PG", "PG-13", "R", "NC-17", "Unrated"];

#[derive(Clone, Copy, Debug)]
enum Kind {
    Title,
    Person,
    Code,
    Genre,
    Year,
    Rating,
    Count,
    Price,
}

fn value(kind: Kind, rng: &mut ChaCha8Rng) -> String {
    let pick = |pool: &[&str], rng: &mut ChaCha8Rng| pool.choose(rng).unwrap().to_string();
    match kind {
        Kind::Title => match rng.random_range(0..3) {
            0 => format!("The {} {}", pick(ADJECTIVES, rng), pick(NOUNS, rng)),
            1 => format!("{} of the {}", pick(NOUNS, rng), pick(NOUNS, rng)),
            _ => format!("A {} {} {}", pick(ADJECTIVES, rng), pick(NOUNS, rng), pick(NOUNS, rng)),
        },
        Kind::Person => format!("{} {}", pick(FIRST, rng), pick(LAST, rng)),
        Kind::Code => format!(
            "978-{}-{:05}-{:03}-{}",
            rng.random_range(0..10),
            rng.random_range(0..100_000),
            rng.random_range(0..1000),
            rng.random_range(0..10)
        ),
        Kind::Genre => pick(GENRES, rng),
        Kind::Year => rng.random_range(1950..2024).to_string(),
        Kind::Rating => pick(RATINGS, rng),
        Kind::Count => rng.random_range(90..900).to_string(),
        Kind::Price => format!("${}.{:02}", rng.random_range(5..60), rng.random_range(0..100)),
    }
}

#[derive(Clone, Copy, Debug)]
struct Row {
    label: &'static str,
    kind: Kind,
    /// Index into the vertical's attributes, `None` for distractors.
    attribute: Option<usize>,
}

const fn row(label: &'static str, kind: Kind, attribute: Option<usize>) -> Row {
    Row { label, kind, attribute }
}

const BOOK_ROWS: &[Row] = &[
    row("Title:", Kind::Title, Some(0)),
    row("by", Kind::Person, Some(1)),
    row("ISBN:", Kind::Code, Some(2)),
    row("Series:", Kind::Title, None),
    row("Illustrator:", Kind::Person, None),
    row("EAN:", Kind::Code, None),
    row("Pages:", Kind::Count, None),
    row("Price:", Kind::Price, None),
];

const MOVIE_ROWS: &[Row] = &[
    row("Title:", Kind::Title, Some(0)),
    row("by", Kind::Person, Some(1)),
    row("Genre:", Kind::Genre, Some(2)),
    row("Year:", Kind::Year, Some(3)),
    row("Original title:", Kind::Title, None),
    row("Writer:", Kind::Person, None),
    row("Rating:", Kind::Rating, None),
    row("Runtime:", Kind::Count, None),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Template {
    Table,
    List,
}

fn render(template: Template, site: &str, heading: &str, rows: &[(&str, String)]) -> String {
    let mut h = String::new();
    match template {
        Template::Table => {
            h += &format!("<html><head><title>{site}</title></head><body>\n");
            h += "<div class=\"nav\"><a href=\"/\">Home</a> <a href=\"/browse\">Browse</a> <a href=\"/help\">Help</a></div>\n";
            h += &format!("<h2>{heading}</h2>\n<table>\n");
            for (label, value) in rows {
                h += &format!("  <tr><td>{label}</td><td>{value}</td></tr>\n");
            }
            h += &format!("</table>\n<p class=\"footer\">Copyright {site}</p>\n</body></html>\n");
        }
        Template::List => {
            h += &format!(
                "<!DOCTYPE html>\n<html><body>\n<div class=\"menu\"><span>{site}</span><span>Sign in</span></div>\n"
            );
            h += &format!("<div class=\"main\"><h3>{heading}</h3>\n<ul>\n");
            for (label, value) in rows {
                h += &format!("  <li><label><b>{label}</b></label> <a href=\"#\">{value}</a></li>\n");
            }
            h += "</ul></div>\n<div class=\"footer\"><em>All rights reserved</em></div>\n</body></html>\n";
        }
    }
    h
}

fn escape(s: &str) -> String {
    html_escape::encode_text(s).into_owned()
}

#[derive(Clone, Debug)]
pub struct RawSite {
    pub site_id: String,
    /// `(page_id, html, gold)`
    pub pages: Vec<(String, String, Gold)>,
}

#[derive(Clone, Debug)]
pub struct RawVertical {
    pub name: String,
    pub attributes: Vec<String>,
    pub sites: Vec<RawSite>,
}

impl RawVertical {
    pub fn build(&self) -> Result<Vec<SiteCorpus>> {
        self.sites
            .iter()
            .map(|s| {
                let raw =
                    s.pages.iter().map(|(id, html, g)| (id.clone(), html.clone().into_bytes(), g.clone())).collect();
                SiteCorpus::build(&self.name, &s.site_id, self.attributes.clone(), raw)
            })
            .collect()
    }

    /// Writes the vertical under `root` in the corpus directory layout.
    pub fn write(&self, root: &Path) -> Result<()> {
        let vdir = root.join(&self.name);
        let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        let write = |p: &Path, s: &str| std::fs::write(p, s).map_err(|e| Error::io(p, e));
        mkdir(&vdir)?;
        write(&vdir.join("attributes.txt"), &(self.attributes.join("\n") + "\n"))?;
        for site in &self.sites {
            let sdir = vdir.join(&site.site_id);
            mkdir(&sdir.join("pages"))?;
            let mut gt = String::new();
            for (id, html, gold) in &site.pages {
                write(&sdir.join("pages").join(format!("{id}.htm")), html)?;
                gt += &serde_json::to_string(&serde_json::json!({ "page": id, "attributes": gold }))?;
                gt.push('\n');
            }
            write(&sdir.join("groundtruth.jsonl"), &gt)?;
        }
        Ok(())
    }
}

fn vertical(name: &str, attributes: &[&str], rows: &[Row], heading: &str, seed: u64, pages: usize) -> RawVertical {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = [("list-shop", Template::List), ("table-shop", Template::Table)]
        .iter()
        .map(|&(suffix, template)| {
            let site_id = format!("{name}-{suffix}");
            let pages = (0..pages)
                .map(|p| {
                    // distinct values per page so exact-match labels are unambiguous
                    let mut values: Vec<String> = Vec::new();
                    for r in rows {
                        let mut v = value(r.kind, &mut rng);
                        while values.contains(&v) {
                            v = value(r.kind, &mut rng);
                        }
                        values.push(v);
                    }
                    let mut gold = Gold::new();
                    for (r, v) in rows.iter().zip(&values) {
                        if let Some(a) = r.attribute {
                            gold.insert(attributes[a].to_string(), vec![v.clone()]);
                        }
                    }
                    let mut order: Vec<usize> = (0..rows.len()).collect();
                    order.shuffle(&mut rng);
                    let rendered: Vec<(&str, String)> =
                        order.iter().map(|&i| (rows[i].label, escape(&values[i]))).collect();
                    (format!("page-{p:04}"), render(template, &site_id, heading, &rendered), gold)
                })
                .collect();
            RawSite { site_id, pages }
        })
        .collect();
    RawVertical { name: name.into(), attributes: attributes.iter().map(|s| s.to_string()).collect(), sites }
}

/// Book vertical: title, author, isbn.
pub fn book(seed: u64, pages: usize) -> RawVertical {
    vertical("book", &["title", "author", "isbn"], BOOK_ROWS, "Book details", seed, pages)
}

/// Movie vertical: title, director, genre, year. Shares the "Title:" and
/// "by" labels with [`book`].
pub fn movie(seed: u64, pages: usize) -> RawVertical {
    vertical("movie", &["title", "director", "genre", "year"], MOVIE_ROWS, "Movie details", seed, pages)
}
