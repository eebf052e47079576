//! Page-level F1, seed-site splits and the few-shot experiment protocols.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::ingest::{normalize_text, Gold};
use crate::prepare::{PreparedPage, PreparedSite};
use crate::tagger::{finetune, train, EpochLoss, Head, Model, TrainConfig};
use crate::{Error, Result};

/// Tolerance for checking stored means against their parts.
pub const MEAN_TOLERANCE: f64 = 1e-12;

fn matches(value: &str, gold: &[String]) -> bool {
    let v = normalize_text(value);
    gold.iter().any(|g| normalize_text(g) == v)
}

fn has_gold(gold: &Gold, attr: &str) -> bool {
    gold.get(attr).is_some_and(|v| !v.is_empty())
}

/// F1 of one page's extracted values against its gold values. A page with
/// neither gold values nor predictions scores 1.
pub fn page_f1(predicted: &BTreeMap<String, String>, gold: &Gold) -> f64 {
    let n_gold = gold.values().filter(|v| !v.is_empty()).count();
    let n_pred = predicted.len();
    if n_gold == 0 && n_pred == 0 {
        return 1.0;
    }
    let correct = predicted.iter().filter(|(a, v)| gold.get(*a).is_some_and(|g| matches(v, g))).count();
    let p = if n_pred == 0 { 0.0 } else { correct as f64 / n_pred as f64 };
    let r = if n_gold == 0 { 0.0 } else { correct as f64 / n_gold as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub rotation: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded permutation of the sites, read as a ring: rotation `r` trains on
/// the `k` sites starting at position `r` and tests on the rest.
pub fn seed_split(sites: &[String], k: usize, seed: u64, rotation: usize) -> Result<Split> {
    let n = sites.len();
    if k < 1 || k >= n {
        return Err(Error::Argument(format!("k = {k} must be in 1..{n} for {n} sites")));
    }
    let mut perm = sites.to_vec();
    perm.sort();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train: Vec<String> = (0..k).map(|i| perm[(rotation + i) % n].clone()).collect();
    let test = (0..n - k).map(|i| perm[(rotation + k + i) % n].clone()).collect();
    Ok(Split { rotation: rotation % n, train, test })
}

/// All `n` rotations of one seeded permutation.
pub fn rotations(sites: &[String], k: usize, seed: u64) -> Result<Vec<Split>> {
    (0..sites.len()).map(|r| seed_split(sites, k, seed, r)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageScore {
    pub page_id: String,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub site_id: String,
    pub pages: Vec<PageScore>,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub rotation: usize,
    pub train_sites: Vec<String>,
    pub sites: Vec<SiteReport>,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss: Vec<EpochLoss>,
}

/// Micro-averaged over pages: counts are summed before dividing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub attribute: String,
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSummary {
    pub source_vertical: String,
    /// From-scratch control trained on the same seed sites.
    pub control: Vec<RotationReport>,
    pub control_f1: f64,
    /// Finetuned minus control F1.
    pub lift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub vertical: String,
    pub config: TrainConfig,
    pub split: String,
    pub rotations: Vec<RotationReport>,
    pub attributes: Vec<AttributeScore>,
    /// Mean over rotations.
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<CrossSummary>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Default)]
struct Counts {
    predicted: usize,
    gold: usize,
    correct: usize,
}

fn attribute_scores(
    attributes: &[String],
    scored: &[(&PreparedPage, BTreeMap<String, String>)],
) -> Vec<AttributeScore> {
    let mut counts: Vec<Counts> = attributes.iter().map(|_| Counts::default()).collect();
    for (page, predicted) in scored {
        for (a, c) in attributes.iter().zip(&mut counts) {
            let pred = predicted.get(a);
            c.predicted += pred.is_some() as usize;
            c.gold += has_gold(&page.gold, a) as usize;
            c.correct += pred.is_some_and(|v| page.gold.get(a).is_some_and(|g| matches(v, g))) as usize;
        }
    }
    attributes
        .iter()
        .zip(counts)
        .map(|(a, c)| {
            let precision = if c.predicted == 0 { 0.0 } else { c.correct as f64 / c.predicted as f64 };
            let recall = if c.gold == 0 { 0.0 } else { c.correct as f64 / c.gold as f64 };
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            AttributeScore {
                attribute: a.clone(),
                predicted: c.predicted,
                gold: c.gold,
                correct: c.correct,
                precision,
                recall,
                f1,
            }
        })
        .collect()
}

/// Scores every page of `sites` with an arbitrary extractor. Returns the
/// per-site reports and the per-attribute counts.
pub fn score_sites<F>(sites: &[&PreparedSite], exec: Exec, extract: F) -> Result<(Vec<SiteReport>, Vec<AttributeScore>)>
where
    F: Fn(&PreparedPage) -> Result<BTreeMap<String, String>> + Sync + Send,
{
    let Some(first) = sites.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let pages: Vec<&PreparedPage> = sites.iter().flat_map(|s| &s.pages).collect();
    let predicted = exec.try_map(&pages, |p| extract(p))?;
    let scored: Vec<(&PreparedPage, BTreeMap<String, String>)> = pages.into_iter().zip(predicted).collect();
    let mut reports = Vec::new();
    let mut i = 0;
    for site in sites {
        let page_scores: Vec<PageScore> = scored[i..i + site.pages.len()]
            .iter()
            .map(|(p, pred)| PageScore { page_id: p.page_id.clone(), f1: page_f1(pred, &p.gold) })
            .collect();
        i += site.pages.len();
        let f1 = mean(page_scores.iter().map(|p| p.f1));
        reports.push(SiteReport { site_id: site.site_id.clone(), pages: page_scores, f1 });
    }
    Ok((reports, attribute_scores(&first.attributes, &scored)))
}

/// Scores a trained model on prepared sites.
pub fn evaluate_model(
    model: &Model,
    sites: &[&PreparedSite],
    exec: Exec,
) -> Result<(Vec<SiteReport>, Vec<AttributeScore>)> {
    score_sites(sites, exec, |p| Ok(model.extract_prepared(&p.tree, &p.tokens)?.values))
}

fn merge_attribute_scores(parts: Vec<Vec<AttributeScore>>) -> Vec<AttributeScore> {
    let mut out: Vec<AttributeScore> = Vec::new();
    for part in parts {
        if out.is_empty() {
            out =
                part.iter().map(|a| AttributeScore { attribute: a.attribute.clone(), ..Default::default() }).collect();
        }
        for (o, a) in out.iter_mut().zip(part) {
            o.predicted += a.predicted;
            o.gold += a.gold;
            o.correct += a.correct;
        }
    }
    for o in &mut out {
        o.precision = if o.predicted == 0 { 0.0 } else { o.correct as f64 / o.predicted as f64 };
        o.recall = if o.gold == 0 { 0.0 } else { o.correct as f64 / o.gold as f64 };
        o.f1 =
            if o.precision + o.recall == 0.0 { 0.0 } else { 2.0 * o.precision * o.recall / (o.precision + o.recall) };
    }
    out
}

fn select<'a>(sites: &'a [PreparedSite], ids: &[String]) -> Result<Vec<&'a PreparedSite>> {
    ids.iter()
        .map(|id| {
            sites.iter().find(|s| &s.site_id == id).ok_or_else(|| Error::Argument(format!("unknown site `{id}`")))
        })
        .collect()
}

fn vertical_of(sites: &[PreparedSite]) -> Result<String> {
    let first = sites.first().ok_or_else(|| Error::Argument("no sites".into()))?;
    if let Some(other) = sites.iter().find(|s| s.vertical != first.vertical) {
        return Err(Error::Argument(format!("sites span verticals `{}` and `{}`", first.vertical, other.vertical)));
    }
    Ok(first.vertical.clone())
}

fn describe(splits: &[Split], k: usize) -> String {
    format!("{} split(s) with k = {k} seed site(s)", splits.len())
}

/// Intra-vertical protocol: per split, train on the seed sites and extract
/// on the held-out ones.
pub fn run_intra(sites: &[PreparedSite], splits: &[Split], config: &TrainConfig, exec: Exec) -> Result<EvalReport> {
    let vertical = vertical_of(sites)?;
    let mut rotations = Vec::new();
    let mut attrs = Vec::new();
    for split in splits {
        let seeds: Vec<PreparedSite> = select(sites, &split.train)?.into_iter().cloned().collect();
        let out = train(&seeds, config, exec)?;
        let (reports, a) = evaluate_model(&out.model, &select(sites, &split.test)?, exec)?;
        attrs.push(a);
        let f1 = mean(reports.iter().map(|s| s.f1));
        rotations.push(RotationReport {
            rotation: split.rotation,
            train_sites: split.train.clone(),
            sites: reports,
            f1,
            loss: out.log,
        });
    }
    let f1 = mean(rotations.iter().map(|r| r.f1));
    let k = splits.first().map_or(0, |s| s.train.len());
    Ok(EvalReport {
        vertical,
        config: config.clone(),
        split: describe(splits, k),
        rotations,
        attributes: merge_attribute_scores(attrs),
        f1,
        cross: None,
    })
}

/// Settings for the two stages of the cross-vertical protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossConfig {
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
}

/// Cross-vertical protocol: pretrain a cross-head model on all of `source`,
/// then per split finetune it on the target seed sites and evaluate on the
/// held-out target sites. A from-scratch model trained on the same seed
/// sites with the finetune settings serves as the control.
pub fn run_cross(
    source: &[PreparedSite],
    target: &[PreparedSite],
    splits: &[Split],
    config: &CrossConfig,
    exec: Exec,
) -> Result<EvalReport> {
    let (va, vb) = (vertical_of(source)?, vertical_of(target)?);
    if va == vb {
        return Err(Error::Argument(format!("vertical `{va}` cannot serve as its own out-of-domain source")));
    }
    let mut pre_cfg = config.pretrain.clone();
    pre_cfg.head = Head::Cross;
    let pretrained = train(source, &pre_cfg, exec)?.model;
    let mut ft_cfg = config.finetune.clone();
    ft_cfg.head = Head::Cross;
    let scratch_cfg = TrainConfig {
        epochs: ft_cfg.epochs,
        batch: ft_cfg.batch,
        lr: ft_cfg.lr,
        seed: ft_cfg.seed,
        dropout: ft_cfg.dropout,
        none_keep_ratio: ft_cfg.none_keep_ratio,
        ..pre_cfg.clone()
    };
    let (mut rotations, mut control, mut attrs) = (Vec::new(), Vec::new(), Vec::new());
    for split in splits {
        let seeds: Vec<PreparedSite> = select(target, &split.train)?.into_iter().cloned().collect();
        let test = select(target, &split.test)?;
        let tuned = finetune(&pretrained, &seeds, &ft_cfg, exec)?;
        let (reports, a) = evaluate_model(&tuned.model, &test, exec)?;
        attrs.push(a);
        let f1 = mean(reports.iter().map(|s| s.f1));
        rotations.push(RotationReport {
            rotation: split.rotation,
            train_sites: split.train.clone(),
            sites: reports,
            f1,
            loss: tuned.log,
        });
        let scratch = train(&seeds, &scratch_cfg, exec)?;
        let (reports, _) = evaluate_model(&scratch.model, &test, exec)?;
        let f1 = mean(reports.iter().map(|s| s.f1));
        control.push(RotationReport {
            rotation: split.rotation,
            train_sites: split.train.clone(),
            sites: reports,
            f1,
            loss: scratch.log,
        });
    }
    let f1 = mean(rotations.iter().map(|r| r.f1));
    let control_f1 = mean(control.iter().map(|r| r.f1));
    let k = splits.first().map_or(0, |s| s.train.len());
    Ok(EvalReport {
        vertical: vb,
        config: ft_cfg,
        split: format!("{}; pretrained on `{va}`", describe(splits, k)),
        rotations,
        attributes: merge_attribute_scores(attrs),
        f1,
        cross: Some(CrossSummary { source_vertical: va, control, control_f1, lift: f1 - control_f1 }),
    })
}

/// Report for a fixed model on chosen sites (no training).
pub fn evaluate_checkpoint(model: &Model, sites: &[&PreparedSite], exec: Exec) -> Result<EvalReport> {
    let (reports, attributes) = evaluate_model(model, sites, exec)?;
    let f1 = mean(reports.iter().map(|s| s.f1));
    Ok(EvalReport {
        vertical: model.vertical.clone(),
        config: model.config().clone(),
        split: format!("checkpoint trained on {}", model.train_sites.join(", ")),
        rotations: vec![RotationReport {
            rotation: 0,
            train_sites: model.train_sites.clone(),
            sites: reports,
            f1,
            loss: Vec::new(),
        }],
        attributes,
        f1,
        cross: None,
    })
}

impl EvalReport {
    /// Whether every stored mean equals the mean of its parts.
    pub fn means_consistent(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= MEAN_TOLERANCE;
        let rotations_ok = |rs: &[RotationReport]| {
            rs.iter().all(|r| {
                close(r.f1, mean(r.sites.iter().map(|s| s.f1)))
                    && r.sites.iter().all(|s| close(s.f1, mean(s.pages.iter().map(|p| p.f1))))
            })
        };
        let in_range = |x: f64| (0.0..=1.0).contains(&x);
        let all_pages_ok = self.rotations.iter().flat_map(|r| &r.sites).flat_map(|s| &s.pages).all(|p| in_range(p.f1));
        rotations_ok(&self.rotations)
            && close(self.f1, mean(self.rotations.iter().map(|r| r.f1)))
            && all_pages_ok
            && self.cross.as_ref().is_none_or(|c| {
                rotations_ok(&c.control)
                    && close(c.control_f1, mean(c.control.iter().map(|r| r.f1)))
                    && close(c.lift, self.f1 - c.control_f1)
            })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned plain-text summary.
    pub fn table(&self) -> String {
        let mut rows: Vec<[String; 5]> =
            vec![["rotation".into(), "train".into(), "site".into(), "pages".into(), "f1".into()]];
        let mut push_rotations = |label: &str, rs: &[RotationReport]| {
            for r in rs {
                for s in &r.sites {
                    rows.push([
                        format!("{label}{}", r.rotation),
                        r.train_sites.join(","),
                        s.site_id.clone(),
                        s.pages.len().to_string(),
                        format!("{:.4}", s.f1),
                    ]);
                }
            }
        };
        push_rotations("", &self.rotations);
        if let Some(c) = &self.cross {
            push_rotations("control-", &c.control);
        }
        let mut out = String::new();
        write_table(&mut out, &rows);
        out.push('\n');
        let mut attrs: Vec<[String; 5]> =
            vec![["attribute".into(), "predicted".into(), "precision".into(), "recall".into(), "f1".into()]];
        for a in &self.attributes {
            attrs.push([
                a.attribute.clone(),
                a.predicted.to_string(),
                format!("{:.4}", a.precision),
                format!("{:.4}", a.recall),
                format!("{:.4}", a.f1),
            ]);
        }
        write_table(&mut out, &attrs);
        out.push('\n');
        let _ = writeln!(out, "vertical {}: f1 {:.4} ({})", self.vertical, self.f1, self.split);
        if let Some(c) = &self.cross {
            let _ = writeln!(
                out,
                "from scratch: f1 {:.4}; lift from `{}` pretraining: {:+.4}",
                c.control_f1, c.source_vertical, c.lift
            );
        }
        out
    }
}

fn write_table<const N: usize>(out: &mut String, rows: &[[String; N]]) {
    let widths: Vec<usize> = (0..N).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, v)| (a.to_string(), v.to_string())).collect()
    }

    fn gold(pairs: &[(&str, &str)]) -> Gold {
        pairs.iter().map(|(a, v)| (a.to_string(), vec![v.to_string()])).collect()
    }

    #[test]
    fn hand_computed_f1() {
        let g = gold(&[("title", "A"), ("author", "B"), ("price", "C")]);
        let f = page_f1(&map(&[("title", "A"), ("author", "X")]), &g);
        assert!((f - 0.4).abs() <= 1e-12);
        assert_eq!(page_f1(&map(&[("title", "A"), ("author", "B"), ("price", "C")]), &g), 1.0);
        assert_eq!(page_f1(&map(&[]), &g), 0.0);
        assert_eq!(page_f1(&map(&[]), &Gold::new()), 1.0);
        assert_eq!(page_f1(&map(&[("title", "A")]), &Gold::new()), 0.0);
    }

    #[test]
    fn splits() {
        let sites: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let s = seed_split(&sites, 3, 7, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (3, 7));
        assert!(s.train.iter().all(|t| !s.test.contains(t)));
        assert_eq!(seed_split(&sites, 3, 7, 0).unwrap(), s);
        assert_eq!(seed_split(&sites, 1, 7, 0).unwrap().test.len(), 9);
        assert!(seed_split(&sites, 0, 7, 0).is_err());
        assert!(seed_split(&sites, 10, 7, 0).is_err());
        let all = rotations(&sites, 1, 7).unwrap();
        let mut firsts: Vec<&String> = all.iter().map(|r| &r.train[0]).collect();
        firsts.sort();
        firsts.dedup();
        assert_eq!(firsts.len(), 10);
    }

    #[test]
    fn table_is_aligned() {
        let report = EvalReport {
            vertical: "book".into(),
            config: TrainConfig::default(),
            split: "x".into(),
            rotations: vec![RotationReport {
                rotation: 0,
                train_sites: vec!["a".into()],
                sites: vec![SiteReport {
                    site_id: "long-site-name".into(),
                    pages: vec![PageScore { page_id: "p".into(), f1: 0.5 }],
                    f1: 0.5,
                }],
                f1: 0.5,
                loss: Vec::new(),
            }],
            attributes: Vec::new(),
            f1: 0.5,
            cross: None,
        };
        assert!(report.means_consistent());
        let t = report.table();
        let lines: Vec<&str> = t.lines().take(2).collect();
        assert_eq!(lines[0].find("pages"), lines[1].find('1'));
    }
}
