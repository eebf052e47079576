use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use simpdom::cache::{cache_dir, entry_path, load_prepared_vertical, CacheStatus};
use simpdom::evaluator::{
    evaluate_checkpoint, rotations, run_cross, run_intra, seed_split, CrossConfig, EvalReport, Split,
};
use simpdom::ingest::{classify_variable_nodes, parse_page};
use simpdom::prepare::{prepare_tree, PreparedSite};
use simpdom::simplifier::{extract_circles, trim_friends};
use simpdom::tagger::checkpoint::vocab_path;
use simpdom::tagger::{self, load_checkpoint, prep_params, save_checkpoint, EpochLoss, Head, TrainConfig};
use simpdom::{synth, DomTree, Exec, NodeId};

use crate::failure::{Failure, IO};
use crate::{DataArgs, Format, SplitArgs};

pub struct Context {
    pub exec: Exec,
    pub cache: Option<PathBuf>,
}

impl Context {
    pub fn new(jobs: Option<usize>, no_cache: bool) -> Result<Self, Failure> {
        let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        #[cfg(feature = "parallel")]
        if jobs > 1 {
            // a second call only fails if a pool already exists, which is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
        Ok(Self { exec: Exec::from_jobs(jobs), cache: (!no_cache).then(|| cache_dir(None)) })
    }
}

/// Writes to stdout; a closed pipe (`| head`) ends output quietly.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::from(e).context(format!("writing {}", path.display())))
}

fn require_dir(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{what} `{}` does not exist or is not a directory", path.display())))
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!("file `{}` does not exist", path.display())))
    }
}

pub fn load_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))?;
    TrainConfig::from_json(&text).map_err(|e| Failure::from(e).context(format!("in {}", path.display())))
}

fn config_with_seed(data: &DataArgs, split: &SplitArgs) -> Result<TrainConfig, Failure> {
    let mut config = load_config(data.config.as_deref())?;
    if let Some(seed) = split.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_sites(
    ctx: &Context,
    corpus: &Path,
    vertical: &str,
    config: &TrainConfig,
) -> Result<Vec<PreparedSite>, Failure> {
    require_dir(corpus, "corpus directory")?;
    require_dir(&corpus.join(vertical), "vertical directory")?;
    let sites = load_prepared_vertical(ctx.cache.as_deref(), corpus, vertical, prep_params(config), ctx.exec)?;
    Ok(sites.into_iter().map(|s| s.0).collect())
}

fn site_ids(sites: &[PreparedSite]) -> Vec<String> {
    sites.iter().map(|s| s.site_id.clone()).collect()
}

fn pick(sites: &[PreparedSite], ids: &[String]) -> Vec<PreparedSite> {
    sites.iter().filter(|s| ids.contains(&s.site_id)).cloned().collect()
}

pub fn synth(out: &Path, pages: usize, seed: u64) -> Result<(), Failure> {
    if pages == 0 {
        return Err(Failure::usage("--pages must be at least 1"));
    }
    synth::book(seed, pages).write(out)?;
    synth::movie(seed.wrapping_add(1), pages).write(out)?;
    print_json(&json!({ "corpus": out, "verticals": ["book", "movie"], "pages_per_site": pages, "seed": seed }))
}

pub fn preprocess(ctx: &Context, corpus: &Path, vertical: Option<&str>, config: Option<&Path>) -> Result<(), Failure> {
    let config = load_config(config)?;
    require_dir(corpus, "corpus directory")?;
    let verticals = match vertical {
        Some(v) => vec![v.to_string()],
        None => {
            let mut v = Vec::new();
            for entry in fs::read_dir(corpus).map_err(|e| Failure::from(e).context(corpus.display().to_string()))? {
                let entry = entry?;
                if entry.path().is_dir() {
                    v.push(entry.file_name().to_string_lossy().into_owned());
                }
            }
            v.sort();
            v
        }
    };
    let mut sites = Vec::new();
    for v in &verticals {
        require_dir(&corpus.join(v), "vertical directory")?;
        for (site, status) in load_prepared_vertical(ctx.cache.as_deref(), corpus, v, prep_params(&config), ctx.exec)? {
            let path = ctx.cache.as_deref().map(|c| entry_path(c, v, &site.site_id));
            let nodes: usize = site.pages.iter().map(|p| p.tokens.len()).sum();
            sites.push(json!({
                "vertical": v,
                "site": site.site_id,
                "pages": site.pages.len(),
                "variable_nodes": nodes,
                "cache": status,
                "path": path,
            }));
        }
    }
    let hits = sites.iter().filter(|s| s["cache"] == json!(CacheStatus::Hit)).count();
    log::info!("{hits} of {} sites served from the cache", sites.len());
    print_json(&json!({ "config": config, "cache_dir": ctx.cache, "sites": sites }))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    config: &'a TrainConfig,
    vertical: &'a str,
    split: &'a Split,
    checkpoint: &'a Path,
    vocab: PathBuf,
    loss_log: &'a Path,
    epochs: Vec<serde_json::Value>,
}

fn loss_path(out: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".loss.json");
        out.with_file_name(name)
    })
}

fn save_outputs(
    model: &tagger::Model,
    log: &[EpochLoss],
    split: &Split,
    out: &Path,
    loss_log: Option<PathBuf>,
) -> Result<(), Failure> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| Failure { code: IO, error: e.into() }.context(dir.display().to_string()))?;
    }
    save_checkpoint(model, out)?;
    let loss = loss_path(out, loss_log);
    write_json(&loss, &json!({ "config": model.config(), "split": split, "log": log }))?;
    print_json(&TrainSummary {
        config: model.config(),
        vertical: &model.vertical,
        split,
        checkpoint: out,
        vocab: vocab_path(out),
        loss_log: &loss,
        epochs: log.iter().map(|e| json!({ "epoch": e.epoch, "mean_loss": e.mean })).collect(),
    })
}

pub fn train(
    ctx: &Context,
    data: &DataArgs,
    split: &SplitArgs,
    out: &Path,
    loss_log: Option<PathBuf>,
) -> Result<(), Failure> {
    let config = config_with_seed(data, split)?;
    let sites = load_sites(ctx, &data.corpus, &data.vertical, &config)?;
    let s = seed_split(&site_ids(&sites), split.k, split.seed.unwrap_or(config.seed), split.rotation)?;
    let trained = tagger::train(&pick(&sites, &s.train), &config, ctx.exec)?;
    save_outputs(&trained.model, &trained.log, &s, out, loss_log)
}

pub fn finetune(
    ctx: &Context,
    checkpoint: &Path,
    data: &DataArgs,
    split: &SplitArgs,
    out: &Path,
    loss_log: Option<PathBuf>,
) -> Result<(), Failure> {
    require_file(checkpoint)?;
    let base = load_checkpoint(checkpoint)?;
    if base.head() != Head::Cross {
        return Err(Failure::from(simpdom::Error::IncompatibleHead {
            found: base.head().to_string(),
            expected: Head::Cross.to_string(),
        }));
    }
    let config = config_with_seed(data, split)?;
    // preprocessing must match the base model, not the new config
    let sites = load_sites(ctx, &data.corpus, &data.vertical, base.config())?;
    let s = seed_split(&site_ids(&sites), split.k, split.seed.unwrap_or(config.seed), split.rotation)?;
    let tuned = tagger::finetune(&base, &pick(&sites, &s.train), &config, ctx.exec)?;
    save_outputs(&tuned.model, &tuned.log, &s, out, loss_log)
}

pub struct Protocol {
    pub rotations: Option<usize>,
    pub source: Option<String>,
    pub finetune_config: Option<PathBuf>,
}

pub fn eval(
    ctx: &Context,
    checkpoint: Option<&Path>,
    data: &DataArgs,
    split: &SplitArgs,
    protocol: &Protocol,
    format: Format,
    report_path: Option<&Path>,
) -> Result<(), Failure> {
    let report = match checkpoint {
        Some(path) => {
            require_file(path)?;
            let model = load_checkpoint(path)?;
            let sites = load_sites(ctx, &data.corpus, &data.vertical, model.config())?;
            let held_out: Vec<&PreparedSite> = if model.vertical == data.vertical {
                sites.iter().filter(|s| !model.train_sites.contains(&s.site_id)).collect()
            } else {
                sites.iter().collect()
            };
            if held_out.is_empty() {
                return Err(Failure::usage(format!("no held-out sites in `{}`", data.vertical)));
            }
            if model.attributes != held_out[0].attributes {
                return Err(Failure::from(simpdom::Error::Schema(format!(
                    "model attributes {:?} differ from `{}` attributes {:?}",
                    model.attributes, data.vertical, held_out[0].attributes
                ))));
            }
            evaluate_checkpoint(&model, &held_out, ctx.exec)?
        }
        None => run_protocol(ctx, data, split, protocol)?,
    };
    if let Some(path) = report_path {
        write_json(path, &report)?;
    }
    match format {
        Format::Json => print_json(&report),
        Format::Table => emit(&report.table()),
    }
}

fn run_protocol(ctx: &Context, data: &DataArgs, split: &SplitArgs, protocol: &Protocol) -> Result<EvalReport, Failure> {
    let config = config_with_seed(data, split)?;
    let seed = split.seed.unwrap_or(config.seed);
    let sites = load_sites(ctx, &data.corpus, &data.vertical, &config)?;
    let mut splits = rotations(&site_ids(&sites), split.k, seed)?;
    if let Some(n) = protocol.rotations {
        if n == 0 {
            return Err(Failure::usage("--rotations must be at least 1"));
        }
        splits.truncate(n);
    }
    match &protocol.source {
        None => Ok(run_intra(&sites, &splits, &config, ctx.exec)?),
        Some(source) => {
            let finetune = match &protocol.finetune_config {
                Some(p) => {
                    let mut c = load_config(Some(p))?;
                    if let Some(s) = split.seed {
                        c.seed = s;
                    }
                    c
                }
                None => config.clone(),
            };
            let source_sites = load_sites(ctx, &data.corpus, source, &config)?;
            let cc = CrossConfig { pretrain: config, finetune };
            Ok(run_cross(&source_sites, &sites, &splits, &cc, ctx.exec)?)
        }
    }
}

fn read_pages(paths: &[PathBuf]) -> Result<Vec<DomTree>, Failure> {
    let mut trees = paths
        .iter()
        .map(|p| {
            require_file(p)?;
            let bytes = fs::read(p).map_err(|e| Failure::from(e).context(p.display().to_string()))?;
            let id = p.file_stem().unwrap_or_default().to_string_lossy();
            Ok(parse_page(&bytes, &id)?)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    classify_variable_nodes(&mut trees)?;
    Ok(trees)
}

pub fn extract(ctx: &Context, checkpoint: &Path, pages: &[PathBuf]) -> Result<(), Failure> {
    require_file(checkpoint)?;
    let model = load_checkpoint(checkpoint)?;
    let trees = read_pages(pages)?;
    let params = model.prep_params();
    let results = ctx.exec.try_map(&trees, |tree| -> Result<_, simpdom::Error> {
        let (_, tokens) = prepare_tree(tree, params)?;
        let values = model.extract_prepared(tree, &tokens)?.values;
        let attributes: serde_json::Map<String, serde_json::Value> =
            values.into_iter().map(|(a, v)| (a, json!([v]))).collect();
        Ok(json!({ "page": tree.page_id(), "attributes": attributes }))
    })?;
    print_json(&json!({
        "config": model.config(),
        "checkpoint": checkpoint,
        "attributes": model.attributes,
        "pages": results,
    }))
}

fn node_json(tree: &DomTree, id: NodeId) -> serde_json::Value {
    let n = &tree.nodes()[id.0];
    json!({ "xpath": n.indexed_xpath, "text": n.text })
}

/// One compact JSON object per line, one line per variable node.
pub fn inspect(
    page: &Path,
    context: &[PathBuf],
    config: Option<&Path>,
    k: Option<usize>,
    untrimmed: bool,
    node_xpath: Option<&str>,
) -> Result<(), Failure> {
    let config = load_config(config)?;
    let k = k.unwrap_or(config.k_ancestors);
    let mut paths = vec![page.to_path_buf()];
    paths.extend_from_slice(context);
    let trees = read_pages(&paths)?;
    let tree = &trees[0];
    log::info!("k = {k}, max_friends = {}", if untrimmed { "all".to_string() } else { config.max_friends.to_string() });
    for (id, circle) in extract_circles(tree, k)? {
        let circle = if untrimmed { circle } else { trim_friends(&circle, tree, config.max_friends) };
        let xpath = &tree.nodes()[id.0].indexed_xpath;
        if node_xpath.is_some_and(|x| x != xpath) {
            continue;
        }
        let mut obj = node_json(tree, id);
        obj["partner"] = circle.partner.map_or(serde_json::Value::Null, |p| node_json(tree, p));
        obj["friends"] = circle.friends.iter().map(|&f| node_json(tree, f)).collect();
        emit(&(serde_json::to_string(&obj)? + "\n"))?;
    }
    Ok(())
}
