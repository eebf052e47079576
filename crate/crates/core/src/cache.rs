//! On-disk cache of preprocessed sites (`<cache>/<vertical>/<site>.json`).
//! An entry is reused only when its format version and the hash of its
//! inputs (page bytes, ground truth, attributes, preprocessing parameters)
//! match.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exec::Exec;
use crate::html::FORMATTING_TABLE_VERSION;
use crate::ingest::{list_sites, read_attributes, read_site_raw, Gold, SiteCorpus};
use crate::prepare::{prepare_site, PrepParams, PreparedSite};
use crate::{Error, Result};

pub const CACHE_VERSION: u32 = 1;
pub const CACHE_ENV: &str = "SIMPDOM_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".simpdom-cache";

/// Explicit path, else `$SIMPDOM_CACHE_DIR`, else `./.simpdom-cache`.
pub fn cache_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheStatus {
    Hit,
    Built,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    version: u32,
    formatting_version: u32,
    input_sha256: String,
    params: PrepParams,
    site: PreparedSite,
}

#[derive(Deserialize)]
struct Header {
    version: u32,
    formatting_version: u32,
    input_sha256: String,
}

fn input_hash(attributes: &[String], raw: &[(String, Vec<u8>, Gold)], params: &PrepParams) -> Result<String> {
    let mut h = Sha256::new();
    h.update(CACHE_VERSION.to_le_bytes());
    h.update(FORMATTING_TABLE_VERSION.to_le_bytes());
    h.update(serde_json::to_vec(attributes)?);
    h.update(serde_json::to_vec(params)?);
    for (id, bytes, gold) in raw {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
        h.update(serde_json::to_vec(gold)?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn entry_path(cache: &Path, vertical: &str, site: &str) -> PathBuf {
    cache.join(vertical).join(format!("{site}.json"))
}

/// Loads one site from the cache or rebuilds and stores it.
pub fn load_or_build_site(
    cache: &Path,
    root: &Path,
    vertical: &str,
    site: &str,
    attributes: &[String],
    params: PrepParams,
) -> Result<(PreparedSite, CacheStatus)> {
    let raw = read_site_raw(root, vertical, site)?;
    let hash = input_hash(attributes, &raw, &params)?;
    let path = entry_path(cache, vertical, site);
    if let Ok(bytes) = fs::read(&path) {
        let fresh = serde_json::from_slice::<Header>(&bytes).is_ok_and(|h| {
            h.version == CACHE_VERSION && h.formatting_version == FORMATTING_TABLE_VERSION && h.input_sha256 == hash
        });
        if fresh {
            if let Ok(entry) = serde_json::from_slice::<Entry>(&bytes) {
                return Ok((entry.site, CacheStatus::Hit));
            }
        }
        log::info!("cache entry {} is stale, rebuilding", path.display());
    }
    let corpus = SiteCorpus::build(vertical, site, attributes.to_vec(), raw)?;
    let prepared = prepare_site(&corpus, params)?;
    let entry = Entry {
        version: CACHE_VERSION,
        formatting_version: FORMATTING_TABLE_VERSION,
        input_sha256: hash,
        params,
        site: prepared,
    };
    let dir = path.parent().unwrap_or(cache);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(&entry)?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok((entry.site, CacheStatus::Built))
}

/// Every site of a vertical through the cache, sorted by site id. With
/// `cache` unset nothing is read or written.
pub fn load_prepared_vertical(
    cache: Option<&Path>,
    root: &Path,
    vertical: &str,
    params: PrepParams,
    exec: Exec,
) -> Result<Vec<(PreparedSite, CacheStatus)>> {
    let attributes = read_attributes(&root.join(vertical).join("attributes.txt"))?;
    let sites = list_sites(root, vertical)?;
    exec.try_map(&sites, |site| match cache {
        Some(c) => load_or_build_site(c, root, vertical, site, &attributes, params),
        None => {
            let raw = read_site_raw(root, vertical, site)?;
            let corpus = SiteCorpus::build(vertical, site, attributes.clone(), raw)?;
            Ok((prepare_site(&corpus, params)?, CacheStatus::Built))
        }
    })
}
