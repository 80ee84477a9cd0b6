//! Reader and writer for the logged-feedback CSV schema:
//! `timestamp, item_id, position, click_indicator, action_prob`, followed by
//! hashed categorical user features (`user_feature_*`) and numerical
//! user-item affinity scores (`user-item_affinity_*`).
//!
//! An unnamed leading index column is ignored. `click` and
//! `propensity_score` are accepted as aliases. Gzip input is detected from
//! its magic bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use flate2::read::GzDecoder;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::BanditFeedback;
use crate::error::{OpeError, Result};

pub const DEFAULT_HASH_DIMS: usize = 64;
const OBD_LEN_LIST: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Campaign {
    All,
    Men,
    Women,
}

impl Campaign {
    pub fn n_actions(self) -> usize {
        match self {
            Campaign::All => 80,
            Campaign::Men => 34,
            Campaign::Women => 46,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Campaign::All => "all",
            Campaign::Men => "men",
            Campaign::Women => "women",
        }
    }
}

impl FromStr for Campaign {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Campaign::All),
            "men" => Ok(Campaign::Men),
            "women" => Ok(Campaign::Women),
            other => Err(OpeError::InvalidArgument(format!("unknown campaign `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorPolicy {
    Random,
    Bts,
}

impl BehaviorPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorPolicy::Random => "random",
            BehaviorPolicy::Bts => "bts",
        }
    }
}

impl FromStr for BehaviorPolicy {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(BehaviorPolicy::Random),
            "bts" => Ok(BehaviorPolicy::Bts),
            other => Err(OpeError::InvalidArgument(format!("unknown behavior policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub campaign: Campaign,
    pub behavior: BehaviorPolicy,
    /// Width of the hashed categorical block.
    pub hash_dims: usize,
    /// Overrides the campaign's item count.
    pub n_actions: Option<usize>,
    /// Overrides the three-slot layout.
    pub len_list: Option<usize>,
}

impl LoadOptions {
    pub fn new(campaign: Campaign, behavior: BehaviorPolicy) -> Self {
        Self { campaign, behavior, hash_dims: DEFAULT_HASH_DIMS, n_actions: None, len_list: None }
    }

    /// `<root>/<behavior>/<campaign>/<campaign>.csv`, the layout of the
    /// published dataset.
    pub fn default_path(&self, root: &Path) -> PathBuf {
        root.join(self.behavior.as_str())
            .join(self.campaign.as_str())
            .join(format!("{}.csv", self.campaign.as_str()))
    }

    fn n_actions(&self) -> usize {
        self.n_actions.unwrap_or(self.campaign.n_actions())
    }

    fn len_list(&self) -> usize {
        self.len_list.unwrap_or(OBD_LEN_LIST)
    }
}

/// Loads a CSV (optionally gzipped) file.
pub fn load_obd(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<BanditFeedback> {
    let mut reader = BufReader::new(File::open(path.as_ref())?);
    let gz = reader.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    if gz {
        read_obd(GzDecoder::new(reader), opts)
    } else {
        read_obd(reader, opts)
    }
}

struct Columns {
    timestamp: usize,
    item_id: usize,
    position: usize,
    click: usize,
    action_prob: usize,
    categorical: Vec<(usize, String)>,
    numeric: Vec<usize>,
}

fn resolve_columns(headers: &csv::StringRecord) -> Result<Columns> {
    let find = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let require = |names: &[&str]| find(names).ok_or_else(|| OpeError::MissingColumn(names[0].to_string()));
    let mut categorical = Vec::new();
    let mut numeric = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h.starts_with("user_feature") {
            categorical.push((i, h.to_string()));
        } else if h.starts_with("user-item_affinity") || h.starts_with("user_item_affinity") {
            numeric.push(i);
        }
    }
    Ok(Columns {
        timestamp: require(&["timestamp"])?,
        item_id: require(&["item_id"])?,
        position: require(&["position"])?,
        click: require(&["click_indicator", "click"])?,
        action_prob: require(&["action_prob", "propensity_score"])?,
        categorical,
        numeric,
    })
}

/// Reads the CSV schema from any reader, one pass.
pub fn read_obd<R: Read>(reader: R, opts: &LoadOptions) -> Result<BanditFeedback> {
    if opts.hash_dims == 0 {
        return Err(OpeError::Config("hash_dims must be positive".into()));
    }
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let cols = resolve_columns(csv.headers()?)?;
    let hash_dims = if cols.categorical.is_empty() { 0 } else { opts.hash_dims };
    let dim = hash_dims + cols.numeric.len();
    let (n_actions, len_list) = (opts.n_actions(), opts.len_list());

    let mut flat = Vec::new();
    let mut actions = Vec::new();
    let mut positions = Vec::new();
    let mut rewards = Vec::new();
    let mut propensities = Vec::new();
    let mut timestamps = Vec::new();

    for (row, rec) in csv.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let data_err = |message: String| OpeError::Data { row, message };

        timestamps.push(parse_timestamp(field(cols.timestamp)).ok_or_else(|| {
            data_err(format!("unparseable timestamp `{}`", field(cols.timestamp)))
        })?);
        let item: usize = field(cols.item_id)
            .parse()
            .map_err(|_| data_err(format!("item_id `{}` is not a non-negative integer", field(cols.item_id))))?;
        let position: usize = field(cols.position)
            .parse()
            .map_err(|_| data_err(format!("position `{}` is not a positive integer", field(cols.position))))?;
        if position == 0 || position > len_list {
            return Err(data_err(format!("position {position} outside 1..={len_list}")));
        }
        let reward: f64 = field(cols.click)
            .parse()
            .map_err(|_| data_err(format!("click_indicator `{}` is not numeric", field(cols.click))))?;
        let prob: f64 = field(cols.action_prob)
            .parse()
            .map_err(|_| data_err(format!("action_prob `{}` is not numeric", field(cols.action_prob))))?;
        if !(prob > 0.0) {
            return Err(data_err(format!("action_prob {prob} must be positive")));
        }
        if item >= n_actions {
            return Err(data_err(format!("item_id {item} >= n_actions {n_actions}")));
        }

        let start = flat.len();
        flat.resize(start + dim, 0.0);
        for (i, name) in &cols.categorical {
            flat[start + feature_bucket(name, field(*i), hash_dims)] += 1.0;
        }
        for (j, &i) in cols.numeric.iter().enumerate() {
            flat[start + hash_dims + j] = field(i)
                .parse()
                .map_err(|_| data_err(format!("affinity `{}` is not numeric", field(i))))?;
        }

        actions.push(item);
        positions.push(position - 1);
        rewards.push(reward);
        propensities.push(prob);
    }

    let n = actions.len();
    let contexts = Array2::from_shape_vec((n, dim), flat).map_err(|e| OpeError::Shape(e.to_string()))?;
    BanditFeedback::new(n_actions, len_list, contexts, actions, positions, rewards, propensities, Some(timestamps))
}

/// Writes `fb` in the same schema. Contexts become `user-item_affinity_*`
/// columns and the timestamp is the stored ordering key or the row index.
pub fn write_obd<W: Write>(fb: &BanditFeedback, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "timestamp".to_string(),
        "item_id".into(),
        "position".into(),
        "click_indicator".into(),
        "action_prob".into(),
    ];
    header.extend((0..fb.dim_context()).map(|j| format!("user-item_affinity_{j}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for t in 0..fb.n_rounds() {
        row.clear();
        row.push(fb.timestamps().map_or(t as i64, |ts| ts[t]).to_string());
        row.push(fb.actions()[t].to_string());
        row.push((fb.positions()[t] + 1).to_string());
        row.push(fb.rewards()[t].to_string());
        row.push(fb.propensities()[t].to_string());
        row.extend(fb.contexts().row(t).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f%:z") {
        return Some(dt.timestamp_micros());
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_micros());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f")
        .ok()
        .map(|dt| dt.and_utc().timestamp_micros())
}

/// FNV-1a over `column=value`, reduced modulo the block width.
fn feature_bucket(column: &str, value: &str, dims: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in column.bytes().chain(std::iter::once(b'=')).chain(value.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % dims as u64) as usize
}
