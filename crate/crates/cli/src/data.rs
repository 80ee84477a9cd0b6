use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ope_core::data::{load_obd, BehaviorPolicy, Campaign, LoadOptions};
use ope_core::BanditFeedback;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CampaignArg {
    All,
    Men,
    Women,
}

impl From<CampaignArg> for Campaign {
    fn from(c: CampaignArg) -> Self {
        match c {
            CampaignArg::All => Campaign::All,
            CampaignArg::Men => Campaign::Men,
            CampaignArg::Women => Campaign::Women,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BehaviorArg {
    Random,
    Bts,
}

impl From<BehaviorArg> for BehaviorPolicy {
    fn from(b: BehaviorArg) -> Self {
        match b {
            BehaviorArg::Random => BehaviorPolicy::Random,
            BehaviorArg::Bts => BehaviorPolicy::Bts,
        }
    }
}

/// How records are parsed, shared by every command that reads a log.
#[derive(Debug, Clone, Args)]
pub struct SchemaArgs {
    #[arg(long, value_enum, default_value_t = CampaignArg::All)]
    pub campaign: CampaignArg,
    /// Number of actions; defaults to the campaign's item count, or 10 for
    /// `benchmark --synthetic`.
    #[arg(long)]
    pub n_actions: Option<usize>,
    /// Slots per impression; defaults to 3.
    #[arg(long)]
    pub len_list: Option<usize>,
    /// Width of the hashed user-feature block.
    #[arg(long, default_value_t = ope_core::data::DEFAULT_HASH_DIMS)]
    pub hash_dims: usize,
}

impl SchemaArgs {
    pub fn options(&self, behavior: BehaviorArg) -> LoadOptions {
        let mut o = LoadOptions::new(self.campaign.into(), behavior.into());
        o.n_actions = self.n_actions;
        o.len_list = self.len_list;
        o.hash_dims = self.hash_dims;
        o
    }
}

/// Reads an explicit file, or `<root>/<behavior>/<campaign>/<campaign>.csv`.
pub fn load(path: Option<&Path>, root: Option<&Path>, schema: &SchemaArgs, behavior: BehaviorArg) -> Result<BanditFeedback> {
    let opts = schema.options(behavior);
    let path: PathBuf = match (path, root) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(root)) => opts.default_path(root),
        (None, None) => bail!("no input: pass a data file or set --data-dir / OPE_BENCH_DATA_DIR"),
    };
    load_obd(&path, &opts).with_context(|| format!("cannot load {}", path.display()))
}
