//! Pipeline configuration file (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use metaselect_core::cf::{AlsConfig, BprConfig, LmfConfig};
use metaselect_core::metalearn::{CvOptions, Grid, MetaLearnerId};
use metaselect_core::repr::{CdaeConfig, EmbeddingKind, EmbeddingSource, VaeConfig};
use metaselect_core::BaseLearnerId;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every stage derives its own seed from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub base: BaseSection,
    #[serde(default = "default_embed")]
    pub embed: Vec<EmbedEntry>,
    #[serde(default)]
    pub meta: MetaSection,
}

fn default_seed() -> u64 {
    42
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Relative paths resolve against the config file's directory.
    pub ratings: PathBuf,
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("work")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    pub delimiter: String,
    pub has_header: bool,
    pub threshold: f64,
    pub min_interactions: usize,
    pub split: [f64; 3],
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            delimiter: ",".into(),
            has_header: true,
            threshold: 3.5,
            min_interactions: 10,
            split: [0.7, 0.1, 0.2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { k: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlsSection {
    pub factors: usize,
    pub reg: f64,
    pub alpha: f64,
    pub iters: usize,
}

impl Default for AlsSection {
    fn default() -> Self {
        let d = AlsConfig::default();
        AlsSection { factors: d.factors, reg: d.reg, alpha: d.alpha, iters: d.iters }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdSection {
    pub factors: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    /// Sampled negatives per positive (LMF only).
    pub neg_ratio: usize,
}

impl Default for SgdSection {
    fn default() -> Self {
        let d = LmfConfig::default();
        SgdSection { factors: d.factors, lr: d.lr, reg: d.reg, epochs: d.epochs, neg_ratio: d.neg_ratio }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseSection {
    pub als: AlsSection,
    pub bpr: SgdSection,
    pub lmf: SgdSection,
}

impl BaseSection {
    pub fn als(&self) -> AlsConfig {
        AlsConfig { factors: self.als.factors, reg: self.als.reg, alpha: self.als.alpha, iters: self.als.iters }
    }

    pub fn bpr(&self) -> BprConfig {
        BprConfig { factors: self.bpr.factors, lr: self.bpr.lr, reg: self.bpr.reg, epochs: self.bpr.epochs }
    }

    pub fn lmf(&self) -> LmfConfig {
        LmfConfig {
            factors: self.lmf.factors,
            lr: self.lmf.lr,
            reg: self.lmf.reg,
            neg_ratio: self.lmf.neg_ratio,
            epochs: self.lmf.epochs,
        }
    }
}

/// One embedding technique. Keys not applicable to `kind` are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedEntry {
    pub kind: String,
    pub size: usize,
    /// Output name; defaults to kind + size, e.g. `CDAE50`.
    pub name: Option<String>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub l2: Option<f64>,
    pub corruption: Option<f64>,
    pub hidden: Option<usize>,
    pub beta: Option<f64>,
    pub dropout: Option<f64>,
    pub batch_size: Option<usize>,
}

impl EmbedEntry {
    pub fn simple(kind: &str, size: usize) -> Self {
        EmbedEntry {
            kind: kind.into(),
            size,
            name: None,
            epochs: None,
            lr: None,
            l2: None,
            corruption: None,
            hidden: None,
            beta: None,
            dropout: None,
            batch_size: None,
        }
    }

    pub fn kind(&self) -> Result<EmbeddingKind> {
        Ok(self.kind.parse::<EmbeddingKind>()?)
    }

    pub fn source(&self) -> Result<EmbeddingSource> {
        Ok(EmbeddingSource { kind: self.kind()?, size: self.size })
    }

    pub fn name(&self) -> Result<String> {
        Ok(match &self.name {
            Some(n) => n.clone(),
            None => self.source()?.to_string(),
        })
    }

    pub fn cdae(&self) -> CdaeConfig {
        let d = CdaeConfig::default();
        CdaeConfig {
            hidden: self.size,
            corruption: self.corruption.unwrap_or(d.corruption),
            lr: self.lr.unwrap_or(d.lr),
            l2: self.l2.unwrap_or(d.l2),
            epochs: self.epochs.unwrap_or(d.epochs),
        }
    }

    pub fn vae(&self) -> VaeConfig {
        let d = VaeConfig::default();
        VaeConfig {
            latent: self.size,
            hidden: self.hidden.unwrap_or(d.hidden),
            beta: self.beta.unwrap_or(d.beta),
            lr: self.lr.unwrap_or(d.lr),
            l2: self.l2.unwrap_or(d.l2),
            dropout: self.dropout.unwrap_or(d.dropout),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            user_split: d.user_split,
        }
    }
}

fn default_embed() -> Vec<EmbedEntry> {
    vec![EmbedEntry::simple("VAE", 200), EmbedEntry::simple("CDAE", 50), EmbedEntry::simple("CDAE", 200)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaSection {
    pub learners: Vec<String>,
    pub normalize: Vec<bool>,
    pub smote: Vec<bool>,
    pub remove_zeroes: Vec<bool>,
    pub folds: usize,
    pub smote_k: usize,
    /// When false the first value of each grid entry is used directly.
    pub grid_search: bool,
    /// Per-learner grids, replacing that learner's default grid.
    pub grids: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    /// Served for `Zeroes` predictions and users without an embedding.
    pub fallback: String,
}

impl Default for MetaSection {
    fn default() -> Self {
        MetaSection {
            learners: MetaLearnerId::ALL.iter().map(|l| l.name().to_owned()).collect(),
            normalize: vec![true],
            smote: vec![false],
            remove_zeroes: vec![false],
            folds: 5,
            smote_k: 5,
            grid_search: true,
            grids: BTreeMap::new(),
            fallback: "MostPopular".into(),
        }
    }
}

/// One cell of the meta experiment grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub normalize: bool,
    pub smote: bool,
    pub remove_zeroes: bool,
}

impl Variant {
    pub fn tag(&self) -> String {
        format!(
            "{}_{}_{}",
            if self.normalize { "norm" } else { "raw" },
            if self.smote { "smote" } else { "nosmote" },
            if self.remove_zeroes { "nozeroes" } else { "all" }
        )
    }

    pub fn cv_options(&self, smote_k: usize) -> CvOptions {
        CvOptions { normalize: self.normalize, smote: self.smote, smote_k }
    }
}

impl MetaSection {
    pub fn learner_ids(&self) -> Result<Vec<MetaLearnerId>> {
        self.learners.iter().map(|l| Ok(l.parse::<MetaLearnerId>()?)).collect()
    }

    pub fn fallback(&self) -> Result<BaseLearnerId> {
        Ok(self.fallback.parse::<BaseLearnerId>()?)
    }

    pub fn grid(&self, learner: MetaLearnerId) -> Result<Grid> {
        for (name, g) in &self.grids {
            if name.parse::<MetaLearnerId>()? == learner {
                return Ok(g.clone());
            }
        }
        Ok(learner.default_grid())
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &remove_zeroes in &self.remove_zeroes {
            for &normalize in &self.normalize {
                for &smote in &self.smote {
                    out.push(Variant { normalize, smote, remove_zeroes });
                }
            }
        }
        out
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates; relative paths become relative to the file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.paths.ratings.is_relative() {
            cfg.paths.ratings = base.join(&cfg.paths.ratings);
        }
        if cfg.paths.work_dir.is_relative() {
            cfg.paths.work_dir = base.join(&cfg.paths.work_dir);
        }
        Ok(cfg)
    }

    pub fn delimiter(&self) -> Result<u8> {
        match self.ingest.delimiter.as_str() {
            "\\t" | "tab" => Ok(b'\t'),
            d if d.len() == 1 => Ok(d.as_bytes()[0]),
            d => bail!("delimiter must be a single byte, got `{d}`"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.delimiter()?;
        let s = self.ingest.split;
        if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || ((s[0] + s[1] + s[2]) - 1.0).abs() > 1e-9 {
            bail!("ingest.split must be three non-negative ratios summing to 1");
        }
        if !self.ingest.threshold.is_finite() {
            bail!("ingest.threshold must be finite");
        }
        if self.eval.k == 0 {
            bail!("eval.k must be >= 1");
        }
        self.base.als().validate()?;
        if self.base.bpr.factors == 0 || self.base.lmf.factors == 0 || self.base.lmf.neg_ratio == 0 {
            bail!("base.bpr/base.lmf need factors >= 1 and neg_ratio >= 1");
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &self.embed {
            let kind = e.kind()?;
            if e.size == 0 {
                bail!("embed entry `{}` needs size >= 1", e.kind);
            }
            let foreign = match kind {
                EmbeddingKind::Cdae => [("hidden", e.hidden.is_some()), ("beta", e.beta.is_some()), ("dropout", e.dropout.is_some()), ("batch_size", e.batch_size.is_some())].to_vec(),
                EmbeddingKind::Vae => [("corruption", e.corruption.is_some())].to_vec(),
            };
            if let Some((k, _)) = foreign.iter().find(|(_, set)| *set) {
                bail!("embed key `{k}` does not apply to {}", kind.name());
            }
            let name = e.name()?;
            if name.is_empty() || name.contains(['/', '\\']) || !names.insert(name.clone()) {
                bail!("embedding name `{name}` is empty, contains a path separator or is repeated");
            }
        }
        let learners = self.meta.learner_ids()?;
        if learners.is_empty() {
            bail!("meta.learners is empty");
        }
        for l in &learners {
            let grid = self.meta.grid(*l)?;
            if grid.is_empty() || grid.values().any(|v| v.is_empty()) {
                bail!("grid for {l} needs at least one value per key");
            }
            for key in grid.keys() {
                l.resolve(&[(key.clone(), 0.0)].into())?;
            }
        }
        if self.meta.normalize.is_empty() || self.meta.smote.is_empty() || self.meta.remove_zeroes.is_empty() {
            bail!("meta.normalize, meta.smote and meta.remove_zeroes each need at least one value");
        }
        if self.meta.folds < 2 || self.meta.smote_k == 0 {
            bail!("meta.folds must be >= 2 and meta.smote_k >= 1");
        }
        self.meta.fallback()?;
        Ok(())
    }
}
