//! The pipeline stages. Each stage reads its upstream artifacts from the work
//! directory, writes its own, and records them in the manifest.

use std::collections::BTreeMap;
use std::io::BufReader;

use anyhow::{anyhow, bail, Context as _};
use log::{info, warn};
use metaselect_core::cf::{train_als, train_bpr, train_lmf, train_most_popular, BaseModel};
use metaselect_core::eval::{compute_metatarget, evaluate_all, EvalConfig};
use metaselect_core::ingest::{filter_min_interactions, load_ratings, split_per_user, to_implicit, IdMap, LoadOptions};
use metaselect_core::metalearn::report::render_metrics;
use metaselect_core::metalearn::{
    cross_validate, enumerate_grid, fit_pipeline, grid_search, impact_baselines, ImpactContext, MetaLearnerId,
    MetaModel, MetaReport,
};
use metaselect_core::metaset::{assemble, make_folds, remove_zeroes, MetaDataset};
use metaselect_core::repr::{extract_embeddings, train_cdae, train_vae, EmbeddingKind, EmbeddingMatrix, EmbeddingModel};
use metaselect_core::snapshot::{read_base_model, write_base_model, write_embedding};
use metaselect_core::{BaseLearnerId, MetaLabel, MetaTarget, NdcgTable, PerUserSplit, SparseBinary};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{PipelineConfig, Variant};
use crate::error::{CliError, CliResult};
use crate::manifest::{fingerprint, sha256_hex, Outputs, StageRecord, WorkDir};

pub const PREPARE: &str = "prepare";
pub const BASE: &str = "base";
pub const EMBED: &str = "embed";
pub const META: &str = "meta";

/// Stages whose records become stale when the key stage reruns.
fn dependents(stage: &str) -> &'static [&'static str] {
    match stage {
        PREPARE => &[BASE, EMBED, META],
        BASE | EMBED => &[META],
        _ => &[],
    }
}

fn upstream(stage: &str) -> &'static [&'static str] {
    match stage {
        BASE | EMBED => &[PREPARE],
        META => &[BASE, EMBED],
        _ => &[],
    }
}

fn stage_seed(root: u64, stage: &str) -> u64 {
    let offset = match stage {
        PREPARE => 0,
        BASE => 1,
        EMBED => 2,
        _ => 3,
    };
    root.wrapping_add(offset)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

pub struct Context {
    pub cfg: PipelineConfig,
    pub work: WorkDir,
    /// Rerun even when the manifest says the stage is up to date.
    pub force: bool,
}

impl Context {
    pub fn new(cfg: PipelineConfig, force: bool) -> Self {
        let work = WorkDir::new(cfg.paths.work_dir.clone());
        Context { cfg, work, force }
    }

    /// The record of a completed stage, with its outputs verified.
    pub fn completed(&self, stage: &str) -> CliResult<StageRecord> {
        let m = self.work.load_manifest()?;
        let rec = m
            .stages
            .get(stage)
            .cloned()
            .ok_or_else(|| CliError::stage(stage, anyhow!("stage `{stage}` has not been run")))?;
        self.work.verify_all(&rec)?;
        Ok(rec)
    }

    fn run_stage(
        &self,
        stage: &str,
        config: serde_json::Value,
        body: impl FnOnce(u64, &mut Outputs) -> anyhow::Result<()>,
    ) -> CliResult<StageStatus> {
        let mut manifest = self.work.load_manifest()?;
        let mut ups = Vec::new();
        for &u in upstream(stage) {
            let rec = manifest
                .stages
                .get(u)
                .ok_or_else(|| CliError::stage(stage, anyhow!("run `{u}` before `{stage}`")))?;
            self.work.verify_all(rec)?;
            ups.push(rec);
        }
        let seed = stage_seed(self.cfg.seed, stage);
        let fp = fingerprint(stage, &config, seed, &ups);
        if let Some(rec) = manifest.stages.get(stage) {
            if rec.fingerprint == fp && !self.force {
                self.work.verify_all(rec)?;
                info!("{stage}: up to date");
                return Ok(StageStatus::UpToDate);
            }
        }
        let mut out = Outputs::new(&self.work);
        body(seed, &mut out).map_err(|e| CliError::stage(stage, e))?;
        for d in dependents(stage) {
            manifest.stages.remove(*d);
        }
        manifest
            .stages
            .insert(stage.to_owned(), StageRecord { fingerprint: fp, seed, config, outputs: out.hashes });
        self.work.save_manifest(&manifest)?;
        Ok(StageStatus::Ran)
    }

    fn read(&self, rel: &str) -> anyhow::Result<Vec<u8>> {
        std::fs::read(self.work.path(rel)).with_context(|| format!("reading {rel}"))
    }

    fn read_coo(&self, rel: &str) -> anyhow::Result<SparseBinary> {
        Ok(SparseBinary::read_coo(BufReader::new(&self.read(rel)?[..]))?)
    }

    fn read_ids(&self, rel: &str) -> anyhow::Result<IdMap> {
        let text = String::from_utf8(self.read(rel)?)?;
        Ok(IdMap::from_ids(text.lines().map(str::to_owned).collect())?)
    }
}

fn ids_text(ids: &[String]) -> Vec<u8> {
    let mut s = String::new();
    for id in ids {
        s.push_str(id);
        s.push('\n');
    }
    s.into_bytes()
}

fn pretty_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Artifacts of `prepare`, as later stages read them.
pub struct Prepared {
    pub users: IdMap,
    pub items: IdMap,
    pub split: PerUserSplit,
}

pub fn load_prepared(ctx: &Context) -> anyhow::Result<Prepared> {
    let s = ctx.cfg.ingest.split;
    Ok(Prepared {
        users: ctx.read_ids("prepare/users.txt")?,
        items: ctx.read_ids("prepare/items.txt")?,
        split: PerUserSplit {
            train: ctx.read_coo("prepare/train.coo")?,
            validation: ctx.read_coo("prepare/validation.coo")?,
            test: ctx.read_coo("prepare/test.coo")?,
            ratios: (s[0], s[1], s[2]),
            seed: stage_seed(ctx.cfg.seed, PREPARE),
        },
    })
}

pub fn cmd_prepare(ctx: &Context) -> CliResult<StageStatus> {
    let ratings_path = &ctx.cfg.paths.ratings;
    let bytes = std::fs::read(ratings_path)
        .map_err(|e| CliError::stage(PREPARE, anyhow!("reading {}: {e}", ratings_path.display())))?;
    let config = json!({ "ingest": ctx.cfg.ingest, "ratings_sha256": sha256_hex(&bytes) });
    ctx.run_stage(PREPARE, config, |seed, out| {
        let ing = &ctx.cfg.ingest;
        let opts = LoadOptions { delimiter: ctx.cfg.delimiter()?, has_header: ing.has_header };
        let explicit = load_ratings(ratings_path, &opts)?;
        let implicit = filter_min_interactions(&to_implicit(&explicit, ing.threshold)?, ing.min_interactions)?;
        let split = split_per_user(&implicit, (ing.split[0], ing.split[1], ing.split[2]), seed)?;
        info!(
            "prepare: {} ratings -> {} users, {} items, {} interactions",
            explicit.rows.len(),
            implicit.n_users(),
            implicit.n_items(),
            implicit.interactions.nnz()
        );
        out.write("prepare/users.txt", &ids_text(implicit.users.ids()))?;
        out.write("prepare/items.txt", &ids_text(implicit.items.ids()))?;
        for (name, m) in [
            ("implicit", &implicit.interactions),
            ("train", &split.train),
            ("validation", &split.validation),
            ("test", &split.test),
        ] {
            out.write_with(&format!("prepare/{name}.coo"), |w| m.write_coo(w))?;
        }
        let summary = json!({
            "ratings": explicit.rows.len(),
            "users": implicit.n_users(),
            "items": implicit.n_items(),
            "interactions": implicit.interactions.nnz(),
            "train": split.train.nnz(),
            "validation": split.validation.nnz(),
            "test": split.test.nnz(),
        });
        out.write("prepare/summary.json", &pretty_json(&summary))?;
        Ok(())
    })
}

pub fn base_model_path(b: BaseLearnerId) -> String {
    format!("base/{}.mcf2", b.key())
}

pub fn cmd_base(ctx: &Context) -> CliResult<StageStatus> {
    let fallback = ctx.cfg.meta.fallback().map_err(CliError::Config)?;
    let config = json!({ "eval": ctx.cfg.eval, "base": ctx.cfg.base, "fallback": fallback });
    ctx.run_stage(BASE, config, |seed, out| {
        let p = load_prepared(ctx)?;
        let train = &p.split.train;
        let models = vec![
            BaseModel::Mf(train_als(train, &ctx.cfg.base.als(), seed)?),
            BaseModel::Mf(train_bpr(train, &ctx.cfg.base.bpr(), seed)?),
            BaseModel::Mf(train_lmf(train, &ctx.cfg.base.lmf(), seed)?),
            BaseModel::Popular(train_most_popular(train)?),
        ];
        for m in &models {
            out.write_with(&base_model_path(m.learner()), |w| write_base_model(w, m))?;
        }
        let table = evaluate_all(&models, &p.split, p.users.ids(), &EvalConfig { k: ctx.cfg.eval.k })?;
        let target = compute_metatarget(&table);
        out.write_with("base/ndcg.csv", |w| table.write_csv(&target, w))?;
        let mut labels = String::from("user_id,label\n");
        for (u, l) in table.user_ids.iter().zip(&target.labels) {
            labels.push_str(&format!("{u},{l}\n"));
        }
        out.write("base/labels.csv", labels.as_bytes())?;
        let baselines = impact_baselines(&table, fallback)?;
        info!("base: oracle impact {:.4}, label counts {:?}", baselines.perfect, target.counts());
        out.write("reports/baselines.json", &pretty_json(&baselines))?;
        out.write("reports/baselines.txt", baselines.to_text().as_bytes())?;
        Ok(())
    })
}

pub fn embedding_path(name: &str) -> String {
    format!("embed/{name}.csv")
}

pub fn cmd_embed(ctx: &Context) -> CliResult<StageStatus> {
    let config = json!({ "embed": ctx.cfg.embed });
    ctx.run_stage(EMBED, config, |seed, out| {
        let p = load_prepared(ctx)?;
        for (i, entry) in ctx.cfg.embed.iter().enumerate() {
            let name = entry.name()?;
            let entry_seed = seed.wrapping_add(i as u64 * 1000);
            let emb = match entry.kind()? {
                EmbeddingKind::Cdae => {
                    let m = train_cdae(&p.split.train, &entry.cdae(), entry_seed)?;
                    extract_embeddings(EmbeddingModel::Cdae(&m), &p.split.train, p.users.ids())?
                }
                EmbeddingKind::Vae => {
                    let m = train_vae(&p.split.train, &entry.vae(), entry_seed)?;
                    info!("embed: {name} best validation objective {:.4} at epoch {}", m.best_validation, m.best_epoch);
                    extract_embeddings(EmbeddingModel::Vae(&m), &p.split.train, p.users.ids())?
                }
            };
            out.write_with(&embedding_path(&name), |w| emb.write_csv(w))?;
            out.write_with(&format!("embed/{name}.mcf2"), |w| write_embedding(w, &emb.values, emb.source))?;
            info!("embed: wrote {name} ({} x {})", emb.n_users(), emb.dim());
        }
        Ok(())
    })
}

/// The trained selector that `infer` serves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorArtifact {
    pub embedding: String,
    pub normalize: bool,
    pub smote: bool,
    pub remove_zeroes: bool,
    pub cv_accuracy: f64,
    pub model: MetaModel,
}

pub const SELECTOR_PATH: &str = "models/meta_model.json";

pub fn report_stem(embedding: &str, v: &Variant, learner: MetaLearnerId) -> String {
    format!("reports/{embedding}_{}_{}", v.tag(), learner.name())
}

pub fn read_ndcg(ctx: &Context) -> anyhow::Result<(NdcgTable, MetaTarget)> {
    Ok(NdcgTable::read_csv(BufReader::new(&ctx.read("base/ndcg.csv")?[..]))?)
}

pub fn read_embedding(ctx: &Context, entry: &crate::config::EmbedEntry) -> anyhow::Result<EmbeddingMatrix> {
    let bytes = ctx.read(&embedding_path(&entry.name()?))?;
    Ok(EmbeddingMatrix::read_csv(BufReader::new(&bytes[..]), entry.source()?)?)
}

struct Cell {
    embedding: String,
    variant: Variant,
    learner: MetaLearnerId,
    report: MetaReport,
}

pub fn cmd_meta(ctx: &Context) -> CliResult<StageStatus> {
    let meta = &ctx.cfg.meta;
    let learners = meta.learner_ids().map_err(CliError::Config)?;
    let fallback = meta.fallback().map_err(CliError::Config)?;
    let mut grids = BTreeMap::new();
    for &l in &learners {
        grids.insert(l, meta.grid(l).map_err(CliError::Config)?);
    }
    let config = json!({ "meta": meta, "embeddings": ctx.cfg.embed.iter().map(|e| e.name().ok()).collect::<Vec<_>>() });
    ctx.run_stage(META, config, |seed, out| {
        let (table, target) = read_ndcg(ctx)?;
        let mut cells: Vec<Cell> = Vec::new();
        let mut failures: Vec<String> = Vec::new();
        let mut datasets: BTreeMap<(String, bool), MetaDataset> = BTreeMap::new();
        let mut proportions = String::from("variant,label,count,proportion\n");
        let mut proportion_done = std::collections::BTreeSet::new();
        for entry in &ctx.cfg.embed {
            let name = entry.name()?;
            let emb = read_embedding(ctx, entry)?;
            if emb.user_ids != table.user_ids {
                bail!("{name} rows do not match the NDCG table users");
            }
            let full = assemble(&emb, &target)?;
            out.write_with(&format!("meta/{name}.csv"), |w| full.write_csv(w))?;
            for v in meta.variants() {
                let ds = if v.remove_zeroes { remove_zeroes(&full) } else { full.clone() };
                let subset = if v.remove_zeroes { "nozeroes" } else { "all" };
                if proportion_done.insert(subset) {
                    let counts = ds.class_counts();
                    for (c, n) in ds.classes.iter().zip(&counts) {
                        let share = *n as f64 / ds.n_rows().max(1) as f64;
                        proportions.push_str(&format!("{subset},{c},{n},{share}\n"));
                    }
                }
                datasets.insert((name.clone(), v.remove_zeroes), ds.clone());
                let folds = match make_folds(&ds, meta.folds, seed) {
                    Ok(f) => f,
                    Err(e) => {
                        let msg = format!("{name} {}: cannot build folds: {e}", v.tag());
                        warn!("{msg}");
                        failures.push(msg);
                        continue;
                    }
                };
                let opts = v.cv_options(meta.smote_k);
                for &learner in &learners {
                    let stem = report_stem(&name, &v, learner);
                    let grid = &grids[&learner];
                    let cell = (|| -> anyhow::Result<MetaReport> {
                        let params = if meta.grid_search {
                            let g = grid_search(learner, &ds, grid, &folds, opts, seed)?;
                            out.write(&format!("{stem}_grid.json"), &pretty_json(&g))?;
                            g.best
                        } else {
                            enumerate_grid(&grid.iter().map(|(k, v)| (k.clone(), v[..1].to_vec())).collect())
                                .remove(0)
                        };
                        let impact = ImpactContext { table: &table, fallback };
                        Ok(cross_validate(learner, &ds, &folds, &params, opts, seed, Some(impact))?)
                    })();
                    match cell {
                        Ok(report) => {
                            info!("meta: {stem} accuracy {:.4} (majority {:.4})", report.accuracy, report.majority_accuracy);
                            out.write(&format!("{stem}.json"), &pretty_json(&report))?;
                            out.write(&format!("{stem}.txt"), report.to_text().as_bytes())?;
                            cells.push(Cell { embedding: name.clone(), variant: v, learner, report });
                        }
                        Err(e) => {
                            let msg = format!("{stem}: {e:#}");
                            warn!("meta: cell failed: {msg}");
                            failures.push(msg);
                        }
                    }
                }
            }
        }
        out.write("reports/class_proportions.csv", proportions.as_bytes())?;

        let mut plot = String::from("model,dataset,accuracy,base_level_ndcg\n");
        let mut summary = String::new();
        summary.push_str(&format!(
            "{:<22} {:<28} {:>9} {:>9} {:>9}\n",
            "model", "dataset", "accuracy", "majority", "ndcg"
        ));
        for c in &cells {
            let dataset = format!("{}_{}", c.embedding, c.variant.tag());
            let ndcg = c.report.base_level_ndcg.unwrap_or(f64::NAN);
            plot.push_str(&format!("{},{dataset},{},{ndcg}\n", c.learner.name(), c.report.accuracy));
            summary.push_str(&format!(
                "{:<22} {:<28} {:>9.4} {:>9.4} {:>9.4}\n",
                c.learner.name(),
                dataset,
                c.report.accuracy,
                c.report.majority_accuracy,
                ndcg
            ));
        }
        let baselines = impact_baselines(&table, fallback)?;
        summary.push('\n');
        summary.push_str(&baselines.to_text());
        if !failures.is_empty() {
            summary.push_str("\nfailed cells\n");
            for f in &failures {
                summary.push_str(f);
                summary.push('\n');
            }
        }
        out.write("reports/plot_data.csv", plot.as_bytes())?;
        out.write("reports/summary.txt", summary.as_bytes())?;

        let mut best: Option<&Cell> = None;
        for c in &cells {
            if best.is_none_or(|b| c.report.accuracy > b.report.accuracy) {
                best = Some(c);
            }
        }
        let best = best.ok_or_else(|| anyhow!("every meta cell failed: {}", failures.join("; ")))?;
        let ds = &datasets[&(best.embedding.clone(), best.variant.remove_zeroes)];
        let model = fit_pipeline(best.learner, ds, &best.report.params, best.variant.cv_options(meta.smote_k), seed)?;
        info!(
            "meta: selected {} on {} {} (accuracy {:.4})\n{}",
            best.learner,
            best.embedding,
            best.variant.tag(),
            best.report.accuracy,
            render_metrics(&best.report.metrics)
        );
        let artifact = SelectorArtifact {
            embedding: best.embedding.clone(),
            normalize: best.variant.normalize,
            smote: best.variant.smote,
            remove_zeroes: best.variant.remove_zeroes,
            cv_accuracy: best.report.accuracy,
            model,
        };
        out.write(SELECTOR_PATH, &pretty_json(&artifact))?;
        Ok(())
    })
}

/// Loads a served base model.
pub fn load_base_model(ctx: &Context, b: BaseLearnerId) -> anyhow::Result<BaseModel> {
    Ok(read_base_model(&ctx.read(&base_model_path(b))?[..])?)
}

pub fn label_counts(labels: &[MetaLabel]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for l in labels {
        *m.entry(l.to_string()).or_insert(0) += 1;
    }
    m
}
