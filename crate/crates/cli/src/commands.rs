use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use retifuse::cache::{cache_file_name, extract_and_cache, FeatureCache};
use retifuse::classifiers::{load_model, save_model, ClassifierKind};
use retifuse::config::{make_provider, RunConfig};
use retifuse::dataset::{ingest, DatasetManifest};
use retifuse::deep::FeatureProvider;
use retifuse::evaluation::{
    confusion, evaluate_classifiers, metrics, run_grid, split_samples, write_grid, CellResult, GridResult,
};
use retifuse::imaging::load_canonical;
use retifuse::io_util::{file_safe, write_atomic};
use retifuse::segmentation::segment_or_full;

/// Success, or a run where some records or cells failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Partial,
}

impl Outcome {
    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Outcome::Ok
        } else {
            Outcome::Partial
        }
    }
}

/// Where records come from: an existing manifest or a directory to ingest.
pub enum Source {
    /// Manifest plus an optional dataset root for its relative paths.
    Manifest(PathBuf, Option<PathBuf>),
    Root(PathBuf),
}

impl Source {
    pub fn load(&self) -> Result<DatasetManifest> {
        Ok(match self {
            Source::Manifest(p, root) => DatasetManifest::read_csv(p, root.as_deref())?,
            Source::Root(r) => ingest(r)?,
        })
    }
}

/// Creates the output directory and echoes the effective config into it.
fn prepare_out(cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.echo_into(dir).with_context(|| format!("writing config into {}", dir.display()))
}

fn providers(cfg: &RunConfig) -> Result<Vec<Box<dyn FeatureProvider>>> {
    cfg.providers
        .iter()
        .map(|p| make_provider(p, cfg.deep_dim, cfg.seed).with_context(|| format!("provider `{p}`")))
        .collect()
}

fn cache_for(cfg: &RunConfig, manifest: &DatasetManifest, provider: &dyn FeatureProvider) -> Result<FeatureCache> {
    let path = cfg.output_dir.join("cache").join(cache_file_name(provider.name()));
    Ok(extract_and_cache(manifest, provider, &cfg.extraction(), &path)?)
}

pub fn synth(cfg: &RunConfig, root: &Path, per_class: usize) -> Result<Outcome> {
    retifuse::synth::write_fundus_dataset(root, per_class, cfg.seed)?;
    println!("wrote {} images under {}", per_class * 5, root.display());
    Ok(Outcome::Ok)
}

pub fn cmd_ingest(cfg: &RunConfig, root: &Path, manifest_out: Option<&Path>) -> Result<Outcome> {
    let manifest = ingest(root)?;
    prepare_out(cfg, &cfg.output_dir)?;
    let path = manifest_out.map_or_else(|| cfg.output_dir.join("manifest.csv"), Path::to_path_buf);
    manifest.write_csv(&path)?;
    println!("{} records -> {}", manifest.records.len(), path.display());
    Ok(Outcome::Ok)
}

pub fn cmd_segment(cfg: &RunConfig, source: &Source) -> Result<Outcome> {
    let manifest = source.load()?;
    let masks = cfg.output_dir.join("masks");
    prepare_out(cfg, &cfg.output_dir)?;
    fs::create_dir_all(&masks).with_context(|| format!("creating {}", masks.display()))?;
    // Per-record decode errors are partial failures; a failed write is fatal.
    let results: Vec<Result<bool>> = manifest
        .records
        .par_iter()
        .map(|r| -> Result<bool> {
            let img = match load_canonical(manifest.full_path(r)) {
                Ok(img) => img,
                Err(e) => {
                    log::error!("record {}: {e}", r.id);
                    return Ok(false);
                }
            };
            let seg = match segment_or_full(&img, &cfg.segmentation) {
                Ok(s) => s,
                Err(e) => {
                    log::error!("record {}: {e}", r.id);
                    return Ok(false);
                }
            };
            if seg.fell_back {
                log::warn!("record {} ({}): empty region of interest, writing full mask", r.id, r.path);
            }
            seg.mask.save_png(masks.join(format!("mask_{:05}.png", r.id)))?;
            Ok(true)
        })
        .collect();
    let mut failed = 0;
    for r in results {
        failed += usize::from(!r?);
    }
    println!("{} masks -> {}", manifest.records.len() - failed, masks.display());
    Ok(Outcome::from_failures(failed))
}

pub fn cmd_extract(cfg: &RunConfig, source: &Source) -> Result<Outcome> {
    let manifest = source.load()?;
    prepare_out(cfg, &cfg.output_dir)?;
    let mut failed = 0;
    for p in providers(cfg)? {
        let cache = cache_for(cfg, &manifest, p.as_ref())?;
        let bad = cache.failed_ids();
        if !bad.is_empty() {
            log::warn!("{}: {} records failed: {:?}", p.name(), bad.len(), bad);
        }
        failed += bad.len();
        println!("{}: {} vectors of dim {}", p.name(), cache.entries.len() - bad.len(), cache.dim());
    }
    Ok(Outcome::from_failures(failed))
}

fn model_stem(backbone: &str, kind: ClassifierKind) -> String {
    format!("{}__{kind}", file_safe(backbone))
}

fn to_json<S: serde::Serialize>(v: &S) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

pub fn cmd_train(cfg: &RunConfig, source: &Source) -> Result<Outcome> {
    let manifest = source.load()?;
    prepare_out(cfg, &cfg.output_dir)?;
    let models = cfg.output_dir.join("models");
    let mut failed = 0;
    for p in providers(cfg)? {
        let cache = cache_for(cfg, &manifest, p.as_ref())?;
        failed += cache.failed_ids().len();
        let (split, tr, va) = split_samples(&cache, &manifest, cfg.train_frac, cfg.seed, cfg.feature_set)?;
        let stem = file_safe(p.name());
        write_atomic(&cfg.output_dir.join("splits").join(format!("{stem}.json")), &to_json(&split)?)?;
        for (kind, out) in evaluate_classifiers(&tr, &va, &cfg.classifiers, &cfg.train) {
            match out {
                Ok((model, report)) => {
                    let name = model_stem(p.name(), kind);
                    save_model(&model, &models.join(format!("{name}.ffm")))?;
                    write_atomic(&models.join(format!("{name}.json")), &to_json(&report)?)?;
                    println!("{} {kind}: accuracy {:.4}", p.name(), report.accuracy);
                }
                Err(e) => {
                    log::error!("{} {kind}: {e}", p.name());
                    failed += 1;
                }
            }
        }
    }
    Ok(Outcome::from_failures(failed))
}

/// Every `.ffm` under `paths`, sorted; directories are scanned one level deep.
fn model_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            for e in fs::read_dir(p).with_context(|| format!("reading {}", p.display()))? {
                let path = e?.path();
                if path.extension().is_some_and(|x| x == "ffm") {
                    out.push(path);
                }
            }
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            bail!("model path {} does not exist", p.display());
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        bail!("no .ffm model files found");
    }
    Ok(out)
}

/// Scores saved models on the validation split (or every record) and writes
/// the same tables as `grid`.
pub fn cmd_evaluate(cfg: &RunConfig, source: &Source, paths: &[PathBuf], all_records: bool) -> Result<Outcome> {
    let manifest = source.load()?;
    let out_dir = cfg.output_dir.join("evaluation");
    prepare_out(cfg, &out_dir)?;
    let providers = providers(cfg)?;
    // File stem `<backbone>__<kind>` names the provider the model was trained on.
    let mut by_backbone: BTreeMap<usize, Vec<(ClassifierKind, PathBuf)>> = BTreeMap::new();
    for path in model_files(paths)? {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some((backbone, kind)) = stem.rsplit_once("__") else {
            bail!("model file {} is not named <backbone>__<classifier>.ffm", path.display());
        };
        let kind: ClassifierKind = kind.parse()?;
        let Some(i) = providers.iter().position(|p| file_safe(p.name()) == backbone) else {
            bail!("model {} needs backbone `{backbone}`, which is not among the configured providers", path.display());
        };
        by_backbone.entry(i).or_default().push((kind, path));
    }
    let mut result = GridResult { backbones: Vec::new(), classifiers: Vec::new(), cells: Vec::new() };
    for (i, models) in by_backbone {
        let p = providers[i].as_ref();
        let name = p.name().to_string();
        result.backbones.push(name.clone());
        let cache = cache_for(cfg, &manifest, p)?;
        let skipped = cache.failed_ids();
        let (_, tr, va) = split_samples(&cache, &manifest, cfg.train_frac, cfg.seed, cfg.feature_set)?;
        let rows = if all_records { [tr, va].concat() } else { va };
        let truth: Vec<usize> = rows.iter().map(|s| s.label).collect();
        for (kind, path) in models {
            if !result.classifiers.contains(&kind) {
                result.classifiers.push(kind);
            }
            let scored = load_model::<f64>(&path)
                .and_then(|m| m.predict_batch(&rows))
                .and_then(|pred| confusion(&truth, &pred))
                .and_then(|cm| metrics(&cm));
            let (report, error) = match scored {
                Ok(r) => {
                    println!("{name} {kind}: accuracy {:.4}", r.accuracy);
                    (Some(r), None)
                }
                Err(e) => {
                    log::error!("{}: {e}", path.display());
                    (None, Some(e.to_string()))
                }
            };
            result.cells.push(CellResult { backbone: name.clone(), classifier: kind, report, error, skipped_ids: skipped.clone() });
        }
    }
    result.classifiers.sort();
    write_grid(&result, &out_dir)?;
    let skipped: usize = result.cells.iter().map(|c| c.skipped_ids.len()).sum();
    Ok(Outcome::from_failures(result.failed_cells() + skipped))
}

pub fn cmd_grid(cfg: &RunConfig, source: &Source) -> Result<Outcome> {
    let manifest = source.load()?;
    prepare_out(cfg, &cfg.output_dir)?;
    let providers = providers(cfg)?;
    let refs: Vec<&dyn FeatureProvider> = providers.iter().map(|p| p.as_ref()).collect();
    let result = run_grid(&manifest, &refs, &cfg.classifiers, &cfg.grid(), Some(&cfg.output_dir.join("cache")))?;
    write_grid(&result, &cfg.output_dir)?;
    let skipped: usize = result.cells.iter().map(|c| c.skipped_ids.len()).sum();
    println!(
        "{} cells, {} failed -> {}",
        result.cells.len(),
        result.failed_cells(),
        cfg.output_dir.join("grid.csv").display()
    );
    Ok(Outcome::from_failures(result.failed_cells() + skipped))
}
