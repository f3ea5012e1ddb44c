use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{cache_file_name, extract_all_records, extract_and_cache, ExtractionParams, FeatureCache};
use crate::classifiers::{train, ClassifierKind, TrainConfig, TrainedModel};
use crate::dataset::DatasetManifest;
use crate::deep::FeatureProvider;
use crate::error::{Error, Result};
use crate::features::BlockKind;
use crate::fusion::{BlockLayout, FusedSample, Standardizer};
use crate::io_util::{file_safe, write_atomic};

use super::{confusion, metrics, stratified_split, MetricsReport, Split};

/// Which blocks of the fused vector a run uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    #[default]
    Hybrid,
    DeepOnly,
    HandcraftedOnly,
}

impl FeatureSet {
    pub fn ranges(self, layout: &BlockLayout) -> Vec<Range<usize>> {
        layout
            .blocks
            .iter()
            .filter(|(k, _, _)| match self {
                FeatureSet::Hybrid => true,
                FeatureSet::DeepOnly => *k == BlockKind::Deep,
                FeatureSet::HandcraftedOnly => *k != BlockKind::Deep,
            })
            .map(|&(_, off, dim)| off..off + dim)
            .collect()
    }
}

/// Train and validation samples for the records that extracted cleanly.
pub fn split_samples(
    cache: &FeatureCache,
    manifest: &DatasetManifest,
    train_frac: f64,
    seed: u64,
    set: FeatureSet,
) -> Result<(Split, Vec<FusedSample<f64>>, Vec<FusedSample<f64>>)> {
    let ranges = set.ranges(&cache.layout);
    let ok: Vec<(u64, usize)> = manifest.labels().into_iter().filter(|(id, _)| cache.get(*id).is_some()).collect();
    let split = stratified_split(&ok, train_frac, seed)?;
    let classes: HashMap<u64, usize> = manifest.records.iter().map(|r| (r.id, r.class_index)).collect();
    let class_of = |id: u64| classes.get(&id).copied();
    let build = |ids: &[u64]| -> Result<Vec<FusedSample<f64>>> {
        ids.iter()
            .map(|&id| {
                let v = cache.get(id).expect("only cached ids are split");
                let features = ranges.iter().flat_map(|r| v[r.clone()].iter().copied()).collect();
                FusedSample::new(features, class_of(id).expect("id from manifest"), id)
            })
            .collect()
    };
    let (tr, va) = (build(&split.train)?, build(&split.validation)?);
    Ok((split, tr, va))
}

/// Standardizes on `train`, then fits and scores each classifier.
pub fn evaluate_classifiers(
    train_set: &[FusedSample<f64>],
    validation: &[FusedSample<f64>],
    kinds: &[ClassifierKind],
    cfg: &TrainConfig,
) -> Vec<(ClassifierKind, Result<(TrainedModel<f64>, MetricsReport<f64>)>)> {
    let prepared = Standardizer::fit(train_set).and_then(|s| Ok((s.apply_samples(train_set)?, s)));
    kinds
        .par_iter()
        .map(|&kind| {
            let out = match &prepared {
                Err(e) => Err(Error::InvalidConfig(format!("standardization failed: {e}"))),
                Ok((z, s)) => (|| {
                    let model = train(kind, z, cfg)?.with_standardizer(s.clone())?;
                    let pred = model.predict_batch(validation)?;
                    let truth: Vec<usize> = validation.iter().map(|v| v.label).collect();
                    let report = metrics(&confusion(&truth, &pred)?)?;
                    Ok((model, report))
                })(),
            };
            (kind, out)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub extraction: ExtractionParams,
    pub train: TrainConfig,
    pub train_frac: f64,
    pub feature_set: FeatureSet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub backbone: String,
    pub classifier: ClassifierKind,
    pub report: Option<MetricsReport<f64>>,
    pub error: Option<String>,
    pub skipped_ids: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub backbones: Vec<String>,
    pub classifiers: Vec<ClassifierKind>,
    /// Backbone-major, classifier order as requested.
    pub cells: Vec<CellResult>,
}

impl GridResult {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.report.is_none()).count()
    }

    pub fn cell(&self, backbone: &str, classifier: ClassifierKind) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.backbone == backbone && c.classifier == classifier)
    }
}

/// Every backbone × classifier cell. A failing backbone or classifier marks
/// its cells failed and the sweep continues.
pub fn run_grid(
    manifest: &DatasetManifest,
    providers: &[&dyn FeatureProvider],
    kinds: &[ClassifierKind],
    cfg: &GridConfig,
    cache_dir: Option<&Path>,
) -> Result<GridResult> {
    if providers.is_empty() || kinds.is_empty() {
        return Err(Error::InvalidConfig("grid needs at least one backbone and one classifier".into()));
    }
    cfg.train.validate()?;
    let mut result = GridResult {
        backbones: providers.iter().map(|p| p.name().to_string()).collect(),
        classifiers: kinds.to_vec(),
        cells: Vec::new(),
    };
    for provider in providers {
        let name = provider.name().to_string();
        let cache = match cache_dir {
            Some(dir) => extract_and_cache(manifest, *provider, &cfg.extraction, &dir.join(cache_file_name(&name))),
            None => extract_all_records(manifest, *provider, &cfg.extraction),
        };
        let prepared = cache.and_then(|c| {
            let skipped = c.failed_ids();
            split_samples(&c, manifest, cfg.train_frac, cfg.train.seed, cfg.feature_set).map(|(_, tr, va)| (tr, va, skipped))
        });
        match prepared {
            Err(e) => {
                log::error!("backbone {name}: {e}");
                for &k in kinds {
                    result.cells.push(CellResult { backbone: name.clone(), classifier: k, report: None, error: Some(e.to_string()), skipped_ids: vec![] });
                }
            }
            Ok((tr, va, skipped)) => {
                for (k, out) in evaluate_classifiers(&tr, &va, kinds, &cfg.train) {
                    let (report, error) = match out {
                        Ok((_, r)) => (Some(r), None),
                        Err(e) => {
                            log::error!("cell {name} × {k}: {e}");
                            (None, Some(e.to_string()))
                        }
                    };
                    result.cells.push(CellResult { backbone: name.clone(), classifier: k, report, error, skipped_ids: skipped.clone() });
                }
            }
        }
    }
    Ok(result)
}

/// Column order of the grid CSV.
pub const GRID_HEADER: &str = "backbone,classifier,accuracy,recall,precision,kappa,f1";

/// Metrics in grid column order: accuracy, micro recall, macro precision,
/// kappa, macro F1.
pub fn table_row(r: &MetricsReport<f64>) -> [f64; 5] {
    [r.accuracy, r.recall_micro, r.precision_macro, r.kappa, r.f1_macro]
}

const METRIC_NAMES: [&str; 5] = ["accuracy", "recall", "precision", "kappa", "f1"];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn grid_csv(result: &GridResult) -> String {
    let mut out = format!("{GRID_HEADER}\n");
    for c in &result.cells {
        let _ = write!(out, "{},{}", csv_field(&c.backbone), c.classifier);
        match &c.report {
            Some(r) => table_row(r).iter().for_each(|v| {
                let _ = write!(out, ",{v:.4}");
            }),
            None => out.push_str(",,,,,"),
        }
        out.push('\n');
    }
    out
}

/// One table per metric: rows are backbones, columns classifiers.
pub fn heatmap_csv(result: &GridResult, metric: usize) -> String {
    let mut out = String::from("backbone");
    for k in &result.classifiers {
        let _ = write!(out, ",{k}");
    }
    out.push('\n');
    for b in &result.backbones {
        out.push_str(&csv_field(b));
        for &k in &result.classifiers {
            match result.cell(b, k).and_then(|c| c.report.as_ref()) {
                Some(r) => {
                    let _ = write!(out, ",{:.4}", table_row(r)[metric]);
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `grid.csv`, `cells/<backbone>__<classifier>.json` and
/// `heatmap_<metric>.csv`.
pub fn write_grid(result: &GridResult, out_dir: &Path) -> Result<()> {
    write_atomic(&out_dir.join("grid.csv"), grid_csv(result).as_bytes())?;
    for c in &result.cells {
        let name = format!("{}__{}.json", file_safe(&c.backbone), c.classifier);
        let json = serde_json::to_vec_pretty(c).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(&out_dir.join("cells").join(name), &json)?;
    }
    for (i, m) in METRIC_NAMES.iter().enumerate() {
        write_atomic(&out_dir.join(format!("heatmap_{m}.csv")), heatmap_csv(result, i).as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::ConfusionMatrix;

    fn report(acc: f64) -> MetricsReport<f64> {
        let mut r = metrics::<f64>(&ConfusionMatrix::from_counts(vec![vec![1, 0], vec![0, 1]]).unwrap()).unwrap();
        r.accuracy = acc;
        r
    }

    fn sample_result() -> GridResult {
        let cell = |b: &str, k, r: Option<MetricsReport<f64>>| CellResult {
            backbone: b.into(),
            classifier: k,
            error: r.is_none().then(|| "boom".to_string()),
            report: r,
            skipped_ids: vec![],
        };
        GridResult {
            backbones: vec!["a".into(), "b,c".into()],
            classifiers: vec![ClassifierKind::Knn, ClassifierKind::GradBoost],
            cells: vec![
                cell("a", ClassifierKind::Knn, Some(report(0.123456))),
                cell("a", ClassifierKind::GradBoost, Some(report(0.5))),
                cell("b,c", ClassifierKind::Knn, None),
                cell("b,c", ClassifierKind::GradBoost, Some(report(1.0))),
            ],
        }
    }

    #[test]
    fn grid_csv_layout() {
        let csv = grid_csv(&sample_result());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], GRID_HEADER);
        assert_eq!(lines[1], "a,knn,0.1235,1.0000,1.0000,1.0000,1.0000");
        assert_eq!(lines[3], "\"b,c\",knn,,,,,");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn heatmap_layout() {
        let h = heatmap_csv(&sample_result(), 0);
        assert_eq!(h, "backbone,knn,grad_boost\na,0.1235,0.5000\n\"b,c\",,1.0000\n");
    }

    #[test]
    fn feature_set_ranges() {
        let layout = ExtractionParams::default().layout(64).unwrap();
        assert_eq!(FeatureSet::DeepOnly.ranges(&layout), vec![613..677]);
        assert_eq!(FeatureSet::Hybrid.ranges(&layout).iter().map(|r| r.len()).sum::<usize>(), 677);
        assert_eq!(FeatureSet::HandcraftedOnly.ranges(&layout).iter().map(|r| r.len()).sum::<usize>(), 613);
    }
}
