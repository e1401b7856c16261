//! Batch processing of a manifest with a run report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::{boxes_to_mask, mask_to_bboxes};
use crate::embedding::{EmbeddingBank, FeatureExtractor};
use crate::error::{Error, Result};
use crate::image::BinaryMask;
use crate::io::{load_mask, load_rgb, output_stem, save_luma, save_mask, write_json, DatasetManifest, ManifestEntry};
use crate::metrics::{iou, mean_std};
use crate::pipeline::{rapid_boxshrink_traced, robust_boxshrink_traced, GuardDecision, PipelineConfig, Variant};

/// Which procedure to run, with what it needs.
#[derive(Clone, Copy)]
pub enum Method<'a> {
    Rapid,
    Robust {
        bank: &'a EmbeddingBank,
        extractor: &'a dyn FeatureExtractor,
    },
}

impl Method<'_> {
    pub fn variant(&self) -> Variant {
        match self {
            Method::Rapid => Variant::Rapid,
            Method::Robust { .. } => Variant::Robust,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
    /// Also write `<stem>_marginals.png` with the CRF foreground probability.
    pub save_marginals: bool,
}

/// Result for one manifest entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image: PathBuf,
    pub output: Option<PathBuf>,
    pub error: Option<String>,
    pub seconds: f64,
    pub guard: Option<GuardDecision>,
    pub foreground_pixels: Option<usize>,
    /// IoU of the output against the ground truth, when given.
    pub iou: Option<f64>,
    /// IoU of the box mask against the ground truth, when given.
    pub box_iou: Option<f64>,
}

impl ImageRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub images: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub guard_triggers: usize,
    pub mean_iou: Option<f64>,
    pub std_iou: Option<f64>,
    pub mean_box_iou: Option<f64>,
    pub total_seconds: f64,
}

/// Everything about one run, in manifest order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    /// The fully resolved configuration the run used.
    pub config: PipelineConfig,
    pub workers: Option<usize>,
    pub records: Vec<ImageRecord>,
    pub summary: RunSummary,
}

impl RunReport {
    fn new(variant: Variant, config: PipelineConfig, workers: Option<usize>, records: Vec<ImageRecord>) -> Self {
        let ok: Vec<&ImageRecord> = records.iter().filter(|r| r.succeeded()).collect();
        let ious = mean_std(ok.iter().filter_map(|r| r.iou));
        let summary = RunSummary {
            images: records.len(),
            succeeded: ok.len(),
            failed: records.len() - ok.len(),
            guard_triggers: ok
                .iter()
                .filter(|r| r.guard.is_some_and(GuardDecision::triggered))
                .count(),
            mean_iou: ious.map(|v| v.0),
            std_iou: ious.map(|v| v.1),
            mean_box_iou: mean_std(ok.iter().filter_map(|r| r.box_iou)).map(|v| v.0),
            total_seconds: records.iter().map(|r| r.seconds).sum(),
        };
        Self {
            variant,
            config,
            workers,
            records,
            summary,
        }
    }

    pub fn has_failures(&self) -> bool {
        self.summary.failed > 0
    }

    /// Plain-text table, one row per image and a summary line.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<32} {:>8} {:>8} {:>8} {:>14}  note",
            "image", "seconds", "iou", "box_iou", "guard"
        );
        for r in &self.records {
            let name = r
                .image
                .file_name()
                .map_or_else(|| r.image.display().to_string(), |n| n.to_string_lossy().into_owned());
            let guard = r.guard.map_or("-".to_owned(), |g| {
                serde_json::to_value(g)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default()
            });
            let _ = writeln!(
                s,
                "{:<32} {:>8.3} {:>8} {:>8} {:>14}  {}",
                name,
                r.seconds,
                opt(r.iou),
                opt(r.box_iou),
                guard,
                r.error.as_deref().unwrap_or("")
            );
        }
        let m = &self.summary;
        let _ = writeln!(
            s,
            "{} images, {} ok, {} failed, {} guard triggers, mean iou {} (std {}), mean box iou {}, {:.2} s",
            m.images,
            m.succeeded,
            m.failed,
            m.guard_triggers,
            opt(m.mean_iou),
            opt(m.std_iou),
            opt(m.mean_box_iou),
            m.total_seconds
        );
        s
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_json(dir.join("report.json"), self)?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.to_table()).map_err(|e| Error::io(txt, e))
    }
}

/// The box mask of an entry: its boxes, or the tight boxes of its ground truth.
pub fn entry_box_mask(entry: &ManifestEntry, width: u32, height: u32, gt: Option<&BinaryMask>) -> Result<BinaryMask> {
    match (&entry.boxes, gt) {
        (Some(boxes), _) => boxes_to_mask(boxes, width, height),
        (None, Some(gt)) => boxes_to_mask(&mask_to_bboxes(gt), width, height),
        (None, None) => Err(Error::InvalidData("entry has neither boxes nor gt_mask".into())),
    }
}

fn canonical(p: &Path) -> PathBuf {
    p.canonicalize().unwrap_or_else(|_| p.to_owned())
}

/// Runs `method` over every manifest entry, writing `<stem>.png` masks into
/// the output directory. Failures of single images are recorded in the report
/// and do not stop the run.
pub fn process_dataset(
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
    method: Method<'_>,
    opts: &RunOptions,
) -> Result<RunReport> {
    manifest.validate()?;
    cfg.validate()?;
    if let Method::Robust { bank, extractor } = method {
        bank.validate()?;
        bank.check_compatible(extractor)
            .map_err(|e| Error::Config(format!("bank does not match the configured extractor: {e}")))?;
    }
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let inputs: BTreeSet<PathBuf> = manifest
        .entries
        .iter()
        .flat_map(|e| std::iter::once(&e.image).chain(&e.gt_mask))
        .map(|p| canonical(p))
        .collect();

    let run = || -> Vec<ImageRecord> {
        manifest
            .entries
            .par_iter()
            .map(|entry| process_entry(entry, cfg, method, opts, &inputs))
            .collect()
    };
    let records = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(run),
        None => run(),
    };
    Ok(RunReport::new(method.variant(), cfg.clone(), opts.workers, records))
}

fn process_entry(
    entry: &ManifestEntry,
    cfg: &PipelineConfig,
    method: Method<'_>,
    opts: &RunOptions,
    inputs: &BTreeSet<PathBuf>,
) -> ImageRecord {
    let start = Instant::now();
    let mut record = ImageRecord {
        image: entry.image.clone(),
        output: None,
        error: None,
        seconds: 0.0,
        guard: None,
        foreground_pixels: None,
        iou: None,
        box_iou: None,
    };
    if let Err(e) = run_entry(entry, cfg, method, opts, inputs, &mut record) {
        let message = e.report();
        log::error!("{}: {message}", entry.image.display());
        record.error = Some(message);
    }
    record.seconds = start.elapsed().as_secs_f64();
    record
}

fn run_entry(
    entry: &ManifestEntry,
    cfg: &PipelineConfig,
    method: Method<'_>,
    opts: &RunOptions,
    inputs: &BTreeSet<PathBuf>,
    record: &mut ImageRecord,
) -> Result<()> {
    let image = load_rgb(&entry.image)?;
    let gt = entry.gt_mask.as_ref().map(load_mask).transpose()?;
    if let Some(gt) = &gt {
        crate::image::ensure_same_dims(image.dims(), gt.dims())?;
    }
    let box_mask = entry_box_mask(entry, image.width(), image.height(), gt.as_ref())?;
    let trace = match method {
        Method::Rapid => rapid_boxshrink_traced(&image, &box_mask, cfg)?,
        Method::Robust { bank, extractor } => robust_boxshrink_traced(&image, &box_mask, bank, extractor, cfg)?,
    };

    let stem = output_stem(&entry.image)?;
    let out = opts.out_dir.join(format!("{stem}.png"));
    let probs = opts.out_dir.join(format!("{stem}_marginals.png"));
    for target in [&out, &probs] {
        if inputs.contains(&canonical(target)) {
            return Err(Error::InvalidData(format!(
                "refusing to overwrite input file {}",
                target.display()
            )));
        }
    }
    save_mask(&out, &trace.mask)?;
    if opts.save_marginals {
        let m = &trace.refinement.marginals;
        let (w, h) = m.dims();
        save_luma(&probs, w, h, m.to_luma8())?;
    }
    record.output = Some(out);
    record.guard = Some(trace.guard);
    record.foreground_pixels = Some(trace.mask.count_ones());
    if let Some(gt) = &gt {
        record.iou = Some(iou(&trace.mask, gt)?);
        record.box_iou = Some(iou(&box_mask, gt)?);
    }
    Ok(())
}
