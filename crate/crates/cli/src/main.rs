use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use boxshrink::bbox::mask_to_bboxes;
use boxshrink::dataset::{entry_box_mask, process_dataset, Method, RunOptions};
use boxshrink::embedding::{build_embedding_bank, EmbeddingBank};
use boxshrink::io::{self, DatasetManifest};
use boxshrink::metrics::evaluate_named;
use boxshrink::overlay::{render_overlay, BOX_COLOR, GT_COLOR, PSEUDO_COLOR};
use boxshrink::pipeline::{PipelineConfig, Variant};
use boxshrink::slic::{slic_segment, SlicParams};

/// Turn bounding-box annotations into segmentation pseudo-masks.
#[derive(Parser)]
#[command(name = "boxshrink", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the tight boxes of every mask in a directory as JSON.
    DeriveBoxes {
        /// Directory of ground-truth mask images.
        #[arg(long)]
        masks: PathBuf,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Superpixels inside the box, refined by the CRF.
    Rapid(RunArgs),
    /// Rapid plus an embedding-based pass that drops background-like
    /// boundary superpixels.
    Robust {
        #[command(flatten)]
        run: RunArgs,
        /// Embedding bank; overrides `embedding.bank` in the config.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Average foreground and background superpixel embeddings of a dataset.
    BuildBank {
        #[command(flatten)]
        common: CommonArgs,
        /// Output bank JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted masks against ground truth by file name.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// JSON report path [default: <PRED>/eval_report.json]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-image scores as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw superpixel boundaries and mask outlines over an image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pseudo-mask, drawn in green.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Ground truth, drawn in cyan; its tight boxes are drawn in magenta.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Draw boundaries of this many superpixels (default settings otherwise).
        #[arg(long)]
        segments: Option<usize>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Pipeline config JSON; every key is optional.
    #[arg(long, env = "BOXSHRINK_CONFIG")]
    config: Option<PathBuf>,
    /// Dataset manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    /// Worker threads [default: all cores]
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for masks and the run report.
    #[arg(long)]
    out: PathBuf,
    /// Also write the CRF foreground probability as `<stem>_marginals.png`.
    #[arg(long)]
    save_marginals: bool,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn require_keys(cfg: &PipelineConfig, variant: Variant) -> Result<()> {
    let missing = cfg.missing_keys(variant);
    if !missing.is_empty() {
        bail!("missing required configuration keys: {}", missing.join(", "));
    }
    Ok(())
}

/// Runs a dataset. Returns whether every image succeeded.
fn run(args: RunArgs, variant: Variant, bank_override: Option<PathBuf>) -> Result<bool> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    if bank_override.is_some() {
        cfg.embedding.bank = bank_override;
    }
    require_keys(&cfg, variant)?;
    let manifest = DatasetManifest::load(&args.common.manifest)
        .with_context(|| format!("loading manifest {}", args.common.manifest.display()))?;
    let opts = RunOptions {
        out_dir: args.out.clone(),
        workers: args.common.workers,
        save_marginals: args.save_marginals,
    };
    let report = match variant {
        Variant::Rapid => process_dataset(&manifest, &cfg, Method::Rapid, &opts)?,
        Variant::Robust => {
            let path = cfg.embedding.bank.clone().expect("checked by require_keys");
            let bank = EmbeddingBank::load(&path).with_context(|| format!("loading bank {}", path.display()))?;
            let extractor = cfg.embedding.extractor.build()?;
            bank.check_compatible(extractor.as_ref())
                .context("the bank does not match the configured extractor")?;
            let method = Method::Robust {
                bank: &bank,
                extractor: extractor.as_ref(),
            };
            process_dataset(&manifest, &cfg, method, &opts)?
        }
    };
    report.write(&args.out)?;
    print!("{}", report.to_table());
    Ok(!report.has_failures())
}

fn derive_boxes(masks: &Path, out: &Path) -> Result<bool> {
    let files = io::list_images(masks)?;
    if files.iter().any(|f| same_file(f, out)) {
        bail!("refusing to overwrite input {}", out.display());
    }
    let mut boxes = BTreeMap::new();
    let mut ok = true;
    for file in files {
        let name = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
        match io::load_mask(&file) {
            Ok(mask) => {
                let b = mask_to_bboxes(&mask);
                if b.is_empty() {
                    log::warn!("{name}: mask is empty, no boxes");
                }
                boxes.insert(name, b);
            }
            Err(e) => {
                eprintln!("error: {}", e.report());
                ok = false;
            }
        }
    }
    io::save_boxes(out, &boxes)?;
    println!("wrote boxes for {} images to {}", boxes.len(), out.display());
    Ok(ok)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn build_bank(common: CommonArgs, out: &Path) -> Result<bool> {
    let cfg = load_config(common.config.as_deref())?;
    let manifest = DatasetManifest::load(&common.manifest)
        .with_context(|| format!("loading manifest {}", common.manifest.display()))?;
    if manifest
        .entries
        .iter()
        .flat_map(|e| std::iter::once(&e.image).chain(&e.gt_mask))
        .any(|p| same_file(p, out))
    {
        bail!("refusing to overwrite input {}", out.display());
    }
    let extractor = cfg.embedding.extractor.build()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        pool = pool.num_threads(n.max(1));
    }
    let bank = pool.build()?.install(|| -> Result<_> {
        let mut dataset = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            let image = io::load_rgb(&e.image)?;
            let gt = e.gt_mask.as_ref().map(io::load_mask).transpose()?;
            let box_mask = entry_box_mask(e, image.width(), image.height(), gt.as_ref())
                .with_context(|| format!("boxes for {}", e.image.display()))?;
            dataset.push((image, box_mask));
        }
        Ok(build_embedding_bank(&dataset, extractor.as_ref(), &cfg.bank_params())?)
    })?;
    bank.save(out)?;
    println!(
        "bank from {} foreground and {} background superpixels written to {}",
        bank.foreground_count,
        bank.background_count,
        out.display()
    );
    Ok(true)
}

fn evaluate(pred: &Path, gt: &Path, out: Option<PathBuf>, csv: Option<PathBuf>) -> Result<bool> {
    let mut names = Vec::new();
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut missing = Vec::new();
    for g in io::list_images(gt)? {
        let name = g.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let p = pred.join(&name);
        if !p.is_file() {
            missing.push(name);
            continue;
        }
        gts.push(io::load_mask(&g)?);
        preds.push(io::load_mask(&p)?);
        names.push(name);
    }
    if !missing.is_empty() {
        bail!("no prediction for: {}", missing.join(", "));
    }
    let report = evaluate_named(&names, &preds, &gts)?;
    let out = out.unwrap_or_else(|| pred.join("eval_report.json"));
    io::write_json(&out, &report)?;
    if let Some(path) = csv {
        let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(file)?;
    }
    match (report.mean, report.std) {
        (Some(m), Some(s)) => println!("mean IoU {m:.4} ± {s:.4} over {} images", report.count),
        _ => println!("no images to evaluate"),
    }
    Ok(true)
}

fn overlay(image: &Path, out: &Path, mask: Option<&Path>, gt: Option<&Path>, segments: Option<usize>) -> Result<bool> {
    if [Some(image), mask, gt].into_iter().flatten().any(|p| same_file(p, out)) {
        bail!("refusing to overwrite input {}", out.display());
    }
    let img = io::load_rgb(image)?;
    let map = segments
        .map(|s| slic_segment(&img, &SlicParams::with_segments(s)))
        .transpose()?;
    let pseudo = mask.map(io::load_mask).transpose()?;
    let gt = gt.map(io::load_mask).transpose()?;
    let boxes = gt
        .as_ref()
        .map(|g| boxshrink::bbox::boxes_to_mask(&mask_to_bboxes(g), g.width(), g.height()))
        .transpose()?;
    let mut layers = Vec::new();
    if let Some(b) = &boxes {
        layers.push((b, BOX_COLOR));
    }
    if let Some(g) = &gt {
        layers.push((g, GT_COLOR));
    }
    if let Some(p) = &pseudo {
        layers.push((p, PSEUDO_COLOR));
    }
    let drawn = render_overlay(&img, map.as_ref(), &layers)?;
    io::save_rgb(out, &drawn)?;
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::DeriveBoxes { masks, out } => derive_boxes(&masks, &out),
        Command::Rapid(args) => run(args, Variant::Rapid, None),
        Command::Robust { run: args, bank } => run(args, Variant::Robust, bank),
        Command::BuildBank { common, out } => build_bank(common, &out),
        Command::Evaluate { pred, gt, out, csv } => evaluate(&pred, &gt, out, csv),
        Command::Overlay {
            image,
            out,
            mask,
            gt,
            segments,
        } => overlay(&image, &out, mask.as_deref(), gt.as_deref(), segments),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
