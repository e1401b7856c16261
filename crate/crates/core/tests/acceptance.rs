//! Acceptance suite. Prints one line per criterion and fails if any criterion
//! fails. Run with `cargo test -p boxshrink --test acceptance -- --nocapture`.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use boxshrink::assignment::{boundary_foreground, overlap_assign};
use boxshrink::bbox::{boxes_to_mask, mask_to_bboxes};
use boxshrink::crf::dense::mean_field_refine_dense;
use boxshrink::crf::{gibbs_energy, mean_field_refine, unary_from_mask, CrfParams, UnaryPotentials};
use boxshrink::embedding::{build_embedding_bank, EmbeddingBank, HandcraftedExtractor};
use boxshrink::image::{BinaryMask, RgbImage};
use boxshrink::metrics::iou;
use boxshrink::pipeline::{
    apply_guards, guard_decision, rapid_boxshrink, rapid_boxshrink_traced, robust_boxshrink, robust_boxshrink_traced,
    GuardDecision, GuardParams, PipelineConfig,
};
use boxshrink::slic::{slic_segment, SlicParams};
use boxshrink::superpixel::SuperpixelMap;

/// Environment variable naming a directory with `images/` and `masks/`
/// holding same-named files, for the optional real-data smoke run.
const REAL_DATA_ENV: &str = "BOXSHRINK_REAL_DATA";

enum Status {
    Pass,
    Fail,
    NotApplicable,
    Skipped,
}

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            status: if ok { Status::Pass } else { Status::Fail },
            detail: detail.into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic scenes

struct Scene {
    image: RgbImage,
    gt: BinaryMask,
    box_mask: BinaryMask,
    ellipse: bool,
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// High-contrast foreground/background colors with mild uniform noise.
fn paint(rng: &mut ChaCha8Rng, gt: &BinaryMask) -> RgbImage {
    let fg = [rng.gen_range(170..240), rng.gen_range(40..110), rng.gen_range(30..90)];
    let bg = [rng.gen_range(20..80), rng.gen_range(60..120), rng.gen_range(150..230)];
    let (w, h) = gt.dims();
    RgbImage::from_fn(w, h, |x, y| {
        let base = if gt.get(x, y) { fg } else { bg };
        base.map(|c: i32| clamp_u8(c as f64 + rng.gen_range(-8.0..8.0)))
    })
}

fn finish_scene(rng: &mut ChaCha8Rng, gt: BinaryMask, ellipse: bool) -> Scene {
    let image = paint(rng, &gt);
    let box_mask = boxes_to_mask(&mask_to_bboxes(&gt), gt.width(), gt.height()).unwrap();
    Scene {
        image,
        gt,
        box_mask,
        ellipse,
    }
}

/// Axis-aligned ellipse; its tight box covers it with IoU close to pi/4.
fn ellipse_scene(rng: &mut ChaCha8Rng) -> Scene {
    let (w, h) = (128u32, 96u32);
    let (a, b) = (rng.gen_range(18.0..40.0), rng.gen_range(14.0..30.0));
    let cx = rng.gen_range(a + 4.0..w as f64 - a - 4.0);
    let cy = rng.gen_range(b + 4.0..h as f64 - b - 4.0);
    let gt = BinaryMask::from_fn(w, h, |x, y| {
        let dx = (x as f64 + 0.5 - cx) / a;
        let dy = (y as f64 + 0.5 - cy) / b;
        dx * dx + dy * dy <= 1.0
    });
    finish_scene(rng, gt, true)
}

/// Union of two or three overlapping discs, so the blob is connected.
fn blob_scene(rng: &mut ChaCha8Rng) -> Scene {
    let (w, h) = (128u32, 96u32);
    let cx = rng.gen_range(45.0..83.0);
    let cy = rng.gen_range(35.0..61.0);
    let n = rng.gen_range(2..=3);
    let discs: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let r: f64 = rng.gen_range(12.0..22.0);
            let angle = rng.gen_range(0.0..2.0 * PI);
            let off = rng.gen_range(0.0..r * 0.8);
            (cx + off * angle.cos(), cy + off * angle.sin(), r)
        })
        .collect();
    let gt = BinaryMask::from_fn(w, h, |x, y| {
        discs.iter().any(|&(px, py, r)| {
            let dx = x as f64 + 0.5 - px;
            let dy = y as f64 + 0.5 - py;
            dx * dx + dy * dy <= r * r
        })
    });
    finish_scene(rng, gt, false)
}

/// Ten ellipses followed by ten blobs.
fn suite(seed: u64) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes: Vec<Scene> = (0..10).map(|_| ellipse_scene(&mut rng)).collect();
    scenes.extend((0..10).map(|_| blob_scene(&mut rng)));
    scenes
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn bank_from(scenes: &[Scene], cfg: &PipelineConfig) -> EmbeddingBank {
    let data: Vec<(RgbImage, BinaryMask)> = scenes.iter().map(|s| (s.image.clone(), s.box_mask.clone())).collect();
    build_embedding_bank(&data, &HandcraftedExtractor, &cfg.bank_params()).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
}

fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BinaryMask {
    let p: f64 = rng.gen_range(0.0..1.0);
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(p))
}

fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BinaryMask {
    let x0 = rng.gen_range(0..w - 1);
    let x1 = rng.gen_range(x0..w);
    let y0 = rng.gen_range(0..h - 1);
    let y1 = rng.gen_range(y0..h);
    BinaryMask::from_fn(w, h, |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1)
}

/// Image with a few smooth color regions plus noise, for SLIC.
fn region_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let seeds: Vec<(f64, f64, [f64; 3])> = (0..rng.gen_range(2..6))
        .map(|_| {
            (
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.0..h as f64),
                [
                    rng.gen_range(0.0..255.0),
                    rng.gen_range(0.0..255.0),
                    rng.gen_range(0.0..255.0),
                ],
            )
        })
        .collect();
    let noise: f64 = rng.gen_range(0.0..30.0);
    RgbImage::from_fn(w, h, |x, y| {
        let (_, _, c) = seeds
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - x as f64).powi(2) + (a.1 - y as f64).powi(2);
                let db = (b.0 - x as f64).powi(2) + (b.1 - y as f64).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        c.map(|v| clamp_u8(v + rng.gen_range(-1.0..1.0) * noise))
    })
}

// ---------------------------------------------------------------------------
// Criteria

fn c1_downstream_training() -> Outcome {
    Outcome {
        status: Status::NotApplicable,
        detail: "downstream network training is out of scope; criteria 2-11 substitute for it".into(),
    }
}

fn c2_shrink_benchmark() -> Outcome {
    let scenes = suite(2);
    let cfg = PipelineConfig::default();
    let start = Instant::now();
    let mut box_ious = Vec::new();
    let mut pseudo_ious = Vec::new();
    let mut ellipse_box = Vec::new();
    let mut ellipse_pseudo = Vec::new();
    for s in &scenes {
        let pseudo = rapid_boxshrink(&s.image, &s.box_mask, &cfg).unwrap();
        let b = iou(&s.box_mask, &s.gt).unwrap();
        let p = iou(&pseudo, &s.gt).unwrap();
        box_ious.push(b);
        pseudo_ious.push(p);
        if s.ellipse {
            ellipse_box.push(b);
            ellipse_pseudo.push(p);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let gain = mean(&pseudo_ious) - mean(&box_ious);
    let ellipse_min = ellipse_pseudo.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = gain >= 0.05 && mean(&ellipse_pseudo) >= 0.85 && secs <= 60.0;
    Outcome::check(
        ok,
        format!(
            "gain {gain:.4} (need >= 0.05); ellipse box IoU {:.4} (pi/4 = {:.4}), ellipse rapid IoU mean {:.4} min {ellipse_min:.4} (need >= 0.85); {secs:.2} s (need <= 60)",
            mean(&ellipse_box),
            PI / 4.0,
            mean(&ellipse_pseudo),
        ),
    )
}

fn c3_robust_benchmark() -> Outcome {
    let scenes = suite(2);
    let cfg = PipelineConfig::default();
    let held_out: Vec<Scene> = {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        (0..5)
            .map(|i| {
                if i % 2 == 0 {
                    ellipse_scene(&mut rng)
                } else {
                    blob_scene(&mut rng)
                }
            })
            .collect()
    };
    let bank = bank_from(&held_out, &cfg);
    let mut box_ious = Vec::new();
    let mut robust_ious = Vec::new();
    let mut violations = Vec::new();
    let mut removed_total = 0;
    for (k, s) in scenes.iter().enumerate() {
        let t = robust_boxshrink_traced(&s.image, &s.box_mask, &bank, &HandcraftedExtractor, &cfg).unwrap();
        box_ious.push(iou(&s.box_mask, &s.gt).unwrap());
        robust_ious.push(iou(&t.mask, &s.gt).unwrap());

        let boundary = boundary_foreground(&t.segments, &t.initial).unwrap();
        let pass = &t.passes[0];
        removed_total += pass.removed.len();
        let untouched_fg: BTreeSet<u32> = t.initial.foreground.difference(&boundary).copied().collect();
        let ok = pass.candidates == boundary
            && pass.removed.is_subset(&boundary)
            && untouched_fg.is_subset(&t.sets.foreground)
            && t.initial.background.is_subset(&t.sets.background)
            && t.sets.foreground.len() + pass.removed.len() == t.initial.foreground.len();
        // Pixel level: every superpixel outside the boundary set keeps its label.
        let pixel_ok = t
            .segments
            .labels()
            .iter()
            .zip(t.pre_crf.as_raw())
            .all(|(l, &m)| boundary.contains(l) || (m == 1) == t.initial.is_foreground(*l));
        if !(ok && pixel_ok) {
            violations.push(k);
        }
    }
    let gain = mean(&robust_ious) - mean(&box_ious);
    Outcome::check(
        gain >= 0.05 && violations.is_empty(),
        format!(
            "robust IoU {:.4} vs box {:.4}, gain {gain:.4} (need >= 0.05); {removed_total} boundary superpixels removed, non-boundary changes in {} images (need 0)",
            mean(&robust_ious),
            mean(&box_ious),
            violations.len()
        ),
    )
}

fn c4_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..100 {
        let image = random_image(&mut rng, 16, 16);
        let mask = random_mask(&mut rng, 16, 16);
        let params = CrfParams {
            gaussian_weight: 0.0,
            bilateral_weight: 0.0,
            iterations: rng.gen_range(1..=10),
            unary_confidence: rng.gen_range(0.55..0.99),
            ..CrfParams::default()
        };
        let unary = unary_from_mask(&mask, params.unary_confidence).unwrap();
        let fast = mean_field_refine(&image, &unary, &params).unwrap();
        let dense = mean_field_refine_dense(&image, &unary, &params).unwrap();
        if fast.mask != mask || dense.mask != mask {
            mismatches += 1;
        }
    }
    Outcome::check(
        mismatches == 0,
        format!("{mismatches}/100 cases differ from the input mask (need 0)"),
    )
}

fn c5_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = CrfParams::default();
    let mut flips = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let image = random_image(&mut rng, 12, 12);
        let mask = random_box(&mut rng, 12, 12);
        let unary = unary_from_mask(&mask, params.unary_confidence).unwrap();
        let fast = mean_field_refine(&image, &unary, &params).unwrap();
        let dense = mean_field_refine_dense(&image, &unary, &params).unwrap();
        flips += fast
            .mask
            .as_raw()
            .iter()
            .zip(dense.mask.as_raw())
            .filter(|(a, b)| a != b)
            .count();
        for (a, b) in fast
            .marginals
            .probabilities()
            .iter()
            .zip(dense.marginals.probabilities())
        {
            worst = worst.max((a[1] - b[1]).abs());
        }
    }
    Outcome::check(
        flips == 0 && worst <= 5e-2,
        format!("{flips} label disagreements (need 0); max marginal difference {worst:.2e} (need <= 5e-2)"),
    )
}

fn c6_energy() -> Outcome {
    let g = |d2: f64, s: f64| (-d2 / (2.0 * s * s)).exp();
    let mut errors = Vec::new();

    // 1x2, identical colors, labels differ.
    {
        let p = CrfParams::default();
        let image = RgbImage::filled(2, 1, [100, 100, 100]);
        let unary = UnaryPotentials::new(2, 1, vec![[0.5, 1.5], [2.0, 0.25]]).unwrap();
        let labels = BinaryMask::new(2, 1, vec![0, 1]).unwrap();
        let expected = 0.5 + 0.25 + 3.0 * g(1.0, 5.0) + 10.0 * g(1.0, 25.0);
        errors.push((gibbs_energy(&labels, &unary, &image, &p).unwrap() - expected).abs());
    }
    // 2x2 checkerboard with distinct colors, custom kernels.
    {
        let p = CrfParams {
            gaussian_sxy: 1.0,
            gaussian_weight: 2.0,
            bilateral_sxy: 2.0,
            bilateral_srgb: 50.0,
            bilateral_weight: 4.0,
            ..CrfParams::default()
        };
        let colors = [[0, 0, 0], [30, 0, 0], [0, 40, 0], [0, 0, 100]];
        let image = RgbImage::from_fn(2, 2, |x, y| colors[(y * 2 + x) as usize]);
        let unary = UnaryPotentials::new(2, 2, vec![[1.0, 2.0], [0.1, 0.2], [3.0, 0.0], [0.7, 0.9]]).unwrap();
        let labels = BinaryMask::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        // Unary: 2.0 + 0.1 + 3.0 + 0.9. Differing pairs: (0,1) (0,2) (1,3) (2,3).
        let k = |d2: f64, c2: f64| 2.0 * g(d2, 1.0) + 4.0 * (-d2 / 8.0 - c2 / 5000.0).exp();
        let expected = 6.0 + k(1.0, 900.0) + k(1.0, 1600.0) + k(1.0, 900.0 + 10000.0) + k(1.0, 1600.0 + 10000.0);
        errors.push((gibbs_energy(&labels, &unary, &image, &p).unwrap() - expected).abs());
    }
    // 3x3, single label: the pairwise term vanishes.
    {
        let p = CrfParams::default();
        let image = RgbImage::from_fn(3, 3, |x, y| [(x * 80) as u8, (y * 80) as u8, 7]);
        let costs: Vec<[f64; 2]> = (0..9).map(|i| [i as f64 * 0.1, 1.0 - i as f64 * 0.05]).collect();
        let unary = UnaryPotentials::new(3, 3, costs).unwrap();
        let labels = BinaryMask::ones(3, 3);
        let expected = (0..9).map(|i| 1.0 - i as f64 * 0.05).sum::<f64>();
        errors.push((gibbs_energy(&labels, &unary, &image, &p).unwrap() - expected).abs());
    }
    let worst = errors.iter().copied().fold(0.0, f64::max);
    Outcome::check(
        worst <= 1e-9,
        format!("max |energy - hand value| {worst:.2e} over 3 cases (need <= 1e-9)"),
    )
}

/// Number of 4-connected components of each label.
fn components_per_label(map: &SuperpixelMap) -> Vec<usize> {
    let (w, h) = (map.width() as usize, map.height() as usize);
    let labels = map.labels();
    let mut seen = vec![false; labels.len()];
    let mut count = vec![0; map.num_segments()];
    for start in 0..labels.len() {
        if seen[start] {
            continue;
        }
        count[labels[start] as usize] += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let mut next = Vec::with_capacity(4);
            if x > 0 {
                next.push(i - 1);
            }
            if x + 1 < w {
                next.push(i + 1);
            }
            if y > 0 {
                next.push(i - w);
            }
            if y + 1 < h {
                next.push(i + w);
            }
            for j in next {
                if !seen[j] && labels[j] == labels[i] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    count
}

fn c7_slic_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    for k in 0..50 {
        let image = if k % 2 == 0 {
            region_image(&mut rng, 64, 64)
        } else {
            random_image(&mut rng, 64, 64)
        };
        let s = [5, 20, 50, 100, 250][k % 5];
        let params = SlicParams::with_segments(s);
        let map = slic_segment(&image, &params).unwrap();
        let n = map.num_segments();
        let partition = map.labels().len() == 64 * 64 && map.labels().iter().all(|&l| (l as usize) < n);
        let all_used = map.segment_sizes().iter().all(|&c| c > 0);
        let bounded = n >= 1 && n <= s;
        let connected = components_per_label(&map).iter().all(|&c| c == 1);
        let deterministic = slic_segment(&image, &params).unwrap() == map;
        if !(partition && all_used && bounded && connected && deterministic) {
            failures.push(format!("#{k} (s={s}, K={n})"));
        }
    }
    Outcome::check(
        failures.is_empty(),
        format!(
            "{}/50 images violate partition, K <= s, 4-connectivity or determinism {:?}",
            failures.len(),
            failures
        ),
    )
}

fn c8_iou_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let a = random_mask(&mut rng, 16, 16);
        let b = random_mask(&mut rng, 16, 16);
        let (mut inter, mut union) = (0u32, 0u32);
        for y in 0..16 {
            for x in 0..16 {
                inter += (a.get(x, y) && b.get(x, y)) as u32;
                union += (a.get(x, y) || b.get(x, y)) as u32;
            }
        }
        let expected = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        if iou(&a, &b).unwrap() != expected {
            mismatches += 1;
        }
    }
    let a = BinaryMask::from_fn(4, 4, |x, y| x < 2 && y < 2);
    let b = BinaryMask::from_fn(4, 4, |x, y| (1..3).contains(&x) && (1..3).contains(&y));
    let seventh = iou(&a, &b).unwrap();
    Outcome::check(
        mismatches == 0 && seventh == 1.0 / 7.0,
        format!("{mismatches}/1000 pairs differ from pixel counting (need 0); shifted 2x2 squares give {seventh} (need 1/7)"),
    )
}

fn c9_guards() -> Outcome {
    let g = GuardParams::default();
    let mut notes = Vec::new();
    let mut ok = (g.min_occupancy, g.min_iou) == (0.1, 0.1);

    // 20x20 image; a 4x5 box covers 0.05 of it.
    let small_box = BinaryMask::from_fn(20, 20, |x, y| x < 4 && y < 5);
    let decision = guard_decision(&small_box.clone(), &small_box, &g).unwrap();
    ok &= decision == GuardDecision::LowOccupancy
        && apply_guards(&BinaryMask::from_fn(20, 20, |x, y| x < 2 && y < 5), &small_box, &g).unwrap() == small_box;
    notes.push(format!("occupancy 0.05 -> {decision:?}"));

    // A 200-pixel box and a 10-pixel pseudo-mask inside it: IoU 0.05.
    let big_box = BinaryMask::from_fn(20, 20, |_, y| y < 10);
    let sliver = BinaryMask::from_fn(20, 20, |x, y| x < 10 && y == 0);
    let decision = guard_decision(&sliver, &big_box, &g).unwrap();
    ok &= iou(&sliver, &big_box).unwrap() == 0.05
        && decision == GuardDecision::LowIou
        && apply_guards(&sliver, &big_box, &g).unwrap() == big_box;
    notes.push(format!("IoU 0.05 -> {decision:?}"));

    // Box occupancy 0.5, pseudo IoU 0.9: the pseudo-mask survives.
    let pseudo = BinaryMask::from_fn(20, 20, |_, y| y < 9);
    let decision = guard_decision(&pseudo, &big_box, &g).unwrap();
    ok &= decision == GuardDecision::Accepted && apply_guards(&pseudo, &big_box, &g).unwrap() == pseudo;
    notes.push(format!("occupancy 0.5, IoU 0.9 -> {decision:?}"));

    // Exactly at both thresholds the guards stay quiet.
    let edge_box = BinaryMask::from_fn(20, 20, |_, y| y < 2);
    let edge_pseudo = BinaryMask::from_fn(20, 20, |x, y| x < 4 && y == 0);
    let decision = guard_decision(&edge_pseudo, &edge_box, &g).unwrap();
    ok &= decision == GuardDecision::Accepted;
    notes.push(format!("occupancy 0.1, IoU 0.1 -> {decision:?}"));

    // End to end: a tiny box comes back unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let image = random_image(&mut rng, 40, 40);
    let tiny = BinaryMask::from_fn(40, 40, |x, y| (10..18).contains(&x) && (10..20).contains(&y));
    let t = rapid_boxshrink_traced(&image, &tiny, &PipelineConfig::default()).unwrap();
    ok &= t.guard == GuardDecision::LowOccupancy && t.mask == tiny;
    notes.push(format!("pipeline with occupancy 0.05 -> {:?}", t.guard));

    Outcome::check(ok, notes.join("; "))
}

fn c10_threshold_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let thresholds = [0.1, 0.3, 0.6, 0.9];
    let mut violations = 0;
    let mut sizes = Vec::new();
    for _ in 0..10 {
        let image = region_image(&mut rng, 64, 48);
        let box_mask = random_box(&mut rng, 64, 48);
        let map = slic_segment(&image, &SlicParams::with_segments(60)).unwrap();
        let sets: Vec<BTreeSet<u32>> = thresholds
            .iter()
            .map(|&t| overlap_assign(&map, &box_mask, t).unwrap().foreground)
            .collect();
        violations += sets.windows(2).filter(|p| !p[1].is_subset(&p[0])).count();
        sizes.push(sets.iter().map(BTreeSet::len).collect::<Vec<_>>());
    }
    Outcome::check(
        violations == 0,
        format!("{violations} containment violations over 10 images (need 0); foreground sizes {sizes:?}"),
    )
}

fn c11_runtime() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (w, h) = (384u32, 288u32);
    let gt = BinaryMask::from_fn(w, h, |x, y| {
        let dx = (x as f64 - 190.0) / 80.0;
        let dy = (y as f64 - 150.0) / 60.0;
        dx * dx + dy * dy <= 1.0
    });
    let scene = finish_scene(&mut rng, gt, true);
    let cfg = PipelineConfig::default();
    let bank = bank_from(&suite(111)[..5], &cfg);

    let start = Instant::now();
    let rapid = rapid_boxshrink(&scene.image, &scene.box_mask, &cfg).unwrap();
    let rapid_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let robust = robust_boxshrink(&scene.image, &scene.box_mask, &bank, &HandcraftedExtractor, &cfg).unwrap();
    let robust_secs = start.elapsed().as_secs_f64();
    let sane = rapid.has_foreground() && robust.has_foreground();
    Outcome::check(
        sane && rapid_secs <= 2.0 && robust_secs <= 10.0,
        format!("384x288: rapid {rapid_secs:.3} s (need <= 2), robust {robust_secs:.3} s (need <= 10)"),
    )
}

fn c12_real_data() -> Outcome {
    let Some(root) = std::env::var_os(REAL_DATA_ENV).map(PathBuf::from) else {
        return Outcome {
            status: Status::Skipped,
            detail: format!("set {REAL_DATA_ENV} to a directory with images/ and masks/ to run"),
        };
    };
    real_data(&root).unwrap_or_else(|e| Outcome::check(false, format!("could not run on {}: {e}", root.display())))
}

fn real_data(root: &Path) -> boxshrink::error::Result<Outcome> {
    let mut data = Vec::new();
    for path in boxshrink::io::list_images(root.join("images"))? {
        let gt_path = root.join("masks").join(path.file_name().unwrap());
        if !gt_path.is_file() {
            continue;
        }
        let image = boxshrink::io::load_rgb(&path)?;
        let gt = boxshrink::io::load_mask(&gt_path)?;
        let boxes = mask_to_bboxes(&gt);
        if boxes.is_empty() {
            continue;
        }
        let box_mask = boxes_to_mask(&boxes, gt.width(), gt.height())?;
        data.push((image, gt, box_mask));
    }
    if data.len() < 20 {
        return Ok(Outcome::check(
            false,
            format!("only {} usable image/mask pairs (need >= 20)", data.len()),
        ));
    }
    let cfg = PipelineConfig::default();
    let pairs: Vec<(RgbImage, BinaryMask)> = data.iter().map(|(i, _, b)| (i.clone(), b.clone())).collect();
    let bank = build_embedding_bank(&pairs, &HandcraftedExtractor, &cfg.bank_params())?;
    let (mut b, mut r, mut rb) = (Vec::new(), Vec::new(), Vec::new());
    for (image, gt, box_mask) in &data {
        b.push(iou(box_mask, gt)?);
        r.push(iou(&rapid_boxshrink(image, box_mask, &cfg)?, gt)?);
        rb.push(iou(
            &robust_boxshrink(image, box_mask, &bank, &HandcraftedExtractor, &cfg)?,
            gt,
        )?);
    }
    let (mb, mr, mrb) = (mean(&b), mean(&r), mean(&rb));
    Ok(Outcome::check(
        mr > mb && mrb > mb,
        format!("{} images: box {mb:.4}, rapid {mr:.4}, robust {mrb:.4}", data.len()),
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 12] = [
        (1, "downstream training", c1_downstream_training),
        (2, "synthetic shrink benchmark", c2_shrink_benchmark),
        (3, "robust benchmark", c3_robust_benchmark),
        (4, "CRF degeneracy", c4_degeneracy),
        (5, "CRF oracle equivalence", c5_oracle_equivalence),
        (6, "energy check", c6_energy),
        (7, "SLIC invariants", c7_slic_invariants),
        (8, "IoU oracle", c8_iou_oracle),
        (9, "guard behavior", c9_guards),
        (10, "threshold monotonicity", c10_threshold_monotonicity),
        (11, "runtime", c11_runtime),
        (12, "real-data smoke", c12_real_data),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let outcome = run();
        let tag = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed.push(id);
                "FAIL"
            }
            Status::NotApplicable => "N/A",
            Status::Skipped => "SKIP",
        };
        println!("criterion {id:>2} [{tag}] {name}: {}", outcome.detail);
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
