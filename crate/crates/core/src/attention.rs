//! Class-token attention maps: extraction, grid reshaping and heatmaps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::image::RgbImage;
use crate::data::manifest::write_file;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{forward, LayerAttention, ModelConfig, ModelInput, Modality, Params, Task};

/// What sits at a position of the token sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Class(Task),
    /// Patch `j` (row-major) of a modality.
    Patch(Modality, usize),
}

/// Token kinds in sequence order: class tokens, driver patches, face patches.
pub fn token_map(config: &ModelConfig) -> Vec<TokenKind> {
    let mut out: Vec<TokenKind> = config.tasks().into_iter().map(TokenKind::Class).collect();
    for m in config.modalities() {
        out.extend((0..config.num_patches(m)).map(|j| TokenKind::Patch(m, j)));
    }
    out
}

pub fn class_index(config: &ModelConfig, task: Task) -> Option<usize> {
    config.tasks().iter().position(|&t| t == task)
}

/// Start and length of a modality's patch tokens.
pub fn segment_range(config: &ModelConfig, modality: Modality) -> Option<(usize, usize)> {
    let mut start = config.tasks().len();
    for m in config.modalities() {
        let n = config.num_patches(m);
        if m == modality {
            return Some((start, n));
        }
        start += n;
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadSelection {
    Averaged,
    Head(usize),
}

/// One query token's attention over all keys at one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub layer: usize,
    pub head: HeadSelection,
    pub query: Task,
    pub row: Vec<f64>,
}

impl AttentionRecord {
    /// Scores of the modality's patch tokens.
    pub fn segment(&self, config: &ModelConfig, modality: Modality) -> Option<&[f64]> {
        segment_range(config, modality).map(|(s, n)| &self.row[s..s + n])
    }

    /// Score given to the class token of `task`.
    pub fn class_score(&self, config: &ModelConfig, task: Task) -> Option<f64> {
        class_index(config, task).map(|i| self.row[i])
    }
}

fn captured<'a>(attention: Option<&'a [LayerAttention]>) -> Result<&'a [LayerAttention]> {
    attention.ok_or_else(|| Error::State("attention capture was not enabled for this forward pass".into()))
}

fn query_index(config: &ModelConfig, query: Task) -> Result<usize> {
    class_index(config, query).ok_or_else(|| Error::Config(format!("model has no {} token", query.name())))
}

/// Head-averaged attention row of the `query` class token, one per layer.
pub fn extract_class_attention(
    attention: Option<&[LayerAttention]>,
    config: &ModelConfig,
    query: Task,
) -> Result<Vec<AttentionRecord>> {
    let layers = captured(attention)?;
    let q = query_index(config, query)?;
    Ok(layers
        .iter()
        .map(|la| {
            let h = la.num_heads();
            let row = if h == 1 {
                la.row(0, q).to_vec()
            } else {
                let mut acc = vec![0.0; la.seq_len()];
                for head in 0..h {
                    acc.iter_mut().zip(la.row(head, q)).for_each(|(a, v)| *a += v);
                }
                acc.iter().map(|v| v / h as f64).collect()
            };
            AttentionRecord { layer: la.layer, head: HeadSelection::Averaged, query, row }
        })
        .collect())
}

/// Attention rows of the `query` token for every layer and head.
pub fn extract_class_attention_per_head(
    attention: Option<&[LayerAttention]>,
    config: &ModelConfig,
    query: Task,
) -> Result<Vec<AttentionRecord>> {
    let layers = captured(attention)?;
    let q = query_index(config, query)?;
    Ok(layers
        .iter()
        .flat_map(|la| {
            (0..la.num_heads()).map(move |h| AttentionRecord {
                layer: la.layer,
                head: HeadSelection::Head(h),
                query,
                row: la.row(h, q).to_vec(),
            })
        })
        .collect())
}

/// Row-major 2-D grid of patch scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// Lays a patch-score segment out on the modality's patch grid.
pub fn reshape_to_grid(segment: &[f64], modality: Modality, config: &ModelConfig) -> Result<Grid> {
    let (rows, cols) = config
        .grid(modality)
        .ok_or_else(|| Error::Config(format!("model has no {} input", modality.name())))?;
    if segment.len() != rows * cols {
        return Err(Error::dim(format!(
            "{} segment has {} scores, grid is {rows}x{cols}",
            modality.name(),
            segment.len()
        )));
    }
    Ok(Grid { rows, cols, values: segment.to_vec() })
}

/// Blue (0) to red (1).
pub fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    [(255.0 * t).round() as u8, 0, (255.0 * (1.0 - t)).round() as u8]
}

/// Min-max normalized grid; a constant grid maps to 0.5 everywhere.
pub fn normalize_grid(grid: &Grid) -> Result<Vec<f64>> {
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("heatmap grid contains non-finite scores".into()));
    }
    let lo = grid.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; grid.values.len()]);
    }
    Ok(grid.values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

#[derive(Clone, Debug)]
pub struct HeatmapStyle {
    /// Pixels per grid cell.
    pub scale: usize,
    /// Source image (already at the heatmap size) and the heatmap opacity.
    pub overlay: Option<(RgbImage, f64)>,
}

impl Default for HeatmapStyle {
    fn default() -> Self {
        HeatmapStyle { scale: 8, overlay: None }
    }
}

/// Nearest-neighbor enlargement by an integer factor.
pub fn upscale_nearest(img: &RgbImage, factor: usize) -> RgbImage {
    let mut out = RgbImage::new(img.width() * factor, img.height() * factor);
    for y in 0..out.height() {
        for x in 0..out.width() {
            out.put(x, y, img.get(x / factor, y / factor));
        }
    }
    out
}

pub fn heatmap_image(grid: &Grid, style: &HeatmapStyle) -> Result<RgbImage> {
    if style.scale == 0 {
        return Err(Error::Config("heatmap scale must be positive".into()));
    }
    let t = normalize_grid(grid)?;
    let mut cells = RgbImage::new(grid.cols, grid.rows);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            cells.put(c, r, colormap(t[r * grid.cols + c]));
        }
    }
    let mut img = upscale_nearest(&cells, style.scale);
    if let Some((src, alpha)) = &style.overlay {
        if (src.width(), src.height()) != (img.width(), img.height()) {
            return Err(Error::dim(format!(
                "overlay is {}x{}, heatmap is {}x{}",
                src.width(),
                src.height(),
                img.width(),
                img.height()
            )));
        }
        for y in 0..img.height() {
            for x in 0..img.width() {
                let (h, s) = (img.get(x, y), src.get(x, y));
                let px = [0, 1, 2].map(|c| (alpha * f64::from(h[c]) + (1.0 - alpha) * f64::from(s[c])).round() as u8);
                img.put(x, y, px);
            }
        }
    }
    Ok(img)
}

/// Renders a grid and writes it as PPM.
pub fn render_heatmap(grid: &Grid, path: &Path, style: &HeatmapStyle) -> Result<RgbImage> {
    let img = heatmap_image(grid, style)?;
    img.save(path)?;
    Ok(img)
}

/// Places images left to right, top-aligned, separated by `gap` black columns.
pub fn side_by_side(images: &[RgbImage], gap: usize) -> RgbImage {
    let width = images.iter().map(RgbImage::width).sum::<usize>() + gap * images.len().saturating_sub(1);
    let height = images.iter().map(RgbImage::height).max().unwrap_or(0);
    let mut out = RgbImage::new(width.max(1), height.max(1));
    let mut x0 = 0;
    for img in images {
        for y in 0..img.height() {
            for x in 0..img.width() {
                out.put(x0 + x, y, img.get(x, y));
            }
        }
        x0 += img.width() + gap;
    }
    out
}

pub fn query_tag(query: Task) -> &'static str {
    match query {
        Task::Distraction => "dist",
        Task::Emotion => "emo",
    }
}

#[derive(Clone, Debug)]
pub struct VizOptions {
    /// 1-based layers to render; `None` renders all.
    pub layers: Option<Vec<usize>>,
    pub queries: Vec<Task>,
    /// Extra nearest-neighbor zoom on top of the patch size.
    pub zoom: usize,
    /// Heatmap opacity over the input image; `None` renders the bare map.
    pub overlay_alpha: Option<f64>,
    /// Also write the interaction CSV per head rather than only the head mean.
    pub per_head: bool,
}

impl Default for VizOptions {
    fn default() -> Self {
        VizOptions {
            layers: None,
            queries: vec![Task::Distraction, Task::Emotion],
            zoom: 4,
            overlay_alpha: None,
            per_head: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct VizOutput {
    pub heatmaps: Vec<PathBuf>,
    pub interactions: Option<PathBuf>,
}

fn modality_image(sample: &Sample, m: Modality) -> Option<RgbImage> {
    let t = match m {
        Modality::Driver => sample.driver.as_ref()?,
        Modality::Face => &sample.face,
    };
    RgbImage::from_tensor(t).ok()
}

/// Writes `<id>_L<layer>_<dist|emo>.ppm` per selected layer and query (driver
/// and face maps side by side) and `<id>_interactions.csv` with
/// `layer,head,dist_to_emo,emo_to_dist`.
pub fn visualize_sample(params: &Params, sample: &Sample, out_dir: &Path, options: &VizOptions) -> Result<VizOutput> {
    let config = params.config();
    let input = ModelInput { driver: sample.driver.as_ref(), face: &sample.face };
    let out = forward(params, input, true)?;
    let attention = out.attention.as_deref();
    let layers: Vec<usize> = match &options.layers {
        Some(list) => {
            if let Some(bad) = list.iter().find(|&&l| l == 0 || l > config.depth) {
                return Err(Error::Config(format!("layer {bad} outside 1..={}", config.depth)));
            }
            list.clone()
        }
        None => (1..=config.depth).collect(),
    };
    let mut result = VizOutput::default();
    for &query in &options.queries {
        let records = extract_class_attention(attention, config, query)?;
        for &layer in &layers {
            let rec = &records[layer - 1];
            let mut panels = Vec::new();
            for m in config.modalities() {
                let grid = reshape_to_grid(rec.segment(config, m).expect("modality present"), m, config)?;
                let overlay = match options.overlay_alpha {
                    Some(alpha) => modality_image(sample, m).map(|src| (upscale_nearest(&src, options.zoom), alpha)),
                    None => None,
                };
                let style = HeatmapStyle { scale: config.patch_size * options.zoom, overlay };
                panels.push(heatmap_image(&grid, &style)?);
            }
            let path = out_dir.join(format!("{}_L{layer}_{}.ppm", sample.sample_id, query_tag(query)));
            side_by_side(&panels, options.zoom).save(&path)?;
            result.heatmaps.push(path);
        }
    }
    if config.tasks().len() == 2 {
        let pick = |task| {
            if options.per_head {
                extract_class_attention_per_head(attention, config, task)
            } else {
                extract_class_attention(attention, config, task)
            }
        };
        let (dist, emo) = (pick(Task::Distraction)?, pick(Task::Emotion)?);
        let mut csv = String::from("layer,head,dist_to_emo,emo_to_dist\n");
        for (d, e) in dist.iter().zip(&emo) {
            if !layers.contains(&d.layer) {
                continue;
            }
            let head = match d.head {
                HeadSelection::Averaged => "mean".to_string(),
                HeadSelection::Head(h) => h.to_string(),
            };
            let _ = writeln!(
                csv,
                "{},{head},{:.9},{:.9}",
                d.layer,
                d.class_score(config, Task::Emotion).expect("emotion token"),
                e.class_score(config, Task::Distraction).expect("distraction token")
            );
        }
        let path = out_dir.join(format!("{}_interactions.csv", sample.sample_id));
        write_file(&path, csv.as_bytes())?;
        result.interactions = Some(path);
    }
    Ok(result)
}
