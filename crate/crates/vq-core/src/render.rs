//! Question-text rendering: wraps the question, samples a randomized style,
//! and draws the text on a white band appended below the original image.
//!
//! The original pixels are never touched; the output canvas keeps the input
//! width and grows downward by `line_count * line_height(size_pt)` where
//! `line_height(size) = ceil(1.3 * size * 96 / 72)` (96-dpi point-to-pixel
//! convention).

use std::fs;
use std::path::{Path, PathBuf};

use ab_glyph::{point, Font, FontVec, PxScale, ScaleFont};
use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, RenderManifestEntry, RenderMode, Sample};
use crate::seed;

/// Generic instruction carried by visual-question contexts.
pub const DEFAULT_PROMPT: &str = "Answer the question in the image.";

/// Fixed dark palette; every entry has WCAG contrast >= 4.5:1 against white.
pub const PALETTE: [[u8; 3]; 8] = [
    [0, 0, 0],       // black
    [64, 64, 64],    // dark gray
    [0, 0, 128],     // navy
    [139, 0, 0],     // dark red
    [0, 100, 0],     // dark green
    [101, 67, 33],   // dark brown
    [75, 0, 130],    // indigo
    [0, 105, 105],   // dark teal
];

pub const SIZE_MIN: u32 = 18;
pub const SIZE_MAX: u32 = 42;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad font declaration {path}: {message}")]
    BadDeclaration { path: PathBuf, message: String },
    #[error("cannot parse font {name}")]
    BadFont { name: String },
    #[error("no configured font covers script {script:?}")]
    NoFontForScript { script: Script },
    #[error("unknown font \"{0}\"")]
    UnknownFont(String),
    #[error("glyph '{glyph}' is wider ({width}px) than the wrap width {max_width}px")]
    GlyphTooWide { glyph: char, width: u32, max_width: u32 },
    #[error("question is empty")]
    EmptyQuestion,
    #[error("vq_ratio {0} outside [0, 1]")]
    BadRatio(f64),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Script classes the font set declares coverage for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Script {
    Latin,
    Cjk,
}

/// Script class a question requires: CJK if it contains any codepoint in the
/// CJK Unified Ideographs, Hiragana, Katakana, or Hangul syllable blocks.
pub fn question_script(question: &str) -> Script {
    let cjk = question.chars().any(|c| {
        let cp = c as u32;
        (0x4E00..=0x9FFF).contains(&cp)
            || (0x3040..=0x309F).contains(&cp)
            || (0x30A0..=0x30FF).contains(&cp)
            || (0xAC00..=0xD7AF).contains(&cp)
    });
    if cjk {
        Script::Cjk
    } else {
        Script::Latin
    }
}

/// Sampled visual presentation for one rendered question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub font: String,
    pub size_pt: u32,
    pub color: [u8; 3],
    pub line_spacing: f64,
}

/// A tagged input context: the question either rides the text channel or is
/// rendered into the image.
#[derive(Debug, Clone)]
pub enum Context {
    Standard { image: RgbImage, question: String },
    VisualQuestion { image: RgbImage, prompt: String },
}

impl Context {
    pub fn mode(&self) -> RenderMode {
        match self {
            Context::Standard { .. } => RenderMode::Orig,
            Context::VisualQuestion { .. } => RenderMode::Vq,
        }
    }
}

pub struct LoadedFont {
    pub name: String,
    pub scripts: Vec<Script>,
    pub font: FontVec,
}

#[derive(Deserialize)]
struct FontDecl {
    file: String,
    scripts: Vec<Script>,
}

#[derive(Deserialize)]
struct FontDeclFile {
    fonts: Vec<FontDecl>,
}

/// The configured font set, read-only after load.
pub struct FontLibrary {
    fonts: Vec<LoadedFont>,
}

impl FontLibrary {
    /// Loads fonts declared in `<dir>/fonts.json`:
    /// `{"fonts":[{"file": string, "scripts": ["latin"|"cjk", ...]}]}`.
    pub fn from_dir(dir: &Path) -> Result<Self, RenderError> {
        let decl_path = dir.join("fonts.json");
        let text = fs::read_to_string(&decl_path)
            .map_err(|e| RenderError::Io { path: decl_path.clone(), source: e })?;
        let decl: FontDeclFile = serde_json::from_str(&text).map_err(|e| {
            RenderError::BadDeclaration { path: decl_path.clone(), message: e.to_string() }
        })?;
        let mut fonts = Vec::new();
        for f in decl.fonts {
            let path = dir.join(&f.file);
            let bytes =
                fs::read(&path).map_err(|e| RenderError::Io { path: path.clone(), source: e })?;
            fonts.push(LoadedFont {
                font: FontVec::try_from_vec(bytes)
                    .map_err(|_| RenderError::BadFont { name: f.file.clone() })?,
                name: f.file,
                scripts: f.scripts,
            });
        }
        Ok(FontLibrary { fonts })
    }

    /// Builds a library from in-memory font data (used by the wasm demo).
    pub fn from_memory(
        fonts: Vec<(String, Vec<u8>, Vec<Script>)>,
    ) -> Result<Self, RenderError> {
        let fonts = fonts
            .into_iter()
            .map(|(name, bytes, scripts)| {
                Ok(LoadedFont {
                    font: FontVec::try_from_vec(bytes)
                        .map_err(|_| RenderError::BadFont { name: name.clone() })?,
                    name,
                    scripts,
                })
            })
            .collect::<Result<Vec<_>, RenderError>>()?;
        Ok(FontLibrary { fonts })
    }

    pub fn fonts(&self) -> &[LoadedFont] {
        &self.fonts
    }

    pub fn by_name(&self, name: &str) -> Result<&LoadedFont, RenderError> {
        self.fonts
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| RenderError::UnknownFont(name.to_string()))
    }

    fn covering(&self, script: Script) -> Vec<&LoadedFont> {
        self.fonts.iter().filter(|f| f.scripts.contains(&script)).collect()
    }

    /// Draws a random style: font from the subset covering the question's
    /// script, size uniform over `[SIZE_MIN, SIZE_MAX]`, color uniform over
    /// the dark palette.
    pub fn sample_style<R: Rng>(
        &self,
        rng: &mut R,
        question: &str,
    ) -> Result<RenderStyle, RenderError> {
        let script = question_script(question);
        let candidates = self.covering(script);
        if candidates.is_empty() {
            return Err(RenderError::NoFontForScript { script });
        }
        let font = candidates[rng.gen_range(0..candidates.len())];
        let size_pt = rng.gen_range(SIZE_MIN..=SIZE_MAX);
        let color = PALETTE[rng.gen_range(0..PALETTE.len())];
        Ok(RenderStyle { font: font.name.clone(), size_pt, color, line_spacing: 1.3 })
    }

    /// The fixed-style baseline: size 24, black, first Latin-capable font.
    pub fn fixed_style(&self) -> Result<RenderStyle, RenderError> {
        let font = self
            .covering(Script::Latin)
            .first()
            .copied()
            .ok_or(RenderError::NoFontForScript { script: Script::Latin })?;
        Ok(RenderStyle { font: font.name.clone(), size_pt: 24, color: [0, 0, 0], line_spacing: 1.3 })
    }
}

/// Point size to pixel size under the 96-dpi convention.
pub fn px_size(size_pt: u32) -> f32 {
    size_pt as f32 * 96.0 / 72.0
}

/// `ceil(1.3 * px_size)` pixels per text line.
pub fn line_height(size_pt: u32) -> u32 {
    (1.3 * size_pt as f64 * 96.0 / 72.0).ceil() as u32
}

fn char_advance<F: Font>(font: &F, size_pt: u32, c: char) -> f32 {
    let scaled = font.as_scaled(PxScale::from(px_size(size_pt)));
    scaled.h_advance(font.glyph_id(c))
}

fn measure<F: Font>(font: &F, size_pt: u32, text: &str) -> f32 {
    text.chars().map(|c| char_advance(font, size_pt, c)).sum()
}

fn is_cjk_char(c: char) -> bool {
    question_script(&c.to_string()) == Script::Cjk
}

enum Chunk {
    Space(String),
    Word(String),
}

fn chunks(text: &str) -> Vec<Chunk> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut space = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !word.is_empty() {
                out.push(Chunk::Word(std::mem::take(&mut word)));
            }
            space.push(c);
        } else if is_cjk_char(c) {
            // CJK runs break between any two characters
            if !word.is_empty() {
                out.push(Chunk::Word(std::mem::take(&mut word)));
            }
            if !space.is_empty() {
                out.push(Chunk::Space(std::mem::take(&mut space)));
            }
            out.push(Chunk::Word(c.to_string()));
        } else {
            if !space.is_empty() {
                out.push(Chunk::Space(std::mem::take(&mut space)));
            }
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(Chunk::Word(word));
    }
    if !space.is_empty() {
        out.push(Chunk::Space(space));
    }
    out
}

/// Greedy fill: whitespace is a break opportunity everywhere, CJK runs break
/// between any two characters, and an oversized word degrades to per-character
/// breaking. Whitespace consumed at a break is dropped; everything else is
/// preserved, so concatenating the lines reproduces the question minus the
/// break separators.
pub fn wrap_text<F: Font>(
    question: &str,
    max_width_px: u32,
    font: &F,
    size_pt: u32,
) -> Result<Vec<String>, RenderError> {
    let max = max_width_px as f32;
    let mut lines: Vec<String> = Vec::new();
    let mut line = String::new();
    let mut pending_space = String::new();

    let push_word = |lines: &mut Vec<String>,
                     line: &mut String,
                     word: &str|
     -> Result<(), RenderError> {
        // the word alone does not fit an empty line: break per character
        for c in word.chars() {
            let w = char_advance(font, size_pt, c);
            if w > max {
                return Err(RenderError::GlyphTooWide {
                    glyph: c,
                    width: w.ceil() as u32,
                    max_width: max_width_px,
                });
            }
            if !line.is_empty() && measure(font, size_pt, line) + w > max {
                lines.push(std::mem::take(line));
            }
            line.push(c);
        }
        Ok(())
    };

    for chunk in chunks(question) {
        match chunk {
            Chunk::Space(s) => pending_space.push_str(&s),
            Chunk::Word(word) => {
                let candidate_sep = if line.is_empty() { "" } else { pending_space.as_str() };
                let candidate_width = measure(font, size_pt, &line)
                    + measure(font, size_pt, candidate_sep)
                    + measure(font, size_pt, &word);
                if candidate_width <= max {
                    line.push_str(candidate_sep);
                    line.push_str(&word);
                } else if measure(font, size_pt, &word) <= max {
                    if !line.is_empty() {
                        lines.push(std::mem::take(&mut line));
                    }
                    line.push_str(&word);
                } else {
                    if !line.is_empty() {
                        lines.push(std::mem::take(&mut line));
                    }
                    push_word(&mut lines, &mut line, &word)?;
                }
                pending_space.clear();
            }
        }
    }
    if !line.is_empty() {
        lines.push(line);
    }
    Ok(lines)
}

/// Horizontal inset for drawn text; keeps glyph side bearings on-canvas.
const TEXT_MARGIN: u32 = 2;

/// Renders the question below the image per the configured style and returns
/// a visual-question context. The original pixel region is preserved
/// bit-for-bit and the canvas keeps the input width.
pub fn render(
    image: &RgbImage,
    question: &str,
    style: &RenderStyle,
    prompt: &str,
    library: &FontLibrary,
) -> Result<Context, RenderError> {
    if question.trim().is_empty() {
        return Err(RenderError::EmptyQuestion);
    }
    let loaded = library.by_name(&style.font)?;
    let font = &loaded.font;
    let wrap_width = image.width().saturating_sub(2 * TEXT_MARGIN);
    let lines = wrap_text(question, wrap_width, font, style.size_pt)?;
    let lh = line_height(style.size_pt);
    let band = lines.len() as u32 * lh;

    let (w, h_in) = (image.width(), image.height());
    let mut canvas = RgbImage::from_pixel(w, h_in + band, Rgb([255, 255, 255]));
    for (x, y, px) in image.enumerate_pixels() {
        canvas.put_pixel(x, y, *px);
    }

    let scale = PxScale::from(px_size(style.size_pt));
    let scaled = font.as_scaled(scale);
    let ascent = scaled.ascent();
    let glyph_span = ascent - scaled.descent();
    let slack = (lh as f32 - glyph_span).max(0.0);
    let color = style.color;

    for (i, text) in lines.iter().enumerate() {
        let band_top = (h_in + i as u32 * lh) as f32;
        let baseline = band_top + slack / 2.0 + ascent;
        let mut pen_x = TEXT_MARGIN as f32;
        for c in text.chars() {
            let id = font.glyph_id(c);
            let glyph = id.with_scale_and_position(scale, point(pen_x, baseline));
            if let Some(outlined) = font.outline_glyph(glyph) {
                let bounds = outlined.px_bounds();
                outlined.draw(|gx, gy, cov| {
                    let x = bounds.min.x as i64 + gx as i64;
                    let y = bounds.min.y as i64 + gy as i64;
                    if x < 0 || y < 0 || x >= w as i64 || y >= canvas.height() as i64 {
                        return;
                    }
                    let px = canvas.get_pixel_mut(x as u32, y as u32);
                    for ch in 0..3 {
                        let bg = px[ch] as f32;
                        let fg = color[ch] as f32;
                        px[ch] = (bg + (fg - bg) * cov).round().clamp(0.0, 255.0) as u8;
                    }
                });
            }
            pen_x += scaled.h_advance(id);
        }
    }

    Ok(Context::VisualQuestion { image: canvas, prompt: prompt.to_string() })
}

/// Batch transform knobs.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub prompt: String,
    /// Fixed-style baseline: size 24, black, first Latin font for every sample.
    pub fixed_style: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { prompt: DEFAULT_PROMPT.to_string(), fixed_style: false }
    }
}

/// Per-sample outcome of [`transform_batch`]; failures do not abort the batch.
pub struct SampleOutcome {
    pub sample_id: String,
    pub result: Result<(Context, RenderManifestEntry), RenderError>,
}

/// Transforms each sample into a visual question with probability `vq_ratio`,
/// else leaves it standard. Sub-seeds derive from `(seed, index)`, so the
/// outcome for sample `i` does not depend on batch partitioning or order.
pub fn transform_batch(
    samples: &[Sample],
    vq_ratio: f64,
    root_seed: u64,
    library: &FontLibrary,
    opts: &RenderOptions,
) -> Result<Vec<SampleOutcome>, RenderError> {
    if !(0.0..=1.0).contains(&vq_ratio) || !vq_ratio.is_finite() {
        return Err(RenderError::BadRatio(vq_ratio));
    }
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, sample)| SampleOutcome {
            sample_id: sample.id.clone(),
            result: transform_one(sample, i as u64, vq_ratio, root_seed, library, opts),
        })
        .collect())
}

fn transform_one(
    sample: &Sample,
    index: u64,
    vq_ratio: f64,
    root_seed: u64,
    library: &FontLibrary,
    opts: &RenderOptions,
) -> Result<(Context, RenderManifestEntry), RenderError> {
    let sub_seed = seed::derive(root_seed, index);
    let mut rng = seed::rng_from(sub_seed);
    let is_vq = rng.gen::<f64>() < vq_ratio;
    let image = crate::dataset::load_image(&sample.image_path)?;
    if is_vq {
        let style = if opts.fixed_style {
            library.fixed_style()?
        } else {
            library.sample_style(&mut rng, &sample.question)?
        };
        let context = render(&image, &sample.question, &style, &opts.prompt, library)?;
        let entry = RenderManifestEntry {
            sample_id: sample.id.clone(),
            rendered_image: format!("{}_vq.png", sample.id),
            mode: RenderMode::Vq,
            style: Some(style),
            prompt: opts.prompt.clone(),
            seed: sub_seed,
        };
        Ok((context, entry))
    } else {
        let entry = RenderManifestEntry {
            sample_id: sample.id.clone(),
            rendered_image: sample.image_path.to_string_lossy().into_owned(),
            mode: RenderMode::Orig,
            style: None,
            prompt: sample.question.clone(),
            seed: sub_seed,
        };
        let context =
            Context::Standard { image, question: sample.question.clone() };
        Ok((context, entry))
    }
}
