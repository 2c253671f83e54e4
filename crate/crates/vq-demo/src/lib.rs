//! Browser demo bindings: visual-question rendering, toy-policy training,
//! and answer judging, all running client-side. The `*_impl` functions hold
//! the logic and are exercised by native tests; the `#[wasm_bindgen]`
//! wrappers only translate errors for JavaScript.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use wasm_bindgen::prelude::*;

use vq_core::judge::{hierarchical_judge, JudgeOptions};
use vq_core::render::{self, FontLibrary, Script};
use vq_core::rollout::{self, ToyTask, ToyTrainConfig, TrainMode};
use vq_core::seed;

const DEJAVU: &[u8] = include_bytes!("../../../assets/fonts/DejaVuSans.ttf");
const TEST_CJK: &[u8] = include_bytes!("../../../assets/fonts/TestCJK-Regular.ttf");

fn font_library() -> Result<FontLibrary, String> {
    FontLibrary::from_memory(vec![
        ("DejaVuSans.ttf".to_string(), DEJAVU.to_vec(), vec![Script::Latin]),
        (
            "TestCJK-Regular.ttf".to_string(),
            TEST_CJK.to_vec(),
            vec![Script::Latin, Script::Cjk],
        ),
    ])
    .map_err(|e| e.to_string())
}

/// Synthetic chart-like base image so the demo needs no uploads.
fn base_image(w: u32, h: u32, seed_val: u64) -> RgbImage {
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    // light grid
    for y in (0..h).step_by(24) {
        for x in 0..w {
            img.put_pixel(x, y, Rgb([225, 230, 238]));
        }
    }
    for x in (0..w).step_by(24) {
        for y in 0..h {
            img.put_pixel(x, y, Rgb([225, 230, 238]));
        }
    }
    // deterministic bars
    let colors = [[66, 135, 245], [235, 110, 75], [80, 175, 110], [150, 100, 210]];
    let mut state = seed_val | 1;
    for (i, color) in colors.iter().enumerate() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let bar_h = 20 + (state >> 33) as u32 % (h.saturating_sub(40).max(1));
        let x0 = 20 + i as u32 * (w.saturating_sub(40) / colors.len() as u32);
        let bar_w = (w.saturating_sub(40) / colors.len() as u32).saturating_sub(12).max(4);
        for x in x0..(x0 + bar_w).min(w) {
            for y in h.saturating_sub(bar_h.min(h))..h {
                img.put_pixel(x, y, Rgb(*color));
            }
        }
    }
    img
}

pub fn render_preview_impl(
    question: &str,
    seed_val: u64,
    fixed_style: bool,
) -> Result<Vec<u8>, String> {
    let library = font_library()?;
    let style = if fixed_style {
        library.fixed_style().map_err(|e| e.to_string())?
    } else {
        let mut rng = seed::rng_from(seed_val);
        library.sample_style(&mut rng, question).map_err(|e| e.to_string())?
    };
    let base = base_image(360, 220, seed_val);
    let context = render::render(
        &base,
        question,
        &style,
        "Answer the question in the image.",
        &library,
    )
    .map_err(|e| e.to_string())?;
    let render::Context::VisualQuestion { image, .. } = context else {
        return Err("render did not produce a visual question".to_string());
    };
    let mut png = Vec::new();
    image
        .write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(png)
}

pub fn train_toy_trace_impl(mode: &str, steps: usize, seed_val: u64) -> Result<String, String> {
    let mode = match mode {
        "vq_only" => TrainMode::VqOnly,
        "standard_only" => TrainMode::StandardOnly,
        "hybrid" => TrainMode::Hybrid { n1: 3, n2: 3 },
        other => return Err(format!("unknown mode {other:?}")),
    };
    if steps == 0 || steps > 2000 {
        return Err(format!("steps {steps} outside 1..=2000"));
    }
    let task = ToyTask::random(8, 4, &mut seed::rng_for(seed_val, u64::MAX));
    let result = rollout::train_toy(&task, mode, steps, seed_val, &ToyTrainConfig::default())
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&result.trace).map_err(|e| e.to_string())
}

pub fn judge_answer_impl(
    ground_truth: &str,
    model_output: &str,
    rel_tol: f64,
) -> Result<String, String> {
    if !(0.0..1.0).contains(&rel_tol) {
        return Err(format!("rel_tol {rel_tol} outside [0, 1)"));
    }
    let opts = JudgeOptions { rel_tol, fallback_on_mismatch: false };
    let verdict = hierarchical_judge("", ground_truth, model_output, &opts, None);
    serde_json::to_string(&verdict).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn render_preview(question: &str, seed: u64, fixed_style: bool) -> Result<Vec<u8>, JsValue> {
    render_preview_impl(question, seed, fixed_style).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn train_toy_trace(mode: &str, steps: usize, seed: u64) -> Result<String, JsValue> {
    train_toy_trace_impl(mode, steps, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn judge_answer(
    ground_truth: &str,
    model_output: &str,
    rel_tol: f64,
) -> Result<String, JsValue> {
    judge_answer_impl(ground_truth, model_output, rel_tol).map_err(|e| JsValue::from_str(&e))
}
