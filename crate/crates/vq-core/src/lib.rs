//! Toolkit for visualized-question (VQ) training data and the RL mechanics
//! around it.
//!
//! The crate has four largely independent parts:
//!
//! * [`dataset`] / [`render`] — JSONL sample manifests and the renderer that
//!   draws question text onto a white band appended below the image, with
//!   randomized fonts, sizes, and colors.
//! * [`grpo`] — pure numeric kernels: group-relative advantages, the clipped
//!   surrogate objective, and exact categorical KL.
//! * [`rollout`] — a desk-scale two-channel softmax policy environment that
//!   runs the full rollout/advantage/update loop, including hybrid groups
//!   that mix standard and VQ contexts.
//! * [`judge`] — boxed-answer extraction, a small LaTeX arithmetic parser
//!   with tolerance-based equivalence, and an optional LLM fallback judge.

pub mod config;
pub mod dataset;
pub mod grpo;
pub mod judge;
pub mod render;
pub mod rollout;
pub mod seed;
