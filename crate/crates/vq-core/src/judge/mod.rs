//! Hierarchical answer judging: boxed-answer extraction, a LaTeX arithmetic
//! parser with canonical numeric evaluation, tolerance-based equivalence, and
//! an optional LLM fallback for cases the symbolic stage cannot decide.
//!
//! The symbolic path is entirely offline. The fallback is behind the
//! `llm-judge` feature and is only consulted when stage 1 is inconclusive
//! (or, with `fallback_on_mismatch`, on definite mismatches too).

#[cfg(feature = "llm-judge")]
pub mod llm;

mod parser;

pub use parser::parse_math;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("llm judge exhausted {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },
    #[error("llm judge request failed: {0}")]
    Http(String),
    #[error("llm judge reply contains no digit: {0:?}")]
    MalformedReply(String),
    #[error("no fallback judge configured")]
    NoFallback,
}

/// The answer text pulled out of a model response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedAnswer {
    pub text: String,
    /// True iff the text came from a `\boxed{...}` delimiter.
    pub boxed: bool,
    /// False when the last `\boxed{` was never closed and the text ran to
    /// end-of-string.
    pub balanced: bool,
}

/// Content of the last `\boxed{...}` in `output`, brace-balanced with nesting
/// respected; the whole output when no delimiter exists.
pub fn extract_boxed(output: &str) -> ExtractedAnswer {
    const DELIM: &str = "\\boxed{";
    let Some(start) = output.rfind(DELIM) else {
        return ExtractedAnswer { text: output.to_string(), boxed: false, balanced: true };
    };
    let body = &output[start + DELIM.len()..];
    let mut depth = 1usize;
    let mut escaped = false;
    for (i, c) in body.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return ExtractedAnswer {
                        text: body[..i].to_string(),
                        boxed: true,
                        balanced: true,
                    };
                }
            }
            _ => {}
        }
    }
    ExtractedAnswer { text: body.to_string(), boxed: true, balanced: false }
}

/// Canonical value of an answer string.
#[derive(Debug, Clone, PartialEq)]
pub enum MathValue {
    Number(f64),
    Choice(char),
    Text(String),
}

/// Outcome of comparing two parsed answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equivalence {
    Match,
    Mismatch,
    Inconclusive,
}

/// Compares candidate `a` against ground truth `b`.
///
/// Numbers match iff `|a - b| <= rel_tol * max(|b|, 1e-9)`; the tolerance
/// normalizes by the ground truth, so the relation is deliberately
/// asymmetric in its arguments. Cross-kind comparisons are inconclusive, as
/// are unequal normalized texts; `Mismatch` is reserved for definite
/// same-kind disagreement on numbers or choice letters.
pub fn equivalent(a: &MathValue, b: &MathValue, rel_tol: f64) -> Equivalence {
    match (a, b) {
        (MathValue::Number(x), MathValue::Number(y)) => {
            if (x - y).abs() <= rel_tol * y.abs().max(1e-9) {
                Equivalence::Match
            } else {
                Equivalence::Mismatch
            }
        }
        (MathValue::Choice(x), MathValue::Choice(y)) => {
            if x == y {
                Equivalence::Match
            } else {
                Equivalence::Mismatch
            }
        }
        (MathValue::Text(x), MathValue::Text(y)) => {
            if x == y {
                Equivalence::Match
            } else {
                Equivalence::Inconclusive
            }
        }
        _ => Equivalence::Inconclusive,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeStage {
    Symbolic,
    Llm,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub correct: bool,
    pub stage: JudgeStage,
    pub extracted: String,
    pub detail: String,
}

/// Decision of the fallback judge along with its attempt log.
#[derive(Debug, Clone)]
pub struct FallbackOutcome {
    pub correct: bool,
    /// One record per HTTP attempt, including retried failures.
    pub attempts: Vec<String>,
}

/// Second-stage judge interface; the HTTP client implements it, tests mock it.
pub trait FallbackJudge {
    fn judge(
        &self,
        question: &str,
        ground_truth: &str,
        answer: &str,
    ) -> Result<FallbackOutcome, JudgeError>;
}

#[derive(Debug, Clone, Copy)]
pub struct JudgeOptions {
    pub rel_tol: f64,
    /// Route definite symbolic mismatches to the fallback judge instead of
    /// failing them immediately.
    pub fallback_on_mismatch: bool,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions { rel_tol: 0.01, fallback_on_mismatch: false }
    }
}

/// Two-stage cascade: symbolic equivalence first, LLM fallback only when the
/// symbolic stage cannot decide.
pub fn hierarchical_judge(
    question: &str,
    ground_truth: &str,
    model_output: &str,
    opts: &JudgeOptions,
    fallback: Option<&dyn FallbackJudge>,
) -> JudgeVerdict {
    let extracted = extract_boxed(model_output);
    let candidate = parse_math(&extracted.text);
    let reference = parse_math(ground_truth);
    let eq = equivalent(&candidate, &reference, opts.rel_tol);

    let mut detail = format!("candidate={candidate:?} reference={reference:?}");
    if !extracted.balanced {
        detail.push_str(" (unbalanced \\boxed braces)");
    }

    match eq {
        Equivalence::Match => JudgeVerdict {
            correct: true,
            stage: JudgeStage::Symbolic,
            extracted: extracted.text,
            detail,
        },
        Equivalence::Mismatch if !opts.fallback_on_mismatch => JudgeVerdict {
            correct: false,
            stage: JudgeStage::Symbolic,
            extracted: extracted.text,
            detail,
        },
        _ => match fallback {
            Some(judge) => match judge.judge(question, ground_truth, &extracted.text) {
                Ok(outcome) => JudgeVerdict {
                    correct: outcome.correct,
                    stage: JudgeStage::Llm,
                    extracted: extracted.text,
                    detail: outcome.attempts.join("; "),
                },
                Err(e) => JudgeVerdict {
                    correct: false,
                    stage: JudgeStage::Failed,
                    extracted: extracted.text,
                    detail: e.to_string(),
                },
            },
            None => JudgeVerdict {
                correct: false,
                stage: JudgeStage::Failed,
                extracted: extracted.text,
                detail: format!("inconclusive, no judge ({detail})"),
            },
        },
    }
}
