//! Corpus-free BLEU-4 variants for scoring generated descriptions.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Lowercases and splits on whitespace, detaching punctuation into its own
/// tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU-4 with uniform weights. Matched counts are clipped by the
/// maximum count in any single reference. An order with no match scores
/// `1 / (t_n + 1)` where `t_n` is the number of candidate n-grams. The brevity
/// penalty uses the reference length closest to the candidate, shorter on ties.
pub fn bleu4(candidate: &str, references: &[&str]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::validation("references", "at least one reference is required"));
    }
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return Err(Error::validation("candidate", "must contain at least one token"));
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_counts = ngram_counts(&cand, n);
        let total: usize = cand_counts.values().sum();
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matched: usize = cand_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln() / 4.0;
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * log_sum.exp())
}

/// Mean over each generation of its BLEU-4 against all the others.
pub fn mbleu4(generations: &[&str]) -> Result<f64> {
    if generations.len() < 2 {
        return Err(Error::validation("generations", "at least two generations are required"));
    }
    let mut total = 0.0;
    for (i, g) in generations.iter().enumerate() {
        let others: Vec<&str> = generations
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, s)| *s)
            .collect();
        total += bleu4(g, &others)?;
    }
    Ok(total / generations.len() as f64)
}

/// Best BLEU-4 of any generation against the references.
pub fn bleu4_at_k(generations: &[&str], references: &[&str]) -> Result<f64> {
    if generations.is_empty() {
        return Err(Error::validation("generations", "at least one generation is required"));
    }
    let mut best = 0.0f64;
    for g in generations {
        best = best.max(bleu4(g, references)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub samples: usize,
}

/// mBLEU-4 over the generations, plus BLEU-4@K when references are given.
pub fn evaluate(generations: &[&str], references: &[&str]) -> Result<Vec<MetricReport>> {
    let mut out = vec![MetricReport {
        metric: "mBLEU-4".into(),
        value: mbleu4(generations)?,
        samples: generations.len(),
    }];
    if !references.is_empty() {
        out.push(MetricReport {
            metric: format!("BLEU-4@{}", generations.len()),
            value: bleu4_at_k(generations, references)?,
            samples: generations.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_detaches_punctuation() {
        assert_eq!(tokenize("The chair, left."), ["the", "chair", ",", "left", "."]);
        assert!(tokenize("  ").is_empty());
    }

    #[test]
    fn identical_is_one() {
        let s = "the lamp is on the left of the bed .";
        assert!((bleu4(s, &[s]).unwrap() - 1.0).abs() < 1e-12);
        assert!((mbleu4(&[s, s, s]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_value() {
        let b = bleu4("the cat sat on the mat", &["the cat is on the mat"]).unwrap();
        assert!((b - 2f64.powf(-1.25)).abs() < 1e-12, "{b}");
    }

    #[test]
    fn disjoint_is_small_but_positive() {
        // every order is smoothed: 1/6, 1/5, 1/4, 1/3
        let b = bleu4("a a a a a", &["b c d e f"]).unwrap();
        assert!(b > 0.0 && (b - 360f64.powf(-0.25)).abs() < 1e-12, "{b}");
    }

    #[test]
    fn brevity_penalty_applies() {
        // no 3- or 4-grams to miss, so only the penalty exp(1 - 6/2) remains
        let b = bleu4("the cat", &["the cat sat on the mat"]).unwrap();
        assert!((b - (-2f64).exp()).abs() < 1e-12, "{b}");
    }

    #[test]
    fn input_errors() {
        assert!(bleu4("x", &[]).is_err());
        assert!(mbleu4(&["x"]).is_err());
        assert!(bleu4_at_k(&[], &["x"]).is_err());
        assert!(bleu4(" ", &["x"]).is_err());
    }
}
