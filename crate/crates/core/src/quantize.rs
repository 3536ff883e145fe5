//! Online adaptive quantization of a scalar sample into a small codebook.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Code words with the number of samples quantized to each.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    words: Vec<f64>,
    counts: Vec<usize>,
}

impl Codebook {
    /// Validates `words.len() == counts.len() >= 1` and pairwise distinct words.
    pub fn new(words: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::param("codebook needs at least one word"));
        }
        if words.len() != counts.len() {
            return Err(Error::param("codebook words and counts differ in length"));
        }
        if words.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("codebook words must be finite"));
        }
        for i in 0..words.len() {
            if words[i + 1..].contains(&words[i]) {
                return Err(Error::param("codebook words must be distinct"));
            }
        }
        Ok(Codebook { words, counts })
    }

    pub fn words(&self) -> &[f64] {
        &self.words
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of quantized samples, `sum(counts)`.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.words.iter().copied().zip(self.counts.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    epsilon: f64,
}

impl QuantizerConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::param("quantization threshold must be nonnegative"));
        }
        Ok(QuantizerConfig { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig { epsilon: 0.05 }
    }
}

/// Sequential adaptive quantizer.
///
/// With `L = max - min`, the first sample seeds the codebook; every later
/// sample joins its nearest word when that word is within `epsilon * L`,
/// otherwise it founds a new word. Ties go to the earliest word. Returns the
/// codebook and, for each sample, the index of its word.
pub fn quantize(samples: &[f64], cfg: &QuantizerConfig) -> Result<(Codebook, Vec<usize>)> {
    let (&first, rest) = samples
        .split_first()
        .ok_or_else(|| Error::input("cannot quantize an empty sample"))?;
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("samples must be finite"));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let threshold = cfg.epsilon * (hi - lo);

    let mut words = vec![first];
    let mut counts = vec![1usize];
    let mut assignment = Vec::with_capacity(samples.len());
    assignment.push(0);
    for &x in rest {
        let (nearest, dist) = words
            .iter()
            .enumerate()
            .map(|(j, &c)| (j, (x - c).abs()))
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
        if dist <= threshold {
            counts[nearest] += 1;
            assignment.push(nearest);
        } else {
            words.push(x);
            counts.push(1);
            assignment.push(words.len() - 1);
        }
    }
    Ok((Codebook { words, counts }, assignment))
}

/// The fixed three-word codebook `(0, -1, 1)` with the given counts.
pub fn restricted_codebook(phi0: usize, phi_neg1: usize, phi1: usize) -> Result<Codebook> {
    if phi0 + phi_neg1 + phi1 == 0 {
        return Err(Error::param("restricted codebook counts are all zero"));
    }
    Ok(Codebook {
        words: vec![0.0, -1.0, 1.0],
        counts: vec![phi0, phi_neg1, phi1],
    })
}
