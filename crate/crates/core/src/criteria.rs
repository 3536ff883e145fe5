//! Training criteria evaluated on a batch of predictions.
//!
//! CE and MSE are risks (lower is better). C-Loss, QMEE and RMEE are
//! information potentials (higher is better) and keep their full
//! `1 / (N^2 sqrt(2 pi) sigma)` scaling so values are comparable across
//! bandwidths.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{parzen_pdf, KernelParams};
use crate::math;
use crate::quantize::{quantize, restricted_codebook, Codebook, QuantizerConfig};

/// Probabilities are clamped to `[CE_CLAMP, 1 - CE_CLAMP]` before taking logs.
pub const CE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CriterionKind {
    Ce,
    Mse,
    CLoss,
    Qmee,
    Rmee,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 5] = [
        CriterionKind::Ce,
        CriterionKind::Mse,
        CriterionKind::CLoss,
        CriterionKind::Qmee,
        CriterionKind::Rmee,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Ce => "ce",
            CriterionKind::Mse => "mse",
            CriterionKind::CLoss => "closs",
            CriterionKind::Qmee => "qmee",
            CriterionKind::Rmee => "rmee",
        }
    }

    /// Whether the criterion is a kernel objective with a bandwidth.
    pub fn uses_kernel(self) -> bool {
        matches!(
            self,
            CriterionKind::CLoss | CriterionKind::Qmee | CriterionKind::Rmee
        )
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ce" => Ok(CriterionKind::Ce),
            "mse" => Ok(CriterionKind::Mse),
            "closs" | "c-loss" | "c_loss" => Ok(CriterionKind::CLoss),
            "qmee" => Ok(CriterionKind::Qmee),
            "rmee" => Ok(CriterionKind::Rmee),
            other => Err(Error::param(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Weights `(phi_0, phi_-1, phi_1)` of the restricted codebook `(0, -1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeakCounts {
    pub zero: usize,
    pub neg: usize,
    pub pos: usize,
}

impl PeakCounts {
    pub fn new(zero: usize, neg: usize, pos: usize) -> Self {
        PeakCounts { zero, neg, pos }
    }

    /// All weight on the zero peak, `(N, 0, 0)`.
    pub fn closs(n: usize) -> Self {
        PeakCounts::new(n, 0, 0)
    }

    pub fn total(&self) -> usize {
        self.zero + self.neg + self.pos
    }

    pub fn outliers(&self) -> usize {
        self.neg + self.pos
    }

    pub fn codebook(&self) -> Result<Codebook> {
        restricted_codebook(self.zero, self.neg, self.pos)
    }

    /// As `f64` in codebook order `(0, -1, 1)`.
    pub(crate) fn weights(&self) -> [f64; 3] {
        [self.zero as f64, self.neg as f64, self.pos as f64]
    }
}

impl fmt::Display for PeakCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.zero, self.neg, self.pos)
    }
}

/// Which objective to train with, and its hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    /// Kernel bandwidth; ignored by CE and MSE.
    pub sigma: f64,
    /// RMEE peak weights. `None` means "estimate from a C-Loss fit".
    pub phi: Option<PeakCounts>,
    pub quantizer: QuantizerConfig,
}

impl CriterionSpec {
    pub fn new(kind: CriterionKind, sigma: f64) -> Self {
        CriterionSpec {
            kind,
            sigma,
            phi: None,
            quantizer: QuantizerConfig::default(),
        }
    }

    pub fn ce() -> Self {
        Self::new(CriterionKind::Ce, 1.0)
    }

    pub fn mse() -> Self {
        Self::new(CriterionKind::Mse, 1.0)
    }

    pub fn closs(sigma: f64) -> Self {
        Self::new(CriterionKind::CLoss, sigma)
    }

    pub fn qmee(sigma: f64, quantizer: QuantizerConfig) -> Self {
        CriterionSpec {
            quantizer,
            ..Self::new(CriterionKind::Qmee, sigma)
        }
    }

    pub fn rmee(sigma: f64, phi: Option<PeakCounts>) -> Self {
        CriterionSpec {
            phi,
            ..Self::new(CriterionKind::Rmee, sigma)
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        CriterionSpec {
            sigma,
            ..self.clone()
        }
    }

    pub fn kernel(&self) -> Result<KernelParams> {
        KernelParams::new(self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_kernel() {
            self.kernel()?;
        }
        Ok(())
    }

    /// Whether larger values of [`CriterionSpec::evaluate`] are better.
    pub fn maximize(&self) -> bool {
        self.kind.uses_kernel()
    }

    /// The criterion value on `b`. RMEE without explicit weights is evaluated
    /// with the C-Loss weights `(N, 0, 0)`.
    pub fn evaluate(&self, b: &PredictionBatch) -> Result<f64> {
        match self.kind {
            CriterionKind::Ce => Ok(ce_risk(b)),
            CriterionKind::Mse => Ok(mse_risk(b)),
            CriterionKind::CLoss => Ok(closs_objective(b, &self.kernel()?)),
            CriterionKind::Qmee => qmee_objective(b, &self.kernel()?, &self.quantizer),
            CriterionKind::Rmee => {
                let phi = self.phi.unwrap_or_else(|| PeakCounts::closs(b.len()));
                rmee_objective(b, &self.kernel()?, &phi)
            }
        }
    }
}

/// Targets, predicted probabilities and errors `e_i = t_i - y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    targets: Vec<u8>,
    probs: Vec<f64>,
    errors: Vec<f64>,
}

impl PredictionBatch {
    pub fn new(targets: &[u8], probs: &[f64]) -> Result<Self> {
        check_dim(targets.len(), probs.len())?;
        if targets.iter().any(|&t| t > 1) {
            return Err(Error::input("targets must be 0 or 1"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::input("probabilities must lie in [0, 1]"));
        }
        let errors = targets
            .iter()
            .zip(probs)
            .map(|(&t, &y)| f64::from(t) - y)
            .collect();
        Ok(PredictionBatch {
            targets: targets.to_vec(),
            probs: probs.to_vec(),
            errors,
        })
    }

    /// A batch realizing the given errors: `t = 1, y = 1 - e` for positive
    /// errors and `t = 0, y = -e` otherwise.
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.iter().any(|e| !(-1.0..=1.0).contains(e)) {
            return Err(Error::input("errors must lie in [-1, 1]"));
        }
        let targets: Vec<u8> = errors.iter().map(|&e| u8::from(e > 0.0)).collect();
        let probs: Vec<f64> = targets
            .iter()
            .zip(errors)
            .map(|(&t, &e)| f64::from(t) - e)
            .collect();
        Ok(PredictionBatch {
            targets,
            probs,
            errors: errors.to_vec(),
        })
    }

    pub fn targets(&self) -> &[u8] {
        &self.targets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn non_empty(b: &PredictionBatch) -> Result<()> {
    if b.is_empty() {
        Err(Error::input("prediction batch is empty"))
    } else {
        Ok(())
    }
}

/// Unnormalized cross-entropy, `-sum[(1 - t) log(1 - y) + t log y]`.
pub fn ce_risk(b: &PredictionBatch) -> f64 {
    b.targets
        .iter()
        .zip(&b.probs)
        .map(|(&t, &y)| {
            let y = y.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
            if t == 1 {
                -math::ln(y)
            } else {
                -math::ln(1.0 - y)
            }
        })
        .sum()
}

/// Mean squared error of the probabilities.
pub fn mse_risk(b: &PredictionBatch) -> f64 {
    if b.is_empty() {
        return 0.0;
    }
    b.errors.iter().map(|e| e * e).sum::<f64>() / b.len() as f64
}

/// Correntropy at the origin, `(1/N) sum_i k(e_i)`.
pub fn closs_objective(b: &PredictionBatch, k: &KernelParams) -> f64 {
    if b.is_empty() {
        return 0.0;
    }
    b.errors.iter().map(|&e| k.eval(e)).sum::<f64>() / b.len() as f64
}

/// `(1/N^2) sum_i sum_j phi_j k(e_i - c_j)` for an arbitrary codebook.
pub fn codebook_objective(errors: &[f64], codebook: &Codebook, k: &KernelParams) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::input("error sample is empty"));
    }
    let n = errors.len() as f64;
    let mut total = 0.0;
    for &e in errors {
        for (c, phi) in codebook.iter() {
            if phi > 0 {
                total += phi as f64 * k.eval(e - c);
            }
        }
    }
    Ok(total / (n * n))
}

/// Restricted information potential,
/// `(1/N^2) sum_i [phi_0 k(e_i) + phi_-1 k(e_i + 1) + phi_1 k(e_i - 1)]`.
///
/// The weights must sum to the batch size.
pub fn rmee_objective(b: &PredictionBatch, k: &KernelParams, phi: &PeakCounts) -> Result<f64> {
    non_empty(b)?;
    if phi.total() != b.len() {
        return Err(Error::param(format!(
            "peak counts {phi} sum to {}, batch has {} samples",
            phi.total(),
            b.len()
        )));
    }
    let [w0, wn, wp] = phi.weights();
    let n = b.len() as f64;
    let total: f64 = b
        .errors
        .iter()
        .map(|&e| w0 * k.eval(e) + wn * k.eval(e + 1.0) + wp * k.eval(e - 1.0))
        .sum();
    Ok(total / (n * n))
}

/// Quantized information potential of the batch errors, using a codebook
/// freshly built from those errors.
pub fn qmee_objective(b: &PredictionBatch, k: &KernelParams, cfg: &QuantizerConfig) -> Result<f64> {
    let (codebook, _) = quantize(&b.errors, cfg)?;
    codebook_objective(&b.errors, &codebook, k)
}

/// Inner product between the Parzen error density and the three-peak
/// distribution with masses `zeta = (zeta_0, zeta_-1, zeta_1)` at `0, -1, 1`.
pub fn inner_product_similarity(
    b: &PredictionBatch,
    zeta: [f64; 3],
    k: &KernelParams,
) -> Result<f64> {
    non_empty(b)?;
    if zeta.iter().any(|z| !(*z >= 0.0)) || (zeta.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::param("peak masses must be nonnegative and sum to 1"));
    }
    let mut total = 0.0;
    for (z, at) in zeta.iter().zip([0.0, -1.0, 1.0]) {
        if *z > 0.0 {
            total += z * parzen_pdf(at, &b.errors, k)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(s: f64) -> KernelParams {
        KernelParams::new(s).unwrap()
    }

    #[test]
    fn ce_examples() {
        let b = PredictionBatch::new(&[1], &[0.5]).unwrap();
        assert!((ce_risk(&b) - core::f64::consts::LN_2).abs() < 1e-15);
        let b = PredictionBatch::new(&[1], &[1.0 - 1e-15]).unwrap();
        assert!(ce_risk(&b) < 1e-11);
        let b = PredictionBatch::new(&[1, 0], &[0.9, 0.2]).unwrap();
        assert!((ce_risk(&b) - 0.328_504_066_972_036_06).abs() < 1e-15);
        let b = PredictionBatch::new(&[1, 0], &[0.0, 1.0]).unwrap();
        assert!(ce_risk(&b).is_finite());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(
            mse_risk(&PredictionBatch::from_errors(&[0.0, 0.0]).unwrap()),
            0.0
        );
        assert_eq!(
            mse_risk(&PredictionBatch::from_errors(&[1.0, -1.0]).unwrap()),
            1.0
        );
        let b = PredictionBatch::from_errors(&[0.5, 0.1]).unwrap();
        assert!((mse_risk(&b) - 0.13).abs() < 1e-15);
    }

    #[test]
    fn rmee_examples() {
        let b = PredictionBatch::from_errors(&[0.0; 4]).unwrap();
        let v = rmee_objective(&b, &k(1.0), &PeakCounts::closs(4)).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
        let v = rmee_objective(&b, &k(1.0), &PeakCounts::new(0, 4, 0)).unwrap();
        assert!((v - 0.241_970_724_519_143_35).abs() < 1e-15);
        assert!(matches!(
            rmee_objective(&b, &k(1.0), &PeakCounts::new(1, 1, 1)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn qmee_examples() {
        let b = PredictionBatch::from_errors(&[0.25; 5]).unwrap();
        let v = qmee_objective(&b, &k(0.5), &QuantizerConfig::default()).unwrap();
        assert!((v - k(0.5).peak()).abs() < 1e-15);
        // A single word at 0 with count 2.
        let b = PredictionBatch::from_errors(&[0.0, 1.0]).unwrap();
        let v = qmee_objective(&b, &k(1.0), &QuantizerConfig::new(2.0).unwrap()).unwrap();
        assert!((v - 0.320_456_502_460_288_0).abs() < 1e-15);
    }

    #[test]
    fn similarity_examples() {
        let b = PredictionBatch::from_errors(&[0.0; 3]).unwrap();
        let v = inner_product_similarity(&b, [1.0, 0.0, 0.0], &k(0.4)).unwrap();
        assert!((v - k(0.4).peak()).abs() < 1e-15);
        let b = PredictionBatch::from_errors(&[-1.0; 3]).unwrap();
        let v = inner_product_similarity(&b, [0.0, 1.0, 0.0], &k(0.4)).unwrap();
        assert!((v - k(0.4).peak()).abs() < 1e-15);
        assert!(inner_product_similarity(&b, [0.5, 0.0, 0.0], &k(0.4)).is_err());
        assert!(inner_product_similarity(&b, [1.5, -0.5, 0.0], &k(0.4)).is_err());
    }

    #[test]
    fn batch_validation() {
        assert!(PredictionBatch::new(&[2], &[0.5]).is_err());
        assert!(PredictionBatch::new(&[1], &[1.5]).is_err());
        assert!(PredictionBatch::new(&[1, 0], &[0.5]).is_err());
        let b = PredictionBatch::new(&[1, 0], &[0.75, 0.25]).unwrap();
        assert_eq!(b.errors(), &[0.25, -0.25]);
    }

    #[test]
    fn criterion_names_round_trip() {
        for kind in CriterionKind::ALL {
            assert_eq!(kind.name().parse::<CriterionKind>().unwrap(), kind);
        }
        assert_eq!(
            "C-Loss".parse::<CriterionKind>().unwrap(),
            CriterionKind::CLoss
        );
        assert!("hinge".parse::<CriterionKind>().is_err());
    }

    #[test]
    fn spec_dispatch_matches_free_functions() {
        let b = PredictionBatch::new(&[1, 0, 1, 0], &[0.8, 0.3, 0.4, 0.05]).unwrap();
        let sigma = 0.6;
        assert_eq!(CriterionSpec::ce().evaluate(&b).unwrap(), ce_risk(&b));
        assert_eq!(CriterionSpec::mse().evaluate(&b).unwrap(), mse_risk(&b));
        let closs = CriterionSpec::closs(sigma).evaluate(&b).unwrap();
        let rmee = CriterionSpec::rmee(sigma, None).evaluate(&b).unwrap();
        assert!((closs - rmee).abs() < 1e-15);
        let phi = PeakCounts::new(2, 1, 1);
        let via_codebook =
            codebook_objective(b.errors(), &phi.codebook().unwrap(), &k(sigma)).unwrap();
        let direct = CriterionSpec::rmee(sigma, Some(phi)).evaluate(&b).unwrap();
        assert!((via_codebook - direct).abs() < 1e-15);
        assert!(CriterionSpec::closs(0.0).validate().is_err());
        assert!(CriterionSpec::ce().with_sigma(0.0).validate().is_ok());
    }
}
