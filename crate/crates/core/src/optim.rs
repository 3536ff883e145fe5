//! Half-quadratic (HQ) training for the kernel criteria, plus plain Adam
//! training for CE and MSE.
//!
//! Each kernel term `exp(-(e - c)^2 / 2 sigma^2)` is the supremum over a
//! negative auxiliary `a` of `a (e - c)^2 / 2 sigma^2 - g(a)` with
//! `g(a) = -a log(-a) + a`, attained at `a = -exp(-(e - c)^2 / 2 sigma^2)`.
//! HQ alternates the closed-form auxiliary update with an Adam ascent on the
//! resulting weighted least-squares surrogate
//!
//! ```text
//! J_R2(w) = sum_i sum_j phi_j a_ij (t_i - y_i - c_j)^2
//! ```
//!
//! Every inner phase must end no lower on `J_R2` than it started; this is
//! enough for the criterion value to be nondecreasing across outer
//! iterations. A phase that ends lower is redone with half the step size.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::criteria::{
    ce_risk, codebook_objective, mse_risk, rmee_objective, CriterionKind, CriterionSpec,
    PeakCounts, PredictionBatch,
};
use crate::data::{stratified_folds, Dataset};
use crate::error::{check_dim, Error, Result};
use crate::kernel::KernelParams;
use crate::linalg::{axpy, dot, Matrix};
use crate::math;
use crate::metrics::accuracy;
use crate::model::{predict_labels, sigmoid, Model};
use crate::quantize::{quantize, Codebook};
use crate::rng::Rng;

/// Default bandwidth grid for cross-validation.
pub const DEFAULT_SIGMA_GRID: [f64; 7] = [0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Number of folds used by [`cross_validate_sigma`].
pub const CV_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step in the ascent direction of `grad`.
pub fn adam_step(
    weights: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    check_dim(weights.len(), grad.len())?;
    check_dim(weights.len(), state.m.len())?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient"));
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - math::powf(cfg.beta1, t);
    let c2 = 1.0 - math::powf(cfg.beta2, t);
    for (((w, &g), m), v) in weights
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w += cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_outer_iters: usize,
    /// Adam steps per inner phase (per outer iteration for CE/MSE).
    pub inner_steps: usize,
    /// Stop once the criterion changes by less than this between outer
    /// iterations.
    pub varsigma: f64,
    pub adam: AdamConfig,
    /// Step-size halvings allowed before an inner phase falls back to the
    /// best iterate it visited.
    pub max_halvings: u32,
    /// Rounds of peak-count re-estimation for RMEE (1 = two-stage fit).
    pub refine_rounds: usize,
    /// Start the RMEE refit from the C-Loss weights instead of from zero.
    pub warm_start_refit: bool,
    /// Seed for fold assignment in cross-validation.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_outer_iters: 200,
            inner_steps: 50,
            varsigma: 1e-6,
            adam: AdamConfig::default(),
            max_halvings: 5,
            refine_rounds: 1,
            warm_start_refit: true,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.varsigma > 0.0) {
            return Err(Error::param("convergence threshold must be positive"));
        }
        if self.max_outer_iters == 0 || self.inner_steps == 0 {
            return Err(Error::param("iteration counts must be at least 1"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::param("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::param("Adam decay rates must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Criterion values recorded during a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Criterion at the starting weights.
    pub initial_objective: f64,
    /// Criterion after each outer iteration.
    pub objective_per_iter: Vec<f64>,
    pub converged: bool,
    pub iters_used: usize,
}

impl FitTrace {
    fn new(initial_objective: f64) -> Self {
        FitTrace {
            initial_objective,
            objective_per_iter: Vec::new(),
            converged: false,
            iters_used: 0,
        }
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_per_iter
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }

    /// Largest decrease between consecutive values, initial value included.
    pub fn max_decrease(&self) -> f64 {
        let mut prev = self.initial_objective;
        let mut worst = 0.0f64;
        for &v in &self.objective_per_iter {
            worst = worst.max(prev - v);
            prev = v;
        }
        worst
    }
}

/// Per-sample auxiliaries `(u_i, v_i, s_i)` for the peaks `0, -1, 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HqAux {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
}

impl HqAux {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// `-exp(-d^2 / 2 sigma^2)`, kept strictly negative under underflow.
#[inline]
fn aux_value(d: f64, sigma: f64) -> f64 {
    -math::exp(-d * d / (2.0 * sigma * sigma)).max(f64::MIN_POSITIVE)
}

/// Closed-form maximizers of the HQ bound for the current errors.
pub fn hq_aux_update(errors: &[f64], k: &KernelParams) -> HqAux {
    let sigma = k.sigma();
    HqAux {
        u: errors.iter().map(|&e| aux_value(e, sigma)).collect(),
        v: errors.iter().map(|&e| aux_value(e + 1.0, sigma)).collect(),
        s: errors.iter().map(|&e| aux_value(e - 1.0, sigma)).collect(),
    }
}

/// Convex conjugate generator `g(v) = -v log(-v) + v` for `v < 0`.
pub fn conjugate_g(v: f64) -> f64 {
    -v * math::ln(-v) + v
}

/// The HQ bound `sum_i sum_peaks phi (a (e - c)^2 / 2 sigma^2 - g(a))` at the
/// given auxiliaries. With the closed-form auxiliaries it equals
/// `sum_i sum_peaks phi exp(-(e - c)^2 / 2 sigma^2)`.
pub fn hq_bound(errors: &[f64], aux: &HqAux, phi: &PeakCounts, k: &KernelParams) -> Result<f64> {
    check_dim(errors.len(), aux.len())?;
    let two_s2 = 2.0 * k.sigma() * k.sigma();
    let [w0, wn, wp] = phi.weights();
    let mut total = 0.0;
    for (i, &e) in errors.iter().enumerate() {
        let term = |a: f64, d: f64| a * d * d / two_s2 - conjugate_g(a);
        total +=
            w0 * term(aux.u[i], e) + wn * term(aux.v[i], e + 1.0) + wp * term(aux.s[i], e - 1.0);
    }
    Ok(total)
}

/// Weighted least-squares surrogate
/// `sum_i [phi_0 u_i e_i^2 + phi_-1 v_i (e_i + 1)^2 + phi_1 s_i (e_i - 1)^2]`.
pub fn jr2_objective(b: &PredictionBatch, aux: &HqAux, phi: &PeakCounts) -> Result<f64> {
    check_dim(b.len(), aux.len())?;
    let surrogate = Surrogate::Restricted {
        aux,
        weights: phi.weights(),
    };
    Ok(b.errors()
        .iter()
        .enumerate()
        .map(|(i, &e)| surrogate.value_and_slope(i, e).0)
        .sum())
}

/// Gradient of [`jr2_objective`] with respect to the model's trainable
/// weights, at the model's current weights, for inputs `x` with targets
/// `targets`.
pub fn jr2_gradient(
    model: &Model,
    x: &Matrix,
    targets: &[u8],
    aux: &HqAux,
    phi: &PeakCounts,
) -> Result<Vec<f64>> {
    check_dim(x.rows(), targets.len())?;
    check_dim(x.rows(), aux.len())?;
    let design = model.design(x)?;
    let problem = Problem::new(&design, targets);
    let surrogate = Surrogate::Restricted {
        aux,
        weights: phi.weights(),
    };
    Ok(problem.value_and_gradient(model.params(), &surrogate).1)
}

/// Auxiliaries for an arbitrary codebook: entry `(i, j)` is
/// `-exp(-(e_i - c_j)^2 / 2 sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookAux {
    words: Vec<f64>,
    weights: Vec<f64>,
    aux: Matrix,
}

impl CodebookAux {
    pub fn new(errors: &[f64], codebook: &Codebook, k: &KernelParams) -> Self {
        let m = codebook.len();
        let mut aux = Matrix::zeros(errors.len(), m);
        for (i, &e) in errors.iter().enumerate() {
            for (j, &c) in codebook.words().iter().enumerate() {
                aux.set(i, j, aux_value(e - c, k.sigma()));
            }
        }
        CodebookAux {
            words: codebook.words().to_vec(),
            weights: codebook.counts().iter().map(|&c| c as f64).collect(),
            aux,
        }
    }

    pub fn aux(&self) -> &Matrix {
        &self.aux
    }
}

/// Per-sample objective, returned with its derivative in the error.
enum Surrogate<'a> {
    Restricted { aux: &'a HqAux, weights: [f64; 3] },
    Codebook(&'a CodebookAux),
}

impl Surrogate<'_> {
    #[inline]
    fn value_and_slope(&self, i: usize, e: f64) -> (f64, f64) {
        match self {
            Surrogate::Restricted { aux, weights } => {
                let [w0, wn, wp] = *weights;
                let (a0, an, ap) = (w0 * aux.u[i], wn * aux.v[i], wp * aux.s[i]);
                let (d0, dn, dp) = (e, e + 1.0, e - 1.0);
                let value = a0 * d0 * d0 + an * dn * dn + ap * dp * dp;
                let slope = 2.0 * (a0 * d0 + an * dn + ap * dp);
                (value, slope)
            }
            Surrogate::Codebook(cb) => {
                let row = cb.aux.row(i);
                let mut value = 0.0;
                let mut slope = 0.0;
                for ((&c, &w), &a) in cb.words.iter().zip(&cb.weights).zip(row) {
                    let d = e - c;
                    value += w * a * d * d;
                    slope += 2.0 * w * a * d;
                }
                (value, slope)
            }
        }
    }
}

/// What is maximized during an Adam phase.
enum Ascent<'a> {
    Hq(Surrogate<'a>),
    /// Negative unnormalized cross-entropy.
    NegCe,
    /// Negative mean squared error.
    NegMse,
}

/// A fixed design matrix with binary targets.
struct Problem<'a> {
    design: &'a Matrix,
    targets: &'a [u8],
}

impl<'a> Problem<'a> {
    fn new(design: &'a Matrix, targets: &'a [u8]) -> Self {
        Problem { design, targets }
    }

    fn probs(&self, theta: &[f64]) -> Vec<f64> {
        self.design
            .iter_rows()
            .map(|r| sigmoid(dot(r, theta)))
            .collect()
    }

    fn batch(&self, theta: &[f64]) -> Result<PredictionBatch> {
        PredictionBatch::new(self.targets, &self.probs(theta))
    }

    fn value_and_gradient(&self, theta: &[f64], surrogate: &Surrogate<'_>) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; theta.len()];
        let mut total = 0.0;
        for (i, row) in self.design.iter_rows().enumerate() {
            let y = sigmoid(dot(row, theta));
            let e = f64::from(self.targets[i]) - y;
            let (value, slope) = surrogate.value_and_slope(i, e);
            total += value;
            // de/dz = -y (1 - y)
            let dz = -slope * y * (1.0 - y);
            if dz != 0.0 {
                axpy(dz, row, &mut grad);
            }
        }
        (total, grad)
    }

    fn ascent_value_and_gradient(&self, theta: &[f64], ascent: &Ascent<'_>) -> (f64, Vec<f64>) {
        match ascent {
            Ascent::Hq(s) => self.value_and_gradient(theta, s),
            Ascent::NegCe | Ascent::NegMse => {
                let n = self.design.rows().max(1) as f64;
                let mut grad = vec![0.0; theta.len()];
                let mut total = 0.0;
                for (i, row) in self.design.iter_rows().enumerate() {
                    let z = dot(row, theta);
                    let y = sigmoid(z);
                    let t = f64::from(self.targets[i]);
                    let dz = if matches!(ascent, Ascent::NegCe) {
                        // t log y + (1 - t) log(1 - y) = t z - softplus(z)
                        total += t * z - softplus(z);
                        t - y
                    } else {
                        let e = t - y;
                        total -= e * e / n;
                        2.0 * e * y * (1.0 - y) / n
                    };
                    axpy(dz, row, &mut grad);
                }
                (total, grad)
            }
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(math::exp(-z.abs()))
}

fn check_finite(theta: &[f64], what: &str) -> Result<()> {
    if theta.iter().all(|w| w.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite weights during {what}")))
    }
}

/// `inner_steps` Adam steps on `ascent` with the backtracking guard.
fn guarded_phase(
    problem: &Problem<'_>,
    ascent: &Ascent<'_>,
    theta: &mut Vec<f64>,
    state: &mut AdamState,
    cfg: &FitConfig,
) -> Result<()> {
    let (start_value, start_grad) = problem.ascent_value_and_gradient(theta, ascent);
    if !start_value.is_finite() {
        return Err(Error::numeric("non-finite surrogate objective"));
    }
    let mut best = (start_value, theta.clone(), state.clone());
    let mut adam = cfg.adam;
    for _ in 0..=cfg.max_halvings {
        let mut th = theta.clone();
        let mut st = state.clone();
        let mut grad = start_grad.clone();
        let mut value = start_value;
        for _ in 0..cfg.inner_steps {
            adam_step(&mut th, &grad, &mut st, &adam)?;
            (value, grad) = problem.ascent_value_and_gradient(&th, ascent);
            if !value.is_finite() {
                return Err(Error::numeric("non-finite surrogate objective"));
            }
            if value > best.0 {
                best = (value, th.clone(), st.clone());
            }
        }
        if value >= start_value {
            *theta = th;
            *state = st;
            return Ok(());
        }
        adam.learning_rate *= 0.5;
    }
    *theta = best.1;
    *state = best.2;
    Ok(())
}

fn kernel_fit_kind(spec: &CriterionSpec) -> Result<()> {
    match spec.kind {
        CriterionKind::CLoss | CriterionKind::Rmee | CriterionKind::Qmee => Ok(()),
        other => Err(Error::param(format!(
            "half-quadratic fit does not apply to {other}"
        ))),
    }
}

fn check_training_set(ds: &Dataset, model: &Model) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    check_dim(model.dim(), ds.dim())
}

/// Half-quadratic maximization of C-Loss, RMEE or QMEE.
///
/// RMEE uses `spec.phi` (C-Loss weights `(N, 0, 0)` when unset). QMEE
/// re-quantizes the current errors at every outer iteration and adopts the
/// new codebook when it does not lower the objective at the current weights.
/// The returned trace holds the criterion value with the active weights or
/// codebook and is nondecreasing.
pub fn hq_fit(
    model: &mut Model,
    ds: &Dataset,
    spec: &CriterionSpec,
    cfg: &FitConfig,
) -> Result<FitTrace> {
    kernel_fit_kind(spec)?;
    cfg.validate()?;
    check_training_set(ds, model)?;
    let k = spec.kernel()?;
    let n = ds.len();
    let phi = match spec.kind {
        CriterionKind::CLoss => PeakCounts::closs(n),
        _ => spec.phi.unwrap_or_else(|| PeakCounts::closs(n)),
    };
    if spec.kind != CriterionKind::Qmee && phi.total() != n {
        return Err(Error::param(format!(
            "peak counts {phi} must sum to the training size {n}"
        )));
    }

    let design = model.design(&ds.features)?;
    let problem = Problem::new(&design, &ds.labels);
    let mut theta = model.params().to_vec();
    let mut state = AdamState::new(theta.len());

    let batch = problem.batch(&theta)?;
    let mut codebook = match spec.kind {
        CriterionKind::Qmee => Some(quantize(batch.errors(), &spec.quantizer)?.0),
        _ => None,
    };
    let objective = |b: &PredictionBatch, cb: &Option<Codebook>| -> Result<f64> {
        match cb {
            Some(cb) => codebook_objective(b.errors(), cb, &k),
            None => rmee_objective(b, &k, &phi),
        }
    };
    let mut trace = FitTrace::new(objective(&batch, &codebook)?);
    let mut errors = batch.errors().to_vec();
    let mut prev = trace.initial_objective;

    for iter in 0..cfg.max_outer_iters {
        if let Some(active) = codebook.as_mut() {
            if iter > 0 {
                let (fresh, _) = quantize(&errors, &spec.quantizer)?;
                if codebook_objective(&errors, &fresh, &k)? >= prev {
                    *active = fresh;
                }
            }
        }
        let rmee_aux;
        let cb_aux;
        let surrogate = match &codebook {
            Some(cb) => {
                cb_aux = CodebookAux::new(&errors, cb, &k);
                Surrogate::Codebook(&cb_aux)
            }
            None => {
                rmee_aux = hq_aux_update(&errors, &k);
                Surrogate::Restricted {
                    aux: &rmee_aux,
                    weights: phi.weights(),
                }
            }
        };
        guarded_phase(
            &problem,
            &Ascent::Hq(surrogate),
            &mut theta,
            &mut state,
            cfg,
        )?;
        check_finite(&theta, "HQ fit")?;

        let batch = problem.batch(&theta)?;
        let value = objective(&batch, &codebook)?;
        if !value.is_finite() {
            return Err(Error::numeric("non-finite criterion value"));
        }
        errors.clear();
        errors.extend_from_slice(batch.errors());
        trace.objective_per_iter.push(value);
        trace.iters_used = iter + 1;
        let delta = (value - prev).abs();
        prev = value;
        if delta < cfg.varsigma {
            trace.converged = true;
            break;
        }
    }
    model.params_mut().copy_from_slice(&theta);
    Ok(trace)
}

/// Adam descent on CE or MSE; the trace records the risk.
pub fn gradient_fit(
    model: &mut Model,
    ds: &Dataset,
    spec: &CriterionSpec,
    cfg: &FitConfig,
) -> Result<FitTrace> {
    let ascent = match spec.kind {
        CriterionKind::Ce => Ascent::NegCe,
        CriterionKind::Mse => Ascent::NegMse,
        other => {
            return Err(Error::param(format!(
                "gradient fit does not apply to {other}"
            )))
        }
    };
    cfg.validate()?;
    check_training_set(ds, model)?;
    let design = model.design(&ds.features)?;
    let problem = Problem::new(&design, &ds.labels);
    let risk = |theta: &[f64]| -> Result<f64> {
        let b = problem.batch(theta)?;
        Ok(match ascent {
            Ascent::NegCe => ce_risk(&b),
            _ => mse_risk(&b),
        })
    };
    let mut theta = model.params().to_vec();
    let mut state = AdamState::new(theta.len());
    let mut trace = FitTrace::new(risk(&theta)?);
    let mut prev = trace.initial_objective;
    for iter in 0..cfg.max_outer_iters {
        for _ in 0..cfg.inner_steps {
            let (_, grad) = problem.ascent_value_and_gradient(&theta, &ascent);
            adam_step(&mut theta, &grad, &mut state, &cfg.adam)?;
        }
        check_finite(&theta, "gradient fit")?;
        let value = risk(&theta)?;
        trace.objective_per_iter.push(value);
        trace.iters_used = iter + 1;
        let delta = (value - prev).abs();
        prev = value;
        if delta < cfg.varsigma * prev.abs().max(1.0) {
            trace.converged = true;
            break;
        }
    }
    model.params_mut().copy_from_slice(&theta);
    Ok(trace)
}

/// Counts errors per peak region: `[-0.5, 0.5]` for the zero peak, below
/// `-0.5` for `-1`, above `0.5` for `1`.
pub fn count_peaks(errors: &[f64]) -> PeakCounts {
    let mut phi = PeakCounts::new(0, 0, 0);
    for &e in errors {
        if e < -0.5 {
            phi.neg += 1;
        } else if e > 0.5 {
            phi.pos += 1;
        } else {
            phi.zero += 1;
        }
    }
    phi
}

/// Training errors `t - y` of `model` on `ds`.
pub fn training_errors(model: &Model, ds: &Dataset) -> Result<Vec<f64>> {
    let probs = model.predict_all(&ds.features)?;
    Ok(ds
        .labels
        .iter()
        .zip(probs)
        .map(|(&t, y)| f64::from(t) - y)
        .collect())
}

/// Fits C-Loss from `model`'s current weights and counts the resulting
/// errors per peak region. `model` is left holding the C-Loss fit.
pub fn estimate_phi(
    model: &mut Model,
    ds: &Dataset,
    sigma: f64,
    cfg: &FitConfig,
) -> Result<(PeakCounts, FitTrace)> {
    let trace = hq_fit(model, ds, &CriterionSpec::closs(sigma), cfg)?;
    Ok((count_peaks(&training_errors(model, ds)?), trace))
}

/// Result of the two-stage RMEE procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct RmeeFit {
    /// Peak counts used by the final fit.
    pub phi: PeakCounts,
    /// Trace of the C-Loss stage.
    pub initial_trace: FitTrace,
    /// Trace of the final RMEE fit.
    pub trace: FitTrace,
}

/// C-Loss fit, peak counting, then an RMEE refit with the counted weights
/// (`cfg.refine_rounds` times).
pub fn fit_rmee_full(
    model: &mut Model,
    ds: &Dataset,
    sigma: f64,
    cfg: &FitConfig,
) -> Result<RmeeFit> {
    let start = model.params().to_vec();
    let (mut phi, initial_trace) = estimate_phi(model, ds, sigma, cfg)?;
    let mut trace = initial_trace.clone();
    for round in 0..cfg.refine_rounds.max(1) {
        if !cfg.warm_start_refit {
            model.params_mut().copy_from_slice(&start);
        }
        trace = hq_fit(model, ds, &CriterionSpec::rmee(sigma, Some(phi)), cfg)?;
        if round + 1 < cfg.refine_rounds {
            phi = count_peaks(&training_errors(model, ds)?);
        }
    }
    Ok(RmeeFit {
        phi,
        initial_trace,
        trace,
    })
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub trace: FitTrace,
    /// Peak counts used, for RMEE.
    pub phi: Option<PeakCounts>,
}

/// Trains `model` on `ds` under any criterion. RMEE without explicit peak
/// counts runs the two-stage procedure.
pub fn fit(
    model: &mut Model,
    ds: &Dataset,
    spec: &CriterionSpec,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    spec.validate()?;
    match spec.kind {
        CriterionKind::Ce | CriterionKind::Mse => Ok(FitOutcome {
            trace: gradient_fit(model, ds, spec, cfg)?,
            phi: None,
        }),
        CriterionKind::Rmee if spec.phi.is_none() => {
            let out = fit_rmee_full(model, ds, spec.sigma, cfg)?;
            Ok(FitOutcome {
                trace: out.trace,
                phi: Some(out.phi),
            })
        }
        CriterionKind::Rmee => Ok(FitOutcome {
            trace: hq_fit(model, ds, spec, cfg)?,
            phi: spec.phi,
        }),
        CriterionKind::CLoss | CriterionKind::Qmee => Ok(FitOutcome {
            trace: hq_fit(model, ds, spec, cfg)?,
            phi: None,
        }),
    }
}

/// Mean validation accuracy for each fold of a fixed assignment.
fn cv_accuracy(
    template: &Model,
    ds: &Dataset,
    folds: &[usize],
    spec: &CriterionSpec,
    cfg: &FitConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..CV_FOLDS {
        let (val_idx, train_idx): (Vec<usize>, Vec<usize>) =
            (0..ds.len()).partition(|&i| folds[i] == f);
        let train = ds.subset(&train_idx);
        let val = ds.subset(&val_idx);
        let mut model = template.clone();
        model.reset();
        fit(&mut model, &train, spec, cfg)?;
        let pred = predict_labels(&model.predict_all(&val.features)?);
        total += accuracy(&pred, &val.labels)?;
    }
    Ok(total / CV_FOLDS as f64)
}

/// Picks the bandwidth with the best mean stratified five-fold validation
/// accuracy for `spec`'s criterion. Ties go to the smaller bandwidth. Fold
/// assignment is seeded by `cfg.seed` and shared by all candidates.
pub fn cross_validate_sigma(
    template: &Model,
    ds: &Dataset,
    spec: &CriterionSpec,
    candidates: &[f64],
    cfg: &FitConfig,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::param("no bandwidth candidates"));
    }
    if let Some(bad) = candidates.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::param(format!("invalid bandwidth candidate {bad}")));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let (n0, n1) = ds.class_counts();
    if n0 < CV_FOLDS || n1 < CV_FOLDS {
        return Err(Error::input(format!(
            "cross-validation needs at least {CV_FOLDS} samples per class, got {n0}:{n1}"
        )));
    }
    let folds = stratified_folds(&ds.labels, CV_FOLDS, &mut Rng::new(cfg.seed))?;
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, sorted[0]);
    for &sigma in &sorted {
        let acc = cv_accuracy(template, ds, &folds, &spec.with_sigma(sigma), cfg)?;
        if acc > best.0 {
            best = (acc, sigma);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LogisticModel;

    fn k(s: f64) -> KernelParams {
        KernelParams::new(s).unwrap()
    }

    #[test]
    fn aux_examples() {
        let aux = hq_aux_update(&[0.0, -1.0, 1.0], &k(1.0));
        assert_eq!(aux.u[0], -1.0);
        assert_eq!(aux.v[1], -1.0);
        assert!((aux.u[2] + 0.606_530_659_712_633_4).abs() < 1e-15);
        let far = hq_aux_update(&[-1.0], &k(0.01));
        assert!(far.s[0] < 0.0);
    }

    #[test]
    fn jr2_examples() {
        let b = PredictionBatch::from_errors(&[0.0; 3]).unwrap();
        let aux = hq_aux_update(b.errors(), &k(1.0));
        assert_eq!(jr2_objective(&b, &aux, &PeakCounts::closs(3)).unwrap(), 0.0);

        let b = PredictionBatch::new(&[1], &[0.5]).unwrap();
        let aux = hq_aux_update(b.errors(), &k(1.0));
        let v = jr2_objective(&b, &aux, &PeakCounts::closs(1)).unwrap();
        assert!((v + 0.220_624_225_646_148_85).abs() < 1e-15);
    }

    #[test]
    fn bound_attains_kernel_sum() {
        let errs = [0.3, -0.8, 0.95, -0.05];
        let kk = k(0.4);
        let aux = hq_aux_update(&errs, &kk);
        let phi = PeakCounts::new(2, 1, 1);
        let bound = hq_bound(&errs, &aux, &phi, &kk).unwrap();
        let direct: f64 = errs
            .iter()
            .map(|&e| {
                2.0 * kk.unnormalized(e) + kk.unnormalized(e + 1.0) + kk.unnormalized(e - 1.0)
            })
            .sum();
        assert!((bound - direct).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let cfg = AdamConfig::default();
        let mut w = vec![1.0, -2.0, 0.5];
        let mut st = AdamState::new(3);
        adam_step(&mut w, &[3.0, -0.2, 0.0], &mut st, &cfg).unwrap();
        assert!((w[0] - 1.01).abs() < 1e-9);
        assert!((w[1] + 2.01).abs() < 1e-9);
        assert_eq!(w[2], 0.5);

        let mut w2 = vec![1.0];
        let mut st2 = AdamState::new(1);
        adam_step(&mut w2, &[0.0], &mut st2, &cfg).unwrap();
        assert_eq!(w2, vec![1.0]);
        assert!(adam_step(&mut w2, &[f64::NAN], &mut st2, &cfg).is_err());
    }

    #[test]
    fn peak_counting() {
        assert_eq!(
            count_peaks(&[0.1, -0.2, 0.7, -0.9]),
            PeakCounts::new(2, 1, 1)
        );
        assert_eq!(count_peaks(&[0.5, -0.5]), PeakCounts::new(2, 0, 0));
    }

    #[test]
    fn zero_outlier_weights_give_u_weighted_least_squares() {
        let x = Matrix::from_rows(&[[0.5, -1.0], [1.5, 0.2], [-0.3, 0.9]]).unwrap();
        let targets = [1u8, 0, 1];
        let model = Model::Logistic(LogisticModel::from_weights(2, &[0.4, -0.3, 0.1]).unwrap());
        let probs = model.predict_all(&x).unwrap();
        let b = PredictionBatch::new(&targets, &probs).unwrap();
        let aux = hq_aux_update(b.errors(), &k(0.5));
        let phi = PeakCounts::closs(3);
        let grad = jr2_gradient(&model, &x, &targets, &aux, &phi).unwrap();
        let mut expected = [0.0; 3];
        for i in 0..3 {
            let (e, y) = (b.errors()[i], probs[i]);
            let scale = -2.0 * 3.0 * aux.u[i] * e * y * (1.0 - y);
            let feats = [x.get(i, 0), x.get(i, 1), 1.0];
            for j in 0..3 {
                expected[j] += scale * feats[j];
            }
        }
        for j in 0..3 {
            assert!((grad[j] - expected[j]).abs() < 1e-14);
        }
        let wls: f64 = (0..3).map(|i| 3.0 * aux.u[i] * b.errors()[i].powi(2)).sum();
        assert!((jr2_objective(&b, &aux, &phi).unwrap() - wls).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            varsigma: 0.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            max_outer_iters: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
