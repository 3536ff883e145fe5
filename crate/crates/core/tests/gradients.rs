//! Finite-difference checks of the half-quadratic surrogate gradient.

use rmee_core::criteria::{PeakCounts, PredictionBatch};
use rmee_core::linalg::Matrix;
use rmee_core::model::{ElmConfig, ElmModel, LogisticModel, Model};
use rmee_core::optim::{jr2_gradient, jr2_objective, HqAux};
use rmee_core::rng::Rng;

const STEP: f64 = 1e-6;

struct Instance {
    model: Model,
    x: Matrix,
    targets: Vec<u8>,
    aux: HqAux,
    phi: PeakCounts,
}

fn instance(seed: u64, elm: bool) -> Instance {
    let mut rng = Rng::new(seed);
    let d = 1 + rng.index(5);
    let n = 1 + rng.index(20);
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        for v in x.row_mut(i) {
            *v = rng.normal(0.0, 1.5);
        }
    }
    let targets = (0..n).map(|_| rng.index(2) as u8).collect();
    let mut model = if elm {
        let cfg = ElmConfig {
            hidden: 1 + rng.index(8),
            ..ElmConfig::default()
        };
        Model::Elm(ElmModel::init(d, &cfg, &mut rng).unwrap())
    } else {
        Model::Logistic(LogisticModel::new(d))
    };
    for w in model.params_mut() {
        *w = rng.normal(0.0, 0.8);
    }
    let mut draw = || (0..n).map(|_| rng.uniform(-1.0, -1e-3)).collect::<Vec<_>>();
    let aux = HqAux {
        u: draw(),
        v: draw(),
        s: draw(),
    };
    let neg = rng.index(n + 1);
    let pos = rng.index(n - neg + 1);
    let phi = PeakCounts::new(n - neg - pos, neg, pos);
    Instance {
        model,
        x,
        targets,
        aux,
        phi,
    }
}

fn surrogate_at(inst: &Instance, params: &[f64]) -> f64 {
    let mut m = inst.model.clone();
    m.params_mut().copy_from_slice(params);
    let probs = m.predict_all(&inst.x).unwrap();
    let b = PredictionBatch::new(&inst.targets, &probs).unwrap();
    jr2_objective(&b, &inst.aux, &inst.phi).unwrap()
}

/// Max-norm relative error between the analytic and the central-difference
/// gradient.
fn relative_error(inst: &Instance) -> f64 {
    let analytic = jr2_gradient(&inst.model, &inst.x, &inst.targets, &inst.aux, &inst.phi).unwrap();
    let base = inst.model.params().to_vec();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..base.len() {
        let mut p = base.clone();
        p[j] = base[j] + STEP;
        let up = surrogate_at(inst, &p);
        p[j] = base[j] - STEP;
        let down = surrogate_at(inst, &p);
        let fd = (up - down) / (2.0 * STEP);
        worst = worst.max((fd - analytic[j]).abs());
        scale = scale.max(fd.abs()).max(analytic[j].abs());
    }
    worst / scale.max(1e-12)
}

#[test]
fn logistic_gradient_matches_central_differences() {
    for seed in 0..100 {
        let err = relative_error(&instance(seed, false));
        assert!(err < 1e-5, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn elm_gradient_matches_central_differences() {
    for seed in 0..100 {
        let err = relative_error(&instance(1000 + seed, true));
        assert!(err < 1e-5, "seed {seed}: relative error {err:e}");
    }
}
