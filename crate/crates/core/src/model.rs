//! Regression-like classifiers that output a probability in `(0, 1)`.
//!
//! Both backends are a sigmoid over a linear function of a fixed feature map:
//! the raw inputs for logistic regression, the frozen random hidden layer for
//! the extreme learning machine. A constant-1 feature is appended by the map
//! so the last trainable weight is the bias.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::math;
use crate::rng::Rng;

/// Hidden layer size used unless configured otherwise.
pub const DEFAULT_HIDDEN: usize = 50;

/// Logistic function; never overflows.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + math::exp(-z))
    } else {
        let ez = math::exp(z);
        ez / (1.0 + ez)
    }
}

/// Hard labels: 1 iff the probability is strictly above one half.
pub fn predict_labels(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p > 0.5)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => libm::tanh(z),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::param(format!("unknown activation '{other}'"))),
        }
    }
}

/// Distribution of the frozen hidden weights and biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// i.i.d. uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// i.i.d. `N(0, std^2)`.
    Gaussian { std: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Uniform { half_width: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElmConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub init: InitScheme,
}

impl Default for ElmConfig {
    fn default() -> Self {
        ElmConfig {
            hidden: DEFAULT_HIDDEN,
            activation: Activation::Sigmoid,
            init: InitScheme::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    dim: usize,
    /// `dim` input weights followed by the bias.
    weights: Vec<f64>,
}

impl LogisticModel {
    /// Zero weights, so every prediction starts at 0.5.
    pub fn new(dim: usize) -> Self {
        LogisticModel {
            dim,
            weights: vec![0.0; dim + 1],
        }
    }

    /// `weights` holds `dim` input weights, optionally followed by a bias.
    pub fn from_weights(dim: usize, weights: &[f64]) -> Result<Self> {
        let mut w = weights.to_vec();
        if w.len() == dim {
            w.push(0.0);
        }
        check_dim(dim + 1, w.len())?;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("logistic weights must be finite"));
        }
        Ok(LogisticModel { dim, weights: w })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(dot(&self.weights[..self.dim], x) + self.weights[self.dim])
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.logit(x).map(sigmoid)
    }
}

/// Single-hidden-layer network with a frozen random hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ElmModel {
    dim: usize,
    hidden: usize,
    activation: Activation,
    /// `dim x hidden`, row-major: entry `(i, k)` links input `i` to node `k`.
    hidden_weights: Vec<f64>,
    hidden_biases: Vec<f64>,
    /// `hidden` node weights followed by the output bias.
    output_weights: Vec<f64>,
}

impl ElmModel {
    /// Draws the hidden layer from `cfg.init`; output weights start at zero.
    pub fn init(dim: usize, cfg: &ElmConfig, rng: &mut Rng) -> Result<Self> {
        if dim == 0 || cfg.hidden == 0 {
            return Err(Error::param(
                "ELM needs at least one input and one hidden node",
            ));
        }
        let mut draw = || match cfg.init {
            InitScheme::Uniform { half_width } => rng.uniform(-half_width, half_width),
            InitScheme::Gaussian { std } => rng.normal(0.0, std),
        };
        let hidden_weights = (0..dim * cfg.hidden).map(|_| draw()).collect();
        let hidden_biases = (0..cfg.hidden).map(|_| draw()).collect();
        Ok(ElmModel {
            dim,
            hidden: cfg.hidden,
            activation: cfg.activation,
            hidden_weights,
            hidden_biases,
            output_weights: vec![0.0; cfg.hidden + 1],
        })
    }

    pub fn from_parts(
        dim: usize,
        activation: Activation,
        hidden_weights: Vec<f64>,
        hidden_biases: Vec<f64>,
        output_weights: Vec<f64>,
    ) -> Result<Self> {
        let hidden = hidden_biases.len();
        if dim == 0 || hidden == 0 {
            return Err(Error::param(
                "ELM needs at least one input and one hidden node",
            ));
        }
        check_dim(dim * hidden, hidden_weights.len())?;
        check_dim(hidden + 1, output_weights.len())?;
        let all_finite = hidden_weights
            .iter()
            .chain(&hidden_biases)
            .chain(&output_weights)
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::param("ELM weights must be finite"));
        }
        Ok(ElmModel {
            dim,
            hidden,
            activation,
            hidden_weights,
            hidden_biases,
            output_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn hidden_weights(&self) -> &[f64] {
        &self.hidden_weights
    }

    pub fn hidden_biases(&self) -> &[f64] {
        &self.hidden_biases
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output_weights
    }

    fn hidden_into(&self, x: &[f64], out: &mut [f64]) {
        out[..self.hidden].copy_from_slice(&self.hidden_biases);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.hidden_weights[i * self.hidden..(i + 1) * self.hidden];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
        }
        for o in out[..self.hidden].iter_mut() {
            *o = self.activation.apply(*o);
        }
    }

    /// Hidden-node outputs `h_k = act(w_k' x + b_k)`.
    pub fn hidden_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut h = vec![0.0; self.hidden];
        self.hidden_into(x, &mut h);
        Ok(h)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let h = self.hidden_map(x)?;
        let z = dot(&self.output_weights[..self.hidden], &h) + self.output_weights[self.hidden];
        Ok(sigmoid(z))
    }
}

/// Probability of class 1 under a logistic model.
pub fn lr_predict(m: &LogisticModel, x: &[f64]) -> Result<f64> {
    m.predict(x)
}

pub fn elm_init(dim: usize, hidden: usize, rng: &mut Rng) -> Result<ElmModel> {
    ElmModel::init(
        dim,
        &ElmConfig {
            hidden,
            ..ElmConfig::default()
        },
        rng,
    )
}

pub fn elm_hidden_map(m: &ElmModel, x: &[f64]) -> Result<Vec<f64>> {
    m.hidden_map(x)
}

pub fn elm_predict(m: &ElmModel, x: &[f64]) -> Result<f64> {
    m.predict(x)
}

/// A classifier backend.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Logistic(LogisticModel),
    Elm(ElmModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Logistic(m) => m.dim,
            Model::Elm(m) => m.dim,
        }
    }

    /// Number of trainable weights, including the bias.
    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Model::Logistic(m) => &m.weights,
            Model::Elm(m) => &m.output_weights,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Logistic(m) => &mut m.weights,
            Model::Elm(m) => &mut m.output_weights,
        }
    }

    /// Resets the trainable weights to zero.
    pub fn reset(&mut self) {
        self.params_mut().iter_mut().for_each(|w| *w = 0.0);
    }

    /// Fixed feature map `phi(x)` (with trailing 1) such that the prediction
    /// is `sigmoid(params . phi(x))`.
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.n_params(), out.len())?;
        match self {
            Model::Logistic(_) => out[..x.len()].copy_from_slice(x),
            Model::Elm(m) => m.hidden_into(x, out),
        }
        out[out.len() - 1] = 1.0;
        Ok(())
    }

    /// Feature map applied to every row of `x`.
    pub fn design(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.dim(), x.cols())?;
        let mut out = Matrix::zeros(x.rows(), self.n_params());
        for i in 0..x.rows() {
            self.features_into(x.row(i), out.row_mut(i))?;
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Logistic(m) => m.predict(x),
            Model::Elm(m) => m.predict(x),
        }
    }

    pub fn predict_all(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.cols())?;
        x.iter_rows().map(|r| self.predict(r)).collect()
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Logistic(_) => "lr",
            Model::Elm(_) => "elm",
        }
    }

    /// Plain-text form: a header `model <lr|elm> dim <d> hidden <H>` and the
    /// weights in row-major order, using shortest round-trip decimals.
    ///
    /// Logistic: `d + 1` weights (bias last). ELM: the `d x H` hidden weight
    /// matrix one row per line, then the `H` hidden biases, then the `H + 1`
    /// output weights. A non-default activation adds `activation <name>` to
    /// the header.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self {
            Model::Logistic(m) => {
                let _ = writeln!(s, "model lr dim {} hidden 0", m.dim);
                push_row(&mut s, &m.weights);
            }
            Model::Elm(m) => {
                let _ = write!(s, "model elm dim {} hidden {}", m.dim, m.hidden);
                if m.activation != Activation::Sigmoid {
                    let _ = write!(s, " activation {}", m.activation.name());
                }
                s.push('\n');
                for row in m.hidden_weights.chunks(m.hidden) {
                    push_row(&mut s, row);
                }
                push_row(&mut s, &m.hidden_biases);
                push_row(&mut s, &m.output_weights);
            }
        }
        s
    }

    /// Parses [`Model::to_text`] output.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::input("model text is empty"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() < 6 || h[0] != "model" || h[2] != "dim" || h[4] != "hidden" {
            return Err(Error::input(format!("malformed model header '{header}'")));
        }
        let dim: usize = parse_count(h[3])?;
        let hidden: usize = parse_count(h[5])?;
        let activation = match &h[6..] {
            [] => Activation::Sigmoid,
            ["activation", name] => name.parse()?,
            _ => return Err(Error::input(format!("malformed model header '{header}'"))),
        };
        let mut values = Vec::new();
        for line in lines {
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::input(format!("bad weight '{tok}'")))?,
                );
            }
        }
        match h[1] {
            "lr" => {
                check_dim(dim + 1, values.len())?;
                Ok(Model::Logistic(LogisticModel::from_weights(dim, &values)?))
            }
            "elm" => {
                let (hw, rest) = split_checked(&values, dim * hidden)?;
                let (hb, ow) = split_checked(rest, hidden)?;
                Ok(Model::Elm(ElmModel::from_parts(
                    dim,
                    activation,
                    hw.to_vec(),
                    hb.to_vec(),
                    ow.to_vec(),
                )?))
            }
            other => Err(Error::input(format!("unknown model kind '{other}'"))),
        }
    }
}

fn push_row(s: &mut String, row: &[f64]) {
    for (i, w) in row.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{w:?}");
    }
    s.push('\n');
}

fn parse_count(tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::input(format!("bad count '{tok}' in model header")))
}

fn split_checked(values: &[f64], at: usize) -> Result<(&[f64], &[f64])> {
    if values.len() < at {
        return Err(Error::input("model text has too few weights"));
    }
    Ok(values.split_at(at))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_and_antisymmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(709.0) <= 1.0 && sigmoid(709.0) > 0.999);
        assert!(sigmoid(-709.0) >= 0.0 && sigmoid(-709.0).is_finite());
        assert!(sigmoid(-745.0).is_finite());
        for z in [-30.0, -2.5, -0.1, 0.7, 12.0] {
            assert!((sigmoid(-z) - (1.0 - sigmoid(z))).abs() < 1e-15);
        }
    }

    #[test]
    fn lr_examples() {
        let m = LogisticModel::from_weights(2, &[1.0, 1.0]).unwrap();
        assert!((lr_predict(&m, &[1.0, 1.0]).unwrap() - 0.880_797_077_977_882_4).abs() < 1e-15);
        assert_eq!(
            lr_predict(&LogisticModel::new(2), &[3.0, -4.0]).unwrap(),
            0.5
        );
        assert!(matches!(
            m.predict(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(m.predict(&[1e6, 1e6]).unwrap() <= 1.0);
    }

    #[test]
    fn elm_init_shapes_and_determinism() {
        let a = elm_init(3, 2, &mut Rng::new(11)).unwrap();
        let b = elm_init(3, 2, &mut Rng::new(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hidden_weights().len(), 6);
        assert!(a.hidden_weights().iter().all(|w| (-1.0..=1.0).contains(w)));
        assert!(a.output_weights().iter().all(|&w| w == 0.0));
        assert_eq!(ElmConfig::default().hidden, 50);
        assert!(elm_init(0, 2, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn elm_hand_computed() {
        let zero = ElmModel::from_parts(
            2,
            Activation::Sigmoid,
            vec![0.0; 6],
            vec![0.0; 3],
            vec![0.0; 4],
        )
        .unwrap();
        assert_eq!(zero.hidden_map(&[3.0, -1.0]).unwrap(), vec![0.5; 3]);
        assert_eq!(zero.predict(&[3.0, -1.0]).unwrap(), 0.5);

        // single node with w = (2, 0), b = 0
        let one = ElmModel::from_parts(
            2,
            Activation::Sigmoid,
            vec![2.0, 0.0],
            vec![0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let h = one.hidden_map(&[1.0, 1.0]).unwrap();
        assert!((h[0] - 0.880_797_077_977_882_4).abs() < 1e-15);

        // two nodes: w column-wise (1, -1) and (0.5, 2), biases (0.1, -0.3),
        // output (1.5, -2, bias 0.25), x = (0.4, -0.2)
        // z1 = 0.4 + 0.2 + 0.1 = 0.7, z2 = 0.2 - 0.4 - 0.3 = -0.5
        let m = ElmModel::from_parts(
            2,
            Activation::Sigmoid,
            vec![1.0, 0.5, -1.0, 2.0],
            vec![0.1, -0.3],
            vec![1.5, -2.0, 0.25],
        )
        .unwrap();
        // mpmath: sigmoid(1.5 sigmoid(0.7) - 2 sigmoid(-0.5) + 0.25)
        let expected = 0.621_801_170_944_752_6;
        assert!((m.predict(&[0.4, -0.2]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn labels_threshold_strictly() {
        assert_eq!(predict_labels(&[0.9, 0.1, 0.5]), vec![1, 0, 0]);
        assert_eq!(predict_labels(&[0.500001]), vec![1]);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mut rng = Rng::new(5);
        let mut elm = Model::Elm(elm_init(3, 4, &mut rng).unwrap());
        for (i, w) in elm.params_mut().iter_mut().enumerate() {
            *w = (i as f64 + 0.1) / 3.0;
        }
        let back = Model::from_text(&elm.to_text()).unwrap();
        assert_eq!(back, elm);
        assert!(elm.to_text().starts_with("model elm dim 3 hidden 4\n"));

        let lr = Model::Logistic(LogisticModel::from_weights(2, &[0.1, -1e-300, 7.25]).unwrap());
        let text = lr.to_text();
        assert!(text.starts_with("model lr dim 2 hidden 0\n"));
        let back = Model::from_text(&text).unwrap();
        for (a, b) in back.params().iter().zip(lr.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(Model::from_text("model lr dim 2 hidden 0\n1 2").is_err());
        assert!(Model::from_text("modle lr dim 2 hidden 0\n1 2 3").is_err());
    }

    #[test]
    fn design_matches_prediction() {
        let mut rng = Rng::new(9);
        let mut m = Model::Elm(elm_init(2, 3, &mut rng).unwrap());
        m.params_mut().copy_from_slice(&[0.3, -0.7, 1.1, 0.05]);
        let x = Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]).unwrap();
        let d = m.design(&x).unwrap();
        for i in 0..2 {
            let z = dot(d.row(i), m.params());
            assert!((sigmoid(z) - m.predict(x.row(i)).unwrap()).abs() < 1e-15);
            assert_eq!(d.get(i, 3), 1.0);
        }
    }
}
