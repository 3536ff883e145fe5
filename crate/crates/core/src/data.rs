//! Labeled datasets, synthetic toys, outlier injection and splitting.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::math;
use crate::rng::Rng;

/// Per-column statistics a dataset was standardized with.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Mean and population standard deviation of each column.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mut mean = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| math::sqrt(s / n)).collect();
        Normalization { mean, std }
    }

    /// Z-scores `x` in place. Constant columns are only centered.
    pub fn apply(&self, x: &mut Matrix) {
        for i in 0..x.rows() {
            let row = x.row_mut(i);
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v -= m;
                if *s > 0.0 {
                    *v /= s;
                }
            }
        }
    }

    pub fn apply_row(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v -= m;
            if *s > 0.0 {
                *v /= s;
            }
        }
    }
}

/// Dense features with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub name: String,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::input(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::input("labels must be 0 or 1"));
        }
        Ok(Dataset {
            features,
            labels,
            name: name.into(),
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// `(count of class 0, count of class 1)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        (self.len() - ones, ones)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            name: self.name.clone(),
            normalization: self.normalization.clone(),
        }
    }
}

/// Features with arbitrary string class tokens, before one-vs-all.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiClassDataset {
    pub features: Matrix,
    pub classes: Vec<String>,
    pub name: String,
}

impl MultiClassDataset {
    /// Distinct class tokens in order of first appearance.
    pub fn class_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.classes {
            if !out.contains(&c.as_str()) {
                out.push(c);
            }
        }
        out
    }
}

/// `target` becomes class 1, every other token class 0.
pub fn one_vs_all(ds: &MultiClassDataset, target: &str) -> Result<Dataset> {
    if !ds.classes.iter().any(|c| c == target) {
        return Err(Error::input(format!(
            "class '{target}' does not occur in {}",
            ds.name
        )));
    }
    let labels = ds.classes.iter().map(|c| u8::from(c == target)).collect();
    Dataset::new(
        format!("{} ({target} vs all)", ds.name),
        ds.features.clone(),
        labels,
    )
}

/// Size and placement of a synthetic linear toy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySpec {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    /// Every coordinate of the input mean; 0 gives balanced classes.
    pub mean_shift: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n_train: 1000,
            n_test: 1000,
            dim: 20,
            mean_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Toy {
    pub train: Dataset,
    pub test: Dataset,
    pub true_weights: Vec<f64>,
}

/// `x ~ N(mean_shift 1, I_d)`, `w* ~ N(0, I_d)`, label `[w*'x >= 0]`.
///
/// Draw order: `w*`, then training rows, then test rows.
pub fn generate_toy(spec: &ToySpec, rng: &mut Rng) -> Result<Toy> {
    if spec.dim == 0 {
        return Err(Error::param("toy dimension must be at least 1"));
    }
    let d = spec.dim;
    let true_weights: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let mut draw = |n: usize, name: &str| -> Result<Dataset> {
        let mut x = Matrix::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let row = x.row_mut(i);
            for v in row.iter_mut() {
                *v = spec.mean_shift + rng.standard_normal();
            }
            labels.push(u8::from(dot(&true_weights, row) >= 0.0));
        }
        Dataset::new(name, x, labels)
    };
    let train = draw(spec.n_train, "toy-train")?;
    let test = draw(spec.n_test, "toy-test")?;
    Ok(Toy {
        train,
        test,
        true_weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContaminationMode {
    /// Feature rows replaced by wide zero-mean Gaussian noise.
    Attribute,
    /// Labels of the majority class flipped to the minority class.
    LabelMajToMin,
    /// Labels of the minority class flipped to the majority class.
    LabelMinToMaj,
}

impl ContaminationMode {
    pub fn name(self) -> &'static str {
        match self {
            ContaminationMode::Attribute => "attribute",
            ContaminationMode::LabelMajToMin => "label_maj_to_min",
            ContaminationMode::LabelMinToMaj => "label_min_to_maj",
        }
    }
}

impl fmt::Display for ContaminationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContaminationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "attribute" | "attr" => Ok(ContaminationMode::Attribute),
            "label_maj_to_min" | "maj_to_min" | "maj2min" => Ok(ContaminationMode::LabelMajToMin),
            "label_min_to_maj" | "min_to_maj" | "min2maj" => Ok(ContaminationMode::LabelMinToMaj),
            other => Err(Error::param(format!(
                "unknown contamination mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationSpec {
    pub mode: ContaminationMode,
    /// Fraction of the affected population; in `[0, 1]`.
    pub proportion: f64,
    /// Outlier covariance is `attribute_cov_scale * I_d` (attribute mode).
    pub attribute_cov_scale: f64,
}

impl ContaminationSpec {
    pub fn attribute(proportion: f64, cov_scale: f64) -> Self {
        ContaminationSpec {
            mode: ContaminationMode::Attribute,
            proportion,
            attribute_cov_scale: cov_scale,
        }
    }

    pub fn label(mode: ContaminationMode, proportion: f64) -> Self {
        ContaminationSpec {
            mode,
            proportion,
            attribute_cov_scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.proportion) {
            return Err(Error::param("contamination proportion must lie in [0, 1]"));
        }
        if self.mode == ContaminationMode::Attribute && !(self.attribute_cov_scale > 0.0) {
            return Err(Error::param(
                "attribute outlier covariance must be positive",
            ));
        }
        Ok(())
    }

    fn count(&self, population: usize) -> usize {
        // small slack so that e.g. 0.3 * 100 is not floored to 29
        math::floor(self.proportion * population as f64 + 1e-9) as usize
    }
}

/// Applies `spec` to `ds`, dispatching on its mode.
pub fn contaminate(ds: &Dataset, spec: &ContaminationSpec, rng: &mut Rng) -> Result<Dataset> {
    match spec.mode {
        ContaminationMode::Attribute => inject_attribute_outliers(ds, spec, rng),
        _ => inject_label_outliers(ds, spec, rng),
    }
}

/// Replaces the features of `floor(proportion * N)` uniformly chosen rows
/// (regardless of class) with draws from `N(0, c I_d)`. Labels are kept.
pub fn inject_attribute_outliers(
    ds: &Dataset,
    spec: &ContaminationSpec,
    rng: &mut Rng,
) -> Result<Dataset> {
    spec.validate()?;
    if spec.mode != ContaminationMode::Attribute {
        return Err(Error::param("attribute injection needs attribute mode"));
    }
    let mut out = ds.clone();
    let picked = rng.sample_indices(ds.len(), spec.count(ds.len()));
    let std = math::sqrt(spec.attribute_cov_scale);
    for i in picked {
        for v in out.features.row_mut(i) {
            *v = rng.normal(0.0, std);
        }
    }
    Ok(out)
}

/// The majority class label; ties count class 0 as the majority.
pub fn majority_class(labels: &[u8]) -> u8 {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    u8::from(ones > labels.len() - ones)
}

/// Flips `floor(proportion * N_source)` uniformly chosen labels of the source
/// class (majority for maj-to-min, minority for min-to-maj).
pub fn inject_label_outliers(
    ds: &Dataset,
    spec: &ContaminationSpec,
    rng: &mut Rng,
) -> Result<Dataset> {
    spec.validate()?;
    let major = majority_class(&ds.labels);
    let source = match spec.mode {
        ContaminationMode::LabelMajToMin => major,
        ContaminationMode::LabelMinToMaj => 1 - major,
        ContaminationMode::Attribute => {
            return Err(Error::param("label injection needs a label mode"))
        }
    };
    let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == source).collect();
    if members.is_empty() {
        return Err(Error::input(format!(
            "source class {source} has no samples"
        )));
    }
    let mut out = ds.clone();
    for k in rng.sample_indices(members.len(), spec.count(members.len())) {
        out.labels[members[k]] = 1 - source;
    }
    Ok(out)
}

/// Standardizes both sets with the training statistics.
pub fn normalize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    let stats = Normalization::fit(&train.features);
    let mut tr = train.clone();
    let mut te = test.clone();
    stats.apply(&mut tr.features);
    stats.apply(&mut te.features);
    tr.normalization = Some(stats.clone());
    te.normalization = Some(stats);
    Ok((tr, te))
}

/// Uniform random split with `ceil(fraction * N)` training rows.
pub fn split(ds: &Dataset, train_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(
            "train fraction must lie strictly between 0 and 1",
        ));
    }
    let n = ds.len();
    let n_train = (math::ceil(train_fraction * n as f64 - 1e-9) as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let (tr, te) = idx.split_at(n_train);
    let mut tr = tr.to_vec();
    let mut te = te.to_vec();
    tr.sort_unstable();
    te.sort_unstable();
    let mut train = ds.subset(&tr);
    let mut test = ds.subset(&te);
    train.name = ds.name.to_string();
    test.name = ds.name.to_string();
    Ok((train, test))
}

/// Stratified fold assignment: entry `i` is the fold of sample `i`.
///
/// Each class is shuffled and dealt round-robin, with the deal continuing
/// across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[u8], k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::param("need at least two folds"));
    }
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut members);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let x = Matrix::from_vec(10, 2, (0..20).map(f64::from).collect()).unwrap();
        Dataset::new("tiny", x, vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1]).unwrap()
    }

    #[test]
    fn toy_labels_follow_true_weights() {
        let spec = ToySpec {
            n_train: 50,
            n_test: 30,
            dim: 4,
            mean_shift: 0.0,
        };
        let toy = generate_toy(&spec, &mut Rng::new(1)).unwrap();
        assert_eq!(toy.train.len(), 50);
        assert_eq!(toy.test.len(), 30);
        for ds in [&toy.train, &toy.test] {
            for (r, &l) in ds.features.iter_rows().zip(&ds.labels) {
                assert_eq!(l, u8::from(dot(&toy.true_weights, r) >= 0.0));
            }
        }
        let again = generate_toy(&spec, &mut Rng::new(1)).unwrap();
        assert_eq!(again.train, toy.train);
    }

    #[test]
    fn attribute_injection_counts() {
        let ds = tiny();
        let same = inject_attribute_outliers(
            &ds,
            &ContaminationSpec::attribute(0.0, 100.0),
            &mut Rng::new(2),
        )
        .unwrap();
        assert_eq!(same, ds);
        let half = inject_attribute_outliers(
            &ds,
            &ContaminationSpec::attribute(0.5, 100.0),
            &mut Rng::new(2),
        )
        .unwrap();
        let changed = (0..10)
            .filter(|&i| half.features.row(i) != ds.features.row(i))
            .count();
        assert_eq!(changed, 5);
        assert_eq!(half.labels, ds.labels);
        let all = inject_attribute_outliers(
            &ds,
            &ContaminationSpec::attribute(1.0, 100.0),
            &mut Rng::new(2),
        )
        .unwrap();
        assert!((0..10).all(|i| all.features.row(i) != ds.features.row(i)));
    }

    #[test]
    fn label_injection_counts() {
        let ds = tiny();
        let spec = ContaminationSpec::label(ContaminationMode::LabelMajToMin, 0.5);
        let out = inject_label_outliers(&ds, &spec, &mut Rng::new(3)).unwrap();
        // majority is class 0 (6 samples): 3 flips, class 1 untouched
        assert_eq!(out.class_counts(), (3, 7));
        assert!(out.labels[6..].iter().all(|&l| l == 1));
        assert_eq!(out.features, ds.features);
        let spec = ContaminationSpec::label(ContaminationMode::LabelMinToMaj, 0.3);
        let mut labels = vec![0u8; 150];
        labels[..100].iter_mut().for_each(|l| *l = 1);
        let big = Dataset::new("big", Matrix::zeros(150, 1), labels).unwrap();
        // minority is class 0 with 50 samples: floor(0.3 * 50) = 15 flips
        let out = inject_label_outliers(&big, &spec, &mut Rng::new(4)).unwrap();
        assert_eq!(out.class_counts(), (35, 115));
        let empty_source = Dataset::new("ones", Matrix::zeros(3, 1), vec![1, 1, 1]).unwrap();
        assert!(matches!(
            inject_label_outliers(&empty_source, &spec, &mut Rng::new(5)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn normalization_uses_train_statistics() {
        let mut rng = Rng::new(8);
        let toy = generate_toy(
            &ToySpec {
                n_train: 40,
                n_test: 40,
                dim: 3,
                mean_shift: 2.0,
            },
            &mut rng,
        )
        .unwrap();
        let (tr, te) = normalize(&toy.train, &toy.test).unwrap();
        let stats = Normalization::fit(&tr.features);
        for (m, s) in stats.mean.iter().zip(&stats.std) {
            assert!(m.abs() < 1e-10);
            assert!((s - 1.0).abs() < 1e-10);
        }
        let (tr2, _) = normalize(&tr, &te).unwrap();
        for (a, b) in tr2.features.as_slice().iter().zip(tr.features.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        let test_stats = Normalization::fit(&te.features);
        assert!(test_stats.mean.iter().any(|m| m.abs() > 1e-3));
    }

    #[test]
    fn constant_columns_are_centered_only() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let ds = Dataset::new("c", x, vec![0, 1]).unwrap();
        let (tr, _) = normalize(&ds, &ds).unwrap();
        assert_eq!(tr.features.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn split_sizes_and_partition() {
        let x = Matrix::from_vec(699, 1, (0..699).map(f64::from).collect()).unwrap();
        let ds = Dataset::new("n699", x, vec![0; 699]).unwrap();
        let (tr, te) = split(&ds, 2.0 / 3.0, &mut Rng::new(1)).unwrap();
        assert_eq!((tr.len(), te.len()), (466, 233));
        let mut all: Vec<f64> = tr
            .features
            .as_slice()
            .iter()
            .chain(te.features.as_slice())
            .copied()
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(all.iter().enumerate().all(|(i, &v)| v == i as f64));
        let (tr2, _) = split(&ds, 2.0 / 3.0, &mut Rng::new(1)).unwrap();
        assert_eq!(tr, tr2);
        assert!(split(&ds, 1.0, &mut Rng::new(1)).is_err());
        assert!(split(&ds, 0.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn one_vs_all_labels() {
        let mc = MultiClassDataset {
            features: Matrix::zeros(5, 1),
            classes: ["a", "b", "a", "c", "b"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            name: "mc".into(),
        };
        assert_eq!(mc.class_names(), vec!["a", "b", "c"]);
        let total: usize = mc
            .class_names()
            .iter()
            .map(|c| one_vs_all(&mc, c).unwrap().class_counts().1)
            .sum();
        assert_eq!(total, 5);
        assert_eq!(one_vs_all(&mc, "a").unwrap().labels, vec![1, 0, 1, 0, 0]);
        assert!(one_vs_all(&mc, "z").is_err());
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<u8> = (0..23).map(|i| u8::from(i % 3 == 0)).collect();
        let folds = stratified_folds(&labels, 5, &mut Rng::new(4)).unwrap();
        let mut sizes = [0usize; 5];
        let mut pos = [0usize; 5];
        for (f, l) in folds.iter().zip(&labels) {
            sizes[*f] += 1;
            pos[*f] += usize::from(*l);
        }
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
    }

    #[test]
    fn contamination_spec_validation() {
        assert!(ContaminationSpec::attribute(1.5, 5.0).validate().is_err());
        assert!(ContaminationSpec::attribute(0.5, 0.0).validate().is_err());
        assert_eq!(
            "maj2min".parse::<ContaminationMode>().unwrap(),
            ContaminationMode::LabelMajToMin
        );
        assert_eq!(
            ContaminationMode::LabelMinToMaj
                .name()
                .parse::<ContaminationMode>()
                .unwrap(),
            ContaminationMode::LabelMinToMaj
        );
    }
}
