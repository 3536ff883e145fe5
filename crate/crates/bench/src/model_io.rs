//! Model files: the core text format, optionally followed by the
//! normalization the model was trained under.
//!
//! ```text
//! model lr dim 2 hidden 0
//! 0.5 -1.25 0.1
//! normalization
//! 3.5 1.0
//! 2.0 0.5
//! ```

use std::path::Path;

use rmee_core::data::Normalization;
use rmee_core::model::Model;

use crate::error::{BenchError, Result};

const NORMALIZATION: &str = "normalization";

pub fn model_to_text(model: &Model, norm: Option<&Normalization>) -> String {
    let mut s = model.to_text();
    if let Some(n) = norm {
        s.push_str(NORMALIZATION);
        s.push('\n');
        for row in [&n.mean, &n.std] {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn model_from_text(text: &str) -> Result<(Model, Option<Normalization>)> {
    let lines: Vec<&str> = text.lines().collect();
    let Some(at) = lines.iter().position(|l| l.trim() == NORMALIZATION) else {
        return Ok((Model::from_text(text)?, None));
    };
    let model = Model::from_text(&lines[..at].join("\n"))?;
    let rows: Vec<&str> = lines[at + 1..]
        .iter()
        .copied()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let parse = |line: &str| -> Result<Vec<f64>> {
        line.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| BenchError::Invalid(format!("bad normalization value '{t}'")))
            })
            .collect()
    };
    let [mean, std] = rows[..] else {
        return Err(BenchError::Invalid(
            "normalization block needs a mean line and a std line".into(),
        ));
    };
    let (mean, std) = (parse(mean)?, parse(std)?);
    if mean.len() != model.dim() || std.len() != model.dim() {
        return Err(BenchError::Invalid(format!(
            "normalization width does not match model dimension {}",
            model.dim()
        )));
    }
    Ok((model, Some(Normalization { mean, std })))
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &Model,
    norm: Option<&Normalization>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_text(model, norm)).map_err(|e| BenchError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Model, Option<Normalization>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    model_from_text(&text)
}
