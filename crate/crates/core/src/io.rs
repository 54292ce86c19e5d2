//! Reading and writing histograms, matrices and fitted models.
//!
//! Text files are CSV: one row per line, comma-separated decimals, no header. A file
//! whose first non-blank character is `{` is parsed as JSON instead, with fields
//! `weights` (a vector) or `entries` (rows), plus optional `n` and `m`.
//!
//! Model files start with the line `SHARPOT-MODEL-1`, then one line of JSON header,
//! then a little-endian `f64` payload: training inputs, training outputs and the
//! Cholesky factor, each row-major.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::learning::WeightModel;
use crate::simplex::{CostMatrix, Histogram, InteriorHistogram};

/// Tolerance on the sum of a histogram read from text, which is renormalized.
pub const READ_SUM_TOL: f64 = 1e-9;

/// First line of a model file.
pub const MODEL_MAGIC: &str = "SHARPOT-MODEL-1";

/// Formats `x` with 12 significant digits, trimming trailing zeros.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let s = format!("{:.*}", (11 - exp).max(0) as usize, x);
        // rounding may carry into a new digit (9.99.. -> 10.0); the extra digit is a zero
        trim_zeros(&s)
    } else {
        let s = format!("{:.11e}", x);
        let (mant, e) = s.split_once('e').expect("exponent form");
        format!("{}e{}", trim_zeros(mant), e)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct JsonArray {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entries: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> OtError {
    OtError::InvalidInput(format!("{}: {msg}", path.display()))
}

/// Parses CSV or JSON text into rows.
pub fn parse_rows(text: &str, origin: &Path) -> Result<Vec<Vec<f64>>> {
    if text.trim_start().starts_with('{') {
        let doc: JsonArray = serde_json::from_str(text).map_err(|e| parse_err(origin, e))?;
        // `weights` declares its length as `n`; `entries` declares rows `n` and columns `m`
        let (rows, want_n, want_m) = match (doc.entries, doc.weights) {
            (Some(rows), _) => (rows, doc.n, doc.m),
            (None, Some(w)) => (vec![w], None, doc.n),
            (None, None) => return Err(parse_err(origin, "JSON needs `weights` or `entries`")),
        };
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if want_n.is_some_and(|k| k != n) || want_m.is_some_and(|k| k != m) {
            return Err(parse_err(origin, "declared dimensions do not match the data"));
        }
        return Ok(rows);
    }
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(origin, format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a rectangular array of rows.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| OtError::Io(format!("{}: {e}", path.display())))?;
    parse_rows(&text, path)
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    rows_to_matrix(read_rows(path)?, path)
}

fn rows_to_matrix(rows: Vec<Vec<f64>>, origin: &Path) -> Result<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(parse_err(origin, "empty matrix"));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(parse_err(origin, "rows have different lengths"));
    }
    Ok(Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect()).expect("rectangular"))
}

pub fn read_cost(path: &Path) -> Result<CostMatrix> {
    CostMatrix::new(read_matrix(path)?)
}

/// Reads a histogram from a single-line file; sums off by at most [`READ_SUM_TOL`]
/// (12-digit output) are renormalized.
pub fn read_histogram(path: &Path) -> Result<Histogram> {
    let rows = read_rows(path)?;
    if rows.len() != 1 {
        return Err(parse_err(path, format!("expected one line, found {}", rows.len())));
    }
    Histogram::from_rounded(Array1::from(rows.into_iter().next().unwrap()), READ_SUM_TOL)
}

/// Reads one histogram per line.
pub fn read_histograms(path: &Path) -> Result<Vec<Histogram>> {
    let rows = read_rows(path)?;
    if rows.is_empty() {
        return Err(parse_err(path, "no histograms"));
    }
    rows.into_iter().map(|r| Histogram::from_rounded(Array1::from(r), READ_SUM_TOL)).collect()
}

/// Reads a single line of reals (e.g. signed weights).
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let rows = read_rows(path)?;
    if rows.len() != 1 {
        return Err(parse_err(path, format!("expected one line, found {}", rows.len())));
    }
    Ok(rows.into_iter().next().unwrap())
}

/// CSV text for the given rows.
pub fn csv_string<'a, I, R>(rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = &'a f64>,
{
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.into_iter().map(|x| format_sig(*x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| OtError::Io(format!("{}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    write_text(path, &csv_string(m.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>().iter()))
}

pub fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    write_text(path, &csv_string([h.weights()]))
}

pub fn write_histograms(path: &Path, hs: &[Histogram]) -> Result<()> {
    write_text(path, &csv_string(hs.iter().map(Histogram::weights)))
}

/// JSON mirror of a histogram: `{"weights": [...], "n": len}`.
pub fn histogram_json(h: &Histogram) -> String {
    let doc = JsonArray { weights: Some(h.weights().to_vec()), n: Some(h.len()), ..Default::default() };
    serde_json::to_string(&doc).expect("plain data serializes")
}

/// JSON mirror of a matrix: `{"entries": [[...]], "n": rows, "m": cols}`.
pub fn matrix_json(a: &Array2<f64>) -> String {
    let doc = JsonArray {
        entries: Some(a.outer_iter().map(|r| r.to_vec()).collect()),
        n: Some(a.nrows()),
        m: Some(a.ncols()),
        ..Default::default()
    };
    serde_json::to_string(&doc).expect("plain data serializes")
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    sigma: f64,
    gamma: f64,
    examples: usize,
    input_dim: usize,
    bins: usize,
    epsilon: f64,
    byte_order: String,
    payload: Vec<String>,
}

/// A fitted model bundled with the training outputs it predicts from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: WeightModel,
    pub outputs: Vec<InteriorHistogram>,
}

pub fn save_model(path: &Path, model: &WeightModel, outputs: &[InteriorHistogram]) -> Result<()> {
    if outputs.len() != model.len() || outputs.is_empty() {
        return Err(OtError::InvalidInput("outputs must match the model's training examples".into()));
    }
    let header = ModelHeader {
        format: MODEL_MAGIC.into(),
        sigma: model.sigma(),
        gamma: model.gamma(),
        examples: model.len(),
        input_dim: model.inputs().ncols(),
        bins: outputs[0].len(),
        epsilon: outputs.iter().map(InteriorHistogram::epsilon).fold(f64::INFINITY, f64::min),
        byte_order: "little".into(),
        payload: vec!["inputs".into(), "outputs".into(), "cholesky".into()],
    };
    let file = fs::File::create(path).map_err(|e| OtError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{MODEL_MAGIC}")?;
    writeln!(w, "{}", serde_json::to_string(&header).expect("plain data serializes"))?;
    let values =
        model.inputs().iter().chain(outputs.iter().flat_map(|y| y.weights().iter())).chain(model.factor().iter());
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = fs::read(path).map_err(|e| OtError::Io(format!("{}: {e}", path.display())))?;
    let bad = |msg: &str| parse_err(path, format!("not a valid model file: {msg}"));
    let (magic, rest) = split_line(&bytes).ok_or_else(|| bad("missing header"))?;
    if magic != MODEL_MAGIC.as_bytes() {
        return Err(bad("unknown format tag"));
    }
    let (head, payload) = split_line(rest).ok_or_else(|| bad("missing header"))?;
    let header: ModelHeader = serde_json::from_slice(head).map_err(|e| bad(&e.to_string()))?;
    let (l, d, n) = (header.examples, header.input_dim, header.bins);
    let expected = (l * d + l * n + l * l) * 8;
    if header.format != MODEL_MAGIC || payload.len() != expected || l == 0 {
        return Err(bad("payload size does not match header"));
    }
    let mut floats = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |k: usize| floats.by_ref().take(k).collect::<Vec<f64>>();
    let inputs = Array2::from_shape_vec((l, d), take(l * d)).expect("sized");
    let outputs = (0..l)
        .map(|_| InteriorHistogram::new(Histogram::new(Array1::from(take(n)))?, header.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let factor = Array2::from_shape_vec((l, l), take(l * l)).expect("sized");
    let model = WeightModel::from_parts(header.sigma, header.gamma, inputs, factor)?;
    Ok(ModelFile { model, outputs })
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let pos = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..pos], &bytes[pos + 1..]))
}
