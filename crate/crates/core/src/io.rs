//! Text formats: the versioned model/checkpoint file and the data CSV.
//!
//! Model file layout:
//!
//! ```text
//! ELMSTREAM v1
//! n n_h y_d activation seed
//! <W_r, n rows>
//!
//! <b_r, one row>
//!
//! <W, n_h rows>
//! ```
//!
//! Numbers use 17 significant digits so finite values round-trip exactly.
//! A checkpoint appends blank-line separated `STATE`, `NORMALIZER` and `META`
//! sections.

use std::fmt::Write as _;
use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::elm::{ActivationKind, ElmModel, HiddenLayer, Label};
use crate::error::{ElmError, Result};
use crate::metrics::Normalizer;
use crate::online::StepMatrix;
use crate::plant::{LabeledSeries, INPUT_CHANNELS, OUTPUT_CHANNELS};

pub const MAGIC: &str = "ELMSTREAM v1";
pub const DATA_HEADER: &str = "cycle,u1,u2,u3,y1,y2,label";

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_row<'a, I: IntoIterator<Item = &'a f64>>(out: &mut String, row: I) {
    let line: Vec<String> = row.into_iter().map(|v| format_float(*v)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    for r in m.row_iter() {
        write_row(out, r.iter());
    }
}

pub fn write_model(model: &ElmModel) -> String {
    let mut out = String::new();
    let h = model.hidden();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(
        out,
        "{} {} {} {} {}",
        h.input_dim(),
        h.hidden_dim(),
        model.output_dim(),
        h.activation(),
        h.seed()
    );
    write_matrix(&mut out, h.weights());
    out.push('\n');
    write_row(&mut out, h.bias().iter());
    out.push('\n');
    write_matrix(&mut out, model.output_weights());
    out
}

/// Learner-specific state stored after the model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainerState {
    Batch,
    Linear,
    Oselm {
        covariance: DMatrix<f64>,
        samples_seen: u64,
    },
    Sgelm {
        step: StepMatrix,
        scale_factor: f64,
        minority: Label,
        majority_count: u64,
        minority_count: u64,
        samples_seen: u64,
    },
}

impl TrainerState {
    pub fn name(&self) -> &'static str {
        match self {
            TrainerState::Batch => "batch",
            TrainerState::Linear => "linear",
            TrainerState::Oselm { .. } => "oselm",
            TrainerState::Sgelm { .. } => "sgelm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ElmModel,
    pub state: TrainerState,
    /// Normalizer over all data channels (inputs then outputs).
    pub normalizer: Option<Normalizer>,
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn write_checkpoint(cp: &Checkpoint) -> String {
    let mut out = write_model(&cp.model);
    out.push('\n');
    let _ = writeln!(out, "STATE {}", cp.state.name());
    match &cp.state {
        TrainerState::Batch | TrainerState::Linear => {}
        TrainerState::Oselm {
            covariance,
            samples_seen,
        } => {
            let _ = writeln!(out, "samples_seen {samples_seen}");
            let _ = writeln!(out, "covariance");
            write_matrix(&mut out, covariance);
        }
        TrainerState::Sgelm {
            step,
            scale_factor,
            minority,
            majority_count,
            minority_count,
            samples_seen,
        } => {
            let _ = writeln!(out, "scale_factor {}", format_float(*scale_factor));
            let _ = writeln!(out, "minority {}", minority.as_i8());
            let _ = writeln!(out, "majority_count {majority_count}");
            let _ = writeln!(out, "minority_count {minority_count}");
            let _ = writeln!(out, "samples_seen {samples_seen}");
            match step {
                StepMatrix::Scalar(g) => {
                    let _ = writeln!(out, "gamma {}", format_float(*g));
                }
                StepMatrix::Full(m) => {
                    let _ = writeln!(out, "gamma full");
                    write_matrix(&mut out, m);
                }
            }
        }
    }
    if let Some(n) = &cp.normalizer {
        out.push('\n');
        out.push_str("NORMALIZER\n");
        out.push_str("min ");
        write_row(&mut out, n.min());
        out.push_str("max ");
        write_row(&mut out, n.max());
    }
    if !cp.meta.is_empty() {
        out.push('\n');
        out.push_str("META\n");
        for (k, v) in &cp.meta {
            let _ = writeln!(out, "{k} {v}");
        }
    }
    out
}

/// Line cursor that remembers 1-based line numbers for error messages.
struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().collect(),
            pos: 0,
        }
    }

    fn line_no(&self) -> usize {
        self.pos + 1
    }

    fn err(&self, message: impl Into<String>) -> ElmError {
        ElmError::Parse {
            line: self.line_no(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Result<&'a str> {
        let l = self.peek().ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(l)
    }

    fn blank(&mut self) -> Result<()> {
        let l = self.next()?;
        if !l.trim().is_empty() {
            self.pos -= 1;
            return Err(self.err(format!("expected blank line, found '{l}'")));
        }
        Ok(())
    }

    fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        self.pos -= 1;
        let vals = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("invalid number '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", vals.len())));
        }
        self.pos += 1;
        Ok(vals)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.floats(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    /// `key value` line with a fixed key.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("expected '{key} <value>', found '{l}'")))
            }
        }
    }

    fn keyed_parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyed(key)?;
        v.parse::<T>().map_err(|_| ElmError::Parse {
            line: self.pos,
            message: format!("invalid value '{v}' for {key}"),
        })
    }
}

fn parse_model(lines: &mut Lines<'_>) -> Result<ElmModel> {
    if lines.next()?.trim() != MAGIC {
        lines.pos -= 1;
        return Err(lines.err(format!("missing '{MAGIC}' header")));
    }
    let dims = lines.next()?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    if parts.len() != 5 {
        lines.pos -= 1;
        return Err(lines.err("expected 'n n_h y_d activation seed'"));
    }
    let bad = |what: &str| ElmError::Parse {
        line: lines.pos,
        message: format!("invalid {what}"),
    };
    let n: usize = parts[0].parse().map_err(|_| bad("n"))?;
    let nh: usize = parts[1].parse().map_err(|_| bad("n_h"))?;
    let yd: usize = parts[2].parse().map_err(|_| bad("y_d"))?;
    let activation: ActivationKind = parts[3].parse().map_err(|_| bad("activation"))?;
    let seed: u64 = parts[4].parse().map_err(|_| bad("seed"))?;
    if n == 0 || nh == 0 || yd == 0 {
        return Err(bad("dimensions (must be positive)"));
    }
    let weights = lines.matrix(n, nh)?;
    lines.blank()?;
    let bias = DVector::from_vec(lines.floats(nh)?);
    lines.blank()?;
    let w = lines.matrix(nh, yd)?;
    let layer = HiddenLayer::from_parts_with_seed(weights, bias, activation, seed)?;
    ElmModel::new(layer, w)
}

pub fn read_model(text: &str) -> Result<ElmModel> {
    let mut lines = Lines::new(text);
    parse_model(&mut lines)
}

pub fn read_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = Lines::new(text);
    let model = parse_model(&mut lines)?;
    let nh = model.hidden_dim();
    let mut state = None;
    let mut normalizer = None;
    let mut meta = Vec::new();
    while lines.peek().is_some() {
        lines.blank()?;
        let head = lines.next()?.trim();
        if let Some(kind) = head.strip_prefix("STATE ") {
            state = Some(match kind.trim() {
                "batch" => TrainerState::Batch,
                "linear" => TrainerState::Linear,
                "oselm" => {
                    let samples_seen = lines.keyed_parse("samples_seen")?;
                    if lines.next()?.trim() != "covariance" {
                        lines.pos -= 1;
                        return Err(lines.err("expected 'covariance'"));
                    }
                    TrainerState::Oselm {
                        covariance: lines.matrix(nh, nh)?,
                        samples_seen,
                    }
                }
                "sgelm" => {
                    let scale_factor = lines.keyed_parse("scale_factor")?;
                    let minority = Label::from_i64(lines.keyed_parse("minority")?)?;
                    let majority_count = lines.keyed_parse("majority_count")?;
                    let minority_count = lines.keyed_parse("minority_count")?;
                    let samples_seen = lines.keyed_parse("samples_seen")?;
                    let gamma = lines.keyed("gamma")?;
                    let step = if gamma == "full" {
                        StepMatrix::Full(lines.matrix(nh, nh)?)
                    } else {
                        StepMatrix::Scalar(gamma.parse().map_err(|_| ElmError::Parse {
                            line: lines.pos,
                            message: format!("invalid gamma '{gamma}'"),
                        })?)
                    };
                    TrainerState::Sgelm {
                        step,
                        scale_factor,
                        minority,
                        majority_count,
                        minority_count,
                        samples_seen,
                    }
                }
                other => {
                    lines.pos -= 1;
                    return Err(lines.err(format!("unknown trainer state '{other}'")));
                }
            });
        } else if head == "NORMALIZER" {
            let min_line = lines.keyed("min")?;
            let max_line = lines.keyed("max")?;
            let parse = |s: &str, line: usize| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| ElmError::Parse {
                            line,
                            message: format!("invalid number '{t}'"),
                        })
                    })
                    .collect()
            };
            let min = parse(min_line, lines.pos - 1)?;
            let max = parse(max_line, lines.pos)?;
            normalizer = Some(Normalizer::from_bounds(min, max)?);
        } else if head == "META" {
            while let Some(l) = lines.peek() {
                if l.trim().is_empty() {
                    break;
                }
                lines.pos += 1;
                let (k, v) = l.split_once(' ').unwrap_or((l, ""));
                meta.push((k.to_string(), v.trim().to_string()));
            }
        } else {
            lines.pos -= 1;
            return Err(lines.err(format!("unknown section '{head}'")));
        }
    }
    let state = state.ok_or_else(|| lines.err("checkpoint has no STATE section"))?;
    Ok(Checkpoint {
        model,
        state,
        normalizer,
        meta,
    })
}

/// Data CSV with shortest round-trip float formatting.
pub fn write_data_csv(series: &LabeledSeries) -> String {
    let mut out = String::with_capacity(series.len() * 96);
    out.push_str(DATA_HEADER);
    out.push('\n');
    for k in 0..series.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            k,
            series.u[(k, 0)],
            series.u[(k, 1)],
            series.u[(k, 2)],
            series.y[(k, 0)],
            series.y[(k, 1)],
            series.labels[k].as_i8()
        );
    }
    out
}

/// Parses the data CSV; errors carry the 1-based file line.
pub fn read_data_csv<R: Read>(reader: R) -> Result<LabeledSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| ElmError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != DATA_HEADER {
        return Err(ElmError::Parse {
            line: 1,
            message: format!("expected header '{DATA_HEADER}', found '{header}'"),
        });
    }
    let mut u = Vec::new();
    let mut y = Vec::new();
    let mut labels = Vec::new();
    let mut last_cycle: Option<i64> = None;
    for (i, rec) in rdr.records().enumerate() {
        let fallback_line = i + 2;
        let rec = rec.map_err(|e| ElmError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(fallback_line),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
        let perr = |message: String| ElmError::Parse { line, message };
        if rec.len() != 7 {
            return Err(perr(format!("expected 7 fields, found {}", rec.len())));
        }
        let cycle: i64 = rec[0].parse().map_err(|_| perr(format!("invalid cycle '{}'", &rec[0])))?;
        if last_cycle.is_some_and(|c| cycle <= c) {
            return Err(perr(format!("cycle {cycle} is not increasing")));
        }
        last_cycle = Some(cycle);
        let mut vals = [0.0f64; 5];
        for (j, v) in vals.iter_mut().enumerate() {
            let f = &rec[j + 1];
            *v = f.parse().map_err(|_| perr(format!("invalid number '{f}'")))?;
            if !v.is_finite() {
                return Err(perr(format!("non-finite value '{f}'")));
            }
        }
        let label: i64 = rec[6].parse().map_err(|_| perr(format!("invalid label '{}'", &rec[6])))?;
        labels.push(Label::from_i64(label).map_err(|e| perr(e.to_string()))?);
        u.extend_from_slice(&vals[..INPUT_CHANNELS]);
        y.extend_from_slice(&vals[INPUT_CHANNELS..]);
    }
    if labels.is_empty() {
        return Err(ElmError::Parse {
            line: 2,
            message: "data file has no rows".into(),
        });
    }
    let t = labels.len();
    Ok(LabeledSeries {
        u: DMatrix::from_row_slice(t, INPUT_CHANNELS, &u),
        y: DMatrix::from_row_slice(t, OUTPUT_CHANNELS, &y),
        labels,
    })
}
