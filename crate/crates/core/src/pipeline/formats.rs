//! `demo-v1` and `tactile-v1` files.
//!
//! A demo file is a commented header followed by CSV:
//!
//! ```text
//! # demo-v1
//! # dims 4
//! # dt 5.0000000000000001e-3
//! # labels thumb index middle ring_little
//! # status complete
//! time,thumb,index,middle,ring_little
//! 0.0000000000000000e0,...
//! ```
//!
//! `status` is `partial` when the transport ended before the requested
//! duration was covered.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Demonstration;
use crate::protocol::CHANNELS;
use crate::textfmt::{fmt_f64, parse_f64, parse_usize, Lines};

pub const DEMO_HEADER: &str = "demo-v1";
pub const TACTILE_HEADER: &str = "tactile-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct DemoFile {
    pub labels: Vec<String>,
    pub dt: f64,
    /// `T x D` joint angles, rad.
    pub values: DMatrix<f64>,
    pub partial: bool,
}

impl DemoFile {
    pub fn new(labels: Vec<String>, dt: f64, values: DMatrix<f64>) -> Result<Self> {
        let file = DemoFile {
            labels,
            dt,
            values,
            partial: false,
        };
        file.validate()?;
        Ok(file)
    }

    fn validate(&self) -> Result<()> {
        if self.labels.len() != self.values.ncols() || self.labels.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} columns",
                self.labels.len(),
                self.values.ncols()
            )));
        }
        if let Some(l) = self
            .labels
            .iter()
            .find(|l| l.is_empty() || l.contains(|c: char| c.is_whitespace() || c == ','))
        {
            return Err(Error::invalid(format!("bad joint label {l:?}")));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.values.nrows() < 2 {
            return Err(Error::invalid("demo needs at least 2 rows"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("demo contains non-finite values"));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn to_demonstration(&self) -> Result<Demonstration> {
        Demonstration::new(self.values.clone(), self.dt)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# {DEMO_HEADER}\n# dims {}\n# dt {}\n# labels {}\n# status {}\ntime,{}\n",
            self.dims(),
            fmt_f64(self.dt),
            self.labels.join(" "),
            if self.partial { "partial" } else { "complete" },
            self.labels.join(",")
        );
        for (i, row) in self.values.row_iter().enumerate() {
            out.push_str(&fmt_f64(i as f64 * self.dt));
            for v in row.iter() {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.expect_line(key)?;
            let body = line
                .strip_prefix('#')
                .ok_or_else(|| Error::parse(format!("expected `# {key}` header line")))?;
            let mut toks = body.split_whitespace();
            if toks.next() != Some(key) {
                return Err(Error::parse(format!(
                    "expected `# {key}` header line, got {line:?}"
                )));
            }
            Ok(toks.map(String::from).collect())
        };
        header(DEMO_HEADER)?;
        let dims = match &header("dims")?[..] {
            [d] => parse_usize(d, "dims")?,
            _ => return Err(Error::parse("`dims` takes one value")),
        };
        let dt = match &header("dt")?[..] {
            [d] => parse_f64(d, "dt")?,
            _ => return Err(Error::parse("`dt` takes one value")),
        };
        let labels = header("labels")?;
        let partial = match &header("status")?[..] {
            [s] if s == "complete" => false,
            [s] if s == "partial" => true,
            other => return Err(Error::parse(format!("bad status {other:?}"))),
        };
        if labels.len() != dims {
            return Err(Error::ShapeMismatch(format!(
                "header declares {dims} dims but {} labels",
                labels.len()
            )));
        }
        let columns = lines.expect_line("column header")?;
        let expected_cols = format!("time,{}", labels.join(","));
        if columns != expected_cols {
            return Err(Error::parse(format!(
                "column header {columns:?} does not match labels"
            )));
        }
        let mut data = Vec::new();
        let mut rows = 0usize;
        while let Some(line) = lines.next_line() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dims + 1 {
                return Err(Error::parse(format!(
                    "line {}: expected {} fields, found {}",
                    lines.line_no(),
                    dims + 1,
                    fields.len()
                )));
            }
            let time = parse_f64(fields[0], "time")?;
            let expected = rows as f64 * dt;
            if (time - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::parse(format!(
                    "line {}: time {time} breaks the fixed step {dt}",
                    lines.line_no()
                )));
            }
            for f in &fields[1..] {
                data.push(parse_f64(f, "angle")?);
            }
            rows += 1;
        }
        let values = DMatrix::from_row_slice(rows, dims, &data);
        let file = DemoFile {
            labels,
            dt,
            values,
            partial,
        };
        file.validate()?;
        Ok(file)
    }
}

/// Scripted fingertip forces, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileProfile {
    pub samples: Vec<(f64, [f64; CHANNELS])>,
}

impl TactileProfile {
    pub fn to_text(&self) -> String {
        let mut out = format!("{TACTILE_HEADER}\ntime,f_thumb,f_index,f_middle,f_ring,f_little\n");
        for (t, f) in &self.samples {
            out.push_str(&fmt_f64(*t));
            for v in f {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        if lines.expect_line("header")?.trim() != TACTILE_HEADER {
            return Err(Error::parse(format!("missing `{TACTILE_HEADER}` header")));
        }
        lines.expect_line("column header")?;
        let mut samples = Vec::new();
        let mut last = f64::NEG_INFINITY;
        while let Some(line) = lines.next_line() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != CHANNELS + 1 {
                return Err(Error::parse(format!(
                    "line {}: expected {} fields",
                    lines.line_no(),
                    CHANNELS + 1
                )));
            }
            let t = parse_f64(fields[0], "time")?;
            if t < last {
                return Err(Error::parse(format!(
                    "line {}: time goes backwards",
                    lines.line_no()
                )));
            }
            last = t;
            let mut f = [0.0; CHANNELS];
            for (x, tok) in f.iter_mut().zip(&fields[1..]) {
                *x = parse_f64(tok, "force")?;
            }
            samples.push((t, f));
        }
        Ok(TactileProfile { samples })
    }
}
