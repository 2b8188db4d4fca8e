//! CSV artifacts, long-format plot data and the run manifest.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Nine significant digits, without exponent for moderate magnitudes and
/// with trailing zeros removed.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };
    if !(-5..16).contains(&exp) {
        let d = digits.trim_end_matches('0');
        let (head, tail) = d.split_at(1);
        return if tail.is_empty() {
            format!("{sign}{head}e{exp}")
        } else {
            format!("{sign}{head}.{tail}e{exp}")
        };
    }
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let point = exp as usize + 1;
        if point >= digits.len() {
            format!("{digits}{}", "0".repeat(point - digits.len()))
        } else {
            format!("{}.{}", &digits[..point], &digits[point..])
        }
    };
    let body = if body.contains('.') {
        body.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        body
    };
    format!("{sign}{body}")
}

/// Numeric CSV file with a fixed header.
pub struct CsvSink {
    writer: csv::Writer<BufWriter<File>>,
    width: usize,
}

impl CsvSink {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> io::Result<Self> {
        let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        writer.write_record(header.iter().map(|h| h.as_ref()))?;
        Ok(Self {
            writer,
            width: header.len(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> io::Result<()> {
        debug_assert_eq!(values.len(), self.width);
        self.writer.write_record(values.iter().map(|&v| fmt_num(v)))?;
        Ok(())
    }

    /// Row whose first field is text.
    pub fn labelled_row(&mut self, label: &str, values: &[f64]) -> io::Result<()> {
        debug_assert_eq!(values.len() + 1, self.width);
        let mut record = Vec::with_capacity(self.width);
        record.push(label.to_string());
        record.extend(values.iter().map(|&v| fmt_num(v)));
        self.writer.write_record(&record)?;
        Ok(())
    }

    /// Pre-formatted fields.
    pub fn raw_row(&mut self, fields: &[String]) -> io::Result<()> {
        debug_assert_eq!(fields.len(), self.width);
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

/// A named `y(x)` series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            x,
            y,
        }
    }
}

/// Long-format `series, x, y` file.
pub fn emit_plotdata(path: &Path, series: &[Series]) -> io::Result<()> {
    let mut sink = CsvSink::create(path, &["series", "x", "y"])?;
    for s in series {
        for (&x, &y) in s.x.iter().zip(&s.y) {
            sink.labelled_row(&s.name, &[x, y])?;
        }
    }
    sink.finish()
}

/// Writes `manifest.txt`: comment lines followed by the resolved
/// configuration, so the file itself can be passed back via `--config`.
pub fn write_manifest(path: &Path, subcommand: &str, config_toml: &str) -> io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# mfsync {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "# subcommand: {subcommand}")?;
    writeln!(f, "# reproduce: mfsync {subcommand} --config manifest.txt")?;
    writeln!(f)?;
    f.write_all(config_toml.as_bytes())?;
    f.flush()
}
