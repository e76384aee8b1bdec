//! Result files: CSV with a provenance header, and JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rug::Float;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = concat!("giet-cli/", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug)]
pub struct Provenance {
    pub config_sha256: String,
    pub precision_bits: u32,
}

impl Provenance {
    pub fn new(config_text: &str, precision_bits: u32) -> Self {
        let digest = Sha256::digest(config_text.as_bytes());
        Provenance {
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            precision_bits,
        }
    }

    fn header(&self) -> String {
        format!(
            "# config_sha256={} precision_bits={} version={}\n",
            self.config_sha256, self.precision_bits, VERSION
        )
    }
}

pub struct Output {
    pub dir: PathBuf,
    pub prov: Provenance,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, prov: Provenance) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            prov,
            written: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut buf = self.prov.header().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(|e| CliError::Other(e.to_string()))?;
            for r in rows {
                w.write_record(r).map_err(|e| CliError::Other(e.to_string()))?;
            }
            w.flush()?;
        }
        fs::write(&path, buf)?;
        self.written.push(path);
        Ok(())
    }

    /// `n, value` rows.
    pub fn series(&mut self, name: &str, series: &[(usize, f64)]) -> Result<(), CliError> {
        let rows: Vec<Vec<String>> = series.iter().map(|(n, v)| vec![n.to_string(), dec(*v)]).collect();
        self.csv(name, &["n".into(), "value".into()], &rows)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            provenance: Prov<'a>,
            #[serde(flatten)]
            body: &'a T,
        }
        #[derive(Serialize)]
        struct Prov<'a> {
            config_sha256: &'a str,
            precision_bits: u32,
            version: &'a str,
        }
        let w = Wrapped {
            provenance: Prov {
                config_sha256: &self.prov.config_sha256,
                precision_bits: self.prov.precision_bits,
                version: VERSION,
            },
            body: value,
        };
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, &w).map_err(|e| CliError::Other(e.to_string()))?;
        f.write_all(b"\n")?;
        self.written.push(path);
        Ok(())
    }
}

/// Positional decimal of an f64, with every digit of its shortest round-trip form.
pub fn dec(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        x.to_string()
    }
}

/// Positional decimal of a Float with as many digits as its precision carries.
pub fn dec_float(x: &Float) -> String {
    if !x.is_normal() {
        return if x.is_zero() { "0".into() } else { x.to_string() };
    }
    let digits = (x.prec() as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1;
    let s = x.to_string_radix(10, Some(digits));
    let (mant, exp) = match s.split_once('e') {
        Some((m, e)) => (m, e.parse::<i64>().unwrap_or(0)),
        None => (s.as_str(), 0),
    };
    let (sign, mant) = match mant.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mant),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let all: String = format!("{int}{frac}");
    let point = int.len() as i64 + exp;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), all)
    } else if point as usize >= all.len() {
        format!("{all}{}", "0".repeat(point as usize - all.len()))
    } else {
        format!("{}.{}", &all[..point as usize], &all[point as usize..])
    };
    let body = if body.contains('.') {
        body.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        body
    };
    format!("{sign}{body}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_are_positional() {
        assert_eq!(dec(1e-20), "0.00000000000000000001");
        assert_eq!(dec(0.25), "0.25");
        let third = Float::with_val(128, 1) / 3u32;
        let s = dec_float(&third);
        assert!(s.starts_with("0.3333333333333333333333333333333333333"), "{s}");
        assert!(!s.contains('e'));
        assert_eq!(dec_float(&Float::with_val(64, -0.001953125)), "-0.001953125");
        let inexact = Float::with_val(64, -1.5e-3);
        assert_eq!(Float::with_val(64, Float::parse(dec_float(&inexact)).unwrap()), inexact);
        assert_eq!(dec_float(&Float::with_val(64, 1234.0)), "1234");
        assert_eq!(dec_float(&Float::with_val(64, 0)), "0");
        let back = Float::with_val(128, Float::parse(dec_float(&third)).unwrap());
        assert_eq!(back, third);
    }
}
