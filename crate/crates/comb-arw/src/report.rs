//! Machine-readable output: the significant-digit float format, the CSV
//! contract (comma separator, `\n` line endings, mandatory header), and the
//! provenance block embedded in every report so a run can be reproduced from
//! its output alone.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Format with exactly ten significant digits, plain decimal notation in a
/// readable magnitude range and scientific notation outside it. This is the
/// CSV float format; identical inputs format identically on every platform.
pub fn fmt_sig10(x: f64) -> String {
    if x == 0.0 {
        return "0.000000000".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..=11).contains(&mag) {
        return format!("{x:.9e}");
    }
    let decimals = (9 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Human-facing variant of [`fmt_sig10`]: trailing zeros trimmed, at least
/// one decimal kept, so a clean value prints cleanly (`2.0`, `0.6`).
pub fn fmt_trim(x: f64) -> String {
    let s = fmt_sig10(x);
    let trim = |t: &str| -> String {
        if !t.contains('.') {
            return t.to_string();
        }
        let mut t = t.trim_end_matches('0').to_string();
        if t.ends_with('.') {
            t.push('0');
        }
        t
    };
    match s.split_once('e') {
        Some((mantissa, exp)) => format!("{}e{exp}", trim(mantissa)),
        None => trim(&s),
    }
}

/// Incremental CSV builder enforcing the output contract.
pub struct Csv {
    columns: usize,
    body: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut body = header.join(",");
        body.push('\n');
        Csv { columns: header.len(), body }
    }

    /// Append one data row; field counts are checked against the header.
    pub fn row<I>(&mut self, fields: I)
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        let mut n = 0;
        for (i, f) in fields.into_iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            self.body.push_str(f.as_ref());
            n += 1;
        }
        assert_eq!(n, self.columns, "CSV row width must match the header");
        self.body.push('\n');
    }

    pub fn into_string(self) -> String {
        self.body
    }
}

/// Reproducibility record embedded in every report: the command, the seed,
/// the fully resolved parameters, and a content hash over all of them.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, params: &[(&str, String)]) -> Self {
        let map: BTreeMap<String, String> =
            params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let mut canonical = format!("command={command}\nseed={seed}\n");
        for (k, v) in &map {
            canonical.push_str(k);
            canonical.push('=');
            canonical.push_str(v);
            canonical.push('\n');
        }
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Provenance {
            command: command.to_string(),
            seed,
            params: map,
            config_hash: format!("sha256:{hex}"),
        }
    }
}

/// Pretty-print a JSON report with a trailing newline (key order is the
/// serializer's stable order, so identical reports are byte-identical).
pub fn emit_json(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits_across_magnitudes() {
        assert_eq!(fmt_sig10(2.0), "2.000000000");
        assert_eq!(fmt_sig10(0.6), "0.6000000000");
        assert_eq!(fmt_sig10(123.456), "123.4560000");
        assert_eq!(fmt_sig10(0.0), "0.000000000");
        assert_eq!(fmt_sig10(-0.25), "-0.2500000000");
        assert_eq!(fmt_sig10(0.00005), "5.000000000e-5");
    }

    #[test]
    fn trimmed_form_keeps_one_decimal() {
        assert_eq!(fmt_trim(2.0), "2.0");
        assert_eq!(fmt_trim(0.6), "0.6");
        assert_eq!(fmt_trim(123.456), "123.456");
        assert_eq!(fmt_trim(0.00005), "5.0e-5");
    }

    #[test]
    fn csv_rows_join_with_commas_and_newlines() {
        let mut csv = Csv::new(&["step", "S", "T", "B"]);
        csv.row(["1", "3", "2", "1"]);
        csv.row(["2", "4", "2", "2"]);
        assert_eq!(csv.into_string(), "step,S,T,B\n1,3,2,1\n2,4,2,2\n");
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn csv_rejects_ragged_rows() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(["1"]);
    }

    #[test]
    fn provenance_hash_tracks_content() {
        let a = Provenance::new("rho", 271_828, &[("k", "10".into()), ("law", "nu1".into())]);
        let b = Provenance::new("rho", 271_828, &[("k", "10".into()), ("law", "nu1".into())]);
        let c = Provenance::new("rho", 271_828, &[("k", "11".into()), ("law", "nu1".into())]);
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        assert!(a.config_hash.starts_with("sha256:"));
        assert_eq!(a.config_hash.len(), 7 + 64);
    }
}
