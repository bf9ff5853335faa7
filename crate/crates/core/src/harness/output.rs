//! Sweep results and their CSV form.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

use super::scenario::SweepAxis;

pub const CSV_HEADER: &str =
    "sweep_axis,sweep_value,detector,mode,class_id,metric,value,trials,errors,flops";

/// A class index (1-based in output) or the aggregate over classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassId {
    Class(usize),
    All,
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassId::Class(n) => write!(f, "{}", n + 1),
            ClassId::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub detector: String,
    pub mode: String,
    pub class_id: ClassId,
    pub metric: String,
    pub value: f64,
    pub trials: Option<u64>,
    pub errors: Option<u64>,
    pub flops: Option<f64>,
}

impl ResultRow {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.sweep_value
            .total_cmp(&other.sweep_value)
            .then_with(|| self.detector.cmp(&other.detector))
            .then_with(|| self.mode.cmp(&other.mode))
            .then_with(|| self.class_id.cmp(&other.class_id))
            .then_with(|| self.metric.cmp(&other.metric))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<ResultRow>,
}

impl SweepResult {
    pub fn new(axis: SweepAxis) -> Self {
        Self {
            axis,
            rows: Vec::new(),
        }
    }

    pub fn sort(&mut self) {
        self.rows.sort_by(ResultRow::key_cmp);
    }

    /// Rows must be uniquely keyed, BER within `[0, 1]` and rates `>= 0`.
    pub fn validate(&self) -> Result<()> {
        let mut sorted: Vec<&ResultRow> = self.rows.iter().collect();
        sorted.sort_by(|a, b| a.key_cmp(b));
        if let Some(w) = sorted
            .windows(2)
            .find(|w| w[0].key_cmp(w[1]) == Ordering::Equal)
        {
            return Err(Error::Numeric(format!(
                "duplicate result row {} {} {} {} at {}",
                w[0].detector, w[0].mode, w[0].class_id, w[0].metric, w[0].sweep_value
            )));
        }
        for row in &self.rows {
            let ok = match row.metric.as_str() {
                "ber" => (0.0..=1.0).contains(&row.value),
                _ => row.value >= 0.0,
            };
            if !ok {
                return Err(Error::Numeric(format!(
                    "{} = {} out of range for {} {}",
                    row.metric, row.value, row.detector, row.mode
                )));
            }
        }
        Ok(())
    }

    /// Looks up one value.
    pub fn value(
        &self,
        sweep_value: f64,
        detector: &str,
        mode: &str,
        class_id: ClassId,
        metric: &str,
    ) -> Option<f64> {
        self.find(sweep_value, detector, mode, class_id, metric)
            .map(|r| r.value)
    }

    pub fn find(
        &self,
        sweep_value: f64,
        detector: &str,
        mode: &str,
        class_id: ClassId,
        metric: &str,
    ) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.sweep_value == sweep_value
                && r.detector == detector
                && r.mode == mode
                && r.class_id == class_id
                && r.metric == metric
        })
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<&ResultRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.key_cmp(b));
        let mut out = String::with_capacity(64 * (rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        let opt_int = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in rows {
            let fields = [
                self.axis.label().to_string(),
                format_decimal(r.sweep_value),
                r.detector.clone(),
                r.mode.clone(),
                r.class_id.to_string(),
                r.metric.clone(),
                format_decimal(r.value),
                opt_int(r.trials),
                opt_int(r.errors),
                r.flops.map(format_decimal).unwrap_or_default(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes `result` as CSV to `path`.
pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, result.to_csv()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Shortest rendering of `v` rounded to 12 significant digits, in fixed
/// notation for exponents in `-5..12` and scientific otherwise.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sweep_value: f64, detector: &str, class_id: ClassId) -> ResultRow {
        ResultRow {
            sweep_value,
            detector: detector.into(),
            mode: "decoupled".into(),
            class_id,
            metric: "ber".into(),
            value: 0.125,
            trials: Some(800),
            errors: Some(100),
            flops: Some(1234.5),
        }
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(0.0), "0");
        assert_eq!(format_decimal(0.125), "0.125");
        assert_eq!(format_decimal(10.0), "10");
        assert_eq!(format_decimal(175104.0), "175104");
        assert_eq!(format_decimal(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_decimal(16.0 / 3.0), "5.33333333333");
        assert_eq!(format_decimal(-2.5), "-2.5");
        assert_eq!(format_decimal(1.5e-7), "1.5e-7");
        assert_eq!(format_decimal(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_decimal(0.1 + 0.2), "0.3");
    }

    #[test]
    fn empty_result_is_header_only() {
        let csv = SweepResult::new(SweepAxis::SnrDb).to_csv();
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn one_row_gives_two_lines() {
        let mut result = SweepResult::new(SweepAxis::SnrDb);
        result.rows.push(row(10.0, "mmse", ClassId::All));
        let csv = result.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "snr_db,10,mmse,decoupled,all,ber,0.125,800,100,1234.5"
        );
    }

    #[test]
    fn rows_sorted_with_numeric_classes_and_aggregate_last() {
        let mut result = SweepResult::new(SweepAxis::NR);
        for (v, d, c) in [
            (64.0, "zf", ClassId::All),
            (32.0, "zf", ClassId::Class(10)),
            (32.0, "zf", ClassId::All),
            (32.0, "zf", ClassId::Class(1)),
            (32.0, "mmse", ClassId::All),
        ] {
            result.rows.push(row(v, d, c));
        }
        let csv = result.to_csv();
        let keys: Vec<String> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(5).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(
            keys,
            [
                "n_r,32,mmse,decoupled,all",
                "n_r,32,zf,decoupled,2",
                "n_r,32,zf,decoupled,11",
                "n_r,32,zf,decoupled,all",
                "n_r,64,zf,decoupled,all"
            ]
        );
        assert_eq!(csv, result.to_csv());
    }

    #[test]
    fn validation_catches_duplicates_and_ranges() {
        let mut result = SweepResult::new(SweepAxis::SnrDb);
        result.rows.push(row(1.0, "mmse", ClassId::All));
        assert!(result.validate().is_ok());
        result.rows.push(row(1.0, "mmse", ClassId::All));
        assert!(result.validate().is_err());
        result.rows.pop();
        result.rows[0].value = 1.5;
        assert!(result.validate().is_err());
    }

    #[test]
    fn emit_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let mut result = SweepResult::new(SweepAxis::SnrDb);
        result.rows.push(row(1.0, "mmse", ClassId::All));
        emit_csv(&result, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        emit_csv(&result, &path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
        assert!(matches!(
            emit_csv(&result, &dir.path().join("missing/out.csv")),
            Err(Error::Io { .. })
        ));
    }
}
