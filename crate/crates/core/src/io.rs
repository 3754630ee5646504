//! File loading and result emission.

use std::cmp::Ordering;
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::simulate::CurvePoint;

/// Formats like C's `%.6g`: six significant digits, trailing zeros dropped,
/// exponent notation outside `[1e-4, 1e6)`.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    Dataset::from_json(&text)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset.to_json())?;
    Ok(())
}

pub const CURVE_HEADER: &str = "strategy,alpha,seed,budget_s,budget_h,n_instances_labeled,\
n_frames_labeled,mean_label_iou,frac_correct,label_pq,label_sq,label_rq,trainer_quality";

fn canonical_order(a: &CurvePoint, b: &CurvePoint) -> Ordering {
    a.strategy
        .cmp(&b.strategy)
        .then(a.alpha.unwrap_or(-1.0).total_cmp(&b.alpha.unwrap_or(-1.0)))
        .then(a.seed.cmp(&b.seed))
        .then(a.budget_s.total_cmp(&b.budget_s))
}

/// Curve rows sorted by (strategy, budget), with a header line. Absent
/// values are written as empty fields.
pub fn curves_csv(points: &[CurvePoint]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_sig6).unwrap_or_default();
    let mut sorted: Vec<&CurvePoint> = points.iter().collect();
    sorted.sort_by(|a, b| canonical_order(a, b));
    let mut out = String::with_capacity(64 * (points.len() + 1));
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for p in sorted {
        let q = p.quality;
        let row = [
            p.strategy.clone(),
            opt(p.alpha),
            p.seed.to_string(),
            fmt_sig6(p.budget_s),
            fmt_sig6(p.budget_h()),
            p.n_instances_labeled.to_string(),
            p.n_frames_labeled.to_string(),
            opt(q.map(|q| q.mean_label_iou)),
            opt(q.map(|q| q.frac_correct)),
            opt(q.map(|q| q.label_pq.pq)),
            opt(q.map(|q| q.label_pq.sq)),
            opt(q.map(|q| q.label_pq.rq)),
            opt(p.trainer_quality),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_curves_csv(points: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no curve points to write".into()));
    }
    std::fs::write(path, curves_csv(points))?;
    Ok(())
}

/// Parses `start:stop:step` (inclusive of `stop` when reached) or a
/// comma-separated list of seconds.
pub fn parse_budgets(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("bad budget spec `{spec}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let budgets: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| start + k as f64 * step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(bad());
    }
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("budgets must be ascending".into()));
    }
    Ok(budgets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(0.5), "0.5");
        assert_eq!(fmt_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig6(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_sig6(3600.0), "3600");
        assert_eq!(fmt_sig6(123456.7), "123457");
        assert_eq!(fmt_sig6(999999.5), "1e+06");
        assert_eq!(fmt_sig6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_sig6(0.0001), "0.0001");
        assert_eq!(fmt_sig6(0.00001234), "1.234e-05");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
        assert_eq!(fmt_sig6(1.1111111), "1.11111");
    }

    #[test]
    fn budgets() {
        assert_eq!(parse_budgets("0:10:5").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(parse_budgets("0:12:5").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(parse_budgets("0:0.3:0.1").unwrap().len(), 4);
        assert_eq!(parse_budgets("3,40, 100").unwrap(), vec![3.0, 40.0, 100.0]);
        assert!(parse_budgets("10,3").is_err());
        assert!(parse_budgets("0:10:0").is_err());
        assert!(parse_budgets("0:10").is_err());
        assert!(parse_budgets("-1").is_err());
        assert!(parse_budgets("x").is_err());
    }

    fn point(strategy: &str, budget: f64) -> CurvePoint {
        CurvePoint {
            strategy: strategy.into(),
            alpha: None,
            seed: 7,
            budget_s: budget,
            n_instances_labeled: 0,
            n_frames_labeled: 0,
            quality: None,
            trainer_quality: None,
        }
    }

    #[test]
    fn csv_single_row() {
        let csv = curves_csv(&[point("FbF-BB", 0.0)]);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "FbF-BB,,7,0,0,0,0,,,,,,");
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
    }

    #[test]
    fn csv_rows_sorted() {
        let csv = curves_csv(&[
            point("FbF-M", 10.0),
            point("FbF-BB", 20.0),
            point("FbF-BB", 5.0),
        ]);
        let keys: Vec<String> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(keys, vec!["FbF-BB,,7,5", "FbF-BB,,7,20", "FbF-M,,7,10"]);
    }

    #[test]
    fn write_rejects_empty_and_bad_path() {
        assert!(write_curves_csv(&[], "/tmp/never.csv").is_err());
        let r = write_curves_csv(&[point("FbF-BB", 0.0)], "/nonexistent-dir/x.csv");
        assert!(matches!(r, Err(Error::Io(_))));
    }
}
