//! Argument and input-file parsers.

use std::ops::Range;

use anyhow::{bail, Context};
use mol_core::{DenseMatrix, GatingFunction, Method};

/// `brute_force`, `exact`, `per_embedding:N`, `average:N`, `combined:N1,N2`.
pub fn method(s: &str) -> Result<Method, String> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(n, a)| (n, Some(a)));
    let count = |a: Option<&str>| -> Result<usize, String> {
        a.ok_or_else(|| format!("{name} needs a budget, e.g. {name}:100"))?
            .trim()
            .parse()
            .map_err(|e| format!("bad budget in {s:?}: {e}"))
    };
    match name {
        "brute_force" | "brute" => Ok(Method::BruteForce),
        "exact" => Ok(Method::Exact),
        "per_embedding" => Ok(Method::PerEmbedding { n: count(arg)? }),
        "average" => Ok(Method::Average { n: count(arg)? }),
        "combined" => {
            let (n1, n2) = arg
                .and_then(|a| a.split_once(','))
                .ok_or_else(|| "combined needs two budgets, e.g. combined:5,200".to_string())?;
            Ok(Method::Combined {
                n1: count(Some(n1))?,
                n2: count(Some(n2))?,
            })
        }
        _ => Err(format!(
            "unknown method {name:?}; expected brute_force, exact, per_embedding:N, average:N or combined:N1,N2"
        )),
    }
}

/// `uniform`, `argmax`, `softmax:T`.
pub fn gate(s: &str) -> Result<GatingFunction, String> {
    match s.split_once(':') {
        None if s == "uniform" => Ok(GatingFunction::Uniform),
        None if s == "argmax" => Ok(GatingFunction::ArgmaxOneHot),
        Some(("softmax", t)) => {
            let t: f64 = t.parse().map_err(|e| format!("bad temperature {t:?}: {e}"))?;
            GatingFunction::softmax(t).map_err(|e| e.to_string())
        }
        _ => Err(format!("unknown gate {s:?}; expected uniform, argmax or softmax:T")),
    }
}

/// `A..B`, half open.
pub fn seed_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let start: u64 = a.parse().map_err(|e| format!("bad range start {a:?}: {e}"))?;
    let end: u64 = b.parse().map_err(|e| format!("bad range end {b:?}: {e}"))?;
    if end <= start {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(start..end)
}

/// One matrix row per line; values separated by commas or whitespace. Blank
/// lines and `#` comments are skipped.
pub fn matrix(text: &str) -> anyhow::Result<DenseMatrix> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in lines {
        let row = if line.contains(',') {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .from_reader(line.as_bytes());
            let record = reader
                .records()
                .next()
                .transpose()
                .with_context(|| format!("line {line_no}"))?
                .unwrap_or_default();
            record
                .iter()
                .map(|v| v.parse::<f64>().with_context(|| format!("line {line_no}: bad value {v:?}")))
                .collect::<anyhow::Result<Vec<_>>>()?
        } else {
            line.split_whitespace()
                .map(|v| v.parse::<f64>().with_context(|| format!("line {line_no}: bad value {v:?}")))
                .collect::<anyhow::Result<Vec<_>>>()?
        };
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!("line {line_no}: {} values, expected {}", row.len(), first.len());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("no matrix rows found");
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methods() {
        assert_eq!(method("exact").unwrap(), Method::Exact);
        assert_eq!(method("average:1000").unwrap(), Method::Average { n: 1000 });
        assert_eq!(method("combined:5,200").unwrap(), Method::Combined { n1: 5, n2: 200 });
        assert!(method("average").is_err());
        assert!(method("combined:5").is_err());
        assert!(method("nearest").is_err());
    }

    #[test]
    fn gates() {
        assert_eq!(gate("uniform").unwrap(), GatingFunction::Uniform);
        assert_eq!(gate("softmax:0.2").unwrap(), GatingFunction::SoftmaxDots { temperature: 0.2 });
        assert!(gate("softmax:-1").is_err());
        assert!(gate("table").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(seed_range("0..10").unwrap(), 0..10);
        assert!(seed_range("5..5").is_err());
        assert!(seed_range("5").is_err());
    }

    #[test]
    fn matrix_formats() {
        let csv = matrix("# header comment\n1, 2, 3\n4,5,6\n").unwrap();
        let ws = matrix("1 2 3\n\n4\t5 6\n").unwrap();
        assert_eq!(csv, ws);
        assert_eq!((csv.rows, csv.cols), (2, 3));
        assert!(matrix("1 2\n3\n").is_err());
        assert!(matrix("1 x\n").is_err());
        assert!(matrix("\n").is_err());
    }
}
