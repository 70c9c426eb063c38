//! Per-trial metric rows, aggregation, and their CSV encodings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str =
    "experiment,method,n,trial,err_L_fro,err_S_fro,err_Theta_fro,sin_theta,iters,converged,wall_ms";
pub const AGGREGATE_HEADER: &str =
    "method,n,mean_err_L,stderr_err_L,mean_sin_theta,stderr_sin_theta,trials";

/// Estimators compared in the experiments, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Transfer,
    Nontransfer,
    Pca,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Transfer, Method::Nontransfer, Method::Pca];

    pub fn name(self) -> &'static str {
        match self {
            Method::Transfer => "transfer",
            Method::Nontransfer => "nontransfer",
            Method::Pca => "pca",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transfer" => Ok(Method::Transfer),
            "nontransfer" => Ok(Method::Nontransfer),
            "pca" => Ok(Method::Pca),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub experiment: String,
    pub method: Method,
    /// Target sample size or trajectory length.
    pub n: usize,
    pub trial: usize,
    pub err_l_fro: f64,
    pub err_s_fro: f64,
    pub err_theta_fro: f64,
    pub sin_theta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
}

impl MetricsRecord {
    fn sort_key(&self) -> (usize, usize, Method) {
        (self.n, self.trial, self.method)
    }
}

/// Sorts rows by `(n, trial, method)`.
pub fn sort_records(rows: &mut [MetricsRecord]) {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

pub fn format_results(rows: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.method,
            r.n,
            r.trial,
            r.err_l_fro,
            r.err_s_fro,
            r.err_theta_fro,
            r.sin_theta,
            r.iterations,
            r.converged,
            r.wall_ms
        );
    }
    out
}

pub fn parse_results(text: &str) -> Result<Vec<MetricsRecord>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: None,
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RESULTS_HEADER => {}
        _ => return Err(err(1, "missing results header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(err(ln, format!("expected 11 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(ln, format!("bad number `{s}`")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| err(ln, format!("bad integer `{s}`")));
        rows.push(MetricsRecord {
            experiment: f[0].to_string(),
            method: f[1].parse().map_err(|_| err(ln, format!("bad method `{}`", f[1])))?,
            n: int(f[2])?,
            trial: int(f[3])?,
            err_l_fro: num(f[4])?,
            err_s_fro: num(f[5])?,
            err_theta_fro: num(f[6])?,
            sin_theta: num(f[7])?,
            iterations: int(f[8])?,
            converged: f[9]
                .parse()
                .map_err(|_| err(ln, format!("bad flag `{}`", f[9])))?,
            wall_ms: num(f[10])?,
        });
    }
    Ok(rows)
}

/// Mean and standard error (sample standard deviation over `sqrt(k)`).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub n: usize,
    pub mean_err_l: f64,
    pub stderr_err_l: f64,
    pub mean_sin_theta: f64,
    pub stderr_sin_theta: f64,
    pub trials: usize,
}

/// Per `(n, method)` summaries, ordered by `n` then method.
pub fn aggregate(rows: &[MetricsRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, Method), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.n, r.method)).or_default();
        g.0.push(r.err_l_fro);
        g.1.push(r.sin_theta);
    }
    groups
        .into_iter()
        .map(|((n, method), (l, s))| {
            let (mean_err_l, stderr_err_l) = mean_stderr(&l);
            let (mean_sin_theta, stderr_sin_theta) = mean_stderr(&s);
            AggregateRow {
                method,
                n,
                mean_err_l,
                stderr_err_l,
                mean_sin_theta,
                stderr_sin_theta,
                trials: l.len(),
            }
        })
        .collect()
}

pub fn format_aggregate(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for a in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            a.method, a.n, a.mean_err_l, a.stderr_err_l, a.mean_sin_theta, a.stderr_sin_theta, a.trials
        );
    }
    out
}

pub fn parse_aggregate(text: &str) -> Result<Vec<AggregateRow>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: None,
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == AGGREGATE_HEADER => {}
        _ => return Err(err(1, "missing aggregate header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(ln, format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(ln, format!("bad number `{s}`")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| err(ln, format!("bad integer `{s}`")));
        rows.push(AggregateRow {
            method: f[0].parse().map_err(|_| err(ln, format!("bad method `{}`", f[0])))?,
            n: int(f[1])?,
            mean_err_l: num(f[2])?,
            stderr_err_l: num(f[3])?,
            mean_sin_theta: num(f[4])?,
            stderr_sin_theta: num(f[5])?,
            trials: int(f[6])?,
        });
    }
    Ok(rows)
}

/// Recomputes the aggregate from `results_csv` independently and compares it
/// with `aggregate_csv`. Means must agree to a few ulps.
pub fn verify_aggregate(results_csv: &str, aggregate_csv: &str) -> Result<()> {
    let rows = parse_results(results_csv)?;
    let agg = parse_aggregate(aggregate_csv)?;
    let mut sums: BTreeMap<(usize, Method), (f64, f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = sums.entry((r.n, r.method)).or_insert((0.0, 0.0, 0));
        e.0 += r.err_l_fro;
        e.1 += r.sin_theta;
        e.2 += 1;
    }
    if sums.len() != agg.len() {
        return Err(Error::invalid(format!(
            "aggregate has {} groups, results imply {}",
            agg.len(),
            sums.len()
        )));
    }
    for a in &agg {
        let (sl, ss, k) = sums
            .get(&(a.n, a.method))
            .copied()
            .ok_or_else(|| Error::invalid(format!("aggregate group ({}, {}) has no rows", a.method, a.n)))?;
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
        if k != a.trials || !close(sl / k as f64, a.mean_err_l) || !close(ss / k as f64, a.mean_sin_theta) {
            return Err(Error::invalid(format!(
                "aggregate mismatch for ({}, {})",
                a.method, a.n
            )));
        }
    }
    Ok(())
}
