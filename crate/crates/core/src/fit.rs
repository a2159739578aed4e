//! Scaling exponents from sweep CSVs: log of transmissions at the first
//! record reaching the target ratio against log n.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use crate::engine::{Algorithm, CSV_HEADER};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub algorithm: Algorithm,
    pub slope: f64,
    pub std_err: f64,
    pub intercept: f64,
    /// `(n, median transmissions over seeds)`, ascending in n.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    pub fits: Vec<ScalingFit>,
    /// Runs that never reached the target: `(algorithm, n, seed)`.
    pub excluded: Vec<(Algorithm, usize, u64)>,
    /// Algorithms without three distinct sizes to fit.
    pub skipped: Vec<(Algorithm, String)>,
}

impl FitReport {
    pub fn get(&self, algorithm: Algorithm) -> Option<&ScalingFit> {
        self.fits.iter().find(|f| f.algorithm == algorithm)
    }
}

impl fmt::Display for FitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fit in &self.fits {
            write!(f, "{} slope={:.3} stderr={:.3} points=", fit.algorithm, fit.slope, fit.std_err)?;
            let pts: Vec<String> = fit.points.iter().map(|(n, t)| format!("{n}:{t:.0}")).collect();
            writeln!(f, "{}", pts.join(","))?;
        }
        for (alg, n, seed) in &self.excluded {
            writeln!(f, "excluded {alg} n={n} seed={seed}: target not reached")?;
        }
        for (alg, why) in &self.skipped {
            writeln!(f, "skipped {alg}: {why}")?;
        }
        Ok(())
    }
}

/// Ordinary least squares `y = intercept + slope x`; the standard error is 0
/// for two points or an exact fit.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_err = if xs.len() > 2 {
        let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, std_err)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

struct Run {
    /// Earliest record at or below the target: `(tick, transmissions)`.
    hit: Option<(u64, f64)>,
}

/// Fits one exponent per algorithm. Row order does not matter and repeated
/// header lines (from concatenated files) are skipped.
pub fn fit_scaling<R: Read>(input: R, target: f64) -> Result<FitReport> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let col = |name: &str| CSV_HEADER.iter().position(|h| *h == name).unwrap();
    let (c_alg, c_n, c_seed, c_tick) = (col("algorithm"), col("n"), col("seed"), col("tick"));
    let (c_total, c_ratio) = (col("transmissions_total"), col("err_l2_ratio"));

    let mut runs: BTreeMap<(Algorithm, usize, u64), Run> = BTreeMap::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row?;
        if row.get(0) == Some(CSV_HEADER[0]) {
            continue;
        }
        if row.len() != CSV_HEADER.len() {
            return invalid(format!("row {}: expected {} columns", idx + 1, CSV_HEADER.len()));
        }
        let field = |c: usize| row.get(c).unwrap();
        let parse_err = |c: usize| format!("row {}: bad {} {:?}", idx + 1, CSV_HEADER[c], field(c));
        let alg: Algorithm = field(c_alg).parse()?;
        let n: usize = field(c_n).parse().or_else(|_| invalid(parse_err(c_n)))?;
        let seed: u64 = field(c_seed).parse().or_else(|_| invalid(parse_err(c_seed)))?;
        let tick: u64 = field(c_tick).parse().or_else(|_| invalid(parse_err(c_tick)))?;
        let total: f64 = field(c_total).parse().or_else(|_| invalid(parse_err(c_total)))?;
        let ratio: f64 = field(c_ratio).parse().or_else(|_| invalid(parse_err(c_ratio)))?;
        let run = runs.entry((alg, n, seed)).or_insert(Run { hit: None });
        if ratio <= target && run.hit.is_none_or(|(t, _)| tick < t) {
            run.hit = Some((tick, total));
        }
    }

    let mut report = FitReport::default();
    let mut by_alg: BTreeMap<Algorithm, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for ((alg, n, seed), run) in &runs {
        match run.hit {
            Some((_, total)) => by_alg.entry(*alg).or_default().entry(*n).or_default().push(total),
            None => report.excluded.push((*alg, *n, *seed)),
        }
    }
    for alg in runs.keys().map(|k| k.0).collect::<std::collections::BTreeSet<_>>() {
        let Some(sizes) = by_alg.get_mut(&alg) else {
            report.skipped.push((alg, "no run reached the target".into()));
            continue;
        };
        if sizes.len() < 3 {
            report.skipped.push((alg, format!("{} distinct n reached the target, need 3", sizes.len())));
            continue;
        }
        let points: Vec<(usize, f64)> = sizes.iter_mut().map(|(&n, v)| (n, median(v))).collect();
        if points.iter().any(|&(_, t)| t <= 0.0) {
            report.skipped.push((alg, "zero transmissions at target".into()));
            continue;
        }
        let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|(_, t)| t.ln()).collect();
        let (slope, intercept, std_err) = least_squares(&xs, &ys);
        report.fits.push(ScalingFit { algorithm: alg, slope, std_err, intercept, points });
    }
    Ok(report)
}
