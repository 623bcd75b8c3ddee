//! Rank-based comparison of algorithms over datasets: Friedman, Wilcoxon
//! signed-rank with Holm step-down, Nemenyi critical difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::special::{chi2_sf, normal_two_sided};

/// Largest sample size handled by exact enumeration in the signed-rank test.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// `N` datasets (rows) × `k` algorithms (columns), no missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsMatrix {
    pub datasets: Vec<String>,
    pub algorithms: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl ResultsMatrix {
    /// `cells[i][j]` is algorithm `j` on dataset `i`; `None` marks a gap.
    pub fn new(datasets: Vec<String>, algorithms: Vec<String>, cells: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if cells.len() != datasets.len() {
            return Err(Error::shape(
                "ResultsMatrix::new",
                format!("{} dataset labels", datasets.len()),
                format!("{} rows", cells.len()),
            ));
        }
        let mut values = Vec::with_capacity(cells.len());
        for (i, row) in cells.into_iter().enumerate() {
            if row.len() > algorithms.len() {
                return Err(Error::shape(
                    "ResultsMatrix::new",
                    format!("{} algorithms", algorithms.len()),
                    format!("{} cells in row {}", row.len(), i + 1),
                ));
            }
            let mut out = Vec::with_capacity(algorithms.len());
            for j in 0..algorithms.len() {
                match row.get(j).copied().flatten() {
                    Some(v) if v.is_finite() => out.push(v),
                    _ => {
                        return Err(Error::MissingCell {
                            row: i + 1,
                            column: j + 1,
                            dataset: datasets[i].clone(),
                            algorithm: algorithms[j].clone(),
                        })
                    }
                }
            }
            values.push(out);
        }
        Ok(Self {
            datasets,
            algorithms,
            values,
        })
    }

    /// Reads a delimited table: header `dataset,<algorithm>...`, one row per
    /// dataset. Empty or non-numeric cells are reported as missing.
    pub fn from_reader<R: std::io::Read>(reader: R, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::schema(Some(1), None, e.to_string()))?.clone();
        let algorithms: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let mut datasets = Vec::new();
        let mut cells = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::schema(e.position().map(|p| p.line() as usize), None, e.to_string()))?;
            datasets.push(rec.get(0).unwrap_or("").to_string());
            cells.push(
                (1..=algorithms.len())
                    .map(|j| rec.get(j).and_then(|s| s.parse::<f64>().ok()))
                    .collect(),
            );
        }
        Self::new(datasets, algorithms, cells)
    }

    pub fn n_datasets(&self) -> usize {
        self.values.len()
    }

    pub fn n_algorithms(&self) -> usize {
        self.algorithms.len()
    }

    pub fn get(&self, dataset: usize, algorithm: usize) -> f64 {
        self.values[dataset][algorithm]
    }

    pub fn column(&self, algorithm: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[algorithm]).collect()
    }
}

/// 1-based ranks of `values` ascending, ties sharing the mean rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i+1 ..= j share their mean.
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    /// Average rank per algorithm; rank 1 is best.
    pub avg_ranks: Vec<f64>,
}

pub fn friedman_test(m: &ResultsMatrix, higher_is_better: bool) -> Result<FriedmanResult> {
    let n = m.n_datasets();
    let k = m.n_algorithms();
    if k < 3 {
        return Err(Error::InsufficientAlgorithms { needed: 3, got: k });
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Friedman test needs at least 2 datasets, got {n}")));
    }
    let mut sums = vec![0.0; k];
    for row in &m.values {
        let keyed: Vec<f64> = if higher_is_better { row.iter().map(|v| -v).collect() } else { row.clone() };
        for (s, r) in sums.iter_mut().zip(mid_ranks(&keyed)) {
            *s += r;
        }
    }
    let avg_ranks: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = avg_ranks.iter().map(|r| r * r).sum();
    let chi2 = (12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    Ok(FriedmanResult {
        chi2,
        df: k - 1,
        p_value: chi2_sf(chi2, (k - 1) as f64),
        avg_ranks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub n_used: usize,
    pub zeros_dropped: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
    /// All differences were zero; `p_value` is set to 1.
    pub degenerate: bool,
}

/// Two-sided signed-rank test on paired differences.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    if let Some(d) = diffs.iter().find(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite difference {d}")));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let zeros_dropped = diffs.len() - nz.len();
    let n = nz.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            n_used: 0,
            zeros_dropped,
            p_value: 1.0,
            method: WilcoxonMethod::Exact,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let statistic = w_plus.min(total - w_plus);

    if n <= WILCOXON_EXACT_MAX_N {
        // Mid-ranks are multiples of 1/2, so doubled ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![0f64; max_sum + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        let limit = (2.0 * statistic).round() as usize;
        let tail: f64 = counts[..=limit].iter().sum();
        let p = (2.0 * tail / 2f64.powi(n as i32)).min(1.0);
        return Ok(WilcoxonResult {
            statistic,
            n_used: n,
            zeros_dropped,
            p_value: p,
            method: WilcoxonMethod::Exact,
            degenerate: false,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(WilcoxonResult {
        statistic,
        n_used: n,
        zeros_dropped,
        p_value: normal_two_sided(z).min(1.0),
        method: WilcoxonMethod::Normal,
        degenerate: false,
    })
}

/// Holm step-down adjusted p-values, in input order.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        running = running.max(((m - i) as f64 * p_values[idx]).min(1.0));
        adjusted[idx] = running;
    }
    adjusted
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub control: String,
    pub algorithm: String,
    pub statistic: f64,
    pub n_used: usize,
    pub zeros_dropped: usize,
    pub method: WilcoxonMethod,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub reject: bool,
    pub degenerate: bool,
}

/// Signed-rank tests of `control` against every other algorithm, Holm
/// adjusted over the family.
pub fn wilcoxon_holm(m: &ResultsMatrix, control: &str, alpha: f64) -> Result<Vec<PairwiseComparison>> {
    let c = m
        .algorithms
        .iter()
        .position(|a| a == control)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown control algorithm {control:?}")))?;
    if m.n_algorithms() < 2 {
        return Err(Error::InsufficientAlgorithms {
            needed: 2,
            got: m.n_algorithms(),
        });
    }
    let base = m.column(c);
    let mut tests = Vec::new();
    for j in (0..m.n_algorithms()).filter(|&j| j != c) {
        let diffs: Vec<f64> = base.iter().zip(m.column(j)).map(|(a, b)| a - b).collect();
        tests.push((j, wilcoxon_signed_rank(&diffs)?));
    }
    let raw: Vec<f64> = tests.iter().map(|(_, t)| t.p_value).collect();
    let adjusted = holm_adjust(&raw);
    Ok(tests
        .into_iter()
        .zip(adjusted)
        .map(|((j, t), adj)| PairwiseComparison {
            control: control.to_string(),
            algorithm: m.algorithms[j].clone(),
            statistic: t.statistic,
            n_used: t.n_used,
            zeros_dropped: t.zeros_dropped,
            method: t.method,
            p_raw: t.p_value,
            p_adjusted: adj,
            reject: adj <= alpha,
            degenerate: t.degenerate,
        })
        .collect())
}

/// Two-tailed Nemenyi critical values `q_α` (studentized range / √2) for
/// k = 2..=20. Entries up to k = 10 are the standard published table;
/// larger k use the same construction.
const Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354, 3.391, 3.426,
    3.458, 3.489, 3.517, 3.544,
];
const Q_10: [f64; 19] = [
    1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978, 3.030, 3.077, 3.120, 3.159, 3.196,
    3.230, 3.261, 3.291, 3.319,
];

pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64> {
    if !(2..=20).contains(&k) {
        return Err(Error::Range(format!("Nemenyi table covers 2 <= k <= 20, got k = {k}")));
    }
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(Error::Range(format!("Nemenyi table covers alpha in {{0.05, 0.10}}, got {alpha}")));
    };
    Ok(table[k - 2])
}

/// `q_α · √(k(k+1) / 6N)`.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("critical difference needs N >= 1".into()));
    }
    let q = nemenyi_q(k, alpha)?;
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}
