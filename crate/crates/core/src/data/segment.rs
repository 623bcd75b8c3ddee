//! Contiguous segmentation of a table and stratified train/test splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SEGMENT_ROWS: usize = 500;
pub const MAX_SEGMENT_ROWS: usize = 1000;
pub const TRAIN_FRACTION: f64 = 0.85;

/// Half-open row ranges covering `0..n_rows` in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub n_rows: usize,
    pub base_size: usize,
    /// Number of leading segments holding one extra row.
    pub remainder: usize,
    pub bounds: Vec<(usize, usize)>,
}

impl SegmentPlan {
    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }
}

/// Splits `n_rows` into contiguous segments of `min_size..=max_size` rows.
///
/// A table no longer than `max_size` is a single segment. Otherwise the base
/// size minimizes `n_rows mod size` (smallest size on ties) and the leftover
/// rows are spread one each over the leading segments.
pub fn plan_segments(n_rows: usize, min_size: usize, max_size: usize) -> Result<SegmentPlan> {
    if min_size == 0 || min_size > max_size {
        return Err(Error::InvalidArgument(format!(
            "segment size bounds must satisfy 0 < min <= max (got {min_size}..={max_size})"
        )));
    }
    if n_rows == 0 {
        return Err(Error::EmptyInput("cannot segment an empty table"));
    }
    if n_rows <= max_size {
        return Ok(SegmentPlan {
            n_rows,
            base_size: n_rows,
            remainder: 0,
            bounds: vec![(0, n_rows)],
        });
    }
    let base_size = (min_size..=max_size)
        .min_by_key(|&s| (n_rows % s, s))
        .expect("non-empty range");
    let k = n_rows / base_size;
    let remainder = n_rows % base_size;
    if remainder > k {
        return Err(Error::InvalidArgument(format!(
            "{n_rows} rows cannot be segmented within {min_size}..={max_size} rows per segment"
        )));
    }
    let mut bounds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base_size + usize::from(i < remainder);
        bounds.push((start, start + size));
        start += size;
    }
    debug_assert_eq!(start, n_rows);
    Ok(SegmentPlan {
        n_rows,
        base_size,
        remainder,
        bounds,
    })
}

/// Local row indices (`0..n`) of a segment's two parts, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded stratified split with `round(train_fraction · n)` training rows.
///
/// Each class contributes `floor(train_fraction · n_c)` rows, the remaining
/// training quota goes to the largest fractional remainders (lower class index
/// first on ties), and a class with at least two rows always keeps one row in
/// the test part. Rows are drawn from a seeded shuffle within each class.
pub fn stratified_split(labels: &[usize], train_fraction: f64, seed: u64) -> Result<Split> {
    let n = labels.len();
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::DegenerateSplit(n));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }

    let target = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let cap = |rows: usize| if rows >= 2 { rows - 1 } else { rows };
    let mut quota: Vec<usize> = by_class
        .iter()
        .map(|c| ((train_fraction * c.len() as f64).floor() as usize).min(cap(c.len())))
        .collect();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        let frac = |c: usize| train_fraction * by_class[c].len() as f64 - quota[c] as f64;
        frac(b).total_cmp(&frac(a)).then(a.cmp(&b))
    });
    let mut assigned: usize = quota.iter().sum();
    // Largest remainders first; classes already at their cap are skipped.
    while assigned < target {
        let before = assigned;
        for &c in &order {
            if assigned == target {
                break;
            }
            if quota[c] < cap(by_class[c].len()) {
                quota[c] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (c, rows) in by_class.iter_mut().enumerate() {
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..quota[c]]);
        test.extend_from_slice(&rows[quota[c]..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::DegenerateSplit(n));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
