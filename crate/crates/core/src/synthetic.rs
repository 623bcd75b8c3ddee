//! Synthetic two-class Gaussian streams for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::segment::{stratified_split, TRAIN_FRACTION};
use crate::error::{Error, Result};
use crate::linalg::{dot, l2_normalize, Matrix};
use crate::seed::derive_seed;
use crate::trainer::{Segment, SegmentData};

/// Two unit-variance Gaussian classes at `±separation/2` along a boundary
/// normal `u`, translated by `t · drift` along a direction orthogonal to `u`
/// in segment `t`. The optimal boundary stays fixed while the inputs drift.
///
/// With `recurrence_period = Some(p)`, segment `t` draws its boundary normal
/// from concept `t mod p`, so every concept reappears `p` segments later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStream {
    pub n_segments: usize,
    pub rows_per_segment: usize,
    pub d_in: usize,
    pub separation: f64,
    pub drift: f64,
    pub recurrence_period: Option<usize>,
    pub seed: u64,
}

impl GaussianStream {
    fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        l2_normalize(&v, 1e-12)
    }

    fn orthogonal(rng: &mut ChaCha8Rng, u: &[f64]) -> Vec<f64> {
        let mut v = Self::unit(rng, u.len());
        let k = dot(&v, u);
        for (vi, ui) in v.iter_mut().zip(u) {
            *vi -= k * ui;
        }
        l2_normalize(&v, 1e-12)
    }

    /// Segments with seeded stratified 85/15 splits. Row ids run
    /// consecutively across the stream.
    pub fn generate(&self) -> Result<Vec<Segment>> {
        if self.n_segments == 0 || self.d_in < 2 {
            return Err(Error::InvalidArgument("need >= 1 segment and d_in >= 2".into()));
        }
        if self.recurrence_period == Some(0) {
            return Err(Error::InvalidArgument("recurrence period must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n_concepts = self.recurrence_period.unwrap_or(1);
        let normals: Vec<Vec<f64>> = (0..n_concepts).map(|_| Self::unit(&mut rng, self.d_in)).collect();
        let drift_dir = Self::orthogonal(&mut rng, &normals[0]);

        let mut stream = Vec::with_capacity(self.n_segments);
        for t in 0..self.n_segments {
            let u = &normals[t % n_concepts];
            let n = self.rows_per_segment;
            let mut data = Vec::with_capacity(n * self.d_in);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let class = usize::from(rng.random_bool(0.5));
                let sign = if class == 1 { 0.5 } else { -0.5 };
                for d in 0..self.d_in {
                    let noise: f64 = rng.sample(StandardNormal);
                    data.push(noise + sign * self.separation * u[d] + t as f64 * self.drift * drift_dir[d]);
                }
                y.push(class);
            }
            let all = SegmentData::new(
                Matrix::from_vec(n, self.d_in, data)?,
                y,
                (t * n..(t + 1) * n).collect(),
            )?;
            let split = stratified_split(&all.y, TRAIN_FRACTION, derive_seed(self.seed, 1_000 + t as u64))?;
            stream.push(Segment {
                train: all.subset(&split.train),
                test: all.subset(&split.test),
            });
        }
        Ok(stream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GaussianStream {
        GaussianStream {
            n_segments: 3,
            rows_per_segment: 100,
            d_in: 4,
            separation: 4.0,
            drift: 1.0,
            recurrence_period: None,
            seed: 5,
        }
    }

    #[test]
    fn shapes_and_ids() {
        let s = spec().generate().unwrap();
        assert_eq!(s.len(), 3);
        for (t, seg) in s.iter().enumerate() {
            assert_eq!(seg.train.len() + seg.test.len(), 100);
            assert!(seg.train.row_ids.iter().all(|&r| (t * 100..(t + 1) * 100).contains(&r)));
        }
        assert_eq!(spec().generate().unwrap(), s);
    }

    #[test]
    fn recurring_concepts_share_statistics() {
        let s = GaussianStream {
            n_segments: 5,
            rows_per_segment: 4000,
            drift: 0.0,
            recurrence_period: Some(4),
            ..spec()
        }
        .generate()
        .unwrap();
        // Class-1 mean of segment 5 matches segment 1, not segment 2.
        let mean = |seg: &Segment| -> Vec<f64> {
            let rows: Vec<usize> = (0..seg.train.len()).filter(|&i| seg.train.y[i] == 1).collect();
            let m = seg.train.x.select_rows(&rows);
            (0..m.cols()).map(|c| (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / m.rows() as f64).collect()
        };
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let (m1, m2, m5) = (mean(&s[0]), mean(&s[1]), mean(&s[4]));
        assert!(dist(&m1, &m5) < 0.2, "{}", dist(&m1, &m5));
        assert!(dist(&m1, &m2) > 0.5);
    }
}
