//! Energy accounting: power-trace integration, a FLOPs-based proxy and a
//! constant-power fallback.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placeholder conversion for the FLOPs proxy. Not a physical constant; only
/// ratios between runs using the same value are meaningful.
pub const DEFAULT_JOULES_PER_FLOP: f64 = 1e-9;

/// Power samples `(seconds, watts)` with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    samples: Vec<(f64, f64)>,
}

impl PowerTrace {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(t, p)) in samples.iter().enumerate() {
            if !t.is_finite() || !p.is_finite() {
                return Err(Error::InvalidArgument(format!("power sample {i} is not finite")));
            }
            if p < 0.0 {
                return Err(Error::InvalidArgument(format!("power sample {i} is negative ({p} W)")));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::InvalidArgument(format!(
                    "power trace timestamps must strictly increase (sample {i}: {t} after {})",
                    samples[i - 1].0
                )));
            }
        }
        Ok(Self { samples })
    }

    /// Reads a `timestamp_s,power_w` file. Lines starting with `#` are ignored.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::io(path, e))?;
        let headers = rdr.headers().map_err(|e| Error::io(path, e))?.clone();
        if headers.len() != 2 || &headers[0] != "timestamp_s" || &headers[1] != "power_w" {
            return Err(Error::schema(
                Some(1),
                None,
                format!("power trace header must be `timestamp_s,power_w`, found {:?}", headers.iter().collect::<Vec<_>>()),
            ));
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::io(path, e))?;
            let row = i + 2;
            let parse = |col: usize, name: &str| -> Result<f64> {
                rec.get(col)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::schema(Some(row), Some(name), "expected a number"))
            };
            samples.push((parse(0, "timestamp_s")?, parse(1, "power_w")?));
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// `(first, last)` timestamp, if there are at least two samples.
    pub fn span(&self) -> Option<(f64, f64)> {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) if self.samples.len() >= 2 => Some((a.0, b.0)),
            _ => None,
        }
    }
}

/// Trapezoidal integral of power over `[t_start, t_end]`, in Joules.
///
/// Window ends falling between samples are linearly interpolated. A window
/// reaching past the trace is clamped to the trace span.
pub fn integrate_energy(trace: &PowerTrace, t_start: f64, t_end: f64) -> Result<f64> {
    if !(t_start < t_end) {
        return Err(Error::InvalidArgument(format!(
            "integration window must satisfy start < end (got [{t_start}, {t_end}])"
        )));
    }
    let missing = Error::MissingTrace {
        start: t_start,
        end: t_end,
    };
    let (first, last) = trace.span().ok_or(missing.clone())?;
    let lo = t_start.max(first);
    let hi = t_end.min(last);
    if !(lo < hi) {
        return Err(missing);
    }
    if lo > t_start || hi < t_end {
        log::warn!("power trace covers only [{lo}, {hi}] of requested [{t_start}, {t_end}]");
    }

    let s = trace.samples();
    let mut joules = 0.0;
    for w in s.windows(2) {
        let ((t0, p0), (t1, p1)) = (w[0], w[1]);
        if t1 <= lo || t0 >= hi {
            continue;
        }
        let a = t0.max(lo);
        let b = t1.min(hi);
        let interp = |t: f64| p0 + (p1 - p0) * (t - t0) / (t1 - t0);
        joules += (b - a) * (interp(a) + interp(b)) / 2.0;
    }
    Ok(joules)
}

pub fn estimate_energy_flops(flops: u64, joules_per_flop: f64) -> f64 {
    flops as f64 * joules_per_flop
}

/// Where a run's per-segment energy comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyProvider {
    /// Integrate a recorded power trace whose timestamps are seconds since
    /// the start of the run.
    Trace(PowerTrace),
    FlopsProxy { joules_per_flop: f64 },
    ConstantPower { watts: f64 },
}

/// Resources consumed by one metered interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usage {
    pub flops: u64,
    /// Seconds since the start of the run.
    pub start_s: f64,
    pub end_s: f64,
}

impl EnergyProvider {
    pub fn flops_proxy() -> Self {
        EnergyProvider::FlopsProxy {
            joules_per_flop: DEFAULT_JOULES_PER_FLOP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EnergyProvider::Trace(ref t) if t.span().is_none() => {
                Err(Error::InvalidArgument("power trace needs at least two samples".into()))
            }
            EnergyProvider::FlopsProxy { joules_per_flop } if !(joules_per_flop > 0.0) => Err(
                Error::InvalidArgument(format!("joules_per_flop must be > 0, got {joules_per_flop}")),
            ),
            EnergyProvider::ConstantPower { watts } if !(watts > 0.0) => {
                Err(Error::InvalidArgument(format!("watts must be > 0, got {watts}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the energy depends only on counted work, not on timing.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, EnergyProvider::FlopsProxy { .. })
    }

    pub fn energy(&self, usage: &Usage) -> Result<f64> {
        match self {
            EnergyProvider::Trace(trace) => integrate_energy(trace, usage.start_s, usage.end_s),
            EnergyProvider::FlopsProxy { joules_per_flop } => Ok(estimate_energy_flops(usage.flops, *joules_per_flop)),
            EnergyProvider::ConstantPower { watts } => Ok(watts * (usage.end_s - usage.start_s).max(0.0)),
        }
    }

    /// Short label used in reports.
    pub fn describe(&self) -> String {
        match self {
            EnergyProvider::Trace(t) => format!("trace ({} samples)", t.samples().len()),
            EnergyProvider::FlopsProxy { joules_per_flop } => {
                format!("flops-proxy ({joules_per_flop:e} J/FLOP, non-physical)")
            }
            EnergyProvider::ConstantPower { watts } => format!("constant-power ({watts} W)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn constant_power() {
        let t = PowerTrace::new(vec![(0.0, 100.0), (10.0, 100.0)]).unwrap();
        assert_abs_diff_eq!(integrate_energy(&t, 0.0, 10.0).unwrap(), 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn triangle() {
        let t = PowerTrace::new(vec![(0.0, 0.0), (1.0, 2.0)]).unwrap();
        assert_abs_diff_eq!(integrate_energy(&t, 0.0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn piecewise_linear_five_samples() {
        let t = PowerTrace::new(vec![(0.0, 10.0), (1.0, 20.0), (3.0, 20.0), (4.0, 0.0), (6.0, 5.0)]).unwrap();
        // 15 + 40 + 10 + 5
        assert_abs_diff_eq!(integrate_energy(&t, 0.0, 6.0).unwrap(), 70.0, epsilon = 1e-9);
        // [0.5, 3.5]: (15 + 20)/2·0.5 + 20·2 + (20 + 10)/2·0.5
        assert_abs_diff_eq!(integrate_energy(&t, 0.5, 3.5).unwrap(), 56.25, epsilon = 1e-9);
    }

    #[test]
    fn window_is_clamped_to_trace() {
        let t = PowerTrace::new(vec![(1.0, 4.0), (3.0, 4.0)]).unwrap();
        assert_abs_diff_eq!(integrate_energy(&t, 0.0, 10.0).unwrap(), 8.0, epsilon = 1e-12);
        assert!(matches!(integrate_energy(&t, 5.0, 6.0), Err(Error::MissingTrace { .. })));
        let empty = PowerTrace::new(vec![]).unwrap();
        assert!(matches!(integrate_energy(&empty, 0.0, 1.0), Err(Error::MissingTrace { .. })));
    }

    #[test]
    fn trace_validation() {
        assert!(PowerTrace::new(vec![(0.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(PowerTrace::new(vec![(0.0, -1.0)]).is_err());
    }

    #[test]
    fn providers() {
        let usage = Usage {
            flops: 1_000_000_000,
            start_s: 2.0,
            end_s: 4.0,
        };
        assert_eq!(EnergyProvider::flops_proxy().energy(&usage).unwrap(), 1.0);
        assert_eq!(estimate_energy_flops(0, 1e-9), 0.0);
        assert_eq!(EnergyProvider::ConstantPower { watts: 50.0 }.energy(&usage).unwrap(), 100.0);
        assert!(EnergyProvider::ConstantPower { watts: 0.0 }.validate().is_err());
    }

    #[test]
    fn reads_csv_trace() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        std::fs::write(&p, "# imlp power trace v1\ntimestamp_s,power_w\n0,10\n2,30\n").unwrap();
        let t = PowerTrace::from_csv(&p).unwrap();
        assert_eq!(t.samples(), &[(0.0, 10.0), (2.0, 30.0)]);
        std::fs::write(&p, "time,watts\n0,10\n").unwrap();
        assert!(matches!(PowerTrace::from_csv(&p), Err(Error::Schema { .. })));
    }

    proptest! {
        #[test]
        fn integration_is_additive(
            steps in proptest::collection::vec((0.01f64..2.0, 0.0f64..500.0), 2..40),
            fa in 0.0f64..1.0, fb in 0.0f64..1.0, fc in 0.0f64..1.0,
        ) {
            let mut t = 0.0;
            let samples: Vec<(f64, f64)> = steps.iter().map(|&(dt, p)| { t += dt; (t, p) }).collect();
            let trace = PowerTrace::new(samples).unwrap();
            let (lo, hi) = trace.span().unwrap();
            let mut cuts = [fa, fb, fc];
            cuts.sort_by(f64::total_cmp);
            let [a, b, c] = cuts.map(|f| lo + f * (hi - lo));
            prop_assume!(a < b && b < c);
            let whole = integrate_energy(&trace, a, c).unwrap();
            let parts = integrate_energy(&trace, a, b).unwrap() + integrate_energy(&trace, b, c).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-9 * whole.abs().max(1.0));
        }
    }
}
