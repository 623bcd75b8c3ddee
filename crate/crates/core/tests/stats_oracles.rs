use imlp_core::stats::rank::{mid_ranks, WilcoxonMethod};
use imlp_core::stats::special::{chi2_sf, erfc};
use imlp_core::stats::{
    friedman_test, holm_adjust, nemenyi_cd, pareto_front, wilcoxon_holm, wilcoxon_signed_rank, ResultsMatrix,
    TradeoffPoint,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Exhaustive pairwise domination check.
fn pareto_oracle(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let mut keep: Vec<TradeoffPoint> = points
        .iter()
        .filter(|b| !points.iter().any(|a| a.dominates(b)))
        .cloned()
        .collect();
    keep.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    keep
}

fn point_strategy() -> impl Strategy<Value = Vec<TradeoffPoint>> {
    // A coarse grid makes ties and duplicates common.
    proptest::collection::vec((0u8..12, 0u8..12), 1..=50).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (p, e))| TradeoffPoint::new(p as f64 / 10.0, e as f64 * 25.0, format!("p{i}")))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pareto_matches_exhaustive_oracle(points in point_strategy()) {
        let front = pareto_front(&points).unwrap();
        prop_assert_eq!(&front, &pareto_oracle(&points));
        for a in &front {
            prop_assert!(!front.iter().any(|b| b.dominates(a)));
        }
        for p in points.iter().filter(|p| !front.contains(p)) {
            prop_assert!(front.iter().any(|f| f.dominates(p)));
        }
    }
}

fn matrix(rows: &[Vec<f64>]) -> ResultsMatrix {
    let k = rows[0].len();
    ResultsMatrix::new(
        (0..rows.len()).map(|i| format!("d{i}")).collect(),
        (0..k).map(|j| format!("a{j}")).collect(),
        rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect(),
    )
    .unwrap()
}

#[test]
fn chi_square_survival_agrees_with_statrs() {
    for df in 1..=19 {
        let dist = ChiSquared::new(df as f64).unwrap();
        for x in [0.01, 0.5, 1.0, 2.5, 4.0, 7.3, 15.0, 40.0] {
            let ours = chi2_sf(x, df as f64);
            let theirs = 1.0 - dist.cdf(x);
            assert!((ours - theirs).abs() < 1e-10, "df {df}, x {x}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn erfc_matches_high_precision_values() {
    // Reference values computed with 30-digit arithmetic.
    let table = [
        (-3.0, 1.9999779095030014146),
        (-1.6, 1.9763483833446440155),
        (-1.0, 1.8427007929497148693),
        (-0.3, 1.3286267594591274162),
        (0.0, 1.0),
        (0.2, 0.77729741078952153382),
        (0.5, 0.47950012218695346232),
        (1.0, 0.15729920705028513066),
        (1.6, 0.023651616655355984478),
        (2.5, 0.00040695201744495893956),
        (3.5, 7.4309837234141274552e-7),
        (5.0, 1.5374597944280348502e-12),
    ];
    for (x, want) in table {
        let got: f64 = erfc(x);
        assert!((got - want).abs() <= 1e-14 * want.max(1e-300) + 1e-16, "x = {x}: {got} vs {want}");
    }
}

proptest! {
    #[test]
    fn friedman_bounds_and_rank_invariance(
        rows in proptest::collection::vec(proptest::collection::vec(0u8..6, 4), 2..12)
    ) {
        let values: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let r = friedman_test(&matrix(&values), true).unwrap();
        let (n, k) = (values.len() as f64, 4.0);
        prop_assert!(r.chi2 >= 0.0 && r.chi2 <= n * (k - 1.0) + 1e-9);
        prop_assert!((r.avg_ranks.iter().sum::<f64>() - k * (k + 1.0) / 2.0).abs() < 1e-9);
        // A monotone increasing transform of every value leaves ranks alone.
        let warped: Vec<Vec<f64>> = values.iter().map(|r| r.iter().map(|v| (v * 0.7).exp() + 3.0).collect()).collect();
        let w = friedman_test(&matrix(&warped), true).unwrap();
        prop_assert_eq!(w.avg_ranks, r.avg_ranks);
        prop_assert!((w.chi2 - r.chi2).abs() < 1e-12);
    }
}

#[test]
fn friedman_p_value_example() {
    let m = matrix(&[vec![3.0, 2.0, 1.0], vec![30.0, 20.0, 10.0]]);
    let r = friedman_test(&m, true).unwrap();
    assert_eq!(r.chi2, 4.0);
    assert!((r.p_value - 0.135_335_283_236_612_7).abs() < 1e-12);
    // Lower-is-better flips the ranks but not the statistic.
    let low = friedman_test(&m, false).unwrap();
    assert_eq!(low.avg_ranks, vec![3.0, 2.0, 1.0]);
    assert_eq!(low.chi2, 4.0);
}

/// Two-sided exact signed-rank p by enumerating all 2^n sign patterns.
fn wilcoxon_brute_force(diffs: &[f64]) -> f64 {
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let ranks = mid_ranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let n = nz.len();
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let observed = w_plus.min(total - w_plus);
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            extreme += 1;
        }
    }
    (2.0 * extreme as f64 / (1u64 << n) as f64).min(1.0)
}

proptest! {
    #[test]
    fn exact_wilcoxon_matches_enumeration(
        diffs in proptest::collection::vec(-4i8..=4, 1..14)
    ) {
        let diffs: Vec<f64> = diffs.into_iter().map(|d| d as f64 / 2.0).collect();
        let r = wilcoxon_signed_rank(&diffs).unwrap();
        if r.degenerate {
            prop_assert!(diffs.iter().all(|&d| d == 0.0));
        } else {
            prop_assert_eq!(r.method, WilcoxonMethod::Exact);
            prop_assert!((r.p_value - wilcoxon_brute_force(&diffs)).abs() < 1e-12);
        }
    }

    #[test]
    fn holm_is_monotone_and_conservative(p in proptest::collection::vec(0.0f64..1.0, 1..20)) {
        let adj = holm_adjust(&p);
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        for w in order.windows(2) {
            prop_assert!(adj[w[0]] <= adj[w[1]]);
        }
        for (a, r) in adj.iter().zip(&p) {
            prop_assert!(a >= r && *a <= 1.0);
        }
    }
}

#[test]
fn normal_approximation_for_large_samples() {
    // 30 positive differences 1..=30: W− = 0.
    let diffs: Vec<f64> = (1..=30).map(f64::from).collect();
    let r = wilcoxon_signed_rank(&diffs).unwrap();
    assert_eq!(r.method, WilcoxonMethod::Normal);
    let mean = 30.0 * 31.0 / 4.0;
    let sd = (30.0f64 * 31.0 * 61.0 / 24.0).sqrt();
    let z = (465.0 - mean - 0.5) / sd;
    assert!((r.p_value - erfc(z / std::f64::consts::SQRT_2)).abs() < 1e-15);
    assert!(r.p_value < 1e-5);
}

#[test]
fn wilcoxon_holm_family() {
    let rows: Vec<Vec<f64>> = (0..8)
        .map(|i| {
            let base = 0.6 + 0.03 * i as f64;
            vec![base + 0.1, base, base + 0.1]
        })
        .collect();
    let m = matrix(&rows);
    let out = wilcoxon_holm(&m, "a0", 0.05).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].algorithm, "a1");
    // Eight positive differences: exact p = 2/256.
    assert_eq!(out[0].p_raw, 2.0 / 256.0);
    assert!(out[1].degenerate && out[1].p_raw == 1.0);
    assert_eq!(out[0].p_adjusted, 2.0 * 2.0 / 256.0);
    assert!(out[0].reject && !out[1].reject);
    assert!(wilcoxon_holm(&m, "zzz", 0.05).is_err());
}

#[test]
fn critical_difference_shrinks_with_more_datasets() {
    let mut last = f64::INFINITY;
    for n in [2, 5, 10, 36, 100, 1000] {
        let cd = nemenyi_cd(5, n, 0.05).unwrap();
        assert!(cd < last);
        last = cd;
    }
    for n in [1, 4, 25] {
        assert!((nemenyi_cd(2, n, 0.05).unwrap() - 1.960 / (n as f64).sqrt()).abs() < 1e-12);
    }
}
