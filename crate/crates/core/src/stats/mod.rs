//! Model comparison: Pareto fronts and rank-based significance tests.

pub mod pareto;
pub mod rank;
pub mod special;

pub use pareto::{pareto_front, TradeoffPoint};
pub use rank::{
    friedman_test, holm_adjust, nemenyi_cd, wilcoxon_holm, wilcoxon_signed_rank, FriedmanResult,
    PairwiseComparison, ResultsMatrix,
};
