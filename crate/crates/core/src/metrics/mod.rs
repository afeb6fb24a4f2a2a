//! Proxy-quality statistics and the consistency and epoch analyses.

pub mod analysis;
pub mod lasso;
pub mod quality;
pub mod stats;

pub use analysis::{consistency_correlation, epoch_correlation, pairwise_winrate, winrate, Metric};
pub use lasso::{default_lambda_grid, lasso_cv, lasso_fit, LassoCv, LassoFit};
pub use quality::{
    cost_adjusted_quality, paired_accuracies, proxy_r2, quality_report, read_report,
    select_good_configs, spearman_good, write_report_to, CostAdjustOptions, CostAdjustment,
    CostPoint, GoodRule, PairedAccuracies, QualityRow, REPORT_COLUMNS, TARGET_PROXY,
};
pub use stats::{average_ranks, pearson, r2_no_intercept, spearman, zscore};
