//! Ranking metrics, baselines, cohort breakdowns and clustering stability.

mod baseline;
mod cohort;
pub mod metrics;
mod report;
mod stability;

pub use baseline::{item_counts, MostPopular};
pub use cohort::{
    decile_buckets, engagement_decile_report, popularity_report, write_deciles_csv, write_popularity_csv, DecileRow,
    PopularityReport,
};
pub use metrics::{ndcg_at_k, precision_at_k, recall_at_k};
pub use report::{evaluate, metric_names, report_from_rows, score_user, EvalReport, UserRow};
pub use stability::{ari, cluster_dataset, stability_study};
