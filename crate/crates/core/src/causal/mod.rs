//! Identification and adjustment: d-separation, the backdoor criterion, the
//! adjustment sum over `x2`, and balancing-score classes.

mod adjust;
mod balancing;
mod dag;

pub use adjust::{backdoor_adjust, fit_cov_model, fit_cov_model_with, CovModel, DEFAULT_COV_ALPHA};
pub use balancing::{
    balancing_coarsen, balancing_coarsen_all, class_adjusted_ctr, class_adjusted_ctr_from_log,
    BalancingPartition, BALANCING_TOL,
};
pub use dag::{click_sale_graph, recommender_graph, BackdoorVerdict, Dag, NodeId, Path};
