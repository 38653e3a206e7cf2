//! Trajectory metrics, statistical tests and cohort diagnostics.

pub mod cohort;
pub mod stats;
pub mod trajectory;

pub use cohort::{
    activation_rate, catchup_series, cohort_record, grad_magnitude, layer_averaged, measure_units, parity,
    parity_records, survivor_stability, CatchupPoint,
    CatchupRow, Cohort, CohortRecord, ParityRecord, Timepoint, UnitStats, PARITY_EPS,
};
pub use stats::{spearman_rho, welch_ttest, Welch};
pub use trajectory::{acc_final, cum_acc, early_task_taa, mean_ci95, taa, taoa, ticket_cycle_delta};
