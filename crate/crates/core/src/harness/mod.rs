//! Experiment orchestration: configs, replicates, the attack grid and the
//! bundle of per-cell reports with seed-aggregated summaries.

mod config;
mod run;
mod summary;

pub use config::{
    bundled, AttackGroup, DatasetConfig, ExperimentConfig, TaskKind, VictimSpec, BUNDLED, NO_SUBSTITUTE,
    PENDULUM_SIM, SCHEMA_VERSION, SYNMEASUREMENT_FIG6,
};
pub use run::{
    budget_sweep, derive_seed, generate_split, report, run, Bundle, CellMeta, Replicate, CELL_DIR, CLEAN,
    CONFIG_COPY, MANIFEST,
};
pub use summary::{SeedRow, Summary, SummaryRow, SUMMARY_CSV, SUMMARY_MD, SWEEP_CSV};
