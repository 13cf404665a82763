//! Quadratic U-statistics with projection kernels.

pub mod error;
pub mod estimators;
pub mod io;
pub mod kernels;
pub mod measure;
pub mod partitions;
pub mod simulate;
pub mod sum;
pub mod ustat;

pub use error::{Error, Result};
pub use kernels::{KernelKind, KernelSpec};
pub use measure::{Domain, MeasureModel, StepFunction};
pub use partitions::{BinAssignment, ConditionReport, Partition};
pub use ustat::{HoeffdingParts, Sample, VarianceReport};
pub use estimators::{MissingSample, SplitEstimate};
pub use simulate::{ExperimentConfig, KernelConfig, NormalityReport, Replication, Scenario};
