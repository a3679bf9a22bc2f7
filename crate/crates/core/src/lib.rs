pub mod error;
pub mod frame;
pub mod io;
pub mod model;
pub mod solver;
pub mod ssa;
pub mod synthetic;
pub mod theory;

pub use error::{Error, Result};
pub use frame::{
    analyze, frame_matrix, synthesize, CoefficientVector, DictionaryMatrix, FrameSpec, Radwt,
};
pub use model::{
    apply_design, group_correlations, mixed_norm, Decomposition, GroupCorrelations,
    GroupedDesign, MultichannelData, ThetaEstimate,
};
pub use solver::{
    cv_select, fit_group_lasso, fit_path, fit_single_channel, fit_single_channel_fixed,
    kkt_violation, lambda_max, lambda_path, objective, penalty_norm, CvPlan, CvSelection, FitConfig,
    FitResult, FoldScheme,
};
pub use ssa::{
    bcd_cv, bcd_l1l2, bcd_lambda_max, bcd_objective, somp, somp_cv, BcdCv, BcdPlan, BcdResult,
    SompCv, SompResult, SsaProblem,
};
pub use synthetic::{
    generate, generate_replication, run_benchmark, score, standard_design, standard_specs,
    BenchmarkOptions, BenchmarkReport, ChannelMetrics, Estimators, Method, MetricsReport,
    ScenarioConfig, ScenarioDataset, SignalMode,
};
pub use theory::{
    check_oracle, check_proposition, estimate_phi, lambda0, oracle_study, GroupSet, Lambda0,
    OracleRun, OracleStudy, Proposition, TheoryReport,
};
