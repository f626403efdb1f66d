//! Residual and influence diagnostics for fitted models.

pub mod influence;
pub mod normality;
pub mod residuals;

pub use influence::{
    case_deletion_rc, curvature_matrix, local_influence, perturbation_nabla, relative_change_table, CaseDeletion,
    InfluenceOptions, InfluenceReport, RcRow, Scheme, Target,
};
pub use normality::{normality_tests, NormalityPvalues};
pub use residuals::{residual_report, rqr, ResidualReport};
