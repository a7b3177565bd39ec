//! Prediction protocol: stratified splits, SMOTE, ANOVA screening, sparse
//! logistic regression, linear SHAP and skill scores.

pub mod clinical;
pub mod logreg;
pub mod protocol;
pub mod select;
pub mod shap;
pub mod skill;
pub mod smote;
pub mod splits;

pub use clinical::{clinical_models, one_hot, ClinicalSet};
pub use logreg::{fit_l1_logreg, kkt_residual, sigmoid, FitOptions, LogRegModel};
pub use protocol::{best_shap_aggregate, run_protocol, ProtocolConfig, SplitResult, Stage};
pub use select::{anova_f, anova_f_select, Standardizer};
pub use shap::{linear_shap, LinearShap, ShapRanking};
pub use skill::{roc_auc, skill, SkillScores};
pub use smote::smote;
pub use splits::{make_splits, Split, SplitPlan};
