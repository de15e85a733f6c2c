//! Unit-weighted zero-sum constants of `Z_{p^alpha} (+) Z_{p^beta}`: exact decision and
//! witnesses, a constructive finder that follows the algebraic reduction, and a survey layer
//! that checks `s_A`, `eta_A` and the extremal sequences with explicit evidence.

pub mod finder;
pub mod group;
pub mod lemmas;
pub mod sequence;
pub mod solver;
pub mod survey;

pub use finder::{replay, structured_find, FinderError, StructuredTrace, TraceStep};
pub use group::{Automorphism, Element, GroupError, GroupParams};
pub use sequence::{
    extremal_eta_sequence, extremal_s_sequence, CanonicalSpace, OrbitTable, OrderProfile, Sequence, SequenceError,
};
pub use solver::{
    brute_force_zero_sum, check_certificate, find_certificate, has_weighted_zero_sum, verify_certificate, Certificate, Mode,
    SolverError,
};
pub use survey::{verify_paper, Evidence, ExtremalKind, SurveyConfig, SurveyError, SurveyReport};
