//! Mixture-of-experts models for partial rank data.
//!
//! Each expert is a Benter density over rankings (Plackett–Luce with
//! stage-wise dampening); membership in the experts is a multinomial-logistic
//! function of voter covariates. Models are fitted by an EM algorithm whose
//! M step is carried out with minorize-maximize updates, compared with BIC,
//! and searched over covariate subsets by backward elimination.
//!
//! The crate also tabulates single-seat STV elections and generates
//! synthetic ballot data from a known model.

pub mod benter;
pub mod emm;
pub mod error;
pub mod gating;
pub mod io;
pub mod selection;
pub mod stv;
pub mod synth;
pub mod types;

pub use benter::{log_likelihood, log_prob_ballot, plackett_luce_dampening, sample_ballot};
pub use emm::{fit, fit_from, FitConfig, FitResult, Responsibilities};
pub use error::{Error, Result};
pub use gating::GatingParams;
pub use types::{validate_dataset, Ballot, Dataset, MoEParams};
