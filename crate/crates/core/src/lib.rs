//! Forecasting and simulation for property-tax subsidy programs.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`data`]: load and validate parcel, assessment, rent, survey, lien
//!    and neighborhood records (or generate a seeded synthetic stand-in).
//! 2. [`cluster`]: turn complete assessment histories into binary change
//!    signatures, cluster them with Ward linkage and extract per-cluster
//!    annual trends; [`forecast`] assigns program-area parcels to those
//!    clusters with a [`forest`] classifier and projects their values.
//! 3. [`income`] and [`eligibility`]: predict household income from rent
//!    and house characteristics and evaluate the four program criteria.
//! 4. [`cost`]: convert projections into taxes and subsidies and estimate
//!    the program cost distribution by Monte Carlo.
//!
//! [`whatif`] layers a household's own answers over the dataset view, and
//! [`artifacts`] fixes where each stage writes its outputs.

pub mod data;
pub mod rng;
pub mod forest;
pub mod cluster;
pub mod forecast;
pub mod income;
pub mod eligibility;
pub mod cost;
pub mod policy;
pub mod whatif;
pub mod artifacts;
pub mod pipeline;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/forecasting.md")]
    mod forecasting {}
    #[doc = include_str!("../../../book/src/income.md")]
    mod income {}
    #[doc = include_str!("../../../book/src/eligibility.md")]
    mod eligibility {}
    #[doc = include_str!("../../../book/src/cost.md")]
    mod cost {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/api.md")]
    mod api {}
}
