//! What-if evaluation: a household's own answers layered over the
//! dataset-mode result for its parcel, or a fully manual entry.

use serde::{Deserialize, Serialize};

use crate::data::Neighborhood;
use crate::eligibility::{Criterion, EligibilityContext, EligibilityResult, LienMode, LienProvenance, Reason};
use crate::income::IncomeEstimate;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WhatIfError {
    #[error("invalid what-if input")]
    Invalid { fields: Vec<FieldError> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Self-reported answers that cannot be checked against records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Attestations {
    pub tenure_one_year: Option<bool>,
    pub heir_status: Option<bool>,
    pub enrollment_window: Option<bool>,
}

impl Attestations {
    fn entries(&self) -> [(&'static str, Option<bool>); 3] {
        [
            ("tenure_one_year", self.tenure_one_year),
            ("heir_status", self.heir_status),
            ("enrollment_window", self.enrollment_window),
        ]
    }
}

/// Every field is optional. Without `parcel_id`, `neighborhood`,
/// `owner_occupied`, `household_size`, `annual_income` and `has_lien` are
/// all required.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhatIfRequest {
    pub parcel_id: Option<String>,
    pub neighborhood: Option<Neighborhood>,
    pub owner_occupied: Option<bool>,
    pub household_size: Option<u32>,
    pub annual_income: Option<f64>,
    pub has_lien: Option<bool>,
    pub attestations: Attestations,
}

impl WhatIfRequest {
    pub fn is_manual(&self) -> bool {
        self.parcel_id.is_none()
    }

    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut out = Vec::new();
        let mut push = |field: &str, message: &str| out.push(FieldError { field: field.into(), message: message.into() });
        if let Some(v) = self.annual_income {
            if !v.is_finite() || v < 0.0 {
                push("annual_income", "must be a nonnegative number");
            }
        }
        if self.household_size == Some(0) {
            push("household_size", "must be at least 1");
        }
        if self.is_manual() {
            let required = [
                ("neighborhood", self.neighborhood.is_none()),
                ("owner_occupied", self.owner_occupied.is_none()),
                ("household_size", self.household_size.is_none()),
                ("annual_income", self.annual_income.is_none()),
                ("has_lien", self.has_lien.is_none()),
            ];
            for (field, absent) in required {
                if absent {
                    push(field, "required when parcel_id is not given");
                }
            }
        } else if self.neighborhood.is_some() || self.owner_occupied.is_some() {
            let field = if self.neighborhood.is_some() { "neighborhood" } else { "owner_occupied" };
            push(field, "comes from the parcel record when parcel_id is given");
        }
        out
    }
}

/// Where a criterion's input came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Public records.
    Observed,
    /// Model estimate or a simulated draw.
    Predicted,
    /// Supplied by the household, not verified.
    Attested,
    /// The criterion is switched off in this configuration.
    NotApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub criterion: Criterion,
    pub ok: bool,
    pub provenance: Provenance,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttestationOutcome {
    pub name: String,
    pub value: Option<bool>,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub parcel_id: Option<String>,
    pub eligible: bool,
    pub location_ok: bool,
    pub owner_ok: bool,
    pub lien_ok: bool,
    pub income_ok: bool,
    pub criteria: Vec<CriterionOutcome>,
    pub reasons: Vec<Reason>,
    pub household_size: u32,
    pub household_size_provenance: Provenance,
    pub income_limit: f64,
    /// Only a user-supplied income, unless estimates were requested.
    pub annual_income: Option<f64>,
    pub attestations: Vec<AttestationOutcome>,
    /// Attestations answered `false`; any of them makes the household ineligible.
    pub failed_attestations: Vec<String>,
}

/// Apply `req` on top of the dataset-mode result for its parcel, or build a
/// manual evaluation when `base` is `None`. Omitting every override gives
/// back the dataset-mode decision.
pub fn evaluate_whatif(req: &WhatIfRequest, base: Option<&EligibilityResult>, ctx: &EligibilityContext, include_estimates: bool) -> Result<WhatIfResult, WhatIfError> {
    let fields = req.field_errors();
    if !fields.is_empty() {
        return Err(WhatIfError::Invalid { fields });
    }

    let (location_ok, location_src, owner_ok, owner_src) = match base {
        Some(b) => (b.location_ok, Provenance::Observed, b.owner_ok, Provenance::Observed),
        None => {
            let n = req.neighborhood.expect("checked");
            let location_ok = match n {
                Neighborhood::WashingtonPark => ctx.include_washington_park,
                n => n.in_program_area(),
            };
            (location_ok, Provenance::Attested, req.owner_occupied.expect("checked"), Provenance::Attested)
        }
    };

    let (lien_ok, lien_src) = match (req.has_lien, base) {
        (Some(has_lien), _) => (!has_lien, Provenance::Attested),
        (None, _) if ctx.lien_mode == LienMode::Ignore => (true, Provenance::NotApplied),
        (None, Some(b)) => {
            let src = match b.lien.provenance {
                LienProvenance::Observed { .. } | LienProvenance::Unobserved => Provenance::Observed,
                LienProvenance::Simulated { .. } => Provenance::Predicted,
                LienProvenance::Ignored => Provenance::NotApplied,
            };
            (b.lien_ok, src)
        }
        (None, None) => unreachable!("manual entries carry has_lien"),
    };

    let (size, size_src) = match (req.household_size, base) {
        (Some(s), _) => (s, Provenance::Attested),
        (None, Some(b)) => (b.estimated_household_size, Provenance::Predicted),
        (None, None) => unreachable!("manual entries carry household_size"),
    };
    let (income, income_src) = match (req.annual_income, base) {
        (Some(v), _) => (IncomeEstimate::Estimated(v), Provenance::Attested),
        (None, Some(b)) => (b.estimated_income, Provenance::Predicted),
        (None, None) => unreachable!("manual entries carry annual_income"),
    };
    let income_limit = ctx.ami.limit(size);
    let income_ok = match (req.household_size, req.annual_income, base) {
        // Nothing about income changed: keep the dataset-mode decision as is.
        (None, None, Some(b)) => b.income_ok,
        _ => crate::eligibility::income_eligible(income, size, ctx),
    };

    let outcomes = [
        (Criterion::Location, location_ok, location_src),
        (Criterion::OwnerOccupancy, owner_ok, owner_src),
        (Criterion::Liens, lien_ok, lien_src),
        (Criterion::Income, income_ok, income_src),
    ];
    let criteria: Vec<CriterionOutcome> = outcomes
        .iter()
        .map(|&(criterion, ok, provenance)| CriterionOutcome { criterion, ok, provenance, explanation: criterion.explanation().to_owned() })
        .collect();
    let reasons = criteria
        .iter()
        .filter(|c| !c.ok)
        .map(|c| Reason { criterion: c.criterion, message: c.explanation.clone() })
        .collect();
    let attestations: Vec<AttestationOutcome> =
        req.attestations.entries().iter().map(|&(name, value)| AttestationOutcome { name: name.into(), value, verified: false }).collect();
    let failed_attestations: Vec<String> =
        attestations.iter().filter(|a| a.value == Some(false)).map(|a| a.name.clone()).collect();

    let annual_income = match income_src {
        Provenance::Attested => req.annual_income,
        _ if include_estimates => income.value(),
        _ => None,
    };

    Ok(WhatIfResult {
        parcel_id: base.map(|b| b.parcel_id.clone()),
        eligible: outcomes.iter().all(|o| o.1) && failed_attestations.is_empty(),
        location_ok,
        owner_ok,
        lien_ok,
        income_ok,
        criteria,
        reasons,
        household_size: size,
        household_size_provenance: size_src,
        income_limit,
        annual_income,
        attestations,
        failed_attestations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eligibility::{AmiTable, LienCheck};

    fn ctx() -> EligibilityContext {
        let ami = AmiTable::new((1..=8).map(|s| (s, 40000.0 + 5000.0 * f64::from(s))).collect()).unwrap();
        EligibilityContext::new(ami)
    }

    fn base() -> EligibilityResult {
        EligibilityResult {
            parcel_id: "P1".into(),
            location_ok: true,
            owner_ok: true,
            lien_ok: true,
            income_ok: true,
            lien: LienCheck { ok: true, provenance: LienProvenance::Simulated { draw: 0.2, rate: 0.41 } },
            eligible: true,
            reasons: vec![],
            estimated_household_size: 3,
            income_limit: 55000.0,
            estimated_income: IncomeEstimate::Estimated(30000.0),
        }
    }

    #[test]
    fn no_overrides_keeps_the_dataset_decision() {
        let r = evaluate_whatif(&WhatIfRequest { parcel_id: Some("P1".into()), ..Default::default() }, Some(&base()), &ctx(), false).unwrap();
        assert!(r.eligible);
        assert_eq!(r.criteria[2].provenance, Provenance::Predicted);
        assert_eq!(r.annual_income, None);
    }

    #[test]
    fn lien_override_makes_ineligible() {
        let req = WhatIfRequest { parcel_id: Some("P1".into()), has_lien: Some(true), ..Default::default() };
        let r = evaluate_whatif(&req, Some(&base()), &ctx(), false).unwrap();
        assert!(!r.eligible);
        assert_eq!(r.reasons[0].criterion, Criterion::Liens);
        assert_eq!(r.criteria[2].provenance, Provenance::Attested);
    }

    #[test]
    fn income_override_uses_the_given_size() {
        let req = WhatIfRequest { parcel_id: Some("P1".into()), household_size: Some(1), annual_income: Some(44999.0), ..Default::default() };
        assert!(evaluate_whatif(&req, Some(&base()), &ctx(), false).unwrap().income_ok);
        let req = WhatIfRequest { annual_income: Some(45000.0), ..req };
        assert!(!evaluate_whatif(&req, Some(&base()), &ctx(), false).unwrap().income_ok);
    }

    #[test]
    fn estimates_need_the_flag() {
        let req = WhatIfRequest { parcel_id: Some("P1".into()), ..Default::default() };
        assert_eq!(evaluate_whatif(&req, Some(&base()), &ctx(), true).unwrap().annual_income, Some(30000.0));
    }

    #[test]
    fn false_attestation_blocks() {
        let req = WhatIfRequest {
            parcel_id: Some("P1".into()),
            attestations: Attestations { heir_status: Some(false), ..Default::default() },
            ..Default::default()
        };
        let r = evaluate_whatif(&req, Some(&base()), &ctx(), false).unwrap();
        assert!(!r.eligible);
        assert_eq!(r.failed_attestations, vec!["heir_status".to_string()]);
        assert!(r.attestations.iter().all(|a| !a.verified));
    }

    #[test]
    fn bad_input_lists_fields() {
        let req = WhatIfRequest { annual_income: Some(-1.0), ..Default::default() };
        let Err(WhatIfError::Invalid { fields }) = evaluate_whatif(&req, None, &ctx(), false) else { panic!() };
        let names: Vec<&str> = fields.iter().map(|f| f.field.as_str()).collect();
        assert_eq!(names, ["annual_income", "neighborhood", "owner_occupied", "household_size", "has_lien"]);
    }

    #[test]
    fn manual_entry() {
        let req = WhatIfRequest {
            neighborhood: Some(Neighborhood::WashingtonPark),
            owner_occupied: Some(true),
            household_size: Some(2),
            annual_income: Some(10000.0),
            has_lien: Some(false),
            ..Default::default()
        };
        let mut c = ctx();
        assert!(evaluate_whatif(&req, None, &c, false).unwrap().eligible);
        c.include_washington_park = false;
        let r = evaluate_whatif(&req, None, &c, false).unwrap();
        assert!(!r.location_ok && !r.eligible);
    }
}
