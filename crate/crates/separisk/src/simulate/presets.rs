//! Named generating processes: five coverage scenarios paired with the
//! hazard-model formulas their estimation stage fits, and four
//! illustrative processes that show how the component effects move the
//! counterfactual risk curves.

use super::dgp::{DgpCoefficients, HazardIndex};
use super::SimError;

/// A generating process and the analysis formulas used on cohorts drawn
/// from it.
#[derive(Debug, Clone)]
pub struct ScenarioPreset {
    pub id: u8,
    pub dgp: DgpCoefficients,
    /// Event-of-interest hazard model formula.
    pub y_formula: &'static str,
    /// Competing-event hazard model formula.
    pub d_formula: &'static str,
}

fn base(y_hazard: HazardIndex, d_hazard: HazardIndex) -> DgpCoefficients {
    DgpCoefficients {
        alpha_y: 0.01,
        alpha_d: 0.03,
        y_hazard,
        d_hazard,
        l1_prob: 0.25,
        l2_prob: [0.8, 0.2],
        k_horizon: 99,
    }
}

/// Coverage-study scenario. 1 and 5 pair a clean process with a correct
/// model; 2 and 3 omit the L2 term from one hazard model; 4 breaks the
/// component separation itself: the competing-event component also acts
/// directly on the event-of-interest hazard, so a hazard model indexed by
/// the single trial treatment cannot target mismatched component pairs.
/// Estimates for (a_y=0, a_d=1) are then badly biased, while (1, 0) stays
/// close because the event index is saturated at both 10 and 15.
pub fn coverage_scenario(id: u8) -> Result<ScenarioPreset, SimError> {
    let (y, d, y_formula, d_formula) = match id {
        1 => (
            HazardIndex {
                a_y: 10.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                a_d: -2.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
            "1 + A + l1 + l2",
            "1 + A + l1",
        ),
        2 => (
            HazardIndex {
                a_y: 10.0,
                l1: -2.0,
                l2: 5.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                a_d: -2.0,
                l1: 5.0,
                l2: -2.0,
                ..HazardIndex::default()
            },
            "1 + A + l1 + l2",
            "1 + A + l1",
        ),
        3 => (
            HazardIndex {
                a_y: 10.0,
                l1: 5.0,
                l2: -10.0,
                a_y_l1: 5.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                a_d: -2.0,
                l1: 5.0,
                l2: -10.0,
                ..HazardIndex::default()
            },
            "1 + A + l1",
            "1 + A + l1 + l2",
        ),
        4 => (
            HazardIndex {
                a_y: 10.0,
                a_d: 5.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                a_d: -2.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
            "1 + A + l1 + l2",
            "1 + A + l1",
        ),
        5 => (
            HazardIndex {
                a_y: 10.0,
                l1: -10.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                a_d: -2.0,
                ..HazardIndex::default()
            },
            "1 + A",
            "1 + A",
        ),
        other => {
            return Err(SimError::PresetUnknown {
                family: "coverage",
                id: other,
            })
        }
    };
    Ok(ScenarioPreset {
        id,
        dgp: base(y, d),
        y_formula,
        d_formula,
    })
}

/// Illustrative generating process, meant for four-arm cohorts and truth
/// curves only. 1: the competing-event component is null, so the direct
/// contrast equals the total effect. 2: the interest component is null,
/// so the indirect contrast equals the total effect. 3: both components
/// raise their hazards. 4: the interest component raises its hazard while
/// the competing component lowers the competing hazard.
pub fn illustrative_scenario(id: u8) -> Result<DgpCoefficients, SimError> {
    let (y, d) = match id {
        1 => (
            HazardIndex {
                a_y: 10.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                l1: 5.0,
                ..HazardIndex::default()
            },
        ),
        2 => (
            HazardIndex {
                l1: 5.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                a_d: 5.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
        ),
        3 => (
            HazardIndex {
                a_y: 10.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                a_d: 5.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
        ),
        4 => (
            HazardIndex {
                a_y: 10.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
            HazardIndex {
                a_d: -5.0,
                l1: 5.0,
                ..HazardIndex::default()
            },
        ),
        other => {
            return Err(SimError::PresetUnknown {
                family: "illustrative",
                id: other,
            })
        }
    };
    Ok(base(y, d))
}

/// Two-interval graph of a generating process in the graph DSL. The
/// `expand` skeleton always carries each component's edge into its own
/// hazard; covariate and cross-component edges appear only when the
/// corresponding coefficients are nonzero. Two intervals suffice because
/// the process is structurally identical in every interval.
pub fn canonical_graph(dgp: &DgpCoefficients) -> String {
    let mut out = String::from("# Two-interval skeleton of the generating process.\nexpand K=2\n");
    if dgp.d_hazard.a_y != 0.0 || dgp.d_hazard.a_y_l1 != 0.0 {
        out.push_str("A_Y -> D1\nA_Y -> D2\n");
    }
    if dgp.y_hazard.a_d != 0.0 || dgp.y_hazard.a_d_l1 != 0.0 {
        out.push_str("A_D -> Y1\nA_D -> Y2\n");
    }
    let y_l = dgp.y_hazard.l1 != 0.0
        || dgp.y_hazard.l2 != 0.0
        || dgp.y_hazard.a_y_l1 != 0.0
        || dgp.y_hazard.a_d_l1 != 0.0;
    if y_l {
        out.push_str("L -> Y1\nL -> Y2\n");
    }
    let d_l = dgp.d_hazard.l1 != 0.0
        || dgp.d_hazard.l2 != 0.0
        || dgp.d_hazard.a_y_l1 != 0.0
        || dgp.d_hazard.a_d_l1 != 0.0;
    if d_l {
        out.push_str("L -> D1\nL -> D2\n");
    }
    out
}
