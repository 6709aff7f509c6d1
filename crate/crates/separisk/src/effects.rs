//! Contrasts between risk curves: total effect, separable direct effect
//! (varying the event-of-interest component a_y with the competing-event
//! component held), separable indirect effect (varying a_d with a_y held),
//! and the additive decomposition connecting the three.

use std::io::Write;

use crate::event_history::format_float;
use crate::gformula::RiskCurve;

#[derive(Debug, thiserror::Error)]
pub enum EffectError {
    #[error("curves cover different grids ({a} vs {b} intervals)")]
    GridMismatch { a: u32, b: u32 },
    #[error("cannot contrast curves from different estimators ({a} vs {b})")]
    MixedEstimators { a: String, b: String },
    #[error("targets ({ay_a},{ad_a}) vs ({ay_b},{ad_b}) do not form a named contrast")]
    InvalidPair {
        ay_a: u8,
        ad_a: u8,
        ay_b: u8,
        ad_b: u8,
    },
    #[error("risk ratio denominator is not positive at k={k}")]
    NonpositiveDenominator { k: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectKind {
    Total,
    /// Event-of-interest component varied, competing component held at a_d.
    SepDirect {
        a_d: u8,
    },
    /// Competing component varied, event component held at a_y.
    SepIndirect {
        a_y: u8,
    },
}

impl std::fmt::Display for EffectKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EffectKind::Total => f.write_str("total"),
            EffectKind::SepDirect { a_d } => write!(f, "sep_direct(a_d={a_d})"),
            EffectKind::SepIndirect { a_y } => write!(f, "sep_indirect(a_y={a_y})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectScale {
    RiskDifference,
    RiskRatio,
}

impl std::fmt::Display for EffectScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EffectScale::RiskDifference => "risk_difference",
            EffectScale::RiskRatio => "risk_ratio",
        })
    }
}

/// A pointwise contrast of two risk curves, first minus (or over) second.
#[derive(Debug, Clone)]
pub struct EffectCurve {
    pub kind: EffectKind,
    pub scale: EffectScale,
    values: Vec<f64>,
    pub component_curves: (RiskCurve, RiskCurve),
}

impl EffectCurve {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_intervals(&self) -> u32 {
        self.values.len() as u32
    }

    /// Value at interval `k` (1-based). Panics when k is off the grid.
    pub fn at(&self, k: u32) -> f64 {
        self.values[(k - 1) as usize]
    }

    /// JSON array of `{kind, scale, k, estimate}` records.
    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::json!({
                    "kind": self.kind.to_string(),
                    "scale": self.scale.to_string(),
                    "k": i + 1,
                    "estimate": v,
                })
            })
            .collect();
        serde_json::to_string(&rows).expect("effect serialization cannot fail")
    }

    /// Writes `kind,scale,k,estimate` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), EffectError> {
        writeln!(out, "kind,scale,k,estimate")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                self.kind,
                self.scale,
                i + 1,
                format_float(*v)
            )?;
        }
        Ok(())
    }
}

fn infer_kind(a: &RiskCurve, b: &RiskCurve) -> Result<EffectKind, EffectError> {
    let y_differs = a.a_y != b.a_y;
    let d_differs = a.a_d != b.a_d;
    match (y_differs, d_differs) {
        (true, false) => Ok(EffectKind::SepDirect { a_d: a.a_d }),
        (false, true) => Ok(EffectKind::SepIndirect { a_y: a.a_y }),
        // a self-contrast is a degenerate total contrast
        (false, false) => Ok(EffectKind::Total),
        (true, true) if a.a_y == a.a_d && b.a_y == b.a_d => Ok(EffectKind::Total),
        (true, true) => Err(EffectError::InvalidPair {
            ay_a: a.a_y,
            ad_a: a.a_d,
            ay_b: b.a_y,
            ad_b: b.a_d,
        }),
    }
}

fn check_compatible(a: &RiskCurve, b: &RiskCurve) -> Result<(), EffectError> {
    if a.n_intervals() != b.n_intervals() {
        return Err(EffectError::GridMismatch {
            a: a.n_intervals(),
            b: b.n_intervals(),
        });
    }
    if a.estimator != b.estimator {
        return Err(EffectError::MixedEstimators {
            a: a.estimator.to_string(),
            b: b.estimator.to_string(),
        });
    }
    Ok(())
}

/// Pointwise contrast `curve_a` minus (or over) `curve_b`, with the effect
/// kind inferred from how the two targets differ.
pub fn contrast(
    curve_a: &RiskCurve,
    curve_b: &RiskCurve,
    scale: EffectScale,
) -> Result<EffectCurve, EffectError> {
    check_compatible(curve_a, curve_b)?;
    let kind = infer_kind(curve_a, curve_b)?;
    let mut values = Vec::with_capacity(curve_a.values().len());
    for (i, (va, vb)) in curve_a.values().iter().zip(curve_b.values()).enumerate() {
        let v = match scale {
            EffectScale::RiskDifference => va - vb,
            EffectScale::RiskRatio => {
                if *vb <= 0.0 {
                    return Err(EffectError::NonpositiveDenominator { k: i as u32 + 1 });
                }
                va / vb
            }
        };
        values.push(v);
    }
    Ok(EffectCurve {
        kind,
        scale,
        values,
        component_curves: (curve_a.clone(), curve_b.clone()),
    })
}

/// Additive decomposition total = direct + indirect on the risk-difference
/// scale. The outer curves carry targets (1,1) and (0,0); the middle curve
/// picks the path: (0,1) holds a_d=1 for the direct leg and a_y=0 for the
/// indirect leg, (1,0) the reverse.
pub fn separable_decomposition(
    r11: &RiskCurve,
    middle: &RiskCurve,
    r00: &RiskCurve,
) -> Result<(EffectCurve, EffectCurve, EffectCurve), EffectError> {
    check_compatible(r11, middle)?;
    check_compatible(middle, r00)?;
    if r11.a_y != 1 || r11.a_d != 1 || r00.a_y != 0 || r00.a_d != 0 {
        return Err(EffectError::InvalidPair {
            ay_a: r11.a_y,
            ad_a: r11.a_d,
            ay_b: r00.a_y,
            ad_b: r00.a_d,
        });
    }
    let (direct, indirect) = match (middle.a_y, middle.a_d) {
        (0, 1) => (
            contrast(r11, middle, EffectScale::RiskDifference)?,
            contrast(middle, r00, EffectScale::RiskDifference)?,
        ),
        (1, 0) => (
            contrast(middle, r00, EffectScale::RiskDifference)?,
            contrast(r11, middle, EffectScale::RiskDifference)?,
        ),
        _ => {
            return Err(EffectError::InvalidPair {
                ay_a: middle.a_y,
                ad_a: middle.a_d,
                ay_b: middle.a_y,
                ad_b: middle.a_d,
            })
        }
    };
    let total = contrast(r11, r00, EffectScale::RiskDifference)?;
    Ok((total, direct, indirect))
}
