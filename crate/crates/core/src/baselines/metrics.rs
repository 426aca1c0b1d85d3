use serde::Serialize;

/// Smallest gap reported on the log scale.
pub const GAP_FLOOR: f64 = 1e-12;

/// `log(F(rho_k) - F_ref)` with non-positive gaps clamped to the floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapPoint {
    pub log_gap: f64,
    /// Set when the raw gap was below the floor (reference noise or an exact hit).
    pub floored: bool,
}

/// Per-iteration log gaps of `losses` against `reference`.
pub fn nll_gap(losses: &[f64], reference: f64) -> Vec<GapPoint> {
    losses
        .iter()
        .map(|&l| {
            let gap = l - reference;
            if gap < GAP_FLOOR {
                GapPoint {
                    log_gap: GAP_FLOOR.ln(),
                    floored: true,
                }
            } else {
                GapPoint {
                    log_gap: gap.ln(),
                    floored: false,
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_hit_is_floored() {
        let g = nll_gap(&[1.5], 1.5);
        assert!(g[0].floored);
        assert_eq!(g[0].log_gap, GAP_FLOOR.ln());
    }

    #[test]
    fn known_gaps() {
        let g = nll_gap(&[2.0, 1.0 + std::f64::consts::E.recip()], 1.0);
        assert!((g[0].log_gap - 0.0).abs() < 1e-15);
        assert!((g[1].log_gap + 1.0).abs() < 1e-15);
    }
}
