use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the measured source-to-target transmission is split.
///
/// Both readings take the transmission as input path times the output path
/// of mode-matched light, so the collection lens and the polarizer are the
/// only extra factors for scattered photons. They differ in which scattered
/// photons can herald.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainReading {
    /// Every scattered photon that survives lens and polarizer is counted.
    #[default]
    AnyScatter,
    /// Only diagonal decays reach the detector; the diagonal branching is an
    /// additional factor.
    DiagonalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetChain {
    /// Measured transmission from the source output to the target output.
    pub transmission: f64,
    pub lens: f64,
    pub polarizer: f64,
    /// Appears in both the source-rate calibration and the herald chain.
    pub detector: f64,
    pub diagonal_branching: f64,
    pub reading: ChainReading,
}

impl Default for BudgetChain {
    fn default() -> Self {
        Self { transmission: 0.003, lens: 0.20, polarizer: 0.5, detector: 1.0, diagonal_branching: 0.5, reading: ChainReading::AnyScatter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Photons per second arriving at the target.
    pub r_incident: f64,
    /// Probability that an absorbed photon produces a recorded herald,
    /// times the output half of the transmission.
    pub eta_herald: f64,
    pub p_abs: f64,
    pub quantum_efficiency: f64,
}

/// Absorption probability per incident photon from measured rates.
///
/// `r_source` is a detected rate, so the photon flux is `r_source / detector`.
/// With a random target spin only half the photons find an absorbing spin
/// state, which sets the quantum efficiency to `p_abs / 0.5`.
pub fn efficiency_budget(chain: &BudgetChain, r_source: f64, r_herald: f64, spin_random: bool) -> Result<Budget> {
    let factors = [
        ("transmission", chain.transmission),
        ("lens", chain.lens),
        ("polarizer", chain.polarizer),
        ("detector", chain.detector),
        ("diagonal_branching", chain.diagonal_branching),
    ];
    for (k, v) in factors {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Config(format!("budget.{k} = {v} must lie in (0, 1]")));
        }
    }
    if !(r_source > 0.0) || !(r_herald > 0.0) {
        return Err(Error::Config("budget rates (1/s) must be > 0".into()));
    }
    let flux = r_source / chain.detector;
    // input and output halves of the transmission cancel into one product
    let r_incident = flux * chain.transmission;
    let mut eta_herald = chain.lens * chain.polarizer * chain.detector;
    if chain.reading == ChainReading::DiagonalOnly {
        eta_herald *= chain.diagonal_branching;
    }
    let p_abs = r_herald / (r_incident * eta_herald);
    let quantum_efficiency = if spin_random { p_abs / 0.5 } else { p_abs };
    Ok(Budget { r_incident, eta_herald, p_abs, quantum_efficiency })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_chain() {
        let chain = BudgetChain { transmission: 1.0, lens: 1.0, polarizer: 1.0, detector: 1.0, diagonal_branching: 1.0, reading: ChainReading::AnyScatter };
        let b = efficiency_budget(&chain, 1e6, 1e6, false).unwrap();
        assert!((b.p_abs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detector_efficiency_cancels() {
        let a = efficiency_budget(&BudgetChain::default(), 5.5e6, 90.0, true).unwrap();
        let b = efficiency_budget(&BudgetChain { detector: 0.5, ..BudgetChain::default() }, 5.5e6, 90.0, true).unwrap();
        assert!((a.p_abs - b.p_abs).abs() < 1e-15);
    }

    #[test]
    fn zero_factor_rejected() {
        assert!(efficiency_budget(&BudgetChain { lens: 0.0, ..BudgetChain::default() }, 1.0, 1.0, true).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn linear_in_herald_rate(r in 1.0f64..1e3, c in 0.01f64..100.0, t in 1e-4f64..1.0) {
                let chain = BudgetChain { transmission: t, ..BudgetChain::default() };
                let a = efficiency_budget(&chain, 5.5e6, r, true).unwrap();
                let b = efficiency_budget(&chain, 5.5e6, c * r, true).unwrap();
                prop_assert!((b.p_abs / a.p_abs - c).abs() < 1e-9 * c);
            }
        }
    }
}
