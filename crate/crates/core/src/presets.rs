//! Fitted parameter sets for the southern California / western Nevada
//! mainshock catalog (M >= 4, 1932-1964 training window).

use crate::hmm::HmmParams;
use crate::num::Real;

fn lits<T: Real>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::lit(x)).collect()
}

/// Two-state time-only model: short (1.4 d) and long (21.1 d) regimes.
pub fn two_state<T: Real>() -> HmmParams<T> {
    HmmParams::new(lits(&[0.0, 1.0]), vec![lits(&[0.446, 0.554]), lits(&[0.040, 0.960])], lits(&[1.4, 21.1]))
        .expect("valid preset")
}

/// Four-state East/West model with states (short-East, long-East,
/// short-West, long-West).
///
/// The third transition row is tabulated to three decimals and sums to
/// 0.999; rows are renormalized.
pub fn east_west<T: Real>() -> HmmParams<T> {
    HmmParams {
        n_states: 4,
        pi: lits(&[0.0, 0.0, 1.0, 0.0]),
        trans: vec![
            lits(&[0.512, 0.475, 0.013, 0.0]),
            lits(&[0.041, 0.0, 0.372, 0.587]),
            lits(&[0.032, 0.031, 0.625, 0.311]),
            lits(&[0.005, 0.117, 0.733, 0.145]),
        ],
        lambda: lits(&[2.02, 21.59, 5.12, 22.82]),
        region_dist: Some(vec![lits(&[1.0, 0.0]), lits(&[0.88, 0.12]), lits(&[0.0, 1.0]), lits(&[0.08, 0.92])]),
    }
    .normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        two_state::<f64>().validate().unwrap();
        two_state::<f32>().validate().unwrap();
        let ew = east_west::<f64>();
        ew.validate().unwrap();
        assert!((ew.trans[2][2] - 0.625 / 0.999).abs() < 1e-15);
    }
}
