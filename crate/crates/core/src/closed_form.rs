//! Short-horizon closed forms for the tie race.
//!
//! These expand the race from a published tie only a couple of attacker
//! blocks deep. They coincide with the exact fate values for strategies
//! without the fork flag and serve as a cross-check elsewhere.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::metrics::compute_ph_boundary;
use crate::model::{ModelParams, StrategyFlags};

/// Probabilities that the attacker's contested branch loses a published tie,
/// for N = 2 and N = 3, from the 2x2 linear system linking them.
pub fn tie_loss(params: &ModelParams, flags: StrategyFlags) -> Result<[f64; 2]> {
    let (ph_minus1, _) = compute_ph_boundary(params);
    let (a, p1, b2) = (params.alpha, params.p_beta1, params.beta2);
    let (f, l, t) = (
        StrategyFlags::ind(flags.fork),
        StrategyFlags::ind(flags.lead),
        StrategyFlags::ind(flags.trail),
    );
    let behind = (1.0 - t) + ph_minus1 * t;
    // PH_N = c2(N) x2 + c3(N) x3
    let c2 = |n: usize| p1 * (1.0 - params.gamma(n));
    let c3 = |n: usize| b2 * (params.g_h(n) + 0.5 * params.g_ah(n));

    let mut m = Matrix2::<f64>::identity();
    let mut rhs = Vector2::zeros();
    for (row, n) in [2usize, 3].into_iter().enumerate() {
        rhs[row] = c2(n) * behind + b2 * params.g_h(n) * behind;
        let x2 = b2 * params.g_ah(n) + a * f * (c2(n) + a * l * c2(2));
        let x3 = a * f * (c3(n) + a * l * c3(3));
        m[(row, 0)] -= x2;
        m[(row, 1)] -= x3;
    }
    let lu = m.lu();
    if lu.determinant().abs() < 1e-14 {
        return Err(Error::SingularTieSystem);
    }
    let x = lu.solve(&rhs).ok_or(Error::SingularTieSystem)?;
    Ok([x[0], x[1]])
}

/// Probability that a block withheld during a published tie wins, given the
/// tie-loss probabilities.
pub fn withheld_win(params: &ModelParams, flags: StrategyFlags, tie: [f64; 2]) -> f64 {
    let (a, b, p1, b2) = (params.alpha, params.beta, params.p_beta1, params.beta2);
    let [x2, x3] = tie;
    let bracket = 1.0 - b * (p1 * x2 + b2 * x3)
        + p1 * (p1 * params.gamma(2) * x2 + b2 * (0.5 * params.g_ah(2) + params.g_a(2)) * x3)
        + b2 * (p1 * params.gamma(3) * x2 + b2 * (0.5 * params.g_ah(3) + params.g_a(3)) * x3);
    p1 * (1.0 - x2) + b2 * (1.0 - x3) + a * StrategyFlags::ind(flags.lead) * bracket
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::solve_ph_tie;
    use crate::model::{validate_params, RawParams};

    #[test]
    fn matches_exact_race_without_fork_flag() {
        for flags in [StrategyFlags::S, StrategyFlags::L, StrategyFlags::T1, StrategyFlags::LT] {
            for (alpha, theta) in [(0.1, 0.01), (0.3, 0.1), (0.45, 0.2)] {
                let p = validate_params(&RawParams::new(alpha, theta)).unwrap();
                let exact = solve_ph_tie(&p, flags).unwrap();
                let [x2, x3] = tie_loss(&p, flags).unwrap();
                assert!((x2 - exact.ph_tie(2)).abs() < 1e-12, "{flags} {alpha} {theta}");
                assert!((x3 - exact.ph_tie(3)).abs() < 1e-12, "{flags} {alpha} {theta}");
            }
        }
    }

    #[test]
    fn perfect_network_tie_is_one_minus_gamma() {
        let p = validate_params(&RawParams::new(0.3, 0.0)).unwrap();
        let [x2, _] = tie_loss(&p, StrategyFlags::S).unwrap();
        assert!((x2 - 0.7 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn withheld_win_without_lead_flag_drops_the_bracket() {
        let p = validate_params(&RawParams::new(0.3, 0.05)).unwrap();
        let tie = tie_loss(&p, StrategyFlags::F).unwrap();
        let expected = p.p_beta1 * (1.0 - tie[0]) + p.beta2 * (1.0 - tie[1]);
        assert_eq!(withheld_win(&p, StrategyFlags::F, tie), expected);
        assert!(withheld_win(&p, StrategyFlags::LF, tie) > expected);
    }

    #[test]
    fn fork_flag_values_stay_close_to_exact() {
        let p = validate_params(&RawParams::new(0.3, 0.01)).unwrap();
        let exact = solve_ph_tie(&p, StrategyFlags::LFT).unwrap();
        let [x2, _] = tie_loss(&p, StrategyFlags::LFT).unwrap();
        assert!((x2 - exact.ph_tie(2)).abs() < 0.05);
    }
}
