//! Gains branch of cumulative prospect theory.
//!
//! Outcomes are ranked from best to worst. The decision weight of the outcome
//! at rank `i` is `w(G_i) - w(G_{i-1})`, where `G_i` is the probability of
//! doing at least as well as that outcome and `w` is the inverse-S weighting
//! function `w(p) = p^g / (p^g + (1 - p)^g)^(1/g)`.

use alloc::vec::Vec;

use crate::game::check_unit_exponent;
use crate::math::{abs, ln, pow};
use crate::{Error, Result};

/// Probabilities below this are treated as zero before weighting.
pub const PROB_FLOOR: f64 = 1e-12;

const SUM_TOL: f64 = 1e-12;

/// Probability weighting `w(p)`.
pub fn weight(p: f64, gamma: f64) -> Result<f64> {
    check_unit_exponent("gamma", gamma)?;
    check_probability(p)?;
    Ok(weight_unchecked(p, gamma))
}

#[inline]
pub(crate) fn weight_unchecked(p: f64, gamma: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else if gamma == 1.0 {
        p
    } else {
        let pg = pow(p, gamma);
        let qg = pow(1.0 - p, gamma);
        pg / pow(pg + qg, 1.0 / gamma)
    }
}

/// `dw/dgamma`. Zero at the endpoints, where `w` is pinned for every `gamma`.
pub fn weight_derivative_gamma(p: f64, gamma: f64) -> Result<f64> {
    check_unit_exponent("gamma", gamma)?;
    check_probability(p)?;
    Ok(weight_dgamma_unchecked(p, gamma))
}

#[inline]
pub(crate) fn weight_dgamma_unchecked(p: f64, gamma: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - p;
    let (lp, lq) = (ln(p), ln(q));
    let pg = pow(p, gamma);
    let qg = pow(q, gamma);
    let d = pg + qg;
    let w = pg / pow(d, 1.0 / gamma);
    // d/dg [g ln p - ln(d) / g]
    let dlog = lp + ln(d) / (gamma * gamma) - (pg * lp + qg * lq) / (gamma * d);
    w * dlog
}

/// `dw/dp` on the open interval; callers never need it at the endpoints.
#[inline]
pub(crate) fn weight_dp_unchecked(p: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        return 1.0;
    }
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - p;
    let pg = pow(p, gamma);
    let qg = pow(q, gamma);
    let d = pg + qg;
    let w = pg / pow(d, 1.0 / gamma);
    w * (gamma / p - (pg / p - qg / q) / d)
}

/// Concave utility on gains, `u(x) = x^alpha`.
pub fn utility_gain(x: f64, alpha: f64) -> Result<f64> {
    check_unit_exponent("alpha", alpha)?;
    if !(x >= 0.0) {
        return Err(Error::Domain {
            what: "gain utility",
            value: x,
        });
    }
    Ok(utility_unchecked(x, alpha))
}

#[inline]
pub(crate) fn utility_unchecked(x: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        x
    } else {
        pow(x, alpha)
    }
}

#[inline]
pub(crate) fn utility_derivative_unchecked(x: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        1.0
    } else {
        alpha * pow(x, alpha - 1.0)
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "probability weighting",
            value: p,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub value: f64,
    pub prob: f64,
}

/// Gains-only discrete prospect, sorted by descending value.
///
/// The sort is part of the type: the only constructors either sort or
/// reject unsorted input.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedOutcomeSet {
    outcomes: Vec<Outcome>,
}

impl WeightedOutcomeSet {
    /// Stable-sorts by descending value, so tied values keep input order.
    pub fn from_unsorted(values: &[f64], probs: &[f64]) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::Shape(alloc::format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        let mut order = Vec::with_capacity(values.len());
        rank_descending(values, &mut order);
        let outcomes = order
            .iter()
            .map(|&i| Outcome {
                value: values[i],
                prob: probs[i],
            })
            .collect();
        Self::validated(outcomes)
    }

    /// Accepts already-sorted outcomes; anything else is a contract error.
    pub fn from_sorted(outcomes: Vec<Outcome>) -> Result<Self> {
        if let Some(pos) = outcomes.windows(2).position(|w| w[1].value > w[0].value) {
            return Err(Error::Unsorted { position: pos + 1 });
        }
        Self::validated(outcomes)
    }

    fn validated(outcomes: Vec<Outcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::NotADistribution { sum: 0.0 });
        }
        for o in &outcomes {
            if !(o.value >= 0.0) {
                return Err(Error::Domain {
                    what: "gains-only outcome",
                    value: o.value,
                });
            }
            check_probability(o.prob)?;
        }
        let sum: f64 = outcomes.iter().map(|o| o.prob).sum();
        if abs(sum - 1.0) > SUM_TOL {
            return Err(Error::NotADistribution { sum });
        }
        Ok(Self { outcomes })
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

/// Rank-dependent decision weights, in the set's (descending) order.
pub fn decision_weights(ws: &WeightedOutcomeSet, gamma: f64) -> Result<Vec<f64>> {
    check_unit_exponent("gamma", gamma)?;
    let probs: Vec<f64> = ws.outcomes.iter().map(|o| o.prob).collect();
    let mut out = alloc::vec![0.0; probs.len()];
    fill_decision_weights(&probs, gamma, &mut out);
    Ok(out)
}

/// Decision weights for probabilities listed best-first.
///
/// Cumulatives are taken relative to the total mass and pinned to exactly 1
/// from the last outcome with positive probability on. For small `gamma`,
/// `w` is so steep near 1 that a rounding residue of 1e-16 in the running
/// sum would otherwise move the weights by several percent.
pub(crate) fn fill_decision_weights(sorted_probs: &[f64], gamma: f64, out: &mut [f64]) {
    let total: f64 = sorted_probs.iter().map(|&p| clamp_prob(p)).sum();
    let last = sorted_probs.iter().rposition(|&p| clamp_prob(p) > 0.0);
    let mut prefix = 0.0;
    let mut w_prev = 0.0;
    for (i, (o, &p)) in out.iter_mut().zip(sorted_probs).enumerate() {
        prefix += clamp_prob(p);
        let cum = match last {
            Some(l) if i >= l => 1.0,
            Some(_) => (prefix / total).min(1.0),
            None => 0.0,
        };
        let w = weight_unchecked(cum, gamma);
        *o = w - w_prev;
        w_prev = w;
    }
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    if p < PROB_FLOOR {
        0.0
    } else {
        p
    }
}

/// Rescales decision weights to sum to one.
pub fn normalize_weights(rho_tilde: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = rho_tilde.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain {
            what: "decision weight",
            value: bad,
        });
    }
    let total: f64 = rho_tilde.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    Ok(rho_tilde.iter().map(|x| x / total).collect())
}

/// CPT value `sum_i rho_i * u(x_i)` of a gains-only prospect.
pub fn cpt_value(ws: &WeightedOutcomeSet, alpha: f64, gamma: f64) -> Result<f64> {
    check_unit_exponent("alpha", alpha)?;
    let rho = decision_weights(ws, gamma)?;
    Ok(rho
        .iter()
        .zip(&ws.outcomes)
        .map(|(r, o)| r * utility_unchecked(o.value, alpha))
        .sum())
}

/// Indices of `values` sorted by descending value; ties keep index order.
pub(crate) fn rank_descending(values: &[f64], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..values.len());
    // Insertion sort: stable and the action sets are tiny.
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && values[order[j]] > values[order[j - 1]] {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
}

/// Normalized decision weights over outcomes in their original order.
///
/// Reuses the caller's buffers; this is the inner loop of every Bellman
/// sweep.
#[derive(Debug, Default, Clone)]
pub(crate) struct RankWeights {
    pub(crate) order: Vec<usize>,
    pub(crate) sorted_probs: Vec<f64>,
    pub(crate) sorted_rho: Vec<f64>,
    /// Normalized weight per outcome, indexed like the input.
    pub(crate) rho: Vec<f64>,
    /// Sum of the raw decision weights before normalization.
    pub(crate) total: f64,
}

impl RankWeights {
    pub(crate) fn compute(&mut self, values: &[f64], probs: &[f64], gamma: f64) {
        let n = values.len();
        rank_descending(values, &mut self.order);
        self.sorted_probs.clear();
        self.sorted_probs.extend(self.order.iter().map(|&i| probs[i]));
        self.sorted_rho.resize(n, 0.0);
        fill_decision_weights(&self.sorted_probs, gamma, &mut self.sorted_rho);
        self.total = self.sorted_rho.iter().sum();
        self.rho.resize(n, 0.0);
        for (rank, &i) in self.order.iter().enumerate() {
            self.rho[i] = self.sorted_rho[rank] / self.total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // Oracle values below were computed independently with mpmath at 30 digits:
    //   w(0.5, 0.5)      = 0.5^0.5 / (2 * 0.5^0.5)^2 = 0.35355339059327376
    //   2.0^0.7          = 1.6245047927124710
    //   w * 2^0.7 + (1 - w) * 1     = 1.2207957869052437
    const W_HALF_HALF: f64 = 0.353_553_390_593_273_8;
    const TWO_POW_07: f64 = 1.624_504_792_712_471;

    #[test]
    fn weight_identity_at_gamma_one() {
        for p in [0.0, 0.1, 0.37, 0.5, 0.99, 1.0] {
            assert_eq!(weight(p, 1.0).unwrap(), p);
        }
    }

    #[test]
    fn weight_endpoints() {
        assert_eq!(weight(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(weight(1.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn weight_half_half() {
        assert_abs_diff_eq!(weight(0.5, 0.5).unwrap(), W_HALF_HALF, epsilon = 1e-15);
    }

    #[test]
    fn weight_rejects_bad_inputs() {
        assert!(matches!(weight(0.5, 0.0), Err(Error::Parameter { .. })));
        assert!(matches!(weight(0.5, 1.5), Err(Error::Parameter { .. })));
        assert!(matches!(weight(-0.1, 0.5), Err(Error::Domain { .. })));
        assert!(matches!(weight(1.1, 0.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn utility_examples() {
        for alpha in [0.1, 0.7, 1.0] {
            assert_eq!(utility_gain(1.0, alpha).unwrap(), 1.0);
        }
        for x in [0.0, 0.3, 2.0, 7.5] {
            assert_eq!(utility_gain(x, 1.0).unwrap(), x);
        }
        assert_abs_diff_eq!(utility_gain(2.0, 0.7).unwrap(), TWO_POW_07, epsilon = 1e-14);
        assert!(matches!(utility_gain(-1.0, 0.7), Err(Error::Domain { .. })));
    }

    #[test]
    fn decision_weight_examples() {
        let single = WeightedOutcomeSet::from_unsorted(&[3.0], &[1.0]).unwrap();
        assert_eq!(decision_weights(&single, 0.5).unwrap(), vec![1.0]);

        let two = WeightedOutcomeSet::from_unsorted(&[2.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(decision_weights(&two, 1.0).unwrap(), vec![0.5, 0.5]);
        let rho = decision_weights(&two, 0.5).unwrap();
        assert_abs_diff_eq!(rho[0], W_HALF_HALF, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[1], 1.0 - W_HALF_HALF, epsilon = 1e-15);
    }

    #[test]
    fn unsorted_input_is_a_contract_error() {
        let outcomes = vec![
            Outcome { value: 1.0, prob: 0.5 },
            Outcome { value: 2.0, prob: 0.5 },
        ];
        assert_eq!(
            WeightedOutcomeSet::from_sorted(outcomes),
            Err(Error::Unsorted { position: 1 })
        );
    }

    #[test]
    fn outcome_set_rejects_losses_and_bad_mass() {
        assert!(WeightedOutcomeSet::from_unsorted(&[-1.0, 1.0], &[0.5, 0.5]).is_err());
        assert!(matches!(
            WeightedOutcomeSet::from_unsorted(&[1.0, 2.0], &[0.5, 0.4]),
            Err(Error::NotADistribution { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_weights(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(normalize_weights(&[0.2, 0.2]).unwrap(), vec![0.5, 0.5]);
        let rho = normalize_weights(&[W_HALF_HALF, 1.0 - W_HALF_HALF]).unwrap();
        assert_abs_diff_eq!(rho[0], W_HALF_HALF, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[1], 1.0 - W_HALF_HALF, epsilon = 1e-15);
        assert_eq!(normalize_weights(&[0.0, 0.0]), Err(Error::DegenerateDistribution));
    }

    #[test]
    fn cpt_value_examples() {
        let point = WeightedOutcomeSet::from_unsorted(&[2.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(cpt_value(&point, 0.7, 0.5).unwrap(), TWO_POW_07, epsilon = 1e-14);

        let ws = WeightedOutcomeSet::from_unsorted(&[1.0, 3.0, 2.0], &[0.2, 0.3, 0.5]).unwrap();
        assert_abs_diff_eq!(cpt_value(&ws, 1.0, 1.0).unwrap(), 0.2 + 0.9 + 1.0, epsilon = 1e-12);

        let ws = WeightedOutcomeSet::from_unsorted(&[2.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            cpt_value(&ws, 0.7, 0.5).unwrap(),
            1.220_795_786_905_243_7,
            epsilon = 1e-14
        );
    }

    #[test]
    fn tie_order_does_not_change_value() {
        let a = WeightedOutcomeSet::from_unsorted(&[2.0, 2.0, 1.0], &[0.1, 0.6, 0.3]).unwrap();
        let b = WeightedOutcomeSet::from_unsorted(&[2.0, 2.0, 1.0], &[0.6, 0.1, 0.3]).unwrap();
        assert_abs_diff_eq!(
            cpt_value(&a, 0.7, 0.4).unwrap(),
            cpt_value(&b, 0.7, 0.4).unwrap(),
            epsilon = 1e-14
        );
    }

    fn central_gamma(p: f64, g: f64) -> f64 {
        let h = 1e-6;
        (weight(p, g + h).unwrap() - weight(p, g - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn gamma_derivative_endpoints_and_fd() {
        assert_eq!(weight_derivative_gamma(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(weight_derivative_gamma(1.0, 0.5).unwrap(), 0.0);
        let d = weight_derivative_gamma(0.5, 0.5).unwrap();
        assert_abs_diff_eq!(d, central_gamma(0.5, 0.5), epsilon = 1e-6);
        let d = weight_derivative_gamma(0.1, 0.5).unwrap();
        let fd = central_gamma(0.1, 0.5);
        assert!(d.signum() == fd.signum() && d != 0.0);
    }

    #[test]
    fn gamma_derivative_matches_fd_on_grid() {
        for i in 1..40 {
            let p = i as f64 / 40.0;
            for j in 1..=20 {
                // keep gamma +- h inside (0, 1]
                let g = 0.05 + 0.94 * (j as f64 - 1.0) / 19.0;
                let d = weight_derivative_gamma(p, g).unwrap();
                assert_abs_diff_eq!(d, central_gamma(p, g), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn p_derivative_matches_fd() {
        for i in 1..20 {
            let p = i as f64 / 20.0;
            for g in [0.3, 0.5, 0.8, 1.0] {
                let h = 1e-7;
                let fd = (weight_unchecked(p + h, g) - weight_unchecked(p - h, g)) / (2.0 * h);
                assert_abs_diff_eq!(weight_dp_unchecked(p, g), fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn weight_monotone_on_fine_grid() {
        // below gamma ~0.28 the function dips near p = 0 and is not monotone
        for g in [0.3, 0.5, 0.61, 0.9, 1.0] {
            let mut prev = 0.0;
            for i in 0..=1000 {
                let w = weight(i as f64 / 1000.0, g).unwrap();
                assert!(w >= prev, "gamma {g} at {i}");
                prev = w;
            }
        }
    }

    fn distribution(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(0.0f64..10.0, n),
            proptest::collection::vec(0.01f64..1.0, n),
        )
            .prop_map(|(v, raw)| {
                let s: f64 = raw.iter().sum();
                (v, raw.iter().map(|x| x / s).collect())
            })
    }

    proptest! {
        #[test]
        fn weights_sum_to_one((values, probs) in (1usize..8).prop_flat_map(distribution), g in 0.05f64..=1.0) {
            let ws = WeightedOutcomeSet::from_unsorted(&values, &probs).unwrap();
            let total: f64 = decision_weights(&ws, g).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn risk_neutral_is_expectation((values, probs) in (1usize..8).prop_flat_map(distribution)) {
            let ws = WeightedOutcomeSet::from_unsorted(&values, &probs).unwrap();
            let expect: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
            prop_assert!((cpt_value(&ws, 1.0, 1.0).unwrap() - expect).abs() <= 1e-12);
        }

        #[test]
        fn value_monotone_in_outcomes(
            (values, probs) in (2usize..7).prop_flat_map(distribution),
            bump in 0.0f64..3.0,
            a in 0.2f64..=1.0,
            g in 0.2f64..=1.0,
        ) {
            let ws = WeightedOutcomeSet::from_unsorted(&values, &probs).unwrap();
            // raise the best outcome; rank order is preserved
            let best = ws.outcomes()[0];
            let mut raised: Vec<Outcome> = ws.outcomes().to_vec();
            raised[0] = Outcome { value: best.value + bump, prob: best.prob };
            let raised = WeightedOutcomeSet::from_sorted(raised).unwrap();
            prop_assert!(cpt_value(&raised, a, g).unwrap() >= cpt_value(&ws, a, g).unwrap() - 1e-12);
        }
    }
}
