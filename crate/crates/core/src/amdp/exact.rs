//! Exact planning and evaluation oracles: stationary distributions, gains
//! and biases, enumeration-based optimal policies, the LP Lagrangian and the
//! gap-to-suboptimality identity.

use nalgebra::{DMatrix, DVector};

use super::{
    has_unique_stationary, policy_reward_vector, policy_transition_matrix, OccupancyMeasure,
    Policy, TabularMdp, ValueAndGain,
};
use crate::error::{CoreError, Result};

const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
const BELLMAN_RESIDUAL_TOL: f64 = 1e-10;

/// Guard for exhaustive enumeration over the A^S deterministic policies.
const ENUMERATION_GUARD: f64 = 1e6;

fn check_policy_dims(mdp: &TabularMdp, policy: &Policy) -> Result<()> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(CoreError::DimensionMismatch {
            context: "policy shape",
            expected: mdp.num_states() * mdp.num_actions(),
            found: policy.num_states() * policy.num_actions(),
        });
    }
    Ok(())
}

/// The unique ν with νᵀP^π = νᵀ and Σν = 1, solved as a least-squares system
/// with an appended normalization row.
pub fn stationary_distribution(mdp: &TabularMdp, policy: &Policy) -> Result<DVector<f64>> {
    check_policy_dims(mdp, policy)?;
    let p_pi = policy_transition_matrix(mdp, policy);
    stationary_of_chain(&p_pi)
}

pub(crate) fn stationary_of_chain(p_pi: &DMatrix<f64>) -> Result<DVector<f64>> {
    let s_n = p_pi.nrows();
    if !has_unique_stationary(p_pi) {
        return Err(CoreError::Ergodicity(
            "chain does not have a unique stationary distribution".into(),
        ));
    }
    let mut system = DMatrix::zeros(s_n + 1, s_n);
    system
        .view_mut((0, 0), (s_n, s_n))
        .copy_from(&(DMatrix::identity(s_n, s_n) - p_pi.transpose()));
    for col in 0..s_n {
        system[(s_n, col)] = 1.0;
    }
    let mut rhs = DVector::zeros(s_n + 1);
    rhs[s_n] = 1.0;
    let solution = system
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| CoreError::Ergodicity(format!("stationary solve failed: {e}")))?;
    let mut nu = DVector::from_iterator(s_n, solution.iter().cloned());
    for (i, v) in nu.iter_mut().enumerate() {
        if *v < -1e-9 {
            return Err(CoreError::Ergodicity(format!(
                "stationary solve produced a negative mass {v} at state {i}"
            )));
        }
        *v = v.max(0.0);
    }
    let total: f64 = nu.iter().sum();
    nu /= total;
    let residual = (nu.transpose() * p_pi - nu.transpose()).abs().max();
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(CoreError::Ergodicity(format!(
            "stationary residual {residual} exceeds {STATIONARY_RESIDUAL_TOL}"
        )));
    }
    Ok(nu)
}

/// μ^π(s, a) = π(a|s)·ν^π(s).
pub fn occupancy_of_policy(mdp: &TabularMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    let nu = stationary_distribution(mdp, policy)?;
    let mut mu = DVector::zeros(mdp.num_state_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            mu[mdp.index_of(s, a)] = nu[s] * policy.prob(s, a);
        }
    }
    OccupancyMeasure::normalized(mu, mdp.num_states(), mdp.num_actions())
}

/// The gain ρ^π = ⟨μ^π, r⟩ and the bias solving
/// v(s) = Σ_a π(a|s)[r(s, a) − ρ + ⟨P(·|s, a), v⟩], normalized to ⟨ν^π, v⟩ = 0.
///
/// The bias comes from the nonsingular system (I − P^π + 1ν^πᵀ)v = r^π − ρ1,
/// whose solution automatically carries the zero-average normalization.
pub fn gain_and_bias(mdp: &TabularMdp, policy: &Policy) -> Result<ValueAndGain> {
    check_policy_dims(mdp, policy)?;
    let p_pi = policy_transition_matrix(mdp, policy);
    let nu = stationary_of_chain(&p_pi)?;
    let r_pi = policy_reward_vector(mdp, policy);
    let rho = nu.dot(&r_pi);
    let s_n = mdp.num_states();
    let ones = DVector::from_element(s_n, 1.0);
    let system = DMatrix::identity(s_n, s_n) - &p_pi + &ones * nu.transpose();
    let rhs = &r_pi - &ones * rho;
    let mut bias = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CoreError::Ergodicity("bias solve failed".into()))?;
    // square away rounding in the normalization; a constant shift keeps the
    // Bellman residual unchanged
    let shift = nu.dot(&bias);
    bias.iter_mut().for_each(|v| *v -= shift);
    let residual = (&bias - (&r_pi - &ones * rho + &p_pi * &bias)).abs().max();
    if residual > BELLMAN_RESIDUAL_TOL {
        return Err(CoreError::Ergodicity(format!(
            "Bellman residual {residual} exceeds {BELLMAN_RESIDUAL_TOL}"
        )));
    }
    let span = bias.max() - bias.min();
    Ok(ValueAndGain { rho, bias, span })
}

/// Exhaustive search over deterministic policies (sufficient for the MDP
/// class handled here): returns the gain-maximal policy, its gain and its
/// stationary state-action measure.
pub fn optimal_policy_oracle(mdp: &TabularMdp) -> Result<(Policy, f64, OccupancyMeasure)> {
    let count = (mdp.num_actions() as f64).powi(mdp.num_states() as i32);
    if count > ENUMERATION_GUARD {
        return Err(CoreError::Guard(format!(
            "{count} deterministic policies exceed the enumeration guard of {ENUMERATION_GUARD}; \
             use policy_iteration instead"
        )));
    }
    let mut best: Option<(Policy, f64)> = None;
    let mut actions = vec![0usize; mdp.num_states()];
    loop {
        let policy = Policy::deterministic(mdp.num_states(), mdp.num_actions(), &actions)?;
        let nu = stationary_distribution(mdp, &policy)?;
        let rho = (0..mdp.num_states())
            .map(|s| nu[s] * mdp.reward(s, actions[s]))
            .sum::<f64>();
        match &best {
            Some((_, best_rho)) if *best_rho >= rho => {}
            _ => best = Some((policy, rho)),
        }
        // advance the mixed-radix counter
        let mut carry = true;
        for slot in actions.iter_mut() {
            if !carry {
                break;
            }
            *slot += 1;
            if *slot == mdp.num_actions() {
                *slot = 0;
            } else {
                carry = false;
            }
        }
        if carry {
            break;
        }
    }
    let (policy, rho) = best.expect("at least one policy exists");
    let mu = occupancy_of_policy(mdp, &policy)?;
    Ok((policy, rho, mu))
}

/// Howard-style policy iteration for instances beyond the enumeration guard.
/// Ties keep the incumbent action so the iteration cannot cycle.
pub fn policy_iteration(
    mdp: &TabularMdp,
    max_sweeps: usize,
) -> Result<(Policy, f64, OccupancyMeasure)> {
    let mut actions: Vec<usize> = (0..mdp.num_states())
        .map(|s| {
            (0..mdp.num_actions())
                .max_by(|&a, &b| mdp.reward(s, a).partial_cmp(&mdp.reward(s, b)).unwrap())
                .unwrap()
        })
        .collect();
    for _ in 0..max_sweeps {
        let policy = Policy::deterministic(mdp.num_states(), mdp.num_actions(), &actions)?;
        let vg = gain_and_bias(mdp, &policy)?;
        let mut changed = false;
        for (s, incumbent_action) in actions.iter_mut().enumerate() {
            let q = |a: usize| {
                mdp.reward(s, a)
                    + (0..mdp.num_states())
                        .map(|next| mdp.transition_prob(s, a, next) * vg.bias[next])
                        .sum::<f64>()
            };
            let incumbent = q(*incumbent_action);
            let (best_a, best_q) = (0..mdp.num_actions())
                .map(|a| (a, q(a)))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            if best_q > incumbent + 1e-10 {
                *incumbent_action = best_a;
                changed = true;
            }
        }
        if !changed {
            let rho = vg.rho;
            let mu = occupancy_of_policy(mdp, &policy)?;
            return Ok((policy, rho, mu));
        }
    }
    Err(CoreError::Guard(format!(
        "policy iteration did not stabilize within {max_sweeps} sweeps"
    )))
}

/// L(μ; v) = ⟨μ, r⟩ + ⟨v, Pᵀμ − Eᵀμ⟩.
pub fn lagrangian(mdp: &TabularMdp, mu: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    if mu.len() != mdp.num_state_actions() {
        return Err(CoreError::DimensionMismatch {
            context: "lagrangian mu",
            expected: mdp.num_state_actions(),
            found: mu.len(),
        });
    }
    if v.len() != mdp.num_states() {
        return Err(CoreError::DimensionMismatch {
            context: "lagrangian v",
            expected: mdp.num_states(),
            found: v.len(),
        });
    }
    let mut flow = DVector::<f64>::zeros(mdp.num_states());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let w = mu[mdp.index_of(s, a)];
            flow[s] -= w;
            let row = mdp.transitions().row(mdp.index_of(s, a));
            for next in 0..mdp.num_states() {
                flow[next] += w * row[next];
            }
        }
    }
    Ok(mdp.rewards().dot(mu) + v.dot(&flow))
}

/// Both sides of the identity relating the duality gap at the comparator
/// pair (μ^{π*}, v^{π̄}) to the policy suboptimality:
/// lhs = L(μ^{π*}; v̄) − L(μ̄; v^{π̄}) and rhs = ρ* − ρ^{π̄}.
///
/// The supplied policy must be the one extracted from μ̄.
pub fn duality_gap_identity(
    mdp: &TabularMdp,
    mu_avg: &OccupancyMeasure,
    v_avg: &DVector<f64>,
    policy: &Policy,
) -> Result<(f64, f64)> {
    let extracted = super::extract_policy(mu_avg)?;
    let dev = (extracted.probs() - policy.probs()).abs().max();
    if dev > 1e-12 {
        return Err(CoreError::Parameter(format!(
            "policy does not match the one extracted from the averaged occupancy (deviation {dev})"
        )));
    }
    let (_, rho_star, mu_star) = optimal_policy_oracle(mdp)?;
    let vg = gain_and_bias(mdp, policy)?;
    let lhs = lagrangian(mdp, &mu_star.mu, v_avg)? - lagrangian(mdp, &mu_avg.mu, &vg.bias)?;
    let rhs = rho_star - vg.rho;
    Ok((lhs, rhs))
}
