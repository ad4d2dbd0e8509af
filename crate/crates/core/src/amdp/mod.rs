//! Tabular average-reward MDPs: validated problem descriptions, a seeded
//! generative-model simulator, exact planning and evaluation oracles, and
//! the stabilized primal-dual planner.

mod exact;
mod planner;

pub use exact::{
    duality_gap_identity, gain_and_bias, lagrangian, occupancy_of_policy, optimal_policy_oracle,
    policy_iteration, stationary_distribution,
};
pub use planner::{
    comida_mdp_run, extract_policy, sample_grad_mu, sample_grad_v, tune_theorem3,
    write_mdp_trace_csv, MdpCheckpointRecord, MdpPlannerConfig, MdpRunResult, Theorem3Tuning,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Construction-time ergodicity validation is exhaustive over deterministic
/// policies, so it is only attempted up to this many policies.
const ERGODICITY_CHECK_LIMIT: f64 = 4096.0;

/// A finite MDP (S, A, r, P) with rewards in [0, 1] and validated stochastic
/// transition rows, indexed s-major: (s, a) ↦ s·A + a.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    rewards: DVector<f64>,
    /// SA × S; row (s, a) is the distribution of the next state.
    transitions: DMatrix<f64>,
    ergodicity_validated: bool,
}

impl TabularMdp {
    /// Validates shapes, reward range and row stochasticity. For instances
    /// with at most a few thousand deterministic policies it also verifies
    /// that each of them induces a chain with a unique stationary
    /// distribution, failing construction otherwise.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(CoreError::Parameter("state and action counts must be positive".into()));
        }
        let sa = num_states * num_actions;
        if rewards.len() != sa {
            return Err(CoreError::DimensionMismatch {
                context: "TabularMdp rewards",
                expected: sa,
                found: rewards.len(),
            });
        }
        if transitions.len() != sa * num_states {
            return Err(CoreError::DimensionMismatch {
                context: "TabularMdp transitions",
                expected: sa * num_states,
                found: transitions.len(),
            });
        }
        if rewards.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(CoreError::Parameter("rewards must lie in [0, 1]".into()));
        }
        let transitions = DMatrix::from_row_slice(sa, num_states, &transitions);
        for (i, row) in transitions.row_iter().enumerate() {
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(CoreError::Parameter(format!(
                    "transition row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(CoreError::Parameter(format!(
                    "transition row {i} sums to {sum}, expected 1"
                )));
            }
        }
        let mut mdp = Self {
            num_states,
            num_actions,
            rewards: DVector::from_vec(rewards),
            transitions,
            ergodicity_validated: false,
        };
        if (num_actions as f64).powi(num_states as i32) <= ERGODICITY_CHECK_LIMIT {
            mdp.validate_ergodicity()?;
        }
        Ok(mdp)
    }

    /// Checks that every deterministic policy's chain has a unique stationary
    /// distribution and records the outcome.
    pub fn validate_ergodicity(&mut self) -> Result<()> {
        for actions in DeterministicPolicyIter::new(self.num_states, self.num_actions) {
            let policy = Policy::deterministic(self.num_states, self.num_actions, &actions)?;
            let p_pi = policy_transition_matrix(self, &policy);
            if !has_unique_stationary(&p_pi) {
                return Err(CoreError::Ergodicity(format!(
                    "deterministic policy {actions:?} does not have a unique stationary distribution"
                )));
            }
        }
        self.ergodicity_validated = true;
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_state_actions(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn ergodicity_validated(&self) -> bool {
        self.ergodicity_validated
    }

    #[inline]
    pub fn index_of(&self, state: usize, action: usize) -> usize {
        state * self.num_actions + action
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[self.index_of(state, action)]
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.rewards
    }

    /// SA × S transition matrix with rows P(·|s, a).
    pub fn transitions(&self) -> &DMatrix<f64> {
        &self.transitions
    }

    #[inline]
    pub fn transition_prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions[(self.index_of(state, action), next)]
    }
}

/// Iterates over all action assignments s ↦ a in mixed-radix order.
struct DeterministicPolicyIter {
    num_actions: usize,
    current: Option<Vec<usize>>,
}

impl DeterministicPolicyIter {
    fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            current: Some(vec![0; num_states]),
        }
    }
}

impl Iterator for DeterministicPolicyIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let mut next = out.clone();
        let mut carry = true;
        for slot in next.iter_mut() {
            if !carry {
                break;
            }
            *slot += 1;
            if *slot == self.num_actions {
                *slot = 0;
            } else {
                carry = false;
            }
        }
        self.current = if carry { None } else { Some(next) };
        Some(out)
    }
}

/// A stationary stochastic policy; row s is the distribution π(·|s).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        for (s, row) in probs.row_iter().enumerate() {
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(CoreError::Parameter(format!(
                    "policy row {s} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(CoreError::Parameter(format!(
                    "policy row {s} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn deterministic(num_states: usize, num_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != num_states {
            return Err(CoreError::DimensionMismatch {
                context: "deterministic policy actions",
                expected: num_states,
                found: actions.len(),
            });
        }
        let mut probs = DMatrix::zeros(num_states, num_actions);
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(CoreError::Parameter(format!(
                    "action {a} out of range for state {s}"
                )));
            }
            probs[(s, a)] = 1.0;
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.ncols()
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[(state, action)]
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    /// The action with maximal probability in each state.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.num_states())
            .map(|s| {
                (0..self.num_actions())
                    .max_by(|&a, &b| self.prob(s, a).partial_cmp(&self.prob(s, b)).unwrap())
                    .unwrap()
            })
            .collect()
    }
}

/// A probability distribution over state-action pairs.
#[derive(Debug, Clone)]
pub struct OccupancyMeasure {
    pub mu: DVector<f64>,
    num_states: usize,
    num_actions: usize,
}

impl OccupancyMeasure {
    pub fn new(mu: DVector<f64>, num_states: usize, num_actions: usize) -> Result<Self> {
        if mu.len() != num_states * num_actions {
            return Err(CoreError::DimensionMismatch {
                context: "occupancy measure",
                expected: num_states * num_actions,
                found: mu.len(),
            });
        }
        if mu.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(CoreError::Domain("occupancy entries must be nonnegative".into()));
        }
        let sum: f64 = mu.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::Domain(format!(
                "occupancy sums to {sum}, expected 1"
            )));
        }
        Ok(Self {
            mu,
            num_states,
            num_actions,
        })
    }

    /// Rescales to a unit sum; used for averaged iterates whose sum has
    /// accumulated rounding drift.
    pub fn normalized(mut mu: DVector<f64>, num_states: usize, num_actions: usize) -> Result<Self> {
        let sum: f64 = mu.iter().sum();
        if sum <= 0.0 {
            return Err(CoreError::Domain("occupancy mass must be positive".into()));
        }
        mu /= sum;
        Self::new(mu, num_states, num_actions)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn value(&self, state: usize, action: usize) -> f64 {
        self.mu[state * self.num_actions + action]
    }

    /// ‖Eᵀμ − Pᵀμ‖∞: zero exactly for stationary measures.
    pub fn feasibility_residual(&self, mdp: &TabularMdp) -> f64 {
        let mut residual = DVector::<f64>::zeros(self.num_states);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let w = self.value(s, a);
                residual[s] -= w;
                let row = mdp.transitions().row(mdp.index_of(s, a));
                for next in 0..self.num_states {
                    residual[next] += w * row[next];
                }
            }
        }
        residual.abs().max()
    }
}

/// Gain, bias and the bias span of a policy. The bias is normalized so that
/// its stationary average is zero.
#[derive(Debug, Clone)]
pub struct ValueAndGain {
    pub rho: f64,
    pub bias: DVector<f64>,
    pub span: f64,
}

/// A seeded sampler of next states; every draw counts one query.
#[derive(Debug)]
pub struct GenerativeSimulator<'a> {
    mdp: &'a TabularMdp,
    rng: ChaCha8Rng,
    queries: u64,
}

impl<'a> GenerativeSimulator<'a> {
    pub fn new(mdp: &'a TabularMdp, seed: u64) -> Self {
        Self {
            mdp,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queries: 0,
        }
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// s' ∼ P(·|s, a).
    pub fn sample_next_state(&mut self, state: usize, action: usize) -> usize {
        self.queries += 1;
        let row = self.mdp.transitions().row(self.mdp.index_of(state, action));
        sample_categorical_row(row.iter().cloned(), self.mdp.num_states(), &mut self.rng)
    }
}

pub(crate) fn sample_categorical_row(
    probs: impl Iterator<Item = f64>,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    len - 1
}

/// S × S chain P^π(s, s') = Σ_a π(a|s)·P(s'|s, a).
pub fn policy_transition_matrix(mdp: &TabularMdp, policy: &Policy) -> DMatrix<f64> {
    let s_n = mdp.num_states();
    let mut p = DMatrix::zeros(s_n, s_n);
    for s in 0..s_n {
        for a in 0..mdp.num_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            let row = mdp.transitions().row(mdp.index_of(s, a));
            for next in 0..s_n {
                p[(s, next)] += w * row[next];
            }
        }
    }
    p
}

/// r^π(s) = Σ_a π(a|s)·r(s, a).
pub fn policy_reward_vector(mdp: &TabularMdp, policy: &Policy) -> DVector<f64> {
    DVector::from_fn(mdp.num_states(), |s, _| {
        (0..mdp.num_actions())
            .map(|a| policy.prob(s, a) * mdp.reward(s, a))
            .sum()
    })
}

/// True when I − Pᵀ has rank S−1, i.e. the chain has exactly one stationary
/// distribution.
pub(crate) fn has_unique_stationary(p_pi: &DMatrix<f64>) -> bool {
    let s_n = p_pi.nrows();
    let a = DMatrix::identity(s_n, s_n) - p_pi.transpose();
    let svals = a.svd(false, false).singular_values;
    let max_sv = svals.iter().cloned().fold(0.0, f64::max).max(1.0);
    let near_zero = svals.iter().filter(|&&sv| sv <= 1e-9 * max_sv).count();
    near_zero == 1
}

/// Dirichlet(1,…,1) transition rows with a 0.01/S floor mixed in (which
/// forces irreducibility and aperiodicity under every policy) and rewards
/// uniform on [0, 1].
pub fn random_ergodic_mdp(num_states: usize, num_actions: usize, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sa = num_states * num_actions;
    let floor = 0.01 / num_states as f64;
    let mut transitions = Vec::with_capacity(sa * num_states);
    for _ in 0..sa {
        let raw: Vec<f64> = (0..num_states)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let mut row: Vec<f64> = raw.iter().map(|x| x / total + floor).collect();
        let row_total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= row_total);
        // force an exact unit sum so construction-time validation is exact
        let drift: f64 = row.iter().sum::<f64>() - 1.0;
        row[num_states - 1] -= drift;
        transitions.extend(row);
    }
    let rewards: Vec<f64> = (0..sa).map(|_| rng.gen()).collect();
    TabularMdp::new(num_states, num_actions, rewards, transitions)
        .expect("floored Dirichlet rows always validate")
}

#[derive(Serialize, Deserialize)]
struct MdpSpec {
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    r: Vec<f64>,
    #[serde(rename = "P")]
    transitions: Vec<f64>,
}

/// JSON document {S, A, r (s-major), P (row-major over (s, a))}.
pub fn mdp_to_json(mdp: &TabularMdp) -> String {
    let spec = MdpSpec {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        r: mdp.rewards().iter().cloned().collect(),
        transitions: mdp
            .transitions()
            .row_iter()
            .flat_map(|r| r.iter().cloned().collect::<Vec<_>>())
            .collect(),
    };
    serde_json::to_string_pretty(&spec).expect("MDP serialization cannot fail")
}

pub fn mdp_from_json(doc: &str) -> Result<TabularMdp> {
    let spec: MdpSpec =
        serde_json::from_str(doc).map_err(|e| CoreError::Serialization(e.to_string()))?;
    TabularMdp::new(spec.num_states, spec.num_actions, spec.r, spec.transitions)
}
