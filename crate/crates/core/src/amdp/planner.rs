//! The stabilized primal-dual planner: stochastic Lagrangian gradients from
//! the generative model, the composite prox updates for the value and
//! occupancy players, policy extraction and the step-size tuner.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use std::io::{self, Write};

use super::{
    gain_and_bias, lagrangian, optimal_policy_oracle, sample_categorical_row, GenerativeSimulator,
    OccupancyMeasure, Policy,
};
use crate::error::{CoreError, Result};
use crate::geometry::{prox_inf_norm_squared_composite, prox_kl_simplex};
use crate::solvers::round_rng;

/// g̃_v = e_{s'} − e_s with (s, a) ∼ μ and s' drawn from the simulator
/// (one query). Its conditional mean is Pᵀμ − Eᵀμ and ‖g̃_v‖² ≤ 2 always.
pub fn sample_grad_v(
    sim: &mut GenerativeSimulator,
    mu: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let mdp = sim.mdp();
    if mu.len() != mdp.num_state_actions() {
        return Err(CoreError::DimensionMismatch {
            context: "sample_grad_v mu",
            expected: mdp.num_state_actions(),
            found: mu.len(),
        });
    }
    let total: f64 = mu.iter().sum();
    if mu.iter().any(|&p| p <= 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(CoreError::Domain(
            "sample_grad_v needs a strictly positive simplex point".into(),
        ));
    }
    let idx = sample_categorical_row(mu.iter().cloned(), mu.len(), rng);
    let state = idx / mdp.num_actions();
    let action = idx % mdp.num_actions();
    let next = sim.sample_next_state(state, action);
    let mut g = DVector::zeros(mdp.num_states());
    g[next] += 1.0;
    g[state] -= 1.0;
    Ok(g)
}

/// g̃_μ(s, a) = r(s, a) + v(s̄'(s, a)) − v(s) with one simulator draw per
/// state-action pair (SA queries). Its conditional mean is r + Pv − Ev and
/// ‖g̃_μ‖∞ ≤ 1 + 2‖v‖∞ on every draw.
pub fn sample_grad_mu(sim: &mut GenerativeSimulator, v: &DVector<f64>) -> Result<DVector<f64>> {
    let mdp = sim.mdp();
    if v.len() != mdp.num_states() {
        return Err(CoreError::DimensionMismatch {
            context: "sample_grad_mu v",
            expected: mdp.num_states(),
            found: v.len(),
        });
    }
    let mut g = DVector::zeros(mdp.num_state_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let next = sim.sample_next_state(s, a);
            // grouping the value difference keeps the cancellation exact for
            // constant v
            g[mdp.index_of(s, a)] = mdp.reward(s, a) + (v[next] - v[s]);
        }
    }
    Ok(g)
}

/// π̄(a|s) = μ̄(s, a)/Σ_{a'} μ̄(s, a'); a state with mass below 1e-15 gets
/// the uniform row.
pub fn extract_policy(mu: &OccupancyMeasure) -> Result<Policy> {
    let s_n = mu.num_states();
    let a_n = mu.num_actions();
    let mut probs = DMatrix::zeros(s_n, a_n);
    for s in 0..s_n {
        let mass: f64 = (0..a_n).map(|a| mu.value(s, a)).sum();
        if mass < 1e-15 {
            for a in 0..a_n {
                probs[(s, a)] = 1.0 / a_n as f64;
            }
        } else {
            for a in 0..a_n {
                probs[(s, a)] = mu.value(s, a) / mass;
            }
        }
        // absorb rounding so the row is exactly stochastic
        let sum: f64 = (0..a_n).map(|a| probs[(s, a)]).sum();
        for a in 0..a_n {
            probs[(s, a)] /= sum;
        }
    }
    Policy::new(probs)
}

#[derive(Debug, Clone, Copy)]
pub struct Theorem3Tuning {
    pub eta_mu: f64,
    pub eta_v: f64,
    pub rho_v: f64,
}

/// η_μ = √(log(SA)/(S·T)), η_v = √(SA/T) and ϱ_v = 4η_μ.
pub fn tune_theorem3(num_states: usize, num_actions: usize, horizon: usize) -> Result<Theorem3Tuning> {
    if num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(CoreError::Parameter(
            "state count, action count and horizon must be positive".into(),
        ));
    }
    let sa = (num_states * num_actions) as f64;
    if sa < 2.0 {
        return Err(CoreError::Parameter(
            "the step-size rule needs at least two state-action pairs".into(),
        ));
    }
    let t = horizon as f64;
    let eta_mu = (sa.ln() / (num_states as f64 * t)).sqrt();
    Ok(Theorem3Tuning {
        eta_mu,
        eta_v: (sa / t).sqrt(),
        rho_v: 4.0 * eta_mu,
    })
}

#[derive(Debug, Clone)]
pub struct MdpPlannerConfig {
    pub eta_v: f64,
    pub eta_mu: f64,
    pub rho_v: f64,
    pub horizon: usize,
    /// Defaults to the uniform distribution when absent; must be strictly
    /// interior when given.
    pub mu_init: Option<DVector<f64>>,
    /// Rounds at which the exact oracles evaluate the running averages; the
    /// optimal-policy oracle runs once when this is nonempty.
    pub checkpoints: Vec<usize>,
    pub seed: u64,
}

impl MdpPlannerConfig {
    pub fn tuned(tuning: Theorem3Tuning, horizon: usize, seed: u64) -> Self {
        Self {
            eta_v: tuning.eta_v,
            eta_mu: tuning.eta_mu,
            rho_v: tuning.rho_v,
            horizon,
            mu_init: None,
            checkpoints: Vec::new(),
            seed,
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<usize>) -> Self {
        self.checkpoints = checkpoints;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpCheckpointRecord {
    pub t: usize,
    /// ‖v_t − v₁‖₂ = ‖v_t‖₂.
    pub norm_v_dev: f64,
    pub norm_mu_dev: f64,
    pub grad_v_norm: f64,
    pub grad_mu_norm: f64,
    /// Duality gap of the running averages against the fixed optimal
    /// comparator pair (μ^{π*}, v^{π*}).
    pub gap_running_avg: f64,
    /// ρ* − ρ^{π̄_t} for the policy extracted from the running average.
    pub rho_gap: f64,
    pub queries: u64,
}

#[derive(Debug, Clone)]
pub struct MdpRunResult {
    pub v_avg: DVector<f64>,
    pub mu_avg: OccupancyMeasure,
    /// Policy extracted from the averaged occupancy measure.
    pub policy: Policy,
    pub trace: Vec<MdpCheckpointRecord>,
    pub seed: u64,
    /// Simulator queries consumed by this run: exactly T·(SA + 1).
    pub queries: u64,
}

/// Runs the stabilized primal-dual planner for `horizon` rounds.
///
/// Per round: draw g̃_v and take the squared-infinity-norm composite step on
/// v; draw g̃_μ at the pre-update v_t and take the entropic ascent step on μ.
/// Outputs uniform averages over the visited iterates and the extracted
/// policy.
pub fn comida_mdp_run(
    sim: &mut GenerativeSimulator,
    config: &MdpPlannerConfig,
) -> Result<MdpRunResult> {
    let mdp = sim.mdp();
    let s_n = mdp.num_states();
    let sa = mdp.num_state_actions();
    if !(config.eta_v > 0.0) || !(config.eta_mu > 0.0) || config.rho_v < 0.0 {
        return Err(CoreError::Parameter(
            "planner needs positive step sizes and a nonnegative stabilization weight".into(),
        ));
    }
    if config.horizon == 0 {
        return Err(CoreError::Parameter("horizon must be at least 1".into()));
    }
    if config
        .checkpoints
        .iter()
        .any(|&t| t == 0 || t > config.horizon)
    {
        return Err(CoreError::Parameter(
            "checkpoints must lie within [1, horizon]".into(),
        ));
    }
    let mut mu = match &config.mu_init {
        Some(m) => {
            if m.len() != sa {
                return Err(CoreError::DimensionMismatch {
                    context: "planner mu_init",
                    expected: sa,
                    found: m.len(),
                });
            }
            if m.iter().any(|&p| p <= 0.0) || (m.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(CoreError::Domain(
                    "mu_init must be a strictly interior simplex point".into(),
                ));
            }
            m.clone()
        }
        None => DVector::from_element(sa, 1.0 / sa as f64),
    };
    let mut v = DVector::<f64>::zeros(s_n);
    let mut sum_v = DVector::<f64>::zeros(s_n);
    let mut sum_mu = DVector::<f64>::zeros(sa);
    let mu_init = mu.clone();

    // exact comparator quantities, computed once when a trace is requested
    let reference = if config.checkpoints.is_empty() {
        None
    } else {
        let (pi_star, rho_star, mu_star) = optimal_policy_oracle(mdp)?;
        let v_star = gain_and_bias(mdp, &pi_star)?.bias;
        Some((rho_star, mu_star, v_star))
    };

    let queries_before = sim.queries();
    let mut checkpoints = config.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut cp_idx = 0usize;
    let mut trace = Vec::with_capacity(checkpoints.len());

    for t in 1..=config.horizon {
        sum_v += &v;
        sum_mu += &mu;
        let mut rng = round_rng(config.seed, t);
        let g_v = sample_grad_v(sim, &mu, &mut rng)?;
        let g_mu = sample_grad_mu(sim, &v)?;
        if cp_idx < checkpoints.len() && checkpoints[cp_idx] == t {
            cp_idx += 1;
            let inv_t = 1.0 / t as f64;
            let v_bar = &sum_v * inv_t;
            let mu_bar = OccupancyMeasure::normalized(&sum_mu * inv_t, s_n, mdp.num_actions())?;
            let (rho_star, mu_star, v_star) =
                reference.as_ref().expect("reference exists when checkpoints do");
            let gap = lagrangian(mdp, &mu_star.mu, &v_bar)? - lagrangian(mdp, &mu_bar.mu, v_star)?;
            let pi_bar = extract_policy(&mu_bar)?;
            let rho_gap = rho_star - gain_and_bias(mdp, &pi_bar)?.rho;
            trace.push(MdpCheckpointRecord {
                t,
                norm_v_dev: v.norm(),
                norm_mu_dev: (&mu - &mu_init).norm(),
                grad_v_norm: g_v.norm(),
                grad_mu_norm: g_mu.norm(),
                gap_running_avg: gap,
                rho_gap,
                queries: sim.queries() - queries_before,
            });
        }
        v = prox_inf_norm_squared_composite(&v, &g_v, config.eta_v, config.rho_v)?;
        mu = prox_kl_simplex(&mu, &(-g_mu), config.eta_mu)?;
    }

    let inv_t = 1.0 / config.horizon as f64;
    let mu_avg = OccupancyMeasure::normalized(sum_mu * inv_t, s_n, mdp.num_actions())?;
    let policy = extract_policy(&mu_avg)?;
    Ok(MdpRunResult {
        v_avg: sum_v * inv_t,
        mu_avg,
        policy,
        trace,
        seed: config.seed,
        queries: sim.queries() - queries_before,
    })
}

/// CSV export matching the solver trace schema plus the planner columns:
/// `t,norm_x_dev,norm_y_dev,grad_x_norm,grad_y_norm,gap_running_avg,rho_gap,queries`.
pub fn write_mdp_trace_csv(result: &MdpRunResult, w: &mut impl Write) -> io::Result<()> {
    writeln!(
        w,
        "t,norm_x_dev,norm_y_dev,grad_x_norm,grad_y_norm,gap_running_avg,rho_gap,queries"
    )?;
    for r in &result.trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.norm_v_dev,
            r.norm_mu_dev,
            r.grad_v_norm,
            r.grad_mu_norm,
            r.gap_running_avg,
            r.rho_gap,
            r.queries
        )?;
    }
    Ok(())
}
