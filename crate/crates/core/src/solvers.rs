//! The iterative schemes: the unstabilized gradient descent-ascent baseline
//! (SGDA), its stabilized Euclidean variant (COGDA) and the general-geometry
//! mirror-descent variant (COMIDA), plus the step-size tuners and certified
//! bound evaluators.
//!
//! A run is driven by one master seed that splits into per-round generator
//! streams, so a trace is invariant to how often checkpoints are taken and
//! any prefix of a run coincides with a shorter run.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{self, Write};

use crate::error::{CoreError, Result};
use crate::geometry::{
    bregman_divergence, norm_under_tag, prox_euclidean_composite, prox_inf_norm_squared_composite,
    prox_kl_simplex, DgfKind, DistanceGenerator, NormTag, Stabilizer, StabilizerKind,
};
use crate::problems::{
    sample_oracle, BilinearGame, DomainKind, GradientSample, NoiseModel, SubBilinearProblem,
};

/// Step sizes, stabilization weights, horizon, initial points and the
/// checkpoint schedule of a run.
#[derive(Debug, Clone)]
pub struct SolverParams {
    pub eta_x: f64,
    pub eta_y: f64,
    pub rho_x: f64,
    pub rho_y: f64,
    pub horizon: usize,
    pub x_init: DVector<f64>,
    pub y_init: DVector<f64>,
    /// Sorted, deduplicated, all within [1, horizon].
    pub checkpoints: Vec<usize>,
}

impl SolverParams {
    pub fn new(
        eta_x: f64,
        eta_y: f64,
        rho_x: f64,
        rho_y: f64,
        horizon: usize,
        x_init: DVector<f64>,
        y_init: DVector<f64>,
    ) -> Result<Self> {
        // zero steps are allowed (the baseline then keeps its iterates
        // constant); the composite-prox solvers reject them at the prox level
        if !(eta_x >= 0.0) || !(eta_y >= 0.0) {
            return Err(CoreError::Parameter(format!(
                "step sizes must be nonnegative, got eta_x={eta_x}, eta_y={eta_y}"
            )));
        }
        if rho_x < 0.0 || rho_y < 0.0 {
            return Err(CoreError::Parameter(format!(
                "stabilization weights must be nonnegative, got rho_x={rho_x}, rho_y={rho_y}"
            )));
        }
        if horizon == 0 {
            return Err(CoreError::Parameter("horizon must be at least 1".into()));
        }
        let checkpoints = power_of_two_checkpoints(horizon);
        Ok(Self {
            eta_x,
            eta_y,
            rho_x,
            rho_y,
            horizon,
            x_init,
            y_init,
            checkpoints,
        })
    }

    pub fn with_checkpoints(mut self, mut checkpoints: Vec<usize>) -> Result<Self> {
        checkpoints.sort_unstable();
        checkpoints.dedup();
        if checkpoints.iter().any(|&t| t == 0 || t > self.horizon) {
            return Err(CoreError::Parameter(
                "checkpoints must lie within [1, horizon]".into(),
            ));
        }
        self.checkpoints = checkpoints;
        Ok(self)
    }
}

/// Powers of two up to `horizon`, with the horizon itself appended, so a
/// single long run yields the whole rate curve.
pub fn power_of_two_checkpoints(horizon: usize) -> Vec<usize> {
    let mut cps = Vec::new();
    let mut t = 1usize;
    while t <= horizon {
        cps.push(t);
        match t.checked_mul(2) {
            Some(next) => t = next,
            None => break,
        }
    }
    if *cps.last().unwrap() != horizon {
        cps.push(horizon);
    }
    cps
}

/// Step sizes and stabilization weights produced by a tuner.
#[derive(Debug, Clone, Copy)]
pub struct TuningFragment {
    pub eta_x: f64,
    pub eta_y: f64,
    pub rho_x: f64,
    pub rho_y: f64,
}

impl TuningFragment {
    pub fn into_params(
        self,
        horizon: usize,
        x_init: DVector<f64>,
        y_init: DVector<f64>,
    ) -> Result<SolverParams> {
        SolverParams::new(
            self.eta_x, self.eta_y, self.rho_x, self.rho_y, horizon, x_init, y_init,
        )
    }
}

/// η_x = η_y = 1/(L_M√T), ϱ_y = 2η_x·L_M², ϱ_x = 2η_y·L_M².
pub fn tune_theorem1(l_m: f64, horizon: usize) -> Result<TuningFragment> {
    if !(l_m > 0.0) {
        return Err(CoreError::Parameter(format!("L_M must be positive, got {l_m}")));
    }
    if horizon == 0 {
        return Err(CoreError::Parameter("horizon must be at least 1".into()));
    }
    let eta = 1.0 / (l_m * (horizon as f64).sqrt());
    let rho = 2.0 * eta * l_m * l_m;
    Ok(TuningFragment {
        eta_x: eta,
        eta_y: eta,
        rho_x: rho,
        rho_y: rho,
    })
}

/// η_x = η_y = √(γ_xγ_y/(L²T)), ϱ_x = η_y·L²/γ_y, ϱ_y = η_x·L²/γ_x.
pub fn tune_corollary1(l: f64, gamma_x: f64, gamma_y: f64, horizon: usize) -> Result<TuningFragment> {
    if !(l > 0.0) || !(gamma_x > 0.0) || !(gamma_y > 0.0) {
        return Err(CoreError::Parameter(
            "growth constant and strong-convexity moduli must be positive".into(),
        ));
    }
    if horizon == 0 {
        return Err(CoreError::Parameter("horizon must be at least 1".into()));
    }
    let eta = (gamma_x * gamma_y / (l * l * horizon as f64)).sqrt();
    Ok(TuningFragment {
        eta_x: eta,
        eta_y: eta,
        rho_x: eta * l * l / gamma_y,
        rho_y: eta * l * l / gamma_x,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub t: usize,
    /// ‖x_t − x₁‖₂ at the checkpoint round.
    pub norm_x_dev: f64,
    pub norm_y_dev: f64,
    /// ‖g̃_x(t)‖₂ of the sample drawn in the checkpoint round.
    pub grad_x_norm: f64,
    pub grad_y_norm: f64,
    /// Exact duality gap of the running averages (NaN without a comparator).
    pub gap_running_avg: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Uniform average of the iterates x₁..x_T.
    pub x_avg: DVector<f64>,
    pub y_avg: DVector<f64>,
    pub trace: Vec<CheckpointRecord>,
    /// Running averages (x̄_t, ȳ_t) at each checkpoint, aligned with `trace`.
    pub checkpoint_averages: Vec<(DVector<f64>, DVector<f64>)>,
    pub seed: u64,
    pub queries: u64,
    /// max over visited iterates of √(‖x_t‖² + ‖y_t‖²).
    pub max_iterate_norm: f64,
    /// ‖x_T‖² + ‖y_T‖² of the last visited iterate.
    pub final_iterate_norm_sq: f64,
}

/// The generator stream for one round of one run.
pub fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

/// Writes the checkpoint trace as CSV with the schema
/// `t,norm_x_dev,norm_y_dev,grad_x_norm,grad_y_norm,gap_running_avg`.
pub fn write_trace_csv(result: &RunResult, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "t,norm_x_dev,norm_y_dev,grad_x_norm,grad_y_norm,gap_running_avg")?;
    for r in &result.trace {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.t, r.norm_x_dev, r.norm_y_dev, r.grad_x_norm, r.grad_y_norm, r.gap_running_avg
        )?;
    }
    Ok(())
}

/// How the exact duality gap of the running averages is evaluated at
/// checkpoints.
#[derive(Clone, Copy)]
pub enum GapMetric<'a> {
    /// f(x̄, y°) − f(x°, ȳ) against the fixed comparator (x°, y°).
    Comparator(&'a DVector<f64>, &'a DVector<f64>),
    /// Gap with both comparators restricted to the centered ball of this
    /// radius; nonnegative once the ball contains the exact saddle.
    BallRestricted { radius: f64 },
    /// No gap evaluation; the trace records NaN.
    Disabled,
}

type SampleFn<'a> = dyn FnMut(&DVector<f64>, &DVector<f64>, &mut ChaCha8Rng) -> Result<GradientSample> + 'a;
type UpdateFn<'a> = dyn FnMut(&DVector<f64>, &DVector<f64>, &GradientSample) -> Result<(DVector<f64>, DVector<f64>)>
    + 'a;
type GapFn<'a> = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + 'a;

fn drive(
    params: &SolverParams,
    seed: u64,
    sample: &mut SampleFn,
    update: &mut UpdateFn,
    gap_of_averages: &GapFn,
) -> Result<RunResult> {
    let mut x = params.x_init.clone();
    let mut y = params.y_init.clone();
    let mut sum_x = DVector::<f64>::zeros(x.len());
    let mut sum_y = DVector::<f64>::zeros(y.len());
    let mut trace = Vec::with_capacity(params.checkpoints.len());
    let mut checkpoint_averages = Vec::with_capacity(params.checkpoints.len());
    let mut cp_idx = 0usize;
    let mut queries = 0u64;
    let mut max_norm: f64 = 0.0;
    let mut final_norm_sq = 0.0;
    for t in 1..=params.horizon {
        sum_x += &x;
        sum_y += &y;
        let norm_sq = x.norm_squared() + y.norm_squared();
        max_norm = max_norm.max(norm_sq.sqrt());
        if t == params.horizon {
            final_norm_sq = norm_sq;
        }
        let mut rng = round_rng(seed, t);
        let s = sample(&x, &y, &mut rng)?;
        queries += s.queries_used;
        if cp_idx < params.checkpoints.len() && params.checkpoints[cp_idx] == t {
            cp_idx += 1;
            let inv_t = 1.0 / t as f64;
            let x_bar = &sum_x * inv_t;
            let y_bar = &sum_y * inv_t;
            trace.push(CheckpointRecord {
                t,
                norm_x_dev: (&x - &params.x_init).norm(),
                norm_y_dev: (&y - &params.y_init).norm(),
                grad_x_norm: s.g_x.norm(),
                grad_y_norm: s.g_y.norm(),
                gap_running_avg: gap_of_averages(&x_bar, &y_bar),
            });
            checkpoint_averages.push((x_bar, y_bar));
        }
        let (nx, ny) = update(&x, &y, &s)?;
        x = nx;
        y = ny;
    }
    let inv_t = 1.0 / params.horizon as f64;
    Ok(RunResult {
        x_avg: sum_x * inv_t,
        y_avg: sum_y * inv_t,
        trace,
        checkpoint_averages,
        seed,
        queries,
        max_iterate_norm: max_norm,
        final_iterate_norm_sq: final_norm_sq,
    })
}

fn bilinear_gap_fn<'a>(game: &'a BilinearGame, gap: GapMetric<'a>) -> Result<Box<GapFn<'a>>> {
    Ok(match gap {
        GapMetric::Comparator(xs, ys) => {
            Box::new(move |x_bar, y_bar| game.value(x_bar, ys) - game.value(xs, y_bar))
        }
        GapMetric::BallRestricted { radius } => {
            if !(radius > 0.0) {
                return Err(CoreError::Parameter(format!(
                    "restriction radius must be positive, got {radius}"
                )));
            }
            Box::new(move |x_bar, y_bar| {
                crate::problems::ball_restricted_gap(game, x_bar, y_bar, radius)
                    .expect("dimensions were validated by the run")
            })
        }
        GapMetric::Disabled => Box::new(|_, _| f64::NAN),
    })
}

/// Plain simultaneous stochastic gradient descent-ascent, no stabilization
/// and no projection. The stabilization weights in `params` are ignored.
pub fn sgda_run(
    game: &BilinearGame,
    noise: &NoiseModel,
    params: &SolverParams,
    gap: GapMetric<'_>,
    seed: u64,
) -> Result<RunResult> {
    let gap = bilinear_gap_fn(game, gap)?;
    drive(
        params,
        seed,
        &mut |x, y, rng| sample_oracle(game, noise, x, y, rng),
        &mut |x, y, s| Ok((x - &s.g_x * params.eta_x, y + &s.g_y * params.eta_y)),
        gap.as_ref(),
    )
}

/// Stabilized gradient descent-ascent: both players take the closed-form
/// Euclidean composite step with regularizers centered at the initial points.
pub fn cogda_run(
    game: &BilinearGame,
    noise: &NoiseModel,
    params: &SolverParams,
    gap: GapMetric<'_>,
    seed: u64,
) -> Result<RunResult> {
    let stab_x = Stabilizer::l2(params.rho_x, params.x_init.clone());
    let stab_y = Stabilizer::l2(params.rho_y, params.y_init.clone());
    let gap = bilinear_gap_fn(game, gap)?;
    drive(
        params,
        seed,
        &mut |x, y, rng| sample_oracle(game, noise, x, y, rng),
        &mut |x, y, s| {
            let nx = prox_euclidean_composite(x, &s.g_x, params.eta_x, &stab_x)?;
            let ny = prox_euclidean_composite(y, &(-&s.g_y), params.eta_y, &stab_y)?;
            Ok((nx, ny))
        },
        gap.as_ref(),
    )
}

/// Distance generators and stabilizer shapes for the two players; the
/// stabilizer weights and centers come from the solver parameters.
#[derive(Debug, Clone)]
pub struct GeometryPair {
    pub x_dgf: DistanceGenerator,
    pub y_dgf: DistanceGenerator,
    pub x_stab: StabilizerKind,
    pub y_stab: StabilizerKind,
}

impl GeometryPair {
    pub fn euclidean(dim_x: usize, dim_y: usize) -> Self {
        Self {
            x_dgf: DistanceGenerator::euclidean(DVector::zeros(dim_x)),
            y_dgf: DistanceGenerator::euclidean(DVector::zeros(dim_y)),
            x_stab: StabilizerKind::L2Squared,
            y_stab: StabilizerKind::L2Squared,
        }
    }
}

enum PlayerProx {
    EuclideanL2(Stabilizer),
    EuclideanInf { weight: f64 },
    EntropySimplex,
}

fn build_player_prox(
    dgf: &DistanceGenerator,
    stab_kind: StabilizerKind,
    weight: f64,
    init: &DVector<f64>,
    domain: DomainKind,
    player: &str,
) -> Result<PlayerProx> {
    match (&dgf.kind, stab_kind) {
        (DgfKind::Euclidean { .. }, StabilizerKind::L2Squared) => {
            if domain != DomainKind::Reals {
                return Err(CoreError::Geometry(format!(
                    "{player}: Euclidean geometry handles unconstrained domains only"
                )));
            }
            Ok(PlayerProx::EuclideanL2(Stabilizer::l2(weight, init.clone())))
        }
        (DgfKind::Euclidean { .. }, StabilizerKind::LInfSquared) => {
            if domain != DomainKind::Reals {
                return Err(CoreError::Geometry(format!(
                    "{player}: Euclidean geometry handles unconstrained domains only"
                )));
            }
            if init.abs().max() != 0.0 {
                return Err(CoreError::Geometry(format!(
                    "{player}: the squared-infinity-norm stabilizer is centered at the origin, \
                     so the initial point must be zero"
                )));
            }
            Ok(PlayerProx::EuclideanInf { weight })
        }
        (DgfKind::NegativeEntropy { .. }, _) => {
            if domain != DomainKind::Simplex {
                return Err(CoreError::Geometry(format!(
                    "{player}: entropic geometry requires a simplex domain"
                )));
            }
            if weight != 0.0 {
                return Err(CoreError::Geometry(format!(
                    "{player}: no composite prox is implemented for a stabilized entropic step"
                )));
            }
            Ok(PlayerProx::EntropySimplex)
        }
        (DgfKind::QuadraticNorm { .. }, _) => Err(CoreError::Geometry(format!(
            "{player}: no composite prox is implemented for quadratic-norm generators"
        ))),
    }
}

impl PlayerProx {
    fn step(&self, current: &DVector<f64>, grad: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
        match self {
            PlayerProx::EuclideanL2(stab) => prox_euclidean_composite(current, grad, eta, stab),
            PlayerProx::EuclideanInf { weight } => {
                prox_inf_norm_squared_composite(current, grad, eta, *weight)
            }
            PlayerProx::EntropySimplex => prox_kl_simplex(current, grad, eta),
        }
    }
}

/// Composite mirror descent-ascent over the supplied geometry pair. The
/// x-player descends on g̃_x, the y-player ascends on g̃_y; both carry their
/// stabilizer inside the prox.
pub fn comida_run(
    problem: &SubBilinearProblem,
    geom: &GeometryPair,
    params: &SolverParams,
    gap: GapMetric<'_>,
    seed: u64,
) -> Result<RunResult> {
    if params.x_init.len() != problem.dim_x || params.y_init.len() != problem.dim_y {
        return Err(CoreError::DimensionMismatch {
            context: "comida_run initial points",
            expected: problem.dim_x,
            found: params.x_init.len(),
        });
    }
    let x_prox = build_player_prox(
        &geom.x_dgf,
        geom.x_stab,
        params.rho_x,
        &params.x_init,
        problem.domain_x,
        "x-player",
    )?;
    let y_prox = build_player_prox(
        &geom.y_dgf,
        geom.y_stab,
        params.rho_y,
        &params.y_init,
        problem.domain_y,
        "y-player",
    )?;
    let objective = &problem.objective;
    let gap: Box<GapFn> = match gap {
        GapMetric::Comparator(xs, ys) => Box::new(move |x_bar: &DVector<f64>, y_bar: &DVector<f64>| {
            objective(x_bar, ys) - objective(xs, y_bar)
        }),
        GapMetric::BallRestricted { radius } => {
            if !(radius > 0.0) {
                return Err(CoreError::Parameter(format!(
                    "restriction radius must be positive, got {radius}"
                )));
            }
            let ball = problem.ball_gap.as_ref().ok_or_else(|| {
                CoreError::Parameter(
                    "this problem does not provide a ball-restricted gap evaluator".into(),
                )
            })?;
            Box::new(move |x_bar: &DVector<f64>, y_bar: &DVector<f64>| ball(x_bar, y_bar, radius))
        }
        GapMetric::Disabled => Box::new(|_, _| f64::NAN),
    };
    drive(
        params,
        seed,
        &mut |x, y, rng| (problem.oracle)(x, y, rng),
        &mut |x, y, s| {
            let nx = x_prox.step(x, &s.g_x, params.eta_x)?;
            let ny = y_prox.step(y, &(-&s.g_y), params.eta_y)?;
            Ok((nx, ny))
        },
        gap.as_ref(),
    )
}

fn dual_tag(tag: NormTag) -> Result<NormTag> {
    match tag {
        NormTag::L2 => Ok(NormTag::L2),
        NormTag::L1 => Ok(NormTag::LInf),
        NormTag::LInf => Ok(NormTag::L1),
        NormTag::ANorm => Err(CoreError::Geometry(
            "the dual of a quadratic norm is not among the implemented norm tags".into(),
        )),
    }
}

fn coupling_ok(actual: f64, expected: f64) -> bool {
    (actual - expected).abs() <= 1e-9 * expected.abs().max(1.0)
}

/// Evaluates the certified duality-gap bound for general-geometry runs with
/// the couplings ϱ_x = η_y·L²/γ_y and ϱ_y = η_x·L²/γ_x:
///
/// D_y(y*, y₁)/(η_yT) + ϱ_y‖y* − y₁‖²_{x,*}/2
/// + D_x(x*, x₁)/(η_xT) + ϱ_x‖x* − x₁‖²_{y,*}/2 + L²(η_y/2γ_y + η_x/2γ_x).
pub fn theorem2_bound(
    problem: &SubBilinearProblem,
    geom: &GeometryPair,
    params: &SolverParams,
) -> Result<f64> {
    let l = problem.noise_growth;
    let gamma_x = geom.x_dgf.strong_convexity;
    let gamma_y = geom.y_dgf.strong_convexity;
    if !coupling_ok(params.rho_x, params.eta_y * l * l / gamma_y)
        || !coupling_ok(params.rho_y, params.eta_x * l * l / gamma_x)
    {
        return Err(CoreError::Parameter(format!(
            "stabilization weights violate the coupling rho_x = eta_y*L^2/gamma_y, \
             rho_y = eta_x*L^2/gamma_x (rho_x={}, rho_y={})",
            params.rho_x, params.rho_y
        )));
    }
    let (x_star, y_star) = problem
        .comparator
        .as_ref()
        .ok_or_else(|| CoreError::Parameter("bound evaluation needs a comparator".into()))?;
    let t = params.horizon as f64;
    let d_x = bregman_divergence(&geom.x_dgf, x_star, &params.x_init)?;
    let d_y = bregman_divergence(&geom.y_dgf, y_star, &params.y_init)?;
    let cross_y = norm_under_tag(&geom.x_dgf, dual_tag(geom.x_dgf.norm)?, &(y_star - &params.y_init))?;
    let cross_x = norm_under_tag(&geom.y_dgf, dual_tag(geom.y_dgf.norm)?, &(x_star - &params.x_init))?;
    Ok(d_y / (params.eta_y * t)
        + 0.5 * params.rho_y * cross_y * cross_y
        + d_x / (params.eta_x * t)
        + 0.5 * params.rho_x * cross_x * cross_x
        + l * l * (params.eta_y / (2.0 * gamma_y) + params.eta_x / (2.0 * gamma_x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        exact_saddle, random_uniform_game, rotation_game, MatrixEntryDist, NoiseKind, Saddle,
    };
    use approx::assert_abs_diff_eq;

    #[test]
    fn tuner_values() {
        let t1 = tune_theorem1(1.0, 4).unwrap();
        assert_eq!(t1.eta_x, 0.5);
        assert_eq!(t1.rho_x, 1.0);
        assert_eq!(t1.rho_y, 1.0);
        let t1 = tune_theorem1(1.0, 1).unwrap();
        assert_eq!(t1.eta_x, 1.0);
        assert_eq!(t1.rho_y, 2.0);
        // coupling holds by construction
        for (lm, t) in [(0.3, 10usize), (2.5, 1000), (7.0, 12345)] {
            let f = tune_theorem1(lm, t).unwrap();
            assert_abs_diff_eq!(f.rho_y, 2.0 * f.eta_x * lm * lm, epsilon = 1e-15);
            assert_abs_diff_eq!(f.rho_x, 2.0 * f.eta_y * lm * lm, epsilon = 1e-15);
        }

        let c1 = tune_corollary1(1.0, 1.0, 1.0, 1).unwrap();
        assert_eq!(c1.eta_x, 1.0);
        assert_eq!(c1.rho_x, 1.0);
        let c1 = tune_corollary1(2.0, 4.0, 1.0, 100).unwrap();
        assert_abs_diff_eq!(c1.eta_x, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c1.rho_x, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(c1.rho_y, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn checkpoint_schedule() {
        assert_eq!(power_of_two_checkpoints(1), vec![1]);
        assert_eq!(power_of_two_checkpoints(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(power_of_two_checkpoints(16), vec![1, 2, 4, 8, 16]);
        let p = SolverParams::new(0.1, 0.1, 0.0, 0.0, 8, DVector::zeros(1), DVector::zeros(1))
            .unwrap()
            .with_checkpoints(vec![3, 1, 3, 8])
            .unwrap();
        assert_eq!(p.checkpoints, vec![1, 3, 8]);
        assert!(SolverParams::new(0.1, 0.1, 0.0, 0.0, 8, DVector::zeros(1), DVector::zeros(1))
            .unwrap()
            .with_checkpoints(vec![9])
            .is_err());
    }

    #[test]
    fn sgda_matches_norm_recursion_on_rotation_game() {
        // For the orthogonal rotation matrix with b = c = 0 the squared
        // iterate norm satisfies ‖z_{t+1}‖² = (1 + η²)‖z_t‖² exactly.
        let game = rotation_game([0.0, 0.0], [0.0, 0.0]);
        let noise = NoiseModel::noiseless(&game);
        let t = 1000usize;
        let params = SolverParams::new(
            0.1,
            0.1,
            0.0,
            0.0,
            t,
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let zero = DVector::zeros(2);
        let run = sgda_run(&game, &noise, &params, GapMetric::Comparator(&zero, &zero), 0).unwrap();
        let expected = 2.0 * 1.01f64.powi(t as i32 - 1);
        assert!(
            (run.final_iterate_norm_sq - expected).abs() / expected < 1e-6,
            "final norm {} vs closed form {}",
            run.final_iterate_norm_sq,
            expected
        );
        assert!(run.max_iterate_norm >= 100.0 * 2.0f64.sqrt());
    }

    #[test]
    fn sgda_trivial_cases() {
        let game = rotation_game([1.0, 0.0], [0.0, 2.0]);
        let noise = NoiseModel::noiseless(&game);
        let (xs, ys) = match exact_saddle(&game) {
            Saddle::Unique { x, y } => (x, y),
            _ => unreachable!(),
        };
        // starting at the saddle stays at the saddle
        let params = SolverParams::new(0.1, 0.1, 0.0, 0.0, 100, xs.clone(), ys.clone()).unwrap();
        let run = sgda_run(&game, &noise, &params, GapMetric::Comparator(&xs, &ys), 1).unwrap();
        assert!((run.x_avg - &xs).abs().max() < 1e-12);
        assert!((run.y_avg - &ys).abs().max() < 1e-12);
        assert!(run.trace.last().unwrap().gap_running_avg.abs() < 1e-12);
    }

    #[test]
    fn sgda_with_zero_step_keeps_iterates_constant() {
        let game = rotation_game([1.0, 0.0], [0.0, 2.0]);
        let noise = NoiseModel::noiseless(&game);
        let x1 = DVector::from_vec(vec![0.4, -0.7]);
        let y1 = DVector::from_vec(vec![1.3, 0.2]);
        let params = SolverParams::new(0.0, 0.0, 0.0, 0.0, 50, x1.clone(), y1.clone()).unwrap();
        let run = sgda_run(&game, &noise, &params, GapMetric::Disabled, 0).unwrap();
        // the iterates never move (deviation is exactly zero); the uniform
        // average only re-rounds them
        assert_eq!(run.trace.last().unwrap().norm_x_dev, 0.0);
        assert_eq!(run.trace.last().unwrap().norm_y_dev, 0.0);
        assert!((run.x_avg - &x1).abs().max() <= 1e-12);
        assert!((run.y_avg - &y1).abs().max() <= 1e-12);
        // the composite-prox solver rejects the zero step instead
        assert!(matches!(
            cogda_run(&game, &noise, &params, GapMetric::Disabled, 0),
            Err(CoreError::Parameter(_))
        ));
    }

    #[test]
    fn cogda_with_zero_weights_equals_sgda() {
        let game = random_uniform_game(3, 3, 2);
        let noise = NoiseModel::certified(
            &game,
            NoiseKind::EntrywiseMatrix {
                amplitude: 0.2,
                dist: MatrixEntryDist::Symmetric,
            },
        )
        .unwrap();
        let params = SolverParams::new(
            0.05,
            0.08,
            0.0,
            0.0,
            200,
            DVector::zeros(3),
            DVector::zeros(3),
        )
        .unwrap();
        let a = sgda_run(&game, &noise, &params, GapMetric::Disabled, 9).unwrap();
        let b = cogda_run(&game, &noise, &params, GapMetric::Disabled, 9).unwrap();
        assert!((a.x_avg - b.x_avg).abs().max() < 1e-12);
        assert!((a.y_avg - b.y_avg).abs().max() < 1e-12);
        for (ra, rb) in a.trace.iter().zip(b.trace.iter()) {
            assert!((ra.norm_x_dev - rb.norm_x_dev).abs() < 1e-12);
            assert!((ra.grad_y_norm - rb.grad_y_norm).abs() < 1e-12);
        }
    }

    #[test]
    fn cogda_starting_at_saddle_stays_there() {
        let game = BilinearGame::new(
            nalgebra::DMatrix::identity(1, 1),
            DVector::zeros(1),
            DVector::zeros(1),
        )
        .unwrap();
        let noise = NoiseModel::noiseless(&game);
        let params = tune_theorem1(noise.l_m, 50)
            .unwrap()
            .into_params(50, DVector::zeros(1), DVector::zeros(1))
            .unwrap();
        let zero = DVector::zeros(1);
        let run = cogda_run(&game, &noise, &params, GapMetric::Comparator(&zero, &zero), 3).unwrap();
        assert_eq!(run.x_avg[0], 0.0);
        assert_eq!(run.y_avg[0], 0.0);
        assert_eq!(run.trace.last().unwrap().gap_running_avg, 0.0);
        assert_eq!(run.queries, 50);
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let game = random_uniform_game(4, 4, 6);
        let noise = NoiseModel::certified(
            &game,
            NoiseKind::EntrywiseMatrix {
                amplitude: 0.1,
                dist: MatrixEntryDist::Uniform,
            },
        )
        .unwrap();
        let params = tune_theorem1(noise.l_m, 300)
            .unwrap()
            .into_params(300, DVector::zeros(4), DVector::zeros(4))
            .unwrap();
        let a = cogda_run(&game, &noise, &params, GapMetric::Disabled, 1234).unwrap();
        let b = cogda_run(&game, &noise, &params, GapMetric::Disabled, 1234).unwrap();
        assert_eq!(a.x_avg.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.x_avg.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        for (ra, rb) in a.trace.iter().zip(b.trace.iter()) {
            assert_eq!(ra.gap_running_avg.to_bits(), rb.gap_running_avg.to_bits());
            assert_eq!(ra.grad_x_norm.to_bits(), rb.grad_x_norm.to_bits());
        }
        // different seed gives a different stochastic trace
        let c = cogda_run(&game, &noise, &params, GapMetric::Disabled, 1235).unwrap();
        assert_ne!(
            a.trace.last().unwrap().grad_x_norm.to_bits(),
            c.trace.last().unwrap().grad_x_norm.to_bits()
        );
    }

    #[test]
    fn averages_match_recomputation_on_small_horizon() {
        let game = rotation_game([0.3, -0.2], [0.1, 0.4]);
        let noise = NoiseModel::noiseless(&game);
        let t = 7usize;
        let params = SolverParams::new(
            0.2,
            0.2,
            0.05,
            0.05,
            t,
            DVector::from_vec(vec![0.5, -0.5]),
            DVector::from_vec(vec![0.25, 0.75]),
        )
        .unwrap();
        let run = cogda_run(&game, &noise, &params, GapMetric::Disabled, 0).unwrap();
        // replay the recursion by hand
        let stab_x = Stabilizer::l2(params.rho_x, params.x_init.clone());
        let stab_y = Stabilizer::l2(params.rho_y, params.y_init.clone());
        let mut x = params.x_init.clone();
        let mut y = params.y_init.clone();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 1..=t {
            xs.push(x.clone());
            ys.push(y.clone());
            let (gx, gy) = crate::problems::exact_gradients(&game, &x, &y).unwrap();
            let nx = prox_euclidean_composite(&x, &gx, params.eta_x, &stab_x).unwrap();
            let ny = prox_euclidean_composite(&y, &(-gy), params.eta_y, &stab_y).unwrap();
            x = nx;
            y = ny;
        }
        let mean_x = xs.iter().fold(DVector::zeros(2), |acc, v| acc + v) / t as f64;
        let mean_y = ys.iter().fold(DVector::zeros(2), |acc, v| acc + v) / t as f64;
        assert!((run.x_avg - mean_x).abs().max() < 1e-12);
        assert!((run.y_avg - mean_y).abs().max() < 1e-12);
    }

    #[test]
    fn comida_euclidean_reproduces_cogda() {
        let game = random_uniform_game(4, 4, 21);
        let noise = NoiseModel::certified(
            &game,
            NoiseKind::EntrywiseMatrix {
                amplitude: 0.15,
                dist: MatrixEntryDist::Symmetric,
            },
        )
        .unwrap();
        let params = tune_theorem1(noise.l_m, 500)
            .unwrap()
            .into_params(500, DVector::zeros(4), DVector::zeros(4))
            .unwrap();
        let (xs, ys) = match exact_saddle(&game) {
            Saddle::Unique { x, y } => (x, y),
            _ => panic!(),
        };
        let cogda = cogda_run(&game, &noise, &params, GapMetric::Comparator(&xs, &ys), 777).unwrap();
        let problem = SubBilinearProblem::from_bilinear(&game, &noise, &params.x_init, &params.y_init);
        let comida = comida_run(
            &problem,
            &GeometryPair::euclidean(4, 4),
            &params,
            GapMetric::Comparator(&xs, &ys),
            777,
        )
        .unwrap();
        assert!((&cogda.x_avg - &comida.x_avg).abs().max() < 1e-10);
        assert!((&cogda.y_avg - &comida.y_avg).abs().max() < 1e-10);
        assert_eq!(cogda.trace.len(), comida.trace.len());
        for (a, b) in cogda.trace.iter().zip(comida.trace.iter()) {
            assert_eq!(a.t, b.t);
            assert!((a.gap_running_avg - b.gap_running_avg).abs() < 1e-10);
            assert!((a.norm_x_dev - b.norm_x_dev).abs() < 1e-10);
            assert!((a.grad_x_norm - b.grad_x_norm).abs() < 1e-10);
        }
    }

    #[test]
    fn comida_entropic_geometry_solves_a_matrix_game() {
        // matching-pennies on the simplex: value 0 at the uniform equilibrium
        let payoff = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let payoff_for_value = payoff.clone();
        let payoff_for_oracle = payoff.clone();
        let problem = SubBilinearProblem {
            dim_x: 2,
            dim_y: 2,
            domain_x: DomainKind::Simplex,
            domain_y: DomainKind::Simplex,
            objective: Box::new(move |x, y| x.dot(&(&payoff_for_value * y))),
            oracle: Box::new(move |x, y, _rng| {
                Ok(GradientSample {
                    g_x: &payoff_for_oracle * y,
                    g_y: payoff_for_oracle.tr_mul(x),
                    queries_used: 1,
                })
            }),
            subgradient_growth: 2.0,
            noise_growth: 2.0,
            comparator: Some((
                DVector::from_element(2, 0.5),
                DVector::from_element(2, 0.5),
            )),
            ball_gap: None,
        };
        let geom = GeometryPair {
            x_dgf: DistanceGenerator::negative_entropy(2),
            y_dgf: DistanceGenerator::negative_entropy(2),
            x_stab: StabilizerKind::L2Squared,
            y_stab: StabilizerKind::L2Squared,
        };
        let t = 4000usize;
        let start = DVector::from_vec(vec![0.8, 0.2]);
        let params = SolverParams::new(0.05, 0.05, 0.0, 0.0, t, start.clone(), start).unwrap();
        let (xs, ys) = problem.comparator.clone().unwrap();
        let run = comida_run(&problem, &geom, &params, GapMetric::Comparator(&xs, &ys), 0).unwrap();
        // the averaged mixed strategies approach the uniform equilibrium
        assert!((run.x_avg[0] - 0.5).abs() < 0.02, "x_avg {:?}", run.x_avg);
        assert!((run.y_avg[0] - 0.5).abs() < 0.02);
        assert!((run.x_avg.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let final_gap = run.trace.last().unwrap().gap_running_avg;
        assert!(final_gap.abs() < 0.05, "gap {final_gap}");
    }

    #[test]
    fn comida_rejects_unsupported_geometry() {
        let game = random_uniform_game(3, 3, 1);
        let noise = NoiseModel::noiseless(&game);
        let params = SolverParams::new(0.1, 0.1, 0.1, 0.1, 10, DVector::zeros(3), DVector::zeros(3))
            .unwrap();
        let problem = SubBilinearProblem::from_bilinear(&game, &noise, &params.x_init, &params.y_init);
        let geom = GeometryPair {
            x_dgf: DistanceGenerator::negative_entropy(3),
            y_dgf: DistanceGenerator::euclidean(DVector::zeros(3)),
            x_stab: StabilizerKind::L2Squared,
            y_stab: StabilizerKind::L2Squared,
        };
        assert!(matches!(
            comida_run(&problem, &geom, &params, GapMetric::Disabled, 0),
            Err(CoreError::Geometry(_))
        ));
    }

    #[test]
    fn theorem2_bound_certifies_corollary_tuning() {
        let game = random_uniform_game(5, 5, 33);
        let noise = NoiseModel::certified(
            &game,
            NoiseKind::EntrywiseMatrix {
                amplitude: 0.1,
                dist: MatrixEntryDist::Symmetric,
            },
        )
        .unwrap();
        let x0 = DVector::zeros(5);
        let y0 = DVector::zeros(5);
        let problem = SubBilinearProblem::from_bilinear(&game, &noise, &x0, &y0);
        let l = problem.noise_growth;
        let t = 1 << 14;
        let params = tune_corollary1(l, 1.0, 1.0, t)
            .unwrap()
            .into_params(t, x0.clone(), y0.clone())
            .unwrap();
        let geom = GeometryPair::euclidean(5, 5);
        let bound = theorem2_bound(&problem, &geom, &params).unwrap();
        let (xs, ys) = problem.comparator.clone().unwrap();
        let d_x = 0.5 * xs.norm_squared();
        let d_y = 0.5 * ys.norm_squared();
        let corollary = 8.0 * l * (d_x + d_y + 1.0) / (t as f64).sqrt();
        assert!(
            bound <= corollary,
            "theorem-2 display {bound} should be within the corollary envelope {corollary}"
        );
        // measured gap over 20 seeds stays below the corollary envelope
        let mut gaps = Vec::new();
        for seed in 0..20 {
            let run = comida_run(&problem, &geom, &params, GapMetric::Comparator(&xs, &ys), seed).unwrap();
            gaps.push(
                crate::problems::duality_gap(&game, &run.x_avg, &run.y_avg, (&xs, &ys)).unwrap(),
            );
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!(
            mean <= corollary,
            "mean certified gap {mean} exceeds the corollary envelope {corollary}"
        );
        assert!(mean <= bound, "mean gap {mean} exceeds the theorem-2 display {bound}");
    }
}
