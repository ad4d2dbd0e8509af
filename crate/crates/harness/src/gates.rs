//! The acceptance suite as runnable gates. Each gate is deterministic
//! (fixed seeds), checks one certified property at its stated tolerance and
//! reports one pass/fail line.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

use saddle_core::amdp::{
    comida_mdp_run, duality_gap_identity, gain_and_bias, optimal_policy_oracle,
    policy_transition_matrix, random_ergodic_mdp, sample_grad_mu, sample_grad_v,
    stationary_distribution, tune_theorem3, GenerativeSimulator, MdpPlannerConfig, Policy,
};
use saddle_core::geometry::{prox_inf_norm_squared_composite, prox_kl_simplex};
use saddle_core::problems::{
    duality_gap, exact_gradients, exact_saddle, random_uniform_game, rotation_game, sample_oracle,
    theorem1_bound, BilinearGame, MatrixEntryDist, NoiseKind, NoiseModel, Saddle,
    SubBilinearProblem,
};
use saddle_core::solvers::{
    cogda_run, comida_run, sgda_run, tune_theorem1, GapMetric, GeometryPair, SolverParams,
};

use crate::slope::fit_rate_slope;

#[derive(Debug, Clone)]
pub struct GateOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl GateOutcome {
    pub fn report_line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

type GateBody = std::result::Result<String, String>;

fn run_gate_body(name: &'static str, body: impl FnOnce() -> GateBody) -> GateOutcome {
    let start = Instant::now();
    let result = body();
    let elapsed = start.elapsed().as_secs_f64();
    match result {
        Ok(detail) => GateOutcome {
            name,
            passed: true,
            detail: format!("{detail} [{elapsed:.1}s]"),
        },
        Err(detail) => GateOutcome {
            name,
            passed: false,
            detail: format!("{detail} [{elapsed:.1}s]"),
        },
    }
}

fn err_str<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// The rotation game and certified noise models shared by several gates.
fn criterion_game() -> (BilinearGame, NoiseModel) {
    let game = rotation_game([1.0, 0.0], [0.0, 2.0]);
    let noise = NoiseModel {
        l_m: 1.0,
        ..NoiseModel::noiseless(&game)
    };
    (game, noise)
}

/// The fixed noisy 10x10 benchmark instance. The seed is chosen so the
/// matrix's smallest singular value is not degenerate (0.458 here): the
/// averaged iterates only cancel a rotation mode once it completes full
/// revolutions, which takes T >> L_M^2/sigma_min^2 rounds, so a
/// near-singular draw would push the visible onset of the 1/sqrt(T) regime
/// past the test horizons.
fn noisy_benchmark_game() -> (BilinearGame, NoiseModel) {
    let game = random_uniform_game(10, 10, 68);
    let noise = NoiseModel::certified(
        &game,
        NoiseKind::EntrywiseMatrix {
            amplitude: 0.1,
            dist: MatrixEntryDist::Symmetric,
        },
    )
    .expect("nonnegative amplitude");
    (game, noise)
}

fn saddle_of(game: &BilinearGame) -> (DVector<f64>, DVector<f64>) {
    match exact_saddle(game) {
        Saddle::Unique { x, y } => (x, y),
        Saddle::NoUniqueSaddle => panic!("benchmark games have unique saddles"),
    }
}

/// Noiseless certification: for T in {1e3, 1e4, 1e5} the averaged-iterate
/// gap is below the certified bound outright, both against the exact saddle
/// (where the gap degenerates to zero for unconstrained bilinear games) and
/// against the informative initial-point comparator.
pub fn gate_theorem1_noiseless() -> GateOutcome {
    run_gate_body("theorem1-noiseless", || {
        let (game, noise) = criterion_game();
        let (xs, ys) = saddle_of(&game);
        let origin = DVector::zeros(2);
        let mut detail = String::new();
        for t in [1_000usize, 10_000, 100_000] {
            let params = tune_theorem1(noise.l_m, t)
                .map_err(err_str)?
                .into_params(t, DVector::zeros(2), DVector::zeros(2))
                .map_err(err_str)?;
            let run = cogda_run(&game, &noise, &params, GapMetric::Disabled, 0).map_err(err_str)?;
            let gap_saddle =
                duality_gap(&game, &run.x_avg, &run.y_avg, (&xs, &ys)).map_err(err_str)?;
            let bound_saddle =
                theorem1_bound(&game, &noise, &params, Some((&xs, &ys))).map_err(err_str)?;
            if gap_saddle > bound_saddle {
                return Err(format!(
                    "T={t}: saddle-comparator gap {gap_saddle} exceeds bound {bound_saddle}"
                ));
            }
            let gap0 =
                duality_gap(&game, &run.x_avg, &run.y_avg, (&origin, &origin)).map_err(err_str)?;
            let bound0 =
                theorem1_bound(&game, &noise, &params, Some((&origin, &origin))).map_err(err_str)?;
            if gap0 > bound0 {
                return Err(format!(
                    "T={t}: initial-point gap {gap0} exceeds bound {bound0}"
                ));
            }
            detail.push_str(&format!("T={t}: {gap0:.2e}<={bound0:.2e} "));
        }
        Ok(detail)
    })
}

/// Stochastic certification: 20 seeds on a noisy 10x10 game at T=1e5, mean
/// gap within the certified bound plus three standard errors.
pub fn gate_theorem1_stochastic() -> GateOutcome {
    run_gate_body("theorem1-stochastic", || {
        let (game, noise) = noisy_benchmark_game();
        let (xs, ys) = saddle_of(&game);
        let origin = DVector::zeros(10);
        let t = 100_000usize;
        let params = tune_theorem1(noise.l_m, t)
            .map_err(err_str)?
            .into_params(t, DVector::zeros(10), DVector::zeros(10))
            .map_err(err_str)?;
        let runs: Vec<_> = (0..20u64)
            .into_par_iter()
            .map(|seed| cogda_run(&game, &noise, &params, GapMetric::Disabled, seed))
            .collect::<Result<_, _>>()
            .map_err(err_str)?;
        let check = |comparator: (&DVector<f64>, &DVector<f64>), label: &str| -> GateBody {
            let gaps: Vec<f64> = runs
                .iter()
                .map(|run| duality_gap(&game, &run.x_avg, &run.y_avg, comparator).map_err(err_str))
                .collect::<std::result::Result<_, _>>()?;
            let bound = theorem1_bound(&game, &noise, &params, Some(comparator)).map_err(err_str)?;
            let n = gaps.len() as f64;
            let mean = gaps.iter().sum::<f64>() / n;
            let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            if mean <= bound + 3.0 * se {
                Ok(format!("{label}: mean {mean:.3e} <= {bound:.3e}+3*{se:.1e}"))
            } else {
                Err(format!(
                    "{label}: mean gap {mean} exceeds bound {bound} + 3se {se}"
                ))
            }
        };
        let a = check((&origin, &origin), "origin")?;
        let b = check((&xs, &ys), "saddle")?;
        Ok(format!("{a}; {b}"))
    })
}

/// Divergence contrast: the unstabilized baseline follows the exact norm
/// recursion and blows past 100x its initial norm, while the stabilized run
/// stays within 10x(initial norm + 1).
pub fn gate_divergence_contrast() -> GateOutcome {
    run_gate_body("divergence-contrast", || {
        let game = rotation_game([0.0, 0.0], [0.0, 0.0]);
        let noise = NoiseModel {
            l_m: 1.0,
            ..NoiseModel::noiseless(&game)
        };
        let t = 1000usize;
        let x1 = DVector::from_vec(vec![1.0, 0.0]);
        let y1 = DVector::from_vec(vec![1.0, 0.0]);
        let init_norm = 2.0f64.sqrt();
        let params =
            SolverParams::new(0.1, 0.1, 0.0, 0.0, t, x1.clone(), y1.clone()).map_err(err_str)?;
        let baseline = sgda_run(&game, &noise, &params, GapMetric::Disabled, 0).map_err(err_str)?;
        let expected = 2.0 * 1.01f64.powi(t as i32 - 1);
        let rel = (baseline.final_iterate_norm_sq - expected).abs() / expected;
        if rel > 1e-6 {
            return Err(format!(
                "baseline norm {} deviates from the closed form {expected} by {rel:.2e} relative",
                baseline.final_iterate_norm_sq
            ));
        }
        if baseline.max_iterate_norm <= 100.0 * init_norm {
            return Err(format!(
                "baseline max norm {} did not exceed 100x the initial norm",
                baseline.max_iterate_norm
            ));
        }
        let tuned = tune_theorem1(noise.l_m, t)
            .map_err(err_str)?
            .into_params(t, x1, y1)
            .map_err(err_str)?;
        let stabilized = cogda_run(&game, &noise, &tuned, GapMetric::Disabled, 0).map_err(err_str)?;
        let cap = 10.0 * (init_norm + 1.0);
        if stabilized.max_iterate_norm > cap {
            return Err(format!(
                "stabilized max norm {} exceeds {cap}",
                stabilized.max_iterate_norm
            ));
        }
        Ok(format!(
            "baseline norm ratio {:.0}x vs stabilized max {:.2} (cap {cap:.1})",
            baseline.max_iterate_norm / init_norm,
            stabilized.max_iterate_norm
        ))
    })
}

/// Rate shape: each horizon T in {2^10..2^17} gets its own tuned runs over
/// 20 seeds; the mean ball-restricted gap of the final averages must decay
/// with log-log slope at most -0.4.
pub fn gate_rate_shape() -> GateOutcome {
    run_gate_body("rate-shape", || {
        let (game, noise) = noisy_benchmark_game();
        let (xs, ys) = saddle_of(&game);
        let radius = 2.0 * xs.norm().max(ys.norm()).max(1.0);
        let horizons: Vec<usize> = (10..=17).map(|k| 1usize << k).collect();
        let seeds = 20u64;
        let cells: Vec<(usize, u64)> = horizons
            .iter()
            .flat_map(|&t| (0..seeds).map(move |s| (t, s)))
            .collect();
        let gaps: Vec<(usize, f64)> = cells
            .into_par_iter()
            .map(|(t, seed)| {
                let params = tune_theorem1(noise.l_m, t)?
                    .into_params(t, DVector::zeros(10), DVector::zeros(10))?;
                let run = cogda_run(&game, &noise, &params, GapMetric::Disabled, seed)?;
                let gap =
                    saddle_core::problems::ball_restricted_gap(&game, &run.x_avg, &run.y_avg, radius)?;
                Ok((t, gap))
            })
            .collect::<Result<_, saddle_core::CoreError>>()
            .map_err(err_str)?;
        let mean_gaps: Vec<f64> = horizons
            .iter()
            .map(|&t| {
                gaps.iter()
                    .filter(|(h, _)| *h == t)
                    .map(|(_, g)| *g)
                    .sum::<f64>()
                    / seeds as f64
            })
            .collect();
        let points: Vec<(f64, f64)> = horizons
            .iter()
            .zip(mean_gaps.iter())
            .map(|(&h, &g)| (h as f64, g))
            .collect();
        let (slope, _) = fit_rate_slope(&points).map_err(err_str)?;
        if slope <= -0.4 {
            Ok(format!("slope {slope:.3} <= -0.4"))
        } else {
            Err(format!("slope {slope:.3} is above -0.4 (gaps {mean_gaps:?})"))
        }
    })
}

/// The Euclidean mirror-descent instance reproduces the closed-form solver
/// trace to 1e-10 at every checkpoint.
pub fn gate_cogda_comida_equivalence() -> GateOutcome {
    run_gate_body("cogda-comida-equivalence", || {
        let game = random_uniform_game(6, 6, 5);
        let noise = NoiseModel::certified(
            &game,
            NoiseKind::EntrywiseMatrix {
                amplitude: 0.15,
                dist: MatrixEntryDist::Symmetric,
            },
        )
        .map_err(err_str)?;
        let (xs, ys) = saddle_of(&game);
        let t = 1usize << 12;
        let params = tune_theorem1(noise.l_m, t)
            .map_err(err_str)?
            .into_params(t, DVector::zeros(6), DVector::zeros(6))
            .map_err(err_str)?;
        let problem = SubBilinearProblem::from_bilinear(&game, &noise, &params.x_init, &params.y_init);
        let geom = GeometryPair::euclidean(6, 6);
        let mut worst: f64 = 0.0;
        for seed in [1u64, 2, 3] {
            let a = cogda_run(&game, &noise, &params, GapMetric::Comparator(&xs, &ys), seed)
                .map_err(err_str)?;
            let b = comida_run(&problem, &geom, &params, GapMetric::Comparator(&xs, &ys), seed)
                .map_err(err_str)?;
            if a.trace.len() != b.trace.len() {
                return Err("trace lengths differ".into());
            }
            for (ra, rb) in a.trace.iter().zip(b.trace.iter()) {
                let dev = (ra.norm_x_dev - rb.norm_x_dev)
                    .abs()
                    .max((ra.norm_y_dev - rb.norm_y_dev).abs())
                    .max((ra.grad_x_norm - rb.grad_x_norm).abs())
                    .max((ra.grad_y_norm - rb.grad_y_norm).abs())
                    .max((ra.gap_running_avg - rb.gap_running_avg).abs());
                worst = worst.max(dev);
            }
            worst = worst
                .max((a.x_avg - b.x_avg).abs().max())
                .max((a.y_avg - b.y_avg).abs().max());
        }
        if worst <= 1e-10 {
            Ok(format!("max trace deviation {worst:.2e} <= 1e-10"))
        } else {
            Err(format!("max trace deviation {worst:.2e} exceeds 1e-10"))
        }
    })
}

/// Brute-force minimizer of <v, grad> + w*||v||_inf^2 + (1/2s)||v-c||^2: a
/// grid scan over the infinity-norm level with interval refinement; at a
/// fixed level the coordinates decouple into box clamps of the unregularized
/// step. Independent of the sort-based production path.
pub fn inf_prox_grid_oracle(
    current: &DVector<f64>,
    grad: &DVector<f64>,
    step: f64,
    weight: f64,
) -> DVector<f64> {
    let z = current - grad * step;
    if weight == 0.0 {
        return z;
    }
    let objective = |tau: f64| -> f64 {
        let clipped = z.map(|zi| zi.clamp(-tau, tau));
        weight * tau * tau + (&clipped - &z).norm_squared() / (2.0 * step)
    };
    let mut lo = 0.0;
    let mut hi = z.abs().max();
    if hi == 0.0 {
        return DVector::zeros(z.len());
    }
    for _ in 0..40 {
        let grid = 64usize;
        let width = hi - lo;
        let mut best = (f64::INFINITY, lo);
        for i in 0..=grid {
            let tau = lo + width * i as f64 / grid as f64;
            let val = objective(tau);
            if val < best.0 {
                best = (val, tau);
            }
        }
        let step_width = width / grid as f64;
        lo = (best.1 - step_width).max(0.0);
        hi = best.1 + step_width;
        if hi - lo < 1e-14 {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    z.map(|zi| zi.clamp(-tau, tau))
}

/// Prox oracle equivalence: the sort-based squared-infinity-norm prox
/// matches the grid-refinement minimizer to 1e-6 in dimensions 1..5, and the
/// entropic step is simplex-exact and shift-invariant.
pub fn gate_prox_oracles() -> GateOutcome {
    run_gate_body("prox-oracles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        let mut worst_inf: f64 = 0.0;
        for dim in 1..=5usize {
            for _ in 0..100 {
                let current = DVector::from_fn(dim, |_, _| rng.gen_range(-4.0..4.0));
                let grad = DVector::from_fn(dim, |_, _| rng.gen_range(-4.0..4.0));
                let step = rng.gen_range(0.05..2.0);
                let weight = rng.gen_range(0.0..4.0);
                let fast = prox_inf_norm_squared_composite(&current, &grad, step, weight)
                    .map_err(err_str)?;
                let slow = inf_prox_grid_oracle(&current, &grad, step, weight);
                worst_inf = worst_inf.max((fast - slow).abs().max());
            }
        }
        if worst_inf > 1e-6 {
            return Err(format!(
                "squared-infinity-norm prox deviates from the grid oracle by {worst_inf:.2e}"
            ));
        }
        let mut worst_sum: f64 = 0.0;
        let mut worst_shift: f64 = 0.0;
        for _ in 0..1000 {
            let dim = rng.gen_range(2..9);
            let mut current = DVector::from_fn(dim, |_, _| -(1.0f64 - rng.gen::<f64>()).ln());
            let total: f64 = current.iter().sum();
            current /= total;
            let grad = DVector::from_fn(dim, |_, _| rng.gen_range(-15.0..15.0));
            let step = rng.gen_range(0.01..2.0);
            let out = prox_kl_simplex(&current, &grad, step).map_err(err_str)?;
            worst_sum = worst_sum.max((out.iter().sum::<f64>() - 1.0).abs());
            if out.iter().any(|&p| p <= 0.0) {
                return Err("entropic step left the open simplex".into());
            }
            let shift = rng.gen_range(-8.0..8.0);
            let shifted = prox_kl_simplex(&current, &grad.add_scalar(shift), step).map_err(err_str)?;
            worst_shift = worst_shift.max((out - shifted).abs().max());
        }
        if worst_sum > 1e-12 {
            return Err(format!("entropic step sum error {worst_sum:.2e} exceeds 1e-12"));
        }
        if worst_shift > 1e-12 {
            return Err(format!(
                "entropic step shift-invariance error {worst_shift:.2e} exceeds 1e-12"
            ));
        }
        Ok(format!(
            "inf-prox dev {worst_inf:.2e}, simplex sum dev {worst_sum:.2e}, shift dev {worst_shift:.2e}"
        ))
    })
}

/// The gap-to-suboptimality identity holds to 1e-8 on planner outputs over
/// 25 random ergodic MDPs (S=4, A=3).
pub fn gate_duality_gap_identity() -> GateOutcome {
    run_gate_body("duality-gap-identity", || {
        let worst = (0..25u64)
            .into_par_iter()
            .map(|k| {
                let mdp = random_ergodic_mdp(4, 3, 500 + k);
                let t = 400usize;
                let tuning = tune_theorem3(4, 3, t).map_err(err_str)?;
                let mut sim = GenerativeSimulator::new(&mdp, 7000 + k);
                let out = comida_mdp_run(&mut sim, &MdpPlannerConfig::tuned(tuning, t, k))
                    .map_err(err_str)?;
                let (lhs, rhs) =
                    duality_gap_identity(&mdp, &out.mu_avg, &out.v_avg, &out.policy).map_err(err_str)?;
                Ok((lhs - rhs).abs())
            })
            .collect::<std::result::Result<Vec<f64>, String>>()?
            .into_iter()
            .fold(0.0f64, f64::max);
        if worst <= 1e-8 {
            Ok(format!("max identity residual {worst:.2e} <= 1e-8"))
        } else {
            Err(format!("identity residual {worst:.2e} exceeds 1e-8"))
        }
    })
}

/// Planning quality: median suboptimality at T=2e5 over 10 seeded random
/// MDPs is at most 0.1 and improves on the median at T=1e4.
pub fn gate_planning_quality() -> GateOutcome {
    run_gate_body("planning-quality", || {
        let horizons = [10_000usize, 200_000];
        let cells: Vec<(usize, u64)> = horizons
            .iter()
            .flat_map(|&t| (0..10u64).map(move |s| (t, s)))
            .collect();
        let values: Vec<(usize, u64, f64)> = cells
            .into_par_iter()
            .map(|(t, seed)| {
                let mdp = random_ergodic_mdp(4, 2, 800 + seed);
                let (_, rho_star, _) = optimal_policy_oracle(&mdp).map_err(err_str)?;
                let tuning = tune_theorem3(4, 2, t).map_err(err_str)?;
                let mut sim = GenerativeSimulator::new(&mdp, seed);
                let out = comida_mdp_run(&mut sim, &MdpPlannerConfig::tuned(tuning, t, seed))
                    .map_err(err_str)?;
                let rho = gain_and_bias(&mdp, &out.policy).map_err(err_str)?.rho;
                Ok((t, seed, rho_star - rho))
            })
            .collect::<std::result::Result<_, String>>()?;
        let median_at = |t: usize| -> f64 {
            let mut v: Vec<f64> = values
                .iter()
                .filter(|(h, _, _)| *h == t)
                .map(|(_, _, g)| *g)
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let short = median_at(horizons[0]);
        let long = median_at(horizons[1]);
        if long > 0.1 {
            return Err(format!("median suboptimality {long:.4} at T=2e5 exceeds 0.1"));
        }
        if long >= short {
            return Err(format!(
                "median suboptimality did not improve: {long:.4} at T=2e5 vs {short:.4} at T=1e4"
            ));
        }
        Ok(format!("medians: {short:.4} at T=1e4 -> {long:.4} at T=2e5"))
    })
}

fn mean_within_4_sigma(
    label: &str,
    sums: &DVector<f64>,
    sums_sq: &DVector<f64>,
    exact: &DVector<f64>,
    n: usize,
) -> GateBody {
    let nf = n as f64;
    for i in 0..exact.len() {
        let mean = sums[i] / nf;
        let var = (sums_sq[i] / nf - mean * mean).max(0.0);
        let tol = 4.0 * var.sqrt() / nf.sqrt() + 1e-10;
        if (mean - exact[i]).abs() > tol {
            return Err(format!(
                "{label}[{i}]: empirical mean {mean} vs exact {} (tolerance {tol:.2e})",
                exact[i]
            ));
        }
    }
    Ok(String::new())
}

/// Estimator contracts: empirical means of all four stochastic gradients at
/// fixed iterates match the exact gradients within four standard errors; the
/// per-sample norm caps hold on every draw; query accounting is exact.
pub fn gate_estimator_contracts() -> GateOutcome {
    run_gate_body("estimator-contracts", || {
        let n = 100_000usize;

        // bilinear oracle
        let (game, noise) = noisy_benchmark_game();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = DVector::from_fn(10, |i, _| 0.3 * (i as f64) - 1.2);
        let y = DVector::from_fn(10, |i, _| 0.7 - 0.2 * (i as f64));
        let (gx, gy) = exact_gradients(&game, &x, &y).map_err(err_str)?;
        let mut sum_x = DVector::zeros(10);
        let mut sq_x = DVector::zeros(10);
        let mut sum_y = DVector::zeros(10);
        let mut sq_y = DVector::zeros(10);
        for _ in 0..n {
            let s = sample_oracle(&game, &noise, &x, &y, &mut rng).map_err(err_str)?;
            sum_x += &s.g_x;
            sq_x += s.g_x.component_mul(&s.g_x);
            sum_y += &s.g_y;
            sq_y += s.g_y.component_mul(&s.g_y);
        }
        mean_within_4_sigma("g_x", &sum_x, &sq_x, &gx, n)?;
        mean_within_4_sigma("g_y", &sum_y, &sq_y, &gy, n)?;

        // planner gradients
        let mdp = random_ergodic_mdp(4, 3, 99);
        let mut sim = GenerativeSimulator::new(&mdp, 1234);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let raw = DVector::from_fn(12, |i, _| 1.0 + ((i * 7) % 5) as f64);
        let total: f64 = raw.iter().sum();
        let mu = raw / total;
        let mut exact_v = DVector::<f64>::zeros(4);
        for s in 0..4 {
            for a in 0..3 {
                let w = mu[mdp.index_of(s, a)];
                exact_v[s] -= w;
                for next in 0..4 {
                    exact_v[next] += w * mdp.transition_prob(s, a, next);
                }
            }
        }
        let mut sum_v = DVector::zeros(4);
        let mut sq_v = DVector::zeros(4);
        for _ in 0..n {
            let g = sample_grad_v(&mut sim, &mu, &mut rng).map_err(err_str)?;
            if g.norm_squared() > 2.0 {
                return Err(format!("||g_v||^2 = {} exceeds 2", g.norm_squared()));
            }
            sum_v += &g;
            sq_v += g.component_mul(&g);
        }
        mean_within_4_sigma("g_v", &sum_v, &sq_v, &exact_v, n)?;

        let v = DVector::from_vec(vec![0.8, -1.1, 0.4, -0.3]);
        let cap = 1.0 + 2.0 * v.abs().max();
        let mut exact_mu = DVector::<f64>::zeros(12);
        for s in 0..4 {
            for a in 0..3 {
                let idx = mdp.index_of(s, a);
                let pv: f64 = (0..4).map(|nx| mdp.transition_prob(s, a, nx) * v[nx]).sum();
                exact_mu[idx] = mdp.reward(s, a) + pv - v[s];
            }
        }
        let mut sum_mu = DVector::zeros(12);
        let mut sq_mu = DVector::zeros(12);
        for _ in 0..n {
            let g = sample_grad_mu(&mut sim, &v).map_err(err_str)?;
            if g.abs().max() > cap + 1e-12 {
                return Err(format!("||g_mu||_inf = {} exceeds 1 + 2||v||_inf = {cap}", g.abs().max()));
            }
            sum_mu += &g;
            sq_mu += g.component_mul(&g);
        }
        mean_within_4_sigma("g_mu", &sum_mu, &sq_mu, &exact_mu, n)?;

        // query accounting
        let t = 500usize;
        let mdp2 = random_ergodic_mdp(4, 2, 101);
        let tuning = tune_theorem3(4, 2, t).map_err(err_str)?;
        let mut sim2 = GenerativeSimulator::new(&mdp2, 2);
        let out = comida_mdp_run(&mut sim2, &MdpPlannerConfig::tuned(tuning, t, 3)).map_err(err_str)?;
        let expected = (t * (4 * 2 + 1)) as u64;
        if out.queries != expected {
            return Err(format!("query count {} != T(SA+1) = {expected}", out.queries));
        }
        Ok(format!(
            "4 estimators unbiased at N={n}, caps exact, queries {expected}"
        ))
    })
}

/// Exact-oracle self-consistency: stationary laws match long-run simulation,
/// policy evaluation has machine-precision Bellman residuals and the
/// optimal-policy search agrees with an independent enumeration.
pub fn gate_exact_oracle_consistency() -> GateOutcome {
    run_gate_body("oracle-consistency", || {
        // stationary vs 1e6-step visitation frequencies
        for (mdp_seed, sim_seed) in [(11u64, 21u64), (12, 22)] {
            let mdp = random_ergodic_mdp(4, 2, mdp_seed);
            let policy = Policy::uniform(4, 2);
            let nu = stationary_distribution(&mdp, &policy).map_err(err_str)?;
            let mut sim = GenerativeSimulator::new(&mdp, sim_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(sim_seed + 1);
            let mut counts = [0u64; 4];
            let mut state = 0usize;
            let steps = 1_000_000usize;
            for _ in 0..steps {
                counts[state] += 1;
                let a = if rng.gen::<f64>() < 0.5 { 0 } else { 1 };
                state = sim.sample_next_state(state, a);
            }
            for s in 0..4 {
                let freq = counts[s] as f64 / steps as f64;
                if (freq - nu[s]).abs() > 1e-2 {
                    return Err(format!(
                        "stationary mass at state {s}: simulated {freq} vs exact {}",
                        nu[s]
                    ));
                }
            }
        }

        // Bellman residuals on random stochastic policies
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for k in 0..20u64 {
            let mdp = random_ergodic_mdp(4, 3, 40 + k);
            let mut probs = nalgebra::DMatrix::zeros(4, 3);
            for s in 0..4 {
                let mut row = [0.0; 3];
                let mut total = 0.0;
                for item in row.iter_mut() {
                    *item = -(1.0f64 - rng.gen::<f64>()).ln();
                    total += *item;
                }
                for (a, item) in row.iter().enumerate() {
                    probs[(s, a)] = item / total;
                }
                let drift: f64 = (0..3).map(|a| probs[(s, a)]).sum::<f64>() - 1.0;
                probs[(s, 2)] -= drift;
            }
            let policy = Policy::new(probs).map_err(err_str)?;
            let vg = gain_and_bias(&mdp, &policy).map_err(err_str)?;
            let p_pi = policy_transition_matrix(&mdp, &policy);
            let ones = DVector::from_element(4, 1.0);
            let r_pi = DVector::from_fn(4, |s, _| {
                (0..3).map(|a| policy.prob(s, a) * mdp.reward(s, a)).sum()
            });
            let residual = (&vg.bias - (&r_pi - &ones * vg.rho + &p_pi * &vg.bias)).abs().max();
            if residual > 1e-10 {
                return Err(format!("Bellman residual {residual:.2e} exceeds 1e-10"));
            }
        }

        // enumeration agreement on every shape with A^S <= 256
        for (s_n, a_n, seed) in [(2usize, 3usize, 1u64), (4, 2, 2), (3, 4, 3), (4, 4, 4)] {
            let mdp = random_ergodic_mdp(s_n, a_n, 70 + seed);
            let (pi, rho, mu) = optimal_policy_oracle(&mdp).map_err(err_str)?;
            if mu.feasibility_residual(&mdp) > 1e-10 {
                return Err("optimal occupancy violates the flow constraints".into());
            }
            // independent route: damped power iteration for each policy's gain
            let mut best = f64::NEG_INFINITY;
            let mut assignment = vec![0usize; s_n];
            loop {
                let cand = Policy::deterministic(s_n, a_n, &assignment).map_err(err_str)?;
                let p = policy_transition_matrix(&mdp, &cand);
                let damped = (&p + nalgebra::DMatrix::identity(s_n, s_n)) * 0.5;
                let mut nu = DVector::from_element(s_n, 1.0 / s_n as f64);
                for _ in 0..20_000 {
                    nu = damped.transpose() * nu;
                    let total: f64 = nu.iter().sum();
                    nu /= total;
                }
                let gain: f64 = (0..s_n).map(|s| nu[s] * mdp.reward(s, assignment[s])).sum();
                best = best.max(gain);
                let mut carry = true;
                for slot in assignment.iter_mut() {
                    if !carry {
                        break;
                    }
                    *slot += 1;
                    if *slot == a_n {
                        *slot = 0;
                    } else {
                        carry = false;
                    }
                }
                if carry {
                    break;
                }
            }
            if (rho - best).abs() > 1e-9 {
                return Err(format!(
                    "S={s_n},A={a_n}: oracle gain {rho} vs enumeration {best}"
                ));
            }
            let achieved = gain_and_bias(&mdp, &pi).map_err(err_str)?.rho;
            if (achieved - rho).abs() > 1e-12 {
                return Err("oracle policy does not achieve the reported gain".into());
            }
        }
        Ok("stationary laws, Bellman residuals and enumerations all agree".into())
    })
}

pub const GATE_NAMES: [&str; 10] = [
    "theorem1-noiseless",
    "theorem1-stochastic",
    "divergence-contrast",
    "rate-shape",
    "cogda-comida-equivalence",
    "prox-oracles",
    "duality-gap-identity",
    "planning-quality",
    "estimator-contracts",
    "oracle-consistency",
];

pub fn run_gate(name: &str) -> Option<GateOutcome> {
    match name {
        "theorem1-noiseless" => Some(gate_theorem1_noiseless()),
        "theorem1-stochastic" => Some(gate_theorem1_stochastic()),
        "divergence-contrast" => Some(gate_divergence_contrast()),
        "rate-shape" => Some(gate_rate_shape()),
        "cogda-comida-equivalence" => Some(gate_cogda_comida_equivalence()),
        "prox-oracles" => Some(gate_prox_oracles()),
        "duality-gap-identity" => Some(gate_duality_gap_identity()),
        "planning-quality" => Some(gate_planning_quality()),
        "estimator-contracts" => Some(gate_estimator_contracts()),
        "oracle-consistency" => Some(gate_exact_oracle_consistency()),
        _ => None,
    }
}

pub fn run_suite(name: &str) -> Option<Vec<GateOutcome>> {
    if name == "all" {
        Some(GATE_NAMES.iter().map(|n| run_gate(n).unwrap()).collect())
    } else {
        run_gate(name).map(|o| vec![o])
    }
}
