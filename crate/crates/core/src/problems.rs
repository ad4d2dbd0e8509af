//! Bilinear games, the stochastic first-order oracle with multiplicative
//! matrix noise, exact saddle points and duality-gap evaluation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::solvers::SolverParams;

/// The objective f(x, y) = xᵀMy + bᵀx − cᵀy on ℝᵐ × ℝⁿ.
#[derive(Debug, Clone)]
pub struct BilinearGame {
    pub matrix: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

impl BilinearGame {
    pub fn new(matrix: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(CoreError::Parameter("game matrix must be nonempty".into()));
        }
        if b.len() != matrix.nrows() {
            return Err(CoreError::DimensionMismatch {
                context: "BilinearGame b",
                expected: matrix.nrows(),
                found: b.len(),
            });
        }
        if c.len() != matrix.ncols() {
            return Err(CoreError::DimensionMismatch {
                context: "BilinearGame c",
                expected: matrix.ncols(),
                found: c.len(),
            });
        }
        if matrix.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::Parameter("game entries must be finite".into()));
        }
        Ok(Self { matrix, b, c })
    }

    pub fn dim_x(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * y)) + self.b.dot(x) - self.c.dot(y)
    }

    /// Spectral norm of M (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        self.matrix
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixEntryDist {
    /// Each entry of the perturbation is ±amplitude with equal probability.
    Symmetric,
    /// Each entry is uniform on [−amplitude, amplitude].
    Uniform,
}

#[derive(Debug, Clone)]
pub enum NoiseKind {
    Noiseless,
    /// M̂(t) = M + ξ with i.i.d. bounded entries; b and c are observed exactly.
    EntrywiseMatrix { amplitude: f64, dist: MatrixEntryDist },
    /// b̂ and ĉ get ± amplitude entrywise perturbations; M is exact.
    EntrywiseVectors { amplitude_b: f64, amplitude_c: f64 },
}

/// A noise model together with declared constants satisfying
/// E‖M̂y‖² ≤ L_M²‖y‖², E‖M̂ᵀx‖² ≤ L_M²‖x‖², E‖b̂‖² ≤ L_b and E‖ĉ‖² ≤ L_c.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub l_m: f64,
    pub l_b: f64,
    pub l_c: f64,
    /// One shared M̂(t) for both players within a round. Set to false only
    /// for ablations; the declared constants stay valid either way.
    pub shared_matrix_sample: bool,
}

impl NoiseModel {
    /// Builds the model with constants certified from the game itself.
    ///
    /// For entrywise matrix noise of amplitude a, every sample satisfies
    /// ‖M̂‖_op ≤ ‖M‖_op + a·√(mn) via the Frobenius bound, so that value is a
    /// valid L_M per sample (not just in expectation).
    pub fn certified(game: &BilinearGame, kind: NoiseKind) -> Result<Self> {
        let op = game.operator_norm();
        let (m, n) = (game.dim_x() as f64, game.dim_y() as f64);
        let (l_m, l_b, l_c) = match &kind {
            NoiseKind::Noiseless => (op, game.b.norm_squared(), game.c.norm_squared()),
            NoiseKind::EntrywiseMatrix { amplitude, .. } => {
                if *amplitude < 0.0 {
                    return Err(CoreError::Parameter("noise amplitude must be nonnegative".into()));
                }
                (
                    op + amplitude * (m * n).sqrt(),
                    game.b.norm_squared(),
                    game.c.norm_squared(),
                )
            }
            NoiseKind::EntrywiseVectors { amplitude_b, amplitude_c } => {
                if *amplitude_b < 0.0 || *amplitude_c < 0.0 {
                    return Err(CoreError::Parameter("noise amplitude must be nonnegative".into()));
                }
                (
                    op,
                    game.b.norm_squared() + m * amplitude_b * amplitude_b,
                    game.c.norm_squared() + n * amplitude_c * amplitude_c,
                )
            }
        };
        Ok(Self {
            kind,
            l_m,
            l_b,
            l_c,
            shared_matrix_sample: true,
        })
    }

    pub fn noiseless(game: &BilinearGame) -> Self {
        Self::certified(game, NoiseKind::Noiseless).expect("noiseless certification cannot fail")
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(self.kind, NoiseKind::Noiseless)
    }
}

/// One round's noisy gradient pair.
#[derive(Debug, Clone)]
pub struct GradientSample {
    pub g_x: DVector<f64>,
    pub g_y: DVector<f64>,
    pub queries_used: u64,
}

/// g_x = My + b and g_y = Mᵀx − c.
pub fn exact_gradients(
    game: &BilinearGame,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_point_dims(game, x, y)?;
    Ok((&game.matrix * y + &game.b, game.matrix.tr_mul(x) - &game.c))
}

fn check_point_dims(game: &BilinearGame, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    if x.len() != game.dim_x() {
        return Err(CoreError::DimensionMismatch {
            context: "game point x",
            expected: game.dim_x(),
            found: x.len(),
        });
    }
    if y.len() != game.dim_y() {
        return Err(CoreError::DimensionMismatch {
            context: "game point y",
            expected: game.dim_y(),
            found: y.len(),
        });
    }
    Ok(())
}

fn sample_matrix_perturbation(
    rows: usize,
    cols: usize,
    amplitude: f64,
    dist: MatrixEntryDist,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| match dist {
        MatrixEntryDist::Symmetric => {
            if rng.gen::<bool>() {
                amplitude
            } else {
                -amplitude
            }
        }
        MatrixEntryDist::Uniform => amplitude * (2.0 * rng.gen::<f64>() - 1.0),
    })
}

/// Draws M̂(t), b̂(t), ĉ(t) and returns g̃_x = M̂y + b̂, g̃_y = M̂ᵀx − ĉ.
///
/// By default one shared M̂ serves both players within the round.
pub fn sample_oracle(
    game: &BilinearGame,
    noise: &NoiseModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<GradientSample> {
    check_point_dims(game, x, y)?;
    let (g_x, g_y) = match &noise.kind {
        NoiseKind::Noiseless => exact_gradients(game, x, y)?,
        NoiseKind::EntrywiseMatrix { amplitude, dist } => {
            let m_hat =
                &game.matrix + sample_matrix_perturbation(game.dim_x(), game.dim_y(), *amplitude, *dist, rng);
            if noise.shared_matrix_sample {
                (&m_hat * y + &game.b, m_hat.tr_mul(x) - &game.c)
            } else {
                let m_hat_y = &game.matrix
                    + sample_matrix_perturbation(game.dim_x(), game.dim_y(), *amplitude, *dist, rng);
                (&m_hat * y + &game.b, m_hat_y.tr_mul(x) - &game.c)
            }
        }
        NoiseKind::EntrywiseVectors { amplitude_b, amplitude_c } => {
            let b_hat = game.b.map(|v| v + flip(rng, *amplitude_b));
            let c_hat = game.c.map(|v| v + flip(rng, *amplitude_c));
            (&game.matrix * y + b_hat, game.matrix.tr_mul(x) - c_hat)
        }
    };
    Ok(GradientSample {
        g_x,
        g_y,
        queries_used: 1,
    })
}

fn flip(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if rng.gen::<bool>() {
        amplitude
    } else {
        -amplitude
    }
}

/// The exact saddle point when it is unique, i.e. when M is square and
/// invertible: y* = −M⁻¹b and x* = M⁻ᵀc.
#[derive(Debug, Clone)]
pub enum Saddle {
    Unique { x: DVector<f64>, y: DVector<f64> },
    NoUniqueSaddle,
}

pub fn exact_saddle(game: &BilinearGame) -> Saddle {
    if game.dim_x() != game.dim_y() {
        return Saddle::NoUniqueSaddle;
    }
    let lu = game.matrix.clone().lu();
    let y = match lu.solve(&(-&game.b)) {
        Some(y) => y,
        None => return Saddle::NoUniqueSaddle,
    };
    let x = match game.matrix.transpose().lu().solve(&game.c) {
        Some(x) => x,
        None => return Saddle::NoUniqueSaddle,
    };
    // reject numerically singular systems that LU nominally solved
    let scale = game.operator_norm().max(1.0);
    let res_y = (&game.matrix * &y + &game.b).norm() / (scale * y.norm().max(1.0));
    let res_x = (game.matrix.tr_mul(&x) - &game.c).norm() / (scale * x.norm().max(1.0));
    if !res_y.is_finite() || !res_x.is_finite() || res_y > 1e-8 || res_x > 1e-8 {
        return Saddle::NoUniqueSaddle;
    }
    Saddle::Unique { x, y }
}

/// Duality gap f(x̄, y*) − f(x*, ȳ) against a comparator (x*, y*), evaluated
/// with the exact objective.
pub fn duality_gap(
    game: &BilinearGame,
    x_bar: &DVector<f64>,
    y_bar: &DVector<f64>,
    comparator: (&DVector<f64>, &DVector<f64>),
) -> Result<f64> {
    check_point_dims(game, x_bar, y_bar)?;
    check_point_dims(game, comparator.0, comparator.1)?;
    Ok(game.value(x_bar, comparator.1) - game.value(comparator.0, y_bar))
}

/// Duality gap with both comparators restricted to the centered ball of the
/// given radius:
/// max_{‖y°‖≤R} f(x̄, y°) − min_{‖x°‖≤R} f(x°, ȳ)
///   = bᵀx̄ + R‖Mᵀx̄ − c‖ + R‖Mȳ + b‖ + cᵀȳ.
///
/// Once the ball contains the exact saddle this is nonnegative, vanishes
/// exactly at the saddle and scales with the gradient norms at the averaged
/// point, which makes it the rate-curve metric for unconstrained runs. (The
/// pointwise gap against the exact saddle itself is identically zero for
/// unconstrained bilinear games, since the first-order conditions freeze
/// f(·, y*) and f(x*, ·).)
pub fn ball_restricted_gap(
    game: &BilinearGame,
    x_bar: &DVector<f64>,
    y_bar: &DVector<f64>,
    radius: f64,
) -> Result<f64> {
    check_point_dims(game, x_bar, y_bar)?;
    if !(radius > 0.0) {
        return Err(CoreError::Parameter(format!(
            "restriction radius must be positive, got {radius}"
        )));
    }
    let best_y = game.b.dot(x_bar) + radius * (game.matrix.tr_mul(x_bar) - &game.c).norm();
    let best_x = radius * (&game.matrix * y_bar + &game.b).norm() + game.c.dot(y_bar);
    Ok(best_y + best_x)
}

fn coupling_ok(actual: f64, expected: f64) -> bool {
    (actual - expected).abs() <= 1e-9 * expected.abs().max(1.0)
}

/// Evaluates the certified duality-gap upper bound for stabilized
/// gradient descent-ascent runs with the couplings ϱ_y = 2η_x·L_M² and
/// ϱ_x = 2η_y·L_M².
///
/// In the noiseless case the oracle-norm terms are evaluated exactly at the
/// initial points; otherwise they are replaced by the declared-constant upper
/// bounds 2L_M²‖x₁‖² + 2L_c and 2L_M²‖y₁‖² + 2L_b.
pub fn theorem1_bound(
    game: &BilinearGame,
    noise: &NoiseModel,
    params: &SolverParams,
    comparator: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<f64> {
    let l_m = noise.l_m;
    if !coupling_ok(params.rho_y, 2.0 * params.eta_x * l_m * l_m)
        || !coupling_ok(params.rho_x, 2.0 * params.eta_y * l_m * l_m)
    {
        return Err(CoreError::Parameter(format!(
            "stabilization weights violate the coupling rho_y = 2*eta_x*L_M^2, rho_x = 2*eta_y*L_M^2 \
             (rho_x={}, rho_y={}, eta_x={}, eta_y={}, L_M={})",
            params.rho_x, params.rho_y, params.eta_x, params.eta_y, l_m
        )));
    }
    let owned;
    let (x_star, y_star) = match comparator {
        Some(c) => c,
        None => match exact_saddle(game) {
            Saddle::Unique { x, y } => {
                owned = (x, y);
                (&owned.0, &owned.1)
            }
            Saddle::NoUniqueSaddle => {
                return Err(CoreError::Parameter(
                    "game has no unique saddle point; supply an explicit comparator".into(),
                ))
            }
        },
    };
    let t = params.horizon as f64;
    let x1 = &params.x_init;
    let y1 = &params.y_init;
    let dy = (y_star - y1).norm_squared();
    let dx = (x_star - x1).norm_squared();
    let init_terms = (0.5 / (params.eta_y * t) + params.eta_x * l_m * l_m) * dy
        + (0.5 / (params.eta_x * t) + params.eta_y * l_m * l_m) * dx;
    let (grad_y_at_init, grad_x_at_init) = if noise.is_noiseless() {
        (
            (game.matrix.tr_mul(x1) - &game.c).norm_squared(),
            (&game.matrix * y1 + &game.b).norm_squared(),
        )
    } else {
        (
            2.0 * l_m * l_m * x1.norm_squared() + 2.0 * noise.l_c,
            2.0 * l_m * l_m * y1.norm_squared() + 2.0 * noise.l_b,
        )
    };
    Ok(init_terms + params.eta_y * grad_y_at_init + params.eta_x * grad_x_at_init)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Reals,
    Simplex,
}

pub type ObjectiveFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
pub type OracleFn =
    dyn Fn(&DVector<f64>, &DVector<f64>, &mut ChaCha8Rng) -> Result<GradientSample> + Send + Sync;
pub type BallGapFn = dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> f64 + Send + Sync;

/// A convex-concave objective whose subgradient norms grow at most linearly
/// in the opposing iterate, plus a stochastic oracle with matching
/// second-moment constants.
pub struct SubBilinearProblem {
    pub dim_x: usize,
    pub dim_y: usize,
    pub domain_x: DomainKind,
    pub domain_y: DomainKind,
    pub objective: Box<ObjectiveFn>,
    pub oracle: Box<OracleFn>,
    /// Growth constant l of the exact subgradients.
    pub subgradient_growth: f64,
    /// Growth constant L of the stochastic gradients, centered at the
    /// initial points.
    pub noise_growth: f64,
    /// Comparator pair used for exact gap evaluation, when known.
    pub comparator: Option<(DVector<f64>, DVector<f64>)>,
    /// Ball-restricted gap evaluator (x̄, ȳ, radius) ↦ gap, when the problem
    /// structure admits one in closed form.
    pub ball_gap: Option<Box<BallGapFn>>,
}

impl SubBilinearProblem {
    /// Wraps a bilinear game and its oracle, certifying the growth constants
    /// from the declared noise constants and the initial points.
    pub fn from_bilinear(
        game: &BilinearGame,
        noise: &NoiseModel,
        x_init: &DVector<f64>,
        y_init: &DVector<f64>,
    ) -> Self {
        let op = game.operator_norm();
        let l_det = (2.0 * op * op)
            .max(2.0 * game.b.norm_squared())
            .max(2.0 * game.c.norm_squared())
            .sqrt();
        let two_lm2 = 2.0 * noise.l_m * noise.l_m;
        // E‖g̃_x‖² ≤ 2L_M²‖y_t − y₁‖² + 2E‖M̂y₁ + b̂‖², and symmetrically in x.
        let grad_x_init = if y_init.norm() == 0.0 {
            noise.l_b
        } else {
            two_lm2 * y_init.norm_squared() + 2.0 * noise.l_b
        };
        let grad_y_init = if x_init.norm() == 0.0 {
            noise.l_c
        } else {
            two_lm2 * x_init.norm_squared() + 2.0 * noise.l_c
        };
        let l_sto = two_lm2
            .max(2.0 * grad_x_init)
            .max(2.0 * grad_y_init)
            .sqrt();
        let comparator = match exact_saddle(game) {
            Saddle::Unique { x, y } => Some((x, y)),
            Saddle::NoUniqueSaddle => None,
        };
        let game = Arc::new(game.clone());
        let noise = Arc::new(noise.clone());
        let game_for_value = Arc::clone(&game);
        let game_for_ball = Arc::clone(&game);
        Self {
            dim_x: game.dim_x(),
            dim_y: game.dim_y(),
            domain_x: DomainKind::Reals,
            domain_y: DomainKind::Reals,
            objective: Box::new(move |x, y| game_for_value.value(x, y)),
            oracle: Box::new(move |x, y, rng| sample_oracle(&game, &noise, x, y, rng)),
            subgradient_growth: l_det,
            noise_growth: l_sto,
            comparator,
            ball_gap: Some(Box::new(move |x_bar, y_bar, radius| {
                ball_restricted_gap(&game_for_ball, x_bar, y_bar, radius)
                    .expect("dimensions were validated by the run")
            })),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NoiseSpec {
    kind: String,
    #[serde(default)]
    amplitudes: Vec<f64>,
    #[serde(rename = "L_M")]
    l_m: f64,
    #[serde(rename = "L_b")]
    l_b: f64,
    #[serde(rename = "L_c")]
    l_c: f64,
}

#[derive(Serialize, Deserialize)]
struct GameSpec {
    m: usize,
    n: usize,
    #[serde(rename = "M")]
    matrix: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    noise: NoiseSpec,
}

/// Serializes the game and noise declaration as a JSON document with fields
/// {m, n, M (row-major), b, c, noise{kind, amplitudes, L_M, L_b, L_c}}.
pub fn game_to_json(game: &BilinearGame, noise: &NoiseModel) -> String {
    let (kind, amplitudes) = match &noise.kind {
        NoiseKind::Noiseless => ("noiseless".to_string(), vec![]),
        NoiseKind::EntrywiseMatrix { amplitude, dist } => (
            match dist {
                MatrixEntryDist::Symmetric => "entrywise_matrix_symmetric".to_string(),
                MatrixEntryDist::Uniform => "entrywise_matrix_uniform".to_string(),
            },
            vec![*amplitude],
        ),
        NoiseKind::EntrywiseVectors { amplitude_b, amplitude_c } => {
            ("entrywise_vectors".to_string(), vec![*amplitude_b, *amplitude_c])
        }
    };
    let spec = GameSpec {
        m: game.dim_x(),
        n: game.dim_y(),
        matrix: game.matrix.row_iter().flat_map(|r| r.iter().cloned().collect::<Vec<_>>()).collect(),
        b: game.b.iter().cloned().collect(),
        c: game.c.iter().cloned().collect(),
        noise: NoiseSpec {
            kind,
            amplitudes,
            l_m: noise.l_m,
            l_b: noise.l_b,
            l_c: noise.l_c,
        },
    };
    serde_json::to_string_pretty(&spec).expect("game serialization cannot fail")
}

pub fn game_from_json(doc: &str) -> Result<(BilinearGame, NoiseModel)> {
    let spec: GameSpec =
        serde_json::from_str(doc).map_err(|e| CoreError::Serialization(e.to_string()))?;
    if spec.matrix.len() != spec.m * spec.n {
        return Err(CoreError::Serialization(format!(
            "matrix has {} entries, expected m*n = {}",
            spec.matrix.len(),
            spec.m * spec.n
        )));
    }
    let game = BilinearGame::new(
        DMatrix::from_row_slice(spec.m, spec.n, &spec.matrix),
        DVector::from_vec(spec.b),
        DVector::from_vec(spec.c),
    )?;
    let kind = match spec.noise.kind.as_str() {
        "noiseless" => NoiseKind::Noiseless,
        "entrywise_matrix_symmetric" | "entrywise_matrix_uniform" => {
            let amplitude = *spec.noise.amplitudes.first().ok_or_else(|| {
                CoreError::Serialization("matrix noise requires one amplitude".into())
            })?;
            NoiseKind::EntrywiseMatrix {
                amplitude,
                dist: if spec.noise.kind.ends_with("symmetric") {
                    MatrixEntryDist::Symmetric
                } else {
                    MatrixEntryDist::Uniform
                },
            }
        }
        "entrywise_vectors" => {
            if spec.noise.amplitudes.len() != 2 {
                return Err(CoreError::Serialization(
                    "vector noise requires amplitudes [a_b, a_c]".into(),
                ));
            }
            NoiseKind::EntrywiseVectors {
                amplitude_b: spec.noise.amplitudes[0],
                amplitude_c: spec.noise.amplitudes[1],
            }
        }
        other => {
            return Err(CoreError::Serialization(format!("unknown noise kind '{other}'")))
        }
    };
    let noise = NoiseModel {
        kind,
        l_m: spec.noise.l_m,
        l_b: spec.noise.l_b,
        l_c: spec.noise.l_c,
        shared_matrix_sample: true,
    };
    Ok((game, noise))
}

/// Entries of M, b, c uniform on [−1, 1]; used by the benchmark scenarios.
pub fn random_uniform_game(m: usize, n: usize, seed: u64) -> BilinearGame {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..=1.0));
    let b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..=1.0));
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
    BilinearGame::new(matrix, b, c).expect("random game is always valid")
}

/// The 2x2 rotation game used throughout the benchmark suite.
pub fn rotation_game(b: [f64; 2], c: [f64; 2]) -> BilinearGame {
    BilinearGame::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        DVector::from_vec(b.to_vec()),
        DVector::from_vec(c.to_vec()),
    )
    .expect("rotation game is valid")
}
