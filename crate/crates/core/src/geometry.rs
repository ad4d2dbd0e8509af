//! Distance-generating functions, Bregman divergences and the composite
//! prox steps used by the solvers.
//!
//! Three prox steps are provided: the Euclidean step with a squared-distance
//! stabilizer (closed form), the entropic step on the simplex (exponentiated
//! gradient), and the Euclidean step with a squared-infinity-norm regularizer
//! (exact, via Moreau decomposition and a sort-based squared-l1 prox). All
//! operations are pure functions of their inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Norm with respect to which a strong-convexity modulus is declared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormTag {
    L2,
    L1,
    LInf,
    /// The norm ‖v‖_A = sqrt(vᵀAv) of a quadratic distance generator.
    ANorm,
}

#[derive(Debug, Clone)]
pub enum DgfKind {
    /// ω(v) = ½‖v − center‖₂²
    Euclidean { center: DVector<f64> },
    /// ω(v) = Σᵢ vᵢ log vᵢ on the strictly positive orthant.
    NegativeEntropy { dim: usize },
    /// ω(v) = ½ vᵀAv for a symmetric positive-definite A.
    QuadraticNorm { matrix: DMatrix<f64> },
}

/// A distance-generating function together with its strong-convexity modulus
/// and the norm that modulus refers to.
#[derive(Debug, Clone)]
pub struct DistanceGenerator {
    pub kind: DgfKind,
    pub strong_convexity: f64,
    pub norm: NormTag,
}

impl DistanceGenerator {
    /// Euclidean generator: 1-strongly convex with respect to L2.
    pub fn euclidean(center: DVector<f64>) -> Self {
        Self {
            kind: DgfKind::Euclidean { center },
            strong_convexity: 1.0,
            norm: NormTag::L2,
        }
    }

    /// Negative entropy on the simplex: 1-strongly convex with respect to L1
    /// (Pinsker's inequality).
    pub fn negative_entropy(dim: usize) -> Self {
        Self {
            kind: DgfKind::NegativeEntropy { dim },
            strong_convexity: 1.0,
            norm: NormTag::L1,
        }
    }

    /// Quadratic-norm generator ½‖·‖_A². The modulus with respect to L2 is
    /// the smallest eigenvalue of A.
    pub fn quadratic_norm(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(CoreError::Parameter(
                "quadratic-norm generator requires a square matrix".into(),
            ));
        }
        let sym_dev = (&matrix - matrix.transpose()).abs().max();
        if sym_dev > 1e-10 {
            return Err(CoreError::Parameter(
                "quadratic-norm generator requires a symmetric matrix".into(),
            ));
        }
        let eigs = matrix.clone().symmetric_eigen().eigenvalues;
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig <= 0.0 {
            return Err(CoreError::Parameter(format!(
                "quadratic-norm generator requires a positive-definite matrix (min eigenvalue {min_eig})"
            )));
        }
        Ok(Self {
            kind: DgfKind::QuadraticNorm { matrix },
            strong_convexity: min_eig,
            norm: NormTag::L2,
        })
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            DgfKind::Euclidean { center } => center.len(),
            DgfKind::NegativeEntropy { dim } => *dim,
            DgfKind::QuadraticNorm { matrix } => matrix.nrows(),
        }
    }
}

fn check_dims(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(CoreError::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// Bregman divergence D(p‖q) = ω(p) − ω(q) − ⟨∇ω(q), p−q⟩ of the generator.
///
/// For the Euclidean generator this is ½‖p−q‖₂²; for negative entropy it is
/// the generalized relative entropy Σ pᵢ log(pᵢ/qᵢ) − Σpᵢ + Σqᵢ, which on the
/// simplex reduces to the KL divergence.
pub fn bregman_divergence(
    dgf: &DistanceGenerator,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<f64> {
    check_dims("bregman_divergence", dgf.dimension(), p.len())?;
    check_dims("bregman_divergence", p.len(), q.len())?;
    match &dgf.kind {
        DgfKind::Euclidean { .. } => Ok(0.5 * (p - q).norm_squared()),
        DgfKind::NegativeEntropy { .. } => {
            for (i, (&pi, &qi)) in p.iter().zip(q.iter()).enumerate() {
                if pi <= 0.0 || qi <= 0.0 {
                    return Err(CoreError::Domain(format!(
                        "negative-entropy divergence needs strictly positive coordinates, \
                         got p[{i}]={pi}, q[{i}]={qi}"
                    )));
                }
            }
            let mut acc = 0.0;
            for (&pi, &qi) in p.iter().zip(q.iter()) {
                acc += pi * (pi / qi).ln() - pi + qi;
            }
            Ok(acc)
        }
        DgfKind::QuadraticNorm { matrix } => {
            let d = p - q;
            Ok(0.5 * d.dot(&(matrix * &d)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilizerKind {
    /// H(v) = ½‖v − center‖₂²
    L2Squared,
    /// H(v) = ‖v‖∞², centered at the origin.
    LInfSquared,
}

/// A stabilizing regularizer ϱ·H(·) anchored at a center point.
#[derive(Debug, Clone)]
pub struct Stabilizer {
    pub weight: f64,
    pub center: DVector<f64>,
    pub kind: StabilizerKind,
}

impl Stabilizer {
    pub fn l2(weight: f64, center: DVector<f64>) -> Self {
        Self {
            weight,
            center,
            kind: StabilizerKind::L2Squared,
        }
    }

    /// Squared-infinity-norm stabilizer; its center is the origin.
    pub fn inf(weight: f64, dim: usize) -> Self {
        Self {
            weight,
            center: DVector::zeros(dim),
            kind: StabilizerKind::LInfSquared,
        }
    }

    /// ϱ·H(v). Zero at the center, convex and nonnegative.
    pub fn value(&self, v: &DVector<f64>) -> f64 {
        match self.kind {
            StabilizerKind::L2Squared => 0.5 * self.weight * (v - &self.center).norm_squared(),
            StabilizerKind::LInfSquared => {
                let m = (v - &self.center).abs().max();
                self.weight * m * m
            }
        }
    }
}

/// Closed-form minimizer of ⟨v, grad⟩ + ϱ·½‖v − center‖² + (1/2η)‖v − current‖².
///
/// The solution is the convex combination (current − η·grad)/(1+ϱη)
/// + ϱη·center/(1+ϱη).
pub fn prox_euclidean_composite(
    current: &DVector<f64>,
    grad: &DVector<f64>,
    step: f64,
    stab: &Stabilizer,
) -> Result<DVector<f64>> {
    check_dims("prox_euclidean_composite", current.len(), grad.len())?;
    check_dims("prox_euclidean_composite", current.len(), stab.center.len())?;
    if !(step > 0.0) {
        return Err(CoreError::Parameter(format!(
            "prox step must be positive, got {step}"
        )));
    }
    if stab.weight < 0.0 {
        return Err(CoreError::Parameter(format!(
            "stabilizer weight must be nonnegative, got {}",
            stab.weight
        )));
    }
    if stab.kind != StabilizerKind::L2Squared {
        return Err(CoreError::Geometry(
            "prox_euclidean_composite requires an L2Squared stabilizer".into(),
        ));
    }
    let mix = stab.weight * step;
    let denom = 1.0 + mix;
    Ok((current - grad * step) / denom + &stab.center * (mix / denom))
}

/// Entropic mirror step on the simplex: returns the normalization of
/// currentᵢ · exp(−η·gradᵢ).
///
/// The input must be strictly interior; the output is strictly positive and
/// invariant to adding a constant to every gradient entry.
pub fn prox_kl_simplex(
    current: &DVector<f64>,
    grad: &DVector<f64>,
    step: f64,
) -> Result<DVector<f64>> {
    check_dims("prox_kl_simplex", current.len(), grad.len())?;
    if !(step > 0.0) {
        return Err(CoreError::Parameter(format!(
            "prox step must be positive, got {step}"
        )));
    }
    for (i, &ci) in current.iter().enumerate() {
        if ci <= 0.0 {
            return Err(CoreError::Domain(format!(
                "prox_kl_simplex needs a strictly interior point, got current[{i}]={ci}"
            )));
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(CoreError::Domain("prox_kl_simplex needs finite gradients".into()));
    }
    // Work in log space and subtract the max exponent so that the update is
    // stable for large gradients.
    let logits: Vec<f64> = current
        .iter()
        .zip(grad.iter())
        .map(|(&ci, &gi)| ci.ln() - step * gi)
        .collect();
    let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = DVector::from_iterator(logits.len(), logits.iter().map(|l| (l - max_logit).exp()));
    let total: f64 = out.iter().sum();
    out /= total;
    Ok(out)
}

/// Exact prox of β‖·‖₁² at z: minimizes ½‖w − z‖² + β‖w‖₁².
///
/// The minimizer is a soft-threshold of z at the level τ solving
/// τ = 2β Σᵢ(|zᵢ| − τ)₊, found by scanning the sorted magnitudes.
fn prox_squared_l1(z: &DVector<f64>, beta: f64) -> DVector<f64> {
    if beta <= 0.0 {
        return z.clone();
    }
    let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut partial = 0.0;
    let mut tau = 0.0;
    for (k, &mk) in mags.iter().enumerate() {
        partial += mk;
        let cand = 2.0 * beta * partial / (1.0 + 2.0 * beta * (k + 1) as f64);
        let next = mags.get(k + 1).copied().unwrap_or(0.0);
        if cand >= next {
            tau = cand;
            break;
        }
    }
    z.map(|zi| zi.signum() * (zi.abs() - tau).max(0.0))
}

/// Exact minimizer of ⟨v, grad⟩ + ϱ‖v‖∞² + (1/2η)‖v − current‖₂².
///
/// Equivalently the prox of ηϱ‖·‖∞² at z = current − η·grad, evaluated via
/// Moreau decomposition against the conjugate (1/4ηϱ)‖·‖₁².
pub fn prox_inf_norm_squared_composite(
    current: &DVector<f64>,
    grad: &DVector<f64>,
    step: f64,
    weight: f64,
) -> Result<DVector<f64>> {
    check_dims("prox_inf_norm_squared_composite", current.len(), grad.len())?;
    if !(step > 0.0) {
        return Err(CoreError::Parameter(format!(
            "prox step must be positive, got {step}"
        )));
    }
    if weight < 0.0 {
        return Err(CoreError::Parameter(format!(
            "regularizer weight must be nonnegative, got {weight}"
        )));
    }
    let z = current - grad * step;
    if weight == 0.0 {
        return Ok(z);
    }
    let lambda = step * weight;
    let w = prox_squared_l1(&z, 1.0 / (4.0 * lambda));
    Ok(z - w)
}

/// Evaluates ‖v‖ under a norm tag; ANorm resolves against the generator's
/// matrix.
pub fn norm_under_tag(dgf: &DistanceGenerator, tag: NormTag, v: &DVector<f64>) -> Result<f64> {
    match tag {
        NormTag::L2 => Ok(v.norm()),
        NormTag::L1 => Ok(v.iter().map(|x| x.abs()).sum()),
        NormTag::LInf => Ok(v.abs().max()),
        NormTag::ANorm => match &dgf.kind {
            DgfKind::QuadraticNorm { matrix } => Ok(v.dot(&(matrix * v)).sqrt()),
            _ => Err(CoreError::Geometry(
                "ANorm is only defined for quadratic-norm generators".into(),
            )),
        },
    }
}

#[derive(Debug, Clone)]
pub struct StrongConvexityReport {
    pub holds: bool,
    pub pairs_checked: usize,
    /// Indices of pairs where D(p‖q) < (γ/2)‖p−q‖² − slack.
    pub violations: Vec<usize>,
    /// min over pairs of D(p‖q) − (γ/2)‖p−q‖²; negative when violated.
    pub worst_margin: f64,
}

/// Checks D(p‖q) ≥ (γ/2)‖p−q‖² on the supplied pairs, with 1e-10 slack.
pub fn check_strong_convexity(
    dgf: &DistanceGenerator,
    tag: NormTag,
    gamma: f64,
    pairs: &[(DVector<f64>, DVector<f64>)],
) -> Result<StrongConvexityReport> {
    const SLACK: f64 = 1e-10;
    let mut violations = Vec::new();
    let mut worst = f64::INFINITY;
    for (i, (p, q)) in pairs.iter().enumerate() {
        let div = bregman_divergence(dgf, p, q)?;
        let dist = norm_under_tag(dgf, tag, &(p - q))?;
        let margin = div - 0.5 * gamma * dist * dist;
        worst = worst.min(margin);
        if margin < -SLACK {
            violations.push(i);
        }
    }
    Ok(StrongConvexityReport {
        holds: violations.is_empty(),
        pairs_checked: pairs.len(),
        violations,
        worst_margin: if pairs.is_empty() { 0.0 } else { worst },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    // Independent route for the Euclidean composite prox: solve the
    // per-coordinate first-order condition of the quadratic objective.
    fn quadratic_minimizer(
        current: &DVector<f64>,
        grad: &DVector<f64>,
        step: f64,
        weight: f64,
        center: &DVector<f64>,
    ) -> DVector<f64> {
        DVector::from_iterator(
            current.len(),
            (0..current.len()).map(|i| {
                (current[i] / step + weight * center[i] - grad[i]) / (1.0 / step + weight)
            }),
        )
    }

    fn inf_prox_objective(
        v: &DVector<f64>,
        current: &DVector<f64>,
        grad: &DVector<f64>,
        step: f64,
        weight: f64,
    ) -> f64 {
        let m = v.abs().max();
        grad.dot(v) + weight * m * m + (v - current).norm_squared() / (2.0 * step)
    }

    #[test]
    fn bregman_euclidean_cases() {
        let dgf = DistanceGenerator::euclidean(DVector::zeros(2));
        let p = vec2(3.0, -1.0);
        assert_eq!(bregman_divergence(&dgf, &p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(
            bregman_divergence(&dgf, &vec2(1.0, 0.0), &vec2(0.0, 0.0)).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn bregman_entropy_cases() {
        let dgf = DistanceGenerator::negative_entropy(2);
        let p = vec2(0.5, 0.5);
        assert_eq!(bregman_divergence(&dgf, &p, &p).unwrap(), 0.0);
        // KL((0.5,0.5) ‖ (0.25,0.75)) computed by hand.
        let q = vec2(0.25, 0.75);
        let expected = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert_abs_diff_eq!(bregman_divergence(&dgf, &p, &q).unwrap(), expected, epsilon = 1e-15);
        // zero coordinate is a domain error, not a clipped value
        assert!(matches!(
            bregman_divergence(&dgf, &p, &vec2(0.0, 1.0)),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn bregman_dimension_mismatch() {
        let dgf = DistanceGenerator::euclidean(DVector::zeros(2));
        let p = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            bregman_divergence(&dgf, &p, &p),
            Err(CoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bregman_nonnegative_zero_iff_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dgfs = [
            DistanceGenerator::euclidean(DVector::zeros(4)),
            DistanceGenerator::negative_entropy(4),
        ];
        for dgf in &dgfs {
            for _ in 0..500 {
                let p = random_simplex(&mut rng, 4);
                let q = random_simplex(&mut rng, 4);
                let d = bregman_divergence(dgf, &p, &q).unwrap();
                assert!(d >= -1e-15, "negative divergence {d}");
                if (&p - &q).abs().max() > 1e-6 {
                    assert!(d > 0.0);
                }
                assert!(bregman_divergence(dgf, &p, &p).unwrap().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn stabilizer_values() {
        let stab = Stabilizer::l2(2.0, vec2(1.0, -1.0));
        assert_eq!(stab.value(&vec2(1.0, -1.0)), 0.0);
        assert_abs_diff_eq!(stab.value(&vec2(2.0, -1.0)), 1.0, epsilon = 1e-15);
        let inf = Stabilizer::inf(3.0, 2);
        assert_eq!(inf.value(&DVector::zeros(2)), 0.0);
        assert_abs_diff_eq!(inf.value(&vec2(0.5, -2.0)), 12.0, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            assert!(stab.value(&v) >= 0.0);
            assert!(inf.value(&v) >= 0.0);
        }
    }

    #[test]
    fn prox_euclidean_named_cases() {
        // weight 0 reduces to a plain gradient step
        let out = prox_euclidean_composite(
            &vec2(1.0, 0.0),
            &vec2(2.0, 0.0),
            0.5,
            &Stabilizer::l2(0.0, vec2(9.0, 9.0)),
        )
        .unwrap();
        assert_abs_diff_eq!(out[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-15);

        // direct evaluation of the closed form
        let out = prox_euclidean_composite(
            &vec2(1.0, 0.0),
            &vec2(2.0, 0.0),
            0.5,
            &Stabilizer::l2(1.0, vec2(0.0, 0.0)),
        )
        .unwrap();
        assert_abs_diff_eq!(out[0], 0.0, epsilon = 1e-15);

        // stationary point
        let out = prox_euclidean_composite(
            &vec2(2.0, 2.0),
            &vec2(0.0, 0.0),
            0.7,
            &Stabilizer::l2(3.0, vec2(2.0, 2.0)),
        )
        .unwrap();
        assert_abs_diff_eq!(out[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 2.0, epsilon = 1e-12);

        assert!(matches!(
            prox_euclidean_composite(
                &vec2(1.0, 0.0),
                &vec2(2.0, 0.0),
                0.0,
                &Stabilizer::l2(1.0, vec2(0.0, 0.0))
            ),
            Err(CoreError::Parameter(_))
        ));
    }

    #[test]
    fn prox_euclidean_matches_quadratic_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let n = rng.gen_range(1..8);
            let current = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let grad = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let center = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let step = rng.gen_range(0.01..2.0);
            let weight = rng.gen_range(0.0..3.0);
            let got =
                prox_euclidean_composite(&current, &grad, step, &Stabilizer::l2(weight, center.clone()))
                    .unwrap();
            let want = quadratic_minimizer(&current, &grad, step, weight, &center);
            assert!((got - want).abs().max() < 1e-12);
        }
    }

    #[test]
    fn prox_kl_named_cases() {
        let current = vec2(0.3, 0.7);
        let out = prox_kl_simplex(&current, &vec2(0.0, 0.0), 1.0).unwrap();
        assert!((out - &current).abs().max() < 1e-15);

        // shift invariance
        let out = prox_kl_simplex(&current, &vec2(5.0, 5.0), 0.3).unwrap();
        assert!((out - &current).abs().max() < 1e-15);

        // hand-computed exponentiated gradient
        let out = prox_kl_simplex(&vec2(0.5, 0.5), &vec2(2.0f64.ln(), 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(out[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 2.0 / 3.0, epsilon = 1e-15);

        assert!(matches!(
            prox_kl_simplex(&vec2(0.0, 1.0), &vec2(0.0, 0.0), 1.0),
            Err(CoreError::Domain(_))
        ));
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        let mut v = DVector::from_fn(n, |_, _| -(1.0 - rng.gen::<f64>()).ln());
        let s: f64 = v.iter().sum();
        v /= s;
        v
    }

    #[test]
    fn prox_kl_simplex_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = rng.gen_range(2..10);
            let current = random_simplex(&mut rng, n);
            let grad = DVector::from_fn(n, |_, _| rng.gen_range(-20.0..20.0));
            let step = rng.gen_range(0.01..2.0);
            let out = prox_kl_simplex(&current, &grad, step).unwrap();
            assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(out.iter().all(|&x| x > 0.0));
            let shift = rng.gen_range(-10.0..10.0);
            let shifted = prox_kl_simplex(&current, &grad.add_scalar(shift), step).unwrap();
            assert!((out - shifted).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn prox_inf_named_cases() {
        // weight 0 is a plain gradient step
        let out =
            prox_inf_norm_squared_composite(&vec2(1.0, -2.0), &vec2(0.5, 0.25), 2.0, 0.0).unwrap();
        assert!((out - vec2(0.0, -2.5)).abs().max() < 1e-15);

        // scalar calculus: minimize v² + ½(v−1)² → 1/3
        let one = DVector::from_vec(vec![1.0]);
        let zero = DVector::from_vec(vec![0.0]);
        let out = prox_inf_norm_squared_composite(&one, &zero, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(out[0], 1.0 / 3.0, epsilon = 1e-12);

        let out = prox_inf_norm_squared_composite(&vec2(0.0, 0.0), &vec2(0.0, 0.0), 1.0, 2.0).unwrap();
        assert_eq!(out.abs().max(), 0.0);

        assert!(matches!(
            prox_inf_norm_squared_composite(&one, &zero, -1.0, 1.0),
            Err(CoreError::Parameter(_))
        ));
    }

    // Brute-force route: grid scan with interval refinement over the
    // infinity-norm level; at a fixed level the coordinates decouple into
    // box clamps.
    fn inf_prox_grid_refine(
        current: &DVector<f64>,
        grad: &DVector<f64>,
        step: f64,
        weight: f64,
    ) -> DVector<f64> {
        let z = current - grad * step;
        if weight == 0.0 || z.abs().max() == 0.0 {
            return z;
        }
        let objective = |tau: f64| -> f64 {
            let clipped = z.map(|zi| zi.clamp(-tau, tau));
            weight * tau * tau + (&clipped - &z).norm_squared() / (2.0 * step)
        };
        let (mut lo, mut hi) = (0.0, z.abs().max());
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
            lo = (best.1 - width / grid as f64).max(0.0);
            hi = best.1 + width / grid as f64;
            if hi - lo < 1e-14 {
                break;
            }
        }
        let tau = 0.5 * (lo + hi);
        z.map(|zi| zi.clamp(-tau, tau))
    }

    #[test]
    fn prox_inf_matches_grid_refinement_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for dim in 1..=5usize {
            for _ in 0..100 {
                let current = DVector::from_fn(dim, |_, _| rng.gen_range(-4.0..4.0));
                let grad = DVector::from_fn(dim, |_, _| rng.gen_range(-4.0..4.0));
                let step = rng.gen_range(0.05..2.0);
                let weight = rng.gen_range(0.0..4.0);
                let fast = prox_inf_norm_squared_composite(&current, &grad, step, weight).unwrap();
                let slow = inf_prox_grid_refine(&current, &grad, step, weight);
                assert!(
                    (fast - slow).abs().max() <= 1e-6,
                    "dim {dim}: sort-based and grid-refined minimizers disagree"
                );
            }
        }
    }

    #[test]
    fn prox_inf_local_optimality_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(1..6);
            let current = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let grad = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let step = rng.gen_range(0.05..2.0);
            let weight = rng.gen_range(0.0..4.0);
            let v = prox_inf_norm_squared_composite(&current, &grad, step, weight).unwrap();
            let base = inf_prox_objective(&v, &current, &grad, step, weight);
            for _ in 0..10_000 {
                let scale = 10f64.powf(rng.gen_range(-6.0..0.0));
                let pert = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)) * scale;
                let probe = inf_prox_objective(&(&v + &pert), &current, &grad, step, weight);
                assert!(
                    probe >= base - 1e-12,
                    "perturbation improved the prox objective by {}",
                    base - probe
                );
            }
        }
    }

    #[test]
    fn strong_convexity_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let euclid = DistanceGenerator::euclidean(DVector::zeros(3));
        let pairs: Vec<_> = (0..100)
            .map(|_| {
                (
                    DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0)),
                    DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0)),
                )
            })
            .collect();
        assert!(check_strong_convexity(&euclid, NormTag::L2, 1.0, &pairs)
            .unwrap()
            .holds);

        // Pinsker: entropy on the simplex is 1-strongly convex w.r.t. L1
        let entropy = DistanceGenerator::negative_entropy(4);
        let pairs: Vec<_> = (0..1000)
            .map(|_| (random_simplex(&mut rng, 4), random_simplex(&mut rng, 4)))
            .collect();
        assert!(check_strong_convexity(&entropy, NormTag::L1, 1.0, &pairs)
            .unwrap()
            .holds);

        // a claimed modulus of 2 for the Euclidean generator is false
        let bad = check_strong_convexity(
            &euclid,
            NormTag::L2,
            2.0,
            &[(
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::zeros(3),
            )],
        )
        .unwrap();
        assert!(!bad.holds);
        assert_eq!(bad.violations, vec![0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn simplex_strategy(n: usize) -> impl Strategy<Value = DVector<f64>> {
            proptest::collection::vec(1e-6f64..1.0, n).prop_map(|raw| {
                let total: f64 = raw.iter().sum();
                DVector::from_iterator(raw.len(), raw.into_iter().map(|v| v / total))
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn euclidean_prox_solves_the_first_order_condition(
                current in proptest::collection::vec(-5.0f64..5.0, 4),
                grad in proptest::collection::vec(-5.0f64..5.0, 4),
                center in proptest::collection::vec(-5.0f64..5.0, 4),
                step in 0.01f64..2.0,
                weight in 0.0f64..3.0,
            ) {
                let current = DVector::from_vec(current);
                let grad = DVector::from_vec(grad);
                let center = DVector::from_vec(center);
                let out = prox_euclidean_composite(&current, &grad, step, &Stabilizer::l2(weight, center.clone())).unwrap();
                for i in 0..4 {
                    let residual = grad[i] + weight * (out[i] - center[i]) + (out[i] - current[i]) / step;
                    prop_assert!(residual.abs() <= 1e-10);
                }
            }

            #[test]
            fn kl_prox_stays_on_the_simplex_and_ignores_shifts(
                current in simplex_strategy(5),
                grad in proptest::collection::vec(-20.0f64..20.0, 5),
                step in 0.01f64..2.0,
                shift in -10.0f64..10.0,
            ) {
                let grad = DVector::from_vec(grad);
                let out = prox_kl_simplex(&current, &grad, step).unwrap();
                prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(out.iter().all(|&p| p > 0.0));
                let shifted = prox_kl_simplex(&current, &grad.add_scalar(shift), step).unwrap();
                prop_assert!((out - shifted).abs().max() <= 1e-12);
            }

            #[test]
            fn divergences_are_nonnegative_and_vanish_only_at_equality(
                p in simplex_strategy(4),
                q in simplex_strategy(4),
            ) {
                let entropy = DistanceGenerator::negative_entropy(4);
                let d = bregman_divergence(&entropy, &p, &q).unwrap();
                prop_assert!(d >= -1e-15);
                prop_assert!(bregman_divergence(&entropy, &p, &p).unwrap().abs() <= 1e-12);
                // Pinsker's inequality as the strong-convexity witness
                let l1: f64 = (&p - &q).iter().map(|v| v.abs()).sum();
                prop_assert!(d + 1e-12 >= 0.5 * l1 * l1);
            }
        }
    }

    #[test]
    fn quadratic_norm_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let dgf = DistanceGenerator::quadratic_norm(a).unwrap();
        assert_abs_diff_eq!(dgf.strong_convexity, 1.0, epsilon = 1e-12);
        let d = bregman_divergence(&dgf, &vec2(1.0, 1.0), &vec2(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(d, 2.5, epsilon = 1e-12);
        // modulus is certified against the L2 norm on random pairs
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs: Vec<_> = (0..200)
            .map(|_| {
                (
                    DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
                    DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
                )
            })
            .collect();
        assert!(
            check_strong_convexity(&dgf, NormTag::L2, dgf.strong_convexity, &pairs)
                .unwrap()
                .holds
        );
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(DistanceGenerator::quadratic_norm(not_pd).is_err());
    }
}
