//! Density realization from a truncated moment sequence.
//!
//! Given moments `m_1 .. m_2n` with a strictly positive definite Hankel
//! matrix `H` and a reference density `r`, the realized density has the form
//!
//! ```text
//! p(x) = r(x) / (G(x)' L G(x)),      G(x) = [1, x, .., x^n]'
//! ```
//!
//! where `L` minimizes the convex dual functional
//!
//! ```text
//! J_r(L) = tr(L H) - \int r(x) log(G(x)' L G(x)) dx
//! ```
//!
//! over the cone of symmetric matrices whose induced polynomial is positive
//! on the line. At the minimizer the gradient `H - \int r G G' / (G' L G)`
//! vanishes, which is exactly moment matching for `p`. The minimization runs
//! as projected gradient descent with Barzilai-Borwein trial steps and a
//! backtracking line search: positivity is enforced on the quadrature grid,
//! and the leading polynomial coefficient (the corner entry of `L`) is kept
//! nonnegative by projection. The projection matters because boundary
//! optima are real: whenever the target moments are exactly Gaussian the
//! optimal polynomial is the constant 1, whose leading coefficient is zero.
//!
//! Internally the descent operates in coordinates standardized by the
//! reference mean and deviation, where the Hankel entries are O(1); the
//! returned matrix is mapped back to the original coordinates, so the public
//! contract is unchanged.
//!
//! Sampling from a realization is exact rejection: propose from `r`, accept
//! with probability `poly_min / (G' L G)` where `poly_min` is the global
//! minimum of the polynomial (computed from the roots of its derivative via
//! a companion matrix).

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::DensitySpec;
use crate::moments::{binomial, hankel_from_moments, HankelMatrix, MomentSequence};
use crate::quad::simpson_grid;
use crate::{Error, Result};

/// Strict positive-definiteness threshold for the input Hankel matrix.
const PD_TOL: f64 = 1e-9;

/// Realizations whose expected rejection acceptance falls below this are
/// rejected as pathological.
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Hard cap on rejection proposals per draw.
const MAX_PROPOSALS: usize = 10_000_000;

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;

/// Whether a Gaussian reference built from kernel moments uses the central
/// variance or the raw second moment as its variance parameter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSecondMoment {
    #[default]
    Central,
    Raw,
}

/// Quadrature and optimizer knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealizerConfig {
    /// Simpson node count (odd).
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    /// Half-width of the quadrature window in reference standard deviations.
    #[serde(default = "default_half_width")]
    pub quadrature_half_width: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Descent stops when the gradient max-norm falls below this.
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    /// Line-search shrink factor in (0, 1).
    #[serde(default = "default_backtracking")]
    pub backtracking_factor: f64,
    /// Largest acceptable relative moment residual of the realization.
    #[serde(default = "default_moment_tolerance")]
    pub moment_tolerance: f64,
    #[serde(default)]
    pub reference_second_moment: ReferenceSecondMoment,
}

fn default_nodes() -> usize {
    4001
}
fn default_half_width() -> f64 {
    12.0
}
fn default_max_iterations() -> usize {
    2000
}
fn default_gradient_tolerance() -> f64 {
    1e-8
}
fn default_backtracking() -> f64 {
    0.5
}
fn default_moment_tolerance() -> f64 {
    1e-5
}

impl Default for RealizerConfig {
    fn default() -> Self {
        Self {
            quadrature_nodes: default_nodes(),
            quadrature_half_width: default_half_width(),
            max_iterations: default_max_iterations(),
            gradient_tolerance: default_gradient_tolerance(),
            backtracking_factor: default_backtracking(),
            moment_tolerance: default_moment_tolerance(),
            reference_second_moment: ReferenceSecondMoment::default(),
        }
    }
}

impl RealizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature_nodes < 3 || self.quadrature_nodes % 2 == 0 {
            return Err(Error::Config(format!(
                "realizer.quadrature_nodes must be odd and >= 3, got {}",
                self.quadrature_nodes
            )));
        }
        if !(self.quadrature_half_width > 0.0)
            || !(self.gradient_tolerance > 0.0)
            || !(self.moment_tolerance > 0.0)
            || self.max_iterations == 0
        {
            return Err(Error::Config(
                "realizer window, tolerances and iteration cap must be positive".into(),
            ));
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            return Err(Error::Config(
                "realizer.backtracking_factor must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A realized density `r / (G' L G)` with its certification data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RealizedDensityRepr", into = "RealizedDensityRepr")]
pub struct RealizedDensity {
    pub reference: DensitySpec,
    lambda: DMatrix<f64>,
    /// Polynomial coefficients of `G' L G` by power of x.
    coeffs: Vec<f64>,
    pub target_moments: MomentSequence,
    /// Minimum of the polynomial (global over the reals when the leading
    /// coefficient is significant, else over twice the quadrature window).
    pub poly_min: f64,
    /// Largest relative moment mismatch of the realization.
    pub moment_residual: f64,
    /// Integral of the realized density over the quadrature window.
    pub normalization: f64,
    /// Accepted descent steps used by the optimizer.
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
struct RealizedDensityRepr {
    reference: DensitySpec,
    lambda: Vec<Vec<f64>>,
    target_moments: MomentSequence,
    poly_min: f64,
    moment_residual: f64,
    normalization: f64,
    iterations: usize,
}

impl From<RealizedDensity> for RealizedDensityRepr {
    fn from(rd: RealizedDensity) -> Self {
        let lambda = (0..rd.lambda.nrows())
            .map(|i| (0..rd.lambda.ncols()).map(|j| rd.lambda[(i, j)]).collect())
            .collect();
        Self {
            reference: rd.reference,
            lambda,
            target_moments: rd.target_moments,
            poly_min: rd.poly_min,
            moment_residual: rd.moment_residual,
            normalization: rd.normalization,
            iterations: rd.iterations,
        }
    }
}

impl TryFrom<RealizedDensityRepr> for RealizedDensity {
    type Error = Error;

    fn try_from(repr: RealizedDensityRepr) -> Result<Self> {
        let nrows = repr.lambda.len();
        if nrows == 0 || repr.lambda.iter().any(|row| row.len() != nrows) {
            return Err(Error::Config("lambda must be a square matrix".into()));
        }
        let lambda = DMatrix::from_fn(nrows, nrows, |i, j| repr.lambda[i][j]);
        if !(repr.poly_min > 0.0) {
            return Err(Error::Config(format!(
                "realized density requires poly_min > 0, got {}",
                repr.poly_min
            )));
        }
        let coeffs = poly_coeffs(&lambda);
        Ok(Self {
            reference: repr.reference,
            lambda,
            coeffs,
            target_moments: repr.target_moments,
            poly_min: repr.poly_min,
            moment_residual: repr.moment_residual,
            normalization: repr.normalization,
            iterations: repr.iterations,
        })
    }
}

impl RealizedDensity {
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    /// Pointwise density `r(x) / (G(x)' L G(x))`.
    pub fn pdf(&self, x: f64) -> f64 {
        let q = eval_poly(&self.coeffs, x).max(f64::MIN_POSITIVE);
        self.reference.pdf(x) / q
    }

    /// One exact draw by rejection from the reference.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_realized(self, rng)
    }
}

/// Coefficients of `G(x)' L G(x)` by power: `coeff_m = sum_{i+j=m} L_ij`.
fn poly_coeffs(lambda: &DMatrix<f64>) -> Vec<f64> {
    let n = lambda.nrows() - 1;
    let mut coeffs = vec![0.0; 2 * n + 1];
    for i in 0..=n {
        for j in 0..=n {
            coeffs[i + j] += lambda[(i, j)];
        }
    }
    coeffs
}

fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Quadrature nodes with premultiplied `simpson_weight * reference_density`
/// factors.
struct WeightedGrid {
    xs: Vec<f64>,
    wr: Vec<f64>,
}

impl WeightedGrid {
    fn for_reference(reference: &DensitySpec, config: &RealizerConfig) -> Result<Self> {
        let (mean, sd) = reference.mean_and_sd()?;
        let half = config.quadrature_half_width * sd;
        let (xs, ws) = simpson_grid(mean - half, mean + half, config.quadrature_nodes);
        let wr = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| w * reference.pdf(*x))
            .collect();
        Ok(Self { xs, wr })
    }

    /// Standardized grid: nodes are z-values, weights carry the density of
    /// `z = (x - mean)/sd` under the reference.
    fn standardized(reference: &DensitySpec, mean: f64, sd: f64, config: &RealizerConfig) -> Self {
        let (xs, ws) = simpson_grid(
            -config.quadrature_half_width,
            config.quadrature_half_width,
            config.quadrature_nodes,
        );
        let wr = xs
            .iter()
            .zip(&ws)
            .map(|(z, w)| w * reference.pdf(mean + sd * z) * sd)
            .collect();
        Self { xs, wr }
    }
}

/// `tr(L H) - \int r log(G' L G)`; fails if the polynomial is not strictly
/// positive on the grid (the matrix lies outside the feasible cone).
fn objective_on_grid(lambda: &DMatrix<f64>, hankel: &DMatrix<f64>, grid: &WeightedGrid) -> Result<f64> {
    let coeffs = poly_coeffs(lambda);
    let trace = lambda.dot(hankel);
    let mut log_term = 0.0;
    for (x, wr) in grid.xs.iter().zip(&grid.wr) {
        let q = eval_poly(&coeffs, *x);
        if !(q > 0.0) {
            return Err(Error::Domain(format!(
                "polynomial is not positive at x = {x} (value {q})"
            )));
        }
        log_term += wr * q.ln();
    }
    Ok(trace - log_term)
}

/// Power integrals `s_m = \int r x^m / (G' L G)` for `m = 0 .. max_power`.
fn weighted_power_integrals(
    coeffs: &[f64],
    grid: &WeightedGrid,
    max_power: usize,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; max_power + 1];
    for (x, wr) in grid.xs.iter().zip(&grid.wr) {
        let q = eval_poly(coeffs, *x);
        if !(q > 0.0) {
            return Err(Error::Domain(format!(
                "polynomial is not positive at x = {x} (value {q})"
            )));
        }
        let base = wr / q;
        let mut xp = 1.0;
        for slot in acc.iter_mut() {
            *slot += base * xp;
            xp *= x;
        }
    }
    Ok(acc)
}

/// `H - \int r G G' / (G' L G)`, symmetric by construction. Its entries are
/// the moment mismatches of the current realization, so a zero gradient is
/// moment matching.
fn gradient_on_grid(
    lambda: &DMatrix<f64>,
    hankel: &DMatrix<f64>,
    grid: &WeightedGrid,
) -> Result<DMatrix<f64>> {
    let n = lambda.nrows() - 1;
    let coeffs = poly_coeffs(lambda);
    let s = weighted_power_integrals(&coeffs, grid, 2 * n)?;
    Ok(DMatrix::from_fn(n + 1, n + 1, |i, j| hankel[(i, j)] - s[i + j]))
}

fn check_shapes(lambda: &DMatrix<f64>, hankel: &HankelMatrix) -> Result<()> {
    if lambda.nrows() != lambda.ncols() {
        return Err(Error::Domain("lambda must be square".into()));
    }
    if lambda.nrows() != hankel.dim() {
        return Err(Error::Domain(format!(
            "lambda dimension {} does not match Hankel dimension {}",
            lambda.nrows(),
            hankel.dim()
        )));
    }
    Ok(())
}

/// The dual objective `J_r` for an explicit matrix, Hankel matrix and
/// reference, quadrature per `config`.
pub fn objective_jr(
    lambda: &DMatrix<f64>,
    hankel: &HankelMatrix,
    reference: &DensitySpec,
    config: &RealizerConfig,
) -> Result<f64> {
    config.validate()?;
    check_shapes(lambda, hankel)?;
    let grid = WeightedGrid::for_reference(reference, config)?;
    objective_on_grid(lambda, hankel.matrix(), &grid)
}

/// Gradient of [`objective_jr`] with respect to the symmetric matrix.
pub fn gradient_jr(
    lambda: &DMatrix<f64>,
    hankel: &HankelMatrix,
    reference: &DensitySpec,
    config: &RealizerConfig,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    check_shapes(lambda, hankel)?;
    let grid = WeightedGrid::for_reference(reference, config)?;
    gradient_on_grid(lambda, hankel.matrix(), &grid)
}

/// Gaussian reference `N(m_1, m_2 - m_1^2)` from kernel moments.
pub fn default_reference(kernel_moments: &MomentSequence) -> Result<DensitySpec> {
    reference_from_moments(kernel_moments, ReferenceSecondMoment::Central)
}

/// Gaussian reference with either the central variance or the raw second
/// moment as its variance parameter.
pub fn reference_from_moments(
    kernel_moments: &MomentSequence,
    mode: ReferenceSecondMoment,
) -> Result<DensitySpec> {
    let m1 = kernel_moments.moment(1);
    let m2 = kernel_moments.moment(2);
    let variance = match mode {
        ReferenceSecondMoment::Central => m2 - m1 * m1,
        ReferenceSecondMoment::Raw => m2,
    };
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "kernel moments admit no Gaussian reference: variance {variance}"
        )));
    }
    Ok(DensitySpec::Gaussian { mean: m1, variance })
}

/// Lower-triangular change of basis with `z^j = sum_i T[j][i] x^i` for
/// `z = (x - mean)/sd`.
fn standardize_transform(n: usize, mean: f64, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n + 1, |j, i| {
        if i > j {
            0.0
        } else {
            binomial(j, i) * (-mean).powi((j - i) as i32) / sd.powi(j as i32)
        }
    })
}

/// Standardized moments `E[z^m]`, `m = 0 .. order`.
fn standardized_moments(m: &MomentSequence, mean: f64, sd: f64) -> Vec<f64> {
    let order = m.order();
    (0..=order)
        .map(|p| {
            let mut acc = 0.0;
            for i in 0..=p {
                acc += binomial(p, i) * (-mean).powi((p - i) as i32) * m.moment(i);
            }
            acc / sd.powi(p as i32)
        })
        .collect()
}

/// Realizes a density matching `moments` against `reference`, returning the
/// per-iteration objective trace alongside.
pub fn realize_traced(
    moments: &MomentSequence,
    reference: &DensitySpec,
    config: &RealizerConfig,
) -> Result<(RealizedDensity, Vec<f64>)> {
    config.validate()?;
    reference.validate()?;
    let n = moments.half_order();

    // Strict positive definiteness of the moment data, tested both raw and
    // standardized (congruence preserves definiteness, not conditioning).
    let hx = hankel_from_moments(moments);
    let eig = hx.eigenvalues();
    let max_abs = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if eig[0] <= PD_TOL * (1.0 + max_abs) {
        return Err(Error::Domain(format!(
            "moment Hankel matrix must be strictly positive definite \
             (min eigenvalue {:.3e})",
            eig[0]
        )));
    }
    let (mean, sd) = reference.mean_and_sd()?;
    let t = standardized_moments(moments, mean, sd);
    let hz = DMatrix::from_fn(n + 1, n + 1, |i, j| t[i + j]);
    {
        let hz_eig = HankelMatrix::from_matrix(hz.clone())?.eigenvalues();
        let hz_max = hz_eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if hz_eig[0] <= PD_TOL * (1.0 + hz_max) {
            return Err(Error::Domain(format!(
                "standardized moment Hankel matrix is numerically singular \
                 (min eigenvalue {:.3e})",
                hz_eig[0]
            )));
        }
    }

    let grid = WeightedGrid::standardized(reference, mean, sd, config);
    let (lambda_z, trace, iterations) = descend(&hz, &grid, config)?;

    // Map back to the original coordinates and certify.
    let transform = standardize_transform(n, mean, sd);
    let lambda_x = transform.transpose() * &lambda_z * &transform;
    let coeffs_x = poly_coeffs(&lambda_x);
    let coeffs_z = poly_coeffs(&lambda_z);
    let poly_min = polynomial_global_min(&coeffs_z, config.quadrature_half_width);
    if !(poly_min > 0.0) {
        return Err(Error::Numerical(format!(
            "realized polynomial is not positive over the reals (min {poly_min})"
        )));
    }

    let s = weighted_power_integrals(&coeffs_z, &grid, 0)?;
    let normalization = s[0];
    if (normalization - 1.0).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "realized density integrates to {normalization}, expected 1 within 1e-6"
        )));
    }

    // Realized raw moments in x, from the standardized grid.
    let order = moments.order();
    let mut realized = vec![0.0; order + 1];
    for (z, wr) in grid.xs.iter().zip(&grid.wr) {
        let q = eval_poly(&coeffs_z, *z);
        let base = wr / q;
        let x = mean + sd * z;
        let mut xp = 1.0;
        for slot in realized.iter_mut() {
            *slot += base * xp;
            xp *= x;
        }
    }
    let moment_residual = (1..=order)
        .map(|l| (realized[l] - moments.moment(l)).abs() / moments.moment(l).abs().max(1.0))
        .fold(0.0f64, f64::max);
    if moment_residual > config.moment_tolerance {
        return Err(Error::Numerical(format!(
            "realization moment residual {moment_residual:.3e} exceeds tolerance {:.3e}",
            config.moment_tolerance
        )));
    }

    let rd = RealizedDensity {
        reference: reference.clone(),
        lambda: lambda_x,
        coeffs: coeffs_x,
        target_moments: moments.clone(),
        poly_min,
        moment_residual,
        normalization,
        iterations,
    };
    Ok((rd, trace))
}

/// Realizes a density matching `moments` against `reference`.
pub fn realize(
    moments: &MomentSequence,
    reference: &DensitySpec,
    config: &RealizerConfig,
) -> Result<RealizedDensity> {
    realize_traced(moments, reference, config).map(|(rd, _)| rd)
}

/// Pointwise value of a realized density.
pub fn realized_pdf(rd: &RealizedDensity, x: f64) -> f64 {
    rd.pdf(x)
}

/// Exact rejection draw; the expected acceptance rate equals `poly_min`.
pub fn sample_realized<R: Rng + ?Sized>(rd: &RealizedDensity, rng: &mut R) -> Result<f64> {
    if rd.poly_min < MIN_ACCEPTANCE {
        return Err(Error::Numerical(format!(
            "rejection acceptance rate {} is below {MIN_ACCEPTANCE}; \
             the realization is too far from its reference",
            rd.poly_min
        )));
    }
    for _ in 0..MAX_PROPOSALS {
        let x = rd.reference.sample(rng);
        let q = eval_poly(&rd.coeffs, x).max(f64::MIN_POSITIVE);
        let u: f64 = rng.random();
        if u < (rd.poly_min / q).min(1.0) {
            return Ok(x);
        }
    }
    Err(Error::Numerical(
        "rejection sampler exhausted its proposal budget".into(),
    ))
}

/// Max-norm of the gradient with the corner component dropped while the
/// corner entry sits on its floor and the gradient pushes further down;
/// that is the stationarity measure of the floored problem.
fn projected_residual(lambda: &DMatrix<f64>, gradient: &DMatrix<f64>) -> f64 {
    let n = lambda.nrows() - 1;
    let mut residual = 0.0f64;
    for i in 0..=n {
        for j in 0..=n {
            if i == n && j == n && lambda[(n, n)] == 0.0 && gradient[(n, n)] > 0.0 {
                continue;
            }
            residual = residual.max(gradient[(i, j)].abs());
        }
    }
    residual
}

/// Barzilai-Borwein gradient descent with Armijo backtracking, confined to
/// the positive cone. Starts from the identity, whose polynomial equals 1 at
/// the (standardized) reference mean. The corner entry of the matrix is the
/// leading polynomial coefficient; steps project it onto `>= 0`.
fn descend(
    hankel: &DMatrix<f64>,
    grid: &WeightedGrid,
    config: &RealizerConfig,
) -> Result<(DMatrix<f64>, Vec<f64>, usize)> {
    let dim = hankel.nrows();
    let corner = dim - 1;
    let mut lambda = DMatrix::<f64>::identity(dim, dim);
    let mut objective = objective_on_grid(&lambda, hankel, grid)?;
    let mut gradient = gradient_on_grid(&lambda, hankel, grid)?;
    let mut trace = vec![objective];
    let mut memory: Option<(DMatrix<f64>, DMatrix<f64>)> = None;

    for iteration in 0..config.max_iterations {
        if projected_residual(&lambda, &gradient) <= config.gradient_tolerance {
            return Ok((lambda, trace, iteration));
        }
        let mut alpha = match &memory {
            Some((dl, dg)) => {
                let denom = dl.dot(dg);
                if denom > 0.0 && denom.is_finite() {
                    (dl.dot(dl) / denom).clamp(1e-14, 1e10)
                } else {
                    1.0
                }
            }
            None => 1.0 / (1.0 + gradient.norm()),
        };
        let mut accepted = false;
        for _ in 0..80 {
            let mut candidate = &lambda - alpha * &gradient;
            candidate[(corner, corner)] = candidate[(corner, corner)].max(0.0);
            let step = &candidate - &lambda;
            let directional = gradient.dot(&step);
            if directional < 0.0 {
                if let Ok(cand_obj) = objective_on_grid(&candidate, hankel, grid) {
                    if cand_obj <= objective + ARMIJO * directional {
                        let cand_grad = gradient_on_grid(&candidate, hankel, grid)?;
                        memory = Some((step, &cand_grad - &gradient));
                        lambda = candidate;
                        objective = cand_obj;
                        gradient = cand_grad;
                        trace.push(objective);
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= config.backtracking_factor;
        }
        if !accepted {
            return Err(Error::Numerical(format!(
                "line search stalled at gradient residual {:.3e}",
                projected_residual(&lambda, &gradient)
            )));
        }
        if std::env::var("FPSTEER_TRACE").is_ok() && iteration % 200 == 0 {
            eprintln!(
                "it {iteration}: obj {objective:.12} res {:.3e} corner {:.3e} g_corner {:.3e}",
                projected_residual(&lambda, &gradient),
                lambda[(corner, corner)],
                gradient[(corner, corner)]
            );
        }
    }
    if projected_residual(&lambda, &gradient) <= config.gradient_tolerance {
        return Ok((lambda, trace, config.max_iterations));
    }
    Err(Error::Numerical(format!(
        "dual descent did not converge within {} iterations \
         (gradient residual {:.3e})",
        config.max_iterations,
        projected_residual(&lambda, &gradient)
    )))
}

/// Minimum of the polynomial: evaluated at the real roots of its derivative
/// (companion-matrix eigenvalues) plus a dense scan over twice the working
/// window.
///
/// When the leading coefficient is numerically significant the result is the
/// global minimum over the reals (every critical point is inspected). When
/// convergence lands on the boundary of the cone — leading coefficients that
/// are zero or pure rounding fuzz — the polynomial may formally descend far
/// outside any reachable proposal, and the reported value is the windowed
/// minimum; only critical points inside the window count then.
fn polynomial_global_min(coeffs: &[f64], half_width: f64) -> f64 {
    let window = 2.0 * half_width;
    let scale: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(m, c)| c.abs() * window.powi(m as i32))
        .sum();
    if scale == 0.0 {
        return 0.0;
    }
    let significant_degree = coeffs
        .iter()
        .enumerate()
        .rev()
        .find(|(m, c)| c.abs() * window.powi(*m as i32) > 1e-9 * scale)
        .map(|(m, _)| m)
        .unwrap_or(0);
    let tail_ascends = significant_degree % 2 == 0
        && (significant_degree == 0 || coeffs[significant_degree] > 0.0);

    let mut best = f64::INFINITY;
    let dcoeffs: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(m, c)| m as f64 * c)
        .collect();
    if let Some(roots) = real_roots(&dcoeffs) {
        for r in roots {
            if tail_ascends || r.abs() <= window {
                best = best.min(eval_poly(coeffs, r));
            }
        }
    }
    // Dense scan: upper bounds everywhere, and the only probe when the
    // derivative degenerates (constant polynomials included).
    for i in 0..=4000 {
        let x = -window + 2.0 * window * i as f64 / 4000.0;
        best = best.min(eval_poly(coeffs, x));
    }
    best
}

/// Real roots of a polynomial with the given ascending coefficients, via the
/// companion matrix; `None` when the leading coefficient degenerates.
fn real_roots(coeffs: &[f64]) -> Option<Vec<f64>> {
    let degree = coeffs.iter().rposition(|c| c.abs() > 0.0)?;
    if degree == 0 {
        return Some(Vec::new());
    }
    let lead = coeffs[degree];
    let companion = DMatrix::from_fn(degree, degree, |i, j| {
        if j == degree - 1 {
            -coeffs[i] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let eigen = companion.complex_eigenvalues();
    let mut out = Vec::new();
    for e in eigen.iter() {
        if e.im.abs() <= 1e-8 * (1.0 + e.re.abs()) {
            out.push(e.re);
        }
    }
    Some(out)
}
