//! Arithmetic on truncated power-moment sequences.
//!
//! A scalar random variable is represented here by its raw moments
//! `m_1 .. m_L` for an even truncation order `L = 2n` (`m_0 = 1` is
//! implicit). The module provides the operations the steering pipeline is
//! built from: Gaussian noise moments, moments of independent sums and
//! scalings, triangular deconvolution, and Hankel positivity tests.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default relative tolerance used by positive-semidefiniteness tests.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// Exact binomial coefficient as `f64` (exact for the small orders used here).
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // Each prefix is itself a binomial coefficient, so the division is exact.
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as f64
}

/// (2l - 1)!! = 1 * 3 * ... * (2l - 1), the even-moment factor of a Gaussian.
fn odd_double_factorial(l: usize) -> f64 {
    let mut acc = 1.0;
    let mut f = 1usize;
    while f <= 2 * l - 1 {
        acc *= f as f64;
        f += 2;
    }
    acc
}

/// Ordered raw power moments `m_1 .. m_L` of a scalar random variable.
///
/// The order `L` is always even; `m_0 = 1` is implicit and returned by
/// [`MomentSequence::moment`] for index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MomentSequence {
    values: Vec<f64>,
}

impl MomentSequence {
    /// Builds a sequence from `m_1 .. m_L`; `L` must be even, positive and
    /// every entry finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(Error::Domain(format!(
                "moment sequence order must be a positive even integer, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "moment sequence contains non-finite entry {bad}"
            )));
        }
        Ok(Self { values })
    }

    /// Moments of the point mass at 0 (all zero).
    pub fn point_mass_at_zero(order: usize) -> Result<Self> {
        Self::new(vec![0.0; order])
    }

    /// Moments of the point mass at `v`: `m_l = v^l`.
    pub fn point_mass(v: f64, order: usize) -> Result<Self> {
        Self::new((1..=order).map(|l| v.powi(l as i32)).collect())
    }

    /// Truncation order `L = 2n`.
    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// Half order `n`.
    pub fn half_order(&self) -> usize {
        self.values.len() / 2
    }

    /// Raw moment `m_l`; index 0 yields the implicit `m_0 = 1`.
    ///
    /// Panics if `l` exceeds the truncation order.
    pub fn moment(&self, l: usize) -> f64 {
        if l == 0 {
            1.0
        } else {
            self.values[l - 1]
        }
    }

    /// The stored moments `m_1 .. m_L`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check_same_order(&self, other: &Self) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::Domain(format!(
                "moment order mismatch: {} vs {}",
                self.order(),
                other.order()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for MomentSequence {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<MomentSequence> for Vec<f64> {
    fn from(m: MomentSequence) -> Vec<f64> {
        m.values
    }
}

/// Raw moments of a centered Gaussian with the given variance:
/// odd moments vanish and `m_{2l} = variance^l (2l-1)!!`.
pub fn gaussian_noise_moments(variance: f64, order: usize) -> Result<MomentSequence> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!(
            "noise variance must be positive and finite, got {variance}"
        )));
    }
    let mut values = vec![0.0; order];
    for l in 1..=order / 2 {
        values[2 * l - 1] = variance.powi(l as i32) * odd_double_factorial(l);
    }
    MomentSequence::new(values)
}

/// Moments of `X + Y` for independent `X`, `Y`:
/// `m_l = sum_i C(l,i) X_i Y_{l-i}` with `X_0 = Y_0 = 1`.
pub fn moments_of_independent_sum(
    x: &MomentSequence,
    y: &MomentSequence,
) -> Result<MomentSequence> {
    x.check_same_order(y)?;
    let order = x.order();
    let mut values = Vec::with_capacity(order);
    for l in 1..=order {
        let mut acc = 0.0;
        for i in 0..=l {
            acc += binomial(l, i) * x.moment(i) * y.moment(l - i);
        }
        values.push(acc);
    }
    MomentSequence::new(values)
}

/// Moments of `s * X`: `m_l = s^l X_l`.
pub fn moments_of_scaled(x: &MomentSequence, s: f64) -> MomentSequence {
    let values = x
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| s.powi(i as i32 + 1) * v)
        .collect();
    MomentSequence { values }
}

/// Recovers `F` from `S = moments_of_independent_sum(moments_of_scaled(F, b), W)`
/// by triangular back-substitution:
/// `F_l = (S_l - sum_{i<l} C(l,i) b^i F_i W_{l-i}) / b^l`.
///
/// Positive-semidefiniteness of the result is not guaranteed; callers must
/// test the Hankel matrix themselves.
pub fn deconvolve_moments(
    s: &MomentSequence,
    b: f64,
    w: &MomentSequence,
) -> Result<MomentSequence> {
    s.check_same_order(w)?;
    if b == 0.0 {
        return Err(Error::Domain("deconvolution requires b != 0".into()));
    }
    let order = s.order();
    let mut f = vec![0.0; order];
    let moment_f = |f: &[f64], i: usize| if i == 0 { 1.0 } else { f[i - 1] };
    for l in 1..=order {
        let mut partial = 0.0;
        for i in 0..l {
            partial += binomial(l, i) * b.powi(i as i32) * moment_f(&f, i) * w.moment(l - i);
        }
        f[l - 1] = (s.moment(l) - partial) / b.powi(l as i32);
    }
    MomentSequence::new(f)
}

/// Symmetric moment matrix with entry `(i, j) = m_{i+j}` for `i, j = 0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelMatrix {
    mat: DMatrix<f64>,
}

impl HankelMatrix {
    /// Side length `n + 1`.
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Builds the matrix directly from raw entries (must be square and
    /// symmetric); used where the moments come from quadrature rather than a
    /// `MomentSequence`.
    pub fn from_matrix(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Domain("Hankel matrix must be square".into()));
        }
        Ok(Self { mat })
    }

    /// Eigenvalues of the symmetric matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = self.mat.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// `lambda_min + tol * (1 + max |lambda|)`; nonnegative exactly when
    /// [`HankelMatrix::is_psd`] accepts.
    pub fn psd_margin(&self, tol: f64) -> f64 {
        let eig = self.eigenvalues();
        let min = eig[0];
        let max_abs = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        min + tol * (1.0 + max_abs)
    }

    /// Relative eigenvalue test: true iff the smallest eigenvalue is at least
    /// `-tol * (1 + max |eigenvalue|)`. The eigenvalue route (rather than a
    /// Cholesky attempt) keeps boundary cases such as point masses on the
    /// feasible side.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.psd_margin(tol) >= 0.0
    }
}

/// Arranges an order-`2n` moment sequence into its `(n+1) x (n+1)` Hankel
/// matrix, with `m_0 = 1` in the corner.
pub fn hankel_from_moments(m: &MomentSequence) -> HankelMatrix {
    let n = m.half_order();
    let mat = DMatrix::from_fn(n + 1, n + 1, |i, j| m.moment(i + j));
    HankelMatrix { mat }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn seq(v: &[f64]) -> MomentSequence {
        MomentSequence::new(v.to_vec()).unwrap()
    }

    fn assert_close(actual: &MomentSequence, expected: &[f64], tol: f64) {
        assert_eq!(actual.order(), expected.len());
        for (a, e) in actual.values().iter().zip(expected) {
            assert_abs_diff_eq!(a, e, epsilon = tol);
        }
    }

    #[test]
    fn binomials_are_exact() {
        assert_eq!(binomial(0, 0), 1.0);
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(8, 3), 56.0);
        assert_eq!(binomial(3, 5), 0.0);
    }

    #[test]
    fn gaussian_moments_standard_normal() {
        let m = gaussian_noise_moments(1.0, 4).unwrap();
        assert_close(&m, &[0.0, 1.0, 0.0, 3.0], 0.0);
    }

    #[test]
    fn gaussian_moments_second_equals_variance() {
        let m = gaussian_noise_moments(4.0, 2).unwrap();
        assert_close(&m, &[0.0, 4.0], 0.0);
    }

    #[test]
    fn gaussian_moments_eighth_order() {
        let m = gaussian_noise_moments(2.0, 8).unwrap();
        // 2^4 * 105
        assert_abs_diff_eq!(m.moment(8), 1680.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_moments_reject_bad_variance() {
        assert!(gaussian_noise_moments(0.0, 4).is_err());
        assert!(gaussian_noise_moments(-1.0, 4).is_err());
    }

    #[test]
    fn odd_order_rejected() {
        assert!(MomentSequence::new(vec![0.0; 3]).is_err());
        assert!(MomentSequence::new(vec![]).is_err());
        assert!(MomentSequence::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn sum_of_two_standard_normals() {
        let x = seq(&[0.0, 1.0, 0.0, 3.0]);
        let s = moments_of_independent_sum(&x, &x).unwrap();
        assert_close(&s, &[0.0, 2.0, 0.0, 12.0], 1e-12);
        // Same result from the closed Gaussian form with variance 2.
        let oracle = gaussian_noise_moments(2.0, 4).unwrap();
        assert_close(&s, oracle.values(), 1e-12);
    }

    #[test]
    fn point_mass_at_zero_is_identity_for_sums() {
        let x = seq(&[0.3, 1.7, -0.2, 9.0]);
        let zero = MomentSequence::point_mass_at_zero(4).unwrap();
        let s = moments_of_independent_sum(&x, &zero).unwrap();
        assert_close(&s, x.values(), 0.0);
    }

    #[test]
    fn sum_of_point_masses() {
        let x = MomentSequence::point_mass(1.0, 2).unwrap();
        let y = MomentSequence::point_mass(2.0, 2).unwrap();
        let s = moments_of_independent_sum(&x, &y).unwrap();
        assert_close(&s, &[3.0, 9.0], 1e-12);
    }

    #[test]
    fn sum_rejects_order_mismatch() {
        let x = seq(&[0.0, 1.0]);
        let y = seq(&[0.0, 1.0, 0.0, 3.0]);
        assert!(moments_of_independent_sum(&x, &y).is_err());
    }

    #[test]
    fn scaling_standard_normal() {
        let x = seq(&[0.0, 1.0, 0.0, 3.0]);
        let s = moments_of_scaled(&x, 0.8);
        assert_close(&s, &[0.0, 0.64, 0.0, 1.2288], 1e-12);
        let oracle = gaussian_noise_moments(0.64, 4).unwrap();
        assert_close(&s, oracle.values(), 1e-12);
    }

    #[test]
    fn scaling_by_one_and_zero() {
        let x = seq(&[0.4, 2.0, 1.0, 10.0]);
        assert_close(&moments_of_scaled(&x, 1.0), x.values(), 0.0);
        assert_close(&moments_of_scaled(&x, 0.0), &[0.0; 4], 0.0);
    }

    #[test]
    fn deconvolve_normal_pair() {
        let s = seq(&[0.0, 2.0, 0.0, 12.0]);
        let w = seq(&[0.0, 1.0, 0.0, 3.0]);
        let f = deconvolve_moments(&s, 1.0, &w).unwrap();
        assert_close(&f, &[0.0, 1.0, 0.0, 3.0], 1e-12);
    }

    #[test]
    fn deconvolve_scaled_example() {
        let s = seq(&[0.0, 1.64]);
        let w = seq(&[0.0, 1.0]);
        let f = deconvolve_moments(&s, 0.8, &w).unwrap();
        assert_close(&f, &[0.0, 1.0], 1e-12);
    }

    #[test]
    fn deconvolve_self_gives_point_mass() {
        let w = seq(&[0.5, 1.25, 0.9, 4.4]);
        let f = deconvolve_moments(&w, 1.0, &w).unwrap();
        assert_close(&f, &[0.0; 4], 1e-12);
    }

    #[test]
    fn deconvolve_rejects_zero_gain() {
        let s = seq(&[0.0, 1.0]);
        assert!(deconvolve_moments(&s, 0.0, &s).is_err());
    }

    #[test]
    fn hankel_arrangement() {
        let h = hankel_from_moments(&seq(&[0.0, 1.0, 0.0, 3.0]));
        let expected = [[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h.matrix()[(i, j)], expected[i][j]);
            }
        }
        let h2 = hankel_from_moments(&seq(&[0.0, 1.0]));
        assert_eq!(h2.matrix()[(0, 0)], 1.0);
        assert_eq!(h2.matrix()[(1, 1)], 1.0);
        assert_eq!(h2.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn hankel_mixture_target() {
        let h = hankel_from_moments(&seq(&[0.8, 8.0, 12.8, 160.0]));
        let expected = [
            [1.0, 0.8, 8.0],
            [0.8, 8.0, 12.8],
            [8.0, 12.8, 160.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h.matrix()[(i, j)], expected[i][j]);
            }
        }
    }

    #[test]
    fn psd_identity_and_indefinite() {
        let id = HankelMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
        assert!(id.is_psd(DEFAULT_PSD_TOL));

        // Eigenvalues {-1, 3}.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let ind = HankelMatrix::from_matrix(m).unwrap();
        assert!(!ind.is_psd(DEFAULT_PSD_TOL));
        assert_abs_diff_eq!(ind.min_eigenvalue(), -1.0, epsilon = 1e-12);

        let normal = hankel_from_moments(&seq(&[0.0, 1.0, 0.0, 3.0]));
        assert!(normal.is_psd(DEFAULT_PSD_TOL));
    }

    #[test]
    fn point_mass_hankel_is_psd_under_tolerance() {
        let h = hankel_from_moments(&MomentSequence::point_mass(1.0, 4).unwrap());
        // Singular but on the boundary of the cone.
        assert!(h.is_psd(DEFAULT_PSD_TOL));
        assert!(h.min_eigenvalue().abs() < 1e-9);
    }

    #[test]
    fn empirical_hankel_is_psd() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..3 {
            let samples: Vec<f64> = (0..10_000)
                .map(|_| {
                    let pick: f64 = rng.random();
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    if pick < 0.3 {
                        -2.0 + 2.0 * z
                    } else {
                        2.0 + 2.0 * z
                    }
                })
                .collect();
            let n = samples.len() as f64;
            let values: Vec<f64> = (1..=4)
                .map(|l| samples.iter().map(|x| x.powi(l)).sum::<f64>() / n)
                .collect();
            let h = hankel_from_moments(&MomentSequence::new(values).unwrap());
            assert!(h.is_psd(1e-9));
        }
    }

    fn bounded_values(order: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-bound..bound, order)
    }

    proptest! {
        #[test]
        fn convolve_deconvolve_roundtrip(
            f in bounded_values(4, 10.0),
            w in bounded_values(4, 10.0),
            b_idx in 0usize..5,
        ) {
            let b = [-0.5, 0.5, -1.0, 1.0, 2.0][b_idx];
            let f = seq(&f);
            let w = seq(&w);
            let s = moments_of_independent_sum(&moments_of_scaled(&f, b), &w).unwrap();
            let back = deconvolve_moments(&s, b, &w).unwrap();
            for (a, e) in back.values().iter().zip(f.values()) {
                prop_assert!((a - e).abs() <= 1e-10, "roundtrip drift {a} vs {e}");
            }
        }

        #[test]
        fn independent_sum_commutes_and_associates(
            x in bounded_values(4, 10.0),
            y in bounded_values(4, 10.0),
            z in bounded_values(4, 10.0),
        ) {
            let (x, y, z) = (seq(&x), seq(&y), seq(&z));
            let xy = moments_of_independent_sum(&x, &y).unwrap();
            let yx = moments_of_independent_sum(&y, &x).unwrap();
            for (a, e) in xy.values().iter().zip(yx.values()) {
                prop_assert!((a - e).abs() <= 1e-12 * a.abs().max(e.abs()).max(1.0));
            }
            let xy_z = moments_of_independent_sum(&xy, &z).unwrap();
            let yz = moments_of_independent_sum(&y, &z).unwrap();
            let x_yz = moments_of_independent_sum(&x, &yz).unwrap();
            for (a, e) in xy_z.values().iter().zip(x_yz.values()) {
                prop_assert!((a - e).abs() <= 1e-12 * a.abs().max(e.abs()).max(1.0));
            }
        }
    }
}
