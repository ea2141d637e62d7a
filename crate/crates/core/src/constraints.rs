//! Identification constraints for the period and cohort effects.
//!
//! Random-walk innovations `ε` are mapped through a square transform `Z` whose
//! leading rows are the constraints expressed on the innovations (`C·S` for
//! period effects, `C·B·S` for the cohort spline). Conditioning the remaining
//! coordinates on those rows being zero gives a Gaussian for the free
//! coordinates `η*`; `ε = Z⁻¹[0; η*]` then satisfies the constraints exactly.
//!
//! The period zero-trend row uses `t ∈ {0, …, T−1}`. Weighting by
//! `t ∈ {1, …, T}` differs from it by one copy of the zero-sum row, so the two
//! constraint sets are equivalent.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("need at least {min} periods to condition on the period constraints, got {got}")]
    TooFewPeriods { min: usize, got: usize },
    #[error("cohort constraint '{0}' is linearly dependent on the preceding constraints")]
    SingularCohortConstraint(&'static str),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub const COHORT_CONSTRAINT_NAMES: [&str; 3] = [
    "first cohort effect is zero",
    "cohort effects sum to zero",
    "last cohort effect is zero",
];

/// Lower-triangular matrix of ones: `(S·ε)_t = Σ_{u≤t} ε_u`.
pub fn cumsum_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 } else { 0.0 })
}

pub fn cumsum(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

fn complement(n: usize, fixed: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !fixed.contains(i)).collect()
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn cholesky_lower(m: DMatrix<f64>) -> Result<DMatrix<f64>, ConstraintError> {
    // symmetrize away rounding before factorizing
    let sym = (&m + m.transpose()) * 0.5;
    Cholesky::<f64, Dyn>::new(sym)
        .map(|c| c.l())
        .ok_or(ConstraintError::NotPositiveDefinite)
}

/// Conditional covariance `Σ** − Σ*†Σ††⁻¹Σ†*` of the coordinates not listed in
/// `fixed`, given the fixed coordinates equal zero.
pub fn conditional_covariance(
    sigma: &DMatrix<f64>,
    fixed: &[usize],
) -> Result<DMatrix<f64>, ConstraintError> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(ConstraintError::Argument("covariance must be square".into()));
    }
    if fixed.is_empty() || fixed.len() >= n || fixed.iter().any(|&i| i >= n) {
        return Err(ConstraintError::Argument(format!(
            "fixed coordinates {fixed:?} invalid for dimension {n}"
        )));
    }
    let free = complement(n, fixed);
    let s_ff = submatrix(sigma, fixed, fixed);
    let s_uf = submatrix(sigma, &free, fixed);
    let s_uu = submatrix(sigma, &free, &free);
    let chol = Cholesky::new((&s_ff + s_ff.transpose()) * 0.5)
        .ok_or(ConstraintError::NotPositiveDefinite)?;
    let solved = chol.solve(&s_uf.transpose());
    Ok(s_uu - s_uf * solved)
}

/// Lower Cholesky factor of the conditional covariance of the free
/// coordinates given the leading `n_fixed` coordinates are zero.
pub fn condition_on_zero(sigma: &DMatrix<f64>, n_fixed: usize) -> Result<DMatrix<f64>, ConstraintError> {
    let fixed: Vec<usize> = (0..n_fixed).collect();
    condition_on_indices(sigma, &fixed)
}

/// As [`condition_on_zero`] for an arbitrary set of pinned coordinates; the
/// factor's rows follow the free coordinates in increasing index order.
pub fn condition_on_indices(
    sigma: &DMatrix<f64>,
    fixed: &[usize],
) -> Result<DMatrix<f64>, ConstraintError> {
    // Σ itself must be SPD, not only the conditional block.
    Cholesky::new((sigma + sigma.transpose()) * 0.5).ok_or(ConstraintError::NotPositiveDefinite)?;
    cholesky_lower(conditional_covariance(sigma, fixed)?)
}

/// Constraint matrix, cumulative-sum matrix and the conditioned distribution of
/// the free transformed coordinates for one constrained random walk.
#[derive(Debug, Clone)]
pub struct ConstraintTransform {
    /// Constraints on the constrained object (κ or s_γ).
    pub c: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub z_inv: DMatrix<f64>,
    /// Transformed coordinates pinned to zero.
    pub fixed: Vec<usize>,
    pub free: Vec<usize>,
    pub n_fixed: usize,
    /// Maps pinned values to the conditional mean of the free coordinates.
    /// Always applied to zero here, kept for completeness.
    pub cond_mean_op: DMatrix<f64>,
    /// Lower factor of the conditional covariance at unit scale.
    pub unit_factor: DMatrix<f64>,
    pub cond_cov_factor: DMatrix<f64>,
    pub sigma: f64,
}

impl ConstraintTransform {
    fn build(
        c: DMatrix<f64>,
        s: DMatrix<f64>,
        constraint_rows: DMatrix<f64>,
        fixed: Vec<usize>,
        sigma: f64,
    ) -> Result<Self, ConstraintError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(ConstraintError::Argument(format!(
                "innovation scale must be finite and non-negative, got {sigma}"
            )));
        }
        let n = s.nrows();
        let mut z = DMatrix::identity(n, n);
        for (k, &row) in fixed.iter().enumerate() {
            z.set_row(row, &constraint_rows.row(k));
        }
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or(ConstraintError::Argument("transform matrix is singular".into()))?;
        let free = complement(n, &fixed);
        let zzt = &z * z.transpose();
        let unit_factor = condition_on_indices(&zzt, &fixed)?;
        let s_ff = submatrix(&zzt, &fixed, &fixed);
        let s_uf = submatrix(&zzt, &free, &fixed);
        let cond_mean_op = s_uf
            * s_ff
                .try_inverse()
                .ok_or(ConstraintError::NotPositiveDefinite)?;
        Ok(Self {
            c,
            s,
            cond_cov_factor: &unit_factor * sigma,
            unit_factor,
            n_fixed: fixed.len(),
            fixed,
            free,
            z,
            z_inv,
            cond_mean_op,
            sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// `ε = Z⁻¹·η` with `η` zero at the pinned coordinates and `eta_star` elsewhere.
    pub fn recover_innovations(&self, eta_star: &[f64]) -> Vec<f64> {
        assert_eq!(eta_star.len(), self.n_free(), "eta_star length");
        let eta = self.embed(eta_star);
        (&self.z_inv * eta).iter().copied().collect()
    }

    fn embed(&self, eta_star: &[f64]) -> DVector<f64> {
        let mut eta = DVector::zeros(self.dim());
        for (&i, &v) in self.free.iter().zip(eta_star) {
            eta[i] = v;
        }
        eta
    }

    /// `Z⁻¹·E·L₁`: innovations per unit standardized free coordinate at σ = 1,
    /// where `E` embeds the free coordinates.
    pub fn innovation_loading(&self) -> DMatrix<f64> {
        let mut embedded = DMatrix::zeros(self.dim(), self.n_free());
        for (k, &i) in self.free.iter().enumerate() {
            embedded.set_row(i, &self.unit_factor.row(k));
        }
        &self.z_inv * embedded
    }

    /// One conditioned draw of `η*`.
    pub fn sample_eta_star<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.n_free(), (0..self.n_free()).map(|_| rng.sample(StandardNormal)));
        (&self.cond_cov_factor * z).iter().copied().collect()
    }

    /// The constrained random walk `S·ε`.
    pub fn accumulate(&self, eps: &[f64]) -> Vec<f64> {
        cumsum(eps)
    }
}

/// Period transform: `C` is `[1 … 1; 0 1 … T−1]` on κ and `Z` replaces the
/// first two identity rows by `C·S`.
pub fn period_transform(t: usize, sigma_kappa: f64) -> Result<ConstraintTransform, ConstraintError> {
    if t < 3 {
        return Err(ConstraintError::TooFewPeriods { min: 3, got: t });
    }
    let c = DMatrix::from_fn(2, t, |i, j| if i == 0 { 1.0 } else { j as f64 });
    let s = cumsum_matrix(t);
    let cs = &c * &s;
    ConstraintTransform::build(c, s, cs, vec![0, 1], sigma_kappa)
}

/// Cohort transform for spline coefficients whose innovations form a random
/// walk. `cohort_basis` holds one row per in-sample cohort. `W` replaces
/// identity rows 1, 2 and the last by the rows of `C·B·S`.
pub fn cohort_transform(
    n_coef: usize,
    cohort_basis: &DMatrix<f64>,
    sigma_gamma: f64,
) -> Result<ConstraintTransform, ConstraintError> {
    if n_coef < 4 {
        return Err(ConstraintError::Argument(format!(
            "cohort smooth needs at least 4 coefficients, got {n_coef}"
        )));
    }
    if cohort_basis.ncols() != n_coef {
        return Err(ConstraintError::Argument(format!(
            "cohort basis has {} columns, expected {n_coef}",
            cohort_basis.ncols()
        )));
    }
    let n_cohorts = cohort_basis.nrows();
    if n_cohorts < 3 {
        return Err(ConstraintError::Argument(format!(
            "need at least 3 cohorts, got {n_cohorts}"
        )));
    }
    let c = DMatrix::from_fn(3, n_cohorts, |i, j| match i {
        0 => (j == 0) as u8 as f64,
        1 => 1.0,
        _ => (j == n_cohorts - 1) as u8 as f64,
    });
    let s = cumsum_matrix(n_coef);
    let cbs = &c * cohort_basis * &s;
    let fixed = vec![0, 1, n_coef - 1];
    // W is invertible exactly when its pinned block is; report the first
    // constraint that adds no rank.
    let block = submatrix(&cbs, &[0, 1, 2], &fixed);
    let scale = block.abs().max().max(1.0);
    for k in 1..=3 {
        let lead = block.rows(0, k).into_owned();
        let sv = lead.singular_values();
        if sv.iter().cloned().fold(f64::INFINITY, f64::min) <= 1e-12 * scale {
            return Err(ConstraintError::SingularCohortConstraint(
                COHORT_CONSTRAINT_NAMES[k - 1],
            ));
        }
    }
    ConstraintTransform::build(c, s, cbs, fixed, sigma_gamma)
}

/// Period transform for two sexes with correlated innovations.
#[derive(Debug, Clone)]
pub struct JointTransform {
    pub single: ConstraintTransform,
    /// `diag(Z, Z)`.
    pub x: DMatrix<f64>,
    /// Joint innovation covariance.
    pub p: DMatrix<f64>,
    /// `X·P·Xᵀ`.
    pub xi: DMatrix<f64>,
    pub fixed: Vec<usize>,
    /// Lower factor of the conditional covariance of `[η^{f*}; η^{m*}]`.
    pub cond_factor: DMatrix<f64>,
    pub sigma_f: f64,
    pub sigma_m: f64,
    pub rho: f64,
}

pub fn joint_transform(
    t: usize,
    sigma_f: f64,
    sigma_m: f64,
    rho: f64,
) -> Result<JointTransform, ConstraintError> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(ConstraintError::Argument(format!(
            "correlation must lie in (-1, 1), got {rho}"
        )));
    }
    if !(sigma_f > 0.0 && sigma_m > 0.0) {
        return Err(ConstraintError::Argument(
            "innovation scales must be positive".into(),
        ));
    }
    let single = period_transform(t, 1.0)?;
    let mut x = DMatrix::zeros(2 * t, 2 * t);
    x.view_mut((0, 0), (t, t)).copy_from(&single.z);
    x.view_mut((t, t), (t, t)).copy_from(&single.z);
    let cov = sigma_f * sigma_m * rho;
    let p = DMatrix::from_fn(2 * t, 2 * t, |i, j| {
        if i % t != j % t {
            0.0
        } else {
            match (i < t, j < t) {
                (true, true) => sigma_f * sigma_f,
                (false, false) => sigma_m * sigma_m,
                _ => cov,
            }
        }
    });
    let xi = &x * &p * x.transpose();
    let fixed: Vec<usize> = single
        .fixed
        .iter()
        .copied()
        .chain(single.fixed.iter().map(|i| i + t))
        .collect();
    let cond_factor = condition_on_indices(&xi, &fixed)?;
    Ok(JointTransform {
        single,
        x,
        p,
        xi,
        fixed,
        cond_factor,
        sigma_f,
        sigma_m,
        rho,
    })
}

impl JointTransform {
    pub fn n_periods(&self) -> usize {
        self.single.dim()
    }

    /// `chol([[σf², ρσfσm], [ρσfσm, σm²]]) ⊗ L₁`, equal to `cond_factor` because
    /// the joint covariance is a Kronecker product with a parameter-free factor.
    pub fn kronecker_factor(&self) -> DMatrix<f64> {
        let l = &self.single.unit_factor;
        let k = l.nrows();
        let d = [
            [self.sigma_f, 0.0],
            [self.rho * self.sigma_m, self.sigma_m * (1.0 - self.rho * self.rho).sqrt()],
        ];
        DMatrix::from_fn(2 * k, 2 * k, |i, j| d[i / k][j / k] * l[(i % k, j % k)])
    }

    /// Splits a joint draw of `[η^{f*}; η^{m*}]` into per-sex innovation vectors.
    pub fn recover_innovations(&self, eta_star: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.single.n_free();
        assert_eq!(eta_star.len(), 2 * k);
        (
            self.single.recover_innovations(&eta_star[..k]),
            self.single.recover_innovations(&eta_star[k..]),
        )
    }

    pub fn sample_eta_star<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.cond_factor.nrows();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample(StandardNormal)));
        (&self.cond_factor * z).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::SplineBlock;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.abs().max()
    }

    #[test]
    fn cumsum_examples() {
        let s = cumsum_matrix(3);
        assert_eq!(s, DMatrix::from_row_slice(3, 3, &[1., 0., 0., 1., 1., 0., 1., 1., 1.]));
        let k = &s * DVector::from_column_slice(&[1., 1., 1.]);
        assert_eq!(k.as_slice(), &[1., 2., 3.]);
        assert_eq!(cumsum(&[1., 0., 0.]), vec![1., 1., 1.]);
    }

    #[test]
    fn period_transform_three_by_hand() {
        let tr = period_transform(3, 1.0).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[3., 2., 1., 3., 3., 2., 0., 0., 1.]);
        assert_eq!(tr.z, expect);
        assert!(max_abs(&(&tr.z * &tr.z_inv - DMatrix::identity(3, 3))) < 1e-10);
        // [[3,2,1],[3,3,2],[0,0,1]] ε = (0,0,1) by hand: ε₃ = 1, subtracting the
        // first two rows gives ε₂ = −1, then 3ε₁ − 2 + 1 = 0 so ε₁ = 1/3
        let eps = tr.recover_innovations(&[1.0]);
        for (a, b) in eps.iter().zip([1.0 / 3.0, -1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12, "{eps:?}");
        }
        assert_eq!(tr.recover_innovations(&[0.0]), vec![0.0; 3]);
        assert!(matches!(period_transform(2, 1.0), Err(ConstraintError::TooFewPeriods { .. })));
    }

    #[test]
    fn period_draws_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in [3usize, 7, 20] {
            let tr = period_transform(t, 0.37).unwrap();
            for _ in 0..200 {
                let eta = tr.sample_eta_star(&mut rng);
                let eps = tr.recover_innovations(&eta);
                let fwd = &tr.z * DVector::from_column_slice(&eps);
                assert!(fwd[0].abs() < 1e-10 && fwd[1].abs() < 1e-10);
                for (k, &i) in tr.free.iter().enumerate() {
                    assert!((fwd[i] - eta[k]).abs() < 1e-10);
                }
                let kappa = tr.accumulate(&eps);
                let sum: f64 = kappa.iter().sum();
                let trend: f64 = kappa.iter().enumerate().map(|(i, k)| i as f64 * k).sum();
                assert!(sum.abs() < 1e-8 && trend.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn scale_homogeneity() {
        let a = period_transform(9, 0.8).unwrap();
        let b = period_transform(9, 1.6).unwrap();
        assert_eq!(&a.cond_cov_factor * 2.0, b.cond_cov_factor);
        let m = &a.cond_cov_factor * a.cond_cov_factor.transpose();
        let zzt = &a.z * a.z.transpose() * 0.64;
        assert!(max_abs(&(m - conditional_covariance(&zzt, &[0, 1]).unwrap())) < 1e-10);
    }

    #[test]
    fn conditioning_identity_and_bivariate() {
        let l = condition_on_zero(&DMatrix::identity(5, 5), 2).unwrap();
        assert!(max_abs(&(l - DMatrix::identity(3, 3))) < 1e-15);
        let r = 0.6;
        let l = condition_on_zero(&DMatrix::from_row_slice(2, 2, &[1., r, r, 1.]), 1).unwrap();
        assert!(((l[(0, 0)] * l[(0, 0)]) - (1.0 - r * r)).abs() < 1e-14);
        assert!(matches!(
            condition_on_zero(&DMatrix::from_row_slice(2, 2, &[1., 2., 2., 1.]), 1),
            Err(ConstraintError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn conditioning_matches_precision_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let sigma = &a * a.transpose() + DMatrix::identity(4, 4) * 0.5;
            let l = condition_on_zero(&sigma, 2).unwrap();
            // oracle: conditional covariance is the inverse of the free block of Σ⁻¹
            let prec = sigma.clone().try_inverse().unwrap();
            let oracle = prec.view((2, 2), (2, 2)).into_owned().try_inverse().unwrap();
            assert!(max_abs(&(&l * l.transpose() - oracle)) < 1e-10);
        }
    }

    fn cohort_basis(n_cohorts: usize) -> DMatrix<f64> {
        SplineBlock::regular((0..n_cohorts).map(|c| c as f64).collect(), 4.0, 3)
            .unwrap()
            .basis
    }

    #[test]
    fn cohort_draws_satisfy_constraints() {
        let basis = cohort_basis(40);
        let n_coef = basis.ncols();
        let tr = cohort_transform(n_coef, &basis, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let eta = tr.sample_eta_star(&mut rng);
            let eps = tr.recover_innovations(&eta);
            let beta = DVector::from_vec(tr.accumulate(&eps));
            let s = &basis * beta;
            assert!(s[0].abs() < 1e-8);
            assert!(s[39].abs() < 1e-8);
            assert!(s.sum().abs() < 1e-8);
        }
    }

    #[test]
    fn cohort_identity_basis_rows() {
        let basis = DMatrix::identity(4, 4);
        let tr = cohort_transform(4, &basis, 1.0).unwrap();
        let cs = &tr.c * cumsum_matrix(4);
        // with B = I, W rows 1, 2, 4 are the rows of C·S
        assert_eq!(tr.z.row(0), cs.row(0));
        assert_eq!(tr.z.row(1), cs.row(1));
        assert_eq!(tr.z.row(3), cs.row(2));
        assert_eq!(tr.z.row(2), DMatrix::<f64>::identity(4, 4).row(2));
        assert_eq!(cs, DMatrix::from_row_slice(3, 4, &[1., 0., 0., 0., 4., 3., 2., 1., 1., 1., 1., 1.]));
    }

    #[test]
    fn cohort_singular_constraint_reported() {
        // every cohort loads only on the last coefficient, so all rows of C·B·S are proportional
        let mut basis = DMatrix::zeros(3, 4);
        basis[(0, 3)] = 1.0;
        basis[(1, 3)] = 1.0;
        basis[(2, 3)] = 1.0;
        match cohort_transform(4, &basis, 1.0) {
            Err(ConstraintError::SingularCohortConstraint(name)) => {
                assert!(COHORT_CONSTRAINT_NAMES.contains(&name))
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn joint_at_zero_correlation_is_blockwise_single() {
        let t = 6;
        let (sf, sm) = (0.4, 0.9);
        let j = joint_transform(t, sf, sm, 0.0).unwrap();
        let k = t - 2;
        let single_f = period_transform(t, sf).unwrap().cond_cov_factor;
        let single_m = period_transform(t, sm).unwrap().cond_cov_factor;
        let l = &j.cond_factor;
        assert!(max_abs(&(l.view((0, 0), (k, k)).into_owned() - single_f)) < 1e-10);
        assert!(max_abs(&(l.view((k, k), (k, k)).into_owned() - single_m)) < 1e-10);
        assert!(max_abs(&l.view((k, 0), (k, k)).into_owned()) < 1e-10);
        assert!(max_abs(&l.view((0, k), (k, k)).into_owned()) < 1e-10);
    }

    #[test]
    fn joint_kronecker_structure() {
        let j = joint_transform(7, 0.5, 1.3, 0.8).unwrap();
        assert!(max_abs(&(&j.cond_factor - j.kronecker_factor())) < 1e-10);
        assert!(joint_transform(7, 0.5, 1.3, 1.0).is_err());
        assert!(joint_transform(7, 0.5, 1.3, -1.2).is_err());
    }

    #[test]
    fn joint_xi_by_explicit_product() {
        let (t, rho) = (3usize, 0.5);
        let j = joint_transform(t, 1.0, 1.0, rho).unwrap();
        let z = [[3., 2., 1.], [3., 3., 2.], [0., 0., 1.]];
        let mut x = [[0.0; 6]; 6];
        let mut p = [[0.0; 6]; 6];
        for i in 0..3 {
            for k in 0..3 {
                x[i][k] = z[i][k];
                x[i + 3][k + 3] = z[i][k];
            }
            p[i][i] = 1.0;
            p[i + 3][i + 3] = 1.0;
            p[i][i + 3] = rho;
            p[i + 3][i] = rho;
        }
        for r in 0..6 {
            for c in 0..6 {
                let mut v = 0.0;
                for a in 0..6 {
                    for b in 0..6 {
                        v += x[r][a] * p[a][b] * x[c][b];
                    }
                }
                assert!((j.xi[(r, c)] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn joint_draws_satisfy_both_constraint_sets() {
        let j = joint_transform(10, 0.3, 0.6, 0.95).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let eta = j.sample_eta_star(&mut rng);
            let (ef, em) = j.recover_innovations(&eta);
            for eps in [ef, em] {
                let k = cumsum(&eps);
                let sum: f64 = k.iter().sum();
                let trend: f64 = k.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
                assert!(sum.abs() < 1e-8 && trend.abs() < 1e-8);
            }
        }
    }
}
