//! B-spline bases and the first-difference P-spline prior.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("point {x} outside the supported span [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const CUBIC: usize = 3;

/// Regularly spaced knots starting at `axis_min` and running until the first
/// knot at or beyond `axis_max`, then extended by `n_exterior` knots past each end.
pub fn place_knots(axis_min: f64, axis_max: f64, spacing: f64, n_exterior: usize) -> Vec<f64> {
    assert!(axis_max > axis_min, "axis_max must exceed axis_min");
    assert!(spacing > 0.0, "spacing must be positive");
    let mut n_interior = 1usize;
    while axis_min + (n_interior - 1) as f64 * spacing < axis_max {
        n_interior += 1;
    }
    let ext = n_exterior as i64;
    (-ext..(n_interior as i64 + ext))
        .map(|i| axis_min + i as f64 * spacing)
        .collect()
}

/// Greville abscissae: the knot averages at which a coefficient vector
/// taken from a smooth curve reproduces it up to second order.
pub fn greville(knots: &[f64], degree: usize) -> Vec<f64> {
    let n = knots.len() - degree - 1;
    (0..n)
        .map(|j| knots[j + 1..=j + degree].iter().sum::<f64>() / degree as f64)
        .collect()
}

/// Supported evaluation span of a basis of the given degree.
pub fn support(knots: &[f64], degree: usize) -> (f64, f64) {
    (knots[degree], knots[knots.len() - 1 - degree])
}

/// Nonzero basis values at `x`: returns the index of the first nonzero basis
/// function and the `degree + 1` values starting there.
pub fn eval_local(knots: &[f64], degree: usize, x: f64) -> Result<(usize, Vec<f64>), SplineError> {
    let n_knots = knots.len();
    if n_knots < 2 * degree + 2 {
        return Err(SplineError::Argument(format!(
            "{n_knots} knots cannot support a degree-{degree} basis"
        )));
    }
    let (lo, hi) = support(knots, degree);
    if !(x >= lo && x <= hi) {
        return Err(SplineError::Domain { x, lo, hi });
    }
    // span index i with knots[i] <= x < knots[i + 1]
    let last_span = n_knots - degree - 2;
    let mut span = degree;
    while span < last_span && x >= knots[span + 1] {
        span += 1;
    }
    let mut values = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    values[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    Ok((span - degree, values))
}

/// Cox–de Boor evaluation of every basis function at every point.
pub fn eval_basis(knots: &[f64], degree: usize, points: &[f64]) -> Result<DMatrix<f64>, SplineError> {
    let n_coef = knots.len().saturating_sub(degree + 1);
    let mut basis = DMatrix::zeros(points.len(), n_coef);
    for (row, &x) in points.iter().enumerate() {
        let (start, vals) = eval_local(knots, degree, x)?;
        for (k, v) in vals.into_iter().enumerate() {
            basis[(row, start + k)] = v;
        }
    }
    Ok(basis)
}

/// A smooth term's basis evaluated at a fixed set of points.
#[derive(Debug, Clone)]
pub struct SplineBlock {
    pub knots: Vec<f64>,
    pub degree: usize,
    pub points: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub n_coef: usize,
}

impl SplineBlock {
    pub fn new(knots: Vec<f64>, degree: usize, points: Vec<f64>) -> Result<Self, SplineError> {
        let basis = eval_basis(&knots, degree, &points)?;
        let n_coef = basis.ncols();
        Ok(Self {
            knots,
            degree,
            points,
            basis,
            n_coef,
        })
    }

    /// Cubic basis with knots every `spacing` over `[min(points), max(points)]`.
    pub fn regular(points: Vec<f64>, spacing: f64, n_exterior: usize) -> Result<Self, SplineError> {
        let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(SplineError::Argument(
                "a smooth needs at least two distinct points".into(),
            ));
        }
        Self::new(place_knots(lo, hi, spacing, n_exterior), CUBIC, points)
    }

    /// s(x) = βᵀ b(x) at every stored point.
    pub fn evaluate(&self, coef: &[f64]) -> Vec<f64> {
        assert_eq!(coef.len(), self.n_coef);
        (&self.basis * DVector::from_column_slice(coef))
            .iter()
            .copied()
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SplineError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut head = vec!["x".to_string()];
        head.extend((0..self.n_coef).map(|j| format!("b{j}")));
        w.write_record(&head)?;
        for (i, x) in self.points.iter().enumerate() {
            let mut row = vec![x.to_string()];
            row.extend(self.basis.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// First-difference penalty `A = D₁ᵀD₁` and the projector `B` onto its null space.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyPair {
    pub diff_penalty: DMatrix<f64>,
    pub null_penalty: DMatrix<f64>,
}

impl PenaltyPair {
    pub fn n_coef(&self) -> usize {
        self.diff_penalty.nrows()
    }

    /// Log pseudo-determinant of `A`. The path-graph Laplacian's nonzero
    /// eigenvalues multiply to `n`.
    pub fn log_pdet_diff(&self) -> f64 {
        (self.n_coef() as f64).ln()
    }
}

pub fn difference_penalty(n_coef: usize) -> PenaltyPair {
    assert!(n_coef >= 2, "difference penalty needs at least two coefficients");
    let mut a = DMatrix::zeros(n_coef, n_coef);
    for i in 0..n_coef - 1 {
        a[(i, i)] += 1.0;
        a[(i + 1, i + 1)] += 1.0;
        a[(i, i + 1)] -= 1.0;
        a[(i + 1, i)] -= 1.0;
    }
    let b = DMatrix::from_element(n_coef, n_coef, 1.0 / n_coef as f64);
    PenaltyPair {
        diff_penalty: a,
        null_penalty: b,
    }
}

/// Orthonormal eigenvectors of the first-difference penalty (the DCT-II
/// basis of a path graph) as columns, with their eigenvalues. Column 0 is
/// the constant vector, the null space of `A`.
///
/// Used to sample a smooth partially non-centred: the coordinate along the
/// constant vector is kept as is, `c₀ ~ N(0, σ_B²)`, and the rest are
/// whitened, `u_j ~ N(0, 1)` with `β_j-part = σ_A/√λ_j · u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyEigen {
    pub vectors: DMatrix<f64>,
    pub values: Vec<f64>,
}

impl PenaltyEigen {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "difference penalty needs at least two coefficients");
        let nf = n as f64;
        let vectors = DMatrix::from_fn(n, n, |i, j| {
            if j == 0 {
                1.0 / nf.sqrt()
            } else {
                (2.0 / nf).sqrt() * (std::f64::consts::PI * j as f64 * (i as f64 + 0.5) / nf).cos()
            }
        });
        let values = (0..n)
            .map(|j| 4.0 * (std::f64::consts::PI * j as f64 / (2.0 * nf)).sin().powi(2))
            .collect();
        Self { vectors, values }
    }

    /// Factor between each sampled coordinate and the eigen-coefficient:
    /// 1 for the constant direction, `σ_A/√λ_j` for the others.
    pub fn scales(&self, sigma_a: f64) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .map(|(j, &l)| if j == 0 { 1.0 } else { sigma_a / l.sqrt() })
            .collect()
    }

    pub fn colour(&self, u: &[f64], sigma_a: f64) -> Vec<f64> {
        let su: Vec<f64> = self.scales(sigma_a).iter().zip(u).map(|(s, v)| s * v).collect();
        (&self.vectors * DVector::from_vec(su)).iter().copied().collect()
    }

    pub fn whiten(&self, beta: &[f64], sigma_a: f64) -> Vec<f64> {
        let proj = self.vectors.tr_mul(&DVector::from_column_slice(beta));
        proj.iter().zip(self.scales(sigma_a)).map(|(p, s)| p / s).collect()
    }
}

/// `K = A/σ_A² + B/σ_B²`.
pub fn prior_precision(
    penalties: &PenaltyPair,
    sigma_a: f64,
    sigma_b: f64,
) -> Result<DMatrix<f64>, SplineError> {
    if !(sigma_a > 0.0 && sigma_b > 0.0) {
        return Err(SplineError::Argument(format!(
            "smoothing scales must be positive, got sigma_A={sigma_a}, sigma_B={sigma_b}"
        )));
    }
    Ok(&penalties.diff_penalty / (sigma_a * sigma_a) + &penalties.null_penalty / (sigma_b * sigma_b))
}

/// `Σ (β_{i+1} − β_i)²`, i.e. `βᵀAβ` without forming `A`.
pub fn diff_quadratic(beta: &[f64]) -> f64 {
    beta.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// `βᵀBβ = n·mean(β)²`.
pub fn null_quadratic(beta: &[f64]) -> f64 {
    let s: f64 = beta.iter().sum();
    s * s / beta.len() as f64
}

/// Log density of `β ~ MVN(0, K⁻¹)` and its gradient with respect to β,
/// `log σ_A` and `log σ_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPriorEval {
    pub log_density: f64,
    pub d_beta: Vec<f64>,
    pub d_log_sigma_a: f64,
    pub d_log_sigma_b: f64,
}

pub fn smooth_prior(beta: &[f64], sigma_a: f64, sigma_b: f64) -> SmoothPriorEval {
    let n = beta.len();
    let nf = n as f64;
    let qa = diff_quadratic(beta);
    let qb = null_quadratic(beta);
    let va = sigma_a * sigma_a;
    let vb = sigma_b * sigma_b;
    let log_det_k = nf.ln() - 2.0 * (nf - 1.0) * sigma_a.ln() - 2.0 * sigma_b.ln();
    let log_density =
        0.5 * log_det_k - 0.5 * (qa / va + qb / vb) - 0.5 * nf * (2.0 * std::f64::consts::PI).ln();
    let mean = beta.iter().sum::<f64>() / nf;
    let mut d_beta = vec![0.0; n];
    // −Kβ = −(Aβ)/σ_A² − (Bβ)/σ_B²
    for i in 0..n {
        let mut a_beta = 0.0;
        if i > 0 {
            a_beta += beta[i] - beta[i - 1];
        }
        if i + 1 < n {
            a_beta += beta[i] - beta[i + 1];
        }
        d_beta[i] = -a_beta / va - mean / vb;
    }
    SmoothPriorEval {
        log_density,
        d_beta,
        d_log_sigma_a: -(nf - 1.0) + qa / va,
        d_log_sigma_b: -1.0 + qb / vb,
    }
}
