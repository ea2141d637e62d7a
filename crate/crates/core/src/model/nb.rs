//! Negative binomial log pmf on the mean/dispersion scale, continuous in the
//! count through `Γ(d+1)`.

use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LikelihoodError {
    #[error("non-finite or out-of-domain input: d={d}, mu={mu}, phi={phi}")]
    Domain { d: f64, mu: f64, phi: f64 },
}

/// Above this dispersion `lnΓ(φ+d) − lnΓ(φ)` loses digits to cancellation and
/// the Stirling difference takes over.
const LARGE_PHI: f64 = 1e4;

fn stirling_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)))
}

fn digamma_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    0.5 * r + r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 / 252.0))
}

/// `lnΓ(φ+d) − lnΓ(φ)`.
pub fn lgamma_diff(phi: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    if phi > LARGE_PHI {
        (phi - 0.5) * (d / phi).ln_1p() + d * (phi + d).ln() - d + stirling_tail(phi + d)
            - stirling_tail(phi)
    } else {
        ln_gamma(phi + d) - ln_gamma(phi)
    }
}

/// `ψ(φ+d) − ψ(φ)`.
pub fn digamma_diff(phi: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    if phi > LARGE_PHI {
        (d / phi).ln_1p() - digamma_tail(phi + d) + digamma_tail(phi)
    } else {
        digamma(phi + d) - digamma(phi)
    }
}

/// `lnΓ(d+1)`; cache it per cell, it never changes during sampling.
pub fn log_factorial(d: f64) -> f64 {
    ln_gamma(d + 1.0)
}

fn valid(d: f64, mu: f64, phi: f64) -> bool {
    d.is_finite() && d >= 0.0 && mu.is_finite() && mu > 0.0 && phi.is_finite() && phi > 0.0
}

/// Log pmf, `−∞` for invalid inputs.
pub fn nb_loglik(d: f64, mu: f64, phi: f64) -> f64 {
    nb_loglik_checked(d, mu, phi).unwrap_or_else(|e| {
        log::debug!("{e}");
        f64::NEG_INFINITY
    })
}

pub fn nb_loglik_checked(d: f64, mu: f64, phi: f64) -> Result<f64, LikelihoodError> {
    if !valid(d, mu, phi) {
        return Err(LikelihoodError::Domain { d, mu, phi });
    }
    Ok(nb_terms(d, mu.ln(), phi, log_factorial(d)).value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbTerms {
    pub value: f64,
    /// ∂/∂log μ
    pub d_log_mu: f64,
    /// ∂/∂φ
    pub d_phi: f64,
}

/// Value and partials given `log μ` and the cached `lnΓ(d+1)`.
#[inline]
pub fn nb_terms(d: f64, log_mu: f64, phi: f64, log_fact_d: f64) -> NbTerms {
    let mu = log_mu.exp();
    let log_mu_phi = (mu + phi).ln();
    let log1p_ratio = (mu / phi).ln_1p();
    let value = lgamma_diff(phi, d) - log_fact_d + d * (log_mu - log_mu_phi) - phi * log1p_ratio;
    let inv = 1.0 / (mu + phi);
    NbTerms {
        value,
        d_log_mu: phi * (d - mu) * inv,
        d_phi: digamma_diff(phi, d) - log1p_ratio + (mu - d) * inv,
    }
}

/// Value and `∂/∂log μ` only; skips the digamma evaluation.
#[inline]
pub fn nb_value_dlogmu(d: f64, log_mu: f64, phi: f64, log_fact_d: f64) -> (f64, f64) {
    let mu = log_mu.exp();
    let log_mu_phi = (mu + phi).ln();
    let value =
        lgamma_diff(phi, d) - log_fact_d + d * (log_mu - log_mu_phi) - phi * (mu / phi).ln_1p();
    (value, phi * (d - mu) * (1.0 / (mu + phi)))
}

pub fn poisson_loglik(d: f64, mu: f64) -> f64 {
    d * mu.ln() - mu - log_factorial(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_by_hand() {
        // Γ(3)/(2!Γ(1))·(1/2)²·(1/2) = 1/8
        assert!((nb_loglik(2.0, 1.0, 1.0) - (1.0f64 / 8.0).ln()).abs() < 1e-12);
        let (mu, phi) = (3.7f64, 2.2f64);
        let zero = phi * (phi.ln() - (mu + phi).ln());
        assert!((nb_loglik(0.0, mu, phi) - zero).abs() < 1e-12);
    }

    #[test]
    fn poisson_limit() {
        let nb = nb_loglik(3.0, 5.0, 1e8);
        assert!((nb - poisson_loglik(3.0, 5.0)).abs() < 1e-5, "{nb}");
        // the two branches agree at the switch-over
        for d in [0.5, 3.0, 40.0, 1234.5] {
            let below = ln_gamma(LARGE_PHI + d) - ln_gamma(LARGE_PHI);
            let above = (LARGE_PHI - 0.5) * (d / LARGE_PHI).ln_1p() + d * (LARGE_PHI + d).ln() - d
                + stirling_tail(LARGE_PHI + d)
                - stirling_tail(LARGE_PHI);
            assert!((below - above).abs() < 1e-9 * below.abs().max(1.0), "{d}");
            let db = digamma(LARGE_PHI + d) - digamma(LARGE_PHI);
            let da = (d / LARGE_PHI).ln_1p() - digamma_tail(LARGE_PHI + d) + digamma_tail(LARGE_PHI);
            assert!((db - da).abs() < 1e-10, "{d}");
        }
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(nb_loglik(1.0, 0.0, 1.0), f64::NEG_INFINITY);
        assert!(nb_loglik_checked(f64::NAN, 1.0, 1.0).is_err());
        assert!(nb_loglik_checked(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn partials_match_differences() {
        let h = 1e-6;
        for &(d, mu, phi) in &[(0.0, 2.0, 3.0), (7.5, 4.0, 0.7), (120.0, 95.0, 40.0), (3.0, 5.0, 2e5)] {
            let lf = log_factorial(d);
            let t = nb_terms(d, f64::ln(mu), phi, lf);
            let f = |lm: f64, p: f64| nb_terms(d, lm, p, lf).value;
            let dm = (f(mu.ln() + h, phi) - f(mu.ln() - h, phi)) / (2.0 * h);
            let hp = h * phi;
            let dp = (f(mu.ln(), phi + hp) - f(mu.ln(), phi - hp)) / (2.0 * hp);
            assert!((t.d_log_mu - dm).abs() < 1e-6 * dm.abs().max(1.0));
            assert!((t.d_phi - dp).abs() < 1e-5 * dp.abs().max(1e-3), "{d} {mu} {phi}: {} {dp}", t.d_phi);
            let (v, g) = nb_value_dlogmu(d, mu.ln(), phi, lf);
            assert_eq!((v, g), (t.value, t.d_log_mu));
        }
    }
}
