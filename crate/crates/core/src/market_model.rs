//! Correlated double-exponential jump diffusion for the real stock and bond indices.
//!
//! Log increments over an interval `dt` (no control acting) are
//!
//! ```text
//! dx = (mu - sigma^2/2 - lambda*gamma) dt + sigma dZ + sum_{k <= N(dt)} Y_k
//! ```
//!
//! with `Y_k` double-exponential and `N` Poisson. Stock and bond diffusions are
//! correlated; the jump processes are independent of each other and of the
//! diffusions.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annualized real-return parameters for both indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub mu_s: f64,
    pub sigma_s: f64,
    pub lambda_s: f64,
    pub u_s: f64,
    pub eta1_s: f64,
    pub eta2_s: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    pub lambda_b: f64,
    pub u_b: f64,
    pub eta1_b: f64,
    pub eta2_b: f64,
    pub rho_sb: f64,
    /// Extra drift on negative bond holdings (cost of borrowing).
    pub mu_c_b: f64,
}

impl Default for ModelParams {
    /// Value-weighted stock index and 30-day T-bill index, deflated, 1926:1-2020:12.
    fn default() -> Self {
        Self {
            mu_s: 0.08912,
            sigma_s: 0.1460,
            lambda_s: 0.3263,
            u_s: 0.2258,
            eta1_s: 4.3625,
            eta2_s: 5.5335,
            mu_b: 0.0046,
            sigma_b: 0.0130,
            lambda_b: 0.5053,
            u_b: 0.3958,
            eta1_b: 65.801,
            eta2_b: 57.793,
            rho_sb: 0.08420,
            mu_c_b: 0.02,
        }
    }
}

/// Jump-size law of a single index: `log(xi)` is double exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleExponential {
    pub u: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl DoubleExponential {
    /// `E[Y]` for `Y = log(xi)`.
    pub fn mean(&self) -> f64 {
        let up = if self.eta1.is_infinite() { 0.0 } else { self.u / self.eta1 };
        let down = if self.eta2.is_infinite() { 0.0 } else { (1.0 - self.u) / self.eta2 };
        up - down
    }

    /// `E[Y^2]`.
    pub fn second_moment(&self) -> f64 {
        let up = if self.eta1.is_infinite() { 0.0 } else { 2.0 * self.u / (self.eta1 * self.eta1) };
        let down = if self.eta2.is_infinite() {
            0.0
        } else {
            2.0 * (1.0 - self.u) / (self.eta2 * self.eta2)
        };
        up + down
    }

    /// `E[exp(i w Y)]` for complex `w` with `-eta1 < Im(w) < eta2`.
    pub fn transform(&self, w: Complex64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let up = if self.eta1.is_infinite() {
            Complex64::new(self.u, 0.0)
        } else {
            self.u * self.eta1 / (self.eta1 - i * w)
        };
        let down = if self.eta2.is_infinite() {
            Complex64::new(1.0 - self.u, 0.0)
        } else {
            (1.0 - self.u) * self.eta2 / (self.eta2 + i * w)
        };
        up + down
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let up = rng.random::<f64>() < self.u;
        if up {
            if self.eta1.is_infinite() {
                0.0
            } else {
                Exp::new(self.eta1).map(|d| d.sample(rng)).unwrap_or(0.0)
            }
        } else if self.eta2.is_infinite() {
            0.0
        } else {
            -Exp::new(self.eta2).map(|d| d.sample(rng)).unwrap_or(0.0)
        }
    }
}

/// Log growth factors of the two indices over one interval, absent control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnualReturnPair {
    pub log_return_s: f64,
    pub log_return_b: f64,
}

/// `gamma = E[xi - 1]` for the double-exponential jump multiplier.
pub fn jump_compensator(u: f64, eta1: f64, eta2: f64) -> Result<f64> {
    if !(eta1 > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eta1 = {eta1} must exceed 1 for a finite jump mean"
        )));
    }
    if !(eta2 > 0.0) {
        return Err(Error::InvalidParameter(format!("eta2 = {eta2} must be positive")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!("u = {u} is not a probability")));
    }
    let up = if eta1.is_infinite() { u } else { u * eta1 / (eta1 - 1.0) };
    let down = if eta2.is_infinite() { 1.0 - u } else { (1.0 - u) * eta2 / (eta2 + 1.0) };
    Ok(up + down - 1.0)
}

/// Density of `y = log(xi)`.
pub fn jump_log_density(y: f64, u: f64, eta1: f64, eta2: f64) -> f64 {
    if y >= 0.0 {
        u * eta1 * (-eta1 * y).exp()
    } else {
        (1.0 - u) * eta2 * (eta2 * y).exp()
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.to_string()))
            }
        };
        let all = [
            self.mu_s, self.sigma_s, self.lambda_s, self.u_s, self.eta1_s, self.eta2_s, self.mu_b,
            self.sigma_b, self.lambda_b, self.u_b, self.eta1_b, self.eta2_b, self.rho_sb,
            self.mu_c_b,
        ];
        check(all.iter().all(|v| !v.is_nan()), "parameters must not be NaN")?;
        check(self.sigma_s > 0.0, "sigma_s must be positive")?;
        check(self.sigma_b >= 0.0, "sigma_b must be nonnegative")?;
        check(self.lambda_s >= 0.0 && self.lambda_b >= 0.0, "jump intensities must be nonnegative")?;
        check((0.0..=1.0).contains(&self.u_s), "u_s must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&self.u_b), "u_b must lie in [0, 1]")?;
        check((-1.0..=1.0).contains(&self.rho_sb), "rho_sb must lie in [-1, 1]")?;
        check(self.mu_c_b >= 0.0, "mu_c_b must be nonnegative")?;
        check(self.eta1_s > 1.0 && self.eta1_b > 1.0, "eta1 must exceed 1")?;
        check(self.eta2_s > 0.0 && self.eta2_b > 0.0, "eta2 must be positive")?;
        Ok(())
    }

    pub fn stock_jumps(&self) -> DoubleExponential {
        DoubleExponential { u: self.u_s, eta1: self.eta1_s, eta2: self.eta2_s }
    }

    pub fn bond_jumps(&self) -> DoubleExponential {
        DoubleExponential { u: self.u_b, eta1: self.eta1_b, eta2: self.eta2_b }
    }

    pub fn gamma_s(&self) -> f64 {
        jump_compensator(self.u_s, self.eta1_s, self.eta2_s).unwrap_or(f64::NAN)
    }

    pub fn gamma_b(&self) -> f64 {
        jump_compensator(self.u_b, self.eta1_b, self.eta2_b).unwrap_or(f64::NAN)
    }

    /// Diffusive drift of `log S` per unit time, before jumps.
    pub fn log_drift_s(&self) -> f64 {
        self.mu_s - 0.5 * self.sigma_s * self.sigma_s - self.lambda_s * self.gamma_s()
    }

    /// Diffusive drift of `log B` per unit time for a positive bond holding.
    pub fn log_drift_b(&self) -> f64 {
        self.mu_b - 0.5 * self.sigma_b * self.sigma_b - self.lambda_b * self.gamma_b()
    }

    /// Mean of the one-period stock log return per unit time.
    pub fn mean_log_return_s(&self) -> f64 {
        self.log_drift_s() + self.lambda_s * self.stock_jumps().mean()
    }

    pub fn mean_log_return_b(&self) -> f64 {
        self.log_drift_b() + self.lambda_b * self.bond_jumps().mean()
    }

    /// Variance of the one-period stock log return per unit time.
    pub fn var_log_return_s(&self) -> f64 {
        self.sigma_s * self.sigma_s + self.lambda_s * self.stock_jumps().second_moment()
    }

    pub fn var_log_return_b(&self) -> f64 {
        self.sigma_b * self.sigma_b + self.lambda_b * self.bond_jumps().second_moment()
    }
}

/// Exponent `Phi` with `E[exp(i w_s dx + i w_b dy)] = exp(Phi * dt)` for the joint
/// log increments of a solvent (s, b) position.
///
/// Frequencies may be complex; `Phi(-i, 0) = mu_s` recovers the stock's expected growth.
pub fn characteristic_exponent(params: &ModelParams, omega_s: Complex64, omega_b: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let (ss, sb) = (params.sigma_s, params.sigma_b);
    let quad = ss * ss * omega_s * omega_s
        + 2.0 * params.rho_sb * ss * sb * omega_s * omega_b
        + sb * sb * omega_b * omega_b;
    i * omega_s * params.log_drift_s() + i * omega_b * params.log_drift_b() - 0.5 * quad
        + params.lambda_s * (params.stock_jumps().transform(omega_s) - 1.0)
        + params.lambda_b * (params.bond_jumps().transform(omega_b) - 1.0)
}

/// Exponent for `log(debt)` once the account is insolvent: the bond law plus the
/// borrowing spread.
pub fn debt_characteristic_exponent(params: &ModelParams, omega: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    characteristic_exponent(params, Complex64::new(0.0, 0.0), omega) + i * omega * params.mu_c_b
}

fn compound_jumps<R: Rng + ?Sized>(law: &DoubleExponential, mean_count: f64, rng: &mut R) -> f64 {
    if mean_count <= 0.0 {
        return 0.0;
    }
    let count = Poisson::new(mean_count).map(|p| p.sample(rng)).unwrap_or(0.0) as u64;
    (0..count).map(|_| law.sample(rng)).sum()
}

/// Exact draw of the two log returns over `dt`; the borrowing spread is not applied.
pub fn sample_interval<R: Rng + ?Sized>(params: &ModelParams, dt: f64, rng: &mut R) -> AnnualReturnPair {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let rho = params.rho_sb;
    let zb = rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z2;
    let sq = dt.sqrt();
    let js = compound_jumps(&params.stock_jumps(), params.lambda_s * dt, rng);
    let jb = compound_jumps(&params.bond_jumps(), params.lambda_b * dt, rng);
    AnnualReturnPair {
        log_return_s: params.log_drift_s() * dt + params.sigma_s * sq * z1 + js,
        log_return_b: params.log_drift_b() * dt + params.sigma_b * sq * zb + jb,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn compensator_examples() {
        assert_eq!(jump_compensator(0.5, f64::INFINITY, f64::INFINITY).unwrap(), 0.0);
        assert!((jump_compensator(1.0, 2.0, 7.0).unwrap() - 1.0).abs() < 1e-15);
        // 0.2258*4.3625/3.3625 + 0.7742*5.5335/6.5335 - 1
        let g = jump_compensator(0.2258, 4.3625, 5.5335).unwrap();
        assert!((g - (-0.0513)).abs() < 1e-4, "gamma_s = {g}");
        assert!(jump_compensator(0.5, 1.0, 3.0).is_err());
        assert!(jump_compensator(0.5, 0.5, 3.0).is_err());
    }

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = 0.5 * (f(a) + f(b));
        for k in 1..n {
            acc += f(a + k as f64 * h);
        }
        acc * h
    }

    #[test]
    fn density_normalization_branch_mass_and_mean() {
        let (u, e1, e2) = (0.2258, 4.3625, 5.5335);
        // integrate each branch separately so the kink at 0 is a grid point
        let n = 400_000;
        let pos = trapezoid(|y| jump_log_density(y, u, e1, e2), 0.0, 12.0, n);
        let neg = trapezoid(|y| jump_log_density(-y, u, e1, e2), 1e-300, 12.0, n);
        assert!((pos + neg - 1.0).abs() < 1e-8, "mass {}", pos + neg);
        assert!((pos - u).abs() < 1e-8);
        let m_pos = trapezoid(|y| y * jump_log_density(y, u, e1, e2), 0.0, 12.0, n);
        let m_neg = trapezoid(|y| -y * jump_log_density(-y, u, e1, e2), 1e-300, 12.0, n);
        let law = DoubleExponential { u, eta1: e1, eta2: e2 };
        assert!((m_pos + m_neg - law.mean()).abs() < 1e-8);
        assert!(jump_log_density(-3.0, u, e1, e2) >= 0.0);
    }

    #[test]
    fn exponent_identities() {
        let p = ModelParams::default();
        assert!(characteristic_exponent(&p, c(0.0, 0.0), c(0.0, 0.0)).norm() < 1e-15);
        // exp(Phi(-i, 0)) = E[S_1/S_0] = exp(mu_s)
        let g = characteristic_exponent(&p, c(0.0, -1.0), c(0.0, 0.0));
        assert!((g.exp().re - p.mu_s.exp()).abs() < 1e-12);
        let g = characteristic_exponent(&p, c(0.0, 0.0), c(0.0, -1.0));
        assert!((g.re - p.mu_b).abs() < 1e-12);
        let d = debt_characteristic_exponent(&p, c(0.0, -1.0));
        assert!((d.re - (p.mu_b + p.mu_c_b)).abs() < 1e-12);
        // dPhi/d(i w) at 0 equals the mean log return (central difference)
        let h = 1e-5;
        let plus = characteristic_exponent(&p, c(0.0, -h), c(0.0, 0.0));
        let minus = characteristic_exponent(&p, c(0.0, h), c(0.0, 0.0));
        let deriv = (plus - minus).re / (2.0 * h);
        assert!((deriv - p.mean_log_return_s()).abs() < 1e-8, "{deriv}");
    }

    #[test]
    fn degenerate_process_is_deterministic() {
        let p = ModelParams {
            sigma_s: 1e-300,
            sigma_b: 0.0,
            lambda_s: 0.0,
            lambda_b: 0.0,
            ..ModelParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = sample_interval(&p, 0.5, &mut rng);
        assert!((r.log_return_s - p.mu_s * 0.5).abs() < 1e-14);
        assert!((r.log_return_b - p.mu_b * 0.5).abs() < 1e-14);
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(ModelParams::default().validate().is_ok());
        let bad = ModelParams { eta1_s: 0.9, ..ModelParams::default() };
        assert!(bad.validate().is_err());
        let bad = ModelParams { rho_sb: 1.5, ..ModelParams::default() };
        assert!(bad.validate().is_err());
        let bad = ModelParams { sigma_s: 0.0, ..ModelParams::default() };
        assert!(bad.validate().is_err());
    }
}
