//! Double-integrator system matrices and the closed-form solution of the
//! parametric algebraic Riccati equation
//!
//! ```text
//! I + (β/α) Q + AᵀP + PA − σα P B Bᵀ P = 0
//! ```
//!
//! With `A = [[0,1],[0,0]] ⊗ I_n`, `B = [0;1] ⊗ I_n`, `Q = diag(0,1) ⊗ I_n`
//! the solution is a 2×2 block Kronecker-expanded by `I_n`, so most of the
//! work happens on the 2×2 core.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::kron_identity;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiccatiError {
    #[error("parameter {name} must be {requirement}, got {value}")]
    NonPositiveParam {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("matrix is {rows}x{cols}; expected square with even dimension")]
    DimensionMismatch { rows: usize, cols: usize },
    #[error("parameter sets differ in {0}, which is not the varied parameter")]
    ParamsDifferElsewhere(Param),
    #[error("varied parameter {param} must satisfy lo <= hi ({lo} > {hi})")]
    NotIncreasing { param: Param, lo: f64, hi: f64 },
}

/// One of the three design parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Alpha,
    Sigma,
    Beta,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::Alpha, Param::Sigma, Param::Beta];

    pub fn name(self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::Sigma => "sigma",
            Param::Beta => "beta",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(Param::Alpha),
            "sigma" => Ok(Param::Sigma),
            "beta" => Ok(Param::Beta),
            other => Err(format!("unknown parameter `{other}` (expected alpha, sigma or beta)")),
        }
    }
}

/// Fixed matrices of `n` decoupled double integrators.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub dimension: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn new(dimension: usize) -> Self {
        let a = kron_identity(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), dimension);
        let b = kron_identity(&DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), dimension);
        let q = kron_identity(&DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]), dimension);
        Self { dimension, a, b, q }
    }
}

/// Trade-off weight α, distribution parameter σ and resistance coefficient β.
///
/// α and σ must be strictly positive. β = 0 is accepted as the pure
/// input-energy limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl ControlParams {
    pub fn new(alpha: f64, sigma: f64, beta: f64) -> Result<Self, RiccatiError> {
        let params = Self { alpha, sigma, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), RiccatiError> {
        let positive = |name, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(RiccatiError::NonPositiveParam {
                    name,
                    requirement: "finite and > 0",
                    value,
                })
            }
        };
        positive("alpha", self.alpha)?;
        positive("sigma", self.sigma)?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(RiccatiError::NonPositiveParam {
                name: "beta",
                requirement: "finite and >= 0",
                value: self.beta,
            });
        }
        Ok(())
    }

    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::Alpha => self.alpha,
            Param::Sigma => self.sigma,
            Param::Beta => self.beta,
        }
    }

    /// Copy with one parameter replaced (not validated).
    pub fn with(&self, param: Param, value: f64) -> Self {
        let mut out = *self;
        match param {
            Param::Alpha => out.alpha = value,
            Param::Sigma => out.sigma = value,
            Param::Beta => out.beta = value,
        }
        out
    }

    /// `√(σα)`.
    pub fn sqrt_sigma_alpha(&self) -> f64 {
        (self.sigma * self.alpha).sqrt()
    }

    /// `1 + β/α + 2/√(σα)`, the radicand shared by P₂₂, λ_min(P) and both bounds.
    pub fn damping_radicand(&self) -> f64 {
        1.0 + self.beta / self.alpha + 2.0 / self.sqrt_sigma_alpha()
    }
}

/// Closed-form PARE solution for spatial dimension `n`.
#[derive(Debug, Clone)]
pub struct PareSolution {
    params: ControlParams,
    dimension: usize,
    core: Matrix2<f64>,
    p: DMatrix<f64>,
    s: DMatrix<f64>,
    lambda_min: f64,
}

impl PareSolution {
    pub fn params(&self) -> &ControlParams {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// The 2×2 block `P₀` with `P = P₀ ⊗ I_n`.
    pub fn core(&self) -> &Matrix2<f64> {
        &self.core
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// `S = P B Bᵀ P`.
    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// λ_min(P) from the closed-form expression.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// The two scalar entries of `BᵀP` per spatial axis: (position, velocity).
    pub fn input_row(&self) -> (f64, f64) {
        (self.core[(1, 0)], self.core[(1, 1)])
    }
}

/// 2×2 core of the closed-form solution.
pub fn pare_core(params: &ControlParams) -> Matrix2<f64> {
    let root = params.sqrt_sigma_alpha();
    let ControlParams { alpha, sigma, beta } = *params;
    let p11 = (sigma * alpha + beta * sigma + 2.0 * root).sqrt();
    let p22 = params.damping_radicand().sqrt();
    Matrix2::new(p11, 1.0, 1.0, p22) / root
}

/// λ_min(P) written out in closed form.
pub fn lambda_min_closed_form(params: &ControlParams) -> f64 {
    let root = params.sqrt_sigma_alpha();
    let radicand = params.damping_radicand();
    let first = (1.0 + root) * radicand.sqrt();
    let second = ((1.0 + root * root - 2.0 * root) * radicand + 4.0).sqrt();
    (first - second) / (2.0 * root)
}

pub fn solve_pare(params: &ControlParams, dimension: usize) -> Result<PareSolution, RiccatiError> {
    params.validate()?;
    if dimension == 0 {
        return Err(RiccatiError::DimensionMismatch { rows: 0, cols: 0 });
    }
    let core = pare_core(params);
    let core_dyn = DMatrix::from_iterator(2, 2, core.iter().copied());
    let p = kron_identity(&core_dyn, dimension);
    let sys = SystemMatrices::new(dimension);
    let pb = &p * &sys.b;
    let s = &pb * pb.transpose();
    let lambda_min = lambda_min_closed_form(params);

    #[cfg(debug_assertions)]
    {
        let numeric = SymmetricEigen::new(core).eigenvalues.min();
        debug_assert!(
            (numeric - lambda_min).abs() <= 1e-8 * numeric.abs().max(1.0),
            "closed-form λ_min(P) = {lambda_min} disagrees with eigensolver {numeric}"
        );
    }

    Ok(PareSolution {
        params: *params,
        dimension,
        core,
        p,
        s,
        lambda_min,
    })
}

/// Frobenius norm of `I + (β/α)Q + AᵀP + PA − σα P B Bᵀ P` for an arbitrary
/// candidate `P`.
pub fn pare_residual(candidate: &DMatrix<f64>, params: &ControlParams) -> Result<f64, RiccatiError> {
    let (rows, cols) = candidate.shape();
    if rows != cols || rows == 0 || rows % 2 != 0 {
        return Err(RiccatiError::DimensionMismatch { rows, cols });
    }
    let sys = SystemMatrices::new(rows / 2);
    let pb = candidate * &sys.b;
    let residual = DMatrix::<f64>::identity(rows, rows)
        + &sys.q * (params.beta / params.alpha)
        + sys.a.transpose() * candidate
        + candidate * &sys.a
        - (&pb * pb.transpose()) * (params.sigma * params.alpha);
    Ok(residual.norm())
}

/// Outcome of comparing `P(lo) − P(hi)` in the Loewner order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoewnerOrderResult {
    pub varied: Param,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Whether `D = P(lo) − P(hi)` has the expected sign: `D ⪰ 0` for α and σ,
    /// `D ⪯ 0` for β, up to `LOEWNER_TOL`.
    pub holds: bool,
}

pub const LOEWNER_TOL: f64 = 1e-9;

pub fn monotonicity_check_p(
    lo: &ControlParams,
    hi: &ControlParams,
    varied: Param,
) -> Result<LoewnerOrderResult, RiccatiError> {
    for other in Param::ALL.into_iter().filter(|&p| p != varied) {
        if lo.get(other) != hi.get(other) {
            return Err(RiccatiError::ParamsDifferElsewhere(other));
        }
    }
    if lo.get(varied) > hi.get(varied) {
        return Err(RiccatiError::NotIncreasing {
            param: varied,
            lo: lo.get(varied),
            hi: hi.get(varied),
        });
    }
    lo.validate()?;
    hi.validate()?;
    let diff = pare_core(lo) - pare_core(hi);
    let eig = SymmetricEigen::new(diff).eigenvalues;
    let (min_eigenvalue, max_eigenvalue) = (eig.min(), eig.max());
    let holds = match varied {
        Param::Alpha | Param::Sigma => min_eigenvalue >= -LOEWNER_TOL,
        Param::Beta => max_eigenvalue <= LOEWNER_TOL,
    };
    Ok(LoewnerOrderResult {
        varied,
        min_eigenvalue,
        max_eigenvalue,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ControlParams {
        ControlParams::new(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn system_matrix_identities() {
        for n in 1..=3 {
            let sys = SystemMatrices::new(n);
            assert!((&sys.a * &sys.a).norm() == 0.0);
            assert_eq!(sys.b.transpose() * &sys.b, DMatrix::identity(n, n));
            assert_eq!(&sys.q * &sys.q, sys.q);
            assert_eq!(sys.q.transpose(), sys.q);
        }
    }

    #[test]
    fn unit_params_closed_form() {
        let sol = solve_pare(&unit(), 1).unwrap();
        let r3 = 3f64.sqrt();
        let expected = DMatrix::from_row_slice(2, 2, &[r3, 1.0, 1.0, r3]);
        assert!((sol.p() - &expected).norm() < 1e-15);
        assert!((sol.lambda_min() - (r3 - 1.0)).abs() < 1e-12);
        assert!((sol.lambda_min() - 0.7320508).abs() < 1e-7);
        // residual is exactly zero by hand: AᵀP+PA = [[0,√3],[√3,2]], PBBᵀP = [[1,√3],[√3,3]]
        assert!(pare_residual(sol.p(), &unit()).unwrap() < 1e-15);
        assert_eq!(sol.input_row(), (1.0, r3));
    }

    #[test]
    fn kronecker_expansion() {
        let params = ControlParams::new(7.0, 0.4, 2.5).unwrap();
        let one = solve_pare(&params, 1).unwrap();
        let two = solve_pare(&params, 2).unwrap();
        let one_dyn = DMatrix::from_iterator(2, 2, one.core().iter().copied());
        assert_eq!(two.p(), &kron_identity(&one_dyn, 2));
        assert!(pare_residual(two.p(), &params).unwrap() < 1e-12);
        assert_eq!(one.lambda_min(), two.lambda_min());
    }

    #[test]
    fn residual_of_perturbed_candidate() {
        let sol = solve_pare(&unit(), 1).unwrap();
        let perturbed = sol.p() + DMatrix::identity(2, 2) * 0.1;
        assert!(pare_residual(&perturbed, &unit()).unwrap() > 0.01);
    }

    #[test]
    fn residual_of_zero_matrix() {
        let r = pare_residual(&DMatrix::zeros(2, 2), &unit()).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        let params = ControlParams::new(2.0, 1.0, 3.0).unwrap();
        let r = pare_residual(&DMatrix::zeros(4, 4), &params).unwrap();
        let ratio: f64 = 1.0 + 3.0 / 2.0;
        assert!((r - (2.0 * (1.0 + ratio * ratio)).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn residual_rejects_bad_shapes() {
        assert!(matches!(
            pare_residual(&DMatrix::zeros(3, 3), &unit()),
            Err(RiccatiError::DimensionMismatch { rows: 3, cols: 3 })
        ));
        assert!(pare_residual(&DMatrix::zeros(2, 4), &unit()).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(ControlParams::new(0.0, 1.0, 0.0).is_err());
        assert!(ControlParams::new(1.0, -1.0, 0.0).is_err());
        assert!(ControlParams::new(1.0, 1.0, -0.1).is_err());
        assert!(ControlParams::new(f64::NAN, 1.0, 0.0).is_err());
        assert!(ControlParams::new(1.0, 1.0, 0.0).is_ok());
        let bad = ControlParams {
            alpha: -1.0,
            sigma: 1.0,
            beta: 0.0,
        };
        assert!(matches!(
            solve_pare(&bad, 1),
            Err(RiccatiError::NonPositiveParam { name: "alpha", .. })
        ));
    }

    #[test]
    fn s_is_symmetric_psd() {
        let sol = solve_pare(&ControlParams::new(450.0, 1.3, 0.2).unwrap(), 2).unwrap();
        assert!((sol.s() - sol.s().transpose()).norm() < 1e-14);
        let eig = SymmetricEigen::new(sol.s().clone()).eigenvalues;
        assert!(eig.min() > -1e-12);
    }

    #[test]
    fn loewner_examples() {
        let lo = unit();
        let r = monotonicity_check_p(&lo, &lo.with(Param::Alpha, 4.0), Param::Alpha).unwrap();
        assert!(r.holds && r.min_eigenvalue >= -LOEWNER_TOL);

        let r = monotonicity_check_p(&lo, &lo.with(Param::Beta, 1.0), Param::Beta).unwrap();
        assert!(r.holds && r.max_eigenvalue <= LOEWNER_TOL);

        for p in Param::ALL {
            let r = monotonicity_check_p(&lo, &lo, p).unwrap();
            assert!(r.holds);
            assert_eq!(r.min_eigenvalue, 0.0);
            assert_eq!(r.max_eigenvalue, 0.0);
        }
    }

    #[test]
    fn loewner_rejects_mismatched_params() {
        let lo = unit();
        let hi = ControlParams::new(2.0, 2.0, 0.0).unwrap();
        assert_eq!(
            monotonicity_check_p(&lo, &hi, Param::Alpha).unwrap_err(),
            RiccatiError::ParamsDifferElsewhere(Param::Sigma)
        );
        assert!(matches!(
            monotonicity_check_p(&lo.with(Param::Beta, 2.0), &lo, Param::Beta),
            Err(RiccatiError::NotIncreasing { .. })
        ));
    }

    #[test]
    fn param_parsing() {
        assert_eq!("sigma".parse::<Param>().unwrap(), Param::Sigma);
        assert!("gamma".parse::<Param>().is_err());
        assert_eq!(Param::Beta.to_string(), "beta");
    }
}
