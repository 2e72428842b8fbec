//! Monte Carlo experiment harness for minimum-singular-value behaviour of
//! random matrix ensembles.
//!
//! Five experiment kinds are implemented: PSD-sum anti-concentration,
//! jointly-Gaussian matrices, Gaussian combinations of random coefficient
//! matrices, sketched Krylov space spectra, and the anti-bidiagonal
//! counterexample with exponentially small minimum singular value. Each run
//! produces an [`ExperimentReport`] whose violation fractions can be
//! recomputed exactly from the stored per-trial singular values. Negative
//! controls are first-class: the reports flag hypothesis violations as
//! failing checks.

mod counterexample;
mod gaussian_combination;
mod jointly_gaussian;
mod krylov_experiment;
mod psd_sum;
mod small_ball;

pub use counterexample::{
    counterexample_matrix, counterexample_matrix_with_g, counterexample_singular_values,
    run_counterexample_experiment, CounterexampleSpec,
};
pub use gaussian_combination::{
    run_gaussian_combination_experiment, CoefficientEnsembleKind, GaussianCombinationSpec,
};
pub use jointly_gaussian::{
    run_jointly_gaussian_experiment, GaussianEnsembleKind, JointlyGaussianSpec,
};
pub use krylov_experiment::{
    general_krylov_matrix, power_handle, run_krylov_experiment, KrylovExperimentSpec,
};
pub use psd_sum::{
    run_default_psd_sum_experiment, run_psd_sum_experiment, ConstantPsd, GaussianRankOne,
    PsdSampler, PsdSumSpec,
};
pub use small_ball::{
    estimate_small_ball, real_to_complex, ComplexVec, FnSampler, GaussianIidSampler,
    MatrixSampler, PairStat, SmallBallConfig, SmallBallEstimate, ZeroSampler,
};

use std::io::Write;

use crate::error::Result;

/// Schema tag written into every experiment report.
pub const EXPERIMENT_SCHEMA: &str = "sbk.experiment-report/1";

/// Matrix type governing the admissible test pairs `(x, y)`: real types
/// restrict to real vectors, symmetric/self-adjoint types force `x = y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixTypeTag {
    Real,
    Complex,
    RealSymmetric,
    SelfAdjoint,
}

impl MatrixTypeTag {
    pub fn requires_real(self) -> bool {
        matches!(self, MatrixTypeTag::Real | MatrixTypeTag::RealSymmetric)
    }

    pub fn requires_equal_pair(self) -> bool {
        matches!(self, MatrixTypeTag::RealSymmetric | MatrixTypeTag::SelfAdjoint)
    }
}

/// One bound test inside a report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BoundCheck {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub bound_value: f64,
    /// Fraction of trials at or below the bound (or the observed ratio for
    /// decay checks); always recomputable from the stored per-trial values.
    pub violation_fraction: f64,
    pub budget: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct Quantile {
    pub q: f64,
    pub value: f64,
}

/// Structured record of one Monte Carlo experiment.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ExperimentReport {
    pub schema: &'static str,
    pub kind: String,
    /// Resolved experiment parameters, defaults included.
    pub params: serde_json::Value,
    pub trials: usize,
    /// Per-trial minimum singular values, in trial order.
    pub sigma_min: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_max: Option<Vec<f64>>,
    pub quantiles: Vec<Quantile>,
    pub checks: Vec<BoundCheck>,
    pub pass: bool,
    pub notes: Vec<String>,
    /// Seconds; excluded from determinism comparisons.
    pub wall_time: f64,
    /// Columns for the per-trial CSV (label, values); not serialized to JSON.
    #[serde(skip)]
    pub trial_columns: Vec<(String, Vec<f64>)>,
}

impl ExperimentReport {
    /// Exact fraction of values at or below the bound.
    pub fn violation_fraction(values: &[f64], bound: f64) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        values.iter().filter(|&&v| v <= bound).count() as f64 / values.len() as f64
    }

    /// Empirical quantile with linear interpolation on the sorted sample.
    pub fn quantile(values: &[f64], q: f64) -> f64 {
        assert!((0.0..=1.0).contains(&q) && !values.is_empty());
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi {
            sorted[lo]
        } else {
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }

    pub fn standard_quantiles(values: &[f64]) -> Vec<Quantile> {
        [0.05, 0.25, 0.5, 0.75, 0.95]
            .iter()
            .map(|&q| Quantile {
                q,
                value: Self::quantile(values, q),
            })
            .collect()
    }

    /// Writes one CSV row per trial: `trial,<columns...>`.
    pub fn write_trials_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "trial")?;
        for (name, _) in &self.trial_columns {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for t in 0..self.trials {
            write!(w, "{t}")?;
            for (_, col) in &self.trial_columns {
                write!(w, ",{}", col[t])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `P(|Z| > alpha)` for a standard normal `Z`.
pub fn gaussian_two_sided_tail(alpha: f64) -> f64 {
    libm::erfc(alpha / std::f64::consts::SQRT_2)
}

/// `P(chi^2_1 > alpha) = P(Z^2 > alpha)`.
pub fn chi_square_1_tail(alpha: f64) -> f64 {
    if alpha <= 0.0 {
        1.0
    } else {
        libm::erfc((alpha / 2.0).sqrt())
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tails_match_reference_values() {
        // 2(1 - Phi(1)) = 0.31731...
        assert!((gaussian_two_sided_tail(1.0) - 0.3173105078629141).abs() < 1e-12);
        // P(chi2_1 > 0.1) = 0.75183...
        assert!((chi_square_1_tail(0.1) - 0.7518296340458492).abs() < 1e-10);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(chi_square_1_tail(0.0), 1.0);
    }

    #[test]
    fn quantile_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ExperimentReport::quantile(&v, 0.0), 1.0);
        assert_eq!(ExperimentReport::quantile(&v, 1.0), 4.0);
        assert_eq!(ExperimentReport::quantile(&v, 0.5), 2.5);
    }

    #[test]
    fn violation_fraction_is_exact() {
        let v = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(ExperimentReport::violation_fraction(&v, 0.2), 0.5);
        assert_eq!(ExperimentReport::violation_fraction(&v, 0.05), 0.0);
    }

    #[test]
    fn tag_restrictions() {
        assert!(MatrixTypeTag::Real.requires_real());
        assert!(MatrixTypeTag::RealSymmetric.requires_real());
        assert!(MatrixTypeTag::RealSymmetric.requires_equal_pair());
        assert!(MatrixTypeTag::SelfAdjoint.requires_equal_pair());
        assert!(!MatrixTypeTag::Complex.requires_real());
        assert!(!MatrixTypeTag::Complex.requires_equal_pair());
    }
}
