//! Anti-concentration of averaged sums of independent PSD matrices: the
//! minimum singular value of `(1/n) sum M_i` is measured against the bound
//! `alpha * beta / 2`, where `beta` lower-bounds the small-ball probability
//! `P(x^* M_i x > alpha)` uniformly over unit vectors.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sketch::{SeedPath, SplitMix64};
use crate::xlab::{chi_square_1_tail, BoundCheck, ExperimentReport, EXPERIMENT_SCHEMA};

/// Source of independent PSD samples.
pub trait PsdSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut SplitMix64) -> DMatrix<f64>;
}

/// `v v^T` with `v` standard normal in `R^m`; the sample-covariance ensemble.
/// Its exact small-ball parameter at level `alpha` is the chi-square tail
/// `P(chi^2_1 > alpha)`.
pub struct GaussianRankOne(pub usize);

impl PsdSampler for GaussianRankOne {
    fn dim(&self) -> usize {
        self.0
    }
    fn sample(&self, rng: &mut SplitMix64) -> DMatrix<f64> {
        let v = nalgebra::DVector::from_fn(self.0, |_, _| rng.next_normal());
        &v * v.transpose()
    }
}

/// Point mass at a fixed PSD matrix; useful for controls (e.g. the
/// rank-deficient `e_1 e_1^T` negative control).
pub struct ConstantPsd(pub DMatrix<f64>);

impl PsdSampler for ConstantPsd {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn sample(&self, _rng: &mut SplitMix64) -> DMatrix<f64> {
        self.0.clone()
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PsdSumSpec {
    pub m: usize,
    pub n_summands: usize,
    pub trials: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Maximum tolerated violation fraction for the pass flag.
    pub failure_budget: f64,
    /// Check `lambda_min >= -1e-8 ||M||` for every drawn sample.
    pub validate_psd: bool,
}

impl PsdSumSpec {
    pub fn new(m: usize, n_summands: usize, trials: usize, seed: u64, alpha: f64) -> Self {
        PsdSumSpec {
            m,
            n_summands,
            trials,
            seed,
            alpha,
            failure_budget: 0.05,
            validate_psd: true,
        }
    }
}

/// Runs the experiment with the default rank-one Gaussian ensemble, taking
/// `beta` from the analytic chi-square tail instead of a Monte Carlo
/// estimate.
pub fn run_default_psd_sum_experiment(spec: &PsdSumSpec) -> Result<ExperimentReport> {
    let beta = chi_square_1_tail(spec.alpha);
    let mut report = run_psd_sum_experiment(&GaussianRankOne(spec.m), spec, beta)?;
    report.notes.push(format!(
        "beta = P(chi^2_1 > {}) = {beta:.6} from the analytic tail oracle",
        spec.alpha
    ));
    Ok(report)
}

/// Runs the PSD-sum experiment with an explicit small-ball parameter `beta`.
pub fn run_psd_sum_experiment(
    sampler: &dyn PsdSampler,
    spec: &PsdSumSpec,
    beta: f64,
) -> Result<ExperimentReport> {
    let t0 = Instant::now();
    if spec.trials == 0 || spec.n_summands == 0 || spec.m == 0 {
        return Err(Error::arg("trials, n_summands and m must be positive"));
    }
    if !(spec.alpha >= 0.0) || !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::arg("need alpha >= 0 and beta in (0, 1]"));
    }
    if sampler.dim() != spec.m {
        return Err(Error::dim(format!(
            "sampler dimension {} does not match spec m = {}",
            sampler.dim(),
            spec.m
        )));
    }
    let root = SeedPath::new(spec.seed);
    let sigma: Vec<f64> = (0..spec.trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = root.child(t as u64).stream();
            let mut sum = DMatrix::<f64>::zeros(spec.m, spec.m);
            for _ in 0..spec.n_summands {
                let mi = sampler.sample(&mut rng);
                if spec.validate_psd {
                    let eig = mi.clone().symmetric_eigen();
                    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
                    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &l| a.min(l));
                    if lmin < -1e-8 * lmax {
                        return Err(Error::arg(format!(
                            "sampler produced a non-PSD matrix (lambda_min = {lmin:.3e})"
                        )));
                    }
                }
                sum += mi;
            }
            sum /= spec.n_summands as f64;
            let sv = sum.singular_values();
            Ok(sv.iter().fold(f64::INFINITY, |a, &v| a.min(v)))
        })
        .collect::<Result<Vec<f64>>>()?;

    let bound = spec.alpha * beta / 2.0;
    let violation = ExperimentReport::violation_fraction(&sigma, bound);
    let check = BoundCheck {
        label: "sigma_m((1/n) sum M_i) vs alpha*beta/2".into(),
        epsilon: None,
        bound_value: bound,
        violation_fraction: violation,
        budget: spec.failure_budget,
        pass: violation <= spec.failure_budget,
    };
    let pass = check.pass;
    let mut params = serde_json::to_value(spec).expect("spec serializes");
    params["beta"] = serde_json::json!(beta);
    Ok(ExperimentReport {
        schema: EXPERIMENT_SCHEMA,
        kind: "psd-sum".into(),
        params,
        trials: spec.trials,
        quantiles: ExperimentReport::standard_quantiles(&sigma),
        trial_columns: vec![("sigma_min".into(), sigma.clone())],
        sigma_min: sigma,
        sigma_max: None,
        checks: vec![check],
        pass,
        notes: Vec::new(),
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_identity_never_violates() {
        // n = 1, M_1 = I: sigma_m = 1 > alpha*beta/2 = 1/4 in every trial.
        let spec = PsdSumSpec::new(4, 1, 20, 3, 0.5);
        let report =
            run_psd_sum_experiment(&ConstantPsd(DMatrix::identity(4, 4)), &spec, 1.0).unwrap();
        assert_eq!(report.checks[0].violation_fraction, 0.0);
        assert!(report.pass);
        assert!(report.sigma_min.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn default_rank_one_ensemble_passes() {
        let spec = PsdSumSpec::new(8, 128, 60, 7, 0.1);
        let report = run_default_psd_sum_experiment(&spec).unwrap();
        assert!(report.pass, "violation {}", report.checks[0].violation_fraction);
        assert!(report.checks[0].violation_fraction <= spec.failure_budget);
    }

    #[test]
    fn adversarial_rank_deficient_control_fails() {
        // Always e_1 e_1^T: sigma_2 of the average is 0, below any positive
        // bound, so the harness must flag the run as failing.
        let mut e11 = DMatrix::zeros(2, 2);
        e11[(0, 0)] = 1.0;
        let spec = PsdSumSpec::new(2, 4, 10, 1, 0.5);
        let report = run_psd_sum_experiment(&ConstantPsd(e11), &spec, 1.0).unwrap();
        assert_eq!(report.checks[0].violation_fraction, 1.0);
        assert!(!report.pass);
    }

    #[test]
    fn non_psd_sampler_is_rejected() {
        let mut neg = DMatrix::zeros(2, 2);
        neg[(0, 0)] = -1.0;
        let spec = PsdSumSpec::new(2, 2, 4, 1, 0.5);
        assert!(run_psd_sum_experiment(&ConstantPsd(neg), &spec, 0.5).is_err());
    }

    #[test]
    fn violation_fraction_recomputes_exactly() {
        let spec = PsdSumSpec::new(4, 16, 30, 11, 0.2);
        let report = run_default_psd_sum_experiment(&spec).unwrap();
        let recomputed =
            ExperimentReport::violation_fraction(&report.sigma_min, report.checks[0].bound_value);
        assert_eq!(recomputed, report.checks[0].violation_fraction);
    }
}
