//! Minimum singular value of matrices with jointly Gaussian entries,
//! checked against the bound `eps^2 alpha^2 / (m^3 s)` under the global
//! small-ball precondition `P_{alpha,T}(M) >= 1/2` and a norm bound
//! `P(sigma_1 > s) <= 1/8`.
//!
//! For the i.i.d. ensemble the report additionally carries the classical
//! `P(sigma_m <= eps m^{-1/2}) <= eps` consistency checks.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sketch::{SeedPath, SplitMix64};
use crate::xlab::small_ball::{estimate_small_ball, real_to_complex, FnSampler, SmallBallConfig};
use crate::xlab::{BoundCheck, ExperimentReport, MatrixTypeTag, EXPERIMENT_SCHEMA};

/// Seed-path index for the small-ball precheck; trials use 0, 1, 2, ...
const PRECHECK_PATH: u64 = u64::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianEnsembleKind {
    /// `M_0 = 0`, coefficient matrices the standard basis: an i.i.d. matrix.
    IidBasis,
    /// The anti-bidiagonal counterexample ensemble, which violates the
    /// small-ball precondition; useful as a negative control.
    CounterexampleStyle,
}

impl GaussianEnsembleKind {
    pub fn tag(self) -> MatrixTypeTag {
        match self {
            GaussianEnsembleKind::IidBasis => MatrixTypeTag::Real,
            GaussianEnsembleKind::CounterexampleStyle => MatrixTypeTag::RealSymmetric,
        }
    }

    fn sample(self, m: usize, rng: &mut SplitMix64) -> DMatrix<f64> {
        match self {
            GaussianEnsembleKind::IidBasis => DMatrix::from_fn(m, m, |_, _| rng.next_normal()),
            GaussianEnsembleKind::CounterexampleStyle => {
                let g = rng.next_normal();
                crate::xlab::counterexample::counterexample_matrix_with_g(m, g)
                    .expect("m >= 2 validated by the spec")
                    .to_dmatrix()
            }
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct JointlyGaussianSpec {
    pub kind: GaussianEnsembleKind,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    /// Small-ball level alpha in the bound and the precheck.
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    /// Budget multiplier: each check passes iff violation <= c_budget * eps.
    pub c_budget: f64,
    /// Norm bound; estimated as the empirical 7/8 quantile of sigma_1 when
    /// absent.
    pub s_bound: Option<f64>,
    /// Extra `sigma_m <= eps m^{-1/2}` checks (i.i.d. ensemble only).
    pub edelman_epsilons: Vec<f64>,
    pub small_ball_directions: usize,
    pub small_ball_samples: usize,
    pub small_ball_descent: usize,
}

impl JointlyGaussianSpec {
    pub fn new(kind: GaussianEnsembleKind, m: usize, trials: usize, seed: u64) -> Self {
        JointlyGaussianSpec {
            kind,
            m,
            trials,
            seed,
            alpha: 0.5,
            epsilons: vec![0.05, 0.1, 0.2, 0.4],
            c_budget: 1.0,
            s_bound: None,
            edelman_epsilons: vec![0.1, 0.3],
            small_ball_directions: 48,
            small_ball_samples: 2000,
            small_ball_descent: 12,
        }
    }
}

pub fn run_jointly_gaussian_experiment(spec: &JointlyGaussianSpec) -> Result<ExperimentReport> {
    let t0 = Instant::now();
    if spec.m < 2 || spec.trials == 0 {
        return Err(Error::arg("need m >= 2 and at least one trial"));
    }
    if !(spec.alpha >= 0.0) {
        return Err(Error::arg("alpha must be nonnegative"));
    }
    let tag = spec.kind.tag();

    // Small-ball precondition: the experiment refuses to certify ensembles
    // whose estimated global small-ball probability is below 1/2.
    let kind = spec.kind;
    let m = spec.m;
    let sampler = FnSampler {
        dim: m,
        f: Box::new(move |rng| real_to_complex(&kind.sample(m, rng))),
    };
    let sb_cfg = SmallBallConfig {
        alpha: spec.alpha,
        tag,
        n_directions: spec.small_ball_directions,
        n_samples: spec.small_ball_samples,
        descent_rounds: spec.small_ball_descent,
        seed: SeedPath::new(spec.seed).child(PRECHECK_PATH).key(),
    };
    let precheck = estimate_small_ball(&sampler, &sb_cfg)?;
    if precheck.beta_hat < 0.5 {
        return Err(Error::PreconditionFailed(format!(
            "global small-ball estimate {:.4} < 1/2 at alpha = {} (worst-pair surrogate {:.3e})",
            precheck.beta_hat,
            spec.alpha,
            precheck
                .evaluations
                .iter()
                .map(|e| e.surrogate_median)
                .fold(f64::INFINITY, f64::min),
        )));
    }

    // Trials, keyed by index.
    let root = SeedPath::new(spec.seed);
    let pairs: Vec<(f64, f64)> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = root.child(t as u64).stream();
            let mat = spec.kind.sample(spec.m, &mut rng);
            let sv = mat.singular_values();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for &v in sv.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        })
        .collect();
    let sigma_min: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let sigma_max: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    // Norm bound s with empirical P(sigma_1 > s) <= 1/8.
    let (s_bound, s_note) = match spec.s_bound {
        Some(s) => {
            let exceed = sigma_max.iter().filter(|&&v| v > s).count() as f64
                / spec.trials as f64;
            if exceed > 0.125 {
                return Err(Error::PreconditionFailed(format!(
                    "supplied s_bound {s} has empirical P(sigma_1 > s) = {exceed:.3} > 1/8"
                )));
            }
            (s, format!("s_bound supplied: {s}"))
        }
        None => {
            let s = ExperimentReport::quantile(&sigma_max, 0.875);
            (s, format!("s_bound from empirical 7/8 quantile of sigma_1: {s:.4}"))
        }
    };

    let m3s = (spec.m as f64).powi(3) * s_bound;
    let mut checks = Vec::new();
    for &eps in &spec.epsilons {
        let bound = eps * eps * spec.alpha * spec.alpha / m3s;
        let violation = ExperimentReport::violation_fraction(&sigma_min, bound);
        let budget = spec.c_budget * eps;
        checks.push(BoundCheck {
            label: "sigma_m vs eps^2 alpha^2 / (m^3 s)".into(),
            epsilon: Some(eps),
            bound_value: bound,
            violation_fraction: violation,
            budget,
            pass: violation <= budget,
        });
    }
    if spec.kind == GaussianEnsembleKind::IidBasis {
        let sqrt_m = (spec.m as f64).sqrt();
        for &eps in &spec.edelman_epsilons {
            let bound = eps / sqrt_m;
            let violation = ExperimentReport::violation_fraction(&sigma_min, bound);
            let budget = eps + 0.05;
            checks.push(BoundCheck {
                label: "iid consistency: sigma_m vs eps m^{-1/2}".into(),
                epsilon: Some(eps),
                bound_value: bound,
                violation_fraction: violation,
                budget,
                pass: violation <= budget,
            });
        }
    }

    let pass = checks.iter().all(|c| c.pass);
    let mut params = serde_json::to_value(spec).expect("spec serializes");
    params["small_ball_estimate"] = serde_json::json!(precheck.beta_hat);
    params["s_bound_used"] = serde_json::json!(s_bound);
    Ok(ExperimentReport {
        schema: EXPERIMENT_SCHEMA,
        kind: "jointly-gaussian".into(),
        params,
        trials: spec.trials,
        quantiles: ExperimentReport::standard_quantiles(&sigma_min),
        trial_columns: vec![
            ("sigma_min".into(), sigma_min.clone()),
            ("sigma_1".into(), sigma_max.clone()),
        ],
        sigma_min,
        sigma_max: Some(sigma_max),
        checks,
        pass,
        notes: vec![
            format!("small-ball precheck: beta_hat = {:.4} >= 1/2", precheck.beta_hat),
            s_note,
        ],
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_passes_with_edelman_checks() {
        let spec = JointlyGaussianSpec::new(GaussianEnsembleKind::IidBasis, 16, 400, 5);
        let report = run_jointly_gaussian_experiment(&spec).unwrap();
        assert!(report.pass, "checks: {:?}", report.checks);
        // Both check families are present.
        assert_eq!(report.checks.len(), spec.epsilons.len() + 2);
    }

    #[test]
    fn epsilon_zero_never_violates() {
        let mut spec = JointlyGaussianSpec::new(GaussianEnsembleKind::IidBasis, 4, 50, 2);
        spec.epsilons = vec![0.0];
        spec.edelman_epsilons.clear();
        let report = run_jointly_gaussian_experiment(&spec).unwrap();
        assert_eq!(report.checks[0].bound_value, 0.0);
        assert_eq!(report.checks[0].violation_fraction, 0.0);
    }

    #[test]
    fn counterexample_ensemble_fails_precondition() {
        let spec = JointlyGaussianSpec::new(GaussianEnsembleKind::CounterexampleStyle, 4, 50, 3);
        match run_jointly_gaussian_experiment(&spec) {
            Err(Error::PreconditionFailed(msg)) => {
                assert!(msg.contains("small-ball"), "{msg}");
            }
            other => panic!("expected precondition failure, got {other:?}"),
        }
    }

    #[test]
    fn bad_user_s_bound_is_rejected() {
        let mut spec = JointlyGaussianSpec::new(GaussianEnsembleKind::IidBasis, 4, 50, 2);
        spec.s_bound = Some(1e-6);
        assert!(matches!(
            run_jointly_gaussian_experiment(&spec),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn violation_fractions_recompute_exactly() {
        let spec = JointlyGaussianSpec::new(GaussianEnsembleKind::IidBasis, 8, 100, 9);
        let report = run_jointly_gaussian_experiment(&spec).unwrap();
        for c in &report.checks {
            assert_eq!(
                ExperimentReport::violation_fraction(&report.sigma_min, c.bound_value),
                c.violation_fraction
            );
        }
    }
}
