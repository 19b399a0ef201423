use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every numerical threshold used by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceProfile {
    /// Tangent vectors with `F(x, y)` below this are treated as zero.
    pub slit_epsilon: f64,
    pub integrator_atol: f64,
    pub integrator_rtol: f64,
    pub integrator_max_steps: usize,
    /// Step of the central-difference oracles.
    pub derivative_step: f64,
    /// Minimum Hessian eigenvalue ratio for a Minkowski norm.
    pub hessian_ratio: f64,
    pub flag_degeneracy: f64,
    pub berwald_tol: f64,
    pub riemannian_tol: f64,
    pub reversible_tol: f64,
    pub classifier_directions: usize,
    pub classifier_base_points: usize,
    pub rank_cutoff: f64,
    pub verifier_tol: f64,
    pub bvp_tol: f64,
    pub bvp_max_iterations: usize,
    pub bvp_multistarts: usize,
    /// Target F-length of one multiple-shooting segment.
    pub bvp_segment_length: f64,
    pub horizon: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        ToleranceProfile {
            slit_epsilon: 1e-9,
            integrator_atol: 1e-10,
            integrator_rtol: 1e-10,
            integrator_max_steps: 200_000,
            derivative_step: 1e-3,
            hessian_ratio: 1e-8,
            flag_degeneracy: 1e-10,
            berwald_tol: 1e-7,
            riemannian_tol: 1e-8,
            reversible_tol: 1e-10,
            classifier_directions: 256,
            classifier_base_points: 8,
            rank_cutoff: 1e-6,
            verifier_tol: 1e-6,
            bvp_tol: 1e-11,
            bvp_max_iterations: 40,
            bvp_multistarts: 8,
            bvp_segment_length: 2.0,
            horizon: 10.0,
        }
    }
}

impl ToleranceProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("slit_epsilon", self.slit_epsilon),
            ("integrator_atol", self.integrator_atol),
            ("integrator_rtol", self.integrator_rtol),
            ("derivative_step", self.derivative_step),
            ("hessian_ratio", self.hessian_ratio),
            ("flag_degeneracy", self.flag_degeneracy),
            ("berwald_tol", self.berwald_tol),
            ("riemannian_tol", self.riemannian_tol),
            ("reversible_tol", self.reversible_tol),
            ("rank_cutoff", self.rank_cutoff),
            ("verifier_tol", self.verifier_tol),
            ("bvp_tol", self.bvp_tol),
            ("bvp_segment_length", self.bvp_segment_length),
            ("horizon", self.horizon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter {
                    name: name.into(),
                    reason: "must be finite and strictly positive".into(),
                });
            }
        }
        let counts = [
            ("integrator_max_steps", self.integrator_max_steps),
            ("classifier_directions", self.classifier_directions),
            ("classifier_base_points", self.classifier_base_points),
            ("bvp_max_iterations", self.bvp_max_iterations),
            ("bvp_multistarts", self.bvp_multistarts),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Parameter {
                    name: name.into(),
                    reason: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }

    /// Same profile with integrator tolerances tightened to `tol`.
    pub fn with_integrator_tol(&self, tol: f64) -> Self {
        ToleranceProfile {
            integrator_atol: tol,
            integrator_rtol: tol,
            ..self.clone()
        }
    }
}
