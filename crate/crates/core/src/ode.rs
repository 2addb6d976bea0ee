//! Embedded Dormand-Prince 5(4) integrator for complex-valued state vectors.
//!
//! Step control follows the standard scaled-RMS error norm with a PI-free
//! controller (0.9 err^(-1/5), growth clamped to [0.2, 5]). A per-step hook
//! lets the caller renormalize or re-orthonormalize the state after each
//! accepted step, which invalidates FSAL reuse, so all seven stages are
//! evaluated every step.

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const STAGES: usize = 7;

const C: [f64; STAGES] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

const B5: [f64; STAGES] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

const B4: [f64; STAGES] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone)]
pub struct AdaptiveRk {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for AdaptiveRk {
    fn default() -> Self {
        AdaptiveRk {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            initial_step: 1e-3,
            max_step: 0.05,
            min_step: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    pub last_step: f64,
}

impl AdaptiveRk {
    /// Integrate dy/dt = rhs(t, y) from t0 to t1; `post_step` runs after each
    /// accepted step and may modify the state in place.
    pub fn integrate<F, P>(
        &self,
        y: &mut Array1<C64>,
        t0: f64,
        t1: f64,
        mut rhs: F,
        mut post_step: P,
        stats: &mut StepStats,
    ) -> Result<()>
    where
        F: FnMut(f64, &ArrayView1<C64>, &mut Array1<C64>) -> Result<()>,
        P: FnMut(f64, &mut Array1<C64>) -> Result<()>,
    {
        if t1 <= t0 {
            return Ok(());
        }
        let n = y.len();
        let mut k: Vec<Array1<C64>> = (0..STAGES).map(|_| Array1::zeros(n)).collect();
        let mut work = Array1::<C64>::zeros(n);
        let mut y5 = Array1::<C64>::zeros(n);

        let mut t = t0;
        let mut h = if stats.last_step > 0.0 {
            stats.last_step
        } else {
            self.initial_step
        }
        .min(self.max_step)
        .min(t1 - t0);

        let mut consecutive_failures = 0usize;
        while t < t1 {
            if h < self.min_step {
                return Err(Error::StepUnderflow { time: t, step: h });
            }
            h = h.min(t1 - t);

            // evaluate the stages; a failing right-hand side (e.g. the state
            // left the domain where the equations are well defined during a
            // too-ambitious trial step) rejects the step instead of aborting
            let stage_result: Result<()> = (|| {
                rhs(t, &y.view(), &mut k[0])?;
                stats.rhs_evaluations += 1;
                for stage in 1..STAGES {
                    work.assign(y);
                    for (prev, &coeff) in A[stage][..stage].iter().enumerate() {
                        if coeff != 0.0 {
                            let scale = C64::new(coeff * h, 0.0);
                            work.zip_mut_with(&k[prev], |acc, kv| *acc += scale * kv);
                        }
                    }
                    rhs(t + C[stage] * h, &work.view(), &mut k[stage])?;
                    stats.rhs_evaluations += 1;
                }
                Ok(())
            })();
            if let Err(e) = stage_result {
                consecutive_failures += 1;
                if consecutive_failures > 60 {
                    return Err(e);
                }
                stats.rejected += 1;
                h *= 0.25;
                continue;
            }

            // 5th-order solution and embedded error estimate
            y5.assign(y);
            for stage in 0..STAGES {
                if B5[stage] != 0.0 {
                    let scale = C64::new(B5[stage] * h, 0.0);
                    y5.zip_mut_with(&k[stage], |acc, kv| *acc += scale * kv);
                }
            }
            let mut err_sq = 0.0;
            for i in 0..n {
                let mut e = C64::new(0.0, 0.0);
                for stage in 0..STAGES {
                    let d = B5[stage] - B4[stage];
                    if d != 0.0 {
                        e += k[stage][i] * (d * h);
                    }
                }
                let scale = self.abs_tol + self.rel_tol * y[i].norm().max(y5[i].norm());
                let r = e.norm() / scale;
                err_sq += r * r;
            }
            let err = (err_sq / n as f64).sqrt();
            if !err.is_finite() {
                consecutive_failures += 1;
                if consecutive_failures > 60 {
                    return Err(Error::PropagationAborted {
                        time: t,
                        reason: "non-finite error estimate".into(),
                    });
                }
                stats.rejected += 1;
                h *= 0.25;
                continue;
            }

            if err <= 1.0 {
                consecutive_failures = 0;
                t += h;
                y.assign(&y5);
                post_step(t, y)?;
                stats.accepted += 1;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (h * factor).min(self.max_step);
                stats.last_step = h;
            } else {
                stats.rejected += 1;
                let factor = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                h *= factor;
            }
        }
        Ok(())
    }
}
