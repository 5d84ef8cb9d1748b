//! Derivative-free simplex minimization over a box.
//!
//! The criteria being minimized are piecewise-smooth (trimming indicators,
//! compactly supported kernels), so Nelder-Mead with box clamping is used
//! throughout instead of gradient-based search.

/// Nelder-Mead settings: standard reflection/expansion/contraction
/// coefficients, with convergence declared when the simplex value spread and
/// the coordinate spread are both under tolerance.
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub value_tolerance: f64,
    pub parameter_tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            value_tolerance: 1e-8,
            parameter_tolerance: 1e-6,
            max_evaluations: 500,
        }
    }
}

/// Outcome of one minimization run.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

impl NelderMead {
    /// Minimizes `f` from `start` with initial step `step`, keeping every
    /// iterate inside the box `[lower, upper]` by coordinate clamping.
    pub fn minimize<F>(
        &self,
        mut f: F,
        start: &[f64],
        step: f64,
        lower: &[f64],
        upper: &[f64],
    ) -> MinimizeResult
    where
        F: FnMut(&[f64]) -> f64,
    {
        let dim = start.len();
        let mut evaluations = 0usize;
        let mut eval = |x: &[f64], evaluations: &mut usize| {
            *evaluations += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut x0 = start.to_vec();
        clamp(&mut x0, lower, upper);
        if dim == 0 {
            let value = eval(&x0, &mut evaluations);
            return MinimizeResult { x: x0, value, evaluations, converged: true };
        }

        // Initial simplex: start plus a step along each coordinate, stepping
        // inward when the box boundary is in the way.
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        let v0 = eval(&x0, &mut evaluations);
        simplex.push((x0.clone(), v0));
        for k in 0..dim {
            let mut xk = x0.clone();
            let dir = if xk[k] + step <= upper[k] { step } else { -step };
            xk[k] += dir;
            clamp(&mut xk, lower, upper);
            let vk = eval(&xk, &mut evaluations);
            simplex.push((xk, vk));
        }

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut converged = false;

        while evaluations < self.max_evaluations {
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

            let best = simplex[0].1;
            let worst = simplex[dim].1;
            let value_spread = (worst - best).abs();
            let coord_spread = (0..dim)
                .map(|k| {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for (x, _) in &simplex {
                        lo = lo.min(x[k]);
                        hi = hi.max(x[k]);
                    }
                    hi - lo
                })
                .fold(0.0f64, f64::max);
            if value_spread < self.value_tolerance && coord_spread < self.parameter_tolerance {
                converged = true;
                break;
            }

            // Centroid of all but the worst point.
            let mut centroid = vec![0.0; dim];
            for (x, _) in &simplex[..dim] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / dim as f64;
                }
            }

            let propose = |coef: f64| {
                let mut x = vec![0.0; dim];
                for k in 0..dim {
                    x[k] = centroid[k] + coef * (centroid[k] - simplex[dim].0[k]);
                }
                clamp(&mut x, lower, upper);
                x
            };

            let reflected = propose(alpha);
            let fr = eval(&reflected, &mut evaluations);

            if fr < simplex[0].1 {
                let expanded = propose(alpha * gamma);
                let fe = eval(&expanded, &mut evaluations);
                simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            } else if fr < simplex[dim - 1].1 {
                simplex[dim] = (reflected, fr);
            } else {
                let contracted = if fr < simplex[dim].1 {
                    propose(alpha * rho)
                } else {
                    propose(-rho)
                };
                let fc = eval(&contracted, &mut evaluations);
                if fc < simplex[dim].1.min(fr) {
                    simplex[dim] = (contracted, fc);
                } else {
                    // Shrink toward the best vertex.
                    let best_x = simplex[0].0.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        for (v, b) in entry.0.iter_mut().zip(&best_x) {
                            *v = b + sigma * (*v - b);
                        }
                        entry.1 = eval(&entry.0, &mut evaluations);
                        if evaluations >= self.max_evaluations {
                            break;
                        }
                    }
                }
            }
        }

        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let (x, value) = simplex.swap_remove(0);
        MinimizeResult { x, value, evaluations, converged }
    }
}
