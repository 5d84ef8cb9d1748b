//! Kernel smoothing machinery.
//!
//! Covers the compactly supported kernels, the (log n / n)^{1/5} bandwidth
//! rule, the index-direction density estimate, the censored Nadaraya-Watson
//! link estimator built from synthetic responses, its analytic θ-gradient,
//! and the trimming indicators.

use crate::error::{Error, Result};
use crate::estimate::IndexParam;
use crate::survival::Observation;
use crate::transform::SyntheticSample;

/// Kernel-sum floor defining where a smoothed value is considered valid:
/// the value at `u` is flagged invalid when Σ K((θ'X_i − u)/h) < n·h·ε.
/// Trimming is the intended guard; the floor only prevents division blowups
/// in untrimmed exploratory calls.
pub const DENOMINATOR_FLOOR: f64 = 1e-10;

/// Compactly supported kernel on [-1, 1], symmetric and integrating to one.
///
/// The triweight default is twice continuously differentiable with a
/// Lipschitz second derivative on the whole line; the biweight and
/// Epanechnikov second derivatives jump at the support boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// K(u) = (35/32)(1 - u²)³ on [-1, 1].
    #[default]
    Triweight,
    /// K(u) = (15/16)(1 - u²)² on [-1, 1].
    Biweight,
    /// K(u) = (3/4)(1 - u²) on [-1, 1].
    Epanechnikov,
}

impl Kernel {
    /// K(u); zero outside [-1, 1].
    pub fn eval(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        let w = 1.0 - u * u;
        match self {
            Kernel::Triweight => 35.0 / 32.0 * w * w * w,
            Kernel::Biweight => 15.0 / 16.0 * w * w,
            Kernel::Epanechnikov => 0.75 * w,
        }
    }

    /// K'(u); zero outside [-1, 1].
    pub fn deriv(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        let w = 1.0 - u * u;
        match self {
            Kernel::Triweight => -105.0 / 16.0 * u * w * w,
            Kernel::Biweight => -15.0 / 4.0 * u * w,
            Kernel::Epanechnikov => -1.5 * u,
        }
    }

    /// K''(u); zero outside [-1, 1].
    pub fn deriv2(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        let u2 = u * u;
        match self {
            Kernel::Triweight => -105.0 / 16.0 * (1.0 - u2) * (1.0 - 5.0 * u2),
            Kernel::Biweight => -15.0 / 4.0 * (1.0 - 3.0 * u2),
            Kernel::Epanechnikov => -1.5,
        }
    }
}

/// K(u), K'(u) or K''(u) according to `order` ∈ {0, 1, 2}.
pub fn kernel_eval(kernel: Kernel, u: f64, order: u32) -> f64 {
    match order {
        0 => kernel.eval(u),
        1 => kernel.deriv(u),
        2 => kernel.deriv2(u),
        _ => panic!("kernel derivative order must be 0, 1 or 2"),
    }
}

/// Bandwidth rule h = c_h · s · (log n / n)^{1/5}, where s is the sample
/// standard deviation of the index values. The exponent satisfies
/// n·h⁸ → 0 and n·h⁵ / log n = O(1) simultaneously.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthRule {
    pub constant: f64,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        Self { constant: 1.0 }
    }
}

impl BandwidthRule {
    pub fn new(constant: f64) -> Self {
        Self { constant }
    }

    /// Evaluates the rule on a set of index values θ'X_i.
    pub fn bandwidth(&self, index_values: &[f64]) -> Result<f64> {
        let n = index_values.len();
        if n < 2 {
            return Err(Error::InvalidInput(
                "bandwidth rule needs at least two index values".into(),
            ));
        }
        let nf = n as f64;
        let mean = index_values.iter().sum::<f64>() / nf;
        let var = index_values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
        let s = var.sqrt();
        if s <= 0.0 {
            return Err(Error::DegenerateIndex);
        }
        Ok(self.constant * s * (nf.ln() / nf).powf(0.2))
    }
}

/// Kernel density estimate of the law of θ'X at `u`:
/// n⁻¹ h⁻¹ Σ K((θ'X_i − u)/h).
pub fn index_density(
    kernel: Kernel,
    theta: &IndexParam,
    sample: &[Observation],
    h: f64,
    u: f64,
) -> f64 {
    let n = sample.len() as f64;
    let sum: f64 = sample
        .iter()
        .map(|obs| kernel.eval((theta.index_value(&obs.covariates) - u) / h))
        .sum();
    sum / (n * h)
}

/// Trimming rule restricting criteria to regions where the index density is
/// bounded away from zero.
#[derive(Debug, Clone, PartialEq)]
pub enum Trimming {
    /// Indicator of a fixed covariate box, used for the preliminary stage.
    FixedBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Indicator {f-hat_{θ'X}(θ'x) >= threshold}.
    Density { threshold: f64 },
}

impl Trimming {
    /// Builds a fixed box from per-coordinate sample quantiles.
    pub fn quantile_box(sample: &[Observation], lower_q: f64, upper_q: f64) -> Result<Self> {
        let dim = crate::survival::validate_sample(sample)?;
        if !(0.0..=1.0).contains(&lower_q) || !(0.0..=1.0).contains(&upper_q) || lower_q >= upper_q
        {
            return Err(Error::InvalidInput("invalid quantile range".into()));
        }
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut col: Vec<f64> = sample.iter().map(|o| o.covariates[k]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            lower.push(quantile_sorted(&col, lower_q));
            upper.push(quantile_sorted(&col, upper_q));
        }
        Ok(Trimming::FixedBox { lower, upper })
    }
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Evaluates the trimming indicator at covariate vector `x`: box membership
/// in `FixedBox` mode, {f-hat_{θ'X}(θ'x) >= c} in `Density` mode.
pub fn trimming_indicator(
    spec: &Trimming,
    kernel: Kernel,
    theta: &IndexParam,
    sample: &[Observation],
    h: f64,
    x: &[f64],
) -> bool {
    match spec {
        Trimming::FixedBox { lower, upper } => x
            .iter()
            .zip(lower.iter().zip(upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
        Trimming::Density { threshold } => {
            index_density(kernel, theta, sample, h, theta.index_value(x)) >= *threshold
        }
    }
}

/// Fitted censored Nadaraya-Watson link estimate
/// f-hat(u; θ) = Σ K((θ'X_i − u)/h) Ŷ*_i / Σ K((θ'X_i − u)/h),
/// evaluable at any scalar index value. Values where the kernel sum falls
/// below the floor are flagged invalid rather than extrapolated.
#[derive(Debug, Clone)]
pub struct LinkEstimate {
    theta: IndexParam,
    kernel: Kernel,
    bandwidth: f64,
    dim: usize,
    /// Index values sorted ascending, with responses and covariate rows
    /// permuted to match.
    index_values: Vec<f64>,
    responses: Vec<f64>,
    covariates: Vec<f64>,
}

/// Fits the link estimate from a synthetic sample at direction `theta` and
/// bandwidth `h`. With the oracle synthetic sample (true G) this is the ideal
/// estimator f*.
pub fn link_fit(
    theta: &IndexParam,
    synthetic: &SyntheticSample,
    h: f64,
    kernel: Kernel,
) -> Result<LinkEstimate> {
    let dim = crate::survival::validate_sample(&synthetic.observations)?;
    if dim != theta.dim() {
        return Err(Error::InvalidInput(format!(
            "index dimension {} does not match covariate dimension {dim}",
            theta.dim()
        )));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidInput("bandwidth must be positive".into()));
    }
    let n = synthetic.len();
    let mut order: Vec<usize> = (0..n).collect();
    let raw: Vec<f64> = synthetic
        .observations
        .iter()
        .map(|o| theta.index_value(&o.covariates))
        .collect();
    order.sort_by(|&a, &b| raw[a].partial_cmp(&raw[b]).unwrap());

    let mut index_values = Vec::with_capacity(n);
    let mut responses = Vec::with_capacity(n);
    let mut covariates = Vec::with_capacity(n * dim);
    for &i in &order {
        index_values.push(raw[i]);
        responses.push(synthetic.y_star[i]);
        covariates.extend_from_slice(&synthetic.observations[i].covariates);
    }

    Ok(LinkEstimate {
        theta: theta.clone(),
        kernel,
        bandwidth: h,
        dim,
        index_values,
        responses,
        covariates,
    })
}

impl LinkEstimate {
    pub fn theta(&self) -> &IndexParam {
        &self.theta
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.index_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_values.is_empty()
    }

    /// Range of training points within kernel support of `u`.
    fn window(&self, u: f64) -> std::ops::Range<usize> {
        let lo = self.index_values.partition_point(|&v| v < u - self.bandwidth);
        let hi = self.index_values.partition_point(|&v| v <= u + self.bandwidth);
        lo..hi
    }

    /// Raw kernel sums (denominator, numerator) at `u`.
    fn sums(&self, u: f64) -> (f64, f64) {
        let mut den = 0.0;
        let mut num = 0.0;
        for i in self.window(u) {
            let k = self.kernel.eval((self.index_values[i] - u) / self.bandwidth);
            den += k;
            num += k * self.responses[i];
        }
        (den, num)
    }

    fn floor(&self) -> f64 {
        self.index_values.len() as f64 * self.bandwidth * DENOMINATOR_FLOOR
    }

    /// True when the kernel mass at `u` clears the validity floor.
    pub fn is_valid(&self, u: f64) -> bool {
        self.sums(u).0 >= self.floor()
    }

    /// f-hat(u; θ), or `None` where the denominator is below the floor.
    pub fn value(&self, u: f64) -> Option<f64> {
        let (den, num) = self.sums(u);
        if den < self.floor() {
            None
        } else {
            Some(num / den)
        }
    }

    /// f-hat(u; θ), raising "empty neighborhood" at invalid points.
    pub fn value_checked(&self, u: f64) -> Result<f64> {
        self.value(u).ok_or(Error::EmptyNeighborhood { at: u })
    }

    /// Leave-one-out value at a training point: the kernel sums at `u` minus
    /// the point's own contribution K(0)·(1, response). Used by the fitting
    /// criteria so no observation scores its own prediction; without this the
    /// criterion rewards directions that isolate points from their neighbors.
    pub fn value_leave_one_out(&self, u: f64, own_response: f64) -> Option<f64> {
        let (den, num) = self.sums(u);
        let k0 = self.kernel.eval(0.0);
        let den = den - k0;
        let num = num - k0 * own_response;
        if den < self.floor() {
            None
        } else {
            Some(num / den)
        }
    }
}

/// Analytic gradient of θ ↦ f-hat(θ'x; θ) at covariate vector `x`, by the
/// quotient rule with K'. Component 0 is reported but unused downstream
/// (the first coordinate of θ is pinned). Differentiation of G-hat and of
/// the trimming set is excluded.
pub fn link_gradient(estimate: &LinkEstimate, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != estimate.dim {
        return Err(Error::InvalidInput(format!(
            "gradient point has dimension {}, expected {}",
            x.len(),
            estimate.dim
        )));
    }
    let u = estimate.theta.index_value(x);
    let h = estimate.bandwidth;
    let d = estimate.dim;

    let mut den = 0.0;
    let mut num = 0.0;
    let mut dden = vec![0.0; d];
    let mut dnum = vec![0.0; d];
    for i in estimate.window(u) {
        let z = (estimate.index_values[i] - u) / h;
        let k = estimate.kernel.eval(z);
        let kp = estimate.kernel.deriv(z) / h;
        den += k;
        num += k * estimate.responses[i];
        let row = &estimate.covariates[i * d..(i + 1) * d];
        for (j, &xj) in row.iter().enumerate() {
            let dz = xj - x[j];
            dden[j] += kp * dz;
            dnum[j] += kp * dz * estimate.responses[i];
        }
    }
    if den < estimate.floor() {
        return Err(Error::EmptyNeighborhood { at: u });
    }

    let mut grad = vec![0.0; d];
    for j in 0..d {
        grad[j] = (dnum[j] * den - num * dden[j]) / (den * den);
    }
    Ok(grad)
}
