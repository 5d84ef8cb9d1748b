//! Product-limit estimation for right-censored samples.
//!
//! Provides the Kaplan-Meier estimators of the event distribution F, the
//! censoring distribution G and the observed-time distribution H, the
//! per-observation Kaplan-Meier masses derived from F-hat, the "ideal"
//! weights built from a known censoring law, and the tail integral
//! C(y) = ∫_{s<=y} dG(s) / ((1-H(s))(1-G(s))) used by the variance plug-in.

use crate::error::{Error, Result};

/// One censored data point: observed time `T = Y ∧ C`, event indicator
/// `δ = 1{Y <= C}`, and covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Observed time, the minimum of the latent response and censoring time.
    pub time: f64,
    /// True when the response was observed (uncensored).
    pub event: bool,
    /// Covariates; every observation in a sample must share the same length.
    pub covariates: Vec<f64>,
}

impl Observation {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Self { time, event, covariates }
    }
}

/// Checks a sample is nonempty, has finite times, and constant covariate
/// dimension. Returns that dimension.
pub(crate) fn validate_sample(sample: &[Observation]) -> Result<usize> {
    let first = sample.first().ok_or(Error::EmptySample)?;
    let dim = first.covariates.len();
    for (i, obs) in sample.iter().enumerate() {
        if !obs.time.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite time at observation {i}"
            )));
        }
        if obs.covariates.len() != dim {
            return Err(Error::InvalidInput(format!(
                "covariate dimension {} at observation {i}, expected {dim}",
                obs.covariates.len()
            )));
        }
    }
    Ok(dim)
}

/// A distribution function evaluable with left limits. Implemented by
/// [`StepCdf`] and by the continuous censoring laws of the simulation module,
/// so the same transforms accept fitted and true distributions.
pub trait Cdf {
    /// Right-continuous value at `t`.
    fn value(&self, t: f64) -> f64;
    /// Left limit at `t`; equals `value(t)` for continuous laws.
    fn value_minus(&self, t: f64) -> f64;
}

/// Right-continuous step distribution function with left-limit queries.
///
/// Total mass may stay below one: the product-limit estimator is defective
/// when the largest observation is censored, and the remaining mass is not
/// redistributed.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    jump_times: Vec<f64>,
    cum_mass: Vec<f64>,
}

impl StepCdf {
    /// Builds a step function from strictly increasing jump times and the
    /// cumulative mass after each jump.
    pub fn from_cumulative(jump_times: Vec<f64>, cum_mass: Vec<f64>) -> Result<Self> {
        if jump_times.len() != cum_mass.len() {
            return Err(Error::InvalidInput(
                "jump_times and cum_mass lengths differ".into(),
            ));
        }
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_m = 0.0;
        for (&t, &m) in jump_times.iter().zip(&cum_mass) {
            if t.is_nan() || t <= prev_t {
                return Err(Error::InvalidInput(
                    "jump times must be strictly increasing".into(),
                ));
            }
            if m.is_nan() || m < prev_m || m > 1.0 + 1e-12 {
                return Err(Error::InvalidInput(
                    "cumulative mass must be nondecreasing and at most one".into(),
                ));
            }
            prev_t = t;
            prev_m = m;
        }
        Ok(Self { jump_times, cum_mass })
    }

    /// The degenerate distribution with no mass anywhere (G ≡ 0).
    pub fn zero() -> Self {
        Self { jump_times: Vec::new(), cum_mass: Vec::new() }
    }

    /// Jump locations in increasing order.
    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    /// Mass increments at each jump, paired with the jump time.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.jump_times.iter().zip(&self.cum_mass).scan(0.0, |prev, (&t, &m)| {
            let mass = m - *prev;
            *prev = m;
            Some((t, mass))
        })
    }

    /// Total cumulative mass; below one for defective estimates.
    pub fn total_mass(&self) -> f64 {
        self.cum_mass.last().copied().unwrap_or(0.0)
    }
}

impl Cdf for StepCdf {
    fn value(&self, t: f64) -> f64 {
        // Largest jump time <= t, by strict-inequality partition (no epsilon).
        let idx = self.jump_times.partition_point(|&jt| jt <= t);
        if idx == 0 {
            0.0
        } else {
            self.cum_mass[idx - 1]
        }
    }

    fn value_minus(&self, t: f64) -> f64 {
        let idx = self.jump_times.partition_point(|&jt| jt < t);
        if idx == 0 {
            0.0
        } else {
            self.cum_mass[idx - 1]
        }
    }
}

/// Which distribution the product-limit estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmTarget {
    /// The event (response) distribution F; jumps sit at uncensored times.
    Event,
    /// The censoring distribution G; the roles of δ are flipped.
    Censoring,
}

/// Sorted observation indices: time ascending, events before censorings at
/// tied times (the model assumes P(Y = C) = 0, so ties across types only
/// arise in degenerate inputs).
fn sorted_indices(sample: &[Observation]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.sort_by(|&a, &b| {
        sample[a]
            .time
            .partial_cmp(&sample[b].time)
            .unwrap()
            .then(sample[b].event.cmp(&sample[a].event))
    });
    order
}

/// Runs the product-limit recursion. Calls `on_jump(obs_index, per_obs_mass)`
/// for every observation contributing a jump, and returns the step function.
fn product_limit<F>(sample: &[Observation], target: KmTarget, mut on_jump: F) -> Result<StepCdf>
where
    F: FnMut(usize, f64),
{
    validate_sample(sample)?;
    let n = sample.len();
    let order = sorted_indices(sample);

    let mut jump_times = Vec::new();
    let mut cum_mass = Vec::new();
    let mut survival = 1.0;
    // Until an observation of the non-jump type leaves the risk set, the
    // product telescopes to (cumulative jumps)/n; computing it that way keeps
    // the no-censoring degeneracy exact, not just close.
    let mut exact_mode = true;
    let mut exact_jumps = 0usize;

    let mut i = 0;
    while i < n {
        let t = sample[order[i]].time;
        // Events first within the tie group, matching `sorted_indices`.
        let mut events = 0usize;
        let mut censored = 0usize;
        let group_start = i;
        while i < n && sample[order[i]].time == t {
            if sample[order[i]].event {
                events += 1;
            } else {
                censored += 1;
            }
            i += 1;
        }

        let (jump_count, removed_before) = match target {
            KmTarget::Event => (events, 0),
            // For G-hat the true events leave the risk set before the
            // censoring jumps at the same time.
            KmTarget::Censoring => (censored, events),
        };
        if removed_before > 0 {
            exact_mode = false;
        }
        let at_risk = n - group_start - removed_before;

        if jump_count > 0 {
            let per_obs;
            if exact_mode {
                exact_jumps += jump_count;
                let cum = exact_jumps as f64 / n as f64;
                survival = 1.0 - cum;
                jump_times.push(t);
                cum_mass.push(cum);
                per_obs = 1.0 / n as f64;
            } else {
                let d = jump_count as f64;
                let total_jump = survival * d / at_risk as f64;
                survival *= 1.0 - d / at_risk as f64;
                jump_times.push(t);
                cum_mass.push(1.0 - survival);
                // Tied jumps split the group mass evenly.
                per_obs = total_jump / d;
            }
            for &oi in &order[group_start..i] {
                let jumps_here = match target {
                    KmTarget::Event => sample[oi].event,
                    KmTarget::Censoring => !sample[oi].event,
                };
                if jumps_here {
                    on_jump(oi, per_obs);
                }
            }
        }

        let removed_after = match target {
            KmTarget::Event => censored,
            KmTarget::Censoring => 0,
        };
        if removed_after > 0 {
            exact_mode = false;
        }
    }

    StepCdf::from_cumulative(jump_times, cum_mass)
}

/// Product-limit (Kaplan-Meier) estimator of F (`target = Event`) or G
/// (`target = Censoring`).
pub fn km_fit(sample: &[Observation], target: KmTarget) -> Result<StepCdf> {
    product_limit(sample, target, |_, _| {})
}

/// Empirical distribution function of the observed times (H-hat).
pub fn empirical_cdf(sample: &[Observation]) -> Result<StepCdf> {
    validate_sample(sample)?;
    let n = sample.len() as f64;
    let mut times: Vec<f64> = sample.iter().map(|o| o.time).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut jump_times = Vec::new();
    let mut cum_mass = Vec::new();
    let mut seen = 0usize;
    let mut i = 0;
    while i < times.len() {
        let t = times[i];
        while i < times.len() && times[i] == t {
            seen += 1;
            i += 1;
        }
        jump_times.push(t);
        cum_mass.push(seen as f64 / n);
    }
    StepCdf::from_cumulative(jump_times, cum_mass)
}

/// Observations together with their per-observation Kaplan-Meier masses.
/// Censored observations carry zero weight; with no censoring every weight
/// is 1/n.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub observations: Vec<Observation>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Total mass Σ W_in = F-hat at the largest observation; equals one iff
    /// that observation is uncensored.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Kaplan-Meier weights W_in, read off the jumps of the product-limit F-hat
/// (tied uncensored times share the group mass evenly). The identity
/// W_in = n⁻¹ δ_i / (1 - G-hat(T_i-)) against the censoring fit holds as a
/// testable consequence, not as the construction.
pub fn km_weights(sample: &[Observation]) -> Result<WeightedSample> {
    let mut weights = vec![0.0; sample.len()];
    product_limit(sample, KmTarget::Event, |i, w| weights[i] = w)?;
    Ok(WeightedSample { observations: sample.to_vec(), weights })
}

/// Ideal weights W_i* = n⁻¹ δ_i / (1 - G(T_i-)) computed from a known
/// censoring law; a simulation-only oracle.
pub fn ideal_weights(sample: &[Observation], g_true: &impl Cdf) -> Result<WeightedSample> {
    validate_sample(sample)?;
    let n = sample.len() as f64;
    let mut weights = vec![0.0; sample.len()];
    for (w, obs) in weights.iter_mut().zip(sample) {
        if obs.event {
            let keep = 1.0 - g_true.value_minus(obs.time);
            if keep <= 0.0 {
                return Err(Error::WeightSingularity { time: obs.time });
            }
            *w = 1.0 / (n * keep);
        }
    }
    Ok(WeightedSample { observations: sample.to_vec(), weights })
}

/// Value of the plug-in tail integral, with a flag set when the sum had to be
/// truncated because 1 - H-hat or 1 - G-hat vanished at a jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailIntegral {
    pub value: f64,
    pub truncated: bool,
}

fn c_integral_impl(g_hat: &StepCdf, h_hat: &StepCdf, y: f64, strict: bool) -> TailIntegral {
    let mut value = 0.0;
    let mut truncated = false;
    for (s, mass) in g_hat.jumps() {
        let in_range = if strict { s < y } else { s <= y };
        if !in_range {
            break;
        }
        let h_surv = 1.0 - h_hat.value(s);
        let g_surv = 1.0 - g_hat.value(s);
        if h_surv <= 0.0 || g_surv <= 0.0 {
            truncated = true;
            break;
        }
        value += mass / (h_surv * g_surv);
    }
    TailIntegral { value, truncated }
}

/// Plug-in C(y) = Σ_{s <= y} ΔG-hat(s) / ((1 - H-hat(s))(1 - G-hat(s))),
/// summed over the jumps of G-hat. Nondecreasing in `y`.
pub fn c_integral(g_hat: &StepCdf, h_hat: &StepCdf, y: f64) -> TailIntegral {
    c_integral_impl(g_hat, h_hat, y, false)
}

/// Left-limit variant C(y-): the same sum restricted to jumps strictly below
/// `y`. Used by the influence-function plug-in, where the inner integral runs
/// over v < y.
pub fn c_integral_left(g_hat: &StepCdf, h_hat: &StepCdf, y: f64) -> TailIntegral {
    c_integral_impl(g_hat, h_hat, y, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(t: f64, event: bool) -> Observation {
        Observation::new(t, event, vec![0.0])
    }

    fn three_point() -> Vec<Observation> {
        vec![obs(1.0, true), obs(2.0, false), obs(3.0, true)]
    }

    #[test]
    fn km_event_three_point() {
        let f = km_fit(&three_point(), KmTarget::Event).unwrap();
        assert_eq!(f.jump_times(), &[1.0, 3.0]);
        let jumps: Vec<(f64, f64)> = f.jumps().collect();
        assert!((jumps[0].1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((jumps[1].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((f.value(3.0) - 1.0).abs() < 1e-15);
        assert!((f.value(2.5) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn km_censoring_three_point() {
        let g = km_fit(&three_point(), KmTarget::Censoring).unwrap();
        assert_eq!(g.jump_times(), &[2.0]);
        assert!((g.value(2.0) - 0.5).abs() < 1e-15);
        assert!((g.value_minus(2.0) - 0.0).abs() < 1e-15);
        assert!((g.total_mass() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn km_no_censoring_is_empirical_cdf() {
        let sample: Vec<Observation> =
            [0.4, 1.7, 0.9, 2.2, 1.1].iter().map(|&t| obs(t, true)).collect();
        let f = km_fit(&sample, KmTarget::Event).unwrap();
        let h = empirical_cdf(&sample).unwrap();
        assert_eq!(f, h);
        let w = km_weights(&sample).unwrap();
        for &wi in &w.weights {
            assert!((wi - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn km_empty_sample_errors() {
        assert!(matches!(km_fit(&[], KmTarget::Event), Err(Error::EmptySample)));
        assert!(matches!(km_weights(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn km_weights_three_point() {
        let w = km_weights(&three_point()).unwrap();
        assert!((w.weights[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.weights[1], 0.0);
        assert!((w.weights[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn km_weights_single_censored_point() {
        let w = km_weights(&[obs(5.0, false)]).unwrap();
        assert_eq!(w.weights, vec![0.0]);
        assert_eq!(w.total_mass(), 0.0);
    }

    #[test]
    fn km_weights_tied_uncensored_split_evenly() {
        let sample = vec![obs(1.0, true), obs(1.0, true), obs(2.0, false), obs(3.0, true)];
        let w = km_weights(&sample).unwrap();
        assert!((w.weights[0] - 0.25).abs() < 1e-15);
        assert!((w.weights[1] - 0.25).abs() < 1e-15);
        assert_eq!(w.weights[2], 0.0);
        assert!((w.weights[3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn defective_when_largest_censored() {
        let sample = vec![obs(1.0, true), obs(2.0, true), obs(3.0, false)];
        let f = km_fit(&sample, KmTarget::Event).unwrap();
        assert!(f.total_mass() < 1.0);
        let w = km_weights(&sample).unwrap();
        assert!((w.total_mass() - f.total_mass()).abs() < 1e-15);
    }

    #[test]
    fn ideal_weights_no_censoring_law() {
        let sample = three_point();
        let w = ideal_weights(&sample, &StepCdf::zero()).unwrap();
        assert!((w.weights[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.weights[1], 0.0);
        assert!((w.weights[2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ideal_weights_formula_single_point() {
        let g = StepCdf::from_cumulative(vec![0.5], vec![0.5]).unwrap();
        let w = ideal_weights(&[obs(1.0, true)], &g).unwrap();
        assert!((w.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ideal_weights_singularity() {
        let g = StepCdf::from_cumulative(vec![0.5], vec![1.0]).unwrap();
        let err = ideal_weights(&[obs(1.0, true)], &g).unwrap_err();
        assert!(matches!(err, Error::WeightSingularity { .. }));
    }

    #[test]
    fn km_weights_approach_ideal_weights() {
        // The fitted weights track the known-G ideal weights, and the worst
        // gap shrinks as the sample grows.
        use crate::simulate::{dgp_sample, ConfigId, SimulationConfig};
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        let law = ConfigId::Config2.censoring_law(0.16);
        let mut gaps = Vec::new();
        for n in [200usize, 800] {
            let config = SimulationConfig::new(ConfigId::Config2, 0.16, n);
            let mut worst_median = Vec::new();
            for rep in 0..30u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                rng.set_stream(rep + 1);
                let s = dgp_sample(&config, &mut rng);
                let fitted = km_weights(&s.observations).unwrap();
                let ideal = ideal_weights(&s.observations, &law).unwrap();
                let worst = fitted
                    .weights
                    .iter()
                    .zip(&ideal.weights)
                    .map(|(a, b)| (a - b).abs() * n as f64)
                    .fold(0.0f64, f64::max);
                worst_median.push(worst);
            }
            worst_median.sort_by(|a, b| a.partial_cmp(b).unwrap());
            gaps.push(worst_median[15]);
        }
        assert!(gaps[1] < gaps[0], "normalized weight gaps did not shrink: {gaps:?}");
    }

    #[test]
    fn c_integral_no_censoring() {
        let g = StepCdf::zero();
        let h = empirical_cdf(&three_point()).unwrap();
        for y in [0.0, 1.0, 10.0] {
            let c = c_integral(&g, &h, y);
            assert_eq!(c.value, 0.0);
            assert!(!c.truncated);
        }
    }

    #[test]
    fn c_integral_single_jump_by_hand() {
        // One censoring jump of mass 1/2 at s = 2 with H-hat(2) = 1/2:
        // C(y) = (1/2) / ((1/2)(1/2)) = 2 for y >= 2, 0 below.
        let g = StepCdf::from_cumulative(vec![2.0], vec![0.5]).unwrap();
        let h = StepCdf::from_cumulative(vec![2.0, 4.0], vec![0.5, 1.0]).unwrap();
        assert_eq!(c_integral(&g, &h, 1.9).value, 0.0);
        assert!((c_integral(&g, &h, 2.0).value - 2.0).abs() < 1e-15);
        assert!((c_integral(&g, &h, 9.0).value - 2.0).abs() < 1e-15);
        // Left-limit variant excludes the jump at exactly y = 2.
        assert_eq!(c_integral_left(&g, &h, 2.0).value, 0.0);
    }

    #[test]
    fn c_integral_truncates_at_saturated_h() {
        // Largest observation censored: G-hat jumps where H-hat is already 1.
        let sample = vec![obs(1.0, true), obs(2.0, false)];
        let g = km_fit(&sample, KmTarget::Censoring).unwrap();
        let h = empirical_cdf(&sample).unwrap();
        let c = c_integral(&g, &h, 5.0);
        assert!(c.truncated);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn step_cdf_queries() {
        let f = StepCdf::from_cumulative(vec![1.0, 2.0], vec![0.25, 0.75]).unwrap();
        assert_eq!(f.value(0.5), 0.0);
        assert_eq!(f.value(1.0), 0.25);
        assert_eq!(f.value_minus(1.0), 0.0);
        assert_eq!(f.value(1.5), 0.25);
        assert_eq!(f.value_minus(2.0), 0.25);
        assert_eq!(f.value(2.0), 0.75);
        assert_eq!(f.value(99.0), 0.75);
    }

    /// Strategy: samples with continuous-ish times (no ties across event
    /// types by construction: all times distinct).
    fn distinct_time_samples() -> impl Strategy<Value = Vec<Observation>> {
        prop::collection::vec((0.01f64..100.0, prop::bool::ANY), 1..50).prop_map(|raw| {
            let mut times: Vec<f64> = raw.iter().map(|(t, _)| *t).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup();
            times
                .into_iter()
                .zip(raw)
                .map(|(t, (_, ev))| obs(t, ev))
                .collect()
        })
    }

    proptest! {
        /// Satten-Datta identity: W_in = n⁻¹ δ_i / (1 - G-hat(T_i-)).
        #[test]
        fn satten_datta_identity(sample in distinct_time_samples()) {
            let n = sample.len() as f64;
            let w = km_weights(&sample).unwrap();
            let g = km_fit(&sample, KmTarget::Censoring).unwrap();
            for (obs, &wi) in sample.iter().zip(&w.weights) {
                let expect = if obs.event {
                    1.0 / (n * (1.0 - g.value_minus(obs.time)))
                } else {
                    0.0
                };
                prop_assert!((wi - expect).abs() < 1e-12);
            }
        }

        /// Mass conservation: Σ W_in = F-hat(T_(n)) <= 1, equality iff the
        /// largest observation is uncensored.
        #[test]
        fn mass_conservation(sample in distinct_time_samples()) {
            let w = km_weights(&sample).unwrap();
            let f = km_fit(&sample, KmTarget::Event).unwrap();
            let total = w.total_mass();
            prop_assert!(total <= 1.0 + 1e-12);
            prop_assert!((total - f.total_mass()).abs() < 1e-12);
            let last = sample
                .iter()
                .max_by(|a, b| a.time.partial_cmp(&b.time).unwrap())
                .unwrap();
            if last.event {
                prop_assert!((total - 1.0).abs() < 1e-12);
            } else {
                prop_assert!(total < 1.0);
            }
        }

        /// Step functions are monotone with value_minus(t) <= value(t).
        #[test]
        fn step_cdf_monotone(sample in distinct_time_samples(), t in -1.0f64..101.0) {
            for target in [KmTarget::Event, KmTarget::Censoring] {
                let f = km_fit(&sample, target).unwrap();
                prop_assert!(f.value_minus(t) <= f.value(t) + 1e-15);
                prop_assert!(f.value(t) <= f.value(t + 0.5) + 1e-15);
                let masses: Vec<f64> = f.jumps().map(|(_, m)| m).collect();
                for m in masses {
                    prop_assert!(m >= -1e-15);
                }
            }
        }

        /// C(y) is nondecreasing in y on fitted pairs.
        #[test]
        fn c_integral_monotone(sample in distinct_time_samples(), y1 in 0.0f64..100.0, y2 in 0.0f64..100.0) {
            let g = km_fit(&sample, KmTarget::Censoring).unwrap();
            let h = empirical_cdf(&sample).unwrap();
            let (lo, hi) = if y1 <= y2 { (y1, y2) } else { (y2, y1) };
            prop_assert!(c_integral(&g, &h, lo).value <= c_integral(&g, &h, hi).value + 1e-12);
        }
    }
}
