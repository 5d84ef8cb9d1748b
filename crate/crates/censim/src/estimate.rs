//! M-estimation of the index direction.
//!
//! The pipeline fits the censoring distribution, builds synthetic responses,
//! locates a preliminary direction on a coarse grid with box trimming,
//! freezes a density-based trimming set there, and then minimizes the chosen
//! criterion (Kaplan-Meier weighted least squares or synthetic-data least
//! squares) by Nelder-Mead over a shrinking box around the preliminary
//! estimate. A plug-in sandwich estimate of the asymptotic covariance is
//! computed from the fitted influence functions.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimize::NelderMead;
use crate::smooth::{
    index_density, link_fit, link_gradient, BandwidthRule, Kernel, LinkEstimate, Trimming,
};
use crate::survival::{
    empirical_cdf, km_fit, km_weights, validate_sample, Cdf, KmTarget, Observation, StepCdf,
    WeightedSample,
};
use crate::transform::{synthetic_transform, SyntheticSample};

/// Index direction with the first coordinate pinned to one, the
/// identification normalization of the model.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct IndexParam {
    theta: Vec<f64>,
}

impl IndexParam {
    /// Validates that `theta[0] == 1` exactly and all entries are finite.
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidInput("index parameter is empty".into()));
        }
        if theta[0] != 1.0 {
            return Err(Error::InvalidInput(
                "first coordinate of the index parameter must equal one".into(),
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite index coordinate".into()));
        }
        Ok(Self { theta })
    }

    /// Builds (1, free...) from the free coordinates.
    pub fn from_free(free: &[f64]) -> Self {
        let mut theta = Vec::with_capacity(free.len() + 1);
        theta.push(1.0);
        theta.extend_from_slice(free);
        Self { theta }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Number of coordinates being estimated (dimension minus the pinned one).
    pub fn free_dim(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    /// The estimated coordinates θ_1..θ_{d-1}.
    pub fn free(&self) -> &[f64] {
        &self.theta[1..]
    }

    /// θ'x.
    pub fn index_value(&self, covariates: &[f64]) -> f64 {
        self.theta.iter().zip(covariates).map(|(a, b)| a * b).sum()
    }

    /// θ'X_i for a whole sample.
    pub fn index_values(&self, sample: &[Observation]) -> Vec<f64> {
        sample.iter().map(|o| self.index_value(&o.covariates)).collect()
    }

    /// Euclidean distance to another direction (the pinned coordinates cancel).
    pub fn distance(&self, other: &IndexParam) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Sup-norm ball over the free coordinates, the compact set searched by the
/// preliminary stage.
#[derive(Debug, Clone)]
pub struct SearchRegion {
    pub center: IndexParam,
    pub radius: f64,
}

impl SearchRegion {
    pub fn new(center: IndexParam, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::InvalidInput("search radius must be positive".into()));
        }
        Ok(Self { center, radius })
    }

    /// Default region for covariate dimension `dim`: centered at
    /// (1, 0, ..., 0) with radius 3 in every free coordinate.
    pub fn default_for_dim(dim: usize) -> Self {
        Self { center: IndexParam::from_free(&vec![0.0; dim - 1]), radius: 3.0 }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lower = self.center.free().iter().map(|c| c - self.radius).collect();
        let upper = self.center.free().iter().map(|c| c + self.radius).collect();
        (lower, upper)
    }
}

/// Which criterion drives the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Kaplan-Meier weighted least squares on the observed times.
    Wls,
    /// Synthetic-data least squares on the transformed responses.
    Sd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Wls => "wls",
            Method::Sd => "sd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wls" => Ok(Method::Wls),
            "sd" => Ok(Method::Sd),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// Estimator settings. Defaults follow the pipeline constants used by the
/// simulation harness; the bandwidth constant and trimming fraction are the
/// two knobs exposed on the command line.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub kernel: Kernel,
    pub bandwidth: BandwidthRule,
    /// Density-trimming threshold as a fraction of the maximum fitted index
    /// density at the preliminary direction.
    pub trim_fraction: f64,
    /// Quantile range of the preliminary fixed-box trimming.
    pub box_quantiles: (f64, f64),
    /// Preliminary search region; `None` uses the dimension default.
    pub search: Option<SearchRegion>,
    /// Grid points per free coordinate for the preliminary stage; zero picks
    /// a dimension-dependent default.
    pub grid_points: usize,
    /// Seed for the optimizer restarts.
    pub seed: u64,
    /// Simplex restarts inside the shrinking neighborhood.
    pub restarts: usize,
    /// Evaluation cap per restart.
    pub max_evaluations: usize,
    pub criterion_tolerance: f64,
    pub parameter_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Triweight,
            bandwidth: BandwidthRule::default(),
            trim_fraction: 0.1,
            box_quantiles: (0.1, 0.9),
            search: None,
            grid_points: 0,
            seed: 0,
            restarts: 3,
            max_evaluations: 500,
            criterion_tolerance: 1e-8,
            parameter_tolerance: 1e-6,
        }
    }
}

/// Result of a full fit: the estimated direction, the criterion value at the
/// optimum, the sandwich covariance over the free coordinates, and
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub theta_hat: IndexParam,
    pub criterion_value: f64,
    pub method: Method,
    /// Row-major (d-1) × (d-1) sandwich matrix V̂⁻¹ Ŵ V̂⁻¹.
    pub vcov: Vec<f64>,
    pub n_trimmed: usize,
    pub converged: bool,
    pub evaluations: usize,
    pub n: usize,
    pub preliminary: IndexParam,
    pub bandwidth: f64,
    pub censoring_fraction: f64,
    /// Mass 1 - F-hat(T_(n)) left unassigned when the largest observation is
    /// censored; reported, never redistributed.
    pub defect_mass: f64,
}

impl FitResult {
    /// Wald standard errors sqrt(vcov_kk / n) of the free coordinates.
    pub fn standard_errors(&self) -> Vec<f64> {
        let p = self.theta_hat.free_dim();
        (0..p).map(|k| (self.vcov[k * p + k] / self.n as f64).max(0.0).sqrt()).collect()
    }

    pub fn trimmed_fraction(&self) -> f64 {
        self.n_trimmed as f64 / self.n as f64
    }
}

/// Kaplan-Meier weighted least-squares criterion
/// Σ_i W_in [T_i − f-hat(θ'X_i; θ)]² J_i.
///
/// Censored observations carry zero weight; points where the link estimate is
/// invalid are excluded like trimmed points. Errors when trimming removes
/// every observation.
pub fn criterion_wls(
    theta: &IndexParam,
    weighted: &WeightedSample,
    link: &LinkEstimate,
    keep: &[bool],
) -> Result<f64> {
    let mut total = 0.0;
    let mut contributing = 0usize;
    for ((obs, &w), &kept) in weighted.observations.iter().zip(&weighted.weights).zip(keep) {
        if !kept {
            continue;
        }
        let u = theta.index_value(&obs.covariates);
        let Some(f) = link.value(u) else { continue };
        contributing += 1;
        if w > 0.0 {
            let r = obs.time - f;
            total += w * r * r;
        }
    }
    if contributing == 0 {
        return Err(Error::EmptyCriterion);
    }
    Ok(total)
}

/// Synthetic-data criterion n⁻¹ Σ_i [Ŷ*_i − f-hat(θ'X_i; θ)]² J_i; censored
/// observations contribute through Ŷ*_i = 0.
pub fn criterion_sd(
    theta: &IndexParam,
    synthetic: &SyntheticSample,
    link: &LinkEstimate,
    keep: &[bool],
) -> Result<f64> {
    let n = synthetic.len() as f64;
    let mut total = 0.0;
    let mut contributing = 0usize;
    for ((obs, &y), &kept) in synthetic.observations.iter().zip(&synthetic.y_star).zip(keep) {
        if !kept {
            continue;
        }
        let u = theta.index_value(&obs.covariates);
        let Some(f) = link.value(u) else { continue };
        contributing += 1;
        let r = y - f;
        total += r * r;
    }
    if contributing == 0 {
        return Err(Error::EmptyCriterion);
    }
    Ok(total / n)
}

/// Precomputed sample-level pieces shared by every criterion evaluation.
struct FitPieces<'a> {
    sample: &'a [Observation],
    kernel: Kernel,
    bandwidth: BandwidthRule,
    weighted: WeightedSample,
    synthetic: SyntheticSample,
}

impl<'a> FitPieces<'a> {
    fn new(sample: &'a [Observation], config: &FitConfig) -> Result<Self> {
        validate_sample(sample)?;
        let g_hat = km_fit(sample, KmTarget::Censoring)?;
        let synthetic = synthetic_transform(sample, &g_hat)?;
        let weighted = km_weights(sample)?;
        Ok(Self {
            sample,
            kernel: config.kernel,
            bandwidth: config.bandwidth,
            weighted,
            synthetic,
        })
    }

    /// Link estimate at `theta`, with the bandwidth rule applied to this
    /// direction's own index values: h ∝ s(θ'X) keeps the criterion
    /// scale-equivariant in the free coordinates.
    fn link_at(&self, theta: &IndexParam) -> Result<LinkEstimate> {
        let index = theta.index_values(self.sample);
        let h = self.bandwidth.bandwidth(&index)?;
        link_fit(theta, &self.synthetic, h, self.kernel)
    }

    /// Criterion minimized by the pipeline: the residual at observation i is
    /// taken against the leave-one-out link value, the cross-validated form
    /// of the smoothed least-squares objectives.
    fn criterion(&self, method: Method, theta: &IndexParam, keep: &[bool]) -> Result<f64> {
        let link = self.link_at(theta)?;
        let n = self.sample.len();
        let mut total = 0.0;
        let mut contributing = 0usize;
        for ((obs, &kept), (&y_star, &weight)) in self
            .sample
            .iter()
            .zip(keep)
            .zip(self.synthetic.y_star.iter().zip(&self.weighted.weights))
        {
            if !kept {
                continue;
            }
            let u = theta.index_value(&obs.covariates);
            let Some(f) = link.value_leave_one_out(u, y_star) else { continue };
            contributing += 1;
            match method {
                Method::Wls => {
                    if weight > 0.0 {
                        let r = obs.time - f;
                        total += weight * r * r;
                    }
                }
                Method::Sd => {
                    let r = y_star - f;
                    total += r * r;
                }
            }
        }
        if contributing == 0 {
            return Err(Error::EmptyCriterion);
        }
        Ok(match method {
            Method::Wls => total,
            Method::Sd => total / n as f64,
        })
    }
}

/// Criterion evaluations memoized by the exact bit pattern of the free
/// coordinates; the simplex and the grid revisit points frequently.
struct Evaluator<'a, 'b> {
    pieces: &'b FitPieces<'a>,
    method: Method,
    keep: &'b [bool],
    cache: HashMap<Vec<u64>, f64>,
    evaluations: usize,
}

impl<'a, 'b> Evaluator<'a, 'b> {
    fn new(pieces: &'b FitPieces<'a>, method: Method, keep: &'b [bool]) -> Self {
        Self { pieces, method, keep, cache: HashMap::new(), evaluations: 0 }
    }

    /// Criterion at the free coordinates; failed evaluations (degenerate
    /// index, empty criterion) surface as +∞ so the simplex retreats.
    fn eval(&mut self, free: &[f64]) -> f64 {
        let key: Vec<u64> = free.iter().map(|v| v.to_bits()).collect();
        if let Some(&v) = self.cache.get(&key) {
            return v;
        }
        self.evaluations += 1;
        let theta = IndexParam::from_free(free);
        let v = self
            .pieces
            .criterion(self.method, &theta, self.keep)
            .unwrap_or(f64::INFINITY);
        self.cache.insert(key, v);
        v
    }
}

fn default_grid_points(free_dim: usize) -> usize {
    match free_dim {
        0 | 1 => 17,
        2 => 9,
        _ => 5,
    }
}

/// Coarse grid search over the region followed by a local simplex polish
/// within one grid cell. Returns the polished point and its value.
fn grid_then_polish(
    evaluator: &mut Evaluator,
    search: &SearchRegion,
    grid_points: usize,
    nm: &NelderMead,
) -> Result<(Vec<f64>, f64)> {
    let free_dim = search.center.free_dim();
    if free_dim == 0 {
        let v = evaluator.eval(&[]);
        return Ok((Vec::new(), v));
    }
    let (lower, upper) = search.bounds();
    let g = grid_points.max(2);
    let spacing = 2.0 * search.radius / (g - 1) as f64;

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut odometer = vec![0usize; free_dim];
    loop {
        let point: Vec<f64> =
            odometer.iter().zip(&lower).map(|(&i, lo)| lo + i as f64 * spacing).collect();
        let v = evaluator.eval(&point);
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((point, v));
        }
        // Advance the mixed-radix counter.
        let mut k = 0;
        loop {
            if k == free_dim {
                break;
            }
            odometer[k] += 1;
            if odometer[k] < g {
                break;
            }
            odometer[k] = 0;
            k += 1;
        }
        if k == free_dim {
            break;
        }
    }

    let (node, node_value) = best.ok_or(Error::EmptyCriterion)?;
    if !node_value.is_finite() {
        return Err(Error::EmptyCriterion);
    }

    // Polish inside the winning cell, clipped to the search region.
    let cell_lower: Vec<f64> =
        node.iter().zip(&lower).map(|(x, lo)| (x - spacing).max(*lo)).collect();
    let cell_upper: Vec<f64> =
        node.iter().zip(&upper).map(|(x, hi)| (x + spacing).min(*hi)).collect();
    let polished = nm.minimize(
        |x| evaluator.eval(x),
        &node,
        spacing / 2.0,
        &cell_lower,
        &cell_upper,
    );
    if polished.value <= node_value {
        Ok((polished.x, polished.value))
    } else {
        Ok((node, node_value))
    }
}

/// Preliminary estimate: minimizes the chosen criterion under fixed-box
/// trimming over a coarse grid on the search region, then polishes locally.
/// The link estimate is refit at every candidate direction.
pub fn preliminary_fit(
    sample: &[Observation],
    method: Method,
    box_trim: &Trimming,
    search: &SearchRegion,
    config: &FitConfig,
) -> Result<IndexParam> {
    let pieces = FitPieces::new(sample, config)?;
    let keep = box_keep(sample, box_trim)?;
    let nm = NelderMead {
        value_tolerance: config.criterion_tolerance,
        parameter_tolerance: config.parameter_tolerance,
        max_evaluations: config.max_evaluations,
    };
    let grid_points =
        if config.grid_points > 0 { config.grid_points } else { default_grid_points(search.center.free_dim()) };
    let mut evaluator = Evaluator::new(&pieces, method, &keep);
    let (free, _) = grid_then_polish(&mut evaluator, search, grid_points, &nm)?;
    Ok(IndexParam::from_free(&free))
}

fn box_keep(sample: &[Observation], box_trim: &Trimming) -> Result<Vec<bool>> {
    match box_trim {
        Trimming::FixedBox { lower, upper } => Ok(sample
            .iter()
            .map(|o| {
                o.covariates
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
            })
            .collect()),
        Trimming::Density { .. } => Err(Error::InvalidInput(
            "preliminary trimming must be a fixed box; density trimming is the final stage".into(),
        )),
    }
}

/// Full estimation pipeline: censoring fit, synthetic transform, preliminary
/// grid fit under box trimming, density trimming frozen at the preliminary
/// direction, Nelder-Mead over the shrinking box around it, and the sandwich
/// variance plug-in.
pub fn fit(sample: &[Observation], method: Method, config: &FitConfig) -> Result<FitResult> {
    let dim = validate_sample(sample)?;
    let n = sample.len();
    if n < 10 * dim {
        return Err(Error::InvalidInput(format!(
            "need at least {} observations for dimension {dim}, got {n}",
            10 * dim
        )));
    }

    let pieces = FitPieces::new(sample, config)?;
    let censoring_fraction =
        sample.iter().filter(|o| !o.event).count() as f64 / n as f64;
    let defect_mass = 1.0 - pieces.weighted.total_mass();

    let search = match &config.search {
        Some(s) => s.clone(),
        None => SearchRegion::default_for_dim(dim),
    };
    if search.center.dim() != dim {
        return Err(Error::InvalidInput(
            "search region dimension does not match the sample".into(),
        ));
    }

    let nm = NelderMead {
        value_tolerance: config.criterion_tolerance,
        parameter_tolerance: config.parameter_tolerance,
        max_evaluations: config.max_evaluations,
    };

    // Preliminary stage under fixed-box trimming.
    let box_trim = Trimming::quantile_box(sample, config.box_quantiles.0, config.box_quantiles.1)?;
    let keep_box = box_keep(sample, &box_trim)?;
    let grid_points = if config.grid_points > 0 {
        config.grid_points
    } else {
        default_grid_points(dim - 1)
    };
    let mut total_evaluations;
    let theta_n = {
        let mut evaluator = Evaluator::new(&pieces, method, &keep_box);
        let (free, _) = grid_then_polish(&mut evaluator, &search, grid_points, &nm)?;
        total_evaluations = evaluator.evaluations;
        IndexParam::from_free(&free)
    };

    // Density trimming frozen at the preliminary direction.
    let index_n = theta_n.index_values(sample);
    let h_n = config.bandwidth.bandwidth(&index_n)?;
    let densities: Vec<f64> = index_n
        .iter()
        .map(|&u| index_density(config.kernel, &theta_n, sample, h_n, u))
        .collect();
    let max_density = densities.iter().cloned().fold(0.0f64, f64::max);
    let threshold = config.trim_fraction * max_density;
    let keep: Vec<bool> = densities.iter().map(|&d| d >= threshold).collect();
    let n_trimmed = keep.iter().filter(|k| !**k).count();

    // Final minimization over the shrinking neighborhood. The bandwidth
    // keeps following the rule at each candidate direction: h ∝ s(θ'X) makes
    // the criterion scale-equivariant in the free coordinates, so candidates
    // are compared as directions rather than through their index spread.
    let radius = (0.5 * (n as f64).powf(-0.25)).max(2.0 * h_n);
    let lower: Vec<f64> = theta_n.free().iter().map(|c| c - radius).collect();
    let upper: Vec<f64> = theta_n.free().iter().map(|c| c + radius).collect();

    let mut evaluator = Evaluator::new(&pieces, method, &keep);
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    if dim > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for restart in 0..config.restarts.max(1) {
            let start: Vec<f64> = if restart == 0 {
                theta_n.free().to_vec()
            } else {
                lower
                    .iter()
                    .zip(&upper)
                    .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                    .collect()
            };
            let run = nm.minimize(|x| evaluator.eval(x), &start, radius / 2.0, &lower, &upper);
            if best.as_ref().is_none_or(|(_, bv, _)| run.value < *bv) {
                best = Some((run.x, run.value, run.converged));
            }
        }
    } else {
        let v = evaluator.eval(&[]);
        best = Some((Vec::new(), v, true));
    }
    total_evaluations += evaluator.evaluations;

    let (free_hat, criterion_value, converged) = best.ok_or(Error::EmptyCriterion)?;
    if !criterion_value.is_finite() {
        return Err(Error::EmptyCriterion);
    }
    let theta_hat = IndexParam::from_free(&free_hat);

    // Refit the link at the estimate for the variance plug-in.
    let link = pieces.link_at(&theta_hat)?;
    let vcov = variance_plugin(sample, &theta_hat, &link, &keep, method)?;

    Ok(FitResult {
        theta_hat,
        criterion_value,
        method,
        vcov,
        n_trimmed,
        converged,
        evaluations: total_evaluations,
        n,
        preliminary: theta_n,
        bandwidth: link.bandwidth(),
        censoring_fraction,
        defect_mass,
    })
}

/// Cumulative table of the tail integrand dG / ((1-H)(1-G)) over the jumps
/// of G-hat, for fast left-limit lookups inside the influence plug-in.
struct TailTable {
    jump_times: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TailTable {
    fn build(g_hat: &StepCdf, h_hat: &StepCdf) -> Self {
        let mut jump_times = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (s, mass) in g_hat.jumps() {
            let h_surv = 1.0 - h_hat.value(s);
            let g_surv = 1.0 - g_hat.value(s);
            if h_surv <= 0.0 || g_surv <= 0.0 {
                break;
            }
            acc += mass / (h_surv * g_surv);
            jump_times.push(s);
            cumulative.push(acc);
        }
        Self { jump_times, cumulative }
    }

    /// C(u-): the sum over jumps strictly below u.
    fn left(&self, u: f64) -> f64 {
        let idx = self.jump_times.partition_point(|&s| s < u);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }
}

/// Influence weight ψ-hat(y, T_i, δ_i): the correction a single observation
/// contributes to Kaplan-Meier integrals through the fitted censoring
/// distribution.
fn psi_hat(y: f64, t_i: f64, event_i: bool, h_hat: &StepCdf, tail: &TailTable) -> f64 {
    let first = if !event_i && y > t_i {
        1.0 / (1.0 - h_hat.value_minus(t_i))
    } else {
        0.0
    };
    first - tail.left(y.min(t_i))
}

/// Plug-in sandwich covariance V̂⁻¹ Ŵ V̂⁻¹ over the free coordinates.
///
/// V̂ averages the outer products of the fitted link gradients over the
/// untrimmed observations. Ŵ is the empirical second moment of the estimated
/// influence vectors: the weighted residual score plus the ψ-hat correction
/// integral, the latter taken against the Kaplan-Meier weighted empirical
/// measure. With no censoring the corrections vanish identically.
pub fn variance_plugin(
    sample: &[Observation],
    theta_hat: &IndexParam,
    link: &LinkEstimate,
    keep: &[bool],
    method: Method,
) -> Result<Vec<f64>> {
    let n = sample.len();
    let p = theta_hat.free_dim();
    if p == 0 {
        return Ok(Vec::new());
    }
    if keep.len() != n {
        return Err(Error::InvalidInput("trimming context length mismatch".into()));
    }

    let g_hat = km_fit(sample, KmTarget::Censoring)?;
    let h_hat = empirical_cdf(sample)?;
    let weighted = km_weights(sample)?;
    let synthetic = synthetic_transform(sample, &g_hat)?;
    let tail = TailTable::build(&g_hat, &h_hat);

    // Per-observation link values and free-coordinate gradients; observations
    // that are trimmed or fall in an invalid neighborhood contribute nothing
    // to the score terms.
    let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut fvals: Vec<f64> = Vec::with_capacity(n);
    for (obs, &kept) in sample.iter().zip(keep) {
        if !kept {
            grads.push(None);
            fvals.push(0.0);
            continue;
        }
        let u = theta_hat.index_value(&obs.covariates);
        match (link.value(u), link_gradient(link, &obs.covariates)) {
            (Some(f), Ok(g)) => {
                grads.push(Some(g[1..].to_vec()));
                fvals.push(f);
            }
            _ => {
                grads.push(None);
                fvals.push(0.0);
            }
        }
    }

    // Information matrix V-hat = n⁻¹ Σ J_i ∇f ∇f'.
    let mut v_hat = vec![0.0; p * p];
    for g in grads.iter().flatten() {
        for j in 0..p {
            for k in 0..p {
                v_hat[j * p + k] += g[j] * g[k];
            }
        }
    }
    for v in &mut v_hat {
        *v /= n as f64;
    }

    // Score terms a_i and the correction integrand φ_j.
    let mut a_terms = vec![vec![0.0; p]; n];
    let mut phi = vec![vec![0.0; p]; n];
    for i in 0..n {
        let Some(g) = &grads[i] else { continue };
        match method {
            Method::Wls => {
                // n W_in (T_i - f)  equals  δ_i (T_i - f) / (1 - G-hat(T_i-)).
                let scale_a = n as f64 * weighted.weights[i] * (sample[i].time - fvals[i]);
                let scale_phi = sample[i].time - fvals[i];
                for k in 0..p {
                    a_terms[i][k] = scale_a * g[k];
                    phi[i][k] = scale_phi * g[k];
                }
            }
            Method::Sd => {
                let scale_a = synthetic.y_star[i] - fvals[i];
                let scale_phi = sample[i].time;
                for k in 0..p {
                    a_terms[i][k] = scale_a * g[k];
                    phi[i][k] = scale_phi * g[k];
                }
            }
        }
    }

    // U_i = a_i + Σ_j W_jn φ_j ψ-hat(T_j, T_i, δ_i); every observation enters
    // the correction through its effect on G-hat, trimmed or not.
    let mut w_hat = vec![0.0; p * p];
    let mut u_i = vec![0.0; p];
    for i in 0..n {
        u_i.copy_from_slice(&a_terms[i]);
        if !tail.jump_times.is_empty() || !sample[i].event {
            for j in 0..n {
                let w = weighted.weights[j];
                if w == 0.0 || grads[j].is_none() {
                    continue;
                }
                let psi = psi_hat(sample[j].time, sample[i].time, sample[i].event, &h_hat, &tail);
                if psi != 0.0 {
                    for k in 0..p {
                        u_i[k] += w * phi[j][k] * psi;
                    }
                }
            }
        }
        for j in 0..p {
            for k in 0..p {
                w_hat[j * p + k] += u_i[j] * u_i[k];
            }
        }
    }
    for w in &mut w_hat {
        *w /= n as f64;
    }

    let v_inv = invert_symmetric(&v_hat, p)?;
    let mut sandwich = mat_mul(&mat_mul(&v_inv, &w_hat, p), &v_inv, p);
    // Symmetrize away float asymmetry.
    for j in 0..p {
        for k in (j + 1)..p {
            let avg = 0.5 * (sandwich[j * p + k] + sandwich[k * p + j]);
            sandwich[j * p + k] = avg;
            sandwich[k * p + j] = avg;
        }
        sandwich[j * p + j] = sandwich[j * p + j].max(0.0);
    }
    Ok(sandwich)
}

fn mat_mul(a: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for k in 0..p {
            let aik = a[i * p + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..p {
                out[i * p + j] += aik * b[k * p + j];
            }
        }
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting; errors on numerically singular
/// input.
fn invert_symmetric(a: &[f64], p: usize) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::SingularInformation);
    }
    let cols = 2 * p;
    let mut aug = vec![0.0; p * cols];
    for i in 0..p {
        for j in 0..p {
            aug[i * cols + j] = a[i * p + j];
        }
        aug[i * cols + p + i] = 1.0;
    }
    for col in 0..p {
        let mut pivot_row = col;
        let mut pivot = aug[col * cols + col].abs();
        for row in (col + 1)..p {
            let v = aug[row * cols + col].abs();
            if v > pivot {
                pivot = v;
                pivot_row = row;
            }
        }
        if pivot < 1e-12 * scale {
            return Err(Error::SingularInformation);
        }
        if pivot_row != col {
            for j in 0..cols {
                aug.swap(col * cols + j, pivot_row * cols + j);
            }
        }
        let diag = aug[col * cols + col];
        for j in 0..cols {
            aug[col * cols + j] /= diag;
        }
        for row in 0..p {
            if row == col {
                continue;
            }
            let factor = aug[row * cols + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..cols {
                let v = aug[col * cols + j];
                aug[row * cols + j] -= factor * v;
            }
        }
    }
    let mut inv = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            inv[i * p + j] = aug[i * cols + p + j];
        }
    }
    Ok(inv)
}
