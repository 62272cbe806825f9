//! Gaussian-mixture belief over the robot pose: initial-belief sampling,
//! ID-based data association, likelihood weight updates with the
//! duration-mismatch factor, pruning, per-mode EKFs and lost-robot detection.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dynamics::{
    motion_jacobians, obs_jacobian, predict_observation, propagate, wrap_angle, Control,
    Observation, ObservationVector, ProcessNoise, RobotState,
};
use crate::env::Environment;

/// One Gaussian hypothesis of the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMode {
    pub weight: f64,
    pub mean: RobotState,
    pub cov: Matrix3<f64>,
    /// Discrepancy-duration accumulator (seconds); grows while this
    /// hypothesis and the robot predict to see different information.
    pub beta: f64,
}

impl GaussianMode {
    pub fn new(weight: f64, mean: RobotState, cov: Matrix3<f64>) -> Self {
        GaussianMode {
            weight,
            mean,
            cov,
            beta: 0.0,
        }
    }
}

/// Weighted mixture of Gaussian hypotheses; weights always sum to one.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GmmBelief {
    pub modes: Vec<GaussianMode>,
}

impl GmmBelief {
    pub fn from_modes(modes: Vec<GaussianMode>) -> Self {
        let mut b = GmmBelief { modes };
        b.normalize();
        b
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn is_unimodal(&self) -> bool {
        self.modes.len() == 1
    }

    pub fn weight_sum(&self) -> f64 {
        self.modes.iter().map(|m| m.weight).sum()
    }

    pub fn normalize(&mut self) {
        let s = self.weight_sum();
        if s > 0.0 {
            for m in &mut self.modes {
                m.weight /= s;
            }
        }
    }

    /// Index of the highest-weight mode.
    pub fn best_mode(&self) -> usize {
        self.modes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.weight.partial_cmp(&b.1.weight).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Check the belief invariants; used in tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), BeliefError> {
        if self.modes.is_empty() {
            return Err(BeliefError::DegenerateBelief);
        }
        if (self.weight_sum() - 1.0).abs() >= 1e-9 {
            return Err(BeliefError::DegenerateBelief);
        }
        for m in &self.modes {
            if m.weight < 0.0 || m.beta < 0.0 {
                return Err(BeliefError::DegenerateBelief);
            }
            if m.cov.cholesky().is_none() {
                return Err(BeliefError::FilterDegeneracy);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("all mode weights vanished; belief is degenerate")]
    DegenerateBelief,
    #[error("innovation covariance is not invertible")]
    FilterDegeneracy,
    #[error("could not draw any valid state sample in {0} attempts")]
    Sampling(usize),
}

/// One matched (observed, predicted) reading pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub observed: Observation,
    pub predicted: Observation,
}

/// Outcome of ID-based data association between a mode's prediction and the
/// actual observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationResult {
    /// Number of landmarks actually observed (n_z).
    pub n_observed: usize,
    /// Number of landmarks the mode predicted (n_h).
    pub n_predicted: usize,
    pub pairs: Vec<MatchedPair>,
}

impl AssociationResult {
    pub fn n_matched(&self) -> usize {
        self.pairs.len()
    }

    /// Association failure in the lost-detection sense.
    pub fn failed(&self) -> bool {
        self.n_matched() < self.n_observed.min(self.n_predicted)
    }
}

fn pair_mahalanobis_sq(observed: &Observation, predicted: &Observation) -> f64 {
    let dr = observed.range - predicted.range;
    let db = wrap_angle(observed.bearing - predicted.bearing);
    let [sr, st] = observed.noise_sigma;
    dr * dr / (sr * sr) + db * db / (st * st)
}

/// Greedy ID matching: readings pair only when their landmark IDs are equal;
/// among same-ID candidates the smallest per-pair Mahalanobis distance (in
/// the observed reading's noise metric) wins, each reading used at most once.
pub fn associate(predicted: &ObservationVector, observed: &ObservationVector) -> AssociationResult {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, zo) in observed.readings.iter().enumerate() {
        for (j, zp) in predicted.readings.iter().enumerate() {
            if zo.landmark_id == zp.landmark_id {
                candidates.push((pair_mahalanobis_sq(zo, zp), i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut used_obs = vec![false; observed.len()];
    let mut used_pred = vec![false; predicted.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_obs[i] && !used_pred[j] {
            used_obs[i] = true;
            used_pred[j] = true;
            pairs.push(MatchedPair {
                observed: observed.readings[i],
                predicted: predicted.readings[j],
            });
        }
    }
    AssociationResult {
        n_observed: observed.len(),
        n_predicted: predicted.len(),
        pairs,
    }
}

/// Squared Mahalanobis distance of the stacked matched innovations in the
/// observation-noise metric (block-diagonal R from the observed readings).
/// `None` when nothing matched.
pub fn mahalanobis_sq(assoc: &AssociationResult) -> Option<f64> {
    if assoc.pairs.is_empty() {
        return None;
    }
    Some(
        assoc
            .pairs
            .iter()
            .map(|p| pair_mahalanobis_sq(&p.observed, &p.predicted))
            .sum(),
    )
}

/// Tunables for the weight update and filter loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefParams {
    pub dt: f64,
    pub process_noise: ProcessNoise,
    /// Prune threshold on normalized weights.
    pub delta_w: f64,
    /// Duration-factor rate constant (gamma = exp(-rate * alpha * beta)).
    pub gamma_rate: f64,
    /// Squared-distance charge per unmatched reading entering the likelihood
    /// exponent. Zero reproduces the bare matched-only likelihood.
    pub miss_penalty: f64,
    /// Evaluate the likelihood in the innovation covariance S = H P H' + R
    /// instead of the raw noise covariance R.
    pub use_innovation_cov: bool,
}

impl Default for BeliefParams {
    fn default() -> Self {
        BeliefParams {
            dt: 0.1,
            process_noise: ProcessNoise::default(),
            delta_w: 0.01,
            gamma_rate: 1e-4,
            miss_penalty: 4.0,
            use_innovation_cov: true,
        }
    }
}

/// Landmark positions behind the matched predicted readings; exact because
/// the predicted reading is h(mean, 0) evaluated at the given mean.
fn matched_landmarks(mode: &GaussianMode, assoc: &AssociationResult) -> Vec<crate::geometry::Point> {
    assoc
        .pairs
        .iter()
        .map(|p| p.predicted.landmark_position(&mode.mean))
        .collect()
}

/// Stack residuals, Jacobians and noise blocks of the matched pairs with the
/// measurement model linearized at `at`.
fn stacked_at(
    at: &RobotState,
    assoc: &AssociationResult,
    landmarks: &[crate::geometry::Point],
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let m = assoc.pairs.len();
    let mut y = DVector::zeros(2 * m);
    let mut h = DMatrix::zeros(2 * m, 3);
    let mut r = DMatrix::zeros(2 * m, 2 * m);
    for (k, (pair, lm)) in assoc.pairs.iter().zip(landmarks).enumerate() {
        let d = lm - at.position();
        let range = d.norm();
        let bearing = wrap_angle(d.y.atan2(d.x) - at.theta);
        y[2 * k] = pair.observed.range - range;
        y[2 * k + 1] = wrap_angle(pair.observed.bearing - bearing);
        let hj = obs_jacobian(at, *lm).expect("matched landmark at non-zero range");
        for c in 0..3 {
            h[(2 * k, c)] = hj[(0, c)];
            h[(2 * k + 1, c)] = hj[(1, c)];
        }
        let [sr, st] = pair.observed.noise_sigma;
        r[(2 * k, 2 * k)] = sr * sr;
        r[(2 * k + 1, 2 * k + 1)] = st * st;
    }
    (y, h, r)
}

fn stacked_system(
    mode: &GaussianMode,
    assoc: &AssociationResult,
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let landmarks = matched_landmarks(mode, assoc);
    stacked_at(&mode.mean, assoc, &landmarks)
}

/// Squared Mahalanobis distance of the matched innovations in the metric the
/// filter loop uses (S or R depending on configuration).
fn likelihood_mahalanobis_sq(
    mode: &GaussianMode,
    assoc: &AssociationResult,
    params: &BeliefParams,
) -> Result<f64, BeliefError> {
    if assoc.pairs.is_empty() {
        return Ok(0.0);
    }
    if !params.use_innovation_cov {
        return Ok(mahalanobis_sq(assoc).unwrap());
    }
    let (y, h, r) = stacked_system(mode, assoc);
    let s = &h * mode.cov * h.transpose() + r;
    let chol = s.cholesky().ok_or(BeliefError::FilterDegeneracy)?;
    let sol = chol.solve(&y);
    Ok(y.dot(&sol))
}

/// Per-mode outcome of one weight update, kept for the EKF update and the
/// lost-robot monitor.
#[derive(Debug, Clone)]
pub struct WeightUpdate {
    pub assoc: AssociationResult,
    pub mahalanobis_sq: f64,
}

/// Likelihood weight update followed by the duration factor:
/// w' = w * exp(-D^2 / 2), normalized; then gamma = exp(-rate * alpha * beta)
/// applied when the observed and predicted landmark counts disagree, with
/// beta accumulating dt on mismatch and decaying by 1.0 (clamped at zero)
/// otherwise; renormalized at the end.
pub fn update_weights(
    belief: &mut GmmBelief,
    observed: &ObservationVector,
    predictions: &[ObservationVector],
    params: &BeliefParams,
) -> Result<Vec<WeightUpdate>, BeliefError> {
    assert_eq!(belief.modes.len(), predictions.len());
    let mut updates = Vec::with_capacity(belief.modes.len());
    let mut exponents = Vec::with_capacity(belief.modes.len());

    for (mode, pred) in belief.modes.iter().zip(predictions) {
        let assoc = associate(pred, observed);
        let d_sq = likelihood_mahalanobis_sq(mode, &assoc, params)?;
        let unmatched = assoc.n_observed + assoc.n_predicted - 2 * assoc.n_matched();
        exponents.push(-0.5 * (d_sq + params.miss_penalty * unmatched as f64));
        updates.push(WeightUpdate {
            assoc,
            mahalanobis_sq: d_sq,
        });
    }

    // Shift exponents for underflow safety; the shift cancels in the
    // normalization.
    let shift = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (mode, e) in belief.modes.iter_mut().zip(&exponents) {
        mode.weight *= (e - shift).exp();
    }
    let sum = belief.weight_sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(BeliefError::DegenerateBelief);
    }
    belief.normalize();

    for (mode, upd) in belief.modes.iter_mut().zip(&updates) {
        let a = &upd.assoc;
        let gamma = if a.n_predicted != a.n_observed || a.n_predicted != a.n_matched() {
            let alpha = (1 + a.n_observed - a.n_matched())
                .max(1 + a.n_predicted - a.n_matched()) as f64;
            mode.beta += params.dt;
            (-params.gamma_rate * alpha * mode.beta).exp()
        } else {
            mode.beta = (mode.beta - 1.0).max(0.0);
            1.0
        };
        mode.weight *= gamma;
    }
    let sum = belief.weight_sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(BeliefError::DegenerateBelief);
    }
    belief.normalize();
    Ok(updates)
}

/// Remove modes with weight below the threshold and renormalize; the single
/// highest-weight mode always survives.
pub fn prune(belief: &mut GmmBelief, delta_w: f64) {
    let best = belief.best_mode();
    let best_mode = belief.modes[best].clone();
    belief.modes = std::mem::take(&mut belief.modes)
        .into_iter()
        .filter(|m| m.weight >= delta_w)
        .collect();
    if belief.modes.is_empty() {
        belief.modes.push(best_mode);
    }
    belief.normalize();
}

/// EKF time update: mean through the noiseless motion model, covariance
/// through the linearization, A P A' + G Q G', symmetrized.
pub fn ekf_predict(mode: &mut GaussianMode, u: Control, params: &BeliefParams) {
    let (a, g) = motion_jacobians(&mode.mean, u, params.dt);
    mode.mean = propagate(&mode.mean, u, nalgebra::Vector2::zeros(), params.dt);
    let q = params.process_noise.covariance();
    let cov = a * mode.cov * a.transpose() + g * q * g.transpose();
    mode.cov = 0.5 * (cov + cov.transpose());
}

/// Diagnostics from one measurement update.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    /// Normalized innovation squared in the innovation covariance metric.
    pub nis: f64,
    /// Stacked observation dimension.
    pub dof: usize,
}

/// EKF measurement update over the matched pairs: stacked Jacobian, Kalman
/// gain, Joseph-form covariance, bearing residuals wrapped.
pub fn ekf_update(
    mode: &mut GaussianMode,
    assoc: &AssociationResult,
) -> Result<UpdateStats, BeliefError> {
    if assoc.pairs.is_empty() {
        return Ok(UpdateStats { nis: 0.0, dof: 0 });
    }
    let (y, h, r) = stacked_system(mode, assoc);
    let s = &h * mode.cov * h.transpose() + &r;
    let chol = s.cholesky().ok_or(BeliefError::FilterDegeneracy)?;
    let nis = y.dot(&chol.solve(&y));

    // K = P H' S^-1 via S K' = H P
    let hp = &h * mode.cov;
    let k_t = chol.solve(&hp);
    let k = k_t.transpose();

    let delta = &k * &y;
    let mean = mode.mean.to_vector() + Vector3::new(delta[0], delta[1], delta[2]);
    mode.mean = RobotState::from_vector(&mean);

    let ikh = DMatrix::identity(3, 3) - &k * &h;
    let cov = &ikh * mode.cov * ikh.transpose() + &k * &r * k.transpose();
    let cov3 = Matrix3::from_fn(|i, j| cov[(i, j)]);
    mode.cov = 0.5 * (cov3 + cov3.transpose());

    Ok(UpdateStats {
        nis,
        dof: y.len(),
    })
}

/// Iterated measurement update: re-linearize around the improving estimate
/// a few times before committing. A plain EKF update from a far-off prior
/// jumps with a biased linearization and then freezes overconfident; the
/// iteration removes that bias, which matters when seeding hypotheses far
/// from their consistent pose.
pub fn ekf_update_iterated(
    mode: &mut GaussianMode,
    assoc: &AssociationResult,
    iterations: usize,
) -> Result<UpdateStats, BeliefError> {
    if assoc.pairs.is_empty() {
        return Ok(UpdateStats { nis: 0.0, dof: 0 });
    }
    let landmarks = matched_landmarks(mode, assoc);
    let prior = mode.mean.to_vector();
    let mut x = mode.mean;
    let mut nis = 0.0;
    let mut linearization = None;
    for _ in 0..iterations.max(1) {
        // x_next = prior + K (z - h(x) - H (prior - x))
        let (y, h, r) = stacked_at(&x, assoc, &landmarks);
        let s = &h * mode.cov * h.transpose() + &r;
        let chol = s.cholesky().ok_or(BeliefError::FilterDegeneracy)?;
        nis = y.dot(&chol.solve(&y));
        let k = chol.solve(&(&h * mode.cov)).transpose();
        let dx = prior - x.to_vector();
        let corr = y - &h * dx;
        let delta = &k * corr;
        let next = prior + Vector3::new(delta[0], delta[1], delta[2]);
        x = RobotState::from_vector(&next);
        linearization = Some((h, r, k));
    }
    let (h, r, k) = linearization.unwrap();
    let ikh = DMatrix::identity(3, 3) - &k * &h;
    let cov = &ikh * mode.cov * ikh.transpose() + &k * &r * k.transpose();
    let cov3 = Matrix3::from_fn(|i, j| cov[(i, j)]);
    mode.mean = x;
    mode.cov = 0.5 * (cov3 + cov3.transpose());
    Ok(UpdateStats {
        nis,
        dof: 2 * assoc.pairs.len(),
    })
}

/// Per-step record consumed by the lost-robot detector.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepDiagnostics {
    pub nis: Option<f64>,
    pub dof: usize,
    pub assoc_failed: bool,
}

/// True iff the normalized innovation squared exceeded the chi-square
/// `quantile` (dof = stacked observation dimension) for `window` consecutive
/// steps, or ID association failed for `window` consecutive steps.
pub fn detect_lost(history: &[StepDiagnostics], window: usize, quantile: f64) -> bool {
    if history.len() < window || window == 0 {
        return false;
    }
    let tail = &history[history.len() - window..];
    let nis_streak = tail.iter().all(|d| match d.nis {
        Some(nis) if d.dof > 0 => {
            let thresh = ChiSquared::new(d.dof as f64)
                .map(|c| c.inverse_cdf(quantile))
                .unwrap_or(f64::INFINITY);
            nis > thresh
        }
        _ => false,
    });
    let assoc_streak = tail.iter().all(|d| d.assoc_failed);
    nis_streak || assoc_streak
}

/// Rolling window wrapper around `detect_lost`.
#[derive(Debug, Clone)]
pub struct InnovationMonitor {
    pub window: usize,
    pub quantile: f64,
    history: Vec<StepDiagnostics>,
}

impl InnovationMonitor {
    pub fn new(window: usize, quantile: f64) -> Self {
        InnovationMonitor {
            window,
            quantile,
            history: Vec::new(),
        }
    }

    pub fn push(&mut self, d: StepDiagnostics) {
        self.history.push(d);
        if self.history.len() > 4 * self.window.max(1) {
            self.history.drain(..self.history.len() - 2 * self.window.max(1));
        }
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn is_lost(&self) -> bool {
        detect_lost(&self.history, self.window, self.quantile)
    }
}

/// Outcome of one full belief step (predict + weight update + EKF update +
/// prune) against an actual observation.
#[derive(Debug, Clone)]
pub struct BeliefStepOutcome {
    pub updates: Vec<WeightUpdate>,
    /// Measurement-update diagnostics per mode (None when nothing matched),
    /// aligned with `updates`.
    pub stats: Vec<Option<UpdateStats>>,
    pub modes_before: usize,
    pub modes_after: usize,
}

/// One synchronized belief step: every mode is EKF-predicted with the
/// executed control, weights are updated against the observation, matched
/// modes get their measurement update, then low-weight modes are pruned.
pub fn belief_step(
    env: &Environment,
    belief: &mut GmmBelief,
    u: Control,
    z: &ObservationVector,
    params: &BeliefParams,
) -> Result<BeliefStepOutcome, BeliefError> {
    let modes_before = belief.len();
    for mode in &mut belief.modes {
        ekf_predict(mode, u, params);
    }
    let predictions: Vec<ObservationVector> = belief
        .modes
        .iter()
        .map(|m| predict_observation(env, &m.mean))
        .collect();
    let updates = update_weights(belief, z, &predictions, params)?;
    let mut stats = Vec::with_capacity(updates.len());
    for (mode, upd) in belief.modes.iter_mut().zip(&updates) {
        if upd.assoc.n_matched() > 0 {
            stats.push(Some(ekf_update(mode, &upd.assoc)?));
        } else {
            stats.push(None);
        }
    }
    prune(belief, params.delta_w);
    Ok(BeliefStepOutcome {
        updates,
        stats,
        modes_before,
        modes_after: belief.len(),
    })
}

/// Parameters of the initial multi-modal belief generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialBeliefParams {
    /// Number of uniform state samples seeding the mixture.
    pub n_samples: usize,
    /// Initial covariance assigned to every sample.
    pub sigma0: [f64; 3],
    /// Rounds with an unchanged mode count before declaring convergence.
    pub k_stable: usize,
    /// Hard cap on convergence rounds.
    pub max_rounds: usize,
    /// Sensing steps per round (one in-place rotation sweep).
    pub sweep_steps: usize,
    /// Filter burn-in: sensing steps that only refine the sample means
    /// before weight updates and pruning begin. Without it, samples seeded
    /// a little off their locally consistent pose take permanent likelihood
    /// damage before their EKF can pull them in.
    pub warmup_steps: usize,
    /// Attempt budget for rejection sampling, per requested sample.
    pub tries_per_sample: usize,
    /// Hypotheses closer than this (position, heading) collapse into one.
    pub dedup_pos: f64,
    pub dedup_theta: f64,
}

impl Default for InitialBeliefParams {
    fn default() -> Self {
        InitialBeliefParams {
            n_samples: 200,
            sigma0: [6.25, 6.25, (std::f64::consts::PI / 3.0) * (std::f64::consts::PI / 3.0)],
            k_stable: 5,
            max_rounds: 40,
            sweep_steps: 42,
            warmup_steps: 8,
            tries_per_sample: 100,
            dedup_pos: 0.15,
            dedup_theta: 0.1,
        }
    }
}

impl InitialBeliefParams {
    pub fn sigma0_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.sigma0[0], self.sigma0[1], self.sigma0[2]))
    }
}

fn dedup_modes(belief: &mut GmmBelief, pos_tol: f64, theta_tol: f64) {
    let mut keep: Vec<GaussianMode> = Vec::with_capacity(belief.modes.len());
    for mode in belief.modes.drain(..) {
        if let Some(existing) = keep.iter_mut().find(|k| {
            (k.mean.position() - mode.mean.position()).norm() < pos_tol
                && wrap_angle(k.mean.theta - mode.mean.theta).abs() < theta_tol
        }) {
            existing.weight += mode.weight;
        } else {
            keep.push(mode);
        }
    }
    belief.modes = keep;
    belief.normalize();
}

/// Collapse co-converged hypotheses into one mode per cluster, represented
/// by the cluster medoid, and hand every surviving hypothesis an equal
/// weight. Runs once between the burn-in and the weighted convergence loop.
fn consolidate_clusters(belief: &mut GmmBelief, pos_tol: f64, theta_tol: f64) {
    let modes = std::mem::take(&mut belief.modes);
    let mut clusters: Vec<Vec<GaussianMode>> = Vec::new();
    for mode in modes {
        if let Some(cluster) = clusters.iter_mut().find(|c| {
            let head = &c[0];
            (head.mean.position() - mode.mean.position()).norm() < pos_tol
                && wrap_angle(head.mean.theta - mode.mean.theta).abs() < theta_tol
        }) {
            cluster.push(mode);
        } else {
            clusters.push(vec![mode]);
        }
    }
    let n = clusters.len();
    belief.modes = clusters
        .into_iter()
        .map(|cluster| {
            let medoid = (0..cluster.len())
                .min_by(|&a, &b| {
                    let cost = |i: usize| -> f64 {
                        cluster
                            .iter()
                            .map(|m| (m.mean.position() - cluster[i].mean.position()).norm())
                            .sum()
                    };
                    cost(a).partial_cmp(&cost(b)).unwrap().then(a.cmp(&b))
                })
                .unwrap();
            let mut rep = cluster[medoid].clone();
            rep.weight = 1.0 / n as f64;
            rep
        })
        .collect();
}

/// Drop modes whose means violate the environment (they are no valid
/// explanation of the robot state); the best mode always survives.
pub fn prune_invalid_means(belief: &mut GmmBelief, env: &Environment) -> usize {
    let before = belief.len();
    let best = belief.best_mode();
    let best_mode = belief.modes[best].clone();
    belief.modes.retain(|m| env.is_state_valid(&m.mean));
    if belief.modes.is_empty() {
        belief.modes.push(best_mode);
    }
    belief.normalize();
    before - belief.len()
}

/// Generate the initial multi-modal belief: seed uniform valid samples as
/// equally weighted modes with covariance sigma0, then repeatedly sense
/// (`sensing` executes one in-place rotation step and returns the applied
/// control plus the acquired observation), update weights and prune, until
/// the mode count is unchanged for `k_stable` consecutive rounds.
pub fn sample_initial_belief<F>(
    env: &Environment,
    params: &BeliefParams,
    init: &InitialBeliefParams,
    mut sensing: F,
    rng: &mut impl Rng,
) -> Result<GmmBelief, BeliefError>
where
    F: FnMut() -> (Control, ObservationVector),
{
    // Positions uniform over free space; headings uniform via four strata
    // with jitter, so every position gets one heading within 45 degrees of
    // any orientation (the filter burn-in below converges those reliably).
    let mut samples = Vec::with_capacity(init.n_samples);
    let positions = (init.n_samples / 4).max(1);
    let budget = init.tries_per_sample * positions;
    let mut tries = 0;
    while samples.len() < 4 * positions {
        if tries >= budget {
            if samples.is_empty() {
                return Err(BeliefError::Sampling(budget));
            }
            break;
        }
        tries += 1;
        let p = env.sample_position(rng);
        if !env.is_state_valid(&RobotState::new(p.x, p.y, 0.0)) {
            continue;
        }
        let jitter = rng.gen_range(-std::f64::consts::FRAC_PI_4..std::f64::consts::FRAC_PI_4);
        for k in 0..4 {
            let theta = jitter + k as f64 * std::f64::consts::FRAC_PI_2;
            samples.push(RobotState::new(p.x, p.y, theta));
        }
    }

    let w = 1.0 / samples.len() as f64;
    let sigma0 = init.sigma0_matrix();
    let mut belief = GmmBelief {
        modes: samples
            .into_iter()
            .map(|s| GaussianMode::new(w, s, sigma0))
            .collect(),
    };

    // burn-in: refine every sample toward its locally consistent pose
    // before any weight is touched; iterated updates keep far-off samples
    // from freezing on a biased linearization
    for _ in 0..init.warmup_steps {
        let (u, z) = sensing();
        for mode in &mut belief.modes {
            ekf_predict(mode, u, params);
        }
        for mode in &mut belief.modes {
            let pred = predict_observation(env, &mode.mean);
            let assoc = associate(&pred, &z);
            if assoc.n_matched() > 0 {
                let _ = ekf_update_iterated(mode, &assoc, 4);
            }
        }
        prune_invalid_means(&mut belief, env);
    }

    // one consolidation pass: refined samples that agree become a single
    // hypothesis, and the composed hypotheses start out equally likely
    consolidate_clusters(&mut belief, 4.0 * init.dedup_pos, 3.0 * init.dedup_theta);

    let mut stable_rounds = 0;
    let mut last_count = belief.len();
    for _ in 0..init.max_rounds {
        for _ in 0..init.sweep_steps {
            let (u, z) = sensing();
            for mode in &mut belief.modes {
                ekf_predict(mode, u, params);
            }
            let predictions: Vec<ObservationVector> = belief
                .modes
                .iter()
                .map(|m| predict_observation(env, &m.mean))
                .collect();
            let updates = update_weights(&mut belief, &z, &predictions, params)?;
            for (mode, upd) in belief.modes.iter_mut().zip(&updates) {
                if upd.assoc.n_matched() > 0 {
                    ekf_update(mode, &upd.assoc)?;
                }
            }
            prune_invalid_means(&mut belief, env);
            // merge co-converged samples before thresholding, so a basin's
            // weight is judged as a whole; while the mixture is still large
            // the threshold is relative to the uniform share
            dedup_modes(&mut belief, init.dedup_pos, init.dedup_theta);
            let threshold = params.delta_w.min(0.5 / belief.len() as f64);
            prune(&mut belief, threshold);
        }
        if belief.len() == last_count {
            stable_rounds += 1;
            if stable_rounds >= init.k_stable {
                break;
            }
        } else {
            stable_rounds = 0;
            last_count = belief.len();
        }
    }
    belief.normalize();
    Ok(belief)
}
