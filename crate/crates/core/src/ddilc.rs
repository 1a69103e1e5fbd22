//! Data-driven iterative learning controller.
//!
//! The plant is treated as an unknown repetitive map `y(t+1) = f(y(t), u(t))`
//! that is linearized along the time axis as `dy(t+1) = Phi(t) du_b(t)`.
//! `Phi` is tracked with a projection estimator plus a reset mechanism,
//! feedback gains are adapted by gradient descent on a one-step tracking
//! cost, and a feedforward term is learned along the iteration axis.
//!
//! Per tick `t` of iteration `k` the applied input is
//!
//! ```text
//! u(t,k) = sat( u_b(t-1,k) + Xi(t,k) dE(t+1,k) + u_f(t,k) )
//! u_f(t,k) = u_f(t,k-1) + beta e(t+1,k-1)
//! ```
//!
//! where `dE(t+1,k)` stacks the last `window` error increments, the newest
//! one using the one-step error prediction.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdilcParams {
    /// Gain-update step size.
    pub eta: f64,
    /// Input-increment weight in the feedback cost.
    pub lambda: f64,
    /// Estimator step size, in (0, 1].
    pub rho: f64,
    /// Estimator regularization weight.
    pub mu: f64,
    /// Feedforward learning gain as a fraction of the inverse sensitivity.
    pub beta_gain: f64,
    /// Number of error increments in the feedback window.
    pub window: usize,
    /// Ticks of look-ahead in the feedforward update; 1 is the plain
    /// next-sample law. Larger values add phase lead for slow plants.
    pub lead: usize,
    /// Off-diagonal magnitude bound of the PJM estimate.
    pub c1: f64,
    /// Lower diagonal magnitude bound of the PJM estimate.
    pub c2: f64,
    /// Upper diagonal bound is `a_diag * c2`.
    pub a_diag: f64,
    /// Initial feedback gain on the diagonal of the newest increment block.
    pub xi_init: f64,
    /// Half-width of the seeded uniform perturbation of the initial gains.
    pub xi_jitter: f64,
    /// Elementwise saturation bound of the feedback gain matrix.
    pub xi_bound: f64,
    /// Task displacement (m) produced by a unit controller output.
    pub output_scale: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for DdilcParams {
    fn default() -> Self {
        Self {
            eta: 0.5,
            lambda: 1.0,
            rho: 1.0,
            mu: 1.0,
            beta_gain: 0.3,
            window: 1,
            lead: 100,
            c1: 0.005,
            c2: 0.2,
            a_diag: 4.0,
            xi_init: 0.5,
            xi_jitter: 0.05,
            xi_bound: 5.0,
            output_scale: 0.5,
            u_min: 0.0,
            u_max: 1.0,
        }
    }
}

fn invalid(field: &str, message: String) -> Error {
    Error::ConfigInvalid {
        field: field.to_string(),
        message,
    }
}

impl DdilcParams {
    /// Check ranges, including the diagonal-dominance condition
    /// `c2 > c1 (2 a + 1)(m - 1)` for output dimension `m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(invalid("rho", format!("must be in (0, 1], got {}", self.rho)));
        }
        for (name, v) in [
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("c1", self.c1),
            ("c2", self.c2),
            ("output_scale", self.output_scale),
            ("xi_bound", self.xi_bound),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.beta_gain >= 0.0 && self.beta_gain < 2.0) {
            return Err(invalid("beta_gain", format!("must be in [0, 2), got {}", self.beta_gain)));
        }
        if !(self.xi_jitter >= 0.0) || !self.xi_init.is_finite() {
            return Err(invalid("xi_jitter", "must be >= 0".into()));
        }
        if self.lead == 0 {
            return Err(invalid("lead", "must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be >= 1".into()));
        }
        if !(self.a_diag >= 1.0) {
            return Err(invalid("a_diag", format!("must be >= 1, got {}", self.a_diag)));
        }
        let needed = self.c1 * (2.0 * self.a_diag + 1.0) * (m.saturating_sub(1)) as f64;
        if !(self.c2 > needed) {
            return Err(invalid(
                "c2",
                format!("must exceed c1 (2 a_diag + 1)(m - 1) = {needed} for m = {m}"),
            ));
        }
        if !(self.u_min < self.u_max) {
            return Err(invalid("u_min", "must be below u_max".into()));
        }
        Ok(())
    }
}

/// Partitioned Jacobian estimate with its reset reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PjmEstimate {
    pub phi_hat: DMatrix<f64>,
    /// Estimate at the first tick; reset target and sign reference.
    pub phi_init: DMatrix<f64>,
    pub c1: f64,
    pub c2: f64,
    pub a_diag: f64,
}

impl PjmEstimate {
    pub fn new(phi_init: DMatrix<f64>, params: &DdilcParams) -> Result<Self> {
        if !phi_init.is_square() {
            return Err(Error::Dimension("PJM must be square".into()));
        }
        let est = Self {
            phi_hat: phi_init.clone(),
            phi_init,
            c1: params.c1,
            c2: params.c2,
            a_diag: params.a_diag,
        };
        if !est.within_bounds() {
            return Err(invalid(
                "phi_init",
                "initial PJM violates the magnitude bounds".into(),
            ));
        }
        Ok(est)
    }

    fn element_ok(&self, i: usize, j: usize, v: f64) -> bool {
        let reference = self.phi_init[(i, j)];
        let sign_ok = reference == 0.0 || v.signum() == reference.signum();
        let mag = v.abs();
        if i == j {
            sign_ok && v != 0.0 && mag >= self.c2 && mag <= self.a_diag * self.c2
        } else {
            sign_ok && mag <= self.c1
        }
    }

    /// True when every element satisfies the magnitude and sign conditions.
    pub fn within_bounds(&self) -> bool {
        let m = self.phi_hat.nrows();
        (0..m).all(|i| (0..m).all(|j| self.element_ok(i, j, self.phi_hat[(i, j)])))
    }

    /// Restore every violating element to its first-tick value. Returns the
    /// number of elements reset.
    pub fn reset_pass(&mut self) -> usize {
        let m = self.phi_hat.nrows();
        let mut resets = 0;
        for i in 0..m {
            for j in 0..m {
                if !self.element_ok(i, j, self.phi_hat[(i, j)]) {
                    self.phi_hat[(i, j)] = self.phi_init[(i, j)];
                    resets += 1;
                }
            }
        }
        resets
    }

    /// Projection update
    /// `Phi += rho (dy - Phi du) du^T / (mu + |du|^2)` followed by a reset pass.
    pub fn update(&mut self, dy: &DVector<f64>, du: &DVector<f64>, rho: f64, mu: f64) -> usize {
        let innovation = dy - &self.phi_hat * du;
        let denom = mu + du.norm_squared();
        self.phi_hat += innovation * du.transpose() * (rho / denom);
        self.reset_pass()
    }
}

/// Pure form of [`PjmEstimate::update`].
pub fn estimate_pjm(
    est: &PjmEstimate,
    dy: &DVector<f64>,
    du_b: &DVector<f64>,
    params: &DdilcParams,
) -> PjmEstimate {
    let mut next = est.clone();
    next.update(dy, du_b, params.rho, params.mu);
    next
}

/// Gradient step on the feedback gains followed by elementwise saturation:
/// `Xi - eta lambda Xi dE dE^T + eta Phi^T e dE^T`.
pub fn update_feedback_gain(
    xi: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    e_t: &DVector<f64>,
    delta_e: &DVector<f64>,
    params: &DdilcParams,
) -> DMatrix<f64> {
    let decay = xi * delta_e * delta_e.transpose() * (params.eta * params.lambda);
    let drive = phi.transpose() * e_t * delta_e.transpose() * params.eta;
    let bound = params.xi_bound;
    (xi - decay + drive).map(|v| v.clamp(-bound, bound))
}

/// One-step error prediction `y_d(t+1) - y(t) - Phi du_b`.
pub fn predict_error(
    y_d_next: &DVector<f64>,
    y_t: &DVector<f64>,
    phi: &DMatrix<f64>,
    du_b: &DVector<f64>,
) -> DVector<f64> {
    y_d_next - y_t - phi * du_b
}

/// Feedback increment `Xi dE`.
pub fn feedback_control(xi: &DMatrix<f64>, delta_e: &DVector<f64>) -> DVector<f64> {
    xi * delta_e
}

/// Iteration-axis update `u_f(t) += beta e_prev(t+1)` over the horizon.
/// The final tick reuses the last recorded error.
pub fn feedforward_update(
    u_ff: &[DVector<f64>],
    e_prev: &[DVector<f64>],
    beta: &DMatrix<f64>,
) -> Vec<DVector<f64>> {
    feedforward_update_lead(u_ff, e_prev, beta, 1)
}

/// As [`feedforward_update`] with `e_prev(t+lead)`; ticks past the end
/// reuse the last recorded error.
pub fn feedforward_update_lead(
    u_ff: &[DVector<f64>],
    e_prev: &[DVector<f64>],
    beta: &DMatrix<f64>,
    lead: usize,
) -> Vec<DVector<f64>> {
    let last = e_prev.len().saturating_sub(1);
    u_ff.iter()
        .enumerate()
        .map(|(t, u)| u + beta * &e_prev[(t + lead).min(last)])
        .collect()
}

/// Sum of feedback and feedforward parts clamped to `[u_min, u_max]`.
pub fn compose_control(
    u_b: &DVector<f64>,
    u_f: &DVector<f64>,
    params: &DdilcParams,
) -> DVector<f64> {
    (u_b + u_f).map(|v| v.clamp(params.u_min, params.u_max))
}

/// Learning memory carried between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct IlcMemory {
    pub u_ff: Vec<DVector<f64>>,
    pub e_prev: Vec<DVector<f64>>,
    pub xi_hat: DMatrix<f64>,
    pub delta_e_window: VecDeque<DVector<f64>>,
}

/// Controller state for repeated trials over a fixed horizon.
#[derive(Debug, Clone)]
pub struct Ddilc {
    pub params: DdilcParams,
    pub beta: DMatrix<f64>,
    pub pjm: PjmEstimate,
    pub memory: IlcMemory,
    u_b_start: DVector<f64>,
    u_b: DVector<f64>,
    du_b_prev: DVector<f64>,
    y_prev: Option<DVector<f64>>,
    /// Newest first.
    e_hist: VecDeque<DVector<f64>>,
    delta_e: DVector<f64>,
    iteration: usize,
    pjm_resets: usize,
}

impl Ddilc {
    /// `phi_init` is the sensitivity estimate from the probe; `beta` is set
    /// to `beta_gain * phi_init^-1`. `u_b_start` is the feedback bias that
    /// holds the start posture.
    pub fn new(
        params: DdilcParams,
        phi_init: DMatrix<f64>,
        u_b_start: DVector<f64>,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let m = phi_init.nrows();
        params.validate(m)?;
        if u_b_start.len() != m || horizon < 2 {
            return Err(Error::Dimension("controller bias or horizon".into()));
        }
        let pjm = PjmEstimate::new(phi_init.clone(), &params)?;
        let inv = phi_init
            .try_inverse()
            .ok_or_else(|| invalid("phi_init", "sensitivity matrix is singular".into()))?;
        let beta = inv * params.beta_gain;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = m * params.window;
        let mut xi = DMatrix::zeros(m, cols);
        for i in 0..m {
            for j in 0..cols {
                let base = if i == j { params.xi_init } else { 0.0 };
                let jitter = if params.xi_jitter > 0.0 {
                    rng.gen_range(-params.xi_jitter..=params.xi_jitter)
                } else {
                    0.0
                };
                xi[(i, j)] = (base + jitter).clamp(-params.xi_bound, params.xi_bound);
            }
        }
        let memory = IlcMemory {
            u_ff: vec![DVector::zeros(m); horizon],
            e_prev: Vec::new(),
            xi_hat: xi,
            delta_e_window: VecDeque::new(),
        };
        Ok(Self {
            params,
            beta,
            pjm,
            memory,
            u_b: u_b_start.clone(),
            u_b_start,
            du_b_prev: DVector::zeros(m),
            y_prev: None,
            e_hist: VecDeque::new(),
            delta_e: DVector::zeros(cols),
            iteration: 0,
            pjm_resets: 0,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.pjm.phi_hat.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.memory.u_ff.len()
    }

    /// Iterations completed so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn pjm_resets(&self) -> usize {
        self.pjm_resets
    }

    /// Prepare iteration `k`: apply the feedforward update from the last
    /// iteration's errors and clear the within-trial state.
    pub fn begin_iteration(&mut self) {
        if !self.memory.e_prev.is_empty() {
            self.memory.u_ff = feedforward_update_lead(
                &self.memory.u_ff,
                &self.memory.e_prev,
                &self.beta,
                self.params.lead,
            );
        }
        self.pjm.phi_hat = self.pjm.phi_init.clone();
        self.u_b = self.u_b_start.clone();
        self.du_b_prev = DVector::zeros(self.output_dim());
        self.y_prev = None;
        self.e_hist.clear();
        self.delta_e = DVector::zeros(self.output_dim() * self.params.window);
        self.memory.delta_e_window.clear();
        self.pjm_resets = 0;
    }

    /// Control input for tick `t` given the measured output and the desired
    /// trajectory.
    pub fn control(&mut self, t: usize, y_t: &DVector<f64>, y_d: &[DVector<f64>]) -> DVector<f64> {
        let m = self.output_dim();
        let last = y_d.len() - 1;
        let e_t = &y_d[t.min(last)] - y_t;

        if let Some(y_prev) = &self.y_prev {
            let dy = y_t - y_prev;
            self.pjm_resets += self
                .pjm
                .update(&dy, &self.du_b_prev, self.params.rho, self.params.mu);
        }
        let e_next = predict_error(&y_d[(t + 1).min(last)], y_t, &self.pjm.phi_hat, &self.du_b_prev);

        // dE(t+1): newest increment from the prediction, older from history
        let mut increments = Vec::with_capacity(self.params.window);
        increments.push(&e_next - &e_t);
        let mut newer = e_t.clone();
        for older in self.e_hist.iter().take(self.params.window - 1) {
            increments.push(&newer - older);
            newer = older.clone();
        }
        let mut delta_next = DVector::zeros(m * self.params.window);
        for (w, inc) in increments.iter().enumerate() {
            delta_next.rows_mut(w * m, m).copy_from(inc);
        }

        self.memory.xi_hat = update_feedback_gain(
            &self.memory.xi_hat,
            &self.pjm.phi_hat,
            &e_t,
            &self.delta_e,
            &self.params,
        );
        let du_b = feedback_control(&self.memory.xi_hat, &delta_next);
        self.u_b += &du_b;
        let u = compose_control(&self.u_b, &self.memory.u_ff[t.min(self.horizon() - 1)], &self.params);

        self.du_b_prev = du_b;
        self.y_prev = Some(y_t.clone());
        self.e_hist.push_front(e_t);
        self.e_hist.truncate(self.params.window);
        self.memory.delta_e_window.push_front(delta_next.clone());
        self.memory.delta_e_window.truncate(self.params.window);
        self.delta_e = delta_next;
        u
    }

    /// Store this iteration's error series for the next feedforward update.
    pub fn end_iteration(&mut self, errors: Vec<DVector<f64>>) {
        self.memory.e_prev = errors;
        self.iteration += 1;
    }

    /// Halve the learning gain (divergence monitor).
    pub fn halve_beta(&mut self) {
        self.beta *= 0.5;
    }

    /// Replace the learned feedforward and forget the last error series.
    pub fn restart_feedforward(&mut self, u_ff: Vec<DVector<f64>>) {
        self.memory.u_ff = u_ff;
        self.memory.e_prev.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn scalar_params() -> DdilcParams {
        DdilcParams {
            c2: 0.5,
            a_diag: 8.0,
            ..DdilcParams::default()
        }
    }

    #[test]
    fn pjm_examples() {
        let p = scalar_params();
        let est = PjmEstimate::new(DMatrix::from_element(1, 1, 1.0), &p).unwrap();
        assert_eq!(estimate_pjm(&est, &s(0.7), &s(0.0), &p), est);
        assert_eq!(estimate_pjm(&est, &s(0.3), &s(0.3), &p), est);
        let next = estimate_pjm(&est, &s(2.0), &s(1.0), &p);
        assert!((next.phi_hat[(0, 0)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn pjm_reset_restores_violations() {
        let p = DdilcParams::default();
        let init = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5, 0.5]));
        let mut est = PjmEstimate::new(init.clone(), &p).unwrap();
        est.phi_hat[(0, 0)] = -0.3;
        est.phi_hat[(0, 1)] = 0.1;
        est.phi_hat[(1, 1)] = 0.6;
        assert_eq!(est.reset_pass(), 2);
        assert_eq!(est.phi_hat[(0, 0)], 0.5);
        assert_eq!(est.phi_hat[(0, 1)], 0.0);
        assert_eq!(est.phi_hat[(1, 1)], 0.6);
        assert!(est.within_bounds());
    }

    #[test]
    fn gain_update_examples() {
        let p = DdilcParams {
            eta: 0.5,
            lambda: 1.0,
            ..DdilcParams::default()
        };
        let xi = DMatrix::from_element(1, 1, 0.1);
        let phi = DMatrix::from_element(1, 1, 2.0);
        let next = update_feedback_gain(&xi, &phi, &s(0.3), &s(1.0), &p);
        assert!((next[(0, 0)] - 0.35).abs() < 1e-15);

        let still = update_feedback_gain(&xi, &phi, &s(0.0), &s(0.0), &p);
        assert_eq!(still, xi);
        let frozen = update_feedback_gain(&xi, &phi, &s(0.3), &s(1.0), &DdilcParams { eta: 0.0, ..p });
        assert_eq!(frozen, xi);
    }

    #[test]
    fn prediction_and_feedback_examples() {
        let phi = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(predict_error(&s(1.0), &s(0.8), &phi, &s(0.0)), s(1.0 - 0.8));
        assert_eq!(predict_error(&s(0.8), &s(0.8), &phi, &s(0.0)), s(0.0));
        let e = predict_error(&s(1.0), &s(0.8), &phi, &s(0.05));
        assert!((e[0] - 0.1).abs() < 1e-15);

        let xi = DMatrix::from_element(1, 1, 0.35);
        assert_eq!(feedback_control(&DMatrix::zeros(1, 1), &s(0.4)), s(0.0));
        assert_eq!(feedback_control(&xi, &s(0.0)), s(0.0));
        assert!((feedback_control(&xi, &s(0.1))[0] - 0.035).abs() < 1e-15);
    }

    #[test]
    fn feedforward_examples() {
        let beta = DMatrix::from_element(1, 1, 0.5);
        let u = vec![s(0.0), s(0.0), s(0.0)];
        let zero = vec![s(0.0); 3];
        assert_eq!(feedforward_update(&u, &zero, &beta), u);
        let e = vec![s(0.0), s(0.2), s(0.0)];
        let next = feedforward_update(&u, &e, &beta);
        assert!((next[0][0] - 0.1).abs() < 1e-15);
        assert_eq!(next[1][0], 0.0);
    }

    #[test]
    fn lead_shifts_the_error_sample() {
        let beta = DMatrix::from_element(1, 1, 1.0);
        let u = vec![s(0.0); 4];
        let e = vec![s(0.0), s(1.0), s(2.0), s(3.0)];
        let next = feedforward_update_lead(&u, &e, &beta, 2);
        let got: Vec<f64> = next.iter().map(|v| v[0]).collect();
        assert_eq!(got, vec![2.0, 3.0, 3.0, 3.0]);
        assert_eq!(feedforward_update(&u, &e, &beta), feedforward_update_lead(&u, &e, &beta, 1));
    }

    #[test]
    fn compose_saturates() {
        let p = DdilcParams::default();
        assert_eq!(compose_control(&s(1.0), &s(0.3), &p), s(1.0));
        assert_eq!(compose_control(&s(-0.5), &s(0.3), &p), s(0.0));
        assert_eq!(compose_control(&s(0.4), &s(0.07), &p)[0], 0.4 + 0.07);
    }

    #[test]
    fn diagonal_dominance_condition_checked() {
        let p = DdilcParams::default();
        assert!(p.validate(3).is_ok());
        assert!(p.validate(8).is_err());
        let bad = DdilcParams { rho: 1.5, ..p.clone() };
        assert!(bad.validate(2).is_err());
    }

    #[test]
    fn first_iteration_has_zero_feedforward() {
        let phi = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5, 0.5]));
        let mut c = Ddilc::new(DdilcParams::default(), phi, DVector::from_element(2, 0.5), 10, 0).unwrap();
        c.begin_iteration();
        assert!(c.memory.u_ff.iter().all(|u| u.norm() == 0.0));
        let y_d = vec![DVector::from_element(2, 0.1); 10];
        let u = c.control(0, &DVector::from_element(2, 0.1), &y_d);
        assert_eq!(u, DVector::from_element(2, 0.5));
    }

    #[test]
    fn seeded_gain_initialization_is_deterministic() {
        let phi = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5, 0.5]));
        let a = Ddilc::new(DdilcParams::default(), phi.clone(), DVector::from_element(2, 0.5), 5, 7).unwrap();
        let b = Ddilc::new(DdilcParams::default(), phi.clone(), DVector::from_element(2, 0.5), 5, 7).unwrap();
        let c = Ddilc::new(DdilcParams::default(), phi, DVector::from_element(2, 0.5), 5, 8).unwrap();
        assert_eq!(a.memory.xi_hat, b.memory.xi_hat);
        assert_ne!(a.memory.xi_hat, c.memory.xi_hat);
    }
}
