//! Hill-type muscle-tendon unit.
//!
//! A contractile fiber in series with an elastic tendon. Excitation `u` is
//! filtered into activation `a` by first-order dynamics with asymmetric
//! time constants. Fiber length is a state; fiber velocity is recovered
//! every tick from the force equilibrium between tendon and fiber by
//! inverting the force-velocity curve.
//!
//! All curves work in normalized units: lengths over the optimal fiber
//! length, forces over the maximum isometric force, fiber velocity in
//! optimal fiber lengths per second.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to activation inside the equilibrium solve.
pub const ACTIVATION_FLOOR: f64 = 0.01;

/// Plateau of the force-velocity curve for lengthening fibers.
pub const FV_PLATEAU: f64 = 1.6;

/// `a * fl` below this is treated as a degenerate equilibrium.
const ACTIVE_FORCE_FLOOR: f64 = 1e-9;

/// Margin keeping the force-velocity inverse away from its asymptotes.
const FV_CLAMP_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuscleParams {
    /// Maximum isometric force (N).
    pub f0_max: f64,
    /// Optimal fiber length (m).
    pub l0_fiber: f64,
    /// Tendon slack length (m).
    pub l_slack_tendon: f64,
    /// Cosine of the pennation angle.
    pub pennation_factor: f64,
    /// Activation time constant (s).
    pub t_act: f64,
    /// Deactivation time constant (s).
    pub t_deact: f64,
    /// Width of the Gaussian active force-length curve.
    pub gamma: f64,
    /// Passive exponential shape factor.
    pub k_pe: f64,
    /// Passive fiber strain at maximum isometric force.
    pub eps0_m: f64,
    /// Tendon strain at maximum isometric force.
    pub eps0_t: f64,
    /// Tendon toe-region shape factor.
    pub k_toe: f64,
    /// Normalized tendon force at the toe/linear transition.
    pub f_toe: f64,
}

impl Default for MuscleParams {
    fn default() -> Self {
        Self {
            f0_max: 500.0,
            l0_fiber: 0.10,
            l_slack_tendon: 0.20,
            pennation_factor: 1.0,
            t_act: 0.010,
            t_deact: 0.040,
            gamma: 0.45,
            k_pe: 4.0,
            eps0_m: 0.6,
            eps0_t: 0.04,
            k_toe: 3.0,
            f_toe: 0.33,
        }
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}

fn check_positive_length(value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "l_norm",
            value,
            domain: "(0, inf)",
        })
    }
}

impl MuscleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f0_max", self.f0_max),
            ("l0_fiber", self.l0_fiber),
            ("l_slack_tendon", self.l_slack_tendon),
            ("t_act", self.t_act),
            ("t_deact", self.t_deact),
            ("gamma", self.gamma),
            ("k_pe", self.k_pe),
            ("eps0_m", self.eps0_m),
            ("eps0_t", self.eps0_t),
            ("k_toe", self.k_toe),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid {
                    field: name.to_string(),
                    message: format!("must be > 0, got {v}"),
                });
            }
        }
        if !(self.pennation_factor > 0.0 && self.pennation_factor <= 1.0) {
            return Err(Error::ConfigInvalid {
                field: "pennation_factor".into(),
                message: format!("must be in (0, 1], got {}", self.pennation_factor),
            });
        }
        if !(self.f_toe > 0.0 && self.f_toe < 1.0) {
            return Err(Error::ConfigInvalid {
                field: "f_toe".into(),
                message: format!("must be in (0, 1), got {}", self.f_toe),
            });
        }
        Ok(())
    }

    /// Slope of the toe region at the transition, times `eps_toe`.
    fn toe_slope_factor(&self) -> f64 {
        let e = self.k_toe.exp();
        self.f_toe * self.k_toe * e / (e - 1.0)
    }

    /// Strain where the tendon curve turns linear.
    ///
    /// Solved from slope continuity plus `ft(eps0_t) = 1`; for the default
    /// shape constants this gives `0.6086 * eps0_t`.
    pub fn eps_toe(&self) -> f64 {
        let c = self.toe_slope_factor();
        self.eps0_t * c / (c + 1.0 - self.f_toe)
    }

    /// Linear tendon stiffness above the toe (normalized force per strain),
    /// `1.7119 / eps0_t` for the default shape constants.
    pub fn k_lin(&self) -> f64 {
        (self.toe_slope_factor() + 1.0 - self.f_toe) / self.eps0_t
    }

    pub fn activation_time_constant(&self, u: f64, a: f64) -> Result<f64> {
        check_unit("u", u)?;
        check_unit("a", a)?;
        Ok(if u >= a {
            self.t_act * (0.5 + 1.5 * a)
        } else {
            self.t_deact / (0.5 + 1.5 * a)
        })
    }

    pub fn activation_rate(&self, u: f64, a: f64) -> Result<f64> {
        Ok((u - a) / self.activation_time_constant(u, a)?)
    }

    /// Gaussian active force-length curve, peak 1 at the optimal length.
    pub fn active_force_length(&self, l_norm: f64) -> Result<f64> {
        check_positive_length(l_norm)?;
        let d = l_norm - 1.0;
        Ok((-2.0 * d * d / self.gamma).exp())
    }

    /// Exponential passive force-length curve; 0 at optimal length and 1 at
    /// `1 + eps0_m`.
    pub fn passive_force_length(&self, l_norm: f64) -> Result<f64> {
        check_positive_length(l_norm)?;
        Ok(((self.k_pe * (l_norm - 1.0) / self.eps0_m).exp() - 1.0) / (self.k_pe.exp() - 1.0))
    }

    /// Normalized tendon force. Slack tendons (strain <= 0) carry no force.
    pub fn tendon_force(&self, strain: f64) -> f64 {
        if strain <= 0.0 {
            return 0.0;
        }
        let eps_toe = self.eps_toe();
        if strain <= eps_toe {
            self.f_toe / (self.k_toe.exp() - 1.0)
                * ((self.k_toe * strain / eps_toe).exp() - 1.0)
        } else {
            self.k_lin() * (strain - eps_toe) + self.f_toe
        }
    }

    /// Inverse of [`Self::tendon_force`] for positive forces.
    pub fn strain_for_force(&self, force_norm: f64) -> f64 {
        if force_norm <= 0.0 {
            return 0.0;
        }
        let eps_toe = self.eps_toe();
        if force_norm <= self.f_toe {
            let e = self.k_toe.exp();
            eps_toe / self.k_toe * (force_norm * (e - 1.0) / self.f_toe + 1.0).ln()
        } else {
            eps_toe + (force_norm - self.f_toe) / self.k_lin()
        }
    }

    /// MTU length that holds the fiber at `l_fiber_norm` in isometric
    /// equilibrium under activation `a`.
    pub fn isometric_mtu_length(&self, a: f64, l_fiber_norm: f64) -> Result<f64> {
        check_unit("a", a)?;
        let fm = a.max(ACTIVATION_FLOOR) * self.active_force_length(l_fiber_norm)? * force_velocity(0.0)?
            + self.passive_force_length(l_fiber_norm)?;
        let strain = self.strain_for_force(fm * self.pennation_factor);
        Ok(l_fiber_norm * self.l0_fiber * self.pennation_factor
            + self.l_slack_tendon * (1.0 + strain))
    }

    /// Tendon strain for a given total MTU length and normalized fiber length.
    pub fn tendon_strain(&self, l_mtu: f64, l_fiber_norm: f64) -> f64 {
        let l_tendon = l_mtu - l_fiber_norm * self.l0_fiber * self.pennation_factor;
        (l_tendon - self.l_slack_tendon) / self.l_slack_tendon
    }

    /// Fiber velocity satisfying tendon/fiber force balance for the given
    /// fiber length, activation and MTU length.
    pub fn fiber_velocity_from_equilibrium(
        &self,
        state: &MuscleState,
        a: f64,
        l_mtu: f64,
    ) -> Result<(f64, MuscleDiagnostics)> {
        check_unit("a", a)?;
        if !(l_mtu > 0.0) {
            return Err(Error::Domain {
                name: "l_mtu",
                value: l_mtu,
                domain: "(0, inf)",
            });
        }
        let mut diag = MuscleDiagnostics::default();
        let a_eff = if a < ACTIVATION_FLOOR {
            diag.activation_floor_hits += 1;
            ACTIVATION_FLOOR
        } else {
            a
        };
        let l = state.l_fiber_norm;
        let fl = self.active_force_length(l)?;
        let fpe = self.passive_force_length(l)?;
        let active = a_eff * fl;
        if active < ACTIVE_FORCE_FLOOR {
            return Err(Error::DegenerateEquilibrium(active));
        }
        let strain = self.tendon_strain(l_mtu, l);
        if strain <= 0.0 {
            diag.slack_events += 1;
        }
        let ft = self.tendon_force(strain);
        let target = (ft / self.pennation_factor - fpe) / active;
        let (lo, hi) = fv_clamp_bounds();
        let clamped = target.clamp(lo, hi);
        if clamped != target {
            diag.fv_clamps += 1;
        }
        Ok((inverse_force_velocity(clamped)?, diag))
    }

    /// Advance one muscle by `dt`: exact exponential activation step, then an
    /// explicit Euler fiber-length step. Returns the new state and the
    /// tendon force in newtons.
    pub fn step_muscle(
        &self,
        state: &MuscleState,
        u: f64,
        l_mtu: f64,
        dt: f64,
    ) -> Result<MuscleStep> {
        if !(dt > 0.0) {
            return Err(Error::Domain {
                name: "dt",
                value: dt,
                domain: "(0, inf)",
            });
        }
        check_unit("u", u)?;
        let a = state.activation;
        let tau = self.activation_time_constant(u, a)?;
        let a_next = (u + (a - u) * (-dt / tau).exp()).clamp(0.0, 1.0);

        let (v, diagnostics) = self.fiber_velocity_from_equilibrium(state, a, l_mtu)?;
        let l_next = state.l_fiber_norm + v * dt;
        if !(l_next > 0.0) || !l_next.is_finite() {
            return Err(Error::Domain {
                name: "l_fiber_norm",
                value: l_next,
                domain: "(0, inf)",
            });
        }
        let next = MuscleState {
            activation: a_next,
            l_fiber_norm: l_next,
            v_fiber_norm: v,
        };
        let force = self.f0_max * self.tendon_force(self.tendon_strain(l_mtu, l_next));
        Ok(MuscleStep {
            state: next,
            force,
            diagnostics,
        })
    }

    /// Tendon force (N) for a given state and MTU length.
    pub fn force(&self, state: &MuscleState, l_mtu: f64) -> f64 {
        self.f0_max * self.tendon_force(self.tendon_strain(l_mtu, state.l_fiber_norm))
    }
}

/// Evolving state of one muscle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleState {
    pub activation: f64,
    pub l_fiber_norm: f64,
    pub v_fiber_norm: f64,
}

impl MuscleState {
    /// Static equilibrium (zero fiber velocity) at activation `a` and MTU
    /// length `l_mtu`, found by bisection on fiber length.
    pub fn equilibrium(params: &MuscleParams, a: f64, l_mtu: f64) -> Result<Self> {
        check_unit("a", a)?;
        let a_eff = a.max(ACTIVATION_FLOOR);
        let fv0 = force_velocity(0.0)?;
        let residual = |l: f64| -> f64 {
            let ft = params.tendon_force(params.tendon_strain(l_mtu, l)) / params.pennation_factor;
            let fl = params.active_force_length(l).unwrap_or(0.0);
            let fpe = params.passive_force_length(l).unwrap_or(0.0);
            ft - (a_eff * fl * fv0 + fpe)
        };
        let mut lo = 0.2;
        let mut hi = (l_mtu - params.l_slack_tendon) / (params.l0_fiber * params.pennation_factor);
        if !(hi > lo) || residual(lo) <= 0.0 || residual(hi) >= 0.0 {
            return Err(Error::InvalidModel(format!(
                "no fiber equilibrium for l_mtu = {l_mtu} m at activation {a}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(Self {
            activation: a,
            l_fiber_norm: 0.5 * (lo + hi),
            v_fiber_norm: 0.0,
        })
    }
}

/// Result of [`MuscleParams::step_muscle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleStep {
    pub state: MuscleState,
    pub force: f64,
    pub diagnostics: MuscleDiagnostics,
}

/// Counters for guard-rail events inside the muscle solver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MuscleDiagnostics {
    pub activation_floor_hits: u64,
    pub fv_clamps: u64,
    pub slack_events: u64,
}

impl std::ops::AddAssign for MuscleDiagnostics {
    fn add_assign(&mut self, rhs: Self) {
        self.activation_floor_hits += rhs.activation_floor_hits;
        self.fv_clamps += rhs.fv_clamps;
        self.slack_events += rhs.slack_events;
    }
}

// Force-velocity curve. The exponent is written in terms of w = 1 - v so
// the curve rises from ~0.07 at v = -1 through ~1.01 at v = 0 to the 1.6
// plateau as v -> 1.
fn fv_exponent(w: f64) -> f64 {
    let w2 = w * w;
    -1.1 / (w2 * w2) + 0.1 / w2
}

fn fv_exponent_slope(w: f64) -> f64 {
    // d/dv of the exponent (dw/dv = -1).
    let w3 = w * w * w;
    -(4.4 / (w3 * w * w) - 0.2 / w3)
}

/// Normalized force-velocity multiplier.
pub fn force_velocity(v_norm: f64) -> Result<f64> {
    if !(v_norm < 1.0) {
        return Err(Error::Domain {
            name: "v_norm",
            value: v_norm,
            domain: "(-inf, 1)",
        });
    }
    Ok(FV_PLATEAU - FV_PLATEAU * fv_exponent(1.0 - v_norm).exp())
}

fn force_velocity_slope(v_norm: f64) -> f64 {
    let w = 1.0 - v_norm;
    -FV_PLATEAU * fv_exponent(w).exp() * fv_exponent_slope(w)
}

/// Admissible range for the force-velocity inverse inside the equilibrium
/// solve.
pub fn fv_clamp_bounds() -> (f64, f64) {
    let lo = FV_PLATEAU - FV_PLATEAU * fv_exponent(2.0).exp();
    (lo + FV_CLAMP_MARGIN, FV_PLATEAU - FV_CLAMP_MARGIN)
}

/// Inverse of [`force_velocity`] on its monotone branch, by safeguarded
/// Newton iteration inside a shrinking bracket.
pub fn inverse_force_velocity(fv_target: f64) -> Result<f64> {
    if !(fv_target > 0.0 && fv_target < FV_PLATEAU) {
        return Err(Error::OutOfRange(fv_target));
    }
    // fv crosses zero at w = sqrt(11); the curve is increasing for all v
    // above that point.
    let mut lo = 1.0 - 11f64.sqrt();
    let mut hi = 1.0;
    let f = |v: f64| FV_PLATEAU - FV_PLATEAU * fv_exponent(1.0 - v).exp() - fv_target;
    let mut v = 0.0_f64.clamp(lo, hi - 1e-12);
    for _ in 0..200 {
        let r = f(v);
        if r.abs() <= 1e-13 {
            return Ok(v);
        }
        if r > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let slope = force_velocity_slope(v);
        let newton = v - r / slope;
        v = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(v)
}
