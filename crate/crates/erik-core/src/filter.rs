//! Per-joint output filter: jerk, acceleration and velocity limited
//! set-point tracking with a soft position limiter. One tick is one time
//! step, so all limits are per-tick quantities.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::sig6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub velocity_limit: f64,
    pub acceleration_limit: f64,
    pub jerk_limit: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Exponent of the limiter's deceleration near the bounds.
    pub beta: f64,
    /// Smoothness, in [0, 1].
    pub sigma: f64,
    /// Responsiveness, in [0, 1).
    pub rho: f64,
    /// Ticks per second; only used by the unit conversions and trace time.
    pub rate: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            velocity_limit: 0.1,
            acceleration_limit: 0.02,
            jerk_limit: 0.01,
            p_min: -std::f64::consts::FRAC_PI_2,
            p_max: std::f64::consts::FRAC_PI_2,
            beta: 1.0,
            sigma: 0.0,
            rho: 0.0,
            rate: 50.0,
        }
    }
}

impl FilterParams {
    /// Builds per-tick limits from per-second ones at `rate` ticks/s.
    #[allow(clippy::too_many_arguments)]
    pub fn from_per_second(
        velocity: f64,
        acceleration: f64,
        jerk: f64,
        rate: f64,
        p_min: f64,
        p_max: f64,
        beta: f64,
        sigma: f64,
        rho: f64,
    ) -> FilterParams {
        FilterParams {
            velocity_limit: velocity / rate,
            acceleration_limit: acceleration / (rate * rate),
            jerk_limit: jerk / (rate * rate * rate),
            p_min,
            p_max,
            beta,
            sigma,
            rho,
            rate,
        }
    }

    /// Per-second velocity, acceleration and jerk limits.
    pub fn per_second_limits(&self) -> (f64, f64, f64) {
        let r = self.rate;
        (self.velocity_limit * r, self.acceleration_limit * r * r, self.jerk_limit * r * r * r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma <= 1.0) {
            return Err(invalid("sigma must satisfy 0 <= sigma <= 1"));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(invalid("rho must satisfy 0 <= rho < 1"));
        }
        if !(self.p_min < self.p_max) {
            return Err(invalid("p_min must be below p_max"));
        }
        for (name, v) in [
            ("velocity_limit", self.velocity_limit),
            ("acceleration_limit", self.acceleration_limit),
            ("jerk_limit", self.jerk_limit),
            ("beta", self.beta),
            ("rate", self.rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub x_prev: f64,
    pub xdot_prev: f64,
    pub xddot_prev: f64,
    pub t_index: u64,
}

impl FilterState {
    /// At rest at `x0`, clamped into the bounds.
    pub fn at(x0: f64, params: &FilterParams) -> FilterState {
        FilterState {
            x_prev: x0.clamp(params.p_min, params.p_max),
            ..FilterState::default()
        }
    }
}

/// λ(x, k): tanh saturation with range (−k/2, k/2) and unit slope at 0.
pub fn saturate(x: f64, k: f64) -> f64 {
    let h = k / 2.0;
    h * (x / h).tanh()
}

/// Η(v): character shaping of the induced velocity.
pub fn shape(v: f64, sigma: f64, rho: f64) -> f64 {
    let g = (v.abs() / (1.0 - rho)).powf(1.0 - sigma);
    v / 2.0 * ((g - std::f64::consts::PI).tanh() + 1.0)
}

/// Ω: slows motion heading away from the centre of the corridor, reaching
/// zero at the bounds. Mirrored for both bounds.
pub fn soft_limit(xdot: f64, x: f64, p_max: f64, p_min: f64, beta: f64) -> f64 {
    let half = (p_max - p_min) / 2.0;
    let r = (x - p_min - half) / half;
    if (r > 0.0 && xdot > 0.0) || (r < 0.0 && xdot < 0.0) {
        xdot * (1.0 - r.abs().powf(2.0 * beta))
    } else {
        xdot
    }
}

/// What one tick commanded, next to the position it produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterTick {
    pub output: f64,
    /// Commanded velocity, within acceleration_limit/2 of the previous velocity.
    pub velocity: f64,
    /// Commanded acceleration, within jerk_limit/2 of the previous acceleration.
    pub acceleration: f64,
}

/// One tick toward `set_point`, also reporting the commanded velocity and
/// acceleration. The state's history holds realized per-tick differences.
pub fn filter_tick(state: &FilterState, set_point: f64, p: &FilterParams) -> (FilterState, FilterTick) {
    let (x, u, a) = (state.x_prev, state.xdot_prev, state.xddot_prev);
    let induced = set_point - x;
    let v = soft_limit(induced, x, p.p_max, p.p_min, p.beta);
    let wanted = shape(v, p.sigma, p.rho);
    let accel = a + saturate(wanted - u - a, p.jerk_limit);
    let vel = u + saturate(accel, p.acceleration_limit);
    let out = (x + saturate(vel, p.velocity_limit)).clamp(p.p_min, p.p_max);
    let moved = out - x;
    (
        FilterState {
            x_prev: out,
            xdot_prev: moved,
            xddot_prev: moved - u,
            t_index: state.t_index + 1,
        },
        FilterTick {
            output: out,
            velocity: vel,
            acceleration: accel,
        },
    )
}

/// One tick toward `set_point`. Returns the new state and the output.
pub fn filter_step(state: &FilterState, set_point: f64, p: &FilterParams) -> (FilterState, f64) {
    let (next, tick) = filter_tick(state, set_point, p);
    (next, tick.output)
}

/// Independent per-joint ticks toward the angles of a solution.
pub fn filter_chain_step(states: &mut [FilterState], set_points: &[f64], params: &[FilterParams]) -> Result<Vec<f64>> {
    if states.len() != set_points.len() || params.len() != set_points.len() {
        return Err(invalid(format!(
            "filter chain length mismatch: {} states, {} set-points, {} parameter sets",
            states.len(),
            set_points.len(),
            params.len()
        )));
    }
    Ok(states
        .iter_mut()
        .zip(set_points)
        .zip(params)
        .map(|((st, &s), p)| {
            let (next, out) = filter_step(st, s, p);
            *st = next;
            out
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub set_point: f64,
    pub output: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

/// Runs each set-point for one tick.
pub fn run_trace(x0: f64, script: &[f64], params: &FilterParams) -> Result<Vec<TraceRow>> {
    params.validate()?;
    let mut st = FilterState::at(x0, params);
    Ok(script
        .iter()
        .map(|&s| {
            let (next, out) = filter_step(&st, s, params);
            st = next;
            TraceRow {
                t: st.t_index as f64 / params.rate,
                set_point: s,
                output: out,
                velocity: st.xdot_prev,
                acceleration: st.xddot_prev,
            }
        })
        .collect())
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "set_point", "output", "velocity", "acceleration"])
        .map_err(crate::io::csv_err)?;
    for r in rows {
        w.write_record([r.t, r.set_point, r.output, r.velocity, r.acceleration].map(sig6))
            .map_err(crate::io::csv_err)?;
    }
    w.flush()?;
    Ok(())
}
