//! Embedded Dormand–Prince 4(5) integration over dense states.
//!
//! The same stepper drives the classical master equation (real probability
//! vectors) and the dense Lindblad solvers (complex density matrices), so the
//! state is abstracted behind [`OdeState`]. Step control is the usual
//! PI-free accept/reject rule with a stability cap supplied by the caller
//! for generators whose spectral radius is known.

use crate::error::{Error, Result};
use crate::spin_space::C64;
use nalgebra::{DMatrix, DVector};

pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;
    /// self += a * x
    fn axpy(&mut self, a: f64, x: &Self);
    fn set_zero(&mut self);
    /// max_i |err_i| / (atol + rtol * max(|y0_i|, |y1_i|))
    fn error_ratio(&self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64;
}

impl OdeState for DVector<f64> {
    fn zeros_like(&self) -> Self {
        DVector::zeros(self.len())
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        self.axpy(a, x, 1.0);
    }

    fn set_zero(&mut self) {
        self.fill(0.0);
    }

    fn error_ratio(&self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            let scale = atol + rtol * y0[i].abs().max(y1[i].abs());
            worst = worst.max(self[i].abs() / scale);
        }
        worst
    }
}

impl OdeState for DMatrix<C64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        let a = C64::new(a, 0.0);
        self.zip_apply(x, |s, v| *s += a * v);
    }

    fn set_zero(&mut self) {
        self.fill(C64::ZERO);
    }

    fn error_ratio(&self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            let scale = atol + rtol * y0[i].norm().max(y1[i].norm());
            worst = worst.max(self[i].norm() / scale);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on the step size, e.g. a stability bound 2.5/ρ(G).
    pub dt_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            dt_max: None,
            max_steps: 50_000_000,
        }
    }
}

// Dormand–Prince coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th-order minus 4th-order weights (error estimator).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `dy/dt = rhs(y)` from t = 0, invoking `on_output(i, y)` at every
/// requested time (which must be non-decreasing; `times[0]` may be 0).
pub fn integrate_to_times<S: OdeState>(
    mut rhs: impl FnMut(&S, &mut S),
    y0: &S,
    times: &[f64],
    opts: &OdeOptions,
    mut on_output: impl FnMut(usize, &S),
) -> Result<()> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Integration("output times must be non-decreasing".into()));
    }
    let mut y = y0.clone();
    let mut t = 0.0f64;
    let mut out_idx = 0;
    while out_idx < times.len() && times[out_idx] <= t {
        on_output(out_idx, &y);
        out_idx += 1;
    }
    if out_idx >= times.len() {
        return Ok(());
    }

    let mut k1 = y.zeros_like();
    let mut k2 = y.zeros_like();
    let mut k3 = y.zeros_like();
    let mut k4 = y.zeros_like();
    let mut k5 = y.zeros_like();
    let mut k6 = y.zeros_like();
    let mut k7 = y.zeros_like();
    let mut stage = y.zeros_like();
    let mut y_next = y.zeros_like();
    let mut err = y.zeros_like();

    rhs(&y, &mut k1);
    let t_end = *times.last().unwrap();
    let mut dt = (opts.dt_max.unwrap_or(t_end / 100.0))
        .min(t_end / 100.0)
        .max(1e-12);
    let mut steps = 0usize;
    let mut k1_fresh = true;

    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Integration(format!(
                "exceeded {} steps at t = {t:.6e}",
                opts.max_steps
            )));
        }
        if let Some(cap) = opts.dt_max {
            dt = dt.min(cap);
        }
        // Land exactly on the next output time.
        let t_target = times[out_idx];
        if t + dt > t_target {
            dt = t_target - t;
        }
        if dt <= t.abs().max(1.0) * 1e-15 {
            return Err(Error::Integration(format!("step underflow at t = {t:.6e}")));
        }

        if !k1_fresh {
            rhs(&y, &mut k1);
            k1_fresh = true;
        }

        stage.clone_from(&y);
        stage.axpy(dt * A21, &k1);
        rhs(&stage, &mut k2);

        stage.clone_from(&y);
        stage.axpy(dt * A31, &k1);
        stage.axpy(dt * A32, &k2);
        rhs(&stage, &mut k3);

        stage.clone_from(&y);
        stage.axpy(dt * A41, &k1);
        stage.axpy(dt * A42, &k2);
        stage.axpy(dt * A43, &k3);
        rhs(&stage, &mut k4);

        stage.clone_from(&y);
        stage.axpy(dt * A51, &k1);
        stage.axpy(dt * A52, &k2);
        stage.axpy(dt * A53, &k3);
        stage.axpy(dt * A54, &k4);
        rhs(&stage, &mut k5);

        stage.clone_from(&y);
        stage.axpy(dt * A61, &k1);
        stage.axpy(dt * A62, &k2);
        stage.axpy(dt * A63, &k3);
        stage.axpy(dt * A64, &k4);
        stage.axpy(dt * A65, &k5);
        rhs(&stage, &mut k6);

        y_next.clone_from(&y);
        y_next.axpy(dt * B1, &k1);
        y_next.axpy(dt * B3, &k3);
        y_next.axpy(dt * B4, &k4);
        y_next.axpy(dt * B5, &k5);
        y_next.axpy(dt * B6, &k6);
        rhs(&y_next, &mut k7);

        err.set_zero();
        err.axpy(dt * E1, &k1);
        err.axpy(dt * E3, &k3);
        err.axpy(dt * E4, &k4);
        err.axpy(dt * E5, &k5);
        err.axpy(dt * E6, &k6);
        err.axpy(dt * E7, &k7);
        let ratio = err.error_ratio(&y, &y_next, opts.rtol, opts.atol);

        if ratio <= 1.0 {
            t += dt;
            std::mem::swap(&mut y, &mut y_next);
            std::mem::swap(&mut k1, &mut k7); // FSAL
            while out_idx < times.len() && t >= times[out_idx] - 1e-14 * times[out_idx].abs() - 1e-300 {
                on_output(out_idx, &y);
                out_idx += 1;
            }
            if out_idx >= times.len() {
                return Ok(());
            }
        } else {
            k1_fresh = true; // k1 still matches y (step rejected)
        }
        let factor = if ratio > 0.0 {
            0.9 * ratio.powf(-0.2)
        } else {
            5.0
        };
        dt *= factor.clamp(0.2, 5.0);
    }
    Ok(())
}
