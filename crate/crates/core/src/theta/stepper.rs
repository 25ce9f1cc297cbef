//! Modified Craig–Sneyd ADI step for `∂_τ U = A₀U + Σ_a A_a U + s(U)`.
//!
//! `A_a` are the per-axis three-point operators (implicit), `A₀` the mixed
//! and jump terms plus the source `s` (explicit). With no implicit axes the
//! step reduces to Heun's method.

use super::generator::{AxisScratch, Generator};

#[derive(Debug, Default)]
pub struct Workspace {
    au: Vec<Vec<f64>>,
    f0u: Vec<f64>,
    fu: Vec<f64>,
    y0: Vec<f64>,
    y: Vec<f64>,
    f0y: Vec<f64>,
    fy: Vec<f64>,
    scratch: AxisScratch,
}

impl Workspace {
    fn ensure(&mut self, axes: usize, len: usize) {
        self.au.resize_with(axes, Vec::new);
        for v in self.au.iter_mut().chain([
            &mut self.f0u,
            &mut self.fu,
            &mut self.y0,
            &mut self.y,
            &mut self.f0y,
            &mut self.fy,
        ]) {
            v.resize(len, 0.0);
        }
    }
}

/// Advance `u` (with `m` components per node) by `dt` in backward time.
///
/// `src_old(state, out)` and `src_new(state, out)` add the explicit source
/// evaluated at the start and end of the step.
#[allow(clippy::too_many_arguments)]
pub fn mcs_step(
    gen: &Generator,
    theta: f64,
    dt: f64,
    u: &mut [f64],
    m: usize,
    src_old: &mut dyn FnMut(&[f64], &mut [f64]),
    src_new: &mut dyn FnMut(&[f64], &mut [f64]),
    ws: &mut Workspace,
) {
    let k = gen.implicit_axes();
    let len = u.len();
    ws.ensure(k, len);
    let td = theta * dt;

    gen.apply_explicit(u, m, &mut ws.f0u, false);
    src_old(u, &mut ws.f0u);
    ws.fu.copy_from_slice(&ws.f0u);
    for a in 0..k {
        gen.apply_axis(a, u, m, &mut ws.au[a], false);
        for (f, x) in ws.fu.iter_mut().zip(&ws.au[a]) {
            *f += x;
        }
    }
    for i in 0..len {
        ws.y0[i] = u[i] + dt * ws.fu[i];
    }
    ws.y.copy_from_slice(&ws.y0);
    for a in 0..k {
        for (y, x) in ws.y.iter_mut().zip(&ws.au[a]) {
            *y -= td * x;
        }
        gen.solve_axis(a, td, &mut ws.y, m, &mut ws.scratch);
    }

    gen.apply_explicit(&ws.y, m, &mut ws.f0y, false);
    src_new(&ws.y, &mut ws.f0y);
    ws.fy.copy_from_slice(&ws.f0y);
    for a in 0..k {
        gen.apply_axis(a, &ws.y, m, &mut ws.fy, true);
    }
    for i in 0..len {
        u[i] = ws.y0[i] + td * (ws.f0y[i] - ws.f0u[i]) + (0.5 - theta) * dt * (ws.fy[i] - ws.fu[i]);
    }
    for a in 0..k {
        for (y, x) in u.iter_mut().zip(&ws.au[a]) {
            *y -= td * x;
        }
        gen.solve_axis(a, td, u, m, &mut ws.scratch);
    }
}
