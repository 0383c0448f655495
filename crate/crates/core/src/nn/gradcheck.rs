//! Central finite-difference gradient verification.

use crate::error::Result;
use crate::nn::Parameter;

/// A scalar objective of its own parameters.
pub trait Differentiable {
    fn named_params(&mut self) -> Vec<(String, &mut Parameter)>;

    /// Loss only. Must be deterministic in the parameter values.
    fn loss(&mut self) -> Result<f64>;

    /// Loss plus analytic gradients accumulated into each `Parameter::grad`.
    /// Gradients are zeroed by the caller.
    fn loss_and_grad(&mut self) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub h: f64,
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so that gradients at
    /// the finite-difference noise floor do not read as large relative errors.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Perturbs every coordinate by `±h` and compares the central difference with
/// the analytic gradient.
pub fn grad_check<M: Differentiable>(model: &mut M, cfg: GradCheckConfig) -> Result<GradCheckReport> {
    for (_, p) in model.named_params() {
        p.zero_grad();
    }
    model.loss_and_grad()?;
    let analytic: Vec<(String, Vec<f64>)> = model
        .named_params()
        .into_iter()
        .map(|(n, p)| (n, p.grad.data().to_vec()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        tolerance: cfg.tolerance,
    };
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = model.named_params()[pi].1.value.data()[j];
            model.named_params()[pi].1.value.data_mut()[j] = orig + cfg.h;
            let up = model.loss()?;
            model.named_params()[pi].1.value.data_mut()[j] = orig - cfg.h;
            let down = model.loss()?;
            model.named_params()[pi].1.value.data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * cfg.h);
            let err = relative_error(a, numeric, cfg.floor);
            if report.checked == 0 || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = j;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
            report.checked += 1;
        }
    }
    for (_, p) in model.named_params() {
        p.zero_grad();
    }
    Ok(report)
}
