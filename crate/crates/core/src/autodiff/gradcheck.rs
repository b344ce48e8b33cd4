//! Central-difference gradient checking.

use super::{AutodiffError, Graph, Tensor, Var};
use crate::Scalar;

/// Relative error is `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// near-zero gradients from turning rounding noise into large ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub floor: f64,
    pub tolerance: f64,
    /// Entries checked per block, evenly spaced; `None` checks all.
    pub max_entries: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-3,
            tolerance: 1e-6,
            max_entries: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_err < self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(|b| !(b.max_rel_err < self.tolerance))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Gradients of the scalar built by `f` with respect to each input.
pub fn analytic_gradients<S, F>(inputs: &[Tensor<S>], f: &F) -> Result<Vec<Tensor<S>>, AutodiffError>
where
    S: Scalar,
    F: Fn(&mut Graph<S>, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    Ok(vars.iter().map(|v| grads.tensor(&g, *v)).collect())
}

/// Value of the scalar built by `f`, no gradients.
pub fn evaluate<S, F>(inputs: &[Tensor<S>], f: &F) -> Result<S, AutodiffError>
where
    S: Scalar,
    F: Fn(&mut Graph<S>, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).numel() != 1 {
        return Err(AutodiffError::ShapeMismatch("objective is not a scalar".into()));
    }
    Ok(g.value(out).item())
}

fn checked_indices(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
        _ => (0..n).collect(),
    }
}

fn compare<F>(
    names: &[&str],
    mut inputs: Vec<Tensor<f64>>,
    analytic: &[Vec<f64>],
    f: &F,
    config: GradCheckConfig,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, AutodiffError>,
{
    let h = config.step;
    let mut blocks = Vec::with_capacity(inputs.len());
    for b in 0..inputs.len() {
        let mut worst = (0.0f64, 0usize);
        let idx = checked_indices(inputs[b].numel(), config.max_entries);
        for &i in &idx {
            let orig = inputs[b].data()[i];
            inputs[b].data_mut()[i] = orig + h;
            let up = evaluate(&inputs, f)?;
            inputs[b].data_mut()[i] = orig - h;
            let down = evaluate(&inputs, f)?;
            inputs[b].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic[b][i], numeric, config.floor);
            if !(err <= worst.0) {
                worst = (err, i);
            }
        }
        blocks.push(BlockReport {
            name: names[b].to_string(),
            checked: idx.len(),
            max_rel_err: worst.0,
            worst_index: worst.1,
        });
    }
    Ok(GradCheckReport {
        blocks,
        tolerance: config.tolerance,
    })
}

/// Compares analytic gradients with central differences for every named
/// input block. Both are computed in 64-bit.
pub fn check_gradients<F>(
    named_inputs: &[(String, Tensor<f64>)],
    f: F,
    config: GradCheckConfig,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, AutodiffError>,
{
    let names: Vec<&str> = named_inputs.iter().map(|(n, _)| n.as_str()).collect();
    let inputs: Vec<Tensor<f64>> = named_inputs.iter().map(|(_, t)| t.clone()).collect();
    let analytic: Vec<Vec<f64>> = analytic_gradients(&inputs, &f)?
        .into_iter()
        .map(Tensor::into_data)
        .collect();
    compare(&names, inputs, &analytic, &f, config)
}

/// Like [`check_gradients`] but the analytic side runs in 32-bit while the
/// reference differences stay in 64-bit, taken at the f32-rounded point.
pub fn check_gradients_f32<F32, F64>(
    named_inputs: &[(String, Tensor<f64>)],
    f32_fn: F32,
    f64_fn: F64,
    config: GradCheckConfig,
) -> Result<GradCheckReport, AutodiffError>
where
    F32: Fn(&mut Graph<f32>, &[Var]) -> Result<Var, AutodiffError>,
    F64: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, AutodiffError>,
{
    let names: Vec<&str> = named_inputs.iter().map(|(n, _)| n.as_str()).collect();
    let inputs32: Vec<Tensor<f32>> = named_inputs.iter().map(|(_, t)| t.cast()).collect();
    let inputs: Vec<Tensor<f64>> = inputs32.iter().map(Tensor::cast).collect();
    let analytic: Vec<Vec<f64>> = analytic_gradients(&inputs32, &f32_fn)?
        .iter()
        .map(|t| t.data().iter().map(|v| *v as f64).collect())
        .collect();
    compare(&names, inputs, &analytic, &f64_fn, config)
}
