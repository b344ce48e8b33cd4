//! Self test: finite-difference checks of every differentiable op and of
//! the assembled network, plus the reversal twin-network comparison.

use grhd::autodiff::gradcheck::{check_gradients, GradCheckConfig};
use grhd::autodiff::{AutodiffError, BnMode, Graph, Tensor, Var};
use grhd::model::selfcheck::{network_gradcheck, reversal_twin_error};
use grhd::model::Reversal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

pub const OP_TOLERANCE: f64 = 1e-6;
pub const TWIN_TOLERANCE: f64 = 1e-9;
/// Seeds of the twin comparison.
pub const TWIN_SEEDS: u64 = 20;
/// Reversal intensity of the twin comparison.
pub const TWIN_LAMBDA: f64 = 0.37;
/// Inputs drawn per op.
const DRAWS: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn render(&self) -> String {
        format!(
            "{:<28} max_rel_err={:.3e} tol={:.0e} {}",
            self.name,
            self.max_rel_err,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

type R = Result<Var, AutodiffError>;
type OpFn = fn(&mut Graph<f64>, &[Var]) -> R;

/// Weights the output with a fixed non-uniform pattern so every element
/// carries a distinct upstream gradient.
fn project(g: &mut Graph<f64>, y: Var) -> R {
    let n = g.value(y).numel();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7919 % 17) as f64 - 8.0) / 8.0 + 0.05).collect();
    let c = g.constant(Tensor::new(g.shape(y).to_vec(), w)?);
    let p = g.mul(y, c)?;
    Ok(g.sum(p))
}

fn op_table() -> Vec<(&'static str, Vec<Vec<usize>>, OpFn)> {
    vec![
        ("add_mul_scale", vec![vec![3, 2], vec![3, 2]], |g, v| {
            let a = g.add(v[0], v[1])?;
            let m = g.mul(a, v[0])?;
            let s = g.scale(m, -1.7);
            let mean = g.mean(s);
            let p = project(g, m)?;
            g.add(p, mean)
        }),
        ("relu", vec![vec![4, 5]], |g, v| {
            let y = g.relu(v[0]);
            project(g, y)
        }),
        ("dense", vec![vec![3, 4], vec![5, 4], vec![5]], |g, v| {
            let y = g.dense(v[0], v[1], Some(v[2]))?;
            project(g, y)
        }),
        ("conv2d", vec![vec![2, 2, 5, 6], vec![3, 2, 3, 3], vec![3]], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), (2, 2), (1, 1))?;
            project(g, y)
        }),
        ("conv2d_asymmetric", vec![vec![1, 3, 4, 7], vec![2, 3, 2, 3], vec![2]], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), (1, 2), (0, 1))?;
            project(g, y)
        }),
        ("conv1d", vec![vec![2, 1, 20], vec![3, 1, 6], vec![3]], |g, v| {
            let y = g.conv1d(v[0], v[1], Some(v[2]), 3, 0)?;
            project(g, y)
        }),
        ("batch_norm_train", vec![vec![3, 2, 2, 2], vec![2], vec![2]], |g, v| {
            let (y, _) = g.batch_norm(v[0], v[1], v[2], BnMode::Train { eps: 1e-5 })?;
            project(g, y)
        }),
        ("batch_norm_eval", vec![vec![2, 3, 4], vec![3], vec![3]], |g, v| {
            let mode = BnMode::Eval {
                mean: &[0.1, -0.2, 0.3],
                var: &[0.5, 1.5, 2.0],
                eps: 1e-5,
            };
            let (y, _) = g.batch_norm(v[0], v[1], v[2], mode)?;
            project(g, y)
        }),
        ("global_avg_pool", vec![vec![2, 3, 2, 4]], |g, v| {
            let y = g.global_avg_pool(v[0])?;
            project(g, y)
        }),
        ("softmax", vec![vec![3, 4]], |g, v| {
            let y = g.softmax(v[0])?;
            project(g, y)
        }),
        ("reshape_concat", vec![vec![2, 3, 2], vec![2, 1, 2]], |g, v| {
            let c = g.concat(&[v[0], v[1]], 1)?;
            let r = g.reshape(c, vec![4, 4])?;
            project(g, r)
        }),
        ("cross_entropy", vec![vec![4, 3]], |g, v| g.cross_entropy(v[0], &[0, 2, 1, 2])),
        ("focal_loss_weighted", vec![vec![4, 3]], |g, v| {
            g.focal_loss(v[0], &[0, 2, 1, 2], 2.0, Some(&[0.5, 1.0, 1.5]))
        }),
        ("grad_scale_chain", vec![vec![3, 4], vec![2, 4]], |g, v| {
            // Forward ignores the scale, so only a unit factor is
            // visible to finite differences; the twin check covers -lambda.
            let r = g.grad_scale(v[0], 1.0);
            let y = g.dense(r, v[1], None)?;
            project(g, y)
        }),
    ]
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches")
}

fn op_checks(seed: u64) -> Result<Vec<CheckLine>, CliError> {
    let cfg = GradCheckConfig {
        tolerance: OP_TOLERANCE,
        ..GradCheckConfig::default()
    };
    let mut lines = Vec::new();
    for (name, shapes, f) in op_table() {
        let mut worst = 0.0f64;
        for draw in 0..DRAWS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(draw));
            let blocks: Vec<(String, Tensor<f64>)> = shapes
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("in{i}"), random(s, &mut rng)))
                .collect();
            let report = check_gradients(&blocks, f, cfg).map_err(grhd::model::ModelError::from)?;
            worst = worst.max(report.max_rel_err());
        }
        lines.push(CheckLine {
            name: format!("op {name}"),
            max_rel_err: worst,
            tolerance: OP_TOLERANCE,
        });
    }
    Ok(lines)
}

/// Runs the whole suite. `inject_sign_flip` swaps the reversal for a
/// gradient scale of `+lambda` so the twin check must fail.
pub fn run_suite(seed: u64, inject_sign_flip: bool) -> Result<Vec<CheckLine>, CliError> {
    let mut lines = op_checks(seed)?;
    let reversal = if inject_sign_flip {
        Reversal::SignFlipFault
    } else {
        Reversal::Reverse
    };
    let mut twin = 0.0f64;
    for s in 0..TWIN_SEEDS {
        twin = twin.max(reversal_twin_error(seed.wrapping_add(s), TWIN_LAMBDA, reversal)?);
    }
    lines.push(CheckLine {
        name: format!("reversal twin x{TWIN_SEEDS}"),
        max_rel_err: twin,
        tolerance: TWIN_TOLERANCE,
    });
    let cfg = GradCheckConfig::default();
    for block in network_gradcheck(seed, 12, cfg.step, cfg.floor)? {
        lines.push(CheckLine {
            name: format!("net {}", block.name),
            max_rel_err: block.max_rel_err,
            tolerance: OP_TOLERANCE,
        });
    }
    Ok(lines)
}
