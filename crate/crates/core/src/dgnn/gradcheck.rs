//! Central finite-difference verification of the analytic gradients on a
//! micro model (3 joints, 4 frames, 2 channels per block).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{dropout_mask, forward_input, model_backward, ModelConfig, ModelParams, NetInput};
use super::train::cross_entropy;
use crate::error::{Error, Result};
use crate::skeleton::{incidence_matrices, DirectedSkeletonGraph, IncidencePair, IntentionClass};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor holding the worst element.
    pub worst_tensor: String,
    pub checked: usize,
}

pub fn micro_config() -> ModelConfig {
    ModelConfig {
        in_channels: 3,
        channels: vec![2, 2, 2],
        temporal_kernel: 3,
        fc_hidden: 4,
        dropout: 0.3,
        window_length: 4,
        frame_step: 1,
    }
}

struct Problem {
    inc: IncidencePair,
    inputs: Vec<(NetInput, IntentionClass, Vec<f64>)>,
}

impl Problem {
    fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let graph = DirectedSkeletonGraph::new(3, 0, vec![(0, 1), (1, 2)])?;
        let inc = incidence_matrices(&graph);
        let frames = config.window_length;
        let width = 2 * config.channels.last().copied().unwrap_or(0);
        let mut inputs = Vec::new();
        for label in [IntentionClass::Push, IntentionClass::Idle] {
            let vertices = (0..frames * 3 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let edges = (0..frames * 2 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mask = dropout_mask(width, config.dropout, rng);
            inputs.push((NetInput { frames, vertices, edges }, label, mask));
        }
        Ok(Problem { inc, inputs })
    }

    fn loss(&self, params: &ModelParams) -> Result<f64> {
        let mut total = 0.0;
        for (input, label, mask) in &self.inputs {
            let (logits, _) = forward_input(input, params, &self.inc, Some(mask.clone()))?;
            total += cross_entropy(&logits, *label)?.0;
        }
        Ok(total / self.inputs.len() as f64)
    }

    fn gradient(&self, params: &ModelParams) -> Result<ModelParams> {
        let mut grads = params.zeros_like();
        let scale = 1.0 / self.inputs.len() as f64;
        for (input, label, mask) in &self.inputs {
            let (logits, cache) = forward_input(input, params, &self.inc, Some(mask.clone()))?;
            let (_, d) = cross_entropy(&logits, *label)?;
            model_backward(&cache, params, &self.inc, &d.map(|x| x * scale), &mut grads);
        }
        Ok(grads)
    }
}

/// Max element-wise relative error `|a - n| / max(|a|, |n|, 1e-8)` between
/// analytic and central-difference gradients over every parameter.
pub fn grad_check(params_seed: u64, epsilon: f64) -> Result<f64> {
    Ok(grad_check_with(params_seed, epsilon, None)?.max_rel_error)
}

/// As [`grad_check`]; `corrupt = Some((name, factor))` scales the analytic
/// gradient of the named tensor before comparison.
pub fn grad_check_with(params_seed: u64, epsilon: f64, corrupt: Option<(&str, f64)>) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let config = micro_config();
    let mut rng = ChaCha8Rng::seed_from_u64(params_seed);
    // unit-scale weights and non-zero biases keep gradients well above the
    // finite-difference noise floor in a net this narrow
    let mut params = ModelParams::zeros(&config)?;
    for (name, t) in params.tensors_mut() {
        let bound = if name.ends_with("bias") { 0.2 } else { 1.0 };
        t.data.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
    }
    let problem = Problem::new(&config, &mut rng)?;
    let mut analytic = problem.gradient(&params)?;
    if let Some((name, factor)) = corrupt {
        let found = analytic
            .tensors_mut()
            .into_iter()
            .filter(|(n, _)| n.ends_with(name))
            .map(|(_, t)| t.scale(factor))
            .count();
        if found == 0 {
            return Err(Error::Precondition(format!("no tensor named {name}")));
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        checked: 0,
    };
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    for (ti, name) in names.iter().enumerate() {
        let len = params.tensors()[ti].1.len();
        for i in 0..len {
            let original = params.tensors()[ti].1.data[i];
            params.tensors_mut()[ti].1.data[i] = original + epsilon;
            let plus = problem.loss(&params)?;
            params.tensors_mut()[ti].1.data[i] = original - epsilon;
            let minus = problem.loss(&params)?;
            params.tensors_mut()[ti].1.data[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.tensors()[ti].1.data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_tensor = name.clone();
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
