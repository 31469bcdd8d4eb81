//! Gradient ascent with step halving.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("non-finite objective at the starting point")]
    NonFiniteObjective,
}

#[derive(Debug, Clone, Copy)]
pub struct AscentConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Halvings tried before a step is abandoned and the run stops.
    pub max_halvings: u32,
}

impl AscentConfig {
    pub fn new(steps: usize, step_size: f64) -> Self {
        Self { steps, step_size, max_halvings: 40 }
    }
}

/// Objective values: `values[0]` at the start, one more per accepted step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub values: Vec<f64>,
    pub final_step_size: f64,
}

impl Trace {
    pub fn accepted_steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// Maximizes `f` from `x0`. `f` returns the objective and its gradient.
///
/// A step `x + η∇f` is accepted only if it does not decrease the objective;
/// otherwise `η` is halved and the step retried.
pub fn ascend<E>(
    x0: Vec<f64>,
    config: AscentConfig,
    mut f: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
) -> Result<(Vec<f64>, Trace), E>
where
    E: From<OptimError>,
{
    let mut x = x0;
    let mut trace = Trace { values: Vec::new(), final_step_size: config.step_size };
    if config.steps == 0 {
        return Ok((x, trace));
    }
    let (mut value, mut grad) = f(&x)?;
    if !value.is_finite() {
        return Err(OptimError::NonFiniteObjective.into());
    }
    trace.values.push(value);
    let mut eta = config.step_size;
    'steps: for step in 0..config.steps {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient { step }.into());
        }
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        for _ in 0..=config.max_halvings {
            let candidate: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + eta * gi).collect();
            let (v, g) = f(&candidate)?;
            if v.is_finite() && v >= value {
                x = candidate;
                value = v;
                grad = g;
                trace.values.push(value);
                continue 'steps;
            }
            eta *= 0.5;
        }
        break;
    }
    trace.final_step_size = eta;
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn concave(x: &[f64]) -> Result<(f64, Vec<f64>), OptimError> {
        let v = -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2);
        Ok((v, vec![-2.0 * (x[0] - 1.0), -4.0 * (x[1] + 0.5)]))
    }

    #[test]
    fn zero_steps_is_identity() {
        let (x, trace) = ascend(vec![3.0, 4.0], AscentConfig::new(0, 0.1), concave).unwrap();
        assert_eq!(x, vec![3.0, 4.0]);
        assert!(trace.values.is_empty());
    }

    #[test]
    fn trace_is_non_decreasing_even_with_a_huge_step() {
        let (x, trace) = ascend(vec![3.0, 4.0], AscentConfig::new(50, 10.0), concave).unwrap();
        assert!(trace.values.windows(2).all(|w| w[1] >= w[0]));
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let err = ascend(vec![0.0], AscentConfig::new(3, 0.1), |_| Ok::<_, OptimError>((0.0, vec![f64::NAN])))
            .unwrap_err();
        assert_eq!(err, OptimError::NonFiniteGradient { step: 0 });
    }
}
