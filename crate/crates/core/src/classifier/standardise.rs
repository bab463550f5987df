use super::ClassifierError;

/// Per-feature z-scoring with population statistics. Features without
/// variance keep a divisor of 1 and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardiser {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl Standardiser {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ClassifierError> {
        let first = rows.first().ok_or(ClassifierError::EmptyTrainingSet)?;
        let dim = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(ClassifierError::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let mut std = Vec::with_capacity(dim);
        let mut zero_variance = Vec::with_capacity(dim);
        for s in var {
            let sd = (s / n).sqrt();
            let degenerate = !(sd.is_finite() && sd > 0.0);
            zero_variance.push(degenerate);
            std.push(if degenerate { 1.0 } else { sd });
        }
        Ok(Self {
            mean,
            std,
            zero_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform_all<R: AsRef<[f64]>>(&self, rows: &[R]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r.as_ref())).collect()
    }
}
