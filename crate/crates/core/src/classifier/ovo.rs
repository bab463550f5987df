//! One-vs-one multiclass machines and nested cost selection.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::standardise::Standardiser;
use super::svm::{solve, SolverParams};
use super::ClassifierError;
use crate::evaluation::uar_from_indices;

/// Cost values searched during model selection.
pub const COST_GRID: [f64; 7] = [0.0001, 0.001, 0.005, 0.05, 0.1, 0.5, 1.0];

/// Pairwise machine between `first` and `second` (`first < second`).
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub first: usize,
    pub second: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub cost: f64,
    /// One side had no training data; the machine always votes for the other.
    pub degenerate: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Positive decisions vote `first`, negative ones `second`; zero goes to
    /// the lower index.
    pub fn vote(&self, decision: f64) -> usize {
        if decision >= 0.0 {
            self.first
        } else {
            self.second
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub votes: Vec<usize>,
    /// Sum of |decision| over the machines that voted for each class.
    pub strength: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvoModel {
    pub n_classes: usize,
    pub cost: f64,
    pub standardiser: Standardiser,
    /// Machines in lexicographic pair order: (0,1), (0,2), ..., (K-2,K-1).
    pub machines: Vec<BinarySvm>,
}

/// Per-class cost multipliers `N / (K * n_k)`; absent classes get 0.
pub fn class_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                n / (n_classes as f64 * c as f64)
            }
        })
        .collect()
}

fn pairs(n_classes: usize) -> Vec<(usize, usize)> {
    (0..n_classes)
        .flat_map(|i| (i + 1..n_classes).map(move |j| (i, j)))
        .collect()
}

fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    seed ^ ((i as u64) << 40 | (j as u64) << 20).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains one machine per class pair on already standardised inputs.
pub fn train_pairs(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    cost: f64,
    weights: &[f64],
    seed: u64,
) -> Result<Vec<BinarySvm>, ClassifierError> {
    if x.len() != labels.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: x.len(),
            actual: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ClassifierError::InvalidClass(bad));
    }
    let dim = x.first().map_or(0, Vec::len);
    pairs(n_classes)
        .into_par_iter()
        .map(|(i, j)| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut upper = Vec::new();
            for (row, &l) in x.iter().zip(labels) {
                if l == i || l == j {
                    xs.push(row.as_slice());
                    ys.push(if l == i { 1.0 } else { -1.0 });
                    upper.push(cost * weights[l]);
                }
            }
            let has_first = ys.iter().any(|&v| v > 0.0);
            let has_second = ys.iter().any(|&v| v < 0.0);
            if !(has_first && has_second) {
                let bias = match (has_first, has_second) {
                    (true, false) => 1.0,
                    (false, true) => -1.0,
                    _ => 0.0,
                };
                return Ok(BinarySvm {
                    first: i,
                    second: j,
                    weights: vec![0.0; dim],
                    bias,
                    cost,
                    degenerate: true,
                });
            }
            let params = SolverParams {
                seed: pair_seed(seed, i, j),
                ..Default::default()
            };
            let sol = solve(&xs, &ys, &upper, &params)?;
            Ok(BinarySvm {
                first: i,
                second: j,
                weights: sol.weights,
                bias: sol.bias,
                cost,
                degenerate: false,
            })
        })
        .collect()
}

impl OvoModel {
    pub fn from_parts(
        n_classes: usize,
        cost: f64,
        standardiser: Standardiser,
        machines: Vec<BinarySvm>,
    ) -> Result<Self, ClassifierError> {
        let expected = pairs(n_classes);
        if machines.len() != expected.len()
            || machines
                .iter()
                .zip(&expected)
                .any(|(m, &(i, j))| (m.first, m.second) != (i, j))
        {
            return Err(ClassifierError::Parse(format!(
                "expected {} machines in pair order for {n_classes} classes",
                expected.len()
            )));
        }
        Ok(Self {
            n_classes,
            cost,
            standardiser,
            machines,
        })
    }

    /// Standardises `x` with the development statistics, then trains.
    pub fn fit(
        x: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        cost: f64,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        let standardiser = Standardiser::fit(x)?;
        let z = standardiser.transform_all(x);
        let weights = class_weights(labels, n_classes);
        let machines = train_pairs(&z, labels, n_classes, cost, &weights, seed)?;
        Self::from_parts(n_classes, cost, standardiser, machines)
    }

    pub fn predict_standardised(&self, z: &[f64]) -> Prediction {
        let mut votes = vec![0usize; self.n_classes];
        let mut strength = vec![0f64; self.n_classes];
        for m in &self.machines {
            let d = m.decision(z);
            let winner = m.vote(d);
            votes[winner] += 1;
            strength[winner] += d.abs();
        }
        let mut class = 0;
        for k in 1..self.n_classes {
            let better = votes[k] > votes[class]
                || (votes[k] == votes[class] && strength[k] > strength[class]);
            if better {
                class = k;
            }
        }
        Prediction {
            class,
            votes,
            strength,
        }
    }

    /// Majority vote over all machines; ties go to the larger summed
    /// |decision|, then to the lower class index.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        self.predict_standardised(&self.standardiser.transform(x))
    }

    pub fn write_text(&self, mut out: impl Write) -> std::io::Result<()> {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(out, "format,usvctx-ovo,1")?;
        writeln!(out, "classes,{}", self.n_classes)?;
        writeln!(out, "cost,{}", self.cost)?;
        writeln!(out, "mean,{}", join(&self.standardiser.mean))?;
        writeln!(out, "std,{}", join(&self.standardiser.std))?;
        let flags: Vec<&str> = self
            .standardiser
            .zero_variance
            .iter()
            .map(|&z| if z { "1" } else { "0" })
            .collect();
        writeln!(out, "zero_variance,{}", flags.join(","))?;
        for m in &self.machines {
            writeln!(
                out,
                "machine,{},{},{},{},{}",
                m.first,
                m.second,
                u8::from(m.degenerate),
                m.bias,
                join(&m.weights)
            )?;
        }
        Ok(())
    }

    pub fn read_text(input: impl BufRead) -> Result<Self, ClassifierError> {
        let bad = |msg: String| ClassifierError::Parse(msg);
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number {s:?}")))
        };
        let mut n_classes = None;
        let mut cost = None;
        let mut mean = None;
        let mut std = None;
        let mut zero_variance = None;
        let mut machines = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let values = || {
                fields[1..]
                    .iter()
                    .map(|s| num(s))
                    .collect::<Result<Vec<_>, _>>()
            };
            match fields[0] {
                "format" => {
                    if fields.get(1) != Some(&"usvctx-ovo") || fields.get(2) != Some(&"1") {
                        return Err(bad(format!("unsupported format line {line:?}")));
                    }
                }
                "classes" => {
                    n_classes = Some(
                        fields
                            .get(1)
                            .and_then(|s| s.parse::<usize>().ok())
                            .ok_or_else(|| bad("bad class count".into()))?,
                    )
                }
                "cost" => cost = Some(num(fields.get(1).copied().unwrap_or(""))?),
                "mean" => mean = Some(values()?),
                "std" => std = Some(values()?),
                "zero_variance" => {
                    zero_variance = Some(
                        fields[1..]
                            .iter()
                            .map(|s| s.trim() == "1")
                            .collect::<Vec<_>>(),
                    )
                }
                "machine" => {
                    if fields.len() < 5 {
                        return Err(bad(format!("short machine line {line:?}")));
                    }
                    let idx = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| bad(format!("bad index {s:?}")))
                    };
                    machines.push(BinarySvm {
                        first: idx(fields[1])?,
                        second: idx(fields[2])?,
                        degenerate: fields[3] == "1",
                        bias: num(fields[4])?,
                        weights: fields[5..]
                            .iter()
                            .map(|s| num(s))
                            .collect::<Result<_, _>>()?,
                        cost: 0.0,
                    });
                }
                other => return Err(bad(format!("unknown record {other:?}"))),
            }
        }
        let n_classes = n_classes.ok_or_else(|| bad("missing classes".into()))?;
        let cost = cost.ok_or_else(|| bad("missing cost".into()))?;
        let mean = mean.ok_or_else(|| bad("missing mean".into()))?;
        let std = std.ok_or_else(|| bad("missing std".into()))?;
        let zero_variance = zero_variance.unwrap_or_else(|| vec![false; mean.len()]);
        if std.len() != mean.len() || zero_variance.len() != mean.len() {
            return Err(bad("standardiser rows differ in length".into()));
        }
        for m in machines.iter_mut() {
            m.cost = cost;
            if m.weights.len() != mean.len() {
                return Err(bad("machine weight count differs from feature count".into()));
            }
        }
        Self::from_parts(
            n_classes,
            cost,
            Standardiser {
                mean,
                std,
                zero_variance,
            },
            machines,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub model: OvoModel,
    /// Validation UAR per grid value, in ascending cost order. `None` when
    /// the validation split is empty.
    pub validation_uar: Vec<(f64, Option<f64>)>,
}

/// Picks the cost with the best validation UAR (ties to the smaller cost),
/// then retrains on the whole development set with it. The standardiser and
/// class weights come from the whole development set in both stages.
pub fn nested_select(
    dev_x: &[Vec<f64>],
    dev_labels: &[usize],
    is_validation: &[bool],
    n_classes: usize,
    grid: &[f64],
    seed: u64,
) -> Result<Selection, ClassifierError> {
    if grid.is_empty() {
        return Err(ClassifierError::EmptyGrid);
    }
    if dev_x.len() != dev_labels.len() || dev_x.len() != is_validation.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: dev_x.len(),
            actual: dev_labels.len().min(is_validation.len()),
        });
    }
    let standardiser = Standardiser::fit(dev_x)?;
    let z = standardiser.transform_all(dev_x);
    let weights = class_weights(dev_labels, n_classes);

    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut val_x = Vec::new();
    let mut val_y = Vec::new();
    for ((row, &l), &v) in z.iter().zip(dev_labels).zip(is_validation) {
        if v {
            val_x.push(row.clone());
            val_y.push(l);
        } else {
            train_x.push(row.clone());
            train_y.push(l);
        }
    }

    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut scores = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64)> = None;
    for &c in &sorted {
        let score = if val_x.is_empty() || train_x.is_empty() {
            None
        } else {
            let machines = train_pairs(&train_x, &train_y, n_classes, c, &weights, seed)?;
            let model = OvoModel::from_parts(n_classes, c, standardiser.clone(), machines)?;
            let preds: Vec<usize> = val_x
                .iter()
                .map(|r| model.predict_standardised(r).class)
                .collect();
            uar_from_indices(&val_y, &preds, n_classes)
        };
        scores.push((c, score));
        let s = score.unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    let chosen = best.expect("non-empty grid").0;
    let machines = train_pairs(&z, dev_labels, n_classes, chosen, &weights, seed)?;
    Ok(Selection {
        model: OvoModel::from_parts(n_classes, chosen, standardiser, machines)?,
        validation_uar: scores,
    })
}
