//! Subject-independent 3-fold cross-validation plans.
//!
//! Emitters are assigned greedily to three groups, largest emitter first.
//! Each emitter goes to the group whose cost rises least, where the cost of a
//! group is `(sum_l |count_l - size * p_l| + |size - N/3|) / N`: the L1
//! distance from the global label distribution, weighted by the group's share
//! of the corpus, plus the size penalty. Fold `f` tests on group `f` and develops on
//! the other two. Each development set is then split 70/30 into train and
//! validation, stratified by label only.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{ContextLabel, Utterance};

pub const FOLD_COUNT: usize = 3;
pub const VALIDATION_FRACTION: f64 = 0.3;
const SIZE_PENALTY: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("need at least {FOLD_COUNT} distinct emitters, found {0}")]
    TooFewEmitters(usize),
    #[error("fold index {0} out of range")]
    InvalidFold(usize),
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
    #[error("malformed fold plan: {0}")]
    Malformed(String),
}

/// The minimum a fold plan needs to know about an utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub emitter_id: String,
    pub context: ContextLabel,
}

impl From<&Utterance> for Sample {
    fn from(u: &Utterance) -> Self {
        Sample {
            id: u.id.clone(),
            emitter_id: u.emitter_id.clone(),
            context: u.context,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Test,
    /// Development member whose inner split has not been drawn yet.
    Dev,
    Train,
    Validation,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Test => "test",
            Role::Dev => "dev",
            Role::Train => "train",
            Role::Validation => "validation",
        }
    }

    pub fn is_dev(self) -> bool {
        !matches!(self, Role::Test)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(Role::Test),
            "dev" => Ok(Role::Dev),
            "train" => Ok(Role::Train),
            "validation" => Ok(Role::Validation),
            other => Err(PartitionError::Malformed(format!("unknown role {other:?}"))),
        }
    }
}

/// Per-utterance roles in each of the three folds, keyed by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub seed: u64,
    roles: BTreeMap<String, [Role; FOLD_COUNT]>,
}

impl FoldPlan {
    pub fn fold_count(&self) -> usize {
        FOLD_COUNT
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn role(&self, id: &str, fold: usize) -> Option<Role> {
        self.roles.get(id).map(|r| r[fold])
    }

    /// The fold in which `id` is tested.
    pub fn test_fold(&self, id: &str) -> Option<usize> {
        self.roles
            .get(id)
            .and_then(|r| r.iter().position(|&x| x == Role::Test))
    }

    pub fn ids_with_role(&self, fold: usize, pred: impl Fn(Role) -> bool) -> Vec<&str> {
        self.roles
            .iter()
            .filter(|(_, r)| pred(r[fold]))
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn test_ids(&self, fold: usize) -> Vec<&str> {
        self.ids_with_role(fold, |r| r == Role::Test)
    }

    pub fn dev_ids(&self, fold: usize) -> Vec<&str> {
        self.ids_with_role(fold, Role::is_dev)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Role; FOLD_COUNT])> {
        self.roles.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Writes `utterance_id,fold,role` rows, sorted by id then fold.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "utterance_id,fold,role")?;
        for (id, roles) in &self.roles {
            for (fold, role) in roles.iter().enumerate() {
                writeln!(out, "{id},{fold},{role}")?;
            }
        }
        Ok(())
    }

    /// Parses the output of [`FoldPlan::write_csv`]; `#` lines are ignored.
    pub fn read_csv(input: impl std::io::Read, seed: u64) -> Result<Self, PartitionError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let mut partial: BTreeMap<String, [Option<Role>; FOLD_COUNT]> = BTreeMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| PartitionError::Malformed(format!("row {}: {e}", i + 1)))?;
            let (id, fold, role) = match (rec.get(0), rec.get(1), rec.get(2)) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => {
                    return Err(PartitionError::Malformed(format!(
                        "row {}: too few fields",
                        i + 1
                    )))
                }
            };
            let fold: usize = fold.parse().map_err(|_| {
                PartitionError::Malformed(format!("row {}: bad fold {fold:?}", i + 1))
            })?;
            if fold >= FOLD_COUNT {
                return Err(PartitionError::InvalidFold(fold));
            }
            let slot = &mut partial.entry(id.to_string()).or_default()[fold];
            if slot.is_some() {
                return Err(PartitionError::DuplicateId(id.to_string()));
            }
            *slot = Some(role.parse()?);
        }
        let mut roles = BTreeMap::new();
        for (id, r) in partial {
            let [Some(a), Some(b), Some(c)] = r else {
                return Err(PartitionError::Malformed(format!(
                    "{id} lacks a role in some fold"
                )));
            };
            let full = [a, b, c];
            if full.iter().filter(|&&x| x == Role::Test).count() != 1 {
                return Err(PartitionError::Malformed(format!(
                    "{id} is not tested exactly once"
                )));
            }
            roles.insert(id, full);
        }
        Ok(FoldPlan { seed, roles })
    }
}

#[derive(Clone)]
struct Group {
    counts: [usize; ContextLabel::COUNT],
    size: usize,
}

impl Group {
    /// Size-weighted L1 divergence plus the size penalty, both over `total`.
    fn cost(&self, global: &[f64; ContextLabel::COUNT], total: usize) -> f64 {
        let size = self.size as f64;
        let divergence: f64 = self
            .counts
            .iter()
            .zip(global)
            .map(|(&c, &p)| (c as f64 - size * p).abs())
            .sum();
        let target = total as f64 / FOLD_COUNT as f64;
        (divergence + SIZE_PENALTY * (size - target).abs()) / total as f64
    }

    fn with(&self, add: &[usize; ContextLabel::COUNT], n: usize) -> Group {
        let mut g = self.clone();
        for (c, a) in g.counts.iter_mut().zip(add) {
            *c += a;
        }
        g.size += n;
        g
    }
}

/// L1 distance between the label distribution of `samples` and `reference`.
pub fn label_divergence<'a>(
    samples: impl IntoIterator<Item = &'a ContextLabel>,
    reference: &[f64; ContextLabel::COUNT],
) -> f64 {
    let dist = label_distribution(samples);
    dist.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum()
}

pub fn label_distribution<'a>(
    samples: impl IntoIterator<Item = &'a ContextLabel>,
) -> [f64; ContextLabel::COUNT] {
    let mut counts = [0usize; ContextLabel::COUNT];
    let mut n = 0;
    for l in samples {
        counts[l.index()] += 1;
        n += 1;
    }
    let mut out = [0.0; ContextLabel::COUNT];
    if n > 0 {
        for (o, c) in out.iter_mut().zip(counts) {
            *o = c as f64 / n as f64;
        }
    }
    out
}

/// Assigns emitters to test groups. Every dev role is left as [`Role::Dev`];
/// call [`split_dev`] (or use [`make_plan`]) to draw the inner splits.
pub fn make_folds(samples: &[Sample], seed: u64) -> Result<FoldPlan, PartitionError> {
    let mut per_emitter: BTreeMap<&str, [usize; ContextLabel::COUNT]> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(PartitionError::DuplicateId(s.id.clone()));
        }
        per_emitter.entry(s.emitter_id.as_str()).or_default()[s.context.index()] += 1;
    }
    if per_emitter.len() < FOLD_COUNT {
        return Err(PartitionError::TooFewEmitters(per_emitter.len()));
    }

    let total = samples.len();
    let global = label_distribution(samples.iter().map(|s| &s.context));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<(&str, [usize; ContextLabel::COUNT], usize)> = per_emitter
        .into_iter()
        .map(|(e, c)| (e, c, c.iter().sum()))
        .collect();
    // shuffle first so the stable sort leaves equal-sized emitters in seeded order
    order.shuffle(&mut rng);
    order.sort_by_key(|e| std::cmp::Reverse(e.2));

    let mut groups = vec![
        Group {
            counts: [0; ContextLabel::COUNT],
            size: 0
        };
        FOLD_COUNT
    ];
    let mut assignment: HashMap<&str, usize> = HashMap::new();
    for (remaining, (emitter, counts, n)) in
        order.iter().enumerate().map(|(i, e)| (order.len() - i, e))
    {
        let empty: Vec<usize> = (0..FOLD_COUNT).filter(|&g| groups[g].size == 0).collect();
        let candidates: Vec<usize> = if empty.len() >= remaining {
            empty
        } else {
            (0..FOLD_COUNT).collect()
        };
        let deltas: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&g| {
                let before = groups[g].cost(&global, total);
                let after = groups[g].with(counts, *n).cost(&global, total);
                (g, after - before)
            })
            .collect();
        let best = deltas.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = deltas
            .iter()
            .filter(|d| d.1 - best <= 1e-12)
            .map(|d| d.0)
            .collect();
        let chosen = tied[rng.random_range(0..tied.len())];
        groups[chosen] = groups[chosen].with(counts, *n);
        assignment.insert(emitter, chosen);
    }

    let mut group_of: Vec<usize> = order.iter().map(|(e, _, _)| assignment[e]).collect();
    let emitters: Vec<([usize; ContextLabel::COUNT], usize)> =
        order.iter().map(|(_, c, n)| (*c, *n)).collect();
    refine(&mut groups, &mut group_of, &emitters, &global, total);
    let assignment: HashMap<&str, usize> = order
        .iter()
        .zip(&group_of)
        .map(|((e, _, _), &g)| (*e, g))
        .collect();

    let roles = samples
        .iter()
        .map(|s| {
            let test = assignment[s.emitter_id.as_str()];
            let mut r = [Role::Dev; FOLD_COUNT];
            r[test] = Role::Test;
            (s.id.clone(), r)
        })
        .collect();
    Ok(FoldPlan { seed, roles })
}

const MAX_REFINE_PASSES: usize = 100;

fn total_cost(groups: &[Group], global: &[f64; ContextLabel::COUNT], total: usize) -> f64 {
    groups.iter().map(|g| g.cost(global, total)).sum()
}

/// Local search after the greedy pass: single-emitter moves and pairwise
/// swaps between groups, taken in a fixed order whenever they lower the
/// summed cost. Groups never become empty.
fn refine(
    groups: &mut [Group],
    group_of: &mut [usize],
    emitters: &[([usize; ContextLabel::COUNT], usize)],
    global: &[f64; ContextLabel::COUNT],
    total: usize,
) {
    let without = |g: &Group, (c, n): &([usize; ContextLabel::COUNT], usize)| {
        let mut out = g.clone();
        for (a, b) in out.counts.iter_mut().zip(c) {
            *a -= b;
        }
        out.size -= n;
        out
    };
    let mut current = total_cost(groups, global, total);
    for _ in 0..MAX_REFINE_PASSES {
        let mut improved = false;
        for i in 0..emitters.len() {
            let from = group_of[i];
            let members = group_of.iter().filter(|&&g| g == from).count();
            for to in 0..FOLD_COUNT {
                if to == from || members == 1 {
                    continue;
                }
                let mut trial = groups.to_vec();
                trial[from] = without(&groups[from], &emitters[i]);
                trial[to] = groups[to].with(&emitters[i].0, emitters[i].1);
                let cost = total_cost(&trial, global, total);
                if cost < current - 1e-12 {
                    groups.clone_from_slice(&trial);
                    group_of[i] = to;
                    current = cost;
                    improved = true;
                    break;
                }
            }
        }
        for i in 0..emitters.len() {
            for j in i + 1..emitters.len() {
                let (gi, gj) = (group_of[i], group_of[j]);
                if gi == gj {
                    continue;
                }
                let mut trial = groups.to_vec();
                trial[gi] = without(&groups[gi], &emitters[i]).with(&emitters[j].0, emitters[j].1);
                trial[gj] = without(&groups[gj], &emitters[j]).with(&emitters[i].0, emitters[i].1);
                let cost = total_cost(&trial, global, total);
                if cost < current - 1e-12 {
                    groups.clone_from_slice(&trial);
                    group_of.swap(i, j);
                    current = cost;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Draws the stratified 70/30 train/validation split of `fold`'s development
/// set. Per label, `round(0.3 * n)` utterances go to validation.
pub fn split_dev(
    plan: &mut FoldPlan,
    samples: &[Sample],
    fold: usize,
    seed: u64,
) -> Result<(), PartitionError> {
    if fold >= FOLD_COUNT {
        return Err(PartitionError::InvalidFold(fold));
    }
    let mut by_label: BTreeMap<ContextLabel, Vec<&str>> = BTreeMap::new();
    for s in samples {
        match plan.roles.get(&s.id) {
            Some(r) if r[fold].is_dev() => by_label.entry(s.context).or_default().push(&s.id),
            _ => {}
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64 + 1);
    for (_, mut ids) in by_label {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n_val = (VALIDATION_FRACTION * ids.len() as f64).round() as usize;
        for (i, id) in ids.iter().enumerate() {
            let role = if i < n_val {
                Role::Validation
            } else {
                Role::Train
            };
            plan.roles.get_mut(*id).expect("id from plan")[fold] = role;
        }
    }
    Ok(())
}

/// [`make_folds`] followed by [`split_dev`] on every fold.
pub fn make_plan(samples: &[Sample], seed: u64) -> Result<FoldPlan, PartitionError> {
    let mut plan = make_folds(samples, seed)?;
    for fold in 0..FOLD_COUNT {
        split_dev(&mut plan, samples, fold, seed)?;
    }
    Ok(plan)
}
