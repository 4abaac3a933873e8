//! Data-independent batch-selection rules and their realizations.
//!
//! A [`ScheduleSpec`] names a rule; [`realize`] turns it into the concrete
//! `T × m` index matrix consumed by the engine. Indices are 0-based in
//! memory and 1-based at every public boundary that takes or prints them
//! (`perturbation_indicator`, custom matrices, CSV dumps).

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    FullBatch,
    RoundRobin,
    RandomReshuffle,
    SingleShuffle,
    UniformRandom,
    Custom,
}

impl ScheduleKind {
    pub const ALL_BUILTIN: [ScheduleKind; 5] = [
        ScheduleKind::FullBatch,
        ScheduleKind::RoundRobin,
        ScheduleKind::RandomReshuffle,
        ScheduleKind::SingleShuffle,
        ScheduleKind::UniformRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::FullBatch => "full_batch",
            ScheduleKind::RoundRobin => "round_robin",
            ScheduleKind::RandomReshuffle => "random_reshuffle",
            ScheduleKind::SingleShuffle => "single_shuffle",
            ScheduleKind::UniformRandom => "uniform_random",
            ScheduleKind::Custom => "custom",
        }
    }

    /// Whether the realization depends on the seed.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            ScheduleKind::RandomReshuffle | ScheduleKind::SingleShuffle | ScheduleKind::UniformRandom
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    /// Explicit 1-based `T × m` matrix, `custom` kind only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_indices: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub seed: u64,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, n: usize, m: usize, horizon: usize, seed: u64) -> Self {
        ScheduleSpec {
            kind,
            n,
            m,
            horizon,
            custom_indices: None,
            seed,
        }
    }

    pub fn custom(n: usize, m: usize, rows: Vec<Vec<usize>>) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Custom,
            n,
            m,
            horizon: rows.len(),
            custom_indices: Some(rows),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "dataset size must be at least 1"));
        }
        if self.m == 0 || self.m > self.n {
            return Err(Error::config(
                "m",
                format!("batch size must satisfy 1 <= m <= n (m = {}, n = {})", self.m, self.n),
            ));
        }
        if self.kind == ScheduleKind::FullBatch && self.m != self.n {
            return Err(Error::config(
                "m",
                format!("full_batch requires m = n (m = {}, n = {})", self.m, self.n),
            ));
        }
        match (self.kind, &self.custom_indices) {
            (ScheduleKind::Custom, None) => {
                return Err(Error::config("custom_indices", "required for the custom kind"))
            }
            (ScheduleKind::Custom, Some(rows)) => {
                if rows.len() != self.horizon {
                    return Err(Error::config(
                        "custom_indices",
                        format!("expected T = {} rows, found {}", self.horizon, rows.len()),
                    ));
                }
                for (t, row) in rows.iter().enumerate() {
                    check_row(row, self.n, self.m)
                        .map_err(|c| Error::config("custom_indices", format!("row t={}: {c}", t + 1)))?;
                }
            }
            (_, Some(_)) => {
                return Err(Error::config(
                    "custom_indices",
                    "only allowed for the custom kind",
                ))
            }
            (_, None) => {}
        }
        Ok(())
    }
}

fn check_row(row: &[usize], n: usize, m: usize) -> std::result::Result<(), String> {
    if row.len() != m {
        return Err(format!("expected m = {m} indices, found {}", row.len()));
    }
    let mut seen = vec![false; n];
    for &i in row {
        if i == 0 || i > n {
            return Err(format!("index {i} outside [1, {n}]"));
        }
        if seen[i - 1] {
            return Err(format!("duplicate index {i}"));
        }
        seen[i - 1] = true;
    }
    Ok(())
}

/// The concrete `T × m` index matrix of one schedule realization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizedSchedule {
    n: usize,
    m: usize,
    batches: Vec<usize>,
}

impl RealizedSchedule {
    /// Wraps an externally produced 0-based matrix without validating it.
    ///
    /// Meant for auditing matrices from other tools with
    /// [`check_counting_lemma`]; the engine assumes valid rows.
    pub fn from_rows_unchecked(n: usize, m: usize, rows: &[Vec<usize>]) -> Self {
        let mut batches = Vec::with_capacity(rows.len() * m);
        for row in rows {
            batches.extend(row.iter().copied());
        }
        RealizedSchedule { n, m, batches }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.batches.len().checked_div(self.m).unwrap_or(0)
    }

    /// 0-based indices selected at 0-based step `s`.
    pub fn step(&self, s: usize) -> &[usize] {
        &self.batches[s * self.m..(s + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.batches.chunks(self.m.max(1))
    }

    /// Row-major `T × n` table of `1{i ∈ K_t}` (0-based).
    pub fn membership(&self) -> Vec<bool> {
        let mut table = vec![false; self.horizon() * self.n];
        for (s, row) in self.rows().enumerate() {
            for &i in row {
                if i < self.n {
                    table[s * self.n + i] = true;
                }
            }
        }
        table
    }

    /// `Σ_t 1{i ∈ K_t}` for every (0-based) index.
    pub fn selection_totals(&self) -> Vec<usize> {
        let mut totals = vec![0; self.n];
        for row in self.rows() {
            for &i in row {
                if i < self.n {
                    totals[i] += 1;
                }
            }
        }
        totals
    }

    /// First 1-based step at which the 1-based index `i` is selected.
    pub fn first_selection(&self, i: usize) -> Option<usize> {
        self.rows().position(|row| row.contains(&(i - 1))).map(|s| s + 1)
    }

    /// Writes one line per step holding the step's 1-based indices.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.rows() {
            wtr.write_record(row.iter().map(|i| (i + 1).to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn realize(spec: &ScheduleSpec) -> Result<RealizedSchedule> {
    spec.validate()?;
    let (n, m, horizon) = (spec.n, spec.m, spec.horizon);
    let mut batches = Vec::with_capacity(horizon * m);
    match spec.kind {
        ScheduleKind::FullBatch => {
            for _ in 0..horizon {
                batches.extend(0..n);
            }
        }
        ScheduleKind::RoundRobin => {
            // Cyclic sweep; for m = 1 this is J_t = (t - 1) mod n + 1.
            for s in 0..horizon {
                batches.extend((0..m).map(|j| (s * m + j) % n));
            }
        }
        ScheduleKind::RandomReshuffle => {
            let per_epoch = n / m;
            let mut perm: Vec<usize> = Vec::new();
            for s in 0..horizon {
                let pos = s % per_epoch;
                if pos == 0 {
                    let epoch = (s / per_epoch) as u64;
                    perm = (0..n).collect();
                    perm.shuffle(&mut stream_rng(spec.seed, epoch));
                }
                batches.extend_from_slice(&perm[pos * m..(pos + 1) * m]);
            }
        }
        ScheduleKind::SingleShuffle => {
            let per_epoch = n / m;
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut stream_rng(spec.seed, 0));
            for s in 0..horizon {
                let pos = s % per_epoch;
                batches.extend_from_slice(&perm[pos * m..(pos + 1) * m]);
            }
        }
        ScheduleKind::UniformRandom => {
            let mut rng = stream_rng(spec.seed, 0);
            for _ in 0..horizon {
                batches.extend(rand::seq::index::sample(&mut rng, n, m));
            }
        }
        ScheduleKind::Custom => {
            // validate() guarantees presence and shape
            for row in spec.custom_indices.as_ref().into_iter().flatten() {
                batches.extend(row.iter().map(|i| i - 1));
            }
        }
    }
    Ok(RealizedSchedule { n, m, batches })
}

/// `1{i ∈ K_t}` for 1-based step `t` and 1-based index `i`: the event that
/// the batches drawn from `S` and `S^(i)` differ at step `t`.
pub fn perturbation_indicator(sched: &RealizedSchedule, t: usize, i: usize) -> Result<bool> {
    if t == 0 || t > sched.horizon() {
        return Err(Error::Argument(format!(
            "step t = {t} outside [1, {}]",
            sched.horizon()
        )));
    }
    if i == 0 || i > sched.n() {
        return Err(Error::Argument(format!("index i = {i} outside [1, {}]", sched.n())));
    }
    Ok(sched.step(t - 1).contains(&(i - 1)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingVerdict {
    pub passed: bool,
    /// 1-based step and its count `Σ_i 1{i ∈ K_t}` at the first violation.
    pub first_violation: Option<(usize, usize)>,
}

/// Checks that every step selects exactly `m` distinct in-range indices,
/// i.e. `Σ_i 1{i ∈ K_t} = m`.
pub fn check_counting_lemma(sched: &RealizedSchedule) -> CountingVerdict {
    let n = sched.n();
    let mut seen = vec![false; n];
    for (s, row) in sched.rows().enumerate() {
        seen.iter_mut().for_each(|b| *b = false);
        for &i in row {
            if i < n {
                seen[i] = true;
            }
        }
        let count = seen.iter().filter(|&&b| b).count();
        if count != sched.m() {
            return CountingVerdict {
                passed: false,
                first_violation: Some((s + 1, count)),
            };
        }
    }
    CountingVerdict {
        passed: true,
        first_violation: None,
    }
}
