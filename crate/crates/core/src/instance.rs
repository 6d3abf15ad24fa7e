//! Problem instances, their row-sequence encoding and random generators.
//!
//! An `n x m` instance holds one row of `m` operations per job; operation
//! `(i, j)` runs on machine `M_ij` for `p_ij` time units. Operations of a
//! job are executed in row order, each on a distinct machine, without
//! preemption. The sequence encoding flattens the instance into an
//! `(n*m) x 4` integer matrix with row `k = m*i + j` equal to
//! `[i, j, M_ij, p_ij]`; a dispatch list is a row permutation of that
//! matrix which preserves every job's internal order.

use crate::error::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Integer time unit used for processing times, start times and makespans.
pub type Time = u32;

/// One operation: the machine it needs and how long it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Operation {
    pub machine: usize,
    pub duration: Time,
}

/// An immutable job-shop instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    n_jobs: usize,
    n_machines: usize,
    /// Row-major `[job][position]`, flattened.
    ops: Vec<Operation>,
}

impl Instance {
    /// Validates and builds an instance from per-job operation rows.
    ///
    /// Every job must visit each machine exactly once and all durations
    /// must be at least 1.
    pub fn new(rows: Vec<Vec<(usize, Time)>>) -> Result<Self, Error> {
        let n_jobs = rows.len();
        if n_jobs == 0 {
            return Err(Error::InvalidInstance("no jobs".into()));
        }
        let n_machines = rows[0].len();
        if n_machines == 0 {
            return Err(Error::InvalidInstance("job 0 has no operations".into()));
        }
        let mut ops = Vec::with_capacity(n_jobs * n_machines);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_machines {
                return Err(Error::InvalidInstance(format!(
                    "job {i} has {} operations, expected {n_machines}",
                    row.len()
                )));
            }
            let mut seen = vec![false; n_machines];
            for (j, &(machine, duration)) in row.iter().enumerate() {
                if machine >= n_machines {
                    return Err(Error::InvalidInstance(format!(
                        "job {i} operation {j}: machine {machine} out of range 0..{n_machines}"
                    )));
                }
                if seen[machine] {
                    return Err(Error::InvalidInstance(format!(
                        "job {i} visits machine {machine} more than once"
                    )));
                }
                seen[machine] = true;
                if duration == 0 {
                    return Err(Error::InvalidInstance(format!(
                        "job {i} operation {j}: zero duration"
                    )));
                }
                ops.push(Operation { machine, duration });
            }
        }
        Ok(Self {
            n_jobs,
            n_machines,
            ops,
        })
    }

    pub fn n_jobs(&self) -> usize {
        self.n_jobs
    }

    pub fn n_machines(&self) -> usize {
        self.n_machines
    }

    /// Total number of operations, `n * m`.
    pub fn n_ops(&self) -> usize {
        self.ops.len()
    }

    pub fn op(&self, job: usize, pos: usize) -> Operation {
        self.ops[job * self.n_machines + pos]
    }

    pub fn job_ops(&self, job: usize) -> &[Operation] {
        let start = job * self.n_machines;
        &self.ops[start..start + self.n_machines]
    }

    /// Flat row index `k = m*i + j` of operation `(job, pos)`.
    pub fn row_index(&self, job: usize, pos: usize) -> usize {
        job * self.n_machines + pos
    }

    /// Inverse of [`row_index`](Self::row_index).
    pub fn job_pos(&self, row: usize) -> (usize, usize) {
        (row / self.n_machines, row % self.n_machines)
    }

    /// Total processing time of `job`.
    pub fn job_work(&self, job: usize) -> Time {
        self.job_ops(job).iter().map(|o| o.duration).sum()
    }

    /// Total processing time routed to `machine`.
    pub fn machine_load(&self, machine: usize) -> Time {
        self.ops
            .iter()
            .filter(|o| o.machine == machine)
            .map(|o| o.duration)
            .sum()
    }
}

/// The `(n*m) x 4` sequence encoding of an instance.
///
/// Row `k = m*i + j` is `[i, j, M_ij, p_ij]`, in increasing `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqEncoding {
    n_jobs: usize,
    n_machines: usize,
    rows: Vec<[u32; 4]>,
}

impl SeqEncoding {
    pub fn n_jobs(&self) -> usize {
        self.n_jobs
    }

    pub fn n_machines(&self) -> usize {
        self.n_machines
    }

    pub fn rows(&self) -> &[[u32; 4]] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Flattens an instance into its canonical sequence encoding.
pub fn encode_instance(inst: &Instance) -> SeqEncoding {
    let mut rows = Vec::with_capacity(inst.n_ops());
    for i in 0..inst.n_jobs() {
        for j in 0..inst.n_machines() {
            let op = inst.op(i, j);
            rows.push([i as u32, j as u32, op.machine as u32, op.duration]);
        }
    }
    SeqEncoding {
        n_jobs: inst.n_jobs(),
        n_machines: inst.n_machines(),
        rows,
    }
}

/// Rebuilds an instance from a sequence encoding, validating canonical
/// row order and feature ranges. Inverse of [`encode_instance`].
pub fn decode_instance(seq: &SeqEncoding) -> Result<Instance, Error> {
    let n = seq.n_jobs;
    let m = seq.n_machines;
    if seq.rows.len() != n * m {
        return Err(Error::InvalidEncoding {
            row: seq.rows.len().min(n * m),
            reason: format!("expected {} rows, got {}", n * m, seq.rows.len()),
        });
    }
    let mut rows: Vec<Vec<(usize, Time)>> = vec![Vec::with_capacity(m); n];
    for (k, r) in seq.rows.iter().enumerate() {
        let (want_i, want_j) = ((k / m) as u32, (k % m) as u32);
        if r[0] != want_i || r[1] != want_j {
            return Err(Error::InvalidEncoding {
                row: k,
                reason: format!(
                    "expected job/position ({want_i}, {want_j}), found ({}, {})",
                    r[0], r[1]
                ),
            });
        }
        if r[2] >= m as u32 {
            return Err(Error::InvalidEncoding {
                row: k,
                reason: format!("machine {} out of range 0..{m}", r[2]),
            });
        }
        if r[3] == 0 {
            return Err(Error::InvalidEncoding {
                row: k,
                reason: "zero processing time".into(),
            });
        }
        rows[k / m].push((r[2] as usize, r[3]));
    }
    Instance::new(rows)
}

/// A row permutation of a sequence encoding, i.e. a solution order.
///
/// Construction only checks that the entries form a bijection on
/// `0..len`; job-order feasibility against a concrete instance is the
/// job of [`crate::schedule::check_feasible`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchList {
    perm: Vec<usize>,
}

impl DispatchList {
    pub fn new(perm: Vec<usize>) -> Result<Self, Error> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() {
                return Err(Error::NotAPermutation(format!(
                    "index {p} out of range 0..{}",
                    perm.len()
                )));
            }
            if seen[p] {
                return Err(Error::NotAPermutation(format!("index {p} repeated")));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    /// The canonical order `0, 1, ..., len-1`, always feasible.
    pub fn identity(len: usize) -> Self {
        Self {
            perm: (0..len).collect(),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// `(job, pos)` pairs in dispatch order for an `n x m` shape.
    pub fn job_pos_order(&self, n_machines: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.perm
            .iter()
            .map(move |&k| (k / n_machines, k % n_machines))
    }
}

/// Mixes a base seed with an index into an independent derived seed
/// (splitmix64 finalizer). Used wherever one user-facing seed has to
/// drive many generator calls.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG sub-stream per job: stream `i` drives job `i`'s duration draws
/// followed by the shuffle of its machine sequence.
fn job_rng(seed: u64, job: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(job as u64);
    rng
}

/// Generates a random instance in the classic benchmark style:
/// durations i.i.d. uniform on `1..=99`, machine sequences independent
/// uniform permutations. Identical `(n, m, seed)` yield identical
/// instances.
pub fn generate_taillard(n: usize, m: usize, seed: u64) -> Instance {
    assert!(n >= 1 && m >= 1, "need at least one job and one machine");
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = job_rng(seed, i);
        let durations: Vec<Time> = (0..m).map(|_| rng.random_range(1..=99)).collect();
        let mut machines: Vec<usize> = (0..m).collect();
        machines.shuffle(&mut rng);
        rows.push(machines.into_iter().zip(durations).collect());
    }
    Instance::new(rows).expect("generated instance is valid by construction")
}

/// Like [`generate_taillard`] but every job visits machines in the fixed
/// order `0, 1, ..., m-1`, producing a flow-shop instance that the rest
/// of the pipeline consumes unchanged.
pub fn generate_flowshop(n: usize, m: usize, seed: u64) -> Instance {
    assert!(n >= 1 && m >= 1, "need at least one job and one machine");
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = job_rng(seed, i);
        let row: Vec<(usize, Time)> = (0..m).map(|j| (j, rng.random_range(1..=99))).collect();
        rows.push(row);
    }
    Instance::new(rows).expect("generated instance is valid by construction")
}
