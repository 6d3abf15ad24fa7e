//! Exact optimal makespan for tiny instances.
//!
//! Depth-first search over the legal decode trajectories of the masking
//! engine, building partial schedules in append mode. Branches are
//! pruned when a lower bound on any completion of the partial schedule
//! reaches the incumbent. Every semi-active schedule is the append-mode
//! replay of the dispatch list obtained by sorting its operations by
//! start time, and some optimal schedule is semi-active, so the search
//! space contains the optimum; the bounds only discard branches that
//! cannot beat the incumbent.

use crate::error::Error;
use crate::instance::{DispatchList, Instance, Time};
use crate::pdr::{run_pdr, Rule};
use crate::schedule::{build_schedule, BuildMode};

/// Outcome of an oracle run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// Best makespan found; the true optimum iff `certified`.
    pub optimal_makespan: Time,
    /// A dispatch list attaining `optimal_makespan`.
    pub optimal_list: DispatchList,
    /// Search nodes expanded.
    pub explored: u64,
    /// True when the search ran to completion within the node budget.
    pub certified: bool,
}

struct Search<'a> {
    inst: &'a Instance,
    budget: u64,
    explored: u64,
    exhausted: bool,
    best_value: Time,
    best_list: Vec<usize>,
    // Mutable DFS state.
    next_pos: Vec<usize>,
    job_ready: Vec<Time>,
    job_tail: Vec<Time>,
    mach_horizon: Vec<Time>,
    mach_tail: Vec<Time>,
    prefix: Vec<usize>,
    current_makespan: Time,
}

impl<'a> Search<'a> {
    fn lower_bound(&self) -> Time {
        let mut bound = self.current_makespan;
        for job in 0..self.inst.n_jobs() {
            bound = bound.max(self.job_ready[job] + self.job_tail[job]);
        }
        for mach in 0..self.inst.n_machines() {
            bound = bound.max(self.mach_horizon[mach] + self.mach_tail[mach]);
        }
        bound
    }

    fn run(&mut self) {
        if self.explored >= self.budget {
            self.exhausted = true;
            return;
        }
        self.explored += 1;

        let n = self.inst.n_jobs();
        let m = self.inst.n_machines();
        if self.prefix.len() == n * m {
            if self.current_makespan < self.best_value {
                self.best_value = self.current_makespan;
                self.best_list = self.prefix.clone();
            }
            return;
        }
        if self.lower_bound() >= self.best_value {
            return;
        }

        // Branch on each job's next operation, earliest completion first.
        let mut candidates: Vec<(Time, usize)> = (0..n)
            .filter(|&job| self.next_pos[job] < m)
            .map(|job| {
                let op = self.inst.op(job, self.next_pos[job]);
                let start = self.job_ready[job].max(self.mach_horizon[op.machine]);
                (start + op.duration, job)
            })
            .collect();
        candidates.sort_unstable();

        for (_, job) in candidates {
            let pos = self.next_pos[job];
            let op = self.inst.op(job, pos);
            let start = self.job_ready[job].max(self.mach_horizon[op.machine]);
            let end = start + op.duration;

            let saved = (
                self.job_ready[job],
                self.mach_horizon[op.machine],
                self.current_makespan,
            );
            self.next_pos[job] += 1;
            self.job_ready[job] = end;
            self.job_tail[job] -= op.duration;
            self.mach_horizon[op.machine] = end;
            self.mach_tail[op.machine] -= op.duration;
            self.prefix.push(self.inst.row_index(job, pos));
            self.current_makespan = self.current_makespan.max(end);

            self.run();

            self.prefix.pop();
            self.next_pos[job] -= 1;
            self.job_tail[job] += op.duration;
            self.mach_tail[op.machine] += op.duration;
            self.job_ready[job] = saved.0;
            self.mach_horizon[op.machine] = saved.1;
            self.current_makespan = saved.2;

            if self.exhausted {
                return;
            }
        }
    }
}

/// Searches for the optimal makespan of `inst`, expanding at most
/// `node_budget` nodes. Intended for `n*m <= 16`; the result is flagged
/// non-certified when the budget runs out, never silently wrong.
pub fn optimal_makespan(inst: &Instance, node_budget: u64) -> OracleResult {
    assert!(node_budget > 0, "node budget must be positive");
    let n = inst.n_jobs();
    let m = inst.n_machines();

    // Seed the incumbent with the best dispatching rule, replayed in
    // append mode so every value the search compares against is an
    // append-mode makespan.
    let mut best_value = Time::MAX;
    let mut best_list = DispatchList::identity(n * m);
    for rule in Rule::ALL {
        let list = run_pdr(inst, rule);
        let value = build_schedule(inst, &list, BuildMode::Append)
            .expect("rule lists are feasible")
            .makespan();
        if value < best_value {
            best_value = value;
            best_list = list;
        }
    }

    let mut search = Search {
        inst,
        budget: node_budget,
        explored: 0,
        exhausted: false,
        best_value,
        best_list: best_list.as_slice().to_vec(),
        next_pos: vec![0; n],
        job_ready: vec![0; n],
        job_tail: (0..n).map(|job| inst.job_work(job)).collect(),
        mach_horizon: vec![0; m],
        mach_tail: (0..m).map(|mach| inst.machine_load(mach)).collect(),
        prefix: Vec::with_capacity(n * m),
        current_makespan: 0,
    };
    search.run();

    OracleResult {
        optimal_makespan: search.best_value,
        optimal_list: DispatchList::new(search.best_list).expect("search emits permutations"),
        explored: search.explored,
        certified: !search.exhausted,
    }
}

/// Relative gap `value / optimum - 1`. Errors on non-positive optimum.
pub fn gap(value: Time, optimum: Time) -> Result<f64, Error> {
    if optimum == 0 {
        return Err(Error::NonPositiveOptimum(optimum as i64));
    }
    Ok(value as f64 / optimum as f64 - 1.0)
}
