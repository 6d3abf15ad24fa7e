//! Classical priority dispatching rules.
//!
//! All rules share the list-based greedy scheme: at each step the
//! candidate set is every job's next unscheduled operation and the rule
//! key picks the winner, ties broken by lowest job index. The emitted
//! dispatch list feeds the same schedule builder as every other method,
//! so makespan comparisons are apples-to-apples.

use crate::instance::{DispatchList, Instance, Time};

/// The four baseline rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Shortest processing time of the candidate operation (min).
    Spt,
    /// Most work remaining in the job (max).
    Mwkr,
    /// Most operations remaining in the job (max).
    Mopnr,
    /// Minimum ratio of flow due date to work remaining (min).
    Fdd,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::Spt, Rule::Mwkr, Rule::Mopnr, Rule::Fdd];

    /// Whether a larger key wins.
    fn maximizing(self) -> bool {
        matches!(self, Rule::Mwkr | Rule::Mopnr)
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Rule::Spt => "SPT",
            Rule::Mwkr => "MWKR",
            Rule::Mopnr => "MOPNR",
            Rule::Fdd => "FDD",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SPT" => Ok(Rule::Spt),
            "MWKR" => Ok(Rule::Mwkr),
            "MOPNR" => Ok(Rule::Mopnr),
            "FDD" => Ok(Rule::Fdd),
            other => Err(format!("unknown dispatching rule `{other}`")),
        }
    }
}

/// Work remaining for `job` from operation `next_pos` on (inclusive).
fn work_remaining(inst: &Instance, job: usize, next_pos: usize) -> Time {
    inst.job_ops(job)[next_pos..]
        .iter()
        .map(|o| o.duration)
        .sum()
}

/// Flow due date of `(job, next_pos)`: prefix work through `next_pos`.
fn flow_due_date(inst: &Instance, job: usize, next_pos: usize) -> Time {
    inst.job_ops(job)[..=next_pos]
        .iter()
        .map(|o| o.duration)
        .sum()
}

/// Priority key for `job` whose next unscheduled operation sits at
/// `next_pos`. Min-key rules: SPT, FDD; max-key rules: MWKR, MOPNR.
pub fn rule_key(inst: &Instance, job: usize, next_pos: usize, rule: Rule) -> f64 {
    match rule {
        Rule::Spt => inst.op(job, next_pos).duration as f64,
        Rule::Mwkr => work_remaining(inst, job, next_pos) as f64,
        Rule::Mopnr => (inst.n_machines() - next_pos) as f64,
        Rule::Fdd => {
            flow_due_date(inst, job, next_pos) as f64 / work_remaining(inst, job, next_pos) as f64
        }
    }
}

/// Runs a rule to completion, producing a feasible dispatch list.
pub fn run_pdr(inst: &Instance, rule: Rule) -> DispatchList {
    let n = inst.n_jobs();
    let m = inst.n_machines();
    let mut next_pos = vec![0usize; n];
    let mut perm = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        let mut best: Option<(usize, f64)> = None;
        for job in 0..n {
            if next_pos[job] == m {
                continue;
            }
            let key = rule_key(inst, job, next_pos[job], rule);
            let better = match best {
                None => true,
                Some((_, best_key)) => {
                    if rule.maximizing() {
                        key > best_key
                    } else {
                        key < best_key
                    }
                }
            };
            if better {
                best = Some((job, key));
            }
        }
        let (job, _) = best.expect("some job always has work left");
        perm.push(inst.row_index(job, next_pos[job]));
        next_pos[job] += 1;
    }
    DispatchList::new(perm).expect("constructive loop emits each row once")
}
