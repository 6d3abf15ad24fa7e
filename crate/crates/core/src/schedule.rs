//! Dispatch-list feasibility and the list-to-schedule mapping.
//!
//! A dispatch list is replayed row by row: each operation is placed at
//! the earliest time at which its machine is free for the whole
//! duration and its job predecessor has finished. In gap-insert mode
//! idle gaps between already-placed operations are usable; in append
//! mode an operation never starts before the current horizon of its
//! machine. Both modes are deterministic and the gap-insert makespan
//! never exceeds the append makespan for the same list.

use crate::error::Error;
use crate::instance::{DispatchList, Instance, Time};

/// Placement policy for [`build_schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BuildMode {
    /// Fill idle gaps between already-placed operations when possible.
    #[default]
    GapInsert,
    /// Start at or after the machine's current horizon.
    Append,
}

impl BuildMode {
    pub const ALL: [BuildMode; 2] = [BuildMode::GapInsert, BuildMode::Append];
}

impl std::fmt::Display for BuildMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BuildMode::GapInsert => write!(f, "gap-insert"),
            BuildMode::Append => write!(f, "append"),
        }
    }
}

impl std::str::FromStr for BuildMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gap-insert" => Ok(BuildMode::GapInsert),
            "append" => Ok(BuildMode::Append),
            other => Err(format!("unknown build mode `{other}`")),
        }
    }
}

/// One placed operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledOp {
    pub machine: usize,
    pub start: Time,
    pub end: Time,
}

/// A complete schedule: start/end times per `(job, position)` plus the
/// derived makespan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    n_jobs: usize,
    n_machines: usize,
    entries: Vec<ScheduledOp>,
    makespan: Time,
}

impl Schedule {
    pub fn n_jobs(&self) -> usize {
        self.n_jobs
    }

    pub fn n_machines(&self) -> usize {
        self.n_machines
    }

    pub fn op(&self, job: usize, pos: usize) -> ScheduledOp {
        self.entries[job * self.n_machines + pos]
    }

    pub fn entries(&self) -> &[ScheduledOp] {
        &self.entries
    }

    pub fn makespan(&self) -> Time {
        self.makespan
    }

    /// Completion time of `job`.
    pub fn completion(&self, job: usize) -> Time {
        self.entries[job * self.n_machines..(job + 1) * self.n_machines]
            .iter()
            .map(|e| e.end)
            .max()
            .unwrap_or(0)
    }

    /// CSV dump, one row per operation: `job,pos,machine,start,end`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("job,pos,machine,start,end\n");
        for job in 0..self.n_jobs {
            for pos in 0..self.n_machines {
                let e = self.op(job, pos);
                out.push_str(&format!(
                    "{job},{pos},{},{},{}\n",
                    e.machine, e.start, e.end
                ));
            }
        }
        out
    }
}

/// Checks that a dispatch list preserves every job's internal operation
/// order. Returns the first violating pair on failure.
pub fn check_feasible(inst: &Instance, list: &DispatchList) -> Result<(), Error> {
    if list.len() != inst.n_ops() {
        return Err(Error::LengthMismatch {
            got: list.len(),
            expected: inst.n_ops(),
        });
    }
    let mut next_pos = vec![0usize; inst.n_jobs()];
    for (t, (job, pos)) in list.job_pos_order(inst.n_machines()).enumerate() {
        if pos != next_pos[job] {
            return Err(Error::Infeasible {
                job,
                earlier_pos: next_pos[job],
                later_pos: pos,
                list_index: t,
            });
        }
        next_pos[job] += 1;
    }
    Ok(())
}

/// Per-machine timeline of placed intervals, kept sorted by start.
struct MachineTimeline {
    busy: Vec<(Time, Time)>,
}

impl MachineTimeline {
    fn new() -> Self {
        Self { busy: Vec::new() }
    }

    fn horizon(&self) -> Time {
        self.busy.last().map_or(0, |&(_, end)| end)
    }

    /// Earliest start `>= ready` with the machine idle for `duration`.
    fn earliest_start(&self, ready: Time, duration: Time, mode: BuildMode) -> Time {
        match mode {
            BuildMode::Append => ready.max(self.horizon()),
            BuildMode::GapInsert => {
                let mut candidate = ready;
                for &(start, end) in &self.busy {
                    if candidate + duration <= start {
                        return candidate;
                    }
                    candidate = candidate.max(end);
                }
                candidate
            }
        }
    }

    fn place(&mut self, start: Time, end: Time) {
        let at = self.busy.partition_point(|&(s, _)| s < start);
        self.busy.insert(at, (start, end));
    }
}

/// Replays a feasible dispatch list into a schedule.
pub fn build_schedule(
    inst: &Instance,
    list: &DispatchList,
    mode: BuildMode,
) -> Result<Schedule, Error> {
    check_feasible(inst, list)?;
    let n = inst.n_jobs();
    let m = inst.n_machines();
    let mut machines: Vec<MachineTimeline> = (0..m).map(|_| MachineTimeline::new()).collect();
    let mut job_ready = vec![0 as Time; n];
    let mut entries = vec![
        ScheduledOp {
            machine: 0,
            start: 0,
            end: 0
        };
        n * m
    ];
    let mut makespan: Time = 0;
    for (job, pos) in list.job_pos_order(m) {
        let op = inst.op(job, pos);
        let start = machines[op.machine].earliest_start(job_ready[job], op.duration, mode);
        let end = start + op.duration;
        machines[op.machine].place(start, end);
        job_ready[job] = end;
        entries[job * m + pos] = ScheduledOp {
            machine: op.machine,
            start,
            end,
        };
        makespan = makespan.max(end);
    }
    Ok(Schedule {
        n_jobs: n,
        n_machines: m,
        entries,
        makespan,
    })
}

/// Maximum completion time over all jobs.
pub fn makespan(schedule: &Schedule) -> Time {
    (0..schedule.n_jobs())
        .map(|job| schedule.completion(job))
        .max()
        .unwrap_or(0)
}

/// Standard makespan lower bound: the larger of the longest job and the
/// most loaded machine.
pub fn lower_bound(inst: &Instance) -> Time {
    let job_bound = (0..inst.n_jobs())
        .map(|i| inst.job_work(i))
        .max()
        .unwrap_or(0);
    let machine_bound = (0..inst.n_machines())
        .map(|mach| inst.machine_load(mach))
        .max()
        .unwrap_or(0);
    job_bound.max(machine_bound)
}

/// Asserts the structural schedule invariants; used by tests and the
/// oracle cross-checks.
pub fn validate(inst: &Instance, schedule: &Schedule) -> Result<(), Error> {
    let m = inst.n_machines();
    let mut per_machine: Vec<Vec<(Time, Time)>> = vec![Vec::new(); m];
    for job in 0..inst.n_jobs() {
        for pos in 0..m {
            let e = schedule.op(job, pos);
            let op = inst.op(job, pos);
            if e.machine != op.machine || e.end != e.start + op.duration {
                return Err(Error::InvalidInstance(format!(
                    "schedule entry ({job}, {pos}) does not match the instance"
                )));
            }
            if pos > 0 && schedule.op(job, pos - 1).end > e.start {
                return Err(Error::InvalidInstance(format!(
                    "job {job} overlaps its own operations at position {pos}"
                )));
            }
            per_machine[e.machine].push((e.start, e.end));
        }
    }
    for (mach, intervals) in per_machine.iter_mut().enumerate() {
        intervals.sort_unstable();
        for w in intervals.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(Error::InvalidInstance(format!(
                    "machine {mach} runs two operations at once"
                )));
            }
        }
    }
    if schedule.makespan() != makespan(schedule) {
        return Err(Error::InvalidInstance("stored makespan is stale".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_taillard;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_3x4() -> Instance {
        Instance::new(vec![
            vec![(0, 4), (2, 2), (1, 6), (3, 2)],
            vec![(0, 4), (3, 5), (2, 7), (1, 8)],
            vec![(2, 6), (0, 4), (1, 3), (3, 1)],
        ])
        .unwrap()
    }

    fn example_2x3() -> Instance {
        Instance::new(vec![
            vec![(1, 4), (2, 7), (0, 5)],
            vec![(0, 7), (1, 3), (2, 7)],
        ])
        .unwrap()
    }

    /// The worked solution order for the 3x4 example.
    fn worked_list() -> DispatchList {
        DispatchList::new(vec![4, 0, 8, 5, 1, 9, 2, 10, 6, 11, 3, 7]).unwrap()
    }

    /// Random feasible list: shuffle per-job queues fairly.
    fn random_feasible_list(inst: &Instance, rng: &mut ChaCha8Rng) -> DispatchList {
        let mut order: Vec<usize> = (0..inst.n_ops()).map(|k| k / inst.n_machines()).collect();
        order.shuffle(rng);
        let mut next = vec![0usize; inst.n_jobs()];
        let perm = order
            .into_iter()
            .map(|job| {
                let k = inst.row_index(job, next[job]);
                next[job] += 1;
                k
            })
            .collect();
        DispatchList::new(perm).unwrap()
    }

    #[test]
    fn worked_list_is_feasible() {
        assert!(check_feasible(&example_3x4(), &worked_list()).is_ok());
    }

    #[test]
    fn identity_is_feasible() {
        let inst = example_3x4();
        assert!(check_feasible(&inst, &DispatchList::identity(12)).is_ok());
    }

    #[test]
    fn swapped_pair_reports_first_violation() {
        let inst = example_3x4();
        let mut perm: Vec<usize> = (0..12).collect();
        perm.swap(0, 1); // job 0: position 1 before position 0
        let err = check_feasible(&inst, &DispatchList::new(perm).unwrap()).unwrap_err();
        assert_eq!(
            err,
            Error::Infeasible {
                job: 0,
                earlier_pos: 0,
                later_pos: 1,
                list_index: 0,
            }
        );
    }

    #[test]
    fn worked_example_makespan_is_27_in_both_modes() {
        let inst = example_3x4();
        for mode in BuildMode::ALL {
            let s = build_schedule(&inst, &worked_list(), mode).unwrap();
            assert_eq!(s.makespan(), 27, "mode {mode}");
            validate(&inst, &s).unwrap();
        }
    }

    #[test]
    fn single_job_runs_back_to_back() {
        let inst = Instance::new(vec![vec![(2, 3), (0, 5), (1, 2)]]).unwrap();
        let s = build_schedule(&inst, &DispatchList::identity(3), BuildMode::GapInsert).unwrap();
        assert_eq!(s.op(0, 0).start, 0);
        assert_eq!(s.op(0, 1).start, 3);
        assert_eq!(s.op(0, 2).start, 8);
        assert_eq!(s.makespan(), 10);
    }

    #[test]
    fn mwkr_style_list_reaches_18_on_2x3() {
        let inst = example_2x3();
        // (1,0) (0,0) (0,1) (1,1) (1,2) (0,2)
        let list = DispatchList::new(vec![3, 0, 1, 4, 5, 2]).unwrap();
        for mode in BuildMode::ALL {
            assert_eq!(build_schedule(&inst, &list, mode).unwrap().makespan(), 18);
        }
    }

    #[test]
    fn infeasible_list_is_rejected_by_builder() {
        let inst = example_2x3();
        let list = DispatchList::new(vec![1, 0, 2, 3, 4, 5]).unwrap();
        assert!(build_schedule(&inst, &list, BuildMode::Append).is_err());
    }

    #[test]
    fn gap_insert_never_worse_than_append() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let inst = generate_taillard(2 + trial % 7, 2 + trial % 5, trial as u64);
            let list = random_feasible_list(&inst, &mut rng);
            let gap = build_schedule(&inst, &list, BuildMode::GapInsert).unwrap();
            let app = build_schedule(&inst, &list, BuildMode::Append).unwrap();
            assert!(gap.makespan() <= app.makespan());
        }
    }

    #[test]
    fn schedules_satisfy_invariants_and_lower_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..500u64 {
            let n = 1 + (trial % 10) as usize;
            let m = 1 + (trial % 7) as usize;
            let inst = generate_taillard(n, m, trial);
            let list = random_feasible_list(&inst, &mut rng);
            for mode in BuildMode::ALL {
                let s = build_schedule(&inst, &list, mode).unwrap();
                validate(&inst, &s).unwrap();
                assert!(s.makespan() >= lower_bound(&inst));
            }
        }
    }

    #[test]
    fn builder_is_deterministic() {
        let inst = generate_taillard(6, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let list = random_feasible_list(&inst, &mut rng);
        let a = build_schedule(&inst, &list, BuildMode::GapInsert).unwrap();
        let b = build_schedule(&inst, &list, BuildMode::GapInsert).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_dump_has_one_row_per_operation() {
        let inst = example_2x3();
        let s = build_schedule(&inst, &DispatchList::identity(6), BuildMode::Append).unwrap();
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("job,pos,machine,start,end\n"));
    }
}
