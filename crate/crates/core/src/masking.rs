//! Feasibility masking for sequential decoders.
//!
//! Two boolean matrices drive the legal-action filter: `sched` marks
//! rows already emitted, `mask` marks rows whose job predecessor has
//! not been emitted yet. A row is selectable iff both flags are clear;
//! in open-shop mode the order constraint is dropped and only `sched`
//! applies. Any sequence of legal updates of length `n*m` yields a
//! feasible dispatch list by construction.

use crate::error::Error;
use crate::instance::DispatchList;

/// Which precedence structure the mask enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProblemMode {
    /// Job-shop: within each job, operations unlock one at a time.
    #[default]
    Jsp,
    /// Open-shop: any not-yet-emitted row is selectable. Experimental.
    Osp,
}

/// Mask state for a batch of identically-shaped instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskState {
    n_jobs: usize,
    n_machines: usize,
    mode: ProblemMode,
    /// `sched[lane][row]`: row already emitted.
    sched: Vec<Vec<bool>>,
    /// `mask[lane][row]`: row blocked by job order (JSP mode only).
    mask: Vec<Vec<bool>>,
    steps: Vec<usize>,
}

impl MaskState {
    /// Fresh state: nothing scheduled; in JSP mode only each job's first
    /// operation is selectable, in OSP mode every row is.
    pub fn init(batch: usize, n_jobs: usize, n_machines: usize, mode: ProblemMode) -> Self {
        assert!(batch >= 1 && n_jobs >= 1 && n_machines >= 1);
        let rows = n_jobs * n_machines;
        let mask_row: Vec<bool> = match mode {
            ProblemMode::Jsp => (0..rows).map(|p| p % n_machines != 0).collect(),
            ProblemMode::Osp => vec![false; rows],
        };
        Self {
            n_jobs,
            n_machines,
            mode,
            sched: vec![vec![false; rows]; batch],
            mask: vec![mask_row; batch],
            steps: vec![0; batch],
        }
    }

    pub fn batch(&self) -> usize {
        self.sched.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_jobs * self.n_machines
    }

    pub fn mode(&self) -> ProblemMode {
        self.mode
    }

    /// Number of updates applied to `lane` so far.
    pub fn steps_taken(&self, lane: usize) -> usize {
        self.steps[lane]
    }

    pub fn is_complete(&self, lane: usize) -> bool {
        self.steps[lane] == self.n_rows()
    }

    pub fn is_selectable(&self, lane: usize, row: usize) -> bool {
        !self.sched[lane][row] && !self.mask[lane][row]
    }

    /// Rows currently selectable in `lane`, ascending.
    pub fn selectable(&self, lane: usize) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&p| self.is_selectable(lane, p))
            .collect()
    }

    /// `true` entries are blocked (scheduled or order-masked).
    pub fn blocked(&self, lane: usize) -> Vec<bool> {
        (0..self.n_rows())
            .map(|p| !self.is_selectable(lane, p))
            .collect()
    }

    /// Marks `row` as emitted in `lane` and unlocks its job successor.
    ///
    /// Selecting a non-selectable row signals a decoder bug and is
    /// reported as a contract violation.
    pub fn step_update(&mut self, lane: usize, row: usize) -> Result<(), Error> {
        if row >= self.n_rows() || !self.is_selectable(lane, row) {
            return Err(Error::MaskContract { lane, row });
        }
        self.sched[lane][row] = true;
        if self.mode == ProblemMode::Jsp && row % self.n_machines < self.n_machines - 1 {
            self.mask[lane][row + 1] = false;
        }
        self.steps[lane] += 1;
        Ok(())
    }

    /// Replaces blocked entries of a score vector with `-inf`, so a
    /// subsequent softmax assigns them probability exactly zero.
    pub fn mask_scores(&self, lane: usize, scores: &mut [f64]) {
        assert_eq!(scores.len(), self.n_rows());
        for (p, s) in scores.iter_mut().enumerate() {
            if !self.is_selectable(lane, p) {
                *s = f64::NEG_INFINITY;
            }
        }
    }
}

/// Counts the complete legal trajectories for one lane of shape
/// `n x m`. Intended for tiny shapes; grows combinatorially.
pub fn count_trajectories(n_jobs: usize, n_machines: usize, mode: ProblemMode) -> u64 {
    fn recurse(state: &mut MaskState) -> u64 {
        if state.is_complete(0) {
            return 1;
        }
        let mut total = 0;
        for row in state.selectable(0) {
            let saved = state.clone();
            state.step_update(0, row).unwrap();
            total += recurse(state);
            *state = saved;
        }
        total
    }
    recurse(&mut MaskState::init(1, n_jobs, n_machines, mode))
}

/// Enumerates every complete legal trajectory as a dispatch list.
/// Intended for tiny shapes (exhaustive oracles in tests).
pub fn enumerate_trajectories(
    n_jobs: usize,
    n_machines: usize,
    mode: ProblemMode,
) -> Vec<DispatchList> {
    fn recurse(state: &mut MaskState, prefix: &mut Vec<usize>, out: &mut Vec<DispatchList>) {
        if state.is_complete(0) {
            out.push(DispatchList::new(prefix.clone()).unwrap());
            return;
        }
        for row in state.selectable(0) {
            let saved = state.clone();
            state.step_update(0, row).unwrap();
            prefix.push(row);
            recurse(state, prefix, out);
            prefix.pop();
            *state = saved;
        }
    }
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    recurse(
        &mut MaskState::init(1, n_jobs, n_machines, mode),
        &mut prefix,
        &mut out,
    );
    out
}
