use super::grid::GridSpec;
use super::scheme::{stable_dt, step};
use super::state::StateField;
use crate::error::{Error, Result};

/// Pre-step state of one model substep, kept for linearization.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub time: f64,
    pub dt: f64,
    pub state: StateField,
}

/// Nonlinear model run over `[t0, tf]`.
///
/// `times`/`states` hold the recorded instants; `checkpoints` hold every
/// substep so that tangent and adjoint sweeps can be replayed.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub states: Vec<StateField>,
    pub checkpoints: Vec<Checkpoint>,
    /// Substeps completed when each recorded instant is reached.
    record_steps: Vec<usize>,
}

/// Absolute tolerance used to match instants against the time axis.
pub(crate) fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl Trajectory {
    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn tf(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn substeps(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn initial(&self) -> &StateField {
        &self.states[0]
    }

    pub fn last(&self) -> &StateField {
        self.states.last().expect("trajectory is never empty")
    }

    /// Index of `t` among the recorded instants.
    pub fn record_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| same_time(s, t))
            .ok_or(Error::TimeNotRecorded(t))
    }

    pub fn state_at(&self, t: f64) -> Result<&StateField> {
        Ok(&self.states[self.record_index(t)?])
    }

    /// Number of substeps completed at recorded instant `k`.
    pub fn record_step(&self, k: usize) -> usize {
        self.record_steps[k]
    }

    /// Time at substep boundary `b` (`0..=substeps`).
    pub fn boundary_time(&self, b: usize) -> f64 {
        if b < self.checkpoints.len() {
            self.checkpoints[b].time
        } else {
            self.tf()
        }
    }

    /// Substep boundary that coincides with `t`.
    pub fn boundary_at(&self, t: f64) -> Result<usize> {
        let (t0, tf) = (self.t0(), self.tf());
        if t < t0 - 1e-12 || t > tf + 1e-12 {
            return Err(Error::OutOfSpan { t, t0, tf });
        }
        if let Ok(k) = self.record_index(t) {
            return Ok(self.record_steps[k]);
        }
        self.checkpoints
            .iter()
            .position(|c| same_time(c.time, t))
            .ok_or(Error::TimeNotRecorded(t))
    }

    /// Runs `state0` through this trajectory's substeps (same `dt`
    /// sequence, same records). The model map that the tangent and
    /// adjoint sweeps differentiate.
    pub fn replay(&self, state0: &StateField) -> Result<Trajectory> {
        if state0.grid() != &self.grid {
            return Err(Error::InvalidArgument("replayed state is on another grid".into()));
        }
        state0.check_positive()?;
        let mut states = Vec::with_capacity(self.states.len());
        let mut checkpoints = Vec::with_capacity(self.checkpoints.len());
        let mut state = state0.clone();
        let mut done = 0;
        for &target in &self.record_steps {
            for c in &self.checkpoints[done..target] {
                let next = step(&state, c.dt)?;
                checkpoints.push(Checkpoint { time: c.time, dt: c.dt, state });
                state = next;
            }
            done = target;
            states.push(state.clone());
        }
        Ok(Trajectory {
            grid: self.grid,
            times: self.times.clone(),
            states,
            checkpoints,
            record_steps: self.record_steps.clone(),
        })
    }
}

/// Integrates from `t0` to `tf`, landing exactly on every instant of
/// `record_times` (and on `t0`, `tf`, which are always recorded).
///
/// The substep is `stable_dt(state, cfl)` clipped to the next landing time.
pub fn integrate(
    state0: &StateField,
    t0: f64,
    tf: f64,
    record_times: &[f64],
    cfl: f64,
) -> Result<Trajectory> {
    if !(tf >= t0) {
        return Err(Error::InvalidArgument(format!(
            "integration interval [{t0}, {tf}] is reversed"
        )));
    }
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::InvalidArgument(format!("cfl {cfl} not in (0, 1]")));
    }
    state0.check_positive()?;

    let mut times = Vec::with_capacity(record_times.len() + 2);
    times.push(t0);
    for &t in record_times {
        if t < t0 - 1e-12 || t > tf + 1e-12 {
            return Err(Error::OutOfSpan { t, t0, tf });
        }
        times.push(t.clamp(t0, tf));
    }
    times.push(tf);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| same_time(*a, *b));

    let mut states = vec![state0.clone()];
    let mut record_steps = vec![0];
    let mut checkpoints = Vec::new();
    let mut state = state0.clone();
    let mut t = t0;
    for &landing in &times[1..] {
        while !same_time(t, landing) {
            let dt_max = stable_dt(&state, cfl);
            let remaining = landing - t;
            let stretch = (dt_max * (1.0 + 1e-6)).min(stable_dt(&state, 1.0));
            let (dt, lands) = if remaining <= stretch {
                (remaining, true)
            } else {
                (dt_max, false)
            };
            let next = step(&state, dt)?;
            checkpoints.push(Checkpoint {
                time: t,
                dt,
                state,
            });
            state = next;
            t = if lands { landing } else { t + dt };
        }
        t = landing;
        states.push(state.clone());
        record_steps.push(checkpoints.len());
    }

    Ok(Trajectory {
        grid: *state0.grid(),
        times,
        states,
        checkpoints,
        record_steps,
    })
}
