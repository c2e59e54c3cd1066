//! Sources of nondeterminism resolution. `hc.choose` is the only decision
//! point in a transition; interrupts and faults are deterministic functions
//! of the state and the execution history.

pub trait ChooseOracle {
    /// Pick a value in `0..bound`. `bound` is at least 1.
    fn choose(&mut self, bound: u64) -> u64;
}

/// Always picks 0: the canonical continuation of an unconstrained run.
pub struct ZeroOracle;

impl ChooseOracle for ZeroOracle {
    fn choose(&mut self, _bound: u64) -> u64 {
        0
    }
}

/// Replays a fixed prefix of decisions and continues with zeroes. Values are
/// clamped into range; the explorer detects divergence by comparing the
/// recorded (bound, picked) pairs afterwards.
pub struct ForcedOracle {
    forced: Vec<u64>,
    at: usize,
}

impl ForcedOracle {
    pub fn new(forced: Vec<u64>) -> ForcedOracle {
        ForcedOracle { forced, at: 0 }
    }
}

impl ChooseOracle for ForcedOracle {
    fn choose(&mut self, bound: u64) -> u64 {
        let v = match self.forced.get(self.at) {
            Some(v) => (*v).min(bound - 1),
            None => 0,
        };
        self.at += 1;
        v
    }
}
