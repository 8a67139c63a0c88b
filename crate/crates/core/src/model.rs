//! Slot-level dynamics of the two-group system and the embedded chain at
//! switching times.
//!
//! Two symmetric groups of `R` queues share a resource. The active group
//! drains: in each slot an active queue with `a` packets receives `xi`
//! arrivals and, if non-empty at the start of the slot, transmits one packet,
//! leaving `Y = a + xi - 1{a>0}`. At the end of the slot it advertises a
//! momentary release with probability `psi(Y) = (1+Y)^{-beta}`; a release
//! from a non-empty queue costs an extra `zeta`-distributed jump. Inactive
//! queues just accumulate `xi` arrivals. The first slot at whose end all `R`
//! active queues advertise a release simultaneously is the switching time
//! `T*`: the groups swap and the embedded chain `Q = (Q^a, Q^i)` is observed.
//!
//! `beta = inf` is the random-capture regime: a queue releases exactly when
//! it is empty at the end of the slot, so the cycle ends at the first slot
//! where the whole active group is simultaneously empty (time 0 counts if
//! the group starts empty), and no jumps ever occur.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistError, Distribution, DistributionSpec};
use crate::rng::RngStream;

pub const DEFAULT_CYCLE_CAP: u64 = 1_000_000_000;

/// Size of the precomputed release-probability table. Above this the hot
/// loop first screens the uniform against `psi(PSI_TABLE_LEN)`, which bounds
/// `psi(y)` for larger `y`, and only then pays for a `powf`.
const PSI_TABLE_LEN: usize = 4096;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("state has {got} queues, expected R = {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("cycle exceeded {cap} slots{}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    DivergedCycle {
        cap: u64,
        epoch: Option<usize>,
        partial: Box<CycleRecord>,
    },
}

/// Aggressiveness exponent; strictly positive, possibly infinite.
/// Serializes as a number, or as the string `"inf"` when infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beta(f64);

impl Beta {
    pub const INF: Beta = Beta(f64::INFINITY);

    pub fn new(value: f64) -> Result<Beta, ModelError> {
        if value > 0.0 {
            Ok(Beta(value))
        } else {
            Err(ModelError::InvalidParameter(format!(
                "beta must be positive, got {value}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Beta {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Beta, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let v = match Raw::deserialize(de)? {
            Raw::Num(x) => x,
            Raw::Text(s) if s == "inf" => f64::INFINITY,
            Raw::Text(s) => {
                return Err(serde::de::Error::custom(format!(
                    "beta must be a positive number or \"inf\", got {s:?}"
                )))
            }
        };
        Beta::new(v).map_err(serde::de::Error::custom)
    }
}

/// Release probability `psi(a) = (1+a)^{-beta}`, with the convention
/// `psi(0) = 1, psi(a) = 0 (a > 0)` at `beta = inf`.
pub fn psi(a: u64, beta: Beta) -> f64 {
    if beta.is_infinite() {
        if a == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 + a as f64).powf(-beta.get())
    }
}

/// Model parameters: queues per group, aggressiveness, arrival and jump laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r: usize,
    pub beta: Beta,
    pub xi: DistributionSpec,
    pub zeta: DistributionSpec,
    #[serde(default = "default_cycle_cap")]
    pub cycle_cap: u64,
}

fn default_cycle_cap() -> u64 {
    DEFAULT_CYCLE_CAP
}

impl ModelParams {
    pub fn new(
        r: usize,
        beta: Beta,
        xi: DistributionSpec,
        zeta: DistributionSpec,
    ) -> Result<ModelParams, ModelError> {
        if r < 2 {
            return Err(ModelError::InvalidParameter(format!(
                "R must be at least 2, got {r}"
            )));
        }
        xi.validate()?;
        zeta.validate()?;
        Ok(ModelParams {
            r,
            beta,
            xi,
            zeta,
            cycle_cap: DEFAULT_CYCLE_CAP,
        })
    }

    pub fn with_cycle_cap(mut self, cap: u64) -> ModelParams {
        self.cycle_cap = cap;
        self
    }

    /// System load `rho = 2 E(xi)`; each queue is active half the time.
    pub fn rho(&self) -> f64 {
        2.0 * self.xi.mean()
    }
}

/// State of the embedded chain just after a switch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub active: Vec<u64>,
    pub inactive: Vec<u64>,
}

impl SystemState {
    pub fn new(active: Vec<u64>, inactive: Vec<u64>) -> SystemState {
        SystemState { active, inactive }
    }

    pub fn zero(r: usize) -> SystemState {
        SystemState {
            active: vec![0; r],
            inactive: vec![0; r],
        }
    }

    /// Total packet count `|Q|_1`.
    pub fn total(&self) -> u64 {
        self.active.iter().sum::<u64>() + self.inactive.iter().sum::<u64>()
    }
}

/// Per-cycle observables recorded while simulating up to the switching time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// Switching time in slots.
    pub t_star: u64,
    /// First slot index at whose end queue `r` was empty; `None` if it never
    /// emptied before the switch (possible at finite beta).
    pub tau: Vec<Option<u64>>,
    /// Max of the hitting times, defined only when every queue emptied.
    pub tau_max: Option<u64>,
    /// Active-side state at the switch, `A(T*)`.
    pub a_final: Vec<u64>,
    /// Inactive-side arrival totals over the cycle, `S(T*)`.
    pub s_final: Vec<u64>,
    /// Per queue: slots that began with the queue empty (wasted service).
    pub idle_slots: Vec<u64>,
    /// Total release advertisements over all queues and slots of the cycle.
    pub release_events: u64,
}

impl CycleRecord {
    /// Smallest recorded hitting time, `tau_(1)`.
    pub fn tau_min(&self) -> Option<u64> {
        self.tau.iter().flatten().min().copied()
    }

    /// Index of the first queue to empty (smallest tau, ties to the lowest
    /// index); `None` if no queue emptied.
    pub fn first_emptied(&self) -> Option<usize> {
        let mut best: Option<(u64, usize)> = None;
        for (r, t) in self.tau.iter().enumerate() {
            if let Some(t) = t {
                if best.map_or(true, |(bt, _)| *t < bt) {
                    best = Some((*t, r));
                }
            }
        }
        best.map(|(_, r)| r)
    }
}

/// What happened to the queues in one slot; handed to trace/accounting hooks.
pub struct SlotView<'a> {
    /// 1-based slot index within the cycle.
    pub slot: u64,
    /// Active-side states at the end of the slot (jumps included).
    pub active: &'a [u64],
    pub released: &'a [bool],
    pub xi_active: &'a [u64],
    pub zeta_added: &'a [u64],
    /// Whether the queue transmitted (was non-empty at the slot start).
    pub departed: &'a [bool],
    pub xi_inactive: &'a [u64],
}

pub trait SlotObserver {
    fn slot(&mut self, view: &SlotView<'_>);
}

/// No-op observer for plain runs.
pub struct NoObserver;

impl SlotObserver for NoObserver {
    #[inline]
    fn slot(&mut self, _: &SlotView<'_>) {}
}

/// The random streams feeding one active queue: arrivals, release coins,
/// jump sizes. Keeping the three purposes on disjoint streams means a
/// lazily-drawn jump never shifts the arrival sequence, so runs that share a
/// master seed stay coupled slot-by-slot across different beta values.
#[derive(Debug, Clone)]
pub struct ActiveStreams {
    pub xi: RngStream,
    pub coin: RngStream,
    pub jump: RngStream,
}

/// One chain's worth of streams: per active queue and per inactive queue.
#[derive(Debug, Clone)]
pub struct ChainStreams {
    pub active: Vec<ActiveStreams>,
    pub inactive_xi: Vec<RngStream>,
}

const ROLE_ACTIVE_XI: u64 = 0;
const ROLE_ACTIVE_COIN: u64 = 1;
const ROLE_ACTIVE_JUMP: u64 = 2;
const ROLE_INACTIVE_XI: u64 = 3;

impl ChainStreams {
    pub fn new(r: usize, base: &RngStream) -> ChainStreams {
        let label = |role: u64, q: usize| role | ((q as u64) << 2);
        ChainStreams {
            active: (0..r)
                .map(|q| ActiveStreams {
                    xi: base.substream(label(ROLE_ACTIVE_XI, q)),
                    coin: base.substream(label(ROLE_ACTIVE_COIN, q)),
                    jump: base.substream(label(ROLE_ACTIVE_JUMP, q)),
                })
                .collect(),
            inactive_xi: (0..r)
                .map(|q| base.substream(label(ROLE_INACTIVE_XI, q)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SlotOutcome {
    pub next: u64,
    pub released: bool,
    pub xi: u64,
    pub zeta: u64,
    pub departed: bool,
}

/// Compiled model: parameters plus cached samplers and release probabilities.
pub struct Model {
    params: ModelParams,
    xi_dist: Distribution,
    zeta_dist: Distribution,
    beta_inf: bool,
    psi_table: Vec<f64>,
    /// Upper bound on `psi(y)` for `y >= PSI_TABLE_LEN`.
    psi_tail_sup: f64,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Model, ModelError> {
        if params.r < 2 {
            return Err(ModelError::InvalidParameter(format!(
                "R must be at least 2, got {}",
                params.r
            )));
        }
        let xi_dist = params.xi.compile()?;
        let zeta_dist = params.zeta.compile()?;
        let beta_inf = params.beta.is_infinite();
        let (psi_table, psi_tail_sup) = if beta_inf {
            (Vec::new(), 0.0)
        } else {
            let table: Vec<f64> = (0..PSI_TABLE_LEN as u64)
                .map(|a| psi(a, params.beta))
                .collect();
            let tail = psi(PSI_TABLE_LEN as u64, params.beta);
            (table, tail)
        };
        Ok(Model {
            params,
            xi_dist,
            zeta_dist,
            beta_inf,
            psi_table,
            psi_tail_sup,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn psi(&self, a: u64) -> f64 {
        psi(a, self.params.beta)
    }

    #[inline]
    fn released(&self, y: u64, coin: &mut RngStream) -> bool {
        debug_assert!(!self.beta_inf);
        let u = coin.next_f64();
        if (y as usize) < PSI_TABLE_LEN {
            u < self.psi_table[y as usize]
        } else if u >= self.psi_tail_sup {
            false
        } else {
            u < psi(y, self.params.beta)
        }
    }

    /// One slot of one active queue: draw arrivals, transmit if non-empty,
    /// toss the release coin on the end-of-slot state, pay the jump when a
    /// non-empty queue releases. Empty-at-end queues always release free.
    #[inline]
    pub fn active_slot_step(&self, a: u64, streams: &mut ActiveStreams) -> SlotOutcome {
        let xi = self.xi_dist.sample(&mut streams.xi);
        let departed = a > 0;
        let y = a + xi - departed as u64;
        let released = if self.beta_inf {
            y == 0
        } else {
            self.released(y, &mut streams.coin)
        };
        let zeta = if released && y > 0 {
            self.zeta_dist.sample(&mut streams.jump)
        } else {
            0
        };
        SlotOutcome {
            next: y + zeta,
            released,
            xi,
            zeta,
            departed,
        }
    }

    /// Simulate one cycle from active state `a0` until the switching time.
    pub fn run_cycle(
        &self,
        a0: &[u64],
        streams: &mut ChainStreams,
    ) -> Result<CycleRecord, ModelError> {
        self.run_cycle_observed(a0, streams, &mut NoObserver)
    }

    pub fn run_cycle_observed<O: SlotObserver>(
        &self,
        a0: &[u64],
        streams: &mut ChainStreams,
        observer: &mut O,
    ) -> Result<CycleRecord, ModelError> {
        let r = self.params.r;
        if a0.len() != r {
            return Err(ModelError::DimensionMismatch {
                got: a0.len(),
                expected: r,
            });
        }

        let mut active: Vec<u64> = a0.to_vec();
        let mut s_total = vec![0u64; r];
        let mut idle = vec![0u64; r];
        let mut tau: Vec<Option<u64>> = a0.iter().map(|&a| (a == 0).then_some(0)).collect();
        let mut release_events = 0u64;

        // Random capture: T* = inf{k >= 0 : A(k) = 0}, attained at 0 when the
        // group starts empty. At finite beta the first release check happens
        // at the end of slot 1.
        if self.beta_inf && active.iter().all(|&a| a == 0) {
            return Ok(CycleRecord {
                t_star: 0,
                tau,
                tau_max: Some(0),
                a_final: active,
                s_final: s_total,
                idle_slots: idle,
                release_events: 0,
            });
        }

        let mut released = vec![false; r];
        let mut xi_active = vec![0u64; r];
        let mut zeta_added = vec![0u64; r];
        let mut departed = vec![false; r];
        let mut xi_inactive = vec![0u64; r];

        let cap = self.params.cycle_cap;
        for k in 1..=cap {
            let mut all_released = true;
            for q in 0..r {
                let a = active[q];
                if a == 0 {
                    idle[q] += 1;
                }
                let out = self.active_slot_step(a, &mut streams.active[q]);
                active[q] = out.next;
                released[q] = out.released;
                xi_active[q] = out.xi;
                zeta_added[q] = out.zeta;
                departed[q] = out.departed;
                release_events += out.released as u64;
                all_released &= out.released;
                if tau[q].is_none() && out.next == 0 {
                    tau[q] = Some(k);
                }
            }
            for q in 0..r {
                let inc = self.xi_dist.sample(&mut streams.inactive_xi[q]);
                s_total[q] += inc;
                xi_inactive[q] = inc;
            }
            observer.slot(&SlotView {
                slot: k,
                active: &active,
                released: &released,
                xi_active: &xi_active,
                zeta_added: &zeta_added,
                departed: &departed,
                xi_inactive: &xi_inactive,
            });
            if all_released {
                let tau_max = if tau.iter().all(Option::is_some) {
                    tau.iter().flatten().max().copied()
                } else {
                    None
                };
                return Ok(CycleRecord {
                    t_star: k,
                    tau,
                    tau_max,
                    a_final: active,
                    s_final: s_total,
                    idle_slots: idle,
                    release_events,
                });
            }
        }

        Err(ModelError::DivergedCycle {
            cap,
            epoch: None,
            partial: Box::new(CycleRecord {
                t_star: cap,
                tau,
                tau_max: None,
                a_final: active,
                s_final: s_total,
                idle_slots: idle,
                release_events,
            }),
        })
    }

    /// One transition of the embedded chain: run a cycle from `q.active`;
    /// the inactive queues plus their accumulated arrivals become active and
    /// the leftover active state becomes the new inactive side.
    pub fn embedded_step(
        &self,
        q: &SystemState,
        streams: &mut ChainStreams,
    ) -> Result<(SystemState, CycleRecord), ModelError> {
        if q.inactive.len() != self.params.r {
            return Err(ModelError::DimensionMismatch {
                got: q.inactive.len(),
                expected: self.params.r,
            });
        }
        let rec = self.run_cycle(&q.active, streams)?;
        let next = SystemState {
            active: q
                .inactive
                .iter()
                .zip(&rec.s_final)
                .map(|(&qi, &s)| qi + s)
                .collect(),
            inactive: rec.a_final.clone(),
        };
        Ok((next, rec))
    }

    /// Iterate the embedded chain for `n_switches` epochs, yielding the state
    /// after each switch together with that cycle's record. Deterministic
    /// given `(q0, params, base stream)`.
    pub fn run_chain(&self, q0: SystemState, n_switches: usize, base: &RngStream) -> Chain<'_> {
        Chain {
            model: self,
            state: q0,
            streams: ChainStreams::new(self.params.r, base),
            remaining: n_switches,
            epoch: 0,
            stopped: false,
        }
    }

    pub fn run_chain_collect(
        &self,
        q0: SystemState,
        n_switches: usize,
        base: &RngStream,
    ) -> Result<Vec<Epoch>, ModelError> {
        self.run_chain(q0, n_switches, base).collect()
    }
}

/// State after a switch plus the cycle that produced it.
#[derive(Debug, Clone)]
pub struct Epoch {
    pub state: SystemState,
    pub record: CycleRecord,
}

pub struct Chain<'a> {
    model: &'a Model,
    state: SystemState,
    streams: ChainStreams,
    remaining: usize,
    epoch: usize,
    stopped: bool,
}

impl Chain<'_> {
    pub fn state(&self) -> &SystemState {
        &self.state
    }
}

impl Iterator for Chain<'_> {
    type Item = Result<Epoch, ModelError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.stopped || self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        self.epoch += 1;
        match self.model.embedded_step(&self.state, &mut self.streams) {
            Ok((next, record)) => {
                self.state = next.clone();
                Some(Ok(Epoch {
                    state: next,
                    record,
                }))
            }
            Err(e) => {
                self.stopped = true;
                let e = match e {
                    ModelError::DivergedCycle { cap, partial, .. } => ModelError::DivergedCycle {
                        cap,
                        epoch: Some(self.epoch),
                        partial,
                    },
                    other => other,
                };
                Some(Err(e))
            }
        }
    }
}

/// `|Q(k)|_1` series of a collected chain.
pub fn q_totals(epochs: &[Epoch]) -> Vec<f64> {
    epochs.iter().map(|e| e.state.total() as f64).collect()
}
