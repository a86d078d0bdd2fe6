//! Joint communication and sensing link budget under a candidate assignment.
//!
//! SPVs are addressed by their slot in [`Topology::spvs`], communication
//! targets by their slot in [`Topology::comm_targets`] and sensing targets by
//! their slot in [`Topology::sense_targets`].
//!
//! Antenna boresights follow one rule set: an SPV points at the target of the
//! beam being evaluated (one beam per assigned target), a communication
//! target points its receive beam at its serving SPV, and a sensing SPV
//! receives through its own transmit beam.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, InterfererPath};
use crate::error::{Error, OrderedSinr, Result, Violation};
use crate::scenario::{lobe_class, Lobe, SensingParams, Topology};

/// Physical parameters the link budget needs beyond the topology itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SystemParams {
    pub channel: ChannelParams,
    pub sensing: SensingParams,
    /// Apply molecular absorption on both radar legs (e^{2φd}) instead of
    /// the single L^A factor of the radar equation as usually written.
    #[serde(default)]
    pub roundtrip_absorption: bool,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.sensing.validate()
    }
}

/// Binary association matrices: `alpha[k][m]` (communication) and
/// `beta[k][n]` (sensing).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment {
    pub alpha: Vec<Vec<u8>>,
    pub beta: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Comm,
    Sense,
}

impl Assignment {
    pub fn empty(spvs: usize, comm: usize, sense: usize) -> Self {
        Self {
            alpha: vec![vec![0; comm]; spvs],
            beta: vec![vec![0; sense]; spvs],
        }
    }

    /// Builds the matrices from one server per target. `servers` lists the SPV
    /// slot of every target in target order (communication targets first).
    pub fn from_servers(spvs: usize, comm: usize, servers: &[usize]) -> Self {
        let sense = servers.len() - comm;
        let mut a = Self::empty(spvs, comm, sense);
        for (t, &k) in servers.iter().enumerate() {
            if t < comm {
                a.alpha[k][t] = 1;
            } else {
                a.beta[k][t - comm] = 1;
            }
        }
        a
    }

    pub fn spv_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn comm_count(&self) -> usize {
        self.alpha.first().map_or(0, Vec::len)
    }

    pub fn sense_count(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    /// Server slot of each target in target order, `None` where a target has
    /// no server or several. This is the lexicographic encoding used for
    /// tie-breaking.
    pub fn servers(&self) -> Vec<Option<usize>> {
        let single = |col: &dyn Fn(usize) -> u8| -> Option<usize> {
            let on: Vec<usize> = (0..self.spv_count()).filter(|&k| col(k) == 1).collect();
            (on.len() == 1).then(|| on[0])
        };
        let comm = (0..self.comm_count()).map(|m| single(&|k| self.alpha[k][m]));
        let sense = (0..self.sense_count()).map(|n| single(&|k| self.beta[k][n]));
        comm.chain(sense).collect()
    }

    /// Target slots (in target order) served by SPV `k`.
    pub fn served_by(&self, k: usize) -> Vec<usize> {
        let comm = self.comm_count();
        let a = self.alpha[k]
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == 1)
            .map(|(m, _)| m);
        let b = self.beta[k]
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == 1)
            .map(move |(n, _)| comm + n);
        a.chain(b).collect()
    }

    pub fn mode_of(&self, k: usize) -> Option<Mode> {
        if self.alpha[k].contains(&1) {
            Some(Mode::Comm)
        } else if self.beta[k].contains(&1) {
            Some(Mode::Sense)
        } else {
            None
        }
    }

    /// Constraint checks that do not need the channel: shape, single server
    /// per target, binary entries, and one mode per SPV.
    pub fn structural_violations(&self, spvs: usize, comm: usize, sense: usize) -> Vec<Violation> {
        let shape_ok = |m: &Vec<Vec<u8>>, w: usize| m.len() == spvs && m.iter().all(|r| r.len() == w);
        let mut out = Vec::new();
        if !shape_ok(&self.alpha, comm) {
            out.push(Violation::Shape {
                expected: (spvs, comm),
                found: (self.alpha.len(), self.comm_count()),
            });
        }
        if !shape_ok(&self.beta, sense) {
            out.push(Violation::Shape {
                expected: (spvs, sense),
                found: (self.beta.len(), self.sense_count()),
            });
        }
        if !out.is_empty() {
            return out;
        }
        for m in 0..comm {
            let servers = (0..spvs).filter(|&k| self.alpha[k][m] != 0).count();
            let binary = (0..spvs).all(|k| self.alpha[k][m] <= 1);
            if servers != 1 || !binary {
                out.push(Violation::CommCoverage { target: m, servers });
            }
        }
        for n in 0..sense {
            let servers = (0..spvs).filter(|&k| self.beta[k][n] != 0).count();
            let binary = (0..spvs).all(|k| self.beta[k][n] <= 1);
            if servers != 1 || !binary {
                out.push(Violation::SenseCoverage { target: n, servers });
            }
        }
        for k in 0..spvs {
            if self.alpha[k].iter().any(|&x| x != 0) && self.beta[k].iter().any(|&x| x != 0) {
                out.push(Violation::ModeConflict { spv: k });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommLink {
    pub spv: usize,
    pub target: usize,
    pub spv_id: u32,
    pub target_id: u32,
    pub sinr: f64,
    /// bit/s
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseLink {
    pub spv: usize,
    pub target: usize,
    pub spv_id: u32,
    pub target_id: u32,
    pub sinr: f64,
    pub feasible: bool,
}

/// Rates, SINRs and feasibility of one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub comm: Vec<CommLink>,
    pub sense: Vec<SenseLink>,
    /// Sum rate over all communication links, bit/s.
    pub objective: f64,
    /// Every sensing link meets the minimum SINR.
    pub sensing_feasible: bool,
}

impl LinkReport {
    pub fn sensing_violations(&self) -> Vec<Violation> {
        self.sense
            .iter()
            .filter(|l| !l.feasible)
            .map(|l| Violation::SensingSinr {
                target: l.target,
                sinr: OrderedSinr(l.sinr),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Beam {
    /// SPV vehicle index.
    tx: usize,
    /// Target vehicle index the beam is pointed at.
    target: usize,
    mode: Mode,
}

/// Precomputed per-vehicle gains and per-pair path losses for one topology.
#[derive(Debug, Clone)]
pub struct LinkModel<'a> {
    topology: &'a Topology,
    params: SystemParams,
    main_gain: Vec<f64>,
    side_gain: Vec<f64>,
    /// L^A · L^F per vehicle pair, row-major.
    path_loss: Vec<f64>,
    absorption: Vec<f64>,
}

impl<'a> LinkModel<'a> {
    pub fn new(topology: &'a Topology, params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let vs = topology.vehicles();
        let n = vs.len();
        let mut main_gain = Vec::with_capacity(n);
        let mut side_gain = Vec::with_capacity(n);
        for v in vs {
            main_gain.push(channel::mainlobe_gain(&v.antenna)?);
            side_gain.push(channel::sidelobe_gain(&v.antenna)?);
        }
        let mut absorption = vec![1.0; n * n];
        let mut spreading = vec![f64::INFINITY; n * n];
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    let d = topology.distance(a, b);
                    absorption[a * n + b] = channel::absorption_loss(&params.channel, d)?;
                    spreading[a * n + b] = channel::spreading_loss(&params.channel, d)?;
                }
            }
        }
        let path_loss = absorption.iter().zip(&spreading).map(|(a, s)| a * s).collect();
        Ok(Self {
            topology,
            params: *params,
            main_gain,
            side_gain,
            path_loss,
            absorption,
        })
    }

    pub fn topology(&self) -> &'a Topology {
        self.topology
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    fn idx(&self, a: usize, b: usize) -> usize {
        a * self.topology.vehicles().len() + b
    }

    /// Inverse path loss (L^A·L^F)⁻¹ between two vehicles.
    pub fn path_gain(&self, a: usize, b: usize) -> f64 {
        1.0 / self.path_loss[self.idx(a, b)]
    }

    /// Gain of `antenna_of`'s beam pointed at `boresight` toward `probe`.
    fn gain(&self, antenna_of: usize, boresight: usize, probe: usize) -> f64 {
        let vs = self.topology.vehicles();
        match lobe_class(&vs[antenna_of], vs[boresight].position, vs[probe].position) {
            Ok(Lobe::Main) => self.main_gain[antenna_of],
            // Topology spacing guarantees distinct positions.
            _ => self.side_gain[antenna_of],
        }
    }

    fn beams<'b>(&'b self, assignment: &'b Assignment) -> impl Iterator<Item = Beam> + 'b {
        let spvs = self.topology.spvs();
        let comm = self.topology.comm_targets();
        let sense = self.topology.sense_targets();
        spvs.iter().enumerate().flat_map(move |(k, &tx)| {
            let a = assignment.alpha[k]
                .iter()
                .enumerate()
                .filter(|(_, &x)| x == 1)
                .map(move |(m, _)| Beam {
                    tx,
                    target: comm[m],
                    mode: Mode::Comm,
                });
            let b = assignment.beta[k]
                .iter()
                .enumerate()
                .filter(|(_, &x)| x == 1)
                .map(move |(n, _)| Beam {
                    tx,
                    target: sense[n],
                    mode: Mode::Sense,
                });
            a.chain(b)
        })
    }

    fn check_shape(&self, assignment: &Assignment) -> Result<()> {
        let c = self.topology.counts();
        let ok = assignment.alpha.len() == c.spv
            && assignment.beta.len() == c.spv
            && assignment.alpha.iter().all(|r| r.len() == c.comm)
            && assignment.beta.iter().all(|r| r.len() == c.sense);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidAssignment(vec![Violation::Shape {
                expected: (c.spv, c.targets()),
                found: (
                    assignment.alpha.len(),
                    assignment.comm_count() + assignment.sense_count(),
                ),
            }]))
        }
    }

    /// Interference-free received power S_km of the link k → m (main lobes on both ends).
    pub fn comm_signal(&self, k: usize, m: usize) -> f64 {
        let tx = self.topology.spvs()[k];
        let rx = self.topology.comm_targets()[m];
        let p = self.topology.vehicle(tx).tx_power;
        p * self.main_gain[tx] * self.main_gain[rx] * self.path_gain(tx, rx)
    }

    /// Paths of every beam of an SPV other than `k` toward the comm receiver
    /// `rx`, whose receive beam points at `serving`.
    fn comm_paths(&self, assignment: &Assignment, k: usize, m: usize) -> Vec<(InterfererPath, usize)> {
        let own = self.topology.spvs()[k];
        let rx = self.topology.comm_targets()[m];
        self.beams(assignment)
            .filter(|b| b.tx != own)
            .map(|b| {
                let path = InterfererPath {
                    tx_power: self.topology.vehicle(b.tx).tx_power,
                    tx_gain: self.gain(b.tx, b.target, rx),
                    rx_gain: self.gain(rx, own, b.tx),
                    distance: self.topology.distance(b.tx, rx),
                };
                (path, b.tx)
            })
            .collect()
    }

    fn require(&self, active: bool, what: &str) -> Result<()> {
        if active {
            Ok(())
        } else {
            Err(Error::Contract(format!("{what} is not active in the assignment")))
        }
    }

    /// Interference I^C_km on the communication link k → m.
    pub fn comm_interference(&self, assignment: &Assignment, k: usize, m: usize) -> Result<f64> {
        self.check_shape(assignment)?;
        self.require(assignment.alpha[k][m] == 1, &format!("communication link {k}→{m}"))?;
        let rx = self.topology.comm_targets()[m];
        Ok(self
            .comm_paths(assignment, k, m)
            .iter()
            .map(|(p, tx)| p.tx_power * p.tx_gain * p.rx_gain * self.path_gain(*tx, rx))
            .sum())
    }

    /// Thermal plus molecular-absorption noise N_km at communication target m.
    pub fn comm_noise(&self, assignment: &Assignment, k: usize, m: usize) -> Result<f64> {
        self.check_shape(assignment)?;
        let paths = self.comm_paths(assignment, k, m);
        channel::molecular_absorption_noise(&self.params.channel, paths.into_iter().map(|(p, _)| p))
    }

    /// Communication SINR γ^C_km; zero when α_km = 0.
    pub fn comm_sinr(&self, assignment: &Assignment, k: usize, m: usize) -> Result<f64> {
        self.check_shape(assignment)?;
        if assignment.alpha[k][m] != 1 {
            return Ok(0.0);
        }
        let interference = self.comm_interference(assignment, k, m)?;
        let noise = self.comm_noise(assignment, k, m)?;
        Ok(self.comm_signal(k, m) / (interference + noise))
    }

    /// Radar spreading loss L^S = (4π)³ f² d⁴ / (σ c²) of the path k → n → k.
    pub fn radar_spreading_loss(&self, k: usize, n: usize) -> f64 {
        let tx = self.topology.spvs()[k];
        let tgt = self.topology.sense_targets()[n];
        let d = self.topology.distance(tx, tgt);
        let ch = &self.params.channel;
        (4.0 * PI).powi(3) * ch.carrier_frequency.powi(2) * d.powi(4)
            / (self.params.sensing.rcs * ch.light_speed.powi(2))
    }

    /// Interference-free echo power of SPV k sensing target n.
    pub fn sensing_signal(&self, k: usize, n: usize) -> f64 {
        let tx = self.topology.spvs()[k];
        let tgt = self.topology.sense_targets()[n];
        let p = self.topology.vehicle(tx).tx_power;
        let g = self.main_gain[tx];
        let la = self.absorption[self.idx(tx, tgt)];
        let absorption = if self.params.roundtrip_absorption { la * la } else { la };
        p * g * g / (self.radar_spreading_loss(k, n) * absorption)
    }

    /// Direct-path interferers at the sensing receiver k, beam pointed at n.
    fn sensing_direct_paths(&self, assignment: &Assignment, k: usize, n: usize) -> Vec<InterfererPath> {
        let own = self.topology.spvs()[k];
        let tgt = self.topology.sense_targets()[n];
        self.beams(assignment)
            .filter(|b| b.tx != own)
            .map(|b| InterfererPath {
                tx_power: self.topology.vehicle(b.tx).tx_power,
                tx_gain: self.gain(b.tx, b.target, own),
                rx_gain: self.gain(own, tgt, b.tx),
                distance: self.topology.distance(b.tx, own),
            })
            .collect()
    }

    /// Interference I^S_kn on SPV k sensing target n: direct paths from
    /// every other beam plus echoes of other sensing beams scattered by n.
    pub fn sensing_interference(&self, assignment: &Assignment, k: usize, n: usize) -> Result<f64> {
        self.check_shape(assignment)?;
        self.require(assignment.beta[k][n] == 1, &format!("sensing link {k}→{n}"))?;
        let own = self.topology.spvs()[k];
        let tgt = self.topology.sense_targets()[n];
        let direct: f64 = self
            .sensing_direct_paths(assignment, k, n)
            .iter()
            .zip(self.beams(assignment).filter(|b| b.tx != own))
            .map(|(p, b)| p.tx_power * p.tx_gain * p.rx_gain * self.path_gain(b.tx, own))
            .sum();

        let ch = &self.params.channel;
        let d_kn = self.topology.distance(own, tgt);
        let la_kn = self.absorption[self.idx(own, tgt)];
        let scattered: f64 = self
            .beams(assignment)
            .filter(|b| b.tx != own && b.mode == Mode::Sense)
            .map(|b| {
                let d_in = self.topology.distance(b.tx, tgt);
                let la_in = self.absorption[self.idx(b.tx, tgt)];
                let p = self.topology.vehicle(b.tx).tx_power;
                let g_t = self.gain(b.tx, b.target, tgt);
                let g_r = self.main_gain[own];
                p * g_t * g_r * self.params.sensing.rcs * ch.light_speed.powi(2)
                    / ((4.0 * PI).powi(3) * ch.carrier_frequency.powi(2) * d_in.powi(2) * d_kn.powi(2) * la_in * la_kn)
            })
            .sum();
        Ok(direct + scattered)
    }

    /// Noise N_kn at the sensing receiver k.
    pub fn sensing_noise(&self, assignment: &Assignment, k: usize, n: usize) -> Result<f64> {
        self.check_shape(assignment)?;
        channel::molecular_absorption_noise(&self.params.channel, self.sensing_direct_paths(assignment, k, n))
    }

    /// Sensing SINR γ^S_kn; zero when β_kn = 0.
    pub fn sensing_sinr(&self, assignment: &Assignment, k: usize, n: usize) -> Result<f64> {
        self.check_shape(assignment)?;
        if assignment.beta[k][n] != 1 {
            return Ok(0.0);
        }
        let interference = self.sensing_interference(assignment, k, n)?;
        let noise = self.sensing_noise(assignment, k, n)?;
        Ok(self.sensing_signal(k, n) / (interference + noise))
    }

    /// Shannon rate B·log₂(1+γ), bit/s.
    pub fn rate(&self, sinr: f64) -> f64 {
        self.params.channel.bandwidth * (1.0 + sinr).log2()
    }

    /// Full evaluation; rejects assignments that leave a target unserved, give
    /// a target two servers, or put one SPV in both modes.
    pub fn evaluate(&self, assignment: &Assignment) -> Result<LinkReport> {
        let c = self.topology.counts();
        let violations = assignment.structural_violations(c.spv, c.comm, c.sense);
        if !violations.is_empty() {
            return Err(Error::InvalidAssignment(violations));
        }
        self.report(assignment)
    }

    /// Computes every active link of `assignment` without validating it.
    pub fn report(&self, assignment: &Assignment) -> Result<LinkReport> {
        self.check_shape(assignment)?;
        let topo = self.topology;
        let id = |v: usize| topo.vehicle(v).id;
        let mut comm = Vec::new();
        for m in 0..topo.comm_targets().len() {
            for k in 0..topo.spvs().len() {
                if assignment.alpha[k][m] == 1 {
                    let sinr = self.comm_sinr(assignment, k, m)?;
                    comm.push(CommLink {
                        spv: k,
                        target: m,
                        spv_id: id(topo.spvs()[k]),
                        target_id: id(topo.comm_targets()[m]),
                        sinr,
                        rate: self.rate(sinr),
                    });
                }
            }
        }
        let mut sense = Vec::new();
        for n in 0..topo.sense_targets().len() {
            for k in 0..topo.spvs().len() {
                if assignment.beta[k][n] == 1 {
                    let sinr = self.sensing_sinr(assignment, k, n)?;
                    sense.push(SenseLink {
                        spv: k,
                        target: n,
                        spv_id: id(topo.spvs()[k]),
                        target_id: id(topo.sense_targets()[n]),
                        sinr,
                        feasible: sinr >= self.params.sensing.min_sensing_sinr,
                    });
                }
            }
        }
        let objective = comm.iter().map(|l| l.rate).sum();
        let sensing_feasible = sense.iter().all(|l| l.feasible);
        Ok(LinkReport {
            comm,
            sense,
            objective,
            sensing_feasible,
        })
    }

    /// Sensing SINR of SPV k on target n with no other transmitter active.
    pub fn isolated_sensing_sinr(&self, k: usize, n: usize) -> f64 {
        self.sensing_signal(k, n) / self.params.channel.noise_floor
    }
}

/// Convenience wrapper building a [`LinkModel`] for a single evaluation.
pub fn evaluate(topology: &Topology, assignment: &Assignment, params: &SystemParams) -> Result<LinkReport> {
    LinkModel::new(topology, params)?.evaluate(assignment)
}

/// Every coverage, mode and sensing-floor violation of `assignment`,
/// re-derived from scratch.
pub fn violations(topology: &Topology, assignment: &Assignment, params: &SystemParams) -> Result<Vec<Violation>> {
    let c = topology.counts();
    let mut v = assignment.structural_violations(c.spv, c.comm, c.sense);
    if v.iter().any(|x| matches!(x, Violation::Shape { .. })) {
        return Ok(v);
    }
    let report = LinkModel::new(topology, params)?.report(assignment)?;
    v.extend(report.sensing_violations());
    Ok(v)
}
