//! Assignment solvers: the exhaustive sum-rate oracle, the exact
//! branch-and-bound solver for the probability-sum surrogate, and the
//! location-only greedy baseline.
//!
//! Every solver searches "server vectors": one SPV slot per target, targets
//! in order (communication first). Candidates are visited in lexicographic
//! order of that vector and only a strictly better candidate replaces the
//! incumbent, so ties resolve to the lexicographically smallest vector.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{spv_inputs, GnnModel};
use crate::hetgraph::{build_graph, GraphOptions};
use crate::jcs::{Assignment, LinkModel, LinkReport, Mode, SystemParams};
use crate::scenario::Topology;

/// Default cap on K^L for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes_explored: u64,
    /// Neither serialized nor compared, so outputs stay reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl PartialEq for SolverStats {
    fn eq(&self, other: &Self) -> bool {
        self.nodes_explored == other.nodes_explored
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub assignment: Assignment,
    /// Sum rate, bit/s.
    pub objective_true: f64,
    /// Probability-sum objective; `None` for solvers that do not use it.
    pub objective_surrogate: Option<f64>,
    pub feasible: bool,
    pub stats: SolverStats,
}

/// Oracle winner plus the per-SPV training labels it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub result: SolveResult,
    /// `labels[k]` has L+1 entries; the last marks an idle SPV.
    pub labels: Vec<Vec<f64>>,
}

#[cfg(test)]
fn servers_of(a: &Assignment) -> Vec<usize> {
    a.servers()
        .into_iter()
        .map(|s| s.expect("solver assignments cover every target"))
        .collect()
}

/// Per-SPV indicator labels for `assignment`.
pub fn labels_from_assignment(assignment: &Assignment) -> Vec<Vec<f64>> {
    let l = assignment.comm_count() + assignment.sense_count();
    (0..assignment.spv_count())
        .map(|k| {
            let mut z = vec![0.0; l + 1];
            let served = assignment.served_by(k);
            if served.is_empty() {
                z[l] = 1.0;
            }
            for t in served {
                z[t] = 1.0;
            }
            z
        })
        .collect()
}

/// Depth-first walk over mode-consistent server vectors in lexicographic
/// order. `visit` sees each complete vector; `prune` may cut a prefix.
struct Walker<'a> {
    spvs: usize,
    comm: usize,
    targets: usize,
    servers: Vec<usize>,
    /// Per SPV: number of comm / sense targets currently assigned.
    load: Vec<[usize; 2]>,
    nodes: u64,
    prune: &'a mut dyn FnMut(&[usize]) -> bool,
    visit: &'a mut dyn FnMut(&[usize]),
}

impl Walker<'_> {
    fn run(&mut self, fixed_first: Option<usize>) {
        match fixed_first {
            Some(k) if self.targets > 0 => self.descend_with(0, k),
            _ => self.descend(0),
        }
    }

    fn descend(&mut self, depth: usize) {
        if depth == self.targets {
            (self.visit)(&self.servers);
            return;
        }
        for k in 0..self.spvs {
            self.descend_with(depth, k);
        }
    }

    fn descend_with(&mut self, depth: usize, k: usize) {
        let (mine, other) = if depth < self.comm { (0, 1) } else { (1, 0) };
        if self.load[k][other] > 0 {
            return;
        }
        self.nodes += 1;
        self.servers.push(k);
        self.load[k][mine] += 1;
        if !(self.prune)(&self.servers) {
            self.descend(depth + 1);
        }
        self.load[k][mine] -= 1;
        self.servers.pop();
    }
}

fn walk(
    topology: &Topology,
    fixed_first: Option<usize>,
    prune: &mut dyn FnMut(&[usize]) -> bool,
    visit: &mut dyn FnMut(&[usize]),
) -> u64 {
    let c = topology.counts();
    let mut w = Walker {
        spvs: c.spv,
        comm: c.comm,
        targets: c.targets(),
        servers: Vec::with_capacity(c.targets()),
        load: vec![[0, 0]; c.spv],
        nodes: 0,
        prune,
        visit,
    };
    w.run(fixed_first);
    w.nodes
}

/// Candidate count K^L, as a float so huge instances do not overflow.
pub fn candidate_count(topology: &Topology) -> f64 {
    let c = topology.counts();
    (c.spv as f64).powi(c.targets() as i32)
}

/// Incumbent comparison: feasible beats infeasible, then larger value.
fn better(feasible: bool, value: f64, best: &Option<(bool, f64, Vec<usize>)>) -> bool {
    match best {
        None => true,
        Some((bf, bv, _)) => (feasible && !bf) || (feasible == *bf && value > *bv),
    }
}

/// Exhaustive search over every mode-consistent assignment, maximizing the
/// sum rate subject to the sensing SINR floor. When no assignment meets the
/// floor the best one overall is returned with `feasible = false`.
pub fn enumerate_optimal(topology: &Topology, params: &SystemParams, budget: u64) -> Result<OracleResult> {
    let candidates = candidate_count(topology);
    if candidates > budget as f64 {
        return Err(Error::BudgetExceeded { candidates, budget });
    }
    let start = Instant::now();
    let model = LinkModel::new(topology, params)?;
    let c = topology.counts();

    let search = |first: usize| -> Result<(Option<(bool, f64, Vec<usize>)>, u64)> {
        let mut best = None;
        let mut failure = None;
        let nodes = walk(topology, Some(first), &mut |_| false, &mut |servers| {
            let a = Assignment::from_servers(c.spv, c.comm, servers);
            match model.report(&a) {
                Ok(r) => {
                    if better(r.sensing_feasible, r.objective, &best) {
                        best = Some((r.sensing_feasible, r.objective, servers.to_vec()));
                    }
                }
                Err(e) => failure = failure.take().or(Some(e)),
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok((best, nodes)),
        }
    };
    let branches: Vec<_> = (0..c.spv).into_par_iter().map(search).collect();
    let mut best = None;
    let mut nodes = 0;
    for b in branches {
        let (cand, n) = b?;
        nodes += n;
        if let Some((f, v, s)) = cand {
            if better(f, v, &best) {
                best = Some((f, v, s));
            }
        }
    }
    let (feasible, objective, servers) =
        best.ok_or_else(|| Error::Contract("no mode-consistent assignment exists".into()))?;
    let assignment = Assignment::from_servers(c.spv, c.comm, &servers);
    Ok(OracleResult {
        labels: labels_from_assignment(&assignment),
        result: SolveResult {
            assignment,
            objective_true: objective,
            objective_surrogate: None,
            feasible,
            stats: SolverStats {
                nodes_explored: nodes,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        },
    })
}

fn check_probabilities(topology: &Topology, probabilities: &[Vec<f64>]) -> Result<()> {
    let c = topology.counts();
    if probabilities.len() != c.spv || probabilities.iter().any(|p| p.len() != c.targets() + 1) {
        return Err(Error::Shape(format!(
            "probability matrix must be {}×{}",
            c.spv,
            c.targets() + 1
        )));
    }
    if probabilities.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Domain("probabilities must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Surrogate value of a server vector, summed in target order.
fn surrogate_value(probabilities: &[Vec<f64>], servers: &[usize]) -> f64 {
    servers.iter().enumerate().map(|(j, &k)| probabilities[k][j]).sum()
}

/// Whether every sensing link of the server vector meets the SINR floor.
fn sensing_ok(model: &LinkModel<'_>, servers: &[usize]) -> Result<bool> {
    let c = model.topology().counts();
    let a = Assignment::from_servers(c.spv, c.comm, servers);
    let floor = model.params().sensing.min_sensing_sinr;
    for (n, &k) in servers[c.comm..].iter().enumerate() {
        if model.sensing_sinr(&a, k, n)? < floor {
            return Ok(false);
        }
    }
    Ok(true)
}

fn finish(
    model: &LinkModel<'_>,
    servers: Vec<usize>,
    surrogate: Option<f64>,
    feasible: bool,
    nodes: u64,
    start: Instant,
) -> Result<SolveResult> {
    let c = model.topology().counts();
    let assignment = Assignment::from_servers(c.spv, c.comm, &servers);
    let report = model.report(&assignment)?;
    Ok(SolveResult {
        assignment,
        objective_true: report.objective,
        objective_surrogate: surrogate,
        feasible: feasible && report.sensing_feasible,
        stats: SolverStats {
            nodes_explored: nodes,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

/// Exact maximizer of the probability-sum surrogate subject to coverage,
/// mode consistency and the sensing SINR floor.
///
/// Branch-and-bound: a prefix is cut when its value plus the best remaining
/// per-target probability cannot beat the incumbent.
pub fn solve_surrogate(topology: &Topology, probabilities: &[Vec<f64>], params: &SystemParams) -> Result<SolveResult> {
    check_probabilities(topology, probabilities)?;
    let start = Instant::now();
    let model = LinkModel::new(topology, params)?;
    let c = topology.counts();
    let l = c.targets();
    // suffix[j] = Σ_{i ≥ j} max_k p[k][i]
    let mut suffix = vec![0.0; l + 1];
    for j in (0..l).rev() {
        let best = probabilities.iter().map(|p| p[j]).fold(0.0, f64::max);
        suffix[j] = suffix[j + 1] + best;
    }

    let mut nodes = 0;
    for enforce_sensing in [true, false] {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut failure = None;
        let incumbent = std::cell::Cell::new(f64::NEG_INFINITY);
        nodes += walk(
            topology,
            None,
            &mut |prefix| {
                let best = incumbent.get();
                if best == f64::NEG_INFINITY {
                    return false;
                }
                let bound = surrogate_value(probabilities, prefix) + suffix[prefix.len()];
                bound + 1e-9 * (1.0 + best.abs()) < best
            },
            &mut |servers| {
                let value = surrogate_value(probabilities, servers);
                if best.as_ref().is_some_and(|(v, _)| value <= *v) {
                    return;
                }
                if enforce_sensing {
                    match sensing_ok(&model, servers) {
                        Ok(true) => {}
                        Ok(false) => return,
                        Err(e) => {
                            failure.get_or_insert(e);
                            return;
                        }
                    }
                }
                incumbent.set(value);
                best = Some((value, servers.to_vec()));
            },
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some((value, servers)) = best {
            return finish(&model, servers, Some(value), enforce_sensing, nodes, start);
        }
    }
    Err(Error::Contract("no mode-consistent assignment exists".into()))
}

/// Plain enumeration of the surrogate problem with the same rules as
/// [`solve_surrogate`]; the reference the branch-and-bound is checked against.
pub fn enumerate_surrogate(
    topology: &Topology,
    probabilities: &[Vec<f64>],
    params: &SystemParams,
) -> Result<SolveResult> {
    check_probabilities(topology, probabilities)?;
    let start = Instant::now();
    let model = LinkModel::new(topology, params)?;
    let mut all = Vec::new();
    let nodes = walk(topology, None, &mut |_| false, &mut |s| all.push(s.to_vec()));
    let mut best: Option<(bool, f64, Vec<usize>)> = None;
    for servers in all {
        let feasible = sensing_ok(&model, &servers)?;
        let value = surrogate_value(probabilities, &servers);
        if better(feasible, value, &best) {
            best = Some((feasible, value, servers));
        }
    }
    let (feasible, value, servers) =
        best.ok_or_else(|| Error::Contract("no mode-consistent assignment exists".into()))?;
    finish(&model, servers, Some(value), feasible, nodes, start)
}

/// Location-only greedy baseline.
///
/// Targets are handled in descending order of their best interference-free
/// margin (comm: received power over the noise floor; sensing: isolated
/// SINR over the minimum), each taking the strongest SPV not already
/// committed to the other mode; ties go to the lower SPV index. A target
/// with no eligible SPV takes the strongest SPV regardless and the result is
/// flagged infeasible, as is any result whose sensing links miss the floor.
pub fn baseline_location(topology: &Topology, params: &SystemParams) -> Result<SolveResult> {
    let start = Instant::now();
    let model = LinkModel::new(topology, params)?;
    let c = topology.counts();
    let strength = |j: usize, k: usize| {
        if j < c.comm {
            model.comm_signal(k, j)
        } else {
            model.isolated_sensing_sinr(k, j - c.comm)
        }
    };
    let reference = |j: usize| {
        if j < c.comm {
            params.channel.noise_floor
        } else {
            params.sensing.min_sensing_sinr
        }
    };
    let strongest = |j: usize, eligible: &dyn Fn(usize) -> bool| {
        (0..c.spv)
            .filter(|&k| eligible(k))
            .fold(None, |acc: Option<(usize, f64)>, k| {
                let s = strength(j, k);
                match acc {
                    Some((_, b)) if s <= b => acc,
                    _ => Some((k, s)),
                }
            })
    };

    let mut order: Vec<(usize, f64)> = (0..c.targets())
        .map(|j| {
            let (_, s) = strongest(j, &|_| true).expect("at least one SPV");
            (j, 10.0 * (s / reference(j)).log10())
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut mode: Vec<Option<Mode>> = vec![None; c.spv];
    let mut servers = vec![0; c.targets()];
    let mut forced = false;
    for (j, _) in order {
        let want = if j < c.comm { Mode::Comm } else { Mode::Sense };
        let pick = match strongest(j, &|k| mode[k].is_none_or(|m| m == want)) {
            Some((k, _)) => k,
            None => {
                forced = true;
                strongest(j, &|_| true).expect("at least one SPV").0
            }
        };
        mode[pick].get_or_insert(want);
        servers[j] = pick;
    }
    let assignment = Assignment::from_servers(c.spv, c.comm, &servers);
    let report = model.report(&assignment)?;
    Ok(SolveResult {
        assignment,
        objective_true: report.objective,
        objective_surrogate: None,
        feasible: !forced && report.sensing_feasible,
        stats: SolverStats {
            nodes_explored: c.targets() as u64,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

/// End-to-end inference output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub result: SolveResult,
    /// Per SPV, the L+1 sigmoid outputs fed to the solver.
    pub probabilities: Vec<Vec<f64>>,
}

/// Graph → sampled neighborhoods → GNN probabilities → surrogate solver.
pub fn decide(
    topology: &Topology,
    model: &GnnModel,
    graph_options: &GraphOptions,
    seed: u64,
    params: &SystemParams,
) -> Result<Decision> {
    if model.target_count != topology.target_count() {
        return Err(Error::Contract(format!(
            "model was trained for L = {}, topology has L = {}",
            model.target_count,
            topology.target_count()
        )));
    }
    let graph = build_graph(topology, &params.channel, graph_options)?;
    let inputs = spv_inputs(
        topology,
        &graph,
        model.hyper.sample_sizes,
        model.hyper.edge_scaling,
        seed,
    );
    let probabilities = inputs
        .iter()
        .map(|i| model.probabilities(i))
        .collect::<Result<Vec<_>>>()?;
    let result = solve_surrogate(topology, &probabilities, params)?;
    Ok(Decision { result, probabilities })
}

/// One exported link: `spv_id,mode,target_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub spv_id: u32,
    pub mode: Mode,
    pub target_id: u32,
}

pub fn assignment_rows(topology: &Topology, assignment: &Assignment) -> Vec<AssignmentRow> {
    let c = topology.counts();
    let mut rows = Vec::new();
    for (j, server) in assignment.servers().into_iter().enumerate() {
        if let Some(k) = server {
            rows.push(AssignmentRow {
                spv_id: topology.vehicle(topology.spvs()[k]).id,
                mode: if j < c.comm { Mode::Comm } else { Mode::Sense },
                target_id: topology.vehicle(topology.targets()[j]).id,
            });
        }
    }
    rows
}

/// Re-checks a result from scratch: the structural constraints plus the
/// sensing floor, independent of how the solver got there.
pub fn recheck(topology: &Topology, result: &SolveResult, params: &SystemParams) -> Result<LinkReport> {
    crate::jcs::evaluate(topology, &result.assignment, params)
}
