//! Detector error models: hyperedge extraction from noisy circuits, prefix
//! restriction, graphlike decomposition, the syndrome adjacency graph, frame
//! systems for consistency restoration, and the analytic failure bound.

pub mod sweep;

use crate::circuit::{Instruction, PhysicalCircuit};
use crate::gf2::{nullspace, rank, BitMatrix, BitVector};
use crate::pauli::{Pauli, PauliString};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use sweep::compute_influence;
use thiserror::Error;

/// Address of one elementary channel outcome, matching the sampler's fault
/// addressing: (noise instruction index, target slot, Pauli component).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct FaultOrigin {
    pub instruction: usize,
    pub slot: usize,
    pub component: usize,
}

/// One independent error mechanism: flips `detectors` and `observables`
/// together with probability `probability`.
#[derive(Clone, Debug)]
pub struct ErrorMechanism {
    pub id: usize,
    pub probability: f64,
    pub detectors: Vec<usize>,
    pub observables: Vec<usize>,
    /// Elementary faults merged into this mechanism.
    pub provenance: Vec<FaultOrigin>,
    /// For decomposed models: ids of the mechanisms this piece came from.
    pub parents: Vec<usize>,
    /// Set when decomposition could not split a >2-detector mechanism.
    pub kept_whole: bool,
}

impl ErrorMechanism {
    /// Log-likelihood weight ln((1−p)/p).
    pub fn weight(&self) -> f64 {
        ((1.0 - self.probability) / self.probability).ln()
    }
}

/// Independent-XOR combination of two mechanism probabilities.
pub fn merge_probability(p1: f64, p2: f64) -> f64 {
    p1 * (1.0 - p2) + p2 * (1.0 - p1)
}

#[derive(Clone, Debug, Default)]
pub struct DetectorErrorModel {
    pub detector_count: usize,
    pub observable_count: usize,
    /// Per-observable: `true` when the observable is a nondeterministic
    /// readout (no prior reference value).
    pub gauge_flags: Vec<bool>,
    pub mechanisms: Vec<ErrorMechanism>,
}

impl DetectorErrorModel {
    /// Largest detector degree (mechanisms per detector).
    pub fn max_detector_degree(&self) -> usize {
        let mut deg = vec![0usize; self.detector_count];
        for m in &self.mechanisms {
            for &d in &m.detectors {
                deg[d] += 1;
            }
        }
        deg.into_iter().max().unwrap_or(0)
    }
}

/// Elementary outcomes of one noise instruction: (slot, component,
/// probability) triples. Depolarizing channels split into uniform Pauli
/// cases.
pub fn channel_components(instr: &Instruction) -> Vec<(usize, usize, f64)> {
    match instr {
        Instruction::XError { p, qubits } | Instruction::ZError { p, qubits } => {
            (0..qubits.len()).map(|slot| (slot, 0, *p)).collect()
        }
        Instruction::Depolarize1 { p, qubits } => (0..qubits.len())
            .flat_map(|slot| (0..3).map(move |c| (slot, c, *p / 3.0)))
            .collect(),
        Instruction::Depolarize2 { p, pairs } => (0..pairs.len())
            .flat_map(|slot| (0..15).map(move |c| (slot, c, *p / 15.0)))
            .collect(),
        _ => Vec::new(),
    }
}

/// Pauli insertions realizing one elementary outcome, for fault-by-fault
/// forward-propagation oracles.
pub fn origin_insertions(c: &PhysicalCircuit, origin: &FaultOrigin) -> Vec<(usize, Pauli)> {
    let code = |k: usize| match k {
        1 => Some(Pauli::X),
        2 => Some(Pauli::Y),
        3 => Some(Pauli::Z),
        _ => None,
    };
    match &c.instructions[origin.instruction] {
        Instruction::XError { qubits, .. } => vec![(qubits[origin.slot], Pauli::X)],
        Instruction::ZError { qubits, .. } => vec![(qubits[origin.slot], Pauli::Z)],
        Instruction::Depolarize1 { qubits, .. } => {
            let p = code(origin.component + 1).expect("components 0..3");
            vec![(qubits[origin.slot], p)]
        }
        Instruction::Depolarize2 { pairs, .. } => {
            let (a, b) = pairs[origin.slot];
            let mut out = Vec::new();
            if let Some(p) = code((origin.component + 1) / 4) {
                out.push((a, p));
            }
            if let Some(p) = code((origin.component + 1) % 4) {
                out.push((b, p));
            }
            out
        }
        other => panic!("fault origin on non-noise instruction {other:?}"),
    }
}

type SignatureKey = (Vec<usize>, Vec<usize>);

fn merge_mechanisms(
    acc: &mut BTreeMap<SignatureKey, ErrorMechanism>,
    key: SignatureKey,
    p: f64,
    provenance: Vec<FaultOrigin>,
    parents: Vec<usize>,
    kept_whole: bool,
) {
    match acc.get_mut(&key) {
        Some(m) => {
            m.probability = merge_probability(m.probability, p);
            m.provenance.extend(provenance);
            m.parents.extend(parents);
            m.kept_whole |= kept_whole;
        }
        None => {
            acc.insert(
                key.clone(),
                ErrorMechanism {
                    id: 0, // renumbered on collection
                    probability: p,
                    detectors: key.0,
                    observables: key.1,
                    provenance,
                    parents,
                    kept_whole,
                },
            );
        }
    }
}

fn collect(
    acc: BTreeMap<SignatureKey, ErrorMechanism>,
    detector_count: usize,
    observable_count: usize,
    gauge_flags: Vec<bool>,
) -> DetectorErrorModel {
    let mechanisms = acc
        .into_values()
        .enumerate()
        .map(|(id, mut m)| {
            m.id = id;
            m.provenance.sort_unstable();
            m.parents.sort_unstable();
            m.parents.dedup();
            m
        })
        .collect();
    DetectorErrorModel {
        detector_count,
        observable_count,
        gauge_flags,
        mechanisms,
    }
}

/// Extract the detector error model of a noisy circuit: every elementary
/// channel outcome becomes a mechanism keyed by the detectors and observables
/// it flips; identical signatures merge.
pub fn build_dem(c: &PhysicalCircuit) -> DetectorErrorModel {
    let table = compute_influence(c);
    let mut acc: BTreeMap<SignatureKey, ErrorMechanism> = BTreeMap::new();
    for (idx, instr) in c.instructions.iter().enumerate() {
        for (slot, component, p) in channel_components(instr) {
            if p == 0.0 {
                continue;
            }
            let sig = &table.fault_signatures[&(idx, slot, component)];
            let detectors: Vec<usize> = sig.detectors.iter_ones().collect();
            let observables: Vec<usize> = sig.observables.iter_ones().collect();
            if detectors.is_empty() && observables.is_empty() {
                continue; // invisible and harmless
            }
            merge_mechanisms(
                &mut acc,
                (detectors, observables),
                p,
                vec![FaultOrigin {
                    instruction: idx,
                    slot,
                    component,
                }],
                Vec::new(),
                false,
            );
        }
    }
    collect(
        acc,
        c.detector_count,
        c.observable_count,
        c.gauge_flags.clone(),
    )
}

/// Detectors whose constituent records all lie at or before `cutoff_rec`.
pub fn prefix_detector_mask(c: &PhysicalCircuit, cutoff_rec: usize) -> Vec<bool> {
    c.detector_recs()
        .iter()
        .map(|recs| recs.iter().all(|&r| r <= cutoff_rec))
        .collect()
}

/// Restrict a model to a detector/observable subset: mechanisms are clipped,
/// re-merged, and dropped when they become empty. Ids keep their original
/// numbering domain (detector/observable indices are unchanged).
pub fn restrict(
    dem: &DetectorErrorModel,
    keep_detector: &[bool],
    keep_observable: &[bool],
) -> DetectorErrorModel {
    assert_eq!(keep_detector.len(), dem.detector_count);
    assert_eq!(keep_observable.len(), dem.observable_count);
    let mut acc: BTreeMap<SignatureKey, ErrorMechanism> = BTreeMap::new();
    for m in &dem.mechanisms {
        let detectors: Vec<usize> = m
            .detectors
            .iter()
            .copied()
            .filter(|&d| keep_detector[d])
            .collect();
        let observables: Vec<usize> = m
            .observables
            .iter()
            .copied()
            .filter(|&o| keep_observable[o])
            .collect();
        if detectors.is_empty() && observables.is_empty() {
            continue;
        }
        merge_mechanisms(
            &mut acc,
            (detectors, observables),
            m.probability,
            m.provenance.clone(),
            m.parents.clone(),
            m.kept_whole,
        );
    }
    collect(
        acc,
        dem.detector_count,
        dem.observable_count,
        dem.gauge_flags.clone(),
    )
}

/// Split every >2-detector mechanism into ≤2-detector pieces whose
/// signatures match existing mechanisms, the final piece absorbing the
/// leftover detectors and observables. Mechanisms that cannot be split are
/// kept whole and flagged.
pub fn decompose(dem: &DetectorErrorModel) -> DetectorErrorModel {
    use std::collections::HashSet;
    // Candidate pieces: existing graphlike signatures, largest first so the
    // greedy pass prefers detector pairs over singletons.
    let mut candidates: Vec<(Vec<usize>, Vec<usize>)> = dem
        .mechanisms
        .iter()
        .filter(|m| m.detectors.len() <= 2 && !m.detectors.is_empty())
        .map(|m| (m.detectors.clone(), m.observables.clone()))
        .collect();
    candidates.sort();
    candidates.dedup();
    candidates.sort_by_key(|(d, _)| std::cmp::Reverse(d.len()));

    let mut acc: BTreeMap<SignatureKey, ErrorMechanism> = BTreeMap::new();
    for m in &dem.mechanisms {
        if m.detectors.len() <= 2 {
            merge_mechanisms(
                &mut acc,
                (m.detectors.clone(), m.observables.clone()),
                m.probability,
                m.provenance.clone(),
                vec![m.id],
                false,
            );
            continue;
        }
        let mut remaining: HashSet<usize> = m.detectors.iter().copied().collect();
        let mut obs_left: Vec<usize> = m.observables.clone();
        let mut pieces: Vec<SignatureKey> = Vec::new();
        while remaining.len() > 2 {
            let pick = candidates
                .iter()
                .find(|(dets, _)| dets.iter().all(|d| remaining.contains(d)));
            match pick {
                Some((dets, obs)) => {
                    for d in dets {
                        remaining.remove(d);
                    }
                    obs_left = symmetric_difference(&obs_left, obs);
                    pieces.push((dets.clone(), obs.clone()));
                }
                None => break,
            }
        }
        if remaining.len() > 2 {
            // Undecomposable: keep whole, flagged.
            merge_mechanisms(
                &mut acc,
                (m.detectors.clone(), m.observables.clone()),
                m.probability,
                m.provenance.clone(),
                vec![m.id],
                true,
            );
            continue;
        }
        let mut last: Vec<usize> = remaining.into_iter().collect();
        last.sort_unstable();
        if !last.is_empty() || !obs_left.is_empty() {
            pieces.push((last, obs_left));
        }
        for (dets, obs) in pieces {
            merge_mechanisms(
                &mut acc,
                (dets, obs),
                m.probability,
                m.provenance.clone(),
                vec![m.id],
                false,
            );
        }
    }
    collect(
        acc,
        dem.detector_count,
        dem.observable_count,
        dem.gauge_flags.clone(),
    )
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

// ---------- text format ----------

#[derive(Error, Debug)]
pub enum DemParseError {
    #[error("line {line}: unknown directive `{directive}`")]
    UnknownDirective { line: usize, directive: String },
    #[error("line {line}: malformed target `{target}`")]
    MalformedTarget { line: usize, target: String },
    #[error("line {line}: malformed probability")]
    MalformedProbability { line: usize },
}

/// Render a model as text: one `detector` line per detector, one `logical`
/// line per observable (with a `gauge` marker where set), then one `error`
/// line per mechanism.
pub fn emit_dem_text(dem: &DetectorErrorModel) -> String {
    let mut out = String::new();
    for d in 0..dem.detector_count {
        let _ = writeln!(out, "detector D{d}");
    }
    for o in 0..dem.observable_count {
        if dem.gauge_flags[o] {
            let _ = writeln!(out, "logical L{o} gauge");
        } else {
            let _ = writeln!(out, "logical L{o}");
        }
    }
    for m in &dem.mechanisms {
        let mut targets: Vec<String> = m.detectors.iter().map(|d| format!("D{d}")).collect();
        targets.extend(m.observables.iter().map(|o| format!("L{o}")));
        let _ = writeln!(out, "error({}) {}", m.probability, targets.join(" "));
    }
    out
}

pub fn parse_dem_text(text: &str) -> Result<DetectorErrorModel, DemParseError> {
    let mut dem = DetectorErrorModel::default();
    let mut next_id = 0usize;
    for (line_idx, raw) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap();
        if head == "detector" {
            for t in parts {
                let d = parse_target(t, 'D', line_no)?;
                dem.detector_count = dem.detector_count.max(d + 1);
            }
        } else if head == "logical" {
            let mut index = None;
            for t in parts {
                if t == "gauge" {
                    let o = index.ok_or(DemParseError::MalformedTarget {
                        line: line_no,
                        target: t.to_string(),
                    })?;
                    dem.gauge_flags[o] = true;
                } else {
                    let o = parse_target(t, 'L', line_no)?;
                    if o >= dem.observable_count {
                        dem.observable_count = o + 1;
                        dem.gauge_flags.resize(dem.observable_count, false);
                    }
                    index = Some(o);
                }
            }
        } else if let Some(inner) = head
            .strip_prefix("error(")
            .and_then(|s| s.strip_suffix(')'))
        {
            let p: f64 = inner
                .parse()
                .map_err(|_| DemParseError::MalformedProbability { line: line_no })?;
            let mut detectors = Vec::new();
            let mut observables = Vec::new();
            for t in parts {
                if t.starts_with('D') {
                    let d = parse_target(t, 'D', line_no)?;
                    dem.detector_count = dem.detector_count.max(d + 1);
                    detectors.push(d);
                } else {
                    let o = parse_target(t, 'L', line_no)?;
                    if o >= dem.observable_count {
                        dem.observable_count = o + 1;
                        dem.gauge_flags.resize(dem.observable_count, false);
                    }
                    observables.push(o);
                }
            }
            detectors.sort_unstable();
            observables.sort_unstable();
            dem.mechanisms.push(ErrorMechanism {
                id: next_id,
                probability: p,
                detectors,
                observables,
                provenance: Vec::new(),
                parents: Vec::new(),
                kept_whole: false,
            });
            next_id += 1;
        } else {
            return Err(DemParseError::UnknownDirective {
                line: line_no,
                directive: head.to_string(),
            });
        }
    }
    Ok(dem)
}

fn parse_target(t: &str, prefix: char, line: usize) -> Result<usize, DemParseError> {
    t.strip_prefix(prefix)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DemParseError::MalformedTarget {
            line,
            target: t.to_string(),
        })
}

// ---------- syndrome adjacency graph ----------

/// Line-graph view of a model: vertices are mechanisms, edges join
/// mechanisms sharing a detector.
#[derive(Clone, Debug)]
pub struct SyndromeGraph {
    pub adjacency: Vec<Vec<usize>>,
}

impl SyndromeGraph {
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }
}

pub fn syndrome_graph(dem: &DetectorErrorModel) -> SyndromeGraph {
    let mut by_detector: Vec<Vec<usize>> = vec![Vec::new(); dem.detector_count];
    for m in &dem.mechanisms {
        for &d in &m.detectors {
            by_detector[d].push(m.id);
        }
    }
    let mut adjacency = vec![Vec::new(); dem.mechanisms.len()];
    for members in &by_detector {
        for &a in members {
            for &b in members {
                if a != b {
                    adjacency[a].push(b);
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    SyndromeGraph { adjacency }
}

/// Partition an active vertex set into connected clusters (BFS over the
/// induced subgraph). Clusters and their members are sorted.
pub fn connected_clusters(graph: &SyndromeGraph, active: &[usize]) -> Vec<Vec<usize>> {
    use std::collections::HashSet;
    let active_set: HashSet<usize> = active.iter().copied().collect();
    let mut seen: HashSet<usize> = HashSet::new();
    let mut clusters = Vec::new();
    let mut roots: Vec<usize> = active_set.iter().copied().collect();
    roots.sort_unstable();
    for root in roots {
        if seen.contains(&root) {
            continue;
        }
        let mut cluster = vec![root];
        seen.insert(root);
        let mut queue = vec![root];
        while let Some(v) = queue.pop() {
            for &w in &graph.adjacency[v] {
                if active_set.contains(&w) && seen.insert(w) {
                    cluster.push(w);
                    queue.push(w);
                }
            }
        }
        cluster.sort_unstable();
        clusters.push(cluster);
    }
    clusters
}

/// Exact count of connected vertex sets of size `s` containing `vertex`,
/// by exhaustive frontier expansion. `s` must be ≤ 8.
pub fn count_clusters_containing(graph: &SyndromeGraph, vertex: usize, s: usize) -> u64 {
    assert!(s >= 1, "cluster size must be positive");
    assert!(s <= 8, "exhaustive enumeration supports s ≤ 8");
    // Connected-subgraph enumeration with an exclusion list to avoid
    // duplicates: extend only by neighbors not previously declined.
    fn extend(
        graph: &SyndromeGraph,
        current: &mut Vec<usize>,
        frontier: Vec<usize>,
        excluded: &mut Vec<bool>,
        s: usize,
    ) -> u64 {
        if current.len() == s {
            return 1;
        }
        let mut count = 0u64;
        let mut declined = Vec::new();
        let mut rest = frontier;
        while let Some(v) = rest.pop() {
            // Branch 1: include v.
            current.push(v);
            excluded[v] = true;
            let mut next = rest.clone();
            for &w in &graph.adjacency[v] {
                if !excluded[w] && !current.contains(&w) && !next.contains(&w) {
                    next.push(w);
                }
            }
            count += extend(graph, current, next, excluded, s);
            current.pop();
            // Branch 2: decline v permanently for this subtree.
            declined.push(v);
        }
        for v in declined {
            excluded[v] = false;
        }
        count
    }
    let mut excluded = vec![false; graph.adjacency.len()];
    excluded[vertex] = true;
    let frontier: Vec<usize> = graph.adjacency[vertex].clone();
    let mut current = vec![vertex];
    extend(graph, &mut current, frontier, &mut excluded, s)
}

// ---------- frame system ----------

/// One Pauli-random block initialization: all data qubits reset in the same
/// basis at one point in the circuit.
#[derive(Clone, Debug)]
pub struct FrameSeed {
    pub block: usize,
    /// `true` = |+⟩ init (X-basis frame is the Z side's uncertainty).
    pub x_basis: bool,
    /// Instruction index after which the frame operator is inserted.
    pub after: usize,
    /// Physical qubit ids in layout order.
    pub data: Vec<usize>,
    /// Local-index stabilizer supports of the init basis (deterministic under
    /// the init) and of the dual basis.
    pub init_stabilizers: Vec<Vec<usize>>,
    pub dual_stabilizers: Vec<Vec<usize>>,
}

/// Frame generators of one block.
#[derive(Clone, Debug)]
pub struct BlockFrame {
    pub block: usize,
    /// 𝒢: single-qubit init-basis Paulis independent modulo the init-basis
    /// stabilizers, as local data indices.
    pub members: Vec<usize>,
    /// Frame logicals: member combinations commuting with the dual
    /// stabilizers, as physical-qubit Pauli strings.
    pub frame_logicals: Vec<PauliString>,
}

/// All frame logicals plus their observable influence.
#[derive(Clone, Debug)]
pub struct FrameSystem {
    pub blocks: Vec<BlockFrame>,
    /// observables × frame logicals; column order follows `blocks` order.
    pub lambda: BitMatrix,
    /// (block index within `blocks`, logical index within block) per column.
    pub columns: Vec<(usize, usize)>,
}

impl FrameSystem {
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }
}

/// Build 𝒢 and the frame logicals for each seed, then fill Λ by forward
/// propagation from each seed's init point.
pub fn build_frame_system(c: &PhysicalCircuit, seeds: &[FrameSeed]) -> FrameSystem {
    let mut blocks = Vec::new();
    let mut columns = Vec::new();
    let mut lambda_cols: Vec<BitVector> = Vec::new();
    for seed in seeds {
        let n = seed.data.len();
        // Greedy 𝒢: add the qubit's init-basis Pauli when independent of the
        // init-basis stabilizers plus the members chosen so far.
        let mut span = BitMatrix::zeros(0, n);
        for s in &seed.init_stabilizers {
            span.push_row(BitVector::from_indices(n, s));
        }
        let mut span_rank = rank(&span);
        let mut members = Vec::new();
        for i in 0..n {
            let mut trial = span.clone();
            trial.push_row(BitVector::from_indices(n, &[i]));
            let r = rank(&trial);
            if r > span_rank {
                members.push(i);
                span = trial;
                span_rank = r;
            }
        }
        // Member combinations commuting with every dual-basis stabilizer:
        // overlap-parity nullspace.
        let mut overlap = BitMatrix::zeros(seed.dual_stabilizers.len(), members.len());
        for (row, stab) in seed.dual_stabilizers.iter().enumerate() {
            for (col, &m) in members.iter().enumerate() {
                if stab.contains(&m) {
                    overlap.set(row, col, true);
                }
            }
        }
        let combos = nullspace(&overlap);
        let pauli = if seed.x_basis { Pauli::X } else { Pauli::Z };
        let mut frame_logicals = Vec::new();
        for combo in &combos {
            let mut op = PauliString::identity(c.num_qubits);
            for (col, &m) in members.iter().enumerate() {
                if combo.get(col) {
                    op.apply(seed.data[m], pauli);
                }
            }
            frame_logicals.push(op);
        }
        for (l, op) in frame_logicals.iter().enumerate() {
            let propagated = crate::circuit::propagate_pauli_from(c, seed.after, op.clone());
            lambda_cols.push(propagated.observable_flips(c));
            columns.push((blocks.len(), l));
        }
        blocks.push(BlockFrame {
            block: seed.block,
            members,
            frame_logicals,
        });
    }
    let mut lambda = BitMatrix::zeros(c.observable_count, lambda_cols.len());
    for (j, col) in lambda_cols.iter().enumerate() {
        for i in col.iter_ones() {
            lambda.set(i, j, true);
        }
    }
    FrameSystem {
        blocks,
        lambda,
        columns,
    }
}

// ---------- analytic bound ----------

/// Scenario parameters for the failure-probability bound.
#[derive(Clone, Copy, Debug)]
pub struct TheoryParams {
    /// Data qubits per block.
    pub n: usize,
    /// Logical qubits per block.
    pub k: usize,
    /// Number of blocks.
    pub blocks: usize,
    /// Number of logical operations (circuit timesteps).
    pub timesteps: usize,
    /// Number of logical measurements.
    pub measurements: usize,
    /// Detectors per fault bound.
    pub c: usize,
    /// Faults per detector bound.
    pub r: usize,
    /// Partition size t.
    pub t: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct TheoryBound {
    pub p0: f64,
    pub coefficient: f64,
    /// C·(p/p₀)^{d/2t}; absent when p exceeds the bound's validity range.
    pub bound: Option<f64>,
}

/// Evaluate the closed-form constants and the failure bound at distance `d`.
pub fn theory_bound(params: &TheoryParams, p: f64, d: usize) -> TheoryBound {
    let e = std::f64::consts::E;
    let cr = (params.c * params.r) as f64;
    let p0 = 1.0 / (96.0 * e * cr).powi(2);
    let coefficient = (params.measurements * params.blocks * params.timesteps) as f64
        * (4 * params.n - params.k) as f64
        / (4.0 * e * cr);
    let bound = if p < (121.0 / 144.0) * p0 {
        let exponent = d as f64 / (2.0 * params.t as f64);
        Some(coefficient * (p / p0).powf(exponent))
    } else {
        None
    };
    TheoryBound {
        p0,
        coefficient,
        bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit_text;

    #[test]
    fn noiseless_circuit_has_no_mechanisms() {
        let c = parse_circuit_text("R 0\nM 0\nDETECTOR rec[-1]").unwrap();
        assert!(build_dem(&c).mechanisms.is_empty());
    }

    #[test]
    fn single_x_error_single_detector() {
        let c = parse_circuit_text("R 0\nX_ERROR(0.25) 0\nM 0\nDETECTOR rec[-1]").unwrap();
        let dem = build_dem(&c);
        assert_eq!(dem.mechanisms.len(), 1);
        let m = &dem.mechanisms[0];
        assert_eq!(m.detectors, vec![0]);
        assert!(m.observables.is_empty());
        assert!((m.probability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn identical_signatures_merge_with_xor_probability() {
        let c = parse_circuit_text(
            "R 0\nX_ERROR(0.1) 0\nX_ERROR(0.1) 0\nM 0\nDETECTOR rec[-1]",
        )
        .unwrap();
        let dem = build_dem(&c);
        assert_eq!(dem.mechanisms.len(), 1);
        let want = 2.0 * 0.1 * (1.0 - 0.1);
        assert!((dem.mechanisms[0].probability - want).abs() < 1e-12);
        assert_eq!(dem.mechanisms[0].provenance.len(), 2);
    }

    #[test]
    fn invisible_harmless_faults_dropped_harmful_kept() {
        // Z before M flips nothing; X before M flips the observable only.
        let c = parse_circuit_text(
            "R 0\nZ_ERROR(0.1) 0\nX_ERROR(0.2) 0\nM 0\nOBSERVABLE_INCLUDE(0) rec[-1]",
        )
        .unwrap();
        let dem = build_dem(&c);
        assert_eq!(dem.mechanisms.len(), 1);
        assert!(dem.mechanisms[0].detectors.is_empty());
        assert_eq!(dem.mechanisms[0].observables, vec![0]);
    }

    #[test]
    fn depolarize_splits_into_pauli_cases() {
        // X and Y flip the record; Z is silent: expect one mechanism with
        // p = merge(p/3, p/3).
        let c = parse_circuit_text("R 0\nDEPOLARIZE1(0.3) 0\nM 0\nDETECTOR rec[-1]").unwrap();
        let dem = build_dem(&c);
        assert_eq!(dem.mechanisms.len(), 1);
        let want = merge_probability(0.1, 0.1);
        assert!((dem.mechanisms[0].probability - want).abs() < 1e-12);
    }

    #[test]
    fn restrict_clips_straddling_mechanisms() {
        let c = parse_circuit_text(
            "R 0 1\nDEPOLARIZE1(0.01) 0\nCX 0 1\nM 0\nDETECTOR rec[-1]\nM 1\nDETECTOR rec[-1]\nOBSERVABLE_INCLUDE(0) rec[-2]\nOBSERVABLE_INCLUDE(1) rec[-1]",
        )
        .unwrap();
        let dem = build_dem(&c);
        // The X component flips both detectors.
        assert!(dem
            .mechanisms
            .iter()
            .any(|m| m.detectors == vec![0, 1]));
        let keep_det = prefix_detector_mask(&c, 0);
        assert_eq!(keep_det, vec![true, false]);
        let cut = restrict(&dem, &keep_det, &[true, false]);
        assert!(cut.mechanisms.iter().all(|m| m.detectors != vec![0, 1]));
        assert!(cut
            .mechanisms
            .iter()
            .any(|m| m.detectors == vec![0] && m.observables == vec![0]));
    }

    #[test]
    fn restrict_is_idempotent_across_nested_masks() {
        let c = parse_circuit_text(
            "R 0 1 2\nDEPOLARIZE1(0.02) 0 1 2\nCX 0 1\nCX 1 2\nM 0\nDETECTOR rec[-1]\nM 1\nDETECTOR rec[-1]\nM 2\nDETECTOR rec[-1]\nOBSERVABLE_INCLUDE(0) rec[-3]\nOBSERVABLE_INCLUDE(1) rec[-2]\nOBSERVABLE_INCLUDE(2) rec[-1]",
        )
        .unwrap();
        let dem = build_dem(&c);
        let keep2_d = vec![true, true, false];
        let keep2_o = vec![true, true, false];
        let keep1_d = vec![true, false, false];
        let keep1_o = vec![true, false, false];
        let via_two = restrict(&restrict(&dem, &keep2_d, &keep2_o), &keep1_d, &keep1_o);
        let direct = restrict(&dem, &keep1_d, &keep1_o);
        assert_eq!(via_two.mechanisms.len(), direct.mechanisms.len());
        for (a, b) in via_two.mechanisms.iter().zip(&direct.mechanisms) {
            assert_eq!(a.detectors, b.detectors);
            assert_eq!(a.observables, b.observables);
            assert!((a.probability - b.probability).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_splits_against_existing_edges() {
        let mut dem = DetectorErrorModel {
            detector_count: 3,
            observable_count: 1,
            gauge_flags: vec![false],
            mechanisms: Vec::new(),
        };
        let mech = |id, p, d: Vec<usize>, o: Vec<usize>| ErrorMechanism {
            id,
            probability: p,
            detectors: d,
            observables: o,
            provenance: Vec::new(),
            parents: Vec::new(),
            kept_whole: false,
        };
        dem.mechanisms.push(mech(0, 0.01, vec![0, 1], vec![]));
        dem.mechanisms.push(mech(1, 0.01, vec![2], vec![0]));
        dem.mechanisms.push(mech(2, 0.005, vec![0, 1, 2], vec![0]));
        let out = decompose(&dem);
        assert!(out.mechanisms.iter().all(|m| m.detectors.len() <= 2));
        assert!(out.mechanisms.iter().all(|m| !m.kept_whole));
        // XOR consistency: pieces of mechanism 2 recombine to its signature.
        let pieces: Vec<&ErrorMechanism> = out
            .mechanisms
            .iter()
            .filter(|m| m.parents.contains(&2))
            .collect();
        let mut det = Vec::new();
        let mut obs = Vec::new();
        for p in &pieces {
            det = symmetric_difference(&det, &p.detectors);
            obs = symmetric_difference(&obs, &p.observables);
        }
        assert_eq!(det, vec![0, 1, 2]);
        assert_eq!(obs, vec![0]);
    }

    #[test]
    fn undecomposable_mechanism_kept_whole() {
        let dem = DetectorErrorModel {
            detector_count: 3,
            observable_count: 0,
            gauge_flags: vec![],
            mechanisms: vec![ErrorMechanism {
                id: 0,
                probability: 0.01,
                detectors: vec![0, 1, 2],
                observables: vec![],
                provenance: Vec::new(),
                parents: Vec::new(),
                kept_whole: false,
            }],
        };
        let out = decompose(&dem);
        assert_eq!(out.mechanisms.len(), 1);
        assert!(out.mechanisms[0].kept_whole);
        assert_eq!(out.mechanisms[0].detectors, vec![0, 1, 2]);
    }

    #[test]
    fn dem_text_roundtrip() {
        let c = parse_circuit_text(
            "R 0 1\nDEPOLARIZE1(0.01) 0 1\nCX 0 1\nM 0 1\nDETECTOR rec[-2]\nDETECTOR rec[-1]\nOBSERVABLE_INCLUDE(0) rec[-1]\nGAUGE_OBSERVABLE(0)",
        )
        .unwrap();
        let dem = build_dem(&c);
        let text = emit_dem_text(&dem);
        let back = parse_dem_text(&text).unwrap();
        assert_eq!(back.detector_count, dem.detector_count);
        assert_eq!(back.observable_count, dem.observable_count);
        assert_eq!(back.gauge_flags, dem.gauge_flags);
        assert_eq!(back.mechanisms.len(), dem.mechanisms.len());
        for (a, b) in back.mechanisms.iter().zip(&dem.mechanisms) {
            assert_eq!(a.detectors, b.detectors);
            assert_eq!(a.observables, b.observables);
            assert!((a.probability - b.probability).abs() < 1e-12);
        }
    }

    #[test]
    fn syndrome_graph_joins_detector_sharers() {
        let c = parse_circuit_text(
            "R 0 1\nX_ERROR(0.1) 0\nCX 0 1\nX_ERROR(0.1) 1\nM 0 1\nDETECTOR rec[-2]\nDETECTOR rec[-1]",
        )
        .unwrap();
        let dem = build_dem(&c);
        let g = syndrome_graph(&dem);
        // Early X flips both detectors; late X flips only the second: they
        // share detector 1.
        assert_eq!(dem.mechanisms.len(), 2);
        assert_eq!(g.adjacency[0], vec![1]);
        assert_eq!(g.adjacency[1], vec![0]);
        let clusters = connected_clusters(&g, &[0, 1]);
        assert_eq!(clusters, vec![vec![0, 1]]);
        assert!(connected_clusters(&g, &[]).is_empty());
    }

    #[test]
    fn cluster_count_on_path_graph() {
        // 0–1–2–3–4 as a hand-checkable line graph.
        let graph = SyndromeGraph {
            adjacency: vec![vec![1], vec![0, 2], vec![1, 3], vec![2, 4], vec![3]],
        };
        assert_eq!(count_clusters_containing(&graph, 2, 1), 1);
        assert_eq!(count_clusters_containing(&graph, 2, 3), 3);
        let bound = (2.0 * std::f64::consts::E).powi(2);
        assert!((count_clusters_containing(&graph, 2, 3) as f64) <= bound);
    }

    #[test]
    fn theory_constants_match_closed_forms() {
        let params = TheoryParams {
            n: 9,
            k: 1,
            blocks: 2,
            timesteps: 8,
            measurements: 10,
            c: 4,
            r: 4,
            t: 1,
        };
        let e = std::f64::consts::E;
        let out = theory_bound(&params, 0.0, 3);
        let p0_want = 1.0 / (1536.0 * e).powi(2);
        assert!((out.p0 - p0_want).abs() / p0_want < 1e-12);
        assert!((out.p0 - 5.7e-8).abs() < 0.1e-8);
        assert_eq!(out.bound, Some(0.0));
        let above = theory_bound(&params, 1e-3, 3);
        assert!(above.bound.is_none());
    }

    #[test]
    fn frame_system_of_plus_block_flips_teleported_measurements() {
        // One-qubit "block" in |+⟩ teleported onto qubit 1: the frame
        // logical X̄ flips both logical records.
        let text = "\
RX 0
R 1
CX 0 1
M 0
M 1
OBSERVABLE_INCLUDE(0) rec[-2]
OBSERVABLE_INCLUDE(1) rec[-1]
";
        let c = parse_circuit_text(text).unwrap();
        let seeds = [FrameSeed {
            block: 0,
            x_basis: true,
            after: 0,
            data: vec![0],
            init_stabilizers: vec![],
            dual_stabilizers: vec![],
        }];
        let fs = build_frame_system(&c, &seeds);
        assert_eq!(fs.blocks[0].members, vec![0]);
        assert_eq!(fs.blocks[0].frame_logicals.len(), 1);
        assert_eq!(fs.num_columns(), 1);
        assert!(fs.lambda.get(0, 0));
        assert!(fs.lambda.get(1, 0));
    }
}
