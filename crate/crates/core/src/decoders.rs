//! Decoders over detector error models: exact most-likely-error search
//! (branch-and-bound), an exhaustive oracle, belief propagation, and a
//! hypergraph union-find pipeline with optional belief reweighting.
//!
//! Every decoder returns a fault set whose detector signatures XOR exactly to
//! the input syndrome; failing that is an [`DecodeError::Infeasible`] model
//! mismatch, which is distinct from a heralded consistency failure downstream.

use crate::dem::{merge_probability, DetectorErrorModel};
use crate::gf2::BitVector;
use std::str::FromStr;
use thiserror::Error;

/// Weight ties narrower than this are broken lexicographically by id set.
const WEIGHT_TIE_EPS: f64 = 1e-9;
/// Floor for transformed branch weights so zero-weight mechanisms cannot
/// make the search space degenerate.
const WEIGHT_FLOOR: f64 = 1e-12;
/// Exhaustive-search cap for [`brute_force_decode`].
pub const BRUTE_FORCE_CAP: usize = 25;

#[derive(Error, Debug, PartialEq, Eq)]
pub enum DecodeError {
    #[error("syndrome has {got} bits but the model has {want} detectors")]
    SyndromeLength { got: usize, want: usize },
    /// No fault set reproduces the syndrome: the model does not match the
    /// circuit that produced the shot.
    #[error("no fault set reproduces the syndrome")]
    Infeasible,
    #[error("exhaustive decoding capped at {cap} mechanisms, model has {got}")]
    TooLarge { cap: usize, got: usize },
}

/// A decoding solution: the chosen mechanism ids (κ), their total
/// log-likelihood weight under the model's priors, and the observable flips
/// they predict.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    /// Sorted ids of the chosen mechanisms.
    pub chosen_mechanisms: Vec<usize>,
    /// Σ ln((1−pᵢ)/pᵢ) over the chosen set, under the model's priors.
    pub total_weight: f64,
    pub predicted_observable_flips: BitVector,
}

/// Belief-propagation state: posteriors plus the final message arrays,
/// indexed `[mechanism][position in that mechanism's detector list]`.
#[derive(Clone, Debug)]
pub struct BeliefState {
    /// Per-mechanism posterior error probability, clamped to (0, 1).
    pub posteriors: Vec<f64>,
    /// Mechanism→detector log-likelihood-ratio messages.
    pub to_detector: Vec<Vec<f64>>,
    /// Detector→mechanism log-likelihood-ratio messages.
    pub from_detector: Vec<Vec<f64>>,
}

/// Decoder selection used by the runtime and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoder {
    Mle,
    BeliefHuf,
    Huf,
    Brute,
}

#[derive(Error, Debug)]
#[error("unknown decoder `{0}`; expected mle, bhuf, huf, or brute")]
pub struct DecoderParseError(String);

impl FromStr for Decoder {
    type Err = DecoderParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mle" => Ok(Decoder::Mle),
            "bhuf" => Ok(Decoder::BeliefHuf),
            "huf" => Ok(Decoder::Huf),
            "brute" => Ok(Decoder::Brute),
            other => Err(DecoderParseError(other.to_string())),
        }
    }
}

impl Decoder {
    pub fn name(self) -> &'static str {
        match self {
            Decoder::Mle => "mle",
            Decoder::BeliefHuf => "bhuf",
            Decoder::Huf => "huf",
            Decoder::Brute => "brute",
        }
    }

    /// Run this decoder. `gamma` is the full model; `gamma_prime` its
    /// graphlike decomposition (used by the union-find variants).
    pub fn run(
        self,
        gamma: &DetectorErrorModel,
        gamma_prime: &DetectorErrorModel,
        syndrome: &BitVector,
    ) -> Result<DecodeOutcome, DecodeError> {
        match self {
            Decoder::Mle => mle_decode(gamma, syndrome),
            Decoder::Brute => brute_force_decode(gamma, syndrome),
            Decoder::Huf => huf_decode(gamma_prime, syndrome, 0.0),
            Decoder::BeliefHuf => belief_huf(gamma, gamma_prime, syndrome),
        }
    }
}

fn check_syndrome_len(
    dem: &DetectorErrorModel,
    syndrome: &BitVector,
) -> Result<(), DecodeError> {
    if syndrome.len() != dem.detector_count {
        return Err(DecodeError::SyndromeLength {
            got: syndrome.len(),
            want: dem.detector_count,
        });
    }
    Ok(())
}

/// `(weight, ids)` comparison: smaller weight wins outside the tie window,
/// lexicographically smaller id set wins inside it.
fn improves(w: f64, ids: &[usize], best_w: f64, best_ids: &[usize]) -> bool {
    if w < best_w - WEIGHT_TIE_EPS {
        return true;
    }
    if w <= best_w + WEIGHT_TIE_EPS {
        return ids < best_ids;
    }
    false
}

/// Sum of raw weights over a sorted id set, accumulated in ascending id
/// order so equal sets produce bit-identical totals across decoders.
fn weight_of_set(ids: &[usize], weight_by_id: &[f64]) -> f64 {
    ids.iter().map(|&i| weight_by_id[i]).sum()
}

struct CoverProblem {
    /// (id, raw weight, detector signature) per mechanism in the search.
    mechs: Vec<(usize, f64, BitVector)>,
    detector_count: usize,
}

/// Exact minimum-weight cover: finds the subset of mechanisms whose
/// signatures XOR to `syndrome` with minimal total raw weight (ties broken
/// by lexicographically smallest sorted id set). Handles negative weights by
/// pre-selecting them and searching over the complemented variables.
fn exact_cover(problem: &CoverProblem, syndrome: &BitVector) -> Option<(Vec<usize>, f64)> {
    let n = problem.mechs.len();
    let mut weight_by_id = vec![0.0f64; problem.mechs.iter().map(|m| m.0 + 1).max().unwrap_or(0)];
    for &(id, w, _) in &problem.mechs {
        weight_by_id[id] = w;
    }

    // Negative-weight mechanisms are cheaper chosen than not: fold them into
    // the baseline and search over "deviate from baseline" variables whose
    // effective weights are all positive.
    let mut target = syndrome.clone();
    let mut flipped: Vec<usize> = Vec::new();
    let mut eff: Vec<(usize, f64, &BitVector)> = Vec::with_capacity(n);
    for (id, w, sig) in &problem.mechs {
        if *w < 0.0 {
            target.xor_assign(sig);
            flipped.push(*id);
            eff.push((*id, (-*w).max(WEIGHT_FLOOR), sig));
        } else {
            eff.push((*id, w.max(WEIGHT_FLOOR), sig));
        }
    }
    flipped.sort_unstable();

    // Candidate lists per detector, cheapest first, and the admissible
    // per-detector bound: each chosen mechanism of weight w covering k
    // detectors contributes at least w/k per covered detector.
    let mut by_detector: Vec<Vec<usize>> = vec![Vec::new(); problem.detector_count];
    let mut floor_cost = vec![f64::INFINITY; problem.detector_count];
    for (idx, (_, w, sig)) in eff.iter().enumerate() {
        let touched: Vec<usize> = sig.iter_ones().collect();
        if touched.is_empty() {
            continue;
        }
        let per = w / touched.len() as f64;
        for &d in &touched {
            by_detector[d].push(idx);
            if per < floor_cost[d] {
                floor_cost[d] = per;
            }
        }
    }
    for list in &mut by_detector {
        list.sort_by(|&a, &b| {
            eff[a]
                .1
                .partial_cmp(&eff[b].1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(eff[a].0.cmp(&eff[b].0))
        });
    }
    if target.iter_ones().any(|d| by_detector[d].is_empty()) {
        return None;
    }

    struct Best {
        path_weight: f64,
        final_weight: f64,
        ids: Vec<usize>,
    }
    struct Dfs<'a> {
        eff: &'a [(usize, f64, &'a BitVector)],
        by_detector: &'a [Vec<usize>],
        floor_cost: &'a [f64],
        weight_by_id: &'a [f64],
        flipped: &'a [usize],
        decided: Vec<bool>,
        chosen: Vec<usize>,
        best: Option<Best>,
    }

    impl Dfs<'_> {
        fn bound(&self, residual: &BitVector) -> f64 {
            residual.iter_ones().map(|d| self.floor_cost[d]).sum()
        }

        fn accept(&mut self, path_weight: f64) {
            // Final set = baseline deviations: symmetric difference of the
            // pre-selected negative-weight ids and the chosen variables.
            let mut ids: Vec<usize> = Vec::with_capacity(self.flipped.len() + self.chosen.len());
            let mut chosen_ids: Vec<usize> = self.chosen.iter().map(|&k| self.eff[k].0).collect();
            chosen_ids.sort_unstable();
            let (mut i, mut j) = (0, 0);
            while i < self.flipped.len() && j < chosen_ids.len() {
                match self.flipped[i].cmp(&chosen_ids[j]) {
                    std::cmp::Ordering::Less => {
                        ids.push(self.flipped[i]);
                        i += 1;
                    }
                    std::cmp::Ordering::Greater => {
                        ids.push(chosen_ids[j]);
                        j += 1;
                    }
                    std::cmp::Ordering::Equal => {
                        i += 1;
                        j += 1;
                    }
                }
            }
            ids.extend_from_slice(&self.flipped[i..]);
            ids.extend_from_slice(&chosen_ids[j..]);
            let final_weight = weight_of_set(&ids, self.weight_by_id);
            let take = match &self.best {
                None => true,
                Some(b) => improves(final_weight, &ids, b.final_weight, &b.ids),
            };
            if take {
                self.best = Some(Best {
                    path_weight,
                    final_weight,
                    ids,
                });
            }
        }

        fn go(&mut self, residual: &BitVector, path_weight: f64) {
            if let Some(b) = &self.best {
                if path_weight + self.bound(residual) > b.path_weight + WEIGHT_TIE_EPS {
                    return;
                }
            }
            let Some(d) = residual.iter_ones().next() else {
                self.accept(path_weight);
                return;
            };
            let candidates: Vec<usize> = self.by_detector[d]
                .iter()
                .copied()
                .filter(|&k| !self.decided[k])
                .collect();
            // Branch on which candidate is the first (in exploration order)
            // chosen mechanism covering detector d; earlier ones are excluded
            // within that branch. Exactly one candidate must be chosen first
            // since the residual parity at d is odd.
            for (pos, &k) in candidates.iter().enumerate() {
                for &e in &candidates[..=pos] {
                    self.decided[e] = true;
                }
                let mut next = residual.clone();
                next.xor_assign(self.eff[k].2);
                self.chosen.push(k);
                self.go(&next, path_weight + self.eff[k].1);
                self.chosen.pop();
                for &e in &candidates[..=pos] {
                    self.decided[e] = false;
                }
            }
        }
    }

    let mut dfs = Dfs {
        eff: &eff,
        by_detector: &by_detector,
        floor_cost: &floor_cost,
        weight_by_id: &weight_by_id,
        flipped: &flipped,
        decided: vec![false; n],
        chosen: Vec::new(),
        best: None,
    };
    dfs.go(&target, 0.0);
    dfs.best.map(|b| (b.ids, b.final_weight))
}

fn outcome_from_ids(
    dem: &DetectorErrorModel,
    ids: Vec<usize>,
    total_weight: f64,
) -> DecodeOutcome {
    let mut obs = BitVector::zeros(dem.observable_count);
    for &id in &ids {
        for &o in &dem.mechanisms[id].observables {
            obs.toggle(o);
        }
    }
    DecodeOutcome {
        chosen_mechanisms: ids,
        total_weight,
        predicted_observable_flips: obs,
    }
}

/// Exact most-likely-error decoding: the minimum-total-weight fault set
/// consistent with the syndrome, by branch-and-bound with an admissible
/// remaining-syndrome bound. Probability maximization over independent
/// mechanisms is equivalent to minimizing Σ ln((1−pᵢ)/pᵢ).
pub fn mle_decode(
    dem: &DetectorErrorModel,
    syndrome: &BitVector,
) -> Result<DecodeOutcome, DecodeError> {
    check_syndrome_len(dem, syndrome)?;
    let problem = CoverProblem {
        mechs: dem
            .mechanisms
            .iter()
            .map(|m| {
                (
                    m.id,
                    m.weight(),
                    BitVector::from_indices(dem.detector_count, &m.detectors),
                )
            })
            .collect(),
        detector_count: dem.detector_count,
    };
    let (ids, weight) = exact_cover(&problem, syndrome).ok_or(DecodeError::Infeasible)?;
    Ok(outcome_from_ids(dem, ids, weight))
}

/// Exhaustive minimum over all 2^n fault subsets; verification oracle for
/// [`mle_decode`]. Same weight objective and tie-break.
pub fn brute_force_decode(
    dem: &DetectorErrorModel,
    syndrome: &BitVector,
) -> Result<DecodeOutcome, DecodeError> {
    check_syndrome_len(dem, syndrome)?;
    let n = dem.mechanisms.len();
    if n > BRUTE_FORCE_CAP {
        return Err(DecodeError::TooLarge {
            cap: BRUTE_FORCE_CAP,
            got: n,
        });
    }
    let sigs: Vec<BitVector> = dem
        .mechanisms
        .iter()
        .map(|m| BitVector::from_indices(dem.detector_count, &m.detectors))
        .collect();
    let weight_by_id: Vec<f64> = dem.mechanisms.iter().map(|m| m.weight()).collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut consider = |mask: u64| {
        let ids: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let w = weight_of_set(&ids, &weight_by_id);
        let take = match &best {
            None => true,
            Some((bw, bids)) => improves(w, &ids, *bw, bids),
        };
        if take {
            best = Some((w, ids));
        }
    };

    // Gray-code walk: one signature XOR per subset.
    let mut cur = BitVector::zeros(dem.detector_count);
    let mut mask: u64 = 0;
    if cur == *syndrome {
        consider(mask);
    }
    for k in 1u64..(1u64 << n) {
        let flip = k.trailing_zeros() as usize;
        cur.xor_assign(&sigs[flip]);
        mask ^= 1 << flip;
        if cur == *syndrome {
            consider(mask);
        }
    }
    let (weight, ids) = best.ok_or(DecodeError::Infeasible)?;
    Ok(outcome_from_ids(dem, ids, weight))
}

/// Sum-product belief propagation in the log-likelihood domain on the
/// mechanism↔detector factor graph, flooding schedule, no damping.
pub fn bp_posteriors(
    dem: &DetectorErrorModel,
    syndrome: &BitVector,
    rounds: usize,
) -> BeliefState {
    assert!(rounds >= 1, "belief propagation needs at least one round");
    assert_eq!(syndrome.len(), dem.detector_count);
    let n = dem.mechanisms.len();
    let prior_llr: Vec<f64> = dem
        .mechanisms
        .iter()
        .map(|m| {
            let p = m.probability.clamp(1e-12, 1.0 - 1e-12);
            ((1.0 - p) / p).ln()
        })
        .collect();

    // Incidence: per detector, the (mechanism, local slot) pairs touching it.
    let mut incidence: Vec<Vec<(usize, usize)>> = vec![Vec::new(); dem.detector_count];
    for (i, m) in dem.mechanisms.iter().enumerate() {
        for (slot, &d) in m.detectors.iter().enumerate() {
            incidence[d].push((i, slot));
        }
    }

    let mut to_detector: Vec<Vec<f64>> = dem
        .mechanisms
        .iter()
        .map(|m| vec![0.0; m.detectors.len()])
        .collect();
    let mut from_detector: Vec<Vec<f64>> = to_detector.clone();

    for _ in 0..rounds {
        // Variable to factor: prior plus all other incoming messages.
        for i in 0..n {
            let total: f64 = from_detector[i].iter().sum();
            for slot in 0..to_detector[i].len() {
                to_detector[i][slot] = prior_llr[i] + total - from_detector[i][slot];
            }
        }
        // Factor to variable: parity rule via tanh products, leave-one-out
        // by prefix/suffix so zero messages stay exact.
        for (d, members) in incidence.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let sign = if syndrome.get(d) { -1.0 } else { 1.0 };
            let t: Vec<f64> = members
                .iter()
                .map(|&(i, slot)| (to_detector[i][slot] / 2.0).tanh())
                .collect();
            let mut prefix = vec![1.0; members.len() + 1];
            for (k, &v) in t.iter().enumerate() {
                prefix[k + 1] = prefix[k] * v;
            }
            let mut suffix = vec![1.0; members.len() + 1];
            for k in (0..members.len()).rev() {
                suffix[k] = suffix[k + 1] * t[k];
            }
            for (k, &(i, slot)) in members.iter().enumerate() {
                let prod = (prefix[k] * suffix[k + 1]).clamp(-(1.0 - 1e-12), 1.0 - 1e-12);
                from_detector[i][slot] = sign * 2.0 * prod.atanh();
            }
        }
    }

    let posteriors: Vec<f64> = (0..n)
        .map(|i| {
            let llr = prior_llr[i] + from_detector[i].iter().sum::<f64>();
            (1.0 / (1.0 + llr.exp())).clamp(1e-12, 1.0 - 1e-12)
        })
        .collect();
    BeliefState {
        posteriors,
        to_detector,
        from_detector,
    }
}

/// Hypergraph union-find decoding on a (decomposed) model. Clusters grow
/// from fired detectors in weighted-radius steps — an edge joins once its
/// accumulated growth reaches weight^`weight_exponent`, so exponent 0 gives
/// uniform full-edge steps — and freeze as soon as their interior syndrome
/// is solvable. The per-cluster correction is the exact minimum-weight local
/// cover.
pub fn huf_decode(
    dem: &DetectorErrorModel,
    syndrome: &BitVector,
    weight_exponent: f64,
) -> Result<DecodeOutcome, DecodeError> {
    let weights: Vec<f64> = dem.mechanisms.iter().map(|m| m.weight()).collect();
    huf_with_weights(dem, &weights, &weights, syndrome, weight_exponent)
}

/// Belief-HUF: belief propagation on the full model transfers posteriors
/// onto the decomposed model's pieces (each inherits its parents' combined
/// posterior), then union-find runs with the reweighted costs. The reported
/// total weight stays in the prior currency.
pub fn belief_huf(
    gamma: &DetectorErrorModel,
    gamma_prime: &DetectorErrorModel,
    syndrome: &BitVector,
) -> Result<DecodeOutcome, DecodeError> {
    check_syndrome_len(gamma, syndrome)?;
    let belief = bp_posteriors(gamma, syndrome, 5);
    let search_weights: Vec<f64> = gamma_prime
        .mechanisms
        .iter()
        .map(|piece| {
            let q = piece
                .parents
                .iter()
                .map(|&pid| belief.posteriors[pid])
                .fold(0.0, merge_probability);
            let q = q.clamp(1e-12, 1.0 - 1e-12);
            ((1.0 - q) / q).ln()
        })
        .collect();
    let prior_weights: Vec<f64> = gamma_prime.mechanisms.iter().map(|m| m.weight()).collect();
    huf_with_weights(
        gamma_prime,
        &search_weights,
        &prior_weights,
        syndrome,
        0.0,
    )
}

fn huf_with_weights(
    dem: &DetectorErrorModel,
    search_weights: &[f64],
    report_weights: &[f64],
    syndrome: &BitVector,
    weight_exponent: f64,
) -> Result<DecodeOutcome, DecodeError> {
    check_syndrome_len(dem, syndrome)?;
    let n = dem.mechanisms.len();
    let sigs: Vec<BitVector> = dem
        .mechanisms
        .iter()
        .map(|m| BitVector::from_indices(dem.detector_count, &m.detectors))
        .collect();

    // Union-find over detectors, deterministic roots (smallest id wins).
    let mut parent: Vec<usize> = (0..dem.detector_count).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    fn union(parent: &mut [usize], a: usize, b: usize) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }

    let fired: Vec<usize> = syndrome.iter_ones().collect();
    if fired.is_empty() {
        return Ok(outcome_from_ids(dem, Vec::new(), 0.0));
    }
    let thresholds: Vec<f64> = search_weights
        .iter()
        .map(|&w| w.max(WEIGHT_FLOOR).powf(weight_exponent))
        .collect();
    let mut joined = vec![false; n];
    let mut growth = vec![0.0f64; n];
    let mut active = vec![false; dem.detector_count];
    for &d in &fired {
        active[d] = true;
    }

    // A cluster is solvable when some subset of its joined edges reproduces
    // the syndrome restricted to it.
    let cluster_edges = |parent: &mut [usize], joined: &[bool], root: usize| -> Vec<usize> {
        (0..n)
            .filter(|&e| {
                joined[e]
                    && dem.mechanisms[e]
                        .detectors
                        .first()
                        .is_some_and(|&d| find(parent, d) == root)
            })
            .collect()
    };
    let solvable = |parent: &mut [usize], joined: &[bool], root: usize| -> bool {
        let edges = cluster_edges(parent, joined, root);
        let problem = CoverProblem {
            mechs: edges
                .iter()
                .map(|&e| (e, search_weights[e].abs().max(WEIGHT_FLOOR), sigs[e].clone()))
                .collect(),
            detector_count: dem.detector_count,
        };
        let mut local = BitVector::zeros(dem.detector_count);
        for d in syndrome.iter_ones() {
            if find(parent, d) == root {
                local.set(d, true);
            }
        }
        exact_cover(&problem, &local).is_some()
    };

    loop {
        let mut unsolved: Vec<usize> = fired
            .iter()
            .map(|&d| find(&mut parent, d))
            .collect::<Vec<_>>();
        unsolved.sort_unstable();
        unsolved.dedup();
        unsolved.retain(|&root| !solvable(&mut parent, &joined, root));
        if unsolved.is_empty() {
            break;
        }
        // Grow: every unsolved cluster pushes one unit into each incident
        // unjoined edge; edges meeting their threshold join and merge their
        // endpoints.
        let mut progressed = false;
        let mut pending: Vec<usize> = Vec::new();
        for (e, m) in dem.mechanisms.iter().enumerate() {
            if joined[e] || m.detectors.is_empty() {
                continue;
            }
            let touching = m
                .detectors
                .iter()
                .filter(|&&d| {
                    let root = find(&mut parent, d);
                    active[d] && unsolved.binary_search(&root).is_ok()
                })
                .count();
            if touching == 0 {
                continue;
            }
            growth[e] += touching as f64;
            if growth[e] + 1e-12 >= thresholds[e] {
                pending.push(e);
            }
        }
        for &e in &pending {
            joined[e] = true;
            progressed = true;
            let dets = &dem.mechanisms[e].detectors;
            for &d in dets {
                active[d] = true;
            }
            for w in dets.windows(2) {
                union(&mut parent, w[0], w[1]);
            }
        }
        if !progressed {
            return Err(DecodeError::Infeasible);
        }
    }

    // Assemble: exact minimum-weight cover per cluster under the search
    // weights, reported under the prior weights.
    let mut roots: Vec<usize> = fired.iter().map(|&d| find(&mut parent, d)).collect();
    roots.sort_unstable();
    roots.dedup();
    let mut ids: Vec<usize> = Vec::new();
    for root in roots {
        let edges = cluster_edges(&mut parent, &joined, root);
        let problem = CoverProblem {
            mechs: edges
                .iter()
                .map(|&e| (e, search_weights[e], sigs[e].clone()))
                .collect(),
            detector_count: dem.detector_count,
        };
        let mut local = BitVector::zeros(dem.detector_count);
        for d in syndrome.iter_ones() {
            if find(&mut parent, d) == root {
                local.set(d, true);
            }
        }
        let (cluster_ids, _) = exact_cover(&problem, &local).ok_or(DecodeError::Infeasible)?;
        ids.extend(cluster_ids);
    }
    ids.sort_unstable();
    let weight = weight_of_set(&ids, report_weights);
    Ok(outcome_from_ids(dem, ids, weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::{ErrorMechanism, FaultOrigin};
    use rand_core::{RngCore, SeedableRng};
    use rand_xoshiro::Xoshiro256StarStar;

    fn mech(id: usize, p: f64, detectors: Vec<usize>, observables: Vec<usize>) -> ErrorMechanism {
        ErrorMechanism {
            id,
            probability: p,
            detectors,
            observables,
            provenance: vec![FaultOrigin {
                instruction: id,
                slot: 0,
                component: 0,
            }],
            parents: vec![id],
            kept_whole: false,
        }
    }

    fn model(detector_count: usize, mechs: Vec<ErrorMechanism>) -> DetectorErrorModel {
        DetectorErrorModel {
            detector_count,
            observable_count: 1,
            gauge_flags: vec![false],
            mechanisms: mechs,
        }
    }

    fn signature(dem: &DetectorErrorModel, ids: &[usize]) -> BitVector {
        let mut s = BitVector::zeros(dem.detector_count);
        for &id in ids {
            for &d in &dem.mechanisms[id].detectors {
                s.toggle(d);
            }
        }
        s
    }

    fn random_model(rng: &mut Xoshiro256StarStar, mechanisms: usize) -> DetectorErrorModel {
        let detectors = 3 + (rng.next_u64() % 8) as usize;
        let mechs = (0..mechanisms)
            .map(|id| {
                let degree = 1 + (rng.next_u64() % 3) as usize;
                let mut dets: Vec<usize> = (0..degree)
                    .map(|_| (rng.next_u64() as usize) % detectors)
                    .collect();
                dets.sort_unstable();
                dets.dedup();
                let p = 0.01 + (rng.next_u64() % 40) as f64 / 100.0;
                let obs = if rng.next_u64() % 2 == 0 {
                    vec![0]
                } else {
                    vec![]
                };
                mech(id, p, dets, obs)
            })
            .collect();
        model(detectors, mechs)
    }

    fn random_feasible_syndrome(
        rng: &mut Xoshiro256StarStar,
        dem: &DetectorErrorModel,
    ) -> BitVector {
        let subset: Vec<usize> = (0..dem.mechanisms.len())
            .filter(|_| rng.next_u64() % 3 == 0)
            .collect();
        signature(dem, &subset)
    }

    #[test]
    fn zero_syndrome_is_empty_everywhere() {
        let dem = model(3, vec![mech(0, 0.1, vec![0, 1], vec![0])]);
        let decomposed = crate::dem::decompose(&dem);
        let zero = BitVector::zeros(3);
        for outcome in [
            mle_decode(&dem, &zero).unwrap(),
            brute_force_decode(&dem, &zero).unwrap(),
            huf_decode(&decomposed, &zero, 0.0).unwrap(),
            belief_huf(&dem, &decomposed, &zero).unwrap(),
        ] {
            assert!(outcome.chosen_mechanisms.is_empty());
            assert_eq!(outcome.total_weight, 0.0);
            assert!(outcome.predicted_observable_flips.is_zero());
        }
    }

    #[test]
    fn singleton_syndrome_picks_that_mechanism() {
        let dem = model(
            4,
            vec![
                mech(0, 0.01, vec![0, 1], vec![0]),
                mech(1, 0.01, vec![1, 2], vec![]),
                mech(2, 0.01, vec![2, 3], vec![0]),
            ],
        );
        let syndrome = signature(&dem, &[1]);
        let out = mle_decode(&dem, &syndrome).unwrap();
        assert_eq!(out.chosen_mechanisms, vec![1]);
        assert!((out.total_weight - dem.mechanisms[1].weight()).abs() < 1e-12);
        assert!(out.predicted_observable_flips.is_zero());

        let brute = brute_force_decode(&dem, &syndrome).unwrap();
        assert_eq!(brute.chosen_mechanisms, vec![1]);
    }

    #[test]
    fn infeasible_syndrome_is_signalled() {
        let dem = model(3, vec![mech(0, 0.1, vec![0, 1], vec![])]);
        let mut syndrome = BitVector::zeros(3);
        syndrome.set(2, true);
        assert_eq!(mle_decode(&dem, &syndrome), Err(DecodeError::Infeasible));
        assert_eq!(
            brute_force_decode(&dem, &syndrome),
            Err(DecodeError::Infeasible)
        );
        assert_eq!(
            huf_decode(&dem, &syndrome, 0.0),
            Err(DecodeError::Infeasible)
        );
    }

    #[test]
    fn syndrome_length_checked() {
        let dem = model(3, vec![mech(0, 0.1, vec![0], vec![])]);
        let short = BitVector::zeros(2);
        assert_eq!(
            mle_decode(&dem, &short),
            Err(DecodeError::SyndromeLength { got: 2, want: 3 })
        );
    }

    #[test]
    fn brute_force_caps_model_size() {
        let mechs = (0..26).map(|id| mech(id, 0.1, vec![0], vec![])).collect();
        let dem = model(1, mechs);
        assert_eq!(
            brute_force_decode(&dem, &BitVector::zeros(1)),
            Err(DecodeError::TooLarge { cap: 25, got: 26 })
        );
    }

    #[test]
    fn mle_matches_exhaustive_oracle_on_random_models() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(0x0dec0de);
        for trial in 0..1000 {
            // A few instances push toward the exhaustive cap; the bulk stays
            // small so the oracle runs fast.
            let mechanisms = if trial % 200 == 199 {
                17 + (trial / 200) % 6
            } else {
                3 + (trial % 13)
            };
            let dem = random_model(&mut rng, mechanisms);
            let syndrome = random_feasible_syndrome(&mut rng, &dem);
            let exact = mle_decode(&dem, &syndrome).unwrap();
            let oracle = brute_force_decode(&dem, &syndrome).unwrap();
            assert!(
                (exact.total_weight - oracle.total_weight).abs() < 1e-9,
                "weight mismatch on trial {trial}: {} vs {}",
                exact.total_weight,
                oracle.total_weight
            );
            assert_eq!(
                exact.chosen_mechanisms, oracle.chosen_mechanisms,
                "tie-break mismatch on trial {trial}"
            );
            assert_eq!(signature(&dem, &exact.chosen_mechanisms), syndrome);
        }
    }

    #[test]
    fn decoders_always_reproduce_the_syndrome() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(77);
        for _ in 0..200 {
            let dem = random_model(&mut rng, 12);
            let decomposed = crate::dem::decompose(&dem);
            let syndrome = random_feasible_syndrome(&mut rng, &dem);
            let exact = mle_decode(&dem, &syndrome).unwrap();
            assert_eq!(signature(&dem, &exact.chosen_mechanisms), syndrome);
            let huf = huf_decode(&decomposed, &syndrome, 0.0).unwrap();
            assert_eq!(signature(&decomposed, &huf.chosen_mechanisms), syndrome);
            let bhuf = belief_huf(&dem, &decomposed, &syndrome).unwrap();
            assert_eq!(signature(&decomposed, &bhuf.chosen_mechanisms), syndrome);
            // Union-find can only do as well as exact decoding of the same
            // model.
            let exact_prime = mle_decode(&decomposed, &syndrome).unwrap();
            assert!(exact_prime.total_weight <= huf.total_weight + 1e-9);
        }
    }

    #[test]
    fn decoding_is_deterministic() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(5150);
        let dem = random_model(&mut rng, 15);
        let decomposed = crate::dem::decompose(&dem);
        let syndrome = random_feasible_syndrome(&mut rng, &dem);
        for decoder in [Decoder::Mle, Decoder::Brute, Decoder::Huf, Decoder::BeliefHuf] {
            let a = decoder.run(&dem, &decomposed, &syndrome).unwrap();
            let b = decoder.run(&dem, &decomposed, &syndrome).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bp_zero_syndrome_lowers_every_posterior() {
        let dem = model(
            3,
            vec![
                mech(0, 0.2, vec![0, 1], vec![]),
                mech(1, 0.3, vec![1, 2], vec![0]),
                mech(2, 0.1, vec![0], vec![]),
            ],
        );
        let state = bp_posteriors(&dem, &BitVector::zeros(3), 5);
        for (m, &q) in dem.mechanisms.iter().zip(&state.posteriors) {
            assert!(q <= m.probability + 1e-12);
            assert!(q > 0.0 && q < 1.0);
        }
    }

    #[test]
    fn bp_isolated_fired_mechanism_goes_above_half() {
        let dem = model(1, vec![mech(0, 0.05, vec![0], vec![])]);
        let mut syndrome = BitVector::zeros(1);
        syndrome.set(0, true);
        let state = bp_posteriors(&dem, &syndrome, 5);
        assert!(state.posteriors[0] > 0.5);
    }

    #[test]
    fn bp_matches_exact_marginals_on_trees() {
        // Chain factor graph: mechanism i covers detectors {i-1, i}; the
        // boundary mechanisms cover one detector each. A path is a tree, so
        // flooding sum-product converges to the exact marginals.
        let mut rng = Xoshiro256StarStar::seed_from_u64(4242);
        for _ in 0..20 {
            let detectors = 4;
            let mechs: Vec<ErrorMechanism> = (0..=detectors)
                .map(|i| {
                    let dets = if i == 0 {
                        vec![0]
                    } else if i == detectors {
                        vec![detectors - 1]
                    } else {
                        vec![i - 1, i]
                    };
                    let p = 0.02 + (rng.next_u64() % 30) as f64 / 100.0;
                    mech(i, p, dets, vec![])
                })
                .collect();
            let dem = model(detectors, mechs);
            let syndrome = random_feasible_syndrome(&mut rng, &dem);
            let state = bp_posteriors(&dem, &syndrome, 20);

            let n = dem.mechanisms.len();
            let mut fired_mass = vec![0.0f64; n];
            let mut total_mass = 0.0f64;
            for mask in 0u64..(1 << n) {
                let ids: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
                if signature(&dem, &ids) != syndrome {
                    continue;
                }
                let mut mass = 1.0;
                for (i, m) in dem.mechanisms.iter().enumerate() {
                    mass *= if mask >> i & 1 == 1 {
                        m.probability
                    } else {
                        1.0 - m.probability
                    };
                }
                total_mass += mass;
                for &i in &ids {
                    fired_mass[i] += mass;
                }
            }
            assert!(total_mass > 0.0);
            for i in 0..n {
                let exact = fired_mass[i] / total_mass;
                assert!(
                    (state.posteriors[i] - exact).abs() < 1e-6,
                    "mechanism {i}: bp {} vs exact {exact}",
                    state.posteriors[i]
                );
            }
        }
    }

    #[test]
    fn huf_two_fired_detectors_take_the_joining_edge() {
        let dem = model(
            4,
            vec![
                mech(0, 0.1, vec![0], vec![]),
                mech(1, 0.1, vec![1, 2], vec![0]),
                mech(2, 0.1, vec![3], vec![]),
            ],
        );
        let syndrome = signature(&dem, &[1]);
        let out = huf_decode(&dem, &syndrome, 0.0).unwrap();
        assert_eq!(out.chosen_mechanisms, vec![1]);
        assert!(out.predicted_observable_flips.get(0));
    }

    #[test]
    fn belief_reweighting_lowers_fired_piece_cost() {
        // One fired detector explained by a single mechanism: its posterior
        // rises, so the reweighted piece must cost no more than its prior.
        let dem = model(
            2,
            vec![mech(0, 0.05, vec![0], vec![]), mech(1, 0.05, vec![1], vec![])],
        );
        let decomposed = crate::dem::decompose(&dem);
        let mut syndrome = BitVector::zeros(2);
        syndrome.set(0, true);
        let belief = bp_posteriors(&dem, &syndrome, 5);
        for (piece, parent_q) in decomposed
            .mechanisms
            .iter()
            .map(|piece| (piece, belief.posteriors[piece.parents[0]]))
        {
            let reweighted = ((1.0 - parent_q) / parent_q).ln();
            if piece.detectors == vec![0] {
                assert!(reweighted <= piece.weight() + 1e-12);
            }
        }
        let out = belief_huf(&dem, &decomposed, &syndrome).unwrap();
        assert_eq!(signature(&decomposed, &out.chosen_mechanisms), syndrome);
    }

    #[test]
    fn huf_tracks_mle_on_noisy_repetition_memory() {
        use crate::compiler::{compile, CodeFamily, LogicalOp, LogicalProgram, SePolicy};
        use crate::noise::{annotate_circuit_noise, NoiseSpec};
        use crate::sampler::{reference_sample, sample_batch, shot_to_detectors, SeedSpec};

        let program = LogicalProgram {
            family: CodeFamily::Repetition,
            d: 3,
            num_blocks: 1,
            ops: vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::Idle { block: 0 },
                LogicalOp::Idle { block: 0 },
                LogicalOp::MeasureZ { block: 0 },
            ],
            se_policy: SePolicy::AfterEachOp,
        };
        let compiled = compile(&program).unwrap().into_single();
        let noisy =
            annotate_circuit_noise(&compiled.circuit, &NoiseSpec::circuit_depolarizing(0.04))
                .unwrap();
        let gamma = crate::dem::build_dem(&noisy);
        let gamma_prime = crate::dem::decompose(&gamma);

        let reference = reference_sample(&noisy);
        let (_, reference_obs) = shot_to_detectors(&noisy, &reference).unwrap();
        let shots = sample_batch(&noisy, 1000, &SeedSpec::new(0xbead), false);
        let mut mle_errors = 0u32;
        let mut huf_errors = 0u32;
        for shot in &shots {
            let mut actual_flip = shot.observable_bits.clone();
            actual_flip.xor_assign(&reference_obs);
            let exact = mle_decode(&gamma, &shot.detector_bits).unwrap();
            let huf = huf_decode(&gamma_prime, &shot.detector_bits, 0.0).unwrap();
            if exact.predicted_observable_flips.get(0) != actual_flip.get(0) {
                mle_errors += 1;
            }
            if huf.predicted_observable_flips.get(0) != actual_flip.get(0) {
                huf_errors += 1;
            }
        }
        assert!(mle_errors > 0, "noise level too low to compare decoders");
        assert!(
            huf_errors <= 2 * mle_errors,
            "huf {huf_errors} vs mle {mle_errors} logical errors over {} shots",
            shots.len()
        );
    }

    #[test]
    fn decoder_names_round_trip() {
        for d in [Decoder::Mle, Decoder::BeliefHuf, Decoder::Huf, Decoder::Brute] {
            assert_eq!(d.name().parse::<Decoder>().unwrap(), d);
        }
        assert!("mwpm".parse::<Decoder>().is_err());
    }
}
