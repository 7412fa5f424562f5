//! Exact simulation of the aggregation protocol: enumerate which qudits
//! arrive, decide when and from what to decode, depolarize the qudits that
//! waited in memory, decode, and average the fidelity with the sent state.
//!
//! A decodable loss pattern reduces to a pure-state ensemble on the decoder
//! inputs. For each subset Q of stored inputs that the memory fully
//! depolarizes, [`BranchTable`] records the accepted probability A_Q and the
//! accepted fidelity mass G_Q. With independent memories that depolarize with
//! probabilities p_q, the branch fidelity is
//!
//! sum_Q w_Q G_Q / sum_Q w_Q A_Q,  w_Q = prod_{q in Q} p_q prod_{q not in Q} (1 - p_q).
//!
//! Full depolarization of a qudit equals dephasing it and then averaging
//! over the D shifts X^a, which keeps every branch a pure sparse state.

use std::collections::{BTreeMap, HashMap};

use crate::analytic::{ConfigurationLabel, Factor, FidelityReport, Term};
use crate::channel::{apply_depolarizing, ChannelPoint, PathSet, PhysicalConstants};
use crate::codes::{
    all_vectors, encode, erase, AmplitudeVector, CodeSpec, DecoderVariant, DecodingCircuit,
    SurvivorLayout,
};
use crate::error::{check_probability, Error, Result};
use crate::qudit::{fidelity, DensityOperator, QuditState, C64};
use crate::rational::{Polynomial, RationalFunction};

/// How the state of the arriving qudits is obtained from the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ErasureModel {
    /// Equal mixture over m of sum_j alpha_j |m 1 + j w>, with the step
    /// vector w from [`offset_steps`]. Depends only on how many qudits are
    /// used.
    #[default]
    Offset,
    /// Partial trace of the encoded block over the lost and unused qudits.
    Traced,
}

/// What happens after the decoder measures its ancillas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DecoderMode {
    /// Keep only runs whose syndrome reads zero and report the fidelity
    /// conditioned on acceptance.
    #[default]
    ErrorDetecting,
    /// Keep every run.
    TracePreserving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct OracleOptions {
    pub erasure: ErasureModel,
    pub decoder: DecoderMode,
    pub variant: DecoderVariant,
}

impl OracleOptions {
    fn postselect(&self) -> bool {
        self.decoder == DecoderMode::ErrorDetecting
    }
}

/// Which qudits of the block arrived.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPattern {
    survived: Vec<bool>,
    path_of: Vec<usize>,
    num_paths: usize,
    probability: f64,
}

impl LossPattern {
    pub fn new(label: &ConfigurationLabel, survived: Vec<bool>, transmissivities: &[f64]) -> Result<Self> {
        let path_of = label.path_of_qudits();
        if survived.len() != path_of.len() || transmissivities.len() != label.num_paths() {
            return Err(Error::DimensionMismatch(format!(
                "pattern of {} qudits and {} transmissivities for layout {label}",
                survived.len(),
                transmissivities.len()
            )));
        }
        for &p in transmissivities {
            check_probability("transmissivity", p)?;
        }
        let probability = survived
            .iter()
            .zip(&path_of)
            .map(|(&s, &path)| if s { transmissivities[path] } else { 1.0 - transmissivities[path] })
            .product();
        Ok(Self { survived, path_of, num_paths: label.num_paths(), probability })
    }

    pub fn survived(&self) -> &[bool] {
        &self.survived
    }

    pub fn path_of(&self) -> &[usize] {
        &self.path_of
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    /// N'_i for each path.
    pub fn survivors_per_path(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_paths];
        for (&s, &path) in self.survived.iter().zip(&self.path_of) {
            out[path] += usize::from(s);
        }
        out
    }

    pub fn lost_per_path(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_paths];
        for (&s, &path) in self.survived.iter().zip(&self.path_of) {
            out[path] += usize::from(!s);
        }
        out
    }

    fn survivors_on(&self, paths: std::ops::RangeInclusive<usize>) -> Vec<usize> {
        (0..self.survived.len())
            .filter(|&q| self.survived[q] && paths.contains(&self.path_of[q]))
            .collect()
    }
}

/// All 2^n patterns. Pattern i has qudit q lost iff bit q of i is set.
pub fn enumerate_loss_patterns(
    label: &ConfigurationLabel,
    transmissivities: &[f64],
) -> Result<Vec<LossPattern>> {
    let n = label.code().n();
    (0..1usize << n)
        .map(|mask| {
            let survived = (0..n).map(|q| mask >> q & 1 == 0).collect();
            LossPattern::new(label, survived, transmissivities)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecisionAction {
    /// The first path alone delivered enough qudits.
    DecodeEarly,
    /// A later path alone delivered enough; earlier qudits are dropped.
    DecodeLateDiscardStored,
    /// Stored qudits are combined with the fresh ones.
    DecodeCombined,
    TotalFailure,
}

/// A decoder input that waited in memory from the arrival of `path` until
/// the arrival of `decode_path`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StoredQudit {
    pub qudit: usize,
    pub path: usize,
    pub decode_path: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionOutcome {
    pub action: DecisionAction,
    /// Path whose arrival triggers decoding.
    pub decode_path: Option<usize>,
    /// Decoder inputs in increasing qudit order.
    pub used: Vec<usize>,
    pub stored: Vec<StoredQudit>,
}

impl DecisionOutcome {
    /// Storage time of each stored qudit, in seconds.
    pub fn storage_times_s(&self, paths: &PathSet, constants: &PhysicalConstants) -> Vec<f64> {
        let l = paths.lengths_km();
        self.stored.iter().map(|s| constants.delay_s(l[s.decode_path] - l[s.path])).collect()
    }
}

/// Decodes at the first arrival after which d qudits are available. If the
/// path arriving then delivered d qudits by itself only those are used;
/// otherwise every survivor so far is used and the earlier ones come from
/// memory.
pub fn decide(pattern: &LossPattern, code: CodeSpec) -> DecisionOutcome {
    let d = code.distance();
    let survivors = pattern.survivors_per_path();
    let mut cumulative = 0;
    for (path, &fresh) in survivors.iter().enumerate() {
        cumulative += fresh;
        if cumulative < d {
            continue;
        }
        if fresh >= d {
            let action = if path == 0 {
                DecisionAction::DecodeEarly
            } else {
                DecisionAction::DecodeLateDiscardStored
            };
            return DecisionOutcome {
                action,
                decode_path: Some(path),
                used: pattern.survivors_on(path..=path),
                stored: vec![],
            };
        }
        let used = pattern.survivors_on(0..=path);
        let stored = used
            .iter()
            .filter(|&&q| pattern.path_of[q] < path)
            .map(|&q| StoredQudit { qudit: q, path: pattern.path_of[q], decode_path: path })
            .collect();
        return DecisionOutcome {
            action: DecisionAction::DecodeCombined,
            decode_path: Some(path),
            used,
            stored,
        };
    }
    DecisionOutcome { action: DecisionAction::TotalFailure, decode_path: None, used: vec![], stored: vec![] }
}

/// Step vector of the offset ensemble on `count` qudits: the nonzero
/// residues starting from D - 2 and wrapping, with 0 last.
pub fn offset_steps(dim: usize, count: usize) -> Result<Vec<u32>> {
    if count < 2 || count > dim {
        return Err(Error::InvalidArgument(format!(
            "offset ensemble needs 2..={dim} qudits, got {count}"
        )));
    }
    let d = dim as u32;
    let nonzero = (0..d - 1).map(|i| (d - 3 + i) % (d - 1) + 1);
    Ok(nonzero.chain(std::iter::once(0)).take(count).collect())
}

/// Equal mixture over m of sum_j alpha_j |m 1 + j w>.
pub fn offset_ensemble(alpha: &AmplitudeVector, count: usize) -> Result<Vec<(f64, QuditState)>> {
    let dim = alpha.dim();
    let w = offset_steps(dim, count)?;
    (0..dim as u32)
        .map(|m| {
            let terms = alpha.amplitudes().iter().enumerate().map(|(j, &a)| {
                let label = w.iter().map(|&x| ((m + j as u32 * x) % dim as u32) as u8).collect();
                (label, a)
            });
            Ok((1.0 / dim as f64, QuditState::new(dim, count, terms)?))
        })
        .collect()
}

/// Pure-state ensemble on the qudits in `used` (sorted).
pub fn branch_ensemble(
    code: CodeSpec,
    used: &[usize],
    alpha: &AmplitudeVector,
    erasure: ErasureModel,
) -> Result<Vec<(f64, QuditState)>> {
    alpha.check_dim(code.dim())?;
    check_sorted(code, used)?;
    match erasure {
        ErasureModel::Offset => offset_ensemble(alpha, used.len()),
        ErasureModel::Traced => {
            let lost: Vec<usize> = (0..code.n()).filter(|q| !used.contains(q)).collect();
            erase(&encode(code, alpha)?, &lost)
        }
    }
}

/// Decoder matching [`branch_ensemble`].
pub fn branch_circuit(
    code: CodeSpec,
    used: &[usize],
    erasure: ErasureModel,
    variant: DecoderVariant,
) -> Result<DecodingCircuit> {
    check_sorted(code, used)?;
    let layout = match erasure {
        ErasureModel::Offset => SurvivorLayout::offset(code.dim(), &offset_steps(code.dim(), used.len())?)?,
        ErasureModel::Traced => SurvivorLayout::for_code(code, used)?,
    };
    DecodingCircuit::synthesize(&layout, variant)
}

fn check_sorted(code: CodeSpec, used: &[usize]) -> Result<()> {
    if used.windows(2).any(|w| w[0] >= w[1]) || used.last().is_some_and(|&q| q >= code.n()) {
        return Err(Error::InvalidArgument(format!("used qudits {used:?} must be increasing and in range")));
    }
    if used.len() < code.distance() {
        return Err(Error::TooManyErasures { lost: code.n() - used.len(), max: code.correctable_erasures() });
    }
    Ok(())
}

/// Accepted probability and fidelity mass of one branch for every subset of
/// fully depolarized stored inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTable {
    num_stored: usize,
    /// Indexed by subset bitmask over the stored inputs.
    accepted: Vec<f64>,
    fidelity_mass: Vec<f64>,
}

impl BranchTable {
    /// `stored` holds positions within `used`.
    pub fn build(
        code: CodeSpec,
        used: &[usize],
        stored: &[usize],
        alpha: &AmplitudeVector,
        options: OracleOptions,
    ) -> Result<Self> {
        if let Some(&s) = stored.iter().find(|&&s| s >= used.len()) {
            return Err(Error::IndexOutOfRange(format!("stored position {s} of {} inputs", used.len())));
        }
        let ensemble = branch_ensemble(code, used, alpha, options.erasure)?;
        let circuit = branch_circuit(code, used, options.erasure, options.variant)?;
        let dim = code.dim();
        let k = stored.len();
        let mut accepted = vec![0.0; 1 << k];
        let mut fidelity_mass = vec![0.0; 1 << k];
        for mask in 0..1usize << k {
            let q: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| stored[b]).collect();
            let shift_weight = 1.0 / (dim as f64).powi(q.len() as i32);
            for (prob, state) in &ensemble {
                // Dephase: split by the digits on Q.
                let mut components: BTreeMap<Vec<u8>, Vec<(Vec<u8>, C64)>> = BTreeMap::new();
                for (label, amp) in state.iter() {
                    let key = q.iter().map(|&i| label[i]).collect();
                    components.entry(key).or_default().push((label.to_vec(), amp));
                }
                for shift in all_vectors(dim, q.len()) {
                    for comp in components.values() {
                        let terms = comp.iter().map(|(label, amp)| {
                            let mut l = label.clone();
                            for (&i, &a) in q.iter().zip(&shift) {
                                l[i] = ((l[i] as u32 + a) % dim as u32) as u8;
                            }
                            (l, *amp)
                        });
                        let shifted = QuditState::new(dim, used.len(), terms)?;
                        for out in circuit.decode_pure(&shifted, options.postselect())? {
                            let norm: f64 = out.iter().map(|u| u.norm_sqr()).sum();
                            let overlap: C64 =
                                alpha.amplitudes().iter().zip(&out).map(|(a, u)| a.conj() * u).sum();
                            accepted[mask] += prob * shift_weight * norm;
                            fidelity_mass[mask] += prob * shift_weight * overlap.norm_sqr();
                        }
                    }
                }
            }
        }
        Ok(Self { num_stored: k, accepted, fidelity_mass })
    }

    pub fn num_stored(&self) -> usize {
        self.num_stored
    }

    /// Probability that the decoder accepts, given per-input depolarization
    /// probabilities.
    pub fn acceptance(&self, p: &[f64]) -> f64 {
        self.weighted(p, &self.accepted)
    }

    /// Branch fidelity given per-input depolarization probabilities.
    pub fn evaluate(&self, p: &[f64]) -> f64 {
        let den = self.weighted(p, &self.accepted);
        if den <= 0.0 {
            return 0.0;
        }
        (self.weighted(p, &self.fidelity_mass) / den).clamp(0.0, 1.0)
    }

    pub fn evaluate_uniform(&self, p: f64) -> f64 {
        self.evaluate(&vec![p; self.num_stored])
    }

    fn weighted(&self, p: &[f64], values: &[f64]) -> f64 {
        assert_eq!(p.len(), self.num_stored, "one probability per stored input");
        values
            .iter()
            .enumerate()
            .map(|(mask, v)| {
                (0..self.num_stored)
                    .map(|b| if mask >> b & 1 == 1 { p[b] } else { 1.0 - p[b] })
                    .product::<f64>()
                    * v
            })
            .sum()
    }

    /// Branch fidelity as an explicit rational function of a common p_d.
    pub fn rational(&self) -> RationalFunction {
        let assemble = |values: &[f64]| {
            values.iter().enumerate().fold(Polynomial::new(vec![0.0]), |acc, (mask, &v)| {
                let ones = mask.count_ones() as usize;
                acc.add(&Polynomial::bernstein_like(ones, self.num_stored - ones).scale(v))
            })
        };
        RationalFunction::new(assemble(&self.fidelity_mass), assemble(&self.accepted))
    }
}

/// Branch fidelity through dense density matrices and the depolarizing map.
/// Slow; used to cross-check [`BranchTable`].
pub fn branch_fidelity_dense(
    code: CodeSpec,
    used: &[usize],
    stored: &[(usize, f64)],
    alpha: &AmplitudeVector,
    options: OracleOptions,
) -> Result<f64> {
    let ensemble = branch_ensemble(code, used, alpha, options.erasure)?;
    let circuit = branch_circuit(code, used, options.erasure, options.variant)?;
    let parts: Vec<(f64, DensityOperator)> =
        ensemble.iter().map(|(p, s)| (*p, s.to_density())).collect();
    let mut rho = DensityOperator::mixture(&parts)?;
    for &(q, p) in stored {
        rho = apply_depolarizing(&rho, q, p)?;
    }
    let out = match options.decoder {
        DecoderMode::TracePreserving => circuit.decode(&rho)?,
        DecoderMode::ErrorDetecting => match circuit.decode_postselected(&rho)? {
            (_, Some(out)) => out,
            (_, None) => return Ok(0.0),
        },
    };
    fidelity(&alpha.to_state(), &out)
}

#[derive(Debug, Clone)]
enum Slot {
    Failure,
    Decode { lost: Vec<usize>, used: usize, stored: Vec<(usize, usize)>, table: usize },
}

/// Simulator for one layout and amplitude vector. Construction does all the
/// state-level work; [`fidelity`](Self::fidelity) is cheap per channel point.
#[derive(Debug, Clone)]
pub struct Oracle {
    label: ConfigurationLabel,
    slots: Vec<Slot>,
    tables: Vec<BranchTable>,
}

impl Oracle {
    pub fn new(label: &ConfigurationLabel, alpha: &AmplitudeVector, options: OracleOptions) -> Result<Self> {
        let code = label.code();
        alpha.check_dim(code.dim())?;
        let ones = vec![1.0; label.num_paths()];
        let mut tables = Vec::new();
        let mut memo: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
        let mut slots = Vec::new();
        for pattern in enumerate_loss_patterns(label, &ones)? {
            let decision = decide(&pattern, code);
            if decision.action == DecisionAction::TotalFailure {
                slots.push(Slot::Failure);
                continue;
            }
            let positions: Vec<usize> = decision
                .stored
                .iter()
                .map(|s| decision.used.iter().position(|&q| q == s.qudit).expect("stored qudits are used"))
                .collect();
            let key_used = match options.erasure {
                ErasureModel::Offset => vec![decision.used.len()],
                ErasureModel::Traced => decision.used.clone(),
            };
            let table = match memo.get(&(key_used.clone(), positions.clone())) {
                Some(&t) => t,
                None => {
                    tables.push(BranchTable::build(code, &decision.used, &positions, alpha, options)?);
                    memo.insert((key_used, positions), tables.len() - 1);
                    tables.len() - 1
                }
            };
            slots.push(Slot::Decode {
                lost: pattern.lost_per_path(),
                used: decision.used.len(),
                stored: decision.stored.iter().map(|s| (s.path, s.decode_path)).collect(),
                table,
            });
        }
        Ok(Self { label: label.clone(), slots, tables })
    }

    pub fn label(&self) -> &ConfigurationLabel {
        &self.label
    }

    /// Exact expected fidelity, grouped into loss-count classes.
    pub fn fidelity(&self, point: &ChannelPoint) -> Result<FidelityReport> {
        if point.num_paths() != self.label.num_paths() {
            return Err(Error::DimensionMismatch(format!(
                "{} paths in the channel, {} in layout {}",
                point.num_paths(),
                self.label.num_paths(),
                self.label
            )));
        }
        let n = self.label.code().n();
        let path_of = self.label.path_of_qudits();
        let p = point.transmissivities();
        let mut failure = 0.0;
        // lost -> (weight, contribution, first branch fidelity, factor)
        let mut classes: BTreeMap<Vec<usize>, (f64, f64, f64, Factor)> = BTreeMap::new();
        for (mask, slot) in self.slots.iter().enumerate() {
            let prob: f64 = (0..n)
                .map(|q| if mask >> q & 1 == 0 { p[path_of[q]] } else { 1.0 - p[path_of[q]] })
                .product();
            match slot {
                Slot::Failure => failure += prob,
                Slot::Decode { lost, used, stored, table } => {
                    let pd: Vec<f64> = stored.iter().map(|&(i, j)| point.depolarization(i, j)).collect();
                    let f = self.tables[*table].evaluate(&pd);
                    let factor = Factor::Branch { used: *used, stored: stored.len() };
                    let entry = classes.entry(lost.clone()).or_insert((0.0, 0.0, f, factor));
                    entry.0 += prob;
                    entry.1 += prob * f;
                }
            }
        }
        let terms = classes
            .into_iter()
            .map(|(lost, (weight, contribution, first, factor))| Term {
                lost,
                weight,
                factor,
                factor_value: if weight > 0.0 { contribution / weight } else { first },
                contribution,
            })
            .collect();
        Ok(FidelityReport::assemble(terms, failure, self.label.code()))
    }
}

/// One-shot [`Oracle`] evaluation.
pub fn oracle_fidelity(
    label: &ConfigurationLabel,
    point: &ChannelPoint,
    alpha: &AmplitudeVector,
    options: OracleOptions,
) -> Result<FidelityReport> {
    Oracle::new(label, alpha, options)?.fidelity(point)
}

/// (decoder inputs, stored inputs) of the branch that g_index multiplies.
pub fn g_branch_shape(index: u8) -> Result<(usize, usize)> {
    Ok(match index {
        1 => (4, 3),
        2 => (4, 1),
        3 => (5, 3),
        4 => (4, 2),
        5 => (5, 2),
        _ => return Err(Error::IndexOutOfRange(format!("g index {index}, expected 1..=5"))),
    })
}

/// Recovers g_index for the [[7,1,4]] code as a rational function of p_d by
/// interpolating simulated branch fidelities.
pub fn calibrate_g(index: u8, alpha: &AmplitudeVector) -> Result<RationalFunction> {
    let code = CodeSpec::new(7)?;
    let (used, stored) = g_branch_shape(index)?;
    let used: Vec<usize> = (0..used).collect();
    let positions: Vec<usize> = (0..stored).collect();
    let table = BranchTable::build(code, &used, &positions, alpha, OracleOptions::default())?;
    // Chebyshev nodes on [0, 1] determine the fit; the endpoints and
    // midpoints between them only check it.
    let fit = 2 * stored + 1;
    let cheb: Vec<f64> = (0..fit)
        .map(|i| 0.5 - 0.5 * ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * fit) as f64).cos())
        .collect();
    let checks = cheb.windows(2).map(|w| 0.5 * (w[0] + w[1])).chain([0.0, 1.0]);
    let xs: Vec<f64> = cheb.iter().copied().chain(checks).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| table.evaluate_uniform(x)).collect();
    RationalFunction::interpolate(&xs, &ys, stored, stored, 1e-10)
}

/// One ket of a branch fixture: (amplitude slot, digits) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureBranch {
    pub index: usize,
    pub terms: Vec<(usize, Vec<u8>)>,
}

impl FixtureBranch {
    /// sum over terms of alpha_slot |digits>.
    pub fn state(&self, alpha: &AmplitudeVector) -> Result<QuditState> {
        let dim = alpha.dim();
        let width = self.terms.first().map_or(0, |t| t.1.len());
        let terms = self
            .terms
            .iter()
            .map(|(slot, digits)| {
                let a = alpha.amplitudes().get(*slot).copied().ok_or_else(|| {
                    Error::IndexOutOfRange(format!("amplitude slot {slot} of {dim}"))
                })?;
                Ok((digits.clone(), a))
            })
            .collect::<Result<Vec<_>>>()?;
        QuditState::new(dim, width, terms)
    }
}

/// Parses lines of the form `index slot:digits slot:digits ...`; `#` starts
/// a comment.
pub fn parse_branch_fixture(text: &str) -> Result<Vec<FixtureBranch>> {
    let bad = |line: &str| Error::InvalidArgument(format!("bad fixture line {line:?}"));
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let index = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad(line))?;
        let terms = fields
            .map(|f| {
                let (slot, digits) = f.split_once(':').ok_or_else(|| bad(line))?;
                let slot = slot.parse().map_err(|_| bad(line))?;
                let digits = digits
                    .chars()
                    .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| bad(line)))
                    .collect::<Result<Vec<u8>>>()?;
                Ok((slot, digits))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(FixtureBranch { index, terms });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{analytic_fidelity, DephasingFactors, GBackend, GBackends};
    use proptest::prelude::*;

    fn code(n: usize) -> CodeSpec {
        CodeSpec::new(n).unwrap()
    }

    fn label(n: usize, a: &[usize]) -> ConfigurationLabel {
        ConfigurationLabel::new(code(n), a.to_vec()).unwrap()
    }

    #[test]
    fn pattern_probabilities_sum_to_one() {
        let l = label(5, &[3, 2]);
        let pats = enumerate_loss_patterns(&l, &[0.7, 0.4]).unwrap();
        assert_eq!(pats.len(), 32);
        let total: f64 = pats.iter().map(LossPattern::probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let pats = enumerate_loss_patterns(&l, &[1.0, 1.0]).unwrap();
        let nonzero: Vec<_> = pats.iter().filter(|p| p.probability() > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].probability(), 1.0);
    }

    #[test]
    fn qutrit_class_weights() {
        let (p1, p2) = (0.8, 0.6);
        let l = label(3, &[2, 1]);
        let mut by_class: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for pat in enumerate_loss_patterns(&l, &[p1, p2]).unwrap() {
            if decide(&pat, code(3)).action != DecisionAction::TotalFailure {
                *by_class.entry(pat.lost_per_path()).or_default() += pat.probability();
            }
        }
        assert_eq!(by_class.len(), 3);
        assert!((by_class[&vec![0, 0]] - p1 * p1 * p2).abs() < 1e-15);
        assert!((by_class[&vec![1, 0]] - 2.0 * p1 * p2 * (1.0 - p1)).abs() < 1e-15);
        assert!((by_class[&vec![0, 1]] - p1 * p1 * (1.0 - p2)).abs() < 1e-15);
    }

    fn pattern(l: &ConfigurationLabel, survived: &[bool]) -> LossPattern {
        LossPattern::new(l, survived.to_vec(), &vec![0.5; l.num_paths()]).unwrap()
    }

    #[test]
    fn decision_rules() {
        let c = code(3);
        let d = decide(&pattern(&label(3, &[2, 1]), &[true, true, false]), c);
        assert_eq!(d.action, DecisionAction::DecodeEarly);
        assert!(d.stored.is_empty());
        let d = decide(&pattern(&label(3, &[1, 2]), &[true, true, true]), c);
        assert_eq!(d.action, DecisionAction::DecodeLateDiscardStored);
        assert_eq!(d.used, vec![1, 2]);
        let d = decide(&pattern(&label(3, &[1, 1, 1]), &[true, true, true]), c);
        assert_eq!(d.action, DecisionAction::DecodeCombined);
        assert_eq!(d.stored, vec![StoredQudit { qudit: 0, path: 0, decode_path: 1 }]);
        let d = decide(&pattern(&label(3, &[1, 1, 1]), &[true, false, true]), c);
        assert_eq!(d.stored, vec![StoredQudit { qudit: 0, path: 0, decode_path: 2 }]);
        let d = decide(&pattern(&label(3, &[2, 1]), &[false, false, true]), c);
        assert_eq!(d.action, DecisionAction::TotalFailure);
        let paths = PathSet::new(vec![1.0, 2.0, 3.0]).unwrap();
        let d = decide(&pattern(&label(3, &[1, 1, 1]), &[true, false, true]), c);
        let t = d.storage_times_s(&paths, &PhysicalConstants::default());
        assert!((t[0] - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn offset_steps_follow_the_rule() {
        assert_eq!(offset_steps(5, 3).unwrap(), vec![3, 4, 1]);
        assert_eq!(offset_steps(5, 5).unwrap(), vec![3, 4, 1, 2, 0]);
        assert_eq!(offset_steps(3, 2).unwrap(), vec![1, 2]);
        assert_eq!(offset_steps(7, 4).unwrap(), vec![5, 6, 1, 2]);
        assert!(offset_steps(3, 4).is_err());
    }

    #[test]
    fn fixture_matches_offset_ensemble() {
        let text = include_str!("../fixtures/qrs5_lost01_branches.txt");
        let branches = parse_branch_fixture(text).unwrap();
        assert_eq!(branches.len(), 5);
        let alpha = AmplitudeVector::from_real(&[0.3, 0.1, 0.5, 0.2, 0.4]).unwrap();
        let ens = offset_ensemble(&alpha, 3).unwrap();
        for (b, (w, s)) in branches.iter().zip(&ens) {
            assert_eq!(*w, 0.2);
            let overlap = b.state(&alpha).unwrap().inner(s).unwrap().norm();
            assert!((overlap - 1.0).abs() < 1e-12);
        }
        assert!(parse_branch_fixture("0 x:12").is_err());
    }

    #[test]
    fn table_matches_dense_route() {
        let alpha = AmplitudeVector::from_real(&[0.3, 0.1, 0.5, 0.2, 0.4]).unwrap();
        for erasure in [ErasureModel::Offset, ErasureModel::Traced] {
            for decoder in [DecoderMode::ErrorDetecting, DecoderMode::TracePreserving] {
                let options = OracleOptions { erasure, decoder, ..Default::default() };
                let used = [0, 2, 3, 4];
                let table = BranchTable::build(code(5), &used, &[0, 1], &alpha, options).unwrap();
                for (pa, pb) in [(0.0, 0.0), (0.3, 0.8), (1.0, 0.5), (1.0, 1.0)] {
                    let dense =
                        branch_fidelity_dense(code(5), &used, &[(0, pa), (1, pb)], &alpha, options).unwrap();
                    let fast = table.evaluate(&[pa, pb]);
                    assert!((dense - fast).abs() < 1e-10, "{options:?} {pa} {pb}: {dense} vs {fast}");
                }
            }
        }
    }

    #[test]
    fn branch_tables_give_printed_f_factors() {
        let alpha = AmplitudeVector::from_real(&[0.3, 0.1, 0.5, 0.2, 0.4]).unwrap();
        let opts = OracleOptions::default();
        let cases = [(3usize, 2usize, 1u8), (3, 1, 2), (4, 2, 3)];
        for (s, k, i) in cases {
            let used: Vec<usize> = (0..s).collect();
            let stored: Vec<usize> = (0..k).collect();
            let t = BranchTable::build(code(5), &used, &stored, &alpha, opts).unwrap();
            for j in 0..=10 {
                let p = j as f64 / 10.0;
                let printed = crate::analytic::dephasing_factor_f(i, p, &alpha).unwrap();
                assert!((t.evaluate_uniform(p) - printed).abs() < 1e-12, "f{i} at {p}");
                assert!((t.rational().eval(p) - printed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn calibration_matches_exact_assembly() {
        let alpha = AmplitudeVector::uniform(7);
        for index in 1..=5 {
            let cal = calibrate_g(index, &alpha).unwrap();
            let (s, k) = g_branch_shape(index).unwrap();
            let used: Vec<usize> = (0..s).collect();
            let stored: Vec<usize> = (0..k).collect();
            let exact = BranchTable::build(code(7), &used, &stored, &alpha, OracleOptions::default())
                .unwrap()
                .rational();
            for j in 0..=40 {
                let p = j as f64 / 40.0;
                assert!((cal.eval(p) - exact.eval(p)).abs() < 1e-10, "g{index} at {p}");
            }
            assert!((cal.eval(0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_matches_qutrit_closed_forms() {
        let alpha = AmplitudeVector::uniform(3);
        let factors = DephasingFactors::new(alpha.clone(), GBackends::all(GBackend::Printed)).unwrap();
        for a in [&[2, 1][..], &[1, 2]] {
            let l = label(3, a);
            let oracle = Oracle::new(&l, &alpha, OracleOptions::default()).unwrap();
            for (p1, p2, pd) in [(0.9, 0.7, 0.4), (0.3, 1.0, 1.0), (1.0, 0.5, 0.0)] {
                let point = ChannelPoint::two_path(p1, p2, pd).unwrap();
                let o = oracle.fidelity(&point).unwrap();
                let e = analytic_fidelity(&l, &point, &factors).unwrap();
                assert!((o.fidelity - e.fidelity).abs() < 1e-12);
                assert!((o.success_probability - e.success_probability).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn perfect_channel_gives_unit_fidelity() {
        for c in CodeSpec::all() {
            let alpha = AmplitudeVector::uniform(c.dim());
            for l in crate::analytic::known_configurations(c) {
                let point = ChannelPoint::new(vec![1.0; l.num_paths()], vec![vec![0.0; l.num_paths()]; l.num_paths()])
                    .unwrap();
                let r = oracle_fidelity(&l, &point, &alpha, OracleOptions::default()).unwrap();
                assert!((r.fidelity - 1.0).abs() < 1e-10, "{l}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn global_phase_does_not_matter(theta in 0.0f64..6.28, p1 in 0.3f64..1.0, pd in 0.0f64..=1.0) {
            let alpha = AmplitudeVector::from_real(&[0.3, 0.1, 0.5, 0.2, 0.4]).unwrap();
            let l = label(5, &[3, 2]);
            let point = ChannelPoint::two_path(p1, 0.8, pd).unwrap();
            let a = oracle_fidelity(&l, &point, &alpha, OracleOptions::default()).unwrap();
            let b = oracle_fidelity(&l, &point, &alpha.with_global_phase(theta), OracleOptions::default()).unwrap();
            prop_assert!((a.fidelity - b.fidelity).abs() < 1e-12);
        }

        #[test]
        fn reports_are_consistent(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, pd in 0.0f64..=1.0) {
            let alpha = AmplitudeVector::uniform(5);
            let l = label(5, &[2, 3]);
            let r = oracle_fidelity(&l, &ChannelPoint::two_path(p1, p2, pd).unwrap(), &alpha, OracleOptions::default())
                .unwrap();
            prop_assert!(r.check_consistency(code(5), 1e-12).is_ok());
        }
    }
}
