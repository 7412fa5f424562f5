//! Closed-form fidelities of the aggregation layouts, their success
//! probabilities, and the dephasing factors f_1..f_3 (D = 5) and g_1..g_5
//! (D = 7) that multiply the terms where stored qudits are used.
//!
//! Every fidelity is a sum over loss-count classes. A class with l_i qudits
//! lost on path i carries the weight C * prod_i p_i^(N_i - l_i) (1 - p_i)^l_i
//! times a dephasing factor; the undecodable remainder contributes
//! (1 - P_s) / D^n.

use std::collections::BTreeMap;
use std::fmt;

use crate::channel::ChannelPoint;
use crate::codes::{AmplitudeVector, CodeSpec};
use crate::error::{check_probability, Error, Result};
use crate::oracle;
use crate::rational::RationalFunction;

/// How the block of n qudits is split over the paths, shortest path first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigurationLabel {
    code: CodeSpec,
    assignment: Vec<usize>,
}

impl ConfigurationLabel {
    /// Every path must carry at least one qudit.
    pub fn new(code: CodeSpec, assignment: Vec<usize>) -> Result<Self> {
        if assignment.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "assignment {assignment:?} leaves a path empty"
            )));
        }
        Self::with_empty_paths(code, assignment)
    }

    /// Like [`new`](Self::new) but allows paths that carry nothing.
    pub fn with_empty_paths(code: CodeSpec, assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() || assignment.len() > 3 {
            return Err(Error::InvalidArgument(format!(
                "expected 1 to 3 paths, got {}",
                assignment.len()
            )));
        }
        let total: usize = assignment.iter().sum();
        if total != code.n() {
            return Err(Error::InvalidArgument(format!(
                "assignment {assignment:?} sums to {total}, block length is {}",
                code.n()
            )));
        }
        Ok(Self { code, assignment })
    }

    /// Parses "2+1" or "2,1".
    pub fn parse(code: CodeSpec, text: &str) -> Result<Self> {
        let assignment = text
            .split(['+', ','])
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad assignment {text:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(code, assignment)
    }

    pub fn code(&self) -> CodeSpec {
        self.code
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_paths(&self) -> usize {
        self.assignment.len()
    }

    /// Path index of every qudit; qudits fill paths in order.
    pub fn path_of_qudits(&self) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .flat_map(|(path, &count)| std::iter::repeat(path).take(count))
            .collect()
    }

    /// Same split with the path order reversed.
    pub fn mirrored(&self) -> Self {
        let mut assignment = self.assignment.clone();
        assignment.reverse();
        Self { code: self.code, assignment }
    }
}

impl fmt::Display for ConfigurationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.assignment.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("+"))
    }
}

/// Dephasing factor attached to a loss-count class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    /// No stored qudit is used.
    One,
    /// 1 - 2 p_d / 3 for a single stored qutrit.
    Qutrit { stored_path: usize, decode_path: usize },
    F(u8),
    G(u8),
    /// Simulated branch fidelity with `stored` of the `used` decoder inputs
    /// taken from memory.
    Branch { used: usize, stored: usize },
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::One => f.write_str("1"),
            Factor::Qutrit { stored_path, decode_path } => {
                write!(f, "1-2pd{}{}/3", stored_path + 1, decode_path + 1)
            }
            Factor::F(i) => write!(f, "f{i}"),
            Factor::G(i) => write!(f, "g{i}"),
            Factor::Branch { used, stored } => write!(f, "branch({used},{stored})"),
        }
    }
}

/// One loss-count class of a fidelity expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    /// Qudits lost on each path.
    pub lost: Vec<usize>,
    pub weight: f64,
    pub factor: Factor,
    pub factor_value: f64,
    pub contribution: f64,
}

impl Term {
    pub fn total_lost(&self) -> usize {
        self.lost.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub success_probability: f64,
    /// (1 - P_s) / D^n.
    pub residual: f64,
    pub terms: Vec<Term>,
}

impl FidelityReport {
    pub(crate) fn assemble(terms: Vec<Term>, failure: f64, code: CodeSpec) -> Self {
        let success_probability: f64 = terms.iter().map(|t| t.weight).sum();
        let residual = failure.max(0.0) / (code.dim() as f64).powi(code.n() as i32);
        let fidelity = terms.iter().map(|t| t.contribution).sum::<f64>() + residual;
        Self { fidelity, success_probability, residual, terms }
    }

    /// Sum of contributions grouped by the total number of lost qudits.
    pub fn contributions_by_total_lost(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for t in &self.terms {
            *out.entry(t.total_lost()).or_insert(0.0) += t.contribution;
        }
        out
    }

    /// Checks the bookkeeping identities within `tol`.
    pub fn check_consistency(&self, code: CodeSpec, tol: f64) -> Result<()> {
        let ps: f64 = self.terms.iter().map(|t| t.weight).sum();
        let total: f64 = self.terms.iter().map(|t| t.contribution).sum::<f64>()
            + (1.0 - ps) / (code.dim() as f64).powi(code.n() as i32);
        let in_unit = |x: f64| (-tol..=1.0 + tol).contains(&x);
        if (ps - self.success_probability).abs() > tol
            || (total - self.fidelity).abs() > tol
            || !in_unit(self.fidelity)
            || !in_unit(self.success_probability)
            || self.terms.iter().any(|t| !in_unit(t.weight) || !in_unit(t.factor_value))
        {
            return Err(Error::InvalidArgument(format!("inconsistent report {self:?}")));
        }
        Ok(())
    }
}

/// Source of the g factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GBackend {
    /// Reference closed forms.
    Printed,
    /// Rational function recovered from the simulator.
    OracleCalibrated,
}

/// Backend choice for g_1..g_5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GBackends(pub [GBackend; 5]);

impl Default for GBackends {
    /// Calibrated g_1, g_4, g_5, whose reference forms disagree with the
    /// simulator; printed g_2, g_3.
    fn default() -> Self {
        use GBackend::*;
        Self([OracleCalibrated, Printed, Printed, OracleCalibrated, OracleCalibrated])
    }
}

impl GBackends {
    pub fn all(backend: GBackend) -> Self {
        Self([backend; 5])
    }

    pub fn get(&self, index: u8) -> GBackend {
        self.0[usize::from(index) - 1]
    }
}

/// (sum |a_i|^4, sum over i < j of |a_i|^2 |a_j|^2).
fn moments(alpha: &AmplitudeVector) -> (f64, f64) {
    let w = alpha.weights();
    let a = w.iter().map(|x| x * x).sum();
    let mut b = 0.0;
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            b += w[i] * w[j];
        }
    }
    (a, b)
}

fn check_index(index: u8, max: u8) -> Result<()> {
    if (1..=max).contains(&index) {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange(format!("factor index {index}, expected 1..={max}")))
    }
}

/// f_1, f_2, f_3 for the [[5,1,3]] code.
pub fn dephasing_factor_f(index: u8, p_d: f64, alpha: &AmplitudeVector) -> Result<f64> {
    check_index(index, 3)?;
    check_probability("p_d", p_d)?;
    alpha.check_dim(5)?;
    let (a, b) = moments(alpha);
    let p = p_d;
    Ok(match index {
        1 => {
            (4.0 * (4.0 * a + 13.0 * b) * p * p - 20.0 * (2.0 * a + 5.0 * b) * p + 25.0)
                / (20.0 * (1.25 - 2.0 * p + p * p))
        }
        2 => (5.0 - 2.0 * (2.0 * a + 5.0 * b) * p) / (5.0 - 4.0 * p),
        _ => {
            (2.0 * (8.0 * a + 25.0 * b) * p * p - 20.0 * (2.0 * a + 5.0 * b) * p + 25.0)
                / (5.0 - 4.0 * p).powi(2)
        }
    })
}

/// Reference g_1..g_5 for the [[7,1,4]] code, with pair sums over all seven
/// amplitudes.
pub fn printed_g(index: u8, p_d: f64, alpha: &AmplitudeVector) -> Result<f64> {
    check_index(index, 5)?;
    check_probability("p_d", p_d)?;
    alpha.check_dim(7)?;
    let (a, b) = moments(alpha);
    let p = p_d;
    let q = 6.0 * p - 7.0;
    Ok(match index {
        1 => {
            let pre = 342.0 * (7.0 / 6.0 - p)
                / (7.0 * (49.0 - 30.0 * p.powi(3) + 108.0 * p * p - 126.0 * p));
            pre * (2.0 / 19.0 * (6.0 * a + 19.0 * b) * p * p - 42.0 * (2.0 * a + 5.0 * b) * p
                + 49.0 / 57.0)
        }
        2 => (7.0 - 2.0 * (3.0 * a + 7.0 * b) * p) / (6.0 * (7.0 / 6.0 - p)),
        3 => {
            (2.0 * (108.0 * a + 343.0 * b) * p.powi(3) - 42.0 * (18.0 * a + 49.0 * b) * p * p
                + 294.0 * (3.0 * a + 7.0 * b) * p
                - 343.0)
                / q.powi(3)
        }
        4 => (p * p - 7.0 * (5.0 * a + 14.0 * b) * p + 49.0) / (49.0 - 35.0 * p + 49.0 * p * p),
        _ => {
            (3.0 * (18.0 * a + 49.0 * b) * p * p - 28.0 * (3.0 * a + 7.0 * b) * p + 49.0)
                / q.powi(2)
        }
    })
}

/// g_i from the chosen backend. The calibrated backend runs the simulator on
/// every call; use [`DephasingFactors`] to calibrate once.
pub fn dephasing_factor_g(
    index: u8,
    p_d: f64,
    alpha: &AmplitudeVector,
    backend: GBackend,
) -> Result<f64> {
    match backend {
        GBackend::Printed => printed_g(index, p_d, alpha),
        GBackend::OracleCalibrated => {
            check_probability("p_d", p_d)?;
            Ok(oracle::calibrate_g(index, alpha)?.eval(p_d))
        }
    }
}

/// Dephasing factors for one amplitude vector, with any g calibration done
/// up front.
#[derive(Debug, Clone)]
pub struct DephasingFactors {
    alpha: AmplitudeVector,
    backends: GBackends,
    calibrated: Vec<Option<RationalFunction>>,
}

impl DephasingFactors {
    pub fn new(alpha: AmplitudeVector, backends: GBackends) -> Result<Self> {
        let mut calibrated = vec![None; 5];
        if alpha.dim() == 7 {
            for (slot, index) in calibrated.iter_mut().zip(1u8..) {
                if backends.get(index) == GBackend::OracleCalibrated {
                    *slot = Some(oracle::calibrate_g(index, &alpha)?);
                }
            }
        }
        Ok(Self { alpha, backends, calibrated })
    }

    /// Uniform amplitudes and default backends.
    pub fn uniform(dim: usize) -> Result<Self> {
        Self::new(AmplitudeVector::uniform(dim), GBackends::default())
    }

    pub fn alpha(&self) -> &AmplitudeVector {
        &self.alpha
    }

    pub fn backends(&self) -> GBackends {
        self.backends
    }

    pub fn f(&self, index: u8, p_d: f64) -> Result<f64> {
        dephasing_factor_f(index, p_d, &self.alpha)
    }

    pub fn g(&self, index: u8, p_d: f64) -> Result<f64> {
        check_index(index, 5)?;
        check_probability("p_d", p_d)?;
        match &self.calibrated[usize::from(index) - 1] {
            Some(r) => Ok(r.eval(p_d)),
            None => printed_g(index, p_d, &self.alpha),
        }
    }

    /// Value of `factor` at the depolarization probabilities of `point`.
    pub fn value(&self, factor: Factor, point: &ChannelPoint) -> Result<f64> {
        let p_d = || point.depolarization(0, 1);
        match factor {
            Factor::One => Ok(1.0),
            Factor::Qutrit { stored_path, decode_path } => {
                Ok(1.0 - 2.0 / 3.0 * point.depolarization(stored_path, decode_path))
            }
            Factor::F(i) => self.f(i, p_d()),
            Factor::G(i) => self.g(i, p_d()),
            Factor::Branch { .. } => Err(Error::InvalidArgument(
                "branch factors are only produced by the simulator".into(),
            )),
        }
    }
}

/// One printed term: coefficient, losses per path, factor.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub coeff: f64,
    pub lost: &'static [usize],
    pub factor: Factor,
}

const fn e(coeff: f64, lost: &'static [usize], factor: Factor) -> Entry {
    Entry { coeff, lost, factor }
}

const ONE: Factor = Factor::One;
const Q12: Factor = Factor::Qutrit { stored_path: 0, decode_path: 1 };
const Q13: Factor = Factor::Qutrit { stored_path: 0, decode_path: 2 };
const Q23: Factor = Factor::Qutrit { stored_path: 1, decode_path: 2 };
const F1: Factor = Factor::F(1);
const F2: Factor = Factor::F(2);
const F3: Factor = Factor::F(3);
const G1: Factor = Factor::G(1);
const G2: Factor = Factor::G(2);
const G3: Factor = Factor::G(3);
const G4: Factor = Factor::G(4);
const G5: Factor = Factor::G(5);

const T3_21: &[Entry] = &[e(1.0, &[0, 0], ONE), e(2.0, &[1, 0], Q12), e(1.0, &[0, 1], ONE)];
const T3_12: &[Entry] = &[e(1.0, &[0, 0], ONE), e(2.0, &[0, 1], Q12), e(1.0, &[1, 0], ONE)];
const T3_111: &[Entry] = &[
    e(1.0, &[0, 0, 0], Q12),
    e(1.0, &[1, 0, 0], Q23),
    e(1.0, &[0, 1, 0], Q13),
    e(1.0, &[0, 0, 1], Q12),
];

const T5_41: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(4.0, &[1, 0], ONE),
    e(1.0, &[0, 1], ONE),
    e(6.0, &[2, 0], F1),
    e(4.0, &[1, 1], ONE),
];
const T5_14: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(4.0, &[0, 1], ONE),
    e(1.0, &[1, 0], ONE),
    e(6.0, &[0, 2], F2),
    e(4.0, &[1, 1], ONE),
];
const T5_32: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(3.0, &[1, 0], F3),
    e(2.0, &[0, 1], ONE),
    e(3.0, &[2, 0], F2),
    e(1.0, &[0, 2], ONE),
    e(6.0, &[1, 1], F1),
];
const T5_23: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(3.0, &[0, 1], F3),
    e(2.0, &[1, 0], ONE),
    e(3.0, &[0, 2], F1),
    e(1.0, &[2, 0], ONE),
    e(6.0, &[1, 1], F2),
];

const T7_61: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(6.0, &[1, 0], ONE),
    e(1.0, &[0, 1], ONE),
    e(15.0, &[2, 0], ONE),
    e(6.0, &[1, 1], ONE),
    e(20.0, &[3, 0], G1),
    e(15.0, &[2, 1], ONE),
];
const T7_16: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(6.0, &[0, 1], ONE),
    e(1.0, &[1, 0], ONE),
    e(15.0, &[0, 2], ONE),
    e(6.0, &[1, 1], ONE),
    e(20.0, &[0, 3], G2),
    e(15.0, &[1, 2], ONE),
];
const T7_52: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(5.0, &[1, 0], ONE),
    e(2.0, &[0, 1], ONE),
    e(10.0, &[2, 0], G3),
    e(1.0, &[0, 2], ONE),
    e(10.0, &[1, 1], ONE),
    e(10.0, &[3, 0], G4),
    // Printed as 10; the class holds C(5,2) C(2,1) = 20 patterns.
    e(20.0, &[2, 1], G1),
    e(5.0, &[1, 2], ONE),
];
const T7_25: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(5.0, &[0, 1], ONE),
    e(2.0, &[1, 0], ONE),
    e(10.0, &[0, 2], G5),
    e(1.0, &[2, 0], ONE),
    e(10.0, &[1, 1], ONE),
    e(10.0, &[0, 3], G4),
    // Printed as 10, as in 5+2.
    e(20.0, &[1, 2], G2),
    e(5.0, &[2, 1], ONE),
];
const T7_43: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(4.0, &[1, 0], G3),
    e(6.0, &[2, 0], G5),
    e(3.0, &[0, 2], ONE),
    e(12.0, &[1, 1], G3),
    e(4.0, &[3, 0], G2),
    e(1.0, &[0, 3], ONE),
    e(18.0, &[2, 1], G4),
    e(12.0, &[1, 2], G1),
    e(3.0, &[0, 1], ONE),
];
const T7_34: &[Entry] = &[
    e(1.0, &[0, 0], ONE),
    e(4.0, &[0, 1], G3),
    e(6.0, &[0, 2], G3),
    e(3.0, &[2, 0], ONE),
    e(12.0, &[1, 1], G5),
    e(4.0, &[0, 3], G1),
    e(1.0, &[3, 0], ONE),
    e(18.0, &[1, 2], G4),
    e(12.0, &[2, 1], G2),
    e(3.0, &[1, 0], ONE),
];

/// Printed term list for a layout, if there is one.
pub(crate) fn printed_table(label: &ConfigurationLabel) -> Option<&'static [Entry]> {
    Some(match (label.code().n(), label.assignment()) {
        (3, [2, 1]) => T3_21,
        (3, [1, 2]) => T3_12,
        (3, [1, 1, 1]) => T3_111,
        (5, [4, 1]) => T5_41,
        (5, [1, 4]) => T5_14,
        (5, [3, 2]) => T5_32,
        (5, [2, 3]) => T5_23,
        (7, [6, 1]) => T7_61,
        (7, [1, 6]) => T7_16,
        (7, [5, 2]) => T7_52,
        (7, [2, 5]) => T7_25,
        (7, [4, 3]) => T7_43,
        (7, [3, 4]) => T7_34,
        _ => return None,
    })
}

/// Layouts with a closed form.
pub fn known_configurations(code: CodeSpec) -> Vec<ConfigurationLabel> {
    let lists: &[&[usize]] = match code.n() {
        3 => &[&[2, 1], &[1, 2], &[1, 1, 1]],
        5 => &[&[4, 1], &[1, 4], &[3, 2], &[2, 3]],
        _ => &[&[6, 1], &[1, 6], &[5, 2], &[2, 5], &[4, 3], &[3, 4]],
    };
    lists
        .iter()
        .map(|a| ConfigurationLabel::new(code, a.to_vec()).expect("valid table layout"))
        .collect()
}

fn unknown(label: &ConfigurationLabel) -> Error {
    Error::UnknownConfiguration(format!("{label} for {}", label.code()))
}

fn entry_weight(entry: &Entry, assignment: &[usize], p: &[f64]) -> f64 {
    entry.lost.iter().zip(assignment).zip(p).fold(entry.coeff, |acc, ((&l, &n), &pi)| {
        acc * pi.powi((n - l) as i32) * (1.0 - pi).powi(l as i32)
    })
}

fn check_paths(label: &ConfigurationLabel, point: &ChannelPoint) -> Result<()> {
    if point.num_paths() != label.num_paths() {
        return Err(Error::DimensionMismatch(format!(
            "{} paths in the channel, {} in layout {label}",
            point.num_paths(),
            label.num_paths()
        )));
    }
    Ok(())
}

/// Closed-form fidelity of any tabulated layout.
pub fn analytic_fidelity(
    label: &ConfigurationLabel,
    point: &ChannelPoint,
    factors: &DephasingFactors,
) -> Result<FidelityReport> {
    let table = printed_table(label).ok_or_else(|| unknown(label))?;
    check_paths(label, point)?;
    if label.code().n() > 3 {
        factors.alpha().check_dim(label.code().dim())?;
    }
    let mut terms = Vec::with_capacity(table.len());
    for entry in table {
        let weight = entry_weight(entry, label.assignment(), point.transmissivities());
        let factor_value = factors.value(entry.factor, point)?;
        terms.push(Term {
            lost: entry.lost.to_vec(),
            weight,
            factor: entry.factor,
            factor_value,
            contribution: weight * factor_value,
        });
    }
    let ps: f64 = terms.iter().map(|t| t.weight).sum();
    Ok(FidelityReport::assemble(terms, 1.0 - ps, label.code()))
}

/// P_s of a tabulated layout.
pub fn success_probability(label: &ConfigurationLabel, transmissivities: &[f64]) -> Result<f64> {
    let table = printed_table(label).ok_or_else(|| unknown(label))?;
    if transmissivities.len() != label.num_paths() {
        return Err(Error::DimensionMismatch(format!(
            "{} transmissivities for layout {label}",
            transmissivities.len()
        )));
    }
    for &p in transmissivities {
        check_probability("transmissivity", p)?;
    }
    Ok(table.iter().map(|e| entry_weight(e, label.assignment(), transmissivities)).sum())
}

fn two_path(n: usize, assignment: [usize; 2], point: ChannelPoint, factors: &DephasingFactors) -> Result<FidelityReport> {
    let label = ConfigurationLabel::new(CodeSpec::new(n)?, assignment.to_vec())?;
    analytic_fidelity(&label, &point, factors)
}

fn qutrit_factors() -> DephasingFactors {
    DephasingFactors {
        alpha: AmplitudeVector::uniform(3),
        backends: GBackends::all(GBackend::Printed),
        calibrated: vec![None; 5],
    }
}

pub fn fidelity_312_2plus1(p1: f64, p2: f64, p_d: f64) -> Result<FidelityReport> {
    two_path(3, [2, 1], ChannelPoint::two_path(p1, p2, p_d)?, &qutrit_factors())
}

pub fn fidelity_312_1plus2(p1: f64, p2: f64, p_d: f64) -> Result<FidelityReport> {
    two_path(3, [1, 2], ChannelPoint::two_path(p1, p2, p_d)?, &qutrit_factors())
}

pub fn fidelity_312_1plus1plus1(
    p1: f64,
    p2: f64,
    p3: f64,
    p_d12: f64,
    p_d13: f64,
    p_d23: f64,
) -> Result<FidelityReport> {
    let label = ConfigurationLabel::new(CodeSpec::new(3)?, vec![1, 1, 1])?;
    let point = ChannelPoint::three_path([p1, p2, p3], p_d12, p_d13, p_d23)?;
    analytic_fidelity(&label, &point, &qutrit_factors())
}

/// `assignment` is one of (4,1), (1,4), (3,2), (2,3).
pub fn fidelity_513(
    assignment: [usize; 2],
    p1: f64,
    p2: f64,
    p_d: f64,
    alpha: &AmplitudeVector,
) -> Result<FidelityReport> {
    alpha.check_dim(5)?;
    let factors = DephasingFactors {
        alpha: alpha.clone(),
        backends: GBackends::all(GBackend::Printed),
        calibrated: vec![None; 5],
    };
    two_path(5, assignment, ChannelPoint::two_path(p1, p2, p_d)?, &factors)
}

/// `assignment` is one of (6,1), (1,6), (5,2), (2,5), (4,3), (3,4).
pub fn fidelity_714(
    assignment: [usize; 2],
    p1: f64,
    p2: f64,
    p_d: f64,
    factors: &DephasingFactors,
) -> Result<FidelityReport> {
    factors.alpha().check_dim(7)?;
    two_path(7, assignment, ChannelPoint::two_path(p1, p2, p_d)?, factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qudit::C64;
    use proptest::prelude::*;

    fn binom(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    fn code(n: usize) -> CodeSpec {
        CodeSpec::new(n).unwrap()
    }

    #[test]
    fn label_parsing_and_validation() {
        let l = ConfigurationLabel::parse(code(5), "3+2").unwrap();
        assert_eq!(l.assignment(), &[3, 2]);
        assert_eq!(l.to_string(), "3+2");
        assert_eq!(l.path_of_qudits(), vec![0, 0, 0, 1, 1]);
        assert_eq!(l.mirrored().to_string(), "2+3");
        assert!(ConfigurationLabel::parse(code(7), "5,3").is_err());
        assert!(ConfigurationLabel::new(code(3), vec![3, 0]).is_err());
        assert!(ConfigurationLabel::with_empty_paths(code(3), vec![3, 0]).is_ok());
        assert!(ConfigurationLabel::new(code(3), vec![1, 1, 1]).is_ok());
        assert!(ConfigurationLabel::parse(code(3), "x+1").is_err());
    }

    #[test]
    fn coefficients_are_binomial_products() {
        for c in CodeSpec::all() {
            for label in known_configurations(c) {
                for entry in printed_table(&label).unwrap() {
                    let expected: f64 = entry
                        .lost
                        .iter()
                        .zip(label.assignment())
                        .map(|(&l, &n)| binom(n, l))
                        .product();
                    assert_eq!(entry.coeff, expected, "{label} {:?}", entry.lost);
                }
            }
        }
    }

    #[test]
    fn tables_cover_exactly_the_decodable_classes() {
        for c in CodeSpec::all() {
            for label in known_configurations(c) {
                let table = printed_table(&label).unwrap();
                let a = label.assignment();
                let mut listed: Vec<Vec<usize>> = table.iter().map(|e| e.lost.to_vec()).collect();
                listed.sort();
                listed.dedup();
                assert_eq!(listed.len(), table.len(), "{label} lists a class twice");
                let mut decodable = Vec::new();
                let mut lost = vec![0; a.len()];
                loop {
                    let survivors: usize = a.iter().zip(&lost).map(|(n, l)| n - l).sum();
                    if survivors >= c.distance() {
                        decodable.push(lost.clone());
                    }
                    let mut i = 0;
                    while i < a.len() && lost[i] == a[i] {
                        lost[i] = 0;
                        i += 1;
                    }
                    if i == a.len() {
                        break;
                    }
                    lost[i] += 1;
                }
                decodable.sort();
                assert_eq!(listed, decodable, "{label}");
            }
        }
    }

    #[test]
    fn qutrit_examples() {
        let r = fidelity_312_2plus1(1.0, 1.0, 0.7).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-15);
        let p1 = (-1.0f64 / 22.0).exp();
        let p2 = (-3.0f64 / 22.0).exp();
        let r = fidelity_312_2plus1(p1, p2, 1.0).unwrap();
        assert!((r.fidelity - 0.938).abs() < 0.002, "{}", r.fidelity);
        let r = fidelity_312_2plus1(p1, 0.0, 0.3).unwrap();
        let asymptote = p1 * p1 + (1.0 - p1 * p1) / 27.0;
        assert!((r.fidelity - asymptote).abs() < 1e-14);
        assert!((asymptote - 0.9163).abs() < 0.002);
        let ps = p1 * p1 * p2 + 2.0 * p1 * p2 * (1.0 - p1) + p1 * p1 * (1.0 - p2);
        assert!((r.success_probability - p1 * p1).abs() < 1e-15);
        let r = fidelity_312_2plus1(p1, p2, 0.0).unwrap();
        assert!((r.success_probability - ps).abs() < 1e-15);
        assert!((r.fidelity - (ps + (1.0 - ps) / 27.0)).abs() < 1e-15);
    }

    #[test]
    fn three_path_examples() {
        let r = fidelity_312_1plus1plus1(1.0, 1.0, 1.0, 0.6, 0.9, 0.3).unwrap();
        assert!((r.fidelity - (1.0 - 0.4)).abs() < 1e-15);
        let r = fidelity_312_1plus1plus1(0.9, 0.8, 0.7, 0.0, 0.0, 0.0).unwrap();
        let ps = r.success_probability;
        let direct = 0.9 * 0.8 * 0.7 + 0.8 * 0.7 * 0.1 + 0.9 * 0.7 * 0.2 + 0.9 * 0.8 * 0.3;
        assert!((ps - direct).abs() < 1e-15);
        assert!((r.fidelity - (ps + (1.0 - ps) / 27.0)).abs() < 1e-15);
        let (p1, p2, p3, a, b, c) = (0.9, 0.8, 0.7, 0.2, 0.5, 0.3);
        let r = fidelity_312_1plus1plus1(p1, p2, p3, a, b, c).unwrap();
        let q = |x: f64| 1.0 - 2.0 * x / 3.0;
        let expected = p1 * p2 * p3 * q(a)
            + p2 * p3 * (1.0 - p1) * q(c)
            + p1 * p3 * (1.0 - p2) * q(b)
            + p1 * p2 * (1.0 - p3) * q(a)
            + (1.0 - direct) / 27.0;
        assert!((r.fidelity - expected).abs() < 1e-15);
    }

    #[test]
    fn qutrit_swap_identity() {
        for i in 0..10 {
            for j in 0..10 {
                let (p1, p2, pd) = (0.1 * i as f64, 0.1 * j as f64 + 0.05, 0.37);
                let a = fidelity_312_2plus1(p1, p2, pd).unwrap().fidelity;
                let b = fidelity_312_1plus2(p2, p1, pd).unwrap().fidelity;
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn f_factor_values() {
        let u = AmplitudeVector::uniform(5);
        for i in 1..=3 {
            assert_eq!(dephasing_factor_f(i, 0.0, &u).unwrap(), 1.0);
            assert!((dephasing_factor_f(i, 1.0, &u).unwrap() - 0.2).abs() < 1e-12);
        }
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let f1 = dephasing_factor_f(1, p, &u).unwrap();
            let f2 = dephasing_factor_f(2, p, &u).unwrap();
            assert!(f1 < f2, "p = {p}");
        }
        assert!(dephasing_factor_f(4, 0.1, &u).is_err());
        assert!(dephasing_factor_f(1, 1.1, &u).is_err());
        assert!(dephasing_factor_f(1, 0.1, &AmplitudeVector::uniform(3)).is_err());
    }

    #[test]
    fn derived_f_forms_agree_with_printed() {
        // Closed forms in terms of A = sum |a|^4 alone.
        let alpha = AmplitudeVector::from_real(&[0.1, 0.5, 0.3, 0.7, 0.2]).unwrap();
        let a: f64 = alpha.weights().iter().map(|w| w * w).sum();
        for k in 0..=20 {
            let p = k as f64 / 20.0;
            let f1 = (25.0 + (-50.0 + 10.0 * a) * p + (26.0 - 10.0 * a) * p * p)
                / (25.0 - 40.0 * p + 20.0 * p * p);
            let f2 = (5.0 - (5.0 - a) * p) / (5.0 - 4.0 * p);
            let f3 = (25.0 + (-50.0 + 10.0 * a) * p + (25.0 - 9.0 * a) * p * p)
                / (5.0 - 4.0 * p).powi(2);
            for (i, v) in [(1, f1), (2, f2), (3, f3)] {
                assert!((dephasing_factor_f(i, p, &alpha).unwrap() - v).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn printed_g_values() {
        let u = AmplitudeVector::uniform(7);
        for i in 1..=5 {
            assert!((printed_g(i, 0.0, &u).unwrap() - 1.0).abs() < 1e-12, "g{i}(0)");
        }
        assert!((printed_g(2, 1.0, &u).unwrap() - 1.0 / 7.0).abs() < 1e-12);
        assert!((printed_g(3, 1.0, &u).unwrap() - 1.0 / 7.0).abs() < 1e-12);
        assert!(printed_g(5, 1.0, &u).unwrap() > 1.0);
    }

    #[test]
    fn zero_depolarization_reduces_to_success_probability() {
        let f = DephasingFactors::new(AmplitudeVector::uniform(5), GBackends::all(GBackend::Printed))
            .unwrap();
        for label in known_configurations(code(5)) {
            let point = ChannelPoint::two_path(0.8, 0.6, 0.0).unwrap();
            let r = analytic_fidelity(&label, &point, &f).unwrap();
            let ps = success_probability(&label, &[0.8, 0.6]).unwrap();
            assert!((r.fidelity - (ps + (1.0 - ps) / 3125.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_transmissivities_give_binomial_tail() {
        for c in CodeSpec::all() {
            let n = c.n();
            for label in known_configurations(c) {
                let p = 0.63;
                let ps = success_probability(&label, &vec![p; label.num_paths()]).unwrap();
                let tail: f64 = (c.distance()..=n)
                    .map(|k| binom(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
                    .sum();
                assert!((ps - tail).abs() < 1e-14, "{label}");
            }
        }
    }

    #[test]
    fn unknown_layouts_are_rejected() {
        let l = ConfigurationLabel::new(code(5), vec![2, 2, 1]).unwrap();
        let point = ChannelPoint::three_path([0.9; 3], 0.1, 0.1, 0.1).unwrap();
        let f = DephasingFactors::new(AmplitudeVector::uniform(5), GBackends::all(GBackend::Printed))
            .unwrap();
        assert!(matches!(analytic_fidelity(&l, &point, &f), Err(Error::UnknownConfiguration(_))));
        assert!(success_probability(&l, &[0.9; 3]).is_err());
    }

    fn simplex_alpha(dim: usize) -> impl Strategy<Value = AmplitudeVector> {
        prop::collection::vec(0.01f64..1.0, dim).prop_map(|w| {
            AmplitudeVector::new(
                w.iter().map(|x| C64::new((x / w.iter().sum::<f64>()).sqrt(), 0.0)).collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn reports_are_consistent(
            p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, pd in 0.0f64..=1.0, idx in 0usize..4,
            alpha in simplex_alpha(5),
        ) {
            let label = &known_configurations(code(5))[idx];
            let a = label.assignment();
            let r = fidelity_513([a[0], a[1]], p1, p2, pd, &alpha).unwrap();
            prop_assert!(r.check_consistency(code(5), 1e-12).is_ok());
            let lo = 1.0 / 3125.0;
            prop_assert!(r.fidelity >= lo - 1e-15 && r.fidelity <= 1.0 + 1e-12);
        }

        #[test]
        fn f1_is_smallest_at_uniform_amplitudes(alpha in simplex_alpha(5), pd in 0.0f64..=1.0) {
            let u = AmplitudeVector::uniform(5);
            let at_alpha = dephasing_factor_f(1, pd, &alpha).unwrap();
            prop_assert!(at_alpha >= dephasing_factor_f(1, pd, &u).unwrap() - 1e-15);
        }

        #[test]
        fn qutrit_fidelity_is_monotone(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, pd in 0.0f64..0.99) {
            for f in [fidelity_312_2plus1, fidelity_312_1plus2] {
                let base = f(p1, p2, pd).unwrap().fidelity;
                prop_assert!(f(p1, p2, pd + 0.01).unwrap().fidelity <= base + 1e-15);
                prop_assert!(f((p1 + 0.01).min(1.0), p2, pd).unwrap().fidelity >= base - 1e-15);
                prop_assert!(f(p1, (p2 + 0.01).min(1.0), pd).unwrap().fidelity >= base - 1e-15);
            }
        }
    }
}
