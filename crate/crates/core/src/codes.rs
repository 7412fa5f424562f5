//! Quantum Reed-Solomon codes [[n,1,d]]_D with D = n, their encoder, and
//! erasure-decoding circuits built from sum-mod-D gates.
//!
//! Codewords are uniform superpositions over evaluations f(0), ..., f(n-1) of
//! polynomials of degree below k = (n+1)/2 over Z_n. The logical index is the
//! top coefficient of f, so |j>_L for n = 3 is sum_m |m, m+j, m+2j> / sqrt 3.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::modp::{self, Matrix};
use crate::qudit::{index_to_label, DensityOperator, QuditState, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodeSpec {
    n: usize,
}

impl CodeSpec {
    pub fn new(n: usize) -> Result<Self> {
        match n {
            3 | 5 | 7 => Ok(Self { n }),
            _ => Err(Error::UnsupportedCode(n)),
        }
    }

    pub fn all() -> [CodeSpec; 3] {
        [Self { n: 3 }, Self { n: 5 }, Self { n: 7 }]
    }

    /// Block length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Qudit dimension, equal to the block length.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn distance(&self) -> usize {
        (self.n + 1) / 2
    }

    pub fn correctable_erasures(&self) -> usize {
        self.distance() - 1
    }

    /// Number of polynomial coefficients, equal to the distance.
    pub fn message_len(&self) -> usize {
        self.distance()
    }
}

impl std::fmt::Display for CodeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[[{},1,{}]]_{}", self.n, self.distance(), self.n)
    }
}

/// Logical amplitudes alpha_0..alpha_{D-1} of the transmitted qudit.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector {
    amps: Vec<C64>,
}

impl AmplitudeVector {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !((norm - 1.0).abs() <= 1e-12) {
            return Err(Error::Unnormalized(norm));
        }
        Ok(Self { amps })
    }

    /// Rescales any nonzero vector to unit norm.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("amplitude vector has zero norm".into()));
        }
        Self::new(amps.into_iter().map(|a| a / norm).collect())
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::normalized(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn uniform(dim: usize) -> Self {
        let a = 1.0 / (dim as f64).sqrt();
        Self { amps: vec![C64::new(a, 0.0); dim] }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// |alpha_i|^2.
    pub fn weights(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn with_global_phase(&self, theta: f64) -> Self {
        let ph = C64::from_polar(1.0, theta);
        Self { amps: self.amps.iter().map(|a| a * ph).collect() }
    }

    pub fn to_state(&self) -> QuditState {
        QuditState::from_amplitudes(&self.amps).expect("dimension checked at construction")
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.amps.len() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{} amplitudes for qudit dimension {dim}",
                self.amps.len()
            )))
        }
    }
}

/// Evaluations (f(0), ..., f(n-1)) of the polynomial with the given coefficients.
pub fn evaluate(coeffs: &[u32], n: usize) -> Vec<u8> {
    let p = n as u32;
    (0..n as u32)
        .map(|x| coeffs.iter().rev().fold(0, |acc, &c| modp::add(modp::mul(acc, x, p), c, p)) as u8)
        .collect()
}

/// All coefficient vectors of length `len` over Z_dim, in lexicographic order.
pub(crate) fn all_vectors(dim: usize, len: usize) -> impl Iterator<Item = Vec<u32>> {
    (0..dim.pow(len as u32)).map(move |mut i| {
        let mut v = vec![0u32; len];
        for slot in v.iter_mut().rev() {
            *slot = (i % dim) as u32;
            i /= dim;
        }
        v
    })
}

/// Logical codeword |j>_L.
pub fn codeword(code: CodeSpec, j: usize) -> Result<QuditState> {
    if j >= code.dim() {
        return Err(Error::IndexOutOfRange(format!("logical index {j} for {code}")));
    }
    let k = code.message_len();
    let scale = C64::new(1.0 / (code.dim() as f64).powf((k - 1) as f64 / 2.0), 0.0);
    let terms = all_vectors(code.dim(), k - 1).map(|mut c| {
        c.push(j as u32);
        (evaluate(&c, code.n()), scale)
    });
    QuditState::new(code.dim(), code.n(), terms)
}

/// sum_j alpha_j |j>_L.
pub fn encode(code: CodeSpec, alpha: &AmplitudeVector) -> Result<QuditState> {
    alpha.check_dim(code.dim())?;
    let mut terms = Vec::new();
    for (j, &a) in alpha.amplitudes().iter().enumerate() {
        if a.norm() == 0.0 {
            continue;
        }
        terms.extend(codeword(code, j)?.iter().map(|(l, v)| (l.to_vec(), v * a)));
    }
    QuditState::new(code.dim(), code.n(), terms)
}

/// Measures the `lost` qudits in the computational basis and returns the
/// resulting ensemble on the remaining qudits, as (probability, state).
pub fn erase(state: &QuditState, lost: &[usize]) -> Result<Vec<(f64, QuditState)>> {
    let mut sorted = lost.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut ensemble = vec![(1.0, state.clone())];
    for &q in sorted.iter().rev() {
        let mut next = Vec::new();
        for (p, s) in ensemble {
            for b in s.measure_and_branch(q)? {
                next.push((p * b.probability, b.state));
            }
        }
        ensemble = next;
    }
    Ok(ensemble)
}

/// Linear structure of the states a decoder sees on its `s` input qudits.
///
/// A message vector c in Z_D^k is held as the digits `generator * c`. Row 0 of
/// `coordinates` reads off the logical index of c; the remaining rows are
/// gauge coordinates that the decoder measures and discards. Together they
/// must form an invertible k x k matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivorLayout {
    dim: usize,
    generator: Matrix,
    coordinates: Matrix,
}

impl SurvivorLayout {
    pub fn new(dim: usize, generator: Matrix, coordinates: Matrix) -> Result<Self> {
        let p = dim as u32;
        let k = coordinates.len();
        if k < 2 || coordinates.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("coordinate map must be square with k >= 2".into()));
        }
        if generator.len() < k || generator.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(format!(
                "generator must have at least {k} rows of length {k}"
            )));
        }
        if modp::rank(&generator, p) < k {
            return Err(Error::InvalidArgument("survivor generator has deficient rank".into()));
        }
        if modp::det(&coordinates, p) == 0 {
            return Err(Error::InvalidArgument("coordinate map is singular".into()));
        }
        Ok(Self { dim, generator, coordinates })
    }

    /// Layout of the genuine code restricted to the qudits in `used`.
    pub fn for_code(code: CodeSpec, used: &[usize]) -> Result<Self> {
        let n = code.n();
        let k = code.message_len();
        let p = n as u32;
        check_used(code, used)?;
        let row_at = |x: u32| (0..k as u32).map(|e| modp::pow(x, e, p)).collect::<Vec<u32>>();
        let generator: Matrix = used.iter().map(|&q| row_at(q as u32)).collect();
        let mut coordinates: Matrix = vec![(0..k).map(|e| u32::from(e == k - 1)).collect()];
        let unused = (0..n).filter(|q| !used.contains(q)).map(|q| row_at(q as u32));
        let coefficient_rows = (0..k).map(|e| (0..k).map(|i| u32::from(i == e)).collect());
        for row in unused.chain(coefficient_rows) {
            if coordinates.len() == k {
                break;
            }
            let mut trial = coordinates.clone();
            trial.push(row);
            if modp::rank(&trial, p) == trial.len() {
                coordinates = trial;
            }
        }
        Self::new(n, generator, coordinates)
    }

    /// Layout of the offset ensemble sum_m |m 1 + j w>: message (m, j).
    pub fn offset(dim: usize, w: &[u32]) -> Result<Self> {
        let generator = w.iter().map(|&x| vec![1, x % dim as u32]).collect();
        Self::new(dim, generator, vec![vec![0, 1], vec![1, 0]])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_qudits(&self) -> usize {
        self.generator.len()
    }

    pub fn message_len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn generator(&self) -> &Matrix {
        &self.generator
    }

    /// Digits held by the decoder inputs for message vector `c`.
    pub fn digits(&self, c: &[u32]) -> Vec<u8> {
        modp::mat_vec(&self.generator, c, self.dim as u32).into_iter().map(|x| x as u8).collect()
    }

    /// Logical index carried by message vector `c`.
    pub fn logical(&self, c: &[u32]) -> u32 {
        modp::mat_vec(&self.coordinates[..1].to_vec(), c, self.dim as u32)[0]
    }
}

fn check_used(code: CodeSpec, used: &[usize]) -> Result<()> {
    let n = code.n();
    if let Some(&q) = used.iter().find(|&&q| q >= n) {
        return Err(Error::IndexOutOfRange(format!("qudit {q} in a block of {n}")));
    }
    let mut sorted = used.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != used.len() {
        return Err(Error::InvalidArgument(format!("repeated qudit in {used:?}")));
    }
    if used.len() < code.distance() {
        return Err(Error::TooManyErasures { lost: n - used.len(), max: code.correctable_erasures() });
    }
    Ok(())
}

/// Two conformant circuit families; both recover every clean input exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DecoderVariant {
    /// Output on the first input qudit with no correction needed.
    #[default]
    Direct,
    /// Output on the last input qudit, offset by the first gauge digit and
    /// undone by an outcome-conditioned X correction.
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SumGate {
    pub control: usize,
    pub target: usize,
}

/// Generalized Pauli X^a Z^b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PauliCorrection {
    pub a: u8,
    pub b: u8,
}

/// Sum-gate circuit, measurements, and outcome-conditioned corrections.
///
/// Qudit indices are local to the decoder inputs. `measured` lists every
/// qudit except `output`; the `syndrome` subset reads zero on clean inputs,
/// and the correction depends on the remaining `gauge` digits only.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodingCircuit {
    dim: usize,
    num_qudits: usize,
    gates: Vec<SumGate>,
    output: usize,
    measured: Vec<usize>,
    gauge: Vec<usize>,
    syndrome: Vec<usize>,
    corrections: BTreeMap<Vec<u8>, PauliCorrection>,
    /// Overall linear map of the gate sequence, kept for fast application.
    map: Matrix,
}

impl DecodingCircuit {
    pub fn synthesize(layout: &SurvivorLayout, variant: DecoderVariant) -> Result<Self> {
        let d = layout.dim;
        let p = d as u32;
        let s = layout.num_qudits();
        let k = layout.message_len();
        let v = &layout.generator;
        // Complete the generator columns to a basis with unit vectors.
        let mut basis: Matrix = (0..k).map(|c| v.iter().map(|row| row[c]).collect()).collect();
        for e in 0..s {
            if basis.len() == s {
                break;
            }
            let mut trial = basis.clone();
            trial.push((0..s).map(|i| u32::from(i == e)).collect());
            if modp::rank(&trial, p) == trial.len() {
                basis = trial;
            }
        }
        let b: Matrix = (0..s).map(|i| basis.iter().map(|col| col[i]).collect()).collect();
        let b_inv = modp::inverse(&b, p)
            .ok_or_else(|| Error::InvalidArgument("cannot complete survivor basis".into()))?;
        let mut coord = modp::identity(s);
        for i in 0..k {
            coord[i][..k].copy_from_slice(&layout.coordinates[i]);
        }
        // Rows: logical, gauge..., syndrome...
        let mut m = modp::mat_mul(&coord, &b_inv, p);
        let mut row_role: Vec<usize> = (0..s).collect();
        if variant == DecoderVariant::Shifted {
            m.rotate_left(1);
            row_role.rotate_left(1);
        }
        // Fix the determinant by rescaling a gauge row.
        let det = modp::det(&m, p);
        let gauge_row = row_role.iter().position(|&r| r == 1).expect("k >= 2");
        let f = modp::inv(det, p);
        m[gauge_row].iter_mut().for_each(|x| *x = modp::mul(*x, f, p));
        let mut ops = modp::transvection_circuit(&m, p)
            .ok_or_else(|| Error::InvalidArgument("decoder map is not unimodular".into()))?;
        let output = row_role.iter().position(|&r| r == 0).expect("logical row");
        if variant == DecoderVariant::Shifted {
            ops.push(modp::Transvection { target: output, control: gauge_row, coeff: 1 });
            let last = m[gauge_row].clone();
            for (x, g) in m[output].iter_mut().zip(last) {
                *x = modp::add(*x, g, p);
            }
        }
        let gates = ops
            .iter()
            .flat_map(|op| {
                std::iter::repeat(SumGate { control: op.control, target: op.target })
                    .take(op.coeff as usize)
            })
            .collect();
        let measured: Vec<usize> = (0..s).filter(|&q| q != output).collect();
        let gauge: Vec<usize> = (0..s).filter(|&q| (1..k).contains(&row_role[q])).collect();
        let syndrome: Vec<usize> = (0..s).filter(|&q| row_role[q] >= k).collect();
        let mut circuit = Self {
            dim: d,
            num_qudits: s,
            gates,
            output,
            measured,
            gauge,
            syndrome,
            corrections: BTreeMap::new(),
            map: m,
        };
        circuit.corrections = circuit.tabulate_corrections(layout)?;
        Ok(circuit)
    }

    /// Runs the gate portion on every clean input and records the shift
    /// between the output digit and the logical index.
    fn tabulate_corrections(
        &self,
        layout: &SurvivorLayout,
    ) -> Result<BTreeMap<Vec<u8>, PauliCorrection>> {
        let d = self.dim;
        let mut table = BTreeMap::new();
        for c in all_vectors(d, layout.message_len()) {
            let y = self.run_gates(&layout.digits(&c));
            if self.syndrome.iter().any(|&q| y[q] != 0) {
                return Err(Error::InvalidArgument("clean input gives a nonzero syndrome".into()));
            }
            let key: Vec<u8> = self.gauge.iter().map(|&q| y[q]).collect();
            let shift = (y[self.output] as usize + d - layout.logical(&c) as usize) % d;
            let corr = PauliCorrection { a: ((d - shift) % d) as u8, b: 0 };
            if *table.entry(key).or_insert(corr) != corr {
                return Err(Error::InvalidArgument("correction is not a function of the outcome".into()));
            }
        }
        Ok(table)
    }

    /// Applies the gate list to a basis label, gate by gate.
    pub fn run_gates(&self, label: &[u8]) -> Vec<u8> {
        let d = self.dim as u8;
        let mut y = label.to_vec();
        for g in &self.gates {
            y[g.target] = (y[g.target] + y[g.control]) % d;
        }
        y
    }

    /// Same result as [`run_gates`](Self::run_gates) via the compiled linear map.
    pub fn apply_map(&self, label: &[u8]) -> Vec<u8> {
        let x: Vec<u32> = label.iter().map(|&v| v as u32).collect();
        modp::mat_vec(&self.map, &x, self.dim as u32).into_iter().map(|v| v as u8).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_qudits(&self) -> usize {
        self.num_qudits
    }

    pub fn gates(&self) -> &[SumGate] {
        &self.gates
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn measured(&self) -> &[usize] {
        &self.measured
    }

    pub fn gauge(&self) -> &[usize] {
        &self.gauge
    }

    pub fn syndrome(&self) -> &[usize] {
        &self.syndrome
    }

    pub fn corrections(&self) -> &BTreeMap<Vec<u8>, PauliCorrection> {
        &self.corrections
    }

    /// Correction for a post-gate label; syndrome digits are ignored.
    pub fn correction_for(&self, y: &[u8]) -> PauliCorrection {
        let key: Vec<u8> = self.gauge.iter().map(|&q| y[q]).collect();
        self.corrections.get(&key).copied().unwrap_or_default()
    }

    fn accepts(&self, y: &[u8]) -> bool {
        self.syndrome.iter().all(|&q| y[q] == 0)
    }

    fn check_input(&self, dim: usize, num_qudits: usize) -> Result<()> {
        if dim != self.dim || num_qudits != self.num_qudits {
            return Err(Error::DimensionMismatch(format!(
                "circuit takes {} qudits of dim {}, got {num_qudits} of dim {dim}",
                self.num_qudits, self.dim
            )));
        }
        Ok(())
    }

    /// Decodes a pure input. Returns, per measurement outcome, the unnormalized
    /// corrected output amplitudes. With `postselect`, outcomes with a nonzero
    /// syndrome are dropped.
    pub fn decode_pure(&self, state: &QuditState, postselect: bool) -> Result<Vec<Vec<C64>>> {
        self.check_input(state.dim(), state.num_qudits())?;
        let d = self.dim;
        let mut groups: BTreeMap<Vec<u8>, Vec<C64>> = BTreeMap::new();
        for (label, amp) in state.iter() {
            let y = self.apply_map(label);
            if postselect && !self.accepts(&y) {
                continue;
            }
            let key: Vec<u8> = self.measured.iter().map(|&q| y[q]).collect();
            let shift = self.correction_for(&y).a as usize;
            let out = groups.entry(key).or_insert_with(|| vec![C64::default(); d]);
            out[(y[self.output] as usize + shift) % d] += amp;
        }
        Ok(groups.into_values().collect())
    }

    /// Trace-preserving decode: gates, measurement of every non-output qudit,
    /// correction, and re-mixing of all outcomes.
    pub fn decode(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        let (_, out) = self.decode_dense(rho, false)?;
        DensityOperator::from_matrix(self.dim, 1, out)
    }

    /// Error-detecting decode: only outcomes whose syndrome digits read zero
    /// are kept. Returns the acceptance probability and the renormalized
    /// output, or `None` when nothing is accepted.
    pub fn decode_postselected(&self, rho: &DensityOperator) -> Result<(f64, Option<DensityOperator>)> {
        let (acc, out) = self.decode_dense(rho, true)?;
        if acc <= 1e-300 {
            return Ok((0.0, None));
        }
        let out = out / C64::new(acc, 0.0);
        Ok((acc, Some(DensityOperator::from_matrix(self.dim, 1, out)?)))
    }

    fn decode_dense(&self, rho: &DensityOperator, postselect: bool) -> Result<(f64, DMatrix<C64>)> {
        self.check_input(rho.dim(), rho.num_qudits())?;
        let d = self.dim;
        let size = rho.matrix().nrows();
        // Each input index lands on one (outcome key, output digit) pair.
        let mut slots: Vec<Option<(usize, usize)>> = Vec::with_capacity(size);
        let mut keys: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for i in 0..size {
            let label = index_to_label(d, self.num_qudits, i);
            let y = self.apply_map(&label);
            if postselect && !self.accepts(&y) {
                slots.push(None);
                continue;
            }
            let key: Vec<u8> = self.measured.iter().map(|&q| y[q]).collect();
            let next = keys.len();
            let kid = *keys.entry(key).or_insert(next);
            let o = (y[self.output] as usize + self.correction_for(&y).a as usize) % d;
            slots.push(Some((kid, o)));
        }
        let mut out = DMatrix::<C64>::zeros(d, d);
        for i in 0..size {
            let Some((ki, oi)) = slots[i] else { continue };
            for j in 0..size {
                if let Some((kj, oj)) = slots[j] {
                    if ki == kj {
                        out[(oi, oj)] += rho.matrix()[(i, j)];
                    }
                }
            }
        }
        let acc = out.trace().re;
        Ok((acc, out))
    }
}

/// Circuit decoding the genuine code from the qudits that were not lost.
pub fn decoding_circuit(code: CodeSpec, lost: &[usize]) -> Result<DecodingCircuit> {
    if let Some(&q) = lost.iter().find(|&&q| q >= code.n()) {
        return Err(Error::IndexOutOfRange(format!("qudit {q} in a block of {}", code.n())));
    }
    let used: Vec<usize> = (0..code.n()).filter(|q| !lost.contains(q)).collect();
    if code.n() - used.len() > code.correctable_erasures() {
        return Err(Error::TooManyErasures {
            lost: code.n() - used.len(),
            max: code.correctable_erasures(),
        });
    }
    decoding_circuit_for(code, &used, DecoderVariant::Direct)
}

/// Circuit decoding the genuine code from an explicit set of used qudits.
pub fn decoding_circuit_for(
    code: CodeSpec,
    used: &[usize],
    variant: DecoderVariant,
) -> Result<DecodingCircuit> {
    DecodingCircuit::synthesize(&SurvivorLayout::for_code(code, used)?, variant)
}
