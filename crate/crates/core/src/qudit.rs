//! Sparse pure states and small dense density operators for registers of
//! D-level qudits.
//!
//! Basis labels are digit tuples with qudit 0 as the leftmost, most
//! significant digit, so `|3,4,1>` is stored as `[3, 4, 1]`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Amplitudes smaller than this are dropped from sparse states.
const PRUNE: f64 = 1e-15;

/// omega^e with omega = exp(2 pi i / dim).
pub fn omega_pow(dim: usize, e: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * ((e % dim) as f64) / dim as f64)
}

/// Row-major index of a digit label.
pub fn label_to_index(dim: usize, label: &[u8]) -> usize {
    label.iter().fold(0, |acc, &d| acc * dim + d as usize)
}

pub fn index_to_label(dim: usize, num_qudits: usize, mut index: usize) -> Vec<u8> {
    let mut label = vec![0u8; num_qudits];
    for slot in label.iter_mut().rev() {
        *slot = (index % dim) as u8;
        index /= dim;
    }
    label
}

fn check_dim(dim: usize) -> Result<()> {
    if (2..=255).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("qudit dimension {dim} not in 2..=255")))
    }
}

fn check_index(what: &str, index: usize, num_qudits: usize) -> Result<()> {
    if index < num_qudits {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange(format!("{what} {index} with {num_qudits} qudits")))
    }
}

/// A pure state stored as a sparse map from basis labels to amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuditState {
    num_qudits: usize,
    dim: usize,
    amplitudes: BTreeMap<Vec<u8>, C64>,
}

impl QuditState {
    /// Builds a state from (label, amplitude) pairs. Repeated labels add up.
    /// The result is not normalized; see [`QuditState::normalized`].
    pub fn new<I>(dim: usize, num_qudits: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u8>, C64)>,
    {
        check_dim(dim)?;
        let mut amplitudes: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
        for (label, amp) in terms {
            if label.len() != num_qudits {
                return Err(Error::DimensionMismatch(format!(
                    "label {label:?} has {} digits, expected {num_qudits}",
                    label.len()
                )));
            }
            if let Some(d) = label.iter().find(|&&d| d as usize >= dim) {
                return Err(Error::InvalidArgument(format!("digit {d} not below dimension {dim}")));
            }
            *amplitudes.entry(label).or_default() += amp;
        }
        amplitudes.retain(|_, a| a.norm() > PRUNE);
        Ok(Self { num_qudits, dim, amplitudes })
    }

    /// Computational basis state `|label>`.
    pub fn basis(dim: usize, label: &[u8]) -> Result<Self> {
        Self::new(dim, label.len(), [(label.to_vec(), C64::new(1.0, 0.0))])
    }

    /// Single-qudit state sum_k amps[k] |k>.
    pub fn from_amplitudes(amps: &[C64]) -> Result<Self> {
        let dim = amps.len();
        Self::new(dim, 1, amps.iter().enumerate().map(|(k, &a)| (vec![k as u8], a)))
    }

    pub fn num_qudits(&self) -> usize {
        self.num_qudits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nonzero terms in label order.
    pub fn iter(&self) -> impl Iterator<Item = (&[u8], C64)> {
        self.amplitudes.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn amplitude(&self, label: &[u8]) -> C64 {
        self.amplitudes.get(label).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= PRUNE {
            return Err(Error::InvalidArgument("cannot normalize the zero vector".into()));
        }
        let s = 1.0 / n.sqrt();
        let mut out = self.clone();
        out.amplitudes.values_mut().for_each(|a| *a *= s);
        Ok(out)
    }

    /// <self|other>.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.check_same_shape(other)?;
        Ok(self
            .amplitudes
            .iter()
            .filter_map(|(k, a)| other.amplitudes.get(k).map(|b| a.conj() * b))
            .sum())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.num_qudits != other.num_qudits {
            return Err(Error::DimensionMismatch(format!(
                "{} qudits of dim {} vs {} qudits of dim {}",
                self.num_qudits, self.dim, other.num_qudits, other.dim
            )));
        }
        Ok(())
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!("dim {} vs {}", self.dim, other.dim)));
        }
        let terms = self.amplitudes.iter().flat_map(|(ka, a)| {
            other.amplitudes.iter().map(move |(kb, b)| {
                let mut label = ka.clone();
                label.extend_from_slice(kb);
                (label, a * b)
            })
        });
        Self::new(self.dim, self.num_qudits + other.num_qudits, terms)
    }

    /// Applies the map `label -> f(label)` and multiplies by `phase(label)`.
    /// `f` must be a bijection on labels.
    fn map_labels<F, P>(&self, f: F, phase: P) -> Self
    where
        F: Fn(&mut [u8]),
        P: Fn(&[u8]) -> C64,
    {
        let mut amplitudes = BTreeMap::new();
        for (k, &a) in &self.amplitudes {
            let p = phase(k);
            let mut label = k.clone();
            f(&mut label);
            amplitudes.insert(label, a * p);
        }
        Self { num_qudits: self.num_qudits, dim: self.dim, amplitudes }
    }

    /// Sum-mod-D gate: the target digit becomes target + control mod D.
    pub fn apply_sum_mod_gate(&self, control: usize, target: usize) -> Result<Self> {
        check_index("control", control, self.num_qudits)?;
        check_index("target", target, self.num_qudits)?;
        if control == target {
            return Err(Error::InvalidArgument("control and target coincide".into()));
        }
        let d = self.dim;
        Ok(self.map_labels(
            |l| l[target] = ((l[target] as usize + l[control] as usize) % d) as u8,
            |_| C64::new(1.0, 0.0),
        ))
    }

    /// Applies X^a Z^b to one qudit, with X|k> = |k+1> and Z|k> = omega^k |k>.
    pub fn apply_generalized_pauli(&self, qudit: usize, a: usize, b: usize) -> Result<Self> {
        check_index("qudit", qudit, self.num_qudits)?;
        check_exponents(self.dim, a, b)?;
        let d = self.dim;
        Ok(self.map_labels(
            |l| l[qudit] = ((l[qudit] as usize + a) % d) as u8,
            |l| omega_pow(d, b * l[qudit] as usize),
        ))
    }

    /// Measures one qudit in the computational basis. Each branch carries the
    /// normalized state of the remaining qudits.
    pub fn measure_and_branch(&self, qudit: usize) -> Result<Vec<Branch>> {
        check_index("qudit", qudit, self.num_qudits)?;
        let total = self.norm_sqr();
        if total <= PRUNE {
            return Err(Error::InvalidArgument("cannot measure the zero vector".into()));
        }
        let mut parts: BTreeMap<u8, Vec<(Vec<u8>, C64)>> = BTreeMap::new();
        for (k, &a) in &self.amplitudes {
            let mut rest = k.clone();
            let digit = rest.remove(qudit);
            parts.entry(digit).or_default().push((rest, a));
        }
        parts
            .into_iter()
            .map(|(outcome, terms)| {
                let state = Self::new(self.dim, self.num_qudits - 1, terms)?;
                let p = state.norm_sqr();
                Ok(Branch { outcome, probability: p / total, state: state.normalized()? })
            })
            .collect()
    }

    /// Dense amplitude vector in row-major label order.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut v = vec![C64::default(); self.dim.pow(self.num_qudits as u32)];
        for (k, &a) in &self.amplitudes {
            v[label_to_index(self.dim, k)] = a;
        }
        v
    }

    pub fn to_density(&self) -> DensityOperator {
        let v = nalgebra::DVector::from_vec(self.to_dense());
        DensityOperator {
            num_qudits: self.num_qudits,
            dim: self.dim,
            matrix: &v * v.adjoint(),
        }
    }
}

fn check_exponents(dim: usize, a: usize, b: usize) -> Result<()> {
    if a < dim && b < dim {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("Pauli exponents ({a}, {b}) must be below {dim}")))
    }
}

/// One outcome of a computational-basis measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub outcome: u8,
    pub probability: f64,
    pub state: QuditState,
}

/// Dense density operator on `num_qudits` qudits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    num_qudits: usize,
    dim: usize,
    matrix: DMatrix<C64>,
}

impl DensityOperator {
    pub fn from_matrix(dim: usize, num_qudits: usize, matrix: DMatrix<C64>) -> Result<Self> {
        check_dim(dim)?;
        let size = dim.pow(num_qudits as u32);
        if matrix.nrows() != size || matrix.ncols() != size {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for {num_qudits} qudits of dim {dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { num_qudits, dim, matrix })
    }

    pub fn from_pure(state: &QuditState) -> Self {
        state.to_density()
    }

    /// I / D^n.
    pub fn maximally_mixed(dim: usize, num_qudits: usize) -> Self {
        let size = dim.pow(num_qudits as u32);
        Self {
            num_qudits,
            dim,
            matrix: DMatrix::identity(size, size) * C64::new(1.0 / size as f64, 0.0),
        }
    }

    /// Convex combination sum_i w_i rho_i.
    pub fn mixture(parts: &[(f64, DensityOperator)]) -> Result<Self> {
        let (_, first) = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let mut matrix = DMatrix::zeros(first.matrix.nrows(), first.matrix.ncols());
        for (w, rho) in parts {
            if rho.dim != first.dim || rho.num_qudits != first.num_qudits {
                return Err(Error::DimensionMismatch("mixture components differ in shape".into()));
            }
            matrix += &rho.matrix * C64::new(*w, 0.0);
        }
        Ok(Self { num_qudits: first.num_qudits, dim: first.dim, matrix })
    }

    pub fn num_qudits(&self) -> usize {
        self.num_qudits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Largest deviation from Hermiticity, max |rho_ij - conj(rho_ji)|.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Checks unit trace, Hermiticity and positivity within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidArgument(format!("trace {tr} differs from 1")));
        }
        let herm = self.hermiticity_error();
        if herm > tol {
            return Err(Error::InvalidArgument(format!("not Hermitian (error {herm:e})")));
        }
        if let Some(&min) = self.eigenvalues().first() {
            if min < -tol {
                return Err(Error::InvalidArgument(format!("negative eigenvalue {min:e}")));
            }
        }
        Ok(())
    }

    fn check_qudit(&self, q: usize) -> Result<()> {
        check_index("qudit", q, self.num_qudits)
    }

    /// Applies a basis permutation P: rho -> P rho P^dagger, where `perm`
    /// sends label index i to perm[i] with phase phases[i].
    fn conjugate_monomial(&self, perm: &[usize], phases: &[C64]) -> Self {
        let n = self.matrix.nrows();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                out[(perm[i], perm[j])] = phases[i] * self.matrix[(i, j)] * phases[j].conj();
            }
        }
        Self { num_qudits: self.num_qudits, dim: self.dim, matrix: out }
    }

    fn labels(&self) -> impl Iterator<Item = Vec<u8>> + '_ {
        (0..self.matrix.nrows()).map(|i| index_to_label(self.dim, self.num_qudits, i))
    }

    pub fn apply_generalized_pauli(&self, qudit: usize, a: usize, b: usize) -> Result<Self> {
        self.check_qudit(qudit)?;
        check_exponents(self.dim, a, b)?;
        let d = self.dim;
        let (perm, phases): (Vec<usize>, Vec<C64>) = self
            .labels()
            .map(|mut l| {
                let phase = omega_pow(d, b * l[qudit] as usize);
                l[qudit] = ((l[qudit] as usize + a) % d) as u8;
                (label_to_index(d, &l), phase)
            })
            .unzip();
        Ok(self.conjugate_monomial(&perm, &phases))
    }

    pub fn apply_sum_mod_gate(&self, control: usize, target: usize) -> Result<Self> {
        self.check_qudit(control)?;
        self.check_qudit(target)?;
        if control == target {
            return Err(Error::InvalidArgument("control and target coincide".into()));
        }
        let d = self.dim;
        let perm: Vec<usize> = self
            .labels()
            .map(|mut l| {
                l[target] = ((l[target] as usize + l[control] as usize) % d) as u8;
                label_to_index(d, &l)
            })
            .collect();
        let ones = vec![C64::new(1.0, 0.0); perm.len()];
        Ok(self.conjugate_monomial(&perm, &ones))
    }

    /// Traces out the qudits in `subset`; the remaining qudits keep their order.
    pub fn partial_trace(&self, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::InvalidArgument("partial trace over an empty subset".into()));
        }
        let mut traced = vec![false; self.num_qudits];
        for &q in subset {
            self.check_qudit(q)?;
            traced[q] = true;
        }
        let keep: Vec<usize> = (0..self.num_qudits).filter(|&q| !traced[q]).collect();
        let gone: Vec<usize> = (0..self.num_qudits).filter(|&q| traced[q]).collect();
        let d = self.dim;
        let keep_size = d.pow(keep.len() as u32);
        let gone_size = d.pow(gone.len() as u32);
        let full_index = |k: &[u8], g: &[u8]| {
            let mut label = vec![0u8; self.num_qudits];
            keep.iter().zip(k).for_each(|(&q, &v)| label[q] = v);
            gone.iter().zip(g).for_each(|(&q, &v)| label[q] = v);
            label_to_index(d, &label)
        };
        let mut out = DMatrix::zeros(keep_size, keep_size);
        for g in 0..gone_size {
            let gl = index_to_label(d, gone.len(), g);
            let rows: Vec<usize> = (0..keep_size)
                .map(|k| full_index(&index_to_label(d, keep.len(), k), &gl))
                .collect();
            for (i, &ri) in rows.iter().enumerate() {
                for (j, &rj) in rows.iter().enumerate() {
                    out[(i, j)] += self.matrix[(ri, rj)];
                }
            }
        }
        Ok(Self { num_qudits: keep.len(), dim: d, matrix: out })
    }
}

/// Largest entry modulus, handy for comparing matrices.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// <psi| rho |psi>, with numerical noise up to 1e-10 clamped into [0, 1].
pub fn fidelity(target: &QuditState, rho: &DensityOperator) -> Result<f64> {
    if target.dim() != rho.dim() || target.num_qudits() != rho.num_qudits() {
        return Err(Error::DimensionMismatch(format!(
            "target has {} qudits of dim {}, state has {} of dim {}",
            target.num_qudits(),
            target.dim(),
            rho.num_qudits(),
            rho.dim()
        )));
    }
    let v = nalgebra::DVector::from_vec(target.to_dense());
    let f = (v.adjoint() * rho.matrix() * &v)[(0, 0)].re;
    if f < -1e-10 || f > 1.0 + 1e-10 {
        return Err(Error::InvalidArgument(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f.clamp(0.0, 1.0))
}
