//! Physical layer: fiber transmissivity, memory depolarization, and the
//! depolarizing map applied to stored qudits.

use nalgebra::DMatrix;

use crate::error::{check_probability, Error, Result};
use crate::qudit::{index_to_label, label_to_index, DensityOperator, C64};

pub const DEFAULT_ATTENUATION_LENGTH_KM: f64 = 22.0;
/// Speed of light in fiber.
pub const DEFAULT_LIGHT_SPEED_KM_PER_S: f64 = 2.0e5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    attenuation_length_km: f64,
    light_speed_km_per_s: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            attenuation_length_km: DEFAULT_ATTENUATION_LENGTH_KM,
            light_speed_km_per_s: DEFAULT_LIGHT_SPEED_KM_PER_S,
        }
    }
}

impl PhysicalConstants {
    pub fn new(attenuation_length_km: f64, light_speed_km_per_s: f64) -> Result<Self> {
        for (name, v) in [
            ("attenuation length", attenuation_length_km),
            ("light speed", light_speed_km_per_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { attenuation_length_km, light_speed_km_per_s })
    }

    pub fn attenuation_length_km(&self) -> f64 {
        self.attenuation_length_km
    }

    pub fn light_speed_km_per_s(&self) -> f64 {
        self.light_speed_km_per_s
    }

    /// Time of flight over `length_km`, in seconds.
    pub fn delay_s(&self, length_km: f64) -> f64 {
        length_km / self.light_speed_km_per_s
    }
}

/// Path lengths in km, ordered from shortest to longest.
///
/// Two or three paths describe an aggregation layout; a single path is also
/// accepted so that planners can fall back to plain single-link transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    lengths_km: Vec<f64>,
}

impl PathSet {
    pub fn new(lengths_km: Vec<f64>) -> Result<Self> {
        if lengths_km.is_empty() || lengths_km.len() > 3 {
            return Err(Error::InvalidArgument(format!(
                "expected 1 to 3 paths, got {}",
                lengths_km.len()
            )));
        }
        if let Some(l) = lengths_km.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidArgument(format!("path length {l} km is not a nonnegative number")));
        }
        if lengths_km.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "path lengths must be strictly increasing, got {lengths_km:?}"
            )));
        }
        Ok(Self { lengths_km })
    }

    pub fn lengths_km(&self) -> &[f64] {
        &self.lengths_km
    }

    pub fn len(&self) -> usize {
        self.lengths_km.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths_km.is_empty()
    }
}

/// Quantum memory with coherence time T2 (seconds, possibly infinite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryModel {
    coherence_time_s: f64,
}

impl MemoryModel {
    pub fn new(coherence_time_s: f64) -> Result<Self> {
        if coherence_time_s.is_nan() || coherence_time_s <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "coherence time must be positive, got {coherence_time_s}"
            )));
        }
        Ok(Self { coherence_time_s })
    }

    pub fn ideal() -> Self {
        Self { coherence_time_s: f64::INFINITY }
    }

    /// No memory at all: anything stored for a positive time is lost to
    /// full depolarization (T2 = 0).
    pub fn none() -> Self {
        Self { coherence_time_s: 0.0 }
    }

    pub fn coherence_time_s(&self) -> f64 {
        self.coherence_time_s
    }

    /// Depolarization probability after storing for `t_s` seconds.
    pub fn depolarization_after(&self, t_s: f64) -> f64 {
        if self.coherence_time_s.is_infinite() || t_s == 0.0 {
            0.0
        } else {
            -(-t_s / self.coherence_time_s).exp_m1()
        }
    }
}

/// Survival probability e^(-L/L_att) of a qudit sent over `length_km`.
pub fn transmissivity(length_km: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(length_km >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative length {length_km} km")));
    }
    Ok((-length_km / constants.attenuation_length_km).exp())
}

/// p_d = 1 - exp(-(dL/c)/T2) for a qudit waiting out a path-length difference.
pub fn depolarization_probability(
    delta_l_km: f64,
    coherence_time_s: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if !(delta_l_km >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative length difference {delta_l_km} km")));
    }
    let memory = MemoryModel::new(coherence_time_s)?;
    Ok(memory.depolarization_after(constants.delay_s(delta_l_km)))
}

/// (1-p) rho + p I_q/D (x) Tr_q(rho).
pub fn apply_depolarizing(rho: &DensityOperator, qudit: usize, p: f64) -> Result<DensityOperator> {
    check_probability("p_d", p)?;
    let n = rho.num_qudits();
    if qudit >= n {
        return Err(Error::IndexOutOfRange(format!("qudit {qudit} with {n} qudits")));
    }
    let d = rho.dim();
    let size = rho.matrix().nrows();
    let m = rho.matrix();
    let labels: Vec<Vec<u8>> = (0..size).map(|i| index_to_label(d, n, i)).collect();
    let mut out = DMatrix::zeros(size, size);
    let mut li = vec![0u8; n];
    let mut lj = vec![0u8; n];
    for i in 0..size {
        for j in 0..size {
            let mut v = m[(i, j)] * (1.0 - p);
            if p > 0.0 && labels[i][qudit] == labels[j][qudit] {
                li.copy_from_slice(&labels[i]);
                lj.copy_from_slice(&labels[j]);
                let mut s = C64::default();
                for k in 0..d as u8 {
                    li[qudit] = k;
                    lj[qudit] = k;
                    s += m[(label_to_index(d, &li), label_to_index(d, &lj))];
                }
                v += s * (p / d as f64);
            }
            out[(i, j)] = v;
        }
    }
    DensityOperator::from_matrix(d, n, out)
}

/// Per-path transmissivities plus pairwise depolarization probabilities.
///
/// `depolarization(i, j)` with i < j is the probability that a qudit from path
/// i, stored until the arrival of path j, is depolarized.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPoint {
    transmissivities: Vec<f64>,
    pair_depolarization: Vec<Vec<f64>>,
}

impl ChannelPoint {
    /// `pair_depolarization[i][j]` is read for i < j only.
    pub fn new(transmissivities: Vec<f64>, pair_depolarization: Vec<Vec<f64>>) -> Result<Self> {
        let k = transmissivities.len();
        if k == 0 || k > 3 {
            return Err(Error::InvalidArgument(format!("expected 1 to 3 paths, got {k}")));
        }
        for &p in &transmissivities {
            check_probability("transmissivity", p)?;
        }
        if pair_depolarization.len() != k || pair_depolarization.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(format!("depolarization table must be {k}x{k}")));
        }
        for i in 0..k {
            for j in i + 1..k {
                check_probability("p_d", pair_depolarization[i][j])?;
            }
        }
        Ok(Self { transmissivities, pair_depolarization })
    }

    /// Two paths sharing one p_d.
    pub fn two_path(p1: f64, p2: f64, p_d: f64) -> Result<Self> {
        Self::new(vec![p1, p2], vec![vec![0.0, p_d], vec![0.0, 0.0]])
    }

    pub fn three_path(p: [f64; 3], p_d12: f64, p_d13: f64, p_d23: f64) -> Result<Self> {
        Self::new(
            p.to_vec(),
            vec![vec![0.0, p_d12, p_d13], vec![0.0, 0.0, p_d23], vec![0.0; 3]],
        )
    }

    pub fn single_path(p: f64) -> Result<Self> {
        Self::new(vec![p], vec![vec![0.0]])
    }

    /// Derives the point from physical lengths and a memory.
    pub fn from_physical(
        paths: &PathSet,
        memory: &MemoryModel,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        let l = paths.lengths_km();
        let p = l
            .iter()
            .map(|&x| transmissivity(x, constants))
            .collect::<Result<Vec<_>>>()?;
        let k = l.len();
        let mut pd = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in i + 1..k {
                pd[i][j] = memory.depolarization_after(constants.delay_s(l[j] - l[i]));
            }
        }
        Self::new(p, pd)
    }

    pub fn num_paths(&self) -> usize {
        self.transmissivities.len()
    }

    pub fn transmissivities(&self) -> &[f64] {
        &self.transmissivities
    }

    pub fn transmissivity(&self, path: usize) -> f64 {
        self.transmissivities[path]
    }

    pub fn depolarization(&self, stored_path: usize, decode_path: usize) -> f64 {
        if stored_path >= decode_path {
            0.0
        } else {
            self.pair_depolarization[stored_path][decode_path]
        }
    }
}
