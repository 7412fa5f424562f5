//! Sweeps and searches over aggregation scenarios: fidelity curves,
//! crossings between layouts, 50% threshold distances, best layout choice,
//! and per-loss-count decompositions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::analytic::{
    analytic_fidelity, printed_table, ConfigurationLabel, DephasingFactors, FidelityReport,
    GBackends,
};
use crate::channel::{ChannelPoint, MemoryModel, PathSet, PhysicalConstants};
use crate::codes::{AmplitudeVector, CodeSpec};
use crate::error::{Error, Result};
use crate::oracle::{Oracle, OracleOptions};

/// Everything needed to evaluate one layout on one physical link.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationScenario {
    label: ConfigurationLabel,
    paths: PathSet,
    memory: MemoryModel,
    constants: PhysicalConstants,
    alpha: AmplitudeVector,
}

impl AggregationScenario {
    pub fn new(
        label: ConfigurationLabel,
        paths: PathSet,
        memory: MemoryModel,
        constants: PhysicalConstants,
        alpha: AmplitudeVector,
    ) -> Result<Self> {
        if paths.len() != label.num_paths() {
            return Err(Error::DimensionMismatch(format!(
                "layout {label} needs {} paths, got {}",
                label.num_paths(),
                paths.len()
            )));
        }
        alpha.check_dim(label.code().dim())?;
        Ok(Self { label, paths, memory, constants, alpha })
    }

    /// Default constants and uniform amplitudes.
    pub fn with_defaults(label: ConfigurationLabel, lengths_km: Vec<f64>, memory: MemoryModel) -> Result<Self> {
        let alpha = AmplitudeVector::uniform(label.code().dim());
        Self::new(label, PathSet::new(lengths_km)?, memory, PhysicalConstants::default(), alpha)
    }

    pub fn label(&self) -> &ConfigurationLabel {
        &self.label
    }

    pub fn code(&self) -> CodeSpec {
        self.label.code()
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    pub fn memory(&self) -> MemoryModel {
        self.memory
    }

    pub fn constants(&self) -> PhysicalConstants {
        self.constants
    }

    pub fn alpha(&self) -> &AmplitudeVector {
        &self.alpha
    }

    pub fn channel_point(&self) -> Result<ChannelPoint> {
        ChannelPoint::from_physical(&self.paths, &self.memory, &self.constants)
    }

    pub fn with_label(&self, label: ConfigurationLabel) -> Result<Self> {
        Self::new(label, self.paths.clone(), self.memory, self.constants, self.alpha.clone())
    }

    pub fn with_alpha(&self, alpha: AmplitudeVector) -> Result<Self> {
        Self::new(self.label.clone(), self.paths.clone(), self.memory, self.constants, alpha)
    }

    pub fn with_t2(&self, t2_s: f64) -> Result<Self> {
        let memory = if t2_s == 0.0 { MemoryModel::none() } else { MemoryModel::new(t2_s)? };
        Ok(Self { memory, ..self.clone() })
    }

    /// Replaces the length of path `index` (0-based).
    pub fn with_length(&self, index: usize, length_km: f64) -> Result<Self> {
        let mut l = self.paths.lengths_km().to_vec();
        let slot = l.get_mut(index).ok_or_else(|| {
            Error::IndexOutOfRange(format!("path {index} of {}", self.paths.len()))
        })?;
        *slot = length_km;
        Ok(Self { paths: PathSet::new(l)?, ..self.clone() })
    }
}

/// Route used to evaluate fidelities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Backend {
    /// Closed forms, with the simulator for layouts that have none.
    #[default]
    Analytic,
    Oracle,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Analytic => "analytic",
            Backend::Oracle => "oracle",
        })
    }
}

/// Evaluates scenarios, caching calibrated factors and simulators.
#[derive(Debug, Default)]
pub struct Evaluator {
    backend: Backend,
    g_backends: GBackends,
    options: OracleOptions,
    factors: Mutex<Vec<Arc<DephasingFactors>>>,
    oracles: Mutex<Vec<(AmplitudeVector, Arc<Oracle>)>>,
}

impl Evaluator {
    pub fn new(backend: Backend, g_backends: GBackends, options: OracleOptions) -> Self {
        Self { backend, g_backends, options, ..Default::default() }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn g_backends(&self) -> GBackends {
        self.g_backends
    }

    pub fn fidelity(&self, scenario: &AggregationScenario) -> Result<FidelityReport> {
        self.fidelity_at(scenario.label(), scenario.alpha(), &scenario.channel_point()?)
    }

    /// Fidelity at an explicit channel point.
    pub fn fidelity_at(
        &self,
        label: &ConfigurationLabel,
        alpha: &AmplitudeVector,
        point: &ChannelPoint,
    ) -> Result<FidelityReport> {
        if self.backend == Backend::Analytic && printed_table(label).is_some() {
            let factors = self.factors_for(alpha)?;
            return analytic_fidelity(label, point, &factors);
        }
        self.oracle_for(label, alpha)?.fidelity(point)
    }

    fn factors_for(&self, alpha: &AmplitudeVector) -> Result<Arc<DephasingFactors>> {
        let mut cache = self.factors.lock().expect("cache lock");
        if let Some(f) = cache.iter().find(|f| f.alpha() == alpha) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(DephasingFactors::new(alpha.clone(), self.g_backends)?);
        cache.push(Arc::clone(&f));
        Ok(f)
    }

    fn oracle_for(&self, label: &ConfigurationLabel, alpha: &AmplitudeVector) -> Result<Arc<Oracle>> {
        let mut cache = self.oracles.lock().expect("cache lock");
        if let Some((_, o)) = cache.iter().find(|(a, o)| a == alpha && o.label() == label) {
            return Ok(Arc::clone(o));
        }
        let o = Arc::new(Oracle::new(label, alpha, self.options)?);
        cache.push((alpha.clone(), Arc::clone(&o)));
        Ok(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    /// Memory coherence time, seconds.
    T2,
    /// Length of the second path, km.
    L2,
    /// Length of the third path, km.
    L3,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::T2 => "t2_s",
            SweepParameter::L2 => "l2_km",
            SweepParameter::L3 => "l3_km",
        }
    }

    fn apply(&self, scenario: &AggregationScenario, value: f64) -> Result<AggregationScenario> {
        match self {
            SweepParameter::T2 => scenario.with_t2(value),
            SweepParameter::L2 => scenario.with_length(1, value),
            SweepParameter::L3 => scenario.with_length(2, value),
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `count` points from `lo` to `hi` inclusive, evenly spaced in log scale.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || count < 2 {
        return Err(Error::InvalidArgument(format!("bad log grid {lo}:{hi}:{count}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| match i {
            0 => lo,
            _ if i == count - 1 => hi,
            _ => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
        })
        .collect())
}

pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) || count < 2 {
        return Err(Error::InvalidArgument(format!("bad grid {lo}:{hi}:{count}")));
    }
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    /// (layout name, fidelity per grid point).
    pub series: Vec<(String, Vec<f64>)>,
    pub metadata: Vec<(String, String)>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be nonempty, finite and strictly increasing".into()));
    }
    Ok(())
}

/// One fidelity series per scenario over `grid`.
pub fn sweep(
    evaluator: &Evaluator,
    scenarios: &[AggregationScenario],
    parameter: SweepParameter,
    grid: &[f64],
) -> Result<SweepResult> {
    check_grid(grid)?;
    let first = scenarios
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to sweep".into()))?;
    let mut series = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let values = grid
            .iter()
            .map(|&x| Ok(evaluator.fidelity(&parameter.apply(s, x)?)?.fidelity))
            .collect::<Result<Vec<_>>>()?;
        series.push((s.label().to_string(), values));
    }
    let c = first.constants();
    let metadata = vec![
        ("code".into(), first.code().to_string()),
        ("attenuation_length_km".into(), c.attenuation_length_km().to_string()),
        ("light_speed_km_per_s".into(), c.light_speed_km_per_s().to_string()),
        ("backend".into(), evaluator.backend().to_string()),
    ];
    Ok(SweepResult { parameter, grid: grid.to_vec(), series, metadata })
}

const CROSSING_SCAN_POINTS: usize = 64;

/// Value of `parameter` in `bracket` where the two fidelities are equal.
///
/// The bracket is scanned at 64 points first (log-spaced for T2); exactly one
/// sign change is required. Bisection then runs to a relative width of 1e-13.
pub fn find_crossing(
    evaluator: &Evaluator,
    a: &AggregationScenario,
    b: &AggregationScenario,
    parameter: SweepParameter,
    bracket: (f64, f64),
) -> Result<f64> {
    let (lo, hi) = bracket;
    let log = parameter == SweepParameter::T2;
    let grid = if log {
        log_grid(lo, hi, CROSSING_SCAN_POINTS)?
    } else {
        linear_grid(lo, hi, CROSSING_SCAN_POINTS)?
    };
    let diff = |x: f64| -> Result<f64> {
        let fa = evaluator.fidelity(&parameter.apply(a, x)?)?.fidelity;
        let fb = evaluator.fidelity(&parameter.apply(b, x)?)?.fidelity;
        Ok(fa - fb)
    };
    let values = grid.iter().map(|&x| diff(x)).collect::<Result<Vec<_>>>()?;
    if let Some(i) = values.iter().position(|&v| v == 0.0) {
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::NoSignChange { lo, hi });
        }
        if values.iter().filter(|&&v| v == 0.0).count() == 1 {
            let others: Vec<f64> = values.iter().copied().filter(|&v| v != 0.0).collect();
            if others.windows(2).all(|w| w[0].signum() == w[1].signum()) {
                return Ok(grid[i]);
            }
        }
    }
    // Sign flips between consecutive nonzero samples.
    let nonzero: Vec<usize> = (0..grid.len()).filter(|&i| values[i] != 0.0).collect();
    let flips: Vec<(usize, usize)> = nonzero
        .windows(2)
        .filter(|w| values[w[0]].signum() != values[w[1]].signum())
        .map(|w| (w[0], w[1]))
        .collect();
    let (i0, i1) = match flips.as_slice() {
        [] => return Err(Error::NoSignChange { lo, hi }),
        [one] => *one,
        more => return Err(Error::MultipleCrossings { lo, hi, count: more.len() }),
    };
    let (mut x0, mut x1, mut f0) = (grid[i0], grid[i1], values[i0]);
    for _ in 0..200 {
        let mid = if log { (x0 * x1).sqrt() } else { 0.5 * (x0 + x1) };
        if (x1 - x0) <= 1e-13 * mid.abs() || mid == x0 || mid == x1 {
            break;
        }
        let fm = diff(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == f0.signum() {
            x0 = mid;
            f0 = fm;
        } else {
            x1 = mid;
        }
    }
    Ok(if log { (x0 * x1).sqrt() } else { 0.5 * (x0 + x1) })
}

/// Every pairwise crossing among `scenarios` in `bracket`.
pub fn pairwise_crossings(
    evaluator: &Evaluator,
    scenarios: &[AggregationScenario],
    parameter: SweepParameter,
    bracket: (f64, f64),
) -> Vec<(String, String, Result<f64>)> {
    let mut out = Vec::new();
    for i in 0..scenarios.len() {
        for j in i + 1..scenarios.len() {
            out.push((
                scenarios[i].label().to_string(),
                scenarios[j].label().to_string(),
                find_crossing(evaluator, &scenarios[i], &scenarios[j], parameter, bracket),
            ));
        }
    }
    out
}

/// Length of the last path at which the fidelity drops to `target`, with the
/// memory coherence time fixed at `t2_s`.
pub fn find_threshold_distance(
    evaluator: &Evaluator,
    scenario: &AggregationScenario,
    t2_s: f64,
    target: f64,
) -> Result<f64> {
    let s = scenario.with_t2(t2_s)?;
    let last = s.paths().len() - 1;
    let floor = if last == 0 { 0.0 } else { s.paths().lengths_km()[last - 1] };
    let f = |l: f64| -> Result<f64> { Ok(evaluator.fidelity(&s.with_length(last, l)?)?.fidelity - target) };
    let mut lo = if last == 0 { 0.0 } else { floor + floor.abs().max(1.0) * 1e-9 };
    let start = f(lo)?;
    if start <= 0.0 {
        return Err(Error::NoThreshold(format!(
            "fidelity {:.6} is already at or below {target} at {lo} km",
            start + target
        )));
    }
    let mut hi = lo + 1.0;
    loop {
        if f(hi)? < 0.0 {
            break;
        }
        if hi > 1e5 {
            return Err(Error::NoThreshold(format!(
                "fidelity stays above {target} for every length of the last path"
            )));
        }
        lo = hi;
        hi = floor + 2.0 * (hi - floor);
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Compositions of `n` into `parts` parts, largest first part first.
pub fn assignments(n: usize, parts: usize, allow_empty: bool) -> Vec<Vec<usize>> {
    let min = usize::from(!allow_empty);
    if parts == 1 {
        return if n >= min { vec![vec![n]] } else { vec![] };
    }
    let mut out = Vec::new();
    let top = n.saturating_sub(min * (parts - 1));
    for first in (min..=top).rev() {
        for mut rest in assignments(n - first, parts - 1, allow_empty) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Layout with the highest fidelity over all ways of splitting the block
/// across `paths`. Ties go to the layout with more qudits on shorter paths.
pub fn best_assignment(
    evaluator: &Evaluator,
    code: CodeSpec,
    paths: &PathSet,
    memory: MemoryModel,
    constants: PhysicalConstants,
    alpha: &AmplitudeVector,
    allow_empty: bool,
) -> Result<(ConfigurationLabel, FidelityReport)> {
    let mut best: Option<(ConfigurationLabel, FidelityReport)> = None;
    for a in assignments(code.n(), paths.len(), allow_empty) {
        let label = ConfigurationLabel::with_empty_paths(code, a)?;
        let s = AggregationScenario::new(label.clone(), paths.clone(), memory, constants, alpha.clone())?;
        let r = evaluator.fidelity(&s)?;
        if best.as_ref().map_or(true, |(_, b)| r.fidelity > b.fidelity + 1e-12) {
            best = Some((label, r));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no admissible assignment".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossDecomposition {
    pub grid: Vec<f64>,
    /// Total lost qudits -> contribution per grid point.
    pub by_lost: BTreeMap<usize, Vec<f64>>,
    pub residual: Vec<f64>,
    pub total: Vec<f64>,
}

/// Splits the fidelity over a T2 grid by the total number of lost qudits.
pub fn loss_count_decomposition(
    evaluator: &Evaluator,
    scenario: &AggregationScenario,
    t2_grid: &[f64],
) -> Result<LossDecomposition> {
    check_grid(t2_grid)?;
    let reports = t2_grid
        .iter()
        .map(|&t| evaluator.fidelity(&scenario.with_t2(t)?))
        .collect::<Result<Vec<_>>>()?;
    let mut by_lost: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &reports {
        for t in &r.terms {
            by_lost.entry(t.total_lost()).or_insert_with(|| vec![0.0; t2_grid.len()]);
        }
    }
    for (i, r) in reports.iter().enumerate() {
        for (lost, c) in r.contributions_by_total_lost() {
            by_lost.get_mut(&lost).expect("key inserted above")[i] = c;
        }
    }
    Ok(LossDecomposition {
        grid: t2_grid.to_vec(),
        by_lost,
        residual: reports.iter().map(|r| r.residual).collect(),
        total: reports.iter().map(|r| r.fidelity).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(n: usize, a: &[usize], l: &[f64], t2: f64) -> AggregationScenario {
        let label = ConfigurationLabel::new(CodeSpec::new(n).unwrap(), a.to_vec()).unwrap();
        AggregationScenario::with_defaults(label, l.to_vec(), MemoryModel::new(t2).unwrap()).unwrap()
    }

    #[test]
    fn scenario_validation() {
        let label = ConfigurationLabel::new(CodeSpec::new(3).unwrap(), vec![2, 1]).unwrap();
        assert!(AggregationScenario::with_defaults(label.clone(), vec![1.0], MemoryModel::ideal()).is_err());
        assert!(AggregationScenario::with_defaults(label.clone(), vec![3.0, 1.0], MemoryModel::ideal()).is_err());
        let s = AggregationScenario::with_defaults(label, vec![1.0, 3.0], MemoryModel::ideal()).unwrap();
        assert!(s.with_length(1, 0.5).is_err());
        assert!(s.with_alpha(AmplitudeVector::uniform(5)).is_err());
    }

    #[test]
    fn sweep_plateau_and_asymptote() {
        let ev = Evaluator::default();
        let s = scenario(3, &[2, 1], &[1.0, 3.0], 1e-3);
        let grid = log_grid(1e-6, 1e-1, 50).unwrap();
        let r = sweep(&ev, &[s.clone()], SweepParameter::T2, &grid).unwrap();
        let v = &r.series[0].1;
        assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        let p1 = (-1.0f64 / 22.0).exp();
        let p2 = (-3.0f64 / 22.0).exp();
        let ps = p1 * p1 * p2 + 2.0 * p1 * p2 * (1.0 - p1) + p1 * p1 * (1.0 - p2);
        let plateau = ps + (1.0 - ps) / 27.0;
        assert!((v[49] - plateau).abs() < 1e-5);
        assert!((plateau - 0.9877).abs() < 1e-4);
        let lgrid = linear_grid(2.0, 400.0, 40).unwrap();
        let r = sweep(&ev, &[s], SweepParameter::L2, &lgrid).unwrap();
        let v = &r.series[0].1;
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!((v[39] - 0.9163).abs() < 0.002);
        assert!(sweep(&ev, &[], SweepParameter::T2, &grid).is_err());
        assert!(sweep(&ev, &[scenario(3, &[2, 1], &[1.0, 3.0], 1e-3)], SweepParameter::T2, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn crossing_of_three_path_and_late_layouts() {
        let ev = Evaluator::default();
        let a = scenario(3, &[1, 1, 1], &[1.0, 2.0, 3.0], 1e-3);
        let b = scenario(3, &[1, 2], &[1.0, 3.0], 1e-3);
        let t = find_crossing(&ev, &a, &b, SweepParameter::T2, (1e-5, 1e-2)).unwrap();
        assert!((1e-4..1e-3).contains(&t), "{t}");
        let fa = ev.fidelity(&a.with_t2(t).unwrap()).unwrap().fidelity;
        let fb = ev.fidelity(&b.with_t2(t).unwrap()).unwrap().fidelity;
        assert!((fa - fb).abs() < 1e-9);
        assert!(matches!(
            find_crossing(&ev, &b, &b, SweepParameter::T2, (1e-5, 1e-2)),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn thresholds() {
        let ev = Evaluator::default();
        let s = scenario(3, &[2, 1], &[1.0, 3.0], 1e-4);
        assert!(matches!(find_threshold_distance(&ev, &s, 1e-4, 0.5), Err(Error::NoThreshold(_))));
        assert!(matches!(find_threshold_distance(&ev, &s, 1e-4, 0.0), Err(Error::NoThreshold(_))));
        let s = scenario(3, &[1, 2], &[1.0, 3.0], 1e-4);
        let short = find_threshold_distance(&ev, &s, 1e-6, 0.5).unwrap();
        let long = find_threshold_distance(&ev, &s, 1e-5, 0.5).unwrap();
        assert!(short < long, "{short} {long}");
        let f = ev.fidelity(&s.with_t2(1e-6).unwrap().with_length(1, short).unwrap()).unwrap().fidelity;
        assert!((f - 0.5).abs() < 1e-9);
    }

    #[test]
    fn assignment_enumeration() {
        assert_eq!(assignments(3, 2, false), vec![vec![2, 1], vec![1, 2]]);
        assert_eq!(assignments(3, 3, false), vec![vec![1, 1, 1]]);
        assert_eq!(assignments(3, 2, true), vec![vec![3, 0], vec![2, 1], vec![1, 2], vec![0, 3]]);
        assert_eq!(assignments(5, 1, false), vec![vec![5]]);
        assert_eq!(assignments(7, 3, false).len(), 15);
    }

    #[test]
    fn best_layout_prefers_the_short_path() {
        let ev = Evaluator::default();
        let code = CodeSpec::new(3).unwrap();
        let paths = PathSet::new(vec![1.0, 3.0]).unwrap();
        let (label, _) = best_assignment(
            &ev,
            code,
            &paths,
            MemoryModel::new(1e-3).unwrap(),
            PhysicalConstants::default(),
            &AmplitudeVector::uniform(3),
            false,
        )
        .unwrap();
        assert_eq!(label.assignment(), &[2, 1]);
        let single = PathSet::new(vec![2.0]).unwrap();
        let (label, _) = best_assignment(
            &ev,
            code,
            &single,
            MemoryModel::ideal(),
            PhysicalConstants::default(),
            &AmplitudeVector::uniform(3),
            false,
        )
        .unwrap();
        assert_eq!(label.assignment(), &[3]);
    }

    #[test]
    fn decomposition_adds_up() {
        let ev = Evaluator::default();
        let s = scenario(5, &[1, 4], &[1.0, 3.0], 1e-3);
        let grid = log_grid(1e-6, 1e-1, 20).unwrap();
        let d = loss_count_decomposition(&ev, &s, &grid).unwrap();
        for i in 0..grid.len() {
            let sum: f64 = d.by_lost.values().map(|v| v[i]).sum::<f64>() + d.residual[i];
            assert!((sum - d.total[i]).abs() < 1e-12);
        }
        let one = &d.by_lost[&1];
        assert!(one.iter().all(|v| (v - one[0]).abs() < 1e-15));
    }
}
