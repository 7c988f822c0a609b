//! Markov-chain model of a one-sided X-chart (sample size 1) monitoring a
//! process whose mean drifts upward through compound-Poisson mixture shifts.
//!
//! The chain is observed at sampling instants. A state is the pair
//! `(level, alarm)`: the distance from target at the sampling, rounded onto a
//! uniform grid, and whether that sampling signalled. The expected cost per
//! unit time is the inner product of the per-state cost vector with the
//! stationary distribution.
//!
//! Grid conventions:
//! - level 0 is the exact in-control state (no shift has occurred);
//! - a positive distance `x` maps to level `max(1, round(x / Δ))` (ties to even), capped at the
//!   top level, which absorbs the tail.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::distributions::{MixtureShiftSpec, ProcessCdf};
use crate::error::{check, Error, Result};
use crate::moments::{c2_mixture, IntervalCostInput, ShiftModel};

/// Largest tail mass the top grid level may absorb from a single interval started in control.
pub const GRID_TAIL_LIMIT: f64 = 1e-6;
/// Poisson truncation tolerance used when tabulating the interval kernel.
pub const KERNEL_TAIL_TOL: f64 = 1e-13;
pub const STATIONARY_TOL: f64 = 1e-12;
pub const MAX_POWER_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    /// Target value.
    pub mu0: f64,
    /// Measurement standard deviation.
    pub sigma: f64,
    /// Expected number of shifts per unit time.
    pub s: f64,
    /// Fraction of the distance left after a repair; 0 is a perfect repair.
    #[serde(default)]
    pub repair_residual: f64,
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        check(self.mu0.is_finite(), "mu0", self.mu0, "must be finite")?;
        check(self.sigma > 0.0 && self.sigma.is_finite(), "sigma", self.sigma, "must be positive")?;
        check(self.s >= 0.0 && self.s.is_finite(), "s", self.s, "must be finite and nonnegative")?;
        check(
            (0.0..1.0).contains(&self.repair_residual),
            "repair_residual",
            self.repair_residual,
            "must lie in [0, 1)",
        )
    }

    /// Probability that a single observation at distance `v` exceeds `k`.
    pub fn alarm_probability(&self, k: f64, v: f64) -> f64 {
        0.5 * erfc((k - self.mu0 - v) / (self.sigma * std::f64::consts::SQRT_2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// Cost of one sampling.
    pub c_s: f64,
    /// False-alarm cost.
    pub c_f: f64,
    /// Base repair cost.
    pub c_rb: f64,
    /// Repair cost per unit distance.
    pub c_rs: f64,
    /// Out-of-control cost per unit time.
    pub c_os: f64,
    /// Out-of-control cost per unit time and squared distance.
    pub c_ob: f64,
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_s", self.c_s),
            ("c_f", self.c_f),
            ("c_rb", self.c_rb),
            ("c_rs", self.c_rs),
            ("c_os", self.c_os),
            ("c_ob", self.c_ob),
        ] {
            check(v >= 0.0 && v.is_finite(), name, v, "must be finite and nonnegative")?;
        }
        Ok(())
    }
}

/// Free design parameters: sampling interval `h` and critical value `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartParams {
    pub h: f64,
    pub k: f64,
}

impl ChartParams {
    pub fn validate(&self) -> Result<()> {
        check(self.h > 0.0 && self.h.is_finite(), "h", self.h, "must be positive")?;
        check(!self.k.is_nan(), "k", self.k, "must not be NaN")
    }
}

/// Uniform grid `{0, Δ, ..., L·Δ}` of distances from target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGrid {
    spacing: f64,
    top: usize,
}

impl LevelGrid {
    pub fn new(spacing: f64, v_max: f64) -> Result<Self> {
        check(spacing > 0.0 && spacing.is_finite(), "grid_spacing", spacing, "must be positive")?;
        check(v_max >= spacing && v_max.is_finite(), "v_max", v_max, "must be at least one grid step")?;
        let ratio = v_max / spacing;
        let top = ratio.round();
        check(
            (ratio - top).abs() <= 1e-9 * ratio,
            "v_max",
            v_max,
            "must be a multiple of the grid spacing",
        )?;
        Ok(Self {
            spacing,
            top: top as usize,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Index of the top level.
    pub fn top(&self) -> usize {
        self.top
    }

    pub fn len(&self) -> usize {
        self.top + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn v_max(&self) -> f64 {
        self.value(self.top)
    }

    pub fn value(&self, level: usize) -> f64 {
        level as f64 * self.spacing
    }

    pub fn quantize(&self, x: f64) -> usize {
        if x <= 0.0 {
            return 0;
        }
        let i = (x / self.spacing).round_ties_even();
        if i >= self.top as f64 {
            self.top
        } else {
            (i as usize).max(1)
        }
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.top).map(|i| self.value(i))
    }
}

/// One-interval movement of the distance on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelKernel {
    grid: LevelGrid,
    /// `increments[m]`: probability that the accumulated shift rounds to `m` steps.
    increments: Vec<f64>,
    /// Destination probabilities from the in-control level.
    from_zero: Vec<f64>,
}

impl LevelKernel {
    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    /// Transition probabilities out of `level`; the top level absorbs the tail.
    pub fn row(&self, level: usize) -> Vec<f64> {
        if level == 0 {
            return self.from_zero.clone();
        }
        let top = self.grid.top;
        let mut row = vec![0.0; top + 1];
        for (m, &p) in self.increments.iter().enumerate() {
            let dest = (level + m).min(top);
            row[dest] += p;
        }
        // any mass beyond the tabulated increments lands on the top level
        let total: f64 = row.iter().sum();
        row[top] += (1.0 - total).max(0.0);
        row
    }

    /// Dense kernel over all levels.
    pub fn matrix(&self) -> Array2<f64> {
        let n = self.grid.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for (j, p) in self.row(i).into_iter().enumerate() {
                m[[i, j]] = p;
            }
        }
        m
    }
}

/// Tabulate the one-interval kernel from `Z_h` differences. Fails with
/// [`Error::GridTooSmall`] if more than [`GRID_TAIL_LIMIT`] of the mass started
/// in control lies above `v_max`.
pub fn discretize(spec: &MixtureShiftSpec, s: f64, h: f64, spacing: f64, v_max: f64) -> Result<LevelKernel> {
    spec.validate()?;
    check(h > 0.0 && h.is_finite(), "h", h, "must be positive")?;
    let grid = LevelGrid::new(spacing, v_max)?;
    let z = ProcessCdf::auto(h, s, spec, KERNEL_TAIL_TOL)?;
    let top = grid.top;

    let tail = 1.0 - z.eval(grid.v_max());
    if tail > GRID_TAIL_LIMIT {
        return Err(Error::GridTooSmall {
            v_max: grid.v_max(),
            tail,
            limit: GRID_TAIL_LIMIT,
        });
    }

    // Z at the rounding boundaries (m + 1/2)Δ
    let edges: Vec<f64> = (0..=top).map(|m| z.eval((m as f64 + 0.5) * spacing)).collect();
    let mut increments = Vec::with_capacity(top + 1);
    increments.push(edges[0]);
    for m in 1..=top {
        increments.push((edges[m] - edges[m - 1]).max(0.0));
    }

    let mut from_zero = vec![0.0; top + 1];
    from_zero[0] = z.atom();
    // any positive shift leaves the in-control level
    from_zero[1.min(top)] += (edges[1.min(top)] - z.atom()).max(0.0);
    for m in 2..=top {
        from_zero[m] += increments[m];
    }
    let total: f64 = from_zero.iter().sum();
    from_zero[top] += (1.0 - total).max(0.0);

    Ok(LevelKernel {
        grid,
        increments,
        from_zero,
    })
}

/// Grid `(spacing, v_max)` with `levels` steps covering both the in-control
/// shift tail over the longest interval `h_max` (mass above `v_max` below 1e-7)
/// and every distance that could still escape an alarm at the largest critical
/// value `k_max` (`k_max - μ₀ + 8σ`).
pub fn suggest_grid(
    spec: &MixtureShiftSpec,
    process: &ProcessSpec,
    h_max: f64,
    k_max: f64,
    levels: usize,
) -> Result<(f64, f64)> {
    process.validate()?;
    check(levels >= 1, "levels", levels as f64, "must be positive")?;
    let z = ProcessCdf::auto(h_max, process.s, spec, KERNEL_TAIL_TOL)?;
    let mut reach = spec.mean().max(spec.jump_scale);
    while 1.0 - z.eval(reach) > 0.1 * GRID_TAIL_LIMIT {
        reach *= 1.25;
    }
    let v_max = reach.max(k_max - process.mu0 + 8.0 * process.sigma);
    check(v_max.is_finite(), "k", k_max, "critical value must be finite to size the grid")?;
    let spacing = v_max / levels as f64;
    Ok((spacing, spacing * levels as f64))
}

/// Expected fraction of an interval of length `h` spent away from target when
/// it starts at distance `v`.
pub fn out_of_control_fraction(v: f64, s: f64, h: f64) -> f64 {
    if v > 0.0 {
        return 1.0;
    }
    let x = s * h;
    if x == 0.0 {
        0.0
    } else if x < 1e-5 {
        // series of 1 - (1 - e^{-x}) / x
        x / 2.0 - x * x / 6.0
    } else {
        1.0 + (-x).exp_m1() / x
    }
}

/// Expected out-of-control operating cost per unit time over one interval
/// started at distance `v`: `c_os · fraction(v) + c_ob · 𝒞²_{h,v} / h`.
pub fn out_of_control_cost(v: f64, h: f64, s: f64, spec: &MixtureShiftSpec, costs: &CostSpec) -> Result<f64> {
    let c2 = c2_mixture(&IntervalCostInput::new(h, v, s, ShiftModel::Mixture(*spec))?)?;
    Ok(costs.c_os * out_of_control_fraction(v, s, h) + costs.c_ob * c2.per_unit_time)
}

/// Cost charged at a sampling that finds the process at distance `v`.
pub fn sampling_cost(v: f64, alarm: bool, costs: &CostSpec) -> f64 {
    match (alarm, v > 0.0) {
        (false, _) => costs.c_s,
        (true, false) => costs.c_s + costs.c_f,
        (true, true) => costs.c_s + costs.c_rb + costs.c_rs * v,
    }
}

/// Distance at which the next interval starts after a sampling at `v`.
pub fn post_sampling_distance(v: f64, alarm: bool, process: &ProcessSpec) -> f64 {
    if alarm {
        process.repair_residual * v
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartState {
    pub level: usize,
    pub alarm: bool,
}

impl ChartState {
    pub fn index(&self) -> usize {
        2 * self.level + usize::from(self.alarm)
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            level: i / 2,
            alarm: i % 2 == 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChartModel {
    pub params: ChartParams,
    pub grid: LevelGrid,
    /// Row-stochastic over states indexed by [`ChartState::index`].
    pub transition_matrix: Array2<f64>,
    pub stationary: Array1<f64>,
    /// Expected cost per unit time of the cycle that begins in each state.
    pub cost_vector: Array1<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ChartModel {
    pub fn n_states(&self) -> usize {
        self.cost_vector.len()
    }

    pub fn expected_cost(&self) -> f64 {
        expected_cost(self)
    }

    pub fn states(&self) -> impl Iterator<Item = ChartState> {
        (0..self.n_states()).map(ChartState::from_index)
    }

    /// Assemble the chain for `params` on a precomputed kernel (which must have been
    /// tabulated for the same `h`, shift rate and shift law).
    pub fn from_kernel(
        kernel: &LevelKernel,
        params: ChartParams,
        process: &ProcessSpec,
        spec: &MixtureShiftSpec,
        costs: &CostSpec,
    ) -> Result<Self> {
        params.validate()?;
        process.validate()?;
        costs.validate()?;
        let grid = kernel.grid;
        let n_levels = grid.len();
        let n = 2 * n_levels;
        let h = params.h;

        let alarm: Vec<f64> = grid.levels().map(|v| process.alarm_probability(params.k, v)).collect();
        let rows: Vec<Vec<f64>> = (0..n_levels).map(|i| kernel.row(i)).collect();

        let mut ooc_cache = vec![None; n_levels];
        let mut ooc = |level: usize| -> Result<f64> {
            if let Some(c) = ooc_cache[level] {
                return Ok(c);
            }
            let c = out_of_control_cost(grid.value(level), h, process.s, spec, costs)?;
            ooc_cache[level] = Some(c);
            Ok(c)
        };

        let mut t = Array2::zeros((n, n));
        let mut cost = Array1::zeros(n);
        for i in 0..n {
            let state = ChartState::from_index(i);
            let v = grid.value(state.level);
            let w = grid.quantize(post_sampling_distance(v, state.alarm, process));
            cost[i] = sampling_cost(v, state.alarm, costs) / h + ooc(w)?;
            for (dest, &p) in rows[w].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                t[[i, 2 * dest]] = p * (1.0 - alarm[dest]);
                t[[i, 2 * dest + 1]] = p * alarm[dest];
            }
        }
        let (stationary, iterations, residual) = stationary_distribution_with_stats(&t)?;
        Ok(Self {
            params,
            grid,
            transition_matrix: t,
            stationary,
            cost_vector: cost,
            iterations,
            residual,
        })
    }
}

/// Discretize and assemble the chart model in one step.
pub fn build_model(
    params: ChartParams,
    process: &ProcessSpec,
    spec: &MixtureShiftSpec,
    costs: &CostSpec,
    spacing: f64,
    v_max: f64,
) -> Result<ChartModel> {
    params.validate()?;
    process.validate()?;
    let kernel = discretize(spec, process.s, params.h, spacing, v_max)?;
    ChartModel::from_kernel(&kernel, params, process, spec, costs)
}

/// Left fixed vector of a row-stochastic matrix by power iteration started
/// from state 0, to a max-norm residual below [`STATIONARY_TOL`].
pub fn stationary_distribution(t: &Array2<f64>) -> Result<Array1<f64>> {
    stationary_distribution_with_stats(t).map(|(p, _, _)| p)
}

fn stationary_distribution_with_stats(t: &Array2<f64>) -> Result<(Array1<f64>, usize, f64)> {
    let n = t.nrows();
    if n == 0 || t.ncols() != n {
        return Err(Error::Unsupported("transition matrix must be square and nonempty".into()));
    }
    let mut p = Array1::zeros(n);
    p[0] = 1.0;
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_POWER_ITERATIONS {
        let mut next = p.dot(t);
        let total = next.sum();
        next /= total;
        residual = next
            .iter()
            .zip(p.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        p = next;
        if residual < STATIONARY_TOL {
            return Ok((p, it, residual));
        }
    }
    Err(Error::Convergence {
        iterations: MAX_POWER_ITERATIONS,
        residual,
    })
}

/// `E(C) = C · P`.
pub fn expected_cost(model: &ChartModel) -> f64 {
    model.cost_vector.dot(&model.stationary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub(crate) fn reference() -> (ChartParams, ProcessSpec, MixtureShiftSpec, CostSpec) {
        (
            ChartParams { h: 1.0, k: 2.5 },
            ProcessSpec {
                mu0: 0.0,
                sigma: 1.0,
                s: 0.3,
                repair_residual: 0.25,
            },
            MixtureShiftSpec::new(0.4, 0.5, 0.6, 1.0).unwrap(),
            CostSpec {
                c_s: 1.0,
                c_f: 10.0,
                c_rb: 20.0,
                c_rs: 5.0,
                c_os: 3.0,
                c_ob: 2.0,
            },
        )
    }

    #[test]
    fn stationary_two_state_examples() {
        let p = stationary_distribution(&array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let p = stationary_distribution(&array![[1.0, 0.0], [0.3, 0.7]]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn stationary_reports_non_convergence() {
        // periodic chain started in state 0 never settles
        let err = stationary_distribution(&array![[0.0, 1.0], [1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }

    #[test]
    fn expected_cost_inner_product() {
        let (params, process, spec, costs) = reference();
        let mut model = build_model(params, &process, &spec, &costs, 0.25, 24.0).unwrap();
        let n = model.n_states();
        model.stationary = Array1::from_elem(n, 1.0 / n as f64);
        model.cost_vector = Array1::from_elem(n, 3.5);
        assert!((expected_cost(&model) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn zero_costs_give_zero() {
        let (params, process, spec, _) = reference();
        let model = build_model(params, &process, &spec, &CostSpec::default(), 0.25, 24.0).unwrap();
        assert_eq!(model.expected_cost(), 0.0);
    }

    #[test]
    fn no_shifts_identity_kernel() {
        let spec = MixtureShiftSpec::new(0.5, 0.5, 1.0, 1.0).unwrap();
        let k = discretize(&spec, 0.0, 2.0, 0.5, 5.0).unwrap();
        let m = k.matrix();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                assert_eq!(m[[i, j]], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn pure_sampling_cost() {
        let (_, process, spec, _) = reference();
        let process = ProcessSpec { s: 0.0, ..process };
        let costs = CostSpec {
            c_s: 2.0,
            c_f: 7.0,
            c_rb: 3.0,
            c_rs: 1.0,
            ..CostSpec::default()
        };
        let params = ChartParams { h: 2.0, k: 1e6 };
        let model = build_model(params, &process, &spec, &costs, 0.5, 5.0).unwrap();
        assert!((model.expected_cost() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_rows_are_stochastic() {
        for &(z, xi, d, j, s, h) in &[
            (0.4, 0.5, 0.6, 1.0, 0.3, 1.0),
            (0.9, 0.2, 1.5, 0.5, 1.0, 0.5),
            (0.0, 1.0, 0.3, 1.0, 2.0, 1.5),
        ] {
            let spec = MixtureShiftSpec::new(z, xi, d, j).unwrap();
            let k = discretize(&spec, s, h, 0.25, 40.0).unwrap();
            for i in 0..k.grid().len() {
                let row = k.row(i);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
            // the atom at zero keeps the in-control level
            assert!(k.row(0)[0] >= (-s * h).exp() - 1e-15);
        }
    }

    #[test]
    fn grid_too_small_is_reported() {
        let spec = MixtureShiftSpec::new(0.4, 0.5, 2.0, 1.0).unwrap();
        let err = discretize(&spec, 3.0, 2.0, 0.5, 4.0).unwrap_err();
        assert!(matches!(err, Error::GridTooSmall { .. }));
    }

    #[test]
    fn grid_requires_multiple() {
        assert!(LevelGrid::new(0.3, 1.0).is_err());
        let g = LevelGrid::new(0.1, 1.0).unwrap();
        assert_eq!(g.top(), 10);
        assert_eq!(g.quantize(0.0), 0);
        assert_eq!(g.quantize(0.01), 1);
        assert_eq!(g.quantize(0.26), 3);
        assert_eq!(g.quantize(50.0), 10);
    }

    #[test]
    fn model_invariants() {
        let (params, process, spec, costs) = reference();
        let model = build_model(params, &process, &spec, &costs, 0.1, 24.0).unwrap();
        for row in model.transition_matrix.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((model.stationary.sum() - 1.0).abs() < 1e-12);
        let moved = model.stationary.dot(&model.transition_matrix);
        let res = moved
            .iter()
            .zip(model.stationary.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(res < 1e-10);
        assert!(model.cost_vector.iter().all(|c| c.is_finite() && *c >= 0.0));
    }

    #[test]
    fn cost_monotone_in_coefficients() {
        let (params, process, spec, costs) = reference();
        let kernel = discretize(&spec, process.s, params.h, 0.2, 24.0).unwrap();
        let base = ChartModel::from_kernel(&kernel, params, &process, &spec, &costs).unwrap().expected_cost();
        let bumps: [fn(&mut CostSpec); 6] = [
            |c| c.c_s += 0.5,
            |c| c.c_f += 0.5,
            |c| c.c_rb += 0.5,
            |c| c.c_rs += 0.5,
            |c| c.c_os += 0.5,
            |c| c.c_ob += 0.5,
        ];
        for bump in bumps {
            let mut c = costs;
            bump(&mut c);
            let e = ChartModel::from_kernel(&kernel, params, &process, &spec, &c).unwrap().expected_cost();
            assert!(e >= base);
        }
    }

    #[test]
    fn out_of_control_fraction_limits() {
        assert_eq!(out_of_control_fraction(1.0, 0.3, 2.0), 1.0);
        assert_eq!(out_of_control_fraction(0.0, 0.0, 2.0), 0.0);
        let x: f64 = 0.6;
        let want = 1.0 - (1.0 - (-x).exp()) / x;
        assert!((out_of_control_fraction(0.0, 0.3, 2.0) - want).abs() < 1e-15);
        assert!((out_of_control_fraction(0.0, 1e-7, 1.0) - 5e-8).abs() < 1e-14);
    }
}
