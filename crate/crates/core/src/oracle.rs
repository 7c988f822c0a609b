//! Monte Carlo ground truth for the closed forms and the chart model.
//!
//! Random numbers come from ChaCha8 keyed by the 64-bit seed (little-endian in
//! the first 8 key bytes, remaining bytes zero) with the ChaCha stream id set
//! to the batch index. Uniforms are `((u64 >> 11) + 1) · 2⁻⁵³ ∈ (0, 1]`; all
//! variates are built from them by inversion or Box–Muller, so a run can be
//! replayed in any language that implements ChaCha8.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{post_sampling_distance, sampling_cost, ChartParams, ChartState, CostSpec, LevelGrid, ProcessSpec};
use crate::distributions::MixtureShiftSpec;
use crate::error::{check, Result};

/// Paths per independent generator stream.
pub const PATHS_PER_BATCH: usize = 4096;
/// Number of batch means used for the chart-simulation standard error.
pub const CHART_BATCHES: usize = 50;

/// Uniform and derived variates on top of a keyed ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct StreamRng(ChaCha8Rng);

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * self.uniform().ln()
    }

    /// Geometric on {1, 2, ...}: `⌈ln U / ln(1-ξ)⌉`.
    pub fn geometric(&mut self, xi: f64) -> u64 {
        if xi >= 1.0 {
            return 1;
        }
        let g = (self.uniform().ln() / (-xi).ln_1p()).ceil();
        g.max(1.0) as u64
    }

    /// Box–Muller, cosine branch only.
    pub fn standard_normal(&mut self) -> f64 {
        let r = (-2.0 * self.uniform().ln()).sqrt();
        r * (std::f64::consts::TAU * self.uniform()).cos()
    }
}

/// Path of the accumulated shift `H(t) = j + Σ_{τᵢ ≤ t} ρᵢ` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_level: f64,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn level_at(&self, t: f64) -> f64 {
        self.start_level
            + self
                .jump_times
                .iter()
                .zip(&self.jump_sizes)
                .take_while(|(&tau, _)| tau <= t)
                .map(|(_, &rho)| rho)
                .sum::<f64>()
    }

    pub fn final_level(&self) -> f64 {
        self.start_level + self.jump_sizes.iter().sum::<f64>()
    }

    /// Time during which `H(t) > 0`.
    pub fn time_away_from_target(&self) -> f64 {
        if self.start_level > 0.0 {
            self.horizon
        } else {
            self.jump_times.first().map_or(0.0, |&t| self.horizon - t)
        }
    }
}

/// One shift: `J · Geom(ξ)` with probability ζ, else `Exp(mean δ)`.
pub fn sample_shift(spec: &MixtureShiftSpec, rng: &mut StreamRng) -> f64 {
    if spec.zeta > 0.0 && rng.uniform() <= spec.zeta {
        spec.jump_scale * rng.geometric(spec.xi) as f64
    } else {
        rng.exponential(spec.delta)
    }
}

/// Jump times from exponential inter-arrivals of rate `s`, sizes i.i.d. from [`sample_shift`].
pub fn simulate_trajectory(j: f64, h: f64, s: f64, spec: &MixtureShiftSpec, rng: &mut StreamRng) -> Trajectory {
    let mut jump_times = Vec::new();
    let mut jump_sizes = Vec::new();
    if s > 0.0 {
        let mut t = rng.exponential(1.0 / s);
        while t < h {
            jump_times.push(t);
            jump_sizes.push(sample_shift(spec, rng));
            t += rng.exponential(1.0 / s);
        }
    }
    Trajectory {
        start_level: j,
        jump_times,
        jump_sizes,
        horizon: h,
    }
}

/// `∫₀ʰ H(t)² dt`, exact for a step path.
pub fn pathwise_square_integral(traj: &Trajectory) -> f64 {
    let mut level = traj.start_level;
    let mut last = 0.0;
    let mut acc = 0.0;
    for (&t, &rho) in traj.jump_times.iter().zip(&traj.jump_sizes) {
        acc += level * level * (t - last);
        level += rho;
        last = t;
    }
    acc + level * level * (traj.horizon - last)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Sample mean and its standard error.
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_paths: n,
            seed,
        }
    }

    /// `(value - mean) / std_error`.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_error == 0.0 {
            if value == self.mean { 0.0 } else { f64::INFINITY }
        } else {
            (value - self.mean) / self.std_error
        }
    }
}

/// Per-path `∫H²` values in path order. Path `i` uses stream `i / PATHS_PER_BATCH`,
/// so the output does not depend on the number of worker threads.
pub fn c2_path_samples(j: f64, h: f64, s: f64, spec: &MixtureShiftSpec, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    check(h > 0.0 && h.is_finite(), "h", h, "must be positive")?;
    check(j >= 0.0 && j.is_finite(), "j", j, "must be finite and nonnegative")?;
    check(s >= 0.0 && s.is_finite(), "s", s, "must be finite and nonnegative")?;
    let n_batches = n_paths.div_ceil(PATHS_PER_BATCH);
    let batches: Vec<Vec<f64>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = StreamRng::new(seed, b as u64);
            let count = PATHS_PER_BATCH.min(n_paths - b * PATHS_PER_BATCH);
            (0..count)
                .map(|_| pathwise_square_integral(&simulate_trajectory(j, h, s, spec, &mut rng)))
                .collect()
        })
        .collect();
    Ok(batches.concat())
}

/// Monte Carlo estimate of `𝒞²_{h,j}`.
pub fn estimate_c2(j: f64, h: f64, s: f64, spec: &MixtureShiftSpec, n_paths: usize, seed: u64) -> Result<McEstimate> {
    check(n_paths >= 1000, "n_paths", n_paths as f64, "must be at least 1000")?;
    let samples = c2_path_samples(j, h, s, spec, n_paths, seed)?;
    Ok(McEstimate::from_samples(&samples, seed))
}

/// Result of a long chart simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSimulation {
    /// Long-run cost per unit time; the standard error is from
    /// [`CHART_BATCHES`] contiguous batch means, so `n_paths` is the batch count.
    pub cost: McEstimate,
    /// Visits to each `(level, alarm)` state, indexed like [`ChartState::index`],
    /// when a grid was supplied.
    pub occupancy: Option<Vec<u64>>,
    pub n_intervals: usize,
    pub alarms: u64,
}

/// Long-run cost per unit time of operating the chart, simulated on continuous levels.
pub fn simulate_chart(
    params: ChartParams,
    process: &ProcessSpec,
    spec: &MixtureShiftSpec,
    costs: &CostSpec,
    n_intervals: usize,
    seed: u64,
) -> Result<McEstimate> {
    simulate_chart_detailed(params, process, spec, costs, n_intervals, seed, None).map(|s| s.cost)
}

/// One cycle per interval: the interval runs from the post-sampling distance,
/// accruing `c_os · (time away from target) + c_ob · ∫H²`; then the sampling at
/// its end observes `μ₀ + H(h) + σZ`, alarms iff that exceeds `k`, and charges
/// the sampling and alarm costs. A burn-in of `n_intervals / 10` cycles from the
/// in-control state is discarded.
pub fn simulate_chart_detailed(
    params: ChartParams,
    process: &ProcessSpec,
    spec: &MixtureShiftSpec,
    costs: &CostSpec,
    n_intervals: usize,
    seed: u64,
    grid: Option<&LevelGrid>,
) -> Result<ChartSimulation> {
    params.validate()?;
    process.validate()?;
    spec.validate()?;
    costs.validate()?;
    check(
        n_intervals >= 10 * CHART_BATCHES,
        "n_intervals",
        n_intervals as f64,
        "must be at least 500",
    )?;
    let h = params.h;
    let mut rng = StreamRng::new(seed, 0);
    let mut occupancy = grid.map(|g| vec![0u64; 2 * g.len()]);
    let burn_in = n_intervals / 10;
    let batch_len = n_intervals / CHART_BATCHES;
    let mut batch_sums = vec![0.0; CHART_BATCHES];
    let mut alarms = 0u64;

    let mut start = 0.0;
    for cycle in 0..burn_in + n_intervals {
        let traj = simulate_trajectory(start, h, process.s, spec, &mut rng);
        let operating = costs.c_os * traj.time_away_from_target() + costs.c_ob * pathwise_square_integral(&traj);
        let v = traj.final_level();
        let observation = process.mu0 + v + process.sigma * rng.standard_normal();
        let alarm = observation > params.k;
        start = post_sampling_distance(v, alarm, process);

        if cycle < burn_in {
            continue;
        }
        let idx = cycle - burn_in;
        // the operating cost belongs to the cycle of the previous sampling
        if idx > 0 {
            let b = ((idx - 1) / batch_len).min(CHART_BATCHES - 1);
            batch_sums[b] += operating;
        }
        if idx + 1 < n_intervals {
            let b = (idx / batch_len).min(CHART_BATCHES - 1);
            batch_sums[b] += sampling_cost(v, alarm, costs);
        }
        if alarm {
            alarms += 1;
        }
        if let (Some(occ), Some(g)) = (occupancy.as_mut(), grid) {
            occ[ChartState { level: g.quantize(v), alarm }.index()] += 1;
        }
    }

    // n_intervals - 1 complete cycles (sampling + following interval)
    let mut counts = vec![batch_len; CHART_BATCHES];
    counts[CHART_BATCHES - 1] = n_intervals - 1 - batch_len * (CHART_BATCHES - 1);
    let means: Vec<f64> = batch_sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / (c as f64 * h))
        .collect();
    let total_cycles = (n_intervals - 1) as f64;
    let mut cost = McEstimate::from_samples(&means, seed);
    cost.mean = batch_sums.iter().sum::<f64>() / (total_cycles * h);
    Ok(ChartSimulation {
        cost,
        occupancy,
        n_intervals,
        alarms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_in_unit_interval() {
        let mut rng = StreamRng::new(7, 0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u <= 1.0);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = StreamRng::new(42, 3);
            (0..8).map(|_| r.0.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = StreamRng::new(42, 3);
            (0..8).map(|_| r.0.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = StreamRng::new(42, 4);
            (0..8).map(|_| r.0.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_geometric_shift() {
        let spec = MixtureShiftSpec::new(1.0, 1.0, 1.0, 2.0).unwrap();
        let mut rng = StreamRng::new(1, 0);
        for _ in 0..1000 {
            assert_eq!(sample_shift(&spec, &mut rng), 2.0);
        }
    }

    #[test]
    fn exponential_branch_mean() {
        let spec = MixtureShiftSpec::exponential(1.7).unwrap();
        let mut rng = StreamRng::new(11, 0);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_shift(&spec, &mut rng)).collect();
        let est = McEstimate::from_samples(&draws, 11);
        assert!(est.z_score(1.7).abs() < 4.0, "{est:?}");
    }

    #[test]
    fn no_rate_no_jumps() {
        let spec = MixtureShiftSpec::exponential(1.0).unwrap();
        let mut rng = StreamRng::new(5, 0);
        let t = simulate_trajectory(1.0, 3.0, 0.0, &spec, &mut rng);
        assert!(t.jump_times.is_empty());
        assert_eq!(pathwise_square_integral(&t), 3.0);
    }

    #[test]
    fn pathwise_integral_examples() {
        let flat = Trajectory {
            start_level: 2.0,
            jump_times: vec![],
            jump_sizes: vec![],
            horizon: 3.0,
        };
        assert_eq!(pathwise_square_integral(&flat), 12.0);
        let one = Trajectory {
            start_level: 0.0,
            jump_times: vec![1.0],
            jump_sizes: vec![1.0],
            horizon: 2.0,
        };
        assert_eq!(pathwise_square_integral(&one), 1.0);
        assert_eq!(one.level_at(0.5), 0.0);
        assert_eq!(one.level_at(1.0), 1.0);
        assert_eq!(one.time_away_from_target(), 1.0);
    }

    #[test]
    fn trajectories_are_step_paths() {
        let spec = MixtureShiftSpec::new(0.5, 0.4, 1.0, 1.5).unwrap();
        let mut rng = StreamRng::new(9, 0);
        for _ in 0..200 {
            let t = simulate_trajectory(0.5, 4.0, 2.0, &spec, &mut rng);
            assert_eq!(t.jump_times.len(), t.jump_sizes.len());
            assert!(t.jump_times.windows(2).all(|w| w[0] < w[1]));
            assert!(t.jump_times.iter().all(|&x| x > 0.0 && x < 4.0));
            assert!(t.jump_sizes.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn jump_count_and_empty_probability() {
        let spec = MixtureShiftSpec::new(0.5, 0.4, 1.0, 1.5).unwrap();
        let (s, h, n) = (0.7, 1.5, 100_000);
        let mut rng = StreamRng::new(2024, 0);
        let counts: Vec<f64> = (0..n)
            .map(|_| simulate_trajectory(0.0, h, s, &spec, &mut rng).jump_times.len() as f64)
            .collect();
        let est = McEstimate::from_samples(&counts, 0);
        assert!(est.z_score(s * h).abs() < 4.0);
        let empty: Vec<f64> = counts.iter().map(|&c| if c == 0.0 { 1.0 } else { 0.0 }).collect();
        let est = McEstimate::from_samples(&empty, 0);
        assert!(est.z_score((-s * h).exp()).abs() < 4.0);
    }

    #[test]
    fn samples_independent_of_thread_count() {
        let spec = MixtureShiftSpec::new(0.5, 0.4, 1.0, 1.5).unwrap();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| c2_path_samples(0.3, 1.0, 1.0, &spec, 10_000, 77).unwrap());
        let b = wide.install(|| c2_path_samples(0.3, 1.0, 1.0, &spec, 10_000, 77).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn chart_without_shifts_costs_sampling_only() {
        let spec = MixtureShiftSpec::exponential(1.0).unwrap();
        let process = ProcessSpec {
            mu0: 0.0,
            sigma: 1.0,
            s: 0.0,
            repair_residual: 0.0,
        };
        let costs = CostSpec {
            c_s: 3.0,
            c_f: 100.0,
            c_os: 5.0,
            c_ob: 5.0,
            ..CostSpec::default()
        };
        let est = simulate_chart(ChartParams { h: 2.0, k: 1e9 }, &process, &spec, &costs, 10_000, 1).unwrap();
        assert_eq!(est.mean, 1.5);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn chart_always_alarming() {
        let spec = MixtureShiftSpec::exponential(1.0).unwrap();
        let process = ProcessSpec {
            mu0: 0.0,
            sigma: 1.0,
            s: 0.0,
            repair_residual: 0.0,
        };
        let costs = CostSpec {
            c_s: 3.0,
            c_f: 4.0,
            ..CostSpec::default()
        };
        let est = simulate_chart(ChartParams { h: 0.5, k: -1e9 }, &process, &spec, &costs, 10_000, 1).unwrap();
        assert!((est.mean - 14.0).abs() < 1e-12);
    }
}
