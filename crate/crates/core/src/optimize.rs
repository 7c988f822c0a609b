//! Grid search for the cost-optimal sampling interval and critical value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{discretize, ChartModel, ChartParams, CostSpec, LevelKernel, ProcessSpec};
use crate::distributions::MixtureShiftSpec;
use crate::error::{check, Error, Result};

/// Evenly spaced values `min, ..., max` (`count` of them).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn single(value: f64) -> Self {
        Self {
            min: value,
            max: value,
            count: 1,
        }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        check(self.count >= 1, name, self.count as f64, "axis needs at least one point")?;
        check(self.min.is_finite() && self.max.is_finite(), name, self.min, "axis bounds must be finite")?;
        check(self.min <= self.max, name, self.min, "axis min must not exceed max")?;
        if self.count == 1 {
            check(self.min == self.max, name, self.max, "a single-point axis needs min == max")?;
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + step * i as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub h: Axis,
    pub k: Axis,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.h.validate("h")?;
        check(self.h.min > 0.0, "h", self.h.min, "sampling interval must be positive")?;
        self.k.validate("k")
    }

    pub fn len(&self) -> usize {
        self.h.count * self.k.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One evaluated grid point. `cost` is `None` when the model could not be
/// built, with the reason in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub h: f64,
    pub k: f64,
    pub cost: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub best_params: ChartParams,
    pub best_cost: f64,
    /// Row-major in `h`, then `k`.
    pub cost_surface: Vec<SurfacePoint>,
}

/// Evaluate `E(C)` at every `(h, k)` of `space` and return the minimiser.
/// Ties go to the smaller `h`, then the smaller `k`. Points whose model fails
/// are recorded in the surface and skipped.
pub fn grid_search(
    space: &SearchSpace,
    process: &ProcessSpec,
    spec: &MixtureShiftSpec,
    costs: &CostSpec,
    spacing: f64,
    v_max: f64,
) -> Result<Optimum> {
    space.validate()?;
    process.validate()?;
    spec.validate()?;
    costs.validate()?;
    let hs = space.h.values();
    let ks = space.k.values();

    // the kernel depends on h only
    let kernels: Vec<std::result::Result<LevelKernel, Error>> = hs
        .par_iter()
        .map(|&h| discretize(spec, process.s, h, spacing, v_max))
        .collect();

    let points: Vec<(usize, usize)> = (0..hs.len()).flat_map(|i| (0..ks.len()).map(move |j| (i, j))).collect();
    let cost_surface: Vec<SurfacePoint> = points
        .par_iter()
        .map(|&(i, j)| {
            let params = ChartParams { h: hs[i], k: ks[j] };
            let outcome = kernels[i]
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|kernel| ChartModel::from_kernel(kernel, params, process, spec, costs))
                .map(|m| m.expected_cost());
            match outcome {
                Ok(c) => SurfacePoint {
                    h: params.h,
                    k: params.k,
                    cost: Some(c),
                    error: None,
                },
                Err(e) => SurfacePoint {
                    h: params.h,
                    k: params.k,
                    cost: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let best = cost_surface
        .iter()
        .filter_map(|p| p.cost.map(|c| (p, c)))
        .fold(None::<(&SurfacePoint, f64)>, |best, (p, c)| match best {
            Some((_, bc)) if bc <= c => best,
            _ => Some((p, c)),
        });
    let (point, best_cost) = best.ok_or_else(|| {
        Error::Unsupported(format!(
            "no grid point could be evaluated (first failure: {})",
            cost_surface
                .first()
                .and_then(|p| p.error.clone())
                .unwrap_or_default()
        ))
    })?;
    Ok(Optimum {
        best_params: ChartParams {
            h: point.h,
            k: point.k,
        },
        best_cost,
        cost_surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ProcessSpec, MixtureShiftSpec, CostSpec) {
        (
            ProcessSpec {
                mu0: 0.0,
                sigma: 1.0,
                s: 0.3,
                repair_residual: 0.0,
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
    fn axis_values() {
        let a = Axis {
            min: 0.5,
            max: 2.0,
            count: 4,
        };
        assert_eq!(a.values(), vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(Axis::single(3.0).values(), vec![3.0]);
        assert!(Axis { min: 1.0, max: 0.0, count: 2 }.validate("h").is_err());
        assert!(Axis { min: 1.0, max: 2.0, count: 0 }.validate("h").is_err());
    }

    #[test]
    fn single_point_space() {
        let (process, spec, costs) = setup();
        let space = SearchSpace {
            h: Axis::single(1.0),
            k: Axis::single(2.0),
        };
        let opt = grid_search(&space, &process, &spec, &costs, 0.2, 24.0).unwrap();
        assert_eq!(opt.best_params, ChartParams { h: 1.0, k: 2.0 });
        assert_eq!(opt.cost_surface.len(), 1);
    }

    #[test]
    fn zero_costs_pick_smallest_corner() {
        let (process, spec, _) = setup();
        let space = SearchSpace {
            h: Axis { min: 0.5, max: 1.5, count: 3 },
            k: Axis { min: 1.0, max: 3.0, count: 3 },
        };
        let opt = grid_search(&space, &process, &spec, &CostSpec::default(), 0.2, 24.0).unwrap();
        assert_eq!(opt.best_cost, 0.0);
        assert_eq!(opt.best_params, ChartParams { h: 0.5, k: 1.0 });
    }

    #[test]
    fn sampling_dominated_prefers_longest_interval() {
        let (process, spec, _) = setup();
        let costs = CostSpec {
            c_s: 100.0,
            c_os: 0.01,
            c_ob: 0.01,
            ..CostSpec::default()
        };
        let space = SearchSpace {
            h: Axis { min: 0.25, max: 2.0, count: 8 },
            k: Axis { min: 2.0, max: 4.0, count: 3 },
        };
        let opt = grid_search(&space, &process, &spec, &costs, 0.2, 30.0).unwrap();
        assert_eq!(opt.best_params.h, 2.0);
        // along each k the surface falls as h grows
        for j in 0..3 {
            let col: Vec<f64> = (0..8).map(|i| opt.cost_surface[i * 3 + j].cost.unwrap()).collect();
            assert!(col.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let (process, spec, costs) = setup();
        let space = SearchSpace {
            h: Axis { min: 1.0, max: 40.0, count: 2 },
            k: Axis::single(2.0),
        };
        let opt = grid_search(&space, &process, &spec, &costs, 0.5, 24.0).unwrap();
        assert!(opt.cost_surface[0].cost.is_some());
        assert!(opt.cost_surface[1].error.is_some());
        assert_eq!(opt.best_params.h, 1.0);
    }

    #[test]
    fn surface_matches_across_thread_counts() {
        let (process, spec, costs) = setup();
        let space = SearchSpace {
            h: Axis { min: 0.5, max: 2.0, count: 4 },
            k: Axis { min: 1.5, max: 3.5, count: 5 },
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| grid_search(&space, &process, &spec, &costs, 0.25, 24.0).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        let min = a.cost_surface.iter().filter_map(|p| p.cost).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_cost, min);
    }
}
