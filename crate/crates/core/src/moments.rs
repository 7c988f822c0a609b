//! Second moments of the accumulated shift and their integral over a sampling
//! interval.
//!
//! For `k` stacked shifts with `r ~ Binom(k, ζ)` of them drawn from the second
//! component, the expected squared distance `E((X + JY + j)²)` has a closed
//! form that is quadratic in `k`. Averaging over a Poisson number of shifts and
//! integrating over `[0, h]` gives `𝒞²_{h,j}`, the expected area under `H(t)²`.
//!
//! Every closed form here has a brute-force counterpart (`binomial_sum_*`,
//! [`c2_series_oracle`]) that evaluates the defining sums directly.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::distributions::{poisson_pmf, poisson_truncation, GenericComponentMoments, MixtureShiftSpec};
use crate::error::{check, Error, Result};

/// Shift model accepted by the interval-cost routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftModel {
    Mixture(MixtureShiftSpec),
    Generic(GenericComponentMoments),
}

impl ShiftModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ShiftModel::Mixture(m) => m.validate(),
            ShiftModel::Generic(g) => g.validate(),
        }
    }

    /// `E(S_k²)` for `k` stacked shifts from a start distance `j`, via the
    /// explicit binomial sum.
    fn brute_force_square(&self, k: u64, j: f64) -> f64 {
        match self {
            ShiftModel::Mixture(m) => binomial_sum_square_unchecked(k, j, m),
            ShiftModel::Generic(g) => binomial_sum_square_general_unchecked(k, g),
        }
    }
}

/// Arguments of `𝒞²_{h,j}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalCostInput {
    /// Time between samplings.
    pub h: f64,
    /// Distance from target at the start of the interval.
    pub j: f64,
    /// Shift rate.
    pub s: f64,
    pub shift: ShiftModel,
}

impl IntervalCostInput {
    pub fn new(h: f64, j: f64, s: f64, shift: ShiftModel) -> Result<Self> {
        let input = Self { h, j, s, shift };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.h > 0.0 && self.h.is_finite(), "h", self.h, "must be positive")?;
        check(self.j >= 0.0 && self.j.is_finite(), "j", self.j, "must be finite and nonnegative")?;
        check(self.s >= 0.0 && self.s.is_finite(), "s", self.s, "must be finite and nonnegative")?;
        self.shift.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalCostResult {
    /// `∫₀ʰ E(H(t)²) dt`.
    pub integral: f64,
    /// `integral / h`.
    pub per_unit_time: f64,
}

impl IntervalCostResult {
    fn from_integral(integral: f64, h: f64) -> Self {
        Self {
            integral,
            per_unit_time: integral / h,
        }
    }
}

fn binomial_weights(k: u64, zeta: f64) -> impl Iterator<Item = (u64, f64)> {
    (0..=k).map(move |r| {
        let w = if zeta == 0.0 {
            if r == 0 { 1.0 } else { 0.0 }
        } else if zeta == 1.0 {
            if r == k { 1.0 } else { 0.0 }
        } else {
            (ln_binomial(k, r) + r as f64 * zeta.ln() + (k - r) as f64 * (1.0 - zeta).ln()).exp()
        };
        (r, w)
    })
}

/// Closed form of `E((X + JY + j)²)` for `k` shifts of the exponential–geometric mixture.
pub fn expected_square_mixture(k: u64, j: f64, spec: &MixtureShiftSpec) -> Result<f64> {
    spec.validate()?;
    check(k >= 1, "k", k as f64, "must be a positive integer")?;
    check(j >= 0.0, "j", j, "must be nonnegative")?;
    let (k, z, xi, d, jj) = (k as f64, spec.zeta, spec.xi, spec.delta, spec.jump_scale);
    let base = k * d * d + (j - k * d * (z - 1.0)).powi(2);
    let cross = (2.0 * k * z * jj * (j + d * (k + z - k * z - 1.0)) - xi * k * (d * z).powi(2)) / xi;
    let geo = k * z * jj * jj * (2.0 - xi + z * (k - 1.0)) / (xi * xi);
    Ok(base + cross + geo)
}

/// `Σ_r C(k,r) ζ^r (1-ζ)^{k-r} E((X_{k-r} + J Y_r + j)²)`, term by term.
pub fn binomial_sum_square(k: u64, j: f64, spec: &MixtureShiftSpec) -> Result<f64> {
    spec.validate()?;
    check(k >= 1, "k", k as f64, "must be a positive integer")?;
    check(j >= 0.0, "j", j, "must be nonnegative")?;
    Ok(binomial_sum_square_unchecked(k, j, spec))
}

fn binomial_sum_square_unchecked(k: u64, j: f64, spec: &MixtureShiftSpec) -> f64 {
    let (d, xi, jj) = (spec.delta, spec.xi, spec.jump_scale);
    binomial_weights(k, spec.zeta)
        .filter(|&(_, w)| w > 0.0)
        .map(|(r, w)| {
            let (n_exp, n_geo) = ((k - r) as f64, r as f64);
            let mean_x = n_exp * d;
            let ex2 = mean_x * mean_x + n_exp * d * d;
            let mean_y = jj * n_geo / xi;
            let ey2 = mean_y * mean_y + jj * jj * n_geo * (1.0 - xi) / (xi * xi);
            let term = ex2 + ey2 + j * j + 2.0 * mean_x * mean_y + 2.0 * mean_x * j + 2.0 * mean_y * j;
            w * term
        })
        .sum()
}

/// Closed form of `E((X + Y)²)` for `k` shifts of a generic two-component mixture.
pub fn expected_square_general(k: u64, gm: &GenericComponentMoments) -> Result<f64> {
    gm.validate()?;
    check(k >= 1, "k", k as f64, "must be a positive integer")?;
    let GenericComponentMoments { m_x, v_x, m_y, v_y, zeta: z } = *gm;
    let k = k as f64;
    let dm = m_x - m_y;
    Ok(k * (m_x * m_x * k + v_x - z * v_x
        + z * (v_y - dm * (m_y + m_x * (2.0 * k - 1.0)))
        + z * z * dm * dm * (k - 1.0)))
}

/// Term-by-term binomial sum behind [`expected_square_general`].
pub fn binomial_sum_square_general(k: u64, gm: &GenericComponentMoments) -> Result<f64> {
    gm.validate()?;
    check(k >= 1, "k", k as f64, "must be a positive integer")?;
    Ok(binomial_sum_square_general_unchecked(k, gm))
}

fn binomial_sum_square_general_unchecked(k: u64, gm: &GenericComponentMoments) -> f64 {
    binomial_weights(k, gm.zeta)
        .filter(|&(_, w)| w > 0.0)
        .map(|(r, w)| {
            let (nx, ny) = ((k - r) as f64, r as f64);
            let term = (nx * gm.m_x).powi(2) + nx * gm.v_x + (ny * gm.m_y).powi(2) + ny * gm.v_y
                + 2.0 * nx * gm.m_x * ny * gm.m_y;
            w * term
        })
        .sum()
}

/// `𝒞²_{h,j}` for the exponential–geometric mixture, obtained by integrating
/// `j² + 2jst·m + st·q + (st·m)²` over `[0, h]`, where `m` and `q` are the
/// first two moments of a single shift.
pub fn c2_mixture(input: &IntervalCostInput) -> Result<IntervalCostResult> {
    input.validate()?;
    let spec = match input.shift {
        ShiftModel::Mixture(spec) => spec,
        ShiftModel::Generic(_) => {
            return Err(Error::Unsupported(
                "c2_mixture needs a mixture shift specification".into(),
            ))
        }
    };
    let IntervalCostInput { h, j, s, .. } = *input;
    let (z, xi, d, jj) = (spec.zeta, spec.xi, spec.delta, spec.jump_scale);
    // ξ·(mean shift)
    let xm = d * (xi - xi * z) + z * jj;
    let integral = h * j * j
        + h * h * j * s * xm / xi
        + h * h * s * (-6.0 * d * d * xi * xi * (z - 1.0) - 3.0 * (xi - 2.0) * z * jj * jj) / (6.0 * xi * xi)
        + h * h * h * s * s * xm * xm / (3.0 * xi * xi);
    Ok(IntervalCostResult::from_integral(integral, h))
}

/// `𝒞²_{h,0}` for a generic two-component mixture described by its per-variate
/// moments. Only a zero start distance is supported.
pub fn c2_general(input: &IntervalCostInput) -> Result<IntervalCostResult> {
    input.validate()?;
    if input.j != 0.0 {
        return Err(Error::Unsupported(format!(
            "c2_general is defined for a zero start distance only (got j = {})",
            input.j
        )));
    }
    let gm = match input.shift {
        ShiftModel::Generic(gm) => gm,
        ShiftModel::Mixture(spec) => spec.component_moments(),
    };
    let GenericComponentMoments { m_x, v_x, m_y, v_y, zeta: z } = gm;
    let IntervalCostInput { h, s, .. } = *input;
    let integral = h * h * s / 6.0
        * (3.0 * (m_x * m_x + v_x + z * (m_y * m_y + v_y - m_x * m_x - v_x))
            + 2.0 * h * (m_x - z * (m_x - m_y)).powi(2) * s);
    Ok(IntervalCostResult::from_integral(integral, h))
}

/// Dispatch to [`c2_mixture`] or [`c2_general`] according to the shift model.
pub fn c2(input: &IntervalCostInput) -> Result<IntervalCostResult> {
    match input.shift {
        ShiftModel::Mixture(_) => c2_mixture(input),
        ShiftModel::Generic(_) => c2_general(input),
    }
}

/// Numerical value of `𝒞²` with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOracleValue {
    pub integral: f64,
    /// Estimated contribution of the Poisson terms above `k_max`.
    pub truncation_error: f64,
    /// `|Q(n_quad) - Q(n_quad / 2)|`.
    pub quadrature_error: f64,
}

/// Truncation that leaves a negligible second-moment-weighted Poisson tail over `[0, h]`.
pub fn default_k_max(input: &IntervalCostInput) -> usize {
    poisson_truncation(input.s * input.h, 1e-16) + 10
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

const GL_ORDER: usize = 8;

/// Numerically integrates `t ↦ e^{-st} j² + Σ_{k=1}^{k_max} ν_t(k) E(square | k)`
/// over `[0, h]` with composite Gauss–Legendre quadrature (`n_quad` panels of
/// order 8). The per-`k` second moments come from the explicit binomial sums.
///
/// Fails with [`Error::Tolerance`] when the estimated truncation plus
/// quadrature error exceeds `rel_tol` relative to the result.
pub fn c2_series_oracle(
    input: &IntervalCostInput,
    k_max: usize,
    n_quad: usize,
    rel_tol: f64,
) -> Result<SeriesOracleValue> {
    input.validate()?;
    check(n_quad >= 2, "n_quad", n_quad as f64, "must be at least 2")?;
    if let ShiftModel::Generic(_) = input.shift {
        if input.j != 0.0 {
            return Err(Error::Unsupported(
                "generic component moments are defined for a zero start distance only".into(),
            ));
        }
    }
    let IntervalCostInput { h, j, s, shift } = *input;
    let squares: Vec<f64> = std::iter::once(j * j)
        .chain((1..=k_max as u64).map(|k| shift.brute_force_square(k, j)))
        .collect();
    let integrand = |t: f64| -> f64 {
        let mean = s * t;
        squares
            .iter()
            .enumerate()
            .map(|(k, e)| poisson_pmf(k, mean) * e)
            .sum()
    };
    let rule = gauss_legendre(GL_ORDER);
    let composite = |panels: usize| -> f64 {
        let width = h / panels as f64;
        (0..panels)
            .map(|p| {
                let mid = (p as f64 + 0.5) * width;
                rule.iter().map(|&(x, w)| w * integrand(mid + 0.5 * width * x)).sum::<f64>() * 0.5 * width
            })
            .sum()
    };
    let integral = composite(n_quad);
    let quadrature_error = (integral - composite(n_quad / 2)).abs();

    // the k-tail of ν_t is increasing in t, so its value at t = h bounds the integrand tail
    let mean_h = s * h;
    let mut tail = 0.0;
    let mut k = k_max as u64 + 1;
    loop {
        let term = poisson_pmf(k as usize, mean_h) * shift.brute_force_square(k, j);
        tail += term;
        if (k as f64 > mean_h && term <= tail * 1e-16) || term == 0.0 && k as f64 > mean_h || k > k_max as u64 + 2000 {
            break;
        }
        k += 1;
    }
    let truncation_error = h * tail;

    let budget = rel_tol * integral.abs().max(f64::MIN_POSITIVE);
    if truncation_error + quadrature_error > budget {
        return Err(Error::Tolerance {
            estimate: (truncation_error + quadrature_error) / integral.abs().max(f64::MIN_POSITIVE),
            tol: rel_tol,
        });
    }
    Ok(SeriesOracleValue {
        integral,
        truncation_error,
        quadrature_error,
    })
}
