//! Shift-size distributions: geometric, exponential, Erlang, negative binomial,
//! the exponential–geometric mixture and the compound sums built from it.
//!
//! The geometric law has support on the positive integers, `F_g(x) = 1 - (1-ξ)^⌊x⌋`,
//! and the negative binomial is the `r`-fold convolution of that law, so its
//! support starts at `r`. A geometric jump is scaled by `jump_scale` (J) before it
//! is added to the process, which moves the lattice to `{J, 2J, ...}`.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{check, Error, Result};

/// Default upper-tail mass allowed when truncating a Poisson sum.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Parameters of a single shift: with probability `zeta` a scaled geometric jump
/// `jump_scale · G`, `G ~ Geom(xi)` on {1, 2, ...}, otherwise an exponential
/// jump with mean `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureShiftSpec {
    pub zeta: f64,
    pub xi: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub jump_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl MixtureShiftSpec {
    pub fn new(zeta: f64, xi: f64, delta: f64, jump_scale: f64) -> Result<Self> {
        let spec = Self {
            zeta,
            xi,
            delta,
            jump_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Pure exponential shifts with mean `delta`.
    pub fn exponential(delta: f64) -> Result<Self> {
        Self::new(0.0, 1.0, delta, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        check((0.0..=1.0).contains(&self.zeta), "zeta", self.zeta, "must lie in [0, 1]")?;
        check(self.xi > 0.0 && self.xi <= 1.0, "xi", self.xi, "must lie in (0, 1]")?;
        check(self.delta > 0.0 && self.delta.is_finite(), "delta", self.delta, "must be positive")?;
        check(
            self.jump_scale > 0.0 && self.jump_scale.is_finite(),
            "jump_scale",
            self.jump_scale,
            "must be positive",
        )
    }

    /// Mean of a single shift.
    pub fn mean(&self) -> f64 {
        (1.0 - self.zeta) * self.delta + self.zeta * self.jump_scale / self.xi
    }

    /// Second raw moment of a single shift.
    pub fn second_moment(&self) -> f64 {
        let geo = self.jump_scale * self.jump_scale * (2.0 - self.xi) / (self.xi * self.xi);
        (1.0 - self.zeta) * 2.0 * self.delta * self.delta + self.zeta * geo
    }

    /// Per-variate component moments: X exponential, Y the scaled geometric.
    pub fn component_moments(&self) -> GenericComponentMoments {
        let j = self.jump_scale;
        GenericComponentMoments {
            m_x: self.delta,
            v_x: self.delta * self.delta,
            m_y: j / self.xi,
            v_y: j * j * (1.0 - self.xi) / (self.xi * self.xi),
            zeta: self.zeta,
        }
    }
}

/// First two moments of each mixture component, per single variate.
/// Component Y is drawn with probability `zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericComponentMoments {
    pub m_x: f64,
    pub v_x: f64,
    pub m_y: f64,
    pub v_y: f64,
    pub zeta: f64,
}

impl GenericComponentMoments {
    pub fn new(m_x: f64, v_x: f64, m_y: f64, v_y: f64, zeta: f64) -> Result<Self> {
        let gm = Self {
            m_x,
            v_x,
            m_y,
            v_y,
            zeta,
        };
        gm.validate()?;
        Ok(gm)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.m_x >= 0.0 && self.m_x.is_finite(), "m_x", self.m_x, "must be finite and nonnegative")?;
        check(self.v_x >= 0.0 && self.v_x.is_finite(), "v_x", self.v_x, "must be finite and nonnegative")?;
        check(self.m_y >= 0.0 && self.m_y.is_finite(), "m_y", self.m_y, "must be finite and nonnegative")?;
        check(self.v_y >= 0.0 && self.v_y.is_finite(), "v_y", self.v_y, "must be finite and nonnegative")?;
        check((0.0..=1.0).contains(&self.zeta), "zeta", self.zeta, "must lie in [0, 1]")
    }

    pub fn mean(&self) -> f64 {
        (1.0 - self.zeta) * self.m_x + self.zeta * self.m_y
    }

    pub fn second_moment(&self) -> f64 {
        (1.0 - self.zeta) * (self.m_x * self.m_x + self.v_x)
            + self.zeta * (self.m_y * self.m_y + self.v_y)
    }
}

/// Number of shifts in `[0, time]`: Poisson with mean `rate · time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftCountLaw {
    pub rate: f64,
    pub time: f64,
}

impl ShiftCountLaw {
    pub fn new(rate: f64, time: f64) -> Result<Self> {
        check(rate >= 0.0 && rate.is_finite(), "s", rate, "must be finite and nonnegative")?;
        check(time >= 0.0 && time.is_finite(), "t", time, "must be finite and nonnegative")?;
        Ok(Self { rate, time })
    }

    pub fn mean(&self) -> f64 {
        self.rate * self.time
    }

    pub fn pmf(&self, k: usize) -> f64 {
        poisson_pmf(k, self.mean())
    }

    /// Mass strictly above `k`.
    pub fn upper_tail(&self, k: usize) -> f64 {
        poisson_upper_tail(k, self.mean())
    }

    /// Smallest `k` whose upper tail mass is below `tol`.
    pub fn truncation(&self, tol: f64) -> usize {
        poisson_truncation(self.mean(), tol)
    }
}

pub(crate) fn poisson_pmf(k: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mean.ln() - mean - ln_factorial(k as u64)).exp()
}

/// `P(N > k)` summed directly from the pmf terms beyond `k`.
pub(crate) fn poisson_upper_tail(k: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let mut i = k + 1;
    let mut term = poisson_pmf(i, mean);
    let mut tail = 0.0;
    loop {
        tail += term;
        i += 1;
        term *= mean / i as f64;
        // past the mode the terms decay geometrically
        if (i as f64) > mean && term <= tail * 1e-17 {
            break;
        }
        if term == 0.0 && (i as f64) > mean {
            break;
        }
    }
    tail
}

pub(crate) fn poisson_truncation(mean: f64, tol: f64) -> usize {
    if mean == 0.0 {
        return 0;
    }
    let mut k = mean.floor() as usize;
    while poisson_upper_tail(k, mean) >= tol {
        k += 1;
    }
    // walk back in case the mode already satisfies the bound
    while k > 0 && poisson_upper_tail(k - 1, mean) < tol {
        k -= 1;
    }
    k
}

fn binomial_pmf(r: u64, n: u64, p: f64) -> f64 {
    if r > n {
        return 0.0;
    }
    if p == 0.0 {
        return if r == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if r == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n, r) + r as f64 * p.ln() + (n - r) as f64 * (1.0 - p).ln()).exp()
}

/// Geometric CDF on the positive integers.
pub fn geom_cdf(x: f64, xi: f64) -> Result<f64> {
    check(xi > 0.0 && xi <= 1.0, "xi", xi, "must lie in (0, 1]")?;
    if x < 1.0 {
        return Ok(0.0);
    }
    let steps = x.floor();
    // 1 - (1-ξ)^n without cancellation for small ξ
    Ok(-(steps * (-xi).ln_1p()).exp_m1())
}

/// Negative binomial pmf: number of trials `x` needed for `r` successes.
pub fn negbin_pmf(x: u64, r: u64, xi: f64) -> Result<f64> {
    check(r >= 1, "r", r as f64, "must be a positive integer")?;
    check(xi > 0.0 && xi <= 1.0, "xi", xi, "must lie in (0, 1]")?;
    Ok(negbin_pmf_unchecked(x, r, xi))
}

fn negbin_pmf_unchecked(x: u64, r: u64, xi: f64) -> f64 {
    if x < r {
        return 0.0;
    }
    if xi == 1.0 {
        return if x == r { 1.0 } else { 0.0 };
    }
    let failures = x - r;
    (ln_binomial(x - 1, failures) + r as f64 * xi.ln() + failures as f64 * (-xi).ln_1p()).exp()
}

/// CDF of the sum of `n` independent exponentials with mean `delta`.
/// `n = 0` is the point mass at zero.
pub fn erlang_cdf(x: f64, n: u64, delta: f64) -> Result<f64> {
    check(delta > 0.0 && delta.is_finite(), "delta", delta, "must be positive")?;
    Ok(erlang_cdf_unchecked(x, n, delta))
}

fn erlang_cdf_unchecked(x: f64, n: u64, delta: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if n == 0 {
        return 1.0;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let y = x / delta;
    let nf = n as f64;
    if y < nf {
        // lower tail: e^{-y} Σ_{i≥n} y^i / i!
        let mut term = (nf * y.ln() - y - ln_factorial(n)).exp();
        let mut sum = 0.0;
        let mut i = n;
        while term > sum * 1e-17 {
            sum += term;
            i += 1;
            term *= y / i as f64;
        }
        sum.min(1.0)
    } else {
        // upper tail: e^{-y} Σ_{i<n} y^i / i!, summed from the largest term down
        let mut i = n - 1;
        let mut term = (i as f64 * y.ln() - y - ln_factorial(i)).exp();
        let mut sum = term;
        while i > 0 {
            term *= i as f64 / y;
            i -= 1;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        (1.0 - sum).max(0.0)
    }
}

/// Single-shift CDF `ζ F_g(x / J) + (1-ζ) F_e(x)`.
pub fn mixture_cdf(x: f64, spec: &MixtureShiftSpec) -> Result<f64> {
    spec.validate()?;
    Ok(mixture_cdf_unchecked(x, spec))
}

fn mixture_cdf_unchecked(x: f64, spec: &MixtureShiftSpec) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let g = if x / spec.jump_scale < 1.0 {
        0.0
    } else {
        -((x / spec.jump_scale).floor() * (-spec.xi).ln_1p()).exp_m1()
    };
    let e = -(-x / spec.delta).exp_m1();
    spec.zeta * g + (1.0 - spec.zeta) * e
}

/// CDF of the sum of `n` shifts of which exactly `r` are (scaled) geometric:
/// `Σ_{l=r}^{⌊x/J⌋} F_{E_{n-r}}(x - lJ) f_nb(l; r, ξ)`, or the Erlang CDF when `r = 0`.
pub fn sum_cdf_given_n_r(x: f64, n: u64, r: u64, spec: &MixtureShiftSpec) -> Result<f64> {
    spec.validate()?;
    if r > n {
        return Err(Error::Domain {
            name: "r",
            value: r as f64,
            reason: "must not exceed n",
        });
    }
    Ok(sum_cdf_given_n_r_unchecked(x, n, r, spec))
}

fn sum_cdf_given_n_r_unchecked(x: f64, n: u64, r: u64, spec: &MixtureShiftSpec) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if r == 0 {
        return erlang_cdf_unchecked(x, n, spec.delta);
    }
    let top = (x / spec.jump_scale).floor();
    if top < r as f64 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut mass = 0.0;
    let mut l = r;
    while (l as f64) <= top {
        let w = negbin_pmf_unchecked(l, r, spec.xi);
        acc += w * erlang_cdf_unchecked(x - l as f64 * spec.jump_scale, n - r, spec.delta);
        mass += w;
        l += 1;
        if 1.0 - mass < 1e-17 {
            // remaining lattice weight is below double resolution; each remaining Erlang factor is ≤ 1
            break;
        }
    }
    acc.min(1.0)
}

/// CDF of the sum of `n` i.i.d. mixture shifts:
/// `Σ_r Binom(r; n, ζ) · F_{M|n,r}(x)`.
pub fn sum_cdf_given_n(x: f64, n: u64, spec: &MixtureShiftSpec) -> Result<f64> {
    spec.validate()?;
    Ok(sum_cdf_given_n_unchecked(x, n, spec))
}

fn sum_cdf_given_n_unchecked(x: f64, n: u64, spec: &MixtureShiftSpec) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if n == 0 {
        return 1.0;
    }
    let mut acc = 0.0;
    for r in 0..=n {
        let w = binomial_pmf(r, n, spec.zeta);
        if w == 0.0 {
            continue;
        }
        acc += w * sum_cdf_given_n_r_unchecked(x, n, r, spec);
    }
    acc.min(1.0)
}

/// CDF of the accumulated shift `H(t)` started from zero:
/// `ν_t(0) + Σ_{k=1}^{k_max} ν_t(k) Ψ_k(x)` for `x ≥ 0`.
///
/// Fails with [`Error::Truncation`] when the Poisson mass above `k_max`
/// exceeds [`DEFAULT_TAIL_TOL`].
pub fn process_cdf(x: f64, t: f64, s: f64, spec: &MixtureShiftSpec, k_max: usize) -> Result<f64> {
    let cdf = ProcessCdf::new(t, s, spec, k_max)?;
    Ok(cdf.eval(x))
}

/// `Z_t` with the Poisson weights precomputed, for repeated evaluation.
#[derive(Debug, Clone)]
pub struct ProcessCdf {
    spec: MixtureShiftSpec,
    weights: Vec<f64>,
}

impl ProcessCdf {
    pub fn new(t: f64, s: f64, spec: &MixtureShiftSpec, k_max: usize) -> Result<Self> {
        Self::with_tolerance(t, s, spec, k_max, DEFAULT_TAIL_TOL)
    }

    pub fn with_tolerance(t: f64, s: f64, spec: &MixtureShiftSpec, k_max: usize, tol: f64) -> Result<Self> {
        spec.validate()?;
        let law = ShiftCountLaw::new(s, t)?;
        let tail = law.upper_tail(k_max);
        if tail > tol {
            return Err(Error::Truncation { k_max, tail, tol });
        }
        let weights = (0..=k_max).map(|k| law.pmf(k)).collect();
        Ok(Self { spec: *spec, weights })
    }

    /// Build with the smallest admissible truncation for `tol`.
    pub fn auto(t: f64, s: f64, spec: &MixtureShiftSpec, tol: f64) -> Result<Self> {
        let law = ShiftCountLaw::new(s, t)?;
        Self::with_tolerance(t, s, spec, law.truncation(tol), tol)
    }

    pub fn k_max(&self) -> usize {
        self.weights.len() - 1
    }

    /// Probability of no shift, the atom at zero.
    pub fn atom(&self) -> f64 {
        self.weights[0]
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let mut acc = self.weights[0];
        for (k, &w) in self.weights.iter().enumerate().skip(1) {
            if w < 1e-300 {
                continue;
            }
            acc += w * sum_cdf_given_n_unchecked(x, k as u64, &self.spec);
        }
        acc.min(1.0)
    }
}
