use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Knot where g(1.5·ln(1/(1−x))) leaves its linear branch.
pub const STAGED_KNOT_LOW: f64 = 0.486_582_880_967_408; // 1 − e^{−2/3}
/// Knot where it saturates at 3.
pub const STAGED_KNOT_HIGH: f64 = 0.736_402_861_884_273_3; // 1 − e^{−4/3}

/// g(x) = 2x on [0,1], x+1 on [1,2], 3 beyond. Infinity maps to 3.
pub fn g_eval(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("g is defined on x ≥ 0, got {x}")));
    }
    Ok(if x <= 1.0 {
        2.0 * x
    } else if x <= 2.0 {
        x + 1.0
    } else {
        3.0
    })
}

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    recurse(&f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

/// ∫₀¹ g(1.5·ln(1/(1−x))) dx = 3 − 1.5(e^{−2/3} + e^{−4/3}).
pub fn staged_integral_closed_form() -> f64 {
    3.0 - 1.5 * ((-2.0f64 / 3.0).exp() + (-4.0f64 / 3.0).exp())
}

fn staged_integrand(x: f64) -> f64 {
    if x >= 1.0 {
        return 3.0;
    }
    // ln(1/(1−x)) = −ln_1p(−x), accurate near 0
    g_eval(-1.5 * (-x).ln_1p()).unwrap_or(3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagedBound {
    pub t: u64,
    /// Σ_{j=1}^{t} 2g(1.5·ln(t/(t−j))); the j = t term is 2g(∞) = 6.
    pub discrete_sum: f64,
    pub integral_closed_form: f64,
    pub integral_quadrature: f64,
    /// Per-agent integral; the quadrature and closed form agree to 1e−9.
    pub integral_value: f64,
    /// integral_value / 3.
    pub ratio: f64,
    /// discrete_sum / 6t, the discrete sum against the LP value 6t.
    pub discrete_ratio: f64,
}

pub fn staged_upper_bound(t: u64) -> Result<StagedBound> {
    if t == 0 {
        return Err(Error::Domain("t must be at least 1".into()));
    }
    let tf = t as f64;
    let mut discrete_sum = 6.0;
    for j in 1..t {
        let x = 1.5 * (tf / (tf - j as f64)).ln();
        discrete_sum += 2.0 * g_eval(x)?;
    }
    let tol = 1e-13;
    let integral_quadrature = adaptive_simpson(staged_integrand, 0.0, STAGED_KNOT_LOW, tol)
        + adaptive_simpson(staged_integrand, STAGED_KNOT_LOW, STAGED_KNOT_HIGH, tol)
        + adaptive_simpson(staged_integrand, STAGED_KNOT_HIGH, 1.0, tol);
    let integral_closed_form = staged_integral_closed_form();
    let integral_value = integral_closed_form;
    Ok(StagedBound {
        t,
        discrete_sum,
        integral_closed_form,
        integral_quadrature,
        integral_value,
        ratio: integral_value / 3.0,
        discrete_ratio: discrete_sum / (6.0 * tf),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicBound {
    /// m·ln(t/(t−j)).
    pub bound: f64,
    /// Σ_{i=1}^{j} m/(t−i+1).
    pub exact_sum: f64,
}

/// Expected number of items allocated to the copies deactivated after stage j.
pub fn harmonic_bound(m: usize, t: usize, j: usize) -> Result<HarmonicBound> {
    if j >= t {
        return Err(Error::Domain(format!("need j < t, got j={j}, t={t}")));
    }
    let mf = m as f64;
    let tf = t as f64;
    let exact_sum = (1..=j).map(|i| mf / (tf - i as f64 + 1.0)).sum();
    Ok(HarmonicBound {
        bound: mf * (tf / (tf - j as f64)).ln(),
        exact_sum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoCaseBoundParams {
    pub k: usize,
    pub epsilon: f64,
    pub c0: f64,
    pub universe_size: usize,
    /// Expected items per agent; the tangent point.
    pub mu: f64,
}

impl NoCaseBoundParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Input("k must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Input(format!("epsilon must lie in (0,1), got {}", self.epsilon)));
        }
        if self.c0.is_nan() || self.c0 < 1.0 {
            return Err(Error::Input(format!("c0 must be ≥ 1, got {}", self.c0)));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Input(format!("mu must be finite and ≥ 0, got {}", self.mu)));
        }
        Ok(())
    }

    /// ε′ = 2ε.
    pub fn epsilon_prime(&self) -> f64 {
        2.0 * self.epsilon
    }

    /// φ(x) = (1 − e^{−x/k} + ε′)|U|.
    pub fn phi(&self, x: f64) -> f64 {
        (1.0 - (-x / self.k as f64).exp() + self.epsilon_prime()) * self.universe_size as f64
    }

    pub fn phi_prime(&self, x: f64) -> f64 {
        (-x / self.k as f64).exp() / self.k as f64 * self.universe_size as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoCaseBound {
    pub ell: f64,
    /// (1 − (1−1/k)^ℓ + ε)|U|.
    pub raw: f64,
    /// min{|U|, φ(μ) + φ′(μ)(ℓ − μ)}.
    pub linearized: f64,
}

pub fn no_case_value_bound(params: &NoCaseBoundParams, ell: f64) -> Result<NoCaseBound> {
    params.validate()?;
    if !(ell.is_finite() && ell >= 0.0) {
        return Err(Error::Domain(format!("ℓ must be finite and ≥ 0, got {ell}")));
    }
    let u = params.universe_size as f64;
    let k = params.k as f64;
    let raw = (1.0 - (1.0 - 1.0 / k).powf(ell) + params.epsilon) * u;
    let tangent = params.phi(params.mu) + params.phi_prime(params.mu) * (ell - params.mu);
    Ok(NoCaseBound {
        ell,
        raw,
        linearized: tangent.min(u),
    })
}

/// Two-column CSV (`x,value`).
pub fn curve_csv(points: &[(f64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "value"])?;
    for (x, v) in points {
        w.write_record([x.to_string(), v.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}
