//! Nonlinearities `F`, their potentials `V(s) = ∫_s^{r0²} F`, the saturating
//! cutoff `φ` and the split `W(s) = V(s) - V(φ²(√s))`.
//!
//! Every model carries its derived constants: the modulus at infinity `r0`
//! (with `F(r0²) = 0`, `F'(r0²) < 0`), `a = sqrt(-F'(r0²)/2)` and the sound
//! speed `v_s = 2 a r0`.

use crate::error::{Error, Result};

/// Which nonlinearity a model uses.
#[derive(Clone, Debug, PartialEq)]
pub enum NonlinearityKind {
    /// `F(s) = 1 - s`.
    GrossPitaevskii,
    /// `F(s) = -α1 + α3 s - α5 s²` with two positive roots.
    CubicQuintic { alpha1: f64, alpha3: f64, alpha5: f64 },
    /// Monotone cubic interpolation of sampled `(s, F(s))` pairs.
    Tabulated(Tabulated),
}

/// A nonlinearity together with its derived constants.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearityModel {
    kind: NonlinearityKind,
    r0: f64,
    a: f64,
    v_s: f64,
    p0: Option<f64>,
}

impl NonlinearityModel {
    pub fn gross_pitaevskii() -> Self {
        Self::from_kind(NonlinearityKind::GrossPitaevskii)
            .expect("Gross-Pitaevskii model is always valid")
    }

    pub fn cubic_quintic(alpha1: f64, alpha3: f64, alpha5: f64) -> Result<Self> {
        Self::from_kind(NonlinearityKind::CubicQuintic { alpha1, alpha3, alpha5 })
    }

    /// Builds a tabulated model from `(s, F(s))` samples sorted by `s`.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        Self::from_kind(NonlinearityKind::Tabulated(Tabulated::new(samples)?))
    }

    pub fn from_kind(kind: NonlinearityKind) -> Result<Self> {
        let (r0sq, slope, p0) = match &kind {
            NonlinearityKind::GrossPitaevskii => (1.0, -1.0, Some(1.0)),
            NonlinearityKind::CubicQuintic { alpha1, alpha3, alpha5 } => {
                let (a1, a3, a5) = (*alpha1, *alpha3, *alpha5);
                if !(a1 > 0.0 && a3 > 0.0 && a5 > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "cubic-quintic coefficients must be positive, got ({a1}, {a3}, {a5})"
                    )));
                }
                let disc = a3 * a3 - 4.0 * a1 * a5;
                if disc <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "cubic-quintic F has no two positive roots (discriminant {disc})"
                    )));
                }
                // Larger root, written to avoid cancellation.
                let root = (a3 + disc.sqrt()) / (2.0 * a5);
                (root, a3 - 2.0 * a5 * root, Some(2.0))
            }
            NonlinearityKind::Tabulated(t) => {
                let root = t.find_root()?;
                (root, t.derivative(root), None)
            }
        };
        if !(slope < 0.0) {
            return Err(Error::InvalidModel(format!(
                "F'(r0²) = {slope} must be negative"
            )));
        }
        let r0 = r0sq.sqrt();
        let a = (-0.5 * slope).sqrt();
        Ok(Self { kind, r0, a, v_s: 2.0 * a * r0, p0 })
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Sound speed at infinity.
    pub fn v_s(&self) -> f64 {
        self.v_s
    }

    /// Growth exponent metadata, when known.
    pub fn p0(&self) -> Option<f64> {
        self.p0
    }

    /// `(r0, a, v_s)`.
    pub fn derived_constants(&self) -> (f64, f64, f64) {
        (self.r0, self.a, self.v_s)
    }

    /// Largest `s` accepted by [`f_eval`](Self::f_eval), if bounded.
    pub fn domain_max(&self) -> f64 {
        match &self.kind {
            NonlinearityKind::Tabulated(t) => t.hi(),
            _ => f64::INFINITY,
        }
    }

    /// Errors when `s` cannot be evaluated by this model.
    pub fn check_domain(&self, s: f64) -> Result<()> {
        match &self.kind {
            NonlinearityKind::Tabulated(t) => t.check(s),
            _ if s < 0.0 || !s.is_finite() => Err(Error::OutOfDomain {
                s,
                lo: 0.0,
                hi: f64::INFINITY,
            }),
            _ => Ok(()),
        }
    }

    pub fn f_eval(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(self.f_unchecked(s))
    }

    pub fn v_eval(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(self.v_unchecked(s))
    }

    /// `F(s)` without the domain check; callers must have validated `s`.
    #[inline]
    pub(crate) fn f_unchecked(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::GrossPitaevskii => 1.0 - s,
            NonlinearityKind::CubicQuintic { alpha1, alpha3, alpha5 } => {
                -alpha1 + s * (alpha3 - alpha5 * s)
            }
            NonlinearityKind::Tabulated(t) => t.value(s),
        }
    }

    #[inline]
    pub(crate) fn v_unchecked(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::GrossPitaevskii => 0.5 * (1.0 - s) * (1.0 - s),
            NonlinearityKind::CubicQuintic { alpha1, alpha3, alpha5 } => {
                // V(s) = G(r0²) - G(s), G(s) = -α1 s + α3 s²/2 - α5 s³/3, written
                // in powers of (s - r0²) so that V(r0²) = 0 exactly.
                let r2 = self.r0 * self.r0;
                let d = s - r2;
                let f0 = -alpha1 + r2 * (alpha3 - alpha5 * r2);
                let f1 = alpha3 - 2.0 * alpha5 * r2;
                let f2 = -alpha5;
                -(f0 * d + 0.5 * f1 * d * d + f2 * d * d * d / 3.0)
            }
            NonlinearityKind::Tabulated(t) => t.integral(s, self.r0 * self.r0),
        }
    }

    /// Centered-difference estimate of `F'(s)`.
    pub fn f_prime_numeric(&self, s: f64) -> Result<f64> {
        let h = 1e-6 * s.abs().max(1.0);
        Ok((self.f_eval(s + h)? - self.f_eval(s - h)?) / (2.0 * h))
    }
}

/// Odd `C¹` cutoff: identity on `[0, 2r0]`, quadratic bridge on `[2r0, 4r0]`,
/// plateau `3r0` beyond.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffPhi {
    r0: f64,
}

impl CutoffPhi {
    /// Identifier written into field-file headers.
    pub const CONSTRUCTION_ID: u8 = 1;

    pub fn new(r0: f64) -> Self {
        assert!(r0 > 0.0, "r0 must be positive");
        Self { r0 }
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        let x = s.abs();
        let r0 = self.r0;
        let v = if x <= 2.0 * r0 {
            x
        } else if x >= 4.0 * r0 {
            3.0 * r0
        } else {
            let t = (x - 2.0 * r0) / (2.0 * r0);
            2.0 * r0 * (1.0 + t - 0.5 * t * t)
        };
        v.copysign(s)
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        let x = s.abs();
        let r0 = self.r0;
        if x <= 2.0 * r0 {
            1.0
        } else if x >= 4.0 * r0 {
            0.0
        } else {
            1.0 - (x - 2.0 * r0) / (2.0 * r0)
        }
    }
}

/// `W(s) = V(s) - V(φ²(√s))`; vanishes on `[0, 4r0²]`.
pub fn w_split(model: &NonlinearityModel, phi: &CutoffPhi, s: f64) -> Result<f64> {
    let root = s.max(0.0).sqrt();
    if root <= 2.0 * phi.r0() {
        return Ok(0.0);
    }
    let p = phi.value(root);
    Ok(model.v_eval(s)? - model.v_eval(p * p)?)
}

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Clone, Debug, PartialEq)]
pub struct Tabulated {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    /// `∫_{xs[0]}^{xs[k]} F`, exact for the interpolant.
    cumulative: Vec<f64>,
}

impl Tabulated {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidModel("tabulated F needs at least 3 samples".into()));
        }
        let xs: Vec<f64> = samples.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = samples.iter().map(|p| p.1).collect();
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite tabulated sample".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel("tabulated s values must be strictly increasing".into()));
        }
        let slopes = pchip_slopes(&xs, &ys);
        let mut t = Self { xs, ys, slopes, cumulative: Vec::new() };
        let mut cumulative = vec![0.0; t.xs.len()];
        for k in 1..t.xs.len() {
            cumulative[k] = cumulative[k - 1] + t.segment_integral(k - 1, t.xs[k - 1], t.xs[k]);
        }
        t.cumulative = cumulative;
        Ok(t)
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    fn check(&self, s: f64) -> Result<()> {
        if s >= self.lo() && s <= self.hi() {
            Ok(())
        } else {
            Err(Error::OutOfDomain { s, lo: self.lo(), hi: self.hi() })
        }
    }

    fn segment(&self, s: f64) -> usize {
        match self.xs.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
            Ok(k) => k.min(self.xs.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    fn eval_in(&self, k: usize, s: f64) -> f64 {
        let h = self.xs[k + 1] - self.xs[k];
        let t = (s - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1]
    }

    fn derivative_in(&self, k: usize, s: f64) -> f64 {
        let h = self.xs[k + 1] - self.xs[k];
        let t = (s - self.xs[k]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.ys[k] + d10 * self.slopes[k] + d01 * self.ys[k + 1] + d11 * self.slopes[k + 1]
    }

    // Simpson's rule is exact on a cubic segment.
    fn segment_integral(&self, k: usize, lo: f64, hi: f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        (hi - lo) / 6.0 * (self.eval_in(k, lo) + 4.0 * self.eval_in(k, mid) + self.eval_in(k, hi))
    }

    pub fn value(&self, s: f64) -> f64 {
        self.eval_in(self.segment(s), s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.derivative_in(self.segment(s), s)
    }

    fn primitive(&self, s: f64) -> f64 {
        let k = self.segment(s);
        self.cumulative[k] + self.segment_integral(k, self.xs[k], s)
    }

    /// `∫_s^{upper} F`.
    pub fn integral(&self, s: f64, upper: f64) -> f64 {
        self.primitive(upper) - self.primitive(s)
    }

    /// Largest root where the interpolant crosses from positive to negative.
    fn find_root(&self) -> Result<f64> {
        let n = self.xs.len();
        for k in (0..n - 1).rev() {
            let (ya, yb) = (self.ys[k], self.ys[k + 1]);
            if yb == 0.0 && ya > 0.0 {
                return Ok(self.xs[k + 1]);
            }
            if ya > 0.0 && yb < 0.0 {
                let (mut lo, mut hi) = (self.xs[k], self.xs[k + 1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.eval_in(k, mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (flo, fhi) = (self.eval_in(k, lo).abs(), self.eval_in(k, hi).abs());
                return Ok(if flo <= fhi { lo } else { hi });
            }
        }
        Err(Error::InvalidModel("tabulated F has no positive-to-negative root".into()))
    }
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}
