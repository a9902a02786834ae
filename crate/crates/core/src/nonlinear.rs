use std::fmt;
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar nonlinearity `u ↦ g(u)` together with its derivative.
///
/// Signs and constant factors of the weak form are folded into the function
/// itself, so a convective term `-∫ f(u)·∇v` is represented by `-f`.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    value: ScalarFn,
    derivative: ScalarFn,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Nonlinearity").field(&self.name).finish()
    }
}

impl Nonlinearity {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        (self.value)(u)
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        (self.derivative)(u)
    }

    /// `c · g`
    pub fn scaled(&self, c: f64) -> Self {
        let v = self.value.clone();
        let d = self.derivative.clone();
        Self {
            name: format!("{c}*{}", self.name),
            value: Arc::new(move |u| c * v(u)),
            derivative: Arc::new(move |u| c * d(u)),
        }
    }

    /// First-order Taylor expansion of `g` about `v`, evaluated at `w`.
    #[inline]
    pub fn taylor(&self, w: f64, v: f64) -> f64 {
        self.value(v) + self.derivative(v) * (w - v)
    }

    pub fn linear(c: f64) -> Self {
        Self::new(format!("{c}*u"), move |u| c * u, move |_| c)
    }

    pub fn power(p: i32) -> Self {
        Self::new(
            format!("u^{p}"),
            move |u| u.powi(p),
            move |u| if p == 0 { 0.0 } else { p as f64 * u.powi(p - 1) },
        )
    }

    pub fn exp() -> Self {
        Self::new("exp(u)", f64::exp, f64::exp)
    }

    /// Fractional-flow function `u² / (u² + (1-u)²)`.
    pub fn fractional_flow() -> Self {
        Self::new("u^2/(u^2+(1-u)^2)", fractional_flow, fractional_flow_derivative)
    }

    /// Gravity-modified fractional flow `f(u)(1 - 5(1-u)²)`.
    pub fn gravity_flow() -> Self {
        Self::new(
            "f(u)(1-5(1-u)^2)",
            |u| fractional_flow(u) * (1.0 - 5.0 * (1.0 - u).powi(2)),
            |u| {
                let w = 1.0 - 5.0 * (1.0 - u).powi(2);
                fractional_flow_derivative(u) * w + fractional_flow(u) * 10.0 * (1.0 - u)
            },
        )
    }
}

fn fractional_flow(u: f64) -> f64 {
    let d = u * u + (1.0 - u) * (1.0 - u);
    u * u / d
}

fn fractional_flow_derivative(u: f64) -> f64 {
    // d/du [u²/D] with D = u² + (1-u)², D' = 4u - 2
    let d = u * u + (1.0 - u) * (1.0 - u);
    (2.0 * u * d - u * u * (4.0 * u - 2.0)) / (d * d)
}
