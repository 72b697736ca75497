//! Holomorphic functional calculus through the double contour representation
//!
//! `psi(L) = int_{Gamma+} e^{-zL} eta+(z) dz + int_{Gamma-} e^{-zL} eta-(z) dz`,
//! `eta+-(z) = (1/2 pi i) int_{gamma+-} e^{xi z} psi(xi) dxi`,
//!
//! with `Gamma+- = R+ e^{+-i(pi/2 - theta)}` and `gamma+- = R+ e^{+-i nu}`, plus
//! fractional powers by the subordination integral and an FFT oracle.
//!
//! Orientation: `gamma+` runs from infinity to 0 and `gamma-` from 0 to
//! infinity, so in outward parametrisations `eta+` carries a `+` sign and
//! `eta-` a `-` sign.

use crate::error::{LabError, Result};
use crate::fft::{fourier_multiplier, laplacian_symbol_at};
use crate::grid::{Grid, GridFunction};
use crate::semigroup::SemigroupEngine;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::{FRAC_PI_2, LN_10, PI};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Built-in symbols, all evaluated as `base(scale * z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SymbolKind {
    /// `e^{-z}`.
    Heat,
    /// `z e^{-z}`.
    Psi0,
    /// `z^m e^{-z}`.
    Psi0M { m: u32 },
    /// `z^s` (principal branch).
    Power { s: f64 },
    /// `z / (1 + z)^2`.
    Resolvent2,
    /// `z^m e^{-z} / (1 + z)^m`.
    DampedPower { m: u32 },
    /// `1`.
    One,
}

/// Class tag of a symbol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolClass {
    /// `Psi_{sigma,tau}`: decay at both ends.
    Psi,
    /// Bounded on the sector.
    HInfinity,
    /// Polynomial growth at 0 or infinity.
    PolynomialGrowth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolFunction {
    pub kind: SymbolKind,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl SymbolFunction {
    pub fn new(kind: SymbolKind) -> Self {
        Self { kind, scale: 1.0 }
    }

    /// `psi(s z)`, e.g. `psi(t^2 .)` with `s = t^2`.
    pub fn scaled(self, s: f64) -> Self {
        Self { kind: self.kind, scale: self.scale * s }
    }

    pub fn heat() -> Self {
        Self::new(SymbolKind::Heat)
    }
    pub fn psi0() -> Self {
        Self::new(SymbolKind::Psi0)
    }
    pub fn psi0_m(m: u32) -> Self {
        Self::new(SymbolKind::Psi0M { m })
    }
    pub fn power(s: f64) -> Self {
        Self::new(SymbolKind::Power { s })
    }
    pub fn resolvent2() -> Self {
        Self::new(SymbolKind::Resolvent2)
    }
    pub fn damped_power(m: u32) -> Self {
        Self::new(SymbolKind::DampedPower { m })
    }
    pub fn one() -> Self {
        Self::new(SymbolKind::One)
    }

    fn base(&self, z: C64) -> C64 {
        match self.kind {
            SymbolKind::Heat => (-z).exp(),
            SymbolKind::Psi0 => z * (-z).exp(),
            SymbolKind::Psi0M { m } => z.powu(m) * (-z).exp(),
            SymbolKind::Power { s } => {
                if z == ZERO {
                    if s > 0.0 { ZERO } else if s == 0.0 { C64::new(1.0, 0.0) } else { C64::new(f64::INFINITY, 0.0) }
                } else {
                    z.powf(s)
                }
            }
            SymbolKind::Resolvent2 => z / ((1.0 + z) * (1.0 + z)),
            SymbolKind::DampedPower { m } => (z / (1.0 + z)).powu(m) * (-z).exp(),
            SymbolKind::One => C64::new(1.0, 0.0),
        }
    }

    pub fn evaluate(&self, z: C64) -> C64 {
        self.base(z * self.scale)
    }

    /// Decay order at the origin.
    pub fn sigma(&self) -> f64 {
        match self.kind {
            SymbolKind::Heat | SymbolKind::One => 0.0,
            SymbolKind::Psi0 | SymbolKind::Resolvent2 => 1.0,
            SymbolKind::Psi0M { m } | SymbolKind::DampedPower { m } => m as f64,
            SymbolKind::Power { s } => s,
        }
    }

    /// Decay order at infinity.
    pub fn tau(&self) -> f64 {
        match self.kind {
            SymbolKind::One => 0.0,
            SymbolKind::Resolvent2 => 1.0,
            SymbolKind::Power { s } => -s,
            _ => f64::INFINITY,
        }
    }

    pub fn class(&self) -> SymbolClass {
        let (s, t) = (self.sigma(), self.tau());
        if s > 0.0 && t > 0.0 {
            SymbolClass::Psi
        } else if s >= 0.0 && t >= 0.0 {
            SymbolClass::HInfinity
        } else {
            SymbolClass::PolynomialGrowth
        }
    }

    /// `psi(0)`; infinite when the symbol blows up at the origin.
    pub fn value_at_zero(&self) -> C64 {
        self.base(ZERO)
    }

    /// `(k, s)` when `psi(z) = (s z)^k e^{-s z}`.
    pub fn semigroup_form(&self) -> Option<(u32, f64)> {
        match self.kind {
            SymbolKind::Heat => Some((0, self.scale)),
            SymbolKind::Psi0 => Some((1, self.scale)),
            SymbolKind::Psi0M { m } => Some((m, self.scale)),
            _ => None,
        }
    }

    /// `conj(psi(conj z))`; every built-in has real Taylor data, so this is `psi`.
    pub fn conjugate(&self) -> Self {
        *self
    }

    pub fn formula(&self) -> String {
        let base = match self.kind {
            SymbolKind::Heat => "exp(-z)".to_string(),
            SymbolKind::Psi0 => "z exp(-z)".to_string(),
            SymbolKind::Psi0M { m } => format!("z^{m} exp(-z)"),
            SymbolKind::Power { s } => format!("z^({s})"),
            SymbolKind::Resolvent2 => "z / (1 + z)^2".to_string(),
            SymbolKind::DampedPower { m } => format!("z^{m} exp(-z) / (1 + z)^{m}"),
            SymbolKind::One => "1".to_string(),
        };
        if self.scale == 1.0 { base } else { format!("{base} at z -> {} z", self.scale) }
    }

    pub fn name(&self) -> String {
        match self.kind {
            SymbolKind::Heat => "heat".into(),
            SymbolKind::Psi0 => "psi0".into(),
            SymbolKind::Psi0M { m } => format!("psi0_m{m}"),
            SymbolKind::Power { s } => format!("power({s})"),
            SymbolKind::Resolvent2 => "resolvent2".into(),
            SymbolKind::DampedPower { m } => format!("damped_power{m}"),
            SymbolKind::One => "one".into(),
        }
    }

    /// Samples `|psi|` on the closed sector of half-angle `mu` and returns the
    /// smallest `C` with `|psi(xi)| <= C min(|xi|^sigma, |xi|^-tau)` on the sample,
    /// or the sampled sup norm for bounded classes.
    pub fn class_constant(&self, mu: f64, samples: usize) -> f64 {
        let mut c: f64 = 0.0;
        let per_ray = (samples / 5).max(1);
        for a in 0..5 {
            let ang = mu * (a as f64 / 2.0 - 1.0);
            for k in 0..per_ray {
                let r = 10f64.powf(-6.0 + 12.0 * k as f64 / (per_ray - 1).max(1) as f64) / self.scale;
                let xi = C64::from_polar(r, ang);
                let v = self.evaluate(xi).norm();
                let rs = r * self.scale;
                let bound = match self.class() {
                    // Exponential decay is measured against |xi|^-1.
                    SymbolClass::Psi => rs.powf(self.sigma()).min(rs.powf(-self.tau().min(1.0))),
                    _ => 1.0,
                };
                c = c.max(v / bound);
            }
        }
        c
    }
}

/// Entry of the JSON symbol registry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub name: String,
    pub class: SymbolClass,
    pub sigma: f64,
    /// `None` for exponential decay.
    pub tau: Option<f64>,
    pub formula: String,
    pub symbol: SymbolFunction,
}

/// The built-in battery.
pub fn builtin_symbols() -> Vec<SymbolFunction> {
    vec![
        SymbolFunction::heat(),
        SymbolFunction::psi0(),
        SymbolFunction::psi0_m(2),
        SymbolFunction::psi0_m(3),
        SymbolFunction::power(-0.5),
        SymbolFunction::resolvent2(),
        SymbolFunction::damped_power(2),
    ]
}

pub fn symbol_registry() -> Vec<SymbolRecord> {
    builtin_symbols()
        .into_iter()
        .map(|s| SymbolRecord {
            name: s.name(),
            class: s.class(),
            sigma: s.sigma(),
            tau: Some(s.tau()).filter(|t| t.is_finite()),
            formula: s.formula(),
            symbol: s,
        })
        .collect()
}

/// Contour angles and density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourQuadrature {
    pub theta: f64,
    pub nu: f64,
    pub mu: f64,
    pub nodes_per_decade: usize,
    /// Decades below `1/Lambda_max` and above `1/lambda_min` kept on `Gamma+-`.
    pub decade_range: (f64, f64),
}

impl ContourQuadrature {
    /// Angles at quarter points of `(omega, pi/2)`.
    pub fn for_angle(omega: f64) -> Self {
        let d = FRAC_PI_2 - omega;
        Self { theta: omega + 0.25 * d, nu: omega + 0.5 * d, mu: omega + 0.75 * d, nodes_per_decade: 20, decade_range: (-8.0, 8.0) }
    }

    pub fn for_engine(engine: &SemigroupEngine) -> Self {
        Self::for_angle(engine.operator.sector_angle)
    }

    pub fn with_density(mut self, nodes_per_decade: usize) -> Self {
        self.nodes_per_decade = nodes_per_decade;
        self
    }

    pub fn validate(&self, omega: f64) -> Result<()> {
        if !(omega < self.theta && self.theta < self.nu && self.nu < self.mu && self.mu < FRAC_PI_2) {
            return Err(LabError::AngleIncompatible(format!(
                "need omega < theta < nu < mu < pi/2, got {omega:.4} {:.4} {:.4} {:.4}",
                self.theta, self.nu, self.mu
            )));
        }
        if self.nodes_per_decade == 0 {
            return Err(LabError::AngleIncompatible("nodes_per_decade must be positive".into()));
        }
        Ok(())
    }
}

/// One node of the outer contour: `psi(L) f ~ sum weight * e^{-z L} f`.
#[derive(Clone, Copy, Debug)]
pub struct ContourNode {
    pub z: C64,
    pub eta: C64,
    pub weight: C64,
}

/// `eta+-(z)` by trapezoidal quadrature in `log |xi|` along `gamma+-`.
pub fn eta(psi: &SymbolFunction, quad: &ContourQuadrature, z: C64, sign: f64) -> C64 {
    let dir = C64::from_polar(1.0, sign * quad.nu);
    let du = LN_10 / quad.nodes_per_decade as f64;
    let zn = z.norm();
    let base = (1.0 / psi.scale).min(1.0 / zn);
    let lo_dec = (12.0 / (psi.sigma() + 1.0).max(0.4)).min(30.0);
    let lo = (base.ln() - lo_dec * LN_10).max(-700.0);
    let decay = (zn * (quad.nu - quad.theta).sin()).max(1e-300);
    let mut hi = (45.0 / decay).ln();
    if psi.semigroup_form().is_some() || matches!(psi.kind, SymbolKind::Heat | SymbolKind::DampedPower { .. }) {
        hi = hi.min((45.0 / (psi.scale * quad.nu.cos())).ln());
    }
    let k0 = (lo / du).floor() as i64;
    let k1 = (hi / du).ceil() as i64;
    let mut acc = ZERO;
    for k in k0..=k1 {
        let xi = dir * (k as f64 * du).exp();
        let e = (xi * z).exp();
        if e.norm() < 1e-300 {
            continue;
        }
        acc += e * psi.evaluate(xi) * xi;
    }
    acc * du * sign / C64::new(0.0, 2.0 * PI)
}

/// Outer quadrature nodes for `psi` on an operator with spectrum in
/// `{Re >= floor, |.| <= top, |arg| <= omega}`.
pub fn contour_nodes(psi: &SymbolFunction, quad: &ContourQuadrature, floor: f64, top: f64, omega: f64) -> Result<Vec<ContourNode>> {
    quad.validate(omega)?;
    if psi.tau() <= 0.0 {
        return Err(LabError::QuadratureDivergence(format!("{} does not decay at infinity", psi.name())));
    }
    let phi = FRAC_PI_2 - quad.theta;
    let ds = LN_10 / quad.nodes_per_decade as f64;
    // eta(z) ~ z^{tau-1} near 0, so slow decay at infinity needs a longer ray.
    let tau_dec = (12.0 / psi.tau()).min(40.0);
    let lo = (1.0 / top).ln() + quad.decade_range.0.min(-tau_dec) * LN_10;
    let cap = (45.0 / (floor * (quad.theta - omega).sin())).ln();
    let hi = ((1.0 / floor).ln() + quad.decade_range.1 * LN_10).min(cap);
    let k0 = (lo / ds).floor() as i64;
    let k1 = (hi / ds).ceil() as i64;
    let mut nodes = Vec::new();
    for sign in [1.0, -1.0] {
        for k in k0..=k1 {
            let z = C64::from_polar((k as f64 * ds).exp(), sign * phi);
            let e = eta(psi, quad, z, sign);
            if !e.is_finite() {
                return Err(LabError::QuadratureDivergence(format!("eta({z}) is not finite")));
            }
            nodes.push(ContourNode { z, eta: e, weight: e * z * ds });
        }
    }
    Ok(nodes)
}

fn split_mean(f: &GridFunction) -> (GridFunction, C64) {
    let m = f.mean();
    (f.clone().mean_zero(), m)
}

fn require_mean_zero(f: &GridFunction) -> Result<()> {
    let rel = f.relative_mean();
    if rel > 1e-10 {
        return Err(LabError::NullComponent(rel));
    }
    Ok(())
}

/// `psi(L) f`. Symbols of the form `(sz)^k e^{-sz}` go through the semigroup
/// directly; everything else through the contour quadrature.
pub fn apply_symbol(engine: &SemigroupEngine, psi: &SymbolFunction, quad: &ContourQuadrature, f: &GridFunction) -> Result<GridFunction> {
    if let Some((k, s)) = psi.semigroup_form() {
        return engine.heat_derivative_apply(s, k, f);
    }
    apply_symbol_contour(engine, psi, quad, f)
}

/// `psi(L) f` by the double contour quadrature.
///
/// The constant mode is exactly invariant on the torus, so it is split off
/// and multiplied by `psi(0)`; symbols that blow up at the origin require
/// mean-zero input.
pub fn apply_symbol_contour(engine: &SemigroupEngine, psi: &SymbolFunction, quad: &ContourQuadrature, f: &GridFunction) -> Result<GridFunction> {
    if psi.kind == SymbolKind::One {
        return Ok(f.clone());
    }
    let p0 = psi.value_at_zero();
    if !p0.is_finite() {
        require_mean_zero(f)?;
    }
    let (perp, mean) = split_mean(f);
    let op = &engine.operator;
    let nodes = contour_nodes(psi, quad, op.spectral_floor(), engine.anorm(), op.sector_angle)?;
    let terms: Vec<(C64, C64)> = nodes.iter().map(|n| (n.z, n.weight)).collect();
    let mut v = engine.heat_combination(&terms, &perp.values)?;
    if p0.is_finite() {
        let c = p0 * mean;
        for x in &mut v {
            *x += c;
        }
    }
    Ok(GridFunction { grid: f.grid, values: v })
}

/// Nodes `(t_k, w_k)` of the double-exponential rule for
/// `(1/Gamma(alpha)) int_0^inf t^{alpha-1} g(t) dt`, with `t = tau0 exp(pi/2 sinh u)`.
pub fn fractional_nodes(alpha: f64, floor: f64, top: f64, per_unit: usize) -> Vec<(f64, f64)> {
    let tau0 = 1.0 / (floor * top).sqrt();
    let du = 1.0 / per_unit as f64;
    // Lower end: (t top)^alpha below 1e-16; upper end: e^{-t floor} below 1e-18.
    let need_lo = (36.8 / alpha + (tau0 * top).ln()).max(1.0);
    let need_hi = (45.0 / (tau0 * floor)).ln().max(1.0);
    let u_lo = -(need_lo / FRAC_PI_2).asinh();
    let u_hi = (need_hi / FRAC_PI_2).asinh();
    let k0 = (u_lo / du).floor() as i64;
    let k1 = (u_hi / du).ceil() as i64;
    let g = gamma(alpha);
    (k0..=k1)
        .map(|k| {
            let u = k as f64 * du;
            let e = FRAC_PI_2 * u.sinh();
            let t = tau0 * e.exp();
            let w = du * FRAC_PI_2 * u.cosh() * (alpha * (tau0.ln() + e)).exp() / g;
            (t, w)
        })
        .collect()
}

/// Default density of the fractional-power rule (nodes per unit of `u`).
pub const FRACTIONAL_DENSITY: usize = 24;

/// `L^{-alpha} f` for mean-zero `f`.
pub fn fractional_power_apply(engine: &SemigroupEngine, alpha: f64, f: &GridFunction) -> Result<GridFunction> {
    fractional_power_apply_with(engine, alpha, f, FRACTIONAL_DENSITY)
}

pub fn fractional_power_apply_with(engine: &SemigroupEngine, alpha: f64, f: &GridFunction, per_unit: usize) -> Result<GridFunction> {
    if alpha <= 0.0 {
        return Err(LabError::InvalidParams(format!("alpha must be positive, got {alpha}")));
    }
    require_mean_zero(f)?;
    let f = f.clone().mean_zero();
    let op = &engine.operator;
    let nodes = fractional_nodes(alpha, op.spectral_floor(), engine.anorm(), per_unit);
    let terms: Vec<(C64, C64)> = nodes.iter().map(|&(t, w)| (C64::new(t, 0.0), C64::new(w, 0.0))).collect();
    let v = engine.heat_combination(&terms, &f.values)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(LabError::QuadratureDivergence("fractional power produced non-finite values".into()));
    }
    Ok(GridFunction { grid: f.grid, values: v }.mean_zero())
}

/// `sqrt(L) f = L L^{-1/2} f_perp`.
pub fn sqrt_apply(engine: &SemigroupEngine, f: &GridFunction) -> Result<GridFunction> {
    let perp = f.clone().mean_zero();
    let half = fractional_power_apply(engine, 0.5, &perp)?;
    Ok(engine.operator.apply(&half))
}

/// `psi(c (-Delta_h)) f` by FFT with the exact discrete symbol.
pub fn fourier_oracle(psi: &SymbolFunction, scalar_coeff: C64, grid: &Grid, f: &GridFunction) -> Result<GridFunction> {
    grid.check_same(&f.grid)?;
    let p0 = psi.value_at_zero();
    if !p0.is_finite() {
        require_mean_zero(f)?;
    }
    Ok(fourier_multiplier(f, |i| {
        if i == 0 {
            if p0.is_finite() { p0 } else { ZERO }
        } else {
            psi.evaluate(scalar_coeff * laplacian_symbol_at(grid, i))
        }
    }))
}

/// Oracle for an engine whose operator is `c (-Delta_h)`.
pub fn fourier_oracle_for(engine: &SemigroupEngine, psi: &SymbolFunction, f: &GridFunction) -> Result<GridFunction> {
    let c = engine.operator.scalar().ok_or(LabError::NonScalarOperator)?;
    fourier_oracle(psi, c, &engine.grid(), f)
}

/// Relative `L^2` difference.
pub fn relative_error(a: &GridFunction, b: &GridFunction) -> f64 {
    a.sub(b).l2_norm() / b.l2_norm().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_contour_reproduces_symbol() {
        // On a scalar "operator" mu the representation must return psi(mu).
        for psi in builtin_symbols() {
            let quad = ContourQuadrature::for_angle(0.3);
            let nodes = contour_nodes(&psi, &quad, 0.5, 200.0, 0.3).unwrap();
            for mu in [C64::new(0.7, 0.0), C64::new(3.0, 0.5), C64::from_polar(40.0, -0.25)] {
                let got: C64 = nodes.iter().map(|n| n.weight * (-n.z * mu).exp()).sum();
                let want = psi.evaluate(mu);
                assert!((got - want).norm() < 1e-7, "{} at {mu}: {got} vs {want}", psi.name());
            }
        }
    }

    #[test]
    fn scalar_fractional_rule() {
        for alpha in [0.25, 0.5, 1.0, 2.0] {
            let nodes = fractional_nodes(alpha, 1.0, 1e4, FRACTIONAL_DENSITY);
            for mu in [1.0, 37.0, 9000.0] {
                let got: f64 = nodes.iter().map(|(t, w)| w * (-t * mu).exp()).sum();
                let want = mu.powf(-alpha);
                assert!((got / want - 1.0).abs() < 1e-10, "alpha {alpha} mu {mu}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn registry_tags() {
        let reg = symbol_registry();
        let find = |n: &str| reg.iter().find(|r| r.name == n).unwrap().class;
        assert_eq!(find("psi0"), SymbolClass::Psi);
        assert_eq!(find("heat"), SymbolClass::HInfinity);
        assert_eq!(find("power(-0.5)"), SymbolClass::PolynomialGrowth);
        let json = serde_json::to_string(&reg).unwrap();
        let back: Vec<SymbolRecord> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.len(), reg.len());
    }

    #[test]
    fn class_bounds_are_finite() {
        for psi in builtin_symbols() {
            let c = psi.class_constant(1.2, 1000);
            assert!(c.is_finite() && c > 0.0, "{}", psi.name());
        }
    }
}
