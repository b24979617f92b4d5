//! Complex ray gains and channel statistics.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, Vector3};
use crate::raytracer::{InteractionKind, Path, SPEED_OF_LIGHT};
use crate::scene::{EdgeId, Material, Orientation, Scene};

/// Vacuum permittivity in F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_8128e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EmError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("incidence angle {0} rad is outside [0, pi/2)")]
    Incidence(f64),
    #[error("edge {0} does not form a valid wedge")]
    DegenerateWedge(EdgeId),
    #[error("wedge exterior factor {0} is outside [1, 2]")]
    WedgeFactor(f64),
    #[error("ray is parallel to the edge")]
    GrazingEdge,
}

fn positive(what: &'static str, value: f64) -> Result<f64, EmError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(EmError::NonPositive { what, value })
    }
}

pub fn wavelength(f: f64) -> f64 {
    SPEED_OF_LIGHT / f
}

pub fn wavenumber(f: f64) -> f64 {
    2.0 * PI * f / SPEED_OF_LIGHT
}

/// Free-space amplitude `λ/(4πd)·e^{-jkd}`.
pub fn free_space_gain(d: f64, f: f64) -> Result<Complex64, EmError> {
    let d = positive("distance", d)?;
    let f = positive("frequency", f)?;
    Ok(Complex64::from_polar(wavelength(f) / (4.0 * PI * d), -wavenumber(f) * d))
}

/// Free-space loss `20·log10(4πd/λ)` in dB.
pub fn free_space_loss_db(d: f64, f: f64) -> Result<f64, EmError> {
    let d = positive("distance", d)?;
    let f = positive("frequency", f)?;
    Ok(20.0 * (4.0 * PI * d / wavelength(f)).log10())
}

/// Polarization relative to the plane of incidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Polarization {
    /// Electric field perpendicular to the plane of incidence.
    #[default]
    Te,
    /// Electric field in the plane of incidence.
    Tm,
}

/// Antenna polarization of the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LinkPolarization {
    #[default]
    Vertical,
    Horizontal,
}

impl LinkPolarization {
    /// Polarization seen by a face of the given orientation.
    pub fn on(self, orientation: Orientation) -> Polarization {
        let wall = orientation != Orientation::Horizontal;
        match (self, wall) {
            (LinkPolarization::Vertical, true) | (LinkPolarization::Horizontal, false) => Polarization::Te,
            _ => Polarization::Tm,
        }
    }
}

/// Complex relative permittivity `ε_r - jσ/(2πfε0)`.
pub fn complex_permittivity(material: &Material, f: f64) -> Complex64 {
    Complex64::new(material.permittivity, -material.conductivity / (2.0 * PI * f * VACUUM_PERMITTIVITY))
}

fn fresnel_with(theta_i: f64, eps: Complex64, pol: Polarization) -> Complex64 {
    let (s, c) = theta_i.sin_cos();
    let root = (eps - s * s).sqrt();
    match pol {
        Polarization::Te => (c - root) / (c + root),
        Polarization::Tm => (root - eps * c) / (root + eps * c),
    }
}

/// Fresnel reflection coefficient for incidence angle `theta_i` measured from the normal.
///
/// Both polarizations give `(1-√ε)/(1+√ε)` at normal incidence.
pub fn fresnel_reflection(theta_i: f64, material: &Material, f: f64, pol: Polarization) -> Result<Complex64, EmError> {
    let f = positive("frequency", f)?;
    positive("permittivity", material.permittivity)?;
    if !(0.0..FRAC_PI_2).contains(&theta_i) {
        return Err(EmError::Incidence(theta_i));
    }
    Ok(fresnel_with(theta_i, complex_permittivity(material, f), pol))
}

/// Fresnel integrals `(C(x), S(x))` with kernels `cos(πt²/2)` and `sin(πt²/2)`.
pub fn fresnel_integrals(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-15;
    const MAXIT: usize = 200;
    const FPMIN: f64 = 1e-300;
    const XMIN: f64 = 1.5;
    let ax = x.abs();
    let (c, s) = if ax < FPMIN.sqrt() {
        (ax, 0.0)
    } else if ax <= XMIN {
        let mut sum = 0.0;
        let mut sums = 0.0;
        let mut sumc = ax;
        let mut sign = 1.0;
        let fact = FRAC_PI_2 * ax * ax;
        let mut odd = true;
        let mut term = ax;
        let mut n = 3.0;
        for k in 1..=MAXIT {
            term *= fact / k as f64;
            sum += sign * term / n;
            let test = sum.abs() * EPS;
            if odd {
                sign = -sign;
                sums = sum;
                sum = sumc;
            } else {
                sumc = sum;
                sum = sums;
            }
            if term < test {
                break;
            }
            odd = !odd;
            n += 2.0;
        }
        (sumc, sums)
    } else {
        let pix2 = PI * ax * ax;
        let mut b = Complex64::new(1.0, -pix2);
        let mut cc = Complex64::new(1.0 / FPMIN, 0.0);
        let mut d = b.inv();
        let mut h = d;
        let mut n = -1.0;
        for _ in 2..=MAXIT {
            n += 2.0;
            let a = -n * (n + 1.0);
            b += 4.0;
            d = (d * a + b).inv();
            cc = b + cc.inv() * a;
            let del = cc * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < EPS {
                break;
            }
        }
        h *= Complex64::new(ax, -ax);
        let cs = Complex64::new(0.5, 0.5) * (1.0 - Complex64::from_polar(1.0, 0.5 * pix2) * h);
        (cs.re, cs.im)
    };
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

/// UTD transition function `F(X) = 2j√X e^{jX} ∫_{√X}^∞ e^{-jτ²} dτ` for `X ≥ 0`.
pub fn transition_function(x: f64) -> Complex64 {
    if x <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let sx = x.sqrt();
    let (c, s) = fresnel_integrals(sx * (2.0 / PI).sqrt());
    let tail = Complex64::new(0.5 - c, -(0.5 - s)) * (PI / 2.0).sqrt();
    Complex64::new(0.0, 2.0 * sx) * Complex64::from_polar(1.0, x) * tail
}

/// Angles and distances of a diffraction at a wedge edge.
///
/// Angles are measured in the plane normal to the edge from the `0` face through the
/// exterior; the exterior spans `[0, nπ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgeGeometry {
    /// Exterior angle over `π`.
    pub n: f64,
    /// Incident angle from the `0` face.
    pub phi_incident: f64,
    /// Diffracted angle from the `0` face.
    pub phi_diffracted: f64,
    /// Angle between the incident ray and the edge.
    pub beta0: f64,
    /// Source to edge distance.
    pub s_incident: f64,
    /// Edge to observer distance.
    pub s_diffracted: f64,
}

impl WedgeGeometry {
    /// Spherical-wave distance parameter.
    pub fn distance_parameter(&self) -> f64 {
        let s = self.s_diffracted;
        let sp = self.s_incident;
        s * sp / (s + sp) * self.beta0.sin().powi(2)
    }
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

/// One `cot·F` term. `sign` is `+1` for `a⁺`, `-1` for `a⁻`.
fn utd_term(beta: f64, sign: f64, n: f64, kl: f64) -> Complex64 {
    let big_n = ((beta + sign * PI) / (2.0 * PI * n)).round();
    let delta = PI + sign * beta - sign * 2.0 * PI * n * big_n;
    if delta.abs() < 1e-12 {
        return Complex64::new(0.0, 0.0);
    }
    let a = 2.0 * ((2.0 * n * PI * big_n - beta) / 2.0).cos().powi(2);
    transition_function(kl * a) * cot((PI + sign * beta) / (2.0 * n))
}

/// Scalar diffraction coefficient with face reflection coefficients `r0` and `rn`.
///
/// `r0 = rn = -1` gives the soft coefficient and `+1` the hard one.
pub fn utd_coefficient(geom: &WedgeGeometry, f: f64, r0: Complex64, rn: Complex64) -> Result<Complex64, EmError> {
    let f = positive("frequency", f)?;
    positive("incident distance", geom.s_incident)?;
    positive("diffracted distance", geom.s_diffracted)?;
    if !(1.0..=2.0).contains(&geom.n) {
        return Err(EmError::WedgeFactor(geom.n));
    }
    let sin_b0 = geom.beta0.sin();
    if sin_b0.abs() < 1e-9 {
        return Err(EmError::GrazingEdge);
    }
    let k = wavenumber(f);
    let n = geom.n;
    let kl = k * geom.distance_parameter();
    let minus = geom.phi_diffracted - geom.phi_incident;
    let plus = geom.phi_diffracted + geom.phi_incident;
    let sum = utd_term(minus, 1.0, n, kl)
        + utd_term(minus, -1.0, n, kl)
        + r0 * utd_term(plus, -1.0, n, kl)
        + rn * utd_term(plus, 1.0, n, kl);
    let lead = -Complex64::from_polar(1.0, -FRAC_PI_4) / (2.0 * n * (2.0 * PI * k).sqrt() * sin_b0);
    Ok(lead * sum)
}

/// Wedge description of a scene edge: exterior factor, `0` face and its in-plane axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wedge {
    pub edge: EdgeId,
    pub n: f64,
    pub origin: Point3,
    pub direction: Vector3,
    /// Unit vector along the `0` face, pointing away from the edge.
    pub face0_axis: Vector3,
    /// Outward normal of the `0` face.
    pub face0_normal: Vector3,
    pub face0: usize,
    pub face_n: usize,
}

fn face_axis(scene: &Scene, face: usize, origin: Point3, dir: Vector3) -> Option<Vector3> {
    let normal = scene.faces[face].normal();
    let axis = normal.cross(dir).normalized()?;
    let towards = scene.faces[face].polygon.centroid() - origin;
    Some(if axis.dot(towards) >= 0.0 { axis } else { -axis })
}

impl Wedge {
    pub fn of(scene: &Scene, edge: EdgeId) -> Result<Wedge, EmError> {
        let e = &scene.edges[edge];
        if e.faces.len() != 2 {
            return Err(EmError::DegenerateWedge(edge));
        }
        let direction = (e.b - e.a).normalized().ok_or(EmError::DegenerateWedge(edge))?;
        let (f0, fn_) = (e.faces[0], e.faces[1]);
        let t0 = face_axis(scene, f0, e.a, direction).ok_or(EmError::DegenerateWedge(edge))?;
        let tn = face_axis(scene, fn_, e.a, direction).ok_or(EmError::DegenerateWedge(edge))?;
        let interior = t0.dot(tn).clamp(-1.0, 1.0).acos();
        if interior < 1e-6 || interior > PI - 1e-6 {
            return Err(EmError::DegenerateWedge(edge));
        }
        let face0_normal = scene.faces[f0].normal();
        Ok(Wedge {
            edge,
            n: (2.0 * PI - interior) / PI,
            origin: e.a,
            direction,
            face0_axis: t0,
            face0_normal,
            face0: f0,
            face_n: fn_,
        })
    }

    /// Angle of `p` from the `0` face, measured through the exterior.
    pub fn angle_of(&self, p: Point3) -> f64 {
        let v = p - self.origin;
        let v = v - self.direction * v.dot(self.direction);
        let a = v.dot(self.face0_normal).atan2(v.dot(self.face0_axis));
        let a = if a < 0.0 { a + 2.0 * PI } else { a };
        a.min(self.n * PI)
    }

    /// Geometry of a diffraction at `q` on the edge from `source` to `observer`.
    ///
    /// `s_incident` overrides the straight source distance, e.g. for an unfolded path.
    pub fn geometry(&self, source: Point3, q: Point3, observer: Point3, s_incident: f64) -> Result<WedgeGeometry, EmError> {
        let inc = (q - source).normalized().ok_or(EmError::NonPositive { what: "incident distance", value: 0.0 })?;
        Ok(WedgeGeometry {
            n: self.n,
            phi_incident: self.angle_of(source),
            phi_diffracted: self.angle_of(observer),
            beta0: inc.dot(self.direction).clamp(-1.0, 1.0).acos(),
            s_incident,
            s_diffracted: q.distance(observer),
        })
    }
}

/// Diffraction coefficient of a lossy wedge, using face Fresnel coefficients.
pub fn utd_diffraction(
    geom: &WedgeGeometry,
    face0: &Material,
    face_n: &Material,
    f: f64,
    pol: Polarization,
) -> Result<Complex64, EmError> {
    let graze = |a: f64| (FRAC_PI_2 - a).clamp(0.0, FRAC_PI_2 - 1e-9);
    let r0 = fresnel_reflection(graze(geom.phi_incident), face0, f, pol)?;
    let rn = fresnel_reflection(graze(geom.n * PI - geom.phi_diffracted), face_n, f, pol)?;
    utd_coefficient(geom, f, r0, rn)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Carrier frequency in Hz.
    pub frequency: f64,
    pub polarization: LinkPolarization,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { frequency: 5.5e9, polarization: LinkPolarization::Vertical, tx_gain_dbi: 0.0, rx_gain_dbi: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayGain {
    /// Linear amplitude relative to unit transmit power.
    pub amplitude: Complex64,
    /// Delay in seconds.
    pub delay: f64,
    /// Index of the path this gain belongs to.
    pub path: usize,
}

impl RayGain {
    pub fn power(&self) -> f64 {
        self.amplitude.norm_sqr()
    }
}

fn incidence_angle(dir: Vector3, normal: Vector3) -> f64 {
    dir.dot(normal).abs().clamp(0.0, 1.0).acos().min(FRAC_PI_2 - 1e-9)
}

/// Complex amplitude of a traced path.
pub fn path_gain(path: &Path, index: usize, scene: &Scene, cfg: &EmConfig) -> Result<RayGain, EmError> {
    let f = positive("frequency", cfg.frequency)?;
    let k = wavenumber(f);
    let points = path.points();
    let mut coeff = Complex64::new(1.0, 0.0);
    let mut unfolded = 0.0;
    let mut amplitude = None;
    for (i, inter) in path.interactions.iter().enumerate() {
        let prev = points[i];
        let here = points[i + 1];
        let next = points[i + 2];
        unfolded += prev.distance(here);
        match inter.kind {
            InteractionKind::Reflection => {
                let face = &scene.faces[inter.id];
                let dir = (here - prev).normalized().ok_or(EmError::NonPositive { what: "segment", value: 0.0 })?;
                let theta = incidence_angle(dir, face.normal());
                let pol = cfg.polarization.on(face.orientation);
                coeff *= fresnel_reflection(theta, scene.material_of(inter.id), f, pol)?;
            }
            InteractionKind::Diffraction => {
                let wedge = Wedge::of(scene, inter.id)?;
                let geom = wedge.geometry(prev, here, next, unfolded)?;
                let wall = scene.faces[wedge.face0].orientation;
                let pol = cfg.polarization.on(wall);
                let d = utd_diffraction(
                    &geom,
                    scene.material_of(wedge.face0),
                    scene.material_of(wedge.face_n),
                    f,
                    pol,
                )?;
                let s = geom.s_diffracted;
                let incident = free_space_gain(unfolded, f)? * coeff;
                let spread = (unfolded / (s * (unfolded + s))).sqrt();
                amplitude = Some(incident * d * spread * Complex64::from_polar(1.0, -k * s));
                break;
            }
        }
    }
    let amplitude = match amplitude {
        Some(a) => a,
        None => free_space_gain(path.length, f)? * coeff,
    };
    let antenna = 10f64.powf((cfg.tx_gain_dbi + cfg.rx_gain_dbi) / 20.0);
    Ok(RayGain { amplitude: amplitude * antenna, delay: path.delay, path: index })
}

pub fn path_gains(paths: &[Path], scene: &Scene, cfg: &EmConfig) -> Result<Vec<RayGain>, EmError> {
    paths.iter().enumerate().map(|(i, p)| path_gain(p, i, scene, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Path loss in dB; infinite when no ray arrives.
    pub path_loss_db: f64,
    /// RMS delay spread in seconds.
    pub rms_delay_spread: f64,
    pub rays: Vec<RayGain>,
}

impl ChannelStats {
    pub fn is_outage(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Power-weighted RMS spread of `(power, delay)` pairs.
pub fn rms_delay_spread(rays: &[(f64, f64)]) -> f64 {
    let total: f64 = rays.iter().map(|r| r.0).sum();
    if rays.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let origin = rays.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let mean = rays.iter().map(|r| r.0 * (r.1 - origin)).sum::<f64>() / total;
    let second = rays.iter().map(|r| r.0 * (r.1 - origin) * (r.1 - origin)).sum::<f64>() / total;
    (second - mean * mean).max(0.0).sqrt()
}

/// Path loss and RMS delay spread of a ray set.
pub fn channel_stats(rays: &[RayGain]) -> ChannelStats {
    let total: f64 = rays.iter().map(RayGain::power).sum();
    let path_loss_db = if rays.is_empty() || total <= 0.0 { f64::INFINITY } else { -10.0 * total.log10() };
    let pairs: Vec<(f64, f64)> = rays.iter().map(|r| (r.power(), r.delay)).collect();
    ChannelStats { path_loss_db, rms_delay_spread: rms_delay_spread(&pairs), rays: rays.to_vec() }
}

/// Empirical CDF as `(value, cumulative probability)` pairs, ascending.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn fresnel_integrals_match_quadrature() {
        for &x in &[0.1, 0.7, 1.2, 1.5, 1.6, 2.5, 4.0] {
            let c = simpson(|t| (FRAC_PI_2 * t * t).cos(), 0.0, x, 20000);
            let s = simpson(|t| (FRAC_PI_2 * t * t).sin(), 0.0, x, 20000);
            let (fc, fs) = fresnel_integrals(x);
            assert!((fc - c).abs() < 1e-10, "C({x})");
            assert!((fs - s).abs() < 1e-10, "S({x})");
        }
        let (c, s) = fresnel_integrals(1e4);
        assert!((c - 0.5).abs() < 1e-4 && (s - 0.5).abs() < 1e-4);
    }

    #[test]
    fn transition_function_limits() {
        assert!((transition_function(1e4) - Complex64::new(1.0, 0.0)).norm() < 1e-4);
        let x = 1e-6;
        let small = Complex64::from_polar((PI * x).sqrt(), FRAC_PI_4);
        assert!((transition_function(x) - small).norm() < 1e-5);
    }

    #[test]
    fn normal_incidence_lossless() {
        let m = Material::new("glass", 4.0, 0.0);
        for pol in [Polarization::Te, Polarization::Tm] {
            let g = fresnel_reflection(0.0, &m, 1e9, pol).unwrap();
            assert!((g - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn brewster_minimum() {
        let m = Material::new("d", 4.0, 0.0);
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..15000 {
            let th = i as f64 * 1e-4;
            let g = fresnel_reflection(th, &m, 1e9, Polarization::Tm).unwrap().norm();
            if g < best.0 {
                best = (g, th);
            }
        }
        assert!((best.1 - 2f64.atan()).abs() < 2e-4);
    }

    #[test]
    fn conductor_limit() {
        let m = Material::new("metal", 1.0, 1e9);
        let g = fresnel_reflection(0.4, &m, 1e9, Polarization::Te).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn free_space_reference() {
        let l = free_space_loss_db(1.0, 5.5e9).unwrap();
        assert!((l - 47.25).abs() < 0.01);
        let g = free_space_gain(1.0, 5.5e9).unwrap();
        assert!((-20.0 * g.norm().log10() - l).abs() < 1e-9);
        assert!(free_space_gain(0.0, 1e9).is_err());
        assert!(free_space_gain(1.0, -1.0).is_err());
    }

    fn knife(phi: f64, phi_i: f64) -> WedgeGeometry {
        WedgeGeometry { n: 2.0, phi_incident: phi_i, phi_diffracted: phi, beta0: FRAC_PI_2, s_incident: 10.0, s_diffracted: 5.0 }
    }

    #[test]
    fn total_field_continuous_at_shadow_boundary() {
        let f = 1e9;
        let k = wavenumber(f);
        let (sp, s, phi_i) = (10.0, 5.0, PI / 3.0);
        let src = Complex64::from_polar(sp, phi_i);
        let field = |phi: f64| {
            let obs = Complex64::from_polar(s, phi);
            let r = (obs - src).norm();
            let lit = phi < PI + phi_i;
            let go = if lit { Complex64::from_polar(1.0 / r, -k * r) } else { Complex64::new(0.0, 0.0) };
            let d = utd_coefficient(&knife(phi, phi_i), f, Complex64::new(-1.0, 0.0), Complex64::new(-1.0, 0.0)).unwrap();
            let edge = Complex64::from_polar(1.0 / sp, -k * sp);
            go + edge * d * (sp / (s * (s + sp))).sqrt() * Complex64::from_polar(1.0, -k * s)
        };
        let isb = PI + phi_i;
        let a = field(isb - 1e-7);
        let b = field(isb + 1e-7);
        assert!((a - b).norm() / a.norm() < 0.01, "{a} {b}");
    }

    #[test]
    fn shadow_decays() {
        let f = 1e9;
        let phi_i = PI / 3.0;
        let mut last = f64::INFINITY;
        for i in 1..20 {
            let phi = PI + phi_i + i as f64 * 0.04;
            let d = utd_coefficient(&knife(phi, phi_i), f, Complex64::new(-1.0, 0.0), Complex64::new(-1.0, 0.0))
                .unwrap()
                .norm();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn reciprocity_right_angle_wedge() {
        let g = |a: f64, b: f64| WedgeGeometry {
            n: 1.5,
            phi_incident: a,
            phi_diffracted: b,
            beta0: 1.1,
            s_incident: 7.0,
            s_diffracted: 7.0,
        };
        let r = Complex64::new(-0.4, 0.1);
        let d1 = utd_coefficient(&g(0.5, 3.2), 2e9, r, r).unwrap();
        let d2 = utd_coefficient(&g(3.2, 0.5), 2e9, r, r).unwrap();
        assert!((d1 - d2).norm() < 1e-12 * d1.norm().max(1.0));
    }

    #[test]
    fn spread_cases() {
        assert_eq!(rms_delay_spread(&[(1.0, 3e-7)]), 0.0);
        let delta = 40e-9;
        let s = rms_delay_spread(&[(2.0, 1e-6), (2.0, 1e-6 + delta)]);
        assert!((s - delta / 2.0).abs() < 1e-12);
        let out = channel_stats(&[]);
        assert!(out.path_loss_db.is_infinite() && out.is_outage());
    }

    #[test]
    fn cdf_is_monotone() {
        let c = cdf(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(c.first().unwrap(), &(1.0, 0.25));
        assert_eq!(c.last().unwrap(), &(3.0, 1.0));
    }
}
