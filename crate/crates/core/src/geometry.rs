//! Vector algebra, sphere primitives and the angular measurement topology.
//!
//! All lengths are in micrometres. The transmitter body is a reflecting
//! sphere, the receiver an absorbing one; a transmitter of radius zero is the
//! point-source case.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance (µm) for "on the surface" and related containment checks.
pub const SURFACE_TOLERANCE: f64 = 1e-9;

/// Radial distances below this are treated as hitting the sphere center.
const CENTER_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vector3 {
    pub const ZERO: Vector3 = Vector3::new(0.0, 0.0, 0.0);
    pub const X: Vector3 = Vector3::new(1.0, 0.0, 0.0);
    pub const Y: Vector3 = Vector3::new(0.0, 1.0, 0.0);
    pub const Z: Vector3 = Vector3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Vector3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, other: Vector3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction. Fails on zero or non-finite input.
    pub fn normalized(self) -> Result<Vector3> {
        let n = self.norm();
        if !n.is_finite() || n < CENTER_EPSILON {
            return Err(Error::Geometry(format!("cannot normalize {self:?}")));
        }
        Ok(self * (1.0 / n))
    }
}

impl Add for Vector3 {
    type Output = Vector3;
    #[inline]
    fn add(self, rhs: Vector3) -> Vector3 {
        Vector3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vector3 {
    #[inline]
    fn add_assign(&mut self, rhs: Vector3) {
        self.x += rhs.x;
        self.y += rhs.y;
        self.z += rhs.z;
    }
}

impl Sub for Vector3 {
    type Output = Vector3;
    #[inline]
    fn sub(self, rhs: Vector3) -> Vector3 {
        Vector3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vector3 {
    type Output = Vector3;
    #[inline]
    fn mul(self, k: f64) -> Vector3 {
        Vector3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vector3 {
    type Output = Vector3;
    #[inline]
    fn neg(self) -> Vector3 {
        Vector3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vector3,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Vector3, radius: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::Geometry(format!("non-finite sphere center {center:?}")));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::domain("radius", radius, "[0, inf)"));
        }
        Ok(Self { center, radius })
    }

    /// True when `p` lies inside or on the surface.
    #[inline]
    pub fn contains(&self, p: Vector3) -> bool {
        (p - self.center).norm_squared() <= self.radius * self.radius
    }

    /// Signed distance from `p` to the surface (negative inside).
    #[inline]
    pub fn surface_distance(&self, p: Vector3) -> f64 {
        p.distance(self.center) - self.radius
    }

    /// Smallest distance between the two surfaces; negative when they overlap.
    pub fn gap_to(&self, other: &Sphere) -> f64 {
        self.center.distance(other.center) - self.radius - other.radius
    }
}

/// Which point the receiver is swept around when the angle changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotConvention {
    /// Receiver rotates about the transmitter center, keeping the
    /// surface-to-surface gap equal to `d` at every angle.
    #[default]
    TransmitterCenter,
    /// Receiver rotates about the emission point, keeping the
    /// emission-point-to-receiver-surface distance equal to `d`. Only valid
    /// while `d >= 2 r_tx`; otherwise the spheres intersect on the back side.
    EmissionPoint,
}

impl PivotConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            PivotConvention::TransmitterCenter => "transmitter-center",
            PivotConvention::EmissionPoint => "emission-point",
        }
    }
}

impl std::str::FromStr for PivotConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transmitter-center" => Ok(PivotConvention::TransmitterCenter),
            "emission-point" => Ok(PivotConvention::EmissionPoint),
            other => Err(Error::Config(format!("unknown pivot convention {other:?}"))),
        }
    }
}

/// Default in-plane direction for the angular sweep: the component of the
/// coordinate axis least aligned with `boresight` orthogonal to it
/// (+y for a +x boresight).
pub fn reference_normal(boresight: Vector3) -> Vector3 {
    let axes = [Vector3::X, Vector3::Y, Vector3::Z];
    let mut best = axes[0];
    let mut best_alignment = f64::INFINITY;
    for axis in axes {
        let a = boresight.dot(axis).abs();
        // strict < keeps the earlier axis on ties
        if a < best_alignment - 1e-15 {
            best = axis;
            best_alignment = a;
        }
    }
    let n = best - boresight * boresight.dot(best);
    n * (1.0 / n.norm())
}

fn check_unit(v: Vector3, what: &str) -> Result<()> {
    if !v.is_finite() || (v.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Geometry(format!("{what} must have unit norm, got {v:?}")));
    }
    Ok(())
}

/// Receiver sphere at angle `alpha_deg` from the boresight, rotated about
/// `pivot` in the plane spanned by the boresight and the default reference
/// normal. The receiver center sits at `gap + r_rx` from the pivot.
pub fn place_receiver(
    pivot: Vector3,
    boresight: Vector3,
    alpha_deg: f64,
    gap: f64,
    r_rx: f64,
) -> Result<Sphere> {
    place_receiver_in_plane(pivot, boresight, reference_normal(boresight), alpha_deg, gap, r_rx)
}

/// Same as [`place_receiver`] with an explicit in-plane normal. Passing the
/// negated normal gives the mirror image about the boresight axis.
pub fn place_receiver_in_plane(
    pivot: Vector3,
    boresight: Vector3,
    normal: Vector3,
    alpha_deg: f64,
    gap: f64,
    r_rx: f64,
) -> Result<Sphere> {
    if !(0.0..=180.0).contains(&alpha_deg) {
        return Err(Error::domain("alpha_deg", alpha_deg, "[0, 180]"));
    }
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::domain("d", gap, "(0, inf)"));
    }
    if !(r_rx > 0.0 && r_rx.is_finite()) {
        return Err(Error::domain("r_rx", r_rx, "(0, inf)"));
    }
    check_unit(boresight, "boresight")?;
    check_unit(normal, "reference normal")?;
    if boresight.dot(normal).abs() > 1e-12 {
        return Err(Error::Geometry("reference normal is not orthogonal to boresight".into()));
    }
    if !pivot.is_finite() {
        return Err(Error::Geometry(format!("non-finite pivot {pivot:?}")));
    }

    let alpha = alpha_deg.to_radians();
    // exact values at the quarter points keep the placement examples exact
    let (sin, cos) = match alpha_deg {
        0.0 => (0.0, 1.0),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        _ => alpha.sin_cos(),
    };
    let direction = boresight * cos + normal * sin;
    Sphere::new(pivot + direction * (gap + r_rx), r_rx)
}

/// Transmitter body whose surface point facing the boresight is the emission
/// point. `r_tx = 0` gives the degenerate point source.
pub fn place_transmitter(emission_point: Vector3, boresight: Vector3, r_tx: f64) -> Result<Sphere> {
    if !(r_tx >= 0.0 && r_tx.is_finite()) {
        return Err(Error::domain("r_tx", r_tx, "[0, inf)"));
    }
    check_unit(boresight, "boresight")?;
    Sphere::new(emission_point - boresight * r_tx, r_tx)
}

/// Keeps a proposed step outside a reflecting sphere.
///
/// Points that stay outside pass through unchanged. A point that penetrates
/// the body is mirrored radially about the surface (new radial distance
/// `2 r - rho`). If that is still not strictly outside, or the proposal hits
/// the center, the step is rolled back to `prev`.
#[inline]
pub fn reflect_off_sphere(prev: Vector3, proposed: Vector3, body: &Sphere) -> Vector3 {
    let offset = proposed - body.center;
    let rho_sq = offset.norm_squared();
    let r = body.radius;
    if rho_sq > r * r {
        return proposed;
    }
    let rho = rho_sq.sqrt();
    if rho < CENTER_EPSILON {
        return prev;
    }
    let reflected_rho = 2.0 * r - rho;
    if reflected_rho <= r {
        return prev;
    }
    body.center + offset * (reflected_rho / rho)
}

/// Full measurement geometry for one receiver angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub emission_point: Vector3,
    pub tx_body: Sphere,
    pub rx: Sphere,
    pub boresight_axis: Vector3,
    /// In-plane direction that, together with the boresight, spans the sweep plane.
    pub reference_normal: Vector3,
    pub angle_deg: f64,
    pub distance: f64,
    pub pivot: PivotConvention,
}

impl Topology {
    /// Builds the topology with the emission point at the origin and a +x
    /// boresight.
    pub fn new(
        distance: f64,
        r_tx: f64,
        r_rx: f64,
        angle_deg: f64,
        pivot: PivotConvention,
    ) -> Result<Self> {
        Self::with_normal(distance, r_tx, r_rx, angle_deg, pivot, Vector3::Y)
    }

    pub fn with_normal(
        distance: f64,
        r_tx: f64,
        r_rx: f64,
        angle_deg: f64,
        pivot: PivotConvention,
        normal: Vector3,
    ) -> Result<Self> {
        let emission_point = Vector3::ZERO;
        let boresight = Vector3::X;
        let tx_body = place_transmitter(emission_point, boresight, r_tx)?;
        let rx = match pivot {
            PivotConvention::TransmitterCenter => place_receiver_in_plane(
                tx_body.center,
                boresight,
                normal,
                angle_deg,
                r_tx + distance,
                r_rx,
            )?,
            PivotConvention::EmissionPoint => place_receiver_in_plane(
                emission_point,
                boresight,
                normal,
                angle_deg,
                distance,
                r_rx,
            )?,
        };
        let topology = Self {
            emission_point,
            tx_body,
            rx,
            boresight_axis: boresight,
            reference_normal: normal,
            angle_deg,
            distance,
            pivot,
        };
        topology.validate()?;
        Ok(topology)
    }

    /// Same transmitter and receiver sizes at another angle.
    pub fn at_angle(&self, angle_deg: f64) -> Result<Self> {
        Self::with_normal(
            self.distance,
            self.tx_body.radius,
            self.rx.radius,
            angle_deg,
            self.pivot,
            self.reference_normal,
        )
    }

    pub fn is_point_source(&self) -> bool {
        self.tx_body.radius == 0.0
    }

    /// Checks the emission-point and disjointness invariants.
    pub fn validate(&self) -> Result<()> {
        let surface_offset = self.tx_body.surface_distance(self.emission_point);
        if surface_offset.abs() > SURFACE_TOLERANCE {
            return Err(Error::Geometry(format!(
                "emission point is {surface_offset} µm off the transmitter surface"
            )));
        }
        let gap = self.tx_body.gap_to(&self.rx);
        if gap <= 0.0 {
            return Err(Error::Geometry(format!(
                "transmitter (r={}) and receiver (r={}) overlap at {}° (gap {gap:.4} µm, pivot {})",
                self.tx_body.radius,
                self.rx.radius,
                self.angle_deg,
                self.pivot.as_str()
            )));
        }
        if self.rx.contains(self.emission_point) {
            return Err(Error::Geometry("emission point lies inside the receiver".into()));
        }
        Ok(())
    }
}
