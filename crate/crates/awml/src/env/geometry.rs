//! Angles, gaze cones, and quadrant zones.
//!
//! The room is a square of half-extent `half_extent` centered on the agent.
//! Each quadrant holds an annular-sector "zone" around its diagonal (45°,
//! 135°, 225°, 315°) where external agents live. The room config invariant
//! `fov < 90 − 2·zone_half_angle` makes it geometrically impossible for one
//! gaze cone to touch two zones, which is what keeps at most one behavior
//! visible at a time.
//!
//! Angle conventions: degrees, counterclockwise positive, orientations
//! normalized into [0, 360). The field-of-view boundary is inclusive.

use super::EnvError;

/// Normalizes an angle in degrees into [0, 360).
pub fn norm_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r == 360.0 {
        0.0
    } else {
        r
    }
}

/// Signed minimal circular difference `a − b` in (−180, 180].
pub fn circ_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Bearing of a point from the origin, in [0, 360).
pub fn bearing_deg(p: [f64; 2]) -> f64 {
    norm_deg(p[1].atan2(p[0]).to_degrees())
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Moves `from` toward `to` by at most `step`, landing exactly on `to` when
/// within reach.
pub fn step_toward(from: [f64; 2], to: [f64; 2], step: f64) -> [f64; 2] {
    let d = dist(from, to);
    if d <= step || d == 0.0 {
        to
    } else {
        let f = step / d;
        [from[0] + f * (to[0] - from[0]), from[1] + f * (to[1] - from[1])]
    }
}

/// Distance from the origin to the closed segment `ab`. Zones are angularly
/// convex but their inner arc is not, so a straight transit between two
/// in-zone points stays in-zone exactly when this distance clears the inner
/// radius.
pub fn origin_segment_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (a[0] * a[0] + a[1] * a[1]).sqrt();
    }
    let t = (-(a[0] * dx + a[1] * dy) / len2).clamp(0.0, 1.0);
    dist([a[0] + t * dx, a[1] + t * dy], [0.0, 0.0])
}

/// Gaze kinematics: `Stay` is identity, rotations add their signed angle.
pub fn rotate_deg(orientation: f64, delta: f64) -> f64 {
    norm_deg(orientation + delta)
}

/// Whether `p` lies inside the gaze cone of half-width `fov_deg/2` around
/// `orientation_deg`, boundary inclusive. The origin has no bearing and is
/// rejected.
pub fn visible(orientation_deg: f64, p: [f64; 2], fov_deg: f64) -> Result<bool, EnvError> {
    if p[0] == 0.0 && p[1] == 0.0 {
        return Err(EnvError::Geometry("visibility query for a point at the origin".into()));
    }
    Ok(circ_diff_deg(bearing_deg(p), orientation_deg).abs() <= fov_deg / 2.0)
}

/// Annular sector around a quadrant diagonal.
#[derive(Clone, Copy, Debug)]
pub struct Zone {
    pub diag_deg: f64,
    pub half_angle_deg: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Zone {
    pub fn for_quadrant(quadrant: u8, half_angle_deg: f64, radii: [f64; 2]) -> Zone {
        assert!((1..=4).contains(&quadrant), "quadrant must be 1..=4");
        Zone {
            diag_deg: 45.0 + 90.0 * (quadrant - 1) as f64,
            half_angle_deg,
            r_min: radii[0],
            r_max: radii[1],
        }
    }

    /// Angular sub-sector, used to split a zone into halves for the mimicry
    /// pair. `lo` and `hi` are offsets in degrees relative to the diagonal.
    pub fn sub_sector(&self, lo: f64, hi: f64) -> Zone {
        debug_assert!(lo < hi);
        debug_assert!(lo >= -self.half_angle_deg && hi <= self.half_angle_deg);
        Zone {
            diag_deg: norm_deg(self.diag_deg + (lo + hi) / 2.0),
            half_angle_deg: (hi - lo) / 2.0,
            r_min: self.r_min,
            r_max: self.r_max,
        }
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if r < self.r_min - tol || r > self.r_max + tol {
            return false;
        }
        circ_diff_deg(bearing_deg(p), self.diag_deg).abs() <= self.half_angle_deg + tol
    }

    /// Nearest in-zone point: radius and angular offset clamped
    /// independently in polar coordinates.
    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt().clamp(self.r_min, self.r_max);
        let off = circ_diff_deg(bearing_deg(p), self.diag_deg)
            .clamp(-self.half_angle_deg, self.half_angle_deg);
        let theta = (self.diag_deg + off).to_radians();
        [r * theta.cos(), r * theta.sin()]
    }

    /// Distance to the nearest zone edge (radial edges exactly, angular
    /// edges via arc length), for boundary-proximity triggers.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let off = circ_diff_deg(bearing_deg(p), self.diag_deg);
        let radial = (r - self.r_min).min(self.r_max - r);
        let angular = (self.half_angle_deg - off.abs()).to_radians() * r;
        radial.min(angular)
    }

    /// Center of the zone: on the diagonal at mid radius.
    pub fn center(&self) -> [f64; 2] {
        let r = (self.r_min + self.r_max) / 2.0;
        let t = self.diag_deg.to_radians();
        [r * t.cos(), r * t.sin()]
    }

    /// Area-uniform sample.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> [f64; 2] {
        let u: f64 = rng.gen_range(0.0..1.0);
        let r = (self.r_min * self.r_min + u * (self.r_max * self.r_max - self.r_min * self.r_min))
            .sqrt();
        let off: f64 = rng.gen_range(-self.half_angle_deg..self.half_angle_deg);
        let t = (self.diag_deg + off).to_radians();
        [r * t.cos(), r * t.sin()]
    }
}
