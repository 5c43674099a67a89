//! Planar poses and angle helpers shared by every node.

use serde::{Deserialize, Serialize};

/// Wrap an angle in degrees into `[0, 360)`.
pub fn normalize_deg(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(360.0);
    // rem_euclid rounds tiny negative inputs up to exactly 360.0
    if wrapped >= 360.0 {
        0.0
    } else {
        wrapped
    }
}

/// Wrap an angle in degrees into `(-180, 180]`.
pub fn signed_deg(angle: f64) -> f64 {
    let wrapped = normalize_deg(angle);
    if wrapped > 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Robot pose in the plane. Heading is in degrees, counter-clockwise from +x,
/// kept in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_deg(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn heading_rad(&self) -> f64 {
        self.heading.to_radians()
    }

    /// Express `other` in the frame of `self` (i.e. `self⁻¹ ∘ other`).
    pub fn relative(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.heading_rad().sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose2D::new(c * dx + s * dy, -s * dx + c * dy, other.heading - self.heading)
    }

    /// Compose `self ∘ local`: map a pose given in this frame into the parent frame.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let (s, c) = self.heading_rad().sin_cos();
        Pose2D::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
            self.heading + local.heading,
        )
    }

    /// Point `distance` meters ahead along `heading + bearing_deg`.
    pub fn project(&self, bearing_deg: f64, distance: f64) -> Point {
        let a = (self.heading + bearing_deg).to_radians();
        Point::new(self.x + distance * a.cos(), self.y + distance * a.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_handles_negative_and_wrap() {
        assert_eq!(normalize_deg(-90.0), 270.0);
        assert_eq!(normalize_deg(360.0), 0.0);
        assert_eq!(normalize_deg(725.0), 5.0);
        assert!(normalize_deg(-1e-18) < 360.0);
    }

    #[test]
    fn signed_range() {
        assert_eq!(signed_deg(180.0), 180.0);
        assert_eq!(signed_deg(-180.0), 180.0);
        assert_eq!(signed_deg(350.0), -10.0);
    }

    #[test]
    fn relative_then_compose_roundtrips() {
        let base = Pose2D::new(2.0, -1.0, 33.0);
        let p = Pose2D::new(0.5, 4.0, 200.0);
        let back = base.compose(&base.relative(&p));
        assert!((back.x - p.x).abs() < 1e-12);
        assert!((back.y - p.y).abs() < 1e-12);
        assert!((back.heading - p.heading).abs() < 1e-9);
    }
}
