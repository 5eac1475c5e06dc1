use std::f64::consts::{PI, TAU};

use rand::Rng;

use super::params::RenderParams;
use crate::rng::{stream, Stream};
use crate::schema::{AttributeSchema, AttributeVector, RenderRole};

/// Seed-derived pose of one sample. Drawn in a fixed order whatever the
/// attributes are, so counterfactual samples sharing a seed share a pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    /// Ellipse rotation in [0, pi).
    pub rotation: f64,
    /// Spike phase in [0, 2 pi).
    pub spike_phase: f64,
    /// Unit-disc coordinates of the texture centre.
    pub internal_radial: f64,
    pub internal_angle: f64,
}

impl Jitter {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = stream(seed, Stream::Geometry);
        let rotation = rng.random::<f64>() * PI;
        let spike_phase = rng.random::<f64>() * TAU;
        let internal_radial = rng.random::<f64>().sqrt();
        let internal_angle = rng.random::<f64>() * TAU;
        Self {
            rotation,
            spike_phase,
            internal_radial,
            internal_angle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Level of the attribute playing `role`: value minus scale minimum, or 0
/// when no attribute has that role.
pub fn role_level(schema: &AttributeSchema, v: &AttributeVector, role: RenderRole) -> i32 {
    schema
        .by_role(role)
        .and_then(|d| v.get(&d.id).map(|x| x - d.scale.min()))
        .unwrap_or(0)
}

/// Star-shaped nodule outline about the canvas centre: a rotated ellipse
/// whose radius is scaled by `1 + A * max(0, sin(k theta + phase))^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoduleGeometry {
    pub cx: f64,
    pub cy: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub rotation: f64,
    pub spike_amplitude: f64,
    pub spike_count: u32,
    pub spike_sharpness: f64,
    pub spike_phase: f64,
    pub internal: Option<Disc>,
}

impl NoduleGeometry {
    pub fn new(
        schema: &AttributeSchema,
        v: &AttributeVector,
        params: &RenderParams,
        width: usize,
        height: usize,
        jitter: &Jitter,
    ) -> Self {
        let level = |role| role_level(schema, v, role);
        let semi_major = params.semi_major(level(RenderRole::Size), width.min(height));
        let semi_minor = semi_major * params.axis_ratio(level(RenderRole::Roundness));
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);

        let internal = (level(RenderRole::InternalStructure) > 0).then(|| {
            // The scaled ellipse lam*E grown by radius (1-lam)*b stays inside E,
            // so centres drawn from lam*E keep the whole disc in the nodule.
            let radius = params.internal_radius_frac * semi_major;
            let margin = 1e-6 * semi_major;
            let lam = ((semi_minor - radius - margin) / semi_minor).max(0.0);
            let (c, s) = (jitter.internal_angle.cos(), jitter.internal_angle.sin());
            let ex = lam * semi_major * jitter.internal_radial * c;
            let ey = lam * semi_minor * jitter.internal_radial * s;
            let (rc, rs) = (jitter.rotation.cos(), jitter.rotation.sin());
            Disc {
                cx: cx + ex * rc - ey * rs,
                cy: cy + ex * rs + ey * rc,
                radius,
            }
        });

        Self {
            cx,
            cy,
            semi_major,
            semi_minor,
            rotation: jitter.rotation,
            spike_amplitude: params.spike_amplitude(level(RenderRole::Spiculation)),
            spike_count: params.spike_count,
            spike_sharpness: params.spike_sharpness,
            spike_phase: jitter.spike_phase,
            internal,
        }
    }

    pub fn ellipse_radius(&self, theta: f64) -> f64 {
        let t = theta - self.rotation;
        let (a, b) = (self.semi_major, self.semi_minor);
        let (bc, as_) = (b * t.cos(), a * t.sin());
        a * b / (bc * bc + as_ * as_).sqrt()
    }

    /// Relative outward displacement of the contour at `theta`.
    pub fn spike_term(&self, theta: f64) -> f64 {
        if self.spike_amplitude == 0.0 {
            return 0.0;
        }
        let s = (self.spike_count as f64 * theta + self.spike_phase).sin();
        if s <= 0.0 {
            0.0
        } else {
            self.spike_amplitude * s.powf(self.spike_sharpness)
        }
    }

    pub fn radius(&self, theta: f64) -> f64 {
        self.ellipse_radius(theta) * (1.0 + self.spike_term(theta))
    }

    /// Upper bound on the contour's distance from the centre.
    pub fn extent(&self) -> f64 {
        self.semi_major * (1.0 + self.spike_amplitude)
    }

    /// Closed polyline with `n` vertices at uniformly spaced angles.
    pub fn contour(&self, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let theta = TAU * k as f64 / n as f64;
                let r = self.radius(theta);
                (self.cx + r * theta.cos(), self.cy + r * theta.sin())
            })
            .collect()
    }

    /// `(inside ellipse, inside nodule)` for the point `(x, y)`.
    pub fn classify(&self, x: f64, y: f64) -> (bool, bool) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let d = (dx * dx + dy * dy).sqrt();
        if d > self.extent() {
            return (false, false);
        }
        let theta = dy.atan2(dx);
        let re = self.ellipse_radius(theta);
        let in_ellipse = d <= re;
        let spike = self.spike_term(theta);
        let in_nodule = in_ellipse || (spike > 0.0 && d <= re * (1.0 + spike));
        (in_ellipse, in_nodule)
    }
}
