use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, RenderRole};

/// Numeric mapping from attribute levels to appearance.
///
/// A level is an attribute's value minus its scale minimum, so level 0 is the
/// lowest value. Attributes missing from the schema render at level 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    /// Semi-major axis at size level 0, as a fraction of min(height, width).
    pub base_radius_frac: f64,
    /// Semi-major axis growth per size level, same unit.
    pub radius_step_frac: f64,
    /// Minor/major ratio is `1 - axis_ratio_step * level(roundness)`.
    pub axis_ratio_step: f64,
    pub spike_count: u32,
    /// Relative spike amplitude per spiculation level.
    pub spike_amp_step: f64,
    /// Exponent applied to the rectified sine spike profile.
    pub spike_sharpness: f64,
    pub blur_sigma_base: f64,
    pub blur_sigma_step: f64,
    pub intensity_base: f64,
    pub intensity_step: f64,
    pub background_level: f64,
    pub noise_sigma: f64,
    /// Texture disc radius as a fraction of the semi-major axis.
    pub internal_radius_frac: f64,
    /// Checker texture alternates fill +/- this value (clamped to [0,1]).
    pub internal_contrast: f64,
    /// Side of one checker cell in pixels.
    pub texture_cell: u32,
    /// Edge ROI half-width is `sigma + edge_ring_pad` pixels.
    pub edge_ring_pad: f64,
    pub contour_vertices: u32,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            base_radius_frac: 0.10,
            radius_step_frac: 0.045,
            axis_ratio_step: 0.12,
            spike_count: 12,
            spike_amp_step: 0.08,
            spike_sharpness: 3.0,
            blur_sigma_base: 0.5,
            blur_sigma_step: 1.0,
            intensity_base: 0.35,
            intensity_step: 0.13,
            background_level: 0.10,
            noise_sigma: 0.03,
            internal_radius_frac: 0.30,
            internal_contrast: 0.25,
            texture_cell: 2,
            edge_ring_pad: 1.0,
            contour_vertices: 1440,
        }
    }
}

impl RenderParams {
    pub fn axis_ratio(&self, roundness_level: i32) -> f64 {
        1.0 - self.axis_ratio_step * roundness_level as f64
    }

    pub fn semi_major(&self, size_level: i32, canvas_min: usize) -> f64 {
        (self.base_radius_frac + self.radius_step_frac * size_level as f64) * canvas_min as f64
    }

    pub fn spike_amplitude(&self, spiculation_level: i32) -> f64 {
        self.spike_amp_step * spiculation_level as f64
    }

    pub fn sigma(&self, edge_level: i32) -> f64 {
        self.blur_sigma_base + self.blur_sigma_step * edge_level as f64
    }

    pub fn fill(&self, intensity_level: i32) -> f64 {
        self.intensity_base + self.intensity_step * intensity_level as f64
    }

    pub fn ring_halfwidth(&self, sigma: f64) -> f64 {
        sigma + self.edge_ring_pad
    }

    /// Checks every parameter against `schema`'s full value range.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        let err = |field: &str, msg: String| Err(Error::config(format!("render.{field}"), msg));
        let frac = |v: f64| v > 0.0 && v < 1.0;
        for (field, v) in [
            ("base_radius_frac", self.base_radius_frac),
            ("internal_radius_frac", self.internal_radius_frac),
        ] {
            if !frac(v) {
                return err(field, format!("must lie in (0,1), got {v}"));
            }
        }
        for (field, v) in [
            ("radius_step_frac", self.radius_step_frac),
            ("axis_ratio_step", self.axis_ratio_step),
            ("spike_amp_step", self.spike_amp_step),
            ("blur_sigma_base", self.blur_sigma_base),
            ("blur_sigma_step", self.blur_sigma_step),
            ("noise_sigma", self.noise_sigma),
            ("internal_contrast", self.internal_contrast),
            ("edge_ring_pad", self.edge_ring_pad),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return err(field, format!("must be finite and >= 0, got {v}"));
            }
        }
        if !(self.spike_sharpness.is_finite() && self.spike_sharpness > 0.0) {
            return err("spike_sharpness", format!("must be > 0, got {}", self.spike_sharpness));
        }
        if self.texture_cell == 0 {
            return err("texture_cell", "must be >= 1".into());
        }
        if self.contour_vertices < 720 {
            return err("contour_vertices", format!("must be >= 720, got {}", self.contour_vertices));
        }
        if !(0.0..=1.0).contains(&self.background_level) {
            return err("background_level", format!("must lie in [0,1], got {}", self.background_level));
        }
        let top = |role| schema.by_role(role).map_or(0, |d| d.scale.max() - d.scale.min());
        let ratio = self.axis_ratio(top(RenderRole::Roundness));
        if !frac(ratio) && ratio != 1.0 {
            return err("axis_ratio_step", format!("axis ratio reaches {ratio:.3}, outside (0,1]"));
        }
        for level in 0..=top(RenderRole::Intensity) {
            let fill = self.fill(level);
            if !(0.0..=1.0).contains(&fill) {
                return err(
                    "intensity_step",
                    format!("fill value {fill:.3} at intensity level {level} leaves [0,1]"),
                );
            }
        }
        if self.internal_radius_frac >= ratio {
            return err(
                "internal_radius_frac",
                format!("texture disc cannot fit inside the narrowest nodule (minor/major {ratio:.3})"),
            );
        }
        Ok(())
    }
}
