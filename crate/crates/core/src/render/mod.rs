//! Nodule image synthesis and ground-truth ROI masks.
//!
//! Pipeline for one sample:
//! 1. derive rotation, spike phase and texture placement from the seed;
//! 2. fill the background;
//! 3. draw background clutter blobs, if enabled;
//! 4. fill the nodule at the intensity level's value;
//! 5. stamp the checker texture disc when internal structure is present;
//! 6. record masks from the pre-blur geometry;
//! 7. Gaussian blur with the edge-sharpness sigma;
//! 8. add pixel noise in row-major order and clamp to [0, 1].

mod blur;
mod geometry;
mod params;
mod raster;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use geometry::{role_level, Disc, Jitter, NoduleGeometry};
pub use params::RenderParams;
pub use raster::{GrayImage, Mask};

use crate::config::DatasetConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::schema::{check_vector, AttributeVector, RenderRole};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Annotations {
    pub attributes: AttributeVector,
    pub target: i32,
    pub seed: u64,
    pub rotation: f64,
    pub spike_phase: f64,
}

/// Masks keyed by attribute id.
pub type MaskSet = BTreeMap<String, Mask>;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSample {
    pub image: GrayImage,
    pub masks: MaskSet,
    pub annotations: Annotations,
}

/// Region masks shared by several attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Regions {
    pub nodule: Mask,
    pub ellipse: Mask,
    pub spiculation: Mask,
    pub edge_ring: Mask,
    pub internal: Mask,
}

/// Renders samples for one configuration.
#[derive(Debug, Clone, Copy)]
pub struct Renderer<'a> {
    config: &'a DatasetConfig,
}

impl<'a> Renderer<'a> {
    pub fn new(config: &'a DatasetConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &DatasetConfig {
        self.config
    }

    fn size(&self) -> (usize, usize) {
        (self.config.image.width, self.config.image.height)
    }

    fn level(&self, v: &AttributeVector, role: RenderRole) -> i32 {
        role_level(&self.config.schema, v, role)
    }

    pub fn geometry(&self, v: &AttributeVector, jitter: &Jitter) -> NoduleGeometry {
        let (w, h) = self.size();
        NoduleGeometry::new(&self.config.schema, v, &self.config.render, w, h, jitter)
    }

    /// Closed outline for explicit pose values, `contour_vertices` points.
    pub fn nodule_contour(&self, v: &AttributeVector, rotation: f64, spike_phase: f64) -> Result<Vec<(f64, f64)>> {
        check_vector(&self.config.schema, v)?;
        let jitter = Jitter {
            rotation,
            spike_phase,
            internal_radial: 0.0,
            internal_angle: 0.0,
        };
        let g = self.geometry(v, &jitter);
        Ok(g.contour(self.config.render.contour_vertices as usize))
    }

    fn checked_geometry(&self, v: &AttributeVector, seed: u64) -> Result<(NoduleGeometry, Jitter)> {
        check_vector(&self.config.schema, v)?;
        let jitter = Jitter::from_seed(seed);
        let g = self.geometry(v, &jitter);
        let (w, h) = self.size();
        let room = w.min(h) as f64 / 2.0 - 1.0;
        if g.extent() > room {
            let describe = |role| {
                self.config
                    .schema
                    .by_role(role)
                    .and_then(|d| v.get(&d.id).map(|x| format!("{}={x}", d.id)))
            };
            let culprits: Vec<String> = [RenderRole::Size, RenderRole::Spiculation]
                .into_iter()
                .filter_map(describe)
                .collect();
            return Err(Error::ExceedsCanvas(format!(
                "{} reaches radius {:.1} px on a {w}x{h} canvas",
                culprits.join(", "),
                g.extent()
            )));
        }
        Ok((g, jitter))
    }

    pub fn regions(&self, v: &AttributeVector, g: &NoduleGeometry) -> Regions {
        let (w, h) = self.size();
        let mut nodule = Mask::new(w, h);
        let mut ellipse = Mask::new(w, h);
        let mut spiculation = Mask::new(w, h);
        let mut internal = Mask::new(w, h);

        let reach = g.extent().ceil() as i64 + 1;
        let (x0, x1) = span(g.cx, reach, w);
        let (y0, y1) = span(g.cy, reach, h);
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let (in_ellipse, in_nodule) = g.classify(px, py);
                nodule.set(x, y, in_nodule);
                ellipse.set(x, y, in_ellipse);
                spiculation.set(x, y, in_nodule && !in_ellipse);
                if let Some(d) = &g.internal {
                    internal.set(x, y, d.contains(px, py));
                }
            }
        }

        let sigma = self.config.render.sigma(self.level(v, RenderRole::EdgeSharpness));
        let halfwidth = self.config.render.ring_halfwidth(sigma);
        let edge_ring = ring_mask(&g.contour(self.config.render.contour_vertices as usize), halfwidth, w, h);

        Regions {
            nodule,
            ellipse,
            spiculation,
            edge_ring,
            internal,
        }
    }

    fn mask_set(&self, regions: &Regions) -> MaskSet {
        let (w, h) = self.size();
        self.config
            .schema
            .attributes()
            .iter()
            .map(|d| {
                let m = match d.role {
                    RenderRole::Roundness | RenderRole::Size | RenderRole::Intensity => regions.nodule.clone(),
                    RenderRole::Spiculation => regions.spiculation.clone(),
                    RenderRole::EdgeSharpness => regions.edge_ring.clone(),
                    RenderRole::InternalStructure => regions.internal.clone(),
                    RenderRole::None => Mask::new(w, h),
                };
                (d.id.clone(), m)
            })
            .collect()
    }

    /// Ground-truth masks without shading; bit-identical to `render(..).masks`.
    pub fn masks_only(&self, v: &AttributeVector, seed: u64) -> Result<MaskSet> {
        let (g, _) = self.checked_geometry(v, seed)?;
        Ok(self.mask_set(&self.regions(v, &g)))
    }

    /// Geometry regions for `(v, seed)`, including the unperturbed ellipse.
    pub fn regions_for(&self, v: &AttributeVector, seed: u64) -> Result<Regions> {
        let (g, _) = self.checked_geometry(v, seed)?;
        Ok(self.regions(v, &g))
    }

    /// Image before blur and noise: background, clutter, fill and texture.
    pub fn shade(&self, v: &AttributeVector, seed: u64) -> Result<(GrayImage, Regions, NoduleGeometry, Jitter)> {
        let (g, jitter) = self.checked_geometry(v, seed)?;
        let regions = self.regions(v, &g);
        let p = &self.config.render;
        let (w, h) = self.size();

        let mut img = GrayImage::filled(w, h, p.background_level);
        if self.config.background.enabled {
            self.draw_clutter(&mut img, seed);
        }
        let fill = p.fill(self.level(v, RenderRole::Intensity));
        for (x, y) in regions.nodule.pixels() {
            img.set(x, y, fill);
        }
        let cell = p.texture_cell as usize;
        for (x, y) in regions.internal.pixels() {
            let shift = if (x / cell + y / cell) % 2 == 0 {
                p.internal_contrast
            } else {
                -p.internal_contrast
            };
            img.set(x, y, (fill + shift).clamp(0.0, 1.0));
        }
        Ok((img, regions, g, jitter))
    }

    pub fn render(&self, v: &AttributeVector, seed: u64) -> Result<RenderedSample> {
        let target = self.config.rule.evaluate(v)?;
        let (shaded, regions, _, jitter) = self.shade(v, seed)?;
        let p = &self.config.render;
        let sigma = p.sigma(self.level(v, RenderRole::EdgeSharpness));
        let mut image = gaussian_blur(&shaded, sigma);
        if p.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, p.noise_sigma).expect("noise sigma validated");
            let mut rng = stream(seed, Stream::Noise);
            for px in image.data_mut() {
                *px = (*px + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        } else {
            for px in image.data_mut() {
                *px = px.clamp(0.0, 1.0);
            }
        }
        Ok(RenderedSample {
            image,
            masks: self.mask_set(&regions),
            annotations: Annotations {
                attributes: v.clone(),
                target,
                seed,
                rotation: jitter.rotation,
                spike_phase: jitter.spike_phase,
            },
        })
    }

    fn draw_clutter(&self, img: &mut GrayImage, seed: u64) {
        let bg = &self.config.background;
        let base = self.config.render.background_level;
        let (w, h) = self.size();
        let mut rng = stream(seed, Stream::Clutter);
        let count = rng.random_range(bg.blob_count[0]..=bg.blob_count[1]);
        let scale = w.min(h) as f64;
        for _ in 0..count {
            let cx = rng.random::<f64>() * w as f64;
            let cy = rng.random::<f64>() * h as f64;
            let spread = (0.03 + 0.05 * rng.random::<f64>()) * scale;
            let peak = bg.intensity[0] + (bg.intensity[1] - bg.intensity[0]) * rng.random::<f64>();
            let reach = (3.0 * spread).ceil() as i64;
            let (x0, x1) = span(cx, reach, w);
            let (y0, y1) = span(cy, reach, h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let dx = x as f64 + 0.5 - cx;
                    let dy = y as f64 + 0.5 - cy;
                    let v = base + (peak - base) * (-(dx * dx + dy * dy) / (2.0 * spread * spread)).exp();
                    if v > img.get(x, y) {
                        img.set(x, y, v);
                    }
                }
            }
        }
    }
}

fn span(centre: f64, reach: i64, limit: usize) -> (usize, usize) {
    let lo = (centre.floor() as i64 - reach).clamp(0, limit as i64) as usize;
    let hi = (centre.floor() as i64 + reach + 1).clamp(0, limit as i64) as usize;
    (lo, hi)
}

/// Pixels whose centre lies within `halfwidth` of the closed polyline.
pub fn ring_mask(contour: &[(f64, f64)], halfwidth: f64, width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    let hw2 = halfwidth * halfwidth;
    let n = contour.len();
    for k in 0..n {
        let (ax, ay) = contour[k];
        let (bx, by) = contour[(k + 1) % n];
        let x0 = ((ax.min(bx) - halfwidth).floor() as i64).clamp(0, width as i64) as usize;
        let x1 = ((ax.max(bx) + halfwidth).ceil() as i64 + 1).clamp(0, width as i64) as usize;
        let y0 = ((ay.min(by) - halfwidth).floor() as i64).clamp(0, height as i64) as usize;
        let y1 = ((ay.max(by) + halfwidth).ceil() as i64 + 1).clamp(0, height as i64) as usize;
        let (ex, ey) = (bx - ax, by - ay);
        let len2 = ex * ex + ey * ey;
        for y in y0..y1 {
            for x in x0..x1 {
                if mask.get(x, y) {
                    continue;
                }
                let (px, py) = (x as f64 + 0.5 - ax, y as f64 + 0.5 - ay);
                let t = if len2 > 0.0 {
                    ((px * ex + py * ey) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (dx, dy) = (px - t * ex, py - t * ey);
                if dx * dx + dy * dy <= hw2 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(r: i32, sp: i32, es: i32, s: i32, i: i32, is: i32) -> AttributeVector {
        AttributeVector::from_pairs([("r", r), ("sp", sp), ("es", es), ("s", s), ("i", i), ("is", is)])
    }

    #[test]
    fn absent_features_give_empty_masks() {
        let cfg = DatasetConfig::default();
        let r = Renderer::new(&cfg);
        let s = r.render(&v(3, 1, 2, 3, 3, 0), 5).unwrap();
        assert!(s.masks["is"].is_empty());
        assert!(s.masks["sp"].is_empty());
        assert!(!s.masks["es"].is_empty());
        assert_eq!(s.masks["r"], s.masks["s"]);
        assert_eq!(s.masks["r"], s.masks["i"]);
    }

    #[test]
    fn centre_pixel_carries_fill_value() {
        let mut cfg = DatasetConfig::default();
        cfg.render.noise_sigma = 0.0;
        let s = Renderer::new(&cfg).render(&v(3, 1, 1, 3, 5, 0), 11).unwrap();
        let c = s.image.get(64, 64);
        assert!((c - 0.87).abs() <= 0.02, "{c}");
        assert!((s.image.get(0, 0) - 0.10).abs() < 1e-9);
    }

    #[test]
    fn masks_only_matches_render() {
        let cfg = DatasetConfig::default();
        let r = Renderer::new(&cfg);
        for seed in 0..5 {
            let x = v(2, 4, 5, 4, 1, 1);
            assert_eq!(r.masks_only(&x, seed).unwrap(), r.render(&x, seed).unwrap().masks);
        }
    }

    #[test]
    fn ring_width_along_a_ray() {
        let mut cfg = DatasetConfig::default();
        cfg.render.noise_sigma = 0.0;
        let r = Renderer::new(&cfg);
        let width = |es| {
            let m = r.masks_only(&v(1, 1, es, 3, 3, 0), 3).unwrap();
            (64..128).filter(|&x| m["es"].get(x, 64)).count()
        };
        let (thin, thick) = (width(1), width(5));
        assert!((2..=4).contains(&thin), "{thin}");
        assert!((10..=12).contains(&thick), "{thick}");
    }

    #[test]
    fn oversized_nodule_rejected() {
        let mut cfg = DatasetConfig::default();
        cfg.render.radius_step_frac = 0.12;
        let e = Renderer::new(&cfg).render(&v(3, 5, 3, 5, 3, 0), 1).unwrap_err().to_string();
        assert!(e.starts_with("nodule exceeds canvas"), "{e}");
        assert!(e.contains("s=5") && e.contains("sp=5"), "{e}");
    }

    #[test]
    fn invalid_vector_rejected() {
        let cfg = DatasetConfig::default();
        assert!(Renderer::new(&cfg).render(&v(6, 1, 1, 1, 1, 0), 1).is_err());
    }

    #[test]
    fn clutter_stays_dim_and_under_nodule() {
        let mut cfg = DatasetConfig::default();
        cfg.background.enabled = true;
        cfg.background.blob_count = [6, 6];
        let r = Renderer::new(&cfg);
        let x = v(3, 1, 1, 3, 1, 0);
        let (img, regions, _, _) = r.shade(&x, 8).unwrap();
        let ceiling = cfg.render.background_level + 0.1 + 1e-12;
        let fill = cfg.render.fill(0);
        for (k, &px) in img.data().iter().enumerate() {
            if regions.nodule.bits()[k] {
                assert_eq!(px, fill);
            } else {
                assert!(px <= ceiling && px >= cfg.render.background_level);
            }
        }
        assert!(img.data().iter().any(|&p| p > cfg.render.background_level + 1e-3));
    }

    #[test]
    fn contour_has_requested_vertices() {
        let cfg = DatasetConfig::default();
        let c = Renderer::new(&cfg).nodule_contour(&v(1, 1, 1, 1, 1, 0), 0.0, 0.0).unwrap();
        assert_eq!(c.len(), 1440);
    }
}
