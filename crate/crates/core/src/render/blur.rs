use super::raster::GrayImage;

/// Normalized Gaussian taps, truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / denom).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with clamped borders. Each output pixel sums its
/// taps left to right, so results do not depend on how work is scheduled.
pub fn gaussian_blur(image: &GrayImage, sigma: f64) -> GrayImage {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return image.clone();
    }
    let (w, h) = (image.width(), image.height());
    let r = (kernel.len() / 2) as i64;
    let src = image.data();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                let xx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += t * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }

    let mut out = GrayImage::filled(w, h, 0.0);
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                let yy = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += t * tmp[yy * w + x];
            }
            dst[y * w + x] = acc;
        }
    }
    out
}
