//! Parallel-beam ray transform on an `n × n` pixel grid.
//!
//! Pixels have unit size and the image occupies `[−n/2, n/2]²`. Pixel `(i, j)` (row `i`
//! from the top, column `j` from the left) has flat index `i·n + j`. For each of the
//! `angles` directions `θ_a = π a / angles`, `bins` parallel rays are spaced uniformly
//! across the image diagonal. Row `a·bins + b` of the matrix holds the exact
//! intersection length of ray `b` at angle `a` with every pixel (Siddon traversal).

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Result, SekiError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RadonGeometry {
    pub n: usize,
    pub angles: usize,
    pub bins: usize,
}

impl RadonGeometry {
    pub fn new(n: usize, angles: usize, bins: usize) -> Result<Self> {
        if n == 0 || angles == 0 || bins == 0 {
            return Err(SekiError::invalid(
                "radon",
                format!("image side, angles and bins must be positive (got {n}, {angles}, {bins})"),
            ));
        }
        Ok(RadonGeometry { n, angles, bins })
    }

    pub fn angle(&self, a: usize) -> f64 {
        PI * a as f64 / self.angles as f64
    }

    /// Signed detector offset of bin `b`.
    pub fn offset(&self, b: usize) -> f64 {
        let span = self.n as f64 * std::f64::consts::SQRT_2;
        let width = span / self.bins as f64;
        -0.5 * span + (b as f64 + 0.5) * width
    }

    pub fn rows(&self) -> usize {
        self.angles * self.bins
    }

    pub fn cols(&self) -> usize {
        self.n * self.n
    }
}

/// Ray through `s·(cosθ, sinθ)` with direction `(−sinθ, cosθ)`.
#[derive(Clone, Copy, Debug)]
struct Ray {
    origin: (f64, f64),
    dir: (f64, f64),
}

impl Ray {
    fn new(theta: f64, s: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Ray {
            origin: (s * cos, s * sin),
            dir: (-sin, cos),
        }
    }

    fn at(&self, t: f64) -> (f64, f64) {
        (self.origin.0 + t * self.dir.0, self.origin.1 + t * self.dir.1)
    }
}

const EPS: f64 = 1e-12;

/// Parameter interval of the ray inside the square `[−h, h]²` (slab method).
fn clip(ray: &Ray, h: f64) -> Option<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (o, u) in [(ray.origin.0, ray.dir.0), (ray.origin.1, ray.dir.1)] {
        if u.abs() < EPS {
            if o < -h || o > h {
                return None;
            }
        } else {
            let t1 = (-h - o) / u;
            let t2 = (h - o) / u;
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
    }
    (hi > lo).then_some((lo, hi))
}

/// Length of the chord cut by the ray `(θ, s)` from the image square of side `n`.
pub fn chord_length(n: usize, theta: f64, s: f64) -> f64 {
    clip(&Ray::new(theta, s), 0.5 * n as f64).map_or(0.0, |(lo, hi)| hi - lo)
}

/// Append `(pixel, length)` pairs for one ray.
fn trace(ray: &Ray, n: usize, out: &mut Vec<(usize, f64)>) {
    let h = 0.5 * n as f64;
    let Some((t0, t1)) = clip(ray, h) else {
        return;
    };
    let mut ts = vec![t0, t1];
    for (o, u) in [(ray.origin.0, ray.dir.0), (ray.origin.1, ray.dir.1)] {
        if u.abs() < EPS {
            continue;
        }
        for g in 0..=n {
            let t = (-h + g as f64 - o) / u;
            if t > t0 && t < t1 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|a, b| a.total_cmp(b));
    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len <= EPS {
            continue;
        }
        let (x, y) = ray.at(0.5 * (w[0] + w[1]));
        let col = ((x + h).floor() as isize).clamp(0, n as isize - 1) as usize;
        let row = ((h - y).floor() as isize).clamp(0, n as isize - 1) as usize;
        out.push((row * n + col, len));
    }
}

/// Dense `K × d` ray-transform matrix with `d = n²` and `K = angles · bins`.
pub fn build_radon(n: usize, angles: usize, bins: usize) -> Result<DMatrix<f64>> {
    let geom = RadonGeometry::new(n, angles, bins)?;
    let mut a = DMatrix::zeros(geom.rows(), geom.cols());
    let mut hits = Vec::with_capacity(4 * n);
    for ai in 0..angles {
        let theta = geom.angle(ai);
        for b in 0..bins {
            hits.clear();
            trace(&Ray::new(theta, geom.offset(b)), n, &mut hits);
            let row = ai * bins + b;
            for &(p, len) in &hits {
                a[(row, p)] += len;
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    /// Chord length from the intersection points of the line with the four square edges.
    fn edge_chord(n: usize, theta: f64, s: f64) -> f64 {
        let h = 0.5 * n as f64;
        let (sin, cos) = theta.sin_cos();
        // line: x cosθ + y sinθ = s
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for &x in &[-h, h] {
            if sin.abs() > 1e-15 {
                let y = (s - x * cos) / sin;
                if y >= -h - 1e-12 && y <= h + 1e-12 {
                    pts.push((x, y));
                }
            }
        }
        for &y in &[-h, h] {
            if cos.abs() > 1e-15 {
                let x = (s - y * sin) / cos;
                if x >= -h - 1e-12 && x <= h + 1e-12 {
                    pts.push((x, y));
                }
            }
        }
        let mut best: f64 = 0.0;
        for p in &pts {
            for q in &pts {
                best = best.max(((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt());
            }
        }
        best
    }

    #[test]
    fn zero_image_gives_zero_sinogram() {
        let a = build_radon(8, 5, 8).unwrap();
        assert_eq!(&a * DVector::zeros(64), DVector::zeros(40));
        assert!(a.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn projection_of_ones_matches_chord_lengths() {
        let (n, angles, bins) = (12, 7, 15);
        let a = build_radon(n, angles, bins).unwrap();
        let geom = RadonGeometry::new(n, angles, bins).unwrap();
        let ones = DVector::from_element(n * n, 1.0);
        let proj = &a * ones;
        for ai in 0..angles {
            let mut total = 0.0;
            let mut expect = 0.0;
            for b in 0..bins {
                total += proj[ai * bins + b];
                expect += edge_chord(n, geom.angle(ai), geom.offset(b));
            }
            assert!((total - expect).abs() <= 1e-6 * expect, "angle {ai}: {total} vs {expect}");
        }
    }

    #[test]
    fn axis_aligned_ray_through_centre_row() {
        // θ = π/2: rays run horizontally; with one bin the single ray passes through y = 0
        let a = build_radon(3, 2, 1).unwrap();
        let row = a.row(1);
        let middle: f64 = (3..6).map(|p| row[p]).sum();
        assert!((middle - 3.0).abs() < 1e-12);
        assert!((chord_length(3, std::f64::consts::FRAC_PI_2, 0.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_sizes() {
        assert!(build_radon(0, 3, 3).is_err());
        assert!(build_radon(3, 0, 3).is_err());
        assert!(build_radon(3, 3, 0).is_err());
    }
}
