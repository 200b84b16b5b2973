//! Piecewise-constant CT phantom built from nested ellipses.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let u = (x - self.cx) / self.rx;
        let v = (y - self.cy) / self.ry;
        u * u + v * v <= 1.0
    }
}

fn base_shapes() -> Vec<Ellipse> {
    vec![
        Ellipse { cx: 0.0, cy: 0.0, rx: 0.85, ry: 0.75, value: 1.0 },
        Ellipse { cx: 0.0, cy: 0.0, rx: 0.65, ry: 0.55, value: -0.5 },
        Ellipse { cx: 0.0, cy: 0.0, rx: 0.35, ry: 0.3, value: 0.3 },
        Ellipse { cx: 0.3, cy: 0.25, rx: 0.12, ry: 0.12, value: 0.4 },
        Ellipse { cx: -0.3, cy: -0.25, rx: 0.15, ry: 0.08, value: -0.3 },
    ]
}

/// Row-major `n × n` phantom on `[-1, 1]²`; values add where shapes overlap. A
/// positive `jitter` shifts every shape centre by `jitter · N(0, 1)`.
pub fn phantom<R: Rng + ?Sized>(n: usize, jitter: f64, rng: &mut R) -> DVector<f64> {
    let mut shapes = base_shapes();
    if jitter > 0.0 {
        for s in &mut shapes {
            s.cx += jitter * rng.sample::<f64, _>(StandardNormal);
            s.cy += jitter * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let half = n as f64 / 2.0;
    DVector::from_fn(n * n, |idx, _| {
        let (i, j) = (idx / n, idx % n);
        let x = (j as f64 + 0.5 - half) / half;
        let y = (half - i as f64 - 0.5) / half;
        shapes.iter().filter(|s| s.contains(x, y)).map(|s| s.value).sum()
    })
}
