use super::mollifier::Mollifier;
use crate::geometry::Boundary;
use crate::linalg::fit_slope;
use crate::{Error, Point, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::TAU;
use std::sync::Arc;

/// Empirical check of how the mollification operator `H¹(Ω_ε) → H²(Ω_ε)`
/// grows as `α → 0`, on a planar domain.
#[derive(Debug, Clone)]
pub struct GrowthCheck {
    pub alphas: Vec<f64>,
    pub fields: usize,
    /// Periodic box grid size per axis (a power of two is fastest).
    pub grid: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Default for GrowthCheck {
    fn default() -> Self {
        Self {
            alphas: vec![0.02, 0.04, 0.08, 0.16],
            fields: 20,
            grid: 512,
            eps: 0.1,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub alphas: Vec<f64>,
    /// Mean of `‖R_α η‖_{H²}/‖η‖_{H¹}` over the random fields.
    pub ratios: Vec<f64>,
    /// Log-log slope of `ratios` against `alphas`.
    pub slope: f64,
    pub layer_points: usize,
    pub spacing: f64,
}

struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
        if inverse {
            let s = 1.0 / (n * n) as f64;
            data.iter_mut().for_each(|z| *z *= s);
        }
    }
}

/// Discrete Sobolev norms by central differences over masked points.
fn sobolev_norms(f: &[f64], n: usize, h: f64, mask: &[usize]) -> (f64, f64) {
    let at = |i: usize, j: usize| f[i * n + j];
    let (mut h1, mut h2) = (0.0, 0.0);
    for &idx in mask {
        let (i, j) = (idx / n, idx % n);
        let v = at(i, j);
        let fx = (at(i + 1, j) - at(i - 1, j)) / (2.0 * h);
        let fy = (at(i, j + 1) - at(i, j - 1)) / (2.0 * h);
        let fxx = (at(i + 1, j) - 2.0 * v + at(i - 1, j)) / (h * h);
        let fyy = (at(i, j + 1) - 2.0 * v + at(i, j - 1)) / (h * h);
        let fxy = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / (4.0 * h * h);
        let first = v * v + fx * fx + fy * fy;
        h1 += first;
        h2 += first + fxx * fxx + fyy * fyy + 2.0 * fxy * fxy;
    }
    let cell = h * h;
    ((h1 * cell).sqrt(), (h2 * cell).sqrt())
}

/// Mean ratio `‖R_α η‖_{H²}/‖η‖_{H¹}` over Gaussian random fields `η` with
/// spectrum `(1+|k|²)⁻²`, restricted to the layer of width `ε`.
///
/// The fields are sampled on a periodic box around the domain and mollified
/// by FFT convolution with the sampled kernel.
pub fn growth_check(geom: &dyn Boundary<2>, cfg: &GrowthCheck) -> Result<GrowthReport> {
    if cfg.alphas.len() < 2 || cfg.fields == 0 || cfg.grid < 16 {
        return Err(Error::param(
            "growth_check",
            "need two scales, one field and a 16-point grid",
        ));
    }
    let n = cfg.grid;
    let samples = geom.quadrature(256).nodes;
    let mut lo = Point::<2>::repeat(f64::INFINITY);
    let mut hi = Point::<2>::repeat(f64::NEG_INFINITY);
    for p in &samples {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let margin = cfg.alphas.iter().cloned().fold(0.0, f64::max) + 0.05 * geom.diameter();
    let side = (hi - lo).max() + 2.0 * margin;
    let h = side / n as f64;
    let origin = lo - Point::<2>::repeat(margin);

    let mut mask = Vec::new();
    for i in 2..n - 2 {
        for j in 2..n - 2 {
            let p = origin + Point::<2>::new(i as f64 * h, j as f64 * h);
            if p[0] < lo[0] || p[0] > hi[0] || p[1] < lo[1] || p[1] > hi[1] {
                continue;
            }
            let d = geom.project(&p, None).depth;
            if d > 0.0 && d <= cfg.eps {
                mask.push(i * n + j);
            }
        }
    }
    if mask.is_empty() {
        return Err(Error::param("grid", "no box points fall in the layer"));
    }

    let fft = Fft2::new(n);
    let freq = |i: usize| {
        let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        TAU * k / side
    };
    let kernels: Vec<Vec<Complex64>> = cfg
        .alphas
        .iter()
        .map(|&alpha| -> Result<Vec<Complex64>> {
            let m = Mollifier::new(2, alpha)?;
            let mut k = vec![Complex64::new(0.0, 0.0); n * n];
            for i in 0..n {
                for j in 0..n {
                    let x = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 } * h;
                    let y = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 } * h;
                    k[i * n + j] = Complex64::new(m.kernel((x * x + y * y).sqrt()) * h * h, 0.0);
                }
            }
            fft.run(&mut k, false);
            Ok(k)
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sums = vec![0.0; cfg.alphas.len()];
    for _ in 0..cfg.fields {
        let mut spec = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let k2 = freq(i).powi(2) + freq(j).powi(2);
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                spec[i * n + j] = Complex64::new(a, b) / (1.0 + k2);
            }
        }
        let mut eta = spec.clone();
        fft.run(&mut eta, true);
        let eta_re: Vec<f64> = eta.iter().map(|z| z.re).collect();
        let (eta_h1, _) = sobolev_norms(&eta_re, n, h, &mask);
        // mollify the real field: transform it back rather than reusing the
        // complex spectrum, whose imaginary part is a second field
        let mut eta_hat: Vec<Complex64> = eta_re.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.run(&mut eta_hat, false);
        for (s, ker) in sums.iter_mut().zip(&kernels) {
            let mut r: Vec<Complex64> = eta_hat.iter().zip(ker).map(|(a, b)| a * b).collect();
            fft.run(&mut r, true);
            let r_re: Vec<f64> = r.iter().map(|z| z.re).collect();
            let (_, r_h2) = sobolev_norms(&r_re, n, h, &mask);
            *s += r_h2 / eta_h1;
        }
    }
    let ratios: Vec<f64> = sums.iter().map(|s| s / cfg.fields as f64).collect();
    let lx: Vec<f64> = cfg.alphas.iter().map(|a| a.ln()).collect();
    let ly: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    Ok(GrowthReport {
        alphas: cfg.alphas.clone(),
        slope: fit_slope(&lx, &ly),
        ratios,
        layer_points: mask.len(),
        spacing: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Curve;

    #[test]
    fn small_growth_check_on_disk_is_near_minus_one() {
        let cfg = GrowthCheck {
            alphas: vec![0.04, 0.08, 0.16],
            fields: 3,
            grid: 256,
            eps: 0.15,
            seed: 2,
        };
        let rep = growth_check(&Curve::circle(1.0), &cfg).unwrap();
        assert!(rep.ratios.windows(2).all(|w| w[0] > w[1]));
        assert!((rep.slope + 1.0).abs() < 0.35, "slope {}", rep.slope);
    }
}
