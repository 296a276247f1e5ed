//! Evaluation of band-limited periodic functions at many scattered points
//! through an oversampled lattice and a compact exponential-of-semicircle
//! kernel (a type-2 non-uniform FFT).
//!
//! With `u_l = sum_k c_k / φ̂(k) e^{i k.x_l}` on an `m x m` lattice of spacing
//! `h`, Poisson summation gives `f(x) ≈ h^2 sum_l u_l φ(x - x_l)` up to
//! aliasing errors of order `e^{-β}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::exec::Execution;

/// Kernel support in lattice points.
const WIDTH: usize = 16;
/// Kernel shape parameter for twofold oversampling.
const BETA: f64 = 2.30 * WIDTH as f64;
/// Points in the quadrature for the kernel transform.
const QUAD: usize = 256;

#[derive(Clone)]
pub(crate) struct Spreader {
    m: usize,
    h: f64,
    alpha: f64,
    grids: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spreader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Spreader(m = {}, terms = {})", self.m, self.grids.len())
    }
}

fn kernel(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (BETA * ((1.0 - z * z).sqrt() - 1.0)).exp()
    }
}

/// `∫ φ(s / α) e^{-i k s} ds`, by the trapezoid rule in `z = sin θ`, where the
/// integrand is flat to `e^{-β}` at the ends.
fn kernel_transform(k: f64, alpha: f64) -> f64 {
    let d = PI / QUAD as f64;
    let mut s = 0.0;
    for q in 1..QUAD {
        let th = -PI / 2.0 + q as f64 * d;
        let (sn, cs) = th.sin_cos();
        s += (BETA * (cs - 1.0)).exp() * (k * alpha * sn).cos() * cs;
    }
    alpha * s * d
}

/// Smallest `2^a 3^b >= x`.
fn smooth_size(x: usize) -> usize {
    let mut best = usize::MAX;
    let mut p3 = 1;
    while p3 < 2 * x {
        let mut v = p3;
        while v < x {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

impl Spreader {
    /// Oversampled lattice size for a band.
    pub(crate) fn lattice_size(band: usize) -> usize {
        smooth_size((2 * (2 * band + 1)).max(2 * WIDTH))
    }

    /// Relative operation count per point and per term, and the fixed setup cost.
    pub(crate) fn cost(band: usize, terms: usize, points: usize) -> f64 {
        let m = Self::lattice_size(band) as f64;
        let setup = (terms as f64 / 2.0 + 1.0) * m * m * (2.0 * m.log2() + 2.0);
        setup + points as f64 * (terms * WIDTH * WIDTH + 8 * WIDTH) as f64
    }

    /// Tables hold `Re sum_{k1 >= 0} t e^{i k.x}` on a `(band + 1) x (2 band + 1)`
    /// half plane.
    pub(crate) fn new(band: usize, tables: &[(Vec<f64>, Vec<f64>)]) -> Self {
        let m = Self::lattice_size(band);
        let h = 2.0 * PI / m as f64;
        let alpha = WIDTH as f64 * h / 2.0;
        let phat: Vec<f64> = (0..=band).map(|k| kernel_transform(k as f64, alpha)).collect();
        let w = 2 * band + 1;
        let wrap = |k: i64| k.rem_euclid(m as i64) as usize;
        let mut fft = FftPlanner::new();
        let plan = fft.plan_fft_inverse(m);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut grids = Vec::with_capacity(tables.len());
        for pair in tables.chunks(2) {
            let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
            for (slot, (re, im)) in pair.iter().enumerate() {
                let unit = if slot == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
                for k1 in 0..=band {
                    for j in 0..w {
                        let t = Complex64::new(re[k1 * w + j], im[k1 * w + j]);
                        if t.re == 0.0 && t.im == 0.0 {
                            continue;
                        }
                        let k2 = j as i64 - band as i64;
                        let v = t * (0.5 / (phat[k1] * phat[k2.unsigned_abs() as usize]));
                        buf[wrap(k1 as i64) * m + wrap(k2)] += unit * v;
                        buf[wrap(-(k1 as i64)) * m + wrap(-k2)] += unit * v.conj();
                    }
                }
            }
            for row in buf.chunks_mut(m) {
                plan.process_with_scratch(row, &mut scratch);
            }
            transpose(&mut buf, m);
            for row in buf.chunks_mut(m) {
                plan.process_with_scratch(row, &mut scratch);
            }
            transpose(&mut buf, m);
            grids.push(buf.iter().map(|c| c.re).collect());
            if pair.len() == 2 {
                grids.push(buf.iter().map(|c| c.im).collect());
            }
        }
        Spreader { m, h, alpha, grids }
    }

    /// Values per point, laid out `out[point * terms + term]`.
    pub(crate) fn eval(&self, points: &[[f64; 2]], out: &mut [f64], exec: Execution) {
        let nf = self.grids.len();
        const CHUNK: usize = 64;
        exec.for_chunks_mut(out, CHUNK * nf, |c, o| {
            for (p, o) in points[c * CHUNK..].iter().zip(o.chunks_mut(nf)) {
                self.eval_point(*p, o);
            }
        });
    }

    fn eval_point(&self, p: [f64; 2], out: &mut [f64]) {
        let m = self.m as i64;
        let mut kx = [0.0; WIDTH];
        let mut ky = [0.0; WIDTH];
        let mut ix = [0usize; WIDTH];
        let mut iy = [0usize; WIDTH];
        for (c, (kv, iv)) in [(&mut kx, &mut ix), (&mut ky, &mut iy)].into_iter().enumerate() {
            let s = p[c] / self.h;
            let l0 = (s - WIDTH as f64 / 2.0).floor() as i64 + 1;
            for a in 0..WIDTH {
                let l = l0 + a as i64;
                kv[a] = kernel((p[c] - l as f64 * self.h) / self.alpha);
                iv[a] = l.rem_euclid(m) as usize;
            }
        }
        let h2 = self.h * self.h;
        let contiguous = iy[0] + WIDTH <= self.m;
        for (o, g) in out.iter_mut().zip(&self.grids) {
            let mut acc = 0.0;
            for a in 0..WIDTH {
                let row = &g[ix[a] * self.m..(ix[a] + 1) * self.m];
                let mut r = 0.0;
                if contiguous {
                    let seg = &row[iy[0]..iy[0] + WIDTH];
                    for b in 0..WIDTH {
                        r += ky[b] * seg[b];
                    }
                } else {
                    for b in 0..WIDTH {
                        r += ky[b] * row[iy[b]];
                    }
                }
                acc += kx[a] * r;
            }
            *o = h2 * acc;
        }
    }
}

fn transpose(a: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            a.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_are_smooth() {
        assert_eq!(smooth_size(258), 288);
        assert_eq!(smooth_size(32), 32);
        assert_eq!(smooth_size(33), 36);
    }

    /// The kernel transform at `k = 0` is the kernel integral.
    #[test]
    fn transform_matches_direct_integral() {
        let alpha = 0.3;
        let n = 200_000;
        let d = 2.0 / n as f64;
        let direct: f64 = (0..n).map(|i| kernel(-1.0 + (i as f64 + 0.5) * d)).sum::<f64>() * d * alpha;
        assert!((kernel_transform(0.0, alpha) - direct).abs() < 1e-9);
    }
}
