//! Periodic spectral calculus on the unit coordinate square `[0,1)²`.
//!
//! Physical fields are stored row-major with `y` as the row index:
//! `values[iy * n + ix]`. Spectra are stored with the `x`-frequency index
//! first, `coeffs[a * n + b]`, which saves one transpose per transform.
//! Wave numbers carry the `2π` of the unit period.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::FlatMetric;

/// Coordinate axis on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

struct Plan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `2π·freq(i)`.
    wave: Vec<f64>,
    /// Same as `wave` with the Nyquist entry zeroed (odd-order derivatives).
    wave_odd: Vec<f64>,
    /// Two-thirds rule: `|freq(i)| ≤ n/3`.
    band: Vec<bool>,
}

/// An `n × n` periodic collocation grid. Cloning is cheap (shared plans).
#[derive(Clone)]
pub struct Grid {
    plan: Arc<Plan>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.plan.n).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.plan.n == other.plan.n
    }
}

/// Signed integer frequency of FFT index `i` on an `n`-point axis.
pub fn frequency(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidResolution(n));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let wave: Vec<f64> = (0..n).map(|i| 2.0 * PI * frequency(i, n) as f64).collect();
        let wave_odd = (0..n)
            .map(|i| if i == n / 2 { 0.0 } else { wave[i] })
            .collect();
        let band = (0..n)
            .map(|i| 3 * frequency(i, n).unsigned_abs() as usize <= n)
            .collect();
        Ok(Self {
            plan: Arc::new(Plan {
                n,
                forward,
                inverse,
                wave,
                wave_odd,
                band,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.plan.n
    }

    /// Number of grid points, `n²`.
    pub fn len(&self) -> usize {
        self.plan.n * self.plan.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.plan.n as f64
    }

    /// Coordinates `(x, y)` of flat index `idx`.
    pub fn point(&self, idx: usize) -> (f64, f64) {
        let n = self.plan.n;
        let h = self.spacing();
        ((idx % n) as f64 * h, (idx / n) as f64 * h)
    }

    /// Samples `f(x, y)` on the grid.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = (0..self.len())
            .map(|idx| {
                let (x, y) = self.point(idx);
                f(x, y)
            })
            .collect();
        ScalarField::new(self.clone(), values)
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField::new(self.clone(), vec![0.0; self.len()])
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField::new(self.clone(), vec![c; self.len()])
    }

    pub fn wave(&self, i: usize) -> f64 {
        self.plan.wave[i]
    }

    pub fn wave_odd(&self, i: usize) -> f64 {
        self.plan.wave_odd[i]
    }

    pub fn in_band(&self, a: usize, b: usize) -> bool {
        self.plan.band[a] && self.plan.band[b]
    }

    /// Largest `|k|²_{g₀} = g₀^{ij} k_i k_j` over the retained band.
    pub fn max_band_symbol(&self, g0: &FlatMetric) -> f64 {
        let n = self.plan.n;
        let (ia, ib, ic) = g0.inverse();
        let mut max = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                if self.in_band(a, b) {
                    let (kx, ky) = (self.plan.wave[a], self.plan.wave[b]);
                    max = max.max(ia * kx * kx + 2.0 * ib * kx * ky + ic * ky * ky);
                }
            }
        }
        max
    }

    /// Unnormalized 2D transform in place: rows, transpose, rows. The
    /// result is stored transposed, which is the spectrum layout.
    fn fft2(&self, buf: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.plan.n;
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
        for r in 0..n {
            for c in r + 1..n {
                buf.swap(r * n + c, c * n + r);
            }
        }
        fft.process_with_scratch(buf, &mut scratch);
    }

    /// Inverse transform without the `1/n²` factor.
    fn ifft2_unscaled(&self, buf: &mut [Complex64]) {
        self.fft2(buf, self.plan.inverse.as_ref());
    }

    pub fn forward(&self, values: &[f64]) -> Spectrum {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, self.plan.forward.as_ref());
        Spectrum {
            grid: self.clone(),
            coeffs: buf,
        }
    }

    /// Transforms two real fields with a single complex FFT.
    pub fn forward_pair(&self, f: &[f64], g: &[f64]) -> (Spectrum, Spectrum) {
        let mut buf: Vec<Complex64> = f
            .iter()
            .zip(g)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        self.fft2(&mut buf, self.plan.forward.as_ref());
        let mut fs = Vec::with_capacity(buf.len());
        let mut gs = Vec::with_capacity(buf.len());
        let n = self.plan.n;
        for a in 0..n {
            let na = if a == 0 { 0 } else { n - a };
            let row = &buf[a * n..(a + 1) * n];
            let neg = &buf[na * n..(na + 1) * n];
            // -b is 0 for b = 0 and n - b otherwise
            let mirrored = std::iter::once(&neg[0]).chain(neg[1..].iter().rev());
            for (z, zn) in row.iter().zip(mirrored) {
                let zc = zn.conj();
                fs.push((z + zc) * 0.5);
                gs.push(Complex64::new(0.5 * (z.im - zc.im), -0.5 * (z.re - zc.re)));
            }
        }
        (
            Spectrum {
                grid: self.clone(),
                coeffs: fs,
            },
            Spectrum {
                grid: self.clone(),
                coeffs: gs,
            },
        )
    }

    /// Real part of the inverse transform.
    pub fn inverse(&self, spec: &Spectrum) -> Vec<f64> {
        let mut buf = spec.coeffs.clone();
        self.ifft2_unscaled(&mut buf);
        let scale = 1.0 / self.len() as f64;
        buf.into_iter().map(|z| z.re * scale).collect()
    }

    /// Inverse-transforms two spectra of real fields with one complex FFT.
    pub fn inverse_pair(&self, f: &Spectrum, g: &Spectrum) -> (Vec<f64>, Vec<f64>) {
        let buf: Vec<Complex64> = f
            .coeffs
            .iter()
            .zip(&g.coeffs)
            .map(|(&a, &b)| Complex64::new(a.re - b.im, a.im + b.re))
            .collect();
        self.split_inverse(buf)
    }

    /// `(∂ₓf, ∂ᵧf)` from the spectrum of a real field with one complex FFT.
    pub fn gradient(&self, spec: &Spectrum) -> (Vec<f64>, Vec<f64>) {
        let n = self.plan.n;
        let wave = &self.plan.wave_odd;
        let mut buf = Vec::with_capacity(spec.coeffs.len());
        for (row, &kx) in spec.coeffs.chunks_exact(n).zip(wave) {
            // i·kx·f̂ + i·(i·ky·f̂)
            buf.extend(row.iter().zip(wave).map(|(c, &ky)| c * Complex64::new(-ky, kx)));
        }
        self.split_inverse(buf)
    }

    /// `(Δ_{g₀}f, Δ_{g₀}g)` from two spectra of real fields with one FFT.
    pub fn laplacian_pair(&self, f: &Spectrum, g: &Spectrum, g0: &FlatMetric) -> (Vec<f64>, Vec<f64>) {
        let n = self.plan.n;
        let plan = &self.plan;
        let (ia, ib, ic) = g0.inverse();
        let mut buf = Vec::with_capacity(f.coeffs.len());
        for (a, (fr, gr)) in f.coeffs.chunks_exact(n).zip(g.coeffs.chunks_exact(n)).enumerate() {
            let (kx, kx_odd) = (plan.wave[a], plan.wave_odd[a]);
            buf.extend(fr.iter().zip(gr).enumerate().map(|(b, (x, y))| {
                let (ky, ky_odd) = (plan.wave[b], plan.wave_odd[b]);
                let sym = -(ia * kx * kx + 2.0 * ib * kx_odd * ky_odd + ic * ky * ky);
                Complex64::new(x.re - y.im, x.im + y.re) * sym
            }));
        }
        self.split_inverse(buf)
    }

    fn split_inverse(&self, mut buf: Vec<Complex64>) -> (Vec<f64>, Vec<f64>) {
        self.ifft2_unscaled(&mut buf);
        let scale = 1.0 / self.len() as f64;
        buf.into_iter().map(|z| (z.re * scale, z.im * scale)).unzip()
    }

    /// Forward transforms of several real fields, two per complex FFT.
    pub fn forward_all(&self, fields: &[&[f64]]) -> Vec<Spectrum> {
        let mut out = Vec::with_capacity(fields.len());
        for pair in fields.chunks(2) {
            if let [f, g] = pair {
                let (a, b) = self.forward_pair(f, g);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.forward(pair[0]));
            }
        }
        out
    }

    /// Inverse transforms of several spectra of real fields, two per FFT.
    pub fn inverse_all(&self, spectra: &[&Spectrum]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spectra.len());
        for pair in spectra.chunks(2) {
            if let [f, g] = pair {
                let (a, b) = self.inverse_pair(f, g);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.inverse(pair[0]));
            }
        }
        out
    }

    /// Applies the two-thirds rule to a pair of real fields in place.
    pub fn dealias_pair(&self, f: &mut [f64], g: &mut [f64]) {
        let n = self.plan.n;
        let mut buf: Vec<Complex64> = f
            .iter()
            .zip(g.iter())
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        self.fft2(&mut buf, self.plan.forward.as_ref());
        // The mask is symmetric under k -> -k, so it acts on the packed pair.
        for (a, row) in buf.chunks_mut(n).enumerate() {
            for (b, z) in row.iter_mut().enumerate() {
                if !self.in_band(a, b) {
                    *z = Complex64::default();
                }
            }
        }
        self.ifft2_unscaled(&mut buf);
        let scale = 1.0 / self.len() as f64;
        for ((z, a), b) in buf.iter().zip(f.iter_mut()).zip(g.iter_mut()) {
            *a = z.re * scale;
            *b = z.im * scale;
        }
    }

    pub fn dealias_values(&self, f: &mut [f64]) {
        let mut spec = self.forward(f);
        spec.dealias();
        f.copy_from_slice(&self.inverse(&spec));
    }
}

/// Fourier coefficients of a field, unnormalized (`coeffs[0] = n²·mean`).
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Grid mean of the represented field.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re / self.grid.len() as f64
    }

    /// New spectrum with coefficient `(a, b)` replaced by `f(a, b, coeff)`.
    pub fn map_modes(&self, f: impl Fn(usize, usize, Complex64) -> Complex64) -> Spectrum {
        let n = self.grid.n();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (a, row) in self.coeffs.chunks(n).enumerate() {
            coeffs.extend(row.iter().enumerate().map(|(b, &c)| f(a, b, c)));
        }
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    pub fn derivative(&self, axis: Axis) -> Spectrum {
        let n = self.grid.n();
        let wave = &self.grid.plan.wave_odd;
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (a, row) in self.coeffs.chunks_exact(n).enumerate() {
            match axis {
                Axis::X => {
                    let k = wave[a];
                    coeffs.extend(row.iter().map(|c| Complex64::new(-k * c.im, k * c.re)));
                }
                Axis::Y => coeffs.extend(
                    row.iter()
                        .zip(wave)
                        .map(|(c, &k)| Complex64::new(-k * c.im, k * c.re)),
                ),
            }
        }
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Symbol `-g₀^{ij} k_i k_j`; mixed terms use the odd-order wave numbers.
    pub fn laplacian(&self, g0: &FlatMetric) -> Spectrum {
        let n = self.grid.n();
        let plan = &self.grid.plan;
        let (ia, ib, ic) = g0.inverse();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (a, row) in self.coeffs.chunks_exact(n).enumerate() {
            let (kx, kx_odd) = (plan.wave[a], plan.wave_odd[a]);
            coeffs.extend(row.iter().enumerate().map(|(b, &c)| {
                let (ky, ky_odd) = (plan.wave[b], plan.wave_odd[b]);
                c * -(ia * kx * kx + 2.0 * ib * kx_odd * ky_odd + ic * ky * ky)
            }));
        }
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    pub fn dealias(&mut self) {
        let n = self.grid.n();
        let grid = &self.grid;
        for (a, row) in self.coeffs.chunks_mut(n).enumerate() {
            for (b, z) in row.iter_mut().enumerate() {
                if !grid.in_band(a, b) {
                    *z = Complex64::default();
                }
            }
        }
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.grid.inverse(self))
    }
}

/// Real grid function on the periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "field size does not match grid");
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn spectrum(&self) -> Spectrum {
        self.grid.forward(&self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ScalarField::new(self.grid.clone(), values)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Spectral derivative along `axis`; Nyquist mode dropped.
pub fn partial(f: &ScalarField, axis: Axis) -> ScalarField {
    f.spectrum().derivative(axis).to_field()
}

/// `Δ_{g₀} f = g₀^{ij} ∂_i ∂_j f` for a constant metric.
pub fn laplacian(f: &ScalarField, g0: &FlatMetric) -> ScalarField {
    f.spectrum().laplacian(g0).to_field()
}

/// `∫ f dμ_{g₀}` over the unit coordinate square.
pub fn integrate(f: &ScalarField, g0: &FlatMetric) -> f64 {
    f.mean() * g0.det().sqrt()
}

/// Zeroes every Fourier mode with `|k_i| > n/3`.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let mut spec = f.spectrum();
    spec.dealias();
    spec.to_field()
}

/// Pointwise product, dealiased.
pub fn product(f: &ScalarField, g: &ScalarField) -> ScalarField {
    dealias(&f.zip_map(g, |a, b| a * b))
}
