//! Fourier pseudo-spectral discretization of a periodic rectangle.
//!
//! Nodal values live on the uniform grid `(i hx, j hy)`, stored row-major with
//! the x index outermost (`data[i * ny + j]`). Fourier coefficients use the
//! standard FFT ordering in each direction and are normalized so that the
//! `(0, 0)` coefficient is the mean of the field.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[0, lx) x [0, ly)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// `|k|^2` per mode.
    k2: Vec<f64>,
    /// Wavenumbers for odd derivatives, Nyquist zeroed, per mode.
    dx: Vec<f64>,
    dy: Vec<f64>,
}

fn wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let base = 2.0 * PI / l;
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            base * m
        })
        .collect()
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Arc<Self>> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} must be a positive even integer, got {n}"
                )));
            }
        }
        for (name, l) in [("lx", lx), ("ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} must be > 0, got {l}")));
            }
        }
        let kx = wavenumbers(nx, lx);
        let ky = wavenumbers(ny, ly);
        let mut k2 = Vec::with_capacity(nx * ny);
        let mut dx = Vec::with_capacity(nx * ny);
        let mut dy = Vec::with_capacity(nx * ny);
        for (i, &kxi) in kx.iter().enumerate() {
            for (j, &kyj) in ky.iter().enumerate() {
                k2.push(kxi * kxi + kyj * kyj);
                dx.push(if i == nx / 2 { 0.0 } else { kxi });
                dy.push(if j == ny / 2 { 0.0 } else { kyj });
            }
        }
        Ok(Arc::new(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            kx,
            ky,
            k2,
            dx,
            dy,
        }))
    }

    /// `n x n` grid on `[0, 2 pi)^2`.
    pub fn square_2pi(n: usize) -> Result<Arc<Self>> {
        Self::new(n, n, 2.0 * PI, 2.0 * PI)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    pub fn kx(&self) -> &[f64] {
        &self.kx
    }
    pub fn ky(&self) -> &[f64] {
        &self.ky
    }
    /// `|k|^2` for every mode, in coefficient layout.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }
    /// x-wavenumber for first derivatives (Nyquist zeroed), per mode.
    pub fn deriv_x(&self) -> &[f64] {
        &self.dx
    }
    pub fn deriv_y(&self) -> &[f64] {
        &self.dy
    }

    /// Node coordinates of flat index `idx`.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = (idx / self.ny, idx % self.ny);
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    /// Flat coefficient index of signed mode numbers `(mx, my)`.
    pub fn mode_index(&self, mx: i64, my: i64) -> usize {
        let wrap = |m: i64, n: usize| m.rem_euclid(n as i64) as usize;
        wrap(mx, self.nx) * self.ny + wrap(my, self.ny)
    }

    /// True when the 2/3 rule keeps mode `idx`.
    fn keeps_under_two_thirds(&self, idx: usize) -> bool {
        let (i, j) = (idx / self.ny, idx % self.ny);
        let signed = |m: usize, n: usize| if m <= n / 2 { m } else { n - m };
        3 * signed(i, self.nx) < self.nx && 3 * signed(j, self.ny) < self.ny
    }
}

/// Real grid function.
#[derive(Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    data: Vec<f64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("nx", &self.grid.nx)
            .field("ny", &self.grid.ny)
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.coords(idx);
                f(x, y)
            })
            .collect();
        Self {
            grid: grid.clone(),
            data,
        }
    }

    pub fn from_vec(grid: &Arc<Grid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            data,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.grid.ny + j]
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.same_grid(other));
        Self {
            grid: self.grid.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        debug_assert!(self.same_grid(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn add(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Fourier coefficients of a grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_vec(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of signed mode `(mx, my)`.
    pub fn mode(&self, mx: i64, my: i64) -> Complex64 {
        self.coeffs[self.grid.mode_index(mx, my)]
    }

    pub fn set_mode(&mut self, mx: i64, my: i64, value: Complex64) {
        let idx = self.grid.mode_index(mx, my);
        self.coeffs[idx] = value;
    }

    /// Largest violation of `c(-k) = conj(c(k))`, relative to the largest coefficient.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut defect = 0.0f64;
        let mut norm = 0.0f64;
        for i in 0..nx {
            for j in 0..ny {
                let c = self.coeffs[i * ny + j];
                let m = self.coeffs[((nx - i) % nx) * ny + (ny - j) % ny];
                defect = defect.max((c - m.conj()).norm());
                norm = norm.max(c.norm());
            }
        }
        if norm == 0.0 {
            0.0
        } else {
            defect / norm
        }
    }
}

/// Multiplies every coefficient by the real symbol evaluated at `(kx, ky)`.
pub fn apply_symbol(f: &SpectralField, sym: impl Fn(f64, f64) -> f64) -> SpectralField {
    let g = &f.grid;
    let mut out = f.clone();
    for (i, &kx) in g.kx.iter().enumerate() {
        for (j, &ky) in g.ky.iter().enumerate() {
            out.coeffs[i * g.ny + j] *= sym(kx, ky);
        }
    }
    out
}

/// Discrete `L^2` inner product with uniform quadrature weights `hx hy`.
pub fn inner(f: &Field, g: &Field) -> f64 {
    debug_assert!(f.same_grid(g));
    let w = f.grid.hx * f.grid.hy;
    w * f.data.iter().zip(&g.data).map(|(a, b)| a * b).sum::<f64>()
}

/// Transform plan and scratch space for one grid.
///
/// A plan carries mutable scratch buffers and must not be shared between
/// threads; independent simulations each build their own.
pub struct Spectral {
    grid: Arc<Grid>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    transpose: RefCell<Vec<Complex64>>,
    scratch: RefCell<Vec<Complex64>>,
    dealias: bool,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral")
            .field("nx", &self.grid.nx)
            .field("ny", &self.grid.ny)
            .field("dealias", &self.dealias)
            .finish()
    }
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

impl Spectral {
    pub fn new(grid: &Arc<Grid>) -> Self {
        let mut planner = FftPlanner::new();
        let fft_x = planner.plan_fft_forward(grid.nx);
        let ifft_x = planner.plan_fft_inverse(grid.nx);
        let fft_y = planner.plan_fft_forward(grid.ny);
        let ifft_y = planner.plan_fft_inverse(grid.ny);
        let scratch_len = [&fft_x, &ifft_x, &fft_y, &ifft_y]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            grid: grid.clone(),
            fft_x,
            ifft_x,
            fft_y,
            ifft_y,
            transpose: RefCell::new(vec![ZERO; grid.len()]),
            scratch: RefCell::new(vec![ZERO; scratch_len]),
            dealias: false,
        }
    }

    /// Enables 2/3-rule truncation of pointwise nonlinear products.
    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Unnormalized 2D transform in place; `inverse` selects the sign.
    fn transform_2d(&self, buf: &mut [Complex64], inverse: bool) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut scratch = self.scratch.borrow_mut();
        let mut tr = self.transpose.borrow_mut();
        let (fx, fy) = if inverse {
            (&self.ifft_x, &self.ifft_y)
        } else {
            (&self.fft_x, &self.fft_y)
        };
        fy.process_with_scratch(buf, &mut scratch);
        for i in 0..nx {
            for j in 0..ny {
                tr[j * nx + i] = buf[i * ny + j];
            }
        }
        fx.process_with_scratch(&mut tr, &mut scratch);
        for j in 0..ny {
            for i in 0..nx {
                buf[i * ny + j] = tr[j * nx + i];
            }
        }
    }

    /// Forward transform of nodal values into `out` (normalized by `1/N`).
    pub fn forward_into(&self, data: &[f64], out: &mut [Complex64]) {
        let n = self.grid.len();
        debug_assert_eq!(data.len(), n);
        for (o, &v) in out.iter_mut().zip(data) {
            *o = Complex64::new(v, 0.0);
        }
        self.transform_2d(out, false);
        let scale = 1.0 / n as f64;
        out.iter_mut().for_each(|c| *c *= scale);
    }

    /// Forward transforms of two real fields with one complex transform.
    pub fn forward_pair_into(
        &self,
        a: &[f64],
        b: &[f64],
        out_a: &mut [Complex64],
        out_b: &mut [Complex64],
    ) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let n = nx * ny;
        for ((o, &x), &y) in out_a.iter_mut().zip(a).zip(b) {
            *o = Complex64::new(x, y);
        }
        self.transform_2d(out_a, false);
        let scale = 0.5 / n as f64;
        // Split Z = A + iB using the Hermitian symmetry of A and B.
        for i in 0..nx {
            let im = (nx - i) % nx;
            for j in 0..ny {
                let jm = (ny - j) % ny;
                let z = out_a[i * ny + j];
                let zm = out_a[im * ny + jm].conj();
                out_b[i * ny + j] = Complex64::new(z.im - zm.im, -(z.re - zm.re)) * scale;
            }
        }
        // Second pass needs the untouched Z, so rebuild A from Z - iB.
        for idx in 0..n {
            let b_c = out_b[idx];
            let z = out_a[idx] * (1.0 / n as f64);
            out_a[idx] = z - Complex64::new(-b_c.im, b_c.re);
        }
    }

    /// Inverse transform discarding the imaginary part.
    pub fn inverse_real_into(&self, coeffs: &[Complex64], out: &mut [f64]) {
        let mut buf = coeffs.to_vec();
        self.transform_2d(&mut buf, true);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re;
        }
    }

    /// Inverse transforms of two Hermitian spectra with one complex transform.
    pub fn inverse_pair_real_into(
        &self,
        a: &[Complex64],
        b: &[Complex64],
        out_a: &mut [f64],
        out_b: &mut [f64],
    ) {
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| x + Complex64::new(-y.im, y.re))
            .collect();
        self.transform_2d(&mut buf, true);
        for ((oa, ob), c) in out_a.iter_mut().zip(out_b.iter_mut()).zip(&buf) {
            *oa = c.re;
            *ob = c.im;
        }
    }

    pub fn forward(&self, f: &Field) -> SpectralField {
        let mut coeffs = vec![ZERO; self.grid.len()];
        self.forward_into(&f.data, &mut coeffs);
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Inverse transform; fails when the coefficients are not (close to) the
    /// transform of a real field.
    pub fn inverse(&self, f: &SpectralField) -> Result<Field> {
        let mut buf = f.coeffs.clone();
        self.transform_2d(&mut buf, true);
        let norm = buf.iter().fold(0.0f64, |acc, c| acc.max(c.norm()));
        let residue = buf.iter().fold(0.0f64, |acc, c| acc.max(c.im.abs()));
        if residue > 1e-8 * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::ImaginaryResidue { residue, norm });
        }
        Ok(Field {
            grid: self.grid.clone(),
            data: buf.iter().map(|c| c.re).collect(),
        })
    }

    /// Zeroes the modes removed by the 2/3 rule when dealiasing is enabled.
    pub fn truncate_if_dealiased(&self, coeffs: &mut [Complex64]) {
        if self.dealias {
            for (idx, c) in coeffs.iter_mut().enumerate() {
                if !self.grid.keeps_under_two_thirds(idx) {
                    *c = ZERO;
                }
            }
        }
    }

    /// Applies the per-mode real symbol `sym[idx]` to `f`.
    pub fn apply_mode_symbol(&self, f: &Field, sym: &[f64]) -> Field {
        let mut c = vec![ZERO; self.grid.len()];
        self.forward_into(&f.data, &mut c);
        for (ci, s) in c.iter_mut().zip(sym) {
            *ci *= *s;
        }
        let mut out = Field::zeros(&self.grid);
        self.inverse_real_into(&c, &mut out.data);
        out
    }

    pub fn laplacian(&self, f: &Field) -> Field {
        let sym: Vec<f64> = self.grid.k2.iter().map(|k| -k).collect();
        self.apply_mode_symbol(f, &sym)
    }

    /// Spectral gradient `(d/dx f, d/dy f)` with the Nyquist derivative zeroed.
    pub fn gradient(&self, f: &Field) -> (Field, Field) {
        let n = self.grid.len();
        let mut c = vec![ZERO; n];
        self.forward_into(&f.data, &mut c);
        let mut cx = vec![ZERO; n];
        let mut cy = vec![ZERO; n];
        for idx in 0..n {
            let ik = c[idx] * Complex64::i();
            cx[idx] = ik * self.grid.dx[idx];
            cy[idx] = ik * self.grid.dy[idx];
        }
        let mut gx = Field::zeros(&self.grid);
        let mut gy = Field::zeros(&self.grid);
        self.inverse_pair_real_into(&cx, &cy, &mut gx.data, &mut gy.data);
        (gx, gy)
    }

    /// Spectral gradient from coefficients already in hand.
    pub(crate) fn gradient_from_coeffs(&self, c: &[Complex64], gx: &mut [f64], gy: &mut [f64]) {
        let n = self.grid.len();
        let mut cx = vec![ZERO; n];
        let mut cy = vec![ZERO; n];
        for idx in 0..n {
            let ik = c[idx] * Complex64::i();
            cx[idx] = ik * self.grid.dx[idx];
            cy[idx] = ik * self.grid.dy[idx];
        }
        self.inverse_pair_real_into(&cx, &cy, gx, gy);
    }

    /// Coefficients of `d/dx fx + d/dy fy`.
    pub(crate) fn divergence_coeffs(&self, fx: &[f64], fy: &[f64], out: &mut [Complex64]) {
        let n = self.grid.len();
        let mut cy = vec![ZERO; n];
        self.forward_pair_into(fx, fy, out, &mut cy);
        for idx in 0..n {
            let v = out[idx] * self.grid.dx[idx] + cy[idx] * self.grid.dy[idx];
            out[idx] = v * Complex64::i();
        }
    }

    pub fn divergence(&self, fx: &Field, fy: &Field) -> Field {
        assert!(fx.same_grid(fy), "divergence of fields on different grids");
        let mut c = vec![ZERO; self.grid.len()];
        self.divergence_coeffs(&fx.data, &fy.data, &mut c);
        let mut out = Field::zeros(&self.grid);
        self.inverse_real_into(&c, &mut out.data);
        out
    }
}

/// Header tag of the binary snapshot format.
pub const SNAPSHOT_MAGIC: &str = "GFRK1";

/// Writes `GFRK1 nx ny lx ly t\n` followed by the nodal values as
/// little-endian `f64`, row-major.
pub fn write_snapshot<W: Write>(mut w: W, f: &Field, t: f64) -> std::io::Result<()> {
    let g = &f.grid;
    writeln!(
        w,
        "{SNAPSHOT_MAGIC} {} {} {:?} {:?} {:?}",
        g.nx, g.ny, g.lx, g.ly, t
    )?;
    let mut bytes = Vec::with_capacity(8 * f.data.len());
    for v in &f.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    w.flush()
}

pub fn save_snapshot(path: &Path, f: &Field, t: f64) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_snapshot(std::io::BufWriter::new(file), f, t).map_err(|e| Error::io(path, e))
}

/// Reads a snapshot, returning the field (on a freshly built grid) and its time.
pub fn read_snapshot<R: Read>(r: R) -> Result<(Field, f64)> {
    let mut reader = BufReader::new(r);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!(
            "expected `{SNAPSHOT_MAGIC} nx ny lx ly t`, got `{}`",
            header.trim_end()
        )));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad {what} `{s}`")))
    };
    let nx: usize = parts[1]
        .parse()
        .map_err(|_| Error::Format(format!("bad nx `{}`", parts[1])))?;
    let ny: usize = parts[2]
        .parse()
        .map_err(|_| Error::Format(format!("bad ny `{}`", parts[2])))?;
    let (lx, ly, t) = (
        num(parts[3], "lx")?,
        num(parts[4], "ly")?,
        num(parts[5], "t")?,
    );
    let grid = Grid::new(nx, ny, lx, ly).map_err(|e| Error::Format(e.to_string()))?;
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("unreadable payload: {e}")))?;
    if bytes.len() != 8 * nx * ny {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            8 * nx * ny
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite value in payload".into()));
    }
    Ok((Field { grid, data }, t))
}

pub fn load_snapshot(path: &Path) -> Result<(Field, f64)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_snapshot(file)
}

/// Lossy `x,y,value` export for plotting.
pub fn write_csv<W: Write>(mut w: W, f: &Field) -> std::io::Result<()> {
    writeln!(w, "x,y,value")?;
    for (idx, v) in f.data.iter().enumerate() {
        let (x, y) = f.grid.coords(idx);
        writeln!(w, "{x},{y},{v}")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Arc<Grid>, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::from_vec(grid, data).unwrap()
    }

    /// Band-limited random field: a few low modes with random amplitudes.
    fn smooth_field(grid: &Arc<Grid>, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0..4) as f64,
                    rng.gen_range(0..4) as f64,
                    rng.gen_range(0.0..6.3),
                )
            })
            .collect();
        let (kx0, ky0) = (2.0 * PI / grid.lx(), 2.0 * PI / grid.ly());
        Field::from_fn(grid, |x, y| {
            terms
                .iter()
                .map(|&(a, mx, my, ph)| a * (mx * kx0 * x + my * ky0 * y + ph).sin())
                .sum()
        })
    }

    #[test]
    fn grid_rejects_odd_or_nonpositive() {
        assert!(Grid::new(15, 16, 1.0, 1.0).is_err());
        assert!(Grid::new(16, 16, 0.0, 1.0).is_err());
        assert!(Grid::new(0, 16, 1.0, 1.0).is_err());
        let g = Grid::new(16, 8, 2.0, 3.0).unwrap();
        assert_eq!(g.hx() * 16.0, 2.0);
        assert_eq!(g.hy() * 8.0, 3.0);
    }

    #[test]
    fn wavenumber_ordering() {
        let g = Grid::square_2pi(8).unwrap();
        assert_eq!(g.kx(), &[0.0, 1.0, 2.0, 3.0, 4.0, -3.0, -2.0, -1.0]);
        let mut sorted: Vec<i64> = g.kx().iter().map(|k| k.round() as i64).collect();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
    }

    #[test]
    fn constant_field_transform() {
        let g = Grid::new(8, 12, 3.0, 5.0).unwrap();
        let sp = Spectral::new(&g);
        let f = sp.forward(&Field::constant(&g, 3.0));
        assert!((f.mode(0, 0) - Complex64::new(3.0, 0.0)).norm() < 1e-15);
        let rest = f
            .coeffs()
            .iter()
            .skip(1)
            .fold(0.0f64, |a, c| a.max(c.norm()));
        assert!(rest < 1e-15);
    }

    #[test]
    fn single_cosine_mode() {
        let g = Grid::square_2pi(16).unwrap();
        let sp = Spectral::new(&g);
        let f = sp.forward(&Field::from_fn(&g, |x, _| x.cos()));
        for (idx, c) in f.coeffs().iter().enumerate() {
            let expected = if idx == g.mode_index(1, 0) || idx == g.mode_index(-1, 0) {
                0.5
            } else {
                0.0
            };
            assert!(
                (c - Complex64::new(expected, 0.0)).norm() < 1e-14,
                "{idx} {c}"
            );
        }
    }

    #[test]
    fn round_trip_random() {
        let g = Grid::new(32, 16, 1.0, 2.0).unwrap();
        let sp = Spectral::new(&g);
        let f = random_field(&g, 7);
        let back = sp.inverse(&sp.forward(&f)).unwrap();
        let err = f.sub(&back).max_abs();
        assert!(err < 1e-13 * f.max_abs(), "{err}");
        assert!(sp.forward(&f).conjugate_symmetry_defect() < 1e-12);
    }

    #[test]
    fn inverse_of_single_modes() {
        let g = Grid::square_2pi(16).unwrap();
        let sp = Spectral::new(&g);
        let zero = sp.inverse(&SpectralField::zeros(&g)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let mut c = SpectralField::zeros(&g);
        c.set_mode(1, 1, Complex64::new(0.5, 0.0));
        c.set_mode(-1, -1, Complex64::new(0.5, 0.0));
        let f = sp.inverse(&c).unwrap();
        let exact = Field::from_fn(&g, |x, y| (x + y).cos());
        assert!(f.sub(&exact).max_abs() < 1e-14);
    }

    #[test]
    fn inverse_rejects_non_hermitian_data() {
        let g = Grid::square_2pi(8).unwrap();
        let sp = Spectral::new(&g);
        let mut c = SpectralField::zeros(&g);
        c.set_mode(1, 0, Complex64::new(1.0, 0.0));
        assert!(matches!(
            sp.inverse(&c),
            Err(Error::ImaginaryResidue { .. })
        ));
    }

    #[test]
    fn symbols() {
        let g = Grid::square_2pi(16).unwrap();
        let sp = Spectral::new(&g);
        let mode10 = sp.forward(&Field::from_fn(&g, |x, _| x.cos()));
        let lap = apply_symbol(&mode10, |kx, ky| -(kx * kx + ky * ky));
        let idx = g.mode_index(1, 0);
        assert!((lap.coeffs()[idx] + mode10.coeffs()[idx]).norm() < 1e-15);
        let mode11 = sp.forward(&Field::from_fn(&g, |x, y| (x + y).cos()));
        let bih = apply_symbol(&mode11, |kx, ky| (kx * kx + ky * ky).powi(2));
        let idx = g.mode_index(1, 1);
        assert!((bih.coeffs()[idx] - mode11.coeffs()[idx] * 4.0).norm() < 1e-14);
        let zero = apply_symbol(&mode11, |_, _| 0.0);
        assert!(zero.coeffs().iter().all(|c| c.norm() == 0.0));
        let lap_rand = apply_symbol(&sp.forward(&random_field(&g, 3)), |kx, ky| {
            -(kx * kx + ky * ky)
        });
        assert_eq!(lap_rand.mode(0, 0), ZERO);
    }

    #[test]
    fn gradient_of_sine_and_constant() {
        let g = Grid::square_2pi(16).unwrap();
        let sp = Spectral::new(&g);
        let (gx, gy) = sp.gradient(&Field::from_fn(&g, |x, _| x.sin()));
        assert!(gx.sub(&Field::from_fn(&g, |x, _| x.cos())).max_abs() < 1e-12);
        assert!(gy.max_abs() < 1e-12);
        let (cx, cy) = sp.gradient(&Field::constant(&g, 2.5));
        assert!(cx.max_abs() < 1e-14 && cy.max_abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_fourth_order_differences() {
        // Oracle: centered 4th-order stencil, error O(h^4).
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&n| {
                let g = Grid::new(n, n, 2.0 * PI, 2.0 * PI).unwrap();
                let sp = Spectral::new(&g);
                let f = Field::from_fn(&g, |x, y| (2.0 * x).sin() * y.cos() + (x + 3.0 * y).cos());
                let (gx, _) = sp.gradient(&f);
                let h = g.hx();
                let mut err = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        let at = |di: i64| f.at(((i as i64 + di).rem_euclid(n as i64)) as usize, j);
                        let fd = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
                        err = err.max((fd - gx.at(i, j)).abs());
                    }
                }
                err
            })
            .collect();
        // Halving h shrinks the gap by ~16.
        assert!(errs[0] < 5e-3 && errs[1] < errs[0] / 12.0, "{errs:?}");
    }

    #[test]
    fn divergence_identities() {
        let g = Grid::new(32, 32, 3.0, 4.0).unwrap();
        let sp = Spectral::new(&g);
        let f = smooth_field(&g, 11);
        let (gx, gy) = sp.gradient(&f);
        let div = sp.divergence(&gx, &gy);
        assert!(div.sub(&sp.laplacian(&f)).max_abs() < 1e-12);
        let c = sp.divergence(&Field::constant(&g, 1.0), &Field::constant(&g, -2.0));
        assert!(c.max_abs() < 1e-14);
    }

    #[test]
    fn gradient_divergence_adjoint() {
        let g = Grid::new(16, 24, 2.0, 1.5).unwrap();
        let sp = Spectral::new(&g);
        for seed in 0..100 {
            let vx = random_field(&g, 3 * seed);
            let vy = random_field(&g, 3 * seed + 1);
            let w = random_field(&g, 3 * seed + 2);
            let (wx, wy) = sp.gradient(&w);
            let lhs = inner(&sp.divergence(&vx, &vy), &w);
            let rhs = -(inner(&vx, &wx) + inner(&vy, &wy));
            assert!((lhs - rhs).abs() < 1e-11, "{seed}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn quadrature() {
        let g = Grid::square_2pi(16).unwrap();
        let one = Field::constant(&g, 1.0);
        assert!((inner(&one, &one) - 4.0 * PI * PI).abs() < 1e-12);
        let s = Field::from_fn(&g, |x, _| x.sin());
        assert!((inner(&s, &s) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn parseval() {
        let g = Grid::new(16, 32, 1.0, 3.0).unwrap();
        let sp = Spectral::new(&g);
        for seed in 0..10 {
            let f = random_field(&g, seed);
            let c = sp.forward(&f);
            let spec: f64 = g.area() * c.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>();
            let phys = inner(&f, &f);
            assert!((spec - phys).abs() < 1e-12 * phys);
        }
    }

    #[test]
    fn paired_transforms_match_single() {
        let g = Grid::new(16, 8, 1.0, 1.0).unwrap();
        let sp = Spectral::new(&g);
        let a = random_field(&g, 1);
        let b = random_field(&g, 2);
        let n = g.len();
        let (mut ca, mut cb) = (vec![ZERO; n], vec![ZERO; n]);
        sp.forward_pair_into(a.data(), b.data(), &mut ca, &mut cb);
        let (sa, sb) = (sp.forward(&a), sp.forward(&b));
        for idx in 0..n {
            assert!((ca[idx] - sa.coeffs()[idx]).norm() < 1e-15);
            assert!((cb[idx] - sb.coeffs()[idx]).norm() < 1e-15);
        }
        let (mut ra, mut rb) = (vec![0.0; n], vec![0.0; n]);
        sp.inverse_pair_real_into(&ca, &cb, &mut ra, &mut rb);
        for idx in 0..n {
            assert!((ra[idx] - a.data()[idx]).abs() < 1e-14);
            assert!((rb[idx] - b.data()[idx]).abs() < 1e-14);
        }
    }

    #[test]
    fn dealias_truncation() {
        let g = Grid::square_2pi(12).unwrap();
        let sp = Spectral::new(&g).with_dealias(true);
        let mut c = sp.forward(&random_field(&g, 5));
        sp.truncate_if_dealiased(c.coeffs_mut());
        assert_ne!(c.mode(3, 0), ZERO);
        assert_eq!(c.mode(4, 0), ZERO);
        assert_eq!(c.mode(0, -4), ZERO);
    }

    #[test]
    fn snapshot_round_trip_and_errors() {
        let g = Grid::new(8, 6, 12.8, 2.0 * PI).unwrap();
        let f = random_field(&g, 9);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, 0.25).unwrap();
        assert!(buf.starts_with(b"GFRK1 8 6 12.8 6.283185307179586 0.25\n"));
        let (back, t) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(back.data(), f.data());
        assert_eq!(**back.grid(), *g);

        assert!(read_snapshot(&b"GFRK2 8 6 1 1 0\n"[..]).is_err());
        let truncated = &buf[..buf.len() - 8];
        assert!(matches!(read_snapshot(truncated), Err(Error::Format(_))));
    }

    #[test]
    fn csv_export() {
        let g = Grid::square_2pi(2).unwrap();
        let mut out = Vec::new();
        write_csv(&mut out, &Field::constant(&g, 1.5)).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("x,y,value\n0,0,1.5\n"));
    }
}
