//! Wigner quasiprobability functions of single-oscillator states on a
//! rectangular phase-space grid, x-marginals and the lobe separation ΔX.
//!
//! Convention: a grid point `(x, y)` corresponds to the coherent amplitude
//! `beta = (x + i y) / sqrt(2)` and
//!
//! `W(x, y) = (1/pi) Tr[rho D(beta) P D(beta)†] = (1/pi) sum_{k,l} rho_kl (-1)^k <l|D(2 beta)|k>`
//!
//! with `P` the parity operator. The vacuum is `exp(-x² - y²) / pi`, which
//! integrates to one over the plane. A coherent amplitude `alpha` therefore
//! sits at radius `sqrt(2) |alpha|` on the grid; see [`grid_radius`].

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Space, C64, ZERO};

/// Grid radius at which a coherent amplitude of modulus `alpha` appears.
pub fn grid_radius(alpha: f64) -> f64 {
    std::f64::consts::SQRT_2 * alpha
}

/// Coherent amplitude modulus at a given grid radius.
pub fn amplitude_at_radius(r: f64) -> f64 {
    r / std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerGridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    /// Maximum population allowed on each of the top three Fock levels;
    /// `None` disables the truncation check.
    pub leak_tolerance: Option<f64>,
}

impl WignerGridSpec {
    /// `[-6, 6]²` at spacing 0.04: room for the weak-regime ring at radius
    /// about 2.24 plus its width.
    pub fn weak_default() -> Self {
        Self::square(6.0, 301)
    }

    /// `[-4.5, 4.5]²` at spacing 0.0375, wide enough for the outermost
    /// symmetry-broken lobes near `x = ±2.4`.
    pub fn deep_default() -> Self {
        Self::square(4.5, 241)
    }

    pub fn square(half_width: f64, points: usize) -> Self {
        Self {
            x_range: (-half_width, half_width),
            y_range: (-half_width, half_width),
            nx: points,
            ny: points,
            leak_tolerance: Some(1e-6),
        }
    }

    /// Same ranges with `2n - 1` points per axis, so the coarse grid nodes
    /// are kept and spacing halves.
    pub fn refined(&self) -> Self {
        Self { nx: 2 * self.nx - 1, ny: 2 * self.ny - 1, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_range = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a < b;
        if !ok_range(self.x_range) || !ok_range(self.y_range) {
            return Err(Error::InvalidParams("grid ranges must be finite with lo < hi".into()));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidParams("grid needs at least 2 points per axis".into()));
        }
        if let Some(t) = self.leak_tolerance {
            if !(t >= 0.0) {
                return Err(Error::InvalidParams("leak tolerance must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_range.1 - self.x_range.0) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_range.1 - self.y_range.0) / (self.ny - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        axis(self.x_range, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        axis(self.y_range, self.ny)
    }
}

fn axis((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Sampled Wigner function. `values[ix * ny + iy]` holds `W(x_ix, y_iy)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    /// Largest imaginary part met while summing; zero in exact arithmetic.
    #[serde(default)]
    pub imag_residue: f64,
}

impl WignerGrid {
    /// Samples an arbitrary field, mainly for synthetic checks.
    pub fn from_fn(spec: &WignerGridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        spec.validate()?;
        let (xs, ys) = (spec.xs(), spec.ys());
        let values = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).map(|(x, y)| f(x, y)).collect();
        Ok(Self {
            x_range: spec.x_range,
            y_range: spec.y_range,
            nx: spec.nx,
            ny: spec.ny,
            values,
            imag_residue: 0.0,
        })
    }

    pub fn spec(&self) -> WignerGridSpec {
        WignerGridSpec { x_range: self.x_range, y_range: self.y_range, nx: self.nx, ny: self.ny, leak_tolerance: None }
    }

    pub fn xs(&self) -> Vec<f64> {
        axis(self.x_range, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        axis(self.y_range, self.ny)
    }

    pub fn dx(&self) -> f64 {
        self.spec().dx()
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.ny + iy]
    }

    /// Riemann sum of `W dx dy` over the grid.
    pub fn integral(&self) -> f64 {
        let s = self.spec();
        self.values.iter().sum::<f64>() * s.dx() * s.dy()
    }

    /// Value and location of the maximum.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let (k, w) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &w)| if w > best.1 { (k, w) } else { best });
        (self.xs()[k / self.ny], self.ys()[k % self.ny], w)
    }

    /// Writes `x,y,w` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x", "y", "w"])?;
        let (xs, ys) = (self.xs(), self.ys());
        for (ix, x) in xs.iter().enumerate() {
            for (iy, y) in ys.iter().enumerate() {
                wtr.serialize((x, y, self.get(ix, iy)))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Compact descriptor: ranges, counts and row-major values.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `<m|D(alpha)|n>` for `m, n < n_levels`, row-major.
///
/// Exact elements of the untruncated displacement operator,
/// `<j+s|D|j> = e^{-|alpha|²/2} alpha^s sqrt(j!/(j+s)!) L_j^(s)(|alpha|²)`
/// and its mirror with `-alpha*`, generated along each diagonal by the
/// three-term Laguerre recurrence.
pub fn displacement_elements(alpha: C64, n_levels: usize) -> Vec<C64> {
    let n = n_levels;
    let x = alpha.norm_sqr();
    let mut d = vec![ZERO; n * n];
    let mut lag = vec![0.0; n];
    let mut below = C64::new((-0.5 * x).exp(), 0.0);
    let mut above = below;
    for s in 0..n {
        if s > 0 {
            let r = (s as f64).sqrt();
            below = below * alpha / r;
            above = above * -alpha.conj() / r;
        }
        let sf = s as f64;
        let len = n - s;
        lag[0] = 1.0;
        if len > 1 {
            lag[1] = 1.0 + sf - x;
        }
        for j in 1..len.saturating_sub(1) {
            let jf = j as f64;
            lag[j + 1] = ((2.0 * jf + 1.0 + sf - x) * lag[j] - (jf + sf) * lag[j - 1]) / (jf + 1.0);
        }
        // q = sqrt(j! s! / (j+s)!)
        let mut q = 1.0;
        for j in 0..len {
            if j > 0 {
                q *= (j as f64 / (j + s) as f64).sqrt();
            }
            d[(j + s) * n + j] = below * (q * lag[j]);
            d[j * n + j + s] = above * (q * lag[j]);
        }
    }
    d
}

/// Fails with `CutoffTooSmall` when a level above `N - 3` (the top two of
/// `0..N`) holds more than `tolerance`.
pub fn check_truncation(rho: &DensityMatrix, tolerance: f64) -> Result<()> {
    let pops = rho.diagonal_populations();
    let n = pops.len();
    for level in n.saturating_sub(2)..n {
        if pops[level] > tolerance {
            return Err(Error::CutoffTooSmall { level, population: pops[level], tolerance });
        }
    }
    Ok(())
}

/// Wigner function of a single-oscillator state. Rows of the grid are
/// evaluated in parallel.
pub fn wigner(rho: &DensityMatrix, spec: &WignerGridSpec) -> Result<WignerGrid> {
    spec.validate()?;
    let n = match rho.space() {
        Space::Single(n) => n,
        s => {
            return Err(Error::InvalidSpace(format!(
                "Wigner functions need a single-oscillator state, got {s}"
            )))
        }
    };
    if let Some(tol) = spec.leak_tolerance {
        check_truncation(rho, tol)?;
    }
    // r[l * n + k] = rho_kl (-1)^k, so W = sum_{l,k} r[l,k] <l|D|k>.
    let r: Vec<C64> = (0..n * n)
        .map(|idx| {
            let (l, k) = (idx / n, idx % n);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            rho.get(k, l) * sign
        })
        .collect();
    let (xs, ys) = (spec.xs(), spec.ys());
    let scale = std::f64::consts::FRAC_1_PI;
    let rows: Vec<(Vec<f64>, f64)> = xs
        .par_iter()
        .map(|&x| {
            let mut row = Vec::with_capacity(ys.len());
            let mut residue = 0.0f64;
            for &y in &ys {
                // 2 beta = sqrt(2) (x + i y)
                let alpha = C64::new(x, y) * std::f64::consts::SQRT_2;
                let d = displacement_elements(alpha, n);
                let w: C64 = r.iter().zip(&d).map(|(a, b)| a * b).sum::<C64>() * scale;
                residue = residue.max(w.im.abs());
                row.push(w.re);
            }
            (row, residue)
        })
        .collect();
    let imag_residue = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let values = rows.into_iter().flat_map(|r| r.0).collect();
    Ok(WignerGrid {
        x_range: spec.x_range,
        y_range: spec.y_range,
        nx: spec.nx,
        ny: spec.ny,
        values,
        imag_residue,
    })
}

/// Density along x after integrating over y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl Marginal {
    /// Trapezoidal integral over x.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.density, self.x[1] - self.x[0])
    }
}

fn trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
}

/// Trapezoidal integration of `W` over y.
pub fn marginal_x(w: &WignerGrid) -> Marginal {
    let dy = w.spec().dy();
    let density = (0..w.nx).map(|ix| trapezoid(&w.values[ix * w.ny..(ix + 1) * w.ny], dy)).collect();
    Marginal { x: w.xs(), density }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakRule {
    /// Minimum prominence as a fraction of the global marginal maximum.
    pub relative_prominence: f64,
    /// Minimum distance between accepted peaks, in grid cells.
    pub min_separation_cells: usize,
}

impl Default for PeakRule {
    fn default() -> Self {
        Self { relative_prominence: 0.05, min_separation_cells: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalityResult {
    pub delta_x: f64,
    /// Accepted peak locations in ascending x.
    pub peak_positions: Vec<f64>,
    pub peak_heights: Vec<f64>,
}

impl BimodalityResult {
    pub fn is_bimodal(&self) -> bool {
        self.peak_positions.len() >= 2
    }
}

/// Topographic prominence of the local maximum at `i`.
fn prominence(f: &[f64], i: usize) -> f64 {
    let h = f[i];
    let mut left_min = h;
    for j in (0..i).rev() {
        if f[j] > h {
            break;
        }
        left_min = left_min.min(f[j]);
    }
    let mut right_min = h;
    for &v in &f[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Local maxima of a sampled curve that pass `rule`, in ascending order.
/// A flat top counts once, at its centre.
pub fn find_peaks(f: &[f64], rule: &PeakRule) -> Vec<usize> {
    let n = f.len();
    let global = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n < 3 || !(global > 0.0) {
        return Vec::new();
    }
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if f[i] > f[i - 1] {
            let mut j = i;
            while j + 1 < n && f[j + 1] == f[i] {
                j += 1;
            }
            if j + 1 < n && f[j + 1] < f[i] {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let threshold = rule.relative_prominence * global;
    let mut accepted: Vec<usize> = candidates.into_iter().filter(|&i| prominence(f, i) >= threshold).collect();
    accepted.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in accepted {
        if kept.iter().all(|&k| k.abs_diff(i) >= rule.min_separation_cells) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Distance between the outermost accepted maxima of the x-marginal; zero
/// for a unimodal marginal.
pub fn delta_x(w: &WignerGrid, rule: &PeakRule) -> BimodalityResult {
    delta_x_of_marginal(&marginal_x(w), rule)
}

pub fn delta_x_of_marginal(m: &Marginal, rule: &PeakRule) -> BimodalityResult {
    let peaks = find_peaks(&m.density, rule);
    let peak_positions: Vec<f64> = peaks.iter().map(|&i| m.x[i]).collect();
    let peak_heights = peaks.iter().map(|&i| m.density[i]).collect();
    let delta_x = match (peak_positions.first(), peak_positions.last()) {
        (Some(a), Some(b)) if peak_positions.len() >= 2 => b - a,
        _ => 0.0,
    };
    BimodalityResult { delta_x, peak_positions, peak_heights }
}

/// State reflected through `x -> -x`: `rho_mn -> (-1)^(m+n) conj(rho_mn)`.
pub fn reflect_x(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let d = rho.dim();
    let m = faer::Mat::from_fn(d, d, |i, j| {
        let z = rho.get(i, j).conj();
        if (i + j) % 2 == 0 {
            z
        } else {
            -z
        }
    });
    DensityMatrix::new_unchecked(rho.space(), m)
}
