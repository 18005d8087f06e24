//! Reference eigenvalues from second-order finite differences.
//!
//! The operator is discretized on the interior points of a uniform grid with
//! `ψ(±L) = 0`, giving a symmetric tridiagonal matrix with diagonal
//! `2k/h² + V(xᵢ)` and off-diagonal `-k/h²`. The lowest eigenvalues are
//! located by bisection on the Sturm count (number of negative pivots of the
//! `LDLᵀ` factorization of `T - σI`), so no dense eigensolver is involved.

use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::ansatz::CollocationGrid;
use crate::error::{Error, Result};
use crate::operators::PotentialSpec;

/// Eigenvector amplitude at the boundary, relative to its maximum, above
/// which the domain is reported as too small.
pub const BOUNDARY_AMPLITUDE_WARN: f64 = 1e-6;

pub const DEFAULT_ORACLE_POINTS: usize = 4001;

const PIVOT_GUARD: f64 = 1e-300;

/// Symmetric tridiagonal matrix with a constant off-diagonal.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub diagonal: Vec<f64>,
    pub off_diagonal: f64,
}

impl Tridiagonal {
    /// Finite-difference Hamiltonian on the interior points of `grid`.
    pub fn hamiltonian(spec: &PotentialSpec, grid: &CollocationGrid) -> Self {
        let h = grid.spacing();
        let k = spec.kinetic_coeff() / (h * h);
        let n = grid.n_points();
        let diagonal = (1..n - 1).map(|i| 2.0 * k + spec.potential_value(grid.point(i))).collect();
        Self {
            diagonal,
            off_diagonal: -k,
        }
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Number of eigenvalues strictly below `sigma`.
    pub fn sturm_count(&self, sigma: f64) -> usize {
        let e2 = self.off_diagonal * self.off_diagonal;
        let mut count = 0;
        let mut q = 1.0;
        for (i, &d) in self.diagonal.iter().enumerate() {
            q = if i == 0 { d - sigma } else { d - sigma - e2 / q };
            if q == 0.0 {
                q = -PIVOT_GUARD;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin_lower(&self) -> f64 {
        let e = self.off_diagonal.abs();
        self.diagonal
            .iter()
            .map(|d| d - 2.0 * e)
            .fold(f64::INFINITY, f64::min)
    }

    fn gershgorin_upper(&self) -> f64 {
        let e = self.off_diagonal.abs();
        self.diagonal
            .iter()
            .map(|d| d + 2.0 * e)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The `m` smallest eigenvalues, ascending, by Sturm bisection.
    pub fn lowest_eigenvalues(&self, m: usize) -> Vec<f64> {
        let m = m.min(self.dim());
        let lo0 = self.gershgorin_lower() - 1.0;
        let hi0 = self.gershgorin_upper() + 1.0;
        let mut out: Vec<f64> = Vec::with_capacity(m);
        for k in 0..m {
            // eigenvalue k is the smallest σ with count(σ) > k
            let mut lo = out.last().copied().unwrap_or(lo0);
            let mut hi = hi0;
            for _ in 0..256 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if self.sturm_count(mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }

    /// Eigenvector for an eigenvalue estimate by inverse iteration.
    pub fn eigenvector(&self, eigenvalue: f64) -> Vec<f64> {
        let n = self.dim();
        let shift = eigenvalue - 1e-10 * eigenvalue.abs().max(1.0);
        let mut y = vec![1.0; n];
        for _ in 0..3 {
            y = self.solve_shifted(shift, &y);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 && norm.is_finite() {
                y.iter_mut().for_each(|v| *v /= norm);
            }
        }
        y
    }

    /// Thomas algorithm for `(T - σI) y = b`.
    fn solve_shifted(&self, sigma: f64, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let e = self.off_diagonal;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diagonal[0] - sigma;
        for i in 0..n {
            if i > 0 {
                pivot = self.diagonal[i] - sigma - e * c[i - 1];
            }
            if pivot.abs() < PIVOT_GUARD {
                pivot = PIVOT_GUARD;
            }
            c[i] = e / pivot;
            d[i] = if i == 0 { b[0] / pivot } else { (b[i] - e * d[i - 1]) / pivot };
        }
        let mut y = d;
        for i in (0..n - 1).rev() {
            y[i] -= c[i] * y[i + 1];
        }
        y
    }
}

/// Lowest eigenvalues of one operator on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSpectrum {
    pub spec: PotentialSpec,
    pub grid: CollocationGrid,
    /// Eigenvalues at spacing `h`.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues at spacing `h/2`, when refined.
    pub half_step_eigenvalues: Option<Vec<f64>>,
    /// `(4E_{h/2} - E_h)/3`, when refined.
    pub richardson_estimate: Option<Vec<f64>>,
    /// `max(|v₀|, |v_end|) / max|v|` of each eigenvector.
    pub boundary_amplitude: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FdSpectrum {
    /// Best available values: extrapolated if present, otherwise raw.
    pub fn best(&self) -> &[f64] {
        self.richardson_estimate.as_deref().unwrap_or(&self.eigenvalues)
    }
}

pub fn fd_eigenvalues(spec: &PotentialSpec, grid: &CollocationGrid, m: usize) -> Result<FdSpectrum> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one eigenvalue".into()));
    }
    if grid.n_points() < 10 * m {
        return Err(Error::InvalidGrid(format!(
            "{} points is too coarse for {m} eigenvalues (need at least {})",
            grid.n_points(),
            10 * m
        )));
    }
    let t = Tridiagonal::hamiltonian(spec, grid);
    let eigenvalues = t.lowest_eigenvalues(m);
    let mut warnings = Vec::new();
    let boundary_amplitude: Vec<f64> = eigenvalues
        .iter()
        .map(|&e| {
            let v = t.eigenvector(e);
            let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            v[0].abs().max(v[v.len() - 1].abs()) / peak
        })
        .collect();
    for (n, &b) in boundary_amplitude.iter().enumerate() {
        if b > BOUNDARY_AMPLITUDE_WARN {
            warnings.push(format!(
                "level {n}: boundary amplitude {b:.2e} exceeds {BOUNDARY_AMPLITUDE_WARN:e}; domain half width {} is too small",
                grid.half_width()
            ));
        }
    }
    if eigenvalues.windows(2).any(|w| w[1] <= w[0]) {
        warnings.push("eigenvalues are not strictly increasing; grid too coarse".into());
    }
    Ok(FdSpectrum {
        spec: *spec,
        grid: *grid,
        eigenvalues,
        half_step_eigenvalues: None,
        richardson_estimate: None,
        boundary_amplitude,
        warnings,
    })
}

/// Runs [`fd_eigenvalues`] at `h` and `h/2` and extrapolates away the `h²` term.
pub fn richardson_refine(spec: &PotentialSpec, grid: &CollocationGrid, m: usize) -> Result<FdSpectrum> {
    let mut coarse = fd_eigenvalues(spec, grid, m)?;
    let fine = fd_eigenvalues(spec, &grid.refined(), m)?;
    let extrapolated = coarse
        .eigenvalues
        .iter()
        .zip(&fine.eigenvalues)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect();
    coarse.richardson_estimate = Some(extrapolated);
    coarse.half_step_eigenvalues = Some(fine.eigenvalues);
    for w in fine.warnings {
        if !coarse.warnings.contains(&w) {
            coarse.warnings.push(w);
        }
    }
    Ok(coarse)
}

/// Ground state of `-ψ'' + x⁴ψ`.
pub fn pure_quartic_ground_state() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let spec = PotentialSpec::new(1.0, 0.0, 1.0).expect("valid");
        let grid = CollocationGrid::new(6.0, DEFAULT_ORACLE_POINTS).expect("valid");
        richardson_refine(&spec, &grid, 1).expect("valid").best()[0]
    })
}

/// Pure-quartic scaling estimate `c·λ^{1/3}` of the table-convention ground
/// state, for `λ ≥ 100`.
pub fn asymptotic_check(lambda: f64) -> Result<f64> {
    if !(lambda >= 100.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "the cube-root scaling band needs lambda >= 100, got {lambda}"
        )));
    }
    Ok(pure_quartic_ground_state() * lambda.cbrt())
}

/// Semiclassical estimate of level `n`:
/// `∫ √((E - V)/k) dx = π(n + ½)` over the classically allowed region.
pub fn wkb_energy(spec: &PotentialSpec, n: usize) -> f64 {
    let target = std::f64::consts::PI * (n as f64 + 0.5);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while phase_integral(spec, hi) < target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if phase_integral(spec, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Positive root of `V(x) = E`.
pub fn turning_point(spec: &PotentialSpec, energy: f64) -> f64 {
    let (a, l) = (spec.quad_coeff(), spec.lambda());
    let x2 = if l > 0.0 {
        2.0 * energy / (a + (a * a + 4.0 * l * energy).sqrt())
    } else {
        energy / a
    };
    x2.sqrt()
}

fn phase_integral(spec: &PotentialSpec, energy: f64) -> f64 {
    // x = x_t·sin θ removes the square-root endpoint singularity
    let xt = turning_point(spec, energy);
    let k = spec.kinetic_coeff();
    let steps = 400;
    let dtheta = std::f64::consts::FRAC_PI_2 / steps as f64;
    let sum: f64 = (0..steps)
        .map(|i| {
            let th = (i as f64 + 0.5) * dtheta;
            let x = xt * th.sin();
            ((energy - spec.potential_value(x)).max(0.0) / k).sqrt() * xt * th.cos()
        })
        .sum();
    2.0 * sum * dtheta
}

/// Smallest `L` beyond the turning point with `∫ √((V - E)/k) dx ≥ decay`.
fn decay_half_width(spec: &PotentialSpec, energy: f64, decay: f64) -> f64 {
    let xt = turning_point(spec, energy);
    let k = spec.kinetic_coeff();
    let dx = xt.max(1e-3) / 200.0;
    let mut x = xt;
    let mut acc = 0.0;
    while acc < decay {
        let mid = x + 0.5 * dx;
        acc += ((spec.potential_value(mid) - energy).max(0.0) / k).sqrt() * dx;
        x += dx;
    }
    x
}

/// Default domain for the lowest `m` levels: `L = 8` below `λ = 100`,
/// `L = max(3, 1.5·(E/λ)^{1/4})` above, widened if level `m - 1` would not
/// have decayed by `e^{-25}` at the boundary.
pub fn default_oracle_half_width(spec: &PotentialSpec, m: usize) -> f64 {
    let lambda = spec.lambda();
    let base = if lambda < 100.0 {
        8.0
    } else {
        let e_est = asymptotic_check(lambda).unwrap_or_else(|_| wkb_energy(spec, 0));
        (1.5 * (e_est / lambda).powf(0.25)).max(3.0)
    };
    let e_top = wkb_energy(spec, m.saturating_sub(1));
    base.max(decay_half_width(spec, e_top, 25.0))
}

pub fn default_oracle_grid(spec: &PotentialSpec, m: usize) -> CollocationGrid {
    let n = DEFAULT_ORACLE_POINTS.max(10 * m + 1);
    CollocationGrid::new(default_oracle_half_width(spec, m), n).expect("valid defaults")
}

/// Extrapolated lowest `m` levels on the default grid.
pub fn reference_levels(spec: &PotentialSpec, m: usize) -> Result<FdSpectrum> {
    richardson_refine(spec, &default_oracle_grid(spec, m), m)
}

/// One row of the reference-table CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub lambda: f64,
    pub level: usize,
    pub eigenvalue_raw: f64,
    pub eigenvalue_refined: f64,
    pub grid_n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
}

impl FdSpectrum {
    pub fn rows(&self) -> Vec<ReferenceRow> {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(level, &raw)| ReferenceRow {
                lambda: self.spec.lambda(),
                level,
                eigenvalue_raw: raw,
                eigenvalue_refined: self.best()[level],
                grid_n: self.grid.n_points(),
                half_width: self.grid.half_width(),
            })
            .collect()
    }
}

/// Writes `lambda,level,eigenvalue_raw,eigenvalue_refined,grid_n,L` rows.
pub fn write_reference_csv<W: Write>(rows: &[ReferenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "level", "eigenvalue_raw", "eigenvalue_refined", "grid_n", "L"])?;
    for r in rows {
        w.write_record([
            crate::format::sig(r.lambda),
            r.level.to_string(),
            crate::format::sig(r.eigenvalue_raw),
            crate::format::sig(r.eigenvalue_refined),
            r.grid_n.to_string(),
            crate::format::sig(r.half_width),
        ])?;
    }
    w.flush()?;
    Ok(())
}
