//! Trial wavefunctions `ψ(x) = N(x/ℓ)·e^{-αx²}` and trapezoid quadrature on a
//! uniform symmetric grid.
//!
//! The Gaussian envelope makes `ψ(±∞) = 0` hold for every network, so no
//! boundary penalty is needed. `ℓ` rescales the network input so that the
//! region where ψ lives maps onto `O(1)` network inputs regardless of how
//! narrow the state is.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{JetWorkspace, NetworkParams};
use crate::operators::{DifferentiablePoint, PotentialSpec};

/// Uniform grid on `[-L, L]` including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollocationGrid {
    half_width: f64,
    n_points: usize,
}

impl CollocationGrid {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half width must be finite and > 0, got {half_width}"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {n_points}")));
        }
        Ok(Self {
            half_width,
            n_points,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_points - 1) as f64
    }

    /// `x_i = -L + i·h`, with the centre and the right end placed exactly.
    pub fn point(&self, i: usize) -> f64 {
        let last = self.n_points - 1;
        // mirror so that x_i = -x_{last-i} bit for bit
        if 2 * i > last {
            -self.point(last - i)
        } else if 2 * i == last {
            0.0
        } else {
            -self.half_width + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.point(i))
    }

    /// Trapezoid weight of point `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i == self.n_points - 1 {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoid rule applied to samples `f(x_i)`.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.n_points);
        samples.iter().enumerate().map(|(i, f)| self.weight(i) * f).sum()
    }

    /// Same grid spacing, half width `L + extra`.
    pub fn extended(&self, extra: f64) -> Result<Self> {
        let h = self.spacing();
        let steps = (extra / h).round() as usize;
        Self::new(self.half_width + steps as f64 * h, self.n_points + 2 * steps)
    }

    /// Same domain, spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            n_points: 2 * self.n_points - 1,
        }
    }
}

/// `N(x/ℓ)·e^{-αx²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialWavefunction {
    net: NetworkParams,
    envelope_alpha: f64,
    length_scale: f64,
}

impl TrialWavefunction {
    pub fn new(net: NetworkParams, envelope_alpha: f64, length_scale: f64) -> Result<Self> {
        if !(envelope_alpha.is_finite() && envelope_alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "envelope decay rate must be finite and > 0, got {envelope_alpha}"
            )));
        }
        if !(length_scale.is_finite() && length_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "length scale must be finite and > 0, got {length_scale}"
            )));
        }
        Ok(Self {
            net,
            envelope_alpha,
            length_scale,
        })
    }

    /// Uses [`default_envelope_alpha`] and the matching length scale `1/√(2α)`.
    pub fn for_potential(net: NetworkParams, spec: &PotentialSpec) -> Self {
        let alpha = default_envelope_alpha(spec);
        Self {
            net,
            envelope_alpha: alpha,
            length_scale: (2.0 * alpha).sqrt().recip(),
        }
    }

    pub fn net(&self) -> &NetworkParams {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut NetworkParams {
        &mut self.net
    }

    pub fn envelope_alpha(&self) -> f64 {
        self.envelope_alpha
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn psi_eval(&self, x: f64) -> DifferentiablePoint {
        let mut ws = JetWorkspace::new(&self.net);
        self.eval_with(x, &mut ws)
    }

    pub(crate) fn eval_with(&self, x: f64, ws: &mut JetWorkspace) -> DifferentiablePoint {
        let factors = self.envelope_factors(x);
        let jet = self.net.jet(x / self.length_scale, ws);
        self.combine(x, &factors, jet)
    }

    /// `e^{-αx²}` and the chain-rule input scale for the network derivatives.
    #[inline]
    pub(crate) fn envelope_factors(&self, x: f64) -> EnvelopeFactors {
        let a = self.envelope_alpha;
        let inv = self.length_scale.recip();
        EnvelopeFactors {
            g: (-a * x * x).exp(),
            // ψ'  = g·(n1 + c1·n0)
            // ψ'' = g·(n2 + 2c1·n1 + c2·n0)
            c1: -2.0 * a * x,
            c2: 4.0 * a * a * x * x - 2.0 * a,
            inv,
        }
    }

    /// Turns a network jet in scaled input `u = x/ℓ` into ψ, ψ', ψ''.
    #[inline]
    pub(crate) fn combine(&self, x: f64, f: &EnvelopeFactors, jet: [f64; 3]) -> DifferentiablePoint {
        let n0 = jet[0];
        let n1 = jet[1] * f.inv;
        let n2 = jet[2] * f.inv * f.inv;
        if f.g == 0.0 {
            return DifferentiablePoint::new(x, 0.0, 0.0, 0.0);
        }
        DifferentiablePoint::new(
            x,
            f.g * n0,
            f.g * (n1 + f.c1 * n0),
            f.g * (n2 + 2.0 * f.c1 * n1 + f.c2 * n0),
        )
    }

    /// ψ at every grid point.
    pub fn sample(&self, grid: &CollocationGrid) -> Vec<DifferentiablePoint> {
        let mut ws = JetWorkspace::new(&self.net);
        grid.points().map(|x| self.eval_with(x, &mut ws)).collect()
    }

    pub fn values(&self, grid: &CollocationGrid) -> Vec<f64> {
        let mut ws = JetWorkspace::new(&self.net);
        grid.points().map(|x| self.eval_with(x, &mut ws).value).collect()
    }

    /// Trapezoid `∫ψ²` over the grid.
    pub fn norm_squared(&self, grid: &CollocationGrid) -> f64 {
        let v = self.values(grid);
        grid.integrate(&v.iter().map(|p| p * p).collect::<Vec<_>>())
    }

    /// Trapezoid `∫ψ_a ψ_b` over the grid.
    pub fn overlap(&self, other: &TrialWavefunction, grid: &CollocationGrid) -> f64 {
        overlap_samples(&self.values(grid), &other.values(grid), grid)
    }

    /// Writes `x,psi` rows over the grid.
    pub fn write_csv<W: Write>(&self, grid: &CollocationGrid, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "psi"])?;
        for (x, v) in grid.points().zip(self.values(grid)) {
            w.write_record([format!("{x:.12e}"), format!("{v:.12e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EnvelopeFactors {
    pub g: f64,
    pub c1: f64,
    pub c2: f64,
    pub inv: f64,
}

pub(crate) fn overlap_samples(a: &[f64], b: &[f64], grid: &CollocationGrid) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| grid.weight(i) * x * y)
        .sum()
}

/// Characteristic inverse width of the ground state: `√(a/k)` from the
/// harmonic part, `(λ/k)^{1/3}` from the quartic part.
fn width_scale(spec: &PotentialSpec) -> f64 {
    let k = spec.kinetic_coeff();
    let s = (spec.quad_coeff() / k).sqrt().max((spec.lambda() / k).cbrt());
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// `α = ½·max(√(a/k), (λ/k)^{1/3})`; for the table convention this is
/// `½·max(1, λ^{1/3})`.
pub fn default_envelope_alpha(spec: &PotentialSpec) -> f64 {
    0.5 * width_scale(spec)
}

/// Six envelope length scales, capped at 8.
pub fn default_half_width(spec: &PotentialSpec) -> f64 {
    (6.0 / width_scale(spec).sqrt()).min(8.0)
}

pub const TRAINING_GRID_POINTS: usize = 401;
pub const REPORT_GRID_POINTS: usize = 4001;

pub fn default_training_grid(spec: &PotentialSpec) -> CollocationGrid {
    CollocationGrid::new(default_half_width(spec), TRAINING_GRID_POINTS).expect("valid defaults")
}

pub fn default_report_grid(spec: &PotentialSpec) -> CollocationGrid {
    CollocationGrid::new(default_half_width(spec), REPORT_GRID_POINTS).expect("valid defaults")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// N ≡ 1: one hidden unit with zero input weight, output weight 0, bias 1.
    fn constant_net(c: f64) -> NetworkParams {
        NetworkParams::from_flat(&[1], vec![0.0, 0.0, 0.0, c]).unwrap()
    }

    fn gaussian_trial() -> TrialWavefunction {
        TrialWavefunction::new(constant_net(1.0), 0.5, 1.0).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = CollocationGrid::new(2.0, 5).unwrap();
        let pts: Vec<f64> = g.points().collect();
        assert_eq!(pts, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let g = CollocationGrid::new(6.0, 401).unwrap();
        for i in 0..401 {
            assert_eq!(g.point(i), -g.point(400 - i));
        }
        assert!(g.points().zip(g.points().skip(1)).all(|(a, b)| b > a));
        assert!(CollocationGrid::new(1.0, 2).is_err());
        assert!(CollocationGrid::new(0.0, 10).is_err());
        let g = CollocationGrid::new(8.0, 4001).unwrap();
        let e = g.extended(1.0).unwrap();
        assert_eq!(e.n_points(), 4501);
        assert!((e.spacing() - g.spacing()).abs() < 1e-15);
        assert!((e.half_width() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_point_values() {
        let t = gaussian_trial();
        let p = t.psi_eval(0.0);
        assert_eq!(p.value, 1.0);
        assert_eq!(p.d1, 0.0);
        assert!((p.d2 + 1.0).abs() < 1e-15);
        let p = t.psi_eval(1.3);
        let g = (-0.5f64 * 1.69).exp();
        assert!((p.d1 + 1.3 * g).abs() < 1e-15);
        assert!((p.d2 - (1.69 - 1.0) * g).abs() < 1e-15);
    }

    #[test]
    fn far_tail_underflows_cleanly() {
        let net = NetworkParams::init(&[10], 1).unwrap();
        let t = TrialWavefunction::new(net, 2.0, 1.0).unwrap();
        for &x in &[16.0, -40.0, 1e3] {
            let p = t.psi_eval(x);
            assert!(p.is_finite(), "{p:?}");
            assert!(p.value.abs() < 1e-200);
        }
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let mut net = NetworkParams::init(&[10], 17).unwrap();
        net.output_params_mut()[10] = 0.3;
        for &scale in &[1.0, 0.4] {
            let t = TrialWavefunction::new(net.clone(), 0.7, scale).unwrap();
            let x = 0.7;
            let h = 1e-3;
            let (p, m, c) = (t.psi_eval(x + h), t.psi_eval(x - h), t.psi_eval(x));
            let d2 = (p.value - 2.0 * c.value + m.value) / (h * h);
            let d1 = (p.value - m.value) / (2.0 * h);
            assert!((c.d2 - d2).abs() <= 1e-4 * c.d2.abs().max(1e-2), "{} vs {d2}", c.d2);
            assert!((c.d1 - d1).abs() <= 1e-5 * c.d1.abs().max(1e-2), "{} vs {d1}", c.d1);
        }
    }

    #[test]
    fn gaussian_norm_is_sqrt_pi() {
        let g = CollocationGrid::new(10.0, 2001).unwrap();
        let n = gaussian_trial().norm_squared(&g);
        assert!((n - std::f64::consts::PI.sqrt()).abs() < 1e-8, "{n}");
    }

    #[test]
    fn zero_and_scaled_norms() {
        let g = CollocationGrid::new(6.0, 401).unwrap();
        let mut net = NetworkParams::init(&[10], 2).unwrap();
        for p in net.output_params_mut() {
            *p = 0.0;
        }
        let t = TrialWavefunction::new(net, 0.5, 1.0).unwrap();
        assert_eq!(t.norm_squared(&g), 0.0);

        let mut net = NetworkParams::init(&[10], 2).unwrap();
        net.output_params_mut()[10] = 0.5;
        let a = TrialWavefunction::new(net.clone(), 0.5, 1.0).unwrap();
        net.scale_output(2.0);
        let b = TrialWavefunction::new(net, 0.5, 1.0).unwrap();
        let (na, nb) = (a.norm_squared(&g), b.norm_squared(&g));
        assert!((nb - 4.0 * na).abs() < 1e-12 * nb);
    }

    #[test]
    fn overlaps() {
        let g = CollocationGrid::new(10.0, 2001).unwrap();
        let a = gaussian_trial();
        assert_eq!(a.overlap(&a, &g), a.norm_squared(&g));
        // x·e^{-x²/2} from a symmetric-grid odd network: N(x) = 2x via a
        // linear output on one near-linear sigmoid is awkward, so sample
        // the odd partner directly.
        let odd: Vec<f64> = g.points().map(|x| x * (-0.5 * x * x).exp()).collect();
        let ov = overlap_samples(&a.values(&g), &odd, &g);
        assert!(ov.abs() < 1e-12, "{ov}");

        let net = NetworkParams::init(&[10], 4).unwrap();
        let b = TrialWavefunction::new(net, 0.5, 1.0).unwrap();
        assert_eq!(a.overlap(&b, &g), b.overlap(&a, &g));
    }

    #[test]
    fn hermite_functions_are_orthogonal() {
        let g = CollocationGrid::new(10.0, 2001).unwrap();
        let h0: Vec<f64> = g.points().map(|x| (-0.5 * x * x).exp()).collect();
        let h2: Vec<f64> = g.points().map(|x| (2.0 * x * x - 1.0) * (-0.5 * x * x).exp()).collect();
        assert!(overlap_samples(&h0, &h2, &g).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_is_second_order() {
        // fixed smooth trial, envelope wide enough that the tails are resolved
        let mut net = NetworkParams::init(&[10], 8).unwrap();
        net.output_params_mut()[10] = 0.2;
        let t = TrialWavefunction::new(net, 0.5, 1.0).unwrap();
        let coarse = CollocationGrid::new(3.0, 41).unwrap();
        let exact = t.norm_squared(&CollocationGrid::new(3.0, 40 * 256 + 1).unwrap());
        let e1 = (t.norm_squared(&coarse) - exact).abs();
        let e2 = (t.norm_squared(&coarse.refined()) - exact).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn defaults_follow_lambda() {
        let s = PotentialSpec::anharmonic_table(0.1).unwrap();
        assert_eq!(default_envelope_alpha(&s), 0.5);
        assert_eq!(default_half_width(&s), 6.0);
        assert_eq!(default_envelope_alpha(&PotentialSpec::harmonic_half()), 0.5);
        let s = PotentialSpec::anharmonic_table(2e6).unwrap();
        assert!((default_envelope_alpha(&s) - 0.5 * 2e6f64.cbrt()).abs() < 1e-12);
        let l = default_half_width(&s);
        assert!(s.potential_value(l) > 10.0 * 133.6);
    }

    #[test]
    fn csv_dump() {
        let g = CollocationGrid::new(1.0, 3).unwrap();
        let mut buf = Vec::new();
        gaussian_trial().write_csv(&g, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x,psi");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0.000000000000e0,1.000000000000e0"));
    }

    proptest! {
        #[test]
        fn envelope_bound(seed in 0u64..1000, alpha in 0.1f64..3.0) {
            let t = TrialWavefunction::new(NetworkParams::init(&[6], seed).unwrap(), alpha, 1.0).unwrap();
            let g = CollocationGrid::new(5.0, 101).unwrap();
            let nmax = g.points().map(|x| t.net().forward(x).abs()).fold(0.0, f64::max);
            for x in g.points() {
                let psi = t.psi_eval(x).value.abs();
                prop_assert!(psi <= (-alpha * x * x).exp() * nmax * (1.0 + 1e-12));
            }
        }

        #[test]
        fn cauchy_schwarz(s1 in 0u64..500, s2 in 0u64..500) {
            let g = CollocationGrid::new(6.0, 201).unwrap();
            let mut na = NetworkParams::init(&[5], s1).unwrap();
            na.output_params_mut()[5] = 0.3;
            let a = TrialWavefunction::new(na, 0.5, 1.0).unwrap();
            let b = TrialWavefunction::new(NetworkParams::init(&[5], s2).unwrap(), 0.5, 1.0).unwrap();
            let ov = a.overlap(&b, &g);
            prop_assert!(ov * ov <= a.norm_squared(&g) * b.norm_squared(&g) + 1e-10);
        }
    }
}
