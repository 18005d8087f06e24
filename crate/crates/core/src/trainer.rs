//! Unsupervised training of a trial wavefunction against the Schrödinger
//! residual, with the eigenvalue `E` as a trainable scalar.
//!
//! The loss on the collocation grid is
//!
//! ```text
//! L(θ, E) = Σᵢ wᵢ (Hψ - Eψ)²ᵢ / ‖ψ‖²  +  μ (‖ψ‖² - 1)²  +  ν Σₖ ⟨ψ, φₖ⟩² / ‖ψ‖²
//! ```
//!
//! with trapezoid weights `wᵢ`, normalization weight `μ`, deflation weight
//! `ν` and frozen lower states `φₖ`. The first term vanishes exactly at
//! eigenpairs; the second only fixes the amplitude; the third pushes the
//! trial out of the span of the states already found.
//!
//! # Optimizer
//!
//! Adam on `(θ, E)` jointly: `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`, with a
//! learning rate that decays geometrically from `learning_rate` to
//! `learning_rate · final_lr_fraction` over `max_iters` iterations. The loss
//! is a full-grid sum in fixed point order, so a run is bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::ansatz::{self, CollocationGrid, TrialWavefunction};
use crate::error::{Error, Result};
use crate::network::{JetWorkspace, NetworkParams};
use crate::operators::PotentialSpec;

/// Below this ∫ψ² the trial is considered collapsed.
pub const COLLAPSE_NORM: f64 = 1e-14;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub spec: PotentialSpec,
    /// Collocation grid the loss is evaluated on.
    pub grid: CollocationGrid,
    /// Grid for the final Rayleigh-quotient check.
    pub report_grid: CollocationGrid,
    pub pretrain_energy: f64,
    pub seed: u64,
    pub hidden_sizes: Vec<usize>,
    pub max_iters: usize,
    /// Stop as soon as the loss drops below this.
    pub tol: f64,
    /// A run counts as converged when its final loss is at most
    /// `accept_tol · max(1, E²)`. The residual term bounds the distance
    /// from `E` to the nearest eigenvalue by its square root, so this caps
    /// that distance at `√accept_tol · max(1, |E|)`.
    pub accept_tol: f64,
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    pub norm_weight: f64,
    pub ortho_weight: f64,
    /// Iterations at the start of a run during which `E` is held at an
    /// explicitly given pretrain energy.
    pub energy_hold_iters: usize,
    /// Record a trace point every this many iterations (0 disables).
    pub trace_every: usize,
    #[serde(skip)]
    pub frozen_lower_states: Vec<TrialWavefunction>,
}

impl TrainingConfig {
    /// Defaults for `spec`; the pretrain energy is left at NaN, meaning
    /// "use the Rayleigh quotient of the initial trial".
    pub fn new(spec: PotentialSpec) -> Self {
        Self {
            spec,
            grid: ansatz::default_training_grid(&spec),
            report_grid: ansatz::default_report_grid(&spec),
            pretrain_energy: f64::NAN,
            seed: 7,
            hidden_sizes: vec![10],
            max_iters: 20_000,
            tol: 1e-9,
            accept_tol: 2e-2,
            learning_rate: 1e-2,
            final_lr_fraction: 1e-2,
            norm_weight: 10.0,
            ortho_weight: 10.0,
            energy_hold_iters: 5_000,
            trace_every: 100,
            frozen_lower_states: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTraining(msg));
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if !(self.accept_tol > 0.0 && self.accept_tol.is_finite()) {
            return bad(format!("accept_tol must be > 0, got {}", self.accept_tol));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad(format!(
                "final_lr_fraction must be in (0, 1], got {}",
                self.final_lr_fraction
            ));
        }
        if !(self.norm_weight >= 0.0 && self.norm_weight.is_finite()) {
            return bad(format!("norm_weight must be >= 0, got {}", self.norm_weight));
        }
        if !(self.ortho_weight >= 0.0 && self.ortho_weight.is_finite()) {
            return bad(format!("ortho_weight must be >= 0, got {}", self.ortho_weight));
        }
        if self.pretrain_energy.is_infinite() {
            return bad("pretrain_energy must be finite".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad(format!("hidden sizes must be positive, got {:?}", self.hidden_sizes));
        }
        Ok(())
    }

    /// Fresh network for this config's architecture and seed.
    pub fn init_network(&self) -> Result<NetworkParams> {
        NetworkParams::init(&self.hidden_sizes, self.seed)
    }

    /// Wraps `net` in the default envelope for this config's potential.
    pub fn trial(&self, net: NetworkParams) -> TrialWavefunction {
        TrialWavefunction::for_potential(net, &self.spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub loss: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub final_energy: f64,
    pub final_loss: f64,
    pub iterations_used: usize,
    pub loss_trace: Vec<TracePoint>,
    pub converged: bool,
    /// Rayleigh quotient of the final trial on the report grid.
    pub rayleigh_check: f64,
}

impl TrainingReport {
    pub fn energy_discrepancy(&self) -> f64 {
        (self.final_energy - self.rayleigh_check).abs()
    }

    /// Writes the trace as `iteration,loss,energy` rows.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "loss", "energy"])?;
        for p in &self.loss_trace {
            w.write_record([
                p.iteration.to_string(),
                crate::format::sig(p.loss),
                crate::format::sig(p.energy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loss value split into its three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub residual: f64,
    pub normalization: f64,
    pub orthogonality: f64,
    pub norm_squared: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.residual + self.normalization + self.orthogonality
    }
}

/// Everything the loss needs that does not change between iterations.
struct LossContext<'a> {
    spec: &'a PotentialSpec,
    grid: &'a CollocationGrid,
    xs: Vec<f64>,
    weights: Vec<f64>,
    potential: Vec<f64>,
    /// Frozen state values on the grid.
    frozen: Vec<Vec<f64>>,
    norm_weight: f64,
    ortho_weight: f64,
}

impl<'a> LossContext<'a> {
    fn new(cfg: &'a TrainingConfig) -> Self {
        let grid = &cfg.grid;
        let xs: Vec<f64> = grid.points().collect();
        Self {
            spec: &cfg.spec,
            grid,
            weights: (0..grid.n_points()).map(|i| grid.weight(i)).collect(),
            potential: xs.iter().map(|&x| cfg.spec.potential_value(x)).collect(),
            xs,
            frozen: cfg.frozen_lower_states.iter().map(|s| s.values(grid)).collect(),
            norm_weight: cfg.norm_weight,
            ortho_weight: cfg.ortho_weight,
        }
    }

    /// One jet cache per grid point.
    fn workspaces(&self, net: &NetworkParams) -> Vec<JetWorkspace> {
        vec![JetWorkspace::new(net); self.xs.len()]
    }

    /// Loss terms, and if `grad` is given, `∂L/∂θ` written into it and
    /// `∂L/∂E` returned.
    fn evaluate(
        &self,
        trial: &TrialWavefunction,
        energy: f64,
        ws: &mut [JetWorkspace],
        grad: Option<&mut [f64]>,
    ) -> Result<(LossTerms, f64)> {
        let n = self.xs.len();
        let k = self.spec.kinetic_coeff();
        let net = trial.net();
        let mut psi = vec![0.0; n];
        let mut resid = vec![0.0; n];
        let mut envelopes = grad.as_ref().map(|_| Vec::with_capacity(n));
        let mut norm = 0.0;
        let mut rr = 0.0;
        let mut rpsi = 0.0;
        for i in 0..n {
            let x = self.xs[i];
            let f = trial.envelope_factors(x);
            let jet = net.jet(x / trial.length_scale(), &mut ws[i]);
            let p = trial.combine(x, &f, jet);
            psi[i] = p.value;
            resid[i] = -k * p.d2 + (self.potential[i] - energy) * p.value;
            norm += self.weights[i] * p.value * p.value;
            rr += self.weights[i] * resid[i] * resid[i];
            rpsi += self.weights[i] * resid[i] * p.value;
            if let Some(j) = envelopes.as_mut() {
                j.push(f);
            }
        }
        if !(norm >= COLLAPSE_NORM) {
            return Err(Error::CollapsedTrial {
                norm_squared: norm,
                iteration: 0,
            });
        }
        let overlaps: Vec<f64> = self
            .frozen
            .iter()
            .map(|phi| ansatz::overlap_samples(&psi, phi, self.grid))
            .collect();
        let terms = LossTerms {
            residual: rr / norm,
            normalization: self.norm_weight * (norm - 1.0).powi(2),
            orthogonality: self.ortho_weight * overlaps.iter().map(|o| o * o).sum::<f64>() / norm,
            norm_squared: norm,
        };
        let Some(grad) = grad else {
            return Ok((terms, 0.0));
        };
        grad.iter_mut().for_each(|g| *g = 0.0);
        // ∂L/∂ψᵢ-type coefficients, then pulled back through ψ = g·N(x/ℓ)
        let res_scale = 2.0 / norm;
        let norm_coef =
            -(terms.residual + terms.orthogonality) / norm + 2.0 * self.norm_weight * (norm - 1.0);
        let ortho_scale = 2.0 * self.ortho_weight / norm;
        let envelopes = envelopes.expect("collected with grad");
        for i in 0..n {
            let f = envelopes[i];
            if f.g == 0.0 {
                continue;
            }
            let w = self.weights[i];
            // adjoints of ψ and ψ'' at point i
            let r_bar = res_scale * w * resid[i];
            let mut psi_bar = r_bar * (self.potential[i] - energy) + norm_coef * 2.0 * w * psi[i];
            for (phi, ov) in self.frozen.iter().zip(&overlaps) {
                psi_bar += ortho_scale * ov * w * phi[i];
            }
            let psi2_bar = -k * r_bar;
            // ψ = g·n0, ψ'' = g·(n2 + 2c1·n1 + c2·n0), n1 = N'/ℓ, n2 = N''/ℓ²
            let inv = f.inv;
            let cot = [
                f.g * (psi_bar + psi2_bar * f.c2),
                f.g * psi2_bar * 2.0 * f.c1 * inv,
                f.g * psi2_bar * inv * inv,
            ];
            net.jet_backward(&mut ws[i], cot, grad);
        }
        let grad_e = -2.0 * rpsi / norm;
        Ok((terms, grad_e))
    }
}

/// Loss of `trial` at eigenvalue guess `energy` under `cfg`.
pub fn residual_loss(trial: &TrialWavefunction, energy: f64, cfg: &TrainingConfig) -> Result<LossTerms> {
    let ctx = LossContext::new(cfg);
    let mut ws = ctx.workspaces(trial.net());
    ctx.evaluate(trial, energy, &mut ws, None).map(|(t, _)| t)
}

/// `(∂L/∂θ, ∂L/∂E)` of [`residual_loss`].
pub fn residual_loss_gradient(
    trial: &TrialWavefunction,
    energy: f64,
    cfg: &TrainingConfig,
) -> Result<(Vec<f64>, f64)> {
    let ctx = LossContext::new(cfg);
    let mut ws = ctx.workspaces(trial.net());
    let mut grad = vec![0.0; trial.net().n_params()];
    let (_, ge) = ctx.evaluate(trial, energy, &mut ws, Some(&mut grad))?;
    Ok((grad, ge))
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` by trapezoid quadrature.
pub fn rayleigh_quotient(trial: &TrialWavefunction, spec: &PotentialSpec, grid: &CollocationGrid) -> Result<f64> {
    let samples = trial.sample(grid);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, p) in samples.iter().enumerate() {
        let w = grid.weight(i);
        num += w * p.value * spec.apply_hamiltonian(p);
        den += w * p.value * p.value;
    }
    if !(den >= COLLAPSE_NORM) {
        return Err(Error::CollapsedTrial {
            norm_squared: den,
            iteration: 0,
        });
    }
    Ok(num / den)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Trains one level from `init`. Non-convergence is reported in the
/// returned report; only a collapsed trial is an error.
pub fn train_level(cfg: &TrainingConfig, init: NetworkParams) -> Result<(TrialWavefunction, TrainingReport)> {
    cfg.validate()?;
    if init.hidden_sizes() != cfg.hidden_sizes.as_slice() {
        return Err(Error::InvalidTraining(format!(
            "initial network has hidden sizes {:?}, config expects {:?}",
            init.hidden_sizes(),
            cfg.hidden_sizes
        )));
    }
    let mut trial = cfg.trial(init);
    let ctx = LossContext::new(cfg);
    let mut ws = ctx.workspaces(trial.net());
    let n_params = trial.net().n_params();

    let (mut energy, hold) = if cfg.pretrain_energy.is_nan() {
        (rayleigh_quotient(&trial, &cfg.spec, &cfg.grid)?, 0)
    } else {
        (cfg.pretrain_energy, cfg.energy_hold_iters)
    };

    // parameters followed by E
    let mut grad = vec![0.0; n_params + 1];
    let mut flat = vec![0.0; n_params + 1];
    let mut adam = Adam::new(n_params + 1);
    let decay = cfg.final_lr_fraction.powf(1.0 / cfg.max_iters as f64);
    let mut lr = cfg.learning_rate;
    let mut trace = Vec::new();
    let mut loss = f64::INFINITY;
    let mut iterations = 0;

    let with_iteration = |e: Error, it: usize| match e {
        Error::CollapsedTrial { norm_squared, .. } => Error::CollapsedTrial {
            norm_squared,
            iteration: it,
        },
        other => other,
    };

    for it in 0..cfg.max_iters {
        let (terms, grad_e) = ctx
            .evaluate(&trial, energy, &mut ws, Some(&mut grad[..n_params]))
            .map_err(|e| with_iteration(e, it))?;
        loss = terms.total();
        iterations = it;
        if cfg.trace_every > 0 && it % cfg.trace_every == 0 {
            trace.push(TracePoint {
                iteration: it,
                loss,
                energy,
            });
        }
        if loss < cfg.tol {
            break;
        }
        grad[n_params] = if it < hold { 0.0 } else { grad_e };
        flat[..n_params].copy_from_slice(trial.net().as_flat());
        flat[n_params] = energy;
        adam.step(&mut flat, &grad, lr);
        trial.net_mut().as_flat_mut().copy_from_slice(&flat[..n_params]);
        energy = flat[n_params];
        lr *= decay;
        iterations = it + 1;
    }
    if iterations == cfg.max_iters {
        let (terms, _) = ctx
            .evaluate(&trial, energy, &mut ws, None)
            .map_err(|e| with_iteration(e, iterations))?;
        loss = terms.total();
    }
    if cfg.trace_every > 0 && trace.last().map(|t| t.iteration) != Some(iterations) {
        trace.push(TracePoint {
            iteration: iterations,
            loss,
            energy,
        });
    }
    let rayleigh_check =
        rayleigh_quotient(&trial, &cfg.spec, &cfg.report_grid).map_err(|e| with_iteration(e, iterations))?;
    let report = TrainingReport {
        final_energy: energy,
        final_loss: loss,
        iterations_used: iterations,
        loss_trace: trace,
        converged: loss < cfg.tol || loss <= cfg.accept_tol * energy.abs().max(1.0).powi(2),
        rayleigh_check,
    };
    Ok((trial, report))
}

/// One trained level of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: usize,
    pub pretrain_energy: f64,
    pub report: TrainingReport,
    /// False if this level or any level below it failed to converge.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct NnSpectrum {
    pub levels: Vec<LevelResult>,
    pub states: Vec<TrialWavefunction>,
}

/// Trains levels `0..n_levels` in order, each deflated against all the
/// states below it. Level `n` is initialized from seed `template.seed + n`
/// and pretrain energy `estimates[n]` when given, otherwise the previous
/// level's energy plus 2 (level 0 uses the template's pretrain energy).
pub fn solve_spectrum(
    n_levels: usize,
    template: &TrainingConfig,
    estimates: Option<&[f64]>,
) -> Result<NnSpectrum> {
    if n_levels == 0 {
        return Err(Error::InvalidArgument("need at least one level".into()));
    }
    template.validate()?;
    let mut levels: Vec<LevelResult> = Vec::with_capacity(n_levels);
    let mut states: Vec<TrialWavefunction> = Vec::with_capacity(n_levels);
    let mut all_converged = true;
    for n in 0..n_levels {
        let mut cfg = template.clone();
        cfg.seed = template.seed.wrapping_add(n as u64);
        cfg.frozen_lower_states = states.clone();
        cfg.pretrain_energy = match (estimates.and_then(|e| e.get(n)), levels.last()) {
            (Some(&e), _) => e,
            (None, Some(prev)) => prev.report.final_energy + 2.0,
            (None, None) => template.pretrain_energy,
        };
        let (trial, report) = train_level(&cfg, cfg.init_network()?)?;
        all_converged &= report.converged;
        levels.push(LevelResult {
            level: n,
            pretrain_energy: cfg.pretrain_energy,
            converged: all_converged,
            report,
        });
        states.push(trial);
    }
    Ok(NnSpectrum { levels, states })
}
