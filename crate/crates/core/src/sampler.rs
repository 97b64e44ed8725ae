//! HMC and AD-HMC Markov kernels over particle ensembles.
//!
//! One HMC iteration moves every particle by a forward Hamiltonian motion
//! with a fresh momentum draw. One AD-HMC iteration performs the forward
//! motion and then a backward motion with another fresh momentum draw, which
//! makes the composite kernel self-adjoint even when the momentum
//! distribution is asymmetric.
//!
//! The Metropolis correction depends on what the reverse proposal of a move
//! can be. In AD-HMC each directional sub-step is paired with the
//! opposite-direction sub-step, which retraces the trajectory from the
//! endpoint momentum as it stands; the acceptance ratio is then the plain
//! energy difference. A forward-only chain has no backward sub-step, so the
//! reverse move must come from the forward kernel itself, which reaches back
//! only from the negated endpoint momentum; its ratio therefore evaluates
//! the kinetic energy at `-p_L`. For symmetric momentum distributions the
//! two rules coincide; for asymmetric ones the forward-only rule rejects
//! heavily, which is the practical reason to alternate directions.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::RngCore;

use crate::integrator::{FlowMap, IntegratorError, LeapfrogConfig, LeapfrogFlow, PhasePoint};
use crate::models::{DensityModel, GaussianMixtureDensity, ModelError};
use crate::rng::{uniform01, StreamCtx, StreamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerError {
    /// The auxiliary distribution cannot be sampled exactly.
    AuxNotSampleable,
    EmptyEnsemble,
    Model(ModelError),
    Integrator(IntegratorError),
}

impl fmt::Display for SamplerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerError::AuxNotSampleable => {
                f.write_str("auxiliary distribution has no exact sampler")
            }
            SamplerError::EmptyEnsemble => f.write_str("ensemble needs at least one particle"),
            SamplerError::Model(e) => write!(f, "model failure: {e}"),
            SamplerError::Integrator(e) => write!(f, "integrator failure: {e}"),
        }
    }
}

impl From<ModelError> for SamplerError {
    fn from(e: ModelError) -> Self {
        SamplerError::Model(e)
    }
}

impl From<IntegratorError> for SamplerError {
    fn from(e: IntegratorError) -> Self {
        SamplerError::Integrator(e)
    }
}

/// Particle ensemble: K positions in R^d, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    positions: Vec<f64>,
    k: usize,
    d: usize,
    pub iteration: u64,
}

impl Ensemble {
    pub fn from_rows(positions: Vec<f64>, k: usize, d: usize) -> Result<Self, SamplerError> {
        if k == 0 {
            return Err(SamplerError::EmptyEnsemble);
        }
        assert_eq!(positions.len(), k * d);
        Ok(Ensemble { positions, k, d, iteration: 0 })
    }

    /// Initial ensemble with i.i.d. `N(0, sd² I)` particles, drawn from the
    /// per-particle init streams.
    pub fn init_gaussian(k: usize, d: usize, sd: f64, ctx: &StreamCtx) -> Result<Self, SamplerError> {
        if k == 0 {
            return Err(SamplerError::EmptyEnsemble);
        }
        let mut positions = vec![0.0; k * d];
        for i in 0..k {
            let mut rng = ctx.stream(i as u64, 0, StreamKind::Init);
            for x in &mut positions[i * d..(i + 1) * d] {
                *x = sd * crate::rng::standard_normal(&mut rng);
            }
        }
        Ok(Ensemble { positions, k, d, iteration: 0 })
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn particle_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Positions as a list of rows, for metric and clustering consumers.
    pub fn rows(&self) -> Vec<&[f64]> {
        (0..self.k).map(|i| self.particle(i)).collect()
    }
}

/// Kernel scheme: plain forward-only HMC or alternating-direction HMC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    HmcForwardOnly,
    Adhmc,
}

/// Statistics of one directional sub-step aggregated over the ensemble.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubReport {
    pub proposals: usize,
    pub accepted: usize,
    pub divergences: usize,
    pub sum_abs_dh: f64,
}

impl SubReport {
    pub fn accepted_fraction(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Statistics of one kernel iteration. `backward` is present for AD-HMC.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub forward: SubReport,
    pub backward: Option<SubReport>,
}

impl StepReport {
    pub fn accepted_fraction(&self) -> f64 {
        let (mut acc, mut prop) = (self.forward.accepted, self.forward.proposals);
        if let Some(b) = &self.backward {
            acc += b.accepted;
            prop += b.proposals;
        }
        if prop == 0 {
            1.0
        } else {
            acc as f64 / prop as f64
        }
    }

    pub fn mean_abs_dh(&self) -> f64 {
        let (mut sum, mut prop) = (self.forward.sum_abs_dh, self.forward.proposals);
        if let Some(b) = &self.backward {
            sum += b.sum_abs_dh;
            prop += b.proposals;
        }
        if prop == 0 {
            0.0
        } else {
            sum / prop as f64
        }
    }

    pub fn divergences(&self) -> usize {
        self.forward.divergences + self.backward.map_or(0, |b| b.divergences)
    }
}

/// Metropolis decision for the proposal `(q0,p0) -> (qL,pL)`. Returns the
/// accept flag; non-finite energies always reject.
pub fn mh_accept(
    q0: &[f64],
    p0: &[f64],
    ql: &[f64],
    pl: &[f64],
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    rng: &mut dyn RngCore,
) -> bool {
    mh_decision(q0, p0, ql, pl, target, aux, ReverseMomentum::AsIs, rng).0
}

/// Which momentum the reverse proposal would need at the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReverseMomentum {
    /// Opposite-direction kernel retraces from `p_L` itself (AD-HMC pairing).
    AsIs,
    /// Same-direction kernel reaches back only from `-p_L` (forward-only HMC).
    Negated,
}

/// Accept flag plus `|ΔH|` for reporting. The uniform is always drawn so the
/// stream advances identically whether or not the ratio clips at one.
fn mh_decision(
    q0: &[f64],
    p0: &[f64],
    ql: &[f64],
    pl: &[f64],
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    reverse: ReverseMomentum,
    rng: &mut dyn RngCore,
) -> (bool, f64) {
    let h0 = target.potential(q0) + aux.potential(p0);
    let neg_pl: Vec<f64>;
    let pl = match reverse {
        ReverseMomentum::AsIs => pl,
        ReverseMomentum::Negated => {
            neg_pl = pl.iter().map(|v| -v).collect();
            &neg_pl
        }
    };
    let h1 = target.potential(ql) + aux.potential(pl);
    let dh = h1 - h0;
    let xi = uniform01(rng);
    if !dh.is_finite() {
        return (false, f64::INFINITY);
    }
    // exp(-max(dh, 0)) = min(1, exp(-dh)).
    (xi <= libm::exp(-dh.max(0.0)), dh.abs())
}

/// One directional sub-step applied to the whole ensemble in place.
fn substep(
    ens: &mut Ensemble,
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    flow: &dyn FlowMap,
    direction: i8,
    mh_enabled: bool,
    reverse: ReverseMomentum,
    ctx: &StreamCtx,
    kind: StreamKind,
) -> Result<SubReport, SamplerError> {
    let d = ens.dim();
    let mut report = SubReport::default();
    let mut p0 = vec![0.0; d];
    let iteration = ens.iteration;
    for i in 0..ens.len() {
        let mut rng = ctx.stream(i as u64, iteration, kind);
        aux.sample_into(&mut rng, &mut p0)?;
        let start = PhasePoint::new(ens.particle(i).to_vec(), p0.clone());
        report.proposals += 1;
        let end = match flow.propagate(&start, direction) {
            Ok(end) if end.is_finite() => end,
            Ok(_) | Err(IntegratorError::NonFiniteState { .. }) => {
                // Divergence: consume the MH uniform, keep the position.
                let _ = uniform01(&mut rng);
                report.divergences += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let (accept, abs_dh) = if mh_enabled {
            mh_decision(&start.q, &start.p, &end.q, &end.p, target, aux, reverse, &mut rng)
        } else {
            let h0 = target.potential(&start.q) + aux.potential(&start.p);
            let h1 = target.potential(&end.q) + aux.potential(&end.p);
            (true, (h1 - h0).abs())
        };
        if abs_dh.is_finite() {
            report.sum_abs_dh += abs_dh;
        }
        if accept {
            report.accepted += 1;
            ens.particle_mut(i).copy_from_slice(&end.q);
        }
    }
    Ok(report)
}

fn check_aux(aux: &dyn DensityModel) -> Result<(), SamplerError> {
    if aux.has_sampler() {
        Ok(())
    } else {
        Err(SamplerError::AuxNotSampleable)
    }
}

/// One forward-only HMC iteration: fresh momentum, motion of
/// length +T, Metropolis correction.
pub fn hmc_step(
    ens: &mut Ensemble,
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    flow: &dyn FlowMap,
    mh_enabled: bool,
    ctx: &StreamCtx,
) -> Result<StepReport, SamplerError> {
    check_aux(aux)?;
    let forward = substep(
        ens,
        target,
        aux,
        flow,
        1,
        mh_enabled,
        ReverseMomentum::Negated,
        ctx,
        StreamKind::Forward,
    )?;
    ens.iteration += 1;
    Ok(StepReport { forward, backward: None })
}

/// One AD-HMC iteration: forward motion, then a backward
/// motion with an independent momentum draw. Both sub-steps always execute;
/// a rejected forward move leaves the position for the backward move to act
/// on.
pub fn adhmc_step(
    ens: &mut Ensemble,
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    flow: &dyn FlowMap,
    mh_enabled: bool,
    ctx: &StreamCtx,
) -> Result<StepReport, SamplerError> {
    check_aux(aux)?;
    let forward = substep(
        ens,
        target,
        aux,
        flow,
        1,
        mh_enabled,
        ReverseMomentum::AsIs,
        ctx,
        StreamKind::Forward,
    )?;
    let backward = substep(
        ens,
        target,
        aux,
        flow,
        -1,
        mh_enabled,
        ReverseMomentum::AsIs,
        ctx,
        StreamKind::Backward,
    )?;
    ens.iteration += 1;
    Ok(StepReport { forward, backward: Some(backward) })
}

/// Full chain configuration for `run_chain`.
#[derive(Debug, Clone, Copy)]
pub struct ChainConfig {
    pub scheme: Scheme,
    pub leapfrog: LeapfrogConfig,
    pub mh_enabled: bool,
    pub iterations: u64,
    /// Re-cluster and swap the auxiliary every `n_a` iterations.
    pub adapt_every: Option<u64>,
}

/// Drive the configured kernel for `cfg.iterations` steps.
///
/// `adapt` is consulted at iterations k·n_a with the current ensemble; a
/// `None` result keeps the previous auxiliary. `observer` sees the ensemble,
/// the active auxiliary and the step report after every iteration.
pub fn run_chain(
    ens: &mut Ensemble,
    target: &dyn DensityModel,
    initial_aux: GaussianMixtureDensity,
    cfg: &ChainConfig,
    ctx: &StreamCtx,
    mut adapt: Option<&mut dyn FnMut(&Ensemble) -> Option<GaussianMixtureDensity>>,
    observer: &mut dyn FnMut(&Ensemble, &GaussianMixtureDensity, &StepReport),
) -> Result<(), SamplerError> {
    let mut aux = initial_aux;
    for _ in 0..cfg.iterations {
        let flow = LeapfrogFlow { target, aux: &aux, cfg: cfg.leapfrog };
        let report = match cfg.scheme {
            Scheme::HmcForwardOnly => hmc_step(ens, target, &aux, &flow, cfg.mh_enabled, ctx)?,
            Scheme::Adhmc => adhmc_step(ens, target, &aux, &flow, cfg.mh_enabled, ctx)?,
        };
        observer(ens, &aux, &report);
        if let (Some(n_a), Some(adapt)) = (cfg.adapt_every, adapt.as_deref_mut()) {
            if n_a > 0 && ens.iteration % n_a == 0 {
                if let Some(next) = adapt(ens) {
                    aux = next;
                }
            }
        }
    }
    Ok(())
}
