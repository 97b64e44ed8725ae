//! Hamiltonian flow maps: the Störmer-Verlet leapfrog scheme in either time
//! direction, the exact flow for quadratic Hamiltonians, and flow Jacobians
//! via the variational equations.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{block_flow_matrix, mat_cos, nonsym_sqrt_pair, LinalgError, Mat, SymMatrix};
use crate::models::{DensityModel, GaussianDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorError {
    /// Position, momentum or energy became non-finite at the given step.
    NonFiniteState { step: usize },
    DimensionMismatch,
    Linalg(LinalgError),
}

impl fmt::Display for IntegratorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegratorError::NonFiniteState { step } => {
                write!(f, "trajectory became non-finite at step {step}")
            }
            IntegratorError::DimensionMismatch => f.write_str("phase-point dimensions disagree"),
            IntegratorError::Linalg(e) => write!(f, "linear algebra failure: {e}"),
        }
    }
}

impl From<LinalgError> for IntegratorError {
    fn from(e: LinalgError) -> Self {
        IntegratorError::Linalg(e)
    }
}

/// Position-momentum pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(q.len(), p.len());
        PhasePoint { q, p }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

/// Leapfrog discretization: `L` steps of size `ε`, direction ±1.
/// The motion length is `T = L·ε`; direction −1 runs the same scheme with
/// `ε` replaced by `−ε`.
#[derive(Debug, Clone, Copy)]
pub struct LeapfrogConfig {
    pub step: f64,
    pub steps: usize,
    pub direction: i8,
}

impl LeapfrogConfig {
    pub fn new(step: f64, steps: usize) -> Self {
        assert!(step > 0.0);
        LeapfrogConfig { step, steps, direction: 1 }
    }

    pub fn reversed(self) -> Self {
        LeapfrogConfig { direction: -self.direction, ..self }
    }

    pub fn motion_length(&self) -> f64 {
        self.step * self.steps as f64
    }
}

/// A discrete integrator path with energies recorded at every node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<PhasePoint>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    pub fn start(&self) -> &PhasePoint {
        &self.points[0]
    }

    pub fn end(&self) -> &PhasePoint {
        self.points.last().expect("trajectory has at least the start point")
    }

    pub fn energy_drift(&self) -> f64 {
        let h0 = self.energies[0];
        self.energies.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }
}

pub fn hamiltonian(target: &dyn DensityModel, aux: &dyn DensityModel, point: &PhasePoint) -> f64 {
    target.potential(&point.q) + aux.potential(&point.p)
}

fn leapfrog_raw(
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    start: &PhasePoint,
    cfg: &LeapfrogConfig,
    mut record: Option<&mut Trajectory>,
) -> Result<PhasePoint, IntegratorError> {
    let d = start.dim();
    if target.dim() != d || aux.dim() != d {
        return Err(IntegratorError::DimensionMismatch);
    }
    if !start.is_finite() {
        return Err(IntegratorError::NonFiniteState { step: 0 });
    }
    let eps = cfg.step * cfg.direction as f64;
    let mut q = start.q.clone();
    let mut p = start.p.clone();
    let mut grad = vec![0.0; d];

    if let Some(traj) = record.as_deref_mut() {
        traj.points.push(start.clone());
        traj.energies.push(hamiltonian(target, aux, start));
    }

    target.grad_potential(&q, &mut grad);
    for step in 0..cfg.steps {
        // Half momentum kick, full position drift, half momentum kick.
        for i in 0..d {
            p[i] -= 0.5 * eps * grad[i];
        }
        aux.grad_potential(&p, &mut grad);
        for i in 0..d {
            q[i] += eps * grad[i];
        }
        target.grad_potential(&q, &mut grad);
        for i in 0..d {
            p[i] -= 0.5 * eps * grad[i];
        }
        if q.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(IntegratorError::NonFiniteState { step });
        }
        if let Some(traj) = record.as_deref_mut() {
            let point = PhasePoint { q: q.clone(), p: p.clone() };
            let h = hamiltonian(target, aux, &point);
            traj.points.push(point);
            traj.energies.push(h);
        }
    }
    Ok(PhasePoint { q, p })
}

/// Run the leapfrog scheme and record the full path with energies.
pub fn leapfrog(
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    start: &PhasePoint,
    cfg: &LeapfrogConfig,
) -> Result<Trajectory, IntegratorError> {
    let mut traj = Trajectory {
        points: Vec::with_capacity(cfg.steps + 1),
        energies: Vec::with_capacity(cfg.steps + 1),
    };
    leapfrog_raw(target, aux, start, cfg, Some(&mut traj))?;
    Ok(traj)
}

/// Leapfrog endpoint only; the hot path used by the samplers.
pub fn leapfrog_endpoint(
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    start: &PhasePoint,
    cfg: &LeapfrogConfig,
) -> Result<PhasePoint, IntegratorError> {
    leapfrog_raw(target, aux, start, cfg, None)
}

/// Exact Hamiltonian flow for the quadratic case (both densities Gaussian),
/// through the closed-form fundamental solution of the linearized system.
pub fn exact_quadratic_flow(
    target: &GaussianDensity,
    aux: &GaussianDensity,
    t: f64,
    start: &PhasePoint,
) -> Result<PhasePoint, IntegratorError> {
    let flow = ExactGaussianFlow::new(target, aux, t)?;
    flow.propagate(start, 1)
}

/// A time-T phase-space map that can be run in either direction.
pub trait FlowMap {
    fn propagate(&self, start: &PhasePoint, direction: i8) -> Result<PhasePoint, IntegratorError>;
}

/// Leapfrog-backed flow map.
pub struct LeapfrogFlow<'a> {
    pub target: &'a dyn DensityModel,
    pub aux: &'a dyn DensityModel,
    pub cfg: LeapfrogConfig,
}

impl FlowMap for LeapfrogFlow<'_> {
    fn propagate(&self, start: &PhasePoint, direction: i8) -> Result<PhasePoint, IntegratorError> {
        let mut cfg = self.cfg;
        cfg.direction = self.cfg.direction * direction;
        leapfrog_endpoint(self.target, self.aux, start, &cfg)
    }
}

/// Exact flow map for Gaussian target and auxiliary, with the forward and
/// backward fundamental matrices precomputed.
pub struct ExactGaussianFlow {
    forward: Mat,
    backward: Mat,
    mean_q: Vec<f64>,
    mean_p: Vec<f64>,
}

impl ExactGaussianFlow {
    pub fn new(target: &GaussianDensity, aux: &GaussianDensity, t: f64) -> Result<Self, IntegratorError> {
        if target.dim() != aux.dim() {
            return Err(IntegratorError::DimensionMismatch);
        }
        // U'' and V'' are the precision matrices; constant for Gaussians.
        let ubar = SymMatrix::new(target.precision().clone())?;
        let vbar = SymMatrix::new(aux.precision().clone())?;
        Ok(ExactGaussianFlow {
            forward: block_flow_matrix(t, &vbar, &ubar)?,
            backward: block_flow_matrix(-t, &vbar, &ubar)?,
            mean_q: target.mean().to_vec(),
            mean_p: aux.mean().to_vec(),
        })
    }
}

impl FlowMap for ExactGaussianFlow {
    fn propagate(&self, start: &PhasePoint, direction: i8) -> Result<PhasePoint, IntegratorError> {
        let d = self.mean_q.len();
        if start.dim() != d {
            return Err(IntegratorError::DimensionMismatch);
        }
        let matrix = if direction >= 0 { &self.forward } else { &self.backward };
        let mut shifted = vec![0.0; 2 * d];
        for i in 0..d {
            shifted[i] = start.q[i] - self.mean_q[i];
            shifted[d + i] = start.p[i] - self.mean_p[i];
        }
        let moved = matrix.matvec(&shifted);
        let mut q = vec![0.0; d];
        let mut p = vec![0.0; d];
        for i in 0..d {
            q[i] = moved[i] + self.mean_q[i];
            p[i] = moved[d + i] + self.mean_p[i];
        }
        Ok(PhasePoint { q, p })
    }
}

/// How `flow_jacobian` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Chain the per-step shear Jacobians of the leapfrog scheme, with the
    /// Hessians evaluated along the path.
    Variational,
    /// Central finite differences of the full flow map.
    FiniteDifference,
}

/// `2d×2d` Jacobian of the leapfrog flow map with respect to the start point.
pub fn flow_jacobian(
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    start: &PhasePoint,
    cfg: &LeapfrogConfig,
    mode: JacobianMode,
) -> Result<Mat, IntegratorError> {
    match mode {
        JacobianMode::Variational => variational_jacobian(target, aux, start, cfg),
        JacobianMode::FiniteDifference => finite_difference_jacobian(target, aux, start, cfg),
    }
}

fn variational_jacobian(
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    start: &PhasePoint,
    cfg: &LeapfrogConfig,
) -> Result<Mat, IntegratorError> {
    let d = start.dim();
    let eps = cfg.step * cfg.direction as f64;
    let mut q = start.q.clone();
    let mut p = start.p.clone();
    let mut grad = vec![0.0; d];
    let mut jac = Mat::identity(2 * d);

    target.grad_potential(&q, &mut grad);
    let mut u_hess = target.hessian_potential(&q);
    for step in 0..cfg.steps {
        // Kick: dp -= (eps/2) U''(q) dq.
        apply_kick(&mut jac, &u_hess, -0.5 * eps, d);
        for i in 0..d {
            p[i] -= 0.5 * eps * grad[i];
        }
        // Drift: dq += eps V''(p_half) dp.
        let v_hess = aux.hessian_potential(&p);
        apply_drift(&mut jac, &v_hess, eps, d);
        aux.grad_potential(&p, &mut grad);
        for i in 0..d {
            q[i] += eps * grad[i];
        }
        // Second kick at the new position.
        u_hess = target.hessian_potential(&q);
        apply_kick(&mut jac, &u_hess, -0.5 * eps, d);
        target.grad_potential(&q, &mut grad);
        for i in 0..d {
            p[i] -= 0.5 * eps * grad[i];
        }
        if q.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(IntegratorError::NonFiniteState { step });
        }
    }
    Ok(jac)
}

/// Left-multiply the running Jacobian by `[[I, 0], [c·H, I]]`.
fn apply_kick(jac: &mut Mat, hess: &Mat, c: f64, d: usize) {
    for col in 0..2 * d {
        let mut delta = vec![0.0; d];
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += hess[(i, k)] * jac[(k, col)];
            }
            delta[i] = c * acc;
        }
        for i in 0..d {
            jac[(d + i, col)] += delta[i];
        }
    }
}

/// Left-multiply the running Jacobian by `[[I, c·H], [0, I]]`.
fn apply_drift(jac: &mut Mat, hess: &Mat, c: f64, d: usize) {
    for col in 0..2 * d {
        let mut delta = vec![0.0; d];
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += hess[(i, k)] * jac[(d + k, col)];
            }
            delta[i] = c * acc;
        }
        for i in 0..d {
            jac[(i, col)] += delta[i];
        }
    }
}

fn finite_difference_jacobian(
    target: &dyn DensityModel,
    aux: &dyn DensityModel,
    start: &PhasePoint,
    cfg: &LeapfrogConfig,
) -> Result<Mat, IntegratorError> {
    let d = start.dim();
    let mut jac = Mat::zeros(2 * d, 2 * d);
    let mut probe = start.clone();
    for col in 0..2 * d {
        let (coords, idx) = if col < d {
            (&mut probe.q, col)
        } else {
            (&mut probe.p, col - d)
        };
        let base = coords[idx];
        let step = 1e-5 * (1.0 + base.abs());
        coords[idx] = base + step;
        let plus = leapfrog_endpoint(target, aux, &probe, cfg)?;
        let coords = if col < d { &mut probe.q } else { &mut probe.p };
        coords[idx] = base - step;
        let minus = leapfrog_endpoint(target, aux, &probe, cfg)?;
        let coords = if col < d { &mut probe.q } else { &mut probe.p };
        coords[idx] = base;
        for row in 0..d {
            jac[(row, col)] = (plus.q[row] - minus.q[row]) / (2.0 * step);
            jac[(d + row, col)] = (plus.p[row] - minus.p[row]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Contraction factor of the quadratic-case flow: `‖cos(T·A)‖` with
/// `A = √(V̄Ū)`, plus the threshold `π/‖A‖` below which it stays under one.
#[derive(Debug, Clone, Copy)]
pub struct PositionSensitivity {
    pub beta: f64,
    pub t_threshold: f64,
    pub below_threshold: bool,
}

pub fn dqdq_norm(
    target: &GaussianDensity,
    aux: &GaussianDensity,
    t: f64,
) -> Result<PositionSensitivity, IntegratorError> {
    let ubar = SymMatrix::new(target.precision().clone())?;
    let vbar = SymMatrix::new(aux.precision().clone())?;
    let pair = nonsym_sqrt_pair(&vbar, &ubar)?;
    let cos_ta = mat_cos(&pair.a.scale(t))?;
    Ok(PositionSensitivity {
        beta: cos_ta.op_norm(),
        t_threshold: pair.t_threshold,
        below_threshold: t < pair.t_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianMixtureDensity;
    use alloc::vec;

    fn unit_1d() -> GaussianDensity {
        GaussianDensity::standard(1)
    }

    #[test]
    fn free_particle_drifts_in_a_straight_line() {
        // Flat target: huge prior variance makes grad U ~ 0.
        let target = GaussianDensity::isotropic(vec![0.0], 1e8).unwrap();
        let aux = unit_1d();
        let start = PhasePoint::new(vec![0.0], vec![1.5]);
        let cfg = LeapfrogConfig::new(0.01, 100);
        let end = leapfrog_endpoint(&target, &aux, &start, &cfg).unwrap();
        // grad V(p) = p, so Q moves by T·p.
        assert!((end.q[0] - 1.5).abs() < 1e-6);
        assert!((end.p[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn harmonic_quarter_period_rotation() {
        let target = unit_1d();
        let aux = unit_1d();
        let start = PhasePoint::new(vec![1.0], vec![0.0]);
        let cfg = LeapfrogConfig::new(0.001, 1571);
        let end = leapfrog_endpoint(&target, &aux, &start, &cfg).unwrap();
        // T ~ pi/2: (1, 0) rotates to (0, -1).
        let t = cfg.motion_length();
        assert!((end.q[0] - libm::cos(t)).abs() < 1e-5);
        assert!((end.p[0] + libm::sin(t)).abs() < 1e-5);
    }

    #[test]
    fn backward_retraces_forward() {
        let target = crate::registry::resolve("lines12").unwrap();
        let aux = GaussianDensity::standard(3);
        let start = PhasePoint::new(vec![0.3, -0.2, 1.0], vec![0.5, 0.1, -0.8]);
        let cfg = LeapfrogConfig::new(0.025, 100);
        let end = leapfrog_endpoint(&target, &aux, &start, &cfg).unwrap();
        let back = leapfrog_endpoint(&target, &aux, &end, &cfg.reversed()).unwrap();
        for i in 0..3 {
            assert!((back.q[i] - start.q[i]).abs() < 1e-10);
            assert!((back.p[i] - start.p[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_flow_identity_at_zero_time() {
        let target = GaussianDensity::standard(2);
        let aux = GaussianDensity::standard(2);
        let start = PhasePoint::new(vec![1.0, -2.0], vec![0.5, 0.25]);
        let end = exact_quadratic_flow(&target, &aux, 0.0, &start).unwrap();
        assert_eq!(end, start);
    }

    #[test]
    fn exact_flow_unit_oscillator() {
        let target = unit_1d();
        let aux = unit_1d();
        let start = PhasePoint::new(vec![1.0], vec![0.0]);
        let end =
            exact_quadratic_flow(&target, &aux, core::f64::consts::FRAC_PI_2, &start).unwrap();
        assert!(end.q[0].abs() < 1e-12);
        assert!((end.p[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_flow_conserves_energy() {
        use crate::rng::{StreamCtx, StreamKind};
        let cov_t = SymMatrix::new(Mat::from_rows(&[&[1.5, 0.4], &[0.4, 0.8]])).unwrap();
        let cov_a = SymMatrix::new(Mat::from_rows(&[&[0.9, -0.2], &[-0.2, 1.1]])).unwrap();
        let target = GaussianDensity::new(vec![0.3, -0.1], cov_t).unwrap();
        let aux = GaussianDensity::new(vec![-0.5, 0.2], cov_a).unwrap();
        let mut rng = StreamCtx::new(3, 0).stream(0, 0, StreamKind::Reference);
        for _ in 0..100 {
            let start = PhasePoint::new(
                vec![crate::rng::standard_normal(&mut rng), crate::rng::standard_normal(&mut rng)],
                vec![crate::rng::standard_normal(&mut rng), crate::rng::standard_normal(&mut rng)],
            );
            let end = exact_quadratic_flow(&target, &aux, 1.3, &start).unwrap();
            let h0 = hamiltonian(&target, &aux, &start);
            let h1 = hamiltonian(&target, &aux, &end);
            assert!((h1 - h0).abs() <= 1e-10, "dH = {}", h1 - h0);
        }
    }

    #[test]
    fn jacobian_is_identity_for_zero_steps() {
        let target = unit_1d();
        let aux = unit_1d();
        let start = PhasePoint::new(vec![0.7], vec![-0.3]);
        let cfg = LeapfrogConfig { step: 0.01, steps: 0, direction: 1 };
        let jac = flow_jacobian(&target, &aux, &start, &cfg, JacobianMode::Variational).unwrap();
        assert!(jac.max_abs_diff(&Mat::identity(2)) < 1e-15);
    }

    #[test]
    fn variational_jacobian_matches_block_flow_for_quadratic_case() {
        let target = GaussianDensity::isotropic(vec![0.0, 0.0], 0.8).unwrap();
        let aux = GaussianDensity::isotropic(vec![0.0, 0.0], 1.3).unwrap();
        let start = PhasePoint::new(vec![0.4, -0.9], vec![0.2, 0.6]);
        let cfg = LeapfrogConfig::new(0.01, 100);
        let jac = flow_jacobian(&target, &aux, &start, &cfg, JacobianMode::Variational).unwrap();
        let ubar = SymMatrix::new(target.precision().clone()).unwrap();
        let vbar = SymMatrix::new(aux.precision().clone()).unwrap();
        let exact = block_flow_matrix(1.0, &vbar, &ubar).unwrap();
        assert!(jac.max_abs_diff(&exact) < 0.01);
    }

    #[test]
    fn leapfrog_jacobian_preserves_volume_on_mixture() {
        let target = crate::registry::resolve("lines12").unwrap();
        let c1 = GaussianDensity::isotropic(vec![-0.5, 0.0, 0.5], 0.8).unwrap();
        let c2 = GaussianDensity::isotropic(vec![0.5, 0.2, -0.5], 1.2).unwrap();
        let aux = GaussianMixtureDensity::new(vec![c1, c2], vec![0.4, 0.6]).unwrap();
        let start = PhasePoint::new(vec![0.1, -0.4, 0.6], vec![0.2, 0.3, -0.1]);
        let cfg = LeapfrogConfig::new(0.01, 50);
        let jac =
            flow_jacobian(&target, &aux, &start, &cfg, JacobianMode::FiniteDifference).unwrap();
        let vol = crate::linalg::det(&jac).abs();
        assert!((vol - 1.0).abs() < 1e-6, "det = {vol}");
    }

    #[test]
    fn dqdq_norm_closed_forms() {
        let target = unit_1d();
        let aux = unit_1d();
        let at_zero = dqdq_norm(&target, &aux, 0.0).unwrap();
        assert!((at_zero.beta - 1.0).abs() < 1e-12);
        let third = dqdq_norm(&target, &aux, core::f64::consts::FRAC_PI_3).unwrap();
        assert!((third.beta - 0.5).abs() < 1e-10);
        assert!(third.below_threshold);

        // Commuting diagonal case: A = diag(1, 2), T = pi/4.
        let t2 = GaussianDensity::new(vec![0.0, 0.0], SymMatrix::diag(&[1.0, 0.25])).unwrap();
        let a2 = GaussianDensity::standard(2);
        let s = dqdq_norm(&t2, &a2, core::f64::consts::FRAC_PI_4).unwrap();
        assert!((s.beta - libm::sqrt(2.0) / 2.0).abs() < 1e-10);
    }
}
