//! Grid-discretized transfer operator in one dimension.
//!
//! The operator 𝒯 maps a grid function h to q ↦ ∫ h(Q(q,p)) 𝔤(P(q,p)) dp,
//! where (Q, P) is the time-T Hamiltonian flow and 𝔤 the auxiliary density;
//! the adjoint 𝒯† uses the time −T flow. The alternating operator
//! 𝒯_a = 𝒯†∘𝒯 contracts everything orthogonal to the target density f, which
//! is what the iteration report exhibits. Grids are uniform with trapezoid
//! quadrature; functions are linearly interpolated and zero outside the
//! domain.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::integrator::{FlowMap, IntegratorError, PhasePoint};
use crate::models::DensityModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorLabError {
    NotOneDimensional,
    /// Grids need at least two nodes and a positive span.
    BadGrid,
    Integrator(IntegratorError),
}

impl fmt::Display for OperatorLabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorLabError::NotOneDimensional => {
                f.write_str("operator lab requires 1D target and auxiliary")
            }
            OperatorLabError::BadGrid => f.write_str("grid needs n >= 2 nodes and a < b"),
            OperatorLabError::Integrator(e) => write!(f, "flow failure: {e}"),
        }
    }
}

impl From<IntegratorError> for OperatorLabError {
    fn from(e: IntegratorError) -> Self {
        OperatorLabError::Integrator(e)
    }
}

/// Function values on a uniform grid over [a, b] with trapezoid quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    a: f64,
    b: f64,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn from_values(a: f64, b: f64, values: Vec<f64>) -> Result<Self, OperatorLabError> {
        if values.len() < 2 || !(b > a) {
            return Err(OperatorLabError::BadGrid);
        }
        Ok(GridDensity { a, b, values })
    }

    pub fn from_fn(
        a: f64,
        b: f64,
        n: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, OperatorLabError> {
        if n < 2 || !(b > a) {
            return Err(OperatorLabError::BadGrid);
        }
        let h = (b - a) / (n - 1) as f64;
        let values = (0..n).map(|i| f(a + i as f64 * h)).collect();
        Ok(GridDensity { a, b, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.a + i as f64 * self.spacing()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn quad_weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i == self.values.len() - 1 {
            0.5 * h
        } else {
            h
        }
    }

    /// Linear interpolation; zero outside [a, b].
    pub fn interp(&self, x: f64) -> f64 {
        if x < self.a || x > self.b {
            return 0.0;
        }
        let h = self.spacing();
        let t = (x - self.a) / h;
        let i = (t as usize).min(self.values.len() - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    pub fn integral(&self) -> f64 {
        (0..self.values.len()).map(|i| self.quad_weight(i) * self.values[i]).sum()
    }

    fn same_grid(&self, other: &GridDensity) -> bool {
        self.a == other.a && self.b == other.b && self.values.len() == other.values.len()
    }
}

/// Norm and integral of a grid function in L²_f.
#[derive(Debug, Clone, Copy)]
pub struct L2Report {
    /// ∫ h²/f over the grid.
    pub norm_sq: f64,
    pub integral: f64,
}

/// One step of the 𝒯_a iteration.
#[derive(Debug, Clone, Copy)]
pub struct TaStep {
    pub k: usize,
    pub norm_sq: f64,
    pub integral: f64,
    /// ‖𝒯_aᵏ h₀ − αf‖_f with α = ∫h₀/∫f.
    pub distance: f64,
}

/// Precomputed flow endpoints and auxiliary weights on the q×p product grid.
pub struct OperatorLab {
    q_a: f64,
    q_b: f64,
    nq: usize,
    p_weights: Vec<f64>,
    /// Per (q_i, p_j): endpoint position and 𝔤 at the endpoint momentum.
    fwd: Vec<(f64, f64)>,
    bwd: Vec<(f64, f64)>,
    target_f: GridDensity,
    /// Set when ∫𝒯f drifts from ∫f by more than 1%: the grids are too
    /// coarse or the domain leaks mass.
    pub grid_warning: bool,
}

impl OperatorLab {
    /// Tabulate the flow over `nq` target nodes on `q_range` and `np`
    /// momentum quadrature nodes on `p_range`.
    pub fn new(
        target: &dyn DensityModel,
        aux: &dyn DensityModel,
        flow: &dyn FlowMap,
        q_range: (f64, f64),
        nq: usize,
        p_range: (f64, f64),
        np: usize,
    ) -> Result<Self, OperatorLabError> {
        if target.dim() != 1 || aux.dim() != 1 {
            return Err(OperatorLabError::NotOneDimensional);
        }
        if nq < 2 || np < 2 || !(q_range.1 > q_range.0) || !(p_range.1 > p_range.0) {
            return Err(OperatorLabError::BadGrid);
        }
        let target_f =
            GridDensity::from_fn(q_range.0, q_range.1, nq, |q| libm::exp(-target.potential(&[q])))?;
        let hp = (p_range.1 - p_range.0) / (np - 1) as f64;
        let p_weights: Vec<f64> = (0..np)
            .map(|j| if j == 0 || j == np - 1 { 0.5 * hp } else { hp })
            .collect();

        let mut fwd = Vec::with_capacity(nq * np);
        let mut bwd = Vec::with_capacity(nq * np);
        for i in 0..nq {
            let q = target_f.node(i);
            for j in 0..np {
                let p = p_range.0 + j as f64 * hp;
                let start = PhasePoint::new(vec![q], vec![p]);
                let f_end = flow.propagate(&start, 1)?;
                let b_end = flow.propagate(&start, -1)?;
                fwd.push((f_end.q[0], libm::exp(-aux.potential(&f_end.p))));
                bwd.push((b_end.q[0], libm::exp(-aux.potential(&b_end.p))));
            }
        }
        let mut lab = OperatorLab {
            q_a: q_range.0,
            q_b: q_range.1,
            nq,
            p_weights,
            fwd,
            bwd,
            target_f,
            grid_warning: false,
        };
        let t_f = lab.apply_t(&lab.target_f.clone());
        let f_int = lab.target_f.integral();
        lab.grid_warning = (t_f.integral() - f_int).abs() > 0.01 * f_int.abs();
        Ok(lab)
    }

    /// Target density sampled on the q grid.
    pub fn target_density(&self) -> &GridDensity {
        &self.target_f
    }

    fn apply_table(&self, h: &GridDensity, table: &[(f64, f64)]) -> GridDensity {
        assert!(
            h.same_grid(&self.target_f),
            "grid function must live on the lab's q grid"
        );
        let np = self.p_weights.len();
        let mut out = Vec::with_capacity(self.nq);
        for i in 0..self.nq {
            let mut acc = 0.0;
            for j in 0..np {
                let (q_end, g_end) = table[i * np + j];
                acc += self.p_weights[j] * h.interp(q_end) * g_end;
            }
            out.push(acc);
        }
        GridDensity { a: self.q_a, b: self.q_b, values: out }
    }

    /// (𝒯h)(qᵢ) = Σⱼ wⱼ h(Q(qᵢ,pⱼ)) 𝔤(P(qᵢ,pⱼ)).
    pub fn apply_t(&self, h: &GridDensity) -> GridDensity {
        self.apply_table(h, &self.fwd)
    }

    /// Adjoint: the same quadrature over the time −T flow.
    pub fn apply_t_adjoint(&self, h: &GridDensity) -> GridDensity {
        self.apply_table(h, &self.bwd)
    }

    /// Weighted inner product ⟨a,b⟩_f = ∫ a·b/f (f clamped away from zero).
    pub fn inner(&self, a: &GridDensity, b: &GridDensity) -> f64 {
        assert!(a.same_grid(&self.target_f) && b.same_grid(&self.target_f));
        let mut acc = 0.0;
        for i in 0..self.nq {
            let f = self.target_f.values[i].max(1e-300);
            acc += a.quad_weight(i) * a.values[i] * b.values[i] / f;
        }
        acc
    }

    pub fn l2_report(&self, h: &GridDensity) -> L2Report {
        L2Report { norm_sq: self.inner(h, h), integral: h.integral() }
    }

    /// Iterate 𝒯_a = 𝒯†∘𝒯 for `n` steps and report the L²_f distance to the
    /// fixed point αf after each step.
    pub fn iterate_ta(&self, h0: &GridDensity, n: usize) -> Vec<TaStep> {
        let alpha = h0.integral() / self.target_f.integral();
        let mut h = h0.clone();
        let mut out = Vec::with_capacity(n);
        for k in 1..=n {
            h = self.apply_t_adjoint(&self.apply_t(&h));
            let report = self.l2_report(&h);
            let diff = GridDensity {
                a: self.q_a,
                b: self.q_b,
                values: h
                    .values
                    .iter()
                    .zip(self.target_f.values.iter())
                    .map(|(hv, fv)| hv - alpha * fv)
                    .collect(),
            };
            out.push(TaStep {
                k,
                norm_sq: report.norm_sq,
                integral: report.integral,
                distance: libm::sqrt(self.inner(&diff, &diff).max(0.0)),
            });
        }
        out
    }
}

/// Least-squares fit of log(yᵏ) against k; returns (slope, intercept, R²).
/// `None` when fewer than two positive values exist.
pub fn log_linear_fit(ys: &[f64]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = ys
        .iter()
        .enumerate()
        .filter(|(_, &y)| y > 0.0)
        .map(|(i, &y)| (i as f64, libm::log(y)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in &pts {
        let fit = slope * x + intercept;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some((slope, intercept, r2))
}
