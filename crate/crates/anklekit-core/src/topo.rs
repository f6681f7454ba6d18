//! Density-based 2-D topology optimization of bracket cross sections.
//!
//! The domain is a regular grid of unit-square bilinear plane-stress
//! elements. Each element carries a density in `[DENSITY_FLOOR, 1]` that
//! penalizes its stiffness (modified SIMP interpolation
//! `E(rho) = E_void + rho^p (E_solid - E_void)`), and the optimizer minimizes
//! compliance under a volume constraint with the classic loop: finite-element
//! solve, adjoint sensitivities, density-weighted hat filtering for mesh
//! independence, and an optimality-criteria update with bisection on the
//! volume multiplier.
//!
//! Everything here is deterministic and single-threaded; independent runs
//! parallelize freely at the process level.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

/// Young's modulus of fully dense material (the problem is scale-free).
pub const YOUNG_SOLID: f64 = 1.0;
/// Residual modulus of empty elements; keeps the stiffness matrix positive
/// definite without measurably stiffening the structure.
pub const YOUNG_VOID: f64 = 1e-9;
/// Poisson ratio of the plane-stress material model.
pub const POISSON: f64 = 0.3;
/// Smallest admissible element density.
pub const DENSITY_FLOOR: f64 = 1e-3;
/// Default per-iteration density move limit.
pub const DEFAULT_MOVE_LIMIT: f64 = 0.2;

/// Mean-density accuracy the multiplier bisection must reach.
const VOLUME_TOLERANCE: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum TopoError {
    #[error("element grid must be at least 1x1 (got {nelx}x{nely})")]
    BadDims { nelx: usize, nely: usize },
    #[error("optimization needs at least 4 elements (got {0})")]
    TooFewElements(usize),
    #[error("volume fraction must lie in (0, 1] (got {0})")]
    BadVolumeFraction(f64),
    #[error("penalty exponent must be finite and >= 1 (got {0})")]
    BadPenalty(f64),
    #[error("filter radius must be finite and >= 1 element (got {0})")]
    BadFilterRadius(f64),
    #[error("move limit must lie in [0, 1] (got {0})")]
    BadMoveLimit(f64),
    #[error("node ({0}, {1}) is outside the {2}x{3} element grid")]
    NodeOutOfRange(usize, usize, usize, usize),
    #[error("load on node ({0}, {1}) must be finite")]
    BadLoad(usize, usize),
    #[error("element index {0} is outside the grid ({1} elements)")]
    ElementOutOfRange(usize, usize),
    #[error("element {0} appears in both passive sets")]
    PassiveOverlap(usize),
    #[error("expected {expected} element densities (got {got})")]
    DensityCountMismatch { expected: usize, got: usize },
    #[error("density {value} at element {index} is outside [0, 1]")]
    BadDensity { index: usize, value: f64 },
    #[error(
        "stiffness matrix is singular at free dof {dof}; the restraints do \
         not prevent rigid-body motion"
    )]
    Singular { dof: usize },
    #[error("sensitivity {value} at element {index} is positive; compliance \
             sensitivities must be <= 0")]
    NonPhysicalSensitivity { index: usize, value: f64 },
    #[error(
        "volume multiplier bisection cannot reach mean density {target}; \
         the move window only spans [{lo}, {hi}]"
    )]
    BisectionFailure { target: f64, lo: f64, hi: f64 },
    #[error("iteration budget must be at least 1")]
    BadIterationBudget,
    #[error("convergence tolerance must be finite and >= 0 (got {0})")]
    BadTolerance(f64),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

/// Coordinate axis of a nodal degree of freedom. `Y` points from the first
/// element row toward the last (downward in the exported image).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Concentrated force on a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    /// Node coordinates `(ix, iy)` with `ix in 0..=nelx`, `iy in 0..=nely`.
    pub node: (usize, usize),
    pub axis: Axis,
    pub newtons: f64,
}

/// A nodal degree of freedom clamped to zero displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restraint {
    pub node: (usize, usize),
    pub axis: Axis,
}

/// A complete optimization problem: grid, material budget, penalization,
/// filtering, loads, restraints and non-design (passive) element sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopoProblem {
    pub nelx: usize,
    pub nely: usize,
    /// Material budget as a fraction of the domain area, in `(0, 1]`.
    pub volfrac: f64,
    /// Stiffness penalization exponent, `>= 1`.
    pub penalty: f64,
    /// Filter radius in element widths, `>= 1`.
    pub rmin: f64,
    /// Per-iteration density move limit, in `[0, 1]`.
    pub move_limit: f64,
    pub loads: Vec<PointLoad>,
    pub fixed: Vec<Restraint>,
    /// Elements frozen at full density (always material).
    pub passive_solid: Vec<usize>,
    /// Elements frozen at the density floor (always empty).
    pub passive_void: Vec<usize>,
}

impl TopoProblem {
    /// Number of elements in the grid.
    pub fn element_count(&self) -> usize {
        self.nelx * self.nely
    }

    /// Flat index of element `(ex, ey)`; row `ey = 0` is the top row of the
    /// exported image.
    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        debug_assert!(ex < self.nelx && ey < self.nely);
        ey * self.nelx + ex
    }

    pub fn validate(&self) -> Result<(), TopoError> {
        if self.nelx == 0 || self.nely == 0 {
            return Err(TopoError::BadDims { nelx: self.nelx, nely: self.nely });
        }
        if !(self.volfrac > 0.0 && self.volfrac <= 1.0) {
            return Err(TopoError::BadVolumeFraction(self.volfrac));
        }
        if !self.penalty.is_finite() || self.penalty < 1.0 {
            return Err(TopoError::BadPenalty(self.penalty));
        }
        if !self.rmin.is_finite() || self.rmin < 1.0 {
            return Err(TopoError::BadFilterRadius(self.rmin));
        }
        if !self.move_limit.is_finite() || !(0.0..=1.0).contains(&self.move_limit) {
            return Err(TopoError::BadMoveLimit(self.move_limit));
        }
        for load in &self.loads {
            let (ix, iy) = load.node;
            if ix > self.nelx || iy > self.nely {
                return Err(TopoError::NodeOutOfRange(ix, iy, self.nelx, self.nely));
            }
            if !load.newtons.is_finite() {
                return Err(TopoError::BadLoad(ix, iy));
            }
        }
        for restraint in &self.fixed {
            let (ix, iy) = restraint.node;
            if ix > self.nelx || iy > self.nely {
                return Err(TopoError::NodeOutOfRange(ix, iy, self.nelx, self.nely));
            }
        }
        let nel = self.element_count();
        let mut solid = HashSet::new();
        for &e in &self.passive_solid {
            if e >= nel {
                return Err(TopoError::ElementOutOfRange(e, nel));
            }
            solid.insert(e);
        }
        for &e in &self.passive_void {
            if e >= nel {
                return Err(TopoError::ElementOutOfRange(e, nel));
            }
            if solid.contains(&e) {
                return Err(TopoError::PassiveOverlap(e));
            }
        }
        Ok(())
    }

    /// Clamp the passive sets into a density vector.
    fn apply_passive(&self, rho: &mut [f64]) {
        for &e in &self.passive_solid {
            rho[e] = 1.0;
        }
        for &e in &self.passive_void {
            rho[e] = DENSITY_FLOOR;
        }
    }
}

/// Result of an optimization run: the converged element densities plus the
/// per-iteration compliance and mean-density traces.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    nelx: usize,
    nely: usize,
    densities: Vec<f64>,
    iterations: usize,
    compliance_history: Vec<f64>,
    mean_density_history: Vec<f64>,
}

impl DensityField {
    /// A uniform field with no iteration history; useful as a baseline for
    /// compliance comparisons and exports.
    pub fn uniform(nelx: usize, nely: usize, value: f64) -> Result<Self, TopoError> {
        if nelx == 0 || nely == 0 {
            return Err(TopoError::BadDims { nelx, nely });
        }
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(TopoError::BadDensity { index: 0, value });
        }
        Ok(Self {
            nelx,
            nely,
            densities: vec![value; nelx * nely],
            iterations: 0,
            compliance_history: Vec::new(),
            mean_density_history: Vec::new(),
        })
    }

    pub fn nelx(&self) -> usize {
        self.nelx
    }

    pub fn nely(&self) -> usize {
        self.nely
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn density(&self, ex: usize, ey: usize) -> f64 {
        assert!(ex < self.nelx && ey < self.nely);
        self.densities[ey * self.nelx + ex]
    }

    pub fn mean_density(&self) -> f64 {
        self.densities.iter().sum::<f64>() / self.densities.len() as f64
    }

    /// Number of finite-element solves performed.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Compliance of the design at the start of each iteration.
    pub fn compliance_history(&self) -> &[f64] {
        &self.compliance_history
    }

    /// Mean density of the design at the start of each iteration.
    pub fn mean_density_history(&self) -> &[f64] {
        &self.mean_density_history
    }

    /// Densities as CSV text: `nely` rows of `nelx` comma-separated values,
    /// top row first. Values round-trip exactly through parsing.
    pub fn density_csv_string(&self) -> String {
        let mut out = String::new();
        for ey in 0..self.nely {
            for ex in 0..self.nelx {
                if ex > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", self.density(ex, ey)));
            }
            out.push('\n');
        }
        out
    }

    /// Per-iteration trace as CSV text with header
    /// `iteration,compliance,mean_density`.
    pub fn history_csv_string(&self) -> String {
        let mut out = String::from("iteration,compliance,mean_density\n");
        for (i, (c, m)) in self
            .compliance_history
            .iter()
            .zip(&self.mean_density_history)
            .enumerate()
        {
            out.push_str(&format!("{},{},{}\n", i + 1, c, m));
        }
        out
    }
}

/// Stiffness of a bilinear unit-square plane-stress element at unit modulus,
/// from 2x2 Gauss quadrature. Scale-free: the matrix is the same for any
/// square element size at unit thickness.
fn unit_stiffness() -> &'static [[f64; 8]; 8] {
    static KE: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    KE.get_or_init(|| {
        // local corners in natural coordinates, matching the node order of
        // `element_dofs`
        let xi_n = [-1.0, 1.0, 1.0, -1.0];
        let eta_n = [-1.0, -1.0, 1.0, 1.0];
        let c = YOUNG_SOLID / (1.0 - POISSON * POISSON);
        let d = [
            [c, c * POISSON, 0.0],
            [c * POISSON, c, 0.0],
            [0.0, 0.0, c * (1.0 - POISSON) / 2.0],
        ];
        let g = 1.0 / 3.0_f64.sqrt();
        let mut ke = [[0.0; 8]; 8];
        for &xi in &[-g, g] {
            for &eta in &[-g, g] {
                // strain-displacement matrix; d/dx = 2 d/dxi on the unit
                // square, jacobian determinant 1/4
                let mut b = [[0.0; 8]; 3];
                for n in 0..4 {
                    let dndx = 0.5 * xi_n[n] * (1.0 + eta * eta_n[n]);
                    let dndy = 0.5 * eta_n[n] * (1.0 + xi * xi_n[n]);
                    b[0][2 * n] = dndx;
                    b[1][2 * n + 1] = dndy;
                    b[2][2 * n] = dndy;
                    b[2][2 * n + 1] = dndx;
                }
                for i in 0..8 {
                    for j in 0..8 {
                        let mut sum = 0.0;
                        for r in 0..3 {
                            for s in 0..3 {
                                sum += b[r][i] * d[r][s] * b[s][j];
                            }
                        }
                        ke[i][j] += 0.25 * sum;
                    }
                }
            }
        }
        ke
    })
}

/// Nodes are numbered down each column, left to right.
fn node_index(nely: usize, ix: usize, iy: usize) -> usize {
    ix * (nely + 1) + iy
}

/// Global dof indices of element `(ex, ey)` in local corner order: top-left,
/// top-right, bottom-right, bottom-left, x before y.
fn element_dofs(nely: usize, ex: usize, ey: usize) -> [usize; 8] {
    let n0 = node_index(nely, ex, ey);
    let n1 = node_index(nely, ex + 1, ey);
    let n2 = node_index(nely, ex + 1, ey + 1);
    let n3 = node_index(nely, ex, ey + 1);
    [
        2 * n0,
        2 * n0 + 1,
        2 * n1,
        2 * n1 + 1,
        2 * n2,
        2 * n2 + 1,
        2 * n3,
        2 * n3 + 1,
    ]
}

fn dof_index(nely: usize, node: (usize, usize), axis: Axis) -> usize {
    let n = node_index(nely, node.0, node.1);
    match axis {
        Axis::X => 2 * n,
        Axis::Y => 2 * n + 1,
    }
}

/// Symmetric banded matrix in lower-band storage; `a[i * (hb + 1) + (i - j)]`
/// holds entry `(i, j)` for `0 <= i - j <= hb`.
struct BandMatrix {
    n: usize,
    hb: usize,
    a: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, hb: usize) -> Self {
        Self { n, hb, a: vec![0.0; n * (hb + 1)] }
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.hb);
        self.a[i * (self.hb + 1) + (i - j)] += v;
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.hb + 1) + (i - j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * (self.hb + 1) + (i - j)] = v;
    }

    /// In-place Cholesky factorization `A = L L^T`. Fails on a non-positive
    /// pivot, which for an assembled stiffness matrix means the restraints
    /// left a rigid-body mode free.
    fn cholesky(&mut self) -> Result<(), TopoError> {
        let mut max_diag = 0.0_f64;
        for i in 0..self.n {
            max_diag = max_diag.max(self.at(i, i).abs());
        }
        let floor = max_diag * 1e-14;
        for i in 0..self.n {
            let jmin = i.saturating_sub(self.hb);
            for j in jmin..=i {
                let mut sum = self.at(i, j);
                for k in jmin..j {
                    sum -= self.at(i, k) * self.at(j, k);
                }
                if j < i {
                    self.set(i, j, sum / self.at(j, j));
                } else {
                    if !(sum > floor) {
                        return Err(TopoError::Singular { dof: i });
                    }
                    self.set(i, i, sum.sqrt());
                }
            }
        }
        Ok(())
    }

    /// Solve `L L^T x = b` in place after [`Self::cholesky`].
    fn solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let kmin = i.saturating_sub(self.hb);
            let mut sum = b[i];
            for k in kmin..i {
                sum -= self.at(i, k) * b[k];
            }
            b[i] = sum / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let kmax = (i + self.hb).min(self.n - 1);
            let mut sum = b[i];
            for k in (i + 1)..=kmax {
                sum -= self.at(k, i) * b[k];
            }
            b[i] = sum / self.at(i, i);
        }
    }
}

/// Map from global dofs to a compact numbering of the unrestrained ones.
struct FreeDofs {
    index: Vec<Option<usize>>,
    count: usize,
}

impl FreeDofs {
    fn build(problem: &TopoProblem) -> Self {
        let ndof = 2 * (problem.nelx + 1) * (problem.nely + 1);
        let mut fixed = vec![false; ndof];
        for restraint in &problem.fixed {
            fixed[dof_index(problem.nely, restraint.node, restraint.axis)] = true;
        }
        let mut index = vec![None; ndof];
        let mut count = 0;
        for (dof, &is_fixed) in fixed.iter().enumerate() {
            if !is_fixed {
                index[dof] = Some(count);
                count += 1;
            }
        }
        Self { index, count }
    }

    /// Half-bandwidth of the reduced system: the largest compact-index
    /// spread inside any one element.
    fn half_bandwidth(&self, problem: &TopoProblem) -> usize {
        let mut hb = 0;
        for ex in 0..problem.nelx {
            for ey in 0..problem.nely {
                let dofs = element_dofs(problem.nely, ex, ey);
                let mut lo = usize::MAX;
                let mut hi = 0;
                for &d in &dofs {
                    if let Some(f) = self.index[d] {
                        lo = lo.min(f);
                        hi = hi.max(f);
                    }
                }
                if lo != usize::MAX {
                    hb = hb.max(hi - lo);
                }
            }
        }
        hb
    }
}

fn check_densities(problem: &TopoProblem, densities: &[f64]) -> Result<(), TopoError> {
    let nel = problem.element_count();
    if densities.len() != nel {
        return Err(TopoError::DensityCountMismatch { expected: nel, got: densities.len() });
    }
    for (index, &value) in densities.iter().enumerate() {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(TopoError::BadDensity { index, value });
        }
    }
    Ok(())
}

/// Penalized element modulus.
fn young(density: f64, penalty: f64) -> f64 {
    YOUNG_VOID + density.powf(penalty) * (YOUNG_SOLID - YOUNG_VOID)
}

/// Assemble the penalized stiffness matrix, solve for the nodal
/// displacements and return them (full-length, zeros at restrained dofs)
/// together with the compliance `f . u`.
pub fn assemble_and_solve(
    problem: &TopoProblem,
    densities: &[f64],
) -> Result<(Vec<f64>, f64), TopoError> {
    problem.validate()?;
    check_densities(problem, densities)?;
    let free = FreeDofs::build(problem);
    if free.count == 0 {
        return Err(TopoError::Singular { dof: 0 });
    }
    let hb = free.half_bandwidth(problem);
    let mut k = BandMatrix::zeros(free.count, hb);
    let ke = unit_stiffness();

    for ey in 0..problem.nely {
        for ex in 0..problem.nelx {
            let e = problem.element_index(ex, ey);
            let scale = young(densities[e], problem.penalty);
            let dofs = element_dofs(problem.nely, ex, ey);
            for a in 0..8 {
                let Some(fi) = free.index[dofs[a]] else { continue };
                for b in 0..8 {
                    let Some(fj) = free.index[dofs[b]] else { continue };
                    if fi >= fj {
                        k.add(fi, fj, scale * ke[a][b]);
                    }
                }
            }
        }
    }

    let ndof = free.index.len();
    let mut rhs = vec![0.0; free.count];
    for load in &problem.loads {
        let dof = dof_index(problem.nely, load.node, load.axis);
        if let Some(f) = free.index[dof] {
            rhs[f] += load.newtons;
        }
    }

    k.cholesky()?;
    k.solve(&mut rhs);

    let mut u = vec![0.0; ndof];
    for (dof, f) in free.index.iter().enumerate() {
        if let Some(f) = f {
            u[dof] = rhs[*f];
        }
    }
    let mut compliance = 0.0;
    for load in &problem.loads {
        compliance += load.newtons * u[dof_index(problem.nely, load.node, load.axis)];
    }
    Ok((u, compliance.max(0.0)))
}

/// Strain energy of each element at unit modulus, `u_e^T k0 u_e`.
fn element_strain_energies(problem: &TopoProblem, u: &[f64]) -> Vec<f64> {
    let ke = unit_stiffness();
    let mut energies = vec![0.0; problem.element_count()];
    for ey in 0..problem.nely {
        for ex in 0..problem.nelx {
            let dofs = element_dofs(problem.nely, ex, ey);
            let mut ue = [0.0; 8];
            for (local, &dof) in dofs.iter().enumerate() {
                ue[local] = u[dof];
            }
            let mut energy = 0.0;
            for a in 0..8 {
                let mut row = 0.0;
                for b in 0..8 {
                    row += ke[a][b] * ue[b];
                }
                energy += ue[a] * row;
            }
            energies[problem.element_index(ex, ey)] = energy.max(0.0);
        }
    }
    energies
}

/// Density-weighted hat filter over the element grid: each sensitivity is
/// replaced by a neighborhood average with weights `max(0, rmin - dist)`,
/// weighted by neighbor density and normalized by the element's own density.
/// Preserves sign and approaches the identity as `rmin -> 1`.
pub fn sensitivity_filter(
    nelx: usize,
    nely: usize,
    densities: &[f64],
    sensitivities: &[f64],
    rmin: f64,
) -> Result<Vec<f64>, TopoError> {
    if nelx == 0 || nely == 0 {
        return Err(TopoError::BadDims { nelx, nely });
    }
    if !rmin.is_finite() || rmin < 1.0 {
        return Err(TopoError::BadFilterRadius(rmin));
    }
    let nel = nelx * nely;
    if densities.len() != nel {
        return Err(TopoError::DensityCountMismatch { expected: nel, got: densities.len() });
    }
    if sensitivities.len() != nel {
        return Err(TopoError::DensityCountMismatch { expected: nel, got: sensitivities.len() });
    }
    let reach = rmin.ceil() as isize;
    let mut filtered = vec![0.0; nel];
    for ey in 0..nely as isize {
        for ex in 0..nelx as isize {
            let e = ey as usize * nelx + ex as usize;
            let mut weight_sum = 0.0;
            let mut value_sum = 0.0;
            for dy in -reach..=reach {
                let ny = ey + dy;
                if ny < 0 || ny >= nely as isize {
                    continue;
                }
                for dx in -reach..=reach {
                    let nx = ex + dx;
                    if nx < 0 || nx >= nelx as isize {
                        continue;
                    }
                    let dist = ((dx * dx + dy * dy) as f64).sqrt();
                    let w = rmin - dist;
                    if w <= 0.0 {
                        continue;
                    }
                    let f = ny as usize * nelx + nx as usize;
                    weight_sum += w;
                    value_sum += w * densities[f] * sensitivities[f];
                }
            }
            // the element's own weight is rmin > 0, so weight_sum > 0
            filtered[e] = value_sum / (densities[e].max(DENSITY_FLOOR) * weight_sum);
        }
    }
    Ok(filtered)
}

/// One optimality-criteria density update. Scales each density by the square
/// root of its sensitivity-to-multiplier ratio, clamps to the move window and
/// to `[DENSITY_FLOOR, 1]`, re-imposes the passive sets and bisects the
/// multiplier until the mean density matches `volfrac` within 1e-4.
pub fn oc_update(
    problem: &TopoProblem,
    densities: &[f64],
    sensitivities: &[f64],
    volfrac: f64,
    move_limit: f64,
) -> Result<Vec<f64>, TopoError> {
    problem.validate()?;
    check_densities(problem, densities)?;
    let nel = problem.element_count();
    if sensitivities.len() != nel {
        return Err(TopoError::DensityCountMismatch { expected: nel, got: sensitivities.len() });
    }
    if !(volfrac > 0.0 && volfrac <= 1.0) {
        return Err(TopoError::BadVolumeFraction(volfrac));
    }
    if !move_limit.is_finite() || !(0.0..=1.0).contains(&move_limit) {
        return Err(TopoError::BadMoveLimit(move_limit));
    }
    for (index, &value) in sensitivities.iter().enumerate() {
        if !value.is_finite() || value > 0.0 {
            return Err(TopoError::NonPhysicalSensitivity { index, value });
        }
    }
    if move_limit == 0.0 {
        // frozen step: nothing may change, including the volume
        return Ok(densities.to_vec());
    }

    let candidate = |lambda: f64, out: &mut Vec<f64>| -> f64 {
        out.clear();
        for e in 0..nel {
            let scale = (-sensitivities[e] / lambda).sqrt();
            let lo = (densities[e] - move_limit).max(DENSITY_FLOOR);
            let hi = (densities[e] + move_limit).min(1.0);
            out.push((densities[e] * scale).clamp(lo, hi));
        }
        problem.apply_passive(out);
        out.iter().sum::<f64>() / nel as f64 - volfrac
    };

    let mut out = Vec::with_capacity(nel);
    let mut lo = f64::MIN_POSITIVE;
    let g_lo = candidate(lo, &mut out);
    if g_lo.abs() <= VOLUME_TOLERANCE {
        return Ok(out);
    }
    if g_lo < 0.0 {
        // even the largest admissible step cannot supply enough material
        return Err(TopoError::BisectionFailure {
            target: volfrac,
            lo: candidate(f64::MAX, &mut out) + volfrac,
            hi: g_lo + volfrac,
        });
    }
    let mut hi = 1.0;
    let mut g_hi = candidate(hi, &mut out);
    while g_hi > 0.0 {
        hi *= 16.0;
        if hi > 1e300 {
            return Err(TopoError::BisectionFailure {
                target: volfrac,
                lo: g_hi + volfrac,
                hi: g_lo + volfrac,
            });
        }
        g_hi = candidate(hi, &mut out);
    }
    for _ in 0..400 {
        let mid = lo.sqrt() * hi.sqrt();
        let g = candidate(mid, &mut out);
        if g.abs() <= VOLUME_TOLERANCE {
            return Ok(out);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    // the mean is continuous and monotone in the multiplier, so the bracket
    // collapsing without meeting the tolerance means the constraint jumps
    // over the target (can only happen with pathological passive sets)
    let g = candidate(lo, &mut out);
    if g.abs() <= VOLUME_TOLERANCE {
        return Ok(out);
    }
    Err(TopoError::BisectionFailure {
        target: volfrac,
        lo: candidate(hi, &mut out) + volfrac,
        hi: g + volfrac,
    })
}

/// Run the full optimization loop: solve, differentiate, filter, update,
/// until the largest density change drops below `tol` or `max_iters` is
/// reached. The returned field records one compliance and mean-density
/// sample per solve.
pub fn run_topo(
    problem: &TopoProblem,
    max_iters: usize,
    tol: f64,
) -> Result<DensityField, TopoError> {
    problem.validate()?;
    if problem.element_count() < 4 {
        return Err(TopoError::TooFewElements(problem.element_count()));
    }
    if max_iters == 0 {
        return Err(TopoError::BadIterationBudget);
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(TopoError::BadTolerance(tol));
    }

    // volume-feasible start: budget the free elements so the overall mean
    // equals volfrac even after the passive clamps are imposed
    let nel = problem.element_count();
    let n_solid = problem.passive_solid.len();
    let n_void = problem.passive_void.len();
    let n_free = nel - n_solid - n_void;
    let start = if n_free > 0 {
        let budget =
            problem.volfrac * nel as f64 - n_solid as f64 - DENSITY_FLOOR * n_void as f64;
        (budget / n_free as f64).clamp(DENSITY_FLOOR, 1.0)
    } else {
        problem.volfrac
    };
    let mut rho = vec![start; nel];
    problem.apply_passive(&mut rho);

    let mut compliance_history = Vec::new();
    let mut mean_density_history = Vec::new();
    let mut iterations = 0;
    let stiffness_span = YOUNG_SOLID - YOUNG_VOID;

    loop {
        let (u, compliance) = assemble_and_solve(problem, &rho)?;
        iterations += 1;
        compliance_history.push(compliance);
        mean_density_history.push(rho.iter().sum::<f64>() / nel as f64);

        let energies = element_strain_energies(problem, &u);
        let mut dc = vec![0.0; nel];
        for e in 0..nel {
            dc[e] = -problem.penalty
                * rho[e].powf(problem.penalty - 1.0)
                * stiffness_span
                * energies[e];
        }
        let dc = sensitivity_filter(problem.nelx, problem.nely, &rho, &dc, problem.rmin)?;
        let next = oc_update(problem, &rho, &dc, problem.volfrac, problem.move_limit)?;

        let change = rho
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rho = next;
        if change < tol || iterations >= max_iters {
            break;
        }
    }

    Ok(DensityField {
        nelx: problem.nelx,
        nely: problem.nely,
        densities: rho,
        iterations,
        compliance_history,
        mean_density_history,
    })
}

/// Write the density field as `<base>.csv` (text matrix, `nely` rows by
/// `nelx` columns) and `<base>.png` (8-bit grayscale, darker = denser).
/// Returns the two paths written.
pub fn export_density_png_csv(
    field: &DensityField,
    base: &Path,
) -> Result<(PathBuf, PathBuf), TopoError> {
    let csv_path = base.with_extension("csv");
    let png_path = base.with_extension("png");
    std::fs::write(&csv_path, field.density_csv_string()).map_err(|source| TopoError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;

    let mut pixels = Vec::with_capacity(field.nelx * field.nely);
    for ey in 0..field.nely {
        for ex in 0..field.nelx {
            let shade = 255.0 * (1.0 - field.density(ex, ey));
            pixels.push(shade.round().clamp(0.0, 255.0) as u8);
        }
    }
    let img = image::GrayImage::from_raw(field.nelx as u32, field.nely as u32, pixels)
        .expect("pixel buffer matches dimensions");
    img.save(&png_path)?;
    Ok((csv_path, png_path))
}

/// Benchmark problem: a 60x20 cantilever clamped along the left edge with a
/// unit transverse tip load at the middle of the right edge.
pub fn preset_cantilever() -> TopoProblem {
    let nelx = 60;
    let nely = 20;
    let mut fixed = Vec::new();
    for iy in 0..=nely {
        fixed.push(Restraint { node: (0, iy), axis: Axis::X });
        fixed.push(Restraint { node: (0, iy), axis: Axis::Y });
    }
    TopoProblem {
        nelx,
        nely,
        volfrac: 0.5,
        penalty: 3.0,
        rmin: 1.5,
        move_limit: DEFAULT_MOVE_LIMIT,
        loads: vec![PointLoad { node: (nelx, nely / 2), axis: Axis::Y, newtons: 1.0 }],
        fixed,
        passive_solid: Vec::new(),
        passive_void: Vec::new(),
    }
}

/// Mounting-bracket problem: footplate edge fixed along the bottom, an
/// oblique actuator pull applied at the top of a pin boss, a passive solid
/// ring forming the boss and a passive void for the pin bore.
pub fn preset_bracket() -> TopoProblem {
    let nelx = 48;
    let nely = 32;
    let pin = (36.0, 10.0);
    let bore_r = 2.0;
    let boss_r = 4.0;

    let mut fixed = Vec::new();
    for ix in 0..=nelx {
        fixed.push(Restraint { node: (ix, nely), axis: Axis::X });
        fixed.push(Restraint { node: (ix, nely), axis: Axis::Y });
    }

    let mut passive_solid = Vec::new();
    let mut passive_void = Vec::new();
    for ey in 0..nely {
        for ex in 0..nelx {
            let dx = (ex as f64 + 0.5) - pin.0;
            let dy = (ey as f64 + 0.5) - pin.1;
            let dist = (dx * dx + dy * dy).sqrt();
            if dist < bore_r {
                passive_void.push(ey * nelx + ex);
            } else if dist < boss_r {
                passive_solid.push(ey * nelx + ex);
            }
        }
    }

    // pull up and back along the actuator axis, applied where the boss
    // meets the design domain above the bore
    let pin_top = (pin.0 as usize, pin.1 as usize - 3);
    TopoProblem {
        nelx,
        nely,
        volfrac: 0.4,
        penalty: 3.0,
        rmin: 1.8,
        move_limit: DEFAULT_MOVE_LIMIT,
        loads: vec![
            PointLoad { node: pin_top, axis: Axis::X, newtons: -0.6 },
            PointLoad { node: pin_top, axis: Axis::Y, newtons: -0.8 },
        ],
        fixed,
        passive_solid,
        passive_void,
    }
}
