//! Primal-dual interior-point method for linear cone programs
//!
//! ```text
//!   minimize   cᵀx
//!   subject to A x = b
//!              G x + s = h,   s ∈ K
//! ```
//!
//! where `K` is a nonnegative orthant followed by second-order cones. Search
//! directions use Nesterov-Todd scaling with a Mehrotra predictor-corrector.
//! The reduced Newton system `[H Aᵀ; A 0]`, `H = Gᵀ W⁻² G`, is delegated to
//! a [`KktSolver`], so problems with exploitable sparsity can bring their own
//! factorisation.

use super::linalg::{backward_sub_t, chol_solve, cholesky, dot, forward_sub, norm};

/// Compressed sparse row matrix built one row at a time.
#[derive(Debug, Clone, Default)]
pub struct SparseMatrix {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        for &(c, v) in entries {
            assert!(c < self.ncols, "column {c} out of range");
            if v != 0.0 {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// `y += alpha * M x`
    pub fn mul_add(&self, x: &[f64], y: &mut [f64], alpha: f64) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            let s: f64 = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
            *yi += alpha * s;
        }
    }

    /// `y += alpha * Mᵀ x`
    pub fn tmul_add(&self, x: &[f64], y: &mut [f64], alpha: f64) {
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += alpha * a * xi;
            }
        }
    }
}

/// Cone layout of the slack vector: `nonneg` orthant rows first, then each
/// second-order cone `(t, x)` with `‖x‖ ≤ t` in the listed dimensions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cones {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl Cones {
    pub fn dim(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    fn soc_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let mut off = self.nonneg;
        self.soc.iter().map(move |&q| {
            let r = off..off + q;
            off += q;
            r
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub g: SparseMatrix,
    pub h: Vec<f64>,
    pub cones: Cones,
}

impl ConeProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    fn check(&self) -> Result<(), IpmError> {
        let n = self.c.len();
        let ok = self.a.ncols() == n
            && self.g.ncols() == n
            && self.a.nrows() == self.b.len()
            && self.g.nrows() == self.h.len()
            && self.cones.dim() == self.h.len()
            && self.cones.soc.iter().all(|&q| q >= 2);
        if ok {
            Ok(())
        } else {
            Err(IpmError::Shape)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    pub max_iter: usize,
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    /// Residuals accepted when progress stalls before reaching the main
    /// tolerances.
    pub inaccurate_feastol: f64,
    /// Absolute or relative gap accepted alongside `inaccurate_feastol`.
    pub inaccurate_gaptol: f64,
    pub refine_steps: usize,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            max_iter: 60,
            feastol: 1e-7,
            abstol: 1e-7,
            reltol: 1e-6,
            inaccurate_feastol: 1e-5,
            inaccurate_gaptol: 1e-4,
            refine_steps: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    /// Progress stalled close to the optimum; the best iterate met the
    /// reduced tolerance.
    Inaccurate,
    /// Iteration limit hit; the returned point is the best iterate.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IpmError {
    #[error("inconsistent cone program dimensions")]
    Shape,
    #[error("problem structure does not match the KKT solver: {0}")]
    Structure(String),
    #[error("KKT factorisation failed")]
    Factorization,
    #[error("iterates left the cone interior")]
    Numerical,
}

/// Per-cone Nesterov-Todd scaling `W` with `W z = W⁻¹ s = λ`.
#[derive(Debug, Clone)]
pub struct Scaling {
    /// Orthant part of `W` (diagonal), `sqrt(s / z)`.
    lp: Vec<f64>,
    soc: Vec<SocScaling>,
    nonneg: usize,
}

#[derive(Debug, Clone)]
struct SocScaling {
    q: usize,
    w: Vec<f64>,
    w_inv: Vec<f64>,
    w_inv2: Vec<f64>,
    w2: Vec<f64>,
}

fn matvec(m: &[f64], q: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..q {
        out[i] = dot(&m[i * q..(i + 1) * q], x);
    }
}

fn matmul(a: &[f64], b: &[f64], q: usize) -> Vec<f64> {
    let mut out = vec![0.0; q * q];
    for i in 0..q {
        for k in 0..q {
            let aik = a[i * q + k];
            for j in 0..q {
                out[i * q + j] += aik * b[k * q + j];
            }
        }
    }
    out
}

fn soc_det(x: &[f64]) -> f64 {
    x[0] * x[0] - dot(&x[1..], &x[1..])
}

impl SocScaling {
    fn identity(q: usize) -> Self {
        let mut eye = vec![0.0; q * q];
        for i in 0..q {
            eye[i * q + i] = 1.0;
        }
        Self {
            q,
            w: eye.clone(),
            w_inv: eye.clone(),
            w_inv2: eye.clone(),
            w2: eye,
        }
    }

    fn compute(s: &[f64], z: &[f64]) -> Option<Self> {
        let q = s.len();
        let ds = soc_det(s);
        let dz = soc_det(z);
        if !(ds > 0.0 && dz > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
            return None;
        }
        let (a, b) = (ds.sqrt(), dz.sqrt());
        let sn: Vec<f64> = s.iter().map(|v| v / a).collect();
        let zn: Vec<f64> = z.iter().map(|v| v / b).collect();
        let gamma = ((1.0 + dot(&sn, &zn)) / 2.0).sqrt();
        let mut wb = vec![0.0; q];
        wb[0] = (sn[0] + zn[0]) / (2.0 * gamma);
        for i in 1..q {
            wb[i] = (sn[i] - zn[i]) / (2.0 * gamma);
        }
        let eta = (a / b).sqrt();
        let mut w = vec![0.0; q * q];
        let mut w_inv = vec![0.0; q * q];
        w[0] = wb[0];
        w_inv[0] = wb[0];
        for i in 1..q {
            w[i] = wb[i];
            w[i * q] = wb[i];
            w_inv[i] = -wb[i];
            w_inv[i * q] = -wb[i];
            for j in 1..q {
                let v = wb[i] * wb[j] / (1.0 + wb[0]) + if i == j { 1.0 } else { 0.0 };
                w[i * q + j] = v;
                w_inv[i * q + j] = v;
            }
        }
        w.iter_mut().for_each(|v| *v *= eta);
        w_inv.iter_mut().for_each(|v| *v /= eta);
        let w_inv2 = matmul(&w_inv, &w_inv, q);
        let w2 = matmul(&w, &w, q);
        Some(Self {
            q,
            w,
            w_inv,
            w_inv2,
            w2,
        })
    }
}

#[derive(Clone, Copy)]
enum Op {
    W,
    WInv,
    WInv2,
    W2,
}

impl Scaling {
    pub fn identity(cones: &Cones) -> Self {
        Self {
            lp: vec![1.0; cones.nonneg],
            soc: cones.soc.iter().map(|&q| SocScaling::identity(q)).collect(),
            nonneg: cones.nonneg,
        }
    }

    fn compute(cones: &Cones, s: &[f64], z: &[f64]) -> Option<Self> {
        let mut lp = Vec::with_capacity(cones.nonneg);
        for i in 0..cones.nonneg {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            lp.push((s[i] / z[i]).sqrt());
        }
        let soc = cones
            .soc_ranges()
            .map(|r| SocScaling::compute(&s[r.clone()], &z[r]))
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            lp,
            soc,
            nonneg: cones.nonneg,
        })
    }

    fn apply(&self, op: Op, x: &[f64], out: &mut [f64]) {
        for i in 0..self.nonneg {
            let w = self.lp[i];
            out[i] = match op {
                Op::W => w * x[i],
                Op::WInv => x[i] / w,
                Op::WInv2 => x[i] / (w * w),
                Op::W2 => w * w * x[i],
            };
        }
        let mut off = self.nonneg;
        for sc in &self.soc {
            let m = match op {
                Op::W => &sc.w,
                Op::WInv => &sc.w_inv,
                Op::WInv2 => &sc.w_inv2,
                Op::W2 => &sc.w2,
            };
            matvec(m, sc.q, &x[off..off + sc.q], &mut out[off..off + sc.q]);
            off += sc.q;
        }
    }

    /// Diagonal of `W⁻²` on the orthant rows.
    pub fn lp_inv2(&self, i: usize) -> f64 {
        let w = self.lp[i];
        1.0 / (w * w)
    }

    /// Dense `W⁻²` of second-order cone `k` (row-major `q x q`).
    pub fn soc_inv2(&self, k: usize) -> &[f64] {
        &self.soc[k].w_inv2
    }
}

/// Jordan product `u ∘ v`.
fn jprod(cones: &Cones, u: &[f64], v: &[f64], out: &mut [f64]) {
    for i in 0..cones.nonneg {
        out[i] = u[i] * v[i];
    }
    for r in cones.soc_ranges() {
        let (u, v) = (&u[r.clone()], &v[r.clone()]);
        let o = &mut out[r];
        o[0] = dot(u, v);
        for i in 1..u.len() {
            o[i] = u[0] * v[i] + v[0] * u[i];
        }
    }
}

/// Solves `l ∘ x = r` for `x`.
fn jdiv(cones: &Cones, l: &[f64], r: &[f64], out: &mut [f64]) {
    for i in 0..cones.nonneg {
        out[i] = r[i] / l[i];
    }
    for rg in cones.soc_ranges() {
        let (l, r) = (&l[rg.clone()], &r[rg.clone()]);
        let o = &mut out[rg];
        let det = soc_det(l);
        let x0 = (l[0] * r[0] - dot(&l[1..], &r[1..])) / det;
        o[0] = x0;
        for i in 1..l.len() {
            o[i] = (r[i] - x0 * l[i]) / l[0];
        }
    }
}

fn add_identity(cones: &Cones, x: &mut [f64], alpha: f64) {
    for v in &mut x[..cones.nonneg] {
        *v += alpha;
    }
    for r in cones.soc_ranges() {
        x[r.start] += alpha;
    }
}

/// Largest violation of cone membership: positive means outside.
fn max_violation(cones: &Cones, x: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &v in &x[..cones.nonneg] {
        worst = worst.max(-v);
    }
    for r in cones.soc_ranges() {
        let x = &x[r];
        worst = worst.max(norm(&x[1..]) - x[0]);
    }
    worst
}

/// Largest `α ≥ 0` keeping `x + α d` in the cone (may be infinite).
fn max_step(cones: &Cones, x: &[f64], d: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..cones.nonneg {
        if d[i] < 0.0 {
            alpha = alpha.min(-x[i] / d[i]);
        }
    }
    for r in cones.soc_ranges() {
        let (x, d) = (&x[r.clone()], &d[r]);
        // (x0 + α d0)² - ‖x1 + α d1‖² ≥ 0 with x0 + α d0 ≥ 0
        let qa = soc_det(d);
        let qb = 2.0 * (x[0] * d[0] - dot(&x[1..], &d[1..]));
        let qc = soc_det(x).max(0.0);
        let mut roots = Vec::with_capacity(3);
        if d[0] < 0.0 {
            roots.push(-x[0] / d[0]);
        }
        if qa.abs() < 1e-300 {
            if qb < 0.0 {
                roots.push(-qc / qb);
            }
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                // numerically stable root pair
                let t = -0.5 * (qb + qb.signum() * sq);
                for root in [t / qa, if t != 0.0 { qc / t } else { f64::INFINITY }] {
                    if root > 0.0 {
                        roots.push(root);
                    }
                }
            }
        }
        for root in roots {
            alpha = alpha.min(root);
        }
    }
    alpha
}

/// Factorisation and solution of the reduced Newton system
/// `[H Aᵀ; A 0] [dx; dy] = [r1; r2]` with `H = Gᵀ W⁻² G`.
pub trait KktSolver {
    fn factor(&mut self, prog: &ConeProgram, scaling: &Scaling) -> Result<(), IpmError>;
    fn solve(&mut self, prog: &ConeProgram, r1: &[f64], r2: &[f64], dx: &mut [f64], dy: &mut [f64]);
}

/// Adds `Gᵀ W⁻² G` restricted to the columns selected by `map` into a dense
/// `n x n` buffer. `map` takes a global column to a local one.
pub(crate) fn accumulate_hessian(
    prog: &ConeProgram,
    scaling: &Scaling,
    lp_rows: &[usize],
    socs: &[usize],
    map: impl Fn(usize) -> usize,
    n: usize,
    out: &mut [f64],
) {
    for &i in lp_rows {
        let d = scaling.lp_inv2(i);
        let (c, v) = prog.g.row(i);
        for (&ja, &va) in c.iter().zip(v) {
            let la = map(ja);
            for (&jb, &vb) in c.iter().zip(v) {
                out[la * n + map(jb)] += d * va * vb;
            }
        }
    }
    let starts: Vec<usize> = prog.cones.soc_ranges().map(|r| r.start).collect();
    for &k in socs {
        let q = prog.cones.soc[k];
        let m = scaling.soc_inv2(k);
        let base = starts[k];
        for a in 0..q {
            let (ca, va) = prog.g.row(base + a);
            for b in 0..q {
                let mab = m[a * q + b];
                if mab == 0.0 {
                    continue;
                }
                let (cb, vb) = prog.g.row(base + b);
                for (&ja, &xa) in ca.iter().zip(va) {
                    for (&jb, &xb) in cb.iter().zip(vb) {
                        out[map(ja) * n + map(jb)] += mab * xa * xb;
                    }
                }
            }
        }
    }
}

/// Dense normal-equations KKT solver for small problems.
#[derive(Debug, Default)]
pub struct DenseKkt {
    n: usize,
    p: usize,
    h_chol: Vec<f64>,
    m_chol: Vec<f64>,
}

impl KktSolver for DenseKkt {
    fn factor(&mut self, prog: &ConeProgram, scaling: &Scaling) -> Result<(), IpmError> {
        let n = prog.num_vars();
        let p = prog.a.nrows();
        self.n = n;
        self.p = p;
        let mut h = vec![0.0; n * n];
        let lp_rows: Vec<usize> = (0..prog.cones.nonneg).collect();
        let socs: Vec<usize> = (0..prog.cones.soc.len()).collect();
        accumulate_hessian(prog, scaling, &lp_rows, &socs, |j| j, n, &mut h);
        let scale = (0..n).map(|i| h[i * n + i]).fold(0.0, f64::max).max(1.0);
        for i in 0..n {
            h[i * n + i] += 1e-13 * scale;
        }
        if !cholesky(&mut h, n) {
            return Err(IpmError::Factorization);
        }
        let mut m = vec![0.0; p * p];
        let mut col = vec![0.0; n];
        for j in 0..p {
            col.iter_mut().for_each(|v| *v = 0.0);
            let (c, v) = prog.a.row(j);
            for (&k, &a) in c.iter().zip(v) {
                col[k] = a;
            }
            chol_solve(&h, n, &mut col);
            for i in 0..p {
                let (c, v) = prog.a.row(i);
                m[i * p + j] = c.iter().zip(v).map(|(&k, &a)| a * col[k]).sum();
            }
        }
        if !cholesky(&mut m, p) {
            return Err(IpmError::Factorization);
        }
        self.h_chol = h;
        self.m_chol = m;
        Ok(())
    }

    fn solve(&mut self, prog: &ConeProgram, r1: &[f64], r2: &[f64], dx: &mut [f64], dy: &mut [f64]) {
        let (n, p) = (self.n, self.p);
        let mut t = r1.to_vec();
        chol_solve(&self.h_chol, n, &mut t);
        dy.copy_from_slice(r2);
        dy.iter_mut().for_each(|v| *v = -*v);
        prog.a.mul_add(&t, dy, 1.0);
        chol_solve(&self.m_chol, p, dy);
        dx.copy_from_slice(r1);
        prog.a.tmul_add(dy, dx, -1.0);
        chol_solve(&self.h_chol, n, dx);
    }
}

/// Staircase-structured KKT solver.
///
/// Variables are split into consecutive blocks and equality rows into
/// consecutive row blocks such that row block `r` only touches variable
/// blocks `r` and `r + 1`, and every inequality row and cone touches a single
/// variable block. `H` is then block diagonal and `A H⁻¹ Aᵀ` block
/// tridiagonal, so a factorisation costs time linear in the number of blocks.
#[derive(Debug)]
pub struct BlockKkt {
    var_start: Vec<usize>,
    row_start: Vec<usize>,
    blocks: Vec<VarBlock>,
    /// Per row block: sparse rows restricted to var block `r` and `r + 1`,
    /// column indices local to the block.
    left: Vec<Vec<Vec<(usize, f64)>>>,
    right: Vec<Vec<Vec<(usize, f64)>>>,
    /// Cholesky factors of the pivots of the block tridiagonal `M`.
    l: Vec<Vec<f64>>,
    /// Sub-diagonal blocks of the factor, `rows(r) x rows(r - 1)`.
    c: Vec<Vec<f64>>,
}

#[derive(Debug)]
struct VarBlock {
    lp_rows: Vec<usize>,
    socs: Vec<usize>,
    diagonal: bool,
    inv_diag: Vec<f64>,
    chol: Vec<f64>,
}

impl BlockKkt {
    pub fn new(prog: &ConeProgram, var_sizes: &[usize], row_sizes: &[usize]) -> Result<Self, IpmError> {
        prog.check()?;
        let err = |m: String| Err(IpmError::Structure(m));
        let nb = var_sizes.len();
        if nb < 2 || row_sizes.len() != nb - 1 {
            return err(format!("{nb} variable blocks need {} row blocks", nb.saturating_sub(1)));
        }
        let prefix = |sizes: &[usize]| {
            let mut v = vec![0];
            for &s in sizes {
                v.push(v.last().unwrap() + s);
            }
            v
        };
        let var_start = prefix(var_sizes);
        let row_start = prefix(row_sizes);
        if *var_start.last().unwrap() != prog.num_vars() || *row_start.last().unwrap() != prog.a.nrows() {
            return err("block sizes do not cover the problem".into());
        }
        let block_of = |j: usize| var_start.partition_point(|&s| s <= j) - 1;

        let mut blocks: Vec<VarBlock> = (0..nb)
            .map(|_| VarBlock {
                lp_rows: Vec::new(),
                socs: Vec::new(),
                diagonal: true,
                inv_diag: Vec::new(),
                chol: Vec::new(),
            })
            .collect();
        for i in 0..prog.cones.nonneg {
            let (c, _) = prog.g.row(i);
            let Some(&first) = c.first() else { continue };
            let b = block_of(first);
            if c.iter().any(|&j| block_of(j) != b) {
                return err(format!("inequality row {i} spans several blocks"));
            }
            if c.len() > 1 {
                blocks[b].diagonal = false;
            }
            blocks[b].lp_rows.push(i);
        }
        for (k, r) in prog.cones.soc_ranges().enumerate() {
            let mut owner = None;
            for i in r {
                for &j in prog.g.row(i).0 {
                    let b = block_of(j);
                    if *owner.get_or_insert(b) != b {
                        return err(format!("cone {k} spans several blocks"));
                    }
                }
            }
            if let Some(b) = owner {
                blocks[b].socs.push(k);
                blocks[b].diagonal = false;
            }
        }

        let mut left = Vec::with_capacity(nb - 1);
        let mut right = Vec::with_capacity(nb - 1);
        for r in 0..nb - 1 {
            let mut lrows = Vec::new();
            let mut rrows = Vec::new();
            for i in row_start[r]..row_start[r + 1] {
                let (c, v) = prog.a.row(i);
                let mut lr = Vec::new();
                let mut rr = Vec::new();
                for (&j, &a) in c.iter().zip(v) {
                    match block_of(j) {
                        b if b == r => lr.push((j - var_start[r], a)),
                        b if b == r + 1 => rr.push((j - var_start[r + 1], a)),
                        b => return err(format!("equality row {i} touches block {b} from row block {r}")),
                    }
                }
                lrows.push(lr);
                rrows.push(rr);
            }
            left.push(lrows);
            right.push(rrows);
        }
        Ok(Self {
            var_start,
            row_start,
            blocks,
            left,
            right,
            l: Vec::new(),
            c: Vec::new(),
        })
    }

    fn vsize(&self, b: usize) -> usize {
        self.var_start[b + 1] - self.var_start[b]
    }

    fn rsize(&self, r: usize) -> usize {
        self.row_start[r + 1] - self.row_start[r]
    }

    /// `x ← H_b⁻¹ x` on a block-local vector.
    fn apply_hinv(&self, b: usize, x: &mut [f64]) {
        let blk = &self.blocks[b];
        if blk.diagonal {
            for (v, d) in x.iter_mut().zip(&blk.inv_diag) {
                *v *= d;
            }
        } else {
            chol_solve(&blk.chol, self.vsize(b), x);
        }
    }

    /// Dense `P Hb⁻¹ Qᵀ` for sparse row sets `P`, `Q` local to block `b`,
    /// accumulated into `out` (`|P| x |Q|`).
    fn cross(&self, b: usize, p: &[Vec<(usize, f64)>], q: &[Vec<(usize, f64)>], out: &mut [f64]) {
        let nq = q.len();
        let mut tmp = vec![0.0; self.vsize(b)];
        for (j, qrow) in q.iter().enumerate() {
            if qrow.is_empty() {
                continue;
            }
            tmp.iter_mut().for_each(|v| *v = 0.0);
            for &(k, a) in qrow {
                tmp[k] = a;
            }
            self.apply_hinv(b, &mut tmp);
            for (i, prow) in p.iter().enumerate() {
                out[i * nq + j] += prow.iter().map(|&(k, a)| a * tmp[k]).sum::<f64>();
            }
        }
    }
}

impl KktSolver for BlockKkt {
    fn factor(&mut self, prog: &ConeProgram, scaling: &Scaling) -> Result<(), IpmError> {
        let nb = self.blocks.len();
        for b in 0..nb {
            let n = self.vsize(b);
            let start = self.var_start[b];
            let blk = &self.blocks[b];
            if blk.diagonal {
                let mut diag = vec![0.0; n];
                for &i in &blk.lp_rows {
                    let d = scaling.lp_inv2(i);
                    let (c, v) = prog.g.row(i);
                    diag[c[0] - start] += d * v[0] * v[0];
                }
                let scale = diag.iter().fold(0.0f64, |m, &v| m.max(v)).max(1.0);
                let mut inv = Vec::with_capacity(n);
                for d in diag {
                    let d = d + 1e-13 * scale;
                    if !(d > 0.0) {
                        return Err(IpmError::Factorization);
                    }
                    inv.push(1.0 / d);
                }
                self.blocks[b].inv_diag = inv;
            } else {
                let mut h = vec![0.0; n * n];
                accumulate_hessian(prog, scaling, &blk.lp_rows, &blk.socs, |j| j - start, n, &mut h);
                let scale = (0..n).map(|i| h[i * n + i]).fold(0.0, f64::max).max(1.0);
                for i in 0..n {
                    h[i * n + i] += 1e-13 * scale;
                }
                if !cholesky(&mut h, n) {
                    return Err(IpmError::Factorization);
                }
                self.blocks[b].chol = h;
            }
        }

        let nr = nb - 1;
        let mut l: Vec<Vec<f64>> = Vec::with_capacity(nr);
        let mut cs: Vec<Vec<f64>> = Vec::with_capacity(nr);
        for r in 0..nr {
            let m = self.rsize(r);
            let mut d = vec![0.0; m * m];
            self.cross(r, &self.left[r], &self.left[r], &mut d);
            self.cross(r + 1, &self.right[r], &self.right[r], &mut d);
            let mut c = Vec::new();
            if r > 0 {
                // M(r, r-1) = E(r-1)ᵀ with E(r-1) = right(r-1) H⁻¹ left(r)ᵀ
                let mp = self.rsize(r - 1);
                let mut e = vec![0.0; mp * m];
                self.cross(r, &self.right[r - 1], &self.left[r], &mut e);
                // C(r) = E(r-1)ᵀ L(r-1)⁻ᵀ, built row by row
                c = vec![0.0; m * mp];
                let mut col = vec![0.0; mp];
                for j in 0..m {
                    for i in 0..mp {
                        col[i] = e[i * m + j];
                    }
                    forward_sub(&l[r - 1], mp, &mut col);
                    c[j * mp..(j + 1) * mp].copy_from_slice(&col);
                }
                for i in 0..m {
                    for j in 0..=i {
                        let v = dot(&c[i * mp..(i + 1) * mp], &c[j * mp..(j + 1) * mp]);
                        d[i * m + j] -= v;
                        if i != j {
                            d[j * m + i] -= v;
                        }
                    }
                }
            }
            let scale = (0..m).map(|i| d[i * m + i]).fold(0.0, f64::max).max(1e-300);
            for i in 0..m {
                d[i * m + i] += 1e-14 * scale;
            }
            if !cholesky(&mut d, m) {
                return Err(IpmError::Factorization);
            }
            l.push(d);
            cs.push(c);
        }
        self.l = l;
        self.c = cs;
        Ok(())
    }

    fn solve(&mut self, prog: &ConeProgram, r1: &[f64], r2: &[f64], dx: &mut [f64], dy: &mut [f64]) {
        let nb = self.blocks.len();
        let mut t = r1.to_vec();
        for b in 0..nb {
            let rg = self.var_start[b]..self.var_start[b + 1];
            self.apply_hinv(b, &mut t[rg]);
        }
        for (o, r) in dy.iter_mut().zip(r2) {
            *o = -r;
        }
        prog.a.mul_add(&t, dy, 1.0);

        let nr = nb - 1;
        for r in 0..nr {
            let rg = self.row_start[r]..self.row_start[r + 1];
            let m = rg.len();
            if r > 0 {
                let prev = self.row_start[r - 1]..self.row_start[r];
                let mp = prev.len();
                let (head, tail) = dy.split_at_mut(rg.start);
                let w_prev = &head[prev];
                for i in 0..m {
                    tail[i] -= dot(&self.c[r][i * mp..(i + 1) * mp], w_prev);
                }
            }
            forward_sub(&self.l[r], m, &mut dy[rg]);
        }
        for r in (0..nr).rev() {
            let rg = self.row_start[r]..self.row_start[r + 1];
            let m = rg.len();
            if r + 1 < nr {
                let next = self.row_start[r + 1]..self.row_start[r + 2];
                let mn = next.len();
                let (head, tail) = dy.split_at_mut(next.start);
                let y_next = &tail[..mn];
                let cn = &self.c[r + 1];
                for i in 0..m {
                    let mut v = 0.0;
                    for k in 0..mn {
                        v += cn[k * m + i] * y_next[k];
                    }
                    head[rg.start + i] -= v;
                }
            }
            backward_sub_t(&self.l[r], m, &mut dy[rg]);
        }

        dx.copy_from_slice(r1);
        prog.a.tmul_add(dy, dx, -1.0);
        for b in 0..nb {
            let rg = self.var_start[b]..self.var_start[b + 1];
            self.apply_hinv(b, &mut dx[rg]);
        }
    }
}

struct Workspace<'a, K: KktSolver> {
    prog: &'a ConeProgram,
    kkt: &'a mut K,
    refine: usize,
}

impl<K: KktSolver> Workspace<'_, K> {
    /// Solves `[0 Aᵀ Gᵀ; A 0 0; G 0 -W²] [dx; dy; dz] = [bx; by; bz]`.
    fn solve3(
        &mut self,
        w: &Scaling,
        bx: &[f64],
        by: &[f64],
        bz: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let prog = self.prog;
        let (n, p, m) = (prog.num_vars(), prog.a.nrows(), prog.g.nrows());
        let mut dx = vec![0.0; n];
        let mut dy = vec![0.0; p];
        let mut dz = vec![0.0; m];
        let mut ex = bx.to_vec();
        let mut ey = by.to_vec();
        let mut ez = bz.to_vec();
        let mut tz = vec![0.0; m];
        for pass in 0..=self.refine {
            // reduced solve of the residual system
            w.apply(Op::WInv2, &ez, &mut tz);
            let mut r1 = ex.clone();
            prog.g.tmul_add(&tz, &mut r1, 1.0);
            let mut cx = vec![0.0; n];
            let mut cy = vec![0.0; p];
            self.kkt.solve(prog, &r1, &ey, &mut cx, &mut cy);
            let mut gz = ez.iter().map(|v| -v).collect::<Vec<_>>();
            prog.g.mul_add(&cx, &mut gz, 1.0);
            let mut cz = vec![0.0; m];
            w.apply(Op::WInv2, &gz, &mut cz);
            for (a, b) in dx.iter_mut().zip(&cx) {
                *a += b;
            }
            for (a, b) in dy.iter_mut().zip(&cy) {
                *a += b;
            }
            for (a, b) in dz.iter_mut().zip(&cz) {
                *a += b;
            }
            if pass == self.refine {
                break;
            }
            ex.copy_from_slice(bx);
            prog.a.tmul_add(&dy, &mut ex, -1.0);
            prog.g.tmul_add(&dz, &mut ex, -1.0);
            ey.copy_from_slice(by);
            prog.a.mul_add(&dx, &mut ey, -1.0);
            ez.copy_from_slice(bz);
            prog.g.mul_add(&dx, &mut ez, -1.0);
            let mut w2dz = vec![0.0; m];
            w.apply(Op::W2, &dz, &mut w2dz);
            for (e, v) in ez.iter_mut().zip(&w2dz) {
                *e += v;
            }
        }
        (dx, dy, dz)
    }
}

/// Best iterate so far, if it meets the reduced tolerance.
fn fallback(best: Option<(f64, IpmSolution)>, settings: &IpmSettings) -> Option<IpmSolution> {
    let (gap, mut sol) = best?;
    (gap <= settings.inaccurate_gaptol).then(|| {
        sol.status = IpmStatus::Inaccurate;
        sol
    })
}

/// Solves a cone program with the given KKT backend.
pub fn solve<K: KktSolver>(prog: &ConeProgram, kkt: &mut K, settings: &IpmSettings) -> Result<IpmSolution, IpmError> {
    prog.check()?;
    let cones = &prog.cones;
    let (n, p, m) = (prog.num_vars(), prog.a.nrows(), prog.g.nrows());
    let mut ws = Workspace {
        prog,
        kkt,
        refine: settings.refine_steps,
    };

    let ident = Scaling::identity(cones);
    ws.kkt.factor(prog, &ident)?;
    let (mut x, _, zh) = ws.solve3(&ident, &vec![0.0; n], &prog.b, &prog.h);
    let mut s: Vec<f64> = zh.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = prog.c.iter().map(|v| -v).collect();
    let (_, mut y, mut z) = ws.solve3(&ident, &neg_c, &vec![0.0; p], &vec![0.0; m]);
    let ts = max_violation(cones, &s);
    if ts >= -1e-8 * norm(&s).max(1.0) {
        add_identity(cones, &mut s, 1.0 + ts);
    }
    let tz = max_violation(cones, &z);
    if tz >= -1e-8 * norm(&z).max(1.0) {
        add_identity(cones, &mut z, 1.0 + tz);
    }

    let res_x0 = norm(&prog.c).max(1.0);
    let res_y0 = norm(&prog.b).max(1.0);
    let res_z0 = norm(&prog.h).max(1.0);
    let degree = cones.degree().max(1) as f64;

    let mut rx = vec![0.0; n];
    let mut ry = vec![0.0; p];
    let mut rz = vec![0.0; m];
    let mut lambda = vec![0.0; m];
    let mut buf = vec![0.0; m];
    let mut buf2 = vec![0.0; m];

    let mut iterations = 0;
    let mut best: Option<(f64, IpmSolution)> = None;
    loop {
        rx.copy_from_slice(&prog.c);
        prog.a.tmul_add(&y, &mut rx, 1.0);
        prog.g.tmul_add(&z, &mut rx, 1.0);
        for (r, b) in ry.iter_mut().zip(&prog.b) {
            *r = -b;
        }
        prog.a.mul_add(&x, &mut ry, 1.0);
        for i in 0..m {
            rz[i] = s[i] - prog.h[i];
        }
        prog.g.mul_add(&x, &mut rz, 1.0);

        let gap = dot(&s, &z);
        let pcost = dot(&prog.c, &x);
        let dcost = -dot(&prog.b, &y) - dot(&prog.h, &z);
        let pres = (norm(&ry) / res_y0).max(norm(&rz) / res_z0);
        let dres = norm(&rx) / res_x0;
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let done = pres <= settings.feastol
            && dres <= settings.feastol
            && (gap <= settings.abstol || relgap <= settings.reltol);
        let snapshot = |status| IpmSolution {
            status,
            x: x.clone(),
            y: y.clone(),
            z: z.clone(),
            s: s.clone(),
            iterations,
            primal_objective: pcost,
            dual_objective: dcost,
            primal_residual: pres,
            dual_residual: dres,
            gap,
        };
        if done {
            return Ok(snapshot(IpmStatus::Optimal));
        }
        // among sufficiently feasible iterates keep the one with least gap
        let merit = relgap.min(gap);
        if pres.max(dres) <= settings.inaccurate_feastol
            && best.as_ref().map_or(true, |(m, _)| merit < *m)
        {
            best = Some((merit, snapshot(IpmStatus::MaxIterations)));
        }
        if iterations >= settings.max_iter {
            return Ok(fallback(best, settings).unwrap_or_else(|| snapshot(IpmStatus::MaxIterations)));
        }
        iterations += 1;

        let Some(w) = Scaling::compute(cones, &s, &z) else {
            return fallback(best, settings).ok_or(IpmError::Numerical);
        };
        w.apply(Op::W, &z, &mut lambda);
        if let Err(e) = ws.kkt.factor(prog, &w) {
            return fallback(best, settings).ok_or(e);
        }

        let neg_rx: Vec<f64> = rx.iter().map(|v| -v).collect();
        let neg_ry: Vec<f64> = ry.iter().map(|v| -v).collect();

        // Direction for complementarity right-hand side `rs`.
        let direction = |ws: &mut Workspace<K>, rs: &[f64]| {
            let mut t = vec![0.0; m];
            jdiv(cones, &lambda, rs, &mut t);
            let mut wt = vec![0.0; m];
            w.apply(Op::W, &t, &mut wt);
            let bz: Vec<f64> = (0..m).map(|i| -rz[i] - wt[i]).collect();
            let (dx, dy, dz) = ws.solve3(&w, &neg_rx, &neg_ry, &bz);
            let mut w2dz = vec![0.0; m];
            w.apply(Op::W2, &dz, &mut w2dz);
            let ds: Vec<f64> = (0..m).map(|i| wt[i] - w2dz[i]).collect();
            (dx, dy, dz, ds)
        };

        // predictor
        jprod(cones, &lambda, &lambda, &mut buf);
        let rs_aff: Vec<f64> = buf.iter().map(|v| -v).collect();
        let (_, _, dz_a, ds_a) = direction(&mut ws, &rs_aff);
        let alpha_a = max_step(cones, &s, &ds_a).min(max_step(cones, &z, &dz_a)).min(1.0);
        let gap_a: f64 = (0..m).map(|i| (s[i] + alpha_a * ds_a[i]) * (z[i] + alpha_a * dz_a[i])).sum();
        let sigma = (gap_a.max(0.0) / gap).powi(3).clamp(0.0, 1.0);
        let mu = gap / degree;

        // corrector
        w.apply(Op::WInv, &ds_a, &mut buf);
        w.apply(Op::W, &dz_a, &mut buf2);
        let mut cross = vec![0.0; m];
        jprod(cones, &buf, &buf2, &mut cross);
        let mut rs: Vec<f64> = (0..m).map(|i| rs_aff[i] - cross[i]).collect();
        add_identity(cones, &mut rs, sigma * mu);
        let (dx, dy, dz, ds) = direction(&mut ws, &rs);

        let alpha = (0.99 * max_step(cones, &s, &ds).min(max_step(cones, &z, &dz))).min(1.0);
        for (a, b) in x.iter_mut().zip(&dx) {
            *a += alpha * b;
        }
        for (a, b) in y.iter_mut().zip(&dy) {
            *a += alpha * b;
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        if !x.iter().chain(&s).chain(&z).all(|v| v.is_finite()) {
            return fallback(best, settings).ok_or(IpmError::Numerical);
        }
    }
}
