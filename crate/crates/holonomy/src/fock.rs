//! First-principles oracle in truncated Fock space: builds the optical
//! model's control frames from ladder operators and derives the induced
//! connection `A_i = V†∂_iV` with exact frame derivatives.
//!
//! Both control unitaries have the form `Outer·Inner` where each factor is
//! `exp(r(e^{iθ}P − e^{-iθ}P†))` for a ladder monomial P, and each factor
//! obeys `exp(iθJ) P exp(-iθJ) = e^{iθ}P` for a number-diagonal J. That turns
//! every frame derivative — including the second derivatives feeding the
//! curvature — into products of sparse operators and factor exponentials, so
//! no finite differencing of the frame is needed.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DVector;
use num_complex::Complex64 as C64;

use crate::connection::{ConnectionField, ParamPoint};
use crate::matcore::{antiherm_project, ci, expm_antihermitian, max_norm, CMatrix};
use crate::models;
use crate::{Error, Result};

type CVector = DVector<C64>;

/// Truncated bosonic Fock space, occupation ≤ `cutoff` per mode, basis
/// ordered lexicographically `|ν₁ν₂⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    pub modes: usize,
    pub cutoff: usize,
}

impl FockSpace {
    pub fn new(modes: usize, cutoff: usize) -> Result<FockSpace> {
        if !(1..=2).contains(&modes) {
            return Err(Error::Model("fock space supports 1 or 2 modes".into()));
        }
        if cutoff < 4 {
            return Err(Error::Model("fock cutoff must be at least 4".into()));
        }
        Ok(FockSpace { modes, cutoff })
    }

    pub fn dim(&self) -> usize {
        (self.cutoff + 1).pow(self.modes as u32)
    }

    /// Basis index of an occupation tuple.
    pub fn index(&self, occ: &[usize]) -> usize {
        occ.iter().fold(0, |acc, &v| acc * (self.cutoff + 1) + v)
    }

    /// Occupation tuple of a basis index.
    pub fn occupation(&self, mut idx: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes];
        for k in (0..self.modes).rev() {
            occ[k] = idx % (self.cutoff + 1);
            idx /= self.cutoff + 1;
        }
        occ
    }
}

/// Row-major sparse matrix; the workhorse for ladder monomials.
#[derive(Debug, Clone)]
pub struct SparseOp {
    dim: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseOp {
    pub fn zeros(dim: usize) -> SparseOp {
        SparseOp {
            dim,
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, r: usize, c: usize, v: C64) {
        if v != C64::new(0.0, 0.0) {
            self.rows[r].push((c, v));
        }
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        let mut out = CVector::zeros(self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &(c, val) in row {
                acc += val * v[c];
            }
            out[r] = acc;
        }
        out
    }

    pub fn adjoint(&self) -> SparseOp {
        let mut out = SparseOp::zeros(self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                out.push(c, r, v.conj());
            }
        }
        out
    }

    /// `ca·A + cb·B`.
    pub fn scale_add(a: &SparseOp, ca: C64, b: &SparseOp, cb: C64) -> SparseOp {
        let mut out = SparseOp::zeros(a.dim);
        for (r, row) in a.rows.iter().enumerate() {
            for &(c, v) in row {
                out.push(r, c, ca * v);
            }
        }
        for (r, row) in b.rows.iter().enumerate() {
            for &(c, v) in row {
                out.push(r, c, cb * v);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> SparseOp {
        let mut out = SparseOp::zeros(self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                out.push(r, c, v.scale(s));
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] += v;
            }
        }
        m
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != c {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

struct ExpBlock {
    idx: Vec<usize>,
    q: CMatrix,
    eigs: Vec<f64>,
}

/// Precomputed applier for `exp(G)` with G anti-Hermitian sparse.
///
/// The sparsity graph of a ladder generator splits into conserved-quantity
/// sectors (pair creation conserves n₁−n₂, the beam splitter n₁+n₂, single
/// mode squeezing parity); each connected component is exponentiated densely.
/// Inputs whose largest component is still big fall back to a Lanczos
/// Krylov action.
pub struct ExpOp(ExpKind);

enum ExpKind {
    Blocks(Vec<ExpBlock>),
    Krylov(SparseOp),
}

const BLOCK_LIMIT: usize = 256;

impl ExpOp {
    pub fn new(g: &SparseOp) -> ExpOp {
        let dim = g.dim();
        let mut uf = UnionFind::new(dim);
        for (r, row) in g.rows.iter().enumerate() {
            for &(c, _) in row {
                uf.union(r, c);
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..dim {
            groups.entry(uf.find(i)).or_default().push(i);
        }
        let largest = groups.values().map(|v| v.len()).max().unwrap_or(0);
        if largest > BLOCK_LIMIT && dim > BLOCK_LIMIT {
            return ExpOp(ExpKind::Krylov(g.clone()));
        }
        let mut blocks = Vec::with_capacity(groups.len());
        let mut keys: Vec<usize> = groups.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let idx = groups.remove(&key).unwrap();
            let c = idx.len();
            let pos: HashMap<usize, usize> =
                idx.iter().enumerate().map(|(p, &i)| (i, p)).collect();
            // Hermitian restriction h = −i g on the component.
            let mut h = CMatrix::zeros(c, c);
            for (p, &i) in idx.iter().enumerate() {
                for &(col, v) in &g.rows[i] {
                    h[(p, pos[&col])] += -ci() * v;
                }
            }
            let h = (&h + h.adjoint()).scale(0.5);
            let eig = h.symmetric_eigen();
            blocks.push(ExpBlock {
                idx,
                q: eig.eigenvectors,
                eigs: eig.eigenvalues.iter().copied().collect(),
            });
        }
        ExpOp(ExpKind::Blocks(blocks))
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        match &self.0 {
            ExpKind::Blocks(blocks) => {
                let mut out = CVector::zeros(v.len());
                for b in blocks {
                    let xc = CVector::from_iterator(b.idx.len(), b.idx.iter().map(|&i| v[i]));
                    let y = b.q.adjoint() * xc;
                    let y = CVector::from_iterator(
                        y.len(),
                        y.iter()
                            .zip(&b.eigs)
                            .map(|(z, &l)| z * C64::from_polar(1.0, l)),
                    );
                    let y = &b.q * y;
                    for (p, &i) in b.idx.iter().enumerate() {
                        out[i] = y[p];
                    }
                }
                out
            }
            ExpKind::Krylov(g) => krylov_expm_action(g, v),
        }
    }
}

/// Lanczos action `exp(G)v` for anti-Hermitian sparse G, with full
/// reorthogonalization.
fn krylov_expm_action(g: &SparseOp, v: &CVector) -> CVector {
    let dim = g.dim();
    let beta0 = v.norm();
    if beta0 == 0.0 {
        return v.clone();
    }
    let m_max = dim.min(200);
    let mut qs: Vec<CVector> = vec![v.unscale(beta0)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for j in 0..m_max {
        // H = −iG is Hermitian.
        let mut w = g.apply(&qs[j]).map(|z| z * -ci());
        let alpha = qs[j].dotc(&w).re;
        alphas.push(alpha);
        for q in &qs {
            let c = q.dotc(&w);
            w -= q.map(|z| z * c);
        }
        let beta = w.norm();
        if beta < 1e-14 * (1.0 + alpha.abs()) || j + 1 == m_max {
            break;
        }
        betas.push(beta);
        qs.push(w.unscale(beta));
    }
    let m = alphas.len();
    let mut t = nalgebra::DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        t[(j, j)] = alphas[j];
        if j + 1 < m {
            t[(j, j + 1)] = betas[j];
            t[(j + 1, j)] = betas[j];
        }
    }
    let eig = t.symmetric_eigen();
    // y = Q exp(iΛ) Qᵀ e₁ β₀
    let first = eig.eigenvectors.row(0).transpose();
    let mut y = vec![C64::new(0.0, 0.0); m];
    for (k, yk) in y.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for l in 0..m {
            acc += C64::from_polar(1.0, eig.eigenvalues[l])
                * eig.eigenvectors[(k, l)]
                * first[l];
        }
        *yk = acc * beta0;
    }
    let mut out = CVector::zeros(dim);
    for (k, q) in qs.iter().take(m).enumerate() {
        out += q.map(|z| z * y[k]);
    }
    out
}

/// Truncated ladder operators per mode, dense.
pub struct ModeOps {
    pub a: Vec<CMatrix>,
    pub adag: Vec<CMatrix>,
    pub n: Vec<CMatrix>,
}

/// Maps an occupation tuple to (target occupation, amplitude), or None.
type HopRule<'a> = &'a dyn Fn(&[usize]) -> Option<(Vec<usize>, f64)>;

fn sparse_mode_op(space: &FockSpace, mode: usize, f: HopRule) -> SparseOp {
    let _ = mode;
    let dim = space.dim();
    let mut op = SparseOp::zeros(dim);
    for idx in 0..dim {
        let occ = space.occupation(idx);
        if let Some((target, amp)) = f(&occ) {
            if target.iter().all(|&v| v <= space.cutoff) {
                op.push(space.index(&target), idx, C64::new(amp, 0.0));
            }
        }
    }
    op
}

/// Annihilation operator on `mode` as a sparse matrix.
fn sparse_a(space: &FockSpace, mode: usize) -> SparseOp {
    sparse_mode_op(space, mode, &move |occ| {
        if occ[mode] == 0 {
            return None;
        }
        let mut t = occ.to_vec();
        t[mode] -= 1;
        Some((t, (occ[mode] as f64).sqrt()))
    })
}

/// Standard truncated ladder matrices, `a|ν⟩ = √ν|ν−1⟩`.
pub fn ladder_ops(space: &FockSpace) -> ModeOps {
    let mut a = Vec::new();
    let mut adag = Vec::new();
    let mut n = Vec::new();
    for mode in 0..space.modes {
        let sa = sparse_a(space, mode);
        a.push(sa.to_dense());
        adag.push(sa.adjoint().to_dense());
        let mut nm = CMatrix::zeros(space.dim(), space.dim());
        for idx in 0..space.dim() {
            nm[(idx, idx)] = C64::new(space.occupation(idx)[mode] as f64, 0.0);
        }
        n.push(nm);
    }
    ModeOps { a, adag, n }
}

/// Kerr-style interaction `Σ_k n_k(n_k − 1)` (units where the coupling is 1);
/// the computational states occupy its zero eigenspace.
pub fn interaction_hamiltonian(space: &FockSpace) -> CMatrix {
    let dim = space.dim();
    let mut h = CMatrix::zeros(dim, dim);
    for idx in 0..dim {
        let e: f64 = space
            .occupation(idx)
            .iter()
            .map(|&v| (v * v.saturating_sub(1)) as f64)
            .sum();
        h[(idx, idx)] = C64::new(e, 0.0);
    }
    h
}

/// One control factor `exp(r(e^{iθ}P − e^{-iθ}P†))`, with the number-diagonal
/// rotation generator J satisfying `e^{iθJ} P e^{-iθJ} = e^{iθ}P`.
struct PairGen {
    p: SparseOp,
    pdag: SparseOp,
    j: Vec<f64>,
}

impl PairGen {
    fn new(p: SparseOp, j: Vec<f64>) -> PairGen {
        let pdag = p.adjoint();
        PairGen { p, pdag, j }
    }

    /// `W(θ) = e^{iθ}P − e^{-iθ}P†`; the generator is r·W(θ).
    fn w(&self, theta: f64) -> SparseOp {
        SparseOp::scale_add(
            &self.p,
            C64::from_polar(1.0, theta),
            &self.pdag,
            -C64::from_polar(1.0, -theta),
        )
    }

    /// `∂_θ W(θ) = i e^{iθ}P + i e^{-iθ}P†`.
    fn wprime(&self, theta: f64) -> SparseOp {
        SparseOp::scale_add(
            &self.p,
            ci() * C64::from_polar(1.0, theta),
            &self.pdag,
            ci() * C64::from_polar(1.0, -theta),
        )
    }
}

/// Which optical control model the oracle realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleModel {
    /// `𝒰 = D(λ)S(μ)` on one mode, frame over {|0⟩, |1⟩}.
    SingleQubit,
    /// `𝒰 = N(ξ)M(ζ)` on two modes, frame over {|00⟩,|01⟩,|10⟩,|11⟩}.
    TwoQubit,
}

impl OracleModel {
    pub fn modes(self) -> usize {
        match self {
            OracleModel::SingleQubit => 1,
            OracleModel::TwoQubit => 2,
        }
    }

    pub fn coordinates(self) -> Vec<String> {
        match self {
            OracleModel::SingleQubit => {
                ["r_lambda", "theta_lambda", "r_mu", "theta_mu"]
            }
            OracleModel::TwoQubit => ["r2", "theta2", "r3", "theta3"],
        }
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

/// Largest control amplitude accepted; beyond this, squeezed-state leakage
/// past practical cutoffs is no longer negligible.
pub const AMPLITUDE_BOUND: f64 = 1.2;

/// Exact frame data at a point: columns `𝒰|b⟩` with first and second
/// coordinate derivatives.
struct FrameData {
    v: CMatrix,
    dv: Vec<CMatrix>,
    ddv: Vec<Vec<CMatrix>>,
}

struct OracleCore {
    space: FockSpace,
    inner: PairGen,
    outer: PairGen,
    /// Coordinate indices of (r_inner, θ_inner, r_outer, θ_outer).
    slots: [usize; 4],
    basis: Vec<usize>,
    cache: Mutex<HashMap<Vec<u64>, Arc<FrameData>>>,
}

const CACHE_LIMIT: usize = 192;

fn diag_mul(d: &[f64], v: &CVector) -> CVector {
    CVector::from_iterator(v.len(), v.iter().zip(d).map(|(z, &x)| z * x))
}

impl OracleCore {
    fn new(space: FockSpace, model: OracleModel) -> Result<OracleCore> {
        if space.modes != model.modes() {
            return Err(Error::Model(format!(
                "oracle model needs {} mode(s), space has {}",
                model.modes(),
                space.modes
            )));
        }
        let cutoff = space.cutoff;
        match model {
            OracleModel::TwoQubit => {
                // Inner M(ζ): P = a₁†a₂†, J = (n₁+n₂)/2.
                // Outer N(ξ): P = a₁†a₂, J = (n₁−n₂)/2.
                let dim = space.dim();
                let mut pm = SparseOp::zeros(dim);
                let mut pn = SparseOp::zeros(dim);
                for idx in 0..dim {
                    let occ = space.occupation(idx);
                    let (v1, v2) = (occ[0], occ[1]);
                    if v1 < cutoff && v2 < cutoff {
                        pm.push(
                            space.index(&[v1 + 1, v2 + 1]),
                            idx,
                            C64::new((((v1 + 1) * (v2 + 1)) as f64).sqrt(), 0.0),
                        );
                    }
                    if v1 < cutoff && v2 > 0 {
                        pn.push(
                            space.index(&[v1 + 1, v2 - 1]),
                            idx,
                            C64::new((((v1 + 1) * v2) as f64).sqrt(), 0.0),
                        );
                    }
                }
                let jm: Vec<f64> = (0..dim)
                    .map(|i| {
                        let o = space.occupation(i);
                        (o[0] + o[1]) as f64 / 2.0
                    })
                    .collect();
                let jn: Vec<f64> = (0..dim)
                    .map(|i| {
                        let o = space.occupation(i);
                        (o[0] as f64 - o[1] as f64) / 2.0
                    })
                    .collect();
                let basis = vec![
                    space.index(&[0, 0]),
                    space.index(&[0, 1]),
                    space.index(&[1, 0]),
                    space.index(&[1, 1]),
                ];
                Ok(OracleCore {
                    space,
                    inner: PairGen::new(pm, jm),
                    outer: PairGen::new(pn, jn),
                    slots: [0, 1, 2, 3],
                    basis,
                    cache: Mutex::new(HashMap::new()),
                })
            }
            OracleModel::SingleQubit => {
                // Inner S(μ): P = a†², J = n/2. Outer D(λ): P = a†, J = n.
                let dim = space.dim();
                let mut ps = SparseOp::zeros(dim);
                let mut pd = SparseOp::zeros(dim);
                for v in 0..dim {
                    if v + 2 <= cutoff {
                        ps.push(v + 2, v, C64::new((((v + 1) * (v + 2)) as f64).sqrt(), 0.0));
                    }
                    if v < cutoff {
                        pd.push(v + 1, v, C64::new(((v + 1) as f64).sqrt(), 0.0));
                    }
                }
                let js: Vec<f64> = (0..dim).map(|v| v as f64 / 2.0).collect();
                let jd: Vec<f64> = (0..dim).map(|v| v as f64).collect();
                Ok(OracleCore {
                    space,
                    inner: PairGen::new(ps, js),
                    outer: PairGen::new(pd, jd),
                    // Coordinates are (r_λ, θ_λ, r_μ, θ_μ): λ drives the
                    // outer factor, μ the inner one.
                    slots: [2, 3, 0, 1],
                    basis: vec![0, 1],
                    cache: Mutex::new(HashMap::new()),
                })
            }
        }
    }

    fn check_amplitudes(&self, r_in: f64, r_out: f64) -> Result<()> {
        if r_in.abs() > AMPLITUDE_BOUND || r_out.abs() > AMPLITUDE_BOUND {
            return Err(Error::ParamRange(format!(
                "control amplitude exceeds the safety bound {AMPLITUDE_BOUND}"
            )));
        }
        Ok(())
    }

    /// Compute (or fetch) the exact frame and its derivatives at `p`.
    fn frame(&self, p: &ParamPoint) -> Result<Arc<FrameData>> {
        let key = p.key();
        if let Some(f) = self.cache.lock().unwrap().get(&key) {
            return Ok(f.clone());
        }
        let c = p.coords();
        let [sri, sti, sro, sto] = self.slots;
        let (r_in, t_in, r_out, t_out) = (c[sri], c[sti], c[sro], c[sto]);
        self.check_amplitudes(r_in, r_out)?;

        let w_in = self.inner.w(t_in);
        let w_in_p = self.inner.wprime(t_in);
        let w_out = self.outer.w(t_out);
        let w_out_p = self.outer.wprime(t_out);
        let exp_in = ExpOp::new(&w_in.scaled(r_in));
        let exp_out = ExpOp::new(&w_out.scaled(r_out));
        let j_in = &self.inner.j;
        let j_out = &self.outer.j;

        let dim = self.space.dim();
        let n = self.basis.len();
        let mut v = CMatrix::zeros(dim, n);
        let mut dv_loc: Vec<CMatrix> = (0..4).map(|_| CMatrix::zeros(dim, n)).collect();
        let mut dd_loc: Vec<Vec<CMatrix>> = (0..4)
            .map(|_| (0..4).map(|_| CMatrix::zeros(dim, n)).collect())
            .collect();

        for (col, &b) in self.basis.iter().enumerate() {
            let jb = j_in[b];
            let mut e = CVector::zeros(dim);
            e[b] = C64::new(1.0, 0.0);
            let m = exp_in.apply(&e);
            let u = exp_out.apply(&m);
            // First derivatives of the inner state.
            let dm_r = w_in.apply(&m);
            let dm_t = (diag_mul(j_in, &m) - m.scale(jb)).map(|z| z * ci());
            // First-derivative columns in local order (r_in, θ_in, r_out, θ_out).
            let c_ri = exp_out.apply(&dm_r);
            let c_ti = exp_out.apply(&dm_t);
            let c_ro = w_out.apply(&u);
            let out_jm = exp_out.apply(&diag_mul(j_out, &m));
            let c_to = (diag_mul(j_out, &u) - &out_jm).map(|z| z * ci());
            // Second derivatives.
            let dd_riri = exp_out.apply(&w_in.apply(&dm_r));
            let dd_riti = exp_out.apply(&(w_in_p.apply(&m) + w_in.apply(&dm_t)));
            let dd_titi =
                exp_out.apply(&(diag_mul(j_in, &dm_t) - dm_t.scale(jb)).map(|z| z * ci()));
            let dd_riro = w_out.apply(&c_ri);
            let dd_rito = (diag_mul(j_out, &c_ri)
                - exp_out.apply(&diag_mul(j_out, &dm_r)))
            .map(|z| z * ci());
            let dd_tiro = w_out.apply(&c_ti);
            let dd_tito = (diag_mul(j_out, &c_ti)
                - exp_out.apply(&diag_mul(j_out, &dm_t)))
            .map(|z| z * ci());
            let dd_roro = w_out.apply(&c_ro);
            let dd_roto = w_out_p.apply(&u) + w_out.apply(&c_to);
            // ∂θ²Outer applied to m: iJ(∂θOuter m) − ∂θOuter(J m).
            let dd_toto = diag_mul(j_out, &c_to).map(|z| z * ci())
                + diag_mul(j_out, &out_jm)
                - exp_out.apply(&diag_mul(j_out, &diag_mul(j_out, &m)));

            v.set_column(col, &u);
            let firsts = [c_ri, c_ti, c_ro, c_to];
            for (slot, value) in [sri, sti, sro, sto].iter().zip(&firsts) {
                dv_loc[*slot].set_column(col, value);
            }
            let seconds = [
                (sri, sri, &dd_riri),
                (sri, sti, &dd_riti),
                (sti, sti, &dd_titi),
                (sri, sro, &dd_riro),
                (sri, sto, &dd_rito),
                (sti, sro, &dd_tiro),
                (sti, sto, &dd_tito),
                (sro, sro, &dd_roro),
                (sro, sto, &dd_roto),
                (sto, sto, &dd_toto),
            ];
            for (x, y, value) in seconds {
                dd_loc[x][y].set_column(col, value);
                if x != y {
                    dd_loc[y][x].set_column(col, value);
                }
            }
        }

        let data = Arc::new(FrameData {
            v,
            dv: dv_loc,
            ddv: dd_loc,
        });
        let mut cache = self.cache.lock().unwrap();
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, data.clone());
        Ok(data)
    }

    /// `A_i = V†∂_iV`, with the frame-orthonormality check the spec of the
    /// truncation demands.
    fn coeff(&self, p: &ParamPoint, i: usize) -> Result<CMatrix> {
        let f = self.frame(p)?;
        let n = f.v.ncols();
        let defect = max_norm(&(f.v.adjoint() * &f.v - CMatrix::identity(n, n)));
        if defect > 1e-6 {
            return Err(Error::FrameNotOrthonormal { defect });
        }
        Ok(antiherm_project(&(f.v.adjoint() * &f.dv[i])))
    }

    /// Exact `∂_j A_i = (∂_jV)†(∂_iV) + V†(∂_j∂_iV)`.
    fn partial(&self, p: &ParamPoint, j: usize, i: usize) -> Result<CMatrix> {
        let f = self.frame(p)?;
        Ok(f.dv[j].adjoint() * &f.dv[i] + f.v.adjoint() * &f.ddv[j][i])
    }
}

/// The Wilczek–Zee connection induced on the control frame, with exact
/// analytic partials.
pub fn oracle_connection(space: &FockSpace, model: OracleModel) -> Result<ConnectionField> {
    let core = Arc::new(OracleCore::new(*space, model)?);
    let n = core.basis.len();
    let c1 = core.clone();
    let c2 = core;
    Ok(ConnectionField::new(
        4,
        n,
        model.coordinates(),
        Arc::new(move |p, i| c1.coeff(p, i)),
    )
    .with_partial_hook(Arc::new(move |p, j, i| c2.partial(p, j, i)))
    .with_coeff_accuracy(1e-12))
}

/// Dense control unitary at a parameter point (coordinate order as in
/// [`OracleModel::coordinates`]).
pub fn control_unitary(space: &FockSpace, model: OracleModel, params: &[f64]) -> Result<CMatrix> {
    if params.len() != 4 {
        return Err(Error::ParamRange("expected 4 real control parameters".into()));
    }
    let core = OracleCore::new(*space, model)?;
    let [sri, sti, sro, sto] = core.slots;
    let (r_in, t_in, r_out, t_out) = (params[sri], params[sti], params[sro], params[sto]);
    core.check_amplitudes(r_in, r_out)?;
    let inner = expm_antihermitian(&core.inner.w(t_in).scaled(r_in).to_dense())?;
    let outer = expm_antihermitian(&core.outer.w(t_out).scaled(r_out).to_dense())?;
    Ok(outer * inner)
}

/// One row of the oracle-vs-printed coefficient comparison.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareRow {
    pub coefficient: String,
    pub max_abs_dev: f64,
    pub cutoff: usize,
    pub param_point: Vec<f64>,
}

/// Entrywise deviation of the two-qubit oracle coefficients from the printed
/// analytic ones.
pub fn compare_two_qubit(cutoff: usize, p: &ParamPoint) -> Result<Vec<CompareRow>> {
    let space = FockSpace::new(2, cutoff)?;
    let oracle = oracle_connection(&space, OracleModel::TwoQubit)?;
    let analytic = models::builtin_two_qubit();
    let mut rows = Vec::new();
    for i in 0..4 {
        let a = oracle.coeff(p, i)?;
        let b = analytic.coeff(p, i)?;
        rows.push(CompareRow {
            coefficient: format!("A_{}", analytic.coordinates()[i]),
            max_abs_dev: max_norm(&(a - b)),
            cutoff,
            param_point: p.coords().to_vec(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::fd_partial;
    use crate::holalg::{holonomy_algebra, residual_against, i_identity, ClosureConfig};
    use crate::matcore::{frob_norm, unitarity_defect};
    use approx::assert_abs_diff_eq;

    #[test]
    fn ladder_coefficients() {
        let space = FockSpace::new(1, 5).unwrap();
        let ops = ladder_ops(&space);
        // a|0⟩ = 0
        for r in 0..space.dim() {
            assert_eq!(ops.a[0][(r, 0)], C64::new(0.0, 0.0));
        }
        // n|1⟩ = |1⟩
        assert_eq!(ops.n[0][(1, 1)], C64::new(1.0, 0.0));
        // ⟨2|a†|1⟩ = √2
        assert_abs_diff_eq!(ops.adag[0][(2, 1)].re, 2.0f64.sqrt(), epsilon = 1e-15);
        // [a, a†] = I below the cutoff.
        let comm = &ops.a[0] * &ops.adag[0] - &ops.adag[0] * &ops.a[0];
        for v in 0..space.cutoff {
            assert_abs_diff_eq!(comm[(v, v)].re, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn interaction_hamiltonian_degeneracy() {
        let space = FockSpace::new(1, 6).unwrap();
        let h = interaction_hamiltonian(&space);
        assert_eq!(h[(0, 0)], C64::new(0.0, 0.0));
        assert_eq!(h[(1, 1)], C64::new(0.0, 0.0));
        assert_eq!(h[(2, 2)], C64::new(2.0, 0.0));

        let space2 = FockSpace::new(2, 5).unwrap();
        let h2 = interaction_hamiltonian(&space2);
        let i11 = space2.index(&[1, 1]);
        assert_eq!(h2[(i11, i11)], C64::new(0.0, 0.0));
        let i21 = space2.index(&[2, 1]);
        assert_eq!(h2[(i21, i21)], C64::new(2.0, 0.0));
    }

    #[test]
    fn control_unitary_identity_at_zero() {
        let space = FockSpace::new(2, 8).unwrap();
        let u = control_unitary(&space, OracleModel::TwoQubit, &[0.0; 4]).unwrap();
        assert!(max_norm(&(u - CMatrix::identity(space.dim(), space.dim()))) < 1e-13);
    }

    #[test]
    fn beam_splitter_preserves_photon_number() {
        let space = FockSpace::new(2, 8).unwrap();
        // ξ-only unitary: N(ξ) alone (inner amplitude zero).
        let u = control_unitary(&space, OracleModel::TwoQubit, &[0.0, 0.0, 0.7, 0.4]).unwrap();
        let ops = ladder_ops(&space);
        let ntot = &ops.n[0] + &ops.n[1];
        let comm = &u * &ntot - &ntot * &u;
        assert!(max_norm(&comm) < 1e-10);
    }

    #[test]
    fn two_mode_squeeze_creates_pairs() {
        let space = FockSpace::new(2, 10).unwrap();
        // ζ-only unitary: M(ζ) alone.
        let u = control_unitary(&space, OracleModel::TwoQubit, &[0.6, 0.9, 0.0, 0.0]).unwrap();
        let col = u.column(space.index(&[0, 0]));
        for idx in 0..space.dim() {
            let occ = space.occupation(idx);
            if occ[0] != occ[1] {
                assert!(
                    col[idx].norm() < 1e-13,
                    "M|00⟩ must only populate pair states, found |{}{}⟩",
                    occ[0],
                    occ[1]
                );
            }
        }
    }

    #[test]
    fn frame_columns_are_zero_modes_of_conjugated_hamiltonian() {
        let space = FockSpace::new(2, 16).unwrap();
        let core = OracleCore::new(space, OracleModel::TwoQubit).unwrap();
        let p = ParamPoint::new(vec![0.5, 0.3, 0.4, 0.7]);
        let f = core.frame(&p).unwrap();
        let h = interaction_hamiltonian(&space);
        let u = control_unitary(&space, OracleModel::TwoQubit, p.coords()).unwrap();
        let conj = &u * h * u.adjoint();
        for col in 0..4 {
            let x = f.v.column(col).into_owned();
            let y = &conj * &x;
            assert!(y.norm() < 1e-9, "frame column {col} leaves the zero mode");
        }
        assert!(unitarity_defect(&u) < 1e-12);
    }

    #[test]
    fn exact_partials_match_finite_differences() {
        let space = FockSpace::new(2, 14).unwrap();
        let core = Arc::new(OracleCore::new(space, OracleModel::TwoQubit).unwrap());
        let p = ParamPoint::new(vec![0.45, 0.3, 0.35, 0.8]);
        for j in 0..4 {
            for i in 0..4 {
                let exact = core.partial(&p, j, i).unwrap();
                let cc = core.clone();
                let fd = fd_partial(
                    &move |q: &ParamPoint| cc.coeff(q, i),
                    &p,
                    j,
                    1e-3,
                    crate::connection::FdOrder::Fourth,
                )
                .unwrap();
                let dev = max_norm(&(antiherm_project(&exact) - fd));
                assert!(dev < 1e-8, "∂_{j} A_{i}: exact vs FD dev {dev:.3e}");
            }
        }
    }

    #[test]
    fn oracle_matches_printed_coefficients() {
        let p = ParamPoint::new(vec![0.5, 0.3, 0.4, 0.7]);
        let rows = compare_two_qubit(24, &p).unwrap();
        for row in &rows {
            assert!(
                row.max_abs_dev < 1e-3,
                "{} deviates by {:.3e}",
                row.coefficient,
                row.max_abs_dev
            );
        }
    }

    #[test]
    fn oracle_theta_coefficients_vanish_at_zero_amplitudes() {
        let space = FockSpace::new(2, 12).unwrap();
        let conn = oracle_connection(&space, OracleModel::TwoQubit).unwrap();
        let p = ParamPoint::new(vec![0.0, 0.9, 0.0, -0.6]);
        let a_t2 = conn.coeff(&p, 1).unwrap();
        let a_t3 = conn.coeff(&p, 3).unwrap();
        assert!(max_norm(&a_t2) < 1e-10, "A_θ2 must vanish at r2 = r3 = 0");
        assert!(max_norm(&a_t3) < 1e-10, "A_θ3 must vanish at r2 = r3 = 0");
    }

    fn convergence_ladder(p: &ParamPoint) -> (f64, f64, f64) {
        let coeffs = |cutoff: usize| -> Vec<CMatrix> {
            let space = FockSpace::new(2, cutoff).unwrap();
            let conn = oracle_connection(&space, OracleModel::TwoQubit).unwrap();
            (0..4).map(|i| conn.coeff(p, i).unwrap()).collect()
        };
        let ladder: Vec<Vec<CMatrix>> = [12, 18, 24, 30].iter().map(|&n| coeffs(n)).collect();
        let dev = |a: &Vec<CMatrix>, b: &Vec<CMatrix>| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| max_norm(&(x - y)))
                .fold(0.0, f64::max)
        };
        (
            dev(&ladder[0], &ladder[1]),
            dev(&ladder[1], &ladder[2]),
            dev(&ladder[2], &ladder[3]),
        )
    }

    #[test]
    fn cutoff_convergence_is_monotone() {
        // Worst corner of the test grid: the beam splitter concentrates the
        // squeezed pairs into one mode, so convergence is slowest here.
        let (d12, d18, d24) = convergence_ladder(&ParamPoint::new(vec![0.8, 0.4, 0.8, -0.9]));
        assert!(
            d12 > d18 && d18 > d24,
            "not monotone: {d12:.3e} {d18:.3e} {d24:.3e}"
        );
        // Interior point: converged well past the 1e-6 target by cutoff 24.
        let (e12, e18, e24) = convergence_ladder(&ParamPoint::new(vec![0.5, 0.3, 0.4, 0.7]));
        assert!(e12 > e18 && e18 > e24);
        assert!(e24 < 1e-6, "coefficients not converged: {e24:.3e}");
    }

    #[test]
    fn two_qubit_oracle_closure_structure() {
        let space = FockSpace::new(2, 16).unwrap();
        let conn = oracle_connection(&space, OracleModel::TwoQubit).unwrap();
        let p = ParamPoint::new(vec![0.5, 0.3, 0.4, 0.7]);
        // Rank tolerance sits above the cutoff-truncation bias of the
        // coefficients but far below any genuine new direction (~1e-1).
        let cfg = ClosureConfig {
            rank_tol: 1e-4,
            ..ClosureConfig::default()
        };
        let rep = holonomy_algebra(&conn, &p, &cfg).unwrap();
        assert_eq!(rep.dim(), 7);
        assert_eq!(rep.structure.center_dim, 1);
        assert_eq!(rep.structure.ideal_dims, vec![3, 3]);
        let res = residual_against(&rep.structure.center_basis, &i_identity(4)).unwrap();
        assert!(res < 1e-6, "oracle center residual {res:.3e}");
    }

    #[test]
    fn single_qubit_oracle_closure_is_u2() {
        let space = FockSpace::new(1, 24).unwrap();
        let conn = oracle_connection(&space, OracleModel::SingleQubit).unwrap();
        let p = ParamPoint::new(vec![0.4, 0.3, 0.3, 0.5]);
        let rep = holonomy_algebra(&conn, &p, &ClosureConfig::default()).unwrap();
        assert_eq!(rep.dim(), 4, "single-qubit holonomy algebra must be u(2)");
        assert!(rep.structure.irreducible);
    }

    #[test]
    fn amplitude_bound_enforced() {
        let space = FockSpace::new(2, 12).unwrap();
        let conn = oracle_connection(&space, OracleModel::TwoQubit).unwrap();
        let p = ParamPoint::new(vec![1.3, 0.0, 0.1, 0.0]);
        assert!(matches!(conn.coeff(&p, 0), Err(Error::ParamRange(_))));
    }

    #[test]
    fn krylov_matches_blocks() {
        // Force the Krylov path on an operator the block path also handles.
        let space = FockSpace::new(2, 8).unwrap();
        let core = OracleCore::new(space, OracleModel::TwoQubit).unwrap();
        let g = core.inner.w(0.7).scaled(0.5);
        let blocks = ExpOp::new(&g);
        let mut v = CVector::zeros(space.dim());
        v[space.index(&[1, 1])] = C64::new(0.8, 0.0);
        v[space.index(&[0, 0])] = C64::new(0.0, 0.6);
        let a = blocks.apply(&v);
        let b = krylov_expm_action(&g, &v);
        assert!(frob_norm(&CMatrix::from_column_slice(
            space.dim(),
            1,
            (a - b).as_slice()
        )) < 1e-11);
    }
}
