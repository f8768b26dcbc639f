//! F-topological field theories: a commutative associative algebra V with a
//! distinguished vector α, evaluated as ω_{g,1+n}(v_1…v_n) = α^g · v_1⋯v_n.

use num_traits::{One, Signed, Zero};
use serde::Deserialize;
use thiserror::Error;

use crate::algebra::{parse_rat, to_f64, Mat, Rat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FtftError {
    #[error("unstable type (g, 1+n) = ({0}, 1+{1})")]
    Unstable(u32, usize),
    #[error("the algebra has no unit")]
    MissingUnit,
    #[error("multiplication by α is singular: the F-TFT is not invertible")]
    SingularAlpha,
    #[error("algebra is not semisimple: {0}")]
    NotSemisimple(String),
    #[error("idempotents are irrational; use float mode or supply them")]
    IrrationalIdempotents,
    #[error("exact idempotent search is limited to dimension <= 2 (got {0})")]
    TooLarge(usize),
    #[error("structure constants violate {0}")]
    Invalid(String),
    #[error("spec file: {0}")]
    Parse(String),
}

/// `c[mu][nu][rho]` is the ρ-component of ∂_μ·∂_ν.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraSpec {
    pub dim: usize,
    pub c: Vec<Vec<Vec<Rat>>>,
    pub alpha: Vec<Rat>,
    pub unit: Option<Vec<Rat>>,
    /// Idempotent vectors e_i in the flat basis, if known.
    pub idempotents: Option<Vec<Vec<Rat>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Exact(Vec<Vec<Rat>>),
    Float(Vec<Vec<f64>>),
}

impl AlgebraSpec {
    /// One-dimensional algebra with ∂·∂ = A∂ and α = a∂.
    pub fn rank_one(a_prod: Rat, alpha: Rat) -> AlgebraSpec {
        let unit = if a_prod.is_zero() { None } else { Some(vec![a_prod.recip()]) };
        AlgebraSpec { dim: 1, c: vec![vec![vec![a_prod]]], alpha: vec![alpha], unit, idempotents: None }
    }

    /// Diagonal algebra: idempotent basis ∂_i·∂_j = δ_ij ∂_i.
    pub fn diagonal(alpha: Vec<Rat>) -> AlgebraSpec {
        let n = alpha.len();
        let mut c = vec![vec![vec![Rat::zero(); n]; n]; n];
        for (i, ci) in c.iter_mut().enumerate() {
            ci[i][i] = Rat::one();
        }
        let unit = vec![Rat::one(); n];
        let idem = (0..n).map(|i| (0..n).map(|j| if i == j { Rat::one() } else { Rat::zero() }).collect()).collect();
        AlgebraSpec { dim: n, c, alpha, unit: Some(unit), idempotents: Some(idem) }
    }

    pub fn mul(&self, u: &[Rat], v: &[Rat]) -> Vec<Rat> {
        let n = self.dim;
        let mut out = vec![Rat::zero(); n];
        for (mu, um) in u.iter().enumerate() {
            if um.is_zero() {
                continue;
            }
            for (nu, vn) in v.iter().enumerate() {
                if vn.is_zero() {
                    continue;
                }
                let w = um * vn;
                for (rho, o) in out.iter_mut().enumerate() {
                    let c = &self.c[mu][nu][rho];
                    if !c.is_zero() {
                        *o += c * &w;
                    }
                }
            }
        }
        out
    }

    /// Matrix of multiplication by `u`.
    pub fn mult_matrix(&self, u: &[Rat]) -> Mat {
        let n = self.dim;
        let mut m = Mat::zeros(n, n);
        for nu in 0..n {
            let mut e = vec![Rat::zero(); n];
            e[nu] = Rat::one();
            let col = self.mul(u, &e);
            for (rho, x) in col.into_iter().enumerate() {
                m.set(rho, nu, x);
            }
        }
        m
    }

    pub fn basis(&self, i: usize) -> Vec<Rat> {
        let mut e = vec![Rat::zero(); self.dim];
        e[i] = Rat::one();
        e
    }

    pub fn alpha_pow(&self, g: u32) -> Option<Vec<Rat>> {
        if g == 0 {
            return self.unit.clone();
        }
        let mut w = self.alpha.clone();
        for _ in 1..g {
            w = self.mul(&w, &self.alpha);
        }
        Some(w)
    }

    /// Check commutativity, associativity and, if present, the unit.
    pub fn validate(&self) -> Result<(), FtftError> {
        let n = self.dim;
        if self.c.len() != n || self.c.iter().any(|r| r.len() != n || r.iter().any(|x| x.len() != n)) {
            return Err(FtftError::Invalid("shape of c".into()));
        }
        if self.alpha.len() != n {
            return Err(FtftError::Invalid("length of alpha".into()));
        }
        for mu in 0..n {
            for nu in 0..n {
                if self.c[mu][nu] != self.c[nu][mu] {
                    return Err(FtftError::Invalid("commutativity".into()));
                }
            }
        }
        for mu in 0..n {
            for nu in 0..n {
                for la in 0..n {
                    let (a, b, c) = (self.basis(mu), self.basis(nu), self.basis(la));
                    if self.mul(&self.mul(&a, &b), &c) != self.mul(&a, &self.mul(&b, &c)) {
                        return Err(FtftError::Invalid("associativity".into()));
                    }
                }
            }
        }
        if let Some(u) = &self.unit {
            for mu in 0..n {
                let e = self.basis(mu);
                if self.mul(u, &e) != e {
                    return Err(FtftError::Invalid("unit".into()));
                }
            }
        }
        Ok(())
    }

    /// ω_{g,1+n}(v_1 ⊗ ⋯ ⊗ v_n) = α^g · v_1⋯v_n.
    pub fn evaluate(&self, g: u32, inputs: &[Vec<Rat>]) -> Result<Vec<Rat>, FtftError> {
        if 2 * g as usize + inputs.len() <= 1 {
            return Err(FtftError::Unstable(g, inputs.len()));
        }
        let mut acc: Option<Vec<Rat>> = None;
        for _ in 0..g {
            acc = Some(match acc {
                None => self.alpha.clone(),
                Some(w) => self.mul(&w, &self.alpha),
            });
        }
        for v in inputs {
            acc = Some(match acc {
                None => v.clone(),
                Some(w) => self.mul(&w, v),
            });
        }
        acc.ok_or(FtftError::MissingUnit)
    }

    /// x with α·x = 𝟙.
    pub fn invert_alpha(&self) -> Result<Vec<Rat>, FtftError> {
        let unit = self.unit.as_ref().ok_or(FtftError::MissingUnit)?;
        self.mult_matrix(&self.alpha).solve(unit).map_err(|_| FtftError::SingularAlpha)
    }

    /// Unit found by solving u·∂_ν = ∂_ν, if one exists.
    pub fn find_unit(&self) -> Option<Vec<Rat>> {
        if let Some(u) = &self.unit {
            return Some(u.clone());
        }
        // Stack the n² linear equations Σ_μ u^μ c[μ][ν][ρ] = δ_{νρ} and solve
        // by elimination over the first n independent rows.
        let n = self.dim;
        let mut rows: Vec<(Vec<Rat>, Rat)> = Vec::new();
        for nu in 0..n {
            for rho in 0..n {
                let row: Vec<Rat> = (0..n).map(|mu| self.c[mu][nu][rho].clone()).collect();
                let rhs = if nu == rho { Rat::one() } else { Rat::zero() };
                rows.push((row, rhs));
            }
        }
        let sol = solve_least(&rows, n)?;
        let cand = sol;
        for mu in 0..n {
            let e = self.basis(mu);
            if self.mul(&cand, &e) != e {
                return None;
            }
        }
        Some(cand)
    }

    /// Idempotent frame: exact for dim ≤ 2 or when idempotents are supplied,
    /// floating point otherwise.
    pub fn semisimple_frame(&self, float: bool) -> Result<Frame, FtftError> {
        if let Some(idem) = &self.idempotents {
            self.check_idempotents(idem)?;
            return Ok(Frame::Exact(idem.clone()));
        }
        if float {
            return self.float_frame().map(Frame::Float);
        }
        match self.dim {
            1 => {
                let a = &self.c[0][0][0];
                if a.is_zero() {
                    Err(FtftError::NotSemisimple("∂·∂ = 0".into()))
                } else {
                    Ok(Frame::Exact(vec![vec![a.recip()]]))
                }
            }
            2 => self.exact_frame_2().map(Frame::Exact),
            d => Err(FtftError::TooLarge(d)),
        }
    }

    fn check_idempotents(&self, idem: &[Vec<Rat>]) -> Result<(), FtftError> {
        for (i, ei) in idem.iter().enumerate() {
            for (j, ej) in idem.iter().enumerate() {
                let p = self.mul(ei, ej);
                let expect = if i == j { ei.clone() } else { vec![Rat::zero(); self.dim] };
                if p != expect {
                    return Err(FtftError::Invalid(format!("supplied idempotents e{i}·e{j}")));
                }
            }
        }
        Ok(())
    }

    fn exact_frame_2(&self) -> Result<Vec<Vec<Rat>>, FtftError> {
        if self.find_unit().is_none() {
            return Err(FtftError::NotSemisimple("no unit".into()));
        }
        // A generic element separates the idempotents; try a few.
        let mut last = FtftError::NotSemisimple("repeated eigenvalues".into());
        for (a, b) in [(0i64, 1i64), (1, 0), (1, 2), (2, 1), (1, 3), (3, -1)] {
            let v = vec![Rat::from_integer(a.into()), Rat::from_integer(b.into())];
            let m = self.mult_matrix(&v);
            let tr = m.get(0, 0) + m.get(1, 1);
            let det = m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0);
            let disc = &tr * &tr - Rat::from_integer(4.into()) * &det;
            if disc.is_zero() {
                continue;
            }
            let s = match rat_sqrt(&disc) {
                Some(s) => s,
                None => {
                    last = FtftError::IrrationalIdempotents;
                    continue;
                }
            };
            let two = Rat::from_integer(2.into());
            let mut frame = Vec::new();
            for lam in [(&tr + &s) / &two, (&tr - &s) / &two] {
                let w = null_vector_2(&m, &lam);
                let ww = self.mul(&w, &w);
                // w·w = κ w for an idempotent direction.
                let k = (0..2).find(|&i| !w[i].is_zero()).map(|i| &ww[i] / &w[i]).unwrap();
                if k.is_zero() || ww != w.iter().map(|x| x * &k).collect::<Vec<_>>() {
                    return Err(FtftError::NotSemisimple("nilpotent direction".into()));
                }
                frame.push(w.iter().map(|x| x / &k).collect());
            }
            self.check_idempotents(&frame)?;
            return Ok(frame);
        }
        Err(last)
    }

    fn float_frame(&self) -> Result<Vec<Vec<f64>>, FtftError> {
        let fc: Vec<Vec<Vec<f64>>> =
            self.c.iter().map(|a| a.iter().map(|b| b.iter().map(to_f64).collect()).collect()).collect();
        float_idempotents(&fc)
    }
}

/// Idempotents of the algebra with structure constants `c[mu][nu][rho]`,
/// ordered by the eigenvalues of a fixed generic multiplication.
pub fn float_idempotents(fc: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>, FtftError> {
    use nalgebra::DMatrix;
    let n = fc.len();
    let coeffs: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * i as f64 + 0.11 * (i * i) as f64).collect();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for nu in 0..n {
        for rho in 0..n {
            m[(rho, nu)] = (0..n).map(|mu| coeffs[mu] * fc[mu][nu][rho]).sum();
        }
    }
    let eig = m
        .clone()
        .eigenvalues()
        .ok_or_else(|| FtftError::NotSemisimple("complex spectrum".into()))?;
    let mut lams: Vec<f64> = eig.iter().copied().collect();
    lams.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in lams.windows(2) {
        if (w[1] - w[0]).abs() < 1e-8 {
            return Err(FtftError::NotSemisimple("repeated eigenvalues".into()));
        }
    }
    let fmul = |u: &[f64], v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for mu in 0..n {
            for nu in 0..n {
                for (rho, o) in out.iter_mut().enumerate() {
                    *o += fc[mu][nu][rho] * u[mu] * v[nu];
                }
            }
        }
        out
    };
    let mut frame = Vec::new();
    for lam in lams {
        let shifted = &m - DMatrix::<f64>::identity(n, n) * lam;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.ok_or_else(|| FtftError::NotSemisimple("svd failed".into()))?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let w: Vec<f64> = (0..n).map(|j| vt[(imin, j)]).collect();
        let ww = fmul(&w, &w);
        let i = (0..n).max_by(|&a, &b| w[a].abs().partial_cmp(&w[b].abs()).unwrap()).unwrap();
        let k = ww[i] / w[i];
        if k.abs() < 1e-10 {
            return Err(FtftError::NotSemisimple("nilpotent direction".into()));
        }
        frame.push(w.iter().map(|x| x / k).collect::<Vec<f64>>());
    }
    for (i, ei) in frame.iter().enumerate() {
        for (j, ej) in frame.iter().enumerate() {
            let p = fmul(ei, ej);
            let res: f64 = (0..n)
                .map(|r| (p[r] - if i == j { ei[r] } else { 0.0 }).abs())
                .fold(0.0, f64::max);
            if res > 1e-10 {
                return Err(FtftError::NotSemisimple(format!("idempotent residual {res:e}")));
            }
        }
    }
    Ok(frame)
}

/// Exact square root of a non-negative rational, if it is a perfect square.
pub fn rat_sqrt(x: &Rat) -> Option<Rat> {
    if x.is_negative() {
        return None;
    }
    let n = x.numer().sqrt();
    let d = x.denom().sqrt();
    if &(&n * &n) == x.numer() && &(&d * &d) == x.denom() {
        Some(Rat::new(n, d))
    } else {
        None
    }
}

fn null_vector_2(m: &Mat, lam: &Rat) -> Vec<Rat> {
    let a = m.get(0, 0) - lam;
    let b = m.get(0, 1).clone();
    let c = m.get(1, 0).clone();
    let d = m.get(1, 1) - lam;
    if !a.is_zero() || !b.is_zero() {
        vec![b, -a]
    } else if !c.is_zero() || !d.is_zero() {
        vec![d, -c]
    } else {
        vec![Rat::one(), Rat::zero()]
    }
}

/// Solve a consistent overdetermined system by Gaussian elimination.
fn solve_least(rows: &[(Vec<Rat>, Rat)], n: usize) -> Option<Vec<Rat>> {
    let mut a: Vec<Vec<Rat>> = rows.iter().map(|(r, b)| r.iter().cloned().chain([b.clone()]).collect()).collect();
    let mut piv_cols = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let p = (row..a.len()).find(|&r| !a[r][col].is_zero())?;
        a.swap(row, p);
        let inv = a[row][col].recip();
        for x in a[row].iter_mut() {
            *x *= &inv;
        }
        for r in 0..a.len() {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..=n {
                    let v = &a[row][j] * &f;
                    a[r][j] -= v;
                }
            }
        }
        piv_cols.push(col);
        row += 1;
    }
    if a[row..].iter().any(|r| !r[n].is_zero()) {
        return None;
    }
    Some((0..n).map(|i| a[i][n].clone()).collect())
}

#[derive(Deserialize)]
struct SpecToml {
    dim: usize,
    c: Vec<Vec<Vec<toml::Value>>>,
    alpha: Vec<toml::Value>,
    unit: Option<Vec<toml::Value>>,
    idempotents: Option<Vec<Vec<toml::Value>>>,
}

pub fn toml_rat(v: &toml::Value) -> Result<Rat, FtftError> {
    match v {
        toml::Value::Integer(i) => Ok(Rat::from_integer((*i).into())),
        toml::Value::String(s) => parse_rat(s).map_err(|e| FtftError::Parse(e.to_string())),
        other => Err(FtftError::Parse(format!("expected integer or \"p/q\" string, got {other}"))),
    }
}

impl AlgebraSpec {
    /// TOML keys: `dim`, `c = [[[...]]]` indexed `c[mu][nu][rho]`, `alpha`,
    /// optional `unit` and `idempotents`. Entries are integers or "p/q".
    pub fn from_toml(text: &str) -> Result<AlgebraSpec, FtftError> {
        let raw: SpecToml = toml::from_str(text).map_err(|e| FtftError::Parse(e.to_string()))?;
        let vec = |v: &[toml::Value]| v.iter().map(toml_rat).collect::<Result<Vec<_>, _>>();
        let c = raw
            .c
            .iter()
            .map(|a| a.iter().map(|b| vec(b)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let spec = AlgebraSpec {
            dim: raw.dim,
            c,
            alpha: vec(&raw.alpha)?,
            unit: raw.unit.as_deref().map(vec).transpose()?,
            idempotents: raw
                .idempotents
                .as_ref()
                .map(|rows| rows.iter().map(|r| vec(r)).collect::<Result<Vec<_>, _>>())
                .transpose()?,
        };
        spec.validate()?;
        Ok(spec)
    }
}
