//! Finite-dimensional real Lie algebras given by structure constants.
//!
//! An algebra of dimension `d` is stored as the rank-3 tensor `c` with
//! `[e_i, e_j] = sum_k c[i][j][k] e_k`. All operations (bracket, coadjoint
//! action, validation) are dense contractions; dimensions stay small (<= ~20)
//! so no sparsity is attempted.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Tolerance for the antisymmetry and Jacobi validation residuals.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// A Lie algebra over the reals, defined by structure constants.
#[derive(Debug, Clone)]
pub struct LieAlgebraSpec {
    dim: usize,
    basis_names: Vec<String>,
    /// Flat tensor, index `(i * dim + j) * dim + k`.
    c: Vec<f64>,
}

/// Element of the algebra, coordinates in the defining basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgVector {
    pub coords: DVector<f64>,
}

/// Element of the dual, coordinates in the dual basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgCovector {
    pub coords: DVector<f64>,
}

impl AlgVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: DVector::zeros(dim),
        }
    }

    /// `k`-th basis vector.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[k] = 1.0;
        Self { coords: v }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            coords: DVector::from_column_slice(s),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl AlgCovector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: DVector::zeros(dim),
        }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            coords: DVector::from_column_slice(s),
        }
    }

    /// Natural pairing `<mu, v>`.
    pub fn pair(&self, v: &AlgVector) -> f64 {
        self.coords.dot(&v.coords)
    }
}

/// Outcome of the structure-constant validation.
#[derive(Debug, Clone)]
pub struct AlgebraValidation {
    pub antisymmetry_residual: f64,
    pub jacobi_residual: f64,
    pub pass: bool,
}

impl LieAlgebraSpec {
    /// Build from a dense tensor `c[i][j][k]`, flat layout `(i*dim + j)*dim + k`.
    pub fn new(dim: usize, basis_names: Vec<String>, c: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structural("algebra dimension must be positive".into()));
        }
        if basis_names.len() != dim {
            return Err(Error::Structural(format!(
                "expected {dim} basis names, got {}",
                basis_names.len()
            )));
        }
        if c.len() != dim * dim * dim {
            return Err(Error::Structural(format!(
                "structure tensor has {} entries, expected {}",
                c.len(),
                dim * dim * dim
            )));
        }
        Ok(Self { dim, basis_names, c })
    }

    /// Build from the sparse upper-triangular form: entries `(i, j, k, value)`
    /// with `i < j`; the `i > j` part is filled by antisymmetry.
    pub fn from_upper_triangular(
        dim: usize,
        basis_names: Vec<String>,
        entries: &[(usize, usize, usize, f64)],
    ) -> Result<Self> {
        let mut c = vec![0.0; dim * dim * dim];
        let mut seen = std::collections::HashSet::new();
        for &(i, j, k, v) in entries {
            if i >= j {
                return Err(Error::Structural(format!(
                    "bracket record requires i < j, got ({i}, {j})"
                )));
            }
            if j >= dim || k >= dim {
                return Err(Error::Structural(format!(
                    "bracket record ({i}, {j}, {k}) out of range for dim {dim}"
                )));
            }
            if !seen.insert((i, j, k)) {
                return Err(Error::Structural(format!(
                    "duplicate bracket term for ({i}, {j}) -> {k}"
                )));
            }
            c[(i * dim + j) * dim + k] = v;
            c[(j * dim + i) * dim + k] = -v;
        }
        Self::new(dim, basis_names, c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis_names(&self) -> &[String] {
        &self.basis_names
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[(i * self.dim + j) * self.dim + k]
    }

    /// `[e_i, e_j]` as a coordinate vector.
    pub fn bracket_basis(&self, i: usize, j: usize) -> DVector<f64> {
        let base = (i * self.dim + j) * self.dim;
        DVector::from_column_slice(&self.c[base..base + self.dim])
    }

    /// Lie bracket `[u, v]`.
    pub fn bracket(&self, u: &AlgVector, v: &AlgVector) -> Result<AlgVector> {
        self.check_dim(u.dim())?;
        self.check_dim(v.dim())?;
        Ok(AlgVector {
            coords: self.bracket_raw(&u.coords, &v.coords),
        })
    }

    /// Bracket on raw coordinate vectors (no allocation beyond the output).
    pub fn bracket_raw(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        let mut out = DVector::zeros(d);
        for i in 0..d {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            for j in 0..d {
                let uv = ui * v[j];
                if uv == 0.0 {
                    continue;
                }
                let base = (i * d + j) * d;
                for k in 0..d {
                    out[k] += uv * self.c[base + k];
                }
            }
        }
        out
    }

    /// Coadjoint action: `<ad_star(v, mu), w> = <mu, [v, w]>` for all `w`.
    pub fn ad_star(&self, v: &AlgVector, mu: &AlgCovector) -> Result<AlgCovector> {
        self.check_dim(v.dim())?;
        self.check_dim(mu.coords.len())?;
        let d = self.dim;
        let mut out = DVector::zeros(d);
        // out_k = sum_{i,m} v_i c[i][k][m] mu_m
        for i in 0..d {
            let vi = v.coords[i];
            if vi == 0.0 {
                continue;
            }
            for k in 0..d {
                let base = (i * d + k) * d;
                let mut acc = 0.0;
                for m in 0..d {
                    acc += self.c[base + m] * mu.coords[m];
                }
                out[k] += vi * acc;
            }
        }
        Ok(AlgCovector { coords: out })
    }

    /// The matrix of `ad_u = [u, .]`.
    pub fn ad_matrix(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let col = self.bracket_raw(u, &DVector::from_fn(d, |r, _| if r == j { 1.0 } else { 0.0 }));
            m.set_column(j, &col);
        }
        m
    }

    /// Check antisymmetry and the Jacobi identity on the structure tensor.
    pub fn validate(&self) -> AlgebraValidation {
        let d = self.dim;
        let mut anti: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let r = (self.structure_constant(i, j, k) + self.structure_constant(j, i, k)).abs();
                    anti = anti.max(r);
                }
            }
        }
        // [e_i, [e_j, e_k]] + cyclic, component m:
        //   sum_l c[j][k][l] c[i][l][m] + cyclic(i, j, k)
        let mut jac: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for m in 0..d {
                        let mut s = 0.0;
                        for l in 0..d {
                            s += self.structure_constant(j, k, l) * self.structure_constant(i, l, m);
                            s += self.structure_constant(k, i, l) * self.structure_constant(j, l, m);
                            s += self.structure_constant(i, j, l) * self.structure_constant(k, l, m);
                        }
                        jac = jac.max(s.abs());
                    }
                }
            }
        }
        AlgebraValidation {
            antisymmetry_residual: anti,
            jacobi_residual: jac,
            pass: anti <= STRUCTURE_TOL && jac <= STRUCTURE_TOL,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            Err(Error::Dimension {
                expected: self.dim,
                got,
            })
        } else {
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Standard algebras used by the shipped scenarios and tests.
// ---------------------------------------------------------------------------

/// Heisenberg algebra h3: `[X, Y] = Z`.
pub fn heisenberg() -> LieAlgebraSpec {
    LieAlgebraSpec::from_upper_triangular(
        3,
        vec!["X".into(), "Y".into(), "Z".into()],
        &[(0, 1, 2, 1.0)],
    )
    .expect("h3 is well formed")
}

/// so(3) with `c[i][j][k] = epsilon_{ijk}`.
pub fn so3() -> LieAlgebraSpec {
    LieAlgebraSpec::from_upper_triangular(
        3,
        vec!["e1".into(), "e2".into(), "e3".into()],
        &[(0, 1, 2, 1.0), (1, 2, 0, 1.0), (0, 2, 1, -1.0)],
    )
    .expect("so3 is well formed")
}

/// se(2): `[J, P1] = P2`, `[J, P2] = -P1`, translations commute.
pub fn se2() -> LieAlgebraSpec {
    LieAlgebraSpec::from_upper_triangular(
        3,
        vec!["J".into(), "P1".into(), "P2".into()],
        &[(0, 1, 2, 1.0), (0, 2, 1, -1.0)],
    )
    .expect("se2 is well formed")
}

/// Strictly upper triangular 4x4 matrices (dimension 6), basis ordered by
/// the lower central series: E12, E23, E34 | E13, E24 | E14.
pub fn upper_triangular_4() -> LieAlgebraSpec {
    LieAlgebraSpec::from_upper_triangular(
        6,
        vec![
            "E12".into(),
            "E23".into(),
            "E34".into(),
            "E13".into(),
            "E24".into(),
            "E14".into(),
        ],
        &[
            (0, 1, 3, 1.0),  // [E12, E23] = E13
            (1, 2, 4, 1.0),  // [E23, E34] = E24
            (0, 4, 5, 1.0),  // [E12, E24] = E14
            (2, 3, 5, -1.0), // [E34, E13] = -E14
        ],
    )
    .expect("ut4 is well formed")
}

/// Filiform nilpotent algebra of dimension 4: `[e1, e2] = e3`, `[e1, e3] = e4`.
pub fn filiform_4() -> LieAlgebraSpec {
    LieAlgebraSpec::from_upper_triangular(
        4,
        vec!["e1".into(), "e2".into(), "e3".into(), "e4".into()],
        &[(0, 1, 2, 1.0), (0, 2, 3, 1.0)],
    )
    .expect("l4 is well formed")
}

/// Abelian algebra of the given dimension.
pub fn abelian(dim: usize, prefix: &str) -> LieAlgebraSpec {
    let names = (0..dim).map(|i| format!("{prefix}{i}")).collect();
    LieAlgebraSpec::new(dim, names, vec![0.0; dim * dim * dim]).expect("abelian is well formed")
}

/// Direct product so(3) x R^2 (dimension 5).
pub fn so3_x_r2() -> LieAlgebraSpec {
    LieAlgebraSpec::from_upper_triangular(
        5,
        vec![
            "e1".into(),
            "e2".into(),
            "e3".into(),
            "t1".into(),
            "t2".into(),
        ],
        &[(0, 1, 2, 1.0), (1, 2, 0, 1.0), (0, 2, 1, -1.0)],
    )
    .expect("so3 x r2 is well formed")
}

// ---------------------------------------------------------------------------
// Algebra input files.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct AlgebraFile {
    dim: usize,
    basis: Vec<String>,
    #[serde(default)]
    brackets: Vec<BracketRecord>,
}

#[derive(Deserialize)]
struct BracketRecord {
    i: usize,
    j: usize,
    terms: Vec<BracketTerm>,
}

#[derive(Deserialize)]
struct BracketTerm {
    k: usize,
    c: f64,
}

/// Parse an algebra from its TOML document.
///
/// Grammar: `dim`, `basis` (list of names), `brackets` (list of records
/// `{ i, j, terms = [{ k, c }] }` with `i < j`). Duplicate `(i, j)` records
/// and duplicate `k` terms within a record are rejected; the `i > j` half of
/// the tensor is filled by antisymmetry.
pub fn parse_algebra(text: &str) -> Result<LieAlgebraSpec> {
    let file: AlgebraFile =
        toml::from_str(text).map_err(|e| Error::Parse(format!("algebra file: {e}")))?;
    let mut pairs = std::collections::HashSet::new();
    let mut entries = Vec::new();
    for rec in &file.brackets {
        if !pairs.insert((rec.i, rec.j)) {
            return Err(Error::Parse(format!(
                "duplicate bracket record for pair ({}, {})",
                rec.i, rec.j
            )));
        }
        for term in &rec.terms {
            entries.push((rec.i, rec.j, term.k, term.c));
        }
    }
    LieAlgebraSpec::from_upper_triangular(file.dim, file.basis, &entries)
        .map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h3_validates_exactly() {
        let rep = heisenberg().validate();
        assert_eq!(rep.antisymmetry_residual, 0.0);
        assert_eq!(rep.jacobi_residual, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn so3_validates() {
        assert!(so3().validate().pass);
        assert!(se2().validate().pass);
        assert!(upper_triangular_4().validate().pass);
        assert!(filiform_4().validate().pass);
        assert!(so3_x_r2().validate().pass);
    }

    #[test]
    fn antisymmetry_violation_detected() {
        let idx = |i: usize, j: usize, k: usize| (i * 3 + j) * 3 + k;
        let mut c = vec![0.0; 27];
        c[idx(0, 1, 2)] = 1.0;
        c[idx(1, 0, 2)] = 1.0; // violates c[i][j][k] = -c[j][i][k]
        let alg = LieAlgebraSpec::new(3, vec!["a".into(), "b".into(), "c".into()], c).unwrap();
        let rep = alg.validate();
        assert!(rep.antisymmetry_residual > 1e-12);
        assert!(!rep.pass);
    }

    #[test]
    fn h3_defining_relation() {
        let alg = heisenberg();
        let x = AlgVector::basis(3, 0);
        let y = AlgVector::basis(3, 1);
        let z = alg.bracket(&x, &y).unwrap();
        assert_eq!(z.coords.as_slice(), &[0.0, 0.0, 1.0]);
        // [u, u] = 0
        let u = AlgVector::from_slice(&[0.3, -1.2, 0.7]);
        let uu = alg.bracket(&u, &u).unwrap();
        assert_eq!(uu.coords.norm(), 0.0);
    }

    #[test]
    fn se2_hand_contraction() {
        // [J, P1 + P2] = P2 - P1
        let alg = se2();
        let j = AlgVector::basis(3, 0);
        let p12 = AlgVector::from_slice(&[0.0, 1.0, 1.0]);
        let out = alg.bracket(&j, &p12).unwrap();
        assert_eq!(out.coords.as_slice(), &[0.0, -1.0, 1.0]);
    }

    #[test]
    fn ad_star_abelian_is_zero() {
        let alg = abelian(4, "a");
        let v = AlgVector::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let mu = AlgCovector::from_slice(&[4.0, 3.0, 2.0, 1.0]);
        let out = alg.ad_star(&v, &mu).unwrap();
        assert_eq!(out.coords.norm(), 0.0);
    }

    #[test]
    fn ad_star_so3_component() {
        // <ad_star(e1, e2*), e3> = <e2*, [e1, e3]> = -1
        let alg = so3();
        let v = AlgVector::basis(3, 0);
        let mu = AlgCovector::from_slice(&[0.0, 1.0, 0.0]);
        let out = alg.ad_star(&v, &mu).unwrap();
        assert_eq!(out.coords[2], -1.0);
    }

    #[test]
    fn ad_star_duality_random_triples() {
        let alg = so3();
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            // xorshift, deterministic across runs
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..100 {
            let v = AlgVector::from_slice(&[next(), next(), next()]);
            let w = AlgVector::from_slice(&[next(), next(), next()]);
            let mu = AlgCovector::from_slice(&[next(), next(), next()]);
            let lhs = alg.ad_star(&v, &mu).unwrap().pair(&w);
            let rhs = mu.pair(&alg.bracket(&v, &w).unwrap());
            assert!((lhs - rhs).abs() <= 1e-14);
        }
    }

    #[test]
    fn jacobi_on_random_vectors() {
        let alg = upper_triangular_4();
        let d = alg.dim();
        let mut x = 1.0f64;
        let mut next = move || {
            x = (x * 16807.0) % 2147483647.0;
            x / 2147483647.0 * 2.0 - 1.0
        };
        for _ in 0..50 {
            let u = AlgVector::from_slice(&(0..d).map(|_| next()).collect::<Vec<_>>());
            let v = AlgVector::from_slice(&(0..d).map(|_| next()).collect::<Vec<_>>());
            let w = AlgVector::from_slice(&(0..d).map(|_| next()).collect::<Vec<_>>());
            let t1 = alg.bracket(&u, &alg.bracket(&v, &w).unwrap()).unwrap();
            let t2 = alg.bracket(&v, &alg.bracket(&w, &u).unwrap()).unwrap();
            let t3 = alg.bracket(&w, &alg.bracket(&u, &v).unwrap()).unwrap();
            let s = &t1.coords + &t2.coords + &t3.coords;
            let bound = 1e-12 * (u.coords.norm() * v.coords.norm() * w.coords.norm() + 1.0);
            assert!(s.norm() <= bound);
        }
    }

    #[test]
    fn parse_round_trip() {
        let text = r#"
            dim = 3
            basis = ["X", "Y", "Z"]
            [[brackets]]
            i = 0
            j = 1
            terms = [{ k = 2, c = 1.0 }]
        "#;
        let alg = parse_algebra(text).unwrap();
        assert_eq!(alg.dim(), 3);
        assert_eq!(alg.structure_constant(0, 1, 2), 1.0);
        assert_eq!(alg.structure_constant(1, 0, 2), -1.0);
    }

    #[test]
    fn parse_rejects_duplicates_and_bad_order() {
        let dup = r#"
            dim = 2
            basis = ["a", "b"]
            [[brackets]]
            i = 0
            j = 1
            terms = [{ k = 0, c = 1.0 }]
            [[brackets]]
            i = 0
            j = 1
            terms = [{ k = 1, c = 1.0 }]
        "#;
        assert!(parse_algebra(dup).is_err());
        let bad = r#"
            dim = 2
            basis = ["a", "b"]
            [[brackets]]
            i = 1
            j = 0
            terms = [{ k = 0, c = 1.0 }]
        "#;
        assert!(parse_algebra(bad).is_err());
    }
}
