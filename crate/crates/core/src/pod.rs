//! Proper orthogonal decomposition by the method of snapshots.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, symmetric_eigen};
use crate::snapshots::InnerProduct;
use crate::store;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-14;

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PodTarget {
    Modes(usize),
    /// Smallest `N` whose discarded energy fraction is at most the tolerance.
    Energy(f64),
    /// Every mode above the numerical rank threshold.
    Rank,
}

/// Orthonormal modes `φ_n` with the eigen-decomposition they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    /// `𝒩 × N`, one mode per column.
    pub vectors: DMatrix<f64>,
    /// `W Φ`, so that projection needs no operator.
    pub weighted: DMatrix<f64>,
    /// All `K` correlation eigenvalues, nonincreasing, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Correlation eigenvectors of the retained modes, `K × N`.
    pub coefficients: DMatrix<f64>,
    /// Numerical rank of the snapshot set.
    pub rank: usize,
}

#[derive(Serialize, Deserialize)]
struct BasisManifest {
    n: usize,
    dofs: usize,
    rank: usize,
    eigenvalues: Vec<f64>,
    captured_energy: f64,
}

/// `C_kk' = (ζ_k, ζ_k') / K`
pub fn correlation_matrix(snapshots: &[DVector<f64>], ip: &InnerProduct) -> Result<DMatrix<f64>> {
    let z = snapshot_matrix(snapshots, ip)?;
    let wz = apply_columns(ip, &z);
    let mut c = gram(&z, &wz);
    let k = snapshots.len() as f64;
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (c[(i, j)] + c[(j, i)]) / k;
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
        c[(i, i)] /= k;
    }
    Ok(c)
}

fn snapshot_matrix(snapshots: &[DVector<f64>], ip: &InnerProduct) -> Result<DMatrix<f64>> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty snapshot set".into()))?;
    let n = first.len();
    if let Some(len) = ip.len() {
        if len != n {
            return Err(Error::DimensionMismatch(format!(
                "snapshots have length {n}, inner product expects {len}"
            )));
        }
    }
    if let Some((k, s)) = snapshots.iter().enumerate().find(|(_, s)| s.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "snapshot {k} has length {}, expected {n}",
            s.len()
        )));
    }
    Ok(DMatrix::from_fn(n, snapshots.len(), |i, k| snapshots[k][i]))
}

fn apply_columns(ip: &InnerProduct, z: &DMatrix<f64>) -> DMatrix<f64> {
    match ip {
        InnerProduct::Mass(m) => m.mul_dense(z),
        InnerProduct::Weights(w) => {
            let mut out = z.clone();
            for mut col in out.column_iter_mut() {
                col.component_mul_assign(w);
            }
            out
        }
        InnerProduct::Euclidean => z.clone(),
    }
}

/// Modes of `snapshots` in the inner product `ip`.
///
/// Each mode is `Z a_n / sqrt(K λ_n)`, with the first nonzero entry of `a_n`
/// made positive, followed by two Gram-Schmidt sweeps in `ip` to remove
/// round-off from nearly degenerate modes.
pub fn pod_basis(snapshots: &[DVector<f64>], ip: &InnerProduct, target: PodTarget) -> Result<ReducedBasis> {
    pod_basis_with_tolerance(snapshots, ip, target, RANK_TOLERANCE)
}

/// [`pod_basis`] with a custom relative eigenvalue cutoff for the rank.
pub fn pod_basis_with_tolerance(
    snapshots: &[DVector<f64>],
    ip: &InnerProduct,
    target: PodTarget,
    rank_tolerance: f64,
) -> Result<ReducedBasis> {
    let z = snapshot_matrix(snapshots, ip)?;
    let c = correlation_matrix(snapshots, ip)?;
    let k = snapshots.len();
    let (mut lambda, mut vecs) = symmetric_eigen(&c)?;
    let top = lambda.first().copied().unwrap_or(0.0).max(0.0);
    for l in lambda.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    let rank = if top > 0.0 {
        lambda.iter().take_while(|&&l| l > rank_tolerance * top).count()
    } else {
        0
    };
    let n = match target {
        PodTarget::Modes(n) => {
            if n > rank {
                return Err(Error::RankExceeded { requested: n, rank });
            }
            n
        }
        PodTarget::Rank => rank,
        PodTarget::Energy(tol) => {
            let total: f64 = lambda.iter().sum();
            let mut tail = total;
            let mut n = 0;
            while n < rank && tail > tol * total {
                tail -= lambda[n];
                n += 1;
            }
            n
        }
    };
    for col in 0..vecs.ncols() {
        let mut c = vecs.column_mut(col);
        if let Some(&first) = c.iter().find(|v| **v != 0.0) {
            if first < 0.0 {
                c.neg_mut();
            }
        }
    }
    let coefficients = vecs.columns(0, n).into_owned();
    let mut vectors = crate::linalg::matmul(&z, &coefficients);
    for (j, mut col) in vectors.column_iter_mut().enumerate() {
        col /= (k as f64 * lambda[j]).sqrt();
    }
    let weighted = orthonormalize(&mut vectors, ip)?;
    Ok(ReducedBasis {
        vectors,
        weighted,
        eigenvalues: lambda,
        coefficients,
        rank,
    })
}

/// Two modified Gram-Schmidt sweeps in `ip`; returns `W Φ`.
fn orthonormalize(v: &mut DMatrix<f64>, ip: &InnerProduct) -> Result<DMatrix<f64>> {
    let n = v.ncols();
    let mut wv = apply_columns(ip, v);
    for _ in 0..2 {
        for j in 0..n {
            for i in 0..j {
                let r = wv.column(i).dot(&v.column(j));
                let (vi, wi) = (v.column(i).into_owned(), wv.column(i).into_owned());
                v.column_mut(j).axpy(-r, &vi, 1.0);
                wv.column_mut(j).axpy(-r, &wi, 1.0);
            }
            let norm = wv.column(j).dot(&v.column(j));
            if !(norm > 0.0) {
                return Err(Error::RankExceeded { requested: n, rank: j });
            }
            let s = norm.sqrt().recip();
            v.column_mut(j).scale_mut(s);
            wv.column_mut(j).scale_mut(s);
        }
    }
    Ok(wv)
}

impl ReducedBasis {
    /// `N`
    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.ncols() == 0
    }

    /// Length of each mode.
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    /// Fraction of snapshot energy captured by the retained modes.
    pub fn captured_energy(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total == 0.0 {
            return 1.0;
        }
        self.eigenvalues[..self.len()].iter().sum::<f64>() / total
    }

    /// `Σ_{k > N} λ_k`
    pub fn tail_energy(&self) -> f64 {
        self.eigenvalues[self.len()..].iter().sum()
    }

    /// Leading `n` modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::RankExceeded {
                requested: n,
                rank: self.len(),
            });
        }
        Ok(Self {
            vectors: self.vectors.columns(0, n).into_owned(),
            weighted: self.weighted.columns(0, n).into_owned(),
            eigenvalues: self.eigenvalues.clone(),
            coefficients: self.coefficients.columns(0, n).into_owned(),
            rank: self.rank,
        })
    }

    /// `Φᵀ W u`
    pub fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "field of length {} for a basis of length {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(self.weighted.tr_mul(u))
    }

    /// `Φ α`
    pub fn lift(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        if alpha.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} modes",
                alpha.len(),
                self.len()
            )));
        }
        Ok(&self.vectors * alpha)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        store::write_matrix(&dir.join("modes.bin"), &self.vectors)?;
        store::write_matrix(&dir.join("weighted_modes.bin"), &self.weighted)?;
        store::write_matrix(&dir.join("eigenvectors.bin"), &self.coefficients)?;
        store::write_json(
            &dir.join("basis.json"),
            &BasisManifest {
                n: self.len(),
                dofs: self.dim(),
                rank: self.rank,
                eigenvalues: self.eigenvalues.clone(),
                captured_energy: self.captured_energy(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: BasisManifest = store::read_json(&dir.join("basis.json"))?;
        let vectors = store::read_matrix(&dir.join("modes.bin"))?;
        let weighted = store::read_matrix(&dir.join("weighted_modes.bin"))?;
        let coefficients = store::read_matrix(&dir.join("eigenvectors.bin"))?;
        if vectors.shape() != (manifest.dofs, manifest.n) || weighted.shape() != vectors.shape() {
            return Err(Error::DimensionMismatch(format!(
                "basis arrays {:?} disagree with manifest ({}, {})",
                vectors.shape(),
                manifest.dofs,
                manifest.n
            )));
        }
        Ok(Self {
            vectors,
            weighted,
            eigenvalues: manifest.eigenvalues,
            coefficients,
            rank: manifest.rank,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_linear, build_space, BcKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_low_rank(n: usize, k: usize, r: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors: Vec<DVector<f64>> = (0..r).map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))).collect();
        (0..k)
            .map(|_| {
                let mut s = DVector::zeros(n);
                for f in &factors {
                    s.axpy(rng.random_range(-1.0..1.0), f, 1.0);
                }
                s
            })
            .collect()
    }

    fn mass_ip() -> InnerProduct {
        let space = build_space(&[(0.0, 1.0), (0.0, 1.0)], &[3, 3], 2, BcKind::NeumannHomogeneous).unwrap();
        InnerProduct::Mass(assemble_linear(&space).mass)
    }

    #[test]
    fn single_snapshot_correlation_and_mode() {
        let ip = InnerProduct::Weights(DVector::from_vec(vec![1.0, 3.0]));
        let z = DVector::from_vec(vec![1.0, 1.0]);
        let c = correlation_matrix(std::slice::from_ref(&z), &ip).unwrap();
        assert_eq!(c[(0, 0)], 4.0);
        let b = pod_basis(std::slice::from_ref(&z), &ip, PodTarget::Modes(1)).unwrap();
        assert!((b.vectors.column(0) - &z / 2.0).norm() < 1e-15);
    }

    #[test]
    fn orthogonal_pair_has_equal_eigenvalues() {
        let ip = InnerProduct::Euclidean;
        let s = vec![DVector::from_vec(vec![3.0, 0.0, 0.0]), DVector::from_vec(vec![0.0, 3.0, 0.0])];
        let c = correlation_matrix(&s, &ip).unwrap();
        assert_eq!(c, DMatrix::from_diagonal_element(2, 2, 4.5));
    }

    #[test]
    fn correlation_matches_double_loop() {
        let ip = mass_ip();
        let s = random_low_rank(49, 5, 5, 3);
        let c = correlation_matrix(&s, &ip).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let direct = ip.dot(&s[i], &s[j]) / 5.0;
                assert!((c[(i, j)] - direct).abs() < 1e-13 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn equal_snapshots_have_rank_one() {
        let z = DVector::from_fn(49, |i, _| (i as f64).sin());
        let b = pod_basis(&vec![z; 4], &mass_ip(), PodTarget::Rank).unwrap();
        assert_eq!(b.rank, 1);
        assert!(b.eigenvalues[1] / b.eigenvalues[0] < 1e-12);
    }

    #[test]
    fn projection_error_equals_eigenvalue_tail() {
        let ip = mass_ip();
        let s = random_low_rank(49, 10, 4, 11);
        let full = pod_basis(&s, &ip, PodTarget::Modes(4)).unwrap();
        for n in 0..=4 {
            let b = full.truncate(n).unwrap();
            let err: f64 = s
                .iter()
                .map(|z| {
                    let r = z - b.lift(&b.project(z).unwrap()).unwrap();
                    ip.dot(&r, &r)
                })
                .sum::<f64>()
                / s.len() as f64;
            let tail: f64 = b.eigenvalues[n..].iter().sum();
            assert!((err - tail).abs() < 1e-10, "N = {n}: {err} vs {tail}");
        }
        assert!(matches!(
            pod_basis(&s, &ip, PodTarget::Modes(5)),
            Err(Error::RankExceeded { requested: 5, rank: 4 })
        ));
    }

    #[test]
    fn eigen_residual_and_orthonormality() {
        let ip = mass_ip();
        let s = random_low_rank(49, 12, 12, 5);
        let b = pod_basis(&s, &ip, PodTarget::Rank).unwrap();
        let c = correlation_matrix(&s, &ip).unwrap();
        for n in 0..b.len() {
            let a = b.coefficients.column(n);
            let r = &c * a - a * b.eigenvalues[n];
            assert!(r.norm() <= 1e-10 * b.eigenvalues[0]);
        }
        let g = b.vectors.tr_mul(&b.weighted);
        assert!((g - DMatrix::identity(b.len(), b.len())).amax() < 1e-8);
        for w in b.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn energy_target_picks_smallest_n() {
        let ip = InnerProduct::Euclidean;
        let s: Vec<_> = (0..3)
            .map(|i| {
                let mut v = DVector::zeros(3);
                v[i] = [10.0, 1.0, 0.1][i];
                v
            })
            .collect();
        let b = pod_basis(&s, &ip, PodTarget::Energy(0.05)).unwrap();
        assert_eq!(b.len(), 1);
        let b = pod_basis(&s, &ip, PodTarget::Energy(1e-3)).unwrap();
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn project_lift_round_trip_and_orthogonal_complement() {
        let ip = mass_ip();
        let s = random_low_rank(49, 6, 3, 8);
        let b = pod_basis(&s, &ip, PodTarget::Modes(3)).unwrap();
        let alpha = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        assert!((b.project(&b.lift(&alpha).unwrap()).unwrap() - &alpha).norm() < 1e-10);
        let x = DVector::from_fn(49, |i, _| (i as f64 * 0.7).cos());
        let perp = &x - b.lift(&b.project(&x).unwrap()).unwrap();
        assert!(b.project(&perp).unwrap().norm() < 1e-10);
        assert!(b.project(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn scaling_snapshots_scales_eigenvalues() {
        let ip = mass_ip();
        let s = random_low_rank(49, 6, 6, 2);
        let scaled: Vec<_> = s.iter().map(|z| z * -3.0).collect();
        let a = pod_basis(&s, &ip, PodTarget::Modes(4)).unwrap();
        let b = pod_basis(&scaled, &ip, PodTarget::Modes(4)).unwrap();
        for n in 0..4 {
            assert!((b.eigenvalues[n] - 9.0 * a.eigenvalues[n]).abs() < 1e-10 * b.eigenvalues[0]);
            let (u, v) = (a.vectors.column(n), b.vectors.column(n));
            assert!((u - v).norm().min((u + v).norm()) < 1e-8);
        }
    }

    #[test]
    fn persistence_round_trip() {
        let ip = mass_ip();
        let b = pod_basis(&random_low_rank(49, 6, 3, 1), &ip, PodTarget::Rank).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        assert_eq!(ReducedBasis::load(dir.path()).unwrap(), b);
    }
}
