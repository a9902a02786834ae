use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nonlinear::Nonlinearity;
use crate::snapshots::SnapshotTag;

/// For every parameter point, the `L` closest points of the sample (itself
/// first, then by distance, ties to the smaller index).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMap {
    pub sample: Vec<Vec<f64>>,
    pub distances: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl NeighborMap {
    pub fn l(&self) -> usize {
        self.neighbors.first().map_or(0, |n| n.len())
    }

    /// `S_L(µ_j)` as sample indices.
    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }
}

pub fn nearest_parameters(sample: &[Vec<f64>], l: usize) -> Result<NeighborMap> {
    let j_count = sample.len();
    if l == 0 || l > j_count {
        return Err(Error::InvalidParameter(format!("L = {l} must lie in [1, {j_count}]")));
    }
    let distances = DMatrix::from_fn(j_count, j_count, |a, b| {
        sample[a]
            .iter()
            .zip(&sample[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    });
    let neighbors = (0..j_count)
        .map(|j| {
            let mut others: Vec<usize> = (0..j_count).filter(|&o| o != j).collect();
            others.sort_by(|&a, &b| distances[(j, a)].total_cmp(&distances[(j, b)]).then(a.cmp(&b)));
            std::iter::once(j).chain(others).take(l).collect()
        })
        .collect();
    Ok(NeighborMap {
        sample: sample.to_vec(),
        distances,
        neighbors,
    })
}

/// Nonlinear snapshots `ρ_kk' = G(ζ_k, ζ_k')` at quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSnapshotSet {
    pub name: String,
    pub values: Vec<DVector<f64>>,
    /// `(k, k')` of every entry.
    pub pairs: Vec<(usize, usize)>,
}

impl NonlinearSnapshotSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `G(ζ_k, ζ_k') = g(ζ_k') + g'(ζ_k')(ζ_k − ζ_k')` for every snapshot `k` and
/// every `k'` at the same time index whose parameter is one of the `L`
/// nearest to that of `k`. Order: `k` outer, neighbor rank inner. The
/// `k' = k` entry is `g(ζ_k)` evaluated directly.
pub fn taylor_snapshots(
    values: &[DVector<f64>],
    tags: &[SnapshotTag],
    neighbors: &NeighborMap,
    g: &Nonlinearity,
) -> Result<NonlinearSnapshotSet> {
    if values.len() != tags.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} snapshots with {} tags",
            values.len(),
            tags.len()
        )));
    }
    let lookup: std::collections::HashMap<SnapshotTag, usize> = tags.iter().enumerate().map(|(k, t)| (*t, k)).collect();
    let mut out = NonlinearSnapshotSet {
        name: g.name().to_string(),
        values: Vec::with_capacity(values.len() * neighbors.l()),
        pairs: Vec::with_capacity(values.len() * neighbors.l()),
    };
    let check = |v: &DVector<f64>, k: usize, kp: usize| -> Result<()> {
        match v.iter().position(|x| !x.is_finite()) {
            Some(point) => Err(Error::NonFiniteSnapshot { k, k_prime: kp, point }),
            None => Ok(()),
        }
    };
    for (k, tag) in tags.iter().enumerate() {
        if tag.j >= neighbors.sample.len() {
            return Err(Error::DimensionMismatch(format!(
                "snapshot {k} has parameter index {} beyond the sample",
                tag.j
            )));
        }
        let w = &values[k];
        for &jp in neighbors.neighbors(tag.j) {
            let kp = *lookup.get(&SnapshotTag { i: tag.i, j: jp }).ok_or_else(|| {
                Error::DimensionMismatch(format!("no snapshot for (i = {}, j = {jp})", tag.i))
            })?;
            let rho = if kp == k {
                w.map(|x| g.value(x))
            } else {
                let v = &values[kp];
                DVector::from_fn(w.len(), |q, _| g.taylor(w[q], v[q]))
            };
            check(&rho, k, kp)?;
            out.values.push(rho);
            out.pairs.push((k, kp));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn single_neighbor_is_self() {
        let m = nearest_parameters(&pts(&[0.0, 1.0, 3.0]), 1).unwrap();
        for j in 0..3 {
            assert_eq!(m.neighbors(j), &[j]);
        }
    }

    #[test]
    fn closest_point_follows_self() {
        let m = nearest_parameters(&pts(&[0.0, 1.0, 3.0]), 2).unwrap();
        assert_eq!(m.neighbors(2), &[2, 1]);
        assert_eq!(m.neighbors(0), &[0, 1]);
        assert!(nearest_parameters(&pts(&[0.0]), 2).is_err());
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let m = nearest_parameters(&pts(&[1.0, 0.0, 2.0]), 2).unwrap();
        assert_eq!(m.neighbors(0), &[0, 1]);
        let dup = nearest_parameters(&pts(&[0.5, 0.5, 0.5]), 3).unwrap();
        assert_eq!(dup.neighbors(2), &[2, 0, 1]);
    }

    #[test]
    fn matches_brute_force_sort() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..10.0)).collect();
        let m = nearest_parameters(&pts(&s), 5).unwrap();
        for j in 0..s.len() {
            let mut order: Vec<(f64, usize)> = (0..s.len()).map(|o| ((s[o] - s[j]).abs(), o)).collect();
            order.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect: Vec<usize> = order.iter().take(5).map(|p| p.1).collect();
            assert_eq!(m.neighbors(j), expect.as_slice());
        }
    }

    #[test]
    fn hand_evaluated_expansion() {
        let values = vec![DVector::from_element(4, 1.0), DVector::from_element(4, 2.0)];
        let tags = vec![SnapshotTag { i: 1, j: 0 }, SnapshotTag { i: 1, j: 1 }];
        let map = nearest_parameters(&pts(&[0.0, 1.0]), 2).unwrap();
        let set = taylor_snapshots(&values, &tags, &map, &Nonlinearity::power(2)).unwrap();
        assert_eq!(set.pairs, vec![(0, 0), (0, 1), (1, 1), (1, 0)]);
        assert_eq!(set.values[0], DVector::from_element(4, 1.0));
        assert_eq!(set.values[1], DVector::from_element(4, 0.0));
        assert_eq!(set.values[2], DVector::from_element(4, 4.0));
    }

    #[test]
    fn linear_expansion_is_exact() {
        let values = vec![DVector::from_vec(vec![0.1, 0.4]), DVector::from_vec(vec![-2.0, 3.0])];
        let tags = vec![SnapshotTag { i: 1, j: 0 }, SnapshotTag { i: 1, j: 1 }];
        let map = nearest_parameters(&pts(&[0.0, 1.0]), 2).unwrap();
        let g = Nonlinearity::linear(2.0);
        let set = taylor_snapshots(&values, &tags, &map, &g).unwrap();
        for (v, &(k, _)) in set.values.iter().zip(&set.pairs) {
            assert!((v - &values[k] * 2.0).amax() < 1e-14);
        }
    }

    #[test]
    fn non_finite_values_are_reported() {
        let values = vec![DVector::from_vec(vec![0.5, 0.0])];
        let tags = vec![SnapshotTag { i: 1, j: 0 }];
        let map = nearest_parameters(&pts(&[0.0]), 1).unwrap();
        let g = Nonlinearity::new("inv", |u| 1.0 / u, |u| -1.0 / (u * u));
        assert!(matches!(
            taylor_snapshots(&values, &tags, &map, &g),
            Err(Error::NonFiniteSnapshot { k: 0, k_prime: 0, point: 1 })
        ));
    }
}
