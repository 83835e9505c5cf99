use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One agglomeration step. Leaves are `0..n`; the cluster formed by merge `m`
/// has id `n + m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    /// Group index per leaf after undoing all but the first `n - k` merges.
    /// Groups are numbered by their lowest leaf index.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.n_leaves();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("cannot cut {n} leaves into {k} groups")));
        }
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (m, merge) in self.merges.iter().take(n - k).enumerate() {
            let id = n + m;
            let ra = find(&mut parent, merge.a);
            let rb = find(&mut parent, merge.b);
            parent[ra] = id;
            parent[rb] = id;
        }
        let mut group_of_root = std::collections::HashMap::new();
        let mut groups = Vec::with_capacity(n);
        for leaf in 0..n {
            let root = find(&mut parent, leaf);
            let next = group_of_root.len();
            groups.push(*group_of_root.entry(root).or_insert(next));
        }
        Ok(groups)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub dendrogram: Dendrogram,
    pub k: usize,
    pub groups: Vec<usize>,
}

/// Complete-linkage agglomerative clustering of the rows of `loadings` under
/// Euclidean distance. Equal-height candidates are ordered by the smallest
/// entity label each cluster contains.
pub fn cluster_entities(loadings: &DMatrix<f64>, labels: &[String], k: usize) -> Result<Clustering> {
    let n = loadings.nrows();
    if labels.len() != n {
        return Err(Error::LabelCount {
            what: "entity labels",
            found: labels.len(),
            expected: n,
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k must satisfy 1 <= k <= n = {n}, got {k}"
        )));
    }
    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (loadings.row(i) - loadings.row(j)).norm();
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }

    // Active clusters: (id, sort key, size), indexed by slot into `dist`.
    let mut active: Vec<Option<(usize, (String, usize), usize)>> = (0..n)
        .map(|i| Some((i, (labels[i].clone(), i), 1)))
        .collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for m in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for p in 0..n {
            let Some((_, kp, _)) = &active[p] else { continue };
            for q in (p + 1)..n {
                let Some((_, kq, _)) = &active[q] else { continue };
                let (lo, hi) = if kp <= kq { (p, q) } else { (q, p) };
                let d = dist[(p, q)];
                let better = match best {
                    None => true,
                    Some((bd, bp, bq)) => {
                        let key = |s: usize| &active[s].as_ref().unwrap().1;
                        d < bd || (d == bd && (key(lo), key(hi)) < (key(bp), key(bq)))
                    }
                };
                if better {
                    best = Some((d, lo, hi));
                }
            }
        }
        let (height, lo, hi) = best.expect("at least two active clusters");
        let (id_a, key_a, size_a) = active[lo].take().unwrap();
        let (id_b, key_b, size_b) = active[hi].take().unwrap();
        for s in 0..n {
            if active[s].is_some() {
                let d = dist[(lo, s)].max(dist[(hi, s)]);
                dist[(lo, s)] = d;
                dist[(s, lo)] = d;
            }
        }
        merges.push(Merge {
            a: id_a,
            b: id_b,
            height,
            size: size_a + size_b,
        });
        active[lo] = Some((n + m, key_a.min(key_b), size_a + size_b));
    }
    let dendrogram = Dendrogram {
        labels: labels.to_vec(),
        merges,
    };
    let groups = dendrogram.cut(k)?;
    Ok(Clustering { dendrogram, k, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i:02}")).collect()
    }

    #[test]
    fn repeated_rows_merge_first_at_zero() {
        let a = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 0.5, 0.5, 0.0, 1.0, 1.0, 0.0]);
        let c = cluster_entities(&a, &labels(4), 2).unwrap();
        let first = &c.dendrogram.merges[0];
        assert_eq!((first.a, first.b, first.height), (0, 2, 0.0));
        assert_eq!(c.dendrogram.merges.len(), 3);
        assert!(c.dendrogram.merges.windows(2).all(|w| w[0].height <= w[1].height));
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let a = DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64);
        let c = cluster_entities(&a, &labels(5), 5).unwrap();
        assert_eq!(c.groups, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn planted_partition_is_recovered() {
        let centers = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let planted = [0, 1, 2, 0, 1, 2, 2, 1, 0, 0];
        let a = DMatrix::from_fn(10, 3, |i, j| {
            centers[planted[i]][j] + 0.01 * ((i * 7 + j * 3) % 5) as f64
        });
        let c = cluster_entities(&a, &labels(10), 3).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(planted[i] == planted[j], c.groups[i] == c.groups[j]);
            }
        }
        assert_eq!(c.groups[0], 0);
    }

    #[test]
    fn ties_follow_label_order() {
        // three equidistant points: the pair whose labels sort first merges
        let a = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.5, 0.75f64.sqrt()]);
        let names = vec!["zeta".to_string(), "beta".to_string(), "alpha".to_string()];
        let c = cluster_entities(&a, &names, 1).unwrap();
        let first = &c.dendrogram.merges[0];
        assert_eq!((first.a, first.b), (2, 1));
    }

    #[test]
    fn k_out_of_range() {
        let a = DMatrix::zeros(3, 2);
        assert!(cluster_entities(&a, &labels(3), 4).is_err());
        assert!(cluster_entities(&a, &labels(3), 0).is_err());
    }
}
