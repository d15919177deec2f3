//! Training-subset selection: uniform random subsets, and stratified
//! systematic subsets over k-means strata of location and elevation.

use std::collections::HashMap;

use log::warn;
use rand::seq::index;
use rand::Rng;

use crate::data::SpatialDataset;
use crate::error::{Error, Result};
use crate::rng::seeded;

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    /// Site id to stratum index.
    pub assignment: HashMap<String, usize>,
    /// Cluster centres in standardized `(x, y, elevation)`.
    pub centroids: Vec<[f64; 3]>,
    /// Within-cluster sum of squares in standardized units.
    pub within_ss: f64,
}

impl Strata {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// `id,stratum` rows in dataset order.
    pub fn to_csv(&self, data: &SpatialDataset) -> String {
        let mut s = String::from("id,stratum\n");
        for r in &data.records {
            if let Some(k) = self.of(&r.id) {
                s.push_str(&format!("{},{}\n", r.id, k));
            }
        }
        s
    }
}

/// Each feature centred and scaled to unit variance; constant features are
/// left at zero.
pub fn standardized_features(data: &SpatialDataset) -> Vec<[f64; 3]> {
    let raw: Vec<[f64; 3]> = data.records.iter().map(|r| [r.x, r.y, r.elevation]).collect();
    let n = raw.len() as f64;
    let mut out = raw.clone();
    for f in 0..3 {
        let mean = raw.iter().map(|v| v[f]).sum::<f64>() / n;
        let sd = (raw.iter().map(|v| (v[f] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for (o, v) in out.iter_mut().zip(&raw) {
            o[f] = if sd > 0.0 { (v[f] - mean) / sd } else { 0.0 };
        }
    }
    out
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Within-cluster sum of squares of an assignment.
pub fn within_cluster_ss(points: &[[f64; 3]], labels: &[usize], k: usize) -> f64 {
    let mut sums = vec![[0.0; 3]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for i in 0..3 {
            sums[l][i] += p[i];
        }
    }
    let centers: Vec<[f64; 3]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s.map(|v| v / c as f64) } else { [0.0; 3] })
        .collect();
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum()
}

/// Lloyd iterations from k-means++ seeds. Returns labels, centres and the
/// within-cluster sum of squares.
fn kmeans_once<R: Rng>(points: &[[f64; 3]], k: usize, rng: &mut R) -> (Vec<usize>, Vec<[f64; 3]>, f64) {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)]];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next]);
    }
    let mut labels = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (c, ctr) in centers.iter().enumerate() {
                let d = sq_dist(p, ctr);
                if d < bd {
                    bd = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // An emptied cluster takes the point farthest from its centre.
        for c in 0..k {
            if !labels.contains(&c) {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]]).total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .unwrap_or(0);
                labels[far] = c;
                changed = true;
            }
        }
        for (c, ctr) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64; 3]> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                for i in 0..3 {
                    ctr[i] = members.iter().map(|p| p[i]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let ss = within_cluster_ss(points, &labels, k);
    (labels, centers, ss)
}

/// k-means on standardized `(x, y, elevation)` with restarts; the best
/// within-cluster sum of squares wins.
pub fn make_strata(data: &SpatialDataset, k: usize, seed: u64) -> Result<Strata> {
    if k == 0 || data.len() < k {
        return Err(Error::Validation(format!("cannot form {k} strata from {} sites", data.len())));
    }
    let points = standardized_features(data);
    if points.iter().all(|p| *p == points[0]) && k > 1 {
        return Err(Error::Validation("all sites share location and elevation; strata undefined".into()));
    }
    let mut rng = seeded(seed);
    let mut best: Option<(Vec<usize>, Vec<[f64; 3]>, f64)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = kmeans_once(&points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (labels, centroids, within_ss) = best.expect("at least one restart");
    Ok(Strata {
        assignment: data.records.iter().zip(&labels).map(|(r, &l)| (r.id.clone(), l)).collect(),
        centroids,
        within_ss,
    })
}

/// `round(m · size / total)` corrected by largest remainders so the quotas
/// sum to `m`. Ties go to the earlier stratum.
pub fn largest_remainder_quotas(sizes: &[usize], m: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| m as f64 * s as f64 / total as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = m - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in &order {
        if left == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}

/// Positions `⌊j · size/quota⌋` for `j < quota`.
pub fn systematic_positions(size: usize, quota: usize) -> Vec<usize> {
    if quota == 0 {
        return Vec::new();
    }
    let stride = size as f64 / quota as f64;
    (0..quota).map(|j| ((j as f64 * stride).floor() as usize).min(size - 1)).collect()
}

/// Per stratum, sites sorted by vegetation index (ties by id) are sampled
/// systematically from the first element. Ids are returned in dataset order.
pub fn stratified_subsample(data: &SpatialDataset, strata: &Strata, m: usize) -> Result<Vec<String>> {
    if m > data.len() {
        return Err(Error::Validation(format!("cannot take {m} of {} sites", data.len())));
    }
    let k = strata.k();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, r) in data.records.iter().enumerate() {
        let s = strata.of(&r.id).ok_or_else(|| Error::UnknownId(r.id.clone()))?;
        members
            .get_mut(s)
            .ok_or_else(|| Error::Validation(format!("stratum {s} out of range")))?
            .push(i);
    }
    if m < members.iter().filter(|v| !v.is_empty()).count() {
        warn!("{m} sites cannot cover every stratum; the smallest remainders get none");
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = largest_remainder_quotas(&sizes, m);
    let mut chosen = vec![false; data.len()];
    for (mem, &q) in members.iter_mut().zip(&quotas) {
        mem.sort_by(|&a, &b| {
            let (ra, rb) = (&data.records[a], &data.records[b]);
            ra.vegetation.total_cmp(&rb.vegetation).then_with(|| ra.id.cmp(&rb.id))
        });
        for pos in systematic_positions(mem.len(), q) {
            chosen[mem[pos]] = true;
        }
    }
    Ok(data
        .records
        .iter()
        .zip(&chosen)
        .filter(|(_, &c)| c)
        .map(|(r, _)| r.id.clone())
        .collect())
}

/// `m` ids uniformly without replacement, returned in dataset order.
pub fn random_subsample(data: &SpatialDataset, m: usize, seed: u64) -> Result<Vec<String>> {
    if m > data.len() {
        return Err(Error::Validation(format!("cannot take {m} of {} sites", data.len())));
    }
    let mut rng = seeded(seed);
    let mut picked = index::sample(&mut rng, data.len(), m).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| data.records[i].id.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PlotRecord;

    fn site(id: &str, x: f64, y: f64, elev: f64, veg: f64) -> PlotRecord {
        PlotRecord {
            id: id.into(),
            x,
            y,
            n_total: 10,
            y_hardwood: 3,
            elevation: elev,
            vegetation: veg,
        }
    }

    #[test]
    fn quota_arithmetic() {
        assert_eq!(largest_remainder_quotas(&[40, 35, 25], 25), vec![10, 9, 6]);
        assert_eq!(largest_remainder_quotas(&[5, 5, 5], 15), vec![5, 5, 5]);
        assert_eq!(largest_remainder_quotas(&[10, 10, 10], 2).iter().sum::<usize>(), 2);
    }

    #[test]
    fn systematic_rule() {
        assert_eq!(systematic_positions(10, 5), vec![0, 2, 4, 6, 8]);
        assert_eq!(systematic_positions(7, 3), vec![0, 2, 4]);
        assert_eq!(systematic_positions(4, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn separated_clouds_recovered() {
        let mut recs = Vec::new();
        for (c, (cx, ce)) in [(0.0, 200.0), (100.0, 300.0), (50.0, 500.0)].iter().enumerate() {
            for i in 0..6 {
                recs.push(site(&format!("c{c}_{i}"), cx + i as f64 * 0.1, cx - i as f64 * 0.1, *ce, 0.3));
            }
        }
        let data = SpatialDataset::new(recs, "").unwrap();
        let s = make_strata(&data, 3, 2).unwrap();
        for c in 0..3 {
            let l = s.of(&format!("c{c}_0")).unwrap();
            assert!((0..6).all(|i| s.of(&format!("c{c}_{i}")) == Some(l)));
        }
        let labels: std::collections::HashSet<_> = s.assignment.values().collect();
        assert_eq!(labels.len(), 3);
    }

    #[test]
    fn full_and_empty_subsets() {
        let recs: Vec<_> = (0..8).map(|i| site(&format!("s{i}"), i as f64, (i * 3 % 5) as f64, 300.0 + i as f64, 0.1 * i as f64)).collect();
        let data = SpatialDataset::new(recs, "").unwrap();
        let s = make_strata(&data, 3, 1).unwrap();
        assert_eq!(stratified_subsample(&data, &s, 8).unwrap(), data.ids());
        assert_eq!(random_subsample(&data, 8, 4).unwrap(), data.ids());
        assert!(random_subsample(&data, 0, 4).unwrap().is_empty());
        assert!(random_subsample(&data, 9, 4).is_err());
        let each = make_strata(&data, 8, 1).unwrap();
        let labels: std::collections::HashSet<_> = each.assignment.values().collect();
        assert_eq!(labels.len(), 8);
    }
}
