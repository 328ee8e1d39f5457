use rayon::prelude::*;

use super::kdtree::{dist2, KdTree};
use super::PointCloud;
use crate::error::{PimError, Result};

/// Kernel bandwidth `t` (squared length), either one value or one per point.
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    Global(f64),
    PerPoint(Vec<f64>),
}

impl Bandwidth {
    /// Bandwidth used for rows centered at point `i`.
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Bandwidth::Global(t) => *t,
            Bandwidth::PerPoint(ts) => ts[i],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Bandwidth::Global(t) => *t,
            Bandwidth::PerPoint(ts) => ts.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn is_global(&self) -> bool {
        matches!(self, Bandwidth::Global(_))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Bandwidth::Global(t) if !(*t > 0.0 && t.is_finite()) => {
                Err(PimError::Validation(format!("bandwidth {t} must be positive")))
            }
            Bandwidth::PerPoint(ts) if ts.len() != n => Err(PimError::Dimension {
                what: "per-point bandwidth",
                expected: n,
                got: ts.len(),
            }),
            Bandwidth::PerPoint(ts) => match ts.iter().position(|t| !(*t > 0.0 && t.is_finite())) {
                Some(i) => Err(PimError::Validation(format!(
                    "bandwidth at point {i} is {} (must be positive)",
                    ts[i]
                ))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

/// Distance from every point to its `k_nn`-th nearest other point.
pub fn knn_radii(cloud: &PointCloud, k_nn: usize) -> Result<Vec<f64>> {
    check_knn(cloud, k_nn)?;
    let tree = KdTree::new(cloud.coords(), cloud.dim());
    Ok((0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nn = tree.nearest(cloud.point(i), k_nn, Some(i));
            nn[k_nn - 1].0.sqrt()
        })
        .collect())
}

/// Same as [`knn_radii`] by exhaustive scan.
pub fn knn_radii_brute_force(cloud: &PointCloud, k_nn: usize) -> Result<Vec<f64>> {
    check_knn(cloud, k_nn)?;
    let n = cloud.len();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let xi = cloud.point(i);
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist2(xi, cloud.point(j))).collect();
            d.select_nth_unstable_by(k_nn - 1, f64::total_cmp);
            d[k_nn - 1].sqrt()
        })
        .collect())
}

fn check_knn(cloud: &PointCloud, k_nn: usize) -> Result<()> {
    if k_nn == 0 {
        return Err(PimError::Validation("k_nn must be at least 1".into()));
    }
    if cloud.len() <= k_nn {
        return Err(PimError::InsufficientPoints {
            needed: k_nn,
            have: cloud.len(),
        });
    }
    Ok(())
}

/// `t = (mean_i rho_i)^2` with `rho_i` the `k_nn`-th neighbor distance.
pub fn select_bandwidth_global(cloud: &PointCloud, k_nn: usize) -> Result<Bandwidth> {
    let radii = knn_radii(cloud, k_nn)?;
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    let t = mean * mean;
    if t <= 0.0 {
        return Err(PimError::InsufficientSpread(format!(
            "all {k_nn}-nearest-neighbor radii vanish (duplicate points)"
        )));
    }
    Ok(Bandwidth::Global(t))
}

/// `t_i = rho_i^2` per point.
pub fn select_bandwidth_adaptive(cloud: &PointCloud, k_nn: usize) -> Result<Bandwidth> {
    let radii = knn_radii(cloud, k_nn)?;
    if let Some(i) = radii.iter().position(|&r| r <= 0.0) {
        return Err(PimError::InsufficientSpread(format!(
            "point {i} has {k_nn} or more duplicates; its neighbor radius is zero"
        )));
    }
    Ok(Bandwidth::PerPoint(radii.into_iter().map(|r| r * r).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> PointCloud {
        PointCloud::new(1, 1, xs.to_vec(), vec![1.0; xs.len()], vec![], vec![]).unwrap()
    }

    #[test]
    fn two_points() {
        let bw = select_bandwidth_global(&line(&[0.0, 0.3]), 1).unwrap();
        let Bandwidth::Global(t) = bw else { panic!() };
        assert!((t - 0.09).abs() < 1e-15);
    }

    #[test]
    fn uniform_grid_gives_spacing_squared() {
        let s = 0.125;
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * s).collect();
        let Bandwidth::Global(t) = select_bandwidth_global(&line(&xs), 1).unwrap() else {
            panic!()
        };
        assert!((t - s * s).abs() < 1e-14);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            select_bandwidth_global(&line(&[0.0, 1.0]), 2),
            Err(PimError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            select_bandwidth_adaptive(&line(&[0.0, 0.0, 0.0, 1.0]), 1),
            Err(PimError::InsufficientSpread(_))
        ));
        assert!(matches!(
            select_bandwidth_global(&line(&[2.0, 2.0]), 1),
            Err(PimError::InsufficientSpread(_))
        ));
    }

    #[test]
    fn circle_symmetry() {
        let n = 64;
        let coords: Vec<f64> = (0..n)
            .flat_map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        let cloud = PointCloud::new(2, 1, coords, vec![1.0; n], vec![], vec![]).unwrap();
        let Bandwidth::PerPoint(ts) = select_bandwidth_adaptive(&cloud, 1).unwrap() else {
            panic!()
        };
        let (lo, hi) = ts.iter().fold((f64::MAX, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
        assert!((hi - lo) / hi < 1e-12);
    }

    #[test]
    fn outlier_has_largest_bandwidth() {
        let cloud = line(&[0.0, 1e-3, 2e-3, 1.5e-3, 5.0]);
        let Bandwidth::PerPoint(ts) = select_bandwidth_adaptive(&cloud, 2).unwrap() else {
            panic!()
        };
        let imax = (0..ts.len()).max_by(|&a, &b| ts[a].total_cmp(&ts[b])).unwrap();
        assert_eq!(imax, 4);
        assert!(ts.iter().enumerate().all(|(i, &t)| i == 4 || t < ts[4]));
    }

    proptest! {
        #[test]
        fn radii_match_brute_force(coords in proptest::collection::vec(-1.0f64..1.0, 2 * 40), k in 1usize..8) {
            let cloud = PointCloud::new(2, 2, coords, vec![1.0; 40], vec![], vec![]).unwrap();
            prop_assert_eq!(knn_radii(&cloud, k).unwrap(), knn_radii_brute_force(&cloud, k).unwrap());
        }

        #[test]
        fn adding_points_never_grows_radii(
            coords in proptest::collection::vec(-1.0f64..1.0, 3 * 30),
            extra in proptest::collection::vec(-1.0f64..1.0, 3 * 10),
            k in 1usize..6,
        ) {
            let base = PointCloud::new(3, 2, coords.clone(), vec![1.0; 30], vec![], vec![]).unwrap();
            let mut all = coords;
            all.extend(extra);
            let refined = PointCloud::new(3, 2, all, vec![1.0; 40], vec![], vec![]).unwrap();
            let r0 = knn_radii(&base, k).unwrap();
            let r1 = knn_radii(&refined, k).unwrap();
            for i in 0..30 {
                prop_assert!(r1[i] <= r0[i]);
            }
        }
    }
}
