//! Spherical unwrapping of a Gaussian cloud onto a K-layer UV grid.
//!
//! Each Gaussian is expressed in spherical coordinates about the cloud's
//! bounding-sphere center. Azimuth selects the column, polar angle the row.
//! All Gaussians that land in the same pixel are ranked by opacity and the
//! top `K` are stored, one per layer.

use std::cmp::Ordering;
use std::f64::consts::PI;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::gaussian::{lexicographic_cmp, threshold_opacity, GaussianCloud, ATTRIBUTE_COUNT};
use crate::map::{MapDims, MapError, UvgsMap};

/// Below this radius a point is treated as sitting on the center.
pub const DEGENERATE_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    pub rho: f64,
    /// Azimuth in `[-pi, pi]`.
    pub theta: f64,
    /// Polar angle from +z in `[0, pi]`.
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UvIndex {
    pub u: u32,
    pub v: u32,
    pub layer: u32,
}

/// Spherical coordinates of `p` relative to `center`.
///
/// The polar angle is evaluated as `atan2(hypot(dx, dy), dz)`, which equals
/// `acos(dz / rho)` but stays accurate next to the poles.
pub fn to_spherical(p: [f64; 3], center: [f64; 3]) -> SphericalCoord {
    let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    let planar = d[0].hypot(d[1]);
    let rho = planar.hypot(d[2]);
    if rho < DEGENERATE_RADIUS {
        return SphericalCoord {
            rho,
            theta: 0.0,
            phi: 0.0,
        };
    }
    SphericalCoord {
        rho,
        theta: d[1].atan2(d[0]),
        phi: planar.atan2(d[2]),
    }
}

/// Column `u` from azimuth and row `v` from polar angle, floor-binned and
/// clamped into the grid.
pub fn to_uv_indices(sc: &SphericalCoord, width: u32, height: u32) -> (u32, u32) {
    let bin = |t: f64, n: u32| -> u32 {
        let x = (t * f64::from(n)).floor();
        if x <= 0.0 {
            0
        } else {
            (x as u64).min(u64::from(n) - 1) as u32
        }
    };
    let u = bin((PI + sc.theta) / (2.0 * PI), width);
    let v = bin(sc.phi / PI, height);
    (u, v)
}

/// Ranking of Gaussians sharing a pixel: opacity descending, then the full
/// attribute vector descending.
pub fn layer_order(a: &[f32; ATTRIBUTE_COUNT], b: &[f32; ATTRIBUTE_COUNT]) -> Ordering {
    b[10]
        .total_cmp(&a[10])
        .then_with(|| lexicographic_cmp(b, a))
}

/// The f32 center that is recorded in the map and used for projection.
pub(crate) fn recorded_center(cloud: &GaussianCloud) -> [f32; 3] {
    cloud.center().map(|c| c as f32)
}

/// Smallest f32 not below `r`.
pub(crate) fn f32_at_least(r: f64) -> f32 {
    let r32 = r as f32;
    if f64::from(r32) < r {
        r32.next_up()
    } else {
        r32
    }
}

/// Pixel `(u, v)` of a position under the map's recorded center.
pub fn pixel_of(position: [f32; 3], center: [f32; 3], width: u32, height: u32) -> (u32, u32) {
    let sc = to_spherical(position.map(f64::from), center.map(f64::from));
    to_uv_indices(&sc, width, height)
}

/// Builds the unnormalised K-layer UVGS map of `cloud`.
///
/// Gaussians with opacity `<= threshold` are discarded first and the
/// bounding sphere is recomputed on the survivors.
pub fn map_cloud(
    cloud: &GaussianCloud,
    dims: MapDims,
    threshold: f32,
) -> Result<UvgsMap, MapError> {
    dims.validate()?;
    let kept = threshold_opacity(cloud, threshold);
    let center = recorded_center(&kept);
    let mut map = UvgsMap::empty(dims)?;
    map.set_frame(center, f32_at_least(kept.radius()));

    let MapDims {
        width,
        height,
        layers,
    } = dims;
    let project = |g: &crate::gaussian::Gaussian| {
        let (u, v) = pixel_of(g.position, center, width, height);
        (v * width + u, g.to_array())
    };
    #[cfg(feature = "parallel")]
    let mut entries: Vec<(u32, [f32; ATTRIBUTE_COUNT])> =
        kept.gaussians().par_iter().map(project).collect();
    #[cfg(not(feature = "parallel"))]
    let mut entries: Vec<(u32, [f32; ATTRIBUTE_COUNT])> =
        kept.gaussians().iter().map(project).collect();

    let cmp = |a: &(u32, [f32; ATTRIBUTE_COUNT]), b: &(u32, [f32; ATTRIBUTE_COUNT])| {
        a.0.cmp(&b.0).then_with(|| layer_order(&a.1, &b.1))
    };
    #[cfg(feature = "parallel")]
    entries.par_sort_unstable_by(cmp);
    #[cfg(not(feature = "parallel"))]
    entries.sort_unstable_by(cmp);

    for group in entries.chunk_by(|a, b| a.0 == b.0) {
        let pixel = group[0].0;
        let (u, v) = (pixel % width, pixel / width);
        for (layer, (_, attrs)) in group.iter().take(layers as usize).enumerate() {
            map.set_cell(
                UvIndex {
                    u,
                    v,
                    layer: layer as u32,
                },
                attrs,
            );
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Gaussian;
    use approx::assert_abs_diff_eq;

    #[test]
    fn axis_directions() {
        let sc = to_spherical([1.0, 0.0, 0.0], [0.0; 3]);
        assert_eq!((sc.rho, sc.theta), (1.0, 0.0));
        assert_abs_diff_eq!(sc.phi, PI / 2.0, epsilon = 1e-15);

        let sc = to_spherical([2.0, 3.0, 5.0], [2.0, 3.0, 4.0]);
        assert_eq!((sc.rho, sc.theta, sc.phi), (1.0, 0.0, 0.0));
    }

    #[test]
    fn diagonal_direction() {
        let sc = to_spherical([1.0, 1.0, 1.0], [0.0; 3]);
        assert_abs_diff_eq!(sc.rho, 1.732_050_807_568_877_2, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.theta, std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.phi, 0.955_316_618_124_509_3, epsilon = 1e-15);
    }

    #[test]
    fn center_point_maps_to_origin_angles() {
        let sc = to_spherical([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]);
        assert_eq!((sc.rho, sc.theta, sc.phi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn index_examples() {
        let at = |theta, phi| SphericalCoord {
            rho: 1.0,
            theta,
            phi,
        };
        assert_eq!(to_uv_indices(&at(0.0, PI / 2.0), 512, 512), (256, 256));
        assert_eq!(to_uv_indices(&at(-PI, 0.0), 512, 512), (0, 0));
        assert_eq!(to_uv_indices(&at(PI, PI), 512, 512), (511, 511));
        assert_eq!(to_uv_indices(&at(PI, PI), 1, 1), (0, 0));
    }

    fn gaussian(position: [f32; 3], opacity: f32) -> Gaussian {
        Gaussian {
            position,
            rotation: [1.0, 0.0, 0.0, 0.0],
            scale: [0.1; 3],
            opacity,
            color: [0.2, 0.3, 0.4],
        }
    }

    #[test]
    fn single_gaussian_on_pole() {
        // a second Gaussian at the origin keeps the centroid off the first one
        let top = gaussian([0.0, 0.0, 1.0], 0.8);
        let bottom = gaussian([0.0, 0.0, -1.0], 0.8);
        let cloud = GaussianCloud::new(vec![top, bottom]);
        let map = map_cloud(&cloud, MapDims::new(4, 4, 1), 0.01).unwrap();
        let cell = map
            .cell(UvIndex {
                u: 2,
                v: 0,
                layer: 0,
            })
            .unwrap();
        assert_eq!(cell, &top.to_array());
        assert_eq!(map.occupied_count(), 2);
    }

    #[test]
    fn lone_gaussian_sits_on_center() {
        let g = gaussian([0.0, 0.0, 1.0], 0.5);
        let map = map_cloud(&GaussianCloud::new(vec![g]), MapDims::new(4, 4, 1), 0.01).unwrap();
        // rho == 0 maps to theta = phi = 0
        assert!(map
            .cell(UvIndex {
                u: 2,
                v: 0,
                layer: 0
            })
            .is_some());
    }

    #[test]
    fn dynamic_selection_keeps_highest_opacity() {
        let anchor = gaussian([0.0, 0.0, -1.0], 0.5);
        let low = gaussian([0.0, 0.0, 1.0], 0.3);
        let high = gaussian([0.0, 0.0, 2.0], 0.9);
        let cloud = GaussianCloud::new(vec![anchor, low, high]);

        let k1 = map_cloud(&cloud, MapDims::new(8, 8, 1), 0.01).unwrap();
        let (u, v) = pixel_of(high.position, k1.center(), 8, 8);
        assert_eq!(pixel_of(low.position, k1.center(), 8, 8), (u, v));
        assert_eq!(k1.cell(UvIndex { u, v, layer: 0 }).unwrap()[10], 0.9);

        let k2 = map_cloud(&cloud, MapDims::new(8, 8, 2), 0.01).unwrap();
        assert_eq!(k2.cell(UvIndex { u, v, layer: 0 }).unwrap()[10], 0.9);
        assert_eq!(k2.cell(UvIndex { u, v, layer: 1 }).unwrap()[10], 0.3);
    }

    #[test]
    fn equal_opacity_ties_are_order_independent() {
        let anchor = gaussian([0.0, 0.0, -1.0], 0.5);
        let a = gaussian([0.0, 0.0, 1.0], 0.6);
        let b = gaussian([0.0, 0.0, 2.0], 0.6);
        let forward = GaussianCloud::new(vec![anchor, a, b]);
        let backward = GaussianCloud::new(vec![b, a, anchor]);
        let dims = MapDims::new(8, 8, 1);
        assert_eq!(
            map_cloud(&forward, dims, 0.0).unwrap(),
            map_cloud(&backward, dims, 0.0).unwrap()
        );
    }

    #[test]
    fn threshold_removes_before_mapping() {
        let cloud = GaussianCloud::new(vec![
            gaussian([1.0, 0.0, 0.0], 0.005),
            gaussian([-1.0, 0.0, 0.0], 0.5),
        ]);
        let map = map_cloud(&cloud, MapDims::new(8, 8, 1), 0.01).unwrap();
        assert_eq!(map.occupied_count(), 1);
        assert_eq!(map.radius(), 0.0);
    }

    #[test]
    fn invalid_dims() {
        let cloud = GaussianCloud::default();
        for dims in [
            MapDims::new(0, 4, 1),
            MapDims::new(4, 0, 1),
            MapDims::new(4, 4, 0),
        ] {
            assert!(matches!(
                map_cloud(&cloud, dims, 0.01),
                Err(MapError::InvalidDims { .. })
            ));
        }
    }

    #[test]
    fn empty_cloud_gives_empty_map() {
        let map = map_cloud(&GaussianCloud::default(), MapDims::new(4, 4, 2), 0.01).unwrap();
        assert_eq!(map.occupied_count(), 0);
        assert!(map.values().iter().all(|&v| v == 0.0));
    }
}
