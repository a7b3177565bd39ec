//! 3D shape descriptors of a binary mask.
//!
//! The surface is a marching-cubes mesh at iso-level 0.5 over the
//! voxel-centre lattice. Instead of a lookup table, each cube's polygons
//! are traced from its faces: every face contributes oriented segments that
//! cut its inside corners off (on ambiguous faces each inside corner is cut
//! separately), and the segments chain into closed loops that are fan
//! triangulated. Because the face rule only looks at the face itself,
//! neighbouring cubes agree and the mesh is closed and consistently
//! oriented. Vertices sit on edge midpoints, so coordinates stay exact in
//! doubled integer units.

use std::collections::{HashMap, HashSet};

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::volume::BinaryMask;

pub const SHAPE_NAMES: [&str; 14] = [
    "MeshVolume",
    "VoxelVolume",
    "SurfaceArea",
    "SurfaceVolumeRatio",
    "Sphericity",
    "Maximum3DDiameter",
    "Maximum2DDiameterSlice",
    "Maximum2DDiameterColumn",
    "Maximum2DDiameterRow",
    "MajorAxisLength",
    "MinorAxisLength",
    "LeastAxisLength",
    "Elongation",
    "Flatness",
];

/// Cube faces as corner indices (bits: x = 1, y = 2, z = 4), listed
/// counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

type P3 = [i64; 3];
type Edge = (usize, usize);

#[derive(Debug, Clone, Default)]
pub struct Mesh {
    /// Enclosed volume in mm^3.
    pub volume: f64,
    /// Surface area in mm^2.
    pub area: f64,
    /// Distinct vertices in doubled voxel units.
    pub vertices: Vec<P3>,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn edge(a: usize, b: usize) -> Edge {
    (a.min(b), a.max(b))
}

/// Closed, oriented polygons of one cube as loops of cut edges.
fn cube_loops(flag: &[bool; 8]) -> Vec<Vec<Edge>> {
    let mut next: Vec<(Edge, Edge)> = Vec::with_capacity(6);
    for face in FACES {
        for k in 0..4 {
            let (a, b) = (face[k], face[(k + 1) % 4]);
            if flag[a] || !flag[b] {
                continue;
            }
            // entering an inside run at edge (a, b); find where it leaves
            let mut m = (k + 1) % 4;
            while flag[face[(m + 1) % 4]] {
                m = (m + 1) % 4;
            }
            next.push((edge(a, b), edge(face[m], face[(m + 1) % 4])));
        }
    }
    let mut loops = Vec::new();
    let mut used = vec![false; next.len()];
    for s in 0..next.len() {
        if used[s] {
            continue;
        }
        let start = next[s].0;
        let mut poly = vec![start];
        let mut cur = s;
        loop {
            used[cur] = true;
            let to = next[cur].1;
            if to == start {
                break;
            }
            poly.push(to);
            cur = next
                .iter()
                .position(|(from, _)| *from == to)
                .expect("face segments form closed loops");
        }
        loops.push(poly);
    }
    loops
}

/// Builds the iso-surface mesh of `m` with physical `spacing`.
pub fn mesh(m: &BinaryMask, spacing: [f64; 3]) -> Mesh {
    let Some((lo, hi)) = m.bounding_box() else {
        return Mesh::default();
    };
    let inside = |p: [i64; 3]| -> bool {
        (0..3).all(|a| p[a] >= lo[a] as i64 && p[a] <= hi[a] as i64)
            && m.get(p[0] as usize, p[1] as usize, p[2] as usize)
    };
    let phys = |p: P3| -> [f64; 3] {
        [
            p[0] as f64 * spacing[0] * 0.5,
            p[1] as f64 * spacing[1] * 0.5,
            p[2] as f64 * spacing[2] * 0.5,
        ]
    };
    let mut cache: HashMap<u8, Vec<Vec<Edge>>> = HashMap::new();
    let mut six_volume = 0.0;
    let mut area = 0.0;
    let mut verts = HashSet::new();
    let mut corner = [[0i64; 3]; 8];
    let mut flag = [false; 8];
    for z in lo[2] as i64 - 1..=hi[2] as i64 {
        for y in lo[1] as i64 - 1..=hi[1] as i64 {
            for x in lo[0] as i64 - 1..=hi[0] as i64 {
                let mut code = 0u8;
                for (k, (c, f)) in corner.iter_mut().zip(flag.iter_mut()).enumerate() {
                    *c = [
                        x + (k & 1) as i64,
                        y + ((k >> 1) & 1) as i64,
                        z + ((k >> 2) & 1) as i64,
                    ];
                    *f = inside(*c);
                    code |= (*f as u8) << k;
                }
                if code == 0 || code == 255 {
                    continue;
                }
                let loops = cache.entry(code).or_insert_with(|| cube_loops(&flag));
                for poly in loops.iter() {
                    let pts: Vec<P3> = poly
                        .iter()
                        .map(|&(a, b)| {
                            let (p, q) = (corner[a], corner[b]);
                            [p[0] + q[0], p[1] + q[1], p[2] + q[2]]
                        })
                        .collect();
                    verts.extend(pts.iter().copied());
                    let p0 = phys(pts[0]);
                    for w in pts[1..].windows(2) {
                        let (p1, p2) = (phys(w[0]), phys(w[1]));
                        let u = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
                        let v = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
                        area += 0.5 * norm(cross(u, v));
                        let c = cross(p1, p2);
                        six_volume += p0[0] * c[0] + p0[1] * c[1] + p0[2] * c[2];
                    }
                }
            }
        }
    }
    let mut vertices: Vec<P3> = verts.into_iter().collect();
    vertices.sort_unstable();
    Mesh {
        volume: (six_volume / 6.0).abs(),
        area,
        vertices,
    }
}

/// Vertices that can lie on the convex hull within the planes spanned by
/// `axes`: each must be extreme along every listed axis among the vertices
/// sharing its other two coordinates.
fn hull_candidates(vertices: &[P3], axes: &[usize]) -> Vec<P3> {
    let mut keep = vec![true; vertices.len()];
    for &a in axes {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let mut ext: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
        for v in vertices {
            let e = ext.entry((v[b], v[c])).or_insert((v[a], v[a]));
            e.0 = e.0.min(v[a]);
            e.1 = e.1.max(v[a]);
        }
        for (k, v) in vertices.iter().enumerate() {
            let e = ext[&(v[b], v[c])];
            keep[k] &= v[a] == e.0 || v[a] == e.1;
        }
    }
    vertices
        .iter()
        .zip(keep)
        .filter_map(|(v, k)| k.then_some(*v))
        .collect()
}

fn max_distance(points: &[P3], spacing: [f64; 3]) -> f64 {
    let w = [
        spacing[0] * spacing[0] * 0.25,
        spacing[1] * spacing[1] * 0.25,
        spacing[2] * spacing[2] * 0.25,
    ];
    let mut best = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d: f64 = (0..3).map(|a| ((p[a] - q[a]) as f64).powi(2) * w[a]).sum();
            best = best.max(d);
        }
    }
    best.sqrt()
}

/// Largest vertex distance within planes of constant coordinate `fixed`.
fn max_planar_distance(vertices: &[P3], fixed: usize, spacing: [f64; 3]) -> f64 {
    let in_plane: Vec<usize> = (0..3).filter(|&a| a != fixed).collect();
    let cand = hull_candidates(vertices, &in_plane);
    let mut planes: HashMap<i64, Vec<P3>> = HashMap::new();
    for v in cand {
        planes.entry(v[fixed]).or_default().push(v);
    }
    planes
        .values()
        .map(|pts| max_distance(pts, spacing))
        .fold(0.0, f64::max)
}

/// Principal-axis variances (descending) of the physical voxel-centre
/// coordinates, population normalization.
pub fn principal_variances(m: &BinaryMask, spacing: [f64; 3]) -> [f64; 3] {
    let dims = m.dims();
    let mut n = 0.0;
    let mut mean = [0.0; 3];
    for (i, _) in m.voxels().iter().enumerate().filter(|(_, &b)| b) {
        let c = dims.coords(i);
        n += 1.0;
        for a in 0..3 {
            mean[a] += c[a] as f64 * spacing[a];
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut cov = Matrix3::<f64>::zeros();
    for (i, _) in m.voxels().iter().enumerate().filter(|(_, &b)| b) {
        let c = dims.coords(i);
        let d: Vec<f64> = (0..3).map(|a| c[a] as f64 * spacing[a] - mean[a]).collect();
        for r in 0..3 {
            for s in 0..3 {
                cov[(r, s)] += d[r] * d[s] / n;
            }
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

/// The 14 shape features, in `SHAPE_NAMES` order.
pub fn shape_features(m: &BinaryMask, spacing: [f64; 3]) -> Result<[f64; 14]> {
    if m.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mesh = mesh(m, spacing);
    let voxel_volume = m.count() as f64 * spacing.iter().product::<f64>();
    let v = mesh.volume;
    let a = mesh.area;
    let sphericity = (36.0 * std::f64::consts::PI * v * v).cbrt() / a;
    let d3 = max_distance(&hull_candidates(&mesh.vertices, &[0, 1, 2]), spacing);
    let [l1, l2, l3] = principal_variances(m, spacing);
    let ratio = |x: f64| if l1 > 0.0 { (x / l1).sqrt() } else { f64::NAN };
    Ok([
        v,
        voxel_volume,
        a,
        a / v,
        sphericity,
        d3,
        max_planar_distance(&mesh.vertices, 2, spacing),
        max_planar_distance(&mesh.vertices, 1, spacing),
        max_planar_distance(&mesh.vertices, 0, spacing),
        4.0 * l1.sqrt(),
        4.0 * l2.sqrt(),
        4.0 * l3.sqrt(),
        ratio(l2),
        ratio(l3),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn get(f: &[f64; 14], name: &str) -> f64 {
        f[SHAPE_NAMES.iter().position(|n| *n == name).unwrap()]
    }

    fn block(n: [usize; 3], lo: [usize; 3], hi: [usize; 3]) -> BinaryMask {
        BinaryMask::from_fn(Dims::new(n[0], n[1], n[2]).unwrap(), |x, y, z| {
            (lo[0]..=hi[0]).contains(&x)
                && (lo[1]..=hi[1]).contains(&y)
                && (lo[2]..=hi[2]).contains(&z)
        })
    }

    #[test]
    fn single_voxel_mesh_is_octahedron() {
        let m = block([3, 3, 3], [1, 1, 1], [1, 1, 1]);
        let mesh = mesh(&m, [1.0; 3]);
        // eight corner triangles with legs of half a voxel
        assert_eq!(mesh.vertices.len(), 6);
        assert!((mesh.volume - 1.0 / 6.0).abs() < 1e-12);
        assert!((mesh.area - 8.0 * 3f64.sqrt() / 8.0).abs() < 1e-12);
    }

    #[test]
    fn every_cube_case_closes() {
        for code in 1u16..255 {
            let flag: [bool; 8] = std::array::from_fn(|k| code & (1 << k) != 0);
            let loops = cube_loops(&flag);
            let n: usize = loops.iter().map(|l| l.len()).sum();
            assert!(loops.iter().all(|l| l.len() >= 3), "case {code}");
            // each cut edge is visited exactly once
            let mut edges: Vec<Edge> = loops.concat();
            edges.sort();
            edges.dedup();
            assert_eq!(edges.len(), n, "case {code}");
        }
    }

    #[test]
    fn translation_leaves_mesh_measures_unchanged() {
        let a = mesh(&block([12, 12, 12], [1, 2, 3], [5, 4, 6]), [0.8, 1.0, 1.3]);
        let b = mesh(&block([12, 12, 12], [5, 6, 4], [9, 8, 7]), [0.8, 1.0, 1.3]);
        assert!((a.volume - b.volume).abs() < 1e-9);
        assert!((a.area - b.area).abs() < 1e-9);
    }

    #[test]
    fn mesh_volume_tracks_voxel_volume() {
        let m = block([30, 30, 30], [5, 5, 5], [24, 19, 14]);
        let f = shape_features(&m, [1.0; 3]).unwrap();
        let vv = get(&f, "VoxelVolume");
        assert_eq!(vv, 20.0 * 15.0 * 10.0);
        // the surface passes half a voxel outside the outer centres, with
        // edges and corners chamfered
        let mv = get(&f, "MeshVolume");
        assert!(mv < vv && mv > 19.0 * 14.0 * 9.0, "{mv}");
        let area = get(&f, "SurfaceArea");
        assert!(area < 2.0 * (300.0 + 200.0 + 150.0));
    }

    #[test]
    fn box_elongation() {
        let m = block([30, 16, 16], [3, 3, 3], [22, 12, 12]);
        let f = shape_features(&m, [1.0; 3]).unwrap();
        let want = (99.0f64 / 399.0).sqrt();
        assert!((get(&f, "Elongation") - want).abs() < 1e-9);
        assert!((get(&f, "Flatness") - want).abs() < 1e-9);
        assert!((get(&f, "Elongation") - 0.5).abs() < 0.01);
    }

    #[test]
    fn diameters_of_box() {
        let m = block([12, 12, 12], [2, 2, 2], [8, 5, 4]);
        let f = shape_features(&m, [1.0; 3]).unwrap();
        // extreme vertices lie half a voxel beyond the outer centres
        let (a, b, c) = (7.0f64, 4.0f64, 3.0f64);
        assert!((get(&f, "Maximum3DDiameter") - (a * a + b * b + c * c).sqrt()).abs() < 0.8);
        assert!(get(&f, "Maximum2DDiameterSlice") <= get(&f, "Maximum3DDiameter"));
        assert!(get(&f, "Maximum2DDiameterRow") < get(&f, "Maximum2DDiameterSlice"));
    }

    #[test]
    fn pruned_diameter_equals_brute_force() {
        let mut state = 12345u64;
        let m = BinaryMask::from_fn(Dims::new(9, 8, 7).unwrap(), |_, _, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33).is_multiple_of(3)
        });
        let sp = [0.7, 1.1, 1.9];
        let mesh = mesh(&m, sp);
        let brute = max_distance(&mesh.vertices, sp);
        let pruned = max_distance(&hull_candidates(&mesh.vertices, &[0, 1, 2]), sp);
        assert!((brute - pruned).abs() < 1e-12);
        for fixed in 0..3 {
            let mut planes: HashMap<i64, Vec<P3>> = HashMap::new();
            for v in &mesh.vertices {
                planes.entry(v[fixed]).or_default().push(*v);
            }
            let brute = planes
                .values()
                .map(|p| max_distance(p, sp))
                .fold(0.0, f64::max);
            assert!((brute - max_planar_distance(&mesh.vertices, fixed, sp)).abs() < 1e-12);
        }
    }

    #[test]
    fn spacing_scales_volume() {
        let m = block([10, 10, 10], [2, 2, 2], [6, 6, 6]);
        let a = shape_features(&m, [1.0; 3]).unwrap();
        let b = shape_features(&m, [2.0; 3]).unwrap();
        assert!((get(&b, "MeshVolume") / get(&a, "MeshVolume") - 8.0).abs() < 1e-9);
        assert!((get(&b, "SurfaceArea") / get(&a, "SurfaceArea") - 4.0).abs() < 1e-9);
        assert!((get(&b, "Sphericity") - get(&a, "Sphericity")).abs() < 1e-9);
    }
}
