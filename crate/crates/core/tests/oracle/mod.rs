//! Slow reference implementations used to cross-check the library.
//!
//! Everything here is written from the textbook definitions with nested
//! loops and no shared helpers from the library under test, so a bug has to
//! be made twice to go unnoticed.

#![allow(dead_code)]

pub const EPS: f64 = f64::EPSILON;

/// Labelled 3D grid, 0 = outside the ROI.
#[derive(Clone, Debug)]
pub struct Grid {
    pub n: [usize; 3],
    pub l: Vec<u16>,
}

impl Grid {
    pub fn at(&self, x: isize, y: isize, z: isize) -> u16 {
        if x < 0 || y < 0 || z < 0 {
            return 0;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= self.n[0] || y >= self.n[1] || z >= self.n[2] {
            return 0;
        }
        self.l[(z * self.n[1] + y) * self.n[0] + x]
    }

    pub fn ng(&self) -> usize {
        *self.l.iter().max().unwrap() as usize
    }

    pub fn count(&self) -> usize {
        self.l.iter().filter(|&&v| v > 0).count()
    }

    pub fn cells(&self) -> Vec<(isize, isize, isize, usize)> {
        let mut out = Vec::new();
        for z in 0..self.n[2] {
            for y in 0..self.n[1] {
                for x in 0..self.n[0] {
                    let v = self.at(x as isize, y as isize, z as isize);
                    if v > 0 {
                        out.push((x as isize, y as isize, z as isize, v as usize));
                    }
                }
            }
        }
        out
    }
}

/// Half of the 26-neighbourhood: offsets whose first nonzero of (z, y, x)
/// is positive.
pub fn half_offsets() -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    for dz in -1..=1isize {
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let first = if dz != 0 {
                    dz
                } else if dy != 0 {
                    dy
                } else {
                    dx
                };
                if first > 0 {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn lg(p: f64) -> f64 {
    (p + EPS).log2()
}

fn mean_over(rows: Vec<Vec<f64>>) -> Vec<f64> {
    let w = rows[0].len();
    (0..w)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64)
        .collect()
}

// ------------------------------------------------------------------ GLCM

pub fn glcm(g: &Grid) -> Vec<f64> {
    let ng = g.ng();
    let mut rows = Vec::new();
    for d in half_offsets() {
        let mut p = vec![vec![0.0; ng + 1]; ng + 1];
        for z in 0..g.n[2] as isize {
            for y in 0..g.n[1] as isize {
                for x in 0..g.n[0] as isize {
                    let a = g.at(x, y, z) as usize;
                    let b = g.at(x + d[0], y + d[1], z + d[2]) as usize;
                    if a > 0 && b > 0 {
                        p[a][b] += 1.0;
                        p[b][a] += 1.0;
                    }
                }
            }
        }
        let s: f64 = p.iter().flatten().sum();
        if s == 0.0 {
            continue;
        }
        for r in p.iter_mut() {
            for v in r.iter_mut() {
                *v /= s;
            }
        }
        rows.push(glcm_from(&p, ng));
    }
    if rows.is_empty() {
        return vec![f64::NAN; 24];
    }
    mean_over(rows)
}

fn glcm_from(p: &[Vec<f64>], ng: usize) -> Vec<f64> {
    let r = 1..=ng;
    let sum2 = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut s = 0.0;
        for i in r.clone() {
            for j in r.clone() {
                s += f(i, j);
            }
        }
        s
    };
    let px = |i: usize| (1..=ng).map(|j| p[i][j]).sum::<f64>();
    let py = |j: usize| (1..=ng).map(|i| p[i][j]).sum::<f64>();
    let ux = sum2(&|i, j| i as f64 * p[i][j]);
    let uy = sum2(&|i, j| j as f64 * p[i][j]);
    let sx = sum2(&|i, j| (i as f64 - ux).powi(2) * p[i][j]).sqrt();
    let sy = sum2(&|i, j| (j as f64 - uy).powi(2) * p[i][j]).sqrt();
    let pplus = |k: usize| sum2(&|i, j| if i + j == k { p[i][j] } else { 0.0 });
    let pminus = |k: usize| sum2(&|i, j| if i.abs_diff(j) == k { p[i][j] } else { 0.0 });
    let autoc = sum2(&|i, j| (i * j) as f64 * p[i][j]);
    let cluster = |e: i32| sum2(&|i, j| (i as f64 + j as f64 - ux - uy).powi(e) * p[i][j]);
    let contrast = sum2(&|i, j| (i as f64 - j as f64).powi(2) * p[i][j]);
    let corr = if sx * sy == 0.0 {
        1.0
    } else {
        (autoc - ux * uy) / (sx * sy)
    };
    let da: f64 = (0..ng).map(|k| k as f64 * pminus(k)).sum();
    let de: f64 = -(0..ng).map(|k| pminus(k) * lg(pminus(k))).sum::<f64>();
    let dv: f64 = (0..ng).map(|k| (k as f64 - da).powi(2) * pminus(k)).sum();
    let energy = sum2(&|i, j| p[i][j] * p[i][j]);
    let hxy = -sum2(&|i, j| p[i][j] * lg(p[i][j]));
    let hxy1 = -sum2(&|i, j| p[i][j] * lg(px(i) * py(j)));
    let hxy2 = -sum2(&|i, j| px(i) * py(j) * lg(px(i) * py(j)));
    let hx = -(1..=ng).map(|i| px(i) * lg(px(i))).sum::<f64>();
    let hy = -(1..=ng).map(|j| py(j) * lg(py(j))).sum::<f64>();
    let imc1 = if hx.max(hy) == 0.0 {
        0.0
    } else {
        (hxy - hxy1) / hx.max(hy)
    };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy)).exp()).max(0.0).sqrt();
    let ngf = ng as f64;
    let idm = sum2(&|i, j| p[i][j] / (1.0 + (i as f64 - j as f64).powi(2)));
    let idmn = sum2(&|i, j| p[i][j] / (1.0 + (i as f64 - j as f64).powi(2) / (ngf * ngf)));
    let id = sum2(&|i, j| p[i][j] / (1.0 + (i as f64 - j as f64).abs()));
    let idn = sum2(&|i, j| p[i][j] / (1.0 + (i as f64 - j as f64).abs() / ngf));
    let iv = sum2(&|i, j| {
        if i != j {
            p[i][j] / (i as f64 - j as f64).powi(2)
        } else {
            0.0
        }
    });
    let maxp = p.iter().flatten().cloned().fold(0.0, f64::max);
    let sa: f64 = (2..=2 * ng).map(|k| k as f64 * pplus(k)).sum();
    let se: f64 = -(2..=2 * ng).map(|k| pplus(k) * lg(pplus(k))).sum::<f64>();
    let ss = sum2(&|i, j| (i as f64 - ux).powi(2) * p[i][j]);
    vec![
        autoc,
        ux,
        cluster(4),
        cluster(3),
        cluster(2),
        contrast,
        corr,
        da,
        de,
        dv,
        energy,
        hxy,
        imc1,
        imc2,
        idm,
        mcc(p, ng),
        idmn,
        id,
        idn,
        iv,
        maxp,
        sa,
        se,
        ss,
    ]
}

/// Second largest eigenvalue of `Q_ij = sum_k p_ik p_jk / (px_i py_k)`,
/// over levels present in the matrix, via a general (non-symmetric) solver.
fn mcc(p: &[Vec<f64>], ng: usize) -> f64 {
    let px: Vec<f64> = (0..=ng).map(|i| (1..=ng).map(|j| p[i][j]).sum()).collect();
    let py: Vec<f64> = (0..=ng).map(|j| (1..=ng).map(|i| p[i][j]).sum()).collect();
    let lv: Vec<usize> = (1..=ng).filter(|&i| px[i] > 0.0).collect();
    if lv.len() < 2 {
        return 1.0;
    }
    let n = lv.len();
    let q = nalgebra::DMatrix::from_fn(n, n, |a, b| {
        let (i, j) = (lv[a], lv[b]);
        lv.iter()
            .map(|&k| p[i][k] * p[j][k] / (px[i] * py[k]))
            .sum::<f64>()
    });
    let mut ev: Vec<f64> = q.complex_eigenvalues().iter().map(|c| c.re).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[1].max(0.0).sqrt()
}

// ------------------------------------------------- size-type matrices

/// `p[i][j]`: gray level `i`, size `j`, both 1-based.
fn size_features(p: &[Vec<f64>], full: bool) -> Vec<f64> {
    let ng = p.len() - 1;
    let ns = p[0].len() - 1;
    let n: f64 = p.iter().flatten().sum();
    let acc = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
        let mut s = 0.0;
        for i in 1..=ng {
            for j in 1..=ns {
                if p[i][j] > 0.0 {
                    s += p[i][j] * f(i as f64, j as f64);
                }
            }
        }
        s
    };
    let sre = acc(&|_, j| 1.0 / (j * j)) / n;
    let lre = acc(&|_, j| j * j) / n;
    let gln = (1..=ng)
        .map(|i| p[i].iter().sum::<f64>().powi(2))
        .sum::<f64>()
        / n;
    let rln = (1..=ns)
        .map(|j| (1..=ng).map(|i| p[i][j]).sum::<f64>().powi(2))
        .sum::<f64>()
        / n;
    let mg = acc(&|i, _| i) / n;
    let ms = acc(&|_, j| j) / n;
    let gv = acc(&|i, _| (i - mg).powi(2)) / n;
    let sv = acc(&|_, j| (j - ms).powi(2)) / n;
    let mut ent = 0.0;
    for row in p.iter() {
        for &v in row {
            if v > 0.0 {
                ent -= v / n * lg(v / n);
            }
        }
    }
    let lo = acc(&|i, _| 1.0 / (i * i)) / n;
    let hi = acc(&|i, _| i * i) / n;
    let slo = acc(&|i, j| 1.0 / (i * i * j * j)) / n;
    let shi = acc(&|i, j| i * i / (j * j)) / n;
    let llo = acc(&|i, j| j * j / (i * i)) / n;
    let lhi = acc(&|i, j| i * i * j * j) / n;
    if full {
        vec![
            sre,
            lre,
            gln,
            gln / n,
            rln,
            rln / n,
            f64::NAN,
            gv,
            sv,
            ent,
            lo,
            hi,
            slo,
            shi,
            llo,
            lhi,
        ]
    } else {
        vec![
            sre,
            lre,
            gln,
            rln,
            rln / n,
            gv,
            sv,
            ent,
            lo,
            hi,
            slo,
            shi,
            llo,
            lhi,
        ]
    }
}

// ------------------------------------------------------------------ GLRLM

/// Runs found by scanning complete lines from their entry points.
pub fn glrlm(g: &Grid) -> Vec<f64> {
    let ng = g.ng();
    let lmax = *g.n.iter().max().unwrap();
    let np = g.count() as f64;
    let mut rows = Vec::new();
    for d in half_offsets() {
        let mut p = vec![vec![0.0; lmax + 1]; ng + 1];
        for z in 0..g.n[2] as isize {
            for y in 0..g.n[1] as isize {
                for x in 0..g.n[0] as isize {
                    let (bx, by, bz) = (x - d[0], y - d[1], z - d[2]);
                    let inside_grid = |a: isize, b: isize, c: isize| {
                        a >= 0
                            && b >= 0
                            && c >= 0
                            && (a as usize) < g.n[0]
                            && (b as usize) < g.n[1]
                            && (c as usize) < g.n[2]
                    };
                    if inside_grid(bx, by, bz) {
                        continue; // not a line start
                    }
                    let mut line = Vec::new();
                    let (mut cx, mut cy, mut cz) = (x, y, z);
                    while inside_grid(cx, cy, cz) {
                        line.push(g.at(cx, cy, cz));
                        cx += d[0];
                        cy += d[1];
                        cz += d[2];
                    }
                    let mut k = 0;
                    while k < line.len() {
                        let v = line[k];
                        let mut e = k;
                        while e < line.len() && line[e] == v {
                            e += 1;
                        }
                        if v > 0 {
                            p[v as usize][e - k] += 1.0;
                        }
                        k = e;
                    }
                }
            }
        }
        let nr: f64 = p.iter().flatten().sum();
        let mut f = size_features(&p, true);
        f[6] = nr / np;
        rows.push(f);
    }
    mean_over(rows)
}

// ------------------------------------------------------------------ GLSZM

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Zones via union-find over equal-label 26-neighbour pairs.
pub fn glszm(g: &Grid) -> Vec<f64> {
    let ng = g.ng();
    let total = g.l.len();
    let mut parent: Vec<usize> = (0..total).collect();
    let idx =
        |x: isize, y: isize, z: isize| ((z as usize * g.n[1]) + y as usize) * g.n[0] + x as usize;
    for (x, y, z, v) in g.cells() {
        for d in half_offsets() {
            let (a, b, c) = (x + d[0], y + d[1], z + d[2]);
            if g.at(a, b, c) as usize == v {
                let (r1, r2) = (
                    find(&mut parent, idx(x, y, z)),
                    find(&mut parent, idx(a, b, c)),
                );
                parent[r1] = r2;
            }
        }
    }
    let mut sizes = std::collections::HashMap::new();
    for (x, y, z, v) in g.cells() {
        let r = find(&mut parent, idx(x, y, z));
        sizes.entry(r).or_insert((v, 0usize)).1 += 1;
    }
    let np = g.count();
    let mut p = vec![vec![0.0; np + 1]; ng + 1];
    for (_, (v, s)) in sizes {
        p[v][s] += 1.0;
    }
    let nz: f64 = p.iter().flatten().sum();
    let mut f = size_features(&p, true);
    f[6] = nz / np as f64;
    f
}

// ------------------------------------------------------------------- GLDM

pub fn gldm(g: &Grid) -> Vec<f64> {
    let ng = g.ng();
    let mut p = vec![vec![0.0; 28]; ng + 1];
    for (x, y, z, v) in g.cells() {
        let mut dep = 0;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if g.at(x + dx, y + dy, z + dz) as usize == v {
                        dep += 1; // includes the centre voxel itself
                    }
                }
            }
        }
        p[v][dep] += 1.0;
    }
    size_features(&p, false)
}

// ------------------------------------------------------------------ NGTDM

pub fn ngtdm(g: &Grid) -> Vec<f64> {
    let ng = g.ng();
    let mut n = vec![0.0; ng + 1];
    let mut s = vec![0.0; ng + 1];
    for (x, y, z, v) in g.cells() {
        let mut sum = 0.0;
        let mut cnt = 0.0;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if (dx, dy, dz) == (0, 0, 0) {
                        continue;
                    }
                    let l = g.at(x + dx, y + dy, z + dz);
                    if l > 0 {
                        sum += l as f64;
                        cnt += 1.0;
                    }
                }
            }
        }
        if cnt > 0.0 {
            n[v] += 1.0;
            s[v] += (v as f64 - sum / cnt).abs();
        }
    }
    let nv: f64 = n.iter().sum();
    if nv == 0.0 {
        return vec![f64::NAN; 5];
    }
    let p: Vec<f64> = n.iter().map(|c| c / nv).collect();
    let present: Vec<usize> = (1..=ng).filter(|&i| p[i] > 0.0).collect();
    let ngp = present.len() as f64;
    let sp: f64 = present.iter().map(|&i| p[i] * s[i]).sum();
    let st: f64 = present.iter().map(|&i| s[i]).sum();
    let coarse = if sp == 0.0 { 1e6 } else { 1.0 / sp };
    let mut c = 0.0;
    let mut bd = 0.0;
    let mut cx = 0.0;
    let mut sn = 0.0;
    for &i in &present {
        for &j in &present {
            let (fi, fj) = (i as f64, j as f64);
            c += p[i] * p[j] * (fi - fj).powi(2);
            bd += (fi * p[i] - fj * p[j]).abs();
            cx += (fi - fj).abs() * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j]);
            sn += (p[i] + p[j]) * (fi - fj).powi(2);
        }
    }
    let contrast = if ngp > 1.0 {
        c / (ngp * (ngp - 1.0)) * st / nv
    } else {
        0.0
    };
    let busy = if bd == 0.0 { 0.0 } else { sp / bd };
    let strength = if st == 0.0 { 0.0 } else { sn / st };
    vec![coarse, contrast, busy, cx / nv, strength]
}

// ------------------------------------------------------------ convolution

/// Half-sample symmetric index.
pub fn sym(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

// ------------------------------------------------------------- regression

/// L1-penalized logistic regression by FISTA on
/// `sum_i logloss_i + lambda * |beta|_1` (intercept unpenalized).
pub fn fista_logreg(x: &[Vec<f64>], y: &[bool], lambda: f64, iters: usize) -> (f64, Vec<f64>) {
    let n = x.len();
    let p = x[0].len();
    // Lipschitz bound of the smooth part: ||[1 X]||_F^2 / 4
    let lip = x
        .iter()
        .map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / 4.0;
    let step = 1.0 / lip;
    let mut w = vec![0.0; p + 1];
    let mut z = w.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let mut grad = vec![0.0; p + 1];
        for i in 0..n {
            let eta = z[0] + (0..p).map(|j| x[i][j] * z[j + 1]).sum::<f64>();
            let r = 1.0 / (1.0 + (-eta).exp()) - if y[i] { 1.0 } else { 0.0 };
            grad[0] += r;
            for j in 0..p {
                grad[j + 1] += r * x[i][j];
            }
        }
        let mut next = vec![0.0; p + 1];
        next[0] = z[0] - step * grad[0];
        for j in 1..=p {
            let u = z[j] - step * grad[j];
            next[j] = u.signum() * (u.abs() - step * lambda).max(0.0);
        }
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        for j in 0..=p {
            z[j] = next[j] + (t - 1.0) / tn * (next[j] - w[j]);
        }
        w = next;
        t = tn;
    }
    (w[0], w[1..].to_vec())
}
