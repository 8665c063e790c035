//! Linked-cell pair search, periodic in x and y only, and a Verlet list
//! built on top of it.

use crate::system::{BoxGeometry, Vec3};

/// Particles binned into cells whose edges are at least the cutoff.
#[derive(Debug, Clone)]
pub struct CellList {
    dims: [usize; 3],
    edge: [f64; 3],
    z0: f64,
    start: Vec<usize>,
    items: Vec<usize>,
    cell_of: Vec<usize>,
    cutoff: f64,
}

fn periodic_offsets(n: usize) -> &'static [isize] {
    match n {
        1 => &[0],
        2 => &[0, 1],
        _ => &[-1, 0, 1],
    }
}

impl CellList {
    pub fn build(pos: &[Vec3], geom: &BoxGeometry, cutoff: f64) -> Self {
        assert!(cutoff > 0.0, "cutoff must be positive");
        let (zlo, zhi) = pos
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[2]), hi.max(p[2])));
        let (zlo, zspan) = if pos.is_empty() { (0.0, 0.0) } else { (zlo, zhi - zlo) };
        let count = |len: f64| ((len / cutoff).floor() as usize).clamp(1, 1 << 12);
        let dims = [count(geom.lx), count(geom.ly), count(zspan)];
        let edge = [geom.lx / dims[0] as f64, geom.ly / dims[1] as f64, (zspan / dims[2] as f64).max(cutoff)];
        let ncell = dims[0] * dims[1] * dims[2];
        let index = |p: &Vec3| {
            let cx = ((p[0] / edge[0]).floor() as isize).rem_euclid(dims[0] as isize) as usize;
            let cy = ((p[1] / edge[1]).floor() as isize).rem_euclid(dims[1] as isize) as usize;
            let cz = (((p[2] - zlo) / edge[2]).floor() as usize).min(dims[2] - 1);
            (cz * dims[1] + cy) * dims[0] + cx
        };
        let cell_of: Vec<usize> = pos.iter().map(index).collect();
        let mut start = vec![0usize; ncell + 1];
        for &c in &cell_of {
            start[c + 1] += 1;
        }
        for c in 0..ncell {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut items = vec![0usize; pos.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            items[fill[c]] = i;
            fill[c] += 1;
        }
        Self { dims, edge, z0: zlo, start, items, cell_of, cutoff }
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Calls `f(i, j, d, r2)` once for every pair `i < j` whose
    /// minimum-image separation `d = r_i - r_j` satisfies `|d| <= cutoff`.
    pub fn for_each_pair(&self, pos: &[Vec3], geom: &BoxGeometry, mut f: impl FnMut(usize, usize, Vec3, f64)) {
        let [nx, ny, nz] = self.dims;
        let rc2 = self.cutoff * self.cutoff;
        let _ = (self.edge, self.z0);
        for i in 0..pos.len() {
            let c = self.cell_of[i];
            let cx = c % nx;
            let cy = (c / nx) % ny;
            let cz = c / (nx * ny);
            for &oz in &[-1isize, 0, 1] {
                let z = cz as isize + oz;
                if z < 0 || z >= nz as isize {
                    continue;
                }
                for &oy in periodic_offsets(ny) {
                    let y = (cy as isize + oy).rem_euclid(ny as isize) as usize;
                    for &ox in periodic_offsets(nx) {
                        let x = (cx as isize + ox).rem_euclid(nx as isize) as usize;
                        let cell = (z as usize * ny + y) * nx + x;
                        for &j in &self.items[self.start[cell]..self.start[cell + 1]] {
                            if j <= i {
                                continue;
                            }
                            let d = geom.min_image([
                                pos[i][0] - pos[j][0],
                                pos[i][1] - pos[j][1],
                                pos[i][2] - pos[j][2],
                            ]);
                            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                            if r2 <= rc2 {
                                f(i, j, d, r2);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn pairs(&self, pos: &[Vec3], geom: &BoxGeometry) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        self.for_each_pair(pos, geom, |i, j, _, _| out.push((i, j)));
        out
    }
}

/// Pair list with a skin, rebuilt once any particle has moved more than half
/// the skin since the last build.
#[derive(Debug, Clone)]
pub struct VerletList {
    pub cutoff: f64,
    pub skin: f64,
    pairs: Vec<(u32, u32)>,
    anchor: Vec<Vec3>,
    pub rebuilds: usize,
}

impl VerletList {
    pub fn new(cutoff: f64, skin: f64) -> Self {
        Self { cutoff, skin, pairs: Vec::new(), anchor: Vec::new(), rebuilds: 0 }
    }

    fn needs_rebuild(&self, pos: &[Vec3], geom: &BoxGeometry) -> bool {
        if self.anchor.len() != pos.len() {
            return true;
        }
        let lim = 0.25 * self.skin * self.skin;
        pos.iter().zip(&self.anchor).any(|(p, a)| {
            let d = geom.min_image([p[0] - a[0], p[1] - a[1], p[2] - a[2]]);
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2] > lim
        })
    }

    /// Current candidate pairs, rebuilding first if needed.
    pub fn update(&mut self, pos: &[Vec3], geom: &BoxGeometry) -> &[(u32, u32)] {
        if self.needs_rebuild(pos, geom) {
            let cells = CellList::build(pos, geom, self.cutoff + self.skin);
            self.pairs.clear();
            cells.for_each_pair(pos, geom, |i, j, _, _| self.pairs.push((i as u32, j as u32)));
            self.anchor = pos.to_vec();
            self.rebuilds += 1;
        }
        &self.pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ParticleSystem;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute(pos: &[Vec3], geom: &BoxGeometry, rc: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                let d = geom.min_image([pos[i][0] - pos[j][0], pos[i][1] - pos[j][1], pos[i][2] - pos[j][2]]);
                if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= rc * rc {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn matches_brute_force() {
        for (seed, lz, rc) in [(1u64, 100.0, 12.0), (2, 5.0, 30.0), (3, 200.0, 49.0), (4, 40.0, 8.0)] {
            let geom = BoxGeometry::new(100.0, 100.0, lz).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = ParticleSystem::random_ions(150, 150, 1.0, &geom, 0.0, &mut rng);
            let mut got = CellList::build(&sys.pos, &geom, rc).pairs(&sys.pos, &geom);
            got.sort();
            assert_eq!(got, brute(&sys.pos, &geom, rc), "seed {seed}");
        }
    }

    #[test]
    fn empty_and_single() {
        let geom = BoxGeometry::new(10.0, 10.0, 10.0).unwrap();
        assert!(CellList::build(&[], &geom, 2.0).pairs(&[], &geom).is_empty());
        let p = [[1.0, 1.0, 1.0]];
        assert!(CellList::build(&p, &geom, 2.0).pairs(&p, &geom).is_empty());
    }

    #[test]
    fn verlet_list_rebuilds_on_motion() {
        let geom = BoxGeometry::new(10.0, 10.0, 10.0).unwrap();
        let mut pos = vec![[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [8.0, 8.0, 8.0]];
        let mut vl = VerletList::new(1.5, 0.3);
        assert_eq!(vl.update(&pos, &geom).len(), 1);
        pos[2][0] += 0.1;
        vl.update(&pos, &geom);
        assert_eq!(vl.rebuilds, 1);
        pos[2][0] += 0.1;
        vl.update(&pos, &geom);
        assert_eq!(vl.rebuilds, 2);
    }

    proptest! {
        #[test]
        fn every_close_pair_once(seed in 0u64..1000, rc in 1.0f64..9.9, lz in 1.0f64..30.0) {
            let geom = BoxGeometry::new(20.0, 23.0, lz).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = ParticleSystem::random_ions(40, 40, 1.0, &geom, 0.0, &mut rng);
            let mut got = CellList::build(&sys.pos, &geom, rc).pairs(&sys.pos, &geom);
            got.sort();
            prop_assert_eq!(got, brute(&sys.pos, &geom, rc));
        }
    }
}
