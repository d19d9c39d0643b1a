//! Uniform voxel hash used for every fixed-radius neighbor query.

use std::collections::HashMap;

use crate::geometry::Point3;

type Cell = (i64, i64, i64);

/// Points bucketed into cubic cells of side `cell`. A radius query with
/// `radius <= cell` only has to visit the 27 cells around the query.
#[derive(Debug)]
pub struct VoxelGrid<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<Cell, Vec<u32>>,
}

impl<'a> VoxelGrid<'a> {
    pub fn new(points: &'a [Point3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p, cell)).or_default().push(i as u32);
        }
        Self { points, cell, cells }
    }

    pub fn points(&self) -> &'a [Point3] {
        self.points
    }

    /// Visit every indexed point with `|p - query| <= radius`.
    pub fn for_each_within(&self, query: &Point3, radius: f64, mut f: impl FnMut(usize)) {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = key(query, self.cell);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &i in bucket {
                        let i = i as usize;
                        if (self.points[i] - query).norm_squared() <= r2 {
                            f(i);
                        }
                    }
                }
            }
        }
    }

    pub fn count_within(&self, query: &Point3, radius: f64) -> usize {
        let mut n = 0;
        self.for_each_within(query, radius, |_| n += 1);
        n
    }

    /// Indices within `radius`, ascending.
    pub fn within(&self, query: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(query, radius, |i| out.push(i));
        out.sort_unstable();
        out
    }
}

fn key(p: &Point3, cell: f64) -> Cell {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Union-find with path halving and union by size.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}
