//! Uniform bucket grid for fixed-radius neighbour queries in the plane.

use crate::topology::{Point, LANE_LENGTH_M};

pub(crate) struct BucketGrid {
    size: f64,
    side: usize,
    buckets: Vec<Vec<usize>>,
}

impl BucketGrid {
    pub fn new(radius: f64, points: impl IntoIterator<Item = Point>) -> Self {
        let size = radius.max(1.0);
        let side = (LANE_LENGTH_M / size).ceil() as usize + 1;
        let mut grid = BucketGrid {
            size,
            side,
            buckets: vec![Vec::new(); side * side],
        };
        for (i, p) in points.into_iter().enumerate() {
            let (bx, by) = grid.bucket(p);
            grid.buckets[by * side + bx].push(i);
        }
        grid
    }

    fn bucket(&self, p: Point) -> (usize, usize) {
        let clamp = |v: f64| ((v / self.size).floor().max(0.0) as usize).min(self.side - 1);
        (clamp(p.x), clamp(p.y))
    }

    /// Indices stored in the 3 x 3 block of buckets around `p`, in no
    /// particular order. Callers filter by exact distance.
    pub fn candidates(&self, p: Point) -> impl Iterator<Item = usize> + '_ {
        let (bx, by) = self.bucket(p);
        let xs = bx.saturating_sub(1)..=(bx + 1).min(self.side - 1);
        let ys = by.saturating_sub(1)..=(by + 1).min(self.side - 1);
        ys.flat_map(move |y| xs.clone().map(move |x| y * self.side + x))
            .flat_map(move |b| self.buckets[b].iter().copied())
    }
}
