//! Quadtree (`D = 2`) / octree (`D = 3`) over an embedding.
//!
//! Cells are stored in one arena; the `2^D` children of a cell are
//! contiguous. Each cell also owns a contiguous range of the permuted point
//! order, so `points(cell)` is the list of every point inside it.

use crate::config::Condition;
use crate::matrix::Embedding;

pub const MAX_DEPTH: usize = 64;
/// Cells whose diagonal falls below this stop splitting (coincident points).
pub const MIN_DIAGONAL: f64 = 1e-12;
const ROOT_MARGIN: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell<const D: usize> {
    pub center: [f64; D],
    pub half_extent: [f64; D],
    /// Center of mass of the points inside.
    pub com: [f64; D],
    pub count: usize,
    /// Index of the first of `2^D` children; `None` for leaves.
    pub first_child: Option<usize>,
    pub depth: usize,
    start: usize,
    end: usize,
    diag: f64,
}

impl<const D: usize> Cell<D> {
    pub const CHILDREN: usize = 1 << D;

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.first_child.is_none()
    }

    /// Length of the cell diagonal.
    #[inline]
    pub fn diagonal(&self) -> f64 {
        self.diag
    }

    /// Bounds test, allowing for rounding in the child centers.
    pub fn contains(&self, p: &[f64]) -> bool {
        (0..D).all(|k| {
            let slack = 1e-9 * self.half_extent[k] + 4.0 * f64::EPSILON * self.center[k].abs();
            (p[k] - self.center[k]).abs() <= self.half_extent[k] + slack
        })
    }

    #[inline]
    pub fn children(&self) -> impl Iterator<Item = usize> {
        let first = self.first_child;
        (0..Self::CHILDREN).filter_map(move |c| first.map(|f| f + c))
    }
}

#[derive(Debug, Clone)]
pub struct SpaceTree<const D: usize> {
    cells: Vec<Cell<D>>,
    order: Vec<usize>,
    points: Vec<[f64; D]>,
}

pub type QuadTree = SpaceTree<2>;
pub type Octree = SpaceTree<3>;

#[inline]
fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for k in 0..D {
        let t = a[k] - b[k];
        s += t * t;
    }
    s
}

fn diagonal_of<const D: usize>(half: &[f64; D]) -> f64 {
    2.0 * half.iter().map(|h| h * h).sum::<f64>().sqrt()
}

impl<const D: usize> SpaceTree<D> {
    pub fn build(y: &Embedding) -> Self {
        assert_eq!(y.dims(), D, "embedding has {} dims, tree expects {D}", y.dims());
        let points: Vec<[f64; D]> = (0..y.n())
            .map(|i| {
                let mut p = [0.0; D];
                p.copy_from_slice(y.point(i));
                p
            })
            .collect();
        Self::from_points(points)
    }

    pub fn from_points(points: Vec<[f64; D]>) -> Self {
        let n = points.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut cells: Vec<Cell<D>> = Vec::with_capacity(2 * n + 1);

        let (mut lo, mut hi) = ([f64::INFINITY; D], [f64::NEG_INFINITY; D]);
        for p in &points {
            for k in 0..D {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let mut center = [0.0; D];
        let mut half = [0.0; D];
        if n > 0 {
            for k in 0..D {
                center[k] = 0.5 * (lo[k] + hi[k]);
                half[k] = 0.5 * (hi[k] - lo[k]) * (1.0 + ROOT_MARGIN);
                if half[k] == 0.0 {
                    half[k] = ROOT_MARGIN * center[k].abs().max(1.0);
                }
            }
        }
        cells.push(Cell {
            center,
            half_extent: half,
            com: [0.0; D],
            count: n,
            first_child: None,
            depth: 0,
            start: 0,
            end: n,
            diag: diagonal_of(&half),
        });

        let mut scratch: Vec<usize> = Vec::new();
        let mut stack = vec![0usize];
        while let Some(ci) = stack.pop() {
            let (start, end) = (cells[ci].start, cells[ci].end);
            let count = end - start;
            let mut com = [0.0; D];
            for &i in &order[start..end] {
                for k in 0..D {
                    com[k] += points[i][k];
                }
            }
            if count > 0 {
                for c in com.iter_mut() {
                    *c /= count as f64;
                }
            }
            cells[ci].com = com;
            cells[ci].count = count;

            let cell = &cells[ci];
            if count <= 1 || cell.depth >= MAX_DEPTH || cell.diagonal() < MIN_DIAGONAL {
                continue;
            }

            // Bucket points by child; coordinates equal to the center go low.
            let center = cell.center;
            let child_of = |p: &[f64; D]| (0..D).fold(0usize, |acc, k| acc | (usize::from(p[k] > center[k]) << k));
            let mut counts = vec![0usize; Cell::<D>::CHILDREN];
            for &i in &order[start..end] {
                counts[child_of(&points[i])] += 1;
            }
            let mut offsets = Vec::with_capacity(Cell::<D>::CHILDREN + 1);
            offsets.push(start);
            for c in &counts {
                offsets.push(offsets.last().unwrap() + c);
            }
            scratch.clear();
            scratch.extend_from_slice(&order[start..end]);
            let mut fill = offsets.clone();
            for &i in &scratch {
                let c = child_of(&points[i]);
                order[fill[c]] = i;
                fill[c] += 1;
            }

            let first = cells.len();
            let (half, depth) = (cells[ci].half_extent, cells[ci].depth);
            for c in 0..Cell::<D>::CHILDREN {
                let mut cc = center;
                let mut ch = half;
                for k in 0..D {
                    ch[k] = 0.5 * half[k];
                    cc[k] += if (c >> k) & 1 == 1 { ch[k] } else { -ch[k] };
                }
                cells.push(Cell {
                    center: cc,
                    half_extent: ch,
                    com: [0.0; D],
                    count: offsets[c + 1] - offsets[c],
                    first_child: None,
                    depth: depth + 1,
                    start: offsets[c],
                    end: offsets[c + 1],
                    diag: diagonal_of(&ch),
                });
                if offsets[c + 1] > offsets[c] {
                    stack.push(first + c);
                }
            }
            cells[ci].first_child = Some(first);
        }

        Self { cells, order, points }
    }

    #[inline]
    pub fn root(&self) -> &Cell<D> {
        &self.cells[0]
    }

    #[inline]
    pub fn cell(&self, i: usize) -> &Cell<D> {
        &self.cells[i]
    }

    pub fn cells(&self) -> &[Cell<D>] {
        &self.cells
    }

    /// Indices of all points inside a cell.
    #[inline]
    pub fn points_in(&self, cell: &Cell<D>) -> &[usize] {
        &self.order[cell.start..cell.end]
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64; D] {
        &self.points[i]
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn max_depth(&self) -> usize {
        self.cells.iter().map(|c| c.depth).max().unwrap_or(0)
    }
}

/// Whether `cell` may stand in for all of its points when seen from `yi`
/// (point `i`). Never true for empty cells, cells whose center of mass
/// coincides with `yi`, or a leaf holding `i` itself.
#[inline]
pub fn check_summary<const D: usize>(
    tree: &SpaceTree<D>,
    cell: &Cell<D>,
    i: usize,
    yi: &[f64; D],
    theta: f64,
    condition: Condition,
) -> bool {
    if cell.count == 0 {
        return false;
    }
    let d2 = sq_dist(yi, &cell.com);
    if d2 == 0.0 {
        return false;
    }
    summary_condition(cell.diagonal(), d2, theta, condition) && !(cell.is_leaf() && tree.points_in(cell).contains(&i))
}

/// The size/distance test on a cell diagonal `r` and squared distance `d2`.
#[inline]
pub fn summary_condition(r: f64, d2: f64, theta: f64, condition: Condition) -> bool {
    match condition {
        Condition::Standard => r < theta * d2.sqrt(),
        Condition::PaperLiteral => d2 < theta * r,
    }
}
