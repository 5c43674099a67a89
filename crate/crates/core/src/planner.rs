//! Occupancy mapping from depth scans and a fast-marching geodesic planner.
//!
//! Grid coordinates: cell `(col, row)` covers
//! `[origin.x + col·res, origin.x + (col+1)·res) × [origin.y + row·res, …)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera_api::DepthScan;
use crate::discrete_move::{DiscreteAction, DEFAULT_STEP_M, DEFAULT_TURN_DEG};
use crate::geometry::{signed_deg, Point, Pose2D};
use crate::sim_world::WorldMap;

/// Eikonal slowness of unknown cells relative to known-free cells.
pub const UNKNOWN_SLOWNESS: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("goal ({x:.3}, {y:.3}) is outside the grid or inside an obstacle")]
    GoalBlocked { x: f64, y: f64 },
    #[error("no goal cells given")]
    NoGoal,
    #[error("start ({x:.3}, {y:.3}) cannot reach the goal")]
    Unreachable { x: f64, y: f64 },
    #[error("path is empty")]
    EmptyPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    Unknown,
    Free,
    Occupied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Point,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Point) -> Result<Self, PlannerError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(PlannerError::BadResolution(resolution));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![Cell::Unknown; width * height],
        })
    }

    /// Square grid of side `size` meters centred on `center`.
    pub fn centered(center: Point, size: f64, resolution: f64) -> Result<Self, PlannerError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(PlannerError::BadResolution(resolution));
        }
        let n = (size / resolution).ceil().max(1.0) as usize;
        let half = n as f64 * resolution / 2.0;
        Self::new(n, n, resolution, Point::new(center.x - half, center.y - half))
    }

    /// Fully known grid from a world's floor plan and object footprints.
    pub fn from_world(world: &WorldMap) -> Self {
        let g = &world.grid;
        let mut grid = Self::new(g.width(), g.height(), g.resolution(), Point::new(0.0, 0.0))
            .expect("world resolution is validated");
        for row in 0..g.height() {
            for col in 0..g.width() {
                let occ = g.is_occupied(col as i64, row as i64) || {
                    let c = g.cell_center(col as i64, row as i64);
                    world.objects.iter().any(|o| c.distance(&o.centroid()) < o.radius)
                };
                grid.cells[row * g.width() + col] = if occ { Cell::Occupied } else { Cell::Free };
            }
        }
        grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, col: i64, row: i64) -> Option<usize> {
        (col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height)
            .then(|| row as usize * self.width + col as usize)
    }

    pub fn coords(&self, idx: usize) -> (i64, i64) {
        ((idx % self.width) as i64, (idx / self.width) as i64)
    }

    pub fn cell_of(&self, p: Point) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    pub fn index_of(&self, p: Point) -> Option<usize> {
        let (c, r) = self.cell_of(p);
        self.index(c, r)
    }

    pub fn cell_center(&self, col: i64, row: i64) -> Point {
        Point::new(
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// Cells outside the grid read as unknown.
    pub fn get(&self, col: i64, row: i64) -> Cell {
        self.index(col, row).map_or(Cell::Unknown, |i| self.cells[i])
    }

    pub fn at(&self, p: Point) -> Cell {
        let (c, r) = self.cell_of(p);
        self.get(c, r)
    }

    pub fn set(&mut self, col: i64, row: i64, cell: Cell) {
        if let Some(i) = self.index(col, row) {
            self.cells[i] = cell;
        }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn count(&self, kind: Cell) -> usize {
        self.cells.iter().filter(|c| **c == kind).count()
    }

    fn mark_free(&mut self, p: Point) {
        if let Some(i) = self.index_of(p) {
            if self.cells[i] == Cell::Unknown {
                self.cells[i] = Cell::Free;
            }
        }
    }

    fn mark_occupied(&mut self, p: Point) {
        if let Some(i) = self.index_of(p) {
            self.cells[i] = Cell::Occupied;
        }
    }

    /// Ray-trace one scan taken at `pose`. Readings at or beyond the scan's
    /// maximum range clear space without marking a hit; zero readings are
    /// dropouts and mark nothing.
    pub fn integrate(&mut self, scan: &DepthScan, pose: &Pose2D) {
        let origin = pose.position();
        let step = self.resolution / 4.0;
        for (i, &r) in scan.ranges.iter().enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                continue;
            }
            let a = (pose.heading + scan.bearing(i)).to_radians();
            let (dy, dx) = a.sin_cos();
            let hit = r < scan.max_range - 1e-9;
            let reach = r.min(scan.max_range);
            let mut t = 0.0;
            while t < reach {
                self.mark_free(Point::new(origin.x + t * dx, origin.y + t * dy));
                t += step;
            }
            if hit {
                self.mark_occupied(Point::new(origin.x + r * dx, origin.y + r * dy));
            }
        }
    }

    /// Cells within `radius` of an occupied cell centre, including the
    /// occupied cells themselves.
    pub fn inflate(&self, radius: f64) -> Vec<bool> {
        let mut blocked: Vec<bool> = self.cells.iter().map(|c| *c == Cell::Occupied).collect();
        let k = (radius / self.resolution).floor() as i64;
        if k <= 0 {
            return blocked;
        }
        let r2 = (radius / self.resolution).powi(2) + 1e-9;
        let offsets: Vec<(i64, i64)> = (-k..=k)
            .flat_map(|dr| (-k..=k).map(move |dc| (dc, dr)))
            .filter(|&(dc, dr)| (dc * dc + dr * dr) as f64 <= r2 && (dc, dr) != (0, 0))
            .collect();
        for (idx, cell) in self.cells.iter().enumerate() {
            if *cell != Cell::Occupied {
                continue;
            }
            let (c, r) = self.coords(idx);
            for &(dc, dr) in &offsets {
                if let Some(j) = self.index(c + dc, r + dr) {
                    blocked[j] = true;
                }
            }
        }
        blocked
    }
}

/// Accumulate scans into a grid covering every pose plus the sensor range.
pub fn build_occupancy(scans: &[(DepthScan, Pose2D)], resolution: f64) -> Result<OccupancyGrid, PlannerError> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(PlannerError::BadResolution(resolution));
    }
    if scans.is_empty() {
        return OccupancyGrid::new(1, 1, resolution, Point::new(0.0, 0.0));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (scan, pose) in scans {
        let m = scan.max_range + resolution;
        x0 = x0.min(pose.x - m);
        y0 = y0.min(pose.y - m);
        x1 = x1.max(pose.x + m);
        y1 = y1.max(pose.y + m);
    }
    let origin = Point::new(
        (x0 / resolution).floor() * resolution,
        (y0 / resolution).floor() * resolution,
    );
    let w = ((x1 - origin.x) / resolution).ceil() as usize;
    let h = ((y1 - origin.y) / resolution).ceil() as usize;
    let mut grid = OccupancyGrid::new(w, h, resolution, origin)?;
    for (scan, pose) in scans {
        grid.integrate(scan, pose);
    }
    Ok(grid)
}

/// Per-cell traversal cost used by the eikonal solver: `None` blocks the cell.
fn slowness(grid: &OccupancyGrid, blocked: &[bool], idx: usize) -> Option<f64> {
    if blocked[idx] {
        return None;
    }
    Some(match grid.cells[idx] {
        Cell::Unknown => UNKNOWN_SLOWNESS,
        _ => 1.0,
    })
}

/// Arrival times in meters at unit speed through known-free space.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub values: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Point,
    pub goals: Vec<usize>,
    /// Cells the planner may occupy (not inflated-occupied).
    pub traversable: Vec<bool>,
}

impl DistanceField {
    fn index(&self, col: i64, row: i64) -> Option<usize> {
        (col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height)
            .then(|| row as usize * self.width + col as usize)
    }

    pub fn cell_of(&self, p: Point) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, col: i64, row: i64) -> Point {
        Point::new(
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// Value of a cell; outside the grid is infinite.
    pub fn value(&self, col: i64, row: i64) -> f64 {
        self.index(col, row).map_or(f64::INFINITY, |i| self.values[i])
    }

    pub fn value_at(&self, p: Point) -> f64 {
        let (c, r) = self.cell_of(p);
        self.value(c, r)
    }

    /// True if `p` lies in a cell outside the inflated obstacles.
    pub fn is_free(&self, p: Point) -> bool {
        let (c, r) = self.cell_of(p);
        self.index(c, r).is_some_and(|i| self.traversable[i])
    }

    pub fn is_goal(&self, col: i64, row: i64) -> bool {
        self.value(col, row) == 0.0
    }

    /// Bilinear interpolation between cell centres; infinite corners are
    /// replaced by the largest finite corner plus one cell so the gradient
    /// points away from obstacles.
    pub fn interpolate(&self, p: Point) -> f64 {
        let fx = (p.x - self.origin.x) / self.resolution - 0.5;
        let fy = (p.y - self.origin.y) / self.resolution - 0.5;
        let (c0, r0) = (fx.floor() as i64, fy.floor() as i64);
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let v = [
            self.value(c0, r0),
            self.value(c0 + 1, r0),
            self.value(c0, r0 + 1),
            self.value(c0 + 1, r0 + 1),
        ];
        let max_finite = v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if max_finite == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        let v = v.map(|x| if x.is_finite() { x } else { max_finite + self.resolution });
        (v[0] * (1.0 - tx) + v[1] * tx) * (1.0 - ty) + (v[2] * (1.0 - tx) + v[3] * tx) * ty
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on value, then index for determinism
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order upwind update from the accepted 4-neighbours of `idx`.
fn upwind(values: &[f64], accepted: &[bool], w: usize, h: usize, idx: usize, cost: f64) -> f64 {
    let (c, r) = (idx % w, idx / w);
    let pick = |j: Option<usize>| j.filter(|&j| accepted[j]).map_or(f64::INFINITY, |j| values[j]);
    let a = pick(c.checked_sub(1).map(|cc| r * w + cc)).min(pick((c + 1 < w).then(|| r * w + c + 1)));
    let b = pick(r.checked_sub(1).map(|rr| rr * w + c)).min(pick((r + 1 < h).then(|| (r + 1) * w + c)));
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi.is_infinite() || hi - lo >= cost {
        lo + cost
    } else {
        0.5 * (lo + hi + (2.0 * cost * cost - (hi - lo) * (hi - lo)).sqrt())
    }
}

/// Options for [`fast_marching_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MarchOptions {
    /// Stop as soon as this point's cell is accepted.
    pub stop_at: Option<Point>,
}

/// Solve the eikonal equation from a single goal point.
pub fn fast_marching(grid: &OccupancyGrid, goal: Point, inflation: f64) -> Result<DistanceField, PlannerError> {
    fast_marching_with(grid, &[goal], inflation, MarchOptions::default())
}

/// Multi-source variant: every goal point's cell starts at its Euclidean
/// offset from the point. Goals inside obstacles are skipped; if all are
/// blocked the call fails.
pub fn fast_marching_with(
    grid: &OccupancyGrid,
    goals: &[Point],
    inflation: f64,
    opts: MarchOptions,
) -> Result<DistanceField, PlannerError> {
    if goals.is_empty() {
        return Err(PlannerError::NoGoal);
    }
    let blocked = grid.inflate(inflation);
    let (w, h) = (grid.width, grid.height);
    let res = grid.resolution;
    let mut values = vec![f64::INFINITY; w * h];
    let mut accepted = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    let mut goal_cells = Vec::new();
    for g in goals {
        let Some(i) = grid.index_of(*g) else { continue };
        if blocked[i] {
            continue;
        }
        if !goal_cells.contains(&i) {
            goal_cells.push(i);
        }
        values[i] = 0.0;
        heap.push(Entry(0.0, i));
    }
    if goal_cells.is_empty() {
        return Err(PlannerError::GoalBlocked {
            x: goals[0].x,
            y: goals[0].y,
        });
    }
    // exact distances in the immediate neighbourhood of a single point source
    // remove the start-up error of the first-order stencil
    if goal_cells.len() == 1 {
        let g = goals[0];
        let (gc, gr) = grid.cell_of(g);
        for dr in -2..=2i64 {
            for dc in -2..=2i64 {
                let Some(j) = grid.index(gc + dc, gr + dr) else { continue };
                if blocked[j] || (dc, dr) == (0, 0) {
                    continue;
                }
                let clear = line_clear(grid, &blocked, gc, gr, gc + dc, gr + dr);
                if clear {
                    let (c, r) = grid.coords(j);
                    let v = grid.cell_center(c, r).distance(&g) * slowness(grid, &blocked, j).unwrap_or(1.0);
                    if v < values[j] {
                        values[j] = v;
                        heap.push(Entry(v, j));
                    }
                }
            }
        }
    }
    let stop = opts.stop_at.and_then(|p| grid.index_of(p));
    while let Some(Entry(v, i)) = heap.pop() {
        if accepted[i] || v > values[i] {
            continue;
        }
        accepted[i] = true;
        if Some(i) == stop {
            break;
        }
        let (c, r) = grid.coords(i);
        for (dc, dr) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let Some(j) = grid.index(c + dc, r + dr) else { continue };
            if accepted[j] {
                continue;
            }
            let Some(s) = slowness(grid, &blocked, j) else { continue };
            let t = upwind(&values, &accepted, w, h, j, s * res);
            if t < values[j] {
                values[j] = t;
                heap.push(Entry(t, j));
            }
        }
    }
    // unaccepted tentative values are not final
    for (v, a) in values.iter_mut().zip(&accepted) {
        if !a {
            *v = f64::INFINITY;
        }
    }
    Ok(DistanceField {
        values,
        width: w,
        height: h,
        resolution: res,
        origin: grid.origin,
        goals: goal_cells,
        traversable: blocked.iter().map(|b| !b).collect(),
    })
}

/// Supercover check that no blocked cell lies between two cell centres.
/// Every cell a centre-to-centre segment touches, including both side cells
/// where it passes exactly through a corner.
fn supercover(c0: i64, r0: i64, c1: i64, r1: i64) -> Vec<(i64, i64)> {
    let (nx, ny) = ((c1 - c0).abs(), (r1 - r0).abs());
    let (sx, sy) = ((c1 - c0).signum(), (r1 - r0).signum());
    let (mut c, mut r) = (c0, r0);
    let mut out = vec![(c, r)];
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        // compare the parameters of the next vertical and horizontal crossings
        let lhs = (1 + 2 * ix) * ny;
        let rhs = (1 + 2 * iy) * nx;
        if ix < nx && iy < ny && lhs == rhs {
            out.push((c + sx, r));
            out.push((c, r + sy));
            c += sx;
            r += sy;
            ix += 1;
            iy += 1;
        } else if iy >= ny || (ix < nx && lhs < rhs) {
            c += sx;
            ix += 1;
        } else {
            r += sy;
            iy += 1;
        }
        out.push((c, r));
    }
    out
}

fn line_clear(grid: &OccupancyGrid, blocked: &[bool], c0: i64, r0: i64, c1: i64, r1: i64) -> bool {
    supercover(c0, r0, c1, r1)
        .into_iter()
        .all(|(c, r)| grid.index(c, r).is_some_and(|j| !blocked[j]))
}

fn step_ok(field: &DistanceField, a: (i64, i64), b: (i64, i64)) -> bool {
    let free = |c: i64, r: i64| field.index(c, r).is_some_and(|i| field.traversable[i] && field.values[i].is_finite());
    if !free(b.0, b.1) {
        return false;
    }
    let (dc, dr) = (b.0 - a.0, b.1 - a.1);
    if dc.abs() > 1 || dr.abs() > 1 {
        return false;
    }
    // diagonal moves may not cut a blocked corner
    dc == 0 || dr == 0 || (free(a.0 + dc, a.1) && free(a.0, a.1 + dr))
}

/// Steepest descent on the field from `start` to the nearest goal cell.
/// Steps are half a cell; when the interpolated gradient stalls or would
/// cross a blocked corner the walk falls back to the best 8-neighbour.
pub fn extract_path(field: &DistanceField, start: Point) -> Result<Vec<Point>, PlannerError> {
    let (sc, sr) = field.cell_of(start);
    let v0 = field.value(sc, sr);
    if !v0.is_finite() {
        return Err(PlannerError::Unreachable { x: start.x, y: start.y });
    }
    let res = field.resolution;
    let mut path = vec![start];
    let mut p = start;
    let mut cell = (sc, sr);
    let limit = 8 * (field.width + field.height) + (4.0 * v0 / res) as usize + 16;
    for _ in 0..limit {
        if field.is_goal(cell.0, cell.1) {
            return Ok(densify(&path, res));
        }
        let e = res * 0.25;
        let gx = field.interpolate(Point::new(p.x + e, p.y)) - field.interpolate(Point::new(p.x - e, p.y));
        let gy = field.interpolate(Point::new(p.x, p.y + e)) - field.interpolate(Point::new(p.x, p.y - e));
        let norm = gx.hypot(gy);
        let mut next = None;
        if norm > 1e-12 && norm.is_finite() {
            let q = Point::new(p.x - 0.5 * res * gx / norm, p.y - 0.5 * res * gy / norm);
            let qc = field.cell_of(q);
            let better = field.value(qc.0, qc.1) <= field.value(cell.0, cell.1) + 1e-12
                && field.interpolate(q) < field.interpolate(p);
            if better && (qc == cell || step_ok(field, cell, qc)) {
                next = Some((q, qc));
            }
        }
        if next.is_none() {
            let cur = field.value(cell.0, cell.1);
            let mut best: Option<(f64, (i64, i64))> = None;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let nc = (cell.0 + dc, cell.1 + dr);
                    if (dc, dr) == (0, 0) || !step_ok(field, cell, nc) {
                        continue;
                    }
                    let v = field.value(nc.0, nc.1);
                    if v < cur && best.is_none_or(|(bv, _)| v < bv) {
                        best = Some((v, nc));
                    }
                }
            }
            if best.is_none() {
                // near a point source the exact start-up values can sit behind a
                // corner; jump along a clear line instead
                for dr in -2..=2i64 {
                    for dc in -2..=2i64 {
                        let nc = (cell.0 + dc, cell.1 + dr);
                        let v = field.value(nc.0, nc.1);
                        let clear = supercover(cell.0, cell.1, nc.0, nc.1).into_iter().all(|(c, r)| {
                            field.index(c, r).is_some_and(|i| field.traversable[i] && field.values[i].is_finite())
                        });
                        if v < cur && clear && best.is_none_or(|(bv, _)| v < bv) {
                            best = Some((v, nc));
                        }
                    }
                }
                if best.is_some() {
                    path.push(field.cell_center(cell.0, cell.1));
                }
            }
            let (_, nc) = best.ok_or(PlannerError::Unreachable { x: p.x, y: p.y })?;
            next = Some((field.cell_center(nc.0, nc.1), nc));
        }
        let (q, qc) = next.expect("set above");
        p = q;
        cell = qc;
        path.push(p);
    }
    Err(PlannerError::Unreachable { x: start.x, y: start.y })
}

/// Split segments so consecutive points are at most `gap` apart.
fn densify(path: &[Point], gap: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(path.len());
    for w in path.windows(2) {
        let n = (w[0].distance(&w[1]) / gap).ceil().max(1.0) as usize;
        for k in 0..n {
            let t = k as f64 / n as f64;
            out.push(Point::new(w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y)));
        }
    }
    out.extend(path.last().copied());
    out
}

/// Like [`extract_path`], but a start cell that is blocked or unreached
/// (for example inside the inflation band) first steps to the nearest
/// reached cell within `radius`.
pub fn extract_path_near(field: &DistanceField, start: Point, radius: f64) -> Result<Vec<Point>, PlannerError> {
    if field.value_at(start).is_finite() {
        return extract_path(field, start);
    }
    let (sc, sr) = field.cell_of(start);
    let k = (radius / field.resolution).ceil() as i64;
    let mut best: Option<(f64, f64, (i64, i64))> = None;
    for dr in -k..=k {
        for dc in -k..=k {
            let (c, r) = (sc + dc, sr + dr);
            let v = field.value(c, r);
            let d = field.cell_center(c, r).distance(&start);
            if v.is_finite() && d <= radius && best.is_none_or(|(bd, bv, _)| (d, v) < (bd, bv)) {
                best = Some((d, v, (c, r)));
            }
        }
    }
    let (_, _, (c, r)) = best.ok_or(PlannerError::Unreachable { x: start.x, y: start.y })?;
    let mut path = vec![start];
    path.extend(extract_path(field, field.cell_center(c, r))?);
    Ok(path)
}

/// Total length of a polyline.
pub fn path_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Greedy discretisation with the standard 0.25 m / 30° quanta.
pub fn path_to_actions(path: &[Point], pose: Pose2D) -> Result<Vec<DiscreteAction>, PlannerError> {
    path_to_actions_with(path, pose, DEFAULT_STEP_M, DEFAULT_TURN_DEG, DEFAULT_STEP_M)
}

/// Discretise a path: aim at the point one step ahead along the path, turn by
/// the multiple of `turn` closest to that bearing, move forward one `step`,
/// repeat until within `tolerance` of the path end.
pub fn path_to_actions_with(
    path: &[Point],
    pose: Pose2D,
    step: f64,
    turn: f64,
    tolerance: f64,
) -> Result<Vec<DiscreteAction>, PlannerError> {
    discretize(path, pose, step, turn, tolerance, None)
}

/// As [`path_to_actions_with`], but when the best-aligned heading would take
/// the forward step through space `free` rejects, the next-best heading whose
/// step stays free is used instead.
pub fn path_to_actions_checked(
    path: &[Point],
    pose: Pose2D,
    step: f64,
    turn: f64,
    tolerance: f64,
    free: &dyn Fn(Point) -> bool,
) -> Result<Vec<DiscreteAction>, PlannerError> {
    discretize(path, pose, step, turn, tolerance, Some(free))
}

fn segment_free(from: Point, to: Point, free: &dyn Fn(Point) -> bool) -> bool {
    let n = ((from.distance(&to) / 0.02).ceil() as usize).max(1);
    (1..=n).all(|k| {
        let t = k as f64 / n as f64;
        free(Point::new(from.x + t * (to.x - from.x), from.y + t * (to.y - from.y)))
    })
}

fn discretize(
    path: &[Point],
    pose: Pose2D,
    step: f64,
    turn: f64,
    tolerance: f64,
    free: Option<&dyn Fn(Point) -> bool>,
) -> Result<Vec<DiscreteAction>, PlannerError> {
    let end = *path.last().ok_or(PlannerError::EmptyPath)?;
    let mut actions = Vec::new();
    let mut cur = pose;
    let mut cursor = 0usize;
    let budget = 4 * ((path_length(path) / step).ceil() as usize + 1) + 2 * (360.0 / turn).ceil() as usize;
    while cur.position().distance(&end) >= tolerance - 1e-9 {
        if actions.len() > budget {
            break;
        }
        // advance the cursor to the path point closest to the robot
        let here = cur.position();
        let mut best = here.distance(&path[cursor]);
        for (k, q) in path.iter().enumerate().skip(cursor + 1) {
            let d = here.distance(q);
            if d < best {
                best = d;
                cursor = k;
            }
        }
        let aim = path[cursor..]
            .iter()
            .find(|q| here.distance(q) >= step)
            .copied()
            .unwrap_or(end);
        let bearing = signed_deg((aim.y - here.y).atan2(aim.x - here.x).to_degrees() - cur.heading);
        let mut n = (bearing / turn).round() as i64;
        if let Some(free) = free {
            let n_max = (180.0 / turn).round() as i64;
            let mut options: Vec<i64> = (-n_max + 1..=n_max).collect();
            options.sort_by(|a, b| {
                let da = (signed_deg(bearing - *a as f64 * turn)).abs();
                let db = (signed_deg(bearing - *b as f64 * turn)).abs();
                da.total_cmp(&db).then(a.abs().cmp(&b.abs()))
            });
            // only headings that still make progress toward the aim point
            if let Some(&k) = options.iter().find(|&&k| {
                let h = Pose2D::new(cur.x, cur.y, cur.heading + k as f64 * turn);
                signed_deg(bearing - k as f64 * turn).abs() < 90.0 && segment_free(here, h.project(0.0, step), free)
            }) {
                n = k;
            }
        }
        for _ in 0..n.unsigned_abs() {
            actions.push(if n > 0 {
                DiscreteAction::left(turn)
            } else {
                DiscreteAction::right(turn)
            });
        }
        cur = Pose2D::new(cur.x, cur.y, cur.heading + n as f64 * turn);
        actions.push(DiscreteAction::forward(step));
        let p = cur.project(0.0, step);
        cur = Pose2D::new(p.x, p.y, cur.heading);
    }
    Ok(actions)
}

/// 8-neighbour Dijkstra over the inflated grid without corner cutting,
/// returning costs in meters. Unknown cells cost the same slowness as in the
/// marching solver.
pub fn dijkstra(grid: &OccupancyGrid, goal: Point, inflation: f64) -> Result<Vec<f64>, PlannerError> {
    let blocked = grid.inflate(inflation);
    let gi = grid
        .index_of(goal)
        .filter(|&i| !blocked[i])
        .ok_or(PlannerError::GoalBlocked { x: goal.x, y: goal.y })?;
    let res = grid.resolution;
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    dist[gi] = 0.0;
    heap.push(Entry(0.0, gi));
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let (c, r) = grid.coords(i);
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                if (dc, dr) == (0, 0) {
                    continue;
                }
                let Some(j) = grid.index(c + dc, r + dr) else { continue };
                let Some(sj) = slowness(grid, &blocked, j) else { continue };
                if dc != 0 && dr != 0 {
                    let side_a = grid.index(c + dc, r).is_some_and(|k| !blocked[k]);
                    let side_b = grid.index(c, r + dr).is_some_and(|k| !blocked[k]);
                    if !(side_a && side_b) {
                        continue;
                    }
                }
                let si = slowness(grid, &blocked, i).unwrap_or(1.0);
                let len = if dc != 0 && dr != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                let nd = d + len * res * 0.5 * (si + sj);
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Entry(nd, j));
                }
            }
        }
    }
    Ok(dist)
}
