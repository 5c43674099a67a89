use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Category, WorldError, DEFAULT_ROBOT_RADIUS};
use crate::geometry::{Point, Pose2D};

/// Occupancy bitmap. Cell `(col, row)` covers the half-open square
/// `[col·res, (col+1)·res) × [row·res, (row+1)·res)`; row 0 is the southern edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    resolution: f64,
    occupied: Vec<bool>,
}

impl Grid {
    pub fn new(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            occupied: vec![false; width * height],
        }
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

    /// Extent in meters along x and y.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    /// Cells outside the grid count as occupied.
    pub fn is_occupied(&self, col: i64, row: i64) -> bool {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return true;
        }
        self.occupied[row as usize * self.width + col as usize]
    }

    pub fn set(&mut self, col: usize, row: usize, occupied: bool) {
        self.occupied[row * self.width + col] = occupied;
    }

    pub fn cell_of(&self, p: Point) -> (i64, i64) {
        (
            (p.x / self.resolution).floor() as i64,
            (p.y / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, col: i64, row: i64) -> Point {
        Point::new(
            (col as f64 + 0.5) * self.resolution,
            (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn point_occupied(&self, p: Point) -> bool {
        let (c, r) = self.cell_of(p);
        self.is_occupied(c, r)
    }

    /// Row strings, northern row first, as stored in world files.
    pub fn to_rows(&self) -> Vec<String> {
        (0..self.height)
            .rev()
            .map(|row| {
                (0..self.width)
                    .map(|col| if self.occupied[row * self.width + col] { '#' } else { '.' })
                    .collect()
            })
            .collect()
    }

    pub fn from_rows(rows: &[String], resolution: f64) -> Result<Self, WorldError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(WorldError::BadResolution(resolution));
        }
        let height = rows.len();
        let width = rows.first().map(|r| r.chars().count()).unwrap_or(0);
        if height == 0 || width == 0 {
            return Err(WorldError::EmptyGrid);
        }
        let mut grid = Grid::new(width, height, resolution);
        for (file_row, text) in rows.iter().enumerate() {
            let got = text.chars().count();
            if got != width {
                return Err(WorldError::RaggedGrid {
                    row: file_row,
                    got,
                    expected: width,
                });
            }
            let row = height - 1 - file_row;
            for (col, ch) in text.chars().enumerate() {
                let occ = match ch {
                    '#' => true,
                    '.' => false,
                    _ => {
                        return Err(WorldError::BadCell {
                            row: file_row,
                            col,
                            ch,
                        })
                    }
                };
                grid.set(col, row, occ);
            }
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: Category,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl ObjectInstance {
    pub fn centroid(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WorldFile {
    #[serde(default)]
    name: Option<String>,
    resolution: f64,
    #[serde(default)]
    robot_radius: Option<f64>,
    grid: Vec<String>,
    #[serde(default)]
    objects: Vec<ObjectInstance>,
    #[serde(default)]
    starts: Vec<Pose2D>,
}

/// Immutable world description. Share it behind an `Arc`.
#[derive(Debug, Clone)]
pub struct WorldMap {
    pub name: String,
    pub grid: Grid,
    pub objects: Vec<ObjectInstance>,
    pub starts: Vec<Pose2D>,
    pub robot_radius: f64,
    digest: String,
}

impl WorldMap {
    pub fn from_json_str(text: &str) -> Result<Self, WorldError> {
        let file: WorldFile = serde_json::from_str(text)?;
        let grid = Grid::from_rows(&file.grid, file.resolution)?;
        let starts = file
            .starts
            .iter()
            .map(|s| Pose2D::new(s.x, s.y, s.heading))
            .collect();
        let mut world = WorldMap {
            name: file.name.unwrap_or_else(|| "world".to_string()),
            grid,
            objects: file.objects,
            starts,
            robot_radius: file.robot_radius.unwrap_or(DEFAULT_ROBOT_RADIUS),
            digest: String::new(),
        };
        world.validate()?;
        world.digest = world.compute_digest();
        Ok(world)
    }

    /// Build from parts and validate, as `load_world` would.
    pub fn new(
        name: &str,
        grid: Grid,
        objects: Vec<ObjectInstance>,
        starts: Vec<Pose2D>,
    ) -> Result<Self, WorldError> {
        let mut world = WorldMap {
            name: name.to_string(),
            grid,
            objects,
            starts,
            robot_radius: DEFAULT_ROBOT_RADIUS,
            digest: String::new(),
        };
        world.validate()?;
        world.digest = world.compute_digest();
        Ok(world)
    }

    pub fn to_json(&self) -> String {
        let file = WorldFile {
            name: Some(self.name.clone()),
            resolution: self.grid.resolution(),
            robot_radius: Some(self.robot_radius),
            grid: self.grid.to_rows(),
            objects: self.objects.clone(),
            starts: self.starts.clone(),
        };
        serde_json::to_string_pretty(&file).expect("world serializes")
    }

    /// Content hash over grid, objects and starts; used to match logs to worlds.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    fn compute_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.grid.resolution().to_le_bytes());
        for row in self.grid.to_rows() {
            h.update(row.as_bytes());
            h.update(b"\n");
        }
        for o in &self.objects {
            h.update(o.category.as_str().as_bytes());
            for v in [o.x, o.y, o.radius] {
                h.update(v.to_le_bytes());
            }
        }
        for s in &self.starts {
            for v in [s.x, s.y, s.heading] {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let g = &self.grid;
        let (w, h) = (g.width(), g.height());
        for col in 0..w {
            for row in [0, h - 1] {
                if !g.is_occupied(col as i64, row as i64) {
                    return Err(WorldError::OpenBoundary {
                        row: h - 1 - row,
                        col,
                    });
                }
            }
        }
        for row in 0..h {
            for col in [0, w - 1] {
                if !g.is_occupied(col as i64, row as i64) {
                    return Err(WorldError::OpenBoundary {
                        row: h - 1 - row,
                        col,
                    });
                }
            }
        }
        for (index, o) in self.objects.iter().enumerate() {
            if !(o.radius.is_finite() && o.radius > 0.0) {
                return Err(WorldError::BadObjectRadius {
                    index,
                    category: o.category,
                });
            }
            if g.point_occupied(o.centroid()) {
                return Err(WorldError::ObjectInWall {
                    index,
                    category: o.category,
                    x: o.x,
                    y: o.y,
                });
            }
        }
        if self.starts.is_empty() {
            return Err(WorldError::NoStarts);
        }
        for (index, s) in self.starts.iter().enumerate() {
            if check_collision(self, s, self.robot_radius) {
                return Err(WorldError::StartBlocked {
                    index,
                    x: s.x,
                    y: s.y,
                    radius: self.robot_radius,
                });
            }
        }
        Ok(())
    }

    pub fn categories(&self) -> Vec<Category> {
        let mut cats: Vec<Category> = self.objects.iter().map(|o| o.category).collect();
        cats.sort();
        cats.dedup();
        cats
    }

    pub fn has_category(&self, category: Category) -> bool {
        self.objects.iter().any(|o| o.category == category)
    }
}

/// The apartment floor plan shipped with the crate.
pub fn bundled_apartment() -> WorldMap {
    WorldMap::from_json_str(include_str!("../../data/apartment.json")).expect("bundled map parses")
}

pub fn load_world(path: impl AsRef<Path>) -> Result<WorldMap, WorldError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    WorldMap::from_json_str(&text)
}

fn point_rect_distance(p: Point, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let dx = (x0 - p.x).max(0.0).max(p.x - x1);
    let dy = (y0 - p.y).max(0.0).max(p.y - y1);
    dx.hypot(dy)
}

/// True iff the disc of `radius` at `pose` touches an occupied cell or an
/// object footprint. A zero radius tests point containment under the
/// half-open cell convention.
pub fn check_collision(world: &WorldMap, pose: &Pose2D, radius: f64) -> bool {
    let p = pose.position();
    let g = &world.grid;
    if g.point_occupied(p) {
        return true;
    }
    if radius > 0.0 {
        let res = g.resolution();
        let (c0, r0) = g.cell_of(Point::new(p.x - radius, p.y - radius));
        let (c1, r1) = g.cell_of(Point::new(p.x + radius, p.y + radius));
        for row in r0..=r1 {
            for col in c0..=c1 {
                if !g.is_occupied(col, row) {
                    continue;
                }
                let x0 = col as f64 * res;
                let y0 = row as f64 * res;
                if point_rect_distance(p, x0, y0, x0 + res, y0 + res) < radius {
                    return true;
                }
            }
        }
    }
    world
        .objects
        .iter()
        .any(|o| p.distance(&o.centroid()) < radius + o.radius)
}

/// Euclidean distance from `pose` to the nearest centroid of `category`.
pub fn distance_to_object(
    world: &WorldMap,
    pose: &Pose2D,
    category: Category,
) -> Result<f64, WorldError> {
    let p = pose.position();
    world
        .objects
        .iter()
        .filter(|o| o.category == category)
        .map(|o| p.distance(&o.centroid()))
        .min_by(f64::total_cmp)
        .ok_or(WorldError::CategoryAbsent(category))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn room(w_cells: usize, h_cells: usize, res: f64) -> Grid {
        let mut g = Grid::new(w_cells, h_cells, res);
        for c in 0..w_cells {
            g.set(c, 0, true);
            g.set(c, h_cells - 1, true);
        }
        for r in 0..h_cells {
            g.set(0, r, true);
            g.set(w_cells - 1, r, true);
        }
        g
    }

    fn chair(x: f64, y: f64) -> ObjectInstance {
        ObjectInstance {
            category: Category::Chair,
            x,
            y,
            radius: 0.2,
        }
    }

    #[test]
    fn empty_room_with_chair_loads() {
        let g = room(200, 200, 0.05);
        let w = WorldMap::new("room", g, vec![chair(7.0, 7.0)], vec![Pose2D::new(5.0, 5.0, 0.0)]).unwrap();
        assert_eq!(w.categories(), vec![Category::Chair]);
        assert_eq!(w.digest().len(), 64);
    }

    #[test]
    fn object_in_wall_is_named() {
        let g = room(40, 40, 0.05);
        let err = WorldMap::new("r", g, vec![chair(0.02, 1.0)], vec![Pose2D::new(1.0, 1.0, 0.0)])
            .unwrap_err();
        assert!(err.to_string().contains("chair"));
        match err {
            WorldError::ObjectInWall { index, category, .. } => {
                assert_eq!(index, 0);
                assert_eq!(category, Category::Chair);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn start_clearance_and_count() {
        let g = room(40, 40, 0.05);
        assert!(matches!(
            WorldMap::new("r", g.clone(), vec![], vec![]),
            Err(WorldError::NoStarts)
        ));
        // 0.1 m from the inner wall face: too close for a 0.18 m robot
        assert!(matches!(
            WorldMap::new("r", g, vec![], vec![Pose2D::new(0.15, 1.0, 0.0)]),
            Err(WorldError::StartBlocked { index: 0, .. })
        ));
    }

    #[test]
    fn open_boundary_rejected() {
        let mut g = room(10, 10, 0.1);
        g.set(5, 0, false);
        assert!(matches!(
            WorldMap::new("r", g, vec![], vec![Pose2D::new(0.5, 0.5, 0.0)]),
            Err(WorldError::OpenBoundary { .. })
        ));
    }

    #[test]
    fn json_roundtrip_and_parse_errors() {
        let g = room(20, 10, 0.1);
        let w = WorldMap::new("r", g, vec![chair(1.0, 0.5)], vec![Pose2D::new(0.5, 0.5, 90.0)]).unwrap();
        let back = WorldMap::from_json_str(&w.to_json()).unwrap();
        assert_eq!(back.grid, w.grid);
        assert_eq!(back.digest(), w.digest());
        assert!(matches!(WorldMap::from_json_str("{"), Err(WorldError::Parse(_))));
        let bad = r####"{"resolution":0.1,"grid":["###","#x#","###"],"starts":[{"x":0.15,"y":0.15,"heading":0}]}"####;
        assert!(matches!(
            WorldMap::from_json_str(bad),
            Err(WorldError::BadCell { ch: 'x', .. })
        ));
    }

    #[test]
    fn collision_cases() {
        let g = room(80, 80, 0.05);
        let w = WorldMap::new("r", g, vec![chair(3.0, 3.0)], vec![Pose2D::new(2.0, 2.0, 0.0)]).unwrap();
        assert!(!check_collision(&w, &Pose2D::new(2.0, 2.0, 0.0), 0.18));
        assert!(check_collision(&w, &Pose2D::new(0.2, 2.0, 0.0), 0.18));
        assert!(check_collision(&w, &Pose2D::new(3.3, 3.0, 0.0), 0.18));
        assert!(check_collision(&w, &Pose2D::new(-1.0, 2.0, 0.0), 0.0));
    }

    #[test]
    fn distances() {
        let g = room(80, 80, 0.05);
        let objs = vec![
            chair(0.6 + 1.0, 0.8 + 1.0),
            ObjectInstance { category: Category::Bed, x: 3.0, y: 1.0, radius: 0.3 },
            ObjectInstance { category: Category::Bed, x: 1.5, y: 1.0, radius: 0.3 },
        ];
        let w = WorldMap::new("r", g, objs, vec![Pose2D::new(1.0, 1.0, 0.0)]).unwrap();
        let at = Pose2D::new(1.0, 1.0, 0.0);
        assert!((distance_to_object(&w, &at, Category::Chair).unwrap() - 1.0).abs() < 1e-12);
        assert!((distance_to_object(&w, &at, Category::Bed).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            distance_to_object(&w, &at, Category::Plant),
            Err(WorldError::CategoryAbsent(Category::Plant))
        ));
    }
}
