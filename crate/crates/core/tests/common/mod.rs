#![allow(dead_code)]

use std::path::PathBuf;

use navstack::geometry::Pose2D;
use navstack::sim_world::{Grid, ObjectInstance, WorldMap};

/// Walled square room, `side` meters, one start in the middle.
pub fn open_room(side: f64) -> WorldMap {
    let res = 0.05;
    let n = (side / res).round() as usize;
    let mut g = Grid::new(n, n, res);
    for k in 0..n {
        g.set(k, 0, true);
        g.set(k, n - 1, true);
        g.set(0, k, true);
        g.set(n - 1, k, true);
    }
    let c = side / 2.0;
    WorldMap::new("open", g, Vec::new(), vec![Pose2D::new(c, c, 0.0)]).expect("open room is valid")
}

pub fn room_with(side: f64, objects: Vec<ObjectInstance>, starts: Vec<Pose2D>) -> WorldMap {
    let mut w = open_room(side);
    let g = w.grid.clone();
    w = WorldMap::new("room", g, objects, starts).expect("room is valid");
    w
}

pub fn apartment_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join("apartment.json")
}

/// Six-meter room with three targets and three starts, all mutually reachable.
pub fn furnished_room() -> WorldMap {
    use navstack::sim_world::Category;
    let objects = vec![
        ObjectInstance { category: Category::Chair, x: 1.0, y: 1.0, radius: 0.25 },
        ObjectInstance { category: Category::Sofa, x: 4.9, y: 1.2, radius: 0.4 },
        ObjectInstance { category: Category::Bed, x: 3.0, y: 5.0, radius: 0.5 },
    ];
    let starts = vec![Pose2D::new(3.0, 3.0, 0.0), Pose2D::new(1.5, 4.5, 90.0), Pose2D::new(4.5, 3.5, 200.0)];
    room_with(6.0, objects, starts)
}
