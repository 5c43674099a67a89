use rand::Rng;
use rand_distr::StandardNormal;

use super::{NoiseModel, WorldError, WorldMap};
use crate::camera_api::{DepthScan, SemanticLabel, SemanticScan};
use crate::geometry::{Point, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitKind {
    Wall,
    /// Index into `WorldMap::objects`.
    Object(usize),
    Nothing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub kind: HitKind,
}

/// Bearing of ray `index` relative to the heading, in degrees. Rays are evenly
/// spaced starting at `-fov/2`.
pub fn ray_angle(fov: f64, n_rays: usize, index: usize) -> f64 {
    -0.5 * fov + index as f64 * fov / n_rays as f64
}

fn cast_grid(world: &WorldMap, origin: Point, dx: f64, dy: f64, max_range: f64) -> Option<f64> {
    let g = &world.grid;
    let res = g.resolution();
    let (mut col, mut row) = g.cell_of(origin);
    if g.is_occupied(col, row) {
        return Some(0.0);
    }
    let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
    let mut t_max_x = if dx > 0.0 {
        ((col + 1) as f64 * res - origin.x) / dx
    } else if dx < 0.0 {
        (col as f64 * res - origin.x) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        ((row + 1) as f64 * res - origin.y) / dy
    } else if dy < 0.0 {
        (row as f64 * res - origin.y) / dy
    } else {
        f64::INFINITY
    };
    let t_dx = if dx != 0.0 { res / dx.abs() } else { f64::INFINITY };
    let t_dy = if dy != 0.0 { res / dy.abs() } else { f64::INFINITY };
    loop {
        let t = if t_max_x < t_max_y {
            col += step_c;
            let t = t_max_x;
            t_max_x += t_dx;
            t
        } else {
            row += step_r;
            let t = t_max_y;
            t_max_y += t_dy;
            t
        };
        if t > max_range {
            return None;
        }
        if g.is_occupied(col, row) {
            return Some(t.max(0.0));
        }
    }
}

fn cast_disc(origin: Point, dx: f64, dy: f64, center: Point, radius: f64) -> Option<f64> {
    let ox = origin.x - center.x;
    let oy = origin.y - center.y;
    let c = ox * ox + oy * oy - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = ox * dx + oy * dy;
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

/// First intersection of a ray with a wall cell or object footprint.
/// Misses report `max_range` with `HitKind::Nothing`.
pub fn cast_ray(world: &WorldMap, origin: Point, angle_deg: f64, max_range: f64) -> RayHit {
    let (dy, dx) = angle_deg.to_radians().sin_cos();
    let mut best = RayHit {
        distance: max_range,
        kind: HitKind::Nothing,
    };
    if let Some(t) = cast_grid(world, origin, dx, dy, max_range) {
        best = RayHit {
            distance: t,
            kind: HitKind::Wall,
        };
    }
    for (i, o) in world.objects.iter().enumerate() {
        if let Some(t) = cast_disc(origin, dx, dy, o.centroid(), o.radius) {
            if t <= max_range && t < best.distance {
                best = RayHit {
                    distance: t,
                    kind: HitKind::Object(i),
                };
            }
        }
    }
    best
}

fn check_sensor(world: &WorldMap, pose: &Pose2D, fov: f64, n_rays: usize, max_range: f64) -> Result<(), WorldError> {
    if n_rays == 0 {
        return Err(WorldError::BadSensor("n_rays must be at least 1"));
    }
    if !(fov > 0.0 && fov <= 360.0) {
        return Err(WorldError::BadSensor("fov must lie in (0, 360]"));
    }
    if !(max_range.is_finite() && max_range > 0.0) {
        return Err(WorldError::BadSensor("max_range must be positive"));
    }
    if world.grid.point_occupied(pose.position()) {
        return Err(WorldError::PoseOccupied {
            x: pose.x,
            y: pose.y,
        });
    }
    Ok(())
}

fn cast_all(world: &WorldMap, pose: &Pose2D, fov: f64, n_rays: usize, max_range: f64) -> Vec<RayHit> {
    let origin = pose.position();
    (0..n_rays)
        .map(|i| cast_ray(world, origin, pose.heading + ray_angle(fov, n_rays, i), max_range))
        .collect()
}

fn noisy_depth<R: Rng + ?Sized>(hits: &[RayHit], max_range: f64, noise: &NoiseModel, rng: &mut R) -> Vec<f64> {
    hits.iter()
        .map(|h| {
            let clean = h.distance.min(max_range);
            let u: f64 = rng.random();
            if u < noise.depth_dropout_prob {
                0.0
            } else if u < noise.depth_dropout_prob + noise.depth_impulse_prob {
                // uniform in (0, max_range]
                max_range * (1.0 - rng.random::<f64>())
            } else if noise.depth_gaussian_sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                (clean + noise.depth_gaussian_sigma * z).clamp(1e-3, max_range)
            } else {
                clean
            }
        })
        .collect()
}

fn semantic_from(world: &WorldMap, hits: &[RayHit]) -> (Vec<SemanticLabel>, Vec<f64>, Vec<bool>) {
    let mut labels = Vec::with_capacity(hits.len());
    let mut ranges = Vec::with_capacity(hits.len());
    let mut visible = Vec::with_capacity(hits.len());
    for h in hits {
        let label = match h.kind {
            HitKind::Wall => SemanticLabel::Wall,
            HitKind::Object(i) => SemanticLabel::Object(world.objects[i].category),
            HitKind::Nothing => SemanticLabel::None,
        };
        visible.push(matches!(label, SemanticLabel::Object(_)));
        labels.push(label);
        ranges.push(h.distance);
    }
    (labels, ranges, visible)
}

/// Range scan of `n_rays` rays spread over `fov` degrees centred on the heading.
pub fn render_depth<R: Rng + ?Sized>(
    world: &WorldMap,
    pose: &Pose2D,
    fov: f64,
    n_rays: usize,
    max_range: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<DepthScan, WorldError> {
    check_sensor(world, pose, fov, n_rays, max_range)?;
    let hits = cast_all(world, pose, fov, n_rays, max_range);
    Ok(DepthScan {
        ranges: noisy_depth(&hits, max_range, noise, rng),
        fov,
        max_range,
        stamp: 0.0,
        pose_hint: *pose,
    })
}

/// Per-ray category of the first surface hit. Noise-free by construction.
pub fn render_semantic(
    world: &WorldMap,
    pose: &Pose2D,
    fov: f64,
    n_rays: usize,
    max_range: f64,
) -> Result<SemanticScan, WorldError> {
    check_sensor(world, pose, fov, n_rays, max_range)?;
    let hits = cast_all(world, pose, fov, n_rays, max_range);
    let (labels, hit_ranges, visible) = semantic_from(world, &hits);
    Ok(SemanticScan {
        labels,
        hit_ranges,
        visible,
        fov,
        max_range,
        stamp: 0.0,
        pose_hint: *pose,
    })
}

/// Both scans from a single raycast pass, as the camera captures them.
pub fn render_pair<R: Rng + ?Sized>(
    world: &WorldMap,
    pose: &Pose2D,
    fov: f64,
    n_rays: usize,
    max_range: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<(SemanticScan, DepthScan), WorldError> {
    check_sensor(world, pose, fov, n_rays, max_range)?;
    let hits = cast_all(world, pose, fov, n_rays, max_range);
    let ranges = noisy_depth(&hits, max_range, noise, rng);
    let (labels, hit_ranges, visible) = semantic_from(world, &hits);
    Ok((
        SemanticScan {
            labels,
            hit_ranges,
            visible,
            fov,
            max_range,
            stamp: 0.0,
            pose_hint: *pose,
        },
        DepthScan {
            ranges,
            fov,
            max_range,
            stamp: 0.0,
            pose_hint: *pose,
        },
    ))
}
