//! Coordinate system, distance metrics, and travel-time arithmetic shared by
//! all agent kinds.
//!
//! Locations are expressed in meters east/north of the service-area origin.
//! Ground agents move along a rectilinear street proxy (Manhattan distance);
//! flight distance is Euclidean unless a no-fly zone blocks the straight
//! segment, in which case a shortest path on an occupancy grid is used.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("no flight route between endpoints (enclosed by no-fly zones)")]
    NoRoute,
    #[error("speed must be positive, got {0}")]
    InvalidSpeed(f64),
}

/// Position in meters relative to the service-area origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }
}

/// Axis-aligned service-area rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect { min_x, min_y, max_x, max_y }
    }

    pub fn contains(&self, l: Location) -> bool {
        l.x >= self.min_x && l.x <= self.max_x && l.y >= self.min_y && l.y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// Convex polygon given by its vertices (any winding order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    pub vertices: Vec<Location>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Location>) -> Self {
        ConvexPolygon { vertices }
    }

    /// Point-in-polygon test; points on the boundary count as inside.
    pub fn contains(&self, p: Location) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        // Signs of cross products must all agree for a convex polygon.
        let mut pos = false;
        let mut neg = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            if cross > 1e-9 {
                pos = true;
            } else if cross < -1e-9 {
                neg = true;
            }
            if pos && neg {
                return false;
            }
        }
        true
    }

    /// True when segment ab touches the polygon interior or boundary.
    pub fn intersects_segment(&self, a: Location, b: Location) -> bool {
        if self.contains(a) || self.contains(b) {
            return true;
        }
        let n = self.vertices.len();
        for i in 0..n {
            let c = self.vertices[i];
            let d = self.vertices[(i + 1) % n];
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
        false
    }
}

fn orient(a: Location, b: Location, c: Location) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Location, b: Location, p: Location) -> bool {
    p.x >= a.x.min(b.x) - 1e-9
        && p.x <= a.x.max(b.x) + 1e-9
        && p.y >= a.y.min(b.y) - 1e-9
        && p.y <= a.y.max(b.y) + 1e-9
}

fn segments_intersect(a: Location, b: Location, c: Location, d: Location) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0) != (o2 > 0.0)) && ((o3 > 0.0) != (o4 > 0.0)) {
        return true;
    }
    (o1.abs() < 1e-9 && on_segment(a, b, c))
        || (o2.abs() < 1e-9 && on_segment(a, b, d))
        || (o3.abs() < 1e-9 && on_segment(c, d, a))
        || (o4.abs() < 1e-9 && on_segment(c, d, b))
}

/// Service-area geometry: bounds, no-fly zones, and the grid resolution used
/// for flight routing around zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceArea {
    pub bounds: Rect,
    pub no_fly_zones: Vec<ConvexPolygon>,
    pub grid_resolution: f64,
}

impl ServiceArea {
    pub fn new(bounds: Rect) -> Self {
        ServiceArea { bounds, no_fly_zones: Vec::new(), grid_resolution: 50.0 }
    }

    pub fn with_zones(mut self, zones: Vec<ConvexPolygon>) -> Self {
        self.no_fly_zones = zones;
        self
    }

    pub fn with_resolution(mut self, res: f64) -> Self {
        assert!(res > 0.0, "grid_resolution must be positive");
        self.grid_resolution = res;
        self
    }

    fn segment_blocked(&self, a: Location, b: Location) -> bool {
        self.no_fly_zones.iter().any(|z| z.intersects_segment(a, b))
    }

    fn point_blocked(&self, p: Location) -> bool {
        self.no_fly_zones.iter().any(|z| z.contains(p))
    }
}

pub fn manhattan_distance(a: Location, b: Location) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs()
}

pub fn euclidean_distance(a: Location, b: Location) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Shortest flying distance from `a` to `b` avoiding no-fly zones.
///
/// When the straight segment is clear the result is exactly the Euclidean
/// distance; otherwise a Dijkstra search on an 8-connected occupancy grid at
/// the area's resolution is used.
pub fn flight_distance(a: Location, b: Location, area: &ServiceArea) -> Result<f64, GeoError> {
    if a == b {
        return Ok(0.0);
    }
    if area.no_fly_zones.is_empty() || !area.segment_blocked(a, b) {
        return Ok(euclidean_distance(a, b));
    }
    grid_shortest_path(a, b, area)
}

fn grid_shortest_path(a: Location, b: Location, area: &ServiceArea) -> Result<f64, GeoError> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let res = area.grid_resolution;
    let nx = (area.bounds.width() / res).ceil() as i64 + 1;
    let ny = (area.bounds.height() / res).ceil() as i64 + 1;
    let cell_loc = |ix: i64, iy: i64| Location {
        x: area.bounds.min_x + ix as f64 * res,
        y: area.bounds.min_y + iy as f64 * res,
    };
    let to_cell = |l: Location| {
        let ix = ((l.x - area.bounds.min_x) / res).round() as i64;
        let iy = ((l.y - area.bounds.min_y) / res).round() as i64;
        (ix.clamp(0, nx - 1), iy.clamp(0, ny - 1))
    };
    let idx = |ix: i64, iy: i64| (iy * nx + ix) as usize;

    let blocked: Vec<bool> = (0..ny)
        .flat_map(|iy| (0..nx).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| area.point_blocked(cell_loc(ix, iy)))
        .collect();

    // Snap each endpoint to the nearest free cell; a point hugging a zone
    // boundary may round into a blocked cell.
    let snap_free = |ix0: i64, iy0: i64| -> Option<(i64, i64)> {
        for r in 0..=3i64 {
            let mut candidates: Vec<(i64, i64)> = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) != r {
                        continue;
                    }
                    let (jx, jy) = (ix0 + dx, iy0 + dy);
                    if jx >= 0 && jy >= 0 && jx < nx && jy < ny && !blocked[idx(jx, jy)] {
                        candidates.push((jx, jy));
                    }
                }
            }
            if !candidates.is_empty() {
                candidates.sort();
                return candidates.into_iter().next();
            }
        }
        None
    };
    let (sx, sy) = snap_free(to_cell(a).0, to_cell(a).1).ok_or(GeoError::NoRoute)?;
    let (tx, ty) = snap_free(to_cell(b).0, to_cell(b).1).ok_or(GeoError::NoRoute)?;

    // Dijkstra over cell centers. Distances are non-negative f64, so their
    // bit patterns order identically and make a valid heap key.
    let mut dist = vec![f64::INFINITY; (nx * ny) as usize];
    let mut heap = BinaryHeap::new();
    dist[idx(sx, sy)] = 0.0;
    heap.push(Reverse((0.0f64.to_bits(), sx, sy)));
    let dirs: [(i64, i64); 8] =
        [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    while let Some(Reverse((key, ix, iy))) = heap.pop() {
        let d = f64::from_bits(key);
        if (ix, iy) == (tx, ty) {
            let endpoint_slack = euclidean_distance(a, cell_loc(sx, sy))
                + euclidean_distance(b, cell_loc(tx, ty));
            return Ok(d + endpoint_slack);
        }
        if d > dist[idx(ix, iy)] {
            continue;
        }
        for (dx, dy) in dirs {
            let (jx, jy) = (ix + dx, iy + dy);
            if jx < 0 || jy < 0 || jx >= nx || jy >= ny || blocked[idx(jx, jy)] {
                continue;
            }
            let step =
                if dx != 0 && dy != 0 { res * std::f64::consts::SQRT_2 } else { res };
            let nd = d + step;
            if nd < dist[idx(jx, jy)] {
                dist[idx(jx, jy)] = nd;
                heap.push(Reverse((nd.to_bits(), jx, jy)));
            }
        }
    }
    Err(GeoError::NoRoute)
}

pub fn travel_time(distance: f64, speed: f64) -> Result<f64, GeoError> {
    if speed <= 0.0 {
        return Err(GeoError::InvalidSpeed(speed));
    }
    Ok(distance / speed)
}

/// Equirectangular projection of lat/lon (degrees) to local meters, anchored
/// at a reference point. Sub-0.1% error at city scale and trivially
/// invertible.
pub fn project_latlon(lat: f64, lon: f64, ref_lat: f64, ref_lon: f64) -> Location {
    const EARTH_RADIUS: f64 = 6_371_000.0;
    let x = (lon - ref_lon).to_radians() * ref_lat.to_radians().cos() * EARTH_RADIUS;
    let y = (lat - ref_lat).to_radians() * EARTH_RADIUS;
    Location { x, y }
}
