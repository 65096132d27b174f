//! Scenario geometry, vehicle paths, conflict points and the exact
//! constant-acceleration stepper shared by every other module.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used to merge intersection candidates found on adjoining segments.
const MERGE_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("paths do not intersect")]
    NoIntersection,
    #[error("paths intersect {0} times; conflict point is ambiguous")]
    MultipleIntersections(usize),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid intersection geometry: {0}")]
    InvalidGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    LeftTurn,
    Straight,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::LeftTurn => Role::Straight,
            Role::Straight => Role::LeftTurn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    StraightLine,
    LeftTurnArc,
}

/// One piece of a path. Arcs always sweep counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Segment {
    Line { a: Point2, b: Point2 },
    Arc { center: Point2, radius: f64, start_angle: f64, sweep: f64 },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { a, b } => a.distance(b),
            Segment::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    fn point_at(&self, s: f64) -> Point2 {
        match *self {
            Segment::Line { a, b } => {
                let len = a.distance(b);
                if len == 0.0 {
                    return a;
                }
                a.add(b.sub(a).scale(s / len))
            }
            Segment::Arc { center, radius, start_angle, .. } => {
                let ang = start_angle + s / radius;
                Point2::new(center.x + radius * ang.cos(), center.y + radius * ang.sin())
            }
        }
    }

    /// Unit travel direction at arc length `s` into the segment.
    fn tangent_at(&self, s: f64) -> Point2 {
        match *self {
            Segment::Line { a, b } => {
                let d = b.sub(a);
                d.scale(1.0 / d.norm())
            }
            Segment::Arc { radius, start_angle, .. } => {
                let ang = start_angle + s / radius;
                Point2::new(-ang.sin(), ang.cos())
            }
        }
    }

    /// Intersections with another segment as `(s_self, s_other, point)`.
    fn intersect(&self, other: &Segment) -> Vec<(f64, f64, Point2)> {
        match (*self, *other) {
            (Segment::Line { a, b }, Segment::Line { a: c, b: d }) => line_line(a, b, c, d),
            (Segment::Line { a, b }, arc @ Segment::Arc { .. }) => line_arc(a, b, &arc),
            (arc @ Segment::Arc { .. }, Segment::Line { a, b }) => line_arc(a, b, &arc)
                .into_iter()
                .map(|(s_line, s_arc, p)| (s_arc, s_line, p))
                .collect(),
            (a1 @ Segment::Arc { .. }, a2 @ Segment::Arc { .. }) => arc_arc(&a1, &a2),
        }
    }
}

fn line_line(a: Point2, b: Point2, c: Point2, d: Point2) -> Vec<(f64, f64, Point2)> {
    let r = b.sub(a);
    let q = d.sub(c);
    let denom = r.cross(q);
    if denom.abs() < 1e-12 * r.norm() * q.norm() {
        return Vec::new();
    }
    let t = c.sub(a).cross(q) / denom;
    let u = c.sub(a).cross(r) / denom;
    let eps = 1e-12;
    if (-eps..=1.0 + eps).contains(&t) && (-eps..=1.0 + eps).contains(&u) {
        let t = t.clamp(0.0, 1.0);
        let u = u.clamp(0.0, 1.0);
        vec![(t * r.norm(), u * q.norm(), a.add(r.scale(t)))]
    } else {
        Vec::new()
    }
}

/// Arc-length offset of `angle` from the arc start, if the angle lies on the arc.
fn arc_offset(start_angle: f64, sweep: f64, radius: f64, angle: f64) -> Option<f64> {
    let rel = (angle - start_angle).rem_euclid(TAU);
    let eps = 1e-12;
    if rel <= sweep + eps {
        Some(rel.min(sweep) * radius)
    } else if rel >= TAU - eps {
        Some(0.0)
    } else {
        None
    }
}

fn line_arc(a: Point2, b: Point2, arc: &Segment) -> Vec<(f64, f64, Point2)> {
    let Segment::Arc { center, radius, start_angle, sweep } = *arc else {
        unreachable!("line_arc called with a line");
    };
    let d = b.sub(a);
    let f = a.sub(center);
    let qa = d.dot(d);
    let qb = 2.0 * f.dot(d);
    let qc = f.dot(f) - radius * radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 || qa == 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let mut roots = vec![(-qb - sq) / (2.0 * qa)];
    if sq > 0.0 {
        roots.push((-qb + sq) / (2.0 * qa));
    }
    let len = qa.sqrt();
    let eps = 1e-12;
    roots
        .into_iter()
        .filter(|t| (-eps..=1.0 + eps).contains(t))
        .filter_map(|t| {
            let t = t.clamp(0.0, 1.0);
            let p = a.add(d.scale(t));
            let ang = (p.y - center.y).atan2(p.x - center.x);
            arc_offset(start_angle, sweep, radius, ang).map(|s_arc| (t * len, s_arc, p))
        })
        .collect()
}

fn arc_arc(a1: &Segment, a2: &Segment) -> Vec<(f64, f64, Point2)> {
    let (
        Segment::Arc { center: c1, radius: r1, start_angle: s1, sweep: w1 },
        Segment::Arc { center: c2, radius: r2, start_angle: s2, sweep: w2 },
    ) = (*a1, *a2)
    else {
        unreachable!("arc_arc called with a line");
    };
    let d = c1.distance(c2);
    if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
        return Vec::new();
    }
    let along = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - along * along).max(0.0).sqrt();
    let dir = c2.sub(c1).scale(1.0 / d);
    let mid = c1.add(dir.scale(along));
    let perp = Point2::new(-dir.y, dir.x);
    let mut pts = vec![mid.add(perp.scale(h))];
    if h > 0.0 {
        pts.push(mid.sub(perp.scale(h)));
    }
    pts.into_iter()
        .filter_map(|p| {
            let o1 = arc_offset(s1, w1, r1, (p.y - c1.y).atan2(p.x - c1.x))?;
            let o2 = arc_offset(s2, w2, r2, (p.y - c2.y).atan2(p.x - c2.x))?;
            Some((o1, o2, p))
        })
        .collect()
}

/// A vehicle path: a straight line, or a left turn made of a lead-in line,
/// a counter-clockwise circular arc and a lead-out line, all tangent.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGeometry {
    pub kind: PathKind,
    pub entry: Point2,
    pub exit: Point2,
    /// Arc center and radius; `None` for straight paths.
    pub arc: Option<(Point2, f64)>,
    segments: Vec<Segment>,
    length: f64,
}

impl PathGeometry {
    pub fn straight(entry: Point2, exit: Point2) -> Result<Self, GeometryError> {
        if !entry.is_finite() || !exit.is_finite() {
            return Err(GeometryError::InvalidPath("non-finite coordinates".into()));
        }
        let length = entry.distance(exit);
        if length <= 0.0 {
            return Err(GeometryError::InvalidPath("zero-length straight path".into()));
        }
        Ok(Self {
            kind: PathKind::StraightLine,
            entry,
            exit,
            arc: None,
            segments: vec![Segment::Line { a: entry, b: exit }],
            length,
        })
    }

    /// Left turn from `entry` to `exit` around `center`. The arc starts at the
    /// tangent point seen from `entry` and ends at the tangent point seen from
    /// `exit`; travel around the center is counter-clockwise.
    pub fn left_turn(
        entry: Point2,
        exit: Point2,
        center: Point2,
        radius: f64,
    ) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidPath(format!("arc radius {radius} must be > 0")));
        }
        if !entry.is_finite() || !exit.is_finite() || !center.is_finite() {
            return Err(GeometryError::InvalidPath("non-finite coordinates".into()));
        }
        let start = tangent_point(entry, center, radius, true)?;
        let end = tangent_point(exit, center, radius, false)?;
        let start_angle = (start.y - center.y).atan2(start.x - center.x);
        let end_angle = (end.y - center.y).atan2(end.x - center.x);
        let mut sweep = (end_angle - start_angle).rem_euclid(TAU);
        if sweep == 0.0 {
            sweep = TAU;
        }
        let mut segments = Vec::with_capacity(3);
        if entry.distance(start) > 1e-12 {
            segments.push(Segment::Line { a: entry, b: start });
        }
        segments.push(Segment::Arc { center, radius, start_angle, sweep });
        if end.distance(exit) > 1e-12 {
            segments.push(Segment::Line { a: end, b: exit });
        }
        let length = segments.iter().map(Segment::length).sum();
        Ok(Self { kind: PathKind::LeftTurnArc, entry, exit, arc: Some((center, radius)), segments, length })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn locate(&self, s: f64) -> (&Segment, f64) {
        let s = s.clamp(0.0, self.length);
        let mut acc = 0.0;
        for seg in &self.segments {
            let len = seg.length();
            if s <= acc + len {
                return (seg, s - acc);
            }
            acc += len;
        }
        let last = self.segments.last().expect("path has at least one segment");
        (last, last.length())
    }

    /// Point at arc length `s`; `s` beyond either end extrapolates along the end tangent.
    pub fn point_at(&self, s: f64) -> Point2 {
        if s < 0.0 {
            return self.entry.add(self.tangent_at(0.0).scale(s));
        }
        if s > self.length {
            return self.exit.add(self.tangent_at(self.length).scale(s - self.length));
        }
        let (seg, local) = self.locate(s);
        seg.point_at(local)
    }

    pub fn tangent_at(&self, s: f64) -> Point2 {
        let (seg, local) = self.locate(s);
        seg.tangent_at(local)
    }

    /// Heading (radians, counter-clockwise from +x) at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let t = self.tangent_at(s);
        t.y.atan2(t.x)
    }

    /// Closest-point projection: `(s, lateral)`, lateral positive to the right
    /// of the travel direction.
    pub fn project(&self, p: Point2) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut acc = 0.0;
        for seg in &self.segments {
            let len = seg.length();
            let local = match *seg {
                Segment::Line { a, b } => {
                    let d = b.sub(a);
                    (p.sub(a).dot(d) / d.dot(d)).clamp(0.0, 1.0) * len
                }
                Segment::Arc { center, radius, start_angle, sweep } => {
                    let ang = (p.y - center.y).atan2(p.x - center.x);
                    match arc_offset(start_angle, sweep, radius, ang) {
                        Some(off) => off,
                        None => {
                            let rel = (ang - start_angle).rem_euclid(TAU);
                            if rel - sweep < TAU - rel { len } else { 0.0 }
                        }
                    }
                }
            };
            let q = seg.point_at(local);
            let dist = p.distance(q);
            if dist < best.0 {
                let t = seg.tangent_at(local);
                // right of travel is negative cross product
                let lateral = -t.cross(p.sub(q));
                best = (dist, acc + local, lateral);
            }
            acc += len;
        }
        // Extend beyond the path ends along the end tangents.
        let (s, lat) = (best.1, best.2);
        if s <= 0.0 {
            let t = self.tangent_at(0.0);
            let along = p.sub(self.entry).dot(t);
            if along < 0.0 {
                return (along, -t.cross(p.sub(self.entry)));
            }
        } else if s >= self.length {
            let t = self.tangent_at(self.length);
            let along = p.sub(self.exit).dot(t);
            if along > 0.0 {
                return (self.length + along, -t.cross(p.sub(self.exit)));
            }
        }
        (s, lat)
    }

    /// Arc-length interval during which the centerline lies inside the
    /// axis-aligned square of half side `half` around `center`.
    pub fn square_interval(&self, center: Point2, half: f64) -> Option<(f64, f64)> {
        let inside = |s: f64| {
            let p = self.point_at(s);
            (p.x - center.x).abs() <= half && (p.y - center.y).abs() <= half
        };
        let step = 0.01;
        let n = (self.length / step).ceil() as usize;
        let mut first = None;
        let mut last = None;
        for k in 0..=n {
            let s = (k as f64 * step).min(self.length);
            if inside(s) {
                if first.is_none() {
                    first = Some(k);
                }
                last = Some(k);
            }
        }
        let (first, last) = (first?, last?);
        let refine = |mut out: f64, mut inn: f64| {
            for _ in 0..60 {
                let mid = 0.5 * (out + inn);
                if inside(mid) {
                    inn = mid;
                } else {
                    out = mid;
                }
            }
            inn
        };
        let s_first = first as f64 * step;
        let s_last = (last as f64 * step).min(self.length);
        let s_in = if first == 0 { 0.0 } else { refine(s_first - step, s_first) };
        let s_out = if last == n { self.length } else { refine((s_last + step).min(self.length), s_last) };
        Some((s_in, s_out))
    }
}

/// Tangent point on the circle as seen from an external point. With
/// counter-clockwise travel, `leaving` selects the point where travel coming
/// from `p` joins the circle; otherwise the point where travel leaves toward `p`.
fn tangent_point(p: Point2, center: Point2, radius: f64, joining: bool) -> Result<Point2, GeometryError> {
    let d = p.distance(center);
    if d < radius - 1e-9 {
        return Err(GeometryError::InvalidPath("path endpoint lies inside the turning circle".into()));
    }
    if d <= radius + 1e-12 {
        return Ok(p);
    }
    let base = (p.y - center.y).atan2(p.x - center.x);
    let off = (radius / d).clamp(-1.0, 1.0).acos();
    for ang in [base + off, base - off] {
        let t = Point2::new(center.x + radius * ang.cos(), center.y + radius * ang.sin());
        let ccw = Point2::new(-ang.sin(), ang.cos());
        let toward = if joining { t.sub(p) } else { p.sub(t) };
        if ccw.dot(toward) > 0.0 {
            return Ok(t);
        }
    }
    Err(GeometryError::InvalidPath("no tangent point for counter-clockwise travel".into()))
}

/// Shared conflict point of the two paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictGeometry {
    pub point: Point2,
    /// Left-turn vehicle's arc length from its path entry to the conflict point.
    pub s_l_cp: f64,
    /// Straight vehicle's arc length from its path entry to the conflict point.
    pub s_s_cp: f64,
    /// Complement of the crossing angle between the left path tangent and the straight lane.
    pub theta_l: f64,
    /// Angle between the left path (locus of shifted conflict points) and the straight lane.
    pub theta_s: f64,
}

pub fn conflict_point(path_l: &PathGeometry, path_s: &PathGeometry) -> Result<ConflictGeometry, GeometryError> {
    let mut hits: Vec<(f64, f64, Point2)> = Vec::new();
    let mut acc_l = 0.0;
    for seg_l in &path_l.segments {
        let mut acc_s = 0.0;
        for seg_s in &path_s.segments {
            for (sl, ss, p) in seg_l.intersect(seg_s) {
                let cand = (acc_l + sl, acc_s + ss, p);
                if !hits.iter().any(|h| h.2.distance(p) < MERGE_TOL) {
                    hits.push(cand);
                }
            }
            acc_s += seg_s.length();
        }
        acc_l += seg_l.length();
    }
    match hits.len() {
        0 => Err(GeometryError::NoIntersection),
        1 => {
            let (s_l, s_s, point) = hits[0];
            let tl = path_l.tangent_at(s_l);
            let ts = path_s.tangent_at(s_s);
            let crossing = tl.cross(ts).abs().atan2(tl.dot(ts).abs());
            Ok(ConflictGeometry {
                point,
                s_l_cp: s_l,
                s_s_cp: s_s,
                theta_l: FRAC_PI_2 - crossing,
                theta_s: crossing,
            })
        }
        n => Err(GeometryError::MultipleIntersections(n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedBounds {
    pub min: f64,
    pub max: f64,
}

impl SpeedBounds {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }
}

/// Kinematic state of one vehicle along its own path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub role: Role,
    /// Arc length along the own path (m).
    pub s: f64,
    pub v: f64,
    /// Last commanded acceleration (m/s²).
    pub a: f64,
    pub length: f64,
    pub width: f64,
    /// Signed lateral offset from the path centerline, positive to the right (m).
    pub lateral: f64,
}

impl VehicleState {
    pub fn new(role: Role, s: f64, v: f64) -> Self {
        Self { role, s, v, a: 0.0, length: 4.5, width: 1.8, lateral: 0.0 }
    }
}

/// Advances `state` by `dt` under constant `accel`, saturating the speed at
/// `bounds`. The step is split at the saturation instant so the displacement
/// is exact.
pub fn step_kinematics(state: &VehicleState, accel: f64, dt: f64, bounds: SpeedBounds) -> VehicleState {
    let (dv, ds) = advance(state.v, accel, dt, bounds);
    VehicleState { s: state.s + ds, v: dv, a: accel, ..*state }
}

/// Returns `(v', Δs)` for a saturating constant-acceleration step.
pub fn advance(v0: f64, accel: f64, dt: f64, bounds: SpeedBounds) -> (f64, f64) {
    let v0 = v0.clamp(bounds.min, bounds.max);
    let raw = v0 + accel * dt;
    if raw > bounds.max && accel > 0.0 {
        let tau = (bounds.max - v0) / accel;
        let ds = 0.5 * (v0 + bounds.max) * tau + bounds.max * (dt - tau);
        (bounds.max, ds)
    } else if raw < bounds.min && accel < 0.0 {
        let tau = (bounds.min - v0) / accel;
        let ds = 0.5 * (v0 + bounds.min) * tau + bounds.min * (dt - tau);
        (bounds.min, ds)
    } else {
        (raw, 0.5 * (v0 + raw) * dt)
    }
}

fn default_lane_width() -> f64 {
    3.5
}
fn default_lanes() -> u32 {
    2
}
fn default_entry_left() -> f64 {
    40.0
}
fn default_entry_straight() -> f64 {
    60.0
}
fn default_exit() -> f64 {
    30.0
}

/// Two-way cross intersection with `lanes_per_direction` lanes each way.
/// Right-hand traffic; origin at the intersection center. The left-turn
/// vehicle approaches eastbound in the innermost lane (y = -w/2) and leaves
/// northbound (x = +w/2); the straight vehicle drives westbound in the
/// innermost lane (y = +w/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionGeometry {
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    #[serde(default = "default_lanes")]
    pub lanes_per_direction: u32,
    /// Turning radius; defaults to the radius whose arc starts at the stop line.
    #[serde(default)]
    pub arc_radius: Option<f64>,
    /// Left-turn path length before the stop line.
    #[serde(default = "default_entry_left")]
    pub entry_distance_left: f64,
    /// Straight path length before the stop line.
    #[serde(default = "default_entry_straight")]
    pub entry_distance_straight: f64,
    /// Path length kept beyond the far-side boundary.
    #[serde(default = "default_exit")]
    pub exit_distance: f64,
}

impl Default for IntersectionGeometry {
    fn default() -> Self {
        Self {
            lane_width: default_lane_width(),
            lanes_per_direction: default_lanes(),
            arc_radius: None,
            entry_distance_left: default_entry_left(),
            entry_distance_straight: default_entry_straight(),
            exit_distance: default_exit(),
        }
    }
}

/// Paths, conflict point and boundary intervals derived from an [`IntersectionGeometry`].
#[derive(Debug, Clone)]
pub struct Layout {
    pub geometry: IntersectionGeometry,
    pub left: PathGeometry,
    pub straight: PathGeometry,
    pub conflict: ConflictGeometry,
    /// Stop line to far-side boundary, per path, as arc-length intervals.
    pub transit_left: (f64, f64),
    pub transit_straight: (f64, f64),
    /// Conflict zone (square of side = lane width) crossing intervals.
    pub zone_left: (f64, f64),
    pub zone_straight: (f64, f64),
}

impl IntersectionGeometry {
    pub fn half_size(&self) -> f64 {
        self.lanes_per_direction as f64 * self.lane_width
    }

    pub fn radius(&self) -> f64 {
        self.arc_radius.unwrap_or(self.half_size() + 0.5 * self.lane_width)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidGeometry(m.to_string()));
        if !(self.lane_width > 0.0 && self.lane_width.is_finite()) {
            return bad("lane_width must be > 0");
        }
        if self.lanes_per_direction == 0 {
            return bad("lanes_per_direction must be >= 1");
        }
        if self.entry_distance_left <= 0.0 || self.entry_distance_straight <= 0.0 || self.exit_distance <= 0.0 {
            return bad("entry and exit distances must be > 0");
        }
        let r = self.radius();
        let w = self.lane_width;
        if r <= w {
            return bad("arc radius must exceed the lane width to reach the opposing lane");
        }
        if 0.5 * w - r < -self.half_size() - self.entry_distance_left {
            return bad("arc radius too large for the left entry distance");
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<Layout, GeometryError> {
        self.validate()?;
        let w = self.lane_width;
        let half = self.half_size();
        let r = self.radius();
        let center = Point2::new(0.5 * w - r, -0.5 * w + r);
        let left = PathGeometry::left_turn(
            Point2::new(-half - self.entry_distance_left, -0.5 * w),
            Point2::new(0.5 * w, half + self.exit_distance),
            center,
            r,
        )?;
        let straight = PathGeometry::straight(
            Point2::new(half + self.entry_distance_straight, 0.5 * w),
            Point2::new(-half - self.exit_distance, 0.5 * w),
        )?;
        let conflict = conflict_point(&left, &straight)?;
        let origin = Point2::new(0.0, 0.0);
        let missing = || GeometryError::InvalidGeometry("path does not cross the intersection box".into());
        let transit_left = left.square_interval(origin, half).ok_or_else(missing)?;
        let transit_straight = straight.square_interval(origin, half).ok_or_else(missing)?;
        let zone_left = left.square_interval(conflict.point, 0.5 * w).ok_or_else(missing)?;
        let zone_straight = straight.square_interval(conflict.point, 0.5 * w).ok_or_else(missing)?;
        Ok(Layout {
            geometry: *self,
            left,
            straight,
            conflict,
            transit_left,
            transit_straight,
            zone_left,
            zone_straight,
        })
    }
}

impl Layout {
    pub fn path(&self, role: Role) -> &PathGeometry {
        match role {
            Role::LeftTurn => &self.left,
            Role::Straight => &self.straight,
        }
    }

    /// Arc length of the conflict point along the role's path.
    pub fn conflict_s(&self, role: Role) -> f64 {
        match role {
            Role::LeftTurn => self.conflict.s_l_cp,
            Role::Straight => self.conflict.s_s_cp,
        }
    }

    pub fn zone(&self, role: Role) -> (f64, f64) {
        match role {
            Role::LeftTurn => self.zone_left,
            Role::Straight => self.zone_straight,
        }
    }

    pub fn transit(&self, role: Role) -> (f64, f64) {
        match role {
            Role::LeftTurn => self.transit_left,
            Role::Straight => self.transit_straight,
        }
    }

    /// World pose `(center, heading)` of a vehicle, including its lateral offset.
    pub fn pose(&self, state: &VehicleState) -> (Point2, f64) {
        let path = self.path(state.role);
        let p = path.point_at(state.s);
        let t = path.tangent_at(state.s);
        let right = Point2::new(t.y, -t.x);
        (p.add(right.scale(state.lateral)), t.y.atan2(t.x))
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bounds() -> SpeedBounds {
        SpeedBounds::new(0.0, 5.0)
    }

    #[test]
    fn step_accelerating() {
        let s = VehicleState::new(Role::LeftTurn, 0.0, 4.0);
        let n = step_kinematics(&s, 1.0, 0.1, bounds());
        assert_abs_diff_eq!(n.v, 4.1, epsilon = 1e-12);
        assert_abs_diff_eq!(n.s, 0.405, epsilon = 1e-12);
    }

    #[test]
    fn step_constant_speed() {
        let s = VehicleState::new(Role::LeftTurn, 0.0, 4.0);
        let n = step_kinematics(&s, 0.0, 0.1, bounds());
        assert_abs_diff_eq!(n.v, 4.0);
        assert_abs_diff_eq!(n.s, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn step_clamps_at_max() {
        let s = VehicleState::new(Role::LeftTurn, 0.0, 4.95);
        let n = step_kinematics(&s, 1.0, 0.1, bounds());
        assert_eq!(n.v, 5.0);
        // 0.05 s ramp from 4.95 to 5.0 then 0.05 s at 5.0
        assert_abs_diff_eq!(n.s, 0.5 * (4.95 + 5.0) * 0.05 + 5.0 * 0.05, epsilon = 1e-12);
    }

    #[test]
    fn step_stops_at_zero() {
        let s = VehicleState::new(Role::Straight, 10.0, 0.1);
        let n = step_kinematics(&s, -2.0, 0.1, SpeedBounds::new(0.0, 10.0));
        assert_eq!(n.v, 0.0);
        assert_abs_diff_eq!(n.s, 10.0 + 0.1 * 0.1 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn perpendicular_lines_cross_at_origin() {
        let l = PathGeometry::straight(Point2::new(-30.0, 0.0), Point2::new(30.0, 0.0)).unwrap();
        let s = PathGeometry::straight(Point2::new(0.0, 30.0), Point2::new(0.0, -30.0)).unwrap();
        let c = conflict_point(&l, &s).unwrap();
        assert_abs_diff_eq!(c.point.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.point.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.s_l_cp, 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.s_s_cp, 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.theta_s, FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(c.theta_l, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn parallel_lines_do_not_cross() {
        let l = PathGeometry::straight(Point2::new(-30.0, 0.0), Point2::new(30.0, 0.0)).unwrap();
        let s = PathGeometry::straight(Point2::new(-30.0, 2.0), Point2::new(30.0, 2.0)).unwrap();
        assert_eq!(conflict_point(&l, &s), Err(GeometryError::NoIntersection));
    }

    #[test]
    fn double_crossing_is_ambiguous() {
        // a straight line through a full half-circle sweep can hit twice
        let arc = PathGeometry::left_turn(
            Point2::new(-20.0, -10.0),
            Point2::new(-20.0, 10.0),
            Point2::new(0.0, 0.0),
            10.0,
        )
        .unwrap();
        let line = PathGeometry::straight(Point2::new(5.0, -30.0), Point2::new(5.0, 30.0)).unwrap();
        assert_eq!(conflict_point(&arc, &line), Err(GeometryError::MultipleIntersections(2)));
    }

    #[test]
    fn quarter_arc_matches_sampled_length() {
        // entry east-bound at y=-12, quarter turn to north-bound at x=0
        let arc = PathGeometry::left_turn(
            Point2::new(-12.0, -12.0),
            Point2::new(0.0, 10.0),
            Point2::new(-12.0, 0.0),
            12.0,
        )
        .unwrap();
        assert_abs_diff_eq!(arc.length(), 12.0 * FRAC_PI_2 + 10.0, epsilon = 1e-9);
        let lane = PathGeometry::straight(Point2::new(30.0, -4.0), Point2::new(-30.0, -4.0)).unwrap();
        let c = conflict_point(&arc, &lane).unwrap();
        // brute force: walk the arc at 1 mm and find the sign change of y + 4
        let mut prev = arc.point_at(0.0).y + 4.0;
        let mut s_hit = f64::NAN;
        let step = 1e-3;
        let mut s = step;
        while s <= arc.length() {
            let cur = arc.point_at(s).y + 4.0;
            if prev < 0.0 && cur >= 0.0 {
                // linear refinement within the millimetre
                s_hit = s - step * cur / (cur - prev);
                break;
            }
            prev = cur;
            s += step;
        }
        assert_abs_diff_eq!(c.s_l_cp, s_hit, epsilon = 1e-6);
        assert_abs_diff_eq!(c.s_s_cp, 30.0 - c.point.x, epsilon = 1e-9);
    }

    #[test]
    fn default_layout_is_consistent() {
        let layout = IntersectionGeometry::default().layout().unwrap();
        let c = layout.conflict;
        assert!(c.s_l_cp > 0.0 && c.s_s_cp > 0.0);
        assert!(c.theta_l > 0.0 && c.theta_l < FRAC_PI_2);
        assert!(c.theta_s > 0.0 && c.theta_s < FRAC_PI_2);
        assert_abs_diff_eq!(c.point.y, 1.75, epsilon = 1e-9);
        // arc begins exactly at the stop line with the default radius
        assert_abs_diff_eq!(layout.transit_left.0, 40.0, epsilon = 1e-6);
        assert_abs_diff_eq!(layout.transit_straight.0, 60.0, epsilon = 1e-6);
        assert_abs_diff_eq!(layout.transit_straight.1, 74.0, epsilon = 1e-6);
        let (zi, zo) = layout.zone_straight;
        assert_abs_diff_eq!(zo - zi, 3.5, epsilon = 1e-6);
        assert!(zi < c.s_s_cp && c.s_s_cp < zo);
    }

    #[test]
    fn projection_recovers_offset() {
        let layout = IntersectionGeometry::default().layout().unwrap();
        for s in [5.0, 42.0, 50.0, 60.0] {
            let mut st = VehicleState::new(Role::LeftTurn, s, 3.0);
            st.lateral = 0.4;
            let (p, _) = layout.pose(&st);
            let (ps, lat) = layout.left.project(p);
            assert_abs_diff_eq!(ps, s, epsilon = 1e-6);
            assert_abs_diff_eq!(lat, 0.4, epsilon = 1e-6);
        }
    }

    #[test]
    fn geometry_json_defaults() {
        let g: IntersectionGeometry = serde_json::from_str("{\"lane_width\": 3.0}").unwrap();
        assert_eq!(g.lanes_per_direction, 2);
        assert_eq!(g.lane_width, 3.0);
        assert!(serde_json::from_str::<IntersectionGeometry>("{\"bogus\": 1}").is_err());
    }
}
