//! Planar two-arm reaching world.
//!
//! Two 4-link kinematic arms share a workspace with three circular targets
//! and nine thin rectangular obstacles (three flanking each target). A
//! trial ends when the active arm's end-effector enters a target disc or a
//! present obstacle, or when the step budget runs out. A binary rasterizer
//! turns the scene into 80x60 frames for visual change detection; arms are
//! drawn into a separate mask layer so they never register as events.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TARGETS: usize = 3;
pub const OBSTACLES: usize = 9;
pub const JOINTS: usize = 4;
pub const ARMS: usize = 2;
pub const FRAME_WIDTH: usize = 80;
pub const FRAME_HEIGHT: usize = 60;
pub const FRAME_PIXELS: usize = FRAME_WIDTH * FRAME_HEIGHT;

/// Joint angles of one arm, in radians.
pub type Joints = [f64; JOINTS];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
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
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: Point2::new(min_x, min_y),
            max: Point2::new(max_x, max_y),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Distance from `p` to the closest point of the rectangle (0 inside).
    pub fn distance_to(&self, p: Point2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointRange {
    pub min: f64,
    pub max: f64,
}

impl JointRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.min && angle <= self.max
    }

    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.min, self.max)
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    /// Maps an angle inside the range onto [0, 1].
    pub fn normalize(&self, angle: f64) -> f64 {
        ((angle - self.min) / self.span()).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub const ALL: [Arm; ARMS] = [Arm::Left, Arm::Right];

    pub fn index(self) -> usize {
        match self {
            Arm::Left => 0,
            Arm::Right => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Arm> {
        Arm::ALL.get(index).copied()
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Left => "left",
            Arm::Right => "right",
        })
    }
}

/// Presence bits of the nine obstacle slots; bit `j` set means slot `j` is occupied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObstacleMask(u16);

impl ObstacleMask {
    pub const EMPTY: ObstacleMask = ObstacleMask(0);
    pub const FULL: ObstacleMask = ObstacleMask((1 << OBSTACLES) - 1);
    /// Number of distinct masks.
    pub const COUNT: usize = 1 << OBSTACLES;

    /// Builds a mask from its low nine bits; higher bits are rejected.
    pub fn from_bits(bits: u16) -> Result<Self> {
        if bits & !Self::FULL.0 != 0 {
            return Err(Error::contract(format!(
                "obstacle mask {bits:#x} uses bits beyond slot {}",
                OBSTACLES - 1
            )));
        }
        Ok(ObstacleMask(bits))
    }

    pub fn from_slots(slots: &[usize]) -> Result<Self> {
        let mut bits = 0u16;
        for &j in slots {
            if j >= OBSTACLES {
                return Err(Error::contract(format!("obstacle slot {j} out of range")));
            }
            bits |= 1 << j;
        }
        Ok(ObstacleMask(bits))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn is_present(self, slot: usize) -> bool {
        slot < OBSTACLES && self.0 & (1 << slot) != 0
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn present_slots(self) -> impl Iterator<Item = usize> {
        (0..OBSTACLES).filter(move |&j| self.is_present(j))
    }

    /// Every possible mask, in ascending bit order.
    pub fn all() -> impl Iterator<Item = ObstacleMask> {
        (0..Self::COUNT as u16).map(ObstacleMask)
    }
}

/// Renders slot 0 first, e.g. `010000000` has only slot 1 present.
impl fmt::Display for ObstacleMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..OBSTACLES {
            f.write_str(if self.is_present(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ObstacleMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != OBSTACLES {
            return Err(Error::contract(format!("mask `{s}` must have {OBSTACLES} digits")));
        }
        let mut bits = 0u16;
        for (j, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << j,
                _ => return Err(Error::contract(format!("mask `{s}` has a non-binary digit"))),
            }
        }
        Ok(ObstacleMask(bits))
    }
}

/// Scene geometry and arm kinematics. Obstacle slot `3*i + k` flanks
/// target `i` on its left (`k = 0`), middle (`k = 1`, the side facing the
/// robot) or right (`k = 2`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub target_centers: [Point2; TARGETS],
    pub target_radius: f64,
    pub obstacle_rects: [Rect; OBSTACLES],
    pub arm_bases: [Point2; ARMS],
    pub link_lengths: [[f64; JOINTS]; ARMS],
    pub joint_limits: [[JointRange; JOINTS]; ARMS],
    pub home_pose: [Joints; ARMS],
    /// Largest joint displacement per control step (rad/step).
    pub max_joint_step: f64,
    /// Region mapped onto the 80x60 frame.
    pub workspace: Rect,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let target_centers = [
            Point2::new(-0.45, 0.55),
            Point2::new(0.0, 0.55),
            Point2::new(0.45, 0.55),
        ];
        let target_radius = 0.07;
        let obstacle_rects = flanking_obstacles(&target_centers, target_radius, 0.05, 0.02, 0.10);
        let links = [0.30, 0.25, 0.20, 0.15];
        let bend = JointRange::new(-1.6, 1.6);
        let left = [JointRange::new(0.0, std::f64::consts::PI), bend, bend, bend];
        let right = [JointRange::new(0.0, std::f64::consts::PI), bend, bend, bend];
        let left_home = [1.0, 1.2, 1.2, 0.6];
        let right_home = mirror_pose(left_home);
        Self {
            target_centers,
            target_radius,
            obstacle_rects,
            arm_bases: [Point2::new(-0.2, 0.0), Point2::new(0.2, 0.0)],
            link_lengths: [links, links],
            joint_limits: [left, right],
            home_pose: [left_home, right_home],
            max_joint_step: 0.15,
            workspace: Rect::new(-0.8, -0.1, 0.8, 1.1),
        }
    }
}

/// Left/right arm symmetry about the vertical axis.
pub fn mirror_pose(pose: Joints) -> Joints {
    [
        std::f64::consts::PI - pose[0],
        -pose[1],
        -pose[2],
        -pose[3],
    ]
}

/// Three thin bars around each target: vertical bars on the left and right,
/// a horizontal bar below. `gap` separates each bar from the disc.
pub fn flanking_obstacles(
    centers: &[Point2; TARGETS],
    radius: f64,
    gap: f64,
    thickness: f64,
    length: f64,
) -> [Rect; OBSTACLES] {
    let mut rects = [Rect::new(0.0, 0.0, 0.0, 0.0); OBSTACLES];
    for (i, c) in centers.iter().enumerate() {
        let inner = radius + gap;
        let outer = inner + thickness;
        let half = length / 2.0;
        rects[3 * i] = Rect::new(c.x - outer, c.y - half, c.x - inner, c.y + half);
        rects[3 * i + 1] = Rect::new(c.x - half, c.y - outer, c.x + half, c.y - inner);
        rects[3 * i + 2] = Rect::new(c.x + inner, c.y - half, c.x + outer, c.y + half);
    }
    rects
}

impl SceneConfig {
    pub fn reach(&self, arm: Arm) -> f64 {
        self.link_lengths[arm.index()].iter().sum()
    }

    pub fn total_link_length(&self) -> f64 {
        self.reach(Arm::Left).max(self.reach(Arm::Right))
    }

    /// Base followed by the four joint-chain points; the last is the effector.
    pub fn chain_points(&self, arm: Arm, joints: &Joints) -> [Point2; JOINTS + 1] {
        let a = arm.index();
        let mut pts = [self.arm_bases[a]; JOINTS + 1];
        let mut angle = 0.0;
        let mut p = self.arm_bases[a];
        for k in 0..JOINTS {
            angle += joints[k];
            let len = self.link_lengths[a][k];
            p = Point2::new(p.x + len * angle.cos(), p.y + len * angle.sin());
            pts[k + 1] = p;
        }
        pts
    }

    /// Effector position with no limit check.
    pub fn effector(&self, arm: Arm, joints: &Joints) -> Point2 {
        self.chain_points(arm, joints)[JOINTS]
    }

    /// Classifies a point: obstacles take precedence over targets.
    pub fn classify_point(&self, p: Point2, mask: ObstacleMask) -> TouchKind {
        for j in mask.present_slots() {
            if self.obstacle_rects[j].contains(p) {
                return TouchKind::Obstacle(j);
            }
        }
        for (i, c) in self.target_centers.iter().enumerate() {
            if p.distance(*c) <= self.target_radius {
                return TouchKind::Target(i);
            }
        }
        TouchKind::None
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.target_radius > 0.0) {
            return bad("target_radius must be positive".into());
        }
        if !(self.max_joint_step > 0.0) {
            return bad("max_joint_step must be positive".into());
        }
        if self.workspace.width() <= 0.0 || self.workspace.height() <= 0.0 {
            return bad("workspace must have positive extent".into());
        }
        for arm in Arm::ALL {
            let a = arm.index();
            for k in 0..JOINTS {
                let r = self.joint_limits[a][k];
                if !(r.max > r.min) {
                    return bad(format!("{arm} joint {k} has an empty range"));
                }
                if !(self.link_lengths[a][k] > 0.0) {
                    return bad(format!("{arm} link {k} must have positive length"));
                }
                if !r.contains(self.home_pose[a][k]) {
                    return bad(format!("{arm} home pose violates joint {k} limits"));
                }
            }
            for (i, c) in self.target_centers.iter().enumerate() {
                if self.arm_bases[a].distance(*c) > self.reach(arm) {
                    return bad(format!("target {i} is out of reach of the {arm} arm"));
                }
            }
            let home = self.effector(arm, &self.home_pose[a]);
            if self.classify_point(home, ObstacleMask::FULL) != TouchKind::None {
                return bad(format!("{arm} home pose starts in contact with an object"));
            }
        }
        for (j, rect) in self.obstacle_rects.iter().enumerate() {
            if rect.width() <= 0.0 || rect.height() <= 0.0 {
                return bad(format!("obstacle {j} is degenerate"));
            }
            for (i, c) in self.target_centers.iter().enumerate() {
                if rect.distance_to(*c) <= self.target_radius {
                    return bad(format!("obstacle {j} overlaps target {i}"));
                }
            }
        }
        for i in 0..TARGETS {
            for k in i + 1..TARGETS {
                if self.target_centers[i].distance(self.target_centers[k]) <= 2.0 * self.target_radius {
                    return bad(format!("targets {i} and {k} overlap"));
                }
            }
        }
        Ok(())
    }
}

/// Effector position of `arm` at `joints`.
pub fn forward_kinematics(joints: &Joints, arm: Arm, cfg: &SceneConfig) -> Result<Point2> {
    let limits = &cfg.joint_limits[arm.index()];
    for (k, (&q, r)) in joints.iter().zip(limits).enumerate() {
        if !r.contains(q) {
            return Err(Error::contract(format!(
                "{arm} joint {k} = {q} outside [{}, {}]",
                r.min, r.max
            )));
        }
    }
    Ok(cfg.effector(arm, joints))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub joint_angles: [Joints; ARMS],
    pub obstacle_mask: ObstacleMask,
    pub target_lit: [bool; TARGETS],
    pub step: u32,
    pub active_arm: Arm,
}

impl WorldState {
    /// Start-of-trial state: both arms at home, nothing lit.
    pub fn reset(cfg: &SceneConfig, mask: ObstacleMask, active_arm: Arm) -> Self {
        Self {
            joint_angles: cfg.home_pose,
            obstacle_mask: mask,
            target_lit: [false; TARGETS],
            step: 0,
            active_arm,
        }
    }

    pub fn active_joints(&self) -> &Joints {
        &self.joint_angles[self.active_arm.index()]
    }

    pub fn effector(&self, cfg: &SceneConfig) -> Point2 {
        cfg.effector(self.active_arm, self.active_joints())
    }
}

/// Moves the active arm: command `c` in [0, 1] maps to a joint velocity of
/// `(2c - 1) * max_joint_step`, with 0.5 meaning no motion.
pub fn apply_action(state: &WorldState, commands: &[f64; JOINTS], cfg: &SceneConfig) -> WorldState {
    let mut next = *state;
    let a = state.active_arm.index();
    for k in 0..JOINTS {
        let c = commands[k].clamp(0.0, 1.0);
        let q = next.joint_angles[a][k] + (2.0 * c - 1.0) * cfg.max_joint_step;
        next.joint_angles[a][k] = cfg.joint_limits[a][k].clamp(q);
    }
    next.step += 1;
    next
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TouchKind {
    None,
    Target(usize),
    Obstacle(usize),
}

impl fmt::Display for TouchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TouchKind::None => f.write_str("none"),
            TouchKind::Target(i) => write!(f, "target{i}"),
            TouchKind::Obstacle(j) => write!(f, "obstacle{j}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchEvent {
    pub kind: TouchKind,
    pub effector_pos: Point2,
}

/// What the active effector is touching; obstacles win ties.
pub fn check_touch(state: &WorldState, cfg: &SceneConfig) -> TouchEvent {
    let p = state.effector(cfg);
    TouchEvent {
        kind: cfg.classify_point(p, state.obstacle_mask),
        effector_pos: p,
    }
}

/// Binary 80x60 image plus the layer of pixels covered by the arms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub pixels: Vec<u8>,
    pub arm_mask: Vec<u8>,
}

impl Frame {
    pub fn blank() -> Self {
        Self {
            pixels: vec![0; FRAME_PIXELS],
            arm_mask: vec![0; FRAME_PIXELS],
        }
    }

    pub fn index(col: usize, row: usize) -> usize {
        row * FRAME_WIDTH + col
    }

    pub fn pixel(&self, col: usize, row: usize) -> u8 {
        self.pixels[Self::index(col, row)]
    }

    pub fn lit_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }
}

/// Projection between workspace coordinates and frame pixels. Row 0 is
/// the top of the image.
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    ws: Rect,
    px_w: f64,
    px_h: f64,
}

impl Projection {
    pub fn new(ws: Rect) -> Self {
        Self {
            ws,
            px_w: ws.width() / FRAME_WIDTH as f64,
            px_h: ws.height() / FRAME_HEIGHT as f64,
        }
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> Point2 {
        Point2::new(
            self.ws.min.x + (col as f64 + 0.5) * self.px_w,
            self.ws.max.y - (row as f64 + 0.5) * self.px_h,
        )
    }

    /// Pixel containing `p`, clamped to the frame.
    pub fn to_pixel(&self, p: Point2) -> (usize, usize) {
        let col = ((p.x - self.ws.min.x) / self.px_w).floor();
        let row = ((self.ws.max.y - p.y) / self.px_h).floor();
        (
            col.clamp(0.0, (FRAME_WIDTH - 1) as f64) as usize,
            row.clamp(0.0, (FRAME_HEIGHT - 1) as f64) as usize,
        )
    }

    fn pixel_box(&self, min: Point2, max: Point2) -> (usize, usize, usize, usize) {
        let (c0, r1) = self.to_pixel(min);
        let (c1, r0) = self.to_pixel(max);
        (c0, c1, r0, r1)
    }

    pub fn pixel_size(&self) -> f64 {
        self.px_w.max(self.px_h)
    }
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Renders lit targets as filled discs into `pixels` and both arms into
/// `arm_mask`. Obstacles never change within a trial, so they are not drawn.
pub fn rasterize(state: &WorldState, cfg: &SceneConfig) -> Frame {
    let proj = Projection::new(cfg.workspace);
    let mut frame = Frame::blank();
    let r = cfg.target_radius;
    for (i, c) in cfg.target_centers.iter().enumerate() {
        if !state.target_lit[i] {
            continue;
        }
        let (c0, c1, r0, r1) = proj.pixel_box(Point2::new(c.x - r, c.y - r), Point2::new(c.x + r, c.y + r));
        for row in r0..=r1 {
            for col in c0..=c1 {
                if proj.pixel_center(col, row).distance(*c) <= r {
                    frame.pixels[Frame::index(col, row)] = 1;
                }
            }
        }
    }
    // Half a pixel diagonal keeps every link a connected stroke.
    let half_width = proj.pixel_size() * std::f64::consts::FRAC_1_SQRT_2;
    for arm in Arm::ALL {
        let pts = cfg.chain_points(arm, &state.joint_angles[arm.index()]);
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let lo = Point2::new(a.x.min(b.x) - half_width, a.y.min(b.y) - half_width);
            let hi = Point2::new(a.x.max(b.x) + half_width, a.y.max(b.y) + half_width);
            let (c0, c1, r0, r1) = proj.pixel_box(lo, hi);
            for row in r0..=r1 {
                for col in c0..=c1 {
                    if segment_distance(proj.pixel_center(col, row), a, b) <= half_width {
                        frame.arm_mask[Frame::index(col, row)] = 1;
                    }
                }
            }
        }
    }
    frame
}

/// Each slot is occupied independently with probability 1/2.
pub fn sample_obstacle_mask<R: Rng + ?Sized>(rng: &mut R) -> ObstacleMask {
    ObstacleMask(rng.random::<u16>() & ObstacleMask::FULL.0)
}

/// Scene plus live state, stepping one control command at a time.
#[derive(Clone, Debug)]
pub struct World {
    pub cfg: SceneConfig,
    pub state: WorldState,
}

impl World {
    pub fn new(cfg: SceneConfig) -> Self {
        let state = WorldState::reset(&cfg, ObstacleMask::EMPTY, Arm::Left);
        Self { cfg, state }
    }

    pub fn reset(&mut self, mask: ObstacleMask) {
        self.state = WorldState::reset(&self.cfg, mask, self.state.active_arm);
    }

    pub fn set_active_arm(&mut self, arm: Arm) {
        self.state.active_arm = arm;
    }

    /// Applies one command and lights a touched target.
    pub fn step(&mut self, commands: &[f64; JOINTS]) -> TouchEvent {
        self.state = apply_action(&self.state, commands, &self.cfg);
        let event = check_touch(&self.state, &self.cfg);
        if let TouchKind::Target(i) = event.kind {
            self.state.target_lit[i] = true;
        }
        event
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn unit_arm_cfg() -> SceneConfig {
        let mut cfg = SceneConfig::default();
        cfg.arm_bases[0] = Point2::new(0.0, 0.0);
        cfg.link_lengths[0] = [0.30, 0.25, 0.20, 0.15];
        cfg.joint_limits[0] = [JointRange::new(-3.2, 3.2); JOINTS];
        cfg
    }

    #[test]
    fn fk_identity_pose_points_along_x() {
        let cfg = unit_arm_cfg();
        let p = forward_kinematics(&[0.0; 4], Arm::Left, &cfg).unwrap();
        assert!((p.x - 0.90).abs() < 1e-12 && p.y.abs() < 1e-12);
    }

    #[test]
    fn fk_shoulder_quarter_turn_points_up() {
        let cfg = unit_arm_cfg();
        let p = forward_kinematics(&[FRAC_PI_2, 0.0, 0.0, 0.0], Arm::Left, &cfg).unwrap();
        assert!(p.x.abs() < 1e-12 && (p.y - 0.90).abs() < 1e-12);
    }

    #[test]
    fn fk_matches_complex_chain_oracle() {
        // Independent route: product of unit complex numbers e^{i*theta}.
        let cfg = unit_arm_cfg();
        let q: [f64; 4] = [0.3, -0.2, 0.1, 0.4];
        let (mut re, mut im) = (0.0f64, 0.0f64);
        let (mut rot_re, mut rot_im) = (1.0f64, 0.0f64);
        for (k, len) in [0.30, 0.25, 0.20, 0.15].iter().enumerate() {
            let (c, s) = (q[k].cos(), q[k].sin());
            let nr = rot_re * c - rot_im * s;
            let ni = rot_re * s + rot_im * c;
            rot_re = nr;
            rot_im = ni;
            re += len * rot_re;
            im += len * rot_im;
        }
        let p = forward_kinematics(&q, Arm::Left, &cfg).unwrap();
        assert!((p.x - re).abs() < 1e-12 && (p.y - im).abs() < 1e-12);
    }

    #[test]
    fn fk_rejects_out_of_limit_joints() {
        let cfg = SceneConfig::default();
        let err = forward_kinematics(&[-0.1, 0.0, 0.0, 0.0], Arm::Left, &cfg).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn fk_is_lipschitz_in_each_joint() {
        let cfg = unit_arm_cfg();
        let q = [0.7, -1.1, 0.4, 2.0];
        let base = cfg.effector(Arm::Left, &q);
        let eps = 1e-6;
        for k in 0..JOINTS {
            let mut q2 = q;
            q2[k] += eps;
            let moved = cfg.effector(Arm::Left, &q2).distance(base);
            assert!(moved <= eps * cfg.reach(Arm::Left) + 1e-15);
        }
    }

    #[test]
    fn midpoint_command_holds_still() {
        let cfg = SceneConfig::default();
        let s = WorldState::reset(&cfg, ObstacleMask::EMPTY, Arm::Left);
        let next = apply_action(&s, &[0.5; 4], &cfg);
        assert_eq!(next.joint_angles, s.joint_angles);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn full_command_at_upper_limit_stays_clamped() {
        let cfg = SceneConfig::default();
        let mut s = WorldState::reset(&cfg, ObstacleMask::EMPTY, Arm::Left);
        s.joint_angles[0][1] = cfg.joint_limits[0][1].max;
        let next = apply_action(&s, &[0.5, 1.0, 0.5, 0.5], &cfg);
        assert_eq!(next.joint_angles[0][1], cfg.joint_limits[0][1].max);
    }

    #[test]
    fn zero_command_moves_by_one_max_step() {
        let cfg = SceneConfig {
            max_joint_step: 0.05,
            ..SceneConfig::default()
        };
        let s = WorldState::reset(&cfg, ObstacleMask::EMPTY, Arm::Left);
        let next = apply_action(&s, &[0.0, 0.5, 0.5, 0.5], &cfg);
        let moved = s.joint_angles[0][0] - next.joint_angles[0][0];
        assert!((moved - 0.05).abs() < 1e-15);
        // Only the active arm moves.
        assert_eq!(next.joint_angles[1], s.joint_angles[1]);
    }

    #[test]
    fn out_of_range_commands_are_clamped() {
        let cfg = SceneConfig::default();
        let s = WorldState::reset(&cfg, ObstacleMask::EMPTY, Arm::Left);
        let a = apply_action(&s, &[7.0, -3.0, 0.5, 0.5], &cfg);
        let b = apply_action(&s, &[1.0, 0.0, 0.5, 0.5], &cfg);
        assert_eq!(a.joint_angles, b.joint_angles);
    }

    /// Left arm fully stretched along +x; tests move the base so the
    /// effector lands where they need it.
    fn stretched(cfg: &SceneConfig) -> WorldState {
        let mut state = WorldState::reset(cfg, ObstacleMask::EMPTY, Arm::Left);
        state.joint_angles[0] = [0.0; 4];
        state
    }

    #[test]
    fn effector_on_target_center_touches_it() {
        let mut cfg = SceneConfig::default();
        cfg.joint_limits[0] = [JointRange::new(-3.2, 3.2); JOINTS];
        let c = cfg.target_centers[1];
        cfg.arm_bases[0] = Point2::new(c.x - cfg.reach(Arm::Left), c.y);
        let state = stretched(&cfg);
        let ev = check_touch(&state, &cfg);
        assert_eq!(ev.kind, TouchKind::Target(1));
    }

    #[test]
    fn absent_obstacle_is_not_touched() {
        let mut cfg = SceneConfig::default();
        cfg.joint_limits[0] = [JointRange::new(-3.2, 3.2); JOINTS];
        let r = cfg.obstacle_rects[4];
        let centre = Point2::new((r.min.x + r.max.x) / 2.0, (r.min.y + r.max.y) / 2.0);
        cfg.arm_bases[0] = Point2::new(centre.x - cfg.reach(Arm::Left), centre.y);
        let mut state = stretched(&cfg);
        assert_eq!(check_touch(&state, &cfg).kind, TouchKind::None);
        state.obstacle_mask = ObstacleMask::from_slots(&[4]).unwrap();
        assert_eq!(check_touch(&state, &cfg).kind, TouchKind::Obstacle(4));
    }

    #[test]
    fn touch_classification_matches_brute_force_oracle() {
        let cfg = SceneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = Point2::new(rng.random_range(-0.8..0.8), rng.random_range(-0.1..1.1));
            let mask = sample_obstacle_mask(&mut rng);
            // Oracle: explicit inequalities and squared distances.
            let mut expect = TouchKind::None;
            for i in 0..TARGETS {
                let c = cfg.target_centers[i];
                if (p.x - c.x).powi(2) + (p.y - c.y).powi(2) <= cfg.target_radius.powi(2) {
                    expect = TouchKind::Target(i);
                }
            }
            for j in 0..OBSTACLES {
                let r = cfg.obstacle_rects[j];
                let inside = !(p.x < r.min.x || p.x > r.max.x || p.y < r.min.y || p.y > r.max.y);
                if inside && (mask.bits() >> j) & 1 == 1 {
                    expect = TouchKind::Obstacle(j);
                }
            }
            assert_eq!(cfg.classify_point(p, mask), expect, "point {p:?} mask {mask}");
        }
    }

    #[test]
    fn obstacle_wins_over_target_on_overlap() {
        let mut cfg = SceneConfig::default();
        let c = cfg.target_centers[0];
        cfg.obstacle_rects[0] = Rect::new(c.x - 0.01, c.y - 0.01, c.x + 0.01, c.y + 0.01);
        let mask = ObstacleMask::from_slots(&[0]).unwrap();
        assert_eq!(cfg.classify_point(c, mask), TouchKind::Obstacle(0));
    }

    #[test]
    fn unlit_scene_renders_nothing() {
        let cfg = SceneConfig::default();
        let s = WorldState::reset(&cfg, ObstacleMask::FULL, Arm::Left);
        let f = rasterize(&s, &cfg);
        assert_eq!(f.lit_count(), 0);
        assert!(f.arm_mask.iter().any(|&m| m == 1));
    }

    #[test]
    fn lit_target_renders_disc_at_projected_center() {
        let cfg = SceneConfig::default();
        let mut s = WorldState::reset(&cfg, ObstacleMask::EMPTY, Arm::Left);
        s.target_lit[0] = true;
        let f = rasterize(&s, &cfg);
        let proj = Projection::new(cfg.workspace);
        let (col, row) = proj.to_pixel(cfg.target_centers[0]);
        assert_eq!(f.pixel(col, row), 1);
        // Disc area in pixels, within a perimeter's worth of slack.
        let px = proj.pixel_size();
        let area = std::f64::consts::PI * (cfg.target_radius / px).powi(2);
        let perimeter = 2.0 * std::f64::consts::PI * cfg.target_radius / px;
        assert!((f.lit_count() as f64 - area).abs() <= perimeter);
        assert_eq!(rasterize(&s, &cfg), f);
    }

    #[test]
    fn arm_over_unlit_target_only_touches_mask_layer() {
        let mut cfg = SceneConfig::default();
        cfg.joint_limits[0] = [JointRange::new(-3.2, 3.2); JOINTS];
        let c = cfg.target_centers[0];
        cfg.arm_bases[0] = Point2::new(c.x - cfg.reach(Arm::Left), c.y);
        let s = stretched(&cfg);
        let f = rasterize(&s, &cfg);
        assert_eq!(f.lit_count(), 0);
        let (col, row) = Projection::new(cfg.workspace).to_pixel(c);
        assert_eq!(f.arm_mask[Frame::index(col, row)], 1);
    }

    #[test]
    fn mask_sampling_is_reproducible() {
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            (0..100).map(|_| sample_obstacle_mask(&mut rng)).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<_> = (0..100).map(|_| sample_obstacle_mask(&mut rng)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_slots_are_fair_coins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut counts = [0usize; OBSTACLES];
        let mut seen_empty = false;
        let mut seen_full = false;
        for _ in 0..n {
            let m = sample_obstacle_mask(&mut rng);
            for j in m.present_slots() {
                counts[j] += 1;
            }
            seen_empty |= m == ObstacleMask::EMPTY;
            seen_full |= m == ObstacleMask::FULL;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.47..=0.53).contains(&f), "slot frequency {f}");
        }
        // Miss probability for each is (1 - 1/512)^10000, about 3e-9.
        assert!(seen_empty && seen_full);
    }

    #[test]
    fn mask_text_round_trip() {
        let m: ObstacleMask = "010000000".parse().unwrap();
        assert!(m.is_present(1) && m.count() == 1);
        assert_eq!(m.to_string(), "010000000");
        assert!("01000000".parse::<ObstacleMask>().is_err());
        assert!(ObstacleMask::from_bits(1 << 9).is_err());
    }

    #[test]
    fn default_scene_is_valid() {
        SceneConfig::default().validate().unwrap();
    }

    #[test]
    fn world_step_lights_touched_target() {
        let mut cfg = SceneConfig::default();
        cfg.joint_limits[0] = [JointRange::new(-3.2, 3.2); JOINTS];
        let c = cfg.target_centers[2];
        cfg.arm_bases[0] = Point2::new(c.x - cfg.reach(Arm::Left), c.y);
        let mut world = World::new(cfg);
        world.state.joint_angles[0] = [0.0; 4];
        let ev = world.step(&[0.5; 4]);
        assert_eq!(ev.kind, TouchKind::Target(2));
        assert!(world.state.target_lit[2]);
    }
}
