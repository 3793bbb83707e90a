//! Camera model, frame transforms and planar kinematics.
//!
//! Conventions used throughout the crate:
//!
//! * World frame is right-handed with `z` up and the floor at `z = 0`.
//!   Yaw is measured counter-clockwise from `+x`, so yaw 90° points along `+y`.
//! * Camera frame is the usual pinhole frame: `x` right, `y` down, `z` forward.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    BadDimensions { width: u32, height: u32 },
    #[error("horizontal field of view must lie in (0, 180) degrees, got {0}")]
    BadFov(f64),
    #[error("tilt must lie in [0, pi/2) radians, got {0}")]
    BadTilt(f64),
}

/// Wraps an angle into `[0, 360)`.
pub fn wrap_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `(-180, 180]`.
pub fn wrap_180(deg: f64) -> f64 {
    let w = wrap_360(deg);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Minimal absolute circular difference between two headings, in `[0, 180]`.
pub fn angular_deviation(a: f64, b: f64) -> f64 {
    let d = wrap_360(a - b);
    d.min(360.0 - d)
}

/// World-frame bearing in degrees from `from` to `to`, in `[0, 360)`.
pub fn bearing(from: (f64, f64), to: (f64, f64)) -> f64 {
    wrap_360((to.1 - from.1).atan2(to.0 - from.0).to_degrees())
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Planar agent pose. Yaw is kept in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl AgentPose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_360(yaw),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Relative motion command: turn by `theta` degrees, then move `r` meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarAction {
    pub r: f64,
    pub theta: f64,
}

impl PolarAction {
    pub fn new(r: f64, theta: f64) -> Self {
        debug_assert!(r >= 0.0, "negative travel distance {r}");
        Self {
            r: r.max(0.0),
            theta: wrap_180(theta),
        }
    }
}

/// Rotates first, then translates along the new heading.
pub fn apply_polar(pose: AgentPose, action: PolarAction) -> AgentPose {
    let yaw = wrap_360(pose.yaw + action.theta);
    let rad = yaw.to_radians();
    AgentPose {
        x: pose.x + action.r * rad.cos(),
        y: pose.y + action.r * rad.sin(),
        yaw,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Builds square-pixel intrinsics from a horizontal field of view in degrees.
    pub fn from_hfov(width: u32, height: u32, hfov: f64) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::BadDimensions { width, height });
        }
        if !(hfov > 0.0 && hfov < 180.0) {
            return Err(GeometryError::BadFov(hfov));
        }
        let fx = (width as f64 / 2.0) / (hfov.to_radians() / 2.0).tan();
        Ok(Self {
            width,
            height,
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        })
    }

    pub fn hfov(&self) -> f64 {
        2.0 * (self.width as f64 / 2.0 / self.fx).atan().to_degrees()
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }

    /// Horizontal angle (degrees, counter-clockwise positive) of the ray through column `c`
    /// relative to the optical axis. Columns right of centre look clockwise.
    pub fn column_offset(&self, column: f64) -> f64 {
        -((column - self.cx) / self.fx).atan().to_degrees()
    }

    /// Inverse of [`column_offset`](Self::column_offset), clamped to a valid column index.
    pub fn column_for_offset(&self, offset_deg: f64) -> usize {
        let c = self.cx - self.fx * offset_deg.to_radians().tan();
        c.floor().clamp(0.0, self.width as f64 - 1.0) as usize
    }
}

/// Convenience wrapper matching the free-function form used by configuration code.
pub fn make_intrinsics(width: u32, height: u32, hfov: f64) -> Result<CameraIntrinsics, GeometryError> {
    CameraIntrinsics::from_hfov(width, height, hfov)
}

/// Rigid world-to-camera transform: `p_cam = rotation * p_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrinsicTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl ExtrinsicTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Camera centre expressed in world coordinates.
    pub fn origin(&self) -> Vector3<f64> {
        self.camera_to_world(&Vector3::zeros())
    }
}

/// World-to-camera transform for a camera mounted at `camera_height` above the agent,
/// panned to `pose.yaw + view_yaw` and pitched down by `tilt` radians.
pub fn camera_extrinsics(
    pose: &AgentPose,
    camera_height: f64,
    tilt: f64,
    view_yaw: f64,
) -> Result<ExtrinsicTransform, GeometryError> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&tilt) {
        return Err(GeometryError::BadTilt(tilt));
    }
    let heading = (pose.yaw + view_yaw).to_radians();
    let (sh, ch) = heading.sin_cos();
    let (st, ct) = tilt.sin_cos();

    // Camera axes expressed in the world frame; these become the rows of R.
    let right = Vector3::new(sh, -ch, 0.0);
    let down = Vector3::new(-ch * st, -sh * st, -ct);
    let forward = Vector3::new(ch * ct, sh * ct, -st);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);

    let centre = Vector3::new(pose.x, pose.y, camera_height);
    Ok(ExtrinsicTransform {
        rotation,
        translation: -(rotation * centre),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    /// Optical-axis depth (the homogeneous scale factor).
    pub depth: f64,
}

/// Pinhole projection of a world point. `None` when the point is at or behind the image plane.
///
/// The returned pixel may lie outside the image rectangle.
pub fn project_point(
    intr: &CameraIntrinsics,
    ext: &ExtrinsicTransform,
    p_world: &Vector3<f64>,
) -> Option<PixelProjection> {
    let pc = ext.world_to_camera(p_world);
    let depth = pc.z;
    if depth <= 0.0 {
        return None;
    }
    Some(PixelProjection {
        u: intr.fx * pc.x / depth + intr.cx,
        v: intr.fy * pc.y / depth + intr.cy,
        depth,
    })
}

/// Inverse of [`project_point`] for a known depth.
pub fn back_project(
    intr: &CameraIntrinsics,
    ext: &ExtrinsicTransform,
    proj: &PixelProjection,
) -> Vector3<f64> {
    let pc = Vector3::new(
        (proj.u - intr.cx) / intr.fx * proj.depth,
        (proj.v - intr.cy) / intr.fy * proj.depth,
        proj.depth,
    );
    ext.camera_to_world(&pc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn intrinsics_from_fov() {
        let k = make_intrinsics(640, 480, 90.0).unwrap();
        assert_abs_diff_eq!(k.fx, 320.0, epsilon = 1e-9);
        assert_eq!(k.fy, k.fx);
        assert_eq!((k.cx, k.cy), (320.0, 240.0));

        // 320 / tan(39.5 deg) = 388.19104...
        let k = make_intrinsics(640, 480, 79.0).unwrap();
        assert_abs_diff_eq!(k.fx, 388.191041, epsilon = 1e-5);
        assert_abs_diff_eq!(k.hfov(), 79.0, epsilon = 1e-9);

        let k = make_intrinsics(2, 2, 90.0).unwrap();
        assert_abs_diff_eq!(k.fx, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn intrinsics_reject_bad_input() {
        assert!(make_intrinsics(0, 480, 79.0).is_err());
        assert!(make_intrinsics(640, 0, 79.0).is_err());
        assert!(make_intrinsics(640, 480, 0.0).is_err());
        assert!(make_intrinsics(640, 480, 180.0).is_err());
        assert!(make_intrinsics(640, 480, f64::NAN).is_err());
    }

    #[test]
    fn extrinsics_identity_like() {
        let pose = AgentPose::new(0.0, 0.0, 0.0);
        let ext = camera_extrinsics(&pose, 0.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(ext.origin().norm(), 0.0, epsilon = 1e-12);
        let pc = ext.world_to_camera(&Vector3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(pc, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);

        let back = camera_extrinsics(&pose, 0.0, 0.0, 180.0).unwrap();
        let pc = back.world_to_camera(&Vector3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(pc.z, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn extrinsics_reject_bad_tilt() {
        let pose = AgentPose::new(0.0, 0.0, 0.0);
        assert!(camera_extrinsics(&pose, 0.88, -0.1, 0.0).is_err());
        assert!(camera_extrinsics(&pose, 0.88, std::f64::consts::FRAC_PI_2, 0.0).is_err());
    }

    #[test]
    fn extrinsics_are_rigid() {
        let pose = AgentPose::new(1.0, 2.0, 90.0);
        let ext = camera_extrinsics(&pose, 0.88, 0.25, 30.0).unwrap();
        let r = ext.rotation;
        assert_abs_diff_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-9);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ext.origin(), Vector3::new(1.0, 2.0, 0.88), epsilon = 1e-9);
    }

    proptest! {
        // Composition of elementary rotations: pan about world z, permute into camera axes,
        // pitch about camera x.
        #[test]
        fn extrinsics_match_elementary_rotations(yaw in -360.0f64..360.0, view in 0.0f64..360.0, tilt in 0.0f64..1.5) {
            let rz = |a: f64| Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0);
            let rx = |a: f64| Matrix3::new(1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos());
            let swap = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
            let want = rx(tilt) * swap * rz(-(yaw + view).to_radians());
            let ext = camera_extrinsics(&AgentPose::new(0.0, 0.0, yaw), 0.88, tilt, view).unwrap();
            prop_assert!((ext.rotation - want).abs().max() < 1e-12);
        }
    }

    #[test]
    fn projection_examples() {
        let k = make_intrinsics(640, 480, 90.0).unwrap();
        let id = ExtrinsicTransform::identity();
        let p = project_point(&k, &id, &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (320.0, 240.0, 1.0));

        let p = project_point(&k, &id, &Vector3::new(0.5, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(p.u, 480.0, epsilon = 1e-12);

        assert!(project_point(&k, &id, &Vector3::new(0.0, 0.0, -1.0)).is_none());
        assert!(project_point(&k, &id, &Vector3::new(1.0, 1.0, 0.0)).is_none());
    }

    #[test]
    fn agent_frame_projection_right_is_positive_u() {
        // A point to the agent's right (clockwise) lands right of centre.
        let k = make_intrinsics(640, 480, 90.0).unwrap();
        let ext = camera_extrinsics(&AgentPose::new(0.0, 0.0, 0.0), 0.0, 0.0, 0.0).unwrap();
        let p = project_point(&k, &ext, &Vector3::new(1.0, -0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(p.u, 480.0, epsilon = 1e-9);
        assert_abs_diff_eq!(k.column_offset(p.u), -26.565051177, epsilon = 1e-6);
    }

    #[test]
    fn column_offset_round_trip() {
        let k = make_intrinsics(640, 480, 79.0).unwrap();
        for c in [0usize, 100, 319, 320, 500, 639] {
            let off = k.column_offset(c as f64 + 0.5);
            assert_eq!(k.column_for_offset(off), c);
        }
    }

    #[test]
    fn angular_deviation_examples() {
        assert_eq!(angular_deviation(30.0, 30.0), 0.0);
        assert_abs_diff_eq!(angular_deviation(350.0, 10.0), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angular_deviation(30.0, 210.0), 180.0, epsilon = 1e-12);
    }

    #[test]
    fn polar_examples() {
        let p = apply_polar(AgentPose::new(0.0, 0.0, 0.0), PolarAction::new(1.0, 0.0));
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_eq!(p.yaw, 0.0);

        let p = apply_polar(AgentPose::new(0.0, 0.0, 0.0), PolarAction::new(0.0, 90.0));
        assert_eq!((p.x, p.y, p.yaw), (0.0, 0.0, 90.0));

        // Turn to 90 deg, then travel sqrt(2) along +y.
        let p = apply_polar(
            AgentPose::new(1.0, 1.0, 45.0),
            PolarAction::new(2f64.sqrt(), 45.0),
        );
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0 + 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.yaw, 90.0, epsilon = 1e-12);

        let p = AgentPose::new(3.0, -2.0, 123.0);
        assert_eq!(apply_polar(p, PolarAction::new(0.0, 0.0)), p);
    }

    #[test]
    fn wraps() {
        assert_eq!(wrap_360(-30.0), 330.0);
        assert_eq!(wrap_360(720.0), 0.0);
        assert_eq!(wrap_180(180.0), 180.0);
        assert_eq!(wrap_180(-180.0), 180.0);
        assert_eq!(wrap_180(190.0), -170.0);
        assert_eq!(wrap_360(-1e-20), 0.0);
        assert_eq!(AgentPose::new(0.0, 0.0, -90.0).yaw, 270.0);
    }

    proptest! {
        #[test]
        fn deviation_symmetric_and_periodic(a in -720.0f64..720.0, b in -720.0f64..720.0) {
            let d = angular_deviation(a, b);
            prop_assert!((0.0..=180.0).contains(&d));
            prop_assert!((d - angular_deviation(b, a)).abs() < 1e-9);
            prop_assert!((d - angular_deviation(a + 360.0, b)).abs() < 1e-9);
            prop_assert!((d - angular_deviation(a, b + 360.0)).abs() < 1e-9);
        }

        #[test]
        fn zero_turn_keeps_yaw(x in -10.0f64..10.0, y in -10.0f64..10.0, yaw in 0.0f64..360.0, r in 0.0f64..5.0) {
            let p = apply_polar(AgentPose::new(x, y, yaw), PolarAction::new(r, 0.0));
            prop_assert!(angular_deviation(p.yaw, yaw) < 1e-9);
        }

        #[test]
        fn rotate_then_translate(x in -10.0f64..10.0, y in -10.0f64..10.0, yaw in 0.0f64..360.0,
                                 r in 0.0f64..5.0, theta in -179.0f64..180.0) {
            let start = AgentPose::new(x, y, yaw);
            let two_step = apply_polar(apply_polar(start, PolarAction::new(0.0, theta)), PolarAction::new(r, 0.0));
            let one_step = apply_polar(start, PolarAction::new(r, theta));
            prop_assert!((two_step.x - one_step.x).abs() < 1e-9);
            prop_assert!((two_step.y - one_step.y).abs() < 1e-9);
            prop_assert!(angular_deviation(two_step.yaw, one_step.yaw) < 1e-9);
        }

        #[test]
        fn projection_round_trip(
            yaw in 0.0f64..360.0, tilt in 0.0f64..1.2, view in 0.0f64..360.0,
            u in 0.0f64..640.0, v in 0.0f64..480.0, depth in 0.05f64..30.0,
        ) {
            let k = make_intrinsics(640, 480, 79.0).unwrap();
            let ext = camera_extrinsics(&AgentPose::new(1.5, -2.0, yaw), 0.88, tilt, view).unwrap();
            let p = back_project(&k, &ext, &PixelProjection { u, v, depth });
            let proj = project_point(&k, &ext, &p).unwrap();
            let again = back_project(&k, &ext, &proj);
            prop_assert!((again - p).norm() < 1e-6);
            prop_assert!((proj.depth - depth).abs() < 1e-9);
        }
    }
}
