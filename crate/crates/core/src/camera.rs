use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Points with camera-space depth at or below this are behind the camera
/// for projection purposes; the rasterizer clips against the same plane.
pub const NEAR_PLANE: f64 = 0.1;

/// Camera pose with 4 free degrees of freedom (x, y, z, yaw). Pitch and
/// roll ride along as fixed attitude from the gravity prior; the solver
/// never touches them.
///
/// Conventions: world z is up. Camera axes are +X right, +Y down,
/// +Z forward. At yaw = pitch = roll = 0 the camera looks along world +y
/// with world +x to its right. Positive yaw turns the heading
/// counterclockwise seen from above (+y toward -x); pitch -90 looks straight
/// down; roll turns about the forward axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose4<S> {
    pub x: S,
    pub y: S,
    pub z: S,
    pub yaw_deg: S,
    pub pitch_deg: S,
    pub roll_deg: S,
}

impl<S: Scalar> Pose4<S> {
    pub fn new(x: S, y: S, z: S, yaw_deg: S) -> Self {
        Pose4 { x, y, z, yaw_deg: wrap_deg(yaw_deg), pitch_deg: S::zero(), roll_deg: S::zero() }
    }

    pub fn with_attitude(mut self, pitch_deg: S, roll_deg: S) -> Self {
        self.pitch_deg = pitch_deg;
        self.roll_deg = roll_deg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.x, self.y, self.z, self.yaw_deg, self.pitch_deg, self.roll_deg];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("pose has non-finite component".into()));
        }
        if self.pitch_deg < S::of(-90.0) || self.pitch_deg > S::of(90.0) {
            return Err(Error::Domain("pitch outside [-90, 90] degrees".into()));
        }
        Ok(())
    }

    pub fn position(&self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    /// Euclidean distance between the two camera centers.
    pub fn translation_distance(&self, other: &Self) -> S {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Wraps an angle in degrees into [-180, 180).
pub fn wrap_deg<S: Scalar>(a: S) -> S {
    let full = S::of(360.0);
    let half = S::of(180.0);
    let mut r = (a + half) % full;
    if r < S::zero() {
        r = r + full;
    }
    r - half
}

/// Pinhole intrinsics; `width`/`height` define the viewport in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: u32,
    pub height: u32,
}

impl<S: Scalar> Intrinsics<S> {
    pub fn new(fx: S, fy: S, cx: S, cy: S, width: u32, height: u32) -> Result<Self> {
        if !(fx > S::zero() && fy > S::zero()) {
            return Err(Error::Domain("focal lengths must be positive".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::Domain("zero-area viewport".into()));
        }
        if cx < S::zero() || cx >= S::of_u64(width as u64) || cy < S::zero() || cy >= S::of_u64(height as u64) {
            return Err(Error::Domain("principal point outside viewport".into()));
        }
        Ok(Intrinsics { fx, fy, cx, cy, width, height })
    }
}

/// Rigid world-to-camera transform.
#[derive(Clone, Copy, Debug)]
pub struct Extrinsics<S> {
    pub rotation: [[S; 3]; 3],
    pub translation: [S; 3],
}

impl<S: Scalar> Extrinsics<S> {
    #[inline]
    pub fn transform(&self, p: [S; 3]) -> [S; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    /// Homogeneous 4x4 form, row-major.
    pub fn matrix4(&self) -> [[S; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [S::zero(), S::zero(), S::zero(), S::one()],
        ]
    }
}

fn mat_mul<S: Scalar>(a: &[[S; 3]; 3], b: &[[S; 3]; 3]) -> [[S; 3]; 3] {
    let mut m = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    m
}

fn rot_x<S: Scalar>(deg: S) -> [[S; 3]; 3] {
    let (s, c) = deg.to_radians().sin_cos();
    [
        [S::one(), S::zero(), S::zero()],
        [S::zero(), c, -s],
        [S::zero(), s, c],
    ]
}

fn rot_z<S: Scalar>(deg: S) -> [[S; 3]; 3] {
    let (s, c) = deg.to_radians().sin_cos();
    [
        [c, -s, S::zero()],
        [s, c, S::zero()],
        [S::zero(), S::zero(), S::one()],
    ]
}

/// Fixed axis-convention matrix taking world coordinates to the camera
/// frame of the zero-attitude pose (look along +y, x right, y down).
fn axis_convention<S: Scalar>() -> [[S; 3]; 3] {
    let o = S::one();
    let z = S::zero();
    [[o, z, z], [z, z, -o], [z, o, z]]
}

/// World-to-camera rotation for a pose. Composition (left to right applies
/// last): roll about the camera forward axis, pitch about the camera right
/// axis, the fixed axis convention, yaw about the world (gravity) z axis.
pub fn rotation_world_to_camera<S: Scalar>(pose: &Pose4<S>) -> [[S; 3]; 3] {
    let rz_yaw = rot_z(-pose.yaw_deg);
    let rx_pitch = rot_x(-pose.pitch_deg);
    let rz_roll = rot_z(-pose.roll_deg);
    mat_mul(&rz_roll, &mat_mul(&rx_pitch, &mat_mul(&axis_convention(), &rz_yaw)))
}

/// Full world-to-camera transform: rotation as above, translation placing
/// the camera center at the pose position.
pub fn extrinsics<S: Scalar>(pose: &Pose4<S>) -> Extrinsics<S> {
    let r = rotation_world_to_camera(pose);
    let c = pose.position();
    let t = [
        -(r[0][0] * c[0] + r[0][1] * c[1] + r[0][2] * c[2]),
        -(r[1][0] * c[0] + r[1][1] * c[1] + r[1][2] * c[2]),
        -(r[2][0] * c[0] + r[2][1] * c[1] + r[2][2] * c[2]),
    ];
    Extrinsics { rotation: r, translation: t }
}

/// Projects a camera-frame point to pixel coordinates, or `None` when the
/// point sits at or behind the near plane.
#[inline]
pub fn project<S: Scalar>(intr: &Intrinsics<S>, p_cam: [S; 3]) -> Option<(S, S)> {
    if p_cam[2] <= S::of(NEAR_PLANE) {
        return None;
    }
    let u = intr.fx * p_cam[0] / p_cam[2] + intr.cx;
    let v = intr.fy * p_cam[1] / p_cam[2] + intr.cy;
    Some((u, v))
}

/// Angle in degrees of the relative rotation between the two poses' full
/// extrinsic rotations. Equals the wrapped yaw difference when attitude
/// matches.
pub fn rotation_angle_deg<S: Scalar>(a: &Pose4<S>, b: &Pose4<S>) -> S {
    let ra = rotation_world_to_camera(a);
    let rb = rotation_world_to_camera(b);
    // trace(ra * rb^T)
    let mut tr = S::zero();
    for i in 0..3 {
        for k in 0..3 {
            tr = tr + ra[i][k] * rb[i][k];
        }
    }
    let c = ((tr - S::one()) / S::of(2.0)).max(-S::one()).min(S::one());
    c.acos().to_degrees()
}

// ==== text records ====

pub(crate) fn write_kv_record<W: Write>(w: &mut W, pairs: &[(&str, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(w, "{k} {v}")?;
    }
    Ok(())
}

pub(crate) fn read_kv_record<R: BufRead>(r: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.split_once(char::is_whitespace) {
            Some((k, v)) => out.push((k.to_string(), v.trim().to_string())),
            None => return Err(Error::parse(idx + 1, format!("expected 'key value', got {t:?}"))),
        }
    }
    Ok(out)
}

pub(crate) fn kv_get<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Domain(format!("missing record field {key:?}")))
}

pub(crate) fn kv_parse<T: std::str::FromStr>(pairs: &[(String, String)], key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = kv_get(pairs, key)?;
    raw.parse::<T>()
        .map_err(|e| Error::Domain(format!("field {key:?}: bad value {raw:?}: {e}")))
}

pub fn pose_record<S: Scalar>(pose: &Pose4<S>) -> Vec<(&'static str, String)> {
    vec![
        ("x", pose.x.to_string()),
        ("y", pose.y.to_string()),
        ("z", pose.z.to_string()),
        ("yaw_deg", pose.yaw_deg.to_string()),
        ("pitch_deg", pose.pitch_deg.to_string()),
        ("roll_deg", pose.roll_deg.to_string()),
    ]
}

pub fn write_pose_file<S: Scalar>(pose: &Pose4<S>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_kv_record(&mut buf, &pose_record(pose))?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn pose_from_pairs<S: Scalar>(pairs: &[(String, String)]) -> Result<Pose4<S>> {
    let pose = Pose4 {
        x: kv_parse(pairs, "x")?,
        y: kv_parse(pairs, "y")?,
        z: kv_parse(pairs, "z")?,
        yaw_deg: kv_parse(pairs, "yaw_deg")?,
        pitch_deg: kv_parse(pairs, "pitch_deg")?,
        roll_deg: kv_parse(pairs, "roll_deg")?,
    };
    pose.validate()?;
    Ok(pose)
}

pub fn read_pose_file<S: Scalar>(path: &Path) -> Result<Pose4<S>> {
    let text = std::fs::read_to_string(path)?;
    pose_from_pairs(&read_kv_record(text.as_bytes())?)
}

pub fn write_intrinsics_file<S: Scalar>(intr: &Intrinsics<S>, path: &Path) -> Result<()> {
    let pairs = vec![
        ("fx", intr.fx.to_string()),
        ("fy", intr.fy.to_string()),
        ("cx", intr.cx.to_string()),
        ("cy", intr.cy.to_string()),
        ("width", intr.width.to_string()),
        ("height", intr.height.to_string()),
    ];
    let mut buf = Vec::new();
    write_kv_record(&mut buf, &pairs)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_intrinsics_file<S: Scalar>(path: &Path) -> Result<Intrinsics<S>> {
    let text = std::fs::read_to_string(path)?;
    let pairs = read_kv_record(text.as_bytes())?;
    Intrinsics::new(
        kv_parse(&pairs, "fx")?,
        kv_parse(&pairs, "fy")?,
        kv_parse(&pairs, "cx")?,
        kv_parse(&pairs, "cy")?,
        kv_parse(&pairs, "width")?,
        kv_parse(&pairs, "height")?,
    )
}
