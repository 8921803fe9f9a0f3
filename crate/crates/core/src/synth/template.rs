//! Topology and geometry of the synthetic humanoid.
//!
//! The body is a vertical column of elliptical rings between two poles,
//! with one tube per arm extruded sideways from a small hole in the upper
//! chest. Rings sit at fixed fractions between a dozen "stations" whose
//! height and perimeter come straight from the body parameters.
//!
//! Heights interpolate between stations, but perimeters do not: every ring
//! keeps its reference shape and is scaled by the parameter of its nearest
//! station. A run of rings sharing a station therefore deforms as one
//! block that depends strongly on every parameter in its region list, and
//! parameters mix only across the single facet row (a seam) where the
//! nearest station changes.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::anthropometry::PARAM_COUNT;
use crate::error::{Error, Result};
use crate::mesh::{Face, TriangleMesh, Vec3};

pub(crate) const COLUMN_STATIONS: usize = 13;
pub(crate) const ARM_STATIONS: usize = 7;

/// Column stations, bottom to top.
pub(crate) mod station {
    pub const FOOT: usize = 0;
    pub const KNEE: usize = 1;
    pub const THIGH: usize = 2;
    pub const CROTCH: usize = 3;
    pub const GLUTEAL: usize = 4;
    pub const BELLY: usize = 5;
    pub const WAIST: usize = 6;
    pub const CHEST: usize = 7;
    pub const SHOULDER: usize = 8;
    pub const NECK_BASE: usize = 9;
    pub const NECK: usize = 10;
}

/// Arm stations from shoulder to fingertips; the tip pole follows.
pub(crate) mod arm_station {
    pub const ROOT: usize = 0;
    pub const UPPER_ARM: usize = 1;
    pub const ELBOW: usize = 2;
    pub const WRIST: usize = 4;
    pub const MIDHAND: usize = 5;
}

/// Minimum-to-maximum width ratio of each column station's ellipse.
const COLUMN_ASPECT: [f64; COLUMN_STATIONS] =
    [1.0, 0.9, 0.85, 0.75, 0.75, 0.8, 0.75, 0.7, 0.55, 0.9, 1.0, 1.1, 1.15];
const ARM_T: [f64; ARM_STATIONS] = [0.0, 0.2, 0.45, 0.6, 0.78, 0.9, 0.97];
const ARM_ASPECT: [f64; ARM_STATIONS] = [1.0, 1.0, 0.95, 0.9, 0.75, 0.45, 0.4];
/// Design ratio of shoulder-to-midhand length to full arm length.
pub(crate) const MIDHAND_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateResolution {
    /// Vertices per column ring; even, at least 12.
    pub ring_vertices: usize,
    /// Extra rings inside each of the 12 bands between column stations.
    /// The chest-to-shoulder band needs at least 2 (the arm hole spans them).
    pub band_rings: [usize; COLUMN_STATIONS - 1],
    /// Extra rings between consecutive arm stations.
    pub arm_rings: [usize; ARM_STATIONS - 1],
}

impl Default for TemplateResolution {
    /// 1,250 vertices and 2,496 facets.
    fn default() -> Self {
        TemplateResolution {
            ring_vertices: 20,
            band_rings: [6, 6, 3, 2, 4, 3, 5, 2, 2, 1, 1, 5],
            arm_rings: [0, 1, 0, 0, 0, 0],
        }
    }
}

impl TemplateResolution {
    /// Roughly ten times the default: 12,490 vertices, 24,976 facets.
    pub fn fine() -> Self {
        TemplateResolution {
            ring_vertices: 60,
            band_rings: [27, 24, 13, 5, 16, 12, 20, 8, 8, 5, 5, 20],
            arm_rings: [4, 6, 3, 4, 2, 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ring_vertices < 12 || !self.ring_vertices.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "ring_vertices must be even and at least 12, got {}",
                self.ring_vertices
            )));
        }
        if self.band_rings[station::CHEST] < 2 {
            return Err(Error::InvalidConfig(
                "the chest-to-shoulder band needs at least 2 extra rings".into(),
            ));
        }
        Ok(())
    }

    /// Half-width of the arm hole in ring steps.
    fn hole_half_width(&self) -> usize {
        (self.ring_vertices / 10).max(1)
    }

    fn arm_ring_vertices(&self) -> usize {
        4 * self.hole_half_width() + 4
    }
}

/// Where one ring sits: between stations `band` and `band + 1` at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RingPlace {
    band: usize,
    t: f64,
}

fn ring_places(stations: usize, extra: &[usize]) -> Vec<RingPlace> {
    let mut out = Vec::new();
    for band in 0..stations - 1 {
        let steps = extra[band] + 1;
        for s in 0..steps {
            out.push(RingPlace {
                band,
                t: s as f64 / steps as f64,
            });
        }
    }
    out.push(RingPlace {
        band: stations - 2,
        t: 1.0,
    });
    out
}

/// Named facet groups of the template, in region-id order.
pub const REGION_NAMES: [&str; 18] = [
    "lower leg",
    "knee",
    "thigh",
    "upper thigh",
    "hip",
    "gluteal",
    "lower belly",
    "belly",
    "waist",
    "upper waist",
    "chest",
    "shoulders",
    "neck base",
    "neck",
    "head",
    "upper arm",
    "forearm",
    "seam",
];

/// Parameter ids each region's shape depends on.
pub const REGION_DEPENDENCIES: [&[u8]; 18] = [
    // The ankle height is waist height minus id 17.
    &[8, 13, 17, 18],
    &[8, 18],
    &[8, 19],
    &[8, 12],
    &[12],
    &[6],
    &[6, 13],
    &[5, 13],
    &[11, 13],
    &[10, 11, 13],
    &[4, 10, 13],
    &[9, 10, 13],
    &[3, 10, 13],
    &[3],
    &[2, 3, 8, 10],
    &[14, 15],
    &[14, 16],
    &[],
];

/// Region id of the facet rows joining differently scaled rings,
/// including the arm joints. Their dependencies vary facet by facet.
pub const SEAM_REGION: usize = 17;

/// Which perimeter parameter scales rings nearest each column station.
const COLUMN_GROUP: [usize; COLUMN_STATIONS] = [0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 8, 8, 8];
/// Height span of each column band; span 0 is the foot cap below the
/// first station. Spans end at stations whose height is a fixed formula.
const BAND_SPAN: [usize; COLUMN_STATIONS - 1] = [1, 2, 2, 3, 4, 4, 5, 5, 5, 6, 6, 7];
const ARM_GROUP: [usize; ARM_STATIONS] = [0, 0, 0, 1, 1, 1, 1];

fn column_region(group: usize, span: usize) -> usize {
    match (group, span) {
        (0, 0 | 1) => 0,
        (0, 2) => 1,
        (1, 2) => 2,
        (2, 2) => 3,
        (2, 3) => 4,
        (3, 3) => 5,
        (3, 4) => 6,
        (4, 4) => 7,
        (5, 4) => 8,
        (5, 5) => 9,
        (6, 5) => 10,
        (7, 5) => 11,
        (8, 5) => 12,
        (8, 6) => 13,
        (8, 7) => 14,
        _ => unreachable!("no ring of group {group} lies in span {span}"),
    }
}

impl RingPlace {
    /// The station whose parameter scales this ring.
    fn nearest_station(&self) -> usize {
        if self.t <= 0.5 {
            self.band
        } else {
            self.band + 1
        }
    }
}

/// Parameter-independent structure of the synthetic body.
#[derive(Debug, Clone)]
pub struct Template {
    resolution: TemplateResolution,
    faces: Arc<Vec<Face>>,
    vertex_count: usize,
    column: Vec<RingPlace>,
    /// Vertex index of column ring r, slot j (None inside an arm hole).
    column_index: Vec<Vec<Option<u32>>>,
    arm: Vec<RingPlace>,
    /// [side][ring][k] vertex indices; side 0 is +x.
    arm_index: [Vec<Vec<u32>>; 2],
    arm_tip: [u32; 2],
    top_pole: u32,
    /// Torso vertices ringing each arm hole, matched to arm-ring slots.
    hole_loop: [Vec<u32>; 2],
    /// Column ring indices of the two hole rows below the shoulder ring.
    hole_rings: [usize; 3],
    face_region: Vec<u8>,
    /// Station perimeters of the reference body, which fix ring shapes.
    reference_perimeter: [f64; COLUMN_STATIONS],
    reference_arm_perimeter: [f64; ARM_STATIONS],
}

impl Template {
    pub fn new(resolution: TemplateResolution, reference: &BodyDimensions) -> Result<Self> {
        resolution.validate()?;
        let r_count = resolution.ring_vertices;
        let w = resolution.hole_half_width();
        let k_count = resolution.arm_ring_vertices();
        let column = ring_places(COLUMN_STATIONS, &resolution.band_rings);
        let arm = ring_places(ARM_STATIONS, &resolution.arm_rings);

        let shoulder_ring = column
            .iter()
            .position(|p| p.band == station::SHOULDER && p.t == 0.0)
            .expect("shoulder station ring");
        let hole_rings = [shoulder_ring - 2, shoulder_ring - 1, shoulder_ring];
        let centers = [0usize, r_count / 2];
        let slot = |c: usize, offset: isize| -> usize {
            (c as isize + offset).rem_euclid(r_count as isize) as usize
        };
        let is_hole_interior = |ring: usize, j: usize| {
            ring == hole_rings[1]
                && centers
                    .iter()
                    .any(|&c| (-(w as isize) + 1..w as isize).any(|o| slot(c, o) == j))
        };

        let mut next = 0u32;
        let mut take = || {
            let i = next;
            next += 1;
            i
        };
        let bottom_pole = take();
        let mut column_index = Vec::with_capacity(column.len());
        for ring in 0..column.len() {
            column_index.push(
                (0..r_count)
                    .map(|j| (!is_hole_interior(ring, j)).then(&mut take))
                    .collect::<Vec<_>>(),
            );
        }
        let top_pole = take();
        let mut arm_index: [Vec<Vec<u32>>; 2] = [Vec::new(), Vec::new()];
        let mut arm_tip = [0u32; 2];
        for side in 0..2 {
            arm_index[side] = (0..arm.len())
                .map(|_| (0..k_count).map(|_| take()).collect())
                .collect();
            arm_tip[side] = take();
        }
        let vertex_count = next as usize;

        let col = |ring: usize, j: usize| column_index[ring][j].expect("vertex outside hole");
        let hole_loop: [Vec<u32>; 2] = std::array::from_fn(|side| {
            let c = centers[side];
            let w = w as isize;
            let mut lp = Vec::with_capacity(k_count);
            for o in -w..=w {
                lp.push(col(hole_rings[0], slot(c, o)));
            }
            lp.push(col(hole_rings[1], slot(c, w)));
            for o in (-w..=w).rev() {
                lp.push(col(hole_rings[2], slot(c, o)));
            }
            lp.push(col(hole_rings[1], slot(c, -w)));
            lp
        });
        let in_hole_quad = |lower_ring: usize, j: usize| {
            (lower_ring == hole_rings[0] || lower_ring == hole_rings[1])
                && centers
                    .iter()
                    .any(|&c| (-(w as isize)..w as isize).any(|o| slot(c, o) == j))
        };

        let mut faces: Vec<Face> = Vec::new();
        let mut face_region: Vec<u8> = Vec::new();
        let mut push = |f: Face, region: usize, faces: &mut Vec<Face>| {
            faces.push(f);
            face_region.push(region as u8);
        };
        let column_group = |ring: usize| COLUMN_GROUP[column[ring].nearest_station()];
        let arm_group = |ring: usize| ARM_GROUP[arm[ring].nearest_station()];

        for j in 0..r_count {
            let jn = (j + 1) % r_count;
            push([bottom_pole, col(0, jn), col(0, j)], column_region(column_group(0), 0), &mut faces);
        }
        for ring in 0..column.len() - 1 {
            let region = if column_group(ring) == column_group(ring + 1) {
                column_region(column_group(ring), BAND_SPAN[column[ring].band])
            } else {
                SEAM_REGION
            };
            for j in 0..r_count {
                if in_hole_quad(ring, j) {
                    continue;
                }
                let jn = (j + 1) % r_count;
                let (a, b, c, d) = (col(ring, j), col(ring, jn), col(ring + 1, jn), col(ring + 1, j));
                push([a, b, c], region, &mut faces);
                push([a, c, d], region, &mut faces);
            }
        }
        let last = column.len() - 1;
        for j in 0..r_count {
            let jn = (j + 1) % r_count;
            push(
                [col(last, j), col(last, jn), top_pole],
                column_region(column_group(last), BAND_SPAN[COLUMN_STATIONS - 2]),
                &mut faces,
            );
        }
        for side in 0..2 {
            let rings = &arm_index[side];
            let mut prev: &[u32] = &hole_loop[side];
            for (ring, next_ring) in rings.iter().enumerate() {
                let region = if ring == 0 || arm_group(ring - 1) != arm_group(ring) {
                    SEAM_REGION
                } else {
                    15 + arm_group(ring)
                };
                for k in 0..k_count {
                    let kn = (k + 1) % k_count;
                    push([prev[k], prev[kn], next_ring[kn]], region, &mut faces);
                    push([prev[k], next_ring[kn], next_ring[k]], region, &mut faces);
                }
                prev = next_ring;
            }
            for k in 0..k_count {
                let kn = (k + 1) % k_count;
                push([prev[k], prev[kn], arm_tip[side]], 15 + arm_group(arm.len() - 1), &mut faces);
            }
        }

        Ok(Template {
            resolution,
            faces: Arc::new(faces),
            vertex_count,
            column,
            column_index,
            arm,
            arm_index,
            arm_tip,
            top_pole,
            hole_loop,
            hole_rings,
            face_region,
            reference_perimeter: reference.station_perimeter,
            reference_arm_perimeter: reference.arm_perimeter,
        })
    }

    pub fn resolution(&self) -> &TemplateResolution {
        &self.resolution
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &Arc<Vec<Face>> {
        &self.faces
    }

    /// Region id of every facet, indexing [`REGION_NAMES`].
    pub fn face_regions(&self) -> &[u8] {
        &self.face_region
    }

    fn column_ring_of(&self, st: usize) -> usize {
        if st == COLUMN_STATIONS - 1 {
            return self.column.len() - 1;
        }
        self.column
            .iter()
            .position(|p| p.band == st && p.t == 0.0)
            .expect("station ring")
    }

    fn arm_ring_of(&self, st: usize) -> usize {
        self.arm
            .iter()
            .position(|p| p.band == st && p.t == 0.0)
            .expect("arm station ring")
    }

    /// Vertex indices of a column station's full ring, in slot order.
    pub(crate) fn column_station_ring(&self, st: usize) -> Vec<u32> {
        self.column_index[self.column_ring_of(st)]
            .iter()
            .map(|v| v.expect("station rings are complete"))
            .collect()
    }

    pub(crate) fn bottom_pole(&self) -> u32 {
        0
    }

    pub(crate) fn top_pole(&self) -> u32 {
        self.top_pole
    }

    pub(crate) fn arm_station_ring(&self, side: usize, st: usize) -> &[u32] {
        &self.arm_index[side][self.arm_ring_of(st)]
    }

    /// Topmost vertex slot of every arm ring.
    pub(crate) fn arm_top_slot(&self) -> usize {
        self.resolution.hole_half_width() + self.resolution.arm_ring_vertices() / 2
    }

    /// Top vertices of arm rings from station `from` through station `to`.
    pub(crate) fn arm_top_line(&self, side: usize, from: usize, to: usize) -> Vec<u32> {
        let top = self.arm_top_slot();
        (self.arm_ring_of(from)..=self.arm_ring_of(to))
            .map(|r| self.arm_index[side][r][top])
            .collect()
    }

    pub(crate) fn ring_vertices(&self) -> usize {
        self.resolution.ring_vertices
    }

    /// Places every vertex for one set of body dimensions.
    pub fn build(&self, dims: &BodyDimensions) -> Result<TriangleMesh> {
        let r_count = self.resolution.ring_vertices;
        let mut vertices = vec![Vec3::zeros(); self.vertex_count];
        vertices[0] = Vec3::new(0.0, 0.0, 0.0);
        vertices[self.top_pole as usize] = Vec3::new(0.0, 0.0, dims.height);

        let column_angles: Vec<f64> = (0..r_count).map(|j| 2.0 * PI * j as f64 / r_count as f64).collect();
        for (ring, place) in self.column.iter().enumerate() {
            let (b, t) = (place.band, place.t);
            let lerp = |v: &[f64; COLUMN_STATIONS]| v[b] + t * (v[b + 1] - v[b]);
            let z = lerp(&dims.station_z);
            let near = place.nearest_station();
            let perimeter = lerp(&self.reference_perimeter) * dims.station_perimeter[near]
                / self.reference_perimeter[near];
            let aspect = lerp(&COLUMN_ASPECT);
            let scale = perimeter / unit_perimeter(aspect, &column_angles);
            for (j, idx) in self.column_index[ring].iter().enumerate() {
                if let Some(i) = idx {
                    let th = column_angles[j];
                    vertices[*i as usize] = Vec3::new(scale * th.cos(), scale * aspect * th.sin(), z);
                }
            }
        }

        let k_count = self.resolution.arm_ring_vertices();
        let w = self.resolution.hole_half_width() as f64;
        let arm_angles: Vec<f64> = (0..k_count)
            .map(|k| -PI / 2.0 + 2.0 * PI * (k as f64 - w) / k_count as f64)
            .collect();
        let [lo_ring, _, hi_ring] = self.hole_rings;
        let z_arm = 0.5 * (self.column_z(dims, lo_ring) + self.column_z(dims, hi_ring));
        let arm_length = dims.arm_length;
        for side in 0..2 {
            let mirror = if side == 0 { 1.0 } else { -1.0 };
            let x0 = self.hole_loop[side]
                .iter()
                .map(|&i| mirror * vertices[i as usize].x)
                .fold(f64::NEG_INFINITY, f64::max)
                + dims.arm_gap;
            for (ring, place) in self.arm.iter().enumerate() {
                let (b, t) = (place.band, place.t);
                let lerp = |v: &[f64; ARM_STATIONS]| v[b] + t * (v[b + 1] - v[b]);
                let along = x0 + lerp(&ARM_T) * arm_length;
                let aspect = lerp(&ARM_ASPECT);
                let near = place.nearest_station();
                let perimeter = lerp(&self.reference_arm_perimeter) * dims.arm_perimeter[near]
                    / self.reference_arm_perimeter[near];
                let scale = perimeter / unit_perimeter(aspect, &arm_angles);
                for (k, &i) in self.arm_index[side][ring].iter().enumerate() {
                    let ph = arm_angles[k];
                    vertices[i as usize] = Vec3::new(
                        mirror * along,
                        mirror * scale * ph.cos(),
                        z_arm + scale * aspect * ph.sin(),
                    );
                }
            }
            vertices[self.arm_tip[side] as usize] =
                Vec3::new(mirror * (x0 + arm_length), 0.0, z_arm);
        }
        TriangleMesh::with_shared_faces(vertices, Arc::clone(&self.faces))
    }

    fn column_z(&self, dims: &BodyDimensions, ring: usize) -> f64 {
        let RingPlace { band, t } = self.column[ring];
        dims.station_z[band] + t * (dims.station_z[band + 1] - dims.station_z[band])
    }
}

/// Polygon perimeter of the ellipse (cos θ, aspect·sin θ) sampled at the
/// given angles.
fn unit_perimeter(aspect: f64, angles: &[f64]) -> f64 {
    let p = |th: f64| (th.cos(), aspect * th.sin());
    (0..angles.len())
        .map(|i| {
            let (a, b) = (p(angles[i]), p(angles[(i + 1) % angles.len()]));
            ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt()
        })
        .sum()
}

/// Heights and perimeters of every station, derived from body parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyDimensions {
    pub height: f64,
    pub station_z: [f64; COLUMN_STATIONS],
    pub station_perimeter: [f64; COLUMN_STATIONS],
    pub arm_length: f64,
    /// Sideways gap between the shoulder hole and the first arm ring.
    pub arm_gap: f64,
    pub arm_perimeter: [f64; ARM_STATIONS],
}

/// Everything that shapes one synthetic body: schema values (weight and
/// id 7 are ignored; id 17 fixes the ankle height) and the arm gap, which
/// only moves the arms sideways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyParameters {
    pub values: [f64; PARAM_COUNT],
    pub arm_gap: f64,
}

/// Smallest allowed gap (mm) between stations whose order depends on
/// sampled values.
pub(crate) const MIN_GAP_MM: f64 = 50.0;
const MIN_ANKLE_MM: f64 = 10.0;
const MIN_ARM_GAP_MM: f64 = 10.0;

impl BodyDimensions {
    /// Id 14 sets the arm length through the design midhand fraction.
    pub fn from_parameters(body: &BodyParameters) -> Result<Self> {
        let p = &body.values;
        let v = |id: usize| p[id - 1];
        for id in [2, 3, 4, 5, 6, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19] {
            if !(v(id).is_finite() && v(id) > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "body parameter {id} must be positive, got {}",
                    v(id)
                )));
            }
        }
        let crotch = v(8);
        let rise = v(13);
        let waist_z = crotch + rise;
        let upper = v(10) + 80.0 - rise;
        let neck_base = crotch + 80.0 + v(10);
        let chin = neck_base + 70.0;
        let height = v(2);
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("body proportions invalid: {what}")))
            }
        };
        check(rise >= 80.0 + MIN_GAP_MM, "natural waist rise too small")?;
        check(upper >= 2.0 * MIN_GAP_MM, "waist too close to the neck")?;
        check(height - chin >= MIN_GAP_MM, "no room for the head")?;
        let ankle = waist_z - v(17);
        check(
            ankle >= MIN_ANKLE_MM && ankle <= 0.4 * crotch,
            "waist-to-floor length inconsistent with crotch height and rise",
        )?;
        check(body.arm_gap >= MIN_ARM_GAP_MM && body.arm_gap.is_finite(), "arm gap too small")?;

        let station_z = [
            ankle,
            0.55 * crotch,
            0.88 * crotch,
            crotch,
            crotch + 80.0,
            crotch + 80.0 + 0.6 * (rise - 80.0),
            waist_z,
            waist_z + 0.55 * upper,
            waist_z + 0.85 * upper,
            neck_base,
            neck_base + 40.0,
            chin,
            0.5 * (chin + height),
        ];
        let station_perimeter = [
            0.8 * v(18),
            v(18),
            v(19),
            v(12),
            v(6),
            v(5),
            v(11),
            v(4),
            2.0 * v(9),
            1.15 * v(3),
            v(3),
            1.4 * v(3),
            1.55 * v(3),
        ];
        let arm_perimeter = [
            1.15 * v(15),
            v(15),
            0.8 * v(15),
            1.3 * v(16),
            v(16),
            1.45 * v(16),
            1.1 * v(16),
        ];
        Ok(BodyDimensions {
            height,
            station_z,
            station_perimeter,
            arm_length: v(14) / MIDHAND_FRACTION,
            arm_gap: body.arm_gap,
            arm_perimeter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{is_closed_oriented, mesh_volume};

    pub(crate) fn mean_like() -> BodyParameters {
        let mut p = [0.0; PARAM_COUNT];
        for (id, v) in [
            (2, 1650.0),
            (3, 340.0),
            (4, 930.0),
            (5, 850.0),
            (6, 1000.0),
            (8, 760.0),
            (9, 420.0),
            (10, 600.0),
            (11, 780.0),
            (12, 1020.0),
            (13, 280.0),
            (14, 620.0),
            (15, 300.0),
            (16, 160.0),
            (18, 380.0),
            (19, 580.0),
        ] {
            p[id - 1] = v;
        }
        p[16] = 760.0 + 280.0 - 60.0;
        BodyParameters {
            values: p,
            arm_gap: 40.0,
        }
    }

    fn template(resolution: TemplateResolution) -> Template {
        Template::new(resolution, &BodyDimensions::from_parameters(&mean_like()).unwrap()).unwrap()
    }

    #[test]
    fn default_resolution_counts() {
        let t = template(TemplateResolution::default());
        assert_eq!(t.vertex_count(), 1250);
        assert_eq!(t.face_count(), 2496);
        assert_eq!(t.face_regions().len(), 2496);
    }

    #[test]
    fn fine_resolution_is_about_ten_times_larger() {
        let t = template(TemplateResolution::fine());
        assert_eq!(t.face_count(), 2 * t.vertex_count() - 4);
        assert!((12_000..13_000).contains(&t.vertex_count()), "{}", t.vertex_count());
    }

    #[test]
    fn body_is_closed_outward_and_nondegenerate() {
        let t = template(TemplateResolution::default());
        let mesh = t.build(&BodyDimensions::from_parameters(&mean_like()).unwrap()).unwrap();
        assert!(is_closed_oriented(&mesh));
        assert!(mesh_volume(&mesh) > 0.0);
        let min_area = (0..mesh.face_count()).map(|f| mesh.face_area(f)).fold(f64::INFINITY, f64::min);
        assert!(min_area > 1.0, "{min_area}");
        let (lo, hi) = mesh.bounding_box();
        assert_eq!(lo.z, 0.0);
        assert_eq!(hi.z, 1650.0);
    }

    #[test]
    fn every_region_has_facets() {
        let t = template(TemplateResolution::default());
        for r in 0..REGION_NAMES.len() {
            assert!(t.face_regions().iter().any(|&x| x as usize == r), "{}", REGION_NAMES[r]);
        }
    }

    #[test]
    fn implausible_proportions_are_rejected() {
        let mut p = mean_like();
        p.values[12] = 100.0;
        assert!(BodyDimensions::from_parameters(&p).is_err());
        let mut p = mean_like();
        p.values[1] = 1500.0;
        assert!(BodyDimensions::from_parameters(&p).is_err());
        let mut p = mean_like();
        p.values[16] = 1100.0;
        assert!(BodyDimensions::from_parameters(&p).is_err());
        let mut p = mean_like();
        p.arm_gap = 0.0;
        assert!(BodyDimensions::from_parameters(&p).is_err());
    }
}
