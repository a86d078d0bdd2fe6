//! Vehicles, topologies and the planar geometry built on them.
//!
//! All vehicles share one height plane. Target vehicles are indexed
//! `0..L` with communication targets first, then sensing targets; that
//! order is used by node features, labels and the GNN output.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watt, AntennaPattern};
use crate::error::{Error, Result};

/// Minimum separation between any two vehicles of a topology, m.
pub const MIN_SPACING_M: f64 = 1.0;

/// Slack on the main-lobe boundary so a probe placed exactly on the beam
/// edge classifies as main lobe despite rounding.
const LOBE_EDGE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ServiceProvider,
    CommTarget,
    SenseTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn sub(self, other: Point) -> (f64, f64) {
        (self.x - other.x, self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    pub role: Role,
    /// Position in the region, m.
    pub position: Point,
    /// Heading, rad in [0, 2π).
    pub heading: f64,
    /// Transmit power, W. Only meaningful for service providers.
    pub tx_power: f64,
    pub antenna: AntennaPattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Extent along x, m.
    pub width: f64,
    /// Extent along y, m.
    pub height: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self {
            width: 100.0,
            height: 100.0,
        }
    }
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

/// Requested number of vehicles per role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VehicleCounts {
    pub spv: usize,
    pub comm: usize,
    pub sense: usize,
}

impl VehicleCounts {
    pub const fn new(spv: usize, comm: usize, sense: usize) -> Self {
        Self { spv, comm, sense }
    }

    pub fn targets(&self) -> usize {
        self.comm + self.sense
    }

    pub fn total(&self) -> usize {
        self.spv + self.targets()
    }
}

impl Default for VehicleCounts {
    fn default() -> Self {
        Self::new(5, 2, 2)
    }
}

/// Radar-side parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    /// Radar cross section σ, m².
    pub rcs: f64,
    /// Minimum sensing SINR γ_min, linear.
    pub min_sensing_sinr: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            rcs: 1.0,
            min_sensing_sinr: db_to_linear(3.0),
        }
    }
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        if self.rcs > 0.0 && self.min_sensing_sinr > 0.0 && !self.rcs.is_nan() {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid sensing parameters: {self:?}")))
        }
    }
}

/// One decision instance: a static snapshot of vehicles in a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology", into = "RawTopology")]
pub struct Topology {
    vehicles: Vec<Vehicle>,
    region: Region,
    spvs: Vec<usize>,
    targets: Vec<usize>,
    comm_count: usize,
}

#[derive(Serialize, Deserialize)]
struct RawTopology {
    region: Region,
    vehicles: Vec<Vehicle>,
}

impl TryFrom<RawTopology> for Topology {
    type Error = Error;

    fn try_from(raw: RawTopology) -> Result<Self> {
        Topology::new(raw.vehicles, raw.region)
    }
}

impl From<Topology> for RawTopology {
    fn from(t: Topology) -> Self {
        RawTopology {
            region: t.region,
            vehicles: t.vehicles,
        }
    }
}

impl Topology {
    pub fn new(vehicles: Vec<Vehicle>, region: Region) -> Result<Self> {
        if !(region.width > 0.0 && region.height > 0.0) {
            return Err(Error::Domain(format!("region must have positive extent: {region:?}")));
        }
        let mut ids: Vec<u32> = vehicles.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("duplicate vehicle id".into()));
        }
        for v in &vehicles {
            if !region.contains(v.position) {
                return Err(Error::Domain(format!(
                    "vehicle {} at ({}, {}) outside region",
                    v.id, v.position.x, v.position.y
                )));
            }
            if !(0.0..TAU).contains(&v.heading) {
                return Err(Error::Domain(format!(
                    "vehicle {} heading {} not in [0, 2π)",
                    v.id, v.heading
                )));
            }
            v.antenna.validate()?;
            if v.role == Role::ServiceProvider && !(v.tx_power > 0.0 && v.tx_power.is_finite()) {
                return Err(Error::Domain(format!("SPV {} needs positive transmit power", v.id)));
            }
        }
        for (i, a) in vehicles.iter().enumerate() {
            for b in &vehicles[i + 1..] {
                let d = a.position.distance(b.position);
                if d < MIN_SPACING_M {
                    return Err(Error::Domain(format!(
                        "vehicles {} and {} only {d:.3} m apart (minimum {MIN_SPACING_M} m)",
                        a.id, b.id
                    )));
                }
            }
        }

        let by_role = |role: Role| -> Vec<usize> {
            vehicles
                .iter()
                .enumerate()
                .filter(|(_, v)| v.role == role)
                .map(|(i, _)| i)
                .collect()
        };
        let spvs = by_role(Role::ServiceProvider);
        let comm = by_role(Role::CommTarget);
        let sense = by_role(Role::SenseTarget);
        if spvs.is_empty() {
            return Err(Error::Domain("topology needs at least one SPV".into()));
        }
        if comm.is_empty() && sense.is_empty() {
            return Err(Error::Domain("topology needs at least one target vehicle".into()));
        }
        let comm_count = comm.len();
        let mut targets = comm;
        targets.extend(sense);
        Ok(Self {
            vehicles,
            region,
            spvs,
            targets,
            comm_count,
        })
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn vehicle(&self, index: usize) -> &Vehicle {
        &self.vehicles[index]
    }

    /// Vehicle indices of the service providers, in vehicle order.
    pub fn spvs(&self) -> &[usize] {
        &self.spvs
    }

    /// Vehicle indices of all targets: communication targets, then sensing targets.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn comm_targets(&self) -> &[usize] {
        &self.targets[..self.comm_count]
    }

    pub fn sense_targets(&self) -> &[usize] {
        &self.targets[self.comm_count..]
    }

    pub fn counts(&self) -> VehicleCounts {
        VehicleCounts::new(self.spvs.len(), self.comm_count, self.targets.len() - self.comm_count)
    }

    /// Total number of targets L = |ℳ| + |𝒩|.
    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.vehicles[a].position.distance(self.vehicles[b].position)
    }

    /// Position of vehicle `v` in the target ordering, if it is a target.
    pub fn target_slot(&self, v: usize) -> Option<usize> {
        self.targets.iter().position(|&t| t == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lobe {
    Main,
    Side,
}

/// Classifies `probe` as seen from `origin` with a beam of horizontal width
/// `beamwidth` pointed at `boresight`. The main-lobe cone is closed.
pub fn lobe_class_at(origin: Point, beamwidth: f64, boresight: Point, probe: Point) -> Result<Lobe> {
    let (bx, by) = boresight.sub(origin);
    let (px, py) = probe.sub(origin);
    if bx == 0.0 && by == 0.0 {
        return Err(Error::Domain("boresight target coincides with the transmitter".into()));
    }
    if px == 0.0 && py == 0.0 {
        return Err(Error::Domain("probe coincides with the transmitter".into()));
    }
    let angle = (bx * py - by * px).atan2(bx * px + by * py).abs();
    if angle <= beamwidth / 2.0 + LOBE_EDGE_TOLERANCE {
        Ok(Lobe::Main)
    } else {
        Ok(Lobe::Side)
    }
}

/// Which lobe of `tx`'s antenna, pointed at `boresight_target`, covers `probe`.
pub fn lobe_class(tx: &Vehicle, boresight_target: Point, probe: Point) -> Result<Lobe> {
    lobe_class_at(tx.position, tx.antenna.horizontal_beamwidth, boresight_target, probe)
}

/// Number of SPVs (other than the endpoints) sitting on the line-of-sight
/// segment between vehicles `v` and `target`: perpendicular distance below
/// `blocker_radius` and projection strictly inside the segment.
pub fn los_blocker_count(topology: &Topology, v: usize, target: usize, blocker_radius: f64) -> usize {
    let a = topology.vehicle(v).position;
    let b = topology.vehicle(target).position;
    let (dx, dy) = b.sub(a);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return 0;
    }
    topology
        .spvs()
        .iter()
        .filter(|&&s| s != v && s != target)
        .filter(|&&s| {
            let p = topology.vehicle(s).position;
            let (px, py) = p.sub(a);
            let t = (px * dx + py * dy) / len2;
            if !(t > 0.0 && t < 1.0) {
                return false;
            }
            let perp = (dx * py - dy * px).abs() / len2.sqrt();
            perp < blocker_radius
        })
        .count()
}

/// Everything needed to draw random topologies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub region: Region,
    pub counts: VehicleCounts,
    /// Minimum pairwise spacing, m (never below [`MIN_SPACING_M`]).
    pub spacing: f64,
    /// SPV transmit power, W.
    pub tx_power: f64,
    pub antenna: AntennaPattern,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            region: Region::default(),
            counts: VehicleCounts::default(),
            spacing: MIN_SPACING_M,
            tx_power: dbm_to_watt(40.0),
            antenna: AntennaPattern::default(),
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

fn role_sequence(counts: VehicleCounts) -> impl Iterator<Item = Role> + Clone {
    std::iter::repeat_n(Role::ServiceProvider, counts.spv)
        .chain(std::iter::repeat_n(Role::CommTarget, counts.comm))
        .chain(std::iter::repeat_n(Role::SenseTarget, counts.sense))
}

/// Uniform random placement with rejection on spacing. Vehicle ids follow
/// the role order: SPVs, communication targets, sensing targets.
pub fn generate_topology(seed: u64, spec: &GeneratorSpec) -> Result<Topology> {
    let spacing = spec.spacing.max(MIN_SPACING_M);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vehicles: Vec<Vehicle> = Vec::with_capacity(spec.counts.total());
    for (id, role) in role_sequence(spec.counts).enumerate() {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p = Point::new(
                rng.gen_range(0.0..=spec.region.width),
                rng.gen_range(0.0..=spec.region.height),
            );
            if vehicles.iter().all(|v| v.position.distance(p) >= spacing) {
                placed = Some(p);
                break;
            }
        }
        let position = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place vehicle {id} with {spacing} m spacing after {PLACEMENT_ATTEMPTS} attempts"
            ))
        })?;
        vehicles.push(Vehicle {
            id: id as u32,
            role,
            position,
            heading: rng.gen_range(0.0..TAU),
            tx_power: if role == Role::ServiceProvider {
                spec.tx_power
            } else {
                0.0
            },
            antenna: spec.antenna,
        });
    }
    Topology::new(vehicles, spec.region)
}

/// How GPS traces map onto topologies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsMapping {
    /// South-west corner of the region (lat, lon in degrees). When absent the
    /// per-bucket minimum latitude and longitude are used.
    pub origin: Option<(f64, f64)>,
    pub region: Region,
    /// Roles are handed out cyclically in record order: `spv` providers,
    /// then `comm` and `sense` targets, then repeat.
    pub counts: VehicleCounts,
    pub bucket_seconds: f64,
    pub tx_power: f64,
    pub antenna: AntennaPattern,
}

impl Default for GpsMapping {
    fn default() -> Self {
        Self {
            origin: None,
            region: Region::default(),
            counts: VehicleCounts::default(),
            bucket_seconds: 1.0,
            tx_power: dbm_to_watt(40.0),
            antenna: AntennaPattern::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub topologies: Vec<Topology>,
    pub warnings: Vec<String>,
}

const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone)]
struct GpsRecord {
    id: String,
    lat: f64,
    lon: f64,
}

fn parse_timestamp(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<f64>() {
        return secs.is_finite().then_some(secs);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
    }
    chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S")
        .ok()
        .map(|dt| dt.and_utc().timestamp() as f64)
}

/// Reads a `id,timestamp,lat,lon` CSV and turns every timestamp bucket
/// into a topology.
pub fn ingest_gps_csv(path: &Path, mapping: &GpsMapping) -> Result<IngestOutcome> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_gps_str(&text, mapping)
}

pub fn ingest_gps_str(text: &str, mapping: &GpsMapping) -> Result<IngestOutcome> {
    let mut outcome = IngestOutcome::default();
    if text.trim().is_empty() {
        return Ok(outcome);
    }
    if mapping.counts.total() == 0 {
        return Err(Error::Config("GPS role counts are all zero".into()));
    }
    if !(mapping.bucket_seconds > 0.0) {
        return Err(Error::Config("bucket_seconds must be positive".into()));
    }

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Ingest(format!("missing column `{name}`")))
    };
    let (c_id, c_ts, c_lat, c_lon) = (column("id")?, column("timestamp")?, column("lat")?, column("lon")?);

    let mut buckets: BTreeMap<i64, Vec<GpsRecord>> = BTreeMap::new();
    let (mut rows, mut malformed) = (0usize, 0usize);
    for (line, record) in reader.records().enumerate() {
        rows += 1;
        let row = line + 2;
        let parsed = record.ok().and_then(|r| {
            let id = r.get(c_id)?.to_string();
            let ts = parse_timestamp(r.get(c_ts)?)?;
            let lat: f64 = r.get(c_lat)?.parse().ok()?;
            let lon: f64 = r.get(c_lon)?.parse().ok()?;
            let valid = !id.is_empty() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon);
            valid.then_some((ts, GpsRecord { id, lat, lon }))
        });
        match parsed {
            Some((ts, rec)) => {
                let key = (ts / mapping.bucket_seconds).floor() as i64;
                buckets.entry(key).or_default().push(rec);
            }
            None => {
                malformed += 1;
                outcome.warnings.push(format!("row {row}: malformed record skipped"));
            }
        }
    }
    if rows > 0 && malformed * 2 > rows {
        return Err(Error::Ingest(format!("{malformed} of {rows} rows malformed")));
    }

    let roles: Vec<Role> = role_sequence(mapping.counts).collect();
    for (key, records) in buckets {
        // Keep the last record per id, at its own position in record order.
        let mut latest: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if latest.insert(r.id.as_str(), i).is_some() {
                outcome
                    .warnings
                    .push(format!("bucket {key}: duplicate id {} (keeping last record)", r.id));
            }
        }
        let kept: Vec<&GpsRecord> = records
            .iter()
            .enumerate()
            .filter(|(i, r)| latest[r.id.as_str()] == *i)
            .map(|(_, r)| r)
            .collect();

        let (lat0, lon0) = mapping.origin.unwrap_or_else(|| {
            kept.iter().fold((f64::INFINITY, f64::INFINITY), |(la, lo), r| {
                (la.min(r.lat), lo.min(r.lon))
            })
        });
        let cos_lat = lat0.to_radians().cos();

        let mut vehicles: Vec<Vehicle> = Vec::new();
        for r in kept {
            let p = Point::new(
                EARTH_RADIUS_M * (r.lon - lon0).to_radians() * cos_lat,
                EARTH_RADIUS_M * (r.lat - lat0).to_radians(),
            );
            if !mapping.region.contains(p) {
                continue;
            }
            if vehicles.iter().any(|v| v.position.distance(p) < MIN_SPACING_M) {
                outcome.warnings.push(format!(
                    "bucket {key}: vehicle {} closer than {MIN_SPACING_M} m to another, dropped",
                    r.id
                ));
                continue;
            }
            let role = roles[vehicles.len() % roles.len()];
            vehicles.push(Vehicle {
                id: vehicles.len() as u32,
                role,
                position: p,
                heading: 0.0,
                tx_power: if role == Role::ServiceProvider {
                    mapping.tx_power
                } else {
                    0.0
                },
                antenna: mapping.antenna,
            });
        }
        match Topology::new(vehicles, mapping.region) {
            Ok(t) => outcome.topologies.push(t),
            Err(e) => outcome.warnings.push(format!("bucket {key}: skipped ({e})")),
        }
    }
    Ok(outcome)
}

/// Rotates every position by `angle` about `pivot` then translates by `shift`.
/// Used for invariance checks.
pub fn rigid_transform(p: Point, pivot: Point, angle: f64, shift: (f64, f64)) -> Point {
    let (s, c) = angle.sin_cos();
    let (dx, dy) = p.sub(pivot);
    Point::new(pivot.x + c * dx - s * dy + shift.0, pivot.y + s * dx + c * dy + shift.1)
}
