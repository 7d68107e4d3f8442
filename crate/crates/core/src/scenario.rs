//! Synthetic multi-receiver GNSS scenarios.
//!
//! Each station observes one carrier-phase and one code range per visible
//! satellite. Local unknowns are the position increment, the receiver clock
//! and one float ambiguity per visible satellite; the global unknown is the
//! vector of satellite biases with satellite 0 pinned to zero.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix, Vector};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const EARTH_ROTATION_RATE: f64 = 7.292_115e-5;
pub const EARTH_GM: f64 = 3.986_004_418e14;
/// Carrier wavelength used for the ambiguity columns (m).
pub const WAVELENGTH: f64 = 0.19;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

pub fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64, height: f64) -> [f64; 3] {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let (sl, cl) = lat_deg.to_radians().sin_cos();
    let (so, co) = lon_deg.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - e2 * sl * sl).sqrt();
    [
        (n + height) * cl * co,
        (n + height) * cl * so,
        (n * (1.0 - e2) + height) * sl,
    ]
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: usize,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
    pub ecef: [f64; 3],
}

impl Station {
    pub fn new(id: usize, lat_deg: f64, lon_deg: f64, height: f64) -> Result<Self> {
        if !(lat_deg.abs() <= 90.0) {
            return Err(Error::Config(format!("station {id}: latitude {lat_deg} out of range")));
        }
        if !(lon_deg.abs() <= 180.0) {
            return Err(Error::Config(format!("station {id}: longitude {lon_deg} out of range")));
        }
        if !height.is_finite() {
            return Err(Error::Config(format!("station {id}: non-finite height")));
        }
        Ok(Self {
            id,
            lat_deg,
            lon_deg,
            height,
            ecef: geodetic_to_ecef(lat_deg, lon_deg, height),
        })
    }

    /// Unit normal of the ellipsoid at the station.
    fn up(&self) -> [f64; 3] {
        let (sl, cl) = self.lat_deg.to_radians().sin_cos();
        let (so, co) = self.lon_deg.to_radians().sin_cos();
        [cl * co, cl * so, sl]
    }
}

/// Parses a station CSV with columns `id,lat,lon,height`. A first line
/// starting with `id` is treated as a header; `#` starts a comment.
pub fn parse_station_csv(text: &str, origin: &str) -> Result<Vec<Station>> {
    let mut stations = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (stations.is_empty() && line.to_ascii_lowercase().starts_with("id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(origin, line_no, "row", format!("expected 4 fields, got {}", fields.len())));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::parse(origin, line_no, "id", e.to_string()))?;
        let num = |idx: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[idx]
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::parse(origin, line_no, name, e.to_string()))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, line_no, name, "not finite"));
            }
            Ok(v)
        };
        let lat = num(1, "lat")?;
        let lon = num(2, "lon")?;
        let height = num(3, "height")?;
        if lat.abs() > 90.0 {
            return Err(Error::parse(origin, line_no, "lat", format!("{lat} outside [-90, 90]")));
        }
        if lon.abs() > 180.0 {
            return Err(Error::parse(origin, line_no, "lon", format!("{lon} outside [-180, 180]")));
        }
        stations.push(Station::new(id, lat, lon, height)?);
    }
    Ok(stations)
}

pub fn load_station_coordinates(path: &Path) -> Result<Vec<Station>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_station_csv(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Satellite {
    pub id: usize,
    pub radius: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    /// Argument of latitude at t = 0.
    pub phase_deg: f64,
    /// Range-equivalent bias (m); zero for the reference satellite.
    pub bias: f64,
}

impl Satellite {
    /// Earth-fixed position at time `t` seconds, with the inertial and
    /// Earth-fixed frames aligned at t = 0.
    pub fn position(&self, t: f64) -> [f64; 3] {
        let n = (EARTH_GM / self.radius.powi(3)).sqrt();
        let u = self.phase_deg.to_radians() + n * t;
        let (si, ci) = self.inclination_deg.to_radians().sin_cos();
        let (so, co) = self.raan_deg.to_radians().sin_cos();
        let (su, cu) = u.sin_cos();
        let inertial = [
            self.radius * (co * cu - so * su * ci),
            self.radius * (so * cu + co * su * ci),
            self.radius * su * si,
        ];
        let (st, ct) = (EARTH_ROTATION_RATE * t).sin_cos();
        [
            ct * inertial[0] + st * inertial[1],
            -st * inertial[0] + ct * inertial[1],
            inertial[2],
        ]
    }
}

/// Column layout of a station's local unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLayout {
    /// Columns 0..3 hold the position increment unless the station's
    /// coordinates are known.
    pub position: bool,
    pub clock: usize,
    /// Satellite ids owning the ambiguity columns that follow the clock.
    pub ambiguities: Vec<usize>,
}

impl LocalLayout {
    pub fn position_range(&self) -> Option<std::ops::Range<usize>> {
        self.position.then_some(0..3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSystem {
    pub station: usize,
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub y: Vector,
    pub x_true: Vector,
    pub layout: LocalLayout,
}

impl LocalSystem {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn local_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn global_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.a.nrows();
        if self.b.nrows() != m || self.q.nrows() != m || self.q.ncols() != m || self.y.len() != m {
            return Err(Error::Dimension(format!("station {}: inconsistent row counts", self.station)));
        }
        if self.x_true.len() != self.a.ncols() {
            return Err(Error::Dimension(format!("station {}: truth length mismatch", self.station)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochGeometry {
    pub index: usize,
    pub time: f64,
    /// Visible satellite ids per station, ascending.
    pub visible: Vec<Vec<usize>>,
    /// Line-of-sight unit vectors (station minus satellite), parallel to `visible`.
    pub line_of_sight: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub geometry: EpochGeometry,
    pub systems: Vec<LocalSystem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub stations: usize,
    pub satellites: usize,
    pub epochs: usize,
    pub elevation_mask_deg: f64,
    pub sigma_phase: f64,
    pub sigma_code: f64,
    pub seed: u64,
    pub epoch_interval_s: f64,
    pub min_visible: usize,
    pub max_attempts: usize,
    pub region_lat_deg: f64,
    pub region_lon_deg: f64,
    pub region_radius_deg: f64,
    /// Satellite sub-points at t = 0 are drawn within this angle of the region center.
    pub satellite_spread_deg: f64,
    pub orbit_radius: f64,
    pub inclination_deg: f64,
    pub bias_sigma: f64,
    pub position_sigma: f64,
    pub clock_sigma: f64,
    pub ambiguity_sigma: f64,
    pub force_full_visibility: bool,
    pub require_identifiable: bool,
    /// Stations 0..k have known coordinates and estimate no position increment.
    pub known_position_stations: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            stations: 20,
            satellites: 12,
            epochs: 3,
            elevation_mask_deg: 10.0,
            sigma_phase: 0.003,
            sigma_code: 0.3,
            seed: 0,
            epoch_interval_s: 30.0,
            min_visible: 5,
            max_attempts: 100,
            region_lat_deg: 45.0,
            region_lon_deg: 10.0,
            region_radius_deg: 30.0,
            satellite_spread_deg: 45.0,
            orbit_radius: 26_560_000.0,
            inclination_deg: 55.0,
            bias_sigma: 1.0,
            position_sigma: 0.5,
            clock_sigma: 1.0,
            ambiguity_sigma: 10.0,
            force_full_visibility: false,
            require_identifiable: true,
            known_position_stations: 2,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.satellites < 2 {
            return bad("need at least 2 satellites (one is the reference)".into());
        }
        if self.epochs == 0 {
            return bad("need at least one epoch".into());
        }
        if self.min_visible < 4 {
            return bad("min_visible below 4 leaves position and clock unresolved".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        if !(self.sigma_phase >= 0.0 && self.sigma_code >= 0.0) {
            return bad("noise sigmas must be nonnegative".into());
        }
        if !(self.orbit_radius > WGS84_A) {
            return bad("orbit radius must exceed the Earth radius".into());
        }
        if !(0.0..90.0).contains(&self.elevation_mask_deg) {
            return bad(format!("elevation mask {} outside [0, 90)", self.elevation_mask_deg));
        }
        if !(self.inclination_deg > 0.0 && self.inclination_deg <= 90.0) {
            return bad("inclination must be in (0, 90]".into());
        }
        Ok(())
    }

    /// Variance used for zero-noise diagonals so Q stays positive definite.
    fn variances(&self) -> (f64, f64) {
        let floor = |s: f64| if s > 0.0 { s * s } else { 1.0 };
        (floor(self.sigma_phase), floor(self.sigma_code))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub config: ScenarioConfig,
    pub stations: Vec<Station>,
    pub satellites: Vec<Satellite>,
    pub epochs: Vec<Epoch>,
    pub z_true: Vector,
}

impl Scenario {
    pub fn global_dim(&self) -> usize {
        self.z_true.len()
    }

    pub fn epoch(&self, index: usize) -> Result<&Epoch> {
        self.epochs
            .get(index)
            .ok_or_else(|| Error::Config(format!("epoch {index} out of range ({} epochs)", self.epochs.len())))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::parse(origin, e.line(), "scenario", e.to_string()))?;
        if s.version != SCENARIO_FORMAT_VERSION {
            return Err(Error::parse(origin, 0, "version", format!("unsupported version {}", s.version)));
        }
        for epoch in &s.epochs {
            for sys in &epoch.systems {
                sys.validate()?;
                if sys.global_dim() != s.global_dim() {
                    return Err(Error::Dimension(format!("station {}: B has wrong width", sys.station)));
                }
            }
        }
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// Point at angular distance `dist` (rad) and azimuth `az` (rad) from (lat, lon) in degrees.
fn destination(lat_deg: f64, lon_deg: f64, dist: f64, az: f64) -> (f64, f64) {
    let (p1, l1) = (lat_deg.to_radians(), lon_deg.to_radians());
    let p2 = (p1.sin() * dist.cos() + p1.cos() * dist.sin() * az.cos()).asin();
    let l2 = l1 + (az.sin() * dist.sin() * p1.cos()).atan2(dist.cos() - p1.sin() * p2.sin());
    let lon = (l2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    (p2.to_degrees(), lon)
}

fn sample_cap<R: Rng>(rng: &mut R, lat: f64, lon: f64, radius_deg: f64) -> (f64, f64) {
    let cos_max = radius_deg.to_radians().cos();
    let c = cos_max + (1.0 - cos_max) * rng.random::<f64>();
    let az = 2.0 * PI * rng.random::<f64>();
    destination(lat, lon, c.clamp(-1.0, 1.0).acos(), az)
}

/// Station coordinates drawn from the configured region with a generator
/// seeded by `config.seed`, independent of the scenario's own stream.
pub fn draw_stations(config: &ScenarioConfig) -> Result<Vec<Station>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ STATION_STREAM);
    random_stations(config, &mut rng)
}

const STATION_STREAM: u64 = 0x5354_4154;

fn random_stations<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> Result<Vec<Station>> {
    (0..config.stations)
        .map(|id| {
            let (lat, lon) = sample_cap(rng, config.region_lat_deg, config.region_lon_deg, config.region_radius_deg);
            let h = 500.0 * rng.random::<f64>();
            Station::new(id, lat, lon, h)
        })
        .collect()
}

fn random_satellites<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> Vec<Satellite> {
    let inc = config.inclination_deg;
    let (si, ci) = inc.to_radians().sin_cos();
    let lat_limit = inc - 1.0;
    (0..config.satellites)
        .map(|id| {
            let (lat, lon) = loop {
                let (lat, lon) =
                    sample_cap(rng, config.region_lat_deg, config.region_lon_deg, config.satellite_spread_deg);
                if lat.abs() < lat_limit {
                    break (lat, lon);
                }
            };
            let mut u = (lat.to_radians().sin() / si).clamp(-1.0, 1.0).asin();
            if rng.random::<bool>() {
                u = PI - u;
            }
            let raan = lon.to_radians() - (u.sin() * ci).atan2(u.cos());
            let bias = if id == 0 {
                0.0
            } else {
                config.bias_sigma * normal(rng)
            };
            Satellite {
                id,
                radius: config.orbit_radius,
                inclination_deg: inc,
                raan_deg: raan.to_degrees().rem_euclid(360.0),
                phase_deg: u.to_degrees().rem_euclid(360.0),
                bias,
            }
        })
        .collect()
}

fn epoch_geometry(
    config: &ScenarioConfig,
    stations: &[Station],
    satellites: &[Satellite],
    index: usize,
) -> std::result::Result<EpochGeometry, (usize, String)> {
    let time = index as f64 * config.epoch_interval_s;
    let positions: Vec<[f64; 3]> = satellites.iter().map(|s| s.position(time)).collect();
    let sin_mask = config.elevation_mask_deg.to_radians().sin();
    let mut visible = Vec::with_capacity(stations.len());
    let mut los = Vec::with_capacity(stations.len());
    for (r, st) in stations.iter().enumerate() {
        let up = st.up();
        let mut vis = Vec::new();
        let mut dirs = Vec::new();
        for (s, sp) in positions.iter().enumerate() {
            let d = sub3(st.ecef, *sp);
            let rho = norm3(d);
            let g = [d[0] / rho, d[1] / rho, d[2] / rho];
            let sin_el = -(g[0] * up[0] + g[1] * up[1] + g[2] * up[2]);
            if config.force_full_visibility || sin_el >= sin_mask {
                vis.push(s);
                dirs.push(g);
            }
        }
        if vis.len() < config.min_visible {
            return Err((r, format!("{} visible satellites at epoch {index}, need {}", vis.len(), config.min_visible)));
        }
        visible.push(vis);
        los.push(dirs);
    }
    Ok(EpochGeometry {
        index,
        time,
        visible,
        line_of_sight: los,
    })
}

/// Noise-free design for one station at one epoch.
pub fn build_design(
    visible: &[usize],
    line_of_sight: &[[f64; 3]],
    satellites: usize,
    sigma_phase_sq: f64,
    sigma_code_sq: f64,
    estimate_position: bool,
) -> (Matrix, Matrix, Matrix, LocalLayout) {
    let nv = visible.len();
    let m = 2 * nv;
    let clock = if estimate_position { 3 } else { 0 };
    let n = clock + 1 + nv;
    let d = satellites - 1;
    let mut a = Matrix::zeros(m, n);
    let mut b = Matrix::zeros(m, d);
    let mut q = Matrix::zeros(m, m);
    for (j, (&s, g)) in visible.iter().zip(line_of_sight).enumerate() {
        for (row, var) in [(j, sigma_phase_sq), (nv + j, sigma_code_sq)] {
            if estimate_position {
                for c in 0..3 {
                    a[(row, c)] = g[c];
                }
            }
            a[(row, clock)] = 1.0;
            if s > 0 {
                b[(row, s - 1)] = 1.0;
            }
            q[(row, row)] = var;
        }
        a[(j, clock + 1 + j)] = WAVELENGTH;
    }
    (
        a,
        b,
        q,
        LocalLayout {
            position: estimate_position,
            clock,
            ambiguities: visible.to_vec(),
        },
    )
}

/// Draws one noise vector with covariance `q` (diagonal).
pub fn draw_noise<R: Rng>(q: &Matrix, rng: &mut R) -> Vector {
    Vector::from_fn(q.nrows(), |i, _| {
        let z: f64 = StandardNormal.sample(rng);
        q[(i, i)].sqrt() * z
    })
}

/// Smallest eigenvalue of the aggregate reduced Hessian of an epoch, used as
/// an identifiability test for the global state.
pub fn identifiability_margin(systems: &[LocalSystem]) -> Result<f64> {
    let d = systems.first().map_or(0, LocalSystem::global_dim);
    let mut total = Matrix::zeros(d, d);
    for sys in systems {
        let obj = crate::local::ReducedObjective::new(sys)?;
        total += obj.hessian();
    }
    Ok(symmetric_eigenvalues(&total).first().copied().unwrap_or(0.0) / systems.len().max(1) as f64)
}

/// Relative threshold on the identifiability margin.
const IDENTIFIABLE_TOL: f64 = 1e-10;

pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    generate_with_stations(config, None)
}

/// Generates a scenario; when `stations` is given their coordinates replace
/// the random draw and `config.stations` is ignored.
pub fn generate_with_stations(config: &ScenarioConfig, stations: Option<Vec<Station>>) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fixed = stations.is_some();
    let mut stations = match stations {
        Some(s) => s,
        None => random_stations(config, &mut rng)?,
    };
    if stations.is_empty() {
        return Err(Error::Config("scenario needs at least one station".into()));
    }
    let mut config = config.clone();
    config.stations = stations.len();
    let (var_phase, var_code) = config.variances();

    let mut last_failure = (0, String::new());
    for attempt in 0..config.max_attempts {
        if attempt > 0 && !fixed {
            stations = random_stations(&config, &mut rng)?;
        }
        let satellites = random_satellites(&config, &mut rng);
        let geometries: std::result::Result<Vec<_>, _> = (0..config.epochs)
            .map(|i| epoch_geometry(&config, &stations, &satellites, i))
            .collect();
        let geometries = match geometries {
            Ok(g) => g,
            Err(fail) => {
                last_failure = fail;
                continue;
            }
        };

        let z_true = Vector::from_iterator(config.satellites - 1, satellites[1..].iter().map(|s| s.bias));
        let positions: Vec<[f64; 3]> = (0..stations.len())
            .map(|_| std::array::from_fn(|_| config.position_sigma * normal(&mut rng)))
            .collect();
        let ambiguities: Vec<Vec<f64>> = (0..stations.len())
            .map(|_| {
                (0..config.satellites)
                    .map(|_| config.ambiguity_sigma * normal(&mut rng))
                    .collect()
            })
            .collect();

        let mut epochs = Vec::with_capacity(config.epochs);
        let mut failed = None;
        for geometry in geometries {
            let mut systems = Vec::with_capacity(stations.len());
            for r in 0..stations.len() {
                let (a, b, q, layout) = build_design(
                    &geometry.visible[r],
                    &geometry.line_of_sight[r],
                    config.satellites,
                    var_phase,
                    var_code,
                    r >= config.known_position_stations,
                );
                let clock = config.clock_sigma * normal(&mut rng);
                let mut x_true = Vector::zeros(a.ncols());
                if layout.position {
                    for c in 0..3 {
                        x_true[c] = positions[r][c];
                    }
                }
                x_true[layout.clock] = clock;
                for (j, &s) in geometry.visible[r].iter().enumerate() {
                    x_true[layout.clock + 1 + j] = ambiguities[r][s];
                }
                let mut y = &a * &x_true + &b * &z_true;
                let nv = geometry.visible[r].len();
                for j in 0..nv {
                    let e_phase: f64 = StandardNormal.sample(&mut rng);
                    let e_code: f64 = StandardNormal.sample(&mut rng);
                    y[j] += config.sigma_phase * e_phase;
                    y[nv + j] += config.sigma_code * e_code;
                }
                let system = LocalSystem {
                    station: r,
                    a,
                    b,
                    q,
                    y,
                    x_true,
                    layout,
                };
                if let Err(e) = crate::local::ReducedObjective::new(&system) {
                    failed = Some((r, e.to_string()));
                    break;
                }
                systems.push(system);
            }
            if failed.is_some() {
                break;
            }
            if config.require_identifiable {
                let margin = identifiability_margin(&systems)?;
                let scale = systems
                    .iter()
                    .map(|s| 1.0 / s.q.diagonal().min())
                    .fold(0.0, f64::max);
                if !(margin > IDENTIFIABLE_TOL * scale) {
                    failed = Some((0, format!("global state not identifiable at epoch {} (margin {margin:e})", geometry.index)));
                    break;
                }
            }
            epochs.push(Epoch { geometry, systems });
        }
        if let Some(f) = failed {
            last_failure = f;
            continue;
        }
        return Ok(Scenario {
            version: SCENARIO_FORMAT_VERSION,
            config,
            stations,
            satellites,
            epochs,
            z_true,
        });
    }
    Err(Error::Geometry {
        station: last_failure.0,
        attempts: config.max_attempts,
        reason: last_failure.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central::solve_central;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    /// Bowring-style fixed-point inverse used only as a test oracle.
    fn ecef_to_geodetic(p: [f64; 3]) -> (f64, f64, f64) {
        let e2 = WGS84_F * (2.0 - WGS84_F);
        let lon = p[1].atan2(p[0]);
        let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let mut lat = p[2].atan2(rho * (1.0 - e2));
        let mut h = 0.0;
        for _ in 0..50 {
            let n = WGS84_A / (1.0 - e2 * lat.sin().powi(2)).sqrt();
            h = if lat.cos().abs() > 1e-12 {
                rho / lat.cos() - n
            } else {
                p[2].abs() - n * (1.0 - e2)
            };
            lat = p[2].atan2(rho * (1.0 - e2 * n / (n + h)));
        }
        (lat.to_degrees(), lon.to_degrees(), h)
    }

    #[test]
    fn ecef_reference_points() {
        let p = geodetic_to_ecef(0.0, 0.0, 0.0);
        assert_eq!(p, [WGS84_A, 0.0, 0.0]);
        let p = geodetic_to_ecef(90.0, 0.0, 0.0);
        let b = WGS84_A * (1.0 - WGS84_F);
        assert_abs_diff_eq!(p[2], b, epsilon = 1e-6);
        assert_abs_diff_eq!(p[2], 6_356_752.314_245, epsilon = 1e-5);
        assert!(p[0].abs() < 1e-6 && p[1] == 0.0);
    }

    #[test]
    fn ecef_roundtrip_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let lat = rng.random_range(-89.9..89.9);
            let lon = rng.random_range(-180.0..180.0);
            let h = rng.random_range(-100.0..10_000.0);
            let p = geodetic_to_ecef(lat, lon, h);
            let (la, lo, hh) = ecef_to_geodetic(p);
            let q = geodetic_to_ecef(la, lo, hh);
            worst = worst.max(norm3(sub3(p, q)));
            assert!((la - lat).abs() < 1e-9 && (hh - h).abs() < 1e-6);
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn station_csv_parsing() {
        assert!(parse_station_csv("", "f").unwrap().is_empty());
        let s = parse_station_csv("id,lat,lon,height\n3, 45.0, 10.0, 120.5\n", "f").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].id, 3);
        assert_eq!(s[0].ecef, geodetic_to_ecef(45.0, 10.0, 120.5));
        match parse_station_csv("1,10,20,0\n2,91,0,0\n", "stations.csv") {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "lat");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_station_csv("1,10,x,0\n", "f"),
            Err(Error::Parse { line: 1, ref field, .. }) if field == "lon"
        ));
        assert!(parse_station_csv("1,10,0\n", "f").is_err());
    }

    #[test]
    fn satellite_orbit_radius_and_period() {
        let sat = Satellite {
            id: 1,
            radius: 26_560_000.0,
            inclination_deg: 55.0,
            raan_deg: 30.0,
            phase_deg: 10.0,
            bias: 0.0,
        };
        for t in [0.0, 100.0, 5000.0] {
            assert_abs_diff_eq!(norm3(sat.position(t)), 26_560_000.0, epsilon = 1e-6);
        }
        let z_max = 26_560_000.0 * 55f64.to_radians().sin();
        assert!(sat.position(1234.0)[2].abs() <= z_max + 1e-6);
    }

    #[test]
    fn satellite_subpoint_placement() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for sat in random_satellites(&cfg, &mut rng) {
            let p = sat.position(0.0);
            let lat = (p[2] / norm3(p)).asin().to_degrees();
            assert!(lat.abs() < 55.0);
        }
    }

    fn tiny_config() -> ScenarioConfig {
        ScenarioConfig {
            stations: 1,
            satellites: 5,
            epochs: 1,
            force_full_visibility: true,
            require_identifiable: false,
            known_position_stations: 0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn single_station_dimension_bookkeeping() {
        let s = generate_scenario(&tiny_config()).unwrap();
        let sys = &s.epochs[0].systems[0];
        assert_eq!(sys.rows(), 10);
        assert_eq!(sys.local_dim(), 3 + 1 + 5);
        assert_eq!(sys.global_dim(), 4);
        let active = (0..4).filter(|&c| sys.b.column(c).amax() > 0.0).count();
        assert_eq!(active, 4);
        assert_eq!(s.satellites[0].bias, 0.0);
    }

    #[test]
    fn known_position_station_drops_position_columns() {
        let cfg = ScenarioConfig { known_position_stations: 1, ..tiny_config() };
        let s = generate_scenario(&cfg).unwrap();
        let sys = &s.epochs[0].systems[0];
        assert_eq!(sys.local_dim(), 1 + 5);
        assert_eq!(sys.layout.clock, 0);
        assert!(sys.layout.position_range().is_none());
        // clock column is all ones, then one wavelength per phase row
        assert!(sys.a.column(0).iter().all(|&v| v == 1.0));
        for j in 0..5 {
            assert_eq!(sys.a[(j, 1 + j)], WAVELENGTH);
        }
        let full = generate_scenario(&tiny_config()).unwrap();
        assert!(full.epochs[0].systems[0].layout.position_range() == Some(0..3));
    }

    #[test]
    fn noiseless_observations_are_exact() {
        let cfg = ScenarioConfig {
            sigma_phase: 0.0,
            sigma_code: 0.0,
            stations: 5,
            satellites: 8,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        for epoch in &s.epochs {
            for sys in &epoch.systems {
                let model = &sys.a * &sys.x_true + &sys.b * &s.z_true;
                assert_eq!(model, sys.y);
            }
        }
    }

    #[test]
    fn noiseless_central_recovers_truth() {
        let cfg = ScenarioConfig {
            sigma_phase: 0.0,
            sigma_code: 0.0,
            stations: 20,
            satellites: 12,
            epochs: 1,
            seed: 3,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        assert_eq!(s.global_dim(), 11);
        let sol = solve_central(&s.epochs[0].systems).unwrap();
        assert!((&sol.z_hat - &s.z_true).amax() < 1e-9);
    }

    #[test]
    fn geometry_invariants() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        for epoch in &s.epochs {
            for (r, dirs) in epoch.geometry.line_of_sight.iter().enumerate() {
                assert!(dirs.len() >= s.config.min_visible);
                for g in dirs {
                    assert!((norm3(*g) - 1.0).abs() < 1e-12);
                }
                let sys = &epoch.systems[r];
                for s_id in 1..s.satellites.len() {
                    let seen = epoch.geometry.visible[r].contains(&s_id);
                    assert_eq!(sys.b.column(s_id - 1).amax() > 0.0, seen);
                }
                // column-scaled smallest singular value
                let mut a = sys.a.clone();
                for mut col in a.column_iter_mut() {
                    let n = col.norm();
                    col /= n;
                }
                let smin = a.singular_values().min();
                assert!(smin > 1e-8);
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cfg = ScenarioConfig::default();
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = generate_scenario(&ScenarioConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.z_true, c.z_true);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let s = generate_scenario(&ScenarioConfig { stations: 4, ..ScenarioConfig::default() }).unwrap();
        let back = Scenario::from_json(&s.to_json().unwrap(), "mem").unwrap();
        assert_eq!(back, s);
        let bad = s.to_json().unwrap().replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(Scenario::from_json(&bad, "mem").is_err());
    }

    #[test]
    fn infeasible_geometry_names_station() {
        let cfg = ScenarioConfig {
            elevation_mask_deg: 89.0,
            max_attempts: 3,
            ..ScenarioConfig::default()
        };
        match generate_scenario(&cfg) {
            Err(Error::Geometry { attempts, reason, .. }) => {
                assert_eq!(attempts, 3);
                assert!(reason.contains("visible"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noise_covariance_matches_q() {
        let s = generate_scenario(&ScenarioConfig { stations: 2, ..ScenarioConfig::default() }).unwrap();
        let q = &s.epochs[0].systems[0].q;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mut acc = Vector::zeros(q.nrows());
        for _ in 0..draws {
            let e = draw_noise(q, &mut rng);
            acc += e.component_mul(&e);
        }
        for i in 0..q.nrows() {
            let emp = acc[i] / draws as f64;
            assert!((emp / q[(i, i)] - 1.0).abs() < 0.05, "row {i}: {emp} vs {}", q[(i, i)]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn ecef_height_is_radial_offset(lat in -89.0..89.0f64, lon in -180.0..180.0f64, h in 0.0..1e4f64) {
            let p0 = geodetic_to_ecef(lat, lon, 0.0);
            let p1 = geodetic_to_ecef(lat, lon, h);
            prop_assert!((norm3(sub3(p1, p0)) - h).abs() < 1e-6);
        }
    }
}
