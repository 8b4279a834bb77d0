//! JSON run configuration with baseline defaults, strict key checking and
//! range validation. Every error names the offending key path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aero::{AeroConstants, GustSpec};
use crate::beam::CrossSection;
use crate::coupled::SolverSettings;
use crate::error::{Error, Result};

/// Stiffness parameters of the paper's σ study.
pub const PAPER_SIGMA_LIST: [f64; 11] = [0.001, 0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub aircraft: AircraftConfig,
    pub flight: FlightConfig,
    /// Stiffness parameter for single-point analyses.
    pub sigma: f64,
    /// Stiffness parameters for `sweep`.
    pub sigma_list: Vec<f64>,
    pub solver: SolverSettings,
    pub gust: GustSpec,
    pub aero: AeroConstants,
    pub analysis: AnalysisConfig,
    /// Output directory (overridden by `--out` and `AEROFLEX_OUT`).
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            aircraft: AircraftConfig::default(),
            flight: FlightConfig::default(),
            sigma: 1.0,
            sigma_list: PAPER_SIGMA_LIST.to_vec(),
            solver: SolverSettings::default(),
            gust: GustSpec::default(),
            aero: AeroConstants::default(),
            analysis: AnalysisConfig::default(),
            output_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AircraftConfig {
    /// Semi-span [m].
    pub semi_span: f64,
    /// Chord [m].
    pub chord: f64,
    /// Elastic-axis offset aft of mid-chord [semi-chords].
    pub ea_offset: f64,
    pub ei2: f64,
    pub ei3: f64,
    pub gj: f64,
    pub ea: f64,
    pub ga: f64,
    /// Mass per unit span [kg/m].
    pub mu: f64,
    /// Torsional mass moment of inertia per unit span [kg·m].
    pub j_t: f64,
    /// Fuselage + payload point mass at mid-span [kg].
    pub fuselage_mass: f64,
    /// Beam elements per semi-span.
    pub elements_per_side: usize,
    pub tail: TailConfig,
}

impl Default for AircraftConfig {
    fn default() -> Self {
        Self {
            semi_span: 16.0,
            chord: 1.0,
            ea_offset: 0.0,
            ei2: 2e4,
            ei3: 4e6,
            gj: 1e4,
            ea: 1e8,
            ga: 1e8,
            mu: 0.75,
            j_t: 0.1,
            fuselage_mass: 50.0,
            elements_per_side: 50,
            tail: TailConfig::default(),
        }
    }
}

impl AircraftConfig {
    /// Reference (σ = 1) cross-section.
    pub fn section(&self) -> CrossSection {
        CrossSection::new(self.ea, self.ga, self.ga, self.gj, self.ei2, self.ei3, self.mu, self.j_t)
    }

    pub fn wing_area(&self) -> f64 {
        2.0 * self.semi_span * self.chord
    }

    pub fn total_mass(&self) -> f64 {
        2.0 * self.semi_span * self.mu + self.fuselage_mass
    }
}

/// Idealized horizontal tail used for pitching-moment closure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailConfig {
    /// Distance aft of the centre of gravity [m].
    pub arm: f64,
    /// Planform area [m²].
    pub area: f64,
    /// Lift-curve slope [1/rad].
    pub lift_slope: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            arm: 5.0,
            area: 4.0,
            lift_slope: 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlightConfig {
    /// Flight speed [m/s].
    #[serde(rename = "U")]
    pub u: f64,
    /// Air density [kg/m³].
    pub rho: f64,
    /// Altitude [m].
    pub altitude: f64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        Self {
            u: 25.0,
            rho: 0.0889,
            altitude: 20_000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlutterBasis {
    Undeformed,
    Prestressed,
}

impl std::fmt::Display for FlutterBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Undeformed => "undeformed",
            Self::Prestressed => "prestressed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrimMode {
    Rigid,
    Flexible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlutterConfig {
    pub basis: FlutterBasis,
    pub v_start: f64,
    pub v_step: f64,
    pub v_max: f64,
    /// Bisection tolerance on the flutter speed [m/s].
    pub tolerance: f64,
    /// Structural modes retained in the reduced stability model.
    pub n_modes: usize,
    /// Analyse the free-flying aircraft instead of the clamped semi-span.
    pub full_aircraft: bool,
    /// Apply gravity to the wing mass when forming the prestressed state.
    pub gravity: bool,
}

impl Default for FlutterConfig {
    fn default() -> Self {
        Self {
            basis: FlutterBasis::Undeformed,
            v_start: 5.0,
            v_step: 1.0,
            v_max: 100.0,
            tolerance: 0.01,
            n_modes: 20,
            full_aircraft: false,
            gravity: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Number of modes reported by `modal`.
    pub n_modes: usize,
    /// Dead vertical load per unit span for `static` [N/m].
    pub static_load: f64,
    pub trim_mode: TrimMode,
    /// Gust simulation length [s].
    pub horizon: f64,
    /// Structural modes retained in the flight-dynamics linearization.
    pub flight_modes: usize,
    pub flutter: FlutterConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            n_modes: 6,
            static_load: 12.0,
            trim_mode: TrimMode::Flexible,
            horizon: 4.0,
            flight_modes: 20,
            flutter: FlutterConfig::default(),
        }
    }
}

fn range(path: &str, ok: bool, msg: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config {
            path: path.to_string(),
            message: msg.to_string(),
        })
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    range(path, v > 0.0 && v.is_finite(), format_args!("must be positive and finite, got {v}"))
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config {
                path: if path == "." || path == "?" { "<root>".into() } else { path },
                message: inner.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.aircraft;
        for (k, v) in [
            ("aircraft.semi_span", a.semi_span),
            ("aircraft.chord", a.chord),
            ("aircraft.ei2", a.ei2),
            ("aircraft.ei3", a.ei3),
            ("aircraft.gj", a.gj),
            ("aircraft.ea", a.ea),
            ("aircraft.ga", a.ga),
            ("aircraft.mu", a.mu),
            ("aircraft.j_t", a.j_t),
            ("aircraft.fuselage_mass", a.fuselage_mass),
            ("aircraft.tail.arm", a.tail.arm),
            ("aircraft.tail.area", a.tail.area),
            ("aircraft.tail.lift_slope", a.tail.lift_slope),
            ("flight.U", self.flight.u),
            ("flight.rho", self.flight.rho),
            ("flight.altitude", self.flight.altitude),
            ("sigma", self.sigma),
            ("solver.dt", self.solver.dt),
            ("solver.newton_rel_tol", self.solver.newton_rel_tol),
            ("gust.H_g", self.gust.h_g),
            ("analysis.horizon", self.analysis.horizon),
            ("analysis.flutter.v_start", self.analysis.flutter.v_start),
            ("analysis.flutter.v_step", self.analysis.flutter.v_step),
            ("analysis.flutter.v_max", self.analysis.flutter.v_max),
            ("analysis.flutter.tolerance", self.analysis.flutter.tolerance),
            ("aero.cl_alpha", self.aero.cl_alpha),
            ("aero.e0", self.aero.e0),
            ("aero.aspect_ratio", self.aero.aspect_ratio),
        ] {
            positive(k, v)?;
        }
        range(
            "aircraft.ea_offset",
            a.ea_offset.abs() < 1.0,
            format_args!("must lie inside the chord (|a| < 1), got {}", a.ea_offset),
        )?;
        range("aircraft.elements_per_side", a.elements_per_side >= 2, "must be at least 2")?;
        range("analysis.n_modes", self.analysis.n_modes >= 1, "must be at least 1")?;
        range("analysis.flutter.n_modes", self.analysis.flutter.n_modes >= 1, "must be at least 1")?;
        range("analysis.flight_modes", self.analysis.flight_modes >= 1, "must be at least 1")?;
        range(
            "analysis.static_load",
            self.analysis.static_load.is_finite(),
            "must be finite",
        )?;
        range(
            "analysis.flutter.v_max",
            self.analysis.flutter.v_max > self.analysis.flutter.v_start,
            "must exceed v_start",
        )?;
        range("sigma_list", !self.sigma_list.is_empty(), "must not be empty")?;
        for (i, s) in self.sigma_list.iter().enumerate() {
            positive(&format!("sigma_list[{i}]"), *s)?;
        }
        range("gust.w_g0", self.gust.w_g0 >= 0.0 && self.gust.w_g0.is_finite(), format_args!("must be nonnegative, got {}", self.gust.w_g0))?;
        range("gust.t0", self.gust.t0 >= 0.0, format_args!("must be nonnegative, got {}", self.gust.t0))?;
        range("aero.cd0", self.aero.cd0 >= 0.0, format_args!("must be nonnegative, got {}", self.aero.cd0))?;
        for (k, v) in [
            ("aero.psi1", self.aero.psi1),
            ("aero.psi2", self.aero.psi2),
            ("aero.eps1", self.aero.eps1),
            ("aero.eps2", self.aero.eps2),
            ("aero.phi1", self.aero.phi1),
            ("aero.phi2", self.aero.phi2),
            ("aero.beta1", self.aero.beta1),
            ("aero.beta2", self.aero.beta2),
        ] {
            positive(k, v)?;
        }
        self.solver.validate().map_err(|e| Error::Config {
            path: "solver".into(),
            message: e.to_string(),
        })?;
        range("solver.max_newton_iter", self.solver.max_newton_iter >= 1, "must be at least 1")?;
        Ok(())
    }
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: "<file>".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    RunConfig::from_json(&text)
}
