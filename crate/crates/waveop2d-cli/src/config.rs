use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use waveop2d::dilation::LogGridConfig;
use waveop2d::free_ops::{check_energy, EnergyGrid};
use waveop2d::grid::{make_packet, Grid2D, WavePacketSpec};
use waveop2d::potential::{sample_potential, support_for, Potential, Shape, SupportQuadrature};
use waveop2d::propagation::{check_box, low_energy_fraction, Propagator, LOW_ENERGY_CUT};
use waveop2d::theorem_lab::{BoundStateOptions, EscapingFamily, PhaseCurveConfig};

/// Marks an error as a configuration problem (exit status 2).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl std::fmt::Display) -> anyhow::Error {
    Invalid(msg.to_string()).into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub dilation: LogGridConfig,
    #[serde(default)]
    pub propagation: PropagationSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub bound_states: BoundStatesSection,
    #[serde(default)]
    pub levinson: PhaseCurveConfig,
    #[serde(default)]
    pub cache: DirSection,
    #[serde(default)]
    pub output: DirSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    /// Box is [-half_width, half_width)².
    pub half_width: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: 64,
            half_width: 8.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub shape: Shape,
    pub g: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_v_cut")]
    pub v_cut: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_sigma() -> f64 {
    20.0
}
fn default_v_cut() -> f64 {
    1e-3
}
fn default_cap() -> usize {
    waveop2d::birman_schwinger::DEFAULT_CAP
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingChoice {
    Log,
    Linear,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub n_lambda: usize,
    /// Lower end of a log grid (ignored for linear spacing).
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub spacing: SpacingChoice,
    pub n_omega: usize,
    pub tol_sing: f64,
    /// Strictly decreasing energies for `zero-energy`.
    pub zero_energy_ladder: Vec<f64>,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self {
            n_lambda: 32,
            lambda_min: 1e-3,
            lambda_max: 25.0,
            spacing: SpacingChoice::Log,
            n_omega: 32,
            tol_sing: waveop2d::birman_schwinger::TOL_SING,
            zero_energy_ladder: (0..=12)
                .map(|k| 10f64.powf(-1.0 - k as f64 / 4.0))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSection {
    pub center: [f64; 2],
    pub momentum: [f64; 2],
    pub width: f64,
}

impl PacketSection {
    pub const fn new(center: [f64; 2], momentum: [f64; 2], width: f64) -> Self {
        Self {
            center,
            momentum,
            width,
        }
    }

    pub fn spec(&self) -> WavePacketSpec {
        WavePacketSpec::new(self.center, self.momentum, self.width)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationSection {
    /// Grid of the time-dependent runs (usually larger than [grid]).
    pub n: usize,
    pub half_width: f64,
    pub dt: f64,
    pub ladder: Vec<f64>,
    pub tol: f64,
    pub packet: PacketSection,
}

impl Default for PropagationSection {
    fn default() -> Self {
        Self {
            n: 512,
            half_width: 64.0,
            dt: 0.003,
            ladder: vec![1.0, 2.0, 4.0],
            tol: waveop2d::propagation::TOL_W,
            packet: PacketSection::new([0.0, 0.0], [3.0, 0.0], 1.5),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySection {
    pub momentum: f64,
    pub width: f64,
    pub distances: Vec<f64>,
    pub first_angle: f64,
}

impl Default for FamilySection {
    fn default() -> Self {
        let f = EscapingFamily::default();
        Self {
            momentum: f.speed_momentum,
            width: f.width,
            distances: f.distances,
            first_angle: f.first_angle,
        }
    }
}

impl FamilySection {
    pub fn family(&self) -> EscapingFamily {
        EscapingFamily {
            speed_momentum: self.momentum,
            width: self.width,
            distances: self.distances.clone(),
            first_angle: self.first_angle,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Run the time-dependent side of the ⟨g,(W₋−1)f⟩ comparison.
    pub cross_check: bool,
    /// Test packets g; f is [propagation.packet].
    pub pairs: Vec<PacketSection>,
    pub cross_check_tol: f64,
    pub family: FamilySection,
    pub decay_factor: f64,
    pub control_spread: f64,
    pub wplus_tol: f64,
    pub constant_symbol_tol: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            cross_check: true,
            pairs: vec![
                PacketSection::new([0.0, 0.0], [3.0, 0.0], 1.5),
                PacketSection::new([0.0, 1.5], [3.0, 0.0], 1.5),
                PacketSection::new([0.0, 0.0], [2.5, 1.5], 1.5),
                PacketSection::new([-1.0, 0.0], [3.0, 0.5], 1.2),
            ],
            cross_check_tol: 0.05,
            family: FamilySection::default(),
            decay_factor: waveop2d::theorem_lab::DECAY_FACTOR,
            control_spread: waveop2d::theorem_lab::CONTROL_SPREAD,
            wplus_tol: 1e-2,
            constant_symbol_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundStatesSection {
    pub k_max: usize,
    pub ell_max: u32,
    pub solver: BoundStateOptions,
}

impl Default for BoundStatesSection {
    fn default() -> Self {
        Self {
            k_max: 6,
            ell_max: 4,
            solver: BoundStateOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    /// TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("reading {}: {e}", path.display())))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(invalid)?
        } else {
            toml::from_str(&text).map_err(invalid)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.n, self.grid.half_width).map_err(invalid)
    }

    pub fn potential(&self) -> Result<Potential> {
        let p = &self.potential;
        if matches!(p.shape, Shape::Zero) {
            return Ok(Potential::zero());
        }
        Potential::new(p.shape.clone(), p.g, p.sigma).map_err(invalid)
    }

    pub fn is_free(&self) -> bool {
        matches!(self.potential.shape, Shape::Zero) || self.potential.g == 0.0
    }

    pub fn quadrature(&self) -> Result<Arc<SupportQuadrature>> {
        let p = &self.potential;
        Ok(Arc::new(
            support_for(&self.potential()?, &self.grid()?, p.v_cut, p.cap).map_err(invalid)?,
        ))
    }

    pub fn energy_grid(&self) -> Result<Arc<EnergyGrid>> {
        let e = &self.energy;
        let eg = match e.spacing {
            SpacingChoice::Log => EnergyGrid::log(e.lambda_min, e.lambda_max, e.n_lambda),
            SpacingChoice::Linear => EnergyGrid::linear(e.lambda_max, e.n_lambda),
        }
        .map_err(invalid)?;
        eg.check_nyquist(&self.grid()?).map_err(invalid)?;
        Ok(Arc::new(eg))
    }

    pub fn propagation_grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.propagation.n, self.propagation.half_width).map_err(invalid)
    }

    /// Every precondition that can be checked without running a computation.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.quadrature()?;
        self.energy_grid()?;
        let e = &self.energy;
        if e.n_omega < 16 || e.n_omega % 2 != 0 {
            return Err(invalid(format!(
                "energy.n_omega must be even and >= 16, got {}",
                e.n_omega
            )));
        }
        if !(e.tol_sing > 0.0) {
            return Err(invalid("energy.tol_sing must be positive"));
        }
        let ladder = &e.zero_energy_ladder;
        if ladder.is_empty()
            || ladder.windows(2).any(|w| w[1] >= w[0])
            || ladder.last().is_some_and(|l| *l < 1e-6)
        {
            return Err(invalid(
                "energy.zero_energy_ladder must be strictly decreasing and stay above 1e-6",
            ));
        }
        check_energy(ladder[0], &grid).map_err(invalid)?;

        let pr = &self.propagation;
        let pgrid = self.propagation_grid()?;
        if pr.ladder.is_empty()
            || pr.ladder.iter().any(|t| !(*t > 0.0))
            || pr.ladder.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid(
                "propagation.ladder must be positive and increasing",
            ));
        }
        if !(pr.tol > 0.0) {
            return Err(invalid("propagation.tol must be positive"));
        }
        let vfield = sample_potential(&self.potential()?, &pgrid).map_err(invalid)?;
        let stable = Propagator::new(&vfield).max_stable_dt();
        if !(pr.dt > 0.0 && pr.dt < stable) {
            return Err(invalid(format!(
                "propagation.dt = {} must lie in (0, {stable:.3e})",
                pr.dt
            )));
        }
        let tmax = *pr.ladder.last().unwrap();
        for p in std::iter::once(&pr.packet).chain(&self.verify.pairs) {
            if !(p.width > 0.0) {
                return Err(invalid("packet widths must be positive"));
            }
            let f = make_packet(&pgrid, &p.spec()).map_err(invalid)?;
            check_box(&f, -tmax)
                .and_then(|_| check_box(&f, tmax))
                .map_err(invalid)?;
        }
        let f = make_packet(&pgrid, &pr.packet.spec()).map_err(invalid)?;
        let tail = low_energy_fraction(&f, LOW_ENERGY_CUT);
        if tail > 1e-6 {
            return Err(invalid(format!(
                "propagation.packet carries {tail:.1e} of its norm below lambda = {LOW_ENERGY_CUT}"
            )));
        }

        let v = &self.verify;
        let fam = &v.family;
        if !(fam.width > 0.0 && fam.momentum > 0.0) || fam.distances.iter().any(|d| !(*d > 0.0)) {
            return Err(invalid(
                "verify.family needs positive momentum, width and distances",
            ));
        }
        for (name, x) in [
            ("cross_check_tol", v.cross_check_tol),
            ("decay_factor", v.decay_factor),
            ("control_spread", v.control_spread),
            ("wplus_tol", v.wplus_tol),
            ("constant_symbol_tol", v.constant_symbol_tol),
        ] {
            if !(x > 0.0) {
                return Err(invalid(format!("verify.{name} must be positive")));
            }
        }
        if v.control_spread < 1.0 {
            return Err(invalid(
                "verify.control_spread is a max/min ratio and must be >= 1",
            ));
        }

        if self.bound_states.k_max == 0 {
            return Err(invalid("bound_states.k_max must be at least 1"));
        }
        let lv = &self.levinson;
        if !(lv.lambda_min > 0.0 && lv.lambda_max > lv.lambda_min) || lv.per_decade == 0 {
            return Err(invalid(
                "levinson needs 0 < lambda_min < lambda_max and per_decade >= 1",
            ));
        }
        check_energy(lv.lambda_max, &grid).map_err(invalid)?;
        Ok(())
    }

    /// SHA-256 of the physics sections (cache and output locations excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.cache = DirSection::default();
        c.output = DirSection::default();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&c).expect("config serializes"));
        format!("{:x}", h.finalize())
    }
}
