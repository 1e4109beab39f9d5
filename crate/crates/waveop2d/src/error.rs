use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} is not a power of two >= 8")]
    GridSize(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("wave packet not contained in the box: {0}")]
    PacketOutsideBox(String),
    #[error("potential sample at node {index} is not finite")]
    NonFinitePotential { index: usize },
    #[error("support size {size} exceeds cap {cap}; use a coarser grid or larger v_cut")]
    SupportCap { size: usize, cap: usize },
    #[error("empty support: v_cut {v_cut} is above max v = {v_max}")]
    EmptySupport { v_cut: f64, v_max: f64 },
    #[error("real spectral parameter z = {0} is not allowed for the Fourier-multiplier resolvent")]
    RealSpectralParameter(f64),
    #[error("energy {lambda} outside admissible range: {reason}")]
    Energy { lambda: f64, reason: String },
    #[error("possible threshold resonance or numerical eigenvalue at lambda = {lambda}: sigma_min = {sigma_min:e}")]
    NearSingular { lambda: f64, sigma_min: f64 },
    #[error("missing Birman-Schwinger data at lambda = {0}")]
    MissingInverse(f64),
    #[error("phase jump {jump} >= pi between lambda = {lo} and {hi}; refine the energy grid")]
    PhaseJump { lo: f64, hi: f64, jump: f64 },
    #[error("unitarity defect {defect:e} at lambda = {lambda} exceeds {limit:e}")]
    UnitarityDefect {
        lambda: f64,
        defect: f64,
        limit: f64,
    },
    #[error("log-grid range exceeded: {0}")]
    LogRange(String),
    #[error("window underflow: fiber mass outside the log-energy range ({0:e} of peak at the upper edge)")]
    WindowUnderflow(f64),
    #[error("origin not resolved: {0}")]
    OriginResolution(String),
    #[error("field leaks through the box boundary ({0:e} of peak)")]
    BoundaryLeakage(f64),
    #[error("box excursion: {0}")]
    BoxExcursion(String),
    #[error("time step {dt} too large: dt*(xi_max^2 + max|V|) = {product} >= 0.5")]
    TimeStep { dt: f64, product: f64 },
    #[error("low-energy tail {0:e} of the packet mass exceeds 1e-6")]
    LowEnergyTail(f64),
    #[error("family violates near-orthogonality: |<phi_{i}, phi_{j}>| = {overlap:e}")]
    FamilyOverlap { i: usize, j: usize, overlap: f64 },
    #[error("wave-operator ladder is not Cauchy: increments {increments:?} (tolerance {tol:e}); use a larger box or a higher-energy packet")]
    NonCauchy { increments: Vec<f64>, tol: f64 },
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
    #[error("bracket failure: {0}")]
    Bracket(String),
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}

pub type Result<T> = std::result::Result<T, Error>;
