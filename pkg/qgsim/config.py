from pathlib import Path

# qgsim/ root, the directory of this file
QGSIM_ROOT = Path(__file__).resolve().parent

CONFIGS_DIR        = QGSIM_ROOT / "configs"
DEFAULT_OUTPUT_DIR = QGSIM_ROOT.parent / "runs"

# ── Profile ODE ───────────────────────────────────────────────────────────────
PROFILE_W_MAX = 40.0
PROFILE_TOL   = 1e-10
# Forward shooting is trusted while W stays above this; the tail comes from
# the backward Riccati sweep.
PROFILE_FORWARD_FLOOR = 1e-4
PROFILE_TABLE_NODES   = 4000

# ── Vertical mesh ─────────────────────────────────────────────────────────────
DEFAULT_M  = 128
Z_TAIL_TOL = 1e-8

# ── Horizontal grids ──────────────────────────────────────────────────────────
POINTS_PER_WAVELENGTH    = 4
DEFAULT_TRANSPORT_POINTS = 64

# ── Runtime checks ────────────────────────────────────────────────────────────
LINF_TOL          = 1e-12
MEAN_TOL          = 1e-10
ENERGY_DRIFT_TOL  = 1e-2   # relative increase allowed per unit time
LEDGER_REL_TOL    = 1e-4
DECOUPLING_TOL    = 5e-2   # relative, mesh dependent
TRACE_MARGIN_TOL  = 1e-2

# ── Picard ────────────────────────────────────────────────────────────────────
MAX_DT_HALVINGS = 6

# ── Outputs ───────────────────────────────────────────────────────────────────
DIAGNOSTICS_CSV = "diagnostics.csv"
SUMMARY_JSON    = "summary.json"
SNAPSHOT_DIR    = "snapshots"

# Column order is part of the output format, see docs/output_formats.md.
DIAGNOSTIC_COLUMNS = [
    "t",
    "dt",
    "F_L2",
    "F_Linf",
    "F_L2_w0",
    "F_lipschitz",
    "psi_energy",
    "theta_L2",
    "theta_H_alpha",
    "ledger_residual",
    "layer_mean_drift",
    "theta_mean",
    "trace_margin_psi1",
    "trace_margin_psi2",
    "neumann_residual_psi2",
    "laplacian_residual_psi1",
    "velocity_L2",
    "picard_ratio",
]

SNAPSHOT_MAGIC   = b"QGSN"
SNAPSHOT_VERSION = 1
