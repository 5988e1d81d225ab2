"""
Coupled regularized system: potential vorticity F in the bulk, θ on z = 0.

One step:
    (1) Ψ₂ = solve_neumann(P_n F)
    (2) Ψ₁ = E₁ θ
    (3) V  = mollify(∇̄⊥(Ψ₁ + Ψ₂))
    (4) F  ← advect(F, V, dt)
    (5) θ  ← step_theta(θ, traces of Ψ₂, dt)
with optional Picard sweeps that redo (4)-(5) with the velocity and forcing
averaged between the old state and the latest iterate.

Usage:
    cfg = load_config("configs/torus_coupled.json")
    result = run(cfg)
"""

import math
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config import (DIAGNOSTICS_CSV, LINF_TOL, MAX_DT_HALVINGS, MEAN_TOL, SNAPSHOT_DIR,
                    SUMMARY_JSON)
from services.boundary import (BoundaryForcing, BoundaryState, ledger_terms, ledger_violation,
                               step_theta)
from services.diagnostics import DiagnosticsWriter, all_passed, evaluate_checks, write_summary
from services.elliptic import EllipticSolver, energy_inner, laplacian
from services.errors import BlowUpError, DataError, QGSimError, StepSizeError
from services.extension import (LayeredField, ZGrid, alpha_exponent, build_extension_basis,
                                neumann_extend, nu_exponent, trace_neumann)
from services.initial_data import build_F0, build_theta0
from services.profile_ode import get_profile
from services.sim_config import SimConfig
from services.snapshot import write_snapshot
from services.spectral_basis import build_basis, sobolev_norm
from services.transport import (LayeredGrid, Mollifier, TransportGrid, VelocityField, advect,
                                lipschitz, mollify_field, mollify_velocity, project_layers,
                                transport_norms, velocity_from_stream)


class Model:
    """
    Everything fixed for the duration of a run: basis, profile, meshes,
    factored elliptic solver, mollifier.

    @param cfg: validated SimConfig.
    @param debug: print setup details.
    """

    def __init__(self, cfg: SimConfig, debug: bool = False):
        self.cfg = cfg
        self.a = cfg.a
        self.alpha = alpha_exponent(cfg.a)
        self.nu = nu_exponent(cfg.a)
        self.periodic = cfg.domain.kind == "torus"

        self.basis = build_basis(cfg.domain)
        self.profile = get_profile(cfg.a, cfg.profile.w_max, cfg.profile.tol)
        z = cfg.zgrid
        self.zgrid = ZGrid.for_basis(cfg.a, self.basis, self.profile, M=z.M, z_max=z.z_max,
                                     grading=z.grading, tail_tol=z.tail_tol)
        self.ext = build_extension_basis(self.zgrid, self.basis, self.profile)
        self.solver = EllipticSolver(self.zgrid, self.basis)

        n_moll = cfg.mollifier_index
        self.grid = TransportGrid(cfg.domain, cfg.transport_points, pad=2.0 / n_moll)
        self.mollifier = Mollifier(n_moll, self.grid, self.zgrid)

        if debug:
            print(f"[DEBUG] {cfg.domain.kind} n={self.basis.n}, k in "
                  f"[{self.basis.k.min():.4g}, {self.basis.k.max():.4g}], "
                  f"collocation {self.basis.grid.shape}")
            print(f"[DEBUG] {self.zgrid}, mesh_tol={self.ext.mesh_tol:.2e}")
            print(f"[DEBUG] kappa={self.profile.kappa:.10g}, kappa_ext={self.ext.kappa:.10g}")
            print(f"[DEBUG] {self.grid}, mollifier n={n_moll}")

    @property
    def kappa(self) -> float:
        return self.ext.kappa

    def default_dt(self, V: VelocityField) -> float:
        """min(cell / max|V|, 0.1 k_n^{-α})"""
        spectral = 0.1 * float(self.basis.k.max()) ** (-self.alpha)
        speed = V.max_speed()
        if speed > 0:
            return min(min(self.grid.h) / speed, spectral)
        return spectral


class CoupledState:
    """(F, θ) at time t plus the fields reconstructed from them."""

    def __init__(self, t: float, F: LayeredGrid, boundary: BoundaryState, psi1: LayeredField,
                 psi2: LayeredField, velocity: VelocityField, raw_velocity_l2: float,
                 forcing: BoundaryForcing):
        self.t = t
        self.F = F
        self.boundary = boundary
        self.psi1 = psi1
        self.psi2 = psi2
        self.velocity = velocity
        self.raw_velocity_l2 = raw_velocity_l2
        self.forcing = forcing
        self.admissible_set: Dict[str, float] = {}

    @property
    def theta(self):
        return self.boundary.theta

    @property
    def psi(self) -> LayeredField:
        return self.psi1 + self.psi2

    def is_finite(self) -> bool:
        return self.F.is_finite() and self.theta.is_finite()


def couple(model: Model, F: LayeredGrid, boundary: BoundaryState) -> CoupledState:
    """Steps (1)-(3): rebuild Ψ₂, Ψ₁, the velocity and the boundary forcing."""
    psi2 = model.solver.solve_neumann(project_layers(F, model.basis))
    psi1 = neumann_extend(boundary.theta, model.ext)
    raw = velocity_from_stream(psi1 + psi2, model.grid)
    V = mollify_velocity(raw, model.mollifier) if model.cfg.regularized else raw
    return CoupledState(boundary.t, F, boundary, psi1, psi2, V, raw.l2_norm(model.zgrid),
                        BoundaryForcing.from_interior(psi2))


def initialize(cfg: SimConfig, model: Optional[Model] = None, debug: bool = False) -> CoupledState:
    """
    F₀ sampled (zero outside Ω on the rectangle) and mollified, θ₀ projected,
    then the first coupling. The admissible-set constants of the data are
    kept on the returned state.
    """
    model = model or Model(cfg, debug=debug)
    F0 = build_F0(cfg.F0, model.grid, model.zgrid, model.basis)
    linf = transport_norms(F0, np.inf)
    if model.periodic:
        means = np.abs(F0.layer_means())
        if means.max() > MEAN_TOL * max(1.0, linf):
            j = int(np.argmax(means))
            raise DataError(f"F0 has layer mean {F0.layer_means()[j]:.3e} at z={model.zgrid.z[j]:.4g}; "
                            "periodic runs need zero-mean layers")
    theta0 = build_theta0(cfg.theta0, model.basis)

    F = mollify_field(F0, model.mollifier)
    boundary = BoundaryState.start(theta0, cfg.a)
    state = couple(model, F, boundary)

    grad = _horizontal_gradient_l2(F0)
    admissible = {
        "C_int": transport_norms(F0, 2) + grad + linf,
        "F0_L2": transport_norms(F0, 2),
        "F0_grad_L2": grad,
        "F0_Linf": linf,
        "C_b": theta0.l2_norm(),
        "layer_means_max": float(np.abs(F0.layer_means()).max()),
    }
    if debug:
        print(f"[DEBUG] admissible set: C_int={admissible['C_int']:.6g}, C_b={admissible['C_b']:.6g}")
    state.admissible_set = admissible
    return state


def _horizontal_gradient_l2(F: LayeredGrid) -> float:
    v = F.values
    h1, h2 = F.grid.h
    if F.grid.periodic:
        g1 = (np.roll(v, -1, axis=1) - v) / h1
        g2 = (np.roll(v, -1, axis=2) - v) / h2
    else:
        g1 = np.diff(v, axis=1, append=0.0) / h1
        g2 = np.diff(v, axis=2, append=0.0) / h2
    per_layer = (g1 ** 2 + g2 ** 2).sum(axis=(1, 2)) * F.grid.cell_area
    return float(np.sqrt(np.sum(F.zgrid.dz * per_layer)))


# ── Stepping ──────────────────────────────────────────────────────────────────

class StepInfo:
    def __init__(self, iterations: int = 0, ratios: Optional[List[float]] = None,
                 substeps: int = 1):
        self.iterations = iterations
        self.ratios = ratios or []
        self.substeps = substeps

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else float("nan")


def _advance(model: Model, state: CoupledState, V: VelocityField, forcing: BoundaryForcing,
             dt: float) -> Tuple[LayeredGrid, BoundaryState]:
    cfg = model.cfg
    F = advect(state.F, V, dt, require_mollified=cfg.regularized,
               conserve_mean=model.periodic, workers=cfg.workers)
    boundary = step_theta(state.boundary, forcing, dt, induced=cfg.induced_velocity,
                          kappa=model.kappa)
    return F, boundary


def _distance(F1: LayeredGrid, b1: BoundaryState, F2: LayeredGrid, b2: BoundaryState) -> float:
    dF = F1._like(F1.values - F2.values)
    return transport_norms(dF, 2) + (b1.theta - b2.theta).l2_norm()


def step(model: Model, state: CoupledState, dt: float) -> Tuple[CoupledState, StepInfo]:
    """
    One coupled step. With Picard enabled, sweeps until successive iterates
    agree to picard.tol; a sweep whose difference ratio stays >= 1 through
    max_iters rejects the step with StepSizeError.
    """
    picard = model.cfg.picard
    F, boundary = _advance(model, state, state.velocity, state.forcing, dt)
    info = StepInfo()
    if picard.enabled:
        prev_diff = None
        for it in range(1, picard.max_iters + 1):
            trial = couple(model, F, boundary)
            F_new, b_new = _advance(model, state, state.velocity.average(trial.velocity),
                                    state.forcing.average(trial.forcing), dt)
            diff = _distance(F_new, b_new, F, boundary)
            F, boundary = F_new, b_new
            info.iterations = it
            scale = transport_norms(F, 2) + boundary.theta.l2_norm()
            if prev_diff is not None and prev_diff > 0:
                info.ratios.append(diff / prev_diff)
            if diff <= picard.tol * max(1.0, scale):
                break
            prev_diff = diff
        else:
            if info.ratios and info.ratios[-1] >= 1.0:
                raise StepSizeError(f"Picard iteration diverges at t={state.t:.6g} "
                                    f"(ratio {info.ratios[-1]:.3g}, dt={dt:.4g})")

    if not F.is_finite():
        raise BlowUpError(f"F became non-finite at t={state.t + dt:.6g}")
    new = couple(model, F, boundary)
    if not new.is_finite():
        raise BlowUpError(f"state became non-finite at t={state.t + dt:.6g}")
    return new, info


def step_adaptive(model: Model, state: CoupledState, dt: float,
                  depth: int = 0) -> Tuple[CoupledState, StepInfo]:
    """step(), replaced by two half steps (recursively) when dt is rejected."""
    try:
        return step(model, state, dt)
    except StepSizeError as e:
        if depth >= MAX_DT_HALVINGS:
            raise StepSizeError(f"{e}; gave up after {MAX_DT_HALVINGS} halvings")
        mid, info1 = step_adaptive(model, state, dt / 2, depth + 1)
        end, info2 = step_adaptive(model, mid, dt / 2, depth + 1)
        return end, StepInfo(info1.iterations + info2.iterations, info1.ratios + info2.ratios,
                             info1.substeps + info2.substeps)


# ── Diagnostics ───────────────────────────────────────────────────────────────

def _trace_margin(u: LayeredField, kappa: float, nu: float) -> float:
    """(‖∇_√λ u‖ - √κ ‖γ₀u‖_{Ḣ^ν}) / ‖∇_√λ u‖, >= 0 when the trace inequality holds."""
    energy = math.sqrt(max(energy_inner(u, u), 0.0))
    if energy == 0:
        return 0.0
    return (energy - math.sqrt(kappa) * sobolev_norm(u.layer(0), nu)) / energy


def _neumann_residual(u: LayeredField, nu: float) -> float:
    """‖γ_λ u‖_{Ḣ^{-ν}} relative to ‖∇_√λ u‖."""
    energy = math.sqrt(max(energy_inner(u, u), 0.0))
    if energy == 0:
        return 0.0
    return sobolev_norm(trace_neumann(u), -nu) / energy


def _laplacian_residual(u: LayeredField) -> float:
    """‖Δ_λ u‖ relative to ‖Δ̄u‖, both in L²(ℝ₊ × Ω)."""
    zg = u.zgrid
    lap = laplacian(u)
    ref = u.basis.k[None, :] * u.coeffs[:zg.M]
    den = math.sqrt(np.sum(zg.dz[:zg.M, None] * ref ** 2))
    if den == 0:
        return 0.0
    return math.sqrt(np.sum(zg.dz[:zg.M, None] * lap ** 2)) / den


def diagnostics_row(model: Model, state: CoupledState, F_initial_means: np.ndarray, dt: float,
                    ledger_residual: float, picard_ratio: float) -> Dict[str, float]:
    F = state.F
    return {
        "t": state.t,
        "dt": dt,
        "F_L2": transport_norms(F, 2),
        "F_Linf": transport_norms(F, np.inf),
        "F_L2_w0": transport_norms(F, 2, "w0"),
        "F_lipschitz": lipschitz(F),
        "psi_energy": math.sqrt(max(energy_inner(state.psi, state.psi), 0.0)),
        "theta_L2": state.theta.l2_norm(),
        "theta_H_alpha": sobolev_norm(state.theta, model.alpha),
        "ledger_residual": ledger_residual,
        "layer_mean_drift": float(np.abs(F.layer_means() - F_initial_means).max()),
        "theta_mean": state.boundary.mean(),
        "trace_margin_psi1": _trace_margin(state.psi1, model.kappa, model.nu),
        "trace_margin_psi2": _trace_margin(state.psi2, model.kappa, model.nu),
        "neumann_residual_psi2": _neumann_residual(state.psi2, model.nu),
        "laplacian_residual_psi1": _laplacian_residual(state.psi1),
        "velocity_L2": state.velocity.l2_norm(model.zgrid),
        "picard_ratio": picard_ratio,
    }


def _write_state_snapshot(model: Model, state: CoupledState, out_dir: Path, index: int) -> Path:
    coeffs_F = project_layers(state.F, model.basis).coeffs
    return write_snapshot(out_dir / SNAPSHOT_DIR / f"step_{index:06d}.qgsn", model.cfg.domain.kind,
                          model.a, state.t, model.cfg.domain.lengths, model.zgrid.z, model.basis.k,
                          state.theta.coeffs, coeffs_F, state.psi.coeffs)


# ── Run ───────────────────────────────────────────────────────────────────────

class RunResult:
    def __init__(self, state: CoupledState, rows: List[Dict[str, float]], summary: Dict,
                 out_dir: Path):
        self.state = state
        self.rows = rows
        self.summary = summary
        self.out_dir = out_dir

    @property
    def passed(self) -> bool:
        return all_passed(self.summary.get("checks", []))


def _time_grid(T: float, dt: float) -> Tuple[int, float]:
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return steps, T / steps


def run(cfg: SimConfig, out_dir: Optional[Path] = None, debug: bool = False,
        progress: bool = True) -> RunResult:
    """
    Advance to T, writing diagnostics.csv, summary.json and optional
    snapshots under out_dir (default: <output.dir>/<name>).
    """
    t0 = time.time()
    out_dir = Path(out_dir) if out_dir is not None else Path(cfg.output.dir) / cfg.name
    out_dir.mkdir(parents=True, exist_ok=True)

    model = Model(cfg, debug=debug)
    state = initialize(cfg, model, debug=debug)
    admissible_set = state.admissible_set
    dt_req = cfg.dt if cfg.dt is not None else model.default_dt(state.velocity)
    steps, dt = _time_grid(cfg.T, min(dt_req, cfg.T))
    if debug:
        print(f"[DEBUG] {steps} steps of dt={dt:.6g} to T={cfg.T}")

    F_means0 = state.F.layer_means()
    history = [(state.boundary, state.forcing)]
    picard_ratios: List[float] = []
    substeps = 0
    status, error = "completed", None
    uniform = {"F_Linf_max": 0.0, "velocity_L2_max": 0.0, "velocity_bound_max": 0.0}
    mass = float(np.abs(model.mollifier.mass()))

    def track(s: CoupledState, row: Dict[str, float]):
        uniform["F_Linf_max"] = max(uniform["F_Linf_max"], row["F_Linf"])
        uniform["velocity_L2_max"] = max(uniform["velocity_L2_max"], row["velocity_L2"])
        uniform["velocity_bound_max"] = max(uniform["velocity_bound_max"], mass * s.raw_velocity_l2)

    writer = DiagnosticsWriter(out_dir / DIAGNOSTICS_CSV)
    try:
        row = diagnostics_row(model, state, F_means0, dt, 0.0, float("nan"))
        writer.write(row)
        track(state, row)
        if cfg.output.snapshots:
            _write_state_snapshot(model, state, out_dir, 0)

        bar = tqdm(range(1, steps + 1), desc=cfg.name, unit="step", disable=not progress)
        for i in bar:
            state, info = step_adaptive(model, state, dt)
            # substeps can leave t off the grid by rounding
            state.t = i * dt
            state.boundary = state.boundary.model_copy(update={"t": state.t})
            substeps += info.substeps - 1
            picard_ratios.extend(info.ratios)
            history.append((state.boundary, state.forcing))
            if info.substeps > 1:
                tqdm.write(f"⚠️  t={state.t:.4g}: step split into {info.substeps} substeps")

            if i % cfg.output.every == 0 or i == steps:
                residual, _ = ledger_terms(history)
                row = diagnostics_row(model, state, F_means0, dt, float(residual[-1]),
                                      info.max_ratio)
                writer.write(row)
                track(state, row)
                if debug:
                    tqdm.write(f"[DEBUG] t={state.t:.4g} |F|inf={row['F_Linf']:.6g} "
                               f"|theta|={row['theta_L2']:.6g} E={row['psi_energy']:.6g}")
            if cfg.output.snapshots and i % cfg.output.snapshot_every == 0:
                _write_state_snapshot(model, state, out_dir, i)
    except QGSimError as e:
        status, error = "aborted", str(e)
        raise
    finally:
        writer.close()
        violation = ledger_violation(history)
        checks = evaluate_checks(writer.rows, model.periodic, violation,
                                 dissipative=True) if writer.rows else []
        summary = {
            "name": cfg.name,
            "status": status,
            "error": error,
            "config": cfg.model_dump(),
            "model": {
                "a": cfg.a, "alpha": model.alpha, "nu": model.nu,
                "kappa": model.profile.kappa, "kappa_ext": model.kappa,
                "M": model.zgrid.M, "z_max": model.zgrid.z_max, "n": model.basis.n,
                "mesh_tol": model.ext.mesh_tol, "transport_shape": list(model.grid.shape),
                "dt": dt, "steps": steps, "extra_substeps": substeps,
            },
            "admissible_set": admissible_set,
            "final": writer.rows[-1] if writer.rows else {},
            "checks": checks,
            "ledger_min_relative": violation,
            "picard": {
                "enabled": cfg.picard.enabled,
                "max_ratio": max(picard_ratios) if picard_ratios else None,
                "mean_ratio": float(np.mean(picard_ratios)) if picard_ratios else None,
                "contracting_dt": dt if picard_ratios and max(picard_ratios) < 1 else None,
            },
            "uniform_bounds": dict(uniform, mollifier_mass=mass,
                                   holds=uniform["velocity_L2_max"]
                                   <= uniform["velocity_bound_max"] * (1 + 1e-12) + LINF_TOL),
            "wall_time_s": time.time() - t0,
        }
        write_summary(out_dir / SUMMARY_JSON, summary)

    return RunResult(state, writer.rows, summary, out_dir)


# ── Refinement study ──────────────────────────────────────────────────────────

def refinement_study(cfg: SimConfig, ns: Sequence[int], out_dir: Optional[Path] = None,
                     debug: bool = False) -> Dict:
    """
    Run one scenario at several cutoffs and compare ‖θ‖_{L²}(t) between
    successive n on the coarsest run's output times.
    """
    ns = sorted(set(int(n) for n in ns))
    if len(ns) < 2:
        raise ValueError("a refinement study needs at least two values of n")
    base = Path(out_dir) if out_dir is not None else Path(cfg.output.dir) / f"{cfg.name}_refine"
    series = {}
    for n in ns:
        sub = cfg.model_copy(update={"n": n, "domain": cfg.domain.model_copy(update={"n": n}),
                                     "name": f"{cfg.name}_n{n}"})
        print(f"🔍 n={n}")
        result = run(sub, out_dir=base / f"n{n}", debug=debug)
        t = np.array([r["t"] for r in result.rows])
        series[n] = (t, np.array([r["theta_L2"] for r in result.rows]))

    t_ref = series[ns[0]][0]
    table = {"t": t_ref}
    for n in ns:
        table[f"n{n}"] = np.interp(t_ref, *series[n])
    diffs = []
    for lo, hi in zip(ns[:-1], ns[1:]):
        d = np.abs(table[f"n{hi}"] - table[f"n{lo}"])
        table[f"diff_{lo}_{hi}"] = d
        diffs.append({"pair": f"{lo}->{hi}", "max_diff": float(d.max())})
    decreasing = all(b["max_diff"] <= a["max_diff"] for a, b in zip(diffs[:-1], diffs[1:]))

    base.mkdir(parents=True, exist_ok=True)
    keys = list(table)
    rows = np.column_stack([table[k] for k in keys])
    np.savetxt(base / "refinement.csv", rows, delimiter=",", header=",".join(keys), comments="")
    summary = {"ns": ns, "differences": diffs, "decreasing": decreasing}
    write_summary(base / "refinement.json", summary)
    return summary
