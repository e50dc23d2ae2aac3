"""Shuttling-waveform synthesis: sequential box-constrained least squares
over the DC electrode set, plus transverse rotation-rail displacement.

Each frame solves

    min  || A v - b ||^2  +  lambda_s || v - v_warm ||^2
    s.t. |v_i| <= V_max,

where the rows of A pin the three static-field components to zero and the
axial curvature to its target at the frame's well position.  The solver is
a projected-Newton active-set iteration written in-repo; scipy's bounded
least squares is used in the test suite as an independent oracle only.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import trapmodel
from .trapmodel import ChipLayout, Role

# axial curvature giving a ~1 MHz axial well for 171Yb+ (m omega^2 / q)
YB171_1MHZ_CURVATURE = 2.838e-25 * (2 * np.pi * 1e6) ** 2 / 1.602176634e-19


class SolverFailure(RuntimeError):
    """Raised when a frame cannot meet its well contract within bounds."""

    def __init__(self, message: str, frame_index: int | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.frame_index = frame_index
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class WellTarget:
    axial_position: float
    target_axial_curvature: float = YB171_1MHZ_CURVATURE
    field_null: bool = True

    def __post_init__(self) -> None:
        if self.target_axial_curvature <= 0:
            raise ValueError("target_axial_curvature must be > 0")


@dataclass(frozen=True)
class SolverConfig:
    v_max: float = 10.0
    smoothness_weight: float = 1e-3
    field_weight: float = 1.0
    curvature_weight: float = 1.0
    field_scale: float = 1e3  # V/m that maps to unit residual
    convergence_tolerance: float = 1e-10
    max_iterations: int = 200
    position_tolerance: float = 0.1e-6

    def __post_init__(self) -> None:
        if self.v_max < 0:
            raise ValueError("v_max must be >= 0")
        if self.smoothness_weight < 0 or self.field_weight < 0 or self.curvature_weight < 0:
            raise ValueError("weights must be >= 0")


@dataclass(frozen=True)
class Waveform:
    """Ordered voltage frames and the well positions they realize."""

    electrode_names: tuple[str, ...]
    frames: np.ndarray  # (n_frames, n_electrodes)
    positions: np.ndarray  # (n_frames,) target axial positions
    step_size: float
    v_max: float

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=float)
        positions = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "positions", positions)
        if frames.shape[0] != positions.shape[0]:
            raise ValueError("one voltage frame per target position required")
        if frames.shape[1] != len(self.electrode_names):
            raise ValueError("frame width must match electrode count")
        if np.any(np.abs(frames) > self.v_max + 1e-12):
            raise ValueError("frame voltages exceed V_max")
        steps = np.abs(np.diff(positions))
        if steps.size and steps.max() > self.step_size + 1e-12:
            raise ValueError("consecutive positions must differ by <= step_size")

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def start(self) -> float:
        return float(self.positions[0])

    @property
    def end(self) -> float:
        return float(self.positions[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["frame", *self.electrode_names])
        for i, row in enumerate(self.frames):
            writer.writerow([i, *[repr(float(v)) for v in row]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "electrodes": list(self.electrode_names),
                "step_size_m": self.step_size,
                "v_max": self.v_max,
                "positions_m": self.positions.tolist(),
                "frames": self.frames.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Waveform":
        doc = json.loads(text)
        return cls(
            electrode_names=tuple(doc["electrodes"]),
            frames=np.asarray(doc["frames"], dtype=float),
            positions=np.asarray(doc["positions_m"], dtype=float),
            step_size=float(doc["step_size_m"]),
            v_max=float(doc["v_max"]),
        )


def solve_box_least_squares(
    A: np.ndarray,
    b: np.ndarray,
    lam: float,
    warm: np.ndarray,
    bound: float,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> np.ndarray:
    """Projected-Newton active-set solve of the box-constrained problem.

    Minimizes ||A x - b||^2 + lam ||x - warm||^2 over |x_i| <= bound.
    Convergence is declared when the projected gradient's infinity norm
    drops below ``tol`` (scaled by the problem's Hessian magnitude).
    """
    n = A.shape[1]
    H = 2.0 * (A.T @ A + lam * np.eye(n))
    c = -2.0 * (A.T @ b + lam * warm)
    scale = max(np.abs(H).max(), 1.0)
    x = np.clip(warm, -bound, bound)

    for _ in range(max_iter):
        grad = H @ x + c
        at_lo = x <= -bound + 1e-15
        at_hi = x >= bound - 1e-15
        blocked = (at_lo & (grad > 0)) | (at_hi & (grad < 0))
        pg = np.where(blocked, 0.0, grad)
        if np.abs(pg).max() <= tol * scale:
            return x
        free = ~blocked
        # drop free-at-bound variables whose Newton step points back out of
        # the box; otherwise the feasible step length collapses to zero
        d = None
        for _inner in range(free.sum() + 1):
            idx = np.flatnonzero(free)
            Hff = H[np.ix_(idx, idx)]
            try:
                d = np.linalg.solve(Hff, -grad[idx])
            except np.linalg.LinAlgError:
                d = np.linalg.lstsq(Hff, -grad[idx], rcond=None)[0]
            outward = ((x[idx] >= bound - 1e-15) & (d > 0)) | (
                (x[idx] <= -bound + 1e-15) & (d < 0)
            )
            if not outward.any():
                break
            free[idx[outward]] = False
        if d is None or not free.any():
            # every direction blocked; projected gradient already above tol
            raise SolverFailure(
                "box least-squares stalled on the constraint boundary",
                diagnostics={"projected_gradient": float(np.abs(pg).max())},
            )
        idx = np.flatnonzero(free)
        xf = x[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(d > 0, (bound - xf) / d, np.inf)
            dn = np.where(d < 0, (-bound - xf) / d, np.inf)
        alpha = min(1.0, float(np.min(np.minimum(up, dn), initial=1.0)))
        x[idx] = np.clip(xf + alpha * d, -bound, bound)
    raise SolverFailure(
        "box least-squares did not converge",
        diagnostics={"projected_gradient": float(np.abs(pg).max()), "tolerance": tol * scale},
    )


def _frame_system(chip: ChipLayout, target: WellTarget, cfg: SolverConfig, point: np.ndarray):
    """Weighted rows (field components, axial curvature) over DC electrodes."""
    dc_names = chip.dc_names()
    dc_idx = [chip.position_of(n) for n in dc_names]
    rows = []
    rhs = []
    f_w = cfg.field_weight / cfg.field_scale
    c_w = cfg.curvature_weight / target.target_axial_curvature
    field_rows = []
    curv_row = []
    for name in dc_names:
        e = chip.electrode(name)
        field_rows.append(-trapmodel.electrode_basis_gradient(e, point))
        curv_row.append(trapmodel.basis_axial_curvature(e, point))
    field_rows = np.array(field_rows).T  # 3 x n
    curv_row = np.array(curv_row)
    if target.field_null:
        rows.append(f_w * field_rows)
        rhs.extend([0.0, 0.0, 0.0])
    rows.append(c_w * curv_row[None, :])
    rhs.append(c_w * target.target_axial_curvature)
    return np.vstack(rows), np.array(rhs), dc_idx, field_rows, curv_row


def solve_frame(
    chip: ChipLayout,
    target: WellTarget,
    warm_start: np.ndarray | None,
    cfg: SolverConfig,
    frame_index: int | None = None,
) -> np.ndarray:
    """Solve one voltage frame; returns the full per-electrode vector.

    Non-DC electrodes keep their warm-start values (zero by default).  The
    realized well is the on-axis potential minimum; the frame fails if its
    Newton estimate falls outside ``cfg.position_tolerance`` of the target
    or the realized axial curvature is not confining.
    """
    n = len(chip.electrodes)
    if warm_start is None:
        warm_start = np.zeros(n)
    warm_start = np.asarray(warm_start, dtype=float)
    if warm_start.shape != (n,):
        raise ValueError(f"warm start must have length {n}")

    dc_span = [x for name in chip.dc_names() for x in chip.electrode(name).x_extent]
    if not min(dc_span) <= target.axial_position <= max(dc_span):
        raise SolverFailure(
            f"target {target.axial_position * 1e6:.1f} um outside the "
            "electrode-covered axial span",
            frame_index=frame_index,
        )

    z0 = trapmodel.rf_null_height(chip, target.axial_position)
    point = np.array([target.axial_position, 0.0, z0])
    A, b, dc_idx, field_rows, curv_row = _frame_system(chip, target, cfg, point)

    v_dc = solve_box_least_squares(
        A,
        b,
        lam=cfg.smoothness_weight,
        warm=warm_start[dc_idx],
        bound=cfg.v_max,
        tol=cfg.convergence_tolerance,
        max_iter=cfg.max_iterations,
    )

    realized_curv = float(curv_row @ v_dc)
    realized_field = field_rows @ v_dc
    diagnostics = {
        "frame_index": frame_index,
        "target_m": target.axial_position,
        "realized_curvature": realized_curv,
        "realized_field_v_per_m": realized_field.tolist(),
        "max_abs_voltage": float(np.abs(v_dc).max(initial=0.0)),
    }
    if realized_curv <= 0:
        raise SolverFailure(
            "no confining axial curvature reachable within voltage bounds",
            frame_index=frame_index,
            diagnostics=diagnostics,
        )
    offset = abs(realized_field[0]) / realized_curv
    diagnostics["well_offset_m"] = offset
    if offset > cfg.position_tolerance:
        raise SolverFailure(
            f"well position misses target by {offset * 1e6:.3f} um",
            frame_index=frame_index,
            diagnostics=diagnostics,
        )
    out = warm_start.copy()
    out[dc_idx] = v_dc
    return out


def transport_positions(start: float, end: float, step: float) -> np.ndarray:
    """Target grid from start to end: uniform steps plus a short remainder."""
    if step <= 0:
        raise ValueError("step must be > 0")
    span = end - start
    n_full = int(np.floor(abs(span) / step + 1e-9))
    sign = 1.0 if span >= 0 else -1.0
    pts = [start + sign * step * k for k in range(n_full + 1)]
    if abs(pts[-1] - end) > 1e-12:
        pts.append(end)
    return np.array(pts)


def synthesize_waveform(
    chip: ChipLayout,
    start: float,
    end: float,
    step: float,
    cfg: SolverConfig,
    curvature: float = YB171_1MHZ_CURVATURE,
) -> Waveform:
    """Sequential frame solve along the transport span, warm-started frame to frame."""
    positions = transport_positions(start, end, step)
    frames = np.zeros((len(positions), len(chip.electrodes)))
    warm = None
    for i, x in enumerate(positions):
        target = WellTarget(axial_position=float(x), target_axial_curvature=curvature)
        try:
            frames[i] = solve_frame(chip, target, warm, cfg, frame_index=i)
        except SolverFailure as exc:
            raise SolverFailure(
                f"frame {i} at x = {x * 1e6:.2f} um failed: {exc}",
                frame_index=i,
                diagnostics=exc.diagnostics,
            ) from exc
        warm = frames[i]
    return Waveform(
        electrode_names=tuple(chip.names),
        frames=frames,
        positions=positions,
        step_size=step,
        v_max=cfg.v_max,
    )


def apply_rotation_offset(waveform: Waveform, delta_v: float, chip: ChipLayout) -> Waveform:
    """Add +dV to RotationA and -dV to RotationB in every frame."""
    rot_a = chip.role_names(Role.ROTATION_A)
    rot_b = chip.role_names(Role.ROTATION_B)
    if not rot_a or not rot_b:
        raise ValueError("layout is missing a rotation rail role")
    frames = waveform.frames.copy()
    for name in rot_a:
        frames[:, waveform.electrode_names.index(name)] += delta_v
    for name in rot_b:
        frames[:, waveform.electrode_names.index(name)] -= delta_v
    return Waveform(
        electrode_names=waveform.electrode_names,
        frames=frames,
        positions=waveform.positions,
        step_size=waveform.step_size,
        v_max=max(waveform.v_max, float(np.abs(frames).max(initial=0.0))),
    )


def realized_well_position(
    chip: ChipLayout,
    voltages: np.ndarray,
    center: float,
    halfwidth: float = 2e-6,
    resolution: float = 10e-9,
    z: float | None = None,
) -> float:
    """Brute-force 1-D grid scan of the on-axis potential minimum."""
    if z is None:
        z = trapmodel.rf_null_height(chip, center)
    n = int(round(2 * halfwidth / resolution)) + 1
    xs = np.linspace(center - halfwidth, center + halfwidth, n)
    pts = np.stack([xs, np.zeros_like(xs), np.full_like(xs, z)], axis=-1)
    phi = trapmodel.total_potential(chip, voltages, pts)
    return float(xs[int(np.argmin(phi))])
