"""Config-driven experiment runs: scans, tomography, marginals, Wigner maps and
Lindblad simulations, with deterministic shot sampling and result files.

A run is described by one YAML or JSON document; see ``configs/`` for examples.
Physics parameters (grid spacing, squeezing, coefficients, noise rate) have no
defaults. Only numerical knobs (Fock dimension, step counts, scan grids,
padding) do.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .circuit import (
    IDEAL_BLOCH,
    READOUT_STATES,
    TOMOGRAPHY_STATES,
    FOUR_COMPONENT_ONE,
    SequenceRecipe,
    Step,
    prepare_state,
)
from .code import GridParams, LogicalFrame, default_frame, hadamard_frame
from .lindblad import NoiseParams, Timings, simulate_recipe, simulated_readout
from .oscillator import Conventions, char_value
from .phasespace import bootstrap_errors, marginal_from_scan, scan_char, wigner
from .tomography import (
    HADAMARD,
    I2,
    PAULIS,
    ChiFit,
    chi_from_unitary,
    fit_chi,
    logical_readout,
    process_fidelity,
    readout_matrix,
    reconstruct_state,
    stabilizer_readout,
    state_fidelity,
)

FORMATS = ("csv", "json")
SCAN_COLUMNS = ("t", "axis", "re_estimate", "im_estimate", "stderr", "shots",
                "im_stderr", "re_exact", "im_exact")
BOOTSTRAP_RESAMPLES = 200


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""

    def __init__(self, field_path: str, message: str, line: int | None = None):
        self.field = field_path
        self.line = line
        where = f"{field_path}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------- config


def _yaml_lines(text: str) -> dict:
    """Map field paths like ``grid.r`` or ``recipes[2]`` to 1-based line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = f"{path}[{i}]"
                lines[p] = v.start_mark.line + 1
                walk(v, p)

    if root is not None:
        walk(root, "")
    return lines


@dataclass(frozen=True)
class ScanSpec:
    """alpha = t * l_axis for t on a uniform grid."""

    axes: tuple = ("x", "y", "z")
    t_min: float = -1.5
    t_max: float = 1.5
    points: int = 121

    @property
    def t_values(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.points)


@dataclass(frozen=True)
class MarginalSpec:
    """Scan half-widths in units of |alpha| for P(q) (imaginary axis) and P(p)."""

    q_extent: float = 3.0
    p_extent: float = 5.0
    points: int = 241
    pad: int = 8


@dataclass(frozen=True)
class WignerSpec:
    q: tuple = (-3.0, 3.0, 121)
    p: tuple = (-3.0, 3.0, 121)


@dataclass(frozen=True)
class RunConfig:
    grid: GridParams
    recipes: tuple
    frame: LogicalFrame | None = None
    scan: ScanSpec = ScanSpec()
    shots: int = 0
    noise: NoiseParams | None = None
    timings: Timings = Timings()
    readout_dephasing: bool = False
    fock_dim: int = 256
    steps: int = 256
    seed: int = 0
    output_dir: str = "results"
    output_format: str = "csv"
    process: tuple | str | None = None
    marginals: MarginalSpec = MarginalSpec()
    wigner: WignerSpec = WignerSpec()
    workers: int = 1
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def conventions(self) -> Conventions:
        return Conventions(self.fock_dim)

    @property
    def logical_frame(self) -> LogicalFrame:
        return self.frame or default_frame(self.grid)

    def physics_dict(self) -> dict:
        """Everything that can change a result (output location excluded)."""
        d = dict(self.source)
        d.pop("output", None)
        d.pop("workers", None)
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_LIBRARY = {r.name: r for r in TOMOGRAPHY_STATES + (FOUR_COMPONENT_ONE,)}
_LIBRARY.update({f"readout:{r.name}": r for r in READOUT_STATES})

_TOP_KEYS = {"grid", "frame", "recipes", "scan", "shots", "noise", "timings",
             "readout_dephasing", "fock_dim", "steps", "seed", "output", "process",
             "marginals", "wigner", "workers"}


def _number(d, key, path, lines, kind=float, required=False, default=None, low=None):
    p = f"{path}.{key}" if path else key
    if key not in d:
        if required:
            raise ConfigError(p, "required field is missing", lines.get(path) if path else None)
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(p, f"expected a number, got {val!r}", lines.get(p))
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(p, f"expected an integer, got {val!r}", lines.get(p))
        val = int(val)
    else:
        val = float(val)
    if low is not None and val < low:
        raise ConfigError(p, f"must be >= {low}, got {val}", lines.get(p))
    return val


def _section(d, key, lines, required=False):
    if key not in d:
        if required:
            raise ConfigError(key, "required section is missing")
        return None
    sec = d[key]
    if not isinstance(sec, dict):
        raise ConfigError(key, f"expected a mapping, got {type(sec).__name__}", lines.get(key))
    return sec


def _complex(val, p, lines):
    if isinstance(val, (list, tuple)) and len(val) == 2:
        return complex(float(val[0]), float(val[1]))
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return complex(val)
    raise ConfigError(p, "expected [re, im]", lines.get(p))


def _recipe(item, i, lines):
    p = f"recipes[{i}]"
    if isinstance(item, str):
        if item not in _LIBRARY:
            raise ConfigError(p, f"unknown recipe {item!r}; known: {sorted(_LIBRARY)}", lines.get(p))
        return _LIBRARY[item]
    if isinstance(item, dict):
        try:
            return SequenceRecipe.from_dict(item)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(p, f"invalid inline recipe: {exc}", lines.get(p)) from None
    raise ConfigError(p, "expected a recipe name or a {name, steps} mapping", lines.get(p))


def _process(val, lines):
    if val is None:
        return None
    if isinstance(val, str):
        if val not in ("identity", "hadamard_relabel", "hadamard_rotation"):
            raise ConfigError("process", f"unknown process {val!r}", lines.get("process"))
        return val
    if isinstance(val, list):
        steps = []
        for i, s in enumerate(val):
            p = f"process[{i}]"
            try:
                st = Step.from_dict(s)
            except (TypeError, ValueError) as exc:
                raise ConfigError(p, str(exc), lines.get(p)) from None
            if st.kind not in ("pauli", "teleport"):
                raise ConfigError(p, "process steps must be 'pauli' or 'teleport'", lines.get(p))
            steps.append(st)
        return tuple(steps)
    raise ConfigError("process", "expected a name or a list of steps", lines.get("process"))


def config_from_dict(d: dict, lines: dict | None = None) -> RunConfig:
    lines = lines or {}
    if not isinstance(d, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(k, "unknown field", lines.get(k))

    g = _section(d, "grid", lines, required=True)
    l = _number(g, "l", "grid", lines, required=True)
    r = _number(g, "r", "grid", lines, required=True, low=0.0)
    if "coefficients" not in g:
        raise ConfigError("grid.coefficients", "required field is missing", lines.get("grid"))
    coeffs = g["coefficients"]
    if not isinstance(coeffs, dict) or not coeffs:
        raise ConfigError("grid.coefficients", "expected a non-empty {k: c_k} mapping",
                          lines.get("grid.coefficients"))
    try:
        grid = GridParams(l, r, {int(k): float(v) for k, v in coeffs.items()})
    except ValueError as exc:
        raise ConfigError("grid", str(exc), lines.get("grid")) from None

    frame = None
    fsec = _section(d, "frame", lines)
    if fsec is not None:
        try:
            frame = LogicalFrame(_complex(fsec.get("l_x"), "frame.l_x", lines),
                                 _complex(fsec.get("l_z"), "frame.l_z", lines))
        except ValueError as exc:
            raise ConfigError("frame", str(exc), lines.get("frame")) from None

    recs = d.get("recipes")
    if not isinstance(recs, list) or not recs:
        raise ConfigError("recipes", "need a non-empty list of recipes", lines.get("recipes"))
    recipes = tuple(_recipe(item, i, lines) for i, item in enumerate(recs))

    scan = ScanSpec()
    ssec = _section(d, "scan", lines)
    if ssec is not None:
        axes = ssec.get("axes", list(scan.axes))
        if not isinstance(axes, list) or not axes or any(a not in ("x", "y", "z") for a in axes):
            raise ConfigError("scan.axes", "expected a list drawn from x, y, z",
                              lines.get("scan.axes"))
        t_min = _number(ssec, "t_min", "scan", lines, default=scan.t_min)
        t_max = _number(ssec, "t_max", "scan", lines, default=scan.t_max)
        if not t_max > t_min:
            raise ConfigError("scan.t_max", "must exceed t_min", lines.get("scan.t_max"))
        points = _number(ssec, "points", "scan", lines, kind=int, default=scan.points, low=2)
        scan = ScanSpec(tuple(axes), t_min, t_max, points)

    noise = None
    nsec = _section(d, "noise", lines)
    if nsec is not None:
        noise = NoiseParams(_number(nsec, "gamma", "noise", lines, required=True, low=0.0))

    timings = Timings()
    tsec = _section(d, "timings", lines)
    if tsec is not None:
        kw = {}
        for k in ("sdf_per_l", "carrier", "displacement", "wait"):
            v = _number(tsec, k, "timings", lines, low=0.0)
            if v is not None:
                kw[k] = v
        extra = set(tsec) - {"sdf_per_l", "carrier", "displacement", "wait"}
        if extra:
            k = sorted(extra)[0]
            raise ConfigError(f"timings.{k}", "unknown field", lines.get(f"timings.{k}"))
        timings = Timings(**kw)

    msec = _section(d, "marginals", lines)
    marg = MarginalSpec()
    if msec is not None:
        marg = MarginalSpec(
            _number(msec, "q_extent", "marginals", lines, default=marg.q_extent, low=0.0),
            _number(msec, "p_extent", "marginals", lines, default=marg.p_extent, low=0.0),
            _number(msec, "points", "marginals", lines, kind=int, default=marg.points, low=3),
            _number(msec, "pad", "marginals", lines, kind=int, default=marg.pad, low=1),
        )

    wsec = _section(d, "wigner", lines)
    wig = WignerSpec()
    if wsec is not None:
        axes = {}
        for k in ("q", "p"):
            v = wsec.get(k, list(getattr(wig, k)))
            if not (isinstance(v, list) and len(v) == 3 and v[1] > v[0] and int(v[2]) >= 2):
                raise ConfigError(f"wigner.{k}", "expected [min, max, points]",
                                  lines.get(f"wigner.{k}"))
            axes[k] = (float(v[0]), float(v[1]), int(v[2]))
        wig = WignerSpec(**axes)

    osec = _section(d, "output", lines) or {}
    fmt = osec.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError("output.format", f"unknown format {fmt!r}", lines.get("output.format"))

    rd = d.get("readout_dephasing", False)
    if not isinstance(rd, bool):
        raise ConfigError("readout_dephasing", "expected true or false",
                          lines.get("readout_dephasing"))

    return RunConfig(
        grid=grid,
        recipes=recipes,
        frame=frame,
        scan=scan,
        shots=_number(d, "shots", "", lines, kind=int, default=0, low=0),
        noise=noise,
        timings=timings,
        readout_dephasing=rd,
        fock_dim=_number(d, "fock_dim", "", lines, kind=int, default=256, low=8),
        steps=_number(d, "steps", "", lines, kind=int, default=256, low=2),
        seed=_number(d, "seed", "", lines, kind=int, default=0, low=0),
        output_dir=str(osec.get("dir", "results")),
        output_format=fmt,
        process=_process(d.get("process"), lines),
        marginals=marg,
        wigner=wig,
        workers=_number(d, "workers", "", lines, kind=int, default=1, low=1),
        source=json.loads(json.dumps(d)),
    )


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a YAML or JSON run document, apply CLI overrides, validate."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data, lines = json.loads(text), {}
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError("<document>", str(exc).splitlines()[0],
                              mark.line + 1 if mark else None) from None
        lines = _yaml_lines(text)
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data, lines)


def apply_overrides(data: dict, overrides: dict) -> dict:
    data = json.loads(json.dumps(data))
    for key, val in overrides.items():
        if val is None:
            continue
        if key == "noise":
            data["noise"] = {"gamma": val}
        elif key == "out":
            data.setdefault("output", {})["dir"] = val
        elif key == "format":
            data.setdefault("output", {})["format"] = val
        else:
            data[key] = val
    return data


# ---------------------------------------------------------------- results


@dataclass
class ResultTable:
    """One output file: a name, column names, rows and header metadata."""

    name: str
    columns: tuple
    rows: list
    metadata: dict = field(default_factory=dict)


@dataclass
class ResultSet:
    tables: list
    metadata: dict
    summary: dict = field(default_factory=dict)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _round(x):
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.12g}")
    if isinstance(x, np.integer):
        return int(x)
    return x


def emit_results(results: ResultSet, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """Write one file per table. Floats carry 12 significant digits and every
    file starts with the config hash and code version."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown output format {fmt!r}; choose from {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for table in results.tables:
        meta = {**results.metadata, **table.metadata}
        path = out / f"{table.name}.{fmt}"
        if fmt == "csv":
            buf = io.StringIO()
            for k in sorted(meta):
                buf.write(f"# {k}: {_fmt(meta[k])}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(table.columns)
            for row in table.rows:
                w.writerow([_fmt(v) for v in row])
            path.write_text(buf.getvalue())
        else:
            doc = {"metadata": {k: _round(v) for k, v in sorted(meta.items())},
                   "columns": list(table.columns),
                   "rows": [[_round(v) for v in row] for row in table.rows]}
            path.write_text(json.dumps(doc, indent=1) + "\n")
        paths.append(path)
    if results.summary:
        spath = out / f"summary.{fmt}" if fmt == "json" else out / "summary.json"
        spath.write_text(json.dumps(_jsonable({**results.metadata, **results.summary}),
                                    indent=1, sort_keys=True) + "\n")
        paths.append(spath)
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_round(float(obj.real)), _round(float(obj.imag))]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return _round(obj)


def read_table(path: str | Path) -> ResultTable:
    """Parse a file written by :func:`emit_results`."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(text)
        return ResultTable(path.stem, tuple(doc["columns"]), [list(r) for r in doc["rows"]],
                           doc["metadata"])
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    cols, data = tuple(rows[0]), []
    for row in rows[1:]:
        parsed = []
        for v in row:
            try:
                parsed.append(int(v) if v.lstrip("-").isdigit() else float(v))
            except ValueError:
                parsed.append(v)
        data.append(parsed)
    return ResultTable(path.stem, cols, data, meta)


# ---------------------------------------------------------------- runs


def _metadata(config: RunConfig, kind: str) -> dict:
    return {"config_hash": config.config_hash, "code_version": __version__, "run": kind,
            "seed": config.seed}


@dataclass(frozen=True)
class PreparedState:
    name: str
    rho: np.ndarray  # pure vector or density matrix
    success_probability: float
    branch_probabilities: tuple


def prepare_states(config: RunConfig) -> list[PreparedState]:
    """Prepare every configured recipe, with Lindblad dephasing if noise is set."""
    conv = config.conventions
    out = []
    for rec in config.recipes:
        if config.noise is not None:
            res = simulate_recipe(rec, config.grid, config.noise, conv, config.timings,
                                  config.frame, steps=config.steps)
            out.append(PreparedState(rec.name, res.rho, res.success_probability, ()))
        else:
            prep = prepare_state(rec, config.grid, conv, config.frame)
            out.append(PreparedState(rec.name, prep.state, prep.success_probability,
                                     prep.branch_probabilities))
    return out


def _exact_readout(config: RunConfig, rho, alpha: complex) -> complex:
    if config.noise is not None and config.readout_dephasing:
        re = simulated_readout(rho, alpha, config.noise, config.timings, False, config.steps)
        im = simulated_readout(rho, alpha, config.noise, config.timings, True, config.steps)
        return complex(re, im)
    return char_value(rho, alpha)


def sample_yield(p: float, successes: int, rng: np.random.Generator) -> dict:
    """Attempts needed for ``successes`` post-selected shots at success rate p.
    Failed attempts are counted and retried."""
    if successes == 0:
        return {"attempts": 0, "successes": 0, "estimate": float("nan"), "exact": p}
    if p <= 0:
        raise RuntimeError("post-selection can never succeed (p = 0)")
    failures = int(rng.negative_binomial(successes, p))
    attempts = successes + failures
    return {"attempts": attempts, "successes": successes, "estimate": successes / attempts,
            "exact": p}


def _scan_task(config, state, axis, seed_seq):
    rng = np.random.default_rng(seed_seq)
    direction = config.logical_frame.direction(axis)
    rows = []
    dark_re, dark_im = [], []
    exacts = []
    for t in config.scan.t_values:
        ex = _exact_readout(config, state.rho, t * direction)
        exacts.append(ex)
        if config.shots > 0:
            pr = min(max((1 + ex.real) / 2, 0.0), 1.0)
            pi = min(max((1 + ex.imag) / 2, 0.0), 1.0)
            dark_re.append((int(rng.binomial(config.shots, pr)), config.shots))
            dark_im.append((int(rng.binomial(config.shots, pi)), config.shots))
    if config.shots > 0:
        se_re = 2 * bootstrap_errors(dark_re, BOOTSTRAP_RESAMPLES, rng)
        se_im = 2 * bootstrap_errors(dark_im, BOOTSTRAP_RESAMPLES, rng)
    for i, (t, ex) in enumerate(zip(config.scan.t_values, exacts)):
        if config.shots > 0:
            re = 2 * dark_re[i][0] / config.shots - 1
            im = 2 * dark_im[i][0] / config.shots - 1
            rows.append([float(t), axis, re, im, float(se_re[i]), config.shots,
                         float(se_im[i]), ex.real, ex.imag])
        else:
            rows.append([float(t), axis, ex.real, ex.imag, 0.0, 0, 0.0, ex.real, ex.imag])
    return ResultTable(f"scan_{_safe(state.name)}_{axis}", SCAN_COLUMNS, rows,
                       {"state": state.name, "axis": axis})


def _safe(name: str) -> str:
    return (name.replace("+", "plus").replace("-", "minus").replace(":", "_")
            .replace("/", "_").replace(" ", "_"))


def run_scan(config: RunConfig) -> ResultSet:
    """Readout curves Re/Im <D(t l_axis)> for every state and axis.

    With ``shots > 0`` each point also gets binomially sampled dark counts for
    the real and imaginary circuits (``shots`` each) and bootstrap error bars.
    Every state x axis pair has its own child seed, so results do not depend on
    the number of workers.
    """
    states = prepare_states(config)
    seeds = np.random.SeedSequence(config.seed).spawn(len(states) * len(config.scan.axes) + 1)
    jobs = [(s, a, seeds[i * len(config.scan.axes) + j])
            for i, s in enumerate(states) for j, a in enumerate(config.scan.axes)]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        tables = list(pool.map(lambda job: _scan_task(config, *job), jobs))
    summary = {"yields": {}}
    yrng = np.random.default_rng(seeds[-1])
    per_state = 2 * config.shots * config.scan.points * len(config.scan.axes)
    for s in states:
        summary["yields"][s.name] = sample_yield(s.success_probability, per_state, yrng)
    return ResultSet(tables, _metadata(config, "scan"), summary)


def _readouts(config: RunConfig, rho, frame: LogicalFrame, rng) -> np.ndarray:
    """(x, y, z) Pauli readouts, sampled if ``shots > 0``."""
    vals = np.array(logical_readout(rho, frame))
    if config.shots > 0:
        p = np.clip((1 + vals) / 2, 0, 1)
        vals = 2 * rng.binomial(config.shots, p) / config.shots - 1
    return vals


def run_state_tomography(config: RunConfig) -> ResultSet:
    """Bloch vectors, stabilizers and fidelities of the configured states."""
    rng = np.random.default_rng(config.seed)
    frame = config.logical_frame
    rows = []
    for s in prepare_states(config):
        x, y, z = _readouts(config, s.rho, frame, rng)
        sx, sz = stabilizer_readout(s.rho, frame)
        st = reconstruct_state(x, y, z)
        ideal = IDEAL_BLOCH.get(s.name.removeprefix("readout:"))
        fid = state_fidelity(st, ideal) if ideal is not None else float("nan")
        rows.append([s.name, x, y, z, sx, sz, st.bloch_length, fid, s.success_probability])
    cols = ("state", "x", "y", "z", "sx", "sz", "bloch_length", "fidelity", "yield")
    arr = np.array([r[1:] for r in rows], dtype=float)
    summary = {"mean_sx": float(arr[:, 3].mean()), "mean_sz": float(arr[:, 4].mean()),
               "mean_fidelity": float(np.nanmean(arr[:, 6]))}
    return ResultSet([ResultTable("state_tomography", cols, rows)],
                     _metadata(config, "tomography-state"), summary)


def run_prepare(config: RunConfig) -> ResultSet:
    """Post-selection yields per recipe, measured by retrying failed shots."""
    rng = np.random.default_rng(config.seed)
    rows = []
    for s in prepare_states(config):
        y = sample_yield(s.success_probability, config.shots, rng)
        branches = ";".join(f"{d:.6f}" for d, _ in s.branch_probabilities)
        rows.append([s.name, s.success_probability, y["attempts"], y["successes"],
                     y["estimate"], branches])
    cols = ("state", "yield_exact", "attempts", "successes", "yield_sampled", "dark_probabilities")
    return ResultSet([ResultTable("prepare", cols, rows)], _metadata(config, "prepare"))


def ideal_process_unitary(process) -> np.ndarray | None:
    """Ideal logical operator of a process, or None if it is not unitary."""
    if process is None or process == "identity":
        return I2
    if process in ("hadamard_relabel", "hadamard_rotation"):
        return HADAMARD
    U = I2
    for st in process:
        if st.kind == "pauli":
            op = PAULIS["ixyz".index(st.axis)]
        else:
            if abs(st.theta - math.pi / 2) > 1e-12:
                return None
            ev = np.linalg.eigh(PAULIS["ixyz".index(st.axis)])[1]
            minus, plus = ev[:, 0], ev[:, 1]
            op = (np.outer(plus, plus.conj()) + np.exp(1j * st.phi) * np.outer(minus, minus.conj()))
        U = op @ U
    return U


@dataclass
class ProcessResult:
    fit: ChiFit
    fidelity: float | None
    normalized_fit: ChiFit
    normalized_fidelity: float | None
    o: np.ndarray
    lam: np.ndarray
    ideal: np.ndarray | None


def _unit_rows(bloch: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(bloch, axis=1, keepdims=True)
    return bloch / np.where(n > 0, n, 1)


def run_process_tomography(config: RunConfig, process=None) -> ProcessResult:
    """Process matrix of ``process`` acting on the six tomography input states.

    ``process`` is ``"identity"``, ``"hadamard_relabel"`` (the readout results
    permuted as X -> Z, Y -> -Y, Z -> X), ``"hadamard_rotation"`` (outputs read
    in the pi/2-rotated frame) or a tuple of pauli/teleport steps appended to
    every input recipe. Reports the raw fit and a fit on Bloch vectors scaled
    to unit length, which removes the finite-squeezing readout contrast.
    """
    process = config.process if process is None else process
    if isinstance(process, list):
        process = tuple(process)
    rng = np.random.default_rng(config.seed)
    frame = config.logical_frame
    base = TOMOGRAPHY_STATES
    cfg_in = _with_recipes(config, base)
    ins = prepare_states(cfg_in)
    o_bloch = np.array([_readouts(config, s.rho, frame, rng) for s in ins])
    if process in (None, "identity"):
        out_bloch = np.array([_readouts(config, s.rho, frame, rng) for s in ins])
    elif process == "hadamard_relabel":
        out_bloch = o_bloch[:, [2, 1, 0]] * np.array([1, -1, 1])
    elif process == "hadamard_rotation":
        hf = hadamard_frame(frame)
        out_bloch = np.array([_readouts(config, s.rho, hf, rng) for s in ins])
    else:
        outs = prepare_states(_with_recipes(config, tuple(r.then(*process) for r in base)))
        out_bloch = np.array([_readouts(config, s.rho, frame, rng) for s in outs])
    o = readout_matrix(o_bloch)
    lam = out_bloch / 2
    fit = fit_chi(o, lam, seed=config.seed)
    nfit = fit_chi(readout_matrix(_unit_rows(o_bloch)), _unit_rows(out_bloch) / 2,
                   seed=config.seed)
    U = ideal_process_unitary(process)
    ideal = chi_from_unitary(U) if U is not None else None
    f = process_fidelity(fit.chi, ideal) if ideal is not None else None
    nf = process_fidelity(nfit.chi, ideal) if ideal is not None else None
    return ProcessResult(fit, f, nfit, nf, o, lam, ideal)


def _with_recipes(config: RunConfig, recipes) -> RunConfig:
    return replace(config, recipes=tuple(recipes))


def process_results(config: RunConfig, res: ProcessResult) -> ResultSet:
    rows = []
    for label, chi in (("fit", res.fit.chi), ("normalized", res.normalized_fit.chi)):
        for m in range(4):
            for n in range(4):
                rows.append([label, "IXYZ"[m], "IXYZ"[n], chi[m, n].real, chi[m, n].imag])
    summary = {"fidelity": res.fidelity, "normalized_fidelity": res.normalized_fidelity,
               "objective": res.fit.objective, "converged": res.fit.converged,
               "constraint_residual": res.fit.constraint_residual}
    return ResultSet([ResultTable("chi", ("fit", "row", "col", "re", "im"), rows)],
                     _metadata(config, "tomography-process"), summary)


def run_marginals(config: RunConfig) -> ResultSet:
    """P(q) and P(p) of each state by DFT of exact characteristic-function scans."""
    ms = config.marginals
    tables = []
    summary = {}
    for s in prepare_states(config):
        for coord, axis, ext in (("q", 1j, ms.q_extent), ("p", 1.0, ms.p_extent)):
            t = np.linspace(-ext, ext, ms.points)
            m = marginal_from_scan(scan_char(s.rho, axis, t), coord, ms.pad)
            keep = np.abs(m.grid) <= 2 * max(ms.q_extent, ms.p_extent)
            rows = [[float(x), float(v)] for x, v in zip(m.grid[keep], m.density[keep])]
            tables.append(ResultTable(f"marginal_{_safe(s.name)}_{coord}", (coord, "density"),
                                      rows, {"state": s.name, "flags": ",".join(m.flags)}))
            summary[f"{s.name}:{coord}"] = {"integral": m.integral, "variance": m.variance(),
                                             "flags": list(m.flags)}
    return ResultSet(tables, _metadata(config, "marginals"), summary)


def run_wigner(config: RunConfig) -> ResultSet:
    q = np.linspace(*config.wigner.q)
    p = np.linspace(*config.wigner.p)
    tables = []
    for s in prepare_states(config):
        W = wigner(s.rho, q, p)
        rows = [[float(qi), float(pj), float(W[i, j])]
                for i, qi in enumerate(q) for j, pj in enumerate(p)]
        tables.append(ResultTable(f"wigner_{_safe(s.name)}", ("q", "p", "w"), rows,
                                  {"state": s.name}))
    return ResultSet(tables, _metadata(config, "wigner"))


def run_simulation(config: RunConfig) -> ResultSet:
    """Lindblad run of each recipe; the stabilizers and readouts of the result."""
    if config.noise is None:
        config = _with_noise(config, NoiseParams(0.0))
    frame = config.logical_frame
    rows = []
    for s in prepare_states(config):
        sx, sz = stabilizer_readout(s.rho, frame)
        x, y, z = logical_readout(s.rho, frame)
        if config.readout_dephasing:
            sx = simulated_readout(s.rho, frame.l_x, config.noise, config.timings, False, config.steps)
            sz = simulated_readout(s.rho, frame.l_z, config.noise, config.timings, False, config.steps)
        rows.append([s.name, sx, sz, x, y, z, s.success_probability])
    arr = np.array([r[1:] for r in rows], dtype=float)
    summary = {"gamma": config.noise.gamma, "mean_sx": float(arr[:, 0].mean()),
               "mean_sz": float(arr[:, 1].mean())}
    return ResultSet([ResultTable("simulation", ("state", "sx", "sz", "x", "y", "z", "yield"),
                                  rows)], _metadata(config, "simulate"), summary)


def _with_noise(config: RunConfig, noise: NoiseParams) -> RunConfig:
    return replace(config, noise=noise)
