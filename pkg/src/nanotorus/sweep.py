"""Parameter sweeps: configuration, batch execution, CSV output and analysis.

Configuration is flat ``key = value`` text.  Lists are comma separated and
``start:stop:step`` expands to an inclusive range::

    # field scan for the back-to-back configuration
    outputs = transmission, current
    b = 0:2:0.5
    alpha = 180
    v_sd = 0.05, 0.1

Every table shares one column layout (see ``COLUMNS``); cells that do not
apply to a table are left empty.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .constants import CONSTANTS_VERSION
from .device import Device, DeviceConfig
from .lattice import build_torus, geometry_echo, place_leads, placement_echo
from .observables import BiasConfig, EnergyGrid, FluxConvention, current, flux_ratio

log = logging.getLogger(__name__)

COLUMNS = ("E_eV", "B_T", "alpha_deg", "t_hop_eV", "V_sd_eV", "T", "D_total", "I_over_e_h")
TABLES = ("dos", "transmission", "current", "flux_scan", "angle_scan")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_SOLVER = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class SweepSpec:
    """A full sweep: grids, parameter lists and requested tables.

    ``scan_energies`` are the fixed energies of the angle scan; the other
    tables use ``grid``.
    """

    grid: EnergyGrid = field(default_factory=EnergyGrid)
    b_list: tuple[float, ...] = (0.0,)
    alpha_list: tuple[float, ...] = (180.0,)
    t_hop_list: tuple[float, ...] = (-0.25,)
    bias_list: tuple[float, ...] = (0.1,)
    outputs: tuple[str, ...] = ("transmission",)
    scan_energies: tuple[float, ...] = (0.01,)
    device: DeviceConfig = field(default_factory=DeviceConfig)
    kT: float = 0.030
    margin_kT: float = 5.0
    flux: FluxConvention = field(default_factory=FluxConvention)
    plateau_tol: float = 0.25
    plateau_min_steps: int = 5

    def __post_init__(self):
        bad = [o for o in self.outputs if o not in TABLES]
        if bad:
            raise ConfigError(f"unknown output table(s) {bad}; choose from {TABLES}")
        if not self.outputs:
            raise ConfigError("no output tables requested")
        needed = {"b_list": self.b_list, "alpha_list": self.alpha_list,
                  "t_hop_list": self.t_hop_list}
        if {"current", "flux_scan"} & set(self.outputs):
            needed["bias_list"] = self.bias_list
        if "angle_scan" in self.outputs:
            needed["scan_energies"] = self.scan_energies
        for name, values in needed.items():
            if len(values) == 0:
                raise ConfigError(f"{name} is empty")
        n = self.device.geometry.n_layers
        for a in self.alpha_list:
            if round(a / (360.0 / n)) % n == 0:
                raise ConfigError(f"alpha={a} puts both leads on the same layer")

    def parameter_tuples(self) -> list[tuple[float, float, float]]:
        """Sorted, de-duplicated (B, alpha, t_hop) tuples."""
        return sorted({(float(b), float(a), float(t)) for b in self.b_list
                       for a in self.alpha_list for t in self.t_hop_list})


def _parse_list(text: str, key: str) -> tuple[float, ...]:
    values: list[float] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            if ":" in item:
                parts = [float(p) for p in item.split(":")]
                if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                    raise ValueError
                start, stop, step = parts
                count = int(math.floor((stop - start) / step + 1e-9)) + 1
                values += [float(f"{start + k * step:.12g}") for k in range(count)]
            else:
                values.append(float(item))
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {item!r}") from None
    return tuple(values)


def _scalar(text: str, key: str, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {text!r}") from None


# config key -> (section, attribute, type)
_SCALARS = {
    "e_min": ("grid", "e_min", float),
    "e_max": ("grid", "e_max", float),
    "e_step": ("grid", "step", float),
    "n_layers": ("geometry", "n_layers", int),
    "major_radius": ("geometry", "major_radius", float),
    "minor_radius": ("geometry", "minor_radius", float),
    "v_device": ("hopping", "v_device", float),
    "onsite": ("hopping", "onsite", float),
    "fermi_energy": ("lead", "fermi_energy", float),
    "lead_spacing": ("lead", "spacing", float),
    "lead_width_y": ("lead", "width_y", float),
    "lead_width_z": ("lead", "width_z", float),
    "mode_cutoff": ("lead", "mode_cutoff", int),
    "eta": ("device", "eta", float),
    "kT": ("sweep", "kT", float),
    "margin_kT": ("sweep", "margin_kT", float),
    "b_per_phi0": ("flux", "b_per_phi0", float),
    "plateau_tol": ("sweep", "plateau_tol", float),
    "plateau_min_steps": ("sweep", "plateau_min_steps", int),
}
_LISTS = {"b": "b_list", "alpha": "alpha_list", "t_hop": "t_hop_list",
          "v_sd": "bias_list", "scan_energy": "scan_energies"}


def parse_config(text: str, base: SweepSpec | None = None) -> SweepSpec:
    """Build a :class:`SweepSpec` from flat ``key = value`` text."""
    sections: dict[str, dict] = {k: {} for k in
                                 ("grid", "geometry", "hopping", "lead", "device", "sweep", "flux")}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key in _LISTS:
            sections["sweep"][_LISTS[key]] = _parse_list(value, key)
        elif key == "outputs":
            sections["sweep"]["outputs"] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key in _SCALARS:
            sec, attr, kind = _SCALARS[key]
            sections[sec][attr] = _scalar(value, key, kind)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    base = base or SweepSpec()
    try:
        dev = base.device
        dev = replace(
            dev,
            geometry=replace(dev.geometry, **sections["geometry"]),
            hopping=replace(dev.hopping, **sections["hopping"]),
            lead=replace(dev.lead, **sections["lead"]),
            **sections["device"],
        )
        return replace(
            base,
            grid=replace(base.grid, **sections["grid"]),
            device=dev,
            flux=replace(base.flux, **sections["flux"]),
            **sections["sweep"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> SweepSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def config_echo(spec: SweepSpec) -> list[str]:
    """key=value lines with every realised parameter."""
    d = spec.device
    lead = d.lead
    lines = [
        f"constants_version={CONSTANTS_VERSION}",
        f"outputs={','.join(spec.outputs)}",
        f"e_min={spec.grid.e_min!r}", f"e_max={spec.grid.e_max!r}",
        f"e_step={spec.grid.step!r}", f"n_energies={spec.grid.n_points}",
        "b=" + ",".join(repr(v) for v in spec.b_list),
        "alpha=" + ",".join(repr(v) for v in spec.alpha_list),
        "t_hop=" + ",".join(repr(v) for v in spec.t_hop_list),
        "v_sd=" + ",".join(repr(v) for v in spec.bias_list),
        "scan_energy=" + ",".join(repr(v) for v in spec.scan_energies),
        f"kT={spec.kT!r}", f"margin_kT={spec.margin_kT!r}",
        f"b_per_phi0={spec.flux.b_per_phi0!r}",
        f"plateau_tol={spec.plateau_tol!r}", f"plateau_min_steps={spec.plateau_min_steps}",
        f"eta={d.eta!r}",
        f"v_device={d.hopping.v_device!r}", f"onsite={d.hopping.onsite!r}",
        f"fermi_energy={lead.fermi_energy!r}", f"lead_spacing={lead.spacing!r}",
        f"lead_width_y={lead.width_y!r}", f"lead_width_z={lead.width_z!r}",
        f"mode_cutoff={lead.cutoff_y},{lead.cutoff_z}",
        f"lead_hopping={lead.hopping!r}",
    ]
    return lines


# ---------------------------------------------------------------------------
# execution

@dataclass
class TupleResult:
    key: tuple[float, float, float]
    alpha_realized: float | None = None
    T: np.ndarray | None = None
    D: np.ndarray | None = None
    currents: dict | None = None
    scan_T: np.ndarray | None = None
    error: str | None = None
    hard: bool = False


def _run_tuple(spec: SweepSpec, key) -> TupleResult:
    b, alpha, t_hop = key
    res = TupleResult(key)
    try:
        dev = Device(spec.device, b0=b, alpha=alpha, t_hop=t_hop)
        res.alpha_realized = dev.alpha
        outs = set(spec.outputs)
        if outs & {"dos", "transmission", "current", "flux_scan"}:
            E = spec.grid.energies()
            s = dev.spectrum(E, with_dos="dos" in outs)
            res.T, res.D = s["T"], s.get("D_total")
            if outs & {"current", "flux_scan"}:
                res.currents = {
                    v: current(E, res.T, BiasConfig(v, spec.kT), margin_kT=spec.margin_kT)
                    for v in spec.bias_list
                }
        if "angle_scan" in outs:
            res.scan_T = dev.spectrum(np.array(spec.scan_energies), with_dos=False)["T"]
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        res.error, res.hard = f"{type(exc).__name__}: {exc}", True
    except ValueError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _fmt(x) -> str:
    return "" if x is None else f"{float(x):.12g}"


def _table_rows(table: str, spec: SweepSpec, results: list[TupleResult]):
    E = spec.grid.energies()
    for r in results:
        if r.error is not None:
            continue
        b, _, t = r.key
        a = r.alpha_realized
        if table in ("dos", "transmission"):
            for k, e in enumerate(E):
                yield (e, b, a, t, None, r.T[k], r.D[k] if table == "dos" else None, None)
        elif table in ("current", "flux_scan"):
            for v in sorted(spec.bias_list):
                yield (None, b, a, t, v, None, None, 2.0 * r.currents[v])
        elif table == "angle_scan":
            for e, tt in sorted(zip(spec.scan_energies, r.scan_T)):
                yield (e, b, a, t, None, tt, None, None)


def _row_key(table, row):
    e, b, a, t, v = row[:5]
    if table == "flux_scan":          # field runs fastest within each curve
        return (a, t, v, b)
    if table == "angle_scan":
        return (e, b, t, a)
    return (b, a, t, v if v is not None else 0.0, e if e is not None else 0.0)


def _render(table: str, spec: SweepSpec, results) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    rows = sorted(_table_rows(table, spec, results), key=lambda r: _row_key(table, r))
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue().encode("ascii")


@dataclass
class RunManifest:
    echo: list[str]
    files: dict[str, str]
    row_counts: dict[str, int]
    failures: list[str]
    elapsed_s: float
    exit_code: int

    def render(self) -> str:
        lines = ["[config]", *self.echo, "[outputs]"]
        lines += [f"{name} sha256={digest} rows={self.row_counts.get(name, '')}"
                  for name, digest in sorted(self.files.items())]
        lines += ["[failures]", *self.failures, "[run]",
                  f"exit_code={self.exit_code}", f"elapsed_s={self.elapsed_s:.3f}"]
        return "\n".join(lines) + "\n"


def _geometry_text(spec: SweepSpec) -> str:
    geom = spec.device.geometry
    sites = build_torus(geom)
    parts = [geometry_echo(geom)]
    for a in sorted(set(spec.alpha_list)):
        parts.append("[placement]\n" + placement_echo(place_leads(sites, a)))
    return "".join(parts)


def run_sweep(spec: SweepSpec, out_dir, *, workers: int = 1) -> RunManifest:
    """Run every (B, alpha, t_hop) tuple and write the requested tables.

    Tuples are independent; a failure is logged in the manifest and the
    remaining tuples still run.  Output bytes do not depend on ``workers``.
    """
    start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = spec.parameter_tuples()
    if workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_tuple, [spec] * len(keys), keys))
    else:
        results = [_run_tuple(spec, k) for k in keys]

    failures = []
    for r in results:
        if r.error is not None:
            msg = f"B={r.key[0]!r} alpha={r.key[1]!r} t_hop={r.key[2]!r}: {r.error}"
            log.error("tuple failed: %s", msg)
            failures.append(msg)

    files, counts = {}, {}
    for table in spec.outputs:
        data = _render(table, spec, results)
        name = f"{table}.csv"
        (out / name).write_bytes(data)
        files[name] = hashlib.sha256(data).hexdigest()
        counts[name] = data.count(b"\n") - 1
    geo = _geometry_text(spec).encode("ascii")
    (out / "geometry.txt").write_bytes(geo)
    files["geometry.txt"] = hashlib.sha256(geo).hexdigest()

    if not failures:
        code = EXIT_OK
    elif all(r.error is not None for r in results) and any(r.hard for r in results):
        code = EXIT_SOLVER
    else:
        code = EXIT_PARTIAL
    manifest = RunManifest(config_echo(spec), files, counts, failures,
                           time.perf_counter() - start, code)
    (out / "manifest.txt").write_text(manifest.render())
    return manifest


def read_table(path) -> dict[str, np.ndarray]:
    """Columns of a sweep CSV as float arrays (empty cells become NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[k]) if r[k] else np.nan for r in body])
            for k, name in enumerate(header)}


# ---------------------------------------------------------------------------
# analysis

@dataclass(frozen=True)
class Plateau:
    alpha_start: float
    alpha_end: float
    mean_T: float
    n_points: int

    @property
    def center(self) -> float:
        return 0.5 * (self.alpha_start + self.alpha_end)


def detect_plateaus(alpha, T, *, rel_tol: float = 0.25, min_steps: int = 5) -> list[Plateau]:
    """Maximal runs of at least ``min_steps`` consecutive samples that stay
    within ``rel_tol`` of their own mean.

    Runs are grown greedily from the left; a run that cannot reach the
    minimum length is abandoned one sample at a time.
    """
    alpha = np.asarray(alpha, dtype=float)
    T = np.asarray(T, dtype=float)
    if len(alpha) < min_steps:
        raise ValueError(f"need at least {min_steps} angles, got {len(alpha)}")
    d = np.diff(alpha)
    if not np.allclose(d, d[0], rtol=1e-6, atol=1e-9):
        raise ValueError("angle scan must be uniformly spaced")

    def flat(lo, hi):
        seg = T[lo:hi]
        m = seg.mean()
        return m > 0 and seg.max() <= (1 + rel_tol) * m and seg.min() >= (1 - rel_tol) * m

    found = []
    i, n = 0, len(T)
    while i + min_steps <= n:
        if not flat(i, i + min_steps):
            i += 1
            continue
        j = i + min_steps
        while j < n and flat(i, j + 1):
            j += 1
        found.append(Plateau(float(alpha[i]), float(alpha[j - 1]),
                             float(T[i:j].mean()), j - i))
        i = j
    return found


def plateau_spacing(plateaus: list[Plateau]) -> float | None:
    """Mean spacing between consecutive plateau centres (deg)."""
    if len(plateaus) < 2:
        return None
    return float(np.mean(np.diff([p.center for p in plateaus])))


@dataclass(frozen=True)
class FluxPeriod:
    period: float                 # in units of Phi_0
    weight: float                 # share of the non-DC spectral power
    bin_width: float              # frequency resolution, 1/Phi_0
    tones: tuple[tuple[float, float], ...]   # (period, weight), strongest first


def extract_flux_period(phi, current_values, *, tone_fraction: float = 0.2) -> FluxPeriod:
    """Dominant period of I(Phi) from the discrete Fourier spectrum.

    ``phi`` must be uniformly spaced (in units of Phi_0).  Secondary tones
    are local spectral maxima with at least ``tone_fraction`` of the peak
    power.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(current_values, dtype=float)
    if len(phi) < 8:
        raise ValueError("need at least 8 flux samples")
    d = np.diff(phi)
    if not np.allclose(d, d[0], rtol=1e-6, atol=1e-12):
        raise ValueError("flux samples must be uniformly spaced")
    y = y - y.mean()
    power = np.abs(np.fft.rfft(y)) ** 2
    freq = np.fft.rfftfreq(len(y), d=d[0])
    power[0] = 0.0
    total = power.sum()
    if total == 0:
        return FluxPeriod(math.inf, 0.0, float(freq[1]), ())
    k = int(np.argmax(power))
    peaks = [i for i in range(1, len(power))
             if power[i] >= tone_fraction * power[k]
             and power[i] >= power[i - 1]
             and (i + 1 == len(power) or power[i] >= power[i + 1])]
    peaks.sort(key=lambda i: -power[i])
    tones = tuple((float(1.0 / freq[i]), float(power[i] / total)) for i in peaks)
    period = 1.0 / freq[k]
    span = phi[-1] - phi[0] + d[0]
    if span < 4 * period:
        log.warning("flux scan covers only %.2f periods", span / period)
    return FluxPeriod(float(period), float(power[k] / total), float(freq[1]), tones)


def count_excursions(values, threshold: float) -> int:
    """Sign changes of ``values - mean`` ignoring samples within ``threshold``.

    Small wiggles inside the dead band never count, so numerical noise
    cannot register as oscillation.
    """
    dev = np.asarray(values, dtype=float)
    dev = dev - dev.mean()
    signs = np.sign(dev[np.abs(dev) > threshold])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def analyze(out_dir, spec: SweepSpec | None = None) -> str:
    """Plateau and flux-period summary of tables already in ``out_dir``."""
    spec = spec or SweepSpec()
    out = Path(out_dir)
    lines = []
    angle = out / "angle_scan.csv"
    if angle.exists():
        tab = read_table(angle)
        for e in np.unique(tab["E_eV"]):
            for b in np.unique(tab["B_T"]):
                sel = (tab["E_eV"] == e) & (tab["B_T"] == b)
                for t in np.unique(tab["t_hop_eV"][sel]):
                    s = sel & (tab["t_hop_eV"] == t)
                    a, T = tab["alpha_deg"][s], tab["T"][s]
                    if len(a) < spec.plateau_min_steps:
                        continue
                    p = detect_plateaus(a, T, rel_tol=spec.plateau_tol,
                                        min_steps=spec.plateau_min_steps)
                    sp = plateau_spacing(p)
                    lines.append(f"plateaus E={e:g} B={b:g} t_hop={t:g} count={len(p)} "
                                 f"spacing_deg={'' if sp is None else f'{sp:.6g}'}")
                    lines += [f"  {q.alpha_start:g}..{q.alpha_end:g} mean_T={q.mean_T:.6g}"
                              for q in p]
    flux = out / "flux_scan.csv"
    if flux.exists():
        tab = read_table(flux)
        for key in sorted({(a, t, v) for a, t, v in
                           zip(tab["alpha_deg"], tab["t_hop_eV"], tab["V_sd_eV"])}):
            s = ((tab["alpha_deg"] == key[0]) & (tab["t_hop_eV"] == key[1])
                 & (tab["V_sd_eV"] == key[2]))
            phi = flux_ratio(tab["B_T"][s], spec.flux)
            if len(phi) < 8:
                continue
            fp = extract_flux_period(phi, tab["I_over_e_h"][s])
            lines.append(f"flux alpha={key[0]:g} t_hop={key[1]:g} V_sd={key[2]:g} "
                         f"period_phi0={fp.period:.6g} weight={fp.weight:.3f} "
                         f"bin={fp.bin_width:.4g}")
    text = "\n".join(lines) + ("\n" if lines else "")
    (out / "analysis.txt").write_text(text)
    return text

