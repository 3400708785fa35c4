"""Registered experiments: parameter schemas, runners and built-in checks."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import bohmdyn, field1d, qcore, statmech, workfun, workops
from .bohmdyn import (
    bohm_fields,
    ehrenfest_quantum_force,
    integrate_trajectories,
    interpolate,
    ks_bound,
    sample_quantum_equilibrium,
    trajectories_to_csv,
)
from .field1d import (
    Grid1D,
    PotentialSpec,
    Propagator,
    Ramp,
    free_gaussian_width,
    gaussian_packet,
    hamiltonian_expectation,
    ho_eigenstates,
)
from .statmech import CanonicalSpec, ProtocolSpec
from .workfun import ensemble_work, run_work_records


class ConfigError(ValueError):
    pass


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


PARSERS: dict[str, Callable[[Any], Any]] = {
    "float": float,
    "int": lambda v: int(float(v)) if float(v).is_integer() else int(v),
    "str": str,
    "floats": _floats,
}


@dataclass(frozen=True)
class Param:
    name: str
    kind: str = "float"
    default: Any = None
    required: bool = False
    help: str = ""


@dataclass
class ExperimentResult:
    name: str
    checks: dict[str, bool] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    tables: dict[str, str] = field(default_factory=dict)
    documents: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def check(self, name: str, ok) -> bool:
        self.checks[name] = bool(ok)
        return bool(ok)


@dataclass(frozen=True)
class Experiment:
    name: str
    topics: str
    description: str
    params: tuple[Param, ...]
    runner: Callable[[dict], ExperimentResult]

    def schema(self) -> dict[str, Param]:
        return {p.name: p for p in self.params}


REGISTRY: dict[str, Experiment] = {}

COMMON = (Param("seed", "int", 12345), Param("output", "str", None))


def register(name: str, topics: str, description: str, *params: Param):
    def deco(fn):
        REGISTRY[name] = Experiment(name, topics, description, tuple(params) + COMMON, fn)
        return fn
    return deco


def list_experiments() -> list[dict]:
    return [{"name": e.name, "topics": e.topics, "description": e.description}
            for e in REGISTRY.values()]


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def validate(config: dict) -> list[str]:
    """Schema diagnostics for a raw (string-valued) config; empty when valid."""
    diags = []
    name = config.get("experiment")
    if not name:
        return ["experiment: missing experiment name"]
    if name not in REGISTRY:
        return [f"experiment: unknown experiment {name!r}"]
    schema = REGISTRY[name].schema()
    for key, value in config.items():
        if key == "experiment":
            continue
        if key not in schema:
            diags.append(f"{key}: unknown parameter for {name}")
            continue
        try:
            PARSERS[schema[key].kind](value)
        except (TypeError, ValueError):
            diags.append(f"{key}: cannot parse {value!r} as {schema[key].kind}")
    for p in schema.values():
        if p.required and p.name not in config:
            diags.append(f"{p.name}: required parameter missing for {name}")
    return diags


def resolve(config: dict) -> dict:
    """Typed parameter dict with defaults applied. Raises :class:`ConfigError`."""
    diags = validate(config)
    if diags:
        raise ConfigError("; ".join(diags))
    schema = REGISTRY[config["experiment"]].schema()
    out = {"experiment": config["experiment"]}
    for p in schema.values():
        raw = config.get(p.name, p.default)
        out[p.name] = PARSERS[p.kind](raw) if raw is not None else None
    return out


def run(config: dict) -> ExperimentResult:
    cfg = resolve(config)
    result = REGISTRY[cfg["experiment"]].runner(cfg)
    result.summary.setdefault("passed", result.passed)
    return result


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.16e}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _f(x) -> float:
    return float(x)


# --------------------------------------------------------------------------- finite-dimensional


@register("exp-ngt", "work-operators", "Two-level counterexample: unitary-condition vs TPM work operators",
          Param("eps", default=1.0), Param("eps_prime", default=2.0),
          Param("n_random", "int", 20, help="random (eps, eps') pairs for the off-diagonal law"))
def exp_ngt(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-ngt")
    eps, epsp = cfg["eps"], cfg["eps_prime"]
    rep = workops.ngt_counterexample(eps, epsp)
    tol = 1e-12 * max(1.0, abs(eps), abs(epsp))
    tpm_closed = np.diag([epsp / 2, epsp / 2 - eps])
    unitary_closed = np.array([[epsp / 2, -epsp / 2], [-epsp / 2, epsp / 2 - eps]])
    res.check("tpm_operator_closed_form", np.max(np.abs(rep.W_tpm - tpm_closed)) < tol)
    res.check("unitary_operator_closed_form", np.max(np.abs(rep.W_unitary - unitary_closed)) < tol)
    res.check("offdiag_equals_half_eps_prime", abs(rep.offdiag_magnitude - abs(epsp) / 2) < tol)
    res.check("diagonals_agree", rep.diagonals_agree)

    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for i in range(cfg["n_random"]):
        e, ep = rng.uniform(-5, 5, size=2)
        r = workops.ngt_counterexample(e, ep)
        rows.append((i, _f(e), _f(ep), r.offdiag_magnitude, abs(ep) / 2, abs(r.offdiag_magnitude - abs(ep) / 2)))
    res.check("random_pairs_offdiag_law", all(row[-1] < 1e-12 * max(1.0, abs(row[1]), abs(row[2])) for row in rows))
    res.tables["random_pairs.csv"] = _csv(["pair", "eps", "eps_prime", "offdiag", "expected", "abs_err"], rows)

    p = workops.counterexample_process(eps, epsp)
    for label, rho in (("ground", qcore.DensityState.pure([1, 0])),
                       ("excited", qcore.DensityState.pure([0, 1])),
                       ("mixed", qcore.DensityState.maximally_mixed(2))):
        res.tables[f"tpm_distribution_{label}.csv"] = workops.tpm_distribution(p, rho).to_csv()

    res.documents["ngt_report.json"] = rep.to_dict()
    if rep.operators_identical:
        res.notes.append("eps_prime = 0: the unitary-condition and TPM work operators coincide")
    else:
        res.notes.append("eps_prime != 0: the two work operators differ by off-diagonal terms")
    res.summary.update(offdiag_magnitude=rep.offdiag_magnitude, expected_offdiag=rep.expected_offdiag,
                       operators_identical=rep.operators_identical)
    return res


def _random_pairs(n, dmin, dmax, seed):
    rng = np.random.default_rng(seed)
    for i in range(n):
        dim = int(rng.integers(dmin, dmax + 1))
        s1, s2 = (int(v) for v in rng.integers(0, 2**31, size=2))
        yield i, dim, workops.random_process(dim, s1), qcore.random_state(dim, s2)


@register("exp-dephasing", "dephasing", "Energy-basis dephasing reconciles unitary-condition and TPM expected work",
          Param("n_pairs", "int", 200), Param("dim_min", "int", 2), Param("dim_max", "int", 8))
def exp_dephasing(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-dephasing")
    rows = []
    for i, dim, p, rho in _random_pairs(cfg["n_pairs"], cfg["dim_min"], cfg["dim_max"], cfg["seed"]):
        deph = workops.dephased_unitary_work(p, rho)
        tpm = qcore.expectation(rho, workops.tpm_work_operator(p))
        raw = qcore.expectation(rho, workops.unitary_work_operator(p))
        dist = workops.expected_work(workops.tpm_distribution(p, rho))
        rows.append((i, dim, deph, tpm, raw, dist, abs(deph - tpm), abs(dist - tpm)))
    max_err = max(r[6] for r in rows)
    res.check("dephased_unitary_equals_tpm", max_err < 1e-10)
    res.check("distribution_mean_equals_tpm_operator", max(r[7] for r in rows) < 1e-10)
    res.tables["dephasing.csv"] = _csv(
        ["pair", "dim", "dephased_unitary", "tpm", "coherent_unitary", "tpm_distribution_mean",
         "abs_err", "dist_err"], rows)
    res.summary.update(max_abs_err=max_err, max_coherent_gap=max(abs(r[4] - r[3]) for r in rows))
    return res


@register("exp-tpm-jarzynski", "fluctuation-theorem, tpm", "Exact TPM Jarzynski identity over random processes",
          Param("n_specs", "int", 100), Param("betas", "floats", "0.1,1,5"),
          Param("dim_min", "int", 2), Param("dim_max", "int", 8))
def exp_tpm_jarzynski(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-tpm-jarzynski")
    rows = []
    for i, dim, p, _ in _random_pairs(cfg["n_specs"], cfg["dim_min"], cfg["dim_max"], cfg["seed"]):
        for beta in cfg["betas"]:
            est, exact = workops.tpm_jarzynski(p, beta)
            rows.append((i, dim, _f(beta), est, exact, abs(est - exact)))
    worst = max(r[-1] for r in rows)
    res.check("tpm_jarzynski_exact", worst < 1e-12)
    res.tables["tpm_jarzynski.csv"] = _csv(["spec", "dim", "beta", "estimate", "exact", "abs_err"], rows)
    res.summary.update(max_abs_err=worst, n_cases=len(rows))
    return res


# --------------------------------------------------------------------------- field experiments


def _energy_bookkeeping(res, name, ens, psi0, psi1, V):
    dH = hamiltonian_expectation(psi1, V) - hamiltonian_expectation(psi0, V)
    se = ens.stderr_W_E
    gap = ens.mean_W_E - dH
    # stationary ensembles have zero spread; fall back to a roundoff floor
    ok = abs(gap) <= max(4 * se, 1e-8)
    res.check(f"{name}_energy_bookkeeping", ok)
    res.summary[f"{name}_mean_W_E"] = ens.mean_W_E
    res.summary[f"{name}_delta_H"] = dH
    res.summary[f"{name}_W_E_stderr"] = se
    return ok


def qhj_residual_max(psi, V) -> float:
    return float(np.max(np.abs(bohm_fields(psi, V).qhj_residual())))


@register("exp-stationary", "bohmian-work, stationary-state", "Oscillator ground state: stationary trajectories and vanishing work",
          Param("omega", default=1.0), Param("n_traj", "int", 100), Param("periods", default=10.0),
          Param("dt", default=0.02), Param("n_points", "int", 1024), Param("half_width", default=20.0))
def exp_stationary(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-stationary")
    w = cfg["omega"]
    grid = Grid1D.symmetric(cfg["half_width"] / math.sqrt(w), cfg["n_points"])
    V = PotentialSpec.harmonic(w)
    (psi0,), (E0,) = ho_eigenstates(grid, 1.0, w, 0)
    x0 = np.sort(sample_quantum_equilibrium(psi0, cfg["n_traj"], cfg["seed"]))
    t_final = cfg["periods"] * 2 * math.pi / w
    run_ = integrate_trajectories(psi0, V, x0, t_final, cfg["dt"])
    recs = run_work_records(run_)
    comps = np.array([[r.W_M, r.W_E, r.delta_K, r.delta_V, r.delta_Q] for r in recs])
    drift = float(np.max(np.abs(run_.positions - run_.positions[0])))
    res.check("work_components_vanish", np.max(np.abs(comps)) < 1e-8)
    res.check("density_stationary", np.max(np.abs(np.abs(run_.psi_final.amplitudes) - np.abs(psi0.amplitudes))) < 1e-8)
    res.check("norm_conserved", abs(run_.psi_final.norm2() - 1) < 1e-10)
    res.check("qhj_residual", qhj_residual_max(psi0, V) < 1e-6)
    res.check("edge_guard", run_.psi_final.edge_amplitude() < 1e-8)
    ens = ensemble_work(recs)
    _energy_bookkeeping(res, "ground", ens, psi0, run_.psi_final, V)
    res.tables["work.csv"] = ens.to_csv()
    res.summary.update(max_position_drift=drift, max_work_component=float(np.max(np.abs(comps))),
                       ground_energy=float(E0))
    res.notes.append("position drift comes from the O(dt^2) breathing of the Hermite ground state under the "
                     "split-step map; it is reported, and shrinks fourfold per dt halving")
    return res


def free_packet_run(sigma0: float, t_final: float, x0s, dt: float, grid: Grid1D | None = None):
    grid = grid or Grid1D.symmetric(max(20 * sigma0, 10.0), 1024)
    psi = gaussian_packet(grid, sigma0)
    return psi, integrate_trajectories(psi, PotentialSpec.free(), x0s, t_final, dt)


def _free_errors(run_, x0s, sigma0, t_final):
    st = free_gaussian_width(sigma0, t_final)
    xa = np.asarray(x0s) * st / sigma0
    recs = run_work_records(run_)
    pos_err = np.abs(run_.positions[-1] - xa) / np.maximum(np.abs(xa), st)
    we_err = np.array([abs(r.work_energy_residual) for r in recs])
    return pos_err, we_err, recs


@register("exp-free-packet", "bohmian-work, free-packet", "Free Gaussian packet: W_M, W_E and their decomposition",
          Param("sigma0", default=1.0), Param("t_final", default=None, help="default 2 m sigma0^2 / hbar"),
          Param("n_traj", "int", 100), Param("dt", default=0.05), Param("n_points", "int", 1024),
          Param("n_power_checks", "int", 3))
def exp_free_packet(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-free-packet")
    s0 = cfg["sigma0"]
    T = cfg["t_final"] if cfg["t_final"] is not None else 2 * s0**2
    dt = cfg["dt"]
    grid = Grid1D.symmetric(max(20 * s0, 10.0), cfg["n_points"])
    V = PotentialSpec.free()
    psi0 = gaussian_packet(grid, s0)
    x0 = np.sort(sample_quantum_equilibrium(psi0, cfg["n_traj"], cfg["seed"]))
    x0 = np.concatenate([[s0], x0])

    run_ = integrate_trajectories(psi0, V, x0, T, dt, snapshot_every=1)
    pos_err, we_err, recs = _free_errors(run_, x0, s0, T)
    run_h = integrate_trajectories(psi0, V, x0, T, dt / 2)
    pos_err_h, we_err_h, _ = _free_errors(run_h, x0, s0, T)
    res.check("endpoint_law_1e-4", pos_err.max() < 1e-4)
    res.check("work_energy_theorem_1e-5", we_err.max() < 1e-5)
    ratio_pos = float(pos_err.max() / pos_err_h.max())
    ratio_we = float(we_err.max() / we_err_h.max())
    res.check("dt_halving_endpoint_4x", ratio_pos >= 4)
    res.check("dt_halving_work_energy_4x", ratio_we >= 4)
    dec = max(abs(r.decomposition_residual) for r in recs)
    res.check("decomposition_1e-4", dec < 1e-4)
    res.check("delta_V_zero", max(abs(r.delta_V) for r in recs) == 0.0)

    # endpoint vs integral form of W_E on the x0 = sigma0 trajectory
    scale = 1.0 / (4 * s0**2)
    rec0 = workfun.work_decomposition(run_h.trajectory(0), with_integral=True)
    res.check("W_E_endpoint_vs_integral", abs(rec0.W_E - rec0.W_E_integral) < 1e-5 * scale)

    qhj = max(qhj_residual_max(psi0, V), qhj_residual_max(run_.psi_final, V))
    res.check("qhj_residual_1e-6", qhj < 1e-6)

    ens = ensemble_work(recs[1:])
    _energy_bookkeeping(res, "free", ens, psi0, run_.psi_final, V)

    # <W_M> through the power density route
    wm_density = workfun.expected_mechanical_work(run_.snapshots, V)
    res.check("mean_W_M_two_routes", abs(ens.mean_W_M - wm_density) <= 4 * ens.stderr_W_M)

    # expected power vs central-difference d<K>/dt; free evolution is exact in one split step
    prop = Propagator(grid, V)
    h = 1e-3
    worst = 0.0
    for t in np.linspace(T / 4, T, cfg["n_power_checks"]):
        p = workfun.expected_power(prop.evolve(psi0, t, t), V)
        kp = workfun.ensemble_kinetic_energy(prop.evolve(psi0, t + h, t + h), V)
        km = workfun.ensemble_kinetic_energy(prop.evolve(psi0, t - h, t - h), V)
        dkdt = (kp - km) / (2 * h)
        worst = max(worst, abs(p - dkdt) / abs(dkdt))
    res.check("expected_power_vs_dK_dt", worst < 1e-4)

    classical, quantum = workfun.power_split(run_.snapshots, V)
    res.check("power_split_classical_zero", abs(classical) < 1e-12)
    res.check("power_split_quantum_is_minus_W_M", abs(quantum + wm_density) < 1e-8)

    we = np.array([r.W_E for r in recs[1:]])
    res.summary.update(
        max_endpoint_rel_err=float(pos_err.max()), max_work_energy_err=float(we_err.max()),
        dt_halving_ratio_endpoint=ratio_pos, dt_halving_ratio_work_energy=ratio_we,
        max_decomposition_residual=dec, qhj_residual=qhj, mean_W_M=ens.mean_W_M,
        mean_W_M_density_route=wm_density, W_E_sigma0_trajectory=rec0.W_E,
        W_E_quantiles=dict(zip(("min", "q25", "median", "q75", "max"),
                               np.quantile(we, [0, 0.25, 0.5, 0.75, 1]).tolist())),
        fraction_W_E_nonzero=float(np.mean(np.abs(we) > 1e-6)),
        power_split_classical=classical, power_split_quantum=quantum,
    )
    res.notes.append("per-trajectory W_E for the free packet is reported, not gated (zero only at x0 = +-sigma0)")
    res.tables["work.csv"] = ens.to_csv()
    res.tables["trajectories.csv"] = trajectories_to_csv(run_.trajectories[:20], stride=4)
    res.tables["psi_final.csv"] = run_.psi_final.to_csv()
    return res


def _driven_ensemble(res, tag, psi0, V, T, dt, n_traj, seed):
    x0 = np.sort(sample_quantum_equilibrium(psi0, n_traj, seed))
    run_ = integrate_trajectories(psi0, V, x0, T, dt)
    recs = run_work_records(run_)
    ens = ensemble_work(recs)
    dec = max(abs(r.decomposition_residual) for r in recs)
    res.check(f"{tag}_decomposition_1e-4", dec < 1e-4)
    res.check(f"{tag}_edge_guard", run_.psi_final.edge_amplitude() < 1e-8)
    _energy_bookkeeping(res, tag, ens, psi0, run_.psi_final, V)
    res.summary[f"{tag}_max_decomposition_residual"] = dec
    res.summary[f"{tag}_mean_W_M"] = ens.mean_W_M
    res.summary[f"{tag}_mean_abs_W_M"] = float(np.mean([abs(r.W_M) for r in recs]))
    return run_, ens


@register("exp-dragged-trap", "bohmian-work, driven-trap", "Driven traps: dragged centre at several speeds plus a stiffness ramp",
          Param("omega", default=1.0), Param("distance", default=2.0), Param("durations", "floats", "2,8,32"),
          Param("omega2", default=2.0), Param("ramp_duration", default=3.0),
          Param("n_traj", "int", 100), Param("dt", default=0.01), Param("n_points", "int", 1024))
def exp_dragged_trap(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-dragged-trap")
    w, d = cfg["omega"], cfg["distance"]
    grid = Grid1D.symmetric(max(20.0 / math.sqrt(w), abs(d) + 12.0), cfg["n_points"], center=d / 2)
    (psi0,), _ = ho_eigenstates(grid, 1.0, w, 0)
    rows = []
    mean_abs = []
    for i, T in enumerate(cfg["durations"]):
        V = PotentialSpec.harmonic(w, Ramp(0.0, d, T, shape="smooth"))
        tag = f"drag{i}"
        run_, ens = _driven_ensemble(res, tag, psi0, V, T, cfg["dt"], cfg["n_traj"], cfg["seed"] + i)
        mean_abs.append(res.summary[f"{tag}_mean_abs_W_M"])
        rows.append((_f(T), _f(d / T), ens.mean_W_M, ens.mean_W_E, res.summary[f"{tag}_delta_H"],
                     res.summary[f"{tag}_mean_abs_W_M"], res.summary[f"{tag}_max_decomposition_residual"]))
        res.tables[f"{tag}_work.csv"] = ens.to_csv()
    order = np.argsort(cfg["durations"])
    res.check("W_M_vanishes_as_drag_slows", all(np.diff(np.array(mean_abs)[order]) < 0))
    res.tables["drag_speeds.csv"] = _csv(
        ["duration", "mean_speed", "mean_W_M", "mean_W_E", "delta_H", "mean_abs_W_M", "max_decomposition_residual"],
        rows)

    Vr = PotentialSpec.stiffness_ramp(Ramp(w, cfg["omega2"], cfg["ramp_duration"], shape="smooth"))
    grid_r = Grid1D.symmetric(20.0 / math.sqrt(min(w, cfg["omega2"])), cfg["n_points"])
    (psi_r,), _ = ho_eigenstates(grid_r, 1.0, w, 0)
    _, ens_r = _driven_ensemble(res, "stiffness", psi_r, Vr, cfg["ramp_duration"], cfg["dt"], cfg["n_traj"],
                                cfg["seed"] + 100)
    res.tables["stiffness_work.csv"] = ens_r.to_csv()
    return res


@register("exp-jarzynski-classical", "fluctuation-theorem", "Classical Jarzynski equality for dragged and stiffening traps",
          Param("beta", required=True), Param("omega", default=1.0), Param("distance", default=3.0),
          Param("drag_durations", "floats", "0.5,2,20"), Param("omega2", default=2.0),
          Param("ramp_durations", "floats", "0.5,2,20"), Param("n", "int", 10000), Param("dt", default=0.01))
def exp_jarzynski_classical(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-jarzynski-classical")
    spec = CanonicalSpec(cfg["beta"], cfg["omega"])
    rows = []
    protocols = [(f"drag{i}", ProtocolSpec.drag(cfg["distance"], T, cfg["omega"]))
                 for i, T in enumerate(cfg["drag_durations"])]
    protocols += [(f"stiffness{i}", ProtocolSpec.stiffness(cfg["omega"], cfg["omega2"], T))
                  for i, T in enumerate(cfg["ramp_durations"])]
    for i, (tag, pr) in enumerate(protocols):
        rep = statmech.classical_jarzynski(spec, pr, cfg["n"], [cfg["seed"], i], cfg["dt"])
        res.check(f"{tag}_within_4_stderr", abs(rep.gap) <= 4 * rep.stderr)
        res.check(f"{tag}_jensen", rep.mean_work >= rep.delta_F)
        x0, p0 = statmech.classical_gibbs_sample(
            CanonicalSpec(cfg["beta"], pr.omega_initial), 200, [cfg["seed"], i, 1])
        book = statmech.classical_work(pr, x0, p0, cfg["dt"])
        scale = float(np.max(np.abs(pr.hamiltonian(x0, p0, 0.0)))) + 1.0
        tol = cfg["dt"] ** 2 * max(pr.omega_initial, pr.omega_final) ** 2 * scale * max(1.0, pr.t_span)
        res.check(f"{tag}_bookkeeping", np.max(np.abs(book.bookkeeping_residual)) < tol)
        rows.append((tag, pr.kind, _f(pr.schedule.duration), rep.estimate, rep.exact, rep.stderr,
                     rep.gap_sigmas, rep.mean_work, rep.delta_F, float(np.max(np.abs(book.bookkeeping_residual)))))
        res.documents[f"{tag}_report.json"] = rep.to_dict()
    res.tables["jarzynski_classical.csv"] = _csv(
        ["protocol", "kind", "duration", "estimate", "exact", "stderr", "gap_sigmas", "mean_work", "delta_F",
         "max_bookkeeping_residual"], rows)
    return res


@register("exp-jarzynski-bohm", "bohmian-work, fluctuation-theorem, semiclassical", "Bohmian Jarzynski estimates: static, quasi-static and fast stiffness ramps",
          Param("beta", required=True), Param("omega", default=1.0), Param("omega2", default=2.0),
          Param("t_quasi", default=10.0), Param("t_fast", default=0.2),
          Param("n_traj_quasi", "int", 200), Param("n_traj_fast", "int", 2400),
          Param("dt_quasi", default=0.02), Param("dt_fast", default=0.01),
          Param("n_free", "int", 1000), Param("sigma0", default=1.0))
def exp_jarzynski_bohm(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-jarzynski-bohm")
    beta, w = cfg["beta"], cfg["omega"]
    rows = []

    static = ProtocolSpec.static(w, t_span=1.0)
    weights, works = statmech.bohmian_level_works(beta, w, static, 50, [cfg["seed"], 0], dt=0.01)
    rep = statmech.jarzynski_from_levels(beta, static, weights, works, "W_E")
    # eigenstate W_E is zero up to the O(dt^2) split-step breathing
    res.check("static_estimate_equals_exact", abs(rep.estimate - rep.exact) < 1e-5 and rep.exact == 1.0)
    res.summary["static_estimate"] = rep.estimate
    rows.append(("static", "W_E", rep.estimate, rep.exact, rep.stderr, rep.gap_sigmas, rep.mean_work))

    cases = (("quasi", "smooth", cfg["t_quasi"], cfg["n_traj_quasi"], cfg["dt_quasi"], "quasi-static"),
             ("fast", "linear", cfg["t_fast"], cfg["n_traj_fast"], cfg["dt_fast"], "fast"))
    for k, (tag, shape, T, n, dt, speed) in enumerate(cases, start=1):
        pr = ProtocolSpec.stiffness(w, cfg["omega2"], T, shape=shape, speed=speed)
        weights, works = statmech.bohmian_level_works(beta, w, pr, n, [cfg["seed"], k], dt=dt)
        for kind in ("W_E", "W_M"):
            rep = statmech.jarzynski_from_levels(beta, pr, weights, works, kind)
            rows.append((tag, kind, rep.estimate, rep.exact, rep.stderr, rep.gap_sigmas, rep.mean_work))
            res.documents[f"{tag}_{kind}_report.json"] = rep.to_dict()
            res.summary[f"{tag}_{kind}_gap_sigmas"] = rep.gap_sigmas
            if kind == "W_E":
                res.tables[f"{tag}_W_E_samples.csv"] = rep.to_csv()
        if tag == "quasi":
            res.check("quasi_static_W_E_within_4_stderr", res.summary["quasi_W_E_gap_sigmas"] < 4)
        else:
            res.check("fast_W_E_gap_exceeds_5_stderr", res.summary["fast_W_E_gap_sigmas"] > 5)

    res.tables["jarzynski_bohm.csv"] = _csv(
        ["protocol", "work_kind", "estimate", "exact", "stderr", "gap_sigmas", "mean_work"], rows)

    # free-packet W_E distribution, reported without a gate
    s0 = cfg["sigma0"]
    grid = Grid1D.symmetric(max(20 * s0, 10.0), 1024)
    psi0 = gaussian_packet(grid, s0)
    x0 = np.sort(sample_quantum_equilibrium(psi0, cfg["n_free"], [cfg["seed"], 9]))
    run_ = integrate_trajectories(psi0, PotentialSpec.free(), x0, 2 * s0**2, 0.05)
    recs = run_work_records(run_)
    ens = ensemble_work(recs)
    we = np.array([r.W_E for r in recs])
    res.tables["free_W_E_distribution.csv"] = _csv(
        ["traj_id", "x0", "W_E"], [(r.traj_id, _f(x), r.W_E) for r, x in zip(recs, x0)])
    res.summary["free_W_E"] = {
        "mean": ens.mean_W_E, "stderr": ens.stderr_W_E, "std": float(np.std(we)),
        "min": float(we.min()), "max": float(we.max()),
        "fraction_abs_above_1e-6": float(np.mean(np.abs(we) > 1e-6)),
    }
    res.notes.append("free-packet per-trajectory W_E distribution is reported without a pass/fail gate")
    res.notes.append("W_M exponentiated averages are reported for comparison and are not gated")
    return res


@register("exp-semiclassical", "semiclassical", "Classical/quantum power split for packets in a harmonic well, lambda_dB/L sweep",
          Param("omega", default=1.0), Param("sigma0", default=0.5), Param("amplitudes", "floats", "2,5,10,20,30"),
          Param("dt", default=0.005), Param("n_points", "int", 2048), Param("n_traj", "int", 200),
          Param("record_every", "int", 2))
def exp_semiclassical(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-semiclassical")
    w, s0 = cfg["omega"], cfg["sigma0"]
    V = PotentialSpec.harmonic(w)
    T = math.pi / (2 * w)
    rows = []
    worst_ehrenfest = 0.0
    for i, A in enumerate(cfg["amplitudes"]):
        grid = Grid1D.symmetric(A + 15.0 * max(1.0, s0), cfg["n_points"])
        psi0 = gaussian_packet(grid, s0, x0=A)
        snaps = Propagator(grid, V).evolve(psi0, T, cfg["dt"], record_every=cfg["record_every"])
        classical, quantum = workfun.power_split(snaps, V)
        eh = max(abs(ehrenfest_quantum_force(s, V)) for s in snaps)
        worst_ehrenfest = max(worst_ehrenfest, eh)
        wm_density = workfun.expected_mechanical_work(snaps, V)
        x0 = np.sort(sample_quantum_equilibrium(psi0, cfg["n_traj"], [cfg["seed"], i]))
        run_ = integrate_trajectories(psi0, V, x0, T, cfg["dt"] * cfg["record_every"])
        ens = ensemble_work(run_work_records(run_))
        lam_over_L = 2 * math.pi / (w * A * A)
        ratio = abs(quantum) / abs(classical)
        edge = max(s.edge_amplitude() for s in snaps)
        rows.append((_f(A), lam_over_L, classical, quantum, ratio, wm_density, ens.mean_W_M, ens.stderr_W_M, eh, edge))
        res.check(f"A{A:g}_split_equals_density_W_M", abs((classical - quantum) - wm_density)
                  <= 1e-10 * max(1.0, abs(classical)))
        # trajectory and density routes share psi but not the quadrature; agree to O(dt^2)
        res.check(f"A{A:g}_split_matches_trajectory_W_M", abs((classical - quantum) - ens.mean_W_M)
                  <= 4 * ens.stderr_W_M + 1e-5 * abs(classical))
        res.check(f"A{A:g}_edge_guard", edge < 1e-8)
        _energy_bookkeeping(res, f"A{A:g}", ens, psi0, run_.psi_final, V)
        if lam_over_L < 1e-2:
            res.check(f"A{A:g}_quantum_below_1pct", ratio < 1e-2)
    res.check("some_amplitude_semiclassical", any(r[1] < 1e-2 for r in rows))
    res.check("ehrenfest_quantum_force_1e-8", worst_ehrenfest < 1e-8)
    res.tables["power_split.csv"] = _csv(
        ["amplitude", "lambda_dB_over_L", "classical_term", "quantum_term", "quantum_over_classical",
         "W_M_density_route", "W_M_trajectories", "W_M_stderr", "max_abs_mean_dQdx", "edge_amplitude"], rows)
    res.summary.update(max_ehrenfest=worst_ehrenfest)
    res.notes.append("lambda_dB = 2 pi hbar / (m omega A) at peak classical speed; L = oscillation amplitude A")
    return res


def _equivariance_case(res, tag, psi0, V, T, dt, n, seed, checkpoints=3):
    x0 = np.sort(sample_quantum_equilibrium(psi0, n, seed))
    n_steps, _ = field1d.step_count(T, dt)
    every = max(1, n_steps // checkpoints)
    run_ = integrate_trajectories(psi0, V, x0, T, dt, snapshot_every=every, record_fields=False)
    rows = []
    for snap in run_.snapshots[1:]:
        idx = int(round((snap.time - psi0.time) / (T / n_steps)))
        ks = bohmdyn.equivariance_check(run_.positions[idx], snap)
        bound = ks_bound(n, snap.grid.dx, snap.width())
        rows.append((tag, snap.time, ks, bound))
        res.check(f"{tag}_ks_t{snap.time:.3g}", ks < bound)
    order_ok = bool(np.all(np.diff(run_.positions, axis=1) >= 0))
    res.check(f"{tag}_non_crossing", order_ok)
    # energy bookkeeping from endpoint local energies
    f0, f1 = bohm_fields(psi0, V), bohm_fields(run_.psi_final, V)
    we = interpolate(f1.E_local, run_.positions[-1], psi0.grid) - interpolate(f0.E_local, run_.positions[0], psi0.grid)
    recs = [workfun.WorkRecord(np.nan, float(v), np.nan, np.nan, np.nan, j) for j, v in enumerate(we)]
    ens = ensemble_work(recs)
    _energy_bookkeeping(res, tag, ens, psi0, run_.psi_final, V)
    res.check(f"{tag}_edge_guard", run_.psi_final.edge_amplitude() < 1e-8)
    return rows


@register("exp-equivariance", "quantum-equilibrium", "Quantum-equilibrium ensembles stay |psi(t)|^2-distributed",
          Param("n_traj", "int", 10000), Param("sigma0", default=1.0), Param("dt", default=0.02),
          Param("omega", default=1.0), Param("distance", default=2.0), Param("drag_duration", default=4.0),
          Param("n_points", "int", 1024))
def exp_equivariance(cfg) -> ExperimentResult:
    res = ExperimentResult("exp-equivariance")
    s0 = cfg["sigma0"]
    grid = Grid1D.symmetric(max(20 * s0, 10.0), cfg["n_points"])
    rows = _equivariance_case(res, "free", gaussian_packet(grid, s0), PotentialSpec.free(), 2 * s0**2,
                              cfg["dt"], cfg["n_traj"], [cfg["seed"], 0])
    w, d = cfg["omega"], cfg["distance"]
    grid_d = Grid1D.symmetric(max(20.0 / math.sqrt(w), abs(d) + 12.0), cfg["n_points"], center=d / 2)
    (psi_d,), _ = ho_eigenstates(grid_d, 1.0, w, 0)
    Vd = PotentialSpec.harmonic(w, Ramp(0.0, d, cfg["drag_duration"], shape="smooth"))
    rows += _equivariance_case(res, "drag", psi_d, Vd, cfg["drag_duration"], cfg["dt"], cfg["n_traj"],
                               [cfg["seed"], 1])
    res.tables["equivariance.csv"] = _csv(["protocol", "t", "ks", "bound"], rows)
    res.summary.update(max_ks_over_bound=max(r[2] / r[3] for r in rows))
    return res
