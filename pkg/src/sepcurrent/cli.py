"""Batch experiment runner and verification suites.

Subcommands:

    sep-current run <config.json> [--out DIR] [--seed S] [--threads N]
    sep-current verify <suite>    [--grid FILE] [--out DIR] [--threads N]
    sep-current kernels list

``run`` executes the configured pipeline (chain profiles, exact laws and
identities, stirring replicas, decomposition, normality reports) and writes
summary.json, reports.csv and, for Monte Carlo modes, samples.csv.  Outputs
are staged with a .partial suffix and renamed on success, so an aborted run
leaves only .partial files.  The summary echoes the fully resolved config;
re-running on that echo reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import _loops, analysis, chain, exact, presets, rayleigh, stirring
from .kernels import (
    PRESETS,
    Partition,
    SiteWindow,
    make_heavy_tail,
    make_nearest_neighbor,
    make_random_environment,
    product_configuration,
    step_configuration,
)

SCHEMA_VERSION = 1
SUITES = ("identities", "rayleigh", "na", "clt", "all")

_PHI_INT = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


class ConfigError(ValueError):
    """Configuration problem, named with the offending field path."""


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _expect(doc: dict, path: str, key: str, types, default=None, required=False):
    if key not in doc or doc[key] is None:
        if required:
            _fail(f"{path}{key}", "missing required field")
        return default
    val = doc[key]
    if not isinstance(val, types):
        _fail(f"{path}{key}", f"expected {types}, got {type(val).__name__}")
    return val


def resolve_config(doc: dict) -> dict:
    """Validate a config document and materialize every default."""
    if not isinstance(doc, dict):
        raise ConfigError(": config must be a JSON object")
    out = {"schema_version": _expect(doc, "", "schema_version", int, SCHEMA_VERSION)}

    win = _expect(doc, "", "window", dict, required=True)
    if "size" in win:
        size = _expect(win, "window.", "size", int, required=True)
        if size < 2:
            _fail("window.size", "must be >= 2")
        w = presets.centered_window(size)
        out["window"] = {"lo": w.sites[0], "hi": w.sites[-1]}
    else:
        lo = _expect(win, "window.", "lo", int, required=True)
        hi = _expect(win, "window.", "hi", int, required=True)
        if hi - lo + 1 < 2:
            _fail("window", "needs at least 2 sites")
        out["window"] = {"lo": lo, "hi": hi}

    ker = _expect(doc, "", "kernel", dict, required=True)
    preset = _expect(ker, "kernel.", "preset", str, required=True)
    if preset not in PRESETS:
        _fail("kernel.preset", f"unknown preset; choose from {sorted(PRESETS)}")
    kk = {"preset": preset}
    if preset == "nearest_neighbor":
        kk["rate"] = float(_expect(ker, "kernel.", "rate", (int, float), 1.0))
        if kk["rate"] <= 0:
            _fail("kernel.rate", "must be positive")
    elif preset == "heavy_tail":
        kk["alpha"] = float(_expect(ker, "kernel.", "alpha", (int, float), required=True))
        if not 1.0 < kk["alpha"] <= 2.0:
            _fail("kernel.alpha", "must lie in (1, 2]")
        n_sites = out["window"]["hi"] - out["window"]["lo"] + 1
        kk["cutoff"] = int(_expect(ker, "kernel.", "cutoff", int, n_sites))
        if kk["cutoff"] < 1:
            _fail("kernel.cutoff", "must be >= 1")
    else:
        kk["env_seed"] = int(_expect(ker, "kernel.", "env_seed", int, required=True))
        kk["epsilon"] = float(_expect(ker, "kernel.", "epsilon", (int, float), required=True))
        if not 0.0 < kk["epsilon"] < 1.0:
            _fail("kernel.epsilon", "must lie in (0, 1)")
    out["kernel"] = kk

    part = _expect(doc, "", "partition", dict, {"split_at": 0})
    split_at = _expect(part, "partition.", "split_at", int, 0)
    if not out["window"]["lo"] <= split_at < out["window"]["hi"]:
        _fail("partition.split_at", "must leave both sides nonempty")
    out["partition"] = {"split_at": split_at}

    init = _expect(doc, "", "initial", dict, {"kind": "step"})
    kind = _expect(init, "initial.", "kind", str, "step")
    if kind == "step":
        out["initial"] = {"kind": "step"}
    elif kind == "product":
        rho = float(_expect(init, "initial.", "rho", (int, float), required=True))
        if not 0.0 <= rho <= 1.0:
            _fail("initial.rho", "must lie in [0, 1]")
        out["initial"] = {"kind": "product", "rho": rho,
                          "seed": int(_expect(init, "initial.", "seed", int, 0))}
    else:
        _fail("initial.kind", "must be 'step' or 'product'")

    t_grid = _expect(doc, "", "t_grid", list, chain.geometric_grid(0.5, 6))
    if not t_grid:
        _fail("t_grid", "must be nonempty")
    try:
        t_grid = [float(t) for t in t_grid]
    except (TypeError, ValueError):
        _fail("t_grid", "entries must be numbers")
    if any(t < 0 for t in t_grid) or any(b < a for a, b in zip(t_grid, t_grid[1:])):
        _fail("t_grid", "must be nonnegative and nondecreasing")
    out["t_grid"] = t_grid

    mode = _expect(doc, "", "mode", str, "both")
    if mode not in ("exact", "mc", "both"):
        _fail("mode", "must be one of exact, mc, both")
    out["mode"] = mode

    out["n_max"] = int(_expect(doc, "", "n_max", int, exact.N_MAX_DEFAULT))
    n_sites = out["window"]["hi"] - out["window"]["lo"] + 1
    if mode == "exact" and n_sites > out["n_max"]:
        _fail("mode", f"exact mode needs window size <= n_max={out['n_max']}, got {n_sites}")

    out["n_replicas"] = int(_expect(doc, "", "n_replicas", int, 10_000))
    if out["n_replicas"] < 1:
        _fail("n_replicas", "must be >= 1")

    tols = _expect(doc, "", "tolerances", dict, {})
    out["tolerances"] = {
        "semigroup": float(_expect(tols, "tolerances.", "semigroup", (int, float), 1e-10)),
        "quad": float(_expect(tols, "tolerances.", "quad", (int, float), 1e-8)),
        "tol_im": float(_expect(tols, "tolerances.", "tol_im", (int, float), 1e-7)),
    }
    for name, v in out["tolerances"].items():
        if v <= 0:
            _fail(f"tolerances.{name}", "must be positive")

    out["event_budget"] = int(_expect(doc, "", "event_budget", (int, float),
                                      stirring.DEFAULT_EVENT_BUDGET))
    out["master_seed"] = int(_expect(doc, "", "master_seed", int, 0))
    out["threads"] = _expect(doc, "", "threads", int, None)
    return out


def _build_instance(cfg: dict):
    window = SiteWindow.lattice(cfg["window"]["lo"], cfg["window"]["hi"])
    partition = Partition.split(window, cfg["partition"]["split_at"])
    kk = cfg["kernel"]
    if kk["preset"] == "nearest_neighbor":
        kernel = make_nearest_neighbor(window, kk["rate"])
    elif kk["preset"] == "heavy_tail":
        kernel = make_heavy_tail(window, kk["alpha"], kk["cutoff"])
    else:
        kernel = make_random_environment(window, kk["env_seed"], kk["epsilon"])
    if cfg["initial"]["kind"] == "step":
        eta = step_configuration(window, partition)
    else:
        eta = product_configuration(window, cfg["initial"]["rho"], cfg["initial"]["seed"])
    return kernel, eta, partition


def _subseed(master_seed: int, index: int) -> int:
    return _loops._mix_int((master_seed * _PHI_INT + index + 1) & _MASK)


def _set_threads(n):
    if n is not None and _loops.HAS_NUMBA:
        import numba

        numba.set_num_threads(max(1, int(n)))


class _StagedOutputs:
    """Write files as .partial, rename them all only on success."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.staged: list[Path] = []

    def write(self, name: str, text: str):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        p = self.out_dir / (name + ".partial")
        p.write_text(text)
        self.staged.append(p)

    def finalize(self):
        for p in self.staged:
            os.replace(p, p.with_name(p.name[: -len(".partial")]))
        self.staged.clear()


def run_experiment(cfg: dict, out_dir: Path) -> dict:
    """Execute a resolved config; returns the summary document."""
    kernel, eta, partition = _build_instance(cfg)
    tol = cfg["tolerances"]["semigroup"]
    quad_tol = cfg["tolerances"]["quad"]
    tol_im = cfg["tolerances"]["tol_im"]
    t_grid = cfg["t_grid"]
    do_exact = cfg["mode"] in ("exact", "both") and kernel.window.size <= cfg["n_max"]
    do_mc = cfg["mode"] in ("mc", "both")
    _set_threads(cfg["threads"])

    outputs = _StagedOutputs(out_dir)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "backend": _loops.BACKEND,
        "resolved_config": cfg,
        "exact_enabled": do_exact,
        "mc_enabled": do_mc,
        "results": [],
    }
    reports_rows = []
    samples_buf = io.StringIO()
    samples_buf.write("# schema_version=1\nt,replica_index,w\n")

    try:
        balance = chain.balance_profile(kernel, partition, t_grid, tol)
        final_vals = [vals[-1] for vals in balance.values()]
        summary["balance"] = {
            "t_final": t_grid[-1],
            "min_prob_in_a": min(final_vals),
            "max_prob_in_a": max(final_vals),
        }
        if eta.n_particles > 0:
            rig = chain.rigidity_profile(kernel, eta, t_grid, tol)
            still_growing = len(rig) < 2 or rig[-1] - rig[-2] > 1e-9 * max(1.0, rig[-1])
            summary["rigidity"] = {"values": rig, "still_growing": still_growing}

        for idx, t in enumerate(t_grid):
            entry = {"t": t, "expected_current": chain.expected_current(kernel, eta, partition, t, tol)}
            exact_law = None
            if do_exact:
                lhs, rhs = exact.variance_identity(kernel, eta, t, quad_tol, tol)
                var_w = exact.variance_current_exact(kernel, eta, partition, t, tol)
                integral, four_var = exact.lower_bound_check(kernel, eta, partition, t,
                                                             max(quad_tol, 1e-6), tol)
                fl = exact.full_law(kernel, eta, t, cfg["n_max"], tol)
                exact_law = exact.current_law(fl, partition)
                entry["exact"] = {
                    "identity_lhs": lhs,
                    "identity_rhs": rhs,
                    "identity_abs_err": abs(lhs - rhs),
                    "variance": var_w,
                    "lower_bound_integral": integral,
                    "four_var": four_var,
                    "lower_bound_ok": bool(integral <= four_var + 1e-8),
                    "law_mean": exact_law.mean(),
                    "law_variance": exact_law.variance(),
                }
                es = None
                if exact_law.pmf.size > 1 and exact_law.variance() > 0:
                    poly = rayleigh.genpoly_from_sumlaw(exact_law)
                    cert = rayleigh.certify_real_rooted(poly, tol_im)
                    entry["exact"]["real_rooted"] = cert.ok
                    entry["exact"]["max_root_imag"] = cert.max_im
                    if cert.ok:
                        dec = rayleigh.bernoulli_decompose(poly, tol_im)
                        es = rayleigh.esseen_rate(dec)
                        entry["exact"]["decomposition"] = json.loads(
                            rayleigh.decomposition_to_json(dec))
                    rep = analysis.normality_report(exact_law, esseen_rate=es)
                    entry["exact"]["ks"] = rep.ks_distance
                    entry["exact"]["levy"] = rep.levy_distance
                    reports_rows.append(("exact", t, rep.variance, rep.ks_distance,
                                         rep.levy_distance, es))
            if do_mc:
                summ = stirring.run_replicas(
                    kernel, eta, partition, t, cfg["n_replicas"],
                    _subseed(cfg["master_seed"], idx), cfg["event_budget"])
                entry["mc"] = {
                    "n_replicas": summ.n_replicas,
                    "mean": summ.mean,
                    "variance": summ.variance,
                    "seed_root": summ.seed_root,
                }
                for r_i, w_v in enumerate(summ.samples):
                    samples_buf.write(f"{t!r},{r_i},{int(w_v)}\n")
                if summ.variance > 0:
                    rep = analysis.normality_report(summ)
                    entry["mc"]["ks"] = rep.ks_distance
                    entry["mc"]["levy"] = rep.levy_distance
                    reports_rows.append(("mc", t, rep.variance, rep.ks_distance,
                                         rep.levy_distance, None))
                if exact_law is not None:
                    entry["mc"]["tv_vs_exact"] = analysis.tv_distance(
                        exact_law, analysis.empirical_law(summ))
            summary["results"].append(entry)

        rep_buf = io.StringIO()
        rep_buf.write("# schema_version=1\nsource,t,var,ks,levy,esseen_rate\n")
        for src, t, var, ks, levy, es in reports_rows:
            es_txt = "" if es is None else repr(es)
            rep_buf.write(f"{src},{t!r},{var!r},{ks!r},{levy!r},{es_txt}\n")

        outputs.write("summary.json", json.dumps(summary, indent=2, sort_keys=True))
        outputs.write("reports.csv", rep_buf.getvalue())
        if do_mc:
            outputs.write("samples.csv", samples_buf.getvalue())
        outputs.finalize()
    except Exception as err:
        summary["error"] = f"{type(err).__name__}: {err}"
        outputs.write("summary.json", json.dumps(summary, indent=2, sort_keys=True))
        raise
    return summary


# ---------------------------------------------------------------------------
# verification suites

def _check(records, name, ok, detail):
    records.append({"name": name, "ok": bool(ok), "detail": detail})


def _suite_identities(grid, records):
    for inst in grid:
        kernel, eta, partition = inst.build()
        if eta.n_particles == 0:
            continue
        for t in (0.1, 0.5, 1.0, 5.0):
            lhs, rhs = exact.variance_identity(kernel, eta, t)
            tol = max(1e-6, 1e-4 * lhs)
            _check(records, f"identity/{inst.label}/t={t}", abs(lhs - rhs) <= tol,
                   {"lhs": lhs, "rhs": rhs, "abs_err": abs(lhs - rhs), "tol": tol})


def _suite_na(grid, records):
    for inst in grid:
        kernel, eta, partition = inst.build()
        n = kernel.window.size
        sites = kernel.window.sites
        for t in (0.5, 2.0):
            m = None
            for xi in range(n):
                for yi in range(xi + 1, n):
                    c = exact.cov_exact(kernel, eta, t, sites[xi], sites[yi])
                    m = c if m is None else max(m, c)
            _check(records, f"cov/{inst.label}/t={t}", m <= 1e-12, {"max_cov": m})
            if n <= 8:
                fl = exact.full_law(kernel, eta, t)
                lhs, rhs = exact.andjel_check(fl, [sites[1]], [sites[2]])
                _check(records, f"andjel/{inst.label}/t={t}", lhs <= rhs + 1e-10,
                       {"lhs": lhs, "rhs": rhs})
                half = n // 2
                lhs2, rhs2 = rayleigh.negative_association_check(
                    fl, (sites[:half], 1), (sites[half:], 2))
                _check(records, f"na/{inst.label}/t={t}", lhs2 <= rhs2 + 1e-10,
                       {"lhs": lhs2, "rhs": rhs2})


def _suite_rayleigh(grid, records):
    for inst in grid:
        kernel, eta, partition = inst.build()
        if kernel.window.size > 10 or eta.n_particles == 0:
            continue
        for t in (0.1, 1.0, 10.0):
            fl = exact.full_law(kernel, eta, t)
            law = exact.current_law(fl, partition)
            if law.pmf.size < 2:
                continue
            poly = rayleigh.genpoly_from_sumlaw(law)
            cert = rayleigh.certify_real_rooted(poly)
            _check(records, f"certify/{inst.label}/t={t}", cert.ok,
                   {"max_im": cert.max_im, "max_re": cert.max_re})
            if not cert.ok:
                continue
            dec = rayleigh.bernoulli_decompose(poly)
            var_exact = exact.variance_current_exact(kernel, eta, partition, t)
            _check(records, f"decompose/{inst.label}/t={t}",
                   dec.residual <= 1e-8 and abs(dec.variance() - var_exact) <= 1e-6,
                   {"residual": dec.residual, "var_dec": dec.variance(), "var_exact": var_exact})
            # product tail bound at r=2: E r^count <= prod(1 + (r-1) marginal)
            margs = fl.occupation_marginals()
            states = np.arange(fl.law.size)
            counts = np.array([bin(s).count("1") for s in states])
            lhs = float((2.0 ** counts) @ fl.law)
            rhs = float(np.prod(1.0 + margs))
            _check(records, f"tailbound/{inst.label}/t={t}", lhs <= rhs + 1e-10,
                   {"lhs": lhs, "rhs": rhs})


def _suite_clt(records, *, window_size=120, ts=(2.0, 4.0, 8.0, 16.0), n_replicas=3000,
               seed=20_260_810):
    window = presets.centered_window(window_size)
    partition = Partition.split(window, 0)
    kernel = make_nearest_neighbor(window, 1.0)
    eta = step_configuration(window, partition)
    reports = []
    variances = []
    for i, t in enumerate(ts):
        summ = stirring.run_replicas(kernel, eta, partition, t, n_replicas,
                                     _subseed(seed, i))
        rep = analysis.normality_report(summ)
        reports.append((t, rep))
        variances.append(rep.variance)
        mean_exact = chain.expected_current(kernel, eta, partition, t)
        se = (rep.variance / n_replicas) ** 0.5
        _check(records, f"clt/mean/t={t}", abs(rep.mean - mean_exact) <= 4 * se,
               {"mc_mean": rep.mean, "exact_mean": mean_exact, "se": se})
    ks = [r.ks_distance for _, r in reports]
    se_ks = 0.6 / n_replicas ** 0.5
    inversions = sum(1 for a, b in zip(ks, ks[1:]) if b > a)
    soft_ok = all(b <= a + 2 * se_ks for a, b in zip(ks, ks[1:]))
    _check(records, "clt/ks_decreasing", inversions <= 1 and soft_ok, {"ks": ks})
    fitted_c, ok = analysis.rate_regression(reports, variances)
    _check(records, "clt/rate_envelope", ok, {"fitted_C": fitted_c})


def run_verify(suite: str, grid_instances, out_dir: Path | None) -> dict:
    if suite not in SUITES:
        raise ConfigError(f"suite: unknown suite {suite!r}; choose from {SUITES}")
    records: list[dict] = []
    vacuous = False
    grid = presets.default_grid() if grid_instances is None else grid_instances
    if suite in ("identities", "all"):
        _suite_identities(grid, records)
    if suite in ("na", "all"):
        _suite_na(grid, records)
    if suite in ("rayleigh", "all"):
        _suite_rayleigh(grid, records)
    if suite in ("clt", "all"):
        _suite_clt(records)
    if not records:
        vacuous = True
    n_failed = sum(1 for r in records if not r["ok"])
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "suite": suite,
        "n_checks": len(records),
        "n_failed": n_failed,
        "vacuous": vacuous,
        "checks": records,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"verify_{suite}.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def _load_grid_file(path: str):
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict) or "instances" not in doc:
        raise ConfigError("grid: expected an object with an 'instances' list")
    out = []
    for i, inst in enumerate(doc["instances"]):
        kernel_name = _expect(inst, f"instances[{i}].", "kernel", str, required=True)
        window_size = _expect(inst, f"instances[{i}].", "window_size", int, required=True)
        ic = _expect(inst, f"instances[{i}].", "ic", str, "step")
        if kernel_name not in presets.KERNEL_NAMES:
            _fail(f"instances[{i}].kernel", f"must be one of {presets.KERNEL_NAMES}")
        if ic not in presets.IC_NAMES:
            _fail(f"instances[{i}].ic", f"must be one of {presets.IC_NAMES}")
        out.append(presets.GridInstance(kernel_name, window_size, ic))
    return out


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sep-current",
                                     description="exclusion-process current experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a JSON config")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override master_seed")
    p_run.add_argument("--threads", type=int, default=None, help="compute threads")

    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("suite", help=f"one of {', '.join(SUITES)}")
    p_ver.add_argument("--grid", default=None, help="JSON file with grid instances")
    p_ver.add_argument("--out", default=None, help="directory for the failure manifest")
    p_ver.add_argument("--threads", type=int, default=None)

    p_ker = sub.add_parser("kernels", help="kernel preset registry")
    p_ker.add_argument("action", choices=["list"])
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            doc = json.loads(Path(args.config).read_text())
            if args.seed is not None:
                doc["master_seed"] = args.seed
            if args.threads is not None:
                doc["threads"] = args.threads
            cfg = resolve_config(doc)
            summary = run_experiment(cfg, Path(args.out))
            n = len(summary["results"])
            print(f"ok: {n} time points -> {args.out}/summary.json")
            return 0
        if args.command == "verify":
            _set_threads(args.threads)
            grid = _load_grid_file(args.grid) if args.grid else None
            manifest = run_verify(args.suite, grid,
                                  Path(args.out) if args.out else None)
            for rec in manifest["checks"]:
                print(f"[{'PASS' if rec['ok'] else 'FAIL'}] {rec['name']}")
            if manifest["vacuous"]:
                print("warning: empty grid, vacuous pass", file=sys.stderr)
            print(f"{manifest['n_checks'] - manifest['n_failed']}/{manifest['n_checks']} checks passed")
            return 0 if manifest["n_failed"] == 0 else 1
        if args.command == "kernels":
            for name, (_, doc) in sorted(PRESETS.items()):
                print(f"{name}: {doc}")
            return 0
    except ConfigError as err:
        print(f"config error {err}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failure: partial outputs are on disk
        print(f"run failed: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
