"""Command line driver: ``boltzspec run`` and ``boltzspec compare``."""

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import collision, config as cfgmod, ekformula, landscape, potential, quasimode, semigroup, spectrum
from .discretization import assemble
from .errors import BoltzSpecError, ConfigError, ShapeMismatch

log = logging.getLogger("boltzspec")

STAGE_FILES = {
    "landscape": "landscape.json",
    "predict": "predict.json",
    "spectrum": "spectrum.csv",
    "quasimode": "quasimode.json",
    "semigroup": "semigroup.csv",
}


def threads():
    """Worker count for the h sweep, from ``BOLTZSPEC_THREADS`` (default 1)."""
    raw = os.environ.get("BOLTZSPEC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("BOLTZSPEC_THREADS", f"expected an integer, got {raw!r}") from None
    return max(n, 1)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def _hkey(h):
    return repr(float(h))


class Pipeline:
    """Stage runner holding the shared state of one configured run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.P = potential.from_spec(cfg.potential)
        self.model = collision.from_spec(cfg.collision, dim=self.P.dim)
        self.checks = []
        self.results = {}
        self.tables = {}
        self._ops = {}
        self._spec = {}
        self.labeling = None
        self.predictions = None
        stages = cfg.closure()
        if self.P.dim != 1 and any(s in stages for s in ("spectrum", "quasimode", "semigroup")):
            raise ConfigError("stages", "spectrum, quasimode and semigroup need a one-dimensional potential")

    # -------------------------------------------------------------- helpers

    def check(self, name, stage, ok, value=None, bound=None, h=None):
        self.checks.append({"name": name, "stage": stage, "h": h, "status": "PASS" if ok else "FAIL",
                            "value": value, "bound": bound})

    def _map_h(self, fn):
        hs = self.cfg.h_list
        n = min(threads(), len(hs))
        if n == 1:
            return [fn(h) for h in hs]
        with ThreadPoolExecutor(n) as ex:
            return list(ex.map(fn, hs))

    def operator(self, h):
        if h not in self._ops:
            d = self.cfg.discretization
            self._ops[h] = assemble(self.P, self.model, h, d["nx"], d["n_hermite"], d["scheme"],
                                    check_tail=d["scheme"] != "upwind")
        return self._ops[h]

    # -------------------------------------------------------------- stages

    def landscape(self):
        crit, L = landscape.analyze(self.P)
        self.labeling = L
        lift = None
        if self.P.dim == 1:
            lift = landscape.lift_check_W(self.P, L)
            self.check("lift_values", "landscape", True, lift["max_value_diff"], 2 * lift["quantum"])
        self.check("unique_global_minimum", "landscape", True, L.n0)
        self.results["landscape"] = {"labeling": L.to_dict(), "lift": lift,
                                     "critical_points": [c.to_dict() for c in crit]}

    def predict(self):
        preds = ekformula.predict(self.labeling, self.model)
        self.predictions = preds
        for p in preds:
            self.check("prefactor_positive", "predict", p.prefactor_leading > 0, p.prefactor_leading)
            for loc, _ in p.saddle_terms:
                _, pre = ekformula.saddle_term(_saddle_at(self.labeling, loc), self.model)
                self.check("det_identity", "predict", pre.det_identity_residual <= 1e-8,
                           pre.det_identity_residual, 1e-8)
        self.results["predict"] = ekformula.export(preds, self.cfg.h_list)

    def spectrum(self):
        sc = self.cfg.spectrum
        n0 = self.labeling.n0
        count = sc["count"] or n0 + 4

        def one(h):
            opr = self.operator(h)
            sr = spectrum.small_eigenvalues(opr, count)
            rep = spectrum.structural_report(sr, opr, n0, sc["c"])
            rows = spectrum.match_predictions(sr, self.predictions, h, self.cfg.tolerances["ek_band"])
            probes = []
            if sc["probes"]:
                probes = spectrum.resolvent_probe(opr, h, sc["c"], sc["ctilde"], sc["probe_samples"],
                                                  seed=self.cfg.seed)
            return sr, rep, rows, probes

        out = self._map_h(one)
        res = {}
        table = []
        ratios = []
        scaled = []
        for h, (sr, rep, rows, probes) in zip(self.cfg.h_list, out):
            self._spec[h] = sr
            lam = sr.small_eigs[1:rep["count_in_strip"]]
            self.check("count_ok", "spectrum", bool(rep["count_ok"]), rep["count_in_strip"], n0, h)
            self.check("kernel_ok", "spectrum", bool(rep["kernel_ok"]), rep["kernel_abs"],
                       1e-11 * sr.info["norm"], h)
            self.check("positive_ok", "spectrum", bool(rep["positive_ok"]),
                       float(lam.real.min()) if lam.size else None, 0.0, h)
            ratios.append([r.ratio for r in rows])
            for i, z in enumerate(sr.small_eigs):
                table.append({"kind": "eigen", "h": h, "index": i, "re": z.real, "im": z.imag,
                              "residual": sr.residuals[i], "condition": sr.condition[i]})
            for i, (z, b, hb) in enumerate(probes):
                table.append({"kind": "resolvent", "h": h, "index": i, "re": z.real, "im": z.imag,
                              "bound": b, "h2_bound": hb})
            top = max((p[2] for p in probes), default=None)
            scaled.append(top)
            res[_hkey(h)] = {
                "eigenvalues": [[z.real, z.imag] for z in sr.small_eigs],
                "matches": [{"location": np.asarray(r.minimum.location).tolist(),
                             "lambda": r.lambda_numeric.real, "lambda_ek": r.lambda_ek,
                             "ratio": r.ratio} for r in rows],
                "structure": {k: rep[k] for k in ("count_in_strip", "kernel_abs", "kernel_gap",
                                                   "max_small", "next_beyond")},
                "resolvent_h2_max": top,
            }
        ratios = np.array(ratios)
        band = self.cfg.tolerances["ek_band"]
        for j in range(ratios.shape[1]):
            err = np.abs(ratios[:, j] - 1.0)
            if len(err) > 1:
                self.check(f"ek_trend_{j}", "spectrum", bool(np.all(np.diff(err) < 0)), err.tolist())
            self.check(f"ek_band_{j}", "spectrum", bool(err[-1] <= band), float(err[-1]), band,
                       self.cfg.h_list[-1])
        if sc["probes"] and len(scaled) > 1:
            f = max(scaled) / min(scaled)
            lim = self.cfg.tolerances["resolvent_factor"]
            self.check("resolvent_scaling", "spectrum", f <= lim, f, lim)
        self.results["spectrum"] = res
        self.tables["spectrum"] = table

    def _quasimodes(self, h):
        qc = self.cfg.quasimode
        params = quasimode.QuasimodeParams(gamma=qc["gamma"])
        return [quasimode.build_quasimode(self.labeling, m, h, self.model, params)
                for m in self.labeling.non_global()]

    def quasimode(self):
        qc = self.cfg.quasimode
        tol = self.cfg.tolerances
        by_loc = {tuple(np.round(p.minimum.location, 10)): p for p in self.predictions}

        def one(h):
            opr = self.operator(h)
            rows = []
            for q in self._quasimodes(h):
                pg = quasimode.sample(q, qc["nx"], qc["nv"], qc["n_levels"])
                rr = quasimode.rayleigh_report(q, opr, nx=qc["nx"], nv=qc["nv"], n_levels=qc["n_levels"])
                pf2, pstar2, pff = quasimode.quasimode_residual(q, opr)
                p = by_loc[tuple(np.round(q.minimum.point.location, 10))]
                lam = float(p.lambda_leading(h))
                rows.append({"location": q.minimum.point.location.tolist(), "rayleigh": rr.value,
                             "rayleigh_discrete": rr.discrete, "lambda_ek": lam,
                             "ratio": rr.value / lam, "transport_rel": rr.transport_relative,
                             "transport_rel_discrete": rr.transport_relative_discrete,
                             "norm_ratio": quasimode.norm_ratio(q, pg),
                             "A_h": q.A_h, "residual_P": pf2 / pff, "residual_Pstar": pstar2 / pff})
            return rows

        out = self._map_h(one)
        res = {}
        for h, rows in zip(self.cfg.h_list, out):
            res[_hkey(h)] = rows
            for r in rows:
                worst = max(r["transport_rel"], r["transport_rel_discrete"])
                self.check("transport_skew", "quasimode", worst <= tol["transport_rel"], worst,
                           tol["transport_rel"], h)
        for j in range(len(out[0])):
            err = np.abs(np.array([rows[j]["ratio"] for rows in out]) - 1.0)
            if len(err) > 1:
                self.check(f"rayleigh_trend_{j}", "quasimode", bool(np.all(np.diff(err) < 0)), err.tolist())
            self.check(f"rayleigh_band_{j}", "quasimode", bool(err[-1] <= tol["rayleigh_band"]),
                       float(err[-1]), tol["rayleigh_band"], self.cfg.h_list[-1])
        self.results["quasimode"] = res

    def semigroup(self):
        sgc = self.cfg.semigroup
        tol = self.cfg.tolerances
        n0 = self.labeling.n0

        def one(h):
            opr = self.operator(h)
            sr = self._spec[h]
            u0 = np.zeros(opr.size)
            for q in self._quasimodes(h):
                v = quasimode.to_discrete(q, opr)
                u0 += v / opr.norm(v)
            slow = float(sr.small_eigs[1].real)
            policy = semigroup.default_policy(h, slow, sgc["dt_fraction"])
            run = semigroup.evolve(opr, u0, sgc["horizon"] * h / slow, sr, tuple(range(1, n0 + 1)), policy)
            fit = semigroup.decay_rate(run)
            plateaus, onsets = [], []
            if n0 >= 3:
                plateaus, onsets = semigroup.plateau_report(run, self.predictions, sgc["plateau_threshold"])
            return run, fit, slow, plateaus, onsets

        out = self._map_h(one)
        res = {}
        table = []
        for h, (run, fit, slow, plateaus, onsets) in zip(self.cfg.h_list, out):
            ratio = fit.rate_times_h / slow
            self.check("decay_rate", "semigroup", abs(ratio - 1) <= tol["rate_band"], ratio,
                       tol["rate_band"], h)
            self.check("kernel_conserved", "semigroup", run.kernel_drift <= tol["kernel_drift"],
                       run.kernel_drift, tol["kernel_drift"], h)
            if n0 >= 3:
                meta = [p for p in plateaus if p.k > 1]
                self.check("plateau_count", "semigroup", len(meta) >= 2, len(meta), 2, h)
                for o in onsets:
                    self.check(f"onset_ratio_{o['k']}", "semigroup", o["factor"] <= tol["onset_factor"],
                               o["factor"], tol["onset_factor"], h)
            for row in run.rows():
                table.append({"h": h, **row})
            res[_hkey(h)] = {
                "rate_times_h": fit.rate_times_h, "lambda_slow": slow, "ratio": ratio,
                "fit_window": list(fit.window), "fit_decades": fit.decades, "steps": run.steps,
                "kernel_drift": run.kernel_drift,
                "plateaus": [{"k": p.k, "observed": list(p.observed), "predicted": list(p.predicted),
                              "decades": p.decades} for p in plateaus],
                "onset_ratios": onsets,
            }
        self.results["semigroup"] = res
        self.tables["semigroup"] = table


def _saddle_at(labeling, loc):
    for m in labeling.minima:
        for s in m.saddles:
            if np.allclose(s.location, loc):
                return s
    raise KeyError(loc)


def _write_csv(path, rows):
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(cfg, out=None, summary_only=False):
    """Execute the configured stages and write artifacts.

    :param cfg: RunConfig.
    :param out: output directory (default ``cfg.output``).
    :param summary_only: write only ``summary.json``.
    :returns: the summary mapping; ``summary["passed"]`` is False iff a check failed.
    """
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    pipe = Pipeline(cfg)
    files = []
    for stage in cfg.closure():
        log.info("stage %s", stage)
        try:
            getattr(pipe, stage)()
        except ConfigError:
            raise
        except BoltzSpecError as exc:
            raise BoltzSpecError(f"stage {stage}: {type(exc).__name__}: {exc}") from exc
        if stage not in cfg.stages or summary_only:
            continue
        path = out / STAGE_FILES[stage]
        if stage in pipe.tables:
            _write_csv(path, pipe.tables[stage])
        else:
            _write_json(path, {"config": cfg.to_dict(), stage: pipe.results[stage]})
        files.append(path.name)
    checks = [c for c in pipe.checks if c["stage"] in cfg.stages]
    summary = {
        "config": cfg.to_dict(),
        "stages": list(cfg.stages),
        "files": files,
        "checks": checks,
        "passed": all(c["status"] == "PASS" for c in checks),
        "results": {k: v for k, v in pipe.results.items() if k in cfg.stages},
    }
    summary = _clean(summary)
    _write_json(out / "summary.json", summary)
    return summary


# ------------------------------------------------------------------ compare

def _load_summary(p):
    p = Path(p)
    if p.is_dir():
        p = p / "summary.json"
    with open(p) as fh:
        return json.load(fh)


def _leaves(obj, path=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _leaves(obj[k], f"{path}.{k}" if path else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _leaves(v, f"{path}[{i}]")
    else:
        yield path, obj


def _shape(obj):
    if isinstance(obj, dict):
        return {k: _shape(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_shape(v) for v in obj]
    return "num" if isinstance(obj, (int, float)) and not isinstance(obj, bool) else type(obj).__name__


def compare(a, b, threshold=1e-6):
    """Field-wise relative differences between two run summaries.

    :param a: summary mapping, ``summary.json`` path or output directory.
    :param b: same for the second run.
    :param threshold: relative difference above which a field is flagged.
    :raises ShapeMismatch: the result trees differ in structure.
    """
    A = a if isinstance(a, dict) else _load_summary(a)
    B = b if isinstance(b, dict) else _load_summary(b)
    ra = {"results": A.get("results"), "checks": A.get("checks")}
    rb = {"results": B.get("results"), "checks": B.get("checks")}
    if _shape(ra) != _shape(rb):
        raise ShapeMismatch("result trees differ in structure (stages, h_list or cluster size)")
    config_changes = []
    ca, cb = dict(_leaves(A.get("config", {}))), dict(_leaves(B.get("config", {})))
    for k in sorted(set(ca) | set(cb)):
        if ca.get(k) != cb.get(k):
            config_changes.append({"path": k, "a": ca.get(k), "b": cb.get(k)})
    changed = {c["path"].split(".")[0] for c in config_changes}
    diffs = []
    for (path, x), (_, y) in zip(_leaves(ra), _leaves(rb)):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            if x != y:
                diffs.append({"path": path, "a": x, "b": y, "rel": None, "flagged": True,
                              "annotation": _annotate(path, changed)})
            continue
        if x == y:
            continue
        rel = abs(x - y) / max(abs(x), abs(y), 1e-300)
        diffs.append({"path": path, "a": x, "b": y, "rel": rel, "flagged": rel > threshold,
                      "annotation": _annotate(path, changed)})
    return {"config_changes": config_changes, "diffs": diffs,
            "flagged": sum(d["flagged"] for d in diffs), "threshold": threshold}


def _annotate(path, changed):
    if "discretization" in changed and (".spectrum." in f".{path}." or ".semigroup." in f".{path}."):
        return "discretization refined: difference measures convergence"
    if "collision" in changed and (".predict" in f".{path}" or "lambda_ek" in path):
        return "collision model changed"
    return ""


# ------------------------------------------------------------------ entry

def _parser():
    p = argparse.ArgumentParser(prog="boltzspec", description="Small spectrum of kinetic operators.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configured pipeline")
    r.add_argument("--config", required=True, help="YAML or JSON config")
    r.add_argument("--stages", help="comma separated subset of " + ",".join(cfgmod.STAGES))
    r.add_argument("--out", help="output directory")
    r.add_argument("--h-list", help="comma separated h values (overrides the config)")
    r.add_argument("--summary-only", action="store_true", help="write summary.json only")
    c = sub.add_parser("compare", help="diff two run outputs")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--threshold", type=float, default=1e-6)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            import yaml
            path = Path(args.config)
            raw = json.loads(path.read_text()) if path.suffix == ".json" else yaml.safe_load(path.read_text())
            if not isinstance(raw, dict):
                raise ConfigError("<root>", "config must be a mapping")
            if args.stages:
                raw["stages"] = [s.strip() for s in args.stages.split(",") if s.strip()]
            if args.h_list:
                try:
                    raw["h_list"] = [float(x) for x in args.h_list.split(",")]
                except ValueError:
                    raise ConfigError("h_list", "override must be comma separated numbers") from None
            cfg = cfgmod.validate(raw)
            summary = run(cfg, args.out, args.summary_only)
            for ch in summary["checks"]:
                h = "" if ch["h"] is None else f" h={ch['h']}"
                print(f"{ch['status']} {ch['stage']}:{ch['name']}{h} value={ch['value']}")
            print("passed" if summary["passed"] else "FAILED")
            return 0 if summary["passed"] else 1
        report = compare(args.a, args.b, args.threshold)
        json.dump(report, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 1 if report["flagged"] else 0
    except (ConfigError, ShapeMismatch) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except BoltzSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
