"""Command-line driver: experiment orchestration and result serialization.

Subcommands (one per experiment kind, plus `run` for the config's full list
and `report` for manifest inspection):

    mslab run            --config cfg.toml [--out DIR] [--seed S]
    mslab riesz-norms    --config cfg.toml ...
    mslab report         --out DIR

Every experiment writes results.json (schema: experiment, grid, scenario,
rows, constants, seed, tool_version, timestamp), optional CSV files and
binary fields, under <out>/<experiment>/. A manifest.json at the root lists
every produced file with its sha256. For a fixed config and seed the CSV
bytes are identical across runs; JSON differs only in the timestamp field.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENT_KINDS, Config, ConfigError, load_config
from .fieldio import write_field
from .grid import Cube, ScalarField, cube_family, lp_norm
from .scenarios import ScenarioContext
from .weights import Weight, aux_field, check_m_properties, doubling_constant, rh_constant, rh_exponent_for_dimension

DEFAULT_ALPHA_FACTORS = (0.5, 1.0, 2.0)


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def write_results(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload.setdefault("tool_version", __version__)
    payload.setdefault("timestamp", time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class ExperimentRunner:
    """Executes configured experiments and tracks produced files."""

    def __init__(self, config: Config):
        self.config = config
        self.ctx = ScenarioContext(config.grid, config.scenario)
        self.produced = []
        self.errors = []

    def _outdir(self, experiment: str) -> Path:
        d = self.config.out_dir / experiment
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _record(self, *paths):
        self.produced.extend(paths)

    def _base_payload(self, experiment: str, params: dict) -> dict:
        grid = self.config.grid
        return {
            "experiment": experiment,
            "grid": {"n": grid.n, "N": grid.N, "L": grid.L},
            "scenario": self.config.scenario_spec,
            "seed": self.config.seed,
            "params": {k: v for k, v in params.items() if k != "kind"},
        }

    # ------------------------------------------------------------------
    # experiment kinds
    # ------------------------------------------------------------------

    def run_build_operator(self, params: dict) -> None:
        out = self._outdir("build-operator")
        ctx = self.ctx
        grid = ctx.grid
        rng = np.random.default_rng(self.config.seed)
        herm = 0.0
        posit = 0.0
        energy_resid = 0.0
        trials = int(params.get("trials", 20))
        for _ in range(trials):
            u = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            hu = ctx.handle.apply_h(u)
            hv = ctx.handle.apply_h(v)
            nu = np.linalg.norm(u) * np.linalg.norm(v) * grid.cell_measure
            herm = max(herm, abs(ctx.handle.inner(hu, v) - ctx.handle.inner(u, hv)) / nu)
            quad = np.real(ctx.handle.inner(hu, u))
            posit = min(posit, quad)
            en = ctx.handle.energy(u)
            energy_resid = max(energy_resid, abs(quad - en) / max(en, 1.0))
        link_dev = float(np.max(np.abs(np.abs(ctx.links.links) - 1.0)))
        absb_path = out / "absB.mslf"
        write_field(absb_path, ctx.absB.values)
        payload = self._base_payload("build-operator", params)
        payload["constants"] = {
            "hermiticity_residual": herm,
            "min_quadratic_form": posit,
            "energy_identity_residual": energy_resid,
            "link_modulus_deviation": link_dev,
        }
        payload["rows"] = []
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, absb_path)

    def run_weights_rh(self, params: dict) -> None:
        out = self._outdir("weights-rh")
        ctx = self.ctx
        grid = ctx.grid
        strategy = params.get("strategy", "dyadic+half-shifted")
        cubes = cube_family(grid, strategy)
        q_values = [np.inf if q in ("inf", "Infinity") else float(q) for q in params.get("q", [2.0, np.inf])]
        rows = []
        weights = {"absB": ctx.absB}
        if ctx.V is not None:
            weights["V"] = ctx.V
        for name, w in weights.items():
            for q in q_values:
                rep = rh_constant(w, q, cubes)
                rows.append(
                    [name, "inf" if q == np.inf else q, rep.constant,
                     _fmt(rep.worst_cube.R), len(cubes)]
                )
            half = rh_constant(w.power(0.5), 2.0, cubes)
            rows.append([f"{name}^0.5", 2.0, half.constant, _fmt(half.worst_cube.R), len(cubes)])
            rows.append([f"{name}-doubling", "", doubling_constant(w, cubes), "", len(cubes)])
        csv_path = out / "rh_constants.csv"
        write_csv(csv_path, ["weight", "q", "constant", "worst_cube_R", "family_size"], rows)
        payload = self._base_payload("weights-rh", params)
        payload["rows"] = [dict(zip(["weight", "q", "constant", "worst_cube_R", "family_size"], r)) for r in rows]
        payload["constants"] = {"rh_exponent_for_dimension": rh_exponent_for_dimension(grid.n)}
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, csv_path)

    def run_weights_m(self, params: dict) -> None:
        out = self._outdir("weights-m")
        ctx = self.ctx
        grid = ctx.grid
        aux = ctx.aux
        path = out / "aux_scale.mslf"
        write_field(path, aux.values)
        rng = np.random.default_rng(self.config.seed)
        count = int(params.get("sample_pairs", 64))
        pts = rng.uniform(grid.h, grid.L - grid.h, size=(count, 2, grid.n))
        samples = [(tuple(p[0]), tuple(p[1])) for p in pts]
        rep = check_m_properties(ctx.absB, samples, aux=aux)
        payload = self._base_payload("weights-m", params)
        payload["constants"] = {
            "m_min": float(np.min(aux.values)),
            "m_max": float(np.max(aux.values)),
            "clamped_small": int(np.count_nonzero(aux.clamped_small)),
            "clamped_large": int(np.count_nonzero(aux.clamped_large)),
            "comparability_constant": rep.comparability_constant,
            "k0": rep.k0,
            "upper_constant": rep.upper_constant,
            "lower_constant": rep.lower_constant,
        }
        payload["rows"] = []
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, path)

    def run_riesz_norms(self, params: dict) -> None:
        from .riesz import ProbeFamily, norm_curve

        out = self._outdir("riesz-norms")
        ctx = self.ctx
        operators = params.get("operators", ["riesz_vector"])
        p_list = [float(p) for p in params.get("p", [2.0, 3.0, 4.0])]
        probes = ProbeFamily(
            seed=int(params.get("probe_seed", self.config.seed)),
            size=int(params.get("probe_size", 16)),
            n=ctx.grid.n,
        )
        rows = []
        for op in operators:
            for est in norm_curve(op, p_list, probes, ctx):
                rows.append([est.operator, est.p, est.N, est.lower_bound, est.probe_id, est.seed])
        csv_path = out / "norm_curve.csv"
        write_csv(csv_path, ["operator", "p", "N", "lower_bound", "probe_id", "seed"], rows)
        payload = self._base_payload("riesz-norms", params)
        payload["rows"] = [
            dict(zip(["operator", "p", "N", "lower_bound", "probe_id", "seed"], r)) for r in rows
        ]
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, csv_path)

    def run_riesz_reverse(self, params: dict) -> None:
        from .riesz import ProbeFamily, reverse_constant

        out = self._outdir("riesz-reverse")
        ctx = self.ctx
        p_list = [float(p) for p in params.get("p", [2.0, 4.0])]
        probes = ProbeFamily(
            seed=int(params.get("probe_seed", self.config.seed)),
            size=int(params.get("probe_size", 16)),
            n=ctx.grid.n,
        )
        rows = []
        for p in p_list:
            c1 = reverse_constant(p, probes, ctx, use_aux_scale=False)
            c2 = reverse_constant(p, probes, ctx, use_aux_scale=True)
            rows.append([p, ctx.grid.N, c1, c2, probes.seed])
        csv_path = out / "reverse_constants.csv"
        write_csv(csv_path, ["p", "N", "constant", "constant_aux_variant", "seed"], rows)
        payload = self._base_payload("riesz-reverse", params)
        payload["rows"] = [
            dict(zip(["p", "N", "constant", "constant_aux_variant", "seed"], r)) for r in rows
        ]
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, csv_path)

    def run_cz(self, params: dict) -> None:
        from .decomp import cz_decompose, maximal_function, verify_cz, _level_set_field
        from .riesz import ProbeFamily

        out = self._outdir("cz-run")
        ctx = self.ctx
        grid = ctx.grid
        p = float(params.get("p", 1.0))
        factors = [float(f) for f in params.get("alpha_factors", DEFAULT_ALPHA_FACTORS)]
        probes = ProbeFamily(
            seed=int(params.get("probe_seed", self.config.seed)),
            size=max(int(params.get("probe_size", 4)), 1),
            n=grid.n,
        )
        f = probes.sample_all(grid)[int(params.get("probe_id", 0))][1]
        level = _level_set_field(f, ctx.handle, ctx.B, p)
        med = float(np.median(maximal_function(level).values))
        rows = []
        produced = []
        for fac in factors:
            alpha = (fac * med) ** (1.0 / p)
            res = cz_decompose(f, p, alpha, ctx.handle, ctx.B, a=ctx.a)
            rep = verify_cz(res, ctx.handle, ctx.B)
            tag = _fmt(fac).replace(".", "_")
            sub = out / f"alpha_{tag}"
            sub.mkdir(exist_ok=True)
            write_field(sub / "f.mslf", f.values)
            write_field(sub / "g.mslf", res.g.values)
            write_field(sub / "b_sum.mslf", res.bad_sum())
            cubes_payload = {
                "alpha": alpha,
                "p": p,
                "report": rep,
                "cubes": [
                    {
                        "center": list(b.cube.center),
                        "R": b.cube.R,
                        "type": b.cube_type,
                        "gauge_fallback": b.gauge_fallback,
                    }
                    for b in res.bad_parts
                ],
            }
            (sub / "cubes.json").write_text(
                json.dumps(cubes_payload, indent=2, sort_keys=True, default=_json_default) + "\n"
            )
            produced += [sub / "f.mslf", sub / "g.mslf", sub / "b_sum.mslf", sub / "cubes.json"]
            rows.append(
                [fac, alpha, len(res.bad_parts), rep["czb_constant"], rep["czc_constant"],
                 rep["czd_constant"], rep["cze_overlap"], rep["identity_residual"]]
            )
        csv_path = out / "cz_constants.csv"
        write_csv(
            csv_path,
            ["alpha_factor", "alpha", "n_cubes", "czb", "czc", "czd", "cze_overlap", "identity_residual"],
            rows,
        )
        payload = self._base_payload("cz-run", params)
        payload["rows"] = [
            dict(zip(["alpha_factor", "alpha", "n_cubes", "czb", "czc", "czd", "cze_overlap", "identity_residual"], r))
            for r in rows
        ]
        payload["constants"] = {"median_maximal": med}
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, csv_path, *produced)

    def run_gauge_check(self, params: dict) -> None:
        from .gauge import gauge_bound, iwatsuka

        out = self._outdir("gauge-check")
        ctx = self.ctx
        grid = ctx.grid
        quad_order = int(params.get("quad_order", 8))
        sizes = [float(s) for s in params.get("sizes", [grid.L / 8, grid.L / 4, grid.L / 2])]
        center = tuple(params.get("center", [0.5] * grid.n))
        rows = []
        produced = []
        for R in sizes:
            Q = Cube(grid, center, R)
            pair = iwatsuka(ctx.a, ctx.B, Q, quad_order=quad_order)
            bound = gauge_bound(pair, ctx.B)
            tag = _fmt(R).replace(".", "_")
            hpath = out / f"h_R{tag}.mslf"
            ppath = out / f"phi_R{tag}.mslf"
            write_field(hpath, np.stack(pair.h_components))
            write_field(ppath, pair.phi)
            header = {
                "cube": {"center": list(Q.center), "R": Q.R},
                "curl_residual": pair.curl_residual,
                "decomp_residual": pair.decomp_residual,
                "ratio": bound.ratio,
                "flag": bound.flag,
                "quad_order": quad_order,
            }
            jpath = out / f"gauge_R{tag}.json"
            jpath.write_text(json.dumps(header, indent=2, sort_keys=True, default=_json_default) + "\n")
            produced += [hpath, ppath, jpath]
            rows.append([R, pair.curl_residual, pair.decomp_residual,
                         bound.ratio if bound.ratio is not None else "", bound.flag])
        csv_path = out / "gauge_bounds.csv"
        write_csv(csv_path, ["R", "curl_residual", "decomp_residual", "ratio", "flag"], rows)
        payload = self._base_payload("gauge-check", params)
        payload["rows"] = [
            dict(zip(["R", "curl_residual", "decomp_residual", "ratio", "flag"], r)) for r in rows
        ]
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, csv_path, *produced)

    def run_fp_check(self, params: dict) -> None:
        from .fefferman import BETA_GRID, fp_batch
        from .riesz import ProbeFamily

        out = self._outdir("fp-check")
        ctx = self.ctx
        grid = ctx.grid
        rng = np.random.default_rng(int(params.get("cube_seed", self.config.seed)))
        n_cubes = int(params.get("n_cubes", 20))
        cubes = []
        while len(cubes) < n_cubes:
            c = tuple(rng.uniform(0.25, 0.75, size=grid.n))
            R = float(rng.uniform(0.15, 0.45))
            Q = Cube(grid, c, R)
            if not Q.is_empty:
                cubes.append(Q)
        probes = ProbeFamily(
            seed=int(params.get("probe_seed", self.config.seed)),
            size=int(params.get("probe_size", 8)),
            n=grid.n,
        )
        fields = [f for _, f in probes.sample_all(grid)]
        w = ctx.absB if ctx.V is None else Weight(ScalarField(grid, ctx.absB.values + ctx.V.values))
        rows = []
        for p in [float(v) for v in params.get("p", [2.0])]:
            rep = fp_batch(fields, cubes, w, ctx.handle, form="classical", p=p)
            rows.append(["classical", p, "", rep.worst_constant, rep.n_evaluations, rep.n_vacuous])
        for beta in [float(b) for b in params.get("beta", BETA_GRID)]:
            rep = fp_batch(fields, cubes, w, ctx.handle, form="improved", beta=beta)
            rows.append(["improved", 2.0, beta, rep.worst_constant, rep.n_evaluations, rep.n_vacuous])
        csv_path = out / "fp_constants.csv"
        write_csv(csv_path, ["form", "p", "beta", "C", "n_evaluations", "n_vacuous"], rows)
        payload = self._base_payload("fp-check", params)
        payload["rows"] = [
            dict(zip(["form", "p", "beta", "C", "n_evaluations", "n_vacuous"], r)) for r in rows
        ]
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, csv_path)

    def run_solutions_check(self, params: dict) -> None:
        from .solutions import (
            check_decay,
            check_rh_solution,
            check_subharmonic,
            solve_interior,
        )

        out = self._outdir("solutions-check")
        ctx = self.ctx
        grid = ctx.grid
        R = float(params.get("R", grid.L / 8))
        Q = Cube(grid, tuple(params.get("center", [0.5] * grid.n)), R)
        rng = np.random.default_rng(self.config.seed)
        phases = rng.uniform(0, 2 * np.pi, size=3)

        def bc(*coords):
            return np.exp(1j * (3 * coords[0] + phases[0])) * (1 + coords[1]) + np.cos(
                2 * coords[0] + phases[1]
            )

        sol = solve_interior(Q, bc, ctx.handle, boundary_id=f"seeded-{self.config.seed}")
        rows = [["interior_residual", ctx.grid.N, sol.residual]]
        decay = check_decay(sol, ctx.aux)
        for k, c in decay.fitted.items():
            rows.append([f"decay_k{k}", grid.N, c])
        for kind, q in (("aux_u", 4.0), ("Lu", 4.0)):
            rows.append([f"rh_{kind}", grid.N, check_rh_solution(sol, ctx.handle, ctx.aux, q, kind)])
        if ctx.V is not None:
            rows.append(
                ["rh_sqrtV_u", grid.N, check_rh_solution(sol, ctx.handle, ctx.aux, 2.0, "sqrtV_u", V=ctx.V)]
            )
            rows.append(
                ["rh_Lu_with_V", grid.N, check_rh_solution(sol, ctx.handle, ctx.aux, 1.5, "Lu_with_V", V=ctx.V)]
            )
        sub = check_subharmonic(sol, ctx.handle)
        rows.append(["subharmonic_residual", grid.N, sub.identity_residual])
        rows.append(["subharmonic_symmetric_residual", grid.N, sub.symmetric_residual])
        rows.append(["min_laplacian", grid.N, sub.min_laplacian])
        csv_path = out / "solution_checks.csv"
        write_csv(csv_path, ["check", "N", "value"], rows)
        payload = self._base_payload("solutions-check", params)
        payload["rows"] = [dict(zip(["check", "N", "value"], r)) for r in rows]
        rp = out / "results.json"
        write_results(rp, payload)
        self._record(rp, csv_path)

    # ------------------------------------------------------------------

    KIND_RUNNERS = {
        "build-operator": run_build_operator,
        "weights-rh": run_weights_rh,
        "weights-m": run_weights_m,
        "riesz-norms": run_riesz_norms,
        "riesz-reverse": run_riesz_reverse,
        "cz-run": run_cz,
        "gauge-check": run_gauge_check,
        "fp-check": run_fp_check,
        "solutions-check": run_solutions_check,
    }

    def run_kind(self, kind: str, params: dict) -> None:
        self.KIND_RUNNERS[kind](self, params)

    def write_manifest(self) -> Path:
        root = self.config.out_dir
        root.mkdir(parents=True, exist_ok=True)
        files = {}
        for path in sorted(set(self.produced)):
            rel = path.relative_to(root)
            files[str(rel)] = sha256_file(path)
        manifest = {
            "tool_version": __version__,
            "seed": self.config.seed,
            "files": files,
            "errors": self.errors,
        }
        mp = root / "manifest.json"
        mp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return mp


def run(config: Config) -> int:
    """Execute the config's experiments in declared order; 0 on success."""
    runner = ExperimentRunner(config)
    code = 0
    for entry in config.experiments:
        kind = entry["kind"]
        try:
            runner.run_kind(kind, entry)
        except Exception as exc:
            runner.errors.append({"experiment": kind, "error": f"{type(exc).__name__}: {exc}"})
            code = 1
    runner.write_manifest()
    return code


def run_single(config: Config, kind: str) -> int:
    entries = [e for e in config.experiments if e["kind"] == kind]
    if not entries:
        entries = [{"kind": kind}]
    sub = Config(
        grid=config.grid,
        scenario=config.scenario,
        scenario_spec=config.scenario_spec,
        seed=config.seed,
        output=config.output,
        experiments=entries,
    )
    return run(sub)


def report(out_dir: Path) -> int:
    mp = Path(out_dir) / "manifest.json"
    if not mp.exists():
        print(f"no manifest at {mp}", file=sys.stderr)
        return 1
    manifest = json.loads(mp.read_text())
    bad = []
    for rel, digest in manifest.get("files", {}).items():
        path = Path(out_dir) / rel
        if not path.exists():
            bad.append((rel, "missing"))
        elif sha256_file(path) != digest:
            bad.append((rel, "hash mismatch"))
    print(f"tool version: {manifest.get('tool_version')}")
    print(f"seed: {manifest.get('seed')}")
    print(f"files: {len(manifest.get('files', {}))}")
    for err in manifest.get("errors", []):
        print(f"recorded error in {err['experiment']}: {err['error']}")
    for rel, what in bad:
        print(f"integrity failure: {rel}: {what}", file=sys.stderr)
    if bad or manifest.get("errors"):
        return 1
    print("all hashes verify")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mslab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS + ("run",):
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--grid-n", type=int, default=None, dest="grid_n")
        p.add_argument("--grid-N", type=int, default=None, dest="grid_N")
    rp = sub.add_parser("report")
    rp.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return report(Path(args.out))
    overrides = {
        "out": args.out,
        "seed": args.seed,
        "grid_n": args.grid_n,
        "grid_N": args.grid_N,
    }
    try:
        config = load_config(args.config, overrides)
    except (ValueError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            return run(config)
        return run_single(config, args.command)
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
