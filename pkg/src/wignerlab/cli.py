"""Command-line front end: reproducible experiments from JSON configs.

Subcommands: theory, simulate, compare, density, infinitesimal, identities.
Every output file embeds (config digest, seed, version) in comment/meta
fields so tables are regenerable bit-exactly. Exit codes: 0 success,
1 acceptance violation, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import EnsembleParams, sample
from .errors import ConfigError, ParameterError, WignerlabError
from .freeconv import AtomicMeasure, density as density_at
from .infinitesimal import (
    diag_pm1,
    infinitesimal_check,
    monte_carlo_cross_check,
    parse_word,
)
from .montecarlo import (
    ExperimentPlan,
    covariance_check,
    run as run_plan,
    variance_bound_check,
)
from .spectral import eigenvalues, trace_resolvent, verify_resolvent_identity, verify_schur
from .freeconv import integrate_against_rho
from .theory import (
    FluctuationParams,
    bao_xie_b0,
    bao_xie_c0,
    beta,
    beta_tilde,
    bias_bound,
    gamma_kernel,
)
from . import testfn

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _config_digest(cfg: dict) -> str:
    payload = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _meta_lines(cfg: dict, seed) -> list[str]:
    return [
        f"# config_digest={_config_digest(cfg)}",
        f"# seed={seed}",
        f"# version={__version__}",
    ]


def _write_csv(path: Path, cfg: dict, seed, header: list[str], rows: list[list]) -> None:
    with open(path, "w") as fh:
        for line in _meta_lines(cfg, seed):
            fh.write(line + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_json(path: Path, cfg: dict, seed, payload: dict) -> None:
    payload = {
        "meta": {
            "config_digest": _config_digest(cfg),
            "seed": seed,
            "version": __version__,
        },
        **payload,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _parse_z(pair) -> complex:
    return complex(float(pair[0]), float(pair[1]))


def _z_grid(cfg: dict, key: str = "z_grid") -> list[complex]:
    grid = cfg.get(key)
    if not grid:
        raise ConfigError(f"missing or empty {key!r}")
    return [_parse_z(p) for p in grid]


def _fluctuation_params(cfg: dict) -> FluctuationParams:
    block = cfg.get("fluctuation")
    if block is None:
        raise ConfigError("missing 'fluctuation' block")
    if "from_ensemble" in block:
        return FluctuationParams.from_ensemble(
            EnsembleParams.from_config(block["from_ensemble"])
        )
    nu_cfg = block.get("nu")
    if nu_cfg is None or "atoms" not in nu_cfg:
        raise ConfigError("fluctuation block needs nu.atoms")
    nu = AtomicMeasure.from_atoms(nu_cfg["atoms"])
    return FluctuationParams(
        sigma2=float(block.get("sigma2", 1.0)),
        s2=float(block.get("s2", 1.0)),
        tau=float(block.get("tau", 0.0)),
        kappa=float(block.get("kappa", 0.0)),
        nu=nu,
        mode=block.get("mode", "limit"),
        n=block.get("n"),
    )


def _ensemble_params(cfg: dict) -> EnsembleParams:
    block = cfg.get("ensemble")
    if block is None:
        raise ConfigError("missing 'ensemble' block")
    try:
        return EnsembleParams.from_config(block)
    except (KeyError, ParameterError) as exc:
        raise ConfigError(f"bad ensemble block: {exc}") from exc


def _single_atom(nu: AtomicMeasure) -> float | None:
    if nu.locations.size == 1:
        return float(nu.locations[0])
    return None


def cmd_theory(cfg: dict, args) -> int:
    params = _fluctuation_params(cfg)
    zs = _z_grid(cfg)
    out_dir = Path(args.out_dir)
    shift = _single_atom(params.nu)
    rows = []
    for z in zs:
        b = beta(params, z)
        bt = beta_tilde(params, z)
        bound = bias_bound(params, z) if params.mode == "finite_N" else float("nan")
        if shift is not None:
            b0 = bao_xie_b0(params.sigma2, params.s2, params.tau, params.kappa, z - shift)
            residual = abs(b - b0) / max(1.0, abs(b0))
        else:
            residual = float("nan")
        rows.append([z.real, z.imag, b.real, b.imag, bt.real, bt.imag, bound, residual])
    header = ["re_z", "im_z", "re_beta", "im_beta", "re_beta_tilde", "im_beta_tilde",
              "bias_bound", "bao_xie_residual"]

    pairs = cfg.get("pairs")
    if pairs is None:
        pairs = [[ [z1.real, z1.imag], [z2.real, z2.imag] ]
                 for i, z1 in enumerate(zs) for z2 in zs[i:]]
    krows = []
    for p in pairs:
        z1, z2 = _parse_z(p[0]), _parse_z(p[1])
        kv = gamma_kernel(params, z1, z2)
        krow = [z1.real, z1.imag, z2.real, z2.imag, kv.gamma.real, kv.gamma.imag,
                kv.branch_margin]
        if shift is not None:
            c0 = bao_xie_c0(params.sigma2, params.s2, params.tau, params.kappa,
                            z1 - shift, z2 - shift)
            krow.append(abs(kv.gamma - c0) / max(1.0, abs(c0)))
        else:
            krow.append(float("nan"))
        krows.append(krow)
    kheader = ["re_z1", "im_z1", "re_z2", "im_z2", "re_gamma", "im_gamma",
               "branch_margin", "bao_xie_residual"]

    if args.format in ("csv", "both"):
        _write_csv(out_dir / "beta.csv", cfg, args.seed, header, rows)
        _write_csv(out_dir / "gamma.csv", cfg, args.seed, kheader, krows)
    if args.format in ("json", "both"):
        _write_json(out_dir / "theory.json", cfg, args.seed, {
            "beta": [dict(zip(header, r)) for r in rows],
            "gamma": [dict(zip(kheader, r)) for r in krows],
        })
    return EXIT_OK


def _build_test_functions(specs) -> tuple:
    return tuple(testfn.from_spec(s) for s in (specs or []))


def cmd_simulate(cfg: dict, args) -> int:
    params = _ensemble_params(cfg)
    plan_cfg = cfg.get("plan")
    if plan_cfg is None:
        raise ConfigError("missing 'plan' block")
    seed = args.seed if args.seed is not None else plan_cfg.get("master_seed")
    if seed is None:
        raise ConfigError("a master seed is required (config plan.master_seed or --seed)")
    plan = ExperimentPlan(
        params=params,
        n_samples=int(plan_cfg["n_samples"]),
        z_grid=tuple(_parse_z(p) for p in plan_cfg["z_grid"]),
        master_seed=int(seed),
        test_functions=_build_test_functions(plan_cfg.get("test_functions")),
        truncation=plan_cfg.get("truncation"),
    )
    report = run_plan(plan, threads=args.threads)
    out_dir = Path(args.out_dir)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    if args.format in ("csv", "both"):
        fp = FluctuationParams.from_ensemble(params)
        bounds = variance_bound_check(report, params)
        rows = []
        for s, brow in zip(report.per_z, bounds):
            th = beta(fp, s.z)
            kv = gamma_kernel(fp, s.z, s.z.conjugate())
            rows.append([
                s.z.real, s.z.imag, s.mean_tr.real, s.mean_tr.imag,
                s.bias_hat.real, s.bias_hat.imag, th.real, th.imag, s.se_mean,
                s.var_hat, kv.gamma.real,
                min(brow["bound_crude"], brow["bound_refined"]),
            ])
        _write_csv(
            out_dir / "per_z.csv", cfg, seed,
            ["re_z", "im_z", "re_mean_tr", "im_mean_tr", "re_bias_hat", "im_bias_hat",
             "re_beta_theory", "im_beta_theory", "se", "var_hat", "gamma_theory", "bound"],
            rows,
        )
    return EXIT_OK


def cmd_compare(cfg: dict, args) -> int:
    from .montecarlo import EstimatorReport

    block = cfg.get("compare")
    if block is None or "report" not in block:
        raise ConfigError("missing 'compare.report' path")
    report_path = Path(block["report"])
    if not report_path.exists():
        raise ConfigError(f"report file not found: {report_path}")
    report = EstimatorReport.from_json(report_path.read_text())
    params = _fluctuation_params(cfg)
    grid_cfg = cfg.get("z_grid")
    if grid_cfg is not None:
        wanted = [_parse_z(p) for p in grid_cfg]
        if sorted(wanted, key=lambda z: (z.real, z.imag)) != sorted(
            report.z_grid, key=lambda z: (z.real, z.imag)
        ):
            raise ConfigError("configured z grid does not match the report grid")

    thresholds = block.get("thresholds", {})
    bias_band = float(thresholds.get("bias_band", 3.0))
    cov_band = float(thresholds.get("cov_band", 3.0))
    violations = 0
    rows = []
    for s in report.per_z:
        th = beta(params, s.z)
        ratio = abs(s.bias_hat - th) / s.se_mean if s.se_mean > 0 else float("inf")
        ok = ratio <= bias_band
        violations += 0 if ok else 1
        rows.append([s.z.real, s.z.imag, s.bias_hat.real, s.bias_hat.imag,
                     th.real, th.imag, s.se_mean, ratio, int(ok)])
    cov_rows = []
    for row in covariance_check(report, params, band=cov_band):
        cov_rows.append([
            row["z1"].real, row["z1"].imag, row["z2"].real, row["z2"].imag,
            row["cov_nc"].real, row["cov_nc"].imag, row["gamma"].real, row["gamma"].imag,
            row["se"], row["ratio"], int(row["ok"]),
        ])
        violations += 0 if row["ok"] else 1
    out_dir = Path(args.out_dir)
    if args.format in ("csv", "both"):
        _write_csv(out_dir / "compare_bias.csv", cfg, report.master_seed,
                   ["re_z", "im_z", "re_bias_hat", "im_bias_hat", "re_beta", "im_beta",
                    "se", "discrepancy_over_se", "ok"], rows)
        _write_csv(out_dir / "compare_cov.csv", cfg, report.master_seed,
                   ["re_z1", "im_z1", "re_z2", "im_z2", "re_cov", "im_cov",
                    "re_gamma", "im_gamma", "se", "discrepancy_over_se", "ok"], cov_rows)
    if args.format in ("json", "both"):
        _write_json(out_dir / "compare.json", cfg, report.master_seed, {
            "bias": [dict(zip(["re_z", "im_z", "re_bias_hat", "im_bias_hat", "re_beta",
                               "im_beta", "se", "discrepancy_over_se", "ok"], r))
                     for r in rows],
            "covariance": [dict(zip(["re_z1", "im_z1", "re_z2", "im_z2", "re_cov", "im_cov",
                                     "re_gamma", "im_gamma", "se", "discrepancy_over_se",
                                     "ok"], r)) for r in cov_rows],
            "violations": violations,
        })
    return EXIT_OK if violations == 0 else EXIT_VIOLATION


def cmd_density(cfg: dict, args) -> int:
    block = cfg.get("density")
    if block is None:
        raise ConfigError("missing 'density' block")
    nu = AtomicMeasure.from_atoms(block["nu"]["atoms"])
    v = float(block["v"])
    xg = block.get("x_grid")
    if xg is None:
        from .freeconv import support_window

        lo, hi = support_window(nu, v)
        xg = np.linspace(lo, hi, int(block.get("points", 201))).tolist()
    rows = []
    for x in xg:
        est = density_at(nu, v, float(x))
        rows.append([float(x), est.value, est.error, int(est.warning)])
    out_dir = Path(args.out_dir)
    if args.format in ("csv", "both"):
        _write_csv(out_dir / "density.csv", cfg, args.seed,
                   ["x", "density", "error_estimate", "warning"], rows)
    payload = {"density": [dict(zip(["x", "density", "error", "warning"], r)) for r in rows]}
    fns = _build_test_functions(block.get("test_functions"))
    if fns:
        payload["integrals"] = {
            phi.fn_id: integrate_against_rho(nu, v, phi) for phi in fns
        }
    if args.format in ("json", "both"):
        _write_json(out_dir / "density.json", cfg, args.seed, payload)
    return EXIT_OK


def _generator_factory(spec: dict):
    kinds = {name: g for name, g in (spec or {}).items()}

    def factory(n_dim: int):
        out = {}
        for name, g in kinds.items():
            kind = g.get("kind")
            if kind == "diag_pm1":
                out[name] = diag_pm1(n_dim)
            elif kind == "diag_values":
                vals = np.asarray(g["values"], dtype=float)
                reps = int(np.ceil(n_dim / vals.size))
                out[name] = np.diag(np.tile(vals, reps)[:n_dim])
            elif kind == "identity":
                out[name] = np.eye(n_dim)
            else:
                raise ConfigError(f"unknown generator kind {kind!r}")
        return out

    return factory


def cmd_infinitesimal(cfg: dict, args) -> int:
    block = cfg.get("infinitesimal")
    if block is None:
        raise ConfigError("missing 'infinitesimal' block")
    words = block.get("words")
    if not words:
        raise ConfigError("infinitesimal.words must be a nonempty list")
    dims = [int(d) for d in block.get("dims", [8, 16, 32, 64])]
    v = float(block.get("v", 1.0))
    factory = _generator_factory(block.get("generators"))
    mc_cfg = block.get("mc")
    violations = 0
    results = []
    for text in words:
        word = parse_word(text)
        rep = infinitesimal_check(word, dims, v, factory)
        entry = {
            "word": text,
            "exact": rep.exact,
            "slope": rep.slope,
            "ok": rep.ok,
            "moments": [
                {"n": r.n_dim, "xi": [r.xi.real, r.xi.imag],
                 "free": [r.free.real, r.free.imag],
                 "correction": [r.correction.real, r.correction.imag]}
                for r in rep.results
            ],
        }
        if mc_cfg:
            n_dim = int(mc_cfg.get("n_dim", 50))
            cc = monte_carlo_cross_check(
                word, n_dim, int(mc_cfg.get("n_samples", 5000)), v / n_dim,
                factory(n_dim), seed=int(args.seed or 0),
            )
            entry["mc"] = {
                "mean": [cc.mc_mean.real, cc.mc_mean.imag],
                "se": cc.mc_se,
                "exact": [cc.exact.real, cc.exact.imag],
                "ok": cc.ok,
            }
            violations += 0 if cc.ok else 1
        violations += 0 if rep.ok else 1
        results.append(entry)
    out_dir = Path(args.out_dir)
    _write_json(out_dir / "moments.json", cfg, args.seed, {"words": results})
    if args.format in ("csv", "both"):
        rows = []
        for entry in results:
            for mres in entry["moments"]:
                rows.append([entry["word"], mres["n"], mres["xi"][0], mres["xi"][1],
                             mres["free"][0], mres["free"][1],
                             mres["correction"][0], mres["correction"][1]])
        _write_csv(out_dir / "moments.csv", cfg, args.seed,
                   ["word", "n", "re_xi", "im_xi", "re_free", "im_free",
                    "re_correction", "im_correction"], rows)
    return EXIT_OK if violations == 0 else EXIT_VIOLATION


def cmd_identities(cfg: dict, args) -> int:
    block = cfg.get("identities")
    if block is None:
        raise ConfigError("missing 'identities' block")
    params = _ensemble_params(cfg)
    seed = args.seed if args.seed is not None else block.get("seed", 0)
    count = int(block.get("count", 20))
    zs = [_parse_z(p) for p in block.get("z_grid", [[0.0, 1.0]])]
    rng = np.random.default_rng(int(seed))
    rows = []
    violations = 0
    for i in range(count):
        smp = sample(params, int(seed), i)
        spec = eigenvalues(smp)
        z = zs[i % len(zs)]
        k = int(rng.integers(0, params.n))
        rep = verify_schur(smp, k, z)
        norm_ok = bool(np.all(np.abs(1.0 / (z - spec.eigenvalues)) <= 1.0 / abs(z.imag) + 1e-12))
        tr = trace_resolvent(spec, z)
        im_identity = abs(tr.imag + z.imag * np.sum(1.0 / np.abs(z - spec.eigenvalues) ** 2))
        im_ok = im_identity <= 1e-10 * abs(tr.imag)
        other = sample(params, int(seed) + 1, i)
        res_id = verify_resolvent_identity(smp.matrix, other.matrix, z, z + 0.5j)
        res_ok = res_id <= 1e-9 / (abs(z.imag) * abs(z.imag + 0.5))
        ok = rep.ok and norm_ok and im_ok and res_ok
        violations += 0 if ok else 1
        rows.append([i, z.real, z.imag, k, rep.diag_residual, rep.trace_residual,
                     rep.trace_gap, res_id, int(ok)])
    out_dir = Path(args.out_dir)
    if args.format in ("csv", "both"):
        _write_csv(out_dir / "identities.csv", cfg, seed,
                   ["sample", "re_z", "im_z", "k", "schur_diag_residual",
                    "schur_trace_residual", "trace_gap", "resolvent_identity_residual",
                    "ok"], rows)
    return EXIT_OK if violations == 0 else EXIT_VIOLATION


_COMMANDS = {
    "theory": cmd_theory,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "density": cmd_density,
    "infinitesimal": cmd_infinitesimal,
    "identities": cmd_identities,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wignerlab",
        description="Deformed Wigner spectral statistics laboratory",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out-dir", default=".", help="output directory")
    parser.add_argument("--format", choices=["csv", "json", "both"], default="both")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WignerlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
