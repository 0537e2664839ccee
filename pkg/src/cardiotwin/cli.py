"""Command-line entry point: ``python -m cardiotwin <command> [options]``.

Exit status is 0 on success, 1 on invalid input and 2 on numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .eikonal import ActivationMap, RootNodes, default_roots
from .errors import FormatError, NumericalError, ValidationError
from .forward import ForwardModel
from .geometry import build_phantom, load_mesh, save_mesh
from .pseudo_ecg import ElectrodeSet, default_electrodes, load_record, save_record

log = logging.getLogger("cardiotwin")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


# ---------------------------------------------------------------------------
# plain-text artifacts


def _header(cfg: RunConfig, **extra) -> dict:
    return {"config_hash": cfg.hash(), **extra}


def write_activation(path, atm: ActivationMap, header: dict) -> Path:
    lines = [f"# {k}={v}" for k, v in header.items()] + ["node_index,t_ms"]
    lines += [f"{i},{format(float(t), '.17g')}" for i, t in enumerate(atm.times)]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def write_labels(path, labeling, header: dict) -> Path:
    lines = [f"# {k}={v}" for k, v in header.items()] + ["node_index,label"]
    lines += [f"{i},{int(v)}" for i, v in enumerate(labeling)]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"labeling file {path} does not exist")
    rows = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows or rows[0].strip() != "node_index,label":
        raise FormatError(f"{path}: expected header 'node_index,label'")
    try:
        return np.array([int(r.split(",")[1]) for r in rows[1:]], dtype=np.int8)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed labeling row") from exc


def read_header(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if not line.startswith("#"):
            break
        for tok in line[1:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
    return meta


# ---------------------------------------------------------------------------


def _mesh(cfg: RunConfig):
    if cfg.mesh:
        return load_mesh(cfg.mesh)
    return build_phantom(cfg.phantom, cfg.seed)


def _model(cfg: RunConfig, mesh=None) -> ForwardModel:
    mesh = mesh if mesh is not None else _mesh(cfg)
    if cfg.roots:
        targets = cfg.roots.get("targets")
        roots = default_roots(mesh, targets=[tuple(t) for t in targets], delays=cfg.roots.get("delays")) \
            if targets else default_roots(mesh, delays=cfg.roots.get("delays"))
    else:
        roots = default_roots(mesh)
    electrodes = ElectrodeSet(cfg.electrodes) if cfg.electrodes else default_electrodes(mesh)
    return ForwardModel(mesh, roots, electrodes, cfg.ecg)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(cfg, name):
    from .scenario import scenario_by_name

    return scenario_by_name(name, cfg.catalogue(), cfg.cv)


def cmd_phantom(cfg: RunConfig, args) -> int:
    mesh = build_phantom(cfg.phantom, cfg.seed)
    path = save_mesh(_out(args) / "mesh.txt", mesh, _header(cfg, seed=cfg.seed))
    print(f"wrote {path} ({mesh.n_nodes} nodes, {mesh.n_tets} tets)")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    name = args.scenario or "baseline"
    s = _scenario(cfg, name)
    model = _model(cfg)
    sim = model.run_scenario(s)
    out = _out(args)
    hdr = _header(cfg, scenario=name)
    save_record(out / f"ecg_{name}.csv", sim.record, {"config_hash": cfg.hash()})
    write_activation(out / f"atm_{name}.csv", sim.activation, hdr)
    write_labels(out / f"labels_{name}.csv", sim.labeling, hdr)
    print(f"wrote {out}/ecg_{name}.csv, atm_{name}.csv, labels_{name}.csv")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    from .qrs_analysis import detect_abnormalities, heatmap_svg, sensitivity_sweep

    model = _model(cfg)
    cat = cfg.catalogue()
    gamma = float(cfg.inverse.get("gamma", 1.0))
    table, recs = sensitivity_sweep(model, cat, gamma=gamma, jobs=args.jobs or cfg.jobs)
    out = _out(args)
    hdr = _header(cfg)
    (out / "dtw_table.csv").write_text(table.to_csv(hdr))
    (out / "dtw_heatmap.svg").write_text(heatmap_svg(table).replace(
        "<svg ", f"<svg data-config-hash=\"{cfg.hash()}\" ", 1))
    lines = [f"# {k}={v}" for k, v in hdr.items()]
    lines.append("scenario,qrs_ms,prolongation,prwp,pathological_q,fqrs")
    for s, rec in zip(cat, recs[1:]):
        fl = detect_abnormalities(rec, recs[0], cfg.thresholds)
        q = " ".join(k for k, v in fl.pathological_q.items() if v)
        f = " ".join(k for k, v in fl.fqrs.items() if v)
        lines.append(f"{s.name},{fl.duration:.4f},{int(fl.prolongation)},{int(fl.prwp)},{q},{f}")
    (out / "abnormalities.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out}/dtw_table.csv, dtw_heatmap.svg, abnormalities.csv")
    return EXIT_OK


def _truth(cfg, mesh, spec):
    """A labeling file path or a scenario name."""
    from .scenario import label_tissue

    if spec is None:
        return None
    if Path(spec).is_file():
        lab = read_labels(spec)
        if len(lab) != mesh.n_nodes:
            raise ValidationError("truth labeling does not match the mesh")
        return lab
    return label_tissue(mesh, _scenario(cfg, spec).infarct)


def cmd_invert(cfg: RunConfig, args) -> int:
    from .inverse import InverseConfig, invert
    from .scenario import SLOW_SCENARIO

    model = _model(cfg)
    if args.observed:
        observed = load_record(args.observed)
    elif args.scenario:
        observed = model.run_scenario(_scenario(cfg, args.scenario)).record
    else:
        raise ValidationError("invert needs an observed ECG file or --scenario")
    cands = tuple(s for s in cfg.catalogue() if s.name != SLOW_SCENARIO)
    inv = dict(cfg.inverse)
    if "steps" in inv:
        inv["steps"] = tuple(inv["steps"])
    icfg = InverseConfig(candidates=cands, seed=cfg.seed, jobs=args.jobs or cfg.jobs, **inv)
    truth = _truth(cfg, model.mesh, args.truth)
    res = invert(observed, model, icfg, truth=truth, aha=cfg.aha)
    out = _out(args)
    hdr = _header(cfg, seed=cfg.seed)
    (out / "inverse_report.txt").write_text(res.report(hdr))
    write_labels(out / "predicted_labels.csv", res.labeling, hdr)
    print(f"wrote {out}/inverse_report.txt, predicted_labels.csv")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    from .metrics import evaluation_csv, evaluation_row

    if not args.pred or args.truth is None:
        raise ValidationError("evaluate needs prediction labeling files and --truth")
    model_mesh = _mesh(cfg)
    truth = _truth(cfg, model_mesh, args.truth)
    subject = Path(cfg.mesh).stem if cfg.mesh else f"phantom-seed{cfg.seed}"
    rows = []
    for p in args.pred:
        pred = read_labels(p)
        if len(pred) != model_mesh.n_nodes:
            raise ValidationError(f"{p} does not match the mesh")
        scen = read_header(p).get("scenario", args.scenario or Path(p).stem)
        rows.append(evaluation_row(subject, scen, pred, truth, model_mesh, cfg.aha))
    out = _out(args)
    (out / "evaluation.csv").write_text(evaluation_csv(rows, _header(cfg)))
    print(f"wrote {out}/evaluation.csv")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    """Bundle the CSV artifacts of an output directory into one summary."""
    from .pseudo_ecg import load_record
    from .qrs_analysis import DtwTable, heatmap_svg, traces_svg

    src = Path(args.out)
    if not src.is_dir():
        raise ValidationError(f"output directory {src} does not exist")
    files = sorted(p for p in src.iterdir() if p.suffix in (".csv", ".txt") and p.name != "report_index.csv")
    hashes = {p.name: read_header(p).get("config_hash") for p in files}
    hashes = {k: v for k, v in hashes.items() if v}
    if not hashes:
        raise ValidationError(f"no artifacts with a config hash in {src}")
    if len(set(hashes.values())) > 1:
        groups = sorted(set(hashes.values()))
        raise ValidationError(f"refusing to mix artifacts from different configs: {groups}")
    h = next(iter(hashes.values()))
    ecgs = [p for p in files if p.name.startswith("ecg_")]
    if ecgs:
        recs = [load_record(p) for p in ecgs]
        (src / "report_traces.svg").write_text(traces_svg(recs, "QRS: " + ", ".join(r.name for r in recs)))
    if (src / "dtw_table.csv").is_file():
        table = DtwTable.from_csv((src / "dtw_table.csv").read_text())
        (src / "report_heatmap.svg").write_text(heatmap_svg(table))
    lines = [f"# config_hash={h}", "artifact"] + sorted(hashes)
    (src / "report_index.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote report for {len(hashes)} artifacts (config {h})")
    return EXIT_OK


COMMANDS = {
    "phantom": cmd_phantom, "simulate": cmd_simulate, "sweep": cmd_sweep,
    "invert": cmd_invert, "evaluate": cmd_evaluate, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cardiotwin", description="Infarct QRS simulation, sweeps and inversion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--jobs", type=int, help="worker threads for sweeps and stage 1")
        sp.add_argument("--scenario", help="catalogue scenario name or 'baseline'")
        sp.add_argument("--truth", help="labeling file or scenario name used as ground truth")
        if name == "invert":
            sp.add_argument("observed", nargs="?", help="observed ECG CSV")
        if name == "evaluate":
            sp.add_argument("pred", nargs="*", help="predicted labeling files")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs is not None and args.jobs < 1:
            raise ValidationError("--jobs must be >= 1")
        return COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
