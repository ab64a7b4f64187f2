"""Command-line surface.

Subcommands: gen-scene, plan, safety-eval, nbv-ablation, export-ply,
validate-config. Exit codes: 0 success, 2 config error, 3 planning failed
(no route hypothesis found), 4 I/O error. Failures print one
machine-parseable line to stderr: ``E<code>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PLANNING = 3
EXIT_IO = 4


class PlanningFailed(Exception):
    pass


def _overrides_from_args(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out[("pipeline", "master_seed")] = args.seed
    if getattr(args, "nbv", None) is not None:
        out[("pipeline", "max_nbv_iterations")] = args.nbv
    if getattr(args, "selector", None) is not None:
        out[("nbv", "selector")] = args.selector
    if getattr(args, "trials", None) is not None:
        out[("experiment", "trials")] = args.trials
    if getattr(args, "jobs", None) is not None:
        out[("experiment", "jobs")] = args.jobs
    if getattr(args, "scene_name", None) is not None:
        out[("scene", "name")] = args.scene_name
    return out


def _load(args):
    cfg = load_config(getattr(args, "config", None), _overrides_from_args(args))
    cfg.validate()
    return cfg


def _ensure_out(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _echo_config(cfg, out_dir) -> None:
    with open(os.path.join(out_dir, "config.ini"), "w") as f:
        f.write(cfg.effective_ini())


def cmd_validate_config(args) -> int:
    cfg = _load(args)
    sys.stdout.write(cfg.effective_ini())
    return EXIT_OK


def cmd_gen_scene(args) -> int:
    cfg = _load(args)
    bundle = cfg.scene_bundle()
    out = _ensure_out(args)
    from .io_formats import save_scene
    path = os.path.join(out, f"{cfg.get('scene', 'name')}.scene.txt")
    save_scene(bundle.scene.positions, bundle.scene.true_classes,
               bundle.scene.catalog, path)
    _echo_config(cfg, out)
    sx, sy, _ = bundle.start.position
    gx, gy, _ = bundle.goal.center.position
    print(f"wrote {path} ({len(bundle.scene)} points)")
    print(f"reference start ({sx:.2f}, {sy:.2f}) goal ({gx:.2f}, {gy:.2f}) "
          f"radius {bundle.goal.radius:.2f}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _load(args)
    bundle = cfg.scene_bundle(args.scene)
    pipeline_cfg = cfg.pipeline_config()
    out = _ensure_out(args)
    _echo_config(cfg, out)

    if args.cloud:
        from .io_formats import load_cloud
        cloud = load_cloud(args.cloud, bundle.scene.catalog)
    else:
        cloud = bundle.scene.make_cloud()

    from .pipeline import run_pipeline
    result, trace = run_pipeline(bundle.scene, cloud, bundle.start, bundle.goal,
                                 pipeline_cfg, collect_diagnostics=True)

    from .semantic_cloud import partition_cloud
    partition = partition_cloud(cloud, cloud.catalog, pipeline_cfg.safety)

    with open(os.path.join(out, "result.json"), "w") as f:
        json.dump({"outcome": result.outcome.value,
                   "judged_safe": result.judged_safe,
                   "views_used": result.nbv_count,
                   "selected_path": (list(result.selected_path)
                                     if result.selected_path else None),
                   "uncertainty_trace": result.uncertainty_trace,
                   "seed": result.seed}, f, indent=2, sort_keys=True)
        f.write("\n")

    path_nodes = []
    if trace.graph is not None:
        trace.graph.export_edge_list(os.path.join(out, "graph.edgelist"))
        if result.selected_path:
            path_nodes = [trace.graph.nodes[v] for v in result.selected_path]
    from .kinematics import export_path_csv
    export_path_csv(path_nodes, os.path.join(out, "path.csv"))

    from .nbv import export_diagnostics_csv
    for i, (evals, selected) in enumerate(trace.diagnostics):
        export_diagnostics_csv(evals, selected,
                               os.path.join(out, f"nbv_diag_{i}.csv"))

    from .figures import plan_overview_figure
    plan_overview_figure(cloud, partition, path_nodes,
                         os.path.join(out, "overview.png"),
                         start=bundle.start.position,
                         goal_center=bundle.goal.center.position)

    if trace.planning_failed:
        raise PlanningFailed("no route hypothesis found (root-only graph)")
    print(f"outcome: {result.outcome.value} "
          f"(views: {result.nbv_count}, judged_safe: {result.judged_safe})")
    return EXIT_OK


def cmd_safety_eval(args) -> int:
    cfg = _load(args)
    bundle = cfg.scene_bundle(args.scene)
    out = _ensure_out(args)
    _echo_config(cfg, out)
    columns = args.columns.split(",") if args.columns else None
    from .pipeline import run_safety_experiment
    table = run_safety_experiment(bundle, cfg.pipeline_config(),
                                  cfg.get("experiment", "trials"),
                                  columns=columns,
                                  jobs=cfg.get("experiment", "jobs"),
                                  out_dir=out)
    print("columns: " + " ".join(table.columns))
    print("Safe%:   " + " ".join(f"{v:.1f}" for v in table.safe_pct))
    return EXIT_OK


def cmd_nbv_ablation(args) -> int:
    cfg = _load(args)
    bundle = cfg.scene_bundle(args.scene)
    out = _ensure_out(args)
    _echo_config(cfg, out)
    from .pipeline import run_nbv_ablation
    mean_traces, _ = run_nbv_ablation(bundle, cfg.pipeline_config(),
                                      cfg.get("experiment", "trials"),
                                      jobs=cfg.get("experiment", "jobs"),
                                      out_dir=out)
    for name in sorted(mean_traces):
        trace = " ".join(f"{v:.3f}" for v in mean_traces[name])
        print(f"{name}: {trace}")
    return EXIT_OK


def cmd_export_ply(args) -> int:
    cfg = _load(args)
    out = _ensure_out(args)
    pipeline_cfg = cfg.pipeline_config()
    from .io_formats import export_ply, load_cloud
    from .semantic_cloud import partition_cloud
    from .regions import two_stage_cluster

    if args.cloud:
        cloud = load_cloud(args.cloud, cfg.catalog())
    elif args.scene:
        bundle = cfg.scene_bundle(args.scene)
        cloud = _revealed_cloud(bundle.scene)
    else:
        bundle = cfg.scene_bundle()
        cloud = _revealed_cloud(bundle.scene)

    partition = region_set = None
    if args.color_by == "safety":
        partition = partition_cloud(cloud, cloud.catalog, pipeline_cfg.safety)
        stage1, stage2 = pipeline_cfg.resolve_dbscan(cloud)
        region_set = two_stage_cluster(cloud, partition, stage1, stage2)
    path = os.path.join(out, "cloud.ply")
    export_ply(cloud, path, color_by=args.color_by, partition=partition,
               region_set=region_set)
    print(f"wrote {path}")
    return EXIT_OK


def _revealed_cloud(scene):
    """Cloud whose belief matches the annotation; for export previews."""
    import numpy as np
    cloud = scene.make_cloud()
    C = cloud.num_classes
    probs = np.full((len(cloud), C), 1e-4)
    probs[np.arange(len(cloud)), scene.true_classes] = 1.0 - 1e-4 * (C - 1)
    cloud.probs = probs
    cloud.uncerts = np.full((len(cloud), C), 1e-3)
    cloud.measurement_count[:] = 1
    return cloud


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semnav",
        description="Hypothesis path planning over uncertain semantic point "
                    "clouds with next-best-view selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scene=False, cloud=False, trials=False, columns=False):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--nbv", type=int, help="view budget (overrides config)")
        p.add_argument("--selector",
                       choices=["full", "random", "geometry", "uncertainty"])
        if scene:
            p.add_argument("--scene", help="scene file (SHPC-SCENE); generated "
                                           "from config when omitted")
        if cloud:
            p.add_argument("--cloud", help="cloud snapshot file (SHPC1)")
        if trials:
            p.add_argument("--trials", type=int)
            p.add_argument("--jobs", type=int)
        if columns:
            p.add_argument("--columns", help="comma list, e.g. B2,5N")

    p = sub.add_parser("gen-scene", help="write a synthetic scene file")
    p.add_argument("scene_name", nargs="?",
                   help="generator name (default from config)")
    common(p)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("plan", help="single closed-loop planning run")
    common(p, scene=True, cloud=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("safety-eval", help="Monte Carlo path-safety metrics")
    common(p, scene=True, trials=True, columns=True)
    p.set_defaults(func=cmd_safety_eval)

    p = sub.add_parser("nbv-ablation", help="view-selector uncertainty curves")
    common(p, scene=True, trials=True)
    p.set_defaults(func=cmd_nbv_ablation)

    p = sub.add_parser("export-ply", help="colored ASCII PLY export")
    common(p, scene=True, cloud=True)
    p.add_argument("--color-by", choices=["class", "safety"], default="class")
    p.set_defaults(func=cmd_export_ply)

    p = sub.add_parser("validate-config", help="check and echo the config")
    common(p)
    p.set_defaults(func=cmd_validate_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"E{EXIT_CONFIG}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PlanningFailed as e:
        print(f"E{EXIT_PLANNING}: {e}", file=sys.stderr)
        return EXIT_PLANNING
    except (OSError, FileNotFoundError) as e:
        print(f"E{EXIT_IO}: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"E{EXIT_CONFIG}: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
